//! Command implementations. Each returns a JSON `results` payload plus
//! collected warnings and property violations; `main` wraps them into the
//! report envelope and chooses the exit code.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde_json::{json, Value};

use conley_front::blocks::{
    classify_boundary, forcing_bound, morse_iso_hypothesis, nonlocal_sup_bound,
    relative_homology, stabilising_scan, Block, BlockGeometry,
};
use conley_front::critical::{find_critical_points, refine_critical, CriticalPoint};
use conley_front::decay::{characteristic_roots, rate_agreement};
use conley_front::energy;
use conley_front::floer::ChainComplex;
use conley_front::front::{
    count_connections, solve_front, tanh_seed, translation_kernel_check, ConnectionCount, Front,
};
use conley_front::grid::{Grid, Profile};
use conley_front::symbol::hyperbolicity_scan;
use conley_front::system::{builtin, System};
use conley_front::{Error, Result};

use crate::config::{GeometryConfig, RunConfig};

/// Verbosity taken from `CONLEY_FRONT_LOG`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

impl LogLevel {
    pub fn from_env() -> Result<LogLevel> {
        match std::env::var("CONLEY_FRONT_LOG") {
            Err(_) => Ok(LogLevel::Info),
            Ok(value) => match value.as_str() {
                "quiet" => Ok(LogLevel::Quiet),
                "info" => Ok(LogLevel::Info),
                "debug" => Ok(LogLevel::Debug),
                other => Err(Error::config(
                    "CONLEY_FRONT_LOG",
                    format!("expected quiet, info or debug, got `{other}`"),
                )),
            },
        }
    }
}

/// Output directory and logging sink shared by all commands.
pub struct Context<'a> {
    pub out_dir: &'a Path,
    pub level: LogLevel,
}

impl Context<'_> {
    pub fn info(&self, msg: &str) {
        if self.level >= LogLevel::Info {
            eprintln!("[info] {msg}");
        }
    }

    pub fn debug(&self, msg: &str) {
        if self.level >= LogLevel::Debug {
            eprintln!("[debug] {msg}");
        }
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<String> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| Error::config("out", format!("cannot write {}: {e}", path.display())))?;
        Ok(name.to_string())
    }

    /// Profile as CSV with columns `x,u_1,...,u_d`.
    pub fn write_profile_csv(&self, name: &str, profile: &Profile) -> Result<String> {
        let grid = profile.grid();
        let d = profile.dim();
        let mut text = String::from("x");
        for j in 1..=d {
            write!(text, ",u_{j}").unwrap();
        }
        text.push('\n');
        for i in 0..grid.len() {
            write!(text, "{}", grid.x(i)).unwrap();
            let node = profile.node(i);
            for j in 0..d {
                write!(text, ",{}", node[j]).unwrap();
            }
            text.push('\n');
        }
        self.write_text(name, &text)
    }

    pub fn write_pairs_csv(
        &self,
        name: &str,
        header: (&str, &str),
        rows: &[(f64, f64)],
    ) -> Result<String> {
        let mut text = format!("{},{}\n", header.0, header.1);
        for (a, b) in rows {
            writeln!(text, "{a},{b}").unwrap();
        }
        self.write_text(name, &text)
    }
}

/// Results payload plus diagnostics to merge into the report envelope.
pub struct CommandOutput {
    pub results: Value,
    pub warnings: Vec<String>,
    /// Nonempty when a structural guarantee failed numerically; the process
    /// exits with code 3 after writing the report.
    pub property_violations: Vec<String>,
}

impl CommandOutput {
    fn new(results: Value) -> Self {
        CommandOutput {
            results,
            warnings: Vec::new(),
            property_violations: Vec::new(),
        }
    }
}

fn front_summary(front: &Front) -> Value {
    json!({
        "z_minus": front.z_minus.point,
        "z_plus": front.z_plus.point,
        "beta": front.beta,
        "residual": front.residual,
        "e_kin": front.e_kin,
        "index_gap": front.index_gap,
        "least_singular_estimate": front.least_singular_estimate,
        "boundary_mismatch": front.boundary_mismatch(),
        "decay_fit_minus": front.decay_fit_minus,
        "decay_fit_plus": front.decay_fit_plus,
    })
}

fn count_summary(count: &ConnectionCount) -> Value {
    json!({
        "z_minus": count.z_minus.point,
        "z_plus": count.z_plus.point,
        "raw_count": count.raw_count,
        "count_mod2": count.count_mod2,
        "representatives": count.representatives.iter().map(front_summary).collect::<Vec<_>>(),
    })
}

fn block_summary(block: &Block) -> Result<Value> {
    serde_json::to_value(block).map_err(|e| Error::Numeric(format!("report serialisation: {e}")))
}

/// Polishes the configured endpoint states to critical points and solves one
/// front between them.
fn solve_configured_front(cfg: &RunConfig, sys: &System, ctx: &Context) -> Result<Front> {
    let grid = cfg.require_grid()?;
    let fc = cfg.require_front()?;
    let z_minus = refine_critical(sys, &DVector::from_column_slice(&fc.z_minus), 0.5)?;
    let z_plus = refine_critical(sys, &DVector::from_column_slice(&fc.z_plus), 0.5)?;
    ctx.debug(&format!(
        "endpoints polished to indices {} -> {}",
        z_minus.index, z_plus.index
    ));
    let seed = tanh_seed(grid, &z_minus.state(), &z_plus.state(), fc.shift);
    solve_front(sys, &z_minus, &z_plus, &seed, &cfg.solver.solve_options())
}

pub fn critical_points(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let search = cfg.require_search()?;
    let points = find_critical_points(&sys, &search.bounds, search.per_axis)?;
    ctx.info(&format!("located {} constant solutions", points.len()));
    let degenerate = points.iter().filter(|p| !p.hyperbolic).count();
    let mut output = CommandOutput::new(json!({
        "critical_points": points,
        "count": points.len(),
    }));
    if degenerate > 0 {
        output
            .warnings
            .push(format!("{degenerate} constant solutions are degenerate"));
    }
    Ok(output)
}

pub fn solve_front_cmd(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let front = solve_configured_front(cfg, &sys, ctx)?;
    let translation = translation_kernel_check(&sys, &front)?;
    ctx.info(&format!(
        "front converged: residual {:.3e}, kinetic energy {:.6}",
        front.residual, front.e_kin
    ));
    let csv = ctx.write_profile_csv("profile.csv", &front.profile)?;
    let mut results = front_summary(&front);
    results["translation_defect_ratio"] = json!(translation);
    results["profile_csv"] = json!(csv);
    Ok(CommandOutput::new(results))
}

pub fn count(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let grid = cfg.require_grid()?;
    let fc = cfg.require_front()?;
    let z_minus = refine_critical(&sys, &DVector::from_column_slice(&fc.z_minus), 0.5)?;
    let z_plus = refine_critical(&sys, &DVector::from_column_slice(&fc.z_plus), 0.5)?;
    let opts = cfg.solver.multistart(grid);
    let count = count_connections(&sys, &z_minus, &z_plus, &opts)?;
    ctx.info(&format!(
        "{} distinct connections, parity {}",
        count.raw_count, count.count_mod2
    ));
    let mut csvs = Vec::new();
    for (i, front) in count.representatives.iter().enumerate() {
        csvs.push(ctx.write_profile_csv(&format!("representative_{i:02}.csv"), &front.profile)?);
    }
    let mut results = count_summary(&count);
    results["profile_csvs"] = json!(csvs);
    let mut output = CommandOutput::new(results);
    output.warnings = count.warnings.clone();
    Ok(output)
}

/// All index-gap-1 connection counts between the hyperbolic points found in
/// the search box, assembled into the chain complex.
fn assemble_complex(
    sys: &System,
    cfg: &RunConfig,
    ctx: &Context,
) -> Result<(Vec<CriticalPoint>, Vec<ConnectionCount>, ChainComplex)> {
    let search = cfg.require_search()?;
    let grid = cfg.require_grid()?;
    let points = find_critical_points(sys, &search.bounds, search.per_axis)?;
    ctx.info(&format!("located {} constant solutions", points.len()));
    let opts = cfg.solver.multistart(grid);
    let mut counts = Vec::new();
    for from in points.iter().filter(|p| p.hyperbolic) {
        for to in points.iter().filter(|p| p.hyperbolic) {
            if from.index != to.index + 1 {
                continue;
            }
            ctx.debug(&format!(
                "counting connections {:?} -> {:?}",
                from.point, to.point
            ));
            counts.push(count_connections(sys, from, to, &opts)?);
        }
    }
    let complex = ChainComplex::build(&points, &counts)?;
    Ok((points, counts, complex))
}

fn complex_json(complex: &ChainComplex) -> Value {
    let mut boundaries = serde_json::Map::new();
    for &n in complex.cells().keys() {
        if let Some(matrix) = complex.boundary(n) {
            let rows: Vec<Vec<u8>> = (0..matrix.nrows())
                .map(|i| (0..matrix.ncols()).map(|j| matrix.get(i, j) as u8).collect())
                .collect();
            boundaries.insert(n.to_string(), json!(rows));
        }
    }
    json!({
        "generators": complex.cells(),
        "boundaries": boundaries,
        "euler_characteristic": complex.euler_characteristic(),
    })
}

pub fn complex(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let (points, counts, complex) = assemble_complex(&sys, cfg, ctx)?;
    complex.verify_boundary_squared()?;
    let ranks = complex.homology_ranks()?;
    ctx.info(&format!("homology ranks {ranks:?}"));
    let mut results = complex_json(&complex);
    results["critical_points"] = json!(points);
    results["connection_counts"] = json!(counts.iter().map(count_summary).collect::<Vec<_>>());
    results["homology"] = json!(ranks);
    let mut output = CommandOutput::new(results);
    output.warnings = complex.warnings().to_vec();
    Ok(output)
}

pub fn lyapunov_check(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let grid = cfg.require_grid()?;
    let front = solve_configured_front(cfg, &sys, ctx)?;
    let half = cfg.lyapunov.half_range.unwrap_or(grid.half_width() / 2.0);
    let m = cfg.lyapunov.samples;
    let taus: Vec<f64> = (0..m)
        .map(|k| -half + 2.0 * half * k as f64 / (m - 1) as f64)
        .collect();
    let report = energy::energy_report(&sys, &front.profile, &taus)?;
    let mut max_increase = 0.0f64;
    for pair in report.lyapunov_samples.windows(2) {
        max_increase = max_increase.max(pair[1].1 - pair[0].1);
    }
    let monotone = max_increase <= cfg.lyapunov.slack;
    ctx.info(&format!(
        "shift energy sampled at {m} points, max increase {max_increase:.3e}"
    ));
    let csv = ctx.write_pairs_csv("lyapunov.csv", ("tau", "lyapunov"), &report.lyapunov_samples)?;
    let results = json!({
        "front": front_summary(&front),
        "e_kin": report.e_kin,
        "delta_h": report.delta_h,
        "identity_residual": report.identity_residual,
        "monotone": monotone,
        "max_increase": max_increase,
        "slack": cfg.lyapunov.slack,
        "lyapunov_csv": csv,
    });
    let mut output = CommandOutput::new(results);
    if !monotone {
        output.property_violations.push(format!(
            "shift energy increased by {max_increase:.3e} (slack {:.1e})",
            cfg.lyapunov.slack
        ));
    }
    Ok(output)
}

pub fn block_verify(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let bc = cfg.require_block()?;
    let mut block = classify_boundary(&sys, bc.geometry.base(), bc.samples_per_facet)?;
    let bound = nonlocal_sup_bound(&sys, &block.geometry)?;
    block.nonlocal_sup = Some(bound);
    let (pass, ratio) = morse_iso_hypothesis(&block, bound)?;
    ctx.info(&format!(
        "transversality constant {:.6}, nonlocal bound {:.6}, ratio {:.6}",
        block.c_perp, bound, ratio
    ));
    let mut results = json!({
        "block": block_summary(&block)?,
        "ratio": ratio,
        "pass": pass,
    });
    let family = bc.family_members();
    if !family.is_empty() {
        let scan = stabilising_scan(&sys, &family, bc.samples_per_facet)?;
        ctx.info(&format!(
            "family scan: threshold radius {:?}, decreasing {}",
            scan.threshold_radius, scan.decreasing
        ));
        results["scan"] = serde_json::to_value(&scan)
            .map_err(|e| Error::Numeric(format!("report serialisation: {e}")))?;
    }
    Ok(CommandOutput::new(results))
}

pub fn rel_homology(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let bc = cfg.require_block()?;
    let block = classify_boundary(&sys, bc.geometry.base(), bc.samples_per_facet)?;
    let ranks = relative_homology(&block)?;
    ctx.info(&format!("relative homology ranks {ranks:?}"));
    Ok(CommandOutput::new(json!({
        "block": block_summary(&block)?,
        "ranks": ranks,
    })))
}

pub fn forcing(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let fc = cfg.require_forcing()?;
    let bound = forcing_bound(fc.num_constants, &fc.ranks);
    ctx.info(&format!("forcing bound {bound}"));
    Ok(CommandOutput::new(json!({
        "num_constants": fc.num_constants,
        "ranks": fc.ranks,
        "bound": bound,
        "interpretation": format!(
            "at least {} genuine heteroclinics or {bound} generalised ones",
            bound.div_ceil(2)
        ),
    })))
}

pub fn symbol_scan(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let search = cfg.require_search()?;
    let points = find_critical_points(&sys, &search.bounds, search.per_axis)?;
    let mut scans = Vec::new();
    let mut output_warnings = Vec::new();
    for p in &points {
        if !p.hyperbolic {
            output_warnings.push(format!(
                "skipped degenerate point {:?} (margin {:.3e})",
                p.point, p.margin
            ));
            continue;
        }
        let scan = hyperbolicity_scan(&sys, &p.state(), cfg.symbol.xi_max, cfg.symbol.samples)?;
        ctx.debug(&format!(
            "point {:?}: min |det L| = {:.3e} at xi = {:.3}",
            p.point, scan.min_abs_det, scan.xi_at_min
        ));
        scans.push(json!({
            "point": p.point,
            "index": p.index,
            "min_abs_det": scan.min_abs_det,
            "xi_at_min": scan.xi_at_min,
            "jacobian_rel_error": scan.jacobian_rel_error,
        }));
    }
    // Even kernels have a real transform; the residual imaginary part of the
    // quadrature transform measures the distance from even symmetry.
    let mut kernel_imag_max = 0.0f64;
    for xi in [0.7, 13.3, 41.9] {
        let transform = sys.kernel().fourier_symbol_quadrature(xi, 2000);
        for entry in transform.iter() {
            kernel_imag_max = kernel_imag_max.max(entry.im.abs());
        }
    }
    ctx.info(&format!(
        "scanned {} hyperbolic points, kernel asymmetry {kernel_imag_max:.3e}",
        scans.len()
    ));
    let mut output = CommandOutput::new(json!({
        "scans": scans,
        "kernel_imag_max": kernel_imag_max,
        "xi_max": cfg.symbol.xi_max,
        "samples": cfg.symbol.samples,
    }));
    output.warnings = output_warnings;
    Ok(output)
}

pub fn decay(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let sys = cfg.system.build()?;
    let front = solve_configured_front(cfg, &sys, ctx)?;
    let minus = characteristic_roots(&sys, &front.z_minus.state())?;
    let plus = characteristic_roots(&sys, &front.z_plus.state())?;
    let fitted = (front.decay_fit_minus, front.decay_fit_plus);
    let agreement = rate_agreement(fitted, &minus, &plus);
    ctx.info(&format!(
        "fitted tail rates {:?} / {:?}, agreement {:?}",
        fitted.0, fitted.1, agreement
    ));
    Ok(CommandOutput::new(json!({
        "front": front_summary(&front),
        "characteristic_minus": minus,
        "characteristic_plus": plus,
        "fitted_minus": fitted.0,
        "fitted_plus": fitted.1,
        "agreement_minus": agreement.0,
        "agreement_plus": agreement.1,
    })))
}

/// The two end-to-end case studies: the scalar double well (complex, block,
/// cross-check, forcing) and the planar harmonic family plus saturating
/// balls (classification laws, rank laws, stabilising scan).
pub fn case_studies(cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    let grid = match &cfg.grid {
        Some(g) => g.build()?,
        None => Grid::new(25.0, 1251).expect("valid default grid"),
    };
    let mut warnings = Vec::new();
    let mut violations = Vec::new();

    // Scalar double well: chain complex vs interval block.
    ctx.info("case study 1: scalar double well");
    let sys = builtin::double_well(0.1, 0.0, 1.0);
    let points = find_critical_points(&sys, &[(-1.5, 1.5)], 7)?;
    let opts = cfg.solver.multistart(grid);
    let mut counts = Vec::new();
    for from in points.iter().filter(|p| p.hyperbolic) {
        for to in points.iter().filter(|p| p.hyperbolic) {
            if from.index == to.index + 1 {
                counts.push(count_connections(&sys, from, to, &opts)?);
            }
        }
    }
    let complex = ChainComplex::build(&points, &counts)?;
    warnings.extend(complex.warnings().iter().cloned());
    let hf_ranks = complex.homology_ranks()?;
    let geometry = BlockGeometry::Interval { a: -2.0, b: 2.0 };
    let mut block = classify_boundary(&sys, geometry.clone(), 200)?;
    let bound = nonlocal_sup_bound(&sys, &geometry)?;
    block.nonlocal_sup = Some(bound);
    let (pass, ratio) = morse_iso_hypothesis(&block, bound)?;
    let block_ranks = relative_homology(&block)?;
    let hf_nonzero: BTreeMap<usize, usize> = hf_ranks
        .iter()
        .filter(|&(_, &r)| r > 0)
        .map(|(&d, &r)| (d, r))
        .collect();
    let cross_check = hf_nonzero == block_ranks;
    if !cross_check {
        violations.push(format!(
            "chain-complex ranks {hf_nonzero:?} differ from block ranks {block_ranks:?}"
        ));
    }
    let num_hyperbolic = points.iter().filter(|p| p.hyperbolic).count();
    let double_well_results = json!({
        "critical_points": points,
        "connection_counts": counts.iter().map(count_summary).collect::<Vec<_>>(),
        "homology": hf_ranks,
        "block": block_summary(&block)?,
        "hypothesis_ratio": ratio,
        "hypothesis_pass": pass,
        "block_ranks": block_ranks,
        "cross_check": cross_check,
        "forcing_bound": forcing_bound(num_hyperbolic, &block_ranks),
    });

    // Saturating model: full-egress balls and the stabilising family.
    ctx.info("case study 2: saturating balls");
    let mut balls = Vec::new();
    for dim in 1..=3usize {
        let sat = builtin::saturating(2.0, dim);
        let ball = BlockGeometry::Ball { dim, radius: 5.0 };
        let block = classify_boundary(&sat, ball, 200)?;
        let ranks = relative_homology(&block)?;
        if ranks != BTreeMap::from([(dim, 1)]) {
            violations.push(format!(
                "ball in dimension {dim} has ranks {ranks:?}, expected rank 1 at degree {dim}"
            ));
        }
        balls.push(json!({
            "dim": dim,
            "c_perp": block.c_perp,
            "labels": block.labels,
            "ranks": ranks,
        }));
    }
    let sat = builtin::saturating(2.0, 2);
    let family: Vec<(f64, BlockGeometry)> = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&r| (r, BlockGeometry::Ball { dim: 2, radius: r }))
        .collect();
    let scan = stabilising_scan(&sat, &family, 100)?;

    // Planar harmonic family: alternating boundaries and the rank law.
    ctx.info("case study 3: planar harmonic blocks");
    let mut harmonic = Vec::new();
    for k in 1..=4usize {
        let sys = builtin::polar(k as u32, 4, 0.05, 1.0);
        let geometry = GeometryConfig::Harmonic {
            harmonic: k,
            radius: 1.0,
        }
        .base();
        let block = classify_boundary(&sys, geometry, 200)?;
        let ranks = relative_homology(&block)?;
        let rank_at_one = ranks.get(&1).copied().unwrap_or(0);
        if rank_at_one != k - 1 {
            violations.push(format!(
                "harmonic {k} block has rank {rank_at_one} at degree 1, expected {}",
                k - 1
            ));
        }
        harmonic.push(json!({
            "harmonic": k,
            "labels": block.labels,
            "c_perp": block.c_perp,
            "ranks": ranks,
            "forcing_bound": forcing_bound(k, &ranks),
        }));
    }

    let results = json!({
        "double_well": double_well_results,
        "saturating_balls": balls,
        "ball_scan": serde_json::to_value(&scan)
            .map_err(|e| Error::Numeric(format!("report serialisation: {e}")))?,
        "harmonic_family": harmonic,
    });
    let mut output = CommandOutput::new(results);
    output.warnings = warnings;
    output.property_violations = violations;
    Ok(output)
}

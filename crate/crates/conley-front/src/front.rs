use nalgebra::{DMatrix, DVector};

use crate::critical::{self, CriticalPoint};
use crate::decay;
use crate::energy;
use crate::grid::{Grid, Profile};
use crate::kernel::ConvOperator;
use crate::linsolve::{solve_refined, BandedMatrix};
use crate::system::System;
use crate::{Error, Result};

/// Endpoint separation below which a connecting profile is the constant one.
pub const CONSTANT_SEPARATION: f64 = 1e-8;

/// Smallest-singular-value estimate below which a solution is flagged as
/// having a near-singular linearisation.
pub const TRANSVERSALITY_WARNING: f64 = 1e-6;

/// Kinetic energy below which a converged profile counts as constant.
pub const CONSTANT_ENERGY: f64 = 1e-8;

/// Options of the collocation Newton solver.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Sup-norm residual of the collocation system at which Newton stops.
    pub tolerance: f64,
    /// Maximum Newton iterations.
    pub max_iterations: usize,
    /// Relative kernel mass allowed outside the banded Jacobian window; the
    /// leftover coupling is recovered by iterative refinement against the
    /// exact Jacobian action.
    pub band_cutoff: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-10,
            max_iterations: 60,
            band_cutoff: 1e-3,
        }
    }
}

/// A converged heteroclinic profile joining two constant solutions.
///
/// Solutions are pinned by one scalar phase equation; `residual` is
/// re-measured on the plain collocation equations, phase row excluded. The
/// rule of thumb for the grid is `L >= 20 / eta` with `eta` the slowest tail
/// rate, so that the committed truncation error stays near rounding.
#[derive(Debug, Clone)]
pub struct Front {
    pub profile: Profile,
    pub z_minus: CriticalPoint,
    pub z_plus: CriticalPoint,
    /// Sup-norm residual of `u' + Phi(u)` over interior nodes.
    pub residual: f64,
    /// Kinetic energy `integral of 1/2 u' . G(u) u'`.
    pub e_kin: f64,
    /// Coupling strength the profile was solved at.
    pub beta: f64,
    /// Morse index drop from `z_minus` to `z_plus`.
    pub index_gap: i64,
    /// Power-iteration estimate of the smallest singular value of the final
    /// banded Jacobian; a value below [`TRANSVERSALITY_WARNING`] flags a
    /// near-singular linearisation. The estimate ignores coupling outside
    /// the band, so it is a diagnostic, not a certified bound.
    pub least_singular_estimate: f64,
    /// Fitted tail decay rate toward `z_minus` (positive), when the tail
    /// carries enough signal.
    pub decay_fit_minus: Option<f64>,
    /// Same toward `z_plus`.
    pub decay_fit_plus: Option<f64>,
}

impl Front {
    /// Largest mismatch between the boundary nodes and the endpoint states.
    pub fn boundary_mismatch(&self) -> f64 {
        let n = self.profile.grid().len();
        let a = (self.profile.node(0) - self.z_minus.state()).amax();
        let b = (self.profile.node(n - 1) - self.z_plus.state()).amax();
        a.max(b)
    }
}

/// Deterministic multi-start configuration for connection counting.
#[derive(Debug, Clone)]
pub struct MultistartOptions {
    pub grid: Grid,
    /// Inclusive range of integer seed shifts.
    pub shift_range: (i64, i64),
    /// Amplitude of the unstable-direction perturbations added for `d >= 2`.
    pub perturbation: f64,
    /// Number of solver threads; results are merged in seed order, so any
    /// worker count produces identical output.
    pub workers: usize,
    pub solve: SolveOptions,
}

impl MultistartOptions {
    pub fn new(grid: Grid) -> Self {
        MultistartOptions {
            grid,
            shift_range: (-5, 5),
            perturbation: 0.2,
            workers: 1,
            solve: SolveOptions::default(),
        }
    }
}

/// Distinct connecting profiles between two constant solutions, counted
/// mod 2. The multi-start search is heuristic: it enumerates a fixed seed
/// family and deduplicates up to translation, so `raw_count` is a lower
/// bound on the true number of connections.
#[derive(Debug, Clone)]
pub struct ConnectionCount {
    pub z_minus: CriticalPoint,
    pub z_plus: CriticalPoint,
    pub representatives: Vec<Front>,
    pub raw_count: usize,
    pub count_mod2: u8,
    /// Near-singular-linearisation warnings for individual representatives.
    pub warnings: Vec<String>,
}

/// The standard seed: endpoints blended by `(1 + tanh((x - shift)/2)) / 2`,
/// boundary nodes pinned to the endpoint states.
pub fn tanh_seed(
    grid: Grid,
    z_minus: &DVector<f64>,
    z_plus: &DVector<f64>,
    shift: f64,
) -> Profile {
    let gap = z_plus - z_minus;
    let mut u = Profile::sample(grid, z_minus.len(), |x| {
        let t = 0.5 * (1.0 + (0.5 * (x - shift)).tanh());
        z_minus + &gap * t
    });
    pin_boundary(&mut u, z_minus, z_plus);
    u
}

fn pin_boundary(u: &mut Profile, z_minus: &DVector<f64>, z_plus: &DVector<f64>) {
    let n = u.grid().len();
    let values = u.values_mut();
    values.row_mut(0).copy_from(&z_minus.transpose());
    values.row_mut(n - 1).copy_from(&z_plus.transpose());
    u.set_tails(z_minus.clone(), z_plus.clone());
}

/// Node-level pieces of the Jacobian at one iterate: per-node local blocks
/// (finite differences of the frozen-convolution node map), coupling-map
/// Jacobians, and the metric pullbacks that scale the convolution columns.
struct Parts {
    /// `d x d` derivative of `v -> G(v)^-1 grad F(v) + beta A(v) q_i`.
    blocks: Vec<DMatrix<f64>>,
    /// `DS(u_i)`, kernel dimension by `d`.
    ds: Vec<DMatrix<f64>>,
    /// `A(u_i) = G(u_i)^-1 DS(u_i)^T`, present when the coupling is active.
    pull: Option<Vec<DMatrix<f64>>>,
    /// `A(u_i)` times the amplitude-scaled continuous weight matrix.
    pull_weight: Option<Vec<DMatrix<f64>>>,
}

struct Discretisation<'a> {
    sys: &'a System,
    op: ConvOperator,
    grid: Grid,
    dim: usize,
    kdim: usize,
    n: usize,
    z_minus: DVector<f64>,
    z_plus: DVector<f64>,
    /// Phase row: (node, component, target value).
    phase: Option<(usize, usize, f64)>,
    /// Node radius of the banded Jacobian window.
    band_cells: usize,
}

impl<'a> Discretisation<'a> {
    fn new(
        sys: &'a System,
        grid: Grid,
        z_minus: DVector<f64>,
        z_plus: DVector<f64>,
        phase: Option<(usize, usize, f64)>,
        band_cutoff: f64,
    ) -> Result<Self> {
        let op = sys.kernel().operator(grid.dx())?;
        let n = grid.len();
        let band_cells = band_width(&op, sys.coupling(), n, band_cutoff);
        Ok(Discretisation {
            sys,
            op,
            grid,
            dim: sys.dim(),
            kdim: sys.kernel().dim(),
            n,
            z_minus,
            z_plus,
            phase,
            band_cells,
        })
    }

    fn coupled(&self) -> bool {
        self.sys.coupling() != 0.0
    }

    /// Residual of the collocation system: Dirichlet rows at the ends,
    /// central difference plus vector field inside, phase row if configured.
    fn residual(&self, u: &Profile) -> Result<Vec<f64>> {
        let (n, d) = (self.n, self.dim);
        let phi = self.sys.phi_with(&self.op, u)?;
        let values = u.values();
        let inv2 = 1.0 / (2.0 * self.grid.dx());
        let mut r = vec![0.0; n * d];
        for c in 0..d {
            r[c] = values[(0, c)] - self.z_minus[c];
            r[(n - 1) * d + c] = values[(n - 1, c)] - self.z_plus[c];
        }
        for i in 1..n - 1 {
            for c in 0..d {
                r[i * d + c] = (values[(i + 1, c)] - values[(i - 1, c)]) * inv2 + phi[(i, c)];
            }
        }
        if let Some((node, comp, target)) = self.phase {
            r[node * d + comp] = values[(node, comp)] - target;
        }
        Ok(r)
    }

    fn parts(&self, u: &Profile) -> Result<Parts> {
        let (n, d) = (self.n, self.dim);
        let conv = if self.coupled() {
            let s = self.sys.coupling_profile(u)?;
            Some(self.op.apply(&s)?)
        } else {
            None
        };
        let beta = self.sys.coupling();

        let mut blocks = Vec::with_capacity(n);
        let mut ds = Vec::with_capacity(n);
        let mut pull = self.coupled().then(|| Vec::with_capacity(n));
        let mut pull_weight = self
            .coupled()
            .then_some(())
            .and(self.op.continuous_weight().map(|_| Vec::with_capacity(n)));

        for i in 0..n {
            let ui = u.node(i);
            ds.push(self.sys.coupling_map().jacobian(&ui));
            let qi = conv.as_ref().map(|q| q.row(i).transpose());

            let mut block = DMatrix::zeros(d, d);
            for c in 0..d {
                let h = 1e-6 * (1.0 + ui[c].abs());
                let mut up = ui.clone();
                up[c] += h;
                let mut dn = ui.clone();
                dn[c] -= h;
                let fp = self.node_field(&up, qi.as_ref(), beta)?;
                let fm = self.node_field(&dn, qi.as_ref(), beta)?;
                block.set_column(c, &((fp - fm) / (2.0 * h)));
            }
            blocks.push(block);

            if let Some(pull) = pull.as_mut() {
                let a = self.sys.coupling_pullback(&ui)?;
                if let (Some(pw), Some(w)) = (pull_weight.as_mut(), self.op.continuous_weight()) {
                    pw.push(&a * w);
                }
                pull.push(a);
            }
        }
        Ok(Parts {
            blocks,
            ds,
            pull,
            pull_weight,
        })
    }

    /// Value of the vector field at one node with the convolution frozen.
    fn node_field(
        &self,
        v: &DVector<f64>,
        q: Option<&DVector<f64>>,
        beta: f64,
    ) -> Result<DVector<f64>> {
        let mut f = self.sys.local_field(v)?;
        if let Some(q) = q {
            f += self.sys.coupling_pullback(v)? * q * beta;
        }
        Ok(f)
    }

    /// Assembles the banded restriction of the Jacobian.
    fn assemble(&self, parts: &Parts) -> BandedMatrix {
        let (n, d) = (self.n, self.dim);
        let beta = self.sys.coupling();
        let half = self.band_cells * d + (d - 1);
        let mut jac = BandedMatrix::new(n * d, half, half);
        let inv2 = 1.0 / (2.0 * self.grid.dx());
        let phase_row = self.phase.map(|(node, comp, _)| node * d + comp);
        let keep = |r: usize| phase_row != Some(r);

        for c in 0..d {
            jac.set(c, c, 1.0);
            let r = (n - 1) * d + c;
            jac.set(r, r, 1.0);
        }
        for i in 1..n - 1 {
            for c in 0..d {
                let row = i * d + c;
                if !keep(row) {
                    continue;
                }
                jac.add(row, (i + 1) * d + c, inv2);
                jac.add(row, (i - 1) * d + c, -inv2);
                for c2 in 0..d {
                    jac.add(row, i * d + c2, parts.blocks[i][(c, c2)]);
                }
            }
            if let Some(pw) = &parts.pull_weight {
                let lo = i.saturating_sub(self.band_cells);
                let hi = (i + self.band_cells).min(n - 1);
                for j in lo..=hi {
                    let mass = self.op.cell_mass(i as i64 - j as i64);
                    if mass == 0.0 {
                        continue;
                    }
                    self.add_block(&mut jac, i, j, beta * mass, &pw[i], &parts.ds[j], &keep);
                }
            }
            if let Some(pull) = &parts.pull {
                for atom in self.op.atoms() {
                    let t = i as f64 - atom.shift / self.grid.dx();
                    if t <= -1e-12 || t >= (n - 1) as f64 + 1e-12 {
                        continue;
                    }
                    let t = t.clamp(0.0, (n - 1) as f64);
                    let j0 = (t.floor() as usize).min(n - 2);
                    let frac = t - j0 as f64;
                    let aw = &pull[i] * &atom.weight;
                    for (j, w) in [(j0, 1.0 - frac), (j0 + 1, frac)] {
                        if w != 0.0 && j.abs_diff(i) <= self.band_cells {
                            self.add_block(&mut jac, i, j, beta * w, &aw, &parts.ds[j], &keep);
                        }
                    }
                }
            }
        }
        if let Some(row) = phase_row {
            jac.set(row, row, 1.0);
        }
        jac
    }

    /// Adds `scale * left * ds` into the `(i, j)` node block of the band.
    #[allow(clippy::too_many_arguments)]
    fn add_block(
        &self,
        jac: &mut BandedMatrix,
        i: usize,
        j: usize,
        scale: f64,
        left: &DMatrix<f64>,
        ds: &DMatrix<f64>,
        keep: &dyn Fn(usize) -> bool,
    ) {
        let d = self.dim;
        for r in 0..d {
            let row = i * d + r;
            if !keep(row) {
                continue;
            }
            for c in 0..d {
                let mut s = 0.0;
                for m in 0..self.kdim {
                    s += left[(r, m)] * ds[(m, c)];
                }
                jac.add(row, j * d + c, scale * s);
            }
        }
    }

    /// Exact Jacobian action (up to the finite-difference local blocks),
    /// including all convolution coupling regardless of the band.
    fn matvec(&self, parts: &Parts, v: &[f64], with_phase: bool) -> Vec<f64> {
        let (n, d) = (self.n, self.dim);
        let beta = self.sys.coupling();
        let inv2 = 1.0 / (2.0 * self.grid.dx());
        let mut out = vec![0.0; n * d];
        for c in 0..d {
            out[c] = v[c];
            out[(n - 1) * d + c] = v[(n - 1) * d + c];
        }

        let conv = parts.pull.as_ref().map(|_| {
            let mut w = DMatrix::zeros(n, self.kdim);
            for i in 0..n {
                for m in 0..self.kdim {
                    let mut s = 0.0;
                    for c in 0..d {
                        s += parts.ds[i][(m, c)] * v[i * d + c];
                    }
                    w[(i, m)] = s;
                }
            }
            let wp = Profile::new(
                self.grid,
                w,
                DVector::zeros(self.kdim),
                DVector::zeros(self.kdim),
            )
            .expect("variation profile dimensions are consistent");
            self.op
                .apply(&wp)
                .expect("variation profile carries tails")
        });

        for i in 1..n - 1 {
            for c in 0..d {
                let row = i * d + c;
                let mut s = (v[(i + 1) * d + c] - v[(i - 1) * d + c]) * inv2;
                for c2 in 0..d {
                    s += parts.blocks[i][(c, c2)] * v[i * d + c2];
                }
                if let (Some(conv), Some(pull)) = (&conv, &parts.pull) {
                    for m in 0..self.kdim {
                        s += beta * pull[i][(c, m)] * conv[(i, m)];
                    }
                }
                out[row] = s;
            }
        }
        if with_phase {
            if let Some((node, comp, _)) = self.phase {
                let row = node * d + comp;
                out[row] = v[row];
            }
        }
        out
    }
}

/// Node radius of the Jacobian band: enough cells to hold all but
/// `cutoff` of the kernel mass, widened to reach every atom.
fn band_width(op: &ConvOperator, beta: f64, n: usize, cutoff: f64) -> usize {
    let mut m = 1usize;
    if beta != 0.0 {
        let k = op.half_width_cells() as i64;
        if k > 0 {
            let total: f64 = (-k..=k).map(|o| op.cell_mass(o).abs()).sum();
            let mut acc = op.cell_mass(0).abs();
            let mut mm = 0i64;
            while acc < (1.0 - cutoff) * total && mm < k {
                mm += 1;
                acc += op.cell_mass(mm).abs() + op.cell_mass(-mm).abs();
            }
            m = m.max(mm.max(1) as usize);
        }
        for atom in op.atoms() {
            m = m.max((atom.shift.abs() / op.dx()).ceil() as usize + 1);
        }
    }
    m.min(n - 1)
}

/// Solves the heteroclinic boundary-value problem `u' + Phi(u) = 0`,
/// `u(-L) = z_minus`, `u(L) = z_plus` by damped Newton on central-difference
/// collocation. One interior equation is replaced by a phase condition
/// pinning the largest-gap component to its endpoint midpoint at `x = 0`,
/// which removes the translation kernel. The Newton step is solved with the
/// banded core of the Jacobian plus iterative refinement against the exact
/// Jacobian action, so the far kernel tail is not dropped.
///
/// Equal endpoints short-circuit to the constant profile. Non-hyperbolic
/// endpoints are rejected; index gaps other than 1 are allowed and recorded
/// in the returned front.
pub fn solve_front(
    sys: &System,
    z_minus: &CriticalPoint,
    z_plus: &CriticalPoint,
    seed: &Profile,
    opts: &SolveOptions,
) -> Result<Front> {
    let d = sys.dim();
    if seed.dim() != d {
        return Err(Error::Precondition(format!(
            "seed dimension {} does not match system dimension {}",
            seed.dim(),
            d
        )));
    }
    for (name, z) in [("z_minus", z_minus), ("z_plus", z_plus)] {
        if !z.hyperbolic {
            return Err(Error::Precondition(format!(
                "{name} is not hyperbolic (margin {:.3e})",
                z.margin
            )));
        }
        if z.gradient_norm > 1e-6 {
            return Err(Error::Precondition(format!(
                "{name} is not critical (gradient norm {:.3e})",
                z.gradient_norm
            )));
        }
    }
    let zm = z_minus.state();
    let zp = z_plus.state();
    let grid = seed.grid();
    let index_gap = z_minus.index as i64 - z_plus.index as i64;

    if (&zp - &zm).amax() <= CONSTANT_SEPARATION {
        let profile = Profile::constant(grid, &zm);
        let residual = energy::residual(sys, &profile)?;
        return Ok(Front {
            profile,
            z_minus: z_minus.clone(),
            z_plus: z_plus.clone(),
            residual,
            e_kin: 0.0,
            beta: sys.coupling(),
            index_gap,
            least_singular_estimate: f64::INFINITY,
            decay_fit_minus: None,
            decay_fit_plus: None,
        });
    }

    let gap = &zp - &zm;
    let comp = gap.iamax();
    let target = 0.5 * (zm[comp] + zp[comp]);
    let phase = Some((grid.centre(), comp, target));
    let disc = Discretisation::new(sys, grid, zm.clone(), zp.clone(), phase, opts.band_cutoff)?;

    let mut u = seed.clone();
    pin_boundary(&mut u, &zm, &zp);

    let mut r = disc.residual(&u)?;
    let mut sup = sup_norm(&r);
    let mut converged = sup <= opts.tolerance;
    let mut iterations = 0usize;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let parts = disc.parts(&u)?;
        let lu = disc.assemble(&parts).factor().map_err(|_| {
            Error::Numeric(
                "singular collocation Jacobian; approach this coupling via continue_in_beta"
                    .into(),
            )
        })?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (delta, _) = solve_refined(&lu, |v| disc.matvec(&parts, v, true), &rhs, 1e-12, 40)?;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            let mut trial = u.clone();
            {
                let tv = trial.values_mut();
                for i in 0..disc.n {
                    for c in 0..d {
                        tv[(i, c)] += scale * delta[i * d + c];
                    }
                }
            }
            let tr = disc.residual(&trial)?;
            let tsup = sup_norm(&tr);
            if tsup < sup {
                u = trial;
                r = tr;
                sup = tsup;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                residual: sup,
            });
        }
        converged = sup <= opts.tolerance;
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            residual: sup,
        });
    }

    let parts = disc.parts(&u)?;
    let least_singular_estimate = match disc.assemble(&parts).factor() {
        Ok(lu) => lu.smallest_singular_estimate(60, 0xF2047),
        Err(_) => 0.0,
    };
    let residual = energy::residual_with(sys, &disc.op, &u)?;
    let e_kin = energy::kinetic_energy(sys, &u)?;
    let (decay_fit_minus, decay_fit_plus) = decay::fit_tail_rates(&u);
    Ok(Front {
        profile: u,
        z_minus: z_minus.clone(),
        z_plus: z_plus.clone(),
        residual,
        e_kin,
        beta: sys.coupling(),
        index_gap,
        least_singular_estimate,
        decay_fit_minus,
        decay_fit_plus,
    })
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// Fourth-order first-derivative stencil, one-sided at the edges.
fn derivative_fourth_order(u: &Profile) -> DMatrix<f64> {
    let n = u.grid().len();
    let d = u.dim();
    let dx = u.grid().dx();
    let values = u.values();
    let mut out = DMatrix::zeros(n, d);
    let edge: [(usize, [f64; 5]); 2] = [
        (0, [-25.0, 48.0, -36.0, 16.0, -3.0]),
        (1, [-3.0, -10.0, 18.0, -6.0, 1.0]),
    ];
    for c in 0..d {
        for (row, coeffs) in edge {
            let mut acc = 0.0;
            let mut acc_r = 0.0;
            for (k, w) in coeffs.iter().enumerate() {
                acc += w * values[(k, c)];
                acc_r -= w * values[(n - 1 - k, c)];
            }
            out[(row, c)] = acc / (12.0 * dx);
            out[(n - 1 - row, c)] = acc_r / (12.0 * dx);
        }
        for i in 2..n - 2 {
            out[(i, c)] = (-values[(i + 2, c)] + 8.0 * values[(i + 1, c)]
                - 8.0 * values[(i - 1, c)]
                + values[(i - 2, c)])
                / (12.0 * dx);
        }
    }
    out
}

/// Measures how nearly the profile derivative lies in the kernel of the
/// collocation Jacobian: `max |J u'| / max |u'|` over rows whose five-point
/// derivative stencil stays clear of the boundary, with no phase row. On a
/// converged front this is the discrete shadow of translation invariance;
/// on a constant profile it is defined as 0.
pub fn translation_kernel_check(sys: &System, front: &Front) -> Result<f64> {
    let u = &front.profile;
    let grid = u.grid();
    let n = grid.len();
    let d = u.dim();
    if n < 9 {
        return Err(Error::Precondition(
            "translation check needs at least nine nodes".into(),
        ));
    }
    let v = derivative_fourth_order(u);
    let vsup = v.amax();
    let usup = u.values().amax();
    if vsup <= 1e-13 * (1.0 + usup) {
        return Ok(0.0);
    }
    let (zm, zp) = match u.tails() {
        Some((a, b)) => (a.clone(), b.clone()),
        None => (u.node(0), u.node(n - 1)),
    };
    let disc = Discretisation::new(sys, grid, zm, zp, None, 1e-3)?;
    let parts = disc.parts(u)?;
    let flat: Vec<f64> = (0..n * d).map(|k| v[(k / d, k % d)]).collect();
    let jv = disc.matvec(&parts, &flat, false);
    let mut worst = 0.0f64;
    for i in 3..n - 3 {
        for c in 0..d {
            worst = worst.max(jv[i * d + c].abs());
        }
    }
    Ok(worst / vsup)
}

/// Smallest coupling step the continuation is allowed to take.
pub const MIN_BETA_STEP: f64 = 1.0 / 64.0;

/// Homotopy continuation in the coupling strength. Every entry of `path` is
/// visited in order: the endpoint states are re-converged for the new
/// coupling, the previous profile (re-blended onto the moved endpoints)
/// seeds the solver, and failed steps are bisected down to steps of 1/64.
pub fn continue_in_beta(
    sys: &System,
    front: &Front,
    path: &[f64],
    opts: &SolveOptions,
) -> Result<Front> {
    let mut current = front.clone();
    let mut from = front.beta;

    let step = |current: &Front, beta: f64| -> Result<Front> {
        let sys_b = sys.with_coupling(beta)?;
        let zm = critical::refine_critical(&sys_b, &current.z_minus.state(), 0.5)?;
        let zp = critical::refine_critical(&sys_b, &current.z_plus.state(), 0.5)?;
        let seed = reblend(&current.profile, &zm.state(), &zp.state())?;
        solve_front(&sys_b, &zm, &zp, &seed, opts)
    };

    for &target in path {
        if target == from {
            current = step(&current, target)?;
            continue;
        }
        let mut next = target;
        loop {
            match step(&current, next) {
                Ok(f) => {
                    current = f;
                    from = next;
                    if from == target {
                        break;
                    }
                    next = target;
                }
                Err(_) => {
                    next = 0.5 * (from + next);
                    if (next - from).abs() < MIN_BETA_STEP {
                        return Err(Error::ContinuationStuck {
                            last_good: from,
                            min_step: MIN_BETA_STEP,
                        });
                    }
                }
            }
        }
    }
    Ok(current)
}

/// Shifts a profile onto new endpoint states: the old profile plus a smooth
/// ramp carrying each tail correction.
fn reblend(u: &Profile, zm: &DVector<f64>, zp: &DVector<f64>) -> Result<Profile> {
    let grid = u.grid();
    let n = grid.len();
    let d = u.dim();
    let (old_m, old_p) = u
        .tails()
        .ok_or_else(|| Error::Precondition("profile has no tail constants".into()))?;
    let dm = zm - old_m;
    let dp = zp - old_p;
    let mut values = u.values().clone();
    for i in 0..n {
        let w = 0.5 * (1.0 + (0.5 * grid.x(i)).tanh());
        for c in 0..d {
            values[(i, c)] += (1.0 - w) * dm[c] + w * dp[c];
        }
    }
    let mut out = Profile::new(grid, values, zm.clone(), zp.clone())?;
    pin_boundary(&mut out, zm, zp);
    Ok(out)
}

/// Counts connecting profiles between two constant solutions by a
/// deterministic multi-start search: tanh seeds at integer shifts plus, in
/// dimension two and higher, centred seeds perturbed along each unstable
/// direction of `z_minus`. Converged profiles below the kinetic-energy floor
/// are discarded and the rest deduplicated by minimum-over-shifts L2
/// distance, with the threshold `1e-3 sqrt(2L)`.
///
/// Equal endpoints return an empty count; any other index gap than 1 is a
/// precondition error.
pub fn count_connections(
    sys: &System,
    z_minus: &CriticalPoint,
    z_plus: &CriticalPoint,
    opts: &MultistartOptions,
) -> Result<ConnectionCount> {
    let zm = z_minus.state();
    let zp = z_plus.state();
    if (&zp - &zm).amax() <= CONSTANT_SEPARATION {
        return Ok(ConnectionCount {
            z_minus: z_minus.clone(),
            z_plus: z_plus.clone(),
            representatives: Vec::new(),
            raw_count: 0,
            count_mod2: 0,
            warnings: Vec::new(),
        });
    }
    let gap = z_minus.index as i64 - z_plus.index as i64;
    if gap != 1 {
        return Err(Error::Precondition(format!(
            "connection counting needs Morse index gap 1, found {gap}"
        )));
    }

    let grid = opts.grid;
    let mut seeds: Vec<Profile> = Vec::new();
    let (lo, hi) = opts.shift_range;
    for s in lo..=hi {
        seeds.push(tanh_seed(grid, &zm, &zp, s as f64));
    }
    if sys.dim() >= 2 {
        for dir in unstable_directions(sys, &zm)? {
            for amp in [opts.perturbation, -opts.perturbation] {
                let mut seed = tanh_seed(grid, &zm, &zp, 0.0);
                {
                    let values = seed.values_mut();
                    for i in 1..grid.len() - 1 {
                        let x = grid.x(i);
                        let bump = amp * (-0.25 * x * x).exp();
                        for c in 0..sys.dim() {
                            values[(i, c)] += bump * dir[c];
                        }
                    }
                }
                seeds.push(seed);
            }
        }
    }

    let results = run_seeds(sys, z_minus, z_plus, &seeds, opts);

    let threshold = 1e-3 * (2.0 * grid.half_width()).sqrt();
    let mut representatives: Vec<Front> = Vec::new();
    let mut warnings = Vec::new();
    for front in results.into_iter().flatten() {
        if front.e_kin <= CONSTANT_ENERGY {
            continue;
        }
        let duplicate = representatives
            .iter()
            .any(|kept| min_shift_distance(&front.profile, &kept.profile) < threshold);
        if !duplicate {
            if front.least_singular_estimate < TRANSVERSALITY_WARNING {
                warnings.push(format!(
                    "representative {}: smallest-singular-value estimate {:.3e} is below {:.0e}; \
                     the count may sit at a fold",
                    representatives.len(),
                    front.least_singular_estimate,
                    TRANSVERSALITY_WARNING
                ));
            }
            representatives.push(front);
        }
    }
    let raw_count = representatives.len();
    Ok(ConnectionCount {
        z_minus: z_minus.clone(),
        z_plus: z_plus.clone(),
        representatives,
        raw_count,
        count_mod2: (raw_count % 2) as u8,
        warnings,
    })
}

/// Solves every seed, optionally on several threads; the result vector is
/// indexed by seed, so the merge order never depends on scheduling.
fn run_seeds(
    sys: &System,
    z_minus: &CriticalPoint,
    z_plus: &CriticalPoint,
    seeds: &[Profile],
    opts: &MultistartOptions,
) -> Vec<Option<Front>> {
    let workers = opts.workers.max(1).min(seeds.len().max(1));
    if workers <= 1 {
        return seeds
            .iter()
            .map(|seed| solve_front(sys, z_minus, z_plus, seed, &opts.solve).ok())
            .collect();
    }
    let results = std::sync::Mutex::new(vec![None; seeds.len()]);
    std::thread::scope(|scope| {
        for w in 0..workers {
            let results = &results;
            let solve = &opts.solve;
            scope.spawn(move || {
                for (idx, seed) in seeds.iter().enumerate() {
                    if idx % workers != w {
                        continue;
                    }
                    let front = solve_front(sys, z_minus, z_plus, seed, solve).ok();
                    results.lock().expect("result store poisoned")[idx] = front;
                }
            });
        }
    });
    results.into_inner().expect("result store poisoned")
}

/// Unit eigenvectors of the metric Hessian pencil at `z` with negative
/// eigenvalue, in ascending eigenvalue order.
fn unstable_directions(sys: &System, z: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let h = critical::hessian(sys, z);
    let g = sys.metric_matrix(z)?;
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("metric is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("metric factor is singular".into()))?;
    let reduced = &l_inv * h * l_inv.transpose();
    let eig = (&reduced + reduced.transpose()).scale(0.5).symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .map(|(k, v)| {
            let y = eig.eigenvectors.column(k).into_owned();
            let mut dir = l_inv.transpose() * y;
            let norm = dir.norm();
            if norm > 0.0 {
                dir /= norm;
            }
            (*v, dir)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite eigenvalues"));
    Ok(pairs.into_iter().map(|(_, v)| v).collect())
}

/// L2 distance between two profiles minimized over integer node shifts of
/// the second, tails extending it beyond the grid.
fn min_shift_distance(a: &Profile, b: &Profile) -> f64 {
    let grid = a.grid();
    let n = grid.len() as i64;
    let d = a.dim();
    let dx = grid.dx();
    let av = a.values();
    let bv = b.values();
    let (bl, br) = b.tails().expect("front profiles carry tails");
    let max_shift = n / 2;
    let mut best = f64::INFINITY;
    for s in -max_shift..=max_shift {
        let mut acc = 0.0;
        for i in 0..n {
            let j = i + s;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            for c in 0..d {
                let bval = if j < 0 {
                    bl[c]
                } else if j >= n {
                    br[c]
                } else {
                    bv[(j as usize, c)]
                };
                let diff = av[(i as usize, c)] - bval;
                acc += w * diff * diff;
            }
        }
        best = best.min((acc * dx).sqrt());
    }
    best
}

//! Run configuration: JSON schema, validation, and construction of the model
//! objects. Every validation error names the offending key in config
//! notation, e.g. `grid.n` or `system.params.eps`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use conley_front::blocks::{harmonic_block, BlockGeometry};
use conley_front::front::{MultistartOptions, SolveOptions};
use conley_front::grid::Grid;
use conley_front::kernel::{Atom, ContinuousKernel, Kernel};
use conley_front::system::{builtin, CouplingMap, Metric, Potential, System};
use conley_front::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front: Option<FrontConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingConfig>,
    #[serde(default)]
    pub symbol: SymbolConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks that do not require building the model.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if let Some(grid) = &self.grid {
            grid.build()?;
        }
        self.solver.validate()?;
        if let Some(search) = &self.search {
            search.validate()?;
        }
        if let Some(front) = &self.front {
            front.validate()?;
        }
        if let Some(block) = &self.block {
            block.validate()?;
        }
        self.symbol.validate()?;
        self.lyapunov.validate()?;
        Ok(())
    }

    pub fn require_grid(&self) -> Result<Grid> {
        self.grid
            .as_ref()
            .ok_or_else(|| Error::config("grid", "this command needs a grid section"))?
            .build()
    }

    pub fn require_search(&self) -> Result<&SearchConfig> {
        self.search
            .as_ref()
            .ok_or_else(|| Error::config("search", "this command needs a search section"))
    }

    pub fn require_front(&self) -> Result<&FrontConfig> {
        self.front
            .as_ref()
            .ok_or_else(|| Error::config("front", "this command needs a front section"))
    }

    pub fn require_block(&self) -> Result<&BlockConfig> {
        self.block
            .as_ref()
            .ok_or_else(|| Error::config("block", "this command needs a block section"))
    }

    pub fn require_forcing(&self) -> Result<&ForcingConfig> {
        self.forcing
            .as_ref()
            .ok_or_else(|| Error::config("forcing", "this command needs a forcing section"))
    }
}

/// Model description: either a named builtin with numeric parameters, or an
/// explicit `(dim, coupling, potential, metric, kernel, beta)` tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

const BUILTINS: &[&str] = &["coupled_pair", "double_well", "polar", "saturating"];

impl SystemConfig {
    fn validate(&self) -> Result<()> {
        if let Some(name) = &self.builtin {
            if !BUILTINS.contains(&name.as_str()) {
                return Err(Error::config(
                    "system.builtin",
                    format!("unknown builtin `{name}`; available: {}", BUILTINS.join(", ")),
                ));
            }
            for (field, present) in [
                ("system.dim", self.dim.is_some()),
                ("system.coupling", self.coupling.is_some()),
                ("system.potential", self.potential.is_some()),
                ("system.metric", self.metric.is_some()),
                ("system.kernel", self.kernel.is_some()),
                ("system.beta", self.beta.is_some()),
            ] {
                if present {
                    return Err(Error::config(
                        field,
                        "must be omitted when system.builtin is set (use system.params)",
                    ));
                }
            }
        } else {
            if !self.params.is_empty() {
                return Err(Error::config(
                    "system.params",
                    "only meaningful together with system.builtin",
                ));
            }
            for (field, present) in [
                ("system.dim", self.dim.is_some()),
                ("system.coupling", self.coupling.is_some()),
                ("system.potential", self.potential.is_some()),
                ("system.metric", self.metric.is_some()),
                ("system.kernel", self.kernel.is_some()),
                ("system.beta", self.beta.is_some()),
            ] {
                if !present {
                    return Err(Error::config(
                        field,
                        "required when system.builtin is not set",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<System> {
        self.validate()?;
        if let Some(name) = &self.builtin {
            return self.build_builtin(name);
        }
        let kernel = self.kernel.as_ref().expect("validated").build()?;
        System::new(
            self.dim.expect("validated"),
            self.coupling.clone().expect("validated"),
            self.potential.clone().expect("validated"),
            self.metric.clone().expect("validated"),
            kernel,
            self.beta.expect("validated"),
        )
    }

    fn build_builtin(&self, name: &str) -> Result<System> {
        let allowed: &[&str] = match name {
            "double_well" => &["eps", "tilt", "beta"],
            "polar" => &["harmonic", "degree", "eps", "beta"],
            "saturating" => &["c", "dim"],
            "coupled_pair" => &["beta"],
            _ => unreachable!("validated"),
        };
        for key in self.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::config(
                    format!("system.params.{key}"),
                    format!("unknown parameter for builtin `{name}`; accepted: {}", allowed.join(", ")),
                ));
            }
        }
        let get = |key: &str, default: f64| self.params.get(key).copied().unwrap_or(default);
        let int = |key: &str, default: f64| -> Result<u32> {
            let v = get(key, default);
            if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::config(
                    format!("system.params.{key}"),
                    format!("must be a positive integer, got {v}"),
                ))
            }
        };
        Ok(match name {
            "double_well" => builtin::double_well(get("eps", 0.1), get("tilt", 0.0), get("beta", 1.0)),
            "polar" => builtin::polar(
                int("harmonic", 2.0)?,
                int("degree", 4.0)?,
                get("eps", 0.05),
                get("beta", 1.0),
            ),
            "saturating" => builtin::saturating(get("c", 2.0), int("dim", 1.0)? as usize),
            "coupled_pair" => builtin::coupled_pair(get("beta", 1.0)),
            _ => unreachable!("validated"),
        })
    }

    /// Where the coupling strength lives for this config form.
    pub fn set_beta(&mut self, beta: f64) {
        if self.builtin.is_some() {
            self.params.insert("beta".into(), beta);
        } else {
            self.beta = Some(beta);
        }
    }
}

/// Convolution kernel: optional continuous density plus point masses. Weights
/// are row-major matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousKernelConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<AtomConfig>,
    pub decay_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContinuousKernelConfig {
    Exponential { amplitude: f64, rate: f64, weight: Vec<Vec<f64>> },
    Gaussian { amplitude: f64, rate: f64, weight: Vec<Vec<f64>> },
    Bump { amplitude: f64, radius: f64, weight: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub shift: f64,
    pub weight: Vec<Vec<f64>>,
}

fn weight_matrix(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::config(key, "weight matrix must be nonempty"));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::config(key, "weight rows must be nonempty and equal length"));
    }
    if rows.len() != cols {
        return Err(Error::config(
            key,
            format!("weight matrix must be square, got {}x{}", rows.len(), cols),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl KernelConfig {
    pub fn build(&self) -> Result<Kernel> {
        let continuous = match &self.continuous {
            None => None,
            Some(ContinuousKernelConfig::Exponential { amplitude, rate, weight }) => {
                Some(ContinuousKernel::Exponential {
                    amplitude: *amplitude,
                    rate: *rate,
                    weight: weight_matrix(weight, "system.kernel.continuous.weight")?,
                })
            }
            Some(ContinuousKernelConfig::Gaussian { amplitude, rate, weight }) => {
                Some(ContinuousKernel::Gaussian {
                    amplitude: *amplitude,
                    rate: *rate,
                    weight: weight_matrix(weight, "system.kernel.continuous.weight")?,
                })
            }
            Some(ContinuousKernelConfig::Bump { amplitude, radius, weight }) => {
                Some(ContinuousKernel::Bump {
                    amplitude: *amplitude,
                    radius: *radius,
                    weight: weight_matrix(weight, "system.kernel.continuous.weight")?,
                })
            }
        };
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                Ok(Atom {
                    shift: a.shift,
                    weight: weight_matrix(&a.weight, &format!("system.kernel.atoms[{i}].weight"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Kernel::new(continuous, atoms, self.decay_rate, self.cutoff)
    }
}

/// Uniform grid on `[-L, L]` with `n` nodes (`n` odd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub l: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.l, self.n)
    }
}

fn default_tolerance() -> f64 {
    1e-10
}
fn default_max_iterations() -> usize {
    60
}
fn default_band_cutoff() -> f64 {
    1e-3
}
fn default_shift_range() -> (i64, i64) {
    (-5, 5)
}
fn default_perturbation() -> f64 {
    0.2
}
fn default_workers() -> usize {
    1
}

/// Newton and multi-start options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_band_cutoff")]
    pub band_cutoff: f64,
    #[serde(default = "default_shift_range")]
    pub shift_range: (i64, i64),
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            band_cutoff: default_band_cutoff(),
            shift_range: default_shift_range(),
            perturbation: default_perturbation(),
            workers: default_workers(),
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("solver.max_iterations", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.band_cutoff) {
            return Err(Error::config("solver.band_cutoff", "must lie in [0, 1)"));
        }
        if self.shift_range.0 > self.shift_range.1 {
            return Err(Error::config("solver.shift_range", "lower bound exceeds upper"));
        }
        if self.workers == 0 {
            return Err(Error::config("solver.workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            band_cutoff: self.band_cutoff,
        }
    }

    pub fn multistart(&self, grid: Grid) -> MultistartOptions {
        MultistartOptions {
            grid,
            shift_range: self.shift_range,
            perturbation: self.perturbation,
            workers: self.workers,
            solve: self.solve_options(),
        }
    }
}

fn default_per_axis() -> usize {
    7
}

/// Critical-point search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// One `[lo, hi]` range per coordinate.
    #[serde(rename = "box")]
    pub bounds: Vec<(f64, f64)>,
    #[serde(default = "default_per_axis")]
    pub per_axis: usize,
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::config("search.box", "needs at least one range"));
        }
        if self.per_axis < 2 {
            return Err(Error::config("search.per_axis", "needs at least 2 seeds per axis"));
        }
        Ok(())
    }
}

/// Endpoints for a single front solve. The states are polished to critical
/// points before solving, so approximate values suffice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontConfig {
    pub z_minus: Vec<f64>,
    pub z_plus: Vec<f64>,
    #[serde(default)]
    pub shift: f64,
}

impl FrontConfig {
    fn validate(&self) -> Result<()> {
        if self.z_minus.is_empty() || self.z_minus.len() != self.z_plus.len() {
            return Err(Error::config(
                "front.z_plus",
                "endpoint states must be nonempty and of equal dimension",
            ));
        }
        Ok(())
    }
}

fn default_samples_per_facet() -> usize {
    200
}

/// Block geometry, boundary sampling density, and an optional nested family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub geometry: GeometryConfig,
    #[serde(default = "default_samples_per_facet")]
    pub samples_per_facet: usize,
    /// Radii of a nested family built from the geometry: balls, lenses and
    /// harmonic blocks take the radius directly, intervals become `[-R, R]`,
    /// and polygon vertices are scaled by `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<f64>>,
}

impl BlockConfig {
    fn validate(&self) -> Result<()> {
        if self.samples_per_facet == 0 {
            return Err(Error::config("block.samples_per_facet", "must be at least 1"));
        }
        if let Some(family) = &self.family {
            if family.is_empty() {
                return Err(Error::config("block.family", "family must list at least one radius"));
            }
        }
        let mut geometry = self.geometry.base();
        geometry.validate()
    }

    pub fn family_members(&self) -> Vec<(f64, BlockGeometry)> {
        self.family
            .iter()
            .flatten()
            .map(|&r| (r, self.geometry.member(r)))
            .collect()
    }
}

/// Geometry description; `harmonic` is shorthand for the lens (first
/// harmonic) or the `2k`-gon block of the planar harmonic potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Interval { a: f64, b: f64 },
    Ball { dim: usize, radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    Lens { radius: f64 },
    Harmonic { harmonic: usize, radius: f64 },
}

impl GeometryConfig {
    pub fn base(&self) -> BlockGeometry {
        match self {
            GeometryConfig::Interval { a, b } => BlockGeometry::Interval { a: *a, b: *b },
            GeometryConfig::Ball { dim, radius } => BlockGeometry::Ball {
                dim: *dim,
                radius: *radius,
            },
            GeometryConfig::Polygon { vertices } => BlockGeometry::Polygon {
                vertices: vertices.clone(),
            },
            GeometryConfig::Lens { radius } => BlockGeometry::Lens { radius: *radius },
            GeometryConfig::Harmonic { harmonic, radius } => harmonic_block(*harmonic, *radius),
        }
    }

    /// The family member at radius `r`.
    pub fn member(&self, r: f64) -> BlockGeometry {
        match self {
            GeometryConfig::Interval { .. } => BlockGeometry::Interval { a: -r, b: r },
            GeometryConfig::Ball { dim, .. } => BlockGeometry::Ball { dim: *dim, radius: r },
            GeometryConfig::Polygon { vertices } => BlockGeometry::Polygon {
                vertices: vertices.iter().map(|[x, y]| [r * x, r * y]).collect(),
            },
            GeometryConfig::Lens { .. } => BlockGeometry::Lens { radius: r },
            GeometryConfig::Harmonic { harmonic, .. } => harmonic_block(*harmonic, r),
        }
    }
}

/// Inputs of the Morse-inequality bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub num_constants: usize,
    pub ranks: BTreeMap<usize, usize>,
}

fn default_xi_max() -> f64 {
    50.0
}
fn default_symbol_samples() -> usize {
    2001
}

/// Frequency range and resolution of the hyperbolicity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    #[serde(default = "default_xi_max")]
    pub xi_max: f64,
    #[serde(default = "default_symbol_samples")]
    pub samples: usize,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        SymbolConfig {
            xi_max: default_xi_max(),
            samples: default_symbol_samples(),
        }
    }
}

impl SymbolConfig {
    fn validate(&self) -> Result<()> {
        if !(self.xi_max > 0.0) {
            return Err(Error::config("symbol.xi_max", "must be positive"));
        }
        if self.samples < 3 {
            return Err(Error::config("symbol.samples", "needs at least 3 samples"));
        }
        Ok(())
    }
}

fn default_tau_samples() -> usize {
    60
}
fn default_slack() -> f64 {
    1e-6
}

/// Shift-energy monotonicity check: sample count, slack, and the shift range
/// (defaults to half the grid width on each side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    #[serde(default = "default_tau_samples")]
    pub samples: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_range: Option<f64>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            samples: default_tau_samples(),
            slack: default_slack(),
            half_range: None,
        }
    }
}

impl LyapunovConfig {
    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::config("lyapunov.samples", "needs at least 2 samples"));
        }
        if !(self.slack >= 0.0) {
            return Err(Error::config("lyapunov.slack", "must be nonnegative"));
        }
        if let Some(h) = self.half_range {
            if !(h > 0.0) {
                return Err(Error::config("lyapunov.half_range", "must be positive"));
            }
        }
        Ok(())
    }
}

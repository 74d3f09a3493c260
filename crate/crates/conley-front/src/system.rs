use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::grid::Profile;
use crate::kernel::{ConvOperator, Kernel};
use crate::poly::Polynomial;
use crate::{Error, Result};

/// The map `S` sending a state `u in R^d` into the space the kernel acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingMap {
    /// `S(u) = u`
    Identity,
    /// Componentwise saturating map `S_i(u) = amplitude * tanh(gain * u_i)`.
    Sigmoid { amplitude: f64, gain: f64 },
    /// Each output component is a polynomial in `u`.
    Polynomial { components: Vec<Polynomial> },
}

impl CouplingMap {
    pub fn out_dim(&self, dim: usize) -> usize {
        match self {
            CouplingMap::Identity | CouplingMap::Sigmoid { .. } => dim,
            CouplingMap::Polynomial { components } => components.len(),
        }
    }

    pub fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            CouplingMap::Identity => u.clone(),
            CouplingMap::Sigmoid { amplitude, gain } => u.map(|v| amplitude * (gain * v).tanh()),
            CouplingMap::Polynomial { components } => {
                DVector::from_fn(components.len(), |i, _| components[i].eval(u))
            }
        }
    }

    /// Jacobian `DS(u)`, shape `D x d`.
    pub fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let d = u.len();
        match self {
            CouplingMap::Identity => DMatrix::identity(d, d),
            CouplingMap::Sigmoid { amplitude, gain } => DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    let c = (gain * u[i]).cosh();
                    amplitude * gain / (c * c)
                } else {
                    0.0
                }
            }),
            CouplingMap::Polynomial { components } => {
                let mut m = DMatrix::zeros(components.len(), d);
                for (i, p) in components.iter().enumerate() {
                    m.row_mut(i).copy_from(&p.gradient(u).transpose());
                }
                m
            }
        }
    }

    /// Euclidean norm bound helper: `|S(u)|_2`.
    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.eval(u).norm()
    }
}

/// The local potential `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// A multivariate polynomial.
    Polynomial { poly: Polynomial },
    /// Planar potential `rho^degree * sin(harmonic * theta) + perturbation` in
    /// polar coordinates; `degree >= 2` keeps the gradient continuous at the
    /// origin.
    PolarHarmonic {
        harmonic: u32,
        degree: u32,
        perturbation: Polynomial,
    },
}

impl Potential {
    pub fn dim(&self) -> usize {
        match self {
            Potential::Polynomial { poly } => poly.dim(),
            Potential::PolarHarmonic { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Polynomial { .. } => Ok(()),
            Potential::PolarHarmonic {
                harmonic,
                degree,
                perturbation,
            } => {
                if *harmonic == 0 {
                    return Err(Error::config("potential.harmonic", "must be at least 1"));
                }
                if *degree < 2 {
                    return Err(Error::config(
                        "potential.degree",
                        "must be at least 2 for a continuous gradient",
                    ));
                }
                if perturbation.dim() != 2 {
                    return Err(Error::config(
                        "potential.perturbation",
                        "must be a polynomial in 2 variables",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        match self {
            Potential::Polynomial { poly } => poly.eval(z),
            Potential::PolarHarmonic {
                harmonic,
                degree,
                perturbation,
            } => {
                let (x, y) = (z[0], z[1]);
                let rho = x.hypot(y);
                let theta = y.atan2(x);
                rho.powi(*degree as i32) * (*harmonic as f64 * theta).sin() + perturbation.eval(z)
            }
        }
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Potential::Polynomial { poly } => poly.gradient(z),
            Potential::PolarHarmonic {
                harmonic,
                degree,
                perturbation,
            } => {
                let (x, y) = (z[0], z[1]);
                let rho = x.hypot(y);
                let mut g = perturbation.gradient(z);
                if rho > 0.0 {
                    let n = *degree as f64;
                    let k = *harmonic as f64;
                    let theta = y.atan2(x);
                    let rn1 = rho.powi(*degree as i32 - 1);
                    let (sin_k, cos_k) = (k * theta).sin_cos();
                    let (sin_t, cos_t) = theta.sin_cos();
                    g[0] += rn1 * (n * sin_k * cos_t - k * cos_k * sin_t);
                    g[1] += rn1 * (n * sin_k * sin_t + k * cos_k * cos_t);
                }
                g
            }
        }
    }
}

/// The metric `G` defining the gradient geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Identity,
    /// `G = factor * I` with `factor > 0`.
    ScaledIdentity { factor: f64 },
    /// `G(u) = DS(u)`; requires the coupling Jacobian to be diagonal with
    /// positive entries (identity or sigmoid coupling maps).
    FromCoupling,
}

/// The full model: state dimension, coupling map `S`, potential `F`, metric
/// `G`, kernel `N` and coupling strength `beta in [0, 1]`.
///
/// The travelling-profile equation is `u' + Phi(u) = 0` with
///
/// ```text
/// Phi(u) = beta * G(u)^-1 DS(u)^T N[S(u)] + G(u)^-1 grad F(u).
/// ```
///
/// On constant states this is the metric gradient of the reduced potential
/// `h(z) = beta/2 * S(z).Ntilde S(z) + F(z)`, `Ntilde` the effective matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    dim: usize,
    coupling_map: CouplingMap,
    potential: Potential,
    metric: Metric,
    kernel: Kernel,
    coupling: f64,
}

impl System {
    pub fn new(
        dim: usize,
        coupling_map: CouplingMap,
        potential: Potential,
        metric: Metric,
        kernel: Kernel,
        coupling: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("system.dim", "state dimension must be >= 1"));
        }
        potential.validate()?;
        if potential.dim() != dim {
            return Err(Error::config(
                "system.potential",
                format!(
                    "potential dimension {} does not match state dimension {dim}",
                    potential.dim()
                ),
            ));
        }
        if let CouplingMap::Polynomial { components } = &coupling_map {
            if components.is_empty() {
                return Err(Error::config(
                    "system.smap.components",
                    "need at least one output component",
                ));
            }
            for (i, c) in components.iter().enumerate() {
                if c.dim() != dim {
                    return Err(Error::config(
                        format!("system.smap.components[{i}]"),
                        format!("expected {dim} variables, got {}", c.dim()),
                    ));
                }
            }
        }
        if let CouplingMap::Sigmoid { amplitude, gain } = &coupling_map {
            if !amplitude.is_finite() || !gain.is_finite() {
                return Err(Error::config(
                    "system.smap",
                    "sigmoid parameters must be finite",
                ));
            }
        }
        let out = coupling_map.out_dim(dim);
        if kernel.dim() != out {
            return Err(Error::config(
                "system.kernel",
                format!(
                    "kernel dimension {} does not match coupling output dimension {out}",
                    kernel.dim()
                ),
            ));
        }
        if let Metric::ScaledIdentity { factor } = &metric {
            if !(factor.is_finite() && *factor > 0.0) {
                return Err(Error::config(
                    "system.metric.factor",
                    "metric scale must be positive",
                ));
            }
        }
        if matches!(metric, Metric::FromCoupling)
            && matches!(coupling_map, CouplingMap::Polynomial { .. })
        {
            return Err(Error::config(
                "system.metric",
                "metric from the coupling map needs a diagonal coupling Jacobian \
                 (identity or sigmoid)",
            ));
        }
        if !(0.0..=1.0).contains(&coupling) || !coupling.is_finite() {
            return Err(Error::config(
                "system.coupling",
                format!("coupling strength must lie in [0, 1], got {coupling}"),
            ));
        }
        Ok(System {
            dim,
            coupling_map,
            potential,
            metric,
            kernel,
            coupling,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coupling_map(&self) -> &CouplingMap {
        &self.coupling_map
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Same system with a different coupling strength.
    pub fn with_coupling(&self, beta: f64) -> Result<System> {
        System::new(
            self.dim,
            self.coupling_map.clone(),
            self.potential.clone(),
            self.metric.clone(),
            self.kernel.clone(),
            beta,
        )
    }

    /// Metric matrix `G(u)`.
    pub fn metric_matrix(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.metric {
            Metric::Identity => Ok(DMatrix::identity(self.dim, self.dim)),
            Metric::ScaledIdentity { factor } => Ok(DMatrix::identity(self.dim, self.dim) * *factor),
            Metric::FromCoupling => {
                let j = self.coupling_map.jacobian(u);
                for i in 0..self.dim {
                    for k in 0..self.dim {
                        if i != k && j[(i, k)] != 0.0 {
                            return Err(Error::Numeric(
                                "coupling Jacobian is not diagonal; metric undefined".into(),
                            ));
                        }
                    }
                    if !(j[(i, i)] > 0.0) {
                        return Err(Error::Numeric(format!(
                            "coupling Jacobian entry {i} is not positive at u = {u}; \
                             metric not positive definite"
                        )));
                    }
                }
                Ok(j)
            }
        }
    }

    /// Solves `G(u) x = rhs`, rejecting badly conditioned metrics.
    pub fn metric_solve(&self, u: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.metric {
            Metric::Identity => Ok(rhs.clone()),
            Metric::ScaledIdentity { factor } => Ok(rhs / *factor),
            Metric::FromCoupling => {
                let g = self.metric_matrix(u)?;
                let mut out = rhs.clone();
                let mut max_diag = 0.0f64;
                let mut min_diag = f64::INFINITY;
                for i in 0..self.dim {
                    let gi = g[(i, i)];
                    max_diag = max_diag.max(gi);
                    min_diag = min_diag.min(gi);
                    out[i] /= gi;
                }
                if !(min_diag > 0.0) || max_diag / min_diag > 1e12 {
                    return Err(Error::Numeric(format!(
                        "metric is singular to working precision at u = {u} \
                         (diagonal range {min_diag:.3e}..{max_diag:.3e})"
                    )));
                }
                Ok(out)
            }
        }
    }

    /// `A(u) = G(u)^-1 DS(u)^T`, the matrix that maps convolution values into
    /// state space; shape `d x D`.
    pub fn coupling_pullback(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let ds_t = self.coupling_map.jacobian(u).transpose();
        let mut out = DMatrix::zeros(self.dim, ds_t.ncols());
        for c in 0..ds_t.ncols() {
            let col = self.metric_solve(u, &ds_t.column(c).into_owned())?;
            out.set_column(c, &col);
        }
        Ok(out)
    }

    /// Local (kernel-free) part of the vector field: `G(u)^-1 grad F(u)`.
    pub fn local_field(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.metric_solve(u, &self.potential.gradient(u))
    }

    /// Reduced potential on constant states,
    /// `h(z) = beta/2 * S(z).Ntilde S(z) + F(z)`.
    pub fn reduced_potential(&self, z: &DVector<f64>) -> f64 {
        let s = self.coupling_map.eval(z);
        let nt = self.kernel.effective_matrix();
        0.5 * self.coupling * s.dot(&(&nt * &s)) + self.potential.eval(z)
    }

    /// Euclidean gradient of the reduced potential,
    /// `grad h(z) = beta * DS(z)^T Ntilde S(z) + grad F(z)`.
    pub fn reduced_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let s = self.coupling_map.eval(z);
        let nt = self.kernel.effective_matrix();
        let ds = self.coupling_map.jacobian(z);
        ds.transpose() * (&nt * &s) * self.coupling + self.potential.gradient(z)
    }

    /// Metric gradient of the reduced potential, `G(z)^-1 grad h(z)`. This is
    /// what the vector field reduces to on constant profiles.
    pub fn reduced_gradient_metric(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.metric_solve(z, &self.reduced_gradient(z))
    }

    /// The image profile `S(u)` with matching tails.
    pub fn coupling_profile(&self, u: &Profile) -> Result<Profile> {
        let n = u.grid().len();
        let out_dim = self.coupling_map.out_dim(self.dim);
        let mut values = DMatrix::zeros(n, out_dim);
        for i in 0..n {
            values
                .row_mut(i)
                .copy_from(&self.coupling_map.eval(&u.node(i)).transpose());
        }
        match u.tails() {
            Some((a, b)) => Profile::new(
                u.grid(),
                values,
                self.coupling_map.eval(a),
                self.coupling_map.eval(b),
            ),
            None => Profile::without_tails(u.grid(), values),
        }
    }

    /// Evaluates the vector field `Phi(u)` at every node, reusing a
    /// discretized kernel operator.
    pub fn phi_with(&self, op: &ConvOperator, u: &Profile) -> Result<DMatrix<f64>> {
        if u.dim() != self.dim {
            return Err(Error::Precondition(format!(
                "profile dimension {} does not match system dimension {}",
                u.dim(),
                self.dim
            )));
        }
        let n = u.grid().len();
        let mut out = DMatrix::zeros(n, self.dim);
        let conv = if self.coupling != 0.0 {
            let s = self.coupling_profile(u)?;
            Some(op.apply(&s)?)
        } else {
            None
        };
        for i in 0..n {
            let ui = u.node(i);
            let mut f = self.local_field(&ui)?;
            if let Some(q) = &conv {
                let a = self.coupling_pullback(&ui)?;
                f += a * q.row(i).transpose() * self.coupling;
            }
            out.row_mut(i).copy_from(&f.transpose());
        }
        Ok(out)
    }

    /// Evaluates the vector field `Phi(u)` at every node.
    pub fn phi(&self, u: &Profile) -> Result<DMatrix<f64>> {
        let op = self.kernel.operator(u.grid().dx())?;
        self.phi_with(&op, u)
    }
}

/// Catalogue of builtin models, referenced by name from the command-line
/// configuration and reused across the test-suite.
pub mod builtin {
    use super::*;
    use crate::kernel::{Atom, ContinuousKernel};

    /// Scalar double well `F(z) = z^4/4 - z^2/2 + tilt * z` with the kernel
    /// `eps * (1/2) e^{-|x|}`, identity coupling and metric.
    pub fn double_well(eps: f64, tilt: f64, beta: f64) -> System {
        let kernel = Kernel::new(
            Some(ContinuousKernel::Exponential {
                amplitude: 0.5 * eps,
                rate: 1.0,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            0.9,
            None,
        )
        .unwrap();
        System::new(
            1,
            CouplingMap::Identity,
            Potential::Polynomial {
                poly: Polynomial::univariate(&[0.0, tilt, -0.5, 0.0, 0.25]),
            },
            Metric::Identity,
            kernel,
            beta,
        )
        .unwrap()
    }

    /// Two-dimensional polar potential `rho^degree sin(harmonic theta)` with a
    /// weak identity-coupled kernel.
    pub fn polar(harmonic: u32, degree: u32, eps: f64, beta: f64) -> System {
        let kernel = Kernel::new(
            Some(ContinuousKernel::Gaussian {
                amplitude: eps,
                rate: 1.0,
                weight: DMatrix::identity(2, 2),
            }),
            vec![],
            0.9,
            None,
        )
        .unwrap();
        System::new(
            2,
            CouplingMap::Identity,
            Potential::PolarHarmonic {
                harmonic,
                degree,
                perturbation: Polynomial::zero(2),
            },
            Metric::Identity,
            kernel,
            beta,
        )
        .unwrap()
    }

    /// Saturating scalar model: `S = tanh(u)/c`, `F = -u^2/(2c)`, identity
    /// metric, unit-mass exponential kernel. Its kernel-free field is exactly
    /// `-u/c`.
    pub fn saturating(c: f64, dim: usize) -> System {
        let kernel = Kernel::new(
            Some(ContinuousKernel::Exponential {
                amplitude: 0.5,
                rate: 1.0,
                weight: DMatrix::identity(dim, dim),
            }),
            vec![],
            0.5,
            None,
        )
        .unwrap();
        let mut terms = Vec::new();
        for i in 0..dim {
            let mut powers = vec![0u32; dim];
            powers[i] = 2;
            terms.push(crate::poly::Monomial {
                coeff: -0.5 / c,
                powers,
            });
        }
        System::new(
            dim,
            CouplingMap::Sigmoid {
                amplitude: 1.0 / c,
                gain: 1.0,
            },
            Potential::Polynomial {
                poly: Polynomial::new(dim, terms).unwrap(),
            },
            Metric::Identity,
            kernel,
            1.0,
        )
        .unwrap()
    }

    /// Atom-coupled two-component system used to exercise matrix weights.
    pub fn coupled_pair(beta: f64) -> System {
        let w = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.2]);
        let kernel = Kernel::new(
            Some(ContinuousKernel::Exponential {
                amplitude: 0.3,
                rate: 2.0,
                weight: w.clone(),
            }),
            vec![
                Atom {
                    shift: 1.5,
                    weight: w.clone() * 0.1,
                },
                Atom {
                    shift: -1.5,
                    weight: w * 0.1,
                },
            ],
            0.8,
            None,
        )
        .unwrap();
        // F(u, v) = u^4/4 - u^2/2 + v^4/4 - v^2/2 + 0.1 u v
        let poly = Polynomial::new(
            2,
            vec![
                crate::poly::Monomial { coeff: 0.25, powers: vec![4, 0] },
                crate::poly::Monomial { coeff: -0.5, powers: vec![2, 0] },
                crate::poly::Monomial { coeff: 0.25, powers: vec![0, 4] },
                crate::poly::Monomial { coeff: -0.5, powers: vec![0, 2] },
                crate::poly::Monomial { coeff: 0.1, powers: vec![1, 1] },
            ],
        )
        .unwrap();
        System::new(
            2,
            CouplingMap::Identity,
            Potential::Polynomial { poly },
            Metric::Identity,
            kernel,
            beta,
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn double_well_reduced_potential_values() {
        // eps = 0.5, beta = 1: Ntilde = 0.5, h(1) = 0.25 + 0.25 - 0.5 = 0,
        // grad h(z) = eps z + z^3 - z vanishes at 0 and +-sqrt(1 - eps).
        let sys = double_well(0.5, 0.0, 1.0);
        let one = DVector::from_element(1, 1.0);
        assert_relative_eq!(sys.reduced_potential(&one), 0.0, epsilon = 1e-14);
        let zs = DVector::from_element(1, (0.5f64).sqrt());
        assert_relative_eq!(sys.reduced_gradient(&zs)[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(sys.reduced_gradient(&one)[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn phi_on_constant_profile_is_reduced_gradient() {
        let sys = coupled_pair(1.0);
        let grid = Grid::new(15.0, 601).unwrap();
        let z = DVector::from_column_slice(&[0.3, -0.8]);
        let u = Profile::constant(grid, &z);
        let phi = sys.phi(&u).unwrap();
        let expected = sys.reduced_gradient_metric(&z).unwrap();
        for i in 0..grid.len() {
            for c in 0..2 {
                assert_relative_eq!(phi[(i, c)], expected[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn saturating_local_field_is_linear_drift() {
        let sys = saturating(2.0, 3);
        let u = DVector::from_column_slice(&[0.4, -1.1, 0.0]);
        let f = sys.local_field(&u).unwrap();
        for i in 0..3 {
            assert_relative_eq!(f[i], -u[i] / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn polar_gradient_matches_finite_differences() {
        let sys = polar(2, 4, 0.0, 1.0);
        let pts = [[0.7, 0.3], [-1.2, 0.5], [0.0, 1.0], [0.3, -0.9]];
        for p in pts {
            let z = DVector::from_column_slice(&p);
            let g = sys.potential().gradient(&z);
            let h = 1e-6;
            for var in 0..2 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[var] += h;
                zm[var] -= h;
                let fd = (sys.potential().eval(&zp) - sys.potential().eval(&zm)) / (2.0 * h);
                assert_relative_eq!(g[var], fd, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn polar_gradient_vanishes_at_origin() {
        let sys = polar(3, 4, 0.0, 1.0);
        let g = sys.potential().gradient(&DVector::zeros(2));
        assert_eq!(g, DVector::zeros(2));
    }

    #[test]
    fn coupling_out_of_range_rejected() {
        let sys = double_well(0.5, 0.0, 1.0);
        assert!(sys.with_coupling(1.5).is_err());
        assert!(sys.with_coupling(-0.1).is_err());
    }

    #[test]
    fn metric_from_polynomial_coupling_rejected() {
        let kernel = Kernel::new(
            Some(crate::kernel::ContinuousKernel::Exponential {
                amplitude: 0.1,
                rate: 1.0,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            0.5,
            None,
        )
        .unwrap();
        let err = System::new(
            1,
            CouplingMap::Polynomial {
                components: vec![Polynomial::univariate(&[0.0, 0.0, 1.0])],
            },
            Potential::Polynomial {
                poly: Polynomial::univariate(&[0.0, 0.0, -0.5]),
            },
            Metric::FromCoupling,
            kernel,
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    proptest! {
        // grad h matches central finite differences of h at random states for
        // a matrix-weighted kernel system.
        #[test]
        fn reduced_gradient_matches_finite_differences(
            x in -1.5f64..1.5,
            y in -1.5f64..1.5,
            beta in 0.0f64..1.0,
        ) {
            let sys = coupled_pair(beta);
            let z = DVector::from_column_slice(&[x, y]);
            let g = sys.reduced_gradient(&z);
            let h = 1e-6;
            for var in 0..2 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[var] += h;
                zm[var] -= h;
                let fd = (sys.reduced_potential(&zp) - sys.reduced_potential(&zm)) / (2.0 * h);
                prop_assert!((g[var] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }

        // The sigmoid Jacobian matches finite differences.
        #[test]
        fn sigmoid_jacobian_matches_fd(u in -2.0f64..2.0, amp in 0.2f64..2.0, gain in 0.3f64..2.0) {
            let s = CouplingMap::Sigmoid { amplitude: amp, gain };
            let z = DVector::from_element(1, u);
            let j = s.jacobian(&z)[(0, 0)];
            let h = 1e-6;
            let fd = (s.eval(&DVector::from_element(1, u + h))[0]
                - s.eval(&DVector::from_element(1, u - h))[0]) / (2.0 * h);
            prop_assert!((j - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }
}

use nalgebra::{Complex, DMatrix, DVector};

use crate::critical::CriticalPoint;
use crate::system::System;
use crate::{Error, Result};

/// Gradient norm above which a state is rejected as the base point of the
/// linearisation.
pub const CRITICAL_TOLERANCE: f64 = 1e-8;

/// Linearisation of the vector field at a constant solution `z`, presented
/// through its Fourier symbol
///
/// ```text
/// L(xi) = i xi I + beta A(z) Nhat(xi) DS(z) + P_z
/// ```
///
/// where `A = G^-1 DS^T`, `Nhat` is the kernel's Fourier transform, and `P_z`
/// collects the local terms so that `L(0)` is exactly the Jacobian of the
/// metric gradient of the reduced potential.
#[derive(Debug, Clone)]
pub struct Linearisation {
    system: System,
    z: DVector<f64>,
    pullback: DMatrix<f64>,
    jacobian_s: DMatrix<f64>,
    local_part: DMatrix<f64>,
    jacobian_zero: DMatrix<f64>,
}

/// Central finite-difference Jacobian of the metric gradient of the reduced
/// potential, with per-coordinate step `scale * (1 + |z_j|)`.
pub fn metric_gradient_jacobian(
    sys: &System,
    z: &DVector<f64>,
    scale: f64,
) -> Result<DMatrix<f64>> {
    let d = z.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = scale * (1.0 + z[j].abs());
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += step;
        zm[j] -= step;
        let col = (sys.reduced_gradient_metric(&zp)? - sys.reduced_gradient_metric(&zm)?)
            / (2.0 * step);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

impl Linearisation {
    /// Builds the linearisation at `z`, requiring `z` to be a constant
    /// solution: `|grad_g h(z)| <= 1e-8`.
    pub fn at(sys: &System, z: &DVector<f64>) -> Result<Self> {
        let grad_norm = sys.reduced_gradient_metric(z)?.norm();
        if grad_norm > CRITICAL_TOLERANCE {
            return Err(Error::Precondition(format!(
                "state is not a constant solution: |grad_g h| = {grad_norm:.3e} > {CRITICAL_TOLERANCE:.0e}"
            )));
        }
        let jacobian_zero = metric_gradient_jacobian(sys, z, 1e-5)?;
        let pullback = sys.coupling_pullback(z)?;
        let jacobian_s = sys.coupling_map().jacobian(z);
        let effective = sys.kernel().effective_matrix();
        let local_part =
            &jacobian_zero - (&pullback * effective * &jacobian_s) * sys.coupling();
        Ok(Linearisation {
            system: sys.clone(),
            z: z.clone(),
            pullback,
            jacobian_s,
            local_part,
            jacobian_zero,
        })
    }

    pub fn base_point(&self) -> &DVector<f64> {
        &self.z
    }

    /// `L(0)`, the Jacobian of the metric gradient of the reduced potential.
    pub fn jacobian_zero(&self) -> &DMatrix<f64> {
        &self.jacobian_zero
    }

    /// The symbol `L(xi)` at a real frequency.
    pub fn eval(&self, xi: f64) -> DMatrix<Complex<f64>> {
        let d = self.z.len();
        let nhat = self.system.kernel().fourier_symbol(xi);
        let real = &self.local_part
            + (&self.pullback * nhat * &self.jacobian_s) * self.system.coupling();
        let mut out = real.map(|v| Complex::new(v, 0.0));
        for i in 0..d {
            out[(i, i)] += Complex::new(0.0, xi);
        }
        out
    }

    /// The real characteristic matrix at exponent `mu`, the symbol continued
    /// to real exponential modes `e^{mu x}`:
    /// `Lambda(mu) = mu I + beta A(z) Ncheck(mu) DS(z) + P_z`.
    pub fn exponent_eval(&self, mu: f64) -> Result<DMatrix<f64>> {
        let ncheck = self.system.kernel().exponent_symbol(mu)?;
        let d = self.z.len();
        let mut out = &self.local_part
            + (&self.pullback * ncheck * &self.jacobian_s) * self.system.coupling();
        for i in 0..d {
            out[(i, i)] += mu;
        }
        Ok(out)
    }
}

/// Result of scanning `|det L(xi)|` over a frequency range.
#[derive(Debug, Clone)]
pub struct SymbolScan {
    /// Smallest sampled `|det L(xi)|`.
    pub min_abs_det: f64,
    /// Frequency attaining the minimum.
    pub xi_at_min: f64,
    /// Relative deviation of `L(0)` from an independently recomputed
    /// finite-difference Jacobian of the metric gradient.
    pub jacobian_rel_error: f64,
}

/// Samples `|det L(xi)|` at `n` uniform frequencies on `[-xi_max, xi_max]`
/// and cross-checks `L(0)` against a fresh finite-difference Jacobian
/// computed with a different step.
pub fn hyperbolicity_scan(
    sys: &System,
    z: &DVector<f64>,
    xi_max: f64,
    n: usize,
) -> Result<SymbolScan> {
    if !(xi_max > 0.0) || n < 3 {
        return Err(Error::config(
            "scan",
            "need xi_max > 0 and at least 3 sample points",
        ));
    }
    let lin = Linearisation::at(sys, z)?;
    let mut min_abs_det = f64::INFINITY;
    let mut xi_at_min = 0.0;
    for k in 0..n {
        let xi = -xi_max + 2.0 * xi_max * k as f64 / (n - 1) as f64;
        let det = lin.eval(xi).determinant().norm();
        if det < min_abs_det {
            min_abs_det = det;
            xi_at_min = xi;
        }
    }
    let fresh = metric_gradient_jacobian(sys, z, 1e-6)?;
    let diff = (lin.jacobian_zero() - &fresh).norm();
    let jacobian_rel_error = diff / fresh.norm().max(1.0);
    Ok(SymbolScan {
        min_abs_det,
        xi_at_min,
        jacobian_rel_error,
    })
}

/// Index of the linearised operator between two hyperbolic constant
/// solutions: the Morse index difference `m(z_minus) - m(z_plus)`.
pub fn fredholm_index(z_minus: &CriticalPoint, z_plus: &CriticalPoint) -> Result<i64> {
    for (side, p) in [("minus", z_minus), ("plus", z_plus)] {
        if !p.hyperbolic {
            return Err(Error::Precondition(format!(
                "endpoint on the {side} side is not hyperbolic (margin {:.3e})",
                p.margin
            )));
        }
    }
    Ok(z_minus.index as i64 - z_plus.index as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{classify, find_critical_points};
    use crate::system::builtin::*;
    use crate::system::{CouplingMap, Metric, Potential, System};
    use approx::assert_relative_eq;

    #[test]
    fn scalar_symbol_closed_form() {
        // eps = 0.5 well at z = sqrt(0.5): L(xi) = i xi + 0.5/(1+xi^2) + 0.5.
        let sys = double_well(0.5, 0.0, 1.0);
        let z = DVector::from_element(1, (0.5f64).sqrt());
        let lin = Linearisation::at(&sys, &z).unwrap();
        for xi in [0.0, 0.4, 2.0, -7.5] {
            let l = lin.eval(xi)[(0, 0)];
            assert_relative_eq!(l.re, 0.5 / (1.0 + xi * xi) + 0.5, epsilon = 1e-9);
            assert_relative_eq!(l.im, xi, epsilon = 1e-14);
        }
    }

    #[test]
    fn scan_minimum_at_zero_equals_hessian() {
        let sys = double_well(0.5, 0.0, 1.0);
        let z = DVector::from_element(1, (0.5f64).sqrt());
        let scan = hyperbolicity_scan(&sys, &z, 50.0, 401).unwrap();
        assert_relative_eq!(scan.min_abs_det, 1.0, epsilon = 1e-6);
        assert_relative_eq!(scan.xi_at_min, 0.0, epsilon = 1e-12);
        assert!(scan.jacobian_rel_error <= 1e-6);
    }

    #[test]
    fn non_critical_base_point_rejected() {
        let sys = double_well(0.5, 0.0, 1.0);
        let z = DVector::from_element(1, 0.3);
        assert!(matches!(
            Linearisation::at(&sys, &z),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn planar_symbol_matches_finite_differences() {
        let sys = coupled_pair(1.0);
        let pts = find_critical_points(&sys, &[(-1.5, 1.5), (-1.5, 1.5)], 7).unwrap();
        assert!(!pts.is_empty());
        for p in &pts {
            let scan = hyperbolicity_scan(&sys, &p.state(), 50.0, 201).unwrap();
            assert!(scan.jacobian_rel_error <= 1e-6);
            if p.hyperbolic {
                assert!(scan.min_abs_det > 1e-8);
            }
        }
    }

    #[test]
    fn scaled_metric_scales_symbol() {
        let kernel = crate::kernel::Kernel::new(
            Some(crate::kernel::ContinuousKernel::Exponential {
                amplitude: 0.05,
                rate: 1.0,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            0.9,
            None,
        )
        .unwrap();
        let sys = System::new(
            1,
            CouplingMap::Identity,
            Potential::Polynomial {
                poly: crate::poly::Polynomial::univariate(&[0.0, 0.0, -0.5, 0.0, 0.25]),
            },
            Metric::ScaledIdentity { factor: 2.0 },
            kernel,
            1.0,
        )
        .unwrap();
        // h'(z) = 0.1 z + z^3 - z; root sqrt(0.9), h'' = 0.1 + 3 z^2 - 1 = 1.8.
        let z = DVector::from_element(1, (0.9f64).sqrt());
        let lin = Linearisation::at(&sys, &z).unwrap();
        assert_relative_eq!(lin.jacobian_zero()[(0, 0)], 0.9, epsilon = 1e-8);
    }

    #[test]
    fn exponent_matrix_agrees_with_symbol_at_zero() {
        let sys = coupled_pair(0.7);
        let pts = find_critical_points(&sys, &[(-1.5, 1.5), (-1.5, 1.5)], 7).unwrap();
        let p = pts.first().unwrap();
        let lin = Linearisation::at(&sys, &p.state()).unwrap();
        let at_zero = lin.exponent_eval(0.0).unwrap();
        let l0 = lin.eval(0.0);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(at_zero[(i, j)], l0[(i, j)].re, epsilon = 1e-12);
            }
        }
        // outside the transform strip of the rate-2 exponential
        assert!(lin.exponent_eval(2.3).is_err());
    }

    #[test]
    fn index_differences() {
        let sys = double_well(0.1, 0.0, 1.0);
        let root = (0.9f64).sqrt();
        let saddle = classify(&sys, DVector::from_element(1, 0.0)).unwrap();
        let well = classify(&sys, DVector::from_element(1, root)).unwrap();
        assert_eq!(fredholm_index(&saddle, &well).unwrap(), 1);
        assert_eq!(fredholm_index(&well, &saddle).unwrap(), -1);
        assert_eq!(fredholm_index(&well, &well).unwrap(), 0);

        let mut degenerate = well.clone();
        degenerate.hyperbolic = false;
        assert!(fredholm_index(&saddle, &degenerate).is_err());
    }
}

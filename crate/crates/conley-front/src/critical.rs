use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::system::System;
use crate::{Error, Result};

/// Margin below which a critical point is reported as non-hyperbolic.
pub const HYPERBOLICITY_MARGIN: f64 = 1e-8;

/// Gradient norm at which the Newton iteration accepts a critical point.
pub const GRADIENT_TOLERANCE: f64 = 1e-10;

/// A constant solution `z` of the travelling-profile equation together with
/// its Morse data under the reduced potential.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    /// Location in state space.
    pub point: Vec<f64>,
    /// Reduced potential value `h(z)`.
    pub value: f64,
    /// Euclidean norm of `grad h` at the accepted point.
    pub gradient_norm: f64,
    /// Morse index: number of negative eigenvalues of the pencil
    /// `Hess h(z) v = lambda G(z) v`.
    pub index: usize,
    /// Smallest absolute pencil eigenvalue.
    pub margin: f64,
    /// Whether the margin clears [`HYPERBOLICITY_MARGIN`].
    pub hyperbolic: bool,
}

impl CriticalPoint {
    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.point)
    }
}

/// Hessian of the reduced potential by central differences of the analytic
/// gradient, symmetrized.
pub fn hessian(sys: &System, z: &DVector<f64>) -> DMatrix<f64> {
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * (1.0 + z[j].abs());
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += step;
        zm[j] -= step;
        let col = (sys.reduced_gradient(&zp) - sys.reduced_gradient(&zm)) / (2.0 * step);
        h.set_column(j, &col);
    }
    let ht = h.transpose();
    (h + ht) * 0.5
}

/// Solves the symmetric pencil `H v = lambda G v` by reducing with the
/// Cholesky factor of `G`; returns the eigenvalues in ascending order.
pub fn pencil_eigenvalues(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("metric matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("metric Cholesky factor is singular".into()))?;
    let reduced = &l_inv * h * l_inv.transpose();
    let sym = (&reduced + reduced.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eigs)
}

/// Morse index and hyperbolicity margin of the reduced potential at `z`.
pub fn morse_data(sys: &System, z: &DVector<f64>) -> Result<(usize, f64)> {
    let h = hessian(sys, z);
    let g = sys.metric_matrix(z)?;
    let eigs = pencil_eigenvalues(&h, &g)?;
    let index = eigs.iter().filter(|&&ev| ev < 0.0).count();
    let margin = eigs.iter().fold(f64::INFINITY, |m, ev| m.min(ev.abs()));
    Ok((index, margin))
}

/// Packages a state known to satisfy `grad h = 0` (to tolerance) into a
/// classified critical point.
pub fn classify(sys: &System, z: DVector<f64>) -> Result<CriticalPoint> {
    let gradient_norm = sys.reduced_gradient(&z).norm();
    let (index, margin) = morse_data(sys, &z)?;
    Ok(CriticalPoint {
        value: sys.reduced_potential(&z),
        point: z.iter().copied().collect(),
        gradient_norm,
        index,
        margin,
        hyperbolic: margin > HYPERBOLICITY_MARGIN,
    })
}

/// Re-converges a critical point from a nearby seed, searching within
/// `radius` of it in every coordinate. Used when a parameter change moves a
/// known critical point.
pub fn refine_critical(sys: &System, seed: &DVector<f64>, radius: f64) -> Result<CriticalPoint> {
    let bounds: Vec<(f64, f64)> = seed.iter().map(|v| (v - radius, v + radius)).collect();
    let z = newton_from_seed(sys, seed.clone(), &bounds).ok_or_else(|| {
        Error::Numeric(format!(
            "no critical point within {radius} of {:?}",
            seed.iter().copied().collect::<Vec<_>>()
        ))
    })?;
    classify(sys, z)
}

/// Damped Newton iteration on `grad h` from one seed. Returns the converged
/// state or `None` when the iteration stalls or leaves the inflated box.
fn newton_from_seed(sys: &System, seed: DVector<f64>, bounds: &[(f64, f64)]) -> Option<DVector<f64>> {
    let mut z = seed;
    let mut gnorm = sys.reduced_gradient(&z).norm();
    for _ in 0..100 {
        if gnorm <= GRADIENT_TOLERANCE {
            return polish(sys, z, bounds);
        }
        let grad = sys.reduced_gradient(&z);
        let hess = hessian(sys, &z);
        let delta = hess.full_piv_lu().solve(&(-&grad))?;
        if !delta.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..=8 {
            let trial = &z + &delta * scale;
            let tnorm = sys.reduced_gradient(&trial).norm();
            if tnorm < gnorm {
                z = trial;
                gnorm = tnorm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || !in_box(&z, bounds, 1.0) {
            return None;
        }
    }
    if gnorm <= GRADIENT_TOLERANCE {
        polish(sys, z, bounds)
    } else {
        None
    }
}

/// Extra full Newton steps while they strictly reduce the gradient norm;
/// sharpens nearly converged points without risking divergence.
fn polish(sys: &System, mut z: DVector<f64>, bounds: &[(f64, f64)]) -> Option<DVector<f64>> {
    let mut gnorm = sys.reduced_gradient(&z).norm();
    for _ in 0..5 {
        if gnorm == 0.0 {
            break;
        }
        let grad = sys.reduced_gradient(&z);
        let hess = hessian(sys, &z);
        let Some(delta) = hess.full_piv_lu().solve(&(-&grad)) else {
            break;
        };
        let trial = &z + &delta;
        let tnorm = sys.reduced_gradient(&trial).norm();
        if tnorm < gnorm && trial.iter().all(|v| v.is_finite()) {
            z = trial;
            gnorm = tnorm;
        } else {
            break;
        }
    }
    in_box(&z, bounds, 1e-6).then_some(z)
}

fn in_box(z: &DVector<f64>, bounds: &[(f64, f64)], slack: f64) -> bool {
    z.iter()
        .zip(bounds)
        .all(|(v, (lo, hi))| *v >= lo - slack && *v <= hi + slack)
}

/// Finds the critical points of the reduced potential inside a box by damped
/// Newton iteration from a uniform seed lattice (`per_axis` seeds per
/// coordinate), deduplicates them and returns them sorted by coordinates.
pub fn find_critical_points(
    sys: &System,
    bounds: &[(f64, f64)],
    per_axis: usize,
) -> Result<Vec<CriticalPoint>> {
    let d = sys.dim();
    if bounds.len() != d {
        return Err(Error::config(
            "search.box",
            format!("expected {d} coordinate ranges, got {}", bounds.len()),
        ));
    }
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(
                format!("search.box[{j}]"),
                "bounds must be finite with lower < upper",
            ));
        }
    }
    if per_axis == 0 {
        return Err(Error::config("search.seeds_per_axis", "must be at least 1"));
    }
    let total = (per_axis as u64).checked_pow(d as u32).unwrap_or(u64::MAX);
    if total > 200_000 {
        return Err(Error::config(
            "search.seeds_per_axis",
            format!("{total} seeds exceed the limit of 200000"),
        ));
    }

    let coord = |j: usize, k: usize| {
        let (lo, hi) = bounds[j];
        if per_axis == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (per_axis - 1) as f64
        }
    };

    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let seed = DVector::from_fn(d, |j, _| coord(j, idx[j]));
        if let Some(z) = newton_from_seed(sys, seed, bounds) {
            let gn = sys.reduced_gradient(&z).norm();
            match found
                .iter()
                .position(|p| (p - &z).norm() <= 1e-6)
            {
                Some(k) => {
                    if gn < sys.reduced_gradient(&found[k]).norm() {
                        found[k] = z;
                    }
                }
                None => found.push(z),
            }
        }
        // advance the lattice counter
        let mut j = 0;
        loop {
            if j == d {
                break;
            }
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }

    found.sort_by(|a, b| {
        for j in 0..d {
            match a[j].partial_cmp(&b[j]).unwrap() {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    found.into_iter().map(|z| classify(sys, z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::builtin::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn double_well_three_critical_points() {
        // grad h(z) = beta eps z + z^3 - z; roots 0, +-sqrt(1 - beta eps).
        let sys = double_well(0.1, 0.0, 1.0);
        let pts = find_critical_points(&sys, &[(-2.0, 2.0)], 9).unwrap();
        assert_eq!(pts.len(), 3);
        let root = (0.9f64).sqrt();
        assert_relative_eq!(pts[0].point[0], -root, epsilon = 1e-9);
        assert_relative_eq!(pts[1].point[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(pts[2].point[0], root, epsilon = 1e-9);
        // h'' = beta eps + 3 z^2 - 1
        assert_eq!(pts[0].index, 0);
        assert_eq!(pts[1].index, 1);
        assert_eq!(pts[2].index, 0);
        assert_relative_eq!(pts[1].margin, 0.9, epsilon = 1e-6);
        assert_relative_eq!(pts[0].margin, 1.8, epsilon = 1e-5);
        assert!(pts.iter().all(|p| p.hyperbolic));
        assert!(pts.iter().all(|p| p.gradient_norm <= GRADIENT_TOLERANCE));
    }

    #[test]
    fn tilt_breaks_value_symmetry() {
        let sys = double_well(0.1, 0.05, 1.0);
        let pts = find_critical_points(&sys, &[(-2.0, 2.0)], 9).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts[0].value < pts[2].value);
    }

    #[test]
    fn planar_saddle_at_origin() {
        // F = rho^2 sin(2 theta) = 2xy: Hessian [[0, 2], [2, 0]], index 1.
        let sys = polar(2, 2, 0.0, 1.0);
        let pts = find_critical_points(&sys, &[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].point[0], 0.0, epsilon = 1e-10);
        assert_relative_eq!(pts[0].point[1], 0.0, epsilon = 1e-10);
        assert_eq!(pts[0].index, 1);
        assert_relative_eq!(pts[0].margin, 2.0, epsilon = 1e-4);
        assert!(pts[0].hyperbolic);
    }

    #[test]
    fn degenerate_origin_reported_non_hyperbolic() {
        // rho^4 sin(3 theta): the origin is critical with vanishing Hessian.
        let sys = polar(3, 4, 0.0, 1.0);
        let pts = find_critical_points(&sys, &[(-1.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert!(pts
            .iter()
            .any(|p| p.state().norm() <= 1e-8 && !p.hyperbolic));
    }

    #[test]
    fn scaled_metric_divides_pencil_eigenvalues() {
        let h = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, -2.0]);
        let g4 = DMatrix::identity(2, 2) * 4.0;
        let plain = pencil_eigenvalues(&h, &DMatrix::identity(2, 2)).unwrap();
        let scaled = pencil_eigenvalues(&h, &g4).unwrap();
        for (a, b) in plain.iter().zip(&scaled) {
            assert_relative_eq!(a / 4.0, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn box_mismatch_rejected() {
        let sys = double_well(0.1, 0.0, 1.0);
        assert!(find_critical_points(&sys, &[(-1.0, 1.0), (-1.0, 1.0)], 3).is_err());
        assert!(find_critical_points(&sys, &[(2.0, -2.0)], 3).is_err());
    }

    proptest! {
        // For the scalar double well every reported point satisfies the
        // analytic equations and index formula.
        #[test]
        fn double_well_points_satisfy_analytic_conditions(
            eps in 0.01f64..0.8,
            tilt in -0.05f64..0.05,
        ) {
            let sys = double_well(eps, tilt, 1.0);
            let pts = find_critical_points(&sys, &[(-2.0, 2.0)], 7).unwrap();
            prop_assert!(!pts.is_empty());
            for p in &pts {
                let z = p.point[0];
                let grad = eps * z + z.powi(3) - z + tilt;
                prop_assert!(grad.abs() <= 1e-9);
                let second = eps + 3.0 * z * z - 1.0;
                let expected = usize::from(second < 0.0);
                if second.abs() > 1e-6 {
                    prop_assert_eq!(p.index, expected);
                }
            }
        }
    }
}

use nalgebra::DVector;

/// Smooth cutoff supported on `rho < y < 2 rho`:
/// `exp(-(1/ell) / (1 - (2y/rho - 3)^2))` inside the support, `0` outside.
/// The sharpness parameter `ell >= 1` pushes the plateau value toward 1.
pub fn cutoff(ell: u32, rho: f64, y: f64) -> f64 {
    assert!(ell >= 1, "sharpness parameter must be at least 1");
    assert!(rho > 0.0, "support radius must be positive");
    if y <= rho || y >= 2.0 * rho {
        return 0.0;
    }
    let t = 2.0 * y / rho - 3.0;
    let denom = 1.0 - t * t;
    (-1.0 / (ell as f64 * denom)).exp()
}

/// Radius of the localiser around `z`: one third of the distance to the
/// nearest other critical point, infinite when there is none.
pub fn rho_of(z: &DVector<f64>, critical_points: &[DVector<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for p in critical_points {
        let dist = (p - z).norm();
        if dist > 1e-12 {
            min = min.min(dist);
        }
    }
    min / 3.0
}

/// Annular bump around the critical point `z`, evaluated at a state `u`:
/// `cutoff(ell, rho(z), |u - z|)`. Identically zero when `z` has no
/// neighbouring critical point to set the radius.
pub fn sigma(ell: u32, z: &DVector<f64>, critical_points: &[DVector<f64>], u: &DVector<f64>) -> f64 {
    let rho = rho_of(z, critical_points);
    if !rho.is_finite() {
        return 0.0;
    }
    cutoff(ell, rho, (u - z).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn vanishes_outside_support() {
        assert_eq!(cutoff(3, 1.0, 0.5), 0.0);
        assert_eq!(cutoff(3, 1.0, 1.0), 0.0);
        assert_eq!(cutoff(3, 1.0, 2.0), 0.0);
        assert_eq!(cutoff(3, 1.0, 5.0), 0.0);
    }

    #[test]
    fn midpoint_value() {
        for ell in [1u32, 2, 10] {
            assert_relative_eq!(
                cutoff(ell, 2.0, 3.0),
                (-1.0 / ell as f64).exp(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn large_sharpness_approaches_one() {
        assert!(cutoff(1000, 1.0, 1.2) > 0.99);
    }

    #[test]
    fn sigma_of_isolated_point_is_zero() {
        let z = DVector::from_column_slice(&[0.0]);
        let u = DVector::from_column_slice(&[0.4]);
        assert_eq!(sigma(5, &z, &[z.clone()], &u), 0.0);
    }

    #[test]
    fn sigma_uses_third_of_nearest_distance() {
        let z = DVector::from_column_slice(&[0.0]);
        let other = DVector::from_column_slice(&[3.0]);
        let crit = [z.clone(), other];
        assert_relative_eq!(rho_of(&z, &crit), 1.0, epsilon = 1e-15);
        // |u - z| = 1.5 = 1.5 rho sits at the plateau centre.
        let u = DVector::from_column_slice(&[-1.5]);
        assert_relative_eq!(
            sigma(4, &z, &crit, &u),
            (-0.25f64).exp(),
            epsilon = 1e-15
        );
    }

    proptest! {
        #[test]
        fn bounded_between_zero_and_one(
            ell in 1u32..500,
            rho in 1e-3f64..1e3,
            y in -10.0f64..2e3,
        ) {
            let v = cutoff(ell, rho, y);
            prop_assert!((0.0..=1.0).contains(&v));
            if y <= rho || y >= 2.0 * rho {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}

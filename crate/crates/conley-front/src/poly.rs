use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One term `coeff * x_1^{e_1} ... x_d^{e_d}` of a multivariate polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// A multivariate polynomial in `dim` variables, stored as a sum of monomials.
///
/// Evaluation and differentiation are exact; the gradient is obtained by
/// termwise power-rule differentiation rather than finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        for (k, t) in terms.iter().enumerate() {
            if t.powers.len() != dim {
                return Err(Error::config(
                    format!("polynomial.terms[{k}].powers"),
                    format!("expected {dim} exponents, got {}", t.powers.len()),
                ));
            }
            if !t.coeff.is_finite() {
                return Err(Error::config(
                    format!("polynomial.terms[{k}].coeff"),
                    "coefficient must be finite",
                ));
            }
        }
        Ok(Polynomial { dim, terms })
    }

    /// The zero polynomial.
    pub fn zero(dim: usize) -> Self {
        Polynomial { dim, terms: vec![] }
    }

    /// Univariate helper: builds `sum_k coeffs[k] * x^k`.
    pub fn univariate(coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| Monomial {
                coeff: *c,
                powers: vec![k as u32],
            })
            .collect();
        Polynomial { dim: 1, terms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        self.terms
            .iter()
            .map(|t| {
                let mut v = t.coeff;
                for (i, &p) in t.powers.iter().enumerate() {
                    v *= z[i].powi(p as i32);
                }
                v
            })
            .sum()
    }

    /// Partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.powers[var] > 0)
            .map(|t| {
                let mut powers = t.powers.clone();
                let p = powers[var];
                powers[var] = p - 1;
                Monomial {
                    coeff: t.coeff * p as f64,
                    powers,
                }
            })
            .collect();
        Polynomial {
            dim: self.dim,
            terms,
        }
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| self.partial(i).eval(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn double_well_values_and_gradient() {
        // F(z) = z^4/4 - z^2/2
        let f = Polynomial::univariate(&[0.0, 0.0, -0.5, 0.0, 0.25]);
        let z = DVector::from_element(1, 2.0);
        assert_relative_eq!(f.eval(&z), 4.0 - 2.0);
        assert_relative_eq!(f.gradient(&z)[0], 8.0 - 2.0);
    }

    #[test]
    fn mixed_term_gradient() {
        // F(x, y) = 2 x y (x^2 + y^2) = 2 x^3 y + 2 x y^3
        let f = Polynomial::new(
            2,
            vec![
                Monomial {
                    coeff: 2.0,
                    powers: vec![3, 1],
                },
                Monomial {
                    coeff: 2.0,
                    powers: vec![1, 3],
                },
            ],
        )
        .unwrap();
        let z = DVector::from_column_slice(&[0.5, 0.5]);
        let g = f.gradient(&z);
        // dF/dx = 6 x^2 y + 2 y^3, dF/dy symmetric
        assert_relative_eq!(g[0], 6.0 * 0.125 + 2.0 * 0.125, epsilon = 1e-14);
        assert_relative_eq!(g[1], g[0], epsilon = 1e-14);
    }

    proptest! {
        // The analytic gradient matches a central finite difference at random
        // points; this pins the power-rule implementation.
        #[test]
        fn gradient_matches_finite_differences(
            x in -2.0f64..2.0,
            y in -2.0f64..2.0,
            c1 in -3.0f64..3.0,
            c2 in -3.0f64..3.0,
        ) {
            let f = Polynomial::new(2, vec![
                Monomial { coeff: c1, powers: vec![3, 1] },
                Monomial { coeff: c2, powers: vec![0, 4] },
                Monomial { coeff: 0.7, powers: vec![1, 1] },
            ]).unwrap();
            let z = DVector::from_column_slice(&[x, y]);
            let g = f.gradient(&z);
            let h = 1e-5;
            for var in 0..2 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[var] += h;
                zm[var] -= h;
                let fd = (f.eval(&zp) - f.eval(&zm)) / (2.0 * h);
                prop_assert!((g[var] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }
}

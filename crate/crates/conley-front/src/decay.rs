use nalgebra::DVector;
use serde::Serialize;

use crate::grid::Profile;
use crate::symbol::Linearisation;
use crate::system::System;
use crate::{Error, Result};

/// Characteristic exponents of the linearisation at a constant solution:
/// real roots of `det Lambda(mu)` inside the kernel's decay strip.
#[derive(Debug, Clone, Serialize)]
pub struct DecayRates {
    /// Half-width of the searched strip `(-eta, eta)`.
    pub strip: f64,
    /// Roots in ascending order.
    pub roots: Vec<f64>,
    /// Smallest positive root, governing decay toward the state as
    /// `x -> -infinity`; `None` means faster than the strip resolves.
    pub rate_minus: Option<f64>,
    /// Magnitude of the largest negative root, governing decay as
    /// `x -> +infinity`; `None` means faster than the strip resolves.
    pub rate_plus: Option<f64>,
}

/// Number of scan points for the sign-change search.
const SCAN_POINTS: usize = 400;

/// Finds the real characteristic exponents at the constant solution `z` by a
/// sign-change scan of `det Lambda(mu)` over the strip `(-eta0, eta0)`
/// followed by bisection.
pub fn characteristic_roots(sys: &System, z: &DVector<f64>) -> Result<DecayRates> {
    let lin = Linearisation::at(sys, z)?;
    let eta = sys.kernel().decay_rate();
    let margin = eta * 1e-6;
    let det = |mu: f64| -> Result<f64> { Ok(lin.exponent_eval(mu)?.determinant()) };

    let mut roots: Vec<f64> = Vec::new();
    let mut prev_mu = -eta + margin;
    let mut prev = det(prev_mu)?;
    for k in 1..SCAN_POINTS {
        let mu = -eta + margin + (2.0 * (eta - margin)) * k as f64 / (SCAN_POINTS - 1) as f64;
        let value = det(mu)?;
        if prev == 0.0 {
            roots.push(prev_mu);
        } else if prev * value < 0.0 {
            let mut lo = prev_mu;
            let mut hi = mu;
            let mut flo = prev;
            for _ in 0..90 {
                let mid = 0.5 * (lo + hi);
                let fm = det(mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = value;
        prev_mu = mu;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);

    let rate_minus = roots.iter().copied().filter(|r| *r > 0.0).fold(None, |m: Option<f64>, r| {
        Some(m.map_or(r, |v| v.min(r)))
    });
    let rate_plus = roots
        .iter()
        .copied()
        .filter(|r| *r < 0.0)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(-r, |v: f64| v.min(-r))));
    Ok(DecayRates {
        strip: eta,
        roots,
        rate_minus,
        rate_plus,
    })
}

/// Log-linear least-squares fit of the tail decay of a profile toward its
/// tail states, one rate per side, both reported positive. Uses the outer
/// quarter of the grid on each side, excluding nodes within one unit of the
/// boundary (clamped by the boundary condition) and nodes already at
/// round-off distance. `None` when too few nodes remain for a stable fit.
pub fn fit_tail_rates(u: &Profile) -> (Option<f64>, Option<f64>) {
    let Some((left, right)) = u.tails() else {
        return (None, None);
    };
    let grid = u.grid();
    let n = grid.len();
    let l = grid.half_width();
    let quarter = n / 4;

    let fit = |indices: &mut dyn Iterator<Item = usize>, tail: &DVector<f64>| -> Option<f64> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in indices {
            let x = grid.x(i);
            if l - x.abs() < 1.0 {
                continue;
            }
            let d = (u.node(i) - tail).norm();
            if d >= 1e-12 {
                xs.push(x);
                ys.push(d.ln());
            }
        }
        if xs.len() < 8 {
            return None;
        }
        let m = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|v| v * v).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let denom = m * sxx - sx * sx;
        if denom.abs() < 1e-12 {
            return None;
        }
        Some((m * sxy - sx * sy) / denom)
    };

    let minus = fit(&mut (0..quarter), left).map(|slope| slope);
    let plus = fit(&mut ((n - quarter)..n), right).map(|slope| -slope);
    (minus.filter(|r| *r > 0.0), plus.filter(|r| *r > 0.0))
}

/// Compares fitted tail rates against the characteristic predictions at the
/// two tail states; relative deviations, `None` where either side lacks a
/// prediction or a fit.
pub fn rate_agreement(
    fitted: (Option<f64>, Option<f64>),
    minus_rates: &DecayRates,
    plus_rates: &DecayRates,
) -> (Option<f64>, Option<f64>) {
    let rel = |fit: Option<f64>, pred: Option<f64>| match (fit, pred) {
        (Some(f), Some(p)) if p > 0.0 => Some((f - p).abs() / p),
        _ => None,
    };
    (
        rel(fitted.0, minus_rates.rate_minus),
        rel(fitted.1, plus_rates.rate_plus),
    )
}

/// Consistency check used by callers that need a hyperbolic base point
/// before trusting the characteristic roots.
pub fn ensure_hyperbolic(margin: f64) -> Result<()> {
    if margin > crate::critical::HYPERBOLICITY_MARGIN {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "decay prediction needs a hyperbolic state (margin {margin:.3e})"
        )))
    }
}

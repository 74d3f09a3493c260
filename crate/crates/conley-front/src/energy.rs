use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::grid::Profile;
use crate::kernel::ConvOperator;
use crate::system::System;
use crate::{Error, Result};

/// Kinetic energy, potential drop and shift-evaluated energy samples of a
/// profile with declared tails.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub e_kin: f64,
    /// `h(z_minus) - h(z_plus)`.
    pub delta_h: f64,
    /// `|2 e_kin - delta_h|`.
    pub identity_residual: f64,
    pub lyapunov_samples: Vec<(f64, f64)>,
}

/// Maximal intervals on which the profile keeps distance at least `rho` from
/// every constant solution.
#[derive(Debug, Clone, Serialize)]
pub struct SojournReport {
    pub rho: f64,
    pub intervals: Vec<(f64, f64)>,
    pub total_volume: f64,
}

/// Sup over interior nodes of the Euclidean norm of `u' + Phi(u)`, the
/// defect of the travelling-profile equation under central differences.
pub fn residual_with(sys: &System, op: &ConvOperator, u: &Profile) -> Result<f64> {
    let n = u.grid().len();
    if n < 3 {
        return Err(Error::Precondition(
            "residual needs at least 3 grid nodes".into(),
        ));
    }
    let phi = sys.phi_with(op, u)?;
    let du = u.derivative();
    let mut sup = 0.0f64;
    for i in 1..n - 1 {
        let mut sq = 0.0;
        for c in 0..u.dim() {
            let r = du[(i, c)] + phi[(i, c)];
            sq += r * r;
        }
        sup = sup.max(sq.sqrt());
    }
    Ok(sup)
}

/// [`residual_with`], building the kernel operator on the fly.
pub fn residual(sys: &System, u: &Profile) -> Result<f64> {
    let op = sys.kernel().operator(u.grid().dx())?;
    residual_with(sys, &op, u)
}

/// Nodal kinetic-energy density `1/2 u'^T G(u) u'`.
fn kinetic_density(sys: &System, u: &Profile) -> Result<Vec<f64>> {
    let n = u.grid().len();
    let du = u.derivative();
    let mut k = vec![0.0; n];
    for i in 0..n {
        let ui = u.node(i);
        let g = sys.metric_matrix(&ui)?;
        let di = du.row(i).transpose();
        k[i] = 0.5 * di.dot(&(&g * &di));
    }
    Ok(k)
}

fn window_nodes(u: &Profile, a: f64, b: f64) -> Result<(usize, usize)> {
    let grid = u.grid();
    let l = grid.half_width();
    if !(a <= b) {
        return Err(Error::Precondition(format!(
            "window [{a}, {b}] is empty or reversed"
        )));
    }
    if a < -l - 1e-9 || b > l + 1e-9 {
        return Err(Error::Precondition(format!(
            "window [{a}, {b}] exceeds the grid [-{l}, {l}]"
        )));
    }
    let ia = grid.fractional_index(a).round().max(0.0) as usize;
    let ib = (grid.fractional_index(b).round() as usize).min(grid.len() - 1);
    Ok((ia, ib.max(ia)))
}

/// Trapezoid quadrature of the kinetic-energy density over the nodes
/// spanned by `[a, b]` (window endpoints snap to the nearest node).
pub fn kinetic_energy_window(sys: &System, u: &Profile, a: f64, b: f64) -> Result<f64> {
    let (ia, ib) = window_nodes(u, a, b)?;
    let k = kinetic_density(sys, u)?;
    Ok(trapezoid(&k[ia..=ib], u.grid().dx()))
}

/// Kinetic energy over the whole grid.
pub fn kinetic_energy(sys: &System, u: &Profile) -> Result<f64> {
    let k = kinetic_density(sys, u)?;
    Ok(trapezoid(&k, u.grid().dx()))
}

fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (0.5 * (values[0] + values[n - 1]) + inner)
        }
    }
}

/// Evaluator of the shift-parametrized energy
///
/// ```text
/// L(tau . u) = beta/2 * S(u) . N[S(u)] |_(x=tau) + F(u(tau)) - beta * B(tau . u)
/// ```
///
/// where the correction `B` integrates the transport of kernel mass across
/// the evaluation point:
///
/// ```text
/// B(v) = 1/2 int int_0^y S(v(x-y)) . N(y) DS(v(x)) v'(x) dx dy
///      + 1/2 sum_j int_0^(lambda_j) S(v(x-lambda_j)) . N_j DS(v(x)) v'(x) dx.
/// ```
///
/// On constant profiles `B` vanishes and the value reduces to the reduced
/// potential.
pub struct ShiftEnergy<'a> {
    system: &'a System,
    u: &'a Profile,
    op: ConvOperator,
    s: Profile,
    transport: Profile,
}

impl<'a> ShiftEnergy<'a> {
    pub fn new(sys: &'a System, u: &'a Profile) -> Result<Self> {
        if u.tails().is_none() {
            return Err(Error::Precondition(
                "shift energy needs declared tail states".into(),
            ));
        }
        let op = sys.kernel().operator(u.grid().dx())?;
        let s = sys.coupling_profile(u)?;
        let du = u.derivative();
        let n = u.grid().len();
        let out_dim = s.dim();
        let mut w = DMatrix::zeros(n, out_dim);
        for i in 0..n {
            let ds = sys.coupling_map().jacobian(&u.node(i));
            w.row_mut(i)
                .copy_from(&(ds * du.row(i).transpose()).transpose());
        }
        let transport = Profile::new(
            u.grid(),
            w,
            DVector::zeros(out_dim),
            DVector::zeros(out_dim),
        )?;
        Ok(ShiftEnergy {
            system: sys,
            u,
            op,
            s,
            transport,
        })
    }

    /// Inner integral `int_tau^(tau+y) S(v(x-y)) . W w(x) dx` by trapezoid
    /// on a subgrid at profile resolution; the orientation carries the sign
    /// of `y`.
    fn inner_integral(&self, tau: f64, y: f64, weight: &DMatrix<f64>) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let dx = self.u.grid().dx();
        let m = (y.abs() / dx).ceil().max(1.0) as usize;
        let h = y / m as f64;
        let f = |x: f64| -> Result<f64> {
            let sv = self.s.eval(x - y)?;
            let wv = self.transport.eval(x)?;
            Ok(sv.dot(&(weight * wv)))
        };
        let mut sum = 0.5 * (f(tau)? + f(tau + y)?);
        for q in 1..m {
            sum += f(tau + h * q as f64)?;
        }
        Ok(h * sum)
    }

    /// Evaluates the shifted energy at shift `tau`.
    pub fn eval(&self, tau: f64) -> Result<f64> {
        let u_tau = self.u.eval(tau)?;
        let mut value = self.system.potential().eval(&u_tau);
        let beta = self.system.coupling();
        if beta != 0.0 {
            let q = self.op.apply_at(&self.s, tau)?;
            let s_tau = self.system.coupling_map().eval(&u_tau);
            value += 0.5 * beta * s_tau.dot(&q);

            let mut correction = 0.0;
            if let Some(weight) = self.op.continuous_weight() {
                let half = self.op.half_width_cells() as i64;
                let dx = self.u.grid().dx();
                for k in -half..=half {
                    let mass = self.op.cell_mass(k);
                    if mass != 0.0 {
                        correction += mass * self.inner_integral(tau, k as f64 * dx, weight)?;
                    }
                }
            }
            for atom in self.op.atoms() {
                correction += self.inner_integral(tau, atom.shift, &atom.weight)?;
            }
            value -= 0.5 * beta * correction;
        }
        Ok(value)
    }
}

/// One-shot evaluation of the shift energy at a single `tau`.
pub fn lyapunov(sys: &System, u: &Profile, tau: f64) -> Result<f64> {
    ShiftEnergy::new(sys, u)?.eval(tau)
}

/// Checks the energy identity on a window of a solution profile: returns
/// `|int_a^b u'^T G(u) u' dx - (L(a . u) - L(b . u))|`. Requires the profile
/// to solve the equation to residual `1e-6`.
pub fn energy_identity(sys: &System, u: &Profile, a: f64, b: f64) -> Result<f64> {
    let res = residual(sys, u)?;
    if res > 1e-6 {
        return Err(Error::Precondition(format!(
            "energy identity needs a solution profile; residual {res:.3e} > 1e-6"
        )));
    }
    let twice_kin = 2.0 * kinetic_energy_window(sys, u, a, b)?;
    let grid = u.grid();
    let (ia, ib) = window_nodes(u, a, b)?;
    let energy = ShiftEnergy::new(sys, u)?;
    let drop = energy.eval(grid.x(ia))? - energy.eval(grid.x(ib))?;
    Ok((twice_kin - drop).abs())
}

/// Full report: kinetic energy, potential drop between the tail states, the
/// full-line identity residual, and shift-energy samples at the given taus.
pub fn energy_report(sys: &System, u: &Profile, taus: &[f64]) -> Result<EnergyReport> {
    let (left, right) = u
        .tails()
        .ok_or_else(|| Error::Precondition("energy report needs tail states".into()))?;
    let e_kin = kinetic_energy(sys, u)?;
    let delta_h = sys.reduced_potential(left) - sys.reduced_potential(right);
    let energy = ShiftEnergy::new(sys, u)?;
    let mut lyapunov_samples = Vec::with_capacity(taus.len());
    for &tau in taus {
        lyapunov_samples.push((tau, energy.eval(tau)?));
    }
    Ok(EnergyReport {
        e_kin,
        delta_h,
        identity_residual: (2.0 * e_kin - delta_h).abs(),
        lyapunov_samples,
    })
}

/// Maximal node intervals where the distance to the nearest constant
/// solution stays at least `rho`.
pub fn sojourn(u: &Profile, rho: f64, critical_points: &[DVector<f64>]) -> Result<SojournReport> {
    if !(rho > 0.0) {
        return Err(Error::Precondition("sojourn radius must be positive".into()));
    }
    let grid = u.grid();
    let n = grid.len();
    let far = |i: usize| -> bool {
        if critical_points.is_empty() {
            return true;
        }
        let ui = u.node(i);
        critical_points
            .iter()
            .map(|z| (&ui - z).norm())
            .fold(f64::INFINITY, f64::min)
            >= rho
    };
    let mut intervals = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..n {
        if far(i) {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            intervals.push((grid.x(s), grid.x(i - 1)));
        }
    }
    if let Some(s) = start {
        intervals.push((grid.x(s), grid.x(n - 1)));
    }
    let total_volume = intervals.iter().map(|(a, b)| b - a).sum();
    Ok(SojournReport {
        rho,
        intervals,
        total_volume,
    })
}

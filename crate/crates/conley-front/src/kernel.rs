use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use statrs::function::erf::erf;

use crate::grid::Profile;
use crate::{Error, Result};

/// Continuous part of a convolution kernel: a scalar profile times a constant
/// symmetric weight matrix, `N_c(x) = amplitude * profile(x) * weight`.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousKernel {
    /// `amplitude * exp(-rate * |x|) * weight`
    Exponential {
        amplitude: f64,
        rate: f64,
        weight: DMatrix<f64>,
    },
    /// `amplitude * exp(-rate * x^2) * weight`
    Gaussian {
        amplitude: f64,
        rate: f64,
        weight: DMatrix<f64>,
    },
    /// `amplitude * (1 - (x/radius)^2)^2 * weight` on `|x| <= radius`
    Bump {
        amplitude: f64,
        radius: f64,
        weight: DMatrix<f64>,
    },
}

/// A point mass `weight * v(x - shift)` in the convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub shift: f64,
    pub weight: DMatrix<f64>,
}

/// A symmetric, exponentially localised matrix convolution kernel
///
/// ```text
/// N[v](x) = \int N_c(y) v(x - y) dy + sum_j W_j v(x - shift_j)
/// ```
///
/// with `N_c(x) = N_c(-x) = N_c(x)^T` and atoms in mirrored pairs. The
/// `decay_rate` states the localisation rate the kernel is declared to have;
/// exponential families must decay strictly faster than it.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    continuous: Option<ContinuousKernel>,
    atoms: Vec<Atom>,
    decay_rate: f64,
    cutoff: Option<f64>,
}

fn check_weight(key: &str, w: &DMatrix<f64>) -> Result<usize> {
    if w.nrows() != w.ncols() || w.nrows() == 0 {
        return Err(Error::config(key, "weight matrix must be square"));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(key, "weight matrix must be finite"));
    }
    let scale = w.amax().max(1.0);
    for i in 0..w.nrows() {
        for j in 0..i {
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::config(key, "weight matrix must be symmetric"));
            }
        }
    }
    Ok(w.nrows())
}

impl ContinuousKernel {
    fn weight(&self) -> &DMatrix<f64> {
        match self {
            ContinuousKernel::Exponential { weight, .. }
            | ContinuousKernel::Gaussian { weight, .. }
            | ContinuousKernel::Bump { weight, .. } => weight,
        }
    }

    fn amplitude(&self) -> f64 {
        match self {
            ContinuousKernel::Exponential { amplitude, .. }
            | ContinuousKernel::Gaussian { amplitude, .. }
            | ContinuousKernel::Bump { amplitude, .. } => *amplitude,
        }
    }

    /// Scalar profile value at `x` (amplitude excluded).
    fn profile(&self, x: f64) -> f64 {
        match self {
            ContinuousKernel::Exponential { rate, .. } => (-rate * x.abs()).exp(),
            ContinuousKernel::Gaussian { rate, .. } => (-rate * x * x).exp(),
            ContinuousKernel::Bump { radius, .. } => {
                let t = x / radius;
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - t * t;
                    s * s
                }
            }
        }
    }

    /// Cumulative integral of the scalar profile, `\int_{-inf}^{t}`.
    fn cumulative(&self, t: f64) -> f64 {
        match self {
            ContinuousKernel::Exponential { rate: b, .. } => {
                if t <= 0.0 {
                    (b * t).exp() / b
                } else {
                    2.0 / b - (-b * t).exp() / b
                }
            }
            ContinuousKernel::Gaussian { rate: b, .. } => {
                0.5 * (std::f64::consts::PI / b).sqrt() * (1.0 + erf(b.sqrt() * t))
            }
            ContinuousKernel::Bump { radius: r, .. } => {
                let g = |x: f64| x - 2.0 * x.powi(3) / (3.0 * r * r) + x.powi(5) / (5.0 * r.powi(4));
                if t <= -r {
                    0.0
                } else if t >= *r {
                    16.0 * r / 15.0
                } else {
                    g(t) - g(-r)
                }
            }
        }
    }

    /// Total integral of the scalar profile.
    fn total_mass(&self) -> f64 {
        match self {
            ContinuousKernel::Exponential { rate: b, .. } => 2.0 / b,
            ContinuousKernel::Gaussian { rate: b, .. } => (std::f64::consts::PI / b).sqrt(),
            ContinuousKernel::Bump { radius: r, .. } => 16.0 * r / 15.0,
        }
    }

    /// Fourier transform of the scalar profile, `\int profile(x) e^{-i x xi} dx`
    /// (real and even by symmetry).
    fn profile_fourier(&self, xi: f64) -> f64 {
        match self {
            ContinuousKernel::Exponential { rate: b, .. } => 2.0 * b / (b * b + xi * xi),
            ContinuousKernel::Gaussian { rate: b, .. } => {
                (std::f64::consts::PI / b).sqrt() * (-xi * xi / (4.0 * b)).exp()
            }
            ContinuousKernel::Bump { radius: r, .. } => r * bump_cos_integral(xi * r),
        }
    }

    /// Two-sided real-exponent transform of the scalar profile,
    /// `\int profile(y) e^{-mu y} dy`, where finite.
    fn profile_exponent(&self, mu: f64) -> Result<f64> {
        match self {
            ContinuousKernel::Exponential { rate: b, .. } => {
                if mu.abs() >= *b {
                    return Err(Error::Precondition(format!(
                        "exponent transform diverges: |mu| = {} >= rate {}",
                        mu.abs(),
                        b
                    )));
                }
                Ok(1.0 / (b - mu) + 1.0 / (b + mu))
            }
            ContinuousKernel::Gaussian { rate: b, .. } => {
                Ok((std::f64::consts::PI / b).sqrt() * (mu * mu / (4.0 * b)).exp())
            }
            ContinuousKernel::Bump { radius: r, .. } => Ok(r * bump_cosh_integral(mu * r)),
        }
    }

    /// Largest `|mu|` for which the exponent transform is finite, if bounded.
    fn exponent_limit(&self) -> Option<f64> {
        match self {
            ContinuousKernel::Exponential { rate, .. } => Some(*rate),
            _ => None,
        }
    }
}

/// `\int_{-1}^{1} (1 - t^2)^2 cos(s t) dt`, series near 0, closed form else.
fn bump_cos_integral(s: f64) -> f64 {
    let s = s.abs();
    if s < 1.0 {
        bump_series(-s * s)
    } else {
        let (sin, cos) = (s.sin(), s.cos());
        2.0 * sin / s - 4.0 * ((s * s - 2.0) * sin + 2.0 * s * cos) / s.powi(3)
            + 2.0 * ((s.powi(4) - 12.0 * s * s + 24.0) * sin + (4.0 * s.powi(3) - 24.0 * s) * cos)
                / s.powi(5)
    }
}

/// `\int_{-1}^{1} (1 - t^2)^2 cosh(s t) dt`.
fn bump_cosh_integral(s: f64) -> f64 {
    let s = s.abs();
    if s < 1.0 {
        bump_series(s * s)
    } else {
        let (sinh, cosh) = (s.sinh(), s.cosh());
        2.0 * sinh / s - 4.0 * ((s * s + 2.0) * sinh - 2.0 * s * cosh) / s.powi(3)
            + 2.0
                * ((s.powi(4) + 12.0 * s * s + 24.0) * sinh - (4.0 * s.powi(3) + 24.0 * s) * cosh)
                / s.powi(5)
    }
}

/// `sum_k q^k / (2k)! * \int_{-1}^{1} (1 - t^2)^2 t^{2k} dt` with `q = ±s^2`.
fn bump_series(q: f64) -> f64 {
    let mut total = 0.0;
    let mut pow = 1.0; // q^k / (2k)!
    for k in 0..12u32 {
        let m = 2.0 * k as f64;
        let moment = 2.0 * (1.0 / (m + 1.0) - 2.0 / (m + 3.0) + 1.0 / (m + 5.0));
        total += pow * moment;
        pow *= q / ((m + 1.0) * (m + 2.0));
    }
    total
}

impl Kernel {
    /// Builds and validates a kernel.
    ///
    /// Requirements: weight matrices symmetric with a common dimension; atoms
    /// in mirrored pairs (`(shift, W)` paired with `(-shift, W)`; a single
    /// atom at shift 0 is its own mirror); `decay_rate > 0`; exponential
    /// profiles must decay strictly faster than `decay_rate`.
    pub fn new(
        continuous: Option<ContinuousKernel>,
        atoms: Vec<Atom>,
        decay_rate: f64,
        cutoff: Option<f64>,
    ) -> Result<Self> {
        if !(decay_rate.is_finite() && decay_rate > 0.0) {
            return Err(Error::config(
                "kernel.decay_rate",
                "localisation rate must be positive",
            ));
        }
        let mut dim: Option<usize> = None;
        let mut check_dim = |key: &str, d: usize| -> Result<()> {
            match dim {
                None => {
                    dim = Some(d);
                    Ok(())
                }
                Some(existing) if existing == d => Ok(()),
                Some(existing) => Err(Error::config(
                    key,
                    format!("weight dimension {d} conflicts with {existing}"),
                )),
            }
        };
        if let Some(c) = &continuous {
            let d = check_weight("kernel.continuous.weight", c.weight())?;
            check_dim("kernel.continuous.weight", d)?;
            match c {
                ContinuousKernel::Exponential { amplitude, rate, .. } => {
                    if !(rate.is_finite() && *rate > 0.0) {
                        return Err(Error::config(
                            "kernel.continuous.rate",
                            "exponential rate must be positive",
                        ));
                    }
                    if *amplitude != 0.0 && *rate <= decay_rate {
                        return Err(Error::config(
                            "kernel.continuous.rate",
                            format!(
                                "exponential rate {rate} must exceed the declared \
                                 localisation rate {decay_rate}"
                            ),
                        ));
                    }
                }
                ContinuousKernel::Gaussian { rate, .. } => {
                    if !(rate.is_finite() && *rate > 0.0) {
                        return Err(Error::config(
                            "kernel.continuous.rate",
                            "gaussian rate must be positive",
                        ));
                    }
                }
                ContinuousKernel::Bump { radius, .. } => {
                    if !(radius.is_finite() && *radius > 0.0) {
                        return Err(Error::config(
                            "kernel.continuous.radius",
                            "bump radius must be positive",
                        ));
                    }
                }
            }
            if !c.amplitude().is_finite() {
                return Err(Error::config(
                    "kernel.continuous.amplitude",
                    "amplitude must be finite",
                ));
            }
        }
        for (j, a) in atoms.iter().enumerate() {
            let d = check_weight(&format!("kernel.atoms[{j}].weight"), &a.weight)?;
            check_dim(&format!("kernel.atoms[{j}].weight"), d)?;
            if !a.shift.is_finite() {
                return Err(Error::config(
                    format!("kernel.atoms[{j}].shift"),
                    "shift must be finite",
                ));
            }
        }
        // Mirrored pairing: every atom must have a partner at the negated
        // shift with the same weight.
        for (j, a) in atoms.iter().enumerate() {
            let scale = a.weight.amax().max(1.0);
            let mirrored = atoms.iter().enumerate().any(|(k, b)| {
                (a.shift == 0.0 || k != j)
                    && (b.shift + a.shift).abs() <= 1e-12 * (1.0 + a.shift.abs())
                    && (&b.weight - &a.weight).amax() <= 1e-12 * scale
            });
            if !mirrored {
                return Err(Error::config(
                    format!("kernel.atoms[{j}]"),
                    format!(
                        "atom at shift {} has no mirrored partner at {}",
                        a.shift, -a.shift
                    ),
                ));
            }
        }
        if let Some(rc) = cutoff {
            if !(rc.is_finite() && rc > 0.0) {
                return Err(Error::config(
                    "kernel.cutoff",
                    "quadrature cutoff must be positive",
                ));
            }
        }
        if continuous.is_none() && atoms.is_empty() {
            return Err(Error::config(
                "kernel",
                "kernel must have a continuous part or atoms",
            ));
        }
        Ok(Kernel {
            continuous,
            atoms,
            decay_rate,
            cutoff,
        })
    }

    /// Kernel with no continuous part.
    pub fn atoms_only(atoms: Vec<Atom>, decay_rate: f64) -> Result<Self> {
        Kernel::new(None, atoms, decay_rate, None)
    }

    pub fn dim(&self) -> usize {
        if let Some(c) = &self.continuous {
            c.weight().nrows()
        } else {
            self.atoms[0].weight.nrows()
        }
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn continuous(&self) -> Option<&ContinuousKernel> {
        self.continuous.as_ref()
    }

    /// Pointwise kernel value `N_c(x)` of the continuous part (zero matrix if
    /// there is none).
    pub fn density(&self, x: f64) -> DMatrix<f64> {
        let d = self.dim();
        match &self.continuous {
            Some(c) => c.weight() * (c.amplitude() * c.profile(x)),
            None => DMatrix::zeros(d, d),
        }
    }

    /// The effective matrix: total kernel mass `\int N_c + sum_j W_j`.
    /// Acting on constant profiles, the convolution multiplies by it.
    pub fn effective_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut total = DMatrix::zeros(d, d);
        if let Some(c) = &self.continuous {
            total += c.weight() * (c.amplitude() * c.total_mass());
        }
        for a in &self.atoms {
            total += &a.weight;
        }
        total
    }

    /// Operator-norm mass `\int ||N_c(x)||_2 dx + sum_j ||W_j||_2`. This is the
    /// constant in the sup bound for the nonlocal term.
    pub fn mass_operator_norm(&self) -> f64 {
        let mut total = 0.0;
        if let Some(c) = &self.continuous {
            total += c.amplitude().abs() * c.total_mass() * spectral_norm(c.weight());
        }
        for a in &self.atoms {
            total += spectral_norm(&a.weight);
        }
        total
    }

    /// Fourier transform `\int N_c(x) e^{-i x xi} dx + sum_j W_j e^{-i shift_j xi}`.
    /// Real-valued because the kernel is even and the atoms mirrored; use
    /// [`Kernel::fourier_symbol_quadrature`] for an independent complex check.
    pub fn fourier_symbol(&self, xi: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut total = DMatrix::zeros(d, d);
        if let Some(c) = &self.continuous {
            total += c.weight() * (c.amplitude() * c.profile_fourier(xi));
        }
        for a in &self.atoms {
            total += &a.weight * (a.shift * xi).cos();
        }
        total
    }

    /// Fourier transform computed by composite Simpson quadrature of the
    /// density plus an explicit complex sum over the atoms. Serves as an
    /// independent check of `fourier_symbol`; its imaginary part measures how
    /// far the stored kernel is from even symmetry.
    pub fn fourier_symbol_quadrature(&self, xi: f64, panels: usize) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut total = DMatrix::<Complex64>::zeros(d, d);
        if let Some(c) = &self.continuous {
            let rc = self.quadrature_cutoff();
            let m = panels.max(8);
            let hstep = 2.0 * rc / (2 * m) as f64;
            for p in 0..2 * m + 1 {
                let x = -rc + p as f64 * hstep;
                let w = if p == 0 || p == 2 * m {
                    1.0
                } else if p % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let phase = Complex64::new(0.0, -x * xi).exp();
                let val = c.amplitude() * c.profile(x) * w * hstep / 3.0;
                for i in 0..d {
                    for j in 0..d {
                        total[(i, j)] += phase * (val * c.weight()[(i, j)]);
                    }
                }
            }
        }
        for a in &self.atoms {
            let phase = Complex64::new(0.0, -a.shift * xi).exp();
            for i in 0..d {
                for j in 0..d {
                    total[(i, j)] += phase * a.weight[(i, j)];
                }
            }
        }
        total
    }

    /// Real-exponent transform `\int N_c(y) e^{-mu y} dy + sum_j W_j e^{-mu shift_j}`.
    /// Fails where the integral diverges (exponential profiles need `|mu| < rate`).
    pub fn exponent_symbol(&self, mu: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut total = DMatrix::zeros(d, d);
        if let Some(c) = &self.continuous {
            if c.amplitude() != 0.0 {
                total += c.weight() * (c.amplitude() * c.profile_exponent(mu)?);
            }
        }
        for a in &self.atoms {
            total += &a.weight * (-mu * a.shift).exp();
        }
        Ok(total)
    }

    /// Largest `|mu|` (exclusive) for which [`Kernel::exponent_symbol`] is
    /// finite; `None` when unrestricted. Zero-amplitude parts do not restrict.
    pub fn exponent_limit(&self) -> Option<f64> {
        self.continuous.as_ref().and_then(|c| {
            if c.amplitude() == 0.0 {
                None
            } else {
                c.exponent_limit()
            }
        })
    }

    /// Truncation radius for quadrature of the continuous part: either the
    /// stored override or the smallest radius leaving residual mass below
    /// 1e-12 (computed from the closed-form cumulative).
    pub fn quadrature_cutoff(&self) -> f64 {
        if let Some(rc) = self.cutoff {
            return rc;
        }
        let Some(c) = &self.continuous else {
            return 0.0;
        };
        if let ContinuousKernel::Bump { radius, .. } = c {
            return *radius;
        }
        let scale = c.amplitude().abs() * spectral_norm(c.weight());
        if scale == 0.0 {
            return 0.0;
        }
        let tol = 1e-12;
        let tail = |r: f64| scale * (c.total_mass() - (c.cumulative(r) - c.cumulative(-r)));
        let mut hi = 1.0;
        while tail(hi) > tol && hi < 1e6 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Discretizes the kernel on the spacing `dx`, producing the operator used
    /// by convolution and by the front solver's Jacobian.
    pub fn operator(&self, dx: f64) -> Result<ConvOperator> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::Precondition("grid spacing must be positive".into()));
        }
        let d = self.dim();
        let continuous = match &self.continuous {
            Some(c) if c.amplitude() != 0.0 => {
                let rc = self.quadrature_cutoff();
                let k = ((rc / dx - 0.5).ceil().max(0.0)) as usize;
                // Cell k covers [(k - 1/2) dx, (k + 1/2) dx]; masses from the
                // closed-form cumulative telescope exactly to the total, so
                // constants are reproduced to rounding regardless of k.
                let mut masses = vec![0.0; 2 * k + 1];
                for (idx, m) in masses.iter_mut().enumerate() {
                    let off = idx as f64 - k as f64;
                    *m = c.cumulative((off + 0.5) * dx) - c.cumulative((off - 0.5) * dx);
                }
                let window = (k as f64 + 0.5) * dx;
                let mass_above = c.total_mass() - c.cumulative(window);
                let mass_below = c.cumulative(-window);
                Some(ContinuousOperator {
                    half_width_cells: k,
                    masses,
                    weight: c.weight() * c.amplitude(),
                    mass_above: mass_above * c.amplitude(),
                    mass_below: mass_below * c.amplitude(),
                })
            }
            _ => None,
        };
        Ok(ConvOperator {
            dx,
            dim: d,
            continuous,
            atoms: self.atoms.clone(),
        })
    }
}

/// Spectral norm of a symmetric matrix.
pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[derive(Debug, Clone)]
struct ContinuousOperator {
    half_width_cells: usize,
    /// Cell masses of the scalar profile, index `k + half_width_cells`.
    masses: Vec<f64>,
    /// Amplitude times weight matrix.
    weight: DMatrix<f64>,
    /// Scalar profile mass beyond the window on the positive side (times amplitude).
    mass_above: f64,
    /// Same on the negative side.
    mass_below: f64,
}

/// A kernel discretized on a fixed spacing: scalar cell masses for the
/// continuous part plus the original atoms. Applying it to a profile computes
/// `N[v]` with constant-tail extension; the same weights drive the analytic
/// convolution block of the solver Jacobian.
#[derive(Debug, Clone)]
pub struct ConvOperator {
    dx: f64,
    dim: usize,
    continuous: Option<ContinuousOperator>,
    atoms: Vec<Atom>,
}

impl ConvOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Number of cells on each side of the continuous window.
    pub fn half_width_cells(&self) -> usize {
        self.continuous
            .as_ref()
            .map(|c| c.half_width_cells)
            .unwrap_or(0)
    }

    /// Scalar cell mass at signed offset `k` (zero outside the window).
    pub fn cell_mass(&self, k: i64) -> f64 {
        match &self.continuous {
            Some(c) => {
                let idx = k + c.half_width_cells as i64;
                if idx < 0 || idx as usize >= c.masses.len() {
                    0.0
                } else {
                    c.masses[idx as usize]
                }
            }
            None => 0.0,
        }
    }

    /// Amplitude-scaled weight matrix of the continuous part.
    pub fn continuous_weight(&self) -> Option<&DMatrix<f64>> {
        self.continuous.as_ref().map(|c| &c.weight)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Applies the operator to a profile, returning `N[v]` at every node.
    ///
    /// `v` must have the kernel dimension and carry tail constants whenever
    /// the window or an atom reaches outside the grid.
    pub fn apply(&self, v: &Profile) -> Result<DMatrix<f64>> {
        if v.dim() != self.dim {
            return Err(Error::Precondition(format!(
                "profile dimension {} does not match kernel dimension {}",
                v.dim(),
                self.dim
            )));
        }
        let n = v.grid().len();
        let mut out = DMatrix::zeros(n, self.dim);
        let mut acc = DVector::zeros(self.dim);
        for i in 0..n {
            self.apply_row(v, i as i64, 0.0, &mut acc)?;
            out.row_mut(i).copy_from(&acc.transpose());
        }
        Ok(out)
    }

    /// Applies the operator at one arbitrary coordinate `x` (profile values
    /// linearly interpolated between nodes).
    pub fn apply_at(&self, v: &Profile, x: f64) -> Result<DVector<f64>> {
        if v.dim() != self.dim {
            return Err(Error::Precondition(format!(
                "profile dimension {} does not match kernel dimension {}",
                v.dim(),
                self.dim
            )));
        }
        let t = v.grid().fractional_index(x);
        let base = t.floor();
        let frac = t - base;
        let mut acc = DVector::zeros(self.dim);
        if frac.abs() < 1e-13 {
            self.apply_row(v, base as i64, 0.0, &mut acc)?;
        } else {
            self.apply_row(v, base as i64, frac, &mut acc)?;
        }
        Ok(acc)
    }

    /// Core evaluation at fractional node position `i + frac`.
    fn apply_row(&self, v: &Profile, i: i64, frac: f64, out: &mut DVector<f64>) -> Result<()> {
        out.fill(0.0);
        let n = v.grid().len() as i64;
        let values = v.values();

        if let Some(c) = &self.continuous {
            let k = c.half_width_cells as i64;
            let mut sum = DVector::zeros(self.dim);
            // N[v](x_i) picks v at x_i - y; cell offset o contributes v_{i-o}.
            for o in -k..=k {
                let mass = c.masses[(o + k) as usize];
                let j = i - o;
                self.accumulate_node(values, v, j, frac, mass, &mut sum)?;
            }
            // Kernel mass beyond the window: positive y pairs with the left
            // tail of v, negative y with the right tail.
            if c.mass_above != 0.0 {
                let (left, _) = tails(v)?;
                sum += left * c.mass_above;
            }
            if c.mass_below != 0.0 {
                let (_, right) = tails(v)?;
                sum += right * c.mass_below;
            }
            out.gemv(1.0, &c.weight, &sum, 1.0);
        }

        for a in &self.atoms {
            // v(x - shift) at x = x_i + frac * dx.
            let t = i as f64 + frac - a.shift / self.dx;
            let val = self.interpolate(v, t, n)?;
            out.gemv(1.0, &a.weight, &val, 1.0);
        }
        Ok(())
    }

    fn accumulate_node(
        &self,
        values: &DMatrix<f64>,
        v: &Profile,
        j: i64,
        frac: f64,
        mass: f64,
        sum: &mut DVector<f64>,
    ) -> Result<()> {
        let n = values.nrows() as i64;
        if frac == 0.0 {
            if j < 0 {
                let (left, _) = tails(v)?;
                sum.axpy(mass, left, 1.0);
            } else if j >= n {
                let (_, right) = tails(v)?;
                sum.axpy(mass, right, 1.0);
            } else {
                let row = values.row(j as usize);
                for c in 0..self.dim {
                    sum[c] += mass * row[c];
                }
            }
        } else {
            let val = self.interpolate(v, j as f64 + frac, n)?;
            sum.axpy(mass, &val, 1.0);
        }
        Ok(())
    }

    fn interpolate(&self, v: &Profile, t: f64, n: i64) -> Result<DVector<f64>> {
        if t <= -1e-12 {
            let (left, _) = tails(v)?;
            return Ok(left.clone());
        }
        let last = (n - 1) as f64;
        if t >= last + 1e-12 {
            let (_, right) = tails(v)?;
            return Ok(right.clone());
        }
        let t = t.clamp(0.0, last);
        let i = (t.floor() as usize).min(n as usize - 2);
        let frac = t - i as f64;
        Ok(v.node(i) * (1.0 - frac) + v.node(i + 1) * frac)
    }
}

fn tails(v: &Profile) -> Result<(&DVector<f64>, &DVector<f64>)> {
    v.tails().ok_or_else(|| {
        Error::Precondition(
            "convolution reaches outside the grid but the profile has no tail constants".into(),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exp_kernel(a: f64, b: f64) -> Kernel {
        Kernel::new(
            Some(ContinuousKernel::Exponential {
                amplitude: a,
                rate: b,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            0.5 * b,
            None,
        )
        .unwrap()
    }

    /// Adaptive Simpson quadrature; the independent oracle for convolution
    /// values of smooth profiles.
    fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
            }
        }
        let whole = simpson(&f, a, b);
        rec(&f, a, b, whole, tol, 40)
    }

    #[test]
    fn effective_matrix_exponential_plus_atom() {
        // (1/2) e^{-|x|} integrates to 1; atoms at +-1 with weight 1 add 2.
        let kernel = Kernel::new(
            Some(ContinuousKernel::Exponential {
                amplitude: 0.5,
                rate: 1.0,
                weight: DMatrix::identity(1, 1),
            }),
            vec![
                Atom {
                    shift: 1.0,
                    weight: DMatrix::identity(1, 1),
                },
                Atom {
                    shift: -1.0,
                    weight: DMatrix::identity(1, 1),
                },
            ],
            0.5,
            None,
        )
        .unwrap();
        assert_relative_eq!(kernel.effective_matrix()[(0, 0)], 3.0, epsilon = 1e-14);

        // Cross-check the continuous mass against quadrature.
        let quad = adaptive_simpson(|x| 0.5 * (-x.abs()).exp(), -40.0, 40.0, 1e-13);
        assert_relative_eq!(quad, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_profiles_are_eigenfunctions_to_rounding() {
        let grid = Grid::new(20.0, 801).unwrap();
        for kernel in [
            exp_kernel(0.5, 1.0),
            Kernel::new(
                Some(ContinuousKernel::Gaussian {
                    amplitude: 0.3,
                    rate: 2.0,
                    weight: DMatrix::identity(1, 1),
                }),
                vec![],
                1.0,
                None,
            )
            .unwrap(),
            Kernel::new(
                Some(ContinuousKernel::Bump {
                    amplitude: 1.2,
                    radius: 2.5,
                    weight: DMatrix::identity(1, 1),
                }),
                vec![],
                1.0,
                None,
            )
            .unwrap(),
        ] {
            let op = kernel.operator(grid.dx()).unwrap();
            let z = DVector::from_element(1, -1.37);
            let v = Profile::constant(grid, &z);
            let out = op.apply(&v).unwrap();
            let expected = kernel.effective_matrix()[(0, 0)] * -1.37;
            for i in 0..grid.len() {
                assert_relative_eq!(out[(i, 0)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn convolution_of_tanh_matches_adaptive_quadrature() {
        // N = (1/2) e^{-|x|}, v = tanh. Independent oracle: adaptive Simpson
        // of N(y) tanh(x - y) over a window wide enough for 1e-9 tails.
        let kernel = exp_kernel(0.5, 1.0);
        let grid = Grid::new(40.0, 40001).unwrap();
        let v = Profile::new(
            grid,
            DMatrix::from_fn(grid.len(), 1, |i, _| grid.x(i).tanh()),
            DVector::from_element(1, -1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let op = kernel.operator(grid.dx()).unwrap();
        for &x in &[1.0, 5.0, 20.0] {
            let got = op.apply_at(&v, x).unwrap()[0];
            let oracle =
                adaptive_simpson(|y| 0.5 * (-y.abs()).exp() * (x - y).tanh(), -45.0, 45.0, 1e-13);
            assert!(
                (got - oracle).abs() <= 1e-6,
                "x = {x}: got {got}, oracle {oracle}"
            );
        }
        // Odd symmetry: exact zero at the origin up to rounding.
        assert!(op.apply_at(&v, 0.0).unwrap()[0].abs() < 1e-14);
    }

    #[test]
    fn atom_only_kernel_shifts_profile() {
        let kernel = Kernel::atoms_only(
            vec![
                Atom {
                    shift: 2.0,
                    weight: DMatrix::identity(1, 1) * 0.5,
                },
                Atom {
                    shift: -2.0,
                    weight: DMatrix::identity(1, 1) * 0.5,
                },
            ],
            1.0,
        )
        .unwrap();
        let grid = Grid::new(10.0, 2001).unwrap();
        let v = Profile::sample(grid, 1, |x| DVector::from_element(1, x.tanh()));
        let op = kernel.operator(grid.dx()).unwrap();
        let got = op.apply_at(&v, 1.0).unwrap()[0];
        let expected = 0.5 * ((1.0f64 - 2.0).tanh() + (1.0f64 + 2.0).tanh());
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn missing_tails_error_when_atom_reaches_outside() {
        let kernel = Kernel::atoms_only(
            vec![
                Atom {
                    shift: 30.0,
                    weight: DMatrix::identity(1, 1),
                },
                Atom {
                    shift: -30.0,
                    weight: DMatrix::identity(1, 1),
                },
            ],
            1.0,
        )
        .unwrap();
        let grid = Grid::new(10.0, 101).unwrap();
        let v = Profile::without_tails(grid, DMatrix::zeros(101, 1)).unwrap();
        let op = kernel.operator(grid.dx()).unwrap();
        assert!(op.apply(&v).is_err());
    }

    #[test]
    fn unmirrored_atoms_rejected() {
        let err = Kernel::atoms_only(
            vec![Atom {
                shift: 1.0,
                weight: DMatrix::identity(1, 1),
            }],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn exponential_rate_must_clear_decay_rate() {
        let err = Kernel::new(
            Some(ContinuousKernel::Exponential {
                amplitude: 1.0,
                rate: 0.5,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            0.9,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn fourier_symbol_closed_forms() {
        let kernel = exp_kernel(0.5, 1.0);
        // (1/2) * 2b/(b^2 + xi^2) at b = 1.
        assert_relative_eq!(
            kernel.fourier_symbol(0.0)[(0, 0)],
            1.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            kernel.fourier_symbol(2.0)[(0, 0)],
            1.0 / 5.0,
            epsilon = 1e-14
        );
        // Quadrature crosscheck, real part matches, imaginary part ~ 0.
        for &xi in &[0.0, 0.7, 2.0, 11.0] {
            let q = kernel.fourier_symbol_quadrature(xi, 4000)[(0, 0)];
            assert_relative_eq!(q.re, kernel.fourier_symbol(xi)[(0, 0)], epsilon = 1e-8);
            assert!(q.im.abs() < 1e-14);
        }
    }

    #[test]
    fn exponent_symbol_matches_effective_matrix_at_zero() {
        let kernel = exp_kernel(0.5, 1.0);
        assert_relative_eq!(
            kernel.exponent_symbol(0.0).unwrap()[(0, 0)],
            kernel.effective_matrix()[(0, 0)],
            epsilon = 1e-14
        );
        // 1/(1 - mu^2) at a = 1/2, b = 1.
        assert_relative_eq!(
            kernel.exponent_symbol(0.5).unwrap()[(0, 0)],
            1.0 / (1.0 - 0.25),
            epsilon = 1e-14
        );
        assert!(kernel.exponent_symbol(1.0).is_err());
        assert_eq!(kernel.exponent_limit(), Some(1.0));
    }

    #[test]
    fn exponent_symbol_quadrature_crosscheck() {
        // Gaussian and bump against adaptive Simpson of profile * exp(-mu y).
        let gauss = Kernel::new(
            Some(ContinuousKernel::Gaussian {
                amplitude: 0.4,
                rate: 1.3,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            1.0,
            None,
        )
        .unwrap();
        let mu = 0.8;
        let oracle = adaptive_simpson(
            |y| 0.4 * (-1.3 * y * y).exp() * (-mu * y).exp(),
            -30.0,
            30.0,
            1e-13,
        );
        assert_relative_eq!(gauss.exponent_symbol(mu).unwrap()[(0, 0)], oracle, epsilon = 1e-9);

        let bump = Kernel::new(
            Some(ContinuousKernel::Bump {
                amplitude: 2.0,
                radius: 1.7,
                weight: DMatrix::identity(1, 1),
            }),
            vec![],
            1.0,
            None,
        )
        .unwrap();
        for &mu in &[0.05, 0.4, 2.5] {
            let oracle = adaptive_simpson(
                |y| 2.0 * bump.continuous().unwrap().profile(y) * (-mu * y).exp(),
                -1.7,
                1.7,
                1e-13,
            );
            assert_relative_eq!(bump.exponent_symbol(mu).unwrap()[(0, 0)], oracle, epsilon = 1e-9);
        }
        // Fourier of the bump against quadrature as well (series + closed form).
        for &xi in &[0.1, 0.9, 1.5, 6.0] {
            let oracle = adaptive_simpson(
                |y| 2.0 * bump.continuous().unwrap().profile(y) * (y * xi).cos(),
                -1.7,
                1.7,
                1e-13,
            );
            assert_relative_eq!(bump.fourier_symbol(xi)[(0, 0)], oracle, epsilon = 1e-9);
        }
    }

    proptest! {
        // Even symmetry of the density and of the closed-form transforms on
        // randomly parameterised kernels.
        #[test]
        fn density_and_transforms_are_even(
            a in 0.01f64..2.0,
            b in 0.2f64..3.0,
            x in -5.0f64..5.0,
            xi in -8.0f64..8.0,
        ) {
            let k = exp_kernel(a, b);
            prop_assert!((k.density(x)[(0,0)] - k.density(-x)[(0,0)]).abs() < 1e-15);
            prop_assert!(
                (k.fourier_symbol(xi)[(0,0)] - k.fourier_symbol(-xi)[(0,0)]).abs() < 1e-15
            );
            let mu = 0.9 * b * (x / 5.0);
            let p = k.exponent_symbol(mu).unwrap()[(0,0)];
            let m = k.exponent_symbol(-mu).unwrap()[(0,0)];
            prop_assert!((p - m).abs() <= 1e-12 * p.abs());
        }

        // Cell masses sum to the closed-form total together with the window
        // tails, for arbitrary spacings.
        #[test]
        fn cell_masses_telescope(dx in 0.005f64..0.4, a in 0.05f64..1.5, b in 0.3f64..2.5) {
            let k = exp_kernel(a, b);
            let op = k.operator(dx).unwrap();
            let kk = op.half_width_cells() as i64;
            let mut sum = 0.0;
            for o in -kk..=kk {
                sum += op.cell_mass(o);
            }
            let cont = k.continuous().unwrap();
            let total = cont.total_mass();
            let window = (kk as f64 + 0.5) * dx;
            let tails = total - (cont.cumulative(window) - cont.cumulative(-window));
            prop_assert!(((sum + tails) - total).abs() <= 1e-12 * total);
        }
    }
}

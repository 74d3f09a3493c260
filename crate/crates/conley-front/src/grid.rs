use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform grid on `[-L, L]` with an odd number of nodes, so that `x = 0` is a
/// node. Node `i` sits at `x_i = -L + i * dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    n: usize,
}

impl Grid {
    /// Creates a grid on `[-half_width, half_width]` with `n` nodes.
    ///
    /// `n` must be odd and at least 3 so that central differences and the
    /// centre-node phase condition are well defined.
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config("grid.L", "half-width must be positive"));
        }
        if n < 3 {
            return Err(Error::config("grid.n", "need at least 3 nodes"));
        }
        if n % 2 == 0 {
            return Err(Error::config(
                "grid.n",
                format!("node count must be odd so that x = 0 is a node, got {n}"),
            ));
        }
        Ok(Grid { half_width, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    /// Index of the node at `x = 0`.
    pub fn centre(&self) -> usize {
        (self.n - 1) / 2
    }

    /// All node coordinates.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Fractional index of coordinate `x`, i.e. `t` with `x = x_0 + t * dx`.
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x + self.half_width) / self.dx()
    }
}

/// A grid function with values in `R^d` and optional constant tail extensions.
///
/// The tails state the values the profile takes beyond the two grid ends; they
/// are what convolution and shift operations use when they reach outside
/// `[-L, L]`. Operations that must extend a profile fail on profiles without
/// tails.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    grid: Grid,
    /// Row `i` holds the value at node `i`; shape `n x d`.
    values: DMatrix<f64>,
    tails: Option<(DVector<f64>, DVector<f64>)>,
}

impl Profile {
    /// Builds a profile from nodal values (`n x d`) and tail constants.
    pub fn new(
        grid: Grid,
        values: DMatrix<f64>,
        tail_left: DVector<f64>,
        tail_right: DVector<f64>,
    ) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::Precondition(format!(
                "profile has {} rows but the grid has {} nodes",
                values.nrows(),
                grid.len()
            )));
        }
        let d = values.ncols();
        if tail_left.len() != d || tail_right.len() != d {
            return Err(Error::Precondition(format!(
                "tail dimensions {}/{} do not match the profile dimension {}",
                tail_left.len(),
                tail_right.len(),
                d
            )));
        }
        Ok(Profile {
            grid,
            values,
            tails: Some((tail_left, tail_right)),
        })
    }

    /// Builds a profile without tail extensions.
    pub fn without_tails(grid: Grid, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.len() {
            return Err(Error::Precondition(format!(
                "profile has {} rows but the grid has {} nodes",
                values.nrows(),
                grid.len()
            )));
        }
        Ok(Profile {
            grid,
            values,
            tails: None,
        })
    }

    /// Samples a function of `x` on the grid. The first and last nodal values
    /// are reused as tails; pass explicit tails via [`Profile::new`] when the
    /// sampled function has not levelled off at the grid ends.
    pub fn sample<F>(grid: Grid, dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let mut values = DMatrix::zeros(grid.len(), dim);
        for i in 0..grid.len() {
            values.row_mut(i).copy_from(&f(grid.x(i)).transpose());
        }
        let tails = Some((
            values.row(0).transpose(),
            values.row(grid.len() - 1).transpose(),
        ));
        Profile {
            grid,
            values,
            tails,
        }
    }

    /// The constant profile `u = z` with matching tails.
    pub fn constant(grid: Grid, z: &DVector<f64>) -> Self {
        let n = grid.len();
        let values = DMatrix::from_fn(n, z.len(), |_, c| z[c]);
        Profile {
            grid,
            values,
            tails: Some((z.clone(), z.clone())),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }

    pub fn tails(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        self.tails.as_ref().map(|(a, b)| (a, b))
    }

    pub fn set_tails(&mut self, left: DVector<f64>, right: DVector<f64>) {
        self.tails = Some((left, right));
    }

    fn tails_or_err(&self) -> Result<(&DVector<f64>, &DVector<f64>)> {
        self.tails().ok_or_else(|| {
            Error::Precondition(
                "operation reaches outside the grid but the profile has no tail constants".into(),
            )
        })
    }

    /// Value at node `i` as a column vector.
    pub fn node(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Value at signed node index, using tails outside `[0, n)`.
    pub fn node_extended(&self, i: i64) -> Result<DVector<f64>> {
        if i < 0 {
            Ok(self.tails_or_err()?.0.clone())
        } else if i as usize >= self.grid.len() {
            Ok(self.tails_or_err()?.1.clone())
        } else {
            Ok(self.node(i as usize))
        }
    }

    /// Linear interpolation at an arbitrary coordinate, tails outside.
    pub fn eval(&self, x: f64) -> Result<DVector<f64>> {
        let t = self.grid.fractional_index(x);
        if t <= 0.0 {
            if t < -1e-12 {
                return Ok(self.tails_or_err()?.0.clone());
            }
            return Ok(self.node(0));
        }
        let last = (self.grid.len() - 1) as f64;
        if t >= last {
            if t > last + 1e-12 {
                return Ok(self.tails_or_err()?.1.clone());
            }
            return Ok(self.node(self.grid.len() - 1));
        }
        let i = t.floor() as usize;
        let frac = t - i as f64;
        Ok(self.node(i) * (1.0 - frac) + self.node(i + 1) * frac)
    }

    /// Central-difference derivative at every node (one-sided at the ends).
    /// The stencil matches the collocation operator of the front solver.
    pub fn derivative(&self) -> DMatrix<f64> {
        let n = self.grid.len();
        let d = self.dim();
        let dx = self.grid.dx();
        let mut out = DMatrix::zeros(n, d);
        for c in 0..d {
            out[(0, c)] = (self.values[(1, c)] - self.values[(0, c)]) / dx;
            out[(n - 1, c)] = (self.values[(n - 1, c)] - self.values[(n - 2, c)]) / dx;
            for i in 1..n - 1 {
                out[(i, c)] = (self.values[(i + 1, c)] - self.values[(i - 1, c)]) / (2.0 * dx);
            }
        }
        out
    }

    /// Shifts the profile by `tau`: the result takes the value `u(x + tau)` at
    /// node `x`, using tails where `x + tau` leaves the grid.
    pub fn shift(&self, tau: f64) -> Result<Profile> {
        let n = self.grid.len();
        let d = self.dim();
        let mut values = DMatrix::zeros(n, d);
        for i in 0..n {
            let v = self.eval(self.grid.x(i) + tau)?;
            values.row_mut(i).copy_from(&v.transpose());
        }
        let (a, b) = self.tails_or_err()?;
        Profile::new(self.grid, values, a.clone(), b.clone())
    }

    /// L2 distance between two profiles on the same grid (trapezoid in x).
    pub fn l2_distance(&self, other: &Profile) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Precondition(
                "profiles live on different grids".into(),
            ));
        }
        let n = self.grid.len();
        let dx = self.grid.dx();
        let mut acc = 0.0;
        for i in 0..n {
            let diff = (self.values.row(i) - other.values.row(i)).norm_squared();
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * diff;
        }
        Ok((acc * dx).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_even_node_count() {
        let err = Grid::new(10.0, 100).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "grid.n"),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn centre_node_is_origin() {
        let g = Grid::new(40.0, 4001).unwrap();
        assert_relative_eq!(g.x(g.centre()), 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.dx(), 0.02, epsilon = 1e-14);
    }

    #[test]
    fn eval_interpolates_and_extends() {
        let g = Grid::new(1.0, 3).unwrap();
        let values = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let p = Profile::new(
            g,
            values,
            DVector::from_element(1, -7.0),
            DVector::from_element(1, 7.0),
        )
        .unwrap();
        assert_relative_eq!(p.eval(0.5).unwrap()[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(p.eval(-3.0).unwrap()[0], -7.0);
        assert_relative_eq!(p.eval(3.0).unwrap()[0], 7.0);
    }

    #[test]
    fn eval_without_tails_fails_outside() {
        let g = Grid::new(1.0, 3).unwrap();
        let p = Profile::without_tails(g, DMatrix::zeros(3, 1)).unwrap();
        assert!(p.eval(0.7).is_ok());
        assert!(p.eval(2.0).is_err());
    }

    #[test]
    fn shift_matches_manual_resample() {
        let g = Grid::new(5.0, 501).unwrap();
        let p = Profile::sample(g, 1, |x| DVector::from_element(1, x.tanh()));
        let s = p.shift(1.0).unwrap();
        // interior nodes: u(x + 1)
        let i = 250; // x = 0
        assert_relative_eq!(s.node(i)[0], 1.0f64.tanh(), epsilon = 1e-12);
    }

    #[test]
    fn window_free_l2_distance_of_translates_is_small_for_flat_profiles() {
        let g = Grid::new(5.0, 501).unwrap();
        let a = Profile::constant(g, &DVector::from_element(1, 2.0));
        let b = a.shift(0.77).unwrap();
        assert!(a.l2_distance(&b).unwrap() < 1e-14);
    }
}

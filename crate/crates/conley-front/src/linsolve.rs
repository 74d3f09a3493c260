use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Band matrix with `kl` subdiagonals and `ku` superdiagonals, stored
/// column-major with `kl` extra rows of headroom so the factorization can
/// widen the upper band to `ku + kl` under partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        assert!(n > 0, "matrix must be nonempty");
        let kl = kl.min(n - 1);
        let ku = ku.min(n - 1);
        let ldab = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Matrix-vector product with the stored band.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let xj = x[j];
            for i in lo..=hi {
                out[i] += self.data[self.idx(i, j)] * xj;
            }
        }
        out
    }

    /// LU factorization with partial pivoting, in place.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let ubw = ku + kl;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let lastrow = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in (k + 1)..=lastrow {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[k] = p;
            let pivot = self.data[self.idx(p, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Numeric(format!(
                    "band factorization broke down at column {k} (pivot {pivot})"
                )));
            }
            let lastcol = (k + ubw).min(n - 1);
            if p != k {
                for j in k..=lastcol {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let diag = self.data[self.idx(k, k)];
            for i in (k + 1)..=lastrow {
                let t = self.idx(i, k);
                let m = self.data[t] / diag;
                self.data[t] = m;
                if m != 0.0 {
                    for j in (k + 1)..=lastcol {
                        let akj = self.data[self.idx(k, j)];
                        if akj != 0.0 {
                            let t = self.idx(i, j);
                            self.data[t] -= m * akj;
                        }
                    }
                }
            }
        }
        Ok(BandedLu {
            mat: self,
            pivots,
        })
    }
}

/// Banded LU factorization with its pivot sequence.
#[derive(Debug, Clone)]
pub struct BandedLu {
    mat: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn n(&self) -> usize {
        self.mat.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.mat.n;
        assert_eq!(x.len(), n);
        let kl = self.mat.kl;
        let ubw = self.mat.ku + kl;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let lastrow = (k + kl).min(n - 1);
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..=lastrow {
                    x[i] -= self.mat.data[self.mat.idx(i, k)] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + ubw).min(n - 1);
            let mut sum = x[k];
            for j in (k + 1)..=hi {
                sum -= self.mat.data[self.mat.idx(k, j)] * x[j];
            }
            x[k] = sum / self.mat.data[self.mat.idx(k, k)];
        }
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose_in_place(&self, x: &mut [f64]) {
        let n = self.mat.n;
        assert_eq!(x.len(), n);
        let kl = self.mat.kl;
        let ubw = self.mat.ku + kl;
        for k in 0..n {
            let lo = k.saturating_sub(ubw);
            let mut sum = x[k];
            for j in lo..k {
                sum -= self.mat.data[self.mat.idx(j, k)] * x[j];
            }
            x[k] = sum / self.mat.data[self.mat.idx(k, k)];
        }
        for k in (0..n).rev() {
            let lastrow = (k + kl).min(n - 1);
            let mut v = x[k];
            for i in (k + 1)..=lastrow {
                v -= self.mat.data[self.mat.idx(i, k)] * x[i];
            }
            x[k] = v;
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Estimates the smallest singular value of the factored matrix by power
    /// iteration on the inverse normal operator. Deterministic for a fixed
    /// seed; accurate to the quality of the band (exact when the band holds
    /// the whole matrix).
    pub fn smallest_singular_estimate(&self, iterations: usize, seed: u64) -> f64 {
        let n = self.mat.n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = |w: &[f64]| w.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        let mut nu = 0.0;
        for _ in 0..iterations {
            let mut w = v.clone();
            self.solve_in_place(&mut w);
            self.solve_transpose_in_place(&mut w);
            nu = norm(&w);
            if !nu.is_finite() || nu == 0.0 {
                return 0.0;
            }
            for (a, b) in v.iter_mut().zip(&w) {
                *a = b / nu;
            }
        }
        1.0 / nu.sqrt()
    }
}

/// Solves `A x = b` where `lu` factors a banded approximation of `A` and
/// `apply_full` is the exact product `x -> A x`, by iterative refinement.
/// Returns the solution and the final residual, measured in the sup norm
/// relative to `1 + |b|_inf`.
pub fn solve_refined<F>(
    lu: &BandedLu,
    apply_full: F,
    b: &[f64],
    tolerance: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let sup = |w: &[f64]| w.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let scale = 1.0 + sup(b);
    let mut x = lu.solve(b);
    let mut previous = f64::INFINITY;
    let mut growth_streak = 0usize;
    for sweep in 0..max_sweeps {
        let ax = apply_full(&x);
        let residual: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let res = sup(&residual) / scale;
        if !res.is_finite() {
            return Err(Error::Numeric(
                "iterative refinement produced a non-finite residual".into(),
            ));
        }
        if res <= tolerance {
            return Ok((x, res));
        }
        if res >= previous {
            growth_streak += 1;
            if growth_streak >= 2 {
                return Err(Error::NoConvergence {
                    iterations: sweep,
                    residual: res,
                });
            }
        } else {
            growth_streak = 0;
        }
        previous = res;
        let dx = lu.solve(&residual);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    let ax = apply_full(&x);
    let res = sup(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>()) / scale;
    if res <= tolerance {
        Ok((x, res))
    } else {
        Err(Error::NoConvergence {
            iterations: max_sweeps,
            residual: res,
        })
    }
}

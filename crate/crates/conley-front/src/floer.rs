//! Mod-2 chain complexes graded by Morse index.
//!
//! A [`ChainComplex`] stores one ordered generator list per degree and one
//! GF(2) boundary matrix per degree transition. The constructor [`build`]
//! assembles the complex for a specific coupling strength from constant
//! solutions (generators, graded by Morse index) and mod-2 connection counts
//! (boundary entries); [`ChainComplex::from_cells`] accepts explicit cell
//! data, which is how block pairs feed their CW complexes through the same
//! rank engine.
//!
//! Homology ranks use `dim H_n = |C_n| - rank d_n - rank d_{n+1}` and are
//! only reported after the square-to-zero check passes.
//!
//! [`build`]: ChainComplex::build

use std::collections::BTreeMap;

use crate::critical::CriticalPoint;
use crate::error::Error;
use crate::front::ConnectionCount;
use crate::gf2::Gf2Matrix;
use crate::Result;

/// Generators closer than this in the sup norm count as the same point.
pub const GENERATOR_SEPARATION: f64 = 1e-8;

/// Deterministic coordinate label, e.g. `(-0.707107, 0.000000)`.
pub(crate) fn format_state(point: &[f64]) -> String {
    let parts: Vec<String> = point
        .iter()
        .map(|&x| format!("{:.6}", if x == 0.0 { 0.0 } else { x }))
        .collect();
    format!("({})", parts.join(", "))
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A finitely generated chain complex over GF(2).
#[derive(Debug, Clone)]
pub struct ChainComplex {
    /// Degree `n` to the ordered generator labels of `C_n`.
    cells: BTreeMap<usize, Vec<String>>,
    /// Degree `n` to the matrix of `d_n : C_n -> C_{n-1}`, stored as
    /// `|C_{n-1}| x |C_n|`.
    boundaries: BTreeMap<usize, Gf2Matrix>,
    warnings: Vec<String>,
}

impl ChainComplex {
    /// Builds a complex from explicit cell lists and boundary matrices.
    ///
    /// `boundaries[n]` maps degree `n` to degree `n - 1` and must have shape
    /// `|cells[n-1]| x |cells[n]|` (a missing degree counts as empty).
    pub fn from_cells(
        cells: BTreeMap<usize, Vec<String>>,
        boundaries: BTreeMap<usize, Gf2Matrix>,
    ) -> Result<Self> {
        let size = |n: usize| cells.get(&n).map_or(0, |c| c.len());
        for (&n, matrix) in &boundaries {
            if n == 0 {
                if matrix.nrows() != 0 || matrix.ncols() != 0 {
                    return Err(Error::Precondition(
                        "boundary at degree 0 must be empty".into(),
                    ));
                }
                continue;
            }
            if matrix.ncols() != size(n) || matrix.nrows() != size(n - 1) {
                return Err(Error::Precondition(format!(
                    "boundary at degree {n} has shape {}x{}, cells demand {}x{}",
                    matrix.nrows(),
                    matrix.ncols(),
                    size(n - 1),
                    size(n),
                )));
            }
        }
        Ok(ChainComplex {
            cells,
            boundaries,
            warnings: Vec::new(),
        })
    }

    /// Assembles the complex of a gradient-like flow: generators are the
    /// hyperbolic constant solutions graded by Morse index, and the boundary
    /// entry from `z_minus` to `z_plus` is the parity of the connection count.
    ///
    /// Degenerate (non-hyperbolic) points are dropped with a warning, along
    /// with any counts touching them. Errors: two generators within
    /// [`GENERATOR_SEPARATION`] of each other, a count whose endpoint matches
    /// no generator, or a count whose endpoints do not differ by one in index.
    pub fn build(points: &[CriticalPoint], counts: &[ConnectionCount]) -> Result<Self> {
        let mut warnings = Vec::new();
        let mut kept: Vec<&CriticalPoint> = Vec::new();
        let mut dropped: Vec<&CriticalPoint> = Vec::new();
        for p in points {
            if p.hyperbolic {
                kept.push(p);
            } else {
                warnings.push(format!(
                    "excluded degenerate constant {} (pencil margin {:.3e})",
                    format_state(&p.point),
                    p.margin
                ));
                dropped.push(p);
            }
        }
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                if sup_distance(&a.point, &b.point) < GENERATOR_SEPARATION {
                    return Err(Error::Precondition(format!(
                        "duplicate generator: {} appears twice",
                        format_state(&a.point)
                    )));
                }
            }
        }

        let mut cells: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        // (degree, position) of each kept point, in input order per degree.
        let mut slots: Vec<(usize, usize)> = Vec::with_capacity(kept.len());
        for p in &kept {
            let list = cells.entry(p.index).or_default();
            slots.push((p.index, list.len()));
            list.push(format_state(&p.point));
        }
        let locate = |state: &[f64]| -> Option<(usize, usize)> {
            kept.iter()
                .position(|p| sup_distance(&p.point, state) < GENERATOR_SEPARATION)
                .map(|i| slots[i])
        };
        let is_dropped = |state: &[f64]| {
            dropped
                .iter()
                .any(|p| sup_distance(&p.point, state) < GENERATOR_SEPARATION)
        };

        let size = |cells: &BTreeMap<usize, Vec<String>>, n: usize| -> usize {
            cells.get(&n).map_or(0, |c| c.len())
        };
        let mut boundaries: BTreeMap<usize, Gf2Matrix> = BTreeMap::new();
        for c in counts {
            let from = match locate(&c.z_minus.point) {
                Some(slot) => slot,
                None if is_dropped(&c.z_minus.point) => {
                    warnings.push(format!(
                        "skipped counts out of degenerate constant {}",
                        format_state(&c.z_minus.point)
                    ));
                    continue;
                }
                None => {
                    return Err(Error::Precondition(format!(
                        "connection endpoint {} is not among the generators",
                        format_state(&c.z_minus.point)
                    )));
                }
            };
            let to = match locate(&c.z_plus.point) {
                Some(slot) => slot,
                None if is_dropped(&c.z_plus.point) => {
                    warnings.push(format!(
                        "skipped counts into degenerate constant {}",
                        format_state(&c.z_plus.point)
                    ));
                    continue;
                }
                None => {
                    return Err(Error::Precondition(format!(
                        "connection endpoint {} is not among the generators",
                        format_state(&c.z_plus.point)
                    )));
                }
            };
            if from.0 != to.0 + 1 {
                return Err(Error::Precondition(format!(
                    "boundary entry needs Morse index gap 1, found {} -> {}",
                    from.0, to.0
                )));
            }
            warnings.extend(c.warnings.iter().cloned());
            if c.count_mod2 == 1 {
                let n = from.0;
                let matrix = boundaries
                    .entry(n)
                    .or_insert_with(|| Gf2Matrix::zeros(size(&cells, n - 1), size(&cells, n)));
                matrix.toggle(to.1, from.1);
            }
        }

        Ok(ChainComplex {
            cells,
            boundaries,
            warnings,
        })
    }

    /// Ordered generator labels per degree.
    pub fn cells(&self) -> &BTreeMap<usize, Vec<String>> {
        &self.cells
    }

    /// The matrix of `d_n`, if any entry at that degree is nonzero.
    pub fn boundary(&self, degree: usize) -> Option<&Gf2Matrix> {
        self.boundaries.get(&degree)
    }

    /// Diagnostics collected while assembling (degenerate points, near-singular
    /// linearisations).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Checks `d_n . d_{n+1} = 0` for every consecutive pair of boundaries.
    pub fn verify_boundary_squared(&self) -> Result<()> {
        for (&n, upper) in &self.boundaries {
            let Some(lower) = self.boundaries.get(&(n - 1)) else {
                continue;
            };
            let product = lower.mul(upper);
            if let Some((row, col)) = product.first_nonzero() {
                let from = self.cells[&n][col].clone();
                let to = self.cells[&(n - 2)][row].clone();
                return Err(Error::BoundaryNotSquaredZero {
                    degree: n,
                    from,
                    to,
                });
            }
        }
        Ok(())
    }

    /// GF(2) homology ranks per degree, after verifying the square is zero.
    /// Degrees with generators but trivial homology appear with rank 0.
    pub fn homology_ranks(&self) -> Result<BTreeMap<usize, usize>> {
        self.verify_boundary_squared()?;
        let mut ranks = BTreeMap::new();
        for (&n, generators) in &self.cells {
            if generators.is_empty() {
                continue;
            }
            let rank_at = |m: usize| self.boundaries.get(&m).map_or(0, Gf2Matrix::rank);
            ranks.insert(n, generators.len() - rank_at(n) - rank_at(n + 1));
        }
        Ok(ranks)
    }

    /// Alternating sum of the generator counts. Equals the alternating sum of
    /// the homology ranks whenever the square-to-zero check passes.
    pub fn euler_characteristic(&self) -> i64 {
        self.cells
            .iter()
            .map(|(&n, c)| {
                let sign = if n % 2 == 0 { 1 } else { -1 };
                sign * c.len() as i64
            })
            .sum()
    }
}

//! Dense matrices over the two-element field, bit-packed 64 columns per word.
//!
//! This is the rank engine behind the mod-2 chain complexes: boundary
//! operators are stored as [`Gf2Matrix`] values, homology ranks come from
//! [`Gf2Matrix::rank`], and the square-to-zero check is a [`Gf2Matrix::mul`]
//! followed by [`Gf2Matrix::is_zero`].

/// A `rows x cols` matrix with entries in GF(2).
///
/// Rows are packed little-endian into `u64` words: column `j` of row `i`
/// lives at bit `j % 64` of word `i * words + j / 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl Gf2Matrix {
    /// All-zero matrix of the given shape. Either dimension may be zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        Gf2Matrix {
            rows,
            cols,
            words,
            data: vec![0; rows * words],
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Gf2Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Number of rows.
    pub fn nrows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Entry at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> bool {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        (self.data[row * self.words + col / 64] >> (col % 64)) & 1 == 1
    }

    /// Write `value` at `(row, col)`.
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        let word = &mut self.data[row * self.words + col / 64];
        let bit = 1u64 << (col % 64);
        if value {
            *word |= bit;
        } else {
            *word &= !bit;
        }
    }

    /// Flip the entry at `(row, col)`.
    pub fn toggle(&mut self, row: usize, col: usize) {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.data[row * self.words + col / 64] ^= 1u64 << (col % 64);
    }

    /// True when every entry is zero.
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Coordinates of the first nonzero entry in row-major order.
    pub fn first_nonzero(&self) -> Option<(usize, usize)> {
        for row in 0..self.rows {
            for (k, &word) in self.data[row * self.words..(row + 1) * self.words]
                .iter()
                .enumerate()
            {
                if word != 0 {
                    let col = k * 64 + word.trailing_zeros() as usize;
                    return Some((row, col));
                }
            }
        }
        None
    }

    /// Rank over GF(2) by Gaussian elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut data = self.data.clone();
        let words = self.words;
        let mut rank = 0;
        for col in 0..self.cols {
            let word = col / 64;
            let bit = 1u64 << (col % 64);
            let Some(pivot) =
                (rank..self.rows).find(|&r| data[r * words + word] & bit != 0)
            else {
                continue;
            };
            if pivot != rank {
                for k in 0..words {
                    data.swap(rank * words + k, pivot * words + k);
                }
            }
            for r in (rank + 1)..self.rows {
                if data[r * words + word] & bit != 0 {
                    for k in 0..words {
                        data[r * words + k] ^= data[rank * words + k];
                    }
                }
            }
            rank += 1;
            if rank == self.rows {
                break;
            }
        }
        rank
    }

    /// Matrix product over GF(2). Panics when the inner dimensions differ.
    pub fn mul(&self, rhs: &Gf2Matrix) -> Gf2Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "dimension mismatch: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Gf2Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.get(i, k) {
                    let (src, dst) = (k * rhs.words, i * out.words);
                    for w in 0..rhs.words {
                        out.data[dst + w] ^= rhs.data[src + w];
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_rows(rows: &[&[u8]]) -> Gf2Matrix {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Gf2Matrix::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v % 2 == 1);
            }
        }
        m
    }

    #[test]
    fn set_get_round_trip_across_word_boundary() {
        let mut m = Gf2Matrix::zeros(2, 130);
        m.set(0, 63, true);
        m.set(0, 64, true);
        m.set(1, 129, true);
        assert!(m.get(0, 63) && m.get(0, 64) && m.get(1, 129));
        assert!(!m.get(0, 0) && !m.get(1, 64));
        m.toggle(0, 64);
        assert!(!m.get(0, 64));
        assert_eq!(m.first_nonzero(), Some((0, 63)));
    }

    #[test]
    fn rank_of_known_matrices() {
        assert_eq!(Gf2Matrix::identity(5).rank(), 5);
        assert_eq!(Gf2Matrix::zeros(3, 4).rank(), 0);
        assert_eq!(Gf2Matrix::zeros(0, 4).rank(), 0);
        // Third row is the sum of the first two.
        let m = from_rows(&[&[1, 0, 1], &[0, 1, 1], &[1, 1, 0]]);
        assert_eq!(m.rank(), 2);
        let wide = from_rows(&[&[1, 1, 0, 1], &[0, 0, 1, 1]]);
        assert_eq!(wide.rank(), 2);
    }

    #[test]
    fn mul_matches_boolean_oracle() {
        let a = from_rows(&[&[1, 0, 1], &[1, 1, 0]]);
        let b = from_rows(&[&[1, 1], &[0, 1], &[1, 0]]);
        let c = a.mul(&b);
        for i in 0..2 {
            for j in 0..2 {
                let mut sum = false;
                for k in 0..3 {
                    sum ^= a.get(i, k) && b.get(k, j);
                }
                assert_eq!(c.get(i, j), sum);
            }
        }
        assert!(a.mul(&Gf2Matrix::identity(3)) == a);
        assert!(Gf2Matrix::identity(2).mul(&a) == a);
    }

    #[test]
    fn zero_product_detected() {
        // Boundary-like pair: d1 * d2 = 0 over GF(2).
        let d2 = from_rows(&[&[1], &[1]]);
        let d1 = from_rows(&[&[1, 1]]);
        assert!(d1.mul(&d2).is_zero());
        assert_eq!(d1.mul(&d2).first_nonzero(), None);
    }

    proptest! {
        #[test]
        fn mul_is_associative(seed in any::<u64>()) {
            let mut state = seed | 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state >> 33
            };
            let mut random = |rows: usize, cols: usize| {
                let mut m = Gf2Matrix::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        m.set(i, j, next() % 2 == 1);
                    }
                }
                m
            };
            let a = random(4, 5);
            let b = random(5, 3);
            let c = random(3, 6);
            prop_assert!(a.mul(&b).mul(&c) == a.mul(&b.mul(&c)));
        }

        #[test]
        fn rank_bounded_and_permutation_invariant(seed in any::<u64>()) {
            let mut state = seed | 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state >> 33
            };
            let mut m = Gf2Matrix::zeros(5, 7);
            for i in 0..5 {
                for j in 0..7 {
                    m.set(i, j, next() % 2 == 1);
                }
            }
            let r = m.rank();
            prop_assert!(r <= 5);
            // Reversing the rows leaves the rank unchanged.
            let mut rev = Gf2Matrix::zeros(5, 7);
            for i in 0..5 {
                for j in 0..7 {
                    rev.set(4 - i, j, m.get(i, j));
                }
            }
            prop_assert_eq!(rev.rank(), r);
        }
    }
}

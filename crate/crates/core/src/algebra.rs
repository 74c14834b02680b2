//! Exact arithmetic over prime fields F_p (p in {2, 3, 5, 7}) and exact matrix
//! algebra on top of it: rank, reduced row echelon form, left nullspaces, dual
//! bases, inverses, and rank factorizations.
//!
//! F_2 matrices store rows bit-packed in machine words so that row elimination
//! is a word-wide XOR; the other field orders use one byte per entry. All
//! pivoting is deterministic (first nonzero entry in column order), so every
//! derived object is reproducible byte for byte.

use crate::error::{Error, Result};

/// A prime field F_p with p in {2, 3, 5, 7}. Elements are represented as `u8`
/// values in `[0, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field {
    p: u8,
}

impl Field {
    pub fn new(p: u64) -> Result<Field> {
        match p {
            2 | 3 | 5 | 7 => Ok(Field { p: p as u8 }),
            _ => Err(Error::UnsupportedFieldOrder(p)),
        }
    }

    pub fn order(self) -> u8 {
        self.p
    }

    pub fn contains(self, v: u8) -> bool {
        v < self.p
    }

    pub fn add(self, a: u8, b: u8) -> u8 {
        (a + b) % self.p
    }

    pub fn sub(self, a: u8, b: u8) -> u8 {
        (a + self.p - b) % self.p
    }

    pub fn neg(self, a: u8) -> u8 {
        (self.p - a) % self.p
    }

    pub fn mul(self, a: u8, b: u8) -> u8 {
        (a * b) % self.p
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(self, a: u8) -> u8 {
        debug_assert!(a != 0 && a < self.p);
        (1..self.p).find(|&b| self.mul(a, b) == 1).unwrap()
    }

    pub fn pow(self, a: u8, e: u32) -> u8 {
        let mut acc = 1u8;
        for _ in 0..e {
            acc = self.mul(acc, a);
        }
        acc
    }

    /// All field elements in increasing order.
    pub fn elements(self) -> impl Iterator<Item = u8> {
        0..self.p
    }

    /// All nonzero elements in increasing order.
    pub fn nonzero_elements(self) -> impl Iterator<Item = u8> {
        1..self.p
    }
}

/// Dot product of two equal-length coefficient vectors.
pub fn dot(field: Field, a: &[u8], b: &[u8]) -> u8 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0u8;
    for (&x, &y) in a.iter().zip(b) {
        acc = field.add(acc, field.mul(x, y));
    }
    acc
}

/// Enumerates all vectors in F_p^n in lexicographic order (last coordinate
/// fastest), starting from the zero vector.
pub fn all_vectors(field: Field, n: usize) -> Vec<Vec<u8>> {
    let p = field.order() as usize;
    let total = p.checked_pow(n as u32).expect("vector space too large");
    let mut out = Vec::with_capacity(total);
    let mut v = vec![0u8; n];
    loop {
        out.push(v.clone());
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if v[i] as usize + 1 < p {
                v[i] += 1;
                for x in &mut v[i + 1..] {
                    *x = 0;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Store {
    /// One row occupies `words_per_row` consecutive u64 words, one bit per entry.
    Bits { words_per_row: usize, words: Vec<u64> },
    /// Row-major bytes, one byte per entry.
    Bytes(Vec<u8>),
}

/// A dense matrix over F_p.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mat {
    field: Field,
    rows: usize,
    cols: usize,
    store: Store,
}

impl Mat {
    pub fn zero(field: Field, rows: usize, cols: usize) -> Mat {
        let store = if field.order() == 2 {
            let wpr = cols.div_ceil(64).max(1);
            Store::Bits { words_per_row: wpr, words: vec![0; wpr * rows] }
        } else {
            Store::Bytes(vec![0; rows * cols])
        };
        Mat { field, rows, cols, store }
    }

    pub fn identity(field: Field, n: usize) -> Mat {
        let mut m = Mat::zero(field, n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_fn(field: Field, rows: usize, cols: usize, f: impl Fn(usize, usize) -> u8) -> Mat {
        let mut m = Mat::zero(field, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                assert!(field.contains(v), "entry {v} not reduced mod {}", field.order());
                m.set(r, c, v);
            }
        }
        m
    }

    pub fn from_rows(field: Field, data: &[Vec<u8>]) -> Mat {
        let cols = data.first().map_or(0, |r| r.len());
        assert!(data.iter().all(|r| r.len() == cols), "ragged rows");
        Mat::from_fn(field, data.len(), cols, |r, c| data[r][c])
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        debug_assert!(r < self.rows && c < self.cols);
        match &self.store {
            Store::Bits { words_per_row, words } => {
                ((words[r * words_per_row + c / 64] >> (c % 64)) & 1) as u8
            }
            Store::Bytes(bytes) => bytes[r * self.cols + c],
        }
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        debug_assert!(r < self.rows && c < self.cols);
        debug_assert!(self.field.contains(v));
        match &mut self.store {
            Store::Bits { words_per_row, words } => {
                let w = &mut words[r * *words_per_row + c / 64];
                let bit = 1u64 << (c % 64);
                if v == 0 {
                    *w &= !bit;
                } else {
                    *w |= bit;
                }
            }
            Store::Bytes(bytes) => bytes[r * self.cols + c] = v,
        }
    }

    pub fn row(&self, r: usize) -> Vec<u8> {
        (0..self.cols).map(|c| self.get(r, c)).collect()
    }

    pub fn col(&self, c: usize) -> Vec<u8> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        match &self.store {
            Store::Bits { words, .. } => words.iter().all(|&w| w == 0),
            Store::Bytes(bytes) => bytes.iter().all(|&b| b == 0),
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        match &mut self.store {
            Store::Bits { words_per_row, words } => {
                let wpr = *words_per_row;
                for k in 0..wpr {
                    words.swap(a * wpr + k, b * wpr + k);
                }
            }
            Store::Bytes(bytes) => {
                for c in 0..self.cols {
                    bytes.swap(a * self.cols + c, b * self.cols + c);
                }
            }
        }
    }

    /// Multiplies row `r` by the nonzero scalar `s`.
    fn scale_row(&mut self, r: usize, s: u8) {
        if s == 1 {
            return;
        }
        for c in 0..self.cols {
            let v = self.get(r, c);
            self.set(r, c, self.field.mul(v, s));
        }
    }

    /// Adds `s` times row `src` to row `dst` (`dst += s * src`).
    fn add_scaled_row(&mut self, src: usize, dst: usize, s: u8) {
        debug_assert_ne!(src, dst);
        if s == 0 {
            return;
        }
        match &mut self.store {
            Store::Bits { words_per_row, words } => {
                let wpr = *words_per_row;
                let (lo, hi) = if src < dst { (src, dst) } else { (dst, src) };
                let (head, tail) = words.split_at_mut(hi * wpr);
                let lo_slice = &head[lo * wpr..lo * wpr + wpr];
                let hi_slice = &mut tail[..wpr];
                if src < dst {
                    for k in 0..wpr {
                        hi_slice[k] ^= lo_slice[k];
                    }
                } else {
                    // src is the hi row; xor it into the lo row via a copy.
                    let src_copy: Vec<u64> = hi_slice.to_vec();
                    let lo_slice = &mut head[lo * wpr..lo * wpr + wpr];
                    for k in 0..wpr {
                        lo_slice[k] ^= src_copy[k];
                    }
                }
            }
            Store::Bytes(_) => {
                for c in 0..self.cols {
                    let v = self.field.add(self.get(dst, c), self.field.mul(s, self.get(src, c)));
                    self.set(dst, c, v);
                }
            }
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.field, self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat::from_fn(self.field, self.rows, self.cols, |r, c| {
            self.field.add(self.get(r, c), other.get(r, c))
        })
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat::from_fn(self.field, self.rows, self.cols, |r, c| {
            self.field.sub(self.get(r, c), other.get(r, c))
        })
    }

    pub fn scale(&self, s: u8) -> Mat {
        Mat::from_fn(self.field, self.rows, self.cols, |r, c| self.field.mul(self.get(r, c), s))
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        Mat::from_fn(self.field, self.rows, other.cols, |r, c| {
            let mut acc = 0u8;
            for k in 0..self.cols {
                acc = self.field.add(acc, self.field.mul(self.get(r, k), other.get(k, c)));
            }
            acc
        })
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Mat {
        Mat::from_fn(self.field, rows.len(), cols.len(), |r, c| self.get(rows[r], cols[c]))
    }

    /// Reduced row echelon form with the recorded row transform, so that
    /// `transform * self = rref`. Pivoting is deterministic: columns are
    /// scanned left to right and the first nonzero entry below the current
    /// row is chosen.
    pub fn echelon(&self) -> Echelon {
        let mut m = self.clone();
        let mut transform = Mat::identity(self.field, self.rows);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(pivot_row) = (r..self.rows).find(|&i| m.get(i, c) != 0) else {
                continue;
            };
            m.swap_rows(pivot_row, r);
            transform.swap_rows(pivot_row, r);
            let inv = self.field.inv(m.get(r, c));
            m.scale_row(r, inv);
            transform.scale_row(r, inv);
            for i in 0..self.rows {
                if i != r {
                    let coeff = m.get(i, c);
                    if coeff != 0 {
                        let s = self.field.neg(coeff);
                        m.add_scaled_row(r, i, s);
                        transform.add_scaled_row(r, i, s);
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        Echelon { rref: m, pivots, transform }
    }

    pub fn rank(&self) -> usize {
        // Ranks do not need the transform; run plain elimination.
        let mut m = self.clone();
        let mut r = 0;
        for c in 0..self.cols {
            if r == m.rows {
                break;
            }
            let Some(pivot_row) = (r..m.rows).find(|&i| m.get(i, c) != 0) else {
                continue;
            };
            m.swap_rows(pivot_row, r);
            let inv = m.field.inv(m.get(r, c));
            m.scale_row(r, inv);
            for i in r + 1..m.rows {
                let coeff = m.get(i, c);
                if coeff != 0 {
                    let s = m.field.neg(coeff);
                    m.add_scaled_row(r, i, s);
                }
            }
            r += 1;
        }
        r
    }

    /// Inverse of a square matrix, or `None` if singular.
    pub fn invert(&self) -> Option<Mat> {
        if self.rows != self.cols {
            return None;
        }
        let ech = self.echelon();
        if ech.pivots.len() == self.rows {
            Some(ech.transform)
        } else {
            None
        }
    }

    /// Writes `self = left * right` with inner dimension equal to the rank:
    /// `left` is rows x r (columns at the pivot positions), `right` is the
    /// nonzero rows of the reduced echelon form.
    pub fn rank_factorization(&self) -> (Mat, Mat) {
        let ech = self.echelon();
        let r = ech.pivots.len();
        let left = Mat::from_fn(self.field, self.rows, r, |i, k| self.get(i, ech.pivots[k]));
        let right = Mat::from_fn(self.field, r, self.cols, |k, j| ech.rref.get(k, j));
        (left, right)
    }
}

/// Result of reduced row echelon elimination.
pub struct Echelon {
    pub rref: Mat,
    pub pivots: Vec<usize>,
    pub transform: Mat,
}

/// Rank of a matrix over its field.
pub fn mat_rank(m: &Mat) -> usize {
    m.rank()
}

/// Coefficients x with x . gens = target, if target lies in the row space.
/// Reduces the target against the recorded echelon form, then maps the
/// echelon-row coefficients back through the elimination transform.
pub fn solve_in_rowspace(gens: &Mat, target: &[u8]) -> Option<Vec<u8>> {
    assert_eq!(gens.cols(), target.len(), "target length mismatch");
    let f = gens.field();
    let ech = gens.echelon();
    let mut residue = target.to_vec();
    let mut on_rref = vec![0u8; ech.pivots.len()];
    for (r, &c) in ech.pivots.iter().enumerate() {
        let v = residue[c];
        if v != 0 {
            on_rref[r] = v;
            for (j, entry) in residue.iter_mut().enumerate() {
                *entry = f.sub(*entry, f.mul(v, ech.rref.get(r, j)));
            }
        }
    }
    if residue.iter().any(|&x| x != 0) {
        return None;
    }
    let mut x = vec![0u8; gens.rows()];
    for (r, &coef) in on_rref.iter().enumerate() {
        if coef != 0 {
            for (s, entry) in x.iter_mut().enumerate() {
                *entry = f.add(*entry, f.mul(coef, ech.transform.get(r, s)));
            }
        }
    }
    Some(x)
}

/// Basis of the left nullspace `{ b : b . m = 0 }`, with dimension
/// `rows - rank`. Deterministic: rows of the recorded elimination transform
/// corresponding to zero rows of the echelon form.
pub fn nullspace_basis(m: &Mat) -> Vec<Vec<u8>> {
    let ech = m.echelon();
    (ech.pivots.len()..m.rows()).map(|r| ech.transform.row(r)).collect()
}

/// A family of vectors together with a biorthogonal dual family supported on
/// exactly `r` coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualBasis {
    pub originals: Vec<Vec<u8>>,
    pub duals: Vec<Vec<u8>>,
    pub support: Vec<usize>,
}

/// For linearly independent vectors a_1..a_r in F^n, returns duals a*_1..a*_r
/// with a*_i . a_j = delta_ij, all supported on a single coordinate set of
/// size r (the pivot columns of the elimination).
pub fn dual_basis(field: Field, vectors: &[Vec<u8>]) -> Result<DualBasis> {
    let n = vectors.first().map_or(0, |v| v.len());
    assert!(vectors.iter().all(|v| v.len() == n), "ragged vectors");
    let m = Mat::from_rows(field, vectors);
    let ech = m.echelon();
    if ech.pivots.len() < vectors.len() {
        return Err(Error::DependentInput);
    }
    // With R = E * M in reduced form and S the selection of pivot columns,
    // M restricted to pivot columns equals E^{-1}, so the columns of S * E
    // are biorthogonal to the rows of M.
    let duals = (0..vectors.len())
        .map(|j| {
            let mut dual = vec![0u8; n];
            for (k, &c) in ech.pivots.iter().enumerate() {
                dual[c] = ech.transform.get(k, j);
            }
            dual
        })
        .collect();
    Ok(DualBasis { originals: vectors.to_vec(), duals, support: ech.pivots })
}

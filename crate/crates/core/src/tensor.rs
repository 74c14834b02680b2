//! The order-d tensor data model and its index bookkeeping: restrictions,
//! slices, contractions, flattenings, diagonal sets E(I), partition families
//! with their down-shadow, and the canonical JSON interchange formats.
//!
//! Axis labels are arbitrary natural numbers rather than 1..n so that label
//! sets on different axes can meaningfully intersect; disjointness of
//! restrictions and membership in the diagonal sets E(I) are statements about
//! labels, not positions. Internally all loops run over dense positions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::algebra::{Field, Mat};
use crate::error::{Error, Result};

/// Hard cap on the number of points of a dense tensor.
pub const MAX_POINTS: usize = 1 << 20;

/// Iterates over all position tuples of a shape in lexicographic order.
pub fn points(shape: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = shape.iter().product();
    let d = shape.len();
    (0..total).map(move |mut lin| {
        let mut idx = vec![0usize; d];
        for a in (0..d).rev() {
            idx[a] = lin % shape[a];
            lin /= shape[a];
        }
        idx
    })
}

/// True if some two labels in the list coincide.
pub fn has_equal_pair(labels: &[u32]) -> bool {
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                return true;
            }
        }
    }
    false
}

/// A dense order-d tensor over a prime field, with labeled axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    field: Field,
    axes: Vec<Vec<u32>>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<u8>,
}

impl Tensor {
    /// A zero tensor on the given labeled axes. Labels must be strictly
    /// increasing per axis and the total point count must stay within
    /// `MAX_POINTS`.
    pub fn zeros(field: Field, axes: Vec<Vec<u32>>) -> Result<Tensor> {
        if axes.is_empty() {
            return Err(Error::InvalidData("tensor needs at least one axis".into()));
        }
        for axis in &axes {
            if axis.is_empty() {
                return Err(Error::EmptyAxis);
            }
            if !axis.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidData("axis labels must be strictly increasing".into()));
            }
        }
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total = shape.iter().try_fold(1usize, |acc, &n| {
            acc.checked_mul(n).filter(|&t| t <= MAX_POINTS)
        });
        let Some(total) = total else {
            return Err(Error::InvalidData(format!(
                "tensor exceeds the {MAX_POINTS}-point cap"
            )));
        };
        let mut strides = vec![1usize; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Ok(Tensor { field, axes, shape, strides, data: vec![0; total] })
    }

    /// A zero tensor on axes [n1] x ... x [nd] with labels 1..=n per axis.
    pub fn zeros_boxed(field: Field, dims: &[usize]) -> Result<Tensor> {
        Tensor::zeros(field, dims.iter().map(|&n| (1..=n as u32).collect()).collect())
    }

    pub fn from_fn(field: Field, axes: Vec<Vec<u32>>, f: impl Fn(&[u32]) -> u8) -> Result<Tensor> {
        let mut t = Tensor::zeros(field, axes)?;
        let shape = t.shape.clone();
        for idx in points(&shape) {
            let labels = t.labels_of(&idx);
            let v = f(&labels);
            assert!(field.contains(v), "entry {v} not reduced mod {}", field.order());
            t.set(&idx, v);
        }
        Ok(t)
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn axes(&self) -> &[Vec<u32>] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &[u32] {
        &self.axes[a]
    }

    pub fn num_points(&self) -> usize {
        self.data.len()
    }

    /// The dense entry array, in lexicographic position order.
    pub fn dense_data(&self) -> &[u8] {
        &self.data
    }

    /// Builds a tensor from a dense entry array in lexicographic position order.
    pub fn from_dense(field: Field, axes: Vec<Vec<u32>>, data: Vec<u8>) -> Result<Tensor> {
        let mut t = Tensor::zeros(field, axes)?;
        if data.len() != t.num_points() {
            return Err(Error::AxisMismatch);
        }
        if let Some(&v) = data.iter().find(|&&v| !field.contains(v)) {
            return Err(Error::InvalidData(format!(
                "entry {v} not reduced mod {}",
                field.order()
            )));
        }
        t.data = data;
        Ok(t)
    }

    fn lin_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.d());
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> u8 {
        self.data[self.lin_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: u8) {
        debug_assert!(self.field.contains(v));
        let lin = self.lin_index(idx);
        self.data[lin] = v;
    }

    /// Translates a position tuple into the corresponding axis labels.
    pub fn labels_of(&self, idx: &[usize]) -> Vec<u32> {
        idx.iter().enumerate().map(|(a, &i)| self.axes[a][i]).collect()
    }

    /// Position of a label on an axis, if present.
    pub fn position_of(&self, axis: usize, label: u32) -> Option<usize> {
        self.axes[axis].binary_search(&label).ok()
    }

    pub fn get_by_labels(&self, labels: &[u32]) -> Result<u8> {
        if labels.len() != self.d() {
            return Err(Error::BadPoint);
        }
        let mut idx = Vec::with_capacity(self.d());
        for (a, &l) in labels.iter().enumerate() {
            idx.push(self.position_of(a, l).ok_or(Error::BadPoint)?);
        }
        Ok(self.get(&idx))
    }

    pub fn set_by_labels(&mut self, labels: &[u32], v: u8) -> Result<()> {
        if labels.len() != self.d() {
            return Err(Error::BadPoint);
        }
        let mut idx = Vec::with_capacity(self.d());
        for (a, &l) in labels.iter().enumerate() {
            idx.push(self.position_of(a, l).ok_or(Error::BadPoint)?);
        }
        self.set(&idx, v);
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// First nonzero position in lexicographic order.
    pub fn first_nonzero(&self) -> Option<Vec<usize>> {
        let lin = self.data.iter().position(|&v| v != 0)?;
        let mut idx = vec![0usize; self.d()];
        let mut rem = lin;
        for a in (0..self.d()).rev() {
            idx[a] = rem % self.shape[a];
            rem /= self.shape[a];
        }
        Some(idx)
    }

    /// All support positions in lexicographic order.
    pub fn support(&self) -> Vec<Vec<usize>> {
        points(&self.shape).filter(|idx| self.get(idx) != 0).collect()
    }

    pub fn support_size(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Support positions whose labels are pairwise distinct (outside E).
    pub fn essential_support(&self) -> Vec<Vec<usize>> {
        self.support()
            .into_iter()
            .filter(|idx| !has_equal_pair(&self.labels_of(idx)))
            .collect()
    }

    /// True if the position lies in E(I): two coordinates of I carry equal labels.
    pub fn in_diagonal(&self, idx: &[usize], i_set: &[usize]) -> bool {
        let labels: Vec<u32> = i_set.iter().map(|&a| self.axes[a][idx[a]]).collect();
        has_equal_pair(&labels)
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.axes, other.axes, "axis mismatch");
        let mut out = self.clone();
        for (a, &b) in out.data.iter_mut().zip(&other.data) {
            *a = self.field.add(*a, b);
        }
        out
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.axes, other.axes, "axis mismatch");
        let mut out = self.clone();
        for (a, &b) in out.data.iter_mut().zip(&other.data) {
            *a = self.field.sub(*a, b);
        }
        out
    }

    pub fn neg(&self) -> Tensor {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = self.field.neg(*a);
        }
        out
    }

    pub fn scale(&self, s: u8) -> Tensor {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = self.field.mul(*a, s);
        }
        out
    }

    /// Linear combination sum_i coeffs[i] * tensors[i] over a same-shape family.
    pub fn combo(tensors: &[Tensor], coeffs: &[u8]) -> Tensor {
        assert_eq!(tensors.len(), coeffs.len());
        assert!(!tensors.is_empty());
        let mut out = tensors[0].scale(coeffs[0]);
        for (t, &c) in tensors.iter().zip(coeffs).skip(1) {
            out = out.add(&t.scale(c));
        }
        out
    }

    /// Restriction to a product of axis subsets.
    pub fn restrict(&self, sel: &MinorSelection) -> Result<Tensor> {
        if sel.subsets.len() != self.d() {
            return Err(Error::BadAxisSet);
        }
        let mut positions: Vec<Vec<usize>> = Vec::with_capacity(self.d());
        for (a, subset) in sel.subsets.iter().enumerate() {
            if subset.is_empty() {
                return Err(Error::EmptyAxis);
            }
            let mut pos = Vec::with_capacity(subset.len());
            for &label in subset {
                pos.push(self.position_of(a, label).ok_or(Error::NotSubset)?);
            }
            positions.push(pos);
        }
        let mut out = Tensor::zeros(self.field, sel.subsets.clone())?;
        let out_shape = out.shape.clone();
        for idx in points(&out_shape) {
            let src: Vec<usize> = idx.iter().enumerate().map(|(a, &i)| positions[a][i]).collect();
            out.set(&idx, self.get(&src));
        }
        Ok(out)
    }

    /// Slice T_y: keep the coordinates in `keep` (sorted positions into [d]),
    /// fixing the complementary coordinates to the positions `y` (listed in
    /// increasing coordinate order).
    pub fn slice(&self, keep: &[usize], y: &[usize]) -> Result<Tensor> {
        let keep_set: BTreeSet<usize> = keep.iter().copied().collect();
        if keep_set.is_empty() || keep_set.len() != keep.len() || keep.iter().any(|&a| a >= self.d())
        {
            return Err(Error::BadAxisSet);
        }
        let fixed: Vec<usize> = (0..self.d()).filter(|a| !keep_set.contains(a)).collect();
        if y.len() != fixed.len() || y.iter().zip(&fixed).any(|(&p, &a)| p >= self.shape[a]) {
            return Err(Error::BadPoint);
        }
        let axes: Vec<Vec<u32>> = keep.iter().map(|&a| self.axes[a].clone()).collect();
        let mut out = Tensor::zeros(self.field, axes)?;
        let out_shape = out.shape.clone();
        let mut src = vec![0usize; self.d()];
        for (&a, &p) in fixed.iter().zip(y) {
            src[a] = p;
        }
        for idx in points(&out_shape) {
            for (k, &a) in keep.iter().enumerate() {
                src[a] = idx[k];
            }
            out.set(&idx, self.get(&src));
        }
        Ok(out)
    }

    /// Contraction along one axis: (u.T)(rest) = sum_x u(x) T(..., x, ...).
    pub fn contract(&self, axis: usize, u: &[u8]) -> Result<Tensor> {
        if self.d() < 2 {
            return Err(Error::BadAxisSet);
        }
        if axis >= self.d() || u.len() != self.shape[axis] {
            return Err(Error::AxisMismatch);
        }
        let axes: Vec<Vec<u32>> =
            (0..self.d()).filter(|&a| a != axis).map(|a| self.axes[a].clone()).collect();
        let mut out = Tensor::zeros(self.field, axes)?;
        let out_shape = out.shape.clone();
        let mut src = vec![0usize; self.d()];
        for idx in points(&out_shape) {
            let mut k = 0;
            for (a, s) in src.iter_mut().enumerate() {
                if a != axis {
                    *s = idx[k];
                    k += 1;
                }
            }
            let mut acc = 0u8;
            for (x, &ux) in u.iter().enumerate() {
                src[axis] = x;
                acc = self.field.add(acc, self.field.mul(ux, self.get(&src)));
            }
            out.set(&idx, acc);
        }
        Ok(out)
    }

    /// Flattening matrix: rows indexed by the product of the axes in `i_set`
    /// (lexicographic), columns by the complementary product.
    pub fn flatten(&self, i_set: &[usize]) -> Result<Mat> {
        let i_sorted: BTreeSet<usize> = i_set.iter().copied().collect();
        if i_sorted.is_empty()
            || i_sorted.len() == self.d()
            || i_sorted.len() != i_set.len()
            || i_set.iter().any(|&a| a >= self.d())
        {
            return Err(Error::BadAxisSet);
        }
        let rows_axes: Vec<usize> = i_sorted.iter().copied().collect();
        let cols_axes: Vec<usize> = (0..self.d()).filter(|a| !i_sorted.contains(a)).collect();
        let nrows: usize = rows_axes.iter().map(|&a| self.shape[a]).product();
        let ncols: usize = cols_axes.iter().map(|&a| self.shape[a]).product();
        let decode = |mut lin: usize, axes: &[usize]| -> Vec<usize> {
            let mut idx = vec![0usize; axes.len()];
            for k in (0..axes.len()).rev() {
                idx[k] = lin % self.shape[axes[k]];
                lin /= self.shape[axes[k]];
            }
            idx
        };
        Ok(Mat::from_fn(self.field, nrows, ncols, |r, c| {
            let ri = decode(r, &rows_axes);
            let ci = decode(c, &cols_axes);
            let mut full = vec![0usize; self.d()];
            for (k, &a) in rows_axes.iter().enumerate() {
                full[a] = ri[k];
            }
            for (k, &a) in cols_axes.iter().enumerate() {
                full[a] = ci[k];
            }
            self.get(&full)
        }))
    }

    /// Reorders axes so that result axis k is `perm[k]` of self.
    pub fn permute_axes(&self, perm: &[usize]) -> Tensor {
        assert_eq!(perm.len(), self.d());
        let axes: Vec<Vec<u32>> = perm.iter().map(|&a| self.axes[a].clone()).collect();
        let mut out = Tensor::zeros(self.field, axes).expect("permutation keeps the cap");
        let out_shape = out.shape.clone();
        let mut src = vec![0usize; self.d()];
        for idx in points(&out_shape) {
            for (k, &a) in perm.iter().enumerate() {
                src[a] = idx[k];
            }
            out.set(&idx, self.get(&src));
        }
        out
    }

    /// The matrix of a 2-dimensional tensor.
    pub fn as_matrix(&self) -> Mat {
        assert_eq!(self.d(), 2, "as_matrix needs an order-2 tensor");
        Mat::from_fn(self.field, self.shape[0], self.shape[1], |r, c| self.get(&[r, c]))
    }

    /// Builds an order-2 tensor from a matrix and axis labels.
    pub fn from_matrix(m: &Mat, row_labels: Vec<u32>, col_labels: Vec<u32>) -> Result<Tensor> {
        assert_eq!(m.rows(), row_labels.len());
        assert_eq!(m.cols(), col_labels.len());
        let mut t = Tensor::zeros(m.field(), vec![row_labels, col_labels])?;
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                t.set(&[r, c], m.get(r, c));
            }
        }
        Ok(t)
    }

    /// Canonical JSON encoding: sparse entries in lexicographic label order.
    pub fn to_json(&self) -> String {
        let entries: Vec<(Vec<u32>, u8)> = points(&self.shape)
            .filter(|idx| self.get(idx) != 0)
            .map(|idx| (self.labels_of(&idx), self.get(&idx)))
            .collect();
        let doc = TensorJson {
            field_order: self.field.order() as u64,
            axes: self.axes.clone(),
            entries,
        };
        serde_json::to_string(&doc).expect("tensor serialization cannot fail")
    }

    /// Parses and validates the canonical JSON encoding. Requires d >= 2.
    pub fn from_json(text: &str) -> Result<Tensor> {
        let doc: TensorJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidData(e.to_string()))?;
        let field = Field::new(doc.field_order)?;
        if doc.axes.len() < 2 {
            return Err(Error::InvalidData("tensor order must be at least 2".into()));
        }
        let mut t = Tensor::zeros(field, doc.axes)?;
        for (labels, v) in &doc.entries {
            if *v == 0 || !field.contains(*v) {
                return Err(Error::InvalidData(format!("entry value {v} out of range")));
            }
            if t.get_by_labels(labels)? != 0 {
                return Err(Error::InvalidData("duplicate entry".into()));
            }
            t.set_by_labels(labels, *v)?;
        }
        Ok(t)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    field_order: u64,
    axes: Vec<Vec<u32>>,
    entries: Vec<(Vec<u32>, u8)>,
}

/// A choice of axis subsets X_1..X_d, by label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinorSelection {
    pub subsets: Vec<Vec<u32>>,
    pub disjoint: bool,
}

impl MinorSelection {
    pub fn new(subsets: Vec<Vec<u32>>) -> MinorSelection {
        MinorSelection { subsets, disjoint: false }
    }

    /// Marks the selection disjoint, asserting that the label sets really are
    /// pairwise disjoint.
    pub fn new_disjoint(subsets: Vec<Vec<u32>>) -> MinorSelection {
        let sel = MinorSelection { subsets, disjoint: true };
        assert!(sel.pairwise_disjoint(), "labels not pairwise disjoint");
        sel
    }

    pub fn full(t: &Tensor) -> MinorSelection {
        MinorSelection::new(t.axes().to_vec())
    }

    pub fn pairwise_disjoint(&self) -> bool {
        let mut seen: BTreeSet<u32> = BTreeSet::new();
        for subset in &self.subsets {
            for &l in subset {
                if !seen.insert(l) {
                    return false;
                }
            }
        }
        true
    }

    pub fn max_subset_size(&self) -> usize {
        self.subsets.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.iter().any(Vec::is_empty)
    }

    /// Checks the selection against a tensor: one sorted subset per axis,
    /// contained in the axis labels; disjointness when flagged.
    pub fn validate(&self, t: &Tensor) -> Result<()> {
        if self.subsets.len() != t.d() {
            return Err(Error::BadAxisSet);
        }
        for (a, subset) in self.subsets.iter().enumerate() {
            if !subset.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InvalidData("subset labels must be strictly increasing".into()));
            }
            if !subset.iter().all(|&l| t.position_of(a, l).is_some()) {
                return Err(Error::NotSubset);
            }
        }
        if self.disjoint && !self.pairwise_disjoint() {
            return Err(Error::InvalidData("selection flagged disjoint but labels overlap".into()));
        }
        Ok(())
    }
}

/// A partition of [d] as sorted 1-based parts, sorted between parts.
pub type Partition = Vec<Vec<usize>>;

fn canonical_partition(mut p: Partition) -> Partition {
    for part in p.iter_mut() {
        part.sort_unstable();
    }
    p.sort();
    p
}

/// A nonempty family of partitions of [d], each with at least two parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionFamily {
    d: usize,
    partitions: Vec<Partition>,
}

impl PartitionFamily {
    pub fn new(d: usize, partitions: Vec<Partition>) -> Result<PartitionFamily> {
        if partitions.is_empty() {
            return Err(Error::InvalidData("partition family must be nonempty".into()));
        }
        let mut canon: Vec<Partition> = Vec::new();
        for p in partitions {
            let p = canonical_partition(p);
            let mut seen = vec![false; d];
            if p.len() < 2 {
                return Err(Error::InvalidData(
                    "each partition needs at least two parts".into(),
                ));
            }
            for part in &p {
                if part.is_empty() {
                    return Err(Error::InvalidData("empty part".into()));
                }
                for &c in part {
                    if c == 0 || c > d || seen[c - 1] {
                        return Err(Error::InvalidData(format!(
                            "coordinate {c} missing from [1,{d}] or repeated"
                        )));
                    }
                    seen[c - 1] = true;
                }
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::InvalidData("partition does not cover [d]".into()));
            }
            if !canon.contains(&p) {
                canon.push(p);
            }
        }
        canon.sort();
        Ok(PartitionFamily { d, partitions: canon })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    /// The all-singletons family defining tensor rank.
    pub fn tensor_rank(d: usize) -> PartitionFamily {
        assert!(d >= 2);
        PartitionFamily::new(d, vec![(1..=d).map(|c| vec![c]).collect()]).unwrap()
    }

    /// The slice-rank family: one coordinate split off, for each coordinate.
    pub fn slice_rank(d: usize) -> PartitionFamily {
        assert!(d >= 2);
        let partitions = (1..=d)
            .map(|alpha| {
                let rest: Vec<usize> = (1..=d).filter(|&c| c != alpha).collect();
                if rest.is_empty() {
                    vec![vec![alpha]]
                } else {
                    vec![vec![alpha], rest]
                }
            })
            .collect();
        PartitionFamily::new(d, partitions).unwrap()
    }

    /// The partition-rank family: all bipartitions of [d].
    pub fn partition_rank(d: usize) -> PartitionFamily {
        assert!(d >= 2);
        let mut partitions = Vec::new();
        // Enumerate subsets containing coordinate 1 to pick each bipartition once.
        for mask in 0..(1u32 << (d - 1)) {
            let side: Vec<usize> =
                std::iter::once(1).chain((2..=d).filter(|&c| mask >> (c - 2) & 1 == 1)).collect();
            if side.len() == d {
                continue;
            }
            let other: Vec<usize> = (1..=d).filter(|c| !side.contains(c)).collect();
            partitions.push(vec![side, other]);
        }
        PartitionFamily::new(d, partitions).unwrap()
    }

    /// The three pairings of [4] into two pairs.
    pub fn pair_pair_rank() -> PartitionFamily {
        PartitionFamily::new(
            4,
            vec![
                vec![vec![1, 2], vec![3, 4]],
                vec![vec![1, 3], vec![2, 4]],
                vec![vec![1, 4], vec![2, 3]],
            ],
        )
        .unwrap()
    }

    /// The order-4 family with one fixed singleton, a second singleton, and a pair.
    pub fn one_times_slice_rank() -> PartitionFamily {
        PartitionFamily::new(
            4,
            vec![
                vec![vec![1], vec![2], vec![3, 4]],
                vec![vec![1], vec![3], vec![2, 4]],
                vec![vec![1], vec![4], vec![2, 3]],
            ],
        )
        .unwrap()
    }

    /// All partitions of [4] into exactly three parts (one pair, two singletons).
    pub fn tripartition_rank() -> PartitionFamily {
        let mut partitions = Vec::new();
        for i in 1..=4usize {
            for j in i + 1..=4 {
                let singles: Vec<usize> = (1..=4).filter(|&c| c != i && c != j).collect();
                partitions.push(vec![vec![i, j], vec![singles[0]], vec![singles[1]]]);
            }
        }
        PartitionFamily::new(4, partitions).unwrap()
    }

    pub fn is_tensor_rank(&self) -> bool {
        self.partitions.len() == 1 && self.partitions[0].iter().all(|part| part.len() == 1)
    }

    /// Largest part across all partitions; ties broken toward the
    /// lexicographically greatest sorted coordinate sequence.
    pub fn largest_part(&self) -> Vec<usize> {
        let mut best: Option<&Vec<usize>> = None;
        for p in &self.partitions {
            for part in p {
                let better = match best {
                    None => true,
                    Some(b) => part.len() > b.len() || (part.len() == b.len() && part > b),
                };
                if better {
                    best = Some(part);
                }
            }
        }
        best.expect("family is nonempty").clone()
    }

    /// Splits the largest part C in every partition containing it into all
    /// bipartitions, producing the down-shadow R' together with the split
    /// C / R_+ / R_- / R_comp data.
    pub fn down_shadow(&self) -> Result<DownShadow> {
        if self.is_tensor_rank() {
            return Err(Error::AlreadyTensorRank);
        }
        let c = self.largest_part();
        let mut r_plus = Vec::new();
        let mut r_minus = Vec::new();
        for p in &self.partitions {
            if p.contains(&c) {
                r_plus.push(p.clone());
            } else {
                r_minus.push(p.clone());
            }
        }
        let mut r_prime = r_minus.clone();
        for p in &r_plus {
            let rest: Vec<Vec<usize>> = p.iter().filter(|part| **part != c).cloned().collect();
            for (c1, c2) in bipartitions(&c) {
                let mut q = rest.clone();
                q.push(c1);
                q.push(c2);
                r_prime.push(q);
            }
        }
        // R_comp lives on [d] \ C; relabel to 1..d-|C| preserving order.
        let complement: Vec<usize> = (1..=self.d).filter(|x| !c.contains(x)).collect();
        let relabel = |x: usize| complement.iter().position(|&y| y == x).unwrap() + 1;
        let r_comp_partitions: Vec<Partition> = r_plus
            .iter()
            .map(|p| {
                p.iter()
                    .filter(|part| **part != c)
                    .map(|part| part.iter().map(|&x| relabel(x)).collect())
                    .collect()
            })
            .collect();
        let r_comp = if r_comp_partitions.iter().any(|p: &Partition| p.len() < 2) {
            // A partition P = {C, other} leaves a single part on the
            // complement; the complement family is then trivial and callers
            // must special-case it (it encodes "any tensor is one term").
            None
        } else {
            Some(PartitionFamily::new(self.d - c.len(), r_comp_partitions.clone())?)
        };
        Ok(DownShadow {
            c: c.clone(),
            complement,
            r_prime: PartitionFamily::new(self.d, r_prime)?,
            r_plus: PartitionFamily::new(self.d, r_plus)?,
            r_minus: if r_minus.is_empty() {
                None
            } else {
                Some(PartitionFamily::new(self.d, r_minus)?)
            },
            r_comp,
            r_comp_raw: r_comp_partitions,
        })
    }

    /// The product family on [d1 + d2]: unions of partitions with the second
    /// family's coordinates shifted by d1.
    pub fn product(r1: &PartitionFamily, r2: &PartitionFamily) -> PartitionFamily {
        let d = r1.d + r2.d;
        let mut partitions = Vec::new();
        for p1 in &r1.partitions {
            for p2 in &r2.partitions {
                let mut q = p1.clone();
                for part in p2 {
                    q.push(part.iter().map(|&x| x + r1.d).collect());
                }
                partitions.push(q);
            }
        }
        PartitionFamily::new(d, partitions).expect("product of valid families is valid")
    }

    /// True if every partition in the family is a bipartition.
    pub fn all_bipartitions(&self) -> bool {
        self.partitions.iter().all(|p| p.len() == 2)
    }

    pub fn to_json(&self) -> String {
        let doc = FamilyJson { d: self.d, partitions: self.partitions.clone() };
        serde_json::to_string(&doc).expect("family serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<PartitionFamily> {
        let doc: FamilyJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidData(e.to_string()))?;
        PartitionFamily::new(doc.d, doc.partitions)
    }
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    d: usize,
    partitions: Vec<Partition>,
}

/// All unordered splits of a set into two nonempty halves; the half containing
/// the minimum element is listed first.
pub fn bipartitions(set: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = set.len();
    assert!(n >= 2);
    let mut out = Vec::new();
    // The first element always goes to the first half, so each split appears once.
    for mask in 0..(1u32 << (n - 1)) {
        let mut c1 = vec![set[0]];
        let mut c2 = Vec::new();
        for (k, &x) in set.iter().enumerate().skip(1) {
            if mask >> (k - 1) & 1 == 1 {
                c1.push(x);
            } else {
                c2.push(x);
            }
        }
        if !c2.is_empty() {
            out.push((c1, c2));
        }
    }
    out
}

/// The split of a family at its largest part.
#[derive(Debug, Clone)]
pub struct DownShadow {
    /// The chosen largest part C (1-based coordinates).
    pub c: Vec<usize>,
    /// The complementary coordinates [d] \ C in increasing order.
    pub complement: Vec<usize>,
    /// The down-shadow family R'.
    pub r_prime: PartitionFamily,
    /// Partitions of R containing C.
    pub r_plus: PartitionFamily,
    /// Partitions of R not containing C (absent when all contain C).
    pub r_minus: Option<PartitionFamily>,
    /// R_+ with C removed, relabeled onto [d - |C|]; `None` when some
    /// partition in R_+ is exactly {C, one other part}.
    pub r_comp: Option<PartitionFamily>,
    /// R_+ with C removed, relabeled, as raw partitions (may have one part).
    pub r_comp_raw: Vec<Partition>,
}

/// The diagonal set E(I) on a fixed list of axes: projected points with two
/// equal labels among the I coordinates.
#[derive(Debug, Clone)]
pub struct DiagonalSet {
    axes: Vec<Vec<u32>>,
    i_set: Vec<usize>,
}

impl DiagonalSet {
    /// `i_set` holds 0-based coordinate positions into the axes.
    pub fn new(axes: Vec<Vec<u32>>, i_set: Vec<usize>) -> Result<DiagonalSet> {
        if i_set.is_empty() || i_set.iter().any(|&a| a >= axes.len()) {
            return Err(Error::BadAxisSet);
        }
        Ok(DiagonalSet { axes, i_set })
    }

    /// Membership of a full point given by positions.
    pub fn contains_positions(&self, idx: &[usize]) -> bool {
        let labels: Vec<u32> = self.i_set.iter().map(|&a| self.axes[a][idx[a]]).collect();
        has_equal_pair(&labels)
    }

    /// Membership of a full point given by labels.
    pub fn contains_labels(&self, labels: &[u32]) -> bool {
        let proj: Vec<u32> = self.i_set.iter().map(|&a| labels[a]).collect();
        has_equal_pair(&proj)
    }
}

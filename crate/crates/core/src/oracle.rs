//! Exact rank oracles for partition-rank notions, with certificates.
//!
//! Every answer is either certified (a decomposition that re-evaluates to the
//! input exactly) or proved by exhaustion under a hard node budget. Four exact
//! routes cover the desk-scale instances:
//!
//! * order 2: plain matrix rank with a factorization certificate;
//! * tensor rank (all parts singleton): search over subspaces of the slice
//!   span that are spanned by their rank-1 elements;
//! * families of bipartitions (slice rank, partition rank and relatives):
//!   enumerate per-partition coefficient subspaces on the smaller side and
//!   solve a linear membership system;
//! * anything else: depth-first search over normalized product terms, closing
//!   each node through the bipartition solver when the family is mixed.
//!
//! An order-3 slice-rank input whose support is an antichain short-circuits
//! to the covering solver, which is exact at much larger sizes.

use std::collections::BTreeMap;
use std::collections::HashMap;

use itertools::Itertools;
use serde_json::{json, Map, Value};

use crate::algebra::{all_vectors, solve_in_rowspace, Field, Mat};
use crate::cover::{scc_exact, Constraint, SupportSet, MAX_COVER_POINTS};
use crate::error::{Error, Result};
use crate::tensor::{points, MinorSelection, Partition, PartitionFamily, Tensor};

/// Default hard cap on oracle search nodes.
pub const DEFAULT_NODE_BUDGET: u64 = 100_000_000;

/// Environment variable overriding the default node budget.
pub const NODE_BUDGET_ENV: &str = "TRANK_ORACLE_NODE_BUDGET";

/// Counts search nodes against a hard limit; exceeding it aborts the whole
/// computation with ScaleExceeded rather than returning a partial answer.
#[derive(Debug, Clone)]
pub struct NodeBudget {
    limit: u64,
    used: u64,
}

impl NodeBudget {
    pub fn new(limit: u64) -> NodeBudget {
        NodeBudget { limit, used: 0 }
    }

    /// The default budget, overridable through the environment.
    pub fn from_env() -> NodeBudget {
        let limit = std::env::var(NODE_BUDGET_ENV)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .unwrap_or(DEFAULT_NODE_BUDGET);
        NodeBudget::new(limit)
    }

    pub fn charge(&mut self, n: u64) -> Result<()> {
        self.used = self.used.saturating_add(n);
        if self.used > self.limit {
            Err(Error::ScaleExceeded { budget: self.limit })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }
}

impl Default for NodeBudget {
    fn default() -> NodeBudget {
        NodeBudget::from_env()
    }
}

/// One factor of a product term: the values of a function on the axes of a
/// single partition part, keyed by label tuples (zero entries omitted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorTable {
    /// The part, as sorted 1-based coordinates.
    pub part: Vec<usize>,
    pub values: BTreeMap<Vec<u32>, u8>,
}

/// One term of a decomposition: a product of factors over the parts of a
/// partition. Factors are aligned with the partition's parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertTerm {
    pub partition: Partition,
    pub factors: Vec<FactorTable>,
}

/// A rank upper-bound certificate: a sum of product terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankCertificate {
    pub notion: String,
    pub value: usize,
    pub terms: Vec<CertTerm>,
}

impl RankCertificate {
    pub fn new(notion: String, terms: Vec<CertTerm>) -> RankCertificate {
        RankCertificate { notion, value: terms.len(), terms }
    }

    /// Re-evaluates the sum of products on the given axes.
    pub fn evaluate(&self, field: Field, axes: &[Vec<u32>]) -> Result<Tensor> {
        for term in &self.terms {
            for fac in &term.factors {
                if let Some(&v) = fac.values.values().find(|&&v| !field.contains(v)) {
                    return Err(Error::InvalidData(format!(
                        "certificate entry {v} not reduced mod {}",
                        field.order()
                    )));
                }
            }
        }
        Tensor::from_fn(field, axes.to_vec(), |labels| {
            let mut sum = 0u8;
            for term in &self.terms {
                let mut prod = 1u8;
                for fac in &term.factors {
                    let key: Vec<u32> = fac.part.iter().map(|&c| labels[c - 1]).collect();
                    match fac.values.get(&key) {
                        Some(&v) => prod = field.mul(prod, v),
                        None => {
                            prod = 0;
                            break;
                        }
                    }
                }
                sum = field.add(sum, prod);
            }
            sum
        })
    }

    /// True iff the certificate reproduces `t` exactly and its term count
    /// matches the claimed value.
    pub fn validate_against(&self, t: &Tensor) -> bool {
        self.terms.len() == self.value
            && self.evaluate(t.field(), t.axes()).is_ok_and(|e| e == *t)
    }

    /// True iff every term's partition belongs to the family.
    pub fn partitions_in(&self, r: &PartitionFamily) -> bool {
        self.terms.iter().all(|t| r.partitions().contains(&t.partition))
    }

    pub fn to_value(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|term| {
                let mut factors = Map::new();
                for fac in &term.factors {
                    let mut table = Map::new();
                    for (labels, &v) in &fac.values {
                        table.insert(
                            serde_json::to_string(labels).unwrap(),
                            Value::from(v),
                        );
                    }
                    factors.insert(
                        serde_json::to_string(&fac.part).unwrap(),
                        Value::Object(table),
                    );
                }
                json!({ "partition": term.partition, "factors": factors })
            })
            .collect();
        json!({ "notion": self.notion, "value": self.value, "terms": terms })
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_json(text: &str) -> Result<RankCertificate> {
        let v: Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidData(format!("certificate parse: {e}")))?;
        let notion = v["notion"]
            .as_str()
            .ok_or_else(|| Error::InvalidData("missing notion".into()))?
            .to_string();
        let value = v["value"]
            .as_u64()
            .ok_or_else(|| Error::InvalidData("missing value".into()))? as usize;
        let raw_terms = v["terms"]
            .as_array()
            .ok_or_else(|| Error::InvalidData("missing terms".into()))?;
        let mut terms = Vec::new();
        for rt in raw_terms {
            let partition: Partition = serde_json::from_value(rt["partition"].clone())
                .map_err(|e| Error::InvalidData(format!("bad partition: {e}")))?;
            let raw_factors = rt["factors"]
                .as_object()
                .ok_or_else(|| Error::InvalidData("missing factors".into()))?;
            let mut factors = Vec::new();
            for (part_key, table) in raw_factors {
                let part: Vec<usize> = serde_json::from_str(part_key)
                    .map_err(|e| Error::InvalidData(format!("bad part key: {e}")))?;
                let raw_table = table
                    .as_object()
                    .ok_or_else(|| Error::InvalidData("factor table not an object".into()))?;
                let mut values = BTreeMap::new();
                for (point_key, val) in raw_table {
                    let labels: Vec<u32> = serde_json::from_str(point_key)
                        .map_err(|e| Error::InvalidData(format!("bad point key: {e}")))?;
                    let v = val
                        .as_u64()
                        .filter(|&v| v > 0 && v < 256)
                        .ok_or_else(|| Error::InvalidData("bad factor value".into()))?;
                    values.insert(labels, v as u8);
                }
                factors.push(FactorTable { part, values });
            }
            factors.sort_by(|a, b| a.part.cmp(&b.part));
            let sorted_parts: Vec<&Vec<usize>> = factors.iter().map(|f| &f.part).collect();
            let mut expected: Vec<&Vec<usize>> = partition.iter().collect();
            expected.sort();
            if sorted_parts != expected {
                return Err(Error::InvalidData("factors do not match partition parts".into()));
            }
            // Align factor order with the partition's part order.
            let factors = partition
                .iter()
                .map(|p| factors.iter().find(|f| &f.part == p).unwrap().clone())
                .collect();
            terms.push(CertTerm { partition, factors });
        }
        if terms.len() != value {
            return Err(Error::InvalidData("term count does not match value".into()));
        }
        Ok(RankCertificate { notion, value, terms })
    }
}

/// Outcome of a rank decision at a fixed threshold.
#[derive(Debug, Clone)]
pub enum Decision {
    Certified(RankCertificate),
    Infeasible,
}

/// Lower-bound evidence attached to an exact rank: the depth at which the
/// search was exhausted and how the exhaustion was established.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    /// The threshold k-1 proved infeasible (absent when the value is 0).
    pub failed_depth: Option<usize>,
    /// Nodes charged against the budget across the whole computation.
    pub nodes: u64,
    /// Which route established minimality.
    pub method: String,
}

/// Exact rank with certificate and exhaustion evidence.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub notion: String,
    pub value: usize,
    pub certificate: RankCertificate,
    pub exhaustion: Exhaustion,
}

impl RankReport {
    pub fn to_value(&self) -> Value {
        json!({
            "notion": self.notion,
            "value": self.value,
            "certificate": self.certificate.to_value(),
            "exhaustion": {
                "failed_depth": self.exhaustion.failed_depth,
                "nodes": self.exhaustion.nodes,
                "method": self.exhaustion.method,
            },
        })
    }
}

/// Tuning knobs for the oracle routes.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Allow the antichain-support covering shortcut for order-3 slice rank.
    pub use_cover_fast_path: bool,
}

impl Default for OracleOptions {
    fn default() -> OracleOptions {
        OracleOptions { use_cover_fast_path: true }
    }
}

/// Canonical name of a family when it is one of the stock notions.
pub fn family_notion(r: &PartitionFamily) -> String {
    let d = r.d();
    if *r == PartitionFamily::tensor_rank(d) {
        return "tr".into();
    }
    if *r == PartitionFamily::slice_rank(d) {
        return "sr".into();
    }
    if *r == PartitionFamily::partition_rank(d) {
        return "pr".into();
    }
    if d == 4 {
        if *r == PartitionFamily::pair_pair_rank() {
            return "pr22".into();
        }
        if *r == PartitionFamily::one_times_slice_rank() {
            return "1xsr".into();
        }
        if *r == PartitionFamily::tripartition_rank() {
            return "trp".into();
        }
    }
    "R".into()
}

fn part0(part: &[usize]) -> Vec<usize> {
    part.iter().map(|&c| c - 1).collect()
}

fn part_point_count(shape: &[usize], part0: &[usize]) -> usize {
    part0.iter().map(|&a| shape[a]).product()
}

fn proj_index(idx: &[usize], part0: &[usize], shape: &[usize]) -> usize {
    let mut v = 0;
    for &a in part0 {
        v = v * shape[a] + idx[a];
    }
    v
}

/// Admissible lower bound on the R-rank: over every proper flattening, the
/// flattening rank divided by the largest flattening rank a single product
/// term of the family can contribute.
pub fn flattening_lower_bound(t: &Tensor, r: &PartitionFamily) -> usize {
    if t.is_zero() {
        return 0;
    }
    let d = t.d();
    let shape = t.shape();
    let mut best = 1usize;
    for mask in 1..(1usize << d) - 1 {
        let i_set: Vec<usize> = (0..d).filter(|a| mask >> a & 1 == 1).collect();
        let mut per_term = 1usize;
        for p in r.partitions() {
            let mut cp = 1usize;
            for part in p {
                let p0 = part0(part);
                let inside: Vec<usize> =
                    p0.iter().copied().filter(|a| i_set.contains(a)).collect();
                if inside.is_empty() || inside.len() == p0.len() {
                    continue;
                }
                let outside: Vec<usize> =
                    p0.iter().copied().filter(|a| !i_set.contains(a)).collect();
                let q_in = part_point_count(shape, &inside);
                let q_out = part_point_count(shape, &outside);
                cp = cp.saturating_mul(q_in.min(q_out));
            }
            per_term = per_term.max(cp);
        }
        let rank = t.flatten(&i_set).expect("proper flattening").rank();
        best = best.max(rank.div_ceil(per_term));
    }
    best
}

fn canonical_partition(mut parts: Vec<Vec<usize>>) -> Partition {
    for p in &mut parts {
        p.sort_unstable();
    }
    parts.sort();
    parts
}

/// Builds a certificate term from dense per-part value tables (indexed by
/// part positions in lexicographic order).
fn cert_term_from_tables(
    axes: &[Vec<u32>],
    shape: &[usize],
    partition: &Partition,
    tables: &[Vec<u8>],
) -> CertTerm {
    let mut factors = Vec::new();
    for (part, table) in partition.iter().zip(tables) {
        let p0 = part0(part);
        let part_shape: Vec<usize> = p0.iter().map(|&a| shape[a]).collect();
        let mut values = BTreeMap::new();
        for (pos, ptuple) in points(&part_shape).enumerate() {
            if table[pos] != 0 {
                let labels: Vec<u32> =
                    ptuple.iter().zip(&p0).map(|(&i, &a)| axes[a][i]).collect();
                values.insert(labels, table[pos]);
            }
        }
        factors.push(FactorTable { part: part.clone(), values });
    }
    CertTerm { partition: partition.clone(), factors }
}

/// Dense values of a product term over the whole box.
fn term_values(field: Field, shape: &[usize], parts0: &[Vec<usize>], tables: &[Vec<u8>]) -> Vec<u8> {
    points(shape)
        .map(|x| {
            let mut prod = 1u8;
            for (p0, table) in parts0.iter().zip(tables) {
                prod = field.mul(prod, table[proj_index(&x, p0, shape)]);
                if prod == 0 {
                    break;
                }
            }
            prod
        })
        .collect()
}

/// If `t` is a single nonzero product term for the given 0-based parts,
/// returns per-part dense value tables whose product is exactly `t`.
fn term_factor(t: &Tensor, parts0: &[Vec<usize>]) -> Option<Vec<Vec<u8>>> {
    let e = t.first_nonzero()?;
    let f = t.field();
    let shape = t.shape();
    let c = t.get(&e);
    let m = parts0.len();
    let mut tables: Vec<Vec<u8>> = Vec::with_capacity(m);
    for p0 in parts0 {
        let part_shape: Vec<usize> = p0.iter().map(|&a| shape[a]).collect();
        let mut table = Vec::with_capacity(part_shape.iter().product());
        for ptuple in points(&part_shape) {
            let mut idx = e.clone();
            for (&a, &i) in p0.iter().zip(&ptuple) {
                idx[a] = i;
            }
            table.push(t.get(&idx));
        }
        tables.push(table);
    }
    // If t factors, the product of these sections equals t scaled by c^(m-1).
    let scale = f.pow(c, (m - 1) as u32);
    for x in points(shape) {
        let mut prod = 1u8;
        for (p0, table) in parts0.iter().zip(&tables) {
            prod = f.mul(prod, table[proj_index(&x, p0, shape)]);
        }
        if prod != f.mul(t.get(&x), scale) {
            return None;
        }
    }
    let corr = f.pow(f.inv(c), (m - 1) as u32);
    for v in &mut tables[0] {
        *v = f.mul(*v, corr);
    }
    Some(tables)
}

/// RREF bases of all `dim`-dimensional subspaces of F^n.
fn subspace_bases(
    field: Field,
    n: usize,
    dim: usize,
    budget: &mut NodeBudget,
) -> Result<Vec<Vec<Vec<u8>>>> {
    if dim == 0 {
        return Ok(vec![vec![]]);
    }
    if dim > n {
        return Ok(vec![]);
    }
    let mut out = Vec::new();
    let mut piv: Vec<usize> = (0..dim).collect();
    loop {
        let free: Vec<(usize, usize)> = (0..dim)
            .flat_map(|i| {
                let piv_ref = &piv;
                (piv_ref[i] + 1..n)
                    .filter(move |c| !piv_ref.contains(c))
                    .map(move |c| (i, c))
            })
            .collect();
        for assignment in all_vectors(field, free.len()) {
            budget.charge(1)?;
            let mut rows = vec![vec![0u8; n]; dim];
            for (i, &p) in piv.iter().enumerate() {
                rows[i][p] = 1;
            }
            for (&(i, c), &v) in free.iter().zip(&assignment) {
                rows[i][c] = v;
            }
            out.push(rows);
        }
        // Advance the pivot combination.
        let mut i = dim;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if piv[i] < n - (dim - i) {
                piv[i] += 1;
                for j in i + 1..dim {
                    piv[j] = piv[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return Ok(out);
        }
    }
}

fn compositions(total: usize, slots: usize, caps: &[usize]) -> Vec<Vec<usize>> {
    fn go(total: usize, slot: usize, caps: &[usize], acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot == caps.len() {
            if total == 0 {
                out.push(acc.clone());
            }
            return;
        }
        let remaining_cap: usize = caps[slot + 1..].iter().sum();
        let lo = total.saturating_sub(remaining_cap);
        for v in lo..=total.min(caps[slot]) {
            acc.push(v);
            go(total - v, slot + 1, caps, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    let mut acc = Vec::with_capacity(slots);
    go(total, 0, caps, &mut acc, &mut out);
    out
}

struct BipartSide {
    partition: Partition,
    side0: Vec<usize>,
    comp0: Vec<usize>,
    side_is_first_part: bool,
    q_side: usize,
    q_comp: usize,
}

fn bipart_sides(r: &PartitionFamily, idxs: &[usize], shape: &[usize]) -> Vec<BipartSide> {
    idxs.iter()
        .map(|&i| {
            let partition = r.partitions()[i].clone();
            let a0 = part0(&partition[0]);
            let b0 = part0(&partition[1]);
            let qa = part_point_count(shape, &a0);
            let qb = part_point_count(shape, &b0);
            // Enumerate coefficient subspaces on the smaller side.
            if qa <= qb {
                BipartSide {
                    partition,
                    side0: a0,
                    comp0: b0,
                    side_is_first_part: true,
                    q_side: qa,
                    q_comp: qb,
                }
            } else {
                BipartSide {
                    partition,
                    side0: b0,
                    comp0: a0,
                    side_is_first_part: false,
                    q_side: qb,
                    q_comp: qa,
                }
            }
        })
        .collect()
}

/// Decides whether `t` is a sum of at most `k` bipartition terms drawn from
/// the listed bipartitions, by enumerating per-partition subspaces for the
/// small-side factors and solving one linear membership system per choice.
/// Returns the minimal-total solution found (totals tried in ascending order).
fn subspace_decide(
    t: &Tensor,
    sides: &[BipartSide],
    k: usize,
    budget: &mut NodeBudget,
) -> Result<Option<Vec<CertTerm>>> {
    if t.is_zero() {
        return Ok(Some(vec![]));
    }
    let field = t.field();
    let shape = t.shape().to_vec();
    let q_total = t.num_points();
    let target = t.dense_data().to_vec();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * shape[a + 1];
        }
        s
    };
    let caps: Vec<usize> = sides.iter().map(|s| s.q_side).collect();
    let mut space_cache: HashMap<(usize, usize), Vec<Vec<Vec<u8>>>> = HashMap::new();

    for total in 1..=k {
        for dims in compositions(total, sides.len(), &caps) {
            // Cartesian product over per-partition subspace lists.
            for (side, &dim) in sides.iter().zip(&dims) {
                let key = (side.q_side, dim);
                if let std::collections::hash_map::Entry::Vacant(e) = space_cache.entry(key) {
                    let bases = subspace_bases(field, side.q_side, dim, budget)?;
                    e.insert(bases);
                }
            }
            let lists: Vec<&Vec<Vec<Vec<u8>>>> = sides
                .iter()
                .zip(&dims)
                .map(|(side, &dim)| &space_cache[&(side.q_side, dim)])
                .collect();
            if lists.iter().any(|l| l.is_empty()) {
                continue;
            }
            let mut choice = vec![0usize; sides.len()];
            'tuple: loop {
                budget.charge(1)?;
                // Generators: basis vector on the side, unit vector on the
                // complement, for every (partition, basis row, comp point).
                let mut rows: Vec<Vec<u8>> = Vec::new();
                for (si, side) in sides.iter().enumerate() {
                    let basis = &lists[si][choice[si]];
                    for w in basis {
                        for c in 0..side.q_comp {
                            let mut row = vec![0u8; q_total];
                            // Decode comp point c into axis positions once.
                            let mut base = 0usize;
                            let mut rem = c;
                            for &a in side.comp0.iter().rev() {
                                base += (rem % shape[a]) * strides[a];
                                rem /= shape[a];
                            }
                            for (s, &wv) in w.iter().enumerate() {
                                if wv == 0 {
                                    continue;
                                }
                                let mut off = 0usize;
                                let mut rem = s;
                                for &a in side.side0.iter().rev() {
                                    off += (rem % shape[a]) * strides[a];
                                    rem /= shape[a];
                                }
                                row[base + off] = wv;
                            }
                            rows.push(row);
                        }
                    }
                }
                if rows.is_empty() {
                    break 'tuple;
                }
                let gens = Mat::from_rows(field, &rows);
                if let Some(x) = solve_in_rowspace(&gens, &target) {
                    let mut terms = Vec::new();
                    let mut rix = 0usize;
                    for (si, side) in sides.iter().enumerate() {
                        let basis = &lists[si][choice[si]];
                        for w in basis {
                            let g = x[rix..rix + side.q_comp].to_vec();
                            rix += side.q_comp;
                            if g.iter().all(|&v| v == 0) {
                                continue;
                            }
                            let tables = if side.side_is_first_part {
                                vec![w.clone(), g]
                            } else {
                                vec![g, w.clone()]
                            };
                            terms.push(cert_term_from_tables(
                                t.axes(),
                                &shape,
                                &side.partition,
                                &tables,
                            ));
                        }
                    }
                    return Ok(Some(terms));
                }
                // Advance the tuple odometer.
                let mut si = sides.len();
                loop {
                    if si == 0 {
                        break 'tuple;
                    }
                    si -= 1;
                    choice[si] += 1;
                    if choice[si] < lists[si].len() {
                        break;
                    }
                    choice[si] = 0;
                }
            }
        }
    }
    Ok(None)
}

/// Tensor-rank search for d >= 3: the minimal k such that some k-dimensional
/// superspace of the slice span is spanned by its rank-1 elements. Returns
/// the minimal k at most `k_max` with a full certificate.
fn tr_decide(
    t: &Tensor,
    k_max: usize,
    budget: &mut NodeBudget,
) -> Result<Option<(usize, Vec<CertTerm>)>> {
    let d = t.d();
    let field = t.field();
    let shape = t.shape().to_vec();
    let slice_axis = (0..d).max_by_key(|&a| shape[a]).unwrap();
    let others: Vec<usize> = (0..d).filter(|&a| a != slice_axis).collect();
    let other_axes: Vec<Vec<u32>> = others.iter().map(|&a| t.axes()[a].clone()).collect();
    let slice_parts0: Vec<Vec<usize>> = (0..d - 1).map(|a| vec![a]).collect();

    let mut slice_rows: Vec<Vec<u8>> = Vec::new();
    for z in 0..shape[slice_axis] {
        let s = t.slice(&others, &[z])?;
        slice_rows.push(s.dense_data().to_vec());
    }
    let n = slice_rows[0].len();
    let slice_mat = Mat::from_rows(field, &slice_rows);
    let ech = slice_mat.echelon();
    let r0 = ech.pivots.len();
    if r0 == 0 {
        return Ok(Some((0, vec![])));
    }
    let s0_rows: Vec<Vec<u8>> = (0..r0).map(|r| ech.rref.row(r)).collect();
    let nonpiv: Vec<usize> = (0..n).filter(|c| !ech.pivots.contains(c)).collect();

    for k in r0..=k_max.min(n) {
        for qbasis in subspace_bases(field, nonpiv.len(), k - r0, budget)? {
            budget.charge(1)?;
            let mut basis = s0_rows.clone();
            for qrow in &qbasis {
                let mut lift = vec![0u8; n];
                for (ci, &c) in nonpiv.iter().enumerate() {
                    lift[c] = qrow[ci];
                }
                basis.push(lift);
            }
            // Hunt for k independent rank-1 elements of W.
            let mut chosen_rows: Vec<Vec<u8>> = Vec::new();
            let mut chosen_tables: Vec<Vec<Vec<u8>>> = Vec::new();
            for alpha in all_vectors(field, k) {
                if alpha.iter().all(|&a| a == 0) {
                    continue;
                }
                // Projective normalization: first nonzero coefficient is 1.
                if *alpha.iter().find(|&&a| a != 0).unwrap() != 1 {
                    continue;
                }
                budget.charge(1)?;
                let mut elem = vec![0u8; n];
                for (i, &a) in alpha.iter().enumerate() {
                    if a != 0 {
                        for (j, e) in elem.iter_mut().enumerate() {
                            *e = field.add(*e, field.mul(a, basis[i][j]));
                        }
                    }
                }
                let elem_t = Tensor::from_dense(field, other_axes.clone(), elem.clone())?;
                let Some(tables) = term_factor(&elem_t, &slice_parts0) else {
                    continue;
                };
                let mut trial = chosen_rows.clone();
                trial.push(elem.clone());
                if Mat::from_rows(field, &trial).rank() == trial.len() {
                    chosen_rows = trial;
                    chosen_tables.push(tables);
                    if chosen_rows.len() == k {
                        break;
                    }
                }
            }
            if chosen_rows.len() < k {
                continue;
            }
            // Express every slice in the chosen rank-1 basis.
            let chosen_mat = Mat::from_rows(field, &chosen_rows);
            let mut coeffs: Vec<Vec<u8>> = Vec::new();
            for row in &slice_rows {
                let x = solve_in_rowspace(&chosen_mat, row)
                    .expect("slices lie in the spanned space");
                coeffs.push(x);
            }
            let partition: Partition = (1..=d).map(|c| vec![c]).collect();
            let mut terms = Vec::new();
            for (i, factor_tables) in chosen_tables.iter().enumerate() {
                let mut tables = factor_tables.clone();
                let slice_coeff: Vec<u8> =
                    (0..shape[slice_axis]).map(|z| coeffs[z][i]).collect();
                tables.insert(slice_axis, slice_coeff);
                terms.push(cert_term_from_tables(t.axes(), &shape, &partition, &tables));
            }
            return Ok(Some((k, terms)));
        }
    }
    Ok(None)
}

/// Certificate for an order-3 slice-rank value obtained from a slice cover:
/// each support point is billed to the first cover slice containing it.
fn cover_certificate(t: &Tensor, cover: &[Constraint], notion: String) -> RankCertificate {
    let shape = t.shape().to_vec();
    let mut terms = Vec::new();
    let support = t.support();
    for c in cover {
        let Constraint::AxisEq { axis, value } = *c else {
            unreachable!("slice covers contain only axis constraints");
        };
        let rest0: Vec<usize> = (0..t.d()).filter(|&a| a != axis).collect();
        let q_rest = part_point_count(&shape, &rest0);
        let mut rest_table = vec![0u8; q_rest];
        for p in &support {
            let labels = t.labels_of(p);
            if labels[axis] != value {
                continue;
            }
            // Billed to the first covering slice only.
            let first = cover
                .iter()
                .find(|cc| {
                    let Constraint::AxisEq { axis: a2, value: v2 } = **cc else {
                        return false;
                    };
                    labels[a2] == v2
                })
                .unwrap();
            if first != c {
                continue;
            }
            rest_table[proj_index(p, &rest0, &shape)] = t.get(p);
        }
        let mut axis_table = vec![0u8; shape[axis]];
        let pos = t.position_of(axis, value).expect("cover value is a label");
        axis_table[pos] = 1;
        let partition = canonical_partition(vec![
            vec![axis + 1],
            rest0.iter().map(|&a| a + 1).collect(),
        ]);
        let tables = if partition[0] == vec![axis + 1] {
            vec![axis_table, rest_table]
        } else {
            vec![rest_table, axis_table]
        };
        terms.push(cert_term_from_tables(t.axes(), &shape, &partition, &tables));
    }
    RankCertificate::new(notion, terms)
}

struct TermCand {
    key: Vec<u8>,
    values: Vec<u8>,
    term: CertTerm,
}

/// All normalized product terms over the family's non-bipartition partitions.
/// Anchored mode keeps only terms nonzero at `anchor`, pinning the anchored
/// entry of every factor (the last factor carries the free scalar).
fn term_candidates(
    t: &Tensor,
    nparts: &[(usize, Vec<Vec<usize>>, Partition)],
    anchor: Option<&[usize]>,
    budget: &mut NodeBudget,
) -> Result<Vec<TermCand>> {
    let field = t.field();
    let shape = t.shape().to_vec();
    let mut out = Vec::new();
    for (pi, parts0, partition) in nparts {
        let m = parts0.len();
        // Per-part candidate tables.
        let mut options: Vec<Vec<Vec<u8>>> = Vec::with_capacity(m);
        for (j, p0) in parts0.iter().enumerate() {
            let q = part_point_count(&shape, p0);
            let mut tabs = Vec::new();
            match anchor {
                Some(e) => {
                    let a = proj_index(e, p0, &shape);
                    let pinned: Vec<u8> = if j + 1 == m {
                        field.nonzero_elements().collect()
                    } else {
                        vec![1]
                    };
                    for free in all_vectors(field, q - 1) {
                        for &pv in &pinned {
                            let mut tab = Vec::with_capacity(q);
                            let mut fi = 0;
                            for s in 0..q {
                                if s == a {
                                    tab.push(pv);
                                } else {
                                    tab.push(free[fi]);
                                    fi += 1;
                                }
                            }
                            tabs.push(tab);
                        }
                    }
                }
                None => {
                    for v in all_vectors(field, q) {
                        let Some(first) = v.iter().find(|&&x| x != 0) else {
                            continue;
                        };
                        // All but the last part are projectively normalized.
                        if j + 1 < m && *first != 1 {
                            continue;
                        }
                        tabs.push(v);
                    }
                }
            }
            options.push(tabs);
        }
        let mut choice = vec![0usize; m];
        'odometer: loop {
            budget.charge(1)?;
            let tables: Vec<Vec<u8>> =
                choice.iter().enumerate().map(|(j, &c)| options[j][c].clone()).collect();
            let values = term_values(field, &shape, parts0, &tables);
            let mut key = vec![*pi as u8];
            for tab in &tables {
                key.extend_from_slice(tab);
            }
            let term = cert_term_from_tables(t.axes(), &shape, partition, &tables);
            out.push(TermCand { key, values, term });
            let mut j = m;
            loop {
                if j == 0 {
                    break 'odometer;
                }
                j -= 1;
                choice[j] += 1;
                if choice[j] < options[j].len() {
                    break;
                }
                choice[j] = 0;
            }
        }
    }
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}

/// Depth-first decision search for families with non-bipartition partitions.
/// When the family also contains bipartitions, every node first tries to
/// close the residual through the bipartition subspace solver.
fn generic_decide(
    t: &Tensor,
    r: &PartitionFamily,
    k: usize,
    budget: &mut NodeBudget,
) -> Result<Option<Vec<CertTerm>>> {
    let shape = t.shape().to_vec();
    let mut npart_list: Vec<(usize, Vec<Vec<usize>>, Partition)> = Vec::new();
    let mut bipart_idxs: Vec<usize> = Vec::new();
    for (i, p) in r.partitions().iter().enumerate() {
        if p.len() == 2 {
            bipart_idxs.push(i);
        } else {
            npart_list.push((i, p.iter().map(|part| part0(part)).collect(), p.clone()));
        }
    }
    let sides = bipart_sides(r, &bipart_idxs, &shape);
    let anchored = sides.is_empty();

    struct DfsCtx<'a> {
        r: &'a PartitionFamily,
        nparts: &'a [(usize, Vec<Vec<usize>>, Partition)],
        sides: &'a [BipartSide],
        anchored: bool,
    }

    fn dfs(
        residual: &Tensor,
        k_rem: usize,
        last: Option<&(Vec<usize>, Vec<u8>)>,
        ctx: &DfsCtx,
        budget: &mut NodeBudget,
    ) -> Result<Option<Vec<CertTerm>>> {
        budget.charge(1)?;
        if residual.is_zero() {
            return Ok(Some(vec![]));
        }
        if flattening_lower_bound(residual, ctx.r) > k_rem {
            return Ok(None);
        }
        if !ctx.sides.is_empty() {
            if let Some(terms) = subspace_decide(residual, ctx.sides, k_rem, budget)? {
                return Ok(Some(terms));
            }
        }
        if k_rem == 0 {
            return Ok(None);
        }
        let anchor = residual.first_nonzero().expect("residual nonzero");
        let cands = term_candidates(
            residual,
            ctx.nparts,
            if ctx.anchored { Some(&anchor) } else { None },
            budget,
        )?;
        let field = residual.field();
        let axes = residual.axes().to_vec();
        for cand in cands {
            if let Some((last_anchor, last_key)) = last {
                let same_run = if ctx.anchored { *last_anchor == anchor } else { true };
                if same_run && cand.key <= *last_key {
                    continue;
                }
            }
            let next_data: Vec<u8> = residual
                .dense_data()
                .iter()
                .zip(&cand.values)
                .map(|(&a, &b)| field.sub(a, b))
                .collect();
            let next = Tensor::from_dense(field, axes.clone(), next_data)?;
            let marker = (anchor.clone(), cand.key.clone());
            if let Some(mut rest) = dfs(&next, k_rem - 1, Some(&marker), ctx, budget)? {
                rest.insert(0, cand.term);
                return Ok(Some(rest));
            }
        }
        Ok(None)
    }

    let ctx = DfsCtx { r, nparts: &npart_list, sides: &sides, anchored };
    dfs(t, k, None, &ctx, budget)
}

fn check_family(t: &Tensor, r: &PartitionFamily) -> Result<()> {
    if r.d() != t.d() {
        return Err(Error::AxisMismatch);
    }
    Ok(())
}

fn antichain_sr3(t: &Tensor, r: &PartitionFamily, opts: OracleOptions) -> bool {
    opts.use_cover_fast_path
        && t.d() == 3
        && *r == PartitionFamily::slice_rank(3)
        && t.support_size() <= MAX_COVER_POINTS
        && SupportSet::from_tensor(t).is_antichain()
}

fn matrix_certificate(t: &Tensor, notion: String) -> RankCertificate {
    let m = t.as_matrix();
    let (l, rmat) = m.rank_factorization();
    let shape = t.shape().to_vec();
    let partition: Partition = vec![vec![1], vec![2]];
    let mut terms = Vec::new();
    for i in 0..l.cols() {
        let tables = vec![l.col(i), rmat.row(i)];
        terms.push(cert_term_from_tables(t.axes(), &shape, &partition, &tables));
    }
    RankCertificate::new(notion, terms)
}

/// Decides Rrk(t) <= k, returning a certificate or a proof of infeasibility.
pub fn rrank_decide(
    t: &Tensor,
    r: &PartitionFamily,
    k: usize,
    budget: &mut NodeBudget,
) -> Result<Decision> {
    rrank_decide_with(t, r, k, budget, OracleOptions::default())
}

pub fn rrank_decide_with(
    t: &Tensor,
    r: &PartitionFamily,
    k: usize,
    budget: &mut NodeBudget,
    opts: OracleOptions,
) -> Result<Decision> {
    check_family(t, r)?;
    let notion = family_notion(r);
    if t.is_zero() {
        return Ok(Decision::Certified(RankCertificate::new(notion, vec![])));
    }
    if t.d() == 2 {
        let rank = t.as_matrix().rank();
        return Ok(if rank <= k {
            Decision::Certified(matrix_certificate(t, notion))
        } else {
            Decision::Infeasible
        });
    }
    if antichain_sr3(t, r, opts) {
        let sol = scc_exact(&SupportSet::from_tensor(t))?;
        return Ok(if sol.size <= k {
            Decision::Certified(cover_certificate(t, &sol.covers, notion))
        } else {
            Decision::Infeasible
        });
    }
    if r.is_tensor_rank() {
        return Ok(match tr_decide(t, k, budget)? {
            Some((_, terms)) => Decision::Certified(RankCertificate::new(notion, terms)),
            None => Decision::Infeasible,
        });
    }
    if r.all_bipartitions() {
        let idxs: Vec<usize> = (0..r.partitions().len()).collect();
        let sides = bipart_sides(r, &idxs, t.shape());
        return Ok(match subspace_decide(t, &sides, k, budget)? {
            Some(terms) => Decision::Certified(RankCertificate::new(notion, terms)),
            None => Decision::Infeasible,
        });
    }
    Ok(match generic_decide(t, r, k, budget)? {
        Some(terms) => Decision::Certified(RankCertificate::new(notion, terms)),
        None => Decision::Infeasible,
    })
}

/// True iff Rrk(t) >= l, by deciding at threshold l-1.
pub fn rrank_at_least(
    t: &Tensor,
    r: &PartitionFamily,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<bool> {
    if l == 0 {
        return Ok(true);
    }
    Ok(matches!(rrank_decide(t, r, l - 1, budget)?, Decision::Infeasible))
}

/// Exact R-rank by iterative deepening, with certificate and exhaustion
/// evidence.
pub fn rrank_exact(t: &Tensor, r: &PartitionFamily, budget: &mut NodeBudget) -> Result<RankReport> {
    rrank_exact_with(t, r, budget, OracleOptions::default())
}

pub fn rrank_exact_with(
    t: &Tensor,
    r: &PartitionFamily,
    budget: &mut NodeBudget,
    opts: OracleOptions,
) -> Result<RankReport> {
    check_family(t, r)?;
    let notion = family_notion(r);
    let report = |value: usize, certificate: RankCertificate, method: &str, budget: &NodeBudget| {
        RankReport {
            notion: notion.clone(),
            value,
            certificate,
            exhaustion: Exhaustion {
                failed_depth: value.checked_sub(1),
                nodes: budget.used(),
                method: method.into(),
            },
        }
    };
    if t.is_zero() {
        let cert = RankCertificate::new(notion.clone(), vec![]);
        return Ok(report(0, cert, "zero", budget));
    }
    if t.d() == 2 {
        let value = t.as_matrix().rank();
        let cert = matrix_certificate(t, notion.clone());
        debug_assert_eq!(cert.value, value);
        return Ok(report(value, cert, "matrix-rank", budget));
    }
    if antichain_sr3(t, r, opts) {
        let sol = scc_exact(&SupportSet::from_tensor(t))?;
        let cert = cover_certificate(t, &sol.covers, notion.clone());
        debug_assert_eq!(cert.value, sol.size);
        return Ok(report(sol.size, cert, "cover-minimality", budget));
    }
    let cap = t.support_size();
    if r.is_tensor_rank() {
        let (value, terms) = tr_decide(t, cap, budget)?
            .ok_or_else(|| Error::VerificationFailed("tensor rank exceeds support size".into()))?;
        let cert = RankCertificate::new(notion.clone(), terms);
        debug_assert_eq!(cert.value, value);
        return Ok(report(value, cert, "spanning-subspace", budget));
    }
    if r.all_bipartitions() {
        let idxs: Vec<usize> = (0..r.partitions().len()).collect();
        let sides = bipart_sides(r, &idxs, t.shape());
        let terms = subspace_decide(t, &sides, cap, budget)?
            .ok_or_else(|| Error::VerificationFailed("rank exceeds support size".into()))?;
        let cert = RankCertificate::new(notion.clone(), terms);
        let value = cert.value;
        return Ok(report(value, cert, "subspace-membership", budget));
    }
    for k in flattening_lower_bound(t, r)..=cap {
        if let Some(terms) = generic_decide(t, r, k, budget)? {
            let cert = RankCertificate::new(notion.clone(), terms);
            debug_assert_eq!(cert.value, k);
            return Ok(report(k, cert, "term-search", budget));
        }
    }
    Err(Error::VerificationFailed("rank exceeds support size".into()))
}

/// Exact R-rank with the covering shortcut disabled, for cross-checks.
pub fn rrank_exact_search(
    t: &Tensor,
    r: &PartitionFamily,
    budget: &mut NodeBudget,
) -> Result<RankReport> {
    rrank_exact_with(t, r, budget, OracleOptions { use_cover_fast_path: false })
}

/// Finite or provably infinite spanning rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanningRank {
    Finite(usize),
    Infinite,
}

/// Minimal number of elements of S whose span contains all of F, together
/// with the first witnessing index subset in lexicographic order.
pub fn spanning_rank_full(
    s: &[Tensor],
    f: &[Tensor],
    budget: &mut NodeBudget,
) -> Result<(SpanningRank, Option<Vec<usize>>)> {
    if f.is_empty() {
        return Ok((SpanningRank::Finite(0), Some(vec![])));
    }
    let field = f[0].field();
    let axes = f[0].axes();
    for t in s.iter().chain(f.iter()) {
        if t.axes() != axes || t.field() != field {
            return Err(Error::AxisMismatch);
        }
    }
    let f_rows: Vec<Vec<u8>> = f.iter().map(|t| t.dense_data().to_vec()).collect();
    let r_f = Mat::from_rows(field, &f_rows).rank();
    if r_f == 0 {
        return Ok((SpanningRank::Finite(0), Some(vec![])));
    }
    let s_rows: Vec<Vec<u8>> = s.iter().map(|t| t.dense_data().to_vec()).collect();
    let mut all_rows = s_rows.clone();
    all_rows.extend(f_rows.iter().cloned());
    let r_s = if s_rows.is_empty() { 0 } else { Mat::from_rows(field, &s_rows).rank() };
    if Mat::from_rows(field, &all_rows).rank() > r_s {
        return Ok((SpanningRank::Infinite, None));
    }
    for k in r_f..=s.len() {
        for combo in (0..s.len()).combinations(k) {
            budget.charge(1)?;
            let mut rows: Vec<Vec<u8>> = combo.iter().map(|&i| s_rows[i].clone()).collect();
            let sub_rank = Mat::from_rows(field, &rows).rank();
            rows.extend(f_rows.iter().cloned());
            if Mat::from_rows(field, &rows).rank() == sub_rank {
                return Ok((SpanningRank::Finite(k), Some(combo)));
            }
        }
    }
    unreachable!("the full set spans F, so some subset must have been found");
}

/// Minimal number of elements of S whose span contains all of F.
pub fn spanning_rank(s: &[Tensor], f: &[Tensor], budget: &mut NodeBudget) -> Result<SpanningRank> {
    spanning_rank_full(s, f, budget).map(|(v, _)| v)
}

/// Positions whose label tuples have at least two equal coordinates.
pub(crate) fn diagonal_positions(t: &Tensor) -> Vec<Vec<usize>> {
    points(t.shape())
        .filter(|idx| crate::tensor::has_equal_pair(&t.labels_of(idx)))
        .collect()
}

/// Admissible lower bound on min Rrk over all completions of the positions in
/// `free`: flattening ranks of the fully determined submatrices.
pub(crate) fn masked_lower_bound(t: &Tensor, r: &PartitionFamily, free: &[Vec<usize>]) -> usize {
    if free.is_empty() {
        return flattening_lower_bound(t, r);
    }
    let d = t.d();
    let shape = t.shape();
    let mut best = 0usize;
    for mask in 1..(1usize << d) - 1 {
        let i_set: Vec<usize> = (0..d).filter(|a| mask >> a & 1 == 1).collect();
        let comp: Vec<usize> = (0..d).filter(|a| !i_set.contains(a)).collect();
        let mut per_term = 1usize;
        for p in r.partitions() {
            let mut cp = 1usize;
            for part in p {
                let p0 = part0(part);
                let inside: Vec<usize> =
                    p0.iter().copied().filter(|a| i_set.contains(a)).collect();
                if inside.is_empty() || inside.len() == p0.len() {
                    continue;
                }
                let outside: Vec<usize> =
                    p0.iter().copied().filter(|a| !i_set.contains(a)).collect();
                cp = cp.saturating_mul(
                    part_point_count(shape, &inside).min(part_point_count(shape, &outside)),
                );
            }
            per_term = per_term.max(cp);
        }
        let flat = t.flatten(&i_set).expect("proper flattening");
        let mut bad_rows = vec![false; flat.rows()];
        let mut bad_cols = vec![false; flat.cols()];
        for idx in free {
            bad_rows[proj_index(idx, &i_set, shape)] = true;
            bad_cols[proj_index(idx, &comp, shape)] = true;
        }
        let keep_rows: Vec<usize> = (0..flat.rows()).filter(|&i| !bad_rows[i]).collect();
        let keep_cols: Vec<usize> = (0..flat.cols()).filter(|&j| !bad_cols[j]).collect();
        if keep_rows.is_empty() || keep_cols.is_empty() {
            continue;
        }
        let rank = flat.submatrix(&keep_rows, &keep_cols).rank();
        best = best.max(rank.div_ceil(per_term));
    }
    best
}

/// Minimal Rrk(t + V) over modifier tensors V supported on the positions
/// with two equal labels, with the achieving V.
pub fn essential_rank_exact(
    t: &Tensor,
    r: &PartitionFamily,
    budget: &mut NodeBudget,
) -> Result<(usize, Tensor)> {
    check_family(t, r)?;
    let e_pos = diagonal_positions(t);
    let zero_v = Tensor::zeros(t.field(), t.axes().to_vec())?;
    if e_pos.is_empty() {
        let rep = rrank_exact(t, r, budget)?;
        return Ok((rep.value, zero_v));
    }
    let field = t.field();
    let p = field.order();

    struct St<'a> {
        e_pos: &'a [Vec<usize>],
        r: &'a PartitionFamily,
        best: Option<(usize, Tensor)>,
    }

    fn go(
        i: usize,
        current: &mut Tensor,
        st: &mut St,
        p: u8,
        budget: &mut NodeBudget,
    ) -> Result<()> {
        budget.charge(1)?;
        if let Some((bv, _)) = &st.best {
            if *bv == 0 || masked_lower_bound(current, st.r, &st.e_pos[i..]) >= *bv {
                return Ok(());
            }
        }
        if i == st.e_pos.len() {
            let rep = rrank_exact(current, st.r, budget)?;
            if st.best.as_ref().is_none_or(|(bv, _)| rep.value < *bv) {
                st.best = Some((rep.value, current.clone()));
            }
            return Ok(());
        }
        let idx = st.e_pos[i].clone();
        let old = current.get(&idx);
        for w in 0..p {
            current.set(&idx, w);
            go(i + 1, current, st, p, budget)?;
        }
        current.set(&idx, old);
        Ok(())
    }

    let mut st = St { e_pos: &e_pos, r, best: None };
    let mut current = t.clone();
    go(0, &mut current, &mut st, p, budget)?;
    let (value, achieved) = st.best.expect("search visits at least one leaf");
    Ok((value, achieved.sub(t)))
}

/// Maximal Rrk over restrictions to pairwise-disjoint label subsets, with the
/// achieving selection. Labels owned by a single axis are always kept; labels
/// shared between axes are assigned to exactly one of them.
pub fn disjoint_rank_exact(
    t: &Tensor,
    r: &PartitionFamily,
    budget: &mut NodeBudget,
) -> Result<(usize, MinorSelection)> {
    check_family(t, r)?;
    let d = t.d();
    let mut owners: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (a, axis) in t.axes().iter().enumerate() {
        for &l in axis {
            owners.entry(l).or_default().push(a);
        }
    }
    let shared: Vec<(u32, Vec<usize>)> =
        owners.iter().filter(|(_, axs)| axs.len() > 1).map(|(&l, a)| (l, a.clone())).collect();
    let exclusive: Vec<Vec<u32>> = (0..d)
        .map(|a| t.axes()[a].iter().copied().filter(|l| owners[l].len() == 1).collect())
        .collect();

    let mut best: Option<(usize, MinorSelection)> = None;
    let mut choice = vec![0usize; shared.len()];
    loop {
        budget.charge(1)?;
        let mut subsets = exclusive.clone();
        for ((label, axs), &c) in shared.iter().zip(&choice) {
            subsets[axs[c]].push(*label);
        }
        for s in &mut subsets {
            s.sort_unstable();
        }
        let sel = MinorSelection::new_disjoint(subsets.clone());
        let value = if subsets.iter().all(|s| !s.is_empty()) {
            rrank_exact(&t.restrict(&sel)?, r, budget)?.value
        } else {
            0
        };
        if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
            best = Some((value, sel));
        }
        // Advance the assignment odometer.
        let mut i = shared.len();
        loop {
            if i == 0 {
                return Ok(best.expect("at least one assignment enumerated"));
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < shared[i].1.len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

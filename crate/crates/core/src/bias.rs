//! Bias and analytic rank of multilinear forms, and the finite-field
//! partition-rank minor pipeline built on them.
//!
//! The bias is computed through its vanishing-probability form: enumerate
//! coefficient vectors for all axes but the last and count the tuples whose
//! contraction is the zero linear form. This keeps every value an exact
//! rational with denominator a power of the field order, so the averaging
//! identity and the rank inequalities can be checked without rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::algebra::{all_vectors, solve_in_rowspace, Mat};
use crate::error::{Error, Result};
use crate::oracle::{rrank_at_least, rrank_exact, NodeBudget};
use crate::par::Parallelism;
use crate::tensor::{MinorSelection, PartitionFamily, Tensor};

/// Hard cap on enumerated coefficient tuples in exact bias computations.
pub const BIAS_ENUM_CAP: u64 = 1 << 24;

/// An exact or estimated bias value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BiasValue {
    /// Exactly `vanishing / |F|^exp`.
    Exact { vanishing: u128, exp: u32, field_order: u64 },
    /// Monte-Carlo estimate `hits / samples` under the recorded seed.
    Estimate { hits: u64, samples: u64, seed: u64 },
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl BiasValue {
    /// The value as a reduced fraction.
    pub fn fraction(&self) -> (u128, u128) {
        match *self {
            BiasValue::Exact { vanishing, exp, field_order } => {
                let den = (field_order as u128).pow(exp);
                let g = gcd(vanishing.max(1), den);
                if vanishing == 0 {
                    (0, 1)
                } else {
                    (vanishing / g, den / g)
                }
            }
            BiasValue::Estimate { hits, samples, .. } => {
                let g = gcd((hits as u128).max(1), samples as u128);
                if hits == 0 {
                    (0, 1)
                } else {
                    (hits as u128 / g, samples as u128 / g)
                }
            }
        }
    }

    pub fn rational_string(&self) -> String {
        let (n, d) = self.fraction();
        format!("{n}/{d}")
    }

    pub fn approx(&self) -> f64 {
        let (n, d) = self.fraction();
        n as f64 / d as f64
    }
}

/// Evaluates the multilinear form of `t` at one coefficient vector per axis.
pub fn multilinear_eval(t: &Tensor, us: &[Vec<u8>]) -> Result<u8> {
    if us.len() != t.d() {
        return Err(Error::AxisMismatch);
    }
    let f = t.field();
    for (a, u) in us.iter().enumerate() {
        if u.len() != t.shape()[a] {
            return Err(Error::AxisMismatch);
        }
        if let Some(&v) = u.iter().find(|&&v| !f.contains(v)) {
            return Err(Error::InvalidData(format!(
                "coefficient {v} not reduced mod {}",
                f.order()
            )));
        }
    }
    let mut acc = 0u8;
    for idx in crate::tensor::points(t.shape()) {
        let mut prod = t.get(&idx);
        for (a, u) in us.iter().enumerate() {
            if prod == 0 {
                break;
            }
            prod = f.mul(prod, u[idx[a]]);
        }
        acc = f.add(acc, prod);
    }
    Ok(acc)
}

/// Number of coefficient tuples over all axes but the last whose contraction
/// of `t` is the identically-zero linear form.
fn vanishing_count(t: &Tensor) -> u128 {
    if t.d() == 1 {
        return u128::from(t.is_zero());
    }
    let mut total = 0u128;
    for u in all_vectors(t.field(), t.shape()[0]) {
        let c = t.contract(0, &u).expect("contraction of a d >= 2 tensor");
        total += vanishing_count(&c);
    }
    total
}

fn bias_exact_work(t: &Tensor) -> Result<u32> {
    let p = u64::from(t.field().order());
    let exp: u32 = t.shape()[..t.d() - 1].iter().map(|&q| q as u32).sum();
    let mut work = 1u64;
    for _ in 0..exp {
        work = work.saturating_mul(p);
        if work > BIAS_ENUM_CAP {
            return Err(Error::ScaleExceeded { budget: BIAS_ENUM_CAP });
        }
    }
    Ok(exp)
}

/// Exact bias: the probability that contracting `t` by random coefficient
/// vectors on all axes but the last yields the zero linear form.
pub fn bias_exact(t: &Tensor, par: Parallelism) -> Result<BiasValue> {
    if t.d() < 2 {
        return Err(Error::BadAxisSet);
    }
    let exp = bias_exact_work(t)?;
    let first = all_vectors(t.field(), t.shape()[0]);
    let count = match par {
        Parallelism::Sequential => first
            .into_iter()
            .map(|u| vanishing_count(&t.contract(0, &u).expect("valid contraction")))
            .sum::<u128>(),
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => first
            .into_par_iter()
            .map(|u| vanishing_count(&t.contract(0, &u).expect("valid contraction")))
            .sum::<u128>(),
    };
    Ok(BiasValue::Exact { vanishing: count, exp, field_order: u64::from(t.field().order()) })
}

fn mc_hit(t: &Tensor, seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let p = t.field().order();
    let mut work = t.clone();
    while work.d() > 1 {
        let u: Vec<u8> = (0..work.shape()[0]).map(|_| rng.gen_range(0..p)).collect();
        work = work.contract(0, &u).expect("valid contraction");
    }
    u64::from(work.is_zero())
}

/// Monte-Carlo bias estimate. Sample streams are derived from the seed and
/// the sample index, so the result is independent of worker count.
pub fn bias_mc(t: &Tensor, samples: u64, seed: u64, par: Parallelism) -> Result<BiasValue> {
    if t.d() < 2 {
        return Err(Error::BadAxisSet);
    }
    if samples == 0 {
        return Err(Error::ParameterOutOfRange("samples must be positive".into()));
    }
    let hits = match par {
        Parallelism::Sequential => (0..samples).map(|i| mc_hit(t, seed, i)).sum(),
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => (0..samples).into_par_iter().map(|i| mc_hit(t, seed, i)).sum(),
    };
    Ok(BiasValue::Estimate { hits, samples, seed })
}

/// The analytic rank: minus the base-|F| logarithm of the exact bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticRank {
    /// Set when the bias is an exact power of the field order.
    pub exact: Option<u32>,
    /// Largest integer with |F|^{-lo} >= bias.
    pub lo: u32,
    /// Smallest integer with |F|^{-hi} <= bias.
    pub hi: u32,
    pub approx: f64,
}

pub fn analytic_rank(t: &Tensor, par: Parallelism) -> Result<AnalyticRank> {
    let BiasValue::Exact { vanishing, exp, field_order } = bias_exact(t, par)? else {
        unreachable!("bias_exact returns exact values");
    };
    let p = field_order as u128;
    debug_assert!(vanishing >= 1, "the zero tuple always vanishes");
    // bias = vanishing / p^exp; find j with p^j <= vanishing <= p^{j+1}.
    let mut j = 0u32;
    let mut power = 1u128;
    while power.saturating_mul(p) <= vanishing {
        power = power.saturating_mul(p);
        j += 1;
    }
    let exact = (power == vanishing).then_some(exp - j);
    let lo = exp - j - u32::from(power != vanishing);
    let hi = exp - j;
    let approx = exp as f64 - (vanishing as f64).ln() / (field_order as f64).ln();
    Ok(AnalyticRank { exact, lo, hi, approx })
}

/// Vanishing count by direct enumeration: walk every coefficient tuple for
/// the leading axes as one base-p odometer and accumulate the resulting
/// linear form on the last axis straight from the support, with no
/// intermediate contractions.
fn vanishing_count_direct(t: &Tensor, par: Parallelism) -> Result<u128> {
    let exp = bias_exact_work(t)?;
    let f = t.field();
    let p = u64::from(f.order());
    let d = t.d();
    let support = t.support();
    let values: Vec<u8> = support.iter().map(|x| t.get(x)).collect();
    let offsets: Vec<usize> = t.shape()[..d - 1]
        .iter()
        .scan(0usize, |acc, &q| {
            let start = *acc;
            *acc += q;
            Some(start)
        })
        .collect();
    let total = p.pow(exp);
    let last = t.shape()[d - 1];
    let vanishes = |c: u64| -> u128 {
        let mut digits = vec![0u8; exp as usize];
        let mut rem = c;
        for dgt in digits.iter_mut() {
            *dgt = (rem % p) as u8;
            rem /= p;
        }
        let mut acc = vec![0u8; last];
        for (x, &v) in support.iter().zip(&values) {
            let mut coeff = v;
            for (a, &off) in offsets.iter().enumerate() {
                if coeff == 0 {
                    break;
                }
                coeff = f.mul(coeff, digits[off + x[a]]);
            }
            acc[x[d - 1]] = f.add(acc[x[d - 1]], coeff);
        }
        u128::from(acc.iter().all(|&a| a == 0))
    };
    let count = match par {
        Parallelism::Sequential => (0..total).map(vanishes).sum(),
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => (0..total).into_par_iter().map(vanishes).sum(),
    };
    Ok(count)
}

/// Checks the averaging identity: the bias of `t` equals the average of the
/// biases of its projections over the first axis, as exact rationals. The
/// left side is enumerated directly over coefficient tuples; the right side
/// goes through contractions, so the two sides share no code path.
pub fn averaging_check(t: &Tensor, par: Parallelism) -> Result<bool> {
    if t.d() < 2 {
        return Err(Error::BadAxisSet);
    }
    let exp = bias_exact_work(t)?;
    let lhs_count = vanishing_count_direct(t, par)?;
    let q1 = t.shape()[0] as u32;
    // Right-hand side: sum of per-projection biases over a common denominator.
    let mut rhs_count = 0u128;
    let mut rhs_exp_inner: Option<u32> = None;
    for u in all_vectors(t.field(), t.shape()[0]) {
        let proj = t.contract(0, &u)?;
        if proj.d() == 1 {
            rhs_count += u128::from(proj.is_zero());
            rhs_exp_inner.get_or_insert(0);
        } else {
            let BiasValue::Exact { vanishing: c, exp: e, .. } =
                bias_exact(&proj, Parallelism::Sequential)?
            else {
                unreachable!("bias_exact returns exact values");
            };
            rhs_count += c;
            debug_assert!(rhs_exp_inner.is_none_or(|prev| prev == e));
            rhs_exp_inner.get_or_insert(e);
        }
    }
    let rhs_exp = q1 + rhs_exp_inner.expect("at least the zero vector enumerated");
    Ok(rhs_exp == exp && rhs_count == lhs_count)
}

/// A separated projection family, or the proof that the greedy search for
/// one ran out of candidates.
#[derive(Debug, Clone)]
pub enum Separated {
    Found(Vec<Vec<u8>>),
    Infeasible,
}

/// Builds vectors u_1..u_l over the first axis such that every nonzero
/// linear combination of the projections u_h.t has partition rank at least
/// `q`, by greedy extension; the returned family is re-verified exhaustively
/// over all nonzero combination vectors.
pub fn separated_projections(
    t: &Tensor,
    q: usize,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<Separated> {
    if t.d() < 3 {
        return Err(Error::BadAxisSet);
    }
    if l == 0 || q == 0 {
        return Err(Error::ParameterOutOfRange("q and l must be positive".into()));
    }
    let field = t.field();
    let pr = PartitionFamily::partition_rank(t.d() - 1);
    let q1 = t.shape()[0];
    let mut found: Vec<Vec<u8>> = Vec::new();
    while found.len() < l {
        let mut accepted = false;
        'candidates: for u in all_vectors(field, q1) {
            budget.charge(1)?;
            for v in all_vectors(field, found.len()) {
                let mut shifted = u.clone();
                for (w, &vh) in found.iter().zip(&v) {
                    if vh != 0 {
                        for (s, &wx) in shifted.iter_mut().zip(w) {
                            *s = field.sub(*s, field.mul(vh, wx));
                        }
                    }
                }
                let proj = t.contract(0, &shifted)?;
                if !rrank_at_least(&proj, &pr, q, budget)? {
                    continue 'candidates;
                }
            }
            found.push(u);
            accepted = true;
            break;
        }
        if !accepted {
            return Ok(Separated::Infeasible);
        }
    }
    // Exhaustive check of the defining property.
    for v in all_vectors(field, l) {
        if v.iter().all(|&x| x == 0) {
            continue;
        }
        let mut combo = vec![0u8; q1];
        for (w, &vh) in found.iter().zip(&v) {
            if vh != 0 {
                for (s, &wx) in combo.iter_mut().zip(w) {
                    *s = field.add(*s, field.mul(vh, wx));
                }
            }
        }
        let proj = t.contract(0, &combo)?;
        if !rrank_at_least(&proj, &pr, q, budget)? {
            return Err(Error::VerificationFailed(
                "separated family fails its combination check".into(),
            ));
        }
    }
    Ok(Separated::Found(found))
}

/// Full-rank l-by-l minor of a matrix: independent rows first, then pivot
/// columns of the selected row block.
fn matrix_minor(t: &Tensor, l: usize) -> Result<MinorSelection> {
    let m = t.as_matrix();
    let mut rows: Vec<usize> = Vec::new();
    let mut picked: Vec<Vec<u8>> = Vec::new();
    for i in 0..m.rows() {
        if rows.len() == l {
            break;
        }
        let mut trial = picked.clone();
        trial.push(m.row(i));
        if Mat::from_rows(t.field(), &trial).rank() > picked.len() {
            picked = trial;
            rows.push(i);
        }
    }
    if rows.len() < l {
        return Err(Error::RankTooLow { requested: l, certified: rows.len() });
    }
    let block = Mat::from_rows(t.field(), &picked);
    let cols = block.echelon().pivots;
    debug_assert_eq!(cols.len(), l);
    let x1: Vec<u32> = rows.iter().map(|&i| t.axes()[0][i]).collect();
    let x2: Vec<u32> = cols.iter().map(|&j| t.axes()[1][j]).collect();
    Ok(MinorSelection::new(vec![x1, x2]))
}

/// Greedy shrink of a selection that keeps the partition rank at least `l`:
/// drops labels one at a time whenever the rank survives.
fn shrink_selection(
    t: &Tensor,
    pr: &PartitionFamily,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<MinorSelection> {
    let mut subsets: Vec<Vec<u32>> = t.axes().to_vec();
    for a in 0..t.d() {
        let mut i = 0;
        while i < subsets[a].len() {
            if subsets[a].len() == 1 {
                break;
            }
            let mut trial = subsets.clone();
            trial[a].remove(i);
            let sub = t.restrict(&MinorSelection::new(trial.clone()))?;
            if rrank_at_least(&sub, pr, l, budget)? {
                subsets = trial;
            } else {
                i += 1;
            }
        }
    }
    Ok(MinorSelection::new(subsets))
}

/// Finds a minor selection whose restriction has partition rank at least
/// `l`, following the projection pipeline: a separated projection family,
/// recursive minors of its nonzero combinations, then support reduction of
/// the projection vectors through the span of the restricted slices.
pub fn ff_pr_minor_find(t: &Tensor, l: usize, budget: &mut NodeBudget) -> Result<MinorSelection> {
    if l == 0 {
        return Err(Error::ParameterOutOfRange("l must be positive".into()));
    }
    let d = t.d();
    let pr = PartitionFamily::partition_rank(d);
    if d == 2 {
        return matrix_minor(t, l);
    }
    let oracle_pr = rrank_exact(t, &pr, budget)?.value;
    if oracle_pr < l {
        return Err(Error::RankTooLow { requested: l, certified: oracle_pr });
    }
    let pipeline = ff_pr_pipeline(t, l, budget)?;
    let sel = match pipeline {
        Some(sel) => sel,
        // Outside the regime where the separated-family route is guaranteed,
        // fall back to greedy shrinking; the rank bound is already certain.
        None => shrink_selection(t, &pr, l, budget)?,
    };
    let sub = t.restrict(&sel)?;
    if !rrank_at_least(&sub, &pr, l, budget)? {
        return Err(Error::VerificationFailed("minor lost the required rank".into()));
    }
    Ok(sel)
}

fn ff_pr_pipeline(
    t: &Tensor,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<Option<MinorSelection>> {
    let d = t.d();
    let field = t.field();
    let us = match separated_projections(t, l, l, budget)? {
        Separated::Found(us) => us,
        Separated::Infeasible => return Ok(None),
    };
    // Recursive minors for every nonzero combination, unioned per axis.
    let mut unions: Vec<std::collections::BTreeSet<u32>> = vec![Default::default(); d - 1];
    for v in all_vectors(field, l) {
        if v.iter().all(|&x| x == 0) {
            continue;
        }
        let mut combo = vec![0u8; t.shape()[0]];
        for (w, &vh) in us.iter().zip(&v) {
            if vh != 0 {
                for (s, &wx) in combo.iter_mut().zip(w) {
                    *s = field.add(*s, field.mul(vh, wx));
                }
            }
        }
        let proj = t.contract(0, &combo)?;
        let sel = match ff_pr_minor_find(&proj, l, budget) {
            Ok(sel) => sel,
            Err(Error::RankTooLow { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        for (a, subset) in sel.subsets.iter().enumerate() {
            unions[a].extend(subset.iter().copied());
        }
    }
    // Restrict the trailing axes, then reduce the support of the projection
    // vectors to a spanning set of restricted slices.
    let mut trailing: Vec<Vec<u32>> = vec![t.axes()[0].clone()];
    trailing.extend(unions.iter().map(|s| s.iter().copied().collect::<Vec<u32>>()));
    let restricted = t.restrict(&MinorSelection::new(trailing))?;
    let keep: Vec<usize> = (1..d).collect();
    let slice_rows: Vec<Vec<u8>> = (0..restricted.shape()[0])
        .map(|x| restricted.slice(&keep, &[x]).expect("slice of restricted tensor"))
        .map(|s| s.dense_data().to_vec())
        .collect();
    let mut x1_pos: Vec<usize> = Vec::new();
    let mut picked: Vec<Vec<u8>> = Vec::new();
    for (i, row) in slice_rows.iter().enumerate() {
        let mut trial = picked.clone();
        trial.push(row.clone());
        if Mat::from_rows(field, &trial).rank() > picked.len() {
            picked = trial;
            x1_pos.push(i);
        }
    }
    let basis = Mat::from_rows(field, &picked);
    // Push each projection vector through the slice-expansion coefficients.
    let mut reduced_us: Vec<Vec<u8>> = vec![vec![0u8; x1_pos.len()]; us.len()];
    for (x, row) in slice_rows.iter().enumerate() {
        let coeffs = solve_in_rowspace(&basis, row).expect("slices lie in the picked span");
        for (uh, red) in us.iter().zip(reduced_us.iter_mut()) {
            let ux = uh[x];
            if ux != 0 {
                for (r, &c) in red.iter_mut().zip(&coeffs) {
                    *r = field.add(*r, field.mul(ux, c));
                }
            }
        }
    }
    let x1: Vec<u32> = x1_pos.iter().map(|&i| t.axes()[0][i]).collect();
    let mut subsets = vec![x1];
    subsets.extend(unions.iter().map(|s| s.iter().copied().collect::<Vec<u32>>()));
    let sel = MinorSelection::new(subsets);
    // The reduced projection vectors must act on the minor exactly as the
    // originals act on the trailing-axes restriction.
    let minor = t.restrict(&sel)?;
    for (uh, red) in us.iter().zip(&reduced_us) {
        let full_action = restricted.contract(0, uh)?;
        let minor_action = minor.contract(0, red)?;
        if !full_action.sub(&minor_action).is_zero() {
            return Err(Error::VerificationFailed(
                "support reduction changed a projection's action".into(),
            ));
        }
    }
    Ok(Some(sel))
}

//! Constructive extraction of small high-rank minors.
//!
//! Every operation returns an explicit restriction, and every emitted
//! selection is re-certified by the exact oracles before it is returned. The
//! heavy lifting is shared between three mechanisms: a row-removal pass that
//! preserves `min(rank, k)` for every linear combination of a matrix family,
//! a radius process that either grows a separated slice family or certifies
//! that every slice is approximated over the family found so far, and
//! decomposition rewrites that trade a coarse rank notion for a finer one at
//! a bounded multiplicative cost. The general engine stages these routes and
//! falls back to certified label shrinking when the staged thresholds are out
//! of reach at the current scale.

use std::collections::BTreeSet;

use crate::algebra::{all_vectors, dual_basis, nullspace_basis, solve_in_rowspace, Field, Mat};
use crate::error::{Error, Result};
use crate::oracle::{
    family_notion, rrank_at_least, rrank_exact, CertTerm, FactorTable, NodeBudget,
    RankCertificate,
};
use crate::tensor::{points, DownShadow, MinorSelection, Partition, PartitionFamily, Tensor};

/// All nonzero coefficient vectors of length `n`, in lexicographic order.
pub(crate) fn nonzero_vectors(field: Field, n: usize) -> Vec<Vec<u8>> {
    all_vectors(field, n).into_iter().filter(|v| v.iter().any(|&x| x != 0)).collect()
}

/// Linear combination of borrowed same-shape tensors.
pub(crate) fn combo_refs(tensors: &[&Tensor], coeffs: &[u8]) -> Tensor {
    let mut out = tensors[0].scale(coeffs[0]);
    for (t, &c) in tensors.iter().zip(coeffs).skip(1) {
        out = out.add(&t.scale(c));
    }
    out
}

/// Sorted label subsets into a selection.
pub(crate) fn sorted_selection(sets: Vec<BTreeSet<u32>>) -> MinorSelection {
    MinorSelection::new(sets.into_iter().map(|s| s.into_iter().collect()).collect())
}

/// 0-based axis positions of a 1-based part, and the complementary positions.
pub(crate) fn split_axes(d: usize, part: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let c: Vec<usize> = part.iter().map(|&x| x - 1).collect();
    let comp: Vec<usize> = (0..d).filter(|a| !c.contains(a)).collect();
    (c, comp)
}

/// Exact rank of a slice tensor: matrix rank for order two, support for order
/// one, the exact partition-rank oracle beyond.
pub(crate) fn slice_rank_exact(t: &Tensor, budget: &mut NodeBudget) -> Result<usize> {
    match t.d() {
        1 => Ok(usize::from(!t.is_zero())),
        2 => {
            budget.charge(1)?;
            Ok(t.as_matrix().rank())
        }
        d => Ok(rrank_exact(t, &PartitionFamily::partition_rank(d), budget)?.value),
    }
}

/// Decision form of [`slice_rank_exact`].
pub(crate) fn slice_rank_at_least(t: &Tensor, l: usize, budget: &mut NodeBudget) -> Result<bool> {
    if l == 0 {
        return Ok(true);
    }
    match t.d() {
        1 => Ok(!t.is_zero() && l == 1),
        2 => {
            budget.charge(1)?;
            Ok(t.as_matrix().rank() >= l)
        }
        d => rrank_at_least(t, &PartitionFamily::partition_rank(d), l, budget),
    }
}

/// All slices of `t` on `c_axes`, indexed by the complement points in
/// lexicographic position order.
pub(crate) fn complement_slices(
    t: &Tensor,
    c_axes: &[usize],
    comp_axes: &[usize],
) -> Result<(Vec<Vec<usize>>, Vec<Tensor>)> {
    let comp_shape: Vec<usize> = comp_axes.iter().map(|&a| t.shape()[a]).collect();
    let ys: Vec<Vec<usize>> = points(&comp_shape).collect();
    let mut slices = Vec::with_capacity(ys.len());
    for y in &ys {
        slices.push(t.slice(c_axes, y)?);
    }
    Ok((ys, slices))
}

/// Restricts every axis to at most `k` labels while preserving tensor rank at
/// least `k`. Per axis, a maximal independent subfamily of the slices is kept,
/// capped at `k` members; spanning sets only see the span of the slices, so
/// the cap cannot lose rank below `k`, and when the original rank is at most
/// `k` it is preserved exactly.
pub fn tr_minor_extract(t: &Tensor, k: usize, budget: &mut NodeBudget) -> Result<MinorSelection> {
    if k == 0 {
        return Err(Error::ParameterOutOfRange("minor target must be positive".into()));
    }
    if t.d() < 2 {
        return Err(Error::BadAxisSet);
    }
    let tr = PartitionFamily::tensor_rank(t.d());
    let full = rrank_exact(t, &tr, budget)?.value;
    if full < k {
        return Err(Error::RankTooLow { requested: k, certified: full });
    }
    let mut current = t.clone();
    for axis in 0..t.d() {
        let keep: Vec<usize> = (0..current.d()).filter(|&a| a != axis).collect();
        let mut picked: Vec<usize> = Vec::new();
        let mut basis: Vec<Vec<u8>> = Vec::new();
        let mut span_dim = 0;
        for pos in 0..current.shape()[axis] {
            if picked.len() == k {
                break;
            }
            budget.charge(1)?;
            basis.push(current.slice(&keep, &[pos])?.dense_data().to_vec());
            let rank = Mat::from_rows(current.field(), &basis).rank();
            if rank > span_dim {
                span_dim = rank;
                picked.push(pos);
            } else {
                basis.pop();
            }
        }
        let subsets: Vec<Vec<u32>> = (0..current.d())
            .map(|a| {
                if a == axis {
                    picked.iter().map(|&p| current.axes()[a][p]).collect()
                } else {
                    current.axes()[a].clone()
                }
            })
            .collect();
        current = current.restrict(&MinorSelection::new(subsets))?;
    }
    if !rrank_at_least(&current, &tr, k, budget)? {
        return Err(Error::VerificationFailed("extracted minor lost its tensor rank".into()));
    }
    Ok(MinorSelection::new(current.axes().to_vec()))
}

/// Removes rows one at a time, keeping `min(rank, k)` for every linear
/// combination of the family, until at most `s * k` rows remain. Columns are
/// untouched. Each step picks a vector annihilating the kept rows of every
/// independent low-rank combination; removing a row it marks cannot change a
/// low-rank combination's row span and costs a high-rank combination at most
/// one. Returns kept row indices in increasing order.
fn row_removal_pass(mats: &[Mat], k: usize, budget: &mut NodeBudget) -> Result<Vec<usize>> {
    let field = mats[0].field();
    let s = mats.len();
    let m = mats[0].rows();
    let n = mats[0].cols();
    let coeffs = nonzero_vectors(field, s);
    let mut combos: Vec<Mat> = Vec::with_capacity(coeffs.len());
    for a in &coeffs {
        let mut acc = Mat::zero(field, m, n);
        for (mat, &c) in mats.iter().zip(a) {
            acc = acc.add(&mat.scale(c));
        }
        combos.push(acc);
    }
    let all_cols: Vec<usize> = (0..n).collect();
    let mut rows: Vec<usize> = (0..m).collect();
    while rows.len() > s * k {
        budget.charge((coeffs.len() * rows.len()) as u64)?;
        let ranks: Vec<usize> =
            combos.iter().map(|c| c.submatrix(&rows, &all_cols).rank()).collect();
        let mut lambda_basis: Vec<Vec<u8>> = Vec::new();
        let mut lambda_idx: Vec<usize> = Vec::new();
        for (i, (a, &rank)) in coeffs.iter().zip(&ranks).enumerate() {
            if rank <= k {
                let mut trial = lambda_basis.clone();
                trial.push(a.clone());
                if Mat::from_rows(field, &trial).rank() == trial.len() {
                    lambda_basis = trial;
                    lambda_idx.push(i);
                }
            }
        }
        let removed = if lambda_idx.is_empty() {
            rows[0]
        } else {
            let stacked = Mat::from_fn(field, rows.len(), lambda_idx.len() * n, |r, c| {
                combos[lambda_idx[c / n]].get(rows[r], c % n)
            });
            let null = nullspace_basis(&stacked);
            let b = null.first().ok_or_else(|| {
                Error::VerificationFailed("row-removal annihilator unexpectedly missing".into())
            })?;
            let local = b.iter().position(|&x| x != 0).expect("annihilator is nonzero");
            rows[local]
        };
        let next: Vec<usize> = rows.iter().copied().filter(|&x| x != removed).collect();
        if cfg!(debug_assertions) {
            for (combo, &before) in combos.iter().zip(&ranks) {
                let after = combo.submatrix(&next, &all_cols).rank();
                if before <= k {
                    assert_eq!(after, before, "low-rank combination lost rank in row removal");
                } else {
                    assert!(after >= k, "high-rank combination fell below the target");
                }
            }
        }
        rows = next;
    }
    Ok(rows)
}

/// Extracts row and column subsets of size at most `s * k` so that every
/// linear combination of the `s` matrices keeps rank `min(rank, k)` on the
/// minor. The bound `s * k` is optimal: disjoint diagonal supports of size `k`
/// admit no smaller universal minor.
pub fn multi_matrix_minor(
    mats: &[Mat],
    k: usize,
    budget: &mut NodeBudget,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if k == 0 || mats.is_empty() {
        return Err(Error::ParameterOutOfRange(
            "need a positive target and at least one matrix".into(),
        ));
    }
    let field = mats[0].field();
    if mats.iter().any(|m| {
        m.rows() != mats[0].rows()
            || m.cols() != mats[0].cols()
            || m.field().order() != field.order()
    }) {
        return Err(Error::AxisMismatch);
    }
    let x = row_removal_pass(mats, k, budget)?;
    let all_cols: Vec<usize> = (0..mats[0].cols()).collect();
    let transposed: Vec<Mat> =
        mats.iter().map(|m| m.submatrix(&x, &all_cols).transpose()).collect();
    let y = row_removal_pass(&transposed, k, budget)?;
    for a in nonzero_vectors(field, mats.len()) {
        budget.charge(1)?;
        let mut acc = Mat::zero(field, mats[0].rows(), mats[0].cols());
        for (mat, &c) in mats.iter().zip(&a) {
            acc = acc.add(&mat.scale(c));
        }
        let full = acc.rank();
        if acc.submatrix(&x, &y).rank() < full.min(k) {
            return Err(Error::VerificationFailed(
                "a matrix combination lost rank on the extracted minor".into(),
            ));
        }
    }
    Ok((x, y))
}

/// Per-axis row-removal over the slice families of a tensor family: every
/// axis shrinks to at most `s * k` labels while every linear combination of
/// the tensors keeps tensor rank `min(rank, k)`. The slice vectors of a
/// combination are the same combination of the slice-vector matrices, and a
/// row pass that preserves their row-space dimension preserves the span of
/// the slices, hence the spanning number.
pub fn multi_tensor_minor(
    tensors: &[Tensor],
    k: usize,
    budget: &mut NodeBudget,
) -> Result<MinorSelection> {
    if k == 0 || tensors.is_empty() {
        return Err(Error::ParameterOutOfRange(
            "need a positive target and at least one tensor".into(),
        ));
    }
    if tensors.iter().any(|t| t.axes() != tensors[0].axes()) {
        return Err(Error::AxisMismatch);
    }
    let d = tensors[0].d();
    if d < 2 {
        return Err(Error::BadAxisSet);
    }
    let field = tensors[0].field();
    let mut currents: Vec<Tensor> = tensors.to_vec();
    for axis in 0..d {
        let keep: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
        let mut mats = Vec::with_capacity(currents.len());
        for t in &currents {
            let mut rows = Vec::with_capacity(t.shape()[axis]);
            for pos in 0..t.shape()[axis] {
                rows.push(t.slice(&keep, &[pos])?.dense_data().to_vec());
            }
            mats.push(Mat::from_rows(field, &rows));
        }
        let kept = row_removal_pass(&mats, k, budget)?;
        let subsets: Vec<Vec<u32>> = (0..d)
            .map(|a| {
                if a == axis {
                    kept.iter().map(|&p| currents[0].axes()[a][p]).collect()
                } else {
                    currents[0].axes()[a].clone()
                }
            })
            .collect();
        let sel = MinorSelection::new(subsets);
        for t in currents.iter_mut() {
            *t = t.restrict(&sel)?;
        }
    }
    let tr = PartitionFamily::tensor_rank(d);
    for a in nonzero_vectors(field, tensors.len()) {
        let full = rrank_exact(&Tensor::combo(tensors, &a), &tr, budget)?.value;
        if !rrank_at_least(&Tensor::combo(&currents, &a), &tr, full.min(k), budget)? {
            return Err(Error::VerificationFailed(
                "a tensor combination lost rank on the extracted minor".into(),
            ));
        }
    }
    Ok(MinorSelection::new(currents[0].axes().to_vec()))
}

/// Slice points whose nonzero combinations all clear a threshold schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparatedFamily {
    /// Axes carrying the slices (0-based, increasing).
    pub slice_axes: Vec<usize>,
    /// The complementary axes whose points index the slices.
    pub complement_axes: Vec<usize>,
    /// Accepted complement points, as positions per complement axis, in
    /// acceptance order.
    pub points: Vec<Vec<usize>>,
    /// The threshold schedule the process ran against.
    pub schedule: Vec<usize>,
    /// Exact combination ranks `(coefficients, rank)` of the final family.
    pub transcript: Vec<(Vec<u8>, usize)>,
}

/// Certified approximation of every slice over an accepted family: for the
/// complement point with lexicographic index `y`, subtracting the combination
/// with `coefficients[y]` leaves slice rank at most `residual`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproximationTable {
    /// The accepted points, matching the separated family.
    pub base: Vec<Vec<usize>>,
    /// Coefficients per complement point, in lexicographic point order.
    pub coefficients: Vec<Vec<u8>>,
    /// The certified residual rank bound.
    pub residual: usize,
}

/// Outcome of the radius process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeparationOutcome {
    /// The process reached the full requested length.
    Full(SeparatedFamily),
    /// The process stopped early; every slice is approximated over the
    /// family found so far, within the next threshold.
    Stopped(SeparatedFamily, ApproximationTable),
}

/// Greedy radius process over the slices on `c_axes`. Step `j` scans the
/// complement points in lexicographic order for one whose slice keeps every
/// nonzero combination with the accepted family at rank `schedule[j-1]` or
/// more. Either the family reaches the schedule's full length, or the process
/// stops at length `l' < l` and every slice is certified to be within rank
/// `schedule[l']` of a combination of the accepted slices.
///
/// The schedule must be positive and non-increasing; a step's combinations
/// with zero coefficient on the new candidate then already cleared the
/// earlier, no smaller thresholds.
pub fn separated_family_search(
    t: &Tensor,
    c_axes: &[usize],
    schedule: &[usize],
    budget: &mut NodeBudget,
) -> Result<SeparationOutcome> {
    let d = t.d();
    let axes_ok = !c_axes.is_empty()
        && c_axes.len() < d
        && c_axes.windows(2).all(|w| w[0] < w[1])
        && c_axes.iter().all(|&a| a < d);
    if !axes_ok {
        return Err(Error::BadAxisSet);
    }
    if schedule.is_empty() || schedule.contains(&0) {
        return Err(Error::ParameterOutOfRange("schedule must be positive".into()));
    }
    if schedule.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::ParameterOutOfRange("schedule must be non-increasing".into()));
    }
    let l = schedule.len();
    let field = t.field();
    let comp_axes: Vec<usize> = (0..d).filter(|a| !c_axes.contains(a)).collect();
    let (ys, slices) = complement_slices(t, c_axes, &comp_axes)?;
    let mut accepted: Vec<usize> = Vec::new();
    while accepted.len() < l {
        let j = accepted.len() + 1;
        let need = schedule[j - 1];
        let mut found = None;
        'scan: for (yi, cand) in slices.iter().enumerate() {
            if accepted.contains(&yi) {
                continue;
            }
            let mut fam: Vec<&Tensor> = accepted.iter().map(|&i| &slices[i]).collect();
            fam.push(cand);
            for a in all_vectors(field, j) {
                if a[j - 1] == 0 {
                    continue;
                }
                budget.charge(1)?;
                if !slice_rank_at_least(&combo_refs(&fam, &a), need, budget)? {
                    continue 'scan;
                }
            }
            found = Some(yi);
            break;
        }
        match found {
            Some(yi) => accepted.push(yi),
            None => break,
        }
    }
    let lp = accepted.len();
    let mut transcript = Vec::new();
    if lp > 0 {
        let fam: Vec<&Tensor> = accepted.iter().map(|&i| &slices[i]).collect();
        for a in nonzero_vectors(field, lp) {
            let value = slice_rank_exact(&combo_refs(&fam, &a), budget)?;
            if value < schedule[lp - 1] {
                return Err(Error::VerificationFailed(
                    "separated family fails its own threshold".into(),
                ));
            }
            transcript.push((a, value));
        }
    }
    let family = SeparatedFamily {
        slice_axes: c_axes.to_vec(),
        complement_axes: comp_axes,
        points: accepted.iter().map(|&i| ys[i].clone()).collect(),
        schedule: schedule.to_vec(),
        transcript,
    };
    if lp == l {
        return Ok(SeparationOutcome::Full(family));
    }
    let residual = schedule[lp];
    let fam: Vec<&Tensor> = accepted.iter().map(|&i| &slices[i]).collect();
    let mut coefficients = Vec::with_capacity(slices.len());
    for s in &slices {
        let mut chosen = None;
        for a in all_vectors(field, lp) {
            budget.charge(1)?;
            let diff = if lp == 0 { s.clone() } else { s.sub(&combo_refs(&fam, &a)) };
            if !slice_rank_at_least(&diff, residual + 1, budget)? {
                chosen = Some(a);
                break;
            }
        }
        match chosen {
            Some(a) => coefficients.push(a),
            None => {
                return Err(Error::VerificationFailed(
                    "a slice escapes the residual bound after the process stopped".into(),
                ))
            }
        }
    }
    let table = ApproximationTable { base: family.points.clone(), coefficients, residual };
    Ok(SeparationOutcome::Stopped(family, table))
}

/// Evaluates a product of factor tables as a tensor on the listed 1-based
/// coordinates (which together must cover the factors' parts).
pub(crate) fn factors_tensor(
    field: Field,
    factors: &[&FactorTable],
    coords: &[usize],
    axes: Vec<Vec<u32>>,
) -> Result<Tensor> {
    Tensor::from_fn(field, axes, |labels| {
        let mut prod = 1u8;
        for fac in factors {
            let key: Vec<u32> = fac
                .part
                .iter()
                .map(|c| labels[coords.iter().position(|x| x == c).expect("part inside coords")])
                .collect();
            match fac.values.get(&key) {
                Some(&v) => prod = field.mul(prod, v),
                None => return 0,
            }
        }
        prod
    })
}

/// Makes the coefficient vectors of a paired decomposition linearly
/// independent: zero vectors are dropped, and a vector in the span of the
/// others is eliminated by folding its partner into the partners of the
/// spanning vectors. The represented sum of pairs is unchanged.
pub(crate) fn fold_to_independent<X>(
    field: Field,
    a_vecs: &mut Vec<Vec<u8>>,
    partners: &mut Vec<Tensor>,
    extras: &mut Vec<X>,
) {
    loop {
        while let Some(j) = a_vecs.iter().position(|v| v.iter().all(|&x| x == 0)) {
            a_vecs.remove(j);
            partners.remove(j);
            extras.remove(j);
        }
        let n = a_vecs.len();
        if n == 0 || Mat::from_rows(field, a_vecs).rank() == n {
            return;
        }
        let mut j = n - 1;
        loop {
            let others: Vec<Vec<u8>> = a_vecs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, v)| v.clone())
                .collect();
            if let Some(cs) = solve_in_rowspace(&Mat::from_rows(field, &others), &a_vecs[j]) {
                let folded = partners[j].clone();
                for (oi, i) in (0..n).filter(|&i| i != j).enumerate() {
                    if cs[oi] != 0 {
                        partners[i] = partners[i].add(&folded.scale(cs[oi]));
                    }
                }
                a_vecs.remove(j);
                partners.remove(j);
                extras.remove(j);
                break;
            }
            assert!(j > 0, "a dependent family has a member inside the others' span");
            j -= 1;
        }
    }
}

/// Rewrites a valid rank certificate over the down-shadow family obtained by
/// splitting the largest part `C` into bipartitions. Requires every slice on
/// `C` to have rank at most `m`; the result then has at most
/// `l * (l * m + l^2 + 1)` terms for an `l`-term input. The rewrite follows
/// the duality construction: terms carrying `C` are grouped as coefficient
/// functions times `C`-factors, the coefficient functions are made
/// independent, and each `C`-factor is recovered by a dual contraction of the
/// tensor before being split into bipartition terms.
pub fn equivalence_transform(
    t: &Tensor,
    r: &PartitionFamily,
    cert: &RankCertificate,
    m: usize,
    budget: &mut NodeBudget,
) -> Result<(PartitionFamily, RankCertificate)> {
    if !cert.validate_against(t) {
        return Err(Error::VerificationFailed(
            "certificate does not evaluate to the tensor".into(),
        ));
    }
    if !cert.partitions_in(r) {
        return Err(Error::VerificationFailed(
            "certificate uses partitions outside the family".into(),
        ));
    }
    let ds = r.down_shadow()?;
    let (c_axes, comp_axes) = split_axes(t.d(), &ds.c);
    let (ys, slices) = complement_slices(t, &c_axes, &comp_axes)?;
    for s in &slices {
        let found = slice_rank_exact(s, budget)?;
        if found > m {
            return Err(Error::SliceBoundViolated { bound: m, found });
        }
    }
    let field = t.field();
    let comp_labels: Vec<Vec<u32>> = comp_axes.iter().map(|&a| t.axes()[a].clone()).collect();
    let c_labels: Vec<Vec<u32>> = c_axes.iter().map(|&a| t.axes()[a].clone()).collect();
    let mut a_vecs: Vec<Vec<u8>> = Vec::new();
    let mut b_parts: Vec<Tensor> = Vec::new();
    let mut rests: Vec<(Vec<Partition>, Vec<FactorTable>)> = Vec::new();
    let mut minus: Vec<CertTerm> = Vec::new();
    for term in &cert.terms {
        if let Some(ci) = term.partition.iter().position(|part| *part == ds.c) {
            let rest_factors: Vec<FactorTable> = term
                .factors
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != ci)
                .map(|(_, f)| f.clone())
                .collect();
            let rest_parts: Vec<Vec<usize>> = term
                .partition
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != ci)
                .map(|(_, p)| p.clone())
                .collect();
            let borrowed: Vec<&FactorTable> = rest_factors.iter().collect();
            let a = factors_tensor(field, &borrowed, &ds.complement, comp_labels.clone())?;
            let b = factors_tensor(field, &[&term.factors[ci]], &ds.c, c_labels.clone())?;
            a_vecs.push(a.dense_data().to_vec());
            b_parts.push(b);
            rests.push((vec![rest_parts], rest_factors));
        } else {
            minus.push(term.clone());
        }
    }
    fold_to_independent(field, &mut a_vecs, &mut b_parts, &mut rests);
    let mut new_terms: Vec<CertTerm> = minus.clone();
    if !a_vecs.is_empty() {
        let g = if minus.is_empty() {
            t.clone()
        } else {
            let minus_cert = RankCertificate::new(cert.notion.clone(), minus.clone());
            t.sub(&minus_cert.evaluate(field, t.axes())?)
        };
        let duals = dual_basis(field, &a_vecs)?;
        let pr_c = PartitionFamily::partition_rank(c_axes.len());
        for (i, b) in b_parts.iter().enumerate() {
            let u = &duals.duals[i];
            let mut derived = Tensor::zeros(field, c_labels.clone())?;
            for &ylin in &duals.support {
                if u[ylin] == 0 {
                    continue;
                }
                budget.charge(1)?;
                derived = derived.add(&g.slice(&c_axes, &ys[ylin])?.scale(u[ylin]));
            }
            if derived != *b {
                return Err(Error::VerificationFailed(
                    "dual contraction fails to recover a factor".into(),
                ));
            }
            let b_report = rrank_exact(b, &pr_c, budget)?;
            let l = cert.value;
            if b_report.value > l * m + l * l {
                return Err(Error::VerificationFailed(
                    "a split factor exceeds its derived rank bound".into(),
                ));
            }
            let (rest_parts, rest_factors) = &rests[i];
            for bt in &b_report.certificate.terms {
                let mut parts: Vec<Vec<usize>> = rest_parts[0].clone();
                let mut factors = rest_factors.clone();
                for (local_part, fac) in bt.partition.iter().zip(&bt.factors) {
                    let global: Vec<usize> = local_part.iter().map(|&x| ds.c[x - 1]).collect();
                    parts.push(global.clone());
                    factors.push(FactorTable { part: global, values: fac.values.clone() });
                }
                let mut order: Vec<usize> = (0..parts.len()).collect();
                order.sort_by(|&x, &y| parts[x].cmp(&parts[y]));
                let partition: Partition = order.iter().map(|&i| parts[i].clone()).collect();
                let factors: Vec<FactorTable> = order.iter().map(|&i| factors[i].clone()).collect();
                new_terms.push(CertTerm { partition, factors });
            }
        }
    }
    let new_cert = RankCertificate::new(family_notion(&ds.r_prime), new_terms);
    let l = cert.value;
    if new_cert.value > l * (l * m + l * l + 1) {
        return Err(Error::VerificationFailed(
            "rewritten certificate exceeds its size bound".into(),
        ));
    }
    if !new_cert.validate_against(t) {
        return Err(Error::VerificationFailed(
            "rewritten certificate does not evaluate back to the tensor".into(),
        ));
    }
    if !new_cert.partitions_in(&ds.r_prime) {
        return Err(Error::VerificationFailed(
            "rewritten certificate leaves the target family".into(),
        ));
    }
    Ok((ds.r_prime, new_cert))
}

/// The order-3 tensor `a` (on `axis`) times `b` (on the two remaining axes).
fn outer3(field: Field, axes: &[Vec<u32>], axis: usize, a: &[u8], b: &Tensor) -> Result<Tensor> {
    let mut out = Tensor::zeros(field, axes.to_vec())?;
    let others: Vec<usize> = (0..3).filter(|&x| x != axis).collect();
    for (pa, &va) in a.iter().enumerate() {
        if va == 0 {
            continue;
        }
        for bp in points(b.shape()) {
            let v = b.get(&bp);
            if v == 0 {
                continue;
            }
            let mut idx = vec![0usize; 3];
            idx[axis] = pa;
            idx[others[0]] = bp[0];
            idx[others[1]] = bp[1];
            out.set(&idx, field.add(out.get(&idx), field.mul(va, v)));
        }
    }
    Ok(out)
}

/// Rewrites an order-3 slice-rank certificate into a tensor-rank certificate
/// with at most `m * value^2` terms, where `m` bounds the rank of every slice
/// along every axis. Terms are grouped by their singleton axis; per group,
/// the singleton vectors are made independent, each pair factor is recovered
/// by contracting the tensor minus the other groups with a dual vector, and
/// the pair factor's rank factorization supplies the product terms.
pub fn slice_to_tensor_transform(
    t: &Tensor,
    cert: &RankCertificate,
    m: usize,
    budget: &mut NodeBudget,
) -> Result<RankCertificate> {
    if t.d() != 3 {
        return Err(Error::BadAxisSet);
    }
    let sr = PartitionFamily::slice_rank(3);
    if !cert.validate_against(t) {
        return Err(Error::VerificationFailed(
            "certificate does not evaluate to the tensor".into(),
        ));
    }
    if !cert.partitions_in(&sr) {
        return Err(Error::VerificationFailed(
            "certificate is not a slice decomposition".into(),
        ));
    }
    for axis in 0..3 {
        let keep: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for pos in 0..t.shape()[axis] {
            budget.charge(1)?;
            let found = t.slice(&keep, &[pos])?.as_matrix().rank();
            if found > m {
                return Err(Error::SliceBoundViolated { bound: m, found });
            }
        }
    }
    let field = t.field();
    let mut group_vecs: Vec<Vec<Vec<u8>>> = vec![Vec::new(), Vec::new(), Vec::new()];
    let mut group_pairs: Vec<Vec<Tensor>> = vec![Vec::new(), Vec::new(), Vec::new()];
    for term in &cert.terms {
        let si = term
            .partition
            .iter()
            .position(|p| p.len() == 1)
            .expect("slice partitions have a singleton part");
        let axis = term.partition[si][0] - 1;
        let pair_part = &term.partition[1 - si];
        let pair_coords: Vec<usize> = pair_part.clone();
        let pair_axes: Vec<Vec<u32>> =
            pair_coords.iter().map(|&c| t.axes()[c - 1].clone()).collect();
        let a = factors_tensor(
            field,
            &[&term.factors[si]],
            &[axis + 1],
            vec![t.axes()[axis].clone()],
        )?;
        let b = factors_tensor(field, &[&term.factors[1 - si]], &pair_coords, pair_axes)?;
        group_vecs[axis].push(a.dense_data().to_vec());
        group_pairs[axis].push(b);
    }
    let mut new_terms: Vec<CertTerm> = Vec::new();
    for g in 0..3 {
        let mut extras: Vec<()> = vec![(); group_vecs[g].len()];
        let (mut vecs, mut pairs) = (group_vecs[g].clone(), group_pairs[g].clone());
        fold_to_independent(field, &mut vecs, &mut pairs, &mut extras);
        group_vecs[g] = vecs;
        group_pairs[g] = pairs;
    }
    for g in 0..3 {
        if group_vecs[g].is_empty() {
            continue;
        }
        let others: Vec<usize> = (0..3).filter(|&x| x != g).collect();
        let duals = dual_basis(field, &group_vecs[g])?;
        let mut others_sum = Tensor::zeros(field, t.axes().to_vec())?;
        for h in 0..3 {
            if h == g {
                continue;
            }
            for (av, b) in group_vecs[h].iter().zip(&group_pairs[h]) {
                others_sum = others_sum.add(&outer3(field, t.axes(), h, av, b)?);
            }
        }
        let remaining = t.sub(&others_sum);
        for (i, b) in group_pairs[g].iter().enumerate() {
            budget.charge(1)?;
            let derived = remaining.contract(g, &duals.duals[i])?;
            if derived != *b {
                return Err(Error::VerificationFailed(
                    "dual contraction fails to recover a pair factor".into(),
                ));
            }
            let bm = b.as_matrix();
            let (lf, rf) = bm.rank_factorization();
            for kk in 0..lf.cols() {
                let mut fac_by_axis: Vec<FactorTable> = Vec::with_capacity(3);
                let singleton = |axis: usize, values: Vec<u8>| -> FactorTable {
                    let table = values
                        .iter()
                        .enumerate()
                        .filter(|&(_, &v)| v != 0)
                        .map(|(pos, &v)| (vec![t.axes()[axis][pos]], v))
                        .collect();
                    FactorTable { part: vec![axis + 1], values: table }
                };
                let u: Vec<u8> = (0..lf.rows()).map(|rr| lf.get(rr, kk)).collect();
                let v: Vec<u8> = rf.row(kk);
                for axis in 0..3 {
                    if axis == g {
                        fac_by_axis.push(singleton(axis, group_vecs[g][i].clone()));
                    } else if axis == others[0] {
                        fac_by_axis.push(singleton(axis, u.clone()));
                    } else {
                        fac_by_axis.push(singleton(axis, v.clone()));
                    }
                }
                let partition: Partition = vec![vec![1], vec![2], vec![3]];
                new_terms.push(CertTerm { partition, factors: fac_by_axis });
            }
        }
    }
    let new_cert = RankCertificate::new("tr".into(), new_terms);
    if new_cert.value > m * cert.value * cert.value {
        return Err(Error::VerificationFailed(
            "rewritten certificate exceeds its size bound".into(),
        ));
    }
    if !new_cert.validate_against(t) {
        return Err(Error::VerificationFailed(
            "rewritten certificate does not evaluate back to the tensor".into(),
        ));
    }
    Ok(new_cert)
}

/// Which route produced a restriction at one engine level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineCase {
    /// The family is plain tensor rank; the per-axis greedy pass applies.
    BaseTensorRank,
    /// A full separated slice family survived restriction of the slice axes.
    SeparatedSlices,
    /// A coefficient tensor carried high rank on the complement axes.
    ComplementFactor,
    /// Recursion through the split-part family, concluded by the
    /// certificate-rewrite bound.
    DownShadowRecursion,
    /// Certified label-by-label shrinking, used when the staged routes are
    /// out of reach at the current scale.
    GreedyShrink,
}

/// One engine level: the family it worked on and the route that succeeded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub notion: String,
    pub depth: usize,
    pub case: EngineCase,
}

/// Finds a restriction whose rank reaches `l` for an arbitrary partition
/// family, staging the constructive routes and recording which one fired at
/// every recursion level. Errors with the certified rank when the tensor
/// itself cannot reach `l`.
pub fn general_minor_find(
    t: &Tensor,
    r: &PartitionFamily,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<(MinorSelection, Vec<CaseRecord>)> {
    if l == 0 {
        return Err(Error::ParameterOutOfRange("minor target must be positive".into()));
    }
    let mut log = Vec::new();
    let sel = engine(t, r, l, 0, budget, &mut log)?;
    Ok((sel, log))
}

fn engine(
    t: &Tensor,
    r: &PartitionFamily,
    l: usize,
    depth: usize,
    budget: &mut NodeBudget,
    log: &mut Vec<CaseRecord>,
) -> Result<MinorSelection> {
    let d = t.d();
    if depth > (1usize << d) + 2 {
        return Err(Error::VerificationFailed("minor engine exceeded its depth bound".into()));
    }
    let full = rrank_exact(t, r, budget)?.value;
    if full < l {
        return Err(Error::RankTooLow { requested: l, certified: full });
    }
    let record = |case: EngineCase| CaseRecord { notion: family_notion(r), depth, case };
    if r.is_tensor_rank() {
        let sel = tr_minor_extract(t, l, budget)?;
        log.push(record(EngineCase::BaseTensorRank));
        return Ok(sel);
    }
    let ds = r.down_shadow()?;
    let (c_axes, _) = split_axes(d, &ds.c);
    // Radius process with thresholds easing down to the separation target.
    let tau = l * (l - 1) + 1;
    let schedule: Vec<usize> = (1..=l).map(|j| tau + (l - j)).collect();
    match separated_family_search(t, &c_axes, &schedule, budget)? {
        SeparationOutcome::Full(family) => {
            if let Some(sel) = case_separated(t, r, &family, l, tau, budget)? {
                log.push(record(EngineCase::SeparatedSlices));
                return Ok(sel);
            }
        }
        SeparationOutcome::Stopped(family, table) => {
            if let Some(sel) = case_complement(t, r, &ds, &family, &table, l, depth, budget, log)?
            {
                log.push(record(EngineCase::ComplementFactor));
                return Ok(sel);
            }
            if let Some(sel) = case_down_shadow(t, r, &ds, &family, &table, l, depth, budget, log)?
            {
                log.push(record(EngineCase::DownShadowRecursion));
                return Ok(sel);
            }
        }
    }
    let sel = greedy_shrink(t, r, l, budget)?;
    log.push(record(EngineCase::GreedyShrink));
    Ok(sel)
}

/// A full separated family: restrict the slice axes so every nonzero
/// combination keeps rank `tau = l(l-1)+1`, take the point projections on the
/// complement axes, and the separation bound forces rank `l`.
fn case_separated(
    t: &Tensor,
    r: &PartitionFamily,
    family: &SeparatedFamily,
    l: usize,
    tau: usize,
    budget: &mut NodeBudget,
) -> Result<Option<MinorSelection>> {
    let mut slices = Vec::with_capacity(family.points.len());
    for y in &family.points {
        slices.push(t.slice(&family.slice_axes, y)?);
    }
    let lambda = nonzero_vectors(t.field(), l);
    let inner = PartitionFamily::partition_rank(family.slice_axes.len());
    let minor = match multi_rrank_minor(&slices, &inner, &lambda, tau, budget) {
        Ok(sel) => sel,
        Err(Error::RankTooLow { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); t.d()];
    for y in &family.points {
        for (k, &axis) in family.complement_axes.iter().enumerate() {
            sets[axis].insert(t.axes()[axis][y[k]]);
        }
    }
    for (k, &axis) in family.slice_axes.iter().enumerate() {
        sets[axis].extend(minor.subsets[k].iter().copied());
    }
    let sel = sorted_selection(sets);
    if !rrank_at_least(&t.restrict(&sel)?, r, l, budget)? {
        return Err(Error::VerificationFailed(
            "separated-family minor lost the target rank".into(),
        ));
    }
    Ok(Some(sel))
}

/// A coefficient tensor of the approximation carries rank `l` on the
/// complement axes: restrict the complement to its minor, restrict the slice
/// axes so combinations of the base slices keep rank `l(m+l)`, and the
/// approximation bound forces rank `l`.
#[allow(clippy::too_many_arguments)]
fn case_complement(
    t: &Tensor,
    r: &PartitionFamily,
    ds: &DownShadow,
    family: &SeparatedFamily,
    table: &ApproximationTable,
    l: usize,
    depth: usize,
    budget: &mut NodeBudget,
    log: &mut Vec<CaseRecord>,
) -> Result<Option<MinorSelection>> {
    let lp = family.points.len();
    if lp == 0 {
        return Ok(None);
    }
    let m = table.residual;
    let big_m = l * (m + l);
    let field = t.field();
    let comp_axes = &family.complement_axes;
    let c_axes = &family.slice_axes;
    let comp_labels: Vec<Vec<u32>> = comp_axes.iter().map(|&a| t.axes()[a].clone()).collect();
    let comp_shape: Vec<usize> = comp_axes.iter().map(|&a| t.shape()[a]).collect();
    let ys: Vec<Vec<usize>> = points(&comp_shape).collect();
    for j in 0..lp {
        let mut aj = Tensor::zeros(field, comp_labels.clone())?;
        for (yi, y) in ys.iter().enumerate() {
            aj.set(y, table.coefficients[yi][j]);
        }
        let rcomp_engine = if comp_axes.len() == 1 { None } else { ds.r_comp.as_ref() };
        let comp_subsets: Option<Vec<Vec<u32>>> = match rcomp_engine {
            // Order-one or single-part complement: rank is support alone.
            None => {
                if l == 1 && !aj.is_zero() {
                    let p = aj.support()[0].clone();
                    Some(
                        p.iter()
                            .enumerate()
                            .map(|(k, &pos)| vec![comp_labels[k][pos]])
                            .collect(),
                    )
                } else {
                    None
                }
            }
            Some(rcomp) => match engine(&aj, rcomp, l, depth + 1, budget, log) {
                Ok(sel) => Some(sel.subsets.clone()),
                Err(Error::RankTooLow { .. }) => None,
                Err(e) => return Err(e),
            },
        };
        let Some(comp_subsets) = comp_subsets else {
            continue;
        };
        let mut slices = Vec::with_capacity(lp);
        for y in &family.points {
            slices.push(t.slice(c_axes, y)?);
        }
        let lambda = nonzero_vectors(field, lp);
        let inner = PartitionFamily::partition_rank(c_axes.len());
        let minor = match multi_rrank_minor(&slices, &inner, &lambda, big_m, budget) {
            Ok(sel) => sel,
            Err(Error::RankTooLow { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        // The residual bound must survive the restriction, slice by slice.
        let mut restricted_base = Vec::with_capacity(lp);
        for s in &slices {
            restricted_base.push(s.restrict(&minor)?);
        }
        for (yi, y) in ys.iter().enumerate() {
            let in_box = comp_axes
                .iter()
                .enumerate()
                .all(|(k, &axis)| comp_subsets[k].contains(&t.axes()[axis][y[k]]));
            if !in_box {
                continue;
            }
            let ty = t.slice(c_axes, y)?.restrict(&minor)?;
            let base_refs: Vec<&Tensor> = restricted_base.iter().collect();
            let diff = ty.sub(&combo_refs(&base_refs, &table.coefficients[yi]));
            if slice_rank_at_least(&diff, m + 1, budget)? {
                return Err(Error::VerificationFailed(
                    "approximation residual broke under restriction".into(),
                ));
            }
        }
        let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); t.d()];
        for (k, &axis) in comp_axes.iter().enumerate() {
            sets[axis].extend(comp_subsets[k].iter().copied());
        }
        for (k, &axis) in c_axes.iter().enumerate() {
            sets[axis].extend(minor.subsets[k].iter().copied());
        }
        let sel = sorted_selection(sets);
        if !rrank_at_least(&t.restrict(&sel)?, r, l, budget)? {
            return Err(Error::VerificationFailed(
                "complement-factor minor lost the target rank".into(),
            ));
        }
        return Ok(Some(sel));
    }
    Ok(None)
}

/// Subtract the approximating combination, recurse over the split-part family
/// on the residual tensor, and conclude through the certificate-rewrite
/// bound: a restriction whose rewritten rank exceeds
/// `lam * (lam * m + lam^2 + 1)` has rank above `lam` for the original
/// family, which clears `l` after discounting the subtracted part.
#[allow(clippy::too_many_arguments)]
fn case_down_shadow(
    t: &Tensor,
    r: &PartitionFamily,
    ds: &DownShadow,
    family: &SeparatedFamily,
    table: &ApproximationTable,
    l: usize,
    depth: usize,
    budget: &mut NodeBudget,
    log: &mut Vec<CaseRecord>,
) -> Result<Option<MinorSelection>> {
    let field = t.field();
    let lp = family.points.len();
    let m = table.residual;
    let mut approx = Tensor::zeros(field, t.axes().to_vec())?;
    if lp > 0 {
        let mut slices = Vec::with_capacity(lp);
        for y in &family.points {
            slices.push(t.slice(&family.slice_axes, y)?);
        }
        let comp_shape: Vec<usize> =
            family.complement_axes.iter().map(|&a| t.shape()[a]).collect();
        let c_shape: Vec<usize> = family.slice_axes.iter().map(|&a| t.shape()[a]).collect();
        for (yi, y) in points(&comp_shape).enumerate() {
            for (i, sl) in slices.iter().enumerate() {
                let coeff = table.coefficients[yi][i];
                if coeff == 0 {
                    continue;
                }
                for c in points(&c_shape) {
                    let v = sl.get(&c);
                    if v == 0 {
                        continue;
                    }
                    let mut idx = vec![0usize; t.d()];
                    for (k, &axis) in family.complement_axes.iter().enumerate() {
                        idx[axis] = y[k];
                    }
                    for (k, &axis) in family.slice_axes.iter().enumerate() {
                        idx[axis] = c[k];
                    }
                    approx.set(&idx, field.add(approx.get(&idx), field.mul(coeff, v)));
                }
            }
        }
    }
    let residual_tensor = t.sub(&approx);
    let sigma = rrank_exact(&approx, r, budget)?.value;
    let lam = l + sigma - 1;
    let l_inner = lam * (lam * m + lam * lam + 1) + 1;
    let sel = match engine(&residual_tensor, &ds.r_prime, l_inner, depth + 1, budget, log) {
        Ok(sel) => sel,
        Err(Error::RankTooLow { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    // The residual's restricted slices must stay within the bound the rewrite
    // argument consumes.
    let restricted_residual = residual_tensor.restrict(&sel)?;
    let (_, checked) =
        complement_slices(&restricted_residual, &family.slice_axes, &family.complement_axes)?;
    for s in &checked {
        if slice_rank_at_least(s, m + 1, budget)? {
            return Err(Error::VerificationFailed(
                "the residual tensor has a slice above its certified bound".into(),
            ));
        }
    }
    if !rrank_at_least(&t.restrict(&sel)?, r, l, budget)? {
        return Err(Error::VerificationFailed(
            "down-shadow minor lost the target rank".into(),
        ));
    }
    Ok(Some(sel))
}

/// Certified fallback: drops labels one at a time while the oracle confirms
/// the restriction keeps rank at least `l`.
fn greedy_shrink(
    t: &Tensor,
    r: &PartitionFamily,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<MinorSelection> {
    let mut subsets: Vec<Vec<u32>> = t.axes().to_vec();
    loop {
        let mut progress = false;
        for axis in 0..t.d() {
            let mut pos = 0;
            while pos < subsets[axis].len() && subsets[axis].len() > 1 {
                let mut trial = subsets.clone();
                trial[axis].remove(pos);
                budget.charge(1)?;
                let sel = MinorSelection::new(trial.clone());
                if rrank_at_least(&t.restrict(&sel)?, r, l, budget)? {
                    subsets = trial;
                    progress = true;
                } else {
                    pos += 1;
                }
            }
        }
        if !progress {
            return Ok(MinorSelection::new(subsets));
        }
    }
}

/// Extracts one restriction that keeps rank at least `l` simultaneously for
/// every listed combination of the family. One combination is peeled at a
/// time: its own minor is taken at rank `sigma * l` where `sigma` is the
/// dimension spanned by the remaining combinations; combinations that fall
/// below `l` on that minor span a proper subspace (the peeled one stays
/// above by subadditivity), so the recursion strictly reduces dimension and
/// the axis-wise union of the minors serves every combination.
pub fn multi_rrank_minor(
    tensors: &[Tensor],
    r: &PartitionFamily,
    lambda: &[Vec<u8>],
    l: usize,
    budget: &mut NodeBudget,
) -> Result<MinorSelection> {
    if l == 0 || tensors.is_empty() {
        return Err(Error::ParameterOutOfRange(
            "need a positive target and at least one tensor".into(),
        ));
    }
    if tensors.iter().any(|t| t.axes() != tensors[0].axes()) {
        return Err(Error::AxisMismatch);
    }
    let field = tensors[0].field();
    for a in lambda {
        if a.len() != tensors.len() || a.iter().any(|&v| !field.contains(v)) {
            return Err(Error::InvalidData("combination vector does not match the family".into()));
        }
        if a.iter().all(|&v| v == 0) {
            return Err(Error::ParameterOutOfRange(
                "the zero combination cannot reach a positive rank".into(),
            ));
        }
    }
    let d = tensors[0].d();
    if lambda.is_empty() {
        return Ok(MinorSelection::new(vec![Vec::new(); d]));
    }
    let sets = peel(tensors, r, lambda.to_vec(), l, budget)?;
    let sel = sorted_selection(sets);
    for a in lambda {
        budget.charge(1)?;
        if !rrank_at_least(&Tensor::combo(tensors, a).restrict(&sel)?, r, l, budget)? {
            return Err(Error::VerificationFailed(
                "a combination lost rank on the extracted minor".into(),
            ));
        }
    }
    Ok(sel)
}

fn peel(
    tensors: &[Tensor],
    r: &PartitionFamily,
    lambda: Vec<Vec<u8>>,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<Vec<BTreeSet<u32>>> {
    let d = tensors[0].d();
    if lambda.is_empty() {
        return Ok(vec![BTreeSet::new(); d]);
    }
    let field = tensors[0].field();
    let sigma = Mat::from_rows(field, &lambda).rank();
    let a0 = &lambda[0];
    let combo0 = Tensor::combo(tensors, a0);
    let (sel0, _) = general_minor_find(&combo0, r, sigma * l, budget)?;
    let mut bad: Vec<Vec<u8>> = Vec::new();
    for a in &lambda {
        budget.charge(1)?;
        let restricted = Tensor::combo(tensors, a).restrict(&sel0)?;
        if !rrank_at_least(&restricted, r, l, budget)? {
            bad.push(a.clone());
        }
    }
    let lam_next: Vec<Vec<u8>> = if bad.is_empty() {
        Vec::new()
    } else {
        let w = Mat::from_rows(field, &bad);
        if solve_in_rowspace(&w, a0).is_some() {
            return Err(Error::VerificationFailed(
                "the peeled combination lies in the failing span".into(),
            ));
        }
        lambda.iter().filter(|a| solve_in_rowspace(&w, a).is_some()).cloned().collect()
    };
    debug_assert!(
        lam_next.is_empty() || Mat::from_rows(field, &lam_next).rank() < sigma,
        "peeling must strictly reduce the spanned dimension"
    );
    let mut sets = peel(tensors, r, lam_next, l, budget)?;
    for (axis, subset) in sel0.subsets.iter().enumerate() {
        sets[axis].extend(subset.iter().copied());
    }
    Ok(sets)
}

/// Contracts the trailing axis block (axes `d1..`) with a functional on its
/// product points, listed in lexicographic order.
fn contract_trailing(t: &Tensor, d1: usize, u: &[u8]) -> Result<Tensor> {
    let field = t.field();
    let mut out = Tensor::zeros(field, t.axes()[..d1].to_vec())?;
    let row_shape: Vec<usize> = t.shape()[..d1].to_vec();
    let col_shape: Vec<usize> = t.shape()[d1..].to_vec();
    for (qi, q) in points(&col_shape).enumerate() {
        if u[qi] == 0 {
            continue;
        }
        for p in points(&row_shape) {
            let mut idx = p.clone();
            idx.extend_from_slice(&q);
            let v = t.get(&idx);
            if v != 0 {
                out.set(&p, field.add(out.get(&p), field.mul(u[qi], v)));
            }
        }
    }
    Ok(out)
}

/// Contracts the leading axis block (axes `..d1`) with a functional on its
/// product points, listed in lexicographic order.
fn contract_leading(t: &Tensor, d1: usize, u: &[u8]) -> Result<Tensor> {
    let field = t.field();
    let mut out = Tensor::zeros(field, t.axes()[d1..].to_vec())?;
    let row_shape: Vec<usize> = t.shape()[..d1].to_vec();
    let col_shape: Vec<usize> = t.shape()[d1..].to_vec();
    for (pi, p) in points(&row_shape).enumerate() {
        if u[pi] == 0 {
            continue;
        }
        for q in points(&col_shape) {
            let mut idx = p.clone();
            idx.extend_from_slice(&q);
            let v = t.get(&idx);
            if v != 0 {
                out.set(&q, field.add(out.get(&q), field.mul(u[pi], v)));
            }
        }
    }
    Ok(out)
}

/// Minor extraction for the product of two families on a split axis set: the
/// first `r1.d()` axes carry `r1`, the rest carry `r2`. Either the block
/// flattening already has rank `l` and a matrix minor projects to the axes,
/// or the flattening factors through fewer than `l` products and some factor
/// carries rank `l` on its own side, reached through a dual contraction.
pub fn product_rank_minor(
    t: &Tensor,
    r1: &PartitionFamily,
    r2: &PartitionFamily,
    l: usize,
    budget: &mut NodeBudget,
) -> Result<MinorSelection> {
    if l == 0 {
        return Err(Error::ParameterOutOfRange("minor target must be positive".into()));
    }
    let d1 = r1.d();
    let d2 = r2.d();
    if t.d() != d1 + d2 {
        return Err(Error::AxisMismatch);
    }
    let rprod = PartitionFamily::product(r1, r2);
    let full = rrank_exact(t, &rprod, budget)?.value;
    if full < l {
        return Err(Error::RankTooLow { requested: l, certified: full });
    }
    let field = t.field();
    let first: Vec<usize> = (0..d1).collect();
    let flat = t.flatten(&first)?;
    let row_shape: Vec<usize> = t.shape()[..d1].to_vec();
    let col_shape: Vec<usize> = t.shape()[d1..].to_vec();
    let decode = |mut lin: usize, shape: &[usize]| -> Vec<usize> {
        let mut idx = vec![0usize; shape.len()];
        for k in (0..shape.len()).rev() {
            idx[k] = lin % shape[k];
            lin /= shape[k];
        }
        idx
    };
    if flat.rank() >= l {
        // The flattening carries the rank; project a matrix minor to the axes.
        let mut picked_rows: Vec<usize> = Vec::new();
        let mut basis: Vec<Vec<u8>> = Vec::new();
        for row in 0..flat.rows() {
            if picked_rows.len() == l {
                break;
            }
            budget.charge(1)?;
            basis.push(flat.row(row));
            if Mat::from_rows(field, &basis).rank() == basis.len() {
                picked_rows.push(row);
            } else {
                basis.pop();
            }
        }
        let block = Mat::from_rows(field, &basis);
        let picked_cols = block.echelon().pivots;
        let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); t.d()];
        for &ri in &picked_rows {
            for (k, &pos) in decode(ri, &row_shape).iter().enumerate() {
                sets[k].insert(t.axes()[k][pos]);
            }
        }
        for &ci in &picked_cols {
            for (k, &pos) in decode(ci, &col_shape).iter().enumerate() {
                sets[d1 + k].insert(t.axes()[d1 + k][pos]);
            }
        }
        let sel = sorted_selection(sets);
        if !rrank_at_least(&t.restrict(&sel)?, &rprod, l, budget)? {
            return Err(Error::VerificationFailed(
                "flattening minor lost the product rank".into(),
            ));
        }
        return Ok(sel);
    }
    // Low flattening rank: T is a sum of fewer than l products with both
    // factor families independent; scan for a factor carrying the rank.
    let (lf, rf) = flat.rank_factorization();
    let r_count = lf.cols();
    let mut firsts = Vec::with_capacity(r_count);
    let mut seconds = Vec::with_capacity(r_count);
    for i in 0..r_count {
        let mut t1 = Tensor::zeros(field, t.axes()[..d1].to_vec())?;
        for row in 0..lf.rows() {
            t1.set(&decode(row, &row_shape), lf.get(row, i));
        }
        firsts.push(t1);
        let mut t2 = Tensor::zeros(field, t.axes()[d1..].to_vec())?;
        for (col, &v) in rf.row(i).iter().enumerate() {
            t2.set(&decode(col, &col_shape), v);
        }
        seconds.push(t2);
    }
    for i in 0..r_count {
        if rrank_exact(&firsts[i], r1, budget)?.value >= l {
            let rows: Vec<Vec<u8>> = (0..r_count).map(|j| rf.row(j)).collect();
            let duals = dual_basis(field, &rows)?;
            if contract_trailing(t, d1, &duals.duals[i])? != firsts[i] {
                return Err(Error::VerificationFailed(
                    "dual contraction fails to recover the first factor".into(),
                ));
            }
            let (sel1, _) = match general_minor_find(&firsts[i], r1, l, budget) {
                Ok(found) => found,
                Err(Error::RankTooLow { .. }) => continue,
                Err(e) => return Err(e),
            };
            let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); t.d()];
            for (k, subset) in sel1.subsets.iter().enumerate() {
                sets[k].extend(subset.iter().copied());
            }
            for &qlin in &duals.support {
                for (k, &pos) in decode(qlin, &col_shape).iter().enumerate() {
                    sets[d1 + k].insert(t.axes()[d1 + k][pos]);
                }
            }
            let sel = sorted_selection(sets);
            if !rrank_at_least(&t.restrict(&sel)?, &rprod, l, budget)? {
                return Err(Error::VerificationFailed(
                    "first-factor minor lost the product rank".into(),
                ));
            }
            return Ok(sel);
        }
        if rrank_exact(&seconds[i], r2, budget)?.value >= l {
            let cols: Vec<Vec<u8>> =
                (0..r_count).map(|j| (0..lf.rows()).map(|rr| lf.get(rr, j)).collect()).collect();
            let duals = dual_basis(field, &cols)?;
            if contract_leading(t, d1, &duals.duals[i])? != seconds[i] {
                return Err(Error::VerificationFailed(
                    "dual contraction fails to recover the second factor".into(),
                ));
            }
            let (sel2, _) = match general_minor_find(&seconds[i], r2, l, budget) {
                Ok(found) => found,
                Err(Error::RankTooLow { .. }) => continue,
                Err(e) => return Err(e),
            };
            let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); t.d()];
            for &plin in &duals.support {
                for (k, &pos) in decode(plin, &row_shape).iter().enumerate() {
                    sets[k].insert(t.axes()[k][pos]);
                }
            }
            for (k, subset) in sel2.subsets.iter().enumerate() {
                sets[d1 + k].extend(subset.iter().copied());
            }
            let sel = sorted_selection(sets);
            if !rrank_at_least(&t.restrict(&sel)?, &rprod, l, budget)? {
                return Err(Error::VerificationFailed(
                    "second-factor minor lost the product rank".into(),
                ));
            }
            return Ok(sel);
        }
    }
    // No single factor carries the rank at this scale; shrink under the
    // product family directly.
    greedy_shrink(t, &rprod, l, budget)
}

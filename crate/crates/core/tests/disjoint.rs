//! Disjoint restriction tests: the matrix extraction is checked against the
//! exhaustive essential rank on every instance, the derandomized label split
//! is held to its retained-fraction floor, the certificate rewrite is
//! validated pointwise off the diagonal, and the staged engine's route
//! records are pinned on planted inputs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trank_core::disjoint::{
    disjoint_flattening_extend, disjoint_rank_find, essential_equivalence_reduce,
    matrix_disjoint_extract, multi_disjoint_find, multi_matrix_disjoint, support_disjointify,
    DisjointCase, ModifierProvenance, Verification,
};
use trank_core::error::Error;
use trank_core::oracle::{
    disjoint_rank_exact, essential_rank_exact, rrank_exact, CertTerm, FactorTable, NodeBudget,
    RankCertificate, DEFAULT_NODE_BUDGET,
};
use trank_core::tensor::{has_equal_pair, points, PartitionFamily, Tensor};

fn f2() -> trank_core::algebra::Field {
    trank_core::algebra::Field::new(2).unwrap()
}

fn budget() -> NodeBudget {
    NodeBudget::new(DEFAULT_NODE_BUDGET)
}

fn cube_axes(n: u32, d: usize) -> Vec<Vec<u32>> {
    vec![(1..=n).collect(); d]
}

fn point_tensor(axes: Vec<Vec<u32>>, pts: &[&[u32]]) -> Tensor {
    Tensor::from_fn(f2(), axes, |l| u8::from(pts.iter().any(|p| *p == l))).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, n: u32) -> Tensor {
    let len = (n as usize) * (n as usize);
    let data: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
    Tensor::from_dense(f2(), cube_axes(n, 2), data).unwrap()
}

#[test]
fn matrix_extract_on_a_diagonal_matrix_is_empty() {
    let t = Tensor::from_fn(f2(), cube_axes(3, 2), |l| u8::from(l[0] == l[1])).unwrap();
    let mut b = budget();
    let (cert, modifier) = matrix_disjoint_extract(&t, &mut b).unwrap();
    assert_eq!(cert.value, 0);
    assert!(cert.selection.subsets.iter().all(|s| s.is_empty()));
    assert_eq!(cert.verification, Verification::Exact);
    assert_eq!(modifier.provenance, ModifierProvenance::BruteForceOptimum);
    assert!(t.add(&modifier.tensor).is_zero());
}

#[test]
fn matrix_extract_meets_the_essential_floor_on_random_matrices() {
    let tr2 = PartitionFamily::tensor_rank(2);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for round in 0..50 {
        let t = random_matrix(&mut rng, 6);
        let mut b = budget();
        let (erk, _) = essential_rank_exact(&t, &tr2, &mut b).unwrap();
        let (cert, modifier) = matrix_disjoint_extract(&t, &mut b).unwrap();
        assert!(cert.value >= erk.div_ceil(3), "round {round}: {} < ceil({erk}/3)", cert.value);
        assert!(cert.value <= erk);
        assert!(cert.selection.pairwise_disjoint());
        let modified = t.add(&modifier.tensor);
        assert!(modified.as_matrix().rank() <= 3 * cert.value);
        if cert.value > 0 {
            let sub = t.restrict(&cert.selection).unwrap();
            assert_eq!(sub.as_matrix().rank(), cert.value);
        }
    }
}

#[test]
fn matrix_extract_finds_rank_on_a_zero_diagonal_matrix() {
    // Three 2x2 blocks with ones off the diagonal: every diagonal completion
    // keeps rank one per block, so the essential rank is exactly three, and
    // the odd/even label split carries all of it disjointly.
    let t = Tensor::from_fn(f2(), cube_axes(6, 2), |l| {
        u8::from(l[0] != l[1] && l[0].div_ceil(2) == l[1].div_ceil(2))
    })
    .unwrap();
    let mut b = budget();
    let tr2 = PartitionFamily::tensor_rank(2);
    let (erk, _) = essential_rank_exact(&t, &tr2, &mut b).unwrap();
    let (cert, _) = matrix_disjoint_extract(&t, &mut b).unwrap();
    assert_eq!(erk, 3);
    assert_eq!(cert.value, 3);
}

#[test]
fn matrix_extract_rejects_higher_orders_and_tiny_budgets() {
    let cube = point_tensor(cube_axes(2, 3), &[&[1, 2, 1]]);
    assert!(matches!(matrix_disjoint_extract(&cube, &mut budget()), Err(Error::BadAxisSet)));
    let t = Tensor::from_fn(f2(), cube_axes(6, 2), |l| u8::from(l[0] != l[1])).unwrap();
    let mut tiny = NodeBudget::new(1);
    assert!(matches!(
        matrix_disjoint_extract(&t, &mut tiny),
        Err(Error::ScaleExceeded { budget: 1 })
    ));
}

#[test]
fn multi_matrix_with_one_matrix_reuses_the_single_extraction() {
    let t = point_tensor(cube_axes(4, 2), &[&[1, 2], &[3, 4]]);
    let mut b = budget();
    let cert = multi_matrix_disjoint(std::slice::from_ref(&t), &[vec![1]], 2, &mut b).unwrap();
    assert_eq!(cert.value, 2);
    assert!(cert.selection.pairwise_disjoint());
    assert_eq!(t.restrict(&cert.selection).unwrap().as_matrix().rank(), 2);
}

#[test]
fn multi_matrix_with_no_combinations_is_vacuous() {
    let t = point_tensor(cube_axes(3, 2), &[&[1, 2]]);
    let mut b = budget();
    let cert = multi_matrix_disjoint(&[t.clone(), t], &[], 5, &mut b).unwrap();
    assert_eq!(cert.value, 5);
    assert!(cert.selection.subsets.iter().all(|s| s.is_empty()));
}

#[test]
fn multi_matrix_serves_every_combination_of_a_planted_pair() {
    let m1 = point_tensor(cube_axes(4, 2), &[&[1, 3]]);
    let m2 = point_tensor(cube_axes(4, 2), &[&[1, 3], &[2, 4]]);
    let lambda = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
    let mut b = budget();
    let cert = multi_matrix_disjoint(&[m1.clone(), m2.clone()], &lambda, 1, &mut b).unwrap();
    assert!(cert.value >= 1);
    assert!(cert.selection.pairwise_disjoint());
    for a in &lambda {
        let combo = Tensor::combo(&[m1.clone(), m2.clone()], a);
        assert!(combo.restrict(&cert.selection).unwrap().as_matrix().rank() >= 1);
    }
}

#[test]
fn multi_matrix_reports_the_exact_maximum_when_infeasible() {
    // Two single-point matrices that need the shared labels on opposite
    // sides: no assignment serves both.
    let m1 = point_tensor(cube_axes(2, 2), &[&[1, 2]]);
    let m2 = point_tensor(cube_axes(2, 2), &[&[2, 1]]);
    let lambda = vec![vec![1, 0], vec![0, 1]];
    let mut b = budget();
    let err = multi_matrix_disjoint(&[m1, m2], &lambda, 1, &mut b).unwrap_err();
    assert!(matches!(err, Error::RankTooLow { requested: 1, certified: 0 }));
}

#[test]
fn multi_matrix_validates_its_inputs() {
    let t = point_tensor(cube_axes(2, 2), &[&[1, 2]]);
    let four = vec![t.clone(), t.clone(), t.clone(), t.clone()];
    assert!(matches!(
        multi_matrix_disjoint(&four, &[vec![1, 0, 0, 0]], 1, &mut budget()),
        Err(Error::ScaleExceeded { .. })
    ));
    assert!(matches!(
        multi_matrix_disjoint(&[t.clone()], &[vec![1, 1]], 1, &mut budget()),
        Err(Error::InvalidData(_))
    ));
    assert!(matches!(
        multi_matrix_disjoint(&[t.clone()], &[vec![0]], 1, &mut budget()),
        Err(Error::ParameterOutOfRange(_))
    ));
    assert!(matches!(
        multi_matrix_disjoint(&[t], &[vec![1]], 0, &mut budget()),
        Err(Error::ParameterOutOfRange(_))
    ));
}

#[test]
fn disjointify_keeps_a_quarter_of_an_off_diagonal_matrix_support() {
    let t = Tensor::from_fn(f2(), cube_axes(4, 2), |l| u8::from(l[0] != l[1])).unwrap();
    let report = support_disjointify(&t);
    assert_eq!(report.essential_points, 12);
    assert_eq!(report.uniform_guarantee, 3);
    assert_eq!(report.permutation_figure, 6);
    assert!(report.retained >= 3);
    assert!(report.selection.pairwise_disjoint());
    let sub = t.restrict(&report.selection).unwrap();
    assert_eq!(sub.support_size(), report.retained);
}

#[test]
fn disjointify_keeps_the_guaranteed_fraction_on_random_cubes() {
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    for _ in 0..20 {
        let data: Vec<u8> = (0..64).map(|_| rng.gen_range(0..2)).collect();
        let t = Tensor::from_dense(f2(), cube_axes(4, 3), data).unwrap();
        let report = support_disjointify(&t);
        assert!(report.retained >= report.essential_points.div_ceil(27));
        assert_eq!(report.permutation_figure, report.essential_points.div_ceil(6));
        let sub = t.restrict(&report.selection);
        if let Ok(sub) = sub {
            assert_eq!(sub.support_size(), report.retained);
        } else {
            assert_eq!(report.retained, 0);
        }
    }
}

#[test]
fn disjointify_on_fully_diagonal_support_is_trivial() {
    let t = Tensor::from_fn(f2(), cube_axes(3, 3), |l| u8::from(l.iter().all(|&x| x == l[0])))
        .unwrap();
    let report = support_disjointify(&t);
    assert_eq!(report.essential_points, 0);
    assert_eq!(report.retained, 0);
    assert_eq!(report.uniform_guarantee, 0);
}

/// A two-term certificate over the order-three slice family: one term on the
/// largest part with an indicator complement factor, one term away from it.
fn slab_instance() -> (Tensor, RankCertificate) {
    let axes = cube_axes(3, 3);
    let indicator = FactorTable { part: vec![1], values: BTreeMap::from([(vec![1], 1)]) };
    let body = FactorTable {
        part: vec![2, 3],
        values: BTreeMap::from([(vec![1, 2], 1), (vec![2, 1], 1), (vec![2, 3], 1)]),
    };
    let z_side = FactorTable { part: vec![3], values: BTreeMap::from([(vec![3], 1)]) };
    let xy_side = FactorTable { part: vec![1, 2], values: BTreeMap::from([(vec![2, 2], 1)]) };
    let terms = vec![
        CertTerm { partition: vec![vec![1], vec![2, 3]], factors: vec![indicator, body] },
        CertTerm { partition: vec![vec![1, 2], vec![3]], factors: vec![xy_side, z_side] },
    ];
    let cert = RankCertificate::new("sr".into(), terms);
    let t = cert.evaluate(f2(), &axes).unwrap();
    (t, cert)
}

#[test]
fn equivalence_reduce_rewrites_onto_the_split_family() {
    let (t, cert) = slab_instance();
    let r = PartitionFamily::slice_rank(3);
    let v = Tensor::zeros(f2(), t.axes().to_vec()).unwrap();
    let mut b = budget();
    let reduction = essential_equivalence_reduce(&t, &r, &v, &cert, 2, &mut b).unwrap();
    assert_eq!(reduction.family, r.down_shadow().unwrap().r_prime);
    let l = cert.value;
    assert!(reduction.certificate.value <= l * l * (2 + 2) + l * l * l + l);
    let eval = reduction.certificate.evaluate(f2(), t.axes()).unwrap();
    assert_eq!(eval, t.add(&reduction.modifier.tensor));
    for idx in points(t.shape()) {
        if !has_equal_pair(&t.labels_of(&idx)) {
            assert_eq!(eval.get(&idx), t.get(&idx), "certificates disagree off the diagonal");
        }
    }
}

#[test]
fn equivalence_reduce_enforces_the_slice_bound() {
    let (t, cert) = slab_instance();
    let r = PartitionFamily::slice_rank(3);
    let v = Tensor::zeros(f2(), t.axes().to_vec()).unwrap();
    let mut b = budget();
    let err = essential_equivalence_reduce(&t, &r, &v, &cert, 1, &mut b).unwrap_err();
    assert!(matches!(err, Error::SliceBoundViolated { bound: 1, found: 2 }));
}

#[test]
fn equivalence_reduce_rejects_bad_modifiers_and_certificates() {
    let (t, cert) = slab_instance();
    let r = PartitionFamily::slice_rank(3);
    let off = point_tensor(t.axes().to_vec(), &[&[3, 1, 2]]);
    assert!(matches!(
        essential_equivalence_reduce(&t, &r, &off, &cert, 2, &mut budget()),
        Err(Error::InvalidData(_))
    ));
    let v = Tensor::zeros(f2(), t.axes().to_vec()).unwrap();
    let wrong = RankCertificate::new("sr".into(), Vec::new());
    assert!(matches!(
        essential_equivalence_reduce(&t, &r, &v, &wrong, 2, &mut budget()),
        Err(Error::InvalidData(_))
    ));
}

#[test]
fn equivalence_reduce_of_the_zero_tensor_is_empty() {
    let t = Tensor::zeros(f2(), cube_axes(3, 3)).unwrap();
    let r = PartitionFamily::slice_rank(3);
    let cert = RankCertificate::new("sr".into(), Vec::new());
    let mut b = budget();
    let reduction = essential_equivalence_reduce(&t, &r, &t.clone(), &cert, 0, &mut b).unwrap();
    assert_eq!(reduction.certificate.value, 0);
    assert!(reduction.modifier.tensor.is_zero());
}

fn two_point_cube() -> Tensor {
    point_tensor(cube_axes(6, 3), &[&[1, 2, 3], &[4, 5, 6], &[1, 1, 1]])
}

#[test]
fn flattening_family_spans_two_dimensions_on_a_planted_instance() {
    let t = two_point_cube();
    let mut b = budget();
    let cert = disjoint_flattening_extend(&t, 0, 1, 2, &mut b).unwrap();
    assert!(cert.value >= 2);
    assert_eq!(cert.verification, Verification::Exact);
    assert!(cert.selection.pairwise_disjoint());
    let sub = t.restrict(&cert.selection).unwrap();
    assert!(sub.flatten(&[0]).unwrap().rank() >= 2);
}

#[test]
fn flattening_family_requires_the_slice_hypothesis() {
    let t = two_point_cube();
    assert!(matches!(
        disjoint_flattening_extend(&t, 0, 0, 2, &mut budget()),
        Err(Error::HypothesisUnverifiable)
    ));
}

#[test]
fn flattening_family_reports_partial_verification_beyond_the_enumeration_cap() {
    // Rest-axis slices live in boxes whose diagonal is too large to
    // enumerate, and one slice's plain rank exceeds the bound while its
    // masked floor stays under it, so the hypothesis survives only as a
    // sandwich.
    let mut axes = vec![vec![1, 2, 3, 4]];
    axes.extend(vec![vec![1, 2, 3]; 3]);
    let t = point_tensor(axes, &[&[4, 1, 2, 3], &[1, 1, 1, 1], &[2, 1, 2, 2]]);
    let mut b = budget();
    let cert = disjoint_flattening_extend(&t, 0, 1, 1, &mut b).unwrap();
    assert_eq!(cert.value, 1);
    assert_eq!(cert.verification, Verification::Partial);
}

#[test]
fn flattening_family_rejects_matrices_and_bad_axes() {
    let m = point_tensor(cube_axes(3, 2), &[&[1, 2]]);
    assert!(matches!(
        disjoint_flattening_extend(&m, 0, 1, 1, &mut budget()),
        Err(Error::BadAxisSet)
    ));
    let t = two_point_cube();
    assert!(matches!(
        disjoint_flattening_extend(&t, 5, 1, 1, &mut budget()),
        Err(Error::BadAxisSet)
    ));
}

#[test]
fn disjoint_find_on_diagonal_support_reports_rank_zero() {
    let t = Tensor::from_fn(f2(), cube_axes(2, 3), |l| u8::from(l.iter().all(|&x| x == l[0])))
        .unwrap();
    let r = PartitionFamily::slice_rank(3);
    for l in 1..=3 {
        let err = disjoint_rank_find(&t, &r, l, &mut budget()).unwrap_err();
        assert!(matches!(err, Error::RankTooLow { requested, certified: 0 } if requested == l));
    }
}

#[test]
fn disjoint_find_anchors_a_slice_at_target_one() {
    let t = two_point_cube();
    let tr = PartitionFamily::tensor_rank(3);
    let mut b = budget();
    let (cert, records) = disjoint_rank_find(&t, &tr, 1, &mut b).unwrap();
    assert!(cert.value >= 1);
    assert_eq!(cert.notion, "tr");
    assert_eq!(records[0].case, DisjointCase::SliceAnchor);
    assert!(cert.selection.pairwise_disjoint());
}

#[test]
fn disjoint_find_reaches_tensor_rank_two_through_a_flattening_family() {
    let t = two_point_cube();
    let tr = PartitionFamily::tensor_rank(3);
    let mut b = budget();
    let (cert, records) = disjoint_rank_find(&t, &tr, 2, &mut b).unwrap();
    assert_eq!(cert.value, 2);
    assert_eq!(cert.verification, Verification::Exact);
    assert_eq!(records[0].case, DisjointCase::FlatteningFamily);
    let labels: Vec<u32> = cert.selection.subsets.iter().flatten().copied().collect();
    let mut dedup = labels.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), labels.len());
}

#[test]
fn disjoint_find_separates_a_chain_on_the_slice_family() {
    let t = point_tensor(cube_axes(3, 3), &[&[1, 2, 3]]);
    let r = PartitionFamily::slice_rank(3);
    let mut b = budget();
    let (cert, records) = disjoint_rank_find(&t, &r, 1, &mut b).unwrap();
    assert_eq!(cert.value, 1);
    assert_eq!(records[0].case, DisjointCase::ChainSeparated);
    assert_eq!(cert.verification, Verification::Exact);
}

#[test]
fn disjoint_find_shrinks_an_exhaustive_witness_when_the_routes_decline() {
    let t = point_tensor(cube_axes(6, 3), &[&[1, 2, 3], &[4, 5, 6]]);
    let r = PartitionFamily::slice_rank(3);
    let mut b = budget();
    let (cert, records) = disjoint_rank_find(&t, &r, 2, &mut b).unwrap();
    assert_eq!(cert.value, 2);
    assert_eq!(records.last().unwrap().case, DisjointCase::OracleWitness);
    let sub = t.restrict(&cert.selection).unwrap();
    let mut b2 = budget();
    assert_eq!(rrank_exact(&sub, &r, &mut b2).unwrap().value, 2);
}

#[test]
fn disjoint_find_propagates_scale_limits() {
    let t = two_point_cube();
    let tr = PartitionFamily::tensor_rank(3);
    let mut tiny = NodeBudget::new(2);
    assert!(matches!(
        disjoint_rank_find(&t, &tr, 2, &mut tiny),
        Err(Error::ScaleExceeded { budget: 2 })
    ));
}

#[test]
fn multi_disjoint_reports_an_obstruction_for_a_crossing_pair() {
    let m1 = point_tensor(cube_axes(2, 2), &[&[1, 2]]);
    let m2 = point_tensor(cube_axes(2, 2), &[&[2, 1]]);
    let tr2 = PartitionFamily::tensor_rank(2);
    let lambda = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
    let mut b = budget();
    let err = multi_disjoint_find(&[m1, m2], &tr2, &lambda, 1, None, &mut b).unwrap_err();
    assert!(matches!(err, Error::Obstructed(_)));
}

#[test]
fn multi_disjoint_serves_a_planted_tensor_pair() {
    let t1 = point_tensor(cube_axes(6, 3), &[&[1, 2, 3]]);
    let t2 = point_tensor(cube_axes(6, 3), &[&[4, 5, 6]]);
    let r = PartitionFamily::slice_rank(3);
    let lambda = vec![vec![1, 0], vec![0, 1], vec![1, 1]];
    let mut b = budget();
    let cert = multi_disjoint_find(&[t1.clone(), t2.clone()], &r, &lambda, 1, Some(2), &mut b)
        .unwrap();
    assert_eq!(cert.value, 1);
    assert!(cert.selection.pairwise_disjoint());
    for a in &lambda {
        let combo = Tensor::combo(&[t1.clone(), t2.clone()], a);
        let sub = combo.restrict(&cert.selection).unwrap();
        let mut b2 = budget();
        assert!(rrank_exact(&sub, &r, &mut b2).unwrap().value >= 1);
    }
    assert!(cert.transcript.iter().any(|line| line.contains("multiplier 2")));
}

#[test]
fn multi_disjoint_with_one_tensor_delegates_to_the_engine() {
    let t = point_tensor(cube_axes(3, 3), &[&[1, 2, 3]]);
    let r = PartitionFamily::slice_rank(3);
    let mut b = budget();
    let cert = multi_disjoint_find(&[t], &r, &[vec![1]], 1, None, &mut b).unwrap();
    assert_eq!(cert.value, 1);
    assert!(cert.transcript.iter().any(|line| line.contains("single tensor")));
}

#[test]
fn certificate_json_carries_the_disjoint_flag() {
    let t = point_tensor(cube_axes(3, 3), &[&[1, 2, 3]]);
    let r = PartitionFamily::slice_rank(3);
    let mut b = budget();
    let (cert, _) = disjoint_rank_find(&t, &r, 1, &mut b).unwrap();
    let value = cert.to_value();
    assert_eq!(value["disjoint"], serde_json::json!(true));
    assert_eq!(value["notion"], serde_json::json!("sr"));
    assert_eq!(value["value"], serde_json::json!(1));
    assert_eq!(value["verification"], serde_json::json!("exact"));
}

#[test]
fn disjoint_rank_vanishes_exactly_when_the_support_is_diagonal() {
    let axes = vec![vec![1, 2, 3], vec![1, 2, 4], vec![5, 6]];
    let r = PartitionFamily::slice_rank(3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let data: Vec<u8> = (0..18).map(|_| rng.gen_range(0..2)).collect();
        let t = Tensor::from_dense(f2(), axes.clone(), data).unwrap();
        let mut b = budget();
        let (k, _) = disjoint_rank_exact(&t, &r, &mut b).unwrap();
        assert_eq!(k == 0, t.essential_support().is_empty());
        let mut b2 = budget();
        assert!(k <= rrank_exact(&t, &r, &mut b2).unwrap().value);
    }
}

#[test]
fn matrix_disjoint_rank_never_exceeds_the_essential_rank() {
    let tr2 = PartitionFamily::tensor_rank(2);
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    for _ in 0..30 {
        let t = random_matrix(&mut rng, 5);
        let mut b = budget();
        let (erk, _) = essential_rank_exact(&t, &tr2, &mut b).unwrap();
        let (drk, _) = disjoint_rank_exact(&t, &tr2, &mut b).unwrap();
        assert!(drk <= erk);
        assert_eq!(drk == 0, t.essential_support().is_empty());
    }
}

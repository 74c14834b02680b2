//! Bias, analytic rank, and minor-pipeline tests, cross-checked against
//! independent enumerations written directly in this file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trank_core::algebra::{all_vectors, Field};
use trank_core::bias::{
    analytic_rank, averaging_check, bias_exact, bias_mc, ff_pr_minor_find, multilinear_eval,
    separated_projections, BiasValue, Separated,
};
use trank_core::oracle::{rrank_at_least, rrank_exact, NodeBudget};
use trank_core::tensor::{PartitionFamily, Tensor};
use trank_core::{Error, Parallelism};

fn f2() -> Field {
    Field::new(2).unwrap()
}

fn f3() -> Field {
    Field::new(3).unwrap()
}

fn budget() -> NodeBudget {
    NodeBudget::new(50_000_000)
}

fn cube_axes(n: u32, d: usize) -> Vec<Vec<u32>> {
    vec![(1..=n).collect(); d]
}

fn diagonal(field: Field, n: u32, d: usize) -> Tensor {
    Tensor::from_fn(field, cube_axes(n, d), |x| u8::from(x.iter().all(|&c| c == x[0]))).unwrap()
}

fn random_tensor(field: Field, n: u32, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let p = field.order();
    let len = (n as usize).pow(d as u32);
    let data: Vec<u8> = (0..len).map(|_| rng.gen_range(0..p)).collect();
    Tensor::from_dense(field, cube_axes(n, d), data).unwrap()
}

/// Row reduction over F_p written from scratch for cross-checking.
fn naive_rank(p: u8, rows: &[Vec<u8>]) -> usize {
    let mut rows: Vec<Vec<u8>> = rows.to_vec();
    let inv = |a: u8| (1..p).find(|&b| (a as u16 * b as u16) % p as u16 == 1).unwrap();
    let mut rank = 0;
    let cols = rows.first().map_or(0, Vec::len);
    for c in 0..cols {
        if let Some(r) = (rank..rows.len()).find(|&r| rows[r][c] != 0) {
            rows.swap(rank, r);
            let s = inv(rows[rank][c]);
            for x in rows[rank].iter_mut() {
                *x = ((*x as u16 * s as u16) % p as u16) as u8;
            }
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[c] != 0 {
                    let f = row[c];
                    for (x, &pv) in row.iter_mut().zip(&pivot_row) {
                        let sub = (f as u16 * pv as u16) % p as u16;
                        *x = ((*x as u16 + p as u16 - sub) % p as u16) as u8;
                    }
                }
            }
            rank += 1;
        }
    }
    rank
}

fn exact_parts(b: &BiasValue) -> (u128, u32, u64) {
    match *b {
        BiasValue::Exact { vanishing, exp, field_order } => (vanishing, exp, field_order),
        BiasValue::Estimate { .. } => panic!("expected exact bias"),
    }
}

#[test]
fn diagonal_cube_bias_matches_double_loop() {
    let t = diagonal(f2(), 2, 3);
    // Independent enumeration: count pairs (u, v) in (F_2^2)^2 for which the
    // resulting linear form in the last variable vanishes identically.
    let mut count = 0u32;
    for u in 0..4u32 {
        for v in 0..4u32 {
            let form: Vec<u8> = (0..2)
                .map(|z| {
                    let mut acc = 0u8;
                    for x in 0..2 {
                        for y in 0..2 {
                            let txyz = u8::from(x == y && y == z);
                            acc ^= txyz & (u >> x) as u8 & (v >> y) as u8 & 1;
                        }
                    }
                    acc
                })
                .collect();
            count += u32::from(form.iter().all(|&a| a == 0));
        }
    }
    assert_eq!(count, 9);
    let b = bias_exact(&t, Parallelism::default()).unwrap();
    let (vanishing, exp, order) = exact_parts(&b);
    assert_eq!((vanishing, exp, order), (9, 4, 2));
    assert_eq!(b.fraction(), (9, 16));
    assert_eq!(b.rational_string(), "9/16");
}

#[test]
fn zero_tensor_has_bias_one() {
    for d in 2..=4 {
        let t = Tensor::zeros(f2(), cube_axes(2, d)).unwrap();
        let b = bias_exact(&t, Parallelism::Sequential).unwrap();
        assert_eq!(b.fraction(), (1, 1));
        assert!((b.approx() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn matrix_bias_is_reciprocal_rank_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..120 {
        let (field, p) = if trial % 2 == 0 { (f2(), 2u8) } else { (f3(), 3u8) };
        let n = rng.gen_range(1..=4);
        let t = random_tensor(field, n, 2, &mut rng);
        let rows: Vec<Vec<u8>> =
            (0..n as usize).map(|i| (0..n as usize).map(|j| t.get(&[i, j])).collect()).collect();
        let r = naive_rank(p, &rows);
        let (vanishing, exp, order) = exact_parts(&bias_exact(&t, Parallelism::Sequential).unwrap());
        assert_eq!(order, p as u64);
        // bias = p^{n-r} / p^n = p^{-r}.
        assert_eq!(vanishing, (p as u128).pow(n - r as u32));
        assert_eq!(exp, n);
    }
}

#[test]
fn bias_is_in_unit_interval_and_one_only_for_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let t = random_tensor(f2(), 2, 3, &mut rng);
        let (n, d) = bias_exact(&t, Parallelism::Sequential).unwrap().fraction();
        assert!(n >= 1 && n <= d);
        assert_eq!(n == d, t.is_zero());
    }
}

#[test]
fn analytic_rank_of_matrices_is_the_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..60 {
        let (field, p) = if trial % 2 == 0 { (f2(), 2u8) } else { (f3(), 3u8) };
        let n = rng.gen_range(1..=4);
        let t = random_tensor(field, n, 2, &mut rng);
        let rows: Vec<Vec<u8>> =
            (0..n as usize).map(|i| (0..n as usize).map(|j| t.get(&[i, j])).collect()).collect();
        let r = naive_rank(p, &rows) as u32;
        let ar = analytic_rank(&t, Parallelism::Sequential).unwrap();
        assert_eq!(ar.exact, Some(r));
        assert_eq!((ar.lo, ar.hi), (r, r));
        assert!((ar.approx - r as f64).abs() < 1e-9);
    }
}

#[test]
fn analytic_rank_bracket_on_the_diagonal_cube() {
    let ar = analytic_rank(&diagonal(f2(), 2, 3), Parallelism::Sequential).unwrap();
    // bias 9/16 sits strictly between 2^0 and 2^{-1}.
    assert_eq!(ar.exact, None);
    assert_eq!((ar.lo, ar.hi), (0, 1));
    assert!(ar.approx > 0.0 && ar.approx < 1.0);
}

#[test]
fn analytic_rank_never_exceeds_partition_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let pr3 = PartitionFamily::partition_rank(3);
    for _ in 0..55 {
        let t = random_tensor(f2(), 2, 3, &mut rng);
        let pr = rrank_exact(&t, &pr3, &mut budget()).unwrap().value as u32;
        let (vanishing, exp, order) = exact_parts(&bias_exact(&t, Parallelism::Sequential).unwrap());
        // bias >= |F|^{-pr}, as integers: vanishing * p^pr >= p^exp.
        assert!(vanishing * (order as u128).pow(pr) >= (order as u128).pow(exp));
        let ar = analytic_rank(&t, Parallelism::Sequential).unwrap();
        assert!(ar.hi <= pr || ar.exact == Some(pr));
    }
}

#[test]
fn averaging_identity_holds_universally() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..60 {
        let t = random_tensor(f2(), 2, 3, &mut rng);
        assert!(averaging_check(&t, Parallelism::Sequential).unwrap());
    }
    for _ in 0..25 {
        let t = random_tensor(f2(), 2, 4, &mut rng);
        assert!(averaging_check(&t, Parallelism::default()).unwrap());
    }
    for _ in 0..15 {
        let t = random_tensor(f3(), 2, 3, &mut rng);
        assert!(averaging_check(&t, Parallelism::Sequential).unwrap());
    }
}

#[test]
fn averaging_on_a_rank_one_matrix_by_hand() {
    // T = u ⊗ v with u = (1,1), v = (1,0) over F_2.
    let t = Tensor::from_fn(f2(), cube_axes(2, 2), |x| u8::from(x[1] == 1)).unwrap();
    // Left side by hand: a.T = (a_1 + a_2) v, which vanishes for 2 of the 4
    // choices of a, so the bias is 2/4 = 1/2.
    let mut lhs = 0u32;
    for a in 0..4u32 {
        let c = ((a & 1) ^ (a >> 1)) & 1;
        lhs += u32::from(c == 0);
    }
    assert_eq!(lhs, 2);
    assert_eq!(bias_exact(&t, Parallelism::Sequential).unwrap().fraction(), (1, 2));
    // Right side by hand: the projections a.T are the zero vector (bias 1)
    // twice and v != 0 (bias 0) twice, averaging to 1/2.
    let mut rhs_sum = 0u32;
    for a in 0..4u32 {
        let row = ((a & 1) ^ (a >> 1)) & 1;
        rhs_sum += u32::from(row == 0);
    }
    assert_eq!(rhs_sum, 2);
    assert!(averaging_check(&t, Parallelism::Sequential).unwrap());
}

#[test]
fn monte_carlo_bias_of_zero_is_one() {
    let t = Tensor::zeros(f2(), cube_axes(2, 3)).unwrap();
    let b = bias_mc(&t, 500, 7, Parallelism::Sequential).unwrap();
    assert_eq!(b.fraction(), (1, 1));
}

#[test]
fn monte_carlo_is_reproducible_and_concentrates() {
    // Rank-2 diagonal 4x4 matrix over F_2: bias 1/4.
    let t = Tensor::from_fn(f2(), cube_axes(4, 2), |x| u8::from(x[0] == x[1] && x[0] <= 2))
        .unwrap();
    let a = bias_mc(&t, 100_000, 42, Parallelism::default()).unwrap();
    let b = bias_mc(&t, 100_000, 42, Parallelism::Sequential).unwrap();
    assert_eq!(a, b);
    let BiasValue::Estimate { hits, samples, seed } = a else { panic!("expected estimate") };
    assert_eq!((samples, seed), (100_000, 42));
    let sigma = (0.25f64 * 0.75 / 100_000.0).sqrt();
    assert!((hits as f64 / 100_000.0 - 0.25).abs() <= 3.0 * sigma);
    let c = bias_mc(&t, 100_000, 43, Parallelism::Sequential).unwrap();
    assert_ne!(a, c);
}

#[test]
fn multilinear_evaluation_and_input_checks() {
    let t = diagonal(f2(), 2, 3);
    // Diagonal form: sum of u_i v_i w_i.
    assert_eq!(multilinear_eval(&t, &[vec![1, 0], vec![1, 0], vec![1, 0]]).unwrap(), 1);
    assert_eq!(multilinear_eval(&t, &[vec![1, 1], vec![1, 1], vec![1, 1]]).unwrap(), 0);
    assert_eq!(multilinear_eval(&t, &[vec![1, 1], vec![1, 0], vec![0, 1]]).unwrap(), 0);
    assert_eq!(multilinear_eval(&t, &[vec![1, 0], vec![1, 0]]), Err(Error::AxisMismatch));
    assert_eq!(
        multilinear_eval(&t, &[vec![1], vec![1, 0], vec![1, 0]]),
        Err(Error::AxisMismatch)
    );
    assert!(matches!(
        multilinear_eval(&t, &[vec![2, 0], vec![1, 0], vec![1, 0]]),
        Err(Error::InvalidData(_))
    ));
}

#[test]
fn separated_family_infeasible_on_the_zero_tensor() {
    let t = Tensor::zeros(f2(), cube_axes(2, 3)).unwrap();
    match separated_projections(&t, 1, 1, &mut budget()).unwrap() {
        Separated::Infeasible => {}
        Separated::Found(_) => panic!("zero tensor admits no separated family"),
    }
}

#[test]
fn separated_family_on_the_diagonal_cube() {
    let t = diagonal(f2(), 2, 3);
    match separated_projections(&t, 1, 1, &mut budget()).unwrap() {
        Separated::Found(us) => {
            assert_eq!(us.len(), 1);
            assert!(us[0].iter().any(|&x| x != 0));
        }
        Separated::Infeasible => panic!("diagonal admits a separated singleton"),
    }
}

#[test]
fn separated_family_certifies_a_rank_lower_bound() {
    let t = diagonal(f2(), 3, 3);
    let l = 2;
    let us = match separated_projections(&t, l, l, &mut budget()).unwrap() {
        Separated::Found(us) => us,
        Separated::Infeasible => panic!("rank-3 diagonal admits a separated pair"),
    };
    assert_eq!(us.len(), l);
    // Every nonzero combination keeps matrix rank >= l, so pr(t) >= l; the
    // oracle agrees with room to spare.
    let pr2 = PartitionFamily::partition_rank(2);
    for v in all_vectors(f2(), l) {
        if v.iter().all(|&x| x == 0) {
            continue;
        }
        let mut combo = vec![0u8; 3];
        for (w, &vh) in us.iter().zip(&v) {
            for (c, &wx) in combo.iter_mut().zip(w) {
                *c ^= vh & wx;
            }
        }
        let proj = t.contract(0, &combo).unwrap();
        assert!(rrank_at_least(&proj, &pr2, l, &mut budget()).unwrap());
    }
    let pr3 = PartitionFamily::partition_rank(3);
    assert!(rrank_exact(&t, &pr3, &mut budget()).unwrap().value >= l);
}

#[test]
fn separated_family_rejects_bad_parameters() {
    let t = diagonal(f2(), 2, 3);
    assert!(matches!(
        separated_projections(&t, 0, 1, &mut budget()),
        Err(Error::ParameterOutOfRange(_))
    ));
    let m = diagonal(f2(), 2, 2);
    assert_eq!(separated_projections(&m, 1, 1, &mut budget()).err(), Some(Error::BadAxisSet));
}

fn pr_budget_bound(d: usize, l: usize, p: u64) -> u128 {
    if d == 2 {
        l as u128
    } else {
        let inner = (p as u128).pow(l as u32) * pr_budget_bound(d - 1, l, p);
        inner.pow(d as u32 - 1)
    }
}

#[test]
fn minor_find_on_matrices_is_an_exact_rank_minor() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..40 {
        let t = random_tensor(f2(), 4, 2, &mut rng);
        let rows: Vec<Vec<u8>> =
            (0..4).map(|i| (0..4).map(|j| t.get(&[i, j])).collect()).collect();
        let r = naive_rank(2, &rows);
        for l in 1..=4usize {
            match ff_pr_minor_find(&t, l, &mut budget()) {
                Ok(sel) => {
                    assert!(l <= r);
                    assert!(sel.subsets.iter().all(|s| s.len() == l));
                    let sub = t.restrict(&sel).unwrap();
                    assert_eq!(sub.as_matrix().rank(), l);
                }
                Err(Error::RankTooLow { requested, certified }) => {
                    assert_eq!((requested, certified), (l, r));
                    assert!(l > r);
                }
                Err(e) => panic!("unexpected error {e:?}"),
            }
        }
    }
}

#[test]
fn minor_find_on_the_diagonal_three_cube() {
    let t = diagonal(f2(), 3, 3);
    let l = 2;
    let sel = ff_pr_minor_find(&t, l, &mut budget()).unwrap();
    let sub = t.restrict(&sel).unwrap();
    let pr3 = PartitionFamily::partition_rank(3);
    assert!(rrank_exact(&sub, &pr3, &mut budget()).unwrap().value >= l);
    let bound = pr_budget_bound(3, l, 2);
    for s in &sel.subsets {
        assert!((s.len() as u128) <= bound);
    }
}

#[test]
fn minor_find_reports_insufficient_rank() {
    let t = diagonal(f2(), 2, 3);
    match ff_pr_minor_find(&t, 3, &mut budget()) {
        Err(Error::RankTooLow { requested: 3, certified: 2 }) => {}
        other => panic!("expected RankTooLow, got {other:?}"),
    }
}

#[test]
fn minor_find_survives_an_infeasible_greedy_start() {
    // pr = 2 but no separated pair exists over F_2^2, so the pipeline falls
    // back to greedy shrinking and must still certify the rank.
    let t = diagonal(f2(), 2, 3);
    let sel = ff_pr_minor_find(&t, 2, &mut budget()).unwrap();
    let sub = t.restrict(&sel).unwrap();
    let pr3 = PartitionFamily::partition_rank(3);
    assert_eq!(rrank_exact(&sub, &pr3, &mut budget()).unwrap().value, 2);
}

#[test]
fn minor_find_respects_the_node_budget() {
    let t = diagonal(f2(), 3, 3);
    let mut tiny = NodeBudget::new(3);
    match ff_pr_minor_find(&t, 2, &mut tiny) {
        Err(Error::ScaleExceeded { budget: 3 }) => {}
        other => panic!("expected ScaleExceeded, got {other:?}"),
    }
}

#[test]
fn exact_bias_refuses_oversized_enumerations() {
    let axes: Vec<Vec<u32>> = vec![(1..=13).collect(), (1..=13).collect(), vec![1, 2]];
    let t = Tensor::zeros(f2(), axes).unwrap();
    match bias_exact(&t, Parallelism::Sequential) {
        Err(Error::ScaleExceeded { .. }) => {}
        other => panic!("expected ScaleExceeded, got {other:?}"),
    }
}

#[test]
fn estimate_fractions_reduce() {
    let b = BiasValue::Estimate { hits: 25_000, samples: 100_000, seed: 1 };
    assert_eq!(b.fraction(), (1, 4));
    assert_eq!(b.rational_string(), "1/4");
    let z = BiasValue::Estimate { hits: 0, samples: 10, seed: 1 };
    assert_eq!(z.fraction(), (0, 1));
}

//! Tensor model: restriction, slicing, contraction, flattening, partition
//! families and their down-shadow, diagonal sets, and JSON round-trips.

use proptest::prelude::*;
use trank_core::algebra::{mat_rank, Field};
use trank_core::tensor::{points, MinorSelection, PartitionFamily, Tensor};
use trank_core::Error;

fn f2() -> Field {
    Field::new(2).unwrap()
}

fn identity_matrix_tensor(n: usize) -> Tensor {
    Tensor::from_fn(f2(), vec![(1..=n as u32).collect(), (1..=n as u32).collect()], |x| {
        u8::from(x[0] == x[1])
    })
    .unwrap()
}

#[test]
fn restrict_to_full_axes_is_identity() {
    let t = identity_matrix_tensor(3);
    let r = t.restrict(&MinorSelection::full(&t)).unwrap();
    assert_eq!(r, t);
}

#[test]
fn restrict_identity_to_off_diagonal_cell_is_zero() {
    let t = identity_matrix_tensor(2);
    let r = t.restrict(&MinorSelection::new(vec![vec![1], vec![2]])).unwrap();
    assert_eq!(r.shape(), &[1, 1]);
    assert!(r.is_zero());
}

#[test]
fn restrict_rejects_empty_and_foreign_subsets() {
    let t = identity_matrix_tensor(2);
    assert_eq!(
        t.restrict(&MinorSelection::new(vec![vec![], vec![1]])),
        Err(Error::EmptyAxis)
    );
    assert_eq!(
        t.restrict(&MinorSelection::new(vec![vec![3], vec![1]])),
        Err(Error::NotSubset)
    );
}

#[test]
fn restricting_twice_equals_restricting_by_the_smaller_selection() {
    let t = Tensor::from_fn(f2(), vec![vec![1, 2, 3], vec![1, 2, 3], vec![1, 2, 3]], |x| {
        u8::from((x[0] + x[1] * x[2]) % 2 == 0)
    })
    .unwrap();
    let s1 = MinorSelection::new(vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
    let s2 = MinorSelection::new(vec![vec![2], vec![1, 3], vec![3]]);
    let once = t.restrict(&s2).unwrap();
    let twice = t.restrict(&s1).unwrap().restrict(&s2).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn slice_of_order_three_tensor_is_the_expected_matrix() {
    let t = Tensor::from_fn(f2(), vec![vec![1, 2], vec![1, 2], vec![1, 2]], |x| {
        u8::from(x[0] == 1 && x[1] == x[2])
    })
    .unwrap();
    // Fix coordinate 1 to position 0 (label 1), keep coordinates 2 and 3.
    let s = t.slice(&[1, 2], &[0]).unwrap();
    assert_eq!(s.d(), 2);
    for idx in points(s.shape()) {
        assert_eq!(s.get(&idx), u8::from(idx[0] == idx[1]));
    }
    // Fixing label 2 instead kills everything.
    assert!(t.slice(&[1, 2], &[1]).unwrap().is_zero());
}

#[test]
fn slicing_and_restricting_commute() {
    let t = Tensor::from_fn(f2(), vec![vec![1, 2, 3], vec![4, 5], vec![6, 7]], |x| {
        u8::from((x[0] * x[1] + x[2]) % 2 == 0)
    })
    .unwrap();
    let sel = MinorSelection::new(vec![vec![1, 3], vec![4, 5], vec![7]]);
    // Slice at x1 = label 3 (position 2 originally, position 1 after restriction).
    let slice_then_restrict = t
        .slice(&[1, 2], &[2])
        .unwrap()
        .restrict(&MinorSelection::new(vec![vec![4, 5], vec![7]]))
        .unwrap();
    let restrict_then_slice = t.restrict(&sel).unwrap().slice(&[1, 2], &[1]).unwrap();
    assert_eq!(slice_then_restrict, restrict_then_slice);
}

#[test]
fn contract_by_indicator_recovers_slice() {
    let t = Tensor::from_fn(f2(), vec![vec![1, 2], vec![1, 2], vec![1, 2]], |x| {
        u8::from(x[0] * x[1] * x[2] % 2 == 0)
    })
    .unwrap();
    let slice = t.slice(&[1, 2], &[1]).unwrap();
    let contracted = t.contract(0, &[0, 1]).unwrap();
    assert_eq!(slice, contracted);
}

#[test]
fn contract_by_zero_vector_gives_zero() {
    let t = identity_matrix_tensor(2);
    assert!(t.contract(0, &[0, 0]).unwrap().is_zero());
}

#[test]
fn contract_rejects_wrong_length() {
    let t = identity_matrix_tensor(2);
    assert_eq!(t.contract(0, &[1, 0, 1]), Err(Error::AxisMismatch));
}

#[test]
fn contraction_is_linear_in_the_vector() {
    let f = Field::new(3).unwrap();
    let t = Tensor::from_fn(f, vec![vec![1, 2], vec![1, 2], vec![1, 2]], |x| {
        ((x[0] + 2 * x[1] + x[2]) % 3) as u8
    })
    .unwrap();
    let u = [1u8, 2];
    let v = [2u8, 2];
    let sum: Vec<u8> = u.iter().zip(&v).map(|(&a, &b)| f.add(a, b)).collect();
    let lhs = t.contract(0, &sum).unwrap();
    let rhs = t.contract(0, &u).unwrap().add(&t.contract(0, &v).unwrap());
    assert_eq!(lhs, rhs);
}

#[test]
fn flatten_of_matrix_is_the_matrix() {
    let t = identity_matrix_tensor(3);
    let m = t.flatten(&[0]).unwrap();
    assert_eq!(m, t.as_matrix());
}

#[test]
fn flatten_of_rank_one_tensor_has_rank_one() {
    let t = Tensor::from_fn(f2(), vec![vec![1, 2], vec![1, 2], vec![1, 2]], |x| {
        u8::from(x[0] == 1) * u8::from(x[1] == 2)
    })
    .unwrap();
    for i_set in [[0].as_slice(), &[1], &[2], &[0, 1], &[0, 2], &[1, 2]] {
        assert!(mat_rank(&t.flatten(i_set).unwrap()) <= 1);
    }
}

#[test]
fn flatten_rejects_improper_axis_sets() {
    let t = identity_matrix_tensor(2);
    assert!(t.flatten(&[]).is_err());
    assert!(t.flatten(&[0, 1]).is_err());
}

#[test]
fn down_shadow_of_order_three_slice_rank_family() {
    let r = PartitionFamily::slice_rank(3);
    let ds = r.down_shadow().unwrap();
    assert_eq!(ds.c, vec![2, 3]);
    let expected = PartitionFamily::new(
        3,
        vec![
            vec![vec![2], vec![1, 3]],
            vec![vec![3], vec![1, 2]],
            vec![vec![1], vec![2], vec![3]],
        ],
    )
    .unwrap();
    assert_eq!(ds.r_prime, expected);
    // For slice rank, the complement side of C is a single coordinate.
    assert_eq!(ds.complement, vec![1]);
    assert!(ds.r_comp.is_none());
}

#[test]
fn partition_rank_equals_slice_rank_for_order_three() {
    assert_eq!(PartitionFamily::partition_rank(3), PartitionFamily::slice_rank(3));
}

#[test]
fn down_shadow_chain_terminates_quickly() {
    for r in [
        PartitionFamily::slice_rank(3),
        PartitionFamily::slice_rank(4),
        PartitionFamily::partition_rank(4),
        PartitionFamily::pair_pair_rank(),
        PartitionFamily::one_times_slice_rank(),
        PartitionFamily::tripartition_rank(),
    ] {
        let d = r.d();
        let mut current = r;
        let mut steps = 0;
        while !current.is_tensor_rank() {
            current = current.down_shadow().unwrap().r_prime;
            steps += 1;
            assert!(steps <= 1 << d, "down-shadow chain too long");
        }
    }
}

#[test]
fn down_shadow_rejects_tensor_rank_family() {
    assert_eq!(
        PartitionFamily::tensor_rank(3).down_shadow().err(),
        Some(Error::AlreadyTensorRank)
    );
}

#[test]
fn down_shadow_keeps_r_minus_unchanged() {
    let r = PartitionFamily::partition_rank(4);
    let ds = r.down_shadow().unwrap();
    if let Some(r_minus) = &ds.r_minus {
        for p in r_minus.partitions() {
            assert!(ds.r_prime.partitions().contains(p));
        }
    }
}

#[test]
fn product_of_tensor_rank_families_is_tensor_rank() {
    let r2 = PartitionFamily::tensor_rank(2);
    let prod = PartitionFamily::product(&r2, &r2);
    assert_eq!(prod, PartitionFamily::tensor_rank(4));
}

#[test]
fn product_family_size_multiplies() {
    let a = PartitionFamily::slice_rank(3);
    let b = PartitionFamily::partition_rank(4);
    let prod = PartitionFamily::product(&a, &b);
    assert_eq!(prod.partitions().len(), a.partitions().len() * b.partitions().len());
}

#[test]
fn product_with_tensor_rank_adds_singleton_parts() {
    let a = PartitionFamily::slice_rank(3);
    let b = PartitionFamily::tensor_rank(2);
    let prod = PartitionFamily::product(&a, &b);
    for p in prod.partitions() {
        assert_eq!(p.len(), 4);
    }
}

#[test]
fn tripartition_family_has_six_members() {
    assert_eq!(PartitionFamily::tripartition_rank().partitions().len(), 6);
}

#[test]
fn tensor_json_round_trip_is_canonical() {
    let t = Tensor::from_fn(f2(), vec![vec![1, 2], vec![3, 5], vec![1, 4]], |x| {
        u8::from(x[0] + x[1] == x[2] + 4)
    })
    .unwrap();
    let json = t.to_json();
    let back = Tensor::from_json(&json).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.to_json(), json);
}

#[test]
fn tensor_json_rejects_bad_documents() {
    // Zero entry values are not canonical.
    let bad = r#"{"field_order":2,"axes":[[1,2],[1,2]],"entries":[[[1,1],0]]}"#;
    assert!(Tensor::from_json(bad).is_err());
    // Unsupported field order.
    let bad = r#"{"field_order":4,"axes":[[1,2],[1,2]],"entries":[]}"#;
    assert!(Tensor::from_json(bad).is_err());
    // Axis labels out of order.
    let bad = r#"{"field_order":2,"axes":[[2,1],[1,2]],"entries":[]}"#;
    assert!(Tensor::from_json(bad).is_err());
    // Order-1 tensors are not accepted at the interchange layer.
    let bad = r#"{"field_order":2,"axes":[[1,2]],"entries":[]}"#;
    assert!(Tensor::from_json(bad).is_err());
    // Entry out of the declared axes.
    let bad = r#"{"field_order":2,"axes":[[1,2],[1,2]],"entries":[[[1,3],1]]}"#;
    assert!(Tensor::from_json(bad).is_err());
}

#[test]
fn family_json_round_trip() {
    let r = PartitionFamily::one_times_slice_rank();
    let back = PartitionFamily::from_json(&r.to_json()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn diagonal_membership_uses_labels_not_positions() {
    // Axes share labels {1,2} but in different positions.
    let t = Tensor::from_fn(f2(), vec![vec![1, 2], vec![2, 3]], |_| 1).unwrap();
    // Point (label 2, label 2) lies on the diagonal.
    assert!(t.in_diagonal(&[1, 0], &[0, 1]));
    assert!(!t.in_diagonal(&[0, 0], &[0, 1]));
    // eZ counts off-diagonal support only.
    assert_eq!(t.support_size(), 4);
    assert_eq!(t.essential_support().len(), 3);
}

proptest! {
    #[test]
    fn restriction_never_grows_support(seed in any::<u64>()) {
        let t = Tensor::from_fn(f2(), vec![vec![1,2,3], vec![1,2,3]], |x| {
            ((seed >> ((x[0] * 3 + x[1]) % 61)) & 1) as u8
        }).unwrap();
        let sel = MinorSelection::new(vec![vec![1,3], vec![2,3]]);
        let r = t.restrict(&sel).unwrap();
        prop_assert!(r.support_size() <= t.support_size());
    }

    #[test]
    fn diagonal_membership_is_symmetric_in_the_pair(x in 0usize..3, y in 0usize..3) {
        let t = Tensor::zeros(f2(), vec![vec![1,2,3], vec![1,2,3]]).unwrap();
        prop_assert_eq!(t.in_diagonal(&[x, y], &[0, 1]), t.in_diagonal(&[y, x], &[0, 1]));
    }
}

//! Generator tests: every kind reproduces byte-identical JSON under a fixed
//! seed, and each planted kind delivers its construction guarantee.

use trank_core::cover::{counterexample_tensor, SupportSet};
use trank_core::error::Error;
use trank_core::gen::{generate, GenParams, KINDS};
use trank_core::oracle::{rrank_exact, NodeBudget, DEFAULT_NODE_BUDGET};
use trank_core::tensor::PartitionFamily;

fn params(n: u32, d: usize, k: usize) -> GenParams {
    GenParams { field_order: 2, n, d, k }
}

#[test]
fn every_kind_is_reproducible_under_a_fixed_seed() {
    let p = params(3, 3, 2);
    for kind in KINDS {
        let a = generate(kind, &p, 19).unwrap();
        let b = generate(kind, &p, 19).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "kind {kind} drifted");
    }
}

#[test]
fn random_output_depends_on_the_seed() {
    let p = params(3, 3, 2);
    let a = generate("random", &p, 11).unwrap();
    let b = generate("random", &p, 12).unwrap();
    assert_ne!(a.to_json(), b.to_json());
}

#[test]
fn rank1sum_respects_the_planted_term_count() {
    let p = params(2, 3, 2);
    let tr = PartitionFamily::tensor_rank(3);
    for seed in 0..5 {
        let t = generate("rank1sum", &p, seed).unwrap();
        let mut b = NodeBudget::new(DEFAULT_NODE_BUDGET);
        assert!(rrank_exact(&t, &tr, &mut b).unwrap().value <= 2);
    }
}

#[test]
fn diagonal_support_is_the_equal_label_line() {
    let t = generate("diagonal", &params(4, 3, 0), 0).unwrap();
    assert_eq!(t.support_size(), 4);
    for p in t.support() {
        let labels = t.labels_of(&p);
        assert!(labels.iter().all(|&x| x == labels[0]));
    }
}

#[test]
fn antichain_support_has_no_comparable_points() {
    for seed in 0..5 {
        let t = generate("antichain", &params(4, 3, 0), seed).unwrap();
        assert!(SupportSet::from_tensor(&t).is_antichain());
    }
}

#[test]
fn esupported_tensors_have_no_essential_support() {
    for seed in 0..5 {
        let t = generate("esupported", &params(3, 3, 0), seed).unwrap();
        assert!(!t.is_zero() || seed > 0);
        assert!(t.essential_support().is_empty());
    }
}

#[test]
fn the_example_pair_holds_crossed_single_points() {
    let a = generate("example-pair-a", &params(2, 2, 0), 0).unwrap();
    let b = generate("example-pair-b", &params(2, 2, 0), 0).unwrap();
    assert_eq!(a.support().len(), 1);
    assert_eq!(a.labels_of(&a.support()[0]), vec![1, 2]);
    assert_eq!(b.labels_of(&b.support()[0]), vec![2, 1]);
}

#[test]
fn gowers_matches_the_fixed_counterexample() {
    let t = generate("gowers", &GenParams::default(), 7).unwrap();
    assert_eq!(t.shape(), &[11, 4, 15]);
    assert_eq!(t, counterexample_tensor());
}

#[test]
fn bad_kinds_and_parameters_are_rejected() {
    assert!(matches!(
        generate("mystery", &GenParams::default(), 0),
        Err(Error::UnknownKind(_))
    ));
    assert!(matches!(
        generate("random", &params(3, 1, 0), 0),
        Err(Error::ParameterOutOfRange(_))
    ));
    assert!(matches!(generate("random", &params(0, 3, 0), 0), Err(Error::ParameterOutOfRange(_))));
    assert!(matches!(
        generate("example-pair-a", &params(1, 2, 0), 0),
        Err(Error::ParameterOutOfRange(_))
    ));
}

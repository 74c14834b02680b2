//! Covering-number tests: hand-checked small instances, the mu
//! correspondence, and the full counterexample verification.

use std::collections::BTreeSet;

use proptest::prelude::*;

use trank_core::cover::{
    counterexample_tensor, counterexample_v, lc3_exact, mu_map, scc_exact, verify_counterexample,
    Constraint, SupportSet,
};
use trank_core::Parallelism;

/// Independent minimum-cover oracle: try every subset of the candidate
/// constraints in increasing size. Exponential, for tiny instances only.
fn brute_min_cover(points: &[Vec<u32>], candidates: &[Constraint]) -> usize {
    let covers = |c: &Constraint, p: &[u32]| match *c {
        Constraint::AxisEq { axis, value } => p[axis] == value,
        Constraint::SumEq { value } => p[0] + p[1] == value,
    };
    if points.is_empty() {
        return 0;
    }
    for size in 1..=candidates.len() {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if points.iter().all(|p| idx.iter().any(|&i| covers(&candidates[i], p))) {
                return size;
            }
            let mut i = size;
            let mut advanced = false;
            while i > 0 {
                i -= 1;
                if idx[i] < candidates.len() - (size - i) {
                    idx[i] += 1;
                    for j in i + 1..size {
                        idx[j] = idx[j - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    usize::MAX
}

fn all_slice_candidates(points: &[Vec<u32>]) -> Vec<Constraint> {
    let mut set = BTreeSet::new();
    for p in points {
        for (axis, &value) in p.iter().enumerate() {
            set.insert(Constraint::AxisEq { axis, value });
        }
    }
    set.into_iter().collect()
}

fn all_line_candidates(points: &[Vec<u32>]) -> Vec<Constraint> {
    let mut set = BTreeSet::new();
    for p in points {
        set.insert(Constraint::AxisEq { axis: 0, value: p[0] });
        set.insert(Constraint::AxisEq { axis: 1, value: p[1] });
        set.insert(Constraint::SumEq { value: p[0] + p[1] });
    }
    set.into_iter().collect()
}

#[test]
fn empty_set_has_cover_zero() {
    let u = SupportSet::new(vec![3, 3, 3], Vec::<Vec<u32>>::new()).unwrap();
    let sol = scc_exact(&u).unwrap();
    assert_eq!(sol.size, 0);
    assert!(sol.covers.is_empty());
}

#[test]
fn single_point_has_cover_one() {
    let u = SupportSet::new(vec![3, 3, 3], vec![vec![2, 1, 3]]).unwrap();
    let sol = scc_exact(&u).unwrap();
    assert_eq!(sol.size, 1);
    assert!(sol.covers_all(&u));
}

#[test]
fn diagonal_needs_one_slice_per_point() {
    // The diagonal of a cube is a chain, but no slice covers two of its
    // points, so the covering number still equals the number of points.
    for n in 1..=4u32 {
        let pts: Vec<Vec<u32>> = (1..=n).map(|i| vec![i, i, i]).collect();
        let u = SupportSet::new(vec![n, n, n], pts).unwrap();
        assert_eq!(u.is_antichain(), n == 1);
        let sol = scc_exact(&u).unwrap();
        assert_eq!(sol.size, n as usize);
    }
}

#[test]
fn full_box_is_covered_by_smallest_axis() {
    let mut pts = Vec::new();
    for x in 1..=3u32 {
        for y in 1..=2u32 {
            for z in 1..=4u32 {
                pts.push(vec![x, y, z]);
            }
        }
    }
    let u = SupportSet::new(vec![3, 2, 4], pts).unwrap();
    assert!(!u.is_antichain());
    let sol = scc_exact(&u).unwrap();
    assert_eq!(sol.size, 2);
}

#[test]
fn antichain_detection() {
    let chain = SupportSet::new(vec![3, 3], vec![vec![1, 1], vec![2, 2]]).unwrap();
    assert!(!chain.is_antichain());
    let anti = SupportSet::new(vec![3, 3], vec![vec![1, 2], vec![2, 1]]).unwrap();
    assert!(anti.is_antichain());
    let equal_coord = SupportSet::new(vec![3, 3], vec![vec![1, 2], vec![1, 3]]).unwrap();
    assert!(!equal_coord.is_antichain());
}

#[test]
fn counterexample_v_has_lc3_four() {
    let v = counterexample_v();
    assert_eq!(v.len(), 8);
    let sol = lc3_exact(&v).unwrap();
    assert_eq!(sol.size, 4);
    assert!(sol.covers_all(&v));
}

#[test]
fn counterexample_tensor_support_matches_v() {
    let t = counterexample_tensor();
    let u = SupportSet::from_tensor(&t);
    assert_eq!(u.len(), 8);
    let v = counterexample_v();
    for p in u.points() {
        assert!(v.contains(&[p[0], p[1]]));
        assert_eq!(p[2], p[0] + p[1]);
    }
    // Reversing the third axis lands the support in {x+y+z=16}.
    let reversed =
        SupportSet::new(vec![11, 4, 15], u.points().map(|p| vec![p[0], p[1], 16 - p[2]]))
            .unwrap();
    assert!(reversed.is_antichain());
    let scc = scc_exact(&u).unwrap();
    assert_eq!(scc.size, 4);
    assert_eq!(scc_exact(&reversed).unwrap().size, 4);
}

#[test]
fn mu_map_matches_direct_enumeration() {
    let x: BTreeSet<u32> = [1, 2, 6].into_iter().collect();
    let y: BTreeSet<u32> = [1, 4].into_iter().collect();
    let z: BTreeSet<u32> = [3, 5, 7, 10].into_iter().collect();
    let m = mu_map(&x, &y, &z, (11, 4));
    for a in &x {
        for b in &y {
            assert_eq!(m.contains(&[*a, *b]), z.contains(&(a + b)));
        }
    }
}

#[test]
fn full_counterexample_verification() {
    let report = verify_counterexample(Parallelism::default()).unwrap();
    assert!(report.antichain_after_reversal);
    assert_eq!(report.sr_value, 4);
    assert_eq!(report.lc3_value, 4);
    assert_eq!(report.sum_values, vec![3, 5, 7, 10, 12, 14]);
    assert_eq!(report.minors_checked, 450_450);
    assert!(report.max_minor_value <= 3);
    assert!(report.removal_exemplar_holds);
    assert!(report.identity_spot_checks > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The solver's minimum matches a brute-force subset search on small sets.
    #[test]
    fn scc_matches_brute_force(point_bits in proptest::collection::vec(any::<bool>(), 27)) {
        let mut pts = Vec::new();
        for (i, &b) in point_bits.iter().enumerate() {
            if b {
                let (x, y, z) = (i / 9, (i / 3) % 3, i % 3);
                pts.push(vec![x as u32 + 1, y as u32 + 1, z as u32 + 1]);
            }
        }
        if pts.len() > 7 {
            pts.truncate(7);
        }
        let candidates = all_slice_candidates(&pts);
        let brute = brute_min_cover(&pts, &candidates);
        let u = SupportSet::new(vec![3, 3, 3], pts.clone()).unwrap();
        let sol = scc_exact(&u).unwrap();
        if pts.is_empty() {
            prop_assert_eq!(sol.size, 0);
        } else {
            prop_assert_eq!(sol.size, brute);
            prop_assert!(sol.covers_all(&u));
        }
    }

    /// Same for the three-line cover on planar sets.
    #[test]
    fn lc3_matches_brute_force(point_bits in proptest::collection::vec(any::<bool>(), 20)) {
        let mut pts = Vec::new();
        for (i, &b) in point_bits.iter().enumerate() {
            if b {
                let (x, y) = (i / 4, i % 4);
                pts.push(vec![x as u32 + 1, y as u32 + 1]);
            }
        }
        if pts.len() > 7 {
            pts.truncate(7);
        }
        let candidates = all_line_candidates(&pts);
        let brute = brute_min_cover(&pts, &candidates);
        let v = SupportSet::new(vec![5, 4], pts.clone()).unwrap();
        let sol = lc3_exact(&v).unwrap();
        if pts.is_empty() {
            prop_assert_eq!(sol.size, 0);
        } else {
            prop_assert_eq!(sol.size, brute);
            prop_assert!(sol.covers_all(&v));
        }
    }

    /// The mu correspondence: scc of the restricted 3-D support equals lc3 of
    /// the restricted planar set, for random boxes around the counterexample.
    #[test]
    fn scc_equals_lc3_on_counterexample_boxes(
        x_bits in proptest::collection::vec(any::<bool>(), 11),
        z_bits in proptest::collection::vec(any::<bool>(), 15),
    ) {
        let x: BTreeSet<u32> = x_bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u32 + 1).collect();
        let y: BTreeSet<u32> = (1..=4).collect();
        let z: BTreeSet<u32> = z_bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i as u32 + 1).collect();
        let t = counterexample_tensor();
        let u = SupportSet::from_tensor(&t);
        let restricted_u = u.intersect_box(&[x.clone(), y.clone(), z.clone()]);
        let v = counterexample_v();
        let mu = mu_map(&x, &y, &z, (11, 4));
        let restricted_v_pts: Vec<Vec<u32>> = v.points().filter(|p| mu.contains(p)).cloned().collect();
        let restricted_v = SupportSet::new(vec![11, 4], restricted_v_pts).unwrap();
        let scc = scc_exact(&restricted_u).unwrap();
        let lc3 = lc3_exact(&restricted_v).unwrap();
        prop_assert_eq!(scc.size, lc3.size);
    }
}

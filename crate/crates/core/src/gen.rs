//! Structured tensor generators for tests and the command line. Every kind
//! is a pure function of (kind, params, seed): the stream of random draws is
//! fixed by a seeded ChaCha generator, so the canonical JSON encoding of the
//! result is byte-identical across runs. Planted kinds carry a construction
//! guarantee noted on each arm, with the construction parameter bounding the
//! relevant rank from above.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::Field;
use crate::cover::counterexample_tensor;
use crate::error::{Error, Result};
use crate::tensor::{has_equal_pair, points, Tensor};

/// Shape and size knobs shared by all generator kinds. Kinds that do not use
/// a knob ignore it.
#[derive(Debug, Clone)]
pub struct GenParams {
    pub field_order: u64,
    /// Labels per axis; axes are [n] = {1..n}.
    pub n: u32,
    /// Tensor order.
    pub d: usize,
    /// Planted count, e.g. the number of rank-one terms.
    pub k: usize,
}

impl Default for GenParams {
    fn default() -> GenParams {
        GenParams { field_order: 2, n: 3, d: 3, k: 2 }
    }
}

/// Recognized generator kinds, in the order the command line lists them.
pub const KINDS: &[&str] = &[
    "zero",
    "diagonal",
    "rank1sum",
    "random",
    "antichain",
    "esupported",
    "example-pair-a",
    "example-pair-b",
    "gowers",
];

/// Builds the tensor for a recognized kind.
///
/// Guarantees by construction: `rank1sum` has tensor rank at most k;
/// `diagonal` is supported on the all-equal diagonal; `antichain` has an
/// antichain support (a constant label-sum layer); `esupported` has support
/// inside the equal-pair locus, hence essential rank zero; the two
/// `example-pair-*` matrices each hold a single off-diagonal point, and the
/// pair places those points on crossed sides so no shared label split serves
/// both at once; `gowers` is the fixed order-3 counterexample tensor and
/// ignores params and seed.
pub fn generate(kind: &str, params: &GenParams, seed: u64) -> Result<Tensor> {
    if !KINDS.contains(&kind) {
        return Err(Error::UnknownKind(kind.into()));
    }
    if kind == "gowers" {
        return Ok(counterexample_tensor());
    }
    let field = Field::new(params.field_order)?;
    let order = field.order();
    if params.d < 2 {
        return Err(Error::ParameterOutOfRange("tensor order must be at least 2".into()));
    }
    if params.n == 0 {
        return Err(Error::ParameterOutOfRange("axes must be nonempty".into()));
    }
    let axes: Vec<Vec<u32>> = vec![(1..=params.n).collect(); params.d];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        "zero" => Tensor::zeros(field, axes),
        "diagonal" => Tensor::from_fn(field, axes, |l| u8::from(l.iter().all(|&x| x == l[0]))),
        "rank1sum" => {
            let mut t = Tensor::zeros(field, axes)?;
            for _ in 0..params.k {
                let vecs: Vec<Vec<u8>> =
                    (0..params.d).map(|_| nonzero_draw(&mut rng, order, params.n)).collect();
                let shape = t.shape().to_vec();
                for idx in points(&shape) {
                    let term = idx
                        .iter()
                        .enumerate()
                        .fold(1, |acc, (a, &i)| field.mul(acc, vecs[a][i]));
                    t.set(&idx, field.add(t.get(&idx), term));
                }
            }
            Ok(t)
        }
        "random" => {
            let mut t = Tensor::zeros(field, axes)?;
            let shape = t.shape().to_vec();
            for idx in points(&shape) {
                t.set(&idx, rng.gen_range(0..order));
            }
            Ok(t)
        }
        "antichain" => {
            // Points of a fixed coordinate sum are pairwise incomparable, so
            // any support inside one layer is an antichain.
            let layer = (params.d as u32 * (params.n + 1)) / 2;
            let mut t = Tensor::zeros(field, axes)?;
            let shape = t.shape().to_vec();
            for idx in points(&shape) {
                if t.labels_of(&idx).iter().sum::<u32>() == layer {
                    t.set(&idx, rng.gen_range(0..order));
                }
            }
            Ok(t)
        }
        "esupported" => {
            let mut t = Tensor::zeros(field, axes)?;
            let shape = t.shape().to_vec();
            for idx in points(&shape) {
                if has_equal_pair(&t.labels_of(&idx)) {
                    t.set(&idx, rng.gen_range(0..order));
                }
            }
            Ok(t)
        }
        "example-pair-a" | "example-pair-b" => {
            if params.n < 2 {
                return Err(Error::ParameterOutOfRange(
                    "the example pair needs at least two labels".into(),
                ));
            }
            let point: &[u32] = if kind == "example-pair-a" { &[1, 2] } else { &[2, 1] };
            let square: Vec<Vec<u32>> = vec![(1..=params.n).collect(); 2];
            Tensor::from_fn(field, square, |l| u8::from(l == point))
        }
        _ => unreachable!("kind was checked against the list"),
    }
}

/// Uniform vector redrawn until nonzero, so no rank-one term degenerates.
fn nonzero_draw(rng: &mut ChaCha8Rng, order: u8, n: u32) -> Vec<u8> {
    loop {
        let v: Vec<u8> = (0..n).map(|_| rng.gen_range(0..order)).collect();
        if v.iter().any(|&x| x != 0) {
            return v;
        }
    }
}

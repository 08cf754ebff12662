//! Checkpoint merging by linear weight averaging.
//!
//! Bundles are ordered maps of named f32 tensors. Merging accumulates in f64
//! with the inputs ordered by their source label, so `merge(A, B)` and
//! `merge(B, A)` are bit-identical, and casts to f32 once at the end.

mod ntb;

pub use ntb::{load_bundle, save_bundle};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("need at least 2 bundles, got {0}")]
    TooFewBundles(usize),
    #[error("structure mismatch at tensor {name:?}: {detail}")]
    StructureMismatch { name: String, detail: String },
    #[error("bad weights: {0}")]
    BadWeights(String),
    #[error("tensor {name:?}: shape {shape:?} needs {expected} elements, data has {got}")]
    ShapeDataMismatch { name: String, shape: Vec<usize>, expected: usize, got: usize },
    #[error("duplicate tensor name {0:?}")]
    DuplicateTensor(String),
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One named tensor: row-major f32 data with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, MergeError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(MergeError::ShapeDataMismatch {
                name: String::new(),
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }
}

/// A model checkpoint as named tensors, the unit of linear merging.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBundle {
    tensors: IndexMap<String, Tensor>,
    /// Source label, used to order accumulation during merging.
    pub label: String,
}

impl TensorBundle {
    pub fn new(label: impl Into<String>) -> Self {
        TensorBundle { tensors: IndexMap::new(), label: label.into() }
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<(), MergeError> {
        let name = name.into();
        let tensor = Tensor::new(shape, data).map_err(|e| match e {
            MergeError::ShapeDataMismatch { shape, expected, got, .. } => {
                MergeError::ShapeDataMismatch { name: name.clone(), shape, expected, got }
            }
            other => other,
        })?;
        if self.tensors.insert(name.clone(), tensor).is_some() {
            return Err(MergeError::DuplicateTensor(name));
        }
        Ok(())
    }

    pub fn tensors(&self) -> &IndexMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub(crate) fn from_parts(
        label: String,
        parts: Vec<(String, Tensor)>,
    ) -> Result<Self, MergeError> {
        let mut bundle = TensorBundle::new(label);
        for (name, tensor) in parts {
            if bundle.tensors.insert(name.clone(), tensor).is_some() {
                return Err(MergeError::DuplicateTensor(name));
            }
        }
        Ok(bundle)
    }
}

/// All bundles must share the same tensor names and per-name shapes. Reports
/// the first differing name in sorted order.
pub fn validate_compatible(bundles: &[TensorBundle]) -> Result<(), MergeError> {
    if bundles.len() < 2 {
        return Err(MergeError::TooFewBundles(bundles.len()));
    }
    let first = &bundles[0];
    let mut names: Vec<&String> = first.tensors.keys().collect();
    names.sort();
    for other in &bundles[1..] {
        let mut other_names: Vec<&String> = other.tensors.keys().collect();
        other_names.sort();
        for name in &names {
            match other.tensors.get(*name) {
                None => {
                    return Err(MergeError::StructureMismatch {
                        name: (*name).clone(),
                        detail: format!("missing from bundle {:?}", other.label),
                    })
                }
                Some(tensor) => {
                    let expect = &first.tensors[*name].shape;
                    if &tensor.shape != expect {
                        return Err(MergeError::StructureMismatch {
                            name: (*name).clone(),
                            detail: format!(
                                "shape {:?} in {:?} vs {:?} in {:?}",
                                tensor.shape, other.label, expect, first.label
                            ),
                        });
                    }
                }
            }
        }
        if let Some(extra) = other_names.iter().find(|n| !first.tensors.contains_key(**n)) {
            return Err(MergeError::StructureMismatch {
                name: (**extra).clone(),
                detail: format!("missing from bundle {:?}", first.label),
            });
        }
    }
    Ok(())
}

fn normalized_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>, MergeError> {
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(MergeError::BadWeights(format!(
                    "{} weights for {n} bundles",
                    w.len()
                )));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(MergeError::BadWeights("weights must be finite and >= 0".into()));
            }
            let sum: f64 = w.iter().sum();
            if sum <= 0.0 {
                return Err(MergeError::BadWeights("weights must sum to > 0".into()));
            }
            Ok(w.iter().map(|x| x / sum).collect())
        }
    }
}

/// Merge structurally identical bundles elementwise: `out = sum_i w_i * x_i`
/// with uniform weights when none are given. Accumulation runs in f64 over
/// the inputs sorted by label; output tensors are in sorted name order.
pub fn merge_linear(
    bundles: &[TensorBundle],
    weights: Option<&[f64]>,
) -> Result<TensorBundle, MergeError> {
    validate_compatible(bundles)?;
    let weights = normalized_weights(bundles.len(), weights)?;

    let mut ordered: Vec<(&TensorBundle, f64)> = bundles.iter().zip(weights).collect();
    ordered.sort_by(|a, b| a.0.label.cmp(&b.0.label).then(a.1.total_cmp(&b.1)));

    let mut names: Vec<&String> = bundles[0].tensors.keys().collect();
    names.sort();

    let label = {
        let labels: Vec<&str> = ordered.iter().map(|(b, _)| b.label.as_str()).collect();
        format!("merged:{}", labels.join("+"))
    };

    let mut parts = Vec::with_capacity(names.len());
    for name in names {
        let shape = bundles[0].tensors[name].shape.clone();
        let len = bundles[0].tensors[name].data.len();
        let mut acc = vec![0.0f64; len];
        for (bundle, weight) in &ordered {
            for (slot, &x) in acc.iter_mut().zip(&bundle.tensors[name].data) {
                *slot += weight * f64::from(x);
            }
        }
        let data: Vec<f32> = acc.into_iter().map(|x| x as f32).collect();
        parts.push((name.clone(), Tensor { shape, data }));
    }
    TensorBundle::from_parts(label, parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bundle(label: &str, tensors: &[(&str, &[usize], &[f32])]) -> TensorBundle {
        let mut b = TensorBundle::new(label);
        for (name, shape, data) in tensors {
            b.insert(*name, shape.to_vec(), data.to_vec()).unwrap();
        }
        b
    }

    pub(crate) fn random_bundle(label: &str, rng: &mut ChaCha8Rng, max_tensors: usize) -> TensorBundle {
        let mut b = TensorBundle::new(label);
        let n = rng.gen_range(1..=max_tensors);
        for t in 0..n {
            let dims = rng.gen_range(1..=3);
            let shape: Vec<usize> = (0..dims).map(|_| rng.gen_range(1..=10)).collect();
            let len: usize = shape.iter().product();
            let data: Vec<f32> = (0..len).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
            b.insert(format!("layer.{t}"), shape, data).unwrap();
        }
        b
    }

    fn ulp_distance(a: f32, b: f32) -> u64 {
        fn order(x: f32) -> i64 {
            let bits = x.to_bits() as i32;
            i64::from(if bits < 0 { i32::MIN.wrapping_sub(bits).wrapping_neg() } else { bits })
        }
        (order(a) - order(b)).unsigned_abs()
    }

    #[test]
    fn compatible_bundles_validate() {
        let a = bundle("a", &[("w", &[2, 2], &[1.0, 2.0, 3.0, 4.0]), ("b", &[2], &[0.1, 0.2])]);
        let b = bundle("b", &[("w", &[2, 2], &[4.0, 3.0, 2.0, 1.0]), ("b", &[2], &[0.3, 0.4])]);
        validate_compatible(&[a, b]).unwrap();
    }

    #[test]
    fn shape_mismatch_names_offender() {
        let a = bundle("a", &[("w", &[2, 2], &[0.0; 4])]);
        let b = bundle("b", &[("w", &[2, 3], &[0.0; 6])]);
        match validate_compatible(&[a, b]) {
            Err(MergeError::StructureMismatch { name, .. }) => assert_eq!(name, "w"),
            other => panic!("expected mismatch on w, got {other:?}"),
        }
    }

    #[test]
    fn name_set_mismatch_names_offender() {
        let a = bundle("a", &[("w", &[2], &[0.0; 2]), ("b", &[1], &[0.0])]);
        let b = bundle("b", &[("w", &[2], &[0.0; 2])]);
        match validate_compatible(&[a, b]) {
            Err(MergeError::StructureMismatch { name, .. }) => assert_eq!(name, "b"),
            other => panic!("expected mismatch on b, got {other:?}"),
        }
    }

    #[test]
    fn uniform_merge_is_elementwise_mean() {
        let a = bundle("a", &[("w", &[2], &[1.0, 2.0]), ("b", &[1], &[3.0])]);
        let b = bundle("b", &[("w", &[2], &[3.0, 4.0]), ("b", &[1], &[5.0])]);
        let merged = merge_linear(&[a, b], None).unwrap();
        assert_eq!(merged.get("w").unwrap().data, [2.0, 3.0]);
        assert_eq!(merged.get("b").unwrap().data, [4.0]);
    }

    #[test]
    fn weighted_merge_normalizes() {
        let a = bundle("a", &[("w", &[2], &[1.0, 2.0]), ("b", &[1], &[3.0])]);
        let b = bundle("b", &[("w", &[2], &[3.0, 4.0]), ("b", &[1], &[5.0])]);
        let merged = merge_linear(&[a, b], Some(&[3.0, 1.0])).unwrap();
        assert_eq!(merged.get("w").unwrap().data, [1.5, 2.5]);
        assert_eq!(merged.get("b").unwrap().data, [3.5]);
    }

    #[test]
    fn merging_identical_bundles_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_bundle("a", &mut rng, 5);
        let copies: Vec<TensorBundle> = (0..4)
            .map(|i| {
                let mut c = a.clone();
                c.label = format!("copy{i}");
                c
            })
            .collect();
        let merged = merge_linear(&copies, None).unwrap();
        for (name, tensor) in a.tensors() {
            for (x, y) in tensor.data.iter().zip(&merged.get(name).unwrap().data) {
                assert!(ulp_distance(*x, *y) <= 1, "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn weight_one_zero_returns_first_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_bundle("a", &mut rng, 5);
        let mut b = a.clone();
        b.label = "b".into();
        for tensor in b.tensors.values_mut() {
            for x in &mut tensor.data {
                *x += 1.0;
            }
        }
        let merged = merge_linear(&[a.clone(), b], Some(&[1.0, 0.0])).unwrap();
        for (name, tensor) in a.tensors() {
            for (x, y) in tensor.data.iter().zip(&merged.get(name).unwrap().data) {
                assert!(ulp_distance(*x, *y) <= 1, "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn merge_commutes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_bundle("alpha", &mut rng, 4);
            let mut b = a.clone();
            b.label = "beta".into();
            for tensor in b.tensors.values_mut() {
                for x in &mut tensor.data {
                    *x = rng.gen_range(-2.0..2.0);
                }
            }
            let ab = merge_linear(&[a.clone(), b.clone()], Some(&[0.7, 0.3])).unwrap();
            let ba = merge_linear(&[b, a], Some(&[0.3, 0.7])).unwrap();
            assert_eq!(ab.label, ba.label);
            for (name, tensor) in ab.tensors() {
                let other = &ba.get(name).unwrap().data;
                let same_bits = tensor
                    .data
                    .iter()
                    .zip(other)
                    .all(|(x, y)| x.to_bits() == y.to_bits());
                assert!(same_bits, "tensor {name} differs between AB and BA");
            }
        }
    }

    #[test]
    fn uniform_merge_matches_mean_oracle_on_random_bundles() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for case in 0..100 {
            let n = rng.gen_range(2..=5);
            let proto = random_bundle("proto", &mut rng, 3);
            let bundles: Vec<TensorBundle> = (0..n)
                .map(|i| {
                    let mut b = proto.clone();
                    b.label = format!("m{i}");
                    for tensor in b.tensors.values_mut() {
                        for x in &mut tensor.data {
                            *x = rng.gen_range(-2.0..2.0);
                        }
                    }
                    b
                })
                .collect();
            let merged = merge_linear(&bundles, None).unwrap();
            for (name, tensor) in merged.tensors() {
                for (i, value) in tensor.data.iter().enumerate() {
                    let mean = bundles
                        .iter()
                        .map(|b| f64::from(b.get(name).unwrap().data[i]))
                        .sum::<f64>()
                        / n as f64;
                    let rel = (f64::from(*value) - mean).abs() / mean.abs().max(1e-12);
                    assert!(rel < 1e-6, "case {case} tensor {name}[{i}]: {value} vs {mean}");
                }
            }
        }
    }

    #[test]
    fn bad_weights_rejected() {
        let a = bundle("a", &[("w", &[1], &[1.0])]);
        let b = bundle("b", &[("w", &[1], &[2.0])]);
        let pair = [a, b];
        assert!(matches!(merge_linear(&pair, Some(&[1.0])), Err(MergeError::BadWeights(_))));
        assert!(matches!(
            merge_linear(&pair, Some(&[0.0, 0.0])),
            Err(MergeError::BadWeights(_))
        ));
        assert!(matches!(
            merge_linear(&pair, Some(&[-1.0, 2.0])),
            Err(MergeError::BadWeights(_))
        ));
    }

    #[test]
    fn two_empty_bundles_merge_to_empty() {
        let a = TensorBundle::new("a");
        let b = TensorBundle::new("b");
        let merged = merge_linear(&[a, b], None).unwrap();
        assert!(merged.is_empty());
    }

    #[test]
    fn single_bundle_is_too_few() {
        let a = bundle("a", &[("w", &[1], &[1.0])]);
        assert!(matches!(merge_linear(&[a], None), Err(MergeError::TooFewBundles(1))));
    }
}

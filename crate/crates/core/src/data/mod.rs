//! Datasets, risk partitions, and sampling.

mod corpus;
mod idx;
mod partition;
mod synth;

pub use corpus::{
    build_char_corpus, styled_corpus, styled_corpus_pair, window_dataset, CharCorpus, StyledCorpus,
    TokenRole,
};
pub use idx::{encode_idx, load_idx, parse_idx, write_idx};
pub use partition::{partition_by_class, partition_random, PartitionIndices, RiskPartition};
pub use synth::synth_blobs;

use crate::error::{Error, Result};
use crate::models::{Batch, RiskTag};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// A named, non-empty set of labelled examples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<S> {
    id: String,
    num_labels: usize,
    examples: Batch<S>,
}

impl<S: Scalar> LabeledDataset<S> {
    /// `num_labels` is the class count, or the vocabulary size for token data.
    pub fn new(id: impl Into<String>, num_labels: usize, examples: Batch<S>) -> Result<Self> {
        let id = id.into();
        if examples.is_empty() {
            return Err(Error::Input(format!("dataset `{id}` is empty")));
        }
        if let Some(&bad) = examples.labels.iter().find(|&&y| y >= num_labels) {
            return Err(Error::Input(format!(
                "dataset `{id}`: label {bad} out of range for {num_labels} labels"
            )));
        }
        Ok(LabeledDataset {
            id,
            num_labels,
            examples,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// All examples as one batch.
    pub fn as_batch(&self) -> &Batch<S> {
        &self.examples
    }

    pub fn labels(&self) -> &[usize] {
        &self.examples.labels
    }

    /// Rows at `indices` as a new dataset.
    pub fn subset(&self, id: impl Into<String>, indices: &[usize]) -> Result<Self> {
        LabeledDataset::new(id, self.num_labels, self.examples.select(indices))
    }

    /// First `n` examples (all of them if fewer).
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(self.id.clone(), &idx)
    }

    pub fn with_tag(mut self, tag: RiskTag) -> Self {
        self.examples = self.examples.with_tag(tag);
        self
    }
}

/// Read access to the examples an operation is allowed to touch.
pub trait ExampleSource<S: Scalar> {
    fn full_batch(&self) -> &Batch<S>;

    fn num_labels(&self) -> usize;

    /// Uniform sample with replacement.
    fn sample(&self, size: usize, rng: &mut SeededRng) -> Result<Batch<S>> {
        let all = self.full_batch();
        if size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if all.is_empty() {
            return Err(Error::param(
                "dataset",
                "cannot sample from an empty dataset",
            ));
        }
        let idx: Vec<usize> = (0..size).map(|_| rng.below(all.len())).collect();
        Ok(all.select(&idx))
    }
}

impl<S: Scalar> ExampleSource<S> for LabeledDataset<S> {
    fn full_batch(&self) -> &Batch<S> {
        &self.examples
    }

    fn num_labels(&self) -> usize {
        self.num_labels
    }
}

/// Draws `size` examples uniformly with replacement; risk tags are copied.
pub fn sample_batch<S: Scalar>(
    d: &LabeledDataset<S>,
    size: usize,
    rng: &mut SeededRng,
) -> Result<Batch<S>> {
    d.sample(size, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> LabeledDataset<f64> {
        let values = (0..n).map(|i| i as f64).collect();
        LabeledDataset::new(
            "n",
            n,
            Batch::dense(1, values, (0..n).collect(), RiskTag::LowRisk).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let empty = Batch::<f64>::dense(1, vec![], vec![], RiskTag::LowRisk).unwrap();
        assert!(LabeledDataset::new("e", 2, empty).is_err());
        let bad = Batch::dense(1, vec![0.0], vec![3], RiskTag::LowRisk).unwrap();
        assert!(LabeledDataset::new("b", 3, bad).is_err());
    }

    #[test]
    fn singleton_sample() {
        let d = numbered(1);
        let b = sample_batch(&d, 1, &mut SeededRng::new(0)).unwrap();
        assert_eq!(b, *d.as_batch());
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = numbered(10);
        let a = sample_batch(&d, 8, &mut SeededRng::new(4)).unwrap();
        let b = sample_batch(&d, 8, &mut SeededRng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform() {
        // Binomial(10⁴, 0.1): σ = 30, so ±150 is a 5σ band per cell.
        let d = numbered(10);
        let b = sample_batch(&d, 10_000, &mut SeededRng::new(8)).unwrap();
        let mut counts = [0usize; 10];
        b.labels.iter().for_each(|&y| counts[y] += 1);
        for c in counts {
            assert!((850..=1150).contains(&c), "count {c}");
        }
    }

    #[test]
    fn sampling_rejects_zero_size() {
        assert!(sample_batch(&numbered(3), 0, &mut SeededRng::new(0)).is_err());
    }
}

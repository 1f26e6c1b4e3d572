use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which risk group an example belongs to during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskTag {
    HighRisk,
    LowRisk,
    Recovery,
}

/// Model inputs, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs<S> {
    /// Real feature vectors (images flattened to `[0, 1]`, or quadratic targets).
    Dense { dim: usize, values: Vec<S> },
    /// Token context windows of fixed length.
    Tokens { context: usize, ids: Vec<u32> },
}

impl<S: Scalar> Inputs<S> {
    pub fn width(&self) -> usize {
        match self {
            Inputs::Dense { dim, .. } => *dim,
            Inputs::Tokens { context, .. } => *context,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Inputs::Dense { dim, values } => {
                if *dim == 0 {
                    0
                } else {
                    values.len() / dim
                }
            }
            Inputs::Tokens { context, ids } => {
                if *context == 0 {
                    0
                } else {
                    ids.len() / context
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn empty_like(&self) -> Self {
        match self {
            Inputs::Dense { dim, .. } => Inputs::Dense {
                dim: *dim,
                values: Vec::new(),
            },
            Inputs::Tokens { context, .. } => Inputs::Tokens {
                context: *context,
                ids: Vec::new(),
            },
        }
    }

    pub fn dense_row(&self, i: usize) -> Option<&[S]> {
        match self {
            Inputs::Dense { dim, values } => Some(&values[i * dim..(i + 1) * dim]),
            Inputs::Tokens { .. } => None,
        }
    }

    pub fn token_row(&self, i: usize) -> Option<&[u32]> {
        match self {
            Inputs::Tokens { context, ids } => Some(&ids[i * context..(i + 1) * context]),
            Inputs::Dense { .. } => None,
        }
    }

    pub(crate) fn push_row_from(&mut self, src: &Inputs<S>, i: usize) {
        match (self, src) {
            (
                Inputs::Dense { dim, values },
                Inputs::Dense {
                    dim: d2,
                    values: v2,
                },
            ) => {
                debug_assert_eq!(dim, d2);
                values.extend_from_slice(&v2[i * *d2..(i + 1) * *d2]);
            }
            (
                Inputs::Tokens { context, ids },
                Inputs::Tokens {
                    context: c2,
                    ids: i2,
                },
            ) => {
                debug_assert_eq!(context, c2);
                ids.extend_from_slice(&i2[i * *c2..(i + 1) * *c2]);
            }
            _ => panic!("input kinds differ"),
        }
    }
}

/// A set of examples fed to a model in one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    pub inputs: Inputs<S>,
    pub labels: Vec<usize>,
    pub tags: Vec<RiskTag>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(inputs: Inputs<S>, labels: Vec<usize>, tags: Vec<RiskTag>) -> Result<Self> {
        let n = inputs.len();
        let consistent = match &inputs {
            Inputs::Dense { dim, values } => *dim > 0 && values.len() == n * dim,
            Inputs::Tokens { context, ids } => *context > 0 && ids.len() == n * context,
        };
        if !consistent {
            return Err(Error::Input(
                "input buffer is not a whole number of rows".into(),
            ));
        }
        if labels.len() != n {
            return Err(Error::dim("labels", n, labels.len()));
        }
        if tags.len() != n {
            return Err(Error::dim("risk tags", n, tags.len()));
        }
        Ok(Batch {
            inputs,
            labels,
            tags,
        })
    }

    /// Dense batch with every example tagged `tag`.
    pub fn dense(dim: usize, values: Vec<S>, labels: Vec<usize>, tag: RiskTag) -> Result<Self> {
        let n = labels.len();
        Batch::new(Inputs::Dense { dim, values }, labels, vec![tag; n])
    }

    /// Token batch with every example tagged `tag`.
    pub fn tokens(context: usize, ids: Vec<u32>, labels: Vec<usize>, tag: RiskTag) -> Result<Self> {
        let n = labels.len();
        Batch::new(Inputs::Tokens { context, ids }, labels, vec![tag; n])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn empty_like(&self) -> Self {
        Batch {
            inputs: self.inputs.empty_like(),
            labels: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub(crate) fn push_from(&mut self, src: &Batch<S>, i: usize) {
        self.inputs.push_row_from(&src.inputs, i);
        self.labels.push(src.labels[i]);
        self.tags.push(src.tags[i]);
    }

    /// Rows selected by `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = self.empty_like();
        for &i in indices {
            out.push_from(self, i);
        }
        out
    }

    /// Concatenation of `self` followed by `other`.
    pub fn concat(&self, other: &Batch<S>) -> Result<Self> {
        if self.inputs.width() != other.inputs.width()
            || std::mem::discriminant(&self.inputs) != std::mem::discriminant(&other.inputs)
        {
            return Err(Error::Input(
                "cannot concatenate batches of different input kinds".into(),
            ));
        }
        let mut out = self.clone();
        for i in 0..other.len() {
            out.push_from(other, i);
        }
        Ok(out)
    }

    pub fn with_tag(mut self, tag: RiskTag) -> Self {
        self.tags.iter_mut().for_each(|t| *t = tag);
        self
    }

    pub fn count_tag(&self, tag: RiskTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }
}

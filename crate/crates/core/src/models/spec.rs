use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of a differentiable model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Fully connected tanh network: `widths = [input, hidden.., classes]`.
    Classifier { widths: Vec<usize> },
    /// Fixed-context character model: `context` embeddings of size `embed`
    /// are concatenated, passed through one tanh layer of width `hidden`,
    /// then a softmax over `vocab`.
    CharLm {
        vocab: usize,
        context: usize,
        embed: usize,
        hidden: usize,
    },
    /// `L(θ; x) = ½‖θ − x‖²`, used to check optimizer arithmetic by hand.
    Quadratic { dim: usize },
}

impl ModelSpec {
    pub fn classifier(widths: &[usize]) -> Self {
        ModelSpec::Classifier {
            widths: widths.to_vec(),
        }
    }

    pub fn char_lm(vocab: usize, context: usize, embed: usize, hidden: usize) -> Self {
        ModelSpec::CharLm {
            vocab,
            context,
            embed,
            hidden,
        }
    }

    pub fn quadratic(dim: usize) -> Self {
        ModelSpec::Quadratic { dim }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Classifier { .. } => "classifier",
            ModelSpec::CharLm { .. } => "char_lm",
            ModelSpec::Quadratic { .. } => "quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Classifier { widths } => {
                if widths.len() < 2 {
                    return Err(Error::param(
                        "widths",
                        "need at least input and output widths",
                    ));
                }
                if widths.contains(&0) {
                    return Err(Error::param("widths", "all widths must be >= 1"));
                }
            }
            ModelSpec::CharLm {
                vocab,
                context,
                embed,
                hidden,
            } => {
                for (name, v) in [
                    ("vocab", vocab),
                    ("context", context),
                    ("embed", embed),
                    ("hidden", hidden),
                ] {
                    if *v == 0 {
                        return Err(Error::param(name, "must be >= 1"));
                    }
                }
            }
            ModelSpec::Quadratic { dim } => {
                if *dim == 0 {
                    return Err(Error::param("dim", "must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Number of output classes (vocabulary size for the language model).
    pub fn num_outputs(&self) -> usize {
        match self {
            ModelSpec::Classifier { widths } => *widths.last().unwrap_or(&0),
            ModelSpec::CharLm { vocab, .. } => *vocab,
            ModelSpec::Quadratic { .. } => 0,
        }
    }

    /// Width of one input row: features, context length, or target dimension.
    pub fn input_width(&self) -> usize {
        match self {
            ModelSpec::Classifier { widths } => widths[0],
            ModelSpec::CharLm { context, .. } => *context,
            ModelSpec::Quadratic { dim } => *dim,
        }
    }
}

/// Lifecycle stage of a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Initial,
    Prepared,
    Adapted,
    Unlearned,
    PostRecovery,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Initial => "initial",
            Role::Prepared => "prepared",
            Role::Adapted => "adapted",
            Role::Unlearned => "unlearned",
            Role::PostRecovery => "post-recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named, contiguous slices of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
}

impl Layout {
    /// Builds a layout from `(name, shape)` pairs, assigning contiguous offsets.
    pub fn from_shapes<I, N>(shapes: I) -> Self
    where
        I: IntoIterator<Item = (N, Vec<usize>)>,
        N: Into<String>,
    {
        let mut offset = 0;
        let entries = shapes
            .into_iter()
            .map(|(name, shape)| {
                let e = LayoutEntry {
                    name: name.into(),
                    shape,
                    offset,
                };
                offset += e.len();
                e
            })
            .collect();
        Layout { entries }
    }

    pub fn for_spec(spec: &ModelSpec) -> Self {
        match spec {
            ModelSpec::Classifier { widths } => {
                Layout::from_shapes(widths.windows(2).enumerate().flat_map(|(l, w)| {
                    [
                        (format!("layer{l}.weight"), vec![w[1], w[0]]),
                        (format!("layer{l}.bias"), vec![w[1]]),
                    ]
                }))
            }
            ModelSpec::CharLm {
                vocab,
                context,
                embed,
                hidden,
            } => Layout::from_shapes([
                ("embedding".to_string(), vec![*vocab, *embed]),
                ("hidden.weight".to_string(), vec![*hidden, context * embed]),
                ("hidden.bias".to_string(), vec![*hidden]),
                ("output.weight".to_string(), vec![*vocab, *hidden]),
                ("output.bias".to_string(), vec![*vocab]),
            ]),
            ModelSpec::Quadratic { dim } => {
                Layout::from_shapes([("theta".to_string(), vec![*dim])])
            }
        }
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn total(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    /// Recovers the architecture a layout was generated from.
    pub fn infer_spec(&self) -> Result<ModelSpec> {
        let bad = || Error::Input("layout does not match any known architecture".into());
        let names: Vec<&str> = self.entries.iter().map(|e| e.name.as_str()).collect();
        let spec = match names.first().copied() {
            Some("theta") => ModelSpec::Quadratic {
                dim: self.entries[0].shape.first().copied().ok_or_else(bad)?,
            },
            Some("embedding") => {
                let emb = &self.entry("embedding").ok_or_else(bad)?.shape;
                let hid = &self.entry("hidden.weight").ok_or_else(bad)?.shape;
                if emb.len() != 2 || hid.len() != 2 || emb[1] == 0 || hid[1] % emb[1] != 0 {
                    return Err(bad());
                }
                ModelSpec::CharLm {
                    vocab: emb[0],
                    context: hid[1] / emb[1],
                    embed: emb[1],
                    hidden: hid[0],
                }
            }
            Some("layer0.weight") => {
                let mut widths = Vec::new();
                for (l, pair) in self.entries.chunks(2).enumerate() {
                    let w = &pair[0];
                    if w.name != format!("layer{l}.weight") || w.shape.len() != 2 {
                        return Err(bad());
                    }
                    if l == 0 {
                        widths.push(w.shape[1]);
                    }
                    widths.push(w.shape[0]);
                }
                ModelSpec::Classifier { widths }
            }
            _ => return Err(bad()),
        };
        if Layout::for_spec(&spec) != *self {
            return Err(bad());
        }
        Ok(spec)
    }
}

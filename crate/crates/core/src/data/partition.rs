use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::RiskTag;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Positions of each part within the dataset a partition was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionIndices {
    pub forget: Vec<usize>,
    pub retain: Vec<usize>,
    pub recovery: Vec<usize>,
    pub recovery_finetune: Vec<usize>,
}

/// Forget, retain, and optional recovery splits of a training set.
///
/// `full` is the training set `forget ∪ retain` with risk tags applied.
/// The recovery split shapes training; the recovery fine-tuning split is only
/// ever used after unlearning.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskPartition<S> {
    pub forget: LabeledDataset<S>,
    pub retain: LabeledDataset<S>,
    pub recovery: Option<LabeledDataset<S>>,
    pub recovery_finetune: Option<LabeledDataset<S>>,
    pub full: LabeledDataset<S>,
    pub indices: Option<PartitionIndices>,
}

impl<S: Scalar> RiskPartition<S> {
    /// Assembles a partition from separately built sets. The caller is
    /// responsible for the sets holding distinct examples.
    pub fn new(
        forget: LabeledDataset<S>,
        retain: LabeledDataset<S>,
        recovery: Option<LabeledDataset<S>>,
        recovery_finetune: Option<LabeledDataset<S>>,
    ) -> Result<Self> {
        let forget = forget.with_tag(RiskTag::HighRisk);
        let retain = retain.with_tag(RiskTag::LowRisk);
        let full_batch = forget.as_batch().concat(retain.as_batch())?;
        let full = LabeledDataset::new(
            "full",
            forget.num_labels().max(retain.num_labels()),
            full_batch,
        )?;
        Ok(RiskPartition {
            forget,
            retain,
            recovery: recovery.map(|d| d.with_tag(RiskTag::Recovery)),
            recovery_finetune: recovery_finetune.map(|d| d.with_tag(RiskTag::Recovery)),
            full,
            indices: None,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.full.num_labels()
    }
}

/// Every example of `forget_class` becomes forget data; the rest is retained.
/// Order within each side follows the source dataset.
pub fn partition_by_class<S: Scalar>(
    d: &LabeledDataset<S>,
    forget_class: usize,
) -> Result<RiskPartition<S>> {
    if forget_class >= d.num_labels() {
        return Err(Error::Input(format!(
            "forget class {forget_class} out of range for {} classes",
            d.num_labels()
        )));
    }
    let (forget_idx, retain_idx): (Vec<usize>, Vec<usize>) =
        (0..d.len()).partition(|&i| d.labels()[i] == forget_class);
    if forget_idx.is_empty() {
        return Err(Error::Input(format!(
            "class {forget_class} absent from dataset"
        )));
    }
    if retain_idx.is_empty() {
        return Err(Error::Input(
            "empty retain: every example belongs to the forget class".into(),
        ));
    }
    let forget = d
        .subset(format!("forget[class={forget_class}]"), &forget_idx)?
        .with_tag(RiskTag::HighRisk);
    let retain = d.subset("retain", &retain_idx)?.with_tag(RiskTag::LowRisk);
    let mut tagged = d.clone().with_tag(RiskTag::LowRisk);
    let mut batch = tagged.as_batch().clone();
    for &i in &forget_idx {
        batch.tags[i] = RiskTag::HighRisk;
    }
    tagged = LabeledDataset::new("full", d.num_labels(), batch)?;
    Ok(RiskPartition {
        forget,
        retain,
        recovery: None,
        recovery_finetune: None,
        full: tagged,
        indices: Some(PartitionIndices {
            forget: forget_idx,
            retain: retain_idx,
            ..Default::default()
        }),
    })
}

fn count(fraction: f64, n: usize) -> usize {
    // Tolerate representation error such as 0.29·100 = 28.999…
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Shuffles, then slices forget / recovery / recovery-finetune by
/// `floor(fraction·n)`; whatever remains is retained.
pub fn partition_random<S: Scalar>(
    d: &LabeledDataset<S>,
    fractions: (f64, f64, f64),
    rng: &mut SeededRng,
) -> Result<RiskPartition<S>> {
    let (f, rc, ft) = fractions;
    for (name, v) in [
        ("forget_fraction", f),
        ("recovery_fraction", rc),
        ("finetune_fraction", ft),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
        }
    }
    if f + rc + ft > 1.0 + 1e-12 {
        return Err(Error::param(
            "fractions",
            format!("sum {} exceeds 1", f + rc + ft),
        ));
    }
    let n = d.len();
    let (nf, nrc, nft) = (count(f, n), count(rc, n), count(ft, n));
    if nf == 0 {
        return Err(Error::param("fractions", "empty forget"));
    }
    if nf + nrc + nft >= n {
        return Err(Error::param("fractions", "empty retain"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let forget_idx = order[..nf].to_vec();
    let rc_idx = order[nf..nf + nrc].to_vec();
    let ft_idx = order[nf + nrc..nf + nrc + nft].to_vec();
    let retain_idx = order[nf + nrc + nft..].to_vec();

    let optional = |id: &str, idx: &[usize]| -> Result<Option<LabeledDataset<S>>> {
        if idx.is_empty() {
            Ok(None)
        } else {
            Ok(Some(d.subset(id, idx)?))
        }
    };
    let mut part = RiskPartition::new(
        d.subset("forget", &forget_idx)?,
        d.subset("retain", &retain_idx)?,
        optional("recovery", &rc_idx)?,
        optional("recovery_finetune", &ft_idx)?,
    )?;
    part.indices = Some(PartitionIndices {
        forget: forget_idx,
        retain: retain_idx,
        recovery: rc_idx,
        recovery_finetune: ft_idx,
    });
    Ok(part)
}

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{Batch, RiskTag};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Unit-variance Gaussian clusters, one per class, stored class by class.
///
/// Cluster centres are random unit directions scaled by `separation / √2`,
/// so two centres lie `separation` apart when their directions are
/// orthogonal (approximately so once `dim` is well above `classes`).
pub fn synth_blobs<S: Scalar>(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    rng: &mut SeededRng,
) -> Result<LabeledDataset<S>> {
    if classes < 2 {
        return Err(Error::param("classes", "need at least 2"));
    }
    if per_class == 0 {
        return Err(Error::param("per_class", "must be >= 1"));
    }
    if dim == 0 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::param("separation", "must be finite and >= 0"));
    }
    let radius = separation / std::f64::consts::SQRT_2;
    let mut normals = |n: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        while out.len() < n {
            let (a, b) = rng.normal_pair();
            out.push(a);
            out.push(b);
        }
        out.truncate(n);
        out
    };
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let d = normals(dim);
            let norm = d
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            d.iter().map(|v| v / norm * radius).collect()
        })
        .collect();
    let mut values = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let noise = normals(dim);
            values.extend(centre.iter().zip(noise).map(|(m, e)| S::lit(m + e)));
            labels.push(c);
        }
    }
    let batch = Batch::dense(dim, values, labels, RiskTag::LowRisk)?;
    LabeledDataset::new("synth_blobs", classes, batch)
}

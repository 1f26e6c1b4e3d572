//! IDX binary files (the MNIST distribution format).
//!
//! Big-endian throughout. Images: magic `0x00000803`, then count, rows, and
//! columns as `u32`, then one unsigned byte per pixel. Labels: magic
//! `0x00000801`, count, then one byte per label.

use std::fs;
use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{Batch, Inputs, RiskTag};
use crate::scalar::Scalar;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, file: &str, field: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            file: file.to_string(),
            field,
            reason: "truncated header".into(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses an image/label byte pair. `names` label the two inputs in errors.
pub fn parse_idx<S: Scalar>(
    images: &[u8],
    labels: &[u8],
    names: (&str, &str),
) -> Result<LabeledDataset<S>> {
    let (img_name, lbl_name) = names;
    let fmt = |file: &str, field: &'static str, reason: String| Error::Format {
        file: file.to_string(),
        field,
        reason,
    };

    let magic = read_u32(images, 0, img_name, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(fmt(
            img_name,
            "magic",
            format!("bad image magic {magic:#010x}"),
        ));
    }
    let count = read_u32(images, 4, img_name, "count")? as usize;
    let rows = read_u32(images, 8, img_name, "rows")? as usize;
    let cols = read_u32(images, 12, img_name, "cols")? as usize;
    let pixels = count * rows * cols;
    let body = &images[16..];
    if body.len() < pixels {
        return Err(fmt(
            img_name,
            "data",
            format!(
                "truncated: expected {pixels} pixel bytes, found {}",
                body.len()
            ),
        ));
    }

    let magic = read_u32(labels, 0, lbl_name, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(fmt(
            lbl_name,
            "magic",
            format!("bad label magic {magic:#010x}"),
        ));
    }
    let label_count = read_u32(labels, 4, lbl_name, "count")? as usize;
    if label_count != count {
        return Err(fmt(
            lbl_name,
            "count",
            format!("count mismatch: {label_count} labels for {count} images"),
        ));
    }
    let lbody = &labels[8..];
    if lbody.len() < count {
        return Err(fmt(
            lbl_name,
            "data",
            format!(
                "truncated: expected {count} label bytes, found {}",
                lbody.len()
            ),
        ));
    }

    let scale = S::lit(255.0);
    let values = body[..pixels]
        .iter()
        .map(|&b| S::lit(b as f64) / scale)
        .collect();
    let labels: Vec<usize> = lbody[..count].iter().map(|&b| b as usize).collect();
    let num_labels = labels.iter().max().map_or(1, |&m| m + 1);
    let tags = vec![RiskTag::LowRisk; count];
    let batch = Batch::new(
        Inputs::Dense {
            dim: rows * cols,
            values,
        },
        labels,
        tags,
    )?;
    LabeledDataset::new(img_name, num_labels, batch)
}

/// Loads an IDX image file and its matching label file.
pub fn load_idx<S: Scalar>(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<LabeledDataset<S>> {
    let (ip, lp) = (images.as_ref(), labels.as_ref());
    let ib = read_file(ip)?;
    let lb = read_file(lp)?;
    parse_idx(
        &ib,
        &lb,
        (&ip.display().to_string(), &lp.display().to_string()),
    )
}

/// Encodes a dense dataset as `(image bytes, label bytes)`. Values are
/// mapped back to bytes with `round(v·255)`, clamped to `[0, 255]`.
pub fn encode_idx<S: Scalar>(
    d: &LabeledDataset<S>,
    rows: usize,
    cols: usize,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let (dim, values) = match &d.as_batch().inputs {
        Inputs::Dense { dim, values } => (*dim, values),
        Inputs::Tokens { .. } => return Err(Error::Input("IDX images need dense inputs".into())),
    };
    if dim != rows * cols {
        return Err(Error::dim("rows·cols", dim, rows * cols));
    }
    if let Some(&bad) = d.labels().iter().find(|&&y| y > 255) {
        return Err(Error::Input(format!("label {bad} does not fit in a byte")));
    }
    let n = d.len() as u32;
    let mut img = Vec::with_capacity(16 + values.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend(
        values
            .iter()
            .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let mut lbl = Vec::with_capacity(8 + d.len());
    lbl.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&n.to_be_bytes());
    lbl.extend(d.labels().iter().map(|&y| y as u8));
    Ok((img, lbl))
}

pub fn write_idx<S: Scalar>(
    d: &LabeledDataset<S>,
    rows: usize,
    cols: usize,
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<()> {
    let (img, lbl) = encode_idx(d, rows, cols)?;
    for (path, bytes) in [(images.as_ref(), img), (labels.as_ref(), lbl)] {
        fs::write(path, bytes).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

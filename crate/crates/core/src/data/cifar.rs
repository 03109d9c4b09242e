use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
/// One label byte followed by three 32x32 channel planes (R, G, B).
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * PLANE;

fn parse_records(bytes: &[u8], images: &mut Vec<Image>, labels: &mut Vec<u32>) -> Result<()> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_LEN != 0 {
        let whole = bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN;
        return Err(Error::format(
            whole as u64,
            format!("CIFAR-10 batch of {} bytes is not a positive multiple of {CIFAR_RECORD_LEN}", bytes.len()),
        ));
    }
    let shape = Shape::new(SIDE, SIDE, 3);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = record[0];
        if label > 9 {
            return Err(Error::format((r * CIFAR_RECORD_LEN) as u64, format!("label {label} outside 0..=9")));
        }
        let planes = &record[1..];
        let mut data = vec![0.0; shape.len()];
        for p in 0..PLANE {
            for c in 0..3 {
                data[p * 3 + c] = f64::from(planes[c * PLANE + p]) / 255.0;
            }
        }
        images.push(Image::new(shape, data)?);
        labels.push(u32::from(label));
    }
    Ok(())
}

/// Parses in-memory CIFAR-10 binary batches into channel-last images.
pub fn parse_cifar10(batches: &[&[u8]], split: Split) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for bytes in batches {
        parse_records(bytes, &mut images, &mut labels)?;
    }
    Dataset::new("cifar10", split, images, labels)
}

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P], split: Split) -> Result<Dataset> {
    let blobs = batch_paths
        .iter()
        .map(|p| std::fs::read(p.as_ref()))
        .collect::<std::io::Result<Vec<_>>>()?;
    let refs: Vec<&[u8]> = blobs.iter().map(Vec::as_slice).collect();
    parse_cifar10(&refs, split)
}

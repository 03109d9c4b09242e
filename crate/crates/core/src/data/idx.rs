use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated {what} header")))
}

/// Parses an IDX image file and its label file from memory. Pixels are
/// scaled by 1/255 into `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8], name: &str, split: Split) -> Result<Dataset> {
    let magic = read_u32(images, 0, "image file")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(0, format!("image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let count = read_u32(images, 4, "image file")? as usize;
    let rows = read_u32(images, 8, "image file")? as usize;
    let cols = read_u32(images, 12, "image file")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(8, format!("image dimensions {rows}x{cols}")));
    }
    let pixels = rows * cols;
    let expected = 16 + count * pixels;
    if images.len() < expected {
        return Err(Error::format(
            images.len() as u64,
            format!("image file truncated: {count} images of {rows}x{cols} need {expected} bytes"),
        ));
    }

    let magic = read_u32(labels, 0, "label file")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(0, format!("label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let label_count = read_u32(labels, 4, "label file")? as usize;
    if label_count != count {
        return Err(Error::format(4, format!("label file holds {label_count} labels, image file {count} images")));
    }
    if labels.len() < 8 + count {
        return Err(Error::format(labels.len() as u64, format!("label file truncated: {count} labels need {} bytes", 8 + count)));
    }

    let shape = Shape::new(rows, cols, 1);
    let images = images[16..expected]
        .chunks_exact(pixels)
        .map(|px| Image::new(shape, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect::<Result<Vec<_>>>()?;
    let labels = labels[8..8 + count].iter().map(|&b| u32::from(b)).collect();
    Dataset::new(name, split, images, labels)
}

/// Loads an IDX image/label file pair.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let images = std::fs::read(images_path.as_ref())?;
    let labels = std::fs::read(labels_path.as_ref())?;
    parse_idx(&images, &labels, "mnist", split)
}

//! Datasets: loaders for MNIST IDX and CIFAR-10 binary files, binary-task
//! extraction, train-time augmentation and a synthetic two-blob generator.

mod augment;
mod cifar;
mod idx;
mod synth;

pub use augment::{augment, augment_rng, AugmentConfig, FillMode};
pub use cifar::{load_cifar10, parse_cifar10, CIFAR_RECORD_LEN};
pub use idx::{load_idx, parse_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synth::synth_dataset;

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Images with integer labels. All images share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    images: Vec<Image>,
    labels: Vec<u32>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        images: Vec<Image>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(first) = images.first() {
            let shape = first.shape();
            if let Some(i) = images.iter().position(|im| im.shape() != shape) {
                return Err(Error::Input(format!(
                    "image {i} has shape {}, expected {shape}",
                    images[i].shape()
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            split,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn shape(&self) -> Option<Shape> {
        self.images.first().map(Image::shape)
    }

    /// Labels mapped to `-1.0` / `+1.0` for a `{0, 1}` task.
    pub fn signed_labels(&self) -> Result<Vec<f64>> {
        self.labels
            .iter()
            .map(|&l| match l {
                0 => Ok(-1.0),
                1 => Ok(1.0),
                other => Err(Error::Input(format!("label {other} is not in {{0, 1}}"))),
            })
            .collect()
    }

    /// First `n` examples, in order.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        if n > self.len() {
            return Err(Error::Config(format!(
                "requested {n} examples from {} ({}) which has only {}",
                self.name,
                self.split,
                self.len()
            )));
        }
        Ok(Dataset {
            name: self.name.clone(),
            split: self.split,
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        })
    }

    /// Number of examples with each label value present.
    pub fn count_label(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Keeps examples labelled `class_a` or `class_b`, relabelled to 0 and 1,
/// in their original order.
pub fn binary_task(data: &Dataset, class_a: u32, class_b: u32) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::Input(format!("binary task needs two distinct classes, got {class_a} twice")));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (image, &label) in data.images.iter().zip(&data.labels) {
        let mapped = if label == class_a {
            0
        } else if label == class_b {
            1
        } else {
            continue;
        };
        images.push(image.clone());
        labels.push(mapped);
    }
    for (class, mapped) in [(class_a, 0), (class_b, 1)] {
        if !labels.contains(&mapped) {
            return Err(Error::Input(format!(
                "class {class} does not occur in {} ({})",
                data.name, data.split
            )));
        }
    }
    Dataset::new(
        format!("{}-{class_a}v{class_b}", data.name),
        data.split,
        images,
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let shape = Shape::new(1, 1, 1);
        let images = (0..6).map(|i| Image::filled(shape, i as f64 / 10.0)).collect();
        Dataset::new("toy", Split::Train, images, vec![0, 1, 2, 0, 2, 1]).unwrap()
    }

    #[test]
    fn binary_task_relabels_and_keeps_order() {
        let task = binary_task(&toy(), 0, 2).unwrap();
        assert_eq!(task.labels(), &[0, 1, 0, 1]);
        let pixels: Vec<f64> = task.images().iter().map(|im| im.data()[0]).collect();
        assert_eq!(pixels, vec![0.0, 0.2, 0.3, 0.4]);
        assert_eq!(task.len(), toy().count_label(0) + toy().count_label(2));
    }

    #[test]
    fn binary_task_errors() {
        assert!(matches!(binary_task(&toy(), 1, 1), Err(Error::Input(_))));
        assert!(matches!(binary_task(&toy(), 1, 7), Err(Error::Input(_))));
    }

    #[test]
    fn take_beyond_length_is_config_error() {
        assert_eq!(toy().take(3).unwrap().len(), 3);
        assert!(matches!(toy().take(7), Err(Error::Config(_))));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let shape = Shape::new(1, 1, 1);
        assert!(Dataset::new("x", Split::Test, vec![Image::zeros(shape)], vec![]).is_err());
        let mixed = vec![Image::zeros(shape), Image::zeros(Shape::new(2, 1, 1))];
        assert!(Dataset::new("x", Split::Test, mixed, vec![0, 1]).is_err());
    }
}

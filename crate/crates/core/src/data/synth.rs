use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::image::{Image, Shape};

pub const SYNTH_NOISE_SIGMA: f64 = 0.1;
const BASE_LEVEL: f64 = 0.25;
const BLOB_GAIN: f64 = 0.25;

/// Gaussian bump centred in the upper-left (class 0) or lower-right
/// (class 1) half of the image. The two supports are disjoint, so the
/// templates are orthogonal.
fn template(shape: Shape, class: u32) -> Vec<f64> {
    let (h, w) = (shape.height as f64, shape.width as f64);
    let (cy, cx) = if class == 0 {
        (0.3 * (h - 1.0), 0.3 * (w - 1.0))
    } else {
        (0.7 * (h - 1.0), 0.7 * (w - 1.0))
    };
    let sigma = 0.15 * h.min(w);
    let mut out = vec![0.0; shape.len()];
    for r in 0..shape.height {
        for c in 0..shape.width {
            // Keep only this class's side of the anti-diagonal split.
            let side = (r as f64 / (h - 1.0).max(1.0)) + (c as f64 / (w - 1.0).max(1.0));
            let mine = if class == 0 { side < 1.0 } else { side > 1.0 };
            if !mine {
                continue;
            }
            let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
            let v = (-d2 / (2.0 * sigma * sigma)).exp();
            for ch in 0..shape.channels {
                out[(r * shape.width + c) * shape.channels + ch] = v;
            }
        }
    }
    out
}

/// Two-class synthetic images: pixel mean `0.25 + 0.25 * separation *
/// template_c`, Gaussian noise with sigma 0.1, clipped to `[0, 1]`. Labels
/// alternate 0, 1, 0, 1, ... so any prefix is balanced.
pub fn synth_dataset(n: usize, shape: Shape, separation: f64, seed: u64, split: Split) -> Result<Dataset> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::Input(format!("synthetic dataset size must be even and positive, got {n}")));
    }
    if !(separation >= 0.0) {
        return Err(Error::Input(format!("separation must be non-negative, got {separation}")));
    }
    if shape.is_empty() {
        return Err(Error::Input("empty image shape".into()));
    }
    let templates = [template(shape, 0), template(shape, 1)];
    let noise = Normal::new(0.0, SYNTH_NOISE_SIGMA).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u32;
        let data = templates[label as usize]
            .iter()
            .map(|&t| (BASE_LEVEL + BLOB_GAIN * separation * t + noise.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        images.push(Image::new(shape, data)?);
        labels.push(label);
    }
    Dataset::new(format!("synth-s{separation}"), split, images, labels)
}

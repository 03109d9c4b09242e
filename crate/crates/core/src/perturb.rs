//! Shape-preserving image perturbations and the embedding-invariance metric.
//!
//! Rotation and zoom resample bilinearly. Vacated pixels are zero-filled for
//! the evaluation transforms; augmentation uses nearest-edge fill instead.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::kernel::{embed_one, EmbeddingKind};
use crate::linalg;
use crate::nn::Network;

/// Angle used by the rotation-invariance transforms, in radians.
pub const QUARTER_RADIAN: f64 = 0.25;

/// Skipped-pair fraction above which an invariance result is flagged.
pub const SKIP_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fill {
    #[default]
    Zero,
    /// Out-of-range samples take the value of the nearest edge pixel.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    Identity,
    ShiftRight1,
    ShiftDown1,
    RotateCcwQuarterRad,
    RotateCwQuarterRad,
    Zoom1Px,
    QuadrantSwap,
}

impl Transform {
    pub const ALL: [Transform; 7] = [
        Transform::Identity,
        Transform::ShiftRight1,
        Transform::ShiftDown1,
        Transform::RotateCcwQuarterRad,
        Transform::RotateCwQuarterRad,
        Transform::Zoom1Px,
        Transform::QuadrantSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::ShiftRight1 => "shift_right_1",
            Transform::ShiftDown1 => "shift_down_1",
            Transform::RotateCcwQuarterRad => "rotate_ccw_quarter_rad",
            Transform::RotateCwQuarterRad => "rotate_cw_quarter_rad",
            Transform::Zoom1Px => "zoom_1px",
            Transform::QuadrantSwap => "quadrant_swap",
        }
    }

    pub fn apply(self, image: &Image) -> Result<Image> {
        match self {
            Transform::Identity => Ok(image.clone()),
            Transform::ShiftRight1 => shift(image, 1, 0),
            Transform::ShiftDown1 => shift(image, 0, 1),
            Transform::RotateCcwQuarterRad => rotate(image, QUARTER_RADIAN),
            Transform::RotateCwQuarterRad => rotate(image, -QUARTER_RADIAN),
            Transform::Zoom1Px => zoom(image),
            Transform::QuadrantSwap => Ok(quadrant_swap(image)),
        }
    }

    /// Transform list used by each named invariance measurement.
    pub fn family(name: &str) -> Result<Vec<Transform>> {
        Ok(match name {
            "translation" => vec![Transform::ShiftRight1, Transform::ShiftDown1],
            "rotation" => vec![Transform::RotateCcwQuarterRad, Transform::RotateCwQuarterRad],
            "zoom" => vec![Transform::Zoom1Px],
            "swap" => vec![Transform::QuadrantSwap],
            "identity" => vec![Transform::Identity],
            other => vec![other.parse()?],
        })
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown transform `{s}`")))
    }
}

/// Moves content `dx` pixels right and `dy` pixels down with zero fill.
pub fn shift(image: &Image, dx: i64, dy: i64) -> Result<Image> {
    shift_with(image, dx, dy, Fill::Zero)
}

pub fn shift_with(image: &Image, dx: i64, dy: i64, fill: Fill) -> Result<Image> {
    let shape = image.shape();
    let limit = shape.height.min(shape.width) as i64;
    if dx.abs() >= limit || dy.abs() >= limit {
        return Err(Error::Input(format!(
            "shift ({dx}, {dy}) too large for a {shape} image"
        )));
    }
    let mut out = Image::zeros(shape);
    let (h, w) = (shape.height as i64, shape.width as i64);
    for r in 0..h {
        for c in 0..w {
            let (mut sr, mut sc) = (r - dy, c - dx);
            match fill {
                Fill::Zero if sr < 0 || sr >= h || sc < 0 || sc >= w => continue,
                Fill::Zero => {}
                Fill::Nearest => {
                    sr = sr.clamp(0, h - 1);
                    sc = sc.clamp(0, w - 1);
                }
            }
            for ch in 0..shape.channels {
                out.set(r as usize, c as usize, ch, image.get(sr as usize, sc as usize, ch));
            }
        }
    }
    Ok(out)
}

/// Bilinear sample of channel `ch` at fractional `(row, col)`.
///
/// Interpolates as `p + t * (q - p)` so that equal neighbours reproduce
/// their value exactly.
#[inline]
fn bilinear(image: &Image, row: f64, col: f64, ch: usize, fill: Fill) -> f64 {
    let shape = image.shape();
    let (h, w) = (shape.height as i64, shape.width as i64);
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as i64, c0 as i64);
    let pix = |r: i64, c: i64| -> f64 {
        match fill {
            Fill::Zero if r < 0 || r >= h || c < 0 || c >= w => 0.0,
            Fill::Zero => image.get(r as usize, c as usize, ch),
            Fill::Nearest => image.get(r.clamp(0, h - 1) as usize, c.clamp(0, w - 1) as usize, ch),
        }
    };
    let v00 = pix(r0, c0);
    let v01 = pix(r0, c0 + 1);
    let v10 = pix(r0 + 1, c0);
    let v11 = pix(r0 + 1, c0 + 1);
    let top = v00 + fc * (v01 - v00);
    let bottom = v10 + fc * (v11 - v10);
    top + fr * (bottom - top)
}

/// Rotates counterclockwise by `angle` radians about the image centre with
/// zero fill. Negative angles rotate clockwise.
pub fn rotate(image: &Image, angle: f64) -> Result<Image> {
    rotate_with(image, angle, Fill::Zero)
}

pub fn rotate_with(image: &Image, angle: f64, fill: Fill) -> Result<Image> {
    if !(angle.abs() <= std::f64::consts::PI) {
        return Err(Error::Input(format!("rotation angle {angle} outside [-pi, pi]")));
    }
    let shape = image.shape();
    let rc = (shape.height as f64 - 1.0) / 2.0;
    let cc = (shape.width as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = Image::zeros(shape);
    for r in 0..shape.height {
        for c in 0..shape.width {
            // Cartesian offsets from the centre, y pointing up.
            let x = c as f64 - cc;
            let y = rc - r as f64;
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            let (sr, sc) = (rc - sy, cc + sx);
            for ch in 0..shape.channels {
                out.set(r, c, ch, bilinear(image, sr, sc, ch, fill));
            }
        }
    }
    Ok(out)
}

/// Crops one pixel from every border and resizes back to the original size
/// with bilinear interpolation on a corner-aligned grid.
pub fn zoom(image: &Image) -> Result<Image> {
    let shape = image.shape();
    if shape.height < 4 || shape.width < 4 {
        return Err(Error::Input(format!("zoom needs at least a 4x4 image, got {shape}")));
    }
    let crop_shape = Shape::new(shape.height - 2, shape.width - 2, shape.channels);
    let mut crop = Image::zeros(crop_shape);
    for r in 0..crop_shape.height {
        for c in 0..crop_shape.width {
            for ch in 0..shape.channels {
                crop.set(r, c, ch, image.get(r + 1, c + 1, ch));
            }
        }
    }
    // Output (r, c) samples the crop at (r (h-3)/(h-1), c (w-3)/(w-1)); the
    // integer product keeps both grid ends exact.
    let grid = |i: usize, crop: usize, full: usize| ((i * (crop - 1)) as f64) / ((full - 1) as f64);
    let mut out = Image::zeros(shape);
    for r in 0..shape.height {
        for c in 0..shape.width {
            let sr = grid(r, crop_shape.height, shape.height);
            let sc = grid(c, crop_shape.width, shape.width);
            for ch in 0..shape.channels {
                // Nearest fill only guards the last row/column's zero-weight neighbour.
                out.set(r, c, ch, bilinear(&crop, sr, sc, ch, Fill::Nearest));
            }
        }
    }
    Ok(out)
}

/// Exchanges the upper-left `floor(H/2) x floor(W/2)` block with the
/// equally sized lower-right block.
pub fn quadrant_swap(image: &Image) -> Image {
    let shape = image.shape();
    let (qh, qw) = (shape.height / 2, shape.width / 2);
    let (r_off, c_off) = (shape.height - qh, shape.width - qw);
    let mut out = image.clone();
    for r in 0..qh {
        for c in 0..qw {
            for ch in 0..shape.channels {
                out.set(r, c, ch, image.get(r + r_off, c + c_off, ch));
                out.set(r + r_off, c + c_off, ch, image.get(r, c, ch));
            }
        }
    }
    out
}

/// Mean cosine similarity between embeddings of images and their transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariance {
    pub value: f64,
    /// (image, transform) pairs that contributed.
    pub pairs: usize,
    /// Pairs dropped because one of the embeddings was the zero vector.
    pub skipped: usize,
}

impl Invariance {
    /// True when more than 1% of pairs were skipped.
    pub fn warning(&self) -> bool {
        let total = self.pairs + self.skipped;
        total > 0 && self.skipped as f64 > SKIP_WARN_FRACTION * total as f64
    }
}

/// Averages `cos(phi(x), phi(t(x)))` over every image and transform, with
/// `phi` the embedding of `kind` under `net`. The sum runs in image order,
/// then transform order.
pub fn invariance(
    net: &Network,
    images: &[Image],
    transforms: &[Transform],
    kind: EmbeddingKind,
) -> Result<Invariance> {
    if images.is_empty() {
        return Err(Error::Input("invariance needs at least one image".into()));
    }
    if transforms.is_empty() {
        return Err(Error::Input("invariance needs at least one transform".into()));
    }
    let per_image: Vec<Vec<Option<f64>>> = images
        .par_iter()
        .map(|image| {
            let base = embed_one(net, image, kind)?;
            transforms
                .iter()
                .map(|t| {
                    if *t == Transform::Identity {
                        return Ok(linalg::cosine(&base, &base).map(|_| 1.0));
                    }
                    let moved = embed_one(net, &t.apply(image)?, kind)?;
                    Ok(linalg::cosine(&base, &moved))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let (mut sum, mut pairs, mut skipped) = (0.0, 0usize, 0usize);
    for cos in per_image.iter().flatten() {
        match cos {
            Some(c) => {
                sum += c;
                pairs += 1;
            }
            None => skipped += 1,
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate("every embedding pair contained a zero vector".into()));
    }
    Ok(Invariance {
        value: sum / pairs as f64,
        pairs,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[f64]]) -> Image {
        Image::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn shift_right_zero_fills() {
        let x = grid(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(shift(&x, 1, 0).unwrap(), grid(&[&[0.0, 1.0], &[0.0, 3.0]]));
        assert_eq!(shift(&x, 0, 1).unwrap(), grid(&[&[0.0, 0.0], &[1.0, 2.0]]));
        assert_eq!(shift(&x, 0, 0).unwrap(), x);
        assert!(shift(&x, 2, 0).is_err());
    }

    #[test]
    fn shift_round_trip_on_supported_region() {
        let x = grid(&[&[1.0, 2.0, 0.0], &[3.0, 4.0, 0.0], &[5.0, 6.0, 0.0]]);
        let back = shift(&shift(&x, 1, 0).unwrap(), -1, 0).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn nearest_shift_replicates_edge() {
        let x = grid(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(shift_with(&x, 1, 0, Fill::Nearest).unwrap(), grid(&[&[1.0, 1.0], &[3.0, 3.0]]));
    }

    #[test]
    fn rotate_zero_is_identity() {
        let x = Image::new(Shape::new(5, 6, 2), (0..60).map(|v| v as f64 * 0.37).collect()).unwrap();
        assert_eq!(rotate(&x, 0.0).unwrap(), x);
        assert!(rotate(&x, 4.0).is_err());
    }

    #[test]
    fn rotate_constant_interior_is_exact() {
        let shape = Shape::new(9, 9, 1);
        let x = Image::filled(shape, 0.7);
        let y = rotate(&x, 0.25).unwrap();
        for r in 0..9 {
            for c in 0..9 {
                let v = y.get(r, c, 0);
                assert!((0.0..=0.7).contains(&v));
                // Pixels within radius 3 of the centre sample well inside.
                let d2 = (r as f64 - 4.0).powi(2) + (c as f64 - 4.0).powi(2);
                if d2 <= 9.0 {
                    assert_eq!(v, 0.7, "({r}, {c})");
                }
            }
        }
    }

    #[test]
    fn rotate_delta_at_centre_quarter_turn() {
        let shape = Shape::new(7, 7, 1);
        let mut x = Image::zeros(shape);
        x.set(3, 3, 0, 1.0);
        let y = rotate(&x, std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(y.get(3, 3, 0), 1.0);
        assert!((y.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_direction() {
        // A pixel directly below the centre moves to the right under a
        // counterclockwise quarter turn.
        let shape = Shape::new(5, 5, 1);
        let mut x = Image::zeros(shape);
        x.set(4, 2, 0, 1.0);
        let y = rotate(&x, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((y.get(2, 4, 0) - 1.0).abs() < 1e-12);
        let z = rotate(&x, -std::f64::consts::FRAC_PI_2).unwrap();
        assert!((z.get(2, 0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zoom_constant_and_row_constant() {
        let x = Image::filled(Shape::new(6, 5, 3), 0.3);
        assert_eq!(zoom(&x).unwrap(), x);
        let rows: Vec<Vec<f64>> = (0..6).map(|r| vec![r as f64 * 0.1; 7]).collect();
        let y = zoom(&Image::from_rows(&rows).unwrap()).unwrap();
        for r in 0..6 {
            for c in 1..7 {
                assert_eq!(y.get(r, c, 0), y.get(r, 0, 0));
            }
        }
        assert!(zoom(&Image::zeros(Shape::new(3, 8, 1))).is_err());
    }

    #[test]
    fn zoom_matches_independent_resize() {
        let x = grid(&[
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 2.0, 0.0],
            &[0.0, 3.0, 4.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
        ]);
        let y = zoom(&x).unwrap();
        assert_eq!(y.get(0, 0, 0), 1.0);
        assert_eq!(y.get(0, 3, 0), 2.0);
        assert_eq!(y.get(3, 0, 0), 3.0);
        assert_eq!(y.get(3, 3, 0), 4.0);
        // Weighted-sum form of bilinear interpolation on the 2x2 crop.
        let crop = [[1.0, 2.0], [3.0, 4.0]];
        for r in 0..4 {
            for c in 0..4 {
                let (a, b) = (r as f64 / 3.0, c as f64 / 3.0);
                let expected = (1.0 - a) * (1.0 - b) * crop[0][0]
                    + (1.0 - a) * b * crop[0][1]
                    + a * (1.0 - b) * crop[1][0]
                    + a * b * crop[1][1];
                assert!((y.get(r, c, 0) - expected).abs() < 1e-12, "({r},{c})");
            }
        }
    }

    #[test]
    fn quadrant_swap_small_cases() {
        let x = grid(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(quadrant_swap(&x), grid(&[&[4.0, 2.0], &[3.0, 1.0]]));
        let odd = grid(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]);
        assert_eq!(quadrant_swap(&odd), grid(&[&[9.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 1.0]]));
    }

    #[test]
    fn transform_names_round_trip() {
        for t in Transform::ALL {
            assert_eq!(t.name().parse::<Transform>().unwrap(), t);
        }
        assert_eq!(Transform::family("translation").unwrap().len(), 2);
        assert!(Transform::family("shear").is_err());
    }
}

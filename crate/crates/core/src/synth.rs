//! Synthetic focal stacks with exact ground truth.
//!
//! A textured sharp scene is blurred per pixel with a Gaussian whose sigma
//! grows linearly with the focus error `|s - gt(p)|`, so the sharpest slice
//! for every pixel is its ground-truth index by construction. The blur is a
//! direct, truncated (±3 sigma) weighted sum — slow but exact, since these
//! stacks serve as the verification oracle for the rest of the toolkit.

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classic::{DepthMap, DepthUnit};
use crate::error::{Error, Result};
use crate::stackio::{FocalStack, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthPattern {
    /// Four vertical bands with evenly spread slice indices.
    Staircase,
    /// Linear ramp from slice 0 to S-1 across the width.
    Slant,
    /// 16x16 blocks alternating between a near and a far index.
    Checker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    /// Alternating tiles. Tile side 6 keeps a contrast edge inside every
    /// dilated kernel footprint up to r = 4.
    Checker,
    /// Seeded i.i.d. uniform values; every pixel carries contrast.
    NoiseTexture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub slices: usize,
    pub depth_pattern: DepthPattern,
    pub texture: Texture,
    /// Pixels of Gaussian sigma per unit of focus error.
    pub blur_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.slices < 2 {
            return Err(Error::InvalidInput("synthetic stack needs at least 2 slices".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidInput("zero-sized synthetic image".into()));
        }
        if !self.blur_scale.is_finite() || self.blur_scale <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "blur scale must be positive, got {}",
                self.blur_scale
            )));
        }
        Ok(())
    }
}

const CHECKER_TILE: usize = 6;
const DEPTH_BLOCK: usize = 16;

fn sharp_texture(spec: &SynthSpec) -> Array2<f64> {
    match spec.texture {
        Texture::Checker => Array2::from_shape_fn((spec.height, spec.width), |(y, x)| {
            if (y / CHECKER_TILE + x / CHECKER_TILE) % 2 == 0 {
                0.2
            } else {
                0.8
            }
        }),
        Texture::NoiseTexture => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            Array2::from_shape_fn((spec.height, spec.width), |_| rng.gen::<f64>())
        }
    }
}

fn ground_truth(spec: &SynthSpec) -> Array2<f64> {
    let top = (spec.slices - 1) as f64;
    match spec.depth_pattern {
        DepthPattern::Staircase => {
            let bands = 4usize;
            Array2::from_shape_fn((spec.height, spec.width), |(_, x)| {
                let band = (x * bands / spec.width).min(bands - 1);
                (band as f64 * top / (bands - 1) as f64).round()
            })
        }
        DepthPattern::Slant => Array2::from_shape_fn((spec.height, spec.width), |(_, x)| {
            if spec.width == 1 {
                0.0
            } else {
                x as f64 * top / (spec.width - 1) as f64
            }
        }),
        DepthPattern::Checker => {
            let near = (0.25 * top).round();
            let far = (0.75 * top).round();
            Array2::from_shape_fn((spec.height, spec.width), |(y, x)| {
                if (y / DEPTH_BLOCK + x / DEPTH_BLOCK) % 2 == 0 {
                    near
                } else {
                    far
                }
            })
        }
    }
}

/// 1-D Gaussian taps for ±ceil(3 sigma), cached per distinct sigma.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let m = (3.0 * sigma).ceil() as isize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    (-m..=m).map(|d| (-((d * d) as f64) * inv).exp()).collect()
}

fn blur_slice(sharp: &Array2<f64>, gt: &Array2<f64>, s: usize, blur_scale: f64) -> Array2<f64> {
    let (h, w) = sharp.dim();
    let mut cache: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let sigma = blur_scale * (s as f64 - gt[(y, x)]).abs();
            if sigma < 1e-12 {
                out[(y, x)] = sharp[(y, x)];
                continue;
            }
            let taps = cache
                .entry(sigma.to_bits())
                .or_insert_with(|| gaussian_taps(sigma));
            let m = (taps.len() / 2) as isize;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for dy in -m..=m {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                let gy = taps[(dy + m) as usize];
                for dx in -m..=m {
                    let sx = x as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let weight = gy * taps[(dx + m) as usize];
                    wsum += weight;
                    acc += weight * sharp[(sy as usize, sx as usize)];
                }
            }
            out[(y, x)] = acc / wsum;
        }
    }
    out
}

/// Builds the stack and its ground-truth index map. Focal distances are the
/// slice indices `0..S-1`.
pub fn generate(spec: &SynthSpec) -> Result<(FocalStack, DepthMap)> {
    spec.validate()?;
    let sharp = sharp_texture(spec);
    let gt = ground_truth(spec);
    let slices: Vec<Image> = (0..spec.slices)
        .into_par_iter()
        .map(|s| {
            Image::from_plane(blur_slice(&sharp, &gt, s, spec.blur_scale))
                .expect("blur output is finite")
        })
        .collect();
    let distances = (0..spec.slices).map(|s| s as f64).collect();
    let stack = FocalStack::new(slices, distances)?;
    let gt_map = DepthMap::new(gt, DepthUnit::Index)?;
    Ok((stack, gt_map))
}

/// True where the ground truth is constant within a Chebyshev radius of
/// `margin` pixels — i.e. pixels at least `margin` away from any depth step.
pub fn uniform_depth_mask(gt: &DepthMap, margin: usize) -> Array2<bool> {
    let (h, w) = gt.values.dim();
    let m = margin as isize;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let v = gt.values[(y, x)];
        for dy in -m..=m {
            for dx in -m..=m {
                let sy = y as isize + dy;
                let sx = x as isize + dx;
                if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                    continue;
                }
                if gt.values[(sy as usize, sx as usize)] != v {
                    return false;
                }
            }
        }
        true
    })
}

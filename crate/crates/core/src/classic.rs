//! Classical shape-from-focus depth extraction: winner-takes-all argmax
//! over the focus volume, all-in-focus composition, and per-pixel focus
//! measure curves.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::focusvol::FocusVolume;
use crate::stackio::{FocalStack, Image};

/// Unit of the values stored in a [`DepthMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthUnit {
    /// Slice index into the focal stack, in `[0, S-1]`.
    Index,
    /// Focal distance in the units of the stack manifest.
    FocalDistance,
}

/// `height x width` field of depths.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Array2<f64>,
    pub unit: DepthUnit,
}

impl DepthMap {
    pub fn new(values: Array2<f64>, unit: DepthUnit) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::OutOfDomain("depth map contains non-finite values".into()));
        }
        Ok(Self { values, unit })
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Focus values of one pixel across the stack, with the winning index and
/// optionally the ground-truth index for comparison plots.
#[derive(Debug, Clone)]
pub struct FMCurve {
    pub pixel: (usize, usize),
    pub values: Vec<f64>,
    pub argmax_index: usize,
    pub gt_index: Option<usize>,
}

/// Index of the maximum, ties broken toward the smallest index.
fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Winner-takes-all depth: per pixel, the slice index of the maximum focus
/// value. With `DepthUnit::FocalDistance`, indices map through `distances`.
pub fn wta_depth(
    fv: &FocusVolume,
    unit: DepthUnit,
    distances: Option<&[f64]>,
) -> Result<DepthMap> {
    let (s, h, w) = fv.values().dim();
    if unit == DepthUnit::FocalDistance {
        match distances {
            Some(d) if d.len() == s => {}
            Some(d) => {
                return Err(Error::ShapeMismatch(format!(
                    "{} focal distances for {} slices",
                    d.len(),
                    s
                )))
            }
            None => {
                return Err(Error::InvalidInput(
                    "focal-distance output requires the distance table".into(),
                ))
            }
        }
    }
    let volume = fv.values().as_slice().expect("volume is contiguous");
    let plane = h * w;
    let mut values = Array2::zeros((h, w));
    values
        .as_slice_mut()
        .expect("contiguous")
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let idx = argmax_first((0..s).map(|si| volume[si * plane + y * w + x]));
                *out = match unit {
                    DepthUnit::Index => idx as f64,
                    DepthUnit::FocalDistance => distances.expect("checked above")[idx],
                };
            }
        });
    DepthMap::new(values, unit)
}

/// Per pixel and channel, picks the slice the depth map points at.
/// Depth values are rounded to the nearest slice index.
pub fn all_in_focus(stack: &FocalStack, depth: &DepthMap) -> Result<Image> {
    if depth.unit != DepthUnit::Index {
        return Err(Error::InvalidInput("all-in-focus needs an index-unit depth map".into()));
    }
    let (h, w) = (stack.height(), stack.width());
    if depth.values.dim() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "depth map {}x{} vs stack {}x{}",
            depth.height(),
            depth.width(),
            h,
            w
        )));
    }
    let channels = stack.channels();
    let mut planes = ndarray::Array3::zeros((channels, h, w));
    for y in 0..h {
        for x in 0..w {
            let idx = depth.values[(y, x)].round();
            if idx < 0.0 || idx >= stack.len() as f64 {
                return Err(Error::OutOfDomain(format!(
                    "depth {} at ({y},{x}) rounds outside 0..{}",
                    depth.values[(y, x)],
                    stack.len() - 1
                )));
            }
            let s = idx as usize;
            for c in 0..channels {
                planes[(c, y, x)] = stack.slice(s).value(c, y, x);
            }
        }
    }
    Image::new(planes)
}

/// Extracts one pixel's focus measure curve.
pub fn fm_curve(fv: &FocusVolume, pixel: (usize, usize), gt: Option<&DepthMap>) -> Result<FMCurve> {
    let (x, y) = pixel;
    if y >= fv.height() || x >= fv.width() {
        return Err(Error::OutOfDomain(format!(
            "pixel ({x},{y}) outside {}x{}",
            fv.width(),
            fv.height()
        )));
    }
    let values: Vec<f64> = (0..fv.slices()).map(|s| fv.values()[(s, y, x)]).collect();
    let gt_index = match gt {
        Some(map) => {
            if map.unit != DepthUnit::Index {
                return Err(Error::InvalidInput("ground-truth curve index needs index unit".into()));
            }
            if map.values.dim() != (fv.height(), fv.width()) {
                return Err(Error::ShapeMismatch("ground truth does not match volume".into()));
            }
            Some(map.values[(y, x)].round().max(0.0) as usize)
        }
        None => None,
    };
    let argmax_index = argmax_first(values.iter().cloned());
    Ok(FMCurve { pixel, values, argmax_index, gt_index })
}

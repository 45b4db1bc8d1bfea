//! Multi-scale directional dilated Laplacian focus volumes, the cumulative
//! ablation variants, the 3x3-Laplacian baseline volume, and the focus
//! aggregation map that stacks every rate's slices for the recurrent
//! refiner.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::convolve::{conv2d_into, BorderPolicy};
use crate::error::{Error, Result};
use crate::kernels::{ddl_kernel_set, standard_laplacian, Kernel2D};
use crate::stackio::{FocalStack, StackShape};

/// Default number of dilation rates.
pub const DEFAULT_RATES: u32 = 4;

/// Which focus measure produced a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateDescriptor {
    /// Directional dilated Laplacian at a single dilation rate.
    Single(u32),
    /// Element-wise mean of the single-rate volumes 1..=r.
    CumulativeUpTo(u32),
    /// Standard 3x3 Laplacian baseline.
    Laplacian,
}

/// `slices x height x width` field of non-negative sharpness scores.
#[derive(Debug, Clone)]
pub struct FocusVolume {
    values: Array3<f64>,
    rate: RateDescriptor,
    source: StackShape,
}

impl FocusVolume {
    pub fn from_parts(values: Array3<f64>, rate: RateDescriptor, source: StackShape) -> Result<Self> {
        if values.len_of(Axis(0)) != source.slices
            || values.len_of(Axis(1)) != source.height
            || values.len_of(Axis(2)) != source.width
        {
            return Err(Error::ShapeMismatch("focus volume does not match source stack".into()));
        }
        Ok(Self { values, rate, source })
    }

    pub fn slices(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn height(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    pub fn rate(&self) -> RateDescriptor {
        self.rate
    }

    pub fn source(&self) -> StackShape {
        self.source
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn slice_plane(&self, s: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), s)
    }
}

/// Sharpness evidence from all slices of all rates, depth `rates * slices`,
/// laid out rate-major: `[G1 slices..., G2 slices..., ...]`.
#[derive(Debug, Clone)]
pub struct FocusAggregationMap {
    values: Array3<f64>,
    rates: usize,
    slices_per_rate: usize,
}

impl FocusAggregationMap {
    pub fn depth(&self) -> usize {
        self.values.len_of(Axis(0))
    }

    pub fn height(&self) -> usize {
        self.values.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.values.len_of(Axis(2))
    }

    pub fn rates(&self) -> usize {
        self.rates
    }

    pub fn slices_per_rate(&self) -> usize {
        self.slices_per_rate
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }
}

/// Accumulates squared kernel responses over all orientations and channels
/// for one slice. Direction outer, channel inner matches the definition's
/// summation order, which pins the float accumulation order.
fn squared_response_plane(
    img: &crate::stackio::Image,
    kernels: &[Kernel2D],
    border: BorderPolicy,
    normalizer: f64,
) -> Result<Array2<f64>> {
    let (h, w) = (img.height(), img.width());
    let mut acc = Array2::<f64>::zeros((h, w));
    let mut scratch = Array2::<f64>::zeros((h, w));
    for kernel in kernels {
        for c in 0..img.channels() {
            conv2d_into(img.plane(c), kernel, border, &mut scratch)?;
            acc.zip_mut_with(&scratch, |a, &r| *a += r * r);
        }
    }
    acc.mapv_inplace(|v| v / normalizer);
    Ok(acc)
}

/// DDL focus volume at dilation rate `r`: per slice, the average over the
/// four orientations and all channels of the squared kernel response. The
/// normalizer is `4 * channels`.
pub fn ddl_focus_volume(stack: &FocalStack, r: u32, border: BorderPolicy) -> Result<FocusVolume> {
    if r == 0 {
        return Err(Error::InvalidInput("dilation rate must be >= 1".into()));
    }
    let kernels = ddl_kernel_set(r)?;
    let normalizer = (4 * stack.channels()) as f64;
    let planes: Vec<Array2<f64>> = stack
        .slices()
        .par_iter()
        .map(|img| squared_response_plane(img, &kernels, border, normalizer))
        .collect::<Result<_>>()?;
    volume_from_planes(planes, RateDescriptor::Single(r), stack.shape())
}

/// The set `{G^(1), ..., G^(rates)}`.
pub fn multiscale_volumes(
    stack: &FocalStack,
    rates: u32,
    border: BorderPolicy,
) -> Result<Vec<FocusVolume>> {
    if rates == 0 {
        return Err(Error::InvalidInput("need at least one dilation rate".into()));
    }
    (1..=rates).map(|r| ddl_focus_volume(stack, r, border)).collect()
}

/// Progressive ablation variant: element-wise mean of `volumes[0..r]`.
/// `r` is 1-based. The mean (rather than sum) keeps magnitudes comparable
/// across rates; argmax depth is unaffected by the constant factor.
pub fn cumulative_variant(volumes: &[FocusVolume], r: usize) -> Result<FocusVolume> {
    if r == 0 || r > volumes.len() {
        return Err(Error::InvalidInput(format!(
            "cumulative rate {} out of range 1..={}",
            r,
            volumes.len()
        )));
    }
    let first = &volumes[0];
    for v in &volumes[1..r] {
        if v.values.dim() != first.values.dim() {
            return Err(Error::ShapeMismatch("focus volumes differ in shape".into()));
        }
    }
    let mut acc = first.values.clone();
    for v in &volumes[1..r] {
        acc += &v.values;
    }
    acc /= r as f64;
    FocusVolume::from_parts(acc, RateDescriptor::CumulativeUpTo(r as u32), first.source)
}

/// Stacks all volumes depth-wise in rate order (rate-major, slice-minor).
pub fn aggregation_map(volumes: &[FocusVolume]) -> Result<FocusAggregationMap> {
    if volumes.is_empty() {
        return Err(Error::InvalidInput("aggregation map needs at least one volume".into()));
    }
    let (s, h, w) = volumes[0].values.dim();
    for v in volumes {
        if v.values.dim() != (s, h, w) {
            return Err(Error::ShapeMismatch("focus volumes differ in shape".into()));
        }
    }
    let mut values = Array3::zeros((volumes.len() * s, h, w));
    for (i, v) in volumes.iter().enumerate() {
        values.slice_mut(ndarray::s![i * s..(i + 1) * s, .., ..]).assign(&v.values);
    }
    Ok(FocusAggregationMap { values, rates: volumes.len(), slices_per_rate: s })
}

/// Baseline volume: squared response of the 4-neighbour 3x3 Laplacian,
/// averaged over channels.
pub fn laplacian_focus_volume(stack: &FocalStack, border: BorderPolicy) -> Result<FocusVolume> {
    let kernel = [standard_laplacian()];
    let normalizer = stack.channels() as f64;
    let planes: Vec<Array2<f64>> = stack
        .slices()
        .par_iter()
        .map(|img| squared_response_plane(img, &kernel, border, normalizer))
        .collect::<Result<_>>()?;
    volume_from_planes(planes, RateDescriptor::Laplacian, stack.shape())
}

fn volume_from_planes(
    planes: Vec<Array2<f64>>,
    rate: RateDescriptor,
    source: StackShape,
) -> Result<FocusVolume> {
    let (h, w) = planes[0].dim();
    let mut values = Array3::zeros((planes.len(), h, w));
    for (s, plane) in planes.into_iter().enumerate() {
        values.index_axis_mut(Axis(0), s).assign(&plane);
    }
    FocusVolume::from_parts(values, rate, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stackio::Image;
    use ndarray::Array3 as A3;

    fn gray_stack(planes: Vec<Array2<f64>>) -> FocalStack {
        let n = planes.len();
        let slices = planes.into_iter().map(|p| Image::from_plane(p).unwrap()).collect();
        FocalStack::new(slices, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    fn checkerboard(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(y, x)| ((y + x) % 2) as f64)
    }

    #[test]
    fn constant_stack_gives_zero_volume() {
        let stack = gray_stack(vec![Array2::from_elem((8, 8), 0.5), Array2::from_elem((8, 8), 0.5)]);
        let fv = ddl_focus_volume(&stack, 1, BorderPolicy::Replicate).unwrap();
        assert!(fv.values().iter().all(|&v| v == 0.0));
        let lap = laplacian_focus_volume(&stack, BorderPolicy::Replicate).unwrap();
        assert!(lap.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_center_matches_direct_sum() {
        // Single slice is disallowed by FocalStack, so duplicate it and look
        // at slice 0 only.
        let board = checkerboard(8);
        let stack = gray_stack(vec![board.clone(), board.clone()]);
        let fv = ddl_focus_volume(&stack, 1, BorderPolicy::Replicate).unwrap();
        // Direct summation oracle at the center pixel (4, 4).
        let (y, x) = (4usize, 4usize);
        let mut expected = 0.0;
        let offsets: [[(isize, isize); 2]; 4] =
            [[(0, -1), (0, 1)], [(-1, 1), (1, -1)], [(-1, 0), (1, 0)], [(-1, -1), (1, 1)]];
        for pair in offsets {
            let mut resp = -2.0 * board[(y, x)];
            for (dy, dx) in pair {
                resp += board[((y as isize + dy) as usize, (x as isize + dx) as usize)];
            }
            expected += resp * resp;
        }
        expected /= 4.0;
        assert!((fv.values()[(0, y, x)] - expected).abs() < 1e-12);
    }

    #[test]
    fn grayscale_normalizer_is_four() {
        // A stack whose three RGB channels are identical must produce the
        // same volume as its grayscale reduction.
        let board = checkerboard(10);
        let mut planes = A3::zeros((3, 10, 10));
        for c in 0..3 {
            planes.index_axis_mut(Axis(0), c).assign(&board);
        }
        let rgb = Image::new(planes).unwrap();
        let rgb_stack = FocalStack::new(vec![rgb.clone(), rgb], vec![0.0, 1.0]).unwrap();
        let gray_stack = crate::stackio::to_grayscale(&rgb_stack);
        let fv_rgb = ddl_focus_volume(&rgb_stack, 2, BorderPolicy::Replicate).unwrap();
        let fv_gray = ddl_focus_volume(&gray_stack, 2, BorderPolicy::Replicate).unwrap();
        for (a, b) in fv_rgb.values().iter().zip(fv_gray.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multiscale_returns_requested_rates() {
        let stack = gray_stack(vec![checkerboard(12), checkerboard(12)]);
        let vols = multiscale_volumes(&stack, 4, BorderPolicy::Replicate).unwrap();
        assert_eq!(vols.len(), 4);
        for (i, v) in vols.iter().enumerate() {
            assert_eq!(v.rate(), RateDescriptor::Single(i as u32 + 1));
            assert_eq!(v.slices(), 2);
            assert_eq!((v.height(), v.width()), (12, 12));
        }
        let single = multiscale_volumes(&stack, 1, BorderPolicy::Replicate).unwrap();
        let direct = ddl_focus_volume(&stack, 1, BorderPolicy::Replicate).unwrap();
        assert_eq!(single[0].values(), direct.values());
    }

    #[test]
    fn cumulative_variant_averages() {
        let stack = gray_stack(vec![checkerboard(12), checkerboard(12)]);
        let vols = multiscale_volumes(&stack, 2, BorderPolicy::Replicate).unwrap();
        let c1 = cumulative_variant(&vols, 1).unwrap();
        assert_eq!(c1.values(), vols[0].values());
        let c2 = cumulative_variant(&vols, 2).unwrap();
        for ((a, b), c) in vols[0].values().iter().zip(vols[1].values().iter()).zip(c2.values().iter())
        {
            assert!(((a + b) / 2.0 - c).abs() < 1e-15);
        }
        assert!(cumulative_variant(&vols, 3).is_err());
        assert!(cumulative_variant(&vols, 0).is_err());
    }

    #[test]
    fn cumulative_of_equal_volumes_is_identity() {
        let stack = gray_stack(vec![checkerboard(12), checkerboard(12)]);
        let v = ddl_focus_volume(&stack, 1, BorderPolicy::Replicate).unwrap();
        let four = vec![v.clone(), v.clone(), v.clone(), v.clone()];
        let c = cumulative_variant(&four, 4).unwrap();
        for (a, b) in c.values().iter().zip(v.values().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregation_map_layout_is_rate_major() {
        let stack = gray_stack(vec![checkerboard(8), Array2::from_elem((8, 8), 0.3)]);
        let vols = multiscale_volumes(&stack, 3, BorderPolicy::Replicate).unwrap();
        let u = aggregation_map(&vols).unwrap();
        assert_eq!(u.depth(), 6);
        assert_eq!(u.rates(), 3);
        assert_eq!(u.slices_per_rate(), 2);
        for (i, v) in vols.iter().enumerate() {
            for s in 0..2 {
                assert_eq!(
                    u.values().index_axis(Axis(0), i * 2 + s),
                    v.values().index_axis(Axis(0), s)
                );
            }
        }
        // Single-volume map equals the volume itself.
        let u1 = aggregation_map(&vols[..1]).unwrap();
        assert_eq!(u1.values(), vols[0].values());
    }

    #[test]
    fn intensity_scaling_scales_volume_quadratically() {
        let board = checkerboard(10) * 0.4;
        let scaled = &board * 2.0;
        let s1 = gray_stack(vec![board.clone(), board]);
        let s2 = gray_stack(vec![scaled.clone(), scaled]);
        let f1 = ddl_focus_volume(&s1, 1, BorderPolicy::Replicate).unwrap();
        let f2 = ddl_focus_volume(&s2, 1, BorderPolicy::Replicate).unwrap();
        for (a, b) in f1.values().iter().zip(f2.values().iter()) {
            assert!((4.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_slice_gives_zero_interior() {
        let ramp = Array2::from_shape_fn((16, 16), |(y, x)| 0.02 * x as f64 + 0.03 * y as f64 + 0.1);
        let stack = gray_stack(vec![ramp.clone(), ramp]);
        for r in 1..=4u32 {
            let fv = ddl_focus_volume(&stack, r, BorderPolicy::Replicate).unwrap();
            let m = r as usize;
            for y in m..16 - m {
                for x in m..16 - m {
                    assert!(fv.values()[(0, y, x)].abs() < 1e-28, "r={r} y={y} x={x}");
                }
            }
        }
    }

    #[test]
    fn laplacian_impulse_center_value() {
        let mut plane = Array2::zeros((9, 9));
        plane[(4, 4)] = 0.8;
        let stack = gray_stack(vec![plane.clone(), plane]);
        let fv = laplacian_focus_volume(&stack, BorderPolicy::Zero).unwrap();
        let expected = (-4.0f64 * 0.8).powi(2);
        assert!((fv.values()[(0, 4, 4)] - expected).abs() < 1e-12);
    }

    #[test]
    fn volumes_are_non_negative() {
        let noisy = Array2::from_shape_fn((14, 14), |(y, x)| ((y * 37 + x * 11) % 7) as f64 / 7.0);
        let stack = gray_stack(vec![noisy.clone(), noisy]);
        for r in 1..=4 {
            let fv = ddl_focus_volume(&stack, r, BorderPolicy::Reflect).unwrap();
            assert!(fv.values().iter().all(|&v| v >= 0.0));
        }
    }
}

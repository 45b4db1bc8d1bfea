//! Shared test oracles, independent of the library's fast paths.

use ndarray::{Array2, ArrayView2};
use sff_core::convolve::BorderPolicy;
use sff_core::kernels::Kernel2D;

/// Reference convolution: dense direct summation over every kernel tap with
/// per-pixel border resolution. Deliberately naive; the production sparse
/// path must agree with this bit for bit.
pub fn naive_conv2d(img: ArrayView2<'_, f64>, kernel: &Kernel2D, border: BorderPolicy) -> Array2<f64> {
    let (h, w) = img.dim();
    let taps = kernel.sparse_taps();
    let mut out = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dy, dx, weight) in &taps {
                let sy = resolve(y as isize - dy, h, border);
                let sx = resolve(x as isize - dx, w, border);
                if let (Some(sy), Some(sx)) = (sy, sx) {
                    acc += weight * img[(sy, sx)];
                }
            }
            out[(y, x)] = acc;
        }
    }
    out
}

fn resolve(i: isize, n: usize, border: BorderPolicy) -> Option<usize> {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return Some(i as usize);
    }
    match border {
        BorderPolicy::Replicate => Some(i.clamp(0, n_i - 1) as usize),
        BorderPolicy::Reflect => {
            let folded = if i < 0 { -i - 1 } else { 2 * n_i - 1 - i };
            Some(folded as usize)
        }
        BorderPolicy::Zero => None,
    }
}

/// Small deterministic pseudo-random image, independent of the crate's RNG
/// choices.
pub fn test_image(h: usize, w: usize, salt: u64) -> Array2<f64> {
    let mut state = 0x243F6A8885A308D3u64 ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    Array2::from_shape_fn((h, w), |_| next())
}

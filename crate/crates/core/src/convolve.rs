//! 2-D convolution of single-channel planes with small sparse integer
//! kernels.
//!
//! The engine visits only a kernel's nonzero taps (DDL kernels have three),
//! accumulates in f64, and parallelizes over output rows. Each pixel's taps
//! are applied in one fixed order, so results are bit-identical regardless
//! of thread count.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel2D;

/// What a convolution reads when a tap lands outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// Clamp to the nearest edge pixel. Keeps zero-DC kernels exactly zero
    /// on constant images all the way to the border, so focus volumes grow
    /// no spurious peaks at image edges.
    #[default]
    Replicate,
    /// Mirror about the edge (the edge pixel itself is repeated):
    /// index -1 reads 0, -2 reads 1.
    Reflect,
    /// Out-of-bounds taps read 0.
    Zero,
}

#[inline]
fn map_index(i: isize, n: usize, border: BorderPolicy) -> Option<usize> {
    if (0..n as isize).contains(&i) {
        return Some(i as usize);
    }
    match border {
        BorderPolicy::Replicate => Some(i.clamp(0, n as isize - 1) as usize),
        BorderPolicy::Reflect => {
            // Offsets are < n (kernel no larger than the image), so one fold
            // always lands inside.
            let m = if i < 0 { -i - 1 } else { 2 * n as isize - 1 - i };
            Some(m as usize)
        }
        BorderPolicy::Zero => None,
    }
}

/// `out(p) = sum_q taps(q) * img(p - q)` over the kernel's nonzero taps,
/// with `out` reallocated only when its shape differs from `img`.
pub fn conv2d_into(
    img: ArrayView2<'_, f64>,
    kernel: &Kernel2D,
    border: BorderPolicy,
    out: &mut Array2<f64>,
) -> Result<()> {
    let (h, w) = img.dim();
    if kernel.size() > h.min(w) {
        return Err(Error::InvalidInput(format!(
            "kernel size {} exceeds image extent {}x{}",
            kernel.size(),
            h,
            w
        )));
    }
    if out.dim() != (h, w) {
        *out = Array2::zeros((h, w));
    } else {
        out.fill(0.0);
    }
    let taps = kernel.sparse_taps();

    let owned;
    let src: &[f64] = match img.as_slice() {
        Some(s) => s,
        None => {
            owned = img.to_owned();
            owned.as_slice().expect("owned array is contiguous")
        }
    };

    let out_slice = out.as_slice_mut().expect("freshly shaped array is contiguous");
    out_slice.par_chunks_mut(w).enumerate().for_each(|(y, orow)| {
        for &(dy, dx, weight) in &taps {
            let sy = match map_index(y as isize - dy, h, border) {
                Some(v) => v,
                None => continue,
            };
            let srow = &src[sy * w..(sy + 1) * w];
            // x with in-bounds source column: x - dx in [0, w).
            let x_lo = dx.max(0) as usize;
            let x_hi = (w as isize + dx.min(0)) as usize;
            for (x, o) in orow.iter_mut().enumerate().take(x_lo) {
                if let Some(sx) = map_index(x as isize - dx, w, border) {
                    *o += weight * srow[sx];
                }
            }
            if x_lo < x_hi {
                let shifted = &srow[(x_lo as isize - dx) as usize..(x_hi as isize - dx) as usize];
                for (o, &v) in orow[x_lo..x_hi].iter_mut().zip(shifted) {
                    *o += weight * v;
                }
            }
            for x in x_hi.max(x_lo)..w {
                if let Some(sx) = map_index(x as isize - dx, w, border) {
                    orow[x] += weight * srow[sx];
                }
            }
        }
    });
    Ok(())
}

/// Allocating wrapper around [`conv2d_into`].
pub fn conv2d(
    img: ArrayView2<'_, f64>,
    kernel: &Kernel2D,
    border: BorderPolicy,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(img.dim());
    conv2d_into(img, kernel, border, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ddl_kernel, ddl_kernel_set, standard_laplacian, Orientation};
    use ndarray::Array2;

    #[test]
    fn constant_image_gives_exact_zero() {
        let img = Array2::from_elem((16, 16), 0.7);
        for border in [BorderPolicy::Replicate, BorderPolicy::Reflect] {
            for r in 1..=4 {
                for k in ddl_kernel_set(r).unwrap() {
                    let out = conv2d(img.view(), &k, border).unwrap();
                    assert!(out.iter().all(|&v| v == 0.0), "r={r} {:?}", k.orientation());
                }
            }
            let out = conv2d(img.view(), &standard_laplacian(), border).unwrap();
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn impulse_response_of_standard_laplacian() {
        let mut img = Array2::zeros((9, 9));
        img[(4, 4)] = 1.0;
        let out = conv2d(img.view(), &standard_laplacian(), BorderPolicy::Zero).unwrap();
        assert_eq!(out[(4, 4)], -4.0);
        for (dy, dx) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            assert_eq!(out[((4 + dy) as usize, (4 + dx) as usize)], 1.0);
        }
        assert_eq!(out.iter().filter(|&&v| v != 0.0).count(), 5);
    }

    #[test]
    fn ramp_interior_is_zero_for_ddl() {
        // img(y, x) = x: second difference along any direction vanishes away
        // from the border.
        let img = Array2::from_shape_fn((12, 12), |(_, x)| x as f64);
        for r in 1..=3u32 {
            let k = ddl_kernel(r, Orientation::Deg0).unwrap();
            let out = conv2d(img.view(), &k, BorderPolicy::Replicate).unwrap();
            let ru = r as usize;
            for y in 0..12 {
                for x in ru..12 - ru {
                    assert_eq!(out[(y, x)], 0.0);
                }
            }
            // Replication flattens the ramp outside, so border columns see a
            // one-sided difference.
            assert_ne!(out[(5, 0)], 0.0);
        }
    }

    #[test]
    fn kernel_larger_than_image_errors() {
        let img = Array2::zeros((3, 3));
        let k = ddl_kernel(2, Orientation::Deg0).unwrap(); // 5x5
        assert!(conv2d(img.view(), &k, BorderPolicy::Replicate).is_err());
    }

    #[test]
    fn linearity_within_tolerance() {
        let mut rng_state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            // xorshift for a small deterministic test image
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let f = Array2::from_shape_fn((10, 10), |_| next());
        let g = Array2::from_shape_fn((10, 10), |_| next());
        let (a, b) = (2.5, -1.25);
        let k = ddl_kernel(2, Orientation::Deg45).unwrap();
        let lhs = conv2d((a * &f + b * &g).view(), &k, BorderPolicy::Reflect).unwrap();
        let rhs = a * conv2d(f.view(), &k, BorderPolicy::Reflect).unwrap()
            + b * conv2d(g.view(), &k, BorderPolicy::Reflect).unwrap();
        for (u, v) in lhs.iter().zip(rhs.iter()) {
            let scale = u.abs().max(v.abs()).max(1.0);
            assert!((u - v).abs() / scale < 1e-12);
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let img = Array2::from_shape_fn((33, 29), |(y, x)| ((y * 31 + x * 7) % 13) as f64 / 13.0);
        let k = ddl_kernel(3, Orientation::Deg135).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| conv2d(img.view(), &k, BorderPolicy::Replicate).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
    }
}

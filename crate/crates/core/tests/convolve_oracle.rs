//! The sparse convolution engine against the dense direct-sum reference:
//! results must agree bit for bit for every kernel, border policy, and
//! image geometry we ship.

mod common;

use common::{naive_conv2d, test_image};
use ndarray::Array2;
use sff_core::convolve::{conv2d, BorderPolicy};
use sff_core::kernels::{ddl_kernel, standard_laplacian, Orientation};

const BORDERS: [BorderPolicy; 3] =
    [BorderPolicy::Replicate, BorderPolicy::Reflect, BorderPolicy::Zero];

#[test]
fn sparse_path_matches_naive_reference_bitwise() {
    let shapes = [(9usize, 9usize), (16, 12), (13, 31)];
    for (si, &(h, w)) in shapes.iter().enumerate() {
        let img = test_image(h, w, si as u64);
        for border in BORDERS {
            for r in 1..=4u32 {
                for theta in Orientation::ALL {
                    let kernel = ddl_kernel(r, theta).unwrap();
                    let fast = conv2d(img.view(), &kernel, border).unwrap();
                    let slow = naive_conv2d(img.view(), &kernel, border);
                    assert_eq!(
                        fast, slow,
                        "mismatch at {h}x{w} r={r} theta={theta:?} border={border:?}"
                    );
                }
            }
            let kernel = standard_laplacian();
            let fast = conv2d(img.view(), &kernel, border).unwrap();
            let slow = naive_conv2d(img.view(), &kernel, border);
            assert_eq!(fast, slow, "laplacian mismatch at {h}x{w} border={border:?}");
        }
    }
}

#[test]
fn ramp_with_replicate_border_matches_reference() {
    // img(y, x) = x. Interior columns annihilate; replicated borders break
    // linearity only where a tap is clamped.
    let img = Array2::from_shape_fn((5, 5), |(_, x)| x as f64);
    let kernel = ddl_kernel(1, Orientation::Deg0).unwrap();
    let fast = conv2d(img.view(), &kernel, BorderPolicy::Replicate).unwrap();
    let slow = naive_conv2d(img.view(), &kernel, BorderPolicy::Replicate);
    assert_eq!(fast, slow);
    for y in 0..5 {
        for x in 1..4 {
            assert_eq!(fast[(y, x)], 0.0);
        }
        // Left border: s(-1) replicates s(0), so the second difference
        // becomes 0 + 1 - 2*0 = 1; right border mirrors it.
        assert_eq!(fast[(y, 0)], 1.0);
        assert_eq!(fast[(y, 4)], -1.0);
    }
}

#[test]
fn affine_ramps_vanish_in_the_interior_for_all_kernels() {
    let img = Array2::from_shape_fn((20, 20), |(y, x)| 1.7 * x as f64 - 0.4 * y as f64 + 3.0);
    for r in 1..=4u32 {
        for theta in Orientation::ALL {
            let kernel = ddl_kernel(r, theta).unwrap();
            let out = conv2d(img.view(), &kernel, BorderPolicy::Replicate).unwrap();
            let m = r as usize;
            for y in m..20 - m {
                for x in m..20 - m {
                    assert!(
                        out[(y, x)].abs() < 1e-9,
                        "r={r} theta={theta:?} at ({y},{x}): {}",
                        out[(y, x)]
                    );
                }
            }
        }
    }
    let out = conv2d(img.view(), &standard_laplacian(), BorderPolicy::Replicate).unwrap();
    for y in 1..19 {
        for x in 1..19 {
            assert!(out[(y, x)].abs() < 1e-9);
        }
    }
}

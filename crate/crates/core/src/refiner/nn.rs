//! Minimal dense tensor ops for the forward-only refiner: 3x3 convolutions
//! (stride 1 and 2, zero padding), pooling, bilinear upsampling, channel
//! concatenation, instance normalization, and the elementwise activations.
//!
//! Feature maps are `(channels, height, width)` in standard layout.
//! Convolutions parallelize over output channels and each output value is
//! accumulated in one fixed order, so results do not depend on thread count.

use ndarray::{Array1, Array3, Array4};
use rayon::prelude::*;

pub(crate) type Feature = Array3<f64>;

/// One convolution layer: weight `(out_c, in_c, k, k)` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv2dParams {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
}

impl Conv2dParams {
    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn apply(&self, input: &Feature) -> Feature {
        match self.stride {
            1 => conv3x3_stride1(input, self),
            2 => conv3x3_stride2(input, self),
            s => panic!("unsupported conv stride {s}"),
        }
    }
}

fn conv3x3_stride1(input: &Feature, params: &Conv2dParams) -> Feature {
    let (cin, h, w) = input.dim();
    let cout = params.out_channels();
    assert_eq!(cin, params.in_channels(), "conv input channels");
    let src = input.as_slice().expect("contiguous input");
    let wts = params.weight.as_slice().expect("contiguous weights");
    let mut out = Array3::zeros((cout, h, w));
    let plane = h * w;
    out.as_slice_mut()
        .expect("contiguous output")
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(oc, oplane)| {
            oplane.fill(params.bias[oc]);
            for ic in 0..cin {
                let iplane = &src[ic * plane..(ic + 1) * plane];
                let kw = &wts[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                for y in 0..h {
                    let (orow, rest) = oplane[y * w..].split_at_mut(w);
                    let _ = rest;
                    for ky in 0..3usize {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let irow = &iplane[(sy - 1) * w..sy * w];
                        let k0 = kw[ky * 3];
                        let k1 = kw[ky * 3 + 1];
                        let k2 = kw[ky * 3 + 2];
                        // kx = 0 reads column x-1
                        for (o, &v) in orow[1..].iter_mut().zip(&irow[..w - 1]) {
                            *o += k0 * v;
                        }
                        // kx = 1 is aligned
                        for (o, &v) in orow.iter_mut().zip(irow) {
                            *o += k1 * v;
                        }
                        // kx = 2 reads column x+1
                        for (o, &v) in orow[..w - 1].iter_mut().zip(&irow[1..]) {
                            *o += k2 * v;
                        }
                    }
                }
            }
        });
    out
}

fn conv3x3_stride2(input: &Feature, params: &Conv2dParams) -> Feature {
    let (cin, h, w) = input.dim();
    let cout = params.out_channels();
    assert_eq!(cin, params.in_channels(), "conv input channels");
    assert!(h % 2 == 0 && w % 2 == 0, "stride-2 conv needs even dims");
    let (oh, ow) = (h / 2, w / 2);
    let src = input.as_slice().expect("contiguous input");
    let wts = params.weight.as_slice().expect("contiguous weights");
    let mut out = Array3::zeros((cout, oh, ow));
    let iplane_len = h * w;
    let oplane_len = oh * ow;
    out.as_slice_mut()
        .expect("contiguous output")
        .par_chunks_mut(oplane_len)
        .enumerate()
        .for_each(|(oc, oplane)| {
            oplane.fill(params.bias[oc]);
            for ic in 0..cin {
                let iplane = &src[ic * iplane_len..(ic + 1) * iplane_len];
                let kw = &wts[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ky in 0..3usize {
                            let sy = 2 * oy + ky;
                            if sy < 1 || sy > h {
                                continue;
                            }
                            for kx in 0..3usize {
                                let sx = 2 * ox + kx;
                                if sx < 1 || sx > w {
                                    continue;
                                }
                                acc += kw[ky * 3 + kx] * iplane[(sy - 1) * w + sx - 1];
                            }
                        }
                        oplane[oy * ow + ox] += acc;
                    }
                }
            }
        });
    out
}

pub(crate) fn relu(mut x: Feature) -> Feature {
    x.mapv_inplace(|v| v.max(0.0));
    x
}

pub(crate) fn sigmoid(mut x: Feature) -> Feature {
    x.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
    x
}

pub(crate) fn tanh_map(mut x: Feature) -> Feature {
    x.mapv_inplace(f64::tanh);
    x
}

/// Per-channel zero-mean unit-variance normalization.
pub(crate) fn instance_norm(mut x: Feature, eps: f64) -> Feature {
    let (c, h, w) = x.dim();
    let n = (h * w) as f64;
    for ci in 0..c {
        let mut plane = x.index_axis_mut(ndarray::Axis(0), ci);
        let mean = plane.sum() / n;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = 1.0 / (var + eps).sqrt();
        plane.mapv_inplace(|v| (v - mean) * scale);
    }
    x
}

/// Mean over non-overlapping `factor x factor` windows.
pub fn avg_pool(x: &Feature, factor: usize) -> Feature {
    let (c, h, w) = x.dim();
    assert!(h % factor == 0 && w % factor == 0, "pooling needs divisible dims");
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Array3::zeros((c, oh, ow));
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += x[(ci, oy * factor + dy, ox * factor + dx)];
                    }
                }
                out[(ci, oy, ox)] = acc * norm;
            }
        }
    }
    out
}

/// Bilinear 2x upsampling with half-pixel centers (edge samples clamp).
pub fn bilinear_up2(x: &Feature) -> Feature {
    let (c, h, w) = x.dim();
    let (oh, ow) = (2 * h, 2 * w);
    // Output pixel o samples input coordinate o/2 - 0.25.
    let coords = |o: usize, n: usize| -> (usize, usize, f64) {
        let src = o as f64 * 0.5 - 0.25;
        let floor = src.floor();
        let t = src - floor;
        let i0 = floor.max(0.0) as usize;
        let i1 = (i0 + 1).min(n - 1);
        if floor < 0.0 {
            (0, 0, 0.0)
        } else {
            (i0, i1, t)
        }
    };
    let mut out = Array3::zeros((c, oh, ow));
    for ci in 0..c {
        for oy in 0..oh {
            let (y0, y1, ty) = coords(oy, h);
            for ox in 0..ow {
                let (x0, x1, tx) = coords(ox, w);
                let a = x[(ci, y0, x0)];
                let b = x[(ci, y0, x1)];
                let d = x[(ci, y1, x0)];
                let e = x[(ci, y1, x1)];
                out[(ci, oy, ox)] =
                    (1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * d + tx * e);
            }
        }
    }
    out
}

/// Stacks feature maps along the channel axis in argument order.
pub fn concat_channels(parts: &[&Feature]) -> Feature {
    let (_, h, w) = parts[0].dim();
    let total: usize = parts.iter().map(|p| p.dim().0).sum();
    let mut out = Array3::zeros((total, h, w));
    let mut offset = 0;
    for p in parts {
        let c = p.dim().0;
        assert_eq!((p.dim().1, p.dim().2), (h, w), "concat spatial dims");
        out.slice_mut(ndarray::s![offset..offset + c, .., ..]).assign(p);
        offset += c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array4};

    fn identity_conv(c: usize) -> Conv2dParams {
        let mut weight = Array4::zeros((c, c, 3, 3));
        for i in 0..c {
            weight[(i, i, 1, 1)] = 1.0;
        }
        Conv2dParams { weight, bias: Array1::zeros(c), stride: 1 }
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let x = Array3::from_shape_fn((2, 4, 4), |(c, y, xx)| (c * 16 + y * 4 + xx) as f64);
        let out = identity_conv(2).apply(&x);
        assert_eq!(out, x);
    }

    #[test]
    fn bias_only_conv_outputs_bias() {
        let params = Conv2dParams {
            weight: Array4::zeros((3, 2, 3, 3)),
            bias: Array1::from_vec(vec![1.0, -2.0, 0.5]),
            stride: 1,
        };
        let x = Array3::from_elem((2, 4, 4), 9.0);
        let out = params.apply(&x);
        assert!(out.index_axis(ndarray::Axis(0), 0).iter().all(|&v| v == 1.0));
        assert!(out.index_axis(ndarray::Axis(0), 1).iter().all(|&v| v == -2.0));
        assert!(out.index_axis(ndarray::Axis(0), 2).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_padding_shrinks_edge_sums() {
        // All-ones 3x3 kernel on an all-ones image: interior 9, corner 4.
        let params = Conv2dParams {
            weight: Array4::ones((1, 1, 3, 3)),
            bias: Array1::zeros(1),
            stride: 1,
        };
        let x = Array3::ones((1, 5, 5));
        let out = params.apply(&x);
        assert_eq!(out[(0, 2, 2)], 9.0);
        assert_eq!(out[(0, 0, 0)], 4.0);
        assert_eq!(out[(0, 0, 2)], 6.0);
    }

    #[test]
    fn stride2_halves_dims() {
        let params = Conv2dParams {
            weight: Array4::ones((1, 1, 3, 3)),
            bias: Array1::zeros(1),
            stride: 2,
        };
        let x = Array3::ones((1, 8, 8));
        let out = params.apply(&x);
        assert_eq!(out.dim(), (1, 4, 4));
        // Matches a per-pixel direct sum.
        for oy in 0..4 {
            for ox in 0..4 {
                let mut expect = 0.0;
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        let sy = 2 * oy as isize + ky - 1;
                        let sx = 2 * ox as isize + kx - 1;
                        if (0..8).contains(&sy) && (0..8).contains(&sx) {
                            expect += 1.0;
                        }
                    }
                }
                assert_eq!(out[(0, oy, ox)], expect);
            }
        }
    }

    #[test]
    fn avg_pool_means_blocks() {
        let x = Array3::from_shape_fn((1, 4, 4), |(_, y, xx)| (y * 4 + xx) as f64);
        let out = avg_pool(&x, 2);
        assert_eq!(out[(0, 0, 0)], (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        assert_eq!(out.dim(), (1, 2, 2));
        let out4 = avg_pool(&x, 4);
        assert_eq!(out4[(0, 0, 0)], x.sum() / 16.0);
    }

    #[test]
    fn bilinear_up2_preserves_constants_and_mean() {
        let x = Array3::from_elem((1, 4, 4), 3.25);
        let up = bilinear_up2(&x);
        assert_eq!(up.dim(), (1, 8, 8));
        assert!(up.iter().all(|&v| v == 3.25));
    }

    #[test]
    fn concat_stacks_in_order() {
        let a = Array3::from_elem((2, 2, 2), 1.0);
        let b = Array3::from_elem((1, 2, 2), 2.0);
        let c = concat_channels(&[&a, &b]);
        assert_eq!(c.dim(), (3, 2, 2));
        assert_eq!(c[(0, 0, 0)], 1.0);
        assert_eq!(c[(2, 1, 1)], 2.0);
    }

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let x = Array3::from_shape_fn((2, 4, 4), |(c, y, xx)| (c + y * 4 + xx) as f64);
        let out = instance_norm(x, 1e-9);
        for c in 0..2 {
            let plane = out.index_axis(ndarray::Axis(0), c);
            let mean = plane.sum() / 16.0;
            let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
}

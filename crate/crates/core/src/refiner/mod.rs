//! Forward-only multi-scale ConvGRU depth extractor.
//!
//! The mean image feeds a small residual context encoder that emits three
//! gate-bias volumes (update / reset / candidate) per GRU scale. Three
//! ConvGRUs run at 1/16, 1/8, and 1/4 resolution; each iteration flows
//! coarse to fine (pooled hidden states upward, upsampled hidden states
//! downward), the finest scale fuses the previous depth with the pooled
//! focus aggregation map, and a two-conv head emits a depth update. After
//! the final iteration the 1/4-resolution depth is recovered to full
//! resolution by learned-style convex upsampling: per output pixel a
//! softmax over 9 predicted logits weights the 3x3 coarse neighborhood.
//!
//! Weights are deterministic seeded values (see [`RefinerWeights`]); the
//! module exists to exercise and verify the mechanism, not to ship a
//! trained model. Everything here is bit-reproducible across runs and
//! thread counts.

mod nn;
mod weights;

pub use weights::{GruWeights, RefinerWeights};

use ndarray::{Array2, Array3, Axis};

use crate::classic::{DepthMap, DepthUnit};
use crate::error::{Error, Result};
use crate::focusvol::FocusAggregationMap;
use crate::stackio::Image;

use nn::{instance_norm, relu, sigmoid, tanh_map};

/// Dense feature tensor `(channels, height, width)`.
pub type Feature = ndarray::Array3<f64>;

pub use nn::{avg_pool, bilinear_up2, concat_channels};

/// Hidden-state and bias-volume width at every GRU scale.
pub const HIDDEN_CHANNELS: usize = 128;
/// Upsampling factor from the finest GRU scale to full resolution.
pub const UPSAMPLE_FACTOR: usize = 4;
/// Mask channels: 9 logits per high-res pixel, `factor^2` pixels per cell.
pub const MASK_CHANNELS: usize = 9 * UPSAMPLE_FACTOR * UPSAMPLE_FACTOR;
/// Iteration count used by the full protocol.
pub const DEFAULT_ITERATIONS: usize = 32;

/// The three gate-bias volumes of one GRU scale.
#[derive(Debug, Clone)]
pub struct ScaleBiases {
    pub update: Feature,
    pub reset: Feature,
    pub candidate: Feature,
}

/// Gate biases for all three scales (1/4, 1/8, 1/16).
#[derive(Debug, Clone)]
pub struct ContextBiases {
    pub q4: ScaleBiases,
    pub q8: ScaleBiases,
    pub q16: ScaleBiases,
}

impl ContextBiases {
    fn spatial(&self) -> (usize, usize) {
        let (_, h, w) = self.q4.update.dim();
        (h, w)
    }
}

/// Everything `refine` produces: the final full-resolution depth, every
/// iteration's full-resolution intermediate, the coarse-scale depth plus
/// per-iteration updates for exact telescoping checks, and the final
/// finest-scale hidden state for gate/mask diagnostics.
#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub depth: DepthMap,
    pub intermediates: Vec<DepthMap>,
    pub coarse_depth: Array2<f64>,
    pub coarse_updates: Vec<Array2<f64>>,
    pub final_hidden: Feature,
}

/// Initial hidden state of a scale: its candidate-gate bias squashed into
/// the tanh range the update rule preserves.
pub fn initial_hidden(biases: &ScaleBiases) -> Feature {
    tanh_map(biases.candidate.clone())
}

fn residual_block(x: Feature, convs: &(nn::Conv2dParams, nn::Conv2dParams)) -> Feature {
    let inner = convs.1.apply(&relu(convs.0.apply(&x)));
    relu(x + inner)
}

/// Runs the context encoder on the mean image, producing the nine bias
/// volumes (3 gates x 3 scales) at 128 channels each. Image dimensions must
/// be divisible by 16.
pub fn context_encode(mean_img: &Image, weights: &RefinerWeights) -> Result<ContextBiases> {
    let (h, w) = (mean_img.height(), mean_img.width());
    if h % 16 != 0 || w % 16 != 0 {
        return Err(Error::InvalidInput(format!(
            "refiner needs dimensions divisible by 16, got {h}x{w}"
        )));
    }
    if mean_img.channels() != weights.image_channels {
        return Err(Error::ShapeMismatch(format!(
            "weights built for {} channel(s), image has {}",
            weights.image_channels,
            mean_img.channels()
        )));
    }
    let x = mean_img.planes().clone();
    let stem = relu(instance_norm(weights.stem.apply(&x), 1e-5));
    let mut features = Vec::with_capacity(3);
    let mut cur = stem;
    for i in 0..3 {
        cur = residual_block(relu(weights.stage_down[i].apply(&cur)), &weights.stage_res[i]);
        features.push(cur.clone());
    }
    let mut scales = Vec::with_capacity(3);
    for (i, feat) in features.iter().enumerate() {
        scales.push(ScaleBiases {
            update: weights.heads[i][0].apply(feat),
            reset: weights.heads[i][1].apply(feat),
            candidate: weights.heads[i][2].apply(feat),
        });
    }
    let q16 = scales.pop().expect("three scales");
    let q8 = scales.pop().expect("three scales");
    let q4 = scales.pop().expect("three scales");
    Ok(ContextBiases { q4, q8, q16 })
}

/// Average-pools the aggregation map to the finest GRU resolution (1/4).
pub fn pool_aggregation_to_quarter(u: &FocusAggregationMap) -> Result<Feature> {
    if u.height() % UPSAMPLE_FACTOR != 0 || u.width() % UPSAMPLE_FACTOR != 0 {
        return Err(Error::InvalidInput(format!(
            "aggregation map {}x{} not divisible by {}",
            u.height(),
            u.width(),
            UPSAMPLE_FACTOR
        )));
    }
    Ok(avg_pool(u.values(), UPSAMPLE_FACTOR))
}

fn fuse_features_impl(
    prev_depth: &Array2<f64>,
    u_quarter: &Feature,
    weights: &RefinerWeights,
    nonlinear: bool,
) -> Result<Feature> {
    let (d, h, w) = u_quarter.dim();
    if prev_depth.dim() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "depth {}x{} vs pooled aggregation {}x{}",
            prev_depth.nrows(),
            prev_depth.ncols(),
            h,
            w
        )));
    }
    if d != weights.aggregation_depth {
        return Err(Error::ShapeMismatch(format!(
            "weights fuse {} aggregation channels, map has {d}",
            weights.aggregation_depth
        )));
    }
    let depth_feat = prev_depth
        .clone()
        .into_shape_with_order((1, h, w))
        .expect("reshape");
    let x = concat_channels(&[&depth_feat, u_quarter]);
    let mid = weights.fuse1.apply(&x);
    let mid = if nonlinear { relu(mid) } else { mid };
    Ok(weights.fuse2.apply(&mid))
}

/// Fuses the previous depth estimate with the pooled aggregation map into
/// the feature tensor consumed by the finest GRU.
pub fn fuse_features(
    prev_depth: &Array2<f64>,
    u_quarter: &Feature,
    weights: &RefinerWeights,
) -> Result<Feature> {
    fuse_features_impl(prev_depth, u_quarter, weights, true)
}

fn check_gru_shapes(h_prev: &Feature, aux: &Feature, biases: &ScaleBiases, gru: &GruWeights) -> Result<()> {
    let (hc, hh, hw) = h_prev.dim();
    let (ac, ah, aw) = aux.dim();
    if (hh, hw) != (ah, aw) {
        return Err(Error::ShapeMismatch(format!(
            "hidden {hh}x{hw} vs auxiliary input {ah}x{aw}"
        )));
    }
    if hc + ac != gru.update.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "gru expects {} input channels, got {}",
            gru.update.in_channels(),
            hc + ac
        )));
    }
    if biases.update.dim() != h_prev.dim() {
        return Err(Error::ShapeMismatch("gate bias does not match hidden state".into()));
    }
    Ok(())
}

/// The update and reset gate activations of one GRU step, for diagnostics
/// and range checks. Both are sigmoid outputs in (0, 1).
pub fn gru_gates(
    h_prev: &Feature,
    aux: &Feature,
    biases: &ScaleBiases,
    gru: &GruWeights,
) -> Result<(Feature, Feature)> {
    check_gru_shapes(h_prev, aux, biases, gru)?;
    let x = concat_channels(&[h_prev, aux]);
    let z = sigmoid(gru.update.apply(&x) + &biases.update);
    let r = sigmoid(gru.reset.apply(&x) + &biases.reset);
    Ok((z, r))
}

/// One ConvGRU step: gates from the concatenated `[h, b]`, candidate from
/// `[r ⊙ h, b]`, convex blend `h' = (1-z) h + z h~`. The reset gate uses its
/// own weights, distinct from the update gate's.
pub fn gru_update(
    h_prev: &Feature,
    aux: &Feature,
    biases: &ScaleBiases,
    gru: &GruWeights,
) -> Result<Feature> {
    check_gru_shapes(h_prev, aux, biases, gru)?;
    let x = concat_channels(&[h_prev, aux]);
    let z = sigmoid(gru.update.apply(&x) + &biases.update);
    let r = sigmoid(gru.reset.apply(&x) + &biases.reset);
    let gated = concat_channels(&[&(&r * h_prev), aux]);
    let candidate = tanh_map(gru.candidate.apply(&gated) + &biases.candidate);
    Ok((1.0 - &z) * h_prev + &z * &candidate)
}

fn depth_head(h: &Feature, weights: &RefinerWeights) -> Array2<f64> {
    let out = weights.depth2.apply(&relu(weights.depth1.apply(h)));
    out.index_axis(Axis(0), 0).to_owned()
}

/// Convex upsampling by a fixed factor of 4. `mask_logits` holds 9 logits
/// per high-resolution pixel, channel `sub * 9 + n` where
/// `sub = dy * 4 + dx` indexes the subpixel and `n = ny * 3 + nx` the coarse
/// 3x3 neighbor (replicate border). Softmaxed weights are non-negative and
/// sum to one, so every output lies within its coarse neighborhood's range.
pub fn convex_upsample(coarse: &Array2<f64>, mask_logits: &Array3<f64>) -> Result<Array2<f64>> {
    let (h, w) = coarse.dim();
    let (c, mh, mw) = mask_logits.dim();
    if c != MASK_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "mask must have {MASK_CHANNELS} channels (9 per subpixel), got {c}"
        )));
    }
    if (mh, mw) != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "mask {mh}x{mw} vs coarse depth {h}x{w}"
        )));
    }
    let f = UPSAMPLE_FACTOR;
    let mut out = Array2::zeros((h * f, w * f));
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for i in 0..h {
        for j in 0..w {
            for sub in 0..f * f {
                let base = sub * 9;
                let mut max_logit = f64::NEG_INFINITY;
                for n in 0..9 {
                    max_logit = max_logit.max(mask_logits[(base + n, i, j)]);
                }
                let mut exps = [0.0f64; 9];
                let mut total = 0.0;
                for n in 0..9 {
                    let e = (mask_logits[(base + n, i, j)] - max_logit).exp();
                    exps[n] = e;
                    total += e;
                }
                let mut acc = 0.0;
                for n in 0..9 {
                    let ny = (n / 3) as isize - 1;
                    let nx = (n % 3) as isize - 1;
                    let v = coarse[(clamp(i as isize + ny, h), clamp(j as isize + nx, w))];
                    acc += (exps[n] / total) * v;
                }
                out[(i * f + sub / f, j * f + sub % f)] = acc;
            }
        }
    }
    Ok(out)
}

/// Applies the upsampling-mask head to a finest-scale hidden state,
/// producing the 144-channel logits [`convex_upsample`] consumes.
pub fn upsample_mask(h4: &Feature, weights: &RefinerWeights) -> Feature {
    weights.mask.apply(h4)
}

/// Iterative multi-scale refinement. The initial depth is zero; each
/// iteration updates the coarsest GRU first and the finest last, the finest
/// head emits a depth update, and every intermediate coarse depth is
/// convex-upsampled to full resolution. Returns all `iterations`
/// full-resolution intermediates.
pub fn refine(
    u: &FocusAggregationMap,
    biases: &ContextBiases,
    weights: &RefinerWeights,
    iterations: usize,
) -> Result<RefineOutput> {
    if iterations == 0 {
        return Err(Error::InvalidInput("need at least one refinement iteration".into()));
    }
    let (h, w) = (u.height(), u.width());
    if h % 16 != 0 || w % 16 != 0 {
        return Err(Error::InvalidInput(format!(
            "refiner needs dimensions divisible by 16, got {h}x{w}"
        )));
    }
    if u.depth() != weights.aggregation_depth {
        return Err(Error::ShapeMismatch(format!(
            "weights fuse {} aggregation channels, map has {}",
            weights.aggregation_depth,
            u.depth()
        )));
    }
    if biases.spatial() != (h / 4, w / 4) {
        return Err(Error::ShapeMismatch(
            "context biases were encoded for a different resolution".into(),
        ));
    }
    let u4 = pool_aggregation_to_quarter(u)?;

    let mut h4 = initial_hidden(&biases.q4);
    let mut h8 = initial_hidden(&biases.q8);
    let mut h16 = initial_hidden(&biases.q16);

    let mut depth = Array2::<f64>::zeros((h / 4, w / 4));
    let mut intermediates = Vec::with_capacity(iterations);
    let mut coarse_updates = Vec::with_capacity(iterations);

    for _ in 0..iterations {
        let fused = fuse_features(&depth, &u4, weights)?;
        let b16 = avg_pool(&h8, 2);
        h16 = gru_update(&h16, &b16, &biases.q16, &weights.gru16)?;
        let b8 = concat_channels(&[&avg_pool(&h4, 2), &bilinear_up2(&h16)]);
        h8 = gru_update(&h8, &b8, &biases.q8, &weights.gru8)?;
        let b4 = concat_channels(&[&bilinear_up2(&h8), &fused]);
        h4 = gru_update(&h4, &b4, &biases.q4, &weights.gru4)?;

        let update = depth_head(&h4, weights);
        depth += &update;
        coarse_updates.push(update);

        let mask = upsample_mask(&h4, weights);
        let full = convex_upsample(&depth, &mask)?;
        intermediates.push(DepthMap::new(full, DepthUnit::Index)?);
    }

    Ok(RefineOutput {
        depth: intermediates.last().expect("at least one iteration").clone(),
        intermediates,
        coarse_depth: depth,
        coarse_updates,
        final_hidden: h4,
    })
}

/// Weighted sequence loss: `sum_t alpha^(T-t) * mean((gt - d_t)^2)` with
/// `t = 1..T`, i.e. later iterations weigh more. The per-pixel mean keeps
/// magnitudes resolution-independent.
pub fn sequence_loss(intermediates: &[DepthMap], gt: &DepthMap, alpha: f64) -> Result<f64> {
    if intermediates.is_empty() {
        return Err(Error::InvalidInput("sequence loss needs at least one prediction".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let t_total = intermediates.len();
    let mut loss = 0.0;
    for (t, pred) in intermediates.iter().enumerate() {
        if pred.values.dim() != gt.values.dim() {
            return Err(Error::ShapeMismatch("intermediate does not match ground truth".into()));
        }
        if pred.unit != gt.unit {
            return Err(Error::InvalidInput("intermediate and ground truth units differ".into()));
        }
        let mut acc = 0.0;
        for (p, g) in pred.values.iter().zip(gt.values.iter()) {
            let d = g - p;
            acc += d * d;
        }
        let mse = acc / pred.values.len() as f64;
        loss += alpha.powi((t_total - 1 - t) as i32) * mse;
    }
    Ok(loss)
}

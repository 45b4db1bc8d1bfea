//! Depth-map evaluation: MAE, MSE, RMS, logRMS, AbsRel, SqRel, accuracy
//! under ratio thresholds, BadPix, and Pearson correlation, plus the
//! min-max-normalized RMS used for pseudo-ground-truth comparisons.
//!
//! All reductions run as fixed-shape pairwise sums over row-major term
//! lists, so reports are bit-identical across runs and thread counts.

use serde::{Deserialize, Serialize};

use crate::classic::DepthMap;
use crate::error::{Error, Result};

/// Accuracy ratio thresholds `1.25^k`, k = 1..3.
pub const ACC_THRESHOLDS: [f64; 3] = [1.25, 1.5625, 1.953125];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rms: f64,
    /// RMS of log-depth differences over pixels where both maps are > 0;
    /// NaN when no such pixel exists.
    #[serde(deserialize_with = "nan_if_null")]
    pub log_rms: f64,
    /// Relative errors divide by the ground truth, so a wrong prediction at
    /// ground-truth depth 0 drives them to infinity. Non-finite values
    /// appear as null in JSON.
    #[serde(deserialize_with = "nan_if_null")]
    pub abs_rel: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub sq_rel: f64,
    /// Percentages in [0, 100].
    pub acc_125: f64,
    pub acc_125_2: f64,
    pub acc_125_3: f64,
    /// Percentage of valid pixels with error above the threshold.
    pub badpix: f64,
    pub badpix_threshold: f64,
    /// Pearson correlation; NaN sentinel when either map has zero variance
    /// over the valid pixels (callers should surface a warning).
    #[serde(deserialize_with = "nan_if_null")]
    pub corr: f64,
    pub valid_pixel_count: usize,
    /// Pixels that entered the logRMS mean.
    pub log_rms_pixel_count: usize,
}

/// JSON has no NaN/Inf; they serialize as null and read back as NaN.
fn nan_if_null<'de, D>(deserializer: D) -> std::result::Result<f64, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::NAN))
}

/// Sum with a fixed pairwise association order determined only by length.
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        acc
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Evaluates `pred` against `gt` over the valid pixels (all pixels unless a
/// mask is given). Both maps must share dimensions and unit.
pub fn evaluate(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&ndarray::Array2<bool>>,
    badpix_threshold: f64,
) -> Result<MetricsReport> {
    if pred.unit != gt.unit {
        return Err(Error::InvalidInput("prediction and ground truth use different units".into()));
    }
    if pred.values.dim() != gt.values.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    if !badpix_threshold.is_finite() || badpix_threshold < 0.0 {
        return Err(Error::InvalidInput(format!(
            "badpix threshold must be a non-negative real, got {badpix_threshold}"
        )));
    }
    if let Some(m) = mask {
        if m.dim() != pred.values.dim() {
            return Err(Error::ShapeMismatch("mask does not match map dimensions".into()));
        }
    }

    let mut p = Vec::new();
    let mut g = Vec::new();
    for (idx, (&pv, &gv)) in pred.values.iter().zip(gt.values.iter()).enumerate() {
        let keep = match mask {
            Some(m) => m.as_slice().expect("contiguous")[idx],
            None => true,
        };
        if keep {
            p.push(pv);
            g.push(gv);
        }
    }
    let n = p.len();
    if n == 0 {
        return Err(Error::InvalidInput("no valid pixels to evaluate".into()));
    }
    let nf = n as f64;

    let abs_err: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (a - b).abs()).collect();
    let sq_err: Vec<f64> = p.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).collect();
    let mae = mean(&abs_err);
    let mse = mean(&sq_err);
    let rms = mse.sqrt();

    let log_terms: Vec<f64> = p
        .iter()
        .zip(&g)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| {
            let d = a.ln() - b.ln();
            d * d
        })
        .collect();
    let log_rms_pixel_count = log_terms.len();
    let log_rms = if log_terms.is_empty() { f64::NAN } else { mean(&log_terms).sqrt() };

    // Exact agreement contributes zero relative error even at depth 0,
    // where the literal ratio would be 0/0.
    let abs_rel = mean(
        &p.iter()
            .zip(&g)
            .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() / b })
            .collect::<Vec<_>>(),
    );
    let sq_rel = mean(
        &p.iter()
            .zip(&g)
            .map(|(a, b)| if a == b { 0.0 } else { (a - b) * (a - b) / b })
            .collect::<Vec<_>>(),
    );

    let mut acc_counts = [0usize; 3];
    for (&a, &b) in p.iter().zip(&g) {
        // Equal values are perfectly accurate even at depth 0, where the
        // ratio itself would be 0/0.
        let ratio = if a == b { 1.0 } else { (a / b).max(b / a) };
        for (k, &t) in ACC_THRESHOLDS.iter().enumerate() {
            if ratio < t {
                acc_counts[k] += 1;
            }
        }
    }
    let badpix_count = abs_err.iter().filter(|&&e| e > badpix_threshold).count();

    let corr = pearson(&p, &g);

    Ok(MetricsReport {
        mae,
        mse,
        rms,
        log_rms,
        abs_rel,
        sq_rel,
        acc_125: 100.0 * acc_counts[0] as f64 / nf,
        acc_125_2: 100.0 * acc_counts[1] as f64 / nf,
        acc_125_3: 100.0 * acc_counts[2] as f64 / nf,
        badpix: 100.0 * badpix_count as f64 / nf,
        badpix_threshold,
        corr,
        valid_pixel_count: n,
        log_rms_pixel_count,
    })
}

fn pearson(p: &[f64], g: &[f64]) -> f64 {
    let mp = mean(p);
    let mg = mean(g);
    let dp: Vec<f64> = p.iter().map(|v| v - mp).collect();
    let dg: Vec<f64> = g.iter().map(|v| v - mg).collect();
    let var_p = pairwise_sum(&dp.iter().map(|v| v * v).collect::<Vec<_>>());
    let var_g = pairwise_sum(&dg.iter().map(|v| v * v).collect::<Vec<_>>());
    if var_p <= 0.0 || var_g <= 0.0 {
        return f64::NAN;
    }
    if p == g {
        return 1.0;
    }
    let cov = pairwise_sum(&dp.iter().zip(&dg).map(|(a, b)| a * b).collect::<Vec<_>>());
    (cov / (var_p.sqrt() * var_g.sqrt())).clamp(-1.0, 1.0)
}

/// RMS after min-max normalizing both maps to `[0,1]` independently, which
/// makes the comparison invariant to affine rescaling of either map.
/// Errors when either map is constant (zero range).
pub fn normalized_rms(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    if pred.values.dim() != gt.values.dim() {
        return Err(Error::ShapeMismatch("map dimensions differ".into()));
    }
    let norm = |m: &DepthMap, label: &str| -> Result<Vec<f64>> {
        let lo = m.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            return Err(Error::InvalidInput(format!("{label} map is constant, range is zero")));
        }
        Ok(m.values.iter().map(|v| (v - lo) / (hi - lo)).collect())
    };
    let pn = norm(pred, "prediction")?;
    let gn = norm(gt, "ground-truth")?;
    let sq: Vec<f64> = pn.iter().zip(&gn).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(mean(&sq).sqrt())
}

//! Reconstruction quality metrics and the per-cell metrics record.

pub mod float_serde;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{RingMask, SampledSignal};

/// SSIM window extent, standard deviation and stabilizing constants.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const IOU_THRESHOLD: f64 = 0.5;

fn check_len(pred: &[f64], gt: &[f64], what: &str) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::build(format!("{what}: {} vs {} values", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::build(format!("{what} of empty inputs")));
    }
    Ok(())
}

/// `10·log10(peak² / mse)`; exact agreement gives `+inf`.
pub fn psnr_values(pred: &[f64], gt: &[f64], peak: f64) -> Result<f64> {
    check_len(pred, gt, "psnr")?;
    let mse = compensated_sum(pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b))) / pred.len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

/// Neumaier summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * peak.log10() - 10.0 * mse.log10()
    }
}

/// PSNR over all samples and channels with unit peak.
pub fn psnr(pred: &SampledSignal, gt: &SampledSignal) -> Result<f64> {
    pred.same_layout(gt)?;
    psnr_values(pred.values(), gt.values(), 1.0)
}

/// Normalized 1D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable weighted sums over every fully contained window.
fn filter_valid(img: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * img[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// SSIM of one window from its weighted moments.
pub fn ssim_from_moments(mx: f64, my: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let vx = sxx - mx * mx;
    let vy = syy - my * my;
    let cov = sxy - mx * my;
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM of one `h × w` channel over valid window positions.
pub fn ssim_channel(x: &[f64], y: &[f64], h: usize, w: usize) -> Result<f64> {
    check_len(x, y, "ssim")?;
    if x.len() != h * w {
        return Err(Error::build(format!("ssim: {} values for a {h}x{w} image", x.len())));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::build(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let g = gaussian_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let [mx, my, sxx, syy, sxy] = [x, y, &xx[..], &yy[..], &xy[..]].map(|img| filter_valid(img, h, w, &g));
    let n = mx.len();
    let total: f64 = (0..n).map(|i| ssim_from_moments(mx[i], my[i], sxx[i], syy[i], sxy[i])).sum();
    Ok(total / n as f64)
}

/// Per-channel mean SSIM of 2D signals.
pub fn ssim(pred: &SampledSignal, gt: &SampledSignal) -> Result<f64> {
    pred.same_layout(gt)?;
    if pred.dim() != 2 {
        return Err(Error::build("ssim is defined for 2D signals"));
    }
    let (h, w) = (pred.resolution()[0], pred.resolution()[1]);
    let ch = pred.channels();
    let mut total = 0.0;
    for c in 0..ch {
        let x: Vec<f64> = pred.values().iter().skip(c).step_by(ch).copied().collect();
        let y: Vec<f64> = gt.values().iter().skip(c).step_by(ch).copied().collect();
        total += ssim_channel(&x, &y, h, w)?;
    }
    Ok(total / ch as f64)
}

/// Intersection over union of `{v ≥ threshold}`; an empty union scores 1.
pub fn iou_values(pred: &[f64], gt: &[f64], threshold: f64) -> Result<f64> {
    check_len(pred, gt, "iou")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        let (a, b) = (p >= threshold, g >= threshold);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn iou(pred: &SampledSignal, gt: &SampledSignal, threshold: f64) -> Result<f64> {
    pred.same_layout(gt)?;
    iou_values(pred.values(), gt.values(), threshold)
}

/// PSNR restricted to each mask's pixels, indexed like `masks`; empty masks
/// give `NaN`.
pub fn ring_psnr(pred: &SampledSignal, gt: &SampledSignal, masks: &[RingMask]) -> Result<Vec<f64>> {
    pred.same_layout(gt)?;
    let ch = pred.channels();
    let mut out = Vec::with_capacity(masks.len());
    for m in masks {
        if m.mask.len() != pred.cells() {
            return Err(Error::build(format!(
                "ring mask has {} entries for {} cells",
                m.mask.len(),
                pred.cells()
            )));
        }
        let idx = m.mask.iter().enumerate().filter(|(_, &on)| on).flat_map(|(cell, _)| (0..ch).map(move |c| cell * ch + c));
        let n = idx.clone().count();
        let se = compensated_sum(idx.map(|i| {
            let d = pred.values()[i] - gt.values()[i];
            d * d
        }));
        out.push(if n == 0 { f64::NAN } else { psnr_from_mse(se / n as f64, 1.0) });
    }
    Ok(out)
}

/// Outputs of one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(with = "float_serde::float")]
    pub psnr_db: f64,
    /// 2D only.
    pub ssim: Option<f64>,
    /// 3D only.
    pub iou: Option<f64>,
    /// Star targets only; ring 1 (outermost) first.
    #[serde(with = "float_serde::opt_vec")]
    pub per_ring_psnr: Option<Vec<f64>>,
    pub param_count: usize,
    pub train_s: f64,
    pub infer_s: f64,
    pub seed: u64,
    pub config_hash: String,
}

/// Quality metrics appropriate to the signal's dimensionality.
pub struct Scores {
    pub psnr_db: f64,
    pub ssim: Option<f64>,
    pub iou: Option<f64>,
    pub per_ring_psnr: Option<Vec<f64>>,
}

pub fn score(pred: &SampledSignal, gt: &SampledSignal, rings: Option<&[RingMask]>) -> Result<Scores> {
    let two_d = gt.dim() == 2;
    let big_enough = gt.resolution().iter().all(|&n| n >= SSIM_WINDOW);
    Ok(Scores {
        psnr_db: psnr(pred, gt)?,
        ssim: if two_d && big_enough { Some(ssim(pred, gt)?) } else { None },
        iou: if two_d { None } else { Some(iou(pred, gt, IOU_THRESHOLD)?) },
        per_ring_psnr: rings.map(|m| ring_psnr(pred, gt, m)).transpose()?,
    })
}

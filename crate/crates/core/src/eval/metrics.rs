use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageTensor;

/// Reported for identical images instead of an infinite PSNR.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// PSNR, SSIM and MAE of one image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
}

impl Metrics {
    pub fn compute(pred: &ImageTensor, gt: &ImageTensor) -> Result<Self> {
        Ok(Self {
            psnr: psnr(pred, gt)?,
            ssim: ssim(pred, gt)?,
            mae: mae(pred, gt)?,
        })
    }

    /// Per-field arithmetic mean; `None` for an empty slice.
    pub fn mean(items: &[Metrics]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(Self {
            psnr: items.iter().map(|m| m.psnr).sum::<f64>() / n,
            ssim: items.iter().map(|m| m.ssim).sum::<f64>() / n,
            mae: items.iter().map(|m| m.mae).sum::<f64>() / n,
        })
    }
}

fn same_dims(pred: &ImageTensor, gt: &ImageTensor) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::Data(format!(
            "metric inputs differ in shape: {:?} vs {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    if pred.data().is_empty() {
        return Err(Error::Data("metric inputs are empty".into()));
    }
    Ok(())
}

pub fn mse(pred: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    same_dims(pred, gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for a peak of 1, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(pred: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    let e = mse(pred, gt)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP_DB))
}

pub fn mae(pred: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    same_dims(pred, gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// Normalised 1-D Gaussian taps of the SSIM window.
pub fn ssim_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Gaussian-weighted sums over every valid window position, separably.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(y + k) * ow + x])
                .sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), peak 1,
/// averaged over valid window positions and then over channels.
pub fn ssim(pred: &ImageTensor, gt: &ImageTensor) -> Result<f64> {
    same_dims(pred, gt)?;
    let (h, w, channels) = pred.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Data(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let taps = ssim_taps();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for c in 0..channels {
        let x: Vec<f64> = pred.channel(c).data().iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = gt.channel(c).data().iter().map(|&v| v as f64).collect();
        let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let mx = filter_valid(&x, h, w, &taps);
        let my = filter_valid(&y, h, w, &taps);
        let mxx = filter_valid(&prod(&x, &x), h, w, &taps);
        let myy = filter_valid(&prod(&y, &y), h, w, &taps);
        let mxy = filter_valid(&prod(&x, &y), h, w, &taps);
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(h, w, 3, |_, _, _| rng.random_range(0.0..1.0))
    }

    /// Direct per-window SSIM with explicit 2-D Gaussian weights.
    fn brute_ssim(a: &ImageTensor, b: &ImageTensor) -> f64 {
        let (h, w, ch) = a.dims();
        let g = |d: f64| (-d * d / (2.0 * 1.5 * 1.5)).exp();
        let mut weights = [[0.0f64; 11]; 11];
        let mut norm = 0.0;
        for (i, row) in weights.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = g(i as f64 - 5.0) * g(j as f64 - 5.0);
                norm += *v;
            }
        }
        let (c1, c2) = (0.0001, 0.0009);
        let mut per_channel = 0.0;
        for c in 0..ch {
            let mut acc = 0.0;
            let mut n = 0;
            for y0 in 0..=h - 11 {
                for x0 in 0..=w - 11 {
                    let (mut ma, mut mb) = (0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let wt = weights[i][j] / norm;
                            ma += wt * a.get(y0 + i, x0 + j, c) as f64;
                            mb += wt * b.get(y0 + i, x0 + j, c) as f64;
                        }
                    }
                    let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let wt = weights[i][j] / norm;
                            let da = a.get(y0 + i, x0 + j, c) as f64 - ma;
                            let db = b.get(y0 + i, x0 + j, c) as f64 - mb;
                            va += wt * da * da;
                            vb += wt * db * db;
                            cov += wt * da * db;
                        }
                    }
                    acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    n += 1;
                }
            }
            per_channel += acc / n as f64;
        }
        per_channel / ch as f64
    }

    #[test]
    fn psnr_closed_forms() {
        let a = random_image(1, 8, 8);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let gt = ImageTensor::filled(8, 8, 3, 0.25);
        let pred = ImageTensor::filled(8, 8, 3, 0.375);
        // 0.125 is exact in binary: MSE 1/64
        assert!((psnr(&pred, &gt).unwrap() - 10.0 * 64f64.log10()).abs() < 1e-12);
        let pred = gt.map(|v| v + 0.1);
        assert!((psnr(&pred, &gt).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn psnr_and_mae_match_direct_formula() {
        let (a, b) = (random_image(2, 9, 7), random_image(3, 9, 7));
        let n = a.data().len() as f64;
        let mut se = 0.0;
        let mut ae = 0.0;
        for i in 0..a.data().len() {
            let d = a.data()[i] as f64 - b.data()[i] as f64;
            se += d * d;
            ae += d.abs();
        }
        assert!((psnr(&a, &b).unwrap() - (-10.0 * (se / n).log10())).abs() < 1e-10);
        assert!((mae(&a, &b).unwrap() - ae / n).abs() < 1e-12);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mae_of_constant_offset() {
        let gt = random_image(4, 6, 6).map(|v| v * 0.9);
        let pred = gt.map(|v| v + 0.041);
        assert!((mae(&pred, &gt).unwrap() - 0.041).abs() < 1e-6);
    }

    #[test]
    fn ssim_matches_brute_force() {
        let a = random_image(5, 32, 32);
        let b = ImageTensor::from_fn(32, 32, 3, |y, x, c| {
            (0.6 * a.get(y, x, c) + 0.3 * ((x + 2 * y + c) as f32 * 0.37).sin().abs()).min(1.0)
        });
        assert!((ssim(&a, &b).unwrap() - brute_ssim(&a, &b)).abs() < 1e-6);
        let smooth = ImageTensor::from_fn(32, 32, 3, |y, x, c| 0.5 + 0.4 * ((x as f32 * 0.2 + c as f32).sin() * (y as f32 * 0.15).cos()));
        let shifted = smooth.map(|v| 0.8 * v + 0.05);
        assert!((ssim(&smooth, &shifted).unwrap() - brute_ssim(&smooth, &shifted)).abs() < 1e-6);
    }

    #[test]
    fn ssim_identity_and_anticorrelation() {
        let a = random_image(6, 16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let binary = ImageTensor::from_fn(16, 16, 3, |y, x, _| ((y / 2 + x / 3) % 2) as f32);
        let inverted = binary.map(|v| 1.0 - v);
        assert!(ssim(&inverted, &binary).unwrap() < 0.0);
        assert!(ssim(&ImageTensor::filled(10, 20, 3, 0.5), &ImageTensor::filled(10, 20, 3, 0.5)).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (a, b) = (random_image(7, 12, 12), random_image(7, 12, 13));
        assert!(psnr(&a, &b).is_err());
        assert!(mae(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn taps_are_normalised_and_symmetric() {
        let t = ssim_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(t[i], t[SSIM_WINDOW - 1 - i]);
        }
    }
}

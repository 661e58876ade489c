//! PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xray::Image;
use crate::Real;

/// Value reported in tables when the reconstruction is exact.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_shapes<T: Real>(u: &Image<T>, reference: &Image<T>) -> Result<()> {
    if u.side() != reference.side() {
        return Err(Error::invalid(format!(
            "image sides differ: {} vs {}",
            u.side(),
            reference.side()
        )));
    }
    Ok(())
}

/// Dynamic range of the reference; constant references fall back to 1.
fn data_range<T: Real>(reference: &Image<T>) -> f64 {
    let r = reference.max_value().to_f64_lossy() - reference.min_value().to_f64_lossy();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// `10 log10(range² / MSE)`; `+∞` when the images are identical.
pub fn psnr<T: Real>(u: &Image<T>, reference: &Image<T>) -> Result<f64> {
    check_shapes(u, reference)?;
    let mse = u
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(&a, &b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / u.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let range = data_range(reference);
    Ok(10.0 * (range * range / mse).log10())
}

/// PSNR with the infinite sentinel replaced by [`PSNR_CAP`].
pub fn capped_psnr(value: f64) -> f64 {
    value.min(PSNR_CAP)
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering with a 1D kernel.
fn filter_valid(data: &[f64], side: usize, k: &[f64]) -> (Vec<f64>, usize) {
    let out = side + 1 - k.len();
    let mut tmp = vec![0.0; side * out];
    for r in 0..side {
        for c in 0..out {
            tmp[r * out + c] = k.iter().enumerate().map(|(j, w)| w * data[r * side + c + j]).sum();
        }
    }
    let mut res = vec![0.0; out * out];
    for r in 0..out {
        for c in 0..out {
            res[r * out + c] = k.iter().enumerate().map(|(j, w)| w * tmp[(r + j) * out + c]).sum();
        }
    }
    (res, out)
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03` and the reference's dynamic range, averaged over
/// the positions where the window fits.
pub fn ssim<T: Real>(u: &Image<T>, reference: &Image<T>) -> Result<f64> {
    check_shapes(u, reference)?;
    let side = u.side();
    if side < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs images of side >= {SSIM_WINDOW}")));
    }
    let x: Vec<f64> = u.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let y: Vec<f64> = reference.as_slice().iter().map(|v| v.to_f64_lossy()).collect();
    let l = data_range(reference);
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let k = gaussian_window();

    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let (mx, out) = filter_valid(&x, side, &k);
    let (my, _) = filter_valid(&y, side, &k);
    let (sxx, _) = filter_valid(&xx, side, &k);
    let (syy, _) = filter_valid(&yy, side, &k);
    let (sxy, _) = filter_valid(&xy, side, &k);

    let mut total = 0.0;
    for i in 0..out * out {
        let (a, b) = (mx[i], my[i]);
        let vx = sxx[i] - a * a;
        let vy = syy[i] - b * b;
        let cov = sxy[i] - a * b;
        total += ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (vx + vy + c2));
    }
    Ok(total / (out * out) as f64)
}

/// Per-sample metric lists and their means (PSNR capped before averaging).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub names: Vec<String>,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl MetricReport {
    pub fn push<T: Real>(&mut self, name: impl Into<String>, u: &Image<T>, reference: &Image<T>) -> Result<()> {
        self.names.push(name.into());
        self.psnr.push(capped_psnr(psnr(u, reference)?));
        self.ssim.push(ssim(u, reference)?);
        Ok(())
    }

    pub fn mean_psnr(&self) -> f64 {
        mean(&self.psnr)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(&self.ssim)
    }

    /// `sample,psnr,ssim` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,psnr,ssim\n");
        for ((n, p), q) in self.names.iter().zip(&self.psnr).zip(&self.ssim) {
            s.push_str(&format!("{n},{p:.4},{q:.5}\n"));
        }
        s.push_str(&format!("mean,{:.4},{:.5}\n", self.mean_psnr(), self.mean_ssim()));
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

//! Masked wavelet-domain convolutional correction `C w`.
//!
//! For every target subband `ι`, each source subband `ι′` is resampled to
//! the resolution of `ι` (duplication upwards, block averaging downwards),
//! circularly convolved with the centred `p × p` filter `mask ⊙ ζ[ι, ι′]`
//! and accumulated. A filter larger than a subband wraps around it, so the
//! taps are folded modulo the subband side before transforming.
//!
//! All convolutions run through 2D FFTs whose spectra are kept transposed
//! (rows, transpose, rows); only products of spectra are ever formed, so the
//! orientation never matters.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::masks::FilterMask;
use crate::wavelet::{num_subbands, subband_layout, Subband, WaveletCoeffs};
use crate::Real;

type Spectrum<T> = Vec<Complex<T>>;

#[derive(Clone)]
struct Fft2<T: Real> {
    n: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> Fft2<T> {
    fn new(n: usize, planner: &mut FftPlanner<T>) -> Self {
        Fft2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn transpose(&self, buf: &mut [Complex<T>]) {
        let n = self.n;
        for r in 0..n {
            for c in r + 1..n {
                buf.swap(r * n + c, c * n + r);
            }
        }
    }

    /// Unnormalized forward transform, result transposed.
    fn forward(&self, buf: &mut [Complex<T>]) {
        self.fwd.process(buf);
        self.transpose(buf);
        self.fwd.process(buf);
    }

    /// Exact inverse of [`Fft2::forward`].
    fn inverse(&self, buf: &mut [Complex<T>]) {
        self.inv.process(buf);
        self.transpose(buf);
        self.inv.process(buf);
        let k = T::one() / T::lit((self.n * self.n) as f64);
        for v in buf.iter_mut() {
            *v = *v * k;
        }
    }

    fn forward_real(&self, block: &[T]) -> Spectrum<T> {
        let mut buf: Spectrum<T> = block.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward(&mut buf);
        buf
    }
}

/// Dyadic resampling of a square block from side `a` to side `b`.
pub(crate) fn resample<T: Real>(src: &[T], a: usize, b: usize) -> Vec<T> {
    if a == b {
        return src.to_vec();
    }
    let mut out = vec![T::zero(); b * b];
    if b > a {
        let f = b / a;
        for r in 0..b {
            for c in 0..b {
                out[r * b + c] = src[(r / f) * a + c / f];
            }
        }
    } else {
        let f = a / b;
        let k = T::one() / T::lit((f * f) as f64);
        for r in 0..a {
            for c in 0..a {
                out[(r / f) * b + c / f] += src[r * a + c];
            }
        }
        for v in &mut out {
            *v *= k;
        }
    }
    out
}

/// Transpose of `resample(·, a, b)`: maps a side-`b` block back to side `a`.
pub(crate) fn resample_transpose<T: Real>(src: &[T], b: usize, a: usize) -> Vec<T> {
    if a == b {
        return src.to_vec();
    }
    let mut out = vec![T::zero(); a * a];
    if b > a {
        let f = b / a;
        for r in 0..b {
            for c in 0..b {
                out[(r / f) * a + c / f] += src[r * b + c];
            }
        }
    } else {
        let f = a / b;
        let k = T::one() / T::lit((f * f) as f64);
        for r in 0..a {
            for c in 0..a {
                out[r * a + c] = src[(r / f) * b + c / f] * k;
            }
        }
    }
    out
}

fn check_filters<T: Real>(side: usize, levels: usize, filters: &[T], mask: &FilterMask) -> Result<()> {
    let p = mask.size();
    let q = num_subbands(levels);
    if p % 2 == 0 || p > side {
        return Err(Error::invalid(format!(
            "filter size must be odd and at most the image side {side}, got {p}"
        )));
    }
    if filters.len() != q * q * p * p {
        return Err(Error::invalid(format!(
            "expected {} filter coefficients ({q}×{q} patches of {p}×{p}), got {}",
            q * q * p * p,
            filters.len()
        )));
    }
    Ok(())
}

/// Subband geometry and FFT plans shared by every use of the correction.
#[derive(Clone)]
pub struct CorrectionPlan<T: Real> {
    side: usize,
    levels: usize,
    patch: usize,
    layout: Vec<Subband>,
    sizes: Vec<usize>,
    res: Vec<usize>,
    ffts: Vec<Fft2<T>>,
}

/// Spectra of the masked, folded filters: per target `ι`, `Q` blocks of `s_ι²`.
#[derive(Clone)]
pub struct PreparedFilters<T: Real> {
    spectra: Vec<Spectrum<T>>,
    zero: bool,
}

impl<T: Real> PreparedFilters<T> {
    /// True when every effective filter tap is zero.
    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

/// Spectra of every source subband at every subband resolution.
pub(crate) struct SourceSpectra<T: Real> {
    by_res: Vec<Spectrum<T>>,
}

/// Spectra of every subband at its own resolution.
pub(crate) struct TargetSpectra<T: Real> {
    by_band: Vec<Spectrum<T>>,
}

/// Frequency-domain accumulator for filter gradients.
#[derive(Clone)]
pub(crate) struct FilterGradAccum<T: Real> {
    by_target: Vec<Spectrum<T>>,
}

impl<T: Real> CorrectionPlan<T> {
    pub fn new(side: usize, levels: usize, patch: usize) -> Result<Self> {
        let layout = subband_layout(side, levels)?;
        if patch % 2 == 0 || patch > side {
            return Err(Error::invalid(format!(
                "filter size must be odd and at most the image side {side}, got {patch}"
            )));
        }
        let mut sizes: Vec<usize> = layout.iter().map(|b| b.size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let res = layout
            .iter()
            .map(|b| sizes.iter().position(|&s| s == b.size).unwrap())
            .collect();
        let mut planner = FftPlanner::new();
        let ffts = sizes.iter().map(|&s| Fft2::new(s, &mut planner)).collect();
        Ok(CorrectionPlan {
            side,
            levels,
            patch,
            layout,
            sizes,
            res,
            ffts,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    fn q(&self) -> usize {
        self.layout.len()
    }

    fn check_coeffs(&self, w: &WaveletCoeffs<T>) -> Result<()> {
        if w.side() != self.side || w.levels() != self.levels {
            return Err(Error::invalid(format!(
                "coefficients {}/{} do not match correction {}/{}",
                w.side(),
                w.levels(),
                self.side,
                self.levels
            )));
        }
        Ok(())
    }

    fn fft_of(&self, iota: usize) -> &Fft2<T> {
        &self.ffts[self.res[iota]]
    }

    /// Transforms `mask ⊙ filters` once so that it can be applied many times.
    pub fn prepare(&self, filters: &[T], mask: &FilterMask) -> Result<PreparedFilters<T>> {
        check_filters(self.side, self.levels, filters, mask)?;
        if mask.size() != self.patch {
            return Err(Error::invalid("mask size differs from the plan's filter size"));
        }
        let q = self.q();
        let p = self.patch;
        let h = (p / 2) as isize;
        let support = mask.support();
        let mut zero = true;
        let mut spectra = Vec::with_capacity(q);
        for tgt in 0..q {
            let s = self.layout[tgt].size;
            let fft = self.fft_of(tgt);
            let mut all = Vec::with_capacity(q * s * s);
            for src in 0..q {
                let taps = &filters[(tgt * q + src) * p * p..(tgt * q + src + 1) * p * p];
                let mut buf = vec![Complex::new(T::zero(), T::zero()); s * s];
                for i in 0..p {
                    for j in 0..p {
                        let k = i * p + j;
                        if !support[k] || taps[k] == T::zero() {
                            continue;
                        }
                        zero = false;
                        let r = (i as isize - h).rem_euclid(s as isize) as usize;
                        let c = (j as isize - h).rem_euclid(s as isize) as usize;
                        buf[r * s + c].re += taps[k];
                    }
                }
                fft.forward(&mut buf);
                all.extend(buf);
            }
            spectra.push(all);
        }
        Ok(PreparedFilters { spectra, zero })
    }

    pub(crate) fn source_spectra(&self, w: &WaveletCoeffs<T>) -> SourceSpectra<T> {
        let q = self.q();
        let mut by_res: Vec<Spectrum<T>> = self
            .sizes
            .iter()
            .map(|&s| Vec::with_capacity(q * s * s))
            .collect();
        let mut block = Vec::new();
        for band in &self.layout {
            block.resize(band.area(), T::zero());
            w.extract(band, &mut block);
            for (r, &s) in self.sizes.iter().enumerate() {
                let re = resample(&block, band.size, s);
                by_res[r].extend(self.ffts[r].forward_real(&re));
            }
        }
        SourceSpectra { by_res }
    }

    pub(crate) fn target_spectra(&self, d: &WaveletCoeffs<T>) -> TargetSpectra<T> {
        let mut block = Vec::new();
        let by_band = self
            .layout
            .iter()
            .enumerate()
            .map(|(i, band)| {
                block.resize(band.area(), T::zero());
                d.extract(band, &mut block);
                self.fft_of(i).forward_real(&block)
            })
            .collect();
        TargetSpectra { by_band }
    }

    /// `C w`.
    pub fn apply(&self, filters: &PreparedFilters<T>, w: &WaveletCoeffs<T>) -> Result<WaveletCoeffs<T>> {
        self.check_coeffs(w)?;
        let mut out = WaveletCoeffs::zeros(self.side, self.levels)?;
        if filters.zero {
            return Ok(out);
        }
        let spectra = self.source_spectra(w);
        self.apply_spectra(filters, &spectra, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_spectra(&self, filters: &PreparedFilters<T>, w: &SourceSpectra<T>, out: &mut WaveletCoeffs<T>) {
        let q = self.q();
        for (tgt, band) in self.layout.iter().enumerate() {
            let s2 = band.area();
            let r = self.res[tgt];
            let kern = &filters.spectra[tgt];
            let src = &w.by_res[r];
            let mut acc = vec![Complex::new(T::zero(), T::zero()); s2];
            for j in 0..q {
                let k = &kern[j * s2..(j + 1) * s2];
                let x = &src[j * s2..(j + 1) * s2];
                for ((a, &kv), &xv) in acc.iter_mut().zip(k).zip(x) {
                    *a = *a + kv * xv;
                }
            }
            self.ffts[r].inverse(&mut acc);
            let block: Vec<T> = acc.iter().map(|c| c.re).collect();
            out.accumulate(band, &block);
        }
    }

    /// `Cᵀ d`.
    pub fn apply_transpose(&self, filters: &PreparedFilters<T>, d: &WaveletCoeffs<T>) -> Result<WaveletCoeffs<T>> {
        self.check_coeffs(d)?;
        let mut out = WaveletCoeffs::zeros(self.side, self.levels)?;
        if filters.zero {
            return Ok(out);
        }
        let spectra = self.target_spectra(d);
        self.apply_transpose_spectra(filters, &spectra, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_transpose_spectra(
        &self,
        filters: &PreparedFilters<T>,
        d: &TargetSpectra<T>,
        out: &mut WaveletCoeffs<T>,
    ) {
        let q = self.q();
        for (src, band) in self.layout.iter().enumerate() {
            for (r, &s) in self.sizes.iter().enumerate() {
                let s2 = s * s;
                let mut acc = vec![Complex::new(T::zero(), T::zero()); s2];
                let mut any = false;
                for tgt in (0..q).filter(|&t| self.res[t] == r) {
                    any = true;
                    let k = &filters.spectra[tgt][src * s2..(src + 1) * s2];
                    for ((a, &kv), &dv) in acc.iter_mut().zip(k).zip(&d.by_band[tgt]) {
                        *a = *a + kv.conj() * dv;
                    }
                }
                if !any {
                    continue;
                }
                self.ffts[r].inverse(&mut acc);
                let block: Vec<T> = acc.iter().map(|c| c.re).collect();
                out.accumulate(band, &resample_transpose(&block, s, band.size));
            }
        }
    }

    pub(crate) fn grad_accumulator(&self) -> FilterGradAccum<T> {
        let q = self.q();
        FilterGradAccum {
            by_target: self
                .layout
                .iter()
                .map(|b| vec![Complex::new(T::zero(), T::zero()); q * b.area()])
                .collect(),
        }
    }

    /// Adds `coef · ∂⟨d, C w⟩/∂ζ` (in the frequency domain) to `acc`.
    pub(crate) fn accumulate_filter_grad(
        &self,
        acc: &mut FilterGradAccum<T>,
        coef: T,
        d: &TargetSpectra<T>,
        w: &SourceSpectra<T>,
    ) {
        let q = self.q();
        for (tgt, band) in self.layout.iter().enumerate() {
            let s2 = band.area();
            let dv = &d.by_band[tgt];
            let src = &w.by_res[self.res[tgt]];
            for j in 0..q {
                let g = &mut acc.by_target[tgt][j * s2..(j + 1) * s2];
                let x = &src[j * s2..(j + 1) * s2];
                for ((gv, &a), &b) in g.iter_mut().zip(dv).zip(x) {
                    *gv = *gv + a * b.conj() * coef;
                }
            }
        }
    }

    /// Converts an accumulator into `p × p` tap gradients, zero off the mask.
    pub(crate) fn finish_filter_grad(&self, acc: &FilterGradAccum<T>, mask: &FilterMask) -> Vec<T> {
        let q = self.q();
        let p = self.patch;
        let h = (p / 2) as isize;
        let support = mask.support();
        let mut out = vec![T::zero(); q * q * p * p];
        for (tgt, band) in self.layout.iter().enumerate() {
            let s = band.size;
            let s2 = s * s;
            for src in 0..q {
                let mut g = acc.by_target[tgt][src * s2..(src + 1) * s2].to_vec();
                self.fft_of(tgt).inverse(&mut g);
                let dst = &mut out[(tgt * q + src) * p * p..(tgt * q + src + 1) * p * p];
                for i in 0..p {
                    for j in 0..p {
                        if !support[i * p + j] {
                            continue;
                        }
                        let r = (i as isize - h).rem_euclid(s as isize) as usize;
                        let c = (j as isize - h).rem_euclid(s as isize) as usize;
                        dst[i * p + j] = g[r * s + c].re;
                    }
                }
            }
        }
        out
    }
}

impl<T: Real> FilterGradAccum<T> {
    pub(crate) fn add(&mut self, other: &Self) {
        for (a, b) in self.by_target.iter_mut().zip(&other.by_target) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }
}

/// One-shot `C w` with filters `mask ⊙ filters`, laid out as
/// `filters[((ι·Q + ι′)·p + r)·p + c]`.
pub fn correction_apply<T: Real>(w: &WaveletCoeffs<T>, filters: &[T], mask: &FilterMask) -> Result<WaveletCoeffs<T>> {
    let plan = CorrectionPlan::new(w.side(), w.levels(), mask.size())?;
    let prepared = plan.prepare(filters, mask)?;
    plan.apply(&prepared, w)
}

/// One-shot `Cᵀ d`.
pub fn correction_apply_transpose<T: Real>(
    d: &WaveletCoeffs<T>,
    filters: &[T],
    mask: &FilterMask,
) -> Result<WaveletCoeffs<T>> {
    let plan = CorrectionPlan::new(d.side(), d.levels(), mask.size())?;
    let prepared = plan.prepare(filters, mask)?;
    plan.apply_transpose(&prepared, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AngleSet;
    use crate::masks::{build_mask, MaskKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(side: usize, levels: usize, seed: u64) -> WaveletCoeffs<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
        WaveletCoeffs::from_vec(side, levels, data).unwrap()
    }

    fn full(p: usize) -> FilterMask {
        build_mask(MaskKind::Full, &AngleSet::Full, p, 0).unwrap()
    }

    #[test]
    fn resample_pairs_are_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (a, b) in [(2, 8), (8, 2), (4, 4), (1, 4), (4, 1)] {
            let x: Vec<f64> = (0..a * a).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..b * b).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs: f64 = resample(&x, a, b).iter().zip(&y).map(|(p, q)| p * q).sum();
            let rhs: f64 = x.iter().zip(resample_transpose(&y, b, a)).map(|(p, q)| p * q).sum();
            assert!((lhs - rhs).abs() < 1e-12, "{a}->{b}");
        }
        // averaging undoes duplication
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(resample(&resample(&x, 2, 8), 8, 2), x);
    }

    #[test]
    fn fft_round_trip() {
        let mut planner = FftPlanner::new();
        for n in [1, 2, 4, 8] {
            let f = Fft2::<f64>::new(n, &mut planner);
            let x: Vec<f64> = (0..n * n).map(|i| i as f64 * 0.3 - 1.0).collect();
            let mut s = f.forward_real(&x);
            f.inverse(&mut s);
            for (a, b) in s.iter().zip(&x) {
                assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_filters_give_zero() {
        let w = random_coeffs(16, 2, 3);
        let p = 5;
        let filters = vec![0.0; 7 * 7 * p * p];
        let out = correction_apply(&w, &filters, &full(p)).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centred_deltas_on_the_diagonal_are_the_identity() {
        let w = random_coeffs(32, 3, 4);
        let p = 7;
        let q = 10;
        let mut filters = vec![0.0; q * q * p * p];
        for i in 0..q {
            filters[(i * q + i) * p * p + (p / 2) * p + p / 2] = 1.0;
        }
        let out = correction_apply(&w, &filters, &full(p)).unwrap();
        for (a, b) in out.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn off_diagonal_filter_only_feeds_its_target() {
        let w = random_coeffs(16, 2, 5);
        let p = 3;
        let q = 7;
        let (tgt, src) = (2, 6);
        let mut filters = vec![0.0; q * q * p * p];
        filters[(tgt * q + src) * p * p + 1] = 0.7;
        let out = correction_apply(&w, &filters, &full(p)).unwrap();
        for band in w.layout() {
            let e: f64 = out.view(band.id).unwrap().to_vec().iter().map(|v: &f64| v * v).sum();
            if band.id == tgt {
                assert!(e > 0.0);
            } else {
                assert_eq!(e, 0.0, "band {}", band.id);
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        let w = random_coeffs(8, 1, 0);
        assert!(correction_apply(&w, &vec![0.0; 16 * 81], &full(9)).is_err());
        assert!(correction_apply(&w, &vec![0.0; 3], &full(3)).is_err());
        assert!(CorrectionPlan::<f64>::new(8, 1, 4).is_err());
    }
}

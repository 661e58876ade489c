//! Orthonormal multilevel 2D Haar transform with explicit subband indexing.
//!
//! Layout is the usual nested pyramid: the approximation sits top-left, and
//! each level `s × s` block stores `(h)` top-right, `(v)` bottom-left and `(d)`
//! bottom-right. With `x1` along columns:
//! `(h) = ψ(x1)φ(x2)`, `(v) = φ(x1)ψ(x2)`, `(d) = ψ(x1)ψ(x2)`.
//!
//! Subband ids: `0` is the approximation `(f)`; then `(h), (v), (d)` for each
//! level from coarsest to finest, so `Q = 3·levels + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};
use crate::xray::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    F,
    H,
    V,
    D,
}

/// Location of one subband in the coefficient layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subband {
    pub id: usize,
    /// `log2` of the subband side.
    pub scale: u32,
    pub orientation: Orientation,
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

impl Subband {
    pub fn area(&self) -> usize {
        self.size * self.size
    }
}

/// Subband table for an image of `side` decomposed over `levels` levels.
pub fn subband_layout(side: usize, levels: usize) -> Result<Vec<Subband>> {
    check_shape(side, levels)?;
    let coarse = side >> levels;
    let mut out = vec![Subband {
        id: 0,
        scale: coarse.trailing_zeros(),
        orientation: Orientation::F,
        row0: 0,
        col0: 0,
        size: coarse,
    }];
    for lvl in 0..levels {
        let s = coarse << lvl;
        for (o, r0, c0) in [
            (Orientation::H, 0, s),
            (Orientation::V, s, 0),
            (Orientation::D, s, s),
        ] {
            out.push(Subband {
                id: out.len(),
                scale: s.trailing_zeros(),
                orientation: o,
                row0: r0,
                col0: c0,
                size: s,
            });
        }
    }
    Ok(out)
}

pub fn num_subbands(levels: usize) -> usize {
    3 * levels + 1
}

fn check_shape(side: usize, levels: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::invalid(format!("image side {side} is not a power of two")));
    }
    if levels >= usize::BITS as usize || side % (1usize << levels) != 0 || (side >> levels) == 0 {
        return Err(Error::invalid(format!(
            "image side {side} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// Haar coefficients in the nested layout.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs<T = f64> {
    side: usize,
    levels: usize,
    data: Vec<T>,
}

impl<T: Real> WaveletCoeffs<T> {
    pub fn zeros(side: usize, levels: usize) -> Result<Self> {
        check_shape(side, levels)?;
        Ok(WaveletCoeffs {
            side,
            levels,
            data: vec![T::zero(); side * side],
        })
    }

    pub fn from_vec(side: usize, levels: usize, data: Vec<T>) -> Result<Self> {
        check_shape(side, levels)?;
        if data.len() != side * side {
            return Err(Error::invalid("coefficient count does not match side²"));
        }
        Ok(WaveletCoeffs { side, levels, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn num_subbands(&self) -> usize {
        num_subbands(self.levels)
    }

    pub fn layout(&self) -> Vec<Subband> {
        subband_layout(self.side, self.levels).expect("shape validated at construction")
    }

    pub fn subband(&self, iota: usize) -> Result<Subband> {
        self.layout()
            .get(iota)
            .copied()
            .ok_or_else(|| Error::invalid(format!("subband {iota} out of range (Q = {})", self.num_subbands())))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.side == other.side && self.levels == other.levels
    }

    /// Read-only view of subband `iota`.
    pub fn view(&self, iota: usize) -> Result<SubbandView<'_, T>> {
        let band = self.subband(iota)?;
        Ok(SubbandView {
            band,
            stride: self.side,
            data: &self.data,
        })
    }

    /// Writable view of subband `iota`; writes go straight into the layout.
    pub fn view_mut(&mut self, iota: usize) -> Result<SubbandViewMut<'_, T>> {
        let band = self.subband(iota)?;
        Ok(SubbandViewMut {
            band,
            stride: self.side,
            data: &mut self.data,
        })
    }

    /// Copies subband `band` out as a dense row-major block.
    pub(crate) fn extract(&self, band: &Subband, out: &mut [T]) {
        for r in 0..band.size {
            let src = (band.row0 + r) * self.side + band.col0;
            out[r * band.size..(r + 1) * band.size].copy_from_slice(&self.data[src..src + band.size]);
        }
    }

    /// Adds a dense row-major block into subband `band`.
    pub(crate) fn accumulate(&mut self, band: &Subband, block: &[T]) {
        for r in 0..band.size {
            let dst = (band.row0 + r) * self.side + band.col0;
            for (d, &b) in self.data[dst..dst + band.size]
                .iter_mut()
                .zip(&block[r * band.size..(r + 1) * band.size])
            {
                *d += b;
            }
        }
    }
}

pub struct SubbandView<'a, T> {
    band: Subband,
    stride: usize,
    data: &'a [T],
}

impl<T: Real> SubbandView<'_, T> {
    pub fn band(&self) -> Subband {
        self.band
    }

    pub fn size(&self) -> usize {
        self.band.size
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        assert!(r < self.band.size && c < self.band.size);
        self.data[(self.band.row0 + r) * self.stride + self.band.col0 + c]
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.band.area());
        for r in 0..self.band.size {
            for c in 0..self.band.size {
                v.push(self.get(r, c));
            }
        }
        v
    }
}

pub struct SubbandViewMut<'a, T> {
    band: Subband,
    stride: usize,
    data: &'a mut [T],
}

impl<T: Real> SubbandViewMut<'_, T> {
    pub fn band(&self) -> Subband {
        self.band
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        assert!(r < self.band.size && c < self.band.size);
        self.data[(self.band.row0 + r) * self.stride + self.band.col0 + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        assert!(r < self.band.size && c < self.band.size);
        self.data[(self.band.row0 + r) * self.stride + self.band.col0 + c] = v;
    }

    pub fn fill(&mut self, v: T) {
        for r in 0..self.band.size {
            let start = (self.band.row0 + r) * self.stride + self.band.col0;
            self.data[start..start + self.band.size].fill(v);
        }
    }
}

/// One analysis step on the top-left `s × s` block of `buf` (row stride `stride`).
fn analyze_level<T: Real>(buf: &mut [T], stride: usize, s: usize, tmp: &mut [T]) {
    let half = s / 2;
    let k = T::lit(0.5);
    for r in 0..half {
        for c in 0..half {
            let a = buf[(2 * r) * stride + 2 * c];
            let b = buf[(2 * r) * stride + 2 * c + 1];
            let cc = buf[(2 * r + 1) * stride + 2 * c];
            let d = buf[(2 * r + 1) * stride + 2 * c + 1];
            tmp[r * s + c] = (a + b + cc + d) * k;
            tmp[r * s + half + c] = (a - b + cc - d) * k;
            tmp[(half + r) * s + c] = (a + b - cc - d) * k;
            tmp[(half + r) * s + half + c] = (a - b - cc + d) * k;
        }
    }
    for r in 0..s {
        buf[r * stride..r * stride + s].copy_from_slice(&tmp[r * s..(r + 1) * s]);
    }
}

fn synthesize_level<T: Real>(buf: &mut [T], stride: usize, s: usize, tmp: &mut [T]) {
    let half = s / 2;
    let k = T::lit(0.5);
    for r in 0..half {
        for c in 0..half {
            let ll = buf[r * stride + c];
            let h = buf[r * stride + half + c];
            let v = buf[(half + r) * stride + c];
            let d = buf[(half + r) * stride + half + c];
            tmp[(2 * r) * s + 2 * c] = (ll + h + v + d) * k;
            tmp[(2 * r) * s + 2 * c + 1] = (ll - h + v - d) * k;
            tmp[(2 * r + 1) * s + 2 * c] = (ll + h - v - d) * k;
            tmp[(2 * r + 1) * s + 2 * c + 1] = (ll - h - v + d) * k;
        }
    }
    for r in 0..s {
        buf[r * stride..r * stride + s].copy_from_slice(&tmp[r * s..(r + 1) * s]);
    }
}

/// Multilevel analysis `W u`.
pub fn haar_analyze<T: Real>(u: &Image<T>, levels: usize) -> Result<WaveletCoeffs<T>> {
    let side = u.side();
    check_shape(side, levels)?;
    let mut data = u.as_slice().to_vec();
    analyze_in_place(&mut data, side, levels);
    Ok(WaveletCoeffs { side, levels, data })
}

/// Multilevel synthesis `Wᵀ w`.
pub fn haar_synthesize<T: Real>(w: &WaveletCoeffs<T>) -> Image<T> {
    let mut data = w.data.clone();
    synthesize_in_place(&mut data, w.side, w.levels);
    Image::from_vec(w.side, data).expect("shape validated at construction")
}

pub(crate) fn analyze_in_place<T: Real>(data: &mut [T], side: usize, levels: usize) {
    let mut tmp = vec![T::zero(); side * side];
    let mut s = side;
    for _ in 0..levels {
        analyze_level(data, side, s, &mut tmp);
        s /= 2;
    }
}

pub(crate) fn synthesize_in_place<T: Real>(data: &mut [T], side: usize, levels: usize) {
    let mut tmp = vec![T::zero(); side * side];
    let mut s = side >> levels;
    for _ in 0..levels {
        s *= 2;
        synthesize_level(data, side, s, &mut tmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(side: usize) -> Image<f64> {
        Image::from_fn(side, |r, c| ((r * 7 + c * 13) % 11) as f64 - 3.5 + 0.01 * (r * c) as f64)
    }

    #[test]
    fn constant_image_has_no_details() {
        let u = Image::from_fn(32, |_, _| 2.5);
        let w = haar_analyze(&u, 3).unwrap();
        for band in w.layout() {
            let v: Vec<f64> = w.view(band.id).unwrap().to_vec();
            if band.orientation == Orientation::F {
                let first = v[0];
                assert!(v.iter().all(|x| (x - first).abs() < 1e-12));
            } else {
                assert!(v.iter().all(|x| x.abs() < 1e-12), "band {band:?}");
            }
        }
    }

    #[test]
    fn impulse_butterfly() {
        let mut u = Image::zeros(2);
        u.set(0, 0, 1.0);
        let w = haar_analyze(&u, 1).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn perfect_reconstruction_and_parseval() {
        let u = ramp(64);
        let w = haar_analyze(&u, 3).unwrap();
        assert!((w.norm() - u.norm()).abs() / u.norm() < 1e-12);
        let back = haar_synthesize(&w);
        let err = back
            .as_slice()
            .iter()
            .zip(u.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn layout_tiles_the_square() {
        let bands = subband_layout(128, 3).unwrap();
        assert_eq!(bands.len(), 10);
        assert_eq!(bands[0].size, 16);
        assert_eq!(bands[0].scale, 4);
        let finest_d = bands.last().unwrap();
        assert_eq!(finest_d.orientation, Orientation::D);
        assert_eq!(finest_d.size, 64);
        assert_eq!(bands.iter().map(Subband::area).sum::<usize>(), 128 * 128);
        let mut cover = vec![0u8; 128 * 128];
        for b in &bands {
            for r in b.row0..b.row0 + b.size {
                for c in b.col0..b.col0 + b.size {
                    cover[r * 128 + c] += 1;
                }
            }
        }
        assert!(cover.iter().all(|&k| k == 1));
    }

    #[test]
    fn horizontally_constant_image_has_no_h_energy() {
        let u = Image::from_fn(32, |r, _| (r as f64 * 0.37).sin() + (r % 3) as f64);
        let w = haar_analyze(&u, 3).unwrap();
        for band in w.layout() {
            if band.orientation == Orientation::H || band.orientation == Orientation::D {
                let e: f64 = w.view(band.id).unwrap().to_vec().iter().map(|x| x * x).sum();
                assert!(e < 1e-24, "{band:?} energy {e}");
            }
        }
    }

    #[test]
    fn view_writes_through() {
        let mut w = WaveletCoeffs::<f64>::zeros(16, 2).unwrap();
        {
            let mut v = w.view_mut(4).unwrap();
            v.set(1, 2, 3.0);
        }
        let band = w.subband(4).unwrap();
        assert_eq!(w.as_slice()[(band.row0 + 1) * 16 + band.col0 + 2], 3.0);
        assert!(w.view(7).is_err());
    }

    #[test]
    fn shape_errors() {
        assert!(haar_analyze(&Image::<f64>::zeros(24), 3).is_err());
        assert!(haar_analyze(&Image::<f64>::zeros(8), 4).is_err());
        assert!(haar_analyze(&Image::<f64>::zeros(8), 3).is_ok());
    }

    #[test]
    fn zero_coefficients_synthesize_to_zero() {
        let w = WaveletCoeffs::<f64>::zeros(32, 3).unwrap();
        assert!(haar_synthesize(&w).as_slice().iter().all(|&x| x == 0.0));
    }
}

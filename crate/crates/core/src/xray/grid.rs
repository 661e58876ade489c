use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

/// Square grayscale image, row-major. Pixel `(r, c)` is centred at
/// `x1 = (c − (n−1)/2)·pitch`, `x2 = (r − (n−1)/2)·pitch`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T = f64> {
    side: usize,
    extent: f64,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(side: usize) -> Self {
        Image {
            side,
            extent: 2.0,
            data: vec![T::zero(); side * side],
        }
    }

    pub fn from_vec(side: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::invalid(format!(
                "image of side {side} needs {} values, got {}",
                side * side,
                data.len()
            )));
        }
        Ok(Image {
            side,
            extent: 2.0,
            data,
        })
    }

    /// Builds an image by evaluating `f(row, col)`.
    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                data.push(f(r, c));
            }
        }
        Image {
            side,
            extent: 2.0,
            data,
        }
    }

    pub fn with_extent(mut self, extent: f64) -> Self {
        self.extent = extent;
        self
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.extent / self.side as f64
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.side + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.side + c] = v;
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

    /// Physical centre of pixel `(r, c)` as `(x1, x2)`.
    pub fn pixel_center(&self, r: usize, c: usize) -> [f64; 2] {
        let h = (self.side as f64 - 1.0) / 2.0;
        let p = self.pixel_pitch();
        [(c as f64 - h) * p, (r as f64 - h) * p]
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, k: T) -> Self {
        Image {
            side: self.side,
            extent: self.extent,
            data: self.data.iter().map(|&v| v * k).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            side: self.side,
            extent: self.extent,
            data: self.data.iter().map(|&v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Angle-major grid of line integrals: row `i` holds the projection at angle `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram<T = f64> {
    num_angles: usize,
    num_detectors: usize,
    data: Vec<T>,
}

impl<T: Real> Sinogram<T> {
    pub fn zeros(num_angles: usize, num_detectors: usize) -> Self {
        Sinogram {
            num_angles,
            num_detectors,
            data: vec![T::zero(); num_angles * num_detectors],
        }
    }

    pub fn from_vec(num_angles: usize, num_detectors: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != num_angles * num_detectors {
            return Err(Error::invalid(format!(
                "sinogram {num_angles}x{num_detectors} needs {} values, got {}",
                num_angles * num_detectors,
                data.len()
            )));
        }
        Ok(Sinogram {
            num_angles,
            num_detectors,
            data,
        })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    #[inline]
    pub fn get(&self, angle: usize, det: usize) -> T {
        self.data[angle * self.num_detectors + det]
    }

    pub fn row(&self, angle: usize) -> &[T] {
        &self.data[angle * self.num_detectors..(angle + 1) * self.num_detectors]
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

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, k: T) -> Self {
        Sinogram {
            num_angles: self.num_angles,
            num_detectors: self.num_detectors,
            data: self.data.iter().map(|&v| v * k).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Sinogram<U> {
        Sinogram {
            num_angles: self.num_angles,
            num_detectors: self.num_detectors,
            data: self.data.iter().map(|&v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

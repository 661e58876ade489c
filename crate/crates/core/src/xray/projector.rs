use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{Image, Sinogram};
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::scalar::Real;

/// Minimum amount of work per rayon task for the sparse kernels.
const PAR_MIN_LEN: usize = 64;

/// Matched ray-driven projector with its exact transpose.
///
/// Every ray marches a global grid `t_k = k·Δt`, `Δt = pitch/2`, and samples
/// the image by bilinear interpolation between pixel centres; the weights are
/// merged per pixel and stored once in CSR (rays) and CSC (pixels) order, so
/// `adjoint` is the transpose of `forward` up to summation order.
///
/// `scale` multiplies both directions; after [`Projector::normalized`] the
/// operator has unit spectral norm.
#[derive(Clone, Debug)]
pub struct Projector<T = f64> {
    geometry: ScanGeometry,
    scale: T,
    ray_ptr: Vec<usize>,
    ray_pix: Vec<u32>,
    ray_w: Vec<T>,
    pix_ptr: Vec<usize>,
    pix_ray: Vec<u32>,
    pix_w: Vec<T>,
}

impl<T: Real> Projector<T> {
    /// Raw (unnormalized) projector for `geometry`.
    pub fn new(geometry: &ScanGeometry) -> Result<Self> {
        geometry.validate()?;
        let n = geometry.image_size;
        let nd = geometry.num_detectors;
        let na = geometry.num_angles();
        if n * n > u32::MAX as usize || na * nd > u32::MAX as usize {
            return Err(Error::invalid("geometry too large for 32-bit indices"));
        }

        let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..na * nd)
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map_init(
                || vec![0.0f64; n * n],
                |scratch, ray| trace_ray(geometry, ray / nd, ray % nd, scratch),
            )
            .collect();

        let nnz: usize = rows.iter().map(|r| r.0.len()).sum();
        let mut ray_ptr = Vec::with_capacity(na * nd + 1);
        let mut ray_pix = Vec::with_capacity(nnz);
        let mut ray_w = Vec::with_capacity(nnz);
        ray_ptr.push(0);
        for (pix, w) in rows {
            ray_pix.extend_from_slice(&pix);
            ray_w.extend(w.into_iter().map(T::lit));
            ray_ptr.push(ray_pix.len());
        }

        // transpose by counting sort; entries per pixel stay in ray order
        let mut counts = vec![0usize; n * n + 1];
        for &p in &ray_pix {
            counts[p as usize + 1] += 1;
        }
        for i in 0..n * n {
            counts[i + 1] += counts[i];
        }
        let pix_ptr = counts.clone();
        let mut fill = counts;
        let mut pix_ray = vec![0u32; nnz];
        let mut pix_w = vec![T::zero(); nnz];
        for ray in 0..na * nd {
            for k in ray_ptr[ray]..ray_ptr[ray + 1] {
                let p = ray_pix[k] as usize;
                pix_ray[fill[p]] = ray as u32;
                pix_w[fill[p]] = ray_w[k];
                fill[p] += 1;
            }
        }

        Ok(Projector {
            geometry: geometry.clone(),
            scale: T::one(),
            ray_ptr,
            ray_pix,
            ray_w,
            pix_ptr,
            pix_ray,
            pix_w,
        })
    }

    /// Projector rescaled by `1 / operator_norm`.
    pub fn normalized(geometry: &ScanGeometry, operator_norm: f64) -> Result<Self> {
        if !(operator_norm > 0.0 && operator_norm.is_finite()) {
            return Err(Error::invalid(format!(
                "operator norm must be positive, got {operator_norm}"
            )));
        }
        let mut p = Self::new(geometry)?;
        p.scale = T::lit(1.0 / operator_norm);
        Ok(p)
    }

    pub fn with_scale(mut self, scale: T) -> Self {
        self.scale = scale;
        self
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn nnz(&self) -> usize {
        self.ray_w.len()
    }

    fn check_image(&self, u: &Image<T>) -> Result<()> {
        if u.side() != self.geometry.image_size {
            return Err(Error::invalid(format!(
                "image side {} does not match geometry size {}",
                u.side(),
                self.geometry.image_size
            )));
        }
        Ok(())
    }

    fn check_sinogram(&self, m: &Sinogram<T>) -> Result<()> {
        if m.num_angles() != self.geometry.num_angles()
            || m.num_detectors() != self.geometry.num_detectors
        {
            return Err(Error::invalid(format!(
                "sinogram {}x{} does not match geometry {}x{}",
                m.num_angles(),
                m.num_detectors(),
                self.geometry.num_angles(),
                self.geometry.num_detectors
            )));
        }
        Ok(())
    }

    /// `R u`, scaled.
    pub fn forward(&self, u: &Image<T>) -> Result<Sinogram<T>> {
        self.check_image(u)?;
        let mut out = Sinogram::zeros(self.geometry.num_angles(), self.geometry.num_detectors);
        self.forward_into(u.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `Rᵀ m`, scaled.
    pub fn adjoint(&self, m: &Sinogram<T>) -> Result<Image<T>> {
        self.check_sinogram(m)?;
        let n = self.geometry.image_size;
        let mut out = Image::zeros(n).with_extent(self.geometry.extent());
        self.adjoint_into(m.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `Rᵀ R u`, scaled twice.
    pub fn normal(&self, u: &Image<T>) -> Result<Image<T>> {
        let m = self.forward(u)?;
        self.adjoint(&m)
    }

    pub(crate) fn forward_into(&self, u: &[T], out: &mut [T]) {
        let s = self.scale;
        out.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(ray, o)| {
                let mut acc = T::zero();
                for k in self.ray_ptr[ray]..self.ray_ptr[ray + 1] {
                    acc += self.ray_w[k] * u[self.ray_pix[k] as usize];
                }
                *o = acc * s;
            });
    }

    pub(crate) fn adjoint_into(&self, m: &[T], out: &mut [T]) {
        let s = self.scale;
        out.par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .enumerate()
            .for_each(|(p, o)| {
                let mut acc = T::zero();
                for k in self.pix_ptr[p]..self.pix_ptr[p + 1] {
                    acc += self.pix_w[k] * m[self.pix_ray[k] as usize];
                }
                *o = acc * s;
            });
    }

    /// Image pixels touched by a single ray (for diagnostics and tests).
    pub fn ray_support(&self, angle: usize, det: usize) -> Vec<usize> {
        let ray = angle * self.geometry.num_detectors + det;
        self.ray_pix[self.ray_ptr[ray]..self.ray_ptr[ray + 1]]
            .iter()
            .map(|&p| p as usize)
            .collect()
    }
}

/// Merged bilinear weights of one ray, sorted by pixel index.
fn trace_ray(g: &ScanGeometry, angle: usize, det: usize, scratch: &mut [f64]) -> (Vec<u32>, Vec<f64>) {
    let n = g.image_size;
    let pitch = g.pixel_pitch;
    let omega = g.angles[angle];
    let (sin, cos) = omega.sin_cos();
    let s = g.detector_offset(det);
    let (p1, p2) = (s * cos, s * sin);
    let (d1, d2) = (-sin, cos);

    // samples outside the box of half-width h have no pixel centre within reach
    let h = n as f64 * pitch / 2.0;
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, d) in [(p1, d1), (p2, d2)] {
        if d.abs() < 1e-15 {
            if p.abs() >= h {
                return (Vec::new(), Vec::new());
            }
        } else {
            let a = (-h - p) / d;
            let b = (h - p) / d;
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t0 >= t1 {
        return (Vec::new(), Vec::new());
    }

    let dt = pitch / 2.0;
    let k0 = (t0 / dt).ceil() as i64;
    let k1 = (t1 / dt).floor() as i64;
    let half = (n as f64 - 1.0) / 2.0;
    let mut touched: Vec<u32> = Vec::new();
    for k in k0..=k1 {
        let t = k as f64 * dt;
        let fc = (p1 + t * d1) / pitch + half;
        let fr = (p2 + t * d2) / pitch + half;
        let c0 = fc.floor();
        let r0 = fr.floor();
        let fx = fc - c0;
        let fy = fr - r0;
        let (c0, r0) = (c0 as i64, r0 as i64);
        for (dr, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            let r = r0 + dr;
            if r < 0 || r >= n as i64 || wy == 0.0 {
                continue;
            }
            for (dc, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let c = c0 + dc;
                if c < 0 || c >= n as i64 || wx == 0.0 {
                    continue;
                }
                let idx = r as usize * n + c as usize;
                if scratch[idx] == 0.0 {
                    touched.push(idx as u32);
                }
                scratch[idx] += wx * wy * dt;
            }
        }
    }
    touched.sort_unstable();
    let weights = touched
        .iter()
        .map(|&p| std::mem::take(&mut scratch[p as usize]))
        .collect();
    (touched, weights)
}

/// Free-function form of the raw forward projection.
pub fn radon_forward<T: Real>(u: &Image<T>, g: &ScanGeometry) -> Result<Sinogram<T>> {
    Projector::new(g)?.forward(u)
}

/// Free-function form of the raw backprojection (exact transpose).
pub fn radon_adjoint<T: Real>(m: &Sinogram<T>, g: &ScanGeometry) -> Result<Image<T>> {
    Projector::new(g)?.adjoint(m)
}

/// Spectral norm of the raw operator by power iteration on `RᵀR`.
///
/// Stops once the relative change of the eigenvalue estimate drops below
/// `1e-4` or after `iterations` steps.
pub fn estimate_operator_norm(g: &ScanGeometry, iterations: usize, seed: u64) -> Result<f64> {
    let p = Projector::<f64>::new(g)?;
    power_iteration(&p, iterations, seed)
}

/// Power iteration on the given projector, including its current scale.
pub fn power_iteration(p: &Projector<f64>, iterations: usize, seed: u64) -> Result<f64> {
    if iterations < 10 {
        return Err(Error::invalid("power iteration needs at least 10 iterations"));
    }
    let n = p.geometry().image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut m = vec![0.0; p.geometry().num_angles() * p.geometry().num_detectors];
    let mut y = vec![0.0; n * n];
    let mut lambda = 0.0f64;
    for _ in 0..iterations {
        let nx = crate::scalar::norm2(&x);
        if nx == 0.0 {
            return Err(Error::Numerical("power iteration collapsed to zero".into()));
        }
        x.iter_mut().for_each(|v| *v /= nx);
        p.forward_into(&x, &mut m);
        let rayleigh = crate::scalar::dot(&m, &m);
        p.adjoint_into(&m, &mut y);
        std::mem::swap(&mut x, &mut y);
        let prev = lambda;
        lambda = rayleigh;
        if prev > 0.0 && ((lambda - prev) / lambda).abs() < 1e-4 {
            break;
        }
    }
    Ok(lambda.sqrt())
}

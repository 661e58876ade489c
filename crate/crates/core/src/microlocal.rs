//! Visibility of edge singularities, streak prediction and numerical
//! estimation of the wavelet-domain kernels of the normal operator.
//!
//! Singular directions are tracked only as unsigned normals at a point; an
//! edge is visible when its normal is one of the measured directions, and
//! a streak can emanate along the line through it with normal `ω₀` when its
//! normal coincides with a boundary direction `ω₀` of the angle set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angular_distance, normalize_angle, AngleSet, ScanGeometry, ANGLE_TOL};
use crate::masks::FilterMask;
use crate::phantoms::EllipseSpec;
use crate::wavelet::{haar_analyze, haar_synthesize, num_subbands, WaveletCoeffs};
use crate::xray::{Image, Projector};
use crate::Real;

/// A point singularity with its unsigned normal direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgePoint {
    pub position: [f64; 2],
    pub normal: f64,
}

impl EdgePoint {
    pub fn new(position: [f64; 2], normal: f64) -> Self {
        EdgePoint {
            position,
            normal: normalize_angle(normal),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Visibility {
    Visible,
    Invisible,
    Boundary,
}

/// Line `{x : x·(cos ω, sin ω) = offset}` along which a streak may appear.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreakLine {
    pub omega: f64,
    pub offset: f64,
    pub source: EdgePoint,
}

pub fn classify_visibility(edge: &EdgePoint, angles: &AngleSet) -> Visibility {
    let w = normalize_angle(edge.normal);
    if angles
        .boundary()
        .iter()
        .any(|&b| angular_distance(w, b) <= ANGLE_TOL)
    {
        Visibility::Boundary
    } else if angles.contains(w) {
        Visibility::Visible
    } else {
        Visibility::Invisible
    }
}

/// One streak per `(edge, boundary angle)` pair whose directions agree within `tolerance`.
pub fn predict_streaks(edges: &[EdgePoint], angles: &AngleSet, tolerance: f64) -> Vec<StreakLine> {
    let boundary = angles.boundary();
    let mut out = Vec::new();
    for e in edges {
        for &w0 in &boundary {
            if angular_distance(e.normal, w0) <= tolerance + ANGLE_TOL {
                let (s, c) = w0.sin_cos();
                out.push(StreakLine {
                    omega: w0,
                    offset: e.position[0] * c + e.position[1] * s,
                    source: *e,
                });
            }
        }
    }
    out
}

/// Default streak tolerance: one angular sampling step of the scan.
pub fn default_streak_tolerance(g: &ScanGeometry) -> f64 {
    match &g.angle_set {
        AngleSet::LimitedInterval { .. } if g.num_angles() >= 2 => g.angle_step(),
        _ => {
            // spacing of the measured angles, or π/N if evenly spread
            let mut a = g.angles.clone();
            a.sort_by(f64::total_cmp);
            a.windows(2)
                .map(|w| w[1] - w[0])
                .fold(std::f64::consts::PI / g.num_angles() as f64, f64::min)
        }
    }
}

/// Width (in pixels) of the Gaussian used to differentiate images.
const EDGE_SIGMA: f64 = 1.0;

/// Sampled derivative-of-Gaussian and Gaussian taps on `[−3σ, 3σ]`, the
/// latter normalized to unit sum and the former to unit response on a ramp.
fn gaussian_taps() -> (Vec<f64>, Vec<f64>) {
    let r = (3.0 * EDGE_SIGMA).ceil() as i64;
    let g: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * EDGE_SIGMA * EDGE_SIGMA)).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    let smooth: Vec<f64> = g.iter().map(|v| v / sum).collect();
    let mut deriv: Vec<f64> = (-r..=r).zip(&g).map(|(k, v)| -(k as f64) * v).collect();
    let ramp: f64 = (-r..=r).zip(&deriv).map(|(k, d)| k as f64 * d).sum();
    deriv.iter_mut().for_each(|d| *d /= -ramp);
    (deriv, smooth)
}

/// Pixels whose smoothed gradient magnitude exceeds `threshold`.
///
/// Gradients are derivative-of-Gaussian estimates (σ of one pixel) per unit
/// of physical length; plain central differences misjudge the direction of
/// one-pixel-wide rims by over 15°. The normal is the gradient direction
/// modulo π. Pixels within the filter radius of the border are skipped.
pub fn extract_edges<T: Real>(u: &Image<T>, threshold: f64) -> Result<Vec<EdgePoint>> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("edge threshold must be positive"));
    }
    let n = u.side();
    let h = u.pixel_pitch();
    let (deriv, smooth) = gaussian_taps();
    let r = deriv.len() / 2;
    if n <= 2 * r {
        return Ok(Vec::new());
    }
    let at = |row: usize, col: usize| u.get(row, col).to_f64_lossy();
    // separable passes: along columns first, then along rows
    let mut dx_rows = vec![0.0; n * n];
    let mut sm_rows = vec![0.0; n * n];
    for row in 0..n {
        for col in r..n - r {
            let (mut d, mut s) = (0.0, 0.0);
            for (k, (&wd, &ws)) in deriv.iter().zip(&smooth).enumerate() {
                // deriv[k] multiplies the sample at offset k − r
                let v = at(row, col + k - r);
                d += wd * v;
                s += ws * v;
            }
            dx_rows[row * n + col] = d;
            sm_rows[row * n + col] = s;
        }
    }
    let mut out = Vec::new();
    for row in r..n - r {
        for col in r..n - r {
            let (mut g1, mut g2) = (0.0, 0.0);
            for k in 0..deriv.len() {
                let idx = (row + k - r) * n + col;
                g1 += smooth[k] * dx_rows[idx];
                g2 += deriv[k] * sm_rows[idx];
            }
            let (g1, g2) = (g1 / h, g2 / h);
            if g1.hypot(g2) > threshold {
                out.push(EdgePoint::new(u.pixel_center(row, col), g2.atan2(g1)));
            }
        }
    }
    Ok(out)
}

/// `count` boundary points of an ellipse with their exact normals.
pub fn ellipse_edges(spec: &EllipseSpec, count: usize) -> Vec<EdgePoint> {
    (0..count)
        .map(|k| {
            let (p, n) = spec.boundary_point(std::f64::consts::TAU * k as f64 / count as f64);
            EdgePoint::new(p, n)
        })
        .collect()
}

/// Estimated convolution kernels of `W RᵀR Wᵀ` between every pair of subbands.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelAtlas<T = f64> {
    levels: usize,
    patch: usize,
    filters: Vec<T>,
}

impl<T: Real> KernelAtlas<T> {
    pub fn num_subbands(&self) -> usize {
        num_subbands(self.levels)
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Patch `κ^{ι, ι′}` (target `iota`, source `iota_src`), row-major `p × p`.
    pub fn patch(&self, iota: usize, iota_src: usize) -> &[T] {
        let q = self.num_subbands();
        let p2 = self.patch * self.patch;
        let k = iota * q + iota_src;
        &self.filters[k * p2..(k + 1) * p2]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.filters
    }

    /// Fraction of a patch's energy on the active cells of `mask`.
    pub fn energy_fraction(&self, iota: usize, iota_src: usize, mask: &FilterMask) -> Result<f64> {
        if mask.size() != self.patch {
            return Err(Error::invalid("mask size differs from atlas patch size"));
        }
        let patch = self.patch(iota, iota_src);
        let total: f64 = patch.iter().map(|v| v.to_f64_lossy().powi(2)).sum();
        if total == 0.0 {
            return Ok(1.0);
        }
        let inside: f64 = patch
            .iter()
            .zip(mask.support())
            .filter(|(_, &m)| m)
            .map(|(v, _)| v.to_f64_lossy().powi(2))
            .sum();
        Ok(inside / total)
    }
}

/// Impulse-response estimate of the subband kernels with unit impulses.
pub fn estimate_kernel_atlas<T: Real>(projector: &Projector<T>, levels: usize, patch: usize) -> Result<KernelAtlas<T>> {
    kernel_atlas_with_impulse(projector, levels, patch, T::one())
}

/// As [`estimate_kernel_atlas`] with impulses of the given amplitude.
pub fn kernel_atlas_with_impulse<T: Real>(
    projector: &Projector<T>,
    levels: usize,
    patch: usize,
    amplitude: T,
) -> Result<KernelAtlas<T>> {
    let side = projector.geometry().image_size;
    let layout = WaveletCoeffs::<T>::zeros(side, levels)?.layout();
    let coarse = layout[0].size;
    if patch % 2 == 0 || patch > coarse {
        return Err(Error::invalid(format!(
            "patch size must be odd and at most the coarsest subband side {coarse}, got {patch}"
        )));
    }
    let q = layout.len();
    let half = patch / 2;
    let responses: Vec<Vec<T>> = (0..q)
        .into_par_iter()
        .map(|src| -> Result<Vec<T>> {
            let mut w = WaveletCoeffs::<T>::zeros(side, levels)?;
            let b = layout[src];
            w.view_mut(src)?.set(b.size / 2, b.size / 2, amplitude);
            let u = haar_synthesize(&w);
            let nu = projector.normal(&u)?;
            let response = haar_analyze(&nu, levels)?;
            let mut out = vec![T::zero(); q * patch * patch];
            for (tgt, tb) in layout.iter().enumerate() {
                // impulse centre mapped to the target resolution
                let cr = tb.size / 2;
                let view = response.view(tgt)?;
                for i in 0..patch {
                    for j in 0..patch {
                        let r = (cr + tb.size + i - half) % tb.size;
                        let c = (cr + tb.size + j - half) % tb.size;
                        out[(tgt * patch + i) * patch + j] = view.get(r, c);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let p2 = patch * patch;
    let mut filters = vec![T::zero(); q * q * p2];
    for (src, resp) in responses.iter().enumerate() {
        for tgt in 0..q {
            let dst = (tgt * q + src) * p2;
            filters[dst..dst + p2].copy_from_slice(&resp[tgt * p2..(tgt + 1) * p2]);
        }
    }
    Ok(KernelAtlas {
        levels,
        patch,
        filters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn limited60() -> AngleSet {
        AngleSet::limited(FRAC_PI_3).unwrap()
    }

    #[test]
    fn visibility_examples() {
        let a = limited60();
        assert_eq!(classify_visibility(&EdgePoint::new([0.0; 2], 0.0), &a), Visibility::Visible);
        assert_eq!(
            classify_visibility(&EdgePoint::new([0.0; 2], FRAC_PI_2 - 0.01), &a),
            Visibility::Invisible
        );
        assert_eq!(
            classify_visibility(&EdgePoint::new([0.0; 2], FRAC_PI_3), &a),
            Visibility::Boundary
        );
        // unsigned directions
        assert_eq!(
            classify_visibility(&EdgePoint::new([0.0; 2], FRAC_PI_3 - PI), &a),
            Visibility::Boundary
        );
    }

    #[test]
    fn sparse_sets_have_no_interior() {
        let a = AngleSet::sparse(vec![-FRAC_PI_3, 0.0, FRAC_PI_3], 0.0).unwrap();
        assert_eq!(classify_visibility(&EdgePoint::new([0.0; 2], 0.0), &a), Visibility::Boundary);
        assert_eq!(classify_visibility(&EdgePoint::new([0.0; 2], 0.3), &a), Visibility::Invisible);
        let strips = AngleSet::sparse(vec![-FRAC_PI_3, 0.0, FRAC_PI_3], 0.05).unwrap();
        assert_eq!(classify_visibility(&EdgePoint::new([0.0; 2], 0.03), &strips), Visibility::Visible);
    }

    #[test]
    fn streaks_of_a_disk_are_its_tangents_at_the_cone_edges() {
        let r = 0.5;
        let edges = ellipse_edges(&EllipseSpec::disk([0.0, 0.0], r, 1.0), 360);
        let streaks = predict_streaks(&edges, &limited60(), 0.5f64.to_radians());
        assert_eq!(streaks.len(), 4);
        for s in &streaks {
            assert!((s.omega.abs() - FRAC_PI_3).abs() < 1e-12);
            assert!((s.offset.abs() - r).abs() < 1e-9, "{s:?}");
        }
        let plus = streaks.iter().filter(|s| s.omega > 0.0).count();
        assert_eq!(plus, 2);
    }

    #[test]
    fn no_streaks_without_boundary() {
        let edges = ellipse_edges(&EllipseSpec::disk([0.0, 0.0], 0.5, 1.0), 64);
        assert!(predict_streaks(&edges, &AngleSet::Full, 0.1).is_empty());
        assert!(predict_streaks(&[], &limited60(), 0.1).is_empty());
    }

    #[test]
    fn vertical_step_has_horizontal_normals() {
        let u = Image::from_fn(16, |_, c| if c < 8 { 0.0 } else { 1.0 });
        let edges = extract_edges(&u, 1.0).unwrap();
        assert!(!edges.is_empty());
        assert!(edges.iter().all(|e| e.normal.abs() < 1e-6));
        let flat = Image::from_fn(16, |_, _| 0.3);
        assert!(extract_edges(&flat, 1e-3).unwrap().is_empty());
        assert!(extract_edges(&flat, 0.0).is_err());
    }

    #[test]
    fn atlas_rejects_bad_patch_sizes() {
        let g = ScanGeometry::new(32, limited60(), 20).unwrap();
        let p = Projector::<f64>::new(&g).unwrap();
        assert!(estimate_kernel_atlas(&p, 2, 4).is_err());
        assert!(estimate_kernel_atlas(&p, 2, 9).is_err());
        let zero = kernel_atlas_with_impulse(&p, 2, 3, 0.0).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }
}

//! Unrolled ISTA with a learned wavelet-domain correction, and plain ISTA.
//!
//! One block maps
//! `w ↦ S_{|γ|}(w − α N w + α b − β C w)` with `N = W RᵀR Wᵀ`,
//! `b = W Rᵀ m` and `C` the masked convolutional correction. With `β = 0`
//! (or zero filters), `α_k = α` and `γ_k = αλ` the blocks are ISTA steps.

mod correction;
mod format;

pub use correction::{correction_apply, correction_apply_transpose, CorrectionPlan, PreparedFilters};
pub(crate) use correction::FilterGradAccum;
pub use format::{load_params, read_header, save_params, ParamsHeader, PARAMS_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AngleSet;
use crate::masks::{build_mask, FilterMask};
use crate::wavelet::{haar_analyze, haar_synthesize, num_subbands, WaveletCoeffs};
use crate::xray::{Image, Projector, Sinogram};
use crate::Real;

/// Parameters of one unrolled block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T = f64> {
    pub alpha: T,
    pub beta: T,
    /// Applied as `|gamma|`.
    pub gamma: T,
    /// `Q × Q` patches of `p × p`, `filters[((ι·Q + ι′)·p + r)·p + c]`.
    pub filters: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn zeros(q: usize, p: usize) -> Self {
        LayerParams {
            alpha: T::zero(),
            beta: T::zero(),
            gamma: T::zero(),
            filters: vec![T::zero(); q * q * p * p],
        }
    }

    pub fn len(&self) -> usize {
        3 + self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// All learnable parameters plus the fixed structure they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f64> {
    pub layers: Vec<LayerParams<T>>,
    pub mask: FilterMask,
    pub angle_set: AngleSet,
    pub side: usize,
    pub levels: usize,
    /// Hash of the normalized operator the parameters were trained for.
    pub operator_hash: String,
}

impl<T: Real> NetworkParams<T> {
    /// `blocks` layers initialised so that the network is ISTA with step 1
    /// and threshold `lambda0`: `α = 1`, `β = 1`, `γ = λ₀`, `ζ = 0`.
    pub fn ista_init(
        blocks: usize,
        mask: FilterMask,
        angle_set: AngleSet,
        side: usize,
        levels: usize,
        lambda0: f64,
        operator_hash: impl Into<String>,
    ) -> Result<Self> {
        let q = num_subbands(levels);
        let p = mask.size();
        let layers = (0..blocks)
            .map(|_| LayerParams {
                alpha: T::one(),
                beta: T::one(),
                gamma: T::lit(lambda0),
                filters: vec![T::zero(); q * q * p * p],
            })
            .collect();
        let params = NetworkParams {
            layers,
            mask,
            angle_set,
            side,
            levels,
            operator_hash: operator_hash.into(),
        };
        params.validate()?;
        Ok(params)
    }

    /// Rebuilds the mask from its kind and the stored angle set.
    pub fn with_mask_rebuilt(mut self) -> Result<Self> {
        self.mask = build_mask(self.mask.kind(), &self.angle_set, self.mask.size(), self.mask.q())?;
        Ok(self)
    }

    pub fn blocks(&self) -> usize {
        self.layers.len()
    }

    pub fn patch_size(&self) -> usize {
        self.mask.size()
    }

    pub fn num_subbands(&self) -> usize {
        num_subbands(self.levels)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.num_subbands();
        let p = self.patch_size();
        CorrectionPlan::<T>::new(self.side, self.levels, p)?;
        for (k, l) in self.layers.iter().enumerate() {
            if l.filters.len() != q * q * p * p {
                return Err(Error::invalid(format!("layer {k} has {} filter taps, expected {}", l.filters.len(), q * q * p * p)));
            }
            let finite = l.alpha.is_finite() && l.beta.is_finite() && l.gamma.is_finite();
            if !finite || l.filters.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Number of scalars in the flat representation.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    /// Per layer: `alpha, beta, gamma, filters…`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.push(l.alpha);
            out.push(l.beta);
            out.push(l.gamma);
            out.extend_from_slice(&l.filters);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut i = 0;
        for l in &mut self.layers {
            l.alpha = flat[i];
            l.beta = flat[i + 1];
            l.gamma = flat[i + 2];
            i += 3;
            let n = l.filters.len();
            l.filters.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        Ok(())
    }

    /// Whether flat index `i` is a filter tap outside the mask.
    pub fn is_masked_out(&self, i: usize) -> bool {
        let per_layer = self.layers.first().map_or(0, LayerParams::len);
        if per_layer == 0 {
            return false;
        }
        let j = i % per_layer;
        if j < 3 {
            return false;
        }
        let p2 = self.patch_size() * self.patch_size();
        !self.mask.support()[(j - 3) % p2]
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    alpha: U::lit(l.alpha.to_f64_lossy()),
                    beta: U::lit(l.beta.to_f64_lossy()),
                    gamma: U::lit(l.gamma.to_f64_lossy()),
                    filters: l.filters.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
                })
                .collect(),
            mask: self.mask.clone(),
            angle_set: self.angle_set.clone(),
            side: self.side,
            levels: self.levels,
            operator_hash: self.operator_hash.clone(),
        }
    }
}

/// `S_γ(x) = sign(x)·max(|x| − γ, 0)`.
pub fn shrink<T: Real>(x: T, gamma: T) -> T {
    if x > gamma {
        x - gamma
    } else if x < -gamma {
        x + gamma
    } else {
        T::zero()
    }
}

/// Componentwise soft thresholding.
pub fn soft_threshold<T: Real>(w: &WaveletCoeffs<T>, gamma: T) -> Result<WaveletCoeffs<T>> {
    if !(gamma >= T::zero()) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {gamma}")));
    }
    let data = w.as_slice().iter().map(|&x| shrink(x, gamma)).collect();
    WaveletCoeffs::from_vec(w.side(), w.levels(), data)
}

/// The fixed part `N = W RᵀR Wᵀ` and `b = W Rᵀ m`, evaluated matrix-free.
#[derive(Clone, Copy)]
pub struct NormalOperator<'a, T = f64> {
    projector: &'a Projector<T>,
    levels: usize,
}

impl<'a, T: Real> NormalOperator<'a, T> {
    pub fn new(projector: &'a Projector<T>, levels: usize) -> Result<Self> {
        WaveletCoeffs::<T>::zeros(projector.geometry().image_size, levels)?;
        Ok(NormalOperator { projector, levels })
    }

    pub fn apply(&self, w: &WaveletCoeffs<T>) -> Result<WaveletCoeffs<T>> {
        let nu = self.projector.normal(&haar_synthesize(w))?;
        haar_analyze(&nu, self.levels)
    }

    pub fn rhs(&self, m: &Sinogram<T>) -> Result<WaveletCoeffs<T>> {
        haar_analyze(&self.projector.adjoint(m)?, self.levels)
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T = f64> {
    /// `w⁰ … w^K`.
    pub iterates: Vec<WaveletCoeffs<T>>,
    /// `N w^k`.
    pub normal: Vec<WaveletCoeffs<T>>,
    /// `C_k w^k` (zero when the layer's filters are zero).
    pub correction: Vec<WaveletCoeffs<T>>,
    /// Arguments of the soft threshold.
    pub preactivation: Vec<WaveletCoeffs<T>>,
    pub rhs: WaveletCoeffs<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn blocks(&self) -> usize {
        self.preactivation.len()
    }

    pub fn output(&self) -> Image<T> {
        haar_synthesize(self.iterates.last().expect("trace holds w⁰"))
    }
}

/// Parameters with their filter spectra prepared, bound to a projector.
pub struct Network<'a, T: Real = f64> {
    pub(crate) params: &'a NetworkParams<T>,
    pub(crate) normal: NormalOperator<'a, T>,
    pub(crate) plan: CorrectionPlan<T>,
    pub(crate) filters: Vec<PreparedFilters<T>>,
    pub(crate) filter_scale: T,
}

/// Fixed factor between the stored taps ζ and the filters the correction
/// applies: `1/√(active taps)`. Without it a step of the same size on every
/// tap changes a filter's gain by O(taps), so Adam at the scalars' learning
/// rate blows the correction up; it also keeps masks of different sizes
/// comparable.
pub fn filter_scale(mask: &FilterMask) -> f64 {
    1.0 / (mask.active_count() as f64).sqrt()
}

impl<'a, T: Real> Network<'a, T> {
    pub fn new(projector: &'a Projector<T>, params: &'a NetworkParams<T>) -> Result<Self> {
        params.validate()?;
        if projector.geometry().image_size != params.side {
            return Err(Error::invalid(format!(
                "network expects {}×{} images, projector has side {}",
                params.side,
                params.side,
                projector.geometry().image_size
            )));
        }
        let plan = CorrectionPlan::new(params.side, params.levels, params.patch_size())?;
        let filter_scale = T::lit(filter_scale(&params.mask));
        let filters = params
            .layers
            .iter()
            .map(|l| {
                let scaled: Vec<T> = l.filters.iter().map(|&v| v * filter_scale).collect();
                plan.prepare(&scaled, &params.mask)
            })
            .collect::<Result<_>>()?;
        Ok(Network {
            params,
            normal: NormalOperator::new(projector, params.levels)?,
            plan,
            filters,
            filter_scale,
        })
    }

    pub fn params(&self) -> &NetworkParams<T> {
        self.params
    }

    /// Runs all blocks from `w0`, defaulting to `b = W Rᵀ m`.
    pub fn forward(&self, m: &Sinogram<T>, w0: Option<&WaveletCoeffs<T>>) -> Result<ForwardTrace<T>> {
        let b = self.normal.rhs(m)?;
        let start = match w0 {
            Some(w) => {
                if !w.same_shape(&b) {
                    return Err(Error::invalid("initial coefficients do not match the network shape"));
                }
                w.clone()
            }
            None => b.clone(),
        };
        let k = self.params.blocks();
        let mut trace = ForwardTrace {
            iterates: Vec::with_capacity(k + 1),
            normal: Vec::with_capacity(k),
            correction: Vec::with_capacity(k),
            preactivation: Vec::with_capacity(k),
            rhs: b,
        };
        trace.iterates.push(start);
        for (layer, filt) in self.params.layers.iter().zip(&self.filters) {
            let w = trace.iterates.last().unwrap();
            let nw = self.normal.apply(w)?;
            let cw = self.plan.apply(filt, w)?;
            let gamma = layer.gamma.abs();
            let mut z = w.clone();
            let mut next = w.clone();
            for (i, (zv, nv)) in z.as_mut_slice().iter_mut().zip(next.as_mut_slice()).enumerate() {
                let x = w.as_slice()[i] - layer.alpha * nw.as_slice()[i] + layer.alpha * trace.rhs.as_slice()[i]
                    - layer.beta * cw.as_slice()[i];
                *zv = x;
                *nv = shrink(x, gamma);
            }
            trace.normal.push(nw);
            trace.correction.push(cw);
            trace.preactivation.push(z);
            trace.iterates.push(next);
        }
        Ok(trace)
    }

    pub fn reconstruct(&self, m: &Sinogram<T>) -> Result<Image<T>> {
        Ok(self.forward(m, None)?.output())
    }
}

/// Forward pass returning the reconstruction and the per-layer trace.
pub fn psidonet_forward<T: Real>(
    m: &Sinogram<T>,
    projector: &Projector<T>,
    params: &NetworkParams<T>,
    w0: Option<&WaveletCoeffs<T>>,
) -> Result<(Image<T>, ForwardTrace<T>)> {
    let trace = Network::new(projector, params)?.forward(m, w0)?;
    Ok((trace.output(), trace))
}

/// Plain ISTA on `½‖R Wᵀ w − m‖² + λ‖w‖₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IstaConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub levels: usize,
}

impl IstaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("step must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// All ISTA iterates `w⁰ … w^K`, starting from `w⁰ = W Rᵀ m`.
///
/// Written in residual form `w − α W Rᵀ(R Wᵀ w − m)`, independently of the
/// network's block arithmetic.
pub fn ista_iterates<T: Real>(m: &Sinogram<T>, projector: &Projector<T>, cfg: &IstaConfig) -> Result<Vec<WaveletCoeffs<T>>> {
    cfg.validate()?;
    let alpha = T::lit(cfg.alpha);
    let gamma = T::lit(cfg.alpha * cfg.lambda);
    let mut w = haar_analyze(&projector.adjoint(m)?, cfg.levels)?;
    let mut out = Vec::with_capacity(cfg.iterations + 1);
    out.push(w.clone());
    for _ in 0..cfg.iterations {
        let mut r = projector.forward(&haar_synthesize(&w))?;
        for (a, &b) in r.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *a -= b;
        }
        let g = haar_analyze(&projector.adjoint(&r)?, cfg.levels)?;
        for (x, &gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *x = shrink(*x - alpha * gv, gamma);
        }
        out.push(w.clone());
    }
    Ok(out)
}

pub fn ista_solve<T: Real>(m: &Sinogram<T>, projector: &Projector<T>, cfg: &IstaConfig) -> Result<Image<T>> {
    let it = ista_iterates(m, projector, cfg)?;
    Ok(haar_synthesize(it.last().unwrap()))
}

/// `½‖R Wᵀ w − m‖² + λ‖w‖₁`.
pub fn ista_objective<T: Real>(w: &WaveletCoeffs<T>, m: &Sinogram<T>, projector: &Projector<T>, lambda: f64) -> Result<f64> {
    let r = projector.forward(&haar_synthesize(w))?;
    let fit: f64 = r
        .as_slice()
        .iter()
        .zip(m.as_slice())
        .map(|(&a, &b)| (a - b).to_f64_lossy().powi(2))
        .sum();
    let l1: f64 = w.as_slice().iter().map(|v| v.to_f64_lossy().abs()).sum();
    Ok(0.5 * fit + lambda * l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ScanGeometry;
    use crate::masks::MaskKind;

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(2.0, 1.0), 1.0);
        assert_eq!(shrink(-2.0, 1.0), -1.0);
        assert_eq!(shrink(0.5, 1.0), 0.0);
        let w = WaveletCoeffs::from_vec(2, 1, vec![1.0, -3.0, 0.2, 0.0]).unwrap();
        assert_eq!(soft_threshold(&w, 0.0).unwrap(), w);
        assert!(soft_threshold(&w, -1.0).is_err());
    }

    #[test]
    fn flat_round_trip_and_mask_lookup() {
        let angles = AngleSet::limited(std::f64::consts::FRAC_PI_4).unwrap();
        let mask = build_mask(MaskKind::X, &angles, 3, 0).unwrap();
        let mut p = NetworkParams::<f64>::ista_init(2, mask, angles, 8, 1, 0.1, "h").unwrap();
        let flat: Vec<f64> = (0..p.num_params()).map(|i| i as f64).collect();
        p.set_flat(&flat).unwrap();
        assert_eq!(p.to_flat(), flat);
        assert_eq!(p.layers[1].alpha, p.layers[0].len() as f64);
        // X at π/4, p = 3: only the two diagonals
        assert!(!p.is_masked_out(0));
        assert!(!p.is_masked_out(3));
        assert!(p.is_masked_out(4));
        assert!(!p.is_masked_out(7));
        assert!(p.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn empty_unroll_returns_initial_image() {
        let g = ScanGeometry::new(16, AngleSet::Full, 8).unwrap();
        let proj = Projector::<f64>::new(&g).unwrap();
        let mask = build_mask(MaskKind::Full, &AngleSet::Full, 3, 0).unwrap();
        let params = NetworkParams::<f64>::ista_init(0, mask, AngleSet::Full, 16, 2, 0.1, "").unwrap();
        let m = Sinogram::from_vec(8, g.num_detectors, (0..8 * g.num_detectors).map(|i| (i % 5) as f64).collect()).unwrap();
        let w0 = haar_analyze(&Image::from_fn(16, |r, c| (r + 2 * c) as f64), 2).unwrap();
        let (u, trace) = psidonet_forward(&m, &proj, &params, Some(&w0)).unwrap();
        assert_eq!(trace.blocks(), 0);
        assert_eq!(u, haar_synthesize(&w0));
    }
}

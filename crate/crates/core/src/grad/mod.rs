//! Reverse-mode gradients of the unrolled network and the Adam optimizer.
//!
//! The differentiated objective is `½‖u_K − t‖²`; [`LossValue`] reports it
//! together with the mean squared error.

mod train;

pub use train::{mean_psnr, train, train_samples, validation_count, EpochReport, TrainConfig, TrainLogRow, TrainOutcome, GRAD_CHUNK};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unrolled::{FilterGradAccum, ForwardTrace, LayerParams, Network, NetworkParams};
use crate::wavelet::haar_analyze;
use crate::xray::{Image, Projector, Sinogram};
use crate::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    /// `½‖u − t‖²`.
    pub objective: f64,
    /// `‖u − t‖² / n²`.
    pub mse: f64,
}

/// Gradients shaped like the parameters; taps outside the mask are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradients<T = f64> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> ParamGradients<T> {
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.alpha);
            out.push(l.beta);
            out.push(l.gamma);
            out.extend_from_slice(&l.filters);
        }
        out
    }
}

/// Per-sample gradient with filter parts still in the frequency domain.
#[derive(Clone)]
pub(crate) struct RawGradients<T: Real> {
    pub loss: LossValue,
    pub scalars: Vec<[T; 3]>,
    pub filters: Vec<FilterGradAccum<T>>,
}

impl<T: Real> RawGradients<T> {
    pub fn add(&mut self, other: &Self) {
        self.loss.objective += other.loss.objective;
        self.loss.mse += other.loss.mse;
        for (a, b) in self.scalars.iter_mut().zip(&other.scalars) {
            for i in 0..3 {
                a[i] += b[i];
            }
        }
        for (a, b) in self.filters.iter_mut().zip(&other.filters) {
            a.add(b);
        }
    }

    /// Scales by `k` and converts filter parts to masked taps.
    pub fn finish(&self, net: &Network<'_, T>, k: T) -> ParamGradients<T> {
        let layers = self
            .scalars
            .iter()
            .zip(&self.filters)
            .map(|(s, f)| LayerParams {
                alpha: s[0] * k,
                beta: s[1] * k,
                gamma: s[2] * k,
                filters: net
                    .plan
                    .finish_filter_grad(f, &net.params.mask)
                    .into_iter()
                    .map(|v| v * k)
                    .collect(),
            })
            .collect();
        ParamGradients { layers }
    }
}

fn loss_of<T: Real>(u: &Image<T>, target: &Image<T>) -> Result<(LossValue, Image<T>)> {
    if u.side() != target.side() {
        return Err(Error::invalid("target image size does not match the reconstruction"));
    }
    let mut diff = u.clone();
    let mut sq = 0.0;
    for (d, &t) in diff.as_mut_slice().iter_mut().zip(target.as_slice()) {
        *d -= t;
        sq += d.to_f64_lossy().powi(2);
    }
    Ok((
        LossValue {
            objective: 0.5 * sq,
            mse: sq / u.len() as f64,
        },
        diff,
    ))
}

impl<T: Real> Network<'_, T> {
    pub(crate) fn backward_raw(&self, trace: &ForwardTrace<T>, target: &Image<T>) -> Result<RawGradients<T>> {
        let k = self.params.blocks();
        if trace.blocks() != k || trace.iterates.len() != k + 1 {
            return Err(Error::invalid(format!(
                "trace holds {} blocks but the network has {k}",
                trace.blocks()
            )));
        }
        let (loss, diff) = loss_of(&trace.output(), target)?;
        let mut g = haar_analyze(&diff, self.params.levels)?;
        let mut scalars = vec![[T::zero(); 3]; k];
        let mut filters = Vec::with_capacity(k);
        for layer in (0..k).rev() {
            let p = &self.params.layers[layer];
            let gamma = p.gamma.abs();
            let gsign = if p.gamma >= T::zero() { T::one() } else { -T::one() };
            let z = &trace.preactivation[layer];
            let w = &trace.iterates[layer];
            let nw = &trace.normal[layer];
            let cw = &trace.correction[layer];
            let b = &trace.rhs;

            let mut dz = g.clone();
            let (mut da, mut db, mut dg) = (T::zero(), T::zero(), T::zero());
            for (i, d) in dz.as_mut_slice().iter_mut().enumerate() {
                let zi = z.as_slice()[i];
                if zi.abs() > gamma {
                    dg -= *d * zi.signum();
                    da += *d * (b.as_slice()[i] - nw.as_slice()[i]);
                    db -= *d * cw.as_slice()[i];
                } else {
                    *d = T::zero();
                }
            }
            scalars[layer] = [da, db, dg * gsign];

            let filt = &self.filters[layer];
            let dz_spec = self.plan.target_spectra(&dz);
            let w_spec = self.plan.source_spectra(w);
            let mut acc = self.plan.grad_accumulator();
            self.plan.accumulate_filter_grad(&mut acc, -p.beta * self.filter_scale, &dz_spec, &w_spec);
            filters.push(acc);

            // g ← dz − α N dz − β Cᵀ dz
            let ndz = self.normal.apply(&dz)?;
            let mut ct = crate::wavelet::WaveletCoeffs::zeros(self.params.side, self.params.levels)?;
            if !filt.is_zero() {
                self.plan.apply_transpose_spectra(filt, &dz_spec, &mut ct);
            }
            for (i, gv) in dz.as_mut_slice().iter_mut().enumerate() {
                *gv = *gv - p.alpha * ndz.as_slice()[i] - p.beta * ct.as_slice()[i];
            }
            g = dz;
        }
        filters.reverse();
        Ok(RawGradients { loss, scalars, filters })
    }

    /// Loss and exact gradients for one sample given its forward trace.
    pub fn backward(&self, trace: &ForwardTrace<T>, target: &Image<T>) -> Result<(LossValue, ParamGradients<T>)> {
        let raw = self.backward_raw(trace, target)?;
        Ok((raw.loss, raw.finish(self, T::one())))
    }
}

/// Gradients of `½‖u_K − target‖²` from a stored forward trace.
pub fn backward<T: Real>(
    projector: &Projector<T>,
    params: &NetworkParams<T>,
    trace: &ForwardTrace<T>,
    target: &Image<T>,
) -> Result<(LossValue, ParamGradients<T>)> {
    Network::new(projector, params)?.backward(trace, target)
}

/// Forward and backward in one call, starting from `w⁰ = W Rᵀ m`.
pub fn loss_and_gradient<T: Real>(
    m: &Sinogram<T>,
    target: &Image<T>,
    projector: &Projector<T>,
    params: &NetworkParams<T>,
) -> Result<(LossValue, ParamGradients<T>)> {
    let net = Network::new(projector, params)?;
    let trace = net.forward(m, None)?;
    net.backward(&trace, target)
}

/// Loss only.
pub fn loss<T: Real>(m: &Sinogram<T>, target: &Image<T>, projector: &Projector<T>, params: &NetworkParams<T>) -> Result<LossValue> {
    let net = Network::new(projector, params)?;
    let u = net.reconstruct(m)?;
    Ok(loss_of(&u, target)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Step counter and moment estimates; `t` counts completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::invalid("parameter, gradient and optimizer sizes differ"));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i].to_f64_lossy();
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= T::lit(cfg.lr * mh / (vh.sqrt() + cfg.eps));
    }
    Ok(())
}

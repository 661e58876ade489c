use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, RawGradients};
use crate::error::{Error, Result};
use crate::masks::{build_mask, MaskKind};
use crate::metrics::{capped_psnr, psnr};
use crate::phantoms::{Dataset, Sample, Split};
use crate::unrolled::{Network, NetworkParams};
use crate::xray::Projector;
use crate::Real;

/// Samples whose gradients are computed concurrently before being summed
/// in sample order.
pub const GRAD_CHUNK: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub blocks: usize,
    pub filter_size: usize,
    pub mask: MaskKind,
    pub q: usize,
    pub levels: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lambda0: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            blocks: 10,
            filter_size: 17,
            mask: MaskKind::Full,
            q: 0,
            levels: 3,
            epochs: 15,
            batch: 25,
            lambda0: 2e-2,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::invalid("lambda0 must be >= 0"));
        }
        self.adam.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub batch: usize,
    /// Mean squared error over the batch, before the update.
    pub loss: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_mse: f64,
    /// Mean capped PSNR on the validation samples after the epoch (NaN without any).
    pub val_psnr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams<f64>,
    pub adam: AdamState,
    pub log: Vec<TrainLogRow>,
    pub epochs: Vec<EpochReport>,
}

/// Mean capped PSNR of the network on `samples`.
pub fn mean_psnr<T: Real>(net: &Network<'_, T>, samples: &[Sample<T>]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let vals: Vec<f64> = samples
        .par_iter()
        .map(|s| Ok(capped_psnr(psnr(&net.reconstruct(&s.sinogram)?, &s.image)?)))
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn batch_gradient(net: &Network<'_, f64>, samples: &[&Sample<f64>]) -> Result<RawGradients<f64>> {
    let mut total: Option<RawGradients<f64>> = None;
    for chunk in samples.chunks(GRAD_CHUNK) {
        let parts: Vec<RawGradients<f64>> = chunk
            .par_iter()
            .map(|s| {
                let trace = net.forward(&s.sinogram, None)?;
                net.backward_raw(&trace, &s.image)
            })
            .collect::<Result<_>>()?;
        for p in parts {
            match &mut total {
                Some(t) => t.add(&p),
                None => total = Some(p),
            }
        }
    }
    total.ok_or_else(|| Error::invalid("empty batch"))
}

/// Trains on in-memory samples.
///
/// `on_epoch` runs after every epoch with the current parameters and
/// optimizer state (checkpointing, logging). A non-finite loss aborts with
/// a numerical error before any update is applied.
pub fn train_samples(
    projector: &Projector<f64>,
    train: &[Sample<f64>],
    validation: &[Sample<f64>],
    init: NetworkParams<f64>,
    adam: Option<AdamState>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochReport, &[TrainLogRow], &NetworkParams<f64>, &AdamState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::invalid("no training samples"));
    }
    let mut params = init;
    let mut flat = params.to_flat();
    let mut state = adam.unwrap_or_else(|| AdamState::new(flat.len()));
    let mut log = Vec::new();
    let mut epochs = Vec::new();
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sum_mse = 0.0;
        let first_row = log.len();
        for (bi, idx) in order.chunks(cfg.batch).enumerate() {
            let grads = {
                let net = Network::new(projector, &params)?;
                let batch: Vec<&Sample<f64>> = idx.iter().map(|&i| &train[i]).collect();
                let raw = batch_gradient(&net, &batch)?;
                let loss = raw.loss.mse / idx.len() as f64;
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite training loss at epoch {epoch}, batch {bi}"
                    )));
                }
                sum_mse += raw.loss.mse;
                log.push(TrainLogRow {
                    epoch,
                    batch: bi,
                    loss,
                    wall_time: start.elapsed().as_secs_f64(),
                });
                raw.finish(&net, 1.0 / idx.len() as f64).to_flat()
            };
            adam_step(&mut flat, &grads, &mut state, &cfg.adam)?;
            params.set_flat(&flat)?;
        }
        let val_psnr = mean_psnr(&Network::new(projector, &params)?, validation)?;
        let report = EpochReport {
            epoch,
            train_mse: sum_mse / train.len() as f64,
            val_psnr,
        };
        on_epoch(&report, &log[first_row..], &params, &state)?;
        epochs.push(report);
    }
    Ok(TrainOutcome {
        params,
        adam: state,
        log,
        epochs,
    })
}

/// Number of training samples held out for validation: the last tenth.
pub fn validation_count(train_len: usize) -> usize {
    train_len / 10
}

/// Trains on a dataset from the ISTA initialization; the last tenth of the
/// training split is held out for validation.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochReport, &[TrainLogRow], &NetworkParams<f64>, &AdamState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let g = dataset.geometry();
    let mask = build_mask(cfg.mask, &g.angle_set, cfg.filter_size, cfg.q)?;
    let init = NetworkParams::ista_init(
        cfg.blocks,
        mask,
        g.angle_set.clone(),
        g.image_size,
        cfg.levels,
        cfg.lambda0,
        dataset.manifest().operator_hash(),
    )?;
    let projector = dataset.projector::<f64>()?;
    let mut all = dataset.load_all::<f64>(Split::Train)?;
    let val = all.split_off(all.len() - validation_count(all.len()));
    train_samples(&projector, &all, &val, init, None, cfg, on_epoch)
}

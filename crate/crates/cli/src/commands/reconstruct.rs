use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use microct::io::{write_f32, write_json, write_png16, PngScaling};
use microct::phantoms::{read_dataset, Split};
use microct::unrolled::{ista_solve, load_params, IstaConfig, Network};
use microct::xray::{fbp, Image, RampWindow};
use microct::Error;

use crate::config::{required, usage, write_resolved, Merge};
use crate::fill_fields;

#[derive(clap::Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Parameter file written by `train` (network method only)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// train or test
    #[arg(long)]
    pub split: Option<String>,
    /// network, fbp or ista
    #[arg(long)]
    pub method: Option<String>,
    /// Ramp apodization for FBP: none or hann
    #[arg(long)]
    pub window: Option<String>,
    /// ISTA regularization weight
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Wavelet levels for ISTA
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

impl Merge for Args {
    fn fill_from(&mut self, file: Self) {
        fill_fields!(self, file; data, checkpoint, out, split, method, window, lambda, iterations, levels);
    }

    fn apply_defaults(&mut self) {
        self.split.get_or_insert_with(|| "test".into());
        self.method.get_or_insert_with(|| "network".into());
        self.window.get_or_insert_with(|| "none".into());
        self.lambda.get_or_insert(1e-3);
        self.iterations.get_or_insert(200);
        self.levels.get_or_insert(3);
    }
}

enum Method {
    Network(microct::unrolled::NetworkParams<f64>),
    Fbp(RampWindow),
    Ista(IstaConfig),
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let data = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let split = Split::parse(args.split.as_deref().unwrap())?;
    let dataset = read_dataset(&data)?;
    let method = match args.method.as_deref().unwrap() {
        "network" => {
            let ckpt = required(&args.checkpoint, "checkpoint")?;
            let (params, _) = load_params(&ckpt)?;
            let expected = dataset.manifest().operator_hash();
            if params.operator_hash != expected {
                return Err(Error::CheckpointMismatch(format!(
                    "{} was trained for operator {}, dataset uses {}",
                    ckpt.display(),
                    params.operator_hash,
                    expected
                ))
                .into());
            }
            Method::Network(params)
        }
        "fbp" => Method::Fbp(match args.window.as_deref().unwrap() {
            "none" => RampWindow::None,
            "hann" => RampWindow::Hann,
            w => return Err(usage(format!("unknown --window '{w}' (expected none or hann)"))),
        }),
        "ista" => {
            let cfg = IstaConfig {
                lambda: args.lambda.unwrap(),
                alpha: 1.0,
                iterations: args.iterations.unwrap(),
                levels: args.levels.unwrap(),
            };
            cfg.validate()?;
            Method::Ista(cfg)
        }
        m => return Err(usage(format!("unknown --method '{m}' (expected network, fbp or ista)"))),
    };
    super::ensure_empty_dir(&out, args.force, &["resolved_config.json"])?;
    write_resolved(&out, &args)?;

    let projector = dataset.projector::<f64>()?;
    let net = match &method {
        Method::Network(p) => Some(Network::new(&projector, p)?),
        _ => None,
    };
    let count = dataset.len(split);
    (0..count).into_par_iter().try_for_each(|i| -> anyhow::Result<()> {
        let sample = dataset.load::<f64>(split, i)?;
        let u = match &method {
            Method::Network(_) => net.as_ref().unwrap().reconstruct(&sample.sinogram)?,
            Method::Fbp(w) => fbp(&sample.sinogram, &projector, *w)?,
            Method::Ista(cfg) => ista_solve(&sample.sinogram, &projector, cfg)?,
        };
        write_image(&out, &sample.name, &u)?;
        Ok(())
    })?;
    println!("reconstructed {count} {} samples into {}", split.name(), out.display());
    Ok(())
}

/// `<name>.f32`, `<name>.png` and the PNG's `<name>.png.json` scaling sidecar.
pub fn write_image(dir: &Path, name: &str, u: &Image<f64>) -> microct::Result<PngScaling> {
    write_f32(&dir.join(format!("{name}.f32")), u.as_slice())?;
    let png = dir.join(format!("{name}.png"));
    let scaling = write_png16(&png, u.side(), u.as_slice())?;
    write_json(&dir.join(format!("{name}.png.json")), &scaling)?;
    Ok(scaling)
}

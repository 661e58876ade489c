use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use microct::grad::{train, AdamConfig, TrainConfig};
use microct::masks::MaskKind;
use microct::phantoms::read_dataset;
use microct::unrolled::save_params;

use crate::config::{required, write_resolved, Merge};
use crate::fill_fields;

pub const PARAMS_FILE: &str = "params.bin";

#[derive(clap::Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    /// Dataset directory
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for parameters and logs
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of unrolled blocks
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Side of the square correction filters (odd)
    #[arg(long)]
    pub filter_size: Option<usize>,
    /// full, bow, x or sparse
    #[arg(long)]
    pub mask: Option<String>,
    /// Stripe half-width of the mask
    #[arg(long)]
    pub q: Option<usize>,
    /// Wavelet levels
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Initial soft threshold of every block
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

impl Merge for Args {
    fn fill_from(&mut self, file: Self) {
        fill_fields!(self, file; data, out, blocks, filter_size, mask, q, levels, epochs, batch, lr, lambda0, seed);
    }

    fn apply_defaults(&mut self) {
        let d = TrainConfig::default();
        self.blocks.get_or_insert(d.blocks);
        self.filter_size.get_or_insert(d.filter_size);
        self.mask.get_or_insert_with(|| "full".into());
        self.q.get_or_insert(0);
        self.levels.get_or_insert(d.levels);
        self.epochs.get_or_insert(d.epochs);
        self.batch.get_or_insert(d.batch);
        self.lr.get_or_insert(d.adam.lr);
        self.lambda0.get_or_insert(d.lambda0);
        self.seed.get_or_insert(d.seed);
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let data = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let cfg = TrainConfig {
        blocks: args.blocks.unwrap(),
        filter_size: args.filter_size.unwrap(),
        mask: MaskKind::parse(args.mask.as_deref().unwrap())?,
        q: args.q.unwrap(),
        levels: args.levels.unwrap(),
        epochs: args.epochs.unwrap(),
        batch: args.batch.unwrap(),
        lambda0: args.lambda0.unwrap(),
        seed: args.seed.unwrap(),
        adam: AdamConfig {
            lr: args.lr.unwrap(),
            ..AdamConfig::default()
        },
    };
    let dataset = read_dataset(&data)?;
    // surface mask/geometry mismatches before touching the output directory
    microct::masks::build_mask(cfg.mask, &dataset.geometry().angle_set, cfg.filter_size, cfg.q)?;
    microct::unrolled::CorrectionPlan::<f64>::new(dataset.geometry().image_size, cfg.levels, cfg.filter_size)?;
    super::ensure_empty_dir(&out, args.force, &[PARAMS_FILE, "train_log.csv", "epochs.csv", "resolved_config.json"])?;
    write_resolved(&out, &args)?;

    let log_path = out.join("train_log.csv");
    let epochs_path = out.join("epochs.csv");
    fs::write(&log_path, "epoch,batch,loss,wall_time\n").with_context(|| format!("writing {}", log_path.display()))?;
    fs::write(&epochs_path, "epoch,train_mse,val_psnr\n").with_context(|| format!("writing {}", epochs_path.display()))?;
    let params_path = out.join(PARAMS_FILE);

    let outcome = train(&dataset, &cfg, &mut |report, rows, params, adam| {
        let mut text = String::new();
        for r in rows {
            writeln!(text, "{},{},{:.17e},{:.3}", r.epoch, r.batch, r.loss, r.wall_time).unwrap();
        }
        append(&log_path, &text)?;
        append(
            &epochs_path,
            &format!("{},{:.17e},{:.6}\n", report.epoch, report.train_mse, report.val_psnr),
        )?;
        save_params(&params_path, params, Some(adam))?;
        eprintln!(
            "epoch {:>3}: train mse {:.6e}, validation psnr {:.3} dB",
            report.epoch, report.train_mse, report.val_psnr
        );
        Ok(())
    })?;
    if cfg.epochs == 0 {
        save_params(&params_path, &outcome.params, Some(&outcome.adam))?;
    }
    println!("wrote {}", params_path.display());
    Ok(())
}

fn append(path: &std::path::Path, text: &str) -> microct::Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| microct::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    f.write_all(text.as_bytes()).map_err(|e| microct::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

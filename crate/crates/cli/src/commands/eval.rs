use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use microct::io::read_f32;
use microct::metrics::MetricReport;
use microct::phantoms::{read_dataset, Split};
use microct::xray::Image;

use crate::config::{required, Merge};
use crate::fill_fields;

#[derive(clap::Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    /// Directory written by `reconstruct`
    #[arg(long)]
    pub recon: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Output CSV (default: <recon>/metrics.csv)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Merge for Args {
    fn fill_from(&mut self, file: Self) {
        fill_fields!(self, file; recon, data, split, out);
    }

    fn apply_defaults(&mut self) {
        self.split.get_or_insert_with(|| "test".into());
        if self.out.is_none() {
            self.out = self.recon.as_ref().map(|r| r.join("metrics.csv"));
        }
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let recon = required(&args.recon, "recon")?;
    let data = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let split = Split::parse(args.split.as_deref().unwrap())?;
    let dataset = read_dataset(&data)?;
    let n = dataset.geometry().image_size;
    let mut report = MetricReport::default();
    for i in 0..dataset.len(split) {
        let sample = dataset.load::<f64>(split, i)?;
        let path = recon.join(format!("{}.f32", sample.name));
        let u = Image::from_vec(n, read_f32::<f64>(&path, n * n)?)?.with_extent(sample.image.extent());
        report.push(sample.name.clone(), &u, &sample.image)?;
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    let cfg_path = out.with_extension("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&args)? + "\n")
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    println!(
        "{} samples: mean PSNR {:.4} dB, mean SSIM {:.5}",
        report.names.len(),
        report.mean_psnr(),
        report.mean_ssim()
    );
    Ok(())
}

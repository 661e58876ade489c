use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use microct::geometry::AngleSet;
use microct::phantoms::{generate_samples, write_dataset, GenerateConfig, PhantomConfig};

use crate::config::{required, write_resolved, Merge};
use crate::fill_fields;

#[derive(clap::Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Image side (power of two)
    #[arg(long)]
    pub size: Option<usize>,
    /// `limited:<half-width degrees>`, `sparse:<count>` or `full`
    #[arg(long)]
    pub geometry: Option<String>,
    /// Number of projection angles (ignored for sparse geometries)
    #[arg(long)]
    pub angles: Option<usize>,
    /// Noise standard deviation relative to the largest clean datum
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Phantom generator settings
    #[arg(skip)]
    pub phantom: Option<PhantomConfig>,
    /// Overwrite a non-empty output directory
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

impl Merge for Args {
    fn fill_from(&mut self, file: Self) {
        fill_fields!(self, file; out, train, test, size, geometry, angles, noise, seed, phantom);
    }

    fn apply_defaults(&mut self) {
        self.train.get_or_insert(500);
        self.test.get_or_insert(50);
        self.size.get_or_insert(64);
        self.geometry.get_or_insert_with(|| "limited:60".into());
        self.noise.get_or_insert(0.01);
        self.seed.get_or_insert(0);
        self.phantom.get_or_insert_with(PhantomConfig::default);
        if self.angles.is_none() {
            let sparse = self.geometry.as_deref().and_then(|g| g.strip_prefix("sparse:"));
            self.angles = Some(match sparse.and_then(|n| n.parse().ok()) {
                Some(n) => n,
                None => 60,
            });
        }
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let out = required(&args.out, "out")?;
    super::ensure_empty_dir(&out, args.force, &["manifest.json", "images", "sinograms", "specs", "resolved_config.json"])?;
    let cfg = GenerateConfig {
        train: args.train.unwrap(),
        test: args.test.unwrap(),
        size: args.size.unwrap(),
        angle_set: AngleSet::parse(args.geometry.as_deref().unwrap())?,
        num_angles: args.angles.unwrap(),
        noise_sigma_rel: args.noise.unwrap(),
        seed: args.seed.unwrap(),
        phantom: args.phantom.clone().unwrap(),
    };
    let (manifest, train, test) = generate_samples::<f64>(&cfg)?;
    write_dataset(&out, &manifest, &train, &test)?;
    write_resolved(&out, &args)?;
    println!(
        "wrote {} training and {} test samples to {} (operator norm {:.6})",
        train.len(),
        test.len(),
        out.display(),
        manifest.operator_norm
    );
    Ok(())
}

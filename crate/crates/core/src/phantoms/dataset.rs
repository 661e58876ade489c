use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ellipse::{derive_seed, generate_phantom, simulate_measurement, EllipseSpec, PhantomConfig};
use crate::error::{Error, Result};
use crate::geometry::{AngleSet, ScanGeometry};
use crate::io::{read_f32, read_json, write_f32, write_json};
use crate::xray::{power_iteration, Image, Projector, Sinogram};
use crate::Real;

pub const DATASET_VERSION: u32 = 1;

/// Seed stream offset separating test samples from training samples.
const TEST_STREAM: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub geometry: ScanGeometry,
    /// Spectral norm of the raw projector; stored sinograms are divided by it.
    pub operator_norm: f64,
    pub noise_sigma_rel: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetManifest {
    pub fn names(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    /// Hash identifying the normalized operator used for the stored data.
    pub fn operator_hash(&self) -> String {
        let mut g = self.geometry.hash();
        g.push(':');
        g.push_str(&format!("{:e}", self.operator_norm));
        g
    }
}

/// Sidecar written next to every stored sinogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinogramSidecar {
    pub num_angles: usize,
    pub num_detectors: usize,
    pub geometry_hash: String,
    /// Factor applied to raw line integrals (`1 / operator_norm`).
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T = f64> {
    pub name: String,
    pub image: Image<T>,
    pub sinogram: Sinogram<T>,
    pub specs: Vec<EllipseSpec>,
}

/// Parameters of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub train: usize,
    pub test: usize,
    pub size: usize,
    pub angle_set: AngleSet,
    pub num_angles: usize,
    pub noise_sigma_rel: f64,
    pub seed: u64,
    pub phantom: PhantomConfig,
}

fn sample_name(split: Split, i: usize) -> String {
    format!("{}_{i:05}", split.name())
}

/// Generates samples and the manifest in memory.
pub fn generate_samples<T: Real>(cfg: &GenerateConfig) -> Result<(DatasetManifest, Vec<Sample<T>>, Vec<Sample<T>>)> {
    if !cfg.size.is_power_of_two() {
        return Err(Error::invalid(format!("image size {} is not a power of two", cfg.size)));
    }
    let geometry = ScanGeometry::new(cfg.size, cfg.angle_set.clone(), cfg.num_angles)?;
    let raw = Projector::<f64>::new(&geometry)?;
    let operator_norm = power_iteration(&raw, 500, derive_seed(cfg.seed, u64::MAX))?;
    let projector = Projector::<T>::normalized(&geometry, operator_norm)?;

    let make = |split: Split, i: usize| -> Result<Sample<T>> {
        let stream = match split {
            Split::Train => i as u64,
            Split::Test => TEST_STREAM + i as u64,
        };
        let (image, specs) = generate_phantom::<T>(derive_seed(cfg.seed, 2 * stream), cfg.size, &cfg.phantom)?;
        let sinogram = simulate_measurement(&image, &projector, cfg.noise_sigma_rel, derive_seed(cfg.seed, 2 * stream + 1))?;
        Ok(Sample {
            name: sample_name(split, i),
            image,
            sinogram,
            specs,
        })
    };
    let train: Vec<Sample<T>> = (0..cfg.train)
        .into_par_iter()
        .map(|i| make(Split::Train, i))
        .collect::<Result<_>>()?;
    let test: Vec<Sample<T>> = (0..cfg.test)
        .into_par_iter()
        .map(|i| make(Split::Test, i))
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        geometry,
        operator_norm,
        noise_sigma_rel: cfg.noise_sigma_rel,
        train_count: cfg.train,
        test_count: cfg.test,
        seed: cfg.seed,
        phantom: cfg.phantom.clone(),
        train: train.iter().map(|s| s.name.clone()).collect(),
        test: test.iter().map(|s| s.name.clone()).collect(),
    };
    Ok((manifest, train, test))
}

/// Writes `{manifest.json, images/, sinograms/, specs/}` under `root`.
pub fn write_dataset<T: Real>(root: &Path, manifest: &DatasetManifest, train: &[Sample<T>], test: &[Sample<T>]) -> Result<()> {
    for sub in ["images", "sinograms", "specs"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let hash = manifest.geometry.hash();
    for (split, samples) in [(Split::Train, train), (Split::Test, test)] {
        if samples.len() != manifest.names(split).len() {
            return Err(Error::invalid(format!("{} sample count does not match manifest", split.name())));
        }
        for (s, name) in samples.iter().zip(manifest.names(split)) {
            write_f32(&root.join("images").join(format!("{name}.f32")), s.image.as_slice())?;
            write_f32(&root.join("sinograms").join(format!("{name}.f32")), s.sinogram.as_slice())?;
            write_json(
                &root.join("sinograms").join(format!("{name}.json")),
                &SinogramSidecar {
                    num_angles: s.sinogram.num_angles(),
                    num_detectors: s.sinogram.num_detectors(),
                    geometry_hash: hash.clone(),
                    scale: 1.0 / manifest.operator_norm,
                },
            )?;
            write_json(&root.join("specs").join(format!("{name}.json")), &s.specs)?;
        }
    }
    write_json(&root.join("manifest.json"), manifest)
}

/// Handle to a validated dataset on disk; samples are loaded on demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

fn corrupt(file: impl Into<PathBuf>, reason: impl Into<String>) -> Error {
    Error::CorruptDataset {
        file: file.into(),
        reason: reason.into(),
    }
}

/// Opens a dataset and checks every listed file against the declared shapes.
pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let mpath = root.join("manifest.json");
    let raw: serde_json::Value = read_json(&mpath)?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt(&mpath, "missing version"))?;
    if version != DATASET_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: version as u32,
            supported: DATASET_VERSION,
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(raw).map_err(|e| Error::Json {
        path: mpath.clone(),
        source: e,
    })?;
    manifest.geometry.validate().map_err(|e| corrupt(&mpath, e.to_string()))?;
    if manifest.train.len() != manifest.train_count || manifest.test.len() != manifest.test_count {
        return Err(corrupt(&mpath, "sample lists disagree with declared counts"));
    }
    let n = manifest.geometry.image_size;
    let sino_len = manifest.geometry.num_angles() * manifest.geometry.num_detectors;
    let hash = manifest.geometry.hash();
    for name in manifest.train.iter().chain(&manifest.test) {
        for (path, len) in [
            (root.join("images").join(format!("{name}.f32")), n * n),
            (root.join("sinograms").join(format!("{name}.f32")), sino_len),
        ] {
            let meta = fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
            if meta.len() != (len * 4) as u64 {
                return Err(corrupt(&path, format!("expected {} bytes, found {}", len * 4, meta.len())));
            }
        }
        let side = root.join("sinograms").join(format!("{name}.json"));
        let car: SinogramSidecar = read_json(&side)?;
        if car.num_angles != manifest.geometry.num_angles()
            || car.num_detectors != manifest.geometry.num_detectors
            || car.geometry_hash != hash
        {
            return Err(corrupt(&side, "sidecar disagrees with manifest geometry"));
        }
        let spec = root.join("specs").join(format!("{name}.json"));
        if !spec.is_file() {
            return Err(corrupt(&spec, "missing phantom spec"));
        }
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        manifest,
    })
}

impl Dataset {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.manifest.geometry
    }

    pub fn len(&self, split: Split) -> usize {
        self.manifest.names(split).len()
    }

    /// Normalized projector matching the stored sinograms.
    pub fn projector<T: Real>(&self) -> Result<Projector<T>> {
        Projector::normalized(&self.manifest.geometry, self.manifest.operator_norm)
    }

    pub fn load<T: Real>(&self, split: Split, index: usize) -> Result<Sample<T>> {
        let name = self
            .manifest
            .names(split)
            .get(index)
            .ok_or_else(|| Error::invalid(format!("{} index {index} out of range", split.name())))?
            .clone();
        let g = &self.manifest.geometry;
        let n = g.image_size;
        let img = read_f32(&self.root.join("images").join(format!("{name}.f32")), n * n)?;
        let sino = read_f32(
            &self.root.join("sinograms").join(format!("{name}.f32")),
            g.num_angles() * g.num_detectors,
        )?;
        let specs: Vec<EllipseSpec> = read_json(&self.root.join("specs").join(format!("{name}.json")))?;
        Ok(Sample {
            image: Image::from_vec(n, img)?.with_extent(g.extent()),
            sinogram: Sinogram::from_vec(g.num_angles(), g.num_detectors, sino)?,
            specs,
            name,
        })
    }

    pub fn load_all<T: Real>(&self, split: Split) -> Result<Vec<Sample<T>>> {
        (0..self.len(split)).map(|i| self.load(split, i)).collect()
    }
}

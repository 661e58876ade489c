//! Parallel-beam scan geometries and angle sets.
//!
//! Angles are *normals*: a projection angle `omega` integrates along lines
//! `{ s·(cos ω, sin ω) + t·(−sin ω, cos ω) }`. Directions are unsigned, so all
//! angles live in `[−π/2, π/2)`.
//!
//! Physical coordinates are `x = (x1, x2)` with `x1` along image columns and
//! `x2` along image rows (increasing row index). The image square is
//! `[−1, 1]²` by default, so the inscribed disk is the unit disk.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Angular tolerance (radians) for set membership and boundary tests.
pub const ANGLE_TOL: f64 = 1e-9;

/// Maps any angle to the representative of its direction class in `[−π/2, π/2)`.
pub fn normalize_angle(omega: f64) -> f64 {
    let mut w = (omega + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    // rem_euclid can return exactly PI for tiny negative inputs
    if w >= FRAC_PI_2 {
        w -= PI;
    }
    w
}

/// Distance between two unsigned directions, in `[0, π/2]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// The admissible set of normal directions `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngleSet {
    /// Every direction; the complete-data case.
    Full,
    /// `[−Γ, Γ]` with `0 < Γ < π/2`.
    LimitedInterval { gamma: f64 },
    /// Strips `[ω_i − η, ω_i + η]` around strictly increasing angles.
    SparseDiscrete { angles: Vec<f64>, eta: f64 },
}

impl AngleSet {
    pub fn limited(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "limited-angle half-width must lie in (0, π/2), got {gamma}"
            )));
        }
        Ok(AngleSet::LimitedInterval { gamma })
    }

    pub fn sparse(angles: Vec<f64>, eta: f64) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("sparse angle set needs at least one angle"));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("strip half-width must be >= 0, got {eta}")));
        }
        for &a in &angles {
            if !(-FRAC_PI_2..FRAC_PI_2).contains(&a) {
                return Err(Error::invalid(format!("sparse angle {a} outside [-π/2, π/2)")));
            }
        }
        for pair in angles.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::invalid("sparse angles must be strictly increasing"));
            }
        }
        for (i, &a) in angles.iter().enumerate() {
            for &b in &angles[i + 1..] {
                if angular_distance(a, b) <= ANGLE_TOL {
                    return Err(Error::invalid(format!(
                        "sparse angles {a} and {b} coincide modulo π"
                    )));
                }
            }
        }
        Ok(AngleSet::SparseDiscrete { angles, eta })
    }

    /// `count` angles evenly spread over the half circle, starting at −π/2.
    pub fn sparse_uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("sparse angle count must be positive"));
        }
        let angles = (0..count)
            .map(|i| -FRAC_PI_2 + PI * i as f64 / count as f64)
            .collect();
        Self::sparse(angles, 0.0)
    }

    /// Membership of a normal direction (any representative).
    pub fn contains(&self, omega: f64) -> bool {
        let w = normalize_angle(omega);
        match self {
            AngleSet::Full => true,
            AngleSet::LimitedInterval { gamma } => w.abs() <= *gamma,
            AngleSet::SparseDiscrete { angles, eta } => angles
                .iter()
                .any(|&a| angular_distance(w, a) <= eta + ANGLE_TOL),
        }
    }

    /// Directions that trigger streaks: `±Γ`, or the measured angles
    /// themselves for a sparse set.
    pub fn boundary(&self) -> Vec<f64> {
        match self {
            AngleSet::Full => Vec::new(),
            AngleSet::LimitedInterval { gamma } => vec![-gamma, *gamma],
            AngleSet::SparseDiscrete { angles, .. } => angles.clone(),
        }
    }

    pub fn is_limited(&self) -> bool {
        matches!(self, AngleSet::LimitedInterval { .. })
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, AngleSet::SparseDiscrete { .. })
    }

    /// Parses `full`, `limited:<half-width degrees>` or `sparse:<count>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "full" {
            return Ok(AngleSet::Full);
        }
        let (kind, value) = spec
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("unrecognized geometry '{spec}'")))?;
        match kind {
            "limited" => {
                let deg: f64 = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad half-width '{value}'")))?;
                Self::limited(deg.to_radians())
            }
            "sparse" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad angle count '{value}'")))?;
                Self::sparse_uniform(n)
            }
            _ => Err(Error::invalid(format!("unrecognized geometry kind '{kind}'"))),
        }
    }
}

/// `count` equispaced angles covering `[−Γ, Γ]` (both endpoints when `count ≥ 2`).
pub fn uniform_angles(gamma: f64, count: usize) -> Result<Vec<f64>> {
    match count {
        0 => Err(Error::invalid("angle count must be positive")),
        1 => Ok(vec![0.0]),
        _ => {
            let step = 2.0 * gamma / (count - 1) as f64;
            Ok((0..count)
                .map(|i| {
                    if i == count - 1 {
                        gamma
                    } else {
                        -gamma + step * i as f64
                    }
                })
                .collect())
        }
    }
}

/// Discretized parallel-beam acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub image_size: usize,
    pub pixel_pitch: f64,
    pub num_detectors: usize,
    pub detector_pitch: f64,
    pub angle_set: AngleSet,
    pub angles: Vec<f64>,
}

impl ScanGeometry {
    /// Default discretization: image covers `[−1, 1]²`, `ceil(n√2)` detectors
    /// at pixel pitch. `num_angles` is ignored for sparse sets, which are
    /// measured verbatim.
    pub fn new(image_size: usize, angle_set: AngleSet, num_angles: usize) -> Result<Self> {
        if image_size == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        let pixel_pitch = 2.0 / image_size as f64;
        let num_detectors = (image_size as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        let angles = match &angle_set {
            AngleSet::Full => {
                if num_angles == 0 {
                    return Err(Error::invalid("angle count must be positive"));
                }
                (0..num_angles)
                    .map(|i| -FRAC_PI_2 + PI * i as f64 / num_angles as f64)
                    .collect()
            }
            AngleSet::LimitedInterval { gamma } => uniform_angles(*gamma, num_angles)?,
            AngleSet::SparseDiscrete { angles, .. } => angles.clone(),
        };
        let g = ScanGeometry {
            image_size,
            pixel_pitch,
            num_detectors,
            detector_pitch: pixel_pitch,
            angle_set,
            angles,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.num_detectors == 0 || self.angles.is_empty() {
            return Err(Error::invalid("geometry has an empty dimension"));
        }
        if !(self.pixel_pitch > 0.0 && self.detector_pitch > 0.0) {
            return Err(Error::invalid("pitches must be positive"));
        }
        let diagonal = self.image_size as f64 * self.pixel_pitch * std::f64::consts::SQRT_2;
        let span = self.num_detectors as f64 * self.detector_pitch;
        if span + 1e-12 < diagonal {
            return Err(Error::invalid(format!(
                "detector span {span} does not cover the image diagonal {diagonal}"
            )));
        }
        for &a in &self.angles {
            if !self.angle_set.contains(a) {
                return Err(Error::invalid(format!(
                    "measured angle {a} lies outside the angle set"
                )));
            }
        }
        Ok(())
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    /// Physical side length of the image square.
    pub fn extent(&self) -> f64 {
        self.image_size as f64 * self.pixel_pitch
    }

    /// Angular spacing of an equivalent uniform full-circle scan (`π / N_full`).
    pub fn angle_step(&self) -> f64 {
        let n = self.angles.len();
        match &self.angle_set {
            AngleSet::LimitedInterval { gamma } if n >= 2 => 2.0 * gamma / (n - 1) as f64,
            _ => PI / n as f64,
        }
    }

    /// Detector offset of bin `j`.
    pub fn detector_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.num_detectors as f64 - 1.0) / 2.0) * self.detector_pitch
    }

    /// Stable content hash used to tie checkpoints to datasets.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("geometry serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

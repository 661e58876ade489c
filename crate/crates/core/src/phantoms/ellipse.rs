use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xray::{Image, Projector, Sinogram};
use crate::Real;

/// One ellipse of a phantom, in physical coordinates (image square `[−1, 1]²`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub rotation: f64,
    pub intensity: f64,
    /// Optional linear intensity ramp `(g1, g2)` per unit of physical length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<[f64; 2]>,
}

impl EllipseSpec {
    pub fn disk(center: [f64; 2], radius: f64, intensity: f64) -> Self {
        EllipseSpec {
            center,
            semi_axes: [radius, radius],
            rotation: 0.0,
            intensity,
            ramp: None,
        }
    }

    /// Coordinates in the ellipse frame, scaled so the boundary is the unit circle.
    fn local(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        [
            (c * dx + s * dy) / self.semi_axes[0],
            (-s * dx + c * dy) / self.semi_axes[1],
        ]
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        let l = self.local(x);
        l[0] * l[0] + l[1] * l[1] <= 1.0
    }

    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        let base = self.intensity;
        match self.ramp {
            Some(g) => base + g[0] * (x[0] - self.center[0]) + g[1] * (x[1] - self.center[1]),
            None => base,
        }
    }

    /// Boundary point at parameter `t` and its outward normal angle (unnormalized).
    pub fn boundary_point(&self, t: f64) -> ([f64; 2], f64) {
        let (s, c) = self.rotation.sin_cos();
        let (st, ct) = t.sin_cos();
        let [a, b] = self.semi_axes;
        let lx = a * ct;
        let ly = b * st;
        let p = [
            self.center[0] + c * lx - s * ly,
            self.center[1] + s * lx + c * ly,
        ];
        // gradient of the implicit form in the local frame, rotated back
        let nx = ct / a;
        let ny = st / b;
        let n = [c * nx - s * ny, s * nx + c * ny];
        (p, n[1].atan2(n[0]))
    }

    /// Largest distance from the origin reached by the ellipse (upper bound).
    pub fn reach(&self) -> f64 {
        (self.center[0].powi(2) + self.center[1].powi(2)).sqrt()
            + self.semi_axes[0].max(self.semi_axes[1])
    }
}

/// Random phantom parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub count_min: usize,
    pub count_max: usize,
    pub axis_min: f64,
    pub axis_max: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Linear intensity ramps inside ellipses.
    pub ramps: bool,
    /// Sub-samples per pixel side used for anti-aliasing.
    pub supersample: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            count_min: 3,
            count_max: 8,
            axis_min: 0.08,
            axis_max: 0.45,
            intensity_min: 0.2,
            intensity_max: 1.0,
            ramps: false,
            supersample: 4,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count_min == 0 || self.count_min > self.count_max {
            return Err(Error::invalid("ellipse count range must satisfy 1 <= min <= max"));
        }
        if !(self.axis_min > 0.0 && self.axis_min <= self.axis_max && self.axis_max < 1.0) {
            return Err(Error::invalid("axis range must satisfy 0 < min <= max < 1"));
        }
        if self.intensity_min > self.intensity_max {
            return Err(Error::invalid("intensity range is empty"));
        }
        if self.supersample == 0 {
            return Err(Error::invalid("supersample must be positive"));
        }
        Ok(())
    }
}

/// Rasterizes ellipses by area sampling; overlapping intensities add and the
/// result is clipped to `[0, 1]`.
pub fn rasterize<T: Real>(specs: &[EllipseSpec], side: usize, supersample: usize) -> Image<T> {
    let k = supersample.max(1);
    let pitch = 2.0 / side as f64;
    let sub = pitch / k as f64;
    let norm = 1.0 / (k * k) as f64;
    Image::from_fn(side, |r, c| {
        let x0 = -1.0 + c as f64 * pitch;
        let y0 = -1.0 + r as f64 * pitch;
        let mut acc = 0.0;
        for i in 0..k {
            for j in 0..k {
                let x = [x0 + (j as f64 + 0.5) * sub, y0 + (i as f64 + 0.5) * sub];
                for e in specs {
                    if e.contains(x) {
                        acc += e.value_at(x);
                    }
                }
            }
        }
        T::lit((acc * norm).clamp(0.0, 1.0))
    })
}

/// Random ellipse phantom; a pure function of `(seed, size, config)`.
pub fn generate_phantom<T: Real>(
    seed: u64,
    size: usize,
    config: &PhantomConfig,
) -> Result<(Image<T>, Vec<EllipseSpec>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(config.count_min..=config.count_max);
    let mut specs = Vec::with_capacity(count);
    while specs.len() < count {
        let a = rng.random_range(config.axis_min..=config.axis_max);
        let b = rng.random_range(config.axis_min..=config.axis_max);
        let rotation = rng.random_range(0.0..std::f64::consts::PI);
        let radius = 1.0 - a.max(b);
        let rho = radius * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let intensity = rng.random_range(config.intensity_min..=config.intensity_max);
        let ramp = config.ramps.then(|| {
            let g = rng.random_range(-0.5..=0.5) * intensity / a.max(b);
            let dir = rng.random_range(0.0..std::f64::consts::TAU);
            [g * dir.cos(), g * dir.sin()]
        });
        let e = EllipseSpec {
            center: [rho * phi.cos(), rho * phi.sin()],
            semi_axes: [a, b],
            rotation,
            intensity,
            ramp,
        };
        // keep all mass inside the inscribed unit disk
        if e.reach() <= 1.0 {
            specs.push(e);
        }
    }
    let image = rasterize(&specs, size, config.supersample);
    Ok((image, specs))
}

/// `m = R u + ε`, `ε ~ N(0, (σ_rel · max R u)²)` i.i.d., with the
/// projector's normalization applied to the clean part.
pub fn simulate_measurement<T: Real>(
    u: &Image<T>,
    projector: &Projector<T>,
    sigma_rel: f64,
    seed: u64,
) -> Result<Sinogram<T>> {
    if !(sigma_rel >= 0.0 && sigma_rel.is_finite()) {
        return Err(Error::invalid(format!("noise level must be >= 0, got {sigma_rel}")));
    }
    let mut m = projector.forward(u)?;
    if sigma_rel == 0.0 {
        return Ok(m);
    }
    let sd = sigma_rel * m.max_value().to_f64_lossy().max(0.0);
    if sd == 0.0 {
        return Ok(m);
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in m.as_mut_slice() {
        *v += T::lit(normal.sample(&mut rng));
    }
    Ok(m)
}

/// Independent per-sample seed derived from a master seed and a stream index.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

//! Boolean supports for the learnable correction filters.
//!
//! A filter cell at offset `v = (dx, dy)` from the centre (`dx` along
//! columns, `dy` along rows) lies on the line through the origin whose
//! normal is `angle(v) − π/2`. That line is one of the integration lines of
//! the scan exactly when its normal belongs to the angle set, so:
//!
//! * **Bow** keeps every cell whose line normal lies in `[−Γ, Γ]` (the cone
//!   where the limited-angle normal operator has its kernel), widened by `q`.
//! * **X** keeps stripes of half-width `q + ½` around the two cone edges,
//!   i.e. the lines with normals `±Γ`.
//! * **Sparse** keeps stripes around the lines with the measured normals.
//!
//! With this convention `dy/dx = tan(ω + π/2)` for a line of normal `ω`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, AngleSet, ANGLE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Full,
    Bow,
    X,
    Sparse,
}

impl MaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MaskKind::Full),
            "bow" => Ok(MaskKind::Bow),
            "x" => Ok(MaskKind::X),
            "sparse" => Ok(MaskKind::Sparse),
            other => Err(Error::invalid(format!("unknown mask kind '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Full => "full",
            MaskKind::Bow => "bow",
            MaskKind::X => "x",
            MaskKind::Sparse => "sparse",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterMask {
    size: usize,
    kind: MaskKind,
    q: usize,
    support: Vec<bool>,
    active_count: usize,
}

impl FilterMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    #[inline]
    pub fn is_active(&self, row: usize, col: usize) -> bool {
        self.support[row * self.size + col]
    }

    /// `support(a) ⊆ support(b)`.
    pub fn is_subset_of(&self, other: &FilterMask) -> bool {
        self.size == other.size
            && self
                .support
                .iter()
                .zip(&other.support)
                .all(|(&a, &b)| !a || b)
    }

    /// Plain PBM (P1) rendering, `1` = active.
    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.size, self.size);
        for r in 0..self.size {
            let row: Vec<&str> = (0..self.size)
                .map(|c| if self.is_active(r, c) { "1" } else { "0" })
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Normal of the line through the origin along `(dx, dy)`.
fn line_normal(dx: f64, dy: f64) -> f64 {
    normalize_angle(dy.atan2(dx) - FRAC_PI_2)
}

/// Euclidean distance from `(dx, dy)` to the line through the origin with normal `omega`.
fn distance_to_line(dx: f64, dy: f64, omega: f64) -> f64 {
    let (s, c) = omega.sin_cos();
    (dx * c + dy * s).abs()
}

/// Chebyshev distance from `(x, y)` to the line through the origin along `(a, b)`.
fn chebyshev_to_line(x: f64, y: f64, a: f64, b: f64) -> f64 {
    let f = |t: f64| (x - t * a).abs().max((y - t * b).abs());
    let mut candidates = vec![0.0];
    for (num, den) in [(x, a), (y, b), (x - y, a - b), (x + y, a + b)] {
        if den.abs() > 1e-15 {
            candidates.push(num / den);
        }
    }
    candidates.into_iter().map(f).fold(f64::INFINITY, f64::min)
}

fn in_cone(dx: f64, dy: f64, gamma: f64) -> bool {
    (dx == 0.0 && dy == 0.0) || line_normal(dx, dy).abs() <= gamma + ANGLE_TOL
}

/// Builds the support of `kind` for a `p × p` filter with stripe half-width `q`.
pub fn build_mask(kind: MaskKind, angles: &AngleSet, p: usize, q: usize) -> Result<FilterMask> {
    if p % 2 == 0 {
        return Err(Error::invalid(format!("filter size must be odd, got {p}")));
    }
    match (kind, angles) {
        (MaskKind::Full, _) => {}
        (MaskKind::Bow | MaskKind::X, AngleSet::LimitedInterval { .. }) => {}
        (MaskKind::Sparse, AngleSet::SparseDiscrete { .. }) => {}
        (k, a) => {
            return Err(Error::invalid(format!(
                "{} mask is incompatible with angle set {a:?}",
                k.name()
            )))
        }
    }
    let half = (p / 2) as i64;
    let stripe = q as f64 + 0.5 + ANGLE_TOL;
    let mut support = vec![false; p * p];
    for r in 0..p {
        for c in 0..p {
            let dx = (c as i64 - half) as f64;
            let dy = (r as i64 - half) as f64;
            let on = match (kind, angles) {
                (MaskKind::Full, _) => true,
                (MaskKind::Bow, AngleSet::LimitedInterval { gamma }) => {
                    in_cone(dx, dy, *gamma)
                        || [-gamma, *gamma].iter().any(|&w| {
                            let (s, cs) = w.sin_cos();
                            distance_to_line(dx, dy, w) <= stripe
                                || chebyshev_to_line(dx, dy, -s, cs) <= q as f64 + ANGLE_TOL
                        })
                }
                (MaskKind::X, AngleSet::LimitedInterval { gamma }) => {
                    distance_to_line(dx, dy, -gamma) <= stripe
                        || distance_to_line(dx, dy, *gamma) <= stripe
                }
                (MaskKind::Sparse, AngleSet::SparseDiscrete { angles, .. }) => angles
                    .iter()
                    .any(|&w| distance_to_line(dx, dy, w) <= stripe),
                _ => unreachable!("compatibility checked above"),
            };
            support[r * p + c] = on;
        }
    }
    let active_count = support.iter().filter(|&&b| b).count();
    Ok(FilterMask {
        size: p,
        kind,
        q,
        support,
        active_count,
    })
}

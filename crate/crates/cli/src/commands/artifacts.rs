use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use microct::geometry::{AngleSet, ScanGeometry, ANGLE_TOL};
use microct::io::write_json;
use microct::microlocal::{
    classify_visibility, default_streak_tolerance, ellipse_edges, predict_streaks, EdgePoint, StreakLine, Visibility,
};
use microct::phantoms::{rasterize, read_dataset, EllipseSpec, Split};
use microct::xray::{fbp, Image, Projector, RampWindow};

use crate::config::{usage, write_resolved, Merge};
use crate::fill_fields;

#[derive(clap::Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    /// Take the phantom from a dataset instead of `--disk`
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Sample index within the split
    #[arg(long)]
    pub index: Option<usize>,
    /// `x,y,r` disk phantom (used when no dataset is given)
    #[arg(long)]
    pub disk: Option<String>,
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub angles: Option<usize>,
    /// Boundary points sampled per ellipse
    #[arg(long)]
    pub points: Option<usize>,
    /// Angular tolerance in degrees for streak prediction (default: one angle step)
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Underlay: phantom or fbp
    #[arg(long)]
    pub background: Option<String>,
    /// Overlay magnification
    #[arg(long)]
    pub zoom: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

impl Merge for Args {
    fn fill_from(&mut self, file: Self) {
        fill_fields!(self, file; data, split, index, disk, geometry, size, angles, points, tolerance, background, zoom, out);
    }

    fn apply_defaults(&mut self) {
        self.split.get_or_insert_with(|| "test".into());
        self.index.get_or_insert(0);
        self.points.get_or_insert(720);
        self.background.get_or_insert_with(|| "fbp".into());
        self.zoom.get_or_insert(4);
        if self.data.is_none() {
            self.disk.get_or_insert_with(|| "0,0,0.5".into());
            self.geometry.get_or_insert_with(|| "limited:60".into());
            self.size.get_or_insert(128);
            if self.angles.is_none() {
                let sparse = self.geometry.as_deref().and_then(|g| g.strip_prefix("sparse:"));
                self.angles = Some(sparse.and_then(|n| n.parse().ok()).unwrap_or(120));
            }
        }
    }
}

#[derive(Serialize)]
struct EdgeRecord {
    position: [f64; 2],
    normal_deg: f64,
    visibility: Visibility,
}

#[derive(Serialize)]
struct StreakRecord {
    omega_deg: f64,
    offset: f64,
    source: [f64; 2],
}

#[derive(Serialize)]
struct Report {
    angle_set: AngleSet,
    tolerance_deg: f64,
    visible: usize,
    invisible: usize,
    boundary: usize,
    /// Distinct streak normal directions in degrees.
    streak_directions: Vec<f64>,
    streaks: Vec<StreakRecord>,
    edges: Vec<EdgeRecord>,
}

fn parse_disk(s: &str) -> anyhow::Result<EllipseSpec> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--disk expects x,y,r, got '{s}'")))?;
    match v[..] {
        [x, y, r] if r > 0.0 => Ok(EllipseSpec::disk([x, y], r, 1.0)),
        _ => Err(usage(format!("--disk expects x,y,r with r > 0, got '{s}'"))),
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let out = args.out.clone().ok_or_else(|| usage("missing required --out"))?;
    let (geometry, specs, phantom, measured) = match &args.data {
        Some(dir) => {
            let ds = read_dataset(dir)?;
            let sample = ds.load::<f64>(Split::parse(args.split.as_deref().unwrap())?, args.index.unwrap())?;
            let recon = fbp(&sample.sinogram, &ds.projector::<f64>()?, RampWindow::Hann)?;
            (ds.geometry().clone(), sample.specs, sample.image, Some(recon))
        }
        None => {
            let angle_set = AngleSet::parse(args.geometry.as_deref().unwrap())?;
            let g = ScanGeometry::new(args.size.unwrap(), angle_set, args.angles.unwrap())?;
            let spec = parse_disk(args.disk.as_deref().unwrap())?;
            let img: Image<f64> = rasterize(std::slice::from_ref(&spec), g.image_size, 4);
            (g, vec![spec], img, None)
        }
    };
    let tolerance = match args.tolerance {
        Some(deg) if deg >= 0.0 => deg.to_radians(),
        Some(_) => return Err(usage("--tolerance must be >= 0")),
        None => default_streak_tolerance(&geometry),
    };
    let background = match args.background.as_deref().unwrap() {
        "phantom" => phantom,
        "fbp" => match measured {
            Some(recon) => recon,
            None => {
                let p = Projector::<f64>::new(&geometry)?;
                fbp(&p.forward(&phantom)?, &p, RampWindow::Hann)?
            }
        },
        b => return Err(usage(format!("unknown --background '{b}' (expected phantom or fbp)"))),
    };

    let per_spec: Vec<Vec<EdgePoint>> = specs.iter().map(|s| ellipse_edges(s, args.points.unwrap())).collect();
    let edges: Vec<EdgePoint> = per_spec.iter().flatten().copied().collect();
    let streaks = predict_streaks(&edges, &geometry.angle_set, tolerance);
    let classes: Vec<Visibility> = edges.iter().map(|e| classify_visibility(e, &geometry.angle_set)).collect();

    super::ensure_empty_dir(&out, args.force, &["overlay.png", "artifacts.json", "resolved_config.json"])?;
    write_resolved(&out, &args)?;
    draw_overlay(&out.join("overlay.png"), &background, &per_spec, &geometry.angle_set, &streaks, args.zoom.unwrap())?;

    let mut dirs: BTreeMap<i64, f64> = BTreeMap::new();
    for s in &streaks {
        dirs.entry((s.omega / ANGLE_TOL.sqrt()).round() as i64).or_insert(s.omega);
    }
    let count = |v: Visibility| classes.iter().filter(|&&c| c == v).count();
    let report = Report {
        angle_set: geometry.angle_set.clone(),
        tolerance_deg: tolerance.to_degrees(),
        visible: count(Visibility::Visible),
        invisible: count(Visibility::Invisible),
        boundary: count(Visibility::Boundary),
        streak_directions: dirs.values().map(|w| w.to_degrees()).collect(),
        streaks: streaks
            .iter()
            .map(|s| StreakRecord {
                omega_deg: s.omega.to_degrees(),
                offset: s.offset,
                source: s.source.position,
            })
            .collect(),
        edges: edges
            .iter()
            .zip(&classes)
            .map(|(e, &v)| EdgeRecord {
                position: e.position,
                normal_deg: e.normal.to_degrees(),
                visibility: v,
            })
            .collect(),
    };
    write_json(&out.join("artifacts.json"), &report)?;
    println!(
        "{} visible, {} invisible, {} boundary edge points; {} streak direction(s): {:?}",
        report.visible,
        report.invisible,
        report.boundary,
        report.streak_directions.len(),
        report.streak_directions
    );
    Ok(())
}

const VISIBLE: [u8; 3] = [40, 220, 60];
const INVISIBLE: [u8; 3] = [230, 40, 40];
const BOUNDARY: [u8; 3] = [250, 200, 30];
const STREAK: [u8; 3] = [60, 140, 255];

struct Canvas {
    buf: image::RgbImage,
    side: usize,
    zoom: usize,
}

impl Canvas {
    /// Physical `(x1, x2)` to canvas pixel; `x1` runs along columns.
    fn to_px(&self, x: [f64; 2]) -> (f64, f64) {
        let s = (self.side * self.zoom) as f64;
        ((x[0] + 1.0) / 2.0 * s, (x[1] + 1.0) / 2.0 * s)
    }

    fn dot(&mut self, x: [f64; 2], color: [u8; 3]) {
        let (c, r) = self.to_px(x);
        let w = self.buf.width() as i64;
        for dr in -1..=1i64 {
            for dc in -1..=1i64 {
                let (cc, rr) = (c as i64 + dc, r as i64 + dr);
                if (0..w).contains(&cc) && (0..w).contains(&rr) {
                    self.buf.put_pixel(cc as u32, rr as u32, image::Rgb(color));
                }
            }
        }
    }

    /// Line `{x : x·(cos ω, sin ω) = offset}` clipped to the image square.
    fn line(&mut self, s: &StreakLine) {
        let (sn, cs) = s.omega.sin_cos();
        let base = [s.offset * cs, s.offset * sn];
        let dir = [-sn, cs];
        let steps = 4 * self.side * self.zoom;
        let w = self.buf.width() as f64;
        for k in 0..=steps {
            let t = -1.5 + 3.0 * k as f64 / steps as f64;
            let (c, r) = self.to_px([base[0] + t * dir[0], base[1] + t * dir[1]]);
            if c >= 0.0 && r >= 0.0 && c < w && r < w {
                self.buf.put_pixel(c as u32, r as u32, image::Rgb(STREAK));
            }
        }
    }
}

fn draw_overlay(
    path: &Path,
    background: &Image<f64>,
    per_spec: &[Vec<EdgePoint>],
    angles: &AngleSet,
    streaks: &[StreakLine],
    zoom: usize,
) -> anyhow::Result<()> {
    if zoom == 0 {
        return Err(usage("--zoom must be positive"));
    }
    let n = background.side();
    let lo = background.min_value();
    let hi = background.max_value();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let buf = image::RgbImage::from_fn((n * zoom) as u32, (n * zoom) as u32, |c, r| {
        let v = (background.get(r as usize / zoom, c as usize / zoom) - lo) / span;
        let g = (v.clamp(0.0, 1.0) * 160.0) as u8;
        image::Rgb([g, g, g])
    });
    let mut canvas = Canvas { buf, side: n, zoom };
    // lines first so that edge marks stay on top
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for s in streaks {
        let key = (s.omega, s.offset);
        if seen.iter().any(|&(w, o)| (w - key.0).abs() < 1e-12 && (o - key.1).abs() < 0.5 / n as f64) {
            continue;
        }
        seen.push(key);
        canvas.line(s);
    }
    for edges in per_spec {
        for (k, e) in edges.iter().enumerate() {
            match classify_visibility(e, angles) {
                Visibility::Visible => canvas.dot(e.position, VISIBLE),
                Visibility::Boundary => canvas.dot(e.position, BOUNDARY),
                // dashes of four samples
                Visibility::Invisible if (k / 4) % 2 == 0 => canvas.dot(e.position, INVISIBLE),
                Visibility::Invisible => {}
            }
        }
    }
    canvas.buf.save(path).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

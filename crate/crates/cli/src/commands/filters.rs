use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use microct::geometry::{AngleSet, ScanGeometry};
use microct::io::{write_f32, write_json, write_png16_rect};
use microct::masks::{build_mask, MaskKind};
use microct::microlocal::estimate_kernel_atlas;
use microct::unrolled::{filter_scale, load_params};
use microct::wavelet::num_subbands;
use microct::xray::{estimate_operator_norm, Projector};

use crate::config::{usage, write_resolved, Merge};
use crate::fill_fields;

#[derive(clap::Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Args {
    /// Tile the learned filters of this parameter file instead of estimating an atlas
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Block whose filters are shown
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub filter_size: Option<usize>,
    /// Also report per-patch energy inside this mask (atlas mode)
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub force: bool,
}

impl Merge for Args {
    fn fill_from(&mut self, file: Self) {
        fill_fields!(self, file; checkpoint, layer, geometry, size, angles, levels, filter_size, mask, q, out);
    }

    fn apply_defaults(&mut self) {
        if self.checkpoint.is_some() {
            self.layer.get_or_insert(0);
            return;
        }
        self.geometry.get_or_insert_with(|| "limited:60".into());
        self.size.get_or_insert(64);
        self.levels.get_or_insert(3);
        self.filter_size.get_or_insert(7);
        self.q.get_or_insert(0);
        if self.angles.is_none() {
            let sparse = self.geometry.as_deref().and_then(|g| g.strip_prefix("sparse:"));
            self.angles = Some(sparse.and_then(|n| n.parse().ok()).unwrap_or(60));
        }
    }
}

#[derive(Serialize)]
struct TilingInfo {
    source: String,
    subbands: usize,
    patch: usize,
    /// Tile `(ι, ι′)` sits at tile row `ι`, tile column `ι′`; the raw dump
    /// has the same `[ι][ι′][row][col]` order.
    layout: &'static str,
    /// Largest absolute value per tile; each tile is scaled by its own.
    tile_max_abs: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_energy: Option<Vec<f64>>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let out = args.out.clone().ok_or_else(|| usage("missing required --out"))?;
    let (source, q, p, values, mask_energy) = match &args.checkpoint {
        Some(ckpt) => {
            let (params, _) = load_params(ckpt)?;
            let k = args.layer.unwrap();
            let layer = params.layers.get(k).ok_or_else(|| {
                usage(format!("--layer {k} out of range ({} blocks)", params.blocks()))
            })?;
            // what the correction applies: masked taps times the fixed scale
            let scale = filter_scale(&params.mask);
            let support = params.mask.support();
            let applied = layer
                .filters
                .iter()
                .enumerate()
                .map(|(i, &v)| if support[i % support.len()] { v * scale } else { 0.0 })
                .collect();
            (
                format!("{} block {k}", ckpt.display()),
                params.num_subbands(),
                params.patch_size(),
                applied,
                None,
            )
        }
        None => {
            let angle_set = AngleSet::parse(args.geometry.as_deref().unwrap())?;
            let g = ScanGeometry::new(args.size.unwrap(), angle_set, args.angles.unwrap())?;
            let norm = estimate_operator_norm(&g, 100, 0)?;
            let projector = Projector::<f64>::normalized(&g, norm)?;
            let levels = args.levels.unwrap();
            let p = args.filter_size.unwrap();
            let atlas = estimate_kernel_atlas(&projector, levels, p)?;
            let q = num_subbands(levels);
            let energy = match args.mask.as_deref() {
                Some(kind) => {
                    let mask = build_mask(MaskKind::parse(kind)?, &g.angle_set, p, args.q.unwrap())?;
                    let mut e = Vec::with_capacity(q * q);
                    for i in 0..q {
                        for j in 0..q {
                            e.push(atlas.energy_fraction(i, j, &mask)?);
                        }
                    }
                    Some(e)
                }
                None => None,
            };
            (
                format!("kernel atlas, {} at {}×{}", args.geometry.as_deref().unwrap(), g.image_size, g.image_size),
                q,
                p,
                atlas.as_slice().to_vec(),
                energy,
            )
        }
    };

    super::ensure_empty_dir(&out, args.force, &["filters.png", "filters.f32", "filters.json", "resolved_config.json"])?;
    write_resolved(&out, &args)?;

    // one-pixel gutters between tiles; each tile mapped from [−max, max] to [0, 1]
    let stride = p + 1;
    let width = q * stride - 1;
    let mut canvas = vec![0.5; width * width];
    let mut tile_max = Vec::with_capacity(q * q);
    for (t, tile) in values.chunks_exact(p * p).enumerate() {
        let (ti, tj) = (t / q, t % q);
        let m = tile.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        tile_max.push(m);
        let scale = if m > 0.0 { 0.5 / m } else { 0.0 };
        for r in 0..p {
            for c in 0..p {
                canvas[(ti * stride + r) * width + tj * stride + c] = 0.5 + scale * tile[r * p + c];
            }
        }
    }
    write_png16_rect(&out.join("filters.png"), width, width, &canvas, 0.0, 1.0)?;
    write_f32(&out.join("filters.f32"), &values)?;
    write_json(
        &out.join("filters.json"),
        &TilingInfo {
            source,
            subbands: q,
            patch: p,
            layout: "row-major [target][source][row][col]",
            tile_max_abs: tile_max,
            mask_energy,
        },
    )?;
    println!("wrote {q}×{q} tiles of {p}×{p} to {}", out.display());
    Ok(())
}

pub mod artifacts;
pub mod eval;
pub mod filters;
pub mod gen_data;
pub mod reconstruct;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::Context;

/// Fails unless `dir` is missing or empty.
pub fn ensure_empty_dir(dir: &Path, force: bool, managed: &[&str]) -> anyhow::Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
        if entries.next().is_some() {
            if !force {
                return Err(crate::config::usage(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    dir.display()
                )));
            }
            for name in managed {
                let p = dir.join(name);
                if p.is_dir() {
                    fs::remove_dir_all(&p).with_context(|| format!("removing {}", p.display()))?;
                } else if p.exists() {
                    fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
                }
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

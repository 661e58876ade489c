//! Flag/config-file merging and resolved-config output.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Invalid command-line usage (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Command arguments whose unset flags can be filled from a config file.
pub trait Merge: Sized + DeserializeOwned {
    fn fill_from(&mut self, file: Self);
    /// Replaces remaining unset values by defaults.
    fn apply_defaults(&mut self);
}

/// Implements [`Merge::fill_from`] for `Option` fields.
#[macro_export]
macro_rules! fill_fields {
    ($self:ident, $file:ident; $($f:ident),* $(,)?) => {
        $( if $self.$f.is_none() { $self.$f = $file.$f; } )*
    };
}

pub fn merge<A: Merge>(mut flags: A, file: Option<&Path>) -> anyhow::Result<A> {
    if let Some(path) = file {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let from_file: A = serde_json::from_str(&text)
            .map_err(|e| usage(format!("invalid config file {}: {e}", path.display())))?;
        flags.fill_from(from_file);
    }
    flags.apply_defaults();
    Ok(flags)
}

/// Writes `resolved_config.json`, loadable again with `--config`.
pub fn write_resolved<A: Serialize>(dir: &Path, args: &A) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("resolved_config.json");
    let text = serde_json::to_string_pretty(args)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn required<T: Clone>(v: &Option<T>, flag: &str) -> anyhow::Result<T> {
    v.clone().ok_or_else(|| usage(format!("missing required --{flag}")))
}

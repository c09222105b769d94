//! Optional TOML run file. Every key mirrors a command-line flag; a flag
//! given on the command line wins over the file.

use std::fmt::Debug;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

/// Seed used when neither the flags nor the file name one.
pub const DEFAULT_SEED: u64 = 20_190_531;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub phi: Option<f64>,
    pub fix_hypers: Option<bool>,
    pub iters: Option<u64>,
    pub burnin: Option<u64>,
    pub thin: Option<u64>,
    pub chains: Option<usize>,
    pub draws: Option<usize>,
    pub stars: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub passes: Option<usize>,
    pub structure: Option<String>,
    pub backward: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flag value if given, else file value, else `default`. Logs when the flag
/// overrides a different file value.
pub fn pick<T: PartialEq + Debug + Clone>(name: &str, flag: Option<T>, file: Option<T>, default: T) -> T {
    match (flag, file) {
        (Some(f), Some(c)) => {
            if f != c {
                log::warn!("--{name} {f:?} overrides {c:?} from the config file");
            }
            f
        }
        (Some(f), None) => f,
        (None, Some(c)) => c,
        (None, None) => default,
    }
}

/// Like [`pick`] for settings without a default.
pub fn pick_required<T: PartialEq + Debug + Clone>(name: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
    match flag {
        Some(f) => Some(pick(name, Some(f.clone()), file, f)),
        None => file,
    }
}

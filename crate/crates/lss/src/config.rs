//! TOML config files. Keys are the long flag names (`n-list`, `fd-n`, ...);
//! anything else is rejected. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub map: Option<String>,
    pub s: Option<f64>,
    pub n: Option<usize>,
    pub n0: Option<usize>,
    pub seed: Option<u64>,
    pub trim: Option<usize>,
    pub ds: Option<f64>,
    pub ensemble: Option<usize>,
    pub reps: Option<usize>,
    pub s_list: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    pub truth: Option<f64>,
    pub fd_n: Option<usize>,
    pub fd_n0: Option<usize>,
    pub fit_range: Option<Vec<String>>,
    pub points: Option<usize>,
    pub h: Option<f64>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
    pub mean_output: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Parses `lo:hi` into an inclusive `n` range.
pub fn parse_fit_range(text: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| format!("fit range `{text}` is not of the form LO:HI"))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|e| format!("fit range `{text}`: {e}"))
    };
    Ok((parse(lo)?, parse(hi)?))
}

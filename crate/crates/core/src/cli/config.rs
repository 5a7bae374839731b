use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::chain::ExpansionConfig;
use crate::oracle::OracleConfig;

/// Contents of a `--config` TOML file. Every field is optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Oracle URI used when `--oracle` is absent.
    pub oracle_uri: Option<String>,
    pub paths: PathsConfig,
    pub oracle: OracleConfig,
    pub mining: MiningOverrides,
    pub expansion: ExpansionConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub store: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub judge_table: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningOverrides {
    pub targets: Vec<String>,
    pub sample_n: Option<usize>,
    pub gamma: Option<usize>,
    pub max_hops: Option<u8>,
    pub seed: Option<u64>,
    pub degree_cap: Option<usize>,
}

impl RunConfig {
    /// Reads a config file. Relative paths in `[paths]` resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.store,
            &mut p.labels,
            &mut p.meta,
            &mut p.rules,
            &mut p.dataset,
            &mut p.judge_table,
            &mut p.out_dir,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg: RunConfig = toml::from_str(
            "seed = 3\n[paths]\nstore = \"kb.tsv\"\n[mining]\ngamma = 2\n[expansion]\ndepth = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.mining.gamma, Some(2));
        assert_eq!(cfg.expansion.depth, 2);
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }
}

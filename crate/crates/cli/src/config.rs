//! Config files: `key = value` lines grouped under `[model]`, `[study]` and
//! `[output]` headers (TOML syntax).

use std::path::{Path, PathBuf};

use halford::error::HalfordError;
use halford::harness::{StudyConfig, StudyId};
use serde::Deserialize;

use crate::model::ModelArgs;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub model: ModelArgs,
    #[serde(default)]
    pub study: Option<toml::Table>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

pub fn load(path: &Path) -> Result<ConfigFile, HalfordError> {
    let text = std::fs::read_to_string(path)?;
    parse(&text).map_err(|e| HalfordError::Input(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<ConfigFile, HalfordError> {
    toml::from_str(text).map_err(|e| HalfordError::Input(e.message().to_string()))
}

/// Starts from the defaults of the named study and applies every key of the
/// `[study]` table on top. Unknown keys are rejected.
pub fn study_config(
    table: &toml::Table,
    id_override: Option<StudyId>,
) -> Result<StudyConfig, HalfordError> {
    let id = match (id_override, table.get("study")) {
        (Some(id), _) => id,
        (None, Some(toml::Value::String(s))) => s.parse()?,
        (None, Some(other)) => {
            return Err(HalfordError::Input(format!(
                "`study` must be a string, got {other}"
            )))
        }
        (None, None) => {
            return Err(HalfordError::Input(
                "[study] section needs `study = \"...\"`".into(),
            ))
        }
    };
    let mut merged = toml::Table::try_from(StudyConfig::new(id))
        .map_err(|e| HalfordError::Input(e.to_string()))?;
    for (k, v) in table {
        merged.insert(k.clone(), v.clone());
    }
    merged.insert("study".into(), toml::Value::String(id.name().into()));
    let cfg: StudyConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| HalfordError::Input(format!("[study]: {}", e.message())))?;
    Ok(cfg)
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::eval::{PrecisionMode, VariantId};
use crate::replay::sha256_hex;

/// A file produced or consumed by a run, with its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Artifact {
            path: fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
            sha256: sha256_hex(&bytes),
        })
    }

    fn verify(&self, field: &str) -> Result<(), CliError> {
        let bytes = fs::read(&self.path).map_err(|e| CliError::Manifest {
            field: field.to_string(),
            message: format!("{}: {e}", self.path.display()),
        })?;
        if sha256_hex(&bytes) != self.sha256 {
            return Err(CliError::Manifest {
                field: field.to_string(),
                message: format!("{} changed since it was recorded", self.path.display()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub artifact: Artifact,
    pub variant: VariantId,
    pub precision: PrecisionMode,
    pub dropout: f64,
    pub seed: u64,
    pub run: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogColumns {
    pub case: String,
    pub label: String,
    pub time: String,
    pub time_format: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Dataset name used in report rows and stage seeds.
    pub name: String,
    pub seed: u64,
    pub node_cap: usize,
    pub predict_end: bool,
    pub skip_unknown: bool,
    pub columns: LogColumns,
    /// Suite config of an experiment run.
    pub config: Option<Artifact>,
    pub pnml: Option<Artifact>,
    pub log: Option<Artifact>,
    pub splits: Option<Artifact>,
    pub decay: Option<Artifact>,
    pub alphabet: Option<Artifact>,
    pub rgr: Option<Artifact>,
    /// `train`, `validation`, `test`: the `.bin` half of each dataset.
    pub datasets: BTreeMap<String, Artifact>,
    pub models: BTreeMap<String, ModelEntry>,
    pub reports: BTreeMap<String, Artifact>,
    pub variants: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            ..Default::default()
        }
    }

    /// Reads a manifest and checks that every artifact it lists is unchanged.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        m.verify()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    fn singles(&self) -> [(&'static str, &Option<Artifact>); 7] {
        [
            ("config", &self.config),
            ("pnml", &self.pnml),
            ("log", &self.log),
            ("splits", &self.splits),
            ("decay", &self.decay),
            ("alphabet", &self.alphabet),
            ("rgr", &self.rgr),
        ]
    }

    pub fn verify(&self) -> Result<(), CliError> {
        for (field, a) in self.singles() {
            if let Some(a) = a {
                a.verify(field)?;
            }
        }
        for (k, a) in &self.datasets {
            a.verify(&format!("datasets.{k}"))?;
        }
        for (k, m) in &self.models {
            m.artifact.verify(&format!("models.{k}"))?;
        }
        for (k, a) in &self.reports {
            a.verify(&format!("reports.{k}"))?;
        }
        Ok(())
    }

    /// The artifact under `field`, or an error naming the field.
    pub fn require(&self, field: &str) -> Result<&Artifact, CliError> {
        let found = match field.split_once('.') {
            Some(("datasets", k)) => self.datasets.get(k),
            Some(("models", k)) => self.models.get(k).map(|m| &m.artifact),
            Some(("reports", k)) => self.reports.get(k),
            _ => self
                .singles()
                .into_iter()
                .find(|(f, _)| *f == field)
                .and_then(|(_, a)| a.as_ref()),
        };
        found.ok_or_else(|| CliError::Manifest {
            field: field.to_string(),
            message: "not recorded; run the stage that produces it first".into(),
        })
    }
}

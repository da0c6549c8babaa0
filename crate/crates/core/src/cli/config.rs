use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::episodes::{ClassEntry, EpisodeConfig, SyntheticTasks};
use crate::maml::MamlConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub csv_path: Option<PathBuf>,
    pub label_column: String,
    pub feature_columns: Vec<String>,
    pub n_test_classes: usize,
    /// Class sizes to split when no CSV is given (`split` only).
    pub class_counts: Option<Vec<ClassEntry>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv_path: None,
            label_column: "refactoring".into(),
            feature_columns: Vec::new(),
            n_test_classes: 5,
            class_counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub checkpoint_path: PathBuf,
    pub report_path: PathBuf,
    pub baseline_report_path: PathBuf,
    pub train_log_path: PathBuf,
    pub split_path: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            checkpoint_path: "checkpoint.json".into(),
            report_path: "metrics.jsonl".into(),
            baseline_report_path: "baseline.jsonl".into(),
            train_log_path: "train_log.jsonl".into(),
            split_path: "split.json".into(),
        }
    }
}

/// Everything a command needs. Defaults reproduce the reference regime:
/// 2-way 5-shot episodes with 15 queries, α = β = 0.001, 5000
/// meta-iterations of 25 tasks, one adaptation step, 30 test batches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub episode: EpisodeConfig,
    pub maml: MamlConfig,
    pub data: DataConfig,
    pub synthetic: SyntheticTasks,
    pub io: IoConfig,
}

impl RunConfig {
    /// Defaults, overlaid with the JSON file at `path` (if any), overlaid
    /// with `key.path=value` overrides, then validated.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut merged = serde_json::to_value(Self::default()).expect("defaults serialize");
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut merged, file);
        }
        for ov in overrides {
            apply_override(&mut merged, ov)?;
        }
        let cfg: Self =
            serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.maml.validate()?;
        if self.synthetic.dim == 0 {
            return Err(Error::Config("synthetic.dim must be >= 1".into()));
        }
        if !(self.synthetic.cluster_std >= 0.0 && self.synthetic.cluster_std.is_finite()) {
            return Err(Error::Config("synthetic.cluster_std must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is read as JSON when it parses, else as a string.
fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut slot = root;
    for part in key.trim().split('.') {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} walks into a non-object")))?;
        slot = obj.entry(part.to_owned()).or_insert(Value::Null);
    }
    *slot = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maml::GradMode;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::load(None, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply_by_path() {
        let cfg = RunConfig::load(
            None,
            &[
                "maml.alpha=0.25".into(),
                "maml.grad_mode=exact".into(),
                "episode.n_way=3".into(),
                "data.csv_path=data/x.csv".into(),
                "data.feature_columns=[\"a\",\"b\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.maml.alpha, 0.25);
        assert_eq!(cfg.maml.grad_mode, GradMode::Exact);
        assert_eq!(cfg.episode.n_way, 3);
        assert_eq!(cfg.data.csv_path, Some(PathBuf::from("data/x.csv")));
        assert_eq!(cfg.data.feature_columns, vec!["a", "b"]);
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"maml": {"seed": 4, "beta": 0.5}, "episode": {"k_shot": 3}}"#).unwrap();
        let cfg = RunConfig::load(Some(&path), &["maml.seed=9".into()]).unwrap();
        assert_eq!(cfg.maml.seed, 9);
        assert_eq!(cfg.maml.beta, 0.5);
        assert_eq!(cfg.episode.k_shot, 3);
        assert_eq!(cfg.episode.q_query, 15);
    }

    #[test]
    fn rejects_invalid() {
        assert!(matches!(RunConfig::load(None, &["maml.alpha=0".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::load(None, &["episode.n_way=1".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::load(None, &["maml.bogus=1".into()]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::load(None, &["noequals".into()]), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::load(None, &["maml.alpha.x=1".into()]),
            Err(Error::Config(_))
        ));
    }
}

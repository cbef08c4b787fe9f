//! Dataset manifests: per-scenario split counts and optional file
//! lists. The one structural rule that matters downstream is that
//! multi-anomaly scenes belong to the test split only; training data
//! never contains them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::atomic_write;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub normal: i64,
    pub single_anomaly: i64,
    #[serde(default)]
    pub multi_anomaly: i64,
}

impl SplitCounts {
    pub fn total(&self) -> i64 {
        self.normal + self.single_anomaly + self.multi_anomaly
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFiles {
    #[serde(default)]
    pub normal: Vec<String>,
    #[serde(default)]
    pub single_anomaly: Vec<String>,
    #[serde(default)]
    pub multi_anomaly: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub name: String,
    pub train: SplitCounts,
    pub test: SplitCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_files: Option<SplitFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_files: Option<SplitFiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenarios: Vec<ScenarioEntry>,
}

/// One problem found by [`validate_manifest`]. `scenario` is the entry
/// name, `field` a dotted path like `train.multi_anomaly`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub scenario: String,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "manifest ok");
        }
        for issue in &self.issues {
            writeln!(f, "{}: {}: {}", issue.scenario, issue.field, issue.message)?;
        }
        write!(f, "{} issue(s)", self.issues.len())
    }
}

pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |scenario: &str, field: &str, message: String| {
        issues.push(ValidationIssue {
            scenario: scenario.to_string(),
            field: field.to_string(),
            message,
        });
    };

    let mut seen = std::collections::BTreeSet::new();
    for entry in &manifest.scenarios {
        if entry.name.is_empty() {
            push("", "name", "scenario name is empty".into());
        }
        if !seen.insert(entry.name.as_str()) {
            push(&entry.name, "name", "duplicate scenario name".into());
        }

        for (split_name, counts) in [("train", &entry.train), ("test", &entry.test)] {
            for (kind, count) in [
                ("normal", counts.normal),
                ("single_anomaly", counts.single_anomaly),
                ("multi_anomaly", counts.multi_anomaly),
            ] {
                if count < 0 {
                    push(
                        &entry.name,
                        &format!("{split_name}.{kind}"),
                        format!("negative count {count}"),
                    );
                }
            }
        }

        if entry.train.multi_anomaly != 0 {
            push(
                &entry.name,
                "train.multi_anomaly",
                format!(
                    "multi-anomaly scenes are test-only, found {} in train",
                    entry.train.multi_anomaly
                ),
            );
        }
        if let Some(files) = &entry.train_files {
            if !files.multi_anomaly.is_empty() {
                push(
                    &entry.name,
                    "train_files.multi_anomaly",
                    format!(
                        "multi-anomaly scenes are test-only, found {} file(s) in train",
                        files.multi_anomaly.len()
                    ),
                );
            }
        }

        for (prefix, counts, files) in [
            ("train_files", &entry.train, &entry.train_files),
            ("test_files", &entry.test, &entry.test_files),
        ] {
            let Some(files) = files else { continue };
            for (kind, count, list) in [
                ("normal", counts.normal, &files.normal),
                ("single_anomaly", counts.single_anomaly, &files.single_anomaly),
                ("multi_anomaly", counts.multi_anomaly, &files.multi_anomaly),
            ] {
                if count >= 0 && list.len() as i64 != count {
                    push(
                        &entry.name,
                        &format!("{prefix}.{kind}"),
                        format!("{} file(s) listed but count says {}", list.len(), count),
                    );
                }
            }
        }
    }

    ValidationReport { issues }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    atomic_write(path, json.as_bytes()).map_err(|source| ManifestError::Write {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str) -> ScenarioEntry {
        ScenarioEntry {
            name: name.into(),
            train: SplitCounts {
                normal: 10,
                single_anomaly: 2,
                multi_anomaly: 0,
            },
            test: SplitCounts {
                normal: 5,
                single_anomaly: 3,
                multi_anomaly: 1,
            },
            train_files: None,
            test_files: None,
        }
    }

    #[test]
    fn clean_manifest_passes() {
        let m = DatasetManifest {
            scenarios: vec![entry("pushpins"), entry("screw_bag")],
        };
        assert!(validate_manifest(&m).is_valid());
    }

    #[test]
    fn train_multi_anomaly_flagged() {
        let mut e = entry("pushpins");
        e.train.multi_anomaly = 3;
        let report = validate_manifest(&DatasetManifest { scenarios: vec![e] });
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].field, "train.multi_anomaly");
    }

    #[test]
    fn train_multi_file_list_flagged() {
        let mut e = entry("pushpins");
        e.train_files = Some(SplitFiles {
            normal: vec!["a".into(); 10],
            single_anomaly: vec!["b".into(); 2],
            multi_anomaly: vec!["c.json".into()],
        });
        let report = validate_manifest(&DatasetManifest { scenarios: vec![e] });
        // Both the placement rule and the count mismatch (0 vs 1 file) fire.
        assert!(report
            .issues
            .iter()
            .any(|i| i.field == "train_files.multi_anomaly" && i.message.contains("test-only")));
        assert!(!report.is_valid());
    }

    #[test]
    fn negative_counts_flagged() {
        let mut e = entry("x");
        e.test.normal = -1;
        let report = validate_manifest(&DatasetManifest { scenarios: vec![e] });
        assert!(report.issues.iter().any(|i| i.field == "test.normal"));
    }

    #[test]
    fn file_count_mismatch_flagged() {
        let mut e = entry("x");
        e.test_files = Some(SplitFiles {
            normal: vec!["one.json".into()], // count says 5
            single_anomaly: vec!["s.json".into(); 3],
            multi_anomaly: vec!["m.json".into(); 1],
        });
        let report = validate_manifest(&DatasetManifest { scenarios: vec![e] });
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].field, "test_files.normal");
    }

    #[test]
    fn duplicate_names_flagged() {
        let m = DatasetManifest {
            scenarios: vec![entry("a"), entry("a")],
        };
        let report = validate_manifest(&m);
        assert!(report.issues.iter().any(|i| i.message.contains("duplicate")));
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = DatasetManifest {
            scenarios: vec![entry("juice_bottle")],
        };
        save_manifest(&m, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }
}

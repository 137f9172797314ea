use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// Benchmark inputs, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Validates unique ids and existing image paths.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Parse {
                    what: "manifest".into(),
                    reason: format!("duplicate id {:?}", e.id),
                });
            }
            if !e.image.is_file() {
                return Err(Error::io(
                    &e.image,
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("image for entry {:?} not found", e.id)),
                ));
            }
        }
        Ok(Self { entries })
    }

    /// Parses JSONL. Relative image paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut e: ManifestEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
                what: "manifest".into(),
                reason: format!("line {}: {err}", n + 1),
            })?;
            if e.image.is_relative() {
                e.image = base.join(&e.image);
            }
            entries.push(e);
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads a `label,accuracy` CSV into a map.
pub fn ingest_accuracy(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_accuracy(file, &path.display().to_string())
}

pub fn parse_accuracy(reader: impl std::io::Read, what: &str) -> Result<BTreeMap<String, f64>> {
    let bad = |reason: String| Error::Parse {
        what: what.to_owned(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "label" || &headers[1] != "accuracy" {
        return Err(bad(format!("expected header \"label,accuracy\", got {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let label = rec[0].to_owned();
        let acc: f64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("accuracy {:?} for {label:?} is not a number", &rec[1])))?;
        if !acc.is_finite() {
            return Err(bad(format!("accuracy for {label:?} is not finite")));
        }
        if out.insert(label.clone(), acc).is_some() {
            return Err(bad(format!("duplicate label {label:?}")));
        }
    }
    Ok(out)
}

/// Labels present in the accuracy table that no run produced.
pub fn unmatched_labels<'a>(accuracy: &'a BTreeMap<String, f64>, run_labels: &HashSet<String>) -> Vec<&'a str> {
    accuracy
        .keys()
        .filter(|k| !run_labels.contains(k.as_str()))
        .map(String::as_str)
        .collect()
}

//! Dataset manifests: CSV with header `id,path,label,session,speaker,improvised`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four emotion classes, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger = 0,
    Happy = 1,
    Neutral = 2,
    Sad = 3,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [
        Emotion::Anger,
        Emotion::Happy,
        Emotion::Neutral,
        Emotion::Sad,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Happy => "happy",
            Emotion::Neutral => "neutral",
            Emotion::Sad => "sad",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anger" | "angry" | "ang" => Ok(Emotion::Anger),
            "happy" | "happiness" | "hap" => Ok(Emotion::Happy),
            "neutral" | "neu" => Ok(Emotion::Neutral),
            "sad" | "sadness" => Ok(Emotion::Sad),
            other => Err(Error::Manifest(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Emotion,
    pub session: String,
    pub speaker: String,
    pub improvised: bool,
}

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    path: String,
    label: String,
    session: String,
    speaker: String,
    #[serde(default)]
    improvised: Option<String>,
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" | "n" => Ok(false),
        "1" | "true" | "yes" | "y" => Ok(true),
        other => Err(Error::Manifest(format!("bad improvised flag {other:?}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Checks id uniqueness; paths are not touched.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.id.is_empty() {
                return Err(Error::Manifest("empty utterance id".into()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id {}", e.id)));
            }
        }
        Ok(Self { entries })
    }

    /// Parses CSV text. Relative paths are resolved against `base_dir`.
    pub fn from_reader<R: std::io::Read>(reader: R, base_dir: Option<&Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 1)))?;
            let mut path = PathBuf::from(&row.path);
            if let (Some(base), true) = (base_dir, path.is_relative()) {
                path = base.join(path);
            }
            entries.push(ManifestEntry {
                label: row
                    .label
                    .parse()
                    .map_err(|e| Error::Manifest(format!("row {} ({}): {e}", i + 1, row.id)))?,
                improvised: parse_bool(row.improvised.as_deref().unwrap_or(""))?,
                id: row.id,
                path,
                session: row.session,
                speaker: row.speaker,
            });
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path.parent())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "path", "label", "session", "speaker", "improvised"])?;
        for e in &self.entries {
            let path = e.path.to_string_lossy();
            let improvised = if e.improvised { "1" } else { "0" };
            w.write_record([
                e.id.as_str(),
                path.as_ref(),
                e.label.name(),
                e.session.as_str(),
                e.speaker.as_str(),
                improvised,
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Fails on the first entry whose audio file does not exist.
    pub fn validate_paths(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.path.is_file()) {
            Some(e) => Err(Error::Manifest(format!(
                "{}: audio file {} not found",
                e.id,
                e.path.display()
            ))),
            None => Ok(()),
        }
    }

    pub fn improvised_only(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|e| e.improvised)
                .cloned()
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> [usize; Emotion::COUNT] {
        let mut c = [0; Emotion::COUNT];
        for e in &self.entries {
            c[e.label.index()] += 1;
        }
        c
    }
}

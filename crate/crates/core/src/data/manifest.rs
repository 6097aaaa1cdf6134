use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Normal = 0,
    Tumor = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Tumor];

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Tumor => "tumor",
        }
    }

    /// Maps class folder names onto the binary labels. Benign and malignant
    /// cases are both tumorous.
    pub fn from_dir_name(name: &str) -> Option<Label> {
        match name.to_ascii_lowercase().as_str() {
            "normal" | "no" | "healthy" | "negative" => Some(Label::Normal),
            "tumor" | "tumour" | "yes" | "abnormal" | "benign" | "malignant" | "positive" => {
                Some(Label::Tumor)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Provenance of an augmented copy: the record it was derived from and the
/// seed that regenerates its augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    pub source: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Image file; for augmented copies, the source image.
    pub path: PathBuf,
    pub label: Label,
    pub split: Option<Split>,
    pub origin: Option<Origin>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub records: Vec<Record>,
    /// Set once augmented copies exist; needed to regenerate them.
    pub augment: Option<AugmentConfig>,
}

impl Manifest {
    pub fn new(records: Vec<Record>) -> Self {
        Self {
            records,
            augment: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `[normal, tumor]` counts over all records.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for r in &self.records {
            c[r.label as usize] += 1;
        }
        c
    }

    /// `[normal, tumor]` counts within one split.
    pub fn split_counts(&self, split: Split) -> [usize; 2] {
        let mut c = [0; 2];
        for r in self.records.iter().filter(|r| r.split == Some(split)) {
            c[r.label as usize] += 1;
        }
        c
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    /// `path,label,split,origin` with a header row. `origin` is empty for
    /// source images and `source_index:seed` for augmented copies.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,label,split,origin\n");
        for r in &self.records {
            let split = r.split.map(|s| s.to_string()).unwrap_or_default();
            let origin = r
                .origin
                .map(|o| format!("{}:{}", o.source, o.seed))
                .unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.path.display(),
                r.label as u8,
                split,
                origin
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("path,label,split,origin") {
            return Err(Error::Dataset("manifest header missing".into()));
        }
        let bad = |line: &str| Error::Dataset(format!("malformed manifest line `{line}`"));
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            // Paths may contain commas; the last three fields never do.
            let mut parts = line.rsplitn(4, ',');
            let origin = parts.next().ok_or_else(|| bad(line))?;
            let split = parts.next().ok_or_else(|| bad(line))?;
            let label = parts.next().ok_or_else(|| bad(line))?;
            let path = parts.next().ok_or_else(|| bad(line))?;
            let label = match label {
                "0" => Label::Normal,
                "1" => Label::Tumor,
                _ => return Err(bad(line)),
            };
            let split = if split.is_empty() {
                None
            } else {
                Some(split.parse()?)
            };
            let origin = if origin.is_empty() {
                None
            } else {
                let (s, seed) = origin.split_once(':').ok_or_else(|| bad(line))?;
                Some(Origin {
                    source: s.parse().map_err(|_| bad(line))?,
                    seed: seed.parse().map_err(|_| bad(line))?,
                })
            };
            records.push(Record {
                path: PathBuf::from(path),
                label,
                split,
                origin,
            });
        }
        Ok(Self::new(records))
    }
}

//! Subject records, diagnostic labels and per-subject ROI tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "sMCI")]
    Smci,
    #[serde(rename = "pMCI")]
    Pmci,
}

impl Diagnosis {
    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::Ad => "AD",
            Diagnosis::Nc => "NC",
            Diagnosis::Smci => "sMCI",
            Diagnosis::Pmci => "pMCI",
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Diagnosis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "AD" => Ok(Diagnosis::Ad),
            "NC" | "CN" => Ok(Diagnosis::Nc),
            "sMCI" | "SMCI" => Ok(Diagnosis::Smci),
            "pMCI" | "PMCI" => Ok(Diagnosis::Pmci),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "M" | "m" => Ok(Gender::M),
            "F" | "f" => Ok(Gender::F),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Binary classification task. Class index 1 is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "adnc")]
    AdNc,
    #[serde(rename = "smcipmci")]
    SmciPmci,
}

impl Task {
    /// Labels for class 0 and class 1.
    pub fn classes(self) -> [Diagnosis; 2] {
        match self {
            Task::AdNc => [Diagnosis::Nc, Diagnosis::Ad],
            Task::SmciPmci => [Diagnosis::Smci, Diagnosis::Pmci],
        }
    }

    pub fn class_of(self, d: Diagnosis) -> Option<usize> {
        self.classes().iter().position(|&c| c == d)
    }

    pub fn positive(self) -> Diagnosis {
        self.classes()[1]
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adnc" | "ad_nc" => Ok(Task::AdNc),
            "smcipmci" | "smci_pmci" => Ok(Task::SmciPmci),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::AdNc => "adnc",
            Task::SmciPmci => "smcipmci",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub label: Diagnosis,
    pub gender: Gender,
    pub age: f64,
    /// APOE4 allele count, 0..=2.
    pub apoe4: u8,
    pub mmse: i32,
    /// `None` when the input did not assign one; the harness fills it in.
    pub split: Option<Split>,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0..=30).contains(&self.mmse) {
            return Err(Error::InvalidArgument(format!(
                "subject {}: MMSE {} outside [0, 30]",
                self.id, self.mmse
            )));
        }
        if !(self.age > 0.0 && self.age.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "subject {}: age {} must be positive",
                self.id, self.age
            )));
        }
        if self.apoe4 > 2 {
            return Err(Error::InvalidArgument(format!(
                "subject {}: apoe4 {} outside 0..=2",
                self.id, self.apoe4
            )));
        }
        Ok(())
    }

    pub fn is_reference_eligible(&self) -> bool {
        self.label == Diagnosis::Nc && self.split == Some(Split::Train)
    }
}

/// Per-subject ROI scalars for one modality or tissue channel. Row `r`
/// belongs to `ids[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiFeatureTable {
    pub ids: Vec<String>,
    pub values: Matrix,
}

impl RoiFeatureTable {
    pub fn new(ids: Vec<String>, values: Matrix) -> Result<Self> {
        if ids.len() != values.rows() {
            return Err(Error::Misaligned(format!(
                "{} ids for {} feature rows",
                ids.len(),
                values.rows()
            )));
        }
        Ok(Self { ids, values })
    }

    pub fn n_rois(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Reorders (and subsets) rows to follow `ids`.
    pub fn reorder(&self, ids: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Misaligned(format!("no feature row for subject {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: ids.to_vec(),
            values: self.values.select_rows(&rows),
        })
    }
}

//! Cohort files.
//!
//! A cohort is one subjects table plus one ROI table per modality, all
//! comma-separated UTF-8 with a header row:
//!
//! ```text
//! subjects.csv   id,label,gender,age,apoe4,mmse[,split]
//! pet_suvr.csv   id,roi_1,...,roi_P
//! smri_gm.csv    id,roi_1,...,roi_P
//! smri_wm.csv    id,roi_1,...,roi_P
//! ```
//!
//! `label` is one of `NC`, `AD`, `sMCI`, `pMCI`; `gender` is `M` or `F`;
//! `split` is `train`, `val` or `test` and may be left out (column or cell),
//! in which case the experiment harness assigns one.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::subject::{RoiFeatureTable, SubjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "PET_SUVR")]
    PetSuvr,
    #[serde(rename = "SMRI_GM")]
    SmriGm,
    #[serde(rename = "SMRI_WM")]
    SmriWm,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::PetSuvr, Modality::SmriGm, Modality::SmriWm];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::PetSuvr => "PET_SUVR",
            Modality::SmriGm => "SMRI_GM",
            Modality::SmriWm => "SMRI_WM",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Modality::PetSuvr => "pet_suvr.csv",
            Modality::SmriGm => "smri_gm.csv",
            Modality::SmriWm => "smri_wm.csv",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown modality {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Files { subjects: PathBuf, features: Vec<PathBuf> },
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortBundle {
    pub subjects: Vec<SubjectRecord>,
    /// Rows follow `subjects` order.
    pub roi_tables: BTreeMap<Modality, RoiFeatureTable>,
    pub provenance: Provenance,
}

impl CohortBundle {
    /// Checks that every table has one row per subject, in subject order.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.subjects {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate subject id {}", s.id)));
            }
        }
        for (m, t) in &self.roi_tables {
            if t.ids.len() != self.subjects.len() || t.ids.iter().zip(&self.subjects).any(|(a, s)| *a != s.id) {
                return Err(Error::Misaligned(format!("{m} rows do not follow the subject order")));
            }
        }
        Ok(())
    }

    pub fn table(&self, m: Modality) -> Result<&RoiFeatureTable> {
        self.roi_tables
            .get(&m)
            .ok_or_else(|| Error::InvalidArgument(format!("cohort has no {m} table")))
    }
}

fn parse_err(file: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(path, 0, format!("{other:?}")),
        })
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

const SUBJECT_COLUMNS: [&str; 7] = ["id", "label", "gender", "age", "apoe4", "mmse", "split"];

pub fn read_subjects(path: &Path) -> Result<Vec<SubjectRecord>> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_split = header.len() == 7;
    if !(header.len() == 6 || has_split) || header.iter().zip(SUBJECT_COLUMNS).any(|(h, c)| h != c) {
        return Err(parse_err(
            path,
            1,
            format!(
                "header must be {} (split optional), found {}",
                SUBJECT_COLUMNS.join(","),
                header.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&rec);
        let cell = |i: usize| rec.get(i).unwrap_or("");
        fn parse<T: FromStr>(v: &str, col: &str, path: &Path, line: u64) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            v.parse()
                .map_err(|e| parse_err(path, line, format!("column {col}: {v:?}: {e}")))
        }
        let id = cell(0).to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty subject id"));
        }
        if let Some(first) = seen.get(&id) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate subject id {id} (first seen on line {first})"),
            ));
        }
        seen.insert(id.clone(), line);
        let split = if has_split && !cell(6).is_empty() {
            Some(parse(cell(6), "split", path, line)?)
        } else {
            None
        };
        let s = SubjectRecord {
            id,
            label: parse(cell(1), "label", path, line)?,
            gender: parse(cell(2), "gender", path, line)?,
            age: parse(cell(3), "age", path, line)?,
            apoe4: parse(cell(4), "apoe4", path, line)?,
            mmse: parse(cell(5), "mmse", path, line)?,
            split,
        };
        s.validate().map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

/// Reads a feature table and orders its rows like `subjects`.
pub fn read_features(path: &Path, subjects: &[SubjectRecord]) -> Result<RoiFeatureTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let p = header.len().saturating_sub(1);
    let header_ok = header.get(0) == Some("id")
        && p >= 1
        && header
            .iter()
            .skip(1)
            .enumerate()
            .all(|(i, h)| h == format!("roi_{}", i + 1));
    if !header_ok {
        return Err(parse_err(path, 1, "header must be id,roi_1,...,roi_P"));
    }
    let position: HashMap<&str, usize> = subjects.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; subjects.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record_line(&rec);
        let id = rec.get(0).unwrap_or("");
        let &slot = position
            .get(id)
            .ok_or_else(|| parse_err(path, line, format!("unknown subject id {id}")))?;
        if rows[slot].is_some() {
            return Err(parse_err(path, line, format!("duplicate feature row for subject {id}")));
        }
        if rec.len() != p + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} cells, found {}", p + 1, rec.len()),
            ));
        }
        let vals = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, v)| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(parse_err(
                    path,
                    line,
                    format!("roi_{}: {v:?} is not a finite number", j + 1),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        rows[slot] = Some(vals);
    }
    let mut data = Vec::with_capacity(subjects.len() * p);
    for (s, row) in subjects.iter().zip(rows) {
        let row = row.ok_or_else(|| parse_err(path, 0, format!("missing feature row for subject {}", s.id)))?;
        data.extend(row);
    }
    RoiFeatureTable::new(
        subjects.iter().map(|s| s.id.clone()).collect(),
        Matrix::new(subjects.len(), p, data)?,
    )
}

pub fn load_cohort(subjects_path: &Path, feature_paths: &[(Modality, PathBuf)]) -> Result<CohortBundle> {
    let subjects = read_subjects(subjects_path)?;
    let mut roi_tables = BTreeMap::new();
    for (m, path) in feature_paths {
        if roi_tables.insert(*m, read_features(path, &subjects)?).is_some() {
            return Err(Error::InvalidArgument(format!("{m} given twice")));
        }
    }
    let bundle = CohortBundle {
        subjects,
        roi_tables,
        provenance: Provenance::Files {
            subjects: subjects_path.to_path_buf(),
            features: feature_paths.iter().map(|(_, p)| p.clone()).collect(),
        },
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Loads `subjects.csv` and whichever standard feature files exist in `dir`.
pub fn load_cohort_dir(dir: &Path) -> Result<CohortBundle> {
    let features: Vec<(Modality, PathBuf)> = Modality::ALL
        .into_iter()
        .map(|m| (m, dir.join(m.file_name())))
        .filter(|(_, p)| p.exists())
        .collect();
    load_cohort(&dir.join("subjects.csv"), &features)
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv write: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv flush: {e}")))
}

pub fn write_subjects(path: &Path, subjects: &[SubjectRecord]) -> Result<()> {
    let header: Vec<String> = SUBJECT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows = subjects.iter().map(|s| {
        vec![
            s.id.clone(),
            s.label.to_string(),
            s.gender.to_string(),
            s.age.to_string(),
            s.apoe4.to_string(),
            s.mmse.to_string(),
            s.split.map(|x| x.to_string()).unwrap_or_default(),
        ]
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

pub fn write_features(path: &Path, table: &RoiFeatureTable) -> Result<()> {
    let mut header = vec!["id".to_string()];
    header.extend((1..=table.n_rois()).map(|j| format!("roi_{j}")));
    let rows = table.ids.iter().enumerate().map(|(i, id)| {
        let mut r = vec![id.clone()];
        r.extend(table.values.row(i).iter().map(|v| v.to_string()));
        r
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

/// Writes the cohort under `dir` using the standard file names.
pub fn save_cohort(bundle: &CohortBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_subjects(&dir.join("subjects.csv"), &bundle.subjects)?;
    for (m, t) in &bundle.roi_tables {
        write_features(&dir.join(m.file_name()), t)?;
    }
    Ok(())
}

//! Named, group-tagged feature columns over a set of responses.
//!
//! On disk a matrix is CSV with a two-row header: the first row carries the
//! group tag of every column (`META` for bookkeeping columns), the second the
//! column name. Bookkeeping columns are `response_id`, `split`, `grade` and
//! `grade2` (second rater, may be empty).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Grade, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    /// Content (TF-IDF).
    CF,
    /// Fluency.
    FF,
    /// Suprasegmental pronunciation.
    SPF,
    /// Grammar and vocabulary.
    GVF,
    /// Acoustic.
    AF,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [
        FeatureGroup::CF,
        FeatureGroup::FF,
        FeatureGroup::SPF,
        FeatureGroup::GVF,
        FeatureGroup::AF,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            FeatureGroup::CF => "CF",
            FeatureGroup::FF => "FF",
            FeatureGroup::SPF => "SPF",
            FeatureGroup::GVF => "GVF",
            FeatureGroup::AF => "AF",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownGroup(s.to_string()))
    }
}

/// Parses a comma-separated group list such as `CF,FF,GVF`.
pub fn parse_groups(list: &str) -> Result<Vec<FeatureGroup>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub group: FeatureGroup,
}

/// Row-major feature matrix with per-row bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<Column>,
    pub row_ids: Vec<String>,
    pub splits: Vec<Option<Split>>,
    pub grades: Vec<Option<Grade>>,
    pub second_grades: Vec<Option<Grade>>,
    pub data: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Column>) -> Self {
        FeatureMatrix {
            columns,
            row_ids: vec![],
            splits: vec![],
            grades: vec![],
            second_grades: vec![],
            data: vec![],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.iter().map(|r| r[j]).collect()
    }

    pub fn push_row(&mut self, id: String, split: Option<Split>, grade: Option<Grade>, second: Option<Grade>, values: Vec<f64>) {
        assert_eq!(values.len(), self.columns.len(), "row width mismatch");
        self.row_ids.push(id);
        self.splits.push(split);
        self.grades.push(grade);
        self.second_grades.push(second);
        self.data.push(values);
    }

    pub fn groups_present(&self) -> Vec<FeatureGroup> {
        let mut gs: Vec<FeatureGroup> = self.columns.iter().map(|c| c.group).collect();
        gs.sort();
        gs.dedup();
        gs
    }

    /// Keeps only the columns whose group is in `groups`.
    pub fn select_groups(&self, groups: &[FeatureGroup]) -> FeatureMatrix {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| groups.contains(&self.columns[j].group))
            .collect();
        self.select_columns(&keep)
    }

    pub fn select_columns(&self, keep: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            row_ids: self.row_ids.clone(),
            splits: self.splits.clone(),
            grades: self.grades.clone(),
            second_grades: self.second_grades.clone(),
            data: self
                .data
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            splits: rows.iter().map(|&i| self.splits[i]).collect(),
            grades: rows.iter().map(|&i| self.grades[i]).collect(),
            second_grades: rows.iter().map(|&i| self.second_grades[i]).collect(),
            data: rows.iter().map(|&i| self.data[i].clone()).collect(),
        }
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.splits[i] == Some(split)).collect()
    }

    pub fn split_view(&self, split: Split) -> FeatureMatrix {
        self.select_rows(&self.rows_in(split))
    }

    /// Grade ordinals; errors on an ungraded row.
    pub fn targets(&self) -> Result<Vec<usize>> {
        self.grades
            .iter()
            .zip(&self.row_ids)
            .map(|(g, id)| g.map(Grade::ordinal).ok_or_else(|| Error::Ungraded(id.clone())))
            .collect()
    }

    /// Appends the columns of `other` (same rows, same order).
    pub fn hstack(&mut self, other: &FeatureMatrix) -> Result<()> {
        if other.row_ids != self.row_ids {
            return Err(Error::ColumnMismatch("hstack over different rows".into()));
        }
        self.columns.extend(other.columns.iter().cloned());
        for (row, extra) in self.data.iter_mut().zip(&other.data) {
            row.extend_from_slice(extra);
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let mut tags = vec!["META"; 4];
        tags.extend(self.columns.iter().map(|c| c.group.tag()));
        let mut names = vec!["response_id", "split", "grade", "grade2"];
        names.extend(self.columns.iter().map(|c| c.name.as_str()));
        // Writing into a Vec cannot fail.
        w.write_record(&tags).unwrap();
        w.write_record(&names).unwrap();
        for i in 0..self.n_rows() {
            let mut fields = vec![
                self.row_ids[i].clone(),
                self.splits[i].map(|s| s.name().to_string()).unwrap_or_default(),
                self.grades[i].map(|g| g.label().to_string()).unwrap_or_default(),
                self.second_grades[i].map(|g| g.label().to_string()).unwrap_or_default(),
            ];
            fields.extend(self.data[i].iter().map(|v| format_float(*v)));
            w.write_record(&fields).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|m| Error::parse("feature matrix", path, m))
    }

    pub fn parse_csv(text: &str) -> std::result::Result<FeatureMatrix, String> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let mut next = |what: &str| -> std::result::Result<Option<Vec<String>>, String> {
            match records.next() {
                None => Ok(None),
                Some(Err(e)) => Err(format!("{what}: {e}")),
                Some(Ok(r)) => Ok(Some(r.iter().map(str::to_string).collect())),
            }
        };
        let tags = next("header")?.ok_or("missing group-tag header row")?;
        let names = next("header")?.ok_or("missing name header row")?;
        if tags.len() != names.len() {
            return Err("header rows differ in width".into());
        }
        let meta: Vec<usize> = (0..tags.len()).filter(|&j| tags[j] == "META").collect();
        let find_meta = |n: &str| meta.iter().copied().find(|&j| names[j] == n);
        let id_col = find_meta("response_id").ok_or("missing response_id column")?;
        let split_col = find_meta("split");
        let grade_col = find_meta("grade");
        let grade2_col = find_meta("grade2");
        let mut feature_cols = Vec::new();
        let mut columns = Vec::new();
        for j in 0..tags.len() {
            if tags[j] == "META" {
                continue;
            }
            let group = tags[j].parse::<FeatureGroup>().map_err(|e| e.to_string())?;
            feature_cols.push(j);
            columns.push(Column {
                name: names[j].clone(),
                group,
            });
        }
        let mut m = FeatureMatrix::new(columns);
        let mut n = 0;
        while let Some(f) = next("row")? {
            n += 1;
            if f.len() != tags.len() {
                return Err(format!("row {n} has {} fields, expected {}", f.len(), tags.len()));
            }
            let split = match split_col.map(|j| f[j].as_str()) {
                Some("") | None => None,
                Some(s) => Some(Split::parse(s).ok_or(format!("row {n}: bad split {s:?}"))?),
            };
            let parse_grade = |col: Option<usize>| -> std::result::Result<Option<Grade>, String> {
                match col.map(|j| f[j].as_str()) {
                    Some("") | None => Ok(None),
                    Some(s) => s.parse::<Grade>().map(Some).map_err(|e| e.to_string()),
                }
            };
            let grade = parse_grade(grade_col)?;
            let second = parse_grade(grade2_col)?;
            let values = feature_cols
                .iter()
                .map(|&j| {
                    f[j].parse::<f64>()
                        .map_err(|e| format!("row {n} column {}: {e}", names[j]))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            m.push_row(f[id_col].clone(), split, grade, second, values);
        }
        Ok(m)
    }
}

/// Shortest representation that round-trips exactly.
pub fn format_float(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

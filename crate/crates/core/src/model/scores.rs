use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Label;

/// Comparator id used for fused output tables.
pub const FUSED: &str = "FUSED";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub trial_id: String,
    pub label: Label,
    pub comparator: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    trial_id: String,
    label: u8,
    comparator: String,
    score: f64,
}

/// Long-form table of per-trial, per-comparator scores.
///
/// Scores follow the "higher supports target" convention throughout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
    index: HashMap<(String, String), usize>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: impl IntoIterator<Item = ScoreRow>) -> Result<Self> {
        let mut t = Self::new();
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    /// Adds a row, rejecting a second score for the same (trial, comparator).
    pub fn push(&mut self, row: ScoreRow) -> Result<()> {
        let key = (row.trial_id.clone(), row.comparator.clone());
        if self.index.contains_key(&key) {
            return Err(Error::Duplicate(format!("{}/{}", row.trial_id, row.comparator)));
        }
        self.index.insert(key, self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    pub fn add(&mut self, trial_id: impl Into<String>, label: Label, comparator: impl Into<String>, score: f64) -> Result<()> {
        self.push(ScoreRow {
            trial_id: trial_id.into(),
            label,
            comparator: comparator.into(),
            score,
        })
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, trial_id: &str, comparator: &str) -> Option<&ScoreRow> {
        self.index
            .get(&(trial_id.to_string(), comparator.to_string()))
            .map(|&i| &self.rows[i])
    }

    /// Comparator ids in sorted order.
    pub fn comparators(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.comparator.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Scores and labels of one comparator, in row order.
    pub fn column(&self, comparator: &str) -> (Vec<f64>, Vec<Label>) {
        self.rows
            .iter()
            .filter(|r| r.comparator == comparator)
            .map(|r| (r.score, r.label))
            .unzip()
    }

    /// Rows restricted to the given comparators.
    pub fn select(&self, comparators: &[String]) -> Result<Self> {
        Self::from_rows(self.rows.iter().filter(|r| comparators.contains(&r.comparator)).cloned())
    }

    /// Wide form: one row per trial (sorted by id), one column per comparator.
    pub fn pivot(&self, comparators: &[String]) -> Result<ScoreMatrix> {
        if comparators.is_empty() {
            return Err(Error::invalid("pivot needs at least one comparator"));
        }
        if let Some(absent) = comparators.iter().find(|c| !self.rows.iter().any(|r| &r.comparator == *c)) {
            return Err(Error::invalid(format!("comparator {absent} absent from score table")));
        }
        let mut trials: BTreeMap<&str, Label> = BTreeMap::new();
        for r in &self.rows {
            if comparators.contains(&r.comparator) {
                if let Some(prev) = trials.insert(&r.trial_id, r.label) {
                    if prev != r.label {
                        return Err(Error::invalid(format!("trial {} carries conflicting labels", r.trial_id)));
                    }
                }
            }
        }
        let mut values = Vec::with_capacity(trials.len() * comparators.len());
        for trial in trials.keys() {
            for c in comparators {
                let row = self.get(trial, c).ok_or_else(|| Error::MissingScore {
                    trial_id: trial.to_string(),
                    comparator: c.clone(),
                })?;
                values.push(row.score);
            }
        }
        Ok(ScoreMatrix {
            trial_ids: trials.keys().map(|s| s.to_string()).collect(),
            labels: trials.values().copied().collect(),
            comparators: comparators.to_vec(),
            values,
        })
    }

    pub fn read_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["trial_id", "label", "comparator", "score"] {
            return Err(Error::Parse {
                line: 1,
                message: "expected header trial_id,label,comparator,score".into(),
            });
        }
        let mut t = Self::new();
        for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let label = Label::from_flag(rec.label).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            t.push(ScoreRow {
                trial_id: rec.trial_id,
                label,
                comparator: rec.comparator,
                score: rec.score,
            })?;
        }
        Ok(t)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Writes rows sorted by (trial_id, comparator) so output is order-independent.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut sorted: Vec<&ScoreRow> = self.rows.iter().collect();
        sorted.sort_by(|a, b| (&a.trial_id, &a.comparator).cmp(&(&b.trial_id, &b.comparator)));
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["trial_id", "label", "comparator", "score"])?;
        for r in sorted {
            w.serialize(CsvRow {
                trial_id: r.trial_id.clone(),
                label: r.label.flag(),
                comparator: r.comparator.clone(),
                score: r.score,
            })?;
        }
        w.flush().map_err(|e| Error::io("<scores>", e))
    }
}

/// Wide score matrix, row-major with one row per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub trial_ids: Vec<String>,
    pub labels: Vec<Label>,
    pub comparators: Vec<String>,
    pub values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n_trials(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn n_comparators(&self) -> usize {
        self.comparators.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.comparators.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.comparators.len())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn targets(&self) -> usize {
        self.labels.iter().filter(|l| l.is_target()).count()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let t = self.targets();
        if t == 0 || t == self.labels.len() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }

    pub fn require_finite(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            let n = self.comparators.len();
            return Err(Error::NonFinite(format!(
                "score of trial {} on {}",
                self.trial_ids[i / n],
                self.comparators[i % n]
            )));
        }
        Ok(())
    }

    /// Converts fused values (one per trial) back into a long table.
    pub fn fused_table(&self, fused: &[f64]) -> Result<ScoreTable> {
        ScoreTable::from_rows(self.trial_ids.iter().zip(&self.labels).zip(fused).map(|((id, &label), &score)| ScoreRow {
            trial_id: id.clone(),
            label,
            comparator: FUSED.to_string(),
            score,
        }))
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScoreMatrix, ScoreRow, ScoreTable};

/// Per-comparator mean and standard deviation over pooled training scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub comparators: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    fn position(&self, comparator: &str) -> Option<usize> {
        self.comparators.iter().position(|c| c == comparator)
    }

    #[inline]
    pub fn apply_one(&self, j: usize, score: f64) -> f64 {
        (score - self.mean[j]) / self.std[j]
    }
}

pub fn znorm_fit(m: &ScoreMatrix) -> Result<NormStats> {
    let n = m.n_trials();
    let mut mean = Vec::with_capacity(m.n_comparators());
    let mut std = Vec::with_capacity(m.n_comparators());
    for (j, name) in m.comparators.iter().enumerate() {
        if n < 2 {
            return Err(Error::ZeroVariance(format!("{name} has fewer than two scores")));
        }
        let col = m.column(j);
        let mu = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::ZeroVariance(name.clone()));
        }
        mean.push(mu);
        std.push(sd);
    }
    Ok(NormStats {
        comparators: m.comparators.clone(),
        mean,
        std,
    })
}

/// Normalizes a matrix whose columns follow `stats.comparators`.
pub fn znorm_apply(stats: &NormStats, m: &ScoreMatrix) -> Result<ScoreMatrix> {
    if m.comparators != stats.comparators {
        return Err(Error::invalid(format!(
            "normalization fitted on {:?} cannot be applied to {:?}",
            stats.comparators, m.comparators
        )));
    }
    let n = m.n_comparators();
    let values = m.values.iter().enumerate().map(|(i, &v)| stats.apply_one(i % n, v)).collect();
    Ok(ScoreMatrix { values, ..m.clone() })
}

/// Normalizes every row of a long table; comparators without stats are an error.
pub fn znorm_apply_table(stats: &NormStats, table: &ScoreTable) -> Result<ScoreTable> {
    ScoreTable::from_rows(
        table
            .rows()
            .iter()
            .map(|r| {
                let j = stats
                    .position(&r.comparator)
                    .ok_or_else(|| Error::invalid(format!("no normalization statistics for comparator {}", r.comparator)))?;
                Ok(ScoreRow {
                    score: stats.apply_one(j, r.score),
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?,
    )
}

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{FusionMethod, FusionModel, FusionOptions};
use crate::error::{Error, Result};
use crate::metrics::summarize;
use crate::model::ScoreTable;

pub const MAX_SEARCH_COMPARATORS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetResult {
    pub comparators: Vec<String>,
    pub eer: f64,
    pub frr_at_far: f64,
    pub extrapolated: bool,
}

impl SubsetResult {
    pub fn key(&self) -> String {
        self.comparators.join("+")
    }

    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.frr_at_far
            .total_cmp(&other.frr_at_far)
            .then(self.eer.total_cmp(&other.eer))
            .then_with(|| self.key().cmp(&other.key()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub far: f64,
    /// Every evaluated subset, best first.
    pub ranked: Vec<SubsetResult>,
    /// Subsets whose training or scoring failed, with the error message.
    pub skipped: Vec<(String, String)>,
}

impl SearchOutcome {
    /// Best `k` subsets of each size, sizes ascending, as (size, rank, result).
    pub fn top_per_size(&self, k: usize) -> Vec<(usize, usize, &SubsetResult)> {
        let max = self.ranked.iter().map(|r| r.comparators.len()).max().unwrap_or(0);
        (1..=max)
            .flat_map(|size| {
                self.ranked
                    .iter()
                    .filter(move |r| r.comparators.len() == size)
                    .take(k)
                    .enumerate()
                    .map(move |(rank, r)| (size, rank + 1, r))
            })
            .collect()
    }

    pub fn write_csv(&self, k: usize, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["size", "rank", "subset", "eer", "frr_at_far", "far", "extrapolated"])?;
        for (size, rank, r) in self.top_per_size(k) {
            w.write_record([
                size.to_string(),
                rank.to_string(),
                r.key(),
                r.eer.to_string(),
                r.frr_at_far.to_string(),
                self.far.to_string(),
                r.extrapolated.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("search table", e))?;
        Ok(())
    }
}

/// Trains `method` on every non-empty comparator subset of `train` and
/// evaluates it on `eval`, ranking by FRR at `far` with EER as tie-break.
pub fn subset_search(train: &ScoreTable, eval: &ScoreTable, method: FusionMethod, opts: &FusionOptions, far: f64) -> Result<SearchOutcome> {
    let names = train.comparators();
    if names.is_empty() {
        return Err(Error::invalid("training table has no comparators"));
    }
    if names.len() > MAX_SEARCH_COMPARATORS {
        return Err(Error::invalid(format!(
            "{} comparators exceed the search limit of {MAX_SEARCH_COMPARATORS}",
            names.len()
        )));
    }
    if !(far > 0.0 && far < 1.0) {
        return Err(Error::invalid(format!("FAR target must be in (0, 1), got {far}")));
    }
    let evaluated: Vec<std::result::Result<SubsetResult, (String, String)>> = (1u32..1 << names.len())
        .into_par_iter()
        .map(|mask| {
            let subset: Vec<String> = names.iter().enumerate().filter(|(j, _)| mask >> j & 1 == 1).map(|(_, n)| n.clone()).collect();
            let run = || -> Result<SubsetResult> {
                let model = FusionModel::train_on(method, train, &subset, opts)?;
                let m = eval.pivot(&subset)?;
                let fused = model.fuse_matrix(&m)?;
                let s = summarize(&fused, &m.labels, far)?;
                Ok(SubsetResult {
                    comparators: subset.clone(),
                    eer: s.eer,
                    frr_at_far: s.frr_at_far,
                    extrapolated: s.extrapolated,
                })
            };
            run().map_err(|e| (subset.join("+"), format!("{}: {e}", e.code())))
        })
        .collect();
    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    for r in evaluated {
        match r {
            Ok(r) => ranked.push(r),
            Err((key, msg)) => {
                log::warn!("subset {key} skipped: {msg}");
                skipped.push((key, msg));
            }
        }
    }
    ranked.sort_by(SubsetResult::rank_cmp);
    skipped.sort();
    Ok(SearchOutcome { far, ranked, skipped })
}

//! Score fusion: z-norm, LLR calibration (joint or per comparator),
//! averaging, SVM and random forests, plus Bayes decisions and subset search.

mod calibration;
mod decision;
mod forest;
mod search;
mod svm;
mod znorm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScoreMatrix, ScoreTable};

pub use calibration::{calibrate_joint, calibration_cost, logit, CalibrationFit, CalibrationOptions};
pub use decision::{bayes_decide, Decision, DecisionPolicy};
pub use forest::{train_forest, ForestModel, ForestOptions, Node, Tree};
pub use search::{subset_search, SearchOutcome, SubsetResult, MAX_SEARCH_COMPARATORS};
pub use svm::{train_svm, Kernel, SvmModel, SvmOptions};
pub use znorm::{znorm_apply, znorm_apply_table, znorm_fit, NormStats};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMethod {
    #[serde(rename = "llr")]
    LlrJoint,
    #[serde(rename = "llr-sum")]
    LlrSum,
    #[serde(rename = "avg")]
    Average,
    #[serde(rename = "svm")]
    Svm,
    #[serde(rename = "rf")]
    RandomForest,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 5] = [Self::LlrJoint, Self::LlrSum, Self::Average, Self::Svm, Self::RandomForest];

    pub fn name(self) -> &'static str {
        match self {
            Self::LlrJoint => "llr",
            Self::LlrSum => "llr-sum",
            Self::Average => "avg",
            Self::Svm => "svm",
            Self::RandomForest => "rf",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown fusion method {s:?}; expected llr, llr-sum, avg, svm or rf")))
    }
}

/// Training knobs shared by all methods; each method reads what it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOptions {
    pub prior: f64,
    pub lambda: f64,
    /// Kernel name for SVM fusion: linear, rbf or poly.
    pub kernel: String,
    pub svm_c: f64,
    pub trees: usize,
    pub seed: u64,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            prior: 0.5,
            lambda: 1e-6,
            kernel: "linear".into(),
            svm_c: 1.0,
            trees: 600,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FusionParams {
    Joint(CalibrationFit),
    Sum { fits: Vec<CalibrationFit> },
    Average,
    Svm(SvmModel),
    Forest(ForestModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub version: u32,
    pub method: FusionMethod,
    pub comparators: Vec<String>,
    pub norm_stats: Option<NormStats>,
    pub prior: f64,
    pub params: FusionParams,
}

fn targets(m: &ScoreMatrix) -> Vec<bool> {
    m.labels.iter().map(|l| l.is_target()).collect()
}

impl FusionModel {
    /// Trains on every comparator present in `table`.
    pub fn train(method: FusionMethod, table: &ScoreTable, opts: &FusionOptions) -> Result<Self> {
        Self::train_on(method, table, &table.comparators(), opts)
    }

    /// Trains on the named comparators; their order fixes the model's column order.
    pub fn train_on(method: FusionMethod, table: &ScoreTable, comparators: &[String], opts: &FusionOptions) -> Result<Self> {
        let cal = CalibrationOptions {
            prior: opts.prior,
            lambda: opts.lambda,
            ..Default::default()
        };
        let (norm_stats, params) = match method {
            FusionMethod::LlrJoint => (None, FusionParams::Joint(calibrate_joint(&table.pivot(comparators)?, &cal)?)),
            FusionMethod::LlrSum => {
                let fits = comparators
                    .iter()
                    .map(|c| calibrate_joint(&table.pivot(std::slice::from_ref(c))?, &cal))
                    .collect::<Result<Vec<_>>>()?;
                (None, FusionParams::Sum { fits })
            }
            _ => {
                let m = table.pivot(comparators)?;
                m.require_finite()?;
                m.require_both_classes()?;
                let stats = znorm_fit(&m)?;
                let z = znorm_apply(&stats, &m)?;
                let dims = z.n_comparators();
                let params = match method {
                    FusionMethod::Average => FusionParams::Average,
                    FusionMethod::Svm => {
                        let mut so = SvmOptions::new(Kernel::by_name(&opts.kernel, dims)?);
                        so.c = opts.svm_c;
                        FusionParams::Svm(train_svm(&z.values, dims, &targets(&z), &so)?)
                    }
                    FusionMethod::RandomForest => {
                        let fo = ForestOptions {
                            trees: opts.trees,
                            seed: opts.seed,
                            ..Default::default()
                        };
                        FusionParams::Forest(train_forest(&z.values, dims, &targets(&z), &fo)?)
                    }
                    FusionMethod::LlrJoint | FusionMethod::LlrSum => unreachable!(),
                };
                (Some(stats), params)
            }
        };
        Ok(Self {
            version: MODEL_VERSION,
            method,
            comparators: comparators.to_vec(),
            norm_stats,
            prior: opts.prior,
            params,
        })
    }

    /// Fused score per row of `m`, whose columns must follow `self.comparators`.
    pub fn fuse_matrix(&self, m: &ScoreMatrix) -> Result<Vec<f64>> {
        if m.comparators != self.comparators {
            return Err(Error::invalid(format!("model expects comparators {:?}, got {:?}", self.comparators, m.comparators)));
        }
        m.require_finite()?;
        let z;
        let input = match &self.norm_stats {
            Some(stats) => {
                z = znorm_apply(stats, m)?;
                &z
            }
            None => m,
        };
        let rows = input.rows();
        Ok(match &self.params {
            FusionParams::Joint(fit) => rows.map(|r| fit.llr(r)).collect(),
            FusionParams::Sum { fits } => rows.map(|r| fits.iter().zip(r).map(|(f, s)| f.llr(std::slice::from_ref(s))).sum()).collect(),
            FusionParams::Average => rows.map(|r| r.iter().sum::<f64>() / r.len() as f64).collect(),
            FusionParams::Svm(svm) => rows.map(|r| svm.decision(r)).collect(),
            FusionParams::Forest(rf) => rows.map(|r| rf.posterior(r)).collect(),
        })
    }

    /// Fused table with comparator `FUSED`, one row per trial.
    pub fn apply(&self, table: &ScoreTable) -> Result<ScoreTable> {
        let m = table.pivot(&self.comparators)?;
        let fused = self.fuse_matrix(&m)?;
        m.fused_table(&fused)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            what: "fusion model",
            message: e.to_string(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s).map_err(|e| Error::Format {
            what: "fusion model",
            message: e.to_string(),
        })?;
        if model.version != MODEL_VERSION {
            return Err(Error::Format {
                what: "fusion model",
                message: format!("unsupported version {}", model.version),
            });
        }
        Ok(model)
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

//! Shared domain types and the file formats every other module consumes.

mod image;
mod sample;
mod scores;
mod template;

pub use self::image::{GrayImage, Point};
pub use self::sample::{
    parse_manifest, read_manifest, read_trials_csv, write_manifest, Eye, Label, SampleRef, Trial, TrialMode,
    TrialRecord, TrialSet,
};
pub use self::scores::{ScoreMatrix, ScoreRow, ScoreTable, FUSED};
pub use self::template::{read_template, write_template, Payload, Template, TemplateKind, KEYPOINT_ROW};

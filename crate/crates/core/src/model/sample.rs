use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Eye {
    L,
    R,
}

impl FromStr for Eye {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" | "l" => Ok(Eye::L),
            "R" | "r" => Ok(Eye::R),
            other => Err(Error::invalid(format!("eye must be L or R, got {other:?}"))),
        }
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::L => "L",
            Eye::R => "R",
        })
    }
}

/// Characters reserved by sample keys, trial ids and CSV output.
const RESERVED: [char; 4] = ['.', '|', ',', '/'];

/// One image of one eye captured by one sensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub subject: String,
    pub eye: Eye,
    pub sensor: String,
    /// 1-based image number within (subject, eye, sensor).
    pub index: u32,
    pub path: PathBuf,
}

impl SampleRef {
    pub fn new(subject: impl Into<String>, eye: Eye, sensor: impl Into<String>, index: u32, path: impl Into<PathBuf>) -> Result<Self> {
        let s = Self {
            subject: subject.into(),
            eye,
            sensor: sensor.into(),
            index,
            path: path.into(),
        };
        for (field, value) in [("subject", &s.subject), ("sensor", &s.sensor)] {
            if value.is_empty() || value.contains(RESERVED) || value.contains(char::is_whitespace) {
                return Err(Error::invalid(format!(
                    "{field} {value:?} must be non-empty without whitespace or any of {RESERVED:?}"
                )));
            }
        }
        if s.index == 0 {
            return Err(Error::invalid("image index is 1-based"));
        }
        Ok(s)
    }

    /// Deterministic key `subject.eye.sensor.index`, also used as file stem.
    pub fn key(&self) -> String {
        format!("{}.{}.{}.{}", self.subject, self.eye, self.sensor, self.index)
    }

    /// Identity of the user: each eye counts as a separate user.
    pub fn eye_key(&self) -> (&str, Eye) {
        (&self.subject, self.eye)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    subject: String,
    eye: String,
    sensor: String,
    index: u32,
    path: String,
}

/// Reads a manifest CSV with header `subject,eye,sensor,index,path`.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRef>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(file)
}

pub fn parse_manifest(reader: impl std::io::Read) -> Result<Vec<SampleRef>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["subject", "eye", "sensor", "index", "path"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.deserialize::<ManifestRow>() {
        let row = record?;
        let line = out.len() as u64 + 2;
        let at_line = |e: Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        let eye = row.eye.parse().map_err(at_line)?;
        let sample = SampleRef::new(row.subject, eye, row.sensor, row.index, row.path).map_err(at_line)?;
        if !seen.insert(sample.key()) {
            return Err(Error::Duplicate(format!("{} (line {line})", sample.key())));
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn write_manifest(samples: &[SampleRef], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["subject", "eye", "sensor", "index", "path"])?;
    for s in samples {
        w.serialize(ManifestRow {
            subject: s.subject.clone(),
            eye: s.eye.to_string(),
            sensor: s.sensor.clone(),
            index: s.index,
            path: s.path.to_string_lossy().into_owned(),
        })?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Target,
    NonTarget,
}

impl Label {
    pub fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            1 => Ok(Label::Target),
            0 => Ok(Label::NonTarget),
            other => Err(Error::invalid(format!("label must be 1 or 0, got {other}"))),
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Label::Target => 1,
            Label::NonTarget => 0,
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrialMode {
    SameSensor,
    CrossSensor,
}

impl TrialMode {
    pub fn name(self) -> &'static str {
        match self {
            TrialMode::SameSensor => "same",
            TrialMode::CrossSensor => "cross",
        }
    }
}

impl FromStr for TrialMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same" | "same-sensor" => Ok(TrialMode::SameSensor),
            "cross" | "cross-sensor" => Ok(TrialMode::CrossSensor),
            other => Err(Error::invalid(format!("unknown trial mode {other:?}"))),
        }
    }
}

/// A probe/gallery comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub probe: SampleRef,
    pub gallery: SampleRef,
    pub label: Label,
    pub mode: TrialMode,
}

impl Trial {
    pub fn new(probe: SampleRef, gallery: SampleRef, mode: TrialMode) -> Result<Self> {
        let label = if probe.eye_key() == gallery.eye_key() {
            Label::Target
        } else {
            Label::NonTarget
        };
        let cross = probe.sensor != gallery.sensor;
        if cross != (mode == TrialMode::CrossSensor) {
            return Err(Error::invalid(format!(
                "trial {}|{} is inconsistent with mode {}",
                probe.key(),
                gallery.key(),
                mode.name()
            )));
        }
        Ok(Self {
            probe,
            gallery,
            label,
            mode,
        })
    }

    pub fn id(&self) -> String {
        format!("{}|{}", self.probe.key(), self.gallery.key())
    }
}

/// Trials sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    trials: Vec<Trial>,
}

impl TrialSet {
    pub fn from_trials(mut trials: Vec<Trial>) -> Result<Self> {
        trials.sort_by_cached_key(|t| t.id());
        if let Some(w) = trials.windows(2).find(|w| w[0].id() == w[1].id()) {
            return Err(Error::Duplicate(w[0].id()));
        }
        Ok(Self { trials })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.trials.iter().filter(|t| t.label == label).count()
    }

    /// Writes `trial_id,label,mode,probe_key,gallery_key`.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["trial_id", "label", "mode", "probe_key", "gallery_key"])?;
        for t in &self.trials {
            w.write_record([
                t.id(),
                t.label.flag().to_string(),
                t.mode.name().to_string(),
                t.probe.key(),
                t.gallery.key(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trials>", e))
    }
}

/// One row of a trials CSV as read back from disk.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub label: u8,
    pub mode: String,
    pub probe_key: String,
    pub gallery_key: String,
}

pub fn read_trials_csv(reader: impl std::io::Read) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<TrialRecord>() {
        let rec = rec?;
        Label::from_flag(rec.label)?;
        out.push(rec);
    }
    Ok(out)
}

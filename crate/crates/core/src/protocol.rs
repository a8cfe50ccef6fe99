//! Genuine/impostor trial enumeration and subject-disjoint folds.
//!
//! Every (subject, eye) is a separate identity. Genuine trials pair images
//! of the same eye; impostor trials compare the probe image of an eye with
//! selected gallery images of other eyes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Eye, SampleRef, Trial, TrialMode, TrialSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolRole {
    Train,
    Test,
}

impl FromStr for ProtocolRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(ProtocolRole::Train),
            "test" => Ok(ProtocolRole::Test),
            other => Err(Error::invalid(format!("unknown role '{other}' (expected train or test)"))),
        }
    }
}

impl fmt::Display for ProtocolRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolRole::Train => "train",
            ProtocolRole::Test => "test",
        })
    }
}

/// Which eyes serve as impostors for a probe eye.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpostorScope {
    /// Both eyes of every other subject.
    OtherSubjects,
    /// Every other eye, including the probe subject's other eye.
    OtherEyes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub mode: TrialMode,
    pub role: ProtocolRole,
    /// Same-sensor: sensors to enumerate (all when `None`). Cross-sensor:
    /// the two sensors, genuine probes taken from the first (the two
    /// manifest sensors in sorted order when `None`).
    pub sensors: Option<Vec<String>>,
    /// Image index used as the impostor probe.
    pub probe_index: u32,
    /// Image indices of other eyes used as impostor gallery.
    pub impostor_gallery: Vec<u32>,
    pub impostor_scope: ImpostorScope,
    /// Cross-sensor impostors run in both sensor directions.
    pub cross_both_directions: bool,
}

impl ProtocolSpec {
    /// Cross-Eyed rules: impostors from other subjects only, 2nd image as
    /// gallery (plus the 3rd for training), cross impostors in both directions.
    pub fn cross_eyed(mode: TrialMode, role: ProtocolRole) -> Self {
        Self {
            mode,
            role,
            sensors: None,
            probe_index: 1,
            impostor_gallery: match role {
                ProtocolRole::Train => vec![2, 3],
                ProtocolRole::Test => vec![2],
            },
            impostor_scope: ImpostorScope::OtherSubjects,
            cross_both_directions: true,
        }
    }

    /// VSSIRIS rules: impostors from every other eye, 2nd image as gallery,
    /// one direction across devices.
    pub fn vssiris(mode: TrialMode) -> Self {
        Self {
            mode,
            role: ProtocolRole::Test,
            sensors: None,
            probe_index: 1,
            impostor_gallery: vec![2],
            impostor_scope: ImpostorScope::OtherEyes,
            cross_both_directions: false,
        }
    }

    pub fn with_sensors(mut self, sensors: Vec<String>) -> Self {
        self.sensors = Some(sensors);
        self
    }
}

type EyeId = (String, Eye);
type Images<'a> = BTreeMap<u32, &'a SampleRef>;

struct Index<'a> {
    eyes: BTreeMap<EyeId, BTreeMap<&'a str, Images<'a>>>,
    sensors: BTreeSet<&'a str>,
}

impl<'a> Index<'a> {
    fn new(manifest: &'a [SampleRef]) -> Result<Self> {
        let mut eyes: BTreeMap<EyeId, BTreeMap<&str, Images>> = BTreeMap::new();
        let mut sensors = BTreeSet::new();
        for s in manifest {
            sensors.insert(s.sensor.as_str());
            let slot = eyes.entry((s.subject.clone(), s.eye)).or_default().entry(s.sensor.as_str()).or_default();
            if slot.insert(s.index, s).is_some() {
                return Err(Error::Duplicate(s.key()));
            }
        }
        Ok(Self { eyes, sensors })
    }

    fn image(&self, eye: &EyeId, sensor: &str, index: u32) -> Result<&'a SampleRef> {
        self.eyes
            .get(eye)
            .and_then(|m| m.get(sensor))
            .and_then(|m| m.get(&index))
            .copied()
            .ok_or_else(|| Error::MissingImage {
                eye_key: format!("{}.{}.{}", eye.0, eye.1, sensor),
                index,
            })
    }

    fn images(&self, eye: &EyeId, sensor: &str) -> Vec<&'a SampleRef> {
        self.eyes
            .get(eye)
            .and_then(|m| m.get(sensor))
            .map(|m| m.values().copied().collect())
            .unwrap_or_default()
    }

    fn eyes_with(&self, sensor: &str) -> Vec<&EyeId> {
        self.eyes.iter().filter(|(_, m)| m.contains_key(sensor)).map(|(e, _)| e).collect()
    }
}

fn is_impostor(scope: ImpostorScope, probe: &EyeId, other: &EyeId) -> bool {
    match scope {
        ImpostorScope::OtherSubjects => probe.0 != other.0,
        ImpostorScope::OtherEyes => probe != other,
    }
}

/// Enumerates all trials of `spec` over `manifest`, sorted by trial id.
pub fn enumerate_trials(manifest: &[SampleRef], spec: &ProtocolSpec) -> Result<TrialSet> {
    let index = Index::new(manifest)?;
    let sensors: Vec<&str> = match &spec.sensors {
        Some(list) => {
            for s in list {
                if !index.sensors.contains(s.as_str()) {
                    return Err(Error::invalid(format!("sensor '{s}' does not appear in the manifest")));
                }
            }
            list.iter().map(String::as_str).collect()
        }
        None => index.sensors.iter().copied().collect(),
    };
    let mut trials = Vec::new();
    match spec.mode {
        TrialMode::SameSensor => {
            for &sensor in &sensors {
                same_sensor(&index, spec, sensor, &mut trials)?;
            }
        }
        TrialMode::CrossSensor => {
            let [a, b] = sensors[..] else {
                return Err(Error::invalid(format!(
                    "cross-sensor trials need exactly two sensors, got {}",
                    sensors.len()
                )));
            };
            if a == b {
                return Err(Error::invalid("cross-sensor trials need two distinct sensors"));
            }
            cross_sensor(&index, spec, a, b, &mut trials)?;
        }
    }
    TrialSet::from_trials(trials)
}

fn same_sensor(index: &Index, spec: &ProtocolSpec, sensor: &str, out: &mut Vec<Trial>) -> Result<()> {
    let eyes = index.eyes_with(sensor);
    for eye in &eyes {
        let imgs = index.images(eye, sensor);
        for (i, probe) in imgs.iter().enumerate() {
            for gallery in &imgs[i + 1..] {
                out.push(Trial::new((*probe).clone(), (*gallery).clone(), TrialMode::SameSensor)?);
            }
        }
    }
    for probe_eye in &eyes {
        let probe = index.image(probe_eye, sensor, spec.probe_index)?;
        for other in eyes.iter().filter(|o| is_impostor(spec.impostor_scope, probe_eye, o)) {
            for &g in &spec.impostor_gallery {
                let gallery = index.image(other, sensor, g)?;
                out.push(Trial::new(probe.clone(), gallery.clone(), TrialMode::SameSensor)?);
            }
        }
    }
    Ok(())
}

fn cross_sensor(index: &Index, spec: &ProtocolSpec, a: &str, b: &str, out: &mut Vec<Trial>) -> Result<()> {
    let eyes: Vec<&EyeId> = index.eyes.keys().collect();
    for eye in &eyes {
        for probe in index.images(eye, a) {
            for gallery in index.images(eye, b) {
                out.push(Trial::new(probe.clone(), gallery.clone(), TrialMode::CrossSensor)?);
            }
        }
    }
    let directions: &[(&str, &str)] = if spec.cross_both_directions { &[(a, b), (b, a)] } else { &[(a, b)] };
    for &(from, to) in directions {
        for probe_eye in &eyes {
            let probe = index.image(probe_eye, from, spec.probe_index)?;
            for other in eyes.iter().filter(|o| is_impostor(spec.impostor_scope, probe_eye, o)) {
                for &g in &spec.impostor_gallery {
                    let gallery = index.image(other, to, g)?;
                    out.push(Trial::new(probe.clone(), gallery.clone(), TrialMode::CrossSensor)?);
                }
            }
        }
    }
    Ok(())
}

/// One cross-validation fold; subject lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles subjects with `seed` and deals them into `k` near-equal test folds.
pub fn split_subjects(manifest: &[SampleRef], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let subjects: BTreeSet<&str> = manifest.iter().map(|s| s.subject.as_str()).collect();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > subjects.len() {
        return Err(Error::invalid(format!("{k} folds requested for {} subjects", subjects.len())));
    }
    let mut order: Vec<&str> = subjects.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|f| {
            let mut test = Vec::new();
            let mut train = Vec::new();
            for (i, s) in order.iter().enumerate() {
                if i % k == f { &mut test } else { &mut train }.push(s.to_string());
            }
            test.sort();
            train.sort();
            Fold { train, test }
        })
        .collect())
}

/// Samples belonging to `subjects`.
pub fn restrict_to_subjects(manifest: &[SampleRef], subjects: &[String]) -> Vec<SampleRef> {
    let keep: BTreeSet<&str> = subjects.iter().map(String::as_str).collect();
    manifest.iter().filter(|s| keep.contains(s.subject.as_str())).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    fn manifest(subjects: usize, sensors: &[&str], images: u32) -> Vec<SampleRef> {
        let mut out = Vec::new();
        for s in 0..subjects {
            for eye in [Eye::L, Eye::R] {
                for sensor in sensors {
                    for i in 1..=images {
                        out.push(SampleRef::new(format!("s{s:03}"), eye, *sensor, i, format!("img/{s}_{eye}_{sensor}_{i}.png")).unwrap());
                    }
                }
            }
        }
        out
    }

    fn counts(m: &[SampleRef], spec: &ProtocolSpec) -> (usize, usize) {
        let t = enumerate_trials(m, spec).unwrap();
        (t.count(Label::Target), t.count(Label::NonTarget))
    }

    #[test]
    fn cross_eyed_training_counts() {
        let m = manifest(30, &["NIR", "VIS"], 8);
        let same = ProtocolSpec::cross_eyed(TrialMode::SameSensor, ProtocolRole::Train).with_sensors(vec!["VIS".into()]);
        assert_eq!(counts(&m, &same), (1680, 6960));
        let cross = ProtocolSpec::cross_eyed(TrialMode::CrossSensor, ProtocolRole::Train);
        assert_eq!(counts(&m, &cross), (3840, 13920));
    }

    #[test]
    fn vssiris_counts() {
        let m = manifest(28, &["IP5S", "NL1020"], 5);
        let same = ProtocolSpec::vssiris(TrialMode::SameSensor).with_sensors(vec!["NL1020".into()]);
        assert_eq!(counts(&m, &same), (560, 3080));
        assert_eq!(counts(&m, &ProtocolSpec::vssiris(TrialMode::CrossSensor)), (1400, 3080));
    }

    #[test]
    fn same_sensor_without_selection_covers_every_sensor() {
        let m = manifest(4, &["NIR", "VIS"], 3);
        let spec = ProtocolSpec::cross_eyed(TrialMode::SameSensor, ProtocolRole::Test);
        let one = counts(&m, &spec.clone().with_sensors(vec!["NIR".into()]));
        assert_eq!(counts(&m, &spec), (2 * one.0, 2 * one.1));
    }

    #[test]
    fn genuine_and_impostor_identity_rules() {
        let m = manifest(5, &["NIR", "VIS"], 4);
        for spec in [
            ProtocolSpec::cross_eyed(TrialMode::SameSensor, ProtocolRole::Train),
            ProtocolSpec::cross_eyed(TrialMode::CrossSensor, ProtocolRole::Test),
            ProtocolSpec::vssiris(TrialMode::SameSensor),
        ] {
            let set = enumerate_trials(&m, &spec).unwrap();
            let mut unordered = BTreeSet::new();
            for t in set.trials() {
                let same_eye = t.probe.eye_key() == t.gallery.eye_key();
                assert_eq!(same_eye, t.label == Label::Target);
                if t.label == Label::Target && spec.mode == TrialMode::SameSensor {
                    let (a, b) = (t.probe.key(), t.gallery.key());
                    assert!(unordered.insert(if a < b { (a, b) } else { (b, a) }));
                }
                if spec.impostor_scope == ImpostorScope::OtherSubjects && t.label == Label::NonTarget {
                    assert_ne!(t.probe.subject, t.gallery.subject);
                }
            }
            let ids: Vec<String> = set.trials().iter().map(Trial::id).collect();
            let mut sorted = ids.clone();
            sorted.sort();
            assert_eq!(ids, sorted);
        }
    }

    #[test]
    fn missing_image_is_reported() {
        let m: Vec<SampleRef> = manifest(3, &["VIS"], 2);
        let spec = ProtocolSpec::cross_eyed(TrialMode::SameSensor, ProtocolRole::Train);
        match enumerate_trials(&m, &spec) {
            Err(Error::MissingImage { index, .. }) => assert_eq!(index, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cross_mode_needs_two_sensors() {
        let m = manifest(3, &["VIS"], 3);
        assert!(enumerate_trials(&m, &ProtocolSpec::vssiris(TrialMode::CrossSensor)).is_err());
        let m = manifest(3, &["A", "B", "C"], 3);
        assert!(enumerate_trials(&m, &ProtocolSpec::vssiris(TrialMode::CrossSensor)).is_err());
        let spec = ProtocolSpec::vssiris(TrialMode::CrossSensor).with_sensors(vec!["C".into(), "A".into()]);
        let set = enumerate_trials(&m, &spec).unwrap();
        assert!(set.trials().iter().filter(|t| t.label == Label::Target).all(|t| t.probe.sensor == "C"));
    }

    #[test]
    fn folds() {
        let m = manifest(28, &["A"], 1);
        let f = split_subjects(&m, 2, 9).unwrap();
        assert_eq!((f[0].test.len(), f[1].test.len()), (14, 14));
        assert!(f[0].test.iter().all(|s| !f[1].test.contains(s)));
        assert_eq!(f[0].train, f[1].test);
        assert_eq!(f, split_subjects(&m, 2, 9).unwrap());
        assert_ne!(f, split_subjects(&m, 2, 10).unwrap());

        let loso = split_subjects(&m, 28, 1).unwrap();
        assert!(loso.iter().all(|f| f.test.len() == 1 && f.train.len() == 27));
        assert!(split_subjects(&m, 29, 1).is_err());
        assert!(split_subjects(&m, 1, 1).is_err());

        let sub = restrict_to_subjects(&m, &f[0].test);
        assert_eq!(sub.len(), 14 * 2);
    }
}

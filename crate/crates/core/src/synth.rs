//! Gaussian score tables with known optimal error rates.
//!
//! Each comparator score is unit-variance normal with mean `+d/2` on
//! targets and `-d/2` on non-targets, so a single comparator has EER
//! `Phi(-d/2)`. Comparators share pairwise correlation `rho` through a common
//! factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Label, ScoreTable};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub targets: usize,
    pub nontargets: usize,
    /// Class separation `d` per comparator; comparator `j` is named `c{j+1}`.
    pub separations: Vec<f64>,
    pub correlation: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn comparator_names(&self) -> Vec<String> {
        (1..=self.separations.len()).map(|j| format!("c{j}")).collect()
    }
}

pub fn synth(spec: &SynthSpec) -> Result<ScoreTable> {
    if spec.targets == 0 || spec.nontargets == 0 {
        return Err(Error::invalid("synthetic tables need both targets and non-targets"));
    }
    if spec.separations.is_empty() || spec.separations.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("need at least one finite separation"));
    }
    if !(0.0..1.0).contains(&spec.correlation) {
        return Err(Error::invalid(format!("correlation must be in [0, 1), got {}", spec.correlation)));
    }
    let names = spec.comparator_names();
    let n = spec.targets + spec.nontargets;
    let width = n.to_string().len();
    let (shared, own) = (spec.correlation.sqrt(), (1.0 - spec.correlation).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut table = ScoreTable::new();
    for i in 0..n {
        let label = if i < spec.targets { Label::Target } else { Label::NonTarget };
        let sign = if label.is_target() { 0.5 } else { -0.5 };
        let common: f64 = rng.sample(StandardNormal);
        let id = format!("s{i:0width$}");
        for (name, d) in names.iter().zip(&spec.separations) {
            let e: f64 = rng.sample(StandardNormal);
            table.add(id.clone(), label, name.clone(), sign * d + shared * common + own * e)?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rho: f64) -> SynthSpec {
        SynthSpec {
            targets: 20_000,
            nontargets: 20_000,
            separations: vec![2.0, 1.0],
            correlation: rho,
            seed: 3,
        }
    }

    #[test]
    fn moments_and_correlation() {
        let t = synth(&spec(0.4)).unwrap();
        let (a, la) = t.column("c1");
        let (b, _) = t.column("c2");
        let tgt: Vec<usize> = (0..a.len()).filter(|&i| la[i].is_target()).collect();
        let mean = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64;
        assert!((mean(&a, &tgt) - 1.0).abs() < 0.03);
        assert!((mean(&b, &tgt) - 0.5).abs() < 0.03);
        let (ma, mb) = (mean(&a, &tgt), mean(&b, &tgt));
        let cov = tgt.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / tgt.len() as f64;
        assert!((cov - 0.4).abs() < 0.03, "{cov}");
    }

    #[test]
    fn deterministic_by_seed() {
        assert_eq!(synth(&spec(0.0)).unwrap(), synth(&spec(0.0)).unwrap());
        let other = SynthSpec { seed: 4, ..spec(0.0) };
        assert_ne!(synth(&spec(0.0)).unwrap(), synth(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(synth(&SynthSpec { correlation: 1.0, ..spec(0.0) }).is_err());
        assert!(synth(&SynthSpec { targets: 0, ..spec(0.0) }).is_err());
        assert!(synth(&SynthSpec {
            separations: vec![],
            ..spec(0.0)
        })
        .is_err());
    }
}

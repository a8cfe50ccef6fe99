//! Verification error rates and DET-curve data.
//!
//! Scores are similarities: a trial is accepted when its score is at least
//! the threshold, so ties are accepted.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Label;

/// Default operating point for FRR reporting: FAR = 0.01%.
pub const DEFAULT_FAR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Operating points at every distinct score, in increasing threshold order,
/// bracketed by the accept-all and reject-all endpoints.
pub fn roc(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score #{i} is {}", scores[i])));
    }
    let targets = labels.iter().filter(|l| l.is_target()).count();
    let nontargets = labels.len() - targets;
    if targets == 0 || nontargets == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (t, n) = (targets as f64, nontargets as f64);
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    }];
    let (mut targets_below, mut nontargets_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        points.push(RocPoint {
            threshold: v,
            far: (nontargets - nontargets_below) as f64 / n,
            frr: targets_below as f64 / t,
        });
        while i < order.len() && scores[order[i]] == v {
            if labels[order[i]].is_target() {
                targets_below += 1;
            } else {
                nontargets_below += 1;
            }
            i += 1;
        }
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Equal error rate, interpolated linearly where `far - frr` changes sign.
pub fn eer(roc: &[RocPoint]) -> f64 {
    for w in roc.windows(2) {
        let (d0, d1) = (w[0].far - w[0].frr, w[1].far - w[1].frr);
        if d1 <= 0.0 {
            let t = d0 / (d0 - d1);
            return w[0].far + t * (w[1].far - w[0].far);
        }
    }
    roc.last().map_or(0.0, |p| p.far)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrrAtFar {
    pub frr: f64,
    /// The requested FAR is below every non-zero FAR the data reaches, so
    /// `frr` is the rate at FAR = 0.
    pub extrapolated: bool,
}

/// FRR at `alpha` FAR, linearly interpolated between operating points.
pub fn frr_at_far(roc: &[RocPoint], alpha: f64) -> FrrAtFar {
    let Some(j) = roc.iter().position(|p| p.far <= alpha) else {
        return FrrAtFar {
            frr: roc.last().map_or(1.0, |p| p.frr),
            extrapolated: true,
        };
    };
    let hit = roc[j];
    if hit.far == alpha || j == 0 {
        return FrrAtFar {
            frr: hit.frr,
            extrapolated: false,
        };
    }
    if hit.far == 0.0 {
        return FrrAtFar {
            frr: hit.frr,
            extrapolated: true,
        };
    }
    let prev = roc[j - 1];
    let t = (prev.far - alpha) / (prev.far - hit.far);
    FrrAtFar {
        frr: prev.frr + t * (hit.frr - prev.frr),
        extrapolated: false,
    }
}

/// Inverse standard normal CDF (Wichura's AS 241, PPND16).
pub fn probit(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = (-(if q < 0.0 { p } else { 1.0 - p }).ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub nd_far: f64,
    pub nd_frr: f64,
}

/// Normal-deviate coordinates of the operating points with FAR and FRR in (0, 1).
pub fn det_points(roc: &[RocPoint]) -> Vec<DetPoint> {
    roc.iter()
        .filter(|p| p.far > 0.0 && p.far < 1.0 && p.frr > 0.0 && p.frr < 1.0)
        .map(|p| DetPoint {
            threshold: p.threshold,
            far: p.far,
            frr: p.frr,
            nd_far: probit(p.far),
            nd_frr: probit(p.frr),
        })
        .collect()
}

pub fn write_det_csv(points: &[DetPoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "far", "frr", "nd_far", "nd_frr"])?;
    for p in points {
        w.write_record([p.threshold, p.far, p.frr, p.nd_far, p.nd_frr].map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<det csv>", e))
}

/// Headline numbers for one score set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub targets: usize,
    pub nontargets: usize,
    pub eer: f64,
    pub far_target: f64,
    pub frr_at_far: f64,
    pub extrapolated: bool,
}

pub fn summarize(scores: &[f64], labels: &[Label], far_target: f64) -> Result<Summary> {
    let curve = roc(scores, labels)?;
    let at = frr_at_far(&curve, far_target);
    let targets = labels.iter().filter(|l| l.is_target()).count();
    Ok(Summary {
        targets,
        nontargets: labels.len() - targets,
        eer: eer(&curve),
        far_target,
        frr_at_far: at.frr,
        extrapolated: at.extrapolated,
    })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "targets: {}", self.targets)?;
        writeln!(f, "non-targets: {}", self.nontargets)?;
        writeln!(f, "EER: {:.4}%", 100.0 * self.eer)?;
        write!(f, "FRR@FAR={}%: {:.4}%", 100.0 * self.far_target, 100.0 * self.frr_at_far)?;
        if self.extrapolated {
            write!(f, " (at FAR=0; target FAR below the smallest reachable)")?;
        }
        Ok(())
    }
}

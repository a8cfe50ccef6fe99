//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line whether or not it succeeds.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use periocular_core::comparison::{chi2, safe_score};
use periocular_core::descriptors::{extract_gabor, extract_hog, extract_lbp, extract_ntnu, extract_safe, GaborGrid, PyramidParams, SafeParams};
use periocular_core::fusion::{calibrate_joint, CalibrationOptions, FusionMethod, FusionModel, FusionOptions, subset_search, znorm_apply, znorm_fit};
use periocular_core::imaging::NormalizationSpec;
use periocular_core::keypoints::{match_score, Keypoint, MatchParams};
use periocular_core::metrics::{eer, frr_at_far, roc, summarize};
use periocular_core::model::{Eye, GrayImage, Label, Payload, SampleRef, ScoreMatrix, ScoreTable, Template, TemplateKind, TrialMode, FUSED};
use periocular_core::protocol::{enumerate_trials, ProtocolRole, ProtocolSpec};
use periocular_core::synth::{synth, SynthSpec};

type Outcome = Result<String, String>;

/// Phi(-1) and Phi(-sqrt 2): Gaussian EERs for separation 2 and 2*sqrt 2.
const EER_SINGLE: f64 = 0.158_655_253_931_457_05;
const EER_FUSED: f64 = 0.078_649_603_525_142_7;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(number: u32, name: &str, budget: Duration, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let result = result.and_then(|detail| {
        if elapsed > budget {
            Err(format!("{detail}; took {:.1}s, budget {}s", elapsed.as_secs_f64(), budget.as_secs()))
        } else {
            Ok(detail)
        }
    });
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {number} [{tag}] {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
    result.is_ok()
}

fn manifest(subjects: usize, sensors: &[&str], images: u32) -> Vec<SampleRef> {
    let mut out = Vec::new();
    for s in 0..subjects {
        for eye in [Eye::L, Eye::R] {
            for sensor in sensors {
                for i in 1..=images {
                    out.push(SampleRef::new(format!("s{s:03}"), eye, *sensor, i, format!("{s}_{eye}_{sensor}_{i}.png")).unwrap());
                }
            }
        }
    }
    out
}

fn protocol_counts() -> Outcome {
    let counts = |m: &[SampleRef], spec: &ProtocolSpec| {
        let t = enumerate_trials(m, spec).map_err(|e| e.to_string())?;
        Ok::<_, String>((t.count(Label::Target), t.count(Label::NonTarget)))
    };
    let train = manifest(30, &["NIR", "VIS"], 8);
    let test = manifest(90, &["NIR", "VIS"], 8);
    let vss = manifest(28, &["IP5S", "NL1020"], 5);
    let cases = [
        ("cross-eyed train same", counts(&train, &ProtocolSpec::cross_eyed(TrialMode::SameSensor, ProtocolRole::Train).with_sensors(vec!["NIR".into()]))?, (1680, 6960)),
        ("cross-eyed train cross", counts(&train, &ProtocolSpec::cross_eyed(TrialMode::CrossSensor, ProtocolRole::Train))?, (3840, 13920)),
        ("cross-eyed test same", counts(&test, &ProtocolSpec::cross_eyed(TrialMode::SameSensor, ProtocolRole::Test).with_sensors(vec!["VIS".into()]))?, (5040, 32040)),
        ("cross-eyed test cross", counts(&test, &ProtocolSpec::cross_eyed(TrialMode::CrossSensor, ProtocolRole::Test))?, (11520, 64080)),
        ("vssiris same", counts(&vss, &ProtocolSpec::vssiris(TrialMode::SameSensor).with_sensors(vec!["IP5S".into()]))?, (560, 3080)),
        ("vssiris cross", counts(&vss, &ProtocolSpec::vssiris(TrialMode::CrossSensor))?, (1400, 3080)),
    ];
    for (name, got, want) in &cases {
        ensure(got == want, || format!("{name}: got {got:?}, want {want:?}"))?;
    }
    Ok(cases.iter().map(|(n, g, _)| format!("{n} {}/{}", g.0, g.1)).collect::<Vec<_>>().join(", "))
}

fn synthetic_image(spec: &NormalizationSpec, seed: u64) -> GrayImage {
    let (h, w) = spec.out_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.gen_range(0.0..6.28);
    let noise: Vec<u8> = (0..w * h).map(|_| rng.gen_range(0..40)).collect();
    let a = spec.output_anchor();
    GrayImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - a.0, y as f64 - a.1);
        let r = (dx * dx + dy * dy).sqrt();
        let v = 110.0 + 60.0 * (r / 9.0 + phase).sin() + 30.0 * (x as f64 / 23.0).cos() * (y as f64 / 31.0).sin();
        (v + noise[y * w + x] as f64).clamp(0.0, 255.0) as u8
    })
    .unwrap()
    .with_geometry(a, spec.target_scale)
    .unwrap()
}

fn feature_dimensions() -> Outcome {
    let presets = [
        ("crosseyed", NormalizationSpec::cross_eyed(), GaborGrid::cross_eyed(), SafeParams::cross_eyed(), 1440, 384),
        ("vssiris", NormalizationSpec::vssiris(), GaborGrid::vssiris(), SafeParams::vssiris(), 1680, 448),
    ];
    let mut report = Vec::new();
    for (name, geom, grid, safe, gabor_len, hist_len) in presets {
        for k in 0..8 {
            let img = synthetic_image(&geom, 100 + k);
            let err = |e: periocular_core::Error| format!("{name}: {e}");
            let s = extract_safe(&img, &safe).map_err(err)?;
            ensure(s.kind() == TemplateKind::ComplexVector && s.payload().len() == 162, || format!("{name}: SAFE has {} values", s.payload().len()))?;
            let g = extract_gabor(&img, &grid).map_err(err)?;
            ensure(g.payload().len() == gabor_len, || format!("{name}: Gabor has {}", g.payload().len()))?;
            for t in [extract_lbp(&img, &grid).map_err(err)?, extract_hog(&img, &grid).map_err(err)?] {
                ensure(t.payload().len() == hist_len, || format!("{name}: {} has {}", t.comparator_id(), t.payload().len()))?;
            }
            let n = extract_ntnu(&img, &PyramidParams::default()).map_err(err)?;
            ensure(n.payload().len() == 9472, || format!("{name}: NTNU has {}", n.payload().len()))?;
        }
        report.push(format!("{name}: SAFE 162c, Gabor {gabor_len}, LBP/HOG {hist_len}, NTNU 9472"));
    }
    Ok(format!("16 images; {}", report.join("; ")))
}

fn gaussian_matrix(n: usize, sep: f64, seed: u64) -> ScoreMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = i % 2 == 0;
        labels.push(if t { Label::Target } else { Label::NonTarget });
        values.push(rng.sample::<f64, _>(StandardNormal) + if t { sep / 2.0 } else { -sep / 2.0 });
    }
    ScoreMatrix {
        trial_ids: (0..n).map(|i| format!("t{i:06}")).collect(),
        labels,
        comparators: vec!["c1".into()],
        values,
    }
}

fn calibration_oracle() -> Outcome {
    let m = gaussian_matrix(100_000, 2.0, 11);
    let fit = calibrate_joint(&m, &CalibrationOptions::default()).map_err(|e| e.to_string())?;
    let (a0, a1) = (fit.weights[0], fit.weights[1]);
    ensure((1.9..=2.1).contains(&a1), || format!("slope {a1} outside [1.9, 2.1]"))?;
    ensure(a0.abs() <= 0.1, || format!("intercept {a0} outside [-0.1, 0.1]"))?;
    ensure(fit.objective_history.windows(2).all(|w| w[1] <= w[0]), || "objective increased".into())?;
    let other = calibrate_joint(
        &m,
        &CalibrationOptions {
            init: Some(vec![-1.5, 4.0]),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let gap = fit.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(gap < 1e-4, || format!("initializations differ by {gap}"))?;
    Ok(format!(
        "a1={a1:.4} a0={a0:.4}, {} iterations, |grad|={:.1e}, init gap {gap:.1e}",
        fit.iterations, fit.gradient_norm
    ))
}

fn fused_eer(method: FusionMethod, train: &ScoreTable, eval: &ScoreTable) -> Result<f64, String> {
    let model = FusionModel::train(method, train, &FusionOptions::default()).map_err(|e| e.to_string())?;
    let fused = model.apply(eval).map_err(|e| e.to_string())?;
    let (s, l) = fused.column(FUSED);
    Ok(summarize(&s, &l, 1e-3).map_err(|e| e.to_string())?.eer)
}

fn fusion_gain() -> Outcome {
    let spec = |seed| SynthSpec {
        targets: 50_000,
        nontargets: 50_000,
        separations: vec![2.0, 2.0],
        correlation: 0.0,
        seed,
    };
    let train = synth(&spec(21)).map_err(|e| e.to_string())?;
    let eval = synth(&spec(22)).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for c in ["c1", "c2"] {
        let (s, l) = eval.column(c);
        let e = summarize(&s, &l, 1e-3).map_err(|e| e.to_string())?.eer;
        ensure((e - EER_SINGLE).abs() <= 0.005, || format!("{c} alone has EER {e}"))?;
        parts.push(format!("{c} {:.2}%", 100.0 * e));
    }
    for method in [FusionMethod::LlrJoint, FusionMethod::LlrSum, FusionMethod::Average] {
        let e = fused_eer(method, &train, &eval)?;
        ensure((e - EER_FUSED).abs() <= 0.005, || format!("{method} fused EER {e}"))?;
        parts.push(format!("{method} {:.2}%", 100.0 * e));
    }
    Ok(parts.join(", "))
}

/// Threshold sweep written from the definitions: accept when score >= t.
fn oracle_curve(scores: &[f64], labels: &[Label]) -> Vec<(f64, f64)> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let nt = labels.iter().filter(|l| l.is_target()).count() as f64;
    let nn = labels.len() as f64 - nt;
    let mut curve = vec![(1.0, 0.0)];
    for t in thresholds {
        let fa = scores.iter().zip(labels).filter(|(s, l)| !l.is_target() && **s >= t).count() as f64;
        let fr = scores.iter().zip(labels).filter(|(s, l)| l.is_target() && **s < t).count() as f64;
        curve.push((fa / nn, fr / nt));
    }
    curve.push((0.0, 1.0));
    curve
}

fn oracle_eer(curve: &[(f64, f64)]) -> f64 {
    let k = (1..curve.len()).find(|&k| curve[k].0 - curve[k].1 <= 0.0).unwrap();
    let (d0, d1) = (curve[k - 1].0 - curve[k - 1].1, curve[k].0 - curve[k].1);
    curve[k - 1].0 + d0 / (d0 - d1) * (curve[k].0 - curve[k - 1].0)
}

fn oracle_frr(curve: &[(f64, f64)], alpha: f64) -> f64 {
    let k = (0..curve.len()).find(|&k| curve[k].0 <= alpha).unwrap();
    if k == 0 || curve[k].0 == alpha || curve[k].0 == 0.0 {
        return curve[k].1;
    }
    let (f0, r0) = curve[k - 1];
    let (f1, r1) = curve[k];
    r0 + (f0 - alpha) / (f0 - f1) * (r1 - r0)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for table in 0..50 {
        let sep: f64 = rng.gen_range(0.0..3.0);
        // Coarse rounding on some tables exercises tied scores.
        let grain = if table % 3 == 0 { 10.0 } else { 1e9 };
        let labels: Vec<Label> = (0..1000).map(|_| if rng.gen_bool(0.3) { Label::Target } else { Label::NonTarget }).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| {
                let v = rng.sample::<f64, _>(StandardNormal) + if l.is_target() { sep } else { 0.0 };
                (v * grain).round() / grain
            })
            .collect();
        let curve = roc(&scores, &labels).map_err(|e| e.to_string())?;
        let oracle = oracle_curve(&scores, &labels);
        ensure(curve.len() == oracle.len(), || format!("table {table}: curve lengths differ"))?;
        let d = (eer(&curve) - oracle_eer(&oracle)).abs();
        ensure(d <= 1e-12, || format!("table {table}: EER differs by {d}"))?;
        worst = worst.max(d);
        for alpha in [1e-3, 1e-2, 0.05, 0.1] {
            let d = (frr_at_far(&curve, alpha).frr - oracle_frr(&oracle, alpha)).abs();
            ensure(d <= 1e-12, || format!("table {table}: FRR@{alpha} differs by {d}"))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("50 tables x 1000 trials, max deviation {worst:.1e}"))
}

fn pdf(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_map(|mut v| {
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
        } else {
            let u = 1.0 / v.len() as f64;
            v.iter_mut().for_each(|x| *x = u);
        }
        v
    })
}

fn keypoints(max: usize) -> impl Strategy<Value = Vec<Keypoint>> {
    prop::collection::vec(
        (0.0f64..300.0, 0.0f64..300.0, prop::collection::vec(0.0f64..1.0, 128)).prop_map(|(x, y, descriptor)| Keypoint {
            x,
            y,
            scale: 2.0,
            orientation: 0.0,
            descriptor,
        }),
        0..max,
    )
}

fn property_suites() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 128,
        failure_persistence: None,
        ..Config::default()
    });
    let mut done = Vec::new();
    let mut check = |name: &str, result: Result<(), String>| {
        result.map_err(|e| format!("{name}: {e}"))?;
        done.push(name.to_string());
        Ok::<(), String>(())
    };

    check(
        "chi2 axioms",
        runner
            .run(&(pdf(16), pdf(16), pdf(16)), |(p, q, r)| {
                let d = chi2(&p, &q).unwrap();
                prop_assert!(d >= 0.0);
                prop_assert!(chi2(&p, &p).unwrap() == 0.0);
                prop_assert!((d - chi2(&q, &p).unwrap()).abs() <= 1e-12);
                prop_assert!(d <= 2.0 + 1e-12);
                let _ = r;
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    let cvec = prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b)| Complex64::new(a, b)), 162);
    check(
        "SAFE score bounds",
        runner
            .run(&(cvec.clone(), cvec), |(q, t)| {
                prop_assume!(q.iter().any(|z| z.norm() > 1e-6) && t.iter().any(|z| z.norm() > 1e-6));
                let s = safe_score(&q, &t).unwrap();
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
                prop_assert!((safe_score(&q, &q).unwrap() - 1.0).abs() <= 1e-12);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    check(
        "match_score symmetry and bounds",
        runner
            .run(&(keypoints(25), keypoints(25)), |(a, b)| {
                let p = MatchParams::default();
                let s = match_score(&a, &b, &p);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, match_score(&b, &a, &p));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    check(
        "metric invariance under monotone transforms",
        runner
            .run(&prop::collection::vec((-3.0f64..3.0, any::<bool>()), 4..200), |pairs| {
                let labels: Vec<Label> = pairs.iter().map(|p| if p.1 { Label::Target } else { Label::NonTarget }).collect();
                prop_assume!(labels.iter().any(|l| l.is_target()) && labels.iter().any(|l| !l.is_target()));
                let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let t: Vec<f64> = s.iter().map(|v| (2.0 * v).exp() + 7.0).collect();
                let (a, b) = (roc(&s, &labels).unwrap(), roc(&t, &labels).unwrap());
                prop_assert_eq!(eer(&a), eer(&b));
                prop_assert_eq!(frr_at_far(&a, 0.1), frr_at_far(&b, 0.1));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    check(
        "znorm round trip",
        runner
            .run(&prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..80), |rows| {
                let m = ScoreMatrix {
                    trial_ids: (0..rows.len()).map(|i| format!("t{i:03}")).collect(),
                    labels: (0..rows.len()).map(|i| if i % 2 == 0 { Label::Target } else { Label::NonTarget }).collect(),
                    comparators: vec!["a".into(), "b".into()],
                    values: rows.iter().flat_map(|r| [r.0, r.1]).collect(),
                };
                let Ok(stats) = znorm_fit(&m) else { return Ok(()) };
                prop_assume!(stats.std.iter().all(|&s| s > 1e-3));
                let z = znorm_apply(&stats, &m).unwrap();
                for (i, v) in z.values.iter().enumerate() {
                    let back = v * stats.std[i % 2] + stats.mean[i % 2];
                    prop_assert!((back - m.values[i]).abs() <= 1e-9);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    let payloads = prop_oneof![
        prop::collection::vec(any::<f64>(), 1..50).prop_map(|v| (TemplateKind::RealVector, Payload::Real(v))),
        prop::collection::vec((any::<f64>(), any::<f64>()), 1..50)
            .prop_map(|v| (TemplateKind::ComplexVector, Payload::Complex(v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()))),
        prop::collection::vec(any::<u32>(), 1..50).prop_map(|v| (TemplateKind::CodeHistogram, Payload::Counts(v))),
    ];
    check(
        "template serialization bijection",
        runner
            .run(&("[a-z]{1,12}", payloads), |(id, (kind, payload))| {
                let dims = vec![payload.len() as u64];
                let t = Template::new(id, kind, dims, payload).unwrap();
                let bytes = t.to_bytes();
                let back = Template::from_bytes(&bytes).unwrap();
                prop_assert_eq!(back.to_bytes(), bytes);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    )?;

    // Deterministic re-runs: the same inputs give byte-identical outputs.
    let rerun = || -> Result<(Vec<u8>, String, Vec<u8>), String> {
        let spec = SynthSpec {
            targets: 300,
            nontargets: 900,
            separations: vec![2.0, 1.0],
            correlation: 0.3,
            seed: 5,
        };
        let table = synth(&spec).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        table.write_csv(&mut csv).map_err(|e| e.to_string())?;
        let opts = FusionOptions {
            trees: 25,
            seed: 3,
            ..Default::default()
        };
        let model = FusionModel::train(FusionMethod::RandomForest, &table, &opts).map_err(|e| e.to_string())?;
        let img = synthetic_image(&NormalizationSpec::cross_eyed(), 7);
        let tpl = extract_lbp(&img, &GaborGrid::cross_eyed()).map_err(|e| e.to_string())?;
        Ok((csv, model.to_json().map_err(|e| e.to_string())?, tpl.to_bytes()))
    };
    check("deterministic re-runs", {
        let (a, b) = (rerun()?, rerun()?);
        ensure(a == b, || "outputs differ between runs".into())
    })?;

    Ok(format!("{} suites: {}", done.len(), done.join(", ")))
}

fn subset_search_sanity() -> Outcome {
    let spec = |seed| SynthSpec {
        targets: 5_000,
        nontargets: 50_000,
        separations: vec![3.5, 3.0, 2.5, 2.0],
        correlation: 0.0,
        seed,
    };
    let train = synth(&spec(41)).map_err(|e| e.to_string())?;
    let eval = synth(&spec(42)).map_err(|e| e.to_string())?;
    let far = 1e-3;
    let out = subset_search(&train, &eval, FusionMethod::LlrJoint, &FusionOptions::default(), far).map_err(|e| e.to_string())?;
    ensure(out.ranked.len() == 15 && out.skipped.is_empty(), || format!("{} ranked, {} skipped", out.ranked.len(), out.skipped.len()))?;
    let best = |size: usize| out.ranked.iter().find(|r| r.comparators.len() == size).unwrap();
    let (one, two) = (best(1), best(2));
    ensure(one.key() == "c1", || format!("best single comparator is {}", one.key()))?;
    ensure(two.frr_at_far <= one.frr_at_far, || format!("best pair {} FRR {} above best single {}", two.key(), two.frr_at_far, one.frr_at_far))?;
    Ok(format!(
        "best single {} FRR {:.4}, best pair {} FRR {:.4} @ FAR {far}",
        one.key(),
        one.frr_at_far,
        two.key(),
        two.frr_at_far
    ))
}

fn main() {
    // Skip when invoked for test listing or filtering by the harness tooling.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let results = [
        run(1, "protocol counts", secs(5), protocol_counts),
        run(2, "feature dimensions", secs(60), feature_dimensions),
        run(3, "calibration oracle", secs(30), calibration_oracle),
        run(4, "fusion gain oracle", secs(60), fusion_gain),
        run(5, "metric oracle equivalence", secs(300), metric_oracle),
        run(6, "property suites", secs(300), property_suites),
        run(7, "subset search sanity", secs(120), subset_search_sanity),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

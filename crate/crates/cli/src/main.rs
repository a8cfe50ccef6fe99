//! `periocular`: batch front end for the verification pipeline.
//!
//! Every command writes its outputs through a temporary file in the target
//! directory and renames it on success, so a failed run leaves nothing behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use periocular_core::comparison::{compare, ComparatorBinding};
use periocular_core::descriptors::{
    extract_gabor, extract_hog, extract_lbp, extract_ntnu, extract_safe, GaborGrid, PyramidParams, SafeParams,
};
use periocular_core::fusion::{subset_search, FusionMethod, FusionModel, FusionOptions};
use periocular_core::imaging::{clahe, encode_pgm, load_gray, normalize_geometry, read_annotations, NormalizationSpec, DEFAULT_CLIP_LIMIT, DEFAULT_TILES};
use periocular_core::keypoints::{detect_and_describe, to_template};
use periocular_core::metrics::{det_points, roc, summarize, write_det_csv, DEFAULT_FAR};
use periocular_core::model::{read_manifest, read_template, read_trials_csv, write_manifest, GrayImage, Label, ScoreTable, Template, TrialMode, FUSED};
use periocular_core::protocol::{enumerate_trials, restrict_to_subjects, split_subjects, ProtocolRole, ProtocolSpec};
use periocular_core::synth::{synth, SynthSpec};
use periocular_core::{Error, Result};

const TEMPLATE_EXT: &str = "ptpl";

#[derive(Parser)]
#[command(name = "periocular", version, about = "Periocular verification pipeline: preprocess, extract, score, fuse, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize geometry and apply CLAHE to every manifest image.
    Preprocess(PreprocessArgs),
    /// Extract one comparator's templates from preprocessed images.
    Extract(ExtractArgs),
    /// Enumerate genuine and impostor trials for a protocol.
    Trials(TrialsArgs),
    /// Compare template pairs listed in a trials file.
    Score(ScoreArgs),
    /// Train or apply a score fusion model.
    #[command(subcommand)]
    Fuse(FuseCommand),
    /// Print EER and FRR at a target FAR, optionally writing DET data.
    Eval(EvalArgs),
    /// Rank every comparator subset by fused performance.
    Search(SearchArgs),
    /// Generate Gaussian scores with known error rates.
    Synth(SynthArgs),
    /// Split the subjects of a manifest into seeded cross-validation folds.
    Split(SplitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Crosseyed,
    Vssiris,
}

impl Preset {
    fn geometry(self) -> NormalizationSpec {
        match self {
            Preset::Crosseyed => NormalizationSpec::cross_eyed(),
            Preset::Vssiris => NormalizationSpec::vssiris(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Extractor {
    Safe,
    Gabor,
    Lbp,
    Hog,
    Ntnu,
    Sift,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Dataset geometry preset.
    #[arg(long, value_enum)]
    preset: Preset,
    /// Sample manifest CSV; relative image paths resolve against its directory.
    #[arg(long)]
    manifest: PathBuf,
    /// Annotation CSV keyed by subject, eye, sensor and index.
    #[arg(long)]
    annotations: PathBuf,
    /// Output directory for `<sample key>.pgm` images.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, value_enum)]
    comparator: Extractor,
    /// Geometry preset the images were normalized with.
    #[arg(long, value_enum)]
    preset: Preset,
    /// Directory of preprocessed `.pgm` or `.png` images named by sample key.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for `<sample key>.ptpl` templates.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct TrialsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// same or cross.
    #[arg(long)]
    mode: TrialMode,
    /// train or test (ignored by the vssiris protocol).
    #[arg(long, default_value = "test")]
    role: ProtocolRole,
    /// Protocol rules to apply.
    #[arg(long, value_enum, default_value = "crosseyed")]
    preset: Preset,
    /// Restrict or order sensors; repeat the flag. Cross mode takes probes from the first.
    #[arg(long = "sensor")]
    sensors: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Built-in comparator (safe, gabor, lbp, hog, ntnu, sift) or an embedding name.
    #[arg(long)]
    comparator: String,
    /// Trials CSV written by `trials`.
    #[arg(long)]
    trials: PathBuf,
    /// Directory of `<sample key>.ptpl` templates.
    #[arg(long, required_unless_present = "vectors", conflicts_with = "vectors")]
    templates: Option<PathBuf>,
    /// Directory of imported embeddings: `<sample key>.ptpl`, `.csv` or `.txt`.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum FuseCommand {
    /// Fit a fusion model on a labelled score table.
    Train(FuseTrainArgs),
    /// Fuse a score table with a trained model.
    Apply(FuseApplyArgs),
}

#[derive(Args)]
struct FusionFlags {
    /// llr, llr-sum, avg, svm or rf.
    #[arg(long, default_value = "llr")]
    method: FusionMethod,
    /// SVM kernel: linear, rbf or poly.
    #[arg(long, default_value = "linear")]
    kernel: String,
    /// Trees in the random forest.
    #[arg(long, default_value_t = 600)]
    trees: usize,
    /// Target prior used by calibration.
    #[arg(long, default_value_t = 0.5)]
    prior: f64,
    /// Ridge penalty for calibration.
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    /// SVM box constraint.
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    /// Random seed; required for rf.
    #[arg(long)]
    seed: Option<u64>,
}

impl FusionFlags {
    fn options(&self) -> Result<FusionOptions> {
        if self.method == FusionMethod::RandomForest && self.seed.is_none() {
            return Err(Error::invalid("--seed is required for rf fusion"));
        }
        Ok(FusionOptions {
            prior: self.prior,
            lambda: self.lambda,
            kernel: self.kernel.clone(),
            svm_c: self.svm_c,
            trees: self.trees,
            seed: self.seed.unwrap_or(0),
        })
    }
}

#[derive(Args)]
struct FuseTrainArgs {
    #[command(flatten)]
    fusion: FusionFlags,
    /// Training score CSV.
    #[arg(long)]
    scores: PathBuf,
    /// Fuse only these comparators (repeat the flag); default all.
    #[arg(long = "comparator")]
    comparators: Vec<String>,
    /// Model JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Fused score CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Column to evaluate; defaults to the only one, else the fused column.
    #[arg(long)]
    comparator: Option<String>,
    /// Target false accept rate.
    #[arg(long, default_value_t = DEFAULT_FAR)]
    far: f64,
    /// DET curve CSV output.
    #[arg(long)]
    det: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    fusion: FusionFlags,
    /// Score CSV used to train each subset.
    #[arg(long)]
    train: PathBuf,
    /// Score CSV used to rank each subset.
    #[arg(long)]
    eval: PathBuf,
    /// Ranking criterion, `frr@far=<rate>`.
    #[arg(long, default_value = "frr@far=0.0001")]
    criterion: String,
    /// Subsets kept per size.
    #[arg(long, default_value_t = 3)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    targets: usize,
    #[arg(long)]
    nontargets: usize,
    #[arg(long, default_value_t = 1)]
    comparators: usize,
    /// Class separation; one value for all comparators or one per comparator, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    separation: Vec<f64>,
    /// Pairwise correlation between comparators, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long)]
    seed: u64,
    /// Directory receiving `fold<k>_train.csv` and `fold<k>_test.csv`.
    #[arg(long)]
    out: PathBuf,
}

/// Writes `path` through a sibling temporary file.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = BufWriter::new(tmp);
    body(&mut w)?;
    let tmp = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Files staged in a hidden directory inside `out`, moved in only once all succeed.
struct Staging {
    out: PathBuf,
    dir: tempfile::TempDir,
}

impl Staging {
    fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let dir = tempfile::Builder::new().prefix(".staging").tempdir_in(out).map_err(|e| Error::io(out, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            dir,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn commit(self, mut names: Vec<String>) -> Result<usize> {
        names.sort();
        for n in &names {
            let dest = self.out.join(n);
            fs::rename(self.dir.path().join(n), &dest).map_err(|e| Error::io(dest, e))?;
        }
        Ok(names.len())
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let spec = a.preset.geometry();
    let samples = read_manifest(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let file = fs::File::open(&a.annotations).map_err(|e| Error::io(&a.annotations, e))?;
    let annotations = read_annotations(file)?;
    let staging = Staging::new(&a.out)?;
    let names = pool(a.jobs)?.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let key = s.key();
                let ann = annotations
                    .get(&key)
                    .ok_or_else(|| Error::invalid(format!("no annotation for sample {key}")))?;
                let img = load_gray(base.join(&s.path))?;
                let norm = normalize_geometry(&img, ann, &spec)?;
                let out = clahe(&norm, DEFAULT_TILES, DEFAULT_CLIP_LIMIT)?;
                let name = format!("{key}.pgm");
                write_bytes(&staging.path(&name), &encode_pgm(&out))?;
                Ok(name)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = staging.commit(names)?;
    info!("preprocessed {n} images into {}", a.out.display());
    Ok(())
}

fn extract_one(img: &GrayImage, which: Extractor, preset: Preset) -> Result<Template> {
    let (grid, safe) = match preset {
        Preset::Crosseyed => (GaborGrid::cross_eyed(), SafeParams::cross_eyed()),
        Preset::Vssiris => (GaborGrid::vssiris(), SafeParams::vssiris()),
    };
    match which {
        Extractor::Safe => extract_safe(img, &safe),
        Extractor::Gabor => extract_gabor(img, &grid),
        Extractor::Lbp => extract_lbp(img, &grid),
        Extractor::Hog => extract_hog(img, &grid),
        Extractor::Ntnu => extract_ntnu(img, &PyramidParams::default()),
        Extractor::Sift => to_template(&detect_and_describe(img)?),
    }
}

/// Image files in `dir` as (sample key, path), sorted by key.
fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = matches!(path.extension().and_then(|e| e.to_str()), Some("pgm" | "png"));
        if let (true, Some(stem)) = (is_image && path.is_file(), path.file_stem().and_then(|s| s.to_str())) {
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Duplicate(format!("two images for sample {}", w[0].0)));
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("no .pgm or .png images in {}", dir.display())));
    }
    Ok(out)
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let spec = a.preset.geometry();
    let (h, w) = spec.out_size;
    let images = list_images(&a.input)?;
    let staging = Staging::new(&a.out)?;
    let names = pool(a.jobs)?.install(|| {
        images
            .par_iter()
            .map(|(key, path)| {
                let img = load_gray(path)?;
                if (img.height(), img.width()) != (h, w) {
                    return Err(Error::invalid(format!(
                        "{} is {}x{}, preset expects {w}x{h}",
                        path.display(),
                        img.width(),
                        img.height()
                    )));
                }
                let img = img.with_geometry(spec.output_anchor(), spec.target_scale)?;
                let t = extract_one(&img, a.comparator, a.preset)?;
                let name = format!("{key}.{TEMPLATE_EXT}");
                write_bytes(&staging.path(&name), &t.to_bytes())?;
                Ok(name)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = staging.commit(names)?;
    info!("wrote {n} templates into {}", a.out.display());
    Ok(())
}

fn trials(a: &TrialsArgs) -> Result<()> {
    let samples = read_manifest(&a.manifest)?;
    let mut spec = match a.preset {
        Preset::Crosseyed => ProtocolSpec::cross_eyed(a.mode, a.role),
        Preset::Vssiris => ProtocolSpec::vssiris(a.mode),
    };
    if !a.sensors.is_empty() {
        spec = spec.with_sensors(a.sensors.clone());
    }
    let set = enumerate_trials(&samples, &spec)?;
    info!(
        "{} genuine and {} impostor trials",
        set.count(Label::Target),
        set.count(Label::NonTarget)
    );
    write_atomic(&a.out, |w| set.write_csv(w))
}

fn load_vector(dir: &Path, comparator: &str, key: &str) -> Result<Template> {
    let tpl = dir.join(format!("{key}.{TEMPLATE_EXT}"));
    if tpl.is_file() {
        return read_template(tpl);
    }
    for ext in ["csv", "txt"] {
        let p = dir.join(format!("{key}.{ext}"));
        if p.is_file() {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            return Template::parse_embedding(comparator, &text);
        }
    }
    Err(Error::invalid(format!("no embedding for sample {key} in {}", dir.display())))
}

fn score(a: &ScoreArgs) -> Result<()> {
    let file = fs::File::open(&a.trials).map_err(|e| Error::io(&a.trials, e))?;
    let mut records = read_trials_csv(file)?;
    records.sort_by(|x, y| x.trial_id.cmp(&y.trial_id));
    let binding = ComparatorBinding::for_comparator(&a.comparator);
    let mut keys: Vec<&str> = records
        .iter()
        .flat_map(|r| [r.probe_key.as_str(), r.gallery_key.as_str()])
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let pool = pool(a.jobs)?;
    let templates: BTreeMap<&str, Template> = pool.install(|| {
        keys.par_iter()
            .map(|&k| {
                let t = match (&a.templates, &a.vectors) {
                    (_, Some(dir)) => load_vector(dir, &a.comparator, k)?,
                    (Some(dir), None) => read_template(dir.join(format!("{k}.{TEMPLATE_EXT}")))?,
                    (None, None) => unreachable!("clap requires one template source"),
                };
                Ok((k, t))
            })
            .collect::<Result<_>>()
    })?;
    let scores: Vec<f64> = pool.install(|| {
        records
            .par_iter()
            .map(|r| Ok(compare(&templates[r.probe_key.as_str()], &templates[r.gallery_key.as_str()], &binding)?.similarity()))
            .collect::<Result<_>>()
    })?;
    let mut table = ScoreTable::new();
    for (r, s) in records.iter().zip(scores) {
        table.add(r.trial_id.clone(), Label::from_flag(r.label)?, a.comparator.clone(), s)?;
    }
    info!("scored {} trials with {}", table.len(), a.comparator);
    write_atomic(&a.out, |w| table.write_csv(w))
}

fn fuse_train(a: &FuseTrainArgs) -> Result<()> {
    let table = ScoreTable::read_path(&a.scores)?;
    let opts = a.fusion.options()?;
    let model = if a.comparators.is_empty() {
        FusionModel::train(a.fusion.method, &table, &opts)?
    } else {
        FusionModel::train_on(a.fusion.method, &table, &a.comparators, &opts)?
    };
    let json = model.to_json()?;
    write_atomic(&a.out, |w| w.write_all(json.as_bytes()).map_err(|e| Error::io(&a.out, e)))
}

fn fuse_apply(a: &FuseApplyArgs) -> Result<()> {
    let model = FusionModel::read_path(&a.model)?;
    let table = ScoreTable::read_path(&a.scores)?;
    let fused = model.apply(&table)?;
    write_atomic(&a.out, |w| fused.write_csv(w))
}

fn eval_column(table: &ScoreTable, requested: Option<&str>) -> Result<String> {
    let names = table.comparators();
    match requested {
        Some(c) if names.iter().any(|n| n == c) => Ok(c.to_string()),
        Some(c) => Err(Error::invalid(format!("comparator {c} absent from score table"))),
        None if names.len() == 1 => Ok(names[0].clone()),
        None if names.iter().any(|n| n == FUSED) => Ok(FUSED.to_string()),
        None => Err(Error::invalid(format!(
            "score table has comparators {}; choose one with --comparator",
            names.join(", ")
        ))),
    }
}

fn eval(a: &EvalArgs) -> Result<()> {
    let table = ScoreTable::read_path(&a.scores)?;
    let name = eval_column(&table, a.comparator.as_deref())?;
    let (scores, labels) = table.column(&name);
    let summary = summarize(&scores, &labels, a.far)?;
    if let Some(det) = &a.det {
        let points = det_points(&roc(&scores, &labels)?);
        write_atomic(det, |w| write_det_csv(&points, w))?;
    }
    println!("comparator: {name}");
    println!("{summary}");
    Ok(())
}

fn parse_criterion(s: &str) -> Result<f64> {
    let far = s
        .strip_prefix("frr@far=")
        .ok_or_else(|| Error::invalid(format!("unknown criterion {s:?}; expected frr@far=<rate>")))?;
    far.parse()
        .map_err(|_| Error::invalid(format!("bad FAR in criterion {s:?}")))
}

fn search(a: &SearchArgs) -> Result<()> {
    let far = parse_criterion(&a.criterion)?;
    let train = ScoreTable::read_path(&a.train)?;
    let eval = ScoreTable::read_path(&a.eval)?;
    let outcome = subset_search(&train, &eval, a.fusion.method, &a.fusion.options()?, far)?;
    for (key, why) in &outcome.skipped {
        log::warn!("skipped {key}: {why}");
    }
    write_atomic(&a.out, |w| outcome.write_csv(a.top, w))
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let separations = match a.separation.len() {
        1 => vec![a.separation[0]; a.comparators],
        n if n == a.comparators => a.separation.clone(),
        n => {
            return Err(Error::invalid(format!(
                "{n} separations given for {} comparators",
                a.comparators
            )))
        }
    };
    let table = synth(&SynthSpec {
        targets: a.targets,
        nontargets: a.nontargets,
        separations,
        correlation: a.correlation,
        seed: a.seed,
    })?;
    write_atomic(&a.out, |w| table.write_csv(w))
}

fn split(a: &SplitArgs) -> Result<()> {
    let samples = read_manifest(&a.manifest)?;
    let folds = split_subjects(&samples, a.folds, a.seed)?;
    let staging = Staging::new(&a.out)?;
    let mut names = Vec::new();
    for (k, fold) in folds.iter().enumerate() {
        for (part, subjects) in [("train", &fold.train), ("test", &fold.test)] {
            let name = format!("fold{}_{part}.csv", k + 1);
            let mut buf = Vec::new();
            write_manifest(&restrict_to_subjects(&samples, subjects), &mut buf)?;
            write_bytes(&staging.path(&name), &buf)?;
            names.push(name);
        }
    }
    staging.commit(names)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Extract(a) => extract(a),
        Command::Trials(a) => trials(a),
        Command::Score(a) => score(a),
        Command::Fuse(FuseCommand::Train(a)) => fuse_train(a),
        Command::Fuse(FuseCommand::Apply(a)) => fuse_apply(a),
        Command::Eval(a) => eval(a),
        Command::Search(a) => search(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Split(a) => split(a),
    }
}

/// Collapses an error message onto one line.
fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let message = text.split("Usage:").next().unwrap_or_default();
            let message = message.split("For more information").next().unwrap_or_default();
            eprintln!("error: E_USAGE: {}", one_line(message.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

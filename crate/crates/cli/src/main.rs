use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use vadsim_core::adapt::adapt_dataset;
use vadsim_core::config::RunConfig;
use vadsim_core::detect::{train_detector, Detector, Mode};
use vadsim_core::eval::{evaluate, experiment_matrix, Fusion, ViewSelect};
use vadsim_core::scenegen::generate_dataset;
use vadsim_core::store::{dataset_stats, Manifest, SplitStats};
use vadsim_core::{Dataset, Error, ErrorCategory, Result, Split};

const THREADS_ENV: &str = "VADSIM_THREADS";
const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Parser)]
#[command(name = "vadsim", version, about = "Synthetic-to-real video anomaly detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target dataset pair.
    Generate(GenerateArgs),
    /// Align source TRAIN features to the target class by class.
    Adapt(AdaptArgs),
    /// Train a snippet scorer on the TRAIN split of one or more datasets.
    Train(TrainArgs),
    /// Frame-level ROC-AUC of a detector on a TEST split.
    Eval(EvalArgs),
    /// Frame and duration statistics of a dataset.
    Stats(StatsArgs),
    /// Run the full setting matrix over several seeds.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lambda_gp: Option<f64>,
    /// Use the discriminator loss with the reversed orientation.
    #[arg(long)]
    paper_sign: bool,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest(s) whose TRAIN records are used; may be repeated.
    #[arg(long = "features", required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Checkpoint path; the curve goes next to it as `<stem>.curve.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    detector: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    per_category: bool,
    /// 0, 1 or fused.
    #[arg(long)]
    view: Option<ViewSelect>,
    /// max or mean.
    #[arg(long)]
    fusion: Option<Fusion>,
    #[arg(long)]
    concatenate_views: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for eval.json and the provenance record.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for stats.csv and the provenance record.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    shift: Option<PathBuf>,
    #[arg(long)]
    oracle: bool,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match setup_threads().and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vadsim: {e}");
            match e.category() {
                ErrorCategory::Validation => ExitCode::from(3),
                ErrorCategory::Runtime => ExitCode::from(1),
            }
        }
    }
}

fn setup_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::validation(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Adapt(a) => adapt(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => stats(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
        cfg.generation.seed = s;
    }
    cfg.generation.validate()?;
    let ds = generate_dataset(&cfg.generation, &a.out)?;
    for (domain, m) in [("source", &ds.source), ("target", &ds.target)] {
        if let Some(m) = m {
            let s = dataset_stats(m)?;
            println!(
                "{domain}: {} videos, {} frames, {} abnormal",
                s.total.videos,
                thousands(s.total.total_frames),
                thousands(s.total.abnormal_frames)
            );
        }
    }
    let mut inputs = Vec::new();
    if let Some(p) = &a.config {
        inputs.push(file_input(p)?);
    }
    write_provenance(&a.out.join(PROVENANCE_FILE), "generate", cfg.generation.seed, &cfg, inputs)
}

fn adapt(a: AdaptArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(l) = a.lambda_gp {
        cfg.adaptation.lambda_gp = l;
    }
    if a.paper_sign {
        cfg.adaptation.paper_sign = true;
    }
    if let Some(n) = a.iterations {
        cfg.adaptation.iterations = n;
    }
    let seed = a.seed.unwrap_or(cfg.seed());
    cfg.adaptation.validate()?;
    cfg.experiment.class_map.validate()?;
    for input in [&a.source, &a.target] {
        guard_output(&a.out, input)?;
    }
    let source = Dataset::open(&a.source)?;
    let target = Dataset::open(&a.target)?;
    let adapted = adapt_dataset(&source, &target, &cfg.experiment.class_map, &cfg.adaptation, seed, &a.out)?;
    for c in &adapted.classes {
        println!(
            "{} -> {}: class-mean squared distance {:.4} -> {:.4}",
            c.source_class, c.target_class, c.initial_mean_sq_distance, c.final_mean_sq_distance
        );
    }
    println!("wrote {}", adapted.manifest_path.display());
    let inputs = vec![manifest_input(&a.source)?, manifest_input(&a.target)?];
    write_provenance(&a.out.join(PROVENANCE_FILE), "adapt", seed, &cfg, inputs)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = a.mode {
        cfg.detector.mode = m;
    }
    let seed = a.seed.unwrap_or(cfg.seed());
    cfg.detector.validate()?;
    let mut videos = Vec::new();
    let mut inputs = Vec::new();
    for m in &a.features {
        videos.extend(Dataset::open(m)?.load_split(Split::Train)?);
        inputs.push(manifest_input(m)?);
    }
    let (detector, curve) = train_detector(&videos, &cfg.detector, seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    detector.save(&a.out)?;
    let curve_path = sibling(&a.out, "curve.csv");
    fs::write(&curve_path, curve.to_csv()).map_err(|e| Error::io(&curve_path, e))?;
    println!("trained on {} videos; wrote {}", videos.len(), a.out.display());
    write_provenance(&sibling(&a.out, PROVENANCE_FILE), "train", seed, &cfg, inputs)
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.view {
        cfg.evaluation.view = v;
    }
    if let Some(f) = a.fusion {
        cfg.evaluation.fusion = f;
    }
    if a.concatenate_views {
        cfg.evaluation.concatenate_views = true;
    }
    let detector = Detector::load(&a.detector)?;
    let test = Dataset::open(&a.test)?;
    let report = evaluate(&detector, &test, &cfg.evaluation)?;
    let s = &report.mean;
    println!("auc {:.4}", s.overall);
    println!("view0 {:.4}", s.per_view[0]);
    println!("view1 {:.4}", s.per_view[1]);
    println!("single_view {:.4}", s.single_view);
    if a.per_category {
        for (class, auc) in &s.per_category {
            println!("{class} {auc:.4}");
        }
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let path = a.out.join("eval.json");
    let body = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    let inputs = vec![file_input(&a.detector)?, manifest_input(&a.test)?];
    write_provenance(&a.out.join(PROVENANCE_FILE), "eval", detector.provenance.seed, &cfg, inputs)
}

fn stats(a: StatsArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let s = dataset_stats(&manifest)?;
    let mut csv = Vec::new();
    s.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    print_totals(&s.total);
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let path = a.out.join("stats.csv");
    fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    let inputs = vec![manifest_input(&a.manifest)?];
    write_provenance(&a.out.join(PROVENANCE_FILE), "stats", 0, &Value::Null, inputs)
}

fn print_totals(s: &SplitStats) {
    println!("videos {}", s.videos);
    println!("total_frames {}", thousands(s.total_frames));
    println!("abnormal_frames {}", thousands(s.abnormal_frames));
    println!("normal_frames {}", thousands(s.normal_frames));
    println!("abnormal_minutes {:.2}", s.abnormal_minutes);
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    let ex = &mut cfg.experiment;
    if a.source.is_some() {
        ex.source_manifest = a.source.clone();
    }
    if a.target.is_some() {
        ex.target_manifest = a.target.clone();
    }
    if a.shift.is_some() {
        ex.shift = a.shift.clone();
    }
    if a.oracle {
        ex.oracle = true;
    }
    if let Some(s) = &a.seeds {
        ex.seeds = s.clone();
    }
    cfg.validate()?;
    let ec = cfg.experiment_config();
    ec.validate()?;
    for input in [&ec.source_manifest, &ec.target_manifest].into_iter().flatten() {
        guard_output(&a.out, input)?;
    }
    let report = experiment_matrix(&ec)?;
    report.write(&a.out)?;
    print!("{}", report.summary_table());
    let mut inputs = vec![file_input(&a.config)?];
    for p in [&ec.source_manifest, &ec.target_manifest].into_iter().flatten() {
        inputs.push(manifest_input(p)?);
    }
    if let Some(p) = &ec.shift {
        inputs.push(file_input(p)?);
    }
    let seed = ec.seeds.first().copied().unwrap_or(0);
    write_provenance(&a.out.join(PROVENANCE_FILE), "experiment", seed, &cfg, inputs)
}

/// Refuses to write into the directory that holds an input manifest.
fn guard_output(out: &Path, input_manifest: &Path) -> Result<()> {
    let input_dir = input_manifest.parent().unwrap_or(Path::new("."));
    let same = match (fs::canonicalize(out), fs::canonicalize(input_dir)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(Error::validation(format!(
            "output directory {} holds input {}",
            out.display(),
            input_manifest.display()
        )));
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn file_input(path: &Path) -> Result<Value> {
    Ok(json!({ "path": path.display().to_string(), "sha256": sha256_file(path)? }))
}

fn manifest_input(path: &Path) -> Result<Value> {
    let m = Manifest::load(path)?;
    Ok(json!({
        "path": path.display().to_string(),
        "sha256": sha256_file(path)?,
        "manifest_version": m.version,
        "records": m.records.len(),
    }))
}

fn write_provenance<C: serde::Serialize>(path: &Path, command: &str, seed: u64, config: &C, inputs: Vec<Value>) -> Result<()> {
    let record = json!({
        "command": command,
        "vadsim_version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "threads": rayon::current_num_threads(),
        "config": serde_json::to_value(config).map_err(|e| Error::Internal(e.to_string()))?,
        "inputs": inputs,
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let body = serde_json::to_string_pretty(&record).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

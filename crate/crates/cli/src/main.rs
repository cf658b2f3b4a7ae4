//! `elpv`: train, evaluate and apply the EL cell defect classifier.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elpv_core::dataset::{class_weights, save_split_manifest, stratified_split, to_labeled, LabeledSample, SplitSpec};
use elpv_core::eval::{write_learning_curve_csv, Group};
use elpv_core::pipeline::{
    boxplot_svg, learning_curve, load_stored_metrics, metrics_csv, read_learning_curve_csv, read_roc_csv,
    roc_svg, run_grid_sweep, run_predict, run_train_with, summarize_curve, write_sweep_csv, Classifier,
    Dataset, PipelineConfig, RunArtifact, RunOptions, CURVE_METRICS,
};
use elpv_core::{Error, Result};

#[derive(Parser)]
#[command(name = "elpv", version, about = "Defect classification of EL solar cell images")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the stratified train/test split of a dataset.
    Split(SplitArgs),
    /// Run the full pipeline and store the run directory.
    Train(TrainArgs),
    /// Re-evaluate a stored run on its test split.
    Evaluate(EvaluateArgs),
    /// Score image files with a stored run.
    Predict(PredictArgs),
    /// Dense SIFT grid-size sweep with and without sample weighting.
    SweepGrid(SweepArgs),
    /// Training-set-size experiment with repeated subsampling.
    LearningCurve(CurveArgs),
    /// Render SVG figures from stored CSVs.
    #[command(subcommand)]
    Plot(PlotCommand),
    /// Write a synthetic EL cell dataset (labels.csv and PNGs).
    Synthesize(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2624)]
    cells: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 300)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Pipeline configuration: defaults, then `--config`, then flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML file of `key = value` pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// dense:<n>, corners:<threshold> or whole.
    #[arg(long)]
    sampling: Option<String>,
    /// sift or hog.
    #[arg(long)]
    descriptor: Option<String>,
    /// Codebook size.
    #[arg(long = "clusters", short = 'K')]
    k: Option<usize>,
    /// Number of codebooks.
    #[arg(long)]
    m: Option<usize>,
    /// Power-normalization exponent.
    #[arg(long)]
    rho: Option<f64>,
    /// linear or rbf.
    #[arg(long)]
    svm: Option<String>,
    /// Comma-separated C candidates.
    #[arg(long)]
    grid_c: Option<String>,
    /// Comma-separated gamma candidates (numbers or 1/S).
    #[arg(long)]
    grid_gamma: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// true or false.
    #[arg(long)]
    sample_weights: Option<bool>,
    /// Score CV folds with sample weights (true or false).
    #[arg(long)]
    weighted_selection: Option<bool>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed_split: Option<u64>,
    #[arg(long)]
    seed_codebook: Option<u64>,
    #[arg(long)]
    seed_cv: Option<u64>,
    /// Any other setting as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn toml_text(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items.iter().map(toml_text).collect::<Result<Vec<_>>>()?.join(","),
        _ => return Err(Error::invalid("config values must be strings, numbers, booleans or lists")),
    })
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
            for (k, v) in &table {
                cfg.set(k, &toml_text(v)?)?;
            }
        }
        let flags: [(&str, Option<String>); 15] = [
            ("sampling", self.sampling.clone()),
            ("descriptor", self.descriptor.clone()),
            ("K", self.k.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("svm", self.svm.clone()),
            ("grid_c", self.grid_c.clone()),
            ("grid_gamma", self.grid_gamma.clone()),
            ("folds", self.folds.map(|v| v.to_string())),
            ("use_sample_weights", self.sample_weights.map(|v| v.to_string())),
            ("weighted_selection", self.weighted_selection.map(|v| v.to_string())),
            ("test_fraction", self.test_fraction.map(|v| v.to_string())),
            ("seed_split", self.seed_split.map(|v| v.to_string())),
            ("seed_codebook", self.seed_codebook.map(|v| v.to_string())),
            ("seed_cv", self.seed_cv.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Dataset directory holding labels.csv.
    #[arg(long)]
    dataset: PathBuf,
    /// Split manifest to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Descriptor cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Write the recomputed metrics CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    run: PathBuf,
    /// Write `path,score,label,error` rows here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Grid sizes per side.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40,45,50,55,60,65,70,75")]
    n: Vec<usize>,
    /// Weighting settings to run: both, on or off.
    #[arg(long, default_value = "both")]
    weighting: String,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Learning-curve CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    fractions: Vec<f64>,
    /// Subsamples per fraction.
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Subcommand)]
enum PlotCommand {
    /// ROC curves of every group in a run directory.
    Roc {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Boxplots of one metric per fraction from a learning-curve CSV.
    Boxplot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "macro_f1")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_out(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn labeled(dataset: &Dataset) -> Vec<LabeledSample> {
    dataset.records.iter().cloned().map(to_labeled).collect()
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let dataset = Dataset::open(&a.dataset)?;
    let split = stratified_split(
        &labeled(&dataset),
        SplitSpec {
            test_fraction: cfg.test_fraction,
            seed: cfg.seeds.split,
        },
    )?;
    save_split_manifest(&a.out, &split)?;
    let w = class_weights(&split.train)?;
    println!("records {}", dataset.records.len());
    println!("train {}", split.train.len());
    println!("test {}", split.test.len());
    println!("class_weight functional {} (n = {})", w.functional, w.n_functional);
    println!("class_weight defective {} (n = {})", w.defective, w.n_defective);
    Ok(())
}

fn print_report(art: &RunArtifact) {
    for g in &art.report.groups {
        let auc = g.auc.map_or("-".to_string(), |a| format!("{:.4}", a));
        println!(
            "{:<9} n={:<5} accuracy={:.4} macro_f1={:.4} auc={auc}",
            g.group, g.n, g.accuracy, g.prf.macro_f1
        );
    }
    for w in &art.report.warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let dataset = Dataset::open(&a.dataset)?;
    let opts = RunOptions { cache_dir: a.cache_dir };
    eprintln!("training on {} records, config digest {}", dataset.records.len(), cfg.digest());
    let art = run_train_with(&cfg, &dataset.records, &dataset.source(), &opts)?;
    art.save(&a.out)?;
    print_report(&art);
    println!("run written to {}", a.out.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let dataset = Dataset::open(&a.dataset)?;
    let cache = a.cache_dir.as_deref().map(elpv_core::pipeline::FeatureCache::new).transpose()?;
    let art = RunArtifact::load(&a.run, &dataset.source(), cache.as_ref())?;
    let csv = metrics_csv(&art.report);
    emit(a.out.as_deref(), &csv)?;
    if csv != load_stored_metrics(&a.run)? {
        return Err(Error::data("re-evaluated metrics differ from the stored metrics.csv"));
    }
    eprintln!("metrics match the stored run");
    Ok(())
}

/// Returns whether every image was scored.
fn cmd_predict(a: PredictArgs) -> Result<bool> {
    let clf = Classifier::load(&a.run)?;
    let results = run_predict(&clf, &a.images);
    let mut out = String::from("path,score,label,error\n");
    let mut ok = true;
    for (path, r) in a.images.iter().zip(&results) {
        match r {
            Ok(p) => {
                let label = match p.label {
                    elpv_core::dataset::Label::Functional => "functional",
                    elpv_core::dataset::Label::Defective => "defective",
                };
                out.push_str(&format!("{},{},{label},\n", path.display(), p.score));
            }
            Err(e) => {
                ok = false;
                eprintln!("error: {}: {e}", path.display());
                out.push_str(&format!("{},,,\"{}\"\n", path.display(), e.to_string().replace('"', "'")));
            }
        }
    }
    emit(a.out.as_deref(), out.as_bytes())?;
    Ok(ok)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let weightings: Vec<bool> = match a.weighting.as_str() {
        "both" => vec![true, false],
        "on" => vec![true],
        "off" => vec![false],
        w => return Err(Error::invalid(format!("--weighting `{w}`: expected both, on or off"))),
    };
    let dataset = Dataset::open(&a.dataset)?;
    let opts = RunOptions { cache_dir: a.cache_dir };
    let cells = run_grid_sweep(&cfg, &a.n, &weightings, &dataset.records, &dataset.source(), &opts)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &cells).map_err(|e| Error::io(&a.out, e))?;
    write_out(&a.out, &buf)?;
    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
    for c in &cells {
        match &c.outcome {
            Ok(s) => println!("n={:<3} weighted={:<5} macro_f1={:.4}", c.n, c.weighted, s.macro_f1),
            Err(e) => eprintln!("n={} weighted={}: {e}", c.n, c.weighted),
        }
    }
    if failed > 0 {
        return Err(Error::data(format!("{failed} sweep cells failed; partial table written")));
    }
    Ok(())
}

fn cmd_curve(a: CurveArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let dataset = Dataset::open(&a.dataset)?;
    let split = stratified_split(
        &labeled(&dataset),
        SplitSpec {
            test_fraction: cfg.test_fraction,
            seed: cfg.seeds.split,
        },
    )?;
    let opts = RunOptions { cache_dir: a.cache_dir };
    let curve = learning_curve(&cfg, &split, &a.fractions, a.repeats, &dataset.source(), &opts)?;
    let mut buf = Vec::new();
    write_learning_curve_csv(&mut buf, &curve.points).map_err(|e| Error::io(&a.out, e))?;
    write_out(&a.out, &buf)?;
    println!("fraction,metric,median,q1,q3,min,max,outliers");
    for s in &curve.summary {
        let b = &s.stats;
        println!(
            "{},{},{},{},{},{},{},{}",
            s.fraction,
            s.metric,
            b.median,
            b.q1,
            b.q3,
            b.min,
            b.max,
            b.outliers.len()
        );
    }
    Ok(())
}

fn cmd_plot(c: PlotCommand) -> Result<()> {
    match c {
        PlotCommand::Roc { run, out } => {
            let mut curves = Vec::new();
            let metrics = String::from_utf8_lossy(&load_stored_metrics(&run)?).into_owned();
            for g in Group::ALL {
                let path = run.join(format!("roc_{g}.csv"));
                if !path.exists() {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let auc = metrics
                    .lines()
                    .find(|l| l.starts_with(&format!("{g},auc,")))
                    .and_then(|l| l.split(',').nth(2))
                    .and_then(|v| v.parse().ok());
                curves.push((g.to_string(), read_roc_csv(&text)?, auc));
            }
            if curves.is_empty() {
                return Err(Error::data(format!("{} holds no ROC CSVs", run.display())));
            }
            write_out(&out, roc_svg(&curves).as_bytes())
        }
        PlotCommand::Boxplot { input, metric, out } => {
            if !CURVE_METRICS.contains(&metric.as_str()) {
                return Err(Error::invalid(format!("metric `{metric}`: expected one of {CURVE_METRICS:?}")));
            }
            let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let points = read_learning_curve_csv(&text)?;
            let boxes = summarize_curve(&points)?
                .into_iter()
                .filter(|s| s.metric == metric)
                .map(|s| (format!("{}%", s.fraction * 100.0), s.stats))
                .collect::<Vec<_>>();
            if boxes.is_empty() {
                return Err(Error::data(format!("no `{metric}` values in {}", input.display())));
            }
            write_out(&out, boxplot_svg(&metric, &metric, &boxes).as_bytes())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Split(a) => cmd_split(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Predict(a) => return cmd_predict(a),
        Command::SweepGrid(a) => cmd_sweep(a)?,
        Command::LearningCurve(a) => cmd_curve(a)?,
        Command::Plot(c) => cmd_plot(c)?,
        Command::Synthesize(a) => {
            let spec = elpv_core::synthetic::SyntheticSpec {
                cells: a.cells,
                side: a.side,
                seed: a.seed,
            };
            let records = elpv_core::synthetic::write_synthetic_dataset(&a.out, spec)?;
            println!("{} cells written to {}", records.len(), a.out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // Some predictions failed; they were reported individually.
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

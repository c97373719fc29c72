//! `pipegen`: evolve, apply, evaluate and inspect image-restoration pipelines.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pipegen::dataset::{load_manifest, split, DatasetManifest};
use pipegen::dsl::{emit_code, parse_pipeline, run_pipeline_gray, run_pipeline_stages, Dialect, Genome};
use pipegen::evolution::{evolve_observed, EvolutionConfig};
use pipegen::fitness::{Evaluation, Evaluator, Sample, OBJECTIVE_NAMES};
use pipegen::io::{load_image, save_image};
use pipegen::report::{read_trial, summary, write_stats_csv, write_trial};
use pipegen::segment::segment;
use pipegen::synth::{write_corpus, SynthParams};

#[derive(Parser, Debug)]
#[command(name = "pipegen", version, about = "Evolve and run image-restoration pipelines for precipitate segmentation")]
struct Cli {
    /// Worker threads for evaluation; results do not depend on it.
    #[arg(long, global = true, env = "PIPEGEN_WORKERS")]
    workers: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one evolutionary trial and write trial.json, stats.csv and front pipelines.
    Evolve {
        /// Flat TOML file with evolution settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset manifest (JSON).
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter one image with a pipeline.
    Apply {
        pipeline: PathBuf,
        image: PathBuf,
        output: PathBuf,
        /// Also segment the result: write the mask here and a component CSV beside it.
        #[arg(long)]
        segment: Option<PathBuf>,
        /// Write the image after each non-identity block into this directory.
        #[arg(long)]
        stages: Option<PathBuf>,
    },
    /// Score a pipeline on a dataset split.
    Evaluate {
        pipeline: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitChoice::Eval)]
        split: SplitChoice,
        /// Trial config supplying the split and fitness settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's train fraction.
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Overrides the config's split seed.
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Segment an image with the fixed Otsu procedure.
    Segment {
        image: PathBuf,
        /// Mask output (PNG or PGM).
        #[arg(long)]
        mask: PathBuf,
        /// Component table output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with ground-truth masks and a manifest.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Flat TOML file with generator parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a trial and regenerate its stats CSV.
    Report {
        trial: PathBuf,
        /// Write the per-generation statistics here.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Also print the front in the MATLAB-like dialect.
        #[arg(long)]
        matlab: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Train,
    Eval,
    All,
}

/// Everything a trial needs besides the data: evolution settings plus the split.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct TrialConfig {
    #[serde(flatten)]
    evolution: EvolutionConfig,
    train_fraction: f64,
    split_seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            evolution: EvolutionConfig::default(),
            train_fraction: 0.75,
            split_seed: 0,
        }
    }
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Parses a flat TOML document, rejecting keys the target type does not know.
fn read_flat_toml<T>(path: &Path) -> anyhow::Result<T>
where
    T: Serialize + for<'de> Deserialize<'de> + Default,
{
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("malformed TOML in {}", path.display()))?;
    let known: BTreeSet<String> = match toml::Table::try_from(T::default()) {
        Ok(t) => t.keys().cloned().collect(),
        Err(e) => bail!("internal: cannot enumerate config keys: {e}"),
    };
    if let Some(k) = table.keys().find(|k| !known.contains(*k)) {
        bail!("{}: unknown key `{k}`", path.display());
    }
    table.try_into().with_context(|| format!("invalid value in {}", path.display()))
}

fn read_pipeline(path: &Path) -> anyhow::Result<Genome> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_pipeline(&text).with_context(|| format!("{}", path.display()))
}

fn thread_pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let n = workers.unwrap_or_else(default_workers);
    if n == 0 {
        bail!("worker count must be at least 1");
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cmd_evolve(config: Option<&Path>, manifest: &Path, out: &Path, workers: Option<usize>) -> CmdResult {
    let cfg: TrialConfig = match config {
        Some(p) => read_flat_toml(p).invalid()?,
        None => TrialConfig::default(),
    };
    cfg.evolution.validate().invalid()?;
    let workers = workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::Validation(anyhow!("worker count must be at least 1")));
    }
    let m = load_manifest(manifest).invalid()?;
    let (train, _) = split(&m, cfg.train_fraction, cfg.split_seed).invalid()?;
    log::info!("training on {} of {} images", train.len(), m.len());
    let result = evolve_observed(&cfg.evolution, &train, workers, |s| {
        log::debug!("generation {} done in {:.2} s", s.generation, s.stats.wall_seconds);
    })
    .runtime()?;
    let files = write_trial(&result, out).runtime()?;
    // keep the split with the trial so evaluate can reproduce it
    let echo = toml::to_string(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
    fs::write(out.join("config.toml"), echo).runtime()?;
    print!("{}", summary(&result));
    println!("wrote {} and {} pipelines", files.trial.display(), files.pipelines.len());
    Ok(())
}

fn cmd_apply(pipeline: &Path, image: &Path, output: &Path, seg: Option<&Path>, stages: Option<&Path>) -> CmdResult {
    let g = read_pipeline(pipeline).invalid()?;
    let img = load_image(image).invalid()?;
    let filtered = match stages {
        Some(dir) => {
            fs::create_dir_all(dir).runtime()?;
            let steps = run_pipeline_stages(&g, &img);
            for (i, (b, out)) in steps.iter().enumerate() {
                save_image(out, dir.join(format!("stage_{:02}_{}.png", i + 1, b.id().name()))).runtime()?;
            }
            steps.last().map(|s| s.1.clone()).unwrap_or(img)
        }
        None => run_pipeline_gray(&g, &img),
    };
    save_image(&filtered, output).runtime()?;
    if let Some(mask_path) = seg {
        let res = segment(&filtered);
        save_image(&res.mask_image(), mask_path).runtime()?;
        let csv_path = mask_path.with_extension("csv");
        res.save_csv(&csv_path).runtime()?;
        println!("{} precipitates, mask {}, table {}", res.count(), mask_path.display(), csv_path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    pipeline: String,
    split: &'a str,
    images: usize,
    objectives: [(&'static str, f64); 5],
    mean_xor_percent: f64,
}

fn select_split(m: &DatasetManifest, choice: SplitChoice, fraction: f64, seed: u64) -> anyhow::Result<Vec<Sample>> {
    Ok(match choice {
        SplitChoice::All => m.samples.clone(),
        SplitChoice::Train => split(m, fraction, seed)?.0,
        SplitChoice::Eval => split(m, fraction, seed)?.1,
    })
}

fn cmd_evaluate(
    pipeline: &Path,
    manifest: &Path,
    choice: SplitChoice,
    config: Option<&Path>,
    train_fraction: Option<f64>,
    split_seed: Option<u64>,
    workers: Option<usize>,
) -> CmdResult {
    let cfg: TrialConfig = match config {
        Some(p) => read_flat_toml(p).invalid()?,
        None => TrialConfig::default(),
    };
    let g = read_pipeline(pipeline).invalid()?;
    let m = load_manifest(manifest).invalid()?;
    let fraction = train_fraction.unwrap_or(cfg.train_fraction);
    let seed = split_seed.unwrap_or(cfg.split_seed);
    let samples = select_split(&m, choice, fraction, seed).invalid()?;
    let pool = thread_pool(workers).invalid()?;
    let evaluator = Evaluator::new(&samples, cfg.evolution.fitness()).invalid()?;
    let Evaluation { objectives, mean_xor } = pool.install(|| evaluator.evaluate(&g));

    let split_name = match choice {
        SplitChoice::Train => "train",
        SplitChoice::Eval => "eval",
        SplitChoice::All => "all",
    };
    println!("pipeline: {}", emit_code(&g, Dialect::Native));
    println!("split: {split_name} ({} images)", samples.len());
    for (name, v) in OBJECTIVE_NAMES.iter().zip(objectives.0) {
        println!("{name:>12}: {v:.6e}");
    }
    println!("mean XOR error: {:.4}%", 100.0 * mean_xor);
    let report = EvaluationReport {
        pipeline: emit_code(&g, Dialect::Native),
        split: split_name,
        images: samples.len(),
        objectives: std::array::from_fn(|i| (OBJECTIVE_NAMES[i], objectives.0[i])),
        mean_xor_percent: 100.0 * mean_xor,
    };
    println!("{}", serde_json::to_string(&report).runtime()?);
    Ok(())
}

fn cmd_segment(image: &Path, mask: &Path, csv: Option<&Path>) -> CmdResult {
    let img = load_image(image).invalid()?;
    let res = segment(&img);
    save_image(&res.mask_image(), mask).runtime()?;
    if let Some(p) = csv {
        res.save_csv(p).runtime()?;
    }
    println!("{} precipitates, {} px", res.count(), res.area());
    Ok(())
}

fn cmd_synth(count: usize, out: &Path, config: Option<&Path>, seed: Option<u64>) -> CmdResult {
    if count == 0 {
        return Err(Failure::Validation(anyhow!("--count must be at least 1")));
    }
    let mut params: SynthParams = match config {
        Some(p) => read_flat_toml(p).invalid()?,
        None => SynthParams::default(),
    };
    if let Some(s) = seed {
        params.seed = s;
    }
    params.validate().invalid()?;
    let manifest = write_corpus(&params, count, out).runtime()?;
    println!("wrote {count} images and {}", manifest.display());
    Ok(())
}

fn cmd_report(trial: &Path, stats: Option<&Path>, matlab: bool) -> CmdResult {
    let result = read_trial(trial).invalid()?;
    print!("{}", summary(&result));
    if matlab {
        for m in &result.front {
            let g = m.genome(result.config.max_length).invalid()?;
            println!("{}", emit_code(&g, Dialect::MatlabLike));
        }
    }
    if let Some(p) = stats {
        let f = fs::File::create(p).with_context(|| format!("cannot create {}", p.display())).runtime()?;
        write_stats_csv(&result.stats, std::io::BufWriter::new(f)).runtime()?;
    }
    Ok(())
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn run(cli: Cli) -> CmdResult {
    match &cli.command {
        Command::Evolve { config, manifest, out } => cmd_evolve(config.as_deref(), manifest, out, cli.workers),
        Command::Apply {
            pipeline,
            image,
            output,
            segment,
            stages,
        } => cmd_apply(pipeline, image, output, segment.as_deref(), stages.as_deref()),
        Command::Evaluate {
            pipeline,
            manifest,
            split,
            config,
            train_fraction,
            split_seed,
        } => cmd_evaluate(
            pipeline,
            manifest,
            *split,
            config.as_deref(),
            *train_fraction,
            *split_seed,
            cli.workers,
        ),
        Command::Segment { image, mask, csv } => cmd_segment(image, mask, csv.as_deref()),
        Command::Synth { count, out, config, seed } => cmd_synth(*count, out, config.as_deref(), *seed),
        Command::Report { trial, stats, matlab } => cmd_report(trial, stats.as_deref(), *matlab),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

//! `mixeddyn`: sampling, inference, training and classification with
//! mixed-state dynamic models.

mod repro;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mixeddyn::baselines::{exact_posterior, greedy_truncated_viterbi};
use mixeddyn::gestures::{self, BenchmarkConfig, ClassModel};
use mixeddyn::io::{self, BoundTrace, MethodReport, Report};
use mixeddyn::learning::{em_train, Diagnostic, TrainConfig, UpdateMask};
use mixeddyn::variational::{self, EStepOptions, Init};
use mixeddyn::model::{ModelParams, SequenceData};
use nalgebra::DVector;

const THREADS_VAR: &str = "MIXEDDYN_THREADS";

#[derive(Parser, Debug)]
#[command(name = "mixeddyn", version, about = "Mixed-state dynamic models: an HMM driving a linear dynamical system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every subcommand accepts.
#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Variational,
    Greedy,
    Exact,
}

/// Where the variational iteration starts.
#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Start {
    /// State means from a smoother driven by the prior-mean input.
    Prior,
    /// Zero log soft evidence: the first sweep sees the discrete prior alone.
    Flat,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw an observation sequence (with its discrete path) from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        length: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Posterior summaries of one sequence.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Variational)]
        method: Method,
        #[arg(long, default_value_t = variational::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = variational::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Starting point of the variational method.
        #[arg(long, value_enum, default_value_t = Start::Prior)]
        init: Start,
        #[command(flatten)]
        common: Common,
    },
    /// Variational EM over every sequence of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long, default_value_t = variational::DEFAULT_TOL)]
        e_tol: f64,
        #[arg(long)]
        em_tol: Option<f64>,
        #[arg(long)]
        max_em: Option<usize>,
        /// Comma-separated parameters to keep fixed: A,C,D,Q,R,Pi,pi0.
        #[arg(long, default_value = "")]
        freeze: String,
        #[command(flatten)]
        common: Common,
    },
    /// Labels every manifest sequence with the model of largest bound.
    Classify {
        /// Directory of `<class>.model` files.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic gesture benchmark: coupled models against the gradient baseline.
    BenchGestures {
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 0.01)]
        noise_sd: f64,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[command(flatten)]
        common: Common,
    },
    /// The three-step two-level example: trellis, greedy, exact and variational.
    #[command(name = "repro-sec4")]
    ReproSec4 {
        /// State-noise to measurement-noise ratio.
        #[arg(long, default_value_t = 0.0)]
        k: f64,
        /// Measurement variance; 1 when k = 0, 0.5 otherwise.
        #[arg(long = "R")]
        r: Option<f64>,
        /// Transition bias toward staying.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Sample { model, length, common } => {
            let params: ModelParams = io::load_model(&model)?;
            let (y, _) = mixeddyn::model::sample(&params, length, common.seed)?;
            emit(&common, &io::sequence_to_string(&y))
        }
        Command::Infer {
            model,
            sequence,
            method,
            tol,
            max_iter,
            init,
            common,
        } => {
            let params: ModelParams = io::load_model(&model)?;
            let y: SequenceData = io::load_sequence(&sequence)?;
            let init = match init {
                Start::Prior => Init::PriorInput,
                Start::Flat => Init::flat(y.len(), params.num_states()),
            };
            emit(&common, &infer(&params, &y, method, &init, EStepOptions { tol, max_iter })?)
        }
        Command::Train {
            manifest,
            init,
            e_tol,
            em_tol,
            max_em,
            freeze,
            common,
        } => {
            let defaults = TrainConfig::<f64>::default();
            let cfg = TrainConfig {
                e_tol,
                em_tol: em_tol.unwrap_or(defaults.em_tol),
                max_em_iter: max_em.unwrap_or(defaults.max_em_iter),
                update_mask: UpdateMask::freezing(&freeze)?,
                ..defaults
            };
            train(&manifest, &init, &cfg, &common)
        }
        Command::Classify {
            models,
            manifest,
            common,
        } => emit(&common, &classify(&models, &manifest)?),
        Command::BenchGestures {
            per_class,
            noise_sd,
            folds,
            common,
        } => bench_gestures(per_class, noise_sd, folds, &common),
        Command::ReproSec4 { k, r, eps, common } => {
            let r = r.unwrap_or_else(|| mixeddyn::baselines::TwoLevelScenario::default_r(k));
            emit(&common, &repro::report(k, r, eps)?)
        }
    }
}

/// Caps the worker pool at `MIXEDDYN_THREADS` (0 or unset: one per core).
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR} must be a non-negative integer, got `{raw}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => io::write_text(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn push_rows(out: &mut String, name: &str, rows: &[DVector<f64>]) {
    let _ = writeln!(out, "{name}");
    out.push_str(&io::rows_to_string(rows));
}

fn path_line(path: &[usize]) -> String {
    path.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn argmax(v: &DVector<f64>) -> usize {
    // Lower index on ties.
    (1..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

fn infer(
    params: &ModelParams,
    y: &SequenceData,
    method: Method,
    init: &Init<f64>,
    opts: EStepOptions<f64>,
) -> Result<String> {
    let mut out = String::new();
    match method {
        Method::Variational => {
            let (state, post) = variational::e_step(params, y, init, opts)?;
            let trace: Vec<String> = state.bound_trace.iter().map(|&b| io::format_scalar(b)).collect();
            let _ = writeln!(out, "method variational");
            let _ = writeln!(out, "iterations {}", state.iterations);
            let _ = writeln!(out, "converged {}", state.converged);
            let _ = writeln!(out, "bound {}", io::format_scalar(state.bound()));
            let _ = writeln!(out, "bound_trace {}", trace.join(" "));
            let path: Vec<usize> = post.s_mean.iter().map(argmax).collect();
            let _ = writeln!(out, "path {}", path_line(&path));
            push_rows(&mut out, "s_mean", &post.s_mean);
            push_rows(&mut out, "x_mean", &post.x_mean);
        }
        Method::Greedy => {
            let g = greedy_truncated_viterbi(params, y)?;
            let _ = writeln!(out, "method greedy");
            let _ = writeln!(out, "cost {}", io::format_scalar(g.total_cost));
            let _ = writeln!(out, "path {}", path_line(&g.path));
            push_rows(&mut out, "inputs", &g.inputs);
        }
        Method::Exact => {
            let ex = exact_posterior(params, y)?;
            let _ = writeln!(out, "method exact");
            let _ = writeln!(out, "paths {}", ex.paths.len());
            let _ = writeln!(out, "log_evidence {}", io::format_scalar(ex.log_evidence));
            let _ = writeln!(out, "path {}", path_line(&ex.map_path));
            push_rows(&mut out, "s_mean", &ex.s_mean);
            push_rows(&mut out, "x_mean", &ex.x_mean);
        }
    }
    Ok(out)
}

fn train(manifest: &Path, init: &Path, cfg: &TrainConfig<f64>, common: &Common) -> Result<()> {
    let init: ModelParams = io::load_model(init)?;
    let sequences: Vec<SequenceData> = io::load_manifest_sequences(manifest)?
        .into_iter()
        .map(|(_, y)| y)
        .collect();
    if sequences.is_empty() {
        bail!("manifest {} lists no sequences", manifest.display());
    }
    let fit = em_train(&sequences, &init, cfg)?;
    // Bound decreases are logged by the library as they happen; clipping is
    // routine with small floors and stays at debug level.
    for d in &fit.diagnostics {
        if let Diagnostic::UnvisitedState { parameter, state } = d {
            log::warn!("state {state} was never visited; `{parameter}` kept its previous value");
        }
    }
    let mut text = io::model_to_string(&fit.params);
    let _ = writeln!(text, "# converged {}", fit.converged);
    for (i, b) in fit.bound_history.iter().enumerate() {
        let _ = writeln!(text, "# bound {i} {}", io::format_scalar(*b));
    }
    emit(common, &text)?;
    if common.out.is_some() {
        for (i, b) in fit.bound_history.iter().enumerate() {
            println!("{i} {}", io::format_scalar(*b));
        }
    }
    Ok(())
}

fn load_class_models(dir: &Path) -> Result<Vec<ClassModel>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading model directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "model"));
    files.sort();
    if files.is_empty() {
        bail!("no `.model` files in {}", dir.display());
    }
    files
        .into_iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).context("model file name")?.to_string();
            Ok(ClassModel {
                name,
                params: io::load_model(&p)?,
            })
        })
        .collect()
}

fn classify(models_dir: &Path, manifest: &Path) -> Result<String> {
    let models = load_class_models(models_dir)?;
    let entries = io::load_manifest_sequences::<f64>(manifest)?;
    let cfg = TrainConfig::<f64>::default();
    let mut out = String::new();
    let names: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
    let _ = writeln!(out, "# file true predicted bounds: {}", names.join(" "));
    let mut errors = 0;
    for (entry, y) in &entries {
        let c = gestures::classify(&models, y, &cfg)?;
        let predicted = &models[c.predicted].name;
        if *predicted != entry.class_name {
            errors += 1;
        }
        let bounds: Vec<String> = c.bounds.iter().map(|&b| io::format_scalar(b)).collect();
        let _ = writeln!(out, "{} {} {} {}", entry.file, entry.class_name, predicted, bounds.join(" "));
    }
    let _ = writeln!(out, "# errors {errors} of {}", entries.len());
    Ok(out)
}

fn bench_gestures(per_class: usize, noise_sd: f64, folds: usize, common: &Common) -> Result<()> {
    let specs = gestures::default_specs();
    let cfg = BenchmarkConfig {
        per_class,
        noise_sd,
        folds,
        seed: common.seed,
        ..BenchmarkConfig::default()
    };
    let dataset = gestures::generate_dataset(&specs, per_class, noise_sd, folds, common.seed)?;
    let res = gestures::run_benchmark(&specs, &dataset, &cfg)?;
    let report = Report {
        class_names: dataset.class_names.clone(),
        methods: vec![
            MethodReport::from_cv("mixed", &res.mixed),
            MethodReport::from_cv("gradient", &res.gradient),
        ],
        bound_traces: res
            .bound_histories
            .iter()
            .enumerate()
            .map(|(i, (class, values))| BoundTrace {
                label: format!("em{i}"),
                class: *class,
                values: values.clone(),
            })
            .collect(),
    };
    let mut iters = res.mixed.iterations.clone();
    iters.sort_unstable();
    let mut summary = String::new();
    let _ = writeln!(summary, "{:<10} {}", "method", dataset.class_names.join(" "));
    for m in &report.methods {
        let per: Vec<String> = m.per_class_error.iter().map(|e| format!("{:.1}%", 100.0 * e)).collect();
        let _ = writeln!(
            summary,
            "{:<10} {}  overall {:.1}% (variance {:.2e})",
            m.name,
            per.join(" "),
            100.0 * m.overall_error,
            m.overall_variance
        );
    }
    if let Some(median) = iters.get(iters.len() / 2) {
        let _ = writeln!(summary, "median e-step iterations {median}");
    }
    match &common.out {
        Some(path) => {
            io::save_report(&report, path)?;
            print!("{summary}");
            Ok(())
        }
        None => {
            print!("{summary}");
            print!("{}", io::report_to_string(&report)?);
            Ok(())
        }
    }
}

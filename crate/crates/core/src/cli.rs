//! Command-line interface. Exit codes: 0 success, 1 runtime failure, 2 usage error.
//!
//! `--config <file>` reads `key=value` lines whose keys are long flag names
//! (`true`/`false` for switches); flags given on the command line win.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::ahc::StopRule;
use crate::dtvae::{self, Activation, DtvaeConfig};
use crate::error::{Error, Result};
use crate::eval::{acc, make_report, BenchReport};
use crate::pipeline::{self, PipelineResult};
use crate::plda::{load_plda, save_plda, train_plda, PldaModel};
use crate::synthdata::{generate_corpus, load_corpus, save_corpus, Corpus, GenConfig, NoiseFamily, UttsPerSpeaker};

#[derive(Debug, Parser)]
#[command(name = "spkclust", version, about = "Speaker clustering: PLDA/AHC baseline and DTVAE grouping")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Gen(GenArgs),
    /// Train a PLDA model on a labeled corpus.
    TrainPlda(TrainPldaArgs),
    /// Train a DTVAE on a corpus (labels unused).
    TrainDtvae(TrainDtvaeArgs),
    /// Cluster a corpus and write assignments plus a report.
    Cluster(ClusterArgs),
    /// Accuracy of an assignment file against corpus labels.
    Eval(EvalArgs),
    /// Baseline vs DTVAE open-K over a sweep of corpus sizes.
    Bench(BenchArgs),
}

fn parse_noise(s: &str) -> std::result::Result<NoiseFamily, String> {
    match s {
        "gaussian" => Ok(NoiseFamily::Gaussian),
        "laplace" => Ok(NoiseFamily::Laplace),
        _ => s
            .strip_prefix("student-t:")
            .and_then(|d| d.parse::<f64>().ok())
            .map(|dof| NoiseFamily::StudentT { dof })
            .ok_or_else(|| format!("unknown noise `{s}` (gaussian, laplace, student-t:<dof>)")),
    }
}

#[derive(Debug, Args)]
struct CorpusGenArgs {
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 5.0)]
    between_std: f64,
    #[arg(long, default_value_t = 1.0)]
    within_std: f64,
    /// gaussian, laplace or student-t:<dof>
    #[arg(long, default_value = "gaussian", value_parser = parse_noise)]
    noise: NoiseFamily,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    speakers: usize,
    #[arg(long)]
    utts: usize,
    #[command(flatten)]
    gen: CorpusGenArgs,
    /// Write speaker labels as `?`.
    #[arg(long)]
    unlabeled: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TrainPldaArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Args)]
struct DtvaeArgs {
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    latent: usize,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    #[arg(long, value_enum, default_value = "relu")]
    activation: ActivationArg,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 10.0)]
    class_init_gain: f64,
}

impl DtvaeArgs {
    fn config(&self, dim: usize, classes: usize, seed: u64) -> DtvaeConfig {
        DtvaeConfig {
            input_dim: dim,
            hidden_dim: self.hidden,
            latent_dim: self.latent,
            num_classes: classes,
            tau: self.tau,
            beta: self.beta,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed,
            activation: match self.activation {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::Tanh => Activation::Tanh,
            },
            class_init_gain: self.class_init_gain,
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Args)]
struct TrainDtvaeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of classes (groups).
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dtvae: DtvaeArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Baseline,
    DtvaeK,
    DtvaeOpen,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("stop").required(true).args(["k", "threshold"])))]
#[command(group(ArgGroup::new("plda_source").args(["plda", "plda_train"])))]
struct ClusterArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Fixed number of clusters (per group on the open path).
    #[arg(long)]
    k: Option<usize>,
    /// AHC distance threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Initial DTVAE groups for the open path.
    #[arg(long, default_value_t = 3)]
    groups: usize,
    /// Trained PLDA model file.
    #[arg(long)]
    plda: Option<PathBuf>,
    /// Labeled corpus to train the PLDA model on.
    #[arg(long)]
    plda_train: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    plda_iters: usize,
    /// Trained DTVAE model file; trained on the corpus when absent.
    #[arg(long)]
    dtvae: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    dtvae_args: DtvaeArgs,
    /// Skip the paired baseline run for DTVAE methods.
    #[arg(long)]
    no_baseline: bool,
    /// Write zero timings so reports are byte-reproducible.
    #[arg(long)]
    no_timings: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `utt_id,cluster` file.
    #[arg(long)]
    assignments: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("stop").args(["k", "threshold"])))]
struct BenchArgs {
    /// Comma-separated corpus sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    speakers: usize,
    #[command(flatten)]
    gen: CorpusGenArgs,
    #[arg(long)]
    k: Option<usize>,
    /// AHC threshold (default 0.5 when --k is absent).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long)]
    plda: Option<PathBuf>,
    /// Speakers in the generated PLDA training corpus.
    #[arg(long, default_value_t = 50)]
    plda_speakers: usize,
    #[arg(long, default_value_t = 20)]
    plda_utts: usize,
    #[arg(long, default_value_t = 20)]
    plda_iters: usize,
    #[command(flatten)]
    dtvae_args: DtvaeArgs,
    #[arg(long)]
    no_timings: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure categories mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `key=value` lines into `--key value` arguments.
fn config_args(path: &Path) -> std::result::Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), i + 1))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        match v {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Splices config-file arguments in front of the command-line flags.
fn expand_config(mut args: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let mut config = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a file path".into());
            }
            config = Some(PathBuf::from(args.remove(i + 1)));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
            args.remove(i);
        } else {
            i += 1;
        }
    }
    if let Some(path) = config {
        // Insert right after the subcommand name so later flags override.
        let extra = config_args(&path)?;
        let at = args.iter().skip(1).position(|a| !a.starts_with('-')).map_or(args.len(), |p| p + 2);
        args.splice(at..at, extra);
    }
    Ok(args)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::TrainPlda(a) => cmd_train_plda(a),
        Command::TrainDtvae(a) => cmd_train_dtvae(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_config(speakers: usize, utts: UttsPerSpeaker, g: &CorpusGenArgs) -> GenConfig {
    GenConfig {
        speakers,
        utterances: utts,
        dim: g.dim,
        between_std: g.between_std,
        within_std: g.within_std,
        noise: g.noise,
        seed: g.seed,
    }
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let corpus = generate_corpus(&gen_config(a.speakers, UttsPerSpeaker::Fixed(a.utts), &a.gen))?;
    let corpus = if a.unlabeled { corpus.unlabeled() } else { corpus };
    save_corpus(&corpus, &a.output)?;
    Ok(())
}

fn print_trace(trace: &[f64]) {
    let mut out = std::io::stdout().lock();
    for (i, loss) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{loss}", i + 1);
    }
}

fn cmd_train_plda(a: TrainPldaArgs) -> CmdResult {
    let corpus = load_corpus(&a.corpus)?;
    let trained = train_plda(&corpus, a.iters)?;
    print_trace(&trained.trace);
    save_plda(&trained.model, &a.output)?;
    Ok(())
}

fn cmd_train_dtvae(a: TrainDtvaeArgs) -> CmdResult {
    let corpus = load_corpus(&a.corpus)?;
    let config = a.dtvae.config(corpus.dim(), a.groups, a.seed);
    let trained = dtvae::train(&corpus, &config)?;
    print_trace(&trained.loss_trace);
    dtvae::save_dtvae(&trained.params, &a.output)?;
    Ok(())
}

fn load_plda_source(plda: &Option<PathBuf>, train: &Option<PathBuf>, iters: usize) -> Result<Option<PldaModel>> {
    if let Some(p) = plda {
        return Ok(Some(load_plda(p)?));
    }
    if let Some(p) = train {
        return Ok(Some(train_plda(&load_corpus(p)?, iters)?.model));
    }
    Ok(None)
}

fn assignments_csv(corpus: &Corpus, result: &PipelineResult) -> String {
    let mut out = String::from("utt_id,cluster\n");
    for (u, l) in corpus.utterances().iter().zip(result.assignment.labels()) {
        out.push_str(&format!("{},{l}\n", u.id));
    }
    out
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_cluster(a: ClusterArgs) -> CmdResult {
    let stop = match (a.k, a.threshold) {
        (Some(k), None) => StopRule::FixedK(k),
        (None, Some(t)) => StopRule::Threshold(t),
        _ => return Err(Failure::Usage("exactly one of --k and --threshold is required".into())),
    };
    if a.method == MethodArg::DtvaeK && a.k.is_none() {
        return Err(Failure::Usage("--method dtvae-k needs --k".into()));
    }
    if a.plda.is_none() && a.plda_train.is_none() && a.method != MethodArg::DtvaeK {
        return Err(Failure::Usage("baseline and dtvae-open need --plda or --plda-train".into()));
    }
    let plda = load_plda_source(&a.plda, &a.plda_train, a.plda_iters)?;
    let corpus = load_corpus(&a.corpus)?;
    let classes = match a.method {
        MethodArg::DtvaeK => a.k.unwrap_or(a.groups),
        _ => a.groups,
    };
    let config = a.dtvae_args.config(corpus.dim(), classes, a.seed);
    let pretrained = a.dtvae.as_ref().map(dtvae::load_dtvae).transpose()?;

    let result = match a.method {
        MethodArg::Baseline => pipeline::run_baseline(&corpus, plda.as_ref().unwrap(), stop)?,
        MethodArg::DtvaeK => match &pretrained {
            Some(p) => pipeline::run_dtvae_fixed_k_with(&corpus, p)?,
            None => pipeline::run_dtvae_fixed_k(&corpus, &config)?,
        },
        MethodArg::DtvaeOpen => {
            let plda = plda.as_ref().unwrap();
            match &pretrained {
                Some(p) => pipeline::run_dtvae_open_with(&corpus, p, plda, stop)?,
                None => pipeline::run_dtvae_open(&corpus, &config, plda, stop)?,
            }
        }
    };
    let report = match (&plda, a.method, a.no_baseline) {
        (_, MethodArg::Baseline, _) | (None, _, _) | (_, _, true) => make_report(&corpus, &[], &result)?,
        (Some(plda), _, false) => {
            let base = pipeline::run_baseline(&corpus, plda, stop)?;
            make_report(&corpus, std::slice::from_ref(&result), &base)?
        }
    };
    let report = if a.no_timings { report.without_timings() } else { report };
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("assignments.csv"), &assignments_csv(&corpus, &result))?;
    write_file(&a.out_dir.join("report.csv"), &report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

/// Reads `utt_id,cluster` lines and orders labels by corpus position.
fn read_assignments(path: &Path, corpus: &Corpus) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, usize> = corpus.utterances().iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let mut labels = vec![None; corpus.len()];
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.trim() == "utt_id,cluster" || line.trim().is_empty() {
            continue;
        }
        let (id, c) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `utt_id,cluster`"))?;
        let c: usize = c.trim().parse().map_err(|_| Error::parse(path, i + 1, "cluster is not an integer"))?;
        let &pos = index
            .get(id.trim())
            .ok_or_else(|| Error::parse(path, i + 1, format!("unknown utterance `{id}`")))?;
        if labels[pos].replace(c).is_some() {
            return Err(Error::parse(path, i + 1, format!("duplicate utterance `{id}`")));
        }
    }
    labels
        .into_iter()
        .zip(corpus.utterances())
        .map(|(l, u)| l.ok_or_else(|| Error::Invalid(format!("no cluster for utterance `{}`", u.id))))
        .collect()
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let corpus = load_corpus(&a.corpus)?;
    let truth = corpus
        .speaker_labels()
        .ok_or_else(|| Error::Invalid("corpus has unlabeled utterances".into()))?;
    let predicted = read_assignments(&a.assignments, &corpus)?;
    let value = acc(&truth, &predicted)?;
    let text = format!("acc\n{value}\n");
    print!("{text}");
    if let Some(out) = &a.output {
        write_file(out, &text)?;
    }
    Ok(())
}

/// Splits `n` utterances over `speakers` as evenly as possible.
fn balanced_sizes(n: usize, speakers: usize) -> Vec<usize> {
    (0..speakers).map(|s| n / speakers + usize::from(s < n % speakers)).collect()
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    if a.speakers == 0 || a.sizes.iter().any(|&n| n < a.speakers) {
        return Err(Failure::Usage("every size must be at least --speakers".into()));
    }
    let stop = match (a.k, a.threshold) {
        (Some(k), _) => StopRule::FixedK(k),
        (None, Some(t)) => StopRule::Threshold(t),
        (None, None) => StopRule::Threshold(0.5),
    };
    let plda = match &a.plda {
        Some(p) => load_plda(p)?,
        None => {
            let mut g = gen_config(a.plda_speakers, UttsPerSpeaker::Fixed(a.plda_utts), &a.gen);
            g.seed = a.gen.seed.wrapping_add(1_000_003);
            train_plda(&generate_corpus(&g)?, a.plda_iters)?.model
        }
    };
    let mut report = BenchReport::default();
    for (i, &n) in a.sizes.iter().enumerate() {
        let mut g = gen_config(a.speakers, UttsPerSpeaker::PerSpeaker(balanced_sizes(n, a.speakers)), &a.gen);
        g.seed = a.gen.seed.wrapping_add(i as u64);
        let corpus = generate_corpus(&g)?;
        let config = a.dtvae_args.config(corpus.dim(), a.groups, a.gen.seed);
        let base = pipeline::run_baseline(&corpus, &plda, stop)?;
        let open = pipeline::run_dtvae_open(&corpus, &config, &plda, stop)?;
        report.extend(make_report(&corpus, &[open], &base)?);
    }
    let report = if a.no_timings { report.without_timings() } else { report };
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("report.csv"), &report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

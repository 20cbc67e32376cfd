use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use nesy_rules::induction::{learn_ruleset, FoldParams, ListOrder};
use nesy_rules::inference::{evaluate, load_metrics, predict_table, write_metrics, write_predictions, Interpreter};
use nesy_rules::interchange::{load_bits, load_manifest, load_norms, write_table, Hyperparameters};
use nesy_rules::labeller::{label_ruleset, LabelParams};
use nesy_rules::pipeline::{load_ruleset, load_samples, report, run_pipeline, write_ruleset, RunConfig};
use nesy_rules::quantize::{binarize, compute_thresholds, filter_top_softmax, load_thresholds, write_thresholds};
use nesy_rules::ruleset::{apply_labels, stats, write_label_map};
use nesy_rules::{Error, Result};

#[derive(Parser)]
#[command(name = "nesy-rules", version, about = "Rule extraction from binarized CNN kernel activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold a norms table into a binarization table
    Quantize(QuantizeArgs),
    /// Learn a rule set from a binarization table
    Learn(LearnArgs),
    /// Name the kernel predicates of a rule set from feature maps and masks
    Label(LabelArgs),
    /// Classify every row of a binarization table
    Predict(PredictArgs),
    /// Print the justification tree for one image
    Justify(JustifyArgs),
    /// Accuracy and fidelity of a rule set on a binarization table
    Evaluate(EvaluateArgs),
    /// Run quantize, learn, label and evaluate in one go
    Run(RunArgs),
    /// Print the one-line results row for a rule set and its metrics
    Report(ReportArgs),
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    norms: PathBuf,
    #[arg(long, default_value_t = Hyperparameters::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = Hyperparameters::default().gamma)]
    gamma: f64,
    /// Apply these thresholds instead of computing them from `--norms`
    #[arg(long, conflicts_with = "thresholds_out")]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    thresholds_out: Option<PathBuf>,
    /// Keep only this fraction of highest-confidence rows per class in the output
    #[arg(long)]
    top_softmax: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    bits: PathBuf,
    #[arg(long, default_value_t = Hyperparameters::default().ratio)]
    ratio: f64,
    #[arg(long, default_value_t = Hyperparameters::default().tail)]
    tail: f64,
    #[arg(long, default_value_t = Hyperparameters::default().max_exception_depth)]
    max_exception_depth: usize,
    /// `sequential` (decision list learned front to back), `coverage`
    /// (per-class lists merged by coverage) or `class` (per-class blocks)
    #[arg(long, default_value = "sequential", value_parser = parse_order)]
    order: ListOrder,
    /// Alternative rule starts tried per class in sequential order; 0 is plain greedy
    #[arg(long, default_value_t = FoldParams::default().lookahead)]
    lookahead: usize,
    /// Learn from this fraction of highest-confidence rows per class
    #[arg(long)]
    top_softmax: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    ruleset: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = Hyperparameters::default().m)]
    m: usize,
    #[arg(long, default_value_t = Hyperparameters::default().margin)]
    margin: f64,
    #[arg(long, default_value_t = Hyperparameters::default().tau)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the relabelled rule set here
    #[arg(long)]
    labeled_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    ruleset: PathBuf,
    #[arg(long)]
    bits: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JustifyArgs {
    #[arg(long)]
    ruleset: PathBuf,
    #[arg(long)]
    bits: PathBuf,
    #[arg(long)]
    image: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ruleset: PathBuf,
    #[arg(long)]
    bits: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set ratio=5`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `--set out=DIR`)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    ruleset: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn parse_order(s: &str) -> std::result::Result<ListOrder, String> {
    ListOrder::parse(s).ok_or_else(|| format!("expected `sequential`, `coverage` or `class`, got `{s}`"))
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let norms = load_norms(&a.norms)?;
    let thresholds = match &a.thresholds {
        Some(p) => load_thresholds(p)?,
        None => compute_thresholds(&norms, a.alpha, a.gamma)?,
    };
    if let Some(p) = &a.thresholds_out {
        write_thresholds(&thresholds, p)?;
    }
    let mut bits = binarize(&norms, &thresholds)?;
    if let Some(f) = a.top_softmax {
        bits = filter_top_softmax(&bits, f)?;
    }
    write_table(&bits, &a.out)?;
    info!("wrote {} rows to {}", bits.n_rows(), a.out.display());
    Ok(())
}

fn learn(a: LearnArgs) -> Result<()> {
    let mut bits = load_bits(&a.bits)?;
    if let Some(f) = a.top_softmax {
        bits = filter_top_softmax(&bits, f)?;
    }
    let params = FoldParams {
        ratio: a.ratio,
        tail: a.tail,
        max_exception_depth: a.max_exception_depth,
        order: a.order,
        lookahead: a.lookahead,
    };
    let rs = learn_ruleset(&bits, &params)?;
    write_ruleset(&rs, &a.out)?;
    let s = stats(&rs);
    println!("rules {}  predicates {}  size {}", s.rule_count, s.unique_predicates, s.size);
    Ok(())
}

fn label(a: LabelArgs) -> Result<()> {
    let rs = load_ruleset(&a.ruleset)?;
    let manifest = load_manifest(&a.manifest)?;
    let params = LabelParams {
        m: a.m,
        margin: a.margin,
        tau: a.tau,
    };
    let labelling = label_ruleset(&rs, &load_samples(&manifest.kernels)?, &params)?;
    write_label_map(&labelling.labels, &a.out)?;
    if let Some(p) = &a.labeled_out {
        write_ruleset(&apply_labels(&rs, &labelling.labels)?, p)?;
    }
    for (k, label) in labelling.labels.entries() {
        println!("{k} {label}");
    }
    for k in &labelling.unlabelled {
        println!("{k} (no region, left unlabelled)");
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let rs = load_ruleset(&a.ruleset)?;
    let bits = load_bits(&a.bits)?;
    write_predictions(&predict_table(&rs, &bits)?, &a.out)
}

fn justify(a: JustifyArgs) -> Result<()> {
    let rs = load_ruleset(&a.ruleset)?;
    let bits = load_bits(&a.bits)?;
    let row = bits
        .row_of(&a.image)
        .ok_or_else(|| Error::MissingData(format!("image `{}` is not in {}", a.image, a.bits.display())))?;
    let vector = rs
        .kernel_universe()
        .iter()
        .map(|&k| {
            bits.column_of(k)
                .map(|c| bits.get(row, c))
                .ok_or_else(|| Error::Alignment(format!("table has no column for kernel {k}")))
        })
        .collect::<Result<Vec<bool>>>()?;
    let j = Interpreter::new(&rs)?.justify(&vector)?;
    print!("{}: {}", a.image, j.render(&rs));
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let rs = load_ruleset(&a.ruleset)?;
    let bits = load_bits(&a.bits)?;
    let metrics = evaluate(&rs, &bits)?;
    if let Some(p) = &a.out {
        write_metrics(&metrics, p)?;
    }
    for (k, v) in metrics.rows() {
        println!("{k} {v}");
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got `{o}`")))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(out) = a.out {
        config.out = Some(out);
    }
    let r = run_pipeline(&config)?;
    print!("{}", r.render());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let rs = load_ruleset(&a.ruleset)?;
    let metrics = a.metrics.as_deref().map(load_metrics).transpose()?;
    println!("{}", report(metrics.as_ref(), &stats(&rs)));
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Quantize(a) => quantize(a),
        Command::Learn(a) => learn(a),
        Command::Label(a) => label(a),
        Command::Predict(a) => predict(a),
        Command::Justify(a) => justify(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

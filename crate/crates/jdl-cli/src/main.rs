//! `jdl`: command-line surface over the trainable JPEG layer. Subcommands
//! cover dataset synthesis, table initialization, transfer-curve dumps,
//! gradient audits, training, evaluation, and adversarial attacks.
//!
//! Exit codes: 0 on success, 1 on validation failures (bad flags, bad
//! config, failed gradient audit), 2 on I/O or file-format errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jdl_core::gradcheck::{
    run_layer_suite, run_quantizer_suite, CheckStat, LayerSuiteConfig, QuantizerSuiteConfig,
};
use jdl_core::qtable::{init_magnitude, init_ones, init_sensitivity, MagnitudeInitOptions, QuantTables};
use jdl_core::quantizer::{quantize_grad, quantize_soft, quantize_uniform, QuantizerParams, QuantizerVariant};
use jdl_core::tensor::{load_dataset_dir, make_synthetic_frequency_dataset, save_dataset_dir};
use jdl_core::trainer::{
    adversarial_eval, evaluate, evaluate_baseline, train, train_baseline, Architecture,
    AttackMethod, ClassifierParams, EvalOptions, TableOptimizerKind, TrainConfig,
    write_metrics_csv,
};
use jdl_core::{Error, SubsamplingMode};

const TABLES_FILE: &str = "tables.json";
const MODEL_FILE: &str = "model.json";
const METRICS_FILE: &str = "metrics.csv";

#[derive(Parser, Debug)]
#[command(name = "jdl", version, about = "Differentiable JPEG layer tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic two-class frequency dataset.
    Synth(SynthArgs),
    /// Build quantization tables from a dataset.
    Init(InitArgs),
    /// Dump the quantizer transfer curve and its derivatives as CSV.
    Curve(CurveArgs),
    /// Audit the analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Train the classifier, optionally jointly with the tables.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
    /// Measure adversarial robustness of a trained model.
    Attack(AttackArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Images per class (two classes).
    #[arg(long, default_value_t = 32)]
    per_class: usize,
    /// Square image size; must be a multiple of 8.
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Magnitude,
    Sensitivity,
    Ones,
}

#[derive(Args, Debug)]
struct InitArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Dataset directory (magnitude and sensitivity strategies).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Classifier JSON (sensitivity strategy).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Bit-depth; the alphabet half-width defaults to 2^(b-1).
    #[arg(long, default_value_t = 8)]
    b: u32,
    /// Sharpness written into the alpha tables.
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    /// Use sqrt(2^b - 1) instead of sqrt(2^(b-1)) in the magnitude rule.
    #[arg(long, default_value_t = false)]
    alt_denominator: bool,
    /// Override the alphabet half-width.
    #[arg(long)]
    levels: Option<i64>,
    /// Tie sharpness to steps as alpha = hbar / q^2.
    #[arg(long)]
    hbar: Option<f64>,
    /// Output tables JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// Alphabet half-width.
    #[arg(long, default_value_t = 3)]
    levels: i64,
    /// Input range as lo:hi.
    #[arg(long, default_value = "-4:4", allow_hyphen_values = true)]
    range: String,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Use the windowed conditional PMF.
    #[arg(long, default_value_t = false)]
    masked: bool,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Random quantizer configurations to probe.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Alphabet half-widths to draw from, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3i64, 8, 128])]
    levels: Vec<i64>,
    /// Audit the windowed quantizer instead of the full alphabet.
    #[arg(long, default_value_t = false)]
    masked: bool,
    /// Random end-to-end layer configurations to probe.
    #[arg(long, default_value_t = 20)]
    layer_trials: usize,
    /// Skip the end-to-end layer audit.
    #[arg(long, default_value_t = false)]
    quantizer_only: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Soft,
    Uniform,
    Ste,
    Noise,
    Poly,
}

impl From<VariantArg> for QuantizerVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Soft => QuantizerVariant::Soft,
            VariantArg::Uniform => QuantizerVariant::Uniform,
            VariantArg::Ste => QuantizerVariant::StraightThrough,
            VariantArg::Noise => QuantizerVariant::AdditiveNoise,
            VariantArg::Poly => QuantizerVariant::PolynomialRounding,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SubsamplingArg {
    #[value(name = "444")]
    S444,
    #[value(name = "422")]
    S422,
    #[value(name = "420")]
    S420,
}

impl From<SubsamplingArg> for SubsamplingMode {
    fn from(v: SubsamplingArg) -> Self {
        match v {
            SubsamplingArg::S444 => SubsamplingMode::S444,
            SubsamplingArg::S422 => SubsamplingMode::S422,
            SubsamplingArg::S420 => SubsamplingMode::S420,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ArchArg {
    Linear,
    Mlp,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug)]
struct EvalFlags {
    #[arg(long, value_enum, default_value_t = VariantArg::Soft)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = SubsamplingArg::S444)]
    subsampling: SubsamplingArg,
    /// Use the windowed conditional PMF at inference time.
    #[arg(long, default_value_t = false)]
    masked: bool,
    /// Recompression rounds.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
}

impl EvalFlags {
    fn to_options(&self) -> EvalOptions {
        EvalOptions {
            variant: self.variant.into(),
            subsampling: self.subsampling.into(),
            masked: self.masked,
            rounds: self.rounds,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Validation dataset directory (defaults to the training set).
    #[arg(long)]
    val: Option<PathBuf>,
    /// Initial tables JSON; required unless --baseline.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Output directory for model.json, metrics.csv, and tables.json.
    #[arg(long)]
    out: PathBuf,
    /// Train the bare classifier without the JPEG layer.
    #[arg(long, default_value_t = false)]
    baseline: bool,
    #[arg(long, value_enum, default_value_t = ArchArg::Linear)]
    arch: ArchArg,
    /// Hidden width for --arch mlp.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.02)]
    model_lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    table_optimizer: OptimizerArg,
    /// Learning rate on the table entries; 0 freezes them.
    #[arg(long, default_value_t = 0.003)]
    table_lr: f64,
    /// Also train the sharpnesses (incompatible with --hbar).
    #[arg(long, default_value_t = false)]
    train_alpha: bool,
    /// Gradient-scaling constant tying alpha to q.
    #[arg(long)]
    hbar: Option<f64>,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset directory to score.
    #[arg(long)]
    data: PathBuf,
    /// Training output directory holding model.json (and tables.json).
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Fgsm,
    Pgd,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// Dataset directory to perturb.
    #[arg(long)]
    data: PathBuf,
    /// Training output directory holding model.json and tables.json.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Fgsm)]
    method: MethodArg,
    /// Attack budgets on the 0-255 pixel scale, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0, 4.0])]
    eps: Vec<f64>,
    /// Iterations (PGD; FGSM always takes one).
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalFlags,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version are "errors" to clap but successes to us;
            // anything else is a bad invocation.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_validation() { 1 } else { 2 })
        }
    }
}

/// Caps the global worker pool from `JDL_THREADS` (machine parallelism when
/// unset or unparsable).
fn configure_threads() {
    if let Ok(raw) = std::env::var("JDL_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Init(args) => cmd_init(args),
        Command::Curve(args) => cmd_curve(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Attack(args) => cmd_attack(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, Error> {
    let dataset = make_synthetic_frequency_dataset(args.per_class, args.size, args.seed)?;
    save_dataset_dir(&dataset, &args.out)?;
    println!("wrote {} images to {}", dataset.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_init(args: InitArgs) -> Result<ExitCode, Error> {
    let opts = MagnitudeInitOptions {
        b: args.b,
        alpha: args.alpha,
        alt_denominator: args.alt_denominator,
    };
    let load_data = |what: &str| -> Result<_, Error> {
        let dir = args.data.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("--data is required for the {what} strategy"))
        })?;
        load_dataset_dir(dir)
    };
    let mut tables = match args.strategy {
        StrategyArg::Ones => init_ones(args.b)?,
        StrategyArg::Magnitude => init_magnitude(&load_data("magnitude")?, &opts)?,
        StrategyArg::Sensitivity => {
            let model_path = args.model.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "--model is required for the sensitivity strategy".to_string(),
                )
            })?;
            let model = ClassifierParams::load_json(model_path)?;
            init_sensitivity(&model, &load_data("sensitivity")?, &opts)?
        }
    };
    if let Some(levels) = args.levels {
        tables.half_width = levels;
    }
    if let Some(hbar) = args.hbar {
        tables.apply_gradient_scaling(hbar)?;
    }
    tables.validate()?;
    tables.save_json(&args.out)?;
    println!("wrote tables to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_curve(args: CurveArgs) -> Result<ExitCode, Error> {
    let (lo, hi) = parse_range(&args.range)?;
    if args.step <= 0.0 || !args.step.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {}",
            args.step
        )));
    }
    let params = QuantizerParams::new(args.q, args.alpha, args.levels)?;
    let mut csv = String::from("z,q_u,q_d,dqd_dz,dqd_dq,dqd_dalpha\n");
    let points = ((hi - lo) / args.step).floor() as usize;
    for k in 0..=points {
        let z = lo + k as f64 * args.step;
        let hard = quantize_uniform(z, &params);
        let soft = quantize_soft(z, &params, args.masked);
        let grad = quantize_grad(z, &params, args.masked);
        csv.push_str(&format!(
            "{z},{hard},{soft},{},{},{}\n",
            grad.d_z, grad.d_q, grad.d_alpha
        ));
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            println!("wrote {} rows to {}", points + 1, path.display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// `lo:hi` with lo < hi.
fn parse_range(raw: &str) -> Result<(f64, f64), Error> {
    let invalid = || Error::InvalidArgument(format!("range must be lo:hi with lo < hi, got {raw}"));
    let (lo, hi) = raw.split_once(':').ok_or_else(invalid)?;
    let lo: f64 = lo.trim().parse().map_err(|_| invalid())?;
    let hi: f64 = hi.trim().parse().map_err(|_| invalid())?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(invalid());
    }
    Ok((lo, hi))
}

fn report_line(name: &str, stat: &CheckStat, tolerance: f64) -> bool {
    if stat.max_mismatch < tolerance {
        println!("{name} max_rel < {tolerance:e}: measured {:.3e}", stat.max_mismatch);
        true
    } else {
        println!(
            "{name} max_rel = {:.3e} exceeds {tolerance:e}; worst at {}",
            stat.max_mismatch, stat.worst
        );
        false
    }
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode, Error> {
    let cfg = QuantizerSuiteConfig {
        samples: args.samples,
        seed: args.seed,
        level_choices: args.levels.clone(),
        masked: args.masked,
        ..QuantizerSuiteConfig::default()
    };
    let report = run_quantizer_suite(&cfg)?;
    println!(
        "quantizer suite: {} samples, levels {:?}, {} support",
        report.samples,
        args.levels,
        if report.masked { "windowed" } else { "full" }
    );
    let mut ok = report_line("d_z", &report.d_z, report.tolerance);
    ok &= report_line("d_q", &report.d_q, report.tolerance);
    ok &= report_line("d_alpha", &report.d_alpha, report.tolerance);

    if !args.quantizer_only {
        let layer_cfg = LayerSuiteConfig {
            trials: args.layer_trials,
            seed: args.seed,
            ..LayerSuiteConfig::default()
        };
        let layer = run_layer_suite(&layer_cfg)?;
        println!("layer suite: {} trials", layer.trials);
        ok &= report_line("layer d_q", &layer.d_q, layer.tolerance);
        ok &= report_line("layer d_alpha", &layer.d_alpha, layer.tolerance);
        ok &= report_line("layer d_pixels", &layer.d_pixels, layer.tolerance);
    }

    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn build_train_config(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        model_lr: args.model_lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        table_optimizer: match args.table_optimizer {
            OptimizerArg::Adam => TableOptimizerKind::Adam { lr: args.table_lr },
            OptimizerArg::Sgd => TableOptimizerKind::Sgd { lr: args.table_lr },
        },
        train_alpha: args.train_alpha,
        hbar: args.hbar,
        variant: args.eval.variant.into(),
        subsampling: args.eval.subsampling.into(),
        masked: args.eval.masked,
        rounds: args.eval.rounds,
    }
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, Error> {
    let dataset = load_dataset_dir(&args.data)?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".to_string()));
    }
    let val = args.val.as_ref().map(|dir| load_dataset_dir(dir)).transpose()?;
    let arch = match args.arch {
        ArchArg::Linear => Architecture::Linear,
        ArchArg::Mlp => Architecture::OneHiddenRelu { hidden_dim: args.hidden },
    };
    let first = dataset.image(0);
    let input_dim = first.channels() * first.height() * first.width();
    let model = ClassifierParams::init(arch, input_dim, dataset.num_classes(), args.seed)?;
    let cfg = build_train_config(&args);

    std::fs::create_dir_all(&args.out)?;
    let metrics = if args.baseline {
        let outcome = train_baseline(&dataset, val.as_ref(), &model, &cfg)?;
        outcome.model.save_json(&args.out.join(MODEL_FILE))?;
        outcome.metrics
    } else {
        let tables_path = args.tables.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--tables is required unless --baseline".to_string())
        })?;
        let tables = QuantTables::load_json(tables_path)?;
        let outcome = train(&dataset, val.as_ref(), &tables, &model, &cfg)?;
        outcome.model.save_json(&args.out.join(MODEL_FILE))?;
        outcome.tables.save_json(&args.out.join(TABLES_FILE))?;
        outcome.metrics
    };
    write_metrics_csv(&metrics, &args.out.join(METRICS_FILE))?;
    if let Some(row) = metrics.last() {
        println!(
            "finished at step {}: loss {:.6}, train_acc {:.6}, val_acc {:.6}",
            row.step, row.loss, row.train_acc, row.val_acc
        );
    }
    println!("wrote run artifacts to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, Error> {
    let dataset = load_dataset_dir(&args.data)?;
    let model = ClassifierParams::load_json(&args.model.join(MODEL_FILE))?;
    let tables_path = args.model.join(TABLES_FILE);
    let report = if tables_path.exists() {
        let tables = QuantTables::load_json(&tables_path)?;
        evaluate(&dataset, &tables, &model, &args.eval.to_options())?
    } else {
        evaluate_baseline(&dataset, &model)?
    };
    println!("accuracy {:.6}", report.accuracy);
    println!("mean_loss {:.6}", report.mean_loss);
    Ok(ExitCode::SUCCESS)
}

fn cmd_attack(args: AttackArgs) -> Result<ExitCode, Error> {
    let dataset = load_dataset_dir(&args.data)?;
    let model = ClassifierParams::load_json(&args.model.join(MODEL_FILE))?;
    let tables = QuantTables::load_json(&args.model.join(TABLES_FILE))?;
    let method = match args.method {
        MethodArg::Fgsm => AttackMethod::Fgsm,
        MethodArg::Pgd => AttackMethod::Pgd,
    };
    let points = adversarial_eval(
        &dataset,
        &tables,
        &model,
        method,
        args.steps,
        &args.eps,
        &args.eval.to_options(),
    )?;
    let mut csv = String::from("epsilon,accuracy\n");
    for p in &points {
        csv.push_str(&format!("{},{:.6}\n", p.epsilon, p.accuracy));
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            println!("wrote {} budgets to {}", points.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

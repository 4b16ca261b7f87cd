use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use syndiff::data::{generate_toy_dataset, load_image, load_pools, save_image, write_dataset, EvalSet, GrayImage};
use syndiff::metrics::MetricReport;
use syndiff::random::seeded;
use syndiff::train::{load_checkpoint, translate, Direction, TrainConfig, Trainer};
use syndiff::{ExponentForm, FastSchedule};

/// Unpaired two-modality image translation with a fast adversarial
/// diffusion model.
#[derive(Parser)]
#[command(name = "syndiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-modality dataset
    Synthdata(SynthArgs),
    /// Train all networks on trainA/ and trainB/
    Train(TrainArgs),
    /// Translate one image with a trained checkpoint
    Translate(TranslateArgs),
    /// Translate every eval pair and write PSNR/SSIM as TSV
    Eval(EvalArgs),
    /// Print the noise schedule as TSV
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training images per modality
    #[arg(long, default_value_t = 64)]
    n_train: usize,
    /// Paired evaluation images
    #[arg(long, default_value_t = 16)]
    n_eval: usize,
    /// Image side in pixels (power of two >= 16)
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory containing trainA/ and trainB/
    #[arg(long)]
    data: PathBuf,
    /// JSON file with TrainConfig keys; flags override it [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Loss log path [default: <out>.loss.tsv]
    #[arg(long)]
    log: Option<PathBuf>,
    /// Training epochs [default: 50]
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate [default: 0.0001]
    #[arg(long)]
    lr: Option<f64>,
    /// Adam first-moment decay [default: 0.5]
    #[arg(long)]
    adam_beta1: Option<f64>,
    /// Adam second-moment decay [default: 0.9]
    #[arg(long)]
    adam_beta2: Option<f64>,
    /// Images per modality per iteration [default: 2]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Total diffusion steps [default: 1000]
    #[arg(long = "T")]
    total_steps: Option<usize>,
    /// Diffusion step size, must divide T [default: 250]
    #[arg(long = "k")]
    step: Option<usize>,
    /// Lower schedule bound [default: 0.1]
    #[arg(long)]
    beta_min: Option<f64>,
    /// Upper schedule bound [default: 20]
    #[arg(long)]
    beta_max: Option<f64>,
    /// Cycle-consistency weight [default: 0.5]
    #[arg(long)]
    lambda_cyc: Option<f64>,
    /// Gradient-penalty weight [default: 0.5]
    #[arg(long)]
    gp_weight: Option<f64>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Intermediate checkpoint every N epochs, 0 for none [default: 0]
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Exponent form: printed or variance_preserving [default: printed]
    #[arg(long)]
    schedule_form: Option<String>,
    /// Training image side in pixels [default: 32]
    #[arg(long)]
    image_size: Option<usize>,
    /// Generator width at the top level [default: 32]
    #[arg(long)]
    base_channels: Option<usize>,
    /// Generator downsampling levels [default: 3]
    #[arg(long)]
    levels: Option<usize>,
    /// Sinusoidal time-encoding width [default: 32]
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Time-embedding hidden width [default: 128]
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Discriminator width [default: 16]
    #[arg(long)]
    disc_channels: Option<usize>,
    /// One-shot translator width [default: 16]
    #[arg(long)]
    resnet_channels: Option<usize>,
}

#[derive(Args)]
struct TranslateArgs {
    /// Trained checkpoint
    #[arg(long)]
    ckpt: PathBuf,
    /// Source image (.pgm or .f32)
    #[arg(long)]
    input: PathBuf,
    /// A2B or B2A
    #[arg(long, default_value = "A2B")]
    direction: String,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output image (.pgm or .f32)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory containing evalA/ and evalB/
    #[arg(long)]
    data: PathBuf,
    /// A2B or B2A
    #[arg(long, default_value = "A2B")]
    direction: String,
    /// Sampling seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output TSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Total diffusion steps
    #[arg(long = "T", default_value_t = 1000)]
    total_steps: usize,
    /// Step size, must divide T
    #[arg(long = "k", default_value_t = 250)]
    step: usize,
    /// Lower schedule bound
    #[arg(long, default_value_t = 0.1)]
    beta_min: f64,
    /// Upper schedule bound
    #[arg(long, default_value_t = 20.0)]
    beta_max: f64,
    /// Exponent form: printed or variance_preserving
    #[arg(long, default_value = "printed")]
    form: String,
}

/// Marks errors caused by bad user input (exit code 2).
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl std::fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

/// Maps library validation failures to [`Invalid`].
fn classify(e: syndiff::Error) -> anyhow::Error {
    match e {
        syndiff::Error::Schedule(_) | syndiff::Error::Config(_) => invalid(e),
        other => other.into(),
    }
}

fn parse_direction(s: &str) -> Result<Direction> {
    s.parse().map_err(classify)
}

fn synthdata(a: SynthArgs) -> Result<()> {
    let data = generate_toy_dataset(a.seed, a.n_train, a.n_eval, a.size).map_err(invalid)?;
    write_dataset(&a.out, &data)?;
    eprintln!(
        "seed {}: wrote {} train images per modality and {} eval pairs to {}",
        a.seed,
        a.n_train,
        a.n_eval,
        a.out.display()
    );
    Ok(())
}

fn effective_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = a.$field { c.$field = v; })*
        };
    }
    apply!(
        epochs, lr, adam_beta1, adam_beta2, batch_size, total_steps, step, beta_min, beta_max, lambda_cyc, gp_weight,
        seed, checkpoint_every, image_size, base_channels, levels, embed_dim, hidden_dim, disc_channels, resnet_channels
    );
    if let Some(form) = &a.schedule_form {
        c.schedule_form = parse_form(form)?;
    }
    Ok(c)
}

fn train(a: TrainArgs) -> Result<()> {
    let config = effective_config(&a)?;
    let mut trainer = Trainer::new(config.clone()).map_err(classify)?;
    eprintln!("effective config: {}", serde_json::to_string(&config)?);
    eprintln!(
        "seed {}; T={} k={} ({} reverse steps)",
        config.seed,
        config.total_steps,
        config.step,
        trainer.schedule.num_steps()
    );
    let pools = load_pools(&a.data)?;
    pools.validate(config.image_size).map_err(invalid)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.tsv");
        PathBuf::from(p)
    });
    let file = File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut log = BufWriter::new(file);
    let history = trainer.train(&pools, &a.out, &mut log)?;
    log.flush()?;
    if let Some(last) = history.last() {
        eprintln!("final losses: {}", last.tsv_row(config.epochs, history.len() - 1));
    }
    eprintln!("checkpoint {}; loss log {}", a.out.display(), log_path.display());
    Ok(())
}

fn run_translation(ckpt: &Path, sources: &[&GrayImage], direction: Direction, seed: u64) -> Result<(Vec<GrayImage>, usize)> {
    let (header, nets) = load_checkpoint(ckpt)?;
    let schedule = header.schedule()?;
    let mut rng = seeded(seed);
    let out = translate(&nets, &schedule, sources, direction, &mut rng)?;
    Ok((out.images, out.generator_calls))
}

fn translate_cmd(a: TranslateArgs) -> Result<()> {
    let direction = parse_direction(&a.direction)?;
    let input = load_image(&a.input)?;
    let (images, calls) = run_translation(&a.ckpt, &[&input], direction, a.seed)?;
    save_image(&a.out, &images[0])?;
    eprintln!("seed {}", a.seed);
    println!("generator calls: {calls}");
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let direction = parse_direction(&a.direction)?;
    let set = EvalSet::load(&a.data)?;
    let (sources, targets): (Vec<&GrayImage>, Vec<&GrayImage>) = set
        .pairs
        .iter()
        .map(|p| match direction {
            Direction::A2B => (&p.a, &p.b),
            Direction::B2A => (&p.b, &p.a),
        })
        .unzip();
    let (outputs, _) = run_translation(&a.ckpt, &sources, direction, a.seed)?;
    let mut report = MetricReport::default();
    let mut baseline = MetricReport::default();
    for ((pair, target), (out, src)) in set.pairs.iter().zip(&targets).zip(outputs.iter().zip(&sources)) {
        report.push(&pair.pair_id, target, out)?;
        baseline.push(&pair.pair_id, target, src)?;
    }
    std::fs::write(&a.out, report.to_tsv()).with_context(|| format!("writing {}", a.out.display()))?;
    let (m, b) = (report.aggregate(), baseline.aggregate());
    eprintln!("seed {}", a.seed);
    println!(
        "translated: psnr {:.3} ± {:.3} dB, ssim {:.4} ± {:.4}",
        m.psnr_mean, m.psnr_std, m.ssim_mean, m.ssim_std
    );
    println!(
        "source baseline: psnr {:.3} ± {:.3} dB, ssim {:.4} ± {:.4}",
        b.psnr_mean, b.psnr_std, b.ssim_mean, b.ssim_std
    );
    Ok(())
}

fn parse_form(name: &str) -> Result<ExponentForm> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| invalid(format!("unknown form {name:?} (printed or variance_preserving)")))
}

fn schedule(a: ScheduleArgs) -> Result<()> {
    let form = parse_form(&a.form)?;
    let s = FastSchedule::with_form(a.total_steps, a.step, a.beta_min, a.beta_max, form).map_err(invalid)?;
    let mut out = String::from("t\tgamma\talpha\talpha_bar\n");
    for (t, g, al, ab) in s.table() {
        out.push_str(&format!("{t}\t{g:.10}\t{al:.10}\t{ab:.10}\n"));
    }
    print!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthdata(a) => synthdata(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Schedule(a) => schedule(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is::<Invalid>() { 2 } else { 1 };
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(code)
        }
    }
}

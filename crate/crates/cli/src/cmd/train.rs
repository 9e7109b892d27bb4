use std::io::Write;
use std::path::{Path, PathBuf};

use pcnic::net::{Codec, Trainer, STATE_FILE};
use pcnic::Tensor;

use super::write;
use crate::config::{lambda_dir, RunConfig, Variant};
use crate::data::{self, Split};
use crate::error::{CliError, Result};

pub const LOSS_LOG: &str = "loss.csv";
pub const STEP_LOG: &str = "steps.csv";
const LOSS_HEADER: &str = "epoch,steps,mean_loss,lr";
const STEP_HEADER: &str = "step,loss,bpp,mse,lr";

/// Trains one model per λ of the configuration.
#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Train only these λ values (repeatable).
    #[arg(long)]
    pub lambda: Vec<f64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from the checkpoint in each λ directory when present.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, value_enum, default_value_t = Variant::Full)]
    pub ablate: Variant,
}

/// Applies command-line overrides and the variant to a loaded config.
pub fn resolve(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if !args.lambda.is_empty() {
        cfg.train.lambdas = args.lambda.clone();
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if args.max_steps.is_some() {
        cfg.train.max_steps = args.max_steps;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    args.ablate.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    let samples: Vec<Tensor<f32>> = data::load(&cfg, Split::Train)?.into_iter().map(|s| s.data).collect();
    write(&cfg.output_dir.join(args.ablate.slug()).join("run_config.toml"), cfg.to_toml())?;
    for &lambda in &cfg.train.lambdas {
        let out = train_lambda(&cfg, args.ablate, lambda, &samples, args.resume)?;
        println!("{}: {} steps, final epoch loss {}", out.dir.display(), out.steps, out.final_loss.map_or("n/a".into(), |l| l.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub steps: u64,
    pub final_loss: Option<f64>,
}

/// Total optimizer steps the configuration asks for.
pub fn target_steps(cfg: &RunConfig, dataset_len: usize) -> u64 {
    let per_epoch = dataset_len.div_ceil(cfg.train.batch_size.min(dataset_len)) as u64;
    (cfg.train.epochs * per_epoch).min(cfg.train.max_steps.unwrap_or(u64::MAX))
}

/// True when `dir` holds a checkpoint that reached the step target.
pub fn is_complete(cfg: &RunConfig, dir: &Path, dataset_len: usize) -> bool {
    let Ok(text) = std::fs::read_to_string(dir.join(STATE_FILE)) else { return false };
    let Ok(state) = serde_json::from_str::<pcnic::net::TrainState>(&text) else { return false };
    state.step >= target_steps(cfg, dataset_len)
}

/// Keeps the header and the rows whose first column satisfies `keep`.
fn truncate_log(path: &Path, header: &str, keep: impl Fn(u64) -> bool) -> Result<()> {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let mut out = format!("{header}\n");
    for line in text.lines().skip(1) {
        match line.split(',').next().and_then(|k| k.parse::<u64>().ok()) {
            Some(k) if keep(k) => {
                out.push_str(line);
                out.push('\n');
            }
            _ => {}
        }
    }
    write(path, out)
}

fn open_append(path: &Path) -> Result<std::fs::File> {
    std::fs::OpenOptions::new().append(true).open(path).map_err(|e| CliError::data(e).context(path.display()))
}

pub fn train_lambda(cfg: &RunConfig, variant: Variant, lambda: f64, samples: &[Tensor<f32>], resume: bool) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(CliError::data(anyhow::anyhow!("no training samples")));
    }
    let dir = lambda_dir(&cfg.output_dir, variant, lambda);
    let codec_cfg = cfg.codec_config(lambda);
    let (loss_log, step_log) = (dir.join(LOSS_LOG), dir.join(STEP_LOG));
    let per_epoch = samples.len().div_ceil(cfg.train.batch_size.min(samples.len())) as u64;

    let mut trainer = if resume && dir.join(STATE_FILE).exists() {
        let t = Trainer::<f32>::resume(&dir, cfg.train_config())?;
        if t.model.config != codec_cfg {
            return Err(CliError::Usage(format!("checkpoint in {} was trained with a different model configuration", dir.display())));
        }
        log::info!("resuming {} at step {}", dir.display(), t.state.step);
        let (step, epochs) = (t.state.step, t.state.step / per_epoch);
        truncate_log(&loss_log, LOSS_HEADER, |e| e <= epochs)?;
        truncate_log(&step_log, STEP_HEADER, |k| k < step)?;
        t
    } else {
        let model = Codec::<f32>::new(codec_cfg, cfg.seed)?;
        write(&loss_log, format!("{LOSS_HEADER}\n"))?;
        write(&step_log, format!("{STEP_HEADER}\n"))?;
        Trainer::new(model, cfg.train_config())?
    };

    let target = target_steps(cfg, samples.len());
    let (mut losses, mut steps) = (open_append(&loss_log)?, open_append(&step_log)?);
    let mut final_loss = None;
    log::info!("λ={lambda}: training to step {target} ({per_epoch} steps per epoch)");
    while trainer.state.step < target {
        let batch: Vec<&Tensor<f32>> = trainer.batch_indices(samples.len()).into_iter().map(|i| &samples[i]).collect();
        let s = trainer.step(&batch)?;
        writeln!(steps, "{},{},{},{},{}", s.step, s.loss, s.bpp, s.mse, s.lr)?;
        if trainer.state.step % per_epoch == 0 {
            let lr = trainer.state.lr;
            let mean = trainer.end_epoch();
            let epoch = trainer.state.step / per_epoch;
            writeln!(losses, "{epoch},{},{mean},{lr}", trainer.state.step)?;
            log::info!("λ={lambda} epoch {epoch}: loss {mean:.6} bpp {:.4} mse {:.3e}", s.bpp, s.mse);
            final_loss = Some(mean);
            if epoch % cfg.train.checkpoint_every.max(1) == 0 {
                trainer.save(&dir)?;
            }
        }
    }
    trainer.save(&dir)?;
    Ok(TrainOutcome { dir, steps: trainer.state.step, final_loss })
}

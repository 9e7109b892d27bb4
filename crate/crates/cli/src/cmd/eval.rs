use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcnic::metrics::{emit_report, evaluate_model, rate_comparison, RateRow, RdCurve, RdPoint, Report};
use pcnic::net::Codec;
use pcnic::Tensor;

use super::codec::load_model;
use super::train::{is_complete, train_lambda};
use super::write;
use crate::config::{lambda_dir, RunConfig, Variant};
use crate::data::{self, Split};
use crate::error::{CliError, Result};

/// Evaluates trained models on the test split, producing RD curves, BD
/// tables and the fused vs image-only rate comparison. Missing models
/// are trained first.
#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long, short)]
    pub config: PathBuf,
    /// Overrides `output_dir`; checkpoints are looked up and written there.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Extra variants to evaluate next to the full model (repeatable).
    #[arg(long, value_enum)]
    pub ablate: Vec<Variant>,
    /// Reference RD curve (`bpp,psnr,msssim` CSV) for the BD table.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Evaluate these checkpoint directories instead of the configured
    /// variants (one curve point each).
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// Fail instead of training when a checkpoint is missing.
    #[arg(long)]
    pub no_train: bool,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

const SAMPLES_HEADER: &str = "lambda,sample,bytes,bpp,estimated_bpp,psnr,msssim";

fn sample_rows(out: &mut String, lambda: f64, ids: &[String], evals: &[pcnic::metrics::SampleEval]) {
    for (id, e) in ids.iter().zip(evals) {
        let ms = e.msssim.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{lambda},{id},{},{},{},{},{ms}", e.bytes, e.bpp, e.estimated_bpp, e.psnr).unwrap();
    }
}

fn test_set(cfg: &RunConfig) -> Result<(Vec<String>, Vec<Tensor<f32>>)> {
    Ok(data::load(cfg, Split::Test)?.into_iter().map(|s| (s.id, s.data)).unzip())
}

/// One variant over all λ: trains what is missing, evaluates, writes
/// `<out>/<slug>/curve.csv` and `samples.csv`.
fn run_variant(base: &RunConfig, variant: Variant, no_train: bool) -> Result<(RdCurve, Vec<(f64, RdPoint)>)> {
    let mut cfg = base.clone();
    variant.apply(&mut cfg);
    let (ids, test) = test_set(&cfg)?;
    let mut train: Option<Vec<Tensor<f32>>> = None;
    let mut points = Vec::new();
    let mut samples = format!("{SAMPLES_HEADER}\n");
    for &lambda in &cfg.train.lambdas {
        let dir = lambda_dir(&cfg.output_dir, variant, lambda);
        if no_train {
            if !dir.join(pcnic::net::SIDECAR_FILE).exists() {
                return Err(CliError::data(anyhow::anyhow!("no checkpoint in {}", dir.display())));
            }
        } else {
            let data = match &mut train {
                Some(d) => d,
                None => train.insert(data::load(&cfg, Split::Train)?.into_iter().map(|s| s.data).collect()),
            };
            if !is_complete(&cfg, &dir, data.len()) {
                log::info!("training {} λ={lambda}", variant.label());
                train_lambda(&cfg, variant, lambda, data, true)?;
            }
        }
        let model: Codec<f32> = load_model(&dir)?;
        let (point, evals) = evaluate_model(&model, &test)?;
        log::info!("{} λ={lambda}: {:.4} bpp, {:.3} dB", variant.label(), point.bpp, point.psnr);
        sample_rows(&mut samples, lambda, &ids, &evals);
        points.push((lambda, point));
    }
    let curve = RdCurve::new(variant.label(), points.iter().map(|p| p.1).collect())?;
    let dir = cfg.output_dir.join(variant.slug());
    write(&dir.join("curve.csv"), curve.to_csv())?;
    write(&dir.join("samples.csv"), samples)?;
    Ok((curve, points))
}

fn write_report(out: &Path, report: &Report) -> Result<()> {
    write(&out.join("report.txt"), report.to_table())?;
    write(&out.join("report.csv"), report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

fn load_curve(path: &Path) -> Result<RdCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(e).context(path.display()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "reference".into());
    Ok(RdCurve::from_csv(name, &text).map_err(|e| CliError::from(e).context(path.display()))?)
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(o) = &args.output {
        cfg.output_dir = o.clone();
    }
    if args.max_steps.is_some() {
        cfg.train.max_steps = args.max_steps;
    }
    cfg.validate()?;
    let reference = args.reference.as_deref().map(load_curve).transpose()?;

    if !args.checkpoint.is_empty() {
        let mut points = Vec::new();
        let mut samples = format!("{SAMPLES_HEADER}\n");
        for dir in &args.checkpoint {
            let model = load_model(dir)?;
            let mut c = cfg.clone();
            c.model.point_branch = model.config.point_branch;
            let (ids, test) = test_set(&c)?;
            let (point, evals) = evaluate_model(&model, &test)?;
            println!("{}: {:.4} bpp, {:.3} dB", dir.display(), point.bpp, point.psnr);
            sample_rows(&mut samples, model.config.lambda, &ids, &evals);
            points.push(point);
        }
        let curve = RdCurve::new("checkpoints", points)?;
        write(&cfg.output_dir.join("curve.csv"), curve.to_csv())?;
        write(&cfg.output_dir.join("samples.csv"), samples)?;
        if let Some(r) = &reference {
            write_report(&cfg.output_dir, &emit_report(r, &[curve]))?;
        }
        return Ok(());
    }

    let mut variants = vec![Variant::Full];
    for v in &args.ablate {
        if !variants.contains(v) {
            variants.push(*v);
        }
    }
    let mut results = Vec::new();
    for &v in &variants {
        let (curve, points) = run_variant(&cfg, v, args.no_train)?;
        results.push((v, curve, points));
    }

    let image_only = results.iter().find(|r| r.0 == Variant::ImageOnly);
    let full = &results[0];
    let reference = match (&reference, image_only) {
        (Some(r), _) => r.clone(),
        (None, Some(io)) => io.1.clone(),
        (None, None) => full.1.clone(),
    };
    let tests: Vec<RdCurve> = results.iter().map(|r| r.1.clone()).filter(|c| c.method != reference.method).collect();
    write_report(&cfg.output_dir, &emit_report(&reference, &tests))?;

    if let Some(io) = image_only {
        let rows = rate_comparison(&full.2, &io.2)?;
        let mut csv = format!("{}\n", RateRow::CSV_HEADER);
        for r in &rows {
            csv.push_str(&r.csv_line());
            csv.push('\n');
        }
        write(&cfg.output_dir.join("rate_comparison.csv"), csv)?;
    }
    Ok(())
}

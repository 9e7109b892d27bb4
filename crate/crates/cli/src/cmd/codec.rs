use std::path::{Path, PathBuf};

use pcnic::codec::{decode, encode};
use pcnic::kitti::save_png_rgb;
use pcnic::net::Codec;

use super::write;
use crate::data::load_pcnu;
use crate::error::{CliError, Result};

/// Compresses a `.pcnu` sample into a `.pcni` bitstream.
#[derive(Debug, clap::Args)]
pub struct EncodeArgs {
    /// Checkpoint directory (or its `checkpoint.pcnw`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
}

/// Reconstructs a PNG from a `.pcni` bitstream; no depth input is needed.
#[derive(Debug, clap::Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
}

pub fn load_model(path: &Path) -> Result<Codec<f32>> {
    let dir = if path.is_file() { path.parent().unwrap_or(Path::new(".")) } else { path };
    Codec::load(dir).map_err(|e| CliError::from(e).context(format!("checkpoint {}", path.display())))
}

pub fn run_encode(args: EncodeArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let sample = load_pcnu(&args.input)?;
    let sample = if model.config.point_branch { sample } else { sample.without_depth() };
    let enc = encode(&model, &sample.data)?;
    write(&args.output, &enc.bytes)?;
    let pixels = (sample.height() * sample.width()) as f64;
    println!(
        "{}: {} bytes, {:.4} bpp (model estimate {:.4})",
        args.output.display(),
        enc.bytes.len(),
        8.0 * enc.bytes.len() as f64 / pixels,
        (enc.estimated_y_bits + enc.estimated_z_bits) / pixels
    );
    Ok(())
}

pub fn run_decode(args: DecodeArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let bytes = std::fs::read(&args.input).map_err(|e| CliError::data(e).context(args.input.display()))?;
    let dec = decode(&model, &bytes)?;
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_png_rgb(&dec.image, &args.output)?;
    println!("{}", args.output.display());
    Ok(())
}

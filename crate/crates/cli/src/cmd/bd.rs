use std::path::PathBuf;

use pcnic::metrics::{emit_report, RdCurve, Report};

use crate::error::{CliError, Result};

/// Bjøntegaard metrics between RD curves, or reformatting of a saved report.
#[derive(Debug, clap::Args)]
pub struct BdArgs {
    /// Reference curve CSV (`bpp,psnr,msssim`).
    #[arg(long, required_unless_present = "values")]
    pub reference: Option<PathBuf>,
    /// Test curve as `NAME=PATH` or `PATH` (repeatable).
    #[arg(long, required_unless_present = "values")]
    pub test: Vec<String>,
    /// Print a saved `report.csv` as a table instead of computing one.
    #[arg(long, conflicts_with_all = ["reference", "test"])]
    pub values: Option<PathBuf>,
    /// Directory for `report.txt` and `report.csv`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(e).context(path.display()))
}

fn curve(spec: &str) -> Result<RdCurve> {
    let (name, path) = match spec.split_once('=') {
        Some((n, p)) => (n.to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(spec);
            (p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), p)
        }
    };
    RdCurve::from_csv(name, &read(&path)?).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn run(args: BdArgs) -> Result<()> {
    let report = match &args.values {
        Some(p) => Report::from_csv(&read(p)?).map_err(|e| CliError::from(e).context(p.display()))?,
        None => {
            let reference = curve(&args.reference.as_ref().expect("clap enforces").to_string_lossy())?;
            let tests = args.test.iter().map(|t| curve(t)).collect::<Result<Vec<_>>>()?;
            emit_report(&reference, &tests)
        }
    };
    print!("{}", report.to_table());
    if let Some(dir) = &args.output {
        super::write(&dir.join("report.txt"), report.to_table())?;
        super::write(&dir.join("report.csv"), report.to_csv())?;
    }
    Ok(())
}

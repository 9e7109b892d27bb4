mod cmd;
mod config;
mod data;
mod error;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pcnic", version, about = "Point-cloud-assisted neural image codec")]
struct Cli {
    /// More log output (-v debug, -vv trace); `RUST_LOG` also works.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Project(cmd::project::ProjectArgs),
    Train(cmd::train::TrainArgs),
    Encode(cmd::codec::EncodeArgs),
    Decode(cmd::codec::DecodeArgs),
    Eval(cmd::eval::EvalArgs),
    Bd(cmd::bd::BdArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (_, 0) => "info",
        (_, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();

    let result = match cli.command {
        Command::Project(a) => cmd::project::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Encode(a) => cmd::codec::run_encode(a),
        Command::Decode(a) => cmd::codec::run_decode(a),
        Command::Eval(a) => cmd::eval::run(a),
        Command::Bd(a) => cmd::bd::run(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use histories_lab::{execute, Completed, Invocation, Kind};

#[derive(Parser)]
#[command(name = "histories-lab", version, about = "Decoherent-histories laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decoherence functional and probabilities of a history set
    Histories(Args),
    /// Closed-system probabilities of a measurement model
    Measurement(Args),
    /// Bohmian trajectory ensemble on a grid
    Bohm(Args),
    /// Lattice path-sum class probabilities
    Pathsum(Args),
    /// Bohm frequencies against decoherent-histories probabilities
    CompareBohmDh(Args),
    /// Closed-system against subsystem-only probabilities
    CompareCopenhagen(Args),
    /// Enumerated path sums against transfer operators
    VerifyPathsum(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    validate_only: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Histories(a) => (Kind::Histories, a),
        Command::Measurement(a) => (Kind::Measurement, a),
        Command::Bohm(a) => (Kind::Bohm, a),
        Command::Pathsum(a) => (Kind::Pathsum, a),
        Command::CompareBohmDh(a) => (Kind::CompareBohmDh, a),
        Command::CompareCopenhagen(a) => (Kind::CompareCopenhagen, a),
        Command::VerifyPathsum(a) => (Kind::VerifyPathsum, a),
    };
    let inv = Invocation {
        scenario: args.scenario,
        out_dir: args.out_dir,
        seed: args.seed,
        validate_only: args.validate_only,
    };
    match execute(kind, &inv) {
        Ok(Completed::Validated(s)) => {
            println!("{}: valid {} scenario", inv.scenario.display(), s.kind());
            ExitCode::SUCCESS
        }
        Ok(Completed::Ran(_, report)) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

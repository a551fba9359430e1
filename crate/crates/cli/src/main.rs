use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dns_lab::commands::{
    cmd_blowup_scan, cmd_check, cmd_eta_sweep, cmd_run, cmd_vacuum_check, cmd_vacuum_predict, Options,
};
use dns_lab::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "dns-lab", version, about = "Compressible flow with density-degenerate viscosity: runs, checks and blow-up diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve to t_end, writing diagnostics, bound curves and snapshots.
    Run(Common),
    /// Validate the configuration and the initial data.
    Check(Common),
    /// Predict the gradient blow-up time of the analytic initial velocity.
    VacuumPredict(Common),
    /// Compare a vacuum run against exact free transport.
    VacuumCheck(Common),
    /// Sup-in-time gaps between runs of a decreasing eta schedule.
    EtaSweep(Common),
    /// Run over a (gamma, delta) grid and tabulate stop times.
    BlowupScan(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "DNS_LAB_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let common = match &cmd {
        Command::Run(c)
        | Command::Check(c)
        | Command::VacuumPredict(c)
        | Command::VacuumCheck(c)
        | Command::EtaSweep(c)
        | Command::BlowupScan(c) => c,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let opts = Options { out: common.out.clone(), quiet: common.quiet };
    if let Command::Check(c) = &cmd {
        let text = std::fs::read_to_string(&c.config)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", c.config.display())))?;
        return cmd_check(&text, &opts);
    }
    let cfg = RunConfig::load(&common.config)?;
    match cmd {
        Command::Run(_) => cmd_run(&cfg, &opts).map(|_| ()),
        Command::VacuumPredict(_) => cmd_vacuum_predict(&cfg).map(|_| ()),
        Command::VacuumCheck(_) => cmd_vacuum_check(&cfg, &opts).map(|_| ()),
        Command::EtaSweep(_) => cmd_eta_sweep(&cfg, &opts).map(|_| ()),
        Command::BlowupScan(_) => cmd_blowup_scan(&cfg, &opts).map(|_| ()),
        Command::Check(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dns-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use clap::{Parser, Subcommand};
use cranbeam::harness::{
    self, CampaignConfig, CampaignSummary, HarnessError, SweepParameter,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cranbeam",
    version,
    about = "Downlink beamforming designs for a relay-assisted antenna cluster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to a key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Directory the output files are written into.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the trial count from the config.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the campaign seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign; writes summary.json and trials.csv.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run one campaign per swept value; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter to vary: gamma_db, K, N, L, M or gamma_ch.
        #[arg(long)]
        param: String,
        /// Comma-separated list of values for the swept parameter.
        #[arg(long)]
        values: String,
    },
    /// Evaluate only the power floor; writes summary.json and trials.csv.
    Bound {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs) -> Result<CampaignConfig, HarnessError> {
    let text =
        std::fs::read_to_string(&common.config).map_err(|source| HarnessError::Io {
            path: common.config.clone(),
            source,
        })?;
    let mut cfg = CampaignConfig::parse(&text)?;
    if let Some(trials) = common.trials {
        cfg.net.trials = trials;
    }
    if let Some(seed) = common.seed {
        cfg.net.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn power_cell(dbw: Option<f64>) -> String {
    match dbw {
        Some(p) => format!("{p:9.3} dBW"),
        None => "      --     ".to_string(),
    }
}

fn print_summary(summary: &CampaignSummary) {
    let cfg = &summary.config;
    println!(
        "campaign: K={} N={} L={} M={} trials={} seed={}",
        cfg.net.k, cfg.net.n, cfg.net.l, cfg.net.m, cfg.net.trials, cfg.net.seed
    );
    for m in &summary.methods {
        println!(
            "  {:>6}  success {:6.1}%  mean power {}  mean runtime {:9.3}s",
            m.method.name(),
            m.p_success_pct,
            power_cell(m.mean_power_dbw),
            m.mean_runtime_s
        );
    }
    println!(
        "  {:>6}  success {:6.1}%  mean power {}  mean runtime {:9.3}s",
        "bound",
        summary.bound_success_pct,
        power_cell(summary.mean_bound_dbw),
        summary.mean_bound_runtime_s
    );
    if let Some(pct) = summary.rank1_success_pct {
        println!("  rank-1 extraction success: {pct:.1}%");
    }
}

fn run_and_emit(cfg: &CampaignConfig, out: &Path) -> Result<(), HarnessError> {
    let (summary, records) = harness::run_campaign(cfg)?;
    harness::emit_outputs(&summary, &records, out)?;
    print_summary(&summary);
    println!(
        "wrote {} and {}",
        out.join("summary.json").display(),
        out.join("trials.csv").display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            run_and_emit(&cfg, &common.out)
        }
        Command::Bound { common } => {
            let mut cfg = load_config(&common)?;
            cfg.methods.clear();
            run_and_emit(&cfg, &common.out)
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = load_config(&common)?;
            let parameter = SweepParameter::from_name(&param)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        HarnessError::Config(format!("invalid sweep value '{v}'"))
                    })
                })
                .collect::<Result<_, _>>()?;
            let rows = harness::sweep(&cfg, parameter, &values)?;
            harness::emit_sweep(&rows, &common.out)?;
            for row in &rows {
                println!(
                    "  {}={:<10} {:>6}  success {:6.1}%  mean power {}",
                    row.parameter.name(),
                    row.value,
                    row.method,
                    row.p_success_pct,
                    power_cell(row.mean_power_dbw)
                );
            }
            println!("wrote {}", out_path(&common.out).display());
            Ok(())
        }
    }
}

fn out_path(dir: &Path) -> PathBuf {
    dir.join("sweep.csv")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

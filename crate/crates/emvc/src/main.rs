use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use emvc::commands;
use emvc::config::RunConfig;
use emvc::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "emvc", version, about = "Train and drive end-to-end steering and speed networks on a synthetic road world")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    ConvSignFlip,
    LstmForgetDropped,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with the oracle driver.
    Datagen,
    /// Label, synthesize, split and shard a manifest.
    Prep,
    /// Train the configured model on the shards.
    Train {
        /// Continue from the last saved state in the training directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on a shard.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run one closed-loop episode; exits 3 if the vehicle leaves the road.
    Drive {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Lateral impulses as `time_s:meters[,...]`, positive to the left.
        #[arg(long)]
        perturb: Option<String>,
        /// Drive with the oracle controller instead of a network.
        #[arg(long)]
        oracle: bool,
    },
    /// Check backward rules of all three networks against finite differences.
    Gradcheck {
        /// Corrupt one backward rule (builds with fault injection only).
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            CliError::Io { path, source } => CliError::Config(format!("{}: {source}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    match &cli.command {
        Command::Train { resume: true } => cfg.set("resume", "true")?,
        Command::Eval { checkpoint: Some(p) } | Command::Drive { checkpoint: Some(p), .. } => {
            cfg.set("checkpoint", &p.display().to_string())?
        }
        _ => {}
    }
    if let Command::Drive { perturb, oracle, .. } = &cli.command {
        if let Some(p) = perturb {
            cfg.set("drive.perturb", p)?;
        }
        if *oracle {
            cfg.set("drive.oracle", "true")?;
        }
    }
    Ok(cfg)
}

#[cfg(feature = "fault-injection")]
fn graph_factory(fault: Option<FaultArg>) -> Result<Box<dyn Fn() -> emvc_core::Graph>> {
    use emvc_core::Fault;
    let fault = fault.map(|f| match f {
        FaultArg::ConvSignFlip => Fault::ConvWeightSignFlip,
        FaultArg::LstmForgetDropped => Fault::LstmForgetGateDropped,
    });
    Ok(Box::new(move || {
        let mut g = emvc_core::Graph::new();
        if let Some(f) = fault {
            g.inject_fault(f);
        }
        g
    }))
}

#[cfg(not(feature = "fault-injection"))]
fn graph_factory(fault: Option<FaultArg>) -> Result<Box<dyn Fn() -> emvc_core::Graph>> {
    match fault {
        Some(_) => Err(CliError::Config("--fault needs a build with the `fault-injection` feature".into())),
        None => Ok(Box::new(emvc_core::Graph::new)),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Datagen => {
            let s = commands::datagen(&cfg)?;
            println!("wrote {} trips, {} manifest rows to {}", s.trips, s.rows, cfg.path("data_dir").display());
        }
        Command::Prep => {
            let s = commands::prep(&cfg)?;
            println!("records: train {} val {} test {}", s.counts[0], s.counts[1], s.counts[2]);
            if s.synthesis_skipped > 0 {
                println!("side-camera synthesis skipped for {} low-speed rows", s.synthesis_skipped);
            }
            print!("{}", s.histogram_text());
        }
        Command::Train { .. } => {
            let s = commands::train(&cfg, &mut std::io::stderr())?;
            println!("trained {} steps, best val angle MAE {:.4} deg", s.steps, s.best_val_angle_mae_deg);
        }
        Command::Eval { .. } => {
            let m = commands::eval(&cfg)?;
            let split = cfg.get("eval_split");
            print!("{}", commands::metrics_text(&cfg, &cfg.checkpoint_path(), emvc_split(split), &m));
        }
        Command::Drive { .. } => {
            let r = commands::drive(&cfg)?;
            println!("{}", commands::summary_line(&r));
            if r.off_road {
                return Err(CliError::Acceptance(format!("vehicle left the road: {}", commands::summary_line(&r))));
            }
        }
        Command::Gradcheck { fault } => {
            let factory = graph_factory(*fault)?;
            let outcome = commands::gradcheck_with(&cfg, &*factory)?;
            print!("{}", outcome.text());
            if !outcome.passed() {
                return Err(CliError::Acceptance("gradient check failed".into()));
            }
        }
    }
    Ok(())
}

fn emvc_split(s: &str) -> emvc_core::data::Split {
    emvc_core::data::Split::ALL.into_iter().find(|x| x.as_str() == s).unwrap_or(emvc_core::data::Split::Test)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

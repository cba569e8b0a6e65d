use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fwswarm_core::sim::kernel::{run_scenario, StepMode};
use fwswarm_core::sim::runlog::{replay, RunLog};
use fwswarm_core::sim::scenarios::{builtin, BUILTIN};
use fwswarm_core::sim::{ScenarioConfig, Simulation};
use fwswarm_gateway::ServeConfig;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fwswarm", version, about = "Fixed-wing swarm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its run log.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a scenario in real time and serve telemetry and commands over TCP
    /// (newline-delimited JSON) until interrupted.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: SocketAddr,
        /// Snapshot pushes per simulated second.
        #[arg(long, default_value_t = 2.0)]
        push_hz: f64,
        /// Simulated seconds per wall-clock second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Re-read a run log, check it and print its digest.
    Replay {
        log: PathBuf,
    },
    /// Recompute metrics from a run log.
    Metrics {
        log: PathBuf,
        /// Write the report as TOML instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a scenario as TOML, or list the built-in ones.
    Scenario {
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds; overrides the scenario duration.
    #[arg(long)]
    duration: Option<f64>,
    /// Run log path (NDJSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Step agents on a thread pool.
    #[arg(long)]
    parallel: bool,
}

impl RunArgs {
    fn prepare(&self) -> Result<(ScenarioConfig, RunLog, StepMode)> {
        let mut cfg = load_scenario(&self.scenario)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        let mut log = RunLog::new();
        if let Some(p) = &self.out {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            log = log.with_writer(Box::new(BufWriter::new(f)));
        }
        let mode = if self.parallel { StepMode::Parallel } else { StepMode::Sequential };
        Ok((cfg, log, mode))
    }
}

fn serve(run: &RunArgs, cfg: ServeConfig) -> Result<()> {
    let (scenario, log, mode) = run.prepare()?;
    let sim = Simulation::with_log(scenario, mode, log)?;
    let rt = tokio::runtime::Runtime::new()?;
    let sim = rt.block_on(async {
        let server = fwswarm_gateway::serve(sim, cfg).await?;
        eprintln!("listening on {}", server.local_addr());
        tokio::signal::ctrl_c().await?;
        anyhow::Ok(server.shutdown().await?)
    })?;
    print!("{}", sim.finish()?.report.to_toml());
    Ok(())
}

pub fn load_scenario(name: &str) -> Result<ScenarioConfig> {
    if let Some(c) = builtin(name) {
        return Ok(c);
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!("no built-in scenario or file named {name:?} (built-ins: {})", BUILTIN.join(", "));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioConfig::parse(&text)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { run } => {
            let (cfg, log, mode) = run.prepare()?;
            let start = Instant::now();
            let output = run_scenario(cfg, mode, log)?;
            eprintln!("simulated in {:.2} s", start.elapsed().as_secs_f64());
            print!("{}", output.report.to_toml());
        }
        Command::Serve {
            run,
            listen,
            push_hz,
            speed,
        } => {
            if !(push_hz > 0.0) || !(speed >= 0.0) {
                bail!("--push-hz must be positive and --speed non-negative");
            }
            serve(&run, ServeConfig { listen, push_hz, speed })?;
        }
        Command::Replay { log } => {
            let f = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let r = replay(BufReader::new(f))?;
            println!("scenario {} records {} digest {}", r.scenario.name, r.records, r.digest);
        }
        Command::Metrics { log, out } => {
            let f = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let report = replay(BufReader::new(f))?.report.to_toml();
            match out {
                Some(p) => std::fs::write(&p, report).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{report}"),
            }
        }
        Command::Scenario { name: None } => {
            for n in BUILTIN {
                println!("{n}");
            }
        }
        Command::Scenario { name: Some(n) } => print!("{}", load_scenario(&n)?.to_toml()),
    }
    Ok(())
}

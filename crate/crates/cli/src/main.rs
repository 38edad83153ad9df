use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowsplit::acceptance::{Acceptance, CRITERIA};
use flowsplit::bench::bench_splitter;
use flowsplit::experiment::{dump_workload, run_experiment, sweep, write_sweep, RunCache, SweepAxis};
use flowsplit::netsim::RoutingPolicy;
use flowsplit::workload::BackgroundMode;
use flowsplit::{Error, ExperimentConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_ACCEPTANCE: u8 = 2;
const EXIT_IO: u8 = 3;

/// Two-tunnel flow-splitter simulator.
#[derive(Parser)]
#[command(name = "flowsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run treatment and baseline for one seed and write reports.
    Run(Overrides),
    /// Sweep one parameter and write sweep.csv and sweep.svg.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// threshold, utilization or flow-rate (alias pps).
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; defaults to the config's sweep section.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Time the splitter's per-packet path.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        packets: u64,
        /// Comma-separated flow counts.
        #[arg(long, value_delimiter = ',', default_value = "10000")]
        flows: Vec<u64>,
    },
    /// Run the acceptance suite; exits 2 if any criterion fails.
    Check {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated criterion numbers; all by default.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Write the application flows a config generates as CSV.
    DumpWorkload {
        #[command(flatten)]
        overrides: Overrides,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Flags mirror config keys and take precedence over the file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML experiment config; built-in defaults if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<u64>,
    /// Background load as a fraction of combined tunnel capacity.
    #[arg(long)]
    utilization: Option<f64>,
    #[arg(long)]
    background_mode: Option<String>,
    /// Application flow arrivals per second.
    #[arg(long)]
    flow_rate: Option<f64>,
    #[arg(long)]
    horizon_s: Option<f64>,
    #[arg(long)]
    warmup_s: Option<f64>,
    /// Treatment routing policy: splitter-tos, ecmp-per-flow, ecmp-per-packet.
    #[arg(long)]
    policy: Option<RoutingPolicy>,
    #[arg(long)]
    baseline: Option<RoutingPolicy>,
    #[arg(long)]
    capacity_bps: Option<u64>,
    #[arg(long)]
    prop_delay_us: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-packet delivery traces.
    #[arg(long)]
    trace: bool,
    /// Tunnels at a tenth of the capacity, load scaled to match.
    #[arg(long)]
    fast: bool,
}

impl Overrides {
    fn apply(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.threshold {
            c.threshold = v;
        }
        if let Some(v) = self.utilization {
            c.background.utilization = v;
        }
        if let Some(v) = &self.background_mode {
            c.background.mode = match v.as_str() {
                "via-splitter" => BackgroundMode::ViaSplitter,
                "bypass" => BackgroundMode::Bypass,
                other => return Err(Error::Parameter(format!("unknown background mode {other:?}"))),
            };
        }
        if let Some(v) = self.flow_rate {
            c.workload.flow_rate = v;
        }
        if let Some(v) = self.horizon_s {
            c.horizon_s = v;
        }
        if let Some(v) = self.warmup_s {
            c.warmup_s = v;
        }
        if let Some(v) = self.policy {
            c.treatment = v;
        }
        if let Some(v) = self.baseline {
            c.baseline = v;
        }
        if let Some(v) = self.capacity_bps {
            c.tunnel.capacity_bps = v;
        }
        if let Some(v) = self.prop_delay_us {
            c.tunnel.prop_delay_us = v;
        }
        if let Some(v) = &self.out {
            c.output.dir = v.clone();
        }
        if self.trace {
            c.output.trace = true;
        }
        if self.fast {
            c = c.fast();
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn execute(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run(o) => {
            let c = o.apply()?;
            let report = run_experiment(&c, &c.output.dir)?;
            print!("{}", report.to_text());
            println!("wrote {}", c.output.dir.join("report.json").display());
        }
        Command::Sweep { overrides, axis, values } => {
            let c = overrides.apply()?;
            let values = if values.is_empty() { axis.configured_values(&c) } else { values };
            let table = sweep(&c, axis, &values, &mut RunCache::new())?;
            print!("{}", table.to_csv());
            for p in write_sweep(&table, &c.output.dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Bench { packets, flows } => {
            println!("{:>10} {:>10} {:>10} {:>10}", "packets", "flows", "mean_ns", "p99_ns");
            for f in flows {
                let s = bench_splitter(packets, f)?;
                println!("{:>10} {:>10} {:>10.1} {:>10.1}", s.n_packets, s.flows, s.mean_ns, s.p99_ns);
            }
        }
        Command::Check { overrides, only } => {
            let c = overrides.apply()?;
            let ids: Vec<u8> = if only.is_empty() { CRITERIA.iter().map(|(i, _)| *i).collect() } else { only };
            let suite = Acceptance::new(c);
            let mut failed = 0;
            for id in ids {
                let r = suite.check(id)?;
                println!("{r}");
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                println!("{failed} criteria failed");
                return Ok(EXIT_ACCEPTANCE);
            }
        }
        Command::DumpWorkload { overrides, output } => {
            let csv = dump_workload(&overrides.apply()?)?;
            match output {
                Some(p) => write_file(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(0)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors, which would read as an acceptance failure.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

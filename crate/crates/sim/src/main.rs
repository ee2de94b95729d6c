use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use otterlink_core::{Clock, DailySpan, Mode, PairId, SystemClock, Timestamp, TzOffset};
use otterlink_service::{server, Service, DATA_DIR_ENV};
use otterlink_sim::config::Config;
use otterlink_sim::couple::simulate;
use otterlink_sim::log::EventLog;
use otterlink_sim::plan::{generate_trace, write_trace, PlanSegment, ProfileAnchors, TraceSpec};
use otterlink_sim::verify::verify;

#[derive(Parser)]
#[command(name = "otterlink", version, about = "Otter sharing service and couple simulator")]
struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct NotifierFlags {
    #[arg(long)]
    notif_min_gap_mins: Option<i64>,
    #[arg(long)]
    notif_jitter_mins: Option<i64>,
    /// Local active hours, e.g. 08:00-22:00.
    #[arg(long)]
    active_hours: Option<DailySpan>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the line protocol server and the WebSocket bridge.
    Serve {
        #[arg(long, env = DATA_DIR_ENV, default_value = "otterlink-data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:7879")]
        ws: SocketAddr,
        #[arg(long)]
        no_ws: bool,
        #[command(flatten)]
        notifier: NotifierFlags,
    },
    /// Simulate a couple and write the event log as JSON lines.
    Simulate {
        #[arg(long, value_parser = Mode::parse_loose)]
        mode: Option<Mode>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drop_probability: Option<f64>,
        /// Log file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        notifier: NotifierFlags,
    },
    /// Generate a synthetic sensor trace from a day plan.
    GenTrace {
        /// TOML file with `[[day_plan]]` segments and an optional `[profile]`.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        days: u32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        tz_offset_mins: i32,
        /// UTC start, unix seconds.
        #[arg(long, default_value_t = 1_709_510_400)]
        start: i64,
        #[arg(long, default_value_t = 3.0)]
        noise_sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a simulation log; exits non-zero when any rule is violated.
    Verify { log: PathBuf },
    #[command(subcommand)]
    Config(ConfigCommand),
    #[command(subcommand)]
    Admin(AdminCommand),
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the effective configuration.
    Show {
        #[command(flatten)]
        notifier: NotifierFlags,
    },
}

#[derive(Subcommand)]
enum AdminCommand {
    /// Switch a pair's mode from the next window, writing to the data directory.
    SetMode {
        #[arg(value_parser = parse_pair)]
        pair: PairId,
        #[arg(value_parser = Mode::parse_loose)]
        mode: Mode,
        #[arg(long, env = DATA_DIR_ENV, default_value = "otterlink-data")]
        data_dir: PathBuf,
    },
}

fn parse_pair(s: &str) -> Result<PairId, String> {
    s.strip_prefix('p')
        .unwrap_or(s)
        .parse()
        .map(PairId)
        .map_err(|_| format!("expected a pair id like p1 or 1, got {s:?}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    day_plan: Vec<PlanSegment>,
    #[serde(default)]
    profile: ProfileAnchors,
}

fn load_config(path: Option<&Path>, flags: &NotifierFlags) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let n = &mut cfg.service.notifier;
    if let Some(v) = flags.notif_min_gap_mins {
        n.min_gap_mins = v;
    }
    if let Some(v) = flags.notif_jitter_mins {
        n.jitter_mins = v;
    }
    if let Some(v) = flags.active_hours {
        n.active_hours = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Serve {
            data_dir,
            listen,
            ws,
            no_ws,
            notifier,
        } => {
            let cfg = load_config(config, &notifier)?;
            let (service, report) = Service::open(&data_dir, cfg.service)
                .with_context(|| format!("opening data directory {}", data_dir.display()))?;
            log::info!(
                "restored from {}: snapshot {:?}, {} records replayed",
                data_dir.display(),
                report.snapshot_seq,
                report.replayed
            );
            if let Some(c) = report.corrupt {
                log::warn!("discarded torn log tail: {c:?}");
            }
            let shared = server::Shared::new(service, Arc::new(SystemClock));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(shared, listen, (!no_ws).then_some(ws)))?;
        }
        Command::Simulate {
            mode,
            days,
            seed,
            drop_probability,
            out,
            notifier,
        } => {
            let mut cfg = load_config(config, &notifier)?;
            let sim = &mut cfg.simulation;
            sim.mode = mode.unwrap_or(sim.mode);
            sim.days = days.unwrap_or(sim.days);
            sim.seed = seed.unwrap_or(sim.seed);
            sim.drop_probability = drop_probability.unwrap_or(sim.drop_probability);
            cfg.validate()?;
            let log = simulate(&cfg)?;
            log.write_jsonl(output(out.as_deref())?)?;
            eprintln!("{} records", log.entries.len());
        }
        Command::GenTrace {
            plan,
            seed,
            days,
            tz_offset_mins,
            start,
            noise_sigma,
            out,
        } => {
            let text = std::fs::read_to_string(&plan).with_context(|| format!("reading {}", plan.display()))?;
            let file: PlanFile = toml::from_str(&text).with_context(|| format!("parsing {}", plan.display()))?;
            let spec = TraceSpec {
                start: Timestamp(start),
                days,
                tz: TzOffset(tz_offset_mins),
                noise_sigma,
                seed,
            };
            let events = generate_trace(&file.day_plan, &file.profile, &spec)?;
            write_trace(&events, output(out.as_deref())?)?;
        }
        Command::Verify { log } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let events = EventLog::read_jsonl(BufReader::new(file))?;
            let report = verify(&events);
            print!("{report}");
            if !report.is_clean() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Config(ConfigCommand::Show { notifier }) => {
            print!("{}", load_config(config, &notifier)?.to_toml());
        }
        Command::Admin(AdminCommand::SetMode { pair, mode, data_dir }) => {
            if !data_dir.is_dir() {
                bail!("no data directory at {}", data_dir.display());
            }
            let cfg = load_config(config, &NotifierFlags::default())?;
            let (mut service, _) = Service::open(&data_dir, cfg.service)?;
            let record = service.set_mode(pair, mode, SystemClock.now())?;
            println!("{}", serde_json::to_string(&record)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! The `colloquy` command line.
//!
//! Exit codes: 0 success, 1 findings (invalid protocols, susceptible
//! player, inconsistent ledger), 2 usage or input errors, 3 replay
//! divergence.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::game::{
    run_game, score_trace, GameConfig, GameError, PlayerKind, PriceSeries, RunOptions,
};
use crate::inspect::{explain, explain_text, list_conversations};
use crate::probe::{explain_report, parse_checks, probe_player};
use crate::repository::{check_repository, load_repository, Repository};
use crate::runtime::Trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "colloquy",
    version,
    about = "Protocol-checked agent conversations and the trading game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every protocol in a repository directory.
    Validate {
        /// Directory holding `index` and the `.proto` files.
        repo: PathBuf,
    },
    /// Run one or more games and print a summary of each.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value = "reference")]
        player: PlayerKind,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Pre-recorded price series; overrides the config's.
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Protocol repository directory; defaults to the bundled one.
        #[arg(long)]
        protocols: Option<PathBuf>,
        /// Write the trace here and the random draws to `<path>.replay`.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Take random draws from a replay (or full trace) file.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Run up to this many configs at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-run a recorded game from its random draws and check the new
    /// trace is byte-identical.
    Replay {
        /// Trace written by `run --record`.
        trace: PathBuf,
        config: PathBuf,
        /// Defaults to the player named in the trace.
        #[arg(long)]
        player: Option<PlayerKind>,
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long)]
        protocols: Option<PathBuf>,
    },
    /// Inject forged and out-of-sequence messages at a player and classify
    /// how it reacts.
    Probe {
        config: PathBuf,
        #[arg(long, default_value = "reference")]
        player: PlayerKind,
        /// Comma-separated: sender, progress, name, address.
        #[arg(long, default_value = "sender,progress,name,address")]
        checks: String,
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Write the injection run's trace here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Inspect the conversations in a trace.
    Trace {
        trace: PathBuf,
        /// List every conversation (the default).
        #[arg(long)]
        conversations: bool,
        /// Show the message path of one conversation.
        #[arg(long)]
        explain: Option<String>,
        #[arg(long)]
        protocols: Option<PathBuf>,
    },
    /// Recompute the final capital from a trace's economic records.
    Score { trace: PathBuf },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Validate { repo } => validate(&repo, out),
        Command::Run {
            configs,
            player,
            seed,
            prices,
            protocols,
            record,
            replay,
            jobs,
        } => {
            let job = RunJob {
                player,
                seed,
                prices,
                protocols,
                record,
                replay,
            };
            run_games(&configs, &job, jobs.max(1), out)
        }
        Command::Replay {
            trace,
            config,
            player,
            prices,
            protocols,
        } => replay(
            &trace,
            &config,
            player,
            prices.as_deref(),
            protocols.as_deref(),
            out,
        ),
        Command::Probe {
            config,
            player,
            checks,
            prices,
            record,
        } => probe(
            &config,
            player,
            &checks,
            prices.as_deref(),
            record.as_deref(),
            out,
        ),
        Command::Trace {
            trace,
            conversations: _,
            explain,
            protocols,
        } => inspect(&trace, explain.as_deref(), protocols.as_deref(), out),
        Command::Score { trace } => score(&trace, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure(code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

/// An exit code with a message for stderr.
struct Failure(i32, String);

fn input(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_INPUT, e.to_string())
}

fn io(e: std::io::Error) -> Failure {
    Failure(EXIT_INPUT, e.to_string())
}

fn game_failure(e: GameError) -> Failure {
    let code = if e.is_replay_divergence() {
        EXIT_DIVERGED
    } else {
        EXIT_INPUT
    };
    Failure(code, e.to_string())
}

fn validate(repo: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let results = check_repository(repo).map_err(input)?;
    let mut bad = 0;
    for (id, result) in &results {
        if let Err(e) = result {
            bad += 1;
            writeln!(out, "{id}: {e}").map_err(io)?;
        }
    }
    if bad == 0 {
        writeln!(out, "{} protocols OK", results.len()).map_err(io)?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "{bad} of {} protocols invalid", results.len()).map_err(io)?;
        Ok(EXIT_FINDINGS)
    }
}

fn repository(dir: Option<&Path>) -> Result<Arc<Repository>, Failure> {
    match dir {
        Some(d) => load_repository(d).map(Arc::new).map_err(input),
        None => Ok(Arc::new(Repository::bundled())),
    }
}

fn load_config(path: &Path, prices: Option<&Path>) -> Result<GameConfig, Failure> {
    let mut config = GameConfig::load(path).map_err(input)?;
    if let Some(p) = prices {
        let series = PriceSeries::load(p).map_err(input)?;
        config.set_series(series).map_err(input)?;
    }
    Ok(config)
}

struct RunJob {
    player: PlayerKind,
    seed: Option<u64>,
    prices: Option<PathBuf>,
    protocols: Option<PathBuf>,
    record: Option<PathBuf>,
    replay: Option<PathBuf>,
}

/// Runs one config and returns its summary text.
fn run_one(path: &Path, job: &RunJob) -> Result<String, Failure> {
    let config = load_config(path, job.prices.as_deref())?;
    let replay = match &job.replay {
        Some(p) => Some(Trace::load(p).map_err(input)?.draws()),
        None => None,
    };
    let options = RunOptions {
        seed: job.seed,
        replay,
        repository: Some(repository(job.protocols.as_deref())?),
        ..RunOptions::default()
    };
    let result = run_game(&config, job.player, options).map_err(game_failure)?;
    if let Some(out) = &job.record {
        result.trace.save(out).map_err(io)?;
        let mut replay_path = out.clone().into_os_string();
        replay_path.push(".replay");
        std::fs::write(&replay_path, result.trace.replay_text()).map_err(io)?;
    }
    Ok(result.summary())
}

fn run_games(
    configs: &[PathBuf],
    job: &RunJob,
    jobs: usize,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if configs.len() > 1 && (job.record.is_some() || job.replay.is_some()) {
        return Err(input("--record and --replay take a single config"));
    }
    let mut results: Vec<Option<Result<String, Failure>>> =
        (0..configs.len()).map(|_| None).collect();
    for (chunk_configs, chunk_results) in configs.chunks(jobs).zip(results.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_configs
                .iter()
                .map(|c| s.spawn(move || run_one(c, job)))
                .collect();
            for (slot, h) in chunk_results.iter_mut().zip(handles) {
                *slot =
                    Some(h.join().unwrap_or_else(|_| {
                        Err(Failure(EXIT_INPUT, "game thread panicked".into()))
                    }));
            }
        });
    }
    let mut code = EXIT_OK;
    for (path, result) in configs.iter().zip(results) {
        if configs.len() > 1 {
            writeln!(out, "config\t{}", path.display()).map_err(io)?;
        }
        match result.expect("every config ran") {
            Ok(summary) => out.write_all(summary.as_bytes()).map_err(io)?,
            Err(Failure(c, message)) if configs.len() > 1 => {
                writeln!(out, "error\t{message}").map_err(io)?;
                code = code.max(c);
            }
            Err(f) => return Err(f),
        }
    }
    Ok(code)
}

fn replay(
    recorded: &Path,
    config: &Path,
    player: Option<PlayerKind>,
    prices: Option<&Path>,
    protocols: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let trace = Trace::load(recorded).map_err(input)?;
    let player = match player {
        Some(p) => p,
        None => recorded_player(&trace)
            .ok_or_else(|| input("trace has no CONFIG record; pass --player"))?,
    };
    let config = load_config(config, prices)?;
    let options = RunOptions {
        replay: Some(trace.draws()),
        repository: Some(repository(protocols)?),
        ..RunOptions::default()
    };
    let result = run_game(&config, player, options).map_err(game_failure)?;
    let (old, new) = (trace.to_text(), result.trace.to_text());
    if old == new {
        writeln!(out, "replay\tidentical").map_err(io)?;
        writeln!(out, "trace_hash\t{}", result.trace_hash()).map_err(io)?;
        return Ok(EXIT_OK);
    }
    let line = old
        .lines()
        .zip(new.lines())
        .position(|(a, b)| a != b)
        .map_or_else(
            || old.lines().count().min(new.lines().count()) + 1,
            |i| i + 1,
        );
    Err(Failure(
        EXIT_DIVERGED,
        format!(
            "replayed trace differs from the recording at line {line} ({} vs {})",
            trace.hash_hex(),
            result.trace_hash()
        ),
    ))
}

fn recorded_player(trace: &Trace) -> Option<PlayerKind> {
    trace
        .records()
        .iter()
        .find(|r| r.fields.first().map(String::as_str) == Some("CONFIG"))
        .and_then(|r| r.fields.get(1)?.parse().ok())
}

fn probe(
    config: &Path,
    player: PlayerKind,
    checks: &str,
    prices: Option<&Path>,
    record: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let checks = parse_checks(checks).map_err(input)?;
    let config = load_config(config, prices)?;
    let report = probe_player(&config, player, &checks).map_err(input)?;
    out.write_all(explain_report(&report).as_bytes())
        .map_err(io)?;
    if let (Some(path), Some(trace)) = (record, &report.trace) {
        trace.save(path).map_err(io)?;
    }
    Ok(if report.all_clear() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn inspect(
    path: &Path,
    cid: Option<&str>,
    protocols: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    let trace = Trace::load(path).map_err(input)?;
    let text = match cid {
        Some(cid) => {
            let repo = repository(protocols)?;
            explain_text(&explain(&trace, &repo, cid).map_err(input)?)
        }
        None => list_conversations(&trace).map_err(input)?,
    };
    out.write_all(text.as_bytes()).map_err(io)?;
    Ok(EXIT_OK)
}

fn score(path: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    let trace = Trace::load(path).map_err(input)?;
    let score = score_trace(&trace).map_err(|e| Failure(EXIT_FINDINGS, e.to_string()))?;
    writeln!(out, "player\t{}", score.player).map_err(io)?;
    writeln!(out, "score_mode\t{}", score.score_mode.as_str()).map_err(io)?;
    writeln!(out, "capital\t{}", score.capital).map_err(io)?;
    let status = if score.no_account { "no_account" } else { "ok" };
    writeln!(out, "status\t{status}").map_err(io)?;
    Ok(EXIT_OK)
}

//! Offline scoring: recomputes a player's capital from the `GAME` records
//! of a trace and cross-checks the ledger along the way.

use std::collections::BTreeMap;

use thiserror::Error;

use super::config::ScoreMode;
use crate::runtime::{Trace, TraceKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Score {
    pub player: String,
    pub score_mode: ScoreMode,
    /// Recomputed final capital; 0 when the player never opened an account.
    pub capital: i64,
    pub no_account: bool,
    pub ledger_entries: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("line {line}: {message}")]
    Inconsistent { line: usize, message: String },
    #[error("trace has no CONFIG record")]
    MissingConfig,
    #[error("trace has no RESULT record")]
    MissingResult,
    #[error("recomputed capital {recomputed} ({status}) differs from recorded {recorded}")]
    Mismatch {
        recomputed: i64,
        recorded: String,
        status: &'static str,
    },
}

fn int(line: usize, s: &str) -> Result<i64, ScoreError> {
    s.parse().map_err(|_| ScoreError::Inconsistent {
        line,
        message: format!("{s:?} is not an integer"),
    })
}

/// Replays the economic records of `trace`. Fails if any running balance
/// disagrees with the deltas before it, or if the recomputed capital
/// disagrees with the trace's `RESULT` record.
pub fn score_trace(trace: &Trace) -> Result<Score, ScoreError> {
    let mut config: Option<(ScoreMode, i64)> = None;
    let mut prices: BTreeMap<String, i64> = BTreeMap::new();
    let mut balances: BTreeMap<String, (String, i64)> = BTreeMap::new();
    let mut owned: BTreeMap<String, BTreeMap<String, i64>> = BTreeMap::new();
    let mut result: Option<(String, String, String)> = None;
    let mut ledger_entries = 0;

    for (i, r) in trace.records().iter().enumerate() {
        if r.kind != TraceKind::Game {
            continue;
        }
        let line = i + 1;
        let bad = |message: String| ScoreError::Inconsistent { line, message };
        let f = &r.fields;
        let arity = |n: usize| {
            if f.len() == n {
                Ok(())
            } else {
                Err(bad(format!(
                    "{} record needs {} fields, has {}",
                    f[0],
                    n - 1,
                    f.len() - 1
                )))
            }
        };
        match f.first().map(String::as_str) {
            Some("CONFIG") => {
                arity(4)?;
                let mode = ScoreMode::parse(&f[2])
                    .ok_or_else(|| bad(format!("unknown score mode {:?}", f[2])))?;
                config = Some((mode, int(line, &f[3])?));
            }
            Some("PRICE") => {
                arity(3)?;
                prices.insert(f[1].clone(), int(line, &f[2])?);
            }
            Some("LEDGER") => {
                arity(6)?;
                let (_, initial) = config.ok_or(ScoreError::MissingConfig)?;
                let (delta, balance) = (int(line, &f[3])?, int(line, &f[4])?);
                let expected = match balances.get(&f[1]) {
                    Some((account, prev)) => {
                        if *account != f[2] {
                            return Err(bad(format!(
                                "{} changed account from {account} to {}",
                                f[1], f[2]
                            )));
                        }
                        prev + delta
                    }
                    None => {
                        if delta != initial {
                            return Err(bad(format!(
                                "first entry for {} is {delta}, expected the opening grant {initial}",
                                f[1]
                            )));
                        }
                        delta
                    }
                };
                if balance != expected {
                    return Err(bad(format!(
                        "balance of {} is {balance}, but previous entries give {expected}",
                        f[1]
                    )));
                }
                if balance < 0 {
                    return Err(bad(format!("negative balance {balance} for {}", f[1])));
                }
                balances.insert(f[1].clone(), (f[2].clone(), balance));
                ledger_entries += 1;
            }
            Some("OWN") => {
                arity(4)?;
                owned
                    .entry(f[1].clone())
                    .or_default()
                    .insert(f[2].clone(), int(line, &f[3])?);
            }
            Some("RESULT") => {
                arity(4)?;
                result = Some((f[1].clone(), f[2].clone(), f[3].clone()));
            }
            _ => {}
        }
    }

    let (mode, _) = config.ok_or(ScoreError::MissingConfig)?;
    let (player, recorded, recorded_status) = result.ok_or(ScoreError::MissingResult)?;
    let (capital, status) = match balances.get(&player) {
        None => (0, "no_account"),
        Some((_, balance)) => {
            let mut total = *balance;
            if mode == ScoreMode::MarkToMarket {
                for (asset, qty) in owned.get(&player).into_iter().flatten() {
                    total += qty * prices.get(asset).copied().unwrap_or(0);
                }
            }
            (total, "ok")
        }
    };
    if recorded != capital.to_string() || recorded_status != status {
        return Err(ScoreError::Mismatch {
            recomputed: capital,
            recorded: format!("{recorded} ({recorded_status})"),
            status,
        });
    }
    Ok(Score {
        player,
        score_mode: mode,
        capital,
        no_account: status == "no_account",
        ledger_entries,
    })
}

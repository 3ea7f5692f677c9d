//! Named, seeded random streams with record and replay.
//!
//! Each draw is a pure function of `(seed, stream name, per-stream counter)`,
//! so adding a draw on one stream never perturbs another. In replay mode the
//! recorded values are served back in order and any mismatch in tick,
//! stream or range is a divergence.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use super::trace::fnv1a64;
use super::Tick;

/// One random draw as it appears in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawRecord {
    pub tick: Tick,
    pub stream: String,
    pub lo: i64,
    pub hi: i64,
    pub value: i64,
}

impl fmt::Display for DrawRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{}, {}] = {}",
            self.tick, self.stream, self.lo, self.hi, self.value
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayDivergence {
    #[error("replay diverged at draw {index}: expected {expected}, run asked for tick {tick} {stream} [{lo}, {hi}]")]
    Mismatch {
        index: usize,
        expected: DrawRecord,
        tick: Tick,
        stream: String,
        lo: i64,
        hi: i64,
    },
    #[error("replay exhausted at draw {index}: run asked for tick {tick} {stream}")]
    Exhausted {
        index: usize,
        tick: Tick,
        stream: String,
    },
    #[error("replay left {remaining} recorded draws unused")]
    Unused { remaining: usize },
}

#[derive(Debug, Clone)]
enum Mode {
    Live {
        seed: u64,
        counters: BTreeMap<String, u64>,
    },
    Replay {
        queue: VecDeque<DrawRecord>,
    },
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    mode: Mode,
    drawn: Vec<DrawRecord>,
    diverged: Option<ReplayDivergence>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn raw(seed: u64, stream_key: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream_key.rotate_left(17)) ^ counter)
}

/// Uniform integer in `[lo, hi]` by rejection sampling over successive words.
fn uniform(seed: u64, stream: &str, counter: &mut u64, lo: i64, hi: i64) -> i64 {
    let key = fnv1a64(stream.as_bytes());
    let span = (hi as i128 - lo as i128 + 1) as u128;
    if span > u64::MAX as u128 {
        let v = raw(seed, key, *counter);
        *counter += 1;
        return v as i64;
    }
    let span = span as u64;
    let zone = u64::MAX - (u64::MAX % span);
    loop {
        let v = raw(seed, key, *counter);
        *counter += 1;
        if v < zone {
            return (lo as i128 + (v % span) as i128) as i64;
        }
    }
}

impl RandomSource {
    pub fn seeded(seed: u64) -> Self {
        RandomSource {
            mode: Mode::Live {
                seed,
                counters: BTreeMap::new(),
            },
            drawn: Vec::new(),
            diverged: None,
        }
    }

    pub fn replaying(records: Vec<DrawRecord>) -> Self {
        RandomSource {
            mode: Mode::Replay {
                queue: records.into(),
            },
            drawn: Vec::new(),
            diverged: None,
        }
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.mode, Mode::Replay { .. })
    }

    /// Draws an integer in `[lo, hi]` (bounds swapped if reversed).
    pub fn draw(
        &mut self,
        tick: Tick,
        stream: &str,
        lo: i64,
        hi: i64,
    ) -> Result<i64, ReplayDivergence> {
        if let Some(d) = &self.diverged {
            return Err(d.clone());
        }
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let index = self.drawn.len();
        let value = match &mut self.mode {
            Mode::Live { seed, counters } => {
                let counter = counters.entry(stream.to_string()).or_insert(0);
                uniform(*seed, stream, counter, lo, hi)
            }
            Mode::Replay { queue } => match queue.pop_front() {
                Some(r) if r.tick == tick && r.stream == stream && r.lo == lo && r.hi == hi => {
                    r.value
                }
                Some(expected) => {
                    return Err(self.fail(ReplayDivergence::Mismatch {
                        index,
                        expected,
                        tick,
                        stream: stream.to_string(),
                        lo,
                        hi,
                    }))
                }
                None => {
                    return Err(self.fail(ReplayDivergence::Exhausted {
                        index,
                        tick,
                        stream: stream.to_string(),
                    }))
                }
            },
        };
        let record = DrawRecord {
            tick,
            stream: stream.to_string(),
            lo,
            hi,
            value,
        };
        self.drawn.push(record);
        Ok(value)
    }

    fn fail(&mut self, d: ReplayDivergence) -> ReplayDivergence {
        self.diverged = Some(d.clone());
        d
    }

    /// The first divergence seen, if any. Sticky: once diverged, every
    /// further draw fails too.
    pub fn divergence(&self) -> Option<&ReplayDivergence> {
        self.diverged.as_ref()
    }

    /// Checks that a replay consumed every recorded draw.
    pub fn finish(&mut self) -> Result<(), ReplayDivergence> {
        if let Some(d) = &self.diverged {
            return Err(d.clone());
        }
        match &self.mode {
            Mode::Replay { queue } if !queue.is_empty() => {
                Err(self.fail(ReplayDivergence::Unused {
                    remaining: queue.len(),
                }))
            }
            _ => Ok(()),
        }
    }

    /// Every draw made so far, in order.
    pub fn drawn(&self) -> &[DrawRecord] {
        &self.drawn
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_values() {
        let mut a = RandomSource::seeded(7);
        let mut b = RandomSource::seeded(7);
        for i in 0..100 {
            assert_eq!(a.draw(i, "s", 0, 9).unwrap(), b.draw(i, "s", 0, 9).unwrap());
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RandomSource::seeded(7);
        let mut b = RandomSource::seeded(7);
        let xs: Vec<i64> = (0..20).map(|i| a.draw(i, "x", 0, 1000).unwrap()).collect();
        let ys: Vec<i64> = (0..20)
            .map(|i| {
                b.draw(i, "other", 0, 1000).unwrap();
                b.draw(i, "x", 0, 1000).unwrap()
            })
            .collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn values_stay_in_range_and_cover_it() {
        let mut r = RandomSource::seeded(1);
        let mut seen = [false; 7];
        for i in 0..500 {
            let v = r.draw(i, "d", -3, 3).unwrap();
            assert!((-3..=3).contains(&v));
            seen[(v + 3) as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
        let v = r.draw(0, "full", i64::MIN, i64::MAX).unwrap();
        let _ = v;
        assert_eq!(r.draw(0, "one", 5, 5).unwrap(), 5);
    }

    #[test]
    fn replay_reproduces_and_detects_divergence() {
        let mut live = RandomSource::seeded(99);
        for i in 0..10 {
            live.draw(i, "p", 1, 6).unwrap();
        }
        let recorded = live.drawn().to_vec();

        let mut again = RandomSource::replaying(recorded.clone());
        for (i, r) in recorded.iter().enumerate() {
            assert_eq!(again.draw(i as u64, "p", 1, 6).unwrap(), r.value);
        }
        again.finish().unwrap();

        let mut wrong = RandomSource::replaying(recorded.clone());
        assert!(matches!(
            wrong.draw(0, "q", 1, 6),
            Err(ReplayDivergence::Mismatch { index: 0, .. })
        ));
        assert!(wrong.draw(1, "p", 1, 6).is_err());

        let mut short = RandomSource::replaying(recorded);
        short.draw(0, "p", 1, 6).unwrap();
        assert!(matches!(
            short.finish(),
            Err(ReplayDivergence::Unused { remaining: 9 })
        ));
    }
}

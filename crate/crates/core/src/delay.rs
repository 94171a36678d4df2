//! Delay schedules and the feedback-release buffer.
//!
//! Feedback of round `t` with delay `d_t` is released at round `t + d_t - 1`;
//! `d_t = 1` means it arrives in the same round. Rounds are 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySchedule {
    delays: Vec<usize>,
    dmax: usize,
}

impl DelaySchedule {
    /// Wrap an explicit (possibly adversarial) schedule.
    pub fn from_delays(delays: Vec<usize>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::InvalidParameter("delay schedule is empty".into()));
        }
        if delays.contains(&0) {
            return Err(Error::InvalidParameter("delays must be >= 1".into()));
        }
        let dmax = *delays.iter().max().expect("non-empty");
        Ok(Self { delays, dmax })
    }

    /// `d_t` i.i.d. uniform on `{1, ..., dmax}`.
    pub fn uniform(horizon: usize, dmax: usize, seed: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if dmax == 0 {
            return Err(Error::InvalidParameter("dmax must be >= 1".into()));
        }
        let mut rng = seed::rng(seed);
        let delays = (0..horizon).map(|_| rng.random_range(1..=dmax)).collect();
        Ok(Self { delays, dmax })
    }

    /// The no-delay schedule `d_t = 1`.
    pub fn immediate(horizon: usize) -> Self {
        Self { delays: vec![1; horizon], dmax: 1 }
    }

    pub fn horizon(&self) -> usize {
        self.delays.len()
    }

    pub fn dmax(&self) -> usize {
        self.dmax
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// Delay of round `t` (1-based).
    pub fn delay(&self, t: usize) -> usize {
        self.delays[t - 1]
    }

    pub fn release_round(&self, t: usize) -> usize {
        t + self.delay(t) - 1
    }

    /// `B = sum_t d_t`, counting scheduled (not necessarily delivered) delay.
    pub fn total_delay(&self) -> usize {
        self.delays.iter().sum()
    }

    /// Rounds `s <= t` whose feedback is still unreleased at the end of round `t`.
    pub fn outstanding_count(&self, t: usize) -> usize {
        (1..=t.min(self.horizon())).filter(|&s| self.release_round(s) > t).count()
    }

    /// `sum_{s < t} 1{s + d_s > t}`: rounds whose feedback has not reached
    /// the oracle when round `t` is predicted.
    pub fn missing_before(&self, t: usize) -> usize {
        (1..t.min(self.horizon() + 1)).filter(|&s| s + self.delay(s) > t).count()
    }

    /// `sum_{s <= t} 1{s + d_s > t}`.
    pub fn missing_through(&self, t: usize) -> usize {
        (1..=t.min(self.horizon())).filter(|&s| s + self.delay(s) > t).count()
    }

    /// `F_t` for every round `1..=horizon`; feedback released later is dropped.
    pub fn release_sets(&self) -> Vec<Vec<usize>> {
        let mut buf = FeedbackBuffer::new();
        for t in 1..=self.horizon() {
            buf.push(t, self.delay(t)).expect("fresh origins");
        }
        (1..=self.horizon()).map(|t| buf.release(t).expect("increasing rounds")).collect()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut delays = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if i == 0 {
                if line != "d" {
                    return Err(data_err(path, 1, format!("expected header `d`, found `{line}`")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let d: usize =
                line.parse().map_err(|_| data_err(path, i + 1, format!("not a positive integer: `{line}`")))?;
            if d == 0 {
                return Err(data_err(path, i + 1, "delay must be >= 1".into()));
            }
            delays.push(d);
        }
        Self::from_delays(delays)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "d")?;
        for d in &self.delays {
            writeln!(w, "{d}")?;
        }
        Ok(())
    }
}

fn data_err(path: &Path, line: usize, msg: String) -> Error {
    Error::Data { path: path.to_path_buf(), line, msg }
}

/// Pending feedback keyed by release round.
#[derive(Debug, Clone, Default)]
pub struct FeedbackBuffer {
    pending: BTreeMap<usize, Vec<usize>>,
    seen: BTreeSet<usize>,
    last_released: usize,
}

impl FeedbackBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register the feedback of round `origin`; returns its release round.
    pub fn push(&mut self, origin: usize, delay: usize) -> Result<usize> {
        if origin == 0 || delay == 0 {
            return Err(Error::Buffer(format!("invalid push (origin {origin}, delay {delay})")));
        }
        if !self.seen.insert(origin) {
            return Err(Error::Buffer(format!("origin {origin} pushed twice")));
        }
        let release = origin + delay - 1;
        self.pending.entry(release).or_default().push(origin);
        Ok(release)
    }

    /// `F_t`, sorted by origin. Rounds must be queried in increasing order.
    pub fn release(&mut self, t: usize) -> Result<Vec<usize>> {
        if t == 0 || t <= self.last_released {
            return Err(Error::Buffer(format!("release of round {t} after round {}", self.last_released)));
        }
        self.last_released = t;
        let mut out = self.pending.remove(&t).unwrap_or_default();
        out.sort_unstable();
        Ok(out)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }
}

/// Per-agent schedules for the distributed setting.
#[derive(Debug, Clone)]
pub struct AgentSchedules {
    pub schedules: Vec<DelaySchedule>,
}

impl AgentSchedules {
    /// `n` independent uniform schedules with derived seeds.
    pub fn uniform(n: usize, horizon: usize, dmax: usize, seed: u64) -> Result<Self> {
        let schedules = (0..n)
            .map(|i| DelaySchedule::uniform(horizon, dmax, seed::derive(seed, &[0x6465_6c61, i as u64])))
            .collect::<Result<_>>()?;
        Ok(Self { schedules })
    }

    /// `delayed` agents chosen without replacement get uniform `{1..dmax}`
    /// delays; the rest receive immediate feedback.
    pub fn with_delayed_agents(n: usize, horizon: usize, dmax: usize, delayed: usize, seed: u64) -> Result<Self> {
        if delayed > n {
            return Err(Error::InvalidParameter(format!("{delayed} delayed agents out of {n}")));
        }
        let chosen = select_agents(n, delayed, seed);
        let schedules = (0..n)
            .map(|i| {
                if chosen.contains(&i) {
                    DelaySchedule::uniform(horizon, dmax, seed::derive(seed, &[0x6465_6c61, i as u64]))
                } else {
                    Ok(DelaySchedule::immediate(horizon))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { schedules })
    }

    /// `B = (1/n) sum_i B_i`.
    pub fn mean_total_delay(&self) -> f64 {
        let n = self.schedules.len() as f64;
        self.schedules.iter().map(|s| s.total_delay() as f64).sum::<f64>() / n
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }
}

/// Sorted sample of `k` distinct agents from `0..n`.
pub fn select_agents(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive(seed, &[0x7365_6c65]));
    let mut chosen = rand::seq::index::sample(&mut rng, n, k.min(n)).into_vec();
    chosen.sort_unstable();
    chosen
}

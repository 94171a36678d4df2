//! Centralized delayed Meta-Frank-Wolfe.
//!
//! Each round runs `K` Frank-Wolfe steps, the `k`-th driven by its own
//! online linear oracle. The sub-iterates of a round are kept until that
//! round's feedback is released; on release the oracle `k` receives
//! `g_{t,k} = sum_{s in F_t} grad f_s(x_{s,k})`.

use std::collections::BTreeMap;

use crate::delay::{DelaySchedule, FeedbackBuffer};
use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::linalg::{add_assign, convex_step};
use crate::losses::{LossFunction, LossStream};
use crate::metrics::RunTrace;
use crate::oracle::{FtplOracle, OnlineLinearOracle};
use crate::seed;

/// `eta_k = min(1, A / k)`, `k` 1-based.
#[inline]
pub fn step_size(a: f64, k: usize) -> f64 {
    (a / k as f64).min(1.0)
}

/// `ceil(sqrt(T))`.
pub fn sub_iterations(horizon: usize) -> usize {
    let mut k = (horizon as f64).sqrt().floor() as usize;
    while k * k < horizon {
        k += 1;
    }
    k.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgoParams {
    pub horizon: usize,
    /// Number of Frank-Wolfe sub-iterations (and oracles) per round.
    pub k: usize,
    pub a: f64,
    pub zeta: f64,
}

impl AlgoParams {
    /// `K = ceil(sqrt T)`, `A = max(3, G/(beta D))`, `zeta = 1/(G sqrt B)`.
    pub fn centralized(
        horizon: usize,
        lipschitz: f64,
        smoothness: f64,
        diameter: f64,
        total_delay: f64,
    ) -> Result<Self> {
        if !(lipschitz > 0.0 && diameter > 0.0 && total_delay > 0.0) {
            return Err(Error::InvalidParameter("G, D and B must be positive".into()));
        }
        let a = 3.0f64.max(lipschitz / (smoothness * diameter));
        let params = Self { horizon, k: sub_iterations(horizon), a, zeta: 1.0 / (lipschitz * total_delay.sqrt()) };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        if !(self.a >= 3.0) {
            return Err(Error::InvalidParameter(format!("A must be >= 3, got {}", self.a)));
        }
        if !(self.zeta.is_finite() && self.zeta > 0.0) {
            return Err(Error::InvalidParameter(format!("zeta must be positive, got {}", self.zeta)));
        }
        Ok(())
    }

    pub fn eta(&self, k: usize) -> f64 {
        step_size(self.a, k)
    }
}

/// How `x_{t,1}` is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum InitPolicy {
    /// `lmo(0)`, the documented zero-gradient vertex.
    #[default]
    ZeroVertex,
    /// The decision played in the previous round (`lmo(0)` in round 1).
    PreviousDecision,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub init: InitPolicy,
    pub record_decisions: bool,
}

#[derive(Debug, Clone)]
pub struct Delmfw {
    set: ConstraintSet,
    params: AlgoParams,
    oracles: Vec<FtplOracle>,
    /// Sub-iterates `x_{s,1..K}` of rounds whose feedback is still pending.
    history: BTreeMap<usize, Vec<Vec<f64>>>,
    buffer: FeedbackBuffer,
    init: InitPolicy,
    last_decision: Option<Vec<f64>>,
    last_predicted: usize,
    released: std::collections::BTreeSet<usize>,
}

impl Delmfw {
    /// Oracle `k` is seeded with `oracle_seed(seed, 0, k)`.
    pub fn new(set: ConstraintSet, params: AlgoParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let oracles = (1..=params.k)
            .map(|k| FtplOracle::new(set.clone(), params.zeta, seed::oracle_seed(seed, 0, k)))
            .collect::<Result<_>>()?;
        Ok(Self::with_oracles(set, params, oracles))
    }

    pub fn with_oracles(set: ConstraintSet, params: AlgoParams, oracles: Vec<FtplOracle>) -> Self {
        assert_eq!(oracles.len(), params.k, "one oracle per sub-iteration");
        Self {
            set,
            params,
            oracles,
            history: BTreeMap::new(),
            buffer: FeedbackBuffer::new(),
            init: InitPolicy::ZeroVertex,
            last_decision: None,
            last_predicted: 0,
            released: Default::default(),
        }
    }

    pub fn with_init(mut self, init: InitPolicy) -> Self {
        self.init = init;
        self
    }

    pub fn params(&self) -> &AlgoParams {
        &self.params
    }

    pub fn oracles(&self) -> &[FtplOracle] {
        &self.oracles
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    fn initial_point(&self) -> Vec<f64> {
        match (&self.init, &self.last_decision) {
            (InitPolicy::PreviousDecision, Some(x)) => x.clone(),
            _ => self.set.lmo_unchecked(&vec![0.0; self.set.dim()]),
        }
    }

    /// Prediction block of round `t`; returns `x_t = x_{t,K+1}`.
    pub fn predict(&mut self, t: usize) -> Result<Vec<f64>> {
        if t <= self.last_predicted {
            return Err(Error::DuplicateRound(t));
        }
        let mut x = self.initial_point();
        let mut subs = Vec::with_capacity(self.params.k);
        for (k, oracle) in self.oracles.iter().enumerate() {
            let v = oracle.query();
            let eta = self.params.eta(k + 1);
            let next = convex_step(&x, &v, eta);
            subs.push(std::mem::replace(&mut x, next));
        }
        self.history.insert(t, subs);
        self.last_predicted = t;
        self.last_decision = Some(x.clone());
        Ok(x)
    }

    /// Sub-iterates `x_{t,1..K}` of a round still awaiting feedback.
    pub fn sub_iterates(&self, t: usize) -> Option<&[Vec<f64>]> {
        self.history.get(&t).map(Vec::as_slice)
    }

    /// Register round `t`'s feedback delay. Feedback that would arrive after
    /// the horizon is dropped together with its sub-iterates.
    pub fn schedule_feedback(&mut self, t: usize, delay: usize) -> Result<()> {
        let release = self.buffer.push(t, delay)?;
        if release > self.params.horizon {
            self.history.remove(&t);
        }
        Ok(())
    }

    /// `F_t` from the internal buffer.
    pub fn release(&mut self, t: usize) -> Result<Vec<usize>> {
        self.buffer.release(t)
    }

    /// Update block: feed `g_{t,k} = sum_s grad f_s(x_{s,k})` to oracle `k`.
    /// An empty release set leaves the state untouched.
    pub fn absorb(&mut self, released: &[(usize, &LossFunction)]) -> Result<()> {
        if released.is_empty() {
            return Ok(());
        }
        for (s, _) in released {
            if self.released.contains(s) {
                return Err(Error::Buffer(format!("origin {s} released twice")));
            }
            if !self.history.contains_key(s) {
                return Err(Error::UnknownOrigin(*s));
            }
        }
        let m = self.set.dim();
        for (k, oracle) in self.oracles.iter_mut().enumerate() {
            let mut g = vec![0.0; m];
            for (s, f) in released {
                let x_sk = &self.history[s][k];
                add_assign(&mut g, &f.grad(x_sk)?);
            }
            oracle.feedback(&g)?;
        }
        for (s, _) in released {
            self.history.remove(s);
            self.released.insert(*s);
        }
        Ok(())
    }
}

/// Run the delayed algorithm over a full horizon.
pub fn delmfw_run(
    set: &ConstraintSet,
    stream: &LossStream,
    schedule: &DelaySchedule,
    params: AlgoParams,
    seed: u64,
    opts: RunOptions,
) -> Result<RunTrace> {
    check_lengths(stream, schedule, &params)?;
    let mut state = Delmfw::new(set.clone(), params, seed)?.with_init(opts.init);
    let mut trace = RunTrace::default();
    let mut decisions = opts.record_decisions.then(Vec::new);
    for t in 1..=params.horizon {
        let x = state.predict(t)?;
        trace.agent_losses.push(vec![stream.at(t).value(&x)?]);
        state.schedule_feedback(t, schedule.delay(t))?;
        let released = state.release(t)?;
        let pairs: Vec<_> = released.iter().map(|&s| (s, stream.at(s))).collect();
        state.absorb(&pairs)?;
        debug_assert!(state.history_len() <= schedule.outstanding_count(t));
        if let Some(d) = decisions.as_mut() {
            d.push(vec![x]);
        }
    }
    trace.decisions = decisions;
    annotate(&mut trace, "delmfw", &params, schedule.total_delay() as f64, seed);
    Ok(trace)
}

/// Non-delayed Meta-Frank-Wolfe: every round's gradients reach the oracles
/// at the end of that same round. Shares oracle seeding with [`delmfw_run`].
pub fn meta_fw_run(set: &ConstraintSet, stream: &LossStream, params: AlgoParams, seed: u64) -> Result<RunTrace> {
    params.validate()?;
    let mut oracles: Vec<FtplOracle> = (1..=params.k)
        .map(|k| FtplOracle::new(set.clone(), params.zeta, seed::oracle_seed(seed, 0, k)))
        .collect::<Result<_>>()?;
    let start = set.lmo(&vec![0.0; set.dim()])?;
    let mut trace = RunTrace::default();
    for t in 1..=params.horizon {
        let mut x = start.clone();
        let mut subs = Vec::with_capacity(params.k);
        for (k, oracle) in oracles.iter().enumerate() {
            let next = convex_step(&x, &oracle.query(), params.eta(k + 1));
            subs.push(std::mem::replace(&mut x, next));
        }
        let f = stream.at(t);
        trace.agent_losses.push(vec![f.value(&x)?]);
        for (oracle, x_k) in oracles.iter_mut().zip(&subs) {
            oracle.feedback(&f.grad(x_k)?)?;
        }
    }
    annotate(&mut trace, "meta_fw", &params, params.horizon as f64, seed);
    Ok(trace)
}

pub(crate) fn check_lengths(stream: &LossStream, schedule: &DelaySchedule, params: &AlgoParams) -> Result<()> {
    if stream.horizon() < params.horizon || schedule.horizon() < params.horizon {
        return Err(Error::InvalidParameter(format!(
            "horizon {} exceeds stream ({}) or schedule ({}) length",
            params.horizon,
            stream.horizon(),
            schedule.horizon()
        )));
    }
    Ok(())
}

pub(crate) fn annotate(trace: &mut RunTrace, algorithm: &str, params: &AlgoParams, total_delay: f64, seed: u64) {
    trace.set_meta("algorithm", algorithm);
    trace.set_meta("T", params.horizon);
    trace.set_meta("K", params.k);
    trace.set_meta("A", params.a);
    trace.set_meta("zeta", params.zeta);
    trace.set_meta("B", total_delay);
    trace.set_meta("seed", seed);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> ConstraintSet {
        ConstraintSet::l1_ball(1.0, 2).unwrap()
    }

    #[test]
    fn parameter_choices() {
        let p = AlgoParams::centralized(100, 1.0, 1.0, 2.0, 7.0).unwrap();
        assert_eq!(p.k, 10);
        assert_eq!(p.a, 3.0);
        assert!((p.zeta - 1.0 / 7f64.sqrt()).abs() < 1e-15);
        assert!((p.zeta - 0.37796).abs() < 1e-5);
        assert_eq!(sub_iterations(101), 11);
        assert_eq!(sub_iterations(1), 1);
        let bad = AlgoParams { horizon: 5, k: 0, a: 3.0, zeta: 1.0 };
        assert!(Delmfw::new(set(), bad, 0).is_err());
    }

    #[test]
    fn step_sizes() {
        assert_eq!(step_size(3.0, 1), 1.0);
        assert_eq!(step_size(3.0, 3), 1.0);
        assert_eq!(step_size(3.0, 4), 0.75);
    }

    #[test]
    fn single_step_plays_oracle_output() {
        let params = AlgoParams { horizon: 3, k: 1, a: 3.0, zeta: 1.0 };
        let oracle = FtplOracle::with_noise(set(), 1.0, vec![0.2, 0.5]);
        let mut s = Delmfw::with_oracles(set(), params, vec![oracle.clone()]);
        assert_eq!(s.predict(1).unwrap(), oracle.query());
        assert!(matches!(s.predict(1), Err(Error::DuplicateRound(1))));
    }

    #[test]
    fn identical_oracles_yield_their_vertex() {
        let params = AlgoParams { horizon: 3, k: 5, a: 3.0, zeta: 1.0 };
        let o = FtplOracle::with_noise(set(), 1.0, vec![0.9, 0.1]);
        let mut s = Delmfw::with_oracles(set(), params, vec![o.clone(); 5]);
        assert_eq!(s.predict(1).unwrap(), o.query());
    }

    #[test]
    fn empty_release_is_noop() {
        let params = AlgoParams { horizon: 3, k: 2, a: 3.0, zeta: 1.0 };
        let mut s = Delmfw::new(set(), params, 1).unwrap();
        s.predict(1).unwrap();
        let before: Vec<_> = s.oracles().iter().map(|o| o.accum().to_vec()).collect();
        s.absorb(&[]).unwrap();
        let after: Vec<_> = s.oracles().iter().map(|o| o.accum().to_vec()).collect();
        assert_eq!(before, after);
        assert_eq!(s.history_len(), 1);
    }

    #[test]
    fn single_release_feeds_quadratic_gradient() {
        let params = AlgoParams { horizon: 3, k: 2, a: 3.0, zeta: 1.0 };
        let mut s = Delmfw::new(set(), params, 1).unwrap();
        s.predict(1).unwrap();
        let subs = s.sub_iterates(1).unwrap().to_vec();
        let f = LossFunction::Quadratic { target: vec![0.25, -0.5] };
        s.absorb(&[(1, &f)]).unwrap();
        for (o, x) in s.oracles().iter().zip(&subs) {
            assert_eq!(o.accum(), &[x[0] - 0.25, x[1] + 0.5]);
        }
        assert_eq!(s.history_len(), 0);
        assert!(matches!(s.absorb(&[(1, &f)]), Err(Error::Buffer(_))));
        assert!(matches!(s.absorb(&[(9, &f)]), Err(Error::UnknownOrigin(9))));
    }
}

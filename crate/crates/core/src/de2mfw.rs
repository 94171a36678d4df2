//! Distributed delayed Meta-Frank-Wolfe over a gossip network.
//!
//! All agents advance in lockstep. In the prediction block every sub-step
//! mixes the agents' current iterates through `W` before the Frank-Wolfe
//! step. In the update block each agent's delayed gradients enter a
//! gradient-tracking recursion whose mixed surrogate `d^i_{t,k}` is fed to
//! oracle `k` of agent `i`.
//!
//! Cross-agent reads in a sub-step only see values committed at the end of
//! the previous sub-step, so the result does not depend on agent order.

use std::collections::BTreeMap;

use crate::delay::{AgentSchedules, FeedbackBuffer};
use crate::delmfw::{step_size, sub_iterations, AlgoParams, RunOptions};
use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::linalg::{add_assign, convex_step, dist, mean_of};
use crate::losses::LossStream;
use crate::metrics::{consensus_error, global_loss, RunTrace};
use crate::network::{algorithm_constants, DistConstants, GossipMatrix};
use crate::oracle::{FtplOracle, OnlineLinearOracle};
use crate::seed;

/// What an agent without released feedback does with its mixed surrogate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EmptyFeedbackPolicy {
    /// Feed `d^i_{t,k}` to the oracles anyway; it carries neighbours' feedback.
    #[default]
    FeedAlways,
    /// Skip oracle feedback for agents with `F^i_t` empty.
    SkipOracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct De2mfwParams {
    pub algo: AlgoParams,
    pub empty_feedback: EmptyFeedbackPolicy,
}

impl De2mfwParams {
    /// `K = ceil(sqrt T)`, `A` from [`algorithm_constants`], `zeta = 1/(G sqrt B)`
    /// with `B` the mean per-agent total delay.
    pub fn distributed(
        horizon: usize,
        gossip: &GossipMatrix,
        lipschitz: f64,
        smoothness: f64,
        diameter: f64,
        mean_total_delay: f64,
    ) -> Result<(Self, DistConstants)> {
        let consts = algorithm_constants(gossip, diameter, lipschitz, smoothness)?;
        if !(mean_total_delay > 0.0) {
            return Err(Error::InvalidParameter("B must be positive".into()));
        }
        let algo = AlgoParams {
            horizon,
            k: sub_iterations(horizon),
            a: consts.a,
            zeta: 1.0 / (lipschitz * mean_total_delay.sqrt()),
        };
        algo.validate()?;
        Ok((Self { algo, empty_feedback: EmptyFeedbackPolicy::default() }, consts))
    }
}

impl From<AlgoParams> for De2mfwParams {
    fn from(algo: AlgoParams) -> Self {
        Self { algo, empty_feedback: EmptyFeedbackPolicy::default() }
    }
}

#[derive(Debug, Clone)]
struct Agent {
    oracles: Vec<FtplOracle>,
    /// `x^i_{s,1..K+1}` of rounds with pending feedback.
    history: BTreeMap<usize, Vec<Vec<f64>>>,
    buffer: FeedbackBuffer,
}

/// Per-`(t, k)` diagnostics, indexed `[t-1][k-1]`.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// `max_i ||y^i_{t,k} - xbar_{t,k}||`.
    pub consensus: Vec<Vec<f64>>,
    /// `||xbar_{t,k+1} - xbar_{t,k} - eta_k (vbar_{t,k} - xbar_{t,k})||_inf`.
    pub mean_recursion: Vec<Vec<f64>>,
    /// `||mean_i d^i_{t,k} - mean_i sum_{s in F^i_t} grad f^i_s(x^i_{s,k})||`.
    pub tracking_average: Vec<Vec<f64>>,
    /// `max_i ||d^i_{t,k} - grad F_{t,k}||` with `grad F_{t,k}` the tracked mean.
    pub tracking_error: Vec<Vec<f64>>,
    /// Whether any agent had feedback released in round `t`.
    pub had_feedback: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct De2mfw {
    set: ConstraintSet,
    params: De2mfwParams,
    gossip: GossipMatrix,
    agents: Vec<Agent>,
    last_predicted: usize,
    last_absorbed: usize,
    diagnostics: Option<Diagnostics>,
}

impl De2mfw {
    /// Oracle `k` of agent `i` is seeded with `oracle_seed(seed, i, k)`.
    pub fn new(set: ConstraintSet, gossip: GossipMatrix, params: De2mfwParams, seed: u64) -> Result<Self> {
        params.algo.validate()?;
        let agents = (0..gossip.n())
            .map(|i| {
                let oracles = (1..=params.algo.k)
                    .map(|k| FtplOracle::new(set.clone(), params.algo.zeta, seed::oracle_seed(seed, i, k)))
                    .collect::<Result<_>>()?;
                Ok(Agent { oracles, history: BTreeMap::new(), buffer: FeedbackBuffer::new() })
            })
            .collect::<Result<_>>()?;
        Ok(Self { set, params, gossip, agents, last_predicted: 0, last_absorbed: 0, diagnostics: None })
    }

    /// `oracles[i]` holds agent `i`'s `K` oracles.
    pub fn with_oracles(
        set: ConstraintSet,
        gossip: GossipMatrix,
        params: De2mfwParams,
        oracles: Vec<Vec<FtplOracle>>,
    ) -> Result<Self> {
        params.algo.validate()?;
        if oracles.len() != gossip.n() || oracles.iter().any(|o| o.len() != params.algo.k) {
            return Err(Error::InvalidParameter(format!(
                "need {} agents with {} oracles each",
                gossip.n(),
                params.algo.k
            )));
        }
        let agents = oracles
            .into_iter()
            .map(|oracles| Agent { oracles, history: BTreeMap::new(), buffer: FeedbackBuffer::new() })
            .collect();
        Ok(Self { set, params, gossip, agents, last_predicted: 0, last_absorbed: 0, diagnostics: None })
    }

    pub fn with_diagnostics(mut self) -> Self {
        self.diagnostics = Some(Diagnostics::default());
        self
    }

    pub fn diagnostics(&self) -> Option<&Diagnostics> {
        self.diagnostics.as_ref()
    }

    pub fn take_diagnostics(&mut self) -> Option<Diagnostics> {
        self.diagnostics.take()
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn params(&self) -> &De2mfwParams {
        &self.params
    }

    pub fn oracles(&self, agent: usize) -> &[FtplOracle] {
        &self.agents[agent].oracles
    }

    pub fn history_len(&self, agent: usize) -> usize {
        self.agents[agent].history.len()
    }

    /// `x^i_{t,1..K+1}` for a round with pending feedback.
    pub fn sub_iterates(&self, agent: usize, t: usize) -> Option<&[Vec<f64>]> {
        self.agents[agent].history.get(&t).map(Vec::as_slice)
    }

    /// Prediction block of round `t`; returns `x^i_t` for every agent.
    pub fn predict_round(&mut self, t: usize) -> Result<Vec<Vec<f64>>> {
        if t <= self.last_predicted {
            return Err(Error::DuplicateRound(t));
        }
        let n = self.n();
        let k_max = self.params.algo.k;
        let start = self.set.lmo_unchecked(&vec![0.0; self.set.dim()]);
        let mut xs = vec![start; n];
        let mut subs: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(k_max + 1); n];
        let mut consensus = Vec::new();
        let mut mean_rec = Vec::new();
        for k in 1..=k_max {
            let vs: Vec<Vec<f64>> = self.agents.iter().map(|a| a.oracles[k - 1].query()).collect();
            let ys = self.gossip.mix(&xs);
            let eta = step_size(self.params.algo.a, k);
            let next: Vec<Vec<f64>> = ys.iter().zip(&vs).map(|(y, v)| convex_step(y, v, eta)).collect();
            if self.diagnostics.is_some() {
                consensus.push(consensus_error(&ys, &xs));
                let xbar = mean_of(&xs);
                let vbar = mean_of(&vs);
                let nbar = mean_of(&next);
                let resid = xbar
                    .iter()
                    .zip(&vbar)
                    .zip(&nbar)
                    .map(|((xb, vb), nb)| (nb - (xb + eta * (vb - xb))).abs())
                    .fold(0.0, f64::max);
                mean_rec.push(resid);
            }
            for (sub, x) in subs.iter_mut().zip(std::mem::replace(&mut xs, next)) {
                sub.push(x);
            }
        }
        for (sub, x) in subs.iter_mut().zip(&xs) {
            sub.push(x.clone());
        }
        for (agent, sub) in self.agents.iter_mut().zip(subs) {
            agent.history.insert(t, sub);
        }
        if let Some(d) = self.diagnostics.as_mut() {
            d.consensus.push(consensus);
            d.mean_recursion.push(mean_rec);
        }
        self.last_predicted = t;
        Ok(xs)
    }

    /// Register every agent's delay for round `t`; feedback arriving after
    /// the horizon is dropped with its sub-iterates.
    pub fn schedule_feedback(&mut self, t: usize, delays: &[usize]) -> Result<()> {
        if delays.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: delays.len() });
        }
        let horizon = self.params.algo.horizon;
        for (agent, &d) in self.agents.iter_mut().zip(delays) {
            if agent.buffer.push(t, d)? > horizon {
                agent.history.remove(&t);
            }
        }
        Ok(())
    }

    /// Update block of round `t`: release, gradient tracking and oracle feedback.
    pub fn absorb_round(&mut self, t: usize, streams: &[LossStream]) -> Result<()> {
        if streams.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: streams.len() });
        }
        if t <= self.last_absorbed || t > self.last_predicted {
            return Err(Error::Buffer(format!("absorb of round {t} out of order")));
        }
        self.last_absorbed = t;
        let k_max = self.params.algo.k;
        let m = self.set.dim();
        let n = self.n();

        let mut released = Vec::with_capacity(n);
        for agent in self.agents.iter_mut() {
            let r = agent.buffer.release(t)?;
            for s in &r {
                if !agent.history.contains_key(s) {
                    return Err(Error::UnknownOrigin(*s));
                }
            }
            released.push(r);
        }

        // local[i][k] = sum_{s in F^i_t} grad f^i_s(x^i_{s,k+1}), k = 0..=K
        let mut local = Vec::with_capacity(n);
        for (i, agent) in self.agents.iter().enumerate() {
            let mut per_k = vec![vec![0.0; m]; k_max + 1];
            for &s in &released[i] {
                let f = streams[i].at(s);
                for (acc, x) in per_k.iter_mut().zip(&agent.history[&s]) {
                    add_assign(acc, &f.grad(x)?);
                }
            }
            for acc in &per_k {
                crate::linalg::check_finite(acc, "local gradient")?;
            }
            local.push(per_k);
        }

        let mut g: Vec<Vec<f64>> = local.iter().map(|l| l[0].clone()).collect();
        let mut avg_resid = Vec::new();
        let mut track_err = Vec::new();
        for k in 0..k_max {
            let d = self.gossip.mix(&g);
            if self.diagnostics.is_some() {
                let tracked: Vec<Vec<f64>> = local.iter().map(|l| l[k].clone()).collect();
                let grad_f = mean_of(&tracked);
                avg_resid.push(dist(&mean_of(&d), &grad_f));
                track_err.push(d.iter().map(|di| dist(di, &grad_f)).fold(0.0, f64::max));
            }
            // g_{k+1} = L_{k+1} + (d_k - L_k): the tracking recursion with the
            // local gradient difference regrouped.
            g = d
                .iter()
                .zip(&local)
                .map(|(di, l)| {
                    l[k + 1].iter().zip(di.iter().zip(&l[k])).map(|(next, (dv, cur))| next + (dv - cur)).collect()
                })
                .collect();
            for ((agent, di), rel) in self.agents.iter_mut().zip(&d).zip(&released) {
                if rel.is_empty() && self.params.empty_feedback == EmptyFeedbackPolicy::SkipOracle {
                    continue;
                }
                agent.oracles[k].feedback(di)?;
            }
        }
        for (agent, rel) in self.agents.iter_mut().zip(&released) {
            for s in rel {
                agent.history.remove(s);
            }
        }
        if let Some(diag) = self.diagnostics.as_mut() {
            diag.tracking_average.push(avg_resid);
            diag.tracking_error.push(track_err);
            diag.had_feedback.push(released.iter().any(|r| !r.is_empty()));
        }
        Ok(())
    }
}

/// Run the distributed algorithm over a full horizon.
pub fn de2mfw_run(
    set: &ConstraintSet,
    streams: &[LossStream],
    schedules: &AgentSchedules,
    gossip: &GossipMatrix,
    params: De2mfwParams,
    seed: u64,
    opts: RunOptions,
) -> Result<RunTrace> {
    Ok(de2mfw_run_inner(set, streams, schedules, gossip, params, seed, opts, false)?.0)
}

/// As [`de2mfw_run`], also returning per-`(t, k)` diagnostics and filling
/// the trace's consensus and tracking columns.
pub fn de2mfw_run_with_diagnostics(
    set: &ConstraintSet,
    streams: &[LossStream],
    schedules: &AgentSchedules,
    gossip: &GossipMatrix,
    params: De2mfwParams,
    seed: u64,
    opts: RunOptions,
) -> Result<(RunTrace, Diagnostics)> {
    let (trace, diag) = de2mfw_run_inner(set, streams, schedules, gossip, params, seed, opts, true)?;
    Ok((trace, diag.expect("diagnostics enabled")))
}

#[allow(clippy::too_many_arguments)]
fn de2mfw_run_inner(
    set: &ConstraintSet,
    streams: &[LossStream],
    schedules: &AgentSchedules,
    gossip: &GossipMatrix,
    params: De2mfwParams,
    seed: u64,
    opts: RunOptions,
    diagnostics: bool,
) -> Result<(RunTrace, Option<Diagnostics>)> {
    let n = gossip.n();
    let horizon = params.algo.horizon;
    if streams.len() != n || schedules.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{n} agents but {} streams and {} schedules",
            streams.len(),
            schedules.len()
        )));
    }
    for (s, d) in streams.iter().zip(&schedules.schedules) {
        crate::delmfw::check_lengths(s, d, &params.algo)?;
    }
    let mut run = De2mfw::new(set.clone(), gossip.clone(), params, seed)?;
    if diagnostics {
        run = run.with_diagnostics();
    }
    let mut trace = RunTrace::default();
    let mut decisions = opts.record_decisions.then(Vec::new);
    for t in 1..=horizon {
        let xs = run.predict_round(t)?;
        let losses = xs.iter().map(|x| global_loss(streams, t, x)).collect::<Result<_>>()?;
        trace.agent_losses.push(losses);
        let delays: Vec<usize> = schedules.schedules.iter().map(|s| s.delay(t)).collect();
        run.schedule_feedback(t, &delays)?;
        run.absorb_round(t, streams)?;
        if let Some(d) = decisions.as_mut() {
            d.push(xs);
        }
    }
    trace.decisions = decisions;
    let diag = run.take_diagnostics();
    if let Some(d) = &diag {
        let row_max = |rows: &Vec<Vec<f64>>| rows.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
        trace.consensus_max = Some(row_max(&d.consensus));
        trace.tracking_max = Some(row_max(&d.tracking_error));
    }
    crate::delmfw::annotate(&mut trace, "de2mfw", &params.algo, schedules.mean_total_delay(), seed);
    trace.set_meta("n", n);
    trace.set_meta("lambda2", gossip.lambda2());
    trace.set_meta("lambda_eff", gossip.lambda_eff());
    trace.set_meta("k0", gossip.k0());
    trace.set_meta(
        "empty_feedback",
        match params.empty_feedback {
            EmptyFeedbackPolicy::FeedAlways => "feed_always",
            EmptyFeedbackPolicy::SkipOracle => "skip_oracle",
        },
    );
    Ok((trace, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Topology, TopologyKind};

    fn path3() -> GossipMatrix {
        let t = Topology::from_edges(TopologyKind::Grid, 3, &[(0, 1), (1, 2)]).unwrap();
        GossipMatrix::metropolis(&t).unwrap()
    }

    #[test]
    fn gossip_of_path() {
        let y = path3().mix(&[vec![1.0], vec![2.0], vec![3.0]]);
        let expect = [4.0 / 3.0, 2.0, 8.0 / 3.0];
        for (yi, e) in y.iter().zip(expect) {
            assert!((yi[0] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_and_out_of_order_rounds() {
        let set = ConstraintSet::l1_ball(1.0, 2).unwrap();
        let params = AlgoParams { horizon: 3, k: 2, a: 3.0, zeta: 1.0 };
        let mut run = De2mfw::new(set, path3(), params.into(), 0).unwrap();
        run.predict_round(1).unwrap();
        assert!(matches!(run.predict_round(1), Err(Error::DuplicateRound(1))));
        let streams = vec![
            LossStream::new(vec![crate::losses::LossFunction::Quadratic { target: vec![0.0, 0.0] }; 3])
                .unwrap();
            3
        ];
        assert!(run.absorb_round(2, &streams).is_err());
        assert!(run.schedule_feedback(1, &[1, 1]).is_err());
    }

    #[test]
    fn empty_round_leaves_predictions_unchanged() {
        let set = ConstraintSet::l1_ball(1.0, 2).unwrap();
        let params = AlgoParams { horizon: 4, k: 3, a: 3.0, zeta: 1.0 };
        let mut run = De2mfw::new(set, path3(), params.into(), 5).unwrap();
        let streams = vec![
            LossStream::new(vec![crate::losses::LossFunction::Quadratic { target: vec![0.3, 0.1] }; 4])
                .unwrap();
            3
        ];
        let first = run.predict_round(1).unwrap();
        run.schedule_feedback(1, &[3, 3, 3]).unwrap();
        run.absorb_round(1, &streams).unwrap();
        let second = run.predict_round(2).unwrap();
        assert_eq!(first, second);
        for i in 0..3 {
            assert!(run.oracles(i).iter().all(|o| o.accum().iter().all(|&a| a == 0.0)));
        }
    }
}

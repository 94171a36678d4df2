//! Single-agent comparison algorithms under delayed feedback.
//!
//! * [`Dofw`]: online Frank-Wolfe on the regularized surrogate
//!   `Phi_t(x) = eta_reg <sum of released gradients, x> + ||x - x_1||^2`,
//!   one Frank-Wolfe step per round with exact line search.
//! * [`Dgd`]: projected gradient descent on the sum of released gradients.
//!
//! Gradients are evaluated at the decision played in their origin round.

use std::collections::BTreeMap;

use crate::delay::{DelaySchedule, FeedbackBuffer};
use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::linalg::{add_assign, check_dim, dot};
use crate::losses::LossStream;
use crate::metrics::RunTrace;

#[derive(Debug, Clone)]
pub struct Dofw {
    set: ConstraintSet,
    x: Vec<f64>,
    anchor: Vec<f64>,
    accum: Vec<f64>,
    eta_reg: f64,
}

impl Dofw {
    /// Starts at the set's center, which is also the regularization anchor.
    pub fn new(set: ConstraintSet, eta_reg: f64) -> Result<Self> {
        let anchor = set.center();
        Self::with_anchor(set, eta_reg, anchor)
    }

    pub fn with_anchor(set: ConstraintSet, eta_reg: f64, anchor: Vec<f64>) -> Result<Self> {
        if !(eta_reg.is_finite() && eta_reg > 0.0) {
            return Err(Error::InvalidParameter(format!("eta_reg must be positive, got {eta_reg}")));
        }
        check_dim(set.dim(), anchor.len())?;
        let accum = vec![0.0; set.dim()];
        Ok(Self { set, x: anchor.clone(), anchor, accum, eta_reg })
    }

    /// `D / (G sqrt T)`.
    pub fn default_eta_reg(diameter: f64, lipschitz: f64, horizon: usize) -> f64 {
        diameter / (lipschitz * (horizon as f64).sqrt())
    }

    pub fn decision(&self) -> &[f64] {
        &self.x
    }

    pub fn accum(&self) -> &[f64] {
        &self.accum
    }

    /// Absorb released gradients, then take one Frank-Wolfe step on the
    /// surrogate. Returns the next decision.
    pub fn round(&mut self, released: &[Vec<f64>]) -> Result<&[f64]> {
        for g in released {
            check_dim(self.set.dim(), g.len())?;
            add_assign(&mut self.accum, g);
        }
        let grad: Vec<f64> = self
            .accum
            .iter()
            .zip(self.x.iter().zip(&self.anchor))
            .map(|(a, (x, x1))| self.eta_reg * a + 2.0 * (x - x1))
            .collect();
        let v = self.set.lmo(&grad)?;
        let dir: Vec<f64> = v.iter().zip(&self.x).map(|(vi, xi)| vi - xi).collect();
        let curvature = 2.0 * dot(&dir, &dir);
        let step = if curvature > 0.0 { (-dot(&grad, &dir) / curvature).clamp(0.0, 1.0) } else { 0.0 };
        for (xi, di) in self.x.iter_mut().zip(&dir) {
            *xi += step * di;
        }
        Ok(&self.x)
    }
}

#[derive(Debug, Clone)]
pub struct Dgd {
    set: ConstraintSet,
    x: Vec<f64>,
    step: f64,
}

impl Dgd {
    pub fn new(set: ConstraintSet, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        let x = set.center();
        Ok(Self { set, x, step })
    }

    /// `D / (G sqrt(2B))`.
    pub fn default_step(diameter: f64, lipschitz: f64, total_delay: f64) -> f64 {
        diameter / (lipschitz * (2.0 * total_delay).sqrt())
    }

    pub fn decision(&self) -> &[f64] {
        &self.x
    }

    pub fn round(&mut self, released: &[Vec<f64>]) -> Result<&[f64]> {
        if released.is_empty() {
            return Ok(&self.x);
        }
        let mut g = vec![0.0; self.set.dim()];
        for r in released {
            check_dim(self.set.dim(), r.len())?;
            add_assign(&mut g, r);
        }
        let moved: Vec<f64> = self.x.iter().zip(&g).map(|(x, gi)| x - self.step * gi).collect();
        self.x = self.set.project(&moved)?;
        Ok(&self.x)
    }
}

/// Shared harness: play, store the played point until its feedback is
/// released, then hand the released gradients to `update`.
fn run_baseline<F>(
    stream: &LossStream,
    schedule: &DelaySchedule,
    horizon: usize,
    start: Vec<f64>,
    record: bool,
    mut update: F,
) -> Result<RunTrace>
where
    F: FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
{
    if stream.horizon() < horizon || schedule.horizon() < horizon {
        return Err(Error::InvalidParameter("stream or schedule shorter than horizon".into()));
    }
    let mut buffer = FeedbackBuffer::new();
    let mut played: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut x = start;
    let mut trace = RunTrace::default();
    let mut decisions = record.then(Vec::new);
    for t in 1..=horizon {
        let f = stream.at(t);
        trace.agent_losses.push(vec![f.value(&x)?]);
        if let Some(d) = decisions.as_mut() {
            d.push(vec![x.clone()]);
        }
        if buffer.push(t, schedule.delay(t))? <= horizon {
            played.insert(t, x.clone());
        }
        let grads = buffer
            .release(t)?
            .into_iter()
            .map(|s| {
                let xs = played.remove(&s).ok_or(Error::UnknownOrigin(s))?;
                stream.at(s).grad(&xs)
            })
            .collect::<Result<Vec<_>>>()?;
        x = update(&grads)?;
    }
    trace.decisions = decisions;
    Ok(trace)
}

pub fn dofw_run(
    set: &ConstraintSet,
    stream: &LossStream,
    schedule: &DelaySchedule,
    horizon: usize,
    eta_reg: f64,
    record: bool,
) -> Result<RunTrace> {
    let mut state = Dofw::new(set.clone(), eta_reg)?;
    let start = state.decision().to_vec();
    let mut trace = run_baseline(stream, schedule, horizon, start, record, |g| Ok(state.round(g)?.to_vec()))?;
    trace.set_meta("algorithm", "dofw");
    trace.set_meta("eta_reg", eta_reg);
    trace.set_meta("line_search", "exact");
    trace.set_meta("B", schedule.total_delay());
    trace.set_meta("T", horizon);
    Ok(trace)
}

pub fn dgd_run(
    set: &ConstraintSet,
    stream: &LossStream,
    schedule: &DelaySchedule,
    horizon: usize,
    step: f64,
    record: bool,
) -> Result<RunTrace> {
    let mut state = Dgd::new(set.clone(), step)?;
    let start = state.decision().to_vec();
    let mut trace = run_baseline(stream, schedule, horizon, start, record, |g| Ok(state.round(g)?.to_vec()))?;
    trace.set_meta("algorithm", "dgd");
    trace.set_meta("step", step);
    trace.set_meta("B", schedule.total_delay());
    trace.set_meta("T", horizon);
    Ok(trace)
}

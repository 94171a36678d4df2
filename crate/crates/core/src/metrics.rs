//! Run traces, the offline comparator, regret and consensus diagnostics.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::Result;
use crate::geometry::ConstraintSet;
use crate::linalg::{dist, mean_of};
use crate::losses::{LossFunction, LossStream};

/// Per-round record of a run.
///
/// `agent_losses[t][i]` is `F_t(x^i_t)`, the global loss at agent `i`'s
/// decision (for a centralized run there is one agent and `F_t = f_t`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub agent_losses: Vec<Vec<f64>>,
    /// `decisions[t][i]`, present when recording was requested.
    pub decisions: Option<Vec<Vec<Vec<f64>>>>,
    /// Per-round `max_k max_i ||y^i_{t,k} - xbar_{t,k}||`.
    pub consensus_max: Option<Vec<f64>>,
    /// Per-round `max_k max_i ||d^i_{t,k} - grad F_{t,k}||`.
    pub tracking_max: Option<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.agent_losses.len()
    }

    pub fn agents(&self) -> usize {
        self.agent_losses.first().map_or(0, Vec::len)
    }

    /// Worst-agent loss per round (the loss itself when centralized).
    pub fn inst_loss(&self) -> Vec<f64> {
        self.agent_losses.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    pub fn mean_loss(&self) -> Vec<f64> {
        self.agent_losses.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect()
    }

    pub fn cum_loss(&self) -> Vec<f64> {
        prefix_sum(&self.inst_loss())
    }

    pub fn total_loss(&self) -> f64 {
        self.cum_loss().last().copied().unwrap_or(0.0)
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    /// Write the trace CSV: `#key=value` metadata lines, then
    /// `t,inst_loss,cum_loss,regret_prefix[,mean_loss][,consensus_max,tracking_max]`
    /// with `mean_loss` present for multi-agent traces.
    pub fn write_csv(&self, regret_prefix: &[f64], mut w: impl Write) -> std::io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(w, "#{k}={v}")?;
        }
        let diag = self.consensus_max.is_some() || self.tracking_max.is_some();
        let multi = self.agents() > 1;
        write!(w, "t,inst_loss,cum_loss,regret_prefix")?;
        if multi {
            write!(w, ",mean_loss")?;
        }
        if diag {
            write!(w, ",consensus_max,tracking_max")?;
        }
        writeln!(w)?;
        let inst = self.inst_loss();
        let mean = self.mean_loss();
        let cum = prefix_sum(&inst);
        for t in 0..self.horizon() {
            write!(
                w,
                "{},{},{},{}",
                t + 1,
                fmt_sig(inst[t]),
                fmt_sig(cum[t]),
                fmt_sig(regret_prefix.get(t).copied().unwrap_or(f64::NAN))
            )?;
            if multi {
                write!(w, ",{}", fmt_sig(mean[t]))?;
            }
            if diag {
                let c = self.consensus_max.as_ref().map_or(f64::NAN, |v| v[t]);
                let g = self.tracking_max.as_ref().map_or(f64::NAN, |v| v[t]);
                write!(w, ",{},{}", fmt_sig(c), fmt_sig(g))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn prefix_sum(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Format with 9 significant digits (`%.9g`).
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Best fixed decision in hindsight, found offline.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub point: Vec<f64>,
    /// Frank-Wolfe duality gap of `sum_t F_t` at `point`.
    pub gap: f64,
    pub iterations: usize,
    /// `sum_t F_t(point)`.
    pub value: f64,
}

/// Global loss `F_t(x) = (1/n) sum_i f^i_t(x)` at round `t`.
pub fn global_loss(streams: &[LossStream], t: usize, x: &[f64]) -> Result<f64> {
    let n = streams.len() as f64;
    let mut total = 0.0;
    for s in streams {
        total += s.at(t).value(x)?;
    }
    Ok(total / n)
}

fn cumulative_value_and_grad(streams: &[LossStream], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = streams.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; x.len()];
    for s in streams {
        for f in s.iter() {
            value += f.value(x)?;
            let g = f.grad(x)?;
            crate::linalg::add_assign(&mut grad, &g);
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((value / n, grad))
}

/// Classical Frank-Wolfe with step `2/(k+2)` on `Phi = sum_t F_t`, started at
/// `lmo(0)`; stops once the duality gap is at most `tol * T` or after
/// `max_iters` iterations. Non-convergence shows up in `gap`.
pub fn compute_comparator(
    streams: &[LossStream],
    set: &ConstraintSet,
    max_iters: usize,
    tol: f64,
) -> Result<Comparator> {
    let start = set.lmo(&vec![0.0; set.dim()])?;
    compute_comparator_from(streams, set, start, max_iters, tol)
}

/// As [`compute_comparator`], from a feasible warm start.
pub fn compute_comparator_from(
    streams: &[LossStream],
    set: &ConstraintSet,
    start: Vec<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<Comparator> {
    crate::linalg::check_dim(set.dim(), start.len())?;
    let horizon = streams.first().map_or(0, LossStream::horizon) as f64;
    let mut x = start;
    let mut iterations = 0;
    loop {
        let (value, grad) = cumulative_value_and_grad(streams, &x)?;
        let v = set.lmo(&grad)?;
        let gap: f64 = grad.iter().zip(x.iter().zip(&v)).map(|(g, (xi, vi))| g * (xi - vi)).sum();
        if gap <= tol * horizon || iterations >= max_iters {
            return Ok(Comparator { point: x, gap, iterations, value });
        }
        let gamma = 2.0 / (iterations as f64 + 2.0);
        x = crate::linalg::convex_step(&x, &v, gamma);
        iterations += 1;
    }
}

/// Exact minimizer of `sum_t F_t` when every loss is quadratic: the
/// projection of the mean target. `None` for any other loss kind.
pub fn quadratic_minimizer(streams: &[LossStream], set: &ConstraintSet) -> Result<Option<Vec<f64>>> {
    let mut mean = vec![0.0; set.dim()];
    let mut count = 0usize;
    for s in streams {
        for f in s.iter() {
            let LossFunction::Quadratic { target } = f else {
                return Ok(None);
            };
            crate::linalg::add_assign(&mut mean, target);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(None);
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    set.project(&mean).map(Some)
}

/// Default comparator tolerance: `1e-6` times the per-round loss scale at
/// the starting vertex.
pub fn default_comparator_tol(streams: &[LossStream], set: &ConstraintSet) -> Result<f64> {
    let x = set.lmo(&vec![0.0; set.dim()])?;
    let (value, _) = cumulative_value_and_grad(streams, &x)?;
    let horizon = streams.first().map_or(1, LossStream::horizon) as f64;
    Ok(1e-6 * (value.abs() / horizon).max(1.0))
}

/// `F_t(x*)` for every round.
pub fn comparator_losses(streams: &[LossStream], point: &[f64]) -> Result<Vec<f64>> {
    let horizon = streams.first().map_or(0, LossStream::horizon);
    (1..=horizon).map(|t| global_loss(streams, t, point)).collect()
}

/// Regret prefix curve: `max_i sum_{s<=t} (F_s(x^i_s) - F_s(x*))`.
pub fn regret_curve(trace: &RunTrace, comparator_losses: &[f64]) -> Vec<f64> {
    let agents = trace.agents();
    let mut per_agent = vec![0.0; agents];
    trace
        .agent_losses
        .iter()
        .zip(comparator_losses)
        .map(|(row, best)| {
            for (acc, l) in per_agent.iter_mut().zip(row) {
                *acc += l - best;
            }
            per_agent.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Final regret against a comparator.
pub fn regret(trace: &RunTrace, comparator: &Comparator, streams: &[LossStream]) -> Result<f64> {
    let best = comparator_losses(streams, &comparator.point)?;
    Ok(regret_curve(trace, &best).last().copied().unwrap_or(0.0))
}

/// `max_i ||y^i - mean(x)||`.
pub fn consensus_error(mixed: &[Vec<f64>], iterates: &[Vec<f64>]) -> f64 {
    let mean = mean_of(iterates);
    mixed.iter().map(|y| dist(y, &mean)).fold(0.0, f64::max)
}

/// `sum_k eta_k prod_{l > k} (1 - eta_l)` for `eta_k = min(1, A/k)`.
pub fn step_weight_sum(a: f64, k_max: usize) -> f64 {
    // Horner-style accumulation from the last sub-step backwards.
    let mut total = 0.0;
    let mut tail = 1.0;
    for k in (1..=k_max).rev() {
        let eta = (a / k as f64).min(1.0);
        total += eta * tail;
        tail *= 1.0 - eta;
    }
    total
}

/// Loss gap of a fixed point versus the comparator, per round.
pub fn per_round_gap(streams: &[LossStream], point: &[f64], comparator: &[f64]) -> Result<Vec<f64>> {
    let horizon = streams.first().map_or(0, LossStream::horizon);
    (1..=horizon).map(|t| Ok(global_loss(streams, t, point)? - comparator[t - 1])).collect()
}

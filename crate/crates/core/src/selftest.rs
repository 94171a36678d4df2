//! Built-in invariant checks, run by `delayfw selftest`.

use crate::de2mfw::{de2mfw_run_with_diagnostics, De2mfwParams};
use crate::delay::{AgentSchedules, DelaySchedule};
use crate::delmfw::{delmfw_run, meta_fw_run, AlgoParams, RunOptions};
use crate::error::Result;
use crate::geometry::{ConstraintSet, SetKind};
use crate::losses::{estimate_constants, synth_quadratic_streams};
use crate::network::{algorithm_constants, k0_of, GossipMatrix, Topology, TopologyKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

pub fn run_all() -> Vec<Check> {
    let mut checks = Vec::new();
    let sections: [fn() -> Result<Vec<Check>>; 5] =
        [gossip_checks, lmo_checks, weight_sum_check, distributed_invariants, no_delay_reduction];
    for section in sections {
        match section() {
            Ok(c) => checks.extend(c),
            Err(e) => checks.push(Check::new("section", false, e.to_string())),
        }
    }
    checks
}

fn gossip_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for kind in TopologyKind::ALL {
        for n in [4, 9, 16, 30] {
            let topo = Topology::build(kind, n, 0.3, 0)?;
            let w = GossipMatrix::metropolis(&topo)?;
            let m = w.matrix();
            let mut worst: f64 = 0.0;
            for i in 0..n {
                worst = worst.max((m.row(i).sum() - 1.0).abs());
                worst = worst.max((m.column(i).sum() - 1.0).abs());
                for j in 0..n {
                    worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
                }
            }
            let lam = w.lambda_eff();
            out.push(Check::new(
                format!("gossip {kind} n={n}"),
                worst <= 1e-12 && lam < 1.0,
                format!("stochasticity error {worst:.1e}, lambda {lam:.6}"),
            ));
        }
    }
    let k0 = k0_of(2.0 / 3.0)?;
    out.push(Check::new("k0(2/3) = 5", k0 == 5, format!("got {k0}")));
    let path = Topology::from_edges(TopologyKind::Grid, 3, &[(0, 1), (1, 2)])?;
    let lam = GossipMatrix::metropolis(&path)?.lambda2();
    out.push(Check::new("path3 lambda2 = 2/3", (lam - 2.0 / 3.0).abs() < 1e-12, format!("got {lam}")));
    Ok(out)
}

fn lmo_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = crate::seed::rng(7);
    for kind in SetKind::ALL {
        let set = ConstraintSet::new(kind, 1.5, 3)?;
        let vertices = vertices(&set);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let g: Vec<f64> = (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let v = set.lmo(&g)?;
            let got = crate::linalg::dot(&g, &v);
            let best = vertices.iter().map(|u| crate::linalg::dot(&g, u)).fold(f64::INFINITY, f64::min);
            worst = worst.max(got - best);
        }
        out.push(Check::new(format!("lmo {kind} vs enumeration"), worst <= 1e-12, format!("max excess {worst:.1e}")));
    }
    Ok(out)
}

/// Extreme points, or a dense boundary sample for the l2 ball.
fn vertices(set: &ConstraintSet) -> Vec<Vec<f64>> {
    let (m, r) = (set.dim(), set.radius());
    match set.kind() {
        SetKind::L1Ball => (0..m)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| {
                    let mut e = vec![0.0; m];
                    e[i] = s * r;
                    e
                })
            })
            .collect(),
        SetKind::Simplex => (0..m)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = r;
                e
            })
            .collect(),
        SetKind::Hypercube => {
            (0..1usize << m).map(|mask| (0..m).map(|i| if mask >> i & 1 == 1 { r } else { -r }).collect()).collect()
        }
        SetKind::L2Ball => {
            let mut pts = Vec::new();
            let steps = 120;
            for a in 0..steps {
                for b in 0..=steps / 2 {
                    let th = 2.0 * std::f64::consts::PI * a as f64 / steps as f64;
                    let ph = std::f64::consts::PI * b as f64 / (steps / 2) as f64;
                    pts.push(vec![r * ph.sin() * th.cos(), r * ph.sin() * th.sin(), r * ph.cos()]);
                }
            }
            pts
        }
    }
}

fn weight_sum_check() -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for a in 3..=10 {
        let a = a as f64;
        let mut s = 0.0;
        for k in 1..=10_000usize {
            let eta = (a / k as f64).min(1.0);
            s = eta + (1.0 - eta) * s;
            worst = worst.max(s / (3.0 * (a + 1.0)));
        }
    }
    Ok(vec![Check::new("step weight sum <= 3(A+1)", worst <= 1.0, format!("max ratio {worst:.4}"))])
}

fn distributed_invariants() -> Result<Vec<Check>> {
    let (n, horizon, k) = (9, 50, 20);
    let set = ConstraintSet::l1_ball(1.0, 5)?;
    let streams = synth_quadratic_streams(11, horizon, 5, 1.0, n)?;
    let schedules = AgentSchedules::uniform(n, horizon, 5, 12)?;
    let gossip = GossipMatrix::metropolis(&Topology::grid(n)?)?;
    let c = estimate_constants(&streams, &set)?;
    let consts = algorithm_constants(&gossip, set.diameter(), c.lipschitz, c.smoothness)?;
    let mut out = Vec::new();
    for a in [3.0, consts.a] {
        let algo = AlgoParams { horizon, k, a, zeta: 0.1 };
        let (_, diag) = de2mfw_run_with_diagnostics(
            &set,
            &streams,
            &schedules,
            &gossip,
            De2mfwParams::from(algo),
            5,
            RunOptions::default(),
        )?;
        let consensus = diag
            .consensus
            .iter()
            .flat_map(|row| row.iter().enumerate().map(|(i, e)| e * (i + 1) as f64 / consts.c_d))
            .fold(0.0, f64::max);
        let tracking = diag.tracking_average.iter().flatten().copied().fold(0.0, f64::max);
        let recursion = diag.mean_recursion.iter().flatten().copied().fold(0.0, f64::max);
        out.push(Check::new(
            format!("consensus <= C_d/k (A={a:.3})"),
            consensus <= 1.0,
            format!("max ratio {consensus:.3e}"),
        ));
        out.push(Check::new(
            format!("tracking average (A={a:.3})"),
            tracking <= 1e-9,
            format!("max error {tracking:.1e}"),
        ));
        out.push(Check::new(
            format!("mean recursion (A={a:.3})"),
            recursion <= 1e-12,
            format!("max error {recursion:.1e}"),
        ));
    }
    Ok(out)
}

fn no_delay_reduction() -> Result<Vec<Check>> {
    let horizon = 30;
    let set = ConstraintSet::simplex(1.0, 4)?;
    let stream = synth_quadratic_streams(3, horizon, 4, 1.0, 1)?.remove(0);
    let params = AlgoParams { horizon, k: 6, a: 3.0, zeta: 0.2 };
    let delayed = delmfw_run(&set, &stream, &DelaySchedule::immediate(horizon), params, 9, RunOptions::default())?;
    let plain = meta_fw_run(&set, &stream, params, 9)?;
    let same = delayed.agent_losses == plain.agent_losses;
    Ok(vec![Check::new("dmax = 1 matches undelayed run", same, if same { "bitwise equal" } else { "losses differ" })])
}

//! Shared test helpers: the golden-trace renderers.

use std::fmt::Write;

use delayfw::baselines::dofw_run;
use delayfw::metrics::fmt_sig;
use delayfw::{
    AlgoParams, ConstraintSet, De2mfw, De2mfwParams, DelaySchedule, Delmfw, FtplOracle, GossipMatrix, LossFunction,
    LossStream, Topology, TopologyKind,
};

pub fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn quad(targets: &[[f64; 2]]) -> LossStream {
    LossStream::new(targets.iter().map(|t| LossFunction::Quadratic { target: t.to_vec() }).collect()).unwrap()
}

fn row(out: &mut String, t: usize, agent: usize, x: &[f64], loss: f64) {
    let xs: Vec<String> = x.iter().map(|v| fmt_sig(*v)).collect();
    writeln!(out, "{t},{agent},{},{}", xs.join(","), fmt_sig(loss)).unwrap();
}

const HEADER: &str = "t,agent,x1,x2,loss\n";

fn l1() -> ConstraintSet {
    ConstraintSet::l1_ball(1.0, 2).unwrap()
}

pub fn delmfw_four_rounds() -> String {
    let stream = quad(&[[0.3, -0.2], [-0.5, 0.4], [0.1, 0.9], [-0.8, -0.1]]);
    let schedule = DelaySchedule::from_delays(vec![1, 3, 1, 2]).unwrap();
    let params = AlgoParams { horizon: 4, k: 2, a: 3.0, zeta: 0.5 };
    let oracles =
        vec![FtplOracle::with_noise(l1(), 0.5, vec![0.2, 0.5]), FtplOracle::with_noise(l1(), 0.5, vec![0.7, 0.1])];
    let mut alg = Delmfw::with_oracles(l1(), params, oracles);
    let mut out = String::from(HEADER);
    for t in 1..=4 {
        let x = alg.predict(t).unwrap();
        row(&mut out, t, 0, &x, stream.at(t).value(&x).unwrap());
        alg.schedule_feedback(t, schedule.delay(t)).unwrap();
        let released: Vec<_> = alg.release(t).unwrap().into_iter().map(|s| (s, stream.at(s))).collect();
        alg.absorb(&released).unwrap();
    }
    out
}

pub fn de2mfw_path_of_three() -> String {
    let streams = [
        quad(&[[0.3, -0.2], [-0.5, 0.4], [0.1, 0.9]]),
        quad(&[[0.6, 0.1], [-0.2, -0.7], [0.4, 0.4]]),
        quad(&[[-0.9, 0.2], [0.0, 0.5], [0.3, -0.6]]),
    ];
    let delays = [[1, 1, 1], [2, 1, 1], [1, 3, 1]];
    let noise = [
        [[0.2, 0.5], [0.7, 0.1], [0.4, 0.45], [0.9, 0.3]],
        [[0.6, 0.35], [0.15, 0.8], [0.5, 0.55], [0.25, 0.05]],
        [[0.05, 0.95], [0.3, 0.2], [0.85, 0.6], [0.45, 0.5]],
    ];
    let topo = Topology::from_edges(TopologyKind::Grid, 3, &[(0, 1), (1, 2)]).unwrap();
    let gossip = GossipMatrix::metropolis(&topo).unwrap();
    let params = De2mfwParams::from(AlgoParams { horizon: 3, k: 4, a: 3.0, zeta: 0.5 });
    let oracles = noise
        .iter()
        .map(|agent| agent.iter().map(|n| FtplOracle::with_noise(l1(), 0.5, n.to_vec())).collect())
        .collect();
    let mut alg = De2mfw::with_oracles(l1(), gossip, params, oracles).unwrap();
    let mut out = String::from(HEADER);
    for t in 1..=3 {
        let xs = alg.predict_round(t).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let f = streams.iter().map(|s| s.at(t).value(x).unwrap()).sum::<f64>() / 3.0;
            row(&mut out, t, i, x, f);
        }
        let d: Vec<usize> = delays.iter().map(|d| d[t - 1]).collect();
        alg.schedule_feedback(t, &d).unwrap();
        alg.absorb_round(t, &streams).unwrap();
    }
    out
}

pub fn dofw_three_rounds() -> String {
    let stream = quad(&[[0.3, -0.2], [-0.5, 0.4], [0.1, 0.9]]);
    let schedule = DelaySchedule::from_delays(vec![1, 2, 1]).unwrap();
    let trace = dofw_run(&l1(), &stream, &schedule, 3, 0.5, true).unwrap();
    let mut out = String::from(HEADER);
    let decisions = trace.decisions.as_ref().unwrap();
    for (t, (x, loss)) in decisions.iter().zip(&trace.agent_losses).enumerate() {
        row(&mut out, t + 1, 0, &x[0], loss[0]);
    }
    out
}

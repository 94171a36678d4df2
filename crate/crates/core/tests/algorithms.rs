use delayfw::delmfw::{sub_iterations, InitPolicy};
use delayfw::losses::{synth_quadratic_streams, synth_softmax_streams};
use delayfw::network::grid_shape;
use delayfw::oracle::paired_difference;
use delayfw::{
    de2mfw_run, delmfw_run, dgd_run, dofw_run, meta_fw_run, AgentSchedules, AlgoParams, ConstraintSet, De2mfw,
    De2mfwParams, DelaySchedule, Delmfw, GossipMatrix, LossFunction, LossStream, RunOptions, SetKind, Topology,
    TopologyKind,
};

fn record() -> RunOptions {
    RunOptions { init: InitPolicy::ZeroVertex, record_decisions: true }
}

#[test]
fn undelayed_run_matches_meta_frank_wolfe_bitwise() {
    for kind in SetKind::ALL {
        let set = ConstraintSet::new(kind, 2.0, 6).unwrap();
        let stream = synth_quadratic_streams(8, 64, 6, 1.0, 1).unwrap().remove(0);
        let params = AlgoParams { horizon: 64, k: sub_iterations(64), a: 3.0, zeta: 0.07 };
        let delayed =
            delmfw_run(&set, &stream, &DelaySchedule::immediate(64), params, 21, RunOptions::default()).unwrap();
        let plain = meta_fw_run(&set, &stream, params, 21).unwrap();
        assert_eq!(delayed.agent_losses, plain.agent_losses, "{kind}");
    }
}

#[test]
fn single_agent_network_matches_centralized_bitwise() {
    let set = ConstraintSet::l1_ball(3.0, 12).unwrap();
    let streams = synth_softmax_streams(2, 40, 4, 3, 3, 1).unwrap();
    let schedule = DelaySchedule::uniform(40, 7, 5).unwrap();
    let params = AlgoParams { horizon: 40, k: 7, a: 4.5, zeta: 0.3 };
    let central = delmfw_run(&set, &streams[0], &schedule, params, 99, record()).unwrap();
    let gossip = GossipMatrix::metropolis(&Topology::complete(1).unwrap()).unwrap();
    let schedules = AgentSchedules { schedules: vec![schedule] };
    let dist = de2mfw_run(&set, &streams, &schedules, &gossip, De2mfwParams::from(params), 99, record()).unwrap();
    assert_eq!(central.agent_losses, dist.agent_losses);
    assert_eq!(central.decisions, dist.decisions);
}

#[test]
fn decisions_stay_feasible() {
    let horizon = 30;
    for kind in SetKind::ALL {
        let set = ConstraintSet::new(kind, 1.5, 4).unwrap();
        let streams = synth_quadratic_streams(1, horizon, 4, 2.0, 4).unwrap();
        let schedule = DelaySchedule::uniform(horizon, 5, 2).unwrap();
        let params = AlgoParams { horizon, k: 6, a: 3.0, zeta: 0.5 };
        let mut traces = vec![
            delmfw_run(&set, &streams[0], &schedule, params, 1, record()).unwrap(),
            dofw_run(&set, &streams[0], &schedule, horizon, 0.3, true).unwrap(),
            dgd_run(&set, &streams[0], &schedule, horizon, 0.3, true).unwrap(),
        ];
        let gossip = GossipMatrix::metropolis(&Topology::cycle(4).unwrap()).unwrap();
        let schedules = AgentSchedules::uniform(4, horizon, 5, 3).unwrap();
        traces.push(de2mfw_run(&set, &streams, &schedules, &gossip, De2mfwParams::from(params), 1, record()).unwrap());
        for trace in traces {
            for round in trace.decisions.unwrap() {
                for x in round {
                    assert!(set.contains(&x, 1e-9), "{kind}: {x:?}");
                }
            }
        }
    }
}

#[test]
fn pending_history_is_bounded_by_outstanding_feedback() {
    let horizon = 40;
    let set = ConstraintSet::simplex(1.0, 3).unwrap();
    let stream = synth_quadratic_streams(2, horizon, 3, 1.0, 1).unwrap().remove(0);
    let schedule = DelaySchedule::uniform(horizon, 9, 4).unwrap();
    let params = AlgoParams { horizon, k: 5, a: 3.0, zeta: 0.2 };
    let mut alg = Delmfw::new(set, params, 3).unwrap();
    for t in 1..=horizon {
        alg.predict(t).unwrap();
        alg.schedule_feedback(t, schedule.delay(t)).unwrap();
        let released: Vec<_> = alg.release(t).unwrap().into_iter().map(|s| (s, stream.at(s))).collect();
        alg.absorb(&released).unwrap();
        let pending_in_horizon =
            (1..=t).filter(|&s| s + schedule.delay(s) - 1 > t && s + schedule.delay(s) - 1 <= horizon).count();
        assert_eq!(alg.history_len(), pending_in_horizon, "round {t}");
    }
    assert_eq!(alg.history_len(), 0);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let set = ConstraintSet::l1_ball(2.0, 8).unwrap();
    let streams = synth_softmax_streams(6, 25, 4, 2, 2, 9).unwrap();
    let (rows, cols) = grid_shape(9);
    assert_eq!(rows * cols, 9);
    let gossip = GossipMatrix::metropolis(&Topology::grid(9).unwrap()).unwrap();
    let schedules = AgentSchedules::with_delayed_agents(9, 25, 6, 4, 8).unwrap();
    let params = De2mfwParams::from(AlgoParams { horizon: 25, k: 5, a: 3.0, zeta: 0.4 });
    let a = de2mfw_run(&set, &streams, &schedules, &gossip, params, 12, RunOptions::default()).unwrap();
    let b = de2mfw_run(&set, &streams, &schedules, &gossip, params, 12, RunOptions::default()).unwrap();
    let c = de2mfw_run(&set, &streams, &schedules, &gossip, params, 13, RunOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.agent_losses, c.agent_losses);
}

/// Oracle perturbation on a network: with linear losses the tracked
/// feedback does not depend on the decisions, so the delayed and undelayed
/// runs' oracle accumulators can be compared directly in expectation.
#[test]
fn network_oracle_perturbation_is_bounded() {
    let (n, horizon, k, zeta, m) = (4, 20, 3, 0.2, 3);
    let set = ConstraintSet::l1_ball(1.0, m).unwrap();
    let mut rng = delayfw::seed::rng(77);
    let streams: Vec<LossStream> = (0..n)
        .map(|_| {
            LossStream::new(
                (0..horizon)
                    .map(|_| LossFunction::Linear {
                        coeffs: (0..m).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect(),
                    })
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let g = streams
        .iter()
        .flat_map(|s| s.iter())
        .map(|f| match f {
            LossFunction::Linear { coeffs } => delayfw::linalg::norm(coeffs),
            _ => unreachable!(),
        })
        .fold(0.0, f64::max);
    let d = set.diameter();
    for topo in [
        Topology::cycle(n).unwrap(),
        Topology::complete(n).unwrap(),
        Topology::from_edges(TopologyKind::Grid, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap(),
    ] {
        let gossip = GossipMatrix::metropolis(&topo).unwrap();
        let lam = gossip.lambda_eff();
        let delayed_sched = AgentSchedules::uniform(n, horizon, 6, 31).unwrap();
        let params = De2mfwParams::from(AlgoParams { horizon, k, a: 3.0, zeta });
        let mut delayed = De2mfw::new(set.clone(), gossip.clone(), params, 1).unwrap();
        let mut full = De2mfw::new(set.clone(), gossip.clone(), params, 1).unwrap();
        for t in 1..=horizon {
            delayed.predict_round(t).unwrap();
            full.predict_round(t).unwrap();
            let dl: Vec<usize> = delayed_sched.schedules.iter().map(|s| s.delay(t)).collect();
            delayed.schedule_feedback(t, &dl).unwrap();
            full.schedule_feedback(t, &vec![1; n]).unwrap();
            delayed.absorb_round(t, &streams).unwrap();
            full.absorb_round(t, &streams).unwrap();
            let missing: f64 =
                delayed_sched.schedules.iter().map(|s| s.missing_through(t) as f64).sum::<f64>() / n as f64;
            let bound = 2.0 * zeta * (n as f64).sqrt() * d * g * (lam / (1.0 - lam) + 1.0) * missing;
            for i in 0..n {
                for kk in 0..k {
                    let a = delayed.oracles(i)[kk].accum().to_vec();
                    let b = full.oracles(i)[kk].accum().to_vec();
                    let (diff, se) =
                        paired_difference(&set, zeta, &a, &b, 4000, (t * 100 + i * 10 + kk) as u64).unwrap();
                    let gap = delayfw::linalg::norm(&diff);
                    assert!(gap <= bound + 3.0 * se + 1e-12, "t={t} i={i} k={kk}: {gap} > {bound}");
                }
            }
        }
    }
}

//! Config-driven runs, multi-seed experiments and parameter sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baselines::{dgd_run, dofw_run, Dgd, Dofw};
use crate::config::{DataSource, ExperimentConfig, LossKind, Mode, ZetaMode};
use crate::de2mfw::{de2mfw_run, de2mfw_run_with_diagnostics, De2mfwParams};
use crate::delay::{select_agents, AgentSchedules, DelaySchedule};
use crate::delmfw::{delmfw_run, AlgoParams, RunOptions};
use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::losses::{csv_ingest, estimate_constants, synth_quadratic_streams, synth_softmax_streams, LossStream};
use crate::metrics::{
    comparator_losses, compute_comparator_from, default_comparator_tol, fmt_sig, quadratic_minimizer, regret_curve,
    RunTrace,
};
use crate::network::{GossipMatrix, Topology};
use crate::seed;

const DATA_STREAM: u64 = 0x6461_7461;
const DELAY_STREAM: u64 = 0x646c_6179;

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "DELAYFW_OUT";

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

/// Everything a single seeded run needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub set: ConstraintSet,
    /// One stream per agent.
    pub streams: Vec<LossStream>,
    pub schedules: AgentSchedules,
    pub topology: Option<Topology>,
    pub gossip: Option<GossipMatrix>,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub diameter: f64,
    pub data_seed: u64,
    pub delay_seed: u64,
}

/// Build the data, delays and network for one seed.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    cfg.validate()?;
    let horizon = cfg.horizon;
    let agents = cfg.agents();
    let data_seed = cfg.loss.seed.unwrap_or_else(|| seed::derive(seed, &[DATA_STREAM]));
    let delay_seed = cfg.delay.seed.unwrap_or_else(|| seed::derive(seed, &[DELAY_STREAM]));

    let streams = match (cfg.loss.kind, cfg.loss.source) {
        (LossKind::Quadratic, _) => {
            let dim = cfg.loss.dim.expect("validated");
            synth_quadratic_streams(data_seed, horizon, dim, cfg.loss.scale, agents)?
        }
        (LossKind::SoftmaxXent, DataSource::Synthetic) => synth_softmax_streams(
            data_seed,
            horizon,
            cfg.loss.features.expect("validated"),
            cfg.loss.classes.expect("validated"),
            cfg.loss.batch,
            agents,
        )?,
        (LossKind::SoftmaxXent, DataSource::Csv) => csv_ingest(
            cfg.loss.path.as_ref().expect("validated"),
            cfg.loss.batch,
            horizon,
            agents,
            cfg.loss.classes.expect("validated"),
            cfg.loss.shuffle.then_some(data_seed),
        )?,
    };
    let dim = streams[0].dim();
    if let Some(d) = cfg.set.dim {
        if d != dim {
            return Err(Error::Config(format!("set.dim {d} does not match loss dimension {dim}")));
        }
    }
    let set = ConstraintSet::new(cfg.set.kind, cfg.set.radius, dim)?;

    let schedules = match (&cfg.delay.schedule, cfg.delay.dmax) {
        (Some(path), _) => {
            let file = DelaySchedule::read_csv(path)?;
            if file.horizon() < horizon {
                return Err(Error::Config(format!(
                    "delay schedule {} has {} rounds, T = {horizon}",
                    path.display(),
                    file.horizon()
                )));
            }
            let delayed = select_agents(agents, cfg.delay.delayed_agents.unwrap_or(agents), delay_seed);
            let schedules = (0..agents)
                .map(|i| if delayed.contains(&i) { file.clone() } else { DelaySchedule::immediate(horizon) })
                .collect();
            AgentSchedules { schedules }
        }
        (None, Some(dmax)) => AgentSchedules::with_delayed_agents(
            agents,
            horizon,
            dmax,
            cfg.delay.delayed_agents.unwrap_or(agents),
            delay_seed,
        )?,
        (None, None) => unreachable!("validated"),
    };

    let (topology, gossip) = match (&cfg.topology, cfg.mode) {
        (Some(t), Mode::Distributed) => {
            let topo = Topology::build(t.kind, t.n, t.p, t.seed)?;
            let gossip = GossipMatrix::metropolis(&topo)?;
            (Some(topo), Some(gossip))
        }
        _ => (None, None),
    };

    let auto = estimate_constants(&streams, &set)?;
    let lipschitz = cfg.constants.lipschitz.resolve(auto.lipschitz);
    let smoothness = cfg.constants.beta.resolve(auto.smoothness);
    let diameter = cfg.constants.diameter.resolve(set.diameter());
    if !(lipschitz > 0.0 && smoothness > 0.0 && diameter > 0.0) {
        return Err(Error::Config(format!(
            "constants must be positive: G={lipschitz}, beta={smoothness}, D={diameter}"
        )));
    }
    Ok(Prepared { set, streams, schedules, topology, gossip, lipschitz, smoothness, diameter, data_seed, delay_seed })
}

/// Delay budget used in step sizes: the schedule's true `B` or `dmax * T`.
fn delay_budget(cfg: &ExperimentConfig, prep: &Prepared) -> f64 {
    match cfg.zeta_mode {
        ZetaMode::DmaxBound => {
            let dmax = prep.schedules.schedules.iter().map(DelaySchedule::dmax).max().unwrap_or(1);
            (dmax * cfg.horizon) as f64
        }
        _ => prep.schedules.mean_total_delay(),
    }
}

fn apply_overrides(cfg: &ExperimentConfig, params: &mut AlgoParams) -> Result<()> {
    if let Some(k) = cfg.k_override {
        params.k = k;
    }
    if let Some(a) = cfg.a_override {
        params.a = a;
    }
    if let ZetaMode::Explicit(z) = cfg.zeta_mode {
        params.zeta = z;
    }
    params.validate()
}

/// One seeded run: the trace plus its regret prefix (empty when the
/// comparator is disabled).
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(RunTrace, Vec<f64>)> {
    let prep = prepare(cfg, seed)?;
    let budget = delay_budget(cfg, &prep);
    let opts = RunOptions { init: cfg.init.into(), record_decisions: false };
    let (g, beta, d) = (prep.lipschitz, prep.smoothness, prep.diameter);
    let mut trace = match cfg.mode {
        Mode::Centralized => {
            let mut params = AlgoParams::centralized(cfg.horizon, g, beta, d, budget)?;
            apply_overrides(cfg, &mut params)?;
            delmfw_run(&prep.set, &prep.streams[0], &prep.schedules.schedules[0], params, seed, opts)?
        }
        Mode::Distributed => {
            let gossip = prep.gossip.as_ref().expect("distributed mode has a network");
            let (mut params, consts) = De2mfwParams::distributed(cfg.horizon, gossip, g, beta, d, budget)?;
            apply_overrides(cfg, &mut params.algo)?;
            params.empty_feedback = cfg.empty_feedback.into();
            let mut trace = if cfg.diagnostics {
                de2mfw_run_with_diagnostics(&prep.set, &prep.streams, &prep.schedules, gossip, params, seed, opts)?.0
            } else {
                de2mfw_run(&prep.set, &prep.streams, &prep.schedules, gossip, params, seed, opts)?
            };
            trace.set_meta("C_d", consts.c_d);
            trace.set_meta("C_g", consts.c_g);
            trace.set_meta("A_converged", consts.converged);
            let topo = prep.topology.as_ref().expect("distributed mode has a network");
            trace.set_meta("topology", topo.kind());
            trace.set_meta("topology_attempts", topo.attempts());
            trace
        }
        Mode::BaselineDofw => {
            let eta = Dofw::default_eta_reg(d, g, cfg.horizon);
            dofw_run(&prep.set, &prep.streams[0], &prep.schedules.schedules[0], cfg.horizon, eta, false)?
        }
        Mode::BaselineDgd => {
            let step = Dgd::default_step(d, g, budget);
            dgd_run(&prep.set, &prep.streams[0], &prep.schedules.schedules[0], cfg.horizon, step, false)?
        }
    };
    trace.set_meta("mode", mode_name(cfg.mode));
    trace.set_meta("seed", seed);
    trace.set_meta("data_seed", prep.data_seed);
    trace.set_meta("delay_seed", prep.delay_seed);
    trace.set_meta("set", format!("{}:{}:{}", prep.set.kind(), prep.set.radius(), prep.set.dim()));
    trace.set_meta("G", g);
    trace.set_meta("beta", beta);
    trace.set_meta("D", d);
    trace.set_meta("config_sha256", config_hash(cfg)?);

    let regret = if cfg.comparator.enabled {
        let start = match quadratic_minimizer(&prep.streams, &prep.set)? {
            Some(x) => x,
            None => prep.set.lmo(&vec![0.0; prep.set.dim()])?,
        };
        let tol = match cfg.comparator.tol {
            Some(t) => t,
            None => default_comparator_tol(&prep.streams, &prep.set)?,
        };
        let comp = compute_comparator_from(&prep.streams, &prep.set, start, cfg.comparator.max_iters, tol)?;
        if comp.gap > tol * cfg.horizon as f64 {
            log::warn!("comparator stopped after {} iterations with gap {:.3e}", comp.iterations, comp.gap);
        }
        trace.set_meta("comparator_gap", comp.gap);
        trace.set_meta("comparator_iterations", comp.iterations);
        regret_curve(&trace, &comparator_losses(&prep.streams, &comp.point)?)
    } else {
        Vec::new()
    };
    Ok((trace, regret))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Centralized => "centralized",
        Mode::Distributed => "distributed",
        Mode::BaselineDofw => "baseline_dofw",
        Mode::BaselineDgd => "baseline_dgd",
    }
}

/// SHA-256 of the config without its output location.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output = None;
    let bytes = serde_json::to_vec(&c).map_err(|e| Error::Config(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub total_loss: f64,
    /// `NaN` when the comparator is disabled.
    pub final_regret: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub label: String,
    pub output: PathBuf,
    pub outcomes: Vec<SeedOutcome>,
}

impl ExperimentReport {
    pub fn mean_total_loss(&self) -> f64 {
        self.outcomes.iter().map(|o| o.total_loss).sum::<f64>() / self.outcomes.len() as f64
    }
}

/// Run every seed of `cfg`, writing traces, `summary.csv`, `timing.csv` and
/// the resolved config into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    run_labeled(cfg, out, "run")
}

fn run_labeled(cfg: &ExperimentConfig, out: &Path, label: &str) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = serde_json::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&out.join("config.json"), format!("{resolved}\n").as_bytes())?;

    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = Instant::now();
        let (trace, regret) = run_seed(cfg, seed)?;
        let wall_seconds = started.elapsed().as_secs_f64();
        let mut buf = Vec::new();
        trace.write_csv(&regret, &mut buf).map_err(|e| Error::io(out, e))?;
        write_atomic(&out.join(format!("trace_seed{seed}.csv")), &buf)?;
        log::info!("{label} seed {seed}: total loss {:.6} in {wall_seconds:.2}s", trace.total_loss());
        outcomes.push(SeedOutcome {
            seed,
            total_loss: trace.total_loss(),
            final_regret: regret.last().copied().unwrap_or(f64::NAN),
            wall_seconds,
        });
    }
    if cfg.mode == Mode::Distributed {
        let t = cfg.topology.as_ref().expect("validated");
        let topo = Topology::build(t.kind, t.n, t.p, t.seed)?;
        let mut buf = Vec::new();
        topo.write_edge_list(&mut buf).map_err(|e| Error::io(out, e))?;
        write_atomic(&out.join("topology.edges"), &buf)?;
    }
    let mut summary = String::from("label,seed,total_loss,final_regret\n");
    let mut timing = String::from("label,seed,wall_seconds\n");
    for o in &outcomes {
        let _ = writeln!(summary, "{label},{},{},{}", o.seed, fmt_sig(o.total_loss), fmt_sig(o.final_regret));
        let _ = writeln!(timing, "{label},{},{:.6}", o.seed, o.wall_seconds);
    }
    write_atomic(&out.join("summary.csv"), summary.as_bytes())?;
    write_atomic(&out.join("timing.csv"), timing.as_bytes())?;
    Ok(ExperimentReport { label: label.to_string(), output: out.to_path_buf(), outcomes })
}

/// One swept parameter: a dotted config key and its values.
#[derive(Debug, Clone)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<Value>,
}

impl SweepAxis {
    /// Parse comma-separated values; each is read as JSON, falling back to a
    /// plain string.
    pub fn parse(key: &str, values: &str) -> Result<Self> {
        let values: Vec<Value> = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())))
            .collect();
        if values.is_empty() {
            return Err(Error::Config(format!("no values given for {key}")));
        }
        Ok(Self { key: key.to_string(), values })
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axes: Vec<SweepAxis>,
    /// Row-major over the axes' value grid.
    pub cells: Vec<ExperimentReport>,
}

impl SweepReport {
    /// Mean total loss per cell, as `[row][col]` (one column for one axis).
    pub fn mean_matrix(&self) -> Vec<Vec<f64>> {
        let cols = self.axes.get(1).map_or(1, |a| a.values.len());
        self.cells.chunks(cols).map(|row| row.iter().map(ExperimentReport::mean_total_loss).collect()).collect()
    }
}

/// Set `a.b.c` in a JSON object. Missing or non-object intermediates become
/// objects, so `zeta_mode.explicit` replaces `"zeta_mode": "true_B"`.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad sweep key {key:?}")));
    }
    if !root.is_object() {
        return Err(Error::Config("config root is not an object".into()));
    }
    let mut node = root;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let obj = node.as_object_mut().expect("object");
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one part")
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn dir_name(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Sweep one or two dotted keys over a base config. Each cell runs every
/// seed into its own subdirectory; `sweep_summary.csv` collects all runs and
/// two-key sweeps also get `matrix.csv` (mean total loss) and
/// `matrix_pct.csv` (percent change versus the first row).
pub fn run_sweep(base: &Value, axes: &[SweepAxis], out: &Path) -> Result<SweepReport> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Config(format!("sweeps take one or two keys, got {}", axes.len())));
    }
    let grid: Vec<Vec<&Value>> = match axes {
        [a] => a.values.iter().map(|v| vec![v]).collect(),
        [a, b] => a.values.iter().flat_map(|x| b.values.iter().map(move |y| vec![x, y])).collect(),
        _ => unreachable!(),
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut cells = Vec::with_capacity(grid.len());
    for point in grid {
        let mut v = base.clone();
        let mut label = String::new();
        for (axis, value) in axes.iter().zip(&point) {
            set_dotted(&mut v, &axis.key, (*value).clone())?;
            if !label.is_empty() {
                label.push(',');
            }
            let _ = write!(label, "{}={}", axis.key, value_label(value));
        }
        let cfg = ExperimentConfig::from_value(v)?;
        cells.push(run_labeled(&cfg, &out.join(dir_name(&label)), &label)?);
    }

    let mut summary = String::new();
    for axis in axes {
        let _ = write!(summary, "{},", axis.key);
    }
    summary.push_str("seed,total_loss,final_regret\n");
    let cols = axes.get(1).map_or(1, |a| a.values.len());
    for (idx, cell) in cells.iter().enumerate() {
        let coords: Vec<&Value> = match axes {
            [a] => vec![&a.values[idx]],
            [a, b] => vec![&a.values[idx / cols], &b.values[idx % cols]],
            _ => unreachable!(),
        };
        for o in &cell.outcomes {
            for c in &coords {
                let _ = write!(summary, "{},", value_label(c));
            }
            let _ = writeln!(summary, "{},{},{}", o.seed, fmt_sig(o.total_loss), fmt_sig(o.final_regret));
        }
    }
    write_atomic(&out.join("sweep_summary.csv"), summary.as_bytes())?;

    let report = SweepReport { axes: axes.to_vec(), cells };
    if let [rows, cols_axis] = axes {
        let means = report.mean_matrix();
        let header = std::iter::once(format!("{}\\{}", rows.key, cols_axis.key))
            .chain(cols_axis.values.iter().map(value_label))
            .collect::<Vec<_>>()
            .join(",");
        let mut abs = format!("{header}\n");
        let mut pct = format!("{header}\n");
        for (r, row) in means.iter().enumerate() {
            abs.push_str(&value_label(&rows.values[r]));
            pct.push_str(&value_label(&rows.values[r]));
            for (c, m) in row.iter().enumerate() {
                let _ = write!(abs, ",{}", fmt_sig(*m));
                let _ = write!(pct, ",{:+.2}", 100.0 * (m - means[0][c]) / means[0][c]);
            }
            abs.push('\n');
            pct.push('\n');
        }
        write_atomic(&out.join("matrix.csv"), abs.as_bytes())?;
        write_atomic(&out.join("matrix_pct.csv"), pct.as_bytes())?;
    }
    Ok(report)
}

/// Write via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or_default()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "mode": "centralized",
            "T": 20,
            "set": {"kind": "l2_ball", "radius": 1.0},
            "loss": {"kind": "quadratic", "dim": 3},
            "delay": {"dmax": 3},
            "seeds": [1, 2]
        })
    }

    #[test]
    fn dotted_keys() {
        let mut v = base();
        set_dotted(&mut v, "delay.dmax", json!(7)).unwrap();
        set_dotted(&mut v, "topology.kind", json!("cycle")).unwrap();
        assert_eq!(v["delay"]["dmax"], 7);
        assert_eq!(v["topology"]["kind"], "cycle");
        set_dotted(&mut v, "zeta_mode.explicit", json!(0.5)).unwrap();
        assert_eq!(v["zeta_mode"], json!({"explicit": 0.5}));
        assert!(set_dotted(&mut v, "a..b", json!(1)).is_err());
        assert!(set_dotted(&mut json!(3), "a", json!(1)).is_err());
    }

    #[test]
    fn axis_values_parse_as_json_or_string() {
        let a = SweepAxis::parse("topology.kind", "cycle, 3,0.5").unwrap();
        assert_eq!(a.values, vec![json!("cycle"), json!(3), json!(0.5)]);
        assert!(SweepAxis::parse("x", " , ").is_err());
    }

    #[test]
    fn runs_are_reproducible_and_seed_dependent() {
        let cfg = ExperimentConfig::from_value(base()).unwrap();
        let (a, ra) = run_seed(&cfg, 1).unwrap();
        let (b, rb) = run_seed(&cfg, 1).unwrap();
        let (c, _) = run_seed(&cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_ne!(a.agent_losses, c.agent_losses);
        assert_eq!(ra.len(), 20);
    }

    #[test]
    fn every_mode_runs() {
        for mode in ["centralized", "baseline_dofw", "baseline_dgd"] {
            let mut v = base();
            v["mode"] = json!(mode);
            let cfg = ExperimentConfig::from_value(v).unwrap();
            let (t, _) = run_seed(&cfg, 3).unwrap();
            assert_eq!(t.horizon(), 20);
        }
        let mut v = base();
        v["mode"] = json!("distributed");
        v["topology"] = json!({"kind": "grid", "n": 4});
        v["diagnostics"] = json!(true);
        let cfg = ExperimentConfig::from_value(v).unwrap();
        let (t, _) = run_seed(&cfg, 3).unwrap();
        assert_eq!(t.agents(), 4);
        assert!(t.consensus_max.is_some());
    }

    #[test]
    fn output_hash_ignores_output_dir() {
        let mut a = ExperimentConfig::from_value(base()).unwrap();
        let h = config_hash(&a).unwrap();
        a.output = Some("elsewhere".into());
        assert_eq!(config_hash(&a).unwrap(), h);
        assert_eq!(h.len(), 64);
    }
}

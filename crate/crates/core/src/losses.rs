//! Online loss functions and loss streams.
//!
//! Softmax cross-entropy decisions are laid out as `C` contiguous blocks of
//! length `p`: the weights of class `c` occupy `x[c*p .. (c+1)*p]`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::linalg::{check_dim, dist, dot, norm};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Zero-based class label.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossFunction {
    /// `0.5 * ||x - target||^2`
    Quadratic { target: Vec<f64> },
    /// `<coeffs, x>`; gradients do not depend on the decision.
    Linear { coeffs: Vec<f64> },
    /// Summed multiclass softmax cross-entropy over a batch.
    SoftmaxXent { batch: Vec<Sample>, features: usize, classes: usize },
}

impl LossFunction {
    pub fn dim(&self) -> usize {
        match self {
            LossFunction::Quadratic { target } => target.len(),
            LossFunction::Linear { coeffs } => coeffs.len(),
            LossFunction::SoftmaxXent { features, classes, .. } => features * classes,
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            LossFunction::Quadratic { target } => 0.5 * dist(x, target).powi(2),
            LossFunction::Linear { coeffs } => dot(coeffs, x),
            LossFunction::SoftmaxXent { batch, features, classes } => {
                let mut scores = vec![0.0; *classes];
                batch
                    .iter()
                    .map(|s| {
                        class_scores(x, &s.features, *features, &mut scores);
                        log_sum_exp(&scores) - scores[s.label]
                    })
                    .sum()
            }
        })
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            LossFunction::Quadratic { target } => x.iter().zip(target).map(|(a, b)| a - b).collect(),
            LossFunction::Linear { coeffs } => coeffs.clone(),
            LossFunction::SoftmaxXent { batch, features, classes } => {
                let p = *features;
                let mut g = vec![0.0; x.len()];
                let mut scores = vec![0.0; *classes];
                for s in batch {
                    class_scores(x, &s.features, p, &mut scores);
                    softmax_in_place(&mut scores);
                    for (c, prob) in scores.iter().enumerate() {
                        let coef = prob - if c == s.label { 1.0 } else { 0.0 };
                        for (gj, aj) in g[c * p..(c + 1) * p].iter_mut().zip(&s.features) {
                            *gj += coef * aj;
                        }
                    }
                }
                g
            }
        })
    }
}

fn class_scores(x: &[f64], a: &[f64], p: usize, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = dot(&x[c * p..(c + 1) * p], a);
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Losses of one agent (or of the single centralized learner), one per round.
#[derive(Debug, Clone, PartialEq)]
pub struct LossStream {
    losses: Vec<LossFunction>,
}

impl LossStream {
    pub fn new(losses: Vec<LossFunction>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::InvalidParameter("loss stream is empty".into()));
        }
        let m = losses[0].dim();
        if let Some(bad) = losses.iter().find(|f| f.dim() != m) {
            return Err(Error::DimensionMismatch { expected: m, got: bad.dim() });
        }
        Ok(Self { losses })
    }

    pub fn horizon(&self) -> usize {
        self.losses.len()
    }

    pub fn dim(&self) -> usize {
        self.losses[0].dim()
    }

    /// Loss of round `t` (1-based).
    pub fn at(&self, t: usize) -> &LossFunction {
        &self.losses[t - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &LossFunction> {
        self.losses.iter()
    }

    pub fn truncated(&self, horizon: usize) -> Self {
        Self { losses: self.losses[..horizon.min(self.losses.len())].to_vec() }
    }
}

/// Lipschitz and smoothness constants `(G, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    pub lipschitz: f64,
    pub smoothness: f64,
}

/// Conservative `(G, beta)` over all losses of all streams on `set`.
///
/// Quadratic: `G = circumradius + max ||target - center||`, `beta = 1`.
/// Softmax: `G = sqrt(2) * max_t sum_b ||a_b||`, `beta = max_t sum_b ||a_b||^2`.
/// Linear: `G = max ||coeffs||`, `beta = 0`.
pub fn estimate_constants(streams: &[LossStream], set: &ConstraintSet) -> Result<LossConstants> {
    if streams.is_empty() {
        return Err(Error::InvalidParameter("no loss streams".into()));
    }
    let center = set.center();
    let mut lipschitz: f64 = 0.0;
    let mut smoothness: f64 = 0.0;
    for f in streams.iter().flat_map(LossStream::iter) {
        check_dim(set.dim(), f.dim())?;
        match f {
            LossFunction::Quadratic { target } => {
                lipschitz = lipschitz.max(set.circumradius() + dist(target, &center));
                smoothness = smoothness.max(1.0);
            }
            LossFunction::Linear { coeffs } => {
                lipschitz = lipschitz.max(norm(coeffs));
            }
            LossFunction::SoftmaxXent { batch, .. } => {
                let s1: f64 = batch.iter().map(|s| norm(&s.features)).sum();
                let s2: f64 = batch.iter().map(|s| dot(&s.features, &s.features)).sum();
                lipschitz = lipschitz.max(std::f64::consts::SQRT_2 * s1);
                smoothness = smoothness.max(s2);
            }
        }
    }
    Ok(LossConstants { lipschitz, smoothness })
}

/// Synthetic multiclass stream: a seeded Gaussian mixture with `classes`
/// random unit-norm means, samples scaled to unit norm, labels uniform.
///
/// Returns one stream per agent; every agent receives `batch` fresh samples
/// per round.
pub fn synth_softmax_streams(
    seed: u64,
    horizon: usize,
    features: usize,
    classes: usize,
    batch: usize,
    agents: usize,
) -> Result<Vec<LossStream>> {
    if horizon == 0 || features == 0 || classes == 0 || batch == 0 || agents == 0 {
        return Err(Error::InvalidParameter("synthetic stream sizes must be positive".into()));
    }
    let mut rng = seed::rng(seed::derive(seed, &[0x736f_6674]));
    let means: Vec<Vec<f64>> = (0..classes).map(|_| unit_gaussian(&mut rng, features)).collect();
    // within-class spread relative to the unit-norm means
    let spread = 0.6 / (features as f64).sqrt();
    let mut streams = vec![Vec::with_capacity(horizon); agents];
    for _ in 0..horizon {
        for stream in streams.iter_mut() {
            let samples = (0..batch)
                .map(|_| {
                    let label = rng.random_range(0..classes);
                    let mut a: Vec<f64> =
                        means[label].iter().map(|mu| mu + spread * rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = norm(&a);
                    a.iter_mut().for_each(|v| *v /= n);
                    Sample { features: a, label }
                })
                .collect();
            stream.push(LossFunction::SoftmaxXent { batch: samples, features, classes });
        }
    }
    streams.into_iter().map(LossStream::new).collect()
}

/// Synthetic quadratic stream: `target_t = mu + scale * N(0, I/dim)` with a
/// seeded common mean `mu` of norm `0.5 * scale`.
pub fn synth_quadratic_streams(
    seed: u64,
    horizon: usize,
    dim: usize,
    scale: f64,
    agents: usize,
) -> Result<Vec<LossStream>> {
    if horizon == 0 || dim == 0 || agents == 0 {
        return Err(Error::InvalidParameter("synthetic stream sizes must be positive".into()));
    }
    let mut rng = seed::rng(seed::derive(seed, &[0x7175_6164]));
    let mu: Vec<f64> = unit_gaussian(&mut rng, dim).iter().map(|v| 0.5 * scale * v).collect();
    let sd = scale / (dim as f64).sqrt();
    let mut streams = vec![Vec::with_capacity(horizon); agents];
    for _ in 0..horizon {
        for stream in streams.iter_mut() {
            let target = mu.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect();
            stream.push(LossFunction::Quadratic { target });
        }
    }
    streams.into_iter().map(LossStream::new).collect()
}

fn unit_gaussian(rng: &mut seed::SimRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Read `label,f1,...,fp` rows (header required, zero-based labels).
///
/// Rows are dealt round-robin to `agents`, grouped per agent into batches of
/// `batch` in file order, and wrapped to the start when a horizon of
/// `horizon` rounds needs more rows than the agent holds. An optional seed
/// shuffles the rows before dealing.
pub fn csv_ingest(
    path: impl AsRef<Path>,
    batch: usize,
    horizon: usize,
    agents: usize,
    classes: usize,
    shuffle: Option<u64>,
) -> Result<Vec<LossStream>> {
    let path = path.as_ref();
    if batch == 0 || horizon == 0 || agents == 0 || classes == 0 {
        return Err(Error::InvalidParameter("csv ingest sizes must be positive".into()));
    }
    let data_err = |line: usize, msg: String| Error::Data { path: path.to_path_buf(), line, msg };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => data_err(0, format!("{other:?}")),
        }
    })?;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| data_err(line, e.to_string()))?;
        if rec.len() < 2 {
            return Err(data_err(line, "row needs a label and at least one feature".into()));
        }
        let p = rec.len() - 1;
        if *width.get_or_insert(p) != p {
            return Err(data_err(line, format!("expected {} features, found {p}", width.unwrap())));
        }
        let label: usize =
            rec[0].parse().map_err(|_| data_err(line, format!("label `{}` is not a non-negative integer", &rec[0])))?;
        if label >= classes {
            return Err(data_err(line, format!("unknown label {label} (classes = {classes})")));
        }
        let features = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| data_err(line, "malformed feature value".into()))?;
        rows.push(Sample { features, label });
    }
    let features = width.ok_or_else(|| data_err(1, "no data rows".into()))?;
    if let Some(s) = shuffle {
        rows.shuffle(&mut seed::rng(s));
    }
    let mut streams = Vec::with_capacity(agents);
    for agent in 0..agents {
        let mine: Vec<&Sample> = rows.iter().skip(agent).step_by(agents).collect();
        if mine.is_empty() {
            return Err(data_err(1, format!("agent {agent} receives no rows")));
        }
        let mut cursor = mine.iter().cycle();
        let losses = (0..horizon)
            .map(|_| LossFunction::SoftmaxXent {
                batch: cursor.by_ref().take(batch).map(|s| (*s).clone()).collect(),
                features,
                classes,
            })
            .collect();
        streams.push(LossStream::new(losses)?);
    }
    Ok(streams)
}

//! Online linear optimization oracles.
//!
//! [`FtplOracle`] is follow-the-perturbed-leader with a uniform perturbation
//! drawn once at construction: it predicts `lmo(zeta * sum(g) + noise)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::linalg::{add_assign, check_dim, check_finite};
use crate::seed;

/// Query/feedback contract shared by every oracle the Frank-Wolfe layers drive.
pub trait OnlineLinearOracle {
    /// Current prediction; must not change until the next `feedback`.
    fn query(&self) -> Vec<f64>;

    /// Reveal the linear loss `<g, .>`.
    fn feedback(&mut self, g: &[f64]) -> Result<()>;
}

#[derive(Debug, Clone)]
pub struct FtplOracle {
    set: ConstraintSet,
    zeta: f64,
    noise: Vec<f64>,
    accum: Vec<f64>,
    feedback_count: usize,
}

impl FtplOracle {
    pub fn new(set: ConstraintSet, zeta: f64, seed: u64) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::InvalidParameter(format!("zeta must be positive, got {zeta}")));
        }
        let mut rng = seed::rng(seed);
        let noise = (0..set.dim()).map(|_| rng.random::<f64>()).collect();
        Ok(Self::with_noise(set, zeta, noise))
    }

    /// Oracle with an explicit perturbation vector; used for hand-checked fixtures.
    pub fn with_noise(set: ConstraintSet, zeta: f64, noise: Vec<f64>) -> Self {
        assert_eq!(noise.len(), set.dim(), "noise length must match set dimension");
        let accum = vec![0.0; set.dim()];
        Self { set, zeta, noise, accum, feedback_count: 0 }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn accum(&self) -> &[f64] {
        &self.accum
    }

    pub fn feedback_count(&self) -> usize {
        self.feedback_count
    }

    pub fn set(&self) -> &ConstraintSet {
        &self.set
    }

    fn perturbed_argument(&self) -> Vec<f64> {
        self.accum.iter().zip(&self.noise).map(|(a, n)| self.zeta * a + n).collect()
    }
}

impl OnlineLinearOracle for FtplOracle {
    fn query(&self) -> Vec<f64> {
        self.set.lmo_unchecked(&self.perturbed_argument())
    }

    fn feedback(&mut self, g: &[f64]) -> Result<()> {
        check_dim(self.set.dim(), g.len())?;
        check_finite(g, "oracle feedback")?;
        add_assign(&mut self.accum, g);
        self.feedback_count += 1;
        Ok(())
    }
}

/// Monte-Carlo estimate of `E_n[lmo(zeta * accum + n)]`, `n ~ U[0,1]^m`.
#[derive(Debug, Clone)]
pub struct ExpectedPrediction {
    pub mean: Vec<f64>,
    /// Per-coordinate standard error of `mean`.
    pub std_err: Vec<f64>,
    pub samples: usize,
}

impl ExpectedPrediction {
    /// Euclidean norm of the standard-error vector.
    pub fn std_err_norm(&self) -> f64 {
        crate::linalg::norm(&self.std_err)
    }
}

pub fn ftpl_query_expected(
    set: &ConstraintSet,
    zeta: f64,
    accum: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(expected_prediction(set, zeta, accum, samples, seed)?.mean)
}

pub fn expected_prediction(
    set: &ConstraintSet,
    zeta: f64,
    accum: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ExpectedPrediction> {
    let mut out = paired_expected_predictions(set, zeta, &[accum], samples, seed)?;
    Ok(out.remove(0))
}

/// Expected predictions for several accumulators evaluated on one shared
/// stream of noise draws (common random numbers). Also returns, through
/// [`paired_difference`], the standard error of pairwise differences.
pub fn paired_expected_predictions(
    set: &ConstraintSet,
    zeta: f64,
    accums: &[&[f64]],
    samples: usize,
    seed: u64,
) -> Result<Vec<ExpectedPrediction>> {
    Ok(monte_carlo(set, zeta, accums, samples, seed, None)?.0)
}

/// Monte-Carlo estimate of `E[lmo(zeta*a + n)] - E[lmo(zeta*b + n)]` with
/// common noise, returning the mean difference and its standard error norm.
pub fn paired_difference(
    set: &ConstraintSet,
    zeta: f64,
    a: &[f64],
    b: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let (_, diff) = monte_carlo(set, zeta, &[a, b], samples, seed, Some((0, 1)))?;
    let diff = diff.expect("pair requested");
    let se = diff.std_err_norm();
    Ok((diff.mean, se))
}

type MonteCarloOut = (Vec<ExpectedPrediction>, Option<ExpectedPrediction>);

fn monte_carlo(
    set: &ConstraintSet,
    zeta: f64,
    accums: &[&[f64]],
    samples: usize,
    seed: u64,
    pair: Option<(usize, usize)>,
) -> Result<MonteCarloOut> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let m = set.dim();
    for a in accums {
        check_dim(m, a.len())?;
        check_finite(a, "accumulator")?;
    }
    let mut rng = seed::rng(seed);
    let mut sums = vec![vec![0.0; m]; accums.len()];
    let mut sq = vec![vec![0.0; m]; accums.len()];
    let mut dsum = vec![0.0; m];
    let mut dsq = vec![0.0; m];
    let mut noise = vec![0.0; m];
    let mut arg = vec![0.0; m];
    let mut outs: Vec<Vec<f64>> = vec![Vec::new(); accums.len()];
    for _ in 0..samples {
        noise.iter_mut().for_each(|n| *n = rng.random::<f64>());
        for (j, a) in accums.iter().enumerate() {
            for ((ai, ni), out) in a.iter().zip(&noise).zip(arg.iter_mut()) {
                *out = zeta * ai + ni;
            }
            let v = set.lmo_unchecked(&arg);
            for ((s, q), vi) in sums[j].iter_mut().zip(sq[j].iter_mut()).zip(&v) {
                *s += vi;
                *q += vi * vi;
            }
            outs[j] = v;
        }
        if let Some((p, q)) = pair {
            for ((ds, dq), (x, y)) in dsum.iter_mut().zip(dsq.iter_mut()).zip(outs[p].iter().zip(&outs[q])) {
                let d = x - y;
                *ds += d;
                *dq += d * d;
            }
        }
    }
    let finish = |s: &[f64], q: &[f64]| -> ExpectedPrediction {
        let n = samples as f64;
        let mean: Vec<f64> = s.iter().map(|v| v / n).collect();
        let std_err = if samples > 1 {
            q.iter().zip(&mean).map(|(qi, mi)| (((qi / n) - mi * mi).max(0.0) * n / (n - 1.0) / n).sqrt()).collect()
        } else {
            vec![0.0; s.len()]
        };
        ExpectedPrediction { mean, std_err, samples }
    };
    let preds = sums.iter().zip(&sq).map(|(s, q)| finish(s, q)).collect();
    let diff = pair.map(|_| finish(&dsum, &dsq));
    Ok((preds, diff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1(m: usize) -> ConstraintSet {
        ConstraintSet::l1_ball(1.0, m).unwrap()
    }

    #[test]
    fn construction_and_determinism() {
        let o = FtplOracle::new(l1(2), 0.5, 7).unwrap();
        assert_eq!(o.accum(), &[0.0, 0.0]);
        let p = FtplOracle::new(l1(2), 0.5, 7).unwrap();
        assert_eq!(o.noise(), p.noise());
        assert!(o.noise().iter().all(|n| (0.0..=1.0).contains(n)));
        assert!(FtplOracle::new(l1(2), 0.0, 7).is_err());
        assert!(FtplOracle::new(l1(2), -1.0, 7).is_err());
    }

    #[test]
    fn query_examples() {
        let mut o = FtplOracle::with_noise(l1(2), 1.0, vec![0.2, 0.5]);
        assert_eq!(o.query(), vec![0.0, -1.0]);
        assert_eq!(o.query(), o.query());
        o.feedback(&[10.0, 0.0]).unwrap();
        assert_eq!(o.query(), vec![-1.0, 0.0]);
    }

    #[test]
    fn feedback_accumulates() {
        let mut o = FtplOracle::with_noise(l1(2), 1.0, vec![0.2, 0.5]);
        o.feedback(&[1.0, 1.0]).unwrap();
        o.feedback(&[2.0, -1.0]).unwrap();
        assert_eq!(o.accum(), &[3.0, 0.0]);
        assert_eq!(o.feedback_count(), 2);
        let before = o.query();
        o.feedback(&[0.0, 0.0]).unwrap();
        assert_eq!(o.query(), before);
        assert!(o.feedback(&[f64::NAN, 0.0]).is_err());
        assert!(o.feedback(&[1.0]).is_err());
    }

    #[test]
    fn feedback_order_is_irrelevant() {
        let a = [0.25, -1.5];
        let b = [2.0, 0.5];
        let mut o1 = FtplOracle::new(l1(2), 0.3, 1).unwrap();
        let mut o2 = o1.clone();
        o1.feedback(&a).unwrap();
        o1.feedback(&b).unwrap();
        o2.feedback(&b).unwrap();
        o2.feedback(&a).unwrap();
        assert_eq!(o1.accum(), o2.accum());
    }

    #[test]
    fn expected_prediction_forced_vertex() {
        let est = ftpl_query_expected(&l1(3), 1.0, &[0.0, -1e6, 0.0], 50, 3).unwrap();
        assert_eq!(est, vec![0.0, 1.0, 0.0]);
        let est = ftpl_query_expected(&l1(1), 1.0, &[0.0], 100, 3).unwrap();
        assert_eq!(est, vec![-1.0]);
        assert!(ftpl_query_expected(&l1(1), 1.0, &[0.0], 0, 3).is_err());
    }
}

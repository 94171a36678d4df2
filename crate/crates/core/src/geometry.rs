//! Compact convex constraint sets with closed-form linear minimization
//! oracles. Projection is provided only for the projected-gradient baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, check_finite, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    L1Ball,
    L2Ball,
    /// `{x >= 0, sum x = r}`.
    Simplex,
    /// `{|x_i| <= r}`.
    Hypercube,
}

impl SetKind {
    pub const ALL: [SetKind; 4] = [SetKind::L1Ball, SetKind::L2Ball, SetKind::Simplex, SetKind::Hypercube];

    pub fn as_str(self) -> &'static str {
        match self {
            SetKind::L1Ball => "l1_ball",
            SetKind::L2Ball => "l2_ball",
            SetKind::Simplex => "simplex",
            SetKind::Hypercube => "hypercube",
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown set kind `{s}`")))
    }
}

/// A bounded convex set in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    kind: SetKind,
    radius: f64,
    dim: usize,
}

impl ConstraintSet {
    pub fn new(kind: SetKind, radius: f64, dim: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        Ok(Self { kind, radius, dim })
    }

    pub fn l1_ball(radius: f64, dim: usize) -> Result<Self> {
        Self::new(SetKind::L1Ball, radius, dim)
    }

    pub fn l2_ball(radius: f64, dim: usize) -> Result<Self> {
        Self::new(SetKind::L2Ball, radius, dim)
    }

    pub fn simplex(radius: f64, dim: usize) -> Result<Self> {
        Self::new(SetKind::Simplex, radius, dim)
    }

    pub fn hypercube(radius: f64, dim: usize) -> Result<Self> {
        Self::new(SetKind::Hypercube, radius, dim)
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Linear minimization oracle: `argmin_{v in K} <g, v>`.
    ///
    /// Ties go to the lowest index. A zero coordinate is treated as having
    /// negative sign, so `g = 0` yields `r * e_1` for the balls and simplex
    /// and the all-`+r` corner for the hypercube.
    pub fn lmo(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, g.len())?;
        check_finite(g, "lmo gradient")?;
        Ok(self.lmo_unchecked(g))
    }

    pub(crate) fn lmo_unchecked(&self, g: &[f64]) -> Vec<f64> {
        let r = self.radius;
        let mut v = vec![0.0; self.dim];
        match self.kind {
            SetKind::L1Ball => {
                let mut best = 0;
                let mut best_abs = g[0].abs();
                for (i, gi) in g.iter().enumerate().skip(1) {
                    if gi.abs() > best_abs {
                        best = i;
                        best_abs = gi.abs();
                    }
                }
                v[best] = if g[best] > 0.0 { -r } else { r };
            }
            SetKind::L2Ball => {
                let n = norm(g);
                if n > 0.0 {
                    for (vi, gi) in v.iter_mut().zip(g) {
                        *vi = -r * gi / n;
                    }
                } else {
                    v[0] = r;
                }
            }
            SetKind::Simplex => {
                let mut best = 0;
                for (i, gi) in g.iter().enumerate().skip(1) {
                    if *gi < g[best] {
                        best = i;
                    }
                }
                v[best] = r;
            }
            SetKind::Hypercube => {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = if *gi > 0.0 { -r } else { r };
                }
            }
        }
        v
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        let r = self.radius;
        match self.kind {
            SetKind::L1Ball | SetKind::L2Ball => 2.0 * r,
            // exact for dim >= 2; an upper bound for the one-point simplex
            SetKind::Simplex => r * std::f64::consts::SQRT_2,
            SetKind::Hypercube => 2.0 * r * (self.dim as f64).sqrt(),
        }
    }

    /// A distinguished interior point: the origin, or the barycenter of the simplex.
    pub fn center(&self) -> Vec<f64> {
        match self.kind {
            SetKind::Simplex => vec![self.radius / self.dim as f64; self.dim],
            _ => vec![0.0; self.dim],
        }
    }

    /// `max_{x in K} ||x - center||`.
    pub fn circumradius(&self) -> f64 {
        let r = self.radius;
        let m = self.dim as f64;
        match self.kind {
            SetKind::L1Ball | SetKind::L2Ball => r,
            SetKind::Simplex => r * (1.0 - 1.0 / m).sqrt(),
            SetKind::Hypercube => r * m.sqrt(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let r = self.radius;
        match self.kind {
            SetKind::L1Ball => x.iter().map(|v| v.abs()).sum::<f64>() <= r + tol,
            SetKind::L2Ball => norm(x) <= r + tol,
            SetKind::Simplex => x.iter().all(|&v| v >= -tol) && (x.iter().sum::<f64>() - r).abs() <= tol,
            SetKind::Hypercube => x.iter().all(|v| v.abs() <= r + tol),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_finite(x, "projection input")?;
        let r = self.radius;
        Ok(match self.kind {
            SetKind::L1Ball => {
                if x.iter().map(|v| v.abs()).sum::<f64>() <= r {
                    return Ok(x.to_vec());
                }
                let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
                let p = project_simplex(&abs, r);
                p.iter().zip(x).map(|(pi, xi)| pi.copysign(*xi)).collect()
            }
            SetKind::L2Ball => {
                let n = norm(x);
                if n <= r {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * r / n).collect()
                }
            }
            SetKind::Simplex => project_simplex(x, r),
            SetKind::Hypercube => x.iter().map(|v| v.clamp(-r, r)).collect(),
        })
    }
}

/// Sort-based projection onto `{x >= 0, sum x = r}`.
fn project_simplex(x: &[f64], r: f64) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - r) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

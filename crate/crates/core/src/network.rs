//! Communication graphs, Metropolis gossip weights and the spectral
//! constants used by the distributed algorithm.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_EDGE_PROBABILITY: f64 = 0.3;
const MAX_ER_ATTEMPTS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Cycle,
    Grid,
    ErdosRenyi,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] =
        [TopologyKind::ErdosRenyi, TopologyKind::Grid, TopologyKind::Complete, TopologyKind::Cycle];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Complete => "complete",
            TopologyKind::Cycle => "cycle",
            TopologyKind::Grid => "grid",
            TopologyKind::ErdosRenyi => "erdos_renyi",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopologyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown topology `{s}`")))
    }
}

/// Undirected simple graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    kind: TopologyKind,
    n: usize,
    edges: Vec<(usize, usize)>,
    /// Number of Erdos-Renyi draws until a connected graph came up (1 otherwise).
    attempts: u32,
}

impl Topology {
    pub fn build(kind: TopologyKind, n: usize, p: f64, seed: u64) -> Result<Self> {
        match kind {
            TopologyKind::Complete => Self::complete(n),
            TopologyKind::Cycle => Self::cycle(n),
            TopologyKind::Grid => Self::grid(n),
            TopologyKind::ErdosRenyi => Self::erdos_renyi(n, p, seed),
        }
    }

    pub fn complete(n: usize) -> Result<Self> {
        check_n(n)?;
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Ok(Self { kind: TopologyKind::Complete, n, edges, attempts: 1 })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        check_n(n)?;
        let edges = match n {
            1 => vec![],
            2 => vec![(0, 1)],
            _ => (0..n).map(|i| normalize(i, (i + 1) % n)).collect(),
        };
        Ok(Self { kind: TopologyKind::Cycle, n, edges, attempts: 1 })
    }

    /// `rows x cols` lattice with 4-neighbourhoods and no wraparound, where
    /// `rows` is the largest divisor of `n` not exceeding `sqrt(n)`.
    pub fn grid(n: usize) -> Result<Self> {
        check_n(n)?;
        let (rows, cols) = grid_shape(n);
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Ok(Self { kind: TopologyKind::Grid, n, edges, attempts: 1 })
    }

    /// G(n, p), redrawn with an incremented seed until connected.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        check_n(n)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
        }
        for attempt in 0..MAX_ER_ATTEMPTS {
            let mut rng = seed::rng(seed.wrapping_add(attempt as u64));
            let edges: Vec<_> =
                (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|_| rng.random::<f64>() < p).collect();
            let topo = Self { kind: TopologyKind::ErdosRenyi, n, edges, attempts: attempt + 1 };
            if topo.is_connected() {
                return Ok(topo);
            }
        }
        Err(Error::Disconnected)
    }

    /// Arbitrary graph from an edge list.
    pub fn from_edges(kind: TopologyKind, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        check_n(n)?;
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::InvalidParameter(format!("invalid edge ({i}, {j})")));
            }
            let e = normalize(i, j);
            if !out.contains(&e) {
                out.push(e);
            }
        }
        Ok(Self { kind, n, edges: out, attempts: 1 })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Edge list, one zero-based `i j` pair per line.
    pub fn write_edge_list(&self, mut w: impl Write) -> std::io::Result<()> {
        for (i, j) in &self.edges {
            writeln!(w, "{i} {j}")?;
        }
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("network needs at least one agent".into()));
    }
    Ok(())
}

fn normalize(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

pub fn grid_shape(n: usize) -> (usize, usize) {
    let rows = (1..=n).take_while(|r| r * r <= n).filter(|r| n.is_multiple_of(*r)).last().unwrap_or(1);
    (rows, n / rows)
}

/// Symmetric doubly stochastic gossip matrix with its spectral summary.
#[derive(Debug, Clone)]
pub struct GossipMatrix {
    w: DMatrix<f64>,
    /// Second-largest eigenvalue (by value).
    lambda2: f64,
    /// Largest eigenvalue magnitude on the complement of the all-ones vector:
    /// the contraction factor of `W - 11^T/n`.
    lambda_eff: f64,
    k0: usize,
}

impl GossipMatrix {
    /// `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal fills rows to 1.
    pub fn metropolis(topo: &Topology) -> Result<Self> {
        if !topo.is_connected() {
            return Err(Error::Disconnected);
        }
        let n = topo.n();
        let deg = topo.degrees();
        let mut w = DMatrix::zeros(n, n);
        for &(i, j) in topo.edges() {
            let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        Self::from_matrix(w)
    }

    /// Validate a user-supplied matrix and compute its spectral summary.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let n = w.nrows();
        if n == 0 || w.ncols() != n {
            return Err(Error::NotDoublyStochastic("matrix must be square and non-empty".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 {
                    return Err(Error::NotDoublyStochastic(format!("asymmetric at ({i}, {j})")));
                }
                if w[(i, j)] < 0.0 {
                    return Err(Error::NotDoublyStochastic(format!("negative entry at ({i}, {j})")));
                }
            }
            let row: f64 = w.row(i).sum();
            if (row - 1.0).abs() > 1e-12 {
                return Err(Error::NotDoublyStochastic(format!("row {i} sums to {row}")));
            }
        }
        let (lambda2, lambda_eff) = complement_spectrum(&w);
        let k0 = k0_of(lambda_eff)?;
        Ok(Self { w, lambda2, lambda_eff, k0 })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn lambda_eff(&self) -> f64 {
        self.lambda_eff
    }

    /// `1 - lambda`, using the contraction factor.
    pub fn rho(&self) -> f64 {
        1.0 - self.lambda_eff
    }

    pub fn k0(&self) -> usize {
        self.k0
    }

    /// `out_i = sum_j w_ij * x_j` for a stack of agent vectors.
    pub fn mix(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n();
        let m = x.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                let mut out = vec![0.0; m];
                for (j, xj) in x.iter().enumerate() {
                    let wij = self.w[(i, j)];
                    if wij != 0.0 {
                        crate::linalg::axpy(wij, xj, &mut out);
                    }
                }
                out
            })
            .collect()
    }
}

/// `(second-largest eigenvalue, max |eigenvalue|)` on the orthogonal
/// complement of the all-ones vector.
fn complement_spectrum(w: &DMatrix<f64>) -> (f64, f64) {
    let n = w.nrows();
    if n == 1 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(w.clone());
    let ones = 1.0 / (n as f64).sqrt();
    // drop the eigenpair aligned with the consensus direction
    let consensus = (0..n)
        .max_by(|&a, &b| {
            let pa = eig.eigenvectors.column(a).sum().abs() * ones;
            let pb = eig.eigenvectors.column(b).sum().abs() * ones;
            pa.total_cmp(&pb)
        })
        .expect("n >= 2");
    let rest: Vec<f64> = (0..n).filter(|&i| i != consensus).map(|i| eig.eigenvalues[i]).collect();
    let second = rest.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let eff = rest.iter().map(|v| v.abs()).fold(0.0, f64::max);
    (second.clamp(-1.0, 1.0), eff.min(1.0))
}

/// Smallest `k >= 1` with `lambda <= (k / (k + 1))^2`.
pub fn k0_of(lambda: f64) -> Result<usize> {
    if !(lambda < 1.0) || lambda.is_nan() {
        return Err(Error::InvalidParameter(format!("lambda must be < 1, got {lambda}")));
    }
    let mut k = 1usize;
    loop {
        let r = k as f64 / (k + 1) as f64;
        if lambda <= r * r {
            return Ok(k);
        }
        k += 1;
    }
}

/// Constants of the distributed step rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistConstants {
    /// `k0 * sqrt(n) * D`.
    pub c_d: f64,
    pub c_g: f64,
    /// Step-rule constant `A`.
    pub a: f64,
    pub iterations: usize,
    /// Whether the `A <-> C_g` fixed-point iteration settled.
    pub converged: bool,
}

pub fn c_g_of(gossip: &GossipMatrix, n: usize, d: f64, g: f64, beta: f64, c_d: f64, a: f64) -> f64 {
    let lambda = gossip.lambda_eff();
    let sqrt_n = (n as f64).sqrt();
    let first = lambda * (g + beta * d / gossip.rho());
    let second = gossip.k0() as f64 * beta * (4.0 * c_d + a * d);
    sqrt_n * first.max(second)
}

/// `C_d`, `C_g` and `A` for the distributed algorithm.
///
/// `A` and `C_g` are defined in terms of each other. Starting from
/// `A0 = max(3, 3G / (2 beta D))`, the pair is iterated as
/// `A <- max(A0, (2 beta C_d + C_g(A)) / (beta D))` for at most 100 steps.
/// Because `C_g(A) >= sqrt(n) k0 beta D A`, the map grows at least
/// geometrically and has no finite fixed point whenever `beta > 0`; in that
/// case the single-pass value `C_g(A0)` is returned with `converged = false`.
pub fn algorithm_constants(gossip: &GossipMatrix, d: f64, g: f64, beta: f64) -> Result<DistConstants> {
    if !(d > 0.0 && g > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("D, G, beta must be positive (D = {d}, G = {g}, beta = {beta})")));
    }
    let n = gossip.n();
    let c_d = gossip.k0() as f64 * (n as f64).sqrt() * d;
    let a0 = 3.0f64.max(3.0 * g / (2.0 * beta * d));
    let step = |a: f64| -> (f64, f64) {
        let c_g = c_g_of(gossip, n, d, g, beta, c_d, a);
        (a0.max((2.0 * beta * c_d + c_g) / (beta * d)), c_g)
    };
    let (a1, c_g1) = step(a0);
    let mut a = a1;
    for i in 1..=100 {
        let (next, c_g) = step(a);
        if !next.is_finite() {
            break;
        }
        if (next - a).abs() <= 1e-12 * a.max(1.0) {
            return Ok(DistConstants { c_d, c_g, a: next, iterations: i, converged: true });
        }
        a = next;
    }
    log::warn!("A/C_g fixed point diverges; using single-pass A = {a1:.6e}");
    Ok(DistConstants { c_d, c_g: c_g1, a: a1, iterations: 100, converged: false })
}

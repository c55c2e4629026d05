//! Rate-based recurrent networks and random graph ensembles.
//!
//! A network of `n` rate neurons obeys `S x' = −x + W x + S u`, i.e.
//! `A = S⁻¹(−I + W)` and `B = S` with `S = diag(τ)`. `W[(i, j)]` is the weight
//! from neuron `j` onto neuron `i`, so column `j` carries neuron `j`'s sign.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::LtvSystem;

/// What a random stream is used for. Each purpose gets an independent
/// generator for the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Graph,
    Weights,
    Neurons,
    Endpoints,
    Prior,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            Self::Graph => 0x6772_6170_6800_0001,
            Self::Weights => 0x7765_6967_6874_0002,
            Self::Neurons => 0x6e65_7572_6f6e_0003,
            Self::Endpoints => 0x656e_6470_7473_0004,
            Self::Prior => 0x7072_696f_7200_0005,
        }
    }
}

/// Generator for realization `index` of an ensemble with master `seed`.
pub fn realization_rng(seed: u64, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.tag());
    rng.set_stream(index);
    rng
}

fn uniform_open(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let x: f64 = rng.sample(Open01);
    lo + (hi - lo) * x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateNetConfig {
    pub n: usize,
    pub n_exc: usize,
    /// Time constants in ms.
    pub tau_range: (f64, f64),
    pub exc_weight: (f64, f64),
    pub inh_weight: (f64, f64),
    pub seed: u64,
}

impl Default for RateNetConfig {
    fn default() -> Self {
        Self {
            n: 100,
            n_exc: 80,
            tau_range: (5.0, 10.0),
            exc_weight: (0.0, 1.0),
            inh_weight: (-1.0, 0.0),
            seed: 0,
        }
    }
}

impl RateNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Spec("network needs n >= 1".into()));
        }
        if self.n_exc > self.n {
            return Err(Error::Spec(format!(
                "n_exc = {} exceeds n = {}",
                self.n_exc, self.n
            )));
        }
        check_range(self.tau_range, "tau_range")?;
        if self.tau_range.0 <= 0.0 {
            return Err(Error::Spec("time constants must be positive".into()));
        }
        check_range(self.exc_weight, "exc_weight")?;
        check_range(self.inh_weight, "inh_weight")?;
        Ok(())
    }
}

fn check_range(range: (f64, f64), what: &str) -> Result<()> {
    if range.0.is_finite() && range.1.is_finite() && range.0 <= range.1 {
        Ok(())
    } else {
        Err(Error::Spec(format!("{what} must be a finite (lo, hi) with lo <= hi")))
    }
}

/// Time constants and recurrent weights of a rate network.
#[derive(Debug, Clone, PartialEq)]
pub struct RateNetwork {
    tau: DVector<f64>,
    weights: DMatrix<f64>,
}

impl RateNetwork {
    pub fn new(tau: DVector<f64>, weights: DMatrix<f64>) -> Result<Self> {
        let n = tau.len();
        if n == 0 || weights.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "weights are {}x{}, expected {n}x{n}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if tau.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Spec("time constants must be positive and finite".into()));
        }
        if (0..n).any(|i| weights[(i, i)] != 0.0) {
            return Err(Error::Spec("neurons cannot connect to themselves".into()));
        }
        Ok(Self { tau, weights })
    }

    pub fn tau(&self) -> &DVector<f64> {
        &self.tau
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `A = S⁻¹(−I + W)`.
    pub fn a(&self) -> DMatrix<f64> {
        let n = self.tau.len();
        let mut a = &self.weights - DMatrix::<f64>::identity(n, n);
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row /= self.tau[i];
        }
        a
    }

    /// `B = S`.
    pub fn b(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.tau)
    }

    pub fn system(&self) -> LtvSystem {
        LtvSystem::lti(self.a(), self.b()).expect("rate network matrices are square and finite")
    }
}

pub fn sample_time_constants(n: usize, range: (f64, f64), rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform_open(rng, range.0, range.1))
}

/// Dense network: the first `n_exc` neurons are excitatory, the rest inhibitory.
pub fn build_rate_network(config: &RateNetConfig, rng: &mut impl Rng) -> Result<RateNetwork> {
    config.validate()?;
    let n = config.n;
    let tau = sample_time_constants(n, config.tau_range, rng);
    let mut weights = DMatrix::zeros(n, n);
    for j in 0..n {
        let range = if j < config.n_exc {
            config.exc_weight
        } else {
            config.inh_weight
        };
        for i in 0..n {
            if i != j {
                weights[(i, j)] = uniform_open(rng, range.0, range.1);
            }
        }
    }
    RateNetwork::new(tau, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphFamily {
    #[serde(rename = "BA")]
    BarabasiAlbert,
    #[serde(rename = "WS")]
    WattsStrogatz,
}

impl GraphFamily {
    pub fn label(self) -> &'static str {
        match self {
            Self::BarabasiAlbert => "BA",
            Self::WattsStrogatz => "WS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEnsembleConfig {
    pub family: GraphFamily,
    pub n: usize,
    /// Edges added per new node (BA).
    #[serde(default)]
    pub attachment: usize,
    /// Even ring degree (WS).
    #[serde(default)]
    pub ring_degree: usize,
    #[serde(default = "default_rewiring")]
    pub rewiring: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub require_full_rank: bool,
    #[serde(default)]
    pub symmetric_weights: bool,
}

fn default_rewiring() -> f64 {
    0.1
}

fn default_realizations() -> usize {
    100
}

fn default_true() -> bool {
    true
}

pub const MAX_GRAPH_ATTEMPTS: usize = 100;
const RANK_PIVOT_TOL: f64 = 1e-10;

impl GraphEnsembleConfig {
    pub fn barabasi_albert(n: usize, attachment: usize, seed: u64) -> Self {
        Self {
            family: GraphFamily::BarabasiAlbert,
            n,
            attachment,
            ring_degree: 0,
            rewiring: default_rewiring(),
            realizations: default_realizations(),
            seed,
            require_full_rank: true,
            symmetric_weights: false,
        }
    }

    pub fn watts_strogatz(n: usize, ring_degree: usize, rewiring: f64, seed: u64) -> Self {
        Self {
            family: GraphFamily::WattsStrogatz,
            ring_degree,
            rewiring,
            ..Self::barabasi_albert(n, 0, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Spec("realizations must be >= 1".into()));
        }
        match self.family {
            GraphFamily::BarabasiAlbert => {
                if self.attachment == 0 || self.attachment >= self.n {
                    return Err(Error::Spec(format!(
                        "BA needs 1 <= attachment < n, got attachment = {}, n = {}",
                        self.attachment, self.n
                    )));
                }
            }
            GraphFamily::WattsStrogatz => {
                if self.ring_degree < 2 || !self.ring_degree.is_multiple_of(2) || self.ring_degree >= self.n {
                    return Err(Error::Spec(format!(
                        "WS needs an even ring degree in [2, n), got {} with n = {}",
                        self.ring_degree, self.n
                    )));
                }
                if !(0.0..=1.0).contains(&self.rewiring) {
                    return Err(Error::Spec(format!(
                        "rewiring probability must lie in [0, 1], got {}",
                        self.rewiring
                    )));
                }
            }
        }
        Ok(())
    }

    /// Undirected edge count shared by every realization.
    pub fn edge_count(&self) -> usize {
        match self.family {
            GraphFamily::BarabasiAlbert => self.attachment * (self.n - self.attachment),
            GraphFamily::WattsStrogatz => self.n * self.ring_degree / 2,
        }
    }
}

/// Simple undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    /// Pairs `(i, j)` with `i < j`.
    edges: BTreeSet<(usize, usize)>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut adj = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                adj.edges.insert((i, j));
            }
        }
        adj
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Shape(format!("edge ({i}, {j}) outside 0..{n}")));
            }
            if i == j {
                return Err(Error::Spec(format!("self-loop at node {i}")));
            }
            adj.edges.insert((i.min(j), i.max(j)));
        }
        Ok(adj)
    }

    /// Symmetric 0/1 matrix with zero diagonal.
    pub fn from_matrix(mat: &DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(Error::Shape("adjacency must be square".into()));
        }
        let mut adj = Self::empty(n);
        for i in 0..n {
            if mat[(i, i)] != 0.0 {
                return Err(Error::Spec(format!("nonzero diagonal at node {i}")));
            }
            for j in i + 1..n {
                let (a, b) = (mat[(i, j)], mat[(j, i)]);
                if a != b || !(a == 0.0 || a == 1.0) {
                    return Err(Error::Spec(format!(
                        "adjacency must be symmetric 0/1, entry ({i}, {j}) = {a}, ({j}, {i}) = {b}"
                    )));
                }
                if a == 1.0 {
                    adj.edges.insert((i, j));
                }
            }
        }
        Ok(adj)
    }

    /// Parse "i j" lines; blank lines and `#` comments are skipped.
    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<_> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::Spec(format!("line {}: '{s}' is not a node index", lineno + 1))
                })
            };
            if parts.len() != 2 {
                return Err(Error::Spec(format!("line {}: expected 'i j'", lineno + 1)));
            }
            edges.push((parse(parts[0])?, parse(parts[1])?));
        }
        Self::from_edges(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        m
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            nb[i].push(j);
            nb[j].push(i);
        }
        nb
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let nb = self.neighbours();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &nb[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// LU with partial pivoting; full rank when every pivot exceeds 1e-10.
    pub fn is_full_rank(&self) -> bool {
        let lu = self.matrix().lu();
        lu.u().diagonal().iter().all(|p| p.abs() > RANK_PIVOT_TOL)
    }
}

/// `η = E / (n(n−1)/2)`.
pub fn edge_density(adj: &Adjacency) -> f64 {
    let n = adj.node_count();
    if n < 2 {
        return 0.0;
    }
    adj.edge_count() as f64 / (n * (n - 1) / 2) as f64
}

fn barabasi_albert(n: usize, m: usize, rng: &mut impl Rng) -> Adjacency {
    // star on nodes 0..=m, then preferential attachment
    let mut adj = Adjacency::empty(n);
    let mut repeated = Vec::with_capacity(2 * m * n);
    for j in 1..=m {
        adj.edges.insert((0, j));
        repeated.extend([0, j]);
    }
    for new in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(repeated[rng.random_range(0..repeated.len())]);
        }
        for t in targets {
            adj.edges.insert((t, new));
            repeated.extend([t, new]);
        }
    }
    adj
}

fn watts_strogatz(n: usize, k: usize, beta: f64, rng: &mut impl Rng) -> Adjacency {
    let mut adj = Adjacency::empty(n);
    for i in 0..n {
        for d in 1..=k / 2 {
            let j = (i + d) % n;
            adj.edges.insert((i.min(j), i.max(j)));
        }
    }
    for d in 1..=k / 2 {
        for i in 0..n {
            let j = (i + d) % n;
            if rng.random::<f64>() < beta {
                let degree = adj.edges.iter().filter(|&&(a, b)| a == i || b == i).count();
                if degree >= n - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.random_range(0..n);
                    if w != i && !adj.has_edge(i, w) {
                        break w;
                    }
                };
                adj.edges.remove(&(i.min(j), i.max(j)));
                adj.edges.insert((i.min(w), i.max(w)));
            }
        }
    }
    adj
}

/// Realization `index` of the ensemble: connected and, unless disabled,
/// nonsingular. Rejected draws are resampled from the same stream.
pub fn sample_adjacency(config: &GraphEnsembleConfig, index: u64) -> Result<Adjacency> {
    config.validate()?;
    let mut rng = realization_rng(config.seed, StreamPurpose::Graph, index);
    for _ in 0..MAX_GRAPH_ATTEMPTS {
        let adj = match config.family {
            GraphFamily::BarabasiAlbert => barabasi_albert(config.n, config.attachment, &mut rng),
            GraphFamily::WattsStrogatz => {
                watts_strogatz(config.n, config.ring_degree, config.rewiring, &mut rng)
            }
        };
        if adj.is_connected() && (!config.require_full_rank || adj.is_full_rank()) {
            return Ok(adj);
        }
    }
    Err(Error::Generation(format!(
        "no connected{} {} graph in {MAX_GRAPH_ATTEMPTS} attempts (n = {}, realization {index})",
        if config.require_full_rank { " full-rank" } else { "" },
        config.family.label(),
        config.n
    )))
}

/// Replace each edge by `U(0,1)` weights, one draw per direction unless
/// `symmetric`.
pub fn weight_adjacency(adj: &Adjacency, symmetric: bool, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(adj.node_count(), adj.node_count());
    for (i, j) in adj.edges() {
        let a = uniform_open(rng, 0.0, 1.0);
        let b = if symmetric { a } else { uniform_open(rng, 0.0, 1.0) };
        w[(i, j)] = a;
        w[(j, i)] = b;
    }
    w
}

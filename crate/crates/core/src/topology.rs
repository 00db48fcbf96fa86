//! Network graphs, the neighbor-selection law, gossip events and the
//! spectral quantities of the expected mixing matrix.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, start_vector, Matrix, POWER_ITERATION_CAP};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Clique,
    Cycle,
    Star,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [
        TopologyKind::Clique,
        TopologyKind::Cycle,
        TopologyKind::Star,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Clique => "clique",
            TopologyKind::Cycle => "cycle",
            TopologyKind::Star => "star",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clique" | "complete" => Ok(TopologyKind::Clique),
            "cycle" | "ring" => Ok(TopologyKind::Cycle),
            "star" => Ok(TopologyKind::Star),
            other => Err(Error::InvalidTopology(format!(
                "unknown topology kind `{other}`"
            ))),
        }
    }
}

/// Connected undirected graph on agents `0..m`. Edges are stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology", into = "RawTopology")]
pub struct Topology {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawTopology {
    m: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawTopology> for Topology {
    type Error = Error;
    fn try_from(raw: RawTopology) -> Result<Self> {
        Topology::new(raw.m, raw.edges.into_iter().map(|[i, j]| (i, j)))
    }
}

impl From<Topology> for RawTopology {
    fn from(t: Topology) -> Self {
        RawTopology {
            m: t.m,
            edges: t.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

impl Topology {
    /// Builds a graph from unordered pairs, rejecting self-loops, out-of-range
    /// agents and disconnected graphs.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 agents, got {m}"
            )));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop at agent {i}")));
            }
            if i >= m || j >= m {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i}, {j}) out of range for m = {m}"
                )));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in &set {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let topo = Self {
            m,
            edges: set,
            neighbors,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        Ok(topo)
    }

    pub fn build(kind: TopologyKind, m: usize) -> Result<Self> {
        match kind {
            TopologyKind::Clique => {
                if m < 2 {
                    return Err(Error::InvalidTopology(format!(
                        "clique needs m >= 2, got {m}"
                    )));
                }
                Self::new(m, (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))))
            }
            TopologyKind::Cycle => {
                if m < 2 {
                    return Err(Error::InvalidTopology(format!(
                        "cycle needs m >= 2, got {m}"
                    )));
                }
                Self::new(m, (0..m).map(|i| (i, (i + 1) % m)))
            }
            TopologyKind::Star => {
                if m < 3 {
                    return Err(Error::InvalidTopology(format!(
                        "star needs m >= 3, got {m}"
                    )));
                }
                Self::new(m, (1..m).map(|leaf| (0, leaf)))
            }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Row-stochastic neighbor-selection probabilities conforming to a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(try_from = "RawSelection<T>", into = "RawSelection<T>")]
pub struct SelectionMatrix<T> {
    topology: Topology,
    pi: Matrix<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RawSelection<T> {
    topology: Topology,
    pi: Matrix<T>,
}

impl<T: Scalar> TryFrom<RawSelection<T>> for SelectionMatrix<T> {
    type Error = Error;
    fn try_from(raw: RawSelection<T>) -> Result<Self> {
        SelectionMatrix::new(raw.topology, raw.pi)
    }
}

impl<T: Scalar> From<SelectionMatrix<T>> for RawSelection<T> {
    fn from(s: SelectionMatrix<T>) -> Self {
        RawSelection {
            topology: s.topology,
            pi: s.pi,
        }
    }
}

impl<T: Scalar> SelectionMatrix<T> {
    pub fn new(topology: Topology, pi: Matrix<T>) -> Result<Self> {
        let m = topology.m();
        if pi.rows() != m || pi.cols() != m {
            return Err(Error::InvalidSelection(format!(
                "expected {m}x{m} matrix, got {}x{}",
                pi.rows(),
                pi.cols()
            )));
        }
        let tol = T::check_tol(1e-12, m);
        for i in 0..m {
            for j in 0..m {
                let p = pi[(i, j)];
                if !(p >= T::zero()) {
                    return Err(Error::InvalidSelection(format!(
                        "pi[{i}][{j}] = {p} is negative"
                    )));
                }
                if p > T::zero() && (i == j || !topology.has_edge(i, j)) {
                    return Err(Error::InvalidSelection(format!(
                        "pi[{i}][{j}] > 0 but ({i}, {j}) is not an edge"
                    )));
                }
            }
        }
        for (i, s) in pi.row_sums().into_iter().enumerate() {
            if (s - T::one()).abs() > tol {
                return Err(Error::InvalidSelection(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { topology, pi })
    }

    /// Each agent picks one of its neighbors uniformly: `π_ij = 1/deg(i)`.
    pub fn uniform(topology: &Topology) -> Self {
        let m = topology.m();
        let mut pi = Matrix::zeros(m, m);
        for i in 0..m {
            let p = T::one() / T::from_usize_lossy(topology.degree(i));
            for &j in topology.neighbors(i) {
                pi[(i, j)] = p;
            }
        }
        Self {
            topology: topology.clone(),
            pi,
        }
    }

    pub fn m(&self) -> usize {
        self.topology.m()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn pi(&self) -> &Matrix<T> {
        &self.pi
    }

    pub fn prob(&self, i: usize, j: usize) -> T {
        self.pi[(i, j)]
    }

    /// Smallest positive selection probability over the edges.
    pub fn min_edge_prob(&self) -> T {
        self.topology
            .edges()
            .flat_map(|(i, j)| [self.pi[(i, j)], self.pi[(j, i)]])
            .filter(|&p| p > T::zero())
            .fold(T::infinity(), T::min)
    }

    /// Draws the tick-`k` event: waker uniform over agents, peer from the waker's row.
    pub fn sample_event<R: Rng + ?Sized>(&self, rng: &mut R, k: u64) -> GossipEvent {
        let m = self.m();
        let waker = rng.random_range(0..m);
        let neighbors = self.topology.neighbors(waker);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut peer = *neighbors
            .last()
            .expect("connected graph has no isolated agents");
        for &j in neighbors {
            let p = self.pi[(waker, j)].to_f64_lossy();
            if p <= 0.0 {
                continue;
            }
            acc += p;
            if u < acc {
                peer = j;
                break;
            }
        }
        // Rounding may leave u >= acc; the last neighbor with positive mass takes it.
        if self.pi[(waker, peer)] <= T::zero() {
            peer = *neighbors
                .iter()
                .rev()
                .find(|&&j| self.pi[(waker, j)] > T::zero())
                .expect("row has positive mass");
        }
        GossipEvent { k, waker, peer }
    }

    /// `W̄ = E[W(k)] = I − (1/2m) Σ_i Σ_j π_ij (e_i − e_j)(e_i − e_j)'`.
    pub fn mean_matrix(&self) -> Matrix<T> {
        let m = self.m();
        let mut w = Matrix::identity(m);
        let scale = T::one() / T::from_usize_lossy(2 * m);
        for i in 0..m {
            for &j in self.topology.neighbors(i) {
                let p = self.pi[(i, j)] * scale;
                w[(i, i)] -= p;
                w[(j, j)] -= p;
                w[(i, j)] += p;
                w[(j, i)] += p;
            }
        }
        w
    }

    /// Per-agent update probability `γ_i = 1/m + (1/m) Σ_{j ∈ N(i)} π_ji`.
    pub fn gamma(&self) -> Vec<T> {
        let m = self.m();
        let inv_m = T::one() / T::from_usize_lossy(m);
        (0..m)
            .map(|i| {
                let chosen = self
                    .topology
                    .neighbors(i)
                    .iter()
                    .fold(T::zero(), |acc, &j| acc + self.pi[(j, i)]);
                inv_m + inv_m * chosen
            })
            .collect()
    }

    pub fn lambda2(&self) -> Result<T> {
        lambda2(&self.mean_matrix())
    }
}

/// One tick of the global clock: agent `waker` contacts neighbor `peer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipEvent {
    pub k: u64,
    pub waker: usize,
    pub peer: usize,
}

impl GossipEvent {
    pub fn involves(&self, i: usize) -> bool {
        self.waker == i || self.peer == i
    }
}

/// Pairwise averaging matrix `W(k) = I − ½ (e_I − e_J)(e_I − e_J)'`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixMatrix<T> {
    w: Matrix<T>,
}

impl<T: Scalar> MixMatrix<T> {
    pub fn new(event: &GossipEvent, m: usize) -> Self {
        let half = T::lit(0.5);
        let mut w = Matrix::identity(m);
        let (a, b) = (event.waker, event.peer);
        w[(a, a)] = half;
        w[(b, b)] = half;
        w[(a, b)] = half;
        w[(b, a)] = half;
        Self { w }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.w
    }

    /// `v_i = Σ_j W_ij x_j` over agent iterates.
    pub fn apply(&self, xs: &[Vec<T>]) -> Vec<Vec<T>> {
        let m = self.w.rows();
        let d = xs.first().map_or(0, Vec::len);
        (0..m)
            .map(|i| {
                let mut v = vec![T::zero(); d];
                for (j, xj) in xs.iter().enumerate() {
                    let wij = self.w[(i, j)];
                    if wij != T::zero() {
                        crate::linalg::axpy(wij, xj, &mut v);
                    }
                }
                v
            })
            .collect()
    }
}

/// Second largest eigenvalue of a symmetric doubly stochastic `W̄`, computed as
/// the largest eigenvalue of `W̄ − (1/m) 11'` by power iteration on `1⊥`.
pub fn lambda2<T: Scalar>(wbar: &Matrix<T>) -> Result<T> {
    let m = wbar.rows();
    if m < 2 || !wbar.is_square() {
        return Err(Error::Degenerate(format!(
            "mean matrix must be square with m >= 2, got {}x{}",
            wbar.rows(),
            wbar.cols()
        )));
    }
    let center = |x: &mut Vec<T>| {
        let mean = x.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(x.len());
        x.iter_mut().for_each(|v| *v -= mean);
    };
    let mut start = start_vector::<T>(m);
    center(&mut start);
    let apply = |x: &[T]| {
        let mut y = wbar.mul_vec(x);
        center(&mut y);
        y
    };
    let lambda = power_iteration(apply, start, 1e-10, POWER_ITERATION_CAP)?;
    Ok(lambda.max(T::zero()))
}

//! Graph families and assembly of the SLM matrix `Q = a·1 + b·J`.
//!
//! Random families draw from the graph stream of [`crate::rng`] in a fixed
//! order: unordered pairs `(i, j)`, `i < j`, lexicographically, one sign draw
//! per present edge. The same seed therefore yields a bit-identical `J` on
//! every platform.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingOperator, Passivity};
use crate::error::{CimError, Result};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_ALPHA: f64 = -0.2;
pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 0.03;
pub const DEFAULT_DENSITY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    MobiusLadder,
    Complete,
    ErdosRenyi,
    BarabasiAlbert,
    /// Arbitrary symmetric couplings loaded from an edge list.
    Custom,
}

impl GraphFamily {
    pub fn short_name(self) -> &'static str {
        match self {
            GraphFamily::MobiusLadder => "ML",
            GraphFamily::Complete => "K",
            GraphFamily::ErdosRenyi => "ER",
            GraphFamily::BarabasiAlbert => "BA",
            GraphFamily::Custom => "custom",
        }
    }
}

/// Family parameters. Defaults are the reference benchmark values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphParams {
    MobiusLadder {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Complete {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    ErdosRenyi {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default = "default_density")]
        p: f64,
    },
    BarabasiAlbert {
        #[serde(default = "default_beta")]
        beta: f64,
        /// Edges per new node. Defaults to `round(p·(n−1)/2)`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<usize>,
        #[serde(default = "default_density")]
        p: f64,
    },
    Custom,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_density() -> f64 {
    DEFAULT_DENSITY
}

impl GraphParams {
    pub fn family(&self) -> GraphFamily {
        match self {
            GraphParams::MobiusLadder { .. } => GraphFamily::MobiusLadder,
            GraphParams::Complete { .. } => GraphFamily::Complete,
            GraphParams::ErdosRenyi { .. } => GraphFamily::ErdosRenyi,
            GraphParams::BarabasiAlbert { .. } => GraphFamily::BarabasiAlbert,
            GraphParams::Custom => GraphFamily::Custom,
        }
    }

    /// Reference parameters for a family.
    pub fn reference(family: GraphFamily) -> Self {
        match family {
            GraphFamily::MobiusLadder => GraphParams::MobiusLadder { alpha: DEFAULT_ALPHA },
            GraphFamily::Complete => GraphParams::Complete { gamma: DEFAULT_GAMMA },
            GraphFamily::ErdosRenyi => GraphParams::ErdosRenyi {
                beta: DEFAULT_BETA,
                p: DEFAULT_DENSITY,
            },
            GraphFamily::BarabasiAlbert => GraphParams::BarabasiAlbert {
                beta: DEFAULT_BETA,
                m: None,
                p: DEFAULT_DENSITY,
            },
            GraphFamily::Custom => GraphParams::Custom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// A symmetric, zero-diagonal coupling matrix `J` with its provenance.
#[derive(Debug, Clone)]
pub struct GraphInstance {
    pub params: GraphParams,
    pub seed: u64,
    n: usize,
    j: Vec<f64>,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl GraphInstance {
    /// Build from an edge list with `i < j`. Edges must be unique.
    pub fn from_edges(n: usize, edges: Vec<Edge>, params: GraphParams, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(CimError::InvalidGraph("graph has no nodes".into()));
        }
        let mut j = vec![0.0; n * n];
        let mut neighbors = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.i >= e.j || e.j >= n {
                return Err(CimError::InvalidGraph(format!("bad edge ({}, {}) for n = {n}", e.i, e.j)));
            }
            if !e.w.is_finite() {
                return Err(CimError::InvalidGraph(format!("non-finite weight on ({}, {})", e.i, e.j)));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(CimError::InvalidGraph(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
            j[e.i * n + e.j] = e.w;
            j[e.j * n + e.i] = e.w;
            neighbors[e.i].push((e.j, e.w));
            neighbors[e.j].push((e.i, e.w));
        }
        let mut edges = edges;
        edges.sort_by_key(|e| (e.i, e.j));
        for list in &mut neighbors {
            list.sort_by_key(|&(k, _)| k);
        }
        Ok(Self {
            params,
            seed,
            n,
            j,
            edges,
            neighbors,
        })
    }

    /// Uncoupled graph, `J = 0`.
    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, Vec::new(), GraphParams::Custom, 0)
    }

    pub fn family(&self) -> GraphFamily {
        self.params.family()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self, i: usize, k: usize) -> f64 {
        self.j[i * self.n + k]
    }

    /// Row-major `J`.
    pub fn j_matrix(&self) -> &[f64] {
        &self.j
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (self.n * (self.n - 1) / 2) as f64
    }

    /// First row of `J` when `J` is circulant.
    pub fn circulant_row(&self) -> Option<Vec<f64>> {
        let n = self.n;
        let row: Vec<f64> = self.j[..n].to_vec();
        let circulant = (0..n).all(|i| (0..n).all(|k| self.j[i * n + k] == row[(k + n - i) % n]));
        circulant.then_some(row)
    }

    /// Check the structural invariants of the declared family.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |msg: String| Err(CimError::InvalidGraph(msg));
        match self.params {
            GraphParams::MobiusLadder { alpha } => {
                let expected = mobius_ladder_edges(n, alpha)?;
                if expected != self.edges {
                    return bad("edge pattern is not a Möbius ladder".into());
                }
            }
            GraphParams::Complete { gamma } => {
                if self.edges.len() != n * (n - 1) / 2 {
                    return bad("complete graph is missing pairs".into());
                }
                if self.edges.iter().any(|e| e.w.abs() != gamma.abs()) {
                    return bad(format!("complete graph weights must be ±{gamma}"));
                }
            }
            GraphParams::ErdosRenyi { beta, .. } | GraphParams::BarabasiAlbert { beta, .. } => {
                if self.edges.iter().any(|e| e.w.abs() != beta.abs()) {
                    return bad(format!("weights must be ±{beta}"));
                }
            }
            GraphParams::Custom => {}
        }
        Ok(())
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            params: self.params,
            seed: self.seed,
            density: self.density(),
            edges: self.edges.iter().map(|e| (e.i, e.j, e.w)).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        file.into_instance()
    }
}

/// On-disk graph: family parameters, seed and explicit weighted edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub params: GraphParams,
    pub seed: u64,
    /// Achieved edge density, informational.
    #[serde(default)]
    pub density: f64,
    pub edges: Vec<(usize, usize, f64)>,
}

impl GraphFile {
    pub fn into_instance(self) -> Result<GraphInstance> {
        let edges = self.edges.iter().map(|&(i, j, w)| Edge { i, j, w }).collect();
        let g = GraphInstance::from_edges(self.n, edges, self.params, self.seed)?;
        g.validate()?;
        Ok(g)
    }
}

fn mobius_ladder_edges(n: usize, alpha: f64) -> Result<Vec<Edge>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(CimError::InvalidGraph(format!("Möbius ladder needs even n >= 2, got {n}")));
    }
    let mut pairs = BTreeSet::new();
    for i in 0..n {
        for k in [(i + 1) % n, (i + n / 2) % n] {
            if k != i {
                pairs.insert((i.min(k), i.max(k)));
            }
        }
    }
    Ok(pairs.into_iter().map(|(i, j)| Edge { i, j, w: alpha }).collect())
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Preferential attachment: the first new node links to `m` seed nodes,
/// every later node to `m` distinct targets drawn proportionally to degree.
/// Returns sorted pairs.
fn barabasi_albert_pairs(n: usize, m: usize, rng: &mut impl Rng) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * n * m);
    let mut targets: BTreeSet<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            pairs.insert((t.min(source), t.max(source)));
        }
        repeated.extend(targets.iter().copied());
        repeated.extend(std::iter::repeat_n(source, m));
        targets.clear();
        while targets.len() < m {
            targets.insert(repeated[rng.random_range(0..repeated.len())]);
        }
    }
    pairs
}

/// `round(p·(n−1)/2)`: attachment count whose `m(n−m)` edges approach density `p`.
pub fn default_attachment(n: usize, p: f64) -> usize {
    (p * (n as f64 - 1.0) / 2.0).round().max(1.0) as usize
}

pub fn make_graph(params: GraphParams, n: usize, seed: u64) -> Result<GraphInstance> {
    if n < 2 {
        return Err(CimError::InvalidGraph(format!("need at least 2 nodes, got {n}")));
    }
    let mut rng = stream_rng(seed, Stream::Graph);
    let mut edges = Vec::new();
    let mut params = params;
    match &mut params {
        GraphParams::MobiusLadder { alpha } => edges = mobius_ladder_edges(n, *alpha)?,
        GraphParams::Complete { gamma } => {
            for i in 0..n {
                for j in i + 1..n {
                    edges.push(Edge { i, j, w: sign(&mut rng) * *gamma });
                }
            }
        }
        GraphParams::ErdosRenyi { beta, p } => {
            if !(0.0..=1.0).contains(p) {
                return Err(CimError::InvalidGraph(format!("edge probability {p} outside [0, 1]")));
            }
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < *p {
                        edges.push(Edge { i, j, w: sign(&mut rng) * *beta });
                    }
                }
            }
        }
        GraphParams::BarabasiAlbert { beta, m, p } => {
            let attach = m.unwrap_or_else(|| default_attachment(n, *p));
            if attach == 0 || attach >= n {
                return Err(CimError::InvalidGraph(format!(
                    "attachment count m = {attach} must satisfy 1 <= m < n = {n}"
                )));
            }
            *m = Some(attach);
            for (i, j) in barabasi_albert_pairs(n, attach, &mut rng) {
                edges.push(Edge { i, j, w: sign(&mut rng) * *beta });
            }
        }
        GraphParams::Custom => {
            return Err(CimError::InvalidGraph("custom graphs are loaded, not generated".into()))
        }
    }
    GraphInstance::from_edges(n, edges, params, seed)
}

/// Weights of `Q = a·1 + b·J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingAssembly {
    pub a: f64,
    pub b: f64,
}

impl Default for CouplingAssembly {
    fn default() -> Self {
        Self { a: 0.96, b: 0.04 }
    }
}

impl CouplingAssembly {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(CimError::Config(format!("a must lie in (0, 1), got {}", self.a)));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(CimError::Config(format!("b must be non-negative, got {}", self.b)));
        }
        Ok(())
    }
}

/// `Q = a·1 + b·J`: circulant for the Möbius ladder, dense otherwise.
pub fn assemble_q(g: &GraphInstance, asm: CouplingAssembly) -> Result<CouplingOperator> {
    assemble_q_with(g, asm, Passivity::Enforce)
}

pub fn assemble_q_with(g: &GraphInstance, asm: CouplingAssembly, passivity: Passivity) -> Result<CouplingOperator> {
    asm.validate()?;
    let n = g.n();
    if g.family() == GraphFamily::MobiusLadder {
        let row = g.circulant_row().ok_or(CimError::NotCirculant)?;
        // J is symmetric, so its first row is also the first column.
        let kernel = row
            .iter()
            .enumerate()
            .map(|(k, &w)| Complex64::new(if k == 0 { asm.a } else { 0.0 } + asm.b * w, 0.0))
            .collect();
        return CouplingOperator::circulant(kernel, passivity);
    }
    let mut q: Vec<f64> = g.j_matrix().iter().map(|w| asm.b * w).collect();
    for i in 0..n {
        q[i * n + i] += asm.a;
    }
    CouplingOperator::dense_real(n, &q, passivity)
}

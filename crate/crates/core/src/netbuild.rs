//! Turning similarity matrices into networks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::similarity::{Estimator, SimilarityMatrix};
use crate::sphere_grid::SphereGrid;
use crate::surrogates::EdgeBaseline;

/// Baseline standard deviations at or below this make an edge's z-score undefined.
pub const DEGENERATE_SD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub weight: f64,
}

/// How a network was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    Density { density: f64 },
    Value { tau: f64 },
    Knn { k: usize },
    Zscore { density: f64 },
    Quantile { level: f64 },
    Rewired { swaps: usize, geo_tolerance: Option<f64> },
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub p: usize,
    pub weighted: bool,
    #[serde(flatten)]
    pub scheme: Scheme,
    pub estimator: Option<Estimator>,
    /// Edges left out because their baseline was degenerate.
    #[serde(default)]
    pub excluded_edges: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Undirected simple graph on nodes `0..p` with non-negative weights.
#[derive(Clone, Debug)]
pub struct Network {
    p: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<u32>>,
    adj_w: Vec<Vec<f64>>,
    pub meta: NetworkMeta,
    pub grid: Option<Arc<SphereGrid>>,
}

impl Network {
    /// Builds from an edge list; pairs are normalized to `i < j` and sorted.
    pub fn from_edges(p: usize, edges: Vec<Edge>, weighted: bool, scheme: Scheme) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for e in edges {
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            if i == j {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
            if j as usize >= p {
                return Err(Error::invalid(format!("node {j} outside 0..{p}")));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::invalid(format!("edge ({i}, {j}) has invalid weight {}", e.weight)));
            }
            norm.push(Edge {
                i,
                j,
                weight: if weighted { e.weight } else { 1.0 },
            });
        }
        norm.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
        if let Some(w) = norm.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::invalid(format!("duplicate edge ({}, {})", w[0].i, w[0].j)));
        }
        let mut adj = vec![Vec::new(); p];
        let mut adj_w = vec![Vec::new(); p];
        for e in &norm {
            adj[e.i as usize].push(e.j);
            adj_w[e.i as usize].push(e.weight);
            adj[e.j as usize].push(e.i);
            adj_w[e.j as usize].push(e.weight);
        }
        for (a, w) in adj.iter_mut().zip(adj_w.iter_mut()) {
            let mut pairs: Vec<(u32, f64)> = a.iter().copied().zip(w.iter().copied()).collect();
            pairs.sort_by_key(|x| x.0);
            *a = pairs.iter().map(|x| x.0).collect();
            *w = pairs.iter().map(|x| x.1).collect();
        }
        Ok(Network {
            p,
            edges: norm,
            adj,
            adj_w,
            meta: NetworkMeta {
                p,
                weighted,
                scheme,
                estimator: None,
                excluded_edges: 0,
                seed: None,
            },
            grid: None,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weighted(&self) -> bool {
        self.meta.weighted
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge count over the number of node pairs.
    pub fn density(&self) -> f64 {
        if self.p < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (self.p * (self.p - 1) / 2) as f64
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn neighbor_weights(&self, i: usize) -> &[f64] {
        &self.adj_w[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&(j as u32)).is_ok()
    }

    /// Edge weight, 0 when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search(&(j as u32)) {
            Ok(k) => self.adj_w[i][k],
            Err(_) => 0.0,
        }
    }

    pub fn with_grid(mut self, grid: Option<Arc<SphereGrid>>) -> Self {
        self.grid = grid;
        self
    }

    /// Same edges without weights.
    pub fn unweighted(&self) -> Network {
        let mut net = Network::from_edges(self.p, self.edges.clone(), false, self.meta.scheme.clone())
            .expect("valid edges");
        net.meta = NetworkMeta {
            weighted: false,
            ..self.meta.clone()
        };
        net.grid = self.grid.clone();
        net
    }

    /// Sidecar path used for the metadata of an edge-list file.
    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// Writes `i,j,weight` plus a JSON metadata sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.edges.len() * 24 + 16);
        out.push_str("i,j,weight\n");
        for e in &self.edges {
            out.push_str(&format!("{},{},{}\n", e.i, e.j, e.weight));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Internal(e.to_string()))?;
        let mp = Self::meta_path(path);
        fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mp = Self::meta_path(path);
        let meta_text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: NetworkMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::format(format!("{}: {e}", mp.display())))?;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (k == 0 && line.starts_with('i')) {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::format(format!("{}: bad edge row {}: {line}", path.display(), k + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            edges.push(Edge {
                i: f[0].parse().map_err(|_| bad())?,
                j: f[1].parse().map_err(|_| bad())?,
                weight: f[2].parse().map_err(|_| bad())?,
            });
        }
        let mut net = Network::from_edges(meta.p, edges, meta.weighted, meta.scheme.clone())
            .map_err(|e| Error::format(e.to_string()))?;
        net.meta = meta;
        Ok(net)
    }
}

fn finish(
    sim: &SimilarityMatrix,
    edges: Vec<Edge>,
    weighted: bool,
    scheme: Scheme,
    excluded: usize,
) -> Result<Network> {
    let mut net = Network::from_edges(sim.p(), edges, weighted, scheme)?;
    net.meta.estimator = Some(sim.estimator);
    net.meta.excluded_edges = excluded;
    net.grid = sim.grid.clone();
    Ok(net)
}

/// The `m` largest values of `scores` (NaN and flagged pairs never selected),
/// ties broken by ascending `(i, j)`.
fn top_pairs(scores: &SymMatrix, flagged: &[bool], m: usize) -> Vec<(u32, u32, f64)> {
    let p = scores.dim();
    if m == 0 {
        return Vec::new();
    }
    let usable = |i: usize, j: usize, v: f64| !flagged[i] && !flagged[j] && !v.is_nan() && v > f64::NEG_INFINITY;
    let mut values: Vec<f64> = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    scores.for_each_offdiag(|i, j, v| {
        if usable(i, j, v) {
            values.push(v);
        }
    });
    if values.is_empty() {
        return Vec::new();
    }
    let m = m.min(values.len());
    // the m-th largest value
    let (_, cut, _) = values.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
    let cut = *cut;
    drop(values);
    let mut above = Vec::new();
    let mut at = Vec::new();
    scores.for_each_offdiag(|i, j, v| {
        if usable(i, j, v) {
            if v > cut {
                above.push((i as u32, j as u32, v));
            } else if v == cut {
                at.push((i as u32, j as u32, v));
            }
        }
    });
    let need = m - above.len();
    above.extend(at.into_iter().take(need));
    above
}

/// Number of edges for a target density, `ceil(density * p(p-1)/2)`.
pub fn edges_for_density(p: usize, density: f64) -> usize {
    let pairs = (p * p.saturating_sub(1) / 2) as f64;
    let x = density * pairs;
    let r = x.round();
    if (x - r).abs() < 1e-9 * pairs.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!("density {density} must lie in (0, 1]")));
    }
    Ok(())
}

/// Keeps the globally largest similarities up to the target edge fraction.
pub fn threshold_by_density(sim: &SimilarityMatrix, density: f64, weighted: bool) -> Result<Network> {
    check_density(density)?;
    let m = edges_for_density(sim.p(), density);
    let edges = top_pairs(&sim.entries, &sim.flagged, m)
        .into_iter()
        .map(|(i, j, v)| Edge { i, j, weight: v.max(0.0) })
        .collect();
    finish(sim, edges, weighted, Scheme::Density { density }, 0)
}

/// Edge iff similarity is at least `tau`.
pub fn threshold_by_value(sim: &SimilarityMatrix, tau: f64, weighted: bool) -> Result<Network> {
    if tau.is_nan() {
        return Err(Error::invalid("threshold is NaN"));
    }
    let mut edges = Vec::new();
    sim.entries.for_each_offdiag(|i, j, v| {
        if v >= tau && !sim.flagged[i] && !sim.flagged[j] {
            edges.push(Edge {
                i: i as u32,
                j: j as u32,
                weight: v.max(0.0),
            });
        }
    });
    finish(sim, edges, weighted, Scheme::Value { tau }, 0)
}

/// Symmetric union of each node's `k` most similar partners.
pub fn knn_graph(sim: &SimilarityMatrix, k: usize, weighted: bool) -> Result<Network> {
    let p = sim.p();
    if k == 0 || k >= p {
        return Err(Error::invalid(format!("k = {k} must lie in [1, {p})")));
    }
    let picks: Vec<Vec<(u32, f64)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            if sim.flagged[i] {
                return Vec::new();
            }
            let mut cand: Vec<(u32, f64)> = (0..p)
                .filter(|&j| j != i && !sim.flagged[j] && !sim.get(i, j).is_nan())
                .map(|j| (j as u32, sim.get(i, j)))
                .collect();
            cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            cand.truncate(k);
            cand
        })
        .collect();
    let mut edges: Vec<Edge> = Vec::new();
    for (i, list) in picks.iter().enumerate() {
        for &(j, v) in list {
            let (a, b) = if (i as u32) < j { (i as u32, j) } else { (j, i as u32) };
            edges.push(Edge { i: a, j: b, weight: v.max(0.0) });
        }
    }
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    edges.dedup_by(|a, b| (a.i, a.j) == (b.i, b.j));
    finish(sim, edges, weighted, Scheme::Knn { k }, 0)
}

fn check_baseline(sim: &SimilarityMatrix, baseline: &EdgeBaseline) -> Result<()> {
    if baseline.mean.dim() != sim.p() {
        return Err(Error::invalid(format!(
            "baseline covers {} nodes, similarity matrix {}",
            baseline.mean.dim(),
            sim.p()
        )));
    }
    Ok(())
}

/// Per-edge z-scores `(S - mean) / sd` against a surrogate baseline;
/// degenerate edges are NaN.
pub fn zscores(sim: &SimilarityMatrix, baseline: &EdgeBaseline) -> Result<(SymMatrix, usize)> {
    check_baseline(sim, baseline)?;
    let p = sim.p();
    let mut z = SymMatrix::zeros(p);
    let mut excluded = 0;
    for i in 0..p {
        for j in i + 1..p {
            let sd = baseline.std.get(i, j);
            if sd > DEGENERATE_SD {
                z.set(i, j, (sim.get(i, j) - baseline.mean.get(i, j)) / sd);
            } else {
                z.set(i, j, f64::NAN);
                excluded += 1;
            }
        }
    }
    Ok((z, excluded))
}

/// Density threshold applied to the z-scores. Weighted networks carry the
/// (non-negative part of the) z-score as weight.
pub fn zscore_network(
    sim: &SimilarityMatrix,
    baseline: &EdgeBaseline,
    density: f64,
    weighted: bool,
) -> Result<Network> {
    check_density(density)?;
    let (z, excluded) = zscores(sim, baseline)?;
    let p = sim.p();
    if p >= 2 && excluded == p * (p - 1) / 2 {
        return Err(Error::invalid("every edge has a degenerate baseline"));
    }
    let m = edges_for_density(p, density);
    let edges = top_pairs(&z, &sim.flagged, m)
        .into_iter()
        .map(|(i, j, v)| Edge { i, j, weight: v.max(0.0) })
        .collect();
    finish(sim, edges, weighted, Scheme::Zscore { density }, excluded)
}

/// Edge iff the similarity exceeds the baseline quantile at `level`.
pub fn quantile_network(
    sim: &SimilarityMatrix,
    baseline: &EdgeBaseline,
    level: f64,
    weighted: bool,
) -> Result<Network> {
    check_baseline(sim, baseline)?;
    let q = baseline
        .quantile(level)
        .ok_or_else(|| Error::invalid(format!("baseline has no quantile at level {level}")))?;
    let mut edges = Vec::new();
    sim.entries.for_each_offdiag(|i, j, v| {
        if v > q.get(i, j) && !sim.flagged[i] && !sim.flagged[j] {
            edges.push(Edge {
                i: i as u32,
                j: j as u32,
                weight: v.max(0.0),
            });
        }
    });
    finish(sim, edges, weighted, Scheme::Quantile { level }, 0)
}

/// Builds a network with a scheme that needs only the similarity matrix.
pub fn construct(sim: &SimilarityMatrix, scheme: &Scheme, weighted: bool) -> Result<Network> {
    match *scheme {
        Scheme::Density { density } => threshold_by_density(sim, density, weighted),
        Scheme::Value { tau } => threshold_by_value(sim, tau, weighted),
        Scheme::Knn { k } => knn_graph(sim, k, weighted),
        _ => Err(Error::invalid("scheme cannot be built from a similarity matrix alone")),
    }
}

/// Rebuilds a network from its similarity matrix and recorded metadata.
/// Baseline-dependent schemes need the baseline and are rejected here.
pub fn rebuild(sim: &SimilarityMatrix, meta: &NetworkMeta) -> Result<Network> {
    construct(sim, &meta.scheme, meta.weighted)
}

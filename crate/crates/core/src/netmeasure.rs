//! Node, edge and global measures of networks.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netbuild::Network;
use crate::seeds::{rng_from_seed, substream};
use crate::sphere_grid::SphereGrid;

/// Sources per block in parallel all-sources traversals; fixes the reduction order.
const SOURCE_BLOCK: usize = 32;

/// Row sums of the adjacency matrix (weights for weighted networks),
/// optionally divided by `p - 1`.
pub fn degrees(net: &Network, normalized: bool) -> Vec<f64> {
    let p = net.p();
    let scale = if normalized && p > 1 { 1.0 / (p - 1) as f64 } else { 1.0 };
    (0..p)
        .map(|i| {
            let d = if net.weighted() {
                net.neighbor_weights(i).iter().sum::<f64>()
            } else {
                net.degree(i) as f64
            };
            d * scale
        })
        .collect()
}

/// Neighbor counts, ignoring weights.
pub fn unweighted_degrees(net: &Network, normalized: bool) -> Vec<f64> {
    let p = net.p();
    let scale = if normalized && p > 1 { 1.0 / (p - 1) as f64 } else { 1.0 };
    (0..p).map(|i| net.degree(i) as f64 * scale).collect()
}

/// Positions in `b` of elements shared by sorted slices `a` and `b`, paired with positions in `a`.
fn common_positions(a: &[u32], b: &[u32], mut f: impl FnMut(usize, usize)) {
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                f(x, y);
                x += 1;
                y += 1;
            }
        }
    }
}

/// Number of triangles through each node.
pub fn triangles(net: &Network) -> Vec<usize> {
    (0..net.p())
        .into_par_iter()
        .map(|i| {
            let ni = net.neighbors(i);
            let mut count = 0;
            for &j in ni {
                common_positions(ni, net.neighbors(j as usize), |_, _| count += 1);
            }
            count / 2
        })
        .collect()
}

/// Local clustering coefficients; nodes of degree below 2 report 0.
///
/// Unweighted: `2 t_i / (d_i (d_i - 1))` with `t_i` triangles at `i`.
/// Weighted: geometric mean form over weights scaled by the network maximum.
pub fn clustering(net: &Network, weighted: bool) -> Vec<f64> {
    let max_w = net.edges().iter().map(|e| e.weight).fold(0.0, f64::max);
    (0..net.p())
        .into_par_iter()
        .map(|i| {
            let ni = net.neighbors(i);
            let d = ni.len();
            if d < 2 {
                return 0.0;
            }
            let wi = net.neighbor_weights(i);
            let mut sum = 0.0;
            for (a, &j) in ni.iter().enumerate() {
                let wj = net.neighbor_weights(j as usize);
                common_positions(ni, net.neighbors(j as usize), |x, y| {
                    sum += if weighted && max_w > 0.0 {
                        (wi[a] * wj[y] * wi[x] / (max_w * max_w * max_w)).cbrt()
                    } else {
                        1.0
                    };
                });
            }
            // every triangle was visited from both of its other corners
            sum / (d * (d - 1)) as f64
        })
        .collect()
}

struct Traversal {
    order: Vec<u32>,
    dist: Vec<i64>,
    sigma: Vec<f64>,
    queue: VecDeque<u32>,
    delta: Vec<f64>,
}

impl Traversal {
    fn new(p: usize) -> Self {
        Traversal {
            order: Vec::with_capacity(p),
            dist: vec![-1; p],
            sigma: vec![0.0; p],
            queue: VecDeque::with_capacity(p),
            delta: vec![0.0; p],
        }
    }

    fn bfs(&mut self, net: &Network, s: usize) {
        self.order.clear();
        self.dist.fill(-1);
        self.sigma.fill(0.0);
        self.dist[s] = 0;
        self.sigma[s] = 1.0;
        self.queue.push_back(s as u32);
        while let Some(v) = self.queue.pop_front() {
            self.order.push(v);
            let dv = self.dist[v as usize];
            for &w in net.neighbors(v as usize) {
                let w = w as usize;
                if self.dist[w] < 0 {
                    self.dist[w] = dv + 1;
                    self.queue.push_back(w as u32);
                }
                if self.dist[w] == dv + 1 {
                    self.sigma[w] += self.sigma[v as usize];
                }
            }
        }
    }
}

/// Fraction of shortest paths through each node, summed over unordered
/// pairs of other nodes and divided by `(p - 1)(p - 2) / 2`. Weights are ignored.
pub fn betweenness(net: &Network) -> Vec<f64> {
    let p = net.p();
    if p < 3 {
        return vec![0.0; p];
    }
    let blocks: Vec<Vec<f64>> = (0..p)
        .collect::<Vec<_>>()
        .par_chunks(SOURCE_BLOCK)
        .map(|sources| {
            let mut t = Traversal::new(p);
            let mut acc = vec![0.0; p];
            for &s in sources {
                t.bfs(net, s);
                t.delta.fill(0.0);
                for &w in t.order.iter().rev() {
                    let w = w as usize;
                    for &v in net.neighbors(w) {
                        let v = v as usize;
                        if t.dist[v] == t.dist[w] - 1 {
                            t.delta[v] += t.sigma[v] / t.sigma[w] * (1.0 + t.delta[w]);
                        }
                    }
                    if w != s {
                        acc[w] += t.delta[w];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; p];
    for b in blocks {
        for (t, v) in total.iter_mut().zip(b) {
            *t += v;
        }
    }
    // each unordered pair was counted from both ends
    let norm = 2.0 * ((p - 1) * (p - 2)) as f64 / 2.0;
    total.iter().map(|v| v / norm).collect()
}

/// Hop-count statistics per node; unreachable pairs are excluded from means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortestPaths {
    /// Mean hop distance to reachable other nodes; NaN when none is reachable.
    pub mean: Vec<f64>,
    pub unreachable: Vec<usize>,
    /// Sum of hop distances to reachable other nodes.
    pub total: Vec<u64>,
}

impl ShortestPaths {
    /// Mean over all reachable ordered pairs; NaN when there are none.
    pub fn global_mean(&self) -> f64 {
        let p = self.mean.len();
        let reachable: usize = (0..p).map(|i| p - 1 - self.unreachable[i]).sum();
        if reachable == 0 {
            f64::NAN
        } else {
            self.total.iter().sum::<u64>() as f64 / reachable as f64
        }
    }

    pub fn unreachable_pairs(&self) -> usize {
        self.unreachable.iter().sum::<usize>() / 2
    }
}

/// Breadth-first hop distances from every node. Weights are ignored.
pub fn shortest_path_lengths(net: &Network) -> ShortestPaths {
    let p = net.p();
    let per: Vec<(f64, usize, u64)> = (0..p)
        .into_par_iter()
        .map_init(
            || Traversal::new(p),
            |t, s| {
                t.bfs(net, s);
                let reached = t.order.len() - 1;
                let total: u64 = t.order.iter().map(|&v| t.dist[v as usize] as u64).sum();
                let mean = if reached == 0 { f64::NAN } else { total as f64 / reached as f64 };
                (mean, p - 1 - reached, total)
            },
        )
        .collect();
    ShortestPaths {
        mean: per.iter().map(|x| x.0).collect(),
        unreachable: per.iter().map(|x| x.1).collect(),
        total: per.iter().map(|x| x.2).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending bin edges in radians.
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub normalized: bool,
}

impl Histogram {
    fn bin(&self, x: f64) -> usize {
        let bins = self.counts.len();
        let width = self.edges[bins] / bins as f64;
        ((x / width) as usize).min(bins - 1)
    }
}

/// Histogram of great-circle link lengths on `[0, pi]`. The normalized variant
/// divides each bin by the number of node pairs at that distance.
pub fn link_length_histogram(net: &Network, grid: &SphereGrid, bins: usize, normalized: bool) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if grid.len() != net.p() {
        return Err(Error::invalid("grid and network sizes differ"));
    }
    let pi = std::f64::consts::PI;
    let mut hist = Histogram {
        edges: (0..=bins).map(|k| pi * k as f64 / bins as f64).collect(),
        counts: vec![0.0; bins],
        normalized,
    };
    let mut counts = vec![0u64; bins];
    for e in net.edges() {
        counts[hist.bin(grid.angle(e.i as usize, e.j as usize))] += 1;
    }
    if normalized {
        let available = (0..grid.len())
            .into_par_iter()
            .fold(
                || vec![0u64; bins],
                |mut acc, i| {
                    for j in i + 1..grid.len() {
                        acc[hist.bin(grid.angle(i, j))] += 1;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; bins],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        for k in 0..bins {
            hist.counts[k] = if available[k] == 0 { 0.0 } else { counts[k] as f64 / available[k] as f64 };
        }
    } else {
        for k in 0..bins {
            hist.counts[k] = counts[k] as f64;
        }
    }
    Ok(hist)
}

/// Number of triangles containing each edge, in `net.edges()` order.
pub fn edge_triangles(net: &Network) -> Vec<usize> {
    net.edges()
        .par_iter()
        .map(|e| {
            let mut t = 0;
            common_positions(net.neighbors(e.i as usize), net.neighbors(e.j as usize), |_, _| t += 1);
            t
        })
        .collect()
}

/// Augmented Forman curvature `4 - d_i - d_j + 3 t_ij` per edge, in `net.edges()` order.
pub fn forman_curvature(net: &Network) -> Vec<f64> {
    net.edges()
        .iter()
        .zip(edge_triangles(net))
        .map(|(e, t)| 4.0 - net.degree(e.i as usize) as f64 - net.degree(e.j as usize) as f64 + 3.0 * t as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MadResult {
    pub mad: f64,
    pub shuffled_mean: f64,
    /// `mad / shuffled_mean`; NaN for networks without edges.
    pub ratio: f64,
}

fn max_ball_mean(balls: &[Vec<u32>], values: &[f64]) -> f64 {
    balls
        .iter()
        .map(|b| b.iter().map(|&k| values[k as usize]).sum::<f64>() / b.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximal average degree over all `eps`-balls, compared to the same
/// statistic for `shuffles` random permutations of the degree vector.
pub fn mad_ball(net: &Network, grid: &SphereGrid, eps: f64, seed: u64, shuffles: usize) -> Result<MadResult> {
    if !(eps > 0.0) {
        return Err(Error::invalid("ball radius must be positive"));
    }
    if shuffles == 0 {
        return Err(Error::invalid("at least one shuffle is required"));
    }
    if grid.len() != net.p() {
        return Err(Error::invalid("grid and network sizes differ"));
    }
    let balls = grid.epsilon_balls(eps)?;
    let deg = unweighted_degrees(net, false);
    let mad = max_ball_mean(&balls, &deg);
    let shuffled: Vec<f64> = (0..shuffles)
        .into_par_iter()
        .map(|r| {
            let mut d = deg.clone();
            d.shuffle(&mut rng_from_seed(substream(seed, &[r as u64])));
            max_ball_mean(&balls, &d)
        })
        .collect();
    let shuffled_mean = shuffled.iter().sum::<f64>() / shuffles as f64;
    Ok(MadResult {
        mad,
        shuffled_mean,
        ratio: mad / shuffled_mean,
    })
}

/// Scalar summaries of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMeasures {
    pub p: usize,
    pub edge_count: usize,
    pub density: f64,
    pub mean_degree: f64,
    pub mean_weighted_degree: f64,
    pub mean_clustering: f64,
    pub mean_weighted_clustering: f64,
    pub mean_shortest_path: f64,
    pub unreachable_pairs: usize,
    pub max_betweenness: f64,
    pub mean_curvature: f64,
    pub max_link_length: f64,
}

/// All per-node, per-edge and global measures of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub degree: Vec<f64>,
    pub weighted_degree: Vec<f64>,
    pub clustering: Vec<f64>,
    pub weighted_clustering: Vec<f64>,
    pub mean_shortest_path: Vec<f64>,
    pub unreachable: Vec<usize>,
    pub betweenness: Vec<f64>,
    pub edge_length: Vec<f64>,
    pub curvature: Vec<f64>,
    pub link_lengths: Option<Histogram>,
    pub link_lengths_normalized: Option<Histogram>,
    pub global: GlobalMeasures,
}

fn mean(x: &[f64]) -> f64 {
    let finite: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

impl MeasureReport {
    /// Degrees are normalized by `p - 1`. Link lengths need a grid.
    pub fn compute(net: &Network, grid: Option<&SphereGrid>, bins: usize) -> Result<Self> {
        let degree = unweighted_degrees(net, true);
        let weighted_degree = degrees(net, true);
        let clust = clustering(net, false);
        let wclust = clustering(net, true);
        let sp = shortest_path_lengths(net);
        let betw = betweenness(net);
        let curvature = forman_curvature(net);
        let (edge_length, raw, normalized) = match grid {
            Some(g) => {
                if g.len() != net.p() {
                    return Err(Error::invalid("grid and network sizes differ"));
                }
                let lengths = net.edges().iter().map(|e| g.angle(e.i as usize, e.j as usize)).collect();
                (
                    lengths,
                    Some(link_length_histogram(net, g, bins, false)?),
                    Some(link_length_histogram(net, g, bins, true)?),
                )
            }
            None => (Vec::new(), None, None),
        };
        let global = GlobalMeasures {
            p: net.p(),
            edge_count: net.edge_count(),
            density: net.density(),
            mean_degree: mean(&degree),
            mean_weighted_degree: mean(&weighted_degree),
            mean_clustering: mean(&clust),
            mean_weighted_clustering: mean(&wclust),
            mean_shortest_path: sp.global_mean(),
            unreachable_pairs: sp.unreachable_pairs(),
            max_betweenness: betw.iter().copied().fold(0.0, f64::max),
            mean_curvature: mean(&curvature),
            max_link_length: edge_length.iter().copied().fold(0.0, f64::max),
        };
        Ok(MeasureReport {
            degree,
            weighted_degree,
            clustering: clust,
            weighted_clustering: wclust,
            mean_shortest_path: sp.mean,
            unreachable: sp.unreachable,
            betweenness: betw,
            edge_length,
            curvature,
            link_lengths: raw,
            link_lengths_normalized: normalized,
            global,
        })
    }

    /// Scalars and histograms as JSON.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "global": self.global,
            "link_lengths": self.link_lengths,
            "link_lengths_normalized": self.link_lengths_normalized,
        })
    }

    /// Writes `<dir>/summary.json`, `<dir>/nodes.csv` and `<dir>/edges.csv`.
    pub fn write(&self, dir: &Path, net: &Network) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&self.summary_json()).map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;

        let mut nodes = String::from("node,degree,weighted_degree,clustering,weighted_clustering,mean_shortest_path,unreachable,betweenness\n");
        for i in 0..self.degree.len() {
            nodes.push_str(&format!(
                "{i},{},{},{},{},{},{},{}\n",
                self.degree[i],
                self.weighted_degree[i],
                self.clustering[i],
                self.weighted_clustering[i],
                self.mean_shortest_path[i],
                self.unreachable[i],
                self.betweenness[i]
            ));
        }
        let path = dir.join("nodes.csv");
        std::fs::write(&path, nodes).map_err(|e| Error::io(&path, e))?;

        let mut edges = String::from("i,j,weight,length,curvature\n");
        for (k, e) in net.edges().iter().enumerate() {
            let len = self.edge_length.get(k).copied().unwrap_or(f64::NAN);
            edges.push_str(&format!("{},{},{},{},{}\n", e.i, e.j, e.weight, len, self.curvature[k]));
        }
        let path = dir.join("edges.csv");
        std::fs::write(&path, edges).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{Edge, Scheme};

    fn graph(p: usize, pairs: &[(u32, u32)]) -> Network {
        let edges = pairs.iter().map(|&(i, j)| Edge { i, j, weight: 1.0 }).collect();
        Network::from_edges(p, edges, false, Scheme::Custom).unwrap()
    }

    fn complete(p: usize) -> Network {
        let mut pairs = Vec::new();
        for i in 0..p as u32 {
            for j in i + 1..p as u32 {
                pairs.push((i, j));
            }
        }
        graph(p, &pairs)
    }

    #[test]
    fn degree_examples() {
        assert!(degrees(&complete(6), true).iter().all(|&d| d == 1.0));
        assert!(degrees(&graph(4, &[]), false).iter().all(|&d| d == 0.0));
        assert_eq!(degrees(&graph(3, &[(0, 1), (1, 2)]), false), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn clustering_examples() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(clustering(&tri, false), vec![1.0; 3]);
        assert_eq!(clustering(&tri, true), vec![1.0; 3]);
        let star = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(clustering(&star, false), vec![0.0; 5]);
    }

    #[test]
    fn weighted_clustering_uses_scaled_geometric_mean() {
        let edges = vec![
            Edge { i: 0, j: 1, weight: 1.0 },
            Edge { i: 1, j: 2, weight: 0.5 },
            Edge { i: 0, j: 2, weight: 0.25 },
            Edge { i: 2, j: 3, weight: 0.5 },
        ];
        let net = Network::from_edges(4, edges, true, Scheme::Custom).unwrap();
        let c = clustering(&net, true);
        let g = (1.0f64 * 0.5 * 0.25).cbrt();
        assert!((c[0] - g).abs() < 1e-15);
        // node 2 has degree 3: 2 * g / (3 * 2)
        assert!((c[2] - g / 3.0).abs() < 1e-15);
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn betweenness_examples() {
        assert_eq!(betweenness(&graph(3, &[(0, 1), (1, 2)])), vec![0.0, 1.0, 0.0]);
        assert_eq!(betweenness(&graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shortest_path_examples() {
        let sp = shortest_path_lengths(&complete(5));
        assert!(sp.mean.iter().all(|&m| m == 1.0));
        let sp = shortest_path_lengths(&graph(3, &[(0, 1), (1, 2)]));
        assert_eq!(sp.mean, vec![1.5, 1.0, 1.5]);
        let sp = shortest_path_lengths(&graph(4, &[(0, 1)]));
        assert!(sp.mean[2].is_nan());
        assert_eq!(sp.unreachable, vec![2, 2, 3, 3]);
        assert_eq!(sp.unreachable_pairs(), 5);
        assert_eq!(sp.global_mean(), 1.0);
    }

    #[test]
    fn forman_examples() {
        assert_eq!(forman_curvature(&graph(4, &[(1, 2)])), vec![2.0]);
        assert_eq!(forman_curvature(&graph(3, &[(0, 1), (1, 2), (0, 2)])), vec![3.0; 3]);
    }

    #[test]
    fn link_length_examples() {
        let grid = SphereGrid::fekete(40, 50, 3).unwrap();
        let h = link_length_histogram(&graph(40, &[]), &grid, 10, false).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0.0));
        let h = link_length_histogram(&complete(40), &grid, 10, true).unwrap();
        assert!(h.counts.iter().all(|&c| c == 1.0 || c == 0.0));
        assert!(h.counts.iter().any(|&c| c == 1.0));
        let h = link_length_histogram(&complete(40), &grid, 10, false).unwrap();
        assert_eq!(h.counts.iter().sum::<f64>(), (40 * 39 / 2) as f64);
        assert!(link_length_histogram(&complete(40), &grid, 0, false).is_err());
    }

    #[test]
    fn mad_examples() {
        let grid = SphereGrid::fekete(30, 50, 1).unwrap();
        // ring: every degree equal
        let pairs: Vec<(u32, u32)> = (0..30u32).map(|i| (i, (i + 1) % 30)).collect();
        let r = mad_ball(&graph(30, &pairs), &grid, 0.6, 4, 20).unwrap();
        assert_eq!(r.ratio, 1.0);
        // planted cluster of hubs around node 0
        let ball = grid.epsilon_ball(0, 0.7);
        let mut pairs = Vec::new();
        for (a, &i) in ball.iter().enumerate() {
            for &j in &ball[a + 1..] {
                pairs.push((i, j));
            }
        }
        pairs.push((28, 29));
        let r = mad_ball(&graph(30, &pairs), &grid, 0.7, 4, 50).unwrap();
        assert!(r.ratio > 1.0);
    }

    #[test]
    fn report_lengths_match() {
        let grid = SphereGrid::fekete(20, 20, 1).unwrap();
        let net = graph(20, &[(0, 1), (1, 2), (2, 0), (5, 7)]);
        let r = MeasureReport::compute(&net, Some(&grid), 12).unwrap();
        assert_eq!(r.degree.len(), 20);
        assert_eq!(r.curvature.len(), 4);
        assert_eq!(r.edge_length.len(), 4);
        assert_eq!(r.link_lengths.as_ref().unwrap().counts.iter().sum::<f64>(), 4.0);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path(), &net).unwrap();
        assert!(dir.path().join("nodes.csv").exists());
    }
}

//! Surrogate series, per-edge null baselines, time resampling and rewiring.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::netbuild::{Edge, Network, Scheme};
use crate::seeds::{rng_from_seed, substream};
use crate::similarity::EstimatorSpec;
use crate::sphere_grid::SphereGrid;

/// Uniformly random permutation of `series`.
pub fn shuffle_surrogate(series: &[f64], seed: u64) -> Vec<f64> {
    let mut out = series.to_vec();
    out.shuffle(&mut rng_from_seed(seed));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IaaftConfig {
    pub max_iter: usize,
    /// Stop once the relative L2 change of the amplitude spectrum between
    /// consecutive iterates falls below this.
    pub tol: f64,
}

impl Default for IaaftConfig {
    fn default() -> Self {
        IaaftConfig {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IaaftResult {
    pub series: Vec<f64>,
    pub iterations: usize,
    /// True when the spectrum change fell below `tol` or the ranks stopped changing.
    pub converged: bool,
    /// Relative spectrum change in the last iteration.
    pub spectral_change: f64,
    /// `||A(surrogate) - A(original)|| / ||A(original)||` for amplitude spectra `A`.
    pub spectral_deviation: f64,
}

/// FFT plans for one series length, reusable across surrogates.
pub struct Iaaft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    config: IaaftConfig,
}

impl Iaaft {
    pub fn new(n: usize, config: IaaftConfig) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid(format!("IAAFT needs at least 4 samples, got {n}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Iaaft {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            config,
        })
    }

    fn spectrum(&self, x: &[f64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward.process(buf);
    }

    pub fn surrogate(&self, series: &[f64], seed: u64) -> Result<IaaftResult> {
        let n = self.n;
        if series.len() != n {
            return Err(Error::invalid(format!(
                "series length {} differs from planned length {n}",
                series.len()
            )));
        }
        let mut sorted = series.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        if sorted[0] == sorted[n - 1] {
            return Ok(IaaftResult {
                series: series.to_vec(),
                iterations: 0,
                converged: true,
                spectral_change: 0.0,
                spectral_deviation: 0.0,
            });
        }
        let mut buf = Vec::with_capacity(n);
        self.spectrum(series, &mut buf);
        let target: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
        let target_norm = target.iter().map(|a| a * a).sum::<f64>().sqrt();

        let mut current = shuffle_surrogate(series, seed);
        self.spectrum(&current, &mut buf);
        let mut amp: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut next = vec![0.0; n];
        let mut iterations = 0;
        let mut converged = false;
        let mut change = f64::INFINITY;
        while iterations < self.config.max_iter {
            iterations += 1;
            // impose the target amplitudes, keep the phases
            for (c, &a) in buf.iter_mut().zip(&target) {
                let norm = c.norm();
                *c = if norm > 0.0 { *c * (a / norm) } else { Complex64::new(a, 0.0) };
            }
            self.inverse.process(&mut buf);
            let y: Vec<f64> = buf.iter().map(|c| c.re).collect();
            // impose the value distribution by rank
            order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
            for (rank, &k) in order.iter().enumerate() {
                next[k] = sorted[rank];
            }
            let fixed_point = next == current;
            std::mem::swap(&mut current, &mut next);
            self.spectrum(&current, &mut buf);
            let new_amp: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
            change = new_amp
                .iter()
                .zip(&amp)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / target_norm;
            amp = new_amp;
            if fixed_point || change < self.config.tol {
                converged = true;
                break;
            }
        }
        let deviation = amp
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / target_norm;
        Ok(IaaftResult {
            series: current,
            iterations,
            converged,
            spectral_change: change,
            spectral_deviation: deviation,
        })
    }
}

/// Iterative amplitude adjusted Fourier transform surrogate.
pub fn iaaft_surrogate(series: &[f64], config: IaaftConfig, seed: u64) -> Result<IaaftResult> {
    Iaaft::new(series.len(), config)?.surrogate(series, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMethod {
    Shuffle,
    Iaaft,
}

/// Per-edge statistics of similarities between surrogate series.
#[derive(Clone, Debug)]
pub struct EdgeBaseline {
    pub method: SurrogateMethod,
    pub m: usize,
    pub mean: SymMatrix,
    /// Sample standard deviation (divisor `m - 1`).
    pub std: SymMatrix,
    pub levels: Vec<f64>,
    pub quantiles: Vec<SymMatrix>,
}

impl EdgeBaseline {
    pub fn quantile(&self, level: f64) -> Option<&SymMatrix> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map(|k| &self.quantiles[k])
    }

    /// Upper-triangle binary with a header: magic, method, m, p, levels,
    /// then mean, std and each quantile matrix (packed, diagonal included).
    pub fn write_binary(&self, path: &std::path::Path) -> Result<()> {
        let p = self.mean.dim();
        let mut buf = Vec::new();
        buf.extend_from_slice(b"FNEB");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.push(match self.method {
            SurrogateMethod::Shuffle => 0,
            SurrogateMethod::Iaaft => 1,
        });
        buf.extend_from_slice(&(self.m as u64).to_le_bytes());
        buf.extend_from_slice(&(p as u64).to_le_bytes());
        buf.extend_from_slice(&(self.levels.len() as u64).to_le_bytes());
        for l in &self.levels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        for mat in std::iter::once(&self.mean)
            .chain(std::iter::once(&self.std))
            .chain(self.quantiles.iter())
        {
            for v in mat.packed() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Order-statistic interpolation (linear between closest ranks).
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = level * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn surrogate_dataset(
    data: &Dataset,
    method: SurrogateMethod,
    iaaft: Option<&Iaaft>,
    seed: u64,
    replicate: usize,
) -> Result<Dataset> {
    let (p, n) = (data.p(), data.n());
    let rows: Vec<Result<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let s = substream(seed, &[replicate as u64, i as u64]);
            match method {
                SurrogateMethod::Shuffle => Ok(shuffle_surrogate(data.row(i), s)),
                SurrogateMethod::Iaaft => iaaft.expect("planned").surrogate(data.row(i), s).map(|r| r.series),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(p * n);
    for r in rows {
        values.extend(r?);
    }
    let mut out = Dataset::new(data.grid().clone(), n, values)?;
    out.flagged = data.flagged.clone();
    Ok(out)
}

/// Similarity statistics over `m` replicates in which every node series is
/// surrogated independently. Quantile samples are held in single precision.
pub fn edge_baseline(
    data: &Dataset,
    estimator: EstimatorSpec,
    method: SurrogateMethod,
    m: usize,
    levels: &[f64],
    seed: u64,
) -> Result<EdgeBaseline> {
    if m < 2 {
        return Err(Error::invalid("a baseline needs at least 2 replicates"));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("quantile level {l} outside [0, 1]")));
    }
    let p = data.p();
    let iaaft = match method {
        SurrogateMethod::Iaaft => Some(Iaaft::new(data.n(), IaaftConfig::default())?),
        SurrogateMethod::Shuffle => None,
    };
    let len = p * (p + 1) / 2;
    let mut sum = vec![0.0f64; len];
    let mut sum_sq_dev = vec![0.0f64; len];
    let mut samples: Vec<f32> = if levels.is_empty() { Vec::new() } else { vec![0.0; len * m] };
    for r in 0..m {
        let surr = surrogate_dataset(data, method, iaaft.as_ref(), seed, r)?;
        let sim = estimator.estimate(&surr)?;
        let vals = sim.entries.packed();
        // Welford update of mean and squared deviations
        let count = (r + 1) as f64;
        for k in 0..len {
            let v = vals[k];
            let old_mean = sum[k];
            let new_mean = old_mean + (v - old_mean) / count;
            sum_sq_dev[k] += (v - old_mean) * (v - new_mean);
            sum[k] = new_mean;
        }
        if !samples.is_empty() {
            for k in 0..len {
                samples[k * m + r] = vals[k] as f32;
            }
        }
    }
    let mean = SymMatrix::from_packed(p, sum)?;
    let std = SymMatrix::from_packed(
        p,
        sum_sq_dev.iter().map(|s| (s / (m - 1) as f64).max(0.0).sqrt()).collect(),
    )?;
    let mut quantiles = Vec::with_capacity(levels.len());
    if !levels.is_empty() {
        let per_edge: Vec<Vec<f64>> = samples
            .par_chunks_mut(m)
            .map(|chunk| {
                let mut s: Vec<f64> = chunk.iter().map(|&v| v as f64).collect();
                s.sort_by(|a, b| a.total_cmp(b));
                levels.iter().map(|&l| quantile_sorted(&s, l)).collect()
            })
            .collect();
        for q in 0..levels.len() {
            quantiles.push(SymMatrix::from_packed(p, per_edge.iter().map(|v| v[q]).collect())?);
        }
    }
    Ok(EdgeBaseline {
        method,
        m,
        mean,
        std,
        levels: levels.to_vec(),
        quantiles,
    })
}

/// Default moving-block length `round(n^(1/3))`.
pub fn default_block_len(n: usize) -> usize {
    ((n as f64).cbrt().round() as usize).clamp(1, n.max(1))
}

/// Moving-block bootstrap: blocks of consecutive indices with uniform
/// starts in `[0, n - block_len]`, concatenated and truncated to `n`.
pub fn block_bootstrap_indices(n: usize, block_len: usize, seed: u64) -> Result<Vec<usize>> {
    if block_len == 0 || block_len > n {
        return Err(Error::invalid(format!("block length {block_len} outside [1, {n}]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n + block_len);
    while out.len() < n {
        let start = rng.random_range(0..=n - block_len);
        out.extend(start..start + block_len);
    }
    out.truncate(n);
    Ok(out)
}

/// Selects the same time indices for every node.
pub fn resample_dataset(data: &Dataset, indices: &[usize]) -> Result<Dataset> {
    data.select_columns(indices)
}

/// Statistics from a rewiring run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewireReport {
    pub attempted: usize,
    pub accepted: usize,
}

fn rewire(
    net: &Network,
    n_swaps: usize,
    seed: u64,
    accept: impl Fn(u32, u32, u32, u32, u32, u32, u32, u32) -> bool,
    geo_tolerance: Option<f64>,
) -> Result<(Network, RewireReport)> {
    if net.weighted() {
        return Err(Error::invalid("rewiring expects an unweighted network"));
    }
    let mut report = RewireReport::default();
    if net.edge_count() < 2 {
        log::warn!("network has fewer than 2 edges; nothing to rewire");
        return Ok((net.clone(), report));
    }
    let mut edges: Vec<(u32, u32)> = net.edges().iter().map(|e| (e.i, e.j)).collect();
    let mut present: HashSet<(u32, u32)> = edges.iter().copied().collect();
    let key = |a: u32, b: u32| if a < b { (a, b) } else { (b, a) };
    let mut rng = rng_from_seed(seed);
    let max_attempts = n_swaps.saturating_mul(100).max(100);
    while report.accepted < n_swaps && report.attempted < max_attempts {
        report.attempted += 1;
        let x = rng.random_range(0..edges.len());
        let y = rng.random_range(0..edges.len());
        if x == y {
            continue;
        }
        let (a, b) = edges[x];
        let (mut c, mut d) = edges[y];
        if rng.random_bool(0.5) {
            std::mem::swap(&mut c, &mut d);
        }
        // (a,b),(c,d) -> (a,d),(c,b)
        if a == d || c == b || a == c || b == d {
            continue;
        }
        let (n1, n2) = (key(a, d), key(c, b));
        if present.contains(&n1) || present.contains(&n2) {
            continue;
        }
        if !accept(a, b, c, d, a, d, c, b) {
            continue;
        }
        present.remove(&key(a, b));
        present.remove(&key(c, d));
        present.insert(n1);
        present.insert(n2);
        edges[x] = n1;
        edges[y] = n2;
        report.accepted += 1;
    }
    if report.accepted < n_swaps {
        log::warn!(
            "only {} of {} requested swaps accepted after {} attempts",
            report.accepted,
            n_swaps,
            report.attempted
        );
    }
    let list = edges
        .into_iter()
        .map(|(i, j)| Edge { i, j, weight: 1.0 })
        .collect();
    let mut out = Network::from_edges(
        net.p(),
        list,
        false,
        Scheme::Rewired {
            swaps: report.accepted,
            geo_tolerance,
        },
    )?;
    out.meta.estimator = net.meta.estimator;
    out.meta.seed = Some(seed);
    out.grid = net.grid.clone();
    Ok((out, report))
}

/// Double-edge swaps that keep every node degree.
pub fn degree_preserving_rewire(net: &Network, n_swaps: usize, seed: u64) -> Result<(Network, RewireReport)> {
    rewire(net, n_swaps, seed, |_, _, _, _, _, _, _, _| true, None)
}

/// Double-edge swaps accepted only when each replaced link keeps its length
/// within `eps` radians: `(a,b) -> (a,d)` and `(c,d) -> (c,b)`.
pub fn geomodel2_rewire(
    net: &Network,
    grid: &SphereGrid,
    eps: f64,
    n_swaps: usize,
    seed: u64,
) -> Result<(Network, RewireReport)> {
    if grid.len() != net.p() {
        return Err(Error::invalid("grid and network sizes differ"));
    }
    if !(eps >= 0.0) {
        return Err(Error::invalid("length tolerance must be non-negative"));
    }
    let len = |u: u32, v: u32| grid.angle(u as usize, v as usize);
    rewire(
        net,
        n_swaps,
        seed,
        |a, b, c, d, e, f, g, h| (len(a, b) - len(e, f)).abs() <= eps && (len(c, d) - len(g, h)).abs() <= eps,
        Some(eps),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::pearson_matrix;
    use rand_distr::StandardNormal;

    fn ar1(n: usize, a: f64, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut x = Vec::with_capacity(n);
        let mut prev: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - a * a).sqrt();
        for _ in 0..n {
            x.push(prev);
            prev = a * prev + rng.sample::<f64, _>(StandardNormal);
        }
        x
    }

    fn sorted(x: &[f64]) -> Vec<f64> {
        let mut s = x.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        s
    }

    fn lag1(x: &[f64]) -> f64 {
        let (m, s) = crate::dataset::mean_std(x);
        x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / ((x.len() - 1) as f64 * s * s)
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let x = ar1(100, 0.5, 1);
        let a = shuffle_surrogate(&x, 3);
        assert_eq!(sorted(&a), sorted(&x));
        assert_eq!(a, shuffle_surrogate(&x, 3));
        assert_ne!(a, shuffle_surrogate(&x, 4));
    }

    #[test]
    fn iaaft_keeps_values_and_autocorrelation() {
        let mut good = 0;
        for seed in 0..10 {
            let x = ar1(512, 0.7, seed);
            let r = iaaft_surrogate(&x, IaaftConfig::default(), 100 + seed).unwrap();
            assert_eq!(sorted(&r.series), sorted(&x));
            if (lag1(&r.series) - lag1(&x)).abs() <= 0.05 {
                good += 1;
            }
        }
        assert!(good >= 9);
    }

    #[test]
    fn iaaft_constant_and_short() {
        let c = vec![2.5; 10];
        assert_eq!(iaaft_surrogate(&c, IaaftConfig::default(), 0).unwrap().series, c);
        assert!(iaaft_surrogate(&[1.0, 2.0, 3.0], IaaftConfig::default(), 0).is_err());
    }

    #[test]
    fn shuffle_null_quantile() {
        let mut rng = rng_from_seed(42);
        let x: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
        let (mx, sx) = crate::dataset::mean_std(&x);
        let (my, sy) = crate::dataset::mean_std(&y);
        let mut corr: Vec<f64> = (0..10_000)
            .map(|s| {
                let ys = shuffle_surrogate(&y, s);
                x.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (100.0 * sx * sy)
            })
            .collect();
        corr.sort_by(|a, b| a.total_cmp(b));
        let q = quantile_sorted(&corr, 0.95);
        assert!((q - 0.164).abs() < 0.01, "{q}");
    }

    #[test]
    fn block_bootstrap_edge_cases() {
        assert_eq!(block_bootstrap_indices(7, 7, 3).unwrap(), (0..7).collect::<Vec<_>>());
        let idx = block_bootstrap_indices(50, 1, 3).unwrap();
        assert_eq!(idx.len(), 50);
        assert!(idx.iter().all(|&i| i < 50));
        let idx = block_bootstrap_indices(50, 6, 9).unwrap();
        assert!(idx.iter().all(|&i| i < 50));
        assert!(block_bootstrap_indices(5, 0, 0).is_err());
        assert!(block_bootstrap_indices(5, 6, 0).is_err());
        assert_eq!(default_block_len(1000), 10);
    }

    fn small_dataset(p: usize, n: usize, seed: u64) -> Dataset {
        let grid = Arc::new(SphereGrid::fekete(p, 10, 1).unwrap());
        let mut rng = rng_from_seed(seed);
        let v = (0..p * n).map(|_| rng.sample(StandardNormal)).collect();
        Dataset::new(grid, n, v).unwrap()
    }

    #[test]
    fn resampling_moves_columns_jointly() {
        let d = small_dataset(5, 20, 1);
        let idx = block_bootstrap_indices(20, 4, 2).unwrap();
        let r = resample_dataset(&d, &idx).unwrap();
        for (t, &src) in idx.iter().enumerate() {
            for i in 0..5 {
                assert_eq!(r.row(i)[t], d.row(i)[src]);
            }
        }
        let id: Vec<usize> = (0..20).collect();
        assert_eq!(resample_dataset(&d, &id).unwrap().values(), d.values());
        assert!(resample_dataset(&d, &[20]).is_err());
    }

    #[test]
    fn baseline_is_deterministic_and_ordered() {
        let d = small_dataset(6, 40, 3);
        let a = edge_baseline(&d, EstimatorSpec::Pearson, SurrogateMethod::Iaaft, 8, &[0.05, 0.5, 0.95], 7).unwrap();
        let b = edge_baseline(&d, EstimatorSpec::Pearson, SurrogateMethod::Iaaft, 8, &[0.05, 0.5, 0.95], 7).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.quantiles, b.quantiles);
        for k in 0..a.mean.packed().len() {
            assert!(a.std.packed()[k] >= 0.0);
            assert!(a.quantiles[0].packed()[k] <= a.quantiles[1].packed()[k]);
            assert!(a.quantiles[1].packed()[k] <= a.quantiles[2].packed()[k]);
        }
        assert!(a.quantile(0.95).is_some() && a.quantile(0.9).is_none());
        assert!(edge_baseline(&d, EstimatorSpec::Pearson, SurrogateMethod::Shuffle, 1, &[], 0).is_err());
        let _ = pearson_matrix(&d).unwrap();
    }

    fn ring(p: usize, k: usize) -> Network {
        let mut edges = Vec::new();
        for i in 0..p {
            for d in 1..=k {
                edges.push(Edge {
                    i: i as u32,
                    j: ((i + d) % p) as u32,
                    weight: 1.0,
                });
            }
        }
        Network::from_edges(p, edges, false, Scheme::Custom).unwrap()
    }

    #[test]
    fn rewiring_preserves_degrees() {
        let net = ring(40, 3);
        let (r, rep) = degree_preserving_rewire(&net, 200, 5).unwrap();
        assert_eq!(rep.accepted, 200);
        assert_eq!(r.edge_count(), net.edge_count());
        for i in 0..40 {
            assert_eq!(r.degree(i), net.degree(i));
        }
        let single = Network::from_edges(3, vec![Edge { i: 0, j: 1, weight: 1.0 }], false, Scheme::Custom).unwrap();
        assert_eq!(degree_preserving_rewire(&single, 10, 0).unwrap().0.edges(), single.edges());
    }

    #[test]
    fn geomodel_respects_length_tolerance() {
        let grid = SphereGrid::fekete(60, 100, 2).unwrap();
        let mut edges = Vec::new();
        for i in 0..60 {
            let mut by_dist: Vec<usize> = (0..60).filter(|&j| j != i).collect();
            by_dist.sort_by(|&a, &b| grid.angle(i, a).total_cmp(&grid.angle(i, b)));
            for &j in &by_dist[..3] {
                if i < j {
                    edges.push(Edge { i: i as u32, j: j as u32, weight: 1.0 });
                } else if !edges.iter().any(|e| e.i == j as u32 && e.j == i as u32) {
                    edges.push(Edge { i: j as u32, j: i as u32, weight: 1.0 });
                }
            }
        }
        let net = Network::from_edges(60, edges, false, Scheme::Custom).unwrap();
        let eps = 0.05;
        let (r, _) = geomodel2_rewire(&net, &grid, eps, 50, 3).unwrap();
        for i in 0..60 {
            assert_eq!(r.degree(i), net.degree(i));
        }
        // every new link length is within eps of some original link length at that node
        for e in r.edges() {
            let l = grid.angle(e.i as usize, e.j as usize);
            let ok = |u: usize| net.neighbors(u).iter().any(|&v| (grid.angle(u, v as usize) - l).abs() <= eps + 1e-12);
            assert!(ok(e.i as usize) || ok(e.j as usize));
        }
    }
}

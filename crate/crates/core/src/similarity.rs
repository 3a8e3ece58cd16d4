//! Pairwise similarity estimators.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::dataset::{standardize_in_place, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, SymMatrix};
use crate::seeds::hashed_unit;
use crate::sphere_grid::SphereGrid;

/// Series with standard deviation at or below this are treated as constant.
pub const ZERO_VARIANCE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    PearsonEmpirical,
    Spearman,
    LedoitWolf,
    MiBinned,
    MiKsg,
    GroundTruth,
}

impl Estimator {
    pub fn tag(&self) -> &'static str {
        match self {
            Estimator::PearsonEmpirical => "pearson_empirical",
            Estimator::Spearman => "spearman",
            Estimator::LedoitWolf => "ledoit_wolf",
            Estimator::MiBinned => "mi_binned",
            Estimator::MiKsg => "mi_ksg",
            Estimator::GroundTruth => "ground_truth",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "pearson_empirical" | "pearson" => Estimator::PearsonEmpirical,
            "spearman" => Estimator::Spearman,
            "ledoit_wolf" => Estimator::LedoitWolf,
            "mi_binned" => Estimator::MiBinned,
            "mi_ksg" => Estimator::MiKsg,
            "ground_truth" => Estimator::GroundTruth,
            _ => return None,
        })
    }
}

/// Estimator choice with its tuning parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Pearson,
    Spearman,
    LedoitWolf,
    MiBinned {
        #[serde(default)]
        bins: Option<usize>,
    },
    MiKsg {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_k() -> usize {
    5
}

impl EstimatorSpec {
    pub fn estimator(&self) -> Estimator {
        match self {
            EstimatorSpec::Pearson => Estimator::PearsonEmpirical,
            EstimatorSpec::Spearman => Estimator::Spearman,
            EstimatorSpec::LedoitWolf => Estimator::LedoitWolf,
            EstimatorSpec::MiBinned { .. } => Estimator::MiBinned,
            EstimatorSpec::MiKsg { .. } => Estimator::MiKsg,
        }
    }

    pub fn estimate(&self, data: &Dataset) -> Result<SimilarityMatrix> {
        match *self {
            EstimatorSpec::Pearson => pearson_matrix(data),
            EstimatorSpec::Spearman => spearman_matrix(data),
            EstimatorSpec::LedoitWolf => ledoit_wolf_matrix(data),
            EstimatorSpec::MiBinned { bins } => binned_mi_matrix(data, bins),
            EstimatorSpec::MiKsg { k, seed } => ksg_mi_matrix(data, k, seed),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimilarityMatrix {
    pub entries: SymMatrix,
    pub estimator: Estimator,
    /// Nodes that must not receive edges.
    pub flagged: Vec<bool>,
    /// Time length of the underlying data (0 for analytic matrices).
    pub n: usize,
    pub grid: Option<Arc<SphereGrid>>,
    /// Estimator-specific metadata (bins, k, jitter seed).
    pub meta: serde_json::Value,
}

impl SimilarityMatrix {
    pub fn new(entries: SymMatrix, estimator: Estimator) -> Self {
        let p = entries.dim();
        SimilarityMatrix {
            entries,
            estimator,
            flagged: vec![false; p],
            n: 0,
            grid: None,
            meta: serde_json::Value::Null,
        }
    }

    pub fn p(&self) -> usize {
        self.entries.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let p = self.p();
        let mut out = String::with_capacity(p * p * 12);
        for i in 0..p {
            for j in 0..p {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.get(i, j)));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Flat binary: magic, tag, p, n, node flags, packed upper triangle.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let tag = self.estimator.tag().as_bytes();
        let mut buf = Vec::with_capacity(32 + self.p() + 8 * self.entries.packed().len());
        buf.extend_from_slice(b"FNSM");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        buf.extend_from_slice(tag);
        buf.extend_from_slice(&(self.p() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend(self.flagged.iter().map(|&f| f as u8));
        for v in self.entries.packed() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |what: &str| Error::format(format!("{}: {what}", path.display()));
        let mut pos = 0usize;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = buf.get(pos..pos + len).ok_or_else(|| bad("truncated file"))?;
            pos += len;
            Ok(s)
        };
        if take(4)? != b"FNSM" {
            return Err(bad("not a similarity matrix file"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != 1 {
            return Err(bad("unsupported version"));
        }
        let tag_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let tag = std::str::from_utf8(take(tag_len)?).map_err(|_| bad("bad estimator tag"))?;
        let estimator = Estimator::from_tag(tag).ok_or_else(|| bad("unknown estimator tag"))?;
        let p = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let flagged = take(p)?.iter().map(|&b| b != 0).collect();
        let len = p * (p + 1) / 2;
        let raw = take(8 * len)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SimilarityMatrix {
            entries: SymMatrix::from_packed(p, data)?,
            estimator,
            flagged,
            n,
            grid: None,
            meta: serde_json::Value::Null,
        })
    }
}

/// Rows re-standardized to zero mean and unit population variance; constant
/// rows are zeroed and flagged.
pub fn standardized_rows(data: &Dataset) -> (Vec<f64>, Vec<bool>) {
    let n = data.n();
    let mut rows = data.values().to_vec();
    let mut flagged = data.flagged.clone();
    rows.par_chunks_mut(n.max(1))
        .zip(flagged.par_iter_mut())
        .for_each(|(row, flag)| {
            if *flag || !standardize_in_place(row, ZERO_VARIANCE_TOL) {
                row.iter_mut().for_each(|v| *v = 0.0);
                *flag = true;
            }
        });
    (rows, flagged)
}

/// `(1/n) X X^T` for row-major `X` (`p x n`), computed row by row.
pub(crate) fn gram(rows: &[f64], p: usize, n: usize) -> SymMatrix {
    let packed: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let xi = &rows[i * n..(i + 1) * n];
            (i..p)
                .map(|j| dot(xi, &rows[j * n..(j + 1) * n]) / n as f64)
                .collect()
        })
        .collect();
    SymMatrix::from_packed(p, packed.concat()).expect("consistent dimensions")
}

fn correlation_from_standardized(
    rows: &[f64],
    flagged: Vec<bool>,
    data: &Dataset,
    estimator: Estimator,
) -> SimilarityMatrix {
    let (p, n) = (data.p(), data.n());
    let mut entries = gram(rows, p, n);
    for i in 0..p {
        let row = entries.upper_row_mut(i);
        row[0] = 1.0;
        for v in row.iter_mut().skip(1) {
            *v = v.clamp(-1.0, 1.0);
        }
    }
    SimilarityMatrix {
        entries,
        estimator,
        flagged,
        n,
        grid: Some(data.grid().clone()),
        meta: serde_json::Value::Null,
    }
}

/// Empirical Pearson correlation `(1/n) sum_t x_it x_jt` on standardized rows.
pub fn pearson_matrix(data: &Dataset) -> Result<SimilarityMatrix> {
    if data.n() < 2 {
        return Err(Error::invalid("correlation needs at least two time steps"));
    }
    let (rows, flagged) = standardized_rows(data);
    Ok(correlation_from_standardized(&rows, flagged, data, Estimator::PearsonEmpirical))
}

/// Ranks starting at 1 with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of row-wise average ranks.
pub fn spearman_matrix(data: &Dataset) -> Result<SimilarityMatrix> {
    let n = data.n();
    if n < 3 {
        return Err(Error::invalid("Spearman correlation needs at least three time steps"));
    }
    let p = data.p();
    let ranked: Vec<f64> = (0..p)
        .into_par_iter()
        .flat_map_iter(|i| average_ranks(data.row(i)))
        .collect();
    let mut ranked_data = Dataset::new(data.grid().clone(), n, ranked)?;
    ranked_data.flagged = data.flagged.clone();
    let (rows, flagged) = standardized_rows(&ranked_data);
    Ok(correlation_from_standardized(&rows, flagged, data, Estimator::Spearman))
}

/// Linear shrinkage of the covariance of the standardized data toward a
/// scaled identity with the closed-form optimal intensity, normalized to a
/// correlation matrix afterwards.
pub fn ledoit_wolf_matrix(data: &Dataset) -> Result<SimilarityMatrix> {
    let (p, n) = (data.p(), data.n());
    if n < 2 {
        return Err(Error::invalid("shrinkage needs at least two time steps"));
    }
    let (rows, flagged) = standardized_rows(data);
    if flagged.iter().all(|&f| f) {
        return Err(Error::invalid("degenerate data: every node is constant"));
    }
    let s = gram(&rows, p, n);
    let intensity = ledoit_wolf_intensity(&rows, &s, p, n);
    let mu = s.trace() / p as f64;
    let diag: Vec<f64> = (0..p)
        .map(|i| intensity * mu + (1.0 - intensity) * s.get(i, i))
        .collect();
    let mut entries = s;
    for i in 0..p {
        let row = entries.upper_row_mut(i);
        row[0] = 1.0;
        for (d, v) in row.iter_mut().enumerate().skip(1) {
            let j = i + d;
            let denom = (diag[i] * diag[j]).sqrt();
            *v = if denom > 0.0 {
                ((1.0 - intensity) * *v / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    Ok(SimilarityMatrix {
        entries,
        estimator: Estimator::LedoitWolf,
        flagged,
        n,
        grid: Some(data.grid().clone()),
        meta: serde_json::json!({ "shrinkage": intensity }),
    })
}

/// Optimal shrinkage weight on the target `mu I`, in [0, 1].
pub fn ledoit_wolf_intensity(rows: &[f64], s: &SymMatrix, p: usize, n: usize) -> f64 {
    let mu = s.trace() / p as f64;
    let mut frob2 = 0.0;
    let mut dist2 = 0.0;
    for i in 0..p {
        let row = s.upper_row(i);
        frob2 += row[0] * row[0];
        dist2 += (row[0] - mu) * (row[0] - mu);
        for v in &row[1..] {
            frob2 += 2.0 * v * v;
            dist2 += 2.0 * v * v;
        }
    }
    if dist2 <= 0.0 {
        return 0.0;
    }
    let mut fourth = 0.0;
    for t in 0..n {
        let norm2: f64 = (0..p).map(|i| rows[i * n + t] * rows[i * n + t]).sum();
        fourth += norm2 * norm2;
    }
    let b_bar2 = ((fourth - n as f64 * frob2) / (n as f64 * n as f64)).max(0.0);
    b_bar2.min(dist2) / dist2
}

/// Equal-frequency bin codes: ordinal ranks (ties broken by position) mapped
/// to `floor(rank * bins / n)`.
pub fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<u32> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut codes = vec![0u32; n];
    for (rank, &k) in order.iter().enumerate() {
        codes[k] = (rank * bins / n) as u32;
    }
    codes
}

/// Plug-in mutual information (nats) of two code sequences.
pub fn plugin_mi(a: &[u32], b: &[u32], bins: usize) -> f64 {
    let n = a.len();
    let mut ca = vec![0usize; bins];
    let mut cb = vec![0usize; bins];
    for (&x, &y) in a.iter().zip(b) {
        ca[x as usize] += 1;
        cb[y as usize] += 1;
    }
    let mut joint: Vec<u64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x as u64 * bins as u64 + y as u64)
        .collect();
    joint.sort_unstable();
    let nf = n as f64;
    let mut mi = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && joint[end] == joint[start] {
            end += 1;
        }
        let c = (end - start) as f64;
        let (x, y) = ((joint[start] / bins as u64) as usize, (joint[start] % bins as u64) as usize);
        mi += c / nf * (c * nf / (ca[x] as f64 * cb[y] as f64)).ln();
        start = end;
    }
    mi.max(0.0)
}

/// Binned mutual information with `bins` equal-frequency bins (default `n/5`).
pub fn binned_mi_matrix(data: &Dataset, bins: Option<usize>) -> Result<SimilarityMatrix> {
    let (p, n) = (data.p(), data.n());
    let bins = bins.unwrap_or(n / 5);
    if bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
    }
    if bins > n {
        return Err(Error::invalid(format!("{bins} bins exceed series length {n}")));
    }
    let (_, flagged) = standardized_rows(data);
    let codes: Vec<Vec<u32>> = (0..p)
        .into_par_iter()
        .map(|i| equal_frequency_bins(data.row(i), bins))
        .collect();
    let packed: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            (i..p)
                .map(|j| {
                    if flagged[i] || flagged[j] {
                        0.0
                    } else {
                        plugin_mi(&codes[i], &codes[j], bins)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SimilarityMatrix {
        entries: SymMatrix::from_packed(p, packed.concat())?,
        estimator: Estimator::MiBinned,
        flagged,
        n,
        grid: Some(data.grid().clone()),
        meta: serde_json::json!({ "bins": bins }),
    })
}

/// Bias-improved Kraskov-Stögbauer-Grassberger estimate (nats) with the
/// Euclidean joint k-NN radius and marginal counts inside that radius.
pub fn ksg_mi(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::invalid("series lengths differ"));
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must lie in [1, n)")));
    }
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = by_x.iter().map(|&i| x[i]).collect();
    let ys_by_x: Vec<f64> = by_x.iter().map(|&i| y[i]).collect();
    let mut ys = y.to_vec();
    ys.sort_by(|a, b| a.total_cmp(b));
    let count_within = |sorted: &[f64], c: f64, r: f64| -> usize {
        let lo = sorted.partition_point(|&v| v < c - r);
        let hi = sorted.partition_point(|&v| v <= c + r);
        hi - lo - 1
    };
    let mut best = vec![f64::INFINITY; k];
    let mut sum_log = 0.0;
    for r in 0..n {
        best.iter_mut().for_each(|b| *b = f64::INFINITY);
        let (xr, yr) = (xs[r], ys_by_x[r]);
        let push = |d2: f64, best: &mut [f64]| {
            if d2 < best[k - 1] {
                let mut pos = k - 1;
                while pos > 0 && best[pos - 1] > d2 {
                    best[pos] = best[pos - 1];
                    pos -= 1;
                }
                best[pos] = d2;
            }
        };
        let (mut lo, mut hi) = (r, r + 1);
        loop {
            let left = if lo > 0 { Some(xr - xs[lo - 1]) } else { None };
            let right = if hi < n { Some(xs[hi] - xr) } else { None };
            let kth = best[k - 1];
            let go_left = match (left, right) {
                (None, None) => break,
                (Some(l), None) => {
                    if l * l > kth {
                        break;
                    }
                    true
                }
                (None, Some(rr)) => {
                    if rr * rr > kth {
                        break;
                    }
                    false
                }
                (Some(l), Some(rr)) => {
                    if l.min(rr) * l.min(rr) > kth {
                        break;
                    }
                    l <= rr
                }
            };
            let j = if go_left {
                lo -= 1;
                lo
            } else {
                hi += 1;
                hi - 1
            };
            let (dx, dy) = (xs[j] - xr, ys_by_x[j] - yr);
            push(dx * dx + dy * dy, &mut best);
        }
        let rho = best[k - 1].sqrt();
        if !(rho > 0.0) {
            return Err(Error::invalid(format!(
                "{} duplicate points around sample {}",
                k + 1,
                by_x[r]
            )));
        }
        let slack = rho * (1.0 + 1e-12);
        let nx = count_within(&xs, xr, slack).max(1);
        let ny = count_within(&ys, yr, slack).max(1);
        sum_log += (nx as f64).ln() + (ny as f64).ln();
    }
    let nf = n as f64;
    Ok(digamma(k as f64) + nf.ln() + (4.0 / std::f64::consts::PI).ln() - sum_log / nf)
}

/// KSG mutual information for every pair. Rows are standardized and then
/// perturbed by a deterministic jitter of relative size `1e-10` derived from
/// `(seed, node, t)` to break ties.
pub fn ksg_mi_matrix(data: &Dataset, k: usize, seed: u64) -> Result<SimilarityMatrix> {
    let (p, n) = (data.p(), data.n());
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must lie in [1, {n})")));
    }
    let (mut rows, flagged) = standardized_rows(data);
    for i in 0..p {
        for t in 0..n {
            rows[i * n + t] += 1e-10 * (hashed_unit(seed, &[i as u64, t as u64]) - 0.5);
        }
    }
    let packed: Vec<Result<Vec<f64>>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let xi = &rows[i * n..(i + 1) * n];
            (i..p)
                .map(|j| {
                    if i == j || flagged[i] || flagged[j] {
                        Ok(0.0)
                    } else {
                        ksg_mi(xi, &rows[j * n..(j + 1) * n], k).map_err(|e| {
                            Error::invalid(format!("nodes ({i}, {j}): {e}"))
                        })
                    }
                })
                .collect()
        })
        .collect();
    let mut flat = Vec::with_capacity(p * (p + 1) / 2);
    for row in packed {
        flat.extend(row?);
    }
    // self-information is unbounded for continuous data; the diagonal holds 0
    let entries = SymMatrix::from_packed(p, flat)?;
    Ok(SimilarityMatrix {
        entries,
        estimator: Estimator::MiKsg,
        flagged,
        n,
        grid: Some(data.grid().clone()),
        meta: serde_json::json!({ "k": k, "jitter_seed": seed, "jitter_scale": 1e-10 }),
    })
}

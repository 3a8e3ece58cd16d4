//! Comparisons of empirical networks and similarity matrices with ground
//! truth and with each other.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::netbuild::{construct, Network, Scheme};
use crate::netmeasure::unweighted_degrees;
use crate::random_field::{ground_truth_correlation, MaternParams};
use crate::similarity::{Estimator, SimilarityMatrix};
use crate::sphere_grid::SphereGrid;

/// Analytic correlation matrix of a unit-variance field on the grid.
pub fn ground_truth_similarity(grid: &Arc<SphereGrid>, params: MaternParams) -> Result<SimilarityMatrix> {
    let mut sim = SimilarityMatrix::new(ground_truth_correlation(grid, params)?, Estimator::GroundTruth);
    sim.grid = Some(grid.clone());
    sim.meta = serde_json::json!({ "nu": params.nu, "ell": params.ell });
    Ok(sim)
}

/// The network a scheme produces from exact correlations.
pub fn ground_truth_network(
    grid: &Arc<SphereGrid>,
    params: MaternParams,
    scheme: &Scheme,
    weighted: bool,
) -> Result<Network> {
    construct(&ground_truth_similarity(grid, params)?, scheme, weighted)
}

fn check_same_nodes(a: &Network, b: &Network) -> Result<()> {
    if a.p() != b.p() {
        return Err(Error::invalid(format!("networks have {} and {} nodes", a.p(), b.p())));
    }
    if let (Some(ga), Some(gb)) = (&a.grid, &b.grid) {
        if !Arc::ptr_eq(ga, gb) && ga.points() != gb.points() {
            return Err(Error::invalid("networks live on different grids"));
        }
    }
    Ok(())
}

fn shared_edges(a: &Network, b: &Network) -> usize {
    // both edge lists are sorted by (i, j)
    let (ea, eb) = (a.edges(), b.edges());
    let (mut x, mut y, mut n) = (0, 0, 0);
    while x < ea.len() && y < eb.len() {
        match (ea[x].i, ea[x].j).cmp(&(eb[y].i, eb[y].j)) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                x += 1;
                y += 1;
            }
        }
    }
    n
}

/// Fraction of empirical edges absent from the truth; 0 for an empty
/// empirical network.
pub fn false_discovery_rate(empirical: &Network, truth: &Network) -> Result<f64> {
    check_same_nodes(empirical, truth)?;
    if empirical.edge_count() == 0 {
        log::warn!("empty empirical network; false discovery rate set to 0");
        return Ok(0.0);
    }
    Ok(1.0 - shared_edges(empirical, truth) as f64 / empirical.edge_count() as f64)
}

/// Edge-set agreement between an empirical network and the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeComparison {
    pub empirical_edges: usize,
    pub truth_edges: usize,
    pub shared_edges: usize,
    pub fdr: f64,
    pub precision: f64,
    /// Fraction of true edges missing from the empirical network.
    pub missing_rate: f64,
    /// Set when the empirical network is empty and the rates are conventions.
    pub empty_empirical: bool,
}

pub fn compare_edges(empirical: &Network, truth: &Network) -> Result<EdgeComparison> {
    check_same_nodes(empirical, truth)?;
    let shared = shared_edges(empirical, truth);
    let (ne, nt) = (empirical.edge_count(), truth.edge_count());
    let fdr = if ne == 0 { 0.0 } else { 1.0 - shared as f64 / ne as f64 };
    Ok(EdgeComparison {
        empirical_edges: ne,
        truth_edges: nt,
        shared_edges: shared,
        fdr,
        precision: if ne == 0 { 1.0 } else { shared as f64 / ne as f64 },
        missing_rate: if nt == 0 { 0.0 } else { 1.0 - shared as f64 / nt as f64 },
        empty_empirical: ne == 0,
    })
}

fn squared_differences(a: &SymMatrix, b: &SymMatrix) -> (f64, f64) {
    let p = a.dim();
    let (mut diag, mut off) = (0.0, 0.0);
    for i in 0..p {
        let (ra, rb) = (a.upper_row(i), b.upper_row(i));
        let d = ra[0] - rb[0];
        diag += d * d;
        off += ra[1..].iter().zip(&rb[1..]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    (diag, off)
}

/// Frobenius norm of the difference of two symmetric matrices. With
/// `per_edge_rms` the root mean squared off-diagonal difference instead.
pub fn frobenius_error(est: &SimilarityMatrix, truth: &SimilarityMatrix, per_edge_rms: bool) -> Result<f64> {
    if est.p() != truth.p() {
        return Err(Error::invalid(format!("matrix sizes {} and {} differ", est.p(), truth.p())));
    }
    let (diag, off) = squared_differences(&est.entries, &truth.entries);
    if per_edge_rms {
        let p = est.p();
        if p < 2 {
            return Err(Error::UndefinedResult("no off-diagonal entries".into()));
        }
        Ok((off / (p * (p - 1) / 2) as f64).sqrt())
    } else {
        Ok((diag + 2.0 * off).sqrt())
    }
}

/// `|E_a symmetric-difference E_b| / |E_a|`, in `[0, 2]` for equal edge counts.
pub fn differing_fraction(a: &Network, b: &Network) -> Result<f64> {
    check_same_nodes(a, b)?;
    if a.edge_count() == 0 {
        return Err(Error::UndefinedResult("first network has no edges".into()));
    }
    let shared = shared_edges(a, b);
    let diff = a.edge_count() + b.edge_count() - 2 * shared;
    Ok(diff as f64 / a.edge_count() as f64)
}

/// Symmetric variant normalized by the mean edge count of both networks.
pub fn differing_fraction_symmetric(a: &Network, b: &Network) -> Result<f64> {
    check_same_nodes(a, b)?;
    let total = a.edge_count() + b.edge_count();
    if total == 0 {
        return Err(Error::UndefinedResult("both networks have no edges".into()));
    }
    let diff = total - 2 * shared_edges(a, b);
    Ok(2.0 * diff as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDegree {
    pub label: f64,
    pub count: usize,
    pub mean_degree: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub center: f64,
    pub count: usize,
    pub mean_degree: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeBiasReport {
    /// Mean normalized unweighted degree per distinct label, ascending.
    pub groups: Vec<GroupDegree>,
    /// Mean degree against binned label values; empty bins are left out.
    pub curve: Vec<CurvePoint>,
}

impl DegreeBiasReport {
    pub fn group(&self, label: f64) -> Option<&GroupDegree> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Mean degree of the highest label group minus that of the lowest.
    pub fn gap(&self) -> Option<f64> {
        Some(self.groups.last()?.mean_degree - self.groups.first()?.mean_degree)
    }
}

/// Mean normalized degree per node label (for example each node's
/// autocorrelation), plus a degree curve over `curve_bins` equal-width bins.
pub fn degree_bias_report(net: &Network, labels: &[f64], curve_bins: usize) -> Result<DegreeBiasReport> {
    if labels.len() != net.p() {
        return Err(Error::invalid(format!("{} labels for {} nodes", labels.len(), net.p())));
    }
    if labels.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("labels must be finite"));
    }
    let deg = unweighted_degrees(net, true);
    let mut by_label: BTreeMap<u64, (f64, usize, f64)> = BTreeMap::new();
    for (&l, &d) in labels.iter().zip(&deg) {
        // order-preserving key for finite floats
        let bits = l.to_bits();
        let key = if l >= 0.0 { bits | (1 << 63) } else { !bits };
        let e = by_label.entry(key).or_insert((l, 0, 0.0));
        e.1 += 1;
        e.2 += d;
    }
    let groups = by_label
        .into_values()
        .map(|(label, count, sum)| GroupDegree {
            label,
            count,
            mean_degree: sum / count as f64,
        })
        .collect();
    let mut curve = Vec::new();
    if curve_bins > 0 && !labels.is_empty() {
        let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / curve_bins as f64 } else { 1.0 };
        let mut sums = vec![(0usize, 0.0f64); curve_bins];
        for (&l, &d) in labels.iter().zip(&deg) {
            let b = (((l - lo) / width) as usize).min(curve_bins - 1);
            sums[b].0 += 1;
            sums[b].1 += d;
        }
        for (b, (count, sum)) in sums.into_iter().enumerate() {
            if count == 0 {
                log::warn!("degree curve bin {b} is empty and left out");
                continue;
            }
            curve.push(CurvePoint {
                center: lo + (b as f64 + 0.5) * width,
                count,
                mean_degree: sum / count as f64,
            });
        }
    }
    Ok(DegreeBiasReport { groups, curve })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationLength {
    pub tau: f64,
    /// Node-averaged radius in radians.
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCorrelationSummary {
    pub eps: f64,
    /// Node average of the mean similarity to the other nodes of its ball.
    pub avg_local_corr: f64,
    pub connectivity: f64,
    pub decorrelation_lengths: Vec<DecorrelationLength>,
}

/// Smallest radius at which fewer than a fraction `c` of the nodes within that
/// radius of `i` reach similarity `tau` with `i`. Nodes at equal distance
/// enter together. Returns the largest distance when the fraction never drops.
fn decorrelation_radius(order: &[(f64, f64)], tau: f64, c: f64) -> f64 {
    let (mut linked, mut seen) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let r = order[k].0;
        while k < order.len() && order[k].0 == r {
            seen += 1;
            linked += (order[k].1 >= tau) as usize;
            k += 1;
        }
        if (linked as f64) < c * seen as f64 {
            return r;
        }
    }
    order.last().map_or(0.0, |x| x.0)
}

/// Average local similarity within `eps`-balls and node-averaged
/// decorrelation lengths of the threshold networks at each `tau`, using
/// minimal connectivity `c`.
pub fn local_correlation_summary(
    sim: &SymMatrix,
    grid: &SphereGrid,
    eps: f64,
    taus: &[f64],
    c: f64,
) -> Result<LocalCorrelationSummary> {
    let p = grid.len();
    if sim.dim() != p {
        return Err(Error::invalid("grid and matrix sizes differ"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("ball radius must be positive"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::invalid("minimal connectivity must lie in (0, 1]"));
    }
    let per_node: Vec<(Option<f64>, Vec<f64>)> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<(f64, f64)> = (0..p).filter(|&j| j != i).map(|j| (grid.angle(i, j), sim.get(i, j))).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let inside: Vec<f64> = order.iter().take_while(|x| x.0 <= eps).map(|x| x.1).collect();
            let local = if inside.is_empty() {
                None
            } else {
                Some(inside.iter().sum::<f64>() / inside.len() as f64)
            };
            let lengths = taus.iter().map(|&t| decorrelation_radius(&order, t, c)).collect();
            (local, lengths)
        })
        .collect();
    let locals: Vec<f64> = per_node.iter().filter_map(|x| x.0).collect();
    if locals.len() < p {
        log::warn!("{} nodes have no other node within the ball radius", p - locals.len());
    }
    let avg = if locals.is_empty() {
        f64::NAN
    } else {
        locals.iter().sum::<f64>() / locals.len() as f64
    };
    let decorrelation_lengths = taus
        .iter()
        .enumerate()
        .map(|(t, &tau)| DecorrelationLength {
            tau,
            length: per_node.iter().map(|x| x.1[t]).sum::<f64>() / p.max(1) as f64,
        })
        .collect();
    Ok(LocalCorrelationSummary {
        eps,
        avg_local_corr: avg,
        connectivity: c,
        decorrelation_lengths,
    })
}

/// Summary of one empirical network and matrix against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub edges: EdgeComparison,
    pub frobenius_error: Option<f64>,
    pub frobenius_rms: Option<f64>,
    pub differing_fraction: Option<f64>,
    pub degree_bias: Option<DegreeBiasReport>,
    pub empirical: serde_json::Value,
    pub truth: serde_json::Value,
}

impl ComparisonReport {
    pub fn new(
        empirical: &Network,
        truth: &Network,
        matrices: Option<(&SimilarityMatrix, &SimilarityMatrix)>,
        labels: Option<&[f64]>,
    ) -> Result<Self> {
        let (fe, fr) = match matrices {
            Some((e, t)) => (Some(frobenius_error(e, t, false)?), Some(frobenius_error(e, t, true)?)),
            None => (None, None),
        };
        Ok(ComparisonReport {
            edges: compare_edges(empirical, truth)?,
            frobenius_error: fe,
            frobenius_rms: fr,
            differing_fraction: differing_fraction(empirical, truth).ok(),
            degree_bias: labels.map(|l| degree_bias_report(empirical, l, 10)).transpose()?,
            empirical: serde_json::to_value(&empirical.meta).unwrap_or_default(),
            truth: serde_json::to_value(&truth.meta).unwrap_or_default(),
        })
    }
}

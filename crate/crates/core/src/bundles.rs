//! Link bundles between neighborhoods of nodes and the edge distance.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::netbuild::Network;
use crate::sphere_grid::SphereGrid;

/// Default length above which a link counts as a teleconnection.
pub const TELECONNECTION_LENGTH: f64 = 0.25 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    OneToMany,
    ManyToMany,
    LocallyWeighted,
}

impl BundleKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BundleKind::OneToMany => "one_to_many",
            BundleKind::ManyToMany => "many_to_many",
            BundleKind::LocallyWeighted => "locally_weighted",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    /// Ball radius in radians.
    pub eps: f64,
    /// Minimal connectivity.
    pub c: f64,
    pub kind: BundleKind,
}

impl BundleSpec {
    pub fn new(eps: f64, c: f64, kind: BundleKind) -> Result<Self> {
        let s = BundleSpec { eps, c, kind };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::invalid(format!("bundle radius {} must be positive", self.eps)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("minimal connectivity {} must be positive", self.c)));
        }
        Ok(())
    }
}

/// A network together with the `eps`-balls of its grid.
pub struct BundleContext<'a> {
    net: &'a Network,
    grid: &'a SphereGrid,
    eps: f64,
    balls: Vec<Vec<u32>>,
}

fn contains(sorted: &[u32], x: u32) -> bool {
    sorted.binary_search(&x).is_ok()
}

impl<'a> BundleContext<'a> {
    pub fn new(net: &'a Network, grid: &'a SphereGrid, eps: f64) -> Result<Self> {
        if grid.len() != net.p() {
            return Err(Error::invalid("grid and network sizes differ"));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("bundle radius {eps} must be positive")));
        }
        Ok(BundleContext {
            net,
            grid,
            eps,
            balls: grid.epsilon_balls(eps)?,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn ball(&self, i: usize) -> &[u32] {
        &self.balls[i]
    }

    /// Cumulative weight `W` and pair count `rho` over unordered node pairs
    /// `{k, l}`, `k != l`, with one end in each ball.
    pub fn neighborhood_weight(&self, i: usize, j: usize) -> (f64, u64) {
        let (bi, bj) = (&self.balls[i], &self.balls[j]);
        let mut w = 0.0;
        let mut rho = 0u64;
        for &k in bi {
            let k_in_j = contains(bj, k);
            for &l in bj {
                // pairs inside both balls appear twice; keep one orientation
                if k == l || (k_in_j && k > l && contains(bi, l)) {
                    continue;
                }
                rho += 1;
                w += self.net.weight(k as usize, l as usize).abs();
            }
        }
        (w, rho)
    }

    /// Mean weight from the ball around `from` to the node `to`, over ball
    /// members other than `to`.
    pub fn one_to_many_ratio(&self, from: usize, to: usize) -> f64 {
        let b = &self.balls[from];
        let total: f64 = b.iter().map(|&k| self.net.weight(k as usize, to).abs()).sum();
        self.one_to_many_mean(from, to, total)
    }

    fn one_to_many_mean(&self, from: usize, to: usize, total: f64) -> f64 {
        let b = &self.balls[from];
        let count = b.len() - contains(b, to as u32) as usize;
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Connectivity inside the ball around `i`; 0 for a single-node ball.
    pub fn local_density(&self, i: usize) -> f64 {
        let (w, rho) = self.neighborhood_weight(i, i);
        if rho == 0 {
            0.0
        } else {
            w / rho as f64
        }
    }

    /// Bundle test for the pair `(i, j)`. A bundle needs non-zero weight
    /// between the two neighborhoods.
    pub fn is_bundle(&self, i: usize, j: usize, spec: &BundleSpec) -> bool {
        match spec.kind {
            BundleKind::OneToMany => {
                let a = self.one_to_many_ratio(i, j);
                let b = self.one_to_many_ratio(j, i);
                (a > 0.0 && a >= spec.c) || (b > 0.0 && b >= spec.c)
            }
            BundleKind::ManyToMany | BundleKind::LocallyWeighted => {
                let (w, rho) = self.neighborhood_weight(i, j);
                if rho == 0 {
                    log::warn!("empty pair set between balls of {i} and {j}");
                    return false;
                }
                if w <= 0.0 {
                    return false;
                }
                let ratio = w / rho as f64;
                let threshold = match spec.kind {
                    BundleKind::ManyToMany => spec.c,
                    _ => 0.5 * spec.c * (self.local_density(i) + self.local_density(j)),
                };
                ratio >= threshold
            }
        }
    }

    fn ball_overlap_possible(&self, i: usize, j: usize) -> bool {
        self.grid.angle(i, j) <= 2.0 * self.eps + 1e-9
    }

    /// Longest bundle among all node pairs with some weight between their
    /// neighborhoods; 0 when there is none.
    pub fn max_bundle_length(&self, spec: &BundleSpec) -> f64 {
        let p = self.net.p();
        let local: Vec<f64> = if spec.kind == BundleKind::LocallyWeighted {
            (0..p).into_par_iter().map(|i| self.local_density(i)).collect()
        } else {
            Vec::new()
        };
        (0..p)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; p], Vec::<u32>::new()),
                |(acc, touched), i| {
                    let mut best = 0.0f64;
                    let bi = &self.balls[i];
                    for &k in bi {
                        let nk = self.net.neighbors(k as usize);
                        let wk = self.net.neighbor_weights(k as usize);
                        for (&l, &w) in nk.iter().zip(wk) {
                            if spec.kind == BundleKind::OneToMany {
                                if acc[l as usize] == 0.0 {
                                    touched.push(l);
                                }
                                acc[l as usize] += w.abs();
                            } else {
                                for &j in &self.balls[l as usize] {
                                    if acc[j as usize] == 0.0 {
                                        touched.push(j);
                                    }
                                    acc[j as usize] += w.abs();
                                }
                            }
                        }
                    }
                    for &j in touched.iter() {
                        let j = j as usize;
                        let total = acc[j];
                        acc[j] = 0.0;
                        if j == i {
                            continue;
                        }
                        let len = self.grid.angle(i, j);
                        if len <= best {
                            continue;
                        }
                        let hit = match spec.kind {
                            // directional test from the ball around i; the reverse is met when i and j swap roles
                            BundleKind::OneToMany => self.one_to_many_mean(i, j, total) >= spec.c,
                            _ => {
                                let (w, rho) = if self.ball_overlap_possible(i, j) {
                                    self.neighborhood_weight(i, j)
                                } else {
                                    (total, (bi.len() * self.balls[j].len()) as u64)
                                };
                                let threshold = if spec.kind == BundleKind::ManyToMany {
                                    spec.c
                                } else {
                                    0.5 * spec.c * (local[i] + local[j])
                                };
                                rho > 0 && w > 0.0 && w / rho as f64 >= threshold
                            }
                        };
                        if hit {
                            best = len;
                        }
                    }
                    touched.clear();
                    best
                },
            )
            .reduce(|| 0.0, f64::max)
    }
}

/// Which links of the scanned network enter the bundle fraction.
#[derive(Clone, Copy)]
pub enum LinkFilter<'n> {
    All,
    LongerThan(f64),
    /// Links absent from the given reference network.
    FalseLinks(&'n Network),
    /// Links absent from a second network.
    DifferingLinks(&'n Network),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleScan {
    /// Longest bundle over all node pairs; 0 when there is none.
    pub max_bundle_length: f64,
    pub filtered_links: usize,
    pub bundled_links: usize,
    /// `bundled_links / filtered_links`; 0 when no link passes the filter.
    pub fraction: f64,
}

/// Per-link bundle flags of the filtered links, in `net.edges()` order.
pub fn link_bundle_flags(ctx: &BundleContext, spec: &BundleSpec, filter: LinkFilter) -> Result<Vec<(usize, bool)>> {
    let net = ctx.net;
    if let LinkFilter::FalseLinks(other) | LinkFilter::DifferingLinks(other) = filter {
        if other.p() != net.p() {
            return Err(Error::invalid("reference network has a different node count"));
        }
    }
    Ok(net
        .edges()
        .par_iter()
        .enumerate()
        .filter(|(_, e)| {
            let (i, j) = (e.i as usize, e.j as usize);
            match filter {
                LinkFilter::All => true,
                LinkFilter::LongerThan(l) => ctx.grid.angle(i, j) > l,
                LinkFilter::FalseLinks(truth) => !truth.has_edge(i, j),
                LinkFilter::DifferingLinks(other) => !other.has_edge(i, j),
            }
        })
        .map(|(k, e)| (k, ctx.is_bundle(e.i as usize, e.j as usize, spec)))
        .collect())
}

/// Longest bundle and the fraction of filtered links that belong to a bundle.
pub fn bundle_scan(net: &Network, grid: &SphereGrid, spec: &BundleSpec, filter: LinkFilter) -> Result<BundleScan> {
    spec.validate()?;
    let ctx = BundleContext::new(net, grid, spec.eps)?;
    let flags = link_bundle_flags(&ctx, spec, filter)?;
    let bundled = flags.iter().filter(|f| f.1).count();
    Ok(BundleScan {
        max_bundle_length: ctx.max_bundle_length(spec),
        filtered_links: flags.len(),
        bundled_links: bundled,
        fraction: if flags.is_empty() { 0.0 } else { bundled as f64 / flags.len() as f64 },
    })
}

/// Writes `i,j,kind,eps,c,bundle_flag,length` for every link of the network.
pub fn write_bundle_report(path: &Path, net: &Network, grid: &SphereGrid, spec: &BundleSpec) -> Result<()> {
    spec.validate()?;
    let ctx = BundleContext::new(net, grid, spec.eps)?;
    let flags = link_bundle_flags(&ctx, spec, LinkFilter::All)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("i,j,kind,eps,c,bundle_flag,length\n");
    for (k, flag) in flags {
        let e = net.edges()[k];
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.i,
            e.j,
            spec.kind.tag(),
            spec.eps,
            spec.c,
            flag as u8,
            grid.angle(e.i as usize, e.j as usize)
        ));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Distance between undirected edges: the cheaper of the two endpoint matchings.
pub fn edge_distance(e1: (usize, usize), e2: (usize, usize), grid: &SphereGrid) -> f64 {
    let d = |a, b| grid.angle(a, b);
    (d(e1.0, e2.0) + d(e1.1, e2.1)).min(d(e1.0, e2.1) + d(e1.1, e2.0))
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Lower bound on `P(S1 > tau | S2 > tau + shift)` for jointly normal
/// similarity estimates with mean `mu` and covariance `sigma`.
pub fn conditional_link_probability_bound(mu: [f64; 2], sigma: [[f64; 2]; 2], tau: f64, shift: f64) -> Result<f64> {
    let (v1, v2, c) = (sigma[0][0], sigma[1][1], sigma[0][1]);
    if (c - sigma[1][0]).abs() > 1e-12 * (v1.abs() + v2.abs()) {
        return Err(Error::invalid("covariance must be symmetric"));
    }
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::invalid("variances must be positive"));
    }
    let (s1, s2) = (v1.sqrt(), v2.sqrt());
    let rho = c / (s1 * s2);
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("correlation {rho} must lie strictly inside (-1, 1)")));
    }
    let z = (s1 / s2 * rho * (tau + shift - mu[1]) + mu[0] - tau) / ((1.0 - rho * rho).sqrt() * s1);
    Ok(normal_cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::{Edge, Scheme};
    use proptest::prelude::*;

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
    fn weight_examples() {
        let grid = SphereGrid::fekete(60, 100, 2).unwrap();
        let empty = graph(60, &[]);
        let ctx = BundleContext::new(&empty, &grid, 0.4).unwrap();
        assert_eq!(ctx.neighborhood_weight(0, 5).0, 0.0);
        let full = complete(60);
        let ctx = BundleContext::new(&full, &grid, 0.4).unwrap();
        for (i, j) in [(0, 5), (3, 3), (10, 40)] {
            let (w, rho) = ctx.neighborhood_weight(i, j);
            assert_eq!(w, rho as f64);
        }
        let b = ctx.ball(3).len() as u64;
        assert_eq!(ctx.neighborhood_weight(3, 3).1, b * (b - 1) / 2);
        let far = (1..60).max_by(|&a, &b| grid.angle(0, a).total_cmp(&grid.angle(0, b))).unwrap();
        assert_eq!(
            ctx.neighborhood_weight(0, far).1,
            (ctx.ball(0).len() * ctx.ball(far).len()) as u64
        );
    }

    #[test]
    fn complete_and_empty_graphs() {
        let grid = SphereGrid::fekete(40, 100, 1).unwrap();
        let full = complete(40);
        let empty = graph(40, &[]);
        for kind in [BundleKind::OneToMany, BundleKind::ManyToMany, BundleKind::LocallyWeighted] {
            let spec = BundleSpec::new(0.5, 1.0, kind).unwrap();
            let cf = BundleContext::new(&full, &grid, 0.5).unwrap();
            let ce = BundleContext::new(&empty, &grid, 0.5).unwrap();
            for (i, j) in [(0, 1), (2, 30), (7, 19)] {
                assert!(cf.is_bundle(i, j, &spec), "{kind:?}");
                assert!(!ce.is_bundle(i, j, &spec));
            }
        }
        let spec = BundleSpec::new(0.1, 0.8, BundleKind::ManyToMany).unwrap();
        let s = bundle_scan(&empty, &grid, &spec, LinkFilter::All).unwrap();
        assert_eq!((s.max_bundle_length, s.fraction), (0.0, 0.0));
    }

    #[test]
    fn planted_bundle() {
        let grid = SphereGrid::fekete(200, 200, 5).unwrap();
        let eps = 0.3;
        let a = 0;
        let b = (1..200).max_by(|&x, &y| grid.angle(a, x).total_cmp(&grid.angle(a, y))).unwrap();
        let ba = grid.epsilon_ball(a, eps);
        let bb = grid.epsilon_ball(b, eps);
        let mut pairs = Vec::new();
        for &k in &ba {
            for &l in &bb {
                pairs.push((k, l));
            }
        }
        let net = graph(200, &pairs);
        let spec = BundleSpec::new(eps, 0.8, BundleKind::ManyToMany).unwrap();
        let ctx = BundleContext::new(&net, &grid, eps).unwrap();
        assert!(ctx.is_bundle(a, b, &spec));
        assert!(!ctx.is_bundle(a, a, &spec));
        let scan = bundle_scan(&net, &grid, &spec, LinkFilter::All).unwrap();
        assert!(scan.max_bundle_length >= grid.angle(a, b));
        assert!(scan.fraction > 0.0);
    }

    #[test]
    fn scan_matches_pairwise_test() {
        let grid = SphereGrid::fekete(80, 100, 3).unwrap();
        let mut pairs = Vec::new();
        for i in 0..80u32 {
            for j in i + 1..80u32 {
                if crate::seeds::hashed_unit(9, &[i as u64, j as u64]) < 0.15 {
                    pairs.push((i, j));
                }
            }
        }
        let net = graph(80, &pairs);
        for kind in [BundleKind::OneToMany, BundleKind::ManyToMany, BundleKind::LocallyWeighted] {
            let spec = BundleSpec::new(0.35, 0.3, kind).unwrap();
            let ctx = BundleContext::new(&net, &grid, spec.eps).unwrap();
            let mut best = 0.0f64;
            for i in 0..80 {
                for j in i + 1..80 {
                    if ctx.is_bundle(i, j, &spec) {
                        best = best.max(grid.angle(i, j));
                    }
                }
            }
            assert_eq!(ctx.max_bundle_length(&spec), best, "{kind:?}");
        }
    }

    #[test]
    fn filters() {
        let grid = SphereGrid::fekete(30, 50, 1).unwrap();
        let net = graph(30, &[(0, 1), (2, 3), (4, 5)]);
        let truth = graph(30, &[(0, 1)]);
        let spec = BundleSpec::new(0.01, 1.0, BundleKind::ManyToMany).unwrap();
        let s = bundle_scan(&net, &grid, &spec, LinkFilter::FalseLinks(&truth)).unwrap();
        assert_eq!(s.filtered_links, 2);
        // balls are single nodes, so every link is its own bundle
        assert_eq!(s.fraction, 1.0);
        let s = bundle_scan(&net, &grid, &spec, LinkFilter::LongerThan(10.0)).unwrap();
        assert_eq!((s.filtered_links, s.fraction), (0, 0.0));
    }

    #[test]
    fn edge_distance_examples() {
        let grid = SphereGrid::fekete(30, 50, 1).unwrap();
        assert_eq!(edge_distance((1, 2), (1, 2), &grid), 0.0);
        assert_eq!(edge_distance((1, 2), (2, 1), &grid), 0.0);
        assert!(edge_distance((1, 2), (1, 3), &grid) > 0.0);
    }

    #[test]
    fn bound_examples() {
        let b = conditional_link_probability_bound([0.1, 0.0], [[2.0, 0.0], [0.0, 1.0]], 0.5, 0.3).unwrap();
        assert!((b - normal_cdf((0.1 - 0.5) / 2f64.sqrt())).abs() < 1e-15);
        let mut prev = 0.0;
        for s in [0.0, 1.0, 2.0, 5.0, 20.0] {
            let b = conditional_link_probability_bound([0.0, 0.0], [[1.0, 0.6], [0.6, 1.0]], 0.3, s).unwrap();
            assert!(b >= prev);
            prev = b;
        }
        assert!(prev > 0.999);
        assert!(conditional_link_probability_bound([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]], 0.3, 0.1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn edge_distance_triangle_inequality(a in 0usize..30, b in 0usize..30, c in 0usize..30, d in 0usize..30, e in 0usize..30, f in 0usize..30) {
            let grid = SphereGrid::fekete(30, 30, 7).unwrap();
            let (x, y, z) = ((a, b), (c, d), (e, f));
            prop_assert!(edge_distance(x, z, &grid) <= edge_distance(x, y, &grid) + edge_distance(y, z, &grid) + 1e-12);
            prop_assert!((edge_distance(x, y, &grid) - edge_distance(y, x, &grid)).abs() < 1e-15);
        }

        #[test]
        fn bundles_monotone_in_c(seed in 0u64..1000, c in 0.05f64..1.0, shrink in 0.0f64..1.0) {
            let grid = SphereGrid::fekete(40, 30, 1).unwrap();
            let mut pairs = Vec::new();
            for i in 0..40u32 {
                for j in i + 1..40u32 {
                    if crate::seeds::hashed_unit(seed, &[i as u64, j as u64]) < 0.3 {
                        pairs.push((i, j));
                    }
                }
            }
            let net = graph(40, &pairs);
            let ctx = BundleContext::new(&net, &grid, 0.4).unwrap();
            for kind in [BundleKind::OneToMany, BundleKind::ManyToMany] {
                let hi = BundleSpec::new(0.4, c, kind).unwrap();
                let lo = BundleSpec::new(0.4, c * shrink.max(1e-3), kind).unwrap();
                for (i, j) in [(0, 1), (3, 20), (5, 39)] {
                    if ctx.is_bundle(i, j, &hi) {
                        prop_assert!(ctx.is_bundle(i, j, &lo));
                    }
                }
            }
        }
    }
}

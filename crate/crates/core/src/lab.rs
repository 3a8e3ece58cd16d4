//! Declarative experiments composing simulation, estimation, construction,
//! measurement and comparison, plus the ensemble and calibration pipelines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundles::{bundle_scan, BundleKind, BundleSpec, LinkFilter};
use crate::dataset::{mean_std, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{compare_edges, degree_bias_report, differing_fraction, frobenius_error, ground_truth_similarity};
use crate::netbuild::{construct, quantile_network, zscore_network, Network, Scheme};
use crate::netmeasure::{betweenness, clustering, forman_curvature, mad_ball, shortest_path_lengths, unweighted_degrees};
use crate::random_field::{
    ar1_series, asymptotic_variance, northern_mask, random_halves, FieldSampler, FieldSpec, Marginal, MaternParams, Noise,
    SimulationInfo,
};
use crate::seeds::{derive_seed, substream};
use crate::similarity::{EstimatorSpec, SimilarityMatrix};
use crate::sphere_grid::SphereGrid;
use crate::surrogates::{
    block_bootstrap_indices, default_block_len, edge_baseline, iaaft_surrogate, quantile_sorted, resample_dataset,
    shuffle_surrogate, IaaftConfig, SurrogateMethod,
};

fn default_one() -> usize {
    1
}

fn default_iterations() -> usize {
    300
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKindConfig {
    Fekete,
    Gaussian,
    File,
}

/// Nodes nearest to a center point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapConfig {
    pub lat: f64,
    pub lon: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kind: GridKindConfig,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub resolution_deg: Option<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub cap: Option<CapConfig>,
}

impl GridConfig {
    pub fn build(&self) -> Result<SphereGrid> {
        let grid = match self.kind {
            GridKindConfig::Fekete => {
                let n = self.points.ok_or_else(|| Error::config("grid.points", "required for Fekete grids"))?;
                SphereGrid::fekete(n, self.iterations, self.seed)?
            }
            GridKindConfig::Gaussian => {
                let r = self
                    .resolution_deg
                    .ok_or_else(|| Error::config("grid.resolution_deg", "required for Gaussian grids"))?;
                SphereGrid::gaussian(r)?
            }
            GridKindConfig::File => {
                let p = self.path.as_ref().ok_or_else(|| Error::config("grid.path", "required for file grids"))?;
                SphereGrid::read_csv(p)?
            }
        };
        match &self.cap {
            Some(cap) => {
                if cap.nodes < 2 || cap.nodes > grid.len() {
                    return Err(Error::config("grid.cap.nodes", format!("must lie in [2, {}]", grid.len())));
                }
                let center = crate::sphere_grid::lat_lon_to_point(cap.lat, cap.lon);
                let mut idx = grid.nearest_nodes(center, cap.nodes);
                idx.sort_unstable();
                Ok(grid.select(&idx))
            }
            None => Ok(grid),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AutocorrConfig {
    None,
    Uniform { value: f64 },
    /// A random half of the nodes at `low`, the rest at `high`.
    Halves { low: f64, high: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub nu: f64,
    pub ell: f64,
    pub n: usize,
    #[serde(default)]
    pub autocorr: Option<AutocorrConfig>,
    #[serde(default)]
    pub marginal: Option<Marginal>,
    /// White noise added on the northern hemisphere.
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Resampling {
    BlockBootstrap {
        #[serde(default)]
        block_len: Option<usize>,
    },
    Subsample { window: usize, stride: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset CSV (`node_index,lat_deg,lon_deg,t0..`).
    pub path: PathBuf,
    /// Block-bootstrap each repetition; without it every repetition sees the data as is.
    #[serde(default)]
    pub block_len: Option<usize>,
    #[serde(default)]
    pub resample: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub method: SurrogateMethod,
    pub m: usize,
    #[serde(default)]
    pub quantile_levels: Vec<f64>,
    #[serde(default)]
    pub zscore_densities: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionConfig {
    #[serde(default)]
    pub densities: Vec<f64>,
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub knn: Vec<usize>,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default)]
    pub surrogate: Option<SurrogateConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Degree,
    Clustering,
    WeightedClustering,
    Betweenness,
    ShortestPath,
    Curvature,
    LinkLength,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleFilterConfig {
    All,
    FalseLinks,
    LongerThan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub eps_deg: f64,
    pub c: f64,
    pub kind: BundleKind,
    #[serde(default = "default_filter")]
    pub filter: BundleFilterConfig,
    /// Length threshold in radians for `longer_than`.
    #[serde(default)]
    pub length: Option<f64>,
}

fn default_filter() -> BundleFilterConfig {
    BundleFilterConfig::All
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MadConfig {
    pub eps_deg: f64,
    #[serde(default = "default_shuffles")]
    pub shuffles: usize,
}

fn default_shuffles() -> usize {
    100
}

fn default_estimators() -> Vec<EstimatorSpec> {
    vec![EstimatorSpec::Pearson]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_one")]
    pub repetitions: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    #[serde(default)]
    pub field: Option<FieldConfig>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub construction: ConstructionConfig,
    #[serde(default)]
    pub measures: Vec<MeasureKind>,
    #[serde(default)]
    pub compare_ground_truth: bool,
    #[serde(default)]
    pub bundles: Vec<BundleConfig>,
    #[serde(default)]
    pub mad: Option<MadConfig>,
    #[serde(default)]
    pub degree_bias: bool,
    #[serde(default)]
    pub save_networks: bool,
}

fn check_unit_interval(path: &str, values: &[f64], inclusive_zero: bool) -> Result<()> {
    for (k, &v) in values.iter().enumerate() {
        let ok = if inclusive_zero { (0.0..=1.0).contains(&v) } else { v > 0.0 && v <= 1.0 };
        if !ok {
            return Err(Error::config(format!("{path}[{k}]"), format!("{v} outside the allowed range")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        match (&self.field, &self.data) {
            (Some(_), Some(_)) => return Err(Error::config("data", "give either `field` or `data`, not both")),
            (None, None) => return Err(Error::config("field", "either `field` or `data` is required")),
            _ => {}
        }
        if let Some(f) = &self.field {
            MaternParams::unit(f.nu, f.ell).map_err(|e| Error::config("field", e.to_string()))?;
            if f.n < 2 {
                return Err(Error::config("field.n", "needs at least 2 time steps"));
            }
            match f.autocorr {
                Some(AutocorrConfig::Uniform { value }) if !(value.abs() < 1.0) => {
                    return Err(Error::config("field.autocorr.value", "must lie in (-1, 1)"))
                }
                Some(AutocorrConfig::Halves { low, high }) if !(low.abs() < 1.0 && high.abs() < 1.0) => {
                    return Err(Error::config("field.autocorr", "low and high must lie in (-1, 1)"))
                }
                _ => {}
            }
        }
        if self.estimators.is_empty() {
            return Err(Error::config("estimators", "at least one estimator is required"));
        }
        let c = &self.construction;
        check_unit_interval("construction.densities", &c.densities, false)?;
        if let Some(k) = c.knn.iter().position(|&k| k == 0) {
            return Err(Error::config(format!("construction.knn[{k}]"), "must be positive"));
        }
        if let Some(s) = &c.surrogate {
            if s.m < 2 {
                return Err(Error::config("construction.surrogate.m", "needs at least 2 surrogates"));
            }
            check_unit_interval("construction.surrogate.quantile_levels", &s.quantile_levels, true)?;
            check_unit_interval("construction.surrogate.zscore_densities", &s.zscore_densities, false)?;
        }
        if c.densities.is_empty() && c.taus.is_empty() && c.knn.is_empty() && c.surrogate.is_none() {
            return Err(Error::config("construction", "no construction scheme given"));
        }
        if self.compare_ground_truth && self.field.is_none() {
            return Err(Error::config("compare_ground_truth", "needs a simulated field"));
        }
        if self.degree_bias && !matches!(self.field.as_ref().and_then(|f| f.autocorr.as_ref()), Some(AutocorrConfig::Halves { .. })) {
            return Err(Error::config("degree_bias", "needs field.autocorr of kind `halves`"));
        }
        for (k, b) in self.bundles.iter().enumerate() {
            BundleSpec::new(b.eps_deg.to_radians(), b.c, b.kind).map_err(|e| Error::config(format!("bundles[{k}]"), e.to_string()))?;
            if b.filter == BundleFilterConfig::FalseLinks && !self.compare_ground_truth {
                return Err(Error::config(format!("bundles[{k}].filter"), "false_links needs compare_ground_truth"));
            }
            if b.filter == BundleFilterConfig::LongerThan && b.length.is_none() {
                return Err(Error::config(format!("bundles[{k}].length"), "required for longer_than"));
            }
        }
        if let Some(m) = &self.mad {
            if !(m.eps_deg > 0.0) || m.shuffles == 0 {
                return Err(Error::config("mad", "eps_deg must be positive and shuffles at least 1"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// One scalar result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub rep: usize,
    pub estimator: String,
    pub scheme: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub estimator: String,
    pub scheme: String,
    pub metric: String,
    /// Number of finite values.
    pub count: usize,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub rep: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub version: String,
    pub master_seed: u64,
    pub rep_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub provenance: Provenance,
    pub simulation: Option<SimulationInfo>,
    pub records: Vec<Record>,
    /// Measures of the ground-truth networks (repetition index 0).
    pub ground_truth: Vec<Record>,
    pub failures: Vec<Failure>,
    pub aggregates: Vec<Aggregate>,
}

/// Means and 0.025/0.975 empirical quantiles per (estimator, scheme, metric),
/// ordered by key.
pub fn aggregate(records: &[Record]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        let e = groups.entry((&r.estimator, &r.scheme, &r.metric)).or_default();
        if r.value.is_finite() {
            e.push(r.value);
        }
    }
    groups
        .into_iter()
        .map(|((estimator, scheme, metric), mut v)| {
            v.sort_by(|a, b| a.total_cmp(b));
            let (mean, q025, q975) = if v.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    v.iter().sum::<f64>() / v.len() as f64,
                    quantile_sorted(&v, 0.025),
                    quantile_sorted(&v, 0.975),
                )
            };
            Aggregate {
                estimator: estimator.to_string(),
                scheme: scheme.to_string(),
                metric: metric.to_string(),
                count: v.len(),
                mean,
                q025,
                q975,
            }
        })
        .collect()
}

impl ExperimentReport {
    /// Mean of one aggregate, if present.
    pub fn mean(&self, estimator: &str, scheme: &str, metric: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.estimator == estimator && a.scheme == scheme && a.metric == metric)
            .map(|a| a.mean)
    }

    pub fn values(&self, estimator: &str, scheme: &str, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.estimator == estimator && r.scheme == scheme && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }
}

fn scheme_label(s: &Scheme) -> String {
    match s {
        Scheme::Density { density } => format!("density={density}"),
        Scheme::Value { tau } => format!("tau={tau}"),
        Scheme::Knn { k } => format!("knn={k}"),
        Scheme::Zscore { density } => format!("zscore={density}"),
        Scheme::Quantile { level } => format!("quantile={level}"),
        Scheme::Rewired { swaps, .. } => format!("rewired={swaps}"),
        Scheme::Custom => "custom".into(),
    }
}

fn plain_schemes(c: &ConstructionConfig) -> Vec<Scheme> {
    c.densities
        .iter()
        .map(|&density| Scheme::Density { density })
        .chain(c.taus.iter().map(|&tau| Scheme::Value { tau }))
        .chain(c.knn.iter().map(|&k| Scheme::Knn { k }))
        .collect()
}

fn finite_mean(x: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in x {
        if v.is_finite() {
            s += v;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Scalar measures of one network as `(metric, value)` pairs.
fn measure_network(
    net: &Network,
    grid: &SphereGrid,
    cfg: &ExperimentConfig,
    truth: Option<&Network>,
    labels: Option<&[f64]>,
    seed: u64,
) -> Result<Vec<(String, f64)>> {
    let mut out: Vec<(String, f64)> = vec![
        ("edges".into(), net.edge_count() as f64),
        ("density".into(), net.density()),
    ];
    for m in &cfg.measures {
        match m {
            MeasureKind::Degree => {
                out.push(("mean_degree".into(), finite_mean(unweighted_degrees(net, true))));
                out.push(("mean_weighted_degree".into(), finite_mean(crate::netmeasure::degrees(net, true))));
            }
            MeasureKind::Clustering => out.push(("mean_clustering".into(), finite_mean(clustering(net, false)))),
            MeasureKind::WeightedClustering => {
                out.push(("mean_weighted_clustering".into(), finite_mean(clustering(net, true))))
            }
            MeasureKind::Betweenness => {
                let b = betweenness(net);
                out.push(("max_betweenness".into(), b.iter().copied().fold(0.0, f64::max)));
                out.push(("mean_betweenness".into(), finite_mean(b)));
            }
            MeasureKind::ShortestPath => {
                let sp = shortest_path_lengths(net);
                out.push(("mean_shortest_path".into(), sp.global_mean()));
                out.push(("unreachable_pairs".into(), sp.unreachable_pairs() as f64));
            }
            MeasureKind::Curvature => out.push(("mean_curvature".into(), finite_mean(forman_curvature(net)))),
            MeasureKind::LinkLength => {
                let lengths: Vec<f64> = net.edges().iter().map(|e| grid.angle(e.i as usize, e.j as usize)).collect();
                out.push(("max_link_length".into(), lengths.iter().copied().fold(0.0, f64::max)));
                out.push(("mean_link_length".into(), finite_mean(lengths)));
            }
        }
    }
    for (k, b) in cfg.bundles.iter().enumerate() {
        let spec = BundleSpec::new(b.eps_deg.to_radians(), b.c, b.kind)?;
        let filter = match b.filter {
            BundleFilterConfig::All => LinkFilter::All,
            BundleFilterConfig::LongerThan => LinkFilter::LongerThan(b.length.unwrap_or(crate::bundles::TELECONNECTION_LENGTH)),
            BundleFilterConfig::FalseLinks => match truth {
                Some(t) => LinkFilter::FalseLinks(t),
                None => continue,
            },
        };
        let scan = bundle_scan(net, grid, &spec, filter)?;
        out.push((format!("bundle{k}_max_length"), scan.max_bundle_length));
        out.push((format!("bundle{k}_fraction"), scan.fraction));
    }
    if let Some(m) = &cfg.mad {
        let r = mad_ball(net, grid, m.eps_deg.to_radians(), seed, m.shuffles)?;
        out.push(("mad".into(), r.mad));
        out.push(("mad_ratio".into(), r.ratio));
    }
    if let Some(t) = truth {
        let c = compare_edges(net, t)?;
        out.push(("fdr".into(), c.fdr));
        out.push(("missing_rate".into(), c.missing_rate));
        if let Ok(d) = differing_fraction(net, t) {
            out.push(("differing_fraction".into(), d));
        }
    }
    if let Some(l) = labels {
        let r = degree_bias_report(net, l, 0)?;
        for g in &r.groups {
            out.push((format!("degree_group_{}", g.label), g.mean_degree));
        }
        if let Some(gap) = r.gap() {
            out.push(("degree_gap".into(), gap));
        }
    }
    Ok(out)
}

struct Prepared {
    grid: Arc<SphereGrid>,
    sampler: Option<FieldSampler>,
    data: Option<Dataset>,
    labels: Option<Vec<f64>>,
    truth_sim: Option<SimilarityMatrix>,
    truth_nets: Vec<(Scheme, Network)>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (grid, data) = match &cfg.data {
        Some(d) => {
            let data = Dataset::read_csv(&d.path)?;
            (data.grid().clone(), Some(data))
        }
        None => (Arc::new(cfg.grid.build()?), None),
    };
    let p = grid.len();
    let mut labels = None;
    let sampler = match &cfg.field {
        Some(f) => {
            let autocorr = match f.autocorr {
                None | Some(AutocorrConfig::None) => Vec::new(),
                Some(AutocorrConfig::Uniform { value }) => vec![value; p],
                Some(AutocorrConfig::Halves { low, high }) => {
                    let a = random_halves(p, low, high, derive_seed(cfg.seed, 0, "halves"));
                    labels = Some(a.clone());
                    a
                }
            };
            let spec = FieldSpec {
                matern: MaternParams::unit(f.nu, f.ell)?,
                autocorr,
                marginal: f.marginal.clone().unwrap_or(Marginal::Gaussian),
                noise: f.noise.as_ref().map(|n| Noise {
                    mask: northern_mask(&grid),
                    amplitude: n.amplitude,
                }),
            };
            Some(FieldSampler::new(grid.clone(), spec)?)
        }
        None => None,
    };
    let (truth_sim, truth_nets) = match (&cfg.field, cfg.compare_ground_truth) {
        (Some(f), true) => {
            let sim = ground_truth_similarity(&grid, MaternParams::unit(f.nu, f.ell)?)?;
            let nets = plain_schemes(&cfg.construction)
                .into_iter()
                .map(|s| construct(&sim, &s, cfg.construction.weighted).map(|n| (s, n)))
                .collect::<Result<Vec<_>>>()?;
            (Some(sim), nets)
        }
        _ => (None, Vec::new()),
    };
    Ok(Prepared {
        grid,
        sampler,
        data,
        labels,
        truth_sim,
        truth_nets,
    })
}

fn with_seed(spec: EstimatorSpec, seed: u64) -> EstimatorSpec {
    match spec {
        EstimatorSpec::MiKsg { k, .. } => EstimatorSpec::MiKsg { k, seed },
        other => other,
    }
}

type RepOutput = (Vec<Record>, Vec<(String, Network)>);

fn run_rep(cfg: &ExperimentConfig, prep: &Prepared, rep: usize) -> Result<RepOutput> {
    let seed = derive_seed(cfg.seed, rep as u64, "field");
    let data = match (&prep.sampler, &prep.data) {
        (Some(s), _) => s.sample(cfg.field.as_ref().map_or(0, |f| f.n), seed)?,
        (None, Some(d)) => match &cfg.data {
            Some(dc) if dc.resample => {
                let bl = dc.block_len.unwrap_or_else(|| default_block_len(d.n()));
                let idx = block_bootstrap_indices(d.n(), bl, derive_seed(cfg.seed, rep as u64, "resample"))?;
                resample_dataset(d, &idx)?
            }
            _ => d.clone(),
        },
        (None, None) => return Err(Error::Internal("no data source".into())),
    };
    let mut records = Vec::new();
    let mut saved = Vec::new();
    let mut push = |est: &str, scheme: &str, metric: String, value: f64| {
        records.push(Record {
            rep,
            estimator: est.to_string(),
            scheme: scheme.to_string(),
            metric,
            value,
        })
    };
    let measure_seed = derive_seed(cfg.seed, rep as u64, "measure");
    for spec in &cfg.estimators {
        let spec = with_seed(*spec, derive_seed(cfg.seed, rep as u64, "estimate"));
        let est = spec.estimator().tag();
        let sim = spec.estimate(&data)?;
        if let Some(t) = &prep.truth_sim {
            push(est, "-", "frobenius".into(), frobenius_error(&sim, t, false)?);
            push(est, "-", "frobenius_rms".into(), frobenius_error(&sim, t, true)?);
        }
        let mut nets: Vec<(Scheme, Network)> = plain_schemes(&cfg.construction)
            .into_iter()
            .map(|s| construct(&sim, &s, cfg.construction.weighted).map(|n| (s, n)))
            .collect::<Result<_>>()?;
        if let Some(sc) = &cfg.construction.surrogate {
            let baseline = edge_baseline(
                &data,
                spec,
                sc.method,
                sc.m,
                &sc.quantile_levels,
                derive_seed(cfg.seed, rep as u64, "surrogate"),
            )?;
            for &level in &sc.quantile_levels {
                nets.push((Scheme::Quantile { level }, quantile_network(&sim, &baseline, level, cfg.construction.weighted)?));
            }
            for &density in &sc.zscore_densities {
                nets.push((Scheme::Zscore { density }, zscore_network(&sim, &baseline, density, cfg.construction.weighted)?));
            }
        }
        for (scheme, net) in nets {
            let label = scheme_label(&scheme);
            let truth = prep.truth_nets.iter().find(|(s, _)| *s == scheme).map(|x| &x.1);
            let values = measure_network(&net, &prep.grid, cfg, truth, prep.labels.as_deref(), measure_seed)?;
            for (metric, value) in values {
                push(est, &label, metric, value);
            }
            if cfg.save_networks {
                saved.push((format!("rep_{rep:03}_{est}_{}", label.replace('=', "_")), net));
            }
        }
    }
    Ok((records, saved))
}

/// Runs every repetition and, when `out` is given, writes `report.json`,
/// `per_rep/rep_NNN.csv` and (if enabled) `networks/*.csv` below it.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let results: Vec<Result<RepOutput>> = (0..cfg.repetitions).into_par_iter().map(|r| run_rep(cfg, &prep, r)).collect();

    let mut ground_truth = Vec::new();
    for (scheme, net) in &prep.truth_nets {
        let values = measure_network(net, &prep.grid, cfg, None, prep.labels.as_deref(), derive_seed(cfg.seed, 0, "measure"))?;
        for (metric, value) in values {
            ground_truth.push(Record {
                rep: 0,
                estimator: "ground_truth".into(),
                scheme: scheme_label(scheme),
                metric,
                value,
            });
        }
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut per_rep = Vec::new();
    for (rep, res) in results.into_iter().enumerate() {
        match res {
            Ok((recs, nets)) => {
                per_rep.push((rep, recs.clone(), nets));
                records.extend(recs);
            }
            Err(e) => {
                log::warn!("repetition {rep} failed: {e}");
                failures.push(Failure { rep, message: e.to_string() });
            }
        }
    }
    let report = ExperimentReport {
        name: cfg.name.clone(),
        provenance: Provenance {
            config_sha256: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: cfg.seed,
            rep_seeds: (0..cfg.repetitions).map(|r| derive_seed(cfg.seed, r as u64, "field")).collect(),
        },
        simulation: prep.sampler.as_ref().map(|s| s.info().clone()),
        aggregates: aggregate(&records),
        records,
        ground_truth,
        failures,
    };
    if let Some(dir) = out {
        write_outputs(dir, &report, &per_rep)?;
    }
    Ok(report)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_outputs(dir: &Path, report: &ExperimentReport, per_rep: &[(usize, Vec<Record>, Vec<(String, Network)>)]) -> Result<()> {
    let rep_dir = dir.join("per_rep");
    std::fs::create_dir_all(&rep_dir).map_err(|e| Error::io(&rep_dir, e))?;
    write_file(&dir.join("report.json"), &report.to_json()?)?;
    for (rep, recs, nets) in per_rep {
        let mut csv = String::from("rep,estimator,scheme,metric,value\n");
        for r in recs {
            let _ = writeln!(csv, "{},{},{},{},{}", r.rep, r.estimator, r.scheme, r.metric, r.value);
        }
        write_file(&rep_dir.join(format!("rep_{rep:03}.csv")), &csv)?;
        if !nets.is_empty() {
            let net_dir = dir.join("networks");
            std::fs::create_dir_all(&net_dir).map_err(|e| Error::io(&net_dir, e))?;
            for (name, net) in nets {
                net.write_csv(&net_dir.join(format!("{name}.csv")))?;
            }
        }
    }
    Ok(())
}

/// Estimator and scheme applied identically to every ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub estimator: EstimatorSpec,
    pub scheme: Scheme,
    #[serde(default)]
    pub weighted: bool,
}

impl Construction {
    pub fn build(&self, data: &Dataset) -> Result<Network> {
        let sim = self.estimator.estimate(data)?;
        Ok(construct(&sim, &self.scheme, self.weighted)?.with_grid(Some(data.grid().clone())))
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub networks: Vec<Network>,
    /// `(i, j, fraction of members containing the edge)`, sorted by `(i, j)`.
    pub frequencies: Vec<(u32, u32, f64)>,
}

impl EnsembleResult {
    /// Edges present in at least a fraction `cutoff` of the members.
    pub fn stable_edges(&self, cutoff: f64) -> Vec<(u32, u32)> {
        self.frequencies.iter().filter(|f| f.2 >= cutoff).map(|f| (f.0, f.1)).collect()
    }

    /// Fraction of edges seen in some but not all members.
    pub fn unstable_fraction(&self) -> f64 {
        if self.frequencies.is_empty() {
            return 0.0;
        }
        self.frequencies.iter().filter(|f| f.2 < 1.0).count() as f64 / self.frequencies.len() as f64
    }
}

/// Builds `m` networks from jointly resampled copies of the data and counts
/// how often each edge appears.
pub fn ensemble_pipeline(
    data: &Dataset,
    construction: &Construction,
    m: usize,
    resampling: Resampling,
    seed: u64,
) -> Result<EnsembleResult> {
    if m < 2 {
        return Err(Error::invalid("an ensemble needs at least 2 members"));
    }
    let n = data.n();
    let indices: Vec<Vec<usize>> = match resampling {
        Resampling::BlockBootstrap { block_len } => {
            let bl = block_len.unwrap_or_else(|| default_block_len(n));
            (0..m)
                .map(|r| block_bootstrap_indices(n, bl, substream(seed, &[r as u64])))
                .collect::<Result<_>>()?
        }
        Resampling::Subsample { window, stride } => {
            if window == 0 || window > n {
                return Err(Error::invalid(format!("window {window} outside [1, {n}]")));
            }
            if stride == 0 {
                return Err(Error::invalid("stride must be positive"));
            }
            let last = (m - 1) * stride + window;
            if last > n {
                return Err(Error::invalid(format!(
                    "{m} windows of length {window} with stride {stride} need {last} steps, data has {n}"
                )));
            }
            (0..m).map(|r| (r * stride..r * stride + window).collect()).collect()
        }
    };
    let networks: Vec<Network> = indices
        .par_iter()
        .map(|idx| construction.build(&resample_dataset(data, idx)?))
        .collect::<Result<_>>()?;
    let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for net in &networks {
        for e in net.edges() {
            *counts.entry((e.i, e.j)).or_default() += 1;
        }
    }
    Ok(EnsembleResult {
        frequencies: counts.into_iter().map(|((i, j), c)| (i, j, c as f64 / m as f64)).collect(),
        networks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub autocorr: f64,
    /// `1.645 sqrt(sigma^2 / n)` from the asymptotic variance.
    pub analytic: f64,
    /// 0.95-quantile of correlations between independent series pairs.
    pub monte_carlo: f64,
    pub shuffle: f64,
    pub iaaft: f64,
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 * sx * sy)
}

/// 0.95-quantiles of the null correlation between two independent AR(1)
/// series of length `n`, per autocorrelation: analytic, Monte Carlo over
/// `pairs` series pairs, and surrogate quantiles from `m` shuffles or IAAFT
/// surrogates per pair, averaged over pairs.
pub fn quantile_calibration(n: usize, autocorrs: &[f64], m: usize, pairs: usize, seed: u64) -> Result<Vec<CalibrationRow>> {
    if m < 100 {
        return Err(Error::invalid("calibration needs at least 100 surrogates"));
    }
    if pairs < 1 || n < 4 {
        return Err(Error::invalid("calibration needs at least one pair and 4 time steps"));
    }
    autocorrs
        .iter()
        .enumerate()
        .map(|(ai, &a)| {
            let analytic = 1.645 * (asymptotic_variance(a, a)? / n as f64).sqrt();
            let per_pair: Vec<(f64, f64, f64)> = (0..pairs)
                .into_par_iter()
                .map(|r| -> Result<(f64, f64, f64)> {
                    let s = substream(seed, &[ai as u64, r as u64]);
                    let x = ar1_series(n, a, substream(s, &[0]))?;
                    let y = ar1_series(n, a, substream(s, &[1]))?;
                    let mut sh = Vec::with_capacity(m);
                    let mut ia = Vec::with_capacity(m);
                    for k in 0..m as u64 {
                        sh.push(correlation(&shuffle_surrogate(&x, substream(s, &[2, k])), &shuffle_surrogate(&y, substream(s, &[3, k]))));
                        let xs = iaaft_surrogate(&x, IaaftConfig::default(), substream(s, &[4, k]))?.series;
                        let ys = iaaft_surrogate(&y, IaaftConfig::default(), substream(s, &[5, k]))?.series;
                        ia.push(correlation(&xs, &ys));
                    }
                    sh.sort_by(|a, b| a.total_cmp(b));
                    ia.sort_by(|a, b| a.total_cmp(b));
                    Ok((correlation(&x, &y), quantile_sorted(&sh, 0.95), quantile_sorted(&ia, 0.95)))
                })
                .collect::<Result<_>>()?;
            let mut direct: Vec<f64> = per_pair.iter().map(|x| x.0).collect();
            direct.sort_by(|a, b| a.total_cmp(b));
            Ok(CalibrationRow {
                autocorr: a,
                analytic,
                monte_carlo: quantile_sorted(&direct, 0.95),
                shuffle: per_pair.iter().map(|x| x.1).sum::<f64>() / pairs as f64,
                iaaft: per_pair.iter().map(|x| x.2).sum::<f64>() / pairs as f64,
            })
        })
        .collect()
}

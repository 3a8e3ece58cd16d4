//! Matérn random fields on the sphere with optional VAR(1) time dependence.

use std::sync::Arc;

use faer::Mat;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, is_psd_within, symmetric_eigen, CovFactor, FactorKind, SymMatrix};
use crate::seeds::{derive_seed, rng_from_seed};
use crate::sphere_grid::SphereGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub nu: f64,
    /// Length scale in chordal units (radians to first order).
    pub ell: f64,
    #[serde(default = "one")]
    pub variance: f64,
}

fn one() -> f64 {
    1.0
}

impl MaternParams {
    pub fn new(nu: f64, ell: f64, variance: f64) -> Result<Self> {
        let p = MaternParams { nu, ell, variance };
        p.validate()?;
        Ok(p)
    }

    pub fn unit(nu: f64, ell: f64) -> Result<Self> {
        Self::new(nu, ell, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.ell > 0.0 && self.variance > 0.0)
            || !(self.nu.is_finite() && self.ell.is_finite() && self.variance.is_finite())
        {
            return Err(Error::invalid(format!(
                "Matérn parameters must be positive, got nu={}, ell={}, variance={}",
                self.nu, self.ell, self.variance
            )));
        }
        Ok(())
    }
}

/// Evaluates the Matérn correlation at chordal distance.
#[derive(Clone, Debug)]
pub struct Matern {
    params: MaternParams,
    scale: f64,
    half_integer: Option<Vec<f64>>,
    log_norm: f64,
}

impl Matern {
    pub fn new(params: MaternParams) -> Result<Self> {
        params.validate()?;
        let nu = params.nu;
        let twice = 2.0 * nu;
        // nu = m + 1/2 has a polynomial-times-exponential closed form
        let half_integer = if (twice - twice.round()).abs() < 1e-12
            && (twice.round() as i64) % 2 == 1
            && twice < 41.0
        {
            let m = ((twice.round() as i64 - 1) / 2) as usize;
            Some(half_integer_coefficients(m))
        } else {
            None
        };
        Ok(Matern {
            params,
            scale: (2.0 * nu).sqrt() / params.ell,
            half_integer,
            log_norm: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
        })
    }

    pub fn params(&self) -> MaternParams {
        self.params
    }

    /// Correlation at great-circle angle `d` (radians).
    pub fn correlation(&self, d: f64) -> Result<f64> {
        if !(0.0..=std::f64::consts::PI + 1e-12).contains(&d) {
            return Err(Error::invalid(format!("angle {d} outside [0, pi]")));
        }
        Ok(self.correlation_unchecked(d))
    }

    #[inline]
    pub(crate) fn correlation_unchecked(&self, d: f64) -> f64 {
        let chord = 2.0 * (0.5 * d).sin();
        self.at_chord(chord)
    }

    #[inline]
    fn at_chord(&self, chord: f64) -> f64 {
        let r = self.scale * chord;
        if r <= 0.0 {
            return 1.0;
        }
        if let Some(coef) = &self.half_integer {
            // coef are polynomial coefficients in r, highest power last
            let mut poly = 0.0;
            for &c in coef.iter().rev() {
                poly = poly * r + c;
            }
            return poly * (-r).exp();
        }
        let nu = self.params.nu;
        let (ln_k, _) = ln_bessel_k(nu, r);
        (self.log_norm + nu * r.ln() + ln_k).exp().min(1.0)
    }
}

/// Coefficients of the polynomial `P` with `Matérn_{m+1/2}(r) = P(r) e^{-r}`,
/// constant term first.
fn half_integer_coefficients(m: usize) -> Vec<f64> {
    // P(r) = m!/(2m)! * sum_k (m+k)!/(k!(m-k)!) (2r)^(m-k)
    let fact = |k: usize| (1..=k).fold(1.0f64, |a, b| a * b as f64);
    let lead = fact(m) / fact(2 * m);
    let mut coef = vec![0.0; m + 1];
    for k in 0..=m {
        let power = m - k;
        coef[power] = lead * fact(m + k) / (fact(k) * fact(m - k)) * 2f64.powi(power as i32);
    }
    coef
}

/// Natural log of the modified Bessel function of the second kind, from
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid rule.
/// Returns `(ln K, number of nodes)`.
pub(crate) fn ln_bessel_k(nu: f64, x: f64) -> (f64, usize) {
    let nu = nu.abs();
    // integrate exp(-x (cosh t - 1)) cosh(nu t) and add back -x
    let mut t_max: f64 = 1.0;
    while x * (t_max.cosh() - 1.0) - nu * t_max < 60.0 {
        t_max += 0.5;
    }
    let h = 0.01_f64.min(t_max / 64.0);
    let steps = (t_max / h).ceil() as usize;
    let h = t_max / steps as f64;
    let f = |t: f64| (-x * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
    let mut sum = 0.5 * (f(0.0) + f(t_max));
    for k in 1..steps {
        sum += f(k as f64 * h);
    }
    ((sum * h).ln() - x, steps)
}

/// Correlation at angle `d` for the given parameters.
pub fn matern_correlation(d: f64, params: MaternParams) -> Result<f64> {
    Matern::new(params)?.correlation(d)
}

/// Correlation of `exp(X), exp(Y)` when `X, Y` are jointly Gaussian with
/// variance `sigma2` and correlation `k_val`.
pub fn lognormal_correlation(k_val: f64, sigma2: f64) -> f64 {
    (sigma2 * k_val).exp_m1() / sigma2.exp_m1()
}

/// `Sigma_ij = variance * Matérn(angle_ij)`.
pub fn ground_truth_covariance(grid: &SphereGrid, params: MaternParams) -> Result<SymMatrix> {
    let cov = covariance_unchecked(grid, params)?;
    let tol = 1e-8 * cov.trace();
    if !is_psd_within(&cov, tol) {
        return Err(Error::Internal(
            "Matérn covariance is not positive semi-definite within tolerance".into(),
        ));
    }
    Ok(cov)
}

/// Ground-truth correlation matrix without the definiteness check.
pub fn ground_truth_correlation(grid: &SphereGrid, params: MaternParams) -> Result<SymMatrix> {
    let unit = MaternParams { variance: 1.0, ..params };
    covariance_unchecked(grid, unit)
}

fn covariance_unchecked(grid: &SphereGrid, params: MaternParams) -> Result<SymMatrix> {
    let kernel = Matern::new(params)?;
    let p = grid.len();
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            (i..p)
                .map(|j| {
                    if i == j {
                        params.variance
                    } else {
                        params.variance * kernel.correlation_unchecked(grid.angle(i, j))
                    }
                })
                .collect()
        })
        .collect();
    SymMatrix::from_packed(p, rows.concat())
}

/// Outcome of the definiteness repair of the innovation covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Repair {
    pub negative_eigenvalues: usize,
    /// Sum of `1e-8 - lambda` over the shifted eigenvalues.
    pub shifted_mass: f64,
}

/// `Sigma_ij (1 - a_i a_j)`, with negative eigenvalues shifted to `1e-8`.
pub fn innovation_covariance(sigma: &SymMatrix, autocorr: &[f64]) -> Result<(SymMatrix, Option<Repair>)> {
    let p = sigma.dim();
    if autocorr.len() != p {
        return Err(Error::invalid(format!(
            "{} autocorrelations for {p} nodes",
            autocorr.len()
        )));
    }
    if let Some(a) = autocorr.iter().find(|a| !(a.abs() < 1.0)) {
        return Err(Error::invalid(format!("autocorrelation {a} outside (-1, 1)")));
    }
    let eps = SymMatrix::from_fn(p, |i, j| sigma.get(i, j) * (1.0 - autocorr[i] * autocorr[j]));
    if is_positive_definite(&eps) {
        return Ok((eps, None));
    }
    let (vals, vecs) = symmetric_eigen(&eps)?;
    let floor = 1e-8;
    let mut repair = Repair::default();
    let shifted: Vec<f64> = vals
        .iter()
        .map(|&l| {
            if l < 0.0 {
                repair.negative_eigenvalues += 1;
                repair.shifted_mass += floor - l;
                floor
            } else {
                l
            }
        })
        .collect();
    if repair.negative_eigenvalues == 0 {
        return Ok((eps, None));
    }
    let scaled = Mat::from_fn(p, p, |i, k| vecs[(i, k)] * shifted[k]);
    let rebuilt = &scaled * vecs.transpose();
    Ok((SymMatrix::from_dense(&rebuilt), Some(repair)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Gaussian,
    /// The Gaussian field is rescaled to variance `sigma2`, then exponentiated.
    Lognormal { sigma2: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub mask: Vec<bool>,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub matern: MaternParams,
    /// Per-node lag-1 coefficients; empty means all zero.
    pub autocorr: Vec<f64>,
    pub marginal: Marginal,
    pub noise: Option<Noise>,
}

impl FieldSpec {
    pub fn iid(matern: MaternParams) -> Self {
        FieldSpec {
            matern,
            autocorr: Vec::new(),
            marginal: Marginal::Gaussian,
            noise: None,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        self.matern.validate()?;
        if !self.autocorr.is_empty() && self.autocorr.len() != p {
            return Err(Error::invalid(format!(
                "{} autocorrelations for {p} nodes",
                self.autocorr.len()
            )));
        }
        if let Some(a) = self.autocorr.iter().find(|a| !(a.abs() < 1.0)) {
            return Err(Error::invalid(format!("autocorrelation {a} outside (-1, 1)")));
        }
        if let Marginal::Lognormal { sigma2 } = self.marginal {
            if !(sigma2 > 0.0) {
                return Err(Error::invalid("lognormal sigma2 must be positive"));
            }
        }
        if let Some(noise) = &self.noise {
            if noise.mask.len() != p || !(noise.amplitude >= 0.0) {
                return Err(Error::invalid("noise mask must cover every node with amplitude >= 0"));
            }
        }
        Ok(())
    }
}

/// Unit-variance stationary AR(1) series `x_t = a x_{t-1} + sqrt(1 - a^2) e_t`.
pub fn ar1_series(n: usize, a: f64, seed: u64) -> Result<Vec<f64>> {
    if !(a.abs() < 1.0) {
        return Err(Error::invalid(format!("autocorrelation {a} outside (-1, 1)")));
    }
    let mut rng = rng_from_seed(seed);
    let scale = (1.0 - a * a).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut prev: f64 = StandardNormal.sample(&mut rng);
    for _ in 0..n {
        x.push(prev);
        let e: f64 = StandardNormal.sample(&mut rng);
        prev = a * prev + scale * e;
    }
    Ok(x)
}

/// Autocorrelations with a random half of the nodes at `low` and the rest at `high`.
pub fn random_halves(p: usize, low: f64, high: f64, seed: u64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..p).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut a = vec![high; p];
    for &i in &idx[..p / 2] {
        a[i] = low;
    }
    a
}

/// True for nodes with positive latitude.
pub fn northern_mask(grid: &SphereGrid) -> Vec<bool> {
    grid.lat_lons().iter().map(|&(lat, _)| lat > 0.0).collect()
}

/// Metadata describing how a sample was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationInfo {
    pub factor: FactorKind,
    pub innovation_factor: Option<FactorKind>,
    pub repair: Option<Repair>,
}

/// Precomputed factors for repeated sampling of one field specification.
pub struct FieldSampler {
    grid: Arc<SphereGrid>,
    spec: FieldSpec,
    stationary: CovFactor,
    innovation: Option<CovFactor>,
    info: SimulationInfo,
}

impl FieldSampler {
    pub fn new(grid: Arc<SphereGrid>, spec: FieldSpec) -> Result<Self> {
        let p = grid.len();
        spec.validate(p)?;
        let sigma = ground_truth_covariance(&grid, spec.matern)?;
        let stationary = CovFactor::new(&sigma)?;
        let dependent = spec.autocorr.iter().any(|&a| a != 0.0);
        let (innovation, repair) = if dependent {
            let (eps, repair) = innovation_covariance(&sigma, &spec.autocorr)?;
            (Some(CovFactor::new(&eps)?), repair)
        } else {
            (None, None)
        };
        let info = SimulationInfo {
            factor: stationary.kind,
            innovation_factor: innovation.as_ref().map(|f| f.kind),
            repair,
        };
        Ok(FieldSampler {
            grid,
            spec,
            stationary,
            innovation,
            info,
        })
    }

    pub fn info(&self) -> &SimulationInfo {
        &self.info
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Draws an `n`-step sample. Identical seeds give identical bits.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("time length must be at least 1"));
        }
        let p = self.grid.len();
        let mut rng = rng_from_seed(derive_seed(seed, 0, "field"));
        let mut normals = |cols: usize| {
            let mut z = Mat::<f64>::zeros(p, cols);
            for t in 0..cols {
                for i in 0..p {
                    z[(i, t)] = StandardNormal.sample(&mut rng);
                }
            }
            z
        };
        let mut values = vec![0.0; p * n];
        match &self.innovation {
            None => {
                let x = self.stationary.apply(&normals(n));
                for i in 0..p {
                    for t in 0..n {
                        values[i * n + t] = x[(i, t)];
                    }
                }
            }
            Some(innov) => {
                let x0 = self.stationary.apply(&normals(1));
                let e = if n > 1 { Some(innov.apply(&normals(n - 1))) } else { None };
                let a = &self.spec.autocorr;
                for i in 0..p {
                    let mut prev = x0[(i, 0)];
                    values[i * n] = prev;
                    if let Some(e) = &e {
                        for t in 1..n {
                            prev = a[i] * prev + e[(i, t - 1)];
                            values[i * n + t] = prev;
                        }
                    }
                }
            }
        }
        if let Marginal::Lognormal { sigma2 } = self.spec.marginal {
            let s = (sigma2 / self.spec.matern.variance).sqrt();
            values.iter_mut().for_each(|v| *v = (s * *v).exp());
        }
        if let Some(noise) = &self.spec.noise {
            let mut rng = rng_from_seed(derive_seed(seed, 0, "noise"));
            for i in 0..p {
                if noise.mask[i] {
                    for t in 0..n {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        values[i * n + t] += noise.amplitude * z;
                    }
                }
            }
        }
        Dataset::new(self.grid.clone(), n, values)
    }
}

/// One-shot simulation.
pub fn simulate(grid: Arc<SphereGrid>, spec: FieldSpec, n: usize, seed: u64) -> Result<(Dataset, SimulationInfo)> {
    let sampler = FieldSampler::new(grid, spec)?;
    let data = sampler.sample(n, seed)?;
    Ok((data, sampler.info.clone()))
}

/// Variance inflation of the empirical correlation between two AR(1)
/// series with coefficients `alpha` and `beta`.
pub fn asymptotic_variance(alpha: f64, beta: f64) -> Result<f64> {
    let ab = alpha * beta;
    if !(ab.abs() < 1.0) {
        return Err(Error::invalid(format!("|alpha*beta| = {} must be < 1", ab.abs())));
    }
    Ok(1.0 + 2.0 * ab / (1.0 - ab))
}

/// Number of independent samples with the same estimation variance.
pub fn effective_length(n: usize, alpha: f64, beta: f64) -> Result<f64> {
    Ok(n as f64 / asymptotic_variance(alpha, beta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_grid::lat_lon_to_point;
    use proptest::prelude::*;

    #[test]
    fn closed_forms_at_low_smoothness() {
        let m05 = Matern::new(MaternParams::unit(0.5, 0.1).unwrap()).unwrap();
        let m15 = Matern::new(MaternParams::unit(1.5, 0.2).unwrap()).unwrap();
        for k in 0..=100 {
            let d = std::f64::consts::PI * k as f64 / 100.0;
            let c = 2.0 * (d / 2.0).sin();
            assert!((m05.correlation(d).unwrap() - (-c / 0.1).exp()).abs() < 1e-12);
            let r = 3f64.sqrt() * c / 0.2;
            assert!((m15.correlation(d).unwrap() - (1.0 + r) * (-r).exp()).abs() < 1e-12);
        }
        assert_eq!(m05.correlation(0.0).unwrap(), 1.0);
        assert!(m05.correlation(-0.1).is_err());
        assert!(m05.correlation(4.0).is_err());
    }

    #[test]
    fn bessel_quadrature_matches_half_integer_forms() {
        // the generic path is forced by nudging nu off the half-integer lattice
        for &(nu, ell) in &[(0.5, 0.1), (1.5, 0.2), (2.5, 0.3)] {
            let exact = Matern::new(MaternParams::unit(nu, ell).unwrap()).unwrap();
            let mut generic = exact.clone();
            generic.half_integer = None;
            for k in 1..200 {
                let d = 0.001 + 3.1 * k as f64 / 200.0;
                let (a, b) = (exact.correlation(d).unwrap(), generic.correlation(d).unwrap());
                assert!((a - b).abs() < 1e-10 * a.max(1e-300) + 1e-14, "nu {nu} d {d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn generic_smoothness_is_monotone_and_continuous_at_zero() {
        let m = Matern::new(MaternParams::unit(1.0, 0.2).unwrap()).unwrap();
        let mut prev = 1.0;
        for k in 1..500 {
            let v = m.correlation(k as f64 * 0.006).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!((m.correlation(1e-9).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn antipodal_pair_covariance() {
        let grid = SphereGrid::from_lat_lon(vec![(90.0, 0.0), (-90.0, 0.0)]).unwrap();
        let cov = ground_truth_covariance(&grid, MaternParams::unit(0.5, 0.1).unwrap()).unwrap();
        assert_eq!(cov.get(0, 0), 1.0);
        assert!((cov.get(0, 1) - (-20.0f64).exp()).abs() < 1e-20);
    }

    #[test]
    fn lognormal_correlation_values() {
        assert_eq!(lognormal_correlation(1.0, 10.0), 1.0);
        assert_eq!(lognormal_correlation(0.0, 10.0), 0.0);
        let v = lognormal_correlation(0.5, 10.0);
        assert!((v - (5f64.exp() - 1.0) / (10f64.exp() - 1.0)).abs() < 1e-15);
        assert!((v - 6.693e-3).abs() < 1e-6);
    }

    #[test]
    fn asymptotic_variance_values() {
        assert_eq!(asymptotic_variance(0.0, 0.4).unwrap(), 1.0);
        assert!((asymptotic_variance(0.9, 0.9).unwrap() - 9.526).abs() < 1e-3);
        assert!((effective_length(100, 0.0, 0.0).unwrap() - 100.0).abs() < 1e-12);
        assert!(asymptotic_variance(1.0, 1.0).is_err());
    }

    #[test]
    fn innovation_covariance_scaling() {
        let grid = SphereGrid::fekete(60, 50, 1).unwrap();
        let sigma = ground_truth_covariance(&grid, MaternParams::unit(0.5, 0.3).unwrap()).unwrap();
        let (e0, r0) = innovation_covariance(&sigma, &vec![0.0; 60]).unwrap();
        assert_eq!(e0, sigma);
        assert!(r0.is_none());
        let (e, r) = innovation_covariance(&sigma, &vec![0.6; 60]).unwrap();
        assert!(r.is_none());
        for i in 0..60 {
            for j in 0..60 {
                assert!((e.get(i, j) - 0.64 * sigma.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let grid = Arc::new(SphereGrid::fekete(40, 20, 2).unwrap());
        let spec = FieldSpec {
            autocorr: vec![0.5; 40],
            ..FieldSpec::iid(MaternParams::unit(0.5, 0.2).unwrap())
        };
        let (a, _) = simulate(grid.clone(), spec.clone(), 30, 11).unwrap();
        let (b, _) = simulate(grid.clone(), spec.clone(), 30, 11).unwrap();
        let (c, _) = simulate(grid, spec, 30, 12).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn single_column_draws_match_covariance() {
        let grid = Arc::new(SphereGrid::fekete(8, 50, 4).unwrap());
        let params = MaternParams::unit(1.5, 0.5).unwrap();
        let sigma = ground_truth_covariance(&grid, params).unwrap();
        let sampler = FieldSampler::new(grid, FieldSpec::iid(params)).unwrap();
        let reps = 10_000;
        let mut acc = vec![0.0; 64];
        for s in 0..reps {
            let d = sampler.sample(1, s).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    acc[i * 8 + j] += d.row(i)[0] * d.row(j)[0];
                }
            }
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                num += (acc[i * 8 + j] / reps as f64 - sigma.get(i, j)).powi(2);
                den += sigma.get(i, j).powi(2);
            }
        }
        assert!((num / den).sqrt() < 0.05);
    }

    #[test]
    fn strong_autocorrelation_is_realized() {
        let grid = Arc::new(SphereGrid::fekete(6, 20, 5).unwrap());
        let spec = FieldSpec {
            autocorr: vec![0.9; 6],
            ..FieldSpec::iid(MaternParams::unit(0.5, 0.3).unwrap())
        };
        let (d, _) = simulate(grid, spec, 20_000, 3).unwrap();
        for i in 0..6 {
            let x = d.row(i);
            let (m, s) = crate::dataset::mean_std(x);
            let lag: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>()
                / ((x.len() - 1) as f64 * s * s);
            assert!((lag - 0.9).abs() < 0.02, "node {i}: {lag}");
        }
    }

    fn rotate(p: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
        let (s, c) = angle.sin_cos();
        let dot = p[0] * axis[0] + p[1] * axis[1] + p[2] * axis[2];
        let cross = [
            axis[1] * p[2] - axis[2] * p[1],
            axis[2] * p[0] - axis[0] * p[2],
            axis[0] * p[1] - axis[1] * p[0],
        ];
        [0, 1, 2].map(|k| p[k] * c + cross[k] * s + axis[k] * dot * (1.0 - c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn covariance_invariant_under_rotation(
            lat in -80.0f64..80.0, lon in 0.0f64..360.0, angle in 0.0f64..6.28,
            nu in prop::sample::select(vec![0.5, 1.5, 2.5]), ell in 0.05f64..0.5,
        ) {
            let base = SphereGrid::fekete(30, 30, 7).unwrap();
            let axis = lat_lon_to_point(lat, lon);
            let rotated: Vec<(f64, f64)> = base
                .points()
                .iter()
                .map(|&p| crate::sphere_grid::point_to_lat_lon(rotate(p, axis, angle)))
                .collect();
            let rot = SphereGrid::from_lat_lon(rotated).unwrap();
            let params = MaternParams::unit(nu, ell).unwrap();
            let a = ground_truth_covariance(&base, params).unwrap();
            let b = ground_truth_covariance(&rot, params).unwrap();
            for (x, y) in a.packed().iter().zip(b.packed()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}

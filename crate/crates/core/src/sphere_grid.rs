//! Point sets on the unit sphere and great-circle geometry.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::rng_from_seed;

const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Fekete,
    Gaussian,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereGrid {
    points: Vec<[f64; 3]>,
    lat_lon: Vec<(f64, f64)>,
    kind: GridKind,
    resolution_deg: Option<f64>,
}

/// Great-circle angle in radians between two unit vectors.
pub fn great_circle_angle(u: [f64; 3], v: [f64; 3]) -> Result<f64> {
    for w in [u, v] {
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("vector {w:?} is not unit length")));
        }
    }
    Ok(angle_unchecked(u, v))
}

#[inline]
pub(crate) fn angle_unchecked(u: [f64; 3], v: [f64; 3]) -> f64 {
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    let cross = (cx * cx + cy * cy + cz * cz).sqrt();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    cross.atan2(dot)
}

pub fn lat_lon_to_point(lat_deg: f64, lon_deg: f64) -> [f64; 3] {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

pub fn point_to_lat_lon(p: [f64; 3]) -> (f64, f64) {
    let lat = p[2].clamp(-1.0, 1.0).asin().to_degrees();
    let mut lon = p[1].atan2(p[0]).to_degrees();
    if lon < 0.0 {
        lon += 360.0;
    }
    if lon >= 360.0 {
        lon -= 360.0;
    }
    (lat, lon)
}

impl SphereGrid {
    /// Builds a grid from latitude/longitude pairs in degrees.
    pub fn from_lat_lon(lat_lon: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_lat_lon_kind(lat_lon, GridKind::Custom, None)
    }

    fn from_lat_lon_kind(
        lat_lon: Vec<(f64, f64)>,
        kind: GridKind,
        resolution_deg: Option<f64>,
    ) -> Result<Self> {
        for (k, &(lat, lon)) in lat_lon.iter().enumerate() {
            if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 {
                return Err(Error::invalid(format!(
                    "node {k}: invalid coordinates ({lat}, {lon})"
                )));
            }
        }
        let points = lat_lon
            .iter()
            .map(|&(la, lo)| lat_lon_to_point(la, lo))
            .collect();
        Ok(SphereGrid {
            points,
            lat_lon,
            kind,
            resolution_deg,
        })
    }

    fn from_points(points: Vec<[f64; 3]>, kind: GridKind) -> Self {
        let lat_lon = points.iter().map(|&p| point_to_lat_lon(p)).collect();
        SphereGrid {
            points,
            lat_lon,
            kind,
            resolution_deg: None,
        }
    }

    /// Approximately equidistant points from projected gradient descent on
    /// the logarithmic energy, started from a seeded random configuration.
    pub fn fekete(n_points: usize, iterations: usize, seed: u64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::invalid("a Fekete grid needs at least 2 points"));
        }
        let mut rng = rng_from_seed(seed);
        let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n_points);
        while pts.len() < n_points {
            let v: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if norm > 1e-8 {
                pts.push([v[0] / norm, v[1] / norm, v[2] / norm]);
            }
        }
        let spacing2 = 4.0 * std::f64::consts::PI / n_points as f64;
        let max_step = 0.5 * spacing2.sqrt();
        let step = 0.1 * spacing2;
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        let mut zs: Vec<f64> = pts.iter().map(|p| p[2]).collect();
        for _ in 0..iterations {
            let updated: Vec<[f64; 3]> = (0..n_points)
                .into_par_iter()
                .map(|i| {
                    let f = repulsion(i, &xs, &ys, &zs);
                    let p = [xs[i], ys[i], zs[i]];
                    let radial = f[0] * p[0] + f[1] * p[1] + f[2] * p[2];
                    let mut d = [
                        step * (f[0] - radial * p[0]),
                        step * (f[1] - radial * p[1]),
                        step * (f[2] - radial * p[2]),
                    ];
                    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if len > max_step {
                        let s = max_step / len;
                        d = [d[0] * s, d[1] * s, d[2] * s];
                    }
                    let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                    let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                    [q[0] / qn, q[1] / qn, q[2] / qn]
                })
                .collect();
            for (i, q) in updated.into_iter().enumerate() {
                xs[i] = q[0];
                ys[i] = q[1];
                zs[i] = q[2];
            }
        }
        let points = (0..n_points).map(|i| [xs[i], ys[i], zs[i]]).collect();
        Ok(Self::from_points(points, GridKind::Fekete))
    }

    /// Regular latitude/longitude grid. Latitudes start at `-90 + res/2`,
    /// longitudes at 0; nodes are ordered latitude-major.
    pub fn gaussian(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
            return Err(Error::invalid(format!(
                "resolution {resolution_deg} must lie in (0, 90]"
            )));
        }
        let n_lat = 180.0 / resolution_deg;
        let n_lon = 360.0 / resolution_deg;
        if (n_lat - n_lat.round()).abs() > 1e-9 || (n_lon - n_lon.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "resolution {resolution_deg} does not divide 180 and 360"
            )));
        }
        let (n_lat, n_lon) = (n_lat.round() as usize, n_lon.round() as usize);
        let mut lat_lon = Vec::with_capacity(n_lat * n_lon);
        for a in 0..n_lat {
            let lat = -90.0 + resolution_deg / 2.0 + a as f64 * resolution_deg;
            for b in 0..n_lon {
                lat_lon.push((lat, b as f64 * resolution_deg));
            }
        }
        Self::from_lat_lon_kind(lat_lon, GridKind::Gaussian, Some(resolution_deg))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn resolution_deg(&self) -> Option<f64> {
        self.resolution_deg
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    pub fn lat_lon(&self, i: usize) -> (f64, f64) {
        self.lat_lon[i]
    }

    pub fn lat_lons(&self) -> &[(f64, f64)] {
        &self.lat_lon
    }

    /// Great-circle angle between nodes `i` and `j`.
    #[inline]
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            angle_unchecked(self.points[i], self.points[j])
        }
    }

    /// Full angle matrix in packed form.
    pub fn distance_matrix(&self) -> crate::linalg::SymMatrix {
        crate::linalg::SymMatrix::from_fn(self.len(), |i, j| self.angle(i, j))
    }

    /// Indices of all nodes within angle `eps` of node `i` (self included),
    /// ascending.
    pub fn epsilon_ball(&self, i: usize, eps: f64) -> Vec<u32> {
        let cos_eps = eps.cos() - 1e-9;
        let pi = self.points[i];
        let mut ball = Vec::new();
        for (j, &pj) in self.points.iter().enumerate() {
            let dot = pi[0] * pj[0] + pi[1] * pj[1] + pi[2] * pj[2];
            if (dot >= cos_eps || eps >= std::f64::consts::PI) && self.angle(i, j) <= eps {
                ball.push(j as u32);
            }
        }
        ball
    }

    pub fn epsilon_balls(&self, eps: f64) -> Result<Vec<Vec<u32>>> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!("ball radius {eps} must be non-negative")));
        }
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| self.epsilon_ball(i, eps))
            .collect())
    }

    /// Angle from each node to its nearest other node.
    pub fn nearest_neighbor_angles(&self) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                (0..self.len())
                    .filter(|&j| j != i)
                    .map(|j| self.angle(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Logarithmic energy `sum_{i<j} -ln |x_i - x_j|`.
    pub fn log_energy(&self) -> f64 {
        let n = self.len();
        let mut e = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (self.points[i], self.points[j]);
                let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
                e -= 0.5 * d2.ln();
            }
        }
        e
    }

    /// Keeps the nodes with `keep[i] == true`, in their original order.
    pub fn subset(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.len() {
            return Err(Error::invalid(format!(
                "mask length {} does not match grid size {}",
                keep.len(),
                self.len()
            )));
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        if idx.is_empty() {
            return Err(Error::invalid("mask keeps no nodes"));
        }
        Ok(self.select(&idx))
    }

    /// Grid made of the listed nodes, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        SphereGrid {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            lat_lon: idx.iter().map(|&i| self.lat_lon[i]).collect(),
            kind: GridKind::Custom,
            resolution_deg: None,
        }
    }

    /// Indices of the `k` nodes closest to `center`, nearest first.
    pub fn nearest_nodes(&self, center: [f64; 3], k: usize) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, &p)| (angle_unchecked(center, p), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.into_iter().take(k).map(|(_, i)| i).collect()
    }

    /// Writes `index,lat_deg,lon_deg`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.len() * 40 + 32);
        out.push_str("index,lat_deg,lon_deg\n");
        for (i, &(lat, lon)) in self.lat_lon.iter().enumerate() {
            out.push_str(&format!("{i},{lat},{lon}\n"));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(format!("{}: empty grid file", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        if cols != ["index", "lat_deg", "lon_deg"] {
            return Err(Error::format(format!(
                "{}: expected header index,lat_deg,lon_deg, found {header}",
                path.display()
            )));
        }
        let mut lat_lon = Vec::new();
        for (line_no, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::format(format!("{}: bad row {}: {line}", path.display(), line_no + 2));
            if fields.len() != 3 {
                return Err(bad());
            }
            let idx: usize = fields[0].parse().map_err(|_| bad())?;
            if idx != lat_lon.len() {
                return Err(Error::format(format!(
                    "{}: index {idx} out of order at row {}",
                    path.display(),
                    line_no + 2
                )));
            }
            let lat: f64 = fields[1].parse().map_err(|_| bad())?;
            let lon: f64 = fields[2].parse().map_err(|_| bad())?;
            lat_lon.push((lat, lon));
        }
        Self::from_lat_lon(lat_lon).map_err(|e| Error::format(e.to_string()))
    }

    /// Reads a mask file `index,keep` (keep in {0,1,true,false}).
    pub fn read_mask(&self, path: impl AsRef<Path>) -> Result<Vec<bool>> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut keep = vec![false; self.len()];
        let mut seen = vec![false; self.len()];
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (k == 0 && line.starts_with("index")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::format(format!("{}: bad mask row {}: {line}", path.display(), k + 1));
            if fields.len() != 2 {
                return Err(bad());
            }
            let idx: usize = fields[0].parse().map_err(|_| bad())?;
            if idx >= self.len() {
                return Err(bad());
            }
            keep[idx] = match fields[1] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad()),
            };
            seen[idx] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::format(format!(
                "{}: mask does not cover every node",
                path.display()
            )));
        }
        Ok(keep)
    }
}

fn repulsion(i: usize, xs: &[f64], ys: &[f64], zs: &[f64]) -> [f64; 3] {
    let (xi, yi, zi) = (xs[i], ys[i], zs[i]);
    let mut f = [0.0; 3];
    let mut acc = |range: std::ops::Range<usize>| {
        for j in range {
            let dx = xi - xs[j];
            let dy = yi - ys[j];
            let dz = zi - zs[j];
            let r2 = dx * dx + dy * dy + dz * dz;
            let inv = if r2 > 1e-30 { 1.0 / r2 } else { 0.0 };
            f[0] += dx * inv;
            f[1] += dy * inv;
            f[2] += dz * inv;
        }
    };
    acc(0..i);
    acc(i + 1..xs.len());
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poles_are_pi_apart() {
        let a = great_circle_angle([0.0, 0.0, 1.0], [0.0, 0.0, -1.0]).unwrap();
        assert!((a - std::f64::consts::PI).abs() < 1e-15);
        let u = lat_lon_to_point(12.0, 34.0);
        assert_eq!(great_circle_angle(u, u).unwrap(), 0.0);
    }

    #[test]
    fn non_unit_vector_rejected() {
        assert!(matches!(
            great_circle_angle([2.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn coarse_gaussian_grid_layout() {
        let g = SphereGrid::gaussian(90.0).unwrap();
        let ll: Vec<(f64, f64)> = g.lat_lons().to_vec();
        assert_eq!(
            ll,
            vec![
                (-45.0, 0.0),
                (-45.0, 90.0),
                (-45.0, 180.0),
                (-45.0, 270.0),
                (45.0, 0.0),
                (45.0, 90.0),
                (45.0, 180.0),
                (45.0, 270.0)
            ]
        );
        assert_eq!(SphereGrid::gaussian(5.0).unwrap().len(), 2592);
        assert!(SphereGrid::gaussian(7.0).is_err());
        assert!(SphereGrid::gaussian(0.0).is_err());
    }

    #[test]
    fn two_point_fekete_is_antipodal() {
        let g = SphereGrid::fekete(2, 1000, 1).unwrap();
        assert!((g.angle(0, 1) - std::f64::consts::PI).abs() < 1e-6);
        assert!(SphereGrid::fekete(1, 10, 1).is_err());
    }

    #[test]
    fn fekete_descent_lowers_energy_and_is_deterministic() {
        let start = SphereGrid::fekete(200, 0, 9).unwrap();
        let a = SphereGrid::fekete(200, 300, 9).unwrap();
        let b = SphereGrid::fekete(200, 300, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.log_energy() < start.log_energy());
        for p in a.points() {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fekete_spacing_more_uniform_than_gaussian() {
        let f = SphereGrid::fekete(648, 1000, 3).unwrap();
        let g = SphereGrid::gaussian(10.0).unwrap();
        assert_eq!(g.len(), 648);
        let cv = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            s / m
        };
        assert!(cv(f.nearest_neighbor_angles()) < cv(g.nearest_neighbor_angles()));
    }

    #[test]
    fn epsilon_ball_matches_distance_rule() {
        let g = SphereGrid::fekete(300, 50, 5).unwrap();
        let eps = 0.3;
        let balls = g.epsilon_balls(eps).unwrap();
        for i in 0..g.len() {
            let expect: Vec<u32> = (0..g.len())
                .filter(|&j| g.angle(i, j) <= eps)
                .map(|j| j as u32)
                .collect();
            assert_eq!(balls[i], expect);
            assert!(balls[i].contains(&(i as u32)));
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        let g = SphereGrid::fekete(50, 20, 2).unwrap();
        g.write_csv(&path).unwrap();
        let h = SphereGrid::read_csv(&path).unwrap();
        assert_eq!(g.lat_lons(), h.lat_lons());
        for i in 0..g.len() {
            for k in 0..3 {
                assert!((g.point(i)[k] - h.point(i)[k]).abs() < 1e-14);
            }
        }
    }
}

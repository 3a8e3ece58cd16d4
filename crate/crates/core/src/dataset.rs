//! The `p x n` data matrix shared by every estimator.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere_grid::SphereGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timestamp {
    pub year: i32,
    pub month: u8,
    pub day: Option<u8>,
}

/// Node time series stored row-major: row `i` is the series of node `i`.
#[derive(Clone, Debug)]
pub struct Dataset {
    p: usize,
    n: usize,
    values: Vec<f64>,
    grid: Arc<SphereGrid>,
    /// Nodes excluded from network construction (constant or missing data).
    pub flagged: Vec<bool>,
    pub timestamps: Option<Vec<Timestamp>>,
}

impl Dataset {
    pub fn new(grid: Arc<SphereGrid>, n: usize, values: Vec<f64>) -> Result<Self> {
        let p = grid.len();
        if values.len() != p * n {
            return Err(Error::invalid(format!(
                "expected {p} x {n} values, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at node {}, step {}",
                k / n.max(1),
                k % n.max(1)
            )));
        }
        Ok(Dataset {
            p,
            n,
            values,
            grid,
            flagged: vec![false; p],
            timestamps: None,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every entry, keeping grid and flags.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = Dataset::new(
            self.grid.clone(),
            self.n,
            self.values.iter().map(|&v| f(v)).collect(),
        )?;
        out.flagged = self.flagged.clone();
        out.timestamps = self.timestamps.clone();
        Ok(out)
    }

    /// Dataset whose column `t` is column `indices[t]` of `self`.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&t| t >= self.n) {
            return Err(Error::invalid(format!(
                "column index {bad} out of range for length {}",
                self.n
            )));
        }
        let m = indices.len();
        let mut values = Vec::with_capacity(self.p * m);
        for i in 0..self.p {
            let row = self.row(i);
            values.extend(indices.iter().map(|&t| row[t]));
        }
        let mut out = Dataset::new(self.grid.clone(), m, values)?;
        out.flagged = self.flagged.clone();
        out.timestamps = self
            .timestamps
            .as_ref()
            .map(|ts| indices.iter().map(|&t| ts[t]).collect());
        Ok(out)
    }

    /// Restricts to the listed nodes, in the given order.
    pub fn select_nodes(&self, nodes: &[usize]) -> Result<Self> {
        let grid = Arc::new(self.grid.select(nodes));
        let mut values = Vec::with_capacity(nodes.len() * self.n);
        for &i in nodes {
            values.extend_from_slice(self.row(i));
        }
        let mut out = Dataset::new(grid, self.n, values)?;
        out.flagged = nodes.iter().map(|&i| self.flagged[i]).collect();
        out.timestamps = self.timestamps.clone();
        Ok(out)
    }

    /// Writes `node_index,lat_deg,lon_deg,t0,...,t{n-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        out.push_str("node_index,lat_deg,lon_deg");
        for t in 0..self.n {
            out.push_str(&format!(",t{t}"));
        }
        out.push('\n');
        for i in 0..self.p {
            let (lat, lon) = self.grid.lat_lon(i);
            out.push_str(&format!("{i},{lat},{lon}"));
            for v in self.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads the format written by [`Dataset::write_csv`]; the grid is rebuilt
    /// from the coordinate columns.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::format(format!("{}: empty dataset file", path.display())))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[..3] != ["node_index", "lat_deg", "lon_deg"] {
            return Err(Error::format(format!(
                "{}: expected header node_index,lat_deg,lon_deg,t0,...",
                path.display()
            )));
        }
        let n = cols.len() - 3;
        let mut lat_lon = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| {
                Error::format(format!("{}: row {}: {what}", path.display(), k + 2))
            };
            if fields.len() != n + 3 {
                return Err(bad("wrong number of fields"));
            }
            let idx: usize = fields[0].parse().map_err(|_| bad("bad node index"))?;
            if idx != lat_lon.len() {
                return Err(bad("node index out of order"));
            }
            let lat: f64 = fields[1].parse().map_err(|_| bad("bad latitude"))?;
            let lon: f64 = fields[2].parse().map_err(|_| bad("bad longitude"))?;
            lat_lon.push((lat, lon));
            for f in &fields[3..] {
                let v: f64 = f.parse().map_err(|_| bad("bad value"))?;
                if !v.is_finite() {
                    return Err(bad("non-finite value"));
                }
                values.push(v);
            }
        }
        let grid = SphereGrid::from_lat_lon(lat_lon).map_err(|e| Error::format(e.to_string()))?;
        Dataset::new(Arc::new(grid), n, values)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Centers and scales `x` to unit population variance. Returns false (and
/// zeroes the series) when the standard deviation is at or below `tol`.
pub fn standardize_in_place(x: &mut [f64], tol: f64) -> bool {
    let (mean, sd) = mean_std(x);
    if !(sd > tol) {
        x.iter_mut().for_each(|v| *v = 0.0);
        return false;
    }
    x.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let grid = Arc::new(SphereGrid::from_lat_lon(vec![(0.0, 0.0), (10.0, 20.0)]).unwrap());
        Dataset::new(grid, 3, vec![1.0, 2.0, 3.0, -0.5, 0.25, 1e-300]).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let d = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let e = Dataset::read_csv(&path).unwrap();
        assert_eq!(d.values(), e.values());
        assert_eq!(d.grid().lat_lons(), e.grid().lat_lons());
    }

    #[test]
    fn column_selection() {
        let d = tiny();
        let e = d.select_columns(&[2, 0, 0]).unwrap();
        assert_eq!(e.row(0), &[3.0, 1.0, 1.0]);
        assert!(d.select_columns(&[3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let grid = Arc::new(SphereGrid::from_lat_lon(vec![(0.0, 0.0)]).unwrap());
        assert!(Dataset::new(grid, 2, vec![1.0, f64::NAN]).is_err());
    }
}

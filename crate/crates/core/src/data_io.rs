//! Loading externally prepared gridded series and turning them into anomalies.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{mean_std, Dataset, Timestamp};
use crate::error::{Error, Result};
use crate::sphere_grid::SphereGrid;

/// Share of missing entries above which a node is excluded.
pub const MAX_MISSING_FRACTION: f64 = 0.05;

/// Raw values; missing entries are NaN.
#[derive(Clone, Debug)]
pub struct RawGriddedSeries {
    pub grid: Arc<SphereGrid>,
    pub n: usize,
    pub values: Vec<f64>,
    pub timestamps: Option<Vec<Timestamp>>,
}

impl RawGriddedSeries {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn is_missing(&self, i: usize, t: usize) -> bool {
        self.values[i * self.n + t].is_nan()
    }
}

/// Reads a grid CSV, a data CSV `node_index,t0,...` and an optional
/// timestamp sidecar `index,year,month[,day]`.
pub fn load_gridded(
    grid_file: impl AsRef<Path>,
    data_file: impl AsRef<Path>,
    timestamps_file: Option<&Path>,
) -> Result<RawGriddedSeries> {
    let grid = Arc::new(SphereGrid::read_csv(grid_file)?);
    let path = data_file.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::format(format!("{}: empty data file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"node_index") {
        return Err(Error::format(format!(
            "{}: header must start with node_index",
            path.display()
        )));
    }
    let n = cols.len() - 1;
    let p = grid.len();
    let mut values = vec![f64::NAN; p * n];
    let mut seen = vec![false; p];
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: String| Error::format(format!("{}: row {}: {what}", path.display(), k + 2));
        if fields.len() != n + 1 {
            return Err(bad(format!("expected {} fields, found {}", n + 1, fields.len())));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad node index {}", fields[0])))?;
        if idx >= p {
            return Err(bad(format!("node index {idx} exceeds grid size {p}")));
        }
        if seen[idx] {
            return Err(bad(format!("duplicate node index {idx}")));
        }
        seen[idx] = true;
        for (t, f) in fields[1..].iter().enumerate() {
            values[idx * n + t] = parse_value(f).ok_or_else(|| bad(format!("bad value {f}")))?;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::format(format!(
            "{}: {} grid nodes but no row for node {missing}",
            path.display(),
            p
        )));
    }
    let timestamps = match timestamps_file {
        Some(tp) => {
            let ts = read_timestamps(tp)?;
            if ts.len() != n {
                return Err(Error::format(format!(
                    "{}: {} timestamps for {n} steps",
                    tp.display(),
                    ts.len()
                )));
            }
            Some(ts)
        }
        None => None,
    };
    Ok(RawGriddedSeries {
        grid,
        n,
        values,
        timestamps,
    })
}

fn parse_value(s: &str) -> Option<f64> {
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn read_timestamps(path: &Path) -> Result<Vec<Timestamp>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<Timestamp> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (k == 0 && line.starts_with("index")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::format(format!("{}: bad timestamp row {}: {line}", path.display(), k + 1));
        if f.len() != 3 && f.len() != 4 {
            return Err(bad());
        }
        let idx: usize = f[0].parse().map_err(|_| bad())?;
        if idx != out.len() {
            return Err(bad());
        }
        let year: i32 = f[1].parse().map_err(|_| bad())?;
        let month: u8 = f[2].parse().map_err(|_| bad())?;
        let day: Option<u8> = match f.get(3) {
            Some(d) if !d.is_empty() => Some(d.parse().map_err(|_| bad())?),
            _ => None,
        };
        if !(1..=12).contains(&month) || day.is_some_and(|d| !(1..=31).contains(&d)) {
            return Err(bad());
        }
        let ts = Timestamp { year, month, day };
        if let Some(prev) = out.last() {
            if ts <= *prev {
                return Err(Error::format(format!(
                    "{}: timestamps not strictly increasing at row {}",
                    path.display(),
                    k + 1
                )));
            }
        }
        out.push(ts);
    }
    Ok(out)
}

/// Writes the data CSV (and the timestamp sidecar when present).
pub fn save_gridded(raw: &RawGriddedSeries, data_file: &Path, timestamps_file: Option<&Path>) -> Result<()> {
    let mut out = String::from("node_index");
    for t in 0..raw.n {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for i in 0..raw.grid.len() {
        out.push_str(&i.to_string());
        for v in raw.row(i) {
            if v.is_nan() {
                out.push_str(",NaN");
            } else {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push('\n');
    }
    let mut f = fs::File::create(data_file).map_err(|e| Error::io(data_file, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(data_file, e))?;
    if let (Some(tp), Some(ts)) = (timestamps_file, &raw.timestamps) {
        let mut s = String::from("index,year,month,day\n");
        for (k, t) in ts.iter().enumerate() {
            match t.day {
                Some(d) => s.push_str(&format!("{k},{},{},{d}\n", t.year, t.month)),
                None => s.push_str(&format!("{k},{},{},\n", t.year, t.month)),
            }
        }
        fs::write(tp, s).map_err(|e| Error::io(tp, e))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    /// Nodes whose anomaly series is constant (zero-filled).
    pub constant_nodes: Vec<usize>,
    /// Nodes with too many missing values (zero-filled).
    pub missing_nodes: Vec<usize>,
}

enum NodeOutcome {
    Ok(Vec<f64>),
    Constant,
    Missing,
}

/// Removes the linear trend and the calendar-month climatology, then
/// standardizes each node to zero mean and unit population variance.
///
/// Trend and monthly means are fitted jointly by least squares, so the
/// operation is a projection and applying it twice changes nothing.
pub fn anomalies(raw: &RawGriddedSeries) -> Result<(Dataset, AnomalyReport)> {
    let n = raw.n;
    if n < 2 {
        return Err(Error::invalid("need at least two time steps"));
    }
    let months: Option<Vec<usize>> = raw
        .timestamps
        .as_ref()
        .map(|ts| ts.iter().map(|t| (t.month - 1) as usize).collect());
    if months.is_some() && n < 24 {
        return Err(Error::invalid(
            "calendar data needs at least 24 steps for a monthly climatology",
        ));
    }
    let groups = months.unwrap_or_else(|| vec![0; n]);
    let p = raw.grid.len();
    let outcomes: Vec<NodeOutcome> = (0..p)
        .into_par_iter()
        .map(|i| node_anomaly(raw.row(i), &groups))
        .collect();
    let mut values = Vec::with_capacity(p * n);
    let mut report = AnomalyReport::default();
    let mut flagged = vec![false; p];
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            NodeOutcome::Ok(v) => values.extend(v),
            NodeOutcome::Constant => {
                report.constant_nodes.push(i);
                flagged[i] = true;
                values.extend(std::iter::repeat_n(0.0, n));
            }
            NodeOutcome::Missing => {
                report.missing_nodes.push(i);
                flagged[i] = true;
                values.extend(std::iter::repeat_n(0.0, n));
            }
        }
    }
    let mut data = Dataset::new(raw.grid.clone(), n, values)?;
    data.flagged = flagged;
    data.timestamps = raw.timestamps.clone();
    Ok((data, report))
}

/// Anomalies of a dataset without calendar metadata (trend and mean only).
pub fn dataset_anomalies(data: &Dataset) -> Result<(Dataset, AnomalyReport)> {
    let raw = RawGriddedSeries {
        grid: data.grid().clone(),
        n: data.n(),
        values: data.values().to_vec(),
        timestamps: data.timestamps.clone(),
    };
    anomalies(&raw)
}

fn group_means(x: &[f64], groups: &[usize]) -> [f64; 12] {
    let mut sum = [0.0; 12];
    let mut count = [0usize; 12];
    for (v, &g) in x.iter().zip(groups) {
        if !v.is_nan() {
            sum[g] += v;
            count[g] += 1;
        }
    }
    let mut out = [f64::NAN; 12];
    for g in 0..12 {
        if count[g] > 0 {
            out[g] = sum[g] / count[g] as f64;
        }
    }
    out
}

fn node_anomaly(row: &[f64], groups: &[usize]) -> NodeOutcome {
    let n = row.len();
    let missing = row.iter().filter(|v| v.is_nan()).count();
    if missing as f64 > MAX_MISSING_FRACTION * n as f64 {
        return NodeOutcome::Missing;
    }
    let mut x = row.to_vec();
    if missing > 0 {
        let clim = group_means(row, groups);
        let overall = row.iter().filter(|v| !v.is_nan()).sum::<f64>() / (n - missing) as f64;
        for (v, &g) in x.iter_mut().zip(groups) {
            if v.is_nan() {
                *v = if clim[g].is_nan() { overall } else { clim[g] };
            }
        }
    }
    let scale_before = mean_std(&x).1;
    // residualize the series and the time index on the month indicators,
    // then remove the common slope
    let t: Vec<f64> = (0..n).map(|k| k as f64).collect();
    let t_means = group_means(&t, groups);
    let x_means = group_means(&x, groups);
    let t_res: Vec<f64> = t.iter().zip(groups).map(|(v, &g)| v - t_means[g]).collect();
    let mut x_res: Vec<f64> = x.iter().zip(groups).map(|(v, &g)| v - x_means[g]).collect();
    let stt: f64 = t_res.iter().map(|v| v * v).sum();
    if stt > 0.0 {
        let slope = t_res.iter().zip(&x_res).map(|(a, b)| a * b).sum::<f64>() / stt;
        for (v, tr) in x_res.iter_mut().zip(&t_res) {
            *v -= slope * tr;
        }
    }
    let (mean, sd) = mean_std(&x_res);
    if !(sd > 1e-9 * scale_before.max(1.0)) {
        return NodeOutcome::Constant;
    }
    NodeOutcome::Ok(x_res.iter().map(|v| (v - mean) / sd).collect())
}

//! Data maps: per-sample confidence and variability of the true-class
//! probability across epochs, kernel density surfaces, and a rule for
//! flagging subgroups the model learns abnormally badly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::DatasetTable;
use crate::resample::quantile_sorted;
use crate::trainer::EpochProbLog;
use crate::{Error, Result};

pub const GRID_SIZE: usize = 100;
pub const CONFIDENCE_RANGE: (f64, f64) = (0.0, 1.0);
pub const VARIABILITY_RANGE: (f64, f64) = (0.0, 0.5);
pub const MIN_BANDWIDTH: f64 = 1e-3;
pub const DEFAULT_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMapPoint {
    pub sample_id: String,
    /// Mean true-class probability.
    pub confidence: f64,
    /// Population standard deviation of the true-class probability.
    pub variability: f64,
    pub epochs: usize,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

/// One point per tracked sample.
pub fn datamap_stats(log: &EpochProbLog) -> Result<Vec<DataMapPoint>> {
    if log.is_empty() {
        return Err(Error::invalid("probability log tracks no samples"));
    }
    log.sample_ids
        .iter()
        .zip(&log.trajectories)
        .map(|(id, t)| {
            if t.is_empty() {
                return Err(Error::invalid(format!("sample {id:?} has no epochs")));
            }
            let e = t.len() as f64;
            let mean = t.iter().sum::<f64>() / e;
            let var = t.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / e;
            Ok(DataMapPoint {
                sample_id: id.clone(),
                confidence: mean,
                variability: var.sqrt(),
                epochs: t.len(),
                tags: BTreeMap::new(),
            })
        })
        .collect()
}

/// Copies tag values from the table onto the points.
pub fn attach_tags(points: &mut [DataMapPoint], table: &DatasetTable, tags: &[String]) -> Result<()> {
    let known = table.tag_names();
    if let Some(t) = tags.iter().find(|t| !known.contains(*t)) {
        return Err(Error::invalid(format!("unknown tag {t:?}")));
    }
    for p in points.iter_mut() {
        let row = table
            .position_of(&p.sample_id)
            .ok_or_else(|| Error::invalid(format!("sample {:?} is not in the table", p.sample_id)))?;
        for t in tags {
            if let Some(v) = table.tag_value(row, t) {
                p.tags.insert(t.clone(), v);
            }
        }
    }
    Ok(())
}

/// Partitions points by their value of `tag`.
pub fn subgroup_maps(points: &[DataMapPoint], tag: &str) -> Result<BTreeMap<String, Vec<DataMapPoint>>> {
    let mut out: BTreeMap<String, Vec<DataMapPoint>> = BTreeMap::new();
    for p in points {
        let v = p.tags.get(tag).ok_or_else(|| {
            Error::invalid(format!("sample {:?} has no value for tag {tag:?}", p.sample_id))
        })?;
        out.entry(v.clone()).or_default().push(p.clone());
    }
    Ok(out)
}

/// Gaussian KDE evaluated at the centres of a fixed
/// `GRID_SIZE × GRID_SIZE` grid over confidence × variability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub confidence: Vec<f64>,
    pub variability: Vec<f64>,
    /// `density[v * GRID_SIZE + c]`.
    pub density: Vec<f64>,
    /// (confidence, variability) bandwidths.
    pub bandwidth: (f64, f64),
    pub n_points: usize,
}

impl DensityGrid {
    pub fn cell_area(&self) -> f64 {
        let dc = (CONFIDENCE_RANGE.1 - CONFIDENCE_RANGE.0) / GRID_SIZE as f64;
        let dv = (VARIABILITY_RANGE.1 - VARIABILITY_RANGE.0) / GRID_SIZE as f64;
        dc * dv
    }

    pub fn at(&self, c: usize, v: usize) -> f64 {
        self.density[v * GRID_SIZE + c]
    }

    /// Riemann sum of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_area()
    }

    /// (confidence cell, variability cell) of the maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self
            .density
            .iter()
            .enumerate()
            .fold(0, |best, (k, &d)| if d > self.density[best] { k } else { best });
        (k % GRID_SIZE, k / GRID_SIZE)
    }

    /// KDE value at an arbitrary location.
    pub fn evaluate(points: &[DataMapPoint], bandwidth: (f64, f64), c: f64, v: f64) -> f64 {
        let (hc, hv) = bandwidth;
        let norm = 1.0 / (2.0 * PI * hc * hv * points.len() as f64);
        points
            .iter()
            .map(|p| {
                let a = (c - p.confidence) / hc;
                let b = (v - p.variability) / hv;
                (-0.5 * (a * a + b * b)).exp()
            })
            .sum::<f64>()
            * norm
    }
}

fn centres(range: (f64, f64)) -> Vec<f64> {
    let step = (range.1 - range.0) / GRID_SIZE as f64;
    (0..GRID_SIZE).map(|i| range.0 + (i as f64 + 0.5) * step).collect()
}

fn sample_std(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = x.clone().sum::<f64>() / n as f64;
    (x.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Scott's rule per axis, `n^(-1/6) σ`, floored at [`MIN_BANDWIDTH`].
pub fn scott_bandwidth(points: &[DataMapPoint]) -> (f64, f64) {
    let factor = (points.len() as f64).powf(-1.0 / 6.0);
    let sc = sample_std(points.iter().map(|p| p.confidence));
    let sv = sample_std(points.iter().map(|p| p.variability));
    ((factor * sc).max(MIN_BANDWIDTH), (factor * sv).max(MIN_BANDWIDTH))
}

pub fn density_grid(points: &[DataMapPoint]) -> Result<DensityGrid> {
    if points.is_empty() {
        return Err(Error::invalid("density grid needs at least one point"));
    }
    let bandwidth = scott_bandwidth(points);
    let confidence = centres(CONFIDENCE_RANGE);
    let variability = centres(VARIABILITY_RANGE);
    let density: Vec<f64> = variability
        .par_iter()
        .flat_map_iter(|&v| {
            confidence
                .iter()
                .map(move |&c| DensityGrid::evaluate(points, bandwidth, c, v))
        })
        .collect();
    Ok(DensityGrid {
        confidence,
        variability,
        density,
        bandwidth,
        n_points: points.len(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile_sorted(values, 0.5)
}

/// Subgroup values of `tag` whose median confidence falls below
/// `global median − threshold · global IQR`.
pub fn flag_outlier_subgroups(points: &[DataMapPoint], tag: &str, threshold: f64) -> Result<Vec<String>> {
    if threshold.is_nan() {
        return Err(Error::invalid("threshold is NaN"));
    }
    let groups = subgroup_maps(points, tag)?;
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "tag {tag:?} has {} value(s); at least 2 are needed",
            groups.len()
        )));
    }
    if threshold == f64::INFINITY {
        return Ok(Vec::new());
    }
    let mut all: Vec<f64> = points.iter().map(|p| p.confidence).collect();
    all.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&all, 0.75) - quantile_sorted(&all, 0.25);
    let cutoff = quantile_sorted(&all, 0.5) - threshold * iqr;
    Ok(groups
        .into_iter()
        .filter_map(|(value, members)| {
            let mut c: Vec<f64> = members.iter().map(|p| p.confidence).collect();
            (median(&mut c) < cutoff).then_some(value)
        })
        .collect())
}

/// `sample_id,confidence,variability,epochs,<tags...>`.
pub fn write_points_csv<W: Write>(points: &[DataMapPoint], writer: W) -> Result<()> {
    let tags: Vec<String> = {
        let mut t: Vec<String> = points.iter().flat_map(|p| p.tags.keys().cloned()).collect();
        t.sort();
        t.dedup();
        t
    };
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::invalid(format!("writing data map points: {e}"));
    let mut header = vec!["sample_id".to_string(), "confidence".into(), "variability".into(), "epochs".into()];
    header.extend(tags.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for p in points {
        let mut rec = vec![
            p.sample_id.clone(),
            format!("{}", p.confidence),
            format!("{}", p.variability),
            p.epochs.to_string(),
        ];
        rec.extend(tags.iter().map(|t| p.tags.get(t).cloned().unwrap_or_default()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("writing data map points: {e}")))
}

/// `subgroup,confidence,variability,density`, one row per grid cell.
pub fn write_grids_csv<W: Write>(grids: &[(String, DensityGrid)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::invalid(format!("writing density grids: {e}"));
    w.write_record(["subgroup", "confidence", "variability", "density"])
        .map_err(err)?;
    for (name, g) in grids {
        for (vi, v) in g.variability.iter().enumerate() {
            for (ci, c) in g.confidence.iter().enumerate() {
                w.write_record([
                    name.clone(),
                    format!("{c}"),
                    format!("{v}"),
                    format!("{:e}", g.at(ci, vi)),
                ])
                .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::invalid(format!("writing density grids: {e}")))
}

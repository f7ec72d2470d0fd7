//! Report writers. JSON for machines, CSV for spreadsheets, SVG for
//! figures. Every report carries a [`RunManifest`]; CSV files carry it as a
//! leading `# manifest: {...}` comment line.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamap::{DataMapPoint, DensityGrid, GRID_SIZE};
use crate::divmetrics::{Direction, ScenarioMetrics};
use crate::stats::{MetricRow, RankingMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility envelope of one CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub tool_version: String,
    /// Absent under `--reproducible`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Self {
        let canonical = serde_json::to_vec(config).expect("config serializes");
        Self {
            command: command.to_string(),
            config_hash: sha256_hex(&canonical),
            seed,
            inputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: None,
        }
    }

    /// Records the digest of a file's bytes. Directories contribute every
    /// regular file they contain, in name order.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.add_input(&p)?;
            }
            return Ok(());
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(&mut self, started: Instant, reproducible: bool) {
        self.wall_time_secs = (!reproducible).then(|| started.elapsed().as_secs_f64());
    }

    pub fn csv_comment(&self) -> String {
        format!(
            "# manifest: {}\n",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub manifest: RunManifest,
    pub scenarios: Vec<ScenarioMetrics>,
}

impl MetricsReport {
    pub fn scenario_names(&self) -> Vec<String> {
        self.scenarios.iter().map(|s| s.scenario.clone()).collect()
    }

    /// One row per metric, in first-seen order across scenarios.
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows: Vec<MetricRow> = Vec::new();
        for (k, s) in self.scenarios.iter().enumerate() {
            for m in &s.metrics {
                let row = match rows.iter_mut().position(|r| r.name == m.name) {
                    Some(i) => &mut rows[i],
                    None => {
                        rows.push(MetricRow {
                            name: m.name.clone(),
                            direction: m.direction,
                            values: vec![None; self.scenarios.len()],
                        });
                        rows.last_mut().expect("just pushed")
                    }
                };
                row.values[k] = m.value.as_ref().map(|v| v.value);
            }
        }
        rows
    }

    /// Scenarios as rows, one column per metric headed `name ↑|↓`, plus
    /// `lo`/`hi` columns for metrics with a bootstrap interval.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let rows = self.metric_rows();
        let with_ci: Vec<bool> = rows
            .iter()
            .map(|r| {
                self.scenarios
                    .iter()
                    .any(|s| s.metrics.iter().any(|m| m.name == r.name && m.ci.is_some()))
            })
            .collect();
        let mut out = self.manifest.csv_comment();
        let mut header = vec!["scenario".to_string(), "n".to_string()];
        for (r, &ci) in rows.iter().zip(&with_ci) {
            header.push(format!("{} {}", r.name, r.direction.arrow()));
            if ci {
                header.push(format!("{} lo", r.name));
                header.push(format!("{} hi", r.name));
            }
        }
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(&header).map_err(csv_err)?;
        for s in &self.scenarios {
            let mut rec = vec![s.scenario.clone(), s.n.to_string()];
            for (r, &ci) in rows.iter().zip(&with_ci) {
                let m = s.metrics.iter().find(|m| m.name == r.name);
                rec.push(
                    m.and_then(|m| m.value.as_ref())
                        .map(|v| format!("{}", v.value))
                        .unwrap_or_default(),
                );
                if ci {
                    let c = m.and_then(|m| m.ci.as_ref());
                    rec.push(c.map(|c| format!("{}", c.lo)).unwrap_or_default());
                    rec.push(c.map(|c| format!("{}", c.hi)).unwrap_or_default());
                }
            }
            csv.write_record(&rec).map_err(csv_err)?;
        }
        out.push_str(&String::from_utf8(csv.into_inner().map_err(|e| csv_err(e.into_error().into()))?).expect("csv is utf-8"));
        w.write_all(out.as_bytes()).map_err(|e| Error::invalid(format!("writing report: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub manifest: RunManifest,
    pub ranking: RankingMatrix,
}

impl RankingReport {
    /// `metric,<scenario...>` with 1 = best.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let r = &self.ranking;
        let mut csv = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(r.scenarios.iter().cloned());
        csv.write_record(&header).map_err(csv_err)?;
        for (m, ranks) in r.metrics.iter().zip(&r.ranks) {
            let mut rec = vec![m.clone()];
            rec.extend(ranks.iter().map(|v| format!("{v}")));
            csv.write_record(&rec).map_err(csv_err)?;
        }
        let body = csv.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        w.write_all(self.manifest.csv_comment().as_bytes())
            .and_then(|_| w.write_all(&body))
            .map_err(|e| Error::invalid(format!("writing ranking: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub manifest: RunManifest,
    pub metrics: Vec<String>,
    /// Spearman correlation; `None` where a ranking is constant.
    pub matrix: Vec<Vec<Option<f64>>>,
}

impl CorrelationReport {
    /// Square CSV; undefined entries are empty cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.metrics.iter().cloned());
        csv.write_record(&header).map_err(csv_err)?;
        for (m, row) in self.metrics.iter().zip(&self.matrix) {
            let mut rec = vec![m.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| format!("{x}")).unwrap_or_default()));
            csv.write_record(&rec).map_err(csv_err)?;
        }
        let body = csv.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        w.write_all(self.manifest.csv_comment().as_bytes())
            .and_then(|_| w.write_all(&body))
            .map_err(|e| Error::invalid(format!("writing correlation: {e}")))
    }

    pub fn to_svg(&self, reproducible: bool) -> String {
        correlation_svg(&self.metrics, &self.matrix, reproducible)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open(width: f64, height: f64, reproducible: bool) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    if !reproducible {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let _ = writeln!(s, "<!-- generated: {now} -->");
    }
    s
}

/// Diverging red–white–blue for values in [-1, 1].
fn diverging(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0 * (1.0 - t) + 178.0 * t, 255.0 * (1.0 - t) + 24.0 * t, 255.0 * (1.0 - t) + 43.0 * t)
    } else {
        let t = -t;
        (255.0 * (1.0 - t) + 33.0 * t, 255.0 * (1.0 - t) + 102.0 * t, 255.0 * (1.0 - t) + 172.0 * t)
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

pub fn correlation_svg(metrics: &[String], matrix: &[Vec<Option<f64>>], reproducible: bool) -> String {
    let cell = 44.0;
    let margin = 110.0;
    let side = margin + cell * metrics.len() as f64 + 10.0;
    let mut s = svg_open(side, side, reproducible);
    for (i, name) in metrics.iter().enumerate() {
        let pos = margin + cell * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{pos}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>",
            margin - 6.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            "<text x=\"{pos}\" y=\"{}\" text-anchor=\"start\" transform=\"rotate(-45 {pos} {})\">{}</text>",
            margin - 6.0,
            margin - 6.0,
            escape(name)
        );
    }
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (margin + cell * j as f64, margin + cell * i as f64);
            let fill = v.map_or_else(|| "rgb(220,220,220)".to_string(), diverging);
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"white\"/>"
            );
            let label = v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" dominant-baseline=\"middle\">{label}</text>",
                x + cell / 2.0,
                y + cell / 2.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One panel per subgroup: density as shaded cells with the points on top.
/// Axes are confidence (vertical) against variability (horizontal).
pub fn datamap_svg(panels: &[(String, Vec<DataMapPoint>, DensityGrid)], reproducible: bool) -> String {
    let (pw, ph, gap, pad) = (240.0, 300.0, 30.0, 40.0);
    let width = pad + panels.len() as f64 * (pw + gap);
    let height = ph + 2.0 * pad;
    let mut s = svg_open(width, height, reproducible);
    for (k, (name, points, grid)) in panels.iter().enumerate() {
        let x0 = pad + k as f64 * (pw + gap);
        let y0 = pad;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x0 + pw / 2.0,
            y0 - 12.0,
            escape(name)
        );
        let max = grid.density.iter().copied().fold(0.0, f64::max);
        let (cw, chh) = (pw / GRID_SIZE as f64, ph / GRID_SIZE as f64);
        if max > 0.0 {
            for v in 0..GRID_SIZE {
                for c in 0..GRID_SIZE {
                    let d = grid.at(c, v) / max;
                    if d < 0.02 {
                        continue;
                    }
                    let _ = writeln!(
                        s,
                        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{chh:.2}\" fill=\"rgb(33,102,172)\" fill-opacity=\"{:.3}\"/>",
                        x0 + v as f64 * cw,
                        y0 + ph - (c + 1) as f64 * chh,
                        d
                    );
                }
            }
        }
        for p in points {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"rgb(178,24,43)\"/>",
                x0 + p.variability / 0.5 * pw,
                y0 + ph - p.confidence * ph
            );
        }
        let _ = writeln!(
            s,
            "<rect x=\"{x0}\" y=\"{y0}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">variability</text>",
            x0 + pw / 2.0,
            y0 + ph + 16.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">confidence</text>",
            x0 - 8.0,
            y0 + ph / 2.0,
            x0 - 8.0,
            y0 + ph / 2.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Human-readable summary of a metrics report.
pub fn summary_markdown(report: &MetricsReport, ranking: Option<&RankingMatrix>) -> String {
    let rows = report.metric_rows();
    let mut s = String::from("| scenario | n |");
    for r in &rows {
        let _ = write!(s, " {} {} |", r.name, r.direction.arrow());
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(rows.len()));
    s.push('\n');
    for (k, sc) in report.scenarios.iter().enumerate() {
        let _ = write!(s, "| {} | {} |", sc.scenario, sc.n);
        for r in &rows {
            match r.values[k] {
                Some(v) => {
                    let _ = write!(s, " {v:.4} |");
                }
                None => s.push_str(" – |"),
            }
        }
        s.push('\n');
    }
    if let Some(rk) = ranking {
        s.push_str("\nMean rank per scenario (1 = most diverse):\n\n");
        for (k, name) in rk.scenarios.iter().enumerate() {
            let n = rk.ranks.len().max(1) as f64;
            let mean = rk.ranks.iter().map(|r| r[k]).sum::<f64>() / n;
            let _ = writeln!(s, "- {name}: {mean:.2}");
        }
        if !rk.dropped.is_empty() {
            let _ = writeln!(s, "\nNot ranked (absent for some scenario): {}", rk.dropped.join(", "));
        }
    }
    s
}

pub fn direction_label(d: Direction) -> &'static str {
    match d {
        Direction::HigherBetter => "higher is more diverse",
        Direction::LowerBetter => "lower is more diverse",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divmetrics::{MetricResult, MetricValue};

    fn report() -> MetricsReport {
        let mv = |name: &str, v: f64, d| MetricResult {
            name: name.into(),
            direction: d,
            value: Some(MetricValue {
                name: name.into(),
                value: v,
                direction: d,
                n_used: 4,
                repeats: 1,
            }),
            ci: None,
            absent: None,
        };
        let absent = MetricResult {
            name: "IS".into(),
            direction: Direction::HigherBetter,
            value: None,
            ci: None,
            absent: Some("no class-probability source".into()),
        };
        MetricsReport {
            manifest: RunManifest::new("metrics", &"cfg", 7),
            scenarios: vec![
                ScenarioMetrics {
                    scenario: "A".into(),
                    n: 4,
                    metrics: vec![mv("FID", 5.49, Direction::LowerBetter), absent.clone()],
                },
                ScenarioMetrics {
                    scenario: "B".into(),
                    n: 4,
                    metrics: vec![mv("FID", 12.26, Direction::LowerBetter), absent],
                },
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        report().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# manifest: {"));
        assert_eq!(lines[1], "scenario,n,FID ↓,IS ↑");
        assert_eq!(lines[2], "A,4,5.49,");
    }

    #[test]
    fn metric_rows_mark_absent() {
        let rows = report().metric_rows();
        assert_eq!(rows[0].values, vec![Some(5.49), Some(12.26)]);
        assert_eq!(rows[1].values, vec![None, None]);
    }

    #[test]
    fn manifest_is_stable() {
        let a = RunManifest::new("rank", &serde_json::json!({"k": 1}), 3);
        let b = RunManifest::new("rank", &serde_json::json!({"k": 1}), 3);
        assert_eq!(a, b);
        assert_ne!(a.config_hash, RunManifest::new("rank", &serde_json::json!({"k": 2}), 3).config_hash);
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }

    #[test]
    fn svg_timestamp_only_when_not_reproducible() {
        let m = vec!["a".to_string(), "b".to_string()];
        let c = vec![vec![Some(1.0), None], vec![None, Some(1.0)]];
        assert!(!correlation_svg(&m, &c, true).contains("generated"));
        assert!(correlation_svg(&m, &c, false).contains("generated"));
    }
}

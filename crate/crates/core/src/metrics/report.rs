use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DetPoint, DualDetPoint};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub far_target: f64,
    pub achieved_far: f64,
    pub frr: f64,
    /// `None` stands for an infinite threshold (nothing accepted).
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_right: Option<f64>,
}

fn finite(t: f64) -> Option<f64> {
    t.is_finite().then_some(t)
}

impl From<DetPoint<f64>> for ReportPoint {
    fn from(p: DetPoint<f64>) -> Self {
        ReportPoint {
            far_target: p.far_target,
            achieved_far: p.achieved_far,
            frr: p.frr,
            threshold: finite(p.threshold),
            threshold_right: None,
        }
    }
}

impl From<DualDetPoint<f64>> for ReportPoint {
    fn from(p: DualDetPoint<f64>) -> Self {
        ReportPoint {
            threshold_right: finite(p.threshold_right),
            ..p.point.into()
        }
    }
}

/// Result of one evaluated protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub protocol: String,
    pub eye_mode: String,
    pub task: String,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub points: Vec<ReportPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub results: Vec<ProtocolResult>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Concatenates reports and orders rows by (task, protocol, eye mode).
    pub fn merge(reports: impl IntoIterator<Item = Report>) -> Report {
        let mut results: Vec<ProtocolResult> =
            reports.into_iter().flat_map(|r| r.results).collect();
        results.sort_by(|a, b| {
            (&a.task, &a.protocol, &a.eye_mode).cmp(&(&b.task, &b.protocol, &b.eye_mode))
        });
        Report { results }
    }
}

fn far_label(far: f64) -> String {
    format!("{far:e}")
}

/// Plain-text table: one row per protocol and eye mode, FRR (%) per FAR
/// target, then rank-1 (%) where available.
pub fn render_table(report: &Report) -> String {
    let mut fars: Vec<f64> = report
        .results
        .iter()
        .flat_map(|r| r.points.iter().map(|p| p.far_target))
        .collect();
    fars.sort_by(|a, b| b.partial_cmp(a).unwrap());
    fars.dedup();
    let has_rank1 = report.results.iter().any(|r| r.rank1.is_some());

    let mut header = vec![
        "protocol".to_string(),
        "eye".to_string(),
        "task".to_string(),
    ];
    header.extend(fars.iter().map(|&f| format!("FRR@{}", far_label(f))));
    if has_rank1 {
        header.push("rank-1".into());
    }
    let mut rows = vec![header];
    for r in &report.results {
        let mut row = vec![r.protocol.clone(), r.eye_mode.clone(), r.task.clone()];
        for &f in &fars {
            row.push(match r.points.iter().find(|p| p.far_target == f) {
                Some(p) => format!("{:.2}", 100.0 * p.frr),
                None => "-".into(),
            });
        }
        if has_rank1 {
            row.push(r.rank1.map_or("-".into(), |a| format!("{:.2}", 100.0 * a)));
        }
        rows.push(row);
    }
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                if c < 3 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(
                out,
                "{}",
                "-".repeat(widths.iter().sum::<usize>() + 2 * (ncol - 1))
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result() -> ProtocolResult {
        ProtocolResult {
            protocol: "control".into(),
            eye_mode: "left".into(),
            task: "verification".into(),
            n_genuine: 10,
            n_impostor: 100_000,
            points: [1e-1, 1e-3, 1e-5]
                .iter()
                .map(|&f| ReportPoint {
                    far_target: f,
                    achieved_far: f / 3.0,
                    frr: 0.1 + f,
                    threshold: Some(0.123456789012345678),
                    threshold_right: None,
                })
                .collect(),
            rank1: None,
        }
    }

    #[test]
    fn table_has_three_far_columns() {
        let t = render_table(&Report {
            results: vec![result()],
        });
        let header = t.lines().next().unwrap();
        assert_eq!(header.matches("FRR@").count(), 3);
        assert!(header.contains("FRR@1e-1") && header.contains("FRR@1e-5"));
        assert_eq!(t.lines().count(), 3);
    }

    #[test]
    fn empty_report() {
        let r = Report::default();
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
        assert!(!render_table(&r).is_empty());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = result();
        r.points[0].threshold = None;
        r.rank1 = Some(2.0 / 3.0);
        let rep = Report { results: vec![r] };
        let back = Report::from_json(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
        for (a, b) in back.results[0].points.iter().zip(&rep.results[0].points) {
            assert_eq!(a.achieved_far.to_bits(), b.achieved_far.to_bits());
        }
    }
}

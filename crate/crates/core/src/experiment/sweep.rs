//! Frequency-threshold sweeps of the attach condition.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{Condition, ExperimentConfig};
use super::pipeline::run_experiment;
use crate::attach::Threshold;
use crate::error::write_string;
use crate::model::decode::escape;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub thresholds: Vec<Threshold>,
    pub base: ExperimentConfig,
}

/// Parse `0,5,10,inf`.
pub fn parse_thresholds(text: &str) -> Result<Vec<Threshold>> {
    text.split(',').map(|t| t.trim().parse()).collect()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::Config("a sweep needs at least one threshold".into()));
        }
        let mut seen = HashSet::new();
        for k in &self.thresholds {
            if !seen.insert(*k) {
                return Err(Error::Config(format!("threshold {k} listed twice")));
            }
        }
        self.config_for(self.thresholds[0]).validate()
    }

    /// The attach run for one threshold, in its own output directory.
    pub fn config_for(&self, k: Threshold) -> ExperimentConfig {
        let mut cfg = self.base.clone();
        cfg.condition = Condition::Attach;
        cfg.threshold = k;
        cfg.output_dir = self.base.output_dir.join(format!("k_{k}"));
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: Threshold,
    pub dev_bleu: Option<f64>,
    pub status: String,
}

/// Run every threshold in order. A failing run is reported as a `failed` row
/// and the sweep continues. Writes `sweep.csv` and `sweep.svg` to the base
/// output directory.
pub fn sweep_threshold(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.thresholds.len());
    for &k in &spec.thresholds {
        let row = match run_experiment(&spec.config_for(k)) {
            Ok(result) => SweepRow {
                k,
                dev_bleu: Some(result.dev_bleu.score),
                status: "ok".into(),
            },
            Err(e) => {
                log::error!("sweep run k={k} failed: {e}");
                SweepRow {
                    k,
                    dev_bleu: None,
                    status: "failed".into(),
                }
            }
        };
        rows.push(row);
    }
    write_string(&spec.base.output_dir.join("sweep.csv"), &sweep_csv(&rows))?;
    write_string(&spec.base.output_dir.join("sweep.svg"), &bar_chart_svg(&rows, "dev BLEU by frequency threshold k"))?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,dev_bleu,status\n");
    for r in rows {
        let bleu = r.dev_bleu.map(|b| format!("{b:.2}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.k, bleu, r.status);
    }
    out
}

/// Vertical bar chart with one bar per row, in row order.
pub fn bar_chart_svg(rows: &[SweepRow], title: &str) -> String {
    let (left, top, bar, gap, height) = (50.0, 40.0, 40.0, 20.0, 240.0);
    let width = left + rows.len() as f64 * (bar + gap) + gap;
    let max = rows.iter().filter_map(|r| r.dev_bleu).fold(0.0f64, f64::max).max(1.0);
    let ymax = (max / 5.0).ceil() * 5.0;
    let base = top + height;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" font-family="sans-serif" font-size="12">"#,
        base + 50.0
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, width - 5.0);
    for tick in 0..=5 {
        let v = ymax * tick as f64 / 5.0;
        let y = base - height * v / ymax;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.0}</text>"#, left - 5.0, y + 4.0);
    }
    for (i, r) in rows.iter().enumerate() {
        let x = left + gap + i as f64 * (bar + gap);
        match r.dev_bleu {
            Some(b) => {
                let h = height * b / ymax;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{}" width="{bar}" height="{h}" fill="#4c72b0"/>"##,
                    base - h
                );
                let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{b:.1}</text>"#, x + bar / 2.0, base - h - 4.0);
            }
            None => {
                let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">failed</text>"#, x + bar / 2.0, base - 4.0);
            }
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x + bar / 2.0, base + 16.0, r.k);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">k</text>"#, width / 2.0, base + 38.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_keeps_input_order_and_marks_failures() {
        let rows = vec![
            SweepRow {
                k: Threshold::Count(0),
                dev_bleu: Some(12.345),
                status: "ok".into(),
            },
            SweepRow {
                k: Threshold::Infinite,
                dev_bleu: None,
                status: "failed".into(),
            },
            SweepRow {
                k: Threshold::Count(5),
                dev_bleu: Some(20.0),
                status: "ok".into(),
            },
        ];
        assert_eq!(sweep_csv(&rows), "k,dev_bleu,status\n0,12.35,ok\ninf,,failed\n5,20.00,ok\n");
        let svg = bar_chart_svg(&rows, "t");
        assert_eq!(svg.matches("fill=\"#4c72b0\"").count(), 2);
        assert!(svg.contains(">failed<"));
    }

    #[test]
    fn thresholds_parse_and_must_be_distinct() {
        let ks = parse_thresholds("0, 5,inf").unwrap();
        assert_eq!(ks, [Threshold::Count(0), Threshold::Count(5), Threshold::Infinite]);
        let spec = SweepSpec {
            thresholds: vec![Threshold::Count(1), Threshold::Count(1)],
            base: ExperimentConfig::default(),
        };
        assert!(spec.validate().is_err());
    }
}

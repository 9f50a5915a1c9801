//! Aggregate tables over seeds, with gains and losses against the
//! original-mode baseline of the same setting and source.

use finesent_core::augment::AugmentMode;
use finesent_core::eval::{aggregate_runs, format_table, MACRO_F1_NOTE, TOKEN_F1_NOTE};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::experiment::{primary_metric, ExperimentSpec, RunRecord, RunStatus, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub setting: String,
    pub source: String,
    pub mode: AugmentMode,
    pub runs: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Mean minus the original-mode mean; absent for the baseline itself.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub spec_hash: String,
    pub task: Task,
    pub metric: String,
    pub note: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
}

pub fn build_report(spec: &ExperimentSpec, spec_hash: &str, records: &[RunRecord]) -> Result<Report, CliError> {
    let metric = primary_metric(spec.task);
    let mut groups: Vec<(String, String, AugmentMode, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = (r.cell.setting.label(), r.cell.source.label(), r.cell.mode);
        match groups.iter_mut().find(|g| (&g.0, &g.1, g.2) == (&key.0, &key.1, key.2)) {
            Some(g) => g.3.push(r),
            None => groups.push((key.0, key.1, key.2, vec![r])),
        }
    }
    let mut rows: Vec<ReportRow> = groups
        .iter()
        .map(|(setting, source, mode, rs)| {
            let values: Vec<f64> = rs
                .iter()
                .filter(|r| r.status == RunStatus::Ok)
                .filter_map(|r| r.metrics.get(metric).copied())
                .collect();
            let agg = aggregate_runs(&values).ok();
            ReportRow {
                setting: setting.clone(),
                source: source.clone(),
                mode: *mode,
                runs: rs.len(),
                failed: rs.iter().filter(|r| r.status == RunStatus::Failed).count(),
                mean: agg.map(|a| a.mean),
                std: agg.map(|a| a.std),
                delta: None,
            }
        })
        .collect();
    for i in 0..rows.len() {
        if rows[i].mode == AugmentMode::Original {
            continue;
        }
        let baseline = rows
            .iter()
            .find(|b| b.mode == AugmentMode::Original && b.setting == rows[i].setting && b.source == rows[i].source)
            .and_then(|b| b.mean);
        rows[i].delta = baseline.zip(rows[i].mean).map(|(b, m)| m - b);
    }
    let note = match spec.task {
        Task::Extract => TOKEN_F1_NOTE,
        Task::Classify => MACRO_F1_NOTE,
    };
    Ok(Report {
        experiment: spec.name.clone(),
        spec_hash: spec_hash.to_string(),
        task: spec.task,
        metric: metric.to_string(),
        note: note.to_string(),
        seeds: spec.seeds.clone(),
        rows,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    pub fn to_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = format!(
            "experiment: {} ({})\nmetric: {} x100, mean (std) over seeds {}\nnote: {}\n\n",
            self.experiment,
            &self.spec_hash[..12.min(self.spec_hash.len())],
            self.metric,
            seeds.join(", "),
            self.note
        );
        let header: Vec<String> = ["setting", "source", "mode", "score", "vs original", "runs"]
            .map(String::from)
            .to_vec();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let score = match (r.mean, r.std) {
                    (Some(m), Some(s)) => format!("{:.1} ({:.1})", m * 100.0, s * 100.0),
                    _ => "n/a".into(),
                };
                let vs = match (r.mode, r.delta) {
                    (AugmentMode::Original, _) => "baseline".into(),
                    (_, Some(d)) => format!("{:+.1}", d * 100.0),
                    (_, None) => "n/a".into(),
                };
                let runs = if r.failed > 0 {
                    format!("{} ({} failed)", r.runs, r.failed)
                } else {
                    r.runs.to_string()
                };
                vec![r.setting.clone(), r.source.clone(), r.mode.as_str().into(), score, vs, runs]
            })
            .collect();
        out.push_str(&format_table(&header, &rows));
        out
    }

    /// One row per (setting, source, mode), unscaled values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting,source,mode,runs,failed,mean,std,delta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&r.setting),
                csv_field(&r.source),
                r.mode.as_str(),
                r.runs,
                r.failed,
                opt(r.mean),
                opt(r.std),
                opt(r.delta)
            ));
        }
        out
    }
}

//! Run artifacts: metrics reports, epoch logs, and explanation exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use magnets_core::data::TimeSeriesDataset;
use magnets_core::model::Explanation;
use magnets_core::train::{EpochRecord, RunLog, Standardizer};
use magnets_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::formats::{FormatError, Result};

/// One evaluation of one model on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub model: String,
    pub lambda_spars: f64,
    pub lambda_ortho: f64,
    pub rmse_raw: f64,
    pub r2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expl_auc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expl_f1_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_evaluated: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_skipped: Option<usize>,
    pub seed: u64,
    pub wall_ms: f64,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| FormatError::Corrupt(format!("report: {e}")))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| FormatError::Corrupt(format!("report: {e}")))
    }
}

/// One JSON object per epoch, one line each.
pub fn write_runlog(log: &RunLog, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for rec in &log.records {
        serde_json::to_writer(&mut out, rec)
            .map_err(|e| FormatError::Corrupt(format!("runlog: {e}")))?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_runlog(path: &Path) -> Result<RunLog> {
    let text = fs::read_to_string(path)?;
    let mut records: Vec<EpochRecord> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(line).map_err(|e| FormatError::Corrupt(format!("runlog: {e}")))?,
        );
    }
    Ok(RunLog { records })
}

#[derive(Debug, Serialize)]
struct ConceptsJson<'a> {
    concepts: &'a [f64],
    head_weights: &'a [f64],
    head_bias: f64,
    contributions: &'a [f64],
    prediction: f64,
    prediction_raw: f64,
}

/// Write the full explanation of one sample: bottleneck weights, masks,
/// concept activations, and end-to-end feature weights — the data behind the
/// usual heatmap plots.
pub fn export_explanation(
    expl: &Explanation,
    beta: &Tensor,
    head_w: &[f64],
    head_bias: f64,
    scaler: &Standardizer,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let shape = expl.masks.shape();
    let (c, m, t) = (shape[0], shape[1], shape[2]);
    let k = head_w.len();

    let mut bottleneck = String::from("channel,mask,concept,beta\n");
    for ci in 0..c {
        for mi in 0..m {
            for ki in 0..k {
                bottleneck.push_str(&format!(
                    "{ci},{mi},{ki},{}\n",
                    beta.data()[(ci * m + mi) * k + ki]
                ));
            }
        }
    }
    fs::write(dir.join("bottleneck.csv"), bottleneck)?;

    let mut masks = String::from("channel,mask,time,mask_value,relaxed\n");
    for ci in 0..c {
        for mi in 0..m {
            for ti in 0..t {
                let idx = (ci * m + mi) * t + ti;
                masks.push_str(&format!(
                    "{ci},{mi},{ti},{},{}\n",
                    expl.masks.data()[idx],
                    expl.relaxed.data()[idx]
                ));
            }
        }
    }
    fs::write(dir.join("masks.csv"), masks)?;

    let mut weights = String::from("channel,mask,weight,aggregated\n");
    for ci in 0..c {
        for mi in 0..m {
            weights.push_str(&format!(
                "{ci},{mi},{},{}\n",
                expl.feature_weights.data()[ci * m + mi],
                expl.aggregated.data()[ci * m + mi]
            ));
        }
    }
    fs::write(dir.join("feature_weights.csv"), weights)?;

    let concepts = ConceptsJson {
        concepts: &expl.concepts,
        head_weights: head_w,
        head_bias,
        contributions: &expl.contributions,
        prediction: expl.prediction,
        prediction_raw: scaler.invert_y(expl.prediction),
    };
    let mut f = fs::File::create(dir.join("concepts.json"))?;
    serde_json::to_writer_pretty(&mut f, &concepts)
        .map_err(|e| FormatError::Corrupt(format!("concepts: {e}")))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Per-sample attribution export: raw and per-sample-normalized values.
pub fn export_attributions(
    rows: &[(usize, Tensor)],
    ds: &TimeSeriesDataset,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("sample,channel,time,attribution,attribution_normalized\n");
    for (sample, attr) in rows {
        let norm = magnets_core::metrics::normalize_attribution(attr.data())
            .map_err(FormatError::Model)?;
        for ci in 0..ds.c {
            for ti in 0..ds.t {
                let idx = ci * ds.t + ti;
                out.push_str(&format!(
                    "{sample},{ci},{ti},{},{}\n",
                    attr.data()[idx],
                    norm[idx]
                ));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runlog_roundtrip() {
        let log = RunLog {
            records: vec![EpochRecord {
                epoch: 0,
                lr: 1e-3,
                train_loss: 1.5,
                train_mse: 1.25,
                spars: 0.5,
                ortho: 3.0,
                test_rmse_raw: 2.0,
                test_r2: 0.5,
                wall_ms: 10.0,
            }],
        };
        let dir = std::env::temp_dir().join(format!("magnets-rep-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.jsonl");
        write_runlog(&log, &path).unwrap();
        let loaded = read_runlog(&path).unwrap();
        assert_eq!(loaded, log);
    }

    #[test]
    fn report_omits_absent_explanation_fields() {
        let r = MetricsReport {
            dataset: "univariate".into(),
            model: "mean".into(),
            lambda_spars: 0.0,
            lambda_ortho: 0.0,
            rmse_raw: 1.0,
            r2: 0.0,
            expl_auc_mean: None,
            expl_f1_mean: None,
            n_evaluated: None,
            n_skipped: None,
            seed: 7,
            wall_ms: 12.0,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("expl_auc_mean"));
        assert!(json.contains("rmse_raw"));
    }
}

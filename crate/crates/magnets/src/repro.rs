//! Desk-scale reproduction pipeline: train every model family on every
//! synthetic dataset across several seeds and tabulate the results next to
//! the published full-scale reference numbers.

use std::path::Path;
use std::time::Instant;

use magnets_core::data::DatasetKind;
use magnets_core::model::MagnetsModel;
use serde::{Deserialize, Serialize};

use crate::formats::{save_checkpoint, ModelCheckpoint, Result};
use crate::pipeline::{generate_pair, train_model, MagnetsSettings, ModelKind, RunSpec};
use crate::report::MetricsReport;

/// Full-scale reference results (RMSE, R²) per dataset, used only for the
/// side-by-side comparison table.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceRow {
    pub mean: (f64, f64),
    pub ols: (f64, f64),
    pub lasso: (f64, f64),
    pub ridge: (f64, f64),
    pub cnn: (f64, f64),
    pub magnets_l0: (f64, f64),
    pub magnets_l1: (f64, f64),
    /// Explanation quality (AUC, F1).
    pub ig: (f64, f64),
    pub magnets_l0_expl: (f64, f64),
    pub magnets_l1_expl: (f64, f64),
}

pub fn reference(kind: DatasetKind) -> ReferenceRow {
    match kind {
        DatasetKind::Univariate => ReferenceRow {
            mean: (1.003, 0.0000),
            ols: (0.6927, 0.5229),
            lasso: (0.6925, 0.5231),
            ridge: (0.6917, 0.5243),
            cnn: (0.0122, 0.9999),
            magnets_l0: (0.0273, 0.9993),
            magnets_l1: (0.0332, 0.9989),
            ig: (0.99, 0.69),
            magnets_l0_expl: (1.00, 1.00),
            magnets_l1_expl: (0.99, 0.93),
        },
        DatasetKind::Bivariate => ReferenceRow {
            mean: (0.9863, -0.0003),
            ols: (0.9014, 0.1645),
            lasso: (0.8991, 0.1689),
            ridge: (0.8988, 0.1694),
            cnn: (0.0373, 0.9986),
            magnets_l0: (0.0290, 0.9991),
            magnets_l1: (0.0309, 0.9990),
            ig: (0.98, 0.49),
            magnets_l0_expl: (1.00, 1.00),
            magnets_l1_expl: (1.00, 1.00),
        },
        DatasetKind::Trivariate1 => ReferenceRow {
            mean: (0.9961, 0.0000),
            ols: (0.5948, 0.6434),
            lasso: (0.5941, 0.6443),
            ridge: (0.5936, 0.6450),
            cnn: (0.0244, 0.9994),
            magnets_l0: (0.0265, 0.9993),
            magnets_l1: (0.0272, 0.9993),
            ig: (0.83, 0.36),
            magnets_l0_expl: (1.00, 1.00),
            magnets_l1_expl: (1.00, 1.00),
        },
        DatasetKind::Trivariate2 => ReferenceRow {
            mean: (0.9924, 0.0000),
            ols: (0.6290, 0.5983),
            lasso: (0.6280, 0.5996),
            ridge: (0.6267, 0.6012),
            cnn: (0.0562, 0.9968),
            magnets_l0: (0.0396, 0.9984),
            magnets_l1: (0.0455, 0.9979),
            ig: (0.66, 0.34),
            magnets_l0_expl: (0.98, 0.94),
            magnets_l1_expl: (0.99, 0.95),
        },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproConfig {
    pub seeds: Vec<u64>,
    pub scale: f64,
    pub epochs: usize,
    pub unet_widths: [usize; 3],
    pub ig_steps: usize,
    /// Also run the unregularized configuration on every dataset (it always
    /// runs on the univariate set, where the regularizer comparison lives).
    pub full_lambda0: bool,
    pub linear_lambda: f64,
}

impl Default for ReproConfig {
    fn default() -> Self {
        ReproConfig {
            seeds: vec![101, 202, 303],
            scale: 0.1,
            epochs: 50,
            unet_widths: [4, 8, 16],
            ig_steps: 50,
            full_lambda0: false,
            linear_lambda: 1.0,
        }
    }
}

/// Aggregates of the bottleneck weights of one trained model, for the
/// regularizer-effect comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BottleneckStats {
    pub dataset: String,
    pub lambda_spars: f64,
    pub lambda_ortho: f64,
    pub seed: u64,
    /// Fraction of |beta| entries below 1e-3.
    pub small_beta_fraction: f64,
    pub ortho_loss: f64,
    pub spars_loss: f64,
}

pub fn bottleneck_stats(model: &MagnetsModel, dataset: &str, seed: u64) -> BottleneckStats {
    let small = model.beta.iter().filter(|v| v.abs() < 1e-3).count();
    BottleneckStats {
        dataset: dataset.to_string(),
        lambda_spars: model.config.lambda_spars,
        lambda_ortho: model.config.lambda_ortho,
        seed,
        small_beta_fraction: small as f64 / model.beta.len() as f64,
        ortho_loss: model.orthogonality_loss(),
        spars_loss: model.sparsity_loss(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReproReport {
    pub rows: Vec<MetricsReport>,
    pub bottlenecks: Vec<BottleneckStats>,
    pub wall_s: f64,
}

impl ReproReport {
    /// Seed-mean of a metric over matching rows.
    pub fn mean<F: Fn(&MetricsReport) -> Option<f64>>(
        &self,
        dataset: &str,
        model: &str,
        lambda_spars: Option<f64>,
        metric: F,
    ) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| {
                r.dataset == dataset
                    && r.model == model
                    && lambda_spars.map(|l| r.lambda_spars == l).unwrap_or(true)
            })
            .filter_map(&metric)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

fn spec_for(
    model: ModelKind,
    dataset: DatasetKind,
    cfg: &ReproConfig,
    seed: u64,
    lambda: f64,
) -> RunSpec {
    let mut magnets = MagnetsSettings::default();
    magnets.unet_widths = cfg.unet_widths;
    magnets.lambda_spars = lambda;
    magnets.lambda_ortho = lambda;
    let mut train = magnets_core::train::TrainConfig::new(seed);
    train.epochs = cfg.epochs;
    RunSpec {
        model,
        dataset: dataset.name().to_string(),
        magnets,
        train,
        linear_lambda: cfg.linear_lambda,
        mask_pool: "weighted".to_string(),
        ig_steps: cfg.ig_steps,
    }
}

/// Run the desk-scale pipeline. `out` (when given) receives one checkpoint
/// and metrics file per run; `progress` is called once per completed run.
pub fn run_repro(
    cfg: &ReproConfig,
    out: Option<&Path>,
    mut progress: impl FnMut(&MetricsReport),
) -> Result<ReproReport> {
    let started = Instant::now();
    let mut report = ReproReport::default();
    for kind in DatasetKind::ALL {
        for &seed in &cfg.seeds {
            let (train_raw, test_raw) = generate_pair(kind, seed, cfg.scale, 128)?;

            // interpretable closed-form baselines
            for model in [ModelKind::Mean, ModelKind::Ols, ModelKind::Ridge, ModelKind::Lasso] {
                let spec = spec_for(model, kind, cfg, seed, 0.0);
                let outcome = train_model(&spec, &train_raw, &test_raw)?;
                progress(&outcome.report);
                save_outputs(&outcome.checkpoint, &outcome.report, out, kind, model.name(), seed, 0.0)?;
                report.rows.push(outcome.report);
            }

            // capacity-matched CNN with integrated-gradients attributions
            let spec = spec_for(ModelKind::Cnn, kind, cfg, seed, 0.0);
            let outcome = train_model(&spec, &train_raw, &test_raw)?;
            progress(&outcome.report);
            save_outputs(&outcome.checkpoint, &outcome.report, out, kind, "cnn", seed, 0.0)?;
            report.rows.push(outcome.report);

            // mask-and-aggregate, regularized configuration
            let spec = spec_for(ModelKind::Magnets, kind, cfg, seed, 1.0);
            let outcome = train_model(&spec, &train_raw, &test_raw)?;
            if let ModelCheckpoint::Magnets { model, .. } = &outcome.checkpoint {
                report.bottlenecks.push(bottleneck_stats(model, kind.name(), seed));
            }
            progress(&outcome.report);
            save_outputs(&outcome.checkpoint, &outcome.report, out, kind, "magnets_l1", seed, 1.0)?;
            report.rows.push(outcome.report);

            // unregularized configuration: always on the univariate set (the
            // regularizer comparison lives there), everywhere with full_lambda0
            if cfg.full_lambda0 || kind == DatasetKind::Univariate {
                let spec = spec_for(ModelKind::Magnets, kind, cfg, seed, 0.0);
                let outcome = train_model(&spec, &train_raw, &test_raw)?;
                if let ModelCheckpoint::Magnets { model, .. } = &outcome.checkpoint {
                    report.bottlenecks.push(bottleneck_stats(model, kind.name(), seed));
                }
                progress(&outcome.report);
                save_outputs(&outcome.checkpoint, &outcome.report, out, kind, "magnets_l0", seed, 0.0)?;
                report.rows.push(outcome.report);
            }
        }
    }
    report.wall_s = started.elapsed().as_secs_f64();
    Ok(report)
}

fn save_outputs(
    checkpoint: &ModelCheckpoint,
    report: &MetricsReport,
    out: Option<&Path>,
    kind: DatasetKind,
    label: &str,
    seed: u64,
    _lambda: f64,
) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    let run_dir = dir.join(format!("{}_{label}_s{seed}", kind.name()));
    std::fs::create_dir_all(&run_dir)?;
    save_checkpoint(checkpoint, &run_dir.join("checkpoint.mgck"))?;
    report.save(&run_dir.join("metrics.json"))?;
    Ok(())
}

/// Render the comparison table: desk-scale seed means next to the full-scale
/// reference values.
pub fn comparison_table(report: &ReproReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<12} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8}\n",
        "dataset", "model", "rmse", "r2", "ref rmse", "ref r2", "auc/f1", "ref"
    ));
    for kind in DatasetKind::ALL {
        let rf = reference(kind);
        let rows: [(&str, Option<f64>, (f64, f64), Option<(f64, f64)>); 7] = [
            ("mean", None, rf.mean, None),
            ("ols", None, rf.ols, None),
            ("lasso", None, rf.lasso, None),
            ("ridge", None, rf.ridge, None),
            ("cnn", None, rf.cnn, Some(rf.ig)),
            ("magnets", Some(0.0), rf.magnets_l0, Some(rf.magnets_l0_expl)),
            ("magnets", Some(1.0), rf.magnets_l1, Some(rf.magnets_l1_expl)),
        ];
        for (model, lambda, (ref_rmse, ref_r2), ref_expl) in rows {
            let rmse = report.mean(kind.name(), model, lambda, |r| Some(r.rmse_raw));
            let r2 = report.mean(kind.name(), model, lambda, |r| Some(r.r2));
            if rmse.is_none() {
                continue;
            }
            let label = match lambda {
                Some(l) if l > 0.0 => format!("{model} l=1"),
                Some(_) => format!("{model} l=0"),
                None => model.to_string(),
            };
            let auc = report.mean(kind.name(), model, lambda, |r| r.expl_auc_mean);
            let f1 = report.mean(kind.name(), model, lambda, |r| r.expl_f1_mean);
            let expl = match (auc, f1) {
                (Some(a), Some(f)) => format!("{a:.2}/{f:.2}"),
                _ => "-".to_string(),
            };
            let ref_expl = match ref_expl {
                Some((a, f)) => format!("{a:.2}/{f:.2}"),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{:<12} {:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8} {:>8}\n",
                kind.name(),
                label,
                rmse.unwrap(),
                r2.unwrap(),
                ref_rmse,
                ref_r2,
                expl,
                ref_expl
            ));
        }
    }
    out
}

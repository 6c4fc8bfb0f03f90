//! End-to-end drivers shared by the CLI and the reproduction suite:
//! dataset generation, model training, evaluation, and explanation export.

use std::path::Path;
use std::time::Instant;

use magnets_core::baselines::{self, CnnModel};
use magnets_core::data::{generate, DatasetKind, GeneratorConfig, Split, TimeSeriesDataset};
use magnets_core::metrics::{
    self, evaluate_cnn_ig_explanations, evaluate_magnets_explanations, MaskPooling,
};
use magnets_core::model::{MagnetsConfig, MagnetsModel, NoiseKind};
use magnets_core::train::{self, RunLog, Standardizer, TrainConfig, TrainableModel};
use magnets_core::Rng;
use serde::{Deserialize, Serialize};

use crate::formats::{FormatError, ModelCheckpoint, Result};
use crate::report::MetricsReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Magnets,
    Cnn,
    Mean,
    Ols,
    Ridge,
    Lasso,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "magnets" => Some(ModelKind::Magnets),
            "cnn" => Some(ModelKind::Cnn),
            "mean" => Some(ModelKind::Mean),
            "ols" => Some(ModelKind::Ols),
            "ridge" => Some(ModelKind::Ridge),
            "lasso" => Some(ModelKind::Lasso),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Magnets => "magnets",
            ModelKind::Cnn => "cnn",
            ModelKind::Mean => "mean",
            ModelKind::Ols => "ols",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
        }
    }
}

/// Resolved configuration of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: ModelKind,
    pub dataset: String,
    pub magnets: MagnetsSettings,
    pub train: TrainConfig,
    /// Penalty weight for ridge and lasso.
    pub linear_lambda: f64,
    pub mask_pool: String,
    pub ig_steps: usize,
}

/// The tunable part of the model configuration (channels and length come
/// from the dataset).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagnetsSettings {
    pub masks_per_channel: usize,
    pub concepts: usize,
    pub temperature: f64,
    pub lambda_spars: f64,
    pub lambda_ortho: f64,
    pub noise: NoiseKind,
    pub unet_widths: [usize; 3],
}

impl Default for MagnetsSettings {
    fn default() -> Self {
        let cfg = MagnetsConfig::new(1, 128);
        MagnetsSettings {
            masks_per_channel: cfg.masks_per_channel,
            concepts: cfg.concepts,
            temperature: cfg.temperature,
            lambda_spars: cfg.lambda_spars,
            lambda_ortho: cfg.lambda_ortho,
            noise: cfg.noise,
            unet_widths: cfg.unet_widths,
        }
    }
}

impl MagnetsSettings {
    pub fn to_config(&self, channels: usize, length: usize) -> MagnetsConfig {
        let mut cfg = MagnetsConfig::new(channels, length);
        cfg.masks_per_channel = self.masks_per_channel;
        cfg.concepts = self.concepts;
        cfg.temperature = self.temperature;
        cfg.lambda_spars = self.lambda_spars;
        cfg.lambda_ortho = self.lambda_ortho;
        cfg.noise = self.noise;
        cfg.unet_widths = self.unet_widths;
        cfg
    }
}

pub fn mask_pooling(name: &str) -> Option<MaskPooling> {
    match name {
        "weighted" => Some(MaskPooling::Weighted),
        "union" => Some(MaskPooling::Union),
        _ => None,
    }
}

/// Generate the train/test pair of a synthetic dataset in memory.
pub fn generate_pair(
    kind: DatasetKind,
    seed: u64,
    scale: f64,
    t: usize,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let mut cfg = GeneratorConfig::new(seed).scaled(scale);
    cfg.t = t;
    cfg.width_range = (t as f64 / 32.0, t as f64 / 8.0);
    let train = generate(kind, &cfg, Split::Train)?;
    let test = generate(kind, &cfg, Split::Test)?;
    Ok((train, test))
}

pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub runlog: RunLog,
    pub report: MetricsReport,
}

/// Train one model per the shared protocol and evaluate it on the test split.
pub fn train_model(
    spec: &RunSpec,
    train_raw: &TimeSeriesDataset,
    test_raw: &TimeSeriesDataset,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let checkpoint = match spec.model {
        ModelKind::Magnets => {
            let scaler = Standardizer::fit(train_raw)?;
            let train_std = scaler.transform(train_raw);
            let test_std = scaler.transform(test_raw);
            let cfg = spec.magnets.to_config(train_raw.c, train_raw.t);
            let mut rng = Rng::substream(spec.train.seed, 0x6d61_676e);
            let mut model = MagnetsModel::init(cfg, &mut rng)?;
            let runlog = run_epochs(&mut model, &train_std, &test_std, test_raw, &scaler, &spec.train)?;
            let checkpoint = ModelCheckpoint::Magnets { model, scaler };
            let report = evaluate(&checkpoint, test_raw, spec, started.elapsed().as_secs_f64() * 1e3)?;
            return Ok(TrainOutcome { checkpoint, runlog, report });
        }
        ModelKind::Cnn => {
            let scaler = Standardizer::fit(train_raw)?;
            let train_std = scaler.transform(train_raw);
            let test_std = scaler.transform(test_raw);
            let widths = spec.magnets.unet_widths;
            let mut rng = Rng::substream(spec.train.seed, 0x636e_6e00);
            let mut model = CnnModel::init(train_raw.c, train_raw.t, widths, &mut rng);
            let runlog = run_epochs(&mut model, &train_std, &test_std, test_raw, &scaler, &spec.train)?;
            let checkpoint = ModelCheckpoint::Cnn { model, scaler };
            let report = evaluate(&checkpoint, test_raw, spec, started.elapsed().as_secs_f64() * 1e3)?;
            return Ok(TrainOutcome { checkpoint, runlog, report });
        }
        ModelKind::Mean => ModelCheckpoint::Mean { model: baselines::MeanModel::fit(&train_raw.y)? },
        ModelKind::Ols => ModelCheckpoint::Linear { model: baselines::fit_ols(train_raw)? },
        ModelKind::Ridge => ModelCheckpoint::Linear {
            model: baselines::fit_ridge(train_raw, spec.linear_lambda)?,
        },
        ModelKind::Lasso => ModelCheckpoint::Linear {
            model: baselines::fit_lasso(train_raw, spec.linear_lambda)?,
        },
    };
    let report = evaluate(&checkpoint, test_raw, spec, started.elapsed().as_secs_f64() * 1e3)?;
    Ok(TrainOutcome { checkpoint, runlog: RunLog::default(), report })
}

fn run_epochs<M: TrainableModel>(
    model: &mut M,
    train_std: &TimeSeriesDataset,
    test_std: &TimeSeriesDataset,
    test_raw: &TimeSeriesDataset,
    scaler: &Standardizer,
    cfg: &TrainConfig,
) -> Result<RunLog> {
    let mut last = Instant::now();
    let log = train::train(model, train_std, test_std, &test_raw.y, scaler, cfg, |rec| {
        rec.wall_ms = last.elapsed().as_secs_f64() * 1e3;
        last = Instant::now();
    })?;
    Ok(log)
}

/// Regression metrics plus, when ground-truth masks are available and the
/// model can explain itself, explanation quality.
pub fn evaluate(
    checkpoint: &ModelCheckpoint,
    test_raw: &TimeSeriesDataset,
    spec: &RunSpec,
    wall_ms: f64,
) -> Result<MetricsReport> {
    let pooling = mask_pooling(&spec.mask_pool)
        .ok_or_else(|| FormatError::Corrupt(format!("unknown mask pooling {}", spec.mask_pool)))?;
    let pred_raw: Vec<f64> = match checkpoint {
        ModelCheckpoint::Magnets { model, scaler } => {
            let test_std = scaler.transform(test_raw);
            train::predict_raw(model, &test_std, scaler)?
        }
        ModelCheckpoint::Cnn { model, scaler } => {
            let test_std = scaler.transform(test_raw);
            train::predict_raw(model, &test_std, scaler)?
        }
        ModelCheckpoint::Mean { model } => model.predict(test_raw.n),
        ModelCheckpoint::Linear { model } => model.predict(test_raw),
    };
    let rmse_raw = metrics::rmse(&test_raw.y, &pred_raw)?;
    let r2 = metrics::r2(&test_raw.y, &pred_raw)?;

    let expl = if test_raw.gt_mask.is_some() {
        match checkpoint {
            ModelCheckpoint::Magnets { model, scaler } => {
                Some(evaluate_magnets_explanations(model, scaler, test_raw, pooling)?)
            }
            ModelCheckpoint::Cnn { model, scaler } => {
                Some(evaluate_cnn_ig_explanations(model, scaler, test_raw, spec.ig_steps)?)
            }
            _ => None,
        }
    } else {
        None
    };

    let (lambda_spars, lambda_ortho) = match checkpoint {
        ModelCheckpoint::Magnets { model, .. } => {
            (model.config.lambda_spars, model.config.lambda_ortho)
        }
        _ => (0.0, 0.0),
    };
    Ok(MetricsReport {
        dataset: test_raw.name.clone(),
        model: checkpoint.kind().to_string(),
        lambda_spars,
        lambda_ortho,
        rmse_raw,
        r2,
        expl_auc_mean: expl.as_ref().and_then(|e| e.auc_mean),
        expl_f1_mean: expl.as_ref().and_then(|e| e.f1_mean),
        n_evaluated: expl.as_ref().map(|e| e.n_evaluated),
        n_skipped: expl.as_ref().map(|e| e.n_skipped),
        seed: spec.train.seed,
        wall_ms,
    })
}

/// Read the `<stem>_train.mgts` / `<stem>_test.mgts` pair.
pub fn read_pair(stem: &Path) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let stem_str = stem.to_string_lossy();
    let train = crate::formats::read_dataset(Path::new(&format!("{stem_str}_train.mgts")))?;
    let test = crate::formats::read_dataset(Path::new(&format!("{stem_str}_test.mgts")))?;
    Ok((train, test))
}

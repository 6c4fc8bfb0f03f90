use std::time::Instant;

use magnets_core::data::{generate, DatasetKind, GeneratorConfig, Split};
use magnets_core::metrics::{evaluate_magnets_explanations, MaskPooling};
use magnets_core::model::{MagnetsConfig, MagnetsModel};
use magnets_core::train::{train, Standardizer, TrainConfig};
use magnets_core::Rng;

fn run_variant(kind: DatasetKind, widths: [usize; 3], init_scale: f64, tau: f64,
               lspars: f64, lortho: f64, seed: u64) {
    let gen = GeneratorConfig::new(1).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);

    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = widths;
    mcfg.lambda_spars = lspars;
    mcfg.lambda_ortho = lortho;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    // rescale bottleneck/head init
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 {
            for v in p.data_mut() { *v *= init_scale / 0.01; }
        }
    }

    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "{:12} w{:?} init{:.2} tau{:.1} l({},{}) seed{seed}: r2 {:.4} rmse {:.3} spars {:.4} ortho {:.3} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), widths, init_scale, tau, lspars, lortho,
        r.test_r2, r.test_rmse_raw, r.spars, r.ortho,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn variant_a() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn variant_b() {
    run_variant(DatasetKind::Univariate, [6, 12, 24], 0.1, 1.0, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn variant_c() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 0.5, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn variant_d() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 0.25, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn variant_e() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 0.0, 0.0, 100);
}

#[test]
#[ignore]
fn cnn_univariate() {
    use magnets_core::baselines::CnnModel;
    let kind = DatasetKind::Univariate;
    let gen = GeneratorConfig::new(1).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut rng = Rng::substream(100, 1);
    let mut model = CnnModel::init(kind.channels(), gen.t, [4, 8, 16], &mut rng);
    let mut tcfg = TrainConfig::new(100);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let r = log.records.last().unwrap();
    println!("cnn univariate: r2 {:.4} rmse {:.3} | {:.0}s", r.test_r2, r.test_rmse_raw, t0.elapsed().as_secs_f64());
}

fn diagnose(kind: DatasetKind, widths: [usize; 3], init_scale: f64, tau: f64,
            lspars: f64, lortho: f64, seed: u64) {
    use magnets_core::metrics::{explanation_f1, pool_channels_u8};
    let gen = GeneratorConfig::new(1).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);

    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = widths;
    mcfg.lambda_spars = lspars;
    mcfg.lambda_ortho = lortho;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 {
            for v in p.data_mut() { *v *= init_scale / 0.01; }
        }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let r = log.records.last().unwrap();
    println!("r2 {:.4} spars {:.4}", r.test_r2, r.spars);

    // weight ratios
    let fw = model.feature_weights();
    let mut w: Vec<f64> = fw.iter().map(|v| v.abs()).collect();
    let maxw = w.iter().cloned().fold(0.0, f64::max);
    for v in w.iter_mut() { *v /= maxw; }
    println!("weight ratios: {:?}", w.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());

    // per-mask F1 against pooled gt over 200 samples
    let (c, t, m) = (test_raw.c, test_raw.t, model.config.masks_per_channel);
    for mi in 0..m {
        let mut f1s = 0.0;
        let mut n = 0;
        for i in 0..200 {
            let gt = pool_channels_u8(test_raw.sample_gt(i).unwrap(), c, t);
            if gt.iter().all(|g| *g == 0) { continue; }
            let xs = scaler.transform_sample(test_raw.sample_x(i), c, t);
            let x = magnets_core::Tensor::new(&[c, t], xs).unwrap();
            let e = model.explain(&x).unwrap();
            // pool this mask index across channels
            let mut s = vec![0.0f64; t];
            for ch in 0..c {
                for ti in 0..t {
                    s[ti] = s[ti].max(e.masks.data()[(ch * m + mi) * t + ti]);
                }
            }
            f1s += explanation_f1(&s, &gt, 0.5);
            n += 1;
        }
        println!("mask {mi}: wratio {:.2} f1 {:.3}", w[mi.min(w.len()-1)], f1s / n as f64);
    }
}

#[test]
#[ignore]
fn diag_c() {
    diagnose(DatasetKind::Univariate, [4, 8, 16], 0.1, 0.5, 1.0, 1.0, 100);
}

fn run_variant_noise(kind: DatasetKind, widths: [usize; 3], init_scale: f64, tau: f64,
               lspars: f64, lortho: f64, seed: u64, noise: magnets_core::model::NoiseKind) {
    let gen = GeneratorConfig::new(1).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);

    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = widths;
    mcfg.lambda_spars = lspars;
    mcfg.lambda_ortho = lortho;
    mcfg.temperature = tau;
    mcfg.noise = noise;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 {
            for v in p.data_mut() { *v *= init_scale / 0.01; }
        }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "{:12} {:?} w{:?} init{:.2} tau{:.2} l({},{}) seed{seed}: r2 {:.4} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), noise, widths, init_scale, tau, lspars, lortho,
        r.test_r2, score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn t1_gumbel() {
    run_variant_noise(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 100, magnets_core::model::NoiseKind::Gumbel);
}

#[test]
#[ignore]
fn t2_tau075() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 0.75, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn t3_seed101() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 101);
}

#[test]
#[ignore]
fn t4_tau2() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 2.0, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn t5_seed102() {
    run_variant(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 102);
}

#[test]
#[ignore]
fn t6_wide_seed100() {
    run_variant(DatasetKind::Univariate, [8, 16, 32], 0.1, 1.0, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn t7_wide_seed101() {
    run_variant(DatasetKind::Univariate, [8, 16, 32], 0.1, 1.0, 1.0, 1.0, 101);
}

fn run_variant_bias(kind: DatasetKind, widths: [usize; 3], init_scale: f64, tau: f64,
               lspars: f64, lortho: f64, seed: u64, head_bias: f64) {
    let gen = GeneratorConfig::new(1).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);

    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = widths;
    mcfg.lambda_spars = lspars;
    mcfg.lambda_ortho = lortho;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 {
            for v in p.data_mut() { *v *= init_scale / 0.01; }
        }
        if i == np - 5 {
            // unet head bias
            for v in p.data_mut() { *v = head_bias; }
        }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "{:12} w{:?} init{:.2} tau{:.2} l({},{}) seed{seed} hb{head_bias}: r2 {:.4} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), widths, init_scale, tau, lspars, lortho,
        r.test_r2, score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn t8_bivariate() {
    run_variant(DatasetKind::Bivariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 100);
}

#[test]
#[ignore]
fn t9_uni_headbias() {
    run_variant_bias(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 100, 2.0);
}

#[test]
#[ignore]
fn t10_uni_headbias_s101() {
    run_variant_bias(DatasetKind::Univariate, [4, 8, 16], 0.1, 1.0, 1.0, 1.0, 101, 2.0);
}

fn run_rare(kind: DatasetKind, seed: u64) {
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = (0.2, 0.7);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);

    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 {
            for v in p.data_mut() { *v *= 10.0; }
        }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "RARE {:12} seed{seed}: r2 {:.4} rmse {:.3} | auc {:.3} f1 {:.3} (n={} skip={}) | {:.0}s",
        kind.name(), r.test_r2, r.test_rmse_raw,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0),
        score.n_evaluated, score.n_skipped, wall
    );
}

#[test]
#[ignore]
fn rare_uni() { run_rare(DatasetKind::Univariate, 100); }

#[test]
#[ignore]
fn rare_biv() { run_rare(DatasetKind::Bivariate, 100); }

#[test]
#[ignore]
fn rare_tri1() { run_rare(DatasetKind::Trivariate1, 100); }

fn run_rare_tau(kind: DatasetKind, seed: u64, tau: f64, amp: (f64, f64)) {
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = amp;
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);

    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 {
            for v in p.data_mut() { *v *= 10.0; }
        }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "RT {:12} seed{seed} tau{tau} amp{:?}: r2 {:.4} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), amp, r.test_r2,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn rt_uni_t05() { run_rare_tau(DatasetKind::Univariate, 100, 0.5, (0.2, 0.7)); }

#[test]
#[ignore]
fn rt_biv_t05() { run_rare_tau(DatasetKind::Bivariate, 100, 0.5, (0.2, 0.7)); }

#[test]
#[ignore]
fn rt_tri1_t05() { run_rare_tau(DatasetKind::Trivariate1, 100, 0.5, (0.2, 0.7)); }

#[test]
#[ignore]
fn rt_tri2_t05() { run_rare_tau(DatasetKind::Trivariate2, 100, 0.5, (0.2, 0.7)); }

fn diag_rare(kind: DatasetKind, seed: u64, head_bias: f64) {
    use magnets_core::metrics::{pool_channels, pool_channels_u8, magnets_mask_score, MaskPooling as MP};
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = (0.2, 0.7);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let np = model.params().len();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        if i == np - 4 || i == np - 2 { for v in p.data_mut() { *v *= 10.0; } }
        if i == np - 5 && head_bias != 0.0 { for v in p.data_mut() { *v = head_bias; } }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    println!("r2 {:.4}", log.records.last().unwrap().test_r2);

    let (c, t, m) = (test_raw.c, test_raw.t, model.config.masks_per_channel);
    let fw = model.feature_weights();
    let mut wr: Vec<f64> = fw.iter().map(|v| v.abs()).collect();
    let mx = wr.iter().cloned().fold(0.0, f64::max);
    for v in wr.iter_mut() { *v /= mx; }
    println!("weight ratios (ch-major): {:?}", wr.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());

    // pooled precision/recall of the thresholded score
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for i in 0..300.min(test_raw.n) {
        let gt = pool_channels_u8(test_raw.sample_gt(i).unwrap(), c, t);
        if gt.iter().all(|g| *g == 0) { continue; }
        let xs = scaler.transform_sample(test_raw.sample_x(i), c, t);
        let x = magnets_core::Tensor::new(&[c, t], xs).unwrap();
        let e = model.explain(&x).unwrap();
        let sc = pool_channels(&magnets_mask_score(&e, MP::Weighted), c, t);
        for ti in 0..t {
            let p = sc[ti] > 0.5;
            let a = gt[ti] != 0;
            match (p, a) { (true, true) => tp += 1, (true, false) => fp += 1, (false, true) => fn_ += 1, _ => {} }
        }
    }
    println!(
        "pooled: precision {:.3} recall {:.3}",
        tp as f64 / (tp + fp).max(1) as f64,
        tp as f64 / (tp + fn_).max(1) as f64
    );
}

#[test]
#[ignore]
fn diag_biv() { diag_rare(DatasetKind::Bivariate, 100, 0.0); }

#[test]
#[ignore]
fn diag_biv_hb() { diag_rare(DatasetKind::Bivariate, 100, 1.0); }

fn run_onehot(kind: DatasetKind, seed: u64, beta_val: f64, w_scale: f64) {
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = (0.2, 0.7);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    // one-hot concept columns on distinct (channel, mask) pairs + jitter
    let (c, m, k) = (kind.channels(), 10, 3);
    {
        let beta = &mut model.beta;
        for v in beta.data_mut().iter_mut() { *v = 0.0; }
        for ki in 0..k {
            let ch = ki % c;
            let mi = ki / c;
            beta.data_mut()[(ch * m + mi) * k + ki] = beta_val;
        }
        for v in model.head_w.data_mut() { *v = w_scale * (*v / 0.01); }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "OH {:12} seed{seed} b{beta_val} w{w_scale}: r2 {:.4} spars {:.3} ortho {:.3} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), r.test_r2, r.spars, r.ortho,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn oh_biv() { run_onehot(DatasetKind::Bivariate, 100, 0.8, 0.01); }

#[test]
#[ignore]
fn oh_uni() { run_onehot(DatasetKind::Univariate, 100, 0.8, 0.01); }

#[test]
#[ignore]
fn oh_tri1() { run_onehot(DatasetKind::Trivariate1, 100, 0.8, 0.01); }

#[test]
#[ignore]
fn oh_biv_traj() {
    use magnets_core::metrics::{pool_channels, pool_channels_u8, magnets_mask_score, MaskPooling as MP};
    let kind = DatasetKind::Bivariate;
    let seed = 100u64;
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = (0.2, 0.7);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let (c, m, k) = (kind.channels(), 10, 3);
    for v in model.beta.data_mut().iter_mut() { *v = 0.0; }
    for ki in 0..k {
        model.beta.data_mut()[((ki % c) * m + ki / c) * k + ki] = 0.8;
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;

    let prec_rec = |model: &MagnetsModel| {
        let (c, t) = (test_raw.c, test_raw.t);
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for i in 0..200 {
            let gt = pool_channels_u8(test_raw.sample_gt(i).unwrap(), c, t);
            if gt.iter().all(|g| *g == 0) { continue; }
            let xs = scaler.transform_sample(test_raw.sample_x(i), c, t);
            let x = magnets_core::Tensor::new(&[c, t], xs).unwrap();
            let e = model.explain(&x).unwrap();
            let sc = pool_channels(&magnets_mask_score(&e, MP::Weighted), c, t);
            for ti in 0..t {
                match (sc[ti] > 0.5, gt[ti] != 0) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
        }
        (tp as f64 / (tp + fp).max(1) as f64, tp as f64 / (tp + fn_).max(1) as f64)
    };

    // manual epoch loop to probe mid-training
    for phase in 0..5 {
        let mut sub = tcfg.clone();
        sub.epochs = 10;
        sub.seed = seed + phase;
        let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &sub, |_| {}).unwrap();
        let (p, r) = prec_rec(&model);
        println!(
            "after {:2} epochs: r2 {:.4} spars {:.2} ortho {:.3} precision {:.3} recall {:.3}",
            (phase + 1) * 10,
            log.records.last().unwrap().test_r2,
            log.records.last().unwrap().spars,
            log.records.last().unwrap().ortho,
            p, r
        );
    }
}

fn run_onehot_tau(kind: DatasetKind, seed: u64, tau: f64) {
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = (0.2, 0.7);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let (c, m, k) = (kind.channels(), 10, 3);
    for v in model.beta.data_mut().iter_mut() { *v = 0.0; }
    for ki in 0..k {
        model.beta.data_mut()[((ki % c) * m + ki / c) * k + ki] = 0.8;
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "OHT {:12} seed{seed} tau{tau}: r2 {:.4} spars {:.2} ortho {:.3} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), r.test_r2, r.spars, r.ortho,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn oht_biv_05() { run_onehot_tau(DatasetKind::Bivariate, 100, 0.5); }

#[test]
#[ignore]
fn oht_uni_05() { run_onehot_tau(DatasetKind::Univariate, 100, 0.5); }

#[test]
#[ignore]
fn oht_uni_1() { run_onehot_tau(DatasetKind::Univariate, 100, 1.0); }

#[test]
#[ignore]
fn oht_biv_025() { run_onehot_tau(DatasetKind::Bivariate, 100, 0.25); }

fn run_onehot_gen(kind: DatasetKind, seed: u64, tau: f64, amp: (f64, f64), width: (f64, f64), bumps: usize) {
    let mut gen = GeneratorConfig::new(1).scaled(0.1);
    gen.amplitude_range = amp;
    gen.width_range = width;
    gen.bumps_per_channel = bumps;
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let (c, m, k) = (kind.channels(), 10, 3);
    for v in model.beta.data_mut().iter_mut() { *v = 0.0; }
    for ki in 0..k {
        model.beta.data_mut()[((ki % c) * m + ki / c) * k + ki] = 0.8;
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "OHG {:12} seed{seed} tau{tau} amp{:?} w{:?} b{bumps}: r2 {:.4} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), amp, width, r.test_r2,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn ohg_biv_narrow() { run_onehot_gen(DatasetKind::Bivariate, 100, 0.5, (0.2, 0.7), (3.0, 10.0), 4); }

#[test]
#[ignore]
fn ohg_uni_narrow() { run_onehot_gen(DatasetKind::Univariate, 100, 0.5, (0.2, 0.7), (3.0, 10.0), 4); }

#[test]
#[ignore]
fn ohg_tri1_t05() { run_onehot_gen(DatasetKind::Trivariate1, 100, 0.5, (0.2, 0.7), (4.0, 16.0), 4); }

#[test]
#[ignore]
fn ohg_tri2_t05() { run_onehot_gen(DatasetKind::Trivariate2, 100, 0.5, (0.2, 0.7), (4.0, 16.0), 4); }

fn run_final(kind: DatasetKind, seed: u64, tau: f64) {
    let gen = GeneratorConfig::new(seed).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    mcfg.temperature = tau;
    let mut rng = Rng::substream(seed, 0x6d61_676e);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "FIN {:12} seed{seed} tau{tau}: r2 {:.4} rmse {:.3} | auc {:.3} f1 {:.3} (skip {}) | {:.0}s",
        kind.name(), r.test_r2, r.test_rmse_raw,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), score.n_skipped, wall
    );
}

#[test]
#[ignore]
fn fin_uni_t05() { run_final(DatasetKind::Univariate, 101, 0.5); }
#[test]
#[ignore]
fn fin_biv_t05() { run_final(DatasetKind::Bivariate, 101, 0.5); }
#[test]
#[ignore]
fn fin_tri1_t05() { run_final(DatasetKind::Trivariate1, 101, 0.5); }
#[test]
#[ignore]
fn fin_tri2_t05() { run_final(DatasetKind::Trivariate2, 101, 0.5); }
#[test]
#[ignore]
fn fin_uni_t1() { run_final(DatasetKind::Univariate, 101, 1.0); }
#[test]
#[ignore]
fn fin_biv_t1() { run_final(DatasetKind::Bivariate, 101, 1.0); }
#[test]
#[ignore]
fn fin_tri1_t1() { run_final(DatasetKind::Trivariate1, 101, 1.0); }

#[test]
#[ignore]
fn fin_tri2_t1() { run_final(DatasetKind::Trivariate2, 101, 1.0); }
#[test]
#[ignore]
fn fin_tri2_t05_s202() { run_final(DatasetKind::Trivariate2, 202, 0.5); }
#[test]
#[ignore]
fn fin_tri2_t025() { run_final(DatasetKind::Trivariate2, 101, 0.25); }

#[test]
#[ignore]
fn fin_tri2_t05_s303() { run_final(DatasetKind::Trivariate2, 303, 0.5); }
#[test]
#[ignore]
fn fin_uni_t05_s202() { run_final(DatasetKind::Univariate, 202, 0.5); }
#[test]
#[ignore]
fn fin_biv_t05_s202() { run_final(DatasetKind::Bivariate, 202, 0.5); }
#[test]
#[ignore]
fn fin_tri1_t05_s202() { run_final(DatasetKind::Trivariate1, 202, 0.5); }

fn run_final_full(kind: DatasetKind, seed: u64, tau: f64, noise: magnets_core::model::NoiseKind, head_bias: f64) {
    let gen = GeneratorConfig::new(seed).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    mcfg.temperature = tau;
    mcfg.noise = noise;
    let mut rng = Rng::substream(seed, 0x6d61_676e);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    if head_bias != 0.0 {
        let np = model.params().len();
        for (i, p) in model.params_mut().into_iter().enumerate() {
            if i == np - 5 { for v in p.data_mut() { *v = head_bias; } }
        }
    }
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let t0 = Instant::now();
    let log = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let r = log.records.last().unwrap();
    let score = evaluate_magnets_explanations(&model, &scaler, &test_raw, MaskPooling::Weighted).unwrap();
    println!(
        "FF {:12} seed{seed} tau{tau} {:?} hb{head_bias}: r2 {:.4} | auc {:.3} f1 {:.3} | {:.0}s",
        kind.name(), noise, r.test_r2,
        score.auc_mean.unwrap_or(-1.0), score.f1_mean.unwrap_or(-1.0), wall
    );
}

#[test]
#[ignore]
fn ff_uni_s202_gum() { run_final_full(DatasetKind::Univariate, 202, 0.5, magnets_core::model::NoiseKind::Gumbel, 0.0); }
#[test]
#[ignore]
fn ff_uni_s202_hb1() { run_final_full(DatasetKind::Univariate, 202, 0.5, magnets_core::model::NoiseKind::Logistic, 1.0); }
#[test]
#[ignore]
fn ff_uni_s202_t075() { run_final_full(DatasetKind::Univariate, 202, 0.75, magnets_core::model::NoiseKind::Logistic, 0.0); }

#[test]
#[ignore]
fn diag_uni_s202() {
    use magnets_core::metrics::explanation_f1;
    use magnets_core::metrics::pool_channels_u8;
    let kind = DatasetKind::Univariate;
    let seed = 202u64;
    let gen = GeneratorConfig::new(seed).scaled(0.1);
    let train_raw = generate(kind, &gen, Split::Train).unwrap();
    let test_raw = generate(kind, &gen, Split::Test).unwrap();
    let scaler = Standardizer::fit(&train_raw).unwrap();
    let train_std = scaler.transform(&train_raw);
    let test_std = scaler.transform(&test_raw);
    let mut mcfg = MagnetsConfig::new(kind.channels(), gen.t);
    mcfg.unet_widths = [4, 8, 16];
    mcfg.lambda_spars = 1.0;
    mcfg.lambda_ortho = 1.0;
    mcfg.temperature = 0.5;
    let mut rng = Rng::substream(seed, 0x6d61_676e);
    let mut model = MagnetsModel::init(mcfg, &mut rng).unwrap();
    let mut tcfg = TrainConfig::new(seed);
    tcfg.epochs = 50;
    let _ = train(&mut model, &train_std, &test_std, &test_raw.y, &scaler, &tcfg, |_| {}).unwrap();

    let fw = model.feature_weights();
    let mut wr: Vec<f64> = fw.iter().map(|v| v.abs()).collect();
    let mx = wr.iter().cloned().fold(0.0, f64::max);
    for v in wr.iter_mut() { *v /= mx; }
    println!("weight ratios: {:?}", wr.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    println!("beta: {:?}", model.beta.data().iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("head w: {:?}", model.head_w.data());

    let (c, t, m) = (test_raw.c, test_raw.t, model.config.masks_per_channel);
    for mi in 0..m {
        if wr[mi] < 0.05 { continue; }
        let mut f1s = 0.0;
        let mut cover = 0.0;
        let mut n = 0;
        for i in 0..200 {
            let gt = pool_channels_u8(test_raw.sample_gt(i).unwrap(), c, t);
            if gt.iter().all(|g| *g == 0) { continue; }
            let xs = scaler.transform_sample(test_raw.sample_x(i), c, t);
            let x = magnets_core::Tensor::new(&[c, t], xs).unwrap();
            let e = model.explain(&x).unwrap();
            let s: Vec<f64> = e.masks.data()[mi * t..][..t].to_vec();
            cover += s.iter().sum::<f64>() / t as f64;
            f1s += explanation_f1(&s, &gt, 0.5);
            n += 1;
        }
        println!("mask {mi}: wratio {:.3} coverage {:.2} f1 {:.3}", wr[mi], cover / n as f64, f1s / n as f64);
    }
}

#[test]
#[ignore]
fn v_tri1_s101() { run_final(DatasetKind::Trivariate1, 101, 0.5); }
#[test]
#[ignore]
fn v_tri1_s202() { run_final(DatasetKind::Trivariate1, 202, 0.5); }
#[test]
#[ignore]
fn v_tri1_s303() { run_final(DatasetKind::Trivariate1, 303, 0.5); }
#[test]
#[ignore]
fn v_tri2_s101() { run_final(DatasetKind::Trivariate2, 101, 0.5); }
#[test]
#[ignore]
fn v_tri2_s202() { run_final(DatasetKind::Trivariate2, 202, 0.5); }
#[test]
#[ignore]
fn v_tri2_s303() { run_final(DatasetKind::Trivariate2, 303, 0.5); }
#[test]
#[ignore]
fn v_uni_s303() { run_final(DatasetKind::Univariate, 303, 0.5); }
#[test]
#[ignore]
fn v_biv_s303() { run_final(DatasetKind::Bivariate, 303, 0.5); }

use std::time::Instant;
use magnets_core::model::{MagnetsConfig, MagnetsModel, MaskNoise, MaskPath};
use magnets_core::train::TrainableModel;
use magnets_core::{Rng, Tape, Tensor};

#[test]
#[ignore]
fn profile_batch() {
    let mut cfg = MagnetsConfig::new(1, 128);
    cfg.unet_widths = [4, 8, 16];
    let mut rng = Rng::new(1);
    let model = MagnetsModel::init(cfg, &mut rng).unwrap();
    let x = Tensor::from_fn(&[8, 1, 128], |_| rng.range(-1.0, 1.0));
    let y: Vec<f64> = (0..8).map(|_| rng.range(0.0, 2.0)).collect();

    let reps = 200;
    // forward only (eval path)
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let tr = model.forward(&mut tape, &x, MaskNoise::Off, MaskPath::Hard).unwrap();
        std::hint::black_box(tape.value(tr.prediction).data()[0]);
    }
    println!("fwd eval      : {:.2} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    // forward with noise
    let t0 = Instant::now();
    let mut nrng = Rng::new(2);
    for _ in 0..reps {
        let mut tape = Tape::new();
        let tr = model.forward(&mut tape, &x, MaskNoise::Sample(&mut nrng), MaskPath::Hard).unwrap();
        std::hint::black_box(tape.value(tr.prediction).data()[0]);
    }
    println!("fwd noise     : {:.2} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);

    // full training step (loss + backward)
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let bl = model.batch_loss(&mut tape, &x, &y, &mut nrng).unwrap();
        tape.backward(bl.total).unwrap();
        std::hint::black_box(tape.grad(bl.param_vars[0]));
    }
    println!("loss+backward : {:.2} ms", t0.elapsed().as_secs_f64() * 1e3 / reps as f64);
}

//! Train the ISTI network on a few synthetic clips and evaluate on a
//! held-out one.
//!
//! `cargo run --release --example train_isti_network [epochs]`

use stressnet::emission::preprocess;
use stressnet::metrics::{mse, pearson};
use stressnet::neural::{predict_isti, train, ArchDescriptor, TrainConfig, TrainingClip};
use stressnet::synth::{gen_trials, DatasetConfig};

fn main() -> stressnet::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let trials = gen_trials(&DatasetConfig { n_clips: 5, seed: 42, ..Default::default() })?;
    let max = 300.0;
    let clips = trials
        .iter()
        .map(|t| TrainingClip::from_isti_ms(preprocess(&t.clip, &Default::default())?, &t.truth_isti, max))
        .collect::<stressnet::Result<Vec<_>>>()?;

    // Same settings as the end-to-end benchmark.
    let config = TrainConfig {
        epochs,
        lr_head: 0.3,
        lr_backbone: 0.1,
        batch_frames: 60,
        decay_period_epochs: 40,
        alpha: 10.0,
        seed: 1,
        ..Default::default()
    };
    let (model, history) = train(&clips[..4], &ArchDescriptor::default(), &config)?;
    for e in history.epochs.iter().step_by(5) {
        println!("epoch {:>3}  loss {:.4}  ce {:.4}  mse {:.5}", e.epoch, e.loss, e.ce, e.mse);
    }

    let held = &clips[4];
    let pred = predict_isti(&model, &held.features, max, config.seq_seconds)?;
    let p: Vec<f64> = pred.samples().iter().map(|v| v / max).collect();
    let g = held.targets.samples();
    println!("held-out clip: Pearson {:.3}, normalized MSE {:.5}", pearson(&p, g)?, mse(&p, g)?);
    Ok(())
}

//! Train the stress classifier on programmed ISTI traces of synthetic
//! trials, score a held-out split, and fuse a breathing classifier.

use stressnet::metrics::{average_precision, Scored};
use stressnet::stress::{
    breathing_train, featurize, featurize_signal, fuse_breathing, stress_forward, stress_train, Label,
    StressTrainConfig, TrialRecord,
};
use stressnet::synth::{isti_trajectory, breathing_rate, programmed_isti, DatasetConfig, TrialLayout};
use stressnet::signal::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn trial(i: usize, label: Label, layout: &TrialLayout) -> stressnet::Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
    let knots = isti_trajectory(layout, label, &mut rng)?;
    let times: Vec<f64> = (0..(layout.duration_s() * 4.0) as usize).map(|k| k as f64 / 4.0).collect();
    let isti = Signal::new(programmed_isti(&knots, &times)?, 4.0, 0.0)?;
    let breathing = breathing_rate(layout, label, &mut rng)?;
    TrialRecord::new(format!("t{i:02}"), isti, layout.phases(), Some(label), Some(breathing))
}

fn main() -> stressnet::Result<()> {
    let config = DatasetConfig { n_clips: 20, seed: 4, ..Default::default() };
    let trials: Vec<TrialRecord> =
        config.labels().into_iter().enumerate().map(|(i, l)| trial(i, l, &config.layout)).collect::<Result<_, _>>()?;
    let (train, test) = trials.split_at(14);

    let sc = StressTrainConfig { seed: 1, ..Default::default() };
    let (model, history) = stress_train(train, &sc)?;
    println!("training BCE {:.4} -> {:.4}", history[0], history.last().unwrap());
    let bc = StressTrainConfig { scale: 60.0, ..sc.clone() };
    let (breath, _) = breathing_train(train, &bc)?;

    let (mut isti_only, mut fused) = (Vec::new(), Vec::new());
    for t in test {
        let positive = t.label == Some(Label::Stress);
        let p = stress_forward(&model, &featurize(t, 128, sc.scale)?)?;
        let b = stress_forward(&breath, &featurize_signal(t.breathing.as_ref().unwrap(), 128, bc.scale)?)?;
        println!("{} {:<9} p_isti {p:.3}  p_breath {b:.3}", t.id, t.label.unwrap());
        isti_only.push(Scored { score: p, positive });
        fused.push(Scored { score: fuse_breathing(p, b)?, positive });
    }
    println!("held-out AP: ISTI {:.3}, fused {:.3}", average_precision(&isti_only)?, average_precision(&fused)?);
    Ok(())
}

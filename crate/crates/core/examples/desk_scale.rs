//! Synthetic end-to-end run: generate, preprocess, train, score, evaluate.
//!
//! `SEED` (default 7) seeds data, model and shuffling; `EPOCHS` defaults to 12.
//! `DUMP=1` prints the regularity series.

use std::time::Instant;

use stae_core::model::{ModelConfig, SpatioTemporalAE};
use stae_core::optim::{train, TrainSettings};
use stae_core::pipeline::{build_volumes, generate_synthetic, preprocess, PreprocessConfig, StrideSet, SyntheticSpec};
use stae_core::scoring::{evaluate, frame_errors, regularity, ScoringConfig};

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn main() -> stae_core::Result<()> {
    let t0 = Instant::now();
    let seed = env("SEED", 7);
    let video = generate_synthetic::<f64>(&SyntheticSpec::default(), seed)?;
    let cfg = ModelConfig { seed, ..ModelConfig::desk() };
    let pcfg = PreprocessConfig { target_size: cfg.input_size, ..PreprocessConfig::default() };
    let (train_seq, stats) = preprocess(&video.train, None, &pcfg)?;
    let (test_seq, _) = preprocess(&video.test, Some(&stats), &pcfg)?;
    let strides = StrideSet { strides: vec![1, 2, 3], time_steps: cfg.time_steps };
    let vols = build_volumes(&train_seq, &strides)?;
    let mut model = SpatioTemporalAE::<f64>::build(cfg)?;
    println!("{} training volumes", vols.len());

    let settings = TrainSettings { max_epochs: env("EPOCHS", 12), seed, ..TrainSettings::default() };
    let report = train(&mut model, &vols, &settings, |_, _| Ok(()))?;
    for r in &report.history {
        println!("epoch {:>2}  train {:.5}  val {:.5}", r.epoch, r.train_loss, r.val_loss);
    }

    let e = frame_errors(&model, &test_seq)?;
    let series = regularity(&e, Default::default())?;
    let (m, events) = evaluate(&series, &video.labels, &ScoringConfig::default())?;
    println!(
        "AUC {:.4}  EER {:.4}  detected {}/{}  false alarms {}",
        m.auc,
        m.eer,
        m.true_detections,
        m.true_detections + m.missed,
        m.false_alarms
    );
    for ev in &events {
        println!("event at {} [{}, {}] min s_r {:.3}", ev.representative, ev.start, ev.end, ev.min_regularity);
    }
    if std::env::var("DUMP").is_ok() {
        for (k, v) in series.s_r.iter().enumerate() {
            println!("{} {:.4} {}", k + 1, v, video.labels[k]);
        }
    }
    println!("{:.0} s", t0.elapsed().as_secs_f64());
    Ok(())
}

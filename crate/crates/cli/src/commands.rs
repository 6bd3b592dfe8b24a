use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stae_core::model::{Checkpoint, SpatioTemporalAE};
use stae_core::optim::{train, write_history};
use stae_core::pipeline::{
    build_volumes, fit_stats, generate_synthetic, ingest, preprocess_with, read_labels, write_frames, write_labels,
    Ingested,
};
use stae_core::scoring::{
    count_events, detect_events, evaluate, frame_errors, label_intervals, read_scores, regularity_indexed,
    write_events, write_metrics, write_scores, Metrics, RegularitySeries,
};

use crate::config::RunConfig;

pub const CHECKPOINT_NAME: &str = "checkpoint.stae";
pub const HISTORY_NAME: &str = "history.csv";
pub const SCORES_SUFFIX: &str = ".scores.csv";
pub const EVENTS_SUFFIX: &str = ".events.csv";
pub const METRICS_SUFFIX: &str = ".metrics.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `out/train/`, `out/test/` and `out/labels/test.csv`.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let video = generate_synthetic::<f64>(&cfg.synthetic, cfg.seed)?;
    write_frames(&video.train, &out.join("train"))?;
    write_frames(&video.test, &out.join("test"))?;
    let labels = out.join("labels");
    create_dir(&labels)?;
    write_labels(&labels.join("test.csv"), &video.labels)?;
    let anomalous = video.labels.iter().filter(|&&l| l == 1).count();
    println!(
        "synth: {} training and {} test frames ({} anomalous) in {}",
        video.train.len(),
        video.test.len(),
        anomalous,
        out.display()
    );
    Ok(())
}

fn has_frames(dir: &Path) -> Result<bool> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path();
        let numbered = p.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.parse::<u64>().is_ok());
        if p.is_file() && numbered {
            return Ok(true);
        }
    }
    Ok(false)
}

/// A directory of frames is one video; otherwise every subdirectory holding
/// frames is a video, in name order.
fn load_videos(dir: &Path) -> Result<Vec<Ingested<f64>>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let dirs: Vec<PathBuf> = if has_frames(dir)? {
        vec![dir.to_path_buf()]
    } else {
        let mut subs = Vec::new();
        for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
            let p = entry?.path();
            if p.is_dir() && has_frames(&p)? {
                subs.push(p);
            }
        }
        subs.sort();
        subs
    };
    if dirs.is_empty() {
        bail!("{} contains no numbered frame images", dir.display());
    }
    dirs.iter()
        .map(|d| {
            let v = ingest::<f64>(d)?;
            v.warnings.iter().for_each(|w| log::warn!("{w}"));
            Ok(v)
        })
        .collect()
}

/// Fits preprocessing on every video under `data`, trains, and writes the
/// best-validation checkpoint and the loss history.
pub fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let videos = load_videos(data)?;
    let raw: Vec<_> = videos.iter().map(|v| &v.frames).collect();
    let stats = fit_stats(&raw, &cfg.preprocess)?;
    let mut volumes = Vec::new();
    for v in &videos {
        let seq = preprocess_with(&v.frames, &stats, &cfg.preprocess)?;
        volumes.extend(build_volumes(&seq, &cfg.strides).with_context(|| format!("video {}", seq.source_id))?);
    }
    let mut model = SpatioTemporalAE::<f64>::build(cfg.model.clone())?;
    let ckpt_path = out.join(CHECKPOINT_NAME);
    let save = |m: &SpatioTemporalAE<f64>| Checkpoint::with_stats(m.clone(), cfg.preprocess.clone(), stats.clone()).save(&ckpt_path);
    let report = train(&mut model, &volumes, &cfg.train, |m, epoch| {
        log::info!("epoch {epoch}: new best validation loss, checkpoint saved");
        save(m)
    })?;
    save(&model)?;
    write_history(&out.join(HISTORY_NAME), &report.history)?;
    println!(
        "train: {} volumes, {} epochs{}, loss {:.6} -> {:.6}, best validation {:.6} at epoch {}",
        volumes.len(),
        report.history.len(),
        if report.early_stopped { " (early stop)" } else { "" },
        report.initial_train_loss,
        report.final_train_loss,
        report.best_val_loss,
        report.best_epoch
    );
    Ok(())
}

/// Loads a checkpoint and reconciles it with the run configuration. Without
/// an explicit config file the checkpoint's own settings are adopted.
pub fn load_checkpoint(cfg: &mut RunConfig, explicit: bool, path: &Path) -> Result<Checkpoint<f64>> {
    let ckpt = Checkpoint::<f64>::load(path)?;
    let Some((pre, _)) = &ckpt.preprocess else {
        bail!("{} holds no preprocessing statistics; it was not written by training", path.display());
    };
    if explicit {
        if ckpt.model.config() != &cfg.model {
            bail!("{}: model configuration differs from the [model] section and seed of the run config", path.display());
        }
        if pre != &cfg.preprocess {
            bail!("{}: preprocessing differs from the [preprocess] section of the run config", path.display());
        }
    } else {
        cfg.model = ckpt.model.config().clone();
        cfg.seed = cfg.model.seed;
        cfg.train.seed = cfg.seed;
        cfg.preprocess = pre.clone();
        cfg.strides.time_steps = cfg.model.time_steps;
    }
    Ok(ckpt)
}

/// One `<video>.scores.csv` per test video.
pub fn score(cfg: &RunConfig, ckpt: &Checkpoint<f64>, test: &Path, out: &Path) -> Result<()> {
    let (_, stats) = ckpt.preprocess.as_ref().expect("checked on load");
    for v in load_videos(test)? {
        let seq = preprocess_with(&v.frames, stats, &cfg.preprocess)?;
        let e = frame_errors(&ckpt.model, &seq).with_context(|| format!("video {}", seq.source_id))?;
        let series = regularity_indexed(&e, v.frame_numbers.clone(), cfg.scoring.normalization)?;
        series.warnings.iter().for_each(|w| log::warn!("{}: {w}", seq.source_id));
        let path = out.join(format!("{}{SCORES_SUFFIX}", seq.source_id));
        write_scores(&path, &series, None)?;
        let min = series.s_r.iter().copied().fold(f64::INFINITY, f64::min);
        println!("score: {} frames, min regularity {min:.4} -> {}", series.len(), path.display());
    }
    Ok(())
}

/// `(video name, series, labels stored in the CSV)` for every score file.
fn load_scores(dir: &Path) -> Result<Vec<(String, RegularitySeries, Option<Vec<u8>>)>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_str().is_some_and(|s| s.ends_with(SCORES_SUFFIX)))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("{} contains no *{SCORES_SUFFIX} files", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            let name = name.trim_end_matches(SCORES_SUFFIX).to_string();
            let (series, labels) = read_scores(p)?;
            Ok((name, series, labels))
        })
        .collect()
}

/// Event grouping only; ground truth is used for counts when the score files carry labels.
pub fn detect(cfg: &RunConfig, scores: &Path, out: &Path) -> Result<()> {
    let sc = &cfg.scoring;
    for (name, series, labels) in load_scores(scores)? {
        let events = detect_events(&series, sc.window, sc.persistence_threshold)?;
        write_events(&out.join(format!("{name}{EVENTS_SUFFIX}")), &events)?;
        let reps: Vec<usize> = events.iter().map(|e| e.representative).collect();
        print!("detect: {name}: {} events at frames {reps:?}", events.len());
        if let Some(l) = labels {
            let c = count_events(&reps, &label_intervals(&l, &series.frame_indices));
            print!(" ({} detected, {} false alarms, {} missed)", c.true_detections, c.false_alarms, c.missed);
        }
        println!();
    }
    Ok(())
}

fn labels_for(path: &Path, name: &str, videos: usize) -> Result<Vec<u8>> {
    if path.is_dir() {
        let file = path.join(format!("{name}.csv"));
        if !file.is_file() {
            bail!("no labels for video {name}: {} is missing", file.display());
        }
        Ok(read_labels(&file)?)
    } else if videos == 1 {
        Ok(read_labels(path)?)
    } else {
        bail!("{} is a single label file but there are {videos} score files; pass a directory of <video>.csv", path.display())
    }
}

/// Metrics and events per video, computed from the score CSVs alone.
pub fn evaluate_cmd(cfg: &RunConfig, scores: &Path, labels: &Path, out: &Path) -> Result<Vec<(String, Metrics)>> {
    let all = load_scores(scores)?;
    let n = all.len();
    let mut results = Vec::new();
    for (name, series, _) in all {
        let l = labels_for(labels, &name, n)?;
        let expected: Vec<usize> = (1..=l.len()).collect();
        if series.frame_indices != expected {
            bail!(
                "{name}: score frame indices ({} rows, {}..{}) do not align with labels 1..{}",
                series.len(),
                series.frame_indices[0],
                series.frame_indices[series.len() - 1],
                l.len()
            );
        }
        let (metrics, events) = evaluate(&series, &l, &cfg.scoring).with_context(|| format!("video {name}"))?;
        write_metrics(&out.join(format!("{name}{METRICS_SUFFIX}")), &metrics)?;
        write_events(&out.join(format!("{name}{EVENTS_SUFFIX}")), &events)?;
        println!(
            "evaluate: {name}: AUC {:.1}% EER {:.1}% | events detected {}/{} false alarms {} (persistence {}, window {})",
            100.0 * metrics.auc,
            100.0 * metrics.eer,
            metrics.true_detections,
            metrics.true_detections + metrics.missed,
            metrics.false_alarms,
            metrics.persistence_threshold,
            metrics.window
        );
        results.push((name, metrics));
    }
    Ok(results)
}

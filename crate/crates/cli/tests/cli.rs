use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stae_core::model::Checkpoint;
use stae_core::pipeline::read_labels;
use stae_core::scoring::{evaluate, read_metrics, read_scores, ScoringConfig};

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny.toml")
}

fn stae(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stae"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

/// Exit status is non-zero and stderr is a single diagnostic line.
fn fails(o: Output) -> String {
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with("error: "), "{err}");
    lines[0].to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path to file contents for every file under `dir`.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_default_layout_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(stae(&["synth", "--seed", "5"], &a));
    ok(stae(&["synth", "--seed", "5"], &b));
    for f in ["train/000001.png", "train/000600.png", "test/000600.png", "labels/test.csv", "config.resolved.toml"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert!(!a.join("train/000601.png").exists());
    let labels = read_labels(&a.join("labels/test.csv")).unwrap();
    assert_eq!(labels.len(), 600);
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 180);
    assert_eq!(snapshot(&a), snapshot(&b));
}

#[test]
fn synth_rejects_bad_window() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[synthetic]\ntest_frames = 100\nanomalies = [{ start = 90, end = 120, kind = \"reversed\" }]\n").unwrap();
    let msg = fails(stae(&["synth", "--config", s(&cfg)], &tmp.path().join("o")));
    assert!(msg.contains("[90, 120]"), "{msg}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[train]\nbatchsize = 8\n").unwrap();
    let msg = fails(stae(&["synth", "--config", s(&cfg)], &tmp.path().join("o")));
    assert!(msg.contains("batchsize"), "{msg}");
}

#[test]
fn missing_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = tiny_config();
    fails(stae(&["train", "--config", s(&cfg), s(&tmp.path().join("nope"))], &out));
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    fails(stae(&["train", "--config", s(&cfg), s(&empty)], &out));
    fails(stae(&["score", s(&tmp.path().join("missing.stae")), s(&empty)], &out));
    fails(stae(&["detect", s(&empty)], &out));
    fails(stae(&["synth", "--threads", "0"], &out));
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = tiny_config();
    let data = t.join("data");
    ok(stae(&["synth", "--config", s(&cfg)], &data));

    let run = t.join("run");
    let stdout = ok(stae(&["train", "--config", s(&cfg), s(&data.join("train"))], &run));
    assert!(stdout.contains("3 epochs"), "{stdout}");
    let ckpt_path = run.join("checkpoint.stae");
    let bytes = fs::read(&ckpt_path).unwrap();
    let ckpt = Checkpoint::<f64>::load(&ckpt_path).unwrap();
    assert_eq!(ckpt.to_bytes().unwrap(), bytes);
    let history = fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4, "{history}");

    // Same seed, same everything; the resolved snapshot reproduces it too.
    let again = t.join("again");
    ok(stae(&["train", "--config", s(&cfg), s(&data.join("train"))], &again));
    let replay = t.join("replay");
    ok(stae(&["train", "--config", s(&run.join("config.resolved.toml")), s(&data.join("train"))], &replay));
    assert_eq!(snapshot(&run), snapshot(&again));
    assert_eq!(snapshot(&run), snapshot(&replay));

    // A different seed changes the model.
    let other = t.join("other");
    ok(stae(&["train", "--config", s(&cfg), "--seed", "4", s(&data.join("train"))], &other));
    assert_ne!(fs::read(other.join("checkpoint.stae")).unwrap(), bytes);

    let scores = t.join("scores");
    ok(stae(&["score", s(&ckpt_path), s(&data.join("test"))], &scores));
    let (series, labels) = read_scores(&scores.join("test.scores.csv")).unwrap();
    assert_eq!(series.len(), 60);
    assert_eq!(labels, None);
    assert_eq!(series.frame_indices, (1..=60).collect::<Vec<_>>());
    let with_cfg = t.join("scores2");
    ok(stae(&["score", "--config", s(&cfg), s(&ckpt_path), s(&data.join("test"))], &with_cfg));
    assert_eq!(
        fs::read(scores.join("test.scores.csv")).unwrap(),
        fs::read(with_cfg.join("test.scores.csv")).unwrap()
    );
    let msg = fails(stae(&["score", "--config", s(&cfg), "--seed", "4", s(&ckpt_path), s(&data.join("test"))], &t.join("x")));
    assert!(msg.contains("model configuration"), "{msg}");

    let detected = t.join("detected");
    ok(stae(&["detect", "--config", s(&cfg), s(&scores)], &detected));
    assert!(detected.join("test.events.csv").is_file());

    let eval = t.join("eval");
    let stdout = ok(stae(&["evaluate", "--config", s(&cfg), s(&scores), s(&data.join("labels"))], &eval));
    assert!(stdout.contains("AUC"), "{stdout}");
    let cli_metrics = read_metrics(&eval.join("test.metrics.csv")).unwrap();
    let truth = read_labels(&data.join("labels/test.csv")).unwrap();
    let scoring = ScoringConfig {
        window: 10,
        ..ScoringConfig::default()
    };
    let (lib_metrics, _) = evaluate(&series, &truth, &scoring).unwrap();
    assert_eq!(cli_metrics, lib_metrics);
    assert_eq!(
        fs::read(eval.join("test.events.csv")).unwrap(),
        fs::read(detected.join("test.events.csv")).unwrap()
    );
}

#[test]
fn evaluate_perfect_and_degenerate_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let scores = t.join("scores");
    fs::create_dir(&scores).unwrap();
    let mut csv = String::from("frame_index,e,s_a,s_r,label\n");
    let mut labels = String::from("frame_index,label\n");
    for k in 1..=40 {
        let anomalous = (15..=20).contains(&k);
        let e = if anomalous { 5.0 } else { 1.0 + 0.01 * (k % 3) as f64 };
        let a = (e - 1.0) / 5.0;
        csv.push_str(&format!("{k},{e},{a},{},\n", 1.0 - a));
        labels.push_str(&format!("{k},{}\n", u8::from(anomalous)));
    }
    fs::write(scores.join("v.scores.csv"), csv).unwrap();
    let lab = t.join("labels.csv");
    fs::write(&lab, labels).unwrap();
    let stdout = ok(stae(&["evaluate", s(&scores), s(&lab)], &t.join("eval")));
    assert!(stdout.contains("AUC 100.0% EER 0.0%"), "{stdout}");

    let one_class = t.join("one.csv");
    let text: String = std::iter::once("frame_index,label\n".to_string())
        .chain((1..=40).map(|k| format!("{k},0\n")))
        .collect();
    fs::write(&one_class, text).unwrap();
    let msg = fails(stae(&["evaluate", s(&scores), s(&one_class)], &t.join("eval2")));
    assert!(msg.contains("both classes"), "{msg}");

    let short = t.join("short.csv");
    fs::write(&short, "frame_index,label\n1,0\n2,1\n").unwrap();
    let msg = fails(stae(&["evaluate", s(&scores), s(&short)], &t.join("eval3")));
    assert!(msg.contains("align"), "{msg}");
}

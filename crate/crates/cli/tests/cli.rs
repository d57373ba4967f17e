use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "network=miniature",
    "--set",
    "synthetic.utterances_per_split={train=30,dev=10,test=30}",
    "--set",
    "train.max_epochs=2",
    "--set",
    "train.patience=1",
    "--set",
    "keywords.min_occurrences=2",
    "--quiet",
];

fn kws(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kws"))
        .arg("--out")
        .arg(out)
        .args(SMALL)
        .args(args)
        .env_remove("KWS_OUT_DIR")
        .output()
        .expect("spawn kws")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = kws(out, args);
    assert!(
        o.status.success(),
        "kws {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["bogus"][..], &["generate", "--frobnicate"], &["train", "--model", "nope"], &[]] {
        let o = kws(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = kws(dir.path(), &["train", "--model", "de_text_prior"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no trainable parameters"));
    let o = kws(dir.path(), &["--set", "train.learning_rate=-1", "generate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = kws(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".lock"), "1").unwrap();
    let o = kws(dir.path(), &["generate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(".lock"));
    fs::remove_file(dir.path().join(".lock")).unwrap();
    ok(dir.path(), &["generate"]);
    assert!(!dir.path().join(".lock").exists());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kws"))
        .args(SMALL)
        .arg("generate")
        .env("KWS_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("corpus/manifest.jsonl").exists());
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 5\n[synthetic]\nnum_search_words = 12\nnum_query_words = 12\n").unwrap();
    let text = ok(dir.path(), &["--config", cfg.to_str().unwrap(), "generate"]);
    assert!(text.contains("12 tagger words"), "{text}");
}

#[test]
fn full_flow_writes_reports_and_search_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["generate"]);
    ok(out, &["train", "--model", "x_vision_speech_cnn"]);
    ok(out, &["train", "--model", "x_bow_cnn"]);
    assert!(out.join("models/x_bow_cnn/checkpoint.kwsm").exists());
    let history = fs::read_to_string(out.join("models/x_bow_cnn/history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,dev_loss,seconds\n"));
    for model in ["de_text_prior", "x_vision_speech_cnn", "x_bow_cnn"] {
        ok(out, &["evaluate", "--model", model]);
        for f in ["metrics.csv", "metrics.json", "pr_curve.csv", "ranked.csv", "eval.json"] {
            assert!(out.join("eval/test").join(model).join(f).exists(), "{model}/{f}");
        }
    }
    let table = ok(out, &["report", "--models", "de_text_prior,x_vision_speech_cnn,x_bow_cnn"]);
    assert!(table.contains("DETextPrior") && table.contains("XBoWCNN"));
    let csv = fs::read_to_string(out.join("report_test.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,P@10,P@N,EER,AP");
    assert_eq!(lines.len(), 4);

    let vocab = fs::read_to_string(out.join("corpus/vocab.txt")).unwrap();
    let keyword = vocab.lines().next().unwrap();
    let text = ok(out, &["search", "--keyword", keyword, "--top", "10", "--model", "x_vision_speech_cnn"]);
    let rows: Vec<(String, f64)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.windows(2).all(|w| w[0].1 >= w[1].1), "{rows:?}");
    // The prior ties everything, so its ranking is id order.
    let text = ok(out, &["search", "--keyword", keyword, "--top", "10", "--model", "de_text_prior"]);
    let ids: Vec<String> = text.lines().skip(2).map(|l| l.split_whitespace().nth(1).unwrap().to_string()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    // A different configuration must not be mixed into this run.
    let o = kws(out, &["--set", "train.learning_rate=0.001", "evaluate", "--model", "x_bow_cnn"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("refusing to mix"));
    ok(out, &["--set", "train.learning_rate=0.001", "evaluate", "--model", "de_vision_cnn"]);
    let o = kws(out, &["report"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("refusing to mix"));
}

#[test]
fn featurize_writes_frame_files_for_waveforms() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    for id in ["a", "b"] {
        write_tone(&data.join(format!("{id}.wav")), 16_000);
    }
    fs::write(
        data.join("manifest.jsonl"),
        "{\"id\":\"a\",\"split\":\"test\",\"wav_path\":\"a.wav\",\"translation\":[\"Hund\"]}\n\
         {\"id\":\"b\",\"split\":\"test\",\"wav_path\":\"b.wav\",\"translation\":[\"Katze\"]}\n",
    )
    .unwrap();
    fs::write(data.join("vocab.txt"), "Hund\nKatze\n").unwrap();
    let out = dir.path().join("out");
    let manifest = data.join("manifest.jsonl");
    let vocab = data.join("vocab.txt");
    let o = Command::new(env!("CARGO_BIN_EXE_kws"))
        .args(["--quiet", "--out", out.to_str().unwrap()])
        .args(["--set", &format!("manifest=\"{}\"", manifest.display())])
        .args(["--set", &format!("vocab=\"{}\"", vocab.display())])
        .arg("featurize")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("features/frames/a.kwsf").exists());
    let m = fs::read_to_string(out.join("features/manifest.jsonl")).unwrap();
    assert!(m.contains("frames_path") && !m.contains("wav_path"));
}

/// 1.5 s of a 440 Hz tone as 16-bit mono PCM.
fn write_tone(path: &Path, rate: u32) {
    let n = rate as usize * 3 / 2;
    let samples: Vec<i16> = (0..n)
        .map(|i| ((i as f32 * 440.0 * std::f32::consts::TAU / rate as f32).sin() * 8000.0) as i16)
        .collect();
    let data_len = (samples.len() * 2) as u32;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&(rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        b.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, b).unwrap();
}

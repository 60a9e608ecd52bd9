use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pssff::synth;
use pssff::FeatureMatrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pssff"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pssff")
}

fn write_wav(path: &Path, samples: &[f64], fs: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: fs,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let peak = samples
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for v in samples {
        w.write_sample((v / peak * 0.8 * 32767.0).round() as i16)
            .unwrap();
    }
    w.finalize().unwrap();
}

fn vowel_wav(dir: &Path, name: &str, f0: f64, secs: f64) -> PathBuf {
    let (s, _) = synth::vowel(16_000, f0, secs);
    let p = dir.join(name);
    write_wav(&p, s.samples(), 16_000);
    p
}

fn sorted_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn extract_seven_seconds_gives_three_segments() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = vowel_wav(tmp.path(), "utt.wav", 120.0, 7.0);
    let out = tmp.path().join("feat");
    let o = run(&[
        "extract",
        wav.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = sorted_files(&out, "sffm");
    assert_eq!(files.len(), 3);
    for f in &files {
        let m = FeatureMatrix::load(f).unwrap();
        assert_eq!((m.rows(), m.width()), (200, 1077));
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("3 feature files"), "{stdout}");
}

#[test]
fn extract_all_kinds_gives_nine_files() {
    let tmp = tempfile::tempdir().unwrap();
    vowel_wav(tmp.path(), "utt.wav", 150.0, 7.0);
    let out = tmp.path().join("feat");
    let o = run(&[
        "extract",
        tmp.path().to_str().unwrap(),
        "--kind",
        "all",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sorted_files(&out, "sffm").len(), 9);
}

#[test]
fn extract_empty_dir_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["extract", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no input files"));
}

#[test]
fn extract_unreadable_only_input_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.wav");
    std::fs::write(&bad, b"not a wav file").unwrap();
    let o = run(&[
        "extract",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("f").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gci_median_interval_matches_pitch() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = vowel_wav(tmp.path(), "v.wav", 120.0, 1.0);
    let o = run(&["gci", wav.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let gcis: Vec<usize> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    let mut d: Vec<usize> = gcis.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_unstable();
    let median = d[d.len() / 2] as f64 / 16_000.0;
    assert!((median * 120.0 - 1.0).abs() < 0.05, "median {median}");

    let s = run(&["gci", "--seconds", wav.to_str().unwrap()]);
    let first = String::from_utf8_lossy(&s.stdout)
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(first.split('.').nth(1).unwrap().len(), 6);
}

#[test]
fn render_writes_matching_images() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = vowel_wav(tmp.path(), "anger.wav", 200.0, 2.0);
    let out = tmp.path().join("img");
    let o = run(&[
        "render",
        wav.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let images = sorted_files(&out, "pgm");
    assert_eq!(images.len(), 2);
    let header = |p: &Path| {
        let bytes = std::fs::read(p).unwrap();
        let text = String::from_utf8_lossy(&bytes[..32]).into_owned();
        text.split_whitespace()
            .take(3)
            .collect::<Vec<_>>()
            .join(" ")
    };
    assert!(header(&images[0]).starts_with("P5 "));
    assert_eq!(header(&images[0]), header(&images[1]));
}

const BASELINE_CONFUSION: [[usize; 4]; 4] =
    [[11, 0, 0, 1], [9, 0, 11, 2], [20, 4, 59, 29], [0, 0, 8, 71]];

#[test]
fn evaluate_baseline_confusion_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let names = ["anger", "happy", "neutral", "sad"];
    let mut csv = String::from("id,label,predicted\n");
    let mut n = 0;
    for (l, row) in BASELINE_CONFUSION.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            for _ in 0..count {
                csv.push_str(&format!("u{n},{},{}\n", names[l], p));
                n += 1;
            }
        }
    }
    let path = tmp.path().join("pred.csv");
    std::fs::write(&path, csv).unwrap();
    let out = tmp.path().join("rep");
    let o = run(&[
        "evaluate",
        "--predictions",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("UWA 58.55"), "{stdout}");
    assert!(out.join("report.json").exists());
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = vowel_wav(tmp.path(), "utt.wav", 120.0, 4.0);
    let cfg = tmp.path().join("run.conf");
    std::fs::write(
        &cfg,
        "# two-second segments\nsegment_seconds = 2\nkind = stft\n",
    )
    .unwrap();
    let out = tmp.path().join("a");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "extract",
        wav.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = sorted_files(&out, "sffm");
    assert_eq!(files.len(), 2);
    assert!(files[0].to_string_lossy().ends_with("_stft.sffm"));

    let out = tmp.path().join("b");
    let o = run(&[
        "extract",
        "--config",
        cfg.to_str().unwrap(),
        wav.to_str().unwrap(),
        "--segment-seconds",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sorted_files(&out, "sffm").len(), 1);
}

#[test]
fn help_lists_defaults() {
    let o = run(&["extract", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "0.9394",
        "1077",
        "[default: 20]",
        "[default: 4000]",
        "[default: 3]",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
    let o = run(&["train", "--help"]);
    assert!(
        String::from_utf8_lossy(&o.stdout).contains("--patience <PATIENCE>  [default: 5]")
            || String::from_utf8_lossy(&o.stdout).contains("[default: 5]")
    );
}

#[test]
fn train_then_evaluate_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let audio = tmp.path().join("audio");
    std::fs::create_dir(&audio).unwrap();
    let mut manifest = String::from("id,path,label,session,speaker,improvised\n");
    let labels = ["anger", "happy", "neutral", "sad"];
    for (s, session) in ["s1", "s2"].iter().enumerate() {
        for speaker in ["f", "m"] {
            for (c, label) in labels.iter().enumerate() {
                let id = format!("{session}{speaker}_{c}");
                let f0 = 90.0 + 40.0 * c as f64 + 5.0 * s as f64;
                vowel_wav(&audio, &format!("{id}.wav"), f0, 1.0);
                manifest.push_str(&format!(
                    "{id},audio/{id}.wav,{label},{session},{session}{speaker},1\n"
                ));
            }
        }
    }
    let mpath = tmp.path().join("manifest.csv");
    std::fs::write(&mpath, manifest).unwrap();
    let feats = tmp.path().join("feat");
    let o = run(&[
        "extract",
        "--manifest",
        mpath.to_str().unwrap(),
        "--out",
        feats.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let train = |out: &Path| {
        run(&[
            "train",
            "--manifest",
            mpath.to_str().unwrap(),
            "--features",
            feats.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--fold",
            "0",
            "--epochs",
            "1",
            "--batch-size",
            "4",
            "--seed",
            "7",
        ])
    };
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    for dir in [&a, &b] {
        let o = train(dir);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("UWA"));
    }
    for name in [
        "fold0.sffn",
        "fold0_history.csv",
        "fold0_predictions.csv",
        "report.json",
        "report.txt",
    ] {
        assert!(a.join(name).exists(), "missing {name}");
    }
    assert_eq!(
        std::fs::read(a.join("fold0.sffn")).unwrap(),
        std::fs::read(b.join("fold0.sffn")).unwrap()
    );

    let o = run(&[
        "evaluate",
        "--checkpoint",
        a.join("fold0.sffn").to_str().unwrap(),
        "--manifest",
        mpath.to_str().unwrap(),
        "--features",
        feats.to_str().unwrap(),
        "--speakers",
        "s1m",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o2 = run(&[
        "evaluate",
        "--predictions",
        a.join("fold0_predictions.csv").to_str().unwrap(),
    ]);
    assert!(
        o2.status.success(),
        "{}",
        String::from_utf8_lossy(&o2.stderr)
    );
    let tail = |o: &Output| {
        let s = String::from_utf8_lossy(&o.stdout).into_owned();
        s.lines()
            .rev()
            .take(2)
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(tail(&o), tail(&o2));
}

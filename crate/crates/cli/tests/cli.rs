use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lcnn_core::graph::LayerSpec;
use lcnn_core::media::ImageRGB;
use lcnn_core::weights::zero_init;
use lcnn_core::{
    build_lcnn_default, forward, load_weights, save_weights, validate_config, HeadSpec,
    NetworkConfig,
};
use num_rational::Ratio;

fn lcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_frames(dir: &Path, names: &[&str]) -> PathBuf {
    let frames = dir.join("frames");
    fs::create_dir_all(&frames).unwrap();
    for (i, name) in names.iter().enumerate() {
        let img = ImageRGB::filled(16, 12, [40 * i as u8, 90, 200]).unwrap();
        fs::write(frames.join(name), img.to_ppm()).unwrap();
    }
    frames
}

/// 3x3 input, one unpadded 3x3 layer with 8 channels, tapped at its 1x1 output.
fn tiny_config() -> NetworkConfig {
    NetworkConfig {
        input_size: 3,
        input_channels: 3,
        layers: vec![LayerSpec::conventional(1, 8, 3, 1).with_padding(0)],
        tap_indices: [1].into(),
        num_classes: 21,
        priors_per_location: 6,
    }
}

/// Tiny-config weights where default box `prior` scores high for `class`.
fn tiny_fixture(dir: &Path, prior: usize, class: usize) -> (PathBuf, PathBuf) {
    let cfg = tiny_config();
    let mut store = zero_init(&cfg, &HeadSpec::for_config(&cfg)).unwrap();
    let mut bias = vec![0.0; 6 * 21];
    bias[prior * 21 + class] = 10.0;
    store.replace("head1.conf.bias", bias).unwrap();
    let (c, w) = (dir.join("tiny.json"), dir.join("tiny.lcnw"));
    fs::write(&c, cfg.to_json()).unwrap();
    save_weights(&store, &w).unwrap();
    (c, w)
}

#[test]
fn init_is_reproducible_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    assert!(lcnn(&["init", "--seed", "42", "--out", s(&paths[0])])
        .status
        .success());
    assert!(lcnn(&["init", "--seed", "42", "--out", s(&paths[1])])
        .status
        .success());
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap());

    assert!(lcnn(&["init", "--out", s(&paths[2])]).status.success());
    let explicit = dir.path().join("zero-seed");
    assert!(lcnn(&["init", "--seed", "0", "--out", s(&explicit)])
        .status
        .success());
    assert_eq!(fs::read(&paths[2]).unwrap(), fs::read(&explicit).unwrap());
    assert_ne!(fs::read(&paths[0]).unwrap(), fs::read(&paths[2]).unwrap());

    let cfg = build_lcnn_default();
    validate_config(&cfg).unwrap();
    let store = load_weights(&paths[0]).unwrap();
    let blank = lcnn_core::Tensor::zeros(3, 224, 224).unwrap();
    let out = forward(&cfg, &store, &blank).unwrap();
    assert!(out.final_output.is_finite());
}

#[test]
fn zero_weights_give_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["a.ppm"]);
    let w = dir.path().join("z.lcnw");
    assert!(lcnn(&["init", "--zero", "--out", s(&w)]).status.success());
    let out = dir.path().join("d.jsonl");
    let o = lcnn(&[
        "detect",
        "--weights",
        s(&w),
        "--frames",
        s(&frames),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), b"");
}

#[test]
fn class_filter_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["b.ppm", "a.ppm", "notes.txt"]);
    let (cfg, w) = tiny_fixture(dir.path(), 0, 7);
    let base = [
        "detect",
        "--weights",
        s(&w),
        "--config",
        s(&cfg),
        "--frames",
        s(&frames),
    ];

    let o = lcnn(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());

    let o = lcnn(&[&base[..], &["--all-classes"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["frame"], "a.ppm");
    assert_eq!(lines[1]["frame"], "b.ppm");
    for l in &lines {
        assert_eq!(l["class"], 7);
        let keys: Vec<&String> = l.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 7);
        // prior 0: aspect 1 at scale 0.2 centred in the single cell
        assert_eq!(l["xmin"].as_f64().unwrap(), 0.4);
        assert_eq!(l["xmax"].as_f64().unwrap(), 0.6);
    }
}

#[test]
fn person_detection_scores_against_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["a.ppm", "b.ppm", "c.ppm"]);
    let (cfg, w) = tiny_fixture(dir.path(), 0, 15);
    let gt = dir.path().join("gt.txt");
    fs::write(
        &gt,
        "a.ppm 15 0.4 0.4 0.6 0.6\nb.ppm 15 0.41 0.4 0.6 0.6\nc.ppm\n",
    )
    .unwrap();
    let o = lcnn(&[
        "detect",
        "--weights",
        s(&w),
        "--config",
        s(&cfg),
        "--frames",
        s(&frames),
        "--ground-truth",
        s(&gt),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
    assert!(stderr(&o).contains("fpr=33.333%"), "{}", stderr(&o));
}

#[test]
fn detect_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["x.ppm"]);
    let w = dir.path().join("w.lcnw");
    assert!(lcnn(&["init", "--seed", "3", "--out", s(&w)])
        .status
        .success());
    let run = || {
        let o = lcnn(&[
            "detect",
            "--weights",
            s(&w),
            "--frames",
            s(&frames),
            "--all-classes",
            "--threshold",
            "0.05",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        o.stdout
    };
    let first = run();
    assert!(!first.is_empty());
    assert_eq!(first, run());
}

#[test]
fn fake_clock_bench_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["a.ppm", "b.ppm"]);
    let (cfg, w) = tiny_fixture(dir.path(), 0, 15);
    let o = lcnn(&[
        "bench",
        "--weights",
        s(&w),
        "--config",
        s(&cfg),
        "--frames",
        s(&frames),
        "--duration",
        "2",
        "--fake-frame-ms",
        "500",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    // params 3*3*3*8 + 8*24 + 8*126 = 1416; peak activations max(27+8, 8+150) = 158
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "frames,seconds,fps_avg,fps_peak,param_bytes,peak_activation_bytes\n\
         4,2.000000,2.000000,2.000000,5664,632\n"
    );
}

#[test]
fn real_clock_bench_reports_positive_rate() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["a.ppm"]);
    let (cfg, w) = tiny_fixture(dir.path(), 0, 15);
    let o = lcnn(&[
        "bench",
        "--weights",
        s(&w),
        "--config",
        s(&cfg),
        "--frames",
        s(&frames),
        "--duration",
        "0.2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row.len(), 6);
    assert!(row[2] > 0.0 && row[3] >= row[2]);
}

#[test]
fn analyze_reports_every_layer_with_exact_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let o = lcnn(&["analyze", "--csv", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("total"))
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows.len(), 25);
    let mut ratios = 0;
    for r in &rows {
        if r[1] == "pointwise" {
            let n: u64 = r[4].parse().unwrap();
            let (num, den) = r[8].split_once('/').unwrap();
            let got = Ratio::new(num.parse::<u64>().unwrap(), den.parse().unwrap());
            assert_eq!(got, Ratio::new(1, n) + Ratio::new(1, 9), "row {r:?}");
            ratios += 1;
        }
    }
    assert_eq!(ratios, 12);
    assert!(text.contains("total: 25 conv layers, 514981376 macs"));

    let csv = fs::read_to_string(&csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("layer,kind,Dk,M,N,Df,macs,params"));
    assert_eq!(lines.count(), 25);
}

#[test]
fn analyze_custom_and_invalid_configs() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_fixture(dir.path(), 0, 15);
    let o = lcnn(&["analyze", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .contains("total: 1 conv layers, 216 macs, 216 params"));

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"layers":[{"index":1,"kind":"pointwise","out_channels":4},{"index":2,"kind":"depthwise","kernel":2}]}"#,
    )
    .unwrap();
    let o = lcnn(&["analyze", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layer 2"), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["a.ppm"]);
    let w = dir.path().join("w.lcnw");
    fs::write(&w, b"NOPE\x01\0\0\0\0\0\0\0").unwrap();
    let o = lcnn(&["detect", "--weights", s(&w), "--frames", s(&frames)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("byte 0"), "{}", stderr(&o));

    assert!(lcnn(&["init", "--zero", "--out", s(&w)]).status.success());
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = lcnn(&["detect", "--weights", s(&w), "--frames", s(&empty)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no .ppm"));

    let o = lcnn(&[
        "bench",
        "--weights",
        s(&w),
        "--frames",
        s(&frames),
        "--duration",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(lcnn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lcnn(&["detect", "--weights", s(&w)]).status.code(), Some(2));
}

#[test]
fn weights_for_other_taps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let frames = write_frames(dir.path(), &["a.ppm"]);
    let w = dir.path().join("w.lcnw");
    assert!(lcnn(&["init", "--zero", "--out", s(&w)]).status.success());
    let o = lcnn(&[
        "detect",
        "--weights",
        s(&w),
        "--frames",
        s(&frames),
        "--taps",
        "11,13,15,19",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("head19"), "{}", stderr(&o));
}

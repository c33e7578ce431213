use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use paintdet::codec::{dot_pixels, shrink_box, Image};
use paintdet::data::read_dataset;

const TINY: &str = r#"{
  "model": {"base_width": 8, "channel_mults": [1, 2], "res_blocks": 1, "embed_dim": 16},
  "train": {"lr": 1e-3},
  "diffusion": {"S": 3}
}"#;

fn paintdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paintdet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = paintdet(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn image(p: &Path) -> Image {
    Image::read_ppm(std::io::BufReader::new(fs::File::open(p).unwrap())).unwrap()
}

fn gen(dir: &Path, count: usize, config: Option<&Path>) {
    let count = count.to_string();
    let mut args = vec!["gen-data", "--out", s(dir), "--count", &count];
    if let Some(c) = config {
        args.extend(["--config", s(c)]);
    }
    ok(&args);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(paintdet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        paintdet(&["gen-data", "--count", "3"]).status.code(),
        Some(1)
    );
    assert_eq!(paintdet(&["--help"]).status.code(), Some(0));
    let help = ok(&["render", "--help"]);
    assert!(help.contains("--variant"));
}

#[test]
fn invalid_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"postproc": {"epsilon": 2}}"#).unwrap();
    let out = paintdet(&[
        "gen-data",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--count",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
    fs::write(&cfg, r#"{"codec": {"style": {"shrink_ratio": 0}}}"#).unwrap();
    assert_eq!(
        paintdet(&[
            "gen-data",
            "--config",
            s(&cfg),
            "--out",
            s(dir.path()),
            "--count",
            "1"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = paintdet(&["roundtrip", "--dataset", s(&dir.path().join("absent"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("index.json"));
    gen(&dir.path().join("ds"), 2, None);
    let out = paintdet(&[
        "detect",
        "--dataset",
        s(&dir.path().join("ds")),
        "--gen",
        s(&dir.path().join("nothing")),
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen(&a, 4, None);
    gen(&b, 4, None);
    for f in ["index.json", "images/000000.ppm", "images/000003.ppm"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn dots_are_the_only_difference_between_variants_c_and_d() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    gen(&ds, 5, None);
    for v in ["c", "d"] {
        ok(&[
            "render",
            "--dataset",
            s(&ds),
            "--out",
            s(&dir.path().join(v)),
            "--variant",
            v,
        ]);
    }
    let data = read_dataset(&ds).unwrap();
    for smp in &data.samples {
        let (c, d) = (
            image(&dir.path().join("c").join(&smp.file)),
            image(&dir.path().join("d").join(&smp.file)),
        );
        let dots: Vec<(usize, usize)> = smp
            .boxes
            .iter()
            .flat_map(|b| dot_pixels(&shrink_box(*b, 1.0 / 3.0), 2, 64, 64))
            .collect();
        let mut changed = 0;
        for y in 0..64 {
            for x in 0..64 {
                if c.get(x, y) != d.get(x, y) {
                    assert!(dots.contains(&(x, y)), "image {} pixel ({x},{y})", smp.id);
                    changed += 1;
                }
            }
        }
        assert!(changed > 0);
    }
}

#[test]
fn detect_and_eval_on_clean_renders() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, gen_dir, res) = (
        dir.path().join("ds"),
        dir.path().join("gen"),
        dir.path().join("r.json"),
    );
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"data": {"shrunk_gap_px": 1, "seed": 4}}"#).unwrap();
    gen(&ds, 10, Some(&cfg));
    ok(&["render", "--dataset", s(&ds), "--out", s(&gen_dir)]);
    ok(&[
        "detect",
        "--config",
        s(&cfg),
        "--dataset",
        s(&ds),
        "--gen",
        s(&gen_dir),
        "--out",
        s(&res),
        "--nms",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--dataset", s(&ds), "--results", s(&res)])).unwrap();
    assert_eq!(report["AP50"], 1.0);
    assert_eq!(report["AP@0.90"], 1.0);
    let table = ok(&["eval", "--dataset", s(&ds), "--results", s(&res), "--table"]);
    assert_eq!(table.lines().count(), 2);
    assert!(table.contains("AP50"));
}

#[test]
fn roundtrip_reports_metrics_and_shrink_override() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    gen(&ds, 6, None);
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["roundtrip", "--dataset", s(&ds), "--shrink", "0.5"])).unwrap();
    assert_eq!(v["shrink_ratio"], 0.5);
    for k in [
        "AP",
        "AP50",
        "AP75",
        "AP_s",
        "AP_m",
        "AP_l",
        "recall@0.5",
        "mMR",
        "AP@0.90",
    ] {
        assert!(v["metrics"][k].is_number(), "{k}");
    }
    assert_eq!(
        paintdet(&["roundtrip", "--dataset", s(&ds), "--shrink", "1.5"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn train_and_infer_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = p.join("c.json");
    fs::write(&cfg, TINY).unwrap();
    gen(&p.join("ds"), 3, None);
    for run in ["a", "b"] {
        let ckpt = p.join(format!("{run}.ckpt"));
        ok(&[
            "train",
            "--config",
            s(&cfg),
            "--dataset",
            s(&p.join("ds")),
            "--out",
            s(&ckpt),
            "--steps",
            "4",
        ]);
        ok(&[
            "infer",
            "--config",
            s(&cfg),
            "--ckpt",
            s(&ckpt),
            "--dataset",
            s(&p.join("ds")),
            "--out",
            s(&p.join(run)),
            "--seed",
            "7",
        ]);
    }
    assert_eq!(
        fs::read(p.join("a.ckpt")).unwrap(),
        fs::read(p.join("b.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(p.join("a/images/000002.ppm")).unwrap(),
        fs::read(p.join("b/images/000002.ppm")).unwrap()
    );
    let strip = |f: &str| -> Vec<serde_json::Value> {
        fs::read_to_string(p.join(f))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_ms");
                v
            })
            .collect()
    };
    let log = strip("a.ckpt.jsonl");
    assert_eq!(log.len(), 4);
    assert_eq!(log, strip("b.ckpt.jsonl"));
    assert!(log.iter().all(|r| r["loss"].is_number() && r["t"].is_u64()));
    ok(&[
        "infer",
        "--config",
        s(&cfg),
        "--ckpt",
        s(&p.join("a.ckpt")),
        "--dataset",
        s(&p.join("ds")),
        "--out",
        s(&p.join("c")),
        "--seed",
        "8",
    ]);
    assert_ne!(
        fs::read(p.join("a/images/000002.ppm")).unwrap(),
        fs::read(p.join("c/images/000002.ppm")).unwrap()
    );
}

#[test]
fn divergent_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = p.join("c.json");
    fs::write(&cfg, TINY.replace("1e-3", "1e30")).unwrap();
    gen(&p.join("ds"), 2, None);
    let out = paintdet(&[
        "train",
        "--config",
        s(&cfg),
        "--dataset",
        s(&p.join("ds")),
        "--out",
        s(&p.join("m")),
        "--steps",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    assert!(!p.join("m").exists());
}

#[test]
fn corrupt_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.ckpt"), b"not a checkpoint").unwrap();
    gen(&p.join("ds"), 1, None);
    let out = paintdet(&[
        "infer",
        "--ckpt",
        s(&p.join("bad.ckpt")),
        "--dataset",
        s(&p.join("ds")),
        "--out",
        s(&p.join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

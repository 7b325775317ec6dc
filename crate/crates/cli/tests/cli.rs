use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use parkslot::decode::{encode, write_raw_prediction, HeadSpec, RawPrediction};
use parkslot::{PolygonSlot, SlotType};

const GT: &str = "[[-1,1],[1,1],[-1,-1],[1,-1]]";
const PRED: &str = "[[-0.5,1],[1.5,1],[-0.5,-1],[1.5,-1]]";

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parkslot"))
        .args(args)
        .output()
        .expect("spawn parkslot")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Value of a `key value` line in command output.
fn field(o: &Output, key: &str) -> f64 {
    let out = stdout(o);
    let line = out
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{out}"));
    line.split_whitespace().next().unwrap().parse().unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn topview_args(out: &Path, images: &[String]) -> Vec<String> {
    let mut v = vec![
        "topview".to_string(),
        "--rig".into(),
        fixture("rig.toml").display().to_string(),
    ];
    v.extend(images.iter().cloned());
    v.extend(["--out".into(), out.display().to_string()]);
    v
}

fn fixture_images() -> Vec<String> {
    ["front.png", "rear.png", "left.png", "right.png"]
        .iter()
        .map(|n| fixture(n).display().to_string())
        .collect()
}

#[test]
fn topview_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("top.png");
    let o = run(&topview_args(&out, &fixture_images()));
    ok(&o);
    let got = image::open(&out).unwrap().to_rgb8();
    let want = image::open(fixture("topview_golden.png"))
        .unwrap()
        .to_rgb8();
    assert_eq!(got.dimensions(), (640, 640));
    assert!(got == want, "topview differs from the golden image");
    assert_eq!(field(&o, "meters_per_pixel"), 0.039062);
}

#[test]
fn topview_spec_flag_sets_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("small.png");
    let mut args = topview_args(&out, &fixture_images());
    args.extend(["--spec".into(), "320x320:12.5".into()]);
    ok(&run(&args));
    assert_eq!(
        image::open(&out).unwrap().to_rgb8().dimensions(),
        (320, 320)
    );
}

#[test]
fn topview_missing_camera_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("top.png");
    let mut images = fixture_images();
    images[2] = dir.path().join("no_such_left.png").display().to_string();
    let o = run(&topview_args(&out, &images));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_left.png"));
    assert!(
        std::fs::read_dir(dir.path()).unwrap().next().is_none(),
        "nothing may be written on failure"
    );
}

#[test]
fn loss_outputs() {
    let o = run(&["loss", "--gt", GT, "--pred", PRED]);
    ok(&o);
    assert!((field(&o, "total") - 1.0417).abs() < 1e-4);
    assert_eq!(field(&o, "giou_term"), 0.666667);
    assert_eq!(field(&o, "dist_term"), 0.5);
    assert_eq!(
        stdout(&o)
            .lines()
            .find(|l| l.starts_with("gradient"))
            .unwrap()
            .split_whitespace()
            .count(),
        9
    );

    let o = run(&["loss", "--gt", GT, "--pred", GT]);
    ok(&o);
    assert_eq!(field(&o, "total"), 0.0);

    let o = run(&["loss", "--gt", GT, "--pred", PRED, "--w-dist", "0"]);
    ok(&o);
    assert_eq!(field(&o, "total"), field(&o, "giou_term"));

    assert_eq!(
        run(&["loss", "--gt", "[[0,0],[1,0]]", "--pred", PRED])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["loss", "--gt", "[[0,0],[1,0],[1,1],[0,1]]", "--pred", PRED])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["loss", "--gt", GT, "--pred", PRED, "--w-giou", "-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn fit_converges_on_translated_square() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = run(&[
        "fit",
        "--gt",
        GT,
        "--init",
        PRED,
        "--steps",
        "500",
        "--trace",
        s(&trace),
    ]);
    ok(&o);
    assert_eq!(field(&o, "steps"), 500.0);
    assert!(field(&o, "final_loss") < 1e-3);
    assert_eq!(
        std::fs::read_to_string(&trace).unwrap().lines().count(),
        502
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn render_probes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("in.png");
    image::RgbImage::from_pixel(200, 200, image::Rgb([30, 30, 30]))
        .save(&img)
        .unwrap();

    let empty = write(dir.path(), "empty.ann", "");
    let out = dir.path().join("empty.png");
    ok(&run(&[
        "render",
        "--image",
        s(&img),
        "--annotations",
        s(&empty),
        "--out",
        s(&out),
    ]));
    assert_eq!(
        image::open(&out).unwrap().to_rgb8(),
        image::open(&img).unwrap().to_rgb8()
    );

    let ann = write(
        dir.path(),
        "one.ann",
        "frame - - in.png\nslot perpendicular 60 60 140 60 60 140 140 140 0.9\n",
    );
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    for out in [&a, &b] {
        ok(&run(&[
            "render",
            "--image",
            s(&img),
            "--annotations",
            s(&ann),
            "--out",
            s(out),
        ]));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let r = image::open(&a).unwrap().to_rgb8();
    assert_eq!(r.get_pixel(100, 60).0, [0, 255, 0]);
    for (x, y) in [(60, 100), (140, 100), (100, 140)] {
        assert_eq!(r.get_pixel(x, y).0, [0, 0, 255]);
    }

    let far = write(
        dir.path(),
        "far.ann",
        "frame - - in.png\nslot parallel -5000 60 5000 60 -5000 9000 5000 9000\n",
    );
    let o = run(&[
        "render",
        "--image",
        s(&img),
        "--annotations",
        s(&far),
        "--out",
        s(&dir.path().join("far.png")),
    ]);
    ok(&o);
    assert_eq!(field(&o, "clipped"), 1.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("clipped"));
}

fn square(x: f64, y: f64, conf: f64) -> PolygonSlot<f64> {
    PolygonSlot::from_xy(
        [[x, y], [x + 40.0, y], [x, y + 80.0], [x + 40.0, y + 80.0]],
        SlotType::Perpendicular,
    )
    .unwrap()
    .with_confidence(conf)
}

#[test]
fn decode_then_eval_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let slots = vec![
        square(100.0, 100.0, 0.9),
        square(300.0, 200.0, 0.8),
        square(500.0, 400.0, 0.7),
    ];
    let tensor = dir.path().join("head.bin");
    write_raw_prediction(&tensor, &encode(&slots, HeadSpec::default()).unwrap()).unwrap();

    let det = dir.path().join("det.ann");
    let o = run(&[
        "decode",
        "--tensor",
        s(&tensor),
        "--image-path",
        "frame0.png",
        "--out",
        s(&det),
    ]);
    ok(&o);
    assert_eq!(field(&o, "detections"), 3.0);

    let gt = parkslot::dataset::LabeledFrame::new(
        "frame0.png",
        slots.iter().map(|s| s.with_confidence(1.0)).collect(),
    );
    let gt_path = dir.path().join("gt.ann");
    parkslot::dataset::write_annotations(&gt_path, &[gt]).unwrap();
    let json = dir.path().join("report.json");
    let o = run(&[
        "eval",
        "--gt",
        s(&gt_path),
        "--pred",
        s(&det),
        "--json",
        s(&json),
    ]);
    ok(&o);
    for k in ["precision", "recall", "f1", "map_50"] {
        assert_eq!(field(&o, k), 1.0, "{k}");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["tp"], 3);
}

#[test]
fn decode_all_negative_objectness_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let head = HeadSpec::default();
    let raw = RawPrediction::new(head, vec![-20.0f64; head.len()]).unwrap();
    let tensor = dir.path().join("neg.bin");
    write_raw_prediction(&tensor, &raw).unwrap();
    let det = dir.path().join("det.ann");
    let o = run(&["decode", "--tensor", s(&tensor), "--out", s(&det)]);
    ok(&o);
    assert_eq!(field(&o, "detections"), 0.0);
    let frames = parkslot::dataset::read_annotations::<f64>(&det).unwrap();
    assert_eq!(frames.len(), 1);
    assert!(frames[0].slots.is_empty());
}

#[test]
fn eval_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "gt.ann",
        "frame - - a.png\nslot perpendicular 0 0 10 0 0 20 10 20\nframe - - b.png\nslot parallel 50 50 90 50 50 70 90 70\n",
    );
    let o = run(&["eval", "--gt", s(&ann), "--pred", s(&ann)]);
    ok(&o);
    for k in [
        "precision",
        "recall",
        "f1",
        "map_50",
        "map_50_95",
        "entrance_accuracy",
    ] {
        assert_eq!(field(&o, k), 1.0, "{k}");
    }
}

#[test]
fn invalid_flags_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "gt.ann",
        "frame - - a.png\nslot perpendicular 0 0 10 0 0 20 10 20\n",
    );
    let json = dir.path().join("report.json");
    let o = run(&[
        "eval",
        "--gt",
        s(&ann),
        "--pred",
        s(&ann),
        "--conf",
        "2",
        "--json",
        s(&json),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!json.exists());
    let o = run(&[
        "nms",
        "--input",
        s(&dir.path().join("missing.ann")),
        "--out",
        s(&dir.path().join("x.ann")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn nms_drops_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "det.ann",
        "frame - - a.png\nslot perpendicular 0 0 10 0 0 20 10 20 0.9\nslot perpendicular 1 0 11 0 1 20 11 20 0.8\nslot perpendicular 50 0 60 0 50 20 60 20 0.3\n",
    );
    let out = dir.path().join("kept.ann");
    let o = run(&[
        "nms",
        "--input",
        s(&ann),
        "--threshold",
        "0.5",
        "--out",
        s(&out),
    ]);
    ok(&o);
    assert_eq!(field(&o, "kept"), 2.0);
    let kept = parkslot::dataset::read_annotations::<f64>(&out).unwrap();
    let confs: Vec<f64> = kept[0].slots.iter().map(|s| s.confidence).collect();
    assert_eq!(confs, vec![0.9, 0.3]);
}

#[test]
fn augment_is_seeded_and_flips_invert() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("top.png");
    let mut raster = image::RgbImage::new(640, 640);
    for (x, y, p) in raster.enumerate_pixels_mut() {
        *p = image::Rgb([(x % 256) as u8, (y % 256) as u8, 128]);
    }
    raster.save(&img).unwrap();
    let text = "frame - - top.png\nslot perpendicular 200 200 280 200 200 360 280 360\n";
    let ann = write(dir.path(), "top.ann", text);

    let outs: Vec<(PathBuf, PathBuf)> = (0..2)
        .map(|k| {
            (
                dir.path().join(format!("o{k}.png")),
                dir.path().join(format!("o{k}.ann")),
            )
        })
        .collect();
    for (oi, oa) in &outs {
        let o = run(&[
            "augment",
            "--image",
            s(&img),
            "--annotations",
            s(&ann),
            "--seed",
            "7",
            "--out-image",
            s(oi),
            "--out-annotations",
            s(oa),
        ]);
        ok(&o);
    }
    assert_eq!(
        std::fs::read(&outs[0].0).unwrap(),
        std::fs::read(&outs[1].0).unwrap()
    );
    let strip = |p: &Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&outs[0].1), strip(&outs[1].1));

    let (fi, fa) = (dir.path().join("f.png"), dir.path().join("f.ann"));
    let o = run(&[
        "augment",
        "--image",
        s(&img),
        "--annotations",
        s(&ann),
        "--op",
        "flip-lr",
        "--op",
        "flip-lr",
        "--out-image",
        s(&fi),
        "--out-annotations",
        s(&fa),
    ]);
    ok(&o);
    assert_eq!(image::open(&fi).unwrap().to_rgb8(), raster);
    assert_eq!(strip(&fa), text.lines().nth(1).unwrap());
}

#[test]
fn convert_ps20_builds_polygons() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "ps.txt",
        "image 0001.jpg\n200 300 350 300 90 perpendicular\n",
    );
    let out = dir.path().join("ps.ann");
    let o = run(&["convert-ps20", "--input", s(&input), "--out", s(&out)]);
    ok(&o);
    assert_eq!(field(&o, "slots"), 1.0);
    let frames = parkslot::dataset::read_annotations::<f64>(&out).unwrap();
    let slot = frames[0].slots[0];
    // 5 m at 60 px/m
    assert!((slot.corners[0].distance(slot.corners[2]) - 300.0).abs() < 1e-9);
}

#[test]
fn every_subcommand_has_help() {
    for cmd in [
        "topview",
        "render",
        "loss",
        "fit",
        "decode",
        "nms",
        "augment",
        "eval",
        "convert-ps20",
    ] {
        let o = run(&[cmd, "--help"]);
        ok(&o);
        assert!(stdout(&o).contains("Usage"), "{cmd}");
    }
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

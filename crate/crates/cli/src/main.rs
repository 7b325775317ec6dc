//! `parkslot`: command-line drivers for the parking-slot toolkit.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
//! Outputs are written only when the whole command succeeds.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use parkslot::dataset::{self, AugmentConfig, AugmentOp, LabeledFrame, Ps20Config};
use parkslot::decode::{self, DEFAULT_CONF_THRESHOLD, DEFAULT_NMS_THRESHOLD};
use parkslot::eval::{self, EvalFrame, EvalOptions};
use parkslot::ipm::{self, TopviewSpec};
use parkslot::loss::{self, FitOptions, LossOptions, LossWeights};
use parkslot::render::{self, OverlayStyle};
use parkslot::{Error, Rig};

use crate::io::{
    invalid, load_image, parse_color, parse_slot, png_bytes, slot_json, Invalid, Outputs,
};

#[derive(Parser)]
#[command(name = "parkslot", version, about = "Parking-slot detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch the surround-view camera images into one topview PNG.
    Topview(TopviewArgs),
    /// Draw slot polygons, entrance lines, angles and confidences on an image.
    Render(RenderArgs),
    /// Print the polygon regression loss between two slots.
    Loss(LossArgs),
    /// Fit a slot to a ground-truth slot by gradient descent on the loss.
    Fit(FitArgs),
    /// Decode a raw detection-head tensor into slots.
    Decode(DecodeArgs),
    /// Apply polygon non-maximum suppression to a detection file.
    Nms(NmsArgs),
    /// Augment a labeled topview image (flips, rotation, HSV).
    Augment(AugmentArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Convert PS2.0 entrance-marking labels to polygon annotations.
    ConvertPs20(Ps20Args),
}

#[derive(Args)]
struct TopviewArgs {
    /// Rig calibration (TOML).
    #[arg(long)]
    rig: PathBuf,
    /// Camera images, one per rig camera, in the order the rig lists them.
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Output raster as WIDTHxHEIGHT:METERS (pixels, pixels, ground width in m).
    #[arg(long, default_value = "640x640:25")]
    spec: String,
    /// Output PNG.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Topview image to draw on.
    #[arg(long)]
    image: PathBuf,
    /// Annotation or detection file with slots in image pixels.
    #[arg(long)]
    annotations: PathBuf,
    /// Index of the frame in the annotation file to draw.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Polygon color (RRGGBB or r,g,b).
    #[arg(long, default_value = "0000ff", value_parser = parse_color)]
    polygon_color: [u8; 3],
    /// Entrance line and angle label color (RRGGBB or r,g,b).
    #[arg(long, default_value = "00ff00", value_parser = parse_color)]
    entrance_color: [u8; 3],
    /// Confidence label color (RRGGBB or r,g,b).
    #[arg(long, default_value = "0000ff", value_parser = parse_color)]
    text_color: [u8; 3],
    /// Line width [px].
    #[arg(long, default_value_t = 2)]
    line_width: u32,
    /// Label glyph scale [px per glyph cell; glyphs are 3x5 cells].
    #[arg(long, default_value_t = 2)]
    text_scale: u32,
    /// Output PNG.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct WeightArgs {
    /// Weight of the corner-GIoU term [unitless].
    #[arg(long, default_value_t = 1.0)]
    w_giou: f64,
    /// Weight of the corner-distance term [unitless].
    #[arg(long, default_value_t = 0.75)]
    w_dist: f64,
    /// Corner distances are divided by this [coordinate units, e.g. px].
    #[arg(long, default_value_t = 1.0)]
    distance_scale: f64,
}

impl WeightArgs {
    fn weights(&self) -> Result<LossWeights<f64>> {
        Ok(LossWeights::new(self.w_giou, self.w_dist)?)
    }

    fn options(&self) -> Result<LossOptions<f64>> {
        if !(self.distance_scale.is_finite() && self.distance_scale > 0.0) {
            return Err(invalid(format!(
                "--distance-scale {} must be > 0",
                self.distance_scale
            )));
        }
        Ok(LossOptions {
            distance_scale: self.distance_scale,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct LossArgs {
    /// Ground-truth slot literal (JSON corners EL, ER, EndL, EndR; `@file` reads a file).
    #[arg(long)]
    gt: String,
    /// Predicted slot literal (same format as --gt).
    #[arg(long)]
    pred: String,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Ground-truth slot literal (JSON; `@file` reads a file).
    #[arg(long)]
    gt: String,
    /// Initial slot literal.
    #[arg(long)]
    init: String,
    /// Gradient steps.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Learning rate [coordinate units per unit gradient].
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Heavy-ball momentum in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Take every step even if it increases the loss.
    #[arg(long)]
    no_backtrack: bool,
    /// Optional CSV trace: step, total, giou_term, dist_term, lr.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args)]
struct DecodeArgs {
    /// Raw head tensor (little-endian f32).
    #[arg(long)]
    tensor: PathBuf,
    /// Tensor header (TOML); defaults to `<tensor>.toml`.
    #[arg(long)]
    head: Option<PathBuf>,
    /// Minimum confidence (objectness x class probability) in [0, 1].
    #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
    conf: f64,
    /// NMS IoU threshold in [0, 1].
    #[arg(long, default_value_t = DEFAULT_NMS_THRESHOLD)]
    nms: f64,
    /// Skip non-maximum suppression.
    #[arg(long)]
    no_nms: bool,
    /// Image path recorded in the output frame; defaults to the tensor path.
    #[arg(long)]
    image_path: Option<String>,
    /// Output detection file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct NmsArgs {
    /// Detection file.
    #[arg(long)]
    input: PathBuf,
    /// IoU threshold in [0, 1]; a candidate is suppressed when IoU exceeds it.
    #[arg(long, default_value_t = DEFAULT_NMS_THRESHOLD)]
    threshold: f64,
    /// Output detection file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Topview image.
    #[arg(long)]
    image: PathBuf,
    /// Annotation file.
    #[arg(long)]
    annotations: PathBuf,
    /// Index of the frame in the annotation file that labels --image.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// RNG seed for the random policy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit operation instead of the random policy (repeatable):
    /// flip-lr, flip-ud, rotate:DEG, hsv:DH,DS,DV.
    #[arg(long = "op", value_parser = parse_op)]
    ops: Vec<AugmentOp<f64>>,
    /// Probability of a left-right flip.
    #[arg(long, default_value_t = 0.5)]
    flip_lr_prob: f64,
    /// Probability of an upside-down flip.
    #[arg(long, default_value_t = 0.5)]
    flip_ud_prob: f64,
    /// Largest random rotation [deg].
    #[arg(long, default_value_t = 25.0)]
    max_rotation: f64,
    /// Keep rotated slots reaching at most this far outside the raster [fraction of raster size].
    #[arg(long, default_value_t = 0.1)]
    keep_margin: f64,
    /// Output image (PNG).
    #[arg(long)]
    out_image: PathBuf,
    /// Output annotation file.
    #[arg(long)]
    out_annotations: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth annotation file.
    #[arg(long)]
    gt: PathBuf,
    /// Detection file; frames are paired with ground truth by image path.
    #[arg(long)]
    pred: PathBuf,
    /// Confidence threshold for precision/recall/F1 in [0, 1].
    #[arg(long, default_value_t = 0.25)]
    conf: f64,
    /// IoU threshold for precision/recall/F1 in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Entrance-angle tolerance [deg].
    #[arg(long, default_value_t = 5.0)]
    angle_tol: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct Ps20Args {
    /// PS2.0 marking-point label file.
    #[arg(long)]
    input: PathBuf,
    /// Output annotation file.
    #[arg(long, short)]
    out: PathBuf,
    /// Image scale [px/m].
    #[arg(long, default_value_t = 60.0)]
    pixels_per_meter: f64,
    /// Square image size [px].
    #[arg(long, default_value_t = 600)]
    image_size: u32,
    /// Depth of perpendicular slots [m].
    #[arg(long, default_value_t = 5.0)]
    perpendicular_m: f64,
    /// Depth of parallel slots [m].
    #[arg(long, default_value_t = 2.5)]
    parallel_m: f64,
    /// Depth of diagonal slots [m].
    #[arg(long, default_value_t = 5.0)]
    diagonal_m: f64,
}

fn parse_op(s: &str) -> std::result::Result<AugmentOp<f64>, String> {
    let nums = |v: &str, n: usize| -> std::result::Result<Vec<f64>, String> {
        let out: Vec<f64> = v
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("`{s}`: {e}"))?;
        if out.len() != n || out.iter().any(|x| !x.is_finite()) {
            return Err(format!("`{s}` needs {n} finite number(s)"));
        }
        Ok(out)
    };
    match s.split_once(':') {
        None if s == "flip-lr" => Ok(AugmentOp::FlipLr),
        None if s == "flip-ud" => Ok(AugmentOp::FlipUd),
        Some(("rotate", v)) => Ok(AugmentOp::Rotate {
            degrees: nums(v, 1)?[0],
        }),
        Some(("hsv", v)) => {
            let v = nums(v, 3)?;
            Ok(AugmentOp::Hsv {
                dh: v[0],
                ds: v[1],
                dv: v[2],
            })
        }
        _ => Err(format!(
            "unknown operation `{s}` (flip-lr, flip-ud, rotate:DEG, hsv:DH,DS,DV)"
        )),
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("{name} {v} must be in [0, 1]")));
    }
    Ok(())
}

fn topview(a: TopviewArgs) -> Result<()> {
    let spec: TopviewSpec<f64> = a.spec.parse()?;
    let rig = Rig::load(&a.rig)?;
    if a.images.len() != rig.cameras.len() {
        return Err(invalid(format!(
            "rig has {} cameras ({}), got {} images",
            rig.cameras.len(),
            rig.cameras
                .iter()
                .map(|c| c.name.as_str())
                .collect::<Vec<_>>()
                .join(", "),
            a.images.len()
        )));
    }
    let images = a
        .images
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    let table = ipm::build_remap_table(&rig, &spec)?;
    for w in &table.warnings {
        log::warn!("{w}");
    }
    let img = ipm::synthesize_topview(&table, &images)?;
    let mut out = Outputs::default();
    out.stage(&a.out, &png_bytes(&img)?)?;
    out.commit()?;
    println!("size {}x{}", img.width(), img.height());
    println!("meters_per_pixel {:.6}", spec.meters_per_pixel());
    println!("coverage {:.6}", table.covered_fraction());
    Ok(())
}

fn pick_frame(
    frames: &[LabeledFrame<f64>],
    index: usize,
    path: &Path,
) -> Result<Option<LabeledFrame<f64>>> {
    if frames.is_empty() {
        return Ok(None);
    }
    frames.get(index).cloned().map(Some).ok_or_else(|| {
        invalid(format!(
            "{}: frame {index} requested, file has {}",
            path.display(),
            frames.len()
        ))
    })
}

fn render(a: RenderArgs) -> Result<()> {
    let mut img = load_image(&a.image)?;
    let frames = dataset::read_annotations::<f64>(&a.annotations)?;
    let slots = pick_frame(&frames, a.frame, &a.annotations)?
        .map(|f| f.slots)
        .unwrap_or_default();
    let style = OverlayStyle {
        polygon: a.polygon_color,
        entrance: a.entrance_color,
        text: a.text_color,
        line_width: a.line_width,
        text_scale: a.text_scale,
    };
    let report = render::draw_slots(&mut img, &slots, &style);
    if report.clipped > 0 {
        log::warn!(
            "{} of {} slots extend outside the {}x{} raster and were clipped",
            report.clipped,
            report.slots,
            img.width(),
            img.height()
        );
    }
    let mut out = Outputs::default();
    out.stage(&a.out, &png_bytes(&img)?)?;
    out.commit()?;
    println!("slots {}", report.slots);
    println!("clipped {}", report.clipped);
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn loss_cmd(a: LossArgs) -> Result<()> {
    let gt = parse_slot(&a.gt)?;
    let pred = parse_slot(&a.pred)?;
    let b = loss::polygon_loss_with(&pred, &gt, &a.weights.weights()?, &a.weights.options()?)?;
    println!("giou_term {:.6}", b.giou_term);
    println!("dist_term {:.6}", b.dist_term);
    println!("total {:.6}", b.total);
    println!("gradient {}", join(&b.gradient));
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let gt = parse_slot(&a.gt)?;
    let init = parse_slot(&a.init)?;
    let opts = FitOptions {
        steps: a.steps,
        lr: a.lr,
        momentum: a.momentum,
        backtrack: !a.no_backtrack,
        loss: a.weights.options()?,
    };
    let traj = loss::fit_polygon(&gt, &init, &a.weights.weights()?, &opts)?;
    let last = traj.last().expect("trajectory holds the initial state");
    if let Some(path) = &a.trace {
        let mut csv = String::from("step,total,giou_term,dist_term,lr\n");
        for (i, s) in traj.iter().enumerate() {
            csv += &format!(
                "{i},{:.6},{:.6},{:.6},{:.6}\n",
                s.loss.total, s.loss.giou_term, s.loss.dist_term, s.lr
            );
        }
        let mut out = Outputs::default();
        out.stage(path, csv.as_bytes())?;
        out.commit()?;
    }
    println!("steps {}", traj.len() - 1);
    println!("initial_loss {:.6}", traj[0].loss.total);
    println!("final_loss {:.6}", last.loss.total);
    println!(
        "corner_max_error {:.6}",
        loss::corner_max_error(&last.slot, &gt)
    );
    println!("slot {}", slot_json(&last.slot));
    Ok(())
}

fn decode_cmd(a: DecodeArgs) -> Result<()> {
    unit_interval("--conf", a.conf)?;
    unit_interval("--nms", a.nms)?;
    let head = decode::read_head_spec(
        a.head
            .clone()
            .unwrap_or_else(|| decode::header_path(&a.tensor)),
    )?;
    let raw = decode::read_raw_prediction::<f64>(&a.tensor, head)?;
    let decoded = decode::decode(&raw, a.conf)?;
    let candidates = decoded.slots.len();
    let slots = if a.no_nms {
        decoded.slots
    } else {
        decode::polygon_nms(&decoded.slots, a.nms)?
    };
    if decoded.invalid > 0 {
        log::warn!(
            "{} candidates above threshold had invalid geometry and were dropped",
            decoded.invalid
        );
    }
    let path = a
        .image_path
        .unwrap_or_else(|| a.tensor.display().to_string());
    let frame = LabeledFrame::new(path, slots);
    let mut out = Outputs::default();
    out.stage(
        &a.out,
        dataset::format_annotations(std::slice::from_ref(&frame)).as_bytes(),
    )?;
    out.commit()?;
    println!("candidates {candidates}");
    println!("invalid {}", decoded.invalid);
    println!("detections {}", frame.slots.len());
    Ok(())
}

fn nms(a: NmsArgs) -> Result<()> {
    unit_interval("--threshold", a.threshold)?;
    let mut frames = dataset::read_annotations::<f64>(&a.input)?;
    let (mut before, mut after) = (0, 0);
    for f in &mut frames {
        before += f.slots.len();
        f.slots = decode::polygon_nms(&f.slots, a.threshold)?;
        after += f.slots.len();
    }
    let mut out = Outputs::default();
    out.stage(&a.out, dataset::format_annotations(&frames).as_bytes())?;
    out.commit()?;
    println!("frames {}", frames.len());
    println!("input {before}");
    println!("kept {after}");
    Ok(())
}

fn describe(op: &AugmentOp<f64>) -> String {
    match op {
        AugmentOp::FlipLr => "flip-lr".into(),
        AugmentOp::FlipUd => "flip-ud".into(),
        AugmentOp::Rotate { degrees } => format!("rotate:{degrees:.6}"),
        AugmentOp::Hsv { dh, ds, dv } => format!("hsv:{dh:.6},{ds:.6},{dv:.6}"),
    }
}

fn augment(a: AugmentArgs) -> Result<()> {
    unit_interval("--flip-lr-prob", a.flip_lr_prob)?;
    unit_interval("--flip-ud-prob", a.flip_ud_prob)?;
    if !(a.max_rotation.is_finite() && a.keep_margin.is_finite() && a.keep_margin >= 0.0) {
        return Err(invalid(
            "--max-rotation and --keep-margin must be finite, --keep-margin >= 0",
        ));
    }
    let img = load_image(&a.image)?;
    let frames = dataset::read_annotations::<f64>(&a.annotations)?;
    let frame = pick_frame(&frames, a.frame, &a.annotations)?
        .ok_or_else(|| invalid(format!("{}: no frames", a.annotations.display())))?;
    let (mut frame, out_img, ops) = if a.ops.is_empty() {
        let cfg = AugmentConfig {
            flip_lr_prob: a.flip_lr_prob,
            flip_ud_prob: a.flip_ud_prob,
            max_rotation_deg: a.max_rotation,
            keep_margin: a.keep_margin,
            ..Default::default()
        };
        dataset::augment_random(&frame, &img, &cfg, a.seed)?
    } else {
        let (mut f, mut im) = (frame, img);
        for op in &a.ops {
            (f, im) = dataset::augment(&f, &im, op, a.keep_margin)?;
        }
        (f, im, a.ops.clone())
    };
    frame.image_path = a.out_image.display().to_string();
    let mut out = Outputs::default();
    out.stage(&a.out_image, &png_bytes(&out_img)?)?;
    out.stage(
        &a.out_annotations,
        dataset::format_annotations(std::slice::from_ref(&frame)).as_bytes(),
    )?;
    out.commit()?;
    for op in &ops {
        println!("op {}", describe(op));
    }
    println!("slots {}", frame.slots.len());
    Ok(())
}

/// Pairs frames by image path. Detection frames without ground truth count
/// as frames with no slots, and vice versa.
fn pair_frames(
    gt: Vec<LabeledFrame<f64>>,
    pred: Vec<LabeledFrame<f64>>,
) -> Result<Vec<EvalFrame<f64>>> {
    let mut out: Vec<(String, EvalFrame<f64>)> = Vec::new();
    for f in gt {
        if out.iter().any(|(p, _)| *p == f.image_path) {
            return Err(invalid(format!(
                "ground truth lists `{}` twice",
                f.image_path
            )));
        }
        out.push((
            f.image_path,
            EvalFrame {
                preds: Vec::new(),
                gts: f.slots,
            },
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for f in pred {
        if !seen.insert(f.image_path.clone()) {
            return Err(invalid(format!("detections list `{}` twice", f.image_path)));
        }
        match out.iter_mut().find(|(p, _)| *p == f.image_path) {
            Some((_, e)) => e.preds = f.slots,
            None => {
                log::warn!(
                    "detections for `{}` have no ground-truth frame",
                    f.image_path
                );
                out.push((
                    f.image_path,
                    EvalFrame {
                        preds: f.slots,
                        gts: Vec::new(),
                    },
                ));
            }
        }
    }
    Ok(out.into_iter().map(|(_, e)| e).collect())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    unit_interval("--conf", a.conf)?;
    unit_interval("--iou", a.iou)?;
    if !(a.angle_tol.is_finite() && a.angle_tol >= 0.0) {
        return Err(invalid(format!("--angle-tol {} must be >= 0", a.angle_tol)));
    }
    let frames = pair_frames(
        dataset::read_annotations(&a.gt)?,
        dataset::read_annotations(&a.pred)?,
    )?;
    if frames.is_empty() {
        return Err(invalid("no frames to evaluate"));
    }
    let opts = EvalOptions {
        conf_threshold: a.conf,
        iou_threshold: a.iou,
        angle_tol_deg: a.angle_tol,
    };
    let r = eval::compute_report(&frames, &opts)?;
    let flag = |defined: bool, why: &str| {
        if defined {
            String::new()
        } else {
            format!(" (undefined: {why})")
        }
    };

    if let Some(path) = &a.json {
        let aps: serde_json::Map<String, serde_json::Value> = r
            .ap_per_threshold
            .iter()
            .map(|(t, ap)| (format!("{t:.2}"), serde_json::json!(ap)))
            .collect();
        let doc = serde_json::json!({
            "frames": frames.len(),
            "precision": r.precision,
            "precision_defined": r.precision_defined,
            "recall": r.recall,
            "recall_defined": r.recall_defined,
            "f1": r.f1,
            "map_50": r.map_50,
            "map_50_95": r.map_50_95,
            "entrance_accuracy": r.entrance_accuracy,
            "tp": r.totals.tp,
            "fp": r.totals.fp,
            "fn": r.totals.fn_,
            "ap": aps,
        });
        let mut out = Outputs::default();
        out.stage(path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
        out.commit()?;
    }
    println!("frames {}", frames.len());
    println!(
        "precision {:.6}{}",
        r.precision,
        flag(r.precision_defined, "no detections above threshold")
    );
    println!(
        "recall {:.6}{}",
        r.recall,
        flag(r.recall_defined, "no ground truth")
    );
    println!("f1 {:.6}", r.f1);
    println!("map_50 {:.6}", r.map_50);
    println!("map_50_95 {:.6}", r.map_50_95);
    println!("entrance_accuracy {:.6}", r.entrance_accuracy);
    println!("tp {}", r.totals.tp);
    println!("fp {}", r.totals.fp);
    println!("fn {}", r.totals.fn_);
    for (t, ap) in &r.ap_per_threshold {
        println!("ap@{t:.2} {ap:.6}");
    }
    Ok(())
}

fn convert_ps20(a: Ps20Args) -> Result<()> {
    let cfg = Ps20Config {
        perpendicular_m: a.perpendicular_m,
        parallel_m: a.parallel_m,
        diagonal_m: a.diagonal_m,
        pixels_per_meter: a.pixels_per_meter,
        image_size: a.image_size,
    };
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| invalid(format!("{}: {e}", a.input.display())))?;
    let images = dataset::parse_ps20::<f64>(&text, &a.input.display().to_string())?;
    let mut frames = Vec::with_capacity(images.len());
    let mut skipped = 0;
    for img in &images {
        let conv = dataset::convert_ps20(img, &cfg)?;
        for w in &conv.warnings {
            log::warn!("{w}");
        }
        skipped += conv.warnings.len();
        frames.push(conv.frame);
    }
    let mut out = Outputs::default();
    out.stage(&a.out, dataset::format_annotations(&frames).as_bytes())?;
    out.commit()?;
    println!("frames {}", frames.len());
    println!(
        "slots {}",
        frames.iter().map(|f| f.slots.len()).sum::<usize>()
    );
    println!("skipped {skipped}");
    Ok(())
}

/// Exit code for a failed command: 2 for bad input, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Diverged { .. } | Error::AtOpticalCenter | Error::Image(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Topview(a) => topview(a),
        Command::Render(a) => render(a),
        Command::Loss(a) => loss_cmd(a),
        Command::Fit(a) => fit(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Nms(a) => nms(a),
        Command::Augment(a) => augment(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ConvertPs20(a) => convert_ps20(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

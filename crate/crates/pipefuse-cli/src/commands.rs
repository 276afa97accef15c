//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use pipefuse_core::scene_synth::{
    generate_scene, perturb_boxes, synthetic_radargram, truth_detections, CorpusParams,
    GroundTruth, SynthError, ViewFrames, DEFAULT_EXTENTS,
};
use pipefuse_core::signal_prep::{
    background_removal, exp_gain, information_entropy, lowpass_gradual, quantize, Radargram,
    SignalError,
};
use pipefuse_core::view_fusion::{match_triples, SceneExtents, ViewDetections, ViewFrame};

use crate::cli::{
    BenchArgs, Cli, Command, EvalArgs, FootprintArgs, MatchArgs, PreprocessArgs, SynthArgs,
};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::{
    self, read_detections, read_json, read_report, write_json, BoxEntry, ClassMap, ConfigEcho,
    DetectionsFile, EntropyReport, FootprintReport, FootprintSide, SceneFile,
    DETECTIONS_FORMAT, FOOTPRINT_FORMAT, RADARGRAM_FORMAT, SCENE_FORMAT,
};
use crate::report::{aggregate, evaluate, scene_report};
use crate::svg::histogram_svg;

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let pool = build_pool(cli.threads)?;
    match cli.command {
        Command::Synth(args) => cmd_synth(&args, &cfg, &cli.out),
        Command::Match(args) => cmd_match(&args, &mut cfg, &cli.out, &pool),
        Command::Eval(args) => cmd_eval(&args, &cli.out),
        Command::Preprocess(args) => cmd_preprocess(&args, &cli.out),
        Command::Footprint(args) => cmd_footprint(&args, &cli.out),
        Command::Bench(args) => cmd_bench(&args, &cfg, &pool),
    }
}

fn build_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn ensure_out_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::Placement { .. } => CliError::usage(e.to_string()),
        other => CliError::data(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(args: &SynthArgs, cfg: &RunConfig, out: &Path) -> CliResult<()> {
    ensure_out_dir(out)?;
    let extents = match args.extents {
        Some([x, y, z]) => SceneExtents {
            x_m: x,
            y_m: y,
            z_m: z,
        },
        None => DEFAULT_EXTENTS,
    };
    if args.jitter < 0.0 {
        return Err(CliError::usage("--jitter must be nonnegative"));
    }
    for i in 0..args.scenes {
        let scene_seed = cfg.seed.wrapping_add(i as u64);
        let (scene, gt) =
            generate_scene(scene_seed, args.pipes, extents).map_err(synth_error)?;
        let scene_id = format!("scene_{i:04}");
        write_json(
            &out.join(format!("{scene_id}.scene.json")),
            &SceneFile {
                format: SCENE_FORMAT.to_string(),
                scene_id: scene_id.clone(),
                scene,
            },
        )?;
        let detections = if args.jitter > 0.0 {
            let (b, c, d) = perturb_boxes(&gt, args.jitter, scene_seed ^ 0x5eed_b0c5);
            detections_file(&scene_id, &gt, &[b, c, d])
        } else {
            DetectionsFile::from_ground_truth(&scene_id, &gt)
        };
        write_json(&out.join(format!("{scene_id}.boxes.json")), &detections)?;
        if args.radargrams {
            let params = CorpusParams {
                n_pipes: args.pipes,
                extents,
                ..CorpusParams::default()
            };
            let gram = synthetic_radargram(scene_seed, &params).map_err(synth_error)?;
            formats::write_radargram(&out.join(format!("{scene_id}.gram.json")), &gram)?;
        }
    }
    println!(
        "synth: wrote {} scene(s) with {} pipe(s) each to {}",
        args.scenes,
        args.pipes,
        out.display()
    );
    Ok(())
}

fn detections_file(
    scene_id: &str,
    gt: &GroundTruth,
    views: &[ViewDetections; 3],
) -> DetectionsFile {
    let boxes = gt
        .pipelines
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            views
                .iter()
                .map(move |v| BoxEntry::from_view_box(&v.boxes[i]))
        })
        .collect();
    DetectionsFile {
        format: DETECTIONS_FORMAT.to_string(),
        scene_id: scene_id.to_string(),
        frames: gt.frames,
        boxes,
        truth: Some(formats::truth_entries(gt)),
    }
}

// ---------------------------------------------------------------------------
// match
// ---------------------------------------------------------------------------

struct SceneInput {
    scene_id: String,
    boxes: Vec<BoxEntry>,
    views: (ViewDetections, ViewDetections, ViewDetections),
}

fn load_json_scenes(paths: &[PathBuf]) -> CliResult<Vec<SceneInput>> {
    paths
        .iter()
        .map(|p| {
            let file = read_detections(p)?;
            let views = file.view_detections()?;
            Ok(SceneInput {
                scene_id: file.scene_id,
                boxes: file.boxes,
                views,
            })
        })
        .collect()
}

fn load_yolo_scenes(
    dir: &Path,
    class_map_path: &Path,
    frames: &ViewFrames,
) -> CliResult<Vec<SceneInput>> {
    let class_map: ClassMap = read_json(class_map_path)?;
    let stems = formats::yolo_scene_stems(dir)?;
    if stems.is_empty() {
        return Err(CliError::data(format!(
            "{}: no `<scene>_<B|C|D>.txt` annotation files found",
            dir.display()
        )));
    }
    stems
        .iter()
        .map(|stem| {
            let [pb, pc, pd] = formats::yolo_scene_paths(dir, stem)?;
            let parse = |path: &Path, frame: &ViewFrame, letter: char| {
                formats::parse_yolo_txt(path, &class_map, frame, &format!("{stem}-{letter}"))
            };
            let b = parse(&pb, &frames.b, 'B')?;
            let c = parse(&pc, &frames.c, 'C')?;
            let d = parse(&pd, &frames.d, 'D')?;
            let boxes = b
                .iter()
                .chain(&c)
                .chain(&d)
                .map(BoxEntry::from_view_box)
                .collect();
            Ok(SceneInput {
                scene_id: stem.clone(),
                boxes,
                views: (
                    ViewDetections {
                        frame: frames.b,
                        boxes: b,
                    },
                    ViewDetections {
                        frame: frames.c,
                        boxes: c,
                    },
                    ViewDetections {
                        frame: frames.d,
                        boxes: d,
                    },
                ),
            })
        })
        .collect()
}

fn cmd_match(
    args: &MatchArgs,
    cfg: &mut RunConfig,
    out: &Path,
    pool: &rayon::ThreadPool,
) -> CliResult<()> {
    if let Some(v) = args.confidence {
        cfg.confidence_threshold = v;
    }
    if let Some(v) = args.prediction_iou {
        cfg.prediction_iou_threshold = v;
    }
    if let Some(v) = args.matching_threshold {
        cfg.matching_diou_threshold = v;
    }
    if let Some(v) = args.pairwise_mode {
        cfg.pairwise_mode = v.into();
    }
    cfg.validate()?;

    let mut scenes = match (&args.yolo_dir, args.detections.is_empty()) {
        (Some(dir), true) => {
            let class_map = args.class_map.as_ref().ok_or_else(|| {
                CliError::usage("--yolo-dir requires --class-map <file>")
            })?;
            let frames = cfg
                .frames
                .unwrap_or_else(|| ViewFrames::for_extents(SceneExtents::default()));
            load_yolo_scenes(dir, class_map, &frames)?
        }
        (None, false) => load_json_scenes(&args.detections)?,
        (Some(_), false) => {
            return Err(CliError::usage(
                "pass either JSON detections files or --yolo-dir, not both",
            ))
        }
        (None, true) => {
            return Err(CliError::usage(
                "no input: pass detections files or --yolo-dir",
            ))
        }
    };
    scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));

    let match_cfg = cfg.match_config();
    let results: Vec<CliResult<crate::formats::SceneReport>> = pool.install(|| {
        scenes
            .par_iter()
            .map(|scene| {
                let (b, c, d) = &scene.views;
                let outcome = match_triples(b, c, d, &match_cfg)
                    .map_err(|e| CliError::data(format!("scene {}: {e}", scene.scene_id)))?;
                Ok(scene_report(&scene.scene_id, &scene.boxes, &outcome))
            })
            .collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.push(r?);
    }

    let report = aggregate(
        ConfigEcho {
            confidence_threshold: cfg.confidence_threshold,
            prediction_iou_threshold: cfg.prediction_iou_threshold,
            matching_diou_threshold: cfg.matching_diou_threshold,
            pairwise_mode: cfg.pairwise_mode,
            seed: cfg.seed,
        },
        reports,
    );
    ensure_out_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    if args.svg {
        for (name, hist) in [
            ("diou_bc", &report.histograms.bc),
            ("diou_bd", &report.histograms.bd),
            ("diou_cd", &report.histograms.cd),
        ] {
            let path = out.join(format!("{name}.svg"));
            fs::write(&path, histogram_svg(hist, name)).map_err(|e| CliError::io(&path, e))?;
        }
    }
    println!(
        "match: {} detection(s) across {} scene(s), {} unmatched box(es)",
        report.totals.n_detections, report.totals.n_scenes, report.totals.n_unmatched
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(args: &EvalArgs, out: &Path) -> CliResult<()> {
    let report = read_report(&args.report)?;
    if args.truth.is_empty() {
        return Err(CliError::usage("--truth requires at least one file"));
    }
    let truth_files: Vec<DetectionsFile> = args
        .truth
        .iter()
        .map(|p| read_detections(p))
        .collect::<CliResult<_>>()?;
    let metrics = evaluate(&report, &truth_files)?;
    ensure_out_dir(out)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    println!(
        "eval: precision {:.4}, recall {:.4} over {} truth pipeline(s)",
        metrics.precision, metrics.recall, metrics.n_truth
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StepSelection {
    gain: bool,
    background: bool,
    lowpass: bool,
}

fn parse_steps(steps: &[String]) -> CliResult<StepSelection> {
    let mut sel = StepSelection {
        gain: false,
        background: false,
        lowpass: false,
    };
    for s in steps {
        match s.trim().to_ascii_lowercase().as_str() {
            "" => {}
            "gain" => sel.gain = true,
            "background" => sel.background = true,
            "lowpass" => sel.lowpass = true,
            other => {
                return Err(CliError::usage(format!(
                    "unknown step {other:?}; expected a subset of gain,background,lowpass"
                )))
            }
        }
    }
    Ok(sel)
}

fn signal_error(e: SignalError) -> CliError {
    match e {
        SignalError::InvalidBand { .. }
        | SignalError::NegativeGain(_)
        | SignalError::TooFewLevels(_) => CliError::usage(e.to_string()),
        other => CliError::data(other.to_string()),
    }
}

/// Applies the selected steps in the chain's fixed order: gain, then
/// background removal, then gradual low-pass.
pub fn apply_chain(
    gram: &Radargram,
    gain: bool,
    background: bool,
    lowpass: bool,
    alpha: f64,
    pass_hz: f64,
    stop_hz: f64,
) -> Result<Radargram, SignalError> {
    let mut cur = gram.clone();
    if gain {
        cur = exp_gain(&cur, alpha)?;
    }
    if background {
        cur = background_removal(&cur)?;
    }
    if lowpass {
        cur = lowpass_gradual(&cur, pass_hz, stop_hz)?;
    }
    Ok(cur)
}

fn cmd_preprocess(args: &PreprocessArgs, out: &Path) -> CliResult<()> {
    let sel = parse_steps(&args.steps)?;
    let gram = formats::read_radargram(&args.input)?;
    let processed = apply_chain(
        &gram,
        sel.gain,
        sel.background,
        sel.lowpass,
        args.alpha,
        args.pass_hz,
        args.stop_hz,
    )
    .map_err(signal_error)?;
    let image = quantize(&processed, args.levels).map_err(signal_error)?;
    let entropy = information_entropy(&image);

    let mut steps_applied = Vec::new();
    if sel.gain {
        steps_applied.push("gain".to_string());
    }
    if sel.background {
        steps_applied.push("background".to_string());
    }
    if sel.lowpass {
        steps_applied.push("lowpass".to_string());
    }

    ensure_out_dir(out)?;
    formats::write_radargram(&out.join("processed.json"), &processed)?;
    write_json(
        &out.join("entropy.json"),
        &EntropyReport {
            format: RADARGRAM_FORMAT.replace("radargram", "entropy"),
            steps_applied: steps_applied.clone(),
            gain_per_ns: args.alpha,
            lowpass_pass_hz: args.pass_hz,
            lowpass_stop_hz: args.stop_hz,
            gray_levels: args.levels,
            entropy_bits: entropy,
            n_traces: processed.n_traces(),
            n_samples: processed.n_samples(),
        },
    )?;
    println!(
        "preprocess: steps [{}], entropy {:.4} bits over {} levels",
        steps_applied.join(","),
        entropy,
        args.levels
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// footprint
// ---------------------------------------------------------------------------

const MB: f64 = 1e6;
const MIB: f64 = 1024.0 * 1024.0;

fn side(total_bytes: f64) -> FootprintSide {
    FootprintSide {
        total_bytes,
        total_mb_decimal: total_bytes / MB,
        total_mib: total_bytes / MIB,
    }
}

pub fn footprint_report(args: &FootprintArgs) -> FootprintReport {
    let image_bytes = args.images as f64 * args.kb_per_image * 1000.0;
    let points = (args.samples_per_km * args.channels * args.depth_points) as f64;
    let volume_bytes = points * args.bytes_per_point;
    // alternate reading of the same figure as bits per point
    let volume_bits_bytes = points * args.bytes_per_point / 8.0;
    FootprintReport {
        format: FOOTPRINT_FORMAT.to_string(),
        n_images: args.images,
        kb_per_image: args.kb_per_image,
        image_px: [args.width, args.height],
        image_pipeline: side(image_bytes),
        samples_per_km: args.samples_per_km,
        channels: args.channels,
        depth_points: args.depth_points,
        bytes_per_point: args.bytes_per_point,
        volume_pipeline_bytes_reading: side(volume_bytes),
        volume_pipeline_bits_reading: side(volume_bits_bytes),
        ratio_bytes_reading: image_bytes / volume_bytes,
        ratio_bits_reading: image_bytes / volume_bits_bytes,
        reference_ratio: 0.056,
        reference_volume_mb: 5470.0,
    }
}

fn cmd_footprint(args: &FootprintArgs, out: &Path) -> CliResult<()> {
    if args.kb_per_image <= 0.0 || args.bytes_per_point <= 0.0 {
        return Err(CliError::usage("footprint parameters must be positive"));
    }
    if args.images == 0 || args.channels == 0 || args.samples_per_km == 0 || args.depth_points == 0
    {
        return Err(CliError::usage("footprint parameters must be positive"));
    }
    let report = footprint_report(args);
    ensure_out_dir(out)?;
    write_json(&out.join("footprint.json"), &report)?;
    println!(
        "footprint: images {:.1} MB ({:.1} MiB); volume {:.1} MB ({:.1} MiB) as bytes/point, {:.1} MB as bits/point",
        report.image_pipeline.total_mb_decimal,
        report.image_pipeline.total_mib,
        report.volume_pipeline_bytes_reading.total_mb_decimal,
        report.volume_pipeline_bytes_reading.total_mib,
        report.volume_pipeline_bits_reading.total_mb_decimal,
    );
    println!(
        "footprint: ratio {:.4}% (bytes reading) / {:.4}% (bits reading); reference claim {:.1}% of {:.0} MB",
        100.0 * report.ratio_bytes_reading,
        100.0 * report.ratio_bits_reading,
        100.0 * report.reference_ratio,
        report.reference_volume_mb,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(args: &BenchArgs, cfg: &RunConfig, pool: &rayon::ThreadPool) -> CliResult<()> {
    let mut scenes = Vec::with_capacity(args.scenes);
    for i in 0..args.scenes {
        let seed = cfg.seed.wrapping_add(i as u64);
        let (_, gt) = generate_scene(seed, args.pipes, DEFAULT_EXTENTS).map_err(synth_error)?;
        scenes.push(gt);
    }
    let match_cfg = cfg.match_config();
    let start = Instant::now();
    let detections: usize = pool.install(|| {
        scenes
            .par_iter()
            .map(|gt| {
                let (b, c, d) = truth_detections(gt);
                match_triples(&b, &c, &d, &match_cfg)
                    .map(|o| o.detections.len())
                    .unwrap_or(0)
            })
            .sum()
    });
    let elapsed = start.elapsed();
    let n_boxes: usize = scenes.iter().map(|gt| 3 * gt.pipelines.len()).sum();
    // deterministic summary on stdout; timing only on stderr
    println!(
        "{}",
        serde_json::json!({
            "scenes": args.scenes,
            "pipes_per_scene": args.pipes,
            "boxes": n_boxes,
            "detections": detections,
        })
    );
    eprintln!(
        "bench: matched {} scene(s) in {:.1} ms ({:.0} scenes/s)",
        args.scenes,
        elapsed.as_secs_f64() * 1e3,
        args.scenes as f64 / elapsed.as_secs_f64().max(1e-9)
    );
    Ok(())
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{GrayImage, Luma, Rgb, RgbImage};
use personlab::eval::{default_thresholds, load_detections, load_ground_truth};
use personlab::segment::label_map;
use personlab::synth::{load_scene, render_outputs};
use personlab::{
    default_coco_graph, detections_to_json, keypoint_ap, load_container, mask_ap, run_pipeline,
    save_container, Detection, Error, KinematicGraph, ModelOutputs, NmsMethod, OksParams,
    PipelineConfig, PipelineOutput, RefinementConfig, ScoringMethod, COCO_KEYPOINTS,
};
use rayon::prelude::*;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(name = "personlab", version, about = "Decode dense pose network outputs into people")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a container (or a directory of them) into detections and masks.
    Decode(DecodeArgs),
    /// Render the ideal outputs of a scene description into a container.
    Synth(SynthArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Decode a container and draw poses and masks into a PNG.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringArg {
    Hough,
    ExpectedOks,
}

#[derive(Clone, Copy, ValueEnum)]
enum NmsArg {
    Hard,
    Soft,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Keypoints,
    Masks,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON file with a full pipeline configuration; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Keypoint disk radius, pixels.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed_threshold: Option<f64>,
    #[arg(long)]
    window_radius: Option<usize>,
    #[arg(long)]
    nms_radius: Option<f64>,
    #[arg(long, value_enum)]
    scoring: Option<ScoringArg>,
    #[arg(long, value_enum)]
    nms: Option<NmsArg>,
    #[arg(long)]
    hard_nms_threshold: Option<f64>,
    #[arg(long)]
    seg_threshold: Option<f64>,
    #[arg(long)]
    dist_threshold: Option<f64>,
    /// Maximum detections per image.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    mid_steps: Option<usize>,
    #[arg(long)]
    long_self_steps: Option<usize>,
    #[arg(long)]
    long_short_steps: Option<usize>,
    /// Disable all offset refinement.
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    snap_radius: Option<f64>,
    /// Kinematic tree, one `name name` edge per line.
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Per-keypoint OKS constants, one `name value` per line.
    #[arg(long, value_name = "FILE")]
    kappas: Option<PathBuf>,
    /// Print the effective configuration as JSON to stderr.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct DecodeArgs {
    /// A `.plfd` container or a directory of them.
    input: PathBuf,
    /// Detections JSON; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Directory for one PNG mask per detection.
    #[arg(long, value_name = "DIR")]
    masks: Option<PathBuf>,
    /// Overlay PNG (single container only).
    #[arg(long, value_name = "FILE")]
    render: Option<PathBuf>,
    /// Image id for a single container; batch mode numbers files from 1.
    #[arg(long, default_value_t = 1)]
    image_id: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct SynthArgs {
    scene: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    stride: u32,
    #[arg(long, default_value_t = 32.0)]
    radius: f64,
    /// Override the scene's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    gt: PathBuf,
    pred: PathBuf,
    #[arg(long, value_enum, default_value = "keypoints")]
    task: Task,
    /// Maximum detections per image.
    #[arg(long, default_value_t = 20)]
    budget: usize,
    #[arg(long, value_name = "FILE")]
    kappas: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RenderArgs {
    input: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Decode(args) => cmd_decode(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Render(args) => cmd_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Usage(_) => EXIT_USAGE,
                Error::Io(_) => EXIT_IO,
                _ => EXIT_PARSE,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<image::ImageError>() {
            return match e {
                image::ImageError::IoError(_) => EXIT_IO,
                _ => EXIT_PARSE,
            };
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_PARSE;
        }
    }
    EXIT_USAGE
}

fn keypoint_names(k: usize) -> Vec<String> {
    if k == COCO_KEYPOINTS.len() {
        COCO_KEYPOINTS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|i| format!("kp{i}")).collect()
    }
}

fn load_graph(path: Option<&Path>, k: usize) -> Result<KinematicGraph> {
    match path {
        Some(p) => {
            let names = keypoint_names(k);
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            KinematicGraph::load(p, &refs).with_context(|| format!("graph {}", p.display()))
        }
        None if k == COCO_KEYPOINTS.len() => Ok(default_coco_graph()),
        None => bail!(Error::Usage(format!("{k} keypoint types need an explicit --graph"))),
    }
}

fn load_kappas(path: Option<&Path>, k: usize) -> Result<OksParams> {
    match path {
        Some(p) => {
            let names = keypoint_names(k);
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            OksParams::load(p, &refs).with_context(|| format!("kappas {}", p.display()))
        }
        None if k == COCO_KEYPOINTS.len() => Ok(OksParams::coco()),
        None => bail!(Error::Usage(format!("{k} keypoint types need explicit --kappas"))),
    }
}

impl PipelineArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("config {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set! {
            radius => cfg.disk_radius,
            seed_threshold => cfg.seed_threshold,
            window_radius => cfg.window_radius,
            nms_radius => cfg.nms_radius,
            hard_nms_threshold => cfg.hard_nms_oks_threshold,
            seg_threshold => cfg.seg_threshold,
            dist_threshold => cfg.dist_threshold,
            budget => cfg.budget,
            snap_radius => cfg.snap_radius,
        }
        if self.no_refine {
            cfg.refinement = RefinementConfig::NONE;
        }
        set! {
            mid_steps => cfg.refinement.mid_steps_short,
            long_self_steps => cfg.refinement.long_steps_self,
            long_short_steps => cfg.refinement.long_steps_short,
        }
        if let Some(s) = self.scoring {
            cfg.scoring = match s {
                ScoringArg::Hough => ScoringMethod::Hough,
                ScoringArg::ExpectedOks => ScoringMethod::ExpectedOks,
            };
        }
        if let Some(n) = self.nms {
            cfg.nms = match n {
                NmsArg::Hard => NmsMethod::Hard,
                NmsArg::Soft => NmsMethod::Soft,
            };
        }
        if let Some(g) = &self.graph {
            cfg.graph = Some(g.display().to_string());
        }
        cfg.validate()?;
        if self.print_config {
            eprintln!("{}", cfg.to_json());
        }
        Ok(cfg)
    }
}

struct Decoded {
    outputs: ModelOutputs,
    result: PipelineOutput,
    graph: KinematicGraph,
    scale_floor: f64,
}

fn decode_one(path: &Path, cfg: &PipelineConfig, args: &PipelineArgs) -> Result<Decoded> {
    let outputs = load_container(path).with_context(|| format!("container {}", path.display()))?;
    let k = outputs.num_keypoints();
    let graph = load_graph(args.graph.as_deref(), k)?;
    let kappas = load_kappas(args.kappas.as_deref(), k)?;
    let result = run_pipeline(&outputs, &graph, &kappas, cfg)
        .with_context(|| format!("decoding {}", path.display()))?;
    Ok(Decoded { outputs, result, graph, scale_floor: cfg.scale_floor })
}

fn write_masks(dir: &Path, stem: &str, result: &PipelineOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for j in 0..result.instances.len() {
        let mask = result.masks.instance_mask(j);
        let (w, h) = (result.image_width as u32, result.image_height as u32);
        let s = mask.stride as usize;
        let img = GrayImage::from_fn(w, h, |x, y| {
            let row = (y as usize / s).min(mask.height.saturating_sub(1));
            let col = (x as usize / s).min(mask.width.saturating_sub(1));
            Luma([if mask.height > 0 && mask.width > 0 && mask.get(row, col) { 255 } else { 0 }])
        });
        let path = dir.join(format!("{stem}_{j:03}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn containers_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "plfd"));
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let cfg = args.pipeline.build()?;
    if args.input.is_dir() {
        if args.render.is_some() {
            bail!(Error::Usage("--render needs a single container".into()));
        }
        let files = containers_in(&args.input)?;
        let per_image: Vec<Vec<Detection>> = files
            .par_iter()
            .enumerate()
            .map(|(i, path)| {
                let d = decode_one(path, &cfg, &args.pipeline)?;
                if let Some(dir) = &args.masks {
                    write_masks(dir, &stem(path), &d.result)?;
                }
                Ok(d.result.detections(i as u64 + 1))
            })
            .collect::<Result<_>>()?;
        let all: Vec<Detection> = per_image.into_iter().flatten().collect();
        return write_text(args.out.as_deref(), &detections_to_json(&all));
    }
    let d = decode_one(&args.input, &cfg, &args.pipeline)?;
    if let Some(dir) = &args.masks {
        write_masks(dir, &stem(&args.input), &d.result)?;
    }
    if let Some(png) = &args.render {
        render_png(&d, png)?;
    }
    write_text(args.out.as_deref(), &detections_to_json(&d.result.detections(args.image_id)))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut scene = load_scene(&args.scene).with_context(|| format!("scene {}", args.scene.display()))?;
    if let Some(seed) = args.seed {
        scene.noise_seed = seed;
    }
    let k = scene.persons.first().map_or(COCO_KEYPOINTS.len(), |p| p.keypoints.len());
    let graph = load_graph(args.graph.as_deref(), k)?;
    let outputs = render_outputs(&scene, &graph, args.stride, args.radius)?;
    save_container(&outputs, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let gts = load_ground_truth(&args.gt).with_context(|| format!("ground truth {}", args.gt.display()))?;
    let dts = load_detections(&args.pred).with_context(|| format!("predictions {}", args.pred.display()))?;
    let thresholds = default_thresholds();
    let summary = match args.task {
        Task::Keypoints => {
            let k = gts.iter().map(|g| g.keypoints.len() / 3).find(|&k| k > 0).unwrap_or(COCO_KEYPOINTS.len());
            let kappas = load_kappas(args.kappas.as_deref(), k)?;
            keypoint_ap(&gts, &dts, &kappas, &thresholds, args.budget)?
        }
        Task::Masks => mask_ap(&gts, &dts, &thresholds, args.budget)?,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", summary.to_table());
    }
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let cfg = args.pipeline.build()?;
    let d = decode_one(&args.input, &cfg, &args.pipeline)?;
    render_png(&d, &args.out)
}

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

fn render_png(d: &Decoded, path: &Path) -> Result<()> {
    let (w, h) = (d.result.image_width, d.result.image_height);
    let seg = &d.outputs.seg_prob;
    let labels = label_map(
        &d.result.masks,
        &d.result.embedding,
        &d.result.instances,
        &d.outputs.heatmaps,
        d.scale_floor,
    );
    let s = seg.stride() as usize;
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let row = (y as usize / s).min(seg.height().saturating_sub(1));
        let col = (x as usize / s).min(seg.width().saturating_sub(1));
        if seg.height() == 0 || seg.width() == 0 {
            return Rgb([0, 0, 0]);
        }
        let grey = (seg.get(row, col, 0).clamp(0.0, 1.0) * 96.0) as u8;
        match labels[row * seg.width() + col] {
            Some(j) => {
                let c = PALETTE[j % PALETTE.len()];
                Rgb(c.map(|v| (v as u16 / 2 + grey as u16 / 2) as u8))
            }
            None => Rgb([grey; 3]),
        }
    });
    for (j, inst) in d.result.instances.iter().enumerate() {
        let colour = Rgb(PALETTE[j % PALETTE.len()]);
        for &(a, b) in d.graph.edges().iter().step_by(2) {
            let (p, q) = (inst.keypoints[a], inst.keypoints[b]);
            draw_line(&mut img, (p.x, p.y), (q.x, q.y), Rgb([255, 255, 255]));
        }
        for p in &inst.keypoints {
            draw_dot(&mut img, (p.x, p.y), 2, colour);
        }
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().clamp(1.0, 1e5) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(img, (a.0 + t * (b.0 - a.0)) as i64, (a.1 + t * (b.1 - a.1)) as i64, c);
    }
}

fn draw_dot(img: &mut RgbImage, p: (f64, f64), r: i64, c: Rgb<u8>) {
    let (cx, cy) = (p.0 as i64, p.1 as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(img, cx + dx, cy + dy, c);
            }
        }
    }
}

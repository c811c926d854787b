use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segloc::descriptor::{init_model, load_model, save_model, ChannelConfig, DescriptorKind};
use segloc::eval::{self, ThreadMode};
use segloc::geometry::{apply_transform, PointCloud, RigidTransform};
use segloc::io::{self, CloudFormat, SegmentMap};
use segloc::pipeline::{pose_record, Pipeline, PipelineConfig};
use segloc::preprocess::{canonicalize, AlignMode};
use segloc::sampling::fps_benchmark;
use segloc::synth::{partial_views, random_pose, SynthWorld, ViewParams, WorldParams};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "segloc", version, about = "Segment-based global localization of LIDAR point clouds")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

/// Pipeline settings: a config file, then individual overrides.
#[derive(Args, Clone, Default)]
struct PipelineArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// none, pca2d or pca3d.
    #[arg(long)]
    align: Option<String>,
    #[arg(long, value_parser = ["dsm", "eigen"])]
    descriptor: Option<String>,
    /// Network weights (DSMW file).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    quality_threshold: Option<f64>,
    #[arg(long)]
    inlier_radius: Option<f64>,
    #[arg(long)]
    min_inliers: Option<usize>,
    /// Pose estimator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Any other configuration key, as KEY=VALUE; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl PipelineArgs {
    fn config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => PipelineConfig::default(),
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        put("align", self.align.clone());
        put("descriptor", self.descriptor.clone());
        put("model", self.model.as_ref().map(|p| p.display().to_string()));
        put("k", self.k.map(|v| v.to_string()));
        put("quality_threshold", self.quality_threshold.map(|v| v.to_string()));
        put("inlier_radius", self.inlier_radius.map(|v| v.to_string()));
        put("min_inliers", self.min_inliers.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        for (k, v) in overrides {
            cfg.set(&k, &v).map_err(CliError::Usage)?;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    fn pipeline(&self) -> CliResult<Pipeline> {
        let cfg = self.config()?;
        if cfg.descriptor == DescriptorKind::Learned16 && cfg.model_path.is_none() {
            return Err(CliError::Usage("the dsm descriptor needs --model (or use --descriptor eigen)".into()));
        }
        Pipeline::new(cfg).map_err(CliError::data)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment and describe clouds into a map file.
    BuildMap {
        /// Cloud files or directories of clouds (.ply, .csv, .xyz, .txt).
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Scan poses (`file,x,y,z,qw,qx,qy,qz` rows) to accumulate into swathes.
        #[arg(long)]
        swathe_poses: Option<PathBuf>,
        /// Travel distance per swathe, meters.
        #[arg(long, default_value_t = io::DEFAULT_SWATHE_DISTANCE)]
        swathe_distance: f64,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Localize one cloud against a map.
    Localize {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Evaluation reports and benchmarks.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write randomly initialized network weights.
    InitModel {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic world, partial views with known poses and decoys.
    SynthWorld {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 80)]
        primitives: usize,
        #[arg(long, default_value_t = 20)]
        views: usize,
        #[arg(long, default_value_t = 10)]
        decoys: usize,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// ROC curve and AUC from `score,label` rows.
    Roc {
        #[arg(long)]
        pairs: PathBuf,
        /// CSV of the curve points.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Whitespace-separated curve points for gnuplot.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// Descriptor change under yaw rotation for several alignment modes.
    Rotation {
        /// Cloud whose segments are evaluated.
        #[arg(long)]
        cloud: PathBuf,
        /// Comma-separated alignment modes, one curve each.
        #[arg(long, default_value = "none,pca2d")]
        modes: String,
        #[arg(long, default_value_t = 10.0)]
        step_deg: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Localize a sequence of clouds and count the poses.
    LocalizeRun {
        #[arg(long)]
        map: PathBuf,
        clouds: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Batched versus per-segment farthest point sampling.
    BenchFps {
        #[arg(long, default_value_t = 1000)]
        p: usize,
        #[arg(long, default_value_t = 256)]
        s: usize,
        #[arg(long, default_value_t = 160)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-stage pipeline timings.
    BenchPipeline {
        #[arg(long)]
        map: PathBuf,
        clouds: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        #[arg(long, default_value_t = eval::TIMING_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = eval::TIMING_WARMUP)]
        warmup: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Network descriptor time with and without down-sampling.
    BenchDescriptor {
        /// Weights to time; random weights when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        segments: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Single,
    Multi,
    Both,
}

fn is_cloud_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(), Some("ply" | "csv" | "xyz" | "txt"))
}

/// Expands directories into their cloud files, sorted by name.
fn cloud_paths(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_cloud_file(p))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Data("no input clouds".into()));
    }
    Ok(out)
}

fn read_cloud(path: &Path) -> CliResult<PointCloud> {
    let format = CloudFormat::detect(path).map_err(CliError::data)?;
    let loaded = io::load_cloud(path, format).map_err(CliError::data)?;
    if loaded.rejected_non_finite > 0 {
        eprintln!("{}: dropped {} non-finite points", path.display(), loaded.rejected_non_finite);
    }
    Ok(loaded.cloud)
}

fn read_clouds(inputs: &[PathBuf]) -> CliResult<Vec<PointCloud>> {
    cloud_paths(inputs)?.iter().map(|p| read_cloud(p)).collect()
}

fn read_swathes(poses: &Path, distance: f64) -> CliResult<Vec<PointCloud>> {
    let text = fs::read_to_string(poses).map_err(|e| CliError::Data(format!("{}: {e}", poses.display())))?;
    let base = poses.parent().unwrap_or(Path::new("."));
    let mut scans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| CliError::Data(format!("{} line {}: {m}", poses.display(), i + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 8 {
            return Err(bad("expected file,x,y,z,qw,qx,qy,qz"));
        }
        let v: Vec<f64> = cols[1..].iter().map(|c| c.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad("bad number"))?;
        let pose = RigidTransform::from_quaternion([v[3], v[4], v[5], v[6]], Vector3::new(v[0], v[1], v[2])).map_err(|e| bad(&e.to_string()))?;
        scans.push((read_cloud(&base.join(cols[0]))?, pose));
    }
    let (mut swathes, residual) = io::accumulate_swathes(scans, distance).map_err(CliError::data)?;
    swathes.extend(residual);
    Ok(swathes)
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report types serialize")
}

fn build_map(inputs: &[PathBuf], out: &Path, swathe_poses: Option<&Path>, swathe_distance: f64, args: &PipelineArgs, format: Format) -> CliResult {
    let pipeline = args.pipeline()?;
    let mut clouds = if inputs.is_empty() { Vec::new() } else { read_clouds(inputs)? };
    if let Some(p) = swathe_poses {
        clouds.extend(read_swathes(p, swathe_distance)?);
    }
    if clouds.is_empty() {
        return Err(CliError::Data("no input clouds".into()));
    }
    let map = pipeline.build_map(&clouds).map_err(CliError::data)?;
    io::save_map(&map, out).map_err(CliError::data)?;
    let kind = match map.descriptor_kind() {
        DescriptorKind::Learned16 => "learned16",
        DescriptorKind::Eigen7 => "eigen7",
    };
    match format {
        Format::Json => println!("{}", serde_json::json!({ "clouds": clouds.len(), "segments": map.len(), "descriptor_kind": kind })),
        Format::Text => println!("{} segments ({kind}) from {} clouds -> {}", map.len(), clouds.len(), out.display()),
    }
    Ok(())
}

fn load_map_for(pipeline: &Pipeline, path: &Path) -> CliResult<(SegmentMap, segloc::matching::FeatureIndex)> {
    let map = io::load_map(path).map_err(CliError::data)?;
    let index = pipeline.index(&map).map_err(CliError::data)?;
    Ok((map, index))
}

fn localize(cloud: &Path, map: &Path, args: &PipelineArgs, format: Format) -> CliResult {
    let pipeline = args.pipeline()?;
    let (_, index) = load_map_for(&pipeline, map)?;
    let cloud = read_cloud(cloud)?;
    let loc = pipeline.localize(&cloud, &index).map_err(CliError::data)?;
    match format {
        Format::Json => println!("{}", loc.record()),
        Format::Text => match &loc.pose {
            None => println!("no-localization ({} segments, {} correspondences)", loc.live_segments, loc.correspondences),
            Some(p) => {
                let t = p.transform.translation();
                let q = p.transform.quaternion();
                println!("localized: translation [{:.4}, {:.4}, {:.4}] quaternion [{:.6}, {:.6}, {:.6}, {:.6}]", t.x, t.y, t.z, q[0], q[1], q[2], q[3]);
                println!("inliers {} support {} iterations {}", p.inliers.len(), p.support, p.iterations_used);
            }
        },
    }
    Ok(())
}

fn eval_roc(pairs: &Path, out: Option<&Path>, gnuplot: Option<&Path>, format: Format) -> CliResult {
    let text = fs::read_to_string(pairs).map_err(|e| CliError::Data(format!("{}: {e}", pairs.display())))?;
    let (scores, labels) = eval::parse_scored_pairs(&text).map_err(CliError::data)?;
    let curve = eval::roc_auc(&scores, &labels).map_err(CliError::data)?;
    if let Some(p) = out {
        write_file(p, &curve.to_csv())?;
    }
    if let Some(p) = gnuplot {
        write_file(p, &curve.to_gnuplot())?;
    }
    match format {
        Format::Json => println!("{}", to_json(&curve)),
        Format::Text => println!("auc {}", curve.auc),
    }
    Ok(())
}

fn eval_rotation(cloud: &Path, modes: &str, step: f64, out: Option<&Path>, args: &PipelineArgs, format: Format) -> CliResult {
    if !(step > 0.0 && step <= 360.0) {
        return Err(CliError::Usage(format!("--step-deg must be in (0, 360], got {step}")));
    }
    let modes: Vec<AlignMode> = modes.split(',').map(|m| m.trim().parse()).collect::<Result<_, _>>().map_err(|e: segloc::preprocess::PreprocessError| CliError::Usage(e.to_string()))?;
    let base = args.config()?;
    let cloud = read_cloud(cloud)?;
    let angles: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|&a| a <= 360.0 + 1e-9).collect();
    let mut results = Vec::new();
    for mode in &modes {
        let cfg = PipelineConfig { align: *mode, ..base.clone() };
        let pipeline = PipelineArgs::default().pipeline_from(cfg)?;
        let segments = pipeline.segment(&cloud).map_err(CliError::data)?;
        let r = eval::rotation_delta(|s| pipeline.describe_segment(s), &segments, &angles).map_err(CliError::data)?;
        results.push((mode.to_string(), r));
    }
    let mut csv = String::from("angle_deg");
    for (m, _) in &results {
        csv.push(',');
        csv.push_str(m);
    }
    csv.push('\n');
    for (i, a) in angles.iter().enumerate() {
        csv.push_str(&a.to_string());
        for (_, r) in &results {
            csv.push_str(&format!(",{}", r.delta[i]));
        }
        csv.push('\n');
    }
    if let Some(p) = out {
        write_file(p, &csv)?;
    }
    match format {
        Format::Json => {
            let v: serde_json::Map<String, serde_json::Value> = results.iter().map(|(m, r)| (m.clone(), serde_json::to_value(r).unwrap())).collect();
            println!("{}", serde_json::Value::Object(v));
        }
        Format::Text => {
            for (m, r) in &results {
                println!("{m}: mean delta {:.6e} (z = {:.6})", r.mean(), r.z);
            }
        }
    }
    Ok(())
}

impl PipelineArgs {
    fn pipeline_from(&self, cfg: PipelineConfig) -> CliResult<Pipeline> {
        if cfg.descriptor == DescriptorKind::Learned16 && cfg.model_path.is_none() {
            return Err(CliError::Usage("the dsm descriptor needs --model (or use --descriptor eigen)".into()));
        }
        Pipeline::new(cfg).map_err(CliError::data)
    }
}

fn eval_localize_run(map: &Path, clouds: &[PathBuf], out: Option<&Path>, args: &PipelineArgs, format: Format) -> CliResult {
    let pipeline = args.pipeline()?;
    let map = io::load_map(map).map_err(CliError::data)?;
    let clouds = read_clouds(clouds)?;
    let run = eval::localization_run(&pipeline, &clouds, &map).map_err(CliError::data)?;
    let record = serde_json::json!({
        "count": run.count,
        "results": run.poses.iter().map(|p| pose_record(p.as_ref())).collect::<Vec<_>>(),
    });
    if let Some(p) = out {
        write_file(p, &format!("{record}\n"))?;
    }
    match format {
        Format::Json => println!("{record}"),
        Format::Text => println!("{} of {} clouds localized", run.count, clouds.len()),
    }
    Ok(())
}

fn eval_bench_fps(p: usize, s: usize, m: usize, repeats: usize, seed: u64, out: Option<&Path>, format: Format) -> CliResult {
    let report = fps_benchmark(p, s, m, repeats, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(path) = out {
        write_file(path, &format!("{}\n{}\n", segloc::sampling::FpsBenchReport::csv_header(), report.csv_row()))?;
    }
    match format {
        Format::Json => println!("{}", to_json(&report)),
        Format::Text => print!("{}", report.table()),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_bench_pipeline(map: &Path, clouds: &[PathBuf], mode: ModeArg, repeats: usize, warmup: usize, out: Option<&Path>, args: &PipelineArgs, format: Format) -> CliResult {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let pipeline = args.pipeline()?;
    let map = io::load_map(map).map_err(CliError::data)?;
    let clouds = read_clouds(clouds)?;
    let modes: &[ThreadMode] = match mode {
        ModeArg::Single => &[ThreadMode::SingleCore],
        ModeArg::Multi => &[ThreadMode::MultiCore],
        ModeArg::Both => &[ThreadMode::SingleCore, ThreadMode::MultiCore],
    };
    let reports: Vec<eval::TimingReport> =
        modes.iter().map(|&m| eval::timing_bench(&pipeline, &clouds, &map, m, repeats, warmup)).collect::<Result<_, _>>().map_err(CliError::data)?;
    if reports.len() == 2 && reports[0].poses != reports[1].poses {
        return Err(CliError::Data("single- and multi-core runs disagree".into()));
    }
    if let Some(p) = out {
        let mut csv = format!("{}\n", eval::TimingReport::csv_header());
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
        }
        write_file(p, &csv)?;
    }
    match format {
        Format::Json => println!("{}", to_json(&reports)),
        Format::Text => reports.iter().for_each(|r| print!("{}", r.table())),
    }
    Ok(())
}

fn eval_bench_descriptor(model: Option<&Path>, segments: usize, repeats: usize, seed: u64, out: Option<&Path>, format: Format) -> CliResult {
    if segments == 0 || repeats == 0 {
        return Err(CliError::Usage("--segments and --repeats must be at least 1".into()));
    }
    let model = match model {
        Some(p) => load_model(p).map_err(CliError::data)?,
        None => init_model(&ChannelConfig::default(), seed).map_err(CliError::data)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let canon: Vec<_> = (0..segments)
        .map(|i| {
            let seg = segloc::synth::random_segment(&mut rng, i as u32, 600);
            canonicalize(&seg, AlignMode::Pca2d, seed).map_err(CliError::data)
        })
        .collect::<Result<_, _>>()?;
    let report = eval::descriptor_speed(&model, &canon, repeats).map_err(CliError::data)?;
    if let Some(p) = out {
        write_file(p, &format!("{}\n{}\n", eval::DescriptorSpeed::csv_header(), report.csv_row()))?;
    }
    match format {
        Format::Json => println!("{}", to_json(&report)),
        Format::Text => println!(
            "{} segments: down-sampling {:.1} ms, full resolution {:.1} ms, speedup {:.2}x",
            report.segments, report.dsm_ms, report.reference_ms, report.speedup
        ),
    }
    Ok(())
}

fn init_model_cmd(out: &Path, seed: u64, format: Format) -> CliResult {
    let model = init_model(&ChannelConfig::default(), seed).map_err(CliError::data)?;
    save_model(&model, out).map_err(CliError::data)?;
    let params = segloc::descriptor::param_count(&model);
    match format {
        Format::Json => println!("{}", serde_json::json!({ "parameters": params, "path": out.display().to_string() })),
        Format::Text => println!("{params} parameters -> {}", out.display()),
    }
    Ok(())
}

fn synth_world(out_dir: &Path, seed: u64, primitives: usize, views: usize, decoys: usize, format: Format) -> CliResult {
    let world = SynthWorld::generate(WorldParams { primitives, seed, ..Default::default() }).map_err(|e| CliError::Usage(e.to_string()))?;
    let view_params = ViewParams::default();
    let live = partial_views(&world, views, &view_params, seed.wrapping_add(1)).map_err(|e| CliError::Usage(e.to_string()))?;
    let decoy_world = SynthWorld::generate(WorldParams { primitives, seed: seed ^ 0x5eed_dec0, ..Default::default() }).map_err(CliError::data)?;
    let decoy_views = partial_views(&decoy_world, decoys, &view_params, seed.wrapping_add(2)).map_err(CliError::data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));

    fs::create_dir_all(out_dir.join("views")).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    fs::create_dir_all(out_dir.join("decoys")).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    let save = |cloud: &PointCloud, p: PathBuf| io::save_cloud_ply(cloud, &p, CloudFormat::BinaryPly).map_err(CliError::data);
    save(&world.map_cloud(), out_dir.join("map.ply"))?;
    let mut truths = Vec::new();
    for (i, v) in live.iter().enumerate() {
        save(&v.cloud, out_dir.join("views").join(format!("view_{i:03}.ply")))?;
        truths.push(serde_json::json!({ "file": format!("views/view_{i:03}.ply"), "truth": v.truth }));
    }
    for (i, v) in decoy_views.iter().enumerate() {
        let moved = apply_transform(&random_pose(&mut rng, Vector3::zeros(), 5.0), &v.cloud);
        save(&moved, out_dir.join("decoys").join(format!("decoy_{i:03}.ply")))?;
    }
    write_file(&out_dir.join("truth.json"), &format!("{}\n", serde_json::Value::Array(truths)))?;
    match format {
        Format::Json => println!("{}", serde_json::json!({ "primitives": world.primitives.len(), "views": live.len(), "decoys": decoy_views.len() })),
        Format::Text => println!("{} primitives, {} views, {} decoys -> {}", world.primitives.len(), live.len(), decoy_views.len(), out_dir.display()),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let f = cli.format;
    match cli.command {
        Command::BuildMap { inputs, out, swathe_poses, swathe_distance, pipeline } => build_map(&inputs, &out, swathe_poses.as_deref(), swathe_distance, &pipeline, f),
        Command::Localize { cloud, map, pipeline } => localize(&cloud, &map, &pipeline, f),
        Command::InitModel { out, seed } => init_model_cmd(&out, seed, f),
        Command::SynthWorld { out_dir, seed, primitives, views, decoys } => synth_world(&out_dir, seed, primitives, views, decoys, f),
        Command::Eval(e) => match e {
            EvalCommand::Roc { pairs, out, gnuplot } => eval_roc(&pairs, out.as_deref(), gnuplot.as_deref(), f),
            EvalCommand::Rotation { cloud, modes, step_deg, out, pipeline } => eval_rotation(&cloud, &modes, step_deg, out.as_deref(), &pipeline, f),
            EvalCommand::LocalizeRun { map, clouds, out, pipeline } => eval_localize_run(&map, &clouds, out.as_deref(), &pipeline, f),
            EvalCommand::BenchFps { p, s, m, repeats, seed, out } => eval_bench_fps(p, s, m, repeats, seed, out.as_deref(), f),
            EvalCommand::BenchPipeline { map, clouds, mode, repeats, warmup, out, pipeline } => {
                eval_bench_pipeline(&map, &clouds, mode, repeats, warmup, out.as_deref(), &pipeline, f)
            }
            EvalCommand::BenchDescriptor { model, segments, repeats, seed, out } => eval_bench_descriptor(model.as_deref(), segments, repeats, seed, out.as_deref(), f),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

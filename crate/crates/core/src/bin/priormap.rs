use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use priormap::eval::{evaluate, DistanceMode, EvalConfig};
use priormap::geometry::{ego_to_global, EgoPose, PerceptionRange};
use priormap::perturbation::{self, ElementPool, PerturbationOp, PerturbationSpec};
use priormap::plot::{write_before_after, Window};
use priormap::prior::export::write_heatmap;
use priormap::prior::{
    assemble_priors_with, rasterize, Mode, ModeRatio, PriorConfig, RasterConfig,
};
use priormap::rng::seeded_rng;
use priormap::sim::{self, ModePolicy, SimSpec};
use priormap::tile_store::{
    self, interchange, GlobalMap, Layer, MapVector, RefreshConfig, RetrievalOptions,
};

/// Tile-indexed prior maps: ingest, corrupt, retrieve, rasterize, simulate, evaluate.
#[derive(Parser, Debug)]
#[command(name = "priormap", version)]
struct Cli {
    /// Seed for every random draw; overrides seeds in spec files
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, env = "PRIORMAP_OUT_DIR", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Load a vector file into a global map file (<out>/map.uppm)
    Ingest(IngestArgs),
    /// Corrupt map vectors; writes perturbed.txt, perturbed.uppm and before_after.png
    Perturb(PerturbArgs),
    /// Ego-frame vectors around a pose; prints them and writes <out>/retrieved.txt
    Retrieve(RetrieveArgs),
    /// BEV heatmaps from ego-frame vectors or from a map and pose
    Rasterize(RasterizeArgs),
    /// Replay an episode; writes run_report.json and latency.json
    Sim(SimArgs),
    /// Chamfer AP of predictions against ground truth; writes <out>/ap_report.json
    Eval(EvalArgs),
    /// Per-stage latency against world size; writes <out>/bench.json
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct RangeArgs {
    /// Perception range in metres: front,rear,left,right
    #[arg(long, value_name = "F,R,L,Rt", value_parser = parse_range, default_value = "30,30,15,15")]
    range: PerceptionRange,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Vector interchange file (id class confidence e n z ...)
    input: PathBuf,
    /// Existing map to add to; a new map is created otherwise
    #[arg(long)]
    map: Option<PathBuf>,
    /// Treat the input as ego-frame predictions refreshed into the temporal layer
    #[arg(long, requires = "pose")]
    temporal: bool,
    /// Ego pose for --temporal: east,north,z,yaw (yaw in radians, counter-clockwise from east)
    #[arg(long, value_name = "E,N,Z,YAW", value_parser = parse_pose, allow_hyphen_values = true)]
    pose: Option<EgoPose>,
    /// Refreshment threshold for --temporal; confidences must exceed it
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    /// Tile side in metres; defaults to the long side of --range
    #[arg(long)]
    tile_side: Option<f64>,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    /// Map file (.uppm) or vector interchange file
    #[arg(long)]
    map: PathBuf,
    /// Perturbation spec, key = value lines
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Operators to apply, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "inst_displacement,inst_addition,inst_deletion,frame_displacement,frame_rotation,frame_scaling"
    )]
    ops: Vec<String>,
    /// Work on the static vectors around this pose, in its ego frame, instead of the whole map
    #[arg(long, value_name = "E,N,Z,YAW", value_parser = parse_pose, allow_hyphen_values = true)]
    pose: Option<EgoPose>,
    /// Plot resolution, pixels per metre
    #[arg(long, default_value_t = 10.0)]
    px_per_m: f64,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum LayerArg {
    Temporal,
    Static,
}

impl From<LayerArg> for Layer {
    fn from(l: LayerArg) -> Self {
        match l {
            LayerArg::Temporal => Layer::Temporal,
            LayerArg::Static => Layer::StaticMap,
        }
    }
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    /// Map file (.uppm)
    #[arg(long)]
    map: PathBuf,
    /// Ego pose: east,north,z,yaw
    #[arg(long, value_name = "E,N,Z,YAW", value_parser = parse_pose, allow_hyphen_values = true)]
    pose: EgoPose,
    /// Layer to query
    #[arg(long, value_enum, default_value = "static")]
    layer: LayerArg,
    /// Scan the full 3x3 tile block instead of the adjacency set
    #[arg(long)]
    strict_3x3: bool,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModeArg {
    NonPrior,
    TemporalPrior,
    TemporalMapFusion,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::NonPrior => Mode::NonPrior,
            ModeArg::TemporalPrior => Mode::TemporalPrior,
            ModeArg::TemporalMapFusion => Mode::TemporalMapFusion,
        }
    }
}

#[derive(Args, Debug)]
struct RasterizeArgs {
    /// Ego-frame vector file; writes <out>/heatmap.uphm and one .pgm per class
    input: Option<PathBuf>,
    /// Map file (.uppm); with --pose writes h_t and h_m heatmaps instead
    #[arg(long, conflicts_with = "input", requires = "pose")]
    map: Option<PathBuf>,
    /// Ego pose for --map: east,north,z,yaw
    #[arg(long, value_name = "E,N,Z,YAW", value_parser = parse_pose, allow_hyphen_values = true)]
    pose: Option<EgoPose>,
    /// Mode for --map
    #[arg(long, value_enum, conflicts_with = "ratio")]
    mode: Option<ModeArg>,
    /// Sample the mode for --map from this ratio: non_prior,temporal,fusion
    #[arg(long, value_name = "N,T,F", value_parser = parse_ratio)]
    ratio: Option<ModeRatio>,
    /// Cell size in metres
    #[arg(long, default_value_t = 0.3)]
    cell: f64,
    /// Stroke half-width in cells
    #[arg(long, default_value_t = 0)]
    halfwidth: usize,
    /// Vertical band in metres for --map; 0 disables the filter
    #[arg(long, default_value_t = 3.0)]
    band: f64,
    /// Scan the full 3x3 tile block when reading --map
    #[arg(long)]
    strict_3x3: bool,
    #[command(flatten)]
    range: RangeArgs,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Simulation spec (JSON, keys world and episode); defaults are used when absent
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of frames
    #[arg(long)]
    frames: Option<usize>,
    /// Fraction of tiles with a static map
    #[arg(long)]
    coverage: Option<f64>,
    /// Refreshment threshold
    #[arg(long)]
    tau: Option<f64>,
    /// Sample modes per frame from this ratio instead of availability switching
    #[arg(long, value_name = "N,T,F", value_parser = parse_ratio)]
    ratio: Option<ModeRatio>,
    /// Retrieve the full 3x3 tile block
    #[arg(long)]
    strict_3x3: bool,
    /// Cell size in metres
    #[arg(long)]
    cell: Option<f64>,
    /// Perception range: front,rear,left,right
    #[arg(long, value_name = "F,R,L,Rt", value_parser = parse_range)]
    range: Option<PerceptionRange>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction vector file; confidence is the score
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth vector file
    #[arg(long)]
    gt: PathBuf,
    /// Use the long-range thresholds 1.0, 1.5, 2.0 m
    #[arg(long, conflicts_with = "thresholds")]
    extended: bool,
    /// Custom Chamfer thresholds in metres
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Points per polyline after resampling
    #[arg(long, default_value_t = 20)]
    n_pts: usize,
    /// Include heights in the Chamfer distance
    #[arg(long = "3d")]
    full_3d: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// World sizes in vectors
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    sizes: Vec<usize>,
    /// Frames per world
    #[arg(long, default_value_t = 100)]
    frames: usize,
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != N {
        return Err(format!(
            "{what} needs {N} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .trim()
            .parse()
            .map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(out)
}

fn parse_range(s: &str) -> Result<PerceptionRange, String> {
    let [f, r, l, rt] = parse_floats::<4>(s, "range")?;
    PerceptionRange::new(f, r, l, rt).map_err(|e| e.to_string())
}

fn parse_pose(s: &str) -> Result<EgoPose, String> {
    let [e, n, z, yaw] = parse_floats::<4>(s, "pose")?;
    EgoPose::new(e, n, z, yaw).map_err(|e| e.to_string())
}

fn parse_ratio(s: &str) -> Result<ModeRatio, String> {
    let [n, t, f] = parse_floats::<3>(s, "ratio")?;
    ModeRatio::new(n, t, f).map_err(|e| e.to_string())
}

fn usage_error(kind: ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

/// A `.uppm` map, or an interchange file loaded into the static layer.
fn load_any_map(path: &Path, tile_side: f64) -> anyhow::Result<GlobalMap> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(&tile_store::MAGIC) {
        return Ok(tile_store::read_from(&bytes)?);
    }
    let text = String::from_utf8(bytes).context("map is neither UPPM nor UTF-8 text")?;
    let mut map = GlobalMap::new(tile_side)?;
    map.ingest_static(interchange::parse(&text, Layer::StaticMap)?);
    Ok(map)
}

fn read_vectors(path: &Path, layer: Layer) -> anyhow::Result<Vec<MapVector>> {
    interchange::read(path, layer).with_context(|| format!("reading {}", path.display()))
}

fn static_vectors(map: &GlobalMap) -> Vec<MapVector> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<MapVector> = map
        .layer(Layer::StaticMap)
        .values()
        .flatten()
        .filter(|v| seen.insert(v.id))
        .map(|v| (**v).clone())
        .collect();
    out.sort_by_key(|v| v.id);
    out
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn ingest(a: IngestArgs, out: &Path) -> anyhow::Result<()> {
    let tile_side = a.tile_side.unwrap_or(a.range.range.long_side());
    let mut map = match &a.map {
        Some(p) => tile_store::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GlobalMap::new(tile_side)?,
    };
    if a.temporal {
        let preds = read_vectors(&a.input, Layer::Temporal)?;
        let pose = a.pose.expect("clap requires --pose with --temporal");
        let stored = map.refresh(&preds, &pose, &RefreshConfig::new(a.tau)?);
        println!(
            "refreshed {} of {} predictions (tau {})",
            stored.len(),
            preds.len(),
            a.tau
        );
    } else {
        let vectors = read_vectors(&a.input, Layer::StaticMap)?;
        let n = vectors.len();
        map.ingest_static(vectors);
        println!("ingested {n} static vectors");
    }
    fs::create_dir_all(out)?;
    let path = out.join("map.uppm");
    tile_store::save(&map, &path)?;
    println!(
        "{}: {} temporal, {} static vectors, tile side {}",
        path.display(),
        map.vector_count(Layer::Temporal),
        map.vector_count(Layer::StaticMap),
        map.tile_side()
    );
    Ok(())
}

fn perturb(a: PerturbArgs, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let range = a.range.range;
    let map = load_any_map(&a.map, range.long_side())?;
    let mut spec = match &a.spec {
        Some(p) => PerturbationSpec::from_config_str(&fs::read_to_string(p)?)?,
        None => PerturbationSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let ops: BTreeSet<PerturbationOp> = perturbation::parse_ops(a.ops.iter().map(String::as_str))
        .unwrap_or_else(|e| usage_error(ErrorKind::InvalidValue, format!("--ops: {e}")));
    let all = static_vectors(&map);
    let before = match &a.pose {
        Some(pose) => map.retrieve(Layer::StaticMap, pose, &range, RetrievalOptions::default()),
        None => all.clone(),
    };
    let pool = ElementPool::new(all);
    let after = perturbation::apply_seeded(&before, &pool, &spec, &ops)?;

    write_out(out, "perturbed.txt", interchange::format(&after).as_bytes())?;
    let pose = a.pose.unwrap_or_else(EgoPose::identity);
    let mut corrupted = GlobalMap::new(map.tile_side())?;
    corrupted.ingest_static(
        after
            .iter()
            .map(|v| v.with_geometry(ego_to_global(&v.geometry, &pose))),
    );
    tile_store::save(&corrupted, out.join("perturbed.uppm"))?;
    let window = match a.pose {
        Some(_) => Window {
            x_min: -range.rear,
            x_max: range.front,
            y_min: -range.right,
            y_max: range.left,
        },
        None => Window::fit([&before[..], &after[..]]).unwrap_or(Window {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        }),
    };
    let png = out.join("before_after.png");
    write_before_after(&png, &before, &after, window, a.px_per_m)?;
    let tags: Vec<_> = ops.iter().map(|o| o.tag()).collect();
    println!(
        "perturbed {} -> {} vectors with [{}], seed {}",
        before.len(),
        after.len(),
        tags.join(", "),
        spec.seed
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn retrieve(a: RetrieveArgs, out: &Path) -> anyhow::Result<()> {
    let map = tile_store::load(&a.map).with_context(|| format!("loading {}", a.map.display()))?;
    let opts = RetrievalOptions {
        strict_3x3: a.strict_3x3,
    };
    let vectors = map.retrieve(a.layer.into(), &a.pose, &a.range.range, opts);
    let text = interchange::format(&vectors);
    print!("{text}");
    write_out(out, "retrieved.txt", text.as_bytes())?;
    eprintln!(
        "{} vectors from tiles {:?}",
        vectors.len(),
        map.query_tiles(&a.pose, opts)
    );
    Ok(())
}

fn rasterize_cmd(a: RasterizeArgs, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let raster = RasterConfig {
        cell: a.cell,
        range: a.range.range,
        line_halfwidth: a.halfwidth,
        ..RasterConfig::default()
    };
    raster.validate()?;
    match (&a.input, &a.map) {
        (Some(input), None) => {
            let vectors = read_vectors(input, Layer::StaticMap)?;
            let grid = rasterize(&vectors, &raster)?;
            write_heatmap(out, "heatmap", &grid)?;
            let (c, r, w) = grid.shape();
            println!("{c}x{r}x{w} heatmap, {} cells set", grid.count_ones());
        }
        (None, Some(path)) => {
            let map =
                tile_store::load(path).with_context(|| format!("loading {}", path.display()))?;
            let pose = a.pose.expect("clap requires --pose with --map");
            let mode = match (a.mode, a.ratio) {
                (Some(m), _) => m.into(),
                (None, Some(r)) => {
                    priormap::prior::sample_mode(&r, &mut seeded_rng(seed.unwrap_or(0)))
                }
                (None, None) => Mode::TemporalMapFusion,
            };
            let cfg = PriorConfig {
                raster,
                vertical_band: (a.band > 0.0).then_some(a.band),
                retrieval: RetrievalOptions {
                    strict_3x3: a.strict_3x3,
                },
            };
            let pri = assemble_priors_with(mode, &map, &pose, &cfg, Ok)?;
            write_heatmap(out, "h_t", &pri.heatmaps.temporal)?;
            write_heatmap(out, "h_m", &pri.heatmaps.map)?;
            println!(
                "mode {mode}: H_t {} cells from {} vectors, H_m {} cells from {} vectors",
                pri.heatmaps.temporal.count_ones(),
                pri.temporal_vectors.len(),
                pri.heatmaps.map.count_ones(),
                pri.map_vectors.len()
            );
        }
        _ => usage_error(
            ErrorKind::MissingRequiredArgument,
            "rasterize needs an INPUT file or --map",
        ),
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn sim_cmd(a: SimArgs, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SimSpec::from_json(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => SimSpec::default(),
    };
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    let ep = &mut spec.episode;
    if let Some(f) = a.frames {
        ep.replay.frames = f;
    }
    if let Some(c) = a.coverage {
        ep.replay.map_coverage = sim::Coverage::Fraction(c);
    }
    if let Some(t) = a.tau {
        ep.refresh = RefreshConfig::new(t)?;
    }
    if let Some(r) = a.ratio {
        ep.policy = ModePolicy::Sampled { ratio: r };
    }
    if a.strict_3x3 {
        ep.prior.retrieval.strict_3x3 = true;
    }
    if let Some(c) = a.cell {
        ep.prior.raster.cell = c;
    }
    if let Some(r) = a.range {
        ep.prior.raster.range = r;
    }
    let run = spec.run()?;
    let report = &run.report;
    write_out(out, "run_report.json", report.to_json().as_bytes())?;
    let latency = serde_json::to_string_pretty(&run.latency)?;
    write_out(out, "latency.json", latency.as_bytes())?;

    let mut counts = [0usize; 3];
    for f in &report.frames {
        counts[f.mode as usize] += 1;
    }
    println!("frames {}", report.frames.len());
    for m in [Mode::NonPrior, Mode::TemporalPrior, Mode::TemporalMapFusion] {
        println!("  {:<20} {}", m.name(), counts[m as usize]);
    }
    let med = sim::replay::median_latency(&run.latency);
    println!(
        "median latency ms: retrieval {:.3}, rasterization {:.3}, refreshment {:.3}",
        med.retrieval_ms, med.rasterization_ms, med.refreshment_ms
    );
    if let Some(ap) = &report.ap {
        println!("detector vs ground truth\n{}", ap.detector);
        println!("temporal prior vs ground truth\n{}", ap.temporal_prior);
        println!("map prior vs ground truth\n{}", ap.map_prior);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs, out: &Path) -> anyhow::Result<()> {
    let preds = read_vectors(&a.pred, Layer::Temporal)?;
    let gts = read_vectors(&a.gt, Layer::StaticMap)?;
    let mut cfg = if a.extended {
        EvalConfig::extended()
    } else {
        EvalConfig::standard()
    };
    if let Some(t) = a.thresholds {
        cfg.thresholds = t;
    }
    cfg.n_pts = a.n_pts;
    if a.full_3d {
        cfg.mode = DistanceMode::Full3d;
    }
    if let Err(e) = cfg.validate() {
        usage_error(ErrorKind::InvalidValue, e);
    }
    let report = evaluate(&preds, &gts, &cfg)?;
    print!("{report}");
    write_out(out, "ap_report.json", report.to_json().as_bytes())?;
    Ok(())
}

fn bench_cmd(a: BenchArgs, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    if a.frames == 0 {
        usage_error(ErrorKind::InvalidValue, "--frames must be at least 1");
    }
    let seed = seed.unwrap_or(0);
    println!("{}", sim::BenchRow::header());
    let mut rows = Vec::new();
    for &n in &a.sizes {
        let row = sim::bench_world(n, a.frames, seed, true)?;
        println!("{}", row.line());
        rows.push(row);
    }
    write_out(
        out,
        "bench.json",
        serde_json::to_string_pretty(&rows)?.as_bytes(),
    )?;
    if let Some(row) = rows.iter().find(|r| r.vectors == 10_000) {
        let ok = row.retrieval_ms + row.refreshment_ms < 10.0 && row.rasterization_ms < 30.0;
        println!(
            "10^4-vector budget (retrieval+refreshment < 10 ms, rasterization < 30 ms): {}",
            if ok { "met" } else { "missed" }
        );
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out.as_path();
    match cli.cmd {
        Cmd::Ingest(a) => ingest(a, out),
        Cmd::Perturb(a) => perturb(a, cli.seed, out),
        Cmd::Retrieve(a) => retrieve(a, out),
        Cmd::Rasterize(a) => rasterize_cmd(a, cli.seed, out),
        Cmd::Sim(a) => sim_cmd(a, cli.seed, out),
        Cmd::Eval(a) => eval_cmd(a, out),
        Cmd::Bench(a) => bench_cmd(a, cli.seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use garage_core::classify::{classify_all, ClassifyError};
use garage_core::grid::{validate, CellRef, GarageSpec};
use garage_core::scenario::{
    build_case1, build_case2, build_case3, run_scenario_with, Case1Params, Case2Params, Case3Params, DifficultyScore,
    RunOptions, Scenario, ScenarioError, ScenarioFile, ScenarioReport, SlotEntry, Weights,
};
use garage_core::scene::{populate_vehicles, synthesize, LightLevel, OccupancyPlan, PlanError, SceneGraph, SynthOptions, VehicleSize};
use garage_core::visibility::{CameraConfig, EgoPose, VisibilityError, DEFAULT_RESOLUTION, DEFAULT_STEP};

/// Failure split by exit code: 1 for rejected inputs, 2 for I/O, schema and usage problems.
#[derive(Debug)]
enum Failure {
    Rejected(anyhow::Error),
    Usage(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Rejected(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

type Outcome = Result<(), Failure>;

fn rejected(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Rejected(e.into())
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    Human,
}

#[derive(Debug, Parser)]
#[command(name = "garage", version, about = "Underground garage scene compiler and visibility analyzer")]
struct Cli {
    /// Accepted for scripting symmetry; no command uses randomness.
    #[arg(long, global = true)]
    seedless: bool,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// TOML file with default settings; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a garage spec (JSON file or CSV directory).
    Validate { spec: PathBuf },
    /// Build a scene from a garage spec.
    Generate(GenerateArgs),
    /// Build and run a test scenario.
    Scenario(ScenarioArgs),
    /// Recompute the difficulty score of a report.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    spec: PathBuf,
    #[arg(long, value_parser = parse_light)]
    light: Option<LightLevel>,
    /// Occupancy plan ("occupancy/1" JSON).
    #[arg(long)]
    occupancy: Option<PathBuf>,
    /// Interior corners to leave without a column, as "i,j;i,j".
    #[arg(long)]
    prune_columns: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    classified_out: Option<PathBuf>,
    #[arg(long)]
    obj_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CameraArgs {
    #[arg(long)]
    mount_height: Option<f64>,
    #[arg(long)]
    fov: Option<f64>,
    #[arg(long)]
    aspect: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Face samples per side.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3), conflicts_with = "file")]
    case: Option<u8>,
    /// Scenario parameter document ("scenario/1" JSON).
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, value_parser = parse_light)]
    light: Option<LightLevel>,
    #[arg(long)]
    column_setback: Option<f64>,
    #[arg(long)]
    lane_width: Option<f64>,
    #[arg(long)]
    target_distance: Option<f64>,
    #[arg(long, value_parser = parse_size)]
    target_size: Option<VehicleSize>,
    #[arg(long)]
    column_offset: Option<f64>,
    #[arg(long)]
    lane_distance: Option<f64>,
    #[arg(long)]
    path_length: Option<f64>,
    /// Case 3 layout: JSON list of {"slot", "size"} entries.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Scene document replacing the built scene, or the scene of a custom run.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Custom camera path: JSON list of {"x", "y", "heading"} poses.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Target vehicle id for a custom run; repeatable.
    #[arg(long = "target")]
    targets: Vec<String>,
    #[arg(long, value_parser = parse_weights)]
    weights: Option<Weights>,
    #[command(flatten)]
    camera: CameraArgs,
    /// Report file; one sweep CSV per target is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    report: PathBuf,
    #[arg(long, value_parser = parse_weights)]
    weights: Option<Weights>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    format: Option<Format>,
    light: Option<LightLevel>,
    weights: Option<[f64; 3]>,
    step: Option<f64>,
    resolution: Option<usize>,
    camera: Option<CameraConfig>,
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = read(path)?;
        toml::from_str(&text).with_context(|| format!("config {}", path.display())).map_err(usage)
    }

    fn weights(&self) -> Result<Option<Weights>, Failure> {
        self.weights
            .map(|[a, b, c]| Weights::new(a, b, c))
            .transpose()
            .context("config weights")
            .map_err(usage)
    }
}

fn parse_light(s: &str) -> Result<LightLevel, String> {
    LightLevel::parse(s).ok_or_else(|| format!("unknown light level {s:?} (bright, clear, moderate, dim)"))
}

fn parse_size(s: &str) -> Result<VehicleSize, String> {
    VehicleSize::parse(s).ok_or_else(|| format!("unknown vehicle size {s:?} (small, medium, large)"))
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    Weights::parse(s).map_err(|e| e.to_string())
}

fn parse_corners(s: &str) -> anyhow::Result<Vec<CellRef>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|pair| {
            let (i, j) = pair.split_once(',').ok_or_else(|| anyhow!("corner {pair:?} is not \"i,j\""))?;
            Ok(CellRef::new(
                i.trim().parse().with_context(|| format!("corner {pair:?}"))?,
                j.trim().parse().with_context(|| format!("corner {pair:?}"))?,
            ))
        })
        .collect()
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn load_spec(path: &Path) -> Result<GarageSpec, Failure> {
    let parsed = if path.is_dir() {
        GarageSpec::from_csv_dir(path)
    } else {
        GarageSpec::from_json(&read(path)?)
    };
    parsed.with_context(|| format!("spec {}", path.display())).map_err(usage)
}

fn load_scene(path: &Path) -> Result<SceneGraph, Failure> {
    SceneGraph::from_json(&read(path)?)
        .with_context(|| format!("scene {}", path.display()))
        .map_err(usage)
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(usage)
}

fn cmd_validate(spec_path: &Path, format: Format) -> Outcome {
    let spec = load_spec(spec_path)?;
    let report = validate(&spec);
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
        Format::Csv => {
            println!("rule,location,message");
            for v in &report.violations {
                let loc = serde_json::to_string(&v.location).expect("location serializes");
                println!("{},\"{}\",\"{}\"", v.rule.as_str(), loc.replace('"', "\"\""), v.message.replace('"', "\"\""));
            }
        }
        Format::Human => print!("{report}"),
    }
    if report.ok {
        Ok(())
    } else {
        Err(rejected(anyhow!("{} violation(s)", report.violations.len())))
    }
}

fn node_counts(scene: &SceneGraph) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for node in &scene.nodes {
        let kind = serde_json::to_value(node.kind).expect("kind serializes");
        *counts.entry(kind.as_str().unwrap_or("unknown").to_string()).or_insert(0) += 1;
    }
    counts
}

fn cmd_generate(args: &GenerateArgs, cfg: &Config, format: Format) -> Outcome {
    let spec = load_spec(&args.spec)?;
    let grid = classify_all(&spec).map_err(|e| match e {
        ClassifyError::Invalid(report) => rejected(anyhow!("invalid spec:\n{report}")),
        other => rejected(other),
    })?;
    let pruned_columns = match &args.prune_columns {
        Some(s) => parse_corners(s).context("--prune-columns").map_err(usage)?,
        None => Vec::new(),
    };
    let options = SynthOptions {
        light: args.light.or(cfg.light).unwrap_or_default(),
        pruned_columns,
    };
    let mut scene = synthesize(&grid, &options);
    if let Some(path) = &args.occupancy {
        let plan = OccupancyPlan::from_json(&read(path)?).map_err(|e| match e {
            PlanError::Document(_) => usage(e),
            _ => rejected(e),
        })?;
        scene = populate_vehicles(&scene, &grid, &plan).map_err(rejected)?;
    }
    if let Some(path) = &args.classified_out {
        write(path, &grid.to_json())?;
    }
    if let Some(path) = &args.obj_out {
        write(path, &scene.to_obj())?;
    }
    let counts = node_counts(&scene);
    match &args.out {
        Some(path) => {
            write(path, &scene.to_json())?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&counts).expect("counts serialize")),
                Format::Csv => {
                    println!("kind,count");
                    counts.iter().for_each(|(k, n)| println!("{k},{n}"));
                }
                Format::Human => {
                    println!("{} nodes", scene.nodes.len());
                    counts.iter().for_each(|(k, n)| println!("  {k}: {n}"));
                }
            }
        }
        None => {
            print!("{}", scene.to_json());
            eprintln!("{} nodes", scene.nodes.len());
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LayoutDoc {
    Bare(Vec<SlotEntry>),
    Wrapped { layout: Vec<SlotEntry> },
}

fn build_scenario(args: &ScenarioArgs, light: LightLevel) -> Result<Scenario, Failure> {
    let construction = |e: ScenarioError| rejected(e);
    let scn = if let Some(path) = &args.file {
        let file = ScenarioFile::from_json(&read(path)?)
            .with_context(|| format!("scenario {}", path.display()))
            .map_err(usage)?;
        let scn = file.build().map_err(construction)?;
        match args.light {
            Some(level) => scn.with_light(level),
            None => scn,
        }
    } else if let Some(case) = args.case {
        let scn = match case {
            1 => {
                let d = Case1Params::default();
                build_case1(&Case1Params {
                    column_setback: args.column_setback.unwrap_or(d.column_setback),
                    lane_width: args.lane_width.unwrap_or(d.lane_width),
                    target_distance: args.target_distance.unwrap_or(d.target_distance),
                    target_size: args.target_size.unwrap_or(d.target_size),
                })
            }
            2 => {
                let d = Case2Params::default();
                build_case2(&Case2Params {
                    column_offset: args.column_offset.unwrap_or(d.column_offset),
                    lane_distance: args.lane_distance.unwrap_or(d.lane_distance),
                    target_size: args.target_size.unwrap_or(d.target_size),
                })
            }
            _ => {
                let mut p = Case3Params::default();
                if let Some(path) = &args.layout {
                    p.layout = match load_json::<LayoutDoc>(path)? {
                        LayoutDoc::Bare(l) | LayoutDoc::Wrapped { layout: l } => l,
                    };
                }
                if let Some(len) = args.path_length {
                    p.path_length = len;
                }
                build_case3(&p)
            }
        }
        .map_err(construction)?;
        scn.with_light(light)
    } else {
        let (Some(scene), Some(path)) = (&args.scene, &args.path) else {
            return Err(usage(anyhow!("give --case, --file, or --scene with --path and --target")));
        };
        let poses: Vec<EgoPose> = load_json(path)?;
        let scn = Scenario::custom(load_scene(scene)?, poses, args.targets.clone()).map_err(construction)?;
        return Ok(match args.light {
            Some(level) => scn.with_light(level),
            None => scn,
        });
    };
    match &args.scene {
        Some(path) => {
            let scene = load_scene(path)?;
            for id in &scn.target_ids {
                if scene.node(id).is_none() {
                    return Err(rejected(VisibilityError::UnknownTarget(id.clone())));
                }
            }
            Ok(scn.with_scene(scene))
        }
        None => Ok(scn),
    }
}

fn sweep_csv_path(out: &Path, target: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}.{target}.csv"))
}

fn cmd_scenario(args: &ScenarioArgs, cfg: &Config, format: Format) -> Outcome {
    let light = args.light.or(cfg.light).unwrap_or_default();
    let scn = build_scenario(args, light)?;
    let mut camera = cfg.camera.unwrap_or_default();
    if let Some(v) = args.camera.mount_height {
        camera.mount_height = v;
    }
    if let Some(v) = args.camera.fov {
        camera.horizontal_fov_deg = v;
    }
    if let Some(v) = args.camera.aspect {
        camera.aspect = v;
    }
    let opts = RunOptions {
        weights: match args.weights {
            Some(w) => w,
            None => cfg.weights()?.unwrap_or_default(),
        },
        step: args.camera.step.or(cfg.step).unwrap_or(DEFAULT_STEP),
        resolution: args.camera.resolution.or(cfg.resolution).unwrap_or(DEFAULT_RESOLUTION),
    };
    if opts.resolution == 0 {
        return Err(usage(anyhow!("--resolution must be at least 1")));
    }
    let report = run_scenario_with(&scn, &camera, &opts).map_err(|e| match e {
        ScenarioError::Visibility(VisibilityError::InvalidCamera(_) | VisibilityError::InvalidStep(_)) => usage(e),
        other => rejected(other),
    })?;
    if let Some(out) = &args.out {
        write(out, &report.to_json())?;
        for sweep in &report.sweeps {
            write(&sweep_csv_path(out, &sweep.target_id), &sweep.to_csv())?;
        }
    }
    match (format, &args.out) {
        (Format::Json, None) => print!("{}", report.to_json()),
        (Format::Csv, _) => {
            for sweep in &report.sweeps {
                print!("{}", sweep.to_csv());
            }
        }
        (Format::Json, Some(_)) => println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "score": report.score,
                "stats": report.stats,
                "clearing": report.clearing,
            }))
            .expect("summary serializes")
        ),
        (Format::Human, _) => print_report_summary(&report),
    }
    Ok(())
}

fn print_report_summary(report: &ScenarioReport) {
    let label = serde_json::to_value(report.label).expect("label serializes");
    println!("scenario {} ({} light)", label.as_str().unwrap_or("?"), report.light_level.as_str());
    for s in &report.stats {
        println!(
            "  {}: min {:.3}, mean {:.3}, {} samples in view",
            s.target_id, s.min_visible, s.mean_visible, s.in_frustum_samples
        );
    }
    if let Some(c) = &report.clearing {
        let at = c.clearing_s_m.map_or_else(|| "never".to_string(), |s| format!("{s} m"));
        println!(
            "  clearing at {at}: start {:.3}, recovered {}, monotone {}",
            c.start_fraction, c.recovered, c.monotone
        );
    }
    for p in &report.compound_pairs {
        println!(
            "  {} hides {}: min {:.3} -> {:.3}",
            p.occluder, p.target, p.min_solo, p.min_with
        );
    }
    print_score(&report.score);
}

fn print_score(s: &DifficultyScore) {
    println!("total {:.3}", s.total);
    println!("  occlusion {:.4} x {}", s.occlusion_term, s.weights.occlusion);
    println!("  blackout  {:.4} x {}", s.blackout_term, s.weights.blackout);
    println!("  light     {:.4} x {}", s.light_term, s.weights.light);
}

fn cmd_score(args: &ScoreArgs, cfg: &Config, format: Format) -> Outcome {
    let report = ScenarioReport::from_json(&read(&args.report)?)
        .with_context(|| format!("report {}", args.report.display()))
        .map_err(usage)?;
    let weights = match args.weights {
        Some(w) => w,
        None => cfg.weights()?.unwrap_or_default(),
    };
    let score = report.rescore(weights).map_err(rejected)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&score).expect("score serializes")),
        Format::Csv => {
            println!("total,occlusion_term,blackout_term,light_term,w_occlusion,w_blackout,w_light");
            println!(
                "{},{},{},{},{},{},{}",
                score.total,
                score.occlusion_term,
                score.blackout_term,
                score.light_term,
                score.weights.occlusion,
                score.weights.blackout,
                score.weights.light
            );
        }
        Format::Human => print_score(&score),
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let cfg = Config::load(cli.config.as_deref())?;
    let format = cli.format.or(cfg.format).unwrap_or(Format::Human);
    match &cli.command {
        Command::Validate { spec } => cmd_validate(spec, format),
        Command::Generate(args) => cmd_generate(args, &cfg, format),
        Command::Scenario(args) => cmd_scenario(args, &cfg, format),
        Command::Score(args) => cmd_score(args, &cfg, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::Rejected(e) | Failure::Usage(e)) = &failure;
            eprintln!("error: {e:#}");
            ExitCode::from(failure.code())
        }
    }
}

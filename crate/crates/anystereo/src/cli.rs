//! Command-line surface. [`execute`] runs a parsed [`Cli`]; `main` is a thin
//! wrapper so the commands can be driven from tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use anystereo_core::augment::{apply_spec, sample_spec, AugmentConfig, AugmentationSpec, Chromatic};
use anystereo_core::eval::{compute_metrics, evaluate_protocol, robustness_sweep, Perturbation};
use anystereo_core::rds::{generate, mixed_suite, SceneKind, SceneSpec};
use anystereo_core::tuner::{tune, Param, Sample};
use anystereo_core::{InputMode, Matcher, MatcherConfig, WallClock};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::calib::{read_calib, Calib};
use crate::files::{load_disparity, load_image, save_disparity, save_image};
use crate::manifest::{parse_dataset, RunManifest, StageTiming};
use crate::report::{all_only_csv, protocol_csv, sweep_csv};

#[derive(Debug, Parser)]
#[command(name = "anystereo", version, about = "Anytime coarse-to-fine stereo matching")]
pub struct Cli {
    /// Worker threads; results are identical for any count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match a rectified pair and write one PFM per completed stage.
    Match(MatchArgs),
    /// Score a disparity map against ground truth as CSV.
    Eval(EvalArgs),
    /// Draw and apply a random augmentation to a pair.
    Augment(AugmentArgs),
    /// Sweep a target-view perturbation and report avgerr per grid value.
    Sweep(SweepArgs),
    /// Fit decoder parameters on a dataset listing.
    Tune(TuneArgs),
    /// Write one synthetic random-dot scene.
    Generate(GenerateArgs),
    /// Write a mixed constant/plane scene suite and its dataset listing.
    Suite(SuiteArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    /// Disparity search range in full-resolution pixels.
    #[arg(long)]
    pub dmax: Option<usize>,
    /// Calibration file supplying `ndisp` when `--dmax` is absent.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Input scale: F (full), H (half) or Q (quarter).
    #[arg(long, default_value = "F")]
    pub mode: InputMode,
    /// Skip later stages once a stage finishes past this many ms.
    #[arg(long)]
    pub budget_ms: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Outputs are `<prefix>-<MODE><stage>.pfm` and `<prefix>-manifest.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Baseline in metres.
    #[arg(long, requires = "focal")]
    pub baseline: Option<f64>,
    /// Focal length in pixels.
    #[arg(long, requires = "baseline")]
    pub focal: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
    pub tau: Vec<f64>,
    /// Require the depth-range protocol (fails without rig geometry).
    #[arg(long)]
    pub ranges: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Training,
    Sweep,
    Identity,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "training")]
    pub preset: Preset,
    #[arg(long)]
    pub out_left: PathBuf,
    #[arg(long)]
    pub out_right: PathBuf,
    #[arg(long, requires = "gt")]
    pub out_gt: Option<PathBuf>,
    /// Defaults to `<out-left>.spec.json`.
    #[arg(long)]
    pub spec_out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepKind {
    Rotation,
    Ytrans,
    Occlusion,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    /// Grid values replacing the default (degrees, pixels or patch sides).
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dmax: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Listing of `left right gt` paths, relative to the listing.
    pub dataset: PathBuf,
    /// Maximum dataset evaluations.
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dmax: Option<usize>,
    /// Parameters to search, by name; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// Tuned configuration (`key=value`).
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV; defaults to `<out>.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Constant,
    Plane,
    TwoPlane,
    Step,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "constant")]
    pub kind: KindArg,
    /// Constant disparity.
    #[arg(long, default_value_t = 16.0)]
    pub d0: f64,
    /// Plane `a·x + b·y + c`.
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b: f64,
    #[arg(long, default_value_t = 16.0)]
    pub c: f64,
    /// Step: disparity left of the edge, right of it, and the edge column.
    #[arg(long, default_value_t = 8.0)]
    pub far: f64,
    #[arg(long, default_value_t = 24.0)]
    pub near: f64,
    #[arg(long)]
    pub edge: Option<usize>,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the views as PFM instead of 16-bit PNG.
    #[arg(long)]
    pub float: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = 8.0)]
    pub d_lo: f64,
    #[arg(long, default_value_t = 96.0)]
    pub d_hi: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub float: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Runs a parsed command line. `argv` is recorded in manifests; CSV that is
/// not redirected to a file goes to `out`.
pub fn execute(cli: &Cli, argv: &[String], out: &mut (dyn Write + Send)) -> Result<()> {
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .context("building thread pool")?;
            pool.install(|| dispatch(cli, argv, out))
        }
        None => dispatch(cli, argv, out),
    }
}

/// Parses `argv` (program name first) and runs it.
pub fn run<S: AsRef<str>>(argv: &[S], out: &mut (dyn Write + Send)) -> Result<()> {
    let argv: Vec<String> = argv.iter().map(|s| s.as_ref().to_string()).collect();
    let cli = Cli::try_parse_from(&argv)?;
    execute(&cli, &argv, out)
}

fn dispatch(cli: &Cli, argv: &[String], out: &mut (dyn Write + Send)) -> Result<()> {
    let mut m = RunManifest::new(command_name(&cli.command), argv);
    m.threads = cli.threads;
    match &cli.command {
        Command::Match(a) => cmd_match(a, m),
        Command::Eval(a) => cmd_eval(a, m, out),
        Command::Augment(a) => cmd_augment(a, m),
        Command::Sweep(a) => cmd_sweep(a, m, out),
        Command::Tune(a) => cmd_tune(a, m),
        Command::Generate(a) => cmd_generate(a, m),
        Command::Suite(a) => cmd_suite(a, m),
        Command::Replay { manifest } => {
            let rec = RunManifest::load(manifest)
                .with_context(|| format!("reading {}", manifest.display()))?;
            if rec.command == "replay" {
                bail!("refusing to replay a replay");
            }
            run(&rec.argv, out)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Match(_) => "match",
        Command::Eval(_) => "eval",
        Command::Augment(_) => "augment",
        Command::Sweep(_) => "sweep",
        Command::Tune(_) => "tune",
        Command::Generate(_) => "generate",
        Command::Suite(_) => "suite",
        Command::Replay { .. } => "replay",
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// `explicit`, or `<primary><suffix>` next to the primary output.
fn beside(explicit: &Option<PathBuf>, primary: &Path, suffix: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut s = primary.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    })
}

fn load_config(path: &Option<PathBuf>, m: &mut RunManifest) -> Result<MatcherConfig> {
    match path {
        Some(p) => {
            m.config_path = Some(display(p));
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            MatcherConfig::from_kv(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(MatcherConfig::default()),
    }
}

fn load_calib(path: &Path) -> Result<Calib> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_calib(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Option<PathBuf>, text: &str, out: &mut (dyn Write + Send), m: &mut RunManifest) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            m.outputs.push(display(p));
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_match(a: &MatchArgs, mut m: RunManifest) -> Result<()> {
    let mut cfg = load_config(&a.config, &mut m)?;
    cfg.input_mode = a.mode;
    if let Some(d) = a.dmax {
        cfg.d_max = d;
    } else if let Some(c) = &a.calib {
        cfg.d_max = load_calib(c)?.ndisp;
        m.inputs.push(display(c));
    }
    let left = load_image(&a.left).with_context(|| format!("reading {}", a.left.display()))?;
    let right = load_image(&a.right).with_context(|| format!("reading {}", a.right.display()))?;
    m.inputs.splice(0..0, [display(&a.left), display(&a.right)]);
    let matcher = Matcher::new(cfg)?;
    let prefix = display(&a.out_prefix);
    let mut failure = None;
    let out = matcher.run_with(&left, &right, a.budget_ms, &WallClock::new(), |r| {
        if failure.is_some() {
            return;
        }
        let name = r.name(a.mode);
        let path = PathBuf::from(format!("{prefix}-{name}.pfm"));
        match save_disparity(&path, &r.disparity) {
            Ok(()) => {
                m.outputs.push(display(&path));
                m.stages.push(StageTiming {
                    name,
                    elapsed_ms: r.elapsed_ms,
                    work_counter: r.work_counter,
                });
            }
            Err(e) => failure = Some(anyhow::Error::new(e).context(format!("writing {}", path.display()))),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    m.save(&PathBuf::from(format!("{prefix}-manifest.json")))?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs, mut m: RunManifest, out: &mut (dyn Write + Send)) -> Result<()> {
    let pred = load_disparity(&a.pred).with_context(|| format!("reading {}", a.pred.display()))?;
    let gt = load_disparity(&a.gt).with_context(|| format!("reading {}", a.gt.display()))?;
    m.inputs = vec![display(&a.pred), display(&a.gt)];
    let geometry = match (a.baseline, a.focal, &a.calib) {
        (Some(b), Some(f), _) => Some((b, f)),
        (_, _, Some(c)) => {
            m.inputs.push(display(c));
            let cal = load_calib(c)?;
            match (cal.baseline, cal.focal) {
                (Some(b), Some(f)) => Some((b, f)),
                _ if a.ranges => bail!("{} lacks baseline and focal for the range protocol", c.display()),
                _ => None,
            }
        }
        _ => None,
    };
    let csv = match geometry {
        Some((b, f)) => protocol_csv(&evaluate_protocol(&pred, &gt, b, f, &a.tau)?, &a.tau),
        None if a.ranges => bail!("the range protocol needs --calib or --baseline/--focal"),
        None => all_only_csv(&compute_metrics(&pred, &gt, &a.tau)?, &a.tau),
    };
    write_text(&a.out, &csv, out, &mut m)?;
    if let Some(p) = a.out.as_ref().map(|o| beside(&a.manifest, o, ".manifest.json")).or(a.manifest.clone()) {
        m.save(&p)?;
    }
    Ok(())
}

fn chromatic_json(c: Option<Chromatic>) -> serde_json::Value {
    match c {
        Some(c) => json!({"brightness": c.brightness, "gamma": c.gamma, "contrast": c.contrast}),
        None => serde_json::Value::Null,
    }
}

/// JSON form of a drawn augmentation.
pub fn spec_json(s: &AugmentationSpec) -> serde_json::Value {
    json!({
        "seed": s.seed,
        "ydisparity": s.ydisp.map(|y| json!({"rotation_deg": y.rotation_deg, "ty": y.ty})),
        "chromatic_left": chromatic_json(s.chromatic_left),
        "chromatic_right": chromatic_json(s.chromatic_right),
        "mask": s.mask.map(|r| json!({"x": r.x, "y": r.y, "w": r.w, "h": r.h})),
        "scale_crop": s.symmetric.map(|c| json!({
            "scale": c.scale, "x": c.crop_x, "y": c.crop_y, "w": c.crop_w, "h": c.crop_h
        })),
    })
}

fn cmd_augment(a: &AugmentArgs, mut m: RunManifest) -> Result<()> {
    let left = load_image(&a.left).with_context(|| format!("reading {}", a.left.display()))?;
    let right = load_image(&a.right).with_context(|| format!("reading {}", a.right.display()))?;
    let gt = a.gt.as_ref().map(|p| load_disparity(p)).transpose()?;
    m.inputs = vec![display(&a.left), display(&a.right)];
    m.inputs.extend(a.gt.iter().map(|p| display(p)));
    m.seed = a.seed;
    let cfg = match a.preset {
        Preset::Training => AugmentConfig::training(),
        Preset::Sweep => AugmentConfig::sweep(),
        Preset::Identity => AugmentConfig::identity(),
    };
    let spec = sample_spec(a.seed, &cfg, left.width(), left.height());
    let (l, r, g) = apply_spec(&left, &right, gt.as_ref(), &spec)?;
    save_image(&a.out_left, &l)?;
    save_image(&a.out_right, &r)?;
    m.outputs = vec![display(&a.out_left), display(&a.out_right)];
    if let (Some(p), Some(g)) = (&a.out_gt, g) {
        save_disparity(p, &g)?;
        m.outputs.push(display(p));
    }
    let spec_path = beside(&a.spec_out, &a.out_left, ".spec.json");
    fs::write(&spec_path, serde_json::to_string_pretty(&spec_json(&spec))? + "\n")?;
    m.outputs.push(display(&spec_path));
    m.save(&beside(&a.manifest, &a.out_left, ".manifest.json"))?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, mut m: RunManifest, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut cfg = load_config(&a.config, &mut m)?;
    if let Some(d) = a.dmax {
        cfg.d_max = d;
    }
    let left = load_image(&a.left)?;
    let right = load_image(&a.right)?;
    let gt = load_disparity(&a.gt)?;
    m.inputs = vec![display(&a.left), display(&a.right), display(&a.gt)];
    let grid = a.grid.clone();
    let p = match (a.kind, grid.is_empty()) {
        (SweepKind::Rotation, true) => Perturbation::rotation(),
        (SweepKind::Ytrans, true) => Perturbation::y_translation(),
        (SweepKind::Occlusion, true) => Perturbation::occlusion(),
        (SweepKind::Rotation, false) => Perturbation::Rotation(grid),
        (SweepKind::Ytrans, false) => Perturbation::YTranslation(grid),
        (SweepKind::Occlusion, false) => {
            if grid.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                bail!("occlusion grid values must be whole, nonnegative pixel counts");
            }
            Perturbation::Occlusion(grid.iter().map(|&v| v as usize).collect())
        }
    };
    let points = robustness_sweep(&Matcher::new(cfg)?, &left, &right, &gt, &p)?;
    write_text(&a.out, &sweep_csv(&points), out, &mut m)?;
    if let Some(p) = a.out.as_ref().map(|o| beside(&a.manifest, o, ".manifest.json")).or(a.manifest.clone()) {
        m.save(&p)?;
    }
    Ok(())
}

fn parse_params(names: &[String]) -> Result<Vec<Param>> {
    if names.is_empty() {
        return Ok(Param::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| {
            Param::ALL
                .iter()
                .copied()
                .find(|p| p.name() == n)
                .with_context(|| {
                    let known: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
                    format!("unknown parameter {n:?}; known: {}", known.join(", "))
                })
        })
        .collect()
}

fn cmd_tune(a: &TuneArgs, mut m: RunManifest) -> Result<()> {
    let mut base = load_config(&a.config, &mut m)?;
    if let Some(d) = a.dmax {
        base.d_max = d;
    }
    let params = parse_params(&a.params)?;
    let text = fs::read_to_string(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
    let dir = a.dataset.parent().unwrap_or(Path::new("."));
    let entries = parse_dataset(&text, dir)?;
    m.inputs.push(display(&a.dataset));
    let trace_path = beside(&a.trace, &a.out, ".trace.csv");
    if a.budget == 0 {
        match &a.config {
            Some(c) => {
                fs::copy(c, &a.out)?;
            }
            None => fs::write(&a.out, base.to_kv())?,
        }
        fs::write(&trace_path, "eval,param,value,loss\n")?;
    } else {
        let dataset = entries
            .iter()
            .map(|e| {
                Ok(Sample {
                    left: load_image(&e.left).with_context(|| format!("reading {}", e.left.display()))?,
                    right: load_image(&e.right).with_context(|| format!("reading {}", e.right.display()))?,
                    gt: load_disparity(&e.gt).with_context(|| format!("reading {}", e.gt.display()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let result = tune(&base, &dataset, &params, a.budget)?;
        let mut tuned = base.clone();
        tuned.decoder = result.config;
        fs::write(&a.out, tuned.to_kv())?;
        let mut csv = String::from("eval,param,value,loss\n");
        for s in &result.trace {
            let name = s.param.map(|p| p.name()).unwrap_or("start");
            csv.push_str(&format!("{},{},{},{}\n", s.eval, name, s.value, s.loss));
        }
        fs::write(&trace_path, csv)?;
    }
    m.outputs = vec![display(&a.out), display(&trace_path)];
    m.save(&beside(&a.manifest, &a.out, ".manifest.json"))?;
    Ok(())
}

fn write_scene(spec: &SceneSpec, dir: &Path, float: bool) -> Result<[PathBuf; 3]> {
    fs::create_dir_all(dir)?;
    let s = generate(spec)?;
    let ext = if float { "pfm" } else { "png" };
    let paths = [
        dir.join(format!("left.{ext}")),
        dir.join(format!("right.{ext}")),
        dir.join("gt.pfm"),
    ];
    save_image(&paths[0], &s.left)?;
    save_image(&paths[1], &s.right)?;
    save_disparity(&paths[2], &s.gt)?;
    Ok(paths)
}

fn cmd_generate(a: &GenerateArgs, mut m: RunManifest) -> Result<()> {
    let kind = match a.kind {
        KindArg::Constant => SceneKind::Constant { d0: a.d0 },
        KindArg::Plane => SceneKind::Plane { a: a.a, b: a.b, c: a.c },
        KindArg::TwoPlane => SceneKind::two_plane_default(),
        KindArg::Step => SceneKind::Step {
            far: a.far,
            near: a.near,
            edge: a.edge.unwrap_or(a.width / 2),
        },
    };
    let spec = SceneSpec::new(kind, a.width, a.height, a.seed);
    let paths = write_scene(&spec, &a.out_dir, a.float)?;
    m.seed = a.seed;
    m.outputs = paths.iter().map(|p| display(p)).collect();
    m.save(&a.out_dir.join("manifest.json"))?;
    Ok(())
}

fn cmd_suite(a: &SuiteArgs, mut m: RunManifest) -> Result<()> {
    fs::create_dir_all(&a.out_dir)?;
    let mut listing = String::new();
    for (i, spec) in mixed_suite(a.n, a.width, a.height, a.d_lo, a.d_hi, a.seed).iter().enumerate() {
        let name = format!("scene{i:03}");
        let paths = write_scene(spec, &a.out_dir.join(&name), a.float)?;
        let rel: Vec<String> = paths
            .iter()
            .map(|p| format!("{name}/{}", p.file_name().unwrap().to_string_lossy()))
            .collect();
        listing.push_str(&rel.join(" "));
        listing.push('\n');
    }
    let list_path = a.out_dir.join("dataset.txt");
    fs::write(&list_path, listing)?;
    m.seed = a.seed;
    m.outputs = vec![display(&list_path)];
    m.save(&a.out_dir.join("manifest.json"))?;
    Ok(())
}

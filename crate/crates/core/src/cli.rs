//! Command-line front end.
//!
//! Each subcommand loads and validates everything it needs (scenario,
//! model, grid) before it creates any output, so a bad invocation leaves
//! the output directory untouched.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ScenarioConfig, SeedStream};
use crate::error::{Error, Result};
use crate::experiment::{
    generate_training_sequences, run_scenario_suite, write_convergence_csv, write_convergence_svg, write_suite,
    write_trajectory_csv, MetricSet, SuiteAggregate,
};
use crate::field::{field_at, BaseField, MagneticVector};
use crate::nav::mission::{run_mission, HeadingPolicy, MissionOutcome};
use crate::talstm::{
    check_fixture, gradient_check, load_model, save_model, train, GradCheckOptions, ModelDims, TaLstmModel, Tensor,
    TrainReport, GRADCHECK_SEED,
};

/// Largest gradient-check error accepted by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const MODEL_FILE: &str = "model.talstm";
pub const LOSS_FILE: &str = "training_loss.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const CONVERGENCE_SVG: &str = "convergence.svg";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "geomag-nav", version, about = "Geomagnetic navigation simulator")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate anomaly-free training data and fit a heading model.
    Train(TrainArgs),
    /// Fly one mission and export its trajectory.
    Run(RunArgs),
    /// Repeat a mission from jittered origins and aggregate the metrics.
    Suite(SuiteArgs),
    /// Finite-difference check of the network's backward pass.
    Gradcheck(GradcheckArgs),
    /// Describe the field model of a scenario.
    Fieldinfo(FieldinfoArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Model file; overrides `policy.model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also render the convergence plot.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `suite.repetitions`.
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Fixture seed.
    #[arg(long, default_value_t = GRADCHECK_SEED)]
    pub seed: u64,
    /// Test hook: scale one analytic gradient so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct FieldinfoArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra query point, `LAT,LON`. Repeatable.
    #[arg(long, value_parser = parse_latlon)]
    pub at: Vec<[f64; 2]>,
}

fn parse_latlon(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected LAT,LON")?;
    let lat: f64 = a.trim().parse().map_err(|e| format!("latitude: {e}"))?;
    let lon: f64 = b.trim().parse().map_err(|e| format!("longitude: {e}"))?;
    Ok([lat, lon])
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Error = 1,
    BudgetExhausted = 2,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }

    fn from_outcome(o: MissionOutcome) -> Self {
        match o {
            MissionOutcome::Success => Exit::Success,
            MissionOutcome::BudgetExhausted => Exit::BudgetExhausted,
            MissionOutcome::Aborted => Exit::Error,
        }
    }
}

/// Execute one subcommand, printing its report on stdout.
pub fn execute(cli: &Cli) -> Result<Exit> {
    let mut out = String::new();
    let exit = match &cli.command {
        Command::Train(a) => cmd_train(a, &mut out)?,
        Command::Run(a) => cmd_run(a, &mut out)?,
        Command::Suite(a) => cmd_suite(a, &mut out)?,
        Command::Gradcheck(a) => cmd_gradcheck(a, &mut out)?,
        Command::Fieldinfo(a) => cmd_fieldinfo(a, &mut out)?,
    };
    print!("{out}");
    Ok(exit)
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut c = match path {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::Config(format!("scenario file {} does not exist", p.display())));
            }
            ScenarioConfig::load(p)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn load_policy_model(cfg: &ScenarioConfig, flag: Option<&Path>) -> Result<Option<TaLstmModel>> {
    if !cfg.policy.kind.needs_model() {
        return Ok(None);
    }
    let path = match (flag, &cfg.policy.model) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => {
            return Err(Error::Policy(format!(
                "{:?} policy requires a trained model (--model or policy.model)",
                cfg.policy.kind
            )))
        }
    };
    load_model(&path, Some(cfg.mission.window)).map(Some)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (i, tl) in report.train_loss.iter().enumerate() {
        let vl = report.val_loss.get(i).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{tl},{vl}", i + 1);
    }
    s
}

/// Train a model and write it with its per-epoch loss table.
pub fn cmd_train(a: &TrainArgs, out: &mut String) -> Result<Exit> {
    let cfg = load_scenario(a.config.as_deref(), a.seed)?;
    let world = cfg.clean_world()?;
    let template = cfg.mission_spec();
    let seqs = generate_training_sequences(&world, &template, &cfg.data, cfg.seed_for(SeedStream::Data))?;
    let mut model = TaLstmModel::new(cfg.model_dims(), cfg.seed_for(SeedStream::ModelInit))?;
    let mut tc = cfg.training.clone();
    tc.seed = cfg.seed_for(SeedStream::Training);
    let report = train(&mut model, &seqs, &tc)?;

    create_dir(&a.out)?;
    let model_path = a.out.join(MODEL_FILE);
    save_model(&model, &model_path)?;
    let loss_path = a.out.join(LOSS_FILE);
    fs::write(&loss_path, loss_csv(&report)).map_err(|e| Error::io(&loss_path, e))?;

    let _ = writeln!(out, "sequences: {} (train {}, val {}, test {})", seqs.len(), report.n_train, report.n_val, report.n_test);
    if let Some(l) = report.train_loss.last() {
        let _ = writeln!(out, "final train loss: {l:.6}");
    }
    if let Some(l) = report.val_loss.last() {
        let _ = writeln!(out, "final val loss: {l:.6}");
    }
    if let Some(l) = report.test_loss {
        let _ = writeln!(out, "test loss: {l:.6}");
    }
    let _ = writeln!(out, "model: {}", model_path.display());
    Ok(Exit::Success)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    policy: String,
    outcome: &'static str,
    legs: Vec<&'static str>,
    metrics: &'a MetricSet,
}

fn metrics_text(out: &mut String, m: &MetricSet) {
    let _ = writeln!(out, "steps: {}", m.steps);
    let _ = writeln!(out, "travelled: {:.1} km", m.travelled_km);
    let _ = writeln!(out, "deviation: {:.4}", m.deviation);
    let _ = writeln!(out, "heading variance: {:.4} (unbiased {:.4})", m.heading_variance_signed, m.heading_variance_unbiased);
    if let Some(e) = m.mean_eta {
        let _ = writeln!(out, "mean eta: {e:.4}");
    }
}

/// Fly the scenario's mission and export its artifacts.
pub fn cmd_run(a: &RunArgs, out: &mut String) -> Result<Exit> {
    let cfg = load_scenario(Some(&a.config), a.seed)?;
    let world = cfg.build_world()?;
    let model = load_policy_model(&cfg, a.model.as_deref())?;
    let policy = HeadingPolicy::from_kind(cfg.policy.kind, model.as_ref(), cfg.calibration)?;
    let result = run_mission(&world, &cfg.mission_spec(), &policy)?;

    create_dir(&a.out)?;
    write_trajectory_csv(&result, &a.out.join(TRAJECTORY_FILE))?;
    write_convergence_csv(&result, &a.out.join(CONVERGENCE_FILE))?;
    if a.svg {
        write_convergence_svg(&result, &a.out.join(CONVERGENCE_SVG))?;
    }
    let summary = RunSummary {
        scenario: &cfg.name,
        policy: format!("{:?}", result.policy).to_lowercase(),
        outcome: result.outcome.as_str(),
        legs: result.legs.iter().map(|l| l.outcome.as_str()).collect(),
        metrics: &result.metrics,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    let path = a.out.join(SUMMARY_FILE);
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;

    let _ = writeln!(out, "outcome: {}", result.outcome.as_str());
    metrics_text(out, &result.metrics);
    Ok(Exit::from_outcome(result.outcome))
}

fn aggregate_text(out: &mut String, g: &SuiteAggregate) {
    let _ = writeln!(out, "runs: {} (success {}, aborted {})", g.runs, g.successes, g.aborted);
    let row = |out: &mut String, name: &str, s: &crate::experiment::Summary| {
        let _ = writeln!(out, "{name}: mean {:.4} var {:.4}", s.mean, s.variance);
    };
    row(out, "steps", &g.steps);
    row(out, "travelled_km", &g.travelled_km);
    row(out, "deviation", &g.deviation);
    row(out, "heading_variance", &g.heading_variance_signed);
    row(out, "mean_eta", &g.mean_eta);
}

/// Repeat the scenario from jittered origins.
///
/// Exit status: 0 when every run arrives, 2 when some ran out of budget but
/// none aborted, 1 otherwise.
pub fn cmd_suite(a: &SuiteArgs, out: &mut String) -> Result<Exit> {
    let mut cfg = load_scenario(Some(&a.config), a.seed)?;
    if let Some(r) = a.repetitions {
        if r == 0 {
            return Err(Error::Config("--repetitions must be >= 1".into()));
        }
        cfg.suite.repetitions = r;
    }
    let world = cfg.build_world()?;
    let model = load_policy_model(&cfg, a.model.as_deref())?;
    let policy = HeadingPolicy::from_kind(cfg.policy.kind, model.as_ref(), cfg.calibration)?;
    let report = run_scenario_suite(
        &world,
        &cfg.mission_spec(),
        &policy,
        cfg.suite.repetitions,
        cfg.seed_for(SeedStream::Suite),
        cfg.suite.origin_jitter_deg,
    )?;
    create_dir(&a.out)?;
    write_suite(&report, &a.out)?;
    aggregate_text(out, &report.aggregate);
    let g = &report.aggregate;
    Ok(if g.successes == g.runs {
        Exit::Success
    } else if g.aborted == 0 {
        Exit::BudgetExhausted
    } else {
        Exit::Error
    })
}

/// Gradient check on the seeded fixture; succeeds iff the worst relative
/// error is within [`GRADCHECK_TOLERANCE`].
pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut String) -> Result<Exit> {
    let (model, seq) = check_fixture(ModelDims::new(20, 20), a.seed);
    let opts = GradCheckOptions {
        corrupt: a.corrupt_gradient.then_some((Tensor::OutW, 2.0)),
        ..Default::default()
    };
    let r = gradient_check(&model, &seq, &opts)?;
    for t in &r.per_tensor {
        log::info!("{:>8} {:>4} coords  max rel err {:.3e}", t.tensor, t.coordinates, t.max_rel_error);
    }
    let _ = writeln!(out, "coordinates: {}", r.coordinates);
    let _ = writeln!(out, "max relative error: {:.6e}", r.max_rel_error);
    Ok(if r.max_rel_error <= GRADCHECK_TOLERANCE {
        Exit::Success
    } else {
        Exit::Error
    })
}

fn angle(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:>8.4}"))
}

fn field_line(out: &mut String, label: &str, p: [f64; 2], m: &MagneticVector) {
    let _ = writeln!(
        out,
        "{label:<14} {:>8.3} {:>9.3}  Bx {:>9.1} By {:>8.1} Bz {:>9.1} F {:>9.1} H {:>9.1} D {} I {}",
        p[0], p[1], m.bx_nt, m.by_nt, m.bz_nt, m.f_nt, m.h_nt, angle(m.decl_deg), angle(m.incl_deg)
    );
}

/// Describe the base field and anomalies, and sample the field at the
/// mission waypoints plus any `--at` points.
pub fn cmd_fieldinfo(a: &FieldinfoArgs, out: &mut String) -> Result<Exit> {
    let cfg = load_scenario(a.config.as_deref(), None)?;
    let world = cfg.build_world()?;
    match &world.base {
        BaseField::Dipole(d) => {
            let (plat, plon) = d.north_pole();
            let _ = writeln!(out, "base: dipole B0 {} nT, geomagnetic north pole {plat:.3}, {plon:.3}", d.equatorial_field_nt);
        }
        BaseField::Grid(g) => {
            let _ = writeln!(
                out,
                "base: grid {} x {}, lat {}..{}, lon {}..{}",
                g.nlat,
                g.nlon,
                g.lat0_deg,
                g.lat_max(),
                g.lon0_deg,
                g.lon_max()
            );
        }
    }
    for (i, p) in world.patches.iter().enumerate() {
        let _ = writeln!(
            out,
            "anomaly {}: lat {}..{}, lon {}..{}, scales {:?} nT",
            i + 1,
            p.lat_range_deg[0],
            p.lat_range_deg[1],
            p.lon_range_deg[0],
            p.lon_range_deg[1],
            p.scale
        );
    }
    let frame = crate::field::LocalProjection::new(cfg.mission.origin[0], cfg.mission.origin[1])?;
    let mut points = vec![("origin".to_string(), cfg.mission.origin)];
    for (i, d) in cfg.mission.destinations.iter().enumerate() {
        points.push((format!("destination {}", i + 1), *d));
    }
    for p in &a.at {
        points.push(("query".to_string(), *p));
    }
    for (label, p) in points {
        let pos = frame.position(p[0], p[1])?;
        let m = field_at(&pos, &world)?;
        field_line(out, &label, p, &m);
    }
    Ok(Exit::Success)
}

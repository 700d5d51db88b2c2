//! Mission metrics, repeated scenario runs, training-data generation and
//! CSV/SVG export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::diff_deg;
use crate::error::{Error, Result};
use crate::field::{FieldSource, GeoPosition, LocalProjection};
use crate::nav::mission::{run_mission, run_mission_inner, Exploration, HeadingPolicy, LegResult, MissionOutcome, MissionResult, MissionSpec, StepRecord};
use crate::nav::OBJECTIVE_ELEMENTS;
use crate::talstm::WindowSeries;

/// Summary of one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub travelled_km: f64,
    pub steps: usize,
    /// Signed mean of wrapped `truth - commanded` heading differences.
    pub heading_variance_signed: f64,
    /// Sample variance of the same differences.
    pub heading_variance_unbiased: f64,
    /// Deviation of the final leg.
    pub deviation: f64,
    /// Mean anomaly weight, when the policy produces one.
    pub mean_eta: Option<f64>,
    pub arrival: GeoPosition,
}

fn check_pair(truth: &[f64], predicted: &[f64]) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "heading series differ in length: {} vs {}",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("heading variance over zero steps".into()));
    }
    Ok(())
}

/// `sum_k wrap(truth_k - predicted_k) / K`.
pub fn heading_variance(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(truth, predicted)?;
    let s: f64 = truth.iter().zip(predicted).map(|(a, b)| diff_deg(*a, *b)).sum();
    Ok(s / truth.len() as f64)
}

/// Sample variance (divisor `K - 1`) of the wrapped differences; zero for `K = 1`.
pub fn heading_variance_unbiased(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    let mean = heading_variance(truth, predicted)?;
    let n = truth.len();
    if n < 2 {
        return Ok(0.0);
    }
    let ss: f64 = truth
        .iter()
        .zip(predicted)
        .map(|(a, b)| (diff_deg(*a, *b) - mean).powi(2))
        .sum();
    Ok(ss / (n - 1) as f64)
}

/// `|L_d - L_K| / |L_d - L_o|` in projected meters.
pub fn navigation_deviation(origin: &GeoPosition, dest: &GeoPosition, arrival: &GeoPosition) -> Result<f64> {
    let base = dest.distance_m(origin);
    if base == 0.0 {
        return Err(Error::InvalidInput("origin and destination coincide".into()));
    }
    Ok(dest.distance_m(arrival) / base)
}

fn leg_deviation(leg: &LegResult) -> f64 {
    navigation_deviation(&leg.origin, &leg.destination, leg.arrival()).unwrap_or(0.0)
}

fn travelled_m(records: &[&StepRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| w[1].position.distance_m(&w[0].position))
        .sum()
}

pub(crate) fn compute_metrics(legs: &[LegResult]) -> Result<MetricSet> {
    let last = legs
        .last()
        .ok_or_else(|| Error::InvalidInput("mission has no legs".into()))?;
    let records: Vec<&StepRecord> = legs.iter().flat_map(|l| l.records.iter()).collect();
    let (truth, cmd): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((r.theta_true?, r.theta_cmd?)))
        .unzip();
    let (hv, hvu) = if truth.is_empty() {
        (0.0, 0.0)
    } else {
        (heading_variance(&truth, &cmd)?, heading_variance_unbiased(&truth, &cmd)?)
    };
    let etas: Vec<f64> = records.iter().filter_map(|r| r.eta).collect();
    Ok(MetricSet {
        travelled_km: travelled_m(&records) / 1000.0,
        steps: legs.iter().map(|l| l.steps()).sum(),
        heading_variance_signed: hv,
        heading_variance_unbiased: hvu,
        deviation: leg_deviation(last),
        mean_eta: if etas.is_empty() {
            None
        } else {
            Some(etas.iter().sum::<f64>() / etas.len() as f64)
        },
        arrival: *last.arrival(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const TRAJECTORY_HEADER: [&str; 21] = [
    "step",
    "lat",
    "lon",
    "x_m",
    "y_m",
    "theta_cmd",
    "theta_analytic",
    "theta_predicted",
    "eta",
    "speed",
    "F_total",
    "F_bx",
    "F_by",
    "F_bz",
    "F_d",
    "F_i",
    "e_n",
    "mu",
    "sigma2",
    "theta_true",
    "leg",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Per-step trajectory CSV. Missing values are empty fields.
pub fn write_trajectory_csv(result: &MissionResult, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TRAJECTORY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in result.records() {
        let mut row = vec![
            r.step.to_string(),
            r.position.lat_deg.to_string(),
            r.position.lon_deg.to_string(),
            r.position.x_m.to_string(),
            r.position.y_m.to_string(),
            opt(r.theta_cmd),
            opt(r.theta_analytic),
            opt(r.theta_predicted),
            opt(r.eta),
            opt(r.speed_kmh),
            r.objective.total.to_string(),
        ];
        row.extend(r.objective.per_element.iter().map(|v| opt(*v)));
        row.extend([opt(r.e_n), opt(r.mu), opt(r.sigma2), opt(r.theta_true), r.leg.to_string()]);
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Objective curves, one row per record.
pub fn write_convergence_csv(result: &MissionResult, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["step", "F_total", "F_bx", "F_by", "F_bz", "F_d", "F_i", "leg"])
        .map_err(|e| csv_err(path, e))?;
    for r in result.records() {
        let mut row = vec![r.step.to_string(), r.objective.total.to_string()];
        row.extend(r.objective.per_element.iter().map(|v| opt(*v)));
        row.push(r.leg.to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const SERIES_COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

/// Static line chart of the five per-element objective curves.
pub fn convergence_svg(result: &MissionResult) -> String {
    let (w, h, m) = (720.0, 420.0, 50.0);
    let recs: Vec<&StepRecord> = result.records().collect();
    let n = recs.len().max(2) - 1;
    let ymax = recs
        .iter()
        .flat_map(|r| r.objective.per_element.iter().flatten())
        .copied()
        .fold(1.0f64, f64::max);
    let px = |i: usize| m + (w - 2.0 * m) * i as f64 / n as f64;
    let py = |v: f64| h - m - (h - 2.0 * m) * (v / ymax).clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" stroke="black" fill="none"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">F_i</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, m - 4.0, h - m + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, m - 4.0, m + 4.0, ymax);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, w - m, h - m + 16.0, recs.last().map(|r| r.step).unwrap_or(0));
    for (e, name) in OBJECTIVE_ELEMENTS.iter().enumerate() {
        let mut d = String::new();
        let mut pen_up = true;
        for (i, r) in recs.iter().enumerate() {
            match r.objective.per_element[e] {
                Some(v) => {
                    let _ = write!(d, "{}{:.2} {:.2} ", if pen_up { "M" } else { "L" }, px(i), py(v));
                    pen_up = false;
                }
                None => pen_up = true,
            }
        }
        let c = SERIES_COLORS[e];
        if !d.is_empty() {
            let _ = writeln!(s, r#"<path d="{}" stroke="{c}" stroke-width="1.5" fill="none"/>"#, d.trim_end());
        }
        let ly = m + 16.0 * e as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">F_{name}</text>"#,
            w - m - 80.0,
            w - m - 60.0,
            w - m - 55.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_convergence_svg(result: &MissionResult, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, convergence_svg(result)).map_err(|e| Error::io(path, e))
}

/// Recompute the metrics of a mission from its trajectory CSV.
///
/// `destination` is the final leg's destination in the mission frame.
pub fn metrics_from_trajectory_csv(path: &Path, frame: &LocalProjection, destination: [f64; 2]) -> Result<MetricSet> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column {name}"),
        })
    };
    let (ci_step, ci_x, ci_y) = (col("step")?, col("x_m")?, col("y_m")?);
    let (ci_lat, ci_lon) = (col("lat")?, col("lon")?);
    let (ci_cmd, ci_true, ci_eta, ci_leg) = (col("theta_cmd")?, col("theta_true")?, col("eta")?, col("leg")?);
    struct Row {
        leg: usize,
        x: f64,
        y: f64,
        lat: f64,
        lon: f64,
        cmd: Option<f64>,
        truth: Option<f64>,
        eta: Option<f64>,
    }
    let mut rows = Vec::new();
    let mut steps = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let get = |c: usize| -> Result<Option<f64>> {
            let s = rec.get(c).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {} is not a number", &headers[c]),
            })
        };
        let need = |c: usize| -> Result<f64> {
            get(c)?.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {} is empty", &headers[c]),
            })
        };
        steps = need(ci_step)? as usize;
        rows.push(Row {
            leg: need(ci_leg)? as usize,
            x: need(ci_x)?,
            y: need(ci_y)?,
            lat: need(ci_lat)?,
            lon: need(ci_lon)?,
            cmd: get(ci_cmd)?,
            truth: get(ci_true)?,
            eta: get(ci_eta)?,
        });
    }
    let last = rows.last().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 2,
        message: "trajectory has no rows".into(),
    })?;
    let pos = |r: &Row| GeoPosition {
        lat_deg: r.lat,
        lon_deg: r.lon,
        x_m: r.x,
        y_m: r.y,
    };
    let travelled: f64 = rows.windows(2).map(|w| pos(&w[1]).distance_m(&pos(&w[0]))).sum();
    let leg_start = rows.iter().find(|r| r.leg == last.leg).expect("last row's leg exists");
    let dest = frame.position(destination[0], destination[1])?;
    let (truth, cmd): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| Some((r.truth?, r.cmd?))).unzip();
    let etas: Vec<f64> = rows.iter().filter_map(|r| r.eta).collect();
    let (hv, hvu) = if truth.is_empty() {
        (0.0, 0.0)
    } else {
        (heading_variance(&truth, &cmd)?, heading_variance_unbiased(&truth, &cmd)?)
    };
    Ok(MetricSet {
        travelled_km: travelled / 1000.0,
        steps,
        heading_variance_signed: hv,
        heading_variance_unbiased: hvu,
        deviation: navigation_deviation(&pos(leg_start), &dest, &pos(last)).unwrap_or(0.0),
        mean_eta: if etas.is_empty() {
            None
        } else {
            Some(etas.iter().sum::<f64>() / etas.len() as f64)
        },
        arrival: pos(last),
    })
}

/// One repetition of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub run_id: usize,
    pub origin: [f64; 2],
    pub outcome: MissionOutcome,
    pub metrics: Option<MetricSet>,
    pub error: Option<String>,
    pub result: Option<MissionResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample variance; zero for a single run.
    pub variance: f64,
}

fn summarize(v: &[f64]) -> Summary {
    if v.is_empty() {
        return Summary {
            mean: f64::NAN,
            variance: f64::NAN,
        };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let variance = if v.len() < 2 {
        0.0
    } else {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    Summary { mean, variance }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteAggregate {
    pub runs: usize,
    pub successes: usize,
    pub aborted: usize,
    pub steps: Summary,
    pub travelled_km: Summary,
    pub heading_variance_signed: Summary,
    pub heading_variance_unbiased: Summary,
    pub deviation: Summary,
    pub mean_eta: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub runs: Vec<SuiteRun>,
    pub aggregate: SuiteAggregate,
}

/// Repeat a mission `repetitions` times with seeded origin jitter
/// (uniform within `+-origin_jitter_deg` in latitude and longitude).
/// Runs execute in parallel; results are ordered by run index.
pub fn run_scenario_suite(
    world: &dyn FieldSource,
    spec: &MissionSpec,
    policy: &HeadingPolicy<'_>,
    repetitions: usize,
    seed: u64,
    origin_jitter_deg: f64,
) -> Result<SuiteReport> {
    if repetitions == 0 {
        return Err(Error::InvalidInput("repetitions must be >= 1".into()));
    }
    spec.validate()?;
    if !(origin_jitter_deg >= 0.0 && origin_jitter_deg.is_finite()) {
        return Err(Error::InvalidInput(format!("origin jitter must be >= 0, got {origin_jitter_deg}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origins: Vec<[f64; 2]> = (0..repetitions)
        .map(|_| {
            if origin_jitter_deg == 0.0 {
                return spec.origin;
            }
            let dl = rng.random_range(-origin_jitter_deg..=origin_jitter_deg);
            let dn = rng.random_range(-origin_jitter_deg..=origin_jitter_deg);
            [spec.origin[0] + dl, spec.origin[1] + dn]
        })
        .collect();
    let runs: Vec<SuiteRun> = origins
        .par_iter()
        .enumerate()
        .map(|(i, o)| {
            let s = MissionSpec {
                origin: *o,
                ..spec.clone()
            };
            match run_mission(world, &s, policy) {
                Ok(r) => SuiteRun {
                    run_id: i,
                    origin: *o,
                    outcome: r.outcome,
                    metrics: Some(r.metrics.clone()),
                    error: None,
                    result: Some(r),
                },
                Err(e) => SuiteRun {
                    run_id: i,
                    origin: *o,
                    outcome: MissionOutcome::Aborted,
                    metrics: None,
                    error: Some(e.to_string()),
                    result: None,
                },
            }
        })
        .collect();
    let ms: Vec<&MetricSet> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let pick = |f: &dyn Fn(&MetricSet) -> f64| summarize(&ms.iter().map(|m| f(m)).collect::<Vec<_>>());
    let etas: Vec<f64> = ms.iter().filter_map(|m| m.mean_eta).collect();
    let aggregate = SuiteAggregate {
        runs: runs.len(),
        successes: runs.iter().filter(|r| r.outcome == MissionOutcome::Success).count(),
        aborted: runs.iter().filter(|r| r.outcome == MissionOutcome::Aborted).count(),
        steps: pick(&|m| m.steps as f64),
        travelled_km: pick(&|m| m.travelled_km),
        heading_variance_signed: pick(&|m| m.heading_variance_signed),
        heading_variance_unbiased: pick(&|m| m.heading_variance_unbiased),
        deviation: pick(&|m| m.deviation),
        mean_eta: summarize(&etas),
    };
    Ok(SuiteReport { runs, aggregate })
}

pub const SUITE_HEADER: [&str; 8] = [
    "run_id",
    "outcome",
    "steps",
    "travelled_km",
    "heading_variance_signed",
    "heading_variance_unbiased",
    "deviation",
    "mean_eta",
];

/// Per-run CSV, aggregate CSV and one convergence CSV per completed run.
pub fn write_suite(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("suite_runs.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(SUITE_HEADER).map_err(|e| csv_err(&path, e))?;
    for r in &report.runs {
        let row = match &r.metrics {
            Some(m) => vec![
                r.run_id.to_string(),
                r.outcome.as_str().to_string(),
                m.steps.to_string(),
                m.travelled_km.to_string(),
                m.heading_variance_signed.to_string(),
                m.heading_variance_unbiased.to_string(),
                m.deviation.to_string(),
                opt(m.mean_eta),
            ],
            None => {
                let mut v = vec![r.run_id.to_string(), r.outcome.as_str().to_string()];
                v.extend(std::iter::repeat_n(String::new(), 6));
                v
            }
        };
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("suite_aggregate.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let a = &report.aggregate;
    w.write_record(["metric", "mean", "variance"]).map_err(|e| csv_err(&path, e))?;
    let fmt = |v: f64| if v.is_finite() { v.to_string() } else { String::new() };
    for (name, s) in [
        ("steps", a.steps),
        ("travelled_km", a.travelled_km),
        ("heading_variance_signed", a.heading_variance_signed),
        ("heading_variance_unbiased", a.heading_variance_unbiased),
        ("deviation", a.deviation),
        ("mean_eta", a.mean_eta),
    ] {
        w.write_record([name.to_string(), fmt(s.mean), fmt(s.variance)])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.write_record(["runs".to_string(), a.runs.to_string(), String::new()])
        .map_err(|e| csv_err(&path, e))?;
    w.write_record(["successes".to_string(), a.successes.to_string(), String::new()])
        .map_err(|e| csv_err(&path, e))?;
    w.write_record(["aborted".to_string(), a.aborted.to_string(), String::new()])
        .map_err(|e| csv_err(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    for r in &report.runs {
        if let Some(res) = &r.result {
            write_convergence_csv(res, &dir.join(format!("convergence_run_{:03}.csv", r.run_id)))?;
        }
    }
    Ok(())
}

/// Random anomaly-free missions used to produce training sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataGenConfig {
    pub missions: usize,
    pub lat_range: [f64; 2],
    pub lon_range: [f64; 2],
    pub min_km: f64,
    pub max_km: f64,
    /// Termination threshold of the data runs, usually tighter than the
    /// mission's so that trajectories include the final approach.
    pub eps: f64,
    /// Largest per-window heading offset executed during data runs.
    pub explore_offset_deg: f64,
    /// Share of windows that get an offset.
    pub explore_probability: f64,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        Self {
            missions: 400,
            lat_range: [17.5, 25.5],
            lon_range: [129.5, 139.0],
            min_km: 120.0,
            max_km: 480.0,
            eps: 0.002,
            explore_offset_deg: 45.0,
            explore_probability: 0.5,
        }
    }
}

impl DataGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.missions == 0 {
            return Err(Error::InvalidInput("training data needs at least one mission".into()));
        }
        if !(self.lat_range[0] < self.lat_range[1] && self.lon_range[0] < self.lon_range[1]) {
            return Err(Error::InvalidInput("training region ranges must be increasing".into()));
        }
        if !(self.min_km > 0.0 && self.min_km < self.max_km) {
            return Err(Error::InvalidInput("training distance range must satisfy 0 < min < max".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("training eps must be positive, got {}", self.eps)));
        }
        if !(0.0..180.0).contains(&self.explore_offset_deg) || !(0.0..=1.0).contains(&self.explore_probability) {
            return Err(Error::InvalidInput(
                "exploration offset must be in [0, 180) and probability in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Run the analytic policy between random origin/destination pairs and
/// collect the window sequence of every successful mission. Some windows
/// execute a random heading offset so that the data also covers off-course
/// states.
///
/// `world` should be anomaly-free. `template` supplies the schedule, step
/// duration, window, and budget; its origin and destinations are replaced.
pub fn generate_training_sequences(
    world: &dyn FieldSource,
    template: &MissionSpec,
    cfg: &DataGenConfig,
    seed: u64,
) -> Result<Vec<Vec<WindowSeries>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(cfg.missions);
    let mut attempts = 0usize;
    while pairs.len() < cfg.missions {
        attempts += 1;
        if attempts > cfg.missions * 1000 {
            return Err(Error::InvalidInput(
                "could not draw origin/destination pairs within the distance range".into(),
            ));
        }
        let o = [
            rng.random_range(cfg.lat_range[0]..cfg.lat_range[1]),
            rng.random_range(cfg.lon_range[0]..cfg.lon_range[1]),
        ];
        let d = [
            rng.random_range(cfg.lat_range[0]..cfg.lat_range[1]),
            rng.random_range(cfg.lon_range[0]..cfg.lon_range[1]),
        ];
        let frame = LocalProjection::new(o[0], o[1])?;
        let km = frame.position(d[0], d[1])?.distance_m(&frame.position(o[0], o[1])?) / 1000.0;
        if (cfg.min_km..=cfg.max_km).contains(&km) {
            pairs.push((o, d));
        }
    }
    let seqs: Vec<Option<Vec<WindowSeries>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (o, d))| {
            let spec = MissionSpec {
                origin: *o,
                destinations: vec![*d],
                eps: cfg.eps,
                ..template.clone()
            };
            let explore = (cfg.explore_offset_deg > 0.0 && cfg.explore_probability > 0.0).then_some(Exploration {
                max_offset_deg: cfg.explore_offset_deg,
                probability: cfg.explore_probability,
                seed: seed.wrapping_add(1 + i as u64),
            });
            match run_mission_inner(world, &spec, &HeadingPolicy::Analytic, explore) {
                Ok(r) if r.outcome == MissionOutcome::Success => r.legs.into_iter().next().map(|l| l.windows),
                _ => None,
            }
        })
        .collect();
    let out: Vec<Vec<WindowSeries>> = seqs.into_iter().flatten().filter(|s| s.len() >= 2).collect();
    log::info!("training data: {} of {} missions usable", out.len(), pairs.len());
    if out.is_empty() {
        return Err(Error::InvalidInput("no usable training missions".into()));
    }
    Ok(out)
}

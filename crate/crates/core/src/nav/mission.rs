//! The closed navigation loop: sense, estimate gradients, choose a heading,
//! schedule speed, move, until the objective converges or the budget runs out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    analytic_heading, displacement, estimate_gradients, objective, should_terminate, speed_update, step_kinematics,
    DiSample, GradientEstimate, NavState, ObjectiveVector, SpeedSchedule, Termination,
};
use crate::angle::{bearing_deg, wrap_deg};
use crate::calib::{CalibConfig, Calibrator};
use crate::error::{Error, Result};
use crate::experiment::{compute_metrics, MetricSet};
use crate::field::{FieldSource, GeoPosition, LocalProjection, MagneticVector};
use crate::talstm::{Predictor, TaLstmModel, WindowSeries};

/// Headings of the first two moves, before any gradient is available.
pub const BOOTSTRAP_HEADINGS: [f64; 2] = [0.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Gradient-based heading only.
    Analytic,
    /// Network forecast only.
    Talstm,
    /// Anomaly-weighted blend of the two.
    Calibrated,
}

impl PolicyKind {
    pub fn needs_model(self) -> bool {
        !matches!(self, PolicyKind::Analytic)
    }
}

/// Heading provider for a mission.
#[derive(Debug, Clone, Copy)]
pub enum HeadingPolicy<'m> {
    Analytic,
    Talstm(&'m TaLstmModel),
    Calibrated(&'m TaLstmModel, CalibConfig),
}

impl<'m> HeadingPolicy<'m> {
    pub fn kind(&self) -> PolicyKind {
        match self {
            HeadingPolicy::Analytic => PolicyKind::Analytic,
            HeadingPolicy::Talstm(_) => PolicyKind::Talstm,
            HeadingPolicy::Calibrated(..) => PolicyKind::Calibrated,
        }
    }

    pub fn from_kind(kind: PolicyKind, model: Option<&'m TaLstmModel>, calib: CalibConfig) -> Result<Self> {
        match (kind, model) {
            (PolicyKind::Analytic, _) => Ok(HeadingPolicy::Analytic),
            (PolicyKind::Talstm, Some(m)) => Ok(HeadingPolicy::Talstm(m)),
            (PolicyKind::Calibrated, Some(m)) => Ok(HeadingPolicy::Calibrated(m, calib)),
            (k, None) => Err(Error::Policy(format!("{k:?} policy requires a trained model"))),
        }
    }

    fn model(&self) -> Option<&'m TaLstmModel> {
        match self {
            HeadingPolicy::Analytic => None,
            HeadingPolicy::Talstm(m) | HeadingPolicy::Calibrated(m, _) => Some(m),
        }
    }
}

/// Geometry and limits of a mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    /// `[lat, lon]` in degrees.
    pub origin: [f64; 2],
    pub destinations: Vec<[f64; 2]>,
    pub eps: f64,
    /// Step budget per leg.
    pub max_steps: usize,
    /// Simulated hours per step.
    pub dt_h: f64,
    /// Window length `T` for speed scheduling and window assembly.
    pub window: usize,
    pub schedule: SpeedSchedule,
    pub min_sine: f64,
}

impl MissionSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |p: &[f64; 2], what: &str| -> Result<()> {
            if !(p[0].abs() <= 90.0 && p[1].abs() <= 180.0) {
                return Err(Error::InvalidInput(format!("{what} ({}, {}) is not a valid lat/lon", p[0], p[1])));
            }
            Ok(())
        };
        check(&self.origin, "origin")?;
        if self.destinations.is_empty() {
            return Err(Error::InvalidInput("mission needs at least one destination".into()));
        }
        for (i, d) in self.destinations.iter().enumerate() {
            check(d, &format!("destination {}", i + 1))?;
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be >= 1".into()));
        }
        if !(self.dt_h > 0.0 && self.dt_h.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt_h)));
        }
        if self.window == 0 {
            return Err(Error::InvalidInput("window must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.min_sine) {
            return Err(Error::InvalidInput("min_sine must lie in [0, 1)".into()));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissionOutcome {
    Success,
    BudgetExhausted,
    Aborted,
}

impl MissionOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            MissionOutcome::Success => "success",
            MissionOutcome::BudgetExhausted => "budget-exhausted",
            MissionOutcome::Aborted => "aborted",
        }
    }
}

/// One visited state. Heading fields describe the move taken from here and
/// are empty on a leg's final record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub leg: usize,
    pub position: GeoPosition,
    pub field: MagneticVector,
    pub objective: ObjectiveVector,
    pub theta_cmd: Option<f64>,
    pub theta_analytic: Option<f64>,
    pub theta_predicted: Option<f64>,
    pub eta: Option<f64>,
    pub speed_kmh: Option<f64>,
    pub e_n: Option<f64>,
    pub mu: Option<f64>,
    pub sigma2: Option<f64>,
    /// Bearing from this position to the leg destination.
    pub theta_true: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegResult {
    pub index: usize,
    pub origin: GeoPosition,
    pub destination: GeoPosition,
    pub outcome: MissionOutcome,
    pub records: Vec<StepRecord>,
    /// Input/heading windows of this leg, starting with the extrapolated
    /// bootstrap window. Only complete windows are kept.
    pub windows: Vec<WindowSeries>,
}

impl LegResult {
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn arrival(&self) -> &GeoPosition {
        &self.records.last().expect("leg has a start record").position
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionResult {
    pub frame: LocalProjection,
    pub policy: PolicyKind,
    pub legs: Vec<LegResult>,
    pub outcome: MissionOutcome,
    pub metrics: MetricSet,
}

impl MissionResult {
    pub fn steps(&self) -> usize {
        self.legs.iter().map(|l| l.steps()).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &StepRecord> {
        self.legs.iter().flat_map(|l| l.records.iter())
    }
}

fn features(pos: &GeoPosition, s: DiSample, dest: &GeoPosition, ds: DiSample) -> [f64; 4] {
    [pos.x_m - dest.x_m, pos.y_m - dest.y_m, s.d_deg - ds.d_deg, s.i_deg - ds.i_deg]
}

/// Window extrapolated from the current state under a locally linear field:
/// `T` analytic headings with `D`, `I` advanced by the gradient along each
/// virtual displacement. It gives the network something to forecast from
/// before the first real window is complete.
#[allow(clippy::too_many_arguments)]
pub fn virtual_window(
    frame: &LocalProjection,
    pos: &GeoPosition,
    sample: DiSample,
    dest: &GeoPosition,
    dest_sample: DiSample,
    g: &GradientEstimate,
    prev_heading: f64,
    sched: &SpeedSchedule,
    dt_h: f64,
    window: usize,
) -> Result<WindowSeries> {
    let (mut x, mut y) = (pos.x_m, pos.y_m);
    let mut s = sample;
    let mut theta = prev_heading;
    let mut inputs = Vec::with_capacity(window);
    let mut targets = Vec::with_capacity(window);
    for j in 0..window {
        let p = frame.position_xy(x, y)?;
        theta = match analytic_heading(s, dest_sample, g) {
            Ok(t) => t,
            Err(Error::Degenerate(_)) => theta,
            Err(e) => return Err(e),
        };
        inputs.push(features(&p, s, dest, dest_sample));
        targets.push(theta);
        let v = speed_update(sched, &p, dest, j + 1, window);
        let (dx, dy) = displacement(theta, v, dt_h);
        x += dx;
        y += dy;
        s.d_deg += g.g_dx * dx + g.g_dy * dy;
        s.i_deg += g.g_ix * dx + g.g_iy * dy;
    }
    Ok(WindowSeries { n: 1, inputs, targets })
}

struct Sensed {
    field: MagneticVector,
    sample: DiSample,
}

fn sense(world: &dyn FieldSource, p: &GeoPosition) -> Result<Sensed> {
    let field = world.field_at(p)?;
    let sample = DiSample::from_vector(&field).map_err(|e| {
        Error::Policy(format!(
            "field sample at ({:.4}, {:.4}) has no declination/inclination: {e}",
            p.lat_deg, p.lon_deg
        ))
    })?;
    Ok(Sensed { field, sample })
}

/// Run a mission through every destination in order.
///
/// The first two moves use [`BOOTSTRAP_HEADINGS`]; each further step uses
/// the policy's heading. Legs chain with the carrier state and gradient
/// estimate carried over; the objective is normalized per leg. A leg that
/// exhausts its budget ends the mission. Policy failures abort with an error.
pub fn run_mission(world: &dyn FieldSource, spec: &MissionSpec, policy: &HeadingPolicy<'_>) -> Result<MissionResult> {
    run_mission_inner(world, spec, policy, None)
}

/// Per-window heading offsets applied to the executed heading only. Window
/// series keep the policy's heading, so they label off-course states with
/// the heading the policy would have chosen there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Exploration {
    /// Offsets are uniform in `[-max_offset_deg, max_offset_deg]`.
    pub max_offset_deg: f64,
    /// Probability that a window is perturbed at all.
    pub probability: f64,
    pub seed: u64,
}

pub(crate) fn run_mission_inner(
    world: &dyn FieldSource,
    spec: &MissionSpec,
    policy: &HeadingPolicy<'_>,
    explore: Option<Exploration>,
) -> Result<MissionResult> {
    spec.validate()?;
    let mut explore_rng = explore.map(|e| ChaCha8Rng::seed_from_u64(e.seed));
    let mut offset = 0.0;
    if let Some(m) = policy.model() {
        if m.window() != spec.window {
            return Err(Error::Policy(format!(
                "model window T={} does not match mission window T={}",
                m.window(),
                spec.window
            )));
        }
        // Reject untrained models before moving.
        Predictor::new(m)?;
    }
    let frame = LocalProjection::new(spec.origin[0], spec.origin[1])?;
    let origin = frame.position(spec.origin[0], spec.origin[1])?;
    let first = sense(world, &origin)?;
    let mut state = NavState::new(frame, origin, first.sample, spec.schedule.v0_kmh);
    let mut current_field = first.field;
    let mut last_g: Option<GradientEstimate> = None;
    let mut step = 0usize;
    let mut legs = Vec::with_capacity(spec.destinations.len());
    let mut outcome = MissionOutcome::Success;
    let t_win = spec.window;

    for (leg_idx, d) in spec.destinations.iter().enumerate() {
        let dest = frame.position(d[0], d[1])?;
        let dsense = sense(world, &dest)?;
        let md = dsense.field;
        let ds = dsense.sample;
        let m0 = current_field;
        let leg_origin = state.position;

        let mut predictor = match policy.model() {
            Some(m) => Some(Predictor::new(m)?),
            None => None,
        };
        let mut calibrator = match policy {
            HeadingPolicy::Calibrated(_, c) => Some(Calibrator::new(*c, t_win)),
            _ => None,
        };
        let mut forecast: Option<Vec<f64>> = None;
        let mut windows: Vec<WindowSeries> = Vec::new();
        let mut buf_in: Vec<[f64; 4]> = Vec::with_capacity(t_win);
        let mut buf_th: Vec<f64> = Vec::with_capacity(t_win);
        let mut records = Vec::new();
        let mut k = 0usize;

        let leg_outcome = loop {
            let obj = objective(&current_field, &md, &m0)?;
            let mut rec = StepRecord {
                step,
                leg: leg_idx,
                position: state.position,
                field: current_field,
                objective: obj,
                theta_cmd: None,
                theta_analytic: None,
                theta_predicted: None,
                eta: None,
                speed_kmh: None,
                e_n: None,
                mu: None,
                sigma2: None,
                theta_true: None,
            };
            match should_terminate(&obj, spec.eps, k, spec.max_steps) {
                Termination::Success => {
                    records.push(rec);
                    break MissionOutcome::Success;
                }
                Termination::BudgetExhausted => {
                    records.push(rec);
                    break MissionOutcome::BudgetExhausted;
                }
                Termination::Continue => {}
            }

            let pos = state.position;
            let theta_cmd;
            let speed;
            if last_g.is_none() && step < BOOTSTRAP_HEADINGS.len() {
                theta_cmd = BOOTSTRAP_HEADINGS[step];
                speed = spec.schedule.v0_kmh;
            } else {
                let g = estimate_gradients(&state.history(), spec.min_sine)?;
                if g.valid {
                    last_g = Some(g);
                }
                let g = last_g.ok_or_else(|| {
                    Error::Policy("no valid gradient estimate after the bootstrap moves".into())
                })?;
                let analytic = match analytic_heading(state.sample, ds, &g) {
                    Ok(t) => t,
                    Err(Error::Degenerate(_)) => state.heading_deg,
                    Err(e) => return Err(e),
                };
                let j = buf_th.len();
                if j == 0 && windows.is_empty() {
                    let vw = virtual_window(
                        &frame,
                        &pos,
                        state.sample,
                        &dest,
                        ds,
                        &g,
                        state.heading_deg,
                        &spec.schedule,
                        spec.dt_h,
                        t_win,
                    )?;
                    if let Some(p) = predictor.as_mut() {
                        forecast = Some(p.predict_window(&vw)?.headings_deg);
                    }
                    windows.push(vw);
                }
                if j == 0 {
                    if let (Some(e), Some(rng)) = (explore, explore_rng.as_mut()) {
                        offset = if rng.random_bool(e.probability) {
                            rng.random_range(-e.max_offset_deg..=e.max_offset_deg)
                        } else {
                            0.0
                        };
                    }
                }
                let predicted = forecast.as_ref().map(|f| f[j]);
                theta_cmd = match (policy, predicted) {
                    (HeadingPolicy::Analytic, _) => analytic,
                    (HeadingPolicy::Talstm(_), Some(p)) => p,
                    (HeadingPolicy::Calibrated(..), Some(p)) => {
                        let c = calibrator.as_mut().expect("calibrated policy has a calibrator");
                        let b = c.step(analytic, p);
                        rec.eta = Some(b.eta);
                        rec.e_n = b.e_n;
                        rec.mu = b.stats.map(|s| s.mu);
                        rec.sigma2 = b.stats.map(|s| s.sigma2);
                        b.theta_cmd
                    }
                    (_, None) => return Err(Error::Policy("no forecast available for the current window".into())),
                };
                rec.theta_analytic = Some(analytic);
                rec.theta_predicted = predicted;
                speed = speed_update(&spec.schedule, &pos, &dest, j + 1, t_win);
                buf_in.push(features(&pos, state.sample, &dest, ds));
                buf_th.push(theta_cmd);
                if buf_th.len() == t_win {
                    let w = WindowSeries {
                        n: windows.len() + 1,
                        inputs: std::mem::take(&mut buf_in),
                        targets: std::mem::take(&mut buf_th),
                    };
                    if let Some(p) = predictor.as_mut() {
                        forecast = Some(p.predict_window(&w)?.headings_deg);
                    }
                    windows.push(w);
                }
            }
            let theta_cmd = if last_g.is_some() { wrap_deg(theta_cmd + offset) } else { wrap_deg(theta_cmd) };
            rec.theta_cmd = Some(theta_cmd);
            rec.speed_kmh = Some(speed);
            rec.theta_true = Some(bearing_deg(pos.x_m, pos.y_m, dest.x_m, dest.y_m));
            records.push(rec);

            state.heading_deg = theta_cmd;
            state.speed_kmh = speed;
            let next = step_kinematics(&state, theta_cmd, spec.dt_h)?;
            let sensed = sense(world, &next)?;
            state.advance_to(next, sensed.sample);
            current_field = sensed.field;
            step += 1;
            k += 1;
        };
        legs.push(LegResult {
            index: leg_idx,
            origin: leg_origin,
            destination: dest,
            outcome: leg_outcome,
            records,
            windows,
        });
        if leg_outcome != MissionOutcome::Success {
            outcome = leg_outcome;
            break;
        }
    }
    let metrics = compute_metrics(&legs)?;
    Ok(MissionResult {
        frame,
        policy: policy.kind(),
        legs,
        outcome,
        metrics,
    })
}

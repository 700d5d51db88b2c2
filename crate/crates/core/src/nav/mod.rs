//! Navigation primitives: kinematics, on-track gradient estimation, the
//! analytic heading law, the normalized objective, termination and speed
//! scheduling. The closed loop itself lives in [`mission`].

pub mod mission;

use serde::{Deserialize, Serialize};

use crate::angle::wrap_deg;
use crate::error::{Error, Result};
use crate::field::{GeoPosition, LocalProjection, MagneticVector};

/// Displacements shorter than this (meters) cannot support a difference quotient.
pub const EPS_DEN_M: f64 = 1e-6;

/// Element normalizations smaller than this are excluded from the objective.
pub const EPS_OBJ: f64 = 1e-12;

/// Default lower bound on |sin| of the angle between the two displacements
/// used for a gradient solve.
pub const DEFAULT_MIN_SINE: f64 = 0.05;

/// Declination/inclination pair sensed at a location, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiSample {
    pub d_deg: f64,
    pub i_deg: f64,
}

impl DiSample {
    pub fn from_vector(m: &MagneticVector) -> Result<Self> {
        Ok(Self {
            d_deg: m.declination()?,
            i_deg: m.inclination()?,
        })
    }
}

/// One entry of the on-track history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub step: usize,
    pub position: GeoPosition,
    pub sample: DiSample,
}

/// Carrier state during a mission.
#[derive(Debug, Clone)]
pub struct NavState {
    pub frame: LocalProjection,
    pub position: GeoPosition,
    pub heading_deg: f64,
    /// Speed in km/h.
    pub speed_kmh: f64,
    pub step: usize,
    pub sample: DiSample,
    history: std::collections::VecDeque<TrackRecord>,
    capacity: usize,
}

impl NavState {
    pub fn new(frame: LocalProjection, position: GeoPosition, sample: DiSample, speed_kmh: f64) -> Self {
        let mut s = Self {
            frame,
            position,
            heading_deg: 0.0,
            speed_kmh,
            step: 0,
            sample,
            history: Default::default(),
            capacity: 3,
        };
        s.history.push_back(TrackRecord {
            step: 0,
            position,
            sample,
        });
        s
    }

    /// Most recent records, oldest first.
    pub fn history(&self) -> Vec<TrackRecord> {
        self.history.iter().copied().collect()
    }

    /// Record the carrier at a new position with its sensed sample.
    pub fn advance_to(&mut self, position: GeoPosition, sample: DiSample) {
        self.step += 1;
        self.position = position;
        self.sample = sample;
        self.history.push_back(TrackRecord {
            step: self.step,
            position,
            sample,
        });
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
    }
}

/// Dead-reckoning update: move along `theta_deg` for `dt_h` hours at the
/// state's speed. `x` is north and `y` east.
pub fn step_kinematics(s: &NavState, theta_deg: f64, dt_h: f64) -> Result<GeoPosition> {
    if !(dt_h > 0.0) {
        return Err(Error::InvalidInput(format!("step duration must be positive, got {dt_h}")));
    }
    let (dx, dy) = displacement(theta_deg, s.speed_kmh, dt_h);
    s.frame.position_xy(s.position.x_m + dx, s.position.y_m + dy)
}

/// North/east displacement in meters for a heading, speed (km/h) and duration (h).
pub fn displacement(theta_deg: f64, speed_kmh: f64, dt_h: f64) -> (f64, f64) {
    let dist = speed_kmh * 1000.0 * dt_h;
    let t = theta_deg.to_radians();
    (t.cos() * dist, t.sin() * dist)
}

/// Declination and inclination gradients in degrees per meter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    /// dD/dx (north).
    pub g_dx: f64,
    /// dD/dy (east).
    pub g_dy: f64,
    pub g_ix: f64,
    pub g_iy: f64,
    pub valid: bool,
}

impl GradientEstimate {
    pub fn invalid() -> Self {
        Self {
            g_dx: 0.0,
            g_dy: 0.0,
            g_ix: 0.0,
            g_iy: 0.0,
            valid: false,
        }
    }

    /// Jacobian determinant `g_dx g_iy - g_dy g_ix`.
    pub fn determinant(&self) -> f64 {
        self.g_dx * self.g_iy - self.g_dy * self.g_ix
    }
}

/// Estimate D/I gradients from the last three track records.
///
/// The two consecutive displacements `d1 = p1 - p0` and `d2 = p2 - p1` and
/// the matching sample changes give a 2x2 linear system per element, which
/// is solved exactly. For an axis-aligned pair (north move then east move)
/// this is the plain same-axis backward difference. The estimate is marked
/// invalid when either displacement is shorter than [`EPS_DEN_M`] or the two
/// are closer to collinear than `min_sine`.
pub fn estimate_gradients(history: &[TrackRecord], min_sine: f64) -> Result<GradientEstimate> {
    if history.len() < 3 {
        return Err(Error::NotReady(format!(
            "gradient estimate needs 3 track records, have {}",
            history.len()
        )));
    }
    let [r0, r1, r2] = [&history[history.len() - 3], &history[history.len() - 2], &history[history.len() - 1]];
    let d1 = (r1.position.x_m - r0.position.x_m, r1.position.y_m - r0.position.y_m);
    let d2 = (r2.position.x_m - r1.position.x_m, r2.position.y_m - r1.position.y_m);
    let n1 = d1.0.hypot(d1.1);
    let n2 = d2.0.hypot(d2.1);
    if n1 < EPS_DEN_M || n2 < EPS_DEN_M {
        return Ok(GradientEstimate::invalid());
    }
    let det = d1.0 * d2.1 - d1.1 * d2.0;
    if det.abs() / (n1 * n2) < min_sine {
        return Ok(GradientEstimate::invalid());
    }
    let solve = |a: f64, b: f64| -> (f64, f64) {
        // [d1.x d1.y; d2.x d2.y] [gx; gy] = [a; b]
        ((a * d2.1 - d1.1 * b) / det, (d1.0 * b - a * d2.0) / det)
    };
    let (g_dx, g_dy) = solve(r1.sample.d_deg - r0.sample.d_deg, r2.sample.d_deg - r1.sample.d_deg);
    let (g_ix, g_iy) = solve(r1.sample.i_deg - r0.sample.i_deg, r2.sample.i_deg - r1.sample.i_deg);
    let g = GradientEstimate {
        g_dx,
        g_dy,
        g_ix,
        g_iy,
        valid: true,
    };
    if ![g_dx, g_dy, g_ix, g_iy].iter().all(|v| v.is_finite()) {
        return Ok(GradientEstimate::invalid());
    }
    Ok(g)
}

/// Heading toward the destination's (D, I) signature under a locally linear field.
///
/// The two printed arctangent arguments
/// `num = (I_k - I_d) g_Dx - (D_k - D_d) g_Ix` and
/// `den = (D_k - D_d) g_Iy - (I_k - I_d) g_Dy` are, up to the factor
/// `-1/det`, the east and north components of the displacement that zeroes
/// both errors. The quadrant therefore comes from `atan2(-num/det, -den/det)`;
/// with a singular Jacobian the bare `atan2(num, den)` is used.
pub fn analytic_heading(sample: DiSample, dest: DiSample, g: &GradientEstimate) -> Result<f64> {
    if !g.valid {
        return Err(Error::NotReady("gradient estimate is invalid".into()));
    }
    let e_d = sample.d_deg - dest.d_deg;
    let e_i = sample.i_deg - dest.i_deg;
    let num = e_i * g.g_dx - e_d * g.g_ix;
    let den = e_d * g.g_iy - e_i * g.g_dy;
    if num.abs() < 1e-15 && den.abs() < 1e-15 {
        return Err(Error::Degenerate("at destination signature, heading undefined".into()));
    }
    let det = g.determinant();
    let theta = if det == 0.0 || !det.is_finite() {
        num.atan2(den)
    } else {
        let s = -det.signum();
        (s * num).atan2(s * den)
    };
    Ok(wrap_deg(theta.to_degrees()))
}

/// Names of the objective elements, in order.
pub const OBJECTIVE_ELEMENTS: [&str; 5] = ["bx", "by", "bz", "d", "i"];

/// Normalized per-element errors and their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    /// `None` marks an element excluded for degenerate normalization.
    pub per_element: [Option<f64>; 5],
    pub total: f64,
}

impl ObjectiveVector {
    pub fn excluded(&self) -> Vec<&'static str> {
        self.per_element
            .iter()
            .zip(OBJECTIVE_ELEMENTS)
            .filter(|(v, _)| v.is_none())
            .map(|(_, n)| n)
            .collect()
    }
}

/// Objective of the current state vector against the destination,
/// normalized by the start of the navigation.
pub fn objective(mk: &MagneticVector, md: &MagneticVector, m0: &MagneticVector) -> Result<ObjectiveVector> {
    let k = mk.state_vector()?;
    let d = md.state_vector()?;
    let o = m0.state_vector()?;
    let mut per = [None; 5];
    let mut sum = 0.0;
    let mut used = 0usize;
    for i in 0..5 {
        let norm = o[i] - d[i];
        if norm.abs() < EPS_OBJ {
            continue;
        }
        let v = (k[i] - d[i]).powi(2) / norm.powi(2);
        per[i] = Some(v);
        sum += v;
        used += 1;
    }
    let total = if used == 0 { 0.0 } else { sum / used as f64 };
    Ok(ObjectiveVector { per_element: per, total })
}

/// Outcome of the termination test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Continue,
    Success,
    BudgetExhausted,
}

pub fn should_terminate(obj: &ObjectiveVector, eps: f64, step: usize, max_steps: usize) -> Termination {
    if obj.total <= eps {
        Termination::Success
    } else if step >= max_steps {
        Termination::BudgetExhausted
    } else {
        Termination::Continue
    }
}

/// Speed decay near the destination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedSchedule {
    pub v0_kmh: f64,
    pub decay_rate: f64,
    pub decay_interval: u32,
    /// Half-width of the lat/lon box around the destination, degrees.
    pub box_deg: f64,
}

impl Default for SpeedSchedule {
    fn default() -> Self {
        Self {
            v0_kmh: 50.0,
            decay_rate: 0.9,
            decay_interval: 5,
            box_deg: 0.5,
        }
    }
}

impl SpeedSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.v0_kmh > 0.0 && self.v0_kmh.is_finite()) {
            return Err(Error::InvalidInput(format!("v0 must be positive, got {}", self.v0_kmh)));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "decay rate must be in (0, 1], got {}",
                self.decay_rate
            )));
        }
        if self.decay_interval < 1 {
            return Err(Error::InvalidInput("decay interval must be >= 1".into()));
        }
        if !(self.box_deg >= 0.0) {
            return Err(Error::InvalidInput(format!("box half-width must be >= 0, got {}", self.box_deg)));
        }
        Ok(())
    }
}

/// Speed for within-window index `k` in `[1, window]`.
pub fn speed_update(sched: &SpeedSchedule, pos: &GeoPosition, dest: &GeoPosition, k: usize, window: usize) -> f64 {
    let near = (pos.lat_deg - dest.lat_deg).abs() <= sched.box_deg
        && wrap_deg(pos.lon_deg - dest.lon_deg).abs() <= sched.box_deg;
    if !near {
        return sched.v0_kmh;
    }
    let k = k.clamp(1, window.max(1));
    let exponent = ((window - k) / sched.decay_interval as usize) as f64;
    (sched.v0_kmh * sched.decay_rate * exponent.exp()).min(sched.v0_kmh)
}

//! Synthetic scenarios: scheduled controls, landmark fields, moving objects,
//! and noisy sensor logs in the ingest format.

mod render;
mod truth;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::ObservationMode;
use crate::ingest::{LandmarkSighting, LogHeader, SensorLog, SensorRecord};
use crate::models::{
    motion_step, observe, wrap, ControlInput, LandmarkPosition, ModelError, MotionNoiseConfig,
    Pose, SensorNoiseConfig,
};
use crate::perception::{LaserScan, BEAM_COUNT, SCAN_SENSOR_OFFSET};

pub use render::{paint_object, render_scan, ScanRenderConfig};
pub use truth::{GroundTruth, Visibility, TIME_TOLERANCE};

/// Largest step count a scenario may request.
const MAX_STEPS: f64 = 1e7;
const LAYOUT_ATTEMPTS: usize = 100_000;

pub const DEFAULT_SPEED: f64 = 3.0;
pub const DEFAULT_LOOP_PERIOD: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::Invalid(msg.into())
}

/// What the simulated exteroceptive sensor writes to the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationOutput {
    /// Controls only.
    None,
    /// Range/bearing sightings tagged with the landmark id.
    #[default]
    Landmarks,
    /// Anonymous 361-beam laser scans.
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorGeometry {
    /// Full field of view, centred on the heading, for tagged sightings.
    pub fov: f64,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self {
            fov: PI,
            max_range: 80.0,
            min_range: 1.0,
        }
    }
}

/// Constant offsets added to the logged controls.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlBias {
    pub speed: f64,
    pub gyro_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSegment {
    pub v: f64,
    pub omega: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomLayout {
    pub count: usize,
    pub centre: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub min_spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandmarkLayout {
    pub positions: Vec<LandmarkPosition>,
    /// Extra landmarks drawn uniformly in a disc.
    pub random: Option<RandomLayout>,
}

/// A point moving back and forth along a polyline at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicObject {
    pub waypoints: Vec<[f64; 2]>,
    pub speed: f64,
    /// Distance along the path at t = 0.
    #[serde(default)]
    pub phase: f64,
}

impl DynamicObject {
    pub fn position_at(&self, t: f64) -> LandmarkPosition {
        let pts = &self.waypoints;
        let seg_len = |i: usize| (pts[i + 1][0] - pts[i][0]).hypot(pts[i + 1][1] - pts[i][1]);
        let total: f64 = (0..pts.len().saturating_sub(1)).map(seg_len).sum();
        if total == 0.0 {
            return LandmarkPosition::new(pts[0][0], pts[0][1]);
        }
        let mut s = (self.phase + self.speed * t).rem_euclid(2.0 * total);
        if s > total {
            s = 2.0 * total - s;
        }
        for i in 0..pts.len() - 1 {
            let len = seg_len(i);
            if s <= len || i == pts.len() - 2 {
                let f = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                return LandmarkPosition::new(
                    pts[i][0] + f * (pts[i + 1][0] - pts[i][0]),
                    pts[i][1] + f * (pts[i + 1][1] - pts[i][1]),
                );
            }
            s -= len;
        }
        unreachable!("polyline has at least two points")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    /// The robot holds still for this long before the schedule starts.
    pub stationary: f64,
    pub observation_mode: ObservationMode,
    pub observations: ObservationOutput,
    /// Sensor output every this many control steps.
    pub observe_every: usize,
    pub max_speed: f64,
    pub max_yaw_rate: f64,
    pub initial_pose: Pose,
    pub motion_noise: MotionNoiseConfig,
    pub sensor_noise: SensorNoiseConfig,
    pub bias: ControlBias,
    pub sensor: SensorGeometry,
    pub scan: ScanRenderConfig,
    /// Repeats for the whole run.
    pub schedule: Vec<ControlSegment>,
    pub landmarks: LandmarkLayout,
    pub dynamic: Vec<DynamicObject>,
}

impl Default for ScenarioConfig {
    /// A left-turning loop at 3 m/s with 20 landmarks scattered inside it.
    fn default() -> Self {
        let omega = TAU / DEFAULT_LOOP_PERIOD;
        let radius = DEFAULT_SPEED / omega;
        Self {
            seed: 0,
            duration: 120.0,
            dt: 0.5,
            stationary: 0.0,
            observation_mode: ObservationMode::RangeBearing,
            observations: ObservationOutput::Landmarks,
            observe_every: 1,
            max_speed: 30.0,
            max_yaw_rate: 60f64.to_radians(),
            initial_pose: Pose::new(0.0, 0.0, FRAC_PI_2),
            motion_noise: MotionNoiseConfig::default(),
            sensor_noise: SensorNoiseConfig::default(),
            bias: ControlBias::default(),
            sensor: SensorGeometry::default(),
            scan: ScanRenderConfig::default(),
            schedule: vec![ControlSegment {
                v: DEFAULT_SPEED,
                omega,
                duration: DEFAULT_LOOP_PERIOD,
            }],
            landmarks: LandmarkLayout {
                positions: vec![],
                random: Some(RandomLayout {
                    count: 20,
                    centre: [-radius, 0.0],
                    radius: 40.0,
                    min_spacing: 0.0,
                }),
            },
            dynamic: vec![],
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Laser-scan run past 15 static landmarks while two objects cross
    /// the field.
    pub fn dynamic_objects() -> Self {
        let omega = 0.1;
        let v = 1.5;
        let radius = v / omega;
        Self {
            duration: 60.0,
            dt: 0.1,
            observations: ObservationOutput::Scan,
            motion_noise: MotionNoiseConfig {
                sigma_v: 0.1,
                sigma_omega: 1f64.to_radians(),
            },
            schedule: vec![ControlSegment {
                v,
                omega,
                duration: TAU / omega,
            }],
            landmarks: LandmarkLayout {
                positions: vec![],
                random: Some(RandomLayout {
                    count: 15,
                    centre: [-radius, 0.0],
                    radius: 25.0,
                    min_spacing: 3.0,
                }),
            },
            dynamic: vec![
                DynamicObject {
                    waypoints: vec![[-40.0, -12.0], [10.0, 12.0]],
                    speed: 1.5,
                    phase: 0.0,
                },
                DynamicObject {
                    waypoints: vec![[-40.0, 12.0], [10.0, -12.0]],
                    speed: 2.0,
                    phase: 20.0,
                },
            ],
            ..Self::default()
        }
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_pos(self.dt) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !finite_pos(self.duration) {
            return Err(invalid(format!("duration must be positive, got {}", self.duration)));
        }
        if self.duration / self.dt > MAX_STEPS {
            return Err(invalid("too many steps"));
        }
        if !finite_nonneg(self.stationary) {
            return Err(invalid("stationary must be non-negative"));
        }
        if self.observe_every == 0 {
            return Err(invalid("observe_every must be at least 1"));
        }
        if !finite_pos(self.max_speed) || !finite_pos(self.max_yaw_rate) {
            return Err(invalid("speed and yaw-rate limits must be positive"));
        }
        if !self.initial_pose.is_finite() {
            return Err(invalid("initial pose must be finite"));
        }
        self.motion_noise.validate()?;
        self.sensor_noise.validate()?;
        if !(self.bias.speed.is_finite() && self.bias.gyro_z.is_finite()) {
            return Err(invalid("bias must be finite"));
        }
        let s = &self.sensor;
        if !(s.fov > 0.0 && s.fov <= TAU) {
            return Err(invalid("fov must lie in (0, 2π]"));
        }
        if !(finite_nonneg(s.min_range) && finite_pos(s.max_range) && s.min_range < s.max_range) {
            return Err(invalid("need 0 <= min_range < max_range"));
        }
        let sc = &self.scan;
        if !(finite_pos(sc.cluster_beams)
            && finite_nonneg(sc.sigma_range)
            && finite_nonneg(sc.sigma_bearing)
            && finite_nonneg(sc.beam_jitter))
        {
            return Err(invalid("scan render parameters must be non-negative"));
        }
        if self.schedule.is_empty() {
            return Err(invalid("schedule is empty"));
        }
        for (i, seg) in self.schedule.iter().enumerate() {
            if !finite_pos(seg.duration) {
                return Err(invalid(format!("schedule[{i}]: duration must be positive")));
            }
            if !(seg.v.is_finite() && seg.v.abs() <= self.max_speed) {
                return Err(invalid(format!("schedule[{i}]: |v| exceeds {}", self.max_speed)));
            }
            if !(seg.omega.is_finite() && seg.omega.abs() <= self.max_yaw_rate) {
                return Err(invalid(format!(
                    "schedule[{i}]: |omega| exceeds {}",
                    self.max_yaw_rate
                )));
            }
        }
        if self.landmarks.positions.iter().any(|l| !(l.x.is_finite() && l.y.is_finite())) {
            return Err(invalid("landmark positions must be finite"));
        }
        if let Some(r) = &self.landmarks.random {
            if !(finite_pos(r.radius)
                && finite_nonneg(r.min_spacing)
                && r.centre.iter().all(|c| c.is_finite()))
            {
                return Err(invalid("random layout needs a positive radius"));
            }
        }
        for (i, d) in self.dynamic.iter().enumerate() {
            if d.waypoints.is_empty()
                || d.waypoints.iter().flatten().any(|c| !c.is_finite())
                || !finite_nonneg(d.speed)
                || !d.phase.is_finite()
            {
                return Err(invalid(format!("dynamic[{i}] needs finite waypoints and speed")));
            }
        }
        Ok(())
    }

    /// Scheduled (noise-free) control at time `t`.
    pub fn control_at(&self, t: f64) -> ControlInput {
        if t < self.stationary {
            return ControlInput::default();
        }
        let cycle: f64 = self.schedule.iter().map(|s| s.duration).sum();
        let mut tau = (t - self.stationary).rem_euclid(cycle);
        for seg in &self.schedule {
            if tau < seg.duration {
                return ControlInput::new(seg.v, seg.omega);
            }
            tau -= seg.duration;
        }
        let last = self.schedule.last().expect("schedule validated non-empty");
        ControlInput::new(last.v, last.omega)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Fixed positions followed by the random draw.
    pub fn landmark_positions(&self) -> Result<Vec<LandmarkPosition>, SimError> {
        let mut out = self.landmarks.positions.clone();
        let Some(r) = &self.landmarks.random else {
            return Ok(out);
        };
        let mut rng = self.rng(1);
        let first_random = out.len();
        for _ in 0..r.count {
            let mut placed = false;
            for _ in 0..LAYOUT_ATTEMPTS {
                let rho = r.radius * rng.random::<f64>().sqrt();
                let phi = TAU * rng.random::<f64>();
                let cand = LandmarkPosition::new(r.centre[0] + rho * phi.cos(), r.centre[1] + rho * phi.sin());
                if out[first_random..].iter().all(|l| l.distance_to(&cand) >= r.min_spacing) {
                    out.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(invalid(format!(
                    "cannot place {} landmarks {} m apart within radius {}",
                    r.count, r.min_spacing, r.radius
                )));
            }
        }
        Ok(out)
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated sigma")
}

/// Runs a scenario. The same configuration always yields the same output.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(GroundTruth, SensorLog), SimError> {
    cfg.validate()?;
    let landmarks = cfg.landmark_positions()?;
    let mut control_rng = cfg.rng(2);
    let mut sensor_rng = cfg.rng(3);
    let v_noise = normal(cfg.motion_noise.sigma_v);
    let w_noise = normal(cfg.motion_noise.sigma_omega);

    let header = LogHeader {
        stationary_until: cfg.stationary,
        max_range: cfg.sensor.max_range,
        initial_pose: cfg.initial_pose,
    };
    let n = cfg.step_count();
    let mut truth = GroundTruth {
        landmarks: landmarks.clone(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(2 * (n + 1));
    let mut pose = cfg.initial_pose;
    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        truth.times.push(t);
        truth.poses.push(pose);

        let u = cfg.control_at(t);
        let v = u.v + cfg.bias.speed + v_noise.sample(&mut control_rng);
        let w = u.omega + cfg.bias.gyro_z + w_noise.sample(&mut control_rng);
        records.push(SensorRecord::speed(t, v));
        records.push(SensorRecord::gyro(t, [0.0, 0.0, w]));

        if k % cfg.observe_every == 0 {
            match cfg.observations {
                ObservationOutput::None => {}
                ObservationOutput::Landmarks => {
                    let vis = sight_landmarks(cfg, t, &pose, &landmarks, &mut sensor_rng, &mut records)?;
                    truth.visibility.push(vis);
                }
                ObservationOutput::Scan => {
                    let (scan, vis) = noisy_scan(cfg, t, &pose, &landmarks, &mut sensor_rng);
                    records.push(SensorRecord::scan(scan));
                    truth.visibility.push(vis);
                }
            }
        }
        if k < n {
            pose = motion_step(&pose, &u, cfg.dt)?;
        }
    }
    Ok((truth, SensorLog::new(header, records)))
}

fn sight_landmarks(
    cfg: &ScenarioConfig,
    t: f64,
    pose: &Pose,
    landmarks: &[LandmarkPosition],
    rng: &mut ChaCha8Rng,
    records: &mut Vec<SensorRecord>,
) -> Result<Visibility, SimError> {
    let r_noise = normal(cfg.sensor_noise.sigma_range);
    let b_noise = normal(cfg.sensor_noise.sigma_bearing);
    let mode = cfg.observation_mode;
    let mut vis = Visibility {
        timestamp: t,
        ..Default::default()
    };
    for (id, l) in landmarks.iter().enumerate() {
        let z = match observe(pose, l, &cfg.sensor_noise) {
            Ok(z) => z,
            Err(ModelError::DegenerateGeometry) => continue,
            Err(e) => return Err(e.into()),
        };
        let relative = wrap(z.bearing - cfg.sensor_noise.sensor_offset);
        if z.range < cfg.sensor.min_range
            || z.range > cfg.sensor.max_range
            || relative.abs() > 0.5 * cfg.sensor.fov
        {
            continue;
        }
        let range = (z.range + r_noise.sample(rng)).max(f64::EPSILON);
        let bearing = wrap(z.bearing + b_noise.sample(rng));
        vis.landmarks.push(id);
        records.push(SensorRecord::landmark(
            t,
            LandmarkSighting {
                id: id as u64,
                range: mode.uses_range().then_some(range),
                bearing: mode.uses_bearing().then_some(bearing),
            },
        ));
    }
    Ok(vis)
}

fn noisy_scan(
    cfg: &ScenarioConfig,
    t: f64,
    pose: &Pose,
    landmarks: &[LandmarkPosition],
    rng: &mut ChaCha8Rng,
) -> (LaserScan, Visibility) {
    let sc = &cfg.scan;
    let max_range = cfg.sensor.max_range;
    let r_noise = normal(sc.sigma_range);
    let b_noise = normal(sc.sigma_bearing);
    let jitter = normal(sc.beam_jitter);
    let sensor = SensorNoiseConfig::default().with_offset(SCAN_SENSOR_OFFSET);
    let dynamics: Vec<LandmarkPosition> = cfg.dynamic.iter().map(|d| d.position_at(t)).collect();

    let mut ranges = vec![max_range; BEAM_COUNT];
    let mut vis = Visibility {
        timestamp: t,
        ..Default::default()
    };
    for (idx, obj) in landmarks.iter().chain(&dynamics).enumerate() {
        let Ok(z) = observe(pose, obj, &sensor) else {
            continue;
        };
        let range = z.range + r_noise.sample(rng);
        let bearing = z.bearing + b_noise.sample(rng);
        if range < cfg.sensor.min_range || range >= max_range {
            continue;
        }
        if paint_object(&mut ranges, range, bearing, sc.cluster_beams) {
            if idx < landmarks.len() {
                vis.landmarks.push(idx);
            } else {
                vis.dynamics.push(idx - landmarks.len());
            }
        }
    }
    let ceiling = max_range * (1.0 - 1e-9);
    for r in ranges.iter_mut().filter(|r| **r < max_range) {
        *r = (*r + jitter.sample(rng)).clamp(0.0, ceiling);
    }
    let scan = LaserScan::new(t, ranges, max_range).expect("rendered ranges lie in [0, max_range]");
    (scan, vis)
}

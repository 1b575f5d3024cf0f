//! Planar motion and range/bearing sensor models with their Jacobians.
//!
//! Conventions used throughout the crate:
//!
//! - headings and bearings live in `(-π, π]`;
//! - a landmark at relative angle `φ` from the robot heading is observed at
//!   sensor bearing `φ + sensor_offset`, so the inverse model subtracts the
//!   offset again before projecting into the world frame.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Landmarks closer than this to the robot are rejected as degenerate.
pub const MIN_LANDMARK_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("landmark coincides with the robot position")]
    DegenerateGeometry,
    #[error("observation range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("noise standard deviation `{0}` must be finite and non-negative")]
    InvalidNoise(&'static str),
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> Result<f64, ModelError> {
    if !a.is_finite() {
        return Err(ModelError::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible wrap for values already known to be finite.
pub(crate) fn wrap(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    // rem_euclid can land exactly on TAU for tiny negative inputs
    if w <= -PI {
        w += TAU;
    }
    w
}

/// Robot pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    /// Builds a pose, wrapping the heading.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::origin()
    }
}

/// Linear speed and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// A range/bearing measurement in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub range: f64,
    pub bearing: f64,
}

impl Observation {
    /// Builds an observation with its bearing wrapped.
    pub fn new(range: f64, bearing: f64) -> Self {
        Self {
            range,
            bearing: wrap(bearing),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkPosition {
    pub x: f64,
    pub y: f64,
}

impl LandmarkPosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: &LandmarkPosition) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Standard deviations of the measured control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoiseConfig {
    pub sigma_v: f64,
    pub sigma_omega: f64,
}

impl MotionNoiseConfig {
    pub fn new(sigma_v: f64, sigma_omega: f64) -> Result<Self, ModelError> {
        let cfg = Self {
            sigma_v,
            sigma_omega,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noiseless() -> Self {
        Self {
            sigma_v: 0.0,
            sigma_omega: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_sigma(self.sigma_v, "sigma_v")?;
        check_sigma(self.sigma_omega, "sigma_omega")
    }

    /// Control covariance `diag(σv², σω²)`.
    pub fn control_covariance(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_v.powi(2), 0.0, 0.0, self.sigma_omega.powi(2))
    }
}

impl Default for MotionNoiseConfig {
    /// 0.5 m/s speed noise and 2°/s yaw-rate noise.
    fn default() -> Self {
        Self {
            sigma_v: 0.5,
            sigma_omega: 2f64.to_radians(),
        }
    }
}

/// Range/bearing noise plus the sensor's angular mounting offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorNoiseConfig {
    pub sigma_range: f64,
    pub sigma_bearing: f64,
    pub sensor_offset: f64,
}

impl SensorNoiseConfig {
    pub fn new(sigma_range: f64, sigma_bearing: f64, sensor_offset: f64) -> Result<Self, ModelError> {
        let cfg = Self {
            sigma_range,
            sigma_bearing,
            sensor_offset,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_sigma(self.sigma_range, "sigma_range")?;
        check_sigma(self.sigma_bearing, "sigma_bearing")?;
        if !self.sensor_offset.is_finite() {
            return Err(ModelError::NonFinite("sensor_offset"));
        }
        Ok(())
    }

    pub fn with_offset(mut self, sensor_offset: f64) -> Self {
        self.sensor_offset = sensor_offset;
        self
    }

    /// Measurement covariance `diag(σr², σb²)`.
    pub fn measurement_covariance(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma_range.powi(2),
            0.0,
            0.0,
            self.sigma_bearing.powi(2),
        )
    }
}

impl Default for SensorNoiseConfig {
    /// 0.2 m range noise, 2° bearing noise, no mounting offset.
    fn default() -> Self {
        Self {
            sigma_range: 0.2,
            sigma_bearing: 2f64.to_radians(),
            sensor_offset: 0.0,
        }
    }
}

fn check_sigma(s: f64, name: &'static str) -> Result<(), ModelError> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidNoise(name))
    }
}

fn check_step(dt: f64) -> Result<(), ModelError> {
    if !dt.is_finite() {
        return Err(ModelError::NonFinite("time step"));
    }
    if dt <= 0.0 {
        return Err(ModelError::NonPositiveStep(dt));
    }
    Ok(())
}

/// First-order Euler step of the unicycle kinematics.
pub fn motion_step(p: &Pose, u: &ControlInput, dt: f64) -> Result<Pose, ModelError> {
    check_step(dt)?;
    let (s, c) = p.theta.sin_cos();
    Ok(Pose::new(
        p.x + dt * u.v * c,
        p.y + dt * u.v * s,
        p.theta + dt * u.omega,
    ))
}

/// Jacobians of [`motion_step`] with respect to the pose and to the control.
pub fn motion_jacobians(
    p: &Pose,
    u: &ControlInput,
    dt: f64,
) -> Result<(Matrix3<f64>, Matrix3x2<f64>), ModelError> {
    check_step(dt)?;
    let (s, c) = p.theta.sin_cos();
    let fx = Matrix3::new(
        1.0, 0.0, -dt * u.v * s, //
        0.0, 1.0, dt * u.v * c, //
        0.0, 0.0, 1.0,
    );
    let fu = Matrix3x2::new(
        dt * c, 0.0, //
        dt * s, 0.0, //
        0.0, dt,
    );
    Ok((fx, fu))
}

/// Pose noise induced by control noise, `Fu · Qu · Fuᵀ`.
pub fn process_noise(fu: &Matrix3x2<f64>, cfg: &MotionNoiseConfig) -> Matrix3<f64> {
    let q = fu * cfg.control_covariance() * fu.transpose();
    // exact symmetry, the two triangles can differ in the last bit
    (q + q.transpose()) * 0.5
}

fn relative(p: &Pose, l: &LandmarkPosition) -> Result<(f64, f64, f64), ModelError> {
    let dx = l.x - p.x;
    let dy = l.y - p.y;
    let r = dx.hypot(dy);
    if !r.is_finite() {
        return Err(ModelError::NonFinite("landmark"));
    }
    if r < MIN_LANDMARK_DISTANCE {
        return Err(ModelError::DegenerateGeometry);
    }
    Ok((dx, dy, r))
}

/// Expected range and bearing of landmark `l` seen from pose `p`.
pub fn observe(
    p: &Pose,
    l: &LandmarkPosition,
    cfg: &SensorNoiseConfig,
) -> Result<Observation, ModelError> {
    let (dx, dy, r) = relative(p, l)?;
    Ok(Observation::new(
        r,
        dy.atan2(dx) - p.theta + cfg.sensor_offset,
    ))
}

/// Jacobians of [`observe`] with respect to the pose and to the landmark.
///
/// The sensor offset is a constant and drops out of both.
pub fn observation_jacobians(
    p: &Pose,
    l: &LandmarkPosition,
) -> Result<(Matrix2x3<f64>, Matrix2<f64>), ModelError> {
    let (dx, dy, r) = relative(p, l)?;
    let r2 = r * r;
    let hx = Matrix2x3::new(
        -dx / r, -dy / r, 0.0, //
        dy / r2, -dx / r2, -1.0,
    );
    let hl = Matrix2::new(
        dx / r, dy / r, //
        -dy / r2, dx / r2,
    );
    Ok((hx, hl))
}

fn world_angle(p: &Pose, z: &Observation, cfg: &SensorNoiseConfig) -> Result<f64, ModelError> {
    if !(z.range.is_finite() && z.bearing.is_finite()) {
        return Err(ModelError::NonFinite("observation"));
    }
    if z.range <= 0.0 {
        return Err(ModelError::NonPositiveRange(z.range));
    }
    Ok(z.bearing - cfg.sensor_offset + p.theta)
}

/// Places a landmark in the world frame from a pose and a measurement.
pub fn inverse_observe(
    p: &Pose,
    z: &Observation,
    cfg: &SensorNoiseConfig,
) -> Result<LandmarkPosition, ModelError> {
    let phi = world_angle(p, z, cfg)?;
    let (s, c) = phi.sin_cos();
    Ok(LandmarkPosition::new(p.x + z.range * c, p.y + z.range * s))
}

/// Jacobians of [`inverse_observe`] with respect to the pose and to the
/// measurement.
pub fn inverse_observation_jacobians(
    p: &Pose,
    z: &Observation,
    cfg: &SensorNoiseConfig,
) -> Result<(Matrix2x3<f64>, Matrix2<f64>), ModelError> {
    let phi = world_angle(p, z, cfg)?;
    let (s, c) = phi.sin_cos();
    let r = z.range;
    let gx = Matrix2x3::new(
        1.0, 0.0, -r * s, //
        0.0, 1.0, r * c,
    );
    let gz = Matrix2::new(
        c, -r * s, //
        s, r * c,
    );
    Ok((gx, gz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const EPS: f64 = 1e-12;

    fn sensor(offset: f64) -> SensorNoiseConfig {
        SensorNoiseConfig::default().with_offset(offset)
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap() - PI).abs() < EPS);
        assert!((wrap_angle(-1.5 * PI).unwrap() - FRAC_PI_2).abs() < EPS);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_is_idempotent_near_boundary() {
        for a in [PI - 1e-15, -PI + 1e-15, -1e-300, 1e-300, 7.0 * PI, -7.0 * PI] {
            let w = wrap(a);
            assert!(w > -PI && w <= PI, "{a} -> {w}");
            assert_eq!(wrap(w), w);
        }
    }

    #[test]
    fn motion_step_examples() {
        let p = motion_step(&Pose::origin(), &ControlInput::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!((p.x, p.y, p.theta), (1.0, 0.0, 0.0));

        let p = motion_step(
            &Pose::new(0.0, 0.0, FRAC_PI_2),
            &ControlInput::new(2.0, 0.0),
            0.5,
        )
        .unwrap();
        assert!(p.x.abs() < EPS && (p.y - 1.0).abs() < EPS && (p.theta - FRAC_PI_2).abs() < EPS);

        let p = motion_step(
            &Pose::new(1.0, 1.0, 0.0),
            &ControlInput::new(0.0, FRAC_PI_2),
            1.0,
        )
        .unwrap();
        assert_eq!((p.x, p.y), (1.0, 1.0));
        assert!((p.theta - FRAC_PI_2).abs() < EPS);
    }

    #[test]
    fn motion_step_rejects_bad_step() {
        let u = ControlInput::new(1.0, 0.0);
        assert_eq!(
            motion_step(&Pose::origin(), &u, 0.0),
            Err(ModelError::NonPositiveStep(0.0))
        );
        assert!(motion_step(&Pose::origin(), &u, -0.1).is_err());
        assert!(motion_jacobians(&Pose::origin(), &u, 0.0).is_err());
    }

    #[test]
    fn motion_jacobian_examples() {
        let (fx, fu) =
            motion_jacobians(&Pose::origin(), &ControlInput::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!(fx, Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0));
        assert_eq!(fu, Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0));

        let (fx, _) = motion_jacobians(
            &Pose::new(0.0, 0.0, FRAC_PI_2),
            &ControlInput::new(3.0, 0.0),
            0.1,
        )
        .unwrap();
        assert!((fx[(0, 2)] + 0.3).abs() < EPS);
        assert!(fx[(1, 2)].abs() < EPS);
    }

    #[test]
    fn process_noise_examples() {
        let cfg = MotionNoiseConfig::new(0.5, 0.1).unwrap();
        assert_eq!(process_noise(&Matrix3x2::zeros(), &cfg), Matrix3::zeros());
        let q = process_noise(&Matrix3x2::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0), &cfg);
        let expected = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.25, 0.0, 0.01));
        assert!((q - expected).abs().max() < EPS);
    }

    #[test]
    fn observe_examples() {
        let z = observe(&Pose::origin(), &LandmarkPosition::new(1.0, 0.0), &sensor(0.0)).unwrap();
        assert_eq!((z.range, z.bearing), (1.0, 0.0));

        let z = observe(
            &Pose::new(0.0, 0.0, FRAC_PI_2),
            &LandmarkPosition::new(0.0, 2.0),
            &sensor(0.0),
        )
        .unwrap();
        assert!((z.range - 2.0).abs() < EPS && z.bearing.abs() < EPS);

        let l = LandmarkPosition::new(1.0 + 3.0 * 0.4f64.cos(), 1.0 + 3.0 * 0.4f64.sin());
        let z = observe(&Pose::new(1.0, 1.0, 0.0), &l, &sensor(FRAC_PI_2)).unwrap();
        assert!((z.range - 3.0).abs() < EPS);
        assert!((z.bearing - wrap(0.4 + FRAC_PI_2)).abs() < EPS);
    }

    #[test]
    fn observe_rejects_coincident_landmark() {
        let p = Pose::new(2.0, 3.0, 0.1);
        let l = LandmarkPosition::new(2.0, 3.0 + 1e-10);
        assert_eq!(observe(&p, &l, &sensor(0.0)), Err(ModelError::DegenerateGeometry));
        assert_eq!(observation_jacobians(&p, &l), Err(ModelError::DegenerateGeometry));
    }

    #[test]
    fn observation_jacobian_examples() {
        let p = Pose::origin();
        let (hx, hl) = observation_jacobians(&p, &LandmarkPosition::new(2.0, 0.0)).unwrap();
        assert_eq!(hx.row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 0.0]);
        assert_eq!(hx.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, -0.5, -1.0]);
        assert_eq!(hl, -hx.fixed_columns::<2>(0));

        let p = Pose::new(-1.3, 0.7, 2.9);
        let (hx, hl) = observation_jacobians(&p, &LandmarkPosition::new(4.2, -3.3)).unwrap();
        assert_eq!(hl, -hx.fixed_columns::<2>(0));
    }

    #[test]
    fn inverse_observe_examples() {
        let l = inverse_observe(&Pose::origin(), &Observation::new(1.0, 0.0), &sensor(0.0)).unwrap();
        assert_eq!((l.x, l.y), (1.0, 0.0));
        let l = inverse_observe(
            &Pose::origin(),
            &Observation::new(2.0, FRAC_PI_2),
            &sensor(0.0),
        )
        .unwrap();
        assert!(l.x.abs() < EPS && (l.y - 2.0).abs() < EPS);
        assert_eq!(
            inverse_observe(&Pose::origin(), &Observation::new(0.0, 0.3), &sensor(0.0)),
            Err(ModelError::NonPositiveRange(0.0))
        );
    }

    #[test]
    fn inverse_jacobian_examples() {
        let (gx, gz) = inverse_observation_jacobians(
            &Pose::origin(),
            &Observation::new(1.0, 0.0),
            &sensor(0.0),
        )
        .unwrap();
        assert_eq!(gx, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 1.0));
        assert_eq!(gz, Matrix2::identity());

        let p = Pose::new(0.3, -2.0, 1.1);
        let (_, gz1) =
            inverse_observation_jacobians(&p, &Observation::new(1.5, 0.7), &sensor(0.2)).unwrap();
        let (_, gz2) =
            inverse_observation_jacobians(&p, &Observation::new(3.0, 0.7), &sensor(0.2)).unwrap();
        assert_eq!(gz1.column(0), gz2.column(0));
        assert!((gz1.column(1) * 2.0 - gz2.column(1)).abs().max() < EPS);
    }

    #[test]
    fn zero_control_is_identity() {
        let p = Pose::new(3.0, -4.0, -2.5);
        for dt in [1e-3, 0.1, 10.0] {
            assert_eq!(motion_step(&p, &ControlInput::default(), dt).unwrap(), p);
        }
    }

    #[test]
    fn invalid_noise_rejected() {
        assert!(MotionNoiseConfig::new(-0.1, 0.1).is_err());
        assert!(SensorNoiseConfig::new(0.1, f64::NAN, 0.0).is_err());
        assert!(SensorNoiseConfig::new(0.1, 0.1, f64::INFINITY).is_err());
    }
}

//! Independent reference implementations used by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use slam2d::models::{ControlInput, LandmarkPosition, MotionNoiseConfig, Observation, Pose, SensorNoiseConfig};

pub fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Central finite-difference Jacobian. Output components listed in
/// `angular` are differenced on the circle.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], angular: &[usize]) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for c in 0..x.len() {
        let h = 1e-6 * x[c].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for r in 0..m {
            let d = fp[r] - fm[r];
            let d = if angular.contains(&r) { wrap(d) } else { d };
            j[(r, c)] = d / (xp[c] - xm[c]);
        }
    }
    j
}

pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Largest entry-wise difference relative to the reference's magnitude.
pub fn scaled_max_diff(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax().max(1.0);
    (a - reference).amax() / scale
}

pub fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-PI..PI),
    )
}

/// A landmark between 0.5 and 60 m from `p`.
pub fn random_landmark_near(rng: &mut ChaCha8Rng, p: &Pose) -> LandmarkPosition {
    let r = rng.random_range(0.5..60.0);
    let a = rng.random_range(-PI..PI);
    LandmarkPosition::new(p.x + r * a.cos(), p.y + r * a.sin())
}

pub fn random_sensor(rng: &mut ChaCha8Rng) -> SensorNoiseConfig {
    let offset = match rng.random_range(0..3) {
        0 => 0.0,
        1 => PI / 2.0,
        _ => rng.random_range(-PI..PI),
    };
    SensorNoiseConfig {
        sigma_range: rng.random_range(0.01..0.5),
        sigma_bearing: rng.random_range(0.001..0.1),
        sensor_offset: offset,
    }
}

pub fn random_observation(rng: &mut ChaCha8Rng) -> Observation {
    Observation::new(rng.random_range(0.5..80.0), rng.random_range(-PI..PI))
}

/// Random joint state with `k` landmarks and a well-conditioned SPD
/// covariance.
pub fn random_state(rng: &mut ChaCha8Rng, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = 3 + 2 * k;
    let p = random_pose(rng);
    let mut mean = DVector::zeros(n);
    mean[0] = p.x;
    mean[1] = p.y;
    mean[2] = p.theta;
    for i in 0..k {
        let l = random_landmark_near(rng, &p);
        mean[3 + 2 * i] = l.x;
        mean[4 + 2 * i] = l.y;
    }
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
    let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.05;
    (mean, cov)
}

/// Dense EKF prediction: `P ← F P Fᵀ + G Qu Gᵀ` with `F`, `G` spanning the
/// full state.
pub fn dense_predict(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    u: &ControlInput,
    dt: f64,
    noise: &MotionNoiseConfig,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let th = mean[2];
    let mut f = DMatrix::identity(n, n);
    f[(0, 2)] = -u.v * dt * th.sin();
    f[(1, 2)] = u.v * dt * th.cos();
    let mut g = DMatrix::zeros(n, 2);
    g[(0, 0)] = dt * th.cos();
    g[(1, 0)] = dt * th.sin();
    g[(2, 1)] = dt;
    let qu = DMatrix::from_diagonal(&DVector::from_vec(vec![
        noise.sigma_v * noise.sigma_v,
        noise.sigma_omega * noise.sigma_omega,
    ]));
    let cov = &f * cov * f.transpose() + &g * qu * g.transpose();
    let mut mean = mean.clone();
    mean[0] += u.v * dt * th.cos();
    mean[1] += u.v * dt * th.sin();
    mean[2] = wrap(th + u.omega * dt);
    (mean, cov)
}

/// Dense range/bearing update against landmark `k`, rows selected by
/// `use_range` / `use_bearing`.
pub fn dense_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    k: usize,
    z: &Observation,
    sensor: &SensorNoiseConfig,
    use_range: bool,
    use_bearing: bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let (x, y, th) = (mean[0], mean[1], mean[2]);
    let (lx, ly) = (mean[3 + 2 * k], mean[4 + 2 * k]);
    let (dx, dy) = (lx - x, ly - y);
    let q = dx * dx + dy * dy;
    let r = q.sqrt();
    let mut full_h = DMatrix::zeros(2, n);
    full_h[(0, 0)] = -dx / r;
    full_h[(0, 1)] = -dy / r;
    full_h[(0, 3 + 2 * k)] = dx / r;
    full_h[(0, 4 + 2 * k)] = dy / r;
    full_h[(1, 0)] = dy / q;
    full_h[(1, 1)] = -dx / q;
    full_h[(1, 2)] = -1.0;
    full_h[(1, 3 + 2 * k)] = -dy / q;
    full_h[(1, 4 + 2 * k)] = dx / q;
    let nu_full = [z.range - r, wrap(z.bearing - (dy.atan2(dx) - th + sensor.sensor_offset))];
    let var_full = [sensor.sigma_range.powi(2), sensor.sigma_bearing.powi(2)];
    let rows: Vec<usize> = [(0, use_range), (1, use_bearing)]
        .iter()
        .filter(|(_, on)| *on)
        .map(|(r, _)| *r)
        .collect();
    let h = DMatrix::from_fn(rows.len(), n, |i, j| full_h[(rows[i], j)]);
    let nu = DVector::from_iterator(rows.len(), rows.iter().map(|&r| nu_full[r]));
    let rm = DMatrix::from_fn(rows.len(), rows.len(), |i, j| if i == j { var_full[rows[i]] } else { 0.0 });
    let s = &h * cov * h.transpose() + rm;
    let k_gain = cov * h.transpose() * s.try_inverse().expect("invertible innovation");
    let mut mean = mean + &k_gain * nu;
    mean[2] = wrap(mean[2]);
    let cov = (DMatrix::identity(n, n) - &k_gain * &h) * cov;
    let cov = (&cov + cov.transpose()) * 0.5;
    (mean, cov)
}

/// Appends a landmark from `z` using the full-state linearisation
/// `P⁺ = J P Jᵀ + M R Mᵀ`.
pub fn dense_augment(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    z: &Observation,
    sensor: &SensorNoiseConfig,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let phi = z.bearing - sensor.sensor_offset + mean[2];
    let (s, c) = phi.sin_cos();
    let mut j = DMatrix::zeros(n + 2, n);
    for i in 0..n {
        j[(i, i)] = 1.0;
    }
    j[(n, 0)] = 1.0;
    j[(n, 2)] = -z.range * s;
    j[(n + 1, 1)] = 1.0;
    j[(n + 1, 2)] = z.range * c;
    let mut m = DMatrix::zeros(n + 2, 2);
    m[(n, 0)] = c;
    m[(n, 1)] = -z.range * s;
    m[(n + 1, 0)] = s;
    m[(n + 1, 1)] = z.range * c;
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![
        sensor.sigma_range.powi(2),
        sensor.sigma_bearing.powi(2),
    ]));
    let cov = &j * cov * j.transpose() + &m * r * m.transpose();
    let mut out = DVector::zeros(n + 2);
    out.rows_mut(0, n).copy_from(mean);
    out[n] = mean[0] + z.range * c;
    out[n + 1] = mean[1] + z.range * s;
    (out, cov)
}

/// Mutual nearest neighbours by exhaustive search; ties go to the lower
/// index on both sides.
pub fn brute_mutual_nn(new: &[(f64, f64)], prior: &[(f64, f64)], d_max: f64) -> Vec<(usize, usize)> {
    let d = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let argmin = |from: (f64, f64), to: &[(f64, f64)]| -> Option<usize> {
        let mut best: Option<usize> = None;
        for k in 0..to.len() {
            if best.is_none() || d(from, to[k]) < d(from, to[best.unwrap()]) {
                best = Some(k);
            }
        }
        best
    };
    let mut out = Vec::new();
    for (i, &a) in new.iter().enumerate() {
        if let Some(j) = argmin(a, prior) {
            if argmin(prior[j], new) == Some(i) && d(a, prior[j]) <= d_max {
                out.push((i, j));
            }
        }
    }
    out
}

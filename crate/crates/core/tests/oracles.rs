mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use slam2d::filter::{LandmarkId, ObservationMode, SlamState};
use slam2d::models::*;
use slam2d::perception::associate;

fn pose_of(x: &[f64]) -> Pose {
    Pose::new(x[0], x[1], x[2])
}

fn to_dense<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

#[test]
fn motion_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let p = random_pose(&mut rng);
        let u = ControlInput::new(rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0));
        let dt = rng.random_range(0.01..1.0);
        let (fx, fu) = motion_jacobians(&p, &u, dt).unwrap();
        let step = |x: &[f64], u: &ControlInput| {
            let q = motion_step(&pose_of(x), u, dt).unwrap();
            vec![q.x, q.y, q.theta]
        };
        let x0 = [p.x, p.y, p.theta];
        let fd_x = fd_jacobian(|x| step(x, &u), &x0, &[2]);
        let fd_u = fd_jacobian(|c| step(&x0, &ControlInput::new(c[0], c[1])), &[u.v, u.omega], &[2]);
        assert!(relative_error(&to_dense(&fx), &fd_x) < 1e-6);
        assert!(relative_error(&to_dense(&fu), &fd_u) < 1e-6);
    }
}

#[test]
fn observation_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let p = random_pose(&mut rng);
        let l = random_landmark_near(&mut rng, &p);
        let cfg = random_sensor(&mut rng);
        let (hx, hl) = observation_jacobians(&p, &l).unwrap();
        let z = |x: &[f64], l: &LandmarkPosition| {
            let o = observe(&pose_of(x), l, &cfg).unwrap();
            vec![o.range, o.bearing]
        };
        let x0 = [p.x, p.y, p.theta];
        let fd_x = fd_jacobian(|x| z(x, &l), &x0, &[1]);
        let fd_l = fd_jacobian(|m| z(&x0, &LandmarkPosition::new(m[0], m[1])), &[l.x, l.y], &[1]);
        assert!(relative_error(&to_dense(&hx), &fd_x) < 1e-6);
        assert!(relative_error(&to_dense(&hl), &fd_l) < 1e-6);
    }
}

#[test]
fn inverse_observation_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = random_pose(&mut rng);
        let z = random_observation(&mut rng);
        let cfg = random_sensor(&mut rng);
        let (gx, gz) = inverse_observation_jacobians(&p, &z, &cfg).unwrap();
        let place = |x: &[f64], z: &Observation| {
            let l = inverse_observe(&pose_of(x), z, &cfg).unwrap();
            vec![l.x, l.y]
        };
        let x0 = [p.x, p.y, p.theta];
        let fd_x = fd_jacobian(|x| place(x, &z), &x0, &[]);
        let fd_z = fd_jacobian(|m| place(&x0, &Observation::new(m[0], m[1])), &[z.range, z.bearing], &[]);
        assert!(relative_error(&to_dense(&gx), &fd_x) < 1e-6);
        assert!(relative_error(&to_dense(&gz), &fd_z) < 1e-6);
    }
}

#[test]
fn predict_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..40 {
        let (mean, cov) = random_state(&mut rng, k % 8);
        let u = ControlInput::new(rng.random_range(-3.0..3.0), rng.random_range(-0.5..0.5));
        let dt = rng.random_range(0.01..0.5);
        let noise = MotionNoiseConfig::new(rng.random_range(0.0..1.0), rng.random_range(0.0..0.1)).unwrap();
        let (m_ref, p_ref) = dense_predict(&mean, &cov, &u, dt, &noise);
        let mut s = SlamState::from_parts(mean, cov).unwrap();
        s.predict(&u, dt, &noise).unwrap();
        assert!(scaled_max_diff(s.covariance(), &p_ref) < 1e-12);
        let d = s.mean() - &m_ref;
        assert!(d.rows(0, 2).amax() < 1e-9 && wrap(d[2]).abs() < 1e-12);
        assert!(d.rows(3, d.len() - 3).amax() == 0.0);
    }
}

#[test]
fn update_matches_dense_kalman_step_in_every_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let modes = [
        (ObservationMode::RangeBearing, true, true),
        (ObservationMode::RangeOnly, true, false),
        (ObservationMode::BearingOnly, false, true),
    ];
    for case in 0..60 {
        let k = 1 + case % 6;
        let (mean, cov) = random_state(&mut rng, k);
        let cfg = random_sensor(&mut rng);
        let target = rng.random_range(0..k);
        let (mode, r, b) = modes[case % 3];
        let z = Observation::new(rng.random_range(0.5..60.0), rng.random_range(-3.0..3.0));
        let (m_ref, p_ref) = dense_update(&mean, &cov, target, &z, &cfg, r, b);
        let mut s = SlamState::from_parts(mean, cov).unwrap();
        s.update_with_mode(LandmarkId(target as u64), &z, mode, &cfg).unwrap();
        assert!(scaled_max_diff(s.covariance(), &p_ref) < 1e-9, "case {case}");
        let mut d = s.mean() - &m_ref;
        d[2] = wrap(d[2]);
        assert!(d.amax() < 1e-8, "case {case}");
    }
}

#[test]
fn augmentation_matches_dense_jacobian_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..40 {
        let (mean, cov) = random_state(&mut rng, k % 5);
        let cfg = random_sensor(&mut rng);
        let z = random_observation(&mut rng);
        let (m_ref, p_ref) = dense_augment(&mean, &cov, &z, &cfg);
        let mut s = SlamState::from_parts(mean, cov).unwrap();
        s.init_landmark(&z, &cfg).unwrap();
        assert!(scaled_max_diff(s.covariance(), &p_ref) < 1e-12);
        assert!((s.mean() - &m_ref).amax() < 1e-9);
    }
}

#[test]
fn augmentation_covariance_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = Pose::new(1.0, -2.0, 0.4);
    let pose_cov = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.03, 0.0, 0.0, 0.0, 1e-4]);
    let cfg = SensorNoiseConfig::new(0.1, 0.01, 0.0).unwrap();
    let z = Observation::new(10.0, 0.3);
    let mean = DVector::from_vec(vec![p.x, p.y, p.theta]);
    let (_, analytic) = dense_augment(&mean, &pose_cov, &z, &cfg);
    let chol = pose_cov.clone().cholesky().unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let n = 40_000;
    let samples: Vec<DVector<f64>> = (0..n)
        .map(|_| {
            let e = DVector::from_fn(3, |_, _| std.sample(&mut rng));
            let x = &mean + chol.l() * e;
            let zs = Observation::new(
                z.range + cfg.sigma_range * std.sample(&mut rng),
                z.bearing + cfg.sigma_bearing * std.sample(&mut rng),
            );
            let l = inverse_observe(&pose_of(x.as_slice()), &zs, &cfg).unwrap();
            DVector::from_vec(vec![x[0], x[1], x[2], l.x, l.y])
        })
        .collect();
    let mu = samples.iter().fold(DVector::zeros(5), |a, s| a + s) / n as f64;
    let emp = samples.iter().fold(DMatrix::zeros(5, 5), |a, s| a + (s - &mu) * (s - &mu).transpose()) / (n - 1) as f64;
    assert!(relative_error(&emp, &analytic) < 0.03);
}

#[test]
fn association_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let grid = case % 3 == 0;
        let mut pts = |n: usize| -> Vec<(f64, f64)> {
            (0..n)
                .map(|_| {
                    if grid {
                        (rng.random_range(0..5) as f64 * 0.1, rng.random_range(0..5) as f64 * 0.1)
                    } else {
                        (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0))
                    }
                })
                .collect()
        };
        let (new, prior) = (pts(case % 17), pts(case % 13));
        let lp = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| LandmarkPosition::new(x, y)).collect::<Vec<_>>();
        let got = associate(&lp(&new), &lp(&prior), 0.3);
        assert_eq!(got.pairs, brute_mutual_nn(&new, &prior, 0.3), "case {case}");
        let matched: Vec<usize> = got.pairs.iter().map(|p| p.0).collect();
        let expected_unmatched: Vec<usize> = (0..new.len()).filter(|i| !matched.contains(i)).collect();
        assert_eq!(got.unmatched_new, expected_unmatched);
    }
}

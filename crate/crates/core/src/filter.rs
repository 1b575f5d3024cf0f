//! Joint robot + landmark EKF.
//!
//! The state vector is `[x, y, θ, l1x, l1y, l2x, l2y, ...]` with a dense
//! covariance. Landmarks are corrected one at a time, so the innovation
//! covariance is at most 2×2 and is inverted in closed form.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{
    self, inverse_observation_jacobians, inverse_observe, motion_jacobians, motion_step,
    observation_jacobians, observe, process_noise, wrap, ControlInput, LandmarkPosition,
    ModelError, MotionNoiseConfig, Observation, Pose, SensorNoiseConfig,
};

/// Innovation covariances with a smaller determinant are treated as singular.
pub const SINGULAR_DETERMINANT: f64 = 1e-15;
/// Innovation covariances with a larger condition number are treated as singular.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

const ROBOT_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown landmark {0}")]
    UnknownLandmark(LandmarkId),
    #[error("landmark {0} is not in the known map")]
    NotInMap(LandmarkId),
    #[error("innovation covariance is numerically singular (det {det:e}, cond {cond:e})")]
    SingularInnovation { det: f64, cond: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Identifier handed out when a landmark enters the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LandmarkId(pub u64);

impl fmt::Display for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which measurement components an update consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    RangeOnly,
    BearingOnly,
    #[default]
    RangeBearing,
}

impl ObservationMode {
    fn rows(self) -> &'static [usize] {
        match self {
            ObservationMode::RangeOnly => &[0],
            ObservationMode::BearingOnly => &[1],
            ObservationMode::RangeBearing => &[0, 1],
        }
    }

    pub fn uses_range(self) -> bool {
        self != ObservationMode::BearingOnly
    }

    pub fn uses_bearing(self) -> bool {
        self != ObservationMode::RangeOnly
    }
}

/// Measurement residual; components not used by the update are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Innovation {
    pub range: Option<f64>,
    pub bearing: Option<f64>,
}

/// Landmarks with exactly known coordinates, for map-based localisation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnownMap {
    entries: Vec<(LandmarkId, LandmarkPosition)>,
}

impl KnownMap {
    pub fn new(entries: Vec<(LandmarkId, LandmarkPosition)>) -> Result<Self, FilterError> {
        let mut ids: Vec<_> = entries.iter().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(FilterError::Dimension(format!("duplicate map id {}", w[0])));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: LandmarkId) -> Option<LandmarkPosition> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, p)| *p)
    }

    pub fn entries(&self) -> &[(LandmarkId, LandmarkPosition)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Linear prediction `x ← F x`, `P ← F P Fᵀ + Q`.
pub fn linear_predict(
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<(), FilterError> {
    let n = mean.len();
    if f.shape() != (n, n) || q.shape() != (n, n) || cov.shape() != (n, n) {
        return Err(FilterError::Dimension("linear_predict".into()));
    }
    *mean = f * &*mean;
    *cov = f * &*cov * f.transpose() + q;
    symmetrize(cov);
    Ok(())
}

/// Linear measurement update with `ν = z − H x`; returns the innovation.
pub fn linear_update(
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<DVector<f64>, FilterError> {
    let n = mean.len();
    let m = z.len();
    if h.shape() != (m, n) || r.shape() != (m, m) || cov.shape() != (n, n) {
        return Err(FilterError::Dimension("linear_update".into()));
    }
    let innovation = z - h * &*mean;
    let pht = &*cov * h.transpose();
    let s = h * &pht + r;
    correct(mean, cov, &pht, &s, &innovation)?;
    Ok(innovation)
}

/// Shared gain step given `P Hᵀ` and `S`:
/// `x ← x + K ν`, `P ← P − K S Kᵀ` with `K = P Hᵀ S⁻¹`.
fn correct(
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    pht: &DMatrix<f64>,
    s: &DMatrix<f64>,
    innovation: &DVector<f64>,
) -> Result<(), FilterError> {
    let s_inv = invert_innovation(s)?;
    let gain = pht * s_inv;
    *mean += &gain * innovation;
    *cov -= &gain * s * gain.transpose();
    symmetrize(cov);
    Ok(())
}

fn invert_innovation(s: &DMatrix<f64>) -> Result<DMatrix<f64>, FilterError> {
    match s.nrows() {
        1 => {
            let v = s[(0, 0)];
            if !(v.abs() > SINGULAR_DETERMINANT) {
                return Err(FilterError::SingularInnovation { det: v, cond: f64::INFINITY });
            }
            Ok(DMatrix::from_element(1, 1, 1.0 / v))
        }
        2 => {
            let (a, b, c, d) = (s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]);
            let det = a * d - b * c;
            let cond = condition_2x2(a, b, c, d);
            if !(det.abs() > SINGULAR_DETERMINANT) || !(cond <= MAX_CONDITION_NUMBER) {
                return Err(FilterError::SingularInnovation { det, cond });
            }
            Ok(DMatrix::from_row_slice(2, 2, &[d / det, -b / det, -c / det, a / det]))
        }
        _ => {
            let svd = s.clone().svd(false, false);
            let max = svd.singular_values.max();
            let min = svd.singular_values.min();
            let cond = if min > 0.0 { max / min } else { f64::INFINITY };
            let det = s.determinant();
            if !(cond <= MAX_CONDITION_NUMBER) {
                return Err(FilterError::SingularInnovation { det, cond });
            }
            s.clone()
                .try_inverse()
                .ok_or(FilterError::SingularInnovation { det, cond })
        }
    }
}

/// 2-norm condition number of a 2×2 matrix, `σmax / σmin = σmax² / |det|`.
fn condition_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let frob2 = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
    0.5 * (frob2 + disc) / det
}

fn symmetrize(cov: &mut DMatrix<f64>) {
    let n = cov.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
}

/// Robot pose and landmark map with joint covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SlamState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    registry: Vec<LandmarkId>,
    next_id: u64,
}

impl SlamState {
    /// Starts from an exactly known pose with an empty map.
    pub fn new(p0: Pose) -> Self {
        Self {
            mean: DVector::from_column_slice(&[p0.x, p0.y, p0.theta]),
            cov: DMatrix::zeros(ROBOT_DIM, ROBOT_DIM),
            registry: Vec::new(),
            next_id: 0,
        }
    }

    /// Builds a state from raw parts; landmarks get ids `0..N`.
    pub fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, FilterError> {
        let n = mean.len();
        if n < ROBOT_DIM || (n - ROBOT_DIM) % 2 != 0 || cov.shape() != (n, n) {
            return Err(FilterError::Dimension(format!(
                "mean of length {n} with covariance {:?}",
                cov.shape()
            )));
        }
        let count = (n - ROBOT_DIM) / 2;
        let mut mean = mean;
        mean[2] = models::wrap_angle(mean[2])?;
        Ok(Self {
            mean,
            cov,
            registry: (0..count as u64).map(LandmarkId).collect(),
            next_id: count as u64,
        })
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn robot_covariance(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn landmark_count(&self) -> usize {
        self.registry.len()
    }

    pub fn landmark_ids(&self) -> &[LandmarkId] {
        &self.registry
    }

    fn slot(&self, id: LandmarkId) -> Result<usize, FilterError> {
        self.registry
            .iter()
            .position(|&r| r == id)
            .map(|k| ROBOT_DIM + 2 * k)
            .ok_or(FilterError::UnknownLandmark(id))
    }

    pub fn landmark(&self, id: LandmarkId) -> Option<LandmarkPosition> {
        let s = self.slot(id).ok()?;
        Some(LandmarkPosition::new(self.mean[s], self.mean[s + 1]))
    }

    pub fn landmark_covariance(&self, id: LandmarkId) -> Option<Matrix2<f64>> {
        let s = self.slot(id).ok()?;
        Some(self.cov.fixed_view::<2, 2>(s, s).into_owned())
    }

    /// All landmarks in registry order.
    pub fn landmarks(&self) -> Vec<(LandmarkId, LandmarkPosition)> {
        self.registry
            .iter()
            .enumerate()
            .map(|(k, &id)| {
                let s = ROBOT_DIM + 2 * k;
                (id, LandmarkPosition::new(self.mean[s], self.mean[s + 1]))
            })
            .collect()
    }

    /// Propagates the robot through one control step. Landmarks are static,
    /// so only the robot block and the robot/map cross terms change.
    pub fn predict(
        &mut self,
        u: &ControlInput,
        dt: f64,
        cfg: &MotionNoiseConfig,
    ) -> Result<(), FilterError> {
        let pose = self.pose();
        let (fx, fu) = motion_jacobians(&pose, u, dt)?;
        let next = motion_step(&pose, u, dt)?;
        let q = process_noise(&fu, cfg);

        let n = self.mean.len();
        let prr = self.robot_covariance();
        let new_rr = fx * prr * fx.transpose() + q;
        self.cov.fixed_view_mut::<3, 3>(0, 0).copy_from(&new_rr);
        if n > ROBOT_DIM {
            let cross = fx * self.cov.view((0, ROBOT_DIM), (ROBOT_DIM, n - ROBOT_DIM));
            self.cov
                .view_mut((0, ROBOT_DIM), (ROBOT_DIM, n - ROBOT_DIM))
                .copy_from(&cross);
            self.cov
                .view_mut((ROBOT_DIM, 0), (n - ROBOT_DIM, ROBOT_DIM))
                .copy_from(&cross.transpose());
        }
        symmetrize(&mut self.cov);
        self.mean[0] = next.x;
        self.mean[1] = next.y;
        self.mean[2] = next.theta;
        Ok(())
    }

    /// Range/bearing update against a landmark held in the state.
    pub fn update(
        &mut self,
        id: LandmarkId,
        z: &Observation,
        cfg: &SensorNoiseConfig,
    ) -> Result<Innovation, FilterError> {
        self.update_with_mode(id, z, ObservationMode::RangeBearing, cfg)
    }

    /// Update using only the components selected by `mode`.
    pub fn update_with_mode(
        &mut self,
        id: LandmarkId,
        z: &Observation,
        mode: ObservationMode,
        cfg: &SensorNoiseConfig,
    ) -> Result<Innovation, FilterError> {
        let slot = self.slot(id)?;
        let landmark = LandmarkPosition::new(self.mean[slot], self.mean[slot + 1]);
        self.correct_against(landmark, Some(slot), z, mode, cfg)
    }

    /// Localisation update against a landmark whose position is exact.
    pub fn update_known_map(
        &mut self,
        map: &KnownMap,
        id: LandmarkId,
        z: &Observation,
        cfg: &SensorNoiseConfig,
    ) -> Result<Innovation, FilterError> {
        self.update_known_map_with_mode(map, id, z, ObservationMode::RangeBearing, cfg)
    }

    pub fn update_known_map_with_mode(
        &mut self,
        map: &KnownMap,
        id: LandmarkId,
        z: &Observation,
        mode: ObservationMode,
        cfg: &SensorNoiseConfig,
    ) -> Result<Innovation, FilterError> {
        let landmark = map.get(id).ok_or(FilterError::NotInMap(id))?;
        self.correct_against(landmark, None, z, mode, cfg)
    }

    fn correct_against(
        &mut self,
        landmark: LandmarkPosition,
        slot: Option<usize>,
        z: &Observation,
        mode: ObservationMode,
        cfg: &SensorNoiseConfig,
    ) -> Result<Innovation, FilterError> {
        let pose = self.pose();
        let predicted = observe(&pose, &landmark, cfg)?;
        let (hx, hl) = observation_jacobians(&pose, &landmark)?;
        let full_nu = [z.range - predicted.range, wrap(z.bearing - predicted.bearing)];
        let full_r = cfg.measurement_covariance();

        let rows = mode.rows();
        let m = rows.len();
        let n = self.mean.len();

        // P Hᵀ from the two non-zero column blocks of H.
        let mut pht = DMatrix::zeros(n, m);
        for (k, &row) in rows.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for c in 0..ROBOT_DIM {
                    acc += self.cov[(i, c)] * hx[(row, c)];
                }
                if let Some(s) = slot {
                    acc += self.cov[(i, s)] * hl[(row, 0)] + self.cov[(i, s + 1)] * hl[(row, 1)];
                }
                pht[(i, k)] = acc;
            }
        }
        let mut s = DMatrix::zeros(m, m);
        for (a, &ra) in rows.iter().enumerate() {
            for (b, &rb) in rows.iter().enumerate() {
                let mut acc = full_r[(ra, rb)];
                for c in 0..ROBOT_DIM {
                    acc += hx[(ra, c)] * pht[(c, b)];
                }
                if let Some(sl) = slot {
                    acc += hl[(ra, 0)] * pht[(sl, b)] + hl[(ra, 1)] * pht[(sl + 1, b)];
                }
                s[(a, b)] = acc;
            }
        }
        let nu = DVector::from_iterator(m, rows.iter().map(|&r| full_nu[r]));

        correct(&mut self.mean, &mut self.cov, &pht, &s, &nu)?;
        self.mean[2] = wrap(self.mean[2]);

        Ok(Innovation {
            range: mode.uses_range().then_some(full_nu[0]),
            bearing: mode.uses_bearing().then_some(full_nu[1]),
        })
    }

    /// Adds a landmark from a range/bearing measurement and augments the
    /// covariance with the full-state linearisation of the inverse model.
    pub fn init_landmark(
        &mut self,
        z: &Observation,
        cfg: &SensorNoiseConfig,
    ) -> Result<LandmarkId, FilterError> {
        let pose = self.pose();
        let position = inverse_observe(&pose, z, cfg)?;
        let (gx, gz): (Matrix2x3<f64>, Matrix2<f64>) = inverse_observation_jacobians(&pose, z, cfg)?;

        let n = self.mean.len();
        // Gx · P[robot, :] gives the new landmark's covariance with everything.
        let robot_rows = self.cov.rows(0, ROBOT_DIM);
        let cross = gx * robot_rows; // 2 × n
        let pll = gx * self.robot_covariance() * gx.transpose()
            + gz * cfg.measurement_covariance() * gz.transpose();

        let mut cov = DMatrix::zeros(n + 2, n + 2);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        cov.view_mut((n, 0), (2, n)).copy_from(&cross);
        cov.view_mut((0, n), (n, 2)).copy_from(&cross.transpose());
        cov.view_mut((n, n), (2, 2)).copy_from(&pll);
        symmetrize(&mut cov);

        let mean = self.mean.clone().insert_rows(n, 2, 0.0);
        self.mean = mean;
        self.mean[n] = position.x;
        self.mean[n + 1] = position.y;
        self.cov = cov;

        let id = LandmarkId(self.next_id);
        self.next_id += 1;
        self.registry.push(id);
        Ok(id)
    }

    /// Drops a landmark's rows and columns. Ids are never reused.
    pub fn remove_landmark(&mut self, id: LandmarkId) -> Result<(), FilterError> {
        let slot = self.slot(id)?;
        let k = (slot - ROBOT_DIM) / 2;
        self.mean = self.mean.clone().remove_rows(slot, 2);
        self.cov = self.cov.clone().remove_rows(slot, 2).remove_columns(slot, 2);
        self.registry.remove(k);
        Ok(())
    }

    /// Largest asymmetry `max |P − Pᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.cov - self.cov.transpose()).abs().max()
    }

    /// Smallest eigenvalue of the (symmetrised) covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

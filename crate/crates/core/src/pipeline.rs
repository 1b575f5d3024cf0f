//! Log replay through dead reckoning, EKF localisation or EKF-SLAM.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use nalgebra::Matrix2;
use thiserror::Error;

use crate::evaluation::{RunLog, RunStep};
use crate::filter::{FilterError, KnownMap, LandmarkId, ObservationMode, SlamState};
use crate::ingest::{
    debias, estimate_bias, BiasEstimate, IngestError, LandmarkSighting, ParseError, SensorLog,
    SensorPayload, SensorRecord, ZeroOrderHold,
};
use crate::models::{LandmarkPosition, ModelError, MotionNoiseConfig, Observation, SensorNoiseConfig};
use crate::perception::{
    associate, extract_landmarks, isolated_indices, segment_scan, ExtractedLandmark,
    ExtractionParams, LaserScan, QualityParams, QualityTracker, DEFAULT_GAP_THRESHOLD,
    DEFAULT_MAX_DISTANCE, DEFAULT_MIN_SEPARATION, SCAN_SENSOR_OFFSET,
};
use crate::simulator::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    DeadReckoning,
    EkfLocalisation,
    #[default]
    EkfSlam,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::DeadReckoning,
        Estimator::EkfLocalisation,
        Estimator::EkfSlam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::DeadReckoning => "dead_reckoning",
            Estimator::EkfLocalisation => "ekf_localisation",
            Estimator::EkfSlam => "ekf_slam",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown estimator `{s}`"))
    }
}

/// Scan-processing switches and thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    pub gap: f64,
    pub extraction: ExtractionParams,
    pub prefilter: bool,
    pub min_separation: f64,
    pub quality: bool,
    pub quality_params: QualityParams,
    /// Association gate, shared by map matching and the quality tracker.
    pub d_max: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            gap: DEFAULT_GAP_THRESHOLD,
            extraction: ExtractionParams::default(),
            prefilter: true,
            min_separation: DEFAULT_MIN_SEPARATION,
            quality: true,
            quality_params: QualityParams::default(),
            d_max: DEFAULT_MAX_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub estimator: Estimator,
    pub observation_mode: ObservationMode,
    pub motion_noise: MotionNoiseConfig,
    /// Noise and mounting of tagged `O` sightings.
    pub landmark_noise: SensorNoiseConfig,
    /// Noise of landmarks extracted from scans; the offset is always the
    /// scanner's own.
    pub scan_noise: SensorNoiseConfig,
    pub perception: PerceptionConfig,
    pub bias_window: f64,
    /// Estimate and remove control bias when the log declares a stationary
    /// prefix.
    pub debias: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::default(),
            observation_mode: ObservationMode::RangeBearing,
            motion_noise: MotionNoiseConfig::default(),
            landmark_noise: SensorNoiseConfig::default(),
            scan_noise: SensorNoiseConfig {
                sigma_range: 0.05,
                sigma_bearing: 0.5f64.to_radians(),
                sensor_offset: SCAN_SENSOR_OFFSET,
            },
            perception: PerceptionConfig::default(),
            bias_window: 5.0,
            debias: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("ekf_localisation needs a landmark map")]
    MissingMap,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One landmark of a saved or known map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    pub id: u64,
    pub position: LandmarkPosition,
    pub covariance: Option<Matrix2<f64>>,
}

/// Writes `M <id> <x> <y> <cxx> <cxy> <cyx> <cyy>` lines.
pub fn write_map<W: Write>(entries: &[MapEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        write!(out, "M {} {} {}", e.id, e.position.x, e.position.y)?;
        if let Some(c) = e.covariance {
            write!(out, " {} {} {} {}", c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads `M` lines, with or without covariance. `T` lines and comments are
/// skipped, so a truth file doubles as a map.
pub fn read_map<R: BufRead>(reader: R) -> Result<Vec<MapEntry>, ParseError> {
    let mut out: Vec<MapEntry> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let bad = |message: String| ParseError::Malformed {
            line: line_no,
            message,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first() {
            None | Some(&"T") => continue,
            Some(t) if t.starts_with('#') => continue,
            Some(&"M") if toks.len() == 4 || toks.len() == 8 => {}
            _ => return Err(bad(format!("unrecognised map line `{line}`"))),
        }
        let id: u64 = toks[1]
            .parse()
            .map_err(|_| bad(format!("invalid landmark id `{}`", toks[1])))?;
        let nums = toks[2..]
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("invalid number".into()))?;
        if out.iter().any(|e| e.id == id) {
            return Err(bad(format!("duplicate landmark id {id}")));
        }
        out.push(MapEntry {
            id,
            position: LandmarkPosition::new(nums[0], nums[1]),
            covariance: (nums.len() == 6).then(|| Matrix2::new(nums[2], nums[3], nums[4], nums[5])),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub run: RunLog,
    /// Landmarks in the final SLAM state; empty for other estimators.
    pub final_map: Vec<MapEntry>,
    pub bias: Option<BiasEstimate>,
    /// Updates dropped for a singular innovation or degenerate geometry.
    pub skipped_updates: usize,
    /// Sightings of ids absent from the known map.
    pub unmapped_sightings: usize,
}

/// Which components to use given what the sensor reported.
fn effective_mode(mode: ObservationMode, s: &LandmarkSighting) -> Option<ObservationMode> {
    match (mode.uses_range() && s.range.is_some(), mode.uses_bearing() && s.bearing.is_some()) {
        (true, true) => Some(ObservationMode::RangeBearing),
        (true, false) => Some(ObservationMode::RangeOnly),
        (false, true) => Some(ObservationMode::BearingOnly),
        (false, false) => None,
    }
}

struct Replay<'a> {
    cfg: &'a PipelineConfig,
    state: SlamState,
    known: Option<KnownMap>,
    tracker: Option<QualityTracker>,
    /// Log ids of state landmarks, and the reverse.
    external: HashMap<LandmarkId, u64>,
    internal: HashMap<u64, LandmarkId>,
    next_external: u64,
    associations: u64,
    skipped: usize,
    unmapped: usize,
}

impl Replay<'_> {
    /// Applies a filter result, absorbing the recoverable failures.
    fn absorb<T>(&mut self, r: Result<T, FilterError>) -> Result<Option<T>, PipelineError> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(FilterError::SingularInnovation { .. })
            | Err(FilterError::Model(ModelError::DegenerateGeometry)) => {
                self.skipped += 1;
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn register(&mut self, z: &Observation, external: Option<u64>, noise: &SensorNoiseConfig) -> Result<(), PipelineError> {
        let r = self.state.init_landmark(z, noise);
        if let Some(id) = self.absorb(r)? {
            let ext = external.unwrap_or_else(|| {
                while self.internal.contains_key(&self.next_external) {
                    self.next_external += 1;
                }
                self.next_external
            });
            self.external.insert(id, ext);
            self.internal.insert(ext, id);
        }
        Ok(())
    }

    fn sighting(&mut self, s: &LandmarkSighting) -> Result<(), PipelineError> {
        let cfg = self.cfg;
        let Some(mode) = effective_mode(cfg.observation_mode, s) else {
            return Ok(());
        };
        let z = Observation::new(s.range.unwrap_or(0.0), s.bearing.unwrap_or(0.0));
        let noise = cfg.landmark_noise;
        match cfg.estimator {
            Estimator::DeadReckoning => {}
            Estimator::EkfLocalisation => {
                let map = self.known.as_ref().expect("checked at start");
                let id = LandmarkId(s.id);
                if map.get(id).is_none() {
                    self.unmapped += 1;
                    return Ok(());
                }
                let r = self.state.update_known_map_with_mode(map, id, &z, mode, &noise);
                self.absorb(r)?;
            }
            Estimator::EkfSlam => match self.internal.get(&s.id) {
                Some(&id) => {
                    let r = self.state.update_with_mode(id, &z, mode, &noise);
                    self.absorb(r)?;
                }
                None if mode == ObservationMode::RangeBearing => {
                    self.register(&z, Some(s.id), &noise)?
                }
                None => {}
            },
        }
        Ok(())
    }

    fn scan(&mut self, scan: &LaserScan, t: f64) -> Result<(), PipelineError> {
        let cfg = self.cfg;
        let p = &cfg.perception;
        let noise = cfg.scan_noise.with_offset(SCAN_SENSOR_OFFSET);
        let segments = segment_scan(scan, p.gap);
        let mut dets: Vec<ExtractedLandmark> =
            extract_landmarks(&segments, p.extraction, &self.state.pose(), &noise)?;
        if p.prefilter {
            let positions: Vec<_> = dets.iter().map(|d| d.position).collect();
            let keep = isolated_indices(&positions, p.min_separation);
            dets = keep.into_iter().map(|i| dets[i]).collect();
        }
        let positions: Vec<LandmarkPosition> = dets.iter().map(|d| d.position).collect();
        let mode = cfg.observation_mode;
        match cfg.estimator {
            Estimator::DeadReckoning => {}
            Estimator::EkfLocalisation => {
                let map = self.known.clone().expect("checked at start");
                let (ids, prior): (Vec<_>, Vec<_>) = map.entries().iter().copied().unzip();
                let result = associate(&positions, &prior, p.d_max);
                self.associations += (positions.len() * prior.len()) as u64;
                for (i, j) in result.pairs {
                    let r = self.state.update_known_map_with_mode(&map, ids[j], &dets[i].observation, mode, &noise);
                    self.absorb(r)?;
                }
            }
            Estimator::EkfSlam => {
                let (ids, prior): (Vec<_>, Vec<_>) = self.state.landmarks().into_iter().unzip();
                let result = associate(&positions, &prior, p.d_max);
                self.associations += (positions.len() * prior.len()) as u64;
                for &(i, j) in &result.pairs {
                    let r = self.state.update_with_mode(ids[j], &dets[i].observation, mode, &noise);
                    self.absorb(r)?;
                }
                let fresh = result.unmatched_new;
                let promoted: Vec<usize> = match &mut self.tracker {
                    Some(tracker) => {
                        let pos: Vec<_> = fresh.iter().map(|&i| positions[i]).collect();
                        let upd = tracker.update(&pos, t);
                        self.associations += upd.comparisons;
                        upd.promoted.into_iter().map(|k| fresh[k]).collect()
                    }
                    None => fresh,
                };
                for i in promoted {
                    self.register(&dets[i].observation, None, &noise)?;
                }
            }
        }
        Ok(())
    }

    fn snapshot(&self, t: f64, truth: Option<&GroundTruth>) -> RunStep {
        let p = self.state.robot_covariance();
        let landmark_traces = self
            .state
            .landmark_ids()
            .iter()
            .map(|id| {
                let c = self.state.landmark_covariance(*id).expect("id from state");
                (self.external[id], c.trace())
            })
            .collect();
        RunStep {
            timestamp: t,
            pose: self.state.pose(),
            variance: [p[(0, 0)], p[(1, 1)], p[(2, 2)]],
            landmark_count: self.state.landmark_count(),
            associations: self.associations,
            landmark_traces,
            truth: truth.and_then(|g| g.pose_at(t)),
        }
    }

    fn final_map(&self) -> Vec<MapEntry> {
        self.state
            .landmarks()
            .into_iter()
            .map(|(id, position)| MapEntry {
                id: self.external[&id],
                position,
                covariance: self.state.landmark_covariance(id),
            })
            .collect()
    }
}

/// Removes control bias if the log declares a stationary prefix.
fn prepare_records(log: &SensorLog, cfg: &PipelineConfig) -> Result<(Vec<SensorRecord>, Option<BiasEstimate>), IngestError> {
    let t0 = log.records.first().map(|r| r.timestamp);
    match t0 {
        Some(t0) if cfg.debias && log.header.stationary_until > t0 => {
            let window = cfg.bias_window.min(log.header.stationary_until - t0);
            let bias = estimate_bias(&log.records, window)?;
            Ok((debias(&log.records, &bias), Some(bias)))
        }
        _ => Ok((log.records.clone(), None)),
    }
}

/// Replays a log. The state is predicted to every new record timestamp with
/// the latest speed and yaw rate, and one run step is emitted per timestamp.
pub fn run_pipeline(
    log: &SensorLog,
    cfg: &PipelineConfig,
    map: Option<&[MapEntry]>,
    truth: Option<&GroundTruth>,
) -> Result<PipelineOutput, PipelineError> {
    let known = match (cfg.estimator, map) {
        (Estimator::EkfLocalisation, None) => return Err(PipelineError::MissingMap),
        (Estimator::EkfLocalisation, Some(m)) => Some(KnownMap::new(
            m.iter().map(|e| (LandmarkId(e.id), e.position)).collect(),
        )?),
        _ => None,
    };
    let (records, bias) = prepare_records(log, cfg)?;
    let tracker = (cfg.estimator == Estimator::EkfSlam && cfg.perception.quality).then(|| {
        QualityTracker::new(QualityParams {
            max_distance: cfg.perception.d_max,
            ..cfg.perception.quality_params
        })
    });
    let mut replay = Replay {
        cfg,
        state: SlamState::new(log.header.initial_pose),
        known,
        tracker,
        external: HashMap::new(),
        internal: HashMap::new(),
        next_external: 0,
        associations: 0,
        skipped: 0,
        unmapped: 0,
    };
    let mut hold = ZeroOrderHold::new();
    let mut steps = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let t = records[i].timestamp;
        if let Some((u, dt)) = hold.advance(t) {
            replay.state.predict(&u, dt, &cfg.motion_noise)?;
        }
        while i < records.len() && records[i].timestamp == t {
            match &records[i].payload {
                p @ (SensorPayload::Speed(_) | SensorPayload::Gyro(_)) => hold.latch(p),
                SensorPayload::Scan(scan) => replay.scan(scan, t)?,
                SensorPayload::Landmark(s) => replay.sighting(s)?,
            }
            i += 1;
        }
        steps.push(replay.snapshot(t, truth));
    }
    Ok(PipelineOutput {
        run: RunLog { steps },
        final_map: replay.final_map(),
        bias,
        skipped_updates: replay.skipped,
        unmapped_sightings: replay.unmapped,
    })
}

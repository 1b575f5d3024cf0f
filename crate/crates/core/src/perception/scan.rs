use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::models::{inverse_observe, LandmarkPosition, ModelError, Observation, Pose, SensorNoiseConfig};

/// Beams per sweep.
pub const BEAM_COUNT: usize = 361;
/// Angular spacing between beams (0.5°).
pub const BEAM_SPACING: f64 = 0.5 * std::f64::consts::PI / 180.0;
/// Beam 180 points along the robot heading; beam 0 points to its right.
pub const SCAN_SENSOR_OFFSET: f64 = FRAC_PI_2;
/// Default range jump that separates two objects.
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("scan must have {BEAM_COUNT} beams, got {0}")]
    BeamCount(usize),
    #[error("beam {index} reads {range}, outside [0, {max_range}]")]
    RangeOutOfBounds {
        index: usize,
        range: f64,
        max_range: f64,
    },
    #[error("max range must be positive and finite, got {0}")]
    MaxRange(f64),
}

/// One 180° sweep of the laser.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub timestamp: f64,
    ranges: Vec<f64>,
    pub max_range: f64,
}

impl LaserScan {
    pub fn new(timestamp: f64, ranges: Vec<f64>, max_range: f64) -> Result<Self, ScanError> {
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(ScanError::MaxRange(max_range));
        }
        if ranges.len() != BEAM_COUNT {
            return Err(ScanError::BeamCount(ranges.len()));
        }
        if let Some((index, &range)) = ranges
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r >= 0.0 && **r <= max_range))
        {
            return Err(ScanError::RangeOutOfBounds {
                index,
                range,
                max_range,
            });
        }
        Ok(Self {
            timestamp,
            ranges,
            max_range,
        })
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    /// Sensor-frame bearing of beam `i`.
    pub fn beam_bearing(i: usize) -> f64 {
        i as f64 * BEAM_SPACING
    }

    pub fn is_saturated(&self, i: usize) -> bool {
        self.ranges[i] >= self.max_range
    }
}

/// A run of adjacent beams that hit the same object.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedObject {
    pub first_beam: usize,
    pub ranges: Vec<f64>,
    /// Saturated beams form their own singleton segments.
    pub saturated: bool,
}

impl SegmentedObject {
    pub fn size(&self) -> usize {
        self.ranges.len()
    }

    pub fn beams(&self) -> std::ops::Range<usize> {
        self.first_beam..self.first_beam + self.ranges.len()
    }

    /// Polar mean of the member beams.
    pub fn centre(&self) -> Observation {
        let n = self.ranges.len() as f64;
        let mean_angle = self.beams().map(LaserScan::beam_bearing).sum::<f64>() / n;
        let mean_range = self.ranges.iter().sum::<f64>() / n;
        Observation::new(mean_range, mean_angle)
    }
}

/// Splits a scan wherever adjacent ranges jump by `gap_threshold` or more.
///
/// Saturated beams never join a neighbour, so the output always partitions
/// all 361 beams.
pub fn segment_scan(scan: &LaserScan, gap_threshold: f64) -> Vec<SegmentedObject> {
    let ranges = scan.ranges();
    let mut out = Vec::new();
    let mut current = SegmentedObject {
        first_beam: 0,
        ranges: vec![ranges[0]],
        saturated: scan.is_saturated(0),
    };
    for j in 1..BEAM_COUNT {
        let sat = scan.is_saturated(j);
        let joins = !sat && !current.saturated && (ranges[j] - ranges[j - 1]).abs() < gap_threshold;
        if joins {
            current.ranges.push(ranges[j]);
        } else {
            out.push(std::mem::replace(
                &mut current,
                SegmentedObject {
                    first_beam: j,
                    ranges: vec![ranges[j]],
                    saturated: sat,
                },
            ));
        }
    }
    out.push(current);
    out
}

/// Bounds on object size, exclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionParams {
    pub min_points: usize,
    pub max_points: usize,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            min_points: 3,
            max_points: 8,
        }
    }
}

/// A point landmark found in a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedLandmark {
    pub observation: Observation,
    pub position: LandmarkPosition,
}

/// Keeps objects with `min_points < size < max_points` and projects their
/// centre into the world frame from `robot`.
pub fn extract_landmarks(
    objects: &[SegmentedObject],
    params: ExtractionParams,
    robot: &Pose,
    cfg: &SensorNoiseConfig,
) -> Result<Vec<ExtractedLandmark>, ModelError> {
    objects
        .iter()
        .filter(|o| !o.saturated && o.size() > params.min_points && o.size() < params.max_points)
        .filter(|o| o.centre().range > 0.0)
        .map(|o| {
            let observation = o.centre();
            let position = inverse_observe(robot, &observation, cfg)?;
            Ok(ExtractedLandmark {
                observation,
                position,
            })
        })
        .collect()
}

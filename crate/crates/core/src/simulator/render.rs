use serde::{Deserialize, Serialize};

use crate::models::{observe, LandmarkPosition, Pose, SensorNoiseConfig};
use crate::perception::{LaserScan, BEAM_COUNT, BEAM_SPACING, SCAN_SENSOR_OFFSET};

/// How point objects are drawn into a synthetic scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanRenderConfig {
    /// Angular footprint of a point object, in beams.
    pub cluster_beams: f64,
    /// Per-object range noise shared by all of its beams.
    pub sigma_range: f64,
    /// Per-object bearing noise.
    pub sigma_bearing: f64,
    /// Independent noise on every painted beam.
    pub beam_jitter: f64,
}

impl Default for ScanRenderConfig {
    fn default() -> Self {
        Self {
            cluster_beams: 5.0,
            sigma_range: 0.02,
            sigma_bearing: 0.1_f64.to_radians(),
            beam_jitter: 0.005,
        }
    }
}

/// Paints an object at `range` and sensor-frame `bearing` into `ranges`,
/// keeping the nearer reading on every beam it covers. Returns whether any
/// beam was painted.
pub fn paint_object(ranges: &mut [f64], range: f64, bearing: f64, cluster_beams: f64) -> bool {
    let half = 0.5 * cluster_beams;
    let centre = bearing / BEAM_SPACING;
    let lo = (centre - half).ceil().max(0.0);
    let hi = (centre + half).floor().min((BEAM_COUNT - 1) as f64);
    if lo > hi {
        return false;
    }
    for i in lo as usize..=hi as usize {
        ranges[i] = ranges[i].min(range);
    }
    true
}

/// Noiseless scan of point objects seen from `pose`.
pub fn render_scan(
    timestamp: f64,
    pose: &Pose,
    objects: &[LandmarkPosition],
    cluster_beams: f64,
    min_range: f64,
    max_range: f64,
) -> LaserScan {
    let mut ranges = vec![max_range; BEAM_COUNT];
    let sensor = SensorNoiseConfig::default().with_offset(SCAN_SENSOR_OFFSET);
    for obj in objects {
        let Ok(z) = observe(pose, obj, &sensor) else {
            continue;
        };
        if z.range >= min_range && z.range < max_range {
            paint_object(&mut ranges, z.range, z.bearing, cluster_beams);
        }
    }
    LaserScan::new(timestamp, ranges, max_range).expect("rendered ranges lie in [0, max_range]")
}

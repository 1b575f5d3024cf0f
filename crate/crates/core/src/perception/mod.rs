//! Laser scan to point landmarks: segmentation, size filtering, spacing
//! pre-filter, quality tracking and mutual nearest-neighbour association.

mod association;
mod quality;
mod scan;

pub use association::{
    associate, isolated_indices, prefilter, AssociationResult, DEFAULT_MAX_DISTANCE,
    DEFAULT_MIN_SEPARATION,
};
pub use quality::{LandmarkCandidate, QualityParams, QualityTracker, QualityUpdate};
pub use scan::{
    extract_landmarks, segment_scan, ExtractedLandmark, ExtractionParams, LaserScan, ScanError,
    SegmentedObject, BEAM_COUNT, BEAM_SPACING, DEFAULT_GAP_THRESHOLD, SCAN_SENSOR_OFFSET,
};

//! Landmark quality scoring.
//!
//! Every detection that is not yet a registered landmark becomes a
//! candidate. Candidates gain score when re-observed and lose it when missed;
//! crossing the set threshold promotes them into the map, falling below the
//! clear threshold deletes them. Candidate positions stay at their first
//! detection, so anything that moves more than the association gate between
//! scans cannot accumulate hits.

use crate::models::LandmarkPosition;

use super::association::{associate, DEFAULT_MAX_DISTANCE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityParams {
    pub upgrade: i64,
    pub degrade: i64,
    pub initial_score: i64,
    /// Promote when the score is strictly greater.
    pub set_threshold: i64,
    /// Delete when the score is strictly smaller.
    pub clear_threshold: i64,
    pub max_distance: f64,
}

impl Default for QualityParams {
    fn default() -> Self {
        Self {
            upgrade: 1,
            degrade: 3,
            initial_score: 1,
            set_threshold: 10,
            clear_threshold: -20,
            max_distance: DEFAULT_MAX_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkCandidate {
    pub centre_global: LandmarkPosition,
    pub quality: i64,
    pub registered: bool,
    pub last_seen: f64,
}

/// Result of scoring one scan's detections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityUpdate {
    /// Indices into the scan's detections whose candidate was promoted.
    pub promoted: Vec<usize>,
    pub cleared: Vec<LandmarkCandidate>,
    /// Distance evaluations spent on matching.
    pub comparisons: u64,
}

#[derive(Debug, Clone, Default)]
pub struct QualityTracker {
    params: QualityParams,
    candidates: Vec<LandmarkCandidate>,
}

impl QualityTracker {
    pub fn new(params: QualityParams) -> Self {
        Self {
            params,
            candidates: Vec::new(),
        }
    }

    pub fn params(&self) -> &QualityParams {
        &self.params
    }

    pub fn candidates(&self) -> &[LandmarkCandidate] {
        &self.candidates
    }

    /// Scores one scan's detections against the open candidates.
    pub fn update(&mut self, detections: &[LandmarkPosition], now: f64) -> QualityUpdate {
        let p = self.params;
        let open: Vec<usize> = (0..self.candidates.len())
            .filter(|&k| !self.candidates[k].registered)
            .collect();
        let positions: Vec<_> = open.iter().map(|&k| self.candidates[k].centre_global).collect();
        let assoc = associate(detections, &positions, p.max_distance);

        let mut out = QualityUpdate {
            comparisons: (detections.len() * positions.len()) as u64,
            ..Default::default()
        };

        let mut hit = vec![false; open.len()];
        for &(det, slot) in &assoc.pairs {
            hit[slot] = true;
            let c = &mut self.candidates[open[slot]];
            c.quality += p.upgrade;
            c.last_seen = now;
            if c.quality > p.set_threshold {
                c.registered = true;
                out.promoted.push(det);
            }
        }
        for (slot, &k) in open.iter().enumerate() {
            if !hit[slot] {
                self.candidates[k].quality -= p.degrade;
            }
        }
        for &det in &assoc.unmatched_new {
            let c = LandmarkCandidate {
                centre_global: detections[det],
                quality: p.initial_score,
                registered: false,
                last_seen: now,
            };
            if c.quality > p.set_threshold {
                self.candidates.push(LandmarkCandidate { registered: true, ..c });
                out.promoted.push(det);
            } else {
                self.candidates.push(c);
            }
        }

        let (keep, cleared): (Vec<_>, Vec<_>) = std::mem::take(&mut self.candidates)
            .into_iter()
            .partition(|c| c.registered || c.quality >= p.clear_threshold);
        self.candidates = keep;
        out.cleared = cleared;
        out.promoted.sort_unstable();
        out
    }
}

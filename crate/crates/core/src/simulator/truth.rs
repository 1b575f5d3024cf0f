//! Ground-truth file: `T <t> <x> <y> <theta>` per step and `M <id> <x> <y>`
//! per static landmark.

use std::io::{self, BufRead, Write};

use crate::ingest::ParseError;
use crate::models::{LandmarkPosition, Pose};

/// Landmarks painted into, or observed at, one sensor timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Visibility {
    pub timestamp: f64,
    pub landmarks: Vec<usize>,
    pub dynamics: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
    pub landmarks: Vec<LandmarkPosition>,
    /// Not stored in truth files.
    pub visibility: Vec<Visibility>,
}

/// Timestamps closer than this are treated as the same instant.
pub const TIME_TOLERANCE: f64 = 1e-9;

impl GroundTruth {
    /// True pose at `t`, if a step lies within [`TIME_TOLERANCE`].
    pub fn pose_at(&self, t: f64) -> Option<Pose> {
        let i = self.times.partition_point(|&s| s < t - TIME_TOLERANCE);
        (i < self.times.len() && (self.times[i] - t).abs() <= TIME_TOLERANCE).then(|| self.poses[i])
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (t, p) in self.times.iter().zip(&self.poses) {
            writeln!(out, "T {t} {} {} {}", p.x, p.y, p.theta)?;
        }
        for (id, l) in self.landmarks.iter().enumerate() {
            writeln!(out, "M {id} {} {}", l.x, l.y)?;
        }
        Ok(())
    }

    /// Reads a truth file. Landmark ids must be 0, 1, 2, ... in order.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, ParseError> {
        let mut truth = GroundTruth::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| ParseError::Malformed {
                line: line_no,
                message: msg,
            };
            let num = |s: &str| -> Result<f64, ParseError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("invalid number `{s}`")))
            };
            match toks.as_slice() {
                [] => {}
                [c, ..] if c.starts_with('#') => {}
                ["T", t, x, y, th] => {
                    let t = num(t)?;
                    if truth.times.last().is_some_and(|&prev| t <= prev) {
                        return Err(bad("truth timestamps must increase".into()));
                    }
                    truth.times.push(t);
                    truth.poses.push(Pose::new(num(x)?, num(y)?, num(th)?));
                }
                ["M", id, x, y, rest @ ..] if rest.is_empty() || rest.len() == 4 => {
                    let expected = truth.landmarks.len();
                    if id.parse::<usize>().ok() != Some(expected) {
                        return Err(bad(format!("expected landmark id {expected}, got `{id}`")));
                    }
                    truth.landmarks.push(LandmarkPosition::new(num(x)?, num(y)?));
                }
                _ => return Err(bad(format!("unrecognised truth line `{line}`"))),
            }
        }
        Ok(truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let truth = GroundTruth {
            times: vec![0.0, 0.1, 0.2],
            poses: vec![Pose::origin(), Pose::new(0.3, 0.0, 0.1), Pose::new(0.6, 0.03, -3.0)],
            landmarks: vec![LandmarkPosition::new(4.0, -1.25)],
            visibility: vec![],
        };
        let mut buf = Vec::new();
        truth.write(&mut buf).unwrap();
        assert_eq!(GroundTruth::parse(buf.as_slice()).unwrap(), truth);
        assert_eq!(truth.pose_at(0.1 + 1e-12), Some(truth.poses[1]));
        assert_eq!(truth.pose_at(0.15), None);
    }

    #[test]
    fn rejects_bad_lines() {
        for (text, line) in [
            ("T 0 0 0\n", 1),
            ("T 0 0 0 0\nT 0 1 1 1\n", 2),
            ("M 1 0 0\n", 1),
            ("T 0 0 0 x\n", 1),
        ] {
            match GroundTruth::parse(text.as_bytes()) {
                Err(ParseError::Malformed { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}

//! Run logs and the metrics used to compare estimators.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{wrap, Pose};
use crate::simulator::TIME_TOLERANCE;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("run has no steps")]
    Empty,
    #[error("step {0} has no reference truth")]
    MissingTruth(usize),
    #[error("step {0} has no valid covariance")]
    MissingCovariance(usize),
    #[error("runs are not aligned: {0}")]
    Alignment(String),
    #[error("run log: {0}")]
    Csv(#[from] csv::Error),
    #[error("run log: {0}")]
    Invalid(String),
}

/// Estimator output at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStep {
    pub timestamp: f64,
    pub pose: Pose,
    /// Diagonal of the robot covariance: x, y, θ.
    pub variance: [f64; 3],
    pub landmark_count: usize,
    /// Cumulative pairwise distance evaluations made by data association.
    pub associations: u64,
    /// `(landmark id, covariance trace)` for each mapped landmark.
    pub landmark_traces: Vec<(u64, f64)>,
    pub truth: Option<Pose>,
}

impl RunStep {
    pub fn robot_trace(&self) -> f64 {
        self.variance.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub steps: Vec<RunStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub x: f64,
    pub y: f64,
    /// Degrees.
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    pub x: f64,
    pub y: f64,
}

fn truth_of(i: usize, s: &RunStep) -> Result<Pose, EvalError> {
    s.truth.ok_or(EvalError::MissingTruth(i))
}

/// Root-mean-square pose error. Heading differences are wrapped first.
pub fn rmse(run: &RunLog) -> Result<Rmse, EvalError> {
    if run.steps.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut sx, mut sy, mut st) = (0.0, 0.0, 0.0);
    for (i, s) in run.steps.iter().enumerate() {
        let t = truth_of(i, s)?;
        sx += (s.pose.x - t.x).powi(2);
        sy += (s.pose.y - t.y).powi(2);
        st += wrap(s.pose.theta - t.theta).powi(2);
    }
    let n = run.steps.len() as f64;
    Ok(Rmse {
        x: (sx / n).sqrt(),
        y: (sy / n).sqrt(),
        theta: (st / n).sqrt().to_degrees(),
    })
}

/// Fraction of steps whose x and y errors lie within three reported
/// standard deviations.
pub fn consistency(run: &RunLog) -> Result<Consistency, EvalError> {
    if run.steps.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut cx, mut cy) = (0usize, 0usize);
    for (i, s) in run.steps.iter().enumerate() {
        let t = truth_of(i, s)?;
        let [vx, vy, _] = s.variance;
        if !(vx >= 0.0 && vy >= 0.0) {
            return Err(EvalError::MissingCovariance(i));
        }
        cx += usize::from((s.pose.x - t.x).abs() <= 3.0 * vx.sqrt());
        cy += usize::from((s.pose.y - t.y).abs() <= 3.0 * vy.sqrt());
    }
    let n = run.steps.len() as f64;
    Ok(Consistency {
        x: cx as f64 / n,
        y: cy as f64 / n,
    })
}

/// Index of the first step back within `radius` of the starting position
/// after having been at least `departure` away.
pub fn first_revisit(positions: &[Pose], radius: f64, departure: f64) -> Option<usize> {
    let start = positions.first()?;
    let mut left = false;
    for (i, p) in positions.iter().enumerate() {
        let d = p.distance_to(start);
        if d >= departure {
            left = true;
        } else if left && d <= radius {
            return Some(i);
        }
    }
    None
}

/// Growth exponent of `run`'s cumulative association count relative to
/// `reference` over the second half of two runs of the same log.
///
/// With `A(k) = C_run(k) / C_ref(k)` this is `log2(A(end) / A(mid))`, so two
/// linear counts give 0 and a quadratic count against a linear one gives 1.
pub fn relative_association_growth(run: &RunLog, reference: &RunLog) -> Option<f64> {
    let n = run.steps.len();
    if n < 3 || reference.steps.len() != n {
        return None;
    }
    let mid = (n - 1) / 2;
    let amp = |i: usize| run.steps[i].associations as f64 / reference.steps[i].associations as f64;
    let (a_mid, a_end) = (amp(mid), amp(n - 1));
    (a_mid.is_finite() && a_mid > 0.0 && a_end.is_finite()).then(|| (a_end / a_mid).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub steps: usize,
    pub rmse: Rmse,
    pub consistency: Consistency,
    pub final_map_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

const HEADERS: [&str; 8] = [
    "run", "steps", "rmse_x_m", "rmse_y_m", "rmse_theta_deg", "within_3sigma_x",
    "within_3sigma_y", "final_map_size",
];

impl Report {
    fn cells(&self) -> Vec<[String; 8]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.steps.to_string(),
                    format!("{:.4}", r.rmse.x),
                    format!("{:.4}", r.rmse.y),
                    format!("{:.4}", r.rmse.theta),
                    format!("{:.4}", r.consistency.x),
                    format!("{:.4}", r.consistency.y),
                    r.final_map_size.to_string(),
                ]
            })
            .collect()
    }

    /// Column-aligned table for terminals.
    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let mut widths = HEADERS.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |fields: Vec<&str>| {
            let parts: Vec<String> = fields
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (f, w))| if i == 0 { format!("{f:<w$}") } else { format!("{f:>w$}") })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(HEADERS.to_vec());
        for row in &cells {
            line(row.iter().map(String::as_str).collect());
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADERS)?;
        for row in &self.rows {
            w.write_record([
                row.label.clone(),
                row.steps.to_string(),
                row.rmse.x.to_string(),
                row.rmse.y.to_string(),
                row.rmse.theta.to_string(),
                row.consistency.x.to_string(),
                row.consistency.y.to_string(),
                row.final_map_size.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Tabulates several runs over the same truth, one row per run in order.
pub fn compare(runs: &[RunLog], labels: &[String]) -> Result<Report, EvalError> {
    if runs.len() != labels.len() {
        return Err(EvalError::Alignment(format!(
            "{} runs but {} labels",
            runs.len(),
            labels.len()
        )));
    }
    if let Some(first) = runs.first() {
        for (run, label) in runs.iter().zip(labels).skip(1) {
            if run.steps.len() != first.steps.len() {
                return Err(EvalError::Alignment(format!(
                    "`{label}` has {} steps, `{}` has {}",
                    run.steps.len(),
                    labels[0],
                    first.steps.len()
                )));
            }
            for (i, (a, b)) in run.steps.iter().zip(&first.steps).enumerate() {
                if (a.timestamp - b.timestamp).abs() > TIME_TOLERANCE {
                    return Err(EvalError::Alignment(format!(
                        "`{label}` step {i} is at t={}, `{}` at t={}",
                        a.timestamp, labels[0], b.timestamp
                    )));
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(runs.len());
    for (run, label) in runs.iter().zip(labels) {
        rows.push(ReportRow {
            label: label.clone(),
            steps: run.steps.len(),
            rmse: rmse(run)?,
            consistency: consistency(run)?,
            final_map_size: run.steps.last().map_or(0, |s| s.landmark_count),
        });
    }
    Ok(Report { rows })
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRow {
    t: f64,
    x: f64,
    y: f64,
    theta: f64,
    var_x: f64,
    var_y: f64,
    var_theta: f64,
    landmarks: usize,
    associations: u64,
    true_x: Option<f64>,
    true_y: Option<f64>,
    true_theta: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    id: u64,
    trace: f64,
}

/// Header rows are written explicitly so empty tables still carry one.
fn headerless<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

impl RunLog {
    /// Writes `t,x,y,theta,var_x,var_y,var_theta,landmarks,associations,true_x,true_y,true_theta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = headerless(out);
        w.write_record([
            "t", "x", "y", "theta", "var_x", "var_y", "var_theta", "landmarks", "associations",
            "true_x", "true_y", "true_theta",
        ])?;
        for s in &self.steps {
            w.serialize(StepRow {
                t: s.timestamp,
                x: s.pose.x,
                y: s.pose.y,
                theta: s.pose.theta,
                var_x: s.variance[0],
                var_y: s.variance[1],
                var_theta: s.variance[2],
                landmarks: s.landmark_count,
                associations: s.associations,
                true_x: s.truth.map(|p| p.x),
                true_y: s.truth.map(|p| p.y),
                true_theta: s.truth.map(|p| p.theta),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `t,id,trace`, one row per landmark per step.
    pub fn write_landmark_traces<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = headerless(out);
        w.write_record(["t", "id", "trace"])?;
        for s in &self.steps {
            for &(id, trace) in &s.landmark_traces {
                w.serialize(TraceRow {
                    t: s.timestamp,
                    id,
                    trace,
                })?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the step table. Landmark traces are left empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, EvalError> {
        let mut steps = Vec::new();
        for (i, row) in csv::Reader::from_reader(input).deserialize::<StepRow>().enumerate() {
            let r = row?;
            let truth = match (r.true_x, r.true_y, r.true_theta) {
                (Some(x), Some(y), Some(th)) => Some(Pose::new(x, y, th)),
                (None, None, None) => None,
                _ => return Err(EvalError::Invalid(format!("row {}: partial truth", i + 1))),
            };
            if steps.last().is_some_and(|p: &RunStep| r.t <= p.timestamp) {
                return Err(EvalError::Invalid(format!("row {}: timestamps must increase", i + 1)));
            }
            steps.push(RunStep {
                timestamp: r.t,
                pose: Pose::new(r.x, r.y, r.theta),
                variance: [r.var_x, r.var_y, r.var_theta],
                landmark_count: r.landmarks,
                associations: r.associations,
                landmark_traces: Vec::new(),
                truth,
            });
        }
        Ok(RunLog { steps })
    }

    /// Attaches traces read from a `t,id,trace` table to matching steps.
    pub fn read_landmark_traces<R: Read>(&mut self, input: R) -> Result<(), EvalError> {
        for s in &mut self.steps {
            s.landmark_traces.clear();
        }
        for (i, row) in csv::Reader::from_reader(input).deserialize::<TraceRow>().enumerate() {
            let r = row?;
            let k = self.steps.partition_point(|s| s.timestamp < r.t - TIME_TOLERANCE);
            match self.steps.get_mut(k) {
                Some(s) if (s.timestamp - r.t).abs() <= TIME_TOLERANCE => {
                    s.landmark_traces.push((r.id, r.trace))
                }
                _ => {
                    return Err(EvalError::Invalid(format!(
                        "trace row {}: no step at t={}",
                        i + 1,
                        r.t
                    )))
                }
            }
        }
        Ok(())
    }
}

use crate::models::{motion_step, ControlInput, Pose};

use super::format::{SensorPayload, SensorRecord};
use super::IngestError;

/// Latest speed and yaw-rate samples, held between records.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroOrderHold {
    control: ControlInput,
    last_time: Option<f64>,
}

impl ZeroOrderHold {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn control(&self) -> ControlInput {
        self.control
    }

    /// Starts the clock without a control sample.
    pub fn start_at(&mut self, t: f64) {
        if self.last_time.is_none() {
            self.last_time = Some(t);
        }
    }

    /// Moves the clock to `t`; returns the held control and elapsed time when
    /// time actually advanced.
    pub fn advance(&mut self, t: f64) -> Option<(ControlInput, f64)> {
        let step = match self.last_time {
            Some(prev) if t > prev => Some((self.control, t - prev)),
            _ => None,
        };
        if self.last_time.is_none_or(|prev| t > prev) {
            self.last_time = Some(t);
        }
        step
    }

    /// Latches a control sample; other payloads are ignored.
    pub fn latch(&mut self, payload: &SensorPayload) {
        match payload {
            SensorPayload::Speed(v) => self.control.v = *v,
            SensorPayload::Gyro([_, _, wz]) => self.control.omega = *wz,
            _ => {}
        }
    }
}

/// Integrates speed and yaw rate from `p0`, emitting one pose per distinct
/// control timestamp.
pub fn dead_reckon(p0: Pose, records: &[SensorRecord]) -> Result<Vec<(f64, Pose)>, IngestError> {
    let mut hold = ZeroOrderHold::new();
    let mut pose = p0;
    let mut out: Vec<(f64, Pose)> = Vec::new();
    for rec in records.iter().filter(|r| r.is_control()) {
        if let Some((u, dt)) = hold.advance(rec.timestamp) {
            pose = motion_step(&pose, &u, dt)?;
        }
        hold.latch(&rec.payload);
        match out.last_mut() {
            Some(last) if last.0 == rec.timestamp => last.1 = pose,
            _ => out.push((rec.timestamp, pose)),
        }
    }
    if out.is_empty() {
        return Err(IngestError::NoControl);
    }
    Ok(out)
}

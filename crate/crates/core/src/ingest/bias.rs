use super::format::{SensorPayload, SensorRecord};
use super::IngestError;

/// Constant offsets of the speed and yaw-rate streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEstimate {
    pub speed_bias: f64,
    pub gyro_z_bias: f64,
    pub window: f64,
}

impl BiasEstimate {
    pub fn zero() -> Self {
        Self {
            speed_bias: 0.0,
            gyro_z_bias: 0.0,
            window: f64::MIN_POSITIVE,
        }
    }
}

/// Mean speed and yaw rate over `[t0, t0 + window)`, where `t0` is the first
/// record's timestamp. The caller asserts the robot was stationary.
///
/// A stream with no samples in the window gets zero bias; having neither is
/// an error.
pub fn estimate_bias(records: &[SensorRecord], window: f64) -> Result<BiasEstimate, IngestError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(IngestError::InvalidWindow(window));
    }
    let Some(t0) = records.first().map(|r| r.timestamp) else {
        return Err(IngestError::NoSamplesInWindow(window));
    };
    let end = t0 + window;
    let (mut v_sum, mut v_n, mut w_sum, mut w_n) = (0.0, 0usize, 0.0, 0usize);
    for rec in records.iter().take_while(|r| r.timestamp < end) {
        match rec.payload {
            SensorPayload::Speed(v) => {
                v_sum += v;
                v_n += 1;
            }
            SensorPayload::Gyro([_, _, wz]) => {
                w_sum += wz;
                w_n += 1;
            }
            _ => {}
        }
    }
    if v_n == 0 && w_n == 0 {
        return Err(IngestError::NoSamplesInWindow(window));
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(BiasEstimate {
        speed_bias: mean(v_sum, v_n),
        gyro_z_bias: mean(w_sum, w_n),
        window,
    })
}

/// Subtracts the bias from every speed and yaw-rate sample.
pub fn debias(records: &[SensorRecord], bias: &BiasEstimate) -> Vec<SensorRecord> {
    records
        .iter()
        .map(|rec| {
            let payload = match &rec.payload {
                SensorPayload::Speed(v) => SensorPayload::Speed(v - bias.speed_bias),
                SensorPayload::Gyro([wx, wy, wz]) => {
                    SensorPayload::Gyro([*wx, *wy, wz - bias.gyro_z_bias])
                }
                other => other.clone(),
            };
            SensorRecord {
                timestamp: rec.timestamp,
                payload,
            }
        })
        .collect()
}

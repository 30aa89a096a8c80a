//! Simulated rate gyro, magnetometer array and wheel encoders, plus the
//! array gradient recovery and gyro preintegration used by the estimator.

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::magnetostatics::{FieldSample, FieldSource, Vector5};
use crate::trajectory::Trajectory;
use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Tolerance used when matching timestamps to interval boundaries.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GyroRecord {
    pub t: f64,
    /// Yaw rate, rad/s.
    pub u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GyroModel {
    /// White-noise intensity Q, (rad/√s)².
    pub q: f64,
    pub rate_hz: f64,
}

impl GyroModel {
    pub fn new(noise_density: f64, rate_hz: f64) -> Self {
        Self {
            q: noise_density * noise_density,
            rate_hz,
        }
    }
}

/// Samples the gyro at `rate_hz` over the whole trajectory.
///
/// Each sample is the mean true yaw rate over the preceding sample period
/// minus white noise of variance `Q/Δt`, so noise-free preintegration
/// reproduces the heading change exactly.
pub fn simulate_gyro<R: Rng>(traj: &Trajectory, model: &GyroModel, rng: &mut R) -> Vec<GyroRecord> {
    let period = 1.0 / model.rate_hz;
    let n = (traj.duration() * model.rate_hz + TIME_EPS).floor() as usize;
    let sigma = (model.q / period).sqrt();
    let noise = Normal::new(0.0, sigma).expect("gyro noise must be finite");
    let mut prev_heading = traj.heading_at(0.0);
    (1..=n)
        .map(|i| {
            let t = i as f64 / model.rate_hz;
            let heading = traj.heading_at(t);
            let rate = (heading - prev_heading) / period;
            prev_heading = heading;
            let w = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            GyroRecord { t, u: rate - w }
        })
        .collect()
}

/// Four magnetometers in a cross: `(+d/2, 0, 0)`, `(-d/2, 0, 0)`,
/// `(0, +d/2, 0)`, `(0, -d/2, 0)` in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub offsets: [Vector3<f64>; 4],
}

impl ArrayGeometry {
    pub fn cross(baseline: f64) -> Self {
        let h = 0.5 * baseline;
        Self {
            offsets: [
                Vector3::new(h, 0.0, 0.0),
                Vector3::new(-h, 0.0, 0.0),
                Vector3::new(0.0, h, 0.0),
                Vector3::new(0.0, -h, 0.0),
            ],
        }
    }

    /// Validates the cross layout and returns its baseline.
    pub fn baseline(&self) -> Result<f64> {
        let o = &self.offsets;
        let d = o[0].x - o[1].x;
        if !(d > 0.0) {
            return Err(Error::DegenerateArray(format!("non-positive x baseline {d}")));
        }
        let expected = Self::cross(d);
        let tol = 1e-9 * (1.0 + d);
        for (k, (a, b)) in o.iter().zip(expected.offsets.iter()).enumerate() {
            if (a - b).amax() > tol {
                return Err(Error::DegenerateArray(format!(
                    "sensor {k} at {:?}, expected {:?}",
                    a.as_slice(),
                    b.as_slice()
                )));
            }
        }
        Ok(d)
    }
}

/// Optional calibration faults applied to the raw readings.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CalibrationErrors {
    pub bias: [Vector3<f64>; 4],
    /// Per-sensor relative scale error.
    pub scale: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagArrayModel {
    pub geometry: ArrayGeometry,
    /// Per-axis white noise, µT.
    pub noise_std: f64,
    pub rate_hz: f64,
    pub calibration: CalibrationErrors,
}

impl MagArrayModel {
    pub fn cross(baseline: f64, noise_std: f64, rate_hz: f64) -> Self {
        Self {
            geometry: ArrayGeometry::cross(baseline),
            noise_std,
            rate_hz,
            calibration: CalibrationErrors::default(),
        }
    }

    /// Covariance of the recovered field, µT².
    pub fn field_covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * (self.noise_std * self.noise_std / 4.0)
    }

    /// Covariance of the recovered packed gradient, (µT/m)².
    ///
    /// Each packed element draws on a disjoint set of raw axes, so the map is
    /// diagonal: `diag(2, 1, 2, 2, 2)·σ²/d²`.
    pub fn gradient_covariance(&self) -> SMatrix<f64, 5, 5> {
        let d = self.geometry.offsets[0].x - self.geometry.offsets[1].x;
        let s = self.noise_std * self.noise_std / (d * d);
        SMatrix::<f64, 5, 5>::from_diagonal(&Vector5::new(2.0, 1.0, 2.0, 2.0, 2.0)) * s
    }
}

/// Raw body-frame readings of the four magnetometers at pose `(C_ab, r_a)`.
pub fn simulate_array<F: FieldSource + ?Sized, R: Rng>(
    world: &F,
    rotation: &Matrix3<f64>,
    position: &Vector3<f64>,
    model: &MagArrayModel,
    rng: &mut R,
) -> Result<[Vector3<f64>; 4]> {
    let noise = Normal::new(0.0, model.noise_std.max(0.0)).expect("finite noise");
    let mut out = [Vector3::zeros(); 4];
    for (k, offset) in model.geometry.offsets.iter().enumerate() {
        let (b_a, _) = world.field_and_gradient(&(position + rotation * offset))?;
        let mut reading = rotation.transpose() * b_a;
        reading *= 1.0 + model.calibration.scale[k];
        reading += model.calibration.bias[k];
        if model.noise_std > 0.0 {
            reading += Vector3::from_fn(|_, _| noise.sample(rng));
        }
        out[k] = reading;
    }
    Ok(out)
}

/// Field and gradient from one cross-array snapshot.
///
/// Planar derivatives are centred differences; the z-column follows from the
/// curl-free constraint and `Bzz` from tracelessness.
pub fn recover_gradient(
    timestamp: f64,
    readings: &[Vector3<f64>; 4],
    geometry: &ArrayGeometry,
) -> Result<FieldSample> {
    let d = geometry.baseline()?;
    let field = (readings[0] + readings[1] + readings[2] + readings[3]) / 4.0;
    let ddx = (readings[0] - readings[1]) / d;
    let ddy = (readings[2] - readings[3]) / d;
    let gradient = Vector5::new(
        ddx.x,
        0.5 * (ddx.y + ddy.x),
        ddx.z,
        ddy.y,
        ddy.z,
    );
    Ok(FieldSample {
        timestamp,
        field,
        gradient,
    })
}

/// Heading increment accumulated between two keyframes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GyroIncrement {
    pub delta_theta: f64,
    /// rad².
    pub variance: f64,
}

impl GyroIncrement {
    /// Chains two consecutive increments.
    pub fn then(&self, next: &GyroIncrement) -> GyroIncrement {
        GyroIncrement {
            delta_theta: self.delta_theta + next.delta_theta,
            variance: self.variance + next.variance,
        }
    }
}

/// Sums `u·Δt` over `samples`; `prev_time` is the time the first sample's
/// integration period starts.
pub fn preintegrate_gyro(samples: &[GyroRecord], prev_time: f64, q: f64) -> Result<GyroIncrement> {
    if samples.is_empty() {
        return Err(Error::EmptyInterval {
            start: prev_time,
            end: prev_time,
        });
    }
    let mut last = prev_time;
    let mut inc = GyroIncrement {
        delta_theta: 0.0,
        variance: 0.0,
    };
    for s in samples {
        let dt = s.t - last;
        inc.delta_theta += s.u * dt;
        inc.variance += q * dt;
        last = s.t;
    }
    Ok(inc)
}

/// Preintegrates the records falling in `(start, end]`. `records` must be
/// sorted by time.
pub fn preintegrate_between(records: &[GyroRecord], start: f64, end: f64, q: f64) -> Result<GyroIncrement> {
    let lo = records.partition_point(|r| r.t <= start + TIME_EPS);
    let hi = records.partition_point(|r| r.t <= end + TIME_EPS);
    if lo >= hi {
        return Err(Error::EmptyInterval { start, end });
    }
    preintegrate_gyro(&records[lo..hi], start, q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WheelRecord {
    pub t: f64,
    /// Forward speed, m/s.
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WheelModel {
    /// Standard deviation of the per-run scale factor error.
    pub scale_error_std: f64,
    /// White speed noise, m/s.
    pub noise_std: f64,
    pub rate_hz: f64,
}

/// Wheel-encoder forward speed, used only for the dead-reckoning baseline.
pub fn simulate_wheel_odometry<R: Rng>(traj: &Trajectory, model: &WheelModel, rng: &mut R) -> Vec<WheelRecord> {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let scale = 1.0 + model.scale_error_std * std_normal.sample(rng);
    let period = 1.0 / model.rate_hz;
    let n = (traj.duration() * model.rate_hz + TIME_EPS).floor() as usize;
    let mut prev = traj.state_at(0.0);
    (1..=n)
        .map(|i| {
            let t = i as f64 / model.rate_hz;
            let cur = traj.state_at(t);
            let dist = Vector2::new(cur.0 - prev.0, cur.1 - prev.1).norm();
            prev = cur;
            let v = scale * dist / period + model.noise_std * std_normal.sample(rng);
            WheelRecord { t, v }
        })
        .collect()
}

/// Integrates gyro heading and wheel speed from `start`; returns `(t, x, y, θ)`
/// at every gyro sample. Both streams must share timestamps.
pub fn dead_reckon(
    gyro: &[GyroRecord],
    wheel: &[WheelRecord],
    start: (f64, f64, f64),
    t0: f64,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    if gyro.len() != wheel.len() {
        return Err(Error::InvalidData(format!(
            "gyro ({}) and wheel ({}) streams differ in length",
            gyro.len(),
            wheel.len()
        )));
    }
    let (mut x, mut y, mut th) = start;
    let mut last = t0;
    let mut out = Vec::with_capacity(gyro.len() + 1);
    out.push((t0, x, y, wrap_angle(th)));
    for (g, w) in gyro.iter().zip(wheel) {
        if (g.t - w.t).abs() > TIME_EPS {
            return Err(Error::InvalidData(format!(
                "gyro time {} and wheel time {} disagree",
                g.t, w.t
            )));
        }
        let dt = g.t - last;
        let mid = th + 0.5 * g.u * dt;
        x += w.v * dt * mid.cos();
        y += w.v * dt * mid.sin();
        th += g.u * dt;
        last = g.t;
        out.push((g.t, x, y, wrap_angle(th)));
    }
    Ok(out)
}

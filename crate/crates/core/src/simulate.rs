//! Synthetic datasets from a configured world, trajectory and sensor suite.

use crate::config::Config;
use crate::dataset::{Dataset, MagData, RawMagRecord, TruthRecord};
use crate::error::Result;
use crate::geometry::wrap_angle;
use crate::magnetostatics::MagWorld;
use crate::sensors::{
    simulate_array, simulate_gyro, simulate_wheel_odometry, GyroModel, MagArrayModel, WheelModel, TIME_EPS,
};
use crate::trajectory::Trajectory;
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rigid placement of the whole scene: the world and the vehicle are both
/// moved by `p ↦ R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

pub struct Simulation {
    pub dataset: Dataset,
    pub trajectory: Trajectory,
    pub world: MagWorld,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates gyro, magnetometer array, wheel odometry and truth streams.
/// Identical inputs give bit-identical output.
pub fn simulate_dataset(config: &Config, seed: u64, placement: Option<&Placement>) -> Result<Simulation> {
    config.validate()?;
    let s = &config.sensors;
    let noise = if s.noise_free { 0.0 } else { 1.0 };
    let trajectory = config.trajectory.build()?;
    let base_world = config.world.build()?;
    let world = match placement {
        Some(p) => base_world.transformed(&p.rotation, &p.translation),
        None => base_world,
    };

    let gyro_model = GyroModel::new(noise * s.gyro_noise_density, s.gyro_rate);
    let gyro = simulate_gyro(&trajectory, &gyro_model, &mut stream_rng(seed, 1));

    let mag_model = MagArrayModel::cross(s.array_baseline, noise * s.mag_noise_std, s.mag_rate);
    let mut mag_rng = stream_rng(seed, 2);
    let n = (trajectory.duration() * s.mag_rate + TIME_EPS).floor() as usize;
    let mut mag = Vec::with_capacity(n + 1);
    let mut truth = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 / s.mag_rate;
        let (c, r) = trajectory.pose3d_at(t, config.trajectory.sensor_height);
        let (c, r) = match placement {
            Some(p) => (p.rotation * c, p.rotation * r + p.translation),
            None => (c, r),
        };
        let readings = simulate_array(&world, &c, &r, &mag_model, &mut mag_rng)?;
        mag.push(RawMagRecord { t, readings });
        let (x, y, th) = trajectory.state_at(t);
        truth.push(TruthRecord {
            t,
            x,
            y,
            theta: wrap_angle(th),
        });
    }

    let wheel_model = WheelModel {
        scale_error_std: noise * s.wheel_scale_error_std,
        noise_std: noise * s.wheel_noise_std,
        rate_hz: s.wheel_rate,
    };
    let wheel = simulate_wheel_odometry(&trajectory, &wheel_model, &mut stream_rng(seed, 3));

    Ok(Simulation {
        dataset: Dataset {
            gyro,
            mag: MagData::Raw(mag),
            truth: Some(truth),
            wheel: Some(wheel),
        },
        trajectory,
        world,
    })
}

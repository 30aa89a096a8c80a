//! TOML configuration for simulation, estimation and loop closure.

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::loopclosure::DetectionSettings;
use crate::magnetostatics::{Dipole, MagWorld};
use crate::solver::SolverSettings;
use crate::trajectory::{Segment, Trajectory};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub world: WorldConfig,
    pub trajectory: TrajectoryConfig,
    pub sensors: SensorConfig,
    pub estimator: EstimatorConfig,
    pub solver: SolverSettings,
    pub loop_closure: LoopClosureConfig,
}

/// Copies of the dipole set shifted by multiples of `offset`, producing
/// repeated field signatures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeatConfig {
    pub copies: usize,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// µT, world frame.
    pub background: [f64; 3],
    /// Optional uniform gradient, row-major 3×3, µT/m.
    pub background_gradient: Option<[[f64; 3]; 3]>,
    pub dipole_constant: f64,
    pub exclusion_radius: f64,
    pub dipoles: Vec<Dipole>,
    pub repeat: Option<RepeatConfig>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            background: [20.0, 0.0, -45.0],
            background_gradient: None,
            dipole_constant: crate::magnetostatics::DEFAULT_DIPOLE_CONSTANT,
            exclusion_radius: crate::magnetostatics::DEFAULT_EXCLUSION_RADIUS,
            dipoles: Vec::new(),
            repeat: None,
        }
    }
}

impl WorldConfig {
    pub fn build(&self) -> Result<MagWorld> {
        let mut world = MagWorld::new(Vector3::from(self.background))
            .with_dipole_constant(self.dipole_constant)
            .with_exclusion_radius(self.exclusion_radius);
        if let Some(g) = self.background_gradient {
            let m = Matrix3::from_fn(|r, c| g[r][c]);
            world = world.with_background_gradient(m)?;
        }
        let copies = self.repeat.map(|r| r.copies.max(1)).unwrap_or(1);
        let offset = self.repeat.map(|r| Vector3::from(r.offset)).unwrap_or_else(Vector3::zeros);
        for c in 0..copies {
            let shift = offset * c as f64;
            for d in &self.dipoles {
                world = world.with_dipole(Vector3::from(d.position) + shift, Vector3::from(d.moment));
            }
        }
        Ok(world)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// `[x, y, heading]`.
    pub start: [f64; 3],
    /// Point-turn-and-drive legs through these points.
    pub waypoints: Vec<[f64; 2]>,
    /// Appended after the waypoints.
    pub segments: Vec<Segment>,
    /// Speeds cycled over successive legs, m/s.
    pub speeds: Vec<f64>,
    /// rad/s.
    pub turn_rate: f64,
    /// Phase durations are rounded up to multiples of this, s.
    pub quantum: f64,
    /// Height of the sensor plane, m.
    pub sensor_height: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            start: [0.0, 0.0, 0.0],
            waypoints: Vec::new(),
            segments: Vec::new(),
            speeds: vec![0.75],
            turn_rate: 0.8,
            quantum: 0.2,
            sensor_height: 0.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn start_pose(&self) -> Pose2 {
        Pose2::new(self.start[0], self.start[1], self.start[2])
    }

    pub fn build(&self) -> Result<Trajectory> {
        if self.speeds.is_empty() || self.speeds.iter().any(|s| *s <= 0.0) {
            return Err(Error::Config("trajectory.speeds must be positive and non-empty".into()));
        }
        if self.turn_rate <= 0.0 {
            return Err(Error::Config("trajectory.turn_rate must be positive".into()));
        }
        let mut traj =
            Trajectory::from_waypoints(self.start_pose(), &self.waypoints, &self.speeds, self.turn_rate, self.quantum);
        for s in &self.segments {
            traj.push_segment(*s, self.quantum);
        }
        if traj.duration() <= 0.0 {
            return Err(Error::Config("trajectory is empty".into()));
        }
        Ok(traj)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub gyro_rate: f64,
    /// rad/√s.
    pub gyro_noise_density: f64,
    pub mag_rate: f64,
    /// Per-axis white noise of each magnetometer, µT.
    pub mag_noise_std: f64,
    /// Cross-array baseline, m.
    pub array_baseline: f64,
    pub wheel_rate: f64,
    pub wheel_scale_error_std: f64,
    /// m/s.
    pub wheel_noise_std: f64,
    /// Disables every noise source.
    pub noise_free: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            gyro_rate: 50.0,
            gyro_noise_density: 0.005,
            mag_rate: 25.0,
            mag_noise_std: 0.05,
            array_baseline: 0.4,
            wheel_rate: 50.0,
            wheel_scale_error_std: 0.05,
            wheel_noise_std: 0.02,
            noise_free: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub keyframe_rate: f64,
    /// Gyro noise density assumed by the estimator, rad/√s.
    pub gyro_noise_density: f64,
    /// Standard deviations, µT.
    pub cd_std: f64,
    pub fd_std: f64,
    /// m.
    pub slip_std: f64,
    /// Loop-closure position standard deviation, m.
    pub loop_std: f64,
    /// Prior mean `[x, y, heading]`; the first truth sample or the trajectory
    /// start is used when absent.
    pub prior: Option<[f64; 3]>,
    /// Prior standard deviations `[heading, x, y]`.
    pub prior_std: [f64; 3],
    /// Forward speed assumed by the initial guess, m/s.
    pub nominal_speed: f64,
    /// Array baseline used to recover gradients from raw readings, m.
    pub array_baseline: f64,
    pub use_fd: bool,
    pub use_cd: bool,
    pub use_slip: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            keyframe_rate: 5.0,
            gyro_noise_density: 0.13,
            cd_std: 0.5,
            fd_std: 5.0,
            slip_std: 1e-4,
            loop_std: 3.5,
            prior: None,
            prior_std: [1e-3, 1e-3, 1e-3],
            nominal_speed: 0.0,
            array_baseline: 0.4,
            use_fd: true,
            use_cd: true,
            use_slip: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopClosureConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub min_separation: usize,
    pub window: usize,
    pub alpha: f64,
}

impl Default for LoopClosureConfig {
    fn default() -> Self {
        let d = DetectionSettings::default();
        Self {
            enabled: true,
            threshold: d.threshold,
            min_separation: d.min_separation,
            window: d.window,
            alpha: d.alpha,
        }
    }
}

impl LoopClosureConfig {
    pub fn detection(&self) -> DetectionSettings {
        DetectionSettings {
            threshold: self.threshold,
            min_separation: self.min_separation,
            window: self.window,
            alpha: self.alpha,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sensors.gyro_rate", self.sensors.gyro_rate),
            ("sensors.mag_rate", self.sensors.mag_rate),
            ("sensors.wheel_rate", self.sensors.wheel_rate),
            ("sensors.array_baseline", self.sensors.array_baseline),
            ("estimator.keyframe_rate", self.estimator.keyframe_rate),
            ("estimator.gyro_noise_density", self.estimator.gyro_noise_density),
            ("estimator.cd_std", self.estimator.cd_std),
            ("estimator.fd_std", self.estimator.fd_std),
            ("estimator.slip_std", self.estimator.slip_std),
            ("estimator.loop_std", self.estimator.loop_std),
            ("estimator.array_baseline", self.estimator.array_baseline),
            ("loop_closure.alpha", self.loop_closure.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.estimator.prior_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("estimator.prior_std entries must be positive".into()));
        }
        let ratio = self.sensors.mag_rate / self.estimator.keyframe_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config(format!(
                "sensors.mag_rate ({}) must be a whole multiple of estimator.keyframe_rate ({})",
                self.sensors.mag_rate, self.estimator.keyframe_rate
            )));
        }
        if self.loop_closure.min_separation == 0 {
            return Err(Error::Config("loop_closure.min_separation must be at least 1".into()));
        }
        Ok(())
    }
}

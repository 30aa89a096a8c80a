//! Ground-truth planar trajectories built from constant-twist phases.

use crate::geometry::{rot_z, Pose2};
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// A stretch of motion with constant forward speed and yaw rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    pub start_time: f64,
    pub duration: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    start: (f64, f64, f64),
}

impl Phase {
    fn state_at(&self, tau: f64) -> (f64, f64, f64) {
        let (x0, y0, th0) = self.start;
        let th = th0 + self.yaw_rate * tau;
        if self.yaw_rate.abs() < 1e-12 {
            let d = self.speed * tau;
            (x0 + d * th0.cos(), y0 + d * th0.sin(), th)
        } else {
            let r = self.speed / self.yaw_rate;
            (x0 + r * (th.sin() - th0.sin()), y0 - r * (th.cos() - th0.cos()), th)
        }
    }
}

/// Unicycle motion: the body never moves sideways.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    phases: Vec<Phase>,
    start: (f64, f64, f64),
}

/// Motion primitive used to assemble a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Straight { length: f64, speed: f64 },
    /// Rotation in place.
    Turn { angle: f64, rate: f64 },
    Arc { radius: f64, angle: f64, speed: f64 },
    Pause { duration: f64 },
}

impl Trajectory {
    pub fn new(start: Pose2) -> Self {
        Self {
            phases: Vec::new(),
            start: (start.position.x, start.position.y, start.heading()),
        }
    }

    pub fn duration(&self) -> f64 {
        self.phases
            .last()
            .map(|p| p.start_time + p.duration)
            .unwrap_or(0.0)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    fn end_state(&self) -> (f64, f64, f64) {
        match self.phases.last() {
            Some(p) => p.state_at(p.duration),
            None => self.start,
        }
    }

    /// Appends a constant-twist phase.
    pub fn push_phase(&mut self, duration: f64, speed: f64, yaw_rate: f64) {
        assert!(duration > 0.0, "phase duration must be positive");
        let start = self.end_state();
        let start_time = self.duration();
        self.phases.push(Phase {
            start_time,
            duration,
            speed,
            yaw_rate,
            start,
        });
    }

    /// Appends a segment, stretching its duration up to a whole number of
    /// `quantum` seconds (speed or rate is lowered to compensate).
    pub fn push_segment(&mut self, segment: Segment, quantum: f64) {
        let snap = |raw: f64| {
            if quantum > 0.0 {
                ((raw / quantum) - 1e-9).ceil().max(1.0) * quantum
            } else {
                raw
            }
        };
        match segment {
            Segment::Straight { length, speed } => {
                if length.abs() < 1e-12 {
                    return;
                }
                let dt = snap(length.abs() / speed);
                self.push_phase(dt, length / dt, 0.0);
            }
            Segment::Turn { angle, rate } => {
                if angle.abs() < 1e-12 {
                    return;
                }
                let dt = snap(angle.abs() / rate);
                self.push_phase(dt, 0.0, angle / dt);
            }
            Segment::Arc { radius, angle, speed } => {
                let dt = snap((radius * angle).abs() / speed);
                self.push_phase(dt, (radius * angle).abs() / dt, angle / dt);
            }
            Segment::Pause { duration } => self.push_phase(snap(duration), 0.0, 0.0),
        }
    }

    /// Point-turn-and-drive path through `waypoints`, cycling through `speeds`
    /// for successive legs.
    pub fn from_waypoints(
        start: Pose2,
        waypoints: &[[f64; 2]],
        speeds: &[f64],
        turn_rate: f64,
        quantum: f64,
    ) -> Self {
        let mut traj = Self::new(start);
        for (leg, wp) in waypoints.iter().enumerate() {
            let (x, y, th) = traj.end_state();
            let d = Vector2::new(wp[0] - x, wp[1] - y);
            let length = d.norm();
            if length < 1e-9 {
                continue;
            }
            let target = d.y.atan2(d.x);
            let turn = crate::geometry::wrap_angle(target - th);
            traj.push_segment(Segment::Turn { angle: turn, rate: turn_rate }, quantum);
            let speed = speeds[leg % speeds.len()];
            traj.push_segment(Segment::Straight { length, speed }, quantum);
        }
        traj
    }

    fn phase_index(&self, t: f64) -> Option<usize> {
        if self.phases.is_empty() {
            return None;
        }
        let idx = self.phases.partition_point(|p| p.start_time <= t);
        Some(idx.saturating_sub(1))
    }

    /// `(x, y, θ)` with θ unwrapped (continuous).
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        match self.phase_index(t) {
            None => self.start,
            Some(i) => {
                let p = &self.phases[i];
                p.state_at((t - p.start_time).clamp(0.0, p.duration))
            }
        }
    }

    pub fn pose_at(&self, t: f64) -> Pose2 {
        let (x, y, th) = self.state_at(t);
        Pose2::new(x, y, th)
    }

    /// Unwrapped heading.
    pub fn heading_at(&self, t: f64) -> f64 {
        self.state_at(t).2
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        self.phase_index(t)
            .map(|i| self.phases[i].speed)
            .unwrap_or(0.0)
    }

    /// Body-to-world rotation and sensor-centre position at `t`, with the
    /// sensor plane at height `height`.
    pub fn pose3d_at(&self, t: f64, height: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let (x, y, th) = self.state_at(t);
        (rot_z(th), Vector3::new(x, y, height))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn straight_then_turn() {
        let mut t = Trajectory::new(Pose2::identity());
        t.push_segment(Segment::Straight { length: 2.0, speed: 1.0 }, 0.2);
        t.push_segment(Segment::Turn { angle: PI / 2.0, rate: 1.0 }, 0.2);
        let (x, y, th) = t.state_at(2.0);
        assert_relative_eq!(x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(th, 0.0, epsilon = 1e-12);
        let end = t.state_at(t.duration());
        assert_relative_eq!(end.2, PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(end.0, 2.0, epsilon = 1e-12);
        // turn duration snapped to 1.6 s
        assert_relative_eq!(t.duration(), 3.6, epsilon = 1e-12);
    }

    #[test]
    fn arc_closes_circle() {
        let mut t = Trajectory::new(Pose2::identity());
        t.push_segment(Segment::Arc { radius: 2.0, angle: 2.0 * PI, speed: 1.0 }, 0.0);
        let (x, y, th) = t.state_at(t.duration());
        assert_relative_eq!(x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(th, 2.0 * PI, epsilon = 1e-12);
        let (_, y_half, _) = t.state_at(t.duration() / 2.0);
        assert_relative_eq!(y_half, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn waypoints_are_reached() {
        let wps = [[3.0, 0.0], [3.0, 2.0], [0.0, 2.0]];
        let t = Trajectory::from_waypoints(Pose2::identity(), &wps, &[0.7], 0.8, 0.2);
        let (x, y, _) = t.state_at(t.duration());
        assert_relative_eq!(x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(y, 2.0, epsilon = 1e-9);
        for p in t.phases() {
            let steps = p.duration / 0.2;
            assert!((steps - steps.round()).abs() < 1e-9);
            assert!(p.speed == 0.0 || p.yaw_rate == 0.0);
        }
    }
}

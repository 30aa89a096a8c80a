//! Trajectory error metrics: RMSE after first-pose alignment and NEES.

use crate::error::{Error, Result};
use crate::geometry::{se2_log, wrap_angle, Pose2};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// A timestamped pose, optionally with its body-frame covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedPose {
    pub t: f64,
    pub pose: Pose2,
    pub covariance: Option<Matrix3<f64>>,
}

impl StampedPose {
    pub fn new(t: f64, pose: Pose2) -> Self {
        Self {
            t,
            pose,
            covariance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub matched: usize,
    pub position_rmse: f64,
    pub attitude_rmse: f64,
    /// Present when every matched estimate carries a covariance.
    pub nees: Option<Vec<f64>>,
    pub nees_lower: f64,
    pub nees_upper: f64,
    pub fraction_within: Option<f64>,
}

impl MetricsReport {
    /// Summary without the NEES series.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::new();
        table.insert("matched".into(), (self.matched as i64).into());
        table.insert("position_rmse".into(), self.position_rmse.into());
        table.insert("attitude_rmse".into(), self.attitude_rmse.into());
        table.insert("nees_lower".into(), self.nees_lower.into());
        table.insert("nees_upper".into(), self.nees_upper.into());
        if let Some(f) = self.fraction_within {
            table.insert("fraction_within".into(), f.into());
        }
        toml::to_string(&table).expect("metrics serialize")
    }
}

/// Writes `t,nees,lower,upper` rows.
pub fn write_nees_csv(path: &Path, times: &[f64], report: &MetricsReport) -> Result<()> {
    let Some(nees) = &report.nees else {
        return Err(Error::InvalidData("estimate has no covariances; NEES unavailable".into()));
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "nees", "lower", "upper"])?;
    for (t, v) in times.iter().zip(nees) {
        w.write_record([t.to_string(), v.to_string(), report.nees_lower.to_string(), report.nees_upper.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Pairs each estimate with the nearest truth sample within `tolerance`
/// seconds. Both inputs must be sorted by time.
pub fn associate(estimate: &[StampedPose], truth: &[StampedPose], tolerance: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (k, e) in estimate.iter().enumerate() {
        let idx = truth.partition_point(|s| s.t < e.t);
        let mut best: Option<(usize, f64)> = None;
        for c in [idx.wrapping_sub(1), idx] {
            if let Some(s) = truth.get(c) {
                let gap = (s.t - e.t).abs();
                if gap <= tolerance && best.is_none_or(|(_, g)| gap < g) {
                    best = Some((c, gap));
                }
            }
        }
        if let Some((c, _)) = best {
            out.push((k, c));
        }
    }
    out
}

/// Two-sided χ² bounds at significance `alpha`.
pub fn nees_bounds(dof: usize, alpha: f64) -> (f64, f64) {
    let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    (chi.inverse_cdf(0.5 * alpha), chi.inverse_cdf(1.0 - 0.5 * alpha))
}

/// Aligns the estimate to the truth by the first matched pose (no scaling),
/// then reports RMSE over all matched samples and, when covariances are
/// available, the NEES series.
pub fn evaluate(estimate: &[StampedPose], truth: &[StampedPose], tolerance: f64, alpha: f64) -> Result<MetricsReport> {
    let pairs = associate(estimate, truth, tolerance);
    let Some(&(e0, t0)) = pairs.first() else {
        return Err(Error::NoOverlappingTimestamps);
    };
    let align = truth[t0].pose * estimate[e0].pose.inverse();

    let mut pos_sq = 0.0;
    let mut att_sq = 0.0;
    let mut nees = Vec::with_capacity(pairs.len());
    let mut have_cov = true;
    for &(e, t) in &pairs {
        let est = align * estimate[e].pose;
        let tru = truth[t].pose;
        pos_sq += (tru.position - est.position).norm_squared();
        att_sq += wrap_angle(tru.heading() - est.heading()).powi(2);
        match estimate[e].covariance {
            Some(p) if have_cov => {
                let d = se2_log(&(est.inverse() * tru)).to_vector();
                let value = p
                    .cholesky()
                    .and_then(|c| c.l().solve_lower_triangular(&d))
                    .map(|w| w.norm_squared())
                    .unwrap_or(f64::INFINITY);
                nees.push(value);
            }
            _ => have_cov = false,
        }
    }
    let n = pairs.len() as f64;
    let (lower, upper) = nees_bounds(3, alpha);
    let nees = have_cov.then_some(nees);
    let fraction_within = nees
        .as_ref()
        .map(|v| v.iter().filter(|&&x| x >= lower && x <= upper).count() as f64 / v.len() as f64);
    Ok(MetricsReport {
        matched: pairs.len(),
        position_rmse: (pos_sq / n).sqrt(),
        attitude_rmse: (att_sq / n).sqrt(),
        nees,
        nees_lower: lower,
        nees_upper: upper,
        fraction_within,
    })
}

/// Percentage change of `value` relative to `baseline`.
pub fn percent_change(baseline: f64, value: f64) -> f64 {
    100.0 * (value - baseline) / baseline
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(n: usize, dt: f64, shift: f64) -> Vec<StampedPose> {
        (0..n)
            .map(|k| StampedPose::new(k as f64 * dt, Pose2::new(k as f64 * 0.1 + shift, 0.0, 0.0)))
            .collect()
    }

    #[test]
    fn identical_trajectories() {
        let mut est = line(20, 0.2, 0.0);
        for e in &mut est {
            e.covariance = Some(Matrix3::identity() * 0.01);
        }
        let r = evaluate(&est, &line(20, 0.2, 0.0), 0.1, 0.05).unwrap();
        assert_eq!(r.matched, 20);
        assert_eq!(r.position_rmse, 0.0);
        assert_eq!(r.attitude_rmse, 0.0);
        assert!(r.nees.unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_offset_is_aligned_away() {
        let r = evaluate(&line(20, 0.2, 1.0), &line(20, 0.2, 0.0), 0.1, 0.05).unwrap();
        assert!(r.position_rmse < 1e-12);
        assert!(r.nees.is_none());
    }

    #[test]
    fn late_offset_shows_in_rmse() {
        let truth = line(10, 0.2, 0.0);
        let mut est = truth.clone();
        for e in est.iter_mut().skip(5) {
            e.pose.position.y += 1.0;
        }
        let r = evaluate(&est, &truth, 0.1, 0.05).unwrap();
        assert_relative_eq!(r.position_rmse, (0.5f64).sqrt(), epsilon = 1e-12);
        assert_eq!(r.attitude_rmse, 0.0);
    }

    #[test]
    fn disjoint_times_fail() {
        let truth = line(5, 0.2, 0.0);
        let est: Vec<_> = truth.iter().map(|s| StampedPose::new(s.t + 100.0, s.pose)).collect();
        assert!(matches!(evaluate(&est, &truth, 0.1, 0.05), Err(Error::NoOverlappingTimestamps)));
    }

    #[test]
    fn association_picks_nearest() {
        let truth = line(10, 0.1, 0.0);
        let est = vec![StampedPose::new(0.34, Pose2::identity()), StampedPose::new(5.0, Pose2::identity())];
        assert_eq!(associate(&est, &truth, 0.05), vec![(0, 3)]);
    }
}

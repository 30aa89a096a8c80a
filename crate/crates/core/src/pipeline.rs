//! End-to-end estimation: keyframes, problem assembly, two-pass solve with
//! loop closure, dead-reckoning baseline and ablations.

use crate::config::{Config, EstimatorConfig};
use crate::dataset::{Dataset, MagData};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::loopclosure::{combined_distance, extract_candidates, gate_candidates, DistanceMatrix, LoopCandidate};
use crate::magnetostatics::{invariants, FieldSample, InvariantTriple};
use crate::metrics::{evaluate, percent_change, MetricsReport, StampedPose};
use crate::sensors::{dead_reckon, preintegrate_between, recover_gradient, ArrayGeometry, GyroIncrement};
use crate::solver::{
    build_initial_guess, solve, solve_positions, Covariances, EstimationProblem, Measurement, ResidualBlock, ResidualKind, SolveReport,
};
use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Keyframe-rate view of a dataset.
#[derive(Clone, Debug)]
pub struct Keyframes {
    pub times: Vec<f64>,
    pub samples: Vec<FieldSample>,
    /// `increments[k]` spans keyframes `k` to `k + 1`.
    pub increments: Vec<GyroIncrement>,
}

impl Keyframes {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn invariants(&self) -> Vec<InvariantTriple> {
        self.samples.iter().map(invariants).collect()
    }
}

/// Decimates the magnetometer stream to the keyframe rate and preintegrates
/// the gyro between keyframes.
pub fn build_keyframes(dataset: &Dataset, est: &EstimatorConfig) -> Result<Keyframes> {
    if dataset.mag.is_empty() || dataset.gyro.is_empty() {
        return Err(Error::InvalidData("dataset needs gyro and magnetometer samples".into()));
    }
    let period = 1.0 / est.keyframe_rate;
    let last_gyro = dataset.gyro.last().unwrap().t;
    let mag_times = dataset.mag.times();
    let mut picked = Vec::new();
    let mut next = f64::NEG_INFINITY;
    for (i, &t) in mag_times.iter().enumerate() {
        if t > last_gyro + 1e-9 {
            break;
        }
        if t >= next - 1e-6 {
            picked.push(i);
            next = t + period;
        }
    }
    if picked.len() < 2 {
        return Err(Error::InvalidData("fewer than two keyframes overlap the gyro stream".into()));
    }
    let geometry = ArrayGeometry::cross(est.array_baseline);
    let samples = picked
        .iter()
        .map(|&i| match &dataset.mag {
            MagData::Raw(v) => recover_gradient(v[i].t, &v[i].readings, &geometry),
            MagData::Processed(v) => Ok(v[i].clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = picked.iter().map(|&i| mag_times[i]).collect();
    let q = est.gyro_noise_density * est.gyro_noise_density;
    let increments = times
        .windows(2)
        .map(|w| preintegrate_between(&dataset.gyro, w[0], w[1], q))
        .collect::<Result<Vec<_>>>()?;
    Ok(Keyframes {
        times,
        samples,
        increments,
    })
}

/// Which terms enter the problem and whether the loop-closure pass runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimateOptions {
    pub loops: bool,
    pub use_fd: bool,
    pub use_cd: bool,
    pub use_slip: bool,
    /// Attach per-pose marginal covariances to the result.
    pub covariances: bool,
}

impl EstimateOptions {
    pub fn from_config(config: &Config) -> Self {
        Self {
            loops: config.loop_closure.enabled,
            use_fd: config.estimator.use_fd,
            use_cd: config.estimator.use_cd,
            use_slip: config.estimator.use_slip,
            covariances: true,
        }
    }
}

/// Prior mean: configured, else the first truth sample, else the identity.
pub fn prior_pose(dataset: &Dataset, est: &EstimatorConfig) -> Pose2 {
    if let Some(p) = est.prior {
        return Pose2::new(p[0], p[1], p[2]);
    }
    dataset
        .truth
        .as_ref()
        .and_then(|t| t.first())
        .map(|s| s.pose())
        .unwrap_or_else(Pose2::identity)
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Assembles prior, gyro, magnetic and slip blocks over the keyframes.
pub fn build_problem(
    kf: &Keyframes,
    est: &EstimatorConfig,
    options: &EstimateOptions,
    prior: Pose2,
    initial: Vec<Pose2>,
    config: &Config,
) -> Result<EstimationProblem> {
    let k = kf.len();
    let mut p = EstimationProblem::new(initial, config.solver);
    let ps = est.prior_std;
    p.add(ResidualBlock::new(
        Measurement::Prior { mean: prior },
        vec![0],
        diag(&[ps[0] * ps[0], ps[1] * ps[1], ps[2] * ps[2]]),
    )?);
    for (i, inc) in kf.increments.iter().enumerate() {
        p.add(ResidualBlock::new(
            Measurement::Gyro {
                delta_theta: inc.delta_theta,
            },
            vec![i, i + 1],
            DMatrix::from_element(1, 1, inc.variance),
        )?);
    }
    for b in 1..k {
        let a = b - 1;
        if options.use_fd {
            p.add(ResidualBlock::isotropic(
                Measurement::FdMag {
                    field_alpha: kf.samples[a].field,
                    field_beta: kf.samples[b].field,
                    gradient_beta: kf.samples[b].gradient,
                },
                vec![a, b],
                est.fd_std,
            )?);
        }
        if options.use_slip {
            p.add(ResidualBlock::isotropic(Measurement::Slip, vec![a, b], est.slip_std)?);
        }
        if options.use_cd && b + 1 < k {
            p.add(ResidualBlock::isotropic(
                Measurement::CdMag {
                    field_alpha: kf.samples[a].field,
                    field_gamma: kf.samples[b + 1].field,
                    gradient_beta: kf.samples[b].gradient,
                },
                vec![a, b, b + 1],
                est.cd_std,
            )?);
        }
    }
    Ok(p)
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub times: Vec<f64>,
    pub poses: Vec<Pose2>,
    /// Body-frame marginal covariance per keyframe.
    pub covariances: Option<Vec<Matrix3<f64>>>,
    /// Solve without loop closures.
    pub first_pass: SolveReport,
    /// Solve after adding accepted loops (equal to `first_pass` without them).
    pub report: SolveReport,
    /// Gated loop candidates, accepted or not.
    pub candidates: Vec<LoopCandidate>,
    pub distance: Option<DistanceMatrix>,
}

impl Estimate {
    pub fn stamped(&self) -> Vec<StampedPose> {
        self.times
            .iter()
            .zip(&self.poses)
            .enumerate()
            .map(|(k, (&t, &pose))| StampedPose {
                t,
                pose,
                covariance: self.covariances.as_ref().map(|c| c[k]),
            })
            .collect()
    }

    pub fn accepted_loops(&self) -> Vec<LoopCandidate> {
        self.candidates.iter().filter(|c| c.accepted).copied().collect()
    }
}

/// Runs the full pipeline: no-loop solve, then (optionally) detection and
/// gating against that solution, then a warm-started solve with the
/// accepted loop blocks.
pub fn estimate(dataset: &Dataset, config: &Config, options: &EstimateOptions) -> Result<Estimate> {
    config.validate()?;
    let est = &config.estimator;
    let kf = build_keyframes(dataset, est)?;
    let prior = prior_pose(dataset, est);
    let initial = build_initial_guess(&kf.increments, &prior, 1.0 / est.keyframe_rate, est.nominal_speed);
    let mut problem = build_problem(&kf, est, options, prior, initial, config)?;
    problem.poses = solve_positions(&problem)?;
    let (poses, first_pass) = solve(&problem)?;
    problem.poses = poses;
    log::info!(
        "first pass: {} iterations, cost {:.6e} -> {:.6e}",
        first_pass.iterations,
        first_pass.initial_cost,
        first_pass.final_cost
    );

    let mut candidates = Vec::new();
    let mut distance = None;
    let mut report = first_pass.clone();
    let mut covariances = None;
    if options.loops {
        let cov = Covariances::new(&problem)?;
        let d = combined_distance(&kf.invariants())?;
        let det = config.loop_closure.detection();
        let raw = extract_candidates(&d, det.threshold, det.min_separation, det.window);
        candidates = gate_candidates(&raw, &problem.poses, &cov, det.alpha);
        distance = Some(d);
        let accepted: Vec<_> = candidates.iter().filter(|c| c.accepted).collect();
        log::info!("{} loop candidates, {} accepted", candidates.len(), accepted.len());
        if accepted.is_empty() {
            covariances = Some(cov);
        } else {
            for c in accepted {
                problem.add(ResidualBlock::isotropic(Measurement::Loop, vec![c.i, c.j], est.loop_std)?);
            }
            let (poses, second) = solve(&problem)?;
            problem.poses = poses;
            report = second;
        }
    }
    let marginals = if options.covariances {
        let cov = match covariances {
            Some(c) => c,
            None => Covariances::new(&problem)?,
        };
        Some((0..problem.num_poses()).into_par_iter().map(|k| cov.marginal(k)).collect())
    } else {
        None
    };
    Ok(Estimate {
        times: kf.times,
        poses: problem.poses,
        covariances: marginals,
        first_pass,
        report,
        candidates,
        distance,
    })
}

/// Gyro heading plus wheel speed, sampled at the keyframe times.
pub fn dead_reckoning(dataset: &Dataset, config: &Config) -> Result<Vec<StampedPose>> {
    let wheel = dataset
        .wheel
        .as_ref()
        .ok_or_else(|| Error::InvalidData("dead reckoning needs wheel.csv".into()))?;
    let kf = build_keyframes(dataset, &config.estimator)?;
    let prior = prior_pose(dataset, &config.estimator);
    let t0 = kf.times[0];
    let lo = dataset.gyro.partition_point(|g| g.t <= t0 + 1e-9);
    let wlo = wheel.partition_point(|w| w.t <= t0 + 1e-9);
    let track = dead_reckon(
        &dataset.gyro[lo..],
        &wheel[wlo..],
        (prior.position.x, prior.position.y, prior.heading()),
        t0,
    )?;
    let mut out = Vec::with_capacity(kf.len());
    let mut cursor = 0;
    for &t in &kf.times {
        while cursor + 1 < track.len() && track[cursor + 1].0 <= t + 1e-9 {
            cursor += 1;
        }
        let (_, x, y, th) = track[cursor];
        out.push(StampedPose::new(t, Pose2::new(x, y, th)));
    }
    Ok(out)
}

/// Compares a keyframe-rate trajectory with the dataset's truth.
pub fn score(dataset: &Dataset, config: &Config, poses: &[StampedPose]) -> Result<MetricsReport> {
    let truth: Vec<StampedPose> = dataset
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidData("metrics need truth.csv".into()))?
        .iter()
        .map(|t| t.stamped())
        .collect();
    evaluate(poses, &truth, 0.5 / config.estimator.keyframe_rate, config.loop_closure.alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub position_rmse: f64,
    pub attitude_rmse: f64,
    pub position_change_pct: f64,
    pub attitude_change_pct: f64,
}

/// Baseline and drop-one variants for FD, slip and CD terms.
pub fn ablate(dataset: &Dataset, config: &Config) -> Result<Vec<AblationRow>> {
    let base = EstimateOptions {
        covariances: false,
        ..EstimateOptions::from_config(config)
    };
    let variants = [
        ("baseline", base),
        ("drop_fd", EstimateOptions { use_fd: false, ..base }),
        ("drop_slip", EstimateOptions { use_slip: false, ..base }),
        ("drop_cd", EstimateOptions { use_cd: false, ..base }),
    ];
    let scores = variants
        .par_iter()
        .map(|(_, opts)| {
            let e = estimate(dataset, config, opts)?;
            score(dataset, config, &e.stamped())
        })
        .collect::<Result<Vec<_>>>()?;
    let (bp, ba) = (scores[0].position_rmse, scores[0].attitude_rmse);
    Ok(variants
        .iter()
        .zip(&scores)
        .map(|((name, _), s)| AblationRow {
            variant: name.to_string(),
            position_rmse: s.position_rmse,
            attitude_rmse: s.attitude_rmse,
            position_change_pct: percent_change(bp, s.position_rmse),
            attitude_change_pct: percent_change(ba, s.attitude_rmse),
        })
        .collect())
}

/// Writes `variant,position_rmse,attitude_rmse,position_change_pct,attitude_change_pct`.
pub fn write_ablation_csv(path: &std::path::Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Counts of each residual kind in a problem, in a fixed order.
pub fn block_counts(problem: &EstimationProblem) -> Vec<(ResidualKind, usize)> {
    let kinds = [
        ResidualKind::Prior,
        ResidualKind::Gyro,
        ResidualKind::FdMag,
        ResidualKind::CdMag,
        ResidualKind::Slip,
        ResidualKind::Loop,
    ];
    kinds
        .iter()
        .map(|k| (*k, problem.blocks.iter().filter(|b| b.kind() == *k).count()))
        .collect()
}

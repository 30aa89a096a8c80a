//! Batch on-manifold weighted least squares over SE(2) poses.
//!
//! Gauss–Newton on the left-perturbed tangent space, with Levenberg-style
//! diagonal damping that only switches on when a plain step fails to lower
//! the cost. Normal equations live in profile storage ([`skyline`]).

pub mod skyline;

use crate::error::{Error, Result};
use crate::geometry::{between_log, retract_to_body, retract_to_left, Pose2};
use crate::magnetostatics::Vector5;
use crate::residuals;
use crate::sensors::GyroIncrement;
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skyline::{SkylineCholesky, SkylineMatrix};

/// Pivot threshold (relative to the diagonal) below which the information
/// matrix is declared singular.
const PIVOT_REL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Prior,
    Gyro,
    FdMag,
    CdMag,
    Slip,
    Loop,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Measurement {
    Prior { mean: Pose2 },
    Gyro { delta_theta: f64 },
    FdMag {
        field_alpha: Vector3<f64>,
        field_beta: Vector3<f64>,
        gradient_beta: Vector5,
    },
    CdMag {
        field_alpha: Vector3<f64>,
        field_gamma: Vector3<f64>,
        gradient_beta: Vector5,
    },
    Slip,
    Loop,
}

impl Measurement {
    pub fn kind(&self) -> ResidualKind {
        match self {
            Measurement::Prior { .. } => ResidualKind::Prior,
            Measurement::Gyro { .. } => ResidualKind::Gyro,
            Measurement::FdMag { .. } => ResidualKind::FdMag,
            Measurement::CdMag { .. } => ResidualKind::CdMag,
            Measurement::Slip => ResidualKind::Slip,
            Measurement::Loop => ResidualKind::Loop,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            Measurement::Prior { .. } => (3, 1),
            Measurement::Gyro { .. } => (1, 2),
            Measurement::FdMag { .. } => (3, 2),
            Measurement::CdMag { .. } => (3, 3),
            Measurement::Slip => (1, 2),
            Measurement::Loop => (2, 2),
        }
    }
}

/// One error term: measurement payload, the poses it touches and its noise.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    measurement: Measurement,
    poses: Vec<usize>,
    covariance: DMatrix<f64>,
    /// `L⁻¹` with `covariance = L·Lᵀ`.
    whitener: DMatrix<f64>,
}

fn to_dynamic_3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn to_dynamic<const M: usize, const N: usize>(
    lin: residuals::Linearized<M, N>,
) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    let r = DVector::from_column_slice(lin.residual.as_slice());
    let j = lin
        .jacobians
        .iter()
        .map(|j: &SMatrix<f64, M, 3>| DMatrix::from_column_slice(M, 3, j.as_slice()))
        .collect();
    (r, j)
}

impl ResidualBlock {
    pub fn new(measurement: Measurement, poses: Vec<usize>, covariance: DMatrix<f64>) -> Result<Self> {
        let (dim, arity) = measurement.shape();
        if poses.len() != arity {
            return Err(Error::InvalidProblem(format!(
                "{:?} block needs {arity} poses, got {}",
                measurement.kind(),
                poses.len()
            )));
        }
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::InvalidProblem(format!(
                "{:?} block needs a {dim}x{dim} covariance",
                measurement.kind()
            )));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 * covariance.amax() {
            return Err(Error::InvalidProblem("covariance is not symmetric".into()));
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidProblem("covariance is not positive definite".into()))?;
        let whitener = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::InvalidProblem("covariance factor is singular".into()))?;
        Ok(Self {
            measurement,
            poses,
            covariance,
            whitener,
        })
    }

    /// Block with isotropic covariance `σ²·I`.
    pub fn isotropic(measurement: Measurement, poses: Vec<usize>, sigma: f64) -> Result<Self> {
        let dim = measurement.shape().0;
        Self::new(measurement, poses, DMatrix::identity(dim, dim) * (sigma * sigma))
    }

    pub fn kind(&self) -> ResidualKind {
        self.measurement.kind()
    }

    pub fn measurement(&self) -> &Measurement {
        &self.measurement
    }

    pub fn poses(&self) -> &[usize] {
        &self.poses
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Unwhitened residual and per-pose Jacobians.
    pub fn evaluate(&self, states: &[Pose2]) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let p = |k: usize| &states[self.poses[k]];
        match &self.measurement {
            Measurement::Prior { mean } => to_dynamic(residuals::prior_error(p(0), mean)),
            Measurement::Gyro { delta_theta } => to_dynamic(residuals::gyro_error(p(0), p(1), *delta_theta)),
            Measurement::FdMag {
                field_alpha,
                field_beta,
                gradient_beta,
            } => to_dynamic(residuals::fd_mag_error(p(0), p(1), field_alpha, field_beta, gradient_beta)),
            Measurement::CdMag {
                field_alpha,
                field_gamma,
                gradient_beta,
            } => to_dynamic(residuals::cd_mag_error(
                p(0),
                p(1),
                p(2),
                field_alpha,
                field_gamma,
                gradient_beta,
            )),
            Measurement::Slip => to_dynamic(residuals::slip_error(p(0), p(1))),
            Measurement::Loop => to_dynamic(residuals::loop_error(p(0), p(1))),
        }
    }

    /// Whitened residual and Jacobians with respect to the solver's
    /// increment (see [`Pose2::retract`]).
    fn whitened(&self, states: &[Pose2]) -> (DVector<f64>, Vec<DMatrix<f64>>) {
        let (r, jac) = self.evaluate(states);
        let jac = jac
            .iter()
            .zip(&self.poses)
            .map(|(j, &k)| &self.whitener * j * to_dynamic_3(&retract_to_left(&states[k])))
            .collect();
        (&self.whitener * r, jac)
    }

    /// `½·‖e‖²` in the block's Mahalanobis metric.
    pub fn cost(&self, states: &[Pose2]) -> f64 {
        let (r, _) = self.evaluate(states);
        0.5 * (&self.whitener * r).norm_squared()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    /// Damping used after the first rejected Gauss–Newton step.
    pub initial_damping: f64,
    /// Damping beyond which the solver gives up on finding a decrease.
    pub max_damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tolerance: 1e-8,
            cost_tolerance: 1e-10,
            initial_damping: 1e-6,
            max_damping: 1e12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimationProblem {
    pub poses: Vec<Pose2>,
    pub blocks: Vec<ResidualBlock>,
    pub settings: SolverSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceReason {
    StepTolerance,
    CostTolerance,
    MaxIterations,
    /// Damping saturated without finding a lower cost.
    NoDecrease,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub reason: ConvergenceReason,
    pub cost_trace: Vec<f64>,
}

impl SolveReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

struct NormalEquations {
    hessian: SkylineMatrix,
    gradient: Vec<f64>,
}

impl EstimationProblem {
    pub fn new(poses: Vec<Pose2>, settings: SolverSettings) -> Self {
        Self {
            poses,
            blocks: Vec::new(),
            settings,
        }
    }

    pub fn add(&mut self, block: ResidualBlock) {
        self.blocks.push(block);
    }

    pub fn num_poses(&self) -> usize {
        self.poses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.poses.len();
        if k == 0 {
            return Err(Error::InvalidProblem("no poses".into()));
        }
        let mut priors = 0;
        for b in &self.blocks {
            let idx = b.poses();
            if idx.iter().any(|&i| i >= k) {
                return Err(Error::InvalidProblem(format!("{:?} block references pose out of range", b.kind())));
            }
            for (a, x) in idx.iter().enumerate() {
                if idx[a + 1..].contains(x) {
                    return Err(Error::InvalidProblem(format!("{:?} block repeats pose {x}", b.kind())));
                }
            }
            let consecutive = idx.windows(2).all(|w| w[1] == w[0] + 1);
            match b.kind() {
                ResidualKind::Prior => priors += 1,
                ResidualKind::Gyro | ResidualKind::FdMag | ResidualKind::Slip | ResidualKind::CdMag => {
                    if !consecutive {
                        return Err(Error::InvalidProblem(format!(
                            "{:?} block must join consecutive keyframes, got {idx:?}",
                            b.kind()
                        )));
                    }
                }
                ResidualKind::Loop => {}
            }
        }
        if priors > 1 {
            return Err(Error::InvalidProblem(format!("{priors} prior blocks, expected one")));
        }
        if !self.poses.iter().all(Pose2::is_finite) {
            return Err(Error::InvalidProblem("non-finite initial pose".into()));
        }
        Ok(())
    }

    pub fn cost_at(&self, states: &[Pose2]) -> f64 {
        self.blocks.par_iter().map(|b| b.cost(states)).sum()
    }

    pub fn cost(&self) -> f64 {
        self.cost_at(&self.poses)
    }

    fn profile(&self) -> Vec<usize> {
        let k = self.poses.len();
        let mut lowest: Vec<usize> = (0..k).collect();
        for b in &self.blocks {
            let lo = *b.poses().iter().min().unwrap();
            for &p in b.poses() {
                lowest[p] = lowest[p].min(lo);
            }
        }
        (0..3 * k).map(|row| 3 * lowest[row / 3]).collect()
    }

    fn normal_equations(&self, states: &[Pose2]) -> NormalEquations {
        let lins: Vec<_> = self.blocks.par_iter().map(|b| b.whitened(states)).collect();
        let mut hessian = SkylineMatrix::new(self.profile());
        let mut gradient = vec![0.0; 3 * states.len()];
        for (block, (r, jac)) in self.blocks.iter().zip(&lins) {
            let idx = block.poses();
            for (a, ja) in jac.iter().enumerate() {
                let ga = ja.transpose() * r;
                for row in 0..3 {
                    gradient[3 * idx[a] + row] += ga[row];
                }
                for (b, jb) in jac.iter().enumerate() {
                    if idx[b] > idx[a] {
                        continue;
                    }
                    let h = ja.transpose() * jb;
                    for r_ in 0..3 {
                        for c_ in 0..3 {
                            let (gr, gc) = (3 * idx[a] + r_, 3 * idx[b] + c_);
                            if gc <= gr {
                                hessian.add(gr, gc, h[(r_, c_)]);
                            }
                        }
                    }
                }
            }
        }
        NormalEquations { hessian, gradient }
    }

    /// Factor of the Gauss–Newton information matrix at `states`.
    fn information_factor(&self, states: &[Pose2]) -> Result<SkylineCholesky> {
        self.normal_equations(states)
            .hessian
            .cholesky(PIVOT_REL_TOL)
            .map_err(|e| Error::SingularInformation { pose: e.index / 3 })
    }
}

/// Undamped Gauss–Newton step at the problem's current poses, stacked as
/// `(φ, ρx, ρy)` per pose.
pub fn gauss_newton_step(problem: &EstimationProblem) -> Result<Vec<f64>> {
    let ne = problem.normal_equations(&problem.poses);
    let factor = ne
        .hessian
        .cholesky(PIVOT_REL_TOL)
        .map_err(|e| Error::SingularNormalEquations { pose: e.index / 3 })?;
    let mut step: Vec<f64> = ne.gradient.iter().map(|g| -g).collect();
    factor.solve_in_place(&mut step);
    Ok(step)
}

/// Least-squares positions with every heading held at its current value.
///
/// The magnetic and slip residuals are linear in position once headings are
/// fixed, so a single step lands on the positional optimum. Used to refine a
/// dead-reckoned starting point before the full solve.
pub fn solve_positions(problem: &EstimationProblem) -> Result<Vec<Pose2>> {
    problem.validate()?;
    let mut ne = problem.normal_equations(&problem.poses);
    for k in 0..problem.num_poses() {
        ne.hessian.pin(3 * k);
        ne.gradient[3 * k] = 0.0;
    }
    let factor = ne
        .hessian
        .cholesky(PIVOT_REL_TOL)
        .map_err(|e| Error::SingularNormalEquations { pose: e.index / 3 })?;
    let mut step: Vec<f64> = ne.gradient.iter().map(|g| -g).collect();
    factor.solve_in_place(&mut step);
    Ok(problem
        .poses
        .iter()
        .enumerate()
        .map(|(k, p)| p.retract(&Vector3::new(0.0, step[3 * k + 1], step[3 * k + 2])))
        .collect())
}

/// Minimizes the problem from its current poses.
pub fn solve(problem: &EstimationProblem) -> Result<(Vec<Pose2>, SolveReport)> {
    problem.validate()?;
    let s = problem.settings;
    let mut states = problem.poses.clone();
    let mut cost = problem.cost_at(&states);
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost { iteration: 0 });
    }
    let initial_cost = cost;
    let mut trace = vec![cost];
    let mut damping = 0.0;
    let mut reason = ConvergenceReason::MaxIterations;
    let mut iterations = 0;

    let mut growth = 2.0;
    'outer: while iterations < s.max_iterations {
        iterations += 1;
        let ne = problem.normal_equations(&states);
        let diag: Vec<f64> = ne.hessian.diagonal().iter().map(|d| d.max(1e-12)).collect();
        loop {
            let mut h = ne.hessian.clone();
            if damping > 0.0 {
                for (i, d) in diag.iter().enumerate() {
                    h.add_to_diagonal(i, damping * d);
                }
            }
            let factor = match h.cholesky(PIVOT_REL_TOL) {
                Ok(f) => f,
                Err(e) if damping == 0.0 => {
                    return Err(Error::SingularNormalEquations { pose: e.index / 3 });
                }
                Err(_) => {
                    damping *= 10.0;
                    if damping > s.max_damping {
                        reason = ConvergenceReason::NoDecrease;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut step: Vec<f64> = ne.gradient.iter().map(|g| -g).collect();
            factor.solve_in_place(&mut step);
            let max_step = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // model decrease ½·hᵀ(λ·D·h - g)
            let predicted: f64 = 0.5
                * step
                    .iter()
                    .zip(&ne.gradient)
                    .zip(&diag)
                    .map(|((h, g), d)| h * (damping * d * h - g))
                    .sum::<f64>();
            let candidate: Vec<Pose2> = states
                .iter()
                .enumerate()
                .map(|(k, p)| p.retract(&Vector3::new(step[3 * k], step[3 * k + 1], step[3 * k + 2])))
                .collect();
            let new_cost = problem.cost_at(&candidate);
            log::debug!(
                "iteration {iterations}: damping {damping:.1e}, max step {max_step:.3e}, cost {cost:.6e} -> {new_cost:.6e}"
            );

            if new_cost.is_finite() && new_cost <= cost {
                let decrease = cost - new_cost;
                states = candidate;
                let prev = cost;
                cost = new_cost;
                trace.push(cost);
                if damping > 0.0 {
                    let rho = if predicted > 0.0 { decrease / predicted } else { 0.0 };
                    damping *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                    growth = 2.0;
                    if damping < s.initial_damping * 1e-6 {
                        damping = 0.0;
                    }
                }
                if max_step < s.step_tolerance {
                    reason = ConvergenceReason::StepTolerance;
                    break 'outer;
                }
                if prev <= f64::MIN_POSITIVE || decrease <= s.cost_tolerance * prev {
                    reason = ConvergenceReason::CostTolerance;
                    break 'outer;
                }
                break;
            }
            if max_step < s.step_tolerance {
                reason = ConvergenceReason::StepTolerance;
                break 'outer;
            }
            if damping == 0.0 {
                damping = s.initial_damping;
                growth = 2.0;
            } else {
                damping *= growth;
                growth *= 2.0;
            }
            if damping > s.max_damping {
                reason = ConvergenceReason::NoDecrease;
                break 'outer;
            }
        }
    }
    if !cost.is_finite() {
        return Err(Error::NonFiniteCost { iteration: iterations });
    }
    Ok((
        states,
        SolveReport {
            iterations,
            initial_cost,
            final_cost: cost,
            reason,
            cost_trace: trace,
        },
    ))
}

/// Dead-reckoned starting trajectory: headings chained from the gyro
/// increments, positions advanced at `nominal_speed` along the mean heading of
/// each interval. With zero speed every position stays at the prior.
pub fn build_initial_guess(
    increments: &[GyroIncrement],
    prior: &Pose2,
    keyframe_period: f64,
    nominal_speed: f64,
) -> Vec<Pose2> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut heading = prior.heading();
    let mut pos = prior.position;
    out.push(*prior);
    for inc in increments {
        let mid = heading + 0.5 * inc.delta_theta;
        pos += nominal_speed * keyframe_period * nalgebra::Vector2::new(mid.cos(), mid.sin());
        heading += inc.delta_theta;
        out.push(Pose2::new(pos.x, pos.y, heading));
    }
    out
}

/// Block covariances read off a factored information matrix, in each pose's
/// body frame (`T = T̂·exp(δ)`).
pub struct Covariances {
    factor: SkylineCholesky,
    poses: Vec<Pose2>,
}

impl Covariances {
    /// Factors the information matrix at the problem's current poses.
    pub fn new(problem: &EstimationProblem) -> Result<Self> {
        let factor = problem.information_factor(&problem.poses)?;
        Ok(Self {
            factor,
            poses: problem.poses.clone(),
        })
    }

    fn raw_joint(&self, i: usize, j: usize) -> SMatrix<f64, 6, 6> {
        let cols = [3 * i, 3 * i + 1, 3 * i + 2, 3 * j, 3 * j + 1, 3 * j + 2];
        let b = self.factor.inverse_block(&cols);
        SMatrix::<f64, 6, 6>::from_fn(|r, c| 0.5 * (b[(r, c)] + b[(c, r)]))
    }

    pub fn marginal(&self, i: usize) -> Matrix3<f64> {
        let b = self.factor.inverse_block(&[3 * i, 3 * i + 1, 3 * i + 2]);
        let raw = Matrix3::from_fn(|r, c| 0.5 * (b[(r, c)] + b[(c, r)]));
        let m = retract_to_body(&self.poses[i]);
        let s = m * raw * m.transpose();
        0.5 * (s + s.transpose())
    }

    /// 6×6 joint covariance of poses `i` then `j`.
    pub fn joint(&self, i: usize, j: usize) -> SMatrix<f64, 6, 6> {
        let mut m = SMatrix::<f64, 6, 6>::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&retract_to_body(&self.poses[i]));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&retract_to_body(&self.poses[j]));
        let s = m * self.raw_joint(i, j) * m.transpose();
        0.5 * (s + s.transpose())
    }

    /// Covariance of `log(Tᵢ⁻¹Tⱼ)^∨` by first-order propagation.
    pub fn relative(&self, i: usize, j: usize) -> Matrix3<f64> {
        let (_, ji, jj) = between_log(&self.poses[i], &self.poses[j]);
        let mut jac = SMatrix::<f64, 3, 6>::zeros();
        jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ji * retract_to_left(&self.poses[i])));
        jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(jj * retract_to_left(&self.poses[j])));
        let s = jac * self.raw_joint(i, j) * jac.transpose();
        0.5 * (s + s.transpose())
    }
}

pub fn marginal_covariance(problem: &EstimationProblem, i: usize, j: usize) -> Result<SMatrix<f64, 6, 6>> {
    Ok(Covariances::new(problem)?.joint(i, j))
}

pub fn relative_covariance(problem: &EstimationProblem, i: usize, j: usize) -> Result<Matrix3<f64>> {
    Ok(Covariances::new(problem)?.relative(i, j))
}

/// Whitened residual vector of all blocks, in block order.
pub fn stacked_residuals(problem: &EstimationProblem) -> DVector<f64> {
    let parts: Vec<DVector<f64>> = problem.blocks.iter().map(|b| b.whitened(&problem.poses).0).collect();
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(&p);
        at += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b, c]))
    }

    #[test]
    fn prior_only_returns_prior() {
        let prior = Pose2::new(1.0, -2.0, 0.5);
        let mut p = EstimationProblem::new(vec![prior], SolverSettings::default());
        p.add(ResidualBlock::new(Measurement::Prior { mean: prior }, vec![0], diag3(1e-4, 1e-2, 1e-2)).unwrap());
        let (sol, report) = solve(&p).unwrap();
        assert_eq!(sol[0], prior);
        assert_eq!(report.iterations, 1);

        let cov = Covariances::new(&EstimationProblem { poses: sol, ..p.clone() }).unwrap();
        assert_relative_eq!(cov.marginal(0), Matrix3::from_diagonal(&Vector3::new(1e-4, 1e-2, 1e-2)), max_relative = 1e-9);
    }

    #[test]
    fn prior_only_from_offset_start() {
        let prior = Pose2::new(1.0, -2.0, 2.5);
        let mut p = EstimationProblem::new(vec![Pose2::new(0.0, 0.0, -2.0)], SolverSettings::default());
        p.add(ResidualBlock::isotropic(Measurement::Prior { mean: prior }, vec![0], 0.1).unwrap());
        let (sol, report) = solve(&p).unwrap();
        assert_relative_eq!(sol[0].position, prior.position, epsilon = 1e-10);
        assert_relative_eq!(sol[0].heading(), prior.heading(), epsilon = 1e-10);
        assert!(report.final_cost < 1e-20);
        for w in report.cost_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn missing_prior_is_reported_singular() {
        let mut p = EstimationProblem::new(vec![Pose2::identity(), Pose2::new(1.0, 0.0, 0.0)], SolverSettings::default());
        p.add(ResidualBlock::isotropic(Measurement::Gyro { delta_theta: 0.0 }, vec![0, 1], 0.01).unwrap());
        p.add(ResidualBlock::isotropic(Measurement::Slip, vec![0, 1], 0.01).unwrap());
        assert!(matches!(solve(&p), Err(Error::SingularNormalEquations { .. })));
    }

    #[test]
    fn validation_rejects_bad_blocks() {
        let mut p = EstimationProblem::new(vec![Pose2::identity(); 4], SolverSettings::default());
        p.add(ResidualBlock::isotropic(Measurement::Slip, vec![0, 2], 0.1).unwrap());
        assert!(matches!(p.validate(), Err(Error::InvalidProblem(_))));
        assert!(ResidualBlock::isotropic(Measurement::Slip, vec![0], 0.1).is_err());
        assert!(ResidualBlock::new(Measurement::Slip, vec![0, 1], DMatrix::from_element(1, 1, -1.0)).is_err());
        let mut p = EstimationProblem::new(vec![Pose2::identity(); 4], SolverSettings::default());
        p.add(ResidualBlock::isotropic(Measurement::Loop, vec![1, 7], 0.1).unwrap());
        assert!(p.validate().is_err());
    }

    #[test]
    fn two_pose_relative_covariance() {
        // A tight prior on pose 0 plus a loop-type position constraint and a
        // gyro constraint: the relative covariance equals the factor noise.
        let t0 = Pose2::new(0.0, 0.0, 0.0);
        let t1 = Pose2::new(0.0, 0.0, 0.0);
        let mut p = EstimationProblem::new(vec![t0, t1], SolverSettings::default());
        p.add(ResidualBlock::isotropic(Measurement::Prior { mean: t0 }, vec![0], 1e-6).unwrap());
        p.add(ResidualBlock::isotropic(Measurement::Gyro { delta_theta: 0.0 }, vec![0, 1], 0.05).unwrap());
        p.add(ResidualBlock::isotropic(Measurement::Loop, vec![0, 1], 0.2).unwrap());
        let (sol, _) = solve(&p).unwrap();
        let solved = EstimationProblem { poses: sol, ..p };
        let rel = relative_covariance(&solved, 0, 1).unwrap();
        assert_relative_eq!(rel[(0, 0)], 0.05 * 0.05, max_relative = 1e-3);
        assert_relative_eq!(rel[(1, 1)], 0.2 * 0.2, max_relative = 1e-3);
        assert_relative_eq!(rel[(2, 2)], 0.2 * 0.2, max_relative = 1e-3);
        assert!(rel[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn initial_guess_profiles() {
        let zero = vec![GyroIncrement { delta_theta: 0.0, variance: 1.0 }; 5];
        let g = build_initial_guess(&zero, &Pose2::new(1.0, 2.0, 0.3), 0.2, 0.0);
        for p in &g {
            assert_relative_eq!(p.position, nalgebra::Vector2::new(1.0, 2.0));
            assert_relative_eq!(p.heading(), 0.3, epsilon = 1e-15);
        }

        let turn = vec![GyroIncrement { delta_theta: 0.1, variance: 1.0 }; 10];
        let g = build_initial_guess(&turn, &Pose2::identity(), 0.2, 1.0);
        for (k, p) in g.iter().enumerate() {
            assert_relative_eq!(p.heading(), crate::geometry::wrap_angle(0.1 * k as f64), epsilon = 1e-12);
        }
        // chords of a circle of radius v·dt/Δθ = 2 m centred at (0, 2)
        for p in &g {
            assert_relative_eq!((p.position - nalgebra::Vector2::new(0.0, 2.0)).norm(), 2.0 * (0.05f64.sin() / 0.05) * 1.0, max_relative = 1e-2);
        }
    }
}

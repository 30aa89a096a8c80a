//! Error terms of the batch problem and their analytic Jacobians.
//!
//! Every Jacobian is taken with respect to the left perturbation
//! `T <- exp(δ)·T`, `δ = (φ, ρx, ρy)`. To first order that moves the heading by
//! `φ` and the position by `φ·J·r + ρ`.
//!
//! Sign conventions:
//! - gyro: `e = θ_{k-1} + Δθ - θ_k`, so a pose that lags the integrated
//!   heading by `ε` gives `+ε`.
//! - loop closure: `e = r_j - r_i`.

use crate::geometry::{between_log, pad_to_3d, so2_generator, wrap_angle, Pose2};
use crate::magnetostatics::{unvdash, Vector5};
use nalgebra::{Matrix2x3, Matrix3, RowVector3, SMatrix, SVector, Vector2, Vector3};

/// Residual value plus one Jacobian block per involved pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearized<const M: usize, const N: usize> {
    pub residual: SVector<f64, M>,
    pub jacobians: [SMatrix<f64, M, 3>; N],
}

/// Generator of rotations about the third axis.
fn jz() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

/// `[I₂; 0]`, lifting planar vectors into 3D.
fn lift() -> SMatrix<f64, 3, 2> {
    SMatrix::<f64, 3, 2>::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn lift_vec(v: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 0.0)
}

/// `e₀ = log(T₀⁻¹ Ť₀)^∨`.
pub fn prior_error(pose: &Pose2, prior: &Pose2) -> Linearized<3, 1> {
    let (e, d_pose, _) = between_log(pose, prior);
    Linearized {
        residual: e,
        jacobians: [d_pose],
    }
}

/// `e = log(C_k⁻¹ C_{k-1} exp(Δθ))^∨`; poses ordered `(k-1, k)`.
pub fn gyro_error(prev: &Pose2, cur: &Pose2, delta_theta: f64) -> Linearized<1, 2> {
    let e = wrap_angle(prev.heading() + delta_theta - cur.heading());
    Linearized {
        residual: SVector::<f64, 1>::new(e),
        jacobians: [
            RowVector3::new(1.0, 0.0, 0.0),
            RowVector3::new(-1.0, 0.0, 0.0),
        ],
    }
}

/// Forward-difference magnetic pseudomeasurement at β:
/// `G_β C_βᵀ (r_β - r_α) - (B_β - C_βᵀ C_α B_α)`; poses ordered `(α, β)`.
pub fn fd_mag_error(
    alpha: &Pose2,
    beta: &Pose2,
    field_alpha: &Vector3<f64>,
    field_beta: &Vector3<f64>,
    gradient_beta: &Vector5,
) -> Linearized<3, 2> {
    let g = unvdash(gradient_beta);
    let (ca, ra) = pad_to_3d(alpha);
    let (cb, rb) = pad_to_3d(beta);
    let cbt = cb.transpose();
    let rel = cbt * ca;
    let b_alpha_in_beta = rel * field_alpha;

    let gc = g * cbt;
    let residual = gc * (rb - ra) - (field_beta - b_alpha_in_beta);

    let jr_alpha = lift_vec(&(so2_generator() * alpha.position));
    let mut j_alpha = Matrix3::zeros();
    let mut j_beta = Matrix3::zeros();

    // ∂/∂φ: lever-arm terms from the position part plus the rotated-field term
    j_alpha.set_column(0, &(-gc * jr_alpha + jz() * b_alpha_in_beta));
    j_beta.set_column(0, &(gc * jr_alpha - jz() * b_alpha_in_beta));
    let gcl = gc * lift();
    j_alpha.fixed_view_mut::<3, 2>(0, 1).copy_from(&(-gcl));
    j_beta.fixed_view_mut::<3, 2>(0, 1).copy_from(&gcl);

    Linearized {
        residual,
        jacobians: [j_alpha, j_beta],
    }
}

/// Central-difference magnetic pseudomeasurement at β:
/// `G_β C_βᵀ (r_γ - r_α) - (C_βᵀ C_γ B_γ - C_βᵀ C_α B_α)`; poses ordered `(α, β, γ)`.
pub fn cd_mag_error(
    alpha: &Pose2,
    beta: &Pose2,
    gamma: &Pose2,
    field_alpha: &Vector3<f64>,
    field_gamma: &Vector3<f64>,
    gradient_beta: &Vector5,
) -> Linearized<3, 3> {
    let g = unvdash(gradient_beta);
    let (ca, ra) = pad_to_3d(alpha);
    let (cb, _) = pad_to_3d(beta);
    let (cg, rg) = pad_to_3d(gamma);
    let cbt = cb.transpose();
    let ba = cbt * ca * field_alpha;
    let bg = cbt * cg * field_gamma;
    let gc = g * cbt;
    let span = rg - ra;
    let residual = gc * span - (bg - ba);

    let j = so2_generator();
    let jr_alpha = lift_vec(&(j * alpha.position));
    let jr_gamma = lift_vec(&(j * gamma.position));
    let gcl = gc * lift();

    let mut j_alpha = Matrix3::zeros();
    j_alpha.set_column(0, &(-gc * jr_alpha + jz() * ba));
    j_alpha.fixed_view_mut::<3, 2>(0, 1).copy_from(&(-gcl));

    let mut j_beta = Matrix3::zeros();
    j_beta.set_column(0, &(-gc * jz() * span + jz() * bg - jz() * ba));

    let mut j_gamma = Matrix3::zeros();
    j_gamma.set_column(0, &(gc * jr_gamma - jz() * bg));
    j_gamma.fixed_view_mut::<3, 2>(0, 1).copy_from(&gcl);

    Linearized {
        residual,
        jacobians: [j_alpha, j_beta, j_gamma],
    }
}

/// Lateral displacement in the body frame at β: `[0 1]·C_βᵀ(r_β - r_α)`.
pub fn slip_error(alpha: &Pose2, beta: &Pose2) -> Linearized<1, 2> {
    let cbt = beta.rotation.inverse().matrix();
    let lateral = cbt.row(1).into_owned();
    let e = lateral.dot(&(beta.position - alpha.position).transpose());
    let lever = lateral * so2_generator() * alpha.position;
    Linearized {
        residual: SVector::<f64, 1>::new(e),
        jacobians: [
            RowVector3::new(-lever[0], -lateral[0], -lateral[1]),
            RowVector3::new(lever[0], lateral[0], lateral[1]),
        ],
    }
}

/// `r_j - r_i`; poses ordered `(i, j)`.
pub fn loop_error(pose_i: &Pose2, pose_j: &Pose2) -> Linearized<2, 2> {
    let j = so2_generator();
    let mut j_i = Matrix2x3::zeros();
    j_i.set_column(0, &(-(j * pose_i.position)));
    j_i.fixed_view_mut::<2, 2>(0, 1).copy_from(&(-nalgebra::Matrix2::identity()));
    let mut j_j = Matrix2x3::zeros();
    j_j.set_column(0, &(j * pose_j.position));
    j_j.fixed_view_mut::<2, 2>(0, 1).copy_from(&nalgebra::Matrix2::identity());
    Linearized {
        residual: pose_j.position - pose_i.position,
        jacobians: [j_i, j_j],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se2_exp, Twist2};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central differences of `f` under left perturbations of each pose.
    fn numeric_jacobians<const M: usize>(
        poses: &[Pose2],
        f: impl Fn(&[Pose2]) -> SVector<f64, M>,
    ) -> Vec<SMatrix<f64, M, 3>> {
        let h = 1e-6;
        (0..poses.len())
            .map(|p| {
                let mut jac = SMatrix::<f64, M, 3>::zeros();
                for k in 0..3 {
                    let mut d = Vector3::zeros();
                    d[k] = h;
                    let mut plus = poses.to_vec();
                    plus[p] = poses[p].perturb_left(&d);
                    let mut minus = poses.to_vec();
                    minus[p] = poses[p].perturb_left(&(-d));
                    jac.set_column(k, &((f(&plus) - f(&minus)) / (2.0 * h)));
                }
                jac
            })
            .collect()
    }

    fn assert_jacobians_close<const M: usize>(analytic: &[SMatrix<f64, M, 3>], numeric: &[SMatrix<f64, M, 3>]) {
        let scale = numeric.iter().map(|j| j.norm()).fold(0.0, f64::max).max(1.0);
        for (a, n) in analytic.iter().zip(numeric) {
            let rel = (a - n).norm() / scale;
            assert!(rel < 1e-6, "relative Jacobian error {rel}\nanalytic {a}\nnumeric {n}");
        }
    }

    fn random_pose(rng: &mut impl Rng) -> Pose2 {
        Pose2::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(-3.1..3.1),
        )
    }

    fn random_vec3(rng: &mut impl Rng, s: f64) -> Vector3<f64> {
        Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn random_grad(rng: &mut impl Rng) -> Vector5 {
        Vector5::from_fn(|_, _| rng.random_range(-80.0..80.0))
    }

    #[test]
    fn prior_cases() {
        let t = Pose2::new(1.0, 2.0, 0.3);
        assert_eq!(prior_error(&t, &t).residual, Vector3::zeros());
        let offset = Pose2::new(1.0, 0.0, 0.0);
        let e = prior_error(&Pose2::identity(), &offset).residual;
        assert_relative_eq!(e, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn gyro_cases() {
        let prev = Pose2::new(0.0, 0.0, 0.5);
        let cur = Pose2::new(1.0, 0.0, 0.5 + 0.2);
        assert_relative_eq!(gyro_error(&prev, &cur, 0.2).residual[0], 0.0, epsilon = 1e-15);
        let lagging = Pose2::new(1.0, 0.0, 0.5 + 0.2 - 0.01);
        assert_relative_eq!(gyro_error(&prev, &lagging, 0.2).residual[0], 0.01, epsilon = 1e-14);
        // wraps across ±π
        let a = Pose2::new(0.0, 0.0, 3.1);
        let b = Pose2::new(0.0, 0.0, -3.1);
        let e = gyro_error(&a, &b, 2.0 * std::f64::consts::PI - 6.2).residual[0];
        assert_relative_eq!(e, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fd_and_cd_zero_cases() {
        let t = Pose2::new(1.0, -2.0, 0.4);
        let b = Vector3::new(20.0, 5.0, 40.0);
        let g = Vector5::new(10.0, 3.0, -2.0, 4.0, 1.0);
        assert!(fd_mag_error(&t, &t, &b, &b, &g).residual.amax() < 1e-12);
        assert!(cd_mag_error(&t, &t, &t, &b, &b, &g).residual.amax() < 1e-12);

        let t2 = Pose2::new(3.0, 1.0, 0.4);
        let t3 = Pose2::new(5.0, 4.0, 0.4);
        let zero = Vector5::zeros();
        assert!(fd_mag_error(&t, &t2, &b, &b, &zero).residual.amax() < 1e-12);
        assert!(cd_mag_error(&t, &t2, &t3, &b, &b, &zero).residual.amax() < 1e-12);
    }

    #[test]
    fn slip_and_loop_cases() {
        let a = Pose2::new(0.0, 0.0, 0.7);
        let fwd = Pose2::new(0.3 * 0.7f64.cos(), 0.3 * 0.7f64.sin(), 0.7);
        assert_relative_eq!(slip_error(&a, &fwd).residual[0], 0.0, epsilon = 1e-15);
        let side = Pose2::new(-0.1 * 0.7f64.sin(), 0.1 * 0.7f64.cos(), 0.7);
        assert_relative_eq!(slip_error(&a, &side).residual[0], 0.1, epsilon = 1e-15);

        let i = Pose2::new(0.0, 0.0, 0.2);
        let j = Pose2::new(1.0, 1.0, -1.0);
        assert_eq!(loop_error(&i, &i).residual, Vector2::zeros());
        assert_eq!(loop_error(&i, &j).residual, Vector2::new(1.0, 1.0));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (p0, p1, p2) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let prior = random_pose(&mut rng);
            let (b0, b2) = (random_vec3(&mut rng, 60.0), random_vec3(&mut rng, 60.0));
            let g = random_grad(&mut rng);
            let dth = rng.random_range(-0.5..0.5);

            let lin = prior_error(&p0, &prior);
            let num = numeric_jacobians(&[p0], |p| prior_error(&p[0], &prior).residual);
            assert_jacobians_close(&lin.jacobians, &num);

            let lin = gyro_error(&p0, &p1, dth);
            let num = numeric_jacobians(&[p0, p1], |p| gyro_error(&p[0], &p[1], dth).residual);
            assert_jacobians_close(&lin.jacobians, &num);

            let lin = fd_mag_error(&p0, &p1, &b0, &b2, &g);
            let num = numeric_jacobians(&[p0, p1], |p| fd_mag_error(&p[0], &p[1], &b0, &b2, &g).residual);
            assert_jacobians_close(&lin.jacobians, &num);

            let lin = cd_mag_error(&p0, &p1, &p2, &b0, &b2, &g);
            let num = numeric_jacobians(&[p0, p1, p2], |p| cd_mag_error(&p[0], &p[1], &p[2], &b0, &b2, &g).residual);
            assert_jacobians_close(&lin.jacobians, &num);

            let lin = slip_error(&p0, &p1);
            let num = numeric_jacobians(&[p0, p1], |p| slip_error(&p[0], &p[1]).residual);
            assert_jacobians_close(&lin.jacobians, &num);

            let lin = loop_error(&p0, &p2);
            let num = numeric_jacobians(&[p0, p2], |p| loop_error(&p[0], &p[1]).residual);
            assert_jacobians_close(&lin.jacobians, &num);
        }
    }

    #[test]
    fn magnetic_residuals_are_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let poses = [random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng)];
            let (b0, b1, b2) = (random_vec3(&mut rng, 60.0), random_vec3(&mut rng, 60.0), random_vec3(&mut rng, 60.0));
            let g = random_grad(&mut rng);
            let shift = se2_exp(&Twist2::new(rng.random_range(-3.0..3.0), 4.0, -7.0));
            let moved: Vec<Pose2> = poses.iter().map(|p| shift * *p).collect();
            // body-frame samples are unchanged by a global rigid motion
            let fd0 = fd_mag_error(&poses[0], &poses[1], &b0, &b1, &g).residual;
            let fd1 = fd_mag_error(&moved[0], &moved[1], &b0, &b1, &g).residual;
            assert!((fd0 - fd1).amax() < 1e-10 * (1.0 + fd0.amax()));
            let cd0 = cd_mag_error(&poses[0], &poses[1], &poses[2], &b0, &b2, &g).residual;
            let cd1 = cd_mag_error(&moved[0], &moved[1], &moved[2], &b0, &b2, &g).residual;
            assert!((cd0 - cd1).amax() < 1e-10 * (1.0 + cd0.amax()));
            let s0 = slip_error(&poses[0], &poses[1]).residual[0];
            let s1 = slip_error(&moved[0], &moved[1]).residual[0];
            assert!((s0 - s1).abs() < 1e-10 * (1.0 + s0.abs()));
        }
    }
}

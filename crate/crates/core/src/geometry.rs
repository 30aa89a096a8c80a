//! SO(2)/SE(2) primitives.
//!
//! Tangent vectors are ordered `(rotation, x, y)` everywhere. Perturbations are
//! applied on the left, `T <- exp(δ) · T`, and every Jacobian in this crate is
//! taken with respect to that perturbation.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use std::f64::consts::{PI, TAU};
use std::ops::Mul;

/// Below this angle the closed forms switch to their Taylor expansions.
const SMALL_ANGLE: f64 = 1e-5;

/// The so(2) generator, `[[0, -1], [1, 0]]`.
pub fn so2_generator() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let w = (angle + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Planar rotation stored as a unit complex number `(cos, sin)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot2 {
    cos: f64,
    sin: f64,
}

impl Rot2 {
    pub fn identity() -> Self {
        Self { cos: 1.0, sin: 0.0 }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        Self { cos, sin }
    }

    /// Projects an arbitrary 2×2 matrix onto the nearest rotation.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::from_angle((m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]))
    }

    /// Heading in `(-π, π]`.
    pub fn angle(&self) -> f64 {
        wrap_angle(self.sin.atan2(self.cos))
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.cos, -self.sin, self.sin, self.cos)
    }

    pub fn inverse(&self) -> Self {
        Self {
            cos: self.cos,
            sin: -self.sin,
        }
    }

    pub fn rotate(&self, v: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.cos * v.x - self.sin * v.y,
            self.sin * v.x + self.cos * v.y,
        )
    }

    fn renormalized(cos: f64, sin: f64) -> Self {
        let n = cos.hypot(sin);
        Self {
            cos: cos / n,
            sin: sin / n,
        }
    }
}

impl Default for Rot2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rot2 {
    type Output = Rot2;

    fn mul(self, rhs: Rot2) -> Rot2 {
        Rot2::renormalized(
            self.cos * rhs.cos - self.sin * rhs.sin,
            self.sin * rhs.cos + self.cos * rhs.sin,
        )
    }
}

/// `exp(φ^×)` for the scalar so(2) algebra.
pub fn so2_exp(phi: f64) -> Rot2 {
    Rot2::from_angle(phi)
}

/// `log(C)^∨`, in `(-π, π]`.
pub fn so2_log(rot: &Rot2) -> f64 {
    rot.angle()
}

/// SE(2) tangent vector.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist2 {
    pub angle: f64,
    pub translation: Vector2<f64>,
}

impl Twist2 {
    pub fn new(angle: f64, x: f64, y: f64) -> Self {
        Self {
            angle,
            translation: Vector2::new(x, y),
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.angle, self.translation.x, self.translation.y)
    }
}

/// Element of SE(2): heading of the body frame plus position, both in the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose2 {
    pub rotation: Rot2,
    pub position: Vector2<f64>,
}

impl Pose2 {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            rotation: Rot2::from_angle(heading),
            position: Vector2::new(x, y),
        }
    }

    pub fn heading(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            rotation: inv,
            position: -inv.rotate(&self.position),
        }
    }

    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation.rotate(p) + self.position
    }

    /// `exp(δ) · self`.
    pub fn perturb_left(&self, delta: &Vector3<f64>) -> Self {
        se2_exp(&Twist2::from_vector(delta)) * *self
    }

    /// `self · exp(δ)`.
    pub fn perturb_right(&self, delta: &Vector3<f64>) -> Self {
        *self * se2_exp(&Twist2::from_vector(delta))
    }

    /// Heading and world-frame position updated independently:
    /// `(θ + δ₀, r + (δ₁, δ₂))`.
    pub fn retract(&self, delta: &Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation * Rot2::from_angle(delta[0]),
            position: self.position + Vector2::new(delta[1], delta[2]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.rotation.angle().is_finite()
    }
}

impl Mul for Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: Pose2) -> Pose2 {
        Pose2 {
            rotation: self.rotation * rhs.rotation,
            position: self.rotation.rotate(&rhs.position) + self.position,
        }
    }
}

/// Coefficients `(sinθ/θ, (1-cosθ)/θ)` of `V(θ) = a·I + b·J`.
fn v_coefficients(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        let s = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * s * s / theta)
    }
}

/// `V(θ)`, the translation coupling of the SE(2) exponential.
pub fn se2_v_matrix(theta: f64) -> Matrix2<f64> {
    let (a, b) = v_coefficients(theta);
    Matrix2::new(a, -b, b, a)
}

/// `A(θ) = (θ/2)·cot(θ/2)` and its derivative; `V(θ)⁻¹ = A·I - (θ/2)·J`.
///
/// At θ = π the closed form gives `A = 0`, `A' = -π/4`, so the half-turn needs
/// no special branch.
fn v_inverse_coefficient(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL_ANGLE {
        (1.0 - theta * theta / 12.0, -theta / 6.0)
    } else {
        let half = 0.5 * theta;
        let (s, c) = half.sin_cos();
        let cot = c / s;
        (half * cot, 0.5 * cot - 0.25 * theta / (s * s))
    }
}

pub fn se2_exp(xi: &Twist2) -> Pose2 {
    Pose2 {
        rotation: Rot2::from_angle(xi.angle),
        position: se2_v_matrix(xi.angle) * xi.translation,
    }
}

pub fn se2_log(pose: &Pose2) -> Twist2 {
    let theta = pose.heading();
    let (a, _) = v_inverse_coefficient(theta);
    let half = 0.5 * theta;
    let t = pose.position;
    Twist2 {
        angle: theta,
        translation: Vector2::new(a * t.x + half * t.y, -half * t.x + a * t.y),
    }
}

/// `log(T)^∨` together with its derivative with respect to the raw
/// coordinates `(θ, x, y)` of `T`.
pub fn se2_log_with_jacobian(pose: &Pose2) -> (Vector3<f64>, Matrix3<f64>) {
    let theta = pose.heading();
    let (a, da) = v_inverse_coefficient(theta);
    let half = 0.5 * theta;
    let t = pose.position;
    let rho = Vector2::new(a * t.x + half * t.y, -half * t.x + a * t.y);
    // d/dθ of (A·I - θ/2·J)·t
    let drho = Vector2::new(da * t.x + 0.5 * t.y, -0.5 * t.x + da * t.y);
    let jac = Matrix3::new(
        1.0, 0.0, 0.0, //
        drho.x, a, half, //
        drho.y, -half, a,
    );
    (Vector3::new(theta, rho.x, rho.y), jac)
}

/// `log(Tᵢ⁻¹ Tⱼ)^∨` and its Jacobians with respect to left perturbations of
/// `Tᵢ` and `Tⱼ`.
pub fn between_log(ti: &Pose2, tj: &Pose2) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let rel = ti.inverse() * *tj;
    let (xi, dlog) = se2_log_with_jacobian(&rel);
    let ci_t = ti.rotation.inverse().matrix();
    let j = so2_generator();
    let lever = ci_t * j * tj.position;

    // d(θ_rel, t_rel) / d(φ, ρ)
    let mut d_i = Matrix3::zeros();
    d_i[(0, 0)] = -1.0;
    d_i.fixed_view_mut::<2, 1>(1, 0).copy_from(&(-lever));
    d_i.fixed_view_mut::<2, 2>(1, 1).copy_from(&(-ci_t));

    let mut d_j = Matrix3::zeros();
    d_j[(0, 0)] = 1.0;
    d_j.fixed_view_mut::<2, 1>(1, 0).copy_from(&lever);
    d_j.fixed_view_mut::<2, 2>(1, 1).copy_from(&ci_t);

    (xi, dlog * d_i, dlog * d_j)
}

/// Adjoint of a pose for left-perturbation tangent vectors:
/// `T · exp(δ) · T⁻¹ = exp(Ad_T δ)`.
pub fn se2_adjoint(pose: &Pose2) -> Matrix3<f64> {
    let mut ad = Matrix3::zeros();
    ad[(0, 0)] = 1.0;
    let jr = so2_generator() * pose.position;
    ad[(1, 0)] = -jr.x;
    ad[(2, 0)] = -jr.y;
    ad.fixed_view_mut::<2, 2>(1, 1).copy_from(&pose.rotation.matrix());
    ad
}

/// Maps a [`Pose2::retract`] increment to the equivalent left perturbation
/// at `pose`, to first order.
pub fn retract_to_left(pose: &Pose2) -> Matrix3<f64> {
    let mut m = Matrix3::identity();
    m[(1, 0)] = pose.position.y;
    m[(2, 0)] = -pose.position.x;
    m
}

/// Maps a [`Pose2::retract`] increment to the body-frame (right)
/// perturbation at `pose`, to first order.
pub fn retract_to_body(pose: &Pose2) -> Matrix3<f64> {
    let mut m = Matrix3::identity();
    m.fixed_view_mut::<2, 2>(1, 1).copy_from(&pose.rotation.matrix().transpose());
    m
}

/// Rotation about the third axis by `angle`.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Lifts a planar pose into 3D: z-axis rotation and `(x, y, 0)`.
pub fn pad_to_3d(pose: &Pose2) -> (Matrix3<f64>, Vector3<f64>) {
    let c2 = pose.rotation.matrix();
    let mut c3 = Matrix3::identity();
    c3.fixed_view_mut::<2, 2>(0, 0).copy_from(&c2);
    (c3, Vector3::new(pose.position.x, pose.position.y, 0.0))
}

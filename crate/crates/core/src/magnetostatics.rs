//! Synthetic magnetostatic worlds and the attitude-invariant scalars.
//!
//! Fields are in µT, gradients in µT/m, positions in m. A point dipole with
//! moment `m` (A·m²) at offset `r` contributes `k·(3(m·r̂)r̂ - m)/|r|³` where `k`
//! is the dipole constant (`μ0/4π = 0.1 µT·m/A` by default).

use crate::error::{Error, Result};
use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

pub type Vector5 = SVector<f64, 5>;

/// `μ0/4π` expressed in µT·m/A.
pub const DEFAULT_DIPOLE_CONSTANT: f64 = 0.1;
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 0.3;

/// Anything that can report a Maxwell-consistent field and gradient at a point.
pub trait FieldSource: Sync {
    fn field_and_gradient(&self, r: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    pub position: [f64; 3],
    pub moment: [f64; 3],
}

/// Uniform background plus point dipoles, optionally with a uniform gradient term.
#[derive(Clone, Debug, PartialEq)]
pub struct MagWorld {
    background: Vector3<f64>,
    background_gradient: Matrix3<f64>,
    dipoles: Vec<(Vector3<f64>, Vector3<f64>)>,
    dipole_constant: f64,
    exclusion_radius: f64,
}

impl MagWorld {
    pub fn new(background: Vector3<f64>) -> Self {
        Self {
            background,
            background_gradient: Matrix3::zeros(),
            dipoles: Vec::new(),
            dipole_constant: DEFAULT_DIPOLE_CONSTANT,
            exclusion_radius: DEFAULT_EXCLUSION_RADIUS,
        }
    }

    pub fn with_dipole(mut self, position: Vector3<f64>, moment: Vector3<f64>) -> Self {
        self.dipoles.push((position, moment));
        self
    }

    pub fn with_dipole_constant(mut self, k: f64) -> Self {
        self.dipole_constant = k;
        self
    }

    pub fn with_exclusion_radius(mut self, radius: f64) -> Self {
        self.exclusion_radius = radius;
        self
    }

    /// Adds a spatially uniform gradient `G` so that `B(r) = B0 + G·r + Σ dipoles`.
    pub fn with_background_gradient(mut self, g: Matrix3<f64>) -> Result<Self> {
        check_symmetric_traceless(&g, 1e-9)?;
        self.background_gradient = g;
        Ok(self)
    }

    pub fn background(&self) -> Vector3<f64> {
        self.background
    }

    pub fn background_gradient(&self) -> Matrix3<f64> {
        self.background_gradient
    }

    pub fn dipoles(&self) -> &[(Vector3<f64>, Vector3<f64>)] {
        &self.dipoles
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius
    }

    pub fn dipole_constant(&self) -> f64 {
        self.dipole_constant
    }

    /// The same physical world expressed after the rigid motion `r ↦ R·r + t`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let g = rotation * self.background_gradient * rotation.transpose();
        // B'(r') = R·B(Rᵀ(r' - t)), so the uniform-gradient term shifts the background.
        let background = rotation * self.background - g * translation;
        Self {
            background,
            background_gradient: g,
            dipoles: self
                .dipoles
                .iter()
                .map(|(p, m)| (rotation * p + translation, rotation * m))
                .collect(),
            dipole_constant: self.dipole_constant,
            exclusion_radius: self.exclusion_radius,
        }
    }

    /// Field `B_a` and gradient `G_a = ∂B_a/∂r_a` at `r`.
    pub fn eval_field(&self, r: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let mut b = self.background + self.background_gradient * r;
        let mut g = self.background_gradient;
        for (idx, (pos, moment)) in self.dipoles.iter().enumerate() {
            let d = r - pos;
            let dist = d.norm();
            if dist <= self.exclusion_radius {
                return Err(Error::EvaluationInsideExclusionZone {
                    dipole: idx,
                    distance: dist,
                    radius: self.exclusion_radius,
                });
            }
            let (db, dg) = dipole_field(self.dipole_constant, moment, &d);
            b += db;
            g += dg;
        }
        Ok((b, g))
    }
}

impl FieldSource for MagWorld {
    fn field_and_gradient(&self, r: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        self.eval_field(r)
    }
}

/// Field and gradient of one point dipole at displacement `d` from it.
fn dipole_field(k: f64, m: &Vector3<f64>, d: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let r2 = d.norm_squared();
    let r = r2.sqrt();
    let inv_r3 = 1.0 / (r2 * r);
    let inv_r5 = inv_r3 / r2;
    let inv_r7 = inv_r5 / r2;
    let md = m.dot(d);

    let b = k * (3.0 * md * inv_r5 * d - m * inv_r3);

    // ∂B_i/∂r_j = k·[3(m_i d_j + m_j d_i + (m·d)δ_ij)/r⁵ - 15(m·d) d_i d_j / r⁷]
    let outer = m * d.transpose();
    let g = k
        * (3.0 * inv_r5 * (outer + outer.transpose() + Matrix3::identity() * md)
            - 15.0 * md * inv_r7 * (d * d.transpose()));
    (b, g)
}

/// A field that is exactly linear in position: `B(r) = B0 + G·r`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField {
    pub offset: Vector3<f64>,
    pub gradient: Matrix3<f64>,
}

impl FieldSource for LinearField {
    fn field_and_gradient(&self, r: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        Ok((self.offset + self.gradient * r, self.gradient))
    }
}

fn check_symmetric_traceless(g: &Matrix3<f64>, tol: f64) -> Result<()> {
    let asymmetry = (g - g.transpose()).amax();
    let trace = g.trace();
    if asymmetry > tol || trace.abs() > tol {
        return Err(Error::NotSymmetricTraceless { asymmetry, trace });
    }
    Ok(())
}

/// Packs the five unique elements `(Bxx, Bxy, Bxz, Byy, Byz)`.
pub fn vdash(g: &Matrix3<f64>) -> Result<Vector5> {
    check_symmetric_traceless(g, 1e-8)?;
    Ok(Vector5::new(g[(0, 0)], g[(0, 1)], g[(0, 2)], g[(1, 1)], g[(1, 2)]))
}

/// Rebuilds the symmetric traceless gradient, with `Bzz = -(Bxx + Byy)`.
pub fn unvdash(g: &Vector5) -> Matrix3<f64> {
    Matrix3::new(
        g[0],
        g[1],
        g[2],
        g[1],
        g[3],
        g[4],
        g[2],
        g[4],
        -(g[0] + g[3]),
    )
}

/// Field and packed gradient measured in the body frame at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub timestamp: f64,
    pub field: Vector3<f64>,
    pub gradient: Vector5,
}

impl FieldSample {
    pub fn gradient_matrix(&self) -> Matrix3<f64> {
        unvdash(&self.gradient)
    }
}

/// `(I1, I2, I3)`: field norm, gradient Frobenius norm, gradient determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantTriple {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl InvariantTriple {
    pub fn get(&self, which: usize) -> f64 {
        match which {
            0 => self.i1,
            1 => self.i2,
            2 => self.i3,
            _ => panic!("invariant index {which} out of range"),
        }
    }
}

pub fn invariants(sample: &FieldSample) -> InvariantTriple {
    let g = sample.gradient_matrix();
    InvariantTriple {
        i1: sample.field.norm(),
        i2: g.norm(),
        i3: g.determinant(),
    }
}

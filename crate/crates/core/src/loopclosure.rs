//! Map-free loop-closure detection from attitude-invariant scalars.
//!
//! Every keyframe contributes an (I1, I2, I3) triple; revisits show up as
//! small entries of the pairwise distance matrix. Candidates are then checked
//! against the no-loop solution with a χ² test on the relative pose.

use crate::error::{Error, Result};
use crate::geometry::se2_log;
use crate::magnetostatics::InvariantTriple;
use crate::solver::Covariances;
use crate::geometry::Pose2;
use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::io::Write;
use std::path::Path;

/// Degrees of freedom of an SE(2) relative pose.
pub const GATE_DOF: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceLabel {
    I1,
    I2,
    I3,
    Combined,
}

impl DistanceLabel {
    pub fn name(self) -> &'static str {
        match self {
            DistanceLabel::I1 => "i1",
            DistanceLabel::I2 => "i2",
            DistanceLabel::I3 => "i3",
            DistanceLabel::Combined => "combined",
        }
    }

    fn index(self) -> usize {
        match self {
            DistanceLabel::I1 => 0,
            DistanceLabel::I2 => 1,
            DistanceLabel::I3 => 2,
            DistanceLabel::Combined => panic!("combined distance has no single invariant"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub label: DistanceLabel,
    pub values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Writes the matrix as headerless CSV rows; `log_scale` writes
    /// `log10(D + 1e-12)` instead.
    pub fn write_csv(&self, path: &Path, log_scale: bool) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len())
                .map(|j| {
                    let v = self.values[(i, j)];
                    if log_scale {
                        format!("{}", (v + 1e-12).log10())
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn pairwise(values: &[f64], scale: f64) -> DMatrix<f64> {
    let k = values.len();
    let rows: Vec<Vec<f64>> = values
        .par_iter()
        .map(|a| values.iter().map(|b| (a - b).abs() * scale).collect())
        .collect();
    DMatrix::from_fn(k, k, |i, j| rows[i][j])
}

/// `d_kl = |I_k - I_l|` for one invariant.
pub fn distance_matrix(stream: &[InvariantTriple], invariant: DistanceLabel) -> DistanceMatrix {
    let idx = invariant.index();
    let values: Vec<f64> = stream.iter().map(|t| t.get(idx)).collect();
    DistanceMatrix {
        label: invariant,
        values: pairwise(&values, 1.0),
    }
}

/// Sum of the three distance matrices, each divided by the largest magnitude
/// of its invariant. Invariants that are identically zero contribute nothing.
pub fn combined_distance(stream: &[InvariantTriple]) -> Result<DistanceMatrix> {
    let k = stream.len();
    let mut total = DMatrix::zeros(k, k);
    let mut any = false;
    for idx in 0..3 {
        let values: Vec<f64> = stream.iter().map(|t| t.get(idx)).collect();
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        any = true;
        total += pairwise(&values, 1.0 / max);
    }
    if !any {
        return Err(Error::AllInvariantsConstant);
    }
    Ok(DistanceMatrix {
        label: DistanceLabel::Combined,
        values: total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionSettings {
    /// Candidate threshold on the combined distance.
    pub threshold: f64,
    /// Minimum keyframe separation `j - i`.
    pub min_separation: usize,
    /// Side length of the non-maximum-suppression window.
    pub window: usize,
    /// Significance level of the χ² gate.
    pub alpha: f64,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            min_separation: 40,
            window: 10,
            alpha: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopCandidate {
    pub i: usize,
    pub j: usize,
    pub score: f64,
    /// Squared Mahalanobis distance, once gated.
    pub statistic: Option<f64>,
    pub accepted: bool,
}

/// Upper-triangle pairs below `threshold`, at least `min_separation` apart,
/// that are the smallest valid entry in the `window`×`window` block around
/// them. Ties are broken by `(score, i, j)` so equal scores keep only the
/// earliest pair.
pub fn extract_candidates(
    d: &DistanceMatrix,
    threshold: f64,
    min_separation: usize,
    window: usize,
) -> Vec<LoopCandidate> {
    let k = d.len();
    let half = window / 2;
    let sep = min_separation.max(1);
    let valid = |i: usize, j: usize| j >= i + sep && d.get(i, j) < threshold;
    let key = |i: usize, j: usize| (d.get(i, j), i, j);
    let less = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        a.0 < b.0 || (a.0 == b.0 && (a.1, a.2) < (b.1, b.2))
    };

    let rows: Vec<Vec<LoopCandidate>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in (i + sep)..k {
                if !valid(i, j) {
                    continue;
                }
                let me = key(i, j);
                let mut is_min = true;
                'win: for a in i.saturating_sub(half)..=(i + half).min(k - 1) {
                    for b in j.saturating_sub(half)..=(j + half).min(k - 1) {
                        if (a, b) != (i, j) && valid(a, b) && less(key(a, b), me) {
                            is_min = false;
                            break 'win;
                        }
                    }
                }
                if is_min {
                    out.push(LoopCandidate {
                        i,
                        j,
                        score: me.0,
                        statistic: None,
                        accepted: false,
                    });
                }
            }
            out
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// Upper `1 - alpha` quantile of χ² with `dof` degrees of freedom.
pub fn chi2_threshold(dof: usize, alpha: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

/// `δξᵀ Σ⁻¹ δξ` with `δξ = log(Tᵢ⁻¹Tⱼ)^∨`.
pub fn gate_statistic(ti: &Pose2, tj: &Pose2, sigma: &Matrix3<f64>, i: usize, j: usize) -> Result<f64> {
    let xi = se2_log(&(ti.inverse() * *tj)).to_vector();
    let chol = sigma
        .cholesky()
        .ok_or(Error::SingularRelativeCovariance { i, j })?;
    let w = chol.l().solve_lower_triangular(&xi).ok_or(Error::SingularRelativeCovariance { i, j })?;
    Ok(w.norm_squared())
}

/// Fills in the gate statistic of every candidate and marks those inside the
/// χ² bound as accepted. Candidates whose relative covariance cannot be
/// factored are rejected.
pub fn gate_candidates(
    candidates: &[LoopCandidate],
    poses: &[Pose2],
    covariances: &Covariances,
    alpha: f64,
) -> Vec<LoopCandidate> {
    let bound = chi2_threshold(GATE_DOF, alpha);
    candidates
        .par_iter()
        .map(|c| {
            let sigma = covariances.relative(c.i, c.j);
            let mut out = *c;
            match gate_statistic(&poses[c.i], &poses[c.j], &sigma, c.i, c.j) {
                Ok(stat) => {
                    out.statistic = Some(stat);
                    out.accepted = stat <= bound;
                }
                Err(e) => {
                    log::warn!("loop candidate ({}, {}) rejected: {e}", c.i, c.j);
                    out.statistic = None;
                    out.accepted = false;
                }
            }
            out
        })
        .collect()
}

/// Writes `i,j,score,statistic,accepted` rows.
pub fn write_loops_csv(path: &Path, loops: &[LoopCandidate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "score", "statistic", "accepted"])?;
    for c in loops {
        w.write_record([
            c.i.to_string(),
            c.j.to_string(),
            format!("{}", c.score),
            c.statistic.map(|s| format!("{s}")).unwrap_or_default(),
            c.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

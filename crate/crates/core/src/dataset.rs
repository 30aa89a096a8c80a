//! Sensor datasets on disk: one CSV per stream in a directory.
//!
//! | file        | columns                                              |
//! |-------------|------------------------------------------------------|
//! | `gyro.csv`  | `t,u`                                                |
//! | `mag.csv`   | `t,m0x,m0y,m0z,...,m3z` or `t,bx,by,bz,gxx,gxy,gxz,gyy,gyz` |
//! | `truth.csv` | `t,x,y,theta` (optional)                             |
//! | `wheel.csv` | `t,v` (optional)                                     |
//!
//! Floats are written in shortest round-trip form, so reading a written
//! dataset gives back the same bits.

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::magnetostatics::{FieldSample, Vector5};
use crate::metrics::StampedPose;
use crate::sensors::{GyroRecord, WheelRecord};
use nalgebra::{Matrix3, Vector3};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawMagRecord {
    pub t: f64,
    /// Body-frame readings of the four magnetometers, µT.
    pub readings: [Vector3<f64>; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub enum MagData {
    Raw(Vec<RawMagRecord>),
    Processed(Vec<FieldSample>),
}

impl MagData {
    pub fn len(&self) -> usize {
        match self {
            MagData::Raw(v) => v.len(),
            MagData::Processed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> Vec<f64> {
        match self {
            MagData::Raw(v) => v.iter().map(|r| r.t).collect(),
            MagData::Processed(v) => v.iter().map(|r| r.timestamp).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl TruthRecord {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.theta)
    }

    pub fn stamped(&self) -> StampedPose {
        StampedPose::new(self.t, self.pose())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub gyro: Vec<GyroRecord>,
    pub mag: MagData,
    pub truth: Option<Vec<TruthRecord>>,
    pub wheel: Option<Vec<WheelRecord>>,
}

const RAW_HEADER: [&str; 13] = [
    "t", "m0x", "m0y", "m0z", "m1x", "m1y", "m1z", "m2x", "m2y", "m2z", "m3x", "m3y", "m3z",
];
const PROCESSED_HEADER: [&str; 9] = ["t", "bx", "by", "bz", "gxx", "gxy", "gxz", "gyy", "gyz"];

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headed CSV of floats. Returns the header and the rows.
fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::InvalidData(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 2,
                rec.len(),
                header.len()
            )));
        }
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidData(format!("{}: row {}: cannot parse '{f}'", path.display(), line + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header.len() != expected.len() || header.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::InvalidData(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            expected.join(","),
            header.join(",")
        )));
    }
    Ok(())
}

fn check_increasing(name: &str, times: impl Iterator<Item = f64>) -> Result<()> {
    let mut last = f64::NEG_INFINITY;
    for (k, t) in times.enumerate() {
        if !t.is_finite() || t <= last {
            return Err(Error::InvalidData(format!(
                "{name}: timestamps must be strictly increasing (row {})",
                k + 2
            )));
        }
        last = t;
    }
    Ok(())
}

pub fn write_gyro(path: &Path, gyro: &[GyroRecord]) -> Result<()> {
    write_rows(path, &["t", "u"], gyro.iter().map(|g| vec![g.t, g.u]))
}

pub fn read_gyro(path: &Path) -> Result<Vec<GyroRecord>> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &["t", "u"])?;
    let out: Vec<GyroRecord> = rows.iter().map(|r| GyroRecord { t: r[0], u: r[1] }).collect();
    check_increasing("gyro.csv", out.iter().map(|g| g.t))?;
    Ok(out)
}

pub fn write_wheel(path: &Path, wheel: &[WheelRecord]) -> Result<()> {
    write_rows(path, &["t", "v"], wheel.iter().map(|w| vec![w.t, w.v]))
}

pub fn read_wheel(path: &Path) -> Result<Vec<WheelRecord>> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &["t", "v"])?;
    let out: Vec<WheelRecord> = rows.iter().map(|r| WheelRecord { t: r[0], v: r[1] }).collect();
    check_increasing("wheel.csv", out.iter().map(|w| w.t))?;
    Ok(out)
}

pub fn write_truth(path: &Path, truth: &[TruthRecord]) -> Result<()> {
    write_rows(path, &["t", "x", "y", "theta"], truth.iter().map(|s| vec![s.t, s.x, s.y, s.theta]))
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &["t", "x", "y", "theta"])?;
    let out: Vec<TruthRecord> = rows
        .iter()
        .map(|r| TruthRecord {
            t: r[0],
            x: r[1],
            y: r[2],
            theta: r[3],
        })
        .collect();
    check_increasing("truth.csv", out.iter().map(|s| s.t))?;
    Ok(out)
}

pub fn write_mag(path: &Path, mag: &MagData) -> Result<()> {
    match mag {
        MagData::Raw(v) => write_rows(
            path,
            &RAW_HEADER,
            v.iter().map(|r| {
                let mut row = vec![r.t];
                for m in &r.readings {
                    row.extend(m.iter());
                }
                row
            }),
        ),
        MagData::Processed(v) => write_rows(
            path,
            &PROCESSED_HEADER,
            v.iter().map(|s| {
                let mut row = vec![s.timestamp];
                row.extend(s.field.iter());
                row.extend(s.gradient.iter());
                row
            }),
        ),
    }
}

/// Reads either magnetometer layout, chosen by the header.
pub fn read_mag(path: &Path) -> Result<MagData> {
    let (header, rows) = read_rows(path)?;
    let data = if header.len() == RAW_HEADER.len() {
        expect_header(path, &header, &RAW_HEADER)?;
        MagData::Raw(
            rows.iter()
                .map(|r| RawMagRecord {
                    t: r[0],
                    readings: std::array::from_fn(|k| Vector3::new(r[1 + 3 * k], r[2 + 3 * k], r[3 + 3 * k])),
                })
                .collect(),
        )
    } else {
        expect_header(path, &header, &PROCESSED_HEADER)?;
        MagData::Processed(
            rows.iter()
                .map(|r| FieldSample {
                    timestamp: r[0],
                    field: Vector3::new(r[1], r[2], r[3]),
                    gradient: Vector5::new(r[4], r[5], r[6], r[7], r[8]),
                })
                .collect(),
        )
    };
    check_increasing("mag.csv", data.times().into_iter())?;
    Ok(data)
}

impl Dataset {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_gyro(&dir.join("gyro.csv"), &self.gyro)?;
        write_mag(&dir.join("mag.csv"), &self.mag)?;
        if let Some(t) = &self.truth {
            write_truth(&dir.join("truth.csv"), t)?;
        }
        if let Some(w) = &self.wheel {
            write_wheel(&dir.join("wheel.csv"), w)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let need = |name: &str| {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(Error::InvalidData(format!("missing {}", p.display())))
            }
        };
        let gyro = read_gyro(&need("gyro.csv")?)?;
        let mag = read_mag(&need("mag.csv")?)?;
        let truth_path = dir.join("truth.csv");
        let truth = truth_path.exists().then(|| read_truth(&truth_path)).transpose()?;
        let wheel_path = dir.join("wheel.csv");
        let wheel = wheel_path.exists().then(|| read_wheel(&wheel_path)).transpose()?;
        Ok(Self { gyro, mag, truth, wheel })
    }
}

/// Writes `t,x,y,theta` and, when every pose has one, the upper triangle of
/// the body-frame covariance `p_tt,p_tx,p_ty,p_xx,p_xy,p_yy`.
pub fn write_estimate(path: &Path, poses: &[StampedPose]) -> Result<()> {
    let with_cov = !poses.is_empty() && poses.iter().all(|p| p.covariance.is_some());
    let mut header = vec!["t", "x", "y", "theta"];
    if with_cov {
        header.extend(["p_tt", "p_tx", "p_ty", "p_xx", "p_xy", "p_yy"]);
    }
    write_rows(
        path,
        &header,
        poses.iter().map(|p| {
            let mut row = vec![p.t, p.pose.position.x, p.pose.position.y, p.pose.heading()];
            if let (true, Some(c)) = (with_cov, p.covariance) {
                row.extend([c[(0, 0)], c[(0, 1)], c[(0, 2)], c[(1, 1)], c[(1, 2)], c[(2, 2)]]);
            }
            row
        }),
    )
}

pub fn read_estimate(path: &Path) -> Result<Vec<StampedPose>> {
    let (header, rows) = read_rows(path)?;
    let base = ["t", "x", "y", "theta"];
    let full = ["t", "x", "y", "theta", "p_tt", "p_tx", "p_ty", "p_xx", "p_xy", "p_yy"];
    let with_cov = header.len() == full.len();
    expect_header(path, &header, if with_cov { &full } else { &base })?;
    let out: Vec<StampedPose> = rows
        .iter()
        .map(|r| StampedPose {
            t: r[0],
            pose: Pose2::new(r[1], r[2], r[3]),
            covariance: with_cov.then(|| Matrix3::new(r[4], r[5], r[6], r[5], r[7], r[8], r[6], r[8], r[9])),
        })
        .collect();
    check_increasing("estimate", out.iter().map(|p| p.t))?;
    Ok(out)
}

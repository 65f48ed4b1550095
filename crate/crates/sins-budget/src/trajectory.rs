//! Truth trajectory and IMU profile generation / CSV ingestion.
//!
//! Trajectories are generated analytically (the method propagates error
//! models, not navigation solutions): a static level scenario and a
//! single-axis rotation scenario with repeated clockwise / anti-clockwise
//! yaw turns. A CSV reader accepts externally produced profiles in the same
//! format the writer emits.
//!
//! CSV columns (header required, angles in degrees):
//! `t,roll,pitch,yaw,wx,wy,wz,fx,fy,fz,lat,lon,h,vE,vN,vU`
//! with rates in deg/s, specific force in m/s^2, h in m, velocity in m/s.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::earth::Earth;
use crate::error::{Error, Result};
use crate::sins_model::TrajectorySample;

/// Scenario selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Static,
    SingleAxisRotation,
    File,
}

/// Single-axis rotation parameters. The commanded profile is a trapezoid:
/// one-second ramps at each transition, peak rate chosen so a segment of
/// `turn_angle / rate` seconds still covers exactly `turn_angle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationProfile {
    /// Nominal (average) turn rate, rad/s.
    pub rate: f64,
    /// Turn magnitude per segment, rad.
    pub turn_angle: f64,
    /// Dwell between turns, s.
    pub dwell: f64,
}

/// Scenario definition driving sample generation.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Initial latitude, rad.
    pub lat: f64,
    /// Initial longitude, rad.
    pub lon: f64,
    /// Initial altitude, m.
    pub h: f64,
    /// Scenario duration, s.
    pub duration: f64,
    /// Budget propagation step, s; samples are emitted on this grid.
    pub step: f64,
    pub rotation: Option<RotationProfile>,
    pub path: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if !(self.step > 0.0) || self.step > self.duration {
            return Err(Error::InvalidArgument(
                "step must be positive and no longer than duration".into(),
            ));
        }
        Ok(())
    }

    fn epochs(&self) -> Vec<f64> {
        let n = (self.duration / self.step).round() as usize;
        (0..=n).map(|k| k as f64 * self.step).collect()
    }
}

/// Yaw rotation about the up axis.
fn yaw_dcm(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn level_sample(t: f64, yaw: f64, yaw_rate: f64, cfg: &ScenarioConfig, earth: &Earth) -> TrajectorySample {
    let cbn = yaw_dcm(yaw);
    let cnb = cbn.transpose();
    let w_ie_n = earth.rate_n(cfg.lat);
    TrajectorySample {
        t,
        cbn,
        omega_ib_b: cnb * w_ie_n + Vector3::new(0.0, 0.0, yaw_rate),
        f_b: cnb * Vector3::new(0.0, 0.0, earth.gravity(cfg.h)),
        lat: cfg.lat,
        lon: cfg.lon,
        h: cfg.h,
        v_n: Vector3::zeros(),
    }
}

/// Static level scenario: fixed position, identity attitude, earth rate
/// sensed in body axes, gravity reaction as specific force.
pub fn gen_static(cfg: &ScenarioConfig, earth: &Earth) -> Result<Vec<TrajectorySample>> {
    cfg.validate()?;
    if cfg.kind != ScenarioKind::Static {
        return Err(Error::InvalidArgument("scenario kind is not static".into()));
    }
    Ok(cfg
        .epochs()
        .into_iter()
        .map(|t| level_sample(t, 0.0, 0.0, cfg, earth))
        .collect())
}

/// Commanded rate and integrated yaw within one rotation segment of length
/// `t_rot`, ramp time `tau`, at segment time `u`, unsigned.
fn segment_rate_yaw(u: f64, t_rot: f64, tau: f64, peak: f64) -> (f64, f64) {
    if u <= tau {
        (peak * u / tau, 0.5 * peak * u * u / tau)
    } else if u <= t_rot - tau {
        (peak, peak * (0.5 * tau + (u - tau)))
    } else {
        let w = t_rot - u;
        (peak * w / tau, peak * (t_rot - tau) - 0.5 * peak * w * w / tau)
    }
}

/// Yaw angle and rate at scenario time t for the CW/ACW cycle.
pub fn rotation_rate_yaw(profile: &RotationProfile, t: f64) -> (f64, f64) {
    let t_rot = profile.turn_angle / profile.rate;
    let tau = 1.0f64.min(t_rot / 4.0);
    let peak = profile.turn_angle / (t_rot - tau);
    let period = 2.0 * (t_rot + profile.dwell);
    let u = t.rem_euclid(period);
    // Segments: +turn, dwell, -turn, dwell. Each full cycle nets zero yaw.
    if u < t_rot {
        let (r, y) = segment_rate_yaw(u, t_rot, tau, peak);
        (r, y)
    } else if u < t_rot + profile.dwell {
        (0.0, profile.turn_angle)
    } else if u < 2.0 * t_rot + profile.dwell {
        let (r, y) = segment_rate_yaw(u - t_rot - profile.dwell, t_rot, tau, peak);
        (-r, profile.turn_angle - y)
    } else {
        (0.0, 0.0)
    }
}

/// Single-axis rotation scenario: level attitude, yaw following repeated
/// clockwise and anti-clockwise turns about the up axis.
pub fn gen_single_axis_rotation(cfg: &ScenarioConfig, earth: &Earth) -> Result<Vec<TrajectorySample>> {
    cfg.validate()?;
    if cfg.kind != ScenarioKind::SingleAxisRotation {
        return Err(Error::InvalidArgument("scenario kind is not single_axis_rotation".into()));
    }
    let profile = cfg
        .rotation
        .ok_or_else(|| Error::InvalidArgument("rotation scenario needs a rotation profile".into()))?;
    if !(profile.rate > 0.0) {
        return Err(Error::InvalidArgument("rotation rate must be positive".into()));
    }
    if !(profile.turn_angle > 0.0) || !(profile.dwell >= 0.0) {
        return Err(Error::InvalidArgument("rotation turn_angle/dwell invalid".into()));
    }
    Ok(cfg
        .epochs()
        .into_iter()
        .map(|t| {
            let (rate, yaw) = rotation_rate_yaw(&profile, t);
            level_sample(t, yaw, rate, cfg, earth)
        })
        .collect())
}

/// Dispatch on the scenario kind.
pub fn generate(cfg: &ScenarioConfig, earth: &Earth) -> Result<Vec<TrajectorySample>> {
    match cfg.kind {
        ScenarioKind::Static => gen_static(cfg, earth),
        ScenarioKind::SingleAxisRotation => gen_single_axis_rotation(cfg, earth),
        ScenarioKind::File => {
            let path = cfg
                .path
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("file scenario needs a path".into()))?;
            load_trajectory(path)
        }
    }
}

// Attitude convention for the CSV: cbn = Rz(yaw) * Rx(pitch) * Ry(roll),
// yaw about up, pitch about east, roll about north.
fn euler_to_dcm(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let ry = Matrix3::new(cr, 0.0, sr, 0.0, 1.0, 0.0, -sr, 0.0, cr);
    yaw_dcm(yaw) * rx * ry
}

fn dcm_to_euler(c: &Matrix3<f64>) -> (f64, f64, f64) {
    // Inverse of euler_to_dcm: pitch = asin(c32), roll = atan2(-c31, c33),
    // yaw = atan2(-c12, c22).
    let pitch = c[(2, 1)].clamp(-1.0, 1.0).asin();
    let roll = (-c[(2, 0)]).atan2(c[(2, 2)]);
    let yaw = (-c[(0, 1)]).atan2(c[(1, 1)]);
    (roll, pitch, yaw)
}

const CSV_HEADER: &str = "t,roll,pitch,yaw,wx,wy,wz,fx,fy,fz,lat,lon,h,vE,vN,vU";

/// Write samples in the trajectory CSV format.
pub fn write_trajectory<W: Write>(samples: &[TrajectorySample], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let r2d = 180.0 / std::f64::consts::PI;
    for s in samples {
        let (roll, pitch, yaw) = dcm_to_euler(&s.cbn);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            roll * r2d,
            pitch * r2d,
            yaw * r2d,
            s.omega_ib_b.x * r2d,
            s.omega_ib_b.y * r2d,
            s.omega_ib_b.z * r2d,
            s.f_b.x,
            s.f_b.y,
            s.f_b.z,
            s.lat * r2d,
            s.lon * r2d,
            s.h,
            s.v_n.x,
            s.v_n.y,
            s.v_n.z
        )?;
    }
    Ok(())
}

/// Load a trajectory CSV; rows must be in strictly increasing time order.
pub fn load_trajectory<P: AsRef<Path>>(path: P) -> Result<Vec<TrajectorySample>> {
    let file = std::fs::File::open(path.as_ref())?;
    load_trajectory_reader(std::io::BufReader::new(file))
}

pub fn load_trajectory_reader<R: BufRead>(reader: R) -> Result<Vec<TrajectorySample>> {
    let d2r = std::f64::consts::PI / 180.0;
    let mut samples = Vec::new();
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Trajectory { line: 1, msg: "empty file".into() });
        }
    };
    if header.trim() != CSV_HEADER {
        return Err(Error::Trajectory {
            line: 1,
            msg: format!("unexpected header '{}'", header.trim()),
        });
    }
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(Error::Trajectory {
                line: lineno,
                msg: format!("expected 16 fields, found {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 16];
        for (i, field) in fields.iter().enumerate() {
            v[i] = field.trim().parse::<f64>().map_err(|e| Error::Trajectory {
                line: lineno,
                msg: format!("field {}: {e}", i + 1),
            })?;
        }
        let sample = TrajectorySample {
            t: v[0],
            cbn: euler_to_dcm(v[1] * d2r, v[2] * d2r, v[3] * d2r),
            omega_ib_b: Vector3::new(v[4], v[5], v[6]) * d2r,
            f_b: Vector3::new(v[7], v[8], v[9]),
            lat: v[10] * d2r,
            lon: v[11] * d2r,
            h: v[12],
            v_n: Vector3::new(v[13], v[14], v[15]),
        };
        if let Some(prev) = samples.last() {
            let prev: &TrajectorySample = prev;
            if sample.t <= prev.t {
                return Err(Error::Trajectory {
                    line: lineno,
                    msg: format!("time {} not after previous {}", sample.t, prev.t),
                });
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::Trajectory { line: 2, msg: "no data rows".into() });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn static_cfg() -> ScenarioConfig {
        ScenarioConfig {
            kind: ScenarioKind::Static,
            lat: 34f64.to_radians(),
            lon: 108f64.to_radians(),
            h: 0.0,
            duration: 10.0,
            step: 1.0,
            rotation: None,
            path: None,
        }
    }

    fn rotation_cfg() -> ScenarioConfig {
        ScenarioConfig {
            kind: ScenarioKind::SingleAxisRotation,
            rotation: Some(RotationProfile {
                rate: 6f64.to_radians(),
                turn_angle: 360f64.to_radians(),
                dwell: 30.0,
            }),
            duration: 360.0,
            ..static_cfg()
        }
    }

    #[test]
    fn static_samples_at_reference_latitudes() {
        let e = Earth::default();
        let mut cfg = static_cfg();
        cfg.lat = 0.0;
        let s = gen_static(&cfg, &e).unwrap();
        assert_eq!(s.len(), 11);
        assert_relative_eq!(s[0].omega_ib_b.y, e.rate, max_relative = 1e-12);
        assert!(s[0].omega_ib_b.x.abs() < 1e-18 && s[0].omega_ib_b.z.abs() < 1e-18);

        cfg.lat = 80f64.to_radians(); // near-pole direction without the singularity
        let s = gen_static(&cfg, &e).unwrap();
        assert_relative_eq!(s[0].omega_ib_b.norm(), e.rate, max_relative = 1e-12);
        assert_relative_eq!(s[0].f_b.norm(), e.gravity(0.0), max_relative = 1e-12);

        // Time-invariant except t.
        let a = &s[0];
        let b = &s[7];
        assert_eq!(a.cbn, b.cbn);
        assert_eq!(a.omega_ib_b, b.omega_ib_b);
        assert_eq!(a.f_b, b.f_b);
    }

    #[test]
    fn rotation_cycle_geometry() {
        let cfg = rotation_cfg();
        let p = cfg.rotation.unwrap();
        // 6 deg/s, 360 deg, 30 s dwell -> 180 s cycle.
        let t_rot = p.turn_angle / p.rate;
        assert_relative_eq!(2.0 * (t_rot + p.dwell), 180.0, max_relative = 1e-12);

        // Yaw closes after one full +360 turn.
        let (_, yaw) = rotation_rate_yaw(&p, t_rot);
        let c = yaw_dcm(yaw);
        assert!((c - yaw_dcm(2.0 * std::f64::consts::PI)).norm() < 1e-9);

        // Commanded-rate integral over one CW+ACW cycle is zero.
        let (_, yaw_end) = rotation_rate_yaw(&p, 180.0 - 1e-9);
        assert!(yaw_end.abs() < 1e-6);
    }

    #[test]
    fn rotation_samples_consistent_with_closed_form() {
        let e = Earth::default();
        let cfg = rotation_cfg();
        let samples = gen_single_axis_rotation(&cfg, &e).unwrap();
        let p = cfg.rotation.unwrap();
        for s in &samples {
            // Orthonormality at every sample.
            let ortho = (s.cbn.transpose() * s.cbn - Matrix3::identity()).norm();
            assert!(ortho < 1e-9);
            // z rate = commanded profile plus earth-rate projection.
            let (rate, _) = rotation_rate_yaw(&p, s.t);
            let earth_z = (s.cbn.transpose() * e.rate_n(cfg.lat)).z;
            assert_relative_eq!(s.omega_ib_b.z, rate + earth_z, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_rejects_bad_rate() {
        let e = Earth::default();
        let mut cfg = rotation_cfg();
        cfg.rotation = Some(RotationProfile { rate: 0.0, ..cfg.rotation.unwrap() });
        assert!(gen_single_axis_rotation(&cfg, &e).is_err());
    }

    #[test]
    fn csv_roundtrip_static() {
        let e = Earth::default();
        let samples = gen_static(&static_cfg(), &e).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&samples, &mut buf).unwrap();
        let loaded = load_trajectory_reader(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(loaded.len(), samples.len());
        for (a, b) in samples.iter().zip(&loaded) {
            assert!((a.cbn - b.cbn).norm() < 1e-12);
            assert!((a.omega_ib_b - b.omega_ib_b).norm() < 1e-12);
            assert!((a.f_b - b.f_b).norm() < 1e-12);
            assert!((a.lat - b.lat).abs() < 1e-12);
            assert!((a.v_n - b.v_n).norm() < 1e-12);
        }
    }

    #[test]
    fn csv_roundtrip_rotation() {
        let e = Earth::default();
        let samples = gen_single_axis_rotation(&rotation_cfg(), &e).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&samples, &mut buf).unwrap();
        let loaded = load_trajectory_reader(std::io::Cursor::new(buf)).unwrap();
        for (a, b) in samples.iter().zip(&loaded) {
            assert!((a.cbn - b.cbn).norm() < 1e-12, "t = {}", a.t);
            assert!((a.omega_ib_b - b.omega_ib_b).norm() < 1e-12);
        }
    }

    #[test]
    fn csv_error_paths() {
        // Empty file is an error, not an empty sequence.
        let err = load_trajectory_reader(std::io::Cursor::new(Vec::<u8>::new())).unwrap_err();
        assert!(matches!(err, Error::Trajectory { .. }));

        // Header only.
        let err = load_trajectory_reader(std::io::Cursor::new(format!("{CSV_HEADER}\n"))).unwrap_err();
        assert!(matches!(err, Error::Trajectory { .. }));

        // Malformed field names the line.
        let text = format!("{CSV_HEADER}\n0,0,0,0,0,0,0,0,0,9.8,34,108,0,0,0,0\n1,0,0,bad,0,0,0,0,0,9.8,34,108,0,0,0,0\n");
        match load_trajectory_reader(std::io::Cursor::new(text)).unwrap_err() {
            Error::Trajectory { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }

        // Out-of-order time names the first offending line.
        let text = format!("{CSV_HEADER}\n1,0,0,0,0,0,0,0,0,9.8,34,108,0,0,0,0\n0,0,0,0,0,0,0,0,0,9.8,34,108,0,0,0,0\n");
        match load_trajectory_reader(std::io::Cursor::new(text)).unwrap_err() {
            Error::Trajectory { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}

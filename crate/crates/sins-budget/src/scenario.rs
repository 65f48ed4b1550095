//! Scenario files: JSON where every dimensioned quantity is a string with an
//! explicit unit ("0.01 deg/h", "30 arcsec"). Bare numbers are accepted only
//! for genuinely dimensionless fields (member counts, seeds). Parsing
//! converts everything to SI and keeps the raw strings so reports can echo
//! the configuration exactly as written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Deserialize;

use crate::decomposition::{OutputDef, SourcePartition};
use crate::error::{Error, Result};
use crate::sins_model::{default_outputs, source_partition, Granularity, ImuSpec};
use crate::trajectory::{RotationProfile, ScenarioConfig, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Angle,
    AngularRate,
    Velocity,
    Length,
    Duration,
    Frequency,
    Acceleration,
    Ratio,
    AngleRandomWalk,
    VelocityRandomWalk,
}

fn unit_table(dim: Dimension) -> &'static [(&'static str, f64)] {
    const G0: f64 = 9.80665;
    const D2R: f64 = std::f64::consts::PI / 180.0;
    match dim {
        Dimension::Angle => &[
            ("rad", 1.0),
            ("deg", D2R),
            ("arcmin", D2R / 60.0),
            ("arcsec", D2R / 3600.0),
        ],
        Dimension::AngularRate => &[
            ("rad/s", 1.0),
            ("deg/s", D2R),
            ("deg/h", D2R / 3600.0),
            ("arcsec/s", D2R / 3600.0),
        ],
        Dimension::Velocity => &[("m/s", 1.0), ("km/h", 1.0 / 3.6)],
        Dimension::Length => &[("m", 1.0), ("km", 1000.0)],
        Dimension::Duration => &[("s", 1.0), ("min", 60.0), ("h", 3600.0)],
        Dimension::Frequency => &[("Hz", 1.0)],
        Dimension::Acceleration => &[
            ("m/s^2", 1.0),
            ("g", G0),
            ("mg", 1e-3 * G0),
            ("ug", 1e-6 * G0),
            ("μg", 1e-6 * G0),
            ("µg", 1e-6 * G0),
        ],
        Dimension::Ratio => &[("ppm", 1e-6), ("percent", 1e-2)],
        Dimension::AngleRandomWalk => &[
            ("deg/sqrt(h)", D2R / 60.0),
            ("rad/sqrt(s)", 1.0),
        ],
        Dimension::VelocityRandomWalk => &[
            ("ug/sqrt(Hz)", 1e-6 * G0),
            ("μg/sqrt(Hz)", 1e-6 * G0),
            ("µg/sqrt(Hz)", 1e-6 * G0),
            ("mg/sqrt(Hz)", 1e-3 * G0),
            ("m/s^2/sqrt(Hz)", 1.0),
        ],
    }
}

/// Parse a "value unit" string into an SI value.
pub fn parse_quantity(raw: &str, dim: Dimension) -> Result<f64> {
    let trimmed = raw.trim();
    let mut parts = trimmed.splitn(2, char::is_whitespace);
    let value_str = parts.next().unwrap_or("");
    let unit = parts.next().map(str::trim).unwrap_or("");
    let value: f64 = value_str.parse().map_err(|_| {
        Error::Unit(format!("cannot parse number in quantity \"{raw}\""))
    })?;
    if !value.is_finite() {
        return Err(Error::Unit(format!("non-finite value in quantity \"{raw}\"")));
    }
    let table = unit_table(dim);
    if unit.is_empty() {
        let accepted: Vec<_> = table.iter().map(|(u, _)| *u).collect();
        return Err(Error::Unit(format!(
            "quantity \"{raw}\" is missing a unit; accepted: {}",
            accepted.join(", ")
        )));
    }
    for (name, factor) in table {
        if *name == unit {
            return Ok(value * factor);
        }
    }
    let accepted: Vec<_> = table.iter().map(|(u, _)| *u).collect();
    Err(Error::Unit(format!(
        "unknown unit \"{unit}\" in \"{raw}\"; accepted: {}",
        accepted.join(", ")
    )))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuSection {
    pub sample_rate: String,
    pub init_att_horiz: String,
    pub init_att_yaw: String,
    pub init_vel_horiz: String,
    #[serde(default)]
    pub init_vel_vert: Option<String>,
    pub init_pos_horiz: String,
    #[serde(default)]
    pub init_pos_vert: Option<String>,
    pub gyro_bias: String,
    pub acc_bias: String,
    pub gyro_sf: String,
    pub acc_sf: String,
    pub gyro_mount: String,
    pub acc_mount: String,
    pub arw: String,
    pub vrw: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSection {
    pub rate: String,
    pub turn_angle: String,
    pub dwell: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(rename = "type")]
    pub kind: String,
    pub lat: String,
    #[serde(default)]
    pub lon: Option<String>,
    #[serde(default)]
    pub h: Option<String>,
    pub duration: String,
    #[serde(default)]
    pub rotation: Option<RotationSection>,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub step: String,
    pub report_interval: String,
    #[serde(default)]
    pub vertical_channel: Option<bool>,
    #[serde(default)]
    pub partition: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub members: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub imu: ImuSection,
    pub scenario: ScenarioSection,
    pub run: RunSection,
    #[serde(default)]
    pub montecarlo: Option<MonteCarloSection>,
}

/// Everything a run needs, in SI, plus the raw strings for report echoing.
#[derive(Debug)]
pub struct ResolvedScenario {
    pub imu: ImuSpec,
    pub scenario: ScenarioConfig,
    pub report_epochs: Vec<f64>,
    pub vertical_channel: bool,
    pub granularity: Granularity,
    pub partition: SourcePartition,
    pub outputs: Vec<OutputDef>,
    pub montecarlo: Option<MonteCarloSection>,
    /// (field path, raw string) pairs in file order, for the report header.
    pub audit: Vec<(String, String)>,
}

impl ScenarioFile {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            Error::Scenario(format!("cannot open {}: {e}", path.display()))
        })?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let audit = std::cell::RefCell::new(Vec::<(String, String)>::new());
        let q = |name: &str, raw: &str, dim: Dimension| -> Result<f64> {
            let v = parse_quantity(raw, dim)
                .map_err(|e| Error::Scenario(format!("{name}: {e}")))?;
            audit.borrow_mut().push((name.to_string(), raw.to_string()));
            Ok(v)
        };

        let imu = &self.imu;
        let sample_rate = q("imu.sample_rate", &imu.sample_rate, Dimension::Frequency)?;
        let att_h = q("imu.init_att_horiz", &imu.init_att_horiz, Dimension::Angle)?;
        let att_u = q("imu.init_att_yaw", &imu.init_att_yaw, Dimension::Angle)?;
        let vel_h = q("imu.init_vel_horiz", &imu.init_vel_horiz, Dimension::Velocity)?;
        let vel_u = match &imu.init_vel_vert {
            Some(raw) => q("imu.init_vel_vert", raw, Dimension::Velocity)?,
            None => 0.0,
        };
        let pos_h = q("imu.init_pos_horiz", &imu.init_pos_horiz, Dimension::Length)?;
        let pos_u = match &imu.init_pos_vert {
            Some(raw) => q("imu.init_pos_vert", raw, Dimension::Length)?,
            None => 0.0,
        };
        let gyro_bias = q("imu.gyro_bias", &imu.gyro_bias, Dimension::AngularRate)?;
        let acc_bias = q("imu.acc_bias", &imu.acc_bias, Dimension::Acceleration)?;
        let gyro_sf = q("imu.gyro_sf", &imu.gyro_sf, Dimension::Ratio)?;
        let acc_sf = q("imu.acc_sf", &imu.acc_sf, Dimension::Ratio)?;
        let gyro_mount = q("imu.gyro_mount", &imu.gyro_mount, Dimension::Angle)?;
        let acc_mount = q("imu.acc_mount", &imu.acc_mount, Dimension::Angle)?;
        let arw = q("imu.arw", &imu.arw, Dimension::AngleRandomWalk)?;
        let vrw = q("imu.vrw", &imu.vrw, Dimension::VelocityRandomWalk)?;

        let mut spec = ImuSpec::zeros(sample_rate);
        spec.init_att_err = Vector3::new(att_h, att_h, att_u);
        spec.init_vel_err = Vector3::new(vel_h, vel_h, vel_u);
        spec.init_pos_err = Vector3::new(pos_h, pos_h, pos_u);
        spec.gyro_bias = Vector3::from_element(gyro_bias);
        spec.acc_bias = Vector3::from_element(acc_bias);
        spec.gyro_sf = Vector3::from_element(gyro_sf);
        spec.acc_sf = Vector3::from_element(acc_sf);
        spec.gyro_mount = Vector3::from_element(gyro_mount);
        spec.acc_mount = [acc_mount; 6];
        spec.arw = Vector3::from_element(arw);
        spec.vrw = Vector3::from_element(vrw);
        spec.validate()?;

        let sc = &self.scenario;
        let kind = match sc.kind.as_str() {
            "static" => ScenarioKind::Static,
            "single_axis_rotation" => ScenarioKind::SingleAxisRotation,
            "file" => ScenarioKind::File,
            other => {
                return Err(Error::Scenario(format!(
                    "scenario.type \"{other}\" is not one of static, \
                     single_axis_rotation, file"
                )))
            }
        };
        audit
            .borrow_mut()
            .push(("scenario.type".into(), sc.kind.clone()));
        let lat = q("scenario.lat", &sc.lat, Dimension::Angle)?;
        let lon = match &sc.lon {
            Some(raw) => q("scenario.lon", raw, Dimension::Angle)?,
            None => 0.0,
        };
        let h = match &sc.h {
            Some(raw) => q("scenario.h", raw, Dimension::Length)?,
            None => 0.0,
        };
        let duration = q("scenario.duration", &sc.duration, Dimension::Duration)?;
        let rotation = match (&sc.rotation, kind) {
            (Some(r), ScenarioKind::SingleAxisRotation) => Some(RotationProfile {
                rate: q("scenario.rotation.rate", &r.rate, Dimension::AngularRate)?,
                turn_angle: q(
                    "scenario.rotation.turn_angle",
                    &r.turn_angle,
                    Dimension::Angle,
                )?,
                dwell: q("scenario.rotation.dwell", &r.dwell, Dimension::Duration)?,
            }),
            (Some(_), _) => {
                return Err(Error::Scenario(
                    "scenario.rotation is only valid with type single_axis_rotation".into(),
                ))
            }
            (None, ScenarioKind::SingleAxisRotation) => {
                return Err(Error::Scenario(
                    "scenario.rotation is required for type single_axis_rotation".into(),
                ))
            }
            (None, _) => None,
        };
        let path = match (&sc.path, kind) {
            (Some(p), ScenarioKind::File) => Some(PathBuf::from(p)),
            (Some(_), _) => {
                return Err(Error::Scenario(
                    "scenario.path is only valid with type file".into(),
                ))
            }
            (None, ScenarioKind::File) => {
                return Err(Error::Scenario(
                    "scenario.path is required for type file".into(),
                ))
            }
            (None, _) => None,
        };

        let step = q("run.step", &self.run.step, Dimension::Duration)?;
        let report_interval =
            q("run.report_interval", &self.run.report_interval, Dimension::Duration)?;
        if !(report_interval > 0.0) {
            return Err(Error::Scenario("run.report_interval must be positive".into()));
        }
        let vertical_channel = self.run.vertical_channel.unwrap_or(false);
        let granularity = match self.run.partition.as_deref() {
            None | Some("per-axis") => Granularity::PerAxis,
            Some("per-category") => Granularity::PerCategory,
            Some(other) => {
                return Err(Error::Scenario(format!(
                    "run.partition \"{other}\" is not one of per-axis, per-category"
                )))
            }
        };

        let scenario = ScenarioConfig {
            kind,
            lat,
            lon,
            h,
            duration,
            step,
            rotation,
            path,
        };
        scenario.validate()?;

        let n_reports = (duration / report_interval).round() as usize;
        if n_reports == 0
            || (n_reports as f64 * report_interval - duration).abs() > 1e-9 * duration.max(1.0)
        {
            return Err(Error::Scenario(format!(
                "run.report_interval ({report_interval} s) must divide the \
                 duration ({duration} s)"
            )));
        }
        let report_epochs: Vec<f64> =
            (1..=n_reports).map(|k| k as f64 * report_interval).collect();

        if let Some(mc) = &self.montecarlo {
            if mc.members < 2 {
                return Err(Error::Scenario(format!(
                    "montecarlo.members must be at least 2, got {}",
                    mc.members
                )));
            }
        }

        Ok(ResolvedScenario {
            imu: spec,
            scenario,
            report_epochs,
            vertical_channel,
            granularity,
            partition: source_partition(granularity, vertical_channel),
            outputs: default_outputs(vertical_channel),
            montecarlo: self
                .montecarlo
                .as_ref()
                .map(|m| MonteCarloSection { members: m.members, seed: m.seed }),
            audit: audit.into_inner(),
        })
    }
}

/// Convenience: group the audit trail by section for display.
pub fn audit_by_section(audit: &[(String, String)]) -> BTreeMap<String, Vec<(String, String)>> {
    let mut map: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for (name, raw) in audit {
        let section = name.split('.').next().unwrap_or("").to_string();
        map.entry(section).or_default().push((name.clone(), raw.clone()));
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATIC_JSON: &str = r#"{
        "imu": {
            "sample_rate": "100 Hz",
            "init_att_horiz": "30 arcsec",
            "init_att_yaw": "3 arcmin",
            "init_vel_horiz": "0.2 m/s",
            "init_pos_horiz": "2 m",
            "gyro_bias": "0.01 deg/h",
            "acc_bias": "100 ug",
            "gyro_sf": "50 ppm",
            "acc_sf": "50 ppm",
            "gyro_mount": "5 arcsec",
            "acc_mount": "5 arcsec",
            "arw": "0.001 deg/sqrt(h)",
            "vrw": "1 ug/sqrt(Hz)"
        },
        "scenario": {
            "type": "static",
            "lat": "34 deg",
            "duration": "3600 s"
        },
        "run": {
            "step": "1 s",
            "report_interval": "60 s"
        },
        "montecarlo": { "members": 1000, "seed": 20240817 }
    }"#;

    #[test]
    fn quantity_conversions() {
        let d2r = std::f64::consts::PI / 180.0;
        assert!((parse_quantity("0.01 deg/h", Dimension::AngularRate).unwrap()
            - 0.01 * d2r / 3600.0)
            .abs()
            < 1e-20);
        assert!((parse_quantity("30 arcsec", Dimension::Angle).unwrap()
            - 30.0 * d2r / 3600.0)
            .abs()
            < 1e-18);
        assert!((parse_quantity("3 arcmin", Dimension::Angle).unwrap() - 3.0 * d2r / 60.0)
            .abs()
            < 1e-18);
        assert!(
            (parse_quantity("100 ug", Dimension::Acceleration).unwrap() - 9.80665e-4).abs()
                < 1e-18
        );
        assert!((parse_quantity("50 ppm", Dimension::Ratio).unwrap() - 5e-5).abs() < 1e-20);
        assert!((parse_quantity("0.001 deg/sqrt(h)", Dimension::AngleRandomWalk).unwrap()
            - 0.001 * d2r / 60.0)
            .abs()
            < 1e-20);
        assert!((parse_quantity("1 ug/sqrt(Hz)", Dimension::VelocityRandomWalk).unwrap()
            - 9.80665e-6)
            .abs()
            < 1e-18);
        assert!((parse_quantity("1 km/h", Dimension::Velocity).unwrap() - 1.0 / 3.6).abs()
            < 1e-15);
        // Unicode micro sign variants map to the same factor.
        assert_eq!(
            parse_quantity("1 µg", Dimension::Acceleration).unwrap(),
            parse_quantity("1 ug", Dimension::Acceleration).unwrap()
        );
    }

    #[test]
    fn missing_or_unknown_units_are_rejected() {
        let err = parse_quantity("30", Dimension::Angle).unwrap_err();
        assert!(err.to_string().contains("missing a unit"), "{err}");
        let err = parse_quantity("30 furlongs", Dimension::Angle).unwrap_err();
        assert!(err.to_string().contains("furlongs"), "{err}");
        assert!(err.to_string().contains("arcsec"), "{err}");
        assert!(parse_quantity("abc deg", Dimension::Angle).is_err());
        assert!(parse_quantity("inf deg", Dimension::Angle).is_err());
    }

    #[test]
    fn full_file_resolves() {
        let file: ScenarioFile = serde_json::from_str(STATIC_JSON).unwrap();
        let r = file.resolve().unwrap();
        assert_eq!(r.imu.sample_rate, 100.0);
        assert!((r.scenario.lat - 34f64.to_radians()).abs() < 1e-15);
        assert_eq!(r.scenario.duration, 3600.0);
        assert_eq!(r.report_epochs.len(), 60);
        assert_eq!(r.report_epochs[0], 60.0);
        assert_eq!(*r.report_epochs.last().unwrap(), 3600.0);
        assert!(!r.vertical_channel);
        assert_eq!(r.partition.initial_groups.len(), 28);
        assert_eq!(r.partition.noise_groups.len(), 6);
        assert_eq!(r.outputs.len(), 7);
        let mc = r.montecarlo.unwrap();
        assert_eq!(mc.members, 1000);
        assert_eq!(mc.seed, 20240817);
        // Audit keeps the raw strings verbatim.
        assert!(r
            .audit
            .iter()
            .any(|(k, v)| k == "imu.gyro_bias" && v == "0.01 deg/h"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_field_name() {
        let bad = STATIC_JSON.replace("\"sample_rate\"", "\"sample_rte\"");
        let err = serde_json::from_str::<ScenarioFile>(&bad).unwrap_err();
        assert!(err.to_string().contains("sample_rte"), "{err}");
    }

    #[test]
    fn rotation_section_rules() {
        let mut v: serde_json::Value = serde_json::from_str(STATIC_JSON).unwrap();
        v["scenario"]["type"] = "single_axis_rotation".into();
        let file: ScenarioFile = serde_json::from_value(v.clone()).unwrap();
        let err = file.resolve().unwrap_err();
        assert!(err.to_string().contains("rotation is required"), "{err}");

        v["scenario"]["rotation"] = serde_json::json!({
            "rate": "6 deg/s",
            "turn_angle": "360 deg",
            "dwell": "30 s"
        });
        let file: ScenarioFile = serde_json::from_value(v.clone()).unwrap();
        let r = file.resolve().unwrap();
        let rot = r.scenario.rotation.unwrap();
        assert!((rot.rate - 6f64.to_radians()).abs() < 1e-15);
        assert!((rot.turn_angle - 2.0 * std::f64::consts::PI).abs() < 1e-12);

        // Rotation section on a static scenario is an error, not ignored.
        v["scenario"]["type"] = "static".into();
        let file: ScenarioFile = serde_json::from_value(v).unwrap();
        assert!(file.resolve().is_err());
    }

    #[test]
    fn report_interval_must_divide_duration() {
        let bad = STATIC_JSON.replace("\"60 s\"", "\"7 s\"");
        let file: ScenarioFile = serde_json::from_str(&bad).unwrap();
        let err = file.resolve().unwrap_err();
        assert!(err.to_string().contains("report_interval"), "{err}");
    }

    #[test]
    fn per_category_partition_is_selectable() {
        let mut v: serde_json::Value = serde_json::from_str(STATIC_JSON).unwrap();
        v["run"]["partition"] = "per-category".into();
        let file: ScenarioFile = serde_json::from_value(v).unwrap();
        let r = file.resolve().unwrap();
        assert_eq!(r.partition.initial_groups.len(), 9);
        assert_eq!(r.partition.noise_groups.len(), 2);
    }

    #[test]
    fn tiny_member_count_is_rejected() {
        let bad = STATIC_JSON.replace("\"members\": 1000", "\"members\": 1");
        let file: ScenarioFile = serde_json::from_str(&bad).unwrap();
        assert!(file.resolve().is_err());
    }
}

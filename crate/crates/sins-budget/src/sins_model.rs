//! Strapdown INS error-model matrices and the Table-style source partition.
//!
//! The error state is a 30-vector ordered as
//!
//! ```text
//!  0..3   phi_E, phi_N, phi_U        attitude error (rad)
//!  3..6   dv_E, dv_N, dv_U           velocity error (m/s)
//!  6..9   dLat, dLon, dh             position error (rad, rad, m)
//!  9..12  dKg11, dKg22, dKg33        gyro scale factor error
//! 12..15  dKg21, dKg31, dKg32        gyro mounting error
//! 15..18  dKa11, dKa22, dKa33        accelerometer scale factor error
//! 18..24  dKa12 dKa13 dKa21 dKa23 dKa31 dKa32   accelerometer mounting error
//! 24..27  eps_x, eps_y, eps_z        gyro bias (rad/s)
//! 27..30  nab_x, nab_y, nab_z        accelerometer bias (m/s^2)
//! ```
//!
//! with six white-noise inputs `[w_gx w_gy w_gz | w_ax w_ay w_az]`. All IMU
//! parameter states are random constants (zero dynamics rows). The attitude
//! and velocity error equations follow the phi-angle ENU model; in static
//! level conditions they reduce to
//!
//! ```text
//!  phi'  = phi x w_ie_n - eps_n
//!  dv'   = g_n x phi + C_b^n dKa C_n^b g_n + nab_n
//!  dLat' = dv_N / (R_M + h),    dLon' = sec(L) dv_E / (R_N + h)
//! ```
//!
//! The gyro triad carries the three lower-triangle mounting terms only; the
//! accelerometer triad carries all six off-diagonals.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::decomposition::{SourceGroup, SourcePartition};
use crate::earth::Earth;
use crate::error::{Error, Result};

/// State dimension of the error model.
pub const STATE_DIM: usize = 30;
/// Noise input dimension (gyro + accelerometer white noise).
pub const NOISE_DIM: usize = 6;

// State index blocks.
pub const ATT: usize = 0;
pub const VEL: usize = 3;
pub const POS_LAT: usize = 6;
pub const POS_LON: usize = 7;
pub const POS_H: usize = 8;
pub const GYRO_SF: usize = 9;
pub const GYRO_MOUNT: usize = 12;
pub const ACC_SF: usize = 15;
pub const ACC_MOUNT: usize = 18;
pub const GYRO_BIAS: usize = 24;
pub const ACC_BIAS: usize = 27;

/// 1-sigma IMU and initial-condition specification, all SI.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSpec {
    /// IMU sample rate, Hz.
    pub sample_rate: f64,
    /// Initial attitude error [pitch, roll, yaw] -> [E, N, U], rad.
    pub init_att_err: Vector3<f64>,
    /// Initial velocity error [E, N, U], m/s.
    pub init_vel_err: Vector3<f64>,
    /// Initial position error [north, east, vertical], m.
    pub init_pos_err: Vector3<f64>,
    /// Gyro bias per axis, rad/s.
    pub gyro_bias: Vector3<f64>,
    /// Accelerometer bias per axis, m/s^2.
    pub acc_bias: Vector3<f64>,
    /// Gyro scale factor error per axis, dimensionless.
    pub gyro_sf: Vector3<f64>,
    /// Accelerometer scale factor error per axis, dimensionless.
    pub acc_sf: Vector3<f64>,
    /// Gyro mounting error [Kg21, Kg31, Kg32], rad.
    pub gyro_mount: Vector3<f64>,
    /// Accelerometer mounting error [Ka12, Ka13, Ka21, Ka23, Ka31, Ka32], rad.
    pub acc_mount: [f64; 6],
    /// Angle random walk per axis, rad/sqrt(s).
    pub arw: Vector3<f64>,
    /// Velocity random walk (white acceleration noise) per axis,
    /// (m/s^2)/sqrt(Hz).
    pub vrw: Vector3<f64>,
}

impl ImuSpec {
    /// All-zero spec at the given sample rate; useful for isolating sources.
    pub fn zeros(sample_rate: f64) -> Self {
        ImuSpec {
            sample_rate,
            init_att_err: Vector3::zeros(),
            init_vel_err: Vector3::zeros(),
            init_pos_err: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            acc_bias: Vector3::zeros(),
            gyro_sf: Vector3::zeros(),
            acc_sf: Vector3::zeros(),
            gyro_mount: Vector3::zeros(),
            acc_mount: [0.0; 6],
            arw: Vector3::zeros(),
            vrw: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::InvalidArgument("sample_rate must be positive".into()));
        }
        let all = self
            .init_att_err
            .iter()
            .chain(self.init_vel_err.iter())
            .chain(self.init_pos_err.iter())
            .chain(self.gyro_bias.iter())
            .chain(self.acc_bias.iter())
            .chain(self.gyro_sf.iter())
            .chain(self.acc_sf.iter())
            .chain(self.gyro_mount.iter())
            .chain(self.acc_mount.iter())
            .chain(self.arw.iter())
            .chain(self.vrw.iter());
        for &v in all {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(
                    "IMU spec entries are 1-sigma magnitudes and must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Vehicle truth state and IMU truth outputs at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    /// Epoch, s.
    pub t: f64,
    /// Body-to-ENU direction cosine matrix.
    pub cbn: Matrix3<f64>,
    /// Body angular rate w.r.t. inertial, rad/s.
    pub omega_ib_b: Vector3<f64>,
    /// Specific force in body frame, m/s^2.
    pub f_b: Vector3<f64>,
    /// Geodetic latitude, rad.
    pub lat: f64,
    /// Longitude, rad.
    pub lon: f64,
    /// Altitude, m.
    pub h: f64,
    /// ENU velocity, m/s.
    pub v_n: Vector3<f64>,
}

/// Model configuration: ellipsoid constants plus the vertical-channel switch.
///
/// With `vertical_channel` off the dv_U and dh states are frozen (rows and
/// columns zeroed), which reproduces the 28-source horizontal accounting.
#[derive(Debug, Clone)]
pub struct SinsModelConfig {
    pub earth: Earth,
    pub vertical_channel: bool,
}

impl Default for SinsModelConfig {
    fn default() -> Self {
        SinsModelConfig { earth: Earth::default(), vertical_channel: false }
    }
}

/// Partition granularity for the source accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// One group per scalar error source (28 or 30 initial + 6 noise).
    PerAxis,
    /// One group per error category (9 or 10 initial + 2 noise).
    PerCategory,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn check_sample(s: &TrajectorySample, margin_rad: f64) -> Result<()> {
    let ortho = (s.cbn.transpose() * s.cbn - Matrix3::identity()).norm();
    if ortho > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "cbn is not orthonormal (||C'C - I|| = {ortho:e}) at t = {}",
            s.t
        )));
    }
    if s.lat.abs() >= std::f64::consts::FRAC_PI_2 - margin_rad {
        return Err(Error::Singularity(format!(
            "latitude {:.6} rad too close to the pole (sec L diverges)",
            s.lat
        )));
    }
    Ok(())
}

/// Gyro excitation matrix: maps the six gyro kappa states onto the sensed
/// angular-rate error, `dOmega = M_g * [dKg11 dKg22 dKg33 dKg21 dKg31 dKg32]`.
fn gyro_kappa(omega: &Vector3<f64>) -> DMatrix<f64> {
    let (wx, wy, wz) = (omega.x, omega.y, omega.z);
    DMatrix::from_row_slice(
        3,
        6,
        &[
            wx, 0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, wy, 0.0, wx, 0.0, 0.0, //
            0.0, 0.0, wz, 0.0, wx, wy,
        ],
    )
}

/// Accelerometer excitation matrix for the nine kappa states
/// `[dKa11 dKa22 dKa33 dKa12 dKa13 dKa21 dKa23 dKa31 dKa32]`.
fn acc_kappa(f_b: &Vector3<f64>) -> DMatrix<f64> {
    let (fx, fy, fz) = (f_b.x, f_b.y, f_b.z);
    DMatrix::from_row_slice(
        3,
        9,
        &[
            fx, 0.0, 0.0, fy, fz, 0.0, 0.0, 0.0, 0.0, //
            0.0, fy, 0.0, 0.0, 0.0, fx, fz, 0.0, 0.0, //
            0.0, 0.0, fz, 0.0, 0.0, 0.0, 0.0, fx, fy,
        ],
    )
}

fn set_block(f: &mut DMatrix<f64>, row: usize, col: usize, b: &Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            f[(row + i, col + j)] = b[(i, j)];
        }
    }
}

fn zero_row_col(f: &mut DMatrix<f64>, idx: usize) {
    for j in 0..f.ncols() {
        f[(idx, j)] = 0.0;
    }
    for i in 0..f.nrows() {
        f[(i, idx)] = 0.0;
    }
}

/// Build the 30x30 system matrix at one trajectory sample.
pub fn build_f(s: &TrajectorySample, cfg: &SinsModelConfig) -> Result<DMatrix<f64>> {
    check_sample(s, 0.1f64.to_radians())?;
    let e = &cfg.earth;
    let (rm, rn) = e.radii(s.lat);
    let rmh = rm + s.h;
    let rnh = rn + s.h;
    let (sl, cl) = (s.lat.sin(), s.lat.cos());
    let tl = sl / cl;
    let secl = 1.0 / cl;
    let omega = e.rate;
    let v = s.v_n;

    let w_ie_n = e.rate_n(s.lat);
    let w_en_n = Vector3::new(-v.y / rmh, v.x / rnh, v.x * tl / rnh);
    let w_in_n = w_ie_n + w_en_n;
    let f_n = s.cbn * s.f_b;

    let mut f = DMatrix::<f64>::zeros(STATE_DIM, STATE_DIM);

    // Attitude rows: phi' = phi x w_in + d(w_in) - C_b^n (M_g kappa_g + eps).
    set_block(&mut f, ATT, ATT, &(-skew(&w_in_n)));
    // d(w_en)/d(dv)
    let n_v = Matrix3::new(
        0.0, -1.0 / rmh, 0.0, //
        1.0 / rnh, 0.0, 0.0, //
        tl / rnh, 0.0, 0.0,
    );
    set_block(&mut f, ATT, VEL, &n_v);
    // d(w_in)/d(dLat) and d(w_in)/d(dh)
    let a_lat = Vector3::new(0.0, -omega * sl, omega * cl + v.x * secl * secl / rnh);
    let a_h = Vector3::new(v.y / (rmh * rmh), -v.x / (rnh * rnh), -v.x * tl / (rnh * rnh));
    for i in 0..3 {
        f[(ATT + i, POS_LAT)] = a_lat[i];
        f[(ATT + i, POS_H)] = a_h[i];
    }
    // Gyro scale/mounting and bias columns.
    let mg = gyro_kappa(&s.omega_ib_b);
    let cbn_mg = DMatrix::from_fn(3, 6, |i, j| {
        -(0..3).map(|k| s.cbn[(i, k)] * mg[(k, j)]).sum::<f64>()
    });
    for i in 0..3 {
        for j in 0..6 {
            f[(ATT + i, GYRO_SF + j)] = cbn_mg[(i, j)];
        }
    }
    set_block(&mut f, ATT, GYRO_BIAS, &(-s.cbn));

    // Velocity rows:
    // dv' = f_n x phi - (2 w_ie + w_en) x dv + v x (2 dw_ie + dw_en)
    //       + C_b^n (M_a kappa_a + nab) + dg.
    // f_n x phi, not phi x f_n: the specific-force cross product must carry
    // this sign for the tilt/velocity/craft-rate (Schuler) loop to be
    // neutrally stable; the opposite sign turns the 84-minute oscillation
    // into exponential growth.
    set_block(&mut f, VEL, ATT, &skew(&f_n));
    let sv = skew(&v);
    set_block(&mut f, VEL, VEL, &(-skew(&(2.0 * w_ie_n + w_en_n)) + sv * n_v));
    let b_lat = Vector3::new(0.0, -2.0 * omega * sl, 2.0 * omega * cl + v.x * secl * secl / rnh);
    let vel_lat = sv * b_lat;
    let vel_h = sv * a_h;
    for i in 0..3 {
        f[(VEL + i, POS_LAT)] = vel_lat[i];
        f[(VEL + i, POS_H)] = vel_h[i];
    }
    // Gravity decreases with altitude: dg_U = +2 g0 / a * dh.
    f[(VEL + 2, POS_H)] += 2.0 * e.gravity0 / e.equatorial_radius;
    // Accelerometer scale/mounting and bias columns.
    let ma = acc_kappa(&s.f_b);
    for i in 0..3 {
        for j in 0..9 {
            f[(VEL + i, ACC_SF + j)] =
                (0..3).map(|k| s.cbn[(i, k)] * ma[(k, j)]).sum::<f64>();
        }
    }
    set_block(&mut f, VEL, ACC_BIAS, &s.cbn);

    // Position rows.
    f[(POS_LAT, VEL + 1)] = 1.0 / rmh;
    f[(POS_LAT, POS_H)] = -v.y / (rmh * rmh);
    f[(POS_LON, VEL)] = secl / rnh;
    f[(POS_LON, POS_LAT)] = v.x * secl * tl / rnh;
    f[(POS_LON, POS_H)] = -v.x * secl / (rnh * rnh);
    f[(POS_H, VEL + 2)] = 1.0;

    // IMU parameter states are random constants; their rows stay zero.

    if !cfg.vertical_channel {
        zero_row_col(&mut f, VEL + 2);
        zero_row_col(&mut f, POS_H);
    }
    Ok(f)
}

/// Build the 30x6 noise distribution matrix: gyro noise enters the attitude
/// rows through -C_b^n, accelerometer noise the velocity rows through +C_b^n.
pub fn build_g(s: &TrajectorySample, cfg: &SinsModelConfig) -> Result<DMatrix<f64>> {
    check_sample(s, 0.1f64.to_radians())?;
    let mut g = DMatrix::<f64>::zeros(STATE_DIM, NOISE_DIM);
    for i in 0..3 {
        for j in 0..3 {
            g[(ATT + i, j)] = -s.cbn[(i, j)];
            g[(VEL + i, 3 + j)] = s.cbn[(i, j)];
        }
    }
    if !cfg.vertical_channel {
        for j in 0..NOISE_DIM {
            g[(VEL + 2, j)] = 0.0;
        }
    }
    Ok(g)
}

/// Diagonal initial covariance from the 1-sigma spec. Position errors are
/// given in metres and converted to radians at the initial position.
pub fn initial_covariance(
    spec: &ImuSpec,
    lat: f64,
    h: f64,
    cfg: &SinsModelConfig,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (rm, rn) = cfg.earth.radii(lat);
    let mut d = DVector::<f64>::zeros(STATE_DIM);
    for i in 0..3 {
        d[ATT + i] = spec.init_att_err[i];
        d[VEL + i] = spec.init_vel_err[i];
        d[GYRO_SF + i] = spec.gyro_sf[i];
        d[GYRO_MOUNT + i] = spec.gyro_mount[i];
        d[ACC_SF + i] = spec.acc_sf[i];
        d[GYRO_BIAS + i] = spec.gyro_bias[i];
        d[ACC_BIAS + i] = spec.acc_bias[i];
    }
    for i in 0..6 {
        d[ACC_MOUNT + i] = spec.acc_mount[i];
    }
    d[POS_LAT] = spec.init_pos_err[0] / (rm + h);
    d[POS_LON] = spec.init_pos_err[1] / ((rn + h) * lat.cos());
    d[POS_H] = spec.init_pos_err[2];
    Ok(DMatrix::from_diagonal(&d.map(|v| v * v)))
}

/// Diagonal continuous noise PSD: `[arw^2 per axis, vrw^2 per axis]`.
pub fn noise_psd(spec: &ImuSpec) -> DMatrix<f64> {
    let mut d = DVector::<f64>::zeros(NOISE_DIM);
    for i in 0..3 {
        d[i] = spec.arw[i] * spec.arw[i];
        d[3 + i] = spec.vrw[i] * spec.vrw[i];
    }
    DMatrix::from_diagonal(&d)
}

/// The Table-ordered source partition.
pub fn source_partition(granularity: Granularity, vertical_channel: bool) -> SourcePartition {
    let g = |label: &str, idx: Vec<usize>| SourceGroup::new(label, idx);
    match granularity {
        Granularity::PerAxis => {
            let mut initial = vec![
                g("init_att_E", vec![ATT]),
                g("init_att_N", vec![ATT + 1]),
                g("init_att_U", vec![ATT + 2]),
                g("init_vel_E", vec![VEL]),
                g("init_vel_N", vec![VEL + 1]),
                g("init_pos_lat", vec![POS_LAT]),
                g("init_pos_lon", vec![POS_LON]),
                g("gyro_sf_x", vec![GYRO_SF]),
                g("gyro_sf_y", vec![GYRO_SF + 1]),
                g("gyro_sf_z", vec![GYRO_SF + 2]),
                g("gyro_mount_yx", vec![GYRO_MOUNT]),
                g("gyro_mount_zx", vec![GYRO_MOUNT + 1]),
                g("gyro_mount_zy", vec![GYRO_MOUNT + 2]),
                g("acc_sf_x", vec![ACC_SF]),
                g("acc_sf_y", vec![ACC_SF + 1]),
                g("acc_sf_z", vec![ACC_SF + 2]),
                g("acc_mount_xy", vec![ACC_MOUNT]),
                g("acc_mount_xz", vec![ACC_MOUNT + 1]),
                g("acc_mount_yx", vec![ACC_MOUNT + 2]),
                g("acc_mount_yz", vec![ACC_MOUNT + 3]),
                g("acc_mount_zx", vec![ACC_MOUNT + 4]),
                g("acc_mount_zy", vec![ACC_MOUNT + 5]),
                g("gyro_bias_x", vec![GYRO_BIAS]),
                g("gyro_bias_y", vec![GYRO_BIAS + 1]),
                g("gyro_bias_z", vec![GYRO_BIAS + 2]),
                g("acc_bias_x", vec![ACC_BIAS]),
                g("acc_bias_y", vec![ACC_BIAS + 1]),
                g("acc_bias_z", vec![ACC_BIAS + 2]),
            ];
            if vertical_channel {
                initial.push(g("init_vel_U", vec![VEL + 2]));
                initial.push(g("init_pos_h", vec![POS_H]));
            }
            let noise = vec![
                g("gyro_noise_x", vec![0]),
                g("gyro_noise_y", vec![1]),
                g("gyro_noise_z", vec![2]),
                g("acc_noise_x", vec![3]),
                g("acc_noise_y", vec![4]),
                g("acc_noise_z", vec![5]),
            ];
            SourcePartition { initial_groups: initial, noise_groups: noise }
        }
        Granularity::PerCategory => {
            let vel = if vertical_channel {
                vec![VEL, VEL + 1, VEL + 2]
            } else {
                vec![VEL, VEL + 1]
            };
            let pos = if vertical_channel {
                vec![POS_LAT, POS_LON, POS_H]
            } else {
                vec![POS_LAT, POS_LON]
            };
            let initial = vec![
                g("init_att", vec![ATT, ATT + 1, ATT + 2]),
                g("init_vel", vel),
                g("init_pos", pos),
                g("gyro_sf", vec![GYRO_SF, GYRO_SF + 1, GYRO_SF + 2]),
                g("gyro_mount", vec![GYRO_MOUNT, GYRO_MOUNT + 1, GYRO_MOUNT + 2]),
                g("acc_sf", vec![ACC_SF, ACC_SF + 1, ACC_SF + 2]),
                g("acc_mount", (ACC_MOUNT..ACC_MOUNT + 6).collect()),
                g("gyro_bias", vec![GYRO_BIAS, GYRO_BIAS + 1, GYRO_BIAS + 2]),
                g("acc_bias", vec![ACC_BIAS, ACC_BIAS + 1, ACC_BIAS + 2]),
            ];
            let noise = vec![
                g("gyro_noise", vec![0, 1, 2]),
                g("acc_noise", vec![3, 4, 5]),
            ];
            SourcePartition { initial_groups: initial, noise_groups: noise }
        }
    }
}

/// Default budget outputs for the model (7 without the vertical channel,
/// 9 with it).
pub fn default_outputs(vertical_channel: bool) -> Vec<crate::decomposition::OutputDef> {
    use crate::decomposition::OutputDef as O;
    let mut outs = vec![
        O::new("att_E", ATT),
        O::new("att_N", ATT + 1),
        O::new("att_U", ATT + 2),
        O::new("vel_E", VEL),
        O::new("vel_N", VEL + 1),
    ];
    if vertical_channel {
        outs.push(O::new("vel_U", VEL + 2));
    }
    outs.push(O::new("pos_lat", POS_LAT));
    outs.push(O::new("pos_lon", POS_LON));
    if vertical_channel {
        outs.push(O::new("pos_h", POS_H));
    }
    outs
}

/// Fixed-step RK4 integration of the static attitude error equation
/// `phi' = phi x w_ie_n - eps_n` over [0, t]; analytic oracle for tests.
pub fn static_reference(
    phi0: &Vector3<f64>,
    eps_n: &Vector3<f64>,
    lat: f64,
    t: f64,
    earth: &Earth,
) -> Vector3<f64> {
    let w = earth.rate_n(lat);
    let deriv = |phi: &Vector3<f64>| phi.cross(&w) - eps_n;
    let h = 0.01;
    let steps = (t / h).round() as usize;
    let mut phi = *phi0;
    for _ in 0..steps {
        let k1 = deriv(&phi);
        let k2 = deriv(&(phi + 0.5 * h * k1));
        let k3 = deriv(&(phi + 0.5 * h * k2));
        let k4 = deriv(&(phi + h * k3));
        phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    phi
}

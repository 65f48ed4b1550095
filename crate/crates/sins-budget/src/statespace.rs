//! Generic linear time-varying state-space machinery.
//!
//! Continuous models `x' = F(t) x + G(t) w`, `E[w w'] = Qc(t)`, are
//! discretized over a budget step into a transition matrix and a discrete
//! process-noise covariance, and covariances/states are propagated with the
//! usual recursions. Everything here is model-agnostic; the navigation
//! specifics live in [`crate::sins_model`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Continuous-time LTV model sampled through closures.
pub struct ContinuousModel {
    /// State dimension.
    pub n: usize,
    /// Noise dimension.
    pub m: usize,
    /// System matrix at time t (n x n).
    pub f_at: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    /// Input distribution matrix at time t (n x m).
    pub g_at: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    /// Continuous noise PSD at time t (m x m, symmetric PSD).
    pub qc_at: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
}

/// One discrete propagation interval.
#[derive(Debug, Clone)]
pub struct DiscreteStep {
    /// State transition matrix over the interval.
    pub phi: DMatrix<f64>,
    /// Discrete process-noise covariance (Gamma Q Gamma').
    pub qd: DMatrix<f64>,
    /// Interval length, s.
    pub dt: f64,
}

/// Force exact symmetry, `(a + a') / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor
/// series; terms are added until the remainder bound drops below
/// `tolerance`.
pub fn matrix_exponential(a: &DMatrix<f64>, tolerance: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "matrix_exponential expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix_exponential input".into()));
    }

    let n = a.nrows();
    let norm = one_norm(a);
    // Scale so the scaled norm is at most 1/2, then square back up.
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut k = 1.0f64;
    loop {
        term = (&term * &scaled) / k;
        result += &term;
        // With scaled norm r <= 1/2 the tail after this term is bounded by
        // ||term|| * r / (1 - r) <= ||term||.
        if one_norm(&term) <= 0.5 * tolerance {
            break;
        }
        k += 1.0;
        if k > 128.0 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Trapezoidal discrete-noise covariance
/// `qd = dt/2 * (phi G Qc G' phi' + G Qc G')`, symmetrized.
pub fn noise_covariance(
    phi: &DMatrix<f64>,
    g: &DMatrix<f64>,
    qc: &DMatrix<f64>,
    dt: f64,
) -> DMatrix<f64> {
    let b = g * qc * g.transpose();
    let mut qd = 0.5 * dt * (phi * &b * phi.transpose() + &b);
    symmetrize(&mut qd);
    qd
}

/// Discretize explicit matrices over one interval of length dt.
pub fn discretize_matrices(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    qc: &DMatrix<f64>,
    dt: f64,
) -> Result<DiscreteStep> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if f.iter().chain(g.iter()).chain(qc.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discretize model matrices".into()));
    }
    let phi = matrix_exponential(&(f * dt), 1e-13)?;
    let qd = noise_covariance(&phi, g, qc, dt);
    Ok(DiscreteStep { phi, qd, dt })
}

/// Discretize a continuous model over `[t, t + dt]`, sampling F, G, Qc at
/// the interval start.
pub fn discretize(model: &ContinuousModel, t: f64, dt: f64) -> Result<DiscreteStep> {
    let f = (model.f_at)(t);
    let g = (model.g_at)(t);
    let qc = (model.qc_at)(t);
    if f.nrows() != model.n || f.ncols() != model.n {
        return Err(Error::Dimension(format!(
            "F(t) is {}x{}, expected {0}x{0} with n={}",
            f.nrows(),
            f.ncols(),
            model.n
        )));
    }
    if g.nrows() != model.n || g.ncols() != model.m {
        return Err(Error::Dimension("G(t) dimensions do not match (n, m)".into()));
    }
    if qc.nrows() != model.m || qc.ncols() != model.m {
        return Err(Error::Dimension("Qc(t) dimensions do not match m".into()));
    }
    discretize_matrices(&f, &g, &qc, dt)
}

/// Covariance update `phi P phi' + qd`, symmetrized.
pub fn propagate_cov(step: &DiscreteStep, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = step.phi.nrows();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, transition expects {n}x{n}",
            p.nrows(),
            p.ncols()
        )));
    }
    let mut out = &step.phi * p * step.phi.transpose() + &step.qd;
    symmetrize(&mut out);
    Ok(out)
}

/// State update `phi x + u_effect`, where `u_effect` is the already
/// distributed input term.
pub fn propagate_state(
    step: &DiscreteStep,
    x: &DVector<f64>,
    u_effect: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = step.phi.nrows();
    if x.len() != n || u_effect.len() != n {
        return Err(Error::Dimension(format!(
            "state length {} / input length {}, transition expects {n}",
            x.len(),
            u_effect.len()
        )));
    }
    Ok(&step.phi * x + u_effect)
}

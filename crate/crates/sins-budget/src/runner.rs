//! Scenario propagation driver: builds per-interval discrete steps from the
//! trajectory and carries the decomposed and plain covariances side by side.

use nalgebra::DMatrix;

use crate::decomposition::{
    init_decomposed_cov, step_decomposed_cov, DecomposedCovariance, SourcePartition,
};
use crate::error::{Error, Result};
use crate::sins_model::{build_f, build_g, SinsModelConfig, TrajectorySample, NOISE_DIM};
use crate::statespace::{discretize_matrices, noise_covariance, propagate_cov, DiscreteStep};

/// One propagation interval with everything the consumers need: the plain
/// step, the per-noise-group injections, and a low-rank noise factor for
/// Monte-Carlo sampling (`inject * inject' = qd`).
pub struct PropagationStep {
    pub step: DiscreteStep,
    pub qd_groups: Vec<DMatrix<f64>>,
    pub inject: DMatrix<f64>,
    /// Column range of `inject` belonging to each noise group.
    pub group_cols: Vec<(usize, usize)>,
}

/// Square-root factor of a symmetric PSD matrix via eigendecomposition,
/// dropping negligible modes. Returns an n x r matrix S with S S' = a.
pub fn psd_sqrt_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max * 1e-14;
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let mut s = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        for r in 0..n {
            s[(r, c)] = eig.eigenvectors[(r, i)] * scale;
        }
    }
    s
}

/// Build the discrete step for the interval starting at `sample` (left-point
/// sampling of F, G, Qc) along with per-group injections and noise factors.
pub fn build_step(
    sample: &TrajectorySample,
    dt: f64,
    qc: &DMatrix<f64>,
    noise_groups: &[Vec<usize>],
    cfg: &SinsModelConfig,
) -> Result<PropagationStep> {
    let f = build_f(sample, cfg)?;
    let g = build_g(sample, cfg)?;
    let step = discretize_matrices(&f, &g, qc, dt)?;

    let mut qd_groups = Vec::with_capacity(noise_groups.len());
    let mut factors = Vec::with_capacity(noise_groups.len());
    let mut total_cols = 0usize;
    for indices in noise_groups {
        let mut qc_group = DMatrix::zeros(NOISE_DIM, NOISE_DIM);
        for &i in indices {
            for &j in indices {
                qc_group[(i, j)] = qc[(i, j)];
            }
        }
        qd_groups.push(noise_covariance(&step.phi, &g, &qc_group, dt));
        // Factor of the trapezoidal injection: sqrt(dt/2) [phi G S, G S].
        let s = psd_sqrt_factor(&qc_group);
        let gs = &g * &s;
        let phigs = &step.phi * &gs;
        let r = s.ncols();
        let mut fac = DMatrix::zeros(phigs.nrows(), 2 * r);
        let scale = (dt / 2.0).sqrt();
        for c in 0..r {
            for row in 0..fac.nrows() {
                fac[(row, c)] = scale * phigs[(row, c)];
                fac[(row, r + c)] = scale * gs[(row, c)];
            }
        }
        total_cols += 2 * r;
        factors.push(fac);
    }

    let mut inject = DMatrix::zeros(step.phi.nrows(), total_cols);
    let mut group_cols = Vec::with_capacity(factors.len());
    let mut col = 0usize;
    for fac in &factors {
        group_cols.push((col, col + fac.ncols()));
        inject.view_mut((0, col), (fac.nrows(), fac.ncols())).copy_from(fac);
        col += fac.ncols();
    }
    Ok(PropagationStep { step, qd_groups, inject, group_cols })
}

/// Noise-coverage check: every noise axis with nonzero PSD must be owned by
/// some noise group, otherwise variance would silently leak out of the
/// decomposition.
fn check_noise_coverage(qc: &DMatrix<f64>, groups: &[Vec<usize>]) -> Result<()> {
    let mut covered = vec![false; qc.nrows()];
    for g in groups {
        for &i in g {
            covered[i] = true;
        }
    }
    for i in 0..qc.nrows() {
        if qc[(i, i)] != 0.0 && !covered[i] {
            return Err(Error::Partition(format!(
                "noise axis {i} has nonzero PSD but no noise group covers it"
            )));
        }
    }
    Ok(())
}

/// Snapshot of the run at a report epoch.
pub struct BudgetEpoch {
    pub t: f64,
    pub decomposed: DecomposedCovariance,
    pub plain: DMatrix<f64>,
}

/// Result of a budget propagation run.
pub struct BudgetRun {
    pub epochs: Vec<BudgetEpoch>,
    /// Discrete steps kept for the Monte-Carlo oracle, when requested.
    pub mc_steps: Vec<PropagationStep>,
}

/// Propagate the decomposed covariance (and the plain recursion alongside)
/// over the sampled trajectory, snapshotting at each requested epoch.
/// `keep_steps` retains the per-interval data for Monte-Carlo reuse.
pub fn run_budget(
    samples: &[TrajectorySample],
    p0: &DMatrix<f64>,
    qc: &DMatrix<f64>,
    partition: &SourcePartition,
    cfg: &SinsModelConfig,
    report_epochs: &[f64],
    keep_steps: bool,
) -> Result<BudgetRun> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two trajectory samples to propagate".into(),
        ));
    }
    let noise_indices: Vec<Vec<usize>> = partition
        .noise_groups
        .iter()
        .map(|g| g.indices.clone())
        .collect();
    check_noise_coverage(qc, &noise_indices)?;

    let mut decomposed = init_decomposed_cov(p0, partition)?;
    decomposed.t = samples[0].t;
    let mut plain = p0.clone();
    let mut epochs = Vec::new();
    let mut mc_steps = Vec::new();

    let wants = |t: f64, dt: f64| {
        report_epochs.iter().any(|&e| (e - t).abs() < 0.5 * dt)
    };
    let first_dt = samples[1].t - samples[0].t;
    if wants(samples[0].t, first_dt) {
        epochs.push(BudgetEpoch {
            t: samples[0].t,
            decomposed: decomposed.clone(),
            plain: plain.clone(),
        });
    }

    for window in samples.windows(2) {
        let (a, b) = (&window[0], &window[1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "non-increasing sample times {} -> {}",
                a.t, b.t
            )));
        }
        let prop = build_step(a, dt, qc, &noise_indices, cfg)?;
        decomposed = step_decomposed_cov(&prop.step, &prop.qd_groups, &decomposed)?;
        decomposed.t = b.t;
        plain = propagate_cov(&prop.step, &plain)?;
        if wants(b.t, dt) {
            epochs.push(BudgetEpoch {
                t: b.t,
                decomposed: decomposed.clone(),
                plain: plain.clone(),
            });
        }
        if keep_steps {
            mc_steps.push(prop);
        }
    }
    Ok(BudgetRun { epochs, mc_steps })
}

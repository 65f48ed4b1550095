//! Monte-Carlo validation of the analytic budget.
//!
//! Each ensemble simulates the same discrete recursion the covariance
//! propagation uses, with one error source active at a time. Rather than
//! looping members through every step, the final state is written as
//!
//! ```text
//! X_n = T x0 + sum_k M_k z_k,   T = Phi_{n-1} ... Phi_0,
//!                               M_k = Phi_{n-1} ... Phi_{k+1} A_k,
//! ```
//!
//! where `A_k` is the per-step noise injection factor (`A_k A_k' = Qd_k`).
//! The products are computed once in a single backward pass, after which each
//! member costs one pass of small mat-vecs. This is an exact restatement of
//! the step-by-step simulation, not an approximation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::decomposition::{DecomposedCovariance, OutputDef, SourcePartition};
use crate::error::{Error, Result};
use crate::runner::PropagationStep;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent, reproducible stream per (run seed, ensemble, member).
fn member_rng(seed: u64, source: u64, member: u64) -> ChaCha12Rng {
    let mut st = seed;
    let a = splitmix64(&mut st);
    st ^= source.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(a);
    let b = splitmix64(&mut st);
    st ^= member.wrapping_mul(0xDB4F_0B91_75AE_2165).wrapping_add(b);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut st).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Backward pass producing the start-to-end transition `T` and the propagated
/// injection factors `M_k` for every step.
pub fn transition_products(steps: &[PropagationStep]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = steps
        .first()
        .map(|s| s.step.phi.nrows())
        .unwrap_or(0);
    let mut suffix = DMatrix::identity(n, n);
    let mut m_mats: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); steps.len()];
    for k in (0..steps.len()).rev() {
        m_mats[k] = &suffix * &steps[k].inject;
        suffix = &suffix * &steps[k].step.phi;
    }
    (suffix, m_mats)
}

enum Activation<'a> {
    All,
    Initial(&'a [usize]),
    Noise(usize),
}

/// Per-state sample variances for the full ensemble and for each
/// single-source ensemble.
pub struct EnsembleStats {
    pub members: usize,
    pub total: DVector<f64>,
    pub per_initial: Vec<DVector<f64>>,
    pub per_noise: Vec<DVector<f64>>,
}

fn run_ensemble(
    t_mat: &DMatrix<f64>,
    m_mats: &[DMatrix<f64>],
    steps: &[PropagationStep],
    sigma0: &DVector<f64>,
    activation: &Activation,
    members: usize,
    seed: u64,
    source_id: u64,
) -> DVector<f64> {
    let n = t_mat.nrows();
    let mut finals: Vec<DVector<f64>> = Vec::with_capacity(members);
    for member in 0..members {
        let mut rng = member_rng(seed, source_id, member as u64);
        let mut x = DVector::zeros(n);
        // Initial draw, in ascending state order, restricted to the active
        // indices so that each ensemble's stream is self-contained.
        match activation {
            Activation::All => {
                for i in 0..n {
                    if sigma0[i] != 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        x[i] = sigma0[i] * z;
                    }
                }
            }
            Activation::Initial(indices) => {
                for &i in *indices {
                    if sigma0[i] != 0.0 {
                        let z: f64 = rng.sample(StandardNormal);
                        x[i] = sigma0[i] * z;
                    }
                }
            }
            Activation::Noise(_) => {}
        }
        let mut state = t_mat * &x;
        for (k, m) in m_mats.iter().enumerate() {
            let (lo, hi) = match activation {
                Activation::All => (0, m.ncols()),
                Activation::Initial(_) => (0, 0),
                Activation::Noise(g) => steps[k].group_cols[*g],
            };
            for c in lo..hi {
                let z: f64 = rng.sample(StandardNormal);
                if z != 0.0 {
                    for r in 0..n {
                        state[r] += m[(r, c)] * z;
                    }
                }
            }
        }
        finals.push(state);
    }

    // Unbiased sample variance about the sample mean.
    let mut mean = DVector::zeros(n);
    for f in &finals {
        mean += f;
    }
    mean /= members as f64;
    let mut var = DVector::zeros(n);
    for f in &finals {
        let d = f - &mean;
        for i in 0..n {
            var[i] += d[i] * d[i];
        }
    }
    var / (members as f64 - 1.0)
}

/// Run the full ensemble plus one ensemble per error source. `p0` must be
/// the diagonal initial covariance used for the analytic run.
pub fn simulate_ensemble(
    steps: &[PropagationStep],
    p0: &DMatrix<f64>,
    partition: &SourcePartition,
    members: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    if members < 2 {
        return Err(Error::InvalidArgument(format!(
            "Monte-Carlo needs at least 2 members, got {members}"
        )));
    }
    if steps.is_empty() {
        return Err(Error::InvalidArgument("no propagation steps given".into()));
    }
    let n = steps[0].step.phi.nrows();
    if p0.nrows() != n || p0.ncols() != n {
        return Err(Error::Dimension(format!(
            "initial covariance is {}x{}, expected {n}x{n}",
            p0.nrows(),
            p0.ncols()
        )));
    }
    let sigma0 = DVector::from_fn(n, |i, _| p0[(i, i)].max(0.0).sqrt());

    let (t_mat, m_mats) = transition_products(steps);

    let total = run_ensemble(&t_mat, &m_mats, steps, &sigma0, &Activation::All, members, seed, 0);
    let mut per_initial = Vec::with_capacity(partition.initial_groups.len());
    let mut source_id = 1u64;
    for g in &partition.initial_groups {
        per_initial.push(run_ensemble(
            &t_mat,
            &m_mats,
            steps,
            &sigma0,
            &Activation::Initial(&g.indices),
            members,
            seed,
            source_id,
        ));
        source_id += 1;
    }
    let mut per_noise = Vec::with_capacity(partition.noise_groups.len());
    for gi in 0..partition.noise_groups.len() {
        per_noise.push(run_ensemble(
            &t_mat,
            &m_mats,
            steps,
            &sigma0,
            &Activation::Noise(gi),
            members,
            seed,
            source_id,
        ));
        source_id += 1;
    }
    Ok(EnsembleStats { members, total, per_initial, per_noise })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStatus {
    Pass,
    Fail,
    /// Both the analytic and sampled variances are numerically zero; there is
    /// nothing to test.
    Degenerate,
}

impl std::fmt::Display for McStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            McStatus::Pass => write!(f, "pass"),
            McStatus::Fail => write!(f, "fail"),
            McStatus::Degenerate => write!(f, "degenerate"),
        }
    }
}

pub struct McCompareRow {
    pub source: String,
    pub output: String,
    pub analytic_var: f64,
    pub mc_var: f64,
    pub ratio: f64,
    pub status: McStatus,
}

const ZERO_VAR: f64 = 1e-300;

fn judge(analytic: f64, mc: f64, members: usize, lo: f64, hi: f64) -> (f64, McStatus) {
    if analytic < ZERO_VAR && mc < ZERO_VAR {
        return (f64::NAN, McStatus::Degenerate);
    }
    if analytic < ZERO_VAR {
        return (f64::INFINITY, McStatus::Fail);
    }
    let ratio = mc / analytic;
    let stat = (members as f64 - 1.0) * ratio;
    let status = if stat >= lo && stat <= hi { McStatus::Pass } else { McStatus::Fail };
    (ratio, status)
}

/// Two-sided chi-square test of each sampled variance against its analytic
/// counterpart at significance `alpha` (e.g. 0.01 for a 99% interval).
pub fn compare_budget(
    stats: &EnsembleStats,
    d: &DecomposedCovariance,
    partition: &SourcePartition,
    outputs: &[OutputDef],
    alpha: f64,
) -> Result<Vec<McCompareRow>> {
    if stats.per_initial.len() != d.pbar_parts.len()
        || stats.per_noise.len() != d.qbar_parts.len()
        || partition.initial_groups.len() != d.pbar_parts.len()
        || partition.noise_groups.len() != d.qbar_parts.len()
    {
        return Err(Error::Partition(
            "ensemble, decomposition, and partition group counts disagree".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    let dof = stats.members as f64 - 1.0;
    let chi2 = ChiSquared::new(dof)
        .map_err(|e| Error::InvalidArgument(format!("chi-square setup: {e}")))?;
    let lo = chi2.inverse_cdf(alpha / 2.0);
    let hi = chi2.inverse_cdf(1.0 - alpha / 2.0);

    let mut rows = Vec::new();
    let total = d.recompose();
    for out in outputs {
        let analytic = total[(out.index, out.index)];
        let mc = stats.total[out.index];
        let (ratio, status) = judge(analytic, mc, stats.members, lo, hi);
        rows.push(McCompareRow {
            source: "total".into(),
            output: out.label.clone(),
            analytic_var: analytic,
            mc_var: mc,
            ratio,
            status,
        });
    }
    for (gi, g) in partition.initial_groups.iter().enumerate() {
        for out in outputs {
            let analytic = d.pbar_parts[gi][(out.index, out.index)];
            let mc = stats.per_initial[gi][out.index];
            let (ratio, status) = judge(analytic, mc, stats.members, lo, hi);
            rows.push(McCompareRow {
                source: g.label.clone(),
                output: out.label.clone(),
                analytic_var: analytic,
                mc_var: mc,
                ratio,
                status,
            });
        }
    }
    for (gi, g) in partition.noise_groups.iter().enumerate() {
        for out in outputs {
            let analytic = d.qbar_parts[gi][(out.index, out.index)];
            let mc = stats.per_noise[gi][out.index];
            let (ratio, status) = judge(analytic, mc, stats.members, lo, hi);
            rows.push(McCompareRow {
                source: g.label.clone(),
                output: out.label.clone(),
                analytic_var: analytic,
                mc_var: mc,
                ratio,
                status,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::SourceGroup;
    use crate::statespace::DiscreteStep;

    /// Hand-built scalar step: x_{k+1} = x_k + w, var(w) = q dt.
    fn scalar_step(q: f64, dt: f64) -> PropagationStep {
        let phi = DMatrix::identity(1, 1);
        let qd = DMatrix::from_element(1, 1, q * dt);
        let inject = DMatrix::from_element(1, 1, (q * dt).sqrt());
        PropagationStep {
            step: DiscreteStep { phi: phi.clone(), qd: qd.clone(), dt },
            qd_groups: vec![qd],
            inject,
            group_cols: vec![(0, 1)],
        }
    }

    fn scalar_partition() -> SourcePartition {
        SourcePartition {
            initial_groups: vec![SourceGroup { label: "x0".into(), indices: vec![0] }],
            noise_groups: vec![SourceGroup { label: "w".into(), indices: vec![0] }],
        }
    }

    #[test]
    fn zero_inputs_give_zero_variance() {
        let steps: Vec<_> = (0..10).map(|_| scalar_step(0.0, 1.0)).collect();
        let p0 = DMatrix::zeros(1, 1);
        let stats = simulate_ensemble(&steps, &p0, &scalar_partition(), 50, 7).unwrap();
        assert_eq!(stats.total[0], 0.0);
        assert_eq!(stats.per_initial[0][0], 0.0);
        assert_eq!(stats.per_noise[0][0], 0.0);
    }

    #[test]
    fn random_walk_variance_matches_theory() {
        let q = 0.3;
        let n_steps = 100;
        let steps: Vec<_> = (0..n_steps).map(|_| scalar_step(q, 1.0)).collect();
        let p0 = DMatrix::zeros(1, 1);
        let stats = simulate_ensemble(&steps, &p0, &scalar_partition(), 10_000, 42).unwrap();
        let expect = q * n_steps as f64;
        assert!(
            (stats.per_noise[0][0] / expect - 1.0).abs() < 0.05,
            "got {}, want ~{expect}",
            stats.per_noise[0][0]
        );
        // With no initial uncertainty the noise ensemble and the full
        // ensemble are driven by identical statistics.
        assert!((stats.total[0] / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn initial_condition_is_transported() {
        // x_{k+1} = 2 x_k, no noise: var after 5 steps is 4^5 * var0.
        let phi = DMatrix::from_element(1, 1, 2.0);
        let steps: Vec<_> = (0..5)
            .map(|_| PropagationStep {
                step: DiscreteStep { phi: phi.clone(), qd: DMatrix::zeros(1, 1), dt: 1.0 },
                qd_groups: vec![DMatrix::zeros(1, 1)],
                inject: DMatrix::zeros(1, 1),
                group_cols: vec![(0, 1)],
            })
            .collect();
        let p0 = DMatrix::from_element(1, 1, 0.25);
        let stats = simulate_ensemble(&steps, &p0, &scalar_partition(), 4000, 3).unwrap();
        let expect = 4f64.powi(5) * 0.25;
        assert!((stats.per_initial[0][0] / expect - 1.0).abs() < 0.1);
    }

    #[test]
    fn transition_products_match_direct_product() {
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let steps: Vec<_> = (0..3)
            .map(|_| PropagationStep {
                step: DiscreteStep { phi: phi.clone(), qd: DMatrix::zeros(2, 2), dt: 1.0 },
                qd_groups: vec![DMatrix::zeros(2, 2)],
                inject: DMatrix::identity(2, 2),
                group_cols: vec![(0, 2)],
            })
            .collect();
        let (t, m) = transition_products(&steps);
        assert!((&t - &phi * &phi * &phi).norm() < 1e-14);
        // M_0 = phi^2 * I, M_2 = I.
        assert!((&m[0] - &phi * &phi).norm() < 1e-14);
        assert!((&m[2] - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn same_seed_is_bitwise_reproducible() {
        let steps: Vec<_> = (0..20).map(|_| scalar_step(0.1, 0.5)).collect();
        let p0 = DMatrix::from_element(1, 1, 1.0);
        let a = simulate_ensemble(&steps, &p0, &scalar_partition(), 100, 99).unwrap();
        let b = simulate_ensemble(&steps, &p0, &scalar_partition(), 100, 99).unwrap();
        assert_eq!(a.total[0].to_bits(), b.total[0].to_bits());
        assert_eq!(a.per_initial[0][0].to_bits(), b.per_initial[0][0].to_bits());
        assert_eq!(a.per_noise[0][0].to_bits(), b.per_noise[0][0].to_bits());
        let c = simulate_ensemble(&steps, &p0, &scalar_partition(), 100, 100).unwrap();
        assert_ne!(a.total[0].to_bits(), c.total[0].to_bits());
    }

    #[test]
    fn chi_square_flags_forced_mismatch() {
        use crate::decomposition::{init_decomposed_cov, step_decomposed_cov};
        let steps: Vec<_> = (0..50).map(|_| scalar_step(0.2, 1.0)).collect();
        let p0 = DMatrix::from_element(1, 1, 2.0);
        let partition = scalar_partition();
        let stats = simulate_ensemble(&steps, &p0, &partition, 1000, 11).unwrap();

        let mut d = init_decomposed_cov(&p0, &partition).unwrap();
        for s in &steps {
            d = step_decomposed_cov(&s.step, &s.qd_groups, &d).unwrap();
        }
        let outputs = [OutputDef { label: "x".into(), index: 0 }];
        let rows = compare_budget(&stats, &d, &partition, &outputs, 0.01).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.status == McStatus::Pass), "honest run should pass");

        // Corrupt the analytic side: inflate one part by 4x.
        d.pbar_parts[0] *= 4.0;
        let rows = compare_budget(&stats, &d, &partition, &outputs, 0.01).unwrap();
        let bad = rows.iter().find(|r| r.source == "x0").unwrap();
        assert_eq!(bad.status, McStatus::Fail);
        assert!(bad.ratio < 0.5);
    }

    #[test]
    fn degenerate_sources_are_skipped_not_failed() {
        use crate::decomposition::{init_decomposed_cov, step_decomposed_cov};
        let steps: Vec<_> = (0..10).map(|_| scalar_step(0.0, 1.0)).collect();
        let p0 = DMatrix::zeros(1, 1);
        let partition = scalar_partition();
        let stats = simulate_ensemble(&steps, &p0, &partition, 100, 5).unwrap();
        let mut d = init_decomposed_cov(&p0, &partition).unwrap();
        for s in &steps {
            d = step_decomposed_cov(&s.step, &s.qd_groups, &d).unwrap();
        }
        let outputs = [OutputDef { label: "x".into(), index: 0 }];
        let rows = compare_budget(&stats, &d, &partition, &outputs, 0.01).unwrap();
        assert!(rows.iter().all(|r| r.status == McStatus::Degenerate));
    }

    #[test]
    fn bad_member_count_is_rejected() {
        let steps = vec![scalar_step(0.1, 1.0)];
        let p0 = DMatrix::zeros(1, 1);
        let err = simulate_ensemble(&steps, &p0, &scalar_partition(), 1, 0);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}

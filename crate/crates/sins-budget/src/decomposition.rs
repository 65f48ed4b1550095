//! Per-source decomposition of the state vector and covariance matrix.
//!
//! The propagation recursions are homogeneous in both the initial state and
//! each injected input, so the state (covariance) can be carried as one part
//! per error source whose sum always equals the undedecomposed propagation.
//! Initial-error parts propagate as `phi P phi'`; each stochastic part
//! additionally receives its own share of the discrete process noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::statespace::{symmetrize, DiscreteStep};

/// One error source: a label and the state (or noise) indices it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceGroup {
    pub label: String,
    pub indices: Vec<usize>,
}

impl SourceGroup {
    pub fn new(label: impl Into<String>, indices: Vec<usize>) -> Self {
        SourceGroup { label: label.into(), indices }
    }
}

/// Ordered grouping of initial-error and noise sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePartition {
    /// Groups indexing into the state vector (initial errors).
    pub initial_groups: Vec<SourceGroup>,
    /// Groups indexing into the noise vector (stochastic errors).
    pub noise_groups: Vec<SourceGroup>,
}

impl SourcePartition {
    /// Check disjointness and index bounds against state dim n and noise dim m.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        for (groups, dim, what) in [
            (&self.initial_groups, n, "initial"),
            (&self.noise_groups, m, "noise"),
        ] {
            let mut seen = std::collections::HashSet::new();
            for g in groups.iter() {
                for &i in &g.indices {
                    if i >= dim {
                        return Err(Error::Partition(format!(
                            "{what} group '{}' index {i} out of range (dim {dim})",
                            g.label
                        )));
                    }
                    if !seen.insert(i) {
                        return Err(Error::Partition(format!(
                            "{what} groups overlap at index {i} ('{}')",
                            g.label
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// State indices covered by some initial group.
    pub fn covered_state_indices(&self, n: usize) -> Vec<bool> {
        let mut covered = vec![false; n];
        for g in &self.initial_groups {
            for &i in &g.indices {
                covered[i] = true;
            }
        }
        covered
    }
}

/// Deterministic decomposition: one state part per initial group plus one
/// per input group; their sum is the jointly propagated state.
#[derive(Debug, Clone)]
pub struct DecomposedState {
    pub xbar_parts: Vec<DVector<f64>>,
    pub ubar_parts: Vec<DVector<f64>>,
}

impl DecomposedState {
    /// Split an initial state into per-group parts (inputs start at zero).
    pub fn init(x0: &DVector<f64>, partition: &SourcePartition) -> Result<Self> {
        let n = x0.len();
        partition.validate(n, usize::MAX)?;
        let xbar_parts = partition
            .initial_groups
            .iter()
            .map(|g| {
                let mut v = DVector::zeros(n);
                for &i in &g.indices {
                    v[i] = x0[i];
                }
                v
            })
            .collect();
        let ubar_parts = partition
            .noise_groups
            .iter()
            .map(|_| DVector::zeros(n))
            .collect();
        Ok(DecomposedState { xbar_parts, ubar_parts })
    }

    /// Sum of all parts.
    pub fn recompose(&self) -> DVector<f64> {
        let n = self
            .xbar_parts
            .first()
            .or(self.ubar_parts.first())
            .map(|v| v.len())
            .unwrap_or(0);
        let mut sum = DVector::zeros(n);
        for v in self.xbar_parts.iter().chain(self.ubar_parts.iter()) {
            sum += v;
        }
        sum
    }
}

/// Per-source split of the covariance: initial parts plus noise parts whose
/// sum is the total covariance at epoch `t`.
#[derive(Debug, Clone)]
pub struct DecomposedCovariance {
    pub pbar_parts: Vec<DMatrix<f64>>,
    pub qbar_parts: Vec<DMatrix<f64>>,
    /// Current epoch, s.
    pub t: f64,
}

/// Split a diagonal initial covariance by initial group; noise parts start
/// at zero.
///
/// Any nonzero diagonal entry not owned by a group is an error: silently
/// dropping variance would corrupt every later share.
pub fn init_decomposed_cov(
    p0: &DMatrix<f64>,
    partition: &SourcePartition,
) -> Result<DecomposedCovariance> {
    let n = p0.nrows();
    if p0.ncols() != n {
        return Err(Error::Dimension("P0 must be square".into()));
    }
    partition.validate(n, usize::MAX)?;
    for i in 0..n {
        for j in 0..n {
            if i != j && p0[(i, j)] != 0.0 {
                return Err(Error::InvalidArgument(
                    "P0 must be diagonal: cross-covariances have no unambiguous owner".into(),
                ));
            }
        }
    }
    let covered = partition.covered_state_indices(n);
    for i in 0..n {
        if p0[(i, i)] != 0.0 && !covered[i] {
            return Err(Error::Partition(format!(
                "P0 has variance {} at state {i} which no initial group covers",
                p0[(i, i)]
            )));
        }
        if p0[(i, i)] < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "P0 diagonal entry {i} is negative"
            )));
        }
    }

    let pbar_parts = partition
        .initial_groups
        .iter()
        .map(|g| {
            let mut m = DMatrix::zeros(n, n);
            for &i in &g.indices {
                m[(i, i)] = p0[(i, i)];
            }
            m
        })
        .collect();
    let qbar_parts = partition
        .noise_groups
        .iter()
        .map(|_| DMatrix::zeros(n, n))
        .collect();
    Ok(DecomposedCovariance { pbar_parts, qbar_parts, t: 0.0 })
}

impl DecomposedCovariance {
    /// Elementwise sum of all parts.
    pub fn recompose(&self) -> DMatrix<f64> {
        let n = self
            .pbar_parts
            .first()
            .or(self.qbar_parts.first())
            .map(|m| m.nrows())
            .unwrap_or(0);
        let mut sum = DMatrix::zeros(n, n);
        for m in self.pbar_parts.iter().chain(self.qbar_parts.iter()) {
            sum += m;
        }
        sum
    }
}

/// Advance the decomposed covariance one step. `qd_per_group[j]` carries the
/// discrete noise injection with only noise group j active; the injections
/// must sum to `step.qd`.
pub fn step_decomposed_cov(
    step: &DiscreteStep,
    qd_per_group: &[DMatrix<f64>],
    d: &DecomposedCovariance,
) -> Result<DecomposedCovariance> {
    if qd_per_group.len() != d.qbar_parts.len() {
        return Err(Error::Partition(format!(
            "{} noise injections supplied for {} noise groups",
            qd_per_group.len(),
            d.qbar_parts.len()
        )));
    }
    let mut sum = DMatrix::zeros(step.qd.nrows(), step.qd.ncols());
    for q in qd_per_group {
        sum += q;
    }
    let mismatch = (&sum - &step.qd).norm();
    if mismatch > 1e-12 * step.qd.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Partition(format!(
            "noise injections do not sum to step.qd (residual {mismatch:e})"
        )));
    }

    let phi_t = step.phi.transpose();
    let pbar_parts = d
        .pbar_parts
        .iter()
        .map(|p| {
            let mut out = &step.phi * p * &phi_t;
            symmetrize(&mut out);
            out
        })
        .collect();
    let qbar_parts = d
        .qbar_parts
        .iter()
        .zip(qd_per_group)
        .map(|(q, inj)| {
            let mut out = &step.phi * q * &phi_t + inj;
            symmetrize(&mut out);
            out
        })
        .collect();
    Ok(DecomposedCovariance {
        pbar_parts,
        qbar_parts,
        t: d.t + step.dt,
    })
}

/// Advance the decomposed state one step. `u_effect_per_group[j]` is the
/// already distributed input for input group j.
pub fn step_decomposed_state(
    step: &DiscreteStep,
    u_effect_per_group: &[DVector<f64>],
    s: &DecomposedState,
) -> Result<DecomposedState> {
    if u_effect_per_group.len() != s.ubar_parts.len() {
        return Err(Error::Partition(format!(
            "{} input effects supplied for {} input groups",
            u_effect_per_group.len(),
            s.ubar_parts.len()
        )));
    }
    let n = step.phi.nrows();
    for v in s.xbar_parts.iter().chain(s.ubar_parts.iter()) {
        if v.len() != n {
            return Err(Error::Dimension("decomposed state part length mismatch".into()));
        }
    }
    let xbar_parts = s.xbar_parts.iter().map(|x| &step.phi * x).collect();
    let ubar_parts = s
        .ubar_parts
        .iter()
        .zip(u_effect_per_group)
        .map(|(u, eff)| &step.phi * u + eff)
        .collect();
    Ok(DecomposedState { xbar_parts, ubar_parts })
}

/// One output channel of the budget: a label and its state index.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDef {
    pub label: String,
    pub index: usize,
}

impl OutputDef {
    pub fn new(label: impl Into<String>, index: usize) -> Self {
        OutputDef { label: label.into(), index }
    }
}

/// Per-source, per-output contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetEntry {
    /// Contribution standard deviation in the output state's units.
    pub sigma: f64,
    /// Variance fraction of the total at this output, in [0, 1].
    pub share: f64,
}

/// Variance attribution at one epoch: `entries[source][output]`.
#[derive(Debug, Clone)]
pub struct BudgetReport {
    pub epoch: f64,
    pub outputs: Vec<OutputDef>,
    pub sources: Vec<String>,
    pub entries: Vec<Vec<BudgetEntry>>,
}

impl BudgetReport {
    /// Total sigma per output (RSS over sources).
    pub fn total_sigma(&self, output: usize) -> f64 {
        self.entries
            .iter()
            .map(|row| row[output].sigma * row[output].sigma)
            .sum::<f64>()
            .sqrt()
    }

    pub fn source_index(&self, label: &str) -> Option<usize> {
        self.sources.iter().position(|s| s == label)
    }

    pub fn output_index(&self, label: &str) -> Option<usize> {
        self.outputs.iter().position(|o| o.label == label)
    }
}

/// Attribute the diagonal of the decomposed covariance at the requested
/// outputs. Shares are in the variance domain and sum to one per output
/// (unless the total variance is vanishing, in which case they are zero).
pub fn extract_budget(
    d: &DecomposedCovariance,
    partition: &SourcePartition,
    outputs: &[OutputDef],
) -> Result<BudgetReport> {
    let total = d.recompose();
    let n = total.nrows();
    for o in outputs {
        if o.index >= n {
            return Err(Error::Dimension(format!(
                "output '{}' index {} out of range (n = {n})",
                o.label, o.index
            )));
        }
    }
    if d.pbar_parts.len() != partition.initial_groups.len()
        || d.qbar_parts.len() != partition.noise_groups.len()
    {
        return Err(Error::Partition(
            "partition group counts do not match the decomposition".into(),
        ));
    }

    let sources: Vec<String> = partition
        .initial_groups
        .iter()
        .chain(partition.noise_groups.iter())
        .map(|g| g.label.clone())
        .collect();
    let parts = d.pbar_parts.iter().chain(d.qbar_parts.iter());

    let entries = parts
        .map(|part| {
            outputs
                .iter()
                .map(|o| {
                    let var = part[(o.index, o.index)];
                    let tot = total[(o.index, o.index)];
                    let share = if tot < 1e-300 { 0.0 } else { var.max(0.0) / tot };
                    BudgetEntry {
                        sigma: var.max(0.0).sqrt(),
                        share,
                    }
                })
                .collect()
        })
        .collect();

    Ok(BudgetReport {
        epoch: d.t,
        outputs: outputs.to_vec(),
        sources,
        entries,
    })
}

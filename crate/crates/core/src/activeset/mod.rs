//! Active-set solver for the AD³ subproblem of an arbitrary factor.
//!
//! The subproblem over a factor with variable vectors `a` (concatenated) and
//! factor scores `b` is
//!
//! ```text
//! minimize ½‖M v − a‖² − bᵀv   over v in the simplex of configurations,
//! ```
//!
//! where column `m_r` of `M` is the indicator of configuration `r`. Only a
//! small working set of configurations is ever materialized; new ones come
//! from a MAP oracle on the scores `b + Mᵀw`.

mod oracle;

pub use oracle::{
    dense_map_oracle, or_map_oracle, or_out_map_oracle, viterbi_map_oracle, xor_map_oracle,
    FactorOracle, MapOracle, MapOutcome, Masked, OracleError,
};

use thiserror::Error;

use crate::linalg;

/// Tolerance for treating two KKT solutions as equal.
const SAME_SOLUTION_TOL: f64 = 1e-12;
/// Negative weights above this are rounding noise and clamp to zero.
const CLAMP_TOL: f64 = 1e-12;
/// Slack on the optimality test `m_rᵀw + b_r <= tau`.
const OPTIMALITY_TOL: f64 = 1e-12;
/// A configuration already in the working set may violate by at most this.
const REPEAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActiveSetError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("oracle returned configuration {config:?} already in the working set with violation {violation:e}")]
    OracleInconsistency { config: Vec<usize>, violation: f64 },
    #[error("working set is empty")]
    EmptyWorkset,
    #[error("KKT system is degenerate beyond recovery")]
    Degenerate,
    #[error("expected {expected} variable scores, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Working set, weights and Gram matrix carried between calls.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetState {
    workset: Vec<Vec<usize>>,
    // factor log-potential of each working configuration
    theta: Vec<f64>,
    v: Vec<f64>,
    gram: Vec<Vec<f64>>,
    tau: f64,
}

impl ActiveSetState {
    fn with_config(config: Vec<usize>, theta: f64) -> Self {
        let deg = config.len() as f64;
        ActiveSetState {
            workset: vec![config],
            theta: vec![theta],
            v: vec![1.0],
            gram: vec![vec![deg]],
            tau: 0.0,
        }
    }

    pub fn workset(&self) -> &[Vec<usize>] {
        &self.workset
    }

    pub fn weights(&self) -> &[f64] {
        &self.v
    }

    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn push(&mut self, config: Vec<usize>, theta: f64) {
        let row: Vec<f64> = self
            .workset
            .iter()
            .map(|c| common_values(c, &config))
            .collect();
        for (g, &x) in self.gram.iter_mut().zip(&row) {
            g.push(x);
        }
        let mut last = row;
        last.push(config.len() as f64);
        self.gram.push(last);
        self.workset.push(config);
        self.theta.push(theta);
        self.v.push(0.0);
    }

    fn remove(&mut self, idx: usize) {
        self.workset.remove(idx);
        self.theta.remove(idx);
        self.v.remove(idx);
        self.gram.remove(idx);
        for g in &mut self.gram {
            g.remove(idx);
        }
    }
}

/// Number of positions where two configurations agree.
pub fn common_values(x: &[usize], y: &[usize]) -> f64 {
    x.iter().zip(y).filter(|(a, b)| a == b).count() as f64
}

/// Result of one subproblem solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    /// Per-variable marginals `M v`, concatenated like the input `a`.
    pub u: Vec<f64>,
    /// Configurations with positive weight.
    pub support: Vec<(Vec<usize>, f64)>,
    pub tau: f64,
    /// Whether the optimality test passed.
    pub exact: bool,
    pub inner_iterations: usize,
    pub oracle_calls: usize,
    /// `½‖Mv − a‖² − bᵀv` after initialization and after every inner iteration.
    pub objective_history: Vec<f64>,
    /// State to pass back in for a warm start.
    pub state: ActiveSetState,
}

/// Upper bound on the support of an optimal `v`.
pub fn support_bound(dims: &[usize]) -> usize {
    dims.iter().sum::<usize>() + 1 - dims.len()
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        out.push(acc);
        acc += d;
    }
    out
}

fn marginals(state: &ActiveSetState, offs: &[usize], len: usize) -> Vec<f64> {
    let mut u = vec![0.0; len];
    for (config, &w) in state.workset.iter().zip(&state.v) {
        for (k, &y) in config.iter().enumerate() {
            u[offs[k] + y] += w;
        }
    }
    u
}

fn column_dot(config: &[usize], offs: &[usize], x: &[f64]) -> f64 {
    config
        .iter()
        .enumerate()
        .map(|(k, &y)| x[offs[k] + y])
        .sum()
}

fn primal_objective(state: &ActiveSetState, a: &[f64], offs: &[usize], weight: f64) -> f64 {
    let u = marginals(state, offs, a.len());
    let sq: f64 = u.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum();
    let lin: f64 = state
        .theta
        .iter()
        .zip(&state.v)
        .map(|(t, w)| weight * t * w)
        .sum();
    0.5 * sq - lin
}

/// Solves the bordered system `[[G, 1], [1ᵀ, 0]] [v; tau] = [Mᵀa + b; 1]`
/// for the current working set. `None` when the system is singular.
pub fn solve_kkt(
    state: &ActiveSetState,
    a: &[f64],
    dims: &[usize],
    weight: f64,
) -> Result<Option<(Vec<f64>, f64)>, ActiveSetError> {
    let n = state.workset.len();
    if n == 0 {
        return Err(ActiveSetError::EmptyWorkset);
    }
    let offs = offsets(dims);
    let size = n + 1;
    let mut mat = vec![0.0; size * size];
    let mut rhs = vec![0.0; size];
    for r in 0..n {
        for s in 0..n {
            mat[r * size + s] = state.gram[r][s];
        }
        mat[r * size + n] = 1.0;
        mat[n * size + r] = 1.0;
        rhs[r] = column_dot(&state.workset[r], &offs, a) + weight * state.theta[r];
    }
    rhs[n] = 1.0;
    Ok(linalg::solve(mat, rhs).map(|mut x| {
        let tau = x.pop().expect("bordered system has a tau entry");
        // the last row only holds up to rounding
        normalize(&mut x);
        (x, tau)
    }))
}

/// Moves along a direction that keeps `M v` and `sum v` fixed while raising
/// `bᵀv`, until some weight hits zero, and drops that configuration.
fn resolve_degeneracy(
    state: &mut ActiveSetState,
    dims: &[usize],
    weight: f64,
) -> Result<(), ActiveSetError> {
    let n = state.workset.len();
    let offs = offsets(dims);
    let rows = dims.iter().sum::<usize>() + 1;
    let mut m = vec![0.0; rows * n];
    for (c, config) in state.workset.iter().enumerate() {
        for (k, &y) in config.iter().enumerate() {
            m[(offs[k] + y) * n + c] = 1.0;
        }
        m[(rows - 1) * n + c] = 1.0;
    }
    let basis = linalg::null_space(m, rows, n);
    let newest = n - 1;
    let mut d = basis
        .iter()
        .find(|v| v[newest] != 0.0)
        .or(basis.first())
        .cloned()
        .ok_or(ActiveSetError::Degenerate)?;
    let gain: f64 = d
        .iter()
        .zip(&state.theta)
        .map(|(x, t)| x * weight * t)
        .sum();
    if gain < 0.0 || (gain == 0.0 && d[newest] < 0.0) {
        d.iter_mut().for_each(|x| *x = -*x);
    }
    let mut block: Option<(usize, f64)> = None;
    for (j, (&dj, &vj)) in d.iter().zip(&state.v).enumerate() {
        if dj < 0.0 {
            let t = vj / -dj;
            if block.is_none_or(|(_, b)| t < b) {
                block = Some((j, t));
            }
        }
    }
    let (j, t) = block.ok_or(ActiveSetError::Degenerate)?;
    for (v, &dj) in state.v.iter_mut().zip(&d) {
        *v = (*v + t * dj).max(0.0);
    }
    state.remove(j);
    normalize(&mut state.v);
    Ok(())
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Runs at most `max_inner` iterations of the active-set method.
///
/// `a` holds one vector per factor variable, concatenated; the factor scores
/// are `weight * oracle.factor_score(y)`. Without a warm state the working
/// set starts from the oracle's MAP configuration for `a`.
pub fn solve_qp_active_set<O: MapOracle + ?Sized>(
    oracle: &O,
    a: &[f64],
    weight: f64,
    warm: Option<ActiveSetState>,
    max_inner: usize,
) -> Result<QpSolution, ActiveSetError> {
    let dims = oracle.dims().to_vec();
    let expected: usize = dims.iter().sum();
    if a.len() != expected {
        return Err(ActiveSetError::DimensionMismatch {
            expected,
            got: a.len(),
        });
    }
    let offs = offsets(&dims);
    let mut oracle_calls = 0;
    let mut state = match warm {
        Some(s) if !s.workset.is_empty() => s,
        _ => {
            oracle_calls += 1;
            let (config, _) = oracle.compute_map(a, weight)?;
            let theta = oracle.factor_score(&config);
            ActiveSetState::with_config(config, theta)
        }
    };
    let mut history = vec![primal_objective(&state, a, &offs, weight)];
    let mut exact = false;
    let mut iterations = 0;

    while iterations < max_inner.max(1) {
        iterations += 1;
        let Some((mut v_hat, tau)) = solve_kkt(&state, a, &dims, weight)? else {
            resolve_degeneracy(&mut state, &dims, weight)?;
            history.push(primal_objective(&state, a, &offs, weight));
            continue;
        };
        for x in &mut v_hat {
            if *x < 0.0 && *x > -CLAMP_TOL {
                *x = 0.0;
            }
        }
        let same = v_hat
            .iter()
            .zip(&state.v)
            .all(|(x, y)| (x - y).abs() <= SAME_SOLUTION_TOL);
        if same {
            state.v = v_hat;
            state.tau = tau;
            let u = marginals(&state, &offs, a.len());
            let w: Vec<f64> = a.iter().zip(&u).map(|(x, y)| x - y).collect();
            oracle_calls += 1;
            let (config, _) = oracle.compute_map(&w, weight)?;
            let theta = oracle.factor_score(&config);
            let violation = column_dot(&config, &offs, &w) + weight * theta - tau;
            if violation <= OPTIMALITY_TOL {
                exact = true;
                history.push(primal_objective(&state, a, &offs, weight));
                break;
            }
            if state.workset.contains(&config) {
                if violation <= REPEAT_TOL {
                    exact = true;
                    history.push(primal_objective(&state, a, &offs, weight));
                    break;
                }
                return Err(ActiveSetError::OracleInconsistency { config, violation });
            }
            state.push(config, theta);
        } else {
            let mut alpha = 1.0;
            let mut blocking = None;
            for (r, (&vr, &vh)) in state.v.iter().zip(&v_hat).enumerate() {
                if vr > vh {
                    let ratio = vr / (vr - vh);
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(r);
                    }
                }
            }
            for (vr, &vh) in state.v.iter_mut().zip(&v_hat) {
                *vr = ((1.0 - alpha) * *vr + alpha * vh).max(0.0);
            }
            state.tau = tau;
            if let Some(r) = blocking {
                state.remove(r);
                normalize(&mut state.v);
            }
        }
        history.push(primal_objective(&state, a, &offs, weight));
    }

    let u = marginals(&state, &offs, a.len());
    let support = state
        .workset
        .iter()
        .zip(&state.v)
        .filter(|(_, &w)| w > 0.0)
        .map(|(c, &w)| (c.clone(), w))
        .collect();
    Ok(QpSolution {
        u,
        support,
        tau: state.tau,
        exact,
        inner_iterations: iterations,
        oracle_calls,
        objective_history: history,
        state,
    })
}

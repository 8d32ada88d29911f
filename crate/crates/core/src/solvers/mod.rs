//! LP-MAP solvers: AD³, the projected-subgradient baseline and
//! branch-and-bound on top of AD³.

mod ad3;
mod bnb;
mod subgradient;
mod trace;

pub use ad3::{run_ad3, run_ad3_with_cutoff};
pub use bnb::{branch_and_bound, BranchAndBoundResult, BranchingBudget};
pub use subgradient::run_subgradient;
pub use trace::{format_g12, write_trace_csv, TraceRow, TRACE_HEADER};

use thiserror::Error;

use crate::activeset::{ActiveSetError, FactorOracle, MapOracle, OracleError};
use crate::graph::{Assignment, FactorGraph, GraphError, MapResult};
use crate::logic::LogicError;

/// A variable's multipliers may sum to at most this in absolute value.
pub const LAMBDA_FEASIBILITY_TOL: f64 = 1e-6;
/// Slack used by the integrality and agreement tests of the certificate.
pub const CERTIFICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ad3,
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Penalty of the augmented Lagrangian.
    pub eta: f64,
    pub eta_adapt: bool,
    /// Iteration after which `eta` stays fixed.
    pub eta_freeze_iter: usize,
    pub max_iters: usize,
    pub residual_tol: f64,
    /// Subgradient step sizes are `subgrad_eta0 / t`.
    pub subgrad_eta0: f64,
    /// Active-set iterations per subproblem.
    pub inner_iters: usize,
    /// Skip subproblems whose inputs did not change.
    pub caching: bool,
    pub seed: u64,
    /// Worker threads for the broadcast step.
    pub threads: usize,
    /// Stop as soon as the run converges or certifies.
    pub early_stop: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Ad3,
            eta: 1.0,
            eta_adapt: true,
            eta_freeze_iter: 100,
            max_iters: 1000,
            residual_tol: 1e-6,
            subgrad_eta0: 1.0,
            inner_iters: 10,
            caching: true,
            seed: 0,
            threads: 1,
            early_stop: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::Config(msg.to_string()));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad("eta must be positive and finite");
        }
        if !(self.subgrad_eta0.is_finite() && self.subgrad_eta0 > 0.0) {
            return bad("subgradient step size must be positive and finite");
        }
        if !(self.residual_tol > 0.0 && self.residual_tol < 1.0) {
            return bad("residual tolerance must lie in (0, 1)");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.inner_iters == 0 {
            return bad("inner_iters must be at least 1");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    ActiveSet(#[from] ActiveSetError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("multipliers do not match the graph: {0}")]
    Layout(String),
    #[error("multipliers of variable {var} sum to {imbalance:e}, outside the dual feasible set")]
    InfeasibleMultipliers { var: usize, imbalance: f64 },
    #[error("branch-and-bound budget exhausted after {nodes} nodes; incumbent {}, gap {gap}", incumbent.as_ref().map_or(f64::NEG_INFINITY, |m| m.value))]
    BudgetExhausted {
        nodes: usize,
        incumbent: Option<MapResult>,
        upper_bound: f64,
        gap: f64,
    },
    #[error("failed to build worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Converged,
    CertifiedOptimal,
    MaxIters,
    Infeasible,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "CONVERGED",
            Status::CertifiedOptimal => "CERTIFIED_OPTIMAL",
            Status::MaxIters => "MAX_ITERS",
            Status::Infeasible => "INFEASIBLE",
        })
    }
}

/// Iterates of a run. Per-edge vectors follow the graph's edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualState {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl PrimalDualState {
    /// Uniform `p` over the states allowed by the unary potentials, `q = p`
    /// on every edge and zero multipliers.
    pub fn initial(graph: &FactorGraph) -> Self {
        let p: Vec<Vec<f64>> = graph
            .variables()
            .iter()
            .map(|v| {
                let allowed = v.unary().iter().filter(|&&t| t > f64::NEG_INFINITY).count();
                let mass = if allowed == 0 {
                    0.0
                } else {
                    1.0 / allowed as f64
                };
                v.unary()
                    .iter()
                    .map(|&t| if t > f64::NEG_INFINITY { mass } else { 0.0 })
                    .collect()
            })
            .collect();
        let q = graph.edges().iter().map(|e| p[e.var].clone()).collect();
        let lambda = graph
            .edges()
            .iter()
            .map(|e| vec![0.0; graph.variable(e.var).num_states()])
            .collect();
        PrimalDualState {
            p,
            q,
            lambda,
            iteration: 0,
        }
    }

    /// Largest `|sum_a lambda_ia(y)|` over variables and states.
    pub fn lambda_imbalance(&self, graph: &FactorGraph) -> f64 {
        lambda_imbalance(graph, &self.lambda)
    }
}

fn lambda_imbalance(graph: &FactorGraph, lambda: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..graph.num_variables() {
        let mut sum = vec![0.0; graph.variable(i).num_states()];
        for &e in graph.var_edges(i) {
            for (s, l) in sum.iter_mut().zip(&lambda[e]) {
                *s += l;
            }
        }
        worst = sum.iter().fold(worst, |w, s| w.max(s.abs()));
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub r_primal: f64,
    pub r_dual: f64,
}

/// Normalized primal and dual residuals between two consecutive states.
pub fn compute_residuals(
    graph: &FactorGraph,
    state: &PrimalDualState,
    previous: &PrimalDualState,
) -> ResidualReport {
    let mut denom = 0usize;
    let mut rp = 0.0;
    let mut rd = 0.0;
    for (e, edge) in graph.edges().iter().enumerate() {
        let p = &state.p[edge.var];
        let prev = &previous.p[edge.var];
        denom += p.len();
        for ((q, pi), pp) in state.q[e].iter().zip(p).zip(prev) {
            rp += (q - pi).powi(2);
            rd += (pi - pp).powi(2);
        }
    }
    if denom == 0 {
        return ResidualReport {
            r_primal: 0.0,
            r_dual: 0.0,
        };
    }
    ResidualReport {
        r_primal: rp / denom as f64,
        r_dual: rd / denom as f64,
    }
}

pub const ETA_MIN: f64 = 1e-3;
pub const ETA_MAX: f64 = 1e3;

/// Residual balancing: grow `eta` when the primal residual dominates, shrink
/// it when the dual residual does, and keep it fixed after the freeze.
pub fn adjust_eta(
    r_primal: f64,
    r_dual: f64,
    eta: f64,
    iteration: usize,
    config: &SolverConfig,
) -> f64 {
    if !config.eta_adapt || iteration >= config.eta_freeze_iter {
        return eta;
    }
    let next = if r_primal > 10.0 * r_dual {
        eta * 2.0
    } else if r_dual > 10.0 * r_primal {
        eta / 2.0
    } else {
        eta
    };
    next.clamp(ETA_MIN, ETA_MAX)
}

/// Counters collected over a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub active_set_calls: usize,
    /// Largest returned support of an active-set solve.
    pub max_support: usize,
    /// Active-set solves whose support exceeded the sparsity bound.
    pub support_bound_violations: usize,
    pub oracle_calls: usize,
    pub max_lambda_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: Status,
    pub best_dual: f64,
    pub best_primal_value: f64,
    /// Assignment attaining `best_primal_value`.
    pub assignment: Assignment,
    /// Whether the final `p` has a non-integral variable.
    pub fractional: bool,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub final_eta: f64,
    pub state: PrimalDualState,
    pub stats: SolveStats,
}

/// Runs the configured algorithm.
pub fn solve(graph: &FactorGraph, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    match config.algorithm {
        Algorithm::Ad3 => run_ad3(graph, config),
        Algorithm::Subgradient => run_subgradient(graph, config),
    }
}

/// Per-variable argmax, ties to the lowest state.
pub fn round_marginals(p: &[Vec<f64>]) -> Assignment {
    Assignment(
        p.iter()
            .map(|pi| {
                let mut best = 0;
                for (s, &x) in pi.iter().enumerate() {
                    if x > pi[best] {
                        best = s;
                    }
                }
                best
            })
            .collect(),
    )
}

pub(crate) fn is_integral(p: &[Vec<f64>]) -> bool {
    p.iter()
        .all(|pi| pi.iter().any(|&x| x >= 1.0 - CERTIFICATE_TOL))
}

/// `theta_i / |N(i)|` on every edge.
pub(crate) fn split_unaries(graph: &FactorGraph) -> Vec<Vec<f64>> {
    graph
        .edges()
        .iter()
        .map(|e| {
            let deg = graph.degree(e.var) as f64;
            graph
                .variable(e.var)
                .unary()
                .iter()
                .map(|&t| t / deg)
                .collect()
        })
        .collect()
}

/// Score of variables without factors, which sit at their best state.
pub(crate) fn isolated_value(graph: &FactorGraph) -> f64 {
    (0..graph.num_variables())
        .filter(|&i| graph.degree(i) == 0)
        .map(|i| {
            graph
                .variable(i)
                .unary()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// `g(lambda)` without the feasibility check.
pub(crate) fn dual_value(
    graph: &FactorGraph,
    theta_split: &[Vec<f64>],
    lambda: &[Vec<f64>],
) -> f64 {
    let mut total = isolated_value(graph);
    let mut scores = Vec::new();
    for (f, factor) in graph.factors().iter().enumerate() {
        scores.clear();
        for e in graph.factor_edges(f) {
            scores.extend(theta_split[e].iter().zip(&lambda[e]).map(|(t, l)| t + l));
        }
        match FactorOracle::new(factor).compute_map(&scores, 1.0) {
            Ok((_, v)) => total += v,
            Err(OracleError::Infeasible) => return f64::NEG_INFINITY,
            Err(OracleError::DimensionMismatch(_)) => {
                unreachable!("graph validation fixes dimensions")
            }
        }
    }
    total
}

/// Dual objective `g(lambda)`: the sum of every factor's best score under
/// its share of the unaries plus its multipliers.
pub fn dual_objective(graph: &FactorGraph, lambda: &[Vec<f64>]) -> Result<f64, SolverError> {
    if lambda.len() != graph.edges().len() {
        return Err(SolverError::Layout(format!(
            "{} multiplier vectors for {} edges",
            lambda.len(),
            graph.edges().len()
        )));
    }
    for (e, edge) in graph.edges().iter().enumerate() {
        let n = graph.variable(edge.var).num_states();
        if lambda[e].len() != n {
            return Err(SolverError::Layout(format!(
                "edge {e} has {} multipliers for {n} states",
                lambda[e].len()
            )));
        }
    }
    for i in 0..graph.num_variables() {
        let mut sum = vec![0.0; graph.variable(i).num_states()];
        for &e in graph.var_edges(i) {
            for (s, l) in sum.iter_mut().zip(&lambda[e]) {
                *s += l;
            }
        }
        let imbalance = sum.iter().fold(0.0f64, |w, s| w.max(s.abs()));
        if imbalance > LAMBDA_FEASIBILITY_TOL {
            return Err(SolverError::InfeasibleMultipliers { var: i, imbalance });
        }
    }
    Ok(dual_value(graph, &split_unaries(graph), lambda))
}

/// Best of an assignment and the incumbent, preferring the earlier on ties.
pub(crate) fn update_incumbent(best: &mut Option<MapResult>, assignment: Assignment, value: f64) {
    if best.as_ref().is_none_or(|b| value > b.value) {
        *best = Some(MapResult { assignment, value });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Factor, Potential};

    fn chain() -> FactorGraph {
        let mut g = FactorGraph::new();
        g.add_variable(vec![0.0, 0.4]).unwrap();
        g.add_variable(vec![0.1, -0.2, 0.3]).unwrap();
        g.add_variable(vec![0.0, 0.2]).unwrap();
        g.add_factor(Factor::new(
            vec![0, 1],
            Potential::Dense(vec![0.5, 0.0, -0.3, 0.2, 0.1, 0.0]),
        ))
        .unwrap();
        g.add_factor(Factor::new(
            vec![1, 2],
            Potential::Dense(vec![0.0, 0.6, -0.1, 0.0, 0.2, 0.3]),
        ))
        .unwrap();
        g
    }

    #[test]
    fn default_config_is_valid() {
        let c = SolverConfig::default();
        c.validate().unwrap();
        assert_eq!(
            (c.eta, c.eta_freeze_iter, c.max_iters, c.inner_iters),
            (1.0, 100, 1000, 10)
        );
        assert!(SolverConfig {
            eta: 0.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(SolverConfig {
            residual_tol: 1.0,
            ..c
        }
        .validate()
        .is_err());
    }

    #[test]
    fn residual_examples() {
        let mut g = FactorGraph::new();
        g.add_variable(vec![0.0, 0.0]).unwrap();
        g.add_factor(Factor::new(vec![0], Potential::Dense(vec![0.0, 0.0])))
            .unwrap();
        let prev = PrimalDualState::initial(&g);
        let mut cur = prev.clone();
        assert_eq!(
            compute_residuals(&g, &cur, &prev),
            ResidualReport {
                r_primal: 0.0,
                r_dual: 0.0
            }
        );
        cur.q[0] = vec![1.0, 0.0];
        assert_eq!(compute_residuals(&g, &cur, &prev).r_primal, 0.25);
        cur.p[0] = vec![1.0, 0.0];
        assert_eq!(compute_residuals(&g, &cur, &prev).r_dual, 0.25);
        assert_eq!(
            compute_residuals(
                &FactorGraph::new(),
                &PrimalDualState::initial(&FactorGraph::new()),
                &PrimalDualState::initial(&FactorGraph::new())
            )
            .r_primal,
            0.0
        );
    }

    #[test]
    fn eta_rule() {
        let c = SolverConfig::default();
        assert_eq!(adjust_eta(0.5, 0.5, 1.0, 5, &c), 1.0);
        assert_eq!(adjust_eta(1.0, 0.01, 1.0, 5, &c), 2.0);
        assert_eq!(adjust_eta(0.01, 1.0, 1.0, 5, &c), 0.5);
        assert_eq!(adjust_eta(1.0, 0.01, 1.0, 100, &c), 1.0);
        assert_eq!(adjust_eta(1.0, 0.0, 900.0, 5, &c), ETA_MAX);
        assert_eq!(adjust_eta(0.0, 1.0, 1.5e-3, 5, &c), ETA_MIN);
        let fixed = SolverConfig {
            eta_adapt: false,
            ..c
        };
        assert_eq!(adjust_eta(1.0, 0.01, 1.0, 5, &fixed), 1.0);
    }

    #[test]
    fn dual_at_zero_bounds_the_optimum() {
        let g = chain();
        let lambda = PrimalDualState::initial(&g).lambda;
        let best = g.brute_force_map().unwrap().value;
        assert!(dual_objective(&g, &lambda).unwrap() >= best - 1e-12);

        // single factor: the dual at zero is the factor's MAP value
        let mut h = FactorGraph::new();
        h.add_variable(vec![0.0, 1.0]).unwrap();
        h.add_variable(vec![0.5, 0.0]).unwrap();
        h.add_factor(Factor::new(
            vec![0, 1],
            Potential::Pair([0.0, 0.0, 0.0, -2.0]),
        ))
        .unwrap();
        let l = PrimalDualState::initial(&h).lambda;
        assert_eq!(
            dual_objective(&h, &l).unwrap(),
            h.brute_force_map().unwrap().value
        );
    }

    #[test]
    fn dual_rejects_unbalanced_multipliers() {
        let g = chain();
        let mut lambda = PrimalDualState::initial(&g).lambda;
        lambda[1][0] = 0.1;
        assert!(matches!(
            dual_objective(&g, &lambda),
            Err(SolverError::InfeasibleMultipliers { var: 1, .. })
        ));
        // a balanced perturbation keeps the bound
        lambda[2][0] = -0.1;
        lambda[1][2] = 0.7;
        lambda[2][2] = -0.7;
        let best = g.brute_force_map().unwrap().value;
        assert!(dual_objective(&g, &lambda).unwrap() >= best - 1e-12);
        assert!(matches!(
            dual_objective(&g, &lambda[..2]),
            Err(SolverError::Layout(_))
        ));
    }

    #[test]
    fn rounding_prefers_lowest_state() {
        let a = round_marginals(&[vec![0.5, 0.5], vec![0.2, 0.3, 0.5]]);
        assert_eq!(a, Assignment(vec![0, 2]));
    }
}

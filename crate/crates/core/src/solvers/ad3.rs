//! Alternating directions dual decomposition.
//!
//! Each iteration solves one quadratic subproblem per factor (broadcast),
//! averages the local marginals into `p` (gather) and moves the multipliers
//! by `eta` times the disagreement.

use rayon::prelude::*;

use super::{
    adjust_eta, compute_residuals, dual_value, is_integral, lambda_imbalance, round_marginals,
    split_unaries, update_incumbent, PrimalDualState, ResidualReport, SolveReport, SolveStats,
    SolverConfig, SolverError, Status, TraceRow, CERTIFICATE_TOL,
};
use crate::activeset::{
    solve_qp_active_set, support_bound, ActiveSetError, ActiveSetState, FactorOracle, Masked,
    OracleError,
};
use crate::graph::{Factor, FactorGraph, FactorKind, MapResult, Potential};
use crate::logic::solve_qp_logic;
use crate::pairwise::{compute_pair_coefficients, solve_qp_pair};

/// Inner iteration budget once residuals are within this factor of the tolerance.
const NEAR_TOL_FACTOR: f64 = 100.0;
const FINAL_INNER_ITERS: usize = 500;
/// Iterations between dual evaluations.
const DUAL_EVERY: usize = 10;

/// Runs AD³ to convergence, certification or the iteration limit.
pub fn run_ad3(graph: &FactorGraph, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    run_ad3_with_cutoff(graph, config, f64::NEG_INFINITY)
}

/// Like [`run_ad3`], but gives up with status `Infeasible` as soon as an
/// evaluated dual bound is at most `cutoff`.
pub fn run_ad3_with_cutoff(
    graph: &FactorGraph,
    config: &SolverConfig,
    cutoff: f64,
) -> Result<SolveReport, SolverError> {
    config.validate()?;
    if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| SolverError::ThreadPool(e.to_string()))?;
        pool.install(|| Ad3::new(graph, config).run(cutoff))
    } else {
        Ad3::new(graph, config).run(cutoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Pair,
    Logic,
    ActiveSet,
}

/// Per-factor solver state.
#[derive(Debug, Clone)]
struct Slot {
    method: Method,
    // forbidden variable states, laid out like the factor's scores
    forbidden: Option<Vec<bool>>,
    warm: Option<ActiveSetState>,
    // bit patterns of the last inputs, and whether that solve was exact
    key: Vec<u64>,
    exact: bool,
    q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct StepInfo {
    solved: bool,
    active_set: bool,
    support: usize,
    bound: usize,
}

struct Ad3<'g> {
    graph: &'g FactorGraph,
    config: &'g SolverConfig,
    theta_split: Vec<Vec<f64>>,
}

impl<'g> Ad3<'g> {
    fn new(graph: &'g FactorGraph, config: &'g SolverConfig) -> Self {
        Ad3 {
            graph,
            config,
            theta_split: split_unaries(graph),
        }
    }

    fn make_slots(&self) -> Vec<Slot> {
        let g = self.graph;
        g.factors()
            .iter()
            .map(|factor| {
                let forbidden: Vec<bool> = factor
                    .vars()
                    .iter()
                    .flat_map(|&v| {
                        g.variable(v)
                            .unary()
                            .iter()
                            .map(|&t| t == f64::NEG_INFINITY)
                    })
                    .collect();
                let masked = forbidden.iter().any(|&f| f);
                let method = match factor.kind() {
                    _ if masked => Method::ActiveSet,
                    FactorKind::Pair => Method::Pair,
                    k if k.is_logic() => Method::Logic,
                    _ => Method::ActiveSet,
                };
                Slot {
                    method,
                    forbidden: masked.then_some(forbidden),
                    warm: None,
                    key: Vec::new(),
                    exact: false,
                    q: factor
                        .vars()
                        .iter()
                        .map(|&v| vec![0.0; g.variable(v).num_states()])
                        .collect(),
                }
            })
            .collect()
    }

    fn run(&self, cutoff: f64) -> Result<SolveReport, SolverError> {
        let g = self.graph;
        let config = self.config;
        let mut state = PrimalDualState::initial(g);
        for i in 0..g.num_variables() {
            let unary = g.variable(i).unary();
            if unary.iter().all(|&t| t == f64::NEG_INFINITY) {
                return Ok(self.infeasible_report(
                    state,
                    config.eta,
                    Vec::new(),
                    SolveStats::default(),
                ));
            }
            if g.degree(i) == 0 {
                let best = round_marginals(&[unary.to_vec()]).0[0];
                state.p[i] = (0..unary.len())
                    .map(|s| if s == best { 1.0 } else { 0.0 })
                    .collect();
            }
        }

        let mut slots = self.make_slots();
        let mut eta = config.eta;
        let mut stats = SolveStats::default();
        let mut trace = Vec::new();
        let mut best_dual = f64::INFINITY;
        let mut latest_dual = f64::INFINITY;
        let mut incumbent: Option<MapResult> = None;
        let mut residuals: Option<ResidualReport> = None;
        let mut status = Status::MaxIters;

        for t in 1..=config.max_iters {
            let near_tol = residuals
                .is_some_and(|r| r.r_primal.max(r.r_dual) < NEAR_TOL_FACTOR * config.residual_tol);
            let max_inner = if near_tol {
                FINAL_INNER_ITERS
            } else {
                config.inner_iters
            };

            let steps = match self.broadcast(&mut slots, &state, eta, max_inner) {
                Ok(steps) => steps,
                Err(SolverError::ActiveSet(ActiveSetError::Oracle(OracleError::Infeasible))) => {
                    return Ok(self.infeasible_report(state, eta, trace, stats));
                }
                Err(e) => return Err(e),
            };
            for step in &steps {
                if step.solved {
                    stats.oracle_calls += 1;
                }
                if step.active_set {
                    stats.active_set_calls += 1;
                    stats.max_support = stats.max_support.max(step.support);
                    if step.support > step.bound {
                        stats.support_bound_violations += 1;
                    }
                }
            }

            let previous = state.clone();
            for (f, slot) in slots.iter().enumerate() {
                for (k, e) in g.factor_edges(f).enumerate() {
                    state.q[e].clone_from(&slot.q[k]);
                }
            }
            self.gather_and_update(&mut state, eta);
            state.iteration = t;

            let r = compute_residuals(g, &state, &previous);
            residuals = Some(r);
            let imbalance = lambda_imbalance(g, &state.lambda);
            stats.max_lambda_imbalance = stats.max_lambda_imbalance.max(imbalance);

            let assignment = round_marginals(&state.p);
            let primal = g.evaluate_unchecked(&assignment.0);
            update_incumbent(&mut incumbent, assignment, primal);

            let certificate_ready = self.agreement_holds(&state, &previous);
            let converged = r.r_primal < config.residual_tol && r.r_dual < config.residual_tol;
            let last = t == config.max_iters;
            let stopping = config.early_stop && (certificate_ready || converged);
            if t == 1 || t % DUAL_EVERY == 0 || certificate_ready || stopping || last {
                latest_dual = dual_value(g, &self.theta_split, &state.lambda);
                best_dual = best_dual.min(latest_dual);
            }
            trace.push(TraceRow {
                iter: t,
                dual: latest_dual,
                primal,
                r_primal: r.r_primal,
                r_dual: r.r_dual,
                eta,
                oracle_calls: stats.oracle_calls,
                lambda_imbalance: imbalance,
            });

            if best_dual == f64::NEG_INFINITY {
                return Ok(self.infeasible_report(state, eta, trace, stats));
            }
            if best_dual <= cutoff {
                status = Status::Infeasible;
                break;
            }
            let certified = certificate_ready && {
                let v = primal;
                latest_dual - v <= 1e-6 * v.abs().max(1.0)
            };
            if certified && (config.early_stop || last) {
                status = Status::CertifiedOptimal;
                break;
            }
            if converged && (config.early_stop || last) {
                status = Status::Converged;
                break;
            }
            eta = adjust_eta(r.r_primal, r.r_dual, eta, t, config);
        }

        let incumbent = incumbent.expect("at least one iteration ran");
        let fractional = !is_integral(&state.p);
        Ok(SolveReport {
            status,
            best_dual,
            best_primal_value: incumbent.value,
            assignment: incumbent.assignment,
            fractional,
            iterations: state.iteration,
            trace,
            final_eta: eta,
            state,
            stats,
        })
    }

    fn infeasible_report(
        &self,
        state: PrimalDualState,
        eta: f64,
        trace: Vec<TraceRow>,
        stats: SolveStats,
    ) -> SolveReport {
        let assignment = round_marginals(&state.p);
        SolveReport {
            status: Status::Infeasible,
            best_dual: f64::NEG_INFINITY,
            best_primal_value: f64::NEG_INFINITY,
            fractional: !is_integral(&state.p),
            assignment,
            iterations: state.iteration,
            trace,
            final_eta: eta,
            state,
            stats,
        }
    }

    /// Integral `p`, agreeing with every local marginal and no longer moving.
    fn agreement_holds(&self, state: &PrimalDualState, previous: &PrimalDualState) -> bool {
        if !is_integral(&state.p) {
            return false;
        }
        let agree = self.graph.edges().iter().enumerate().all(|(e, edge)| {
            state.q[e]
                .iter()
                .zip(&state.p[edge.var])
                .all(|(q, p)| (q - p).abs() <= CERTIFICATE_TOL)
        });
        let still = state.p.iter().zip(&previous.p).all(|(a, b)| {
            a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= CERTIFICATE_TOL)
        });
        agree && still
    }

    fn broadcast(
        &self,
        slots: &mut [Slot],
        state: &PrimalDualState,
        eta: f64,
        max_inner: usize,
    ) -> Result<Vec<StepInfo>, SolverError> {
        let g = self.graph;
        let work = |(f, slot): (usize, &mut Slot)| {
            self.solve_factor(g.factor(f), f, slot, state, eta, max_inner)
        };
        if self.config.threads > 1 {
            slots.par_iter_mut().enumerate().map(work).collect()
        } else {
            slots.iter_mut().enumerate().map(work).collect()
        }
    }

    fn solve_factor(
        &self,
        factor: &Factor,
        f: usize,
        slot: &mut Slot,
        state: &PrimalDualState,
        eta: f64,
        max_inner: usize,
    ) -> Result<StepInfo, SolverError> {
        let g = self.graph;
        let weight = 1.0 / eta;
        let mut a: Vec<f64> = Vec::new();
        for e in g.factor_edges(f) {
            let var = g.edges()[e].var;
            for ((&p, &theta), &l) in state.p[var]
                .iter()
                .zip(&self.theta_split[e])
                .zip(&state.lambda[e])
            {
                // forbidden states are excluded by the oracle instead
                let theta = if theta == f64::NEG_INFINITY {
                    0.0
                } else {
                    theta
                };
                a.push(p + (theta + l) / eta);
            }
        }
        let key: Vec<u64> = a
            .iter()
            .chain(std::iter::once(&eta))
            .map(|x| x.to_bits())
            .collect();
        if self.config.caching && slot.exact && key == slot.key {
            return Ok(StepInfo::default());
        }

        let mut info = StepInfo {
            solved: true,
            ..StepInfo::default()
        };
        match slot.method {
            Method::Pair => {
                let Potential::Pair(table) = factor.potential() else {
                    unreachable!("pair method is only chosen for PAIR factors")
                };
                let b = table.map(|x| x * weight);
                let s = solve_qp_pair(compute_pair_coefficients([a[0], a[1]], [a[2], a[3]], b));
                slot.q[0] = vec![1.0 - s.z1, s.z1];
                slot.q[1] = vec![1.0 - s.z2, s.z2];
                slot.exact = true;
            }
            Method::Logic => {
                let parts: Vec<&[f64]> = a.chunks(2).collect();
                let z = solve_qp_logic(factor.kind(), factor.negated(), &parts)?;
                for (q, z) in slot.q.iter_mut().zip(z) {
                    *q = vec![1.0 - z, z];
                }
                slot.exact = true;
            }
            Method::ActiveSet => {
                let warm = slot.warm.take();
                let sol = match &slot.forbidden {
                    Some(mask) => {
                        let oracle = Masked::new(FactorOracle::new(factor), mask.clone());
                        solve_qp_active_set(&oracle, &a, weight, warm, max_inner)?
                    }
                    None => solve_qp_active_set(
                        &FactorOracle::new(factor),
                        &a,
                        weight,
                        warm,
                        max_inner,
                    )?,
                };
                let mut offset = 0;
                for q in slot.q.iter_mut() {
                    let n = q.len();
                    q.copy_from_slice(&sol.u[offset..offset + n]);
                    offset += n;
                }
                info.active_set = true;
                info.support = sol.support.len();
                info.bound = support_bound(factor.dims());
                slot.exact = sol.exact;
                slot.warm = Some(sol.state);
            }
        }
        slot.key = key;
        Ok(info)
    }

    fn gather_and_update(&self, state: &mut PrimalDualState, eta: f64) {
        let g = self.graph;
        for i in 0..g.num_variables() {
            let edges = g.var_edges(i);
            if edges.is_empty() {
                continue;
            }
            let mut p = vec![0.0; g.variable(i).num_states()];
            for &e in edges {
                for (acc, q) in p.iter_mut().zip(&state.q[e]) {
                    *acc += q;
                }
            }
            let deg = edges.len() as f64;
            p.iter_mut().for_each(|x| *x /= deg);
            for &e in edges {
                for ((l, q), pi) in state.lambda[e].iter_mut().zip(&state.q[e]).zip(&p) {
                    *l -= eta * (q - pi);
                }
            }
            state.p[i] = p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Assignment;

    fn xor_example() -> FactorGraph {
        FactorGraph::parse("variables 2\nvar 0 2 0 1\nvar 1 2 0 0.5\nfactor XOR 2 0 1\n").unwrap()
    }

    #[test]
    fn xor_example_certifies() {
        let g = xor_example();
        let r = run_ad3(&g, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, Status::CertifiedOptimal);
        assert_eq!(r.assignment, Assignment(vec![1, 0]));
        assert!((r.best_dual - 1.0).abs() < 1e-6);
        assert!(!r.fractional);
        assert_eq!(r.state.p, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn isolated_variable_takes_its_best_state() {
        let g = FactorGraph::parse("variables 1\nvar 0 3 0 2 1\n").unwrap();
        let r = run_ad3(&g, &SolverConfig::default()).unwrap();
        assert_eq!(r.assignment, Assignment(vec![1]));
        assert_eq!(r.state.p[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(r.best_dual, 2.0);
        assert_eq!(super::super::isolated_value(&g), 2.0);
    }

    #[test]
    fn infeasible_factor_is_reported() {
        let g = FactorGraph::parse(
            "variables 2\nvar 0 2 0 0\nvar 1 2 0 0\nfactor DENSE 2 0 1 -inf -inf -inf -inf\n",
        )
        .unwrap();
        let r = run_ad3(&g, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn masked_states_are_respected() {
        let g = FactorGraph::parse(
            "variables 2\nvar 0 2 -inf 0\nvar 1 2 0 0\nfactor PAIR 2 0 1 0 0 0 -3\n",
        )
        .unwrap();
        let r = run_ad3(&g, &SolverConfig::default()).unwrap();
        assert_eq!(r.assignment, Assignment(vec![1, 0]));
        assert_eq!(r.best_primal_value, 0.0);
        assert!(r.best_dual >= -1e-9);
    }

    #[test]
    fn threads_do_not_change_the_trace() {
        let g = FactorGraph::parse(
            "variables 3\nvar 0 2 0 0.3\nvar 1 3 0.1 0 -0.2\nvar 2 2 0 -0.1\n\
             factor DENSE 2 0 1 0.2 -0.4 0.1 0.5 0 -0.3\n\
             factor DENSE 2 1 2 0.3 0 -0.2 0.4 0.1 0\n\
             factor PAIR 2 0 2 0 0.2 0.1 -0.6\n",
        )
        .unwrap();
        let one = run_ad3(&g, &SolverConfig::default()).unwrap();
        let four = run_ad3(
            &g,
            &SolverConfig {
                threads: 4,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert_eq!(one.trace, four.trace);
    }
}

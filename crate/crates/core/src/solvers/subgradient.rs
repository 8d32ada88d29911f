//! Dual decomposition by projected subgradient with steps `eta0 / t`.

use super::{
    compute_residuals, is_integral, isolated_value, lambda_imbalance, round_marginals,
    split_unaries, update_incumbent, PrimalDualState, SolveReport, SolveStats, SolverConfig,
    SolverError, Status, TraceRow,
};
use crate::activeset::{FactorOracle, MapOracle, OracleError};
use crate::graph::{FactorGraph, MapResult};

pub fn run_subgradient(
    graph: &FactorGraph,
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    config.validate()?;
    let g = graph;
    let theta_split = split_unaries(g);
    let mut state = PrimalDualState::initial(g);
    for i in 0..g.num_variables() {
        if g.degree(i) == 0 {
            let unary = g.variable(i).unary();
            let best = round_marginals(&[unary.to_vec()]).0[0];
            state.p[i] = (0..unary.len())
                .map(|s| if s == best { 1.0 } else { 0.0 })
                .collect();
        }
    }
    let isolated = isolated_value(g);
    let mut stats = SolveStats::default();
    let mut trace = Vec::new();
    let mut best_dual = f64::INFINITY;
    let mut incumbent: Option<MapResult> = None;
    let mut status = Status::MaxIters;
    let mut scores = Vec::new();

    for t in 1..=config.max_iters {
        let step = config.subgrad_eta0 / t as f64;
        let previous = state.clone();

        // local MAP per factor with the current multipliers
        let mut dual = isolated;
        for (f, factor) in g.factors().iter().enumerate() {
            scores.clear();
            for e in g.factor_edges(f) {
                scores.extend(
                    theta_split[e]
                        .iter()
                        .zip(&state.lambda[e])
                        .map(|(t, l)| t + l),
                );
            }
            stats.oracle_calls += 1;
            let (config_f, value) = match FactorOracle::new(factor).compute_map(&scores, 1.0) {
                Ok(found) => found,
                Err(OracleError::Infeasible) => {
                    return Ok(infeasible(state, step, trace, stats));
                }
                Err(e) => return Err(SolverError::ActiveSet(e.into())),
            };
            dual += value;
            for (e, &y) in g.factor_edges(f).zip(&config_f) {
                state.q[e]
                    .iter_mut()
                    .enumerate()
                    .for_each(|(s, q)| *q = if s == y { 1.0 } else { 0.0 });
            }
        }
        best_dual = best_dual.min(dual);

        // average, then check agreement before moving the multipliers
        let mut agree = true;
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
            agree &= edges.iter().all(|&e| state.q[e] == p);
            for &e in edges {
                for ((l, q), pi) in state.lambda[e].iter_mut().zip(&state.q[e]).zip(&p) {
                    *l -= step * (q - pi);
                }
            }
            state.p[i] = p;
        }
        state.iteration = t;

        let r = compute_residuals(g, &state, &previous);
        let imbalance = lambda_imbalance(g, &state.lambda);
        stats.max_lambda_imbalance = stats.max_lambda_imbalance.max(imbalance);
        let assignment = round_marginals(&state.p);
        let primal = g.evaluate_unchecked(&assignment.0);
        update_incumbent(&mut incumbent, assignment, primal);
        trace.push(TraceRow {
            iter: t,
            dual,
            primal,
            r_primal: r.r_primal,
            r_dual: r.r_dual,
            eta: step,
            oracle_calls: stats.oracle_calls,
            lambda_imbalance: imbalance,
        });
        if agree && (config.early_stop || t == config.max_iters) {
            status = Status::CertifiedOptimal;
            break;
        }
    }

    let incumbent = incumbent.expect("at least one iteration ran");
    let final_eta = trace.last().map_or(config.subgrad_eta0, |r| r.eta);
    Ok(SolveReport {
        status,
        best_dual,
        best_primal_value: incumbent.value,
        assignment: incumbent.assignment,
        fractional: !is_integral(&state.p),
        iterations: state.iteration,
        trace,
        final_eta,
        state,
        stats,
    })
}

fn infeasible(
    state: PrimalDualState,
    eta: f64,
    trace: Vec<TraceRow>,
    stats: SolveStats,
) -> SolveReport {
    SolveReport {
        status: Status::Infeasible,
        best_dual: f64::NEG_INFINITY,
        best_primal_value: f64::NEG_INFINITY,
        assignment: round_marginals(&state.p),
        fractional: !is_integral(&state.p),
        iterations: state.iteration,
        trace,
        final_eta: eta,
        state,
        stats,
    }
}

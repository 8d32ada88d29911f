//! Exact MAP by branch-and-bound over the AD³ relaxation.
//!
//! Each node fixes some variables by setting their other states to `-inf`.
//! A node is discarded when its dual bound cannot beat the incumbent, solved
//! when AD³ certifies it, and otherwise split on the variable whose
//! marginals have the highest entropy.

use super::{run_ad3_with_cutoff, SolverConfig, SolverError, Status};
use crate::graph::{FactorGraph, MapResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchingBudget {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for BranchingBudget {
    fn default() -> Self {
        BranchingBudget {
            max_depth: 64,
            max_nodes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchAndBoundResult {
    pub map: MapResult,
    /// AD³ runs, including the root.
    pub nodes: usize,
    /// Dual bound at the root.
    pub root_dual: f64,
    /// Whether the root relaxation was fractional.
    pub root_fractional: bool,
}

pub fn branch_and_bound(
    graph: &FactorGraph,
    config: &SolverConfig,
    budget: BranchingBudget,
) -> Result<BranchAndBoundResult, SolverError> {
    let mut search = Search {
        config,
        budget,
        incumbent: None,
        nodes: 0,
        root: None,
    };
    search.visit(graph, &mut vec![false; graph.num_variables()], 0)?;
    let (root_dual, root_fractional) = search.root.expect("the root is always visited");
    let map = match search.incumbent {
        Some(map) => map,
        None => MapResult {
            assignment: crate::graph::Assignment(vec![0; graph.num_variables()]),
            value: f64::NEG_INFINITY,
        },
    };
    Ok(BranchAndBoundResult {
        map,
        nodes: search.nodes,
        root_dual,
        root_fractional,
    })
}

struct Search<'c> {
    config: &'c SolverConfig,
    budget: BranchingBudget,
    incumbent: Option<MapResult>,
    nodes: usize,
    root: Option<(f64, bool)>,
}

impl Search<'_> {
    fn exhausted(&self, upper_bound: f64) -> SolverError {
        let incumbent_value = self
            .incumbent
            .as_ref()
            .map_or(f64::NEG_INFINITY, |m| m.value);
        SolverError::BudgetExhausted {
            nodes: self.nodes,
            incumbent: self.incumbent.clone(),
            upper_bound,
            gap: upper_bound - incumbent_value,
        }
    }

    fn visit(
        &mut self,
        graph: &FactorGraph,
        fixed: &mut Vec<bool>,
        depth: usize,
    ) -> Result<(), SolverError> {
        if self.nodes >= self.budget.max_nodes || depth > self.budget.max_depth {
            let bound = self.root.map_or(f64::INFINITY, |r| r.0);
            return Err(self.exhausted(bound));
        }
        self.nodes += 1;
        let cutoff = self
            .incumbent
            .as_ref()
            .map_or(f64::NEG_INFINITY, |m| m.value);
        let report = run_ad3_with_cutoff(graph, self.config, cutoff)?;
        if self.root.is_none() {
            self.root = Some((report.best_dual, report.fractional));
        }
        if report.status == Status::Infeasible {
            return Ok(());
        }
        if self
            .incumbent
            .as_ref()
            .is_none_or(|m| report.best_primal_value > m.value)
        {
            self.incumbent = Some(MapResult {
                assignment: report.assignment.clone(),
                value: report.best_primal_value,
            });
        }
        let incumbent_value = self
            .incumbent
            .as_ref()
            .map_or(f64::NEG_INFINITY, |m| m.value);
        if report.status == Status::CertifiedOptimal || report.best_dual <= incumbent_value {
            return Ok(());
        }

        let Some(var) = most_fractional(&report.state.p, fixed) else {
            return Ok(());
        };
        let unary = graph.variable(var).unary().to_vec();
        fixed[var] = true;
        for state in 0..unary.len() {
            if unary[state] == f64::NEG_INFINITY {
                continue;
            }
            let mut child = graph.clone();
            let masked = unary
                .iter()
                .enumerate()
                .map(|(s, &t)| if s == state { t } else { f64::NEG_INFINITY })
                .collect();
            child.set_unary(var, masked)?;
            self.visit(&child, fixed, depth + 1)?;
        }
        fixed[var] = false;
        Ok(())
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Unfixed variable with the most spread-out marginals, ties to the lowest index.
fn most_fractional(p: &[Vec<f64>], fixed: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, pi) in p.iter().enumerate() {
        if fixed[i] {
            continue;
        }
        let h = entropy(pi);
        if best.is_none_or(|(_, b)| h > b) {
            best = Some((i, h));
        }
    }
    best.map(|(i, _)| i)
}

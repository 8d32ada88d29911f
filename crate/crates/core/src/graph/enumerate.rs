//! Exhaustive MAP by depth-first enumeration.
//!
//! Variables are assigned in index order and states in increasing order, so
//! leaves are visited lexicographically; keeping the first strict maximum
//! breaks ties toward the smallest assignment. Branches are cut only when
//! they are already `-inf` (a violated hard constraint or forbidden state),
//! which never discards a finite-valued assignment.

use super::{Assignment, FactorGraph, GraphError, MapResult, Potential};

/// Default cap on the number of joint assignments.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

struct Search<'g> {
    graph: &'g FactorGraph,
    // Factors whose highest-index variable is `i`: scored once `i` is set.
    completes: Vec<Vec<usize>>,
    // Logic factors incident to `i` that are still partially assigned.
    partial: Vec<Vec<usize>>,
    states: Vec<usize>,
    scratch: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    visited: u64,
    budget: u64,
}

impl FactorGraph {
    /// Exact MAP with the default enumeration cap.
    pub fn brute_force_map(&self) -> Result<MapResult, GraphError> {
        self.brute_force_map_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    /// Exact MAP by enumeration. Graphs without hard constraints are refused
    /// up front when they have more than `cap` assignments; otherwise the
    /// search aborts once it has visited `2 * cap` partial assignments.
    pub fn brute_force_map_with_cap(&self, cap: u64) -> Result<MapResult, GraphError> {
        let total = self
            .variables
            .iter()
            .fold(1u64, |acc, v| acc.saturating_mul(v.num_states() as u64));
        if !self.has_logic_factors() && total > cap {
            return Err(GraphError::EnumerationCap(format!(
                "{total} assignments exceed the cap of {cap}"
            )));
        }

        let n = self.num_variables();
        let mut completes = vec![Vec::new(); n];
        let mut partial = vec![Vec::new(); n];
        for (f, factor) in self.factors.iter().enumerate() {
            let last = *factor.vars().iter().max().expect("factors are non-empty");
            completes[last].push(f);
            if factor.kind().is_logic() {
                for &v in factor.vars() {
                    if v != last {
                        partial[v].push(f);
                    }
                }
            }
        }
        let mut search = Search {
            graph: self,
            completes,
            partial,
            states: vec![0; n],
            scratch: Vec::new(),
            best: None,
            visited: 0,
            budget: cap.saturating_mul(2),
        };
        search.descend(0, 0.0)?;

        let states = match search.best {
            Some((_, states)) => states,
            None => vec![0; n],
        };
        let value = self.evaluate_unchecked(&states);
        Ok(MapResult {
            assignment: Assignment(states),
            value,
        })
    }
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, acc: f64) -> Result<(), GraphError> {
        if depth == self.states.len() {
            if self.best.as_ref().is_none_or(|(b, _)| acc > *b) {
                self.best = Some((acc, self.states.clone()));
            }
            return Ok(());
        }
        let var = &self.graph.variables[depth];
        for s in 0..var.num_states() {
            self.visited += 1;
            if self.visited > self.budget {
                return Err(GraphError::EnumerationCap(format!(
                    "search visited more than {} partial assignments",
                    self.budget
                )));
            }
            self.states[depth] = s;
            let mut value = acc + var.unary()[s];
            if value == f64::NEG_INFINITY {
                continue;
            }
            for k in 0..self.completes[depth].len() {
                let f = self.completes[depth][k];
                let factor = &self.graph.factors[f];
                self.scratch.clear();
                self.scratch
                    .extend(factor.vars().iter().map(|&v| self.states[v]));
                value += factor.score(&self.scratch);
            }
            if value == f64::NEG_INFINITY || !self.partial_ok(depth) {
                continue;
            }
            self.descend(depth + 1, value)?;
        }
        Ok(())
    }

    /// Whether every partially assigned logic factor at `depth` can still be satisfied.
    fn partial_ok(&self, depth: usize) -> bool {
        self.partial[depth].iter().all(|&f| {
            let factor = &self.graph.factors[f];
            let vars = factor.vars();
            let on = |k: usize| (self.states[vars[k]] == 1) != factor.negated()[k];
            let set = |k: usize| vars[k] <= depth;
            let k = vars.len();
            match factor.potential() {
                Potential::Xor => {
                    let ones = (0..k).filter(|&j| set(j) && on(j)).count();
                    ones == 1 || (ones == 0 && (0..k).any(|j| !set(j)))
                }
                Potential::Or => (0..k).any(|j| !set(j) || on(j)),
                Potential::OrOut => {
                    let out = k - 1;
                    if !set(out) {
                        return true;
                    }
                    if on(out) {
                        (0..out).any(|j| !set(j) || on(j))
                    } else {
                        (0..out).all(|j| !set(j) || !on(j))
                    }
                }
                _ => true,
            }
        })
    }
}

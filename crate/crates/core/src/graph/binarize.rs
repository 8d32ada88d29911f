//! Rewriting an arbitrary graph into binary variables tied by XOR factors.
//!
//! Every state `y` of variable `i` becomes a binary indicator `U[i,y]`, and
//! an XOR over the indicators of `i` makes them one-hot. Every configuration
//! `c` of factor `a` becomes an indicator `U[a,c]` whose "on" state carries
//! the factor's score for `c`. For each factor position `k` and state `y`, an
//! XOR over `{U[a,c] : c_k = y}` and the negated `U[i,y]` forces exactly one
//! consistent configuration to be on when `i` takes state `y`, and none
//! otherwise. Unary scores move onto the "on" state of `U[i,y]`.

use super::{Assignment, Factor, FactorGraph, GraphError, Potential};

/// Largest factor table expanded into configuration indicators.
const MAX_FACTOR_CONFIGS: u64 = 1 << 20;

/// Where each original state and factor configuration lives in the binarized graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binarization {
    /// `state_vars[i][y]` is the indicator of variable `i` taking state `y`.
    pub state_vars: Vec<Vec<usize>>,
    /// `config_vars[a][c]` is the indicator of factor `a` in configuration `c`
    /// (row-major index).
    pub config_vars: Vec<Vec<usize>>,
}

impl Binarization {
    /// Maps a binarized assignment back to the original variables. A variable
    /// whose indicators are all off falls back to state 0.
    pub fn recover(&self, binary: &Assignment) -> Assignment {
        Assignment(
            self.state_vars
                .iter()
                .map(|vars| vars.iter().position(|&u| binary.0[u] == 1).unwrap_or(0))
                .collect(),
        )
    }

    /// Lifts an original assignment to the binarized graph.
    pub fn lift(&self, graph: &FactorGraph, assignment: &Assignment) -> Assignment {
        let total = self.state_vars.iter().map(Vec::len).sum::<usize>()
            + self.config_vars.iter().map(Vec::len).sum::<usize>();
        let mut out = vec![0; total];
        for (i, vars) in self.state_vars.iter().enumerate() {
            out[vars[assignment.0[i]]] = 1;
        }
        let mut local = Vec::new();
        for (a, factor) in graph.factors().iter().enumerate() {
            local.clear();
            local.extend(factor.vars().iter().map(|&v| assignment.0[v]));
            out[self.config_vars[a][factor.config_index(&local)]] = 1;
        }
        Assignment(out)
    }
}

impl FactorGraph {
    /// Builds the equivalent binary graph. Both graphs have the same optimal value.
    pub fn binarize(&self) -> Result<(FactorGraph, Binarization), GraphError> {
        let mut out = FactorGraph::new();
        let mut state_vars = Vec::with_capacity(self.num_variables());
        for var in self.variables() {
            let ids = var
                .unary()
                .iter()
                .map(|&theta| out.add_variable(vec![0.0, theta]))
                .collect::<Result<Vec<_>, _>>()?;
            state_vars.push(ids);
        }

        let mut config_vars = Vec::with_capacity(self.num_factors());
        for (a, factor) in self.factors().iter().enumerate() {
            let n = factor.num_configs();
            if n > MAX_FACTOR_CONFIGS {
                return Err(GraphError::Unsupported(format!(
                    "factor {a} has {n} configurations, more than {MAX_FACTOR_CONFIGS}"
                )));
            }
            let ids = (0..n as usize)
                .map(|c| {
                    let states = factor.config_from_index(c);
                    out.add_variable(vec![0.0, factor.score(&states)])
                })
                .collect::<Result<Vec<_>, _>>()?;
            config_vars.push(ids);
        }

        for ids in &state_vars {
            out.add_factor(Factor::new(ids.clone(), Potential::Xor))?;
        }
        for (a, factor) in self.factors().iter().enumerate() {
            let mut buckets: Vec<Vec<Vec<usize>>> =
                factor.dims().iter().map(|&d| vec![Vec::new(); d]).collect();
            for (c, &u) in config_vars[a].iter().enumerate() {
                for (k, &y) in factor.config_from_index(c).iter().enumerate() {
                    buckets[k][y].push(u);
                }
            }
            for (k, per_state) in buckets.into_iter().enumerate() {
                let var = factor.vars()[k];
                for (y, mut members) in per_state.into_iter().enumerate() {
                    members.push(state_vars[var][y]);
                    let mut negated = vec![false; members.len()];
                    *negated
                        .last_mut()
                        .expect("bucket includes the state indicator") = true;
                    out.add_factor(Factor::logic(members, negated, Potential::Xor))?;
                }
            }
        }

        Ok((
            out,
            Binarization {
                state_vars,
                config_vars,
            },
        ))
    }
}

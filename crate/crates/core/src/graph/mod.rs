//! Factor-graph data model.
//!
//! A [`FactorGraph`] is a bipartite graph of discrete variables and factors.
//! Scores live in the extended reals: `f64::NEG_INFINITY` marks a forbidden
//! state or configuration, and it absorbs every finite summand. `NaN` and
//! `+inf` are rejected at construction time.
//!
//! Edges are numbered in declaration order: the edges of factor `f` are
//! contiguous and follow the order in which `f` lists its variables. Every
//! solver iterates edges in this order so runs are bit-reproducible.

mod binarize;
mod enumerate;
mod format;

pub use binarize::Binarization;
pub use enumerate::DEFAULT_ENUMERATION_CAP;

use std::fmt;

use thiserror::Error;

/// Errors raised while building, parsing or querying a factor graph.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("enumeration refused: {0}")]
    EnumerationCap(String),
    #[error("unsupported factor: {0}")]
    Unsupported(String),
}

impl GraphError {
    fn invalid(msg: impl Into<String>) -> Self {
        GraphError::Validation(msg.into())
    }
}

/// Discriminant of a factor's potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorKind {
    Dense,
    Pair,
    Xor,
    Or,
    OrOut,
    Sequence,
}

impl FactorKind {
    /// Hard-constraint factors over binary variables.
    pub fn is_logic(self) -> bool {
        matches!(self, FactorKind::Xor | FactorKind::Or | FactorKind::OrOut)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            FactorKind::Dense => "DENSE",
            FactorKind::Pair => "PAIR",
            FactorKind::Xor => "XOR",
            FactorKind::Or => "OR",
            FactorKind::OrOut => "OR_OUT",
            FactorKind::Sequence => "SEQUENCE",
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Kind-specific log-potential data of a factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// Full table over the joint configurations, row-major in edge order.
    Dense(Vec<f64>),
    /// Binary pairwise table `(00, 01, 10, 11)`.
    Pair([f64; 4]),
    /// Exactly one (sign-adjusted) input is on.
    Xor,
    /// At least one (sign-adjusted) input is on.
    Or,
    /// The last (sign-adjusted) variable is the disjunction of the others.
    OrOut,
    /// Chain with one row-major transition table per adjacent pair.
    Sequence(Vec<Vec<f64>>),
}

impl Potential {
    pub fn kind(&self) -> FactorKind {
        match self {
            Potential::Dense(_) => FactorKind::Dense,
            Potential::Pair(_) => FactorKind::Pair,
            Potential::Xor => FactorKind::Xor,
            Potential::Or => FactorKind::Or,
            Potential::OrOut => FactorKind::OrOut,
            Potential::Sequence(_) => FactorKind::Sequence,
        }
    }
}

/// A discrete variable and its unary log-potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    unary: Vec<f64>,
}

impl Variable {
    pub fn new(unary: Vec<f64>) -> Result<Self, GraphError> {
        if unary.is_empty() {
            return Err(GraphError::invalid("variable needs at least one state"));
        }
        check_scores(&unary, "unary potential")?;
        Ok(Variable { unary })
    }

    pub fn num_states(&self) -> usize {
        self.unary.len()
    }

    pub fn unary(&self) -> &[f64] {
        &self.unary
    }

    pub fn is_binary(&self) -> bool {
        self.unary.len() == 2
    }
}

/// A factor: a potential attached to an ordered list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    vars: Vec<usize>,
    negated: Vec<bool>,
    potential: Potential,
    // State counts of `vars`, filled in when the factor joins a graph.
    dims: Vec<usize>,
}

impl Factor {
    pub fn new(vars: Vec<usize>, potential: Potential) -> Self {
        let negated = vec![false; vars.len()];
        Factor {
            vars,
            negated,
            potential,
            dims: Vec::new(),
        }
    }

    /// A logic factor whose inputs may enter negated.
    pub fn logic(vars: Vec<usize>, negated: Vec<bool>, potential: Potential) -> Self {
        Factor {
            vars,
            negated,
            potential,
            dims: Vec::new(),
        }
    }

    pub fn kind(&self) -> FactorKind {
        self.potential.kind()
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn negated(&self) -> &[bool] {
        &self.negated
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// State counts of the incident variables, in edge order.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of joint configurations (saturating).
    pub fn num_configs(&self) -> u64 {
        self.dims
            .iter()
            .fold(1u64, |acc, &d| acc.saturating_mul(d as u64))
    }

    /// Row-major index of a configuration.
    pub fn config_index(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.dims)
            .fold(0, |idx, (&s, &d)| idx * d + s)
    }

    /// Inverse of [`Factor::config_index`].
    pub fn config_from_index(&self, mut index: usize) -> Vec<usize> {
        let mut states = vec![0; self.dims.len()];
        for (k, &d) in self.dims.iter().enumerate().rev() {
            states[k] = index % d;
            index /= d;
        }
        states
    }

    /// Whether a configuration lies in a logic factor's acceptance set.
    /// Always true for score-carrying kinds.
    pub fn accepts(&self, states: &[usize]) -> bool {
        let on = |k: usize| (states[k] == 1) != self.negated[k];
        let k = states.len();
        match self.potential {
            Potential::Xor => (0..k).filter(|&j| on(j)).count() == 1,
            Potential::Or => (0..k).any(on),
            Potential::OrOut => on(k - 1) == (0..k - 1).any(on),
            _ => true,
        }
    }

    /// The factor log-potential of a configuration (incident states in edge order).
    pub fn score(&self, states: &[usize]) -> f64 {
        match &self.potential {
            Potential::Dense(table) => table[self.config_index(states)],
            Potential::Pair(table) => table[2 * states[0] + states[1]],
            Potential::Sequence(transitions) => transitions
                .iter()
                .enumerate()
                .map(|(k, t)| t[states[k] * self.dims[k + 1] + states[k + 1]])
                .sum(),
            Potential::Xor | Potential::Or | Potential::OrOut => {
                if self.accepts(states) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// A `(variable, factor)` incidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub var: usize,
    pub factor: usize,
}

/// One state index per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn states(&self) -> &[usize] {
        &self.0
    }
}

/// An assignment together with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub assignment: Assignment,
    pub value: f64,
}

/// Variables, factors and the edges between them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorGraph {
    variables: Vec<Variable>,
    factors: Vec<Factor>,
    edges: Vec<Edge>,
    factor_edge_start: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, unary: Vec<f64>) -> Result<usize, GraphError> {
        let var = Variable::new(unary)?;
        self.variables.push(var);
        self.var_edges.push(Vec::new());
        Ok(self.variables.len() - 1)
    }

    /// Validates `factor` against the current variables and appends it.
    pub fn add_factor(&mut self, mut factor: Factor) -> Result<usize, GraphError> {
        self.validate_factor(&factor)?;
        factor.dims = factor
            .vars
            .iter()
            .map(|&v| self.variables[v].num_states())
            .collect();
        self.check_payload(&factor)?;

        let f = self.factors.len();
        self.factor_edge_start.push(self.edges.len());
        for &v in &factor.vars {
            self.var_edges[v].push(self.edges.len());
            self.edges.push(Edge { var: v, factor: f });
        }
        self.factors.push(factor);
        Ok(f)
    }

    fn validate_factor(&self, factor: &Factor) -> Result<(), GraphError> {
        let kind = factor.kind();
        if factor.vars.is_empty() {
            return Err(GraphError::invalid(format!(
                "{kind} factor has no variables"
            )));
        }
        if factor.negated.len() != factor.vars.len() {
            return Err(GraphError::invalid(
                "sign flags do not match the factor arity",
            ));
        }
        for (k, &v) in factor.vars.iter().enumerate() {
            if v >= self.variables.len() {
                return Err(GraphError::invalid(format!(
                    "variable index {v} out of range ({} variables)",
                    self.variables.len()
                )));
            }
            if factor.vars[..k].contains(&v) {
                return Err(GraphError::invalid(format!(
                    "variable {v} linked twice to the same factor"
                )));
            }
        }
        if !kind.is_logic() && factor.negated.iter().any(|&n| n) {
            return Err(GraphError::invalid(format!(
                "negated inputs are only allowed on logic factors, not {kind}"
            )));
        }
        if kind.is_logic() || kind == FactorKind::Pair {
            if let Some(&v) = factor
                .vars
                .iter()
                .find(|&&v| !self.variables[v].is_binary())
            {
                let what = if kind.is_logic() {
                    "logic factor"
                } else {
                    "PAIR factor"
                };
                return Err(GraphError::invalid(format!(
                    "{what} on non-binary variable {v}"
                )));
            }
        }
        match kind {
            FactorKind::Pair if factor.arity() != 2 => Err(GraphError::invalid(
                "arity mismatch: PAIR factors have arity 2",
            )),
            FactorKind::OrOut if factor.arity() < 2 => Err(GraphError::invalid(
                "arity mismatch: OR_OUT needs at least one input and an output",
            )),
            _ => Ok(()),
        }
    }

    fn check_payload(&self, factor: &Factor) -> Result<(), GraphError> {
        match &factor.potential {
            Potential::Dense(table) => {
                let expected = factor.num_configs();
                if table.len() as u64 != expected {
                    return Err(GraphError::invalid(format!(
                        "DENSE table has {} entries, expected {expected}",
                        table.len()
                    )));
                }
                check_scores(table, "DENSE table")
            }
            Potential::Pair(table) => {
                if table.iter().any(|x| !x.is_finite()) {
                    return Err(GraphError::invalid("PAIR table entries must be finite"));
                }
                Ok(())
            }
            Potential::Sequence(transitions) => {
                let dims = &factor.dims;
                if transitions.len() + 1 != dims.len() {
                    return Err(GraphError::invalid(format!(
                        "SEQUENCE over {} variables needs {} transition tables, got {}",
                        dims.len(),
                        dims.len() - 1,
                        transitions.len()
                    )));
                }
                for (k, t) in transitions.iter().enumerate() {
                    if t.len() != dims[k] * dims[k + 1] {
                        return Err(GraphError::invalid(format!(
                            "SEQUENCE transition {k} has {} entries, expected {}",
                            t.len(),
                            dims[k] * dims[k + 1]
                        )));
                    }
                    check_scores(t, "SEQUENCE transition")?;
                }
                Ok(())
            }
            Potential::Xor | Potential::Or | Potential::OrOut => Ok(()),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, f: usize) -> &Factor {
        &self.factors[f]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of factor `f`, in the factor's variable order.
    pub fn factor_edges(&self, f: usize) -> std::ops::Range<usize> {
        let start = self.factor_edge_start[f];
        start..start + self.factors[f].arity()
    }

    /// Edge ids incident to variable `i`, in edge order.
    pub fn var_edges(&self, i: usize) -> &[usize] {
        &self.var_edges[i]
    }

    /// Number of factors linked to variable `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.var_edges[i].len()
    }

    /// Overwrites a variable's unary potential (same length, same validity rules).
    pub fn set_unary(&mut self, i: usize, unary: Vec<f64>) -> Result<(), GraphError> {
        if unary.len() != self.variables[i].num_states() {
            return Err(GraphError::DimensionMismatch(format!(
                "variable {i} has {} states, got {} potentials",
                self.variables[i].num_states(),
                unary.len()
            )));
        }
        self.variables[i] = Variable::new(unary)?;
        Ok(())
    }

    /// Whether any factor is a hard logic constraint.
    pub fn has_logic_factors(&self) -> bool {
        self.factors.iter().any(|f| f.kind().is_logic())
    }

    /// Checks an assignment's length and state ranges.
    pub fn check_assignment(&self, assignment: &Assignment) -> Result<(), GraphError> {
        if assignment.0.len() != self.variables.len() {
            return Err(GraphError::DimensionMismatch(format!(
                "assignment has {} states for {} variables",
                assignment.0.len(),
                self.variables.len()
            )));
        }
        for (i, (&s, var)) in assignment.0.iter().zip(&self.variables).enumerate() {
            if s >= var.num_states() {
                return Err(GraphError::DimensionMismatch(format!(
                    "state {s} out of range for variable {i} with {} states",
                    var.num_states()
                )));
            }
        }
        Ok(())
    }

    /// MAP objective: sum of factor and unary log-potentials.
    pub fn evaluate(&self, assignment: &Assignment) -> Result<f64, GraphError> {
        self.check_assignment(assignment)?;
        Ok(self.evaluate_unchecked(&assignment.0))
    }

    pub(crate) fn evaluate_unchecked(&self, states: &[usize]) -> f64 {
        let unary: f64 = self
            .variables
            .iter()
            .zip(states)
            .map(|(v, &s)| v.unary[s])
            .sum();
        let mut local = Vec::new();
        let factors: f64 = self
            .factors
            .iter()
            .map(|f| {
                local.clear();
                local.extend(f.vars.iter().map(|&v| states[v]));
                f.score(&local)
            })
            .sum();
        unary + factors
    }
}

fn check_scores(values: &[f64], what: &str) -> Result<(), GraphError> {
    match values.iter().find(|x| x.is_nan() || *x == &f64::INFINITY) {
        Some(x) => Err(GraphError::invalid(format!(
            "{what} contains {x}; only finite values and -inf are allowed"
        ))),
        None => Ok(()),
    }
}

//! Line-based text format.
//!
//! ```text
//! variables N
//! var <id> <num_states> <theta(0)> ... <theta(S-1)>
//! factor DENSE <arity> <v1..vk> <table entries, row-major>
//! factor PAIR 2 <v1> <v2> <t00> <t01> <t10> <t11>
//! factor XOR|OR|OR_OUT <arity> <signed variables>
//! factor SEQUENCE <arity> <v1..vk> <transition tables, row-major>
//! ```
//!
//! `#` starts a comment. Logic factors list signed variables: a token
//! `v >= 0` is variable `v`, a token `-(v+1)` is variable `v` negated. The
//! output of OR_OUT is its last variable. Scores accept `-inf`.

use std::fmt::Write as _;

use super::{Factor, FactorGraph, FactorKind, GraphError, Potential};

fn parse_err(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize, GraphError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("expected {what}, found `{tok}`")))
}

fn parse_score(tok: &str, line: usize) -> Result<f64, GraphError> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("expected a number, found `{tok}`")))
}

fn parse_scores(toks: &[&str], line: usize) -> Result<Vec<f64>, GraphError> {
    toks.iter().map(|t| parse_score(t, line)).collect()
}

fn parse_kind(tok: &str, line: usize) -> Result<FactorKind, GraphError> {
    Ok(match tok {
        "DENSE" => FactorKind::Dense,
        "PAIR" => FactorKind::Pair,
        "XOR" => FactorKind::Xor,
        "OR" => FactorKind::Or,
        "OR_OUT" => FactorKind::OrOut,
        "SEQUENCE" => FactorKind::Sequence,
        other => return Err(parse_err(line, format!("unknown factor kind `{other}`"))),
    })
}

struct PendingFactor {
    line: usize,
    kind: FactorKind,
    vars: Vec<usize>,
    negated: Vec<bool>,
    payload: Vec<f64>,
}

/// Parses and validates a graph document.
pub fn parse_graph(text: &str) -> Result<FactorGraph, GraphError> {
    let mut declared: Option<usize> = None;
    let mut unaries: Vec<Option<Vec<f64>>> = Vec::new();
    let mut pending: Vec<PendingFactor> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some((&head, rest)) = toks.split_first() else {
            continue;
        };
        match head {
            "variables" => {
                if declared.is_some() {
                    return Err(parse_err(line, "duplicate `variables` statement"));
                }
                let [n] = rest else {
                    return Err(parse_err(line, "expected `variables N`"));
                };
                let n = parse_usize(n, line, "a variable count")?;
                declared = Some(n);
                unaries = vec![None; n];
            }
            "var" => {
                let n = declared.ok_or_else(|| parse_err(line, "`var` before `variables`"))?;
                if rest.len() < 2 {
                    return Err(parse_err(
                        line,
                        "expected `var <id> <num_states> <potentials>`",
                    ));
                }
                let id = parse_usize(rest[0], line, "a variable id")?;
                let states = parse_usize(rest[1], line, "a state count")?;
                let theta = parse_scores(&rest[2..], line)?;
                if id >= n {
                    return Err(GraphError::Validation(format!(
                        "line {line}: variable index {id} out of range ({n} variables)"
                    )));
                }
                if theta.len() != states {
                    return Err(GraphError::Validation(format!(
                        "line {line}: variable {id} declares {states} states but lists {} potentials",
                        theta.len()
                    )));
                }
                if unaries[id].replace(theta).is_some() {
                    return Err(parse_err(line, format!("variable {id} declared twice")));
                }
            }
            "factor" => {
                if declared.is_none() {
                    return Err(parse_err(line, "`factor` before `variables`"));
                }
                pending.push(parse_factor_line(rest, line)?);
            }
            other => return Err(parse_err(line, format!("unknown statement `{other}`"))),
        }
    }

    let mut graph = FactorGraph::new();
    for (id, unary) in unaries.into_iter().enumerate() {
        let unary = unary
            .ok_or_else(|| GraphError::Validation(format!("variable {id} is never declared")))?;
        graph.add_variable(unary)?;
    }
    for pf in pending {
        let factor = build_factor(&graph, pf.kind, pf.vars, pf.negated, pf.payload)
            .and_then(|f| graph.add_factor(f))
            .map_err(|e| match e {
                GraphError::Validation(msg) => {
                    GraphError::Validation(format!("line {}: {msg}", pf.line))
                }
                other => other,
            });
        factor?;
    }
    Ok(graph)
}

fn parse_factor_line(rest: &[&str], line: usize) -> Result<PendingFactor, GraphError> {
    if rest.len() < 2 {
        return Err(parse_err(line, "expected `factor <KIND> <arity> ...`"));
    }
    let kind = parse_kind(rest[0], line)?;
    let arity = parse_usize(rest[1], line, "an arity")?;
    let body = &rest[2..];
    if body.len() < arity {
        return Err(GraphError::Validation(format!(
            "line {line}: arity mismatch: {kind} declares {arity} variables but lists {}",
            body.len()
        )));
    }
    let (var_toks, payload_toks) = body.split_at(arity);
    let mut vars = Vec::with_capacity(arity);
    let mut negated = Vec::with_capacity(arity);
    for tok in var_toks {
        if kind.is_logic() {
            let signed: i64 = tok.parse().map_err(|_| {
                parse_err(line, format!("expected a signed variable, found `{tok}`"))
            })?;
            if signed < 0 {
                vars.push((-(signed + 1)) as usize);
                negated.push(true);
            } else {
                vars.push(signed as usize);
                negated.push(false);
            }
        } else {
            vars.push(parse_usize(tok, line, "a variable index")?);
            negated.push(false);
        }
    }
    if kind.is_logic() && !payload_toks.is_empty() {
        return Err(GraphError::Validation(format!(
            "line {line}: arity mismatch: {kind} declares {arity} variables but lists {}",
            body.len()
        )));
    }
    let payload = parse_scores(payload_toks, line)?;
    Ok(PendingFactor {
        line,
        kind,
        vars,
        negated,
        payload,
    })
}

fn build_factor(
    graph: &FactorGraph,
    kind: FactorKind,
    vars: Vec<usize>,
    negated: Vec<bool>,
    payload: Vec<f64>,
) -> Result<Factor, GraphError> {
    let potential = match kind {
        FactorKind::Dense => Potential::Dense(payload),
        FactorKind::Pair => {
            let table: [f64; 4] = payload.as_slice().try_into().map_err(|_| {
                GraphError::Validation(format!(
                    "PAIR table has {} entries, expected 4",
                    payload.len()
                ))
            })?;
            Potential::Pair(table)
        }
        FactorKind::Xor => Potential::Xor,
        FactorKind::Or => Potential::Or,
        FactorKind::OrOut => Potential::OrOut,
        FactorKind::Sequence => {
            let dims: Vec<usize> = vars
                .iter()
                .map(|&v| {
                    if v < graph.num_variables() {
                        Ok(graph.variable(v).num_states())
                    } else {
                        Err(GraphError::Validation(format!(
                            "variable index {v} out of range ({} variables)",
                            graph.num_variables()
                        )))
                    }
                })
                .collect::<Result<_, _>>()?;
            let expected: usize = dims.windows(2).map(|w| w[0] * w[1]).sum();
            if payload.len() != expected {
                return Err(GraphError::Validation(format!(
                    "SEQUENCE payload has {} entries, expected {expected}",
                    payload.len()
                )));
            }
            let mut rest = payload.as_slice();
            let mut tables = Vec::with_capacity(dims.len().saturating_sub(1));
            for w in dims.windows(2) {
                let (head, tail) = rest.split_at(w[0] * w[1]);
                tables.push(head.to_vec());
                rest = tail;
            }
            Potential::Sequence(tables)
        }
    };
    Ok(if kind.is_logic() {
        Factor::logic(vars, negated, potential)
    } else {
        Factor::new(vars, potential)
    })
}

/// Renders a graph in the text format. Output is deterministic and re-parses
/// to a structurally identical graph.
pub fn serialize_graph(graph: &FactorGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "variables {}", graph.num_variables());
    for (id, var) in graph.variables().iter().enumerate() {
        let _ = write!(out, "var {id} {}", var.num_states());
        push_scores(&mut out, var.unary());
        out.push('\n');
    }
    for factor in graph.factors() {
        let _ = write!(out, "factor {} {}", factor.kind(), factor.arity());
        if factor.kind().is_logic() {
            for (&v, &neg) in factor.vars().iter().zip(factor.negated()) {
                if neg {
                    let _ = write!(out, " -{}", v + 1);
                } else {
                    let _ = write!(out, " {v}");
                }
            }
        } else {
            for &v in factor.vars() {
                let _ = write!(out, " {v}");
            }
        }
        match factor.potential() {
            Potential::Dense(table) => push_scores(&mut out, table),
            Potential::Pair(table) => push_scores(&mut out, table),
            Potential::Sequence(tables) => {
                for t in tables {
                    push_scores(&mut out, t);
                }
            }
            Potential::Xor | Potential::Or | Potential::OrOut => {}
        }
        out.push('\n');
    }
    out
}

fn push_scores(out: &mut String, values: &[f64]) {
    for x in values {
        // Debug formatting is the shortest representation that round-trips.
        let _ = write!(out, " {x:?}");
    }
}

impl FactorGraph {
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        parse_graph(text)
    }

    pub fn to_text(&self) -> String {
        serialize_graph(self)
    }
}

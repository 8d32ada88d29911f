//! MAP oracles: maximize `weight * theta(y) + sum_i scores_i(y_i)` over a
//! factor's configurations.
//!
//! `scores` is the concatenation of one vector per factor variable, in the
//! factor's variable order. Entries may be `-inf`, which excludes a state.

use thiserror::Error;

use crate::graph::{Factor, Potential};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("no configuration has a finite score")]
    Infeasible,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type MapOutcome = Result<(Vec<usize>, f64), OracleError>;

pub trait MapOracle {
    /// State counts of the factor's variables.
    fn dims(&self) -> &[usize];

    /// The factor's own log-potential for a configuration.
    fn factor_score(&self, config: &[usize]) -> f64;

    /// Best configuration and its score.
    fn compute_map(&self, scores: &[f64], weight: f64) -> MapOutcome;
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect()
}

fn check_len(scores: &[f64], dims: &[usize]) -> Result<(), OracleError> {
    let expected: usize = dims.iter().sum();
    if scores.len() != expected {
        return Err(OracleError::DimensionMismatch(format!(
            "{} scores for {expected} states",
            scores.len()
        )));
    }
    Ok(())
}

fn config_score(scores: &[f64], dims: &[usize], config: &[usize]) -> f64 {
    let mut off = 0;
    let mut total = 0.0;
    for (&d, &y) in dims.iter().zip(config) {
        total += scores[off + y];
        off += d;
    }
    total
}

/// Exhaustive search over a row-major table; the lexicographically first
/// maximizer wins ties. Configurations scoring `-inf` are never returned.
pub fn dense_map_oracle(scores: &[f64], dims: &[usize], table: &[f64], weight: f64) -> MapOutcome {
    check_len(scores, dims)?;
    let total: usize = dims.iter().product();
    if table.len() != total {
        return Err(OracleError::DimensionMismatch(format!(
            "table has {} entries for {total} configurations",
            table.len()
        )));
    }
    let offs = offsets(dims);
    let mut config = vec![0; dims.len()];
    let mut best: Option<(usize, f64)> = None;
    for (idx, &theta) in table.iter().enumerate() {
        if theta != f64::NEG_INFINITY {
            let mut value = weight * theta;
            for (k, &y) in config.iter().enumerate() {
                value += scores[offs[k] + y];
            }
            if value > best.map_or(f64::NEG_INFINITY, |(_, b)| b) {
                best = Some((idx, value));
            }
        }
        // advance the row-major odometer
        for k in (0..dims.len()).rev() {
            config[k] += 1;
            if config[k] < dims[k] {
                break;
            }
            config[k] = 0;
        }
    }
    let (idx, value) = best.ok_or(OracleError::Infeasible)?;
    let mut rest = idx;
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = rest % dims[k];
        rest /= dims[k];
    }
    Ok((out, value))
}

/// Max-sum dynamic program over a chain. `tables[k]` scores the transition
/// between positions `k` and `k + 1`, row-major. Ties go to the lowest state
/// during backtracking.
pub fn viterbi_map_oracle(
    scores: &[f64],
    dims: &[usize],
    tables: &[Vec<f64>],
    weight: f64,
) -> MapOutcome {
    check_len(scores, dims)?;
    if dims.is_empty() || tables.len() + 1 != dims.len() {
        return Err(OracleError::DimensionMismatch(format!(
            "{} transition tables for a chain of length {}",
            tables.len(),
            dims.len()
        )));
    }
    for (k, t) in tables.iter().enumerate() {
        if t.len() != dims[k] * dims[k + 1] {
            return Err(OracleError::DimensionMismatch(format!(
                "transition table {k} has {} entries, expected {}",
                t.len(),
                dims[k] * dims[k + 1]
            )));
        }
    }
    let offs = offsets(dims);
    let mut delta: Vec<f64> = scores[..dims[0]].to_vec();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(tables.len());
    for (k, table) in tables.iter().enumerate() {
        let (from, to) = (dims[k], dims[k + 1]);
        let mut next = vec![f64::NEG_INFINITY; to];
        let mut arg = vec![0; to];
        for t in 0..to {
            for s in 0..from {
                let theta = table[s * to + t];
                if theta == f64::NEG_INFINITY || delta[s] == f64::NEG_INFINITY {
                    continue;
                }
                let v = delta[s] + weight * theta;
                if v > next[t] {
                    next[t] = v;
                    arg[t] = s;
                }
            }
            next[t] += scores[offs[k + 1] + t];
        }
        back.push(arg);
        delta = next;
    }
    let mut last = 0;
    for (s, &v) in delta.iter().enumerate() {
        if v > delta[last] {
            last = s;
        }
    }
    if delta[last] == f64::NEG_INFINITY {
        return Err(OracleError::Infeasible);
    }
    let mut config = vec![0; dims.len()];
    config[dims.len() - 1] = last;
    for k in (0..tables.len()).rev() {
        config[k] = back[k][config[k + 1]];
    }
    let mut value = config_score(scores, dims, &config);
    for (k, t) in tables.iter().enumerate() {
        value += weight * t[config[k] * dims[k + 1] + config[k + 1]];
    }
    Ok((config, value))
}

/// Per-input scores of the "on" and "off" raw states under the sign flags.
fn on_off(scores: &[f64], negated: &[bool]) -> Vec<(f64, f64)> {
    negated
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let (s0, s1) = (scores[2 * k], scores[2 * k + 1]);
            if n {
                (s0, s1)
            } else {
                (s1, s0)
            }
        })
        .collect()
}

fn raw_state(on: bool, negated: bool) -> usize {
    usize::from(on != negated)
}

/// Best configuration with exactly one active input.
pub fn xor_map_oracle(scores: &[f64], negated: &[bool]) -> MapOutcome {
    check_len(scores, &vec![2; negated.len()])?;
    let oo = on_off(scores, negated);
    let mut best: Option<(usize, f64)> = None;
    for k in 0..oo.len() {
        let value: f64 = oo
            .iter()
            .enumerate()
            .map(|(j, &(on, off))| if j == k { on } else { off })
            .sum();
        if value > best.map_or(f64::NEG_INFINITY, |(_, b)| b) {
            best = Some((k, value));
        }
    }
    let (k, value) = best.ok_or(OracleError::Infeasible)?;
    let config = negated
        .iter()
        .enumerate()
        .map(|(j, &n)| raw_state(j == k, n))
        .collect();
    Ok((config, value))
}

/// Best configuration of the inputs with at least one active.
fn or_best(oo: &[(f64, f64)], negated: &[bool]) -> Option<(Vec<usize>, f64)> {
    let mut config = Vec::with_capacity(oo.len());
    let mut value = 0.0;
    let mut any_on = false;
    for (&(on, off), &n) in oo.iter().zip(negated) {
        // prefer raw state 0 on ties
        let s0_is_on = n;
        let (s0, s1) = if s0_is_on { (on, off) } else { (off, on) };
        let pick = usize::from(s1 > s0);
        let v = if pick == 1 { s1 } else { s0 };
        if v == f64::NEG_INFINITY {
            return None;
        }
        any_on |= (pick == 1) != n;
        config.push(pick);
        value += v;
    }
    if any_on {
        return Some((config, value));
    }
    // Everything is off: switch on the input that costs the least.
    let mut best: Option<(usize, f64)> = None;
    for (k, &(on, off)) in oo.iter().enumerate() {
        if on == f64::NEG_INFINITY {
            continue;
        }
        let gain = on - off;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((k, gain));
        }
    }
    let (k, _) = best?;
    config[k] = raw_state(true, negated[k]);
    let value = oo
        .iter()
        .enumerate()
        .map(|(j, &(on, off))| if j == k { on } else { off })
        .sum();
    Some((config, value))
}

/// Best configuration with at least one active input.
pub fn or_map_oracle(scores: &[f64], negated: &[bool]) -> MapOutcome {
    check_len(scores, &vec![2; negated.len()])?;
    or_best(&on_off(scores, negated), negated).ok_or(OracleError::Infeasible)
}

/// Best configuration whose last (output) variable is active iff some input is.
pub fn or_out_map_oracle(scores: &[f64], negated: &[bool]) -> MapOutcome {
    check_len(scores, &vec![2; negated.len()])?;
    if negated.len() < 2 {
        return Err(OracleError::DimensionMismatch(
            "OR_OUT needs an input and an output".into(),
        ));
    }
    let oo = on_off(scores, negated);
    let k = oo.len() - 1;
    let (out_on, out_off) = oo[k];

    let all_off: f64 = oo[..k].iter().map(|&(_, off)| off).sum::<f64>() + out_off;
    let off_config: Vec<usize> = negated.iter().map(|&n| raw_state(false, n)).collect();
    let on_case = if out_on == f64::NEG_INFINITY {
        None
    } else {
        or_best(&oo[..k], &negated[..k]).map(|(mut c, v)| {
            c.push(raw_state(true, negated[k]));
            (c, v + out_on)
        })
    };
    let off_case = (all_off > f64::NEG_INFINITY).then_some((off_config, all_off));
    match (off_case, on_case) {
        (None, None) => Err(OracleError::Infeasible),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (Some(a), Some(b)) => {
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                Ok(b)
            } else {
                Ok(a)
            }
        }
    }
}

/// Oracle for a factor of any kind.
#[derive(Debug, Clone, Copy)]
pub struct FactorOracle<'f> {
    factor: &'f Factor,
}

impl<'f> FactorOracle<'f> {
    pub fn new(factor: &'f Factor) -> Self {
        FactorOracle { factor }
    }
}

impl MapOracle for FactorOracle<'_> {
    fn dims(&self) -> &[usize] {
        self.factor.dims()
    }

    fn factor_score(&self, config: &[usize]) -> f64 {
        self.factor.score(config)
    }

    fn compute_map(&self, scores: &[f64], weight: f64) -> MapOutcome {
        let dims = self.factor.dims();
        match self.factor.potential() {
            Potential::Dense(table) => dense_map_oracle(scores, dims, table, weight),
            Potential::Pair(table) => dense_map_oracle(scores, dims, table, weight),
            Potential::Sequence(tables) => viterbi_map_oracle(scores, dims, tables, weight),
            Potential::Xor => xor_map_oracle(scores, self.factor.negated()),
            Potential::Or => or_map_oracle(scores, self.factor.negated()),
            Potential::OrOut => or_out_map_oracle(scores, self.factor.negated()),
        }
    }
}

/// Excludes some variable states by adding `-inf` to their scores.
#[derive(Debug, Clone)]
pub struct Masked<O> {
    inner: O,
    forbidden: Vec<bool>,
}

impl<O: MapOracle> Masked<O> {
    /// `forbidden` is laid out like the oracle's scores.
    pub fn new(inner: O, forbidden: Vec<bool>) -> Self {
        Masked { inner, forbidden }
    }
}

impl<O: MapOracle> MapOracle for Masked<O> {
    fn dims(&self) -> &[usize] {
        self.inner.dims()
    }

    fn factor_score(&self, config: &[usize]) -> f64 {
        let mut off = 0;
        for (&d, &y) in self.dims().iter().zip(config) {
            if self.forbidden[off + y] {
                return f64::NEG_INFINITY;
            }
            off += d;
        }
        self.inner.factor_score(config)
    }

    fn compute_map(&self, scores: &[f64], weight: f64) -> MapOutcome {
        let masked: Vec<f64> = scores
            .iter()
            .zip(&self.forbidden)
            .map(|(&s, &f)| if f { f64::NEG_INFINITY } else { s })
            .collect();
        self.inner.compute_map(&masked, weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Assignment, FactorGraph};
    use proptest::prelude::*;

    fn exhaustive(oracle: &dyn MapOracle, scores: &[f64], weight: f64) -> Option<f64> {
        let dims = oracle.dims().to_vec();
        let total: usize = dims.iter().product();
        let mut best: Option<f64> = None;
        for idx in 0..total {
            let mut rest = idx;
            let mut config = vec![0; dims.len()];
            for k in (0..dims.len()).rev() {
                config[k] = rest % dims[k];
                rest /= dims[k];
            }
            let theta = oracle.factor_score(&config);
            if theta == f64::NEG_INFINITY {
                continue;
            }
            let v = weight * theta + config_score(scores, &dims, &config);
            if v > f64::NEG_INFINITY && best.is_none_or(|b| v > b) {
                best = Some(v);
            }
        }
        best
    }

    fn graph_with(dims: &[usize], factor: Factor) -> FactorGraph {
        let mut g = FactorGraph::new();
        for &d in dims {
            g.add_variable(vec![0.0; d]).unwrap();
        }
        g.add_factor(factor).unwrap();
        g
    }

    #[test]
    fn dense_examples() {
        let table = [0.0, 0.0, 1.0, 0.0];
        assert_eq!(
            dense_map_oracle(&[0.0; 4], &[2, 2], &table, 1.0).unwrap(),
            (vec![1, 0], 1.0)
        );
        assert_eq!(
            dense_map_oracle(&[0.0; 4], &[2, 2], &[0.0; 4], 1.0).unwrap(),
            (vec![0, 0], 0.0)
        );
        assert_eq!(
            dense_map_oracle(&[0.0; 4], &[2, 2], &[f64::NEG_INFINITY; 4], 1.0),
            Err(OracleError::Infeasible)
        );
        // weight scales the table only
        let (c, v) = dense_map_oracle(&[0.0, 0.3, 0.0, 0.0], &[2, 2], &table, 0.5).unwrap();
        assert_eq!(c, vec![1, 0]);
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn viterbi_examples() {
        let tables = vec![vec![0.0; 6], vec![0.0; 6]];
        assert_eq!(
            viterbi_map_oracle(&[0.0; 7], &[2, 3, 2], &tables, 1.0).unwrap(),
            (vec![0, 0, 0], 0.0)
        );
        assert!(matches!(
            viterbi_map_oracle(&[0.0; 7], &[2, 3, 2], &tables[..1], 1.0),
            Err(OracleError::DimensionMismatch(_))
        ));
        // a length-two chain is a dense table
        let t = vec![0.1, -0.2, 0.4, 0.3, 0.0, -0.5];
        let scores = [0.2, 0.1, -0.1, 0.0, 0.25];
        assert_eq!(
            viterbi_map_oracle(&scores, &[2, 3], std::slice::from_ref(&t), 1.0).unwrap(),
            dense_map_oracle(&scores, &[2, 3], &t, 1.0).unwrap()
        );
    }

    #[test]
    fn logic_examples() {
        // XOR picks the single best input to switch on
        let (c, v) = xor_map_oracle(&[0.0, 1.0, 0.0, 0.5], &[false, false]).unwrap();
        assert_eq!((c, v), (vec![1, 0], 1.0));
        // OR with everything preferring off must still switch one on
        let (c, v) = or_map_oracle(&[0.0, -1.0, 0.0, -0.5], &[false, false]).unwrap();
        assert_eq!((c, v), (vec![0, 1], -0.5));
        // OR_OUT prefers the all-off configuration here
        let (c, _) = or_out_map_oracle(&[0.0, -1.0, 0.0, -0.5, 0.0, 0.2], &[false; 3]).unwrap();
        assert_eq!(c, vec![0, 0, 0]);
        assert_eq!(
            xor_map_oracle(
                &[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, 0.0],
                &[false, false]
            ),
            Err(OracleError::Infeasible)
        );
    }

    #[test]
    fn masked_oracle_avoids_forbidden_states() {
        let factor = Factor::new(vec![0, 1], Potential::Pair([0.0, 0.0, 0.0, 5.0]));
        let g = graph_with(&[2, 2], factor);
        let oracle = Masked::new(
            FactorOracle::new(g.factor(0)),
            vec![false, true, false, false],
        );
        let (c, _) = oracle.compute_map(&[0.0; 4], 1.0).unwrap();
        assert_eq!(c[0], 0);
        assert_eq!(oracle.factor_score(&[1, 1]), f64::NEG_INFINITY);
    }

    fn scores_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![9 => -2.0f64..2.0, 1 => Just(f64::NEG_INFINITY)],
            n,
        )
    }

    proptest! {
        #[test]
        fn dense_matches_brute_force(table in prop::collection::vec(-1.0f64..1.0, 12)) {
            let g = graph_with(&[2, 3, 2], Factor::new(vec![0, 1, 2], Potential::Dense(table.clone())));
            let best = g.brute_force_map().unwrap();
            let (c, v) = dense_map_oracle(&[0.0; 7], &[2, 3, 2], &table, 1.0).unwrap();
            prop_assert_eq!(Assignment(c), best.assignment);
            prop_assert!((v - best.value).abs() < 1e-12);
        }

        #[test]
        fn viterbi_matches_enumeration(
            dims in prop::collection::vec(1usize..=4, 1..=6),
            seed in prop::collection::vec(-1.0f64..1.0, 200),
        ) {
            let mut it = seed.into_iter().cycle();
            let tables: Vec<Vec<f64>> = dims.windows(2).map(|w| (0..w[0] * w[1]).map(|_| it.next().unwrap()).collect()).collect();
            let scores: Vec<f64> = (0..dims.iter().sum::<usize>()).map(|_| it.next().unwrap()).collect();
            let vars: Vec<usize> = (0..dims.len()).collect();
            let g = graph_with(&dims, Factor::new(vars, Potential::Sequence(tables.clone())));
            let oracle = FactorOracle::new(g.factor(0));
            let (c, v) = viterbi_map_oracle(&scores, &dims, &tables, 0.7).unwrap();
            let expected = exhaustive(&oracle, &scores, 0.7).unwrap();
            prop_assert!((v - expected).abs() < 1e-12);
            prop_assert!((0.7 * oracle.factor_score(&c) + config_score(&scores, &dims, &c) - v).abs() < 1e-12);
        }

        #[test]
        fn logic_oracles_match_enumeration(
            k in 1usize..=5,
            scores in scores_strategy(10),
            flips in prop::collection::vec(any::<bool>(), 5),
        ) {
            for potential in [Potential::Xor, Potential::Or, Potential::OrOut] {
                if potential == Potential::OrOut && k < 2 {
                    continue;
                }
                let vars: Vec<usize> = (0..k).collect();
                let g = graph_with(&vec![2; k], Factor::logic(vars, flips[..k].to_vec(), potential.clone()));
                let oracle = FactorOracle::new(g.factor(0));
                let s = &scores[..2 * k];
                match (oracle.compute_map(s, 1.0), exhaustive(&oracle, s, 1.0)) {
                    (Ok((c, v)), Some(best)) => {
                        prop_assert!((v - best).abs() < 1e-12, "{:?}", potential);
                        prop_assert!(g.factor(0).accepts(&c));
                        prop_assert!((config_score(s, &vec![2; k], &c) - v).abs() < 1e-12);
                    }
                    (Err(OracleError::Infeasible), None) => {}
                    (got, want) => prop_assert!(false, "{:?}: {:?} vs {:?}", potential, got, want),
                }
            }
        }
    }
}

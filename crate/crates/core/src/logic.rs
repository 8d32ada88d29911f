//! Euclidean projections onto the marginal polytopes of hard-constraint factors.
//!
//! A logic factor over `K` binary variables is parametrized by `z_k`, the
//! probability that input `k` is on. The AD³ subproblem for such a factor is
//! a projection of `z0_k = (a_k(1) + 1 - a_k(0)) / 2` onto:
//!
//! * XOR: the probability simplex;
//! * OR: the unit cube cut by `sum z >= 1`;
//! * OR_OUT: the set `z_k <= z_out <= sum_k z_k` inside the unit cube, with
//!   the output coordinate stored last.
//!
//! Negated inputs are handled by reflecting `z -> 1 - z` before and after.

use thiserror::Error;

use crate::graph::FactorKind;

/// Feasibility slack for the dispatch tests in [`project_or`] and [`project_or_out`].
const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogicError {
    #[error("logic factor input {0} is not binary")]
    NonBinary(usize),
    #[error("{0} is not a logic factor")]
    NotLogic(FactorKind),
    #[error("expected {expected} sign flags, got {got}")]
    SignLength { expected: usize, got: usize },
}

fn clip(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut y = values.to_vec();
    y.sort_by(|a, b| b.total_cmp(a));
    y
}

/// Projection onto the probability simplex.
pub fn project_simplex(z0: &[f64]) -> Vec<f64> {
    assert!(
        !z0.is_empty(),
        "simplex projection needs at least one coordinate"
    );
    let y = sorted_desc(z0);
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for (j, &yj) in y.iter().enumerate() {
        prefix += yj;
        let t = (prefix - 1.0) / (j + 1) as f64;
        // j = 0 always qualifies, so tau is always set.
        if yj - t > 0.0 {
            tau = t;
        }
    }
    z0.iter().map(|&z| (z - tau).max(0.0)).collect()
}

/// Projection onto the OR polytope: clip to the cube, falling back to the
/// simplex when the clipped point misses the `sum >= 1` cut.
pub fn project_or(z0: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = z0.iter().map(|&z| clip(z)).collect();
    if clipped.iter().sum::<f64>() >= 1.0 - FEASIBILITY_TOL {
        clipped
    } else {
        project_simplex(z0)
    }
}

/// Projection onto the cone `{z : z_k <= z_out}` (output last).
pub fn project_cone_a1(z0: &[f64]) -> Vec<f64> {
    assert!(z0.len() >= 2, "cone projection needs inputs and an output");
    let (inputs, out) = z0.split_at(z0.len() - 1);
    let y = sorted_desc(inputs);
    let mut acc = out[0];
    let mut tau = acc;
    for j in 1..=y.len() + 1 {
        let avg = acc / j as f64;
        let yj = y.get(j - 1).copied().unwrap_or(f64::NEG_INFINITY);
        if avg > yj {
            tau = avg;
            break;
        }
        acc += yj;
    }
    inputs
        .iter()
        .map(|&z| z.min(tau))
        .chain(std::iter::once(tau))
        .collect()
}

fn in_a1(z: &[f64]) -> bool {
    let out = z[z.len() - 1];
    z[..z.len() - 1].iter().all(|&x| x <= out + FEASIBILITY_TOL)
}

fn in_a2(z: &[f64]) -> bool {
    let (inputs, out) = z.split_at(z.len() - 1);
    inputs.iter().sum::<f64>() >= out[0] - FEASIBILITY_TOL
}

/// Projection onto the OR-with-output polytope (output last).
pub fn project_or_out(z0: &[f64]) -> Vec<f64> {
    assert!(
        z0.len() >= 2,
        "OR_OUT projection needs inputs and an output"
    );
    let clipped: Vec<f64> = z0.iter().map(|&z| clip(z)).collect();
    if in_a1(&clipped) {
        if in_a2(&clipped) {
            return clipped;
        }
    } else {
        let cone: Vec<f64> = project_cone_a1(z0).into_iter().map(clip).collect();
        if in_a2(&cone) {
            return cone;
        }
    }
    // Equality face sum_k z_k = z_out: a simplex with the output reflected.
    let last = z0.len() - 1;
    let mut w = z0.to_vec();
    w[last] = 1.0 - w[last];
    let mut z = project_simplex(&w);
    z[last] = 1.0 - z[last];
    z
}

/// Projects `z0` onto the polytope of `kind` with the given inputs reflected.
pub fn project_logic(
    kind: FactorKind,
    negated: &[bool],
    z0: &[f64],
) -> Result<Vec<f64>, LogicError> {
    if negated.len() != z0.len() {
        return Err(LogicError::SignLength {
            expected: z0.len(),
            got: negated.len(),
        });
    }
    let sym = |z: &[f64]| -> Vec<f64> {
        z.iter()
            .zip(negated)
            .map(|(&x, &n)| if n { 1.0 - x } else { x })
            .collect()
    };
    let reflected = sym(z0);
    let projected = match kind {
        FactorKind::Xor => project_simplex(&reflected),
        FactorKind::Or => project_or(&reflected),
        FactorKind::OrOut => project_or_out(&reflected),
        other => return Err(LogicError::NotLogic(other)),
    };
    Ok(sym(&projected))
}

/// Solves the AD³ subproblem of a logic factor. `a[k]` is the two-entry
/// vector of input `k`; returns `z_k = q_k(1)`.
pub fn solve_qp_logic(
    kind: FactorKind,
    negated: &[bool],
    a: &[&[f64]],
) -> Result<Vec<f64>, LogicError> {
    let z0 = a
        .iter()
        .enumerate()
        .map(|(k, ak)| match ak {
            [a0, a1] => Ok((a1 + 1.0 - a0) / 2.0),
            _ => Err(LogicError::NonBinary(k)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    project_logic(kind, negated, &z0)
}

//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Linear constraint `row · z <= rhs`, or `==` when `equality` is set.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub row: Vec<f64>,
    pub rhs: f64,
    pub equality: bool,
}

fn le(row: Vec<f64>, rhs: f64) -> Constraint {
    Constraint {
        row,
        rhs,
        equality: false,
    }
}

fn unit(n: usize, k: usize, scale: f64) -> Vec<f64> {
    let mut r = vec![0.0; n];
    r[k] = scale;
    r
}

fn unit_box(n: usize) -> Vec<Constraint> {
    (0..n)
        .flat_map(|k| [le(unit(n, k, -1.0), 0.0), le(unit(n, k, 1.0), 1.0)])
        .collect()
}

pub fn simplex_constraints(n: usize) -> Vec<Constraint> {
    let mut out: Vec<Constraint> = (0..n).map(|k| le(unit(n, k, -1.0), 0.0)).collect();
    out.push(Constraint {
        row: vec![1.0; n],
        rhs: 1.0,
        equality: true,
    });
    out
}

pub fn or_constraints(n: usize) -> Vec<Constraint> {
    let mut out = unit_box(n);
    out.push(le(vec![-1.0; n], -1.0));
    out
}

/// `z_k <= z_out` for the `inputs` leading coordinates, output last.
pub fn cone_constraints(inputs: usize) -> Vec<Constraint> {
    let n = inputs + 1;
    (0..inputs)
        .map(|k| {
            let mut r = unit(n, k, 1.0);
            r[inputs] = -1.0;
            le(r, 0.0)
        })
        .collect()
}

pub fn or_out_constraints(inputs: usize) -> Vec<Constraint> {
    let n = inputs + 1;
    let mut out = unit_box(n);
    out.extend(cone_constraints(inputs));
    let mut r = vec![-1.0; n];
    r[inputs] = 1.0;
    out.push(le(r, 0.0));
    out
}

pub fn max_violation(cons: &[Constraint], z: &[f64]) -> f64 {
    cons.iter()
        .map(|c| {
            let lhs: f64 = c.row.iter().zip(z).map(|(a, b)| a * b).sum();
            if c.equality {
                (lhs - c.rhs).abs()
            } else {
                (lhs - c.rhs).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Euclidean projection onto `{z : cons}` by enumerating candidate active
/// sets: for every subset of inequalities (with all equalities) whose rows
/// are independent, project onto the affine hull and keep the closest
/// feasible point.
pub fn facet_projection(cons: &[Constraint], z0: &[f64]) -> Vec<f64> {
    let n = z0.len();
    let eqs: Vec<&Constraint> = cons.iter().filter(|c| c.equality).collect();
    let ineqs: Vec<&Constraint> = cons.iter().filter(|c| !c.equality).collect();
    let max_extra = n.saturating_sub(eqs.len());
    let x0 = DVector::from_column_slice(z0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen = Vec::new();
    subsets(ineqs.len(), max_extra, 0, &mut chosen, &mut |subset| {
        let active: Vec<&Constraint> = eqs
            .iter()
            .copied()
            .chain(subset.iter().map(|&i| ineqs[i]))
            .collect();
        let z = if active.is_empty() {
            x0.clone()
        } else {
            let m = active.len();
            let a = DMatrix::from_fn(m, n, |r, c| active[r].row[c]);
            if a.rank(1e-10) < m {
                return;
            }
            let b = DVector::from_iterator(m, active.iter().map(|c| c.rhs));
            let gram = &a * a.transpose();
            let Some(mu) = gram.lu().solve(&(&a * &x0 - b)) else {
                return;
            };
            &x0 - a.transpose() * mu
        };
        let z: Vec<f64> = z.iter().copied().collect();
        if max_violation(cons, &z) > 1e-9 {
            return;
        }
        let d: f64 = z.iter().zip(z0).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    });
    best.expect("nonempty polytope").1
}

fn subsets(
    n: usize,
    max: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    f(chosen);
    if chosen.len() == max {
        return;
    }
    for i in start..n {
        chosen.push(i);
        subsets(n, max, i + 1, chosen, f);
        chosen.pop();
    }
}

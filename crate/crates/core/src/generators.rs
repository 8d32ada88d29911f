//! Seeded synthetic instances.
//!
//! All randomness comes from [`Rng`]: xoshiro256** seeded through
//! SplitMix64. A uniform draw on `[a, b)` is `a + (b - a) * u` with
//! `u = (x >> 11) * 2^-53` for the next 64-bit output `x`, so instances can
//! be reproduced bit for bit from the seed alone.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use thiserror::Error;

use crate::graph::{Factor, FactorGraph, Potential};

#[derive(Debug, Clone)]
pub struct Rng(Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    pub fn coin(&mut self) -> bool {
        self.unit() < 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ising,
    Potts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub rows: usize,
    pub cols: usize,
    /// States per variable (Potts only).
    pub num_states: usize,
    /// Half-width of the Ising coupling distribution.
    pub rho: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

impl GeneratorSpec {
    fn check(&self, family: Family) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidSpec(m.into()));
        if self.family != family {
            return bad("family does not match the generator");
        }
        if self.rows == 0 || self.cols == 0 {
            return bad("grid dimensions must be positive");
        }
        if family == Family::Ising && !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if family == Family::Potts && self.num_states < 2 {
            return bad("Potts variables need at least two states");
        }
        Ok(())
    }
}

/// 4-neighbour grid edges: for each cell in row-major order, right then down.
fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    edges
}

/// Binary grid: `theta_i = (0, U[-1, 1])`, couplings on `b(1, 1) ~ U[-rho, rho]`.
pub fn gen_ising(spec: &GeneratorSpec) -> Result<FactorGraph, GeneratorError> {
    spec.check(Family::Ising)?;
    let mut rng = Rng::new(spec.seed);
    let mut g = FactorGraph::new();
    for _ in 0..spec.rows * spec.cols {
        let t = rng.uniform(-1.0, 1.0);
        g.add_variable(vec![0.0, t]).expect("finite unary");
    }
    for (a, b) in grid_edges(spec.rows, spec.cols) {
        let w = rng.uniform(-spec.rho, spec.rho);
        g.add_factor(Factor::new(vec![a, b], Potential::Pair([0.0, 0.0, 0.0, w])))
            .expect("valid grid factor");
    }
    Ok(g)
}

/// Grid with `U[-1, 1]` unaries and dense factors that score `U[-10, 10]`
/// on agreeing states and 0 elsewhere.
pub fn gen_potts(spec: &GeneratorSpec) -> Result<FactorGraph, GeneratorError> {
    spec.check(Family::Potts)?;
    let k = spec.num_states;
    let mut rng = Rng::new(spec.seed);
    let mut g = FactorGraph::new();
    for _ in 0..spec.rows * spec.cols {
        let unary = (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect();
        g.add_variable(unary).expect("finite unary");
    }
    for (a, b) in grid_edges(spec.rows, spec.cols) {
        let mut table = vec![0.0; k * k];
        for s in 0..k {
            table[s * k + s] = rng.uniform(-10.0, 10.0);
        }
        g.add_factor(Factor::new(vec![a, b], Potential::Dense(table)))
            .expect("valid grid factor");
    }
    Ok(g)
}

pub fn generate(spec: &GeneratorSpec) -> Result<FactorGraph, GeneratorError> {
    match spec.family {
        Family::Ising => gen_ising(spec),
        Family::Potts => gen_potts(spec),
    }
}

/// Random tree over `n` variables with 2 or 3 states. Variable `i > 0`
/// hangs off a uniformly chosen earlier variable. Binary-binary edges are
/// PAIR or DENSE at random, others DENSE; every score is `U[-1, 1]`.
pub fn gen_random_tree(n: usize, seed: u64) -> FactorGraph {
    let mut rng = Rng::new(seed);
    let mut g = FactorGraph::new();
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        let k = 2 + rng.below(2);
        states.push(k);
        let unary = (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect();
        g.add_variable(unary).expect("finite unary");
    }
    for i in 1..n {
        let parent = rng.below(i);
        let binary = states[i] == 2 && states[parent] == 2;
        let size = states[parent] * states[i];
        let table: Vec<f64> = (0..size).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let potential = if binary && rng.coin() {
            Potential::Pair([table[0], table[1], table[2], table[3]])
        } else {
            Potential::Dense(table)
        };
        g.add_factor(Factor::new(vec![parent, i], potential))
            .expect("valid tree factor");
    }
    g
}

/// Binary cycle of length 4 to 6 with an odd number of repulsive edges, so
/// no assignment satisfies every coupling. An edge with weight `w ~ U[0.5, 1.5]`
/// scores `+w` (attractive) or `-w` (repulsive) when its endpoints agree;
/// unaries are `U[-0.1, 0.1]`.
pub fn gen_frustrated_cycle(seed: u64) -> FactorGraph {
    let mut rng = Rng::new(seed);
    let len = 4 + rng.below(3);
    let repulsive = if len % 2 == 1 { len } else { len - 1 };
    let mut g = FactorGraph::new();
    for _ in 0..len {
        let unary = vec![rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)];
        g.add_variable(unary).expect("finite unary");
    }
    for i in 0..len {
        let w = rng.uniform(0.5, 1.5);
        let s = if i < repulsive { -w } else { w };
        g.add_factor(Factor::new(
            vec![i, (i + 1) % len],
            Potential::Pair([s, 0.0, 0.0, s]),
        ))
        .expect("valid cycle factor");
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ising(rows: usize, cols: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            family: Family::Ising,
            rows,
            cols,
            num_states: 2,
            rho: 1.0,
            seed,
        }
    }

    #[test]
    fn stream_is_pinned() {
        // xoshiro256** seeded by SplitMix64(0)
        let mut rng = Rng::new(0);
        let first: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(
            first,
            vec![0x99ec5f36cb75f2b4, 0xbf6e1f784956452a, 0x1a5f849d4933e6e0]
        );
        let mut rng = Rng::new(0);
        assert_eq!(
            rng.unit(),
            (0x99ec5f36cb75f2b4u64 >> 11) as f64 / (1u64 << 53) as f64
        );
    }

    #[test]
    fn ising_shape() {
        let g = gen_ising(&ising(3, 3, 1)).unwrap();
        assert_eq!(g.num_variables(), 9);
        assert_eq!(g.num_factors(), 12);
        assert_eq!(g.factor(0).vars(), &[0, 1]);
        assert_eq!(g.factor(1).vars(), &[0, 3]);
        for v in g.variables() {
            assert_eq!(v.unary()[0], 0.0);
        }
    }

    #[test]
    fn ising_is_deterministic() {
        let a = gen_ising(&ising(4, 4, 7)).unwrap().to_text();
        let b = gen_ising(&ising(4, 4, 7)).unwrap().to_text();
        assert_eq!(a, b);
        assert_ne!(a, gen_ising(&ising(4, 4, 8)).unwrap().to_text());
    }

    #[test]
    fn ising_ranges() {
        let spec = GeneratorSpec {
            rho: 0.5,
            ..ising(20, 25, 3)
        };
        let g = gen_ising(&spec).unwrap();
        for v in g.variables() {
            assert!((-1.0..1.0).contains(&v.unary()[1]));
        }
        for f in g.factors() {
            let Potential::Pair(t) = f.potential() else {
                panic!()
            };
            assert_eq!(&t[..3], &[0.0; 3]);
            assert!((-0.5..0.5).contains(&t[3]));
        }
    }

    #[test]
    fn potts_shape() {
        let spec = GeneratorSpec {
            family: Family::Potts,
            rows: 2,
            cols: 2,
            num_states: 3,
            rho: 1.0,
            seed: 5,
        };
        let g = gen_potts(&spec).unwrap();
        assert_eq!(g.num_variables(), 4);
        assert_eq!(g.num_factors(), 4);
        for f in g.factors() {
            let Potential::Dense(t) = f.potential() else {
                panic!()
            };
            assert_eq!(t.len(), 9);
            for (idx, &x) in t.iter().enumerate() {
                if idx / 3 == idx % 3 {
                    assert!((-10.0..10.0).contains(&x));
                } else {
                    assert_eq!(x, 0.0);
                }
            }
        }
        assert_eq!(gen_potts(&spec).unwrap(), g);
        assert!(gen_potts(&GeneratorSpec {
            num_states: 1,
            ..spec
        })
        .is_err());
    }

    #[test]
    fn trees_and_cycles() {
        for seed in 0..20 {
            let t = gen_random_tree(10, seed);
            assert_eq!(t.num_variables(), 10);
            assert_eq!(t.num_factors(), 9);
            let c = gen_frustrated_cycle(seed);
            let n = c.num_variables();
            assert!((4..=6).contains(&n));
            let repulsive = c
                .factors()
                .iter()
                .filter(|f| matches!(f.potential(), Potential::Pair(t) if t[0] < 0.0))
                .count();
            assert_eq!(repulsive % 2, 1);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(gen_ising(&GeneratorSpec {
            rows: 0,
            ..ising(1, 1, 0)
        })
        .is_err());
        assert!(gen_ising(&GeneratorSpec {
            rho: 0.0,
            ..ising(1, 1, 0)
        })
        .is_err());
        assert!(gen_potts(&ising(2, 2, 0)).is_err());
    }
}

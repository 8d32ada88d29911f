//! Fixed instances shared by the benchmarks.

use ad3_core::generators::{gen_ising, gen_potts, Family, GeneratorSpec};
use ad3_core::graph::FactorGraph;

pub fn ising_grid(side: usize, rho: f64, seed: u64) -> FactorGraph {
    gen_ising(&GeneratorSpec {
        family: Family::Ising,
        rows: side,
        cols: side,
        num_states: 2,
        rho,
        seed,
    })
    .expect("valid spec")
}

pub fn potts_grid(side: usize, states: usize, seed: u64) -> FactorGraph {
    gen_potts(&GeneratorSpec {
        family: Family::Potts,
        rows: side,
        cols: side,
        num_states: states,
        rho: 1.0,
        seed,
    })
    .expect("valid spec")
}

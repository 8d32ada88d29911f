pub mod activeset;
pub mod generators;
pub mod graph;
pub mod linalg;
pub mod logic;
pub mod pairwise;
pub mod solvers;

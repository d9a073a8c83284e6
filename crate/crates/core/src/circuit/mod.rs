//! Polynomial normal form and the summer-free circuit graph built from it.

mod graph;
mod poly;

pub use graph::{
    build_circuit, build_circuit_with_max_degree, detect_algebraic_loops, CircuitGraph,
    DegreeError, Edge, GraphError, LoopError, Node, NodeId, NodeKind, Port, Tap,
    DEFAULT_MAX_DEGREE,
};
pub use poly::{expand_terms, normalize, Monomial, PolySystem, Term};

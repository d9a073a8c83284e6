use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::poly::{Monomial, PolySystem};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Integrator { initial: f64 },
    Multiplier,
    ConstOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    IntegratorIn,
    MulA,
    MulB,
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Port::IntegratorIn => "in",
            Port::MulA => "a",
            Port::MulB => "b",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub dst_port: Port,
    pub weight: f64,
}

/// Binds a program-level signal name to the node producing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tap {
    pub name: String,
    pub node: NodeId,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node {0} is listed out of order")]
    BadNodeId(usize),
    #[error("edge {index} references missing node {node}")]
    DanglingEdge { index: usize, node: NodeId },
    #[error("edge {index} targets port `{port}` of node {node}, which has no such port")]
    PortMismatch { index: usize, node: NodeId, port: Port },
    #[error("edge {index} has non-finite weight")]
    NonFiniteWeight { index: usize },
    #[error("multiplier {0} lacks an input on port a or b")]
    UnfedMultiplier(NodeId),
    #[error("tap `{name}` references missing node {node}")]
    DanglingTap { name: String, node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("monomial `{monomial}` has degree {degree}, above the limit of {max}")]
pub struct DegreeError {
    pub monomial: String,
    pub degree: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("algebraic loop through nodes {cycle:?}")]
pub struct LoopError {
    pub cycle: Vec<NodeId>,
}

/// Directed graph of integrators, multipliers and an optional constant
/// source. Every edge carries one weight; sums happen implicitly where
/// several edges meet the same port.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    taps: Vec<Tap>,
}

impl CircuitGraph {
    /// Assembles a graph from parts, checking that ids are dense, every edge
    /// lands on a port its node has, and every multiplier is fed on both
    /// ports. Algebraic loops are not checked here; see
    /// [`detect_algebraic_loops`].
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>, taps: Vec<Tap>) -> Result<Self, GraphError> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(GraphError::BadNodeId(n.id));
            }
        }
        let mut fed = vec![(false, false); nodes.len()];
        for (index, e) in edges.iter().enumerate() {
            for node in [e.src, e.dst] {
                if node >= nodes.len() {
                    return Err(GraphError::DanglingEdge { index, node });
                }
            }
            if !e.weight.is_finite() {
                return Err(GraphError::NonFiniteWeight { index });
            }
            let ok = match (nodes[e.dst].kind, e.dst_port) {
                (NodeKind::Integrator { .. }, Port::IntegratorIn) => true,
                (NodeKind::Multiplier, Port::MulA) => {
                    fed[e.dst].0 = true;
                    true
                }
                (NodeKind::Multiplier, Port::MulB) => {
                    fed[e.dst].1 = true;
                    true
                }
                _ => false,
            };
            if !ok {
                return Err(GraphError::PortMismatch {
                    index,
                    node: e.dst,
                    port: e.dst_port,
                });
            }
        }
        for n in &nodes {
            if n.kind == NodeKind::Multiplier && fed[n.id] != (true, true) {
                return Err(GraphError::UnfedMultiplier(n.id));
            }
        }
        for t in &taps {
            if t.node >= nodes.len() {
                return Err(GraphError::DanglingTap {
                    name: t.name.clone(),
                    node: t.node,
                });
            }
        }
        Ok(CircuitGraph { nodes, edges, taps })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn count(&self, pred: impl Fn(&NodeKind) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.kind)).count()
    }

    pub fn integrator_count(&self) -> usize {
        self.count(|k| matches!(k, NodeKind::Integrator { .. }))
    }

    pub fn multiplier_count(&self) -> usize {
        self.count(|k| matches!(k, NodeKind::Multiplier))
    }

    pub fn has_const(&self) -> bool {
        self.count(|k| matches!(k, NodeKind::ConstOne)) > 0
    }
}

/// Text dump: one `NODE` line per node, then one `EDGE` line per edge.
impl fmt::Display for CircuitGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.nodes {
            match n.kind {
                NodeKind::Integrator { initial } => {
                    writeln!(f, "NODE {} integrator ic={initial}", n.id)?
                }
                NodeKind::Multiplier => writeln!(f, "NODE {} multiplier", n.id)?,
                NodeKind::ConstOne => writeln!(f, "NODE {} const", n.id)?,
            }
        }
        for e in &self.edges {
            writeln!(f, "EDGE {} -> {}.{} w={}", e.src, e.dst, e.dst_port, e.weight)?;
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_DEGREE: usize = 4;

/// Builds the circuit with the default degree limit.
pub fn build_circuit(system: &PolySystem) -> Result<CircuitGraph, DegreeError> {
    build_circuit_with_max_degree(system, DEFAULT_MAX_DEGREE)
}

/// One integrator per state, one multiplier per distinct product prefix of
/// length at least two, and a constant source only when some term has
/// degree zero.
///
/// Node ids are integrators in state order, then multipliers in canonical
/// monomial order, then the constant source. Higher-degree products are
/// left-deep chains: `A*B*C` multiplies the `A*B` multiplier by `C`, so
/// chains sharing a prefix share multipliers.
pub fn build_circuit_with_max_degree(
    system: &PolySystem,
    max_degree: usize,
) -> Result<CircuitGraph, DegreeError> {
    let mut products: BTreeMap<Monomial, NodeId> = BTreeMap::new();
    let mut needs_const = false;
    for term in system.rhs.iter().flatten() {
        let m = &term.monomial;
        if m.degree() > max_degree {
            return Err(DegreeError {
                monomial: m.to_string(),
                degree: m.degree(),
                max: max_degree,
            });
        }
        needs_const |= m.degree() == 0;
        for len in 2..=m.degree() {
            products.entry(m.prefix(len)).or_insert(0);
        }
    }

    let n_states = system.states.len();
    let mut nodes: Vec<Node> = system
        .states
        .iter()
        .zip(&system.initial)
        .enumerate()
        .map(|(id, (name, &initial))| Node {
            id,
            kind: NodeKind::Integrator { initial },
            label: name.clone(),
        })
        .collect();
    for (offset, (m, id)) in products.iter_mut().enumerate() {
        *id = n_states + offset;
        nodes.push(Node {
            id: *id,
            kind: NodeKind::Multiplier,
            label: m.to_string(),
        });
    }
    let const_id = needs_const.then(|| {
        let id = nodes.len();
        nodes.push(Node {
            id,
            kind: NodeKind::ConstOne,
            label: "1".to_string(),
        });
        id
    });

    let state_node = |name: &str| system.state_index(name).expect("factor is a state");
    let source_of = |m: &Monomial| -> NodeId {
        match m.degree() {
            0 => const_id.expect("constant source exists"),
            1 => state_node(&m.factors()[0]),
            _ => products[m],
        }
    };

    let mut edges = Vec::new();
    for (m, &id) in &products {
        let last = m.degree() - 1;
        edges.push(Edge {
            src: source_of(&m.prefix(last)),
            dst: id,
            dst_port: Port::MulA,
            weight: 1.0,
        });
        edges.push(Edge {
            src: state_node(&m.factors()[last]),
            dst: id,
            dst_port: Port::MulB,
            weight: 1.0,
        });
    }
    for (dst, terms) in system.rhs.iter().enumerate() {
        for t in terms {
            edges.push(Edge {
                src: source_of(&t.monomial),
                dst,
                dst_port: Port::IntegratorIn,
                weight: t.weight,
            });
        }
    }
    edges.sort_by_key(|e| (e.dst, e.dst_port, e.src));

    let taps = system
        .states
        .iter()
        .enumerate()
        .map(|(node, name)| Tap {
            name: name.clone(),
            node,
        })
        .collect();

    Ok(CircuitGraph::from_parts(nodes, edges, taps).expect("constructed graph is well formed"))
}

/// Checks that every cycle passes through an integrator. Returns one
/// offending cycle otherwise.
pub fn detect_algebraic_loops(graph: &CircuitGraph) -> Result<(), LoopError> {
    let n = graph.nodes().len();
    let is_integrator = |id: NodeId| matches!(graph.nodes()[id].kind, NodeKind::Integrator { .. });
    let mut succ: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for e in graph.edges() {
        if !is_integrator(e.src) && !is_integrator(e.dst) {
            succ[e.src].push(e.dst);
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New || is_integrator(root) {
            continue;
        }
        // iterative DFS; `path` holds the active chain
        let mut path: Vec<(NodeId, usize)> = vec![(root, 0)];
        mark[root] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = path.last_mut() {
            if let Some(&child) = succ[node].get(*next) {
                *next += 1;
                match mark[child] {
                    Mark::New => {
                        mark[child] = Mark::Active;
                        path.push((child, 0));
                    }
                    Mark::Active => {
                        let start = path.iter().position(|&(id, _)| id == child).unwrap();
                        return Err(LoopError {
                            cycle: path[start..].iter().map(|&(id, _)| id).collect(),
                        });
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                path.pop();
            }
        }
    }
    Ok(())
}

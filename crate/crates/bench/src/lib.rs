//! Fixtures shared by the benchmarks.

use morphx_core::physics::{Edge, MorphologyGraph, Node};

/// Four-node walker with two actuated diagonals.
pub fn quad_walker() -> MorphologyGraph {
    let nodes = [(0.0, 0.0), (0.5, 0.0), (0.5, 0.4), (0.0, 0.4)]
        .into_iter()
        .map(|(x, y)| Node { position: [x, y], mass: 1.0 })
        .collect();
    let edge = |a, b, rest: f64, actuated| Edge { a, b, rest_length: rest, stiffness: 400.0, actuated };
    let diag = (0.5f64 * 0.5 + 0.4 * 0.4).sqrt();
    let edges = vec![
        edge(0, 1, 0.5, false),
        edge(1, 2, 0.4, false),
        edge(2, 3, 0.5, false),
        edge(3, 0, 0.4, false),
        edge(0, 2, diag, true),
        edge(1, 3, diag, true),
    ];
    MorphologyGraph::new(nodes, edges)
}

//! Design space: morphology genomes, their random initialization, mutation
//! operators and complexity measure.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::physics::{control_dim, Edge, MorphologyGraph, Node};

pub const MAX_NODES: usize = 24;
pub const MAX_EDGES: usize = 60;
pub const DEFAULT_SIZE_BIAS: f64 = 0.5;

const MASS_RANGE: (f64, f64) = (0.5, 1.5);
const MASS_LIMITS: (f64, f64) = (0.2, 3.0);
const STIFFNESS_RANGE: (f64, f64) = (200.0, 600.0);
const STIFFNESS_LIMITS: (f64, f64) = (100.0, 1000.0);
const REST_LIMITS: (f64, f64) = (0.05, 3.0);
const LIMB_LENGTH: (f64, f64) = (0.25, 0.6);
const MIN_SEPARATION: f64 = 0.15;
/// Extra bracing edges are only drawn between nodes closer than this.
const BRACE_REACH: f64 = 0.8;
const BRACE_PROBABILITY: f64 = 0.5;
const ACTUATION_PROBABILITY: f64 = 0.5;
const STRUCTURAL_SHARE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenomeId(pub u64);

impl fmt::Display for GenomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::str::FromStr for GenomeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        u64::from_str_radix(s, 16).map(GenomeId).map_err(|e| Error::Parse(format!("genome id {s:?}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyGenome {
    pub graph: MorphologyGraph,
    pub genome_id: GenomeId,
    pub parent_id: Option<GenomeId>,
}

impl MorphologyGenome {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.graph.nodes.len() > MAX_NODES {
            return Err(Error::InvalidGenome(format!("{} nodes exceeds {MAX_NODES}", self.graph.nodes.len())));
        }
        if self.graph.edges.len() > MAX_EDGES {
            return Err(Error::InvalidGenome(format!("{} edges exceeds {MAX_EDGES}", self.graph.edges.len())));
        }
        Ok(())
    }

    pub fn control_dim(&self) -> usize {
        control_dim(&self.graph)
    }

    /// Canonical single-line text form with a fixed field order.
    pub fn to_record(&self) -> String {
        let parent = self.parent_id.map_or_else(|| "-".to_string(), |p| p.to_string());
        let nodes: Vec<String> =
            self.graph.nodes.iter().map(|n| format!("{}:{}:{}", n.position[0], n.position[1], n.mass)).collect();
        let edges: Vec<String> = self
            .graph
            .edges
            .iter()
            .map(|e| format!("{}:{}:{}:{}:{}", e.a, e.b, e.rest_length, e.stiffness, u8::from(e.actuated)))
            .collect();
        format!(
            "id={} parent={} gravity={} ground={} nodes={} edges={}",
            self.genome_id,
            parent,
            self.graph.gravity,
            self.graph.ground_y,
            nodes.join(";"),
            edges.join(";")
        )
    }

    pub fn from_record(record: &str) -> Result<Self> {
        let fields = Fields::parse(record, &["id", "parent", "gravity", "ground", "nodes", "edges"])?;
        let genome_id: GenomeId = fields.get("id").parse()?;
        let parent_id = match fields.get("parent") {
            "-" => None,
            p => Some(p.parse()?),
        };
        let nodes = split_list(fields.get("nodes"))
            .map(|item| {
                let v = parse_numbers(item, 3)?;
                Ok(Node { position: [v[0], v[1]], mass: v[2] })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = split_list(fields.get("edges"))
            .map(|item| {
                let v = parse_numbers(item, 5)?;
                let actuated = match v[4] {
                    0.0 => false,
                    1.0 => true,
                    _ => return Err(Error::Parse(format!("actuation flag in {item:?}"))),
                };
                Ok(Edge { a: v[0] as usize, b: v[1] as usize, rest_length: v[2], stiffness: v[3], actuated })
            })
            .collect::<Result<Vec<_>>>()?;
        let graph = MorphologyGraph {
            nodes,
            edges,
            gravity: parse_f64(fields.get("gravity"))?,
            ground_y: parse_f64(fields.get("ground"))?,
        };
        let genome = Self { graph, genome_id, parent_id };
        genome.validate()?;
        Ok(genome)
    }
}

pub fn controller_to_record(params: &ControllerParams) -> String {
    let values: Vec<String> = params.values().iter().map(|v| v.to_string()).collect();
    format!("ctrl={}", values.join(";"))
}

pub fn controller_from_record(record: &str) -> Result<ControllerParams> {
    let body = record
        .strip_prefix("ctrl=")
        .ok_or_else(|| Error::Parse(format!("controller record must start with ctrl=: {record:?}")))?;
    let values = split_list(body).map(parse_f64).collect::<Result<Vec<_>>>()?;
    Ok(ControllerParams::new(values))
}

struct Fields<'a> {
    values: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(record: &'a str, expected: &[&str]) -> Result<Self> {
        let values: Vec<(&str, &str)> = record
            .split_whitespace()
            .map(|tok| tok.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got {tok:?}"))))
            .collect::<Result<_>>()?;
        let keys: Vec<&str> = values.iter().map(|(k, _)| *k).collect();
        if keys != expected {
            return Err(Error::Parse(format!("expected fields {expected:?}, got {keys:?}")));
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> &'a str {
        self.values.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).expect("checked in parse")
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').filter(|item| !item.is_empty())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("number {s:?}: {e}")))
}

fn parse_numbers(item: &str, count: usize) -> Result<Vec<f64>> {
    let v = item.split(':').map(parse_f64).collect::<Result<Vec<_>>>()?;
    if v.len() != count {
        return Err(Error::Parse(format!("expected {count} values in {item:?}")));
    }
    Ok(v)
}

/// Design complexity: the dimensionality of the design's control space.
pub fn complexity(genome: &MorphologyGenome) -> usize {
    genome.control_dim()
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    rng.random_range(range.0..=range.1)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn new_edge<R: Rng + ?Sized>(nodes: &[Node], a: usize, b: usize, rng: &mut R) -> Edge {
    Edge {
        a,
        b,
        rest_length: distance(nodes[a].position, nodes[b].position),
        stiffness: uniform(rng, STIFFNESS_RANGE),
        actuated: rng.random_bool(ACTUATION_PROBABILITY),
    }
}

/// Proposes a position for a limb hanging off `anchor`, or `None` if every
/// attempt lands too close to an existing node.
fn place_limb<R: Rng + ?Sized>(graph: &MorphologyGraph, anchor: usize, rng: &mut R) -> Option<[f64; 2]> {
    let base = graph.nodes[anchor].position;
    for _ in 0..16 {
        let angle = rng.random_range(-PI / 6.0..=7.0 * PI / 6.0);
        let len = uniform(rng, LIMB_LENGTH);
        let p = [base[0] + len * angle.cos(), (base[1] + len * angle.sin()).max(graph.ground_y)];
        if graph.nodes.iter().all(|n| distance(n.position, p) >= MIN_SEPARATION) {
            return Some(p);
        }
    }
    None
}

/// Shifts the body vertically so its lowest node rests on the ground.
fn settle(graph: &mut MorphologyGraph) {
    let lowest = graph.nodes.iter().map(|n| n.position[1]).fold(f64::INFINITY, f64::min);
    let shift = graph.ground_y - lowest;
    for n in &mut graph.nodes {
        n.position[1] += shift;
    }
}

/// Samples a valid genome. Larger `size_bias` yields more nodes on average.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, size_bias: f64) -> MorphologyGenome {
    let bias = size_bias.clamp(0.0, 1.0);
    let max_nodes = (4 + (bias * (MAX_NODES - 4) as f64).round() as usize).min(MAX_NODES);
    let target = rng.random_range(2..=max_nodes);

    let mut graph = MorphologyGraph::new(vec![Node { position: [0.0, 0.0], mass: uniform(rng, MASS_RANGE) }], vec![]);
    let mut failures = 0;
    while graph.nodes.len() < target && failures < 64 {
        let anchor = rng.random_range(0..graph.nodes.len());
        let Some(position) = place_limb(&graph, anchor, rng) else {
            failures += 1;
            continue;
        };
        graph.nodes.push(Node { position, mass: uniform(rng, MASS_RANGE) });
        let new = graph.nodes.len() - 1;
        let limb = new_edge(&graph.nodes, anchor, new, rng);
        graph.edges.push(limb);
        for other in 0..new {
            if graph.edges.len() >= MAX_EDGES {
                break;
            }
            if other != anchor
                && distance(graph.nodes[other].position, position) <= BRACE_REACH
                && rng.random_bool(BRACE_PROBABILITY)
            {
                let brace = new_edge(&graph.nodes, other, new, rng);
                graph.edges.push(brace);
            }
        }
        if graph.edges.len() >= MAX_EDGES {
            break;
        }
    }
    settle(&mut graph);
    MorphologyGenome { graph, genome_id: GenomeId(rng.random()), parent_id: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationOp {
    AddNode,
    RemoveLeaf,
    AddEdge,
    RemoveEdge,
    ToggleActuation,
    Perturb,
}

impl MutationOp {
    pub const STRUCTURAL: [MutationOp; 5] = [
        MutationOp::AddNode,
        MutationOp::RemoveLeaf,
        MutationOp::AddEdge,
        MutationOp::RemoveEdge,
        MutationOp::ToggleActuation,
    ];

    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(STRUCTURAL_SHARE) {
            Self::STRUCTURAL[rng.random_range(0..Self::STRUCTURAL.len())]
        } else {
            MutationOp::Perturb
        }
    }
}

/// Returns a mutated copy produced by exactly one operator. Inapplicable
/// operators are redrawn; perturbation always applies.
pub fn mutate<R: Rng + ?Sized>(genome: &MorphologyGenome, rng: &mut R) -> MorphologyGenome {
    loop {
        let op = MutationOp::draw(rng);
        if let Some(child) = apply_mutation(genome, op, rng) {
            return child;
        }
    }
}

/// Applies `op`, or returns `None` if it cannot apply to this genome.
pub fn apply_mutation<R: Rng + ?Sized>(
    genome: &MorphologyGenome,
    op: MutationOp,
    rng: &mut R,
) -> Option<MorphologyGenome> {
    let mut graph = genome.graph.clone();
    let n = graph.nodes.len();
    match op {
        MutationOp::AddNode => {
            if n >= MAX_NODES || graph.edges.len() >= MAX_EDGES {
                return None;
            }
            let anchor = rng.random_range(0..n);
            let position = place_limb(&graph, anchor, rng)?;
            graph.nodes.push(Node { position, mass: uniform(rng, MASS_RANGE) });
            let edge = new_edge(&graph.nodes, anchor, n, rng);
            graph.edges.push(edge);
            settle(&mut graph);
        }
        MutationOp::RemoveLeaf => {
            if n < 2 {
                return None;
            }
            let leaves: Vec<usize> = (0..n).filter(|&i| graph.degree(i) == 1).collect();
            if leaves.is_empty() {
                return None;
            }
            let leaf = leaves[rng.random_range(0..leaves.len())];
            graph.nodes.remove(leaf);
            graph.edges.retain(|e| e.a != leaf && e.b != leaf);
            for e in &mut graph.edges {
                if e.a > leaf {
                    e.a -= 1;
                }
                if e.b > leaf {
                    e.b -= 1;
                }
            }
            settle(&mut graph);
        }
        MutationOp::AddEdge => {
            if graph.edges.len() >= MAX_EDGES {
                return None;
            }
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|&(a, b)| !graph.has_edge(a, b)).collect();
            if pairs.is_empty() {
                return None;
            }
            let (a, b) = pairs[rng.random_range(0..pairs.len())];
            let edge = new_edge(&graph.nodes, a, b, rng);
            graph.edges.push(edge);
        }
        MutationOp::RemoveEdge => {
            let removable: Vec<usize> =
                (0..graph.edges.len()).filter(|&i| graph.is_connected_without(Some(i))).collect();
            if removable.is_empty() {
                return None;
            }
            graph.edges.remove(removable[rng.random_range(0..removable.len())]);
        }
        MutationOp::ToggleActuation => {
            if graph.edges.is_empty() {
                return None;
            }
            let i = rng.random_range(0..graph.edges.len());
            graph.edges[i].actuated = !graph.edges[i].actuated;
        }
        MutationOp::Perturb => {
            let factor = |rng: &mut R, scale: f64| (scale * rng.sample::<f64, _>(StandardNormal)).exp();
            let target = if graph.edges.is_empty() { 2 } else { rng.random_range(0..3) };
            match target {
                0 => {
                    let i = rng.random_range(0..graph.edges.len());
                    let e = &mut graph.edges[i];
                    e.rest_length = (e.rest_length * factor(rng, 0.1)).clamp(REST_LIMITS.0, REST_LIMITS.1);
                }
                1 => {
                    let i = rng.random_range(0..graph.edges.len());
                    let e = &mut graph.edges[i];
                    e.stiffness = (e.stiffness * factor(rng, 0.2)).clamp(STIFFNESS_LIMITS.0, STIFFNESS_LIMITS.1);
                }
                _ => {
                    let i = rng.random_range(0..n);
                    let node = &mut graph.nodes[i];
                    node.mass = (node.mass * factor(rng, 0.1)).clamp(MASS_LIMITS.0, MASS_LIMITS.1);
                }
            }
        }
    }
    let child = MorphologyGenome { graph, genome_id: GenomeId(rng.random()), parent_id: Some(genome.genome_id) };
    debug_assert!(child.validate().is_ok(), "{op:?} produced an invalid genome");
    Some(child)
}

//! Deterministic 2D mass-spring locomotion simulator.
//!
//! A robot is a graph of point masses joined by damped springs. Actuated
//! springs oscillate their rest length with an open-loop sinusoid. Each step
//! runs one position-Verlet update followed by a single ground projection
//! pass with Coulomb friction. The objective of an episode is the net
//! rightward displacement of the center of mass.

use std::f64::consts::PI;

use crate::controller::ControllerParams;
use crate::error::{Error, Result};

/// Fixed integration step in seconds.
pub const DEFAULT_DT: f64 = 0.01;
/// Amplitude, phase and offset for every actuated edge.
pub const PARAMS_PER_ACTUATOR: usize = 3;
/// Shared oscillation frequency of all actuators, in Hz.
pub const OSCILLATION_HZ: f64 = 1.0;
pub const MAX_AMPLITUDE: f64 = 0.4;
pub const MAX_OFFSET: f64 = 0.2;
/// Coulomb friction coefficient between nodes and the ground.
pub const FRICTION: f64 = 0.8;
/// Any coordinate beyond this magnitude (in meters) counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Fraction of critical damping applied along every spring.
const SPRING_DAMPING_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub position: [f64; 2],
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
    pub stiffness: f64,
    pub actuated: bool,
}

impl Edge {
    pub fn connects(&self, u: usize, v: usize) -> bool {
        (self.a == u && self.b == v) || (self.a == v && self.b == u)
    }
}

/// Point masses and springs, plus the world they live in.
///
/// `gravity` is the magnitude of the downward acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub gravity: f64,
    pub ground_y: f64,
}

impl MorphologyGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        Self { nodes, edges, gravity: STANDARD_GRAVITY, ground_y: 0.0 }
    }

    pub fn actuated_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.actuated).count()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.a == node || e.b == node).count()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.iter().any(|e| e.connects(u, v))
    }

    /// Connectivity over the edges, optionally ignoring one of them.
    pub fn is_connected_without(&self, skip_edge: Option<usize>) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for (i, e) in self.edges.iter().enumerate() {
                if Some(i) == skip_edge {
                    continue;
                }
                let v = if e.a == u {
                    e.b
                } else if e.b == u {
                    e.a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_without(None)
    }

    /// Checks the structural invariants shared by every simulated body.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGenome(msg));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0 && self.ground_y.is_finite()) {
            return bad("non-finite world parameters".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let [x, y] = node.position;
            if !(x.is_finite() && y.is_finite()) {
                return bad(format!("node {i} has a non-finite position"));
            }
            if !(node.mass > 0.0 && node.mass.is_finite()) {
                return bad(format!("node {i} has non-positive mass"));
            }
            if y < self.ground_y {
                return bad(format!("node {i} starts below the ground"));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.a >= self.nodes.len() || e.b >= self.nodes.len() {
                return bad(format!("edge {i} references a missing node"));
            }
            if e.a == e.b {
                return bad(format!("edge {i} is a self-edge"));
            }
            if !(e.rest_length > 0.0 && e.rest_length.is_finite()) {
                return bad(format!("edge {i} has non-positive rest length"));
            }
            if !(e.stiffness > 0.0 && e.stiffness.is_finite()) {
                return bad(format!("edge {i} has non-positive stiffness"));
            }
            if self.edges[..i].iter().any(|f| f.connects(e.a, e.b)) {
                return bad(format!("edge {i} duplicates an earlier edge"));
            }
        }
        if !self.is_connected() {
            return bad("graph is not connected".into());
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.nodes.iter().map(|n| n.mass).sum()
    }
}

/// Number of controller parameters a design needs.
pub fn control_dim(graph: &MorphologyGraph) -> usize {
    graph.actuated_edges() * PARAMS_PER_ACTUATOR
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<[f64; 2]>,
    pub previous: Vec<[f64; 2]>,
    pub elapsed_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    /// Final minus initial center-of-mass x, or `-inf` when diverged.
    pub objective: f64,
    pub steps_consumed: u64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Oscillator {
    amplitude: f64,
    phase: f64,
    offset: f64,
}

/// Stepping simulator for one (design, controller) pair.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    graph: &'a MorphologyGraph,
    drive: Vec<Option<Oscillator>>,
    damping: Vec<f64>,
    state: SimState,
    forces: Vec<[f64; 2]>,
    dt: f64,
    diverged: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(graph: &'a MorphologyGraph, controller: &ControllerParams, dt: f64) -> Result<Self> {
        let expected = control_dim(graph);
        if controller.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: controller.len() });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
        }
        let mut params = controller.values().chunks_exact(PARAMS_PER_ACTUATOR);
        let drive = graph
            .edges
            .iter()
            .map(|e| {
                if !e.actuated {
                    return None;
                }
                let p = params.next().expect("length checked above");
                Some(Oscillator {
                    amplitude: p[0].clamp(-MAX_AMPLITUDE, MAX_AMPLITUDE),
                    phase: p[1],
                    offset: p[2].clamp(-MAX_OFFSET, MAX_OFFSET),
                })
            })
            .collect();
        let damping = graph
            .edges
            .iter()
            .map(|e| {
                let ma = graph.nodes[e.a].mass;
                let mb = graph.nodes[e.b].mass;
                let reduced = ma * mb / (ma + mb);
                SPRING_DAMPING_RATIO * 2.0 * (e.stiffness * reduced).sqrt()
            })
            .collect();
        let positions: Vec<[f64; 2]> = graph.nodes.iter().map(|n| n.position).collect();
        Ok(Self {
            graph,
            drive,
            damping,
            state: SimState { previous: positions.clone(), positions, elapsed_steps: 0 },
            forces: vec![[0.0; 2]; graph.nodes.len()],
            dt,
            diverged: false,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn com_x(&self) -> f64 {
        let total = self.graph.total_mass();
        self.graph.nodes.iter().zip(&self.state.positions).map(|(n, p)| n.mass * p[0]).sum::<f64>() / total
    }

    fn target_length(&self, edge: usize, t: f64) -> f64 {
        let e = &self.graph.edges[edge];
        match self.drive[edge] {
            None => e.rest_length,
            Some(osc) => {
                let wave = (2.0 * PI * OSCILLATION_HZ * t + osc.phase).sin();
                e.rest_length * (1.0 + osc.amplitude * wave + osc.offset)
            }
        }
    }

    /// Advances one step. Returns `false` once the state has diverged.
    pub fn step(&mut self) -> bool {
        if self.diverged {
            return false;
        }
        let g = self.graph;
        let dt = self.dt;
        let t = self.state.elapsed_steps as f64 * dt;

        for (f, n) in self.forces.iter_mut().zip(&g.nodes) {
            *f = [0.0, -n.mass * g.gravity];
        }
        for (i, e) in g.edges.iter().enumerate() {
            let pa = self.state.positions[e.a];
            let pb = self.state.positions[e.b];
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len <= f64::EPSILON {
                continue;
            }
            let dir = [d[0] / len, d[1] / len];
            let va = velocity(&self.state, e.a, dt);
            let vb = velocity(&self.state, e.b, dt);
            let closing = (vb[0] - va[0]) * dir[0] + (vb[1] - va[1]) * dir[1];
            let magnitude = e.stiffness * (len - self.target_length(i, t)) + self.damping[i] * closing;
            let fx = magnitude * dir[0];
            let fy = magnitude * dir[1];
            self.forces[e.a][0] += fx;
            self.forces[e.a][1] += fy;
            self.forces[e.b][0] -= fx;
            self.forces[e.b][1] -= fy;
        }

        let dt2 = dt * dt;
        let mut ok = true;
        for (i, n) in g.nodes.iter().enumerate() {
            let cur = self.state.positions[i];
            let prev = self.state.previous[i];
            let f = self.forces[i];
            let mut next =
                [cur[0] + (cur[0] - prev[0]) + f[0] / n.mass * dt2, cur[1] + (cur[1] - prev[1]) + f[1] / n.mass * dt2];
            let depth = g.ground_y - next[1];
            if depth > 0.0 {
                next[1] = g.ground_y;
                let slide = next[0] - cur[0];
                let grip = FRICTION * depth;
                next[0] = if slide.abs() <= grip { cur[0] } else { next[0] - grip.copysign(slide) };
            }
            ok &= next.iter().all(|c| c.is_finite() && c.abs() <= DIVERGENCE_LIMIT);
            self.state.previous[i] = cur;
            self.state.positions[i] = next;
        }
        self.state.elapsed_steps += 1;
        self.diverged = !ok;
        ok
    }

    /// Kinetic, gravitational and elastic energy relative to the ground.
    pub fn mechanical_energy(&self) -> f64 {
        let g = self.graph;
        let t = self.state.elapsed_steps as f64 * self.dt;
        let mut energy = 0.0;
        for (i, n) in g.nodes.iter().enumerate() {
            let v = velocity(&self.state, i, self.dt);
            energy += 0.5 * n.mass * (v[0] * v[0] + v[1] * v[1]);
            energy += n.mass * g.gravity * (self.state.positions[i][1] - g.ground_y);
        }
        for (i, e) in g.edges.iter().enumerate() {
            let pa = self.state.positions[e.a];
            let pb = self.state.positions[e.b];
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let stretch = len - self.target_length(i, t);
            energy += 0.5 * e.stiffness * stretch * stretch;
        }
        energy
    }
}

fn velocity(state: &SimState, node: usize, dt: f64) -> [f64; 2] {
    let cur = state.positions[node];
    let prev = state.previous[node];
    [(cur[0] - prev[0]) / dt, (cur[1] - prev[1]) / dt]
}

/// Runs one episode and scores it by net center-of-mass displacement.
pub fn simulate_episode(
    graph: &MorphologyGraph,
    controller: &ControllerParams,
    episode_steps: u64,
    dt: f64,
) -> Result<EpisodeResult> {
    let mut sim = Simulator::new(graph, controller, dt)?;
    let start = sim.com_x();
    for _ in 0..episode_steps {
        if !sim.step() {
            return Ok(EpisodeResult {
                objective: f64::NEG_INFINITY,
                steps_consumed: sim.state().elapsed_steps,
                diverged: true,
            });
        }
    }
    Ok(EpisodeResult { objective: sim.com_x() - start, steps_consumed: episode_steps, diverged: false })
}

/// Anything that can score a (design, controller) pair over an episode.
pub trait Environment: Sync {
    fn episode(
        &self,
        graph: &MorphologyGraph,
        controller: &ControllerParams,
        episode_steps: u64,
    ) -> Result<EpisodeResult>;
}

/// The built-in flat-ground locomotion task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskEnvironment {
    pub dt: f64,
}

impl Default for DeskEnvironment {
    fn default() -> Self {
        Self { dt: DEFAULT_DT }
    }
}

impl Environment for DeskEnvironment {
    fn episode(
        &self,
        graph: &MorphologyGraph,
        controller: &ControllerParams,
        episode_steps: u64,
    ) -> Result<EpisodeResult> {
        simulate_episode(graph, controller, episode_steps, self.dt)
    }
}

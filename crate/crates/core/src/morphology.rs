//! Agent morphology graphs.
//!
//! A [`MorphologyGraph`] is the topology the message-passing policy runs
//! over. Nodes are typed (one root, any number of joints), edges are directed
//! and always come in both directions, and `joint_order` fixes how per-joint
//! outputs map onto the environment's action vector.
//!
//! Flat environment observations are split into fixed-width per-node input
//! labels by [`factor_observation`]; per-node outputs go back into a flat
//! action vector through [`assemble_action`].

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chainsim::Observation;
use crate::error::{Error, Result};

/// Width of the observation slots in every node label.
pub const SLOT_WIDTH: usize = 6;
/// Full per-node feature width: slots plus the node-type one-hot.
pub const FEATURE_WIDTH: usize = SLOT_WIDTH + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Root,
    Joint,
}

impl NodeType {
    fn one_hot(self) -> [f64; 2] {
        match self {
            NodeType::Root => [1.0, 0.0],
            NodeType::Joint => [0.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(rename = "type")]
    pub kind: NodeType,
}

/// Serialised form of a graph; validated on the way back in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<Node>,
    pub edges: Vec<(NodeId, NodeId)>,
    pub joint_order: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct MorphologyGraph {
    spec: GraphSpec,
    root: usize,
    /// (sender, receiver) as positions into `spec.nodes`.
    edge_index: Vec<(usize, usize)>,
    /// Position of the k-th entry of `joint_order`.
    joint_index: Vec<usize>,
}

impl MorphologyGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<(NodeId, NodeId)>, joint_order: Vec<NodeId>) -> Result<Self> {
        Self::try_from(GraphSpec {
            nodes,
            edges,
            joint_order,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.spec.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.spec.edges
    }

    pub fn joint_order(&self) -> &[NodeId] {
        &self.spec.joint_order
    }

    pub fn num_nodes(&self) -> usize {
        self.spec.nodes.len()
    }

    pub fn num_joints(&self) -> usize {
        self.spec.joint_order.len()
    }

    pub fn root_position(&self) -> usize {
        self.root
    }

    /// Edges as (sender, receiver) positions into [`nodes`](Self::nodes).
    pub fn edge_positions(&self) -> &[(usize, usize)] {
        &self.edge_index
    }

    /// Node positions in action order.
    pub fn joint_positions(&self) -> &[usize] {
        &self.joint_index
    }

    /// Senders `u` with `(u, v)` in the edge set.
    pub fn neighbourhood(&self, v: NodeId) -> Vec<NodeId> {
        self.spec
            .edges
            .iter()
            .filter(|(_, r)| *r == v)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }
}

impl TryFrom<GraphSpec> for MorphologyGraph {
    type Error = Error;

    fn try_from(spec: GraphSpec) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidMorphology(msg));

        let mut position = HashMap::with_capacity(spec.nodes.len());
        for (i, node) in spec.nodes.iter().enumerate() {
            if position.insert(node.id, i).is_some() {
                return invalid(format!("duplicate node id {}", node.id));
            }
        }
        let roots: Vec<usize> = spec
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeType::Root)
            .map(|(i, _)| i)
            .collect();
        if roots.len() != 1 {
            return invalid(format!("expected exactly one root node, found {}", roots.len()));
        }

        let mut edge_index = Vec::with_capacity(spec.edges.len());
        for &(s, r) in &spec.edges {
            match (position.get(&s), position.get(&r)) {
                (Some(&si), Some(&ri)) => edge_index.push((si, ri)),
                _ => return invalid(format!("edge ({s}, {r}) references an unknown node")),
            }
        }
        for &(s, r) in &spec.edges {
            if !spec.edges.contains(&(r, s)) {
                return invalid(format!("edge ({s}, {r}) has no reverse"));
            }
        }

        let joints = spec.nodes.iter().filter(|n| n.kind == NodeType::Joint).count();
        if spec.joint_order.len() != joints {
            return invalid(format!(
                "joint_order lists {} nodes but the graph has {joints} joints",
                spec.joint_order.len()
            ));
        }
        let mut joint_index = Vec::with_capacity(joints);
        let mut seen = vec![false; spec.nodes.len()];
        for id in &spec.joint_order {
            let Some(&i) = position.get(id) else {
                return invalid(format!("joint_order names unknown node {id}"));
            };
            if spec.nodes[i].kind != NodeType::Joint || seen[i] {
                return invalid(format!("joint_order is not a permutation of the joints (at {id})"));
            }
            seen[i] = true;
            joint_index.push(i);
        }

        let mut reached = vec![false; spec.nodes.len()];
        let mut queue = VecDeque::from([roots[0]]);
        reached[roots[0]] = true;
        while let Some(v) = queue.pop_front() {
            for &(s, r) in &edge_index {
                if s == v && !reached[r] {
                    reached[r] = true;
                    queue.push_back(r);
                }
            }
        }
        if reached.iter().any(|r| !r) {
            return invalid("graph is not connected".into());
        }

        Ok(Self {
            root: roots[0],
            spec,
            edge_index,
            joint_index,
        })
    }
}

impl From<MorphologyGraph> for GraphSpec {
    fn from(graph: MorphologyGraph) -> Self {
        graph.spec
    }
}

/// Chain of `n_links` bodies: one root followed by `n_links - 1` hinge joints.
///
/// Node ids are 0 for the root and `i` for joint `J_i`.
pub fn build_chain_graph(n_links: usize) -> Result<MorphologyGraph> {
    if n_links == 0 {
        return Err(Error::InvalidMorphology("a chain needs at least one link".into()));
    }
    let mut nodes = vec![Node {
        id: NodeId(0),
        kind: NodeType::Root,
    }];
    let mut edges = Vec::with_capacity(2 * (n_links - 1));
    for i in 1..n_links as u32 {
        nodes.push(Node {
            id: NodeId(i),
            kind: NodeType::Joint,
        });
        edges.push((NodeId(i - 1), NodeId(i)));
        edges.push((NodeId(i), NodeId(i - 1)));
    }
    let joint_order = (1..n_links as u32).map(NodeId).collect();
    MorphologyGraph::new(nodes, edges, joint_order)
}

/// Per-node input labels, rows in the graph's node order.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures {
    rows: Vec<[f64; FEATURE_WIDTH]>,
}

impl NodeFeatures {
    pub fn rows(&self) -> &[[f64; FEATURE_WIDTH]] {
        &self.rows
    }

    pub fn row(&self, position: usize) -> &[f64; FEATURE_WIDTH] {
        &self.rows[position]
    }

    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    /// Appends the rows in node order onto a row-major buffer.
    pub fn extend_into(&self, out: &mut Vec<f64>) {
        for row in &self.rows {
            out.extend_from_slice(row);
        }
    }
}

/// Splits a flat observation into per-node labels.
///
/// Joint slots hold (angle, angular velocity). The root holds
/// (forward velocity, mean angle, mean angular velocity, 1.0).
pub fn factor_observation(graph: &MorphologyGraph, obs: &Observation) -> Result<NodeFeatures> {
    let n = graph.num_joints();
    if obs.joint_angles.len() != n || obs.joint_velocities.len() != n {
        let actual = if obs.joint_angles.len() != n {
            obs.joint_angles.len()
        } else {
            obs.joint_velocities.len()
        };
        return Err(Error::Factoring { expected: n, actual });
    }

    let mut rows = vec![[0.0; FEATURE_WIDTH]; graph.num_nodes()];
    for (k, &pos) in graph.joint_positions().iter().enumerate() {
        rows[pos][0] = obs.joint_angles[k];
        rows[pos][1] = obs.joint_velocities[k];
    }
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let root = &mut rows[graph.root_position()];
    root[0] = obs.forward_velocity;
    root[1] = mean(&obs.joint_angles);
    root[2] = mean(&obs.joint_velocities);
    root[3] = 1.0;

    for (row, node) in rows.iter_mut().zip(graph.nodes()) {
        row[SLOT_WIDTH..].copy_from_slice(&node.kind.one_hot());
    }
    Ok(NodeFeatures { rows })
}

/// Orders per-joint outputs by `joint_order`. Outputs for non-joint nodes are ignored.
pub fn assemble_action(graph: &MorphologyGraph, node_outputs: &BTreeMap<NodeId, f64>) -> Result<Vec<f64>> {
    graph
        .joint_order()
        .iter()
        .map(|id| node_outputs.get(id).copied().ok_or(Error::Assembly(id.0)))
        .collect()
}

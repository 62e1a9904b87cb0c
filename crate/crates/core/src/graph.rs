//! Kinematic tree over keypoint types.
//!
//! Directed edge `d` owns mid-range offset channels `2d` (dx) and `2d + 1`
//! (dy). Undirected edge `i` in a graph file becomes directed edges `2i`
//! (as written) and `2i + 1` (reversed).

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// COCO keypoint names in channel order.
pub const COCO_KEYPOINTS: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

const COCO_TREE: [(usize, usize); 16] = [
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (0, 5),
    (0, 6),
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (5, 11),
    (6, 12),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
];

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicGraph {
    names: Vec<String>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl KinematicGraph {
    /// Builds a graph from undirected tree edges over named keypoints.
    pub fn from_tree(names: Vec<String>, tree: &[(usize, usize)]) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::usage("graph needs at least one keypoint"));
        }
        if tree.len() != k - 1 {
            return Err(Error::usage(format!(
                "a tree over {k} keypoints needs {} edges, got {}",
                k - 1,
                tree.len()
            )));
        }
        let mut edges = Vec::with_capacity(2 * tree.len());
        for &(a, b) in tree {
            if a >= k || b >= k || a == b {
                return Err(Error::usage(format!("invalid edge ({a}, {b})")));
            }
            edges.push((a, b));
            edges.push((b, a));
        }
        let mut adjacency = vec![Vec::new(); k];
        for (d, &(a, b)) in edges.iter().enumerate() {
            adjacency[a].push((b, d));
        }
        let graph = Self {
            names,
            edges,
            adjacency,
        };
        // k-1 edges plus connectivity means acyclic
        if graph.bfs_from(0).len() != k - 1 {
            return Err(Error::usage("kinematic graph is not connected"));
        }
        Ok(graph)
    }

    /// Parses a graph file: one undirected edge per line as two keypoint
    /// names, `#` starts a comment. Keypoint order is taken from
    /// `names`.
    pub fn parse(text: &str, names: &[&str]) -> Result<Self> {
        let lookup = |name: &str, line: usize| {
            names
                .iter()
                .position(|n| *n == name)
                .or_else(|| name.parse::<usize>().ok().filter(|&i| i < names.len()))
                .ok_or_else(|| Error::parse(format!("line {line}"), format!("unknown keypoint `{name}`")))
        };
        let mut tree = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::parse(
                    format!("line {}", i + 1),
                    "expected two keypoint names",
                ));
            }
            tree.push((lookup(parts[0], i + 1)?, lookup(parts[1], i + 1)?));
        }
        Self::from_tree(names.iter().map(|s| s.to_string()).collect(), &tree)
    }

    pub fn load(path: impl AsRef<Path>, names: &[&str]) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, names)
    }

    pub fn num_keypoints(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Directed edges; the index is the mid-offset channel pair.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbour, directed edge)` pairs leaving `node`.
    pub fn neighbours(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Directed edges `(edge, from, to)` in breadth-first order from `root`,
    /// each reaching a node for the first time.
    pub fn bfs_from(&self, root: usize) -> Vec<(usize, usize, usize)> {
        let k = self.num_keypoints();
        let mut seen = vec![false; k];
        let mut order = Vec::with_capacity(k.saturating_sub(1));
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(node) = queue.pop_front() {
            for &(next, edge) in &self.adjacency[node] {
                if !seen[next] {
                    seen[next] = true;
                    order.push((edge, node, next));
                    queue.push_back(next);
                }
            }
        }
        order
    }
}

/// The 17-keypoint COCO person tree.
pub fn default_coco_graph() -> KinematicGraph {
    KinematicGraph::from_tree(
        COCO_KEYPOINTS.iter().map(|s| s.to_string()).collect(),
        &COCO_TREE,
    )
    .expect("built-in tree is valid")
}

//! Reliability graphs: DAGs over candidates where an edge `i -> j` states
//! the prior belief that `i` is more reliable than `j`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReliabilityGraph {
    nodes: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl ReliabilityGraph {
    /// Validates acyclicity with Kahn's algorithm. Duplicate edges collapse.
    pub fn new(nodes: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let m = nodes.len();
        let mut seen = BTreeSet::new();
        for id in &nodes {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateCandidate(id.clone()));
            }
        }
        let unique: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        let mut parents = vec![Vec::new(); m];
        let mut children = vec![Vec::new(); m];
        for &(u, v) in &unique {
            if u >= m || v >= m {
                return Err(Error::DimensionMismatch { what: "edge endpoint", expected: m, found: u.max(v) });
            }
            if u == v {
                return Err(Error::CyclicGraph);
            }
            children[u].push(v);
            parents[v].push(u);
        }
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..m).filter(|&v| indegree[v] == 0).collect();
        let mut topo = Vec::with_capacity(m);
        while let Some(u) = ready.pop_first() {
            topo.push(u);
            for &v in &children[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if topo.len() != m {
            return Err(Error::CyclicGraph);
        }
        Ok(Self { nodes, parents, children, topo })
    }

    pub fn edgeless(nodes: Vec<String>) -> Result<Self> {
        Self::new(nodes, &[])
    }

    /// Edges given by node identifiers.
    pub fn from_id_edges(nodes: Vec<String>, edges: &[(&str, &str)]) -> Result<Self> {
        let index = |id: &str| {
            nodes
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::UnknownCandidate(id.into()))
        };
        let mut idx = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            idx.push((index(a)?, index(b)?));
        }
        Self::new(nodes, &idx)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Sorted edge list.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .children
            .iter()
            .enumerate()
            .flat_map(|(u, cs)| cs.iter().map(move |&v| (u, v)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Length of the longest path from any root to each node.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        for &u in &self.topo {
            for &v in &self.children[u] {
                depth[v] = depth[v].max(depth[u] + 1);
            }
        }
        depth
    }

    /// Strict descendants of every node.
    fn descendants(&self) -> Vec<BitSet> {
        let m = self.len();
        let mut desc = vec![BitSet::new(m); m];
        for &u in self.topo.iter().rev() {
            let mut acc = BitSet::new(m);
            for &v in &self.children[u] {
                acc.insert(v);
                acc.union_with(&desc[v]);
            }
            desc[u] = acc;
        }
        desc
    }

    /// Number of leaves reachable from each node, a leaf counting itself.
    pub fn leaf_descendant_counts(&self) -> Vec<usize> {
        let desc = self.descendants();
        (0..self.len())
            .map(|v| {
                if self.is_leaf(v) {
                    1
                } else {
                    desc[v].iter().filter(|&w| self.is_leaf(w)).count()
                }
            })
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        (0..self.len()).filter(|&v| self.is_leaf(v)).count()
    }

    /// Graph with every edge implied by a longer path removed.
    pub fn transitive_reduction(&self) -> Self {
        let desc = self.descendants();
        let mut kept = Vec::new();
        for u in 0..self.len() {
            for &v in &self.children[u] {
                let implied = self.children[u].iter().any(|&w| w != v && desc[w].contains(v));
                if !implied {
                    kept.push((u, v));
                }
            }
        }
        Self::new(self.nodes.clone(), &kept).expect("subgraph of a DAG is a DAG")
    }

    /// Whether `v` can be reached from `u` by a nonempty path.
    pub fn reaches(&self, u: usize, v: usize) -> bool {
        let mut stack = vec![u];
        let mut seen = BitSet::new(self.len());
        while let Some(x) = stack.pop() {
            for &c in &self.children[x] {
                if c == v {
                    return true;
                }
                if !seen.contains(c) {
                    seen.insert(c);
                    stack.push(c);
                }
            }
        }
        false
    }

    /// True if every selected node has all of its parents selected.
    pub fn is_ancestor_closed(&self, selected: &[bool]) -> bool {
        (0..self.len()).all(|v| !selected[v] || self.parents[v].iter().all(|&p| selected[p]))
    }

    /// Errors unless the node identifiers equal `ids` as a set.
    pub fn check_nodes<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let a: BTreeSet<&str> = self.nodes.iter().map(String::as_str).collect();
        let b: BTreeSet<&str> = ids.into_iter().collect();
        if a == b && b.len() == self.nodes.len() {
            Ok(())
        } else {
            Err(Error::NodeSetMismatch)
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(n: usize) -> Self {
        Self { words: vec![0; n.div_ceil(64)] }
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    fn union_with(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b)
        })
    }
}

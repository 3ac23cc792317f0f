//! Rooted trees, canonical shapes and radius-`r` censuses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

const NO_PARENT: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootedTree {
    parent: Vec<usize>,
    weight: Vec<Option<f64>>,
}

impl Default for RootedTree {
    fn default() -> Self {
        Self::new()
    }
}

impl RootedTree {
    /// A single root, node 0.
    pub fn new() -> Self {
        RootedTree { parent: vec![NO_PARENT], weight: vec![None] }
    }

    pub fn add_child(&mut self, parent: usize, weight: Option<f64>) -> usize {
        assert!(parent < self.len(), "unknown parent {parent}");
        self.parent.push(parent);
        self.weight.push(weight);
        self.parent.len() - 1
    }

    /// Builds a tree from a parent array; exactly one entry must be `None`.
    pub fn from_parents(parents: &[Option<usize>]) -> Option<Self> {
        let root = parents.iter().position(Option::is_none)?;
        if parents.iter().filter(|p| p.is_none()).count() != 1 {
            return None;
        }
        // relabel breadth first so that parents precede children
        let mut children = vec![Vec::new(); parents.len()];
        for (v, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                children.get_mut(p)?.push(v);
            }
        }
        let mut tree = RootedTree::new();
        let mut queue = vec![(root, 0usize)];
        let mut head = 0;
        while head < queue.len() {
            let (v, id) = queue[head];
            head += 1;
            for &c in &children[v] {
                let cid = tree.add_child(id, None);
                queue.push((c, cid));
            }
        }
        (tree.len() == parents.len()).then_some(tree)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        (self.parent[v] != NO_PARENT).then_some(self.parent[v])
    }

    pub fn weight(&self, v: usize) -> Option<f64> {
        self.weight[v]
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for v in 1..self.len() {
            out[self.parent[v]].push(v);
        }
        out
    }

    pub fn depth(&self) -> usize {
        let mut d = vec![0usize; self.len()];
        for v in 1..self.len() {
            d[v] = d[self.parent[v]] + 1;
        }
        d.into_iter().max().unwrap_or(0)
    }

    /// Undirected adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for v in 1..self.len() {
            adj[v].push(self.parent[v]);
            adj[self.parent[v]].push(v);
        }
        adj
    }

    /// Canonical form of the whole tree seen from its root.
    pub fn canonical(&self) -> String {
        canonical_ball(&self.adjacency(), self.root(), usize::MAX)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<_> = (1..self.len())
            .map(|v| serde_json::json!({"child": v, "parent": self.parent[v], "weight": self.weight[v]}))
            .collect();
        serde_json::json!({"root": 0, "nodes": self.len(), "edges": edges})
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for v in 1..self.len() {
            match self.weight[v] {
                Some(w) => s.push_str(&format!("{v} {} {w}\n", self.parent[v])),
                None => s.push_str(&format!("{v} {}\n", self.parent[v])),
            }
        }
        s
    }
}

/// Sorted parenthesis encoding of the radius-`r` ball around `root` in an
/// undirected graph given by adjacency lists.
pub fn canonical_ball(adj: &[Vec<usize>], root: usize, r: usize) -> String {
    fn enc(adj: &[Vec<usize>], v: usize, from: usize, left: usize) -> String {
        let mut parts: Vec<String> = if left == 0 {
            Vec::new()
        } else {
            adj[v].iter().filter(|&&w| w != from).map(|&w| enc(adj, w, v, left - 1)).collect()
        };
        parts.sort_unstable();
        let mut s = String::with_capacity(2 + parts.iter().map(String::len).sum::<usize>());
        s.push('(');
        for p in parts {
            s.push_str(&p);
        }
        s.push(')');
        s
    }
    enc(adj, root, NO_PARENT, r)
}

/// Shape of the radius-`r` ball around `root` of `tree`, treated as an
/// unrooted graph.
pub fn neighborhood_census(tree: &RootedTree, root: usize, r: usize) -> String {
    canonical_ball(&tree.adjacency(), root, r)
}

/// Counts of canonical shapes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub counts: BTreeMap<String, u64>,
    /// Samples dropped because the ball reached the edge of what was built.
    pub truncated: u64,
}

impl Census {
    pub fn add(&mut self, shape: String) {
        *self.counts.entry(shape).or_default() += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.counts).expect("string keys")
    }
}

/// Number of nodes encoded by a canonical string.
pub fn shape_size(shape: &str) -> usize {
    shape.bytes().filter(|&b| b == b'(').count()
}

/// Parses a canonical string back into a tree.
pub fn parse_shape(shape: &str) -> Option<RootedTree> {
    let mut tree: Option<RootedTree> = None;
    let mut stack: Vec<usize> = Vec::new();
    for b in shape.bytes() {
        match b {
            b'(' => {
                let id = match (&mut tree, stack.last()) {
                    (None, None) => {
                        tree = Some(RootedTree::new());
                        0
                    }
                    (Some(t), Some(&p)) => t.add_child(p, None),
                    _ => return None,
                };
                stack.push(id);
            }
            b')' => {
                stack.pop()?;
            }
            _ => return None,
        }
    }
    if stack.is_empty() {
        tree
    } else {
        None
    }
}

/// All unordered rooted shapes with `n` nodes, as canonical strings.
pub fn enumerate_shapes(n: usize) -> Vec<String> {
    let mut by_size: Vec<Vec<String>> = vec![Vec::new(), vec!["()".to_string()]];
    for m in 2..=n {
        // multisets of child shapes whose sizes sum to m - 1
        let mut out = Vec::new();
        let pool: Vec<(usize, &String)> =
            (1..m).flat_map(|s| by_size[s].iter().map(move |t| (s, t))).collect();
        fn rec(pool: &[(usize, &String)], start: usize, left: usize, acc: &mut Vec<String>, out: &mut Vec<String>) {
            if left == 0 {
                let mut parts = acc.clone();
                parts.sort_unstable();
                out.push(format!("({})", parts.concat()));
                return;
            }
            for k in start..pool.len() {
                let (s, t) = pool[k];
                if s <= left {
                    acc.push(t.clone());
                    rec(pool, k, left - s, acc, out);
                    acc.pop();
                }
            }
        }
        rec(&pool, 0, m - 1, &mut Vec::new(), &mut out);
        out.sort_unstable();
        out.dedup();
        by_size.push(out);
    }
    by_size.get(n).cloned().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms_ignore_child_order() {
        let mut a = RootedTree::new();
        let x = a.add_child(0, None);
        a.add_child(0, None);
        a.add_child(x, None);
        let mut b = RootedTree::new();
        b.add_child(0, None);
        let y = b.add_child(0, None);
        b.add_child(y, None);
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical(), "((())())");
        assert_eq!(parse_shape(&a.canonical()).unwrap().canonical(), a.canonical());
    }

    #[test]
    fn balls() {
        let mut t = RootedTree::new();
        let c = t.add_child(0, Some(0.3));
        let g = t.add_child(c, Some(0.2));
        t.add_child(g, None);
        t.add_child(0, None);
        assert_eq!(neighborhood_census(&t, 0, 0), "()");
        assert_eq!(neighborhood_census(&t, 0, 1), "(()())");
        // re-rooted at the grandchild the ball climbs back up
        assert_eq!(neighborhood_census(&t, g, 2), "((())())");
    }

    #[test]
    fn shape_counts() {
        // unordered rooted trees: 1, 1, 2, 4, 9, 20, 48, 115
        let counts: Vec<usize> = (1..=8).map(|n| enumerate_shapes(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 4, 9, 20, 48, 115]);
        assert!(enumerate_shapes(5).iter().all(|s| shape_size(s) == 5));
    }

    #[test]
    fn from_parents_relabels() {
        let t = RootedTree::from_parents(&[Some(2), Some(2), None]).unwrap();
        assert_eq!(t.canonical(), "(()())");
        assert!(RootedTree::from_parents(&[None, None]).is_none());
        assert!(RootedTree::from_parents(&[Some(1), Some(0), None]).is_none());
    }
}

//! Reference samplers: Galton-Watson trees, the Poisson IIC and its thinned
//! version, uniform Cayley trees, and exact small-shape probabilities.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::gw;
use crate::tree::{parse_shape, RootedTree};

fn poisson_count(lambda: f64, rng: &mut impl Rng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as usize
}

/// Breadth-first PGW(`lambda`) tree; the flag is set when `max_nodes` is
/// reached before extinction.
pub fn sample_pgw(lambda: f64, max_nodes: usize, rng: &mut impl Rng) -> (RootedTree, bool) {
    sample_pgw_limited(lambda, max_nodes, usize::MAX, rng)
}

/// As [`sample_pgw`], but nodes at depth `max_depth` get no children.
/// Enough for any ball of radius at most `max_depth` around the root.
pub fn sample_pgw_limited(lambda: f64, max_nodes: usize, max_depth: usize, rng: &mut impl Rng) -> (RootedTree, bool) {
    let mut tree = RootedTree::new();
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    while let Some((v, d)) = queue.pop_front() {
        if d >= max_depth {
            continue;
        }
        for _ in 0..poisson_count(lambda, rng) {
            if tree.len() >= max_nodes {
                return (tree, true);
            }
            let c = tree.add_child(v, None);
            queue.push_back((c, d + 1));
        }
    }
    (tree, false)
}

/// Total size of a PGW(`lambda`) tree, capped at `max_nodes` (returned as
/// `None` when the cap is hit).
pub fn sample_pgw_size(lambda: f64, max_nodes: u64, rng: &mut impl Rng) -> Option<u64> {
    let mut open = 1u64;
    let mut size = 1u64;
    while open > 0 {
        open -= 1;
        let k = poisson_count(lambda, rng) as u64;
        size += k;
        open += k;
        if size > max_nodes {
            return None;
        }
    }
    Some(size)
}

fn hang(tree: &mut RootedTree, at: usize, keep: f64, budget: usize, max_depth: usize, rng: &mut impl Rng) -> bool {
    // offspring of every hanging node are Poisson(1) with uniform marks;
    // a child survives when its mark is at most `keep`
    let mut queue = VecDeque::from([(at, 0usize)]);
    let mut added = 0usize;
    while let Some((v, d)) = queue.pop_front() {
        if d >= max_depth {
            continue;
        }
        for _ in 0..poisson_count(1.0, rng) {
            let x: f64 = rng.random();
            if x > keep {
                continue;
            }
            if added >= budget {
                return true;
            }
            added += 1;
            let c = tree.add_child(v, Some(x));
            queue.push_back((c, d + 1));
        }
    }
    false
}

/// Backbone `v_0 … v_depth` (node `i` is `v_i`, rooted at `v_0`) with an
/// independent PGW(1) hung at every backbone node. Hanging trees stop at
/// `attach_pgw_budget` nodes each and at depth `hang_depth`.
pub fn sample_iic(depth: usize, attach_pgw_budget: usize, hang_depth: usize, rng: &mut impl Rng) -> (RootedTree, bool) {
    let mut tree = RootedTree::new();
    for i in 1..=depth {
        tree.add_child(i - 1, Some(rng.random()));
    }
    let mut overflow = false;
    for i in 0..=depth {
        overflow |= hang(&mut tree, i, 1.0, attach_pgw_budget, hang_depth, rng);
    }
    (tree, overflow)
}

#[derive(Debug, Clone)]
pub struct TiicStar {
    /// Rooted at `v_1`; backbone nodes `v_1 … v_depth` are nodes `0 … depth-1`.
    pub tree: RootedTree,
    /// `M_1 … M_depth`: running maxima of the backbone marks.
    pub m: Vec<f64>,
    /// Backbone marks `X_{e_0} … X_{e_{depth-1}}`.
    pub marks: Vec<f64>,
}

/// The thinned IIC: the hanging node at `v_i` survives when every mark on
/// its path to `v_i` is at most `M_i = max_{j<i} X_{e_j}`; `v_0` is removed
/// and the tree re-rooted at `v_1`.
pub fn sample_tiic_star(depth: usize, hang_depth: usize, rng: &mut impl Rng) -> TiicStar {
    assert!(depth >= 2, "needs at least two backbone edges");
    let marks: Vec<f64> = (0..depth).map(|_| rng.random()).collect();
    let mut m = Vec::with_capacity(depth);
    let mut run = 0.0f64;
    for &x in &marks {
        run = run.max(x);
        m.push(run);
    }
    let mut tree = RootedTree::new();
    for i in 1..depth {
        tree.add_child(i - 1, Some(marks[i]));
    }
    for i in 0..depth {
        hang(&mut tree, i, m[i], usize::MAX, hang_depth, rng);
    }
    TiicStar { tree, m, marks }
}

/// Same thinning, keeping `v_0` as the root: `v_0` has no hanging nodes
/// since `M_0 = 0`. Node `i` is `v_i`.
pub fn sample_tiic_star_at_v0(depth: usize, hang_depth: usize, rng: &mut impl Rng) -> RootedTree {
    let star = sample_tiic_star(depth, hang_depth, rng);
    let mut tree = RootedTree::new();
    // v_1 becomes node 1; copy the rest breadth first
    let children = star.tree.children();
    let mut map = vec![0usize; star.tree.len()];
    map[0] = tree.add_child(0, Some(star.marks[0]));
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for &c in &children[v] {
            map[c] = tree.add_child(map[v], star.tree.weight(c));
            queue.push_back(c);
        }
    }
    tree
}

/// Uniform rooted labelled tree on `n` nodes, read off a uniform map
/// `[n] → [n]`: the cyclic nodes, in increasing order, are replaced by the
/// path through their images, whose last node becomes the root.
pub fn sample_cayley(n: usize, rng: &mut impl Rng) -> RootedTree {
    RootedTree::from_parents(&cayley_parents(n, rng)).expect("valid tree")
}

/// Parent array (labels kept) of a uniform rooted labelled tree.
pub fn cayley_parents(n: usize, rng: &mut impl Rng) -> Vec<Option<usize>> {
    assert!(n >= 1);
    let f: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    // cyclic nodes: iterate f from every node, mark the cycle reached
    let mut state = vec![0u8; n]; // 0 new, 1 on stack, 2 done
    let mut cyclic = vec![false; n];
    for s in 0..n {
        let mut path = Vec::new();
        let mut v = s;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = f[v];
        }
        if state[v] == 1 {
            let mut u = v;
            loop {
                cyclic[u] = true;
                u = f[u];
                if u == v {
                    break;
                }
            }
        }
        for p in path {
            state[p] = 2;
        }
    }
    let cyc: Vec<usize> = (0..n).filter(|&v| cyclic[v]).collect();
    let spine: Vec<usize> = cyc.iter().map(|&c| f[c]).collect();
    let mut parent: Vec<Option<usize>> = (0..n).map(|v| Some(f[v])).collect();
    for w in spine.windows(2) {
        parent[w[0]] = Some(w[1]);
    }
    parent[*spine.last().expect("a map has a cycle")] = None;
    parent
}

/// Chains uniform Cayley trees of the given sizes: the root of each tree
/// is joined to a uniform node of the previous one. Rooted at the root of
/// the first tree.
pub fn chained_cayley_ipc(sizes: &[usize], rng: &mut impl Rng) -> RootedTree {
    assert!(!sizes.is_empty() && sizes.iter().all(|&s| s >= 1));
    let total: usize = sizes.iter().sum();
    let mut parents: Vec<Option<usize>> = Vec::with_capacity(total);
    let mut offset = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &s in sizes {
        let local = cayley_parents(s, rng);
        for p in &local {
            parents.push(p.map(|q| q + offset));
        }
        let root = local.iter().position(Option::is_none).expect("rooted") + offset;
        if let Some((po, ps)) = prev {
            parents[root] = Some(po + rng.random_range(0..ps));
        }
        prev = Some((offset, s));
        offset += s;
    }
    RootedTree::from_parents(&parents).expect("valid tree")
}

/// Exact probability that a PGW(1) tree has the unordered shape of `shape`:
/// `e^{-|T|}` over the product, across nodes, of factorials of the
/// multiplicities of isomorphic child subtrees.
pub fn pgw_unordered_prob(shape: &RootedTree) -> f64 {
    pgw_shape_prob(&shape.canonical())
}

/// [`pgw_unordered_prob`] for a canonical string.
pub fn pgw_shape_prob(canonical: &str) -> f64 {
    let tree = parse_shape(canonical).expect("canonical shape");
    let children = tree.children();
    // subtree codes bottom up; nodes are numbered parents first
    let mut code = vec![String::new(); tree.len()];
    let mut ln_aut = 0.0;
    for v in (0..tree.len()).rev() {
        let mut codes: Vec<&str> = children[v].iter().map(|&c| code[c].as_str()).collect();
        codes.sort_unstable();
        let mut run = 1u64;
        for k in 1..=codes.len() {
            if k < codes.len() && codes[k] == codes[k - 1] {
                run += 1;
            } else {
                ln_aut += gw::ln_factorial(run);
                run = 1;
            }
        }
        code[v] = format!("({})", codes.concat());
    }
    (-(tree.len() as f64) - ln_aut).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tree::enumerate_shapes;

    #[test]
    fn small_shape_probabilities() {
        let e = (-1.0f64).exp();
        assert!((pgw_shape_prob("()") - e).abs() < 1e-15);
        assert!((pgw_shape_prob("(())") - e * e).abs() < 1e-15);
        assert!((pgw_shape_prob("(()())") - e.powi(3) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn shape_probabilities_sum_to_borel() {
        for n in 1..=8u64 {
            let total: f64 = enumerate_shapes(n as usize).iter().map(|s| pgw_shape_prob(s)).sum();
            assert!((total - gw::borel_pmf(n)).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn degenerate_cases() {
        let mut rng = stream(1, &[]);
        let (t, over) = sample_pgw(1e-12, 10, &mut rng);
        assert_eq!((t.len(), over), (1, false));
        assert_eq!(sample_cayley(2, &mut rng).canonical(), "(())");
        let path = chained_cayley_ipc(&[1, 1, 1, 1], &mut rng);
        assert_eq!(path.canonical(), "(((())))");
        let star = sample_tiic_star(2, 4, &mut rng);
        assert_eq!(star.tree.parent(1), Some(0));
        assert_eq!(star.m[0], star.marks[0]);
        let (iic, _) = sample_iic(0, 100, 4, &mut rng);
        assert!(iic.len() >= 1);
    }

    #[test]
    fn cayley_is_uniform_on_three_nodes() {
        // 9 rooted labelled trees on 3 nodes: 6 paths and 3 cherries
        let mut rng = stream(2, &[]);
        let n = 90_000;
        let paths = (0..n).filter(|_| sample_cayley(3, &mut rng).canonical() == "((()))").count();
        let frac = paths as f64 / n as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.01, "{frac}");
    }
}

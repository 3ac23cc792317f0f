//! Box containment, ponds, outlets and the backbone on half-line windows.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gw;
use crate::ipc::{boxes_from_tree, run_ipc_sequential, BoxRecord, IpcTree};
use crate::pointset::{IntervalSpec, PointSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxForest {
    pub lo: i64,
    pub hi: i64,
    /// `parent_box[i - lo - 1] = a_i`, the first later box containing `B_i`.
    pub parent_box: Vec<Option<i64>>,
    /// Rightmost vertex of the component of `i`.
    pub component_id: Vec<i64>,
    /// Vertices with no containing box inside the window.
    pub undecided: Vec<i64>,
}

impl BoxForest {
    pub fn a(&self, i: i64) -> Option<i64> {
        self.parent_box[(i - self.lo - 1) as usize]
    }

    pub fn component(&self, i: i64) -> i64 {
        self.component_id[(i - self.lo - 1) as usize]
    }

    /// Children of `j` in the containment graph.
    pub fn box_children(&self, j: i64) -> Vec<i64> {
        (self.lo + 1..j).filter(|&i| self.a(i) == Some(j)).collect()
    }
}

/// `a_i` is the next vertex to the right with a taller box: by laminarity
/// that box is the smallest one containing `B_i`.
pub fn build_box_forest(boxes: &[BoxRecord], interval: IntervalSpec) -> BoxForest {
    let lo = interval.lo.unwrap_or_else(|| boxes.first().map_or(0, |b| b.n - 1));
    let hi = boxes.last().map_or(lo, |b| b.n);
    let mut parent_box = vec![None; boxes.len()];
    let mut stack: Vec<usize> = Vec::new();
    for (k, b) in boxes.iter().enumerate() {
        while let Some(&top) = stack.last() {
            if boxes[top].h < b.h {
                parent_box[top] = Some(b.n);
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(k);
    }
    let mut component_id = vec![0i64; boxes.len()];
    for k in (0..boxes.len()).rev() {
        component_id[k] = match parent_box[k] {
            Some(j) => component_id[(j - lo - 1) as usize],
            None => boxes[k].n,
        };
    }
    let undecided = boxes.iter().zip(&parent_box).filter(|(_, a)| a.is_none()).map(|(b, _)| b.n).collect();
    BoxForest { lo, hi, parent_box, component_id, undecided }
}

/// Quadratic containment check against which the stack sweep is tested.
pub fn containment_oracle(boxes: &[BoxRecord]) -> Vec<Option<i64>> {
    boxes
        .iter()
        .enumerate()
        .map(|(k, bi)| boxes[k + 1..].iter().find(|bj| bj.ell <= bi.ell && bj.h >= bi.h).map(|bj| bj.n))
        .collect()
}

/// How a window decides that a suffix maximum is really an outlet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutletPolicy {
    /// At least this many vertices to its right inside the window, and the
    /// walk `S^{n,1}` already below zero there.
    Horizon(u64),
    /// The probability that a later step reaches the candidate's height,
    /// given the unclaimed points left at the window edge, is below this.
    Probability(f64),
}

impl Default for OutletPolicy {
    fn default() -> Self {
        OutletPolicy::Horizon(10_000)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pond {
    pub index: usize,
    /// The previous outlet `n_i`; the pond's vertices are `(start, outlet]`.
    pub start: i64,
    pub outlet: i64,
    pub outlet_height: f64,
    /// Backbone vertices from `start` to `outlet`.
    pub path: Vec<i64>,
    /// Size of the tree hanging off each path vertex except the outlet.
    pub offbackbone: Vec<u64>,
}

impl Pond {
    pub fn size(&self) -> u64 {
        (self.outlet - self.start) as u64
    }

    pub fn path_length(&self) -> u64 {
        (self.path.len() - 1) as u64
    }
}

/// Traces the pond `(start, outlet]` in a tree given by `parent` on
/// `[start, outlet]`; `None` if `start` is not an ancestor of `outlet`.
pub fn trace_pond(index: usize, start: i64, outlet: i64, height: f64, parent: impl Fn(i64) -> i64) -> Option<Pond> {
    let mut path = vec![outlet];
    let mut v = outlet;
    while v > start {
        v = parent(v);
        path.push(v);
    }
    if v != start {
        return None;
    }
    path.reverse();
    let width = (outlet - start + 1) as usize;
    let mut size = vec![1u64; width];
    for v in (start + 1..=outlet).rev() {
        let p = parent(v);
        if p >= start {
            size[(p - start) as usize] += size[(v - start) as usize];
        }
    }
    let offbackbone = path
        .windows(2)
        .map(|w| size[(w[0] - start) as usize] - size[(w[1] - start) as usize])
        .collect();
    Some(Pond { index, start, outlet, outlet_height: height, path, offbackbone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneDecomposition {
    pub lo: i64,
    pub policy: OutletPolicy,
    /// `n_0 = lo, n_1, n_2, …` up to the last certified outlet.
    pub outlets: Vec<i64>,
    pub outlet_heights: Vec<f64>,
    /// Vertices from `lo` to the last certified outlet.
    pub backbone: Vec<i64>,
    pub ponds: Vec<Pond>,
    /// The uncertified stretch after the last outlet.
    pub partial: Option<(i64, i64)>,
}

/// Runs the window and splits it into certified ponds.
pub fn decompose_ponds(ps: &PointSet, interval: IntervalSpec, policy: OutletPolicy) -> Result<BackboneDecomposition> {
    let tree = run_ipc_sequential(ps, interval)?;
    let leftover = match policy {
        OutletPolicy::Probability(_) => unclaimed_after(ps, &tree),
        OutletPolicy::Horizon(_) => Vec::new(),
    };
    Ok(decompose_tree(ps, &tree, policy, &leftover))
}

/// Heights of the points still unclaimed when the run on the tree's
/// window ends, sorted.
fn unclaimed_after(ps: &PointSet, tree: &IpcTree) -> Vec<f64> {
    let mut claimed: Vec<f64> = tree.chosen.iter().map(|p| p.y).collect();
    claimed.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = (tree.lo..=tree.hi)
        .flat_map(|n| ps.column(n).iter().map(|p| p.y))
        .filter(|y| claimed.binary_search_by(|c| c.total_cmp(y)).is_err())
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

fn decompose_tree(ps: &PointSet, tree: &IpcTree, policy: OutletPolicy, leftover: &[f64]) -> BackboneDecomposition {
    let (lo, hi) = (tree.lo, tree.hi);
    // Suffix maxima are the outlet candidates, left to right.
    let mut candidates = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for n in (lo + 1..=hi).rev() {
        if tree.weight(n) > best {
            best = tree.weight(n);
            candidates.push(n);
        }
    }
    candidates.reverse();
    let ones: Vec<i64> = {
        let mut c = vec![0i64; (hi - lo + 2) as usize];
        for n in lo..=hi {
            c[(n - lo + 1) as usize] = c[(n - lo) as usize] + ps.count_below(n, 1.0, true) as i64 - 1;
        }
        c
    };
    let certified = |n: i64| -> bool {
        let h = tree.weight(n);
        if h <= 1.0 || h > ps.height_cap() {
            return false;
        }
        match policy {
            OutletPolicy::Horizon(w) => {
                let base = ones[(n - lo) as usize];
                (hi - n) as u64 >= w && (n + 1..=hi + 1).any(|m| ones[(m - lo) as usize] < base)
            }
            OutletPolicy::Probability(eps) => {
                let q = leftover.partition_point(|&y| y < h) as f64;
                q * (1.0 - gw::theta(h)).ln() < eps.ln()
            }
        }
    };
    let mut outlets = vec![lo];
    for &n in &candidates {
        if !certified(n) {
            break;
        }
        outlets.push(n);
    }
    let outlet_heights: Vec<f64> = outlets[1..].iter().map(|&n| tree.weight(n)).collect();
    let parent = |v: i64| tree.parent_of(v);
    let ponds: Vec<Pond> = outlets
        .windows(2)
        .enumerate()
        .map(|(i, w)| trace_pond(i, w[0], w[1], tree.weight(w[1]), parent).expect("outlets lie on one path"))
        .collect();
    let mut backbone = vec![lo];
    for p in &ponds {
        backbone.extend_from_slice(&p.path[1..]);
    }
    let last = *outlets.last().expect("contains lo");
    let partial = (last < hi).then_some((last + 1, hi));
    BackboneDecomposition { lo, policy, outlets, outlet_heights, backbone, ponds, partial }
}

/// `(step, W_step)` for every backbone step up to the last certified outlet:
/// the largest backbone weight at or after the step.
pub fn forward_max_process(bd: &BackboneDecomposition) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    let mut step = 0u64;
    for p in &bd.ponds {
        for _ in 0..p.path_length() {
            step += 1;
            out.push((step, p.outlet_height));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PondRecord {
    pub pond_index: usize,
    pub size: u64,
    pub outlet_height: f64,
    pub path_length: u64,
    pub offbackbone: Vec<u64>,
}

pub fn pond_statistics(bd: &BackboneDecomposition) -> Vec<PondRecord> {
    bd.ponds
        .iter()
        .map(|p| PondRecord {
            pond_index: p.index,
            size: p.size(),
            outlet_height: p.outlet_height,
            path_length: p.path_length(),
            offbackbone: p.offbackbone.clone(),
        })
        .collect()
}

pub fn ponds_csv(records: &[PondRecord]) -> String {
    let mut s = String::from("pond_index,size,outlet_height,path_length\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.pond_index, r.size, r.outlet_height, r.path_length);
    }
    s
}

/// Convenience: boxes and forest for a whole window.
pub fn window_forest(tree: &IpcTree) -> (Vec<BoxRecord>, BoxForest) {
    let boxes = boxes_from_tree(tree);
    let forest = build_box_forest(&boxes, IntervalSpec::finite(tree.lo, tree.hi));
    (boxes, forest)
}

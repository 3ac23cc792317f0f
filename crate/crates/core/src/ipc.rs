//! Point-set invasion percolation on a finite interval and the box
//! functionals `(ℓ_n, h_n, t_n)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointset::{IntervalSpec, Point, PointSet};

/// Heap entry ordered so that `BinaryHeap` pops the lowest point first.
#[derive(Debug, Clone, Copy)]
struct Lowest(Point);

impl PartialEq for Lowest {
    fn eq(&self, other: &Self) -> bool {
        self.0.y == other.0.y
    }
}
impl Eq for Lowest {}
impl PartialOrd for Lowest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Lowest {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.y.total_cmp(&self.0.y)
    }
}

/// Heap entry ordered so that `BinaryHeap` pops the highest point first.
#[derive(Debug, Clone, Copy)]
struct Highest(Point);

impl PartialEq for Highest {
    fn eq(&self, other: &Self) -> bool {
        self.0.y == other.0.y
    }
}
impl Eq for Highest {}
impl PartialOrd for Highest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Highest {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.y.total_cmp(&other.0.y)
    }
}

/// Unclaimed points of the opened columns, lowest first.
#[derive(Debug, Clone, Default)]
pub struct Frontier {
    heap: BinaryHeap<Lowest>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, p: Point) {
        self.heap.push(Lowest(p));
    }

    pub fn extend(&mut self, ps: impl IntoIterator<Item = Point>) {
        self.heap.extend(ps.into_iter().map(Lowest));
    }

    pub fn pop(&mut self) -> Option<Point> {
        self.heap.pop().map(|l| l.0)
    }

    pub fn peek(&self) -> Option<Point> {
        self.heap.peek().map(|l| l.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.heap.iter().map(|l| &l.0)
    }

    pub fn count_below(&self, h: f64) -> usize {
        self.heap.iter().filter(|l| l.0.y < h).count()
    }

    /// Drops every point with `y > h`.
    pub fn retain_at_most(&mut self, h: f64) {
        self.heap.retain(|l| l.0.y <= h);
    }

    pub fn clear(&mut self) {
        self.heap.clear();
    }
}

/// The `k` lowest of a growing multiset, for non-decreasing `k`.
#[derive(Debug, Clone, Default)]
pub struct OrderStat {
    lower: BinaryHeap<Highest>,
    upper: BinaryHeap<Lowest>,
}

impl OrderStat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, ps: impl IntoIterator<Item = Point>) {
        for p in ps {
            match self.lower.peek() {
                Some(Highest(top)) if p.y < top.y => {
                    self.upper.push(Lowest(self.lower.pop().expect("peeked").0));
                    self.lower.push(Highest(p));
                }
                _ => self.upper.push(Lowest(p)),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th lowest point; `k` must not decrease between calls.
    pub fn kth(&mut self, k: usize) -> Option<Point> {
        debug_assert!(k >= self.lower.len());
        while self.lower.len() < k {
            let Lowest(p) = self.upper.pop()?;
            self.lower.push(Highest(p));
        }
        self.lower.peek().map(|h| h.0)
    }
}

/// Incremental driver: vertex `next` takes the lowest unclaimed point of
/// columns `[lo, next)`. The caller opens column `n` once vertex `n` exists.
#[derive(Debug, Clone)]
pub struct IpcRunner {
    pub lo: i64,
    pub next: i64,
    pub frontier: Frontier,
}

impl IpcRunner {
    pub fn new(lo: i64) -> Self {
        IpcRunner { lo, next: lo + 1, frontier: Frontier::new() }
    }

    /// Claims `p_next` and advances; `None` when the frontier is empty.
    pub fn claim(&mut self) -> Option<(i64, Point)> {
        let p = self.frontier.pop()?;
        let n = self.next;
        self.next += 1;
        Some((n, p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpcTree {
    pub lo: i64,
    pub hi: i64,
    /// `parent[n - lo - 1] = ⌊x(p_n)⌋` for `n` in `(lo, hi]`.
    pub parent: Vec<i64>,
    pub chosen: Vec<Point>,
}

impl IpcTree {
    fn idx(&self, n: i64) -> usize {
        debug_assert!(n > self.lo && n <= self.hi);
        (n - self.lo - 1) as usize
    }

    pub fn parent_of(&self, n: i64) -> i64 {
        self.parent[self.idx(n)]
    }

    pub fn weight(&self, n: i64) -> f64 {
        self.chosen[self.idx(n)].y
    }

    pub fn chosen_point(&self, n: i64) -> Point {
        self.chosen[self.idx(n)]
    }

    pub fn vertex_count(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    /// Child lists indexed by `n - lo`, each in increasing order.
    pub fn children(&self) -> Vec<Vec<i64>> {
        let mut ch = vec![Vec::new(); self.vertex_count()];
        for n in self.lo + 1..=self.hi {
            ch[(self.parent_of(n) - self.lo) as usize].push(n);
        }
        ch
    }

    /// Distance to `lo`, indexed by `n - lo`.
    pub fn depths(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.vertex_count()];
        for n in self.lo + 1..=self.hi {
            d[(n - self.lo) as usize] = d[(self.parent_of(n) - self.lo) as usize] + 1;
        }
        d
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<_> = (self.lo + 1..=self.hi)
            .map(|n| serde_json::json!({"child": n, "parent": self.parent_of(n), "weight": self.weight(n)}))
            .collect();
        serde_json::json!({"interval": [self.lo, self.hi], "edges": edges})
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for n in self.lo + 1..=self.hi {
            let _ = writeln!(s, "{} {} {}", n, self.parent_of(n), self.weight(n));
        }
        s
    }
}

fn window(ps: &PointSet, interval: IntervalSpec) -> Result<(i64, i64)> {
    let (lo, hi) = interval.bounds()?;
    if lo < ps.lo() || hi > ps.hi() {
        return Err(Error::OutsideWindow { lo, hi, wlo: ps.lo(), whi: ps.hi() });
    }
    Ok((lo, hi))
}

/// Runs the procedure on `interval` using a lowest-point frontier.
pub fn run_ipc_sequential(ps: &PointSet, interval: IntervalSpec) -> Result<IpcTree> {
    let (lo, hi) = window(ps, interval)?;
    let mut run = IpcRunner::new(lo);
    run.frontier.extend(ps.column(lo).iter().copied());
    let width = (hi - lo) as usize;
    let mut parent = Vec::with_capacity(width);
    let mut chosen = Vec::with_capacity(width);
    while run.next <= hi {
        let (n, p) = run
            .claim()
            .ok_or(Error::Exhausted { vertex: run.next, lo, cap: ps.height_cap() })?;
        parent.push(p.column());
        chosen.push(p);
        run.frontier.extend(ps.column(n).iter().copied());
    }
    Ok(IpcTree { lo, hi, parent, chosen })
}

/// Quadratic re-implementation of the procedure kept for cross-checks.
pub fn brute_force_oracle(ps: &PointSet, interval: IntervalSpec) -> Result<IpcTree> {
    let (lo, hi) = window(ps, interval)?;
    let pts: Vec<Point> = ps.points().iter().copied().filter(|p| p.x >= lo as f64 && p.x < (hi + 1) as f64).collect();
    let mut claimed = vec![false; pts.len()];
    let mut parent = Vec::new();
    let mut chosen = Vec::new();
    for i in lo..hi {
        // lowest unclaimed point with x in [lo, i + 1)
        let mut best: Option<usize> = None;
        for (k, p) in pts.iter().enumerate() {
            if claimed[k] || p.x >= (i + 1) as f64 {
                continue;
            }
            if best.is_none_or(|b| p.y < pts[b].y) {
                best = Some(k);
            }
        }
        let k = best.ok_or(Error::Exhausted { vertex: i + 1, lo, cap: ps.height_cap() })?;
        claimed[k] = true;
        parent.push(pts[k].x.floor() as i64);
        chosen.push(pts[k]);
    }
    Ok(IpcTree { lo, hi, parent, chosen })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub n: i64,
    pub ell: i64,
    pub h: f64,
    pub top_point: Point,
}

/// Boxes read off a finished run: `h_n = y(p_n)`, `ℓ_n` the nearest vertex
/// to the left with a taller box (or `lo`).
pub fn boxes_from_tree(tree: &IpcTree) -> Vec<BoxRecord> {
    let mut out = Vec::with_capacity(tree.vertex_count().saturating_sub(1));
    let mut stack: Vec<(i64, f64)> = Vec::new();
    for n in tree.lo + 1..=tree.hi {
        let p = tree.chosen_point(n);
        while stack.last().is_some_and(|&(_, h)| h < p.y) {
            stack.pop();
        }
        let ell = stack.last().map_or(tree.lo, |&(j, _)| j);
        out.push(BoxRecord { n, ell, h: p.y, top_point: p });
        stack.push((n, p.y));
    }
    out
}

/// Boxes straight from the definition: for each `n`, scan `j` leftward and
/// track `s_j`, the `(n-j)`-th lowest point of `[j, n)`; `h_n = min s_j` and
/// `ℓ_n` is the leftmost `j` attaining it.
pub fn compute_boxes(ps: &PointSet, interval: IntervalSpec) -> Result<Vec<BoxRecord>> {
    let (lo, hi) = window(ps, interval)?;
    let mut out = Vec::with_capacity((hi - lo) as usize);
    for n in lo + 1..=hi {
        let mut stat = OrderStat::new();
        let mut best: Option<(f64, i64, Point)> = None;
        for j in (lo..n).rev() {
            stat.add(ps.column(j).iter().copied());
            if let Some(s) = stat.kth((n - j) as usize) {
                match best {
                    Some((h, _, _)) if s.y > h => {}
                    _ => best = Some((s.y, j, s)),
                }
            }
        }
        let (h, ell, top_point) = best.ok_or(Error::Exhausted { vertex: n, lo, cap: ps.height_cap() })?;
        out.push(BoxRecord { n, ell, h, top_point });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Efg {
    pub e: bool,
    pub f: bool,
    pub g: bool,
    pub g_minus: bool,
}

/// The three conditions characterizing `(ℓ_k, h_k) = (k - n, y)`.
pub fn evaluate_efg(ps: &PointSet, k: i64, n: i64, y: f64) -> Efg {
    let start = k - n;
    let e = ps.count_rect(start, k, y, true) == n as usize && ps.count_rect(start, k, y, false) == (n - 1) as usize;
    let f = (1..=n).all(|m| ps.count_rect(k - m, k, y, false) < m as usize);
    let feasible = (start - ps.lo()).max(0);
    let g = (1..=feasible).all(|m| ps.count_rect(start - m, start, y, true) < m as usize);
    let g_minus = (1..=feasible).all(|m| ps.count_rect(start - m, start, y, false) < m as usize);
    Efg { e, f, g, g_minus }
}

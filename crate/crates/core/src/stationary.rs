//! The two-way-infinite objects `IPC(P, Z)` and `BOXES(P, Z)`.
//!
//! Two routes are provided. [`stabilize`] grows a window leftwards by
//! doubling until every target vertex stops changing, as an audit of the
//! finite-window picture. The local samplers below instead compute exact
//! boxes of single vertices: scanning columns leftwards from `n`, the box
//! height is the smallest order statistic `s_j` (the `(n-j)`-th lowest point
//! of `[j, n)`), and a run of points below that height bounds the chance of
//! a further improvement by a Lundberg estimate. Inside an exact box
//! `B_n`, a window run started at `ℓ_n` is exact for every vertex in
//! `(ℓ_n, n]`, which is all the local samplers need.

use std::collections::{BinaryHeap, HashMap};

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::boxes::{build_box_forest, BoxForest};
use crate::error::{Error, Result};
use crate::gw;
use crate::rng::{self, Stream};
use crate::ipc::{boxes_from_tree, run_ipc_sequential, BoxRecord, Frontier, IpcTree};
use crate::pointset::{generate_window, raise_cap, GeneratorSpec, IntervalSpec, Point, PointSet};
use crate::tree::{canonical_ball, RootedTree};

// ---------------------------------------------------------------------------
// Lazily materialised columns over Z

/// Columns of a point process over Z, materialised on demand below `cap`.
#[derive(Debug, Clone)]
pub struct ZColumns {
    source: Source,
    cap: f64,
    // column c >= 0 at index c, column c < 0 at index -1 - c
    pos_start: Vec<usize>,
    pos: Vec<Point>,
    neg_start: Vec<usize>,
    neg: Vec<Point>,
    buf: Vec<Point>,
}

#[derive(Debug, Clone)]
enum Source {
    /// Columns exactly as [`GeneratorSpec::column_band`] draws them.
    Spec(GeneratorSpec),
    /// A unit-rate process drawn column by column from one stream per
    /// direction; much cheaper, but unrelated to any `GeneratorSpec`.
    Sequential { right: Stream, left: Stream },
}

/// `P(Poisson(1) ≤ k)`.
const POISSON1_CDF: [f64; 12] = {
    let mut cdf = [0.0; 12];
    let mut term = 0.36787944117144233;
    let mut acc = 0.0;
    let mut k = 0;
    while k < 12 {
        acc += term;
        cdf[k] = acc;
        term /= (k + 1) as f64;
        k += 1;
    }
    cdf
};

fn poisson1(s: &mut Stream) -> usize {
    let u: f64 = s.random();
    if let Some(k) = POISSON1_CDF.iter().position(|&c| u < c) {
        return k;
    }
    // continue the inversion past the table
    let (mut k, mut term, mut acc) = (12usize, 0.36787944117144233 / 479001600.0, POISSON1_CDF[11]);
    loop {
        acc += term;
        if u < acc || term < 1e-300 {
            return k;
        }
        k += 1;
        term /= k as f64;
    }
}

impl ZColumns {
    /// Unit-rate Poisson columns below height 1, the only points
    /// `IPC(P, Z)` uses, from a fast sequential source.
    pub fn poisson(seed: u64) -> Self {
        let source = Source::Sequential { right: rng::stream(seed, &[0x5a, 1]), left: rng::stream(seed, &[0x5a, 2]) };
        Self::with_source(source, 1.0)
    }

    /// Columns of `spec` below `cap`, matching windows generated from it.
    pub fn from_spec(spec: GeneratorSpec, cap: f64) -> Self {
        Self::with_source(Source::Spec(spec), cap)
    }

    fn with_source(source: Source, cap: f64) -> Self {
        ZColumns { source, cap, pos_start: vec![0], pos: Vec::new(), neg_start: vec![0], neg: Vec::new(), buf: Vec::new() }
    }

    /// Number of columns generated so far.
    pub fn materialised(&self) -> u64 {
        (self.pos_start.len() + self.neg_start.len() - 2) as u64
    }

    fn fill(&mut self, c: i64) {
        let (start, pts, idx) = if c >= 0 {
            (&mut self.pos_start, &mut self.pos, c as usize)
        } else {
            (&mut self.neg_start, &mut self.neg, (-1 - c) as usize)
        };
        while start.len() <= idx + 1 {
            let k = (start.len() - 1) as i64;
            let col = if c >= 0 { k } else { -1 - k };
            self.buf.clear();
            match &mut self.source {
                Source::Spec(spec) => spec.column_band(col, None, self.cap, &mut self.buf),
                Source::Sequential { right, left } => {
                    let s = if c >= 0 { right } else { left };
                    for _ in 0..poisson1(s) {
                        let u: f64 = s.random();
                        let v: f64 = s.random();
                        self.buf.push(Point::new((col as f64 + u).min((col + 1) as f64 - 1e-12), v));
                    }
                }
            }
            self.buf.sort_by(|a, b| a.y.total_cmp(&b.y));
            pts.extend_from_slice(&self.buf);
            start.push(pts.len());
        }
    }

    /// Points of column `c`, lowest first.
    pub fn column(&mut self, c: i64) -> &[Point] {
        self.fill(c);
        if c >= 0 {
            let i = c as usize;
            &self.pos[self.pos_start[i]..self.pos_start[i + 1]]
        } else {
            let i = (-1 - c) as usize;
            &self.neg[self.neg_start[i]..self.neg_start[i + 1]]
        }
    }

    pub fn count_below(&mut self, c: i64, y: f64) -> usize {
        self.column(c).partition_point(|p| p.y < y)
    }
}

/// Work allowance for one replica, in columns scanned or vertices run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub left: u64,
}

impl Budget {
    pub fn new(units: u64) -> Self {
        Budget { left: units }
    }

    fn spend(&mut self) -> bool {
        if self.left == 0 {
            return false;
        }
        self.left -= 1;
        true
    }
}

/// Marker for work abandoned because the budget ran out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Censored;

pub type Local<T> = std::result::Result<T, Censored>;

// ---------------------------------------------------------------------------
// Box scans

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBox {
    pub n: i64,
    pub ell: i64,
    pub h: f64,
    /// `p_n`, the top point of the box.
    pub top: Point,
}

impl ZBox {
    pub fn size(&self) -> u64 {
        (self.n - self.ell) as u64
    }
}

/// Leftward scan for the box of vertex `n` in `IPC(P, Z)`.
///
/// After columns `[j, n)` the candidate height `h*` is the smallest of the
/// order statistics `s_i`, `i ≥ j`; column `j` improves it exactly when the
/// points of `[j, n)` below `h*` number at least `n - j`.
#[derive(Debug, Clone)]
pub struct BoxScan {
    n: i64,
    next: i64,
    /// Points of the scanned columns below `h*`, tallest on top.
    below: BinaryHeap<(u64, u64)>,
    best: Option<(f64, i64, Point)>,
    /// `(n - j) - #([j, n) x [0, h*))`.
    d: i64,
    gamma: f64,
    /// Tracked levels with their Lundberg exponents and the points below.
    levels: Vec<(f64, f64, i64)>,
}

impl BoxScan {
    pub fn new(n: i64) -> Self {
        BoxScan { n, next: n - 1, below: BinaryHeap::new(), best: None, d: 0, gamma: 0.0, levels: Vec::new() }
    }

    /// Also count points below `b`, for [`BoxScan::at_least`].
    pub fn track(mut self, b: f64) -> Self {
        self.levels.push((b, gw::lundberg_exponent(b), 0));
        self
    }

    pub fn width(&self) -> i64 {
        self.n - 1 - self.next
    }

    /// Current candidate `(h*, ℓ*, top)`. `h*` only decreases and `ℓ*`
    /// only moves left, so they bound the true box from above and inside.
    pub fn best(&self) -> Option<(f64, i64, Point)> {
        self.best
    }

    pub fn advance(&mut self, cols: &mut ZColumns) {
        let j = self.next;
        self.next -= 1;
        let k = (self.n - j) as usize;
        let h = self.best.map_or(1.0, |b| b.0);
        let col = cols.column(j);
        for (b, _, c) in &mut self.levels {
            *c += col.partition_point(|p| p.y < *b) as i64;
        }
        for p in &col[..col.partition_point(|p| p.y < h)] {
            self.below.push((p.y.to_bits(), p.x.to_bits()));
        }
        let m = self.below.len();
        if m >= k {
            for _ in k..m {
                self.below.pop();
            }
            let (y, x) = self.below.pop().expect("k >= 1");
            let top = Point::new(f64::from_bits(x), f64::from_bits(y));
            self.best = Some((top.y, j, top));
            self.gamma = gw::lundberg_exponent(top.y);
            self.d = 1;
        } else if m + 1 == k && self.best.is_some() {
            let (h, _, top) = self.best.expect("checked");
            self.best = Some((h, j, top));
            self.d = 1;
        } else {
            self.d = (k - m) as i64;
        }
    }

    /// Chance that a column further left still lowers the box: at most
    /// `exp(-γ(h*)(D - 1))`.
    pub fn failure_bound(&self) -> f64 {
        match self.best {
            Some((h, _, _)) if h < 1.0 => (-self.gamma * (self.d - 1) as f64).exp(),
            _ => 1.0,
        }
    }

    pub fn exact(&self, eps: f64) -> Option<ZBox> {
        let (h, ell, top) = self.best?;
        (self.failure_bound() < eps).then_some(ZBox { n: self.n, ell, h, top })
    }

    /// Whether `h_n ≥ b` is certified, for a tracked level `b`.
    pub fn at_least(&self, b: f64, eps: f64) -> bool {
        if self.best.is_some_and(|(h, _, _)| h < b) {
            return false;
        }
        let Some(&(_, gamma, count)) = self.levels.iter().find(|l| l.0 == b) else { return false };
        let db = self.width() - count;
        db > 0 && gamma * (db as f64) > -eps.ln()
    }
}

/// Exact box of vertex `n`, certified to failure probability `eps`.
pub fn scan_box(cols: &mut ZColumns, n: i64, eps: f64, budget: &mut Budget) -> Local<ZBox> {
    let mut scan = BoxScan::new(n);
    loop {
        if let Some(b) = scan.exact(eps) {
            return Ok(b);
        }
        if !budget.spend() {
            return Err(Censored);
        }
        scan.advance(cols);
    }
}

/// Decides `h_n ≥ b`; the exact box comes back when it is found first.
pub fn box_at_least(cols: &mut ZColumns, n: i64, b: f64, eps: f64, budget: &mut Budget) -> Local<std::result::Result<ZBox, ()>> {
    let mut scan = BoxScan::new(n).track(b);
    loop {
        if let Some(x) = scan.exact(eps) {
            return Ok(Ok(x));
        }
        if scan.at_least(b, eps) {
            return Ok(Err(()));
        }
        if !budget.spend() {
            return Err(Censored);
        }
        scan.advance(cols);
    }
}

// ---------------------------------------------------------------------------
// Window runs on the sub-1 points

/// Invasion from column `lo` using only the materialised points. A vertex
/// whose run finds no point gets `None`; vertices whose box starts at or
/// after `lo` are unaffected.
#[derive(Debug, Clone)]
pub struct ZRun {
    pub lo: i64,
    next: i64,
    frontier: Frontier,
    claims: Vec<Option<Point>>,
}

impl ZRun {
    pub fn new(cols: &mut ZColumns, lo: i64) -> Self {
        let mut frontier = Frontier::new();
        frontier.extend(cols.column(lo).iter().copied());
        ZRun { lo, next: lo + 1, frontier, claims: Vec::new() }
    }

    pub fn last(&self) -> i64 {
        self.next - 1
    }

    pub fn step(&mut self, cols: &mut ZColumns) -> (i64, Option<Point>) {
        let n = self.next;
        let p = self.frontier.pop();
        self.claims.push(p);
        self.frontier.extend(cols.column(n).iter().copied());
        self.next += 1;
        (n, p)
    }

    pub fn run_to(&mut self, cols: &mut ZColumns, hi: i64, budget: &mut Budget) -> Local<()> {
        while self.next <= hi {
            if !budget.spend() {
                return Err(Censored);
            }
            self.step(cols);
        }
        Ok(())
    }

    pub fn claim(&self, n: i64) -> Option<Point> {
        self.claims[(n - self.lo - 1) as usize]
    }

    pub fn height(&self, n: i64) -> f64 {
        self.claim(n).map_or(f64::INFINITY, |p| p.y)
    }
}

/// First vertex `j ≥ from` at which no unclaimed point lies below `y`,
/// given `below` such points at time `from`. Each vertex claims one of them
/// while any remain, and column `j` adds its own.
fn drain(cols: &mut ZColumns, from: i64, mut below: usize, y: f64, budget: &mut Budget) -> Local<i64> {
    let mut j = from;
    while below > 0 {
        if !budget.spend() {
            return Err(Censored);
        }
        below = below - 1 + cols.count_below(j, y);
        j += 1;
    }
    Ok(j)
}

/// `a_n`, the next vertex taller than `n`, whose box contains `B_n`.
pub fn next_taller(cols: &mut ZColumns, b: &ZBox, budget: &mut Budget) -> Local<i64> {
    let below = cols.count_below(b.n, b.h);
    drain(cols, b.n + 1, below, b.h, budget)
}

/// Vertex that claims `p`, a point below 1.
///
/// With `N(i)` the points of column `i` below `y = y(p)`, the unclaimed
/// points below `y` at time `c + 1`, `c = ⌊x(p)⌋`, number
/// `1 + max_{j ≤ c} Σ_{i=j}^{c} (N(i) - 1)`; `p` goes to the first later
/// vertex at which they run out. The maximum is scanned leftwards until the
/// walk sits far enough below it that a Lundberg bound rules out a new one.
pub fn claimer(cols: &mut ZColumns, p: Point, eps: f64, budget: &mut Budget) -> Local<i64> {
    let (c, y) = (p.column(), p.y);
    let gamma = gw::lundberg_exponent(y);
    let need = -eps.ln();
    let (mut walk, mut max) = (0i64, i64::MIN);
    let mut j = c;
    loop {
        if !budget.spend() {
            return Err(Censored);
        }
        walk += cols.count_below(j, y) as i64 - 1;
        max = max.max(walk);
        j -= 1;
        if gamma * (max + 1 - walk) as f64 >= need {
            break;
        }
    }
    drain(cols, c + 1, (max + 1) as usize, y, budget)
}

/// Heights inside an exact box, with the containment parents `a_i` of
/// every vertex in `(ℓ_n, n)` (all of which lie in `(i, n]`).
#[derive(Debug, Clone)]
pub struct BoxInterior {
    pub bx: ZBox,
    pub heights: Vec<f64>,
    pub claims: Vec<Point>,
    pub a: Vec<i64>,
}

impl BoxInterior {
    fn idx(&self, i: i64) -> usize {
        (i - self.bx.ell - 1) as usize
    }

    pub fn a_of(&self, i: i64) -> i64 {
        self.a[self.idx(i)]
    }

    pub fn children(&self, j: i64) -> usize {
        (self.bx.ell + 1..j).filter(|&i| self.a_of(i) == j).count()
    }

    pub fn claim(&self, i: i64) -> Point {
        self.claims[self.idx(i)]
    }
}

pub fn box_interior(cols: &mut ZColumns, bx: &ZBox, budget: &mut Budget) -> Local<BoxInterior> {
    let mut run = ZRun::new(cols, bx.ell);
    run.run_to(cols, bx.n, budget)?;
    let claims: Vec<Point> = run.claims.iter().map(|c| c.expect("exact inside the box")).collect();
    let heights: Vec<f64> = claims.iter().map(|p| p.y).collect();
    let mut a = vec![bx.n; heights.len()];
    let mut stack: Vec<usize> = Vec::new();
    for k in 0..heights.len() {
        while let Some(&t) = stack.last() {
            if heights[t] < heights[k] {
                a[t] = bx.ell + 1 + k as i64;
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(k);
    }
    Ok(BoxInterior { bx: *bx, heights, claims, a })
}

// ---------------------------------------------------------------------------
// Local samples around vertex 0

/// Everything the stationary criteria read off one realisation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OriginSample {
    /// Whether the box of 0 was certified. If not, `h0`, `boxes0_size` and
    /// `x_p0` describe the scan's last candidate, whose height bounds `h_0`
    /// from above and whose width bounds `|B_0|` from below.
    pub certified: bool,
    pub h0: Option<f64>,
    /// `|BOXES^0| = -ℓ_0`.
    pub boxes0_size: Option<u64>,
    /// `⌊x(p_0)⌋`.
    pub x_p0: Option<i64>,
    /// Decile of `h_0`, when certified even if the box is not.
    pub h0_decile: Option<usize>,
    pub boxes0_root_children: Option<u64>,
    pub ipc_census: Option<String>,
    pub boxes_census: Option<String>,
    pub ipc_minus_census: Option<String>,
    /// Size of the subtree of descendants of 0, capped at `positive_cap`.
    pub positive_subtree: Option<u64>,
    pub work: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginPlan {
    pub eps: f64,
    /// Budget for the box of 0.
    pub scan_budget: u64,
    /// Budget for each radius-2 ball.
    pub census_budget: u64,
    pub positive_budget: u64,
    pub censuses: bool,
    pub positive_cap: u64,
}

impl Default for OriginPlan {
    fn default() -> Self {
        OriginPlan {
            eps: 1e-9,
            scan_budget: 1 << 21,
            census_budget: 1 << 21,
            positive_budget: 1 << 22,
            censuses: true,
            positive_cap: 31,
        }
    }
}

/// Shape with a root, one child per entry of `leaves`, each carrying that
/// many leaves.
fn two_level_shape(leaves: &[usize]) -> String {
    let mut t = RootedTree::new();
    for &k in leaves {
        let c = t.add_child(0, None);
        for _ in 0..k {
            t.add_child(c, None);
        }
    }
    canonical_ball(&t.adjacency(), 0, 2)
}

pub fn sample_origin(seed: u64, plan: &OriginPlan) -> OriginSample {
    let mut cols = ZColumns::poisson(seed);
    let mut out = OriginSample::default();
    let eps = plan.eps;
    let mut work = 0;
    let mut budget = Budget::new(plan.scan_budget);
    let edges: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let mut scan = edges.iter().fold(BoxScan::new(0), |s, &e| s.track(e));
    let b0 = loop {
        if let Some(b) = scan.exact(eps) {
            break Some(b);
        }
        if !budget.spend() {
            break None;
        }
        scan.advance(&mut cols);
    };
    work += plan.scan_budget - budget.left;
    let Some(b0) = b0 else {
        if let Some((h, ell, top)) = scan.best() {
            out.h0 = Some(h);
            out.boxes0_size = Some((-ell) as u64);
            out.x_p0 = Some(top.column());
            let k = ((h * 10.0) as usize).min(9);
            if k == 0 || scan.at_least(edges[k - 1], eps) {
                out.h0_decile = Some(k);
            }
        }
        out.work = work;
        return out;
    };
    out.certified = true;
    out.h0_decile = Some(((b0.h * 10.0) as usize).min(9));
    out.h0 = Some(b0.h);
    out.boxes0_size = Some(b0.size());
    out.x_p0 = Some(b0.top.column());
    let mut budget = Budget::new(plan.census_budget);
    let interior0 = box_interior(&mut cols, &b0, &mut budget);
    if let Ok(inner) = &interior0 {
        out.boxes0_root_children = Some(inner.children(0) as u64);
    }
    work += plan.census_budget - budget.left;
    if plan.censuses {
        let pi = b0.top.column();
        let siblings = cols.count_below(pi, b0.h);
        let mut t = RootedTree::new();
        let parent = t.add_child(0, None);
        for _ in 0..siblings + 1 {
            t.add_child(parent, None);
        }
        out.ipc_minus_census = Some(canonical_ball(&t.adjacency(), 0, 2));

        let mut budget = Budget::new(plan.census_budget);
        let col0: Vec<Point> = cols.column(0).to_vec();
        let kids: Local<Vec<i64>> = col0.iter().map(|&p| claimer(&mut cols, p, eps, &mut budget)).collect();
        if let Ok(kids) = &kids {
            let mut leaves = vec![cols.column(pi).len()];
            leaves.extend(kids.iter().map(|&j| cols.column(j).len()));
            out.ipc_census = Some(two_level_shape(&leaves));
        }
        work += plan.census_budget - budget.left;

        if let Ok(inner0) = &interior0 {
            let mut budget = Budget::new(plan.census_budget);
            let outer = next_taller(&mut cols, &b0, &mut budget)
                .and_then(|a0| scan_box(&mut cols, a0, eps, &mut budget))
                .and_then(|a0| box_interior(&mut cols, &a0, &mut budget));
            if let Ok(outer) = outer {
                let mut leaves = vec![outer.children(outer.bx.n)];
                let kids = (b0.ell + 1..0).filter(|&i| inner0.a_of(i) == 0);
                leaves.extend(kids.map(|c| inner0.children(c)));
                out.boxes_census = Some(two_level_shape(&leaves));
            }
            work += plan.census_budget - budget.left;
        }
    }
    if plan.positive_cap > 0 {
        let mut budget = Budget::new(plan.positive_budget);
        out.positive_subtree = positive_subtree_size(&mut cols, plan.positive_cap, eps, &mut budget).ok();
        work += plan.positive_budget - budget.left;
    }
    out.work = work;
    out
}

/// Descendants of 0 in `IPC(P, Z)`: every point below 1 in the column of a
/// descendant is the chosen point of another descendant.
pub fn positive_subtree_size(cols: &mut ZColumns, cap: u64, eps: f64, budget: &mut Budget) -> Local<u64> {
    let mut pending: Vec<Point> = cols.column(0).to_vec();
    let mut size = 1 + pending.len() as u64;
    while size < cap {
        // lowest first: they are the cheapest to place
        let Some(k) = (0..pending.len()).min_by(|&a, &b| pending[a].y.total_cmp(&pending[b].y)) else { break };
        let p = pending.swap_remove(k);
        let j = claimer(cols, p, eps, budget)?;
        let col = cols.column(j);
        size += col.len() as u64;
        pending.extend_from_slice(col);
    }
    Ok(size.min(cap))
}

/// Backward jump chain: `v_0 = 0` and `v_{k+1} = ℓ(v_k)`, whose heights are
/// the jump values of the backward maximum process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpPair {
    pub from: f64,
    /// Next jump value; when not `certified`, the scan's last candidate,
    /// an upper bound.
    pub to: f64,
    pub certified: bool,
}

/// Follows the jump chain from 0 and returns the transitions out of values
/// in `[lo, hi)`. `budget` bounds the work per transition.
pub fn backward_jumps(seed: u64, lo: f64, hi: f64, eps: f64, budget: u64) -> Local<Vec<JumpPair>> {
    let mut cols = ZColumns::poisson(seed);
    let mut out = Vec::new();
    let mut known: Option<ZBox> = None;
    let mut v = 0;
    loop {
        let b = match known.take() {
            Some(b) => b,
            None => match box_at_least(&mut cols, v, hi, eps, &mut Budget::new(budget))? {
                Ok(b) => b,
                Err(()) => return Ok(out),
            },
        };
        if b.h >= hi {
            return Ok(out);
        }
        v = b.ell;
        if b.h >= lo {
            let mut scan = BoxScan::new(v);
            let mut left = Budget::new(budget);
            loop {
                if let Some(next) = scan.exact(eps) {
                    out.push(JumpPair { from: b.h, to: next.h, certified: true });
                    known = Some(next);
                    break;
                }
                if !left.spend() {
                    let to = scan.best().map_or(1.0, |x| x.0);
                    out.push(JumpPair { from: b.h, to, certified: false });
                    return Ok(out);
                }
                scan.advance(&mut cols);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Doubling stabilisation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationPolicy {
    /// Initial left margin as a multiple of the target width.
    pub margin_factor: u64,
    pub max_doublings: u32,
    /// Consecutive doublings without change required of every target vertex.
    pub agreeing: u32,
    pub cap: f64,
}

impl Default for StabilizationPolicy {
    fn default() -> Self {
        StabilizationPolicy { margin_factor: 4, max_doublings: 20, agreeing: 2, cap: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizedWindow {
    pub target: (i64, i64),
    pub extension_lo: i64,
    pub parent: Vec<i64>,
    pub chosen: Vec<Point>,
    pub boxes: Vec<BoxRecord>,
    /// Doublings since each vertex's chosen point last changed.
    pub certificate: Vec<u32>,
    pub parent_changes: Vec<u32>,
    pub doublings: u32,
    /// Per vertex, the Lundberg bound on the chance that its box still
    /// extends left of the final window.
    pub lundberg: Vec<f64>,
}

impl StabilizedWindow {
    fn idx(&self, n: i64) -> Option<usize> {
        (self.target.0..=self.target.1).contains(&n).then(|| (n - self.target.0) as usize)
    }

    pub fn parent_of(&self, n: i64) -> Option<i64> {
        self.idx(n).map(|i| self.parent[i])
    }

    pub fn weight(&self, n: i64) -> Option<f64> {
        self.idx(n).map(|i| self.chosen[i].y)
    }

    pub fn box_of(&self, n: i64) -> Option<&BoxRecord> {
        self.idx(n).map(|i| &self.boxes[i])
    }

    pub fn audit_json(&self) -> String {
        let mut s = String::new();
        for (k, n) in (self.target.0..=self.target.1).enumerate() {
            let line = serde_json::json!({
                "vertex": n,
                "parent": self.parent[k],
                "weight": self.chosen[k].y,
                "stable_rounds": self.certificate[k],
                "parent_changes": self.parent_changes[k],
                "lundberg_bound": self.lundberg[k],
            });
            s.push_str(&line.to_string());
            s.push('\n');
        }
        s
    }
}

fn run_window(spec: &GeneratorSpec, lo: i64, hi: i64, cap: f64) -> Result<(PointSet, IpcTree)> {
    let mut ps = generate_window(spec, lo, hi, cap)?;
    loop {
        match run_ipc_sequential(&ps, ps.interval()) {
            Ok(tree) => return Ok((ps, tree)),
            Err(Error::Exhausted { .. }) => {
                let c = ps.height_cap() + 2.0;
                ps = raise_cap(&ps, c)?;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Grows the window `[target.lo - margin, target.hi]` by doubling the
/// margin until every target vertex has kept its chosen point for
/// `policy.agreeing` doublings and weighs less than 1.
pub fn stabilize(spec: &GeneratorSpec, target: (i64, i64), policy: &StabilizationPolicy) -> Result<StabilizedWindow> {
    let (tlo, thi) = target;
    if tlo > thi {
        return Err(Error::EmptyInterval { lo: tlo, hi: thi });
    }
    let width = (thi - tlo + 1) as u64;
    let mut margin = (policy.margin_factor * width).max(1) as i64;
    let k = width as usize;
    let mut prev: Option<Vec<Point>> = None;
    let mut stable = vec![0u32; k];
    let mut changes = vec![0u32; k];
    let mut prev_parent: Option<Vec<i64>> = None;
    for round in 0..=policy.max_doublings {
        let lo = tlo - margin;
        let (ps, tree) = run_window(spec, lo, thi, policy.cap)?;
        let chosen: Vec<Point> = (tlo..=thi).map(|n| tree.chosen_point(n)).collect();
        let parent: Vec<i64> = (tlo..=thi).map(|n| tree.parent_of(n)).collect();
        if let Some(p) = &prev {
            for i in 0..k {
                if p[i] == chosen[i] {
                    stable[i] += 1;
                } else {
                    stable[i] = 0;
                }
            }
        }
        if let Some(pp) = &prev_parent {
            for i in 0..k {
                if pp[i] != parent[i] {
                    changes[i] += 1;
                }
            }
        }
        let done = stable.iter().all(|&s| s >= policy.agreeing) && chosen.iter().all(|p| p.y < 1.0);
        if done {
            let all = boxes_from_tree(&tree);
            let boxes: Vec<BoxRecord> = all.into_iter().filter(|b| b.n >= tlo).collect();
            let lundberg = boxes.iter().map(|b| window_bound(&ps, lo, b)).collect();
            return Ok(StabilizedWindow {
                target,
                extension_lo: lo,
                parent,
                chosen,
                boxes,
                certificate: stable,
                parent_changes: changes,
                doublings: round,
                lundberg,
            });
        }
        prev = Some(chosen);
        prev_parent = Some(parent);
        margin *= 2;
    }
    let unstable = (tlo..=thi).zip(&stable).filter(|(_, &s)| s < policy.agreeing).map(|(n, _)| n).collect();
    Err(Error::Unstable { unstable })
}

/// Lundberg bound for a window box: the scan from `n` down to `lo` shows a
/// deficit `D` of points below `h_n`.
fn window_bound(ps: &PointSet, lo: i64, b: &BoxRecord) -> f64 {
    if b.ell <= lo || b.h >= 1.0 {
        return 1.0;
    }
    let d = (b.n - lo) as i64 - ps.count_rect(lo, b.n - 1, b.h, false) as i64;
    (-gw::lundberg_exponent(b.h) * (d - 1).max(0) as f64).exp()
}

pub fn build_boxes_z(sw: &StabilizedWindow) -> BoxForest {
    build_box_forest(&sw.boxes, IntervalSpec::finite(sw.target.0 - 1, sw.target.1))
}

/// Points below 1 inside some certified box that no certified vertex chose.
pub fn unchosen_points(sw: &StabilizedWindow, ps: &PointSet) -> Vec<Point> {
    let mut chosen: Vec<u64> = sw.chosen.iter().map(|p| p.y.to_bits()).collect();
    chosen.sort_unstable();
    let mut out = Vec::new();
    for b in &sw.boxes {
        if b.ell < sw.target.0 - 1 {
            continue;
        }
        for c in b.ell..b.n {
            for p in ps.column(c) {
                if p.y <= b.h && p.y < 1.0 && chosen.binary_search(&p.y.to_bits()).is_err() {
                    out.push(*p);
                }
            }
        }
    }
    out.sort_by(|a, b| a.y.total_cmp(&b.y));
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardMaxTrace {
    pub ancestors: Vec<i64>,
    pub w: Vec<f64>,
    pub running_max: Vec<f64>,
    pub jump_indices: Vec<usize>,
    pub jump_values: Vec<f64>,
}

pub fn backward_trace(sw: &StabilizedWindow, from: i64) -> BackwardMaxTrace {
    let mut ancestors = Vec::new();
    let mut v = from;
    while let Some(w) = sw.weight(v) {
        ancestors.push(v);
        let _ = w;
        v = sw.parent_of(v).expect("in target");
    }
    let w: Vec<f64> = ancestors.iter().map(|&n| sw.weight(n).expect("in target")).collect();
    let mut running_max = Vec::with_capacity(w.len());
    let mut jump_indices = Vec::new();
    let mut m = f64::NEG_INFINITY;
    for (i, &x) in w.iter().enumerate() {
        if x > m {
            m = x;
            jump_indices.push(i);
        }
        running_max.push(m);
    }
    let jump_values = jump_indices.iter().map(|&i| running_max[i]).collect();
    BackwardMaxTrace { ancestors, w, running_max, jump_indices, jump_values }
}

/// `IPC^-`: the certified non-positive vertices connected to 0, rooted at 0.
/// Node 0 of the result is vertex 0; the second value maps nodes back to
/// vertices.
pub fn extract_ipc_minus(sw: &StabilizedWindow) -> (RootedTree, Vec<i64>) {
    let hi = sw.target.1.min(0);
    let lo = sw.target.0;
    let mut adj: HashMap<i64, Vec<i64>> = HashMap::new();
    for n in lo..=hi {
        let p = sw.parent_of(n).expect("in target");
        if p >= lo {
            adj.entry(n).or_default().push(p);
            adj.entry(p).or_default().push(n);
        }
    }
    let mut tree = RootedTree::new();
    let mut labels = vec![0i64];
    let mut queue = vec![(0i64, 0usize, i64::MIN)];
    let mut head = 0;
    while head < queue.len() {
        let (v, id, from) = queue[head];
        head += 1;
        let mut nbrs = adj.get(&v).cloned().unwrap_or_default();
        nbrs.sort_unstable();
        for w in nbrs {
            if w != from {
                let c = tree.add_child(id, sw.weight(v.max(w)));
                labels.push(w);
                queue.push((w, c, v));
            }
        }
    }
    (tree, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scans_match_window_boxes() {
        for seed in 0..40 {
            let spec = GeneratorSpec::poisson(seed, IntervalSpec::integers());
            let mut cols = ZColumns::from_spec(spec, 1.0);
            let mut budget = Budget::new(1 << 22);
            let b = scan_box(&mut cols, 0, 1e-12, &mut budget).unwrap();
            // a generous window to the left reproduces the box
            let lo = b.ell - 200 - 4 * b.size() as i64;
            let mut ps = generate_window(&spec, lo, 0, 3.0).unwrap();
            let boxes = loop {
                match run_ipc_sequential(&ps, ps.interval()) {
                    Ok(t) => break boxes_from_tree(&t),
                    Err(_) => ps = raise_cap(&ps, ps.height_cap() + 2.0).unwrap(),
                }
            };
            let last = boxes.last().unwrap();
            assert_eq!((last.ell, last.h), (b.ell, b.h), "seed {seed}");
            assert_eq!(last.top_point, b.top);
            assert!(b.h < 1.0);
        }
    }

    #[test]
    fn interior_runs_agree_with_scans() {
        let mut cols = ZColumns::poisson(3);
        let mut budget = Budget::new(1 << 22);
        let b = scan_box(&mut cols, 5, 1e-12, &mut budget).unwrap();
        let inner = box_interior(&mut cols, &b, &mut budget).unwrap();
        for i in b.ell + 1..=b.n {
            let s = scan_box(&mut cols, i, 1e-12, &mut budget).unwrap();
            assert_eq!(s.top, inner.claim(i), "vertex {i}");
            assert!(s.ell >= b.ell);
        }
    }

    #[test]
    fn claimers_and_taller_vertices_match_a_run() {
        for seed in 0..30 {
            let mut cols = ZColumns::poisson(seed);
            let mut budget = Budget::new(1 << 24);
            let b = scan_box(&mut cols, 40, 1e-12, &mut budget).unwrap();
            let a = next_taller(&mut cols, &b, &mut budget).unwrap();
            let outer = scan_box(&mut cols, a, 1e-12, &mut budget).unwrap();
            assert!(outer.ell <= b.ell && outer.h > b.h);
            let inner = box_interior(&mut cols, &outer, &mut budget).unwrap();
            assert_eq!(inner.a_of(b.n), a);
            for i in outer.ell + 1..=outer.n {
                let p = inner.claim(i);
                assert_eq!(claimer(&mut cols, p, 1e-12, &mut budget).unwrap(), i, "seed {seed}");
            }
        }
    }

    #[test]
    fn origin_sample_is_complete_and_reproducible() {
        let plan = OriginPlan { scan_budget: 1 << 22, census_budget: 1 << 22, ..OriginPlan::default() };
        let a = sample_origin(12, &plan);
        let b = sample_origin(12, &plan);
        assert_eq!(a.h0, b.h0);
        assert_eq!(a.ipc_census, b.ipc_census);
        assert_eq!(a.positive_subtree, b.positive_subtree);
        let complete = (0..20)
            .map(|seed| sample_origin(seed, &plan))
            .filter(|s| s.h0.is_some() && s.boxes_census.is_some() && s.ipc_census.is_some())
            .inspect(|s| assert!(s.x_p0.unwrap() < 0))
            .count();
        assert!(complete >= 15, "{complete}");
    }

    #[test]
    fn stabilization_agrees_with_scans() {
        let spec = GeneratorSpec::poisson(21, IntervalSpec::integers());
        let sw = stabilize(&spec, (-8, 8), &StabilizationPolicy::default()).unwrap();
        let mut cols = ZColumns::from_spec(spec, 1.0);
        let mut budget = Budget::new(1 << 22);
        for n in -8..=8 {
            let b = scan_box(&mut cols, n, 1e-12, &mut budget).unwrap();
            assert_eq!(sw.chosen[(n + 8) as usize], b.top, "vertex {n}");
        }
        assert!(sw.chosen.iter().all(|p| p.y < 1.0));
        let trace = backward_trace(&sw, 0);
        assert_eq!(trace.running_max[0], trace.w[0]);
        assert!(trace.jump_values.windows(2).all(|w| w[0] < w[1]));
        let (minus, labels) = extract_ipc_minus(&sw);
        assert_eq!(labels[0], 0);
        assert!(minus.len() >= 1);
    }
}

//! Lazily generated Poisson half-line with certified outlets.
//!
//! Columns are materialised up to a height cap that is raised on demand.
//! Given the unclaimed points below `h`, the chance that the run ever takes
//! a weight `≥ h` again is exactly `(1 - θ(h))^Q`, `Q` being their number:
//! each of them seeds an independent Poisson(`h`) cluster and the run stays
//! below `h` forever iff one of those clusters is infinite. An outlet
//! candidate is accepted once that probability drops below `eps`.

use std::collections::VecDeque;

use crate::boxes::{trace_pond, Pond};
use crate::error::{Error, Result};
use crate::gw;
use crate::ipc::IpcRunner;
use crate::pointset::{GeneratorSpec, IntervalSpec, Point};

const CAP_START: f64 = 1.5;
const CAP_STEP: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct HalfLine {
    spec: GeneratorSpec,
    lo: i64,
    cap: f64,
    ln_eps: f64,
    budget: u64,
    run: IpcRunner,
    parent: Vec<i64>,
    weight: Vec<f64>,
    /// Suffix maxima since the last outlet, tallest in front.
    stack: VecDeque<(i64, f64)>,
    /// Unclaimed points below the front height.
    q_front: usize,
    ln_front: f64,
    /// Watched levels and the number of unclaimed points below each.
    watch: Vec<(f64, usize)>,
    outlets: Vec<(i64, f64)>,
    /// Points above this can no longer be claimed and are not generated.
    ceiling: f64,
    prune_at: u64,
    buf: Vec<Point>,
}

/// Height of an outlet, exactly or within a certified bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Exact(f64),
    Bracketed(f64, f64),
    OutOfBudget(f64, f64),
}

impl Resolved {
    /// Point value: the exact height or the bracket midpoint.
    pub fn value(self) -> f64 {
        match self {
            Resolved::Exact(h) => h,
            Resolved::Bracketed(a, b) | Resolved::OutOfBudget(a, b) => 0.5 * (a + b),
        }
    }
}

/// Outcome of a bounded search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Settled {
    Yes,
    OutOfBudget,
}

impl HalfLine {
    pub fn new(seed: u64, lo: i64, eps: f64) -> Self {
        let spec = GeneratorSpec::poisson(seed, IntervalSpec::half_line(lo));
        let mut hl = HalfLine {
            spec,
            lo,
            cap: CAP_START,
            ln_eps: eps.ln(),
            budget: u64::MAX,
            run: IpcRunner::new(lo),
            parent: Vec::new(),
            weight: Vec::new(),
            stack: VecDeque::new(),
            q_front: 0,
            ln_front: 0.0,
            watch: Vec::new(),
            outlets: Vec::new(),
            ceiling: f64::INFINITY,
            prune_at: 512,
            buf: Vec::new(),
        };
        hl.open(lo);
        hl
    }

    /// Caps the number of vertices this run may claim.
    pub fn with_budget(mut self, steps: u64) -> Self {
        self.budget = steps;
        self
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    /// Last claimed vertex.
    pub fn last(&self) -> i64 {
        self.run.next - 1
    }

    pub fn steps(&self) -> u64 {
        self.weight.len() as u64
    }

    pub fn parent_of(&self, n: i64) -> i64 {
        self.parent[(n - self.lo - 1) as usize]
    }

    pub fn weight(&self, n: i64) -> f64 {
        self.weight[(n - self.lo - 1) as usize]
    }

    /// Certified outlets `n_1, n_2, …` with their heights.
    pub fn outlets(&self) -> &[(i64, f64)] {
        &self.outlets
    }

    /// Tallest weight claimed since the last outlet: a lower bound on the
    /// height of the next one.
    pub fn pending(&self) -> Option<(i64, f64)> {
        self.stack.front().copied()
    }

    /// Pond `i` (zero based) ends at outlet `i` and starts at the previous
    /// outlet, or at `lo`.
    pub fn pond(&self, i: usize) -> Pond {
        let start = if i == 0 { self.lo } else { self.outlets[i - 1].0 };
        let (outlet, h) = self.outlets[i];
        trace_pond(i, start, outlet, h, |v| self.parent_of(v)).expect("outlets lie on one path")
    }

    fn open(&mut self, n: i64) {
        self.buf.clear();
        self.spec.column_band(n, None, self.cap.min(self.ceiling), &mut self.buf);
        let buf = std::mem::take(&mut self.buf);
        for p in &buf {
            self.count_in(p.y);
        }
        self.run.frontier.extend(buf.iter().copied());
        self.buf = buf;
    }

    fn count_in(&mut self, y: f64) {
        if let Some(&(_, h)) = self.stack.front() {
            if y < h {
                self.q_front += 1;
            }
        }
        for (b, c) in &mut self.watch {
            if y < *b {
                *c += 1;
            }
        }
    }

    fn raise_cap(&mut self) {
        let (old, new) = (self.cap, self.cap + CAP_STEP);
        for c in self.lo..self.run.next {
            self.buf.clear();
            self.spec.column_band(c, Some(old), new, &mut self.buf);
            self.run.frontier.extend(self.buf.iter().copied());
        }
        self.cap = new;
        self.recount();
    }

    fn recount(&mut self) {
        self.q_front = match self.stack.front() {
            Some(&(_, h)) => self.run.frontier.count_below(h),
            None => 0,
        };
        for k in 0..self.watch.len() {
            self.watch[k].1 = self.run.frontier.count_below(self.watch[k].0);
        }
    }

    fn set_front(&mut self) {
        if let Some(&(_, h)) = self.stack.front() {
            self.ln_front = (1.0 - gw::theta(h)).ln();
            self.q_front = self.run.frontier.count_below(h);
        }
    }

    /// Claims one vertex; `false` once the budget is spent.
    pub fn step(&mut self) -> Result<bool> {
        if self.steps() >= self.budget {
            return Ok(false);
        }
        while self.run.frontier.is_empty() {
            if self.ceiling.is_finite() {
                return Err(Error::Exhausted { vertex: self.run.next, lo: self.lo, cap: self.ceiling });
            }
            self.raise_cap();
        }
        let (n, p) = self.run.claim().expect("frontier is non-empty");
        self.parent.push(p.column());
        self.weight.push(p.y);
        if self.stack.front().is_some_and(|&(_, h)| p.y < h) {
            self.q_front -= 1;
        }
        for (b, c) in &mut self.watch {
            if p.y < *b {
                *c -= 1;
            }
        }
        while self.stack.back().is_some_and(|&(_, h)| h < p.y) {
            self.stack.pop_back();
        }
        let new_front = self.stack.is_empty();
        self.stack.push_back((n, p.y));
        if new_front {
            self.q_front = 0;
        }
        self.open(n);
        if new_front {
            self.set_front();
        }
        self.certify();
        if self.steps() >= self.prune_at {
            self.prune();
        }
        Ok(true)
    }

    fn certify(&mut self) {
        while let Some(&(n, h)) = self.stack.front() {
            if h <= 1.0 || h > self.cap || (self.q_front as f64) * self.ln_front >= self.ln_eps {
                break;
            }
            self.outlets.push((n, h));
            self.stack.pop_front();
            self.ceiling = self.ceiling.min(h);
            self.run.frontier.retain_at_most(self.ceiling);
            self.set_front();
            for k in 0..self.watch.len() {
                if self.watch[k].0 > h {
                    self.watch[k].1 = self.run.frontier.count_below(self.watch[k].0);
                }
            }
        }
    }

    fn level_settled(&self, b: f64, ln_miss: f64, count: usize) -> bool {
        let pending_below = self.stack.front().is_none_or(|&(_, h)| h < b);
        pending_below && (self.ceiling < b || (count as f64) * ln_miss < self.ln_eps)
    }

    /// Runs until every outlet of height `≥ b` is certified and no later
    /// weight can reach `b`.
    pub fn settle_level(&mut self, b: f64) -> Result<Settled> {
        assert!(b > 1.0, "levels at or below the critical height never settle");
        while self.cap < b {
            self.raise_cap();
        }
        let slot = self.watch.len();
        let count = self.run.frontier.count_below(b);
        self.watch.push((b, count));
        let ln_miss = (1.0 - gw::theta(b)).ln();
        let out = loop {
            if self.level_settled(b, ln_miss, self.watch[slot].1) {
                break Settled::Yes;
            }
            if !self.step()? {
                break Settled::OutOfBudget;
            }
        };
        self.watch.pop();
        Ok(out)
    }

    /// Interval known to contain the height of the next outlet: from the
    /// tallest pending weight up to the lowest level no later step can
    /// reach with probability `1 - eps`.
    pub fn next_outlet_bracket(&self) -> (f64, f64) {
        let lower = self.pending().map_or(1.0, |(_, h)| h);
        (lower, self.unreachable_level().unwrap_or(self.cap.min(self.ceiling)))
    }

    /// Lowest level that no later step reaches with probability `1 - eps`,
    /// if the materialised columns already show one.
    fn unreachable_level(&self) -> Option<f64> {
        let mut upper = self.cap.min(self.ceiling);
        let mut ys: Vec<f64> = self.run.frontier.iter().map(|p| p.y).filter(|&y| y < upper).collect();
        ys.sort_by(f64::total_cmp);
        let settled = |b: f64| {
            let q = ys.partition_point(|&y| y < b) as f64;
            q * (1.0 - gw::theta(b)).ln() < self.ln_eps
        };
        if !settled(upper) {
            return None;
        }
        let mut lo = self.pending().map_or(1.0, |(_, h)| h).max(1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + upper);
            if settled(mid) {
                upper = mid;
            } else {
                lo = mid;
            }
        }
        Some(upper)
    }

    /// Drops points above the unreachable level so the frontier stays small
    /// during long runs near the critical height.
    fn prune(&mut self) {
        if let Some(b) = self.unreachable_level() {
            if b < self.ceiling {
                self.ceiling = b;
                self.run.frontier.retain_at_most(b);
            }
        }
        self.prune_at = self.steps() + (self.run.frontier.len() as u64).max(512);
    }

    /// Runs until outlet `k` (zero based) is certified, or until its height
    /// is pinned down well enough for `accept`, which is consulted every
    /// `every` steps with the current bracket.
    pub fn resolve_outlet(&mut self, k: usize, every: u64, accept: impl Fn(f64, f64) -> bool) -> Result<Resolved> {
        let mut since = 0u64;
        while self.outlets.len() <= k {
            if !self.step()? {
                let (a, b) = self.next_outlet_bracket();
                return Ok(Resolved::OutOfBudget(a, b));
            }
            since += 1;
            if since >= every && self.outlets.len() == k {
                since = 0;
                let (a, b) = self.next_outlet_bracket();
                if accept(a, b) {
                    return Ok(Resolved::Bracketed(a, b));
                }
            }
        }
        Ok(Resolved::Exact(self.outlets[k].1))
    }

    /// Runs until at least `k` outlets are certified.
    pub fn run_until_outlets(&mut self, k: usize) -> Result<Settled> {
        while self.outlets.len() < k {
            if !self.step()? {
                return Ok(Settled::OutOfBudget);
            }
        }
        Ok(Settled::Yes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipc::run_ipc_sequential;
    use crate::pointset::generate_window;

    #[test]
    fn agrees_with_window_run() {
        for seed in 0..5 {
            let mut hl = HalfLine::new(seed, 0, 1e-9);
            for _ in 0..4000 {
                assert!(hl.step().unwrap());
            }
            let cap = hl.weight.iter().copied().fold(0.0, f64::max) + 1.0;
            let spec = GeneratorSpec::poisson(seed, IntervalSpec::half_line(0));
            let ps = generate_window(&spec, 0, hl.last(), cap).unwrap();
            let tree = run_ipc_sequential(&ps, ps.interval()).unwrap();
            for n in 1..=hl.last() {
                assert_eq!(tree.parent_of(n), hl.parent_of(n), "seed {seed} vertex {n}");
                assert_eq!(tree.weight(n), hl.weight(n));
            }
            // outlets are suffix maxima of the window and strictly decreasing
            for w in hl.outlets().windows(2) {
                assert!(w[0].1 > w[1].1 && w[0].0 < w[1].0);
            }
            for &(n, h) in hl.outlets() {
                assert!((n + 1..=hl.last()).all(|m| hl.weight(m) < h));
            }
        }
    }

    #[test]
    fn ponds_tile_the_backbone() {
        let mut hl = HalfLine::new(11, 0, 1e-9);
        assert_eq!(hl.run_until_outlets(4).unwrap(), Settled::Yes);
        let mut prev = 0;
        for i in 0..4 {
            let p = hl.pond(i);
            assert_eq!(p.start, prev);
            assert_eq!(p.path.first(), Some(&prev));
            assert_eq!(p.offbackbone.iter().sum::<u64>(), p.size());
            prev = p.outlet;
        }
    }

    #[test]
    fn level_settles_below_all_outlets() {
        let mut hl = HalfLine::new(5, 0, 1e-9);
        assert_eq!(hl.settle_level(1.8).unwrap(), Settled::Yes);
        assert!(hl.pending().is_none_or(|(_, h)| h < 1.8));
        let mut hl = HalfLine::new(9, 0, 1e-9);
        hl.settle_level(1.3).unwrap();
        let k = hl.outlets().len();
        let (a, b) = hl.next_outlet_bracket();
        let r = hl.resolve_outlet(k, 64, |a, b| b - a < 1e-3).unwrap();
        let h = r.value();
        assert!(a <= h && h <= b, "{a} {h} {b}");
        let mut short = HalfLine::new(5, 0, 1e-9).with_budget(3);
        assert_eq!(short.run_until_outlets(50).unwrap(), Settled::OutOfBudget);
        assert_eq!(short.steps(), 3);
    }
}

//! Exact structural checks over many random windows.

use serde::{Deserialize, Serialize};

use crate::ipc::{brute_force_oracle, compute_boxes, run_ipc_sequential, BoxRecord, IpcTree};
use crate::pointset::{generate, GeneratorSpec, IntervalSpec};
use crate::rng;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub windows: u64,
    /// Windows whose cap was too low for the run; both kernels must agree on it.
    pub exhausted: u64,
    pub oracle_mismatches: u64,
    /// Vertices with `t_n != p_n`.
    pub top_point_mismatches: u64,
    pub laminarity_violations: u64,
    pub box_path_violations: u64,
    pub spanning_violations: u64,
}

impl SweepReport {
    pub fn equivalence_ok(&self) -> bool {
        self.oracle_mismatches == 0 && self.top_point_mismatches == 0
    }

    pub fn structure_ok(&self) -> bool {
        self.laminarity_violations == 0 && self.box_path_violations == 0 && self.spanning_violations == 0
    }
}

fn laminarity_violations(boxes: &[BoxRecord]) -> u64 {
    let mut bad = 0;
    for (k, bi) in boxes.iter().enumerate() {
        for bj in &boxes[k + 1..] {
            let disjoint = bi.n <= bj.ell || bj.n <= bi.ell;
            let inside = bj.ell <= bi.ell && bi.n <= bj.n && bi.h <= bj.h;
            bad += u64::from(!disjoint && !inside);
        }
    }
    bad
}

/// `ℓ_j < i ≤ j` must reach `ℓ_j` through ancestors inside `[ℓ_j, j]`.
fn box_path_violations(tree: &IpcTree, boxes: &[BoxRecord]) -> u64 {
    let mut bad = 0;
    for b in boxes {
        for i in b.ell + 1..=b.n {
            let mut v = i;
            while v > b.ell {
                v = tree.parent_of(v);
            }
            bad += u64::from(v != b.ell);
        }
    }
    bad
}

fn spanning_violations(tree: &IpcTree) -> u64 {
    let mut bad = 0;
    for n in tree.lo + 1..=tree.hi {
        let p = tree.parent_of(n);
        bad += u64::from(p < tree.lo || p >= n);
    }
    bad + u64::from(tree.parent.len() as i64 != tree.hi - tree.lo)
}

pub fn deterministic_sweep(windows: u64, width: i64, cap: f64, seed: u64) -> SweepReport {
    let mut r = SweepReport { windows, ..Default::default() };
    let interval = IntervalSpec::finite(0, width);
    for w in 0..windows {
        let spec = GeneratorSpec::poisson(rng::replica_seed(seed, w), interval);
        let ps = generate(&spec, cap).expect("window fits the point limit");
        let (fast, slow) = (run_ipc_sequential(&ps, interval), brute_force_oracle(&ps, interval));
        let tree = match (fast, slow) {
            (Ok(a), Ok(b)) => {
                r.oracle_mismatches += u64::from(a != b);
                a
            }
            (Err(_), Err(_)) => {
                r.exhausted += 1;
                continue;
            }
            _ => {
                r.oracle_mismatches += 1;
                continue;
            }
        };
        let boxes = match compute_boxes(&ps, interval) {
            Ok(b) => b,
            Err(_) => {
                r.top_point_mismatches += 1;
                continue;
            }
        };
        r.top_point_mismatches += boxes.iter().filter(|b| b.top_point != tree.chosen_point(b.n)).count() as u64;
        r.laminarity_violations += laminarity_violations(&boxes);
        r.box_path_violations += box_path_violations(&tree, &boxes);
        r.spanning_violations += spanning_violations(&tree);
    }
    r
}

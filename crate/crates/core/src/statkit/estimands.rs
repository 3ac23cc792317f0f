//! The estimand registry: how each statistic is sampled and which law it
//! is compared with.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    bin_counts, census_of, evaluate, par_map, truncated_law, Continuous, Data, Group, Law, LawShape,
    StatKind, StatReport, TestSpec, MIN_BIN_SAMPLES,
};
use crate::boxes::Pond;
use crate::error::{Error, Result};
use crate::gw::{self, QVariant};
use crate::halfline::{HalfLine, Resolved, Settled};
use crate::ipc::{evaluate_efg, run_ipc_sequential};
use crate::pointset::{generate, raise_cap, GeneratorSpec, IntervalSpec, Point, PointSet};
use crate::rng;
use crate::samplers::{sample_iic, sample_tiic_star};
use crate::stationary::{backward_jumps, sample_origin, OriginPlan, OriginSample};
use crate::tree::{neighborhood_census, Census};

/// Largest bin of the truncated size laws; larger values share a tail bin.
pub const SIZE_BINS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Local samples around vertex 0 of the stationary IPC.
    Origin,
    /// Outlets and ponds of the half-line IPC.
    HalfLine,
    /// Small finite windows.
    Window,
    /// The backward jump chain of vertex 0.
    Jumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimand {
    pub name: &'static str,
    pub law: &'static str,
    pub source: Source,
    /// Documented number of replicas.
    pub replicas: u64,
    pub conditioning: Option<Conditioning>,
}

/// Keep replicas whose conditioning variable lies in `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub lo: f64,
    pub hi: f64,
}

impl Conditioning {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y < self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn label(&self) -> String {
        format!("[{}, {})", self.lo, self.hi)
    }
}

const fn bin(lo: f64, hi: f64) -> Option<Conditioning> {
    Some(Conditioning { lo, hi })
}

pub const REGISTRY: [Estimand; 16] = [
    Estimand { name: "h0-uniform", law: "Uniform[0,1]", source: Source::Origin, replicas: 100_000, conditioning: None },
    Estimand { name: "boxes0-size", law: "Borel", source: Source::Origin, replicas: 100_000, conditioning: None },
    Estimand { name: "x-p0", law: "-floor(AV)", source: Source::Origin, replicas: 100_000, conditioning: None },
    Estimand { name: "F-probability", law: "1/n", source: Source::Window, replicas: 100_000, conditioning: None },
    Estimand { name: "pn-rank-uniform", law: "uniform rank", source: Source::Window, replicas: 100_000, conditioning: None },
    Estimand {
        name: "outlet-jump-cdf",
        law: "theta(y)/theta(h)",
        source: Source::HalfLine,
        replicas: 400_000,
        conditioning: bin(2.0, 2.1),
    },
    Estimand {
        name: "pond-size|height",
        law: "pond size given outlet height",
        source: Source::HalfLine,
        replicas: 300_000,
        conditioning: bin(1.5, 1.6),
    },
    Estimand {
        name: "pond-path-length|height",
        law: "1+Geometric(m(y))",
        source: Source::HalfLine,
        replicas: 300_000,
        conditioning: bin(1.5, 1.6),
    },
    Estimand {
        name: "offbackbone-size|height",
        law: "PGW(m(y)) size",
        source: Source::HalfLine,
        replicas: 300_000,
        conditioning: bin(1.5, 1.6),
    },
    Estimand { name: "phi-joint", law: "phi_y(n)", source: Source::Origin, replicas: 400_000, conditioning: None },
    Estimand {
        name: "backward-jump-uniform",
        law: "Uniform[m,1]",
        source: Source::Jumps,
        replicas: 140_000,
        conditioning: bin(0.3, 0.35),
    },
    Estimand { name: "iic-census-r2", law: "Poisson IIC", source: Source::Origin, replicas: 100_000, conditioning: None },
    Estimand { name: "boxes-census-r2", law: "Poisson IIC", source: Source::Origin, replicas: 100_000, conditioning: None },
    Estimand {
        name: "ipcminus-vs-tiicstar-census",
        law: "thinned IIC",
        source: Source::Origin,
        replicas: 100_000,
        conditioning: None,
    },
    Estimand { name: "pgw1-positive-subtree", law: "Borel", source: Source::Origin, replicas: 100_000, conditioning: None },
    Estimand {
        name: "q-map-adjudication",
        law: "(M_1, M_2)",
        source: Source::HalfLine,
        replicas: 100_000,
        conditioning: None,
    },
];

pub fn lookup(name: &str) -> Result<&'static Estimand> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownEstimand(name.to_string()))
}

// ---------------------------------------------------------------------------
// Campaigns

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignParams {
    pub eps: f64,
    /// Vertices a half-line replica may claim.
    pub step_budget: u64,
    /// Work per transition of the backward jump chain.
    pub jump_budget: u64,
    pub origin: OriginPlan,
    /// Window sizes for `F-probability`.
    pub f_sizes: Vec<i64>,
    pub rank_n: i64,
    /// Restricts `q-map-adjudication` to one variant.
    pub q_variant: Option<QVariant>,
    pub threads: usize,
}

impl Default for CampaignParams {
    fn default() -> Self {
        CampaignParams {
            eps: 1e-5,
            step_budget: 4_000_000,
            jump_budget: 1_000_000,
            origin: OriginPlan {
                eps: 1e-5,
                scan_budget: 1_000_000,
                census_budget: 1_000_000,
                positive_budget: 4_000_000,
                censuses: true,
                positive_cap: SIZE_BINS + 1,
            },
            f_sizes: vec![2, 5, 10],
            rank_n: 5,
            q_variant: None,
            threads: super::default_threads(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub estimand: String,
    pub replicas: u64,
    pub seed_base: u64,
    pub conditioning: Option<Conditioning>,
    pub params: CampaignParams,
}

impl Campaign {
    /// The documented replica count and conditioning of `estimand`.
    pub fn documented(estimand: &str, seed_base: u64) -> Result<Self> {
        let e = lookup(estimand)?;
        Ok(Campaign {
            estimand: e.name.to_string(),
            replicas: e.replicas,
            seed_base,
            conditioning: e.conditioning,
            params: CampaignParams::default(),
        })
    }

    pub fn replica_seed(&self, i: u64) -> u64 {
        rng::replica_seed(self.seed_base, i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedBin {
    pub estimand: String,
    pub bin: Option<String>,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOutcome {
    pub campaign: Campaign,
    pub reports: Vec<StatReport>,
    pub dropped: Vec<DroppedBin>,
}

impl CampaignOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(StatReport::passed)
    }
}

/// Evaluates groups, dropping those with fewer than [`MIN_BIN_SAMPLES`].
pub fn finish(campaign: &Campaign, groups: Vec<Group>) -> CampaignOutcome {
    let mut reports = Vec::new();
    let mut dropped = Vec::new();
    for (k, g) in groups.into_iter().enumerate() {
        let n = g.data.len();
        if n < MIN_BIN_SAMPLES {
            dropped.push(DroppedBin { estimand: g.spec.estimand.clone(), bin: g.spec.bin.clone(), samples: n });
            continue;
        }
        reports.push(evaluate(&g, rng::derive(campaign.seed_base, &[0x7265_66, k as u64])));
    }
    CampaignOutcome { campaign: campaign.clone(), reports, dropped }
}

pub fn run_campaign(c: &Campaign) -> Result<CampaignOutcome> {
    let e = lookup(&c.estimand)?;
    let groups = match e.source {
        Source::Origin => {
            let plan = origin_plan_for(e.name, &c.params);
            let samples = origin_batch(c.replicas, c.seed_base, &plan, c.params.threads);
            origin_groups(e.name, &samples)
        }
        Source::Window => window_groups(c),
        Source::HalfLine => halfline_groups(c),
        Source::Jumps => jump_groups(c),
    };
    Ok(finish(c, groups))
}

// ---------------------------------------------------------------------------
// Reference laws

fn law(name: &str, params: serde_json::Value, shape: LawShape) -> Law {
    Law { name: name.to_string(), params, shape }
}

/// Reference samples are this many times larger than the data.
pub const REFERENCE_FACTOR: u64 = 10;

fn spec(estimand: &str, bin: Option<String>, law: Law, kind: StatKind, threshold: f64, n: u64) -> TestSpec {
    let reference_n = if matches!(law.shape, LawShape::Sampled(_)) { REFERENCE_FACTOR * n } else { 0 };
    TestSpec { estimand: estimand.to_string(), bin, law, kind, threshold, n, reference_n }
}

pub fn borel_law() -> Law {
    law("Borel", json!({"support": "1..30 + tail"}), truncated_law(1, SIZE_BINS, gw::borel_pmf))
}

pub fn poisson1_law() -> Law {
    let pmf = |k: u64| (-1.0 - gw::ln_factorial(k)).exp();
    law("Poisson", json!({"mean": 1.0, "support": "0..15 + tail"}), truncated_law(0, 15, pmf))
}

/// `P(⌊AV⌋ = k) = Σ_{a>k} P(A = a)/a` for Borel `A` and uniform `V`,
/// on `k = 0..=29` with a tail bin.
pub fn floor_av_probs() -> &'static [f64] {
    static PROBS: OnceLock<Vec<f64>> = OnceLock::new();
    PROBS.get_or_init(|| {
        const TERMS: u64 = 2_000_000;
        let mut total = 0.0;
        for a in (1..=TERMS).rev() {
            total += gw::borel_pmf(a) / a as f64;
        }
        // Borel(a)/a ~ a^{-5/2}/sqrt(2π) beyond the last term
        total += (2.0 / 3.0) * (TERMS as f64).powf(-1.5) / (2.0 * std::f64::consts::PI).sqrt();
        let mut probs = Vec::new();
        let mut above = total;
        for k in 0..SIZE_BINS {
            probs.push(above);
            above -= gw::borel_pmf(k + 1) / (k + 1) as f64;
        }
        let head: f64 = probs.iter().sum();
        probs.push(1.0 - head);
        probs
    })
}

/// Law of `-⌊AV⌋ - shift`, binned by its absolute value.
pub fn floor_av_law(shift: u64) -> Law {
    let p = floor_av_probs();
    let mut probs = vec![0.0; shift as usize];
    probs.extend_from_slice(&p[..p.len() - 1 - shift as usize]);
    probs.push(1.0 - probs.iter().sum::<f64>());
    let labels = (0..SIZE_BINS).map(|k| format!("-{k}")).chain([format!("<-{}", SIZE_BINS - 1)]).collect();
    law("-floor(AV)", json!({"A": "Borel", "V": "Uniform[0,1]", "shift": shift}), LawShape::Discrete { labels, probs })
}

/// Size law within the `d`-th decile of `h_0`:
/// `n ↦ 10 ∫ φ(y, n) dy` over `[d/10, (d+1)/10)`.
pub fn phi_decile_law(d: usize) -> Law {
    let (a, b) = (d as f64 / 10.0, (d + 1) as f64 / 10.0);
    let pmf = |n: u64| 10.0 * gw::integrate(|y| gw::phi(y.max(1e-12), n), a, b, 1e-13);
    law("phi_y(n) within decile", json!({"y_lo": a, "y_hi": b}), truncated_law(1, SIZE_BINS, pmf))
}

pub fn pond_size_law(y: f64) -> Law {
    law("pond size given height", json!({"y": y}), truncated_law(1, SIZE_BINS, |n| gw::pond_size_given_height(n, y)))
}

pub fn path_length_law(y: f64) -> Law {
    let m = gw::dual_m(y);
    law("1+Geometric(m(y))", json!({"y": y, "m": m}), truncated_law(1, SIZE_BINS, |k| gw::geometric_pmf(m, k - 1)))
}

pub fn offbackbone_law(y: f64) -> Law {
    let m = gw::dual_m(y);
    law("PGW(m(y)) size", json!({"y": y, "m": m}), truncated_law(1, SIZE_BINS, |n| gw::pgw_size_pmf(m, n)))
}

fn discrete_tv(a: &Law, b: &Law) -> f64 {
    match (&a.shape, &b.shape) {
        (LawShape::Discrete { probs: p, .. }, LawShape::Discrete { probs: q, .. }) => {
            0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>()
        }
        _ => f64::NAN,
    }
}

fn sensitivity_note(make: impl Fn(f64) -> Law, c: &Conditioning) -> String {
    format!("reference TV between bin edges {} and {}: {:.4}", c.lo, c.hi, discrete_tv(&make(c.lo), &make(c.hi)))
}

/// Radius-2 ball around the root of the Poisson IIC.
pub fn iic_census(seed: u64, n: u64) -> Census {
    let mut r = rng::stream(seed, &[0x6969_63]);
    census_of((0..n).map(|_| neighborhood_census(&sample_iic(2, usize::MAX, 2, &mut r).0, 0, 2)))
}

/// Radius-2 ball around `v_1` in the thinned IIC.
pub fn tiic_star_census(seed: u64, n: u64) -> Census {
    let mut r = rng::stream(seed, &[0x7469_6963]);
    census_of((0..n).map(|_| neighborhood_census(&sample_tiic_star(3, 2, &mut r).tree, 0, 2)))
}

fn grid_cell(q: f64) -> usize {
    ((q * 10.0).floor().max(0.0) as usize).min(9)
}

fn grid_label(a: f64, b: f64) -> String {
    format!("{},{}", grid_cell(a), grid_cell(b))
}

/// `(M_1, M_2)` of the thinned IIC on the 10×10 grid.
pub fn backward_max_grid(seed: u64, n: u64) -> Census {
    let mut r = rng::stream(seed, &[0x6d6d]);
    census_of((0..n).map(|_| {
        let s = sample_tiic_star(2, 0, &mut r);
        grid_label(s.m[0], s.m[1])
    }))
}

/// The tests run for `estimand`, at their documented sizes and thresholds.
pub fn test_specs(estimand: &str) -> Result<Vec<TestSpec>> {
    let e = lookup(estimand)?;
    let name = e.name;
    let n = e.replicas;
    let cond = e.conditioning;
    let specs = match name {
        "h0-uniform" => {
            vec![spec(name, None, law("Uniform[0,1]", json!({}), LawShape::Continuous(Continuous::Uniform01)), StatKind::Ks, 0.01, n)]
        }
        "boxes0-size" => vec![
            spec(name, None, borel_law(), StatKind::Tv, 0.01, n),
            spec(name, Some("root children".into()), poisson1_law(), StatKind::Tv, 0.01, n),
        ],
        "x-p0" => vec![spec(name, None, floor_av_law(0), StatKind::Tv, 0.01, n)],
        "F-probability" => CampaignParams::default()
            .f_sizes
            .iter()
            .map(|&k| {
                let l = law("1/n", json!({"n": k}), LawShape::Proportion(1.0 / k as f64));
                spec(name, Some(format!("n={k}")), l, StatKind::RelErr, 0.05, n)
            })
            .collect(),
        "pn-rank-uniform" => {
            let k = CampaignParams::default().rank_n as usize;
            let labels = (1..=k).map(|i| i.to_string()).collect();
            let l = law("uniform rank", json!({"n": k}), LawShape::Discrete { labels, probs: vec![1.0 / k as f64; k] });
            vec![spec(name, None, l, StatKind::ChiSquare, super::chi_square_quantile(k - 1, 0.999), n)]
        }
        "outlet-jump-cdf" => {
            let c = cond.expect("conditioned");
            let l = law("theta(y)/theta(h)", json!({"h": c.mid()}), LawShape::Continuous(Continuous::OutletJump { h: c.mid() }));
            vec![spec(name, Some(c.label()), l, StatKind::Ks, 0.02, 10_000)]
        }
        "pond-size|height" => {
            let c = cond.expect("conditioned");
            vec![spec(name, Some(c.label()), pond_size_law(c.mid()), StatKind::Tv, 0.02, 30_000)]
        }
        "pond-path-length|height" => {
            let c = cond.expect("conditioned");
            vec![spec(name, Some(c.label()), path_length_law(c.mid()), StatKind::Tv, 0.02, 30_000)]
        }
        "offbackbone-size|height" => {
            let c = cond.expect("conditioned");
            vec![spec(name, Some(c.label()), offbackbone_law(c.mid()), StatKind::Tv, 0.02, 30_000)]
        }
        "phi-joint" => (0..10)
            .map(|d| spec(name, Some(format!("h0 decile {d}")), phi_decile_law(d), StatKind::Tv, 0.02, n / 10))
            .collect(),
        "backward-jump-uniform" => {
            let c = cond.expect("conditioned");
            let l = law("Uniform[m,1]", json!({"pit": "(m' - m)/(1 - m)"}), LawShape::Continuous(Continuous::Uniform01));
            vec![spec(name, Some(c.label()), l, StatKind::Ks, 0.02, 10_000)]
        }
        "iic-census-r2" | "boxes-census-r2" => {
            vec![spec(name, None, law("Poisson IIC radius-2 census", json!({}), LawShape::Sampled(iic_census)), StatKind::Tv, 0.02, n)]
        }
        "ipcminus-vs-tiicstar-census" => {
            let l = law("thinned IIC radius-2 census at v_1", json!({}), LawShape::Sampled(tiic_star_census));
            vec![spec(name, None, l, StatKind::Tv, 0.02, n)]
        }
        "pgw1-positive-subtree" => vec![spec(name, None, borel_law(), StatKind::Tv, 0.01, n)],
        "q-map-adjudication" => QVariant::ALL
            .iter()
            .map(|v| {
                let l = law("(M_1, M_2) on a 10x10 grid", json!({"q": v.name()}), LawShape::Sampled(backward_max_grid));
                spec(name, Some(format!("q={}", v.name())), l, StatKind::Tv, 0.05, n)
            })
            .collect(),
        _ => unreachable!("registry and specs agree"),
    };
    Ok(specs)
}

fn with_data(spec: TestSpec, data: Data, notes: Vec<String>) -> Group {
    Group { spec, data, notes }
}

// ---------------------------------------------------------------------------
// Stationary origin samples

/// The campaign's origin plan, without the parts `estimand` does not read.
pub fn origin_plan_for(estimand: &str, params: &CampaignParams) -> OriginPlan {
    let mut plan = OriginPlan { eps: params.eps, ..params.origin };
    plan.censuses &= matches!(estimand, "iic-census-r2" | "boxes-census-r2" | "ipcminus-vs-tiicstar-census");
    if estimand != "pgw1-positive-subtree" {
        plan.positive_cap = 0;
    }
    plan
}

pub fn origin_batch(replicas: u64, seed_base: u64, plan: &OriginPlan, threads: usize) -> Vec<OriginSample> {
    par_map(replicas, threads, |i| sample_origin(rng::replica_seed(seed_base, i), plan))
}

fn size_bin(size: Option<u64>, certified: bool) -> Option<u64> {
    // an uncertified width is a lower bound: only the tail bin is certain
    size.filter(|&s| certified || s > SIZE_BINS)
}

/// Groups for an origin-sourced estimand from a shared batch.
pub fn origin_groups(estimand: &str, samples: &[OriginSample]) -> Vec<Group> {
    let specs = test_specs(estimand).expect("registered");
    let uncertified = samples.iter().filter(|s| !s.certified).count();
    let censored_note = |kept: usize| format!("{} of {} replicas dropped as uncertified", samples.len() - kept, samples.len());
    match estimand {
        "h0-uniform" => {
            let xs: Vec<f64> = samples.iter().filter_map(|s| s.h0).collect();
            let note = format!("{uncertified} uncertified replicas enter with their scan candidate, an upper bound on h_0");
            vec![with_data(specs[0].clone(), Data::Reals(xs), vec![note])]
        }
        "boxes0-size" => {
            let sizes: Vec<u64> = samples.iter().filter_map(|s| size_bin(s.boxes0_size, s.certified)).collect();
            let kids: Vec<u64> = samples.iter().filter_map(|s| s.boxes0_root_children).collect();
            vec![
                with_data(specs[0].clone(), Data::Bins(bin_counts(sizes.iter().copied(), 1, SIZE_BINS)), vec![censored_note(sizes.len())]),
                with_data(specs[1].clone(), Data::Bins(bin_counts(kids.iter().copied(), 0, 15)), vec![censored_note(kids.len())]),
            ]
        }
        "x-p0" => {
            let xs: Vec<u64> = samples.iter().filter(|s| s.certified).filter_map(|s| s.x_p0).map(|x| (-x) as u64).collect();
            let counts = bin_counts(xs.iter().copied(), 0, SIZE_BINS - 1);
            let shifted = super::tv_distance(&counts, floor_av_shift_probs(1));
            let notes = vec![censored_note(xs.len()), format!("TV against -floor(AV)-1: {shifted:.4}")];
            vec![with_data(specs[0].clone(), Data::Bins(counts), notes)]
        }
        "phi-joint" => specs
            .into_iter()
            .enumerate()
            .map(|(d, sp)| {
                let inside: Vec<&OriginSample> = samples.iter().filter(|s| s.h0_decile == Some(d)).collect();
                let sizes: Vec<u64> = inside.iter().filter_map(|s| size_bin(s.boxes0_size, s.certified)).collect();
                let note = format!("{} replicas in the decile dropped as uncertified", inside.len() - sizes.len());
                with_data(sp, Data::Bins(bin_counts(sizes, 1, SIZE_BINS)), vec![note])
            })
            .collect(),
        "iic-census-r2" | "boxes-census-r2" | "ipcminus-vs-tiicstar-census" => {
            let pick = |s: &OriginSample| match estimand {
                "iic-census-r2" => s.ipc_census.clone(),
                "boxes-census-r2" => s.boxes_census.clone(),
                _ => s.ipc_minus_census.clone(),
            };
            let shapes: Vec<String> = samples.iter().filter_map(pick).collect();
            let note = censored_note(shapes.len());
            vec![with_data(specs[0].clone(), Data::Labels(census_of(shapes)), vec![note])]
        }
        "pgw1-positive-subtree" => {
            let sizes: Vec<u64> = samples.iter().filter_map(|s| s.positive_subtree).collect();
            let note = censored_note(sizes.len());
            vec![with_data(specs[0].clone(), Data::Bins(bin_counts(sizes, 1, SIZE_BINS)), vec![note])]
        }
        other => panic!("{other} is not an origin estimand"),
    }
}

fn floor_av_shift_probs(shift: u64) -> &'static [f64] {
    static SHIFTED: OnceLock<Vec<f64>> = OnceLock::new();
    assert_eq!(shift, 1);
    SHIFTED.get_or_init(|| match floor_av_law(1).shape {
        LawShape::Discrete { probs, .. } => probs,
        _ => unreachable!(),
    })
}

// ---------------------------------------------------------------------------
// Small windows

/// Whether `F(0, n, 1)` holds for `n - 1` uniform points in `[0, n) × [0, 1)`.
pub fn f_event(n: i64, r: &mut impl Rng) -> bool {
    let pts: Vec<Point> = (0..n - 1).map(|_| Point::new(r.random::<f64>() * n as f64, r.random())).collect();
    let ps = PointSet::from_points(0, n, 1.0, pts).expect("points inside the window");
    evaluate_efg(&ps, n, n, 1.0).f
}

/// Rank (1 = lowest) of `p_n` among the `n` lowest points of `[0, n)`.
pub fn pn_rank(seed: u64, n: i64) -> usize {
    let interval = IntervalSpec::finite(0, n);
    let mut ps = generate(&GeneratorSpec::poisson(seed, interval), 2.0 * n as f64).expect("small window");
    loop {
        if let Ok(t) = run_ipc_sequential(&ps, interval) {
            let p = t.chosen_point(n);
            let mut ys: Vec<f64> = ps.points().iter().filter(|q| q.column() < n).map(|q| q.y).collect();
            ys.sort_by(f64::total_cmp);
            let rank = ys.iter().position(|&y| y == p.y).expect("p_n is a point of the window") + 1;
            assert!(rank <= n as usize, "p_n is among the n lowest points");
            return rank;
        }
        ps = raise_cap(&ps, ps.height_cap() * 2.0).expect("small window");
    }
}

fn window_groups(c: &Campaign) -> Vec<Group> {
    let specs = test_specs(&c.estimand).expect("registered");
    match c.estimand.as_str() {
        "F-probability" => c
            .params
            .f_sizes
            .iter()
            .map(|&k| {
                let hits = par_map(c.replicas, c.params.threads, |i| {
                    f_event(k, &mut rng::stream(c.replica_seed(i), &[0x46, k as u64]))
                });
                let hits = hits.into_iter().filter(|&h| h).count() as u64;
                let l = law("1/n", json!({"n": k}), LawShape::Proportion(1.0 / k as f64));
                let sp = TestSpec { bin: Some(format!("n={k}")), law: l, ..specs[0].clone() };
                with_data(sp, Data::Hits { hits, n: c.replicas }, vec![])
            })
            .collect(),
        "pn-rank-uniform" => {
            let k = c.params.rank_n;
            let ranks = par_map(c.replicas, c.params.threads, |i| pn_rank(c.replica_seed(i), k) as u64);
            let mut counts = vec![0u64; k as usize];
            for r in ranks {
                counts[r as usize - 1] += 1;
            }
            let labels = (1..=k).map(|i| i.to_string()).collect();
            let l = law("uniform rank", json!({"n": k}), LawShape::Discrete { labels, probs: vec![1.0 / k as f64; k as usize] });
            let threshold = super::chi_square_quantile(k as usize - 1, 0.999);
            vec![with_data(TestSpec { law: l, threshold, ..specs[0].clone() }, Data::Bins(counts), vec![])]
        }
        other => panic!("{other} is not a window estimand"),
    }
}

// ---------------------------------------------------------------------------
// Half-line outlets and ponds

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transition {
    /// No outlet height fell in the bin.
    Absent,
    /// `(h, y)`: an outlet of height `h` in the bin followed by one of
    /// height `y`, exactly or as the midpoint of a tight bracket.
    Found { h: f64, y: f64, exact: bool },
    Censored,
}

/// Outlet heights span the CDF `θ(y)/θ(h)` to this precision when bracketed.
const BRACKET_THETA: f64 = 1e-3;

pub fn outlet_transition(seed: u64, c: Conditioning, eps: f64, budget: u64) -> Transition {
    let mut hl = HalfLine::new(seed, 0, eps).with_budget(budget);
    match hl.settle_level(c.lo) {
        Ok(Settled::Yes) => {}
        _ => return Transition::Censored,
    }
    let Some(i) = hl.outlets().iter().position(|&(_, h)| c.contains(h)) else { return Transition::Absent };
    let h = hl.outlets()[i].1;
    if let Some(&(_, y)) = hl.outlets().get(i + 1) {
        return Transition::Found { h, y, exact: true };
    }
    match hl.resolve_outlet(i + 1, 256, |a, b| gw::theta(b) - gw::theta(a) < BRACKET_THETA) {
        Ok(Resolved::Exact(y)) => Transition::Found { h, y, exact: true },
        Ok(r @ Resolved::Bracketed(..)) => Transition::Found { h, y: r.value(), exact: false },
        _ => Transition::Censored,
    }
}

/// Ponds whose outlet height lies in the bin; `None` if the level did not
/// settle within the budget.
pub fn ponds_in_bin(seed: u64, c: Conditioning, eps: f64, budget: u64) -> Option<Vec<Pond>> {
    let mut hl = HalfLine::new(seed, 0, eps).with_budget(budget);
    match hl.settle_level(c.lo) {
        Ok(Settled::Yes) => {}
        _ => return None,
    }
    let idx: Vec<usize> = (0..hl.outlets().len()).filter(|&i| c.contains(hl.outlets()[i].1)).collect();
    Some(idx.into_iter().map(|i| hl.pond(i)).collect())
}

fn cells_agree(a: f64, b: f64) -> bool {
    QVariant::ALL.iter().all(|&v| grid_cell(gw::q_map(a, v)) == grid_cell(gw::q_map(b, v)))
}

fn top_cell(w: f64) -> bool {
    QVariant::ALL.iter().all(|&v| grid_cell(gw::q_map(w, v)) == 9)
}

/// `(W_1, W_2)` resolved to the 10×10 grid under both maps. `W_2 = W_1`
/// unless the first backbone edge is the first outlet edge.
pub fn forward_maxima(seed: u64, eps: f64, budget: u64) -> Option<(f64, f64)> {
    let mut hl = HalfLine::new(seed, 0, eps).with_budget(budget);
    let w1 = match hl.resolve_outlet(0, 64, cells_agree).ok()? {
        Resolved::Exact(h) => h,
        r @ Resolved::Bracketed(..) => {
            // below the top cell's edge, q(W_2) ≥ q(W_1) shares that cell
            if top_cell(r.value()) {
                return Some((r.value(), r.value()));
            }
            match hl.run_until_outlets(1).ok()? {
                Settled::Yes => hl.outlets()[0].1,
                Settled::OutOfBudget => return None,
            }
        }
        Resolved::OutOfBudget(..) => return None,
    };
    if hl.pond(0).path_length() >= 2 {
        return Some((w1, w1));
    }
    match hl.resolve_outlet(1, 64, cells_agree).ok()? {
        Resolved::Exact(h) => Some((w1, h)),
        r @ Resolved::Bracketed(..) => Some((w1, r.value())),
        Resolved::OutOfBudget(..) => None,
    }
}

fn halfline_groups(c: &Campaign) -> Vec<Group> {
    let specs = test_specs(&c.estimand).expect("registered");
    let p = &c.params;
    let cond = c.conditioning.or(lookup(&c.estimand).expect("registered").conditioning);
    let seeds = |i| c.replica_seed(i);
    match c.estimand.as_str() {
        "outlet-jump-cdf" => {
            let cond = cond.expect("conditioned");
            let runs = par_map(c.replicas, p.threads, |i| outlet_transition(seeds(i), cond, p.eps, p.step_budget));
            let mut ys = Vec::new();
            let (mut bracketed, mut censored) = (0, 0);
            for r in &runs {
                match *r {
                    Transition::Found { y, exact, .. } => {
                        ys.push(y);
                        bracketed += u64::from(!exact);
                    }
                    Transition::Censored => censored += 1,
                    Transition::Absent => {}
                }
            }
            let sp = TestSpec {
                bin: Some(cond.label()),
                law: law("theta(y)/theta(h)", json!({"h": cond.mid()}), LawShape::Continuous(Continuous::OutletJump { h: cond.mid() })),
                ..specs[0].clone()
            };
            let edges = (0..=200)
                .map(|k| 1.0 + (cond.lo - 1.0) * k as f64 / 200.0)
                .map(|y| gw::theta(y) / gw::theta(cond.lo) - gw::theta(y) / gw::theta(cond.hi))
                .fold(0.0, f64::max);
            let notes = vec![
                format!("{bracketed} next heights taken as bracket midpoints (theta spread < {BRACKET_THETA})"),
                format!("{censored} of {} replicas censored by the step budget", c.replicas),
                format!("reference KS between bin edges {} and {}: {edges:.4}", cond.lo, cond.hi),
            ];
            vec![with_data(sp, Data::Reals(ys), notes)]
        }
        "pond-size|height" | "pond-path-length|height" | "offbackbone-size|height" => {
            let cond = cond.expect("conditioned");
            let runs = par_map(c.replicas, p.threads, |i| ponds_in_bin(seeds(i), cond, p.eps, p.step_budget));
            let censored = runs.iter().filter(|r| r.is_none()).count();
            let ponds: Vec<&Pond> = runs.iter().flatten().flatten().collect();
            let y = cond.mid();
            let (l, values, make): (Law, Vec<u64>, fn(f64) -> Law) = match c.estimand.as_str() {
                "pond-size|height" => (pond_size_law(y), ponds.iter().map(|q| q.size()).collect(), pond_size_law),
                "pond-path-length|height" => {
                    (path_length_law(y), ponds.iter().map(|q| q.path_length()).collect(), path_length_law)
                }
                _ => (offbackbone_law(y), ponds.iter().flat_map(|q| q.offbackbone.iter().copied()).collect(), offbackbone_law),
            };
            let sp = TestSpec { bin: Some(cond.label()), law: l, ..specs[0].clone() };
            let notes = vec![
                format!("{} ponds from {} replicas; {censored} censored by the step budget", ponds.len(), c.replicas),
                sensitivity_note(make, &cond),
            ];
            vec![with_data(sp, Data::Bins(bin_counts(values, 1, SIZE_BINS)), notes)]
        }
        "q-map-adjudication" => {
            let runs = par_map(c.replicas, p.threads, |i| forward_maxima(seeds(i), p.eps, p.step_budget));
            let pairs: Vec<(f64, f64)> = runs.iter().flatten().copied().collect();
            let censored = runs.len() - pairs.len();
            QVariant::ALL
                .iter()
                .zip(specs)
                .filter(|(v, _)| p.q_variant.is_none_or(|q| q == **v))
                .map(|(&v, sp)| {
                    let labels = pairs.iter().map(|&(a, b)| grid_label(gw::q_map(a, v), gw::q_map(b, v)));
                    let note = format!("{censored} of {} replicas censored by the step budget", c.replicas);
                    with_data(sp, Data::Labels(census_of(labels)), vec![note])
                })
                .collect()
        }
        other => panic!("{other} is not a half-line estimand"),
    }
}

// ---------------------------------------------------------------------------
// Backward jumps

/// Probability integral transforms `(m' - m)/(1 - m)` of the certified
/// transitions out of the bin, and the number of censored replicas.
pub fn jump_pits(c: &Campaign, cond: Conditioning) -> (Vec<f64>, u64) {
    let p = &c.params;
    let runs = par_map(c.replicas, p.threads, |i| backward_jumps(c.replica_seed(i), cond.lo, cond.hi, p.eps, p.jump_budget));
    let mut pits = Vec::new();
    let mut censored = 0;
    for r in runs {
        match r {
            Ok(pairs) => {
                for j in pairs {
                    if j.certified {
                        pits.push((j.to - j.from) / (1.0 - j.from));
                    } else {
                        censored += 1;
                    }
                }
            }
            Err(_) => censored += 1,
        }
    }
    (pits, censored)
}

fn jump_groups(c: &Campaign) -> Vec<Group> {
    let specs = test_specs(&c.estimand).expect("registered");
    let cond = c.conditioning.or(lookup(&c.estimand).expect("registered").conditioning).expect("conditioned");
    let (pits, censored) = jump_pits(c, cond);
    let note = format!("{censored} transitions or replicas censored by the work budget");
    vec![with_data(TestSpec { bin: Some(cond.label()), ..specs[0].clone() }, Data::Reals(pits), vec![note])]
}

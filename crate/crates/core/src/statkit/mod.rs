//! Monte Carlo campaigns and goodness-of-fit verdicts.
//!
//! A registered estimand produces one or more [`Group`]s: observed data
//! paired with a [`TestSpec`] (reference law, statistic, threshold). Each
//! group is turned into a [`StatReport`].

mod estimands;
mod sweep;

pub use estimands::*;
pub use sweep::{deterministic_sweep, SweepReport};

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::{self, Stream};
use crate::tree::Census;

/// Bins with fewer samples than this are dropped from a campaign.
pub const MIN_BIN_SAMPLES: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatKind {
    #[serde(rename = "KS")]
    Ks,
    #[serde(rename = "TV")]
    Tv,
    #[serde(rename = "chi-square")]
    ChiSquare,
    /// `|p̂ - p| / p` for a single proportion.
    #[serde(rename = "relative-error")]
    RelErr,
}

/// Continuous reference laws, compared by KS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Continuous {
    Uniform01,
    /// CDF `θ(y)/θ(h)` on `[1, h]`.
    OutletJump { h: f64 },
}

impl Continuous {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Continuous::Uniform01 => x.clamp(0.0, 1.0),
            Continuous::OutletJump { h } => {
                if x <= 1.0 {
                    0.0
                } else if x >= h {
                    1.0
                } else {
                    crate::gw::theta(x) / crate::gw::theta(h)
                }
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Continuous::Uniform01 => (0.0, 1.0),
            Continuous::OutletJump { h } => (1.0, h),
        }
    }
}

/// Draws `n` samples of a shape-valued reference law.
pub type CensusSampler = fn(seed: u64, n: u64) -> Census;

#[derive(Debug, Clone)]
pub enum LawShape {
    Continuous(Continuous),
    /// Probabilities on labelled bins; they sum to one.
    Discrete { labels: Vec<String>, probs: Vec<f64> },
    /// Success probability of a single event.
    Proportion(f64),
    /// Only available through samples; compared by two-sample TV.
    Sampled(CensusSampler),
}

#[derive(Debug, Clone)]
pub struct Law {
    pub name: String,
    pub params: serde_json::Value,
    pub shape: LawShape,
}

#[derive(Debug, Clone)]
pub struct TestSpec {
    pub estimand: String,
    pub bin: Option<String>,
    pub law: Law,
    pub kind: StatKind,
    pub threshold: f64,
    /// Documented sample size; null calibration draws this many.
    pub n: u64,
    /// Size of the reference sample for sampled laws.
    pub reference_n: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Reals(Vec<f64>),
    /// Counts aligned with the labels of a discrete law.
    Bins(Vec<u64>),
    Hits { hits: u64, n: u64 },
    Labels(Census),
}

impl Data {
    pub fn len(&self) -> u64 {
        match self {
            Data::Reals(v) => v.len() as u64,
            Data::Bins(c) => c.iter().sum(),
            Data::Hits { n, .. } => *n,
            Data::Labels(c) => c.total(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Group {
    pub spec: TestSpec,
    pub data: Data,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub bin: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub law: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub kind: StatKind,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub estimand: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bin: Option<String>,
    pub n: u64,
    pub histogram: Vec<HistBin>,
    pub reference: Reference,
    pub stat: Statistic,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl StatReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// `bin,count` rows; an empty histogram gives the header alone.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bin,count\n");
        for b in &self.histogram {
            s.push_str(&format!("{},{}\n", csv_field(&b.bin), b.count));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// Statistics

/// Kolmogorov-Smirnov distance between the sample and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Total variation between bin counts and probabilities on the same bins.
pub fn tv_distance(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let n = counts.iter().sum::<u64>() as f64;
    0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n - p).abs()).sum::<f64>()
}

/// Pearson statistic and the 0.999 quantile of its chi-square limit.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, f64) {
    let n = counts.iter().sum::<u64>() as f64;
    let stat = counts.iter().zip(probs).map(|(&c, &p)| (c as f64 - n * p).powi(2) / (n * p)).sum();
    (stat, chi_square_quantile(counts.len() - 1, 0.999))
}

pub fn chi_square_quantile(df: usize, q: f64) -> f64 {
    ChiSquared::new(df as f64).expect("positive degrees of freedom").inverse_cdf(q)
}

/// Total variation between two normalized shape histograms. Both need
/// samples; for a meaningful comparison at least `10^4` each.
pub fn two_sample_tv(a: &Census, b: &Census) -> f64 {
    let (na, nb) = (a.total() as f64, b.total() as f64);
    assert!(na > 0.0 && nb > 0.0, "empty census");
    let mut sum = 0.0;
    for (k, &ca) in &a.counts {
        let cb = b.counts.get(k).copied().unwrap_or(0);
        sum += (ca as f64 / na - cb as f64 / nb).abs();
    }
    for (k, &cb) in &b.counts {
        if !a.counts.contains_key(k) {
            sum += cb as f64 / nb;
        }
    }
    0.5 * sum
}

/// Counts of `values` in the bins `lo, lo+1, …, hi` and a final `> hi` bin.
pub fn bin_counts(values: impl IntoIterator<Item = u64>, lo: u64, hi: u64) -> Vec<u64> {
    let mut out = vec![0u64; (hi - lo + 2) as usize];
    for v in values {
        assert!(v >= lo, "value {v} below the first bin {lo}");
        out[(v.min(hi + 1) - lo) as usize] += 1;
    }
    out
}

pub fn integer_labels(lo: u64, hi: u64) -> Vec<String> {
    let mut l: Vec<String> = (lo..=hi).map(|k| k.to_string()).collect();
    l.push(format!(">{hi}"));
    l
}

/// Discrete law on `lo..=hi` plus the remaining mass as a tail bin.
pub fn truncated_law(lo: u64, hi: u64, pmf: impl Fn(u64) -> f64) -> LawShape {
    let mut probs: Vec<f64> = (lo..=hi).map(pmf).collect();
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));
    LawShape::Discrete { labels: integer_labels(lo, hi), probs }
}

// ---------------------------------------------------------------------------
// Evaluation

fn continuous_histogram(xs: &[f64], (a, b): (f64, f64), bins: usize) -> Vec<HistBin> {
    let mut counts = vec![0u64; bins];
    let w = (b - a) / bins as f64;
    for &x in xs {
        let k = (((x - a) / w).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistBin { bin: format!("{:.4}", a + k as f64 * w), count })
        .collect()
}

fn census_histogram(c: &Census) -> Vec<HistBin> {
    let mut v: Vec<HistBin> = c.counts.iter().map(|(k, &count)| HistBin { bin: k.clone(), count }).collect();
    v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.bin.cmp(&b.bin)));
    v
}

fn statistic(spec: &TestSpec, data: &Data, reference_seed: u64) -> (f64, Vec<String>) {
    let mut notes = Vec::new();
    let value = match (&spec.law.shape, data, spec.kind) {
        (LawShape::Continuous(law), Data::Reals(xs), StatKind::Ks) => ks_statistic(xs, |x| law.cdf(x)),
        (LawShape::Discrete { probs, .. }, Data::Bins(c), StatKind::Tv) => tv_distance(c, probs),
        (LawShape::Discrete { probs, .. }, Data::Bins(c), StatKind::ChiSquare) => chi_square(c, probs).0,
        (LawShape::Proportion(p), Data::Hits { hits, n }, StatKind::RelErr) => (*hits as f64 / *n as f64 - p).abs() / p,
        (LawShape::Sampled(draw), Data::Labels(c), StatKind::Tv) => {
            let reference = draw(reference_seed, spec.reference_n);
            notes.push(format!("reference sample of {}", reference.total()));
            two_sample_tv(c, &reference)
        }
        (shape, data, kind) => panic!("no {kind:?} comparison between {shape:?} and {data:?}"),
    };
    (value, notes)
}

/// Compares one group against its reference law. Sampled references are
/// drawn from `reference_seed`.
pub fn evaluate(group: &Group, reference_seed: u64) -> StatReport {
    let spec = &group.spec;
    let (value, mut notes) = if group.data.is_empty() {
        (f64::INFINITY, vec!["no samples".to_string()])
    } else {
        statistic(spec, &group.data, reference_seed)
    };
    notes.extend(group.notes.iter().cloned());
    let histogram = match (&group.data, &spec.law.shape) {
        (Data::Reals(xs), LawShape::Continuous(law)) => continuous_histogram(xs, law.support(), 20),
        (Data::Bins(c), LawShape::Discrete { labels, .. }) => {
            labels.iter().zip(c).map(|(l, &count)| HistBin { bin: l.clone(), count }).collect()
        }
        (Data::Hits { hits, n }, _) => {
            vec![HistBin { bin: "hit".into(), count: *hits }, HistBin { bin: "miss".into(), count: n - hits }]
        }
        (Data::Labels(c), _) => census_histogram(c),
        _ => Vec::new(),
    };
    StatReport {
        estimand: spec.estimand.clone(),
        bin: spec.bin.clone(),
        n: group.data.len(),
        histogram,
        reference: Reference { law: spec.law.name.clone(), params: spec.law.params.clone() },
        stat: Statistic { kind: spec.kind, value, threshold: spec.threshold },
        verdict: if value <= spec.threshold { Verdict::Pass } else { Verdict::Fail },
        notes,
    }
}

// ---------------------------------------------------------------------------
// Null calibration

/// Draws data of the documented size from the reference law itself.
pub fn null_data(spec: &TestSpec, rng: &mut Stream, seed: u64) -> Data {
    let n = spec.n;
    match &spec.law.shape {
        // the KS statistic of F(X) with X ~ F does not depend on F
        LawShape::Continuous(_) => Data::Reals((0..n).map(|_| rng.random::<f64>()).collect()),
        LawShape::Discrete { probs, .. } => {
            let mut counts = vec![0u64; probs.len()];
            let mut left = n;
            let mut mass = 1.0;
            for (k, &p) in probs.iter().enumerate() {
                if left == 0 {
                    break;
                }
                let c = if k + 1 == probs.len() || mass <= p {
                    left
                } else {
                    Binomial::new(left, (p / mass).clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
                };
                counts[k] = c;
                left -= c;
                mass -= p;
            }
            Data::Bins(counts)
        }
        LawShape::Proportion(p) => Data::Hits { hits: Binomial::new(n, *p).expect("valid binomial").sample(rng), n },
        LawShape::Sampled(draw) => Data::Labels(draw(seed, n)),
    }
}

/// Statistic values of the test run on `reps` samples drawn from its own
/// reference law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub estimand: String,
    pub bin: Option<String>,
    pub reps: u32,
    pub passes: u32,
    pub threshold: f64,
    pub worst: f64,
}

impl Calibration {
    pub fn acceptable(&self) -> bool {
        self.passes * 100 >= 95 * self.reps
    }
}

pub fn null_calibration(spec: &TestSpec, reps: u32, seed: u64) -> Calibration {
    let tag = 0x6e75_6c6c;
    let mut spec = spec.clone();
    if let LawShape::Continuous(_) = spec.law.shape {
        spec.law.shape = LawShape::Continuous(Continuous::Uniform01);
    }
    // one reference sample serves every repetition
    let reference = match spec.law.shape {
        LawShape::Sampled(draw) => Some(draw(rng::derive(seed, &[tag, u64::MAX]), spec.reference_n)),
        _ => None,
    };
    let mut passes = 0;
    let mut worst = 0.0f64;
    for r in 0..reps as u64 {
        let mut rng = rng::stream(seed, &[tag, r]);
        let data = null_data(&spec, &mut rng, rng::derive(seed, &[tag, r, 1]));
        let value = match (&reference, &data) {
            (Some(reference), Data::Labels(c)) => two_sample_tv(c, reference),
            _ => evaluate(&Group { spec: spec.clone(), data, notes: Vec::new() }, 0).stat.value,
        };
        worst = worst.max(value);
        passes += u32::from(value <= spec.threshold);
    }
    Calibration { estimand: spec.estimand.clone(), bin: spec.bin.clone(), reps, passes, threshold: spec.threshold, worst }
}

// ---------------------------------------------------------------------------
// Replica execution

/// `f(0), …, f(n-1)` spread over `threads` workers; the output order (and
/// so any aggregate) does not depend on the thread count.
pub fn par_map<T: Send>(n: u64, threads: usize, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let threads = threads.max(1).min(n.max(1) as usize);
    if threads == 1 {
        return (0..n).map(f).collect();
    }
    let f = &f;
    let parts: Vec<Vec<(u64, T)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads as u64)
            .map(|t| s.spawn(move || (t..n).step_by(threads).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for (i, v) in parts.into_iter().flatten() {
        slots[i as usize] = Some(v);
    }
    slots.into_iter().map(|v| v.expect("every index computed")).collect()
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Merges label counts; associative and order independent.
pub fn merge_census(into: &mut Census, other: &Census) {
    for (k, &c) in &other.counts {
        *into.counts.entry(k.clone()).or_default() += c;
    }
    into.truncated += other.truncated;
}

pub(crate) fn census_of(labels: impl IntoIterator<Item = String>) -> Census {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    Census { counts, truncated: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_a_perfect_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&xs, |x| x) - 0.005).abs() < 1e-12);
        assert!((ks_statistic(&[0.5], |x| x) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tv_and_chi_square() {
        assert_eq!(tv_distance(&[5, 5], &[0.5, 0.5]), 0.0);
        assert!((tv_distance(&[10, 0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
        let (stat, q) = chi_square(&[30, 20], &[0.5, 0.5]);
        assert!((stat - 2.0).abs() < 1e-12);
        assert!((q - 10.827566).abs() < 1e-5);
    }

    #[test]
    fn two_sample_extremes() {
        let a = census_of(["x".to_string(), "y".to_string()]);
        let b = census_of(["z".to_string()]);
        assert_eq!(two_sample_tv(&a, &a), 0.0);
        assert_eq!(two_sample_tv(&a, &b), 1.0);
    }

    #[test]
    fn binning() {
        assert_eq!(bin_counts([1, 2, 2, 9, 40], 1, 3), vec![1, 2, 0, 2]);
        assert_eq!(integer_labels(1, 2), vec!["1", "2", ">2"]);
    }

    #[test]
    fn parallel_map_is_ordered() {
        let a = par_map(1000, 1, |i| i * i);
        let b = par_map(1000, 4, |i| i * i);
        assert_eq!(a, b);
    }

    #[test]
    fn null_discrete_counts_sum() {
        let spec = TestSpec {
            estimand: "t".into(),
            bin: None,
            law: Law { name: "borel".into(), params: serde_json::json!({}), shape: truncated_law(1, 30, crate::gw::borel_pmf) },
            kind: StatKind::Tv,
            threshold: 0.01,
            n: 100_000,
            reference_n: 0,
        };
        let mut rng = rng::stream(1, &[]);
        assert_eq!(null_data(&spec, &mut rng, 0).len(), 100_000);
        let cal = null_calibration(&spec, 20, 5);
        assert!(cal.passes >= 19, "{cal:?}");
    }

    #[test]
    fn report_verdict_and_csv() {
        let spec = TestSpec {
            estimand: "u".into(),
            bin: None,
            law: Law { name: "uniform".into(), params: serde_json::json!({}), shape: LawShape::Continuous(Continuous::Uniform01) },
            kind: StatKind::Ks,
            threshold: 0.2,
            n: 10,
            reference_n: 0,
        };
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let r = evaluate(&Group { spec: spec.clone(), data: Data::Reals(xs), notes: vec![] }, 0);
        assert!(r.passed());
        assert_eq!(r.histogram.iter().map(|b| b.count).sum::<u64>(), 10);
        let empty = evaluate(&Group { spec, data: Data::Reals(vec![]), notes: vec![] }, 0);
        assert!(!empty.passed());
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["estimand", "n", "histogram", "reference", "stat", "verdict"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["stat"]["kind"], "KS");
    }
}

//! Marked point sets over integer intervals.
//!
//! A [`PointSet`] is a finite window: the points with `x` in the realized
//! columns `[lo, hi + 1)` and `y` at most the height cap. Generated sets
//! remember their [`GeneratorSpec`] so the window can be widened or the cap
//! raised without touching points that already exist.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const MAX_POINTS: f64 = 2e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn column(&self) -> i64 {
        self.x.floor() as i64
    }
}

/// An integer interval; `None` stands for an infinite end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
}

impl IntervalSpec {
    pub fn finite(lo: i64, hi: i64) -> Self {
        IntervalSpec { lo: Some(lo), hi: Some(hi) }
    }

    pub fn integers() -> Self {
        IntervalSpec { lo: None, hi: None }
    }

    pub fn half_line(lo: i64) -> Self {
        IntervalSpec { lo: Some(lo), hi: None }
    }

    pub fn bounds(&self) -> Result<(i64, i64)> {
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) if lo <= hi => Ok((lo, hi)),
            (Some(lo), Some(hi)) => Err(Error::EmptyInterval { lo, hi }),
            _ => Err(Error::InfiniteInterval),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    /// Unit-rate Poisson process on the upper half-plane.
    PoissonUnitRate,
    /// `sigma` uniform points in each `[n, n+1) x [0, sigma)`.
    RegularTree { sigma: u32 },
    /// `sigma - n` uniform points in `[n, n+1) x [0, sigma)` for `0 <= n < sigma`.
    CompleteGraph { sigma: u32 },
}

impl Model {
    fn tag(&self) -> u64 {
        match self {
            Model::PoissonUnitRate => 1,
            Model::RegularTree { sigma } => 2 | (u64::from(*sigma) << 8),
            Model::CompleteGraph { sigma } => 3 | (u64::from(*sigma) << 8),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Model::RegularTree { sigma } | Model::CompleteGraph { sigma } if sigma < 2 => {
                Err(Error::BadSigma(sigma))
            }
            _ => Ok(()),
        }
    }

    /// Expected number of points of one column below `cap`.
    fn column_mass(&self, n: i64, cap: f64) -> f64 {
        match *self {
            Model::PoissonUnitRate => cap,
            Model::RegularTree { sigma } => f64::from(sigma) * (cap / f64::from(sigma)).min(1.0),
            Model::CompleteGraph { sigma } => {
                let k = (i64::from(sigma) - n).max(0) as f64;
                if n < 0 {
                    0.0
                } else {
                    k * (cap / f64::from(sigma)).min(1.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub model: Model,
    pub seed: u64,
    pub interval: IntervalSpec,
}

impl GeneratorSpec {
    pub fn poisson(seed: u64, interval: IntervalSpec) -> Self {
        GeneratorSpec { model: Model::PoissonUnitRate, seed, interval }
    }

    /// Appends the points of column `n` with height in `(above, upto]`
    /// (`[0, upto]` when `above` is `None`).
    pub fn column_band(&self, n: i64, above: Option<f64>, upto: f64, out: &mut Vec<Point>) {
        let keep = |y: f64| y <= upto && above.is_none_or(|a| y > a);
        let column_x = |u: f64| {
            let x = n as f64 + u;
            let end = (n + 1) as f64;
            if x >= end {
                end.next_down()
            } else {
                x
            }
        };
        match self.model {
            Model::PoissonUnitRate => {
                let first = above.map_or(0, |a| a.max(0.0).floor() as u64);
                let last = upto.max(0.0).ceil() as u64;
                let unit = Poisson::new(1.0).expect("unit rate");
                for layer in first..last.max(first + 1) {
                    let mut s = rng::stream(self.seed, &[self.model.tag(), n as u64, layer]);
                    let count = unit.sample(&mut s) as usize;
                    for _ in 0..count {
                        let u: f64 = s.random();
                        let v: f64 = s.random();
                        let y = layer as f64 + v;
                        if keep(y) {
                            out.push(Point::new(column_x(u), y));
                        }
                    }
                }
            }
            Model::RegularTree { sigma } | Model::CompleteGraph { sigma } => {
                let count = match self.model {
                    Model::RegularTree { .. } => i64::from(sigma),
                    _ if n < 0 => 0,
                    _ => (i64::from(sigma) - n).max(0),
                };
                if count == 0 {
                    return;
                }
                let mut s = rng::stream(self.seed, &[self.model.tag(), n as u64, 0]);
                let sf = f64::from(sigma);
                for _ in 0..count {
                    let u: f64 = s.random();
                    let v: f64 = s.random();
                    let y = v * sf;
                    if keep(y) {
                        out.push(Point::new(column_x(u), y));
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    Generated(GeneratorSpec),
    File,
}

/// A finite window of a marked point set, stored column by column with
/// each column sorted by height.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    lo: i64,
    hi: i64,
    height_cap: f64,
    points: Vec<Point>,
    col_start: Vec<usize>,
    origin: Origin,
}

fn sort_column(col: &mut [Point]) {
    col.sort_by(|a, b| a.y.total_cmp(&b.y));
}

fn check_distinct(points: &[Point]) -> Result<()> {
    let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    match ys.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(Error::DuplicateHeight(w[0])),
        None => Ok(()),
    }
}

impl PointSet {
    /// Builds a window from explicit points, validating every point.
    pub fn from_points(lo: i64, hi: i64, cap: f64, mut points: Vec<Point>) -> Result<Self> {
        if lo > hi {
            return Err(Error::EmptyInterval { lo, hi });
        }
        for p in &points {
            if !(p.x.is_finite() && p.y.is_finite() && p.y >= 0.0) {
                return Err(Error::BadPoint { x: p.x, y: p.y });
            }
            let c = p.column();
            if c < lo || c > hi || p.y > cap {
                return Err(Error::PointOutsideInterval { x: p.x, y: p.y, lo, hi });
            }
        }
        check_distinct(&points)?;
        points.sort_by(|a, b| a.column().cmp(&b.column()).then(a.y.total_cmp(&b.y)));
        let width = (hi - lo + 1) as usize;
        let mut col_start = vec![0usize; width + 1];
        for p in &points {
            col_start[(p.column() - lo) as usize + 1] += 1;
        }
        for i in 0..width {
            col_start[i + 1] += col_start[i];
        }
        Ok(PointSet { lo, hi, height_cap: cap, points, col_start, origin: Origin::File })
    }

    fn from_columns(lo: i64, cap: f64, columns: Vec<Vec<Point>>, origin: Origin) -> Result<Self> {
        let mut points = Vec::with_capacity(columns.iter().map(Vec::len).sum());
        let mut col_start = Vec::with_capacity(columns.len() + 1);
        col_start.push(0);
        for mut col in columns {
            sort_column(&mut col);
            points.extend(col);
            col_start.push(points.len());
        }
        check_distinct(&points)?;
        let hi = lo + col_start.len() as i64 - 2;
        Ok(PointSet { lo, hi, height_cap: cap, points, col_start, origin })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn interval(&self) -> IntervalSpec {
        IntervalSpec::finite(self.lo, self.hi)
    }

    pub fn height_cap(&self) -> f64 {
        self.height_cap
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of column `n`, sorted by height; empty outside the window.
    pub fn column(&self, n: i64) -> &[Point] {
        if n < self.lo || n > self.hi {
            return &[];
        }
        let i = (n - self.lo) as usize;
        &self.points[self.col_start[i]..self.col_start[i + 1]]
    }

    /// Number of points of column `n` with `y < h` (or `y <= h` when `closed`).
    pub fn count_below(&self, n: i64, h: f64, closed: bool) -> usize {
        let col = self.column(n);
        if closed {
            col.partition_point(|p| p.y <= h)
        } else {
            col.partition_point(|p| p.y < h)
        }
    }

    /// `|[a, b) x [0, h]|` (or `[0, h)`), restricted to realized columns.
    pub fn count_rect(&self, a: i64, b: i64, h: f64, closed: bool) -> usize {
        (a.max(self.lo)..b.min(self.hi + 1)).map(|n| self.count_below(n, h, closed)).sum()
    }

    fn spec(&self) -> Result<&GeneratorSpec> {
        match &self.origin {
            Origin::Generated(s) => Ok(s),
            Origin::File => Err(Error::NotGeneratorBacked),
        }
    }

    /// The sub-window `[lo, hi] x [0, cap]`.
    pub fn restrict(&self, lo: i64, hi: i64, cap: f64) -> Result<PointSet> {
        if lo < self.lo || hi > self.hi || lo > hi {
            return Err(Error::OutsideWindow { lo, hi, wlo: self.lo, whi: self.hi });
        }
        let columns = (lo..=hi)
            .map(|n| self.column(n).iter().copied().filter(|p| p.y <= cap).collect())
            .collect();
        PointSet::from_columns(lo, cap.min(self.height_cap), columns, self.origin.clone())
    }

    /// Shifts every point by the integer `n` along the x axis.
    pub fn shifted(&self, n: i64) -> PointSet {
        let mut out = self.clone();
        for p in &mut out.points {
            p.x += n as f64;
        }
        out.lo += n;
        out.hi += n;
        out.origin = Origin::File;
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("interval {} {}\n", self.lo, self.hi);
        for p in &self.points {
            let _ = writeln!(s, "{} {}", p.x, p.y);
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PointSet> {
        PointSet::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<PointSet> {
        let mut interval = None;
        let mut points = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Malformed { line: i + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "interval" {
                if fields.len() != 3 || interval.is_some() {
                    return Err(bad("expected a single `interval LO HI` header"));
                }
                let lo = fields[1].parse::<i64>().map_err(|_| bad("bad interval end"))?;
                let hi = fields[2].parse::<i64>().map_err(|_| bad("bad interval end"))?;
                interval = Some((lo, hi));
                continue;
            }
            if fields.len() != 2 {
                return Err(bad("expected `x y`"));
            }
            let x = fields[0].parse::<f64>().map_err(|_| bad("bad x"))?;
            let y = fields[1].parse::<f64>().map_err(|_| bad("bad y"))?;
            if !(x.is_finite() && y.is_finite() && y >= 0.0) {
                return Err(Error::BadPoint { x, y });
            }
            points.push(Point::new(x, y));
        }
        let (lo, hi) = match interval {
            Some(iv) => iv,
            None if points.is_empty() => {
                return Err(Error::Malformed { line: 0, msg: "no points and no interval header".into() })
            }
            None => {
                let lo = points.iter().map(Point::column).min().unwrap_or(0);
                let hi = points.iter().map(Point::column).max().unwrap_or(0);
                (lo, hi)
            }
        };
        PointSet::from_points(lo, hi, f64::INFINITY, points)
    }
}

fn generate_columns(spec: &GeneratorSpec, lo: i64, hi: i64, above: Option<f64>, cap: f64) -> Vec<Vec<Point>> {
    (lo..=hi)
        .map(|n| {
            let mut col = Vec::new();
            spec.column_band(n, above, cap, &mut col);
            col
        })
        .collect()
}

fn check_volume(spec: &GeneratorSpec, lo: i64, hi: i64, cap: f64) -> Result<()> {
    let expected: f64 = match spec.model {
        Model::PoissonUnitRate => cap * (hi - lo + 1) as f64,
        _ => (lo..=hi).map(|n| spec.model.column_mass(n, cap)).sum(),
    };
    if !(expected <= MAX_POINTS) {
        return Err(Error::TooManyPoints { expected, limit: MAX_POINTS });
    }
    Ok(())
}

/// Realizes `spec` on its (finite) interval up to height `height_cap`.
pub fn generate(spec: &GeneratorSpec, height_cap: f64) -> Result<PointSet> {
    let (lo, hi) = spec.interval.bounds()?;
    generate_window(spec, lo, hi, height_cap)
}

/// Realizes columns `[lo, hi]` of `spec` regardless of its nominal interval.
pub fn generate_window(spec: &GeneratorSpec, lo: i64, hi: i64, height_cap: f64) -> Result<PointSet> {
    spec.model.validate()?;
    if !(height_cap > 0.0) {
        return Err(Error::NonPositiveCap(height_cap));
    }
    if lo > hi {
        return Err(Error::EmptyInterval { lo, hi });
    }
    check_volume(spec, lo, hi, height_cap)?;
    let columns = generate_columns(spec, lo, hi, None, height_cap);
    PointSet::from_columns(lo, height_cap, columns, Origin::Generated(*spec))
}

pub fn extend_left(ps: &PointSet, new_lo: i64) -> Result<PointSet> {
    let spec = ps.spec()?;
    if new_lo >= ps.lo {
        return Err(Error::NotExtended { lo: ps.lo, new_lo });
    }
    check_volume(spec, new_lo, ps.lo - 1, ps.height_cap)?;
    let mut columns = generate_columns(spec, new_lo, ps.lo - 1, None, ps.height_cap);
    columns.extend((ps.lo..=ps.hi).map(|n| ps.column(n).to_vec()));
    PointSet::from_columns(new_lo, ps.height_cap, columns, ps.origin.clone())
}

pub fn extend_right(ps: &PointSet, new_hi: i64) -> Result<PointSet> {
    let spec = ps.spec()?;
    if new_hi <= ps.hi {
        return Err(Error::NotExtended { lo: ps.hi, new_lo: new_hi });
    }
    check_volume(spec, ps.hi + 1, new_hi, ps.height_cap)?;
    let mut columns: Vec<Vec<Point>> = (ps.lo..=ps.hi).map(|n| ps.column(n).to_vec()).collect();
    columns.extend(generate_columns(spec, ps.hi + 1, new_hi, None, ps.height_cap));
    PointSet::from_columns(ps.lo, ps.height_cap, columns, ps.origin.clone())
}

pub fn raise_cap(ps: &PointSet, new_cap: f64) -> Result<PointSet> {
    let spec = ps.spec()?;
    if !(new_cap > ps.height_cap) {
        return Err(Error::CapNotRaised { old: ps.height_cap, new: new_cap });
    }
    check_volume(spec, ps.lo, ps.hi, new_cap)?;
    let fresh = generate_columns(spec, ps.lo, ps.hi, Some(ps.height_cap), new_cap);
    let columns = (ps.lo..=ps.hi)
        .zip(fresh)
        .map(|(n, mut extra)| {
            extra.extend_from_slice(ps.column(n));
            extra
        })
        .collect();
    PointSet::from_columns(ps.lo, new_cap, columns, ps.origin.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Points in the closed upper half-plane, locally finite.
    HalfPlane = 1,
    /// Every vertex has enough points somewhere to its left.
    EnoughMass = 2,
    /// Distinct heights.
    DistinctHeights = 3,
    /// Infinitely many `m < n` with more than `n - m` points below 1 in `[m, n)`.
    LeftSurplus = 4,
    /// For `λ < 1`, finitely many `m < n` with at least `n - m` points below `λ`.
    LeftSubcritical = 5,
    /// The rightward version of 5.
    RightSubcritical = 6,
    /// For `λ > 1`, the walk `S^{m,λ}` is eventually positive.
    RightSupercritical = 7,
    /// Every walk `S^{k,1}` dies.
    CriticalWalksDie = 8,
}

impl Condition {
    pub const ALL: [Condition; 8] = [
        Condition::HalfPlane,
        Condition::EnoughMass,
        Condition::DistinctHeights,
        Condition::LeftSurplus,
        Condition::LeftSubcritical,
        Condition::RightSubcritical,
        Condition::RightSupercritical,
        Condition::CriticalWalksDie,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsOnWindow,
    Violated,
    UndecidableOnWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub verdict: Verdict,
    pub detail: String,
    /// Condition-specific counts found on the window.
    pub witness: Vec<u64>,
}

/// Per-column counts below a level, as prefix sums over `[lo, hi + 1)`.
struct Prefix(Vec<i64>);

impl Prefix {
    fn new(points: &[Point], lo: i64, hi: i64, level: f64, closed: bool) -> Self {
        let width = (hi - lo + 1) as usize;
        let mut c = vec![0i64; width + 1];
        for p in points {
            let n = p.column();
            if n >= lo && n <= hi && (p.y < level || (closed && p.y == level)) {
                c[(n - lo) as usize + 1] += 1;
            }
        }
        for i in 0..width {
            c[i + 1] += c[i];
        }
        Prefix(c)
    }

    /// `P[j] - j` with `j` relative to `lo`.
    fn excess(&self, j: usize) -> i64 {
        self.0[j] - j as i64
    }
}

/// Evaluates the regularity conditions on the raw window `[lo, hi] x [0, cap]`.
pub fn check_points(points: &[Point], lo: i64, hi: i64, cap: f64, which: &[Condition]) -> Vec<ConditionReport> {
    let width = (hi - lo + 1).max(0) as usize;
    let report = |condition, verdict, detail: String, witness: Vec<u64>| ConditionReport {
        condition,
        verdict,
        detail,
        witness,
    };
    let low_cap = |c: Condition, level: f64| {
        report(c, Verdict::UndecidableOnWindow, format!("height cap {cap} is below level {level}"), vec![])
    };
    which
        .iter()
        .map(|&c| match c {
            Condition::HalfPlane => {
                let bad = points.iter().filter(|p| !(p.y >= 0.0 && p.y.is_finite() && p.x.is_finite())).count();
                if bad == 0 {
                    report(c, Verdict::HoldsOnWindow, format!("{} points, all in the upper half-plane", points.len()), vec![])
                } else {
                    report(c, Verdict::Violated, format!("{bad} points below the axis or non-finite"), vec![bad as u64])
                }
            }
            Condition::DistinctHeights => match check_distinct(points) {
                Ok(()) => report(c, Verdict::HoldsOnWindow, "all heights distinct".into(), vec![]),
                Err(_) => report(c, Verdict::Violated, "repeated height".into(), vec![]),
            },
            Condition::EnoughMass => {
                let p = Prefix::new(points, lo, hi, f64::INFINITY, true);
                let mut best = p.excess(0);
                let mut failing = Vec::new();
                for j in 1..width {
                    if p.excess(j) < best {
                        failing.push(lo + j as i64);
                    }
                    best = best.min(p.excess(j));
                }
                if failing.is_empty() {
                    report(c, Verdict::HoldsOnWindow, "every vertex has a supporting stretch".into(), vec![])
                } else {
                    report(
                        c,
                        Verdict::Violated,
                        format!("{} vertices lack mass, first {}", failing.len(), failing[0]),
                        vec![failing.len() as u64],
                    )
                }
            }
            Condition::LeftSurplus => {
                if cap < 1.0 {
                    return low_cap(c, 1.0);
                }
                let p = Prefix::new(points, lo, hi, 1.0, true);
                let min_count = (1..width)
                    .map(|n| (0..n).filter(|&m| p.excess(n) > p.excess(m)).count() as u64)
                    .min()
                    .unwrap_or(0);
                report(
                    c,
                    Verdict::UndecidableOnWindow,
                    format!("every vertex has at least {min_count} surplus stretches to its left"),
                    vec![min_count],
                )
            }
            Condition::LeftSubcritical | Condition::RightSubcritical => {
                let mut witness = Vec::new();
                let mut parts = Vec::new();
                for level in [0.5, 0.9] {
                    if cap < level {
                        return low_cap(c, level);
                    }
                    let p = Prefix::new(points, lo, hi, level, true);
                    let (mut most, mut farthest) = (0u64, 0u64);
                    for a in 0..=width {
                        let hits: Vec<usize> = if c == Condition::LeftSubcritical {
                            (0..a).filter(|&m| p.excess(a) >= p.excess(m)).map(|m| a - m).collect()
                        } else {
                            (a + 1..=width).filter(|&n| p.excess(n) >= p.excess(a)).map(|n| n - a).collect()
                        };
                        most = most.max(hits.len() as u64);
                        farthest = farthest.max(hits.iter().copied().max().unwrap_or(0) as u64);
                    }
                    witness.extend([most, farthest]);
                    parts.push(format!("λ={level}: at most {most} dense stretches per vertex, longest {farthest}"));
                }
                report(c, Verdict::UndecidableOnWindow, parts.join("; "), witness)
            }
            Condition::RightSupercritical => {
                let mut witness = Vec::new();
                let mut parts = Vec::new();
                for level in [1.5, 2.0] {
                    if cap < level {
                        return low_cap(c, level);
                    }
                    let p = Prefix::new(points, lo, hi, level, true);
                    let mut last = 0u64;
                    for m in 0..width {
                        for n in m + 1..=width {
                            if p.0[n] - p.0[m] <= (n - m) as i64 {
                                last = last.max((n - m) as u64);
                            }
                        }
                    }
                    witness.push(last);
                    parts.push(format!("λ={level}: latest non-positive step {last}"));
                }
                report(c, Verdict::UndecidableOnWindow, parts.join("; "), witness)
            }
            Condition::CriticalWalksDie => {
                if cap < 1.0 {
                    return low_cap(c, 1.0);
                }
                let p = Prefix::new(points, lo, hi, 1.0, true);
                let alive = (0..width).filter(|&k| !(k + 1..=width).any(|n| p.excess(n) < p.excess(k))).count();
                if alive == 0 {
                    report(c, Verdict::HoldsOnWindow, "every walk dies inside the window".into(), vec![0])
                } else {
                    report(
                        c,
                        Verdict::UndecidableOnWindow,
                        format!("{alive} walks still alive at the window edge"),
                        vec![alive as u64],
                    )
                }
            }
        })
        .collect()
}

impl PointSet {
    pub fn check_conditions(&self, which: &[Condition]) -> Vec<ConditionReport> {
        check_points(&self.points, self.lo, self.hi, self.height_cap, which)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson(seed: u64, lo: i64, hi: i64) -> GeneratorSpec {
        GeneratorSpec::poisson(seed, IntervalSpec::finite(lo, hi))
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = poisson(11, 0, 9);
        let a = generate(&spec, 3.0).unwrap();
        let b = generate(&spec, 3.0).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().all(|p| p.y <= 3.0 && p.x >= 0.0 && p.x < 10.0));
    }

    #[test]
    fn regular_tree_column() {
        let spec = GeneratorSpec { model: Model::RegularTree { sigma: 4 }, seed: 5, interval: IntervalSpec::finite(3, 3) };
        let ps = generate(&spec, 4.0).unwrap();
        assert_eq!(ps.len(), 4);
        assert!(ps.points().iter().all(|p| p.column() == 3 && p.y < 4.0));
    }

    #[test]
    fn complete_graph_columns() {
        let spec = GeneratorSpec { model: Model::CompleteGraph { sigma: 6 }, seed: 5, interval: IntervalSpec::finite(0, 6) };
        let ps = generate(&spec, 6.0).unwrap();
        for n in 0..=6 {
            assert_eq!(ps.column(n).len(), (6 - n) as usize);
        }
        let bad = GeneratorSpec { model: Model::RegularTree { sigma: 1 }, ..spec };
        assert_eq!(generate(&bad, 1.0), Err(Error::BadSigma(1)));
    }

    #[test]
    fn extension_and_cap_are_refinements() {
        let ps = generate(&poisson(3, 0, 9), 2.0).unwrap();
        let wide = extend_left(&ps, -10).unwrap();
        assert_eq!(wide.restrict(0, 9, 2.0).unwrap(), ps);
        let twice = extend_left(&extend_left(&ps, -10).unwrap(), -20).unwrap();
        let once = extend_left(&ps, -20).unwrap();
        assert_eq!(twice, once);
        let tall = raise_cap(&ps, 3.5).unwrap();
        assert_eq!(tall.restrict(0, 9, 2.0).unwrap(), ps);
        assert_eq!(tall, generate(&poisson(3, 0, 9), 3.5).unwrap());
        assert!(matches!(raise_cap(&ps, 2.0), Err(Error::CapNotRaised { .. })));
        let right = extend_right(&ps, 20).unwrap();
        assert_eq!(right.restrict(0, 9, 2.0).unwrap(), ps);
    }

    #[test]
    fn bad_generation_requests() {
        assert_eq!(generate(&poisson(0, 0, 3), 0.0), Err(Error::NonPositiveCap(0.0)));
        assert!(matches!(generate(&poisson(0, 0, 1 << 40), 1.0), Err(Error::TooManyPoints { .. })));
        let file = PointSet::parse("0.2 0.5\n").unwrap();
        assert_eq!(extend_left(&file, -3), Err(Error::NotGeneratorBacked));
        assert_eq!(raise_cap(&file, 9.0).unwrap_err(), Error::NotGeneratorBacked);
    }

    #[test]
    fn file_round_trip() {
        let ps = PointSet::parse("0.2 0.5\n1.3 0.9\n").unwrap();
        assert_eq!((ps.lo(), ps.hi(), ps.len()), (0, 1, 2));
        let again = PointSet::parse(&ps.to_text()).unwrap();
        assert_eq!(again.points(), ps.points());
        let gen = generate(&poisson(9, -3, 5), 2.5).unwrap();
        let back = PointSet::parse(&gen.to_text()).unwrap();
        assert_eq!(back.points(), gen.points());
        assert_eq!((back.lo(), back.hi()), (-3, 5));
        assert!(matches!(PointSet::parse("0.2 -1"), Err(Error::BadPoint { .. })));
        assert!(matches!(PointSet::parse("0.2 0.5\n0.7 0.5\n"), Err(Error::DuplicateHeight(_))));
        assert!(matches!(PointSet::parse("# c\n0.2 zz"), Err(Error::Malformed { line: 2, .. })));
        let commented = PointSet::parse("interval -2 4 # header\n0.5 1.0 # a point\n").unwrap();
        assert_eq!((commented.lo(), commented.hi()), (-2, 4));
    }

    #[test]
    fn conditions_on_small_windows() {
        let tied = [Point::new(0.1, 0.5), Point::new(0.7, 0.5)];
        let r = check_points(&tied, 0, 1, 1.0, &[Condition::DistinctHeights]);
        assert_eq!(r[0].verdict, Verdict::Violated);
        let r = check_points(&[], 0, 3, 1.0, &[Condition::EnoughMass]);
        assert_eq!(r[0].verdict, Verdict::Violated);
        let ps = generate(&poisson(1, 0, 999), 2.0).unwrap();
        let r = ps.check_conditions(&[Condition::RightSupercritical]);
        assert_eq!(r[0].verdict, Verdict::UndecidableOnWindow);
        assert_eq!(r[0].witness.len(), 2);
        let all = ps.check_conditions(&Condition::ALL);
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].verdict, Verdict::HoldsOnWindow);
        assert_eq!(all[2].verdict, Verdict::HoldsOnWindow);
    }
}

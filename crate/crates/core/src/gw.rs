//! Closed-form laws of Poisson Galton-Watson trees and the quantities built
//! from them: survival probability, the dual parameter, size and distance
//! pmfs, outlet transition densities and a handful of exact identities.

use statrs::function::gamma::ln_gamma;

/// Survival probability of a Poisson(`lambda`) Galton-Watson tree, the
/// largest root of `1 - t = exp(-lambda t)`.
pub fn theta(lambda: f64) -> f64 {
    if !(lambda > 1.0) {
        return 0.0;
    }
    if lambda.is_infinite() {
        return 1.0;
    }
    // g > 0 strictly between the trivial root and θ, g < 0 above θ.
    let g = |t: f64| -t - (-lambda * t).exp_m1();
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0;
    if g(lo) <= 0.0 {
        return 0.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// dθ/dλ from `θ'(1 - λ(1-θ)) = θ(1-θ)`.
pub fn theta_prime(lambda: f64) -> f64 {
    if lambda < 1.0 {
        return 0.0;
    }
    if lambda == 1.0 {
        return 2.0;
    }
    let t = theta(lambda);
    t * (1.0 - t) / (1.0 - lambda * (1.0 - t))
}

/// The dual parameter `m = λ(1-θ(λ))`; the identity for `λ ≤ 1`.
///
/// Solved as the root in `(0, 1)` of `ln m - m = ln λ - λ`, which keeps full
/// relative precision when `1 - θ` is far below machine epsilon.
pub fn dual_m(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return lambda;
    }
    // t - e^t is increasing in t = ln m, and t = target - 1 lies below the root
    let target = lambda.ln() - lambda;
    let (mut lo, mut hi) = (target - 1.0, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid - mid.exp() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// The `λ > 1` with `λe^{-λ} = me^{-m}` for `0 < m < 1`.
pub fn dual_inverse(m: f64) -> f64 {
    if m >= 1.0 {
        return 1.0;
    }
    let target = m.ln() - m;
    let f = |l: f64| l.ln() - l - target;
    let mut lo = 1.0;
    let mut hi = 2.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `e^{-λn}(λn)^{n-1}/n!`, the total-size pmf of PGW(λ).
pub fn pgw_size_pmf(lambda: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    (-lambda * nf + (nf - 1.0) * (lambda * nf).ln() - ln_factorial(n)).exp()
}

pub fn borel_pmf(n: u64) -> f64 {
    pgw_size_pmf(1.0, n)
}

/// `e^{-yn}(yn)^{n-1}/(n-1)!`, i.e. `n` times the PGW(y) size pmf.
fn size_biased_kernel(y: f64, n: u64) -> f64 {
    let nf = n as f64;
    (-y * nf + (nf - 1.0) * (y * nf).ln() - ln_factorial(n - 1)).exp()
}

/// Density of the next outlet height at `y` given the current one is `h`.
pub fn forward_jump_density(h: f64, y: f64) -> f64 {
    if !(y > 1.0 && y < h) {
        return 0.0;
    }
    theta_prime(y) / theta(h)
}

/// Joint density of (next pond size `n`, next outlet height `y`) given `h`.
pub fn forward_joint(h: f64, n: u64, y: f64) -> f64 {
    if n == 0 || !(y > 1.0 && y < h) {
        return 0.0;
    }
    theta(y) / theta(h) * size_biased_kernel(y, n)
}

/// Law of the pond size given its outlet height `y > 1`.
pub fn pond_size_given_height(n: u64, y: f64) -> f64 {
    if n == 0 || !(y > 1.0) {
        return 0.0;
    }
    theta(y) / theta_prime(y) * size_biased_kernel(y, n)
}

/// Joint density of `(h_0, |ℓ_0|)` at `(y, n)`.
pub fn phi(y: f64, n: u64) -> f64 {
    if n == 0 || !(y > 0.0 && y < 1.0) {
        return 0.0;
    }
    (1.0 - y) * size_biased_kernel(y, n)
}

/// Probability that a uniform vertex of a uniform rooted labelled tree on
/// `n` vertices lies at distance `k - 1` from the root.
pub fn cayley_distance_pmf(n: u64, k: u64) -> Option<f64> {
    if n == 0 || k == 0 || k > n {
        return None;
    }
    let nf = n as f64;
    let mut p = k as f64 / nf;
    for i in 0..k {
        p *= (nf - i as f64) / nf;
    }
    Some(p)
}

pub fn geometric_pmf(x: f64, k: u64) -> f64 {
    x.powi(k as i32) * (1.0 - x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkOdds {
    pub has_chance: f64,
    pub survives: f64,
}

pub fn walk_chance_and_survival(lambda: f64) -> WalkOdds {
    WalkOdds { has_chance: lambda.min(1.0), survives: theta(lambda) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QVariant {
    OneMinusTheta,
    Dual,
}

impl QVariant {
    pub const ALL: [QVariant; 2] = [QVariant::OneMinusTheta, QVariant::Dual];

    pub fn name(self) -> &'static str {
        match self {
            QVariant::OneMinusTheta => "one-minus-theta",
            QVariant::Dual => "dual",
        }
    }
}

impl std::str::FromStr for QVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "one-minus-theta" => Ok(QVariant::OneMinusTheta),
            "dual" => Ok(QVariant::Dual),
            other => Err(format!("unknown q-map variant `{other}`")),
        }
    }
}

/// Candidate maps from forward-maximal weights in `[1, ∞)` to backward
/// maxima in `(0, 1]`.
pub fn q_map(lambda: f64, variant: QVariant) -> f64 {
    match variant {
        QVariant::OneMinusTheta => 1.0 - theta(lambda),
        QVariant::Dual => dual_m(lambda),
    }
}

/// `Σ_π Π_{j≥2} s_{π(j)} / Σ_{i≤j} s_{π(i)}` over all permutations.
pub fn perm_identity(s: &[u64]) -> f64 {
    assert!(s.len() <= 8, "perm_identity enumerates at most 8! permutations");
    let mut idx: Vec<usize> = (0..s.len()).collect();
    let mut total = 0.0;
    permute(&mut idx, 0, &mut |p| {
        let mut prefix = s[p[0]] as f64;
        let mut prod = 1.0;
        for &i in &p[1..] {
            prefix += s[i] as f64;
            prod *= s[i] as f64 / prefix;
        }
        total += prod;
    });
    total
}

fn permute(v: &mut [usize], k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

/// `I_{b-1,b} - I_{b,b}` by quadrature, where `I_{a,b} = ∫_0^1 x^a e^{-bx} dx`.
pub fn integrate_identity(b: u32) -> f64 {
    let bf = b as f64;
    let scale = (-bf).exp() / bf;
    integrate(|x| x.powi(b as i32 - 1) * (1.0 - x) * (-bf * x).exp(), 0.0, 1.0, 1e-13 * scale)
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Fraction of cyclic rotations of `steps` whose partial sums are all
/// strictly positive, as `(qualifying, n)`.
pub fn cycle_lemma_check(steps: &[i64]) -> (usize, usize) {
    let n = steps.len();
    let good = (0..n)
        .filter(|&r| {
            let mut sum = 0;
            (0..n).all(|i| {
                sum += steps[(r + i) % n];
                sum > 0
            })
        })
        .count();
    (good, n)
}

/// Positive root of `h(e^γ - 1) = γ` for `0 < h < 1`: the exponent in
/// `P(sup_k Σ_{i≤k} (Poisson(h) - 1) ≥ a) ≤ e^{-γa}`.
pub fn lundberg_exponent(h: f64) -> f64 {
    if !(h > 0.0) {
        return f64::INFINITY;
    }
    if h >= 1.0 {
        return 0.0;
    }
    let f = |g: f64| h * g.exp_m1() - g;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    // f < 0 on (0, γ) so keep lo strictly inside that stretch.
    if lo == 0.0 {
        lo = 1e-300;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values from an independent 30-digit root finder.
    const THETA: [(f64, f64, f64); 4] = [
        (2.0, 0.796_812_130_020_020_05, 0.406_375_739_959_959_91),
        (1.5, 0.582_811_643_865_811_39, 0.625_782_534_201_282_92),
        (3.0, 0.940_479_790_707_359_63, 0.178_560_627_877_921_11),
        (1.1, 0.176_134_143_631_809_69, 0.906_252_442_005_009_42),
    ];

    #[test]
    fn theta_and_dual_frozen() {
        assert_eq!(theta(1.0), 0.0);
        assert_eq!(theta(0.5), 0.0);
        for (l, t, m) in THETA {
            assert_relative_eq!(theta(l), t, max_relative = 1e-12);
            assert_relative_eq!(dual_m(l), m, max_relative = 1e-11);
        }
        assert_relative_eq!(q_map(2.0, QVariant::OneMinusTheta), 0.203_187_869_979_979_95, max_relative = 1e-11);
        assert_relative_eq!(q_map(2.0, QVariant::Dual), 0.406_375_739_959_959_91, max_relative = 1e-11);
        assert_relative_eq!(dual_inverse(0.3), 2.364_568_252_537_788_5, max_relative = 1e-10);
    }

    #[test]
    fn theta_near_critical() {
        for eps in [1e-3, 1e-5, 1e-7] {
            let t = theta(1.0 + eps);
            assert!(t > 0.0);
            assert_relative_eq!(t / (2.0 * eps), 1.0, max_relative = 10.0 * eps);
        }
    }

    #[test]
    fn theta_derivative_identity() {
        for i in 0..40 {
            let l = 1.1 + 0.1 * i as f64;
            let h = 1e-5;
            let fd = (theta(l + h) - theta(l - h)) / (2.0 * h);
            let t = theta(l);
            assert!((fd * (1.0 - l * (1.0 - t)) - t * (1.0 - t)).abs() < 1e-10, "λ = {l}");
            assert!((theta_prime(l) * (1.0 - l * (1.0 - t)) - t * (1.0 - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn duality() {
        for l in [1.5, 2.0, 3.0] {
            let m = dual_m(l);
            assert!(m < 1.0);
            assert_relative_eq!(l * (-l).exp(), m * (-m).exp(), max_relative = 1e-12);
            assert!((dual_inverse(m) - l).abs() < 1e-9);
        }
        assert!(1.0 - dual_m(1.0 + 1e-6) < 1e-5);
        assert_eq!(q_map(1.0, QVariant::OneMinusTheta), 1.0);
        assert_eq!(q_map(1.0, QVariant::Dual), 1.0);
        assert!(q_map(60.0, QVariant::OneMinusTheta) < 1e-20);
        assert!(q_map(60.0, QVariant::Dual) < 1e-20);
    }

    #[test]
    fn size_pmfs() {
        assert_relative_eq!(borel_pmf(1), (-1.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(borel_pmf(2), (-2.0f64).exp(), max_relative = 1e-13);
        let total: f64 = (1..=1_000_000).map(|n| pgw_size_pmf(0.5, n)).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(borel_pmf(1_000_000) > 0.0);
    }

    #[test]
    fn forward_densities_normalize() {
        for h in [1.5, 2.0, 4.0] {
            let mass = integrate(|y| forward_jump_density(h, y), 1.0, h, 1e-10);
            assert!((mass - 1.0).abs() < 1e-8, "h = {h}: {mass}");
        }
        let joint: f64 = (1..=5000).map(|n| forward_joint(2.0, n, 1.5)).sum();
        assert!((joint - forward_jump_density(2.0, 1.5)).abs() < 1e-8);
        for y in [1.2, 2.0] {
            let s: f64 = (1..=20000).map(|n| pond_size_given_height(n, y)).sum();
            assert!((s - 1.0).abs() < 1e-8, "y = {y}: {s}");
        }
    }

    #[test]
    fn outlet_chain_is_uniform_under_one_minus_theta() {
        for h in [1.2, 2.0, 3.5] {
            let th = theta(h);
            for i in 1..100 {
                let y = 1.0 + (h - 1.0) * i as f64 / 100.0;
                let u = 1.0 - theta(y);
                let cdf_y = theta(y) / th;
                // P(1 - θ(Y) ≤ u) = P(Y ≥ y) = 1 - θ(y)/θ(h)
                let cdf_u = 1.0 - cdf_y;
                let claimed = (u - (1.0 - th)) / th;
                assert!((cdf_u - claimed).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn phi_marginals() {
        let p1 = integrate(|y| phi(y, 1), 0.0, 1.0, 1e-14);
        assert_relative_eq!(p1, borel_pmf(1), max_relative = 1e-9);
        for n in [2u64, 7, 30] {
            let pn = integrate(|y| phi(y, n), 0.0, 1.0, 1e-16);
            assert_relative_eq!(pn, borel_pmf(n), max_relative = 1e-7);
        }
        // Σ_n ∫ φ over n ≤ 200 by quadrature, the Borel tail beyond by its
        // sum to 10^6 and the asymptotic sqrt(2/π)(N^{-1/2} - (5/18)N^{-3/2}).
        let head: f64 = (1..=200).map(|n| integrate(|y| phi(y, n), 0.0, 1.0, 1e-13)).sum();
        let mid: f64 = (201..=1_000_000).map(borel_pmf).sum();
        let big = 1e6f64;
        let tail = (2.0 / std::f64::consts::PI).sqrt() * (big.powf(-0.5) - 5.0 / 18.0 * big.powf(-1.5));
        let total = head + mid + tail;
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        for n in [1, 5, 50] {
            assert!(phi(1.0 - 1e-12, n) < 1e-11);
        }
    }

    #[test]
    fn cayley_geometric_walk() {
        assert_eq!(cayley_distance_pmf(2, 1), Some(0.5));
        assert_eq!(cayley_distance_pmf(2, 2), Some(0.5));
        assert_eq!(cayley_distance_pmf(1, 1), Some(1.0));
        assert_eq!(cayley_distance_pmf(3, 4), None);
        for n in 1..=200 {
            let s: f64 = (1..=n).map(|k| cayley_distance_pmf(n, k).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(geometric_pmf(0.3, 0), 0.7);
        let s: f64 = (0..2000).map(|k| geometric_pmf(0.3, k)).sum();
        let mean: f64 = (0..2000).map(|k| k as f64 * geometric_pmf(0.3, k)).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((mean - 0.3 / 0.7).abs() < 1e-10);
        assert_eq!(walk_chance_and_survival(0.5), WalkOdds { has_chance: 0.5, survives: 0.0 });
        assert_eq!(walk_chance_and_survival(1.0), WalkOdds { has_chance: 1.0, survives: 0.0 });
        assert_eq!(walk_chance_and_survival(2.0).survives, theta(2.0));
    }

    #[test]
    fn small_identities() {
        assert_eq!(perm_identity(&[1, 1]), 1.0);
        assert!((perm_identity(&[3, 1, 4, 1, 5]) - 1.0).abs() < 1e-12);
        assert_relative_eq!(integrate_identity(5), 0.001_347_589_399_817_093_4, max_relative = 1e-9);
        assert_eq!(cycle_lemma_check(&[1, 1, -1, 1, -1]), (1, 5));
        assert_eq!(cycle_lemma_check(&[1; 6]), (6, 6));
        assert_eq!(cycle_lemma_check(&[1, -1, 1, -1]), (0, 4));
    }

    #[test]
    fn lundberg_frozen() {
        assert_relative_eq!(lundberg_exponent(0.5), 1.256_431_208_626_169_7, max_relative = 1e-12);
        assert_relative_eq!(lundberg_exponent(0.9), 0.207_146_502_944_249_96, max_relative = 1e-12);
    }
}

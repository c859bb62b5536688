//! Major and minor arcs: `𝔐(q, a) = {x : |x_j − a_j/q| ≤ L N^{−j}, 1 ≤ j ≤ n}`
//! with `q ≤ L = N^{1/(2n)}`, `1 ≤ a_j ≤ q` and `gcd(q, a_1, …, a_n) = 1`.
//! Distances are taken on the torus.

use num_bigint::BigInt;
use num_integer::Integer;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{frac, rng_for, TorusPoint};
use crate::error::{Error, Result};
use crate::expsum::eval_f;
use crate::fit::{fit_log_log, LineFit};
use crate::quadrature::SAMPLE_CHUNK;
use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MajorArcLabel {
    pub q: u64,
    pub a: Vec<u64>,
}

impl MajorArcLabel {
    pub fn new(q: u64, a: Vec<u64>) -> Result<Self> {
        if q == 0 || a.iter().any(|&aj| aj == 0 || aj > q) {
            return Err(Error::invalid("major arc label needs 1 ≤ a_j ≤ q"));
        }
        if a.iter().fold(q, |g, &aj| g.gcd(&aj)) != 1 {
            return Err(Error::invalid("major arc label needs gcd(q, a) = 1"));
        }
        Ok(Self { q, a })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ArcClass {
    Major(MajorArcLabel),
    Minor,
}

impl ArcClass {
    pub fn is_major(&self) -> bool {
        matches!(self, ArcClass::Major(_))
    }
}

/// `N^{1/(2n)}` as a real number.
pub fn arc_parameter(range: u64, n: usize) -> f64 {
    (range as f64).powf(1.0 / (2 * n) as f64)
}

/// `⌊N^{1/(2n)}⌋`, computed exactly.
pub fn arc_parameter_floor(range: u64, n: usize) -> u64 {
    let k = 2 * n as u32;
    let mut l = arc_parameter(range, n).floor() as u64;
    while (l as u128 + 1).checked_pow(k).is_some_and(|v| v <= range as u128) {
        l += 1;
    }
    while l > 0 && (l as u128).checked_pow(k).is_none_or(|v| v > range as u128) {
        l -= 1;
    }
    l
}

/// Circular distance between two points of `ℝ/ℤ`.
fn torus_distance(a: f64, b: f64) -> f64 {
    let d = frac(a - b);
    d.min(1.0 - d)
}

/// Candidates `a ∈ [1, q]` with `‖x − a/q‖ ≤ width`, in increasing order.
fn candidates(x: f64, q: u64, width: f64) -> Vec<u64> {
    let lo = ((x - width) * q as f64).ceil() as i64 - 1;
    let hi = ((x + width) * q as f64).floor() as i64 + 1;
    let mut out: Vec<u64> = (lo..=hi)
        .map(|a| a.rem_euclid(q as i64) as u64)
        .map(|a| if a == 0 { q } else { a })
        .filter(|&a| torus_distance(x, a as f64 / q as f64) <= width)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Lexicographically smallest `a` from the per-coordinate candidate lists with
/// `gcd(q, a) = 1`.
fn first_coprime(q: u64, lists: &[Vec<u64>]) -> Option<Vec<u64>> {
    fn go(q: u64, g: u64, lists: &[Vec<u64>], prefix: &mut Vec<u64>) -> bool {
        if prefix.len() == lists.len() {
            return g == 1;
        }
        for &a in &lists[prefix.len()] {
            prefix.push(a);
            if go(q, g.gcd(&a), lists, prefix) {
                return true;
            }
            prefix.pop();
        }
        false
    }
    let mut prefix = Vec::with_capacity(lists.len());
    go(q, q, lists, &mut prefix).then_some(prefix)
}

/// Classification with real `L`; ties go to the smallest `q`, then the
/// lexicographically smallest `a`.
pub fn classify(x: &TorusPoint, range: u64) -> ArcClass {
    let n = x.dim();
    let l = arc_parameter(range, n);
    let x = x.reduced();
    for q in 1..=arc_parameter_floor(range, n) {
        let lists: Vec<Vec<u64>> = (1..=n)
            .map(|j| candidates(x.0[j - 1], q, l / (range as f64).powi(j as i32)))
            .collect();
        if lists.iter().any(|c| c.is_empty()) {
            continue;
        }
        if let Some(a) = first_coprime(q, &lists) {
            return ArcClass::Major(MajorArcLabel { q, a });
        }
    }
    ArcClass::Minor
}

fn exact_torus_distance(x: &Rational, c: &Rational) -> Rational {
    let d = x - c;
    let f = &d - d.floor();
    let other = Rational::from_integer(BigInt::from(1)) - &f;
    if f < other {
        f
    } else {
        other
    }
}

/// Half-widths `⌊L⌋ N^{−j}` of the exact windows.
fn exact_widths(range: u64, n: usize) -> Vec<Rational> {
    let l = rational::int(arc_parameter_floor(range, n) as i64);
    let nn = rational::int(range as i64);
    (1..=n as u32).map(|j| &l / rational::pow(&nn, j)).collect()
}

/// Exact `‖x_j − a_j/q‖ ≤ ⌊L⌋ N^{−j}` for every coordinate.
pub fn in_window_exact(x: &[Rational], label: &MajorArcLabel, range: u64) -> bool {
    let widths = exact_widths(range, x.len());
    let q = rational::int(label.q as i64);
    x.iter()
        .zip(&label.a)
        .zip(&widths)
        .all(|((xj, &aj), w)| exact_torus_distance(xj, &(rational::int(aj as i64) / &q)) <= *w)
}

/// Classification of a rational point with the integer floor of `L`.
pub fn classify_exact(x: &[Rational], range: u64) -> ArcClass {
    let n = x.len();
    let lf = arc_parameter_floor(range, n);
    let widths = exact_widths(range, n);
    for q in 1..=lf {
        let qr = rational::int(q as i64);
        let lists: Vec<Vec<u64>> = x
            .iter()
            .zip(&widths)
            .map(|(xj, w)| {
                (1..=q)
                    .filter(|&a| exact_torus_distance(xj, &(rational::int(a as i64) / &qr)) <= *w)
                    .collect()
            })
            .collect();
        if lists.iter().any(|c| c.is_empty()) {
            continue;
        }
        if let Some(a) = first_coprime(q, &lists) {
            return ArcClass::Major(MajorArcLabel { q, a });
        }
    }
    ArcClass::Minor
}

/// Whether the exact windows of two labels overlap.
pub fn windows_intersect(a: &MajorArcLabel, b: &MajorArcLabel, range: u64) -> bool {
    let widths = exact_widths(range, a.a.len());
    let qa = rational::int(a.q as i64);
    let qb = rational::int(b.q as i64);
    a.a.iter().zip(&b.a).zip(&widths).all(|((&x, &y), w)| {
        let d = exact_torus_distance(&(rational::int(x as i64) / &qa), &(rational::int(y as i64) / &qb));
        d <= w * rational::int(2)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorArcSummary {
    pub range: u64,
    pub degree: usize,
    pub labels: Vec<MajorArcLabel>,
    /// `Σ_{arcs} Π_j min(2 L N^{−j}, 1)`, overlaps counted repeatedly.
    pub measure_without_overlap: f64,
}

/// Every label with `q ≤ L`, sorted by `q` then `a`.
pub fn enumerate_major_arcs(range: u64, n: usize, max_labels: u128) -> Result<MajorArcSummary> {
    if n < 1 || range < 1 {
        return Err(Error::invalid("enumerate_major_arcs needs n ≥ 1 and N ≥ 1"));
    }
    let l = arc_parameter(range, n);
    let lf = arc_parameter_floor(range, n);
    let work = (lf as u128).checked_pow(n as u32 + 1).unwrap_or(u128::MAX);
    if work > max_labels {
        return Err(Error::budget("major arc labels", work, max_labels));
    }
    let mut labels = Vec::new();
    for q in 1..=lf {
        let mut a = vec![1u64; n];
        loop {
            if a.iter().fold(q, |g, &v| g.gcd(&v)) == 1 {
                labels.push(MajorArcLabel { q, a: a.clone() });
            }
            // odometer, last coordinate fastest
            let mut pos = n;
            while pos > 0 {
                pos -= 1;
                a[pos] += 1;
                if a[pos] <= q {
                    break;
                }
                a[pos] = 1;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
    let per_arc: f64 = (1..=n as i32).map(|j| (2.0 * l / (range as f64).powi(j)).min(1.0)).product();
    Ok(MajorArcSummary {
        range,
        degree: n,
        measure_without_overlap: per_arc * labels.len() as f64,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorSupEstimate {
    pub range: u64,
    pub degree: usize,
    pub seed: u64,
    /// Largest `|F|` seen at an accepted (minor-arc) sample.
    pub sup_estimate: f64,
    /// A point attaining `sup_estimate`.
    pub argmax: Vec<f64>,
    pub accepted: usize,
    pub drawn: usize,
}

impl MinorSupEstimate {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.drawn as f64
    }

    /// Binomial standard error of the acceptance rate.
    pub fn acceptance_std_error(&self) -> f64 {
        let p = self.acceptance_rate();
        (p * (1.0 - p) / self.drawn as f64).sqrt()
    }
}

/// Draws uniform torus points until `samples` of them lie on the minor arcs
/// and returns the largest `|F(x; N)|` among those.
pub fn minor_sup_estimate(range: u64, n: usize, samples: usize, seed: u64) -> Result<MinorSupEstimate> {
    if samples < 1000 {
        return Err(Error::invalid("minor arc sup estimate needs at least 1000 samples"));
    }
    if n < 1 || range < 1 {
        return Err(Error::invalid("minor arc sup estimate needs n ≥ 1 and N ≥ 1"));
    }
    if arc_parameter(range, n) >= 1.0 && (1..=n as i32).all(|j| 2.0 * arc_parameter(range, n) / (range as f64).powi(j) >= 1.0)
    {
        return Err(Error::invalid("the q = 1 arc covers the whole torus; there are no minor arcs"));
    }
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<(f64, Vec<f64>, usize, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, c as u64);
            let want = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
            let (mut best, mut arg, mut accepted, mut drawn) = (-1.0f64, vec![0.0; n], 0usize, 0usize);
            while accepted < want {
                let x = TorusPoint((0..n).map(|_| rng.gen::<f64>()).collect());
                drawn += 1;
                if classify(&x, range).is_major() {
                    continue;
                }
                accepted += 1;
                let v = eval_f(&x.0, range).norm();
                if v > best {
                    best = v;
                    arg = x.0;
                }
            }
            (best, arg, accepted, drawn)
        })
        .collect();
    let mut out = MinorSupEstimate {
        range,
        degree: n,
        seed,
        sup_estimate: -1.0,
        argmax: vec![],
        accepted: 0,
        drawn: 0,
    };
    for (best, arg, accepted, drawn) in parts {
        if best > out.sup_estimate {
            out.sup_estimate = best;
            out.argmax = arg;
        }
        out.accepted += accepted;
        out.drawn += drawn;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorSupFit {
    pub estimates: Vec<MinorSupEstimate>,
    pub fit: LineFit,
}

/// Slope of `ln sup_{minor} |F|` against `ln N`.
pub fn minor_sup_fit(ranges: &[u64], n: usize, samples: usize, seed: u64) -> Result<MinorSupFit> {
    if ranges.len() < 2 {
        return Err(Error::invalid("a slope needs at least two values of N"));
    }
    let estimates = ranges
        .iter()
        .map(|&r| minor_sup_estimate(r, n, samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = ranges.iter().map(|&r| r as f64).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.sup_estimate).collect();
    Ok(MinorSupFit {
        fit: fit_log_log(&xs, &ys)?,
        estimates,
    })
}

/// Fraction of uniform torus samples classified major; overlaps counted once.
pub fn major_measure_monte_carlo(range: u64, n: usize, samples: usize, seed: u64) -> (f64, f64) {
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, c as u64);
            let count = SAMPLE_CHUNK.min(samples - c * SAMPLE_CHUNK);
            (0..count)
                .filter(|_| classify(&TorusPoint((0..n).map(|_| rng.gen::<f64>()).collect()), range).is_major())
                .count()
        })
        .sum();
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// `x_j = a_j / q` as exact rationals.
pub fn arc_center(label: &MajorArcLabel) -> Vec<Rational> {
    label.a.iter().map(|&a| rational::ratio(a as i64, label.q as i64)).collect()
}

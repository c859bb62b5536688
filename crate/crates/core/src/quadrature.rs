//! Quadrature building blocks: Gauss–Legendre nodes, deterministic pairwise
//! summation, and integration rules over a truncated weighted ball.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{log_sum_exp, rng_for, unit_ball_volume, unit_sphere_area, WeightProfile};
use crate::error::{Error, Result};

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_m
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Streaming pairwise summation whose tree shape depends only on the number
/// of terms, so the rounding is reproducible independent of scheduling.
#[derive(Debug, Clone, Default)]
pub struct PairwiseSum {
    // stack[k] holds the sum of a completed block of 2^levels[k] terms
    stack: Vec<(u32, f64)>,
}

impl PairwiseSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let mut level = 0u32;
        let mut acc = x;
        while let Some(&(l, v)) = self.stack.last() {
            if l != level {
                break;
            }
            self.stack.pop();
            acc += v;
            level += 1;
        }
        self.stack.push((level, acc));
    }

    pub fn total(&self) -> f64 {
        self.stack.iter().rev().fold(0.0, |acc, &(_, v)| acc + v)
    }
}

/// How points are placed in the truncated ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BallScheme {
    /// Half the samples uniform in a core ball, half with log-uniform radius
    /// out to the truncation radius.
    MonteCarlo,
    /// Uniform samples in the truncated ball.
    Uniform,
    /// Tensor Gauss–Legendre grid on the bounding cube, restricted to the ball.
    Grid { panels_per_axis: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallRuleConfig {
    pub scheme: BallScheme,
    pub samples: usize,
    pub seed: u64,
    /// Core radius in absolute units for the Monte-Carlo mixture; defaults to
    /// `n R / exponent`, the scale on which the weight itself decays.
    pub core_radius: Option<f64>,
    pub nodes_per_panel: usize,
    pub max_points: u64,
}

/// Samples drawn from one substream; keeps sample prefixes stable when the
/// sample count is increased.
pub const SAMPLE_CHUNK: usize = 1024;

/// A quadrature rule for `∫_{|y| ≤ T R} h(c + y) w(y) dy`, stored in unit-radius
/// coordinates so one rule serves every ball of the same radius.
#[derive(Debug, Clone)]
pub struct BallRule {
    dim: usize,
    radius: f64,
    /// Flattened `points × dim` offsets in units of the radius.
    unit_offsets: Vec<f64>,
    /// `ln` of the weight attached to each point, including `w`, the
    /// sampling density and `R^n`.
    ln_weights: Vec<f64>,
    stochastic: bool,
}

impl BallRule {
    pub fn new(dim: usize, radius: f64, profile: &WeightProfile, cfg: &BallRuleConfig) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ball rule needs dimension at least 1"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        profile.validate(dim)?;
        let t = profile.truncation_factor;
        let ln_scale = dim as f64 * radius.ln();
        match cfg.scheme {
            BallScheme::MonteCarlo | BallScheme::Uniform => {
                if cfg.samples == 0 {
                    return Err(Error::invalid("Monte-Carlo rule needs at least one sample"));
                }
                if cfg.samples as u64 > cfg.max_points {
                    return Err(Error::QuadratureBudgetExceeded {
                        required: cfg.samples as u64,
                        limit: cfg.max_points,
                    });
                }
                let core = match cfg.scheme {
                    BallScheme::Uniform => t,
                    _ => {
                        let c = cfg
                            .core_radius
                            .map(|r| r / radius)
                            .unwrap_or(dim as f64 / profile.exponent as f64);
                        if !(c > 0.0) {
                            return Err(Error::invalid("core radius must be positive"));
                        }
                        c.min(t)
                    }
                };
                let mixture = core < t;
                let ln_core_density = -(unit_ball_volume(dim) * core.powi(dim as i32)).ln();
                let ln_log_span = (t / core).ln().ln();
                let ln_sphere = unit_sphere_area(dim).ln();
                let s = cfg.samples;
                let mut unit_offsets = Vec::with_capacity(s * dim);
                let mut ln_weights = Vec::with_capacity(s);
                let mut dir = vec![0.0; dim];
                for chunk in 0..s.div_ceil(SAMPLE_CHUNK) {
                    let mut rng = rng_for(cfg.seed, chunk as u64);
                    let count = SAMPLE_CHUNK.min(s - chunk * SAMPLE_CHUNK);
                    for _ in 0..count {
                        random_direction(&mut rng, &mut dir);
                        let in_core = !mixture || rng.gen::<bool>();
                        let u: f64 = rng.gen();
                        let r = if in_core {
                            core * u.powf(1.0 / dim as f64)
                        } else {
                            core * (t / core).powf(u)
                        };
                        let ln_q = if in_core {
                            ln_core_density + if mixture { -(2f64).ln() } else { 0.0 }
                        } else {
                            -(2f64).ln() - ln_sphere - dim as f64 * r.ln() - ln_log_span
                        };
                        unit_offsets.extend(dir.iter().map(|d| d * r));
                        ln_weights.push(profile.ln_at_scaled_distance(r) - ln_q - (s as f64).ln() + ln_scale);
                    }
                }
                Ok(Self {
                    dim,
                    radius,
                    unit_offsets,
                    ln_weights,
                    stochastic: true,
                })
            }
            BallScheme::Grid { panels_per_axis } => {
                if panels_per_axis == 0 || cfg.nodes_per_panel == 0 {
                    return Err(Error::invalid("grid rule needs positive panel and node counts"));
                }
                let per_axis = (panels_per_axis * cfg.nodes_per_panel) as u64;
                let total = per_axis.checked_pow(dim as u32).unwrap_or(u64::MAX);
                if total > cfg.max_points {
                    return Err(Error::QuadratureBudgetExceeded {
                        required: total,
                        limit: cfg.max_points,
                    });
                }
                let (gn, gw) = gauss_legendre(cfg.nodes_per_panel);
                let h = 2.0 * t / panels_per_axis as f64;
                let mut axis = Vec::with_capacity(per_axis as usize);
                for p in 0..panels_per_axis {
                    let lo = -t + p as f64 * h;
                    for (x, w) in gn.iter().zip(&gw) {
                        axis.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
                    }
                }
                let mut unit_offsets = Vec::new();
                let mut ln_weights = Vec::new();
                let mut idx = vec![0usize; dim];
                let mut point = vec![0.0; dim];
                'outer: loop {
                    let mut ln_w = ln_scale;
                    for (k, &i) in idx.iter().enumerate() {
                        point[k] = axis[i].0;
                        ln_w += axis[i].1.ln();
                    }
                    let r = point.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r <= t {
                        unit_offsets.extend_from_slice(&point);
                        ln_weights.push(ln_w + profile.ln_at_scaled_distance(r));
                    }
                    for k in 0..dim {
                        idx[k] += 1;
                        if idx[k] < axis.len() {
                            continue 'outer;
                        }
                        idx[k] = 0;
                    }
                    break;
                }
                Ok(Self {
                    dim,
                    radius,
                    unit_offsets,
                    ln_weights,
                    stochastic: false,
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.ln_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_weights.is_empty()
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn ln_weights(&self) -> &[f64] {
        &self.ln_weights
    }

    /// Absolute coordinates of point `k` for a ball centered at `center`.
    pub fn point(&self, k: usize, center: &[f64], out: &mut [f64]) {
        let u = &self.unit_offsets[k * self.dim..(k + 1) * self.dim];
        for ((o, c), ui) in out.iter_mut().zip(center).zip(u) {
            *o = c + self.radius * ui;
        }
    }

    /// Estimate of `ln ∫ h w` from `ln h` at every point, with the relative
    /// standard error for stochastic rules (zero for the grid).
    pub fn ln_integral(&self, ln_values: &[f64]) -> (f64, f64) {
        assert_eq!(ln_values.len(), self.len());
        let terms: Vec<f64> = self.ln_weights.iter().zip(ln_values).map(|(w, v)| w + v).collect();
        let ln_total = log_sum_exp(&terms);
        if !self.stochastic || ln_total == f64::NEG_INFINITY || terms.len() < 2 {
            return (ln_total, 0.0);
        }
        // every term is total/S times y_k, with mean(y) = 1
        let s = terms.len() as f64;
        let mut acc = PairwiseSum::new();
        for t in &terms {
            let y = (t - ln_total + s.ln()).exp();
            acc.add((y - 1.0) * (y - 1.0));
        }
        let var = acc.total() / (s - 1.0);
        (ln_total, (var / s).sqrt())
    }
}

fn random_direction(rng: &mut impl Rng, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
            norm2 += *o * *o;
        }
        if norm2 > 1e-300 {
            let norm = norm2.sqrt();
            out.iter_mut().for_each(|o| *o /= norm);
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for m in 1..=12 {
            let (x, w) = gauss_legendre(m);
            for deg in 0..(2 * m) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "m={m} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn pairwise_sum_matches_exact_integer_sum() {
        let mut acc = PairwiseSum::new();
        for k in 1..=1000 {
            acc.add(k as f64);
        }
        assert_eq!(acc.total(), 500500.0);
        assert_eq!(PairwiseSum::new().total(), 0.0);
    }

    fn cfg(scheme: BallScheme, samples: usize) -> BallRuleConfig {
        BallRuleConfig {
            scheme,
            samples,
            seed: 7,
            core_radius: None,
            nodes_per_panel: 8,
            max_points: 10_000_000,
        }
    }

    fn exact_truncated_weight_integral(n: usize, profile: &WeightProfile, radius: f64) -> f64 {
        // R^n |S^{n-1}| ∫_0^T u^{n-1} (1+u)^{-E} du, by fine composite Simpson
        let t = profile.truncation_factor;
        let steps = 200_000;
        let h = t / steps as f64;
        let f = |u: f64| u.powi(n as i32 - 1) * profile.at_scaled_distance(u);
        let mut acc = f(0.0) + f(t);
        for k in 1..steps {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        radius.powi(n as i32) * unit_sphere_area(n) * acc * h / 3.0
    }

    #[test]
    fn rules_integrate_the_weight() {
        let profile = WeightProfile {
            exponent: 6,
            truncation_factor: 4.0,
        };
        let exact = exact_truncated_weight_integral(2, &profile, 3.0);
        for (scheme, tol) in [
            (BallScheme::MonteCarlo, 0.02),
            (BallScheme::Uniform, 0.05),
            (BallScheme::Grid { panels_per_axis: 64 }, 0.01),
        ] {
            let rule = BallRule::new(2, 3.0, &profile, &cfg(scheme, 40_000)).unwrap();
            let (ln_i, _) = rule.ln_integral(&vec![0.0; rule.len()]);
            let got = ln_i.exp();
            assert!((got / exact - 1.0).abs() < tol, "{scheme:?}: {got} vs {exact}");
        }
    }

    #[test]
    fn monte_carlo_rule_is_seed_deterministic_and_prefix_stable() {
        let profile = WeightProfile::standard(2);
        let a = BallRule::new(2, 5.0, &profile, &cfg(BallScheme::MonteCarlo, 3000)).unwrap();
        let b = BallRule::new(2, 5.0, &profile, &cfg(BallScheme::MonteCarlo, 3000)).unwrap();
        let c = BallRule::new(2, 5.0, &profile, &cfg(BallScheme::MonteCarlo, 6000)).unwrap();
        assert_eq!(a.ln_weights, b.ln_weights);
        assert_eq!(a.unit_offsets, b.unit_offsets);
        let full_chunks = 2 * SAMPLE_CHUNK;
        assert_eq!(a.unit_offsets[..full_chunks * 2], c.unit_offsets[..full_chunks * 2]);
    }

    #[test]
    fn rule_scales_exactly_with_radius() {
        let profile = WeightProfile {
            exponent: 4,
            truncation_factor: 4.0,
        };
        let mut config = cfg(BallScheme::MonteCarlo, 2000);
        config.core_radius = None;
        let small = BallRule::new(2, 2.0, &profile, &config).unwrap();
        let large = BallRule::new(2, 8.0, &profile, &config).unwrap();
        let (a, _) = small.ln_integral(&vec![0.0; small.len()]);
        let (b, _) = large.ln_integral(&vec![0.0; large.len()]);
        assert!((b - a - 2.0 * 4f64.ln()).abs() < 1e-12);
    }
}

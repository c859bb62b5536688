//! Weyl sums `F(x; N)`, the extension operator `E_J g` for the moment curve,
//! weighted `L^p` norms over balls, and the exact torus moment.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{e_of, frac, rng_for, Ball, CellRange, Instance, StepFunction, WeightProfile};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, BallRule, BallRuleConfig, BallScheme, PairwiseSum, SAMPLE_CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub panels_per_oscillation: f64,
    pub nodes_per_panel: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Limit on Gauss–Legendre panels for a single extension evaluation.
    pub max_panels: u64,
    /// Limit on quadrature points in a ball rule.
    pub max_points: u64,
    pub scheme: BallScheme,
    /// Core radius of the Monte-Carlo sampler, in absolute units.
    pub core_radius: Option<f64>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            panels_per_oscillation: 8.0,
            nodes_per_panel: 8,
            mc_samples: 20_000,
            seed: 0,
            max_panels: 10_000_000,
            max_points: 50_000_000,
            scheme: BallScheme::MonteCarlo,
            core_radius: None,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.panels_per_oscillation > 0.0) || !self.panels_per_oscillation.is_finite() {
            return Err(Error::invalid("panels_per_oscillation must be positive"));
        }
        if self.nodes_per_panel == 0 || self.mc_samples == 0 || self.max_panels == 0 || self.max_points == 0 {
            return Err(Error::invalid("quadrature counts and limits must be positive"));
        }
        Ok(())
    }

    pub fn ball_rule_config(&self) -> BallRuleConfig {
        BallRuleConfig {
            scheme: self.scheme,
            samples: self.mc_samples,
            seed: self.seed,
            core_radius: self.core_radius,
            nodes_per_panel: self.nodes_per_panel,
            max_points: self.max_points,
        }
    }
}

/// `F(x; N) = Σ_{j=1}^N e(x_1 j + … + x_n j^n)` with `n = x.len()`.
///
/// The phase is built by Horner's rule and reduced mod 1 after every step,
/// which is exact in real arithmetic because `j` is an integer.
pub fn eval_f(x: &[f64], range: u64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for j in 1..=range {
        let jf = j as f64;
        let mut acc = 0.0;
        for &xi in x.iter().rev() {
            acc = frac((acc + xi) * jf);
        }
        total += e_of(acc);
    }
    total
}

/// Phase `Σ x_i t^i` of the moment curve at parameter `t`.
fn curve_phase(x: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for &xi in x.iter().rev() {
        acc = (acc + xi) * t;
    }
    acc
}

/// Per-cell integrals `I_c(x) = ∫_{cell c} e(t x_1 + … + t^n x_n) dt` on a
/// uniform grid; `E_J g(x) = Σ_{c ⊂ J} g_c I_c(x)`.
#[derive(Debug, Clone)]
pub struct CellIntegrator {
    cells: usize,
    panels_per_oscillation: f64,
    max_panels: u64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CellIntegrator {
    pub fn new(cells: usize, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        if cells == 0 {
            return Err(Error::invalid("grid needs at least one cell"));
        }
        let (nodes, weights) = gauss_legendre(cfg.nodes_per_panel);
        Ok(Self {
            cells,
            panels_per_oscillation: cfg.panels_per_oscillation,
            max_panels: cfg.max_panels,
            nodes,
            weights,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Panels per cell: the phase derivative is at most `Σ i |x_i|` on
    /// `[0, 1]`, so a cell of width `δ` spans at most `δ Σ i |x_i|` periods.
    pub fn panels_per_cell(&self, x: &[f64]) -> u64 {
        let bound: f64 = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v.abs()).sum();
        let oscillations = bound / self.cells as f64;
        ((self.panels_per_oscillation * oscillations).ceil() as u64).max(1)
    }

    pub fn integrals(&self, range: CellRange, x: &[f64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); range.len()];
        self.integrals_into(range, x, &mut out)?;
        Ok(out)
    }

    pub fn integrals_into(&self, range: CellRange, x: &[f64], out: &mut [Complex64]) -> Result<()> {
        if range.end > self.cells || range.is_empty() {
            return Err(Error::invalid(format!(
                "cell range [{}, {}) does not fit a {}-cell grid",
                range.start, range.end, self.cells
            )));
        }
        let panels = self.panels_per_cell(x);
        let required = panels.saturating_mul(range.len() as u64);
        if required > self.max_panels {
            return Err(Error::QuadratureBudgetExceeded {
                required,
                limit: self.max_panels,
            });
        }
        let delta = 1.0 / self.cells as f64;
        let h = delta / panels as f64;
        for (slot, c) in out.iter_mut().zip(range.start..range.end) {
            let a = c as f64 * delta;
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..panels {
                let lo = a + p as f64 * h;
                let mut panel = Complex64::new(0.0, 0.0);
                for (node, w) in self.nodes.iter().zip(&self.weights) {
                    let t = lo + 0.5 * h * (node + 1.0);
                    panel += e_of(curve_phase(x, t)) * *w;
                }
                acc += panel * (0.5 * h);
            }
            *slot = acc;
        }
        Ok(())
    }
}

/// `E_J g(x) = ∫_J g(t) e(t x_1 + … + t^n x_n) dt` for `J` a union of grid cells.
pub fn eval_extension(g: &StepFunction, j: CellRange, x: &[f64], cfg: &QuadratureConfig) -> Result<Complex64> {
    let integrator = CellIntegrator::new(g.cells(), cfg)?;
    let values = integrator.integrals(j, x)?;
    Ok(values.iter().zip(&g.coeffs()[j.start..j.end]).map(|(i, c)| c * i).sum())
}

/// Something that can be evaluated at points of `ℝ^n`.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Complex64>;
    /// An upper bound on `|f|`, used to bound the truncated tail.
    fn sup_modulus(&self) -> f64;
}

pub struct ConstantField {
    pub dim: usize,
    pub value: Complex64,
}

impl Field for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64]) -> Result<Complex64> {
        Ok(self.value)
    }
    fn sup_modulus(&self) -> f64 {
        self.value.norm()
    }
}

/// `x ↦ E_J g(x)` in dimension `n`.
pub struct ExtensionField<'a> {
    pub dim: usize,
    pub g: &'a StepFunction,
    pub interval: CellRange,
    pub integrator: CellIntegrator,
}

impl<'a> ExtensionField<'a> {
    pub fn new(dim: usize, g: &'a StepFunction, interval: CellRange, cfg: &QuadratureConfig) -> Result<Self> {
        Ok(Self {
            dim,
            g,
            interval,
            integrator: CellIntegrator::new(g.cells(), cfg)?,
        })
    }
}

impl Field for ExtensionField<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Result<Complex64> {
        let values = self.integrator.integrals(self.interval, x)?;
        Ok(values.iter().zip(&self.g.coeffs()[self.interval.start..self.interval.end]).map(|(i, c)| c * i).sum())
    }
    fn sup_modulus(&self) -> f64 {
        let coeffs = &self.g.coeffs()[self.interval.start..self.interval.end];
        coeffs.iter().map(|c| c.norm()).sum::<f64>() * self.g.delta()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(∫ |f|^p w_B)^{1/p}`
    Plain,
    /// `(|B|^{-1} ∫ |f|^p w_B)^{1/p}`
    Sharp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    /// Bound on how much the norm could grow if the weight were not cut
    /// off at `truncation_factor · B`.
    pub truncation_bound: f64,
    /// One standard error for sampled rules; zero for deterministic grids.
    pub quadrature_estimate_error: f64,
}

/// `ln ∫_{|y| > T R} w_B(y) dy`.
pub fn ln_weight_tail(n: usize, radius: f64, profile: &WeightProfile) -> f64 {
    profile.ln_total_integral(n, radius) + profile.ln_tail_fraction(n)
}

/// Weighted `L^p` norm of `f` against `w_B`, integrated over the truncated
/// ball `truncation_factor · B`.
pub fn weighted_norm(
    f: &dyn Field,
    ball: &Ball,
    p: f64,
    profile: &WeightProfile,
    cfg: &QuadratureConfig,
    normalization: Normalization,
) -> Result<NormResult> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    if f.dim() != ball.dim() {
        return Err(Error::invalid("field and ball dimensions differ"));
    }
    cfg.validate()?;
    let rule = BallRule::new(ball.dim(), ball.radius, profile, &cfg.ball_rule_config())?;
    let ln_values = (0..rule.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; ball.dim()],
            |point, k| {
                rule.point(k, &ball.center, point);
                f.eval(point).map(|v| p * v.norm().ln())
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    let (ln_int, rel_se) = rule.ln_integral(&ln_values);
    let ln_norm_factor = match normalization {
        Normalization::Plain => 0.0,
        Normalization::Sharp => -ball.volume().ln(),
    };
    let value = ((ln_int + ln_norm_factor) / p).exp();
    let ln_tail = ln_weight_tail(ball.dim(), ball.radius, profile) + p * f.sup_modulus().ln();
    let truncation_bound = if ln_tail == f64::NEG_INFINITY {
        0.0
    } else {
        // (I + tail)^{1/p} − I^{1/p}, computed without cancellation
        let ln_total = crate::domain::log_sum_exp(&[ln_int, ln_tail]);
        let upper = ((ln_total + ln_norm_factor) / p).exp();
        (upper - value).max(0.0)
    };
    Ok(NormResult {
        value,
        truncation_bound,
        quadrature_estimate_error: value * rel_se / p,
    })
}

/// Budget for the exact torus grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusBudget {
    /// Limit on `(Π M_i) · N`, the number of unit-root products evaluated.
    pub max_terms: u128,
}

impl Default for TorusBudget {
    fn default() -> Self {
        Self { max_terms: 2_000_000_000 }
    }
}

/// Tolerance for rounding the grid average to an integer.
pub const TORUS_ROUNDING_TOLERANCE: f64 = 1e-6;

/// `M_i = 2 s N^i + 1`, the smallest grid on which the average of `|F|^{2s}`
/// is exact.
pub fn minimal_torus_grid(inst: &Instance) -> Vec<u128> {
    (1..=inst.n() as u32)
        .map(|i| 2 * inst.multiplicity as u128 * (inst.range as u128).pow(i) + 1)
        .collect()
}

/// `J_{s,n}(N) = ∫_{[0,1]^n} |F(x; N)|^{2s} dx`, evaluated exactly on the
/// minimal product grid.
pub fn torus_integral_power(inst: &Instance, budget: &TorusBudget) -> Result<u128> {
    torus_integral_power_on_grid(inst, &minimal_torus_grid(inst), budget)
}

/// As [`torus_integral_power`], on a caller-chosen grid with `M_i ≥ 2 s N^i + 1`.
pub fn torus_integral_power_on_grid(inst: &Instance, moduli: &[u128], budget: &TorusBudget) -> Result<u128> {
    let minimal = minimal_torus_grid(inst);
    if moduli.len() != minimal.len() {
        return Err(Error::invalid(format!("expected {} grid sizes, got {}", minimal.len(), moduli.len())));
    }
    if let Some((m, need)) = moduli.iter().zip(&minimal).find(|(m, need)| m < need) {
        return Err(Error::invalid(format!("grid size {m} is below the exactness bound {need}")));
    }
    let points = moduli.iter().try_fold(1u128, |acc, &m| acc.checked_mul(m)).unwrap_or(u128::MAX);
    let terms = points.saturating_mul(inst.range as u128);
    if terms > budget.max_terms {
        return Err(Error::budget("torus grid terms", terms, budget.max_terms));
    }
    let range = inst.range;
    // j^i mod M_i
    let jpow: Vec<Vec<u128>> = moduli
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            (1..=range as u128)
                .map(|j| {
                    let mut acc = 1u128;
                    for _ in 0..=i {
                        acc = acc * (j % m) % m;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let s = inst.multiplicity as i32;
    let first = moduli[0];
    let rest: Vec<u128> = moduli[1..].to_vec();
    let row_total = |k1: u128| -> f64 {
        let mut acc = PairwiseSum::new();
        let mut idx = vec![0u128; rest.len()];
        loop {
            let mut f = Complex64::new(0.0, 0.0);
            for jj in 0..range as usize {
                let mut angle = (k1 * jpow[0][jj] % first) as f64 / first as f64;
                for (r, (&k, &m)) in idx.iter().zip(&rest).enumerate() {
                    angle += (k * jpow[r + 1][jj] % m) as f64 / m as f64;
                }
                f += e_of(angle);
            }
            acc.add(f.norm_sqr().powi(s));
            let mut pos = 0;
            while pos < idx.len() {
                idx[pos] += 1;
                if idx[pos] < rest[pos] {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
        acc.total()
    };
    let rows: Vec<f64> = (0..first).into_par_iter().map(row_total).collect();
    let mut total = PairwiseSum::new();
    for r in rows {
        total.add(r);
    }
    let avg = total.total() / points as f64;
    let rounded = avg.round();
    if (avg - rounded).abs() > TORUS_ROUNDING_TOLERANCE || rounded < 0.0 {
        return Err(Error::NonIntegerResult {
            value: avg,
            tolerance: TORUS_ROUNDING_TOLERANCE,
        });
    }
    Ok(rounded as u128)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Sample mean of `|F|^{2s}` at uniform torus points, with its standard error.
pub fn moment_monte_carlo(inst: &Instance, cfg: &QuadratureConfig) -> Result<MomentEstimate> {
    if cfg.mc_samples < 100 {
        return Err(Error::invalid("moment estimate needs at least 100 samples"));
    }
    let n = inst.n();
    let s = cfg.mc_samples;
    let chunks = s.div_ceil(SAMPLE_CHUNK);
    let values: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(cfg.seed, c as u64);
            let count = SAMPLE_CHUNK.min(s - c * SAMPLE_CHUNK);
            let mut x = vec![0.0; n];
            (0..count)
                .map(|_| {
                    x.iter_mut().for_each(|v| *v = rng.gen::<f64>());
                    eval_f(&x, inst.range).norm_sqr().powi(inst.multiplicity as i32)
                })
                .collect()
        })
        .collect();
    let mut sum = PairwiseSum::new();
    values.iter().flatten().for_each(|&v| sum.add(v));
    let mean = sum.total() / s as f64;
    let mut sq = PairwiseSum::new();
    values.iter().flatten().for_each(|&v| sq.add((v - mean) * (v - mean)));
    let var = sq.total() / (s as f64 - 1.0);
    Ok(MomentEstimate {
        estimate: mean,
        standard_error: (var / s as f64).sqrt(),
        samples: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{count_mitm, count_naive, CountBudget, MitmConfig};
    use std::f64::consts::PI;

    #[test]
    fn weyl_sum_special_points() {
        assert_eq!(eval_f(&[0.0, 0.0], 17), Complex64::new(17.0, 0.0));
        assert!(eval_f(&[0.5, 0.0], 4).norm() < 1e-12);
    }

    #[test]
    fn weyl_sum_matches_compensated_direct_sum() {
        // direct sum with the phase reduced exactly in rationals: x = (37/100, 11/100)
        let x = [0.37, 0.11];
        let got = eval_f(&x, 50);
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for j in 1..=50i64 {
            let num = (37 * j + 11 * j * j) % 100;
            let theta = 2.0 * PI * num as f64 / 100.0;
            re += theta.cos();
            im += theta.sin();
        }
        // x as doubles differs from 37/100 by < 1e-17; the phase error is ~ j² 1e-17
        assert!((got - Complex64::new(re, im)).norm() < 1e-10 * 50.0);
    }

    #[test]
    fn extension_of_constant_at_origin_is_one() {
        let g = StepFunction::constant(8, Complex64::new(1.0, 0.0)).unwrap();
        let v = eval_extension(&g, CellRange::whole(8), &[0.0, 0.0], &QuadratureConfig::default()).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn extension_matches_linear_phase_antiderivative() {
        let g = StepFunction::constant(4, Complex64::new(1.0, 0.0)).unwrap();
        let x1 = 3.7;
        let v = eval_extension(&g, CellRange::whole(4), &[x1, 0.0], &QuadratureConfig::default()).unwrap();
        let exact = (e_of(x1) - Complex64::new(1.0, 0.0)) / Complex64::new(0.0, 2.0 * PI * x1);
        assert!((v - exact).norm() < 1e-10);
    }

    #[test]
    fn panel_budget_is_enforced() {
        let cfg = QuadratureConfig {
            max_panels: 10,
            ..QuadratureConfig::default()
        };
        let g = StepFunction::constant(4, Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            eval_extension(&g, CellRange::whole(4), &[1e4, 0.0], &cfg),
            Err(Error::QuadratureBudgetExceeded { .. })
        ));
    }

    #[test]
    fn torus_grid_examples() {
        let b = TorusBudget::default();
        let i = Instance::new(2, 2, 2).unwrap();
        assert_eq!(minimal_torus_grid(&i), vec![9, 17]);
        assert_eq!(torus_integral_power(&i, &b).unwrap(), 6);
        let i = Instance::new(2, 1, 3).unwrap();
        assert_eq!(torus_integral_power_on_grid(&i, &[7, 19], &b).unwrap(), 3);
        assert!(torus_integral_power_on_grid(&i, &[6, 19], &b).is_err());
        let i = Instance::new(2, 3, 3).unwrap();
        assert_eq!(torus_integral_power(&i, &b).unwrap(), count_mitm(&i, &MitmConfig::default()).unwrap());
    }

    #[test]
    fn torus_grid_larger_than_minimal_is_still_exact() {
        let b = TorusBudget::default();
        let i = Instance::new(2, 2, 3).unwrap();
        let reference = count_naive(&i, &CountBudget::default()).unwrap();
        assert_eq!(torus_integral_power_on_grid(&i, &[14, 40], &b).unwrap(), reference);
    }

    #[test]
    fn torus_budget_guard() {
        let b = TorusBudget { max_terms: 100 };
        assert!(matches!(
            torus_integral_power(&Instance::new(2, 2, 4).unwrap(), &b),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn monte_carlo_moment_trivial_case() {
        let cfg = QuadratureConfig {
            mc_samples: 1000,
            ..QuadratureConfig::default()
        };
        let m = moment_monte_carlo(&Instance::new(2, 1, 1).unwrap(), &cfg).unwrap();
        assert!((m.estimate - 1.0).abs() < 1e-12);
        assert!(m.standard_error < 1e-12);
        let few = QuadratureConfig {
            mc_samples: 10,
            ..QuadratureConfig::default()
        };
        assert!(moment_monte_carlo(&Instance::new(2, 1, 1).unwrap(), &few).is_err());
    }

    #[test]
    fn weighted_norm_of_zero_is_zero() {
        let f = ConstantField {
            dim: 2,
            value: Complex64::new(0.0, 0.0),
        };
        let ball = Ball::centered(2, 10.0).unwrap();
        let r = weighted_norm(&f, &ball, 4.0, &WeightProfile::standard(2), &QuadratureConfig::default(), Normalization::Sharp)
            .unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.truncation_bound, 0.0);
    }
}

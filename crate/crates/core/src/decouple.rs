//! Ratio experiments for decoupling-type inequalities at desk scale.
//!
//! Every experiment evaluates the per-cell integrals `I_c(x)` once on a
//! quadrature rule for the ball and reuses them for all trial functions and
//! exponents. Reported ratios are lower bounds for the corresponding
//! constants, up to quadrature error. With convergence checking on, each
//! ratio is recomputed with twice the samples (the original ones plus new
//! ones) and twice the panel density; a relative shift of more than the
//! tolerance marks the ratio unconverged.

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{rng_for, unit_ball_volume, Ball, CellRange, StepFunction, WeightProfile};
use crate::error::{Error, Result};
use crate::expsum::{CellIntegrator, QuadratureConfig};
use crate::fit::{fit_log_log, LineFit};
use crate::quadrature::{BallRule, BallScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub quad: QuadratureConfig,
    /// Weight used for every norm; `None` selects [`experiment_profile`].
    pub profile: Option<WeightProfile>,
    pub check_convergence: bool,
    pub convergence_tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            quad: QuadratureConfig {
                panels_per_oscillation: 1.0,
                nodes_per_panel: 8,
                mc_samples: 32_768,
                core_radius: Some(1.0),
                ..QuadratureConfig::default()
            },
            profile: None,
            check_convergence: true,
            convergence_tolerance: 0.05,
        }
    }
}

/// `w_B` with exponent `2n`, cut off at `4B`.
pub fn experiment_profile(n: usize) -> WeightProfile {
    WeightProfile {
        exponent: 2 * n as u32,
        truncation_factor: 4.0,
    }
}

impl ExperimentConfig {
    pub fn profile(&self, n: usize) -> WeightProfile {
        self.profile.unwrap_or_else(|| experiment_profile(n))
    }

    /// Twice the samples and twice the panel density.
    pub fn refined(&self) -> Self {
        let mut quad = self.quad;
        quad.mc_samples *= 2;
        quad.panels_per_oscillation *= 2.0;
        if let BallScheme::Grid { panels_per_axis } = quad.scheme {
            quad.scheme = BallScheme::Grid {
                panels_per_axis: 2 * panels_per_axis,
            };
        }
        Self {
            quad,
            check_convergence: false,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        if !(self.convergence_tolerance > 0.0) {
            return Err(Error::invalid("convergence tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    /// One standard error propagated from the sampled norms.
    pub quadrature_error: f64,
    pub refined_ratio: Option<f64>,
    pub converged: Option<bool>,
}

impl RatioEstimate {
    fn new(ratio: f64, quadrature_error: f64, refined: Option<f64>, tol: f64) -> Self {
        Self {
            ratio,
            quadrature_error,
            refined_ratio: refined,
            converged: refined.map(|r| relative_shift(ratio, r) < tol),
        }
    }
}

pub fn relative_shift(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// sampling engine

/// `I_c(x_k)` for the cells of `range` at every point of a ball rule.
struct CellSamples<'r> {
    rule: &'r BallRule,
    range: CellRange,
    values: Vec<Complex64>,
}

impl<'r> CellSamples<'r> {
    fn new(rule: &'r BallRule, integrator: &CellIntegrator, range: CellRange, center: &[f64]) -> Result<Self> {
        let dim = rule.dim();
        let rows = (0..rule.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |point, k| {
                    rule.point(k, center, point);
                    integrator.integrals(range, point)
                },
            )
            .collect::<Result<Vec<Vec<Complex64>>>>()?;
        Ok(Self {
            rule,
            range,
            values: rows.into_iter().flatten().collect(),
        })
    }

    fn row(&self, k: usize) -> &[Complex64] {
        let w = self.range.len();
        &self.values[k * w..(k + 1) * w]
    }

    /// `ln ∫ |Σ_c a_c I_c|^p w` and its relative standard error.
    fn ln_combination(&self, coeffs: &[Complex64], p: f64) -> (f64, f64) {
        let ln_values: Vec<f64> = (0..self.rule.len())
            .map(|k| {
                let v: Complex64 = self.row(k).iter().zip(coeffs).map(|(i, a)| i * a).sum();
                p * v.norm().ln()
            })
            .collect();
        self.rule.ln_integral(&ln_values)
    }

    /// `ln ∫ |I_c|^p w` for cell `c` of the range.
    fn ln_cell(&self, c: usize, p: f64) -> (f64, f64) {
        let w = self.range.len();
        let ln_values: Vec<f64> = (0..self.rule.len()).map(|k| p * self.values[k * w + c].norm().ln()).collect();
        self.rule.ln_integral(&ln_values)
    }
}

fn rule_for(n: usize, radius: f64, cfg: &ExperimentConfig) -> Result<BallRule> {
    BallRule::new(n, radius, &cfg.profile(n), &cfg.quad.ball_rule_config())
}

/// `‖Σ_c g_c I_c‖_p ÷ (Σ_c ‖g_c I_c‖_p²)^{1/2}` over the cells of the
/// samples' range; `g` holds the coefficients of that range.
fn split_ratio(samples: &CellSamples, g: &[Complex64], p: f64) -> Result<(f64, f64)> {
    let (ln_lhs, se_lhs) = samples.ln_combination(g, p);
    let mut ln_terms = Vec::new();
    let mut se_max: f64 = 0.0;
    for (c, gc) in g.iter().enumerate() {
        if gc.norm() == 0.0 {
            continue;
        }
        let (ln_c, se_c) = samples.ln_cell(c, p);
        ln_terms.push(2.0 * (gc.norm().ln() + ln_c / p));
        se_max = se_max.max(se_c);
    }
    if ln_terms.is_empty() {
        return Err(Error::invalid("trial function vanishes on every piece"));
    }
    let ln_rhs = 0.5 * crate::domain::log_sum_exp(&ln_terms);
    let ratio = (ln_lhs / p - ln_rhs).exp();
    if !ratio.is_finite() {
        return Err(Error::invalid("ratio is not finite; increase the quadrature density"));
    }
    Ok((ratio, ratio * (se_lhs + se_max) / p))
}

/// Smallest cell range containing the support of `g`.
fn support(g: &StepFunction) -> Result<CellRange> {
    let nz: Vec<usize> = (0..g.cells()).filter(|&c| g.coeffs()[c].norm() > 0.0).collect();
    match (nz.first(), nz.last()) {
        (Some(&a), Some(&b)) => CellRange::new(a, b + 1),
        _ => Err(Error::invalid("trial function is identically zero")),
    }
}

fn check_p(p: f64, min: f64) -> Result<()> {
    if !(p >= min) || !p.is_finite() {
        return Err(Error::invalid(format!("exponent p must be at least {min}, got {p}")));
    }
    Ok(())
}

/// `1/δ` as an integer, if it is one.
pub fn reciprocal_integer(delta: f64) -> Result<usize> {
    let m = (1.0 / delta).round();
    if !(delta > 0.0) || m < 1.0 || ((1.0 / delta) - m).abs() > 1e-9 * m {
        return Err(Error::invalid(format!("1/δ must be a positive integer, got δ = {delta}")));
    }
    Ok(m as usize)
}

// ---------------------------------------------------------------------------
// main decoupling ratio

/// `‖E_{[0,1]} g‖_{L^p(w_B)} ÷ (Σ_{|J|=δ} ‖E_J g‖²_{L^p(w_B)})^{1/2}` where `δ`
/// is the cell width of `g`. The standard ball radius is `δ^{-n}`; any other
/// radius is accepted as given.
pub fn decoupling_ratio(n: usize, p: f64, g: &StepFunction, ball: &Ball, cfg: &ExperimentConfig) -> Result<RatioEstimate> {
    check_p(p, 1.0)?;
    cfg.validate()?;
    if ball.dim() != n {
        return Err(Error::invalid("ball dimension differs from n"));
    }
    let range = support(g)?;
    let coeffs = &g.coeffs()[range.start..range.end];
    let run = |c: &ExperimentConfig| -> Result<(f64, f64)> {
        let rule = rule_for(n, ball.radius, c)?;
        let integrator = CellIntegrator::new(g.cells(), &c.quad)?;
        let samples = CellSamples::new(&rule, &integrator, range, &ball.center)?;
        split_ratio(&samples, coeffs, p)
    };
    let (ratio, err) = run(cfg)?;
    let refined = if cfg.check_convergence { Some(run(&cfg.refined())?.0) } else { None };
    Ok(RatioEstimate::new(ratio, err, refined, cfg.convergence_tolerance))
}

/// Which trial functions a scan uses at each `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialFamily {
    /// `g ≡ 1`, then random unimodular coefficients.
    Standard,
    /// Random unimodular coefficients only.
    Random,
    /// Indicators of single cells, cycling through the grid.
    SingleCell,
}

/// Trial `t` of a family on an `m`-cell grid; seeds are split per trial.
pub fn trial_function(family: TrialFamily, m: usize, t: usize, seed: u64) -> Result<StepFunction> {
    let one = Complex64::new(1.0, 0.0);
    match family {
        TrialFamily::Standard if t == 0 => StepFunction::constant(m, one),
        TrialFamily::Standard | TrialFamily::Random => StepFunction::random_unimodular(m, &mut rng_for(seed, t as u64)),
        TrialFamily::SingleCell => StepFunction::indicator(m, t % m, one),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub delta: f64,
    pub ball_radius: f64,
    pub ratios: Vec<f64>,
    pub quadrature_errors: Vec<f64>,
    pub refined_ratios: Option<Vec<f64>>,
    pub converged: Vec<bool>,
    /// Maximum over converged trials (over all trials when none converged
    /// or convergence was not checked).
    pub max_ratio: f64,
    /// Trial attaining `max_ratio`.
    pub argmax: usize,
    /// Maximum over every trial, converged or not.
    pub max_ratio_all: f64,
    /// Trials left out of `max_ratio` because they did not converge.
    pub excluded: Vec<usize>,
}

impl ScanPoint {
    fn from_parts(delta: f64, ball_radius: f64, base: Vec<(f64, f64)>, refined: Option<Vec<f64>>, tol: f64) -> Self {
        let converged = match &refined {
            Some(r) => base.iter().zip(r).map(|(a, b)| relative_shift(a.0, *b) < tol).collect(),
            None => vec![false; base.len()],
        };
        Self::assemble(delta, ball_radius, base, refined, converged)
    }

    fn assemble(delta: f64, ball_radius: f64, base: Vec<(f64, f64)>, refined: Option<Vec<f64>>, converged: Vec<bool>) -> Self {
        let ratios: Vec<f64> = base.iter().map(|r| r.0).collect();
        let excluded: Vec<usize> = match &refined {
            Some(_) => (0..ratios.len()).filter(|&i| !converged[i]).collect(),
            None => vec![],
        };
        let pick = |allowed: &dyn Fn(usize) -> bool| {
            (0..ratios.len())
                .filter(|&i| allowed(i))
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if ratios[b] >= ratios[i] => Some(b),
                    _ => Some(i),
                })
        };
        let all = pick(&|_| true).expect("at least one trial");
        let argmax = pick(&|i| !excluded.contains(&i)).unwrap_or(all);
        Self {
            delta,
            ball_radius,
            max_ratio: ratios[argmax],
            max_ratio_all: ratios[all],
            excluded,
            quadrature_errors: base.iter().map(|r| r.1).collect(),
            ratios,
            refined_ratios: refined,
            converged,
            argmax,
        }
    }

    pub fn all_converged(&self) -> bool {
        self.refined_ratios.is_some() && self.converged.iter().all(|&c| c)
    }

    /// Whether the reported maximum comes from a converged trial.
    pub fn max_converged(&self) -> bool {
        self.refined_ratios.is_some() && self.converged[self.argmax]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpScan {
    pub n: usize,
    pub p: f64,
    pub seed: u64,
    pub trials: usize,
    pub family: TrialFamily,
    pub points: Vec<ScanPoint>,
    /// `−slope` of `ln max ratio` against `ln δ`; needs two or more `δ`.
    pub eta_hat: Option<f64>,
    pub fit: Option<LineFit>,
}

impl VpScan {
    pub fn all_converged(&self) -> bool {
        self.points.iter().all(ScanPoint::all_converged)
    }

    pub fn excluded_trials(&self) -> usize {
        self.points.iter().map(|p| p.excluded.len()).sum()
    }
}

/// Per-`δ` maxima of [`decoupling_ratio`] over a trial family on balls of
/// radius `δ^{-n}` at the origin, for several `p` sharing one set of samples.
pub fn vp_scan_multi(
    n: usize,
    ps: &[f64],
    deltas: &[f64],
    trials: usize,
    family: TrialFamily,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<Vec<VpScan>> {
    if trials == 0 {
        return Err(Error::invalid("a scan needs at least one trial"));
    }
    if deltas.is_empty() || ps.is_empty() {
        return Err(Error::invalid("a scan needs at least one δ and one p"));
    }
    for &p in ps {
        check_p(p, 1.0)?;
    }
    cfg.validate()?;
    let mut points: Vec<Vec<ScanPoint>> = vec![Vec::new(); ps.len()];
    for &delta in deltas {
        let m = reciprocal_integer(delta)?;
        let radius = (m as f64).powi(n as i32);
        let gs: Vec<StepFunction> = (0..trials).map(|t| trial_function(family, m, t, seed)).collect::<Result<_>>()?;
        let evaluate = |c: &ExperimentConfig| -> Result<Vec<Vec<(f64, f64)>>> {
            let rule = rule_for(n, radius, c)?;
            let integrator = CellIntegrator::new(m, &c.quad)?;
            let samples = CellSamples::new(&rule, &integrator, CellRange::whole(m), &vec![0.0; n])?;
            ps.iter()
                .map(|&p| gs.iter().map(|g| split_ratio(&samples, g.coeffs(), p)).collect())
                .collect()
        };
        let base = evaluate(cfg)?;
        let refined = if cfg.check_convergence { Some(evaluate(&cfg.refined())?) } else { None };
        for (i, b) in base.into_iter().enumerate() {
            let r = refined.as_ref().map(|r| r[i].iter().map(|x| x.0).collect());
            points[i].push(ScanPoint::from_parts(delta, radius, b, r, cfg.convergence_tolerance));
        }
    }
    ps.iter()
        .zip(points)
        .map(|(&p, pts)| {
            let fit = if pts.len() >= 2 {
                let xs: Vec<f64> = pts.iter().map(|q| q.delta).collect();
                let ys: Vec<f64> = pts.iter().map(|q| q.max_ratio).collect();
                Some(fit_log_log(&xs, &ys)?)
            } else {
                None
            };
            Ok(VpScan {
                n,
                p,
                seed,
                trials,
                family,
                eta_hat: fit.as_ref().map(|f| -f.slope),
                fit,
                points: pts,
            })
        })
        .collect()
}

pub fn vp_scan(n: usize, p: f64, deltas: &[f64], trials: usize, seed: u64, cfg: &ExperimentConfig) -> Result<VpScan> {
    Ok(vp_scan_multi(n, &[p], deltas, trials, TrialFamily::Standard, seed, cfg)?.remove(0))
}

// ---------------------------------------------------------------------------
// L² orthogonality

/// `‖E g‖²_{L²(w_B)} ÷ Σ_c ‖E_c g‖²_{L²(w_B)}` on a ball of radius `1/δ`
/// centered at the origin, `δ` the cell width of `g`.
pub fn l2_orthogonality_ratio(n: usize, g: &StepFunction, cfg: &ExperimentConfig) -> Result<RatioEstimate> {
    let ball = Ball::centered(n, g.cells() as f64)?;
    let est = decoupling_ratio(n, 2.0, g, &ball, cfg)?;
    Ok(RatioEstimate {
        ratio: est.ratio * est.ratio,
        quadrature_error: 2.0 * est.ratio * est.quadrature_error,
        refined_ratio: est.refined_ratio.map(|r| r * r),
        converged: est
            .refined_ratio
            .map(|r| relative_shift(est.ratio * est.ratio, r * r) < cfg.convergence_tolerance),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Scan {
    pub n: usize,
    pub seed: u64,
    pub trials: usize,
    pub points: Vec<ScanPoint>,
    /// Max ratio at the finest `δ` over the max ratio at the coarsest.
    pub growth: f64,
}

/// Orthogonality ratios for `trials` random unimodular `g` at each `δ`.
pub fn l2_scan(n: usize, deltas: &[f64], trials: usize, seed: u64, cfg: &ExperimentConfig) -> Result<L2Scan> {
    if trials == 0 || deltas.is_empty() {
        return Err(Error::invalid("a scan needs at least one trial and one δ"));
    }
    cfg.validate()?;
    let mut points = Vec::new();
    for &delta in deltas {
        let m = reciprocal_integer(delta)?;
        let radius = m as f64;
        let gs: Vec<StepFunction> = (0..trials)
            .map(|t| trial_function(TrialFamily::Random, m, t, seed))
            .collect::<Result<_>>()?;
        let evaluate = |c: &ExperimentConfig| -> Result<Vec<(f64, f64)>> {
            let rule = rule_for(n, radius, c)?;
            let integrator = CellIntegrator::new(m, &c.quad)?;
            let samples = CellSamples::new(&rule, &integrator, CellRange::whole(m), &vec![0.0; n])?;
            gs.iter()
                .map(|g| split_ratio(&samples, g.coeffs(), 2.0).map(|(r, e)| (r * r, 2.0 * r * e)))
                .collect()
        };
        let base = evaluate(cfg)?;
        let refined = if cfg.check_convergence {
            Some(evaluate(&cfg.refined())?.into_iter().map(|x| x.0).collect())
        } else {
            None
        };
        points.push(ScanPoint::from_parts(delta, radius, base, refined, cfg.convergence_tolerance));
    }
    let coarsest = points.iter().max_by(|a, b| a.delta.total_cmp(&b.delta)).expect("nonempty");
    let finest = points.iter().min_by(|a, b| a.delta.total_cmp(&b.delta)).expect("nonempty");
    let growth = finest.max_ratio / coarsest.max_ratio;
    Ok(L2Scan {
        n,
        seed,
        trials,
        points,
        growth,
    })
}

// ---------------------------------------------------------------------------
// lower-dimensional decoupling

/// For the curve in `ℝ³`: `‖E_I g‖_{L^p_♯(w_B)} ÷ (Σ_{|J|=R^{-1/2}} ‖E_J g‖²_{L^p_♯(w_B)})^{1/2}`
/// with `I = [t0, t0+σ]` and `B` of radius `R` at the origin. The cells of
/// `g` are the pieces `J`, so `g` must have `√R` cells, and `I` must be a
/// union of cells.
pub fn lower_dim_ratio(t0: f64, sigma: f64, radius: f64, p: f64, g: &StepFunction, cfg: &ExperimentConfig) -> Result<RatioEstimate> {
    let n = 3;
    check_p(p, 1.0)?;
    let m = g.cells();
    if ((m * m) as f64 - radius).abs() > 1e-9 * radius {
        return Err(Error::invalid(format!("pieces of length R^(-1/2) need √R = {m} cells, got R = {radius}")));
    }
    let start = t0 * m as f64;
    let len = sigma * m as f64;
    if (start - start.round()).abs() > 1e-9 || (len - len.round()).abs() > 1e-9 || len.round() < 1.0 {
        return Err(Error::invalid("I = [t0, t0+σ] must be a union of pieces"));
    }
    if sigma.powi(-2) > radius * (1.0 + 1e-9) {
        return Err(Error::invalid("lower-dimensional decoupling needs σ^(-2) ≤ R"));
    }
    let range = CellRange::new(start.round() as usize, (start + len).round() as usize)?;
    let restricted: Vec<Complex64> = (0..m)
        .map(|c| if c >= range.start && c < range.end { g.coeffs()[c] } else { Complex64::new(0.0, 0.0) })
        .collect();
    let g_i = StepFunction::new(restricted)?;
    // sharp normalization divides both sides by the same |B|
    decoupling_ratio(n, p, &g_i, &Ball::centered(n, radius)?, cfg)
}

// ---------------------------------------------------------------------------
// discrete restriction

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictionEstimate {
    /// `(∫ |f|^p w_B / ∫ w_B)^{1/p}`
    pub lhs: f64,
    /// `lhs / ‖a‖₂`
    pub normalized_lhs: f64,
    /// `lhs / (‖a‖₂ (1 + N^{(1 − n(n+1)/p)/2}))`
    pub estimate: RatioEstimate,
}

/// `f(x) = Σ_i a_i e(x_1 t_i + … + x_n t_i^n)` averaged against `w_B` over a
/// ball of radius `R ≥ N^n` at the origin.
pub fn discrete_restriction_ratio(
    n: usize,
    p: f64,
    a: &[Complex64],
    t: &[f64],
    radius: f64,
    cfg: &ExperimentConfig,
) -> Result<RestrictionEstimate> {
    check_p(p, 1.0)?;
    cfg.validate()?;
    let big_n = a.len();
    if big_n == 0 || t.len() != big_n {
        return Err(Error::invalid("need one point t_i per coefficient a_i"));
    }
    for (i, &ti) in t.iter().enumerate() {
        let (lo, hi) = (i as f64 / big_n as f64, (i + 1) as f64 / big_n as f64);
        if !(ti > lo && ti <= hi) {
            return Err(Error::invalid(format!("t_{} = {ti} is not in ({lo}, {hi}]", i + 1)));
        }
    }
    let norm_a = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm_a == 0.0 {
        return Err(Error::invalid("coefficient vector is zero"));
    }
    if radius < (big_n as f64).powi(n as i32) * (1.0 - 1e-12) {
        return Err(Error::invalid(format!("ball radius must be at least N^n = {}", (big_n as f64).powi(n as i32))));
    }
    let run = |c: &ExperimentConfig| -> Result<(f64, f64)> {
        let rule = rule_for(n, radius, c)?;
        let center = vec![0.0; n];
        let ln_values: Vec<f64> = (0..rule.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, k| {
                    rule.point(k, &center, x);
                    let f: Complex64 = a
                        .iter()
                        .zip(t)
                        .map(|(ai, &ti)| {
                            let mut phase = 0.0;
                            for &xi in x.iter().rev() {
                                phase = (phase + xi) * ti;
                            }
                            ai * crate::domain::e_of(phase)
                        })
                        .sum();
                    p * f.norm().ln()
                },
            )
            .collect();
        let (ln_f, se_f) = rule.ln_integral(&ln_values);
        let (ln_w, se_w) = rule.ln_integral(&vec![0.0; rule.len()]);
        let lhs = ((ln_f - ln_w) / p).exp();
        Ok((lhs, lhs * (se_f + se_w) / p))
    };
    let denom = norm_a * (1.0 + (big_n as f64).powf(0.5 * (1.0 - (n * (n + 1)) as f64 / p)));
    let (lhs, err) = run(cfg)?;
    let refined = if cfg.check_convergence { Some(run(&cfg.refined())?.0 / denom) } else { None };
    Ok(RestrictionEstimate {
        lhs,
        normalized_lhs: lhs / norm_a,
        estimate: RatioEstimate::new(lhs / denom, err / denom, refined, cfg.convergence_tolerance),
    })
}

// ---------------------------------------------------------------------------
// ball inflation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationEstimate {
    pub estimate: RatioEstimate,
    /// Balls in the full cover of `B`.
    pub cover_size: usize,
    /// Balls actually averaged over.
    pub cover_used: usize,
}

/// Centers `r·ℤ²` (spacing equal to the small radius) lying in `B`.
pub fn cover_centers(big_radius: f64, small_radius: f64) -> Vec<[f64; 2]> {
    let k = (big_radius / small_radius).floor() as i64;
    let mut out = Vec::new();
    for i in -k..=k {
        for j in -k..=k {
            let c = [i as f64 * small_radius, j as f64 * small_radius];
            if c[0].hypot(c[1]) <= big_radius * (1.0 + 1e-12) {
                out.push(c);
            }
        }
    }
    out
}

/// Bilinear ball inflation in the plane with `M = 2`. The pieces are the
/// `ρ`-cells of `g`; `I_1 = [0, 1/K)` and `I_2 = [2/K, 3/K)`. For a ball `D`,
/// `S_i(D) = Σ_{J ⊂ I_i} ‖E_J g‖²_{L^{p/2}_♯(w_D)}` and `V(D) = Π_i S_i(D)^{p/4}`.
/// Returns the average of `V` over a cover of `B` (radius `ρ^{-2}`) by balls
/// of radius `ρ^{-1}`, divided by `V(B)`. `cover_balls` limits the average
/// to a seeded random subset of the cover.
pub fn ball_inflation_ratio(
    p: f64,
    k: usize,
    g: &StepFunction,
    cover_balls: Option<usize>,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<InflationEstimate> {
    check_p(p, 4.0)?;
    cfg.validate()?;
    let cells = g.cells();
    if k < 4 || cells % k != 0 || cells == k {
        return Err(Error::invalid(format!(
            "need K ≥ 4 with ρ = 1/{cells} a proper divisor of 1/K = 1/{k}"
        )));
    }
    let per = cells / k;
    let ranges = [CellRange::new(0, per)?, CellRange::new(2 * per, 3 * per)?];
    let rho_inv = cells as f64;
    let big = rho_inv * rho_inv;
    let all = cover_centers(big, rho_inv);
    let cover: Vec<[f64; 2]> = match cover_balls {
        Some(m) if m == 0 => return Err(Error::invalid("cover subset must be nonempty")),
        Some(m) if m < all.len() => {
            let mut idx = sample_indices(&mut rng_for(seed, u64::MAX), all.len(), m).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| all[i]).collect()
        }
        _ => all.clone(),
    };
    let q = p / 2.0;
    let run = |c: &ExperimentConfig| -> Result<(f64, f64)> {
        let integrator = CellIntegrator::new(cells, &c.quad)?;
        let small_rule = rule_for(2, rho_inv, c)?;
        let big_rule = rule_for(2, big, c)?;
        let value = |rule: &BallRule, center: &[f64]| -> Result<(f64, f64)> {
            let ln_vol = (unit_ball_volume(2) * rule.radius() * rule.radius()).ln();
            let mut ln_v = 0.0;
            let mut se: f64 = 0.0;
            for range in ranges {
                let samples = CellSamples::new(rule, &integrator, range, center)?;
                let coeffs = &g.coeffs()[range.start..range.end];
                let mut terms = Vec::new();
                for (cell, gc) in coeffs.iter().enumerate() {
                    if gc.norm() == 0.0 {
                        continue;
                    }
                    let (ln_c, se_c) = samples.ln_cell(cell, q);
                    terms.push(2.0 * (gc.norm().ln() + (ln_c - ln_vol) / q));
                    se = se.max(se_c);
                }
                if terms.is_empty() {
                    return Err(Error::invalid("g vanishes on one of the two intervals"));
                }
                ln_v += p / 4.0 * crate::domain::log_sum_exp(&terms);
            }
            Ok((ln_v, se))
        };
        let (ln_rhs, se_rhs) = value(&big_rule, &[0.0, 0.0])?;
        let mut ln_terms = Vec::with_capacity(cover.len());
        let mut se: f64 = se_rhs;
        for center in &cover {
            let (v, s) = value(&small_rule, center)?;
            ln_terms.push(v);
            se = se.max(s);
        }
        let ln_lhs = crate::domain::log_sum_exp(&ln_terms) - (cover.len() as f64).ln();
        let ratio = (ln_lhs - ln_rhs).exp();
        Ok((ratio, ratio * se * p / q))
    };
    let (ratio, err) = run(cfg)?;
    let refined = if cfg.check_convergence { Some(run(&cfg.refined())?.0) } else { None };
    Ok(InflationEstimate {
        estimate: RatioEstimate::new(ratio, err, refined, cfg.convergence_tolerance),
        cover_size: all.len(),
        cover_used: cover.len(),
    })
}

// ---------------------------------------------------------------------------
// records

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    MainDecoupling,
    L2Orth,
    LowerDim,
    DiscreteRestriction,
    BallInflation,
}

/// One experiment's per-trial ratios, as written to manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioExperiment {
    pub inequality_id: InequalityId,
    pub n: usize,
    pub p: f64,
    pub delta: f64,
    pub seed: u64,
    pub trials: usize,
    pub ratios: Vec<f64>,
    pub quadrature_errors: Vec<f64>,
    pub refined_ratios: Option<Vec<f64>>,
    pub converged: Vec<bool>,
    /// Maximum over converged trials.
    pub max_ratio: f64,
    /// Unconverged trials, left out of `max_ratio`.
    pub excluded: Vec<usize>,
}

impl RatioExperiment {
    pub fn from_scan_point(inequality_id: InequalityId, n: usize, p: f64, seed: u64, point: &ScanPoint) -> Self {
        Self {
            inequality_id,
            n,
            p,
            delta: point.delta,
            seed,
            trials: point.ratios.len(),
            ratios: point.ratios.clone(),
            quadrature_errors: point.quadrature_errors.clone(),
            refined_ratios: point.refined_ratios.clone(),
            converged: point.converged.clone(),
            max_ratio: point.max_ratio,
            excluded: point.excluded.clone(),
        }
    }

    pub fn from_estimates(inequality_id: InequalityId, n: usize, p: f64, delta: f64, seed: u64, estimates: &[RatioEstimate]) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::EmptySelection("no ratio estimates to record".into()));
        }
        let base = estimates.iter().map(|e| (e.ratio, e.quadrature_error)).collect();
        let refined = estimates.iter().map(|e| e.refined_ratio).collect();
        let converged = estimates.iter().map(|e| e.converged.unwrap_or(false)).collect();
        let point = ScanPoint::assemble(delta, 0.0, base, refined, converged);
        Ok(Self::from_scan_point(inequality_id, n, p, seed, &point))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(samples: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.quad.mc_samples = samples;
        cfg.check_convergence = false;
        cfg
    }

    #[test]
    fn single_cell_gives_one() {
        let g = StepFunction::indicator(8, 3, Complex64::new(0.3, -1.2)).unwrap();
        let est = decoupling_ratio(2, 6.0, &g, &Ball::centered(2, 64.0).unwrap(), &quick(2048)).unwrap();
        assert!((est.ratio - 1.0).abs() < 1e-12);
        let est = l2_orthogonality_ratio(2, &g, &quick(2048)).unwrap();
        assert!((est.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_g_baseline_is_between_bounds() {
        let g = StepFunction::constant(8, Complex64::new(1.0, 0.0)).unwrap();
        let est = decoupling_ratio(2, 6.0, &g, &Ball::centered(2, 64.0).unwrap(), &quick(4096)).unwrap();
        assert!(est.ratio >= 0.5 && est.ratio <= 8f64.sqrt() * (1.0 + 1e-6), "{}", est.ratio);
    }

    #[test]
    fn ratios_are_homogeneous() {
        let g = StepFunction::random_unimodular(4, &mut rng_for(5, 0)).unwrap();
        let ball = Ball::centered(2, 16.0).unwrap();
        let cfg = quick(2048);
        let a = decoupling_ratio(2, 4.0, &g, &ball, &cfg).unwrap().ratio;
        for factor in [Complex64::new(3.5, 0.0), Complex64::new(0.6, 0.8), Complex64::new(-1e-3, 2e-3)] {
            let b = decoupling_ratio(2, 4.0, &g.scaled(factor), &ball, &cfg).unwrap().ratio;
            assert!(relative_shift(a, b) < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn scan_with_single_cells_is_one() {
        let scan = vp_scan_multi(2, &[6.0], &[0.25], 1, TrialFamily::SingleCell, 1, &quick(1024)).unwrap();
        assert!((scan[0].points[0].max_ratio - 1.0).abs() < 1e-6);
        assert!(scan[0].eta_hat.is_none());
    }

    #[test]
    fn scans_are_reproducible() {
        let run = || vp_scan_multi(2, &[4.0, 6.0], &[0.25, 0.125], 3, TrialFamily::Standard, 9, &quick(1024)).unwrap();
        assert_eq!(serde_json::to_string(&run()).unwrap(), serde_json::to_string(&run()).unwrap());
    }

    #[test]
    fn rejects_non_reciprocal_delta() {
        assert!(reciprocal_integer(0.3).is_err());
        assert_eq!(reciprocal_integer(1.0 / 32.0).unwrap(), 32);
    }

    #[test]
    fn single_wave_restriction_is_exact() {
        let mut a = vec![Complex64::new(0.0, 0.0); 8];
        a[5] = Complex64::new(0.0, 2.5);
        let t: Vec<f64> = (1..=8).map(|i| i as f64 / 8.0).collect();
        let r = discrete_restriction_ratio(2, 6.0, &a, &t, 64.0, &quick(2048)).unwrap();
        assert!((r.lhs - 2.5).abs() < 1e-12);
        assert!(r.estimate.ratio <= 1.0);
    }

    #[test]
    fn restriction_preconditions() {
        let a = vec![Complex64::new(1.0, 0.0); 4];
        let bad_t = vec![0.1, 0.2, 0.6, 1.0];
        assert!(discrete_restriction_ratio(2, 6.0, &a, &bad_t, 16.0, &quick(64)).is_err());
        let t = vec![0.25, 0.5, 0.75, 1.0];
        assert!(discrete_restriction_ratio(2, 6.0, &a, &t, 8.0, &quick(64)).is_err());
    }

    #[test]
    fn lower_dim_single_piece_is_one() {
        let g = StepFunction::constant(4, Complex64::new(1.0, 0.0)).unwrap();
        let r = lower_dim_ratio(0.25, 0.25, 16.0, 6.0, &g, &quick(1024)).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
        assert!(lower_dim_ratio(0.1, 0.25, 16.0, 6.0, &g, &quick(64)).is_err());
    }

    #[test]
    fn cover_is_symmetric_and_inside() {
        let c = cover_centers(64.0, 8.0);
        assert!(c.iter().all(|x| x[0].hypot(x[1]) <= 64.0));
        assert!(c.contains(&[0.0, 0.0]) && c.contains(&[64.0, 0.0]) && c.contains(&[-8.0, 56.0]));
    }

    #[test]
    fn inflation_with_grid_rule_and_single_pieces() {
        // one piece per interval and a deterministic rule
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 8];
        coeffs[0] = Complex64::new(1.0, 0.0);
        coeffs[4] = Complex64::new(1.0, 0.0);
        let g = StepFunction::new(coeffs).unwrap();
        let mut cfg = quick(0);
        cfg.quad.mc_samples = 1;
        cfg.quad.scheme = BallScheme::Grid { panels_per_axis: 16 };
        cfg.quad.nodes_per_panel = 4;
        let r = ball_inflation_ratio(4.0, 4, &g, Some(12), 3, &cfg).unwrap();
        assert!(r.estimate.ratio.is_finite() && r.estimate.ratio > 0.0);
        assert_eq!(r.cover_used, 12);
    }
}

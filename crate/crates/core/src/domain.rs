//! Shared domain types: Vinogradov instances, power-sum keys, balls and the
//! polynomially decaying weight attached to them, step functions on the unit
//! interval, and deterministic seeding.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters `(n, s, N)` of the system
/// `X_1^i + … + X_s^i = X_{s+1}^i + … + X_{2s}^i`, `1 ≤ i ≤ n`, `X_k ∈ {1..N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub degree: u32,
    pub multiplicity: u32,
    pub range: u64,
}

impl Instance {
    pub fn new(degree: u32, multiplicity: u32, range: u64) -> Result<Self> {
        if degree < 2 {
            return Err(Error::invalid(format!("degree n = {degree} must be at least 2")));
        }
        if multiplicity < 1 {
            return Err(Error::invalid("multiplicity s must be at least 1"));
        }
        if range < 1 {
            return Err(Error::invalid("range N must be at least 1"));
        }
        Ok(Self {
            degree,
            multiplicity,
            range,
        })
    }

    pub fn n(&self) -> usize {
        self.degree as usize
    }

    pub fn s(&self) -> usize {
        self.multiplicity as usize
    }
}

/// `(Σ X_k, Σ X_k², …, Σ X_k^n)` over an `s`-tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PowerSumKey(pub Vec<BigInt>);

impl PowerSumKey {
    pub fn of_tuple(tuple: &[i64], n: usize) -> Self {
        let mut sums = vec![BigInt::from(0); n];
        for &x in tuple {
            let x = BigInt::from(x);
            let mut power = x.clone();
            for sum in sums.iter_mut() {
                *sum += &power;
                power *= &x;
            }
        }
        PowerSumKey(sums)
    }

    /// `s ≤ v_1 ≤ sN` and `0 < v_i ≤ sN^i`.
    pub fn within_bounds(&self, s: u64, range: u64) -> bool {
        let s = BigInt::from(s);
        let big_n = BigInt::from(range);
        let mut cap = s.clone() * &big_n;
        for (i, v) in self.0.iter().enumerate() {
            let lower_ok = if i == 0 { *v >= s } else { *v > BigInt::from(0) };
            if !lower_ok || *v > cap {
                return false;
            }
            cap *= &big_n;
        }
        true
    }
}

/// A point of `ℝ^n`, read modulo 1 when used on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(pub Vec<f64>);

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("torus point has a non-finite coordinate"));
        }
        Ok(TorusPoint(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Coordinates reduced into `[0, 1)`.
    pub fn reduced(&self) -> TorusPoint {
        TorusPoint(self.0.iter().map(|&c| frac(c)).collect())
    }
}

/// Fractional part in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("ball radius must be positive, got {radius}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("ball center has a non-finite coordinate"));
        }
        Ok(Self { center, radius })
    }

    pub fn centered(n: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; n], radius)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.center
            .iter()
            .zip(x)
            .map(|(c, xi)| (xi - c) * (xi - c))
            .sum::<f64>()
            .sqrt()
    }

    /// Lebesgue measure of the ball.
    pub fn volume(&self) -> f64 {
        unit_ball_volume(self.dim()) * self.radius.powi(self.dim() as i32)
    }
}

pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Surface measure of the unit sphere in `ℝ^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// The weight `w_B(x) = (1 + |x − c_B| / R)^(−exponent)` and the truncation
/// radius (in multiples of `R`) used when integrating against it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub exponent: u32,
    pub truncation_factor: f64,
}

impl WeightProfile {
    /// Exponent `100 n`, truncation at `4B`.
    pub fn standard(n: usize) -> Self {
        Self {
            exponent: 100 * n as u32,
            truncation_factor: 4.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if (self.exponent as usize) < n + 1 {
            return Err(Error::invalid(format!(
                "weight exponent {} must be at least n + 1 = {}",
                self.exponent,
                n + 1
            )));
        }
        if !(self.truncation_factor > 0.0) || !self.truncation_factor.is_finite() {
            return Err(Error::invalid("truncation factor must be positive"));
        }
        Ok(())
    }

    /// `w` as a function of the scaled distance `u = |x − c| / R`.
    pub fn at_scaled_distance(&self, u: f64) -> f64 {
        (1.0 + u).powf(-(self.exponent as f64))
    }

    pub fn ln_at_scaled_distance(&self, u: f64) -> f64 {
        -(self.exponent as f64) * u.ln_1p()
    }

    /// `ln ∫_{ℝ^n} w_B` for a ball of the given radius:
    /// `R^n |S^{n−1}| (n−1)! / ((E−1)(E−2)…(E−n))`.
    pub fn ln_total_integral(&self, n: usize, radius: f64) -> f64 {
        let e = self.exponent as f64;
        let ln_fact: f64 = (1..n).map(|k| (k as f64).ln()).sum();
        let ln_den: f64 = (1..=n).map(|k| (e - k as f64).ln()).sum();
        unit_sphere_area(n).ln() + n as f64 * radius.ln() + ln_fact - ln_den
    }

    /// Fraction of `∫_{ℝ^n} w_B` lying outside `truncation_factor · B`.
    ///
    /// Evaluated by radial Gauss–Legendre quadrature in log space, so it stays
    /// meaningful far below the double-precision underflow threshold. Returns
    /// the natural logarithm of the fraction.
    pub fn ln_tail_fraction(&self, n: usize) -> f64 {
        let e = self.exponent as f64;
        let t0 = self.truncation_factor.ln_1p();
        // substitute 1 + u = e^t: integrand (e^t − 1)^{n−1} e^{(1−E) t}
        let ln_integrand = |t: f64| -> f64 {
            let base = if t < 1e-300 { f64::NEG_INFINITY } else { t.exp_m1().ln() };
            (n as f64 - 1.0) * base + (1.0 - e) * t
        };
        // the integrand decays like e^{(n − E) t}
        let decay = (e - n as f64).max(0.5);
        let span = 80.0 / decay + 40.0;
        let ln_total = ln_radial_integral(ln_integrand, 0.0, span.max(t0 + span));
        let ln_tail = ln_radial_integral(ln_integrand, t0, t0 + span);
        ln_tail - ln_total
    }
}

fn ln_radial_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = crate::quadrature::gauss_legendre(16);
    let panels = 400;
    let h = (b - a) / panels as f64;
    let mut terms = Vec::with_capacity(panels * nodes.len());
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = lo + 0.5 * h * (x + 1.0);
            terms.push(f(t) + (0.5 * h * w).ln());
        }
    }
    log_sum_exp(&terms)
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `w_B(x)`. Equals 1 at the center and decreases strictly with distance.
pub fn weight_eval(ball: &Ball, profile: &WeightProfile, x: &[f64]) -> f64 {
    profile.at_scaled_distance(ball.distance_to(x) / ball.radius)
}

/// `e(z) = exp(2πi z)`, reduced mod 1 before the trigonometric call.
pub fn e_of(z: f64) -> Complex64 {
    let theta = 2.0 * PI * frac(z);
    let (s, c) = theta.sin_cos();
    Complex64::new(c, s)
}

/// A complex function on `[0, 1]`, constant on each cell `[jδ, (j+1)δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    coeffs: Vec<Complex64>,
}

impl StepFunction {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a step function needs at least one cell"));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("step function coefficient is not finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn constant(cells: usize, value: Complex64) -> Result<Self> {
        Self::new(vec![value; cells])
    }

    /// `value` on cell `index`, zero elsewhere.
    pub fn indicator(cells: usize, index: usize, value: Complex64) -> Result<Self> {
        if index >= cells {
            return Err(Error::invalid(format!("cell {index} out of range for {cells} cells")));
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); cells];
        coeffs[index] = value;
        Self::new(coeffs)
    }

    /// Independent uniformly distributed unit-modulus coefficients.
    pub fn random_unimodular(cells: usize, rng: &mut impl Rng) -> Result<Self> {
        let coeffs = (0..cells).map(|_| e_of(rng.gen::<f64>())).collect();
        Self::new(coeffs)
    }

    pub fn cells(&self) -> usize {
        self.coeffs.len()
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.coeffs.len() as f64
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn value_at(&self, t: f64) -> Complex64 {
        let idx = ((t * self.cells() as f64).floor() as isize).clamp(0, self.cells() as isize - 1);
        self.coeffs[idx as usize]
    }

    pub fn max_modulus(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: Complex64) -> StepFunction {
        StepFunction {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }
}

/// A union of whole grid cells `[start, end)` of a `cells`-cell grid on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRange {
    pub start: usize,
    pub end: usize,
}

impl CellRange {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!("empty cell range [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn whole(cells: usize) -> Self {
        Self { start: 0, end: cells }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Seeded generator for substream `stream` of `seed`. Work is always split
/// into fixed substreams so results do not depend on the thread count.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

//! Exact solution of the coupled `(ω, η)` recursion
//!
//! ```text
//! ω_j = (1 − α_j) η_j + α_j ω_{j+1}                          1 ≤ j ≤ n−1
//! η_j = (1 − β_j) (j+1)/j η_{j−1} + β_j (j+1)/j ω_j          2 ≤ j ≤ n−1
//! ω_n = θ,  η_1 = 2
//! ```
//!
//! and of the threshold question `ω_1(Δ, 0) > 1`.
//!
//! Two independent routes are used. The reduced route eliminates the `ω`
//! via `ω_j = (η_j + … + η_{n−1} + (Δ−n)θ)/(Δ−j)` and solves an
//! `(n−2)`-dimensional system for `η_2..η_{n−1}`. The full route solves all
//! `2(n−1)` equations at once. Both must agree exactly.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rational::{self, serde_exact, Rational};
use crate::weights::{alpha_closed, beta_closed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSolution {
    pub n: usize,
    #[serde(with = "serde_exact")]
    pub delta: Rational,
    #[serde(with = "serde_exact")]
    pub theta: Rational,
    /// `ω_1..ω_n`, with `ω_n = θ`
    #[serde(with = "serde_exact::vec")]
    pub omega: Vec<Rational>,
    /// `η_1..η_{n−1}`, with `η_1 = 2`
    #[serde(with = "serde_exact::vec")]
    pub eta: Vec<Rational>,
}

impl SystemSolution {
    pub fn omega(&self, j: usize) -> &Rational {
        &self.omega[j - 1]
    }

    pub fn eta(&self, j: usize) -> &Rational {
        &self.eta[j - 1]
    }

    /// Left minus right side of every equation, `ω` equations first.
    pub fn residuals(&self) -> Result<Vec<Rational>> {
        let c = Coefficients::new(self.n, &self.delta)?;
        let mut out = Vec::with_capacity(2 * self.n);
        for j in 1..self.n {
            let rhs = (Rational::one() - &c.alpha[j]) * self.eta(j) + &c.alpha[j] * self.omega(j + 1);
            out.push(self.omega(j) - rhs);
        }
        for j in 2..self.n {
            let rhs = &c.down[j] * self.eta(j - 1) + &c.across[j] * self.omega(j);
            out.push(self.eta(j) - rhs);
        }
        out.push(self.omega(self.n) - &self.theta);
        out.push(self.eta(1) - rational::int(2));
        Ok(out)
    }

    pub fn is_exact_solution(&self) -> bool {
        self.residuals().map(|r| r.iter().all(Zero::is_zero)).unwrap_or(false)
    }
}

/// `α_j`, and the two coefficients of the `η` equation, indexed by `j`.
struct Coefficients {
    alpha: Vec<Rational>,
    /// `(1 − β_j)(j+1)/j`
    down: Vec<Rational>,
    /// `β_j (j+1)/j`
    across: Vec<Rational>,
}

impl Coefficients {
    fn new(n: usize, delta: &Rational) -> Result<Self> {
        check_domain(n, delta)?;
        let mut alpha = vec![Rational::zero(); n];
        let mut down = vec![Rational::zero(); n];
        let mut across = vec![Rational::zero(); n];
        for j in 1..n {
            alpha[j] = alpha_closed(j, delta).map_err(to_singular)?;
        }
        for j in 2..n {
            let beta = beta_closed(j, delta).map_err(to_singular)?;
            let f = rational::ratio(j as i64 + 1, j as i64);
            down[j] = (Rational::one() - &beta) * &f;
            across[j] = beta * f;
        }
        Ok(Self { alpha, down, across })
    }
}

fn to_singular(e: Error) -> Error {
    match e {
        Error::DegenerateExponent(m) => Error::SingularSystem(m),
        other => other,
    }
}

/// Rejects `n < 3` and the pole set `Δ ∈ {1, …, n}`.
fn check_domain(n: usize, delta: &Rational) -> Result<()> {
    if n < 3 {
        return Err(Error::DimensionTooSmall(n));
    }
    if delta.is_integer() {
        let d = delta.to_integer();
        if d >= 1.into() && d <= n.into() {
            return Err(Error::SingularSystem(format!("Δ = {d} is a pole of the recursion for n = {n}")));
        }
    }
    Ok(())
}

/// Solves by elimination of `ω` first.
pub fn solve_reduced(n: usize, delta: &Rational, theta: &Rational) -> Result<SystemSolution> {
    let c = Coefficients::new(n, delta)?;
    let nn = rational::int(n as i64);
    let m = n - 2;
    // unknown i is η_{i+2}
    let mut a = vec![vec![Rational::zero(); m]; m];
    let mut b = vec![Rational::zero(); m];
    for j in 2..n {
        let row = j - 2;
        let jj = rational::int(j as i64);
        let dj = delta - &jj;
        let dj1 = &dj + Rational::one();
        let sum_coef = rational::int(2) * delta / (&jj * &dj * &dj1);
        a[row][row] += Rational::one();
        for k in j..n {
            a[row][k - 2] -= &sum_coef;
        }
        if j == 2 {
            b[row] += &c.down[j] * rational::int(2);
        } else {
            a[row][j - 3] -= &c.down[j];
        }
        b[row] += rational::int(2) * delta * (delta - &nn) / (&jj * &dj * &dj1) * theta;
    }
    let tail = linalg::solve(a, b)?;
    let mut eta = vec![rational::int(2)];
    eta.extend(tail);
    let mut omega = vec![Rational::zero(); n];
    omega[n - 1] = theta.clone();
    let mut suffix = Rational::zero();
    for j in (1..n).rev() {
        suffix += &eta[j - 1];
        omega[j - 1] = (&suffix + (delta - &nn) * theta) / (delta - rational::int(j as i64));
    }
    Ok(SystemSolution {
        n,
        delta: delta.clone(),
        theta: theta.clone(),
        omega,
        eta,
    })
}

/// Solves all `2(n−1)` equations directly.
pub fn solve_full(n: usize, delta: &Rational, theta: &Rational) -> Result<SystemSolution> {
    let c = Coefficients::new(n, delta)?;
    let dim = 2 * (n - 1);
    // unknowns: ω_1..ω_{n−1} at 0..n−2, η_1..η_{n−1} at n−1..2n−3
    let w = |j: usize| j - 1;
    let e = |j: usize| n - 2 + j;
    let mut a = vec![vec![Rational::zero(); dim]; dim];
    let mut b = vec![Rational::zero(); dim];
    let mut row = 0;
    for j in 1..n {
        a[row][w(j)] += Rational::one();
        a[row][e(j)] -= Rational::one() - &c.alpha[j];
        if j + 1 < n {
            a[row][w(j + 1)] -= &c.alpha[j];
        } else {
            b[row] += &c.alpha[j] * theta;
        }
        row += 1;
    }
    a[row][e(1)] = Rational::one();
    b[row] = rational::int(2);
    row += 1;
    for j in 2..n {
        a[row][e(j)] += Rational::one();
        a[row][e(j - 1)] -= &c.down[j];
        a[row][w(j)] -= &c.across[j];
        row += 1;
    }
    let x = linalg::solve(a, b)?;
    let mut omega: Vec<Rational> = x[..n - 1].to_vec();
    omega.push(theta.clone());
    Ok(SystemSolution {
        n,
        delta: delta.clone(),
        theta: theta.clone(),
        omega,
        eta: x[n - 1..].to_vec(),
    })
}

/// Reduced-route solution, checked against the full route and by exact
/// substitution.
pub fn solve_system(n: usize, delta: &Rational, theta: &Rational) -> Result<SystemSolution> {
    let reduced = solve_reduced(n, delta, theta)?;
    let full = solve_full(n, delta, theta)?;
    if reduced != full {
        return Err(Error::SingularSystem(format!(
            "reduced and full solutions disagree at n = {n}, Δ = {}",
            rational::to_exact_string(delta)
        )));
    }
    if !reduced.is_exact_solution() {
        return Err(Error::SingularSystem("nonzero residual after solving".into()));
    }
    Ok(reduced)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineOmega1 {
    pub n: usize,
    #[serde(with = "serde_exact")]
    pub delta: Rational,
    /// `ω_1(Δ, 0)`
    #[serde(with = "serde_exact")]
    pub a: Rational,
    /// `ω_1(Δ, 1) − ω_1(Δ, 0)`
    #[serde(with = "serde_exact")]
    pub b: Rational,
}

impl AffineOmega1 {
    pub fn at(&self, theta: &Rational) -> Rational {
        &self.a + &self.b * theta
    }
}

/// `ω_1(Δ, θ) = A + B θ`, with the affine form checked at a third `θ`.
pub fn omega1_affine(n: usize, delta: &Rational) -> Result<AffineOmega1> {
    let a = solve_system(n, delta, &Rational::zero())?.omega[0].clone();
    let b = &solve_system(n, delta, &Rational::one())?.omega[0] - &a;
    let out = AffineOmega1 {
        n,
        delta: delta.clone(),
        a,
        b,
    };
    let probe = rational::ratio(-7, 3);
    let got = solve_system(n, delta, &probe)?.omega[0].clone();
    if got != out.at(&probe) {
        return Err(Error::NonAffine(format!(
            "ω_1 at θ = -7/3 is {} but the affine form gives {}",
            rational::to_exact_string(&got),
            rational::to_exact_string(&out.at(&probe))
        )));
    }
    Ok(out)
}

/// `θ = (Δ − n − 1)/(Δ − 2)`, where `ω_1 = 1` exactly.
pub fn neutral_theta(n: usize, delta: &Rational) -> Rational {
    (delta - rational::int(n as i64 + 1)) / (delta - rational::int(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVerdict {
    pub n: usize,
    #[serde(with = "serde_exact")]
    pub delta: Rational,
    #[serde(with = "serde_exact")]
    pub omega1: Rational,
    /// `ω_1(Δ, 0) − 1`
    #[serde(with = "serde_exact")]
    pub margin: Rational,
    pub verdict: bool,
}

pub fn verify_threshold(n: usize, delta: &Rational) -> Result<ThresholdVerdict> {
    let sol = solve_system(n, delta, &Rational::zero())?;
    let omega1 = sol.omega[0].clone();
    let margin = &omega1 - Rational::one();
    Ok(ThresholdVerdict {
        n,
        delta: delta.clone(),
        verdict: margin.is_positive(),
        omega1,
        margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub n: usize,
    pub points: Vec<ThresholdVerdict>,
    /// Largest scanned `Δ < n+1` with `ω_1(Δ, 0) ≤ 1`, if any.
    #[serde(with = "serde_exact::option")]
    pub first_failure: Option<Rational>,
}

/// Scans `Δ = n+1 − k·width/steps` for `k = 0..=steps`, skipping poles.
pub fn threshold_scan(n: usize, width: &Rational, steps: usize) -> Result<ThresholdScan> {
    if steps == 0 || !width.is_positive() {
        return Err(Error::invalid("threshold scan needs steps ≥ 1 and a positive width"));
    }
    let top = rational::int(n as i64 + 1);
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let delta = &top - width * rational::ratio(k as i64, steps as i64);
        match verify_threshold(n, &delta) {
            Ok(v) => points.push(v),
            Err(Error::SingularSystem(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let first_failure = points
        .iter()
        .filter(|v| v.delta < top && !v.verdict)
        .map(|v| v.delta.clone())
        .max();
    Ok(ThresholdScan { n, points, first_failure })
}

// ---------------------------------------------------------------------------
// substitution iteration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub round: usize,
    /// constant term `A_r`
    #[serde(with = "serde_exact")]
    pub a: Rational,
    /// coefficient `B_r` of `θ`
    #[serde(with = "serde_exact")]
    pub b: Rational,
    /// total coefficient still on unknowns
    #[serde(with = "serde_exact")]
    pub remaining: Rational,
}

/// Repeatedly substitutes every unknown in the expression for `ω_1` by the
/// right side of its own equation (`η_1 → 2`, `ω_n → θ`), recording the
/// constant, the `θ` coefficient and the mass left on unknowns. Limited to
/// `n ≤ 5`.
pub fn iterate_coefficients(n: usize, delta: &Rational, rounds: usize) -> Result<Vec<IterationStep>> {
    if n > 5 {
        return Err(Error::invalid(format!("the substitution iteration is limited to n ≤ 5, got {n}")));
    }
    let c = Coefficients::new(n, delta)?;
    // variables: ω_1..ω_{n−1} at 0..n−2, η_2..η_{n−1} at n−1..2n−4
    let nv = 2 * n - 3;
    let w = |j: usize| j - 1;
    let e = |j: usize| n + j - 3;
    let mut coef = vec![Rational::zero(); nv];
    coef[w(1)] = Rational::one();
    let (mut a, mut b) = (Rational::zero(), Rational::zero());
    let mut out = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let mut next = vec![Rational::zero(); nv];
        for j in 1..n {
            let cw = &coef[w(j)];
            if !cw.is_zero() {
                let to_eta = cw * (Rational::one() - &c.alpha[j]);
                if j == 1 {
                    a += to_eta * rational::int(2);
                } else {
                    next[e(j)] += to_eta;
                }
                let to_omega = cw * &c.alpha[j];
                if j + 1 == n {
                    b += to_omega;
                } else {
                    next[w(j + 1)] += to_omega;
                }
            }
        }
        for j in 2..n {
            let ce = &coef[e(j)];
            if !ce.is_zero() {
                let down = ce * &c.down[j];
                if j == 2 {
                    a += down * rational::int(2);
                } else {
                    next[e(j - 1)] += down;
                }
                next[w(j)] += ce * &c.across[j];
            }
        }
        coef = next;
        out.push(IterationStep {
            round,
            a: a.clone(),
            b: b.clone(),
            remaining: coef.iter().sum(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn boundary_solution_n3() {
        let sol = solve_system(3, &int(4), &int(0)).unwrap();
        assert_eq!(sol.omega, vec![int(1), ratio(1, 2), int(0)]);
        assert_eq!(sol.eta, vec![int(2), int(1)]);
    }

    #[test]
    fn neutral_theta_family_n5() {
        let delta = ratio(29, 5);
        let sol = solve_system(5, &delta, &neutral_theta(5, &delta)).unwrap();
        for j in 1..5 {
            let expected = int(2) * (&delta - int(j as i64 + 1)) / (&delta - int(2));
            assert_eq!(*sol.eta(j), expected);
            assert_eq!(int(2) * sol.omega(j), expected);
        }
    }

    #[test]
    fn n3_closed_form() {
        let delta = ratio(399, 100);
        let p = int(3) * &delta;
        let closed = int(9) / (&p - int(3)) * (Rational::one() + (int(12) - &p) / (&p * &p - int(12) * &p + int(18)));
        assert_eq!(solve_system(3, &delta, &int(0)).unwrap().omega[0], closed);
    }

    #[test]
    fn affine_examples() {
        let f = omega1_affine(3, &int(4)).unwrap();
        assert_eq!(f.a, int(1));
        assert!(f.b.is_positive());
        assert_eq!(omega1_affine(4, &int(5)).unwrap().a, int(1));
        let delta = ratio(61, 10);
        let f = omega1_affine(5, &delta).unwrap();
        assert_eq!(f.at(&neutral_theta(5, &delta)), int(1));
    }

    #[test]
    fn poles_and_small_n() {
        assert!(matches!(solve_system(2, &int(3), &int(0)), Err(Error::DimensionTooSmall(2))));
        for d in 1..=4 {
            assert!(matches!(solve_system(4, &int(d), &int(0)), Err(Error::SingularSystem(_))));
        }
    }

    #[test]
    fn threshold_examples() {
        let v = verify_threshold(3, &ratio(3999, 1000)).unwrap();
        assert!(v.verdict && v.margin.is_positive());
        let v = verify_threshold(3, &int(4)).unwrap();
        assert!(!v.verdict);
        assert!(v.margin.is_zero());
    }

    #[test]
    fn scan_reports_failure_below_threshold() {
        let scan = threshold_scan(3, &int(2), 40).unwrap();
        assert!(scan.points.iter().any(|v| v.verdict));
        let ff = scan.first_failure.expect("ω_1 ≤ 1 somewhere in [2, 4)");
        assert!(ff < int(4));
        for v in &scan.points {
            if v.delta > ff && v.delta < int(4) {
                assert!(v.verdict);
            }
        }
    }

    #[test]
    fn substitution_iteration_is_monotone_and_converges() {
        for n in 3..=5 {
            let delta = int(n as i64 + 1) - ratio(1, 100);
            let steps = iterate_coefficients(n, &delta, 300).unwrap();
            for w in steps.windows(2) {
                assert!(w[1].a >= w[0].a && w[1].b >= w[0].b);
            }
            let limit = omega1_affine(n, &delta).unwrap();
            let last = steps.last().unwrap();
            assert!(rational::to_f64(&last.remaining) < 1e-3, "n={n}");
            assert!((rational::to_f64(&last.a) - rational::to_f64(&limit.a)).abs() < 1e-2);
            assert!((rational::to_f64(&last.b) - rational::to_f64(&limit.b)).abs() < 1e-2);
        }
        assert!(iterate_coefficients(6, &int(7), 3).is_err());
    }
}

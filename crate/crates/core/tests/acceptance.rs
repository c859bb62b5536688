//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

use std::process::ExitCode;
use std::time::Instant;

use num_traits::{One, Zero};
use vinolab::appendix::{neutral_theta, solve_full, solve_reduced, solve_system, verify_threshold};
use vinolab::arcs::{enumerate_major_arcs, minor_sup_estimate, minor_sup_fit};
use vinolab::counting::{count_mitm, count_naive, growth_fit, CountBudget, MitmConfig};
use vinolab::decouple::{l2_scan, vp_scan_multi, ExperimentConfig, L2Scan, TrialFamily, VpScan};
use vinolab::expsum::{torus_integral_power, TorusBudget};
use vinolab::rational::{int, ratio, to_exact_string, to_f64};
use vinolab::weights::{omega1_series, weights_from_relations, WeightSystem};
use vinolab::{Instance, Rational};

const DELTAS: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];
const SEED: u64 = 20_240_601;
const MINOR_SAMPLES: usize = 100_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn counting_oracles() -> Outcome {
    let budget = CountBudget::default();
    let cfg = MitmConfig::default();
    let mut checked = 0;
    for n in 2..=3u32 {
        for s in 1..=3u32 {
            for range in 1..=8u64 {
                let inst = Instance::new(n, s, range).unwrap();
                let naive = count_naive(&inst, &budget).unwrap();
                let mitm = count_mitm(&inst, &cfg).unwrap();
                if naive != mitm {
                    return outcome(false, format!("n={n} s={s} N={range}: naive {naive} vs mitm {mitm}"));
                }
                if n == 2 && s <= 2 && range <= 4 {
                    let torus = torus_integral_power(&inst, &TorusBudget::default()).unwrap();
                    if torus != naive {
                        return outcome(false, format!("n={n} s={s} N={range}: torus {torus} vs naive {naive}"));
                    }
                }
                checked += 1;
            }
        }
    }
    outcome(true, format!("{checked} instances agree"))
}

fn vinogradov_slopes() -> Outcome {
    let cfg = MitmConfig::default();
    let cases: [(u32, &[u64], f64, f64); 3] = [
        (2, &[8, 16, 32, 64], 1.9, 2.3),
        (4, &[16, 32, 64, 128], 4.5, 5.3),
        (3, &[16, 32, 64, 128, 256], 2.9, 3.5),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, ranges, lo, hi) in cases {
        let fit = growth_fit(2, s, ranges, &cfg).unwrap();
        let slope = fit.fit.slope;
        pass &= slope >= lo && slope <= hi;
        parts.push(format!("s={s} slope {slope:.4} in [{lo}, {hi}]"));
    }
    outcome(pass, parts.join("; "))
}

fn appendix_identities() -> Outcome {
    for n in 3..=8usize {
        let top = int(n as i64 + 1);
        let sol = solve_system(n, &top, &Rational::zero()).unwrap();
        for j in 1..n {
            let expected = ratio((n - j) as i64, (n - 1) as i64);
            if *sol.omega(j) != expected || *sol.eta(j) != int(2) * &expected {
                return outcome(false, format!("boundary values wrong at n={n}, j={j}"));
            }
        }
        for k in 1..=20 {
            let delta = &top - ratio(k, 97);
            let theta = neutral_theta(n, &delta);
            let reduced = solve_reduced(n, &delta, &theta).unwrap();
            let full = solve_full(n, &delta, &theta).unwrap();
            if reduced != full {
                return outcome(false, format!("solver paths disagree at n={n}, Δ={}", to_exact_string(&delta)));
            }
            if !reduced.residuals().unwrap().iter().all(Zero::is_zero) {
                return outcome(false, format!("nonzero residual at n={n}, Δ={}", to_exact_string(&delta)));
            }
            if !reduced.omega(1).is_one() {
                return outcome(false, format!("ω_1 ≠ 1 on the neutral θ at n={n}, Δ={}", to_exact_string(&delta)));
            }
        }
    }
    outcome(true, "n=3..8: boundary values, 120 neutral-θ solves, zero residuals, paths agree")
}

fn threshold() -> Outcome {
    let mut parts = Vec::new();
    for n in 3..=8usize {
        let top = int(n as i64 + 1);
        let below = verify_threshold(n, &(&top - ratio(1, 1000))).unwrap();
        let at = verify_threshold(n, &top).unwrap();
        if !below.verdict || !at.margin.is_zero() || at.verdict {
            return outcome(false, format!("n={n}: below {} at {}", below.verdict, to_exact_string(&at.margin)));
        }
        parts.push(format!("n={n} margin {:.3e}", to_f64(&below.margin)));
    }
    outcome(true, parts.join(", "))
}

fn n3_closed_form() -> Outcome {
    for k in 1..=20 {
        let delta = ratio(39, 10) + ratio(k, 200);
        let p = int(3) * &delta;
        let closed = int(9) / (&p - int(3)) * (Rational::one() + (int(12) - &p) / (&p * &p - int(12) * &p + int(18)));
        let solved = solve_system(3, &delta, &Rational::zero()).unwrap().omega[0].clone();
        if solved != closed {
            return outcome(false, format!("mismatch at Δ = {}", to_exact_string(&delta)));
        }
    }
    outcome(true, "20 values of Δ in (3.9, 4] agree exactly")
}

fn series_cross_check() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 3..=4usize {
        let p = int((n * (n + 1)) as i64) - ratio(1, 10);
        let series = omega1_series(n, &p, 300).unwrap();
        let omega1 = solve_system(n, &(&p / int(n as i64)), &Rational::zero()).unwrap().omega[0].clone();
        let gap = (to_f64(&series.partial_sum) - to_f64(&omega1)).abs();
        let above_one = series.partial_sum > Rational::one();
        pass &= gap < 1e-6 && above_one;
        parts.push(format!("n={n} sum {:.10} ω_1 {:.10} gap {gap:.1e}", to_f64(&series.partial_sum), to_f64(&omega1)));
    }
    outcome(pass, parts.join("; "))
}

fn weight_closed_forms() -> Outcome {
    for n in 3..=8usize {
        for k in 1..=50i64 {
            let p = int((n * n) as i64) + ratio(k * n as i64, 50);
            let solved = weights_from_relations(n, &p).unwrap();
            if solved != WeightSystem::closed_form(n, &p).unwrap() {
                return outcome(false, format!("n={n}, p={}", to_exact_string(&p)));
            }
        }
    }
    outcome(true, "300 exponents agree exactly")
}

fn l2_run() -> L2Scan {
    l2_scan(2, &DELTAS, 100, SEED, &ExperimentConfig::default()).unwrap()
}

fn l2_orthogonality(scan: &L2Scan) -> Outcome {
    let max = scan.points.iter().map(|p| p.max_ratio).fold(0.0, f64::max);
    let excluded: usize = scan.points.iter().map(|p| p.excluded.len()).sum();
    let maxima: Vec<String> = scan.points.iter().map(|p| format!("{:.4}", p.max_ratio)).collect();
    outcome(
        max <= 10.0 && scan.growth <= 1.5,
        format!(
            "max ratios [{}], growth {:.4}, unconverged trials excluded {excluded}/{}",
            maxima.join(", "),
            scan.growth,
            scan.points.len() * scan.trials
        ),
    )
}

fn vp_run() -> Vec<VpScan> {
    vp_scan_multi(2, &[6.0, 12.0], &DELTAS, 20, TrialFamily::Standard, SEED, &ExperimentConfig::default()).unwrap()
}

fn decoupling_scan(scans: &[VpScan]) -> Outcome {
    let eta6 = scans[0].eta_hat.unwrap();
    let eta12 = scans[1].eta_hat.unwrap();
    let maxima_converged = scans.iter().all(|s| s.points.iter().all(|p| p.max_converged()));
    let excluded: usize = scans.iter().map(VpScan::excluded_trials).sum();
    outcome(
        eta6 <= 0.2 && eta12 >= 0.15 && maxima_converged,
        format!(
            "η̂(6) = {eta6:.4}, η̂(12) = {eta12:.4}, maxima converged {maxima_converged}, unconverged trials excluded {excluded}/{}",
            scans.len() * DELTAS.len() * 20
        ),
    )
}

struct ArcRun {
    labels: usize,
    rate: f64,
    sigma: f64,
    expected: f64,
    slope: f64,
    json: String,
}

fn arcs_run() -> ArcRun {
    let labels = enumerate_major_arcs(16, 2, 1_000_000).unwrap().labels.len();
    let measure = enumerate_major_arcs(256, 2, 1_000_000).unwrap().measure_without_overlap;
    let est = minor_sup_estimate(256, 2, MINOR_SAMPLES, SEED).unwrap();
    let fit = minor_sup_fit(&[64, 128, 256, 512], 2, MINOR_SAMPLES, SEED).unwrap();
    ArcRun {
        labels,
        rate: est.acceptance_rate(),
        sigma: est.acceptance_std_error(),
        expected: 1.0 - measure,
        slope: fit.fit.slope,
        json: serde_json::to_string(&(est, fit)).unwrap(),
    }
}

fn arc_machinery(run: &ArcRun) -> Outcome {
    let within = (run.rate - run.expected).abs() <= 3.0 * run.sigma;
    outcome(
        run.labels == 4 && within && run.slope < 0.95,
        format!(
            "{} labels at N=16; acceptance {:.5} vs {:.5} (3σ = {:.5}); minor sup slope {:.4}",
            run.labels,
            run.rate,
            run.expected,
            3.0 * run.sigma,
            run.slope
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "counting oracle equivalence", &mut counting_oracles);
    report(2, "Vinogradov growth exponents", &mut vinogradov_slopes);
    report(3, "appendix exact identities", &mut appendix_identities);
    report(4, "threshold verdicts", &mut threshold);
    report(5, "n=3 closed form", &mut n3_closed_form);
    report(6, "series against system", &mut series_cross_check);
    report(7, "weight closed forms", &mut weight_closed_forms);
    let mut l2 = None;
    report(8, "L2 orthogonality", &mut || {
        let scan = l2_run();
        let o = l2_orthogonality(&scan);
        l2 = Some(scan);
        o
    });
    let mut vp = None;
    report(9, "decoupling scan", &mut || {
        let scans = vp_run();
        let o = decoupling_scan(&scans);
        vp = Some(scans);
        o
    });
    let mut arcs = None;
    report(10, "arc machinery", &mut || {
        let run = arcs_run();
        let o = arc_machinery(&run);
        arcs = Some(run);
        o
    });
    report(11, "reproducibility", &mut || {
        let first = [
            serde_json::to_string(l2.as_ref().unwrap()).unwrap(),
            serde_json::to_string(vp.as_ref().unwrap()).unwrap(),
            arcs.as_ref().unwrap().json.clone(),
        ];
        let second = [
            serde_json::to_string(&l2_run()).unwrap(),
            serde_json::to_string(&vp_run()).unwrap(),
            arcs_run().json,
        ];
        let same: Vec<bool> = first.iter().zip(&second).map(|(a, b)| a == b).collect();
        outcome(
            same.iter().all(|&s| s),
            format!("byte-identical reruns: l2 {}, vp-scan {}, arcs {}", same[0], same[1], same[2]),
        )
    });
    if failures == 0 {
        println!("acceptance: all 11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}

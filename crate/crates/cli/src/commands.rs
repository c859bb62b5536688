//! Maps each subcommand onto the library and shapes its results.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use vinolab::appendix::{iterate_coefficients, omega1_affine, solve_system, threshold_scan, verify_threshold, ThresholdVerdict};
use vinolab::arcs::{arc_parameter, enumerate_major_arcs, major_measure_monte_carlo, minor_sup_estimate, minor_sup_fit, MinorSupEstimate};
use vinolab::counting::{count_from_spill, count_mitm, count_naive, count_real, growth_fit, spill_histogram, MitmConfig, MitmStrategy, SeparatedPointSet};
use vinolab::decouple::{
    ball_inflation_ratio, discrete_restriction_ratio, l2_scan, lower_dim_ratio, reciprocal_integer, trial_function, vp_scan_multi,
    ExperimentConfig, InequalityId, RatioExperiment, TrialFamily,
};
use vinolab::expsum::{moment_monte_carlo, torus_integral_power, QuadratureConfig};
use vinolab::quadrature::BallScheme;
use vinolab::rational::{self, to_exact_string, to_f64, Rational};
use vinolab::weights::{build_tree, omega1_series, weights_from_relations, ExpansionOrder, NodeKind, WeightSystem};
use vinolab::domain::rng_for;
use vinolab::{Error, Instance, StepFunction};

use crate::args::*;
use crate::budget::Budgets;
use crate::error::{CliError, CliResult};
use crate::plot;
use crate::record::Table;

/// What a subcommand hands back for the record and for stdout.
pub struct Outcome {
    pub params: Value,
    pub results: Value,
    pub table: Table,
    pub converged: Option<bool>,
    /// Replaces the JSON record on stdout when set.
    pub text: Option<String>,
}

impl Outcome {
    fn new(params: &impl Serialize, results: Value, table: Table) -> Self {
        Self {
            params: to_value(params),
            results,
            table,
            converged: None,
            text: None,
        }
    }

    fn converged(mut self, c: Option<bool>) -> Self {
        self.converged = c;
        self
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("result types serialize to JSON")
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn f(x: f64) -> String {
    x.to_string()
}

fn q(x: &Rational) -> String {
    to_exact_string(x)
}

pub fn execute(command: &Command, budgets: &Budgets) -> CliResult<Outcome> {
    match command {
        Command::Count(a) => count(a, budgets),
        Command::CountReal(a) => count_real_points(a, budgets),
        Command::TorusMoment(a) => torus_moment(a, budgets),
        Command::Arcs(a) => arcs(a),
        Command::MinorSup(a) => minor_sup(a),
        Command::Weights(a) => weights(a),
        Command::Tree(a) => tree(a),
        Command::Appendix(a) => appendix(a),
        Command::Threshold(a) => threshold(a),
        Command::Decouple(a) => decouple(a, budgets),
        Command::VpScan(a) => vp_scan(a, budgets),
        Command::Restriction(a) => restriction(a, budgets),
        Command::Inflate(a) => inflate(a, budgets),
        Command::Plot(a) => plot::emit(a),
    }
}

// ---------------------------------------------------------------------------
// counting and arcs

fn mitm_config(a: &CountArgs, b: &Budgets) -> MitmConfig {
    MitmConfig {
        strategy: match a.strategy {
            Strategy::Hash => MitmStrategy::Hash,
            Strategy::SortMerge => MitmStrategy::SortMerge,
        },
        partitions: a.partitions,
        budget: b.count,
    }
}

fn count(a: &CountArgs, b: &Budgets) -> CliResult<Outcome> {
    let cfg = mitm_config(a, b);
    let Some(range) = a.range else {
        if a.algo != Algo::Mitm || a.spill.is_some() {
            return Err(CliError::Validation("--growth counts with the meet-in-the-middle route only".into()));
        }
        let fit = growth_fit(a.n, a.s, &a.growth, &cfg)?;
        let mut table = Table::new(&["N", "J", "log_N", "log_J"]);
        for (&big_n, c) in fit.ranges.iter().zip(&fit.counts) {
            let j: f64 = c.parse().expect("counts are decimal");
            table.push(vec![big_n.to_string(), c.clone(), f((big_n as f64).ln()), f(j.ln())]);
        }
        let results = merge(to_value(&fit), json!({ "reference_slopes": plot::reference_slopes(a.n, a.s) }));
        return Ok(Outcome::new(a, results, table));
    };
    let inst = Instance::new(a.n, a.s, range)?;
    let mut counts: Vec<(&str, u128)> = Vec::new();
    if matches!(a.algo, Algo::Naive | Algo::All) {
        counts.push(("naive", count_naive(&inst, &b.count)?));
    }
    if matches!(a.algo, Algo::Mitm | Algo::All) {
        counts.push(("mitm", count_mitm(&inst, &cfg)?));
    }
    if matches!(a.algo, Algo::Torus | Algo::All) {
        counts.push(("torus", torus_integral_power(&inst, &b.torus)?));
    }
    if let Some(path) = &a.spill {
        let file = File::create(path).map_err(CliError::io(path))?;
        let mut w = BufWriter::new(file);
        spill_histogram(&inst, &cfg, &mut w)?;
        w.flush().map_err(CliError::io(path))?;
        drop(w);
        let r = BufReader::new(File::open(path).map_err(CliError::io(path))?);
        counts.push(("spill", count_from_spill(r)?));
    }
    let agreement = counts.windows(2).all(|w| w[0].1 == w[1].1);
    let mut results = serde_json::Map::new();
    let mut table = Table::new(&["route", "count"]);
    for (name, c) in &counts {
        results.insert(name.to_string(), Value::String(c.to_string()));
        table.push(vec![name.to_string(), c.to_string()]);
    }
    results.insert("agreement".into(), Value::Bool(agreement));
    Ok(Outcome::new(a, Value::Object(results), table))
}

fn count_real_points(a: &CountRealArgs, b: &Budgets) -> CliResult<Outcome> {
    let set = match a.integers {
        Some(big_n) => SeparatedPointSet::integers(big_n),
        None => SeparatedPointSet::new(a.points.clone())?,
    };
    let c = count_real(&set, a.s, a.n, &b.count)?;
    let mut table = Table::new(&["points", "s", "n", "count"]);
    table.push(vec![set.len().to_string(), a.s.to_string(), a.n.to_string(), c.to_string()]);
    Ok(Outcome::new(a, json!({ "points": set.len(), "count": c.to_string() }), table))
}

fn torus_moment(a: &TorusArgs, b: &Budgets) -> CliResult<Outcome> {
    let inst = Instance::new(a.n, a.s, a.range)?;
    let mut table = Table::new(&["method", "value", "standard_error"]);
    let results = match a.method {
        MomentMethod::Exact => {
            let v = torus_integral_power(&inst, &b.torus)?;
            table.push(vec!["exact".into(), v.to_string(), "0".into()]);
            json!({ "value": v.to_string() })
        }
        MomentMethod::MonteCarlo => {
            let cfg = QuadratureConfig {
                mc_samples: a.samples,
                seed: a.seed,
                ..QuadratureConfig::default()
            };
            let est = moment_monte_carlo(&inst, &cfg)?;
            table.push(vec!["monte_carlo".into(), f(est.estimate), f(est.standard_error)]);
            to_value(&est)
        }
    };
    Ok(Outcome::new(a, results, table))
}

fn arcs(a: &ArcsArgs) -> CliResult<Outcome> {
    let summary = enumerate_major_arcs(a.range, a.n, a.max_labels as u128)?;
    let mut table = Table::new(&["q", "a"]);
    for l in &summary.labels {
        let coords: Vec<String> = l.a.iter().map(u64::to_string).collect();
        table.push(vec![l.q.to_string(), coords.join(";")]);
    }
    let mut extra = json!({
        "arc_parameter": arc_parameter(a.range, a.n),
        "label_count": summary.labels.len(),
    });
    if let Some(samples) = a.mc_samples {
        let (measure, se) = major_measure_monte_carlo(a.range, a.n, samples, a.seed);
        extra["monte_carlo_measure"] = json!({ "measure": measure, "standard_error": se, "samples": samples });
    }
    Ok(Outcome::new(a, merge(to_value(&summary), extra), table))
}

fn minor_sup_row(table: &mut Table, e: &MinorSupEstimate) {
    table.push(vec![
        e.range.to_string(),
        f(e.sup_estimate),
        e.accepted.to_string(),
        e.drawn.to_string(),
        f(e.acceptance_rate()),
    ]);
}

fn minor_sup(a: &MinorSupArgs) -> CliResult<Outcome> {
    let mut table = Table::new(&["N", "sup_estimate", "accepted", "drawn", "acceptance_rate"]);
    let results = if let [range] = a.ranges[..] {
        let e = minor_sup_estimate(range, a.n, a.samples, a.seed)?;
        minor_sup_row(&mut table, &e);
        json!({ "estimates": [e] })
    } else {
        let fit = minor_sup_fit(&a.ranges, a.n, a.samples, a.seed)?;
        for e in &fit.estimates {
            minor_sup_row(&mut table, e);
        }
        to_value(&fit)
    };
    Ok(Outcome::new(a, results, table))
}

// ---------------------------------------------------------------------------
// weights and the exponent system

fn weights(a: &WeightsArgs) -> CliResult<Outcome> {
    let closed = WeightSystem::closed_form(a.n, &a.p)?;
    let solved = weights_from_relations(a.n, &a.p)?;
    let mut table = Table::new(&["j", "alpha", "beta"]);
    for j in 1..a.n {
        let beta = if j >= 2 { q(closed.beta(j)) } else { String::new() };
        table.push(vec![j.to_string(), q(closed.alpha(j)), beta]);
    }
    let mut results = json!({
        "weights": closed,
        "relations_agree": solved == closed,
        "all_in_unit_interval": closed.all_in_unit_interval(),
    });
    if let Some(r) = a.series {
        results["series"] = to_value(&omega1_series(a.n, &a.p, r)?);
    }
    Ok(Outcome::new(a, results, table))
}

fn tree(a: &TreeArgs) -> CliResult<Outcome> {
    let order = match a.order {
        OrderArg::Ball => ExpansionOrder::BallExponent,
        OrderArg::Generation => ExpansionOrder::Generation,
    };
    let t = build_tree(a.n, &a.p, a.depth, order, a.max_nodes)?;
    let mut table = Table::new(&["index", "kind", "k", "weight", "scale", "ball", "parent", "expanded"]);
    for (i, node) in t.nodes.iter().enumerate() {
        let (kind, k) = match node.kind {
            NodeKind::A => ("A", String::new()),
            NodeKind::D(k) => ("D", k.to_string()),
            NodeKind::DFull => ("DFull", a.n.to_string()),
        };
        table.push(vec![
            i.to_string(),
            kind.into(),
            k,
            q(&node.weight),
            q(&node.scale),
            q(&node.ball),
            node.parent.map(|p| p.to_string()).unwrap_or_default(),
            node.expanded.to_string(),
        ]);
    }
    let by_ball: Vec<Value> = t
        .gamma_by_ball()
        .iter()
        .map(|(ball, gamma)| json!({ "ball": q(ball), "gamma": q(gamma) }))
        .collect();
    let results = json!({
        "node_count": t.nodes.len(),
        "leaf_count": t.leaves().count(),
        "sum_gamma": q(&t.sum_gamma()),
        "sum_b_gamma": q(&t.sum_b_gamma()),
        "gamma_by_ball": by_ball,
        "bifurcations_balanced": t.bifurcations_balanced(),
        "tree": t,
    });
    let mut out = Outcome::new(a, results, table);
    if a.text {
        out.text = Some(t.to_text());
    }
    Ok(out)
}

fn appendix(a: &AppendixArgs) -> CliResult<Outcome> {
    let Some(end) = &a.sweep_to else {
        let sol = solve_system(a.n, &a.delta, &a.theta)?;
        let mut table = Table::new(&["j", "omega", "eta"]);
        for j in 1..=a.n {
            let eta = if j < a.n { q(sol.eta(j)) } else { String::new() };
            table.push(vec![j.to_string(), q(sol.omega(j)), eta]);
        }
        let affine = omega1_affine(a.n, &a.delta)?;
        let results = merge(
            to_value(&sol),
            json!({ "exact_solution": sol.is_exact_solution(), "omega1_affine": affine }),
        );
        return Ok(Outcome::new(a, results, table));
    };
    if a.steps == 0 {
        return Err(CliError::Validation("--steps must be positive".into()));
    }
    let step = (end - &a.delta) / rational::int(a.steps as i64);
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut table = Table::new(&["delta", "omega1", "delta_value", "omega1_minus_one"]);
    for k in 0..=a.steps {
        let delta = &a.delta + &step * rational::int(k as i64);
        match solve_system(a.n, &delta, &a.theta) {
            Ok(sol) => {
                let w = sol.omega(1);
                let gap = to_f64(&(w - rational::int(1)));
                table.push(vec![q(&delta), q(w), f(to_f64(&delta)), f(gap)]);
                points.push(json!({ "delta": q(&delta), "omega1": q(w), "omega1_minus_one": gap }));
            }
            Err(Error::SingularSystem(_)) => skipped.push(q(&delta)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Outcome::new(a, json!({ "n": a.n, "theta": q(&a.theta), "sweep": points, "skipped": skipped }), table))
}

fn verdict_row(table: &mut Table, v: &ThresholdVerdict) {
    table.push(vec![q(&v.delta), q(&v.omega1), q(&v.margin), v.verdict.to_string()]);
}

fn threshold(a: &ThresholdArgs) -> CliResult<Outcome> {
    let mut table = Table::new(&["delta", "omega1", "margin", "verdict"]);
    let results = match (&a.delta, &a.scan_width) {
        (Some(delta), _) => {
            let v = verify_threshold(a.n, delta)?;
            verdict_row(&mut table, &v);
            let mut r = to_value(&v);
            if let Some(rounds) = a.iterate {
                r["iteration"] = to_value(&iterate_coefficients(a.n, delta, rounds)?);
            }
            r
        }
        (None, Some(width)) => {
            let scan = threshold_scan(a.n, width, a.steps)?;
            for v in &scan.points {
                verdict_row(&mut table, v);
            }
            to_value(&scan)
        }
        (None, None) => unreachable!("clap requires --delta or --scan-width"),
    };
    Ok(Outcome::new(a, results, table))
}

// ---------------------------------------------------------------------------
// ratio experiments

fn experiment_config(qa: &QuadArgs, b: &Budgets) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    if let Some(s) = qa.samples {
        cfg.quad.mc_samples = s;
    }
    if let Some(p) = qa.ppo {
        cfg.quad.panels_per_oscillation = p;
    }
    cfg.quad.scheme = match qa.scheme {
        None => cfg.quad.scheme,
        Some(SchemeArg::MonteCarlo) => BallScheme::MonteCarlo,
        Some(SchemeArg::Uniform) => BallScheme::Uniform,
        Some(SchemeArg::Grid) => BallScheme::Grid {
            panels_per_axis: qa.panels_per_axis,
        },
    };
    cfg.check_convergence = !qa.no_convergence_check;
    if let Some(t) = qa.convergence_tolerance {
        cfg.convergence_tolerance = t;
    }
    cfg.quad.max_panels = b.max_panels;
    cfg.quad.max_points = b.max_points;
    cfg
}

fn family(f: FamilyArg) -> TrialFamily {
    match f {
        FamilyArg::Standard => TrialFamily::Standard,
        FamilyArg::Random => TrialFamily::Random,
        FamilyArg::SingleCell => TrialFamily::SingleCell,
    }
}

fn experiment_table(e: &RatioExperiment) -> Table {
    let mut table = Table::new(&["trial", "ratio", "quadrature_error", "refined_ratio", "converged"]);
    for i in 0..e.ratios.len() {
        let refined = e.refined_ratios.as_ref().map(|r| f(r[i])).unwrap_or_default();
        let converged = e.refined_ratios.as_ref().map(|_| e.converged[i].to_string()).unwrap_or_default();
        table.push(vec![i.to_string(), f(e.ratios[i]), f(e.quadrature_errors[i]), refined, converged]);
    }
    table
}

fn experiment_converged(e: &RatioExperiment) -> Option<bool> {
    e.refined_ratios.as_ref().map(|_| e.converged.iter().all(|&c| c))
}

fn decouple(a: &DecoupleArgs, b: &Budgets) -> CliResult<Outcome> {
    let cfg = experiment_config(&a.quad, b);
    let experiment = match a.inequality {
        InequalityArg::Main => {
            let scans = vp_scan_multi(a.n, &[a.p], &[a.delta], a.trials, family(a.family), a.seed, &cfg)?;
            RatioExperiment::from_scan_point(InequalityId::MainDecoupling, a.n, a.p, a.seed, &scans[0].points[0])
        }
        InequalityArg::L2 => {
            if a.family != FamilyArg::Random {
                return Err(CliError::Validation("the L² experiment uses --family random".into()));
            }
            let scan = l2_scan(a.n, &[a.delta], a.trials, a.seed, &cfg)?;
            RatioExperiment::from_scan_point(InequalityId::L2Orth, a.n, 2.0, a.seed, &scan.points[0])
        }
        InequalityArg::LowerDim => {
            if a.n != 3 {
                return Err(CliError::Validation("the lower-dimensional experiment is for the curve in R^3 (--n 3)".into()));
            }
            let m = reciprocal_integer(a.delta)?;
            let sigma = a.sigma.unwrap_or_else(|| (m as f64).sqrt().ceil() / m as f64);
            let radius = (m * m) as f64;
            let estimates = (0..a.trials)
                .map(|t| lower_dim_ratio(a.t0, sigma, radius, a.p, &trial_function(family(a.family), m, t, a.seed)?, &cfg))
                .collect::<vinolab::Result<Vec<_>>>()?;
            RatioExperiment::from_estimates(InequalityId::LowerDim, 3, a.p, a.delta, a.seed, &estimates)?
        }
    };
    let table = experiment_table(&experiment);
    let converged = experiment_converged(&experiment);
    Ok(Outcome::new(a, to_value(&experiment), table).converged(converged))
}

fn vp_scan(a: &VpScanArgs, b: &Budgets) -> CliResult<Outcome> {
    let cfg = experiment_config(&a.quad, b);
    let scans = vp_scan_multi(a.n, &a.p, &a.deltas, a.trials, family(a.family), a.seed, &cfg)?;
    let mut table = Table::new(&["p", "delta", "max_ratio", "max_ratio_all", "excluded", "eta_hat"]);
    for s in &scans {
        for pt in &s.points {
            table.push(vec![
                f(s.p),
                f(pt.delta),
                f(pt.max_ratio),
                f(pt.max_ratio_all),
                pt.excluded.len().to_string(),
                s.eta_hat.map(f).unwrap_or_default(),
            ]);
        }
    }
    let converged = cfg.check_convergence.then(|| scans.iter().all(|s| s.all_converged()));
    Ok(Outcome::new(a, json!({ "scans": scans }), table).converged(converged))
}

fn unimodular(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rng_for(seed, 0);
    (0..len)
        .map(|_| Complex64::from_polar(1.0, std::f64::consts::TAU * rng.gen::<f64>()))
        .collect()
}

fn restriction(a: &RestrictionArgs, b: &Budgets) -> CliResult<Outcome> {
    if a.range == 0 {
        return Err(CliError::Validation("--N must be positive".into()));
    }
    let cfg = experiment_config(&a.quad, b);
    let big_n = a.range;
    let coeffs = match a.coeffs {
        CoeffArg::Ones => vec![Complex64::new(1.0, 0.0); big_n],
        CoeffArg::Random => unimodular(big_n, a.seed),
    };
    let t: Vec<f64> = if a.jitter {
        let mut rng = rng_for(a.seed, 1);
        (0..big_n).map(|i| (i as f64 + 1.0 - rng.gen::<f64>()) / big_n as f64).collect()
    } else {
        (1..=big_n).map(|i| i as f64 / big_n as f64).collect()
    };
    let radius = a.radius.unwrap_or_else(|| (big_n as f64).powi(a.n as i32));
    let est = discrete_restriction_ratio(a.n, a.p, &coeffs, &t, radius, &cfg)?;
    let experiment = RatioExperiment::from_estimates(InequalityId::DiscreteRestriction, a.n, a.p, 1.0 / big_n as f64, a.seed, &[est.estimate])?;
    let mut table = Table::new(&["N", "lhs", "normalized_lhs", "ratio", "quadrature_error", "refined_ratio"]);
    table.push(vec![
        big_n.to_string(),
        f(est.lhs),
        f(est.normalized_lhs),
        f(est.estimate.ratio),
        f(est.estimate.quadrature_error),
        est.estimate.refined_ratio.map(f).unwrap_or_default(),
    ]);
    let results = json!({ "lhs": est.lhs, "normalized_lhs": est.normalized_lhs, "experiment": experiment });
    Ok(Outcome::new(a, results, table).converged(est.estimate.converged))
}

fn inflate(a: &InflateArgs, b: &Budgets) -> CliResult<Outcome> {
    let cfg = experiment_config(&a.quad, b);
    let g = match a.coeffs {
        CoeffArg::Ones => StepFunction::constant(a.cells, Complex64::new(1.0, 0.0))?,
        CoeffArg::Random => StepFunction::new(unimodular(a.cells, a.seed))?,
    };
    let est = ball_inflation_ratio(a.p, a.k, &g, a.cover_balls, a.seed, &cfg)?;
    let delta = 1.0 / a.cells as f64;
    let experiment = RatioExperiment::from_estimates(InequalityId::BallInflation, 2, a.p, delta, a.seed, &[est.estimate])?;
    let mut table = Table::new(&["cells", "k", "ratio", "quadrature_error", "refined_ratio", "cover_size", "cover_used"]);
    table.push(vec![
        a.cells.to_string(),
        a.k.to_string(),
        f(est.estimate.ratio),
        f(est.estimate.quadrature_error),
        est.estimate.refined_ratio.map(f).unwrap_or_default(),
        est.cover_size.to_string(),
        est.cover_used.to_string(),
    ]);
    let results = json!({ "cover_size": est.cover_size, "cover_used": est.cover_used, "experiment": experiment });
    Ok(Outcome::new(a, results, table).converged(est.estimate.converged))
}

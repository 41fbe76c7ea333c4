//! Subcommand bodies. Each returns a [`Report`]: text for the terminal plus
//! the data that goes into output files.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use hbell::bell::{
    ch_value, hardy_ch_closed, hardy_settings, hardy_vanishing_probs, p1_stationary_intensity, ChProblem,
    ProbabilityPath, Settings,
};
use hbell::crosscheck::cross_check;
use hbell::fock::TruncationPolicy;
use hbell::optimize::{
    derive_seed, eta_threshold, fit_check_alpha0, optimize_ch, scan_p, violation_onset, violation_region, zeta,
    Constraint, Direction, OptProblem, OptResult, Side,
};
use hbell::{InputSpec, Setting};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::CliError;
use crate::output::{to_csv, Row};

pub struct Report {
    pub text: String,
    pub rows: Vec<Row>,
    /// CSV for commands whose natural table is not the row schema.
    pub table: Option<String>,
    pub details: serde_json::Value,
    pub seed: Option<u64>,
    pub provenance: Vec<ProbabilityPath>,
    /// Set when the run completed but its check failed.
    pub failure: Option<String>,
}

impl Report {
    fn new(text: String, rows: Vec<Row>, details: serde_json::Value) -> Self {
        Report {
            text,
            rows,
            table: None,
            details,
            seed: None,
            provenance: Vec::new(),
            failure: None,
        }
    }

    pub fn csv(&self) -> Result<String, CliError> {
        match &self.table {
            Some(t) => Ok(t.clone()),
            None => to_csv(&self.rows),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialize")
}

fn fmt_setting(s: &Setting) -> String {
    if s.is_off() {
        "off".into()
    } else {
        format!("alpha^2={} phi={} R={}", s.intensity(), s.phi, s.r)
    }
}

fn fmt_settings(out: &mut String, s: &Settings) {
    for (name, x) in ["A ", "A'", "B ", "B'"].iter().zip(s.as_array()) {
        let _ = writeln!(out, "  {name}  {}", fmt_setting(&x));
    }
}

fn require_p(source: &SourceArgs) -> Result<f64, CliError> {
    source
        .p
        .ok_or_else(|| CliError::Invalid("--p is required for this command".into()))
}

fn path_of(input: &InputSpec) -> ProbabilityPath {
    match input {
        InputSpec::Unbalanced { .. } => ProbabilityPath::Oracle,
        _ => ProbabilityPath::ClosedForm,
    }
}

/// Direction and constraint after applying an optimisation preset.
fn problem_shape(a: &ProblemArgs) -> Result<(Direction, Constraint), CliError> {
    match a.preset {
        None => Ok((a.direction.into(), a.constraint.into())),
        Some(Preset::OnoffMax) => Ok((Side::Upper.direction(), Side::Upper.constraint())),
        Some(Preset::OnoffMin) => Ok((Side::Lower.direction(), Side::Lower.constraint())),
        Some(p) => Err(CliError::Invalid(format!(
            "preset {p:?} fixes settings; use it with ch-eval, not a search"
        ))),
    }
}

fn opt_problem(source: &SourceArgs, p: f64, shape: (Direction, Constraint), search: &SearchArgs) -> OptProblem {
    OptProblem {
        alpha_max: search.alpha_max,
        ..OptProblem::new(source.input_at(p), source.scheme, shape.0, shape.1).with_eta(source.eta)
    }
}

fn describe_opt(out: &mut String, direction: Direction, r: &OptResult) {
    let _ = writeln!(out, "CH = {}", r.best.value);
    match r.reliable_violation(direction) {
        Some(v) => {
            let _ = writeln!(out, "violation = {v}");
        }
        None => {
            let _ = writeln!(out, "no reliable violation (below 1e-9)");
        }
    }
    fmt_settings(out, &r.settings);
    let res: Vec<String> = r
        .residuals
        .iter()
        .map(|x| x.map_or("-".into(), |v| format!("{v:.3e}")))
        .collect();
    let _ = writeln!(out, "residuals |R - eta alpha^2| (A A' B B'): {}", res.join(" "));
    let _ = writeln!(
        out,
        "local searches: {} ({} converged, {} failed), evaluations: {}",
        r.restarts_used, r.converged, r.failed, r.evaluations
    );
}

pub fn check_oracle(a: &CheckOracleArgs) -> Result<Report, CliError> {
    let policy = TruncationPolicy::default();
    let report = cross_check(a.cases, a.seed, &policy)?;
    let mut text = format!("{} random cases, seed {}\n", report.cases, report.seed);
    let mut table = String::from("family,comparisons,max_abs_error,worst_case\n");
    for f in &report.families {
        let ok = if f.max_abs_error <= a.tol { "ok" } else { "FAIL" };
        let _ = writeln!(
            text,
            "{:<16} {:>6} comparisons  max |diff| = {:.3e}  {ok}",
            f.family.label(),
            f.comparisons,
            f.max_abs_error
        );
        let _ = writeln!(table, "{},{},{},{}", f.family.label(), f.comparisons, f.max_abs_error, f.worst_case);
    }
    let mut r = Report::new(text, Vec::new(), to_json(&report));
    r.table = Some(table);
    r.seed = Some(a.seed);
    r.provenance = vec![ProbabilityPath::ClosedForm, ProbabilityPath::Oracle];
    if !report.passes(a.tol) {
        r.failure = Some(format!(
            "closed forms disagree with the oracle by {:.3e} > {:e}",
            report.max_abs_error(),
            a.tol
        ));
    }
    Ok(r)
}

pub fn ch_eval(a: &ChEvalArgs) -> Result<Report, CliError> {
    let p = require_p(&a.source)?;
    let input = a.source.input_at(p);
    let explicit = [a.a, a.ap, a.b, a.bp];
    if a.preset.is_some() && explicit.iter().any(Option::is_some) {
        return Err(CliError::Invalid("give either --preset or explicit settings, not both".into()));
    }
    let mut search = None;
    let settings = match a.preset {
        None => Settings::from_array(explicit.map(|s| s.unwrap_or(Setting::off()))),
        Some(Preset::Hardy) => hardy_settings(p)?,
        Some(Preset::P1Optimal) => {
            let x = p1_stationary_intensity();
            Settings::onoff_unprimed_off(Setting::from_intensity(x, FRAC_PI_2, x))
        }
        Some(preset) => {
            let side = if preset == Preset::OnoffMax { Side::Upper } else { Side::Lower };
            let shape = (side.direction(), side.constraint());
            let r = optimize_ch(&opt_problem(&a.source, p, shape, &a.search), a.search.restarts, a.search.seed)?;
            let s = r.settings;
            search = Some(r);
            s
        }
    };
    let value = ch_value(&ChProblem::new(input, settings, a.source.scheme).with_eta(a.source.eta))?;
    let c = &value.components;
    let mut text = format!("CH = {}\n", value.value);
    for (name, v) in [
        ("P(A,B)", c.p_ab),
        ("P(A,B')", c.p_ab_prime),
        ("P(A',B)", c.p_a_prime_b),
        ("P(A',B')", c.p_a_prime_b_prime),
        ("P(A)", c.p_a),
        ("P(B)", c.p_b),
    ] {
        let _ = writeln!(text, "  {name:<9} {v}");
    }
    fmt_settings(&mut text, &settings);
    let mut row = Row::from_value(p, &value, &settings, a.source.eta, a.source.scheme);
    if let Some(r) = &search {
        row.converged = Some(r.best_converged);
    }
    let mut r = Report::new(text, vec![row], json!({ "value": value, "settings": settings, "search": search }));
    r.seed = search.as_ref().map(|s| s.seed);
    r.provenance = vec![value.path];
    Ok(r)
}

pub fn optimize(a: &OptimizeArgs) -> Result<Report, CliError> {
    let p = require_p(&a.source)?;
    let shape = problem_shape(&a.problem)?;
    let problem = opt_problem(&a.source, p, shape, &a.search);
    let r = optimize_ch(&problem, a.search.restarts, a.search.seed)?;
    let mut text = String::new();
    describe_opt(&mut text, shape.0, &r);
    let row = Row::from_opt(p, &r, a.source.eta, a.source.scheme);
    let mut rep = Report::new(text, vec![row], json!({ "problem": problem, "result": r }));
    rep.seed = Some(a.search.seed);
    rep.provenance = vec![path_of(&problem.input)];
    Ok(rep)
}

pub fn scan(a: &ScanArgs) -> Result<Report, CliError> {
    let shape = problem_shape(&a.problem)?;
    let grid = &a.p_grid.0;
    let first = *grid.first().ok_or_else(|| CliError::Invalid("p grid is empty".into()))?;
    let template = opt_problem(&a.source, first, shape, &a.search);
    let points = scan_p(&template, grid, a.search.restarts, a.search.seed)?;
    let mut text = String::from("p, CH, violation\n");
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for pt in &points {
        match &pt.outcome {
            Ok(r) => {
                let v = r
                    .reliable_violation(shape.0)
                    .map_or("none".to_string(), |v| v.to_string());
                let _ = writeln!(text, "{}, {}, {v}", pt.p, r.best.value);
                rows.push(Row::from_opt(pt.p, r, a.source.eta, a.source.scheme));
            }
            Err(e) => {
                let _ = writeln!(text, "{}, failed: {e}", pt.p);
                failures.push(json!({ "p": pt.p, "error": e }));
            }
        }
    }
    let fit = if a.fit_check {
        let f = fit_check_alpha0(&points)?;
        let _ = writeln!(text, "max |alpha0^2 - fit| = {}", f.max_deviation);
        Some(f)
    } else {
        None
    };
    let mut rep = Report::new(
        text,
        rows,
        json!({ "problem": template, "points": points, "failures": failures, "fit_check": fit }),
    );
    rep.seed = Some(a.search.seed);
    rep.provenance = vec![path_of(&template.input)];
    Ok(rep)
}

pub fn region(a: &RegionArgs) -> Result<Report, CliError> {
    let side: Side = a.side.into();
    if a.source.eta != 1.0 {
        return Err(CliError::Invalid("region maps assume ideal detectors; drop --eta".into()));
    }
    let first = *a.p_grid.0.first().unwrap_or(&0.0);
    let input = a.source.input_at(first);
    let map = violation_region(
        input,
        a.source.scheme,
        side,
        &a.p_grid.0,
        &a.alpha_grid.0,
        a.search.restarts,
        a.search.seed,
    )?;
    let mut text = format!("{side:?} bound, '#' = violated; columns alpha^2 = {:?}\n", map.alpha_sq_grid);
    let mut table = String::from("p,alpha_sq,ch,violated\n");
    for (i, p) in map.p_grid.iter().enumerate() {
        let marks: String = map.violated[i].iter().map(|&v| if v { '#' } else { '.' }).collect();
        let _ = writeln!(
            text,
            "p={p:<10} {marks}  optimum alpha^2={} CH={}",
            map.optimum_alpha_sq[i], map.optimum_ch[i]
        );
        for (j, a2) in map.alpha_sq_grid.iter().enumerate() {
            let _ = writeln!(table, "{p},{a2},{},{}", map.ch[i][j], map.violated[i][j]);
        }
    }
    let onset = match a.onset {
        Some((lo, hi)) => {
            let template = side.problem(input, a.source.scheme, 1.0);
            let x = violation_onset(&template, lo, hi, a.onset_tol, a.search.restarts, a.search.seed)?;
            let _ = writeln!(text, "violation onset at p = {x} (±{})", a.onset_tol / 2.0);
            Some(x)
        }
        None => None,
    };
    let mut rep = Report::new(text, Vec::new(), json!({ "region": map, "onset": onset }));
    rep.table = Some(table);
    rep.seed = Some(a.search.seed);
    rep.provenance = vec![path_of(&input)];
    Ok(rep)
}

pub fn robustness(a: &RobustnessArgs) -> Result<Report, CliError> {
    let side: Side = a.side.into();
    if a.p_grid.0.is_empty() || a.sigma.0.is_empty() {
        return Err(CliError::Invalid("p grid and sigma list must not be empty".into()));
    }
    if a.source.eta != 1.0 {
        return Err(CliError::Invalid("robustness assumes ideal detectors; drop --eta".into()));
    }
    let mut text = String::from("p, sigma_rel, zeta [%], std error [%]\n");
    let mut table = String::from("p,side,sigma_rel,zeta_percent,std_error_percent,alpha0_sq,ch0,samples\n");
    let mut estimates = Vec::new();
    let mut skipped = Vec::new();
    for (i, &p) in a.p_grid.0.iter().enumerate() {
        // common random numbers across the deviations at one p
        let seed = derive_seed(a.search.seed, i as u64);
        for &sigma in &a.sigma.0 {
            match zeta(a.source.input_at(p), a.source.scheme, side, sigma, a.samples, a.search.restarts, seed) {
                Ok(z) => {
                    let _ = writeln!(text, "{p}, {sigma}, {}, {}", z.zeta_percent, z.std_error_percent);
                    let _ = writeln!(
                        table,
                        "{p},{},{sigma},{},{},{},{},{}",
                        if side == Side::Upper { "upper" } else { "lower" },
                        z.zeta_percent,
                        z.std_error_percent,
                        z.alpha0_sq,
                        z.ch0,
                        z.samples
                    );
                    estimates.push(z);
                }
                Err(e) if !e.is_numerical() => {
                    let _ = writeln!(text, "{p}, {sigma}, skipped: {e}");
                    skipped.push(json!({ "p": p, "sigma_rel": sigma, "reason": e.to_string() }));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let mut rep = Report::new(text, Vec::new(), json!({ "estimates": estimates, "skipped": skipped }));
    rep.table = Some(table);
    rep.seed = Some(a.search.seed);
    rep.provenance = vec![path_of(&a.source.input_at(0.5))];
    Ok(rep)
}

pub fn eta_threshold_cmd(a: &EtaThresholdArgs) -> Result<Report, CliError> {
    let input = a.source.input_at(a.p_grid.0.first().copied().unwrap_or(0.0));
    let t = eta_threshold(
        input,
        a.source.scheme,
        a.significance,
        &a.p_grid.0,
        a.search.restarts,
        a.search.seed,
    )?;
    let mut text = format!(
        "eta_min = {} (no violation at {}) at p = {}\n",
        t.eta_min, t.eta_below, t.p_at_min
    );
    describe_opt(&mut text, Direction::Maximize, &t.best);
    let row = Row::from_opt(t.p_at_min, &t.best, t.eta_min, a.source.scheme);
    let mut rep = Report::new(text, vec![row], to_json(&t));
    rep.seed = Some(a.search.seed);
    rep.provenance = vec![path_of(&input)];
    Ok(rep)
}

pub fn hardy(a: &HardyArgs) -> Result<Report, CliError> {
    let settings = hardy_settings(a.p)?;
    let input = InputSpec::Vac1Photon { p: a.p };
    let value = ch_value(&ChProblem::new(input, settings, hbell::bell::EventScheme::SinglePhotonDm))?;
    let closed = hardy_ch_closed(a.p);
    let vanishing = hardy_vanishing_probs(a.p)?;
    let mut text = format!("CH = {}\n", value.value);
    let _ = writeln!(text, "closed form p^2 e^(-p/(1-p)) / (16(1-p)) = {closed}");
    let _ = writeln!(text, "relative CH (CH/p) = {}", closed / a.p);
    let _ = writeln!(
        text,
        "vanishing probabilities: {} {} {}",
        vanishing[0], vanishing[1], vanishing[2]
    );
    fmt_settings(&mut text, &settings);
    let row = Row::from_value(a.p, &value, &settings, 1.0, hbell::bell::EventScheme::SinglePhotonDm);
    let mut rep = Report::new(
        text,
        vec![row],
        json!({ "value": value, "closed_form": closed, "vanishing": vanishing, "settings": settings }),
    );
    rep.provenance = vec![value.path];
    Ok(rep)
}

pub fn dispatch(cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::CheckOracle(a) => check_oracle(a),
        Command::ChEval(a) => ch_eval(a),
        Command::Optimize(a) => optimize(a),
        Command::Scan(a) => scan(a),
        Command::Region(a) => region(a),
        Command::Robustness(a) => robustness(a),
        Command::EtaThreshold(a) => eta_threshold_cmd(a),
        Command::Hardy(a) => hardy(a),
    }
}

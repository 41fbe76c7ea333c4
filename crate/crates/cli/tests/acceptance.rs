//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hbell::bell::{
    ch_value, hardy_ch_closed, hardy_settings, hardy_vanishing_probs, p1_stationary_intensity, ChProblem, EventScheme,
};
use hbell::crosscheck::cross_check;
use hbell::fock::TruncationPolicy;
use hbell::optimize::{
    eta_threshold, fit_check_alpha0, optimize_ch, scan_p, violation_onset, Constraint, Direction, OptProblem, OptResult,
    ScanPoint, Side, NEAR_OFF,
};
use hbell::{InputSpec, Setting};

type Outcome = Result<String, String>;

const RESTARTS: usize = 32;
const SEED: u64 = 2024;
const DM: EventScheme = EventScheme::SinglePhotonDm;

fn grid_01_09() -> Vec<f64> {
    (1..10).map(|k| k as f64 / 10.0).collect()
}

fn vac(p: f64) -> InputSpec {
    InputSpec::Vac1Photon { p }
}

fn opt(input: InputSpec, scheme: EventScheme, direction: Direction, constraint: Constraint, eta: f64) -> OptResult {
    optimize_ch(&OptProblem::new(input, scheme, direction, constraint).with_eta(eta), RESTARTS, SEED)
        .expect("optimisation runs")
}

fn on_settings(r: &OptResult) -> Vec<Setting> {
    r.settings
        .as_array()
        .into_iter()
        .filter(|s| !(s.alpha < NEAR_OFF && s.r < NEAR_OFF))
        .collect()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let r = cross_check(1000, 1, &TruncationPolicy::default()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let worst = r
        .families
        .iter()
        .map(|f| format!("{} {:.1e}", f.family.label(), f.max_abs_error))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(
        r.passes(1e-9) && secs < 120.0,
        format!("1000 cases in {secs:.1} s (limit 120 s); max |closed - oracle| per family: {worst} (tol 1e-9)"),
    )
}

fn hardy_consistency() -> Outcome {
    let (mut dev, mut vanish) = (0.0f64, 0.0f64);
    for p in grid_01_09() {
        let s = hardy_settings(p).map_err(|e| e.to_string())?;
        let v = ch_value(&ChProblem::new(vac(p), s, DM)).map_err(|e| e.to_string())?;
        dev = dev.max((v.value - hardy_ch_closed(p)).abs());
        for x in hardy_vanishing_probs(p).map_err(|e| e.to_string())? {
            vanish = vanish.max(x.abs());
        }
    }
    ensure(
        dev < 1e-12 && vanish < 1e-12,
        format!("max |CH - closed form| = {dev:.1e}, max vanishing probability = {vanish:.1e} (tol 1e-12)"),
    )
}

fn p1_minimum() -> Outcome {
    let r = opt(vac(1.0), DM, Direction::Minimize, Constraint::Free, 1.0);
    let root = p1_stationary_intensity();
    let on = on_settings(&r);
    let close = !on.is_empty()
        && on
            .iter()
            .all(|s| (s.intensity() - 0.1959).abs() < 0.005 && (s.r - 0.1959).abs() < 0.005);
    let shown: Vec<String> = on.iter().map(|s| format!("({:.5}, {:.5})", s.intensity(), s.r)).collect();
    ensure(
        r.best.value <= -1.0101 && close && (root - 0.1959).abs() < 0.0005,
        format!(
            "CH_min = {:.9} (need <= -1.0101); on settings (alpha^2, R) = {}; stationary root = {root:.6}",
            r.best.value,
            shown.join(" ")
        ),
    )
}

fn optimality_condition(free_dm: &[OptResult]) -> Outcome {
    let mut fails = Vec::new();
    let worst_ideal = free_dm.iter().filter_map(OptResult::residual_max).fold(0.0, f64::max);
    if free_dm.iter().any(|r| r.residual_max().map_or(true, |x| x >= 0.01)) {
        fails.push("eta = 1 residual".to_string());
    }
    let mut lossy = Vec::new();
    for eta in [0.9, 0.95] {
        let (mut checked, mut worst) = (Vec::new(), 0.0f64);
        for p in grid_01_09() {
            let r = opt(vac(p), DM, Direction::Maximize, Constraint::Free, eta);
            // without a violation the supremum is approached by degenerate
            // settings and the condition says nothing
            if r.reliable_violation(Direction::Maximize).is_none() {
                continue;
            }
            let res = r.residual_max().unwrap_or(f64::INFINITY);
            worst = worst.max(res);
            checked.push(p);
            if res >= 0.01 {
                fails.push(format!("eta={eta} p={p}: {res:.2e}"));
            }
        }
        if checked.is_empty() {
            fails.push(format!("eta={eta}: no violating p"));
        }
        lossy.push(format!("eta={eta}: max {worst:.1e} at violating p {checked:?}"));
    }
    let (mut worst_swap, mut dch) = (0.0f64, 0.0f64);
    for (p, dm) in grid_01_09().into_iter().zip(free_dm) {
        let cm = opt(vac(p), EventScheme::SinglePhotonCm, Direction::Maximize, Constraint::Free, 1.0);
        worst_swap = worst_swap.max(cm.residual_max().unwrap_or(f64::INFINITY));
        dch = dch.max((cm.best.value - dm.best.value).abs());
    }
    if worst_swap >= 0.01 || dch >= 1e-6 {
        fails.push("event swap".into());
    }
    let detail = format!(
        "|R - alpha^2| max {worst_ideal:.1e}; |R - eta alpha^2| {}; swapped events |T - alpha^2| max {worst_swap:.1e}, |dCH| max {dch:.1e} (tol 0.01 / 1e-6){}",
        lossy.join("; "),
        if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }
    );
    ensure(fails.is_empty(), detail)
}

fn violation_regions() -> Outcome {
    let lower = |p: f64| opt(vac(p), DM, Direction::Minimize, Constraint::Free, 1.0);
    let inside: Vec<f64> = [0.990, 0.995, 1.0].into_iter().map(|p| lower(p).best.value).collect();
    let outside = lower(0.985).best.value;
    let template = Side::Lower.problem(vac(1.0), DM, 1.0);
    let onset = violation_onset(&template, 0.98, 0.995, 1e-4, RESTARTS, SEED).map_err(|e| e.to_string())?;
    let fine: Vec<f64> = (0..=40).map(|k| 0.9998 + k as f64 * 5e-6).collect();
    let pts = scan_p(&template, &fine, RESTARTS, SEED).map_err(|e| e.to_string())?;
    let (argmin, min) = pts
        .iter()
        .filter_map(|pt| pt.outcome.as_ref().ok().map(|r| (pt.p, r.best.value)))
        .fold((f64::NAN, f64::INFINITY), |acc, (p, v)| if v < acc.1 { (p, v) } else { acc });
    ensure(
        inside.iter().all(|&v| v < -1.0 - 1e-9)
            && outside >= -1.0 - 1e-9
            && (onset - 0.989).abs() <= 0.002
            && (argmin - 0.99996).abs() <= 5e-5,
        format!(
            "CH_min at p = 0.990/0.995/1.0: {:.6}/{:.6}/{:.6}, at 0.985: {outside:.6}; onset {onset:.5} (0.989 ± 0.002); argmin {argmin:.6} with CH {min:.9} (0.99996 ± 5e-5)",
            inside[0], inside[1], inside[2]
        ),
    )
}

fn efficiency_threshold() -> Outcome {
    let grid: Vec<f64> = (0..=40).map(|k| 0.005 + k as f64 * 0.0025).collect();
    let t = eta_threshold(vac(0.5), DM, 1e-5, &grid, 8, SEED).map_err(|e| e.to_string())?;
    ensure(
        (t.eta_min - 0.844).abs() <= 0.01 && (t.p_at_min - 0.038).abs() <= 0.01,
        format!(
            "eta_min = {:.5} (0.844 ± 0.01) at p = {:.4} (0.038 ± 0.01); residual max {:.1e}",
            t.eta_min,
            t.p_at_min,
            t.best.residual_max().unwrap_or(f64::NAN)
        ),
    )
}

fn fit_agreement(free_dm: &[OptResult]) -> Outcome {
    let pts: Vec<ScanPoint> = grid_01_09()
        .into_iter()
        .zip(free_dm)
        .map(|(p, r)| ScanPoint { p, outcome: Ok(r.clone()) })
        .collect();
    let f = fit_check_alpha0(&pts).map_err(|e| e.to_string())?;
    ensure(
        f.max_deviation < 0.05,
        format!("max |alpha0^2 - fit| over p = 0.1..0.9: {:.4} (tol 0.05)", f.max_deviation),
    )
}

fn no_violation_properties() -> Outcome {
    let ps = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
    let mut worst_fixed = f64::NEG_INFINITY;
    for (n, m) in [(2, 0), (1, 1), (0, 2), (1, 2), (0, 3)] {
        for p in ps {
            for side in [Side::Upper, Side::Lower] {
                let r = optimize_ch(&side.problem(vac(p), EventScheme::FixedNm { n, m }, 1.0), 16, SEED)
                    .map_err(|e| e.to_string())?;
                worst_fixed = worst_fixed.max(side.direction().violation(r.best.value));
            }
        }
    }
    let mut ordered = true;
    let mut table = Vec::new();
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let at = |scheme| {
            optimize_ch(&Side::Upper.problem(vac(p), scheme, 1.0), RESTARTS, SEED)
                .map(|r| r.best.value.max(0.0))
                .map_err(|e| e.to_string())
        };
        let single = at(DM)?;
        let m2 = at(EventScheme::MixedOnOff { n: 0, m: 2 })?;
        let m3 = at(EventScheme::MixedOnOff { n: 0, m: 3 })?;
        ordered &= single > m2 && m2 > m3;
        table.push(format!("p={p}: {single:.2e} > {m2:.2e} > {m3:.2e}"));
    }
    ensure(
        worst_fixed <= 1e-9 && ordered,
        format!(
            "fixed (n,m), n+m > 1: largest violation {worst_fixed:.1e} (tol 1e-9); upper violations single > mixed(0,2) > mixed(0,3): {}",
            table.join("; ")
        ),
    )
}

fn photon_pair() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for p in grid_01_09() {
        let input = InputSpec::PhotonPair { p };
        let free = opt(input, DM, Direction::Maximize, Constraint::Free, 1.0);
        let onoff = [Constraint::OnOffPrimedOff, Constraint::OnOffUnprimedOff, Constraint::OnOffCrossed]
            .into_iter()
            .map(|c| opt(input, DM, Direction::Maximize, c, 1.0).best.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let res = free.residual_max().unwrap_or(f64::INFINITY);
        let gap = free.best.value - onoff;
        // exact on/off optimality from p = 0.5 on, within 10% below
        let near = if p >= 0.5 { gap <= 1e-6 } else { onoff >= 0.9 * free.best.value };
        ok &= free.best.value > 1e-6 && res < 0.01 && near;
        lines.push(format!("p={p}: CH {:.3e}, on/off gap {gap:.1e}, residual {res:.1e}", free.best.value));
    }
    ensure(ok, lines.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_hbell");
    let run = |args: &[&str], cwd: &Path| {
        Command::new(bin)
            .current_dir(cwd)
            .args(args)
            .output()
            .map_err(|e| e.to_string())
    };
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("check-oracle", vec!["check-oracle", "--cases", "20", "--seed", "3"]),
        ("ch-eval", vec!["ch-eval", "--p", "0.5", "--preset", "onoff-max", "--restarts", "8", "--seed", "3"]),
        ("optimize", vec!["optimize", "--p", "0.6", "--restarts", "8", "--seed", "3"]),
        ("scan", vec!["scan", "--direction", "max", "--p-grid", "0.1:0.9:0.1", "--seed", "7", "--restarts", "8"]),
        ("region", vec!["region", "--side", "lower", "--p-grid", "0.98:1:0.005", "--alpha-grid", "0.1:0.3:0.05", "--restarts", "8", "--seed", "3"]),
        ("robustness", vec!["robustness", "--p-grid", "0.3,0.7", "--samples", "500", "--restarts", "8", "--seed", "3"]),
        ("eta-threshold", vec!["eta-threshold", "--p-grid", "0.03:0.05:0.005", "--restarts", "4", "--seed", "3"]),
        ("hardy", vec!["hardy", "--p", "0.4"]),
    ];
    let elsewhere = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut replayed = Vec::new();
    for (name, mut args) in commands {
        let csv = format!("{name}.csv");
        let json = format!("{name}.json");
        args.extend(["--csv", &csv, "--json", &json]);
        let o = run(&args, dir.path())?;
        if !o.status.success() {
            return Err(format!("{name} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let manifest = dir.path().join(format!("{csv}.manifest.json"));
        let o = run(&["--replay", manifest.to_str().unwrap()], elsewhere.path())?;
        if !o.status.success() {
            return Err(format!("{name} replay: {}", String::from_utf8_lossy(&o.stderr)));
        }
        replayed.push(name);
    }
    Ok(format!("CSV and JSON reproduced byte for byte on replay for: {}", replayed.join(", ")))
}

fn main() {
    let t0 = Instant::now();
    let free_dm: Vec<OptResult> = grid_01_09()
        .into_iter()
        .map(|p| opt(vac(p), DM, Direction::Maximize, Constraint::Free, 1.0))
        .collect();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("Hardy consistency", Box::new(hardy_consistency)),
        ("p = 1 minimum", Box::new(p1_minimum)),
        ("optimality condition", Box::new(|| optimality_condition(&free_dm))),
        ("violation regions", Box::new(violation_regions)),
        ("efficiency threshold", Box::new(efficiency_threshold)),
        ("fit agreement", Box::new(|| fit_agreement(&free_dm))),
        ("no-violation properties", Box::new(no_violation_properties)),
        ("photon-pair family", Box::new(photon_pair)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name} [{secs:.1} s]: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} [{secs:.1} s]: {d}", i + 1)
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        criteria.len() - failed,
        criteria.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

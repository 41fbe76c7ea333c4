//! Scans and derived quantities built on the optimiser: CH over a grid of
//! source weights, violation regions, intensity-noise robustness and the
//! detector-efficiency threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{optimize_ch_from, Constraint, Direction, OptProblem, OptResult, SIGNIFICANCE_FLOOR};
use crate::bell::{ch_value_unchecked, ChProblem, EventScheme, Settings};
use crate::error::{Error, Result};
use crate::params::{InputSpec, Setting};

/// Independent, reproducible seed for the `i`-th task of a study.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("{name} grid is empty")));
    }
    if let Some(x) = grid.iter().find(|x| !(lo..=hi).contains(*x)) {
        return Err(Error::invalid(format!("{name} grid value {x} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// One grid point of a scan; failures are kept, not propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub p: f64,
    pub outcome: std::result::Result<OptResult, String>,
}

/// Optimise `template` at every `p` in `p_grid`, warm-starting each point from
/// the previous optimum in addition to `restarts` fresh starts.
pub fn scan_p(template: &OptProblem, p_grid: &[f64], restarts: usize, seed: u64) -> Result<Vec<ScanPoint>> {
    check_grid("p", p_grid, 0.0, 1.0)?;
    template.validate()?;
    let mut previous: Option<Settings> = None;
    let mut out = Vec::with_capacity(p_grid.len());
    for (i, &p) in p_grid.iter().enumerate() {
        let problem = template.with_p(p);
        let warm: Vec<Settings> = previous.into_iter().collect();
        let outcome = optimize_ch_from(&problem, restarts, derive_seed(seed, i as u64), &warm);
        if let Ok(r) = &outcome {
            previous = Some(r.settings);
        }
        out.push(ScanPoint {
            p,
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    Ok(out)
}

/// Source weight in `[lo, hi]` where the optimum of `template` crosses the
/// significance floor, by bisection to `tol`. One end must violate and the
/// other not.
pub fn violation_onset(template: &OptProblem, lo: f64, hi: f64, tol: f64, restarts: usize, seed: u64) -> Result<f64> {
    check_grid("p", &[lo, hi], 0.0, 1.0)?;
    if !(tol > 0.0) || lo >= hi {
        return Err(Error::invalid("need lo < hi and a positive tolerance"));
    }
    let violated = |p: f64| -> Result<bool> {
        let r = optimize_ch_from(&template.with_p(p), restarts, seed, &[])?;
        Ok(r.reliable_violation(template.direction).is_some())
    };
    let (mut a, mut b) = (lo, hi);
    let va = violated(a)?;
    if va == violated(b)? {
        return Err(Error::invalid(format!("violation does not change between p = {lo} and p = {hi}")));
    }
    while b - a > tol {
        let m = 0.5 * (a + b);
        if violated(m)? == va {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Which bound of the CH inequality is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `CH > 0`, reached with the primed settings off.
    Upper,
    /// `CH < -1`, reached with the unprimed settings off.
    Lower,
}

impl Side {
    pub fn direction(self) -> Direction {
        match self {
            Side::Upper => Direction::Maximize,
            Side::Lower => Direction::Minimize,
        }
    }

    pub fn constraint(self) -> Constraint {
        match self {
            Side::Upper => Constraint::OnOffPrimedOff,
            Side::Lower => Constraint::OnOffUnprimedOff,
        }
    }

    /// The on/off optimisation problem for this side.
    pub fn problem(self, input: InputSpec, scheme: EventScheme, eta: f64) -> OptProblem {
        OptProblem::new(input, scheme, self.direction(), self.constraint()).with_eta(eta)
    }

    pub fn is_violated(self, ch: f64) -> bool {
        self.direction().violation(ch) > SIGNIFICANCE_FLOOR
    }
}

/// `settings` with every active oscillator set to intensity `alpha_sq`;
/// splitters and phases unchanged.
pub fn with_intensity(settings: &Settings, alpha_sq: f64) -> Settings {
    Settings::from_array(settings.as_array().map(|s| {
        if s.is_off() {
            s
        } else {
            Setting::from_intensity(alpha_sq, s.phi, s.r)
        }
    }))
}

/// Intensity of the first active setting.
pub fn optimal_intensity(settings: &Settings) -> f64 {
    settings
        .as_array()
        .into_iter()
        .find(|s| !s.is_off())
        .map_or(0.0, |s| s.intensity())
}

/// CH over a `(p, alpha^2)` grid with the remaining settings frozen at each
/// row's on/off optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub side: Side,
    pub p_grid: Vec<f64>,
    pub alpha_sq_grid: Vec<f64>,
    /// `ch[i][j]` at `p_grid[i]`, `alpha_sq_grid[j]`.
    pub ch: Vec<Vec<f64>>,
    pub violated: Vec<Vec<bool>>,
    /// Optimal intensity per `p`.
    pub optimum_alpha_sq: Vec<f64>,
    pub optimum_ch: Vec<f64>,
}

pub fn violation_region(
    input: InputSpec,
    scheme: EventScheme,
    side: Side,
    p_grid: &[f64],
    alpha_sq_grid: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<RegionMap> {
    check_grid("p", p_grid, 0.0, 1.0)?;
    check_grid("alpha^2", alpha_sq_grid, 0.0, f64::MAX)?;
    let rows: Vec<Result<(f64, f64, Vec<f64>)>> = p_grid
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let problem = side.problem(input.with_p(p), scheme, 1.0);
            let opt = optimize_ch_from(&problem, restarts, derive_seed(seed, i as u64), &[])?;
            let ch = alpha_sq_grid
                .iter()
                .map(|&a2| {
                    let s = with_intensity(&opt.settings, a2);
                    ch_value_unchecked(&ChProblem::new(problem.input, s, scheme)).map(|v| v.value)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((optimal_intensity(&opt.settings), opt.best.value, ch))
        })
        .collect();
    let mut map = RegionMap {
        side,
        p_grid: p_grid.to_vec(),
        alpha_sq_grid: alpha_sq_grid.to_vec(),
        ch: Vec::new(),
        violated: Vec::new(),
        optimum_alpha_sq: Vec::new(),
        optimum_ch: Vec::new(),
    };
    for row in rows {
        let (a2, best, ch) = row?;
        map.violated.push(ch.iter().map(|&c| side.is_violated(c)).collect());
        map.ch.push(ch);
        map.optimum_alpha_sq.push(a2);
        map.optimum_ch.push(best);
    }
    Ok(map)
}

/// Monte Carlo estimate of the relative CH change under oscillator intensity
/// noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaEstimate {
    pub p: f64,
    pub side: Side,
    pub sigma_rel: f64,
    /// Mean of `|CH(alpha^2) - CH_0| / |CH_0|`, in percent.
    pub zeta_percent: f64,
    /// Standard error of the mean, in percent.
    pub std_error_percent: f64,
    pub alpha0_sq: f64,
    pub ch0: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `zeta(p)`: draw `alpha^2` from a normal centred on the optimal intensity
/// with deviation `sigma_rel * alpha0^2`, redraw negative values, apply the
/// draw to both stations and average the relative change of CH.
pub fn zeta(
    input: InputSpec,
    scheme: EventScheme,
    side: Side,
    sigma_rel: f64,
    n_samples: usize,
    restarts: usize,
    seed: u64,
) -> Result<ZetaEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    if !(sigma_rel.is_finite() && sigma_rel >= 0.0) {
        return Err(Error::invalid(format!("relative deviation must be >= 0, got {sigma_rel}")));
    }
    let problem = side.problem(input, scheme, 1.0);
    let opt = optimize_ch_from(&problem, restarts, derive_seed(seed, 0), &[])?;
    let alpha0_sq = optimal_intensity(&opt.settings);
    let eval = |a2: f64| -> Result<f64> {
        let s = with_intensity(&opt.settings, a2);
        Ok(ch_value_unchecked(&ChProblem::new(input, s, scheme))?.value)
    };
    // same evaluation route as the samples, so zero noise gives exactly zero
    let ch0 = eval(alpha0_sq)?;
    if !side.is_violated(ch0) {
        return Err(Error::invalid(format!(
            "no violation above {SIGNIFICANCE_FLOOR:e} at p = {}",
            input.p()
        )));
    }
    let normal = Normal::new(alpha0_sq, sigma_rel * alpha0_sq)
        .map_err(|e| Error::invalid(format!("bad intensity distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let a2 = loop {
            let x = normal.sample(&mut rng);
            if x >= 0.0 {
                break x;
            }
        };
        let rel = (eval(a2)? - ch0).abs() / ch0.abs();
        sum += rel;
        sum_sq += rel * rel;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(ZetaEstimate {
        p: input.p(),
        side,
        sigma_rel,
        zeta_percent: 100.0 * mean,
        std_error_percent: 100.0 * (var / n).sqrt(),
        alpha0_sq,
        ch0,
        samples: n_samples,
        seed,
    })
}

/// Lowest efficiency still giving a significant upper-bound violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaThreshold {
    pub eta_min: f64,
    pub p_at_min: f64,
    pub significance: f64,
    /// Optimum at `(eta_min, p_at_min)`.
    pub best: OptResult,
    /// Bisection bracket at exit: violation at `eta_min`, none at `eta_below`.
    pub eta_below: f64,
}

/// Bisection tolerance on the efficiency.
pub const ETA_TOL: f64 = 1e-4;

/// Best upper-bound optimum over `p_grid` at efficiency `eta`, warm-started
/// per grid point from `warm`.
fn best_over_p(
    input: InputSpec,
    scheme: EventScheme,
    eta: f64,
    p_grid: &[f64],
    restarts: usize,
    seed: u64,
    warm: &[Option<Settings>],
) -> Result<Vec<OptResult>> {
    p_grid
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let problem = Side::Upper.problem(input.with_p(p), scheme, eta);
            let w: Vec<Settings> = warm.get(i).copied().flatten().into_iter().collect();
            optimize_ch_from(&problem, restarts, derive_seed(seed, i as u64), &w)
        })
        .collect()
}

fn argmax(results: &[OptResult]) -> usize {
    (0..results.len())
        .max_by(|&a, &b| {
            results[a]
                .best
                .value
                .total_cmp(&results[b].best.value)
                .then(b.cmp(&a))
        })
        .expect("non-empty grid")
}

/// Bisect the efficiency for which `max_p max_settings CH` first reaches
/// `significance`, searching the on/off scheme with primed settings off.
pub fn eta_threshold(
    input: InputSpec,
    scheme: EventScheme,
    significance: f64,
    p_grid: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<EtaThreshold> {
    check_grid("p", p_grid, 0.0, 1.0)?;
    if !(significance > 0.0) {
        return Err(Error::invalid(format!("significance must be positive, got {significance}")));
    }
    let run = |eta: f64, warm: &[Option<Settings>]| best_over_p(input, scheme, eta, p_grid, restarts, seed, warm);

    let mut hi_res = run(1.0, &[])?;
    let k = argmax(&hi_res);
    if hi_res[k].best.value < significance {
        return Err(Error::invalid(format!(
            "no violation of {significance:e} even with ideal detectors"
        )));
    }
    let (mut lo, mut hi) = (0.5f64, 1.0f64);
    let warm = |r: &[OptResult]| r.iter().map(|x| Some(x.settings)).collect::<Vec<_>>();
    let lo_res = run(lo, &warm(&hi_res))?;
    if lo_res[argmax(&lo_res)].best.value >= significance {
        return Err(Error::invalid("violation persists down to eta = 0.5"));
    }
    while hi - lo > ETA_TOL {
        let mid = 0.5 * (lo + hi);
        let res = run(mid, &warm(&hi_res))?;
        if res[argmax(&res)].best.value >= significance {
            hi = mid;
            hi_res = res;
        } else {
            lo = mid;
        }
    }
    let k = argmax(&hi_res);
    Ok(EtaThreshold {
        eta_min: hi,
        p_at_min: p_grid[k],
        significance,
        best: hi_res.swap_remove(k),
        eta_below: lo,
    })
}

/// Empirical fit of the optimal oscillator intensity for the
/// vacuum–one-photon state: `1 - (1 - p^0.39634)^0.453581`.
pub fn alpha0_fit(p: f64) -> f64 {
    1.0 - (1.0 - p.powf(0.39634)).powf(0.453581)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCheck {
    /// `(p, optimised alpha0^2, fitted alpha0^2)` per successful scan point.
    pub points: Vec<(f64, f64, f64)>,
    pub max_deviation: f64,
}

/// Compare the optimal intensities of a maximisation scan with
/// [`alpha0_fit`]. Failed scan points are skipped.
pub fn fit_check_alpha0(scan: &[ScanPoint]) -> Result<FitCheck> {
    let points: Vec<(f64, f64, f64)> = scan
        .iter()
        .filter_map(|pt| pt.outcome.as_ref().ok().map(|r| (pt.p, r)))
        .map(|(p, r)| (p, optimal_intensity(&r.settings), alpha0_fit(p)))
        .collect();
    if points.is_empty() {
        return Err(Error::invalid("no successful scan points to compare"));
    }
    let max_deviation = points.iter().map(|(_, a, f)| (a - f).abs()).fold(0.0, f64::max);
    Ok(FitCheck { points, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_values() {
        assert!((alpha0_fit(0.5) - 0.476).abs() < 5e-4);
        assert_eq!(alpha0_fit(1.0), 1.0);
        assert_eq!(alpha0_fit(0.0), 0.0);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 7), derive_seed(5, 7));
    }

    #[test]
    fn grids_validated() {
        let t = Side::Upper.problem(InputSpec::Vac1Photon { p: 0.5 }, EventScheme::SinglePhotonDm, 1.0);
        assert!(scan_p(&t, &[], 1, 0).is_err());
        assert!(scan_p(&t, &[1.5], 1, 0).is_err());
        let v = InputSpec::Vac1Photon { p: 0.5 };
        assert!(violation_region(v, EventScheme::SinglePhotonDm, Side::Upper, &[0.5], &[], 1, 0).is_err());
    }

    #[test]
    fn zero_noise_zero_zeta() {
        let z = zeta(
            InputSpec::Vac1Photon { p: 0.6 },
            EventScheme::SinglePhotonDm,
            Side::Upper,
            0.0,
            10,
            4,
            1,
        )
        .unwrap();
        assert_eq!(z.zeta_percent, 0.0);
    }
}

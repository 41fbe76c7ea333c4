//! Extremal CH values over measurement settings.
//!
//! Each setting is searched in unconstrained coordinates `(a, phi, y)` with
//! `alpha = alpha_max * sin(a / alpha_max)` and `sqrt(R) = sin(y)`. A negative
//! amplitude or mixing angle is the same measurement with the phase advanced
//! by `pi`, so the objective stays smooth through the off point `alpha = R = 0`
//! and the simplex can land on it.

mod simplex;
mod studies;

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{ch_value_unchecked, ChProblem, ChValue, EventScheme, Settings};
use crate::error::{Error, Result};
use crate::params::{InputSpec, Setting};

pub use simplex::{minimize, SimplexOptions, SimplexOutcome};
pub use studies::*;

/// Default number of multi-start restarts.
pub const DEFAULT_RESTARTS: usize = 64;
/// Default cap on the oscillator amplitude.
pub const DEFAULT_ALPHA_MAX: f64 = 3.0;
/// Violations smaller than this are not reported as violations.
pub const SIGNIFICANCE_FLOOR: f64 = 1e-9;
/// A setting with both `alpha` and `R` below this counts as off when
/// residuals are reported.
pub const NEAR_OFF: f64 = 1e-3;
/// Candidates this close to the extremum are tie-broken by the settings.
const TIE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Maximize => -1.0,
            Direction::Minimize => 1.0,
        }
    }

    /// How far `ch` lies beyond the local-realistic bound on this side.
    pub fn violation(self, ch: f64) -> f64 {
        match self {
            Direction::Maximize => ch,
            Direction::Minimize => -1.0 - ch,
        }
    }
}

/// Which settings are searched and which are tied or pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// All twelve parameters.
    Free,
    /// `A` and `B` off, `A'` and `B'` searched.
    OnOffUnprimedOff,
    /// `A'` and `B'` off, `A` and `B` searched.
    OnOffPrimedOff,
    /// `A` and `B'` off: the unprimed setting of one party and the primed
    /// setting of the other.
    OnOffCrossed,
    /// Both parties use the same pair of settings.
    Symmetric,
}

impl Constraint {
    /// Variable block feeding each of `[A, A', B, B']`; `None` pins it off.
    fn slots(self) -> [Option<usize>; 4] {
        match self {
            Constraint::Free => [Some(0), Some(1), Some(2), Some(3)],
            Constraint::OnOffUnprimedOff => [None, Some(0), None, Some(1)],
            Constraint::OnOffPrimedOff => [Some(0), None, Some(1), None],
            Constraint::OnOffCrossed => [None, Some(0), Some(1), None],
            Constraint::Symmetric => [Some(0), Some(1), Some(0), Some(1)],
        }
    }

    fn blocks(self) -> usize {
        self.slots().iter().flatten().max().map_or(0, |m| m + 1)
    }

    /// Lower-dimensional constraints whose optima seed a search under this
    /// one. Every on/off optimum is a point of the free space (and the
    /// symmetric space contains the symmetric ones), so seeding guarantees
    /// the larger search never ends below them.
    fn seeding_subproblems(self) -> &'static [Constraint] {
        match self {
            Constraint::Free => &[
                Constraint::OnOffPrimedOff,
                Constraint::OnOffUnprimedOff,
                Constraint::OnOffCrossed,
                Constraint::Symmetric,
            ],
            Constraint::Symmetric => &[Constraint::OnOffPrimedOff, Constraint::OnOffUnprimedOff],
            _ => &[],
        }
    }

    pub fn is_onoff(self) -> bool {
        self.slots().iter().any(Option::is_none)
    }

    pub fn label(self) -> &'static str {
        match self {
            Constraint::Free => "free",
            Constraint::OnOffUnprimedOff => "onoff_unprimed_off",
            Constraint::OnOffPrimedOff => "onoff_primed_off",
            Constraint::OnOffCrossed => "onoff_crossed",
            Constraint::Symmetric => "symmetric",
        }
    }
}

/// The `|R - eta alpha^2|` mismatch the optimality condition drives to zero
/// (`|T - eta alpha^2|` for c-mode single-photon events); `None` for settings
/// at or near off.
pub fn setting_residual(scheme: EventScheme, eta: f64, s: &Setting) -> Option<f64> {
    if s.alpha < NEAR_OFF && s.r < NEAR_OFF {
        return None;
    }
    let split = match scheme {
        EventScheme::SinglePhotonCm => s.t(),
        _ => s.r,
    };
    Some((split - eta * s.intensity()).abs())
}

/// An optimisation task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub input: InputSpec,
    pub scheme: EventScheme,
    pub direction: Direction,
    pub constraint: Constraint,
    pub eta: f64,
    pub alpha_max: f64,
}

impl OptProblem {
    pub fn new(input: InputSpec, scheme: EventScheme, direction: Direction, constraint: Constraint) -> Self {
        OptProblem {
            input,
            scheme,
            direction,
            constraint,
            eta: 1.0,
            alpha_max: DEFAULT_ALPHA_MAX,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        OptProblem { eta, ..self }
    }

    pub fn with_p(self, p: f64) -> Self {
        OptProblem {
            input: self.input.with_p(p),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.input.validate()?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid(format!("efficiency must lie in (0,1], got {}", self.eta)));
        }
        if !(self.alpha_max.is_finite() && self.alpha_max > 0.0) {
            return Err(Error::invalid(format!("alpha_max must be positive, got {}", self.alpha_max)));
        }
        if let EventScheme::MixedOnOff { .. } = self.scheme {
            let s = self.constraint.slots();
            if !((s[0].is_none() || s[1].is_none()) && (s[2].is_none() || s[3].is_none())) {
                return Err(Error::invalid(format!(
                    "mixed on/off events need an on/off constraint, got {}",
                    self.constraint.label()
                )));
            }
        }
        Ok(())
    }

    fn ch_problem(&self, settings: Settings) -> ChProblem {
        ChProblem::new(self.input, settings, self.scheme).with_eta(self.eta)
    }

    fn residual(&self, s: &Setting) -> Option<f64> {
        setting_residual(self.scheme, self.eta, s)
    }

    fn decode_block(&self, x: &[f64]) -> Setting {
        let am = self.alpha_max;
        let alpha = am * (x[0] / am).sin();
        let root_r = x[2].sin();
        let flip = (alpha < 0.0) != (root_r < 0.0);
        let phi = x[1] + if flip { PI } else { 0.0 };
        Setting::new(alpha.abs(), phi.rem_euclid(TAU), root_r * root_r)
    }

    fn encode_block(&self, s: &Setting) -> [f64; 3] {
        let am = self.alpha_max;
        [
            am * (s.alpha.min(am) / am).asin(),
            s.phi,
            s.r.clamp(0.0, 1.0).sqrt().asin(),
        ]
    }

    /// Settings for a point of the search space.
    pub fn decode(&self, x: &[f64]) -> Settings {
        let slots = self.constraint.slots();
        Settings::from_array(slots.map(|k| match k {
            Some(k) => self.decode_block(&x[3 * k..3 * k + 3]),
            None => Setting::off(),
        }))
    }

    /// Search-space point for `settings`; tied blocks take the first setting
    /// that feeds them.
    pub fn encode(&self, settings: &Settings) -> Vec<f64> {
        let mut x = vec![0.0; 3 * self.constraint.blocks()];
        let mut seen = [false; 4];
        for (k, s) in self.constraint.slots().iter().zip(settings.as_array()) {
            if let Some(k) = *k {
                if !seen[k] {
                    x[3 * k..3 * k + 3].copy_from_slice(&self.encode_block(&s));
                    seen[k] = true;
                }
            }
        }
        x
    }

    /// Extremal CH value found by `restarts` local searches from quasi-random
    /// starting points. Deterministic in `(self, restarts, seed)`.
    pub fn optimize(&self, restarts: usize, seed: u64) -> Result<OptResult> {
        optimize_ch_from(self, restarts, seed, &[])
    }
}

/// Best value found and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best: ChValue,
    pub settings: Settings,
    /// `|R - eta alpha^2|` (`|T - eta alpha^2|` for c-mode events) per setting
    /// in `[A, A', B, B']` order; `None` for settings at or near off.
    pub residuals: [Option<f64>; 4],
    pub restarts_used: usize,
    /// Local searches that met the simplex tolerances.
    pub converged: usize,
    /// Whether the search that produced `best` met them.
    pub best_converged: bool,
    /// Local searches that produced no finite value.
    pub failed: usize,
    pub evaluations: usize,
    pub seed: u64,
}

impl OptResult {
    pub fn residual_max(&self) -> Option<f64> {
        self.residuals.iter().flatten().copied().reduce(f64::max)
    }

    /// Size of the violation in `direction`, or `None` below the significance
    /// floor.
    pub fn reliable_violation(&self, direction: Direction) -> Option<f64> {
        let v = direction.violation(self.best.value);
        (v > SIGNIFICANCE_FLOOR).then_some(v)
    }
}

/// Optimisation tuning shared by all problems.
pub fn simplex_options(dim: usize) -> SimplexOptions {
    SimplexOptions {
        max_evals: 2_500 * dim.max(1),
        ..SimplexOptions::default()
    }
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    r
}

/// Halton points with a random (Cranley–Patterson) shift drawn from `seed`.
fn starting_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|i| {
            (0..dim)
                .map(|d| (radical_inverse(i as u64 + 1, PRIMES[d % PRIMES.len()]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Typical oscillator amplitudes lie well inside the cap; starts are spread
/// over `[0, min(alpha_max, 1.5)]`.
const START_ALPHA: f64 = 1.5;

fn start_from_unit(problem: &OptProblem, u: &[f64]) -> Vec<f64> {
    u.chunks(3)
        .flat_map(|c| {
            let s = Setting::new(problem.alpha_max.min(START_ALPHA) * c[0], TAU * c[1], c[2]);
            problem.encode_block(&s)
        })
        .collect()
}

/// Fixed starts on the line `R = alpha^2` at the two phases that matter for
/// the vacuum–one-photon state. Violating basins can be small (at `p = 1`
/// only `alpha^2 < 0.32` violates) and a handful of random starts may all
/// slide onto the flat `alpha = 0` plateau.
fn anchor_starts(problem: &OptProblem) -> Vec<Settings> {
    let mut out = Vec::new();
    for x in [0.2f64, 0.5, 0.8] {
        for phi in [0.5 * PI, 1.5 * PI] {
            let on = Setting::from_intensity(x.min(problem.alpha_max.powi(2)), phi, x);
            let slots = problem.constraint.slots();
            out.push(Settings::from_array(slots.map(|k| if k.is_some() { on } else { Setting::off() })));
        }
    }
    out
}

struct LocalRun {
    value: f64,
    settings: Settings,
    converged: bool,
    evals: usize,
}

fn local_search(problem: &OptProblem, x0: &[f64]) -> LocalRun {
    let sign = problem.direction.sign();
    let objective = |x: &[f64]| match ch_value_unchecked(&problem.ch_problem(problem.decode(x))) {
        Ok(v) => sign * v.value,
        Err(_) => f64::INFINITY,
    };
    let steps: Vec<f64> = (0..x0.len())
        .map(|i| match i % 3 {
            0 => 0.2,
            1 => 0.6,
            _ => 0.2,
        })
        .collect();
    let out = minimize(objective, x0, &steps, &simplex_options(x0.len()));
    LocalRun {
        value: sign * out.f,
        settings: problem.decode(&out.x),
        converged: out.converged,
        evals: out.evals,
    }
}

/// Order among near-equal optima: phase of the first active setting in
/// `[0, pi]` first, then smallest `(alpha, R)` of that setting.
fn tie_key(s: &Settings) -> (bool, f64, f64) {
    let first = s.as_array().into_iter().find(|x| !x.is_off()).unwrap_or(Setting::off());
    (first.phi > PI, first.alpha, first.r)
}

/// [`OptProblem::optimize`] with extra starting settings tried before the
/// quasi-random ones (e.g. the optimum of a neighbouring problem).
pub fn optimize_ch_from(problem: &OptProblem, restarts: usize, seed: u64, warm: &[Settings]) -> Result<OptResult> {
    problem.validate()?;
    if restarts == 0 {
        return Err(Error::invalid("at least one restart is required"));
    }
    let dim = 3 * problem.constraint.blocks();
    let mut warm = warm.to_vec();
    let mut sub_runs = (0, 0, 0, 0);
    for c in problem.constraint.seeding_subproblems() {
        let sub = OptProblem {
            constraint: *c,
            ..*problem
        };
        let r = optimize_ch_from(&sub, restarts, seed, &[])?;
        warm.push(r.settings);
        if *c == Constraint::OnOffCrossed {
            warm.push(r.settings.swapped_parties());
        }
        sub_runs.0 += r.restarts_used;
        sub_runs.1 += r.converged;
        sub_runs.2 += r.failed;
        sub_runs.3 += r.evaluations;
    }
    warm.extend(anchor_starts(problem));
    let mut starts: Vec<Vec<f64>> = warm.iter().map(|s| problem.encode(s)).collect();
    starts.extend(
        starting_points(dim, restarts, seed)
            .iter()
            .map(|u| start_from_unit(problem, u)),
    );

    let runs: Vec<LocalRun> = starts.par_iter().map(|x0| local_search(problem, x0)).collect();

    let failed = runs.iter().filter(|r| !r.value.is_finite()).count();
    let sign = problem.direction.sign();
    let best = runs
        .iter()
        .filter(|r| r.value.is_finite())
        .map(|r| sign * r.value)
        .reduce(f64::min)
        .ok_or(Error::NoConvergence { restarts: runs.len() })?;
    let chosen = runs
        .iter()
        .filter(|r| r.value.is_finite() && sign * r.value <= best + TIE_TOL)
        .min_by(|a, b| {
            let (ka, kb) = (tie_key(&a.settings), tie_key(&b.settings));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        })
        .expect("the extremum itself qualifies");

    let settings = chosen.settings;
    let value: ChValue = ch_value_unchecked(&problem.ch_problem(settings))?;
    Ok(OptResult {
        best: value,
        settings,
        residuals: settings.as_array().map(|s| problem.residual(&s)),
        restarts_used: runs.len() + sub_runs.0,
        converged: runs.iter().filter(|r| r.converged).count() + sub_runs.1,
        best_converged: chosen.converged,
        failed: failed + sub_runs.2,
        evaluations: runs.iter().map(|r| r.evals).sum::<usize>() + sub_runs.3,
        seed,
    })
}

/// Free function form of [`OptProblem::optimize`].
pub fn optimize_ch(problem: &OptProblem, restarts: usize, seed: u64) -> Result<OptResult> {
    optimize_ch_from(problem, restarts, seed, &[])
}

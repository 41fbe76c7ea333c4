//! Analytic detection probabilities for the vacuum–one-photon and photon-pair
//! inputs, plus binomial detector-inefficiency sums.
//!
//! The general-pattern probabilities are organised per station. For a station
//! with setting `(alpha, phi, R)` and event `(n, m)` let `A0` be the detection
//! amplitude when no source photon enters the station and `A1` when one does.
//! With `Pd = Poisson(alpha^2 R)` (mode `d`) and `Pc = Poisson(alpha^2 (1-R))`
//! (mode `c`):
//!
//! * `u = |A0|^2 = Pd[m] Pc[n]`
//! * `v = |A1|^2 = m(1-R) Pd[m-1] Pc[n] - 2 alpha^2 R(1-R) Pd[m-1] Pc[n-1] + n R Pd[m] Pc[n-1]`
//! * `w = alpha sqrt(R(1-R)) (Pd[m-1] Pc[n] - Pd[m] Pc[n-1])`, with `A0 conj(A1) = i e^{i phi} w`
//!
//! (`P[-1] = 0`). Multiplying out the prefactor of the general joint formula
//! against each bracketed addend gives exactly these products, so no negative
//! powers of `R`, `1-R` or `alpha` are ever evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EventPattern, InputSpec, Setting};
use crate::special::{binomial, factorial, poisson_table, poisson_upper_tail};

/// Extra photons the inefficiency sums may add before giving up.
pub const SUMMATION_CAP: u32 = 60;

/// Per-station building blocks of every joint and local probability.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StationFactors {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl StationFactors {
    fn axpy(&mut self, k: f64, o: &StationFactors) {
        self.u += k * o.u;
        self.v += k * o.v;
        self.w += k * o.w;
    }
}

/// Poisson tables for one station, reused across patterns.
struct StationTables {
    pd: Vec<f64>,
    pc: Vec<f64>,
    coupling: f64,
    r: f64,
    alpha_sq: f64,
}

impl StationTables {
    fn new(s: &Setting, kmax: usize) -> Self {
        let a2 = s.intensity();
        StationTables {
            pd: poisson_table(a2 * s.r, kmax),
            pc: poisson_table(a2 * (1.0 - s.r), kmax),
            coupling: s.alpha * (s.r * (1.0 - s.r)).max(0.0).sqrt(),
            r: s.r,
            alpha_sq: a2,
        }
    }

    fn at(&self, n: usize, m: usize) -> StationFactors {
        let pd = |k: usize| self.pd[k];
        let pc = |k: usize| self.pc[k];
        let pd_m1 = if m > 0 { pd(m - 1) } else { 0.0 };
        let pc_n1 = if n > 0 { pc(n - 1) } else { 0.0 };
        let r = self.r;
        let u = pd(m) * pc(n);
        let v = m as f64 * (1.0 - r) * pd_m1 * pc(n)
            - 2.0 * self.alpha_sq * r * (1.0 - r) * pd_m1 * pc_n1
            + n as f64 * r * pd(m) * pc_n1;
        let w = self.coupling * (pd_m1 * pc(n) - pd(m) * pc_n1);
        StationFactors { u, v, w }
    }
}

/// Station factors for an ideal detector.
pub fn station_factors(s: &Setting, e: EventPattern) -> StationFactors {
    let kmax = e.n.max(e.m) as usize;
    StationTables::new(s, kmax).at(e.n as usize, e.m as usize)
}

/// Station factors seen through detectors of efficiency `eta`, using that
/// equal losses on both outputs can be moved in front of the beamsplitter:
/// the oscillator stays coherent with amplitude `sqrt(eta) alpha` and the
/// signal photon survives with probability `eta`. Agrees with
/// [`thinned_station_factors`] without any truncation.
pub fn lossy_station_factors(s: &Setting, e: EventPattern, eta: f64) -> Result<StationFactors> {
    check_eta(eta)?;
    let damped = Setting::new(s.alpha * eta.sqrt(), s.phi, s.r);
    let f = station_factors(&damped, e);
    Ok(StationFactors {
        u: f.u,
        v: eta * f.v + (1.0 - eta) * f.u,
        w: eta.sqrt() * f.w,
    })
}

/// Station factors seen through detectors of efficiency `eta`: every factor is
/// binomially thinned over the photons the detectors miss. The sum stops once
/// the Poisson tail of the oscillator photons bounds the remainder by
/// `tail_tol`.
pub fn thinned_station_factors(
    s: &Setting,
    e: EventPattern,
    eta: f64,
    tail_tol: f64,
) -> Result<StationFactors> {
    check_eta(eta)?;
    if eta == 1.0 {
        return Ok(station_factors(s, e));
    }
    let a2 = s.intensity();
    let observed = e.total() as usize;
    // photons at a station: Poisson(alpha^2) from the oscillator plus at most
    // one; stop adding missed photons once P(N >= observed + extra) < tail_tol
    let cap = observed + SUMMATION_CAP as usize;
    let pmf = poisson_table(a2, cap + 1);
    let mut below: f64 = pmf[..observed].iter().sum();
    let mut extra = 0usize;
    while poisson_upper_tail_fast(&pmf, below, observed + extra) >= tail_tol {
        below += pmf[observed + extra];
        extra += 1;
        if extra > SUMMATION_CAP as usize {
            return Err(Error::SummationCap {
                tail_tol,
                cap: SUMMATION_CAP as usize,
            });
        }
    }
    let tables = StationTables::new(s, observed + extra);
    let lost = 1.0 - eta;
    let weights = |k: u32| -> Vec<f64> {
        let base = eta.powi(k as i32);
        (0..=extra as u32)
            .map(|d| binomial(k + d, k) * base * lost.powi(d as i32))
            .collect()
    };
    let (wn, wm) = (weights(e.n), weights(e.m));
    let mut acc = StationFactors::default();
    for dn in 0..=extra {
        for dm in 0..=(extra - dn) {
            let f = tables.at(e.n as usize + dn, e.m as usize + dm);
            acc.axpy(wn[dn] * wm[dm], &f);
        }
    }
    Ok(acc)
}

/// `P(N >= k)` from a pmf table and the cdf below `k`; falls back to upward
/// summation where the complement would lose precision.
fn poisson_upper_tail_fast(pmf: &[f64], below: f64, k: usize) -> f64 {
    let tail = 1.0 - below;
    if tail > 1e-6 {
        return tail;
    }
    pmf[k..].iter().sum()
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("efficiency must lie in (0,1], got {eta}")));
    }
    Ok(())
}

/// A station's factors together with its oscillator phase.
#[derive(Debug, Clone, Copy)]
pub struct Station {
    pub factors: StationFactors,
    pub phi: f64,
}

/// Joint probability assembled from two stations; `None` for families without a
/// closed form.
pub fn joint_from_stations(spec: &InputSpec, a: &Station, b: &Station) -> Option<f64> {
    let (f1, f2) = (&a.factors, &b.factors);
    match *spec {
        InputSpec::Vac1Photon { p } => {
            let x = (2.0 * p * (1.0 - p)).sqrt();
            Some(
                (1.0 - p) * f1.u * f2.u + 0.5 * p * (f1.u * f2.v + f1.v * f2.u)
                    - x * (f1.w * f2.u * a.phi.sin() + f1.u * f2.w * b.phi.sin())
                    + p * f1.w * f2.w * (a.phi - b.phi).cos(),
            )
        }
        InputSpec::PhotonPair { p } => Some(
            (1.0 - p) * f1.u * f2.u + p * f1.v * f2.v
                - 2.0 * (p * (1.0 - p)).sqrt() * f1.w * f2.w * (a.phi + b.phi).cos(),
        ),
        InputSpec::Unbalanced { .. } => None,
    }
}

/// Local probability of one station; `None` for families without a closed form.
pub fn local_from_station(spec: &InputSpec, a: &Station) -> Option<f64> {
    let f = &a.factors;
    match *spec {
        InputSpec::Vac1Photon { p } => Some(
            0.5 * (2.0 - p) * f.u + 0.5 * p * f.v - (2.0 * p * (1.0 - p)).sqrt() * f.w * a.phi.sin(),
        ),
        InputSpec::PhotonPair { p } => Some((1.0 - p) * f.u + p * f.v),
        InputSpec::Unbalanced { .. } => None,
    }
}

/// Joint probability that both stations see one photon in `d` and none in `c`.
pub fn joint_prob_single(p: f64, s1: &Setting, s2: &Setting) -> f64 {
    let (a1, a2) = (s1.alpha, s2.alpha);
    let (r1, r2) = (s1.r, s2.r);
    let (t1, t2) = (1.0 - r1, 1.0 - r2);
    let pref = (-a1 * a1 - a2 * a2).exp();
    let vacuum = (1.0 - p) * r1 * r2 * a1 * a1 * a2 * a2;
    let single = 0.5
        * p
        * (a1 * a1 * r1 * t2
            + t1 * a2 * a2 * r2
            + 2.0 * a1 * a2 * (r1 * r2 * t1 * t2).sqrt() * (s1.phi - s2.phi).cos());
    let cross = a1
        * a2
        * (2.0 * p * (1.0 - p) * r1 * r2).sqrt()
        * ((t1 * r2).sqrt() * a2 * s1.phi.sin() + (r1 * t2).sqrt() * a1 * s2.phi.sin());
    pref * (vacuum + single - cross)
}

/// Local probability of one photon in `d` and none in `c`. The same expression
/// serves both parties.
pub fn local_prob_single(p: f64, s: &Setting) -> f64 {
    let a = s.alpha;
    let r = s.r;
    0.5 * (-a * a).exp()
        * (p * (1.0 - r) + a * a * (2.0 - p) * r
            - 2.0 * std::f64::consts::SQRT_2 * a * (p * (1.0 - p) * r * (1.0 - r)).sqrt() * s.phi.sin())
}

/// `(P(on, off), P(off, off))` for single-photon events when the other party
/// uses the off setting.
pub fn offpair_probs(p: f64, s_on: &Setting) -> (f64, f64) {
    let a2 = s_on.intensity();
    (0.5 * p * s_on.r * a2 * (-a2).exp(), 0.0)
}

/// Joint probability of `(n1, m1)` at station 1 and `(n2, m2)` at station 2 for
/// the vacuum–one-photon input.
pub fn joint_prob_general(
    p: f64,
    s1: &Setting,
    s2: &Setting,
    e1: EventPattern,
    e2: EventPattern,
) -> f64 {
    let a = Station {
        factors: station_factors(s1, e1),
        phi: s1.phi,
    };
    let b = Station {
        factors: station_factors(s2, e2),
        phi: s2.phi,
    };
    joint_from_stations(&InputSpec::Vac1Photon { p }, &a, &b).expect("closed form exists")
}

/// Local probability of `(n, m)` for the vacuum–one-photon input.
pub fn local_prob_general(p: f64, s: &Setting, e: EventPattern) -> f64 {
    let a = Station {
        factors: station_factors(s, e),
        phi: s.phi,
    };
    local_from_station(&InputSpec::Vac1Photon { p }, &a).expect("closed form exists")
}

/// Joint probability that the on-station sees `(n, m)` while the off-station
/// sees exactly one photon.
pub fn mixed_onoff_joint(p: f64, s_on: &Setting, e: EventPattern) -> f64 {
    let a2 = s_on.intensity();
    let (n, m) = (e.n as i32, e.m as i32);
    p / (2.0 * factorial(e.m) * factorial(e.n))
        * (-a2).exp()
        * a2.powi(m + n)
        * s_on.r.powi(m)
        * (1.0 - s_on.r).powi(n)
}

/// Photon-pair input, single-photon events at both stations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairProbs {
    pub joint: f64,
    pub local1: f64,
    pub local2: f64,
}

/// Joint and local single-photon probabilities for `sqrt(1-p)|00> + sqrt(p)|11>`.
///
/// The interference term carries `cos(phi1 + phi2)`: with both oscillators
/// written as `|alpha e^{i phi}>`, the pair branch picks up `e^{-i(phi1+phi2)}`
/// relative to the vacuum branch.
pub fn pair_probs(p: f64, s1: &Setting, s2: &Setting) -> PairProbs {
    let (a1, a2) = (s1.alpha, s2.alpha);
    let (r1, r2) = (s1.r, s2.r);
    let joint = (-a1 * a1 - a2 * a2).exp()
        * ((1.0 - p) * r1 * r2 * a1 * a1 * a2 * a2 + p * (1.0 - r1) * (1.0 - r2)
            - 2.0
                * a1
                * a2
                * (p * (1.0 - p)).sqrt()
                * (r1 * (1.0 - r1)).sqrt()
                * (r2 * (1.0 - r2)).sqrt()
                * (s1.phi + s2.phi).cos());
    let local = |s: &Setting| {
        let a2 = s.intensity();
        (-a2).exp() * ((1.0 - p) * s.r * a2 + p * (1.0 - s.r))
    };
    PairProbs {
        joint,
        local1: local(s1),
        local2: local(s2),
    }
}

/// Bound on the photons a detection can miss, used to truncate inefficiency
/// sums: the oscillators contribute `Poisson(lo_intensity)` photons and the
/// source at most `source_photons`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonBudget {
    pub lo_intensity: f64,
    pub source_photons: u32,
}

impl PhotonBudget {
    fn tail(&self, at_least: u32) -> f64 {
        poisson_upper_tail(
            self.lo_intensity,
            at_least.saturating_sub(self.source_photons) as usize,
        )
    }
}

/// What [`convolve_inefficiency`] should return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Joint(EventPattern, EventPattern),
    Local(EventPattern),
}

/// Observed-count probability through detectors of efficiency `eta`, summing
/// an ideal-detector probability source over every number of missed photons.
///
/// `source` receives the ideal-detector counts per output mode: four entries
/// `(c1, d1, c2, d2)` for a joint target and two for a local one.
pub fn convolve_inefficiency<F>(
    source: F,
    eta: f64,
    target: Target,
    budget: PhotonBudget,
    tail_tol: f64,
) -> Result<f64>
where
    F: Fn(&[u32]) -> f64,
{
    check_eta(eta)?;
    let observed: Vec<u32> = match target {
        Target::Joint(a, b) => vec![a.n, a.m, b.n, b.m],
        Target::Local(a) => vec![a.n, a.m],
    };
    if eta == 1.0 {
        return Ok(source(&observed));
    }
    let total_obs: u32 = observed.iter().sum();
    let seen = eta.powi(total_obs as i32);
    let lost = 1.0 - eta;
    let mut sum = 0.0;
    let mut counts = observed.clone();
    for extra in 0..=SUMMATION_CAP {
        let mut layer = 0.0;
        for_each_composition(extra, observed.len(), &mut |parts: &[u32]| {
            let mut w = seen * lost.powi(extra as i32);
            for (k, (&o, &d)) in observed.iter().zip(parts).enumerate() {
                w *= binomial(o + d, o);
                counts[k] = o + d;
            }
            layer += w * source(&counts);
        });
        sum += layer;
        if budget.tail(total_obs + extra + 1) < tail_tol {
            return Ok(sum);
        }
    }
    Err(Error::SummationCap {
        tail_tol,
        cap: SUMMATION_CAP as usize,
    })
}

/// Calls `f` with every way of writing `total` as an ordered sum of `parts`
/// non-negative integers.
fn for_each_composition(total: u32, parts: usize, f: &mut dyn FnMut(&[u32])) {
    fn rec(rem: u32, slot: usize, buf: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        if slot + 1 == buf.len() {
            buf[slot] = rem;
            f(buf);
            return;
        }
        for k in 0..=rem {
            buf[slot] = k;
            rec(rem - k, slot + 1, buf, f);
        }
    }
    let mut buf = vec![0; parts];
    rec(total, 0, &mut buf, f);
}

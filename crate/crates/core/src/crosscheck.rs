//! Randomised comparison of every closed-form probability against the Fock
//! oracle.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closedform::{
    joint_prob_general, joint_prob_single, local_prob_general, local_prob_single, lossy_station_factors,
    mixed_onoff_joint, offpair_probs, pair_probs, thinned_station_factors, joint_from_stations,
    local_from_station, Station,
};
use crate::error::Result;
use crate::fock::{oracle_distribution, TruncationPolicy};
use crate::params::{EventPattern, InputSpec, Setting};

/// Formula families under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Single-photon joint and local probabilities.
    SinglePhoton,
    /// Arbitrary `(n, m)` joint and local probabilities.
    GeneralEvents,
    /// One party off, single-photon events.
    OffSettings,
    /// On-station `(n, m)` against an off-station single photon.
    MixedEvents,
    /// Photon-pair input.
    PhotonPair,
    /// Detector inefficiency, both summation and loss-folding routes.
    Inefficiency,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::SinglePhoton,
        Family::GeneralEvents,
        Family::OffSettings,
        Family::MixedEvents,
        Family::PhotonPair,
        Family::Inefficiency,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::SinglePhoton => "single_photon",
            Family::GeneralEvents => "general_events",
            Family::OffSettings => "off_settings",
            Family::MixedEvents => "mixed_events",
            Family::PhotonPair => "photon_pair",
            Family::Inefficiency => "inefficiency",
        }
    }
}

/// Worst disagreement seen for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: Family,
    pub comparisons: usize,
    pub max_abs_error: f64,
    /// Case index of the worst comparison.
    pub worst_case: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub cases: usize,
    pub seed: u64,
    pub families: Vec<FamilyReport>,
}

impl CrossCheckReport {
    pub fn max_abs_error(&self) -> f64 {
        self.families.iter().map(|f| f.max_abs_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs_error() <= tol
    }
}

/// One randomised configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub p: f64,
    pub s1: Setting,
    pub s2: Setting,
    pub e1: EventPattern,
    pub e2: EventPattern,
    pub eta: f64,
}

/// Largest oscillator amplitude drawn.
pub const MAX_ALPHA: f64 = 2.0;
/// Largest `n + m` drawn.
pub const MAX_PHOTONS: u32 = 3;

fn random_setting(rng: &mut ChaCha8Rng) -> Setting {
    Setting::new(MAX_ALPHA * rng.gen::<f64>(), TAU * rng.gen::<f64>(), rng.gen())
}

fn random_pattern(rng: &mut ChaCha8Rng) -> EventPattern {
    let total = rng.gen_range(0..=MAX_PHOTONS);
    let n = rng.gen_range(0..=total);
    EventPattern::new(n, total - n)
}

/// The `cases` configurations drawn from `seed`.
pub fn random_cases(cases: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|_| Case {
            p: rng.gen(),
            s1: random_setting(&mut rng),
            s2: random_setting(&mut rng),
            e1: random_pattern(&mut rng),
            e2: random_pattern(&mut rng),
            eta: 0.5 + 0.5 * rng.gen::<f64>(),
        })
        .collect()
}

/// Absolute differences `(family, |closed - oracle|)` for one case.
pub fn compare_case(case: &Case, policy: &TruncationPolicy) -> Result<Vec<(Family, f64)>> {
    let Case { p, s1, s2, e1, e2, eta } = *case;
    let dm = EventPattern::DM;
    let vac = InputSpec::Vac1Photon { p };
    let mut out = Vec::new();
    let mut push = |f: Family, a: f64, b: f64| out.push((f, (a - b).abs()));

    let o = oracle_distribution(&vac, &s1, &s2, 1.0, policy)?;
    push(Family::SinglePhoton, joint_prob_single(p, &s1, &s2), o.joint(dm, dm));
    push(Family::SinglePhoton, local_prob_single(p, &s1), o.local1(dm));
    push(Family::SinglePhoton, local_prob_single(p, &s2), o.local2(dm));
    push(Family::GeneralEvents, joint_prob_general(p, &s1, &s2, e1, e2), o.joint(e1, e2));
    push(Family::GeneralEvents, local_prob_general(p, &s1, e1), o.local1(e1));
    push(Family::GeneralEvents, local_prob_general(p, &s2, e2), o.local2(e2));

    let off = Setting::off();
    let o = oracle_distribution(&vac, &s1, &off, 1.0, policy)?;
    let (on_off, off_off) = offpair_probs(p, &s1);
    push(Family::OffSettings, on_off, o.joint(dm, dm));
    let o_offoff = oracle_distribution(&vac, &off, &off, 1.0, policy)?;
    push(Family::OffSettings, off_off, o_offoff.joint(dm, dm));
    push(Family::MixedEvents, mixed_onoff_joint(p, &s1, e1), o.joint(e1, dm));

    let pair = InputSpec::PhotonPair { p };
    let o = oracle_distribution(&pair, &s1, &s2, 1.0, policy)?;
    let pp = pair_probs(p, &s1, &s2);
    push(Family::PhotonPair, pp.joint, o.joint(dm, dm));
    push(Family::PhotonPair, pp.local1, o.local1(dm));
    push(Family::PhotonPair, pp.local2, o.local2(dm));

    let o = oracle_distribution(&vac, &s1, &s2, eta, policy)?;
    let station = |s: &Setting, e: EventPattern, summed: bool| -> Result<Station> {
        let factors = if summed {
            thinned_station_factors(s, e, eta, 1e-15)?
        } else {
            lossy_station_factors(s, e, eta)?
        };
        Ok(Station { factors, phi: s.phi })
    };
    for summed in [true, false] {
        let (a, b) = (station(&s1, e1, summed)?, station(&s2, e2, summed)?);
        let joint = joint_from_stations(&vac, &a, &b).expect("closed form");
        push(Family::Inefficiency, joint, o.joint(e1, e2));
        let local = local_from_station(&vac, &a).expect("closed form");
        push(Family::Inefficiency, local, o.local1(e1));
    }
    Ok(out)
}

/// Run `cases` random comparisons drawn from `seed`.
pub fn cross_check(cases: usize, seed: u64, policy: &TruncationPolicy) -> Result<CrossCheckReport> {
    use rayon::prelude::*;
    let drawn = random_cases(cases, seed);
    let diffs: Vec<Vec<(Family, f64)>> = drawn
        .par_iter()
        .map(|c| compare_case(c, policy))
        .collect::<Result<_>>()?;
    let families = Family::ALL
        .iter()
        .map(|&family| {
            let mut report = FamilyReport {
                family,
                comparisons: 0,
                max_abs_error: 0.0,
                worst_case: 0,
            };
            for (i, d) in diffs.iter().enumerate() {
                for &(f, err) in d.iter().filter(|(f, _)| *f == family) {
                    debug_assert_eq!(f, family);
                    report.comparisons += 1;
                    if err > report.max_abs_error || err.is_nan() {
                        report.max_abs_error = if err.is_nan() { f64::INFINITY } else { err };
                        report.worst_case = i;
                    }
                }
            }
            report
        })
        .collect();
    Ok(CrossCheckReport { cases, seed, families })
}

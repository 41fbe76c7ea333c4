//! Clauser–Horne values for the supported event schemes.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::closedform::{joint_from_stations, local_from_station, lossy_station_factors, Station};
use crate::error::{Error, Result};
use crate::fock::{oracle_distribution, OracleOutcome, TruncationPolicy};
use crate::params::{EventPattern, InputSpec, Setting};

/// Which photon counts define a "detection" at each setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventScheme {
    /// One photon in `d`, none in `c`, for every setting.
    SinglePhotonDm,
    /// One photon in `c`, none in `d`, for every setting.
    SinglePhotonCm,
    /// The same `(n, m)` for every setting.
    FixedNm { n: u32, m: u32 },
    /// `(n, m)` at on-settings and one photon at off-settings.
    MixedOnOff { n: u32, m: u32 },
}

impl EventScheme {
    pub fn event_for(&self, s: &Setting) -> EventPattern {
        match *self {
            EventScheme::SinglePhotonDm => EventPattern::DM,
            EventScheme::SinglePhotonCm => EventPattern::CM,
            EventScheme::FixedNm { n, m } => EventPattern::new(n, m),
            EventScheme::MixedOnOff { n, m } => {
                if s.is_off() {
                    EventPattern::DM
                } else {
                    EventPattern::new(n, m)
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            EventScheme::SinglePhotonDm => "single_photon_dm".into(),
            EventScheme::SinglePhotonCm => "single_photon_cm".into(),
            EventScheme::FixedNm { n, m } => format!("fixed_nm({n},{m})"),
            EventScheme::MixedOnOff { n, m } => format!("mixed_onoff({n},{m})"),
        }
    }
}

/// The four measurement settings: `a`/`a_prime` for the first party,
/// `b`/`b_prime` for the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub a: Setting,
    pub a_prime: Setting,
    pub b: Setting,
    pub b_prime: Setting,
}

impl Settings {
    pub fn all_off() -> Self {
        Settings {
            a: Setting::off(),
            a_prime: Setting::off(),
            b: Setting::off(),
            b_prime: Setting::off(),
        }
    }

    /// Same on-setting at both parties for the unprimed choice, off for primed.
    pub fn onoff_primed_off(on: Setting) -> Self {
        Settings {
            a: on,
            b: on,
            ..Settings::all_off()
        }
    }

    /// Off for the unprimed choice, the same on-setting for primed.
    pub fn onoff_unprimed_off(on: Setting) -> Self {
        Settings {
            a_prime: on,
            b_prime: on,
            ..Settings::all_off()
        }
    }

    pub fn as_array(&self) -> [Setting; 4] {
        [self.a, self.a_prime, self.b, self.b_prime]
    }

    pub fn from_array(s: [Setting; 4]) -> Self {
        Settings {
            a: s[0],
            a_prime: s[1],
            b: s[2],
            b_prime: s[3],
        }
    }

    /// Exchange the parties.
    pub fn swapped_parties(&self) -> Self {
        Settings {
            a: self.b,
            a_prime: self.b_prime,
            b: self.a,
            b_prime: self.a_prime,
        }
    }

    /// Map every setting `R -> 1 - R`, `phi -> phi + pi`; turns a `c`-detection
    /// problem into the equivalent `d`-detection one.
    pub fn event_swapped(&self) -> Self {
        let f = |s: Setting| Setting::new(s.alpha, s.phi + PI, 1.0 - s.r);
        Settings::from_array(self.as_array().map(f))
    }

    pub fn validate(&self) -> Result<()> {
        self.as_array().iter().try_for_each(|s| s.validate())
    }
}

/// A complete CH configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChProblem {
    pub input: InputSpec,
    pub settings: Settings,
    pub scheme: EventScheme,
    pub eta: f64,
}

impl ChProblem {
    pub fn new(input: InputSpec, settings: Settings, scheme: EventScheme) -> Self {
        ChProblem {
            input,
            settings,
            scheme,
            eta: 1.0,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        ChProblem { eta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.input.validate()?;
        self.settings.validate()?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::invalid(format!("efficiency must lie in (0,1], got {}", self.eta)));
        }
        if let EventScheme::MixedOnOff { .. } = self.scheme {
            let s = &self.settings;
            if !(s.a.is_off() || s.a_prime.is_off()) || !(s.b.is_off() || s.b_prime.is_off()) {
                return Err(Error::invalid(
                    "mixed on/off events need an off setting at each party",
                ));
            }
        }
        Ok(())
    }
}

/// Which computation produced a CH value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityPath {
    ClosedForm,
    Oracle,
}

/// The six probabilities of the CH expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChComponents {
    pub p_ab: f64,
    pub p_ab_prime: f64,
    pub p_a_prime_b: f64,
    pub p_a_prime_b_prime: f64,
    pub p_a: f64,
    pub p_b: f64,
}

impl ChComponents {
    pub fn value(&self) -> f64 {
        self.p_ab + self.p_ab_prime + self.p_a_prime_b - self.p_a_prime_b_prime - self.p_a - self.p_b
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.p_ab,
            self.p_ab_prime,
            self.p_a_prime_b,
            self.p_a_prime_b_prime,
            self.p_a,
            self.p_b,
        ]
    }
}

/// `P(A,B) + P(A,B') + P(A',B) - P(A',B') - P(A) - P(B)` with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChValue {
    pub value: f64,
    pub components: ChComponents,
    pub path: ProbabilityPath,
}

/// Evaluate the CH expression: closed forms for the vacuum–one-photon and
/// photon-pair inputs (losses folded into each station when `eta < 1`),
/// brute force for the unbalanced family.
pub fn ch_value(problem: &ChProblem) -> Result<ChValue> {
    problem.validate()?;
    ch_value_unchecked(problem)
}

/// [`ch_value`] without input validation; for optimizer inner loops whose
/// parameterisation keeps every setting in range.
pub(crate) fn ch_value_unchecked(problem: &ChProblem) -> Result<ChValue> {
    let s = &problem.settings;
    let station = |x: &Setting| -> Result<Station> {
        Ok(Station {
            factors: lossy_station_factors(x, problem.scheme.event_for(x), problem.eta)?,
            phi: x.phi,
        })
    };
    let components = match problem.input {
        InputSpec::Vac1Photon { .. } | InputSpec::PhotonPair { .. } => {
            let (a, ap, b, bp) = (station(&s.a)?, station(&s.a_prime)?, station(&s.b)?, station(&s.b_prime)?);
            let j = |x: &Station, y: &Station| joint_from_stations(&problem.input, x, y).expect("closed form");
            let l = |x: &Station| local_from_station(&problem.input, x).expect("closed form");
            ChComponents {
                p_ab: j(&a, &b),
                p_ab_prime: j(&a, &bp),
                p_a_prime_b: j(&ap, &b),
                p_a_prime_b_prime: j(&ap, &bp),
                p_a: l(&a),
                p_b: l(&b),
            }
        }
        InputSpec::Unbalanced { .. } => {
            let policy = TruncationPolicy::default();
            let run = |x: &Setting, y: &Setting| -> Result<OracleOutcome> {
                oracle_distribution(&problem.input, x, y, problem.eta, &policy)
            };
            let ev = |x: &Setting| problem.scheme.event_for(x);
            let ab = run(&s.a, &s.b)?;
            ChComponents {
                p_ab: ab.joint(ev(&s.a), ev(&s.b)),
                p_ab_prime: run(&s.a, &s.b_prime)?.joint(ev(&s.a), ev(&s.b_prime)),
                p_a_prime_b: run(&s.a_prime, &s.b)?.joint(ev(&s.a_prime), ev(&s.b)),
                p_a_prime_b_prime: run(&s.a_prime, &s.b_prime)?.joint(ev(&s.a_prime), ev(&s.b_prime)),
                p_a: ab.local1(ev(&s.a)),
                p_b: ab.local2(ev(&s.b)),
            }
        }
    };
    let path = match problem.input {
        InputSpec::Unbalanced { .. } => ProbabilityPath::Oracle,
        _ => ProbabilityPath::ClosedForm,
    };
    Ok(ChValue {
        value: components.value(),
        components,
        path,
    })
}

/// Oscillator intensity of the on-settings in the Hardy construction.
pub fn hardy_intensity(p: f64) -> f64 {
    p / (2.0 * (1.0 - p))
}

/// Hardy's settings, translated to the symmetric input state: balanced
/// splitters with `alpha^2 = p / (2(1-p))` and `phi = pi/2` for the unprimed
/// choice, off for the primed one.
pub fn hardy_settings(p: f64) -> Result<Settings> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("Hardy settings need 0 < p < 1, got {p}")));
    }
    Ok(Settings::onoff_primed_off(Setting::from_intensity(
        hardy_intensity(p),
        FRAC_PI_2,
        0.5,
    )))
}

/// The three probabilities Hardy's argument requires to vanish:
/// `P(F1=1, U2=0)`, `P(U1=0, F2=1)` and `P(U1=1, U2=1)`.
pub fn hardy_vanishing_probs(p: f64) -> Result<[f64; 3]> {
    let settings = hardy_settings(p)?;
    let ch = ch_value(&ChProblem::new(
        InputSpec::Vac1Photon { p },
        settings,
        EventScheme::SinglePhotonDm,
    ))?;
    let c = ch.components;
    Ok([c.p_a - c.p_ab_prime, c.p_b - c.p_a_prime_b, c.p_a_prime_b_prime])
}

/// CH value reached by Hardy's settings.
pub fn hardy_ch_closed(p: f64) -> f64 {
    (-p / (1.0 - p)).exp() * p * p / (16.0 * (1.0 - p))
}

/// CH at `p = 1` with the unprimed settings off and identical primed settings
/// at `phi = pi/2`.
pub fn ch_p1_closed(alpha: f64, r: f64) -> f64 {
    let a2 = alpha * alpha;
    -1.0 + ((-a2).exp() * a2 - 2.0 * (-2.0 * a2).exp() * a2 * (1.0 - r)) * r
}

/// `|CH + 1/2|`; the local bound is `1/2`.
pub fn absolute_form(ch: f64) -> f64 {
    (ch + 0.5).abs()
}

/// CH divided by the single-photon weight `p`.
pub fn relative_ch(ch_max: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::invalid("relative CH needs p > 0"));
    }
    Ok(ch_max / p)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Root of `e^{x} = 2(1 - 2x)` on `(0, 1/2)`. Along `R = alpha^2` it is where
/// `ch_p1_closed` is stationary, i.e. the optimal intensity at `p = 1`.
pub fn p1_stationary_intensity() -> f64 {
    bisect(|x| x.exp() - 2.0 * (1.0 - 2.0 * x), 0.0, 0.5)
}

/// Root of `e^{x} = 2(1 - x)` on `(0, 1)`: the intensity where the `p = 1`
/// violation along `R = alpha^2` closes.
pub fn p1_violation_edge_intensity() -> f64 {
    bisect(|x| x.exp() - 2.0 * (1.0 - x), 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn vac(p: f64) -> InputSpec {
        InputSpec::Vac1Photon { p }
    }

    #[test]
    fn all_off_gives_minus_p() {
        for p in [0.0, 0.3, 1.0] {
            let ch = ch_value(&ChProblem::new(vac(p), Settings::all_off(), EventScheme::SinglePhotonDm)).unwrap();
            assert_abs_diff_eq!(ch.value, -p, epsilon = 1e-15);
            assert_eq!(ch.path, ProbabilityPath::ClosedForm);
        }
    }

    #[test]
    fn p1_optimum_value() {
        let on = Setting::from_intensity(0.1959, FRAC_PI_2, 0.1959);
        let ch = ch_value(&ChProblem::new(vac(1.0), Settings::onoff_unprimed_off(on), EventScheme::SinglePhotonDm))
            .unwrap();
        assert_abs_diff_eq!(ch.value, -1.01016, epsilon = 5e-6);
        assert_abs_diff_eq!(ch.value, ch_p1_closed(0.1959f64.sqrt(), 0.1959), epsilon = 1e-15);
    }

    #[test]
    fn hardy_value() {
        let s = hardy_settings(0.5).unwrap();
        assert_abs_diff_eq!(s.a.intensity(), 0.5, epsilon = 1e-15);
        assert_eq!(s.a.r, 0.5);
        assert_eq!(s.a.phi, FRAC_PI_2);
        assert!(s.a_prime.is_off() && s.b_prime.is_off());
        let ch = ch_value(&ChProblem::new(vac(0.5), s, EventScheme::SinglePhotonDm)).unwrap();
        assert_abs_diff_eq!(ch.value, (-1.0f64).exp() / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hardy_settings(1.0 / 3.0).unwrap().a.intensity(), 0.25, epsilon = 1e-15);
        assert!(hardy_settings(0.0).is_err());
        assert!(hardy_settings(1.0).is_err());
    }

    #[test]
    fn hardy_vanishings() {
        for p in [0.2, 0.5, 0.8] {
            for v in hardy_vanishing_probs(p).unwrap() {
                assert!(v.abs() < 1e-12, "p={p} {v}");
            }
        }
    }

    #[test]
    fn hardy_closed_examples() {
        assert_abs_diff_eq!(hardy_ch_closed(1e-4), 1e-8 / 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hardy_ch_closed(0.5), (-1.0f64).exp() / 32.0, epsilon = 1e-17);
        assert_abs_diff_eq!(hardy_ch_closed(0.5), 0.011_496_233, epsilon = 1e-9);
        assert_abs_diff_eq!(hardy_ch_closed(0.9), (-9.0f64).exp() * 0.81 / 1.6, epsilon = 1e-18);
        assert_abs_diff_eq!(hardy_ch_closed(0.9), 6.25e-5, epsilon = 1e-7);
    }

    #[test]
    fn p1_closed_examples() {
        assert_eq!(ch_p1_closed(0.7, 0.0), -1.0);
        assert_abs_diff_eq!(ch_p1_closed(0.1959f64.sqrt(), 0.1959), -1.01016, epsilon = 5e-6);
        let x = p1_stationary_intensity();
        assert_abs_diff_eq!(ch_p1_closed(x.sqrt(), x), -1.010_161_806, epsilon = 1e-9);
        assert_abs_diff_eq!(ch_p1_closed(0.4f64.sqrt(), 0.4), -0.97902, epsilon = 1e-5);
    }

    #[test]
    fn forms() {
        assert_eq!(absolute_form(0.0), 0.5);
        assert_eq!(absolute_form(-1.0), 0.5);
        assert_abs_diff_eq!(absolute_form(-1.0101618), 0.5101618, epsilon = 1e-12);
        assert_eq!(relative_ch(0.0, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(relative_ch(hardy_ch_closed(0.5), 0.5).unwrap(), (-1.0f64).exp() / 16.0, epsilon = 1e-16);
        assert!(relative_ch(0.1, 0.0).is_err());
    }

    #[test]
    fn roots() {
        let x = p1_stationary_intensity();
        assert_abs_diff_eq!(x, 0.1959, epsilon = 5e-4);
        assert_abs_diff_eq!(x.exp(), 2.0 * (1.0 - 2.0 * x), epsilon = 1e-12);
        let y = p1_violation_edge_intensity();
        assert_abs_diff_eq!(y, 0.314_923, epsilon = 1e-6);
        // violation closes at the edge root along R = alpha^2
        assert_abs_diff_eq!(ch_p1_closed(y.sqrt(), y), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_requires_off() {
        let on = Setting::new(0.5, 1.0, 0.3);
        let s = Settings { a: on, a_prime: on, b: on, b_prime: Setting::off() };
        let prob = ChProblem::new(vac(0.5), s, EventScheme::MixedOnOff { n: 0, m: 2 });
        assert!(ch_value(&prob).is_err());
        let ok = ChProblem::new(vac(0.5), Settings::onoff_primed_off(on), EventScheme::MixedOnOff { n: 0, m: 2 });
        assert!(ch_value(&ok).is_ok());
    }

    #[test]
    fn unbalanced_balanced_matches_vac1photon() {
        let s = Settings {
            a: Setting::new(0.6, 1.2, 0.3),
            a_prime: Setting::new(0.2, 0.4, 0.7),
            b: Setting::new(0.8, 2.0, 0.5),
            b_prime: Setting::off(),
        };
        let p = 0.6;
        let x = ch_value(&ChProblem::new(vac(p), s, EventScheme::SinglePhotonDm)).unwrap();
        let y = ch_value(&ChProblem::new(
            InputSpec::Unbalanced { p, xi: std::f64::consts::FRAC_PI_4 },
            s,
            EventScheme::SinglePhotonDm,
        ))
        .unwrap();
        assert_eq!(y.path, ProbabilityPath::Oracle);
        assert_abs_diff_eq!(x.value, y.value, epsilon = 1e-11);
    }

    #[test]
    fn event_swap_reproduces_values() {
        let s = Settings {
            a: Setting::new(0.6, 1.2, 0.3),
            a_prime: Setting::new(0.2, 0.4, 0.7),
            b: Setting::new(0.8, 2.0, 0.5),
            b_prime: Setting::new(0.5, 5.0, 0.1),
        };
        for input in [vac(0.7), InputSpec::PhotonPair { p: 0.4 }] {
            let dm = ch_value(&ChProblem::new(input, s, EventScheme::SinglePhotonDm)).unwrap();
            let cm = ch_value(&ChProblem::new(input, s.event_swapped(), EventScheme::SinglePhotonCm)).unwrap();
            assert_abs_diff_eq!(dm.value, cm.value, epsilon = 1e-14);
        }
    }

    #[test]
    fn party_swap_invariance() {
        let s = Settings {
            a: Setting::new(0.6, 1.2, 0.3),
            a_prime: Setting::new(0.2, 0.4, 0.7),
            b: Setting::new(0.8, 2.0, 0.5),
            b_prime: Setting::new(0.5, 5.0, 0.1),
        };
        for input in [vac(0.7), InputSpec::PhotonPair { p: 0.4 }] {
            for eta in [1.0, 0.9] {
                let x = ch_value(&ChProblem::new(input, s, EventScheme::SinglePhotonDm).with_eta(eta)).unwrap();
                let y = ch_value(&ChProblem::new(input, s.swapped_parties(), EventScheme::SinglePhotonDm).with_eta(eta))
                    .unwrap();
                assert_abs_diff_eq!(x.value, y.value, epsilon = 1e-14);
            }
        }
    }
}

//! Measurement settings, detection events and input-state descriptors shared by
//! every probability route.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One party's measurement choice.
///
/// `alpha` is the local-oscillator amplitude (its square is the mean photon
/// number), `phi` the oscillator phase and `r` the reflectivity of the local
/// beamsplitter, `r = sin^2(chi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub alpha: f64,
    pub phi: f64,
    pub r: f64,
}

impl Setting {
    pub fn new(alpha: f64, phi: f64, r: f64) -> Self {
        Setting { alpha, phi, r }
    }

    /// Beamsplitter removed and oscillator switched off.
    pub const fn off() -> Self {
        Setting {
            alpha: 0.0,
            phi: 0.0,
            r: 0.0,
        }
    }

    /// Build from the oscillator intensity `alpha^2` instead of the amplitude.
    pub fn from_intensity(alpha_sq: f64, phi: f64, r: f64) -> Self {
        Setting::new(alpha_sq.max(0.0).sqrt(), phi, r)
    }

    pub fn is_off(&self) -> bool {
        self.alpha == 0.0 && self.r == 0.0
    }

    pub fn intensity(&self) -> f64 {
        self.alpha * self.alpha
    }

    pub fn t(&self) -> f64 {
        1.0 - self.r
    }

    /// Mixing angle with `cos(chi) = sqrt(T)`.
    pub fn chi(&self) -> f64 {
        self.r.clamp(0.0, 1.0).sqrt().asin()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !self.phi.is_finite() {
            return Err(Error::invalid("phi must be finite"));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::invalid(format!("R must lie in [0,1], got {}", self.r)));
        }
        Ok(())
    }

    /// Same setting with `phi` wrapped into `[0, 2pi)`.
    pub fn wrapped(&self) -> Self {
        let mut phi = self.phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Setting { phi, ..*self }
    }
}

/// Photon-count outcome at one station: `n` photons in output `c`, `m` in `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventPattern {
    pub n: u32,
    pub m: u32,
}

impl EventPattern {
    pub const fn new(n: u32, m: u32) -> Self {
        EventPattern { n, m }
    }

    /// One photon in `d`, none in `c`.
    pub const DM: EventPattern = EventPattern::new(0, 1);
    /// One photon in `c`, none in `d`.
    pub const CM: EventPattern = EventPattern::new(1, 0);

    pub fn total(&self) -> u32 {
        self.n + self.m
    }
}

/// Two-mode source state feeding the interferometer (modes `b1`, `b2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum InputSpec {
    /// `sqrt(1-p)|00> + sqrt(p/2)(|01> + |10>)`.
    Vac1Photon { p: f64 },
    /// `sqrt(1-p)|00> + sqrt(p)(cos xi |01> + sin xi |10>)`.
    Unbalanced { p: f64, xi: f64 },
    /// `sqrt(1-p)|00> + sqrt(p)|11>`.
    PhotonPair { p: f64 },
}

impl InputSpec {
    pub fn p(&self) -> f64 {
        match *self {
            InputSpec::Vac1Photon { p } | InputSpec::PhotonPair { p } => p,
            InputSpec::Unbalanced { p, .. } => p,
        }
    }

    pub fn with_p(&self, p: f64) -> Self {
        match *self {
            InputSpec::Vac1Photon { .. } => InputSpec::Vac1Photon { p },
            InputSpec::PhotonPair { .. } => InputSpec::PhotonPair { p },
            InputSpec::Unbalanced { xi, .. } => InputSpec::Unbalanced { p, xi },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputSpec::Vac1Photon { .. } => "vac1photon",
            InputSpec::Unbalanced { .. } => "unbalanced",
            InputSpec::PhotonPair { .. } => "photonpair",
        }
    }

    /// Whether swapping the two parties maps the state onto itself.
    pub fn is_party_symmetric(&self) -> bool {
        match *self {
            InputSpec::Vac1Photon { .. } | InputSpec::PhotonPair { .. } => true,
            InputSpec::Unbalanced { xi, .. } => (xi - FRAC_PI_4).abs() < 1e-15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("p must lie in [0,1], got {p}")));
        }
        if let InputSpec::Unbalanced { xi, .. } = *self {
            if !(0.0..=FRAC_PI_2).contains(&xi) {
                return Err(Error::invalid(format!("xi must lie in [0, pi/2], got {xi}")));
            }
        }
        Ok(())
    }

    /// Amplitudes on `|00>, |01>, |10>, |11>` of modes `(b1, b2)`; `|01>` has the
    /// photon in `b2`.
    pub fn amplitudes(&self) -> [f64; 4] {
        match *self {
            InputSpec::Vac1Photon { p } => {
                let s = (p / 2.0).sqrt();
                [(1.0 - p).sqrt(), s, s, 0.0]
            }
            InputSpec::Unbalanced { p, xi } => {
                let s = p.sqrt();
                [(1.0 - p).sqrt(), s * xi.cos(), s * xi.sin(), 0.0]
            }
            InputSpec::PhotonPair { p } => [(1.0 - p).sqrt(), 0.0, 0.0, p.sqrt()],
        }
    }
}

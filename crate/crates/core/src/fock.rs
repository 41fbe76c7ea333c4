//! Brute-force multimode Fock-space simulation.
//!
//! States are dense row-major amplitude arrays over occupation tuples with a
//! per-mode photon-number cutoff. This is the reference path every closed-form
//! probability is checked against, and the only path for input families
//! without a closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EventPattern, InputSpec, Setting};
use crate::special::{ln_factorial_table, poisson_upper_tail};

/// How coherent states are truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Probability mass a constructor may drop.
    pub tail_tol: f64,
    /// Lower bound on any per-mode cutoff.
    pub min_cutoff: usize,
    /// Cutoffs above this are rejected as intractable.
    pub hard_cap: usize,
    /// Added on top of the rule; used for refinement checks.
    pub extra: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            tail_tol: 1e-12,
            min_cutoff: 12,
            hard_cap: 120,
            extra: 0,
        }
    }
}

impl TruncationPolicy {
    pub fn refined(&self, extra: usize) -> Self {
        TruncationPolicy {
            extra: self.extra + extra,
            ..*self
        }
    }

    /// Cutoff for a coherent state of mean photon number `alpha_sq` living in a
    /// state with `mode_count` modes.
    ///
    /// Starts from `max(min_cutoff, ceil(a + 10 sqrt(a + 1)))` and grows until the
    /// Poisson tail beyond the cutoff is below `tail_tol / mode_count`.
    pub fn cutoff_for(&self, alpha_sq: f64, mode_count: usize) -> Result<usize> {
        if !(alpha_sq.is_finite() && alpha_sq >= 0.0) {
            return Err(Error::invalid(format!("alpha^2 must be >= 0, got {alpha_sq}")));
        }
        let rule = (alpha_sq + 10.0 * (alpha_sq + 1.0).sqrt()).ceil();
        if rule > self.hard_cap as f64 {
            return Err(Error::TruncationCap {
                alpha_sq,
                required: rule as usize,
                cap: self.hard_cap,
            });
        }
        let mut n = self.min_cutoff.max(rule as usize);
        let budget = self.tail_tol / mode_count.max(1) as f64;
        while poisson_upper_tail(alpha_sq, n + 1) >= budget {
            n += 1;
            if n > self.hard_cap {
                break;
            }
        }
        n += self.extra;
        if n > self.hard_cap {
            return Err(Error::TruncationCap {
                alpha_sq,
                required: n,
                cap: self.hard_cap,
            });
        }
        Ok(n)
    }
}

/// Photon loss modelled as a beamsplitter of transmissivity `eta` with a
/// vacuum ancilla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossChannel {
    eta: f64,
}

impl LossChannel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("transmissivity must lie in [0,1], got {eta}")));
        }
        Ok(LossChannel { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

fn strides(cutoffs: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cutoffs.len()];
    for k in (0..cutoffs.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * (cutoffs[k + 1] + 1);
    }
    s
}

fn dense_len(cutoffs: &[usize]) -> usize {
    cutoffs.iter().map(|c| c + 1).product()
}

fn flat_index(cutoffs: &[usize], occ: &[usize]) -> Option<usize> {
    if occ.len() != cutoffs.len() {
        return None;
    }
    let mut idx = 0;
    for (&o, &c) in occ.iter().zip(cutoffs) {
        if o > c {
            return None;
        }
        idx = idx * (c + 1) + o;
    }
    Some(idx)
}

/// Truncated multimode state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    cutoffs: Vec<usize>,
    amps: Vec<Complex64>,
}

impl FockVector {
    pub fn vacuum(cutoffs: Vec<usize>) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dense_len(&cutoffs)];
        amps[0] = Complex64::new(1.0, 0.0);
        FockVector { cutoffs, amps }
    }

    pub fn from_amplitudes(cutoffs: Vec<usize>, amps: Vec<Complex64>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::invalid("a state needs at least one mode"));
        }
        if amps.len() != dense_len(&cutoffs) {
            return Err(Error::invalid(format!(
                "expected {} amplitudes, got {}",
                dense_len(&cutoffs),
                amps.len()
            )));
        }
        Ok(FockVector { cutoffs, amps })
    }

    /// Single-mode Fock state `|n>`.
    pub fn number_state(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(Error::invalid("photon number above cutoff"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); cutoff + 1];
        amps[n] = Complex64::new(1.0, 0.0);
        Ok(FockVector {
            cutoffs: vec![cutoff],
            amps,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Amplitude at an occupation tuple; zero outside the cutoff.
    pub fn amplitude(&self, occ: &[usize]) -> Complex64 {
        flat_index(&self.cutoffs, occ)
            .map(|i| self.amps[i])
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|<pattern|state>|^2`.
    pub fn detection_prob(&self, pattern: &[usize]) -> f64 {
        self.amplitude(pattern).norm_sqr()
    }

    pub fn tensor(&self, other: &FockVector) -> FockVector {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs.extend_from_slice(&other.cutoffs);
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        FockVector { cutoffs, amps }
    }

    /// Photon-number distribution over all modes.
    pub fn distribution(&self) -> PhotonDistribution {
        PhotonDistribution {
            cutoffs: self.cutoffs.clone(),
            probs: self.amps.iter().map(|a| a.norm_sqr()).collect(),
        }
    }

    /// Apply a linear two-mode transformation acting on creation operators:
    /// `x^dag -> m[0][0] x^dag + m[1][0] y^dag` and
    /// `y^dag -> m[0][1] x^dag + m[1][1] y^dag`.
    ///
    /// Both modes get cutoff `cut_x + cut_y` afterwards, so the result is exact
    /// for the represented amplitudes and photon number in the pair is
    /// conserved block by block.
    pub fn apply_two_mode(&self, modes: (usize, usize), m: [[Complex64; 2]; 2]) -> Result<FockVector> {
        let (i, j) = modes;
        let k = self.mode_count();
        if i == j || i >= k || j >= k {
            return Err(Error::invalid(format!(
                "bad mode pair ({i}, {j}) for a {k}-mode state"
            )));
        }
        let ci = self.cutoffs[i];
        let cj = self.cutoffs[j];
        let total = ci + cj;
        let mut out_cut = self.cutoffs.clone();
        out_cut[i] = total;
        out_cut[j] = total;
        let in_strides = strides(&self.cutoffs);
        let out_strides = strides(&out_cut);
        let lf = ln_factorial_table(total);

        let pow_table = |z: Complex64| -> Vec<Complex64> {
            let mut v = Vec::with_capacity(total + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=total {
                v.push(acc);
                acc *= z;
            }
            v
        };
        let p00 = pow_table(m[0][0]);
        let p10 = pow_table(m[1][0]);
        let p01 = pow_table(m[0][1]);
        let p11 = pow_table(m[1][1]);

        // transfer[(a, b)] = list of (x occupation, coefficient); y = a + b - x
        let mut transfer: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity((ci + 1) * (cj + 1));
        for a in 0..=ci {
            for b in 0..=cj {
                let n = a + b;
                let mut acc = vec![Complex64::new(0.0, 0.0); n + 1];
                for ka in 0..=a {
                    let ln_ca = lf[a] - lf[ka] - lf[a - ka];
                    let za = p00[ka] * p10[a - ka];
                    for kb in 0..=b {
                        let ln_cb = lf[b] - lf[kb] - lf[b - kb];
                        let x = ka + kb;
                        let y = n - x;
                        let mag = (ln_ca + ln_cb + 0.5 * (lf[x] + lf[y] - lf[a] - lf[b])).exp();
                        acc[x] += za * p01[kb] * p11[b - kb] * mag;
                    }
                }
                transfer.push(
                    acc.into_iter()
                        .enumerate()
                        .filter(|(_, c)| c.norm_sqr() > 0.0)
                        .collect(),
                );
            }
        }

        let mut out = vec![Complex64::new(0.0, 0.0); dense_len(&out_cut)];
        let mut occ = vec![0usize; k];
        for (flat, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut rem = flat;
            for q in 0..k {
                occ[q] = rem / in_strides[q];
                rem %= in_strides[q];
            }
            let base: usize = (0..k)
                .filter(|&q| q != i && q != j)
                .map(|q| occ[q] * out_strides[q])
                .sum();
            let (a, b) = (occ[i], occ[j]);
            let n = a + b;
            for &(x, c) in &transfer[a * (cj + 1) + b] {
                out[base + x * out_strides[i] + (n - x) * out_strides[j]] += amp * c;
            }
        }
        Ok(FockVector {
            cutoffs: out_cut,
            amps: out,
        })
    }

    /// Local beamsplitter of mixing angle `chi` (`cos chi = sqrt(T)`) taking
    /// `(a, b)` to `(c, d)` with `c = cos(chi) a + i sin(chi) b` and
    /// `d = i sin(chi) a + cos(chi) b`; `c` replaces mode `modes.0`.
    pub fn apply_beamsplitter(&self, modes: (usize, usize), chi: f64) -> Result<FockVector> {
        let (s, c) = chi.sin_cos();
        let t = Complex64::new(c, 0.0);
        let r = Complex64::new(0.0, s);
        self.apply_two_mode(modes, [[t, r], [r, t]])
    }

    /// Loss on one mode via an explicit vacuum ancilla and a beamsplitter of
    /// transmissivity `eta`, then tracing out the ancilla. The ancilla doubles
    /// the lossy mode's cutoff, so keep this to small states; larger states
    /// should go through [`PhotonDistribution::thin`].
    pub fn apply_loss(&self, mode: usize, channel: LossChannel) -> Result<PhotonDistribution> {
        if mode >= self.mode_count() {
            return Err(Error::invalid(format!("mode {mode} out of range")));
        }
        let ancilla = FockVector::vacuum(vec![self.cutoffs[mode]]);
        let joined = self.tensor(&ancilla);
        let anc = joined.mode_count() - 1;
        let t = channel.eta().sqrt();
        let l = (1.0 - channel.eta()).sqrt();
        let m = [
            [Complex64::new(t, 0.0), Complex64::new(l, 0.0)],
            [Complex64::new(-l, 0.0), Complex64::new(t, 0.0)],
        ];
        let mixed = joined.apply_two_mode((mode, anc), m)?;
        let keep: Vec<usize> = (0..anc).collect();
        Ok(mixed.distribution().marginal(&keep))
    }
}

/// Coherent state `|alpha e^{i phi}>` truncated per `policy`.
pub fn coherent_state(alpha: f64, phi: f64, policy: &TruncationPolicy) -> Result<FockVector> {
    coherent_state_in(alpha, phi, policy, 1)
}

fn coherent_state_in(
    alpha: f64,
    phi: f64,
    policy: &TruncationPolicy,
    mode_count: usize,
) -> Result<FockVector> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let cutoff = policy.cutoff_for(alpha * alpha, mode_count)?;
    let beta = Complex64::from_polar(alpha, phi);
    let mut amps = Vec::with_capacity(cutoff + 1);
    let mut cur = Complex64::new((-alpha * alpha / 2.0).exp(), 0.0);
    amps.push(cur);
    for n in 1..=cutoff {
        cur = cur * beta / (n as f64).sqrt();
        amps.push(cur);
    }
    Ok(FockVector {
        cutoffs: vec![cutoff],
        amps,
    })
}

/// Two-mode source state on `(b1, b2)` with real non-negative amplitudes.
pub fn build_input(spec: &InputSpec) -> Result<FockVector> {
    spec.validate()?;
    let a = spec.amplitudes();
    let amps = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FockVector::from_amplitudes(vec![1, 1], amps)
}

/// Photon-number probabilities over occupation tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    cutoffs: Vec<usize>,
    probs: Vec<f64>,
}

impl PhotonDistribution {
    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn prob(&self, occ: &[usize]) -> f64 {
        flat_index(&self.cutoffs, occ)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Sum out every mode not listed in `keep`; kept modes stay in the listed order.
    pub fn marginal(&self, keep: &[usize]) -> PhotonDistribution {
        let cut: Vec<usize> = keep.iter().map(|&q| self.cutoffs[q]).collect();
        let out_strides = strides(&cut);
        let in_strides = strides(&self.cutoffs);
        let mut probs = vec![0.0; dense_len(&cut)];
        for (flat, &pr) in self.probs.iter().enumerate() {
            if pr == 0.0 {
                continue;
            }
            let idx: usize = keep
                .iter()
                .enumerate()
                .map(|(slot, &q)| ((flat / in_strides[q]) % (self.cutoffs[q] + 1)) * out_strides[slot])
                .sum();
            probs[idx] += pr;
        }
        PhotonDistribution { cutoffs: cut, probs }
    }

    /// Binomial thinning of one mode: each photon survives with probability `eta`.
    pub fn thin(&self, mode: usize, eta: f64) -> PhotonDistribution {
        if eta == 1.0 {
            return self.clone();
        }
        let c = self.cutoffs[mode];
        let st = strides(&self.cutoffs)[mode];
        // weights[n][k] = C(n,k) eta^k (1-eta)^(n-k)
        let lf = ln_factorial_table(c);
        let weights: Vec<Vec<f64>> = (0..=c)
            .map(|n| {
                (0..=n)
                    .map(|k| {
                        if eta == 0.0 {
                            return if k == 0 { 1.0 } else { 0.0 };
                        }
                        let lw = lf[n] - lf[k] - lf[n - k]
                            + k as f64 * eta.ln()
                            + if n > k { (n - k) as f64 * (1.0 - eta).ln() } else { 0.0 };
                        lw.exp()
                    })
                    .collect()
            })
            .collect();
        let mut probs = vec![0.0; self.probs.len()];
        for (flat, &pr) in self.probs.iter().enumerate() {
            if pr == 0.0 {
                continue;
            }
            let n = (flat / st) % (c + 1);
            let base = flat - n * st;
            for (k, w) in weights[n].iter().enumerate() {
                probs[base + k * st] += pr * w;
            }
        }
        PhotonDistribution {
            cutoffs: self.cutoffs.clone(),
            probs,
        }
    }
}

/// Detection statistics of the full two-station interferometer, in output
/// mode order `(c1, d1, c2, d2)`.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    dist: PhotonDistribution,
    party1: PhotonDistribution,
    party2: PhotonDistribution,
}

impl OracleOutcome {
    pub fn joint(&self, e1: EventPattern, e2: EventPattern) -> f64 {
        self.dist
            .prob(&[e1.n as usize, e1.m as usize, e2.n as usize, e2.m as usize])
    }

    pub fn local1(&self, e: EventPattern) -> f64 {
        self.party1.prob(&[e.n as usize, e.m as usize])
    }

    pub fn local2(&self, e: EventPattern) -> f64 {
        self.party2.prob(&[e.n as usize, e.m as usize])
    }

    pub fn distribution(&self) -> &PhotonDistribution {
        &self.dist
    }
}

/// Simulate `|alpha1>_{a1} (input)_{b1 b2} |alpha2>_{a2}` through both local
/// beamsplitters and detectors of efficiency `eta`.
pub fn oracle_distribution(
    spec: &InputSpec,
    s1: &Setting,
    s2: &Setting,
    eta: f64,
    policy: &TruncationPolicy,
) -> Result<OracleOutcome> {
    s1.validate()?;
    s2.validate()?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("efficiency must lie in (0,1], got {eta}")));
    }
    let lo1 = coherent_state_in(s1.alpha, s1.phi, policy, 4)?;
    let lo2 = coherent_state_in(s2.alpha, s2.phi, policy, 4)?;
    // modes: a1, b1, b2, a2
    let state = lo1.tensor(&build_input(spec)?).tensor(&lo2);
    let state = state.apply_beamsplitter((0, 1), s1.chi())?;
    // (a2, b2) -> (c2, d2) lands c2 on index 3 and d2 on index 2
    let state = state.apply_beamsplitter((3, 2), s2.chi())?;
    let mut dist = state.distribution().marginal(&[0, 1, 3, 2]);
    if eta < 1.0 {
        for mode in 0..4 {
            dist = dist.thin(mode, eta);
        }
    }
    let party1 = dist.marginal(&[0, 1]);
    let party2 = dist.marginal(&[2, 3]);
    Ok(OracleOutcome {
        dist,
        party1,
        party2,
    })
}

/// Joint probability of `(e1, e2)` by brute force with the default truncation.
pub fn oracle_event_prob(
    spec: &InputSpec,
    s1: &Setting,
    s2: &Setting,
    e1: EventPattern,
    e2: EventPattern,
    eta: f64,
) -> Result<f64> {
    Ok(oracle_distribution(spec, s1, s2, eta, &TruncationPolicy::default())?.joint(e1, e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn policy() -> TruncationPolicy {
        TruncationPolicy::default()
    }

    #[test]
    fn vacuum_coherent() {
        let v = coherent_state(0.0, 0.0, &policy()).unwrap();
        assert_eq!(v.amplitude(&[0]), Complex64::new(1.0, 0.0));
        assert!(v.amplitudes()[1..].iter().all(|a| a.norm_sqr() == 0.0));
    }

    #[test]
    fn coherent_vacuum_amplitude() {
        let v = coherent_state(1.0, 0.0, &policy()).unwrap();
        assert_abs_diff_eq!(v.amplitude(&[0]).re, (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(v.amplitude(&[0]).re, 0.606_530_659_712_633, epsilon = 1e-12);
        assert!(v.norm_sqr() >= 1.0 - 1e-12);
    }

    #[test]
    fn coherent_phase_does_not_change_statistics() {
        let a = coherent_state(1.0, 0.0, &policy()).unwrap();
        let b = coherent_state(1.0, FRAC_PI_2, &policy()).unwrap();
        for n in 0..=a.cutoffs()[0] {
            assert_abs_diff_eq!(a.detection_prob(&[n]), b.detection_prob(&[n]), epsilon = 1e-16);
            assert_abs_diff_eq!(
                a.detection_prob(&[n]),
                crate::special::poisson_pmf(1.0, n),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn cutoff_rule_and_cap() {
        let p = policy();
        assert_eq!(p.cutoff_for(0.0, 4).unwrap(), 12);
        assert_eq!(p.cutoff_for(4.0, 4).unwrap(), 27);
        assert!(matches!(
            coherent_state(20.0, 0.0, &p),
            Err(Error::TruncationCap { .. })
        ));
        assert_eq!(p.refined(5).cutoff_for(4.0, 4).unwrap(), 32);
    }

    #[test]
    fn refinement_keeps_amplitudes() {
        let a = coherent_state(1.3, 0.4, &policy()).unwrap();
        let b = coherent_state(1.3, 0.4, &policy().refined(5)).unwrap();
        for n in 0..=a.cutoffs()[0] {
            assert_eq!(a.amplitude(&[n]), b.amplitude(&[n]));
        }
    }

    #[test]
    fn input_states() {
        let v = build_input(&InputSpec::Vac1Photon { p: 0.0 }).unwrap();
        assert_eq!(v.detection_prob(&[0, 0]), 1.0);
        let v = build_input(&InputSpec::Vac1Photon { p: 1.0 }).unwrap();
        assert_abs_diff_eq!(v.amplitude(&[0, 1]).re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(v.amplitude(&[1, 0]).re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let v = build_input(&InputSpec::PhotonPair { p: 0.5 }).unwrap();
        assert_abs_diff_eq!(v.amplitude(&[0, 0]).re, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v.amplitude(&[1, 1]).re, 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(build_input(&InputSpec::Vac1Photon { p: -0.1 }).is_err());
    }

    #[test]
    fn detection_on_input() {
        let v = build_input(&InputSpec::Vac1Photon { p: 0.3 }).unwrap();
        assert_abs_diff_eq!(v.detection_prob(&[0, 1]), 0.15, epsilon = 1e-15);
        assert_eq!(v.detection_prob(&[1, 1]), 0.0);
    }

    #[test]
    fn single_photon_balanced_splitter() {
        let s = FockVector::number_state(1, 1)
            .unwrap()
            .tensor(&FockVector::number_state(0, 1).unwrap());
        let out = s.apply_beamsplitter((0, 1), FRAC_PI_4).unwrap();
        let a = out.amplitude(&[1, 0]);
        let b = out.amplitude(&[0, 1]);
        assert_abs_diff_eq!(a.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.im, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn zero_angle_is_identity() {
        let s = coherent_state(0.8, 1.1, &policy())
            .unwrap()
            .tensor(&build_input(&InputSpec::Vac1Photon { p: 0.6 }).unwrap());
        let out = s.apply_beamsplitter((0, 1), 0.0).unwrap();
        for n in 0..=s.cutoffs()[0] {
            for m in 0..=1 {
                for k in 0..=1 {
                    let d = s.amplitude(&[n, m, k]) - out.amplitude(&[n, m, k]);
                    assert!(d.norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn coherent_inputs_stay_coherent() {
        let (alpha, beta, chi) = (0.9, 0.6, 0.7);
        let s = coherent_state(alpha, 0.0, &policy())
            .unwrap()
            .tensor(&coherent_state(beta, 0.0, &policy()).unwrap());
        let out = s.apply_beamsplitter((0, 1), chi).unwrap();
        let d_amp = Complex64::new(0.0, chi.sin() * alpha) + chi.cos() * beta;
        let mean = d_amp.norm_sqr();
        let marg = out.distribution().marginal(&[1]);
        for n in 0..15 {
            assert_abs_diff_eq!(marg.prob(&[n]), crate::special::poisson_pmf(mean, n), epsilon = 1e-12);
        }
    }

    #[test]
    fn beamsplitter_preserves_norm() {
        let s = coherent_state(1.5, 0.3, &policy())
            .unwrap()
            .tensor(&build_input(&InputSpec::PhotonPair { p: 0.4 }).unwrap());
        let n0 = s.norm_sqr();
        let out = s.apply_beamsplitter((0, 1), 0.37).unwrap();
        assert_abs_diff_eq!(out.norm_sqr(), n0, epsilon = 1e-12);
    }

    #[test]
    fn bad_mode_pair() {
        let s = FockVector::vacuum(vec![2, 2]);
        assert!(s.apply_beamsplitter((0, 0), 0.1).is_err());
        assert!(s.apply_beamsplitter((0, 2), 0.1).is_err());
    }

    #[test]
    fn loss_limits() {
        let s = coherent_state(1.0, 0.2, &policy()).unwrap();
        let full = s.apply_loss(0, LossChannel::new(1.0).unwrap()).unwrap();
        for n in 0..10 {
            assert_abs_diff_eq!(full.prob(&[n]), s.detection_prob(&[n]), epsilon = 1e-14);
        }
        let none = s.apply_loss(0, LossChannel::new(0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(none.prob(&[0]), 1.0, epsilon = 1e-12);
        assert!(LossChannel::new(1.2).is_err());
    }

    #[test]
    fn coherent_loss_is_poisson() {
        let s = coherent_state(1.2, 0.0, &policy()).unwrap();
        let eta = 0.7;
        let out = s.apply_loss(0, LossChannel::new(eta).unwrap()).unwrap();
        let thinned = s.distribution().thin(0, eta);
        for n in 0..12 {
            let want = crate::special::poisson_pmf(eta * 1.44, n);
            assert_abs_diff_eq!(out.prob(&[n]), want, epsilon = 1e-12);
            assert_abs_diff_eq!(thinned.prob(&[n]), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn off_settings_never_fire_both_sides() {
        let spec = InputSpec::Vac1Photon { p: 0.7 };
        let off = Setting::off();
        let pr = oracle_event_prob(&spec, &off, &off, EventPattern::DM, EventPattern::DM, 1.0).unwrap();
        assert_eq!(pr, 0.0);
    }

    #[test]
    fn hardy_joint_by_brute_force() {
        let spec = InputSpec::Vac1Photon { p: 0.5 };
        let s = Setting::from_intensity(0.5, FRAC_PI_2, 0.5);
        let pr = oracle_event_prob(&spec, &s, &s, EventPattern::DM, EventPattern::DM, 1.0).unwrap();
        assert_abs_diff_eq!(pr, (-1.0f64).exp() / 32.0, epsilon = 1e-12);
    }
}

//! Physical configuration of the cascaded four-wave-mixing cavity: mode
//! bookkeeping, parameter validation, pump thresholds and regime
//! classification.

use std::fmt;

use crate::error::{Error, Result};

/// Number of cavity modes.
pub const N_MODES: usize = 6;
/// Dimension of the doubled phase space `(alpha, alpha*)`.
pub const STATE_DIM: usize = 2 * N_MODES;

/// The six cavity modes, in state-vector order.
///
/// Positions 0..6 hold the amplitudes, positions 6..12 their conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    P2,
    P1,
    I1,
    S1,
    I2,
    S2,
}

impl Mode {
    pub const ALL: [Mode; N_MODES] = [Mode::P2, Mode::P1, Mode::I1, Mode::S1, Mode::I2, Mode::S2];

    pub const fn index(self) -> usize {
        self as usize
    }

    /// Position of the conjugate amplitude in the doubled state vector.
    pub const fn conjugate_index(self) -> usize {
        self as usize + N_MODES
    }

    pub fn from_index(index: usize) -> Option<Mode> {
        Mode::ALL.get(index).copied()
    }

    pub const fn label(self) -> &'static str {
        match self {
            Mode::P2 => "p2",
            Mode::P1 => "p1",
            Mode::I1 => "i1",
            Mode::S1 => "s1",
            Mode::I2 => "i2",
            Mode::S2 => "s2",
        }
    }

    /// Image under the exchange symmetry p1<->p2, i1<->s1, i2<->s2.
    pub const fn partner(self) -> Mode {
        match self {
            Mode::P2 => Mode::P1,
            Mode::P1 => Mode::P2,
            Mode::I1 => Mode::S1,
            Mode::S1 => Mode::I1,
            Mode::I2 => Mode::S2,
            Mode::S2 => Mode::I2,
        }
    }

    /// Charge under the continuous phase symmetry
    /// (i1, i2 -> e^{i theta}; s1, s2 -> e^{-i theta}; pumps fixed).
    pub const fn phase_charge(self) -> i8 {
        match self {
            Mode::P2 | Mode::P1 => 0,
            Mode::I1 | Mode::I2 => 1,
            Mode::S1 | Mode::S2 => -1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Cavity damping rates for the pump pair, the first generation (i1, s1)
/// and the second generation (i2, s2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Damping {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Damping {
    pub const fn uniform(gamma: f64) -> Self {
        Damping { a: gamma, b: gamma, c: gamma }
    }
}

/// Nonlinear coupling constants of the three mixing processes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Coupling {
    /// Couplings with `k3 = k2`.
    pub const fn symmetric(k1: f64, k2: f64) -> Self {
        Coupling { k1, k2, k3: k2 }
    }
}

/// How the pump amplitude is specified by a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    Absolute(f64),
    /// A multiple of the lower threshold.
    RelativeToLower(f64),
    /// A multiple of the upper threshold.
    RelativeToUpper(f64),
}

/// Validated physical configuration. The pump amplitude is always absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    damping: Damping,
    coupling: Coupling,
    epsilon: f64,
}

impl SystemParams {
    pub fn new(damping: Damping, coupling: Coupling, epsilon: f64) -> Result<Self> {
        let params = SystemParams { damping, coupling, epsilon };
        params.validate()?;
        Ok(params)
    }

    /// Builds the configuration with the pump amplitude resolved from `spec`.
    ///
    /// Relative specifications are rejected with [`Error::NoThreshold`] when
    /// the couplings leave the system without a threshold.
    pub fn with_pump(damping: Damping, coupling: Coupling, spec: EpsilonSpec) -> Result<Self> {
        let unpumped = SystemParams::new(damping, coupling, 0.0)?;
        let epsilon = match spec {
            EpsilonSpec::Absolute(eps) => eps,
            EpsilonSpec::RelativeToLower(r) | EpsilonSpec::RelativeToUpper(r) => {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::InvalidParams(format!("pump ratio must be finite and >= 0, got {r}")));
                }
                let th = compute_thresholds(&unpumped);
                let reference = match spec {
                    EpsilonSpec::RelativeToLower(_) => th.eps_th,
                    _ => th.eps_th_prime,
                };
                r * reference.ok_or(Error::NoThreshold)?
            }
        };
        unpumped.with_epsilon(epsilon)
    }

    /// Same configuration with a different pump amplitude.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        SystemParams::new(self.damping, self.coupling, epsilon)
    }

    fn validate(&self) -> Result<()> {
        let Damping { a, b, c } = self.damping;
        for (name, v) in [("gamma_a", a), ("gamma_b", b), ("gamma_c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let Coupling { k1, k2, k3 } = self.coupling;
        for (name, v) in [("k1", k1), ("k2", k2), ("k3", k3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if k3 != k2 {
            return Err(Error::InvalidParams(format!(
                "the symmetric model requires k2 == k3 (got k2 = {k2}, k3 = {k3})"
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn damping(&self) -> Damping {
        self.damping
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn gamma_a(&self) -> f64 {
        self.damping.a
    }

    pub fn gamma_b(&self) -> f64 {
        self.damping.b
    }

    pub fn gamma_c(&self) -> f64 {
        self.damping.c
    }

    pub fn k1(&self) -> f64 {
        self.coupling.k1
    }

    pub fn k2(&self) -> f64 {
        self.coupling.k2
    }

    pub fn k3(&self) -> f64 {
        self.coupling.k3
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Damping rate of a single mode.
    pub fn gamma(&self, mode: Mode) -> f64 {
        match mode {
            Mode::P1 | Mode::P2 => self.damping.a,
            Mode::I1 | Mode::S1 => self.damping.b,
            Mode::I2 | Mode::S2 => self.damping.c,
        }
    }
}

/// Pump thresholds. Both are absent when the system has no threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub eps_th: Option<f64>,
    pub eps_th_prime: Option<f64>,
}

impl Thresholds {
    pub fn has_threshold(&self) -> bool {
        self.eps_th.is_some()
    }

    /// True when the two thresholds coincide to 1e-12 relative.
    pub fn coincident(&self) -> bool {
        match (self.eps_th, self.eps_th_prime) {
            (Some(lo), Some(hi)) => (hi - lo).abs() <= 1e-12 * hi.abs().max(f64::MIN_POSITIVE),
            _ => false,
        }
    }
}

/// Operating regime selected by the pump amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    BelowThreshold,
    BetweenThresholds,
    AboveUpperThreshold,
    NoThreshold,
}

impl Regime {
    pub const fn name(self) -> &'static str {
        match self {
            Regime::BelowThreshold => "below_threshold",
            Regime::BetweenThresholds => "between_thresholds",
            Regime::AboveUpperThreshold => "above_upper_threshold",
            Regime::NoThreshold => "no_threshold",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Squared pump-mode amplitudes `A_a^2` at which the signal and idler modes
/// can be excited, lower root first. `None` without threshold.
///
/// The roots of `k2^2 x^2 - k1 gamma_c x + gamma_b gamma_c = 0` (with `x = A_a^2`).
/// The lower root is evaluated in rationalized form so it stays accurate when
/// the discriminant is large, and the discriminant is factored so that it is
/// exactly zero at `k1 = 2 k2 sqrt(gamma_b / gamma_c)`.
pub(crate) fn pump_mode_roots(params: &SystemParams) -> Option<(f64, f64)> {
    let (gb, gc) = (params.gamma_b(), params.gamma_c());
    let (k1, k2) = (params.k1(), params.k2());
    let lhs = k1 * gc;
    let rhs = 2.0 * k2 * (gb * gc).sqrt();
    if lhs < rhs {
        return None;
    }
    let disc = ((lhs - rhs) * (lhs + rhs)).max(0.0);
    let sq = disc.sqrt();
    let lower = 2.0 * gb * gc / (lhs + sq);
    let upper = (lhs + sq) / (2.0 * k2 * k2);
    Some((lower, upper))
}

/// Lower and upper pump thresholds.
///
/// `eps_th = gamma_a sqrt((k1 gamma_c - sqrt(D)) / (2 k2^2))` and `eps_th'` with
/// `+sqrt(D)`, `D = k1^2 gamma_c^2 - 4 k2^2 gamma_b gamma_c`; both absent when
/// `k1 < 2 k2 sqrt(gamma_b / gamma_c)`.
pub fn compute_thresholds(params: &SystemParams) -> Thresholds {
    match pump_mode_roots(params) {
        Some((lo, hi)) => Thresholds {
            eps_th: Some(params.gamma_a() * lo.sqrt()),
            eps_th_prime: Some(params.gamma_a() * hi.sqrt()),
        },
        None => Thresholds { eps_th: None, eps_th_prime: None },
    }
}

/// Places the pump amplitude relative to the thresholds. A pump exactly at a
/// threshold belongs to the lower regime.
pub fn classify_regime(params: &SystemParams, th: &Thresholds) -> Regime {
    let eps = params.epsilon();
    match (th.eps_th, th.eps_th_prime) {
        (Some(lo), Some(hi)) => {
            if eps <= lo {
                Regime::BelowThreshold
            } else if eps <= hi {
                Regime::BetweenThresholds
            } else {
                Regime::AboveUpperThreshold
            }
        }
        _ => Regime::NoThreshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(k1: f64, k2: f64, eps: f64) -> SystemParams {
        SystemParams::new(Damping::uniform(0.03), Coupling::symmetric(k1, k2), eps).unwrap()
    }

    #[test]
    fn coincident_thresholds_at_zero_discriminant() {
        let th = compute_thresholds(&params(1.0, 0.5, 0.0));
        let (lo, hi) = (th.eps_th.unwrap(), th.eps_th_prime.unwrap());
        assert_relative_eq!(lo, 0.03 * (0.03f64 / 0.5).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(lo, 0.007_348_469_228_349_534, max_relative = 1e-12);
        assert!((hi - lo).abs() <= 1e-12 * lo);
        assert!(th.coincident());
    }

    #[test]
    fn threshold_ratio_two_for_k2_point_four() {
        let th = compute_thresholds(&params(1.0, 0.4, 0.0));
        let ratio = th.eps_th_prime.unwrap() / th.eps_th.unwrap();
        assert!((ratio - 2.0).abs() < 1e-12 * 2.0, "ratio = {ratio}");
        assert_relative_eq!(th.eps_th.unwrap(), 0.005_809_475_019_311_125, max_relative = 1e-12);
    }

    #[test]
    fn no_threshold_when_k1_below_bound() {
        let th = compute_thresholds(&params(1.0, 0.6, 0.0));
        assert!(!th.has_threshold());
        assert_eq!(classify_regime(&params(1.0, 0.6, 1.0), &th), Regime::NoThreshold);
    }

    #[test]
    fn regime_boundaries_go_to_lower_regime() {
        let base = params(1.0, 0.4, 0.0);
        let th = compute_thresholds(&base);
        let (lo, hi) = (th.eps_th.unwrap(), th.eps_th_prime.unwrap());
        let at = |eps: f64| classify_regime(&base.with_epsilon(eps).unwrap(), &th);
        assert_eq!(at(0.0), Regime::BelowThreshold);
        assert_eq!(at(lo), Regime::BelowThreshold);
        assert_eq!(at(1.2 * lo), Regime::BetweenThresholds);
        assert_eq!(at(hi), Regime::BetweenThresholds);
        assert_eq!(at(2.2 * lo), Regime::AboveUpperThreshold);
    }

    #[test]
    fn relative_pump_resolution() {
        let d = Damping::uniform(0.03);
        let c = Coupling::symmetric(1.0, 0.4);
        let p = SystemParams::with_pump(d, c, EpsilonSpec::RelativeToUpper(1.1)).unwrap();
        let th = compute_thresholds(&p);
        assert_relative_eq!(p.epsilon(), 2.2 * th.eps_th.unwrap(), max_relative = 1e-12);

        let none = Coupling::symmetric(1.0, 0.6);
        assert_eq!(
            SystemParams::with_pump(d, none, EpsilonSpec::RelativeToLower(1.5)),
            Err(Error::NoThreshold)
        );
        assert!(SystemParams::with_pump(d, none, EpsilonSpec::Absolute(0.1)).is_ok());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let d = Damping::uniform(0.03);
        assert!(SystemParams::new(d, Coupling { k1: 1.0, k2: 0.4, k3: 0.5 }, 0.0).is_err());
        assert!(SystemParams::new(Damping { a: 0.0, b: 0.03, c: 0.03 }, Coupling::symmetric(1.0, 0.4), 0.0).is_err());
        assert!(SystemParams::new(d, Coupling::symmetric(1.0, 0.4), -1e-3).is_err());
        assert!(SystemParams::new(d, Coupling::symmetric(f64::NAN, 0.4), 0.0).is_err());
    }

    #[test]
    fn mode_partner_is_an_involution() {
        for m in Mode::ALL {
            assert_eq!(m.partner().partner(), m);
            assert_eq!(m.partner().phase_charge(), -m.phase_charge());
            assert_eq!(Mode::from_index(m.index()), Some(m));
        }
    }
}

//! Classical mean-value dynamics, the closed-form stationary branches and a
//! numeric relaxation used to check them.

use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{self, Control, Termination, Tolerances};
use crate::params::{
    classify_regime, compute_thresholds, pump_mode_roots, Mode, Regime, SystemParams, N_MODES,
};

/// Complex mode amplitudes in [`Mode`] order.
pub type Amplitudes = [Complex64; N_MODES];

const P2: usize = Mode::P2.index();
const P1: usize = Mode::P1.index();
const I1: usize = Mode::I1.index();
const S1: usize = Mode::S1.index();
const I2: usize = Mode::I2.index();
const S2: usize = Mode::S2.index();

/// Deterministic part of the mean-value equations, `d alpha / dt = f(alpha)`.
pub fn drift(params: &SystemParams, alpha: &Amplitudes) -> Amplitudes {
    let a = alpha;
    let c: Amplitudes = std::array::from_fn(|i| a[i].conj());
    let eps = Complex64::new(params.epsilon(), 0.0);
    let (k1, k2, k3) = (params.k1(), params.k2(), params.k3());
    let (ga, gb, gc) = (params.gamma_a(), params.gamma_b(), params.gamma_c());

    let mut f = [Complex64::new(0.0, 0.0); N_MODES];
    f[P2] = eps - a[P2] * ga - c[P1] * a[S1] * a[I1] * k1 - c[I1] * a[P1] * a[I2] * k2
        + c[S2] * a[S1] * a[P1] * k3;
    f[P1] = eps - a[P1] * ga - c[P2] * a[S1] * a[I1] * k1 - c[S1] * a[P2] * a[S2] * k3
        + c[I2] * a[I1] * a[P2] * k2;
    f[I1] = -a[I1] * gb + c[S1] * a[P1] * a[P2] * k1 - c[P2] * a[P1] * a[I2] * k2;
    f[S1] = -a[S1] * gb + c[I1] * a[P1] * a[P2] * k1 - c[P1] * a[P2] * a[S2] * k3;
    f[I2] = -a[I2] * gc + c[P1] * a[P2] * a[I1] * k2;
    f[S2] = -a[S2] * gc + c[P2] * a[P1] * a[S1] * k3;
    f
}

/// Infinity norm of a complex vector.
pub fn max_norm(v: &Amplitudes) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Which stationary solution a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    /// Only the pumps are excited.
    Trivial,
    /// Pump amplitude pinned at the lower threshold.
    Lower,
    /// Pump amplitude pinned at the upper threshold.
    Upper,
}

impl Branch {
    pub const fn name(self) -> &'static str {
        match self {
            Branch::Trivial => "trivial",
            Branch::Lower => "lower",
            Branch::Upper => "upper",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A symmetric, real, non-negative stationary solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub amplitudes: [f64; N_MODES],
    pub branch: Branch,
    pub regime: Regime,
}

impl SteadyState {
    fn symmetric(a_a: f64, a_b: f64, a_c: f64, branch: Branch, regime: Regime) -> Self {
        SteadyState { amplitudes: [a_a, a_a, a_b, a_b, a_c, a_c], branch, regime }
    }

    /// Pump amplitude `A_a`.
    pub fn a_a(&self) -> f64 {
        self.amplitudes[P1]
    }

    /// First-generation amplitude `A_b`.
    pub fn a_b(&self) -> f64 {
        self.amplitudes[I1]
    }

    /// Second-generation amplitude `A_c`.
    pub fn a_c(&self) -> f64 {
        self.amplitudes[I2]
    }

    pub fn amplitude(&self, mode: Mode) -> f64 {
        self.amplitudes[mode.index()]
    }

    pub fn complex_amplitudes(&self) -> Amplitudes {
        self.amplitudes.map(|x| Complex64::new(x, 0.0))
    }

    /// `||f(A)||_inf` at this state.
    pub fn residual(&self, params: &SystemParams) -> f64 {
        max_norm(&drift(params, &self.complex_amplitudes()))
    }
}

/// Closed-form stationary solutions for the current pump amplitude.
///
/// Below threshold (or without one) only the trivial state exists. Between the
/// thresholds the lower branch is returned; above the upper threshold both the
/// lower and upper branches are returned, in that order. When the thresholds
/// coincide the two branches are the same state and it is reported once, as
/// the lower branch.
pub fn analytic_steady_states(params: &SystemParams) -> Result<Vec<SteadyState>> {
    let th = compute_thresholds(params);
    let regime = classify_regime(params, &th);
    let eps = params.epsilon();
    let ga = params.gamma_a();
    if matches!(regime, Regime::BelowThreshold | Regime::NoThreshold) {
        return Ok(vec![SteadyState::symmetric(eps / ga, 0.0, 0.0, Branch::Trivial, regime)]);
    }
    let (lo_sq, hi_sq) = pump_mode_roots(params)
        .ok_or_else(|| Error::InternalConsistency("regime above threshold without roots".into()))?;

    let branch_state = |a_a_sq: f64, branch: Branch| -> Result<SteadyState> {
        let a_a = a_a_sq.sqrt();
        let radicand = (eps - ga * a_a) / (params.k1() * a_a);
        if !(radicand >= 0.0) {
            return Err(Error::InternalConsistency(format!(
                "negative radicand {radicand:e} for the {branch} branch in regime {regime}"
            )));
        }
        let a_b = radicand.sqrt();
        let a_c = params.k2() * a_a_sq * a_b / params.gamma_c();
        Ok(SteadyState::symmetric(a_a, a_b, a_c, branch, regime))
    };

    let mut out = vec![branch_state(lo_sq, Branch::Lower)?];
    if regime == Regime::AboveUpperThreshold && !th.coincident() {
        out.push(branch_state(hi_sq, Branch::Upper)?);
    }
    Ok(out)
}

/// Distance from `alpha` to the orbit of the real state `target` under the
/// continuous phase symmetry of the drift.
///
/// The drift is invariant under `alpha_m -> e^{i q_m theta} alpha_m` with
/// charges `q` from [`Mode::phase_charge`], so a stationary solution is only
/// defined up to that rotation; the distance minimizes over `theta` in closed
/// form.
pub fn phase_orbit_distance(alpha: &Amplitudes, target: &[f64; N_MODES]) -> f64 {
    // The optimal rotation aligns the charged overlaps; evaluating the
    // distance directly at that angle avoids cancellation in |a|^2 + |t|^2 - 2 Re<a, t>.
    let mut plus = Complex64::new(0.0, 0.0);
    for mode in Mode::ALL {
        let z = alpha[mode.index()] * target[mode.index()];
        match mode.phase_charge() {
            0 => {}
            1 => plus += z,
            _ => plus += z.conj(),
        }
    }
    let theta = if plus.norm() > 0.0 { plus.arg() } else { 0.0 };
    Mode::ALL
        .iter()
        .map(|m| {
            let t = Complex64::from_polar(target[m.index()], f64::from(m.phase_charge()) * theta);
            (alpha[m.index()] - t).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchMatch {
    pub branch: Branch,
    pub distance: f64,
}

/// Closest analytic branch within `radius`, ties going to the smaller `A_a`.
pub fn match_branch(params: &SystemParams, alpha: &Amplitudes, radius: f64) -> Result<Option<BranchMatch>> {
    let mut states = analytic_steady_states(params)?;
    states.sort_by(|a, b| a.a_a().total_cmp(&b.a_a()));
    let mut best: Option<BranchMatch> = None;
    for ss in &states {
        let distance = phase_orbit_distance(alpha, &ss.amplitudes);
        if distance <= radius && best.is_none_or(|b| distance < b.distance) {
            best = Some(BranchMatch { branch: ss.branch, distance });
        }
    }
    Ok(best)
}

/// Settings for [`relax_to_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxConfig {
    /// Integration horizon.
    pub t_max: f64,
    /// Stop once `||f(alpha)||_inf` drops below this.
    pub tol: f64,
    /// Amplitude-space radius for matching the end point to an analytic branch.
    pub match_radius: f64,
    /// Abort when `||alpha||_inf` exceeds this.
    pub divergence_bound: f64,
    /// Relative tolerance of the integrator.
    pub rtol: f64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig { t_max: 1e6, tol: 1e-10, match_radius: 1e-6, divergence_bound: 1e6, rtol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedState {
    pub amplitudes: Amplitudes,
    pub time: f64,
    pub residual: f64,
    pub matched: Option<BranchMatch>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelaxOutcome {
    /// The residual dropped below the tolerance.
    Converged(RelaxedState),
    /// `t_max` was reached (or the step size collapsed) first.
    TimedOut(RelaxedState),
    /// The amplitudes left the divergence bound.
    Diverged { time: f64, norm: f64 },
}

impl RelaxOutcome {
    pub fn matched_branch(&self) -> Option<Branch> {
        match self {
            RelaxOutcome::Converged(s) => s.matched.map(|m| m.branch),
            _ => None,
        }
    }
}

/// Integrates the noiseless mean-value equations from `initial` until the
/// drift residual drops below `cfg.tol`.
pub fn relax_to_steady_state(params: &SystemParams, initial: &Amplitudes, cfg: &RelaxConfig) -> Result<RelaxOutcome> {
    if !(cfg.t_max > 0.0 && cfg.tol > 0.0 && cfg.rtol > 0.0) {
        return Err(Error::InvalidParams("relaxation needs t_max, tol and rtol > 0".into()));
    }
    let tolerances = Tolerances { rtol: cfg.rtol, atol: cfg.rtol * 1e-3 * params.epsilon().max(1e-300) / params.gamma_a() };
    let mut diverged: Option<(f64, f64)> = None;
    let mut converged = false;
    let (time, y, termination) = ode::integrate(
        |y: &Amplitudes| drift(params, y),
        *initial,
        cfg.t_max,
        tolerances,
        |t, y, f| {
            let norm = max_norm(y);
            if !(norm <= cfg.divergence_bound) {
                diverged = Some((t, norm));
                Control::Stop
            } else if max_norm(f) < cfg.tol {
                converged = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    if let Some((time, norm)) = diverged {
        return Ok(RelaxOutcome::Diverged { time, norm });
    }
    let residual = max_norm(&drift(params, &y));
    let state = RelaxedState { amplitudes: y, time, residual, matched: match_branch(params, &y, cfg.match_radius)? };
    match (converged, termination) {
        (true, Termination::Stopped) => Ok(RelaxOutcome::Converged(state)),
        _ => Ok(RelaxOutcome::TimedOut(state)),
    }
}

/// Reproducible complex Gaussian initial amplitudes with standard deviation
/// `scale` per real component.
pub fn gaussian_initial_conditions(count: usize, scale: f64, seed: u64) -> Vec<Amplitudes> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            std::array::from_fn(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(scale * re, scale * im)
            })
        })
        .collect()
}

/// Relaxes every initial condition, in parallel, preserving input order.
pub fn relax_ensemble(params: &SystemParams, initials: &[Amplitudes], cfg: &RelaxConfig) -> Result<Vec<RelaxOutcome>> {
    initials.par_iter().map(|init| relax_to_steady_state(params, init, cfg)).collect()
}

/// Where an ensemble of relaxations ended up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BasinStatistics {
    pub trivial: usize,
    pub lower: usize,
    pub upper: usize,
    /// Converged to a fixed point that is none of the analytic branches.
    pub unmatched: usize,
    pub timed_out: usize,
    pub diverged: usize,
}

impl BasinStatistics {
    pub fn from_outcomes(outcomes: &[RelaxOutcome]) -> Self {
        let mut stats = BasinStatistics::default();
        for outcome in outcomes {
            match outcome {
                RelaxOutcome::Converged(s) => match s.matched.map(|m| m.branch) {
                    Some(Branch::Trivial) => stats.trivial += 1,
                    Some(Branch::Lower) => stats.lower += 1,
                    Some(Branch::Upper) => stats.upper += 1,
                    None => stats.unmatched += 1,
                },
                RelaxOutcome::TimedOut(_) => stats.timed_out += 1,
                RelaxOutcome::Diverged { .. } => stats.diverged += 1,
            }
        }
        stats
    }
}

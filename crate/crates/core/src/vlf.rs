//! The five six-partite van Loock–Furusawa inequalities, closed-form gain
//! optimization and searches over analysis frequency and pump amplitude.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linearization::{FluctuationModel, RMat};
use crate::precise::{self, Dd, Square};
use crate::params::{classify_regime, compute_thresholds, EpsilonSpec, Mode, SystemParams, N_MODES, STATE_DIM};
use crate::spectra::{quadrature_rates, QuadratureSpectrum, MIN_RCOND};
use crate::steady_state::{analytic_steady_states, Branch, SteadyState};

/// Value of every inequality in the absence of correlations.
pub const VLF_BOUND: f64 = 4.0;
/// Relative singular-value cutoff for the gain normal equations.
const PINV_TOL: f64 = 1e-12;
/// Eigenvalues of `v_out` below `-PSD_TOL * max(1, |v_out|)` are unphysical.
pub const PSD_TOL: f64 = 1e-9;
/// Golden-section stopping width in units of `gamma_a`.
pub const REFINE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymmetryClass {
    A,
    B,
    C,
}

impl SymmetryClass {
    pub const ALL: [SymmetryClass; 3] = [SymmetryClass::A, SymmetryClass::B, SymmetryClass::C];

    pub const fn name(self) -> &'static str {
        match self {
            SymmetryClass::A => "A",
            SymmetryClass::B => "B",
            SymmetryClass::C => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VlfLabel {
    I2MinusP1,
    P1PlusS1,
    S1MinusI1,
    I1PlusP2,
    P2MinusS2,
}

impl VlfLabel {
    pub const ALL: [VlfLabel; 5] =
        [VlfLabel::I2MinusP1, VlfLabel::P1PlusS1, VlfLabel::S1MinusI1, VlfLabel::I1PlusP2, VlfLabel::P2MinusS2];

    pub const fn name(self) -> &'static str {
        match self {
            VlfLabel::I2MinusP1 => "i2-p1",
            VlfLabel::P1PlusS1 => "p1+s1",
            VlfLabel::S1MinusI1 => "s1-i1",
            VlfLabel::I1PlusP2 => "i1+p2",
            VlfLabel::P2MinusS2 => "p2-s2",
        }
    }

    pub fn inequality(self) -> VlfInequality {
        VlfInequality::ALL[self as usize]
    }
}

impl fmt::Display for VlfLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VlfLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VlfLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown inequality '{s}' (expected one of i2-p1, p1+s1, s1-i1, i1+p2, p2-s2)")))
    }
}

/// One inequality: `V(sum x_k X_k) + V(sum y_k Y_k) >= 4`, where the `y_k`
/// are fixed at the unit entries and free gains elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VlfInequality {
    pub label: VlfLabel,
    pub x_coeffs: [i8; N_MODES],
    pub y_fixed: [i8; N_MODES],
    pub y_free: [bool; N_MODES],
    pub class: SymmetryClass,
}

const T: bool = true;
const F: bool = false;

impl VlfInequality {
    //                                   p2  p1  i1  s1  i2  s2
    pub const ALL: [VlfInequality; 5] = [
        VlfInequality {
            label: VlfLabel::I2MinusP1,
            x_coeffs: [0, -1, 0, 0, 1, 0],
            y_fixed: [0, 1, 0, 0, 1, 0],
            y_free: [T, F, T, T, F, T],
            class: SymmetryClass::C,
        },
        VlfInequality {
            label: VlfLabel::P1PlusS1,
            x_coeffs: [0, 1, 0, 1, 0, 0],
            y_fixed: [0, 1, 0, -1, 0, 0],
            y_free: [T, F, T, F, T, T],
            class: SymmetryClass::B,
        },
        VlfInequality {
            label: VlfLabel::S1MinusI1,
            x_coeffs: [0, 0, -1, 1, 0, 0],
            y_fixed: [0, 0, 1, 1, 0, 0],
            y_free: [T, T, F, F, T, T],
            class: SymmetryClass::A,
        },
        VlfInequality {
            label: VlfLabel::I1PlusP2,
            x_coeffs: [1, 0, 1, 0, 0, 0],
            y_fixed: [-1, 0, 1, 0, 0, 0],
            y_free: [F, T, F, T, T, T],
            class: SymmetryClass::B,
        },
        VlfInequality {
            label: VlfLabel::P2MinusS2,
            x_coeffs: [1, 0, 0, 0, 0, -1],
            y_fixed: [1, 0, 0, 0, 0, 1],
            y_free: [F, T, T, T, T, F],
            class: SymmetryClass::C,
        },
    ];

    pub fn free_modes(&self) -> Vec<Mode> {
        Mode::ALL.into_iter().filter(|m| self.y_free[m.index()]).collect()
    }

    pub fn free_count(&self) -> usize {
        self.y_free.iter().filter(|&&f| f).count()
    }

    /// Representative inequality of a symmetry class.
    pub fn representative(class: SymmetryClass) -> VlfInequality {
        match class {
            SymmetryClass::A => VlfLabel::S1MinusI1.inequality(),
            SymmetryClass::B => VlfLabel::P1PlusS1.inequality(),
            SymmetryClass::C => VlfLabel::I2MinusP1.inequality(),
        }
    }

    fn x_vector(&self) -> SMatrix<f64, STATE_DIM, 1> {
        SMatrix::from_fn(|r, _| if r < N_MODES { f64::from(self.x_coeffs[r]) } else { 0.0 })
    }

    fn y_vector(&self, gains: &[f64]) -> SMatrix<f64, STATE_DIM, 1> {
        let mut v = SMatrix::zeros();
        let mut g = gains.iter();
        for k in 0..N_MODES {
            v[N_MODES + k] = if self.y_free[k] { *g.next().expect("length checked") } else { f64::from(self.y_fixed[k]) };
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlfResult {
    pub label: VlfLabel,
    /// Absolute analysis frequency.
    pub omega: f64,
    pub value: f64,
    /// Optimal gains, in the order of [`VlfInequality::free_modes`].
    pub gains: Vec<f64>,
    pub violated: bool,
}

fn quadratic_form(v: &RMat, c: &SMatrix<f64, STATE_DIM, 1>) -> f64 {
    (c.transpose() * v * c)[(0, 0)]
}

/// `V(X combination) + V(Y combination)` with the given free gains.
///
/// Each variance is a quadratic form over the whole 12x12 `v_out`, so an X-Y
/// cross block would be accounted for inside each term if one were present.
pub fn evaluate_inequality(ineq: &VlfInequality, spec: &QuadratureSpectrum, gains: &[f64]) -> Result<f64> {
    if gains.len() != ineq.free_count() {
        return Err(Error::DimensionMismatch { expected: ineq.free_count(), got: gains.len() });
    }
    let v = &spec.v_out;
    Ok(quadratic_form(v, &ineq.x_vector()) + quadratic_form(v, &ineq.y_vector(gains)))
}

/// Smallest eigenvalue of the symmetric part of `v_out`.
pub fn min_eigenvalue(v: &RMat) -> f64 {
    ((v + v.transpose()) * 0.5).symmetric_eigenvalues().min()
}

fn check_physical(spec: &QuadratureSpectrum) -> Result<()> {
    let min = min_eigenvalue(&spec.v_out);
    if min < -PSD_TOL * spec.v_out.amax().max(1.0) {
        return Err(Error::Physicality { min_eigenvalue: min });
    }
    Ok(())
}

fn optimize(ineq: &VlfInequality, spec: &QuadratureSpectrum) -> Result<VlfResult> {
    let free: Vec<usize> = (0..N_MODES).filter(|&k| ineq.y_free[k]).map(|k| N_MODES + k).collect();
    let fixed = ineq.y_vector(&vec![0.0; free.len()]);
    let v = &spec.v_out;
    let normal = DMatrix::from_fn(free.len(), free.len(), |i, j| v[(free[i], free[j])]);
    let rhs = DVector::from_fn(free.len(), |i, _| -(0..STATE_DIM).map(|k| v[(free[i], k)] * fixed[k]).sum::<f64>());
    let svd = normal.svd(true, true);
    let cutoff = PINV_TOL * svd.singular_values.max();
    let gains = svd.solve(&rhs, cutoff).map_err(|e| Error::Numerical(format!("gain solve failed: {e}")))?;
    let gains: Vec<f64> = gains.iter().copied().collect();
    if gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite optimal gains".into()));
    }
    let value = evaluate_inequality(ineq, spec, &gains)?;
    Ok(VlfResult { label: ineq.label, omega: spec.omega, value, gains, violated: value < VLF_BOUND })
}

/// Minimizes the inequality over its free gains in closed form.
pub fn optimize_gains(ineq: &VlfInequality, spec: &QuadratureSpectrum) -> Result<VlfResult> {
    check_physical(spec)?;
    optimize(ineq, spec)
}

/// [`optimize_gains`] without the positivity precondition, for the formal
/// spectra of unstable operating points.
pub fn optimize_gains_formal(ineq: &VlfInequality, spec: &QuadratureSpectrum) -> Result<VlfResult> {
    optimize(ineq, spec)
}

/// The closed-form optimum computed on a double-double covariance.
fn optimize_precise(ineq: &VlfInequality, v: &Square<Dd>, omega: f64) -> Result<VlfResult> {
    let free: Vec<usize> = (0..N_MODES).filter(|&k| ineq.y_free[k]).map(|k| N_MODES + k).collect();
    let fixed = ineq.y_vector(&vec![0.0; free.len()]);
    let normal: Vec<Vec<Dd>> = free.iter().map(|&i| free.iter().map(|&j| v[i][j]).collect()).collect();
    let rhs: Vec<Dd> = free
        .iter()
        .map(|&i| {
            let mut acc = Dd::ZERO;
            for k in 0..STATE_DIM {
                if fixed[k] != 0.0 {
                    acc += v[i][k] * Dd::new(fixed[k]);
                }
            }
            -acc
        })
        .collect();
    let approx = DMatrix::from_fn(free.len(), free.len(), |i, j| normal[i][j].to_f64());
    let svd = approx.svd(true, true);
    let sv = &svd.singular_values;
    let well_posed = sv.min() > PINV_TOL * sv.max();
    let gains: Vec<Dd> = match well_posed.then(|| precise::solve_real(normal, rhs.clone())).flatten() {
        Some(g) => g,
        None => {
            let b = DVector::from_iterator(free.len(), rhs.iter().map(|x| x.to_f64()));
            let g = svd.solve(&b, PINV_TOL * sv.max()).map_err(|e| Error::Numerical(format!("gain solve failed: {e}")))?;
            g.iter().map(|&x| Dd::new(x)).collect()
        }
    };
    let mut cy: [Dd; STATE_DIM] = std::array::from_fn(|k| Dd::new(fixed[k]));
    for (slot, g) in free.iter().zip(&gains) {
        cy[*slot] = *g;
    }
    let cx: [Dd; STATE_DIM] = std::array::from_fn(|k| Dd::new(ineq.x_vector()[k]));
    let value = (precise::quadratic_form(v, &cx) + precise::quadratic_form(v, &cy)).to_f64();
    let gains: Vec<f64> = gains.iter().map(|g| g.to_f64()).collect();
    if !value.is_finite() || gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite optimum".into()));
    }
    Ok(VlfResult { label: ineq.label, omega, value, gains, violated: value < VLF_BOUND })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Evaluate spectra at unstable operating points as a formal continuation.
    pub allow_unstable: bool,
    /// Switch the noise off (every value becomes 4).
    pub zero_diffusion: bool,
}

/// The steady state on `branch` for the current pump amplitude.
///
/// With coincident thresholds the single nontrivial state answers to both
/// `Lower` and `Upper`.
pub fn select_steady_state(params: &SystemParams, branch: Branch) -> Result<SteadyState> {
    let states = analytic_steady_states(params)?;
    let th = compute_thresholds(params);
    let wanted = |ss: &SteadyState| {
        ss.branch == branch || (branch == Branch::Upper && th.coincident() && ss.branch == Branch::Lower)
    };
    states.into_iter().find(wanted).ok_or_else(|| {
        let regime = classify_regime(params, &th);
        Error::BranchUnavailable(branch.name(), regime.name())
    })
}

/// Fluctuation model at one branch, ready for repeated spectral evaluation.
#[derive(Debug, Clone)]
pub struct VlfEvaluator {
    pub params: SystemParams,
    pub steady_state: SteadyState,
    pub model: FluctuationModel,
    pub options: SweepOptions,
}

impl VlfEvaluator {
    pub fn new(params: &SystemParams, branch: Branch, options: SweepOptions) -> Result<Self> {
        let steady_state = select_steady_state(params, branch)?;
        let mut model = FluctuationModel::new(params, &steady_state)?;
        if options.zero_diffusion {
            model = model.without_diffusion();
        }
        if !options.allow_unstable {
            model.require_stationary()?;
        }
        Ok(VlfEvaluator { params: *params, steady_state, model, options })
    }

    /// Output covariance at `omega_norm = omega / gamma_a` in double-double.
    fn precise_spectrum(&self, omega_norm: f64) -> Result<(f64, Square<Dd>)> {
        let omega = omega_norm * self.params.gamma_a();
        let g = quadrature_rates(&self.params).map(f64::sqrt);
        let rates: [f64; STATE_DIM] = std::array::from_fn(|i| g[i]);
        let v = precise::output_covariance(&self.model.m, &self.model.d, &rates, omega, MIN_RCOND)?;
        if !self.options.allow_unstable {
            check_physical(&QuadratureSpectrum { omega, v_out: precise::to_rmat(&v) })?;
        }
        Ok((omega, v))
    }

    /// Output spectrum at `omega_norm = omega / gamma_a`.
    pub fn spectrum(&self, omega_norm: f64) -> Result<QuadratureSpectrum> {
        let (omega, v) = self.precise_spectrum(omega_norm)?;
        Ok(QuadratureSpectrum { omega, v_out: precise::to_rmat(&v) })
    }

    pub fn evaluate(&self, ineq: &VlfInequality, omega_norm: f64) -> Result<VlfResult> {
        let (omega, v) = self.precise_spectrum(omega_norm)?;
        optimize_precise(ineq, &v, omega)
    }

    /// Every inequality at one frequency, sharing the spectrum.
    pub fn evaluate_all(&self, ineqs: &[VlfInequality], omega_norm: f64) -> Result<Vec<VlfResult>> {
        let (omega, v) = self.precise_spectrum(omega_norm)?;
        ineqs.iter().map(|q| optimize_precise(q, &v, omega)).collect()
    }

    /// Global minimum over `[lo, hi]` (in units of `gamma_a`): scan a
    /// log-spaced grid of `points`, then refine the best bracket by golden
    /// section in `log omega` down to [`REFINE_TOL`].
    pub fn min_over_frequency(&self, ineq: &VlfInequality, lo: f64, hi: f64, points: usize) -> Result<VlfResult> {
        if !(lo > 0.0 && hi > lo && points >= 2) {
            return Err(Error::InvalidParams(format!("bad frequency range [{lo}, {hi}] with {points} points")));
        }
        let grid = log_grid(lo, hi, points);
        let coarse: Vec<VlfResult> = grid.par_iter().map(|&w| self.evaluate(ineq, w)).collect::<Result<_>>()?;
        let best = (0..coarse.len()).min_by(|&a, &b| coarse[a].value.total_cmp(&coarse[b].value)).expect("nonempty");
        let (mut a, mut b) = (grid[best.saturating_sub(1)].ln(), grid[(best + 1).min(grid.len() - 1)].ln());
        let at = |x: f64| self.evaluate(ineq, x.exp());
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = at(x1)?;
        let mut f2 = at(x2)?;
        while b.exp() - a.exp() > REFINE_TOL {
            if f1.value <= f2.value {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = at(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = at(x2)?;
            }
        }
        let refined = if f1.value <= f2.value { f1 } else { f2 };
        Ok(if refined.value < coarse[best].value { refined } else { coarse[best].clone() })
    }
}

/// `points` values from `lo` to `hi`, evenly spaced in logarithm.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// `points` values from `lo` to `hi`, evenly spaced.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Optimized inequalities at one analysis frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub omega_norm: f64,
    pub results: Vec<VlfResult>,
}

/// Optimizes every inequality at every frequency of `omega_norm_grid` (in
/// units of `gamma_a`). Frequencies are evaluated in parallel; rows come back
/// in grid order.
pub fn sweep_frequency(
    params: &SystemParams,
    branch: Branch,
    ineqs: &[VlfInequality],
    omega_norm_grid: &[f64],
    options: SweepOptions,
) -> Result<Vec<SweepRow>> {
    let eval = VlfEvaluator::new(params, branch, options)?;
    omega_norm_grid
        .par_iter()
        .map(|&w| Ok(SweepRow { omega_norm: w, results: eval.evaluate_all(ineqs, w)? }))
        .collect()
}

/// Minimum over frequency of one inequality.
pub fn min_over_frequency(
    params: &SystemParams,
    branch: Branch,
    ineq: &VlfInequality,
    omega_norm_range: (f64, f64),
    options: SweepOptions,
) -> Result<VlfResult> {
    let eval = VlfEvaluator::new(params, branch, options)?;
    eval.min_over_frequency(ineq, omega_norm_range.0, omega_norm_range.1, 200)
}

/// Minima over frequency at one pump amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpPoint {
    pub epsilon: f64,
    pub minima: Vec<VlfResult>,
}

/// Minimum over `[lo, hi]` of each inequality for each pump amplitude.
pub fn pump_sweep(
    base: &SystemParams,
    branch: Branch,
    pumps: &[EpsilonSpec],
    ineqs: &[VlfInequality],
    omega_norm_range: (f64, f64),
    points: usize,
    options: SweepOptions,
) -> Result<Vec<PumpPoint>> {
    pumps
        .par_iter()
        .map(|&spec| {
            let params = SystemParams::with_pump(base.damping(), base.coupling(), spec)?;
            let eval = VlfEvaluator::new(&params, branch, options)?;
            let minima = ineqs
                .iter()
                .map(|q| eval.min_over_frequency(q, omega_norm_range.0, omega_norm_range.1, points))
                .collect::<Result<_>>()?;
            Ok(PumpPoint { epsilon: params.epsilon(), minima })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Coupling, Damping};
    use proptest::prelude::*;

    fn params(k2: f64, spec: EpsilonSpec) -> SystemParams {
        SystemParams::with_pump(Damping::uniform(0.03), Coupling::symmetric(1.0, k2), spec).unwrap()
    }

    fn fig2() -> SystemParams {
        params(0.5, EpsilonSpec::RelativeToLower(1.5))
    }

    #[test]
    fn structure_invariants() {
        for (i, q) in VlfInequality::ALL.iter().enumerate() {
            assert_eq!(q.label as usize, i);
            assert_eq!(q.x_coeffs.iter().filter(|&&x| x != 0).count(), 2);
            assert_eq!(q.free_count(), 4);
            for k in 0..N_MODES {
                assert!(!(q.y_free[k] && q.y_fixed[k] != 0));
                assert!(q.y_free[k] || q.y_fixed[k] != 0);
            }
            assert_eq!(q.label.name().parse::<VlfLabel>().unwrap(), q.label);
        }
        assert_eq!(VlfLabel::I1PlusP2.inequality().y_fixed[Mode::P2.index()], -1);
        assert_eq!(VlfLabel::P2MinusS2.inequality().y_fixed[Mode::P2.index()], 1);
        assert!("p1-s1".parse::<VlfLabel>().is_err());
    }

    #[test]
    fn vacuum_values() {
        let vac = QuadratureSpectrum::vacuum(1.0);
        for q in &VlfInequality::ALL {
            assert_eq!(evaluate_inequality(q, &vac, &[0.0; 4]).unwrap(), 4.0);
            let g = [0.5, -1.0, 2.0, 0.25];
            let expected = 4.0 + g.iter().map(|x| x * x).sum::<f64>();
            assert!((evaluate_inequality(q, &vac, &g).unwrap() - expected).abs() < 1e-14);
            let r = optimize_gains(q, &vac).unwrap();
            assert_eq!(r.value, 4.0);
            assert!(r.gains.iter().all(|&g| g == 0.0));
            assert!(!r.violated);
        }
    }

    #[test]
    fn wrong_gain_count() {
        let vac = QuadratureSpectrum::vacuum(1.0);
        let q = &VlfInequality::ALL[0];
        assert_eq!(evaluate_inequality(q, &vac, &[0.0; 3]), Err(Error::DimensionMismatch { expected: 4, got: 3 }));
    }

    #[test]
    fn indefinite_spectrum_rejected() {
        let mut spec = QuadratureSpectrum::vacuum(1.0);
        spec.v_out[(0, 0)] = -0.1;
        assert!(matches!(optimize_gains(&VlfInequality::ALL[0], &spec), Err(Error::Physicality { .. })));
        optimize_gains_formal(&VlfInequality::ALL[0], &spec).unwrap();
    }

    #[test]
    fn fig2_class_ordering_and_symmetry() {
        let grid = log_grid(0.01, 100.0, 60);
        let rows = sweep_frequency(&fig2(), Branch::Lower, &VlfInequality::ALL, &grid, SweepOptions::default()).unwrap();
        let min_of = |label: VlfLabel| {
            rows.iter().map(|r| r.results[label as usize].value).fold(f64::INFINITY, f64::min)
        };
        assert!(min_of(VlfLabel::S1MinusI1) < min_of(VlfLabel::P1PlusS1));
        for label in VlfLabel::ALL {
            assert!(min_of(label) < 4.0, "{label}");
        }
        for row in &rows {
            let r = &row.results;
            let scale = r[1].value.abs().max(1.0);
            assert!((r[1].value - r[3].value).abs() < 1e-9 * scale);
            assert!((r[0].value - r[4].value).abs() < 1e-9 * r[0].value.abs().max(1.0));
        }
    }

    #[test]
    fn shot_noise_limit() {
        let rows =
            sweep_frequency(&fig2(), Branch::Lower, &VlfInequality::ALL, &[1e3, 1e6], SweepOptions::default()).unwrap();
        for r in &rows[0].results {
            assert!((r.value - 4.0).abs() < 2e-3);
        }
        for r in &rows[1].results {
            assert!((r.value - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_diffusion_is_exactly_uncorrelated() {
        let opts = SweepOptions { zero_diffusion: true, ..SweepOptions::default() };
        let rows = sweep_frequency(&fig2(), Branch::Lower, &VlfInequality::ALL, &log_grid(0.01, 100.0, 9), opts).unwrap();
        for r in rows.iter().flat_map(|r| &r.results) {
            assert!((r.value - 4.0).abs() < 1e-9);
        }
        let eval = VlfEvaluator::new(&fig2(), Branch::Lower, opts).unwrap();
        let m = eval.min_over_frequency(&VlfInequality::ALL[2], 0.1, 10.0, 20).unwrap();
        assert!((m.value - 4.0).abs() < 1e-9);
    }

    #[test]
    fn unstable_branch_needs_formal_flag() {
        let p = params(0.4, EpsilonSpec::RelativeToUpper(2.2));
        assert!(matches!(
            VlfEvaluator::new(&p, Branch::Lower, SweepOptions::default()),
            Err(Error::Unstable { .. })
        ));
        let opts = SweepOptions { allow_unstable: true, ..SweepOptions::default() };
        VlfEvaluator::new(&p, Branch::Upper, opts).unwrap().evaluate(&VlfInequality::ALL[0], 1.0).unwrap();
    }

    #[test]
    fn branch_selection() {
        let between = params(0.4, EpsilonSpec::RelativeToLower(1.5));
        assert!(matches!(select_steady_state(&between, Branch::Upper), Err(Error::BranchUnavailable(..))));
        assert_eq!(select_steady_state(&between, Branch::Lower).unwrap().branch, Branch::Lower);
        let coincident = fig2();
        assert_eq!(
            select_steady_state(&coincident, Branch::Upper).unwrap(),
            select_steady_state(&coincident, Branch::Lower).unwrap()
        );
        let below = params(0.4, EpsilonSpec::RelativeToLower(0.5));
        assert!(select_steady_state(&below, Branch::Lower).is_err());
        assert_eq!(select_steady_state(&below, Branch::Trivial).unwrap().branch, Branch::Trivial);
    }

    #[test]
    fn refinement_improves_on_grid() {
        let eval = VlfEvaluator::new(&params(0.4, EpsilonSpec::RelativeToLower(1.2)), Branch::Lower, SweepOptions::default())
            .unwrap();
        let q = VlfLabel::I2MinusP1.inequality();
        let coarse = log_grid(0.01, 100.0, 20)
            .into_iter()
            .map(|w| eval.evaluate(&q, w).unwrap().value)
            .fold(f64::INFINITY, f64::min);
        let refined = eval.min_over_frequency(&q, 0.01, 100.0, 20).unwrap();
        assert!(refined.value <= coarse);
        // the located minimum is a local minimum in omega
        let w = refined.omega / 0.03;
        assert!(w > 0.02 && w < 50.0, "{w}");
        for dw in [-1e-3, 1e-3] {
            assert!(eval.evaluate(&q, w * (1.0 + dw)).unwrap().value >= refined.value - 1e-12);
        }
    }

    #[test]
    fn extended_precision_agrees_with_plain_pipeline() {
        use crate::spectra::quadrature_spectrum;
        let p = params(0.4, EpsilonSpec::RelativeToLower(1.2));
        let eval = VlfEvaluator::new(&p, Branch::Lower, SweepOptions::default()).unwrap();
        for w in [0.05, 0.5, 5.0] {
            let plain = quadrature_spectrum(&eval.model, &p, w * 0.03).unwrap();
            assert!((plain.v_out - eval.spectrum(w).unwrap().v_out).amax() < 1e-10 * plain.v_out.amax());
            for q in &VlfInequality::ALL {
                let a = optimize_gains(q, &plain).unwrap();
                let b = eval.evaluate(q, w).unwrap();
                assert!((a.value - b.value).abs() < 1e-9, "{} {} {}", q.label, a.value, b.value);
            }
        }
    }

    #[test]
    fn grids() {
        let g = log_grid(0.01, 100.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[4], 100.0);
        assert!((g[2] - 1.0).abs() < 1e-12);
        assert_eq!(linear_grid(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn optimum_is_first_order_stationary(
            ratio in 1.05f64..1.95, omega in 0.02f64..20.0, which in 0usize..5, k in 0usize..4, sign in prop::bool::ANY,
        ) {
            let p = params(0.4, EpsilonSpec::RelativeToLower(ratio));
            let eval = VlfEvaluator::new(&p, Branch::Lower, SweepOptions::default()).unwrap();
            let q = VlfInequality::ALL[which];
            let spec = eval.spectrum(omega).unwrap();
            let best = optimize_gains(&q, &spec).unwrap();
            prop_assert!(best.value >= 0.0);
            let mut g = best.gains.clone();
            g[k] += if sign { 1e-4 } else { -1e-4 };
            let moved = evaluate_inequality(&q, &spec, &g).unwrap();
            prop_assert!(moved >= best.value - 1e-9 * best.value.max(1.0));
            let unoptimized = evaluate_inequality(&q, &spec, &[0.0; 4]).unwrap();
            prop_assert!(best.value <= unoptimized + 1e-12 * unoptimized);
        }
    }
}

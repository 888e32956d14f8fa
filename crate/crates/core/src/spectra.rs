//! Intracavity spectral matrix, its quadrature form and the extracavity
//! (measured) spectra.

use nalgebra::SMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linearization::{CMat, FluctuationModel, RMat};
use crate::params::{Mode, SystemParams, N_MODES, STATE_DIM};
use crate::quadrature::{self, Integrand};

/// Reciprocal condition estimate below which `M + i omega I` is rejected.
pub(crate) const MIN_RCOND: f64 = 1e-14;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn lu_solve(a: CMat, rhs: &CMat) -> Result<CMat> {
    let lu = a.lu();
    let u = lu.u();
    let diag = u.diagonal().map(|z| z.norm());
    let rcond = diag.min() / diag.max().max(f64::MIN_POSITIVE);
    if !(rcond > MIN_RCOND) {
        return Err(Error::Conditioning(format!("M + i omega I has pivot ratio {rcond:e}")));
    }
    lu.solve(rhs).ok_or_else(|| Error::Conditioning("M + i omega I is singular".into()))
}

fn shifted(m: &RMat, omega: f64) -> CMat {
    let mut a = m.map(c);
    for i in 0..STATE_DIM {
        a[(i, i)] += Complex64::new(0.0, omega);
    }
    a
}

/// `S(omega) = (M + i omega)^-1 D (M^T - i omega)^-1` for explicit matrices,
/// by two LU solves.
pub fn spectral_matrix_of(m: &RMat, d: &CMat, omega: f64) -> Result<CMat> {
    let left = lu_solve(shifted(m, omega), d)?;
    // S^T = (M - i omega)^-1 left^T
    let st = lu_solve(shifted(m, -omega), &left.transpose())?;
    Ok(st.transpose())
}

/// Intracavity spectral matrix of a stable (or phase-neutral) model.
pub fn spectral_matrix(model: &FluctuationModel, omega: f64) -> Result<CMat> {
    model.require_stationary()?;
    spectral_matrix_of(&model.m, &model.d, omega)
}

/// [`spectral_matrix`] without the stability precondition. The result is a
/// formal continuation with no stationary-process meaning when `M` has
/// eigenvalues with negative real part.
pub fn formal_spectral_matrix(model: &FluctuationModel, omega: f64) -> Result<CMat> {
    spectral_matrix_of(&model.m, &model.d, omega)
}

/// `T` mapping `(alpha, alpha*)` to `(X, Y)` quadratures.
pub fn quadrature_basis() -> CMat {
    let mut t = CMat::zeros();
    for k in 0..N_MODES {
        t[(k, k)] = c(1.0);
        t[(k, k + N_MODES)] = c(1.0);
        t[(k + N_MODES, k)] = Complex64::new(0.0, -1.0);
        t[(k + N_MODES, k + N_MODES)] = Complex64::new(0.0, 1.0);
    }
    t
}

/// Quadrature-basis spectrum together with what was discarded to make it real.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureIntra {
    pub v: RMat,
    /// Largest entry of the anti-Hermitian part of `T S T^T`.
    pub residue: f64,
    /// Largest imaginary entry of the Hermitian part, odd in omega.
    pub discarded_imaginary: f64,
}

/// `V = Re[(T S T^T + (T S T^T)^dagger) / 2]`, checking that the
/// anti-Hermitian part is at rounding level.
pub fn quadrature_transform(s: &CMat) -> Result<QuadratureIntra> {
    let t = quadrature_basis();
    let raw = t * s * t.transpose();
    let adj = raw.adjoint();
    let herm = (raw + adj) * c(0.5);
    let residue = ((raw - adj) * c(0.5)).camax();
    let scale = raw.camax();
    let tolerance = 1e-9 * (1.0 + scale);
    if !(residue <= tolerance) {
        return Err(Error::BasisConsistency { residue, tolerance });
    }
    let discarded_imaginary = herm.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let v = herm.map(|z| z.re);
    Ok(QuadratureIntra { v: (v + v.transpose()) * 0.5, residue, discarded_imaginary })
}

/// Damping rate of each quadrature row, X block then Y block.
pub fn quadrature_rates(params: &SystemParams) -> SMatrix<f64, STATE_DIM, 1> {
    SMatrix::from_fn(|r, _| params.gamma(Mode::ALL[r % N_MODES]))
}

/// Extracavity quadrature covariance at one analysis frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpectrum {
    /// Absolute analysis frequency.
    pub omega: f64,
    /// Rows and columns `X_p2 .. X_s2, Y_p2 .. Y_s2`.
    pub v_out: RMat,
}

impl QuadratureSpectrum {
    /// The shot-noise (vacuum) spectrum.
    pub fn vacuum(omega: f64) -> Self {
        QuadratureSpectrum { omega, v_out: RMat::identity() }
    }

    /// Largest `|v - v^T|` entry.
    pub fn asymmetry(&self) -> f64 {
        (self.v_out - self.v_out.transpose()).amax()
    }

    /// Largest entry of the X-Y cross block.
    pub fn xy_coupling(&self) -> f64 {
        self.v_out.fixed_view::<N_MODES, N_MODES>(0, N_MODES).amax()
    }
}

/// `v_out = I + 2 G^(1/2) v_intra G^(1/2)`.
pub fn output_spectrum(v_intra: &RMat, params: &SystemParams, omega: f64) -> QuadratureSpectrum {
    let g = quadrature_rates(params).map(f64::sqrt);
    let scaled = RMat::from_fn(|i, j| 2.0 * g[i] * v_intra[(i, j)] * g[j]);
    QuadratureSpectrum { omega, v_out: RMat::identity() + scaled }
}

/// Full pipeline at one frequency for a stationary model.
pub fn quadrature_spectrum(model: &FluctuationModel, params: &SystemParams, omega: f64) -> Result<QuadratureSpectrum> {
    let s = spectral_matrix(model, omega)?;
    Ok(output_spectrum(&quadrature_transform(&s)?.v, params, omega))
}

/// Full pipeline at one frequency without the stability precondition.
pub fn formal_quadrature_spectrum(model: &FluctuationModel, params: &SystemParams, omega: f64) -> Result<QuadratureSpectrum> {
    let s = formal_spectral_matrix(model, omega)?;
    Ok(output_spectrum(&quadrature_transform(&s)?.v, params, omega))
}

impl Integrand for CMat {
    fn zero() -> Self {
        CMat::zeros()
    }
    fn scale(self, k: f64) -> Self {
        self * c(k)
    }
    fn size(&self) -> f64 {
        self.camax()
    }
}

/// `(1/2 pi) int S(omega) d omega` over the damped subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedSpectrum {
    /// Quadrature over `[-W, W]` plus the analytic tail beyond `W`.
    pub sigma: CMat,
    /// The `[-W, W]` part alone.
    pub truncated: CMat,
    /// Analytic tail `(1/pi) [D/W - C/(3 W^3)]` with `C = M^2 D - M D M^T + D M^T^2`.
    pub tail: CMat,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Integrates the spectral matrix of the damped part of `model` up to the
/// cutoff `w` and adds the large-frequency tail in closed form.
pub fn integrated_spectrum(model: &FluctuationModel, w: f64, abs_tol: f64) -> Result<IntegratedSpectrum> {
    model.require_stationary()?;
    if !(w > 0.0) {
        return Err(Error::InvalidParams(format!("integration cutoff must be positive, got {w}")));
    }
    let (m, d) = model.damped_part();
    // check once that every frequency is admissible before integrating
    spectral_matrix_of(&m, &d, 0.0)?;
    let eig_scale = m.camax();
    let mut breaks = vec![0.0];
    let mut x = 0.01 * eig_scale;
    while x < w {
        breaks.push(x);
        x *= 4.0;
    }
    breaks.push(w);
    let mut points: Vec<f64> = breaks.iter().rev().map(|b| -b).collect();
    points.extend_from_slice(&breaks[1..]);
    let integral = quadrature::integrate(
        |omega| spectral_matrix_of(&m, &d, omega).unwrap_or_else(|_| CMat::from_element(c(f64::NAN))),
        &points,
        abs_tol * 2.0 * std::f64::consts::PI,
        20_000,
    );
    let truncated = integral.value / c(2.0 * std::f64::consts::PI);
    if truncated.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite spectral matrix inside the integration range".into()));
    }
    let mc = m.map(c);
    let mt = mc.transpose();
    let curvature = mc * mc * d - mc * d * mt + d * mt * mt;
    let tail = (d / c(w) - curvature / c(3.0 * w * w * w)) / c(std::f64::consts::PI);
    Ok(IntegratedSpectrum {
        sigma: truncated + tail,
        truncated,
        tail,
        error_estimate: integral.error / (2.0 * std::f64::consts::PI),
        evaluations: integral.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearization::stationary_covariance;
    use crate::params::{Coupling, Damping, EpsilonSpec};
    use crate::steady_state::analytic_steady_states;

    fn model(k2: f64, spec: EpsilonSpec) -> (SystemParams, FluctuationModel) {
        let p = SystemParams::with_pump(Damping::uniform(0.03), Coupling::symmetric(1.0, k2), spec).unwrap();
        let ss = analytic_steady_states(&p).unwrap()[0];
        (p, FluctuationModel::new(&p, &ss).unwrap())
    }

    fn fig2() -> (SystemParams, FluctuationModel) {
        model(0.5, EpsilonSpec::RelativeToLower(1.5))
    }

    fn fig3() -> (SystemParams, FluctuationModel) {
        model(0.4, EpsilonSpec::RelativeToLower(1.2))
    }

    fn swap() -> RMat {
        RMat::from_fn(|r, col| {
            let target = Mode::ALL[r % N_MODES].partner().index() + (r / N_MODES) * N_MODES;
            if col == target {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_diffusion_gives_zero_spectrum_and_vacuum_output() {
        let (p, m) = fig2();
        let quiet = m.without_diffusion();
        for omega in [0.003, 0.03, 3.0] {
            let s = spectral_matrix(&quiet, omega).unwrap();
            assert_eq!(s, CMat::zeros());
            let q = quadrature_spectrum(&quiet, &p, omega).unwrap();
            assert_eq!(q.v_out, RMat::identity());
        }
    }

    #[test]
    fn scalar_analogue() {
        let g = 0.7;
        let d = 0.3;
        let model = FluctuationModel::from_matrices(RMat::identity() * g, CMat::identity() * c(d)).unwrap();
        for omega in [0.0, 0.5, 4.0] {
            let s = spectral_matrix(&model, omega).unwrap();
            let expected = d / (g * g + omega * omega);
            assert!((s - CMat::identity() * c(expected)).camax() < 1e-15);
        }
    }

    #[test]
    fn high_frequency_decay() {
        let (p, m) = fig2();
        let omega = 1e6 * p.gamma_a();
        let s = spectral_matrix(&m, omega).unwrap();
        // leading order is D / omega^2, i.e. 1.11e-9 ||D|| here
        let ratio = s.camax() * omega * omega / m.d.camax();
        assert!((ratio - 1.0).abs() < 1e-6, "{ratio}");
        assert!((s * c(omega * omega) - m.d).camax() < 1e-6 * m.d.camax());
    }

    #[test]
    fn shot_noise_limit_at_large_frequency() {
        for (p, m) in [fig2(), fig3()] {
            let q = quadrature_spectrum(&m, &p, 1e3 * p.gamma_a()).unwrap();
            assert!((q.v_out - RMat::identity()).amax() < 2e-3);
        }
    }

    #[test]
    fn zero_frequency_is_singular_for_phase_neutral_model() {
        let (_, m) = fig3();
        assert!(matches!(spectral_matrix(&m, 0.0), Err(Error::Conditioning(_))));
    }

    #[test]
    fn unstable_model_needs_formal_evaluation() {
        let (p, m) = model(0.4, EpsilonSpec::RelativeToUpper(2.2));
        assert!(matches!(spectral_matrix(&m, 0.03), Err(Error::Unstable { .. })));
        formal_quadrature_spectrum(&m, &p, 0.03).unwrap();
    }

    #[test]
    fn basis_change_is_mode_local() {
        let (i1, s1) = (Mode::I1.index(), Mode::S1.index());
        let mut s = CMat::zeros();
        for (i, j) in [(i1, s1), (s1, i1)] {
            s[(i, j)] = c(0.2);
            s[(i + N_MODES, j + N_MODES)] = c(0.2);
        }
        let v = quadrature_transform(&s).unwrap().v;
        let touches = |k: usize| k % N_MODES == i1 || k % N_MODES == s1;
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                if !(touches(i) && touches(j)) {
                    assert_eq!(v[(i, j)], 0.0, "({i},{j})");
                }
            }
        }
        assert!(v[(i1, s1)] > 0.0);
        assert_eq!(quadrature_transform(&CMat::zeros()).unwrap().v, RMat::zeros());
    }

    #[test]
    fn basis_residue_small_and_xy_block_vanishes() {
        for (p, m) in [fig2(), fig3()] {
            for omega in [0.0003, 0.01, 0.1, 1.0] {
                let s = spectral_matrix(&m, omega).unwrap();
                let q = quadrature_transform(&s).unwrap();
                assert!(q.residue < 1e-9 * (1.0 + q.v.amax()));
                let out = output_spectrum(&q.v, &p, omega);
                assert!(out.xy_coupling() < 1e-9 * (1.0 + out.v_out.amax()));
                assert!(out.v_out.diagonal().iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn output_relation_entrywise() {
        let p = SystemParams::new(Damping { a: 0.1, b: 0.2, c: 0.3 }, Coupling::symmetric(1.0, 0.1), 0.0).unwrap();
        let mut v = RMat::zeros();
        v[(Mode::I1.index(), Mode::I1.index())] = 2.0;
        v[(Mode::P1.index() + N_MODES, Mode::S2.index())] = 5.0;
        let out = output_spectrum(&v, &p, 1.0);
        assert!((out.v_out[(2, 2)] - (1.0 + 2.0 * 0.2 * 2.0)).abs() < 1e-15);
        assert!((out.v_out[(7, 5)] - 2.0 * (0.1f64 * 0.3).sqrt() * 5.0).abs() < 1e-15);
        assert_eq!(output_spectrum(&RMat::zeros(), &p, 1.0).v_out, RMat::identity());
    }

    #[test]
    fn mode_swap_invariance() {
        let (p, m) = model(0.4, EpsilonSpec::RelativeToLower(1.6));
        let pi = swap();
        for omega in [0.003, 0.05, 0.4] {
            let v = quadrature_spectrum(&m, &p, omega).unwrap().v_out;
            let scale = 1.0 + v.amax();
            assert!((pi * v * pi.transpose() - v).amax() < 1e-12 * scale);
        }
    }

    #[test]
    fn combination_variance_matches_alpha_basis() {
        // c^T v_out c against the same combination assembled as a vector on (alpha, alpha*)
        let (p, m) = fig3();
        let omega = 0.04;
        let s = spectral_matrix(&m, omega).unwrap();
        let out = quadrature_spectrum(&m, &p, omega).unwrap();
        let g = quadrature_rates(&p).map(f64::sqrt);
        let coeffs = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, -0.7, 0.0, 0.3, 0.0, 1.0, -1.0];
        let cv = SMatrix::<f64, STATE_DIM, 1>::from_column_slice(&coeffs);
        let direct = (cv.transpose() * out.v_out * cv)[(0, 0)];
        let mut u = SMatrix::<Complex64, STATE_DIM, 1>::zeros();
        for k in 0..N_MODES {
            let (x, y) = (coeffs[k] * g[k], coeffs[k + N_MODES] * g[k]);
            u[k] += c(x) + Complex64::new(0.0, -y);
            u[k + N_MODES] += c(x) + Complex64::new(0.0, y);
        }
        let spectral = (u.transpose() * s * u)[(0, 0)];
        let via_alpha = cv.norm_squared() + 2.0 * spectral.re;
        assert!((direct - via_alpha).abs() < 1e-10, "{direct} vs {via_alpha}");
    }

    #[test]
    fn integrated_spectrum_matches_lyapunov() {
        for (p, m) in [fig2(), fig3()] {
            let sigma = stationary_covariance(&m).unwrap();
            let integ = integrated_spectrum(&m, 1e3 * p.gamma_a(), 1e-9).unwrap();
            let diff = (integ.sigma - sigma).camax();
            assert!(diff < 1e-6, "{diff:e}");
        }
    }
}

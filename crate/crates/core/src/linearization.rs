//! Linearized fluctuations around a steady state: drift matrix, diffusion
//! matrix, eigen-stability and the stationary covariance.
//!
//! Vectors are ordered `(delta alpha, delta alpha*)`, each half in [`Mode`]
//! order, so index `k + 6` is the conjugate of index `k`.

use nalgebra::{DMatrix, DVector, SMatrix, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{Mode, SystemParams, N_MODES, STATE_DIM};
use crate::steady_state::{drift, max_norm, Amplitudes, SteadyState};

pub type RMat = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type CMat = SMatrix<Complex64, STATE_DIM, STATE_DIM>;
type Block = SMatrix<Complex64, N_MODES, N_MODES>;

/// Largest drift residual accepted at a linearization point.
pub const STEADY_STATE_TOLERANCE: f64 = 1e-8;
/// Eigenvalue real parts with magnitude below this are treated as marginal.
pub const MARGINAL_BAND: f64 = 1e-10;
/// Relative singular-value cutoff used to detect the neutral subspace.
const NULLITY_TOL: f64 = 1e-9;

const P2: usize = Mode::P2.index();
const P1: usize = Mode::P1.index();
const I1: usize = Mode::I1.index();
const S1: usize = Mode::S1.index();
const I2: usize = Mode::I2.index();
const S2: usize = Mode::S2.index();

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Holomorphic and antiholomorphic Jacobian blocks of the drift,
/// `a[j][k] = df_j/d alpha_k` and `b[j][k] = df_j/d alpha_k*`.
fn jacobian_blocks(params: &SystemParams, alpha: &Amplitudes) -> (Block, Block) {
    let x = alpha;
    let y: Amplitudes = std::array::from_fn(|i| x[i].conj());
    let (k1, k2, k3) = (params.k1(), params.k2(), params.k3());
    let mut a = Block::zeros();
    let mut b = Block::zeros();

    a[(P2, P2)] = c(-params.gamma_a());
    a[(P2, P1)] = -y[I1] * x[I2] * k2 + y[S2] * x[S1] * k3;
    a[(P2, I1)] = -y[P1] * x[S1] * k1;
    a[(P2, S1)] = -y[P1] * x[I1] * k1 + y[S2] * x[P1] * k3;
    a[(P2, I2)] = -y[I1] * x[P1] * k2;
    b[(P2, P1)] = -x[S1] * x[I1] * k1;
    b[(P2, I1)] = -x[P1] * x[I2] * k2;
    b[(P2, S2)] = x[S1] * x[P1] * k3;

    a[(P1, P1)] = c(-params.gamma_a());
    a[(P1, P2)] = -y[S1] * x[S2] * k3 + y[I2] * x[I1] * k2;
    a[(P1, S1)] = -y[P2] * x[I1] * k1;
    a[(P1, I1)] = -y[P2] * x[S1] * k1 + y[I2] * x[P2] * k2;
    a[(P1, S2)] = -y[S1] * x[P2] * k3;
    b[(P1, P2)] = -x[S1] * x[I1] * k1;
    b[(P1, S1)] = -x[P2] * x[S2] * k3;
    b[(P1, I2)] = x[I1] * x[P2] * k2;

    a[(I1, I1)] = c(-params.gamma_b());
    a[(I1, P1)] = y[S1] * x[P2] * k1 - y[P2] * x[I2] * k2;
    a[(I1, P2)] = y[S1] * x[P1] * k1;
    a[(I1, I2)] = -y[P2] * x[P1] * k2;
    b[(I1, S1)] = x[P1] * x[P2] * k1;
    b[(I1, P2)] = -x[P1] * x[I2] * k2;

    a[(S1, S1)] = c(-params.gamma_b());
    a[(S1, P1)] = y[I1] * x[P2] * k1;
    a[(S1, P2)] = y[I1] * x[P1] * k1 - y[P1] * x[S2] * k3;
    a[(S1, S2)] = -y[P1] * x[P2] * k3;
    b[(S1, I1)] = x[P1] * x[P2] * k1;
    b[(S1, P1)] = -x[P2] * x[S2] * k3;

    a[(I2, I2)] = c(-params.gamma_c());
    a[(I2, P2)] = y[P1] * x[I1] * k2;
    a[(I2, I1)] = y[P1] * x[P2] * k2;
    b[(I2, P1)] = x[P2] * x[I1] * k2;

    a[(S2, S2)] = c(-params.gamma_c());
    a[(S2, P1)] = y[P2] * x[S1] * k3;
    a[(S2, S1)] = y[P2] * x[P1] * k3;
    b[(S2, P2)] = x[P1] * x[S1] * k3;

    (a, b)
}

fn assemble(a: &Block, b: &Block) -> CMat {
    let mut j = CMat::zeros();
    j.fixed_view_mut::<N_MODES, N_MODES>(0, 0).copy_from(a);
    j.fixed_view_mut::<N_MODES, N_MODES>(0, N_MODES).copy_from(b);
    j.fixed_view_mut::<N_MODES, N_MODES>(N_MODES, 0).copy_from(&b.map(|z| z.conj()));
    j.fixed_view_mut::<N_MODES, N_MODES>(N_MODES, N_MODES).copy_from(&a.map(|z| z.conj()));
    j
}

/// Drift matrix `M = -J` at an arbitrary (possibly complex) amplitude vector.
pub fn drift_jacobian(params: &SystemParams, alpha: &Amplitudes) -> CMat {
    let (a, b) = jacobian_blocks(params, alpha);
    -assemble(&a, &b)
}

/// `M = -J` by central differences of [`drift`] with step `h`, using
/// Wirtinger derivatives in each real direction.
pub fn finite_difference_drift_matrix(params: &SystemParams, alpha: &Amplitudes, h: f64) -> CMat {
    let mut a = Block::zeros();
    let mut b = Block::zeros();
    for k in 0..N_MODES {
        let shifted = |dz: Complex64| {
            let mut v = *alpha;
            v[k] += dz;
            drift(params, &v)
        };
        let (fxp, fxm) = (shifted(c(h)), shifted(c(-h)));
        let (fyp, fym) = (shifted(Complex64::new(0.0, h)), shifted(Complex64::new(0.0, -h)));
        for j in 0..N_MODES {
            let dx = (fxp[j] - fxm[j]) / (2.0 * h);
            let dy = (fyp[j] - fym[j]) / (2.0 * h);
            let i = Complex64::i();
            a[(j, k)] = (dx - i * dy) * 0.5;
            b[(j, k)] = (dx + i * dy) * 0.5;
        }
    }
    -assemble(&a, &b)
}

fn check_residual(params: &SystemParams, ss: &SteadyState) -> Result<()> {
    let residual = max_norm(&drift(params, &ss.complex_amplitudes()));
    if !(residual < STEADY_STATE_TOLERANCE) {
        return Err(Error::StaleSteadyState { residual, tolerance: STEADY_STATE_TOLERANCE });
    }
    Ok(())
}

/// Real drift matrix at a real steady state.
pub fn build_drift_matrix(params: &SystemParams, ss: &SteadyState) -> Result<RMat> {
    check_residual(params, ss)?;
    Ok(drift_jacobian(params, &ss.complex_amplitudes()).map(|z| z.re))
}

/// The drift matrix in the closed block form `[[m1, m2], [m2, m1]]` written
/// in terms of the symmetric amplitudes `A_a, A_b, A_c`.
pub fn symmetric_block_drift_matrix(params: &SystemParams, ss: &SteadyState) -> RMat {
    let (ga, gb, gc) = (params.gamma_a(), params.gamma_b(), params.gamma_c());
    let (k1, k2) = (params.k1(), params.k2());
    let (aa, ab, ac) = (ss.a_a(), ss.a_b(), ss.a_c());
    let x = k1 * aa * ab;
    let y = k2 * aa * ac;
    let z = k2 * aa * ab;
    let w = k2 * aa * aa;
    #[rustfmt::skip]
    let m1 = SMatrix::<f64, 6, 6>::from_row_slice(&[
        ga,      0.0,     x,       x - y,   z,   0.0,
        0.0,     ga,      x - y,   x,       0.0, z,
        -x,      -x + y,  gb,      0.0,     w,   0.0,
        -x + y,  -x,      0.0,     gb,      0.0, w,
        -z,      0.0,     -w,      0.0,     gc,  0.0,
        0.0,     -z,      0.0,     -w,      0.0, gc,
    ]);
    let q = k1 * ab * ab;
    let r = k1 * aa * aa;
    #[rustfmt::skip]
    let m2 = SMatrix::<f64, 6, 6>::from_row_slice(&[
        0.0, q,   y,   0.0, 0.0, -z,
        q,   0.0, 0.0, y,   -z,  0.0,
        y,   0.0, 0.0, -r,  0.0, 0.0,
        0.0, y,   -r,  0.0, 0.0, 0.0,
        0.0, -z,  0.0, 0.0, 0.0, 0.0,
        -z,  0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    let mut m = RMat::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&m1);
    m.fixed_view_mut::<6, 6>(0, 6).copy_from(&m2);
    m.fixed_view_mut::<6, 6>(6, 0).copy_from(&m2);
    m.fixed_view_mut::<6, 6>(6, 6).copy_from(&m1);
    m
}

/// An entry where the closed block form differs from the Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub row: usize,
    pub col: usize,
    pub jacobian: f64,
    pub closed_form: f64,
}

/// Entries where [`symmetric_block_drift_matrix`] and [`build_drift_matrix`]
/// disagree by more than `rel_tol` relative to the largest entry.
pub fn drift_matrix_discrepancies(params: &SystemParams, ss: &SteadyState, rel_tol: f64) -> Result<Vec<Discrepancy>> {
    let jac = build_drift_matrix(params, ss)?;
    let closed = symmetric_block_drift_matrix(params, ss);
    let scale = jac.camax().max(closed.camax()).max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    for row in 0..STATE_DIM {
        for col in 0..STATE_DIM {
            let (j, k) = (jac[(row, col)], closed[(row, col)]);
            if (j - k).abs() > rel_tol * scale {
                out.push(Discrepancy { row, col, jacobian: j, closed_form: k });
            }
        }
    }
    Ok(out)
}

/// Nonzero 6x6 block of the diffusion matrix at amplitudes `alpha`.
pub fn diffusion_block(params: &SystemParams, alpha: &Amplitudes) -> Block {
    let x = alpha;
    let (k1, k2, k3) = (params.k1(), params.k2(), params.k3());
    let mut d = Block::zeros();
    let mut set = |i: usize, j: usize, v: Complex64| {
        d[(i, j)] = v;
        d[(j, i)] = v;
    };
    set(P2, P1, -x[S1] * x[I1] * k1);
    set(P2, I1, -x[I2] * x[P1] * k2);
    set(P2, S2, x[S1] * x[P1] * k3);
    set(P1, S1, -x[S2] * x[P2] * k3);
    set(P1, I2, x[I1] * x[P2] * k2);
    set(I1, S1, x[P1] * x[P2] * k1);
    d
}

/// Full diffusion matrix `diag(d, d*)` at a steady state.
pub fn build_diffusion_matrix(params: &SystemParams, ss: &SteadyState) -> Result<CMat> {
    check_residual(params, ss)?;
    Ok(diffusion_matrix_at(params, &ss.complex_amplitudes()))
}

pub fn diffusion_matrix_at(params: &SystemParams, alpha: &Amplitudes) -> CMat {
    let d = diffusion_block(params, alpha);
    let mut full = CMat::zeros();
    full.fixed_view_mut::<N_MODES, N_MODES>(0, 0).copy_from(&d);
    full.fixed_view_mut::<N_MODES, N_MODES>(N_MODES, N_MODES).copy_from(&d.map(|z| z.conj()));
    full
}

/// Overall judgement on the eigenvalues of `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Every eigenvalue has real part above the marginal band.
    Stable,
    /// The smallest real part lies inside the marginal band.
    Indeterminate,
    /// Some eigenvalue has real part below the marginal band.
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Eigenvalues of `M`, sorted by real part.
    pub eigenvalues: Vec<Complex64>,
    /// Smallest real part.
    pub margin: f64,
    /// `margin > 0`, with no tolerance band.
    pub stable: bool,
    /// Dimension of the generalized null space of `M`.
    pub neutral_dim: usize,
    /// Smallest real part once the `neutral_dim` eigenvalues nearest zero are removed.
    pub damped_margin: f64,
    pub verdict: Verdict,
}

impl StabilityReport {
    /// True when every direction outside the neutral subspace decays.
    pub fn damped_modes_stable(&self) -> bool {
        self.damped_margin > MARGINAL_BAND
    }
}

/// Spectral projector onto the generalized null space of `M` (rank `dim`),
/// built from right and left null vectors of `M^k`.
fn neutral_projector(m: &RMat) -> Result<Option<(usize, RMat)>> {
    let norm = m.norm().max(f64::MIN_POSITIVE);
    let nullity = |p: &RMat, scale: f64| -> (usize, SVD<f64, nalgebra::Const<12>, nalgebra::Const<12>>) {
        let svd = p.svd(true, true);
        let n = svd.singular_values.iter().filter(|&&s| s <= NULLITY_TOL * scale).count();
        (n, svd)
    };
    let mut power = *m;
    let mut scale = norm;
    let (mut dim, mut svd) = nullity(&power, scale);
    if dim == 0 {
        return Ok(None);
    }
    for _ in 1..STATE_DIM {
        let next_power = power * m;
        let next_scale = scale * norm;
        let (next_dim, next_svd) = nullity(&next_power, next_scale);
        if next_dim == dim {
            break;
        }
        power = next_power;
        scale = next_scale;
        dim = next_dim;
        svd = next_svd;
    }
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD without U".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD without V".into()))?;
    let mut order: Vec<usize> = (0..STATE_DIM).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let null = &order[..dim];
    let right = DMatrix::from_fn(STATE_DIM, dim, |r, c| v_t[(null[c], r)]);
    let left = DMatrix::from_fn(STATE_DIM, dim, |r, c| u[(r, null[c])]);
    let overlap = left.transpose() * &right;
    let inv = overlap
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("left and right neutral vectors are orthogonal".into()))?;
    let q = &right * inv * left.transpose();
    Ok(Some((dim, RMat::from_fn(|r, c| q[(r, c)]))))
}

fn eigenvalues(m: &RMat) -> Result<Vec<Complex64>> {
    let schur = Schur::try_new(*m, 1e-15, 10_000).ok_or_else(|| {
        let svd = m.singular_values();
        Error::Numerical(format!(
            "eigensolver did not converge (singular values {:e}..{:e})",
            svd.min(),
            svd.max()
        ))
    })?;
    let mut ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Eigen-stability of a drift matrix.
pub fn stability(m: &RMat) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues(m)?;
    let margin = eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let neutral_dim = neutral_projector(m)?.map_or(0, |(dim, _)| dim);
    let mut by_size = eigenvalues.clone();
    by_size.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let damped_margin = by_size[neutral_dim..].iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let verdict = if margin.abs() <= MARGINAL_BAND || (neutral_dim > 0 && damped_margin > MARGINAL_BAND) {
        Verdict::Indeterminate
    } else if margin > 0.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    Ok(StabilityReport { eigenvalues, margin, stable: margin > 0.0, neutral_dim, damped_margin, verdict })
}

/// Splitting of the state space into a neutral (undamped) part and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralSubspace {
    pub dim: usize,
    /// Projector onto the damped subspace, commuting with `M`.
    pub projector: RMat,
    /// `M` with the neutral eigenvalues moved to a positive rate; agrees with `M` on the damped subspace.
    pub regularized: RMat,
}

/// The linear Ornstein–Uhlenbeck model of the fluctuations.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationModel {
    pub m: RMat,
    pub d: CMat,
    pub steady_state: Option<SteadyState>,
    pub stability: StabilityReport,
    pub neutral: Option<NeutralSubspace>,
}

impl FluctuationModel {
    /// Linearizes around `ss`.
    pub fn new(params: &SystemParams, ss: &SteadyState) -> Result<Self> {
        let m = build_drift_matrix(params, ss)?;
        let d = build_diffusion_matrix(params, ss)?;
        let mut model = Self::from_matrices(m, d)?;
        model.steady_state = Some(*ss);
        Ok(model)
    }

    /// A model from explicit matrices; `d` must be symmetric.
    pub fn from_matrices(m: RMat, d: CMat) -> Result<Self> {
        let asym = (d - d.transpose()).camax();
        if asym > 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        let stability = stability(&m)?;
        let neutral = match neutral_projector(&m)? {
            Some((dim, q)) => {
                let shift = m.camax().max(f64::MIN_POSITIVE);
                Some(NeutralSubspace { dim, projector: RMat::identity() - q, regularized: m + q * shift })
            }
            None => None,
        };
        Ok(FluctuationModel { m, d, steady_state: None, stability, neutral })
    }

    /// Same model with the noise switched off.
    pub fn without_diffusion(&self) -> Self {
        FluctuationModel { d: CMat::zeros(), ..self.clone() }
    }

    /// Errors unless the model is usable for stationary statistics, either
    /// fully stable or stable away from a separable neutral subspace.
    pub fn require_stationary(&self) -> Result<()> {
        let s = &self.stability;
        match s.verdict {
            Verdict::Stable => Ok(()),
            Verdict::Unstable => Err(Error::Unstable { margin: s.margin }),
            Verdict::Indeterminate if self.neutral.is_some() && s.damped_modes_stable() => Ok(()),
            Verdict::Indeterminate if s.damped_margin < -MARGINAL_BAND => Err(Error::Unstable { margin: s.damped_margin }),
            Verdict::Indeterminate => Err(Error::Marginal { margin: s.margin }),
        }
    }

    /// Drift and diffusion of the fluctuations restricted to the damped
    /// subspace. Equal to `(m, d)` when there is no neutral subspace.
    pub fn damped_part(&self) -> (RMat, CMat) {
        match &self.neutral {
            None => (self.m, self.d),
            Some(n) => {
                let p = n.projector.map(c);
                (n.regularized, p * self.d * p.transpose())
            }
        }
    }
}

/// Solves `A X + X A^T = Q` for real `A` by a dense Kronecker-product LU.
pub fn solve_lyapunov(a: &RMat, q: &CMat) -> Result<CMat> {
    let n = STATE_DIM;
    let kron = DMatrix::from_fn(n * n, n * n, |row, col| {
        let (i, j) = (row % n, row / n);
        let (k, l) = (col % n, col / n);
        let mut v = 0.0;
        if j == l {
            v += a[(i, k)];
        }
        if i == k {
            v += a[(j, l)];
        }
        v
    });
    let lu = kron.lu();
    let solve = |rhs: DVector<f64>| {
        lu.solve(&rhs).ok_or_else(|| Error::Conditioning("Lyapunov operator is singular".into()))
    };
    let re = solve(DVector::from_iterator(n * n, q.iter().map(|z| z.re)))?;
    let im = solve(DVector::from_iterator(n * n, q.iter().map(|z| z.im)))?;
    let x = CMat::from_fn(|i, j| Complex64::new(re[i + n * j], im[i + n * j]));
    Ok((x + x.transpose()) * c(0.5))
}

/// Stationary covariance `Sigma` with `M Sigma + Sigma M^T = D`.
///
/// When `M` has a neutral subspace (a free phase, say), the covariance of
/// the fluctuations projected onto the damped subspace is returned instead.
pub fn stationary_covariance(model: &FluctuationModel) -> Result<CMat> {
    model.require_stationary()?;
    let (m, d) = model.damped_part();
    solve_lyapunov(&m, &d)
}

//! Monte-Carlo check of the linearized fluctuations: factor the diffusion
//! matrix, integrate the Ornstein–Uhlenbeck process by Euler–Maruyama and
//! estimate its covariance and spectrum from sample paths.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linearization::{CMat, FluctuationModel, RMat};
use crate::params::STATE_DIM;

const N: usize = STATE_DIM;
type State = SMatrix<Complex64, N, 1>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// A matrix `b` with `b b^T = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFactor {
    pub b: CMat,
    /// `max |b b^T - d|`.
    pub residual: f64,
}

/// Factors a complex symmetric matrix as `B B^T` through its Takagi
/// decomposition `D = U diag(sigma) U^T`, `B = U diag(sqrt(sigma))`.
///
/// For `D = A + iB` the Takagi vectors `u = x + iy` solve
/// `[[A, B], [B, -A]] (x, y) = sigma (x, y)`, a real symmetric eigenproblem
/// whose positive eigenvalues are the Takagi values.
pub fn factor_diffusion(d: &CMat) -> Result<NoiseFactor> {
    let scale = d.camax();
    let asym = (d - d.transpose()).camax();
    if asym > 1e-14 * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::NotSymmetric(asym));
    }
    let mut b = CMat::zeros();
    if scale > 0.0 {
        let h = DMatrix::from_fn(2 * N, 2 * N, |i, j| {
            let z = d[(i % N, j % N)];
            match (i < N, j < N) {
                (true, true) => z.re,
                (false, false) => -z.re,
                _ => z.im,
            }
        });
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..2 * N).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let kept = order.into_iter().take_while(|&k| eig.eigenvalues[k] > 1e-13 * scale).take(N);
        for (col, k) in kept.enumerate() {
            let v = eig.eigenvectors.column(k);
            let root = eig.eigenvalues[k].sqrt();
            for i in 0..N {
                b[(i, col)] = Complex64::new(v[i], v[i + N]) * root;
            }
        }
    }
    let residual = (b * b.transpose() - d).camax();
    if !(residual < 1e-10 * (1.0 + scale)) {
        return Err(Error::Numerical(format!("diffusion factor residual {residual:e}")));
    }
    Ok(NoiseFactor { b, residual })
}

/// Time step `0.01 / max |Re lambda(M)|`.
pub fn default_dt(m: &RMat) -> Result<f64> {
    let ev = m.complex_eigenvalues();
    let rate = ev.iter().fold(0.0f64, |a, z| a.max(z.re.abs()));
    if !(rate > 0.0) {
        return Err(Error::Numerical("drift matrix has no decaying direction".into()));
    }
    Ok(0.01 / rate)
}

fn step_limit(m: &RMat) -> f64 {
    let ev = m.complex_eigenvalues();
    0.1 / ev.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

/// Settings of an Ornstein–Uhlenbeck simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    /// Time step; `None` selects [`default_dt`].
    pub dt: Option<f64>,
    /// Samples kept per path, after burn-in.
    pub steps: usize,
    /// Steps discarded at the start of each path.
    pub burn_in: usize,
    pub n_paths: usize,
    pub seed: u64,
}

/// Drift, noise factor and step actually used for the simulation.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub m: RMat,
    pub b: CMat,
    pub dt: f64,
}

impl SimulationSetup {
    /// Prepares the damped part of `model` for simulation. With a neutral
    /// subspace the noise is projected onto the damped subspace, so the
    /// simulated process is stationary.
    pub fn new(model: &FluctuationModel, factor: &NoiseFactor, dt: Option<f64>) -> Result<Self> {
        model.require_stationary()?;
        let (m, _) = model.damped_part();
        let b = match &model.neutral {
            Some(n) => n.projector.map(c) * factor.b,
            None => factor.b,
        };
        let dt = match dt {
            Some(dt) => dt,
            None => default_dt(&m)?,
        };
        let limit = step_limit(&m);
        if !(dt > 0.0 && dt < limit) {
            return Err(Error::StepSize { dt, limit });
        }
        Ok(SimulationSetup { m, b, dt })
    }

    /// Runs one path, handing each retained sample to `sink`.
    fn run_path<F: FnMut(usize, &State)>(&self, cfg: &SimulationConfig, path: usize, mut sink: F) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        let drift = RMat::identity() - self.m * self.dt;
        let drift = drift.map(c);
        let noise = self.b * c(self.dt.sqrt());
        let mut x = State::zeros();
        let mut xi = SMatrix::<Complex64, N, 1>::zeros();
        for n in 0..cfg.burn_in + cfg.steps {
            for k in 0..N {
                let z: f64 = StandardNormal.sample(&mut rng);
                xi[k] = c(z);
            }
            x = drift * x + noise * xi;
            if n >= cfg.burn_in {
                sink(n - cfg.burn_in, &x);
            }
        }
    }
}

/// Stored sample paths.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub paths: Vec<Vec<[Complex64; N]>>,
    pub dt: f64,
    pub seed: u64,
    pub count: usize,
}

/// Simulates `n_paths` independent paths of `dx = -M x dt + B dW`, each with
/// its own random stream derived from `(seed, path index)`.
pub fn simulate_ou(model: &FluctuationModel, factor: &NoiseFactor, cfg: &SimulationConfig) -> Result<TrajectoryEnsemble> {
    let setup = SimulationSetup::new(model, factor, cfg.dt)?;
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut out = Vec::with_capacity(cfg.steps);
            setup.run_path(cfg, p, |_, x| out.push(std::array::from_fn(|i| x[i])));
            out
        })
        .collect();
    Ok(TrajectoryEnsemble { paths, dt: setup.dt, seed: cfg.seed, count: cfg.n_paths })
}

/// A matrix estimate with per-entry standard errors of real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub mean: CMat,
    pub se_re: RMat,
    pub se_im: RMat,
    pub samples: usize,
}

impl MatrixEstimate {
    fn from_samples(samples: &[CMat]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().fold(CMat::zeros(), |a, s| a + s) / c(n);
        let mut var_re = RMat::zeros();
        let mut var_im = RMat::zeros();
        for s in samples {
            let d = s - mean;
            var_re += d.map(|z| z.re * z.re);
            var_im += d.map(|z| z.im * z.im);
        }
        let denom = (n - 1.0).max(1.0) * n;
        MatrixEstimate {
            mean,
            se_re: var_re.map(|v| (v / denom).sqrt()),
            se_im: var_im.map(|v| (v / denom).sqrt()),
            samples: samples.len(),
        }
    }

    /// Compares against `reference` entry by entry on the upper triangle.
    pub fn compare(&self, reference: &CMat, sigmas: f64) -> Agreement {
        let mut checked = 0;
        let mut outside = 0;
        let mut max_z = 0.0f64;
        for i in 0..N {
            for j in i..N {
                let diff = self.mean[(i, j)] - reference[(i, j)];
                for (delta, se) in [(diff.re, self.se_re[(i, j)]), (diff.im, self.se_im[(i, j)])] {
                    // structurally zero on both sides
                    if se == 0.0 && delta == 0.0 {
                        continue;
                    }
                    checked += 1;
                    let z = delta.abs() / se;
                    max_z = max_z.max(z);
                    if !(delta.abs() <= sigmas * se) {
                        outside += 1;
                    }
                }
            }
        }
        Agreement { checked, outside, max_z, sigmas }
    }
}

/// Result of an entrywise comparison in units of standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub checked: usize,
    pub outside: usize,
    pub max_z: f64,
    pub sigmas: f64,
}

impl Agreement {
    pub fn all_within(&self) -> bool {
        self.outside == 0
    }

    pub fn merge(self, other: Agreement) -> Agreement {
        Agreement {
            checked: self.checked + other.checked,
            outside: self.outside + other.outside,
            max_z: self.max_z.max(other.max_z),
            sigmas: self.sigmas,
        }
    }
}

fn outer(x: &State) -> CMat {
    x * x.transpose()
}

/// Time-averaged `x x^T` per path, then mean and standard error across paths.
pub fn estimate_covariance(ensemble: &TrajectoryEnsemble) -> MatrixEstimate {
    let per_path: Vec<CMat> = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let sum = path.iter().fold(CMat::zeros(), |a, x| a + outer(&State::from_column_slice(x)));
            sum / c(path.len().max(1) as f64)
        })
        .collect();
    MatrixEstimate::from_samples(&per_path)
}

/// [`estimate_covariance`] without storing the paths.
pub fn simulate_covariance(model: &FluctuationModel, factor: &NoiseFactor, cfg: &SimulationConfig) -> Result<MatrixEstimate> {
    let setup = SimulationSetup::new(model, factor, cfg.dt)?;
    let per_path: Vec<CMat> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut sum = CMat::zeros();
            setup.run_path(cfg, p, |_, x| sum += outer(x));
            sum / c(cfg.steps.max(1) as f64)
        })
        .collect();
    Ok(MatrixEstimate::from_samples(&per_path))
}

/// Welch-style spectral estimator over Hann-windowed segments, evaluated by
/// direct Fourier sums at the requested frequencies.
struct SegmentAccumulator<'a> {
    omegas: &'a [f64],
    dt: f64,
    len: usize,
    window: Vec<f64>,
    norm: f64,
    plus: Vec<State>,
    minus: Vec<State>,
    estimates: Vec<Vec<CMat>>,
}

impl<'a> SegmentAccumulator<'a> {
    fn new(omegas: &'a [f64], dt: f64, len: usize) -> Self {
        let window: Vec<f64> = (0..len).map(|n| (PI * n as f64 / len as f64).sin().powi(2)).collect();
        let norm = dt * window.iter().map(|w| w * w).sum::<f64>();
        SegmentAccumulator {
            omegas,
            dt,
            len,
            window,
            norm,
            plus: vec![State::zeros(); omegas.len()],
            minus: vec![State::zeros(); omegas.len()],
            estimates: vec![Vec::new(); omegas.len()],
        }
    }

    fn push(&mut self, n: usize, x: &State) {
        let k = n % self.len;
        let t = k as f64 * self.dt;
        let w = self.window[k] * self.dt;
        for (f, &omega) in self.omegas.iter().enumerate() {
            let phase = Complex64::from_polar(w, -omega * t);
            self.plus[f] += x * phase;
            self.minus[f] += x * phase.conj();
        }
        if k + 1 == self.len {
            for f in 0..self.omegas.len() {
                let s = self.plus[f] * self.minus[f].transpose() / c(self.norm);
                self.estimates[f].push(s);
                self.plus[f] = State::zeros();
                self.minus[f] = State::zeros();
            }
        }
    }
}

fn check_nyquist(omegas: &[f64], dt: f64) -> Result<()> {
    let nyquist = PI / dt;
    match omegas.iter().find(|&&w| !(w.abs() <= nyquist)) {
        Some(&omega) => Err(Error::AboveNyquist { omega, nyquist }),
        None => Ok(()),
    }
}

/// Averaged cross-periodograms `X(w) X(-w)^T / (dt sum w_n^2)` over all
/// complete segments of `segment_len` samples.
pub fn estimate_spectrum(ensemble: &TrajectoryEnsemble, omegas: &[f64], segment_len: usize) -> Result<Vec<MatrixEstimate>> {
    check_nyquist(omegas, ensemble.dt)?;
    let per_path: Vec<Vec<Vec<CMat>>> = ensemble
        .paths
        .par_iter()
        .map(|path| {
            let mut acc = SegmentAccumulator::new(omegas, ensemble.dt, segment_len);
            for (n, x) in path.iter().enumerate() {
                acc.push(n, &State::from_column_slice(x));
            }
            acc.estimates
        })
        .collect();
    collect_segments(per_path, omegas.len())
}

/// [`estimate_spectrum`] without storing the paths.
pub fn simulate_spectrum(
    model: &FluctuationModel,
    factor: &NoiseFactor,
    cfg: &SimulationConfig,
    omegas: &[f64],
    segment_len: usize,
) -> Result<Vec<MatrixEstimate>> {
    let setup = SimulationSetup::new(model, factor, cfg.dt)?;
    check_nyquist(omegas, setup.dt)?;
    let per_path: Vec<Vec<Vec<CMat>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut acc = SegmentAccumulator::new(omegas, setup.dt, segment_len);
            setup.run_path(cfg, p, |n, x| acc.push(n, x));
            acc.estimates
        })
        .collect();
    collect_segments(per_path, omegas.len())
}

fn collect_segments(per_path: Vec<Vec<Vec<CMat>>>, n_freq: usize) -> Result<Vec<MatrixEstimate>> {
    (0..n_freq)
        .map(|f| {
            let segs: Vec<CMat> = per_path.iter().flat_map(|p| p[f].iter().copied()).collect();
            if segs.len() < 2 {
                return Err(Error::InvalidParams("need at least two complete segments".into()));
            }
            Ok(MatrixEstimate::from_samples(&segs))
        })
        .collect()
}

//! The subcommands. Each one builds a [`Report`] in memory; nothing touches
//! the file system until [`Report::write`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sixmode::linearization::{stationary_covariance, Verdict};
use sixmode::oracle::{default_dt, factor_diffusion, simulate_covariance, SimulationConfig};
use sixmode::spectra::integrated_spectrum;
use sixmode::vlf::{select_steady_state, SweepOptions, VlfEvaluator};
use sixmode::{
    analytic_steady_states, classify_regime, compute_thresholds, Branch, FluctuationModel, Mode, SystemParams,
    N_MODES, STATE_DIM,
};

use crate::config::{BranchChoice, ConfigError, RunConfig};
use crate::CliError;

/// Full-precision cell.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Options {
    pub allow_unstable: bool,
    pub zero_diffusion: bool,
}

impl Options {
    fn sweep(self) -> SweepOptions {
        SweepOptions { allow_unstable: self.allow_unstable, zero_diffusion: self.zero_diffusion }
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub stdout: String,
    pub warnings: Vec<String>,
    pub files: Vec<(PathBuf, String)>,
}

impl Report {
    /// Writes every file, removing the ones already written if any write fails.
    pub fn write(&self) -> Result<(), CliError> {
        let mut written: Vec<&Path> = Vec::new();
        for (path, contents) in &self.files {
            if let Err(source) = fs::write(path, contents) {
                let _ = fs::remove_file(path);
                for p in written {
                    let _ = fs::remove_file(p);
                }
                return Err(CliError::Io { context: format!("writing {}", path.display()), source });
            }
            written.push(path);
        }
        Ok(())
    }

    /// CSV text goes to a file when `out` is set and to standard output otherwise.
    fn emit(&mut self, out: Option<PathBuf>, csv: String) {
        match out {
            Some(path) => self.files.push((path, csv)),
            None => self.stdout.push_str(&csv),
        }
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Indeterminate => "indeterminate",
        Verdict::Unstable => "unstable",
    }
}

fn quadrature_name(k: usize) -> String {
    let q = if k < N_MODES { 'X' } else { 'Y' };
    format!("{q}{}", Mode::ALL[k % N_MODES].label())
}

fn branches(cfg: &RunConfig, params: &SystemParams) -> sixmode::Result<Vec<Branch>> {
    match cfg.branch {
        BranchChoice::Only(b) => Ok(vec![b]),
        BranchChoice::Auto => Ok(analytic_steady_states(params)?.iter().map(|s| s.branch).collect()),
    }
}

/// `name.csv` becomes `name.lower.csv`.
pub fn suffixed(path: &Path, branch: Branch) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{}.{}", branch.name(), ext.to_string_lossy()),
        None => format!("{stem}.{}", branch.name()),
    };
    path.with_file_name(name)
}

fn outputs(cfg: &RunConfig, branches: &[Branch]) -> Result<Vec<Option<PathBuf>>, CliError> {
    match (&cfg.out, branches.len()) {
        (out, 1) => Ok(vec![out.clone()]),
        (Some(out), _) => Ok(branches.iter().map(|&b| Some(suffixed(out, b))).collect()),
        (None, _) => Err(ConfigError {
            line: None,
            message: "`out` is required when several branches are written (branch = auto above the upper threshold)"
                .into(),
        }
        .into()),
    }
}

fn evaluator(params: &SystemParams, branch: Branch, opts: Options, report: &mut Report) -> Result<VlfEvaluator, CliError> {
    let eval = VlfEvaluator::new(params, branch, opts.sweep())?;
    let s = &eval.model.stability;
    if opts.allow_unstable && eval.model.require_stationary().is_err() {
        report.warnings.push(format!(
            "{branch} branch at epsilon = {:e} is {} (margin {:e}); values are a formal continuation",
            params.epsilon(),
            verdict_name(s.verdict),
            s.margin
        ));
    }
    Ok(eval)
}

pub fn thresholds(cfg: &RunConfig) -> Result<Report, CliError> {
    let params = cfg.params()?;
    let th = compute_thresholds(&params);
    let opt = |x: Option<f64>| x.map_or("none".to_string(), num);
    let ratio = th.eps_th.zip(th.eps_th_prime).map(|(a, b)| b / a);
    let mut out = String::new();
    writeln!(out, "eps_th={}", opt(th.eps_th)).unwrap();
    writeln!(out, "eps_th_prime={}", opt(th.eps_th_prime)).unwrap();
    writeln!(out, "ratio={}", opt(ratio)).unwrap();
    writeln!(out, "epsilon={}", num(params.epsilon())).unwrap();
    writeln!(out, "regime={}", classify_regime(&params, &th).name()).unwrap();
    Ok(Report { stdout: out, ..Report::default() })
}

pub fn steady_state(cfg: &RunConfig) -> Result<Report, CliError> {
    let params = cfg.params()?;
    let states = analytic_steady_states(&params)?;
    let th = compute_thresholds(&params);
    let mut out = String::new();
    writeln!(out, "regime={}", classify_regime(&params, &th).name()).unwrap();
    writeln!(out, "epsilon={}", num(params.epsilon())).unwrap();
    let names: Vec<&str> = states.iter().map(|s| s.branch.name()).collect();
    writeln!(out, "branches={}", names.join(",")).unwrap();
    for ss in &states {
        let b = ss.branch.name();
        for mode in Mode::ALL {
            writeln!(out, "{b}.A_{}={}", mode.label(), num(ss.amplitude(mode))).unwrap();
        }
        writeln!(out, "{b}.residual={}", num(ss.residual(&params))).unwrap();
        let model = FluctuationModel::new(&params, ss)?;
        let s = &model.stability;
        writeln!(out, "{b}.verdict={}", verdict_name(s.verdict)).unwrap();
        writeln!(out, "{b}.margin={}", num(s.margin)).unwrap();
        writeln!(out, "{b}.neutral_dim={}", s.neutral_dim).unwrap();
        writeln!(out, "{b}.damped_margin={}", num(s.damped_margin)).unwrap();
        writeln!(out, "{b}.stationary={}", model.require_stationary().is_ok()).unwrap();
    }
    Ok(Report { stdout: out, ..Report::default() })
}

/// Output quadrature covariance, upper triangle, one row per frequency.
pub fn spectrum(cfg: &RunConfig, opts: Options) -> Result<Report, CliError> {
    let params = cfg.params()?;
    let branches = branches(cfg, &params)?;
    let outs = outputs(cfg, &branches)?;
    let mut report = Report::default();
    let grid = cfg.omega.values();
    for (branch, out) in branches.into_iter().zip(outs) {
        let eval = evaluator(&params, branch, opts, &mut report)?;
        let rows: Vec<_> = grid.par_iter().map(|&w| eval.spectrum(w)).collect::<sixmode::Result<_>>()?;
        let mut csv = String::from("omega_norm");
        for i in 0..STATE_DIM {
            for j in i..STATE_DIM {
                write!(csv, ",v_{}_{}", quadrature_name(i), quadrature_name(j)).unwrap();
            }
        }
        csv.push('\n');
        for (w, s) in grid.iter().zip(&rows) {
            csv.push_str(&num(*w));
            for i in 0..STATE_DIM {
                for j in i..STATE_DIM {
                    csv.push(',');
                    csv.push_str(&num(s.v_out[(i, j)]));
                }
            }
            csv.push('\n');
        }
        report.emit(out, csv);
    }
    Ok(report)
}

/// Smallest value of each column and where it occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMinimum {
    pub name: &'static str,
    pub value: f64,
    pub omega_norm: f64,
}

/// Per-branch column minima, in output order.
pub type SweepMinima = Vec<(Branch, Vec<ColumnMinimum>)>;

/// Optimized inequalities over the frequency grid.
pub fn vlf_sweep(cfg: &RunConfig, opts: Options) -> Result<(Report, SweepMinima), CliError> {
    let params = cfg.params()?;
    let branches = branches(cfg, &params)?;
    let outs = outputs(cfg, &branches)?;
    let ineqs = cfg.inequalities();
    let grid = cfg.omega.values();
    let mut report = Report::default();
    let mut minima = Vec::new();
    for (branch, out) in branches.into_iter().zip(outs) {
        let eval = evaluator(&params, branch, opts, &mut report)?;
        let rows: Vec<_> = grid.par_iter().map(|&w| eval.evaluate_all(&ineqs, w)).collect::<sixmode::Result<_>>()?;
        let mut csv = String::from("omega_norm");
        for col in &cfg.columns {
            write!(csv, ",V_{}", col.name()).unwrap();
        }
        for (col, q) in cfg.columns.iter().zip(&ineqs) {
            for m in q.free_modes() {
                write!(csv, ",g_{}_{}", col.name(), m.label()).unwrap();
            }
        }
        csv.push('\n');
        for (w, results) in grid.iter().zip(&rows) {
            csv.push_str(&num(*w));
            for r in results {
                csv.push(',');
                csv.push_str(&num(r.value));
            }
            for r in results {
                for g in &r.gains {
                    csv.push(',');
                    csv.push_str(&num(*g));
                }
            }
            csv.push('\n');
        }
        let mins = cfg
            .columns
            .iter()
            .enumerate()
            .map(|(k, col)| {
                let (w, r) = grid
                    .iter()
                    .zip(&rows)
                    .min_by(|a, b| a.1[k].value.total_cmp(&b.1[k].value))
                    .expect("grid has >= 2 points");
                ColumnMinimum { name: col.name(), value: r[k].value, omega_norm: *w }
            })
            .collect();
        minima.push((branch, mins));
        report.emit(out, csv);
    }
    Ok((report, minima))
}

/// Minimum over frequency of each column across a range of pump amplitudes.
pub fn pump_sweep(cfg: &RunConfig, opts: Options) -> Result<Report, CliError> {
    let pump = cfg.pump.ok_or_else(|| ConfigError {
        line: None,
        message: "pump-sweep needs pump_min, pump_max and pump_points".into(),
    })?;
    let base = cfg.params()?;
    let ineqs = cfg.inequalities();
    let ratios = pump.values();
    type Row = (f64, f64, Branch, Verdict, Vec<(f64, f64)>);
    let per_pump: Vec<(Vec<Row>, Report)> = ratios
        .par_iter()
        .map(|&ratio| -> Result<_, CliError> {
            let params = SystemParams::with_pump(base.damping(), base.coupling(), cfg.epsilon_mode.spec(ratio))?;
            let mut local = Report::default();
            let wanted = match cfg.branch {
                BranchChoice::Auto => analytic_steady_states(&params)?.iter().map(|s| s.branch).collect(),
                BranchChoice::Only(b) => vec![b],
            };
            let mut rows = Vec::new();
            for branch in wanted {
                if select_steady_state(&params, branch).is_err() {
                    local.warnings.push(format!("no {branch} branch at pump ratio {ratio}; row skipped"));
                    continue;
                }
                let eval = evaluator(&params, branch, opts, &mut local)?;
                let minima = ineqs
                    .iter()
                    .map(|q| eval.min_over_frequency(q, cfg.omega.min, cfg.omega.max, cfg.omega.points))
                    .map(|r| r.map(|r| (r.value, r.omega / params.gamma_a())))
                    .collect::<sixmode::Result<Vec<_>>>()?;
                rows.push((ratio, params.epsilon(), branch, eval.model.stability.verdict, minima));
            }
            Ok((rows, local))
        })
        .collect::<Result<_, _>>()?;
    let mut report = Report::default();
    let mut csv = String::from("eps_ratio,epsilon,branch,verdict");
    for col in &cfg.columns {
        write!(csv, ",V_{}", col.name()).unwrap();
    }
    for col in &cfg.columns {
        write!(csv, ",omega_norm_{}", col.name()).unwrap();
    }
    csv.push('\n');
    for (rows, local) in per_pump {
        report.warnings.extend(local.warnings);
        for (ratio, eps, branch, verdict, minima) in rows {
            write!(csv, "{},{},{},{}", num(ratio), num(eps), branch.name(), verdict_name(verdict)).unwrap();
            for (v, _) in &minima {
                write!(csv, ",{}", num(*v)).unwrap();
            }
            for (_, w) in &minima {
                write!(csv, ",{}", num(*w)).unwrap();
            }
            csv.push('\n');
        }
    }
    report.emit(cfg.out.clone(), csv);
    Ok(report)
}

/// Size of the Monte-Carlo run behind `mc-validate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub paths: usize,
    pub steps: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { paths: 64, steps: 1 << 18 }
    }
}

/// Cutoff of the frequency integral, in units of `gamma_a`.
pub const INTEGRAL_CUTOFF: f64 = 1e3;

/// Summary of the three-way covariance comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub analytic_max_diff: f64,
    pub truncated_max_diff: f64,
    pub mc_checked: usize,
    pub mc_outside: usize,
    pub mc_max_z: f64,
}

/// Lyapunov covariance against the frequency integral of the spectrum and a
/// Monte-Carlo estimate.
pub fn mc_validate(cfg: &RunConfig, mc: McOptions) -> Result<(Report, McSummary), CliError> {
    let params = cfg.params()?;
    let branch = match cfg.branch {
        BranchChoice::Only(b) => b,
        BranchChoice::Auto => analytic_steady_states(&params)?[0].branch,
    };
    let ss = select_steady_state(&params, branch)?;
    let model = FluctuationModel::new(&params, &ss)?;
    model.require_stationary()?;
    let sigma = stationary_covariance(&model)?;
    let integ = integrated_spectrum(&model, INTEGRAL_CUTOFF * params.gamma_a(), 1e-9)?;
    let factor = factor_diffusion(&model.d)?;
    let dt = default_dt(&model.damped_part().0)? / 4.0;
    // twenty relaxation times of the slowest damped mode
    let burn_in = (20.0 / model.stability.damped_margin / dt).ceil() as usize;
    let sim = SimulationConfig { dt: Some(dt), steps: mc.steps, burn_in, n_paths: mc.paths, seed: cfg.seed };
    let est = simulate_covariance(&model, &factor, &sim)?;
    let agreement = est.compare(&sigma, 3.0);

    let summary = McSummary {
        analytic_max_diff: (integ.sigma - sigma).camax(),
        truncated_max_diff: (integ.truncated - sigma).camax(),
        mc_checked: agreement.checked,
        mc_outside: agreement.outside,
        mc_max_z: agreement.max_z,
    };

    let mut csv = String::from(
        "row,col,lyapunov_re,lyapunov_im,integral_re,integral_im,mc_re,mc_im,mc_se_re,mc_se_im\n",
    );
    for i in 0..STATE_DIM {
        for j in i..STATE_DIM {
            let (l, s, m) = (sigma[(i, j)], integ.sigma[(i, j)], est.mean[(i, j)]);
            writeln!(
                csv,
                "{i},{j},{},{},{},{},{},{},{},{}",
                num(l.re),
                num(l.im),
                num(s.re),
                num(s.im),
                num(m.re),
                num(m.im),
                num(est.se_re[(i, j)]),
                num(est.se_im[(i, j)])
            )
            .unwrap();
        }
    }
    let mut report = Report::default();
    let mut text = String::new();
    writeln!(text, "branch={}", branch.name()).unwrap();
    writeln!(text, "neutral_dim={}", model.stability.neutral_dim).unwrap();
    writeln!(text, "dt={}", num(dt)).unwrap();
    writeln!(text, "paths={}", mc.paths).unwrap();
    writeln!(text, "steps={}", mc.steps).unwrap();
    writeln!(text, "burn_in={burn_in}").unwrap();
    writeln!(text, "seed={}", cfg.seed).unwrap();
    writeln!(text, "integral_vs_lyapunov_max_abs={}", num(summary.analytic_max_diff)).unwrap();
    writeln!(text, "truncated_integral_vs_lyapunov_max_abs={}", num(summary.truncated_max_diff)).unwrap();
    writeln!(text, "mc_entries_checked={}", summary.mc_checked).unwrap();
    writeln!(text, "mc_entries_outside_3se={}", summary.mc_outside).unwrap();
    writeln!(text, "mc_max_z={}", num(summary.mc_max_z)).unwrap();
    match &cfg.out {
        Some(path) => {
            report.files.push((path.clone(), csv));
            report.stdout = text;
        }
        None => {
            // summary as comments so standard output stays a valid CSV
            for line in text.lines() {
                writeln!(report.stdout, "# {line}").unwrap();
            }
            report.stdout.push_str(&csv);
        }
    }
    Ok((report, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_goes_before_extension() {
        assert_eq!(suffixed(Path::new("out/fig4.csv"), Branch::Upper), PathBuf::from("out/fig4.upper.csv"));
        assert_eq!(suffixed(Path::new("fig4"), Branch::Lower), PathBuf::from("fig4.lower"));
    }

    #[test]
    fn quadrature_names() {
        assert_eq!(quadrature_name(0), "Xp2");
        assert_eq!(quadrature_name(11), "Ys2");
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("a.csv");
        let bad = dir.path().join("missing").join("b.csv");
        let report = Report { files: vec![(good.clone(), "x".into()), (bad, "y".into())], ..Report::default() };
        assert!(report.write().is_err());
        assert!(!good.exists());
    }
}

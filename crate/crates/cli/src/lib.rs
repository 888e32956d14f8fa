//! Front end for the `sixmode` library: configuration files, CSV output and
//! the figure presets.

pub mod commands;
pub mod config;

use std::path::Path;

use sixmode::ErrorCategory;
use thiserror::Error;

pub use commands::{McOptions, Options, Report};
pub use config::{parse_config, ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] sixmode::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    /// 2 for bad input, 3 for stability or physicality, 4 for numerical
    /// failure, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Input => 2,
                ErrorCategory::Stability => 3,
                ErrorCategory::Numerical => 4,
            },
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "input",
            3 => "stability",
            4 => "numerical",
            _ => "io",
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { context: format!("reading {}", path.display()), source })?;
    parse_config(&text).map_err(|e| {
        CliError::Config(ConfigError { message: format!("{}: {}", path.display(), e.message), ..e })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    FrequencySweep,
    PumpSweep,
}

/// A shipped figure configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
    pub kind: PresetKind,
    /// The operating point lies above the upper threshold, where the analytic
    /// branches are linearly unstable.
    pub formal: bool,
}

pub const PRESETS: [Preset; 8] = [
    Preset { name: "fig2", text: include_str!("../../../configs/fig2.conf"), kind: PresetKind::FrequencySweep, formal: false },
    Preset { name: "fig3", text: include_str!("../../../configs/fig3.conf"), kind: PresetKind::FrequencySweep, formal: false },
    Preset { name: "fig4", text: include_str!("../../../configs/fig4.conf"), kind: PresetKind::FrequencySweep, formal: true },
    Preset { name: "fig5", text: include_str!("../../../configs/fig5.conf"), kind: PresetKind::FrequencySweep, formal: true },
    Preset { name: "fig6", text: include_str!("../../../configs/fig6.conf"), kind: PresetKind::FrequencySweep, formal: true },
    Preset { name: "fig7", text: include_str!("../../../configs/fig7.conf"), kind: PresetKind::FrequencySweep, formal: true },
    Preset { name: "fig8", text: include_str!("../../../configs/fig8.conf"), kind: PresetKind::PumpSweep, formal: true },
    Preset { name: "fig9", text: include_str!("../../../configs/fig9.conf"), kind: PresetKind::PumpSweep, formal: true },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Runs a preset, writing its CSV into `out_dir`.
pub fn reproduce(preset: &Preset, out_dir: &Path) -> Result<Report, CliError> {
    let mut cfg = parse_config(preset.text)?;
    let file = cfg.out.take().unwrap_or_else(|| format!("{}.csv", preset.name).into());
    cfg.out = Some(out_dir.join(file));
    let opts = Options { allow_unstable: preset.formal, zero_diffusion: false };
    match preset.kind {
        PresetKind::FrequencySweep => {
            let (mut report, minima) = commands::vlf_sweep(&cfg, opts)?;
            for (branch, mins) in minima {
                for m in mins {
                    report.stdout.push_str(&format!(
                        "{branch}.min_V_{}={}\n{branch}.argmin_omega_norm_{}={}\n",
                        m.name,
                        commands::num(m.value),
                        m.name,
                        commands::num(m.omega_norm)
                    ));
                }
            }
            Ok(report)
        }
        PresetKind::PumpSweep => commands::pump_sweep(&cfg, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sixmode::{Branch, EpsilonSpec};

    #[test]
    fn presets_parse() {
        for p in &PRESETS {
            let cfg = parse_config(p.text).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(cfg.pump.is_some(), p.kind == PresetKind::PumpSweep, "{}", p.name);
        }
    }

    #[test]
    fn fig2_preset_matches_caption() {
        let cfg = parse_config(preset("fig2").unwrap().text).unwrap();
        assert_eq!((cfg.damping.a, cfg.damping.b, cfg.damping.c), (0.03, 0.03, 0.03));
        assert_eq!((cfg.coupling.k1, cfg.coupling.k2), (1.0, 0.5));
        assert_eq!(cfg.epsilon_spec(), EpsilonSpec::RelativeToLower(1.5));
    }

    #[test]
    fn figure_pairs_share_parameters() {
        for (a, b) in [("fig4", "fig5"), ("fig6", "fig7")] {
            let ca = parse_config(preset(a).unwrap().text).unwrap();
            let cb = parse_config(preset(b).unwrap().text).unwrap();
            assert_eq!(ca.params().unwrap(), cb.params().unwrap());
            assert_eq!(ca.branch, config::BranchChoice::Only(Branch::Lower));
            assert_eq!(cb.branch, config::BranchChoice::Only(Branch::Upper));
        }
    }

    #[test]
    fn exit_codes() {
        let cfg_err = CliError::Config(ConfigError { line: Some(1), message: String::new() });
        assert_eq!(cfg_err.exit_code(), 2);
        assert_eq!(CliError::Core(sixmode::Error::Unstable { margin: -1.0 }).exit_code(), 3);
        assert_eq!(CliError::Core(sixmode::Error::Numerical(String::new())).exit_code(), 4);
        assert_eq!(CliError::Core(sixmode::Error::NoThreshold).exit_code(), 2);
    }
}

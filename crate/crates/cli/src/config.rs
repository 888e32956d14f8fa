//! Flat `key = value` run configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use sixmode::vlf::select_steady_state;
use sixmode::{Branch, Coupling, Damping, EpsilonSpec, Error, SymmetryClass, SystemParams, VlfInequality, VlfLabel};

const KEYS: [&str; 20] = [
    "gamma_a",
    "gamma_b",
    "gamma_c",
    "k1",
    "k2",
    "k3",
    "epsilon_mode",
    "epsilon_ratio",
    "epsilon_abs",
    "branch",
    "omega_min",
    "omega_max",
    "omega_points",
    "omega_scale",
    "inequalities",
    "pump_min",
    "pump_max",
    "pump_points",
    "seed",
    "out",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonMode {
    Absolute,
    RelEpsTh,
    RelEpsThPrime,
}

impl EpsilonMode {
    pub fn spec(self, value: f64) -> EpsilonSpec {
        match self {
            EpsilonMode::Absolute => EpsilonSpec::Absolute(value),
            EpsilonMode::RelEpsTh => EpsilonSpec::RelativeToLower(value),
            EpsilonMode::RelEpsThPrime => EpsilonSpec::RelativeToUpper(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchChoice {
    /// Every branch present at the configured pump.
    Auto,
    Only(Branch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Log,
    Linear,
}

/// Analysis frequencies in units of `gamma_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl OmegaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.scale {
            GridScale::Log => sixmode::vlf::log_grid(self.min, self.max, self.points),
            GridScale::Linear => sixmode::vlf::linear_grid(self.min, self.max, self.points),
        }
    }
}

/// Pump values for `pump-sweep`, in the units of `epsilon_mode`, log-spaced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl PumpRange {
    pub fn values(&self) -> Vec<f64> {
        sixmode::vlf::log_grid(self.min, self.max, self.points)
    }
}

/// One output column: a symmetry class (its representative inequality) or a
/// single inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Class(SymmetryClass),
    Label(VlfLabel),
}

impl Column {
    pub fn inequality(self) -> VlfInequality {
        match self {
            Column::Class(c) => VlfInequality::representative(c),
            Column::Label(l) => l.inequality(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::Class(c) => c.name(),
            Column::Label(l) => l.name(),
        }
    }
}

pub const DEFAULT_COLUMNS: [Column; 3] =
    [Column::Class(SymmetryClass::A), Column::Class(SymmetryClass::B), Column::Class(SymmetryClass::C)];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub damping: Damping,
    pub coupling: Coupling,
    pub epsilon_mode: EpsilonMode,
    /// Ratio or absolute amplitude, depending on `epsilon_mode`.
    pub epsilon_value: f64,
    pub branch: BranchChoice,
    pub omega: OmegaGrid,
    pub columns: Vec<Column>,
    pub pump: Option<PumpRange>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn epsilon_spec(&self) -> EpsilonSpec {
        self.epsilon_mode.spec(self.epsilon_value)
    }

    pub fn params(&self) -> sixmode::Result<SystemParams> {
        SystemParams::with_pump(self.damping, self.coupling, self.epsilon_spec())
    }

    pub fn inequalities(&self) -> Vec<VlfInequality> {
        self.columns.iter().map(|c| c.inequality()).collect()
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries(HashMap<String, Entry>);

impl Entries {
    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.0.get(key).map(|e| (e.line, e.value.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str), ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError::general(format!("missing required key `{key}`")))
    }

    fn number(&self, key: &str) -> Result<Option<(usize, f64)>, ConfigError> {
        self.raw(key)
            .map(|(line, v)| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok((line, x)),
                _ => Err(ConfigError::at(line, format!("`{key}`: expected a finite number, got `{v}`"))),
            })
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.number(key)? {
            Some((line, x)) if x <= 0.0 => Err(ConfigError::at(line, format!("`{key}` must be > 0, got {x}"))),
            other => Ok(other.map(|(_, x)| x)),
        }
    }

    fn required_positive(&self, key: &str) -> Result<f64, ConfigError> {
        self.required(key)?;
        Ok(self.positive(key)?.expect("present"))
    }

    fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<(usize, T)>, ConfigError> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<T>()
                    .map(|x| (line, x))
                    .map_err(|_| ConfigError::at(line, format!("`{key}`: expected a non-negative integer, got `{v}`")))
            })
            .transpose()
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map: HashMap<String, Entry> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::at(line, format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, format!("`{key}` has an empty value")));
        }
        if let Some(prev) = map.get(key) {
            return Err(ConfigError::at(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        map.insert(key.to_string(), Entry { line, value: value.to_string() });
    }
    Ok(Entries(map))
}

fn parse_columns(line: usize, value: &str) -> Result<Vec<Column>, ConfigError> {
    if value == "all" {
        return Ok(VlfLabel::ALL.iter().map(|&l| Column::Label(l)).collect());
    }
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        let col = match item {
            "A" => Column::Class(SymmetryClass::A),
            "B" => Column::Class(SymmetryClass::B),
            "C" => Column::Class(SymmetryClass::C),
            other => Column::Label(other.parse().map_err(|_| {
                ConfigError::at(line, format!("unknown inequality `{other}` (use A, B, C, all or a label such as p1+s1)"))
            })?),
        };
        if out.contains(&col) {
            return Err(ConfigError::at(line, format!("inequality `{item}` listed twice")));
        }
        out.push(col);
    }
    Ok(out)
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;

    let damping = Damping {
        a: e.required_positive("gamma_a")?,
        b: e.required_positive("gamma_b")?,
        c: e.required_positive("gamma_c")?,
    };
    let k1 = e.required_positive("k1")?;
    let k2 = e.required_positive("k2")?;
    let k3 = e.positive("k3")?.unwrap_or(k2);
    if k3 != k2 {
        return Err(ConfigError::at(
            e.line("k3").expect("k3 set"),
            format!("the symmetric model requires k3 == k2 (got k2 = {k2}, k3 = {k3})"),
        ));
    }
    let coupling = Coupling { k1, k2, k3 };

    let (mode_line, mode) = e.required("epsilon_mode")?;
    let epsilon_mode = match mode {
        "absolute" => EpsilonMode::Absolute,
        "rel_eps_th" => EpsilonMode::RelEpsTh,
        "rel_eps_th_prime" => EpsilonMode::RelEpsThPrime,
        other => {
            return Err(ConfigError::at(
                mode_line,
                format!("`epsilon_mode` must be absolute, rel_eps_th or rel_eps_th_prime, got `{other}`"),
            ))
        }
    };
    let (used, unused) = match epsilon_mode {
        EpsilonMode::Absolute => ("epsilon_abs", "epsilon_ratio"),
        _ => ("epsilon_ratio", "epsilon_abs"),
    };
    if let Some(line) = e.line(unused) {
        return Err(ConfigError::at(line, format!("`{unused}` does not apply with epsilon_mode = {mode}")));
    }
    e.required(used)?;
    let (eps_line, epsilon_value) = e.number(used)?.expect("present");
    if epsilon_value < 0.0 {
        return Err(ConfigError::at(eps_line, format!("`{used}` must be >= 0, got {epsilon_value}")));
    }

    let branch = match e.raw("branch") {
        None | Some((_, "auto")) => BranchChoice::Auto,
        Some((_, "lower")) => BranchChoice::Only(Branch::Lower),
        Some((_, "upper")) => BranchChoice::Only(Branch::Upper),
        Some((_, "trivial")) => BranchChoice::Only(Branch::Trivial),
        Some((line, other)) => {
            return Err(ConfigError::at(line, format!("`branch` must be auto, lower, upper or trivial, got `{other}`")))
        }
    };

    let scale = match e.raw("omega_scale") {
        None | Some((_, "log")) => GridScale::Log,
        Some((_, "linear")) => GridScale::Linear,
        Some((line, other)) => {
            return Err(ConfigError::at(line, format!("`omega_scale` must be log or linear, got `{other}`")))
        }
    };
    let omega_min = e.number("omega_min")?.map_or(0.01, |(_, x)| x);
    let omega_max = e.number("omega_max")?.map_or(100.0, |(_, x)| x);
    let (points_line, points) = e.integer::<usize>("omega_points")?.unwrap_or((0, 400));
    let grid_line = e.line("omega_min").or(e.line("omega_max")).unwrap_or(0);
    if scale == GridScale::Log && omega_min <= 0.0 {
        return Err(ConfigError::at(grid_line, format!("log grid needs omega_min > 0, got {omega_min}")));
    }
    if omega_min < 0.0 || omega_max <= omega_min {
        return Err(ConfigError::at(grid_line, format!("need 0 <= omega_min < omega_max, got [{omega_min}, {omega_max}]")));
    }
    if points < 2 {
        return Err(ConfigError::at(points_line, format!("`omega_points` must be >= 2, got {points}")));
    }
    let omega = OmegaGrid { min: omega_min, max: omega_max, points, scale };

    let columns = match e.raw("inequalities") {
        None => DEFAULT_COLUMNS.to_vec(),
        Some((line, v)) => parse_columns(line, v)?,
    };

    let pump = match (e.number("pump_min")?, e.number("pump_max")?, e.integer::<usize>("pump_points")?) {
        (None, None, None) => None,
        (Some((l, min)), Some((_, max)), Some((_, points))) => {
            if !(min > 0.0 && max >= min) {
                return Err(ConfigError::at(l, format!("need 0 < pump_min <= pump_max, got [{min}, {max}]")));
            }
            if points == 0 || (points == 1 && max != min) {
                return Err(ConfigError::at(l, format!("`pump_points` must be >= 2 for a range, got {points}")));
            }
            Some(PumpRange { min, max, points })
        }
        _ => {
            let line = e.line("pump_min").or(e.line("pump_max")).or(e.line("pump_points")).expect("one set");
            return Err(ConfigError::at(line, "pump_min, pump_max and pump_points must be given together"));
        }
    };

    let seed = e.integer::<u64>("seed")?.map_or(1, |(_, s)| s);
    let out = e.raw("out").map(|(_, v)| PathBuf::from(v));

    let cfg = RunConfig { damping, coupling, epsilon_mode, epsilon_value, branch, omega, columns, pump, seed, out };

    let params = cfg.params().map_err(|err| match err {
        Error::NoThreshold => ConfigError::at(mode_line, err.to_string()),
        other => ConfigError::at(eps_line, other.to_string()),
    })?;
    if let BranchChoice::Only(b) = branch {
        if let Err(err) = select_steady_state(&params, b) {
            return Err(ConfigError::at(e.line("branch").expect("explicit branch"), err.to_string()));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "gamma_a = 0.03\ngamma_b = 0.03\ngamma_c = 0.03\nk1 = 1\nk2 = 0.5\n\
                           epsilon_mode = rel_eps_th\nepsilon_ratio = 1.5\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.branch, BranchChoice::Auto);
        assert_eq!(cfg.omega, OmegaGrid { min: 0.01, max: 100.0, points: 400, scale: GridScale::Log });
        assert_eq!(cfg.coupling.k3, 0.5);
        assert_eq!(cfg.columns, DEFAULT_COLUMNS.to_vec());
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.pump, None);
        assert_eq!(cfg.out, None);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{MINIMAL}out = x.csv   # trailing\n");
        assert_eq!(parse_config(&text).unwrap().out, Some(PathBuf::from("x.csv")));
    }

    #[test]
    fn asymmetric_k3_rejected() {
        let err = parse_config(&format!("{MINIMAL}k3 = 0.4\n")).unwrap_err();
        assert_eq!(err.line, Some(8));
        assert!(err.message.contains("k3 == k2"), "{err}");
    }

    #[test]
    fn unknown_key_has_line() {
        let err = parse_config(&format!("{MINIMAL}gamma_d = 1\n")).unwrap_err();
        assert_eq!(err.to_string(), "line 8: unknown key `gamma_d`");
    }

    #[test]
    fn malformed_number_has_line() {
        let err = parse_config(&MINIMAL.replace("k1 = 1", "k1 = one")).unwrap_err();
        assert_eq!(err.line, Some(4));
    }

    #[test]
    fn missing_key() {
        let err = parse_config(&MINIMAL.replace("k2 = 0.5\n", "")).unwrap_err();
        assert_eq!(err.line, None);
        assert!(err.message.contains("`k2`"));
    }

    #[test]
    fn duplicate_key() {
        let err = parse_config(&format!("{MINIMAL}k1 = 2\n")).unwrap_err();
        assert!(err.message.contains("first set on line 4"), "{err}");
    }

    #[test]
    fn grid_invariants() {
        let err = parse_config(&format!("{MINIMAL}omega_min = 0\n")).unwrap_err();
        assert_eq!(err.line, Some(8));
        assert!(parse_config(&format!("{MINIMAL}omega_min = 0\nomega_scale = linear\n")).is_ok());
        assert!(parse_config(&format!("{MINIMAL}omega_points = 1\n")).is_err());
        assert!(parse_config(&format!("{MINIMAL}omega_min = 5\nomega_max = 1\n")).is_err());
    }

    #[test]
    fn upper_branch_needs_upper_threshold() {
        let text = MINIMAL.replace("k2 = 0.5", "k2 = 0.4").replace("1.5", "1.2");
        let err = parse_config(&format!("{text}branch = upper\n")).unwrap_err();
        assert_eq!(err.line, Some(8));
        let text = text.replace("rel_eps_th\n", "rel_eps_th_prime\n").replace("1.2", "1.1");
        assert!(parse_config(&format!("{text}branch = upper\n")).is_ok());
    }

    #[test]
    fn coincident_thresholds_allow_upper() {
        assert!(parse_config(&format!("{MINIMAL}branch = upper\n")).is_ok());
    }

    #[test]
    fn relative_pump_without_threshold() {
        let err = parse_config(&MINIMAL.replace("k1 = 1", "k1 = 0.5")).unwrap_err();
        assert_eq!(err.line, Some(6));
    }

    #[test]
    fn epsilon_keys_match_mode() {
        let abs = MINIMAL.replace("rel_eps_th", "absolute").replace("epsilon_ratio", "epsilon_abs");
        assert!(parse_config(&abs).is_ok());
        assert!(parse_config(&format!("{abs}epsilon_ratio = 2\n")).is_err());
    }

    #[test]
    fn inequality_selection() {
        let cfg = parse_config(&format!("{MINIMAL}inequalities = C, p1+s1\n")).unwrap();
        assert_eq!(cfg.columns, vec![Column::Class(SymmetryClass::C), Column::Label(VlfLabel::P1PlusS1)]);
        assert_eq!(parse_config(&format!("{MINIMAL}inequalities = all\n")).unwrap().columns.len(), 5);
        assert!(parse_config(&format!("{MINIMAL}inequalities = A, A\n")).is_err());
        assert!(parse_config(&format!("{MINIMAL}inequalities = D\n")).is_err());
    }

    #[test]
    fn pump_range_all_or_nothing() {
        assert!(parse_config(&format!("{MINIMAL}pump_min = 1.1\n")).is_err());
        let cfg = parse_config(&format!("{MINIMAL}pump_min = 1.1\npump_max = 10\npump_points = 5\n")).unwrap();
        assert_eq!(cfg.pump.unwrap().values().len(), 5);
    }
}

//! End-to-end runs of the `sixmode` binary. (The name sorts before the
//! acceptance target so these still run when a criterion fails.)

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sixmode");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn key(text: &str, k: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{k}=")))
        .unwrap_or_else(|| panic!("no key {k} in\n{text}"))
        .to_string()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.conf");
    fs::write(&path, body).unwrap();
    path
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

const FIG3: &str = "gamma_a = 0.03\ngamma_b = 0.03\ngamma_c = 0.03\nk1 = 1\nk2 = 0.4\n\
                    epsilon_mode = rel_eps_th\nepsilon_ratio = 1.2\nomega_points = 40\n";

#[test]
fn thresholds_of_fig3_config() {
    let o = run(&["thresholds", configs().join("fig3.conf").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let ratio: f64 = key(&text, "ratio").parse().unwrap();
    assert!((ratio - 2.0).abs() < 1e-12);
    assert_eq!(key(&text, "regime"), "between_thresholds");
}

#[test]
fn steady_state_lists_branches() {
    let o = run(&["steady-state", configs().join("fig6.conf").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(key(&text, "branches"), "lower,upper");
    assert_eq!(key(&text, "upper.verdict"), "unstable");
    let a: f64 = key(&text, "lower.A_p1").parse().unwrap();
    assert!(a > 0.0);
}

#[test]
fn reproduce_fig2_dips_below_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["reproduce", "fig2", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&fs::read_to_string(dir.path().join("fig2.csv")).unwrap());
    assert_eq!(&header[..4], ["omega_norm", "V_A", "V_B", "V_C"]);
    assert!(header[4..].iter().all(|h| h.starts_with("g_")));
    assert_eq!(rows.len(), 400);
    for col in 1..4 {
        assert!(rows.iter().any(|r| r[col] < 4.0), "column {col}");
    }
}

#[test]
fn zero_diffusion_gives_vacuum_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FIG3);
    let o = run(&["vlf-sweep", cfg.to_str().unwrap(), "--zero-diffusion"]);
    assert!(o.status.success());
    let (_, rows) = csv_rows(&stdout(&o));
    for r in &rows {
        for v in &r[1..4] {
            assert!((v - 4.0).abs() < 1e-9, "{v}");
        }
    }
}

#[test]
fn cells_use_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FIG3);
    let text = stdout(&run(&["vlf-sweep", cfg.to_str().unwrap()]));
    let cell = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = cell.split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{cell}");
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{FIG3}colour = blue\n"));
    let o = run(&["thresholds", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 9") && err.contains("colour"), "{err}");
}

#[test]
fn unstable_branch_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let body = fs::read_to_string(configs().join("fig4.conf")).unwrap().replace("out = fig4.csv", &format!("out = {}", out.display()));
    let cfg = write_config(dir.path(), &body);
    let o = run(&["vlf-sweep", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
    let o = run(&["vlf-sweep", cfg.to_str().unwrap(), "--allow-unstable"]);
    assert!(o.status.success());
    assert!(out.exists());
    assert!(String::from_utf8(o.stderr).unwrap().contains("formal continuation"));
}

#[test]
fn auto_branch_writes_both_files_above_upper_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(configs().join("fig6.conf"))
        .unwrap()
        .replace("branch = lower", "branch = auto")
        .replace("omega_points = 400", "omega_points = 20")
        .replace("out = fig6.csv", &format!("out = {}", dir.path().join("s.csv").display()));
    let cfg = write_config(dir.path(), &body);
    let o = run(&["vlf-sweep", cfg.to_str().unwrap(), "--allow-unstable"]);
    assert!(o.status.success());
    assert!(dir.path().join("s.lower.csv").exists());
    assert!(dir.path().join("s.upper.csv").exists());
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn spectrum_csv_has_upper_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FIG3);
    let o = run(&["spectrum", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, rows) = csv_rows(&stdout(&o));
    assert_eq!(header.len(), 1 + 78);
    assert_eq!(header[1], "v_Xp2_Xp2");
    assert_eq!(rows.len(), 40);
}

#[test]
fn pump_sweep_requires_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FIG3);
    assert_eq!(run(&["pump-sweep", cfg.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &format!("{FIG3}pump_min = 1.1\npump_max = 1.8\npump_points = 3\n"));
    let o = run(&["pump-sweep", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, rows) = {
        let text = stdout(&o);
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
        (header, lines.map(String::from).collect::<Vec<_>>())
    };
    assert_eq!(header[..4], ["eps_ratio", "epsilon", "branch", "verdict"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.contains(",lower,indeterminate,")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FIG3);
    let a = run(&["vlf-sweep", cfg.to_str().unwrap()]);
    let b = run(&["vlf-sweep", cfg.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
    let small = ["mc-validate", cfg.to_str().unwrap(), "--paths", "3", "--steps", "2000"];
    let a = run(&small);
    let b = run(&small);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_figure() {
    assert_eq!(run(&["reproduce", "fig11"]).status.code(), Some(2));
}

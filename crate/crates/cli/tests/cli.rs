use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn anchor_est(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anchor-est"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_SPEC: &str = r#"
sweep = "p_dbm"
values = [10.0, 30.0]
trials = 6

[scenario]
bs_antennas = 6
irs_elements = 4
users = 2
seed = 11
"#;

#[test]
fn overhead_default_timing_matches_hand_count() {
    let o = anchor_est(&["overhead", "--m", "70", "--n", "80", "--k", "60", "--scheme", "1"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        stdout(&o),
        "scheme,M,N,K,phase1,phase2,executions,total\nscheme1,70,80,60,162,129,499,64533\n"
    );
}

#[test]
fn overhead_grid_file_lists_all_schemes() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "grid.toml", "bs_antennas = [60]\nirs_elements = [80]\nusers = \"59..=61\"\n");
    let out = dir.path().join("grid.csv");
    let o = anchor_est(&["overhead", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 4);
    for scheme in ["scheme1", "scheme2", "reference-user", "full-duplex"] {
        assert!(text.contains(&format!("\n{scheme},60,80,60,")), "{scheme} missing");
    }
}

#[test]
fn overhead_infeasible_window_exits_3() {
    let o = anchor_est(&["overhead", "--m", "128", "--n", "80", "--k", "11", "--tu-ms", "0.005", "--scheme", "2"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(anchor_est(&["nmse", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = write(&dir, "bad.toml", "sweep = \"p_dbm\"\nvalues = []\n");
    assert_eq!(anchor_est(&["nmse", "--config", &bad]).status.code(), Some(2));
    let unknown = write(&dir, "unknown.toml", "sweep = \"p_dbm\"\nvalues = [1.0]\nbogus = 3\n");
    assert_eq!(anchor_est(&["nmse", "--config", &unknown]).status.code(), Some(2));
    let spec = write(&dir, "spec.toml", SMALL_SPEC);
    assert_eq!(anchor_est(&["nmse", "--config", &spec, "--trials", "0"]).status.code(), Some(2));
    assert_eq!(anchor_est(&["nmse", "--config", &spec, "--threads", "0"]).status.code(), Some(2));
    assert_eq!(anchor_est(&["overhead", "--k", "1..=0"]).status.code(), Some(2));
    assert_eq!(anchor_est(&["nmse"]).status.code(), Some(2));
}

#[test]
fn nmse_is_deterministic_and_seeded() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.toml", SMALL_SPEC);
    let run = |extra: &[&str]| {
        let mut args = vec!["nmse", "--config", spec.as_str()];
        args.extend_from_slice(extra);
        let o = anchor_est(&args);
        assert!(o.status.success(), "{o:?}");
        stdout(&o)
    };
    let one = run(&["--threads", "1"]);
    assert_eq!(one, run(&["--threads", "3"]));
    assert_eq!(one, run(&["--threads", "1"]));
    assert_ne!(one, run(&["--threads", "1", "--seed", "12"]));
    let lines: Vec<&str> = one.lines().collect();
    assert_eq!(lines[0], "scheme,sweep_var,sweep_value,mean_nmse,stderr,trials");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("scheme1,p_dbm,10.0,") && lines[1].ends_with(",6"));
}

#[test]
fn noise_free_run_is_exact() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.toml", &format!("noise = false\n{SMALL_SPEC}"));
    let out = dir.path().join("nmse.csv");
    let o = anchor_est(&["nmse", "--config", &spec, "--trials", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let rows = anchor_est::read_csv(fs::File::open(out).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.trials == 2 && r.mean_nmse < 1e-16));
}

#[test]
fn scheme_filter_and_plot() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.toml", SMALL_SPEC);
    let svg = dir.path().join("nmse.svg");
    let o = anchor_est(&["nmse", "--config", &spec, "--scheme", "2", "--plot", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).lines().skip(1).all(|l| l.starts_with("scheme2,")));
    assert_svg(&svg);
}

#[test]
fn infeasible_points_are_written_then_exit_3() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.toml", &SMALL_SPEC.replace("seed = 11", "seed = 11\ntu_ms = 0.005"));
    let out = dir.path().join("nmse.csv");
    let o = anchor_est(&["nmse", "--config", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    let rows = anchor_est::read_csv(fs::File::open(out).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    // 5-symbol slots hold Scheme 1's 2K = 4 pilots but not Scheme 2's K+N+1 = 7
    for r in rows {
        match r.scheme {
            anchor_est::Scheme::Scheme1 => assert!(r.is_feasible() && r.mean_nmse.is_finite()),
            _ => assert!(!r.is_feasible() && r.mean_nmse.is_nan()),
        }
    }
}

#[test]
fn vanishing_channels_exit_4() {
    let dir = TempDir::new().unwrap();
    let text = format!("noise = false\n{}", SMALL_SPEC.replace("seed = 11", "seed = 11\npathloss_ref_db = -4000.0"));
    let spec = write(&dir, "spec.toml", &text);
    let o = anchor_est(&["nmse", "--config", &spec, "--scheme", "2"]);
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical"));
}

#[test]
fn sweep_runs_each_experiment() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first.csv");
    let batch = format!(
        r#"
[[experiments]]
sweep = "K"
values = [1.0, 3.0]
trials = 3
output = "{}"
[experiments.scenario]
bs_antennas = 4
irs_elements = 4
users = 2

[[experiments]]
sweep = "M"
values = [2.0, 8.0]
trials = 3
schemes = ["scheme1"]
[experiments.scenario]
irs_elements = 4
users = 2
"#,
        first.display()
    );
    let cfg = write(&dir, "batch.toml", &batch);
    let svg = dir.path().join("sweep.svg");
    let o = anchor_est(&["sweep", "--config", &cfg, "--threads", "2", "--plot", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 4 + 2);
    assert!(text.contains("\nscheme1,M,8.0,"));
    assert_eq!(fs::read_to_string(first).unwrap().lines().count(), 1 + 4);
    assert_svg(&svg);
}

#[test]
fn plot_subcommand_renders_report() {
    let dir = TempDir::new().unwrap();
    let csv = write(
        &dir,
        "r.csv",
        "scheme,sweep_var,sweep_value,mean_nmse,stderr,trials\nscheme1,M,80.0,1e-3,1e-5,10\nscheme1,M,96.0,5e-4,1e-5,10\nscheme2,M,80.0,NaN,NaN,0\n",
    );
    let svg = dir.path().join("r.svg");
    let o = anchor_est(&["plot", "--input", &csv, "--out", svg.to_str().unwrap(), "--title", "test"]);
    assert!(o.status.success(), "{o:?}");
    assert_svg(&svg);
    let empty = write(&dir, "e.csv", "scheme,sweep_var,sweep_value,mean_nmse,stderr,trials\n");
    assert_eq!(anchor_est(&["plot", "--input", &empty, "--out", svg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn design_dump_lists_every_entry() {
    let o = anchor_est(&["design", "--step", "anchor-a1", "--n", "3"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("design,matrix,row,col,re,im"));
    // 1x4 pilots plus 3x4 reflections
    assert_eq!(lines.clone().count(), 4 + 12);
    assert!(lines.all(|l| l.starts_with("anchor-a1,")));

    let o = anchor_est(&["design", "--step", "groups", "--n", "4", "--m", "2", "--k", "3"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("\ngroup-0,pilots,") && text.contains("\ngroup-1,reflection,"));

    assert_eq!(anchor_est(&["design", "--step", "direct", "--n", "4", "--k", "0"]).status.code(), Some(2));
}

fn assert_svg(path: &Path) {
    let svg = fs::read_to_string(path).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"), "not a line chart");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kmdp::infogain::{mig_schedule, unit_mesh};
use kmdp::kernels::KernelSpec;

fn kmdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmdp"))
        .args(args)
        .env("KMDP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const LQR_ENV: &str = r#"
[[env]]
name = "lqr"
grid = { state = [11], action = [5] }
[env.model]
kind = "lqr"
a = [[1.0]]
b = [[0.5]]
p = [[1.0]]
q = [[0.1]]
state_box = { lo = [-1.0], hi = [1.0] }
action_box = { lo = [-1.0], hi = [1.0] }
horizon = 3
sigma_r = 0.05
sigma_p = 0.05
"#;

fn write_config(dir: &Path, name: &str, agents: &str, extra: &str) -> String {
    let text = format!(
        "schema_version = 1\nepisodes = 4\nseeds = [1, 2]\nagents = {agents}\noutput_dir = \"out\"\n{LQR_ENV}{extra}"
    );
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_lists_every_subcommand() {
    let o = kmdp(&["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in ["run", "mig", "coverage", "selftest"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn run_missing_config_names_the_path() {
    let o = kmdp(&["run", "/nonexistent/exp.kmdp.conf"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/exp.kmdp.conf"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn run_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.kmdp.conf", "[\"random\"]", "\n[confidence]\ndelta = 0.0\n");
    let o = kmdp(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delta"));
}

#[test]
fn run_tiny_config_then_rerun_is_noop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.kmdp.conf", "[\"gp_ucrl\", \"random\"]", "");
    let o = kmdp(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("env,agent,seed,final_regret,growth_p,growth_ci_lo,growth_ci_hi,coverage_viol,secs")
    );
    assert_eq!(lines.count(), 4);

    let out = dir.path().join("out").join("lqr");
    let cell = out.join("gp_ucrl-seed1.csv");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let before = fs::metadata(&cell).unwrap().modified().unwrap();
    let summary_before = fs::metadata(out.join("summary.csv")).unwrap().modified().unwrap();
    let again = kmdp(&["run", &cfg]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&again), text);
    assert_eq!(fs::metadata(&cell).unwrap().modified().unwrap(), before);
    assert_eq!(fs::metadata(out.join("summary.csv")).unwrap().modified().unwrap(), summary_before);

    // the summary regret is the last cumulative-regret cell
    let records = kmdp::harness::read_episodes(&cell).unwrap();
    let rows = kmdp::harness::read_summary(&out.join("summary.csv")).unwrap();
    let row = rows.iter().find(|r| r.agent == "gp_ucrl" && r.seed == 1).unwrap();
    assert_eq!(row.final_regret, records.last().unwrap().cum_regret);
    assert!(summary.starts_with("agent,seed,final_regret"));

    let forced = kmdp(&["run", &cfg, "--force"]);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(stdout(&forced), text);
}

#[test]
fn run_overrides_seeds_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.kmdp.conf", "[\"random\"]", "");
    let out = dir.path().join("elsewhere");
    let o = kmdp(&["run", &cfg, "--seeds", "7,8,9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 4);
    assert!(out.join("lqr").join("random-seed8.csv").exists());
}

#[test]
fn empty_agent_list_gives_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "none.kmdp.conf", "[]", "");
    let o = kmdp(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
    let summary = fs::read_to_string(dir.path().join("out/lqr/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn partial_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let broken = "\n[[env]]\nname = \"table\"\n[env.model]\nkind = \"tabular\"\nhorizon = 2\ncsv = \"missing.csv\"\n";
    let cfg = write_config(dir.path(), "mixed.kmdp.conf", "[\"random\"]", broken);
    let o = kmdp(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(stderr(&o).contains("missing.csv"));
}

#[test]
fn mig_matches_library_schedule() {
    let spec = "{kind = \"squared_exponential\", dim = 2, lengthscale = 0.4}";
    let o = kmdp(&["mig", spec, "--t", "25", "--lambda", "0.5", "--mesh", "80", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let kernel = KernelSpec::squared_exponential(2, 0.4);
    let s = mig_schedule(&kernel, &unit_mesh(&kernel, 80, 3), 25, 0.5).unwrap();
    let mut expect = String::from("t,gamma\n");
    for (i, g) in s.iter().enumerate() {
        expect.push_str(&format!("{},{g}\n", i + 1));
    }
    assert_eq!(stdout(&o), expect);
}

#[test]
fn mig_reads_kernel_files_and_handles_edges() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.toml");
    fs::write(&path, "kind = \"linear\"\ndim = 2\n").unwrap();
    let o = kmdp(&["mig", path.to_str().unwrap(), "--t", "0", "--lambda", "1", "--mesh", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "t,gamma\n");
    for lambda in ["0", "-1"] {
        let o = kmdp(&["mig", path.to_str().unwrap(), "--t", "3", "--lambda", lambda, "--mesh", "10"]);
        assert_eq!(o.status.code(), Some(1));
    }
}

const COVERAGE: &str = r#"schema_version = 1
[confidence]
delta = 0.5
[coverage]
state_box = { lo = [-1.0], hi = [1.0] }
action_box = { lo = [-1.0], hi = [1.0] }
reward_kernel = { kind = "squared_exponential", dim = 2, lengthscale = 0.5 }
transition_kernel = { kind = "squared_exponential", dim = 2, lengthscale = 0.5 }
b_r = 1.0
b_p = 1.0
sigma_r = 0.1
sigma_p = 0.1
horizon = 3
episode = 4
grid = { state = [7], action = [3] }
"#;

#[test]
fn coverage_passes_and_fails_on_demand() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cov.kmdp.conf");
    fs::write(&path, COVERAGE).unwrap();
    let p = path.to_str().unwrap();
    let ok = kmdp(&["coverage", p, "--runs", "30"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("pass=true"));
    let broken = kmdp(&["coverage", p, "--runs", "30", "--beta-scale", "0"]);
    assert_eq!(broken.status.code(), Some(2));
    assert!(stdout(&broken).contains("reward_violation_rate=1"));
    let zero = kmdp(&["coverage", p, "--runs", "0"]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let o = kmdp(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("check=") && l.contains("pass=true")));
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.to_str().unwrap().ends_with(kmdp::harness::CONFIG_EXTENSION) {
            kmdp::harness::ExperimentConfig::load(&path).unwrap();
        }
    }
}

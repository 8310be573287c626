use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn proxbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxbo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_passes_on_a_clean_build() {
    let out = proxbo(&["check"]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        4,
        "{text}"
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = proxbo(&["check", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = proxbo(&["launch"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_landscape_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(
        &cfg,
        "landscape.kind=lookup\nlandscape.path=no_such_table.tsv\n",
    )
    .unwrap();
    let out = proxbo(&["run", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("no_such_table.tsv"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_config_file_is_named() {
    let out = proxbo(&["run", "/nonexistent/campaign.cfg"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/nonexistent/campaign.cfg"));
}

#[test]
fn bad_config_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(
        &cfg,
        "landscape.kind=nk\nlandscape.nk.n=6\nlandscape.nk.k=1\ncampaign.batch_size=0\n",
    )
    .unwrap();
    let out = proxbo(&["run", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("campaign.batch_size"),
        "{}",
        stderr(&out)
    );
}

fn write_lookup_config(dir: &Path, method: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("{method}.cfg"));
    fs::write(
        &cfg,
        format!(
            "landscape.kind=lookup\nlandscape.path=nk.tsv\nmethod={method}\n\
             surrogate.members=2\nsurrogate.conv.channels=4\nsurrogate.conv.kernel_size=3\n\
             surrogate.conv.hidden=8\ntrain.epochs=5\nacquisition.kind=ucb\n\
             campaign.rounds=3\ncampaign.batch_size=4\npool.size=32\ncampaign.seeds=0,1\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn generate_run_and_aggregate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("nk");
    let out = proxbo(&[
        "gen-nk",
        "--n",
        "8",
        "--k",
        "2",
        "--seed",
        "4",
        "--out",
        stem.to_str().unwrap(),
        "--enumerate",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("optimum"));

    let cfg = write_lookup_config(dir.path(), "batch_bo");
    let runs = dir.path().join("runs");
    let out = proxbo(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        runs.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = fs::read(runs.join("run_seed1.csv")).unwrap();
    // 1 reference measurement + 3 rounds x 4.
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 1 + 13);

    let again = dir.path().join("again");
    let out = proxbo(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(again.join("run_seed1.csv")).unwrap(), first);
    assert!(!again.join("run_seed0.csv").exists());

    let out = proxbo(&["aggregate", runs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("success rate"));
    for f in ["aggregate.csv", "summary.csv", "plot.gp"] {
        assert!(runs.join(f).exists(), "{f}");
    }
    // Seed 1 appears in both directories.
    let out = proxbo(&["aggregate", runs.to_str().unwrap(), again.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn oversize_enumeration_fails() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("big");
    let out = proxbo(&[
        "gen-nk",
        "--n",
        "24",
        "--k",
        "1",
        "--out",
        stem.to_str().unwrap(),
        "--enumerate",
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("enumeration limit"),
        "{}",
        stderr(&out)
    );
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--mesh-h=1",
    "--final-time=4",
    "--steps=20",
    "--kl-terms=5",
    "--training-size=12",
    "--mc-samples=8",
    "--max-basis=3",
];

fn wrb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wrb"))
        .args(args)
        .args(TINY)
        .arg(format!("--output-dir={}", dir.display()))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn mesh_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&wrb(dir.path(), &["mesh"]));
    assert!(out.contains("nodes = 52"), "{out}");
    assert!(dir.path().join("mesh.txt").exists());
    assert!(dir.path().join("kl.txt").exists());
}

#[test]
fn offline_then_online() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&wrb(dir.path(), &["offline", "--mode=output", "--weighting=pdf"]));
    assert!(out.contains("primal_dim = 3"), "{out}");
    let rom = dir.path().join("rom_output_pdf.wrb");
    assert!(rom.exists());
    let rom = rom.to_str().unwrap();

    let out = stdout(&wrb(dir.path(), &["online", "--rom", rom]));
    assert!(out.starts_with("xi = 0.0,0.0,0.0,0.0,0.0,0.1\n"), "{out}");
    assert!(out.contains("in_gamma = true"));

    let o = wrb(dir.path(), &["online", "--rom", rom, "--xi", "-0.5,0.2,0,0,0,3"]);
    assert!(stdout(&o).contains("in_gamma = true"));

    let o = wrb(dir.path(), &["online", "--rom", rom, "--xi", "5,0,0,0,0,3"]);
    assert!(stdout(&o).contains("in_gamma = false"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));

    let o = wrb(dir.path(), &["online", "--rom", rom, "--xi", "0,0,3"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[input]"));
}

#[test]
fn cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    assert!(stdout(&wrb(dir.path(), &["cache"])).contains("status = built"));
    assert!(stdout(&wrb(dir.path(), &["cache"])).contains("status = reused"));
    let o = wrb(dir.path(), &["cache", "--seed-mc=9"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[cache]"));
}

#[test]
fn convergence_writes_figures() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&wrb(dir.path(), &["convergence"]));
    for name in ["fig2.csv", "fig3a.csv", "fig3b.csv", "pod_sigma.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn bad_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.cfg");
    fs::write(&file, "# settings\nsteps = 20\nkl_terms = lots\n").unwrap();
    let o = wrb(dir.path(), &["mesh", "--config", file.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error[config]"), "{err}");
    assert!(err.contains("bad.cfg:3"), "{err}");
}

#[test]
fn bad_flag_value_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = wrb(dir.path(), &["mesh", "--policy=sometimes"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--policy"), "{err}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn svgf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svgf"))
        .args(args)
        .current_dir(cwd)
        .env("SVGF_THREADS", "2")
        .output()
        .expect("spawn svgf")
}

fn write_cfg(path: &Path, body: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, body).unwrap();
}

const SMALL_MEANFIELD: &str = "mode = meanfield\ngrid_n = 64\ns = 1.5\ngamma_star = 1.5\nseed = 2\nt_end = 2\ndt_max = 0.05\nsample_every = 0.1\nfit_window_lo = 0.3\n";

#[test]
fn run_writes_outputs_and_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(&tmp.path().join("a.cfg"), &format!("{SMALL_MEANFIELD}output_dir = out/a\n"));
    let out = svgf(&["run", "a.cfg"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out/a");
    for f in ["config.echo", "diagnostics.csv", "rates.csv"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("run a: ok"), "{stdout}");
}

#[test]
fn invalid_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    write_cfg(&tmp.path().join("bad.cfg"), "mode = meanfield\ngrid_n = 100\ns = 2\ngamma_star = 1\nseed = 1\nt_end = 1\noutput_dir = o\n");
    let out = svgf(&["run", "bad.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid_n must be a power of two"), "{stderr}");
}

#[test]
fn sweep_then_plot() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, gamma) in [("g1", "1.0"), ("g2", "2.0")] {
        let body = SMALL_MEANFIELD.replace("gamma_star = 1.5", &format!("gamma_star = {gamma}"));
        write_cfg(
            &tmp.path().join("cfgs").join(format!("{name}.cfg")),
            &format!("{body}output_dir = out/{name}\n"),
        );
    }
    let out = svgf(&["sweep", "cfgs", "--out", "out/sweep"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rates = fs::read_to_string(tmp.path().join("out/sweep/rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 3, "{rates}");
    assert!(tmp.path().join("out/sweep/sweep_s1.5.svg").is_file());

    let out = svgf(
        &["plot", "out/g1/diagnostics.csv", "out/g2/diagnostics.csv", "--out", "both.svg", "--style", "loglog"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(tmp.path().join("both.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn plot_of_missing_file_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = svgf(&["plot", "nope.csv", "--out", "x.svg"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("x.svg").exists());
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_svgf"))
        .arg("check")
        .env("SVGF_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = svgf(&["check"], tmp.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 6);
}

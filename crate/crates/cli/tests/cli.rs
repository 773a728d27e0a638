use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecm"))
        .args(args)
        .env_remove("ECM_PRESET_PATH")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn predict_table_ends_with_memory_runtime() {
    let o = ecm(&["predict", "--machine", "skl", "--kernel", "daxpby", "--residence", "mem"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().last().unwrap(), "T_Mem 2.4425 cy/it");
}

#[test]
fn predict_csv_for_l1_triad() {
    let o = ecm(&["predict", "--machine", "skl", "--kernel", "stream_triad", "--residence", "l1", "--format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("component,cycles_per_it\n"));
    assert!(out.lines().any(|l| l == "T_L1,0.1875"));
}

#[test]
fn scale_emits_one_row_per_core() {
    let o = ecm(&["scale", "--machine", "epyc", "--kernel", "daxpby", "--cores", "1..24", "--p0", "1.5", "--format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "cores,u,perf_git_s");
    assert_eq!(lines.len(), 25);
    assert!(lines[24].starts_with("24,"));
}

#[test]
fn csv_output_is_byte_stable() {
    let args = ["compose", "--machine", "pwr9", "--composite", "pcg", "--cores", "1..22", "--format", "csv"];
    let a = ecm(&args);
    let b = ecm(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let seq = ecm(&[&args[..], &["--sequential"]].concat());
    assert_eq!(a.stdout, seq.stdout);
}

#[test]
fn machines_lists_presets() {
    let o = ecm(&["machines", "--format", "csv"]);
    let out = stdout(&o);
    for name in ["skl", "epyc", "tx2", "pwr9"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{name},"))), "{name}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ecm(&["predict", "--machine", "skl", "--kernel", "daxpby", "--nope"]).status.code(), Some(2));
    assert_eq!(ecm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ecm(&["scale", "--machine", "skl", "--kernel", "dot", "--cores", "4..1"]).status.code(), Some(2));
    assert_eq!(ecm(&["predict", "--machine", "skl", "--kernel", "dot", "--residence", "l7"]).status.code(), Some(2));
}

#[test]
fn model_errors_exit_one() {
    let o = ecm(&["predict", "--machine", "nosuch", "--kernel", "daxpby"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nosuch"));
    let o = ecm(&["scale", "--machine", "skl", "--kernel", "daxpby", "--cores", "1..40"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_lists_flags() {
    let o = ecm(&["scale", "--help"]);
    let out = stdout(&o);
    for flag in ["--machine", "--kernel", "--cores", "--p0", "--barrier", "--contended-bw", "--placement", "--format"] {
        assert!(out.contains(flag), "{flag}");
    }
}

#[test]
fn file_paths_and_search_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = ecm_core::machine::builtin_machine_source("skl").unwrap().replace("name = \"skl\"", "name = \"mine\"");
    let file = write(dir.path(), "mine.toml", &text);
    let o = ecm(&["predict", "--machine", &file, "--kernel", "daxpby"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("on mine"));

    let o = Command::new(env!("CARGO_BIN_EXE_ecm"))
        .args(["predict", "--machine", "mine", "--kernel", "daxpby"])
        .env("ECM_PRESET_PATH", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn fit_infer_and_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let curve = ecm(&["scale", "--machine", "skl", "--kernel", "daxpby", "--cores", "1..10", "--p0", "2", "--format", "csv"]);
    let k = ecm_core::kernel::builtin_kernel("daxpby").unwrap();
    let m = ecm_core::machine::builtin_machine("skl").unwrap();
    let opts = ecm_core::scaling::ScalingOptions { p0: 2.0, ..Default::default() };
    let c = ecm_core::scaling::predict_multicore(&k, &m, &(1..=10).collect::<Vec<_>>(), &opts).unwrap();
    assert!(curve.status.success());
    let mut csv = String::from("cores,performance_it_per_s\n");
    for p in &c.points {
        csv += &format!("{},{:e}\n", p.cores, p.performance);
    }
    let measured = write(dir.path(), "measured.csv", &csv);

    let o = ecm(&["fit-p0", "--machine", "skl", "--kernel", "daxpby", "--measured", &measured, "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p0: f64 = stdout(&o).lines().nth(1).unwrap().parse().unwrap();
    assert!((p0 - 2.0).abs() <= 1e-3);

    let o = ecm(&["compare", "--machine", "skl", "--kernel", "daxpby", "--measured", &measured, "--p0", "2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("mean error 0.00%, max error 0.00%"));

    let runtimes = write(dir.path(), "l2.csv", "residence,cycles_per_it\nL2,0.6875\n");
    let o = ecm(&[
        "infer", "--machine", "skl", "--kernel", "stream_triad", "--measured", &runtimes, "--link", "L1L2",
        "--bandwidths", "16,32,64", "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().nth(1).unwrap(), "1,L1L2,64,no-overlap,0");

    let disjoint = write(dir.path(), "far.csv", "cores,performance_it_per_s\n50,1e9\n");
    let o = ecm(&["compare", "--machine", "skl", "--kernel", "daxpby", "--measured", &disjoint]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no overlapping points"));
}

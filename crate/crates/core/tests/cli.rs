use std::fs;
use std::path::Path;
use std::process::Command;

use abc_prc::experiment::{
    read_trace_csv, rows_to_trace, run_experiment, run_seed, Algorithm, ExperimentConfig,
};
use abc_prc::{analytic_posterior, ToleranceSchedule};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_abc-prc"))
}

fn read_values(path: &Path) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap()[1].parse::<f64>().unwrap())
        .collect()
}

#[test]
fn rejection_with_infinite_eps_stays_in_prior() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--algorithm",
            "rejection",
            "--eps",
            "inf",
            "--particles",
            "100",
            "--seeds",
            "1,2",
        ])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("algorithm=rejection"));
    assert!(stdout.contains("oracle_variance=0.9"));
    for seed in [1, 2] {
        let values = read_values(
            &dir.path()
                .join(format!("rejection-seed{seed}-particles.csv")),
        );
        assert_eq!(values.len(), 100);
        assert!(values.iter().all(|v| (-15.0..=15.0).contains(v)));
    }
}

#[test]
fn output_files_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("short.txt");
    fs::write(&sched, "# short run\n5\n1\n0.5\n").unwrap();
    let out = bin()
        .args([
            "--algorithm",
            "prc-corrected",
            "--kernel-var",
            "0.5",
            "--particles",
            "200",
            "--seeds",
            "3",
            "--plot",
        ])
        .arg("--schedule")
        .arg(&sched)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let trace = fs::read_to_string(dir.path().join("prc-corrected-seed3-trace.csv")).unwrap();
    assert!(!trace.contains('\r'));
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,epsilon,mean,variance,sim_calls,acceptance_rate"
    );
    assert_eq!(lines.count(), 3);

    let hist = fs::read_to_string(dir.path().join("prc-corrected-seed3-histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_lo,bin_hi,count,density,oracle_density\n"));
    let total: u64 = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 200);

    let svg = fs::read_to_string(dir.path().join("prc-corrected-seed3-histogram.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn env_var_sets_default_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--algorithm",
            "rejection",
            "--eps",
            "1",
            "--particles",
            "10",
            "--seeds",
            "4",
        ])
        .env("ABC_PRC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("rejection-seed4-trace.csv").exists());
}

#[test]
fn bad_schedule_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("bad.txt");
    fs::write(&sched, "-1\n").unwrap();
    let out = bin()
        .arg("--schedule")
        .arg(&sched)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 1"), "{err}");

    let out = bin()
        .args(["--schedule", "no-such-preset"])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn sampler_failure_names_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("tight.txt");
    fs::write(&sched, "10\n1e-9\n").unwrap();
    let out = bin()
        .args([
            "--algorithm",
            "prc",
            "--particles",
            "50",
            "--seeds",
            "1",
            "--max-sim-calls",
            "20000",
        ])
        .arg("--schedule")
        .arg(&sched)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("iteration 2"), "{err}");
}

#[test]
fn trace_csv_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        algorithm: Algorithm::Prc,
        kernel_var: 0.1,
        schedule: ToleranceSchedule::new(vec![10.0, 5.0, 2.0, 1.0, 0.5]).unwrap(),
        particles: 300,
        seeds: vec![8],
        out_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let summary = run_experiment(&config).unwrap();
    let oracle = analytic_posterior(&config.model().unwrap());
    let rows = read_trace_csv(&dir.path().join("prc-seed8-trace.csv")).unwrap();
    assert_eq!(rows, summary.seeds[0].rows);
    let from_csv = rows_to_trace(&rows, oracle.variance);
    let direct = rows_to_trace(&run_seed(&config, 8).unwrap().rows, oracle.variance);
    assert_eq!(from_csv, direct);
    for (a, b) in from_csv.points.iter().zip(&direct.points) {
        assert_eq!(a.variance.to_bits(), b.variance.to_bits());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_independent_of_thread_count() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .args([
                "--algorithm",
                "prc-corrected",
                "--kernel-var",
                "0.1",
                "--particles",
                "200",
                "--seeds",
                "1,2,3",
                "--threads",
                threads,
            ])
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        (out.stdout, snapshot(dir.path()))
    };
    let one = run("1");
    assert_eq!(one.1.len(), 9);
    assert_eq!(one, run("1"));
    assert_eq!(one, run("4"));
}

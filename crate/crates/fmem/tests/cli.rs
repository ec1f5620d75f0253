use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmem")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "subjects=60", "grid_size=12", "replicates=3", "--seed", "5", "--out", p(dir)];
    args.extend_from_slice(extra);
    fmem(&args)
}

#[test]
fn simulate_is_deterministic_and_reports_prevalence() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = simulate(a.path(), &[]);
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    assert_eq!(code(&simulate(b.path(), &[])), 0);
    for f in ["counts.csv", "covariates.csv", "latent.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let covs = fs::read_to_string(a.path().join("covariates.csv")).unwrap();
    let ys: Vec<f64> = data_rows(&covs).iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(ys.len(), 60);
    let mean = ys.iter().sum::<f64>() / 60.0;
    assert!(stdout(&oa).contains(&format!("prevalence={mean:.4}")), "{}", stdout(&oa));
    assert_eq!(data_rows(&fs::read_to_string(a.path().join("counts.csv")).unwrap()).len(), 60 * 3 * 12);
}

#[test]
fn outputs_embed_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# scenario\nsubjects = 40\ngrid_size=8 # short\nsigma_x=1.5\n").unwrap();
    let o = fmem(&["simulate", "--config", p(&cfg), "rho_x=0.25", "--seed", "9", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("counts.csv")).unwrap();
    let header: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert_eq!(header[0], "# fmem simulate");
    for kv in ["# subjects=40", "# grid_size=8", "# sigma_x=1.5", "# rho_x=0.25", "# seed=9", "# window=3"] {
        assert!(header.contains(&kv), "{kv} missing from {header:?}");
    }
    assert!(!header.iter().any(|l| l.starts_with("# out=") || l.starts_with("# threads=")));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmem(&["simulate", "subjectz=4", "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("subjects"), "{}", stderr(&o));
    assert_eq!(code(&fmem(&["simulate", "--config", "/nonexistent/x.cfg"])), 2);
    assert_eq!(code(&fmem(&["explode"])), 2);
    assert_eq!(code(&fmem(&["fit"])), 2);
    assert_eq!(code(&fmem(&["simulate", "--seed", "minus-one"])), 2);
    assert_eq!(code(&fmem(&["simulate", "window=0", "--out", p(dir.path())])), 2);
    assert_eq!(code(&fmem(&["benchmark", "--method", "mp_mem", "--D", "1", "--out", p(dir.path())])), 2);
    assert_eq!(code(&fmem(&["ingest", "--out", p(dir.path())])), 2);
    assert_eq!(code(&fmem(&["--help"])), 0);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("c.csv");
    let covs = dir.path().join("z.csv");
    fs::write(&counts, "subject_id,day,slot,count\na,1,0,x\n").unwrap();
    fs::write(&covs, "subject_id,Y\na,1\n").unwrap();
    let o = fmem(&["ingest", &format!("counts={}", p(&counts)), &format!("covariates={}", p(&covs)), "--out", p(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
    let o = fmem(&["fit", "data=/nonexistent/dir"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_needs_latent_curves() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(dir.path(), &[])), 0);
    fs::remove_file(dir.path().join("latent.csv")).unwrap();
    let o = fmem(&["fit", &format!("data={}", p(dir.path())), "--method", "oracle", "--K", "4", "--out", p(dir.path())]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn ingest_then_fit_names_every_covariate() {
    let dir = tempfile::tempdir().unwrap();
    let mut counts = String::from("subject_id,day,slot,count\n");
    let mut covs = String::from("subject_id,Y,Age,Female\n");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..40u64 {
        let level = rng.random_range(1..20u64);
        for d in 1..=4 {
            for s in 0..48u64 {
                counts.push_str(&format!("s{i},{d},{s},{}\n", rng.random_range(0..level + s % 5)));
            }
        }
        covs.push_str(&format!("s{i},{},{},{}\n", rng.random_bool(0.4) as u8, rng.random_range(20..80), i % 2));
    }
    counts.push_str("late,1,0,3\n");
    covs.push_str("late,0,60,1\n");
    fs::write(dir.path().join("raw_counts.csv"), counts).unwrap();
    fs::write(dir.path().join("raw_covs.csv"), covs).unwrap();
    let data = dir.path().join("data");
    let o = fmem(&[
        "ingest",
        &format!("counts={}", p(&dir.path().join("raw_counts.csv"))),
        &format!("covariates={}", p(&dir.path().join("raw_covs.csv"))),
        "slots_per_day=48",
        "bins=12",
        "nonwear_run=0",
        "--out",
        p(&data),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("kept 40 subjects (1 excluded"), "{}", stdout(&o));
    let out = dir.path().join("fit");
    let o = fmem(&["fit", &format!("data={}", p(&data)), "--method", "average", "--K", "5", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let coef = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let terms: Vec<&str> = data_rows(&coef).iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(terms, ["Intercept", "Age", "Female"]);
    let beta = fs::read_to_string(out.join("beta.csv")).unwrap();
    assert_eq!(data_rows(&beta).len(), 12);
    assert!(beta.starts_with("# fmem fit\n"));
}

#[test]
fn bootstrap_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(dir.path(), &["subjects=80"])), 0);
    let data = format!("data={}", p(dir.path()));
    let mut bands = Vec::new();
    for (name, threads) in [("one", "1"), ("two", "2"), ("again", "1")] {
        let out = dir.path().join(name);
        let o = fmem(&["bootstrap", &data, "--method", "average", "--K", "4", "--B", "50", "--threads", threads, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        bands.push(fs::read_to_string(out.join("bands.csv")).unwrap());
    }
    assert_eq!(bands[0], bands[1]);
    assert_eq!(bands[0], bands[2]);
    for row in data_rows(&bands[0]) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[3]);
    }
}

#[test]
fn benchmark_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name);
    let run = |name: &str, d: &str, threads: &str| {
        fmem(&[
            "benchmark",
            "subjects=60",
            "grid_size=10",
            "monte_carlo=2",
            "methods=oracle,mp_mem,average",
            "--K",
            "4",
            "--D",
            d,
            "--threads",
            threads,
            "--out",
            p(&out(name)),
        ])
    };
    let o = run("a", "3", "1");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("mp_mem"));
    let report = fs::read_to_string(out("a").join("report_0.csv")).unwrap();
    let rows = data_rows(&report);
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let v: Vec<f64> = row.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[2], v[0] + v[1]);
    }
    assert_eq!(code(&run("b", "3", "2")), 0);
    assert_eq!(report, fs::read_to_string(out("b").join("report_0.csv")).unwrap());
    assert!(!out("a").join("failures.log").exists());

    assert_eq!(code(&run("c", "4", "1")), 0);
    let other = fs::read_to_string(out("c").join("report_0.csv")).unwrap();
    let pick = |text: &str, m: &str| data_rows(text).into_iter().find(|l| l.starts_with(m)).unwrap().to_string();
    for m in ["oracle,", "average,"] {
        assert_eq!(pick(&report, m), pick(&other, m));
    }
}

#[test]
fn benchmark_grid_writes_one_report_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmem(&[
        "benchmark",
        "subjects=40",
        "grid_size=8",
        "monte_carlo=2",
        "sigma_x=1.5,3",
        "methods=oracle,naive",
        "--K",
        "4",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("report_0.csv").exists());
    assert!(dir.path().join("report_1.csv").exists());
    let combined = fs::read_to_string(dir.path().join("benchmark.csv")).unwrap();
    assert_eq!(data_rows(&combined).len(), 4);
}

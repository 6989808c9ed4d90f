//! Acceptance criteria. Each test prints one `PASS`, `FAIL` or `SKIP` line
//! straight to stdout, so the lines appear even when output is captured.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use strucbreak::hypothesis::simulate::simulate_sup_f;
use strucbreak::{
    break_ci, chow_f, estimate_breaks, f_next, grid_search_oracle, max_breaks, optimal_partition,
    segment_costs, sup_f, BreakPartition, CriticalKind, CriticalValueTable, Deterministic, Level,
    ModelSpec, Trimming, Vce,
};
use strucbreak_cli::report::Body;
use strucbreak_cli::{main_with_args, Report};

fn verdict(n: u8, name: &str, ok: Option<bool>, detail: String) {
    let tag = match ok {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "SKIP",
    };
    let line = format!("acceptance {n} {name}: {tag} ({detail})\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert_ne!(ok, Some(false), "{}", line.trim_end());
}

fn breaking_spec(q: usize) -> ModelSpec {
    let vars: Vec<String> = (1..q).map(|k| format!("x{k}")).collect();
    ModelSpec::new("y")
        .break_vars(vars)
        .deterministic(Deterministic::ConstantWithBreaks)
}

#[test]
fn c1_dynamic_program_matches_grid_search() {
    let start = Instant::now();
    let mut r = rng(1001);
    let eps = Trimming::default();
    let mut bad = Vec::new();
    for inst in 0..200 {
        let t = r.random_range(15..=40);
        let q = r.random_range(1..=2);
        let h = eps.min_length(t);
        let s_cap = (t / h - 1).min(3);
        let s = r.random_range(1..=s_cap);
        let mut cols = vec![("y", normals(&mut r, t))];
        if q == 2 {
            cols.push(("x1", normals(&mut r, t)));
        }
        // a planted shift keeps some instances far from the null
        if inst % 2 == 0 {
            let at = r.random_range(h..=t - h);
            for v in cols[0].1[at..].iter_mut() {
                *v += 2.0;
            }
        }
        let d = ts(cols);
        let costs = segment_costs(&d, &breaking_spec(q)).unwrap();
        let dp = optimal_partition(&costs, s, h).unwrap();
        let grid = grid_search_oracle(&costs, s, h).unwrap();
        if dp.partition != grid.partition || !rel_close(dp.total_cost, grid.total_cost, 1e-10) {
            bad.push(inst);
        }
    }
    let took = start.elapsed();
    verdict(
        1,
        "DP equals exhaustive search",
        Some(bad.is_empty() && took < Duration::from_secs(30)),
        format!("200 instances, {} mismatches, {:.2}s", bad.len(), took.as_secs_f64()),
    );
}

#[test]
fn c2_chow_equals_classical_f() {
    let mut r = rng(1002);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let t = r.random_range(30..=80);
        let s = r.random_range(1..=3);
        let h = Trimming::default().min_length(t);
        let parts = all_partitions(t, s, h);
        let breaks = parts[r.random_range(0..parts.len())].clone();
        let with_z = r.random_bool(0.5);
        let x = normals(&mut r, t);
        let z = normals(&mut r, t);
        let y: Vec<f64> = normals(&mut r, t)
            .iter()
            .zip(&x)
            .zip(&z)
            .map(|((e, a), b)| 0.5 + a - 0.3 * b + e)
            .collect();
        let mut spec = breaking_spec(2).vce(Vce::Ssr);
        let mut cols = vec![("y", y.clone()), ("x1", x.clone())];
        if with_z {
            spec = spec.nobreak_vars(["z"]);
            cols.push(("z", z.clone()));
        }
        let got = chow_f(&ts(cols), &spec, &BreakPartition::new(breaks.clone(), t).unwrap())
            .unwrap()
            .statistic;

        let one = vec![1.0; t];
        let mut restricted = vec![one.clone(), x.clone()];
        let mut unrestricted = Vec::new();
        for (lo, hi) in regimes(&breaks, t) {
            unrestricted.push(mask(&one, t, lo, hi));
            unrestricted.push(mask(&x, t, lo, hi));
        }
        if with_z {
            restricted.push(z.clone());
            unrestricted.push(z.clone());
        }
        let (_, ssr_r) = ols(&restricted, &y).unwrap();
        let (_, ssr_u) = ols(&unrestricted, &y).unwrap();
        let want = f_ratio(ssr_r, ssr_u, 2 * s, t - unrestricted.len());
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    verdict(
        2,
        "Chow F equals restricted/unrestricted ratio",
        Some(worst <= 1e-8),
        format!("50 instances, max relative gap {worst:.1e}"),
    );
}

#[test]
fn c3_max_breaks() {
    let got: Vec<usize> = [0.15, 0.10, 0.05].map(|e| max_breaks(e).unwrap()).to_vec();
    verdict(
        3,
        "max breaks for trimming 0.15/0.10/0.05",
        Some(got == [5, 8, 18]),
        format!("{got:?}"),
    );
}

fn run_json(line: &str) -> anyhow::Result<Report> {
    let mut args = vec!["strucbreak".to_string()];
    args.extend(line.split_whitespace().map(String::from));
    args.extend(["--format".into(), "json".into()]);
    Ok(serde_json::from_str(&main_with_args(args)?.text)?)
}

fn data_file(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.exists())
}

/// Copies the data file into a scratch directory so the state sidecar does
/// not land next to the user's file.
fn scratch(path: &PathBuf) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let to = dir.path().join("data.csv");
    std::fs::copy(path, &to).unwrap();
    (dir, to.display().to_string())
}

#[test]
fn c4_us_time_series() {
    let Some(path) = data_file("STRUCBREAK_COVID_TS") else {
        verdict(4, "US weekly deaths on lagged cases", None, "STRUCBREAK_COVID_TS not set".into());
        return;
    };
    let (_dir, f) = scratch(&path);
    let base = format!("-i {f} --time week deaths L.cases --from 2020w4 --to 2021w34 --trimming 0.15");
    let check = || -> anyhow::Result<(bool, String)> {
        let auto = run_json(&format!("auto {base}"))?;
        let Body::Auto { sequential, estimate } = auto.result else {
            anyhow::bail!("unexpected report")
        };
        let labels: Vec<&str> = estimate.breaks.iter().map(|b| b.label.as_str()).collect();
        let slopes: Vec<f64> = estimate
            .regimes
            .iter()
            .map(|r| r.coefficients.iter().find(|c| c.name == "L.cases").map_or(f64::NAN, |c| c.estimate))
            .collect();
        let known = run_json(&format!("test {base} --breakpoints 2020w20,2021w11"))?;
        let Body::Test(k) = known.result else { anyhow::bail!("unexpected report") };
        let ok = sequential.breaks == 2
            && labels == ["2020w20", "2021w11"]
            && (k.statistic - 134.7).abs() <= 0.5
            && slopes.len() == 3
            && slopes.iter().zip([0.059, 0.014, 0.006]).all(|(a, b)| (a - b).abs() <= 0.002);
        Ok((
            ok,
            format!("s = {}, breaks {labels:?}, known-break F {:.2}, slopes {slopes:.4?}", sequential.breaks, k.statistic),
        ))
    };
    match check() {
        Ok((ok, detail)) => verdict(4, "US weekly deaths on lagged cases", Some(ok), detail),
        Err(e) => verdict(4, "US weekly deaths on lagged cases", Some(false), format!("{e:#}")),
    }
}

#[test]
fn c5_state_panel() {
    let Some(path) = data_file("STRUCBREAK_COVID_PANEL") else {
        verdict(5, "state panel with cross-section averages", None, "STRUCBREAK_COVID_PANEL not set".into());
        return;
    };
    let (_dir, f) = scratch(&path);
    let line = format!(
        "auto -i {f} --time week --unit state deaths L.cases --csa L.cases --trimming 0.10 --vce hac --level 95"
    );
    match run_json(&line) {
        Ok(rep) => {
            let Body::Auto { sequential, estimate } = rep.result else { panic!("unexpected report") };
            let labels: Vec<String> = estimate.breaks.iter().map(|b| b.label.clone()).collect();
            let ok = sequential.breaks == 3 && labels == ["2020w19", "2020w51", "2021w9"];
            verdict(
                5,
                "state panel with cross-section averages",
                Some(ok),
                format!("s = {}, breaks {labels:?}", sequential.breaks),
            );
        }
        Err(e) => verdict(5, "state panel with cross-section averages", Some(false), format!("{e:#}")),
    }
}

#[test]
fn c6_size_of_sup_f() {
    let start = Instant::now();
    let mut r = rng(1006);
    let t = 200;
    let reps = 2000;
    let spec = breaking_spec(1);
    let mut rejections = 0;
    for _ in 0..reps {
        let d = ts(vec![("y", normals(&mut r, t))]);
        if sup_f(&d, &spec, 1).unwrap().rejects(Level::L95).unwrap() {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    let took = start.elapsed();
    verdict(
        6,
        "size of supF(1) at 5%",
        Some((0.02..=0.09).contains(&rate) && took < Duration::from_secs(300)),
        format!("rejection rate {rate:.4} over {reps} draws, {:.1}s", took.as_secs_f64()),
    );
}

#[test]
fn c7_critical_values_reproduce() {
    let table = CriticalValueTable::embedded();
    let eps = Trimming::default();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for q in 1..=3 {
        // same seed as the shipped table, so the draws are common random numbers
        let draws = simulate_sup_f(q, &[eps], 5000, 1000, 20240101 + q as u64).unwrap();
        for s in 1..=eps.max_breaks() {
            let sim = draws.critical(CriticalKind::SupF, s, s, eps).unwrap();
            let shipped = table.criticals(CriticalKind::SupF, q, s, s, eps).unwrap();
            for (k, lvl) in Level::ALL.into_iter().enumerate() {
                let z = (sim.values[k] - shipped.at(lvl)).abs() / sim.std_errors[k];
                worst = worst.max(z);
                checked += 1;
            }
        }
    }
    verdict(
        7,
        "shipped supF critical values reproduce",
        Some(worst <= 3.0),
        format!("{checked} entries, largest gap {worst:.2} Monte Carlo s.e."),
    );
}

#[test]
fn c8_interval_coverage() {
    let mut r = rng(1008);
    let (t, at) = (200, 100);
    let reps = 1000;
    let spec = breaking_spec(1);
    let mut covered = 0;
    for _ in 0..reps {
        let y: Vec<f64> = normals(&mut r, t)
            .into_iter()
            .enumerate()
            .map(|(i, e)| e + if i >= at { 1.0 } else { 0.0 })
            .collect();
        let d = ts(vec![("y", y)]);
        let est = estimate_breaks(&d, &spec, 1).unwrap();
        let ci = &break_ci(&d, &spec, &est.partition, 0.95).unwrap()[0];
        if ci.lower_index <= at && at <= ci.upper_index {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    verdict(
        8,
        "95% break interval coverage",
        Some((0.90..=0.99).contains(&rate)),
        format!("coverage {rate:.3} over {reps} draws"),
    );
}

#[test]
fn c9_affine_invariance() {
    let mut r = rng(1009);
    let mut failures = 0;
    for _ in 0..20 {
        let t = r.random_range(60..=120);
        let x = normals(&mut r, t);
        let e = normals(&mut r, t);
        let cut = r.random_range(t / 3..2 * t / 3);
        let y: Vec<f64> = (0..t)
            .map(|i| if i < cut { 1.0 + 0.5 * x[i] } else { -0.5 + 1.5 * x[i] } + e[i])
            .collect();
        let moved: Vec<f64> = y.iter().map(|v| 7.3 * v - 4.0).collect();
        let spec = breaking_spec(2);
        let a = ts(vec![("y", y), ("x1", x.clone())]);
        let b = ts(vec![("y", moved), ("x1", x)]);
        let same_breaks = estimate_breaks(&a, &spec, 2).unwrap().partition
            == estimate_breaks(&b, &spec, 2).unwrap().partition;
        let sf = rel_close(
            sup_f(&a, &spec, 2).unwrap().statistic,
            sup_f(&b, &spec, 2).unwrap().statistic,
            1e-8,
        );
        let fn_ = rel_close(
            f_next(&a, &spec, 1).unwrap().statistic,
            f_next(&b, &spec, 1).unwrap().statistic,
            1e-8,
        );
        if !(same_breaks && sf && fn_) {
            failures += 1;
        }
    }
    verdict(
        9,
        "scale and shift invariance",
        Some(failures == 0),
        format!("20 instances, {failures} failures"),
    );
}

mod common;

use common::*;
use strucbreak::hypothesis::simulate::simulate_sup_f;
use strucbreak::{
    chow_f, double_max, f_next, sequential_count, simulate_critical_values, sup_f, BreakPartition,
    CriticalKind, CriticalValueTable, Deterministic, Level, ModelSpec, TestDetails, Trimming, Vce,
};

fn mean_shift_spec() -> ModelSpec {
    ModelSpec::new("y").deterministic(Deterministic::ConstantWithBreaks)
}

fn slope_spec() -> ModelSpec {
    ModelSpec::new("y")
        .break_vars(["x"])
        .deterministic(Deterministic::ConstantWithBreaks)
}

fn mean_ssr(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m).powi(2)).sum()
}

#[test]
fn sup_f_is_the_largest_single_split_f() {
    let t = 20;
    let h = Trimming::default().min_length(t);
    for seed in 0..5 {
        let mut r = rng(40 + seed);
        let y = normals(&mut r, t);
        let d = ts(vec![("y", y.clone())]);
        let out = sup_f(&d, &mean_shift_spec(), 1).unwrap();
        let ssr0 = mean_ssr(&y);
        let (tau, f) = (h..=t - h)
            .map(|e| {
                let ssr1 = mean_ssr(&y[..e]) + mean_ssr(&y[e..]);
                (e, f_ratio(ssr0, ssr1, 1, t - 2))
            })
            .fold((0, f64::NEG_INFINITY), |b, v| if v.1 > b.1 { v } else { b });
        assert!(rel_close(out.statistic, f, 1e-8), "{} vs {f}", out.statistic);
        assert_eq!(out.attained_partition.breaks(), &[tau]);
        assert_eq!(out.q, 1);
        assert!(out.critical.is_some());
    }
}

#[test]
fn f_next_from_zero_is_sup_f_one() {
    let mut r = rng(50);
    let t = 60;
    let d = ts(vec![("y", normals(&mut r, t)), ("x", normals(&mut r, t))]);
    let a = sup_f(&d, &slope_spec(), 1).unwrap();
    let b = f_next(&d, &slope_spec(), 0).unwrap();
    assert!((a.statistic - b.statistic).abs() <= 1e-8 * a.statistic.max(1.0));
    let c = CriticalValueTable::embedded()
        .criticals(CriticalKind::FNext, 2, 0, 0, Trimming::default())
        .unwrap();
    assert_eq!(b.critical, Some(c));
}

#[test]
fn f_next_matches_enumeration_over_both_regimes() {
    let t = 30;
    let mut r = rng(60);
    let x = normals(&mut r, t);
    let e = normals(&mut r, t);
    let y: Vec<f64> = (0..t)
        .map(|i| {
            let (c, b) = if i < 10 { (0.0, 1.0) } else if i < 20 { (3.0, -1.0) } else { (-2.0, 2.0) };
            c + b * x[i] + 0.3 * e[i]
        })
        .collect();
    let d = ts(vec![("y", y.clone()), ("x", x.clone())]);
    let spec = slope_spec();
    let out = f_next(&d, &spec, 1).unwrap();
    let base = out.attained_partition.breaks().to_vec();
    assert_eq!(base.len(), 1);

    let seg_ssr = |lo: usize, hi: usize| {
        common::ols(&[x[lo - 1..hi].to_vec(), vec![1.0; hi - lo + 1]], &y[lo - 1..hi])
            .unwrap()
            .1
    };
    let mut best = (0, f64::NEG_INFINITY);
    for (lo, hi) in regimes(&base, t) {
        let hj = Trimming::default().min_length(hi - lo + 1);
        let coarse = seg_ssr(lo, hi);
        let other: f64 = regimes(&base, t)
            .into_iter()
            .filter(|&(a, _)| a != lo)
            .map(|(a, b)| seg_ssr(a, b))
            .sum();
        for tau in lo - 1 + hj..=hi - hj {
            let fine = seg_ssr(lo, tau) + seg_ssr(tau + 1, hi);
            let dof = t - 3 * 2;
            let f = f_ratio(other + coarse, other + fine, 2, dof);
            if f > best.1 {
                best = (tau, f);
            }
        }
    }
    let Some(TestDetails::FNext { tau, .. }) = out.details else {
        panic!("missing details")
    };
    assert_eq!(tau, best.0);
    assert!(rel_close(out.statistic, best.1, 1e-8), "{} vs {}", out.statistic, best.1);
    let mut both = base.clone();
    both.push(tau);
    both.sort();
    // planted at 10 and 20; noise may move a date by one
    assert!(both.iter().zip([10usize, 20]).all(|(a, b)| a.abs_diff(b) <= 1));
}

#[test]
fn double_max_bounds() {
    let mut r = rng(70);
    let t = 80;
    let d = ts(vec![("y", normals(&mut r, t)), ("x", normals(&mut r, t))]);
    let spec = slope_spec();
    let s1 = sup_f(&d, &spec, 1).unwrap();
    let w1 = double_max(&d, &spec, 1, 1, true, 0.95).unwrap();
    assert_eq!(w1.statistic, s1.statistic);
    let dm = double_max(&d, &spec, 1, 5, false, 0.95).unwrap();
    assert!(dm.statistic >= s1.statistic);
    let Some(TestDetails::DoubleMax { sup_f: per_s, argmax, .. }) = &dm.details else {
        panic!("missing details")
    };
    assert_eq!(per_s.len(), 5);
    assert_eq!(per_s[argmax - 1], dm.statistic);
    let wd = double_max(&d, &spec, 2, 4, true, 0.95).unwrap();
    let Some(TestDetails::DoubleMax { weights, .. }) = &wd.details else {
        panic!("missing details")
    };
    assert_eq!(weights.len(), 3);
    assert!(weights.iter().all(|&w| w > 1.0));
    assert!(double_max(&d, &spec, 3, 2, false, 0.95).is_err());
}

#[test]
fn sup_f_dominates_chow_at_any_partition() {
    let t = 40;
    let h = Trimming::default().min_length(t);
    let mut r = rng(80);
    let d = ts(vec![("y", normals(&mut r, t)), ("x", normals(&mut r, t))]);
    let spec = slope_spec();
    for s in 1..=2 {
        let sf = sup_f(&d, &spec, s).unwrap().statistic;
        for p in all_partitions(t, s, h).into_iter().step_by(7) {
            let c = chow_f(&d, &spec, &BreakPartition::new(p, t).unwrap())
                .unwrap()
                .statistic;
            assert!(sf >= c - 1e-8 * sf.max(1.0));
        }
    }
}

#[test]
fn sequential_without_noise_finds_no_break() {
    let t = 50;
    let x: Vec<f64> = (0..t).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.5 * v).collect();
    let d = ts(vec![("y", y), ("x", x)]);
    let out = sequential_count(&d, &slope_spec(), 3, 0.95).unwrap();
    assert_eq!(out.breaks, 0);
    assert_eq!(out.steps.len(), 1);
    assert_eq!(out.steps[0].statistic, 0.0);
}

#[test]
fn sequential_trace_reuses_f_next() {
    let t = 90;
    let mut r = rng(90);
    let e = normals(&mut r, t);
    let y: Vec<f64> = (0..t)
        .map(|i| if i < 30 { 0.0 } else if i < 60 { 2.0 } else { -1.0 } + 0.5 * e[i])
        .collect();
    let d = ts(vec![("y", y)]);
    let spec = mean_shift_spec();
    let out = sequential_count(&d, &spec, 5, 0.95).unwrap();
    assert_eq!(out.breaks, 2);
    assert_eq!(out.steps.len(), 3);
    for (s, step) in out.steps.iter().enumerate() {
        let direct = f_next(&d, &spec, s).unwrap();
        assert_eq!(step.statistic.to_bits(), direct.statistic.to_bits());
        assert_eq!(step.critical, direct.critical);
    }
    assert_eq!(out.steps[2].attained_partition.breaks(), &[30, 60]);
}

#[test]
fn rejection_flags_are_nested() {
    let mut r = rng(95);
    for seed in 0..10 {
        let t = 60;
        let e = normals(&mut r, t);
        let y: Vec<f64> = (0..t)
            .map(|i| if i < 30 { 0.0 } else { 0.1 * seed as f64 } + e[i])
            .collect();
        let d = ts(vec![("y", y)]);
        let out = sup_f(&d, &mean_shift_spec(), 1).unwrap();
        let rj = out.reject.unwrap();
        assert!(!rj.at99 || rj.at95);
        assert!(!rj.at95 || rj.at90);
    }
}

#[test]
fn embedded_table_is_monotone_and_complete() {
    let table = CriticalValueTable::embedded();
    for trim in Trimming::SUPPORTED {
        for q in 1..=10 {
            for s in 1..=trim.max_breaks() {
                let c = table.criticals(CriticalKind::SupF, q, s, s, trim).unwrap();
                assert!(c.c90 < c.c95 && c.c95 < c.c99, "q {q} s {s} {trim}");
                table.criticals(CriticalKind::FNext, q, s - 1, s - 1, trim).unwrap();
                table.criticals(CriticalKind::Dmax, q, 1, s, trim).unwrap();
                table.criticals(CriticalKind::WDmax, q, 1, s, trim).unwrap();
            }
        }
    }
    for level in Level::ALL {
        let a = table.lookup(CriticalKind::SupF, 1, 1, 1, Trimming::default(), level).unwrap();
        let b = table.lookup(CriticalKind::SupF, 3, 1, 1, Trimming::default(), level).unwrap();
        assert!(a > b, "supF is normalized by q, so per-restriction values fall with q");
    }
}

#[test]
fn simulated_quantiles_increase_with_level() {
    let c = simulate_critical_values(CriticalKind::SupF, 1, 1, 1, Trimming::default(), 1000, 1000, 3)
        .unwrap();
    assert!(c.values[0] < c.values[1] && c.values[1] < c.values[2]);
    assert!(c.std_errors.iter().all(|&s| s > 0.0));
}

#[test]
fn wider_trimming_never_raises_sup_f() {
    let draws = simulate_sup_f(1, &Trimming::SUPPORTED, 1000, 1000, 17).unwrap();
    let mut prev: Option<Vec<f64>> = None;
    for trim in Trimming::SUPPORTED {
        let v = draws.sup_f(trim, 1).unwrap();
        if let Some(p) = &prev {
            for (a, b) in v.iter().zip(p) {
                assert!(a <= b);
            }
        }
        prev = Some(v);
    }
}

#[test]
fn simulation_is_seed_reproducible() {
    let a = simulate_critical_values(CriticalKind::Dmax, 2, 1, 3, Trimming::default(), 1000, 1000, 5)
        .unwrap();
    let b = simulate_critical_values(CriticalKind::Dmax, 2, 1, 3, Trimming::default(), 1000, 1000, 5)
        .unwrap();
    assert_eq!(a, b);
    assert!(simulate_critical_values(CriticalKind::SupF, 1, 1, 1, Trimming::default(), 10, 1000, 5)
        .is_err());
}

#[test]
fn breaking_fixed_effects_alone() {
    let (n, t) = (4, 40);
    let mut r = rng(99);
    let e = normals(&mut r, n * t);
    let y: Vec<f64> = (0..n * t)
        .map(|k| {
            let (i, s) = (k / t, k % t);
            let mu = if s < 20 { i as f64 } else { -(i as f64) };
            mu + 0.5 * e[k]
        })
        .collect();
    let d = panel(n, t, vec![("y", y)]);
    let spec = ModelSpec::new("y")
        .deterministic(Deterministic::FixedEffectsWithBreaks)
        .vce(Vce::Hc);
    let known = chow_f(&d, &spec, &BreakPartition::new(vec![20], t).unwrap()).unwrap();
    assert!(known.statistic > 10.0);
    assert!(!known.warnings.is_empty());
    let sf = sup_f(&d, &spec, 1).unwrap();
    assert_eq!(sf.q, 1);
    assert_eq!(sf.attained_partition.breaks(), &[20]);
}

mod common;

use common::*;
use strucbreak::{
    build_design, build_explicit_design, cross_sectional_averages, ols, regime_indicator,
    BreakPartition, ColumnRole, Deterministic, ModelSpec, Trimming,
};

#[test]
fn regime_indicator_examples() {
    let p = |b: Vec<usize>, t| BreakPartition::new(b, t).unwrap();
    assert_eq!(regime_indicator(&p(vec![2], 5), 5).unwrap(), vec![1, 1, 2, 2, 2]);
    assert_eq!(regime_indicator(&p(vec![2, 4], 6), 6).unwrap(), vec![1, 1, 2, 2, 3, 3]);
    assert_eq!(regime_indicator(&p(vec![], 4), 4).unwrap(), vec![1, 1, 1, 1]);
}

#[test]
fn max_breaks_values() {
    assert_eq!(strucbreak::max_breaks(0.15).unwrap(), 5);
    assert_eq!(strucbreak::max_breaks(0.10).unwrap(), 8);
    assert_eq!(strucbreak::max_breaks(0.05).unwrap(), 18);
    assert!(strucbreak::max_breaks(0.12).is_err());
}

#[test]
fn cross_sectional_average_examples() {
    let d = panel(2, 3, vec![("x", vec![1.0, 5.0, 0.0, 3.0, 7.0, 2.0])]);
    let avg = cross_sectional_averages(&d, &["x".to_string()]).unwrap();
    assert_eq!(avg[0], vec![2.0, 6.0, 1.0]);
    let one = ts(vec![("x", vec![4.0, -1.0])]);
    assert_eq!(
        cross_sectional_averages(&one, &["x".to_string()]).unwrap()[0],
        vec![4.0, -1.0]
    );
}

#[test]
fn column_counts() {
    let t = 20;
    let mut r = rng(1);
    let d = ts(vec![("y", normals(&mut r, t)), ("x", normals(&mut r, t))]);
    let spec = ModelSpec::new("y")
        .break_vars(["x"])
        .deterministic(Deterministic::Constant);
    let sys = build_design(&d, &spec, &BreakPartition::new(vec![6, 13], t).unwrap()).unwrap();
    let breaking = sys
        .column_map
        .iter()
        .filter(|c| c.role == ColumnRole::Breaking)
        .count();
    assert_eq!(breaking, 3);
    assert_eq!(sys.n_cols() - breaking, 1);
    assert_eq!(sys.n_cols(), 4);
}

#[test]
fn fixed_effects_are_within_transformed() {
    let (n, t) = (3, 20);
    let mut r = rng(2);
    let x: Vec<f64> = normals(&mut r, n * t).into_iter().map(|v| v + 5.0).collect();
    let y: Vec<f64> = normals(&mut r, n * t).into_iter().map(|v| v - 3.0).collect();
    let d = panel(n, t, vec![("y", y), ("x", x)]);
    let spec = ModelSpec::new("y").break_vars(["x"]);
    let sys = build_design(&d, &spec, &BreakPartition::new(vec![9], t).unwrap()).unwrap();
    let scale = sys.response.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for i in 0..n {
        let rows = i * t..(i + 1) * t;
        let m: f64 = sys.response[rows.clone()].iter().sum::<f64>() / t as f64;
        assert!(m.abs() < 1e-8 * scale);
        for c in 0..sys.n_cols() {
            let m: f64 = rows.clone().map(|row| sys.design[(row, c)]).sum::<f64>() / t as f64;
            assert!(m.abs() < 1e-8 * scale.max(1.0), "unit {i}, column {c}: {m}");
        }
    }
}

#[test]
fn explicit_design_matches_hand_built_stack() {
    let (n, t) = (2, 10);
    let mut r = rng(3);
    let x = normals(&mut r, n * t);
    let z = normals(&mut r, n * t);
    let y = normals(&mut r, n * t);
    let d = panel(n, t, vec![("y", y.clone()), ("x", x.clone()), ("z", z.clone())]);
    let spec = ModelSpec::new("y")
        .break_vars(["x"])
        .csa_nobreak(["z"])
        .deterministic(Deterministic::Constant)
        .trimming(Trimming::new(0.2).unwrap());
    let p = BreakPartition::new(vec![5], t).unwrap();
    let sys = build_explicit_design(&d, &spec, &p).unwrap();

    // x in regime 1, x in regime 2, constant, zbar for unit 1, zbar for unit 2
    let zbar: Vec<f64> = (0..t).map(|s| (z[s] + z[t + s]) / 2.0).collect();
    let mut expected = vec![mask(&x, t, 1, 5), mask(&x, t, 6, t), vec![1.0; n * t]];
    for unit in 0..n {
        expected.push(
            (0..n * t)
                .map(|row| if row / t == unit { zbar[row % t] } else { 0.0 })
                .collect(),
        );
    }
    assert_eq!(sys.n_cols(), expected.len());
    assert_eq!(sys.n_rows(), n * t);
    for (c, col) in expected.iter().enumerate() {
        for row in 0..n * t {
            assert_eq!(sys.design[(row, c)], col[row], "row {row}, column {c}");
        }
    }
    assert_eq!(sys.response, y);
    let unit_cols: Vec<_> = sys.column_map.iter().filter(|c| c.unit.is_some()).collect();
    assert_eq!(unit_cols.len(), 2);
    assert!(unit_cols.iter().all(|c| c.name == "csa(z)"));
}

#[test]
fn partialled_and_explicit_designs_agree() {
    let (n, t) = (3, 24);
    let mut r = rng(4);
    let x = normals(&mut r, n * t);
    let z = normals(&mut r, n * t);
    let g = normals(&mut r, n * t);
    let y = normals(&mut r, n * t);
    let d = panel(n, t, vec![("y", y), ("x", x), ("z", z), ("g", g)]);
    let p = BreakPartition::new(vec![8, 16], t).unwrap();
    for det in [
        Deterministic::FixedEffects,
        Deterministic::FixedEffectsWithBreaks,
        Deterministic::Constant,
    ] {
        let spec = ModelSpec::new("y")
            .break_vars(["x"])
            .nobreak_vars(["g"])
            .csa_break(["x"])
            .csa_nobreak(["z"])
            .deterministic(det);
        let part = build_design(&d, &spec, &p).unwrap();
        let full = build_explicit_design(&d, &spec, &p).unwrap();
        let fp = ols(&part).unwrap();
        let ff = ols(&full).unwrap();
        assert!(rel_close(fp.ssr, ff.ssr, 1e-9), "{det}: {} vs {}", fp.ssr, ff.ssr);
        for c in 0..part.n_cols() {
            assert_eq!(part.column_map[c], full.column_map[c]);
            assert!(
                (fp.coefficients[c] - ff.coefficients[c]).abs() < 1e-9,
                "{det}, column {c}"
            );
        }
        for (a, b) in fp.residuals.iter().zip(&ff.residuals) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(part.absorbed, full.n_cols() - part.n_cols());
    }
}

#[test]
fn pure_change_is_block_diagonal() {
    let t = 45;
    let mut r = rng(5);
    let x = normals(&mut r, t);
    let y = normals(&mut r, t);
    let d = ts(vec![("y", y.clone()), ("x", x.clone())]);
    let spec = ModelSpec::new("y")
        .break_vars(["x"])
        .deterministic(Deterministic::ConstantWithBreaks);
    let breaks = vec![12, 30];
    let fit = ols(&build_design(&d, &spec, &BreakPartition::new(breaks.clone(), t).unwrap()).unwrap())
        .unwrap();
    let sum: f64 = regimes(&breaks, t)
        .into_iter()
        .map(|(a, b)| {
            common::ols(&[x[a - 1..b].to_vec(), vec![1.0; b - a + 1]], &y[a - 1..b])
                .unwrap()
                .1
        })
        .sum();
    assert!(rel_close(fit.ssr, sum, 1e-8));
}

#[test]
fn panel_pure_change_is_block_diagonal() {
    let (n, t) = (3, 30);
    let mut r = rng(6);
    let x = normals(&mut r, n * t);
    let y = normals(&mut r, n * t);
    let d = panel(n, t, vec![("y", y.clone()), ("x", x.clone())]);
    let spec = ModelSpec::new("y")
        .break_vars(["x"])
        .deterministic(Deterministic::FixedEffectsWithBreaks);
    let breaks = vec![10, 20];
    let fit = ols(&build_design(&d, &spec, &BreakPartition::new(breaks.clone(), t).unwrap()).unwrap())
        .unwrap();
    // per regime: common slope, one intercept per unit
    let sum: f64 = regimes(&breaks, t)
        .into_iter()
        .map(|(a, b)| {
            let rows: Vec<usize> = (0..n)
                .flat_map(|i| (a - 1..b).map(move |s| i * t + s))
                .collect();
            let mut cols = vec![rows.iter().map(|&k| x[k]).collect::<Vec<_>>()];
            for i in 0..n {
                cols.push(rows.iter().map(|&k| if k / t == i { 1.0 } else { 0.0 }).collect());
            }
            let ys: Vec<f64> = rows.iter().map(|&k| y[k]).collect();
            common::ols(&cols, &ys).unwrap().1
        })
        .sum();
    assert!(rel_close(fit.ssr, sum, 1e-8));
}

#[test]
fn design_is_deterministic() {
    let (n, t) = (2, 20);
    let mut r = rng(7);
    let d = panel(
        n,
        t,
        vec![("y", normals(&mut r, n * t)), ("x", normals(&mut r, n * t))],
    );
    let spec = ModelSpec::new("y").break_vars(["x"]).csa_break(["x"]);
    let p = BreakPartition::new(vec![10], t).unwrap();
    let a = build_explicit_design(&d, &spec, &p).unwrap();
    let b = build_explicit_design(&d, &spec, &p).unwrap();
    assert_eq!(a.column_map, b.column_map);
    assert_eq!(a.design.as_slice(), b.design.as_slice());
}

#[test]
fn invalid_specifications_are_rejected() {
    let (n, t) = (2, 20);
    let mut r = rng(8);
    let d = panel(
        n,
        t,
        vec![("y", normals(&mut r, n * t)), ("x", normals(&mut r, n * t))],
    );
    // fixed effects without any breaking regressor
    let spec = ModelSpec::new("y").nobreak_vars(["x"]);
    assert!(build_design(&d, &spec, &BreakPartition::empty()).is_err());
    // the dependent variable may not be a regressor
    let spec = ModelSpec::new("y").break_vars(["y"]);
    assert!(build_design(&d, &spec, &BreakPartition::empty()).is_err());
    // overlapping lists
    let spec = ModelSpec::new("y").break_vars(["x"]).nobreak_vars(["x"]);
    assert!(build_design(&d, &spec, &BreakPartition::empty()).is_err());
    // breaking fixed effects alone are a valid model
    let spec = ModelSpec::new("y").deterministic(Deterministic::FixedEffectsWithBreaks);
    assert!(build_design(&d, &spec, &BreakPartition::new(vec![10], t).unwrap()).is_ok());
}

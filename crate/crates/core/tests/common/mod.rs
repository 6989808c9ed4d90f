//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's numerical code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use strucbreak::PanelDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn ts(cols: Vec<(&str, Vec<f64>)>) -> PanelDataset {
    PanelDataset::time_series(cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect())
        .unwrap()
}

pub fn panel(n: usize, t: usize, cols: Vec<(&str, Vec<f64>)>) -> PanelDataset {
    PanelDataset::new(
        (1..=n).map(|i| format!("u{i}")).collect(),
        (1..=t as i64).collect(),
        None,
        cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
    )
    .unwrap()
}

/// Solves `A x = b` by Gauss-Jordan elimination with partial pivoting.
/// Returns `None` for a (numerically) singular system.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1e-300);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() <= 1e-11 * scale {
            return None;
        }
        m.swap(c, p);
        let piv = m[c][c];
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..=n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n]).collect())
}

/// OLS of `y` on the given columns through the normal equations.
/// Returns coefficients and SSR.
pub fn ols(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    if k == 0 {
        return Some((vec![], y.iter().map(|v| v * v).sum()));
    }
    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| dot(&cols[a], &cols[b])).collect())
        .collect();
    let xty: Vec<f64> = (0..k).map(|a| dot(&cols[a], y)).collect();
    let beta = solve(&xtx, &xty)?;
    let ssr = (0..y.len())
        .map(|i| {
            let fit: f64 = (0..k).map(|c| cols[c][i] * beta[c]).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    Some((beta, ssr))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Copy of `v` that is zero outside the 1-based positions `lo..=hi` of each
/// unit's block of length `t`.
pub fn mask(v: &[f64], t: usize, lo: usize, hi: usize) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = i % t + 1;
            if p >= lo && p <= hi {
                x
            } else {
                0.0
            }
        })
        .collect()
}

/// `(first, last)` positions of each regime for break dates `breaks`.
pub fn regimes(breaks: &[usize], t: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 1;
    for &b in breaks {
        out.push((start, b));
        start = b + 1;
    }
    out.push((start, t));
    out
}

/// All break vectors with `s` breaks and regimes of at least `h`
/// observations.
pub fn all_partitions(t: usize, s: usize, h: usize) -> Vec<Vec<usize>> {
    fn rec(t: usize, h: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        let prev = cur.last().copied().unwrap_or(0);
        for e in prev + h..=t.saturating_sub(left * h) {
            cur.push(e);
            rec(t, h, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(t, h, s, &mut Vec::new(), &mut out);
    out
}

/// Classical F ratio of the restricted against the unrestricted fit.
pub fn f_ratio(ssr_r: f64, ssr_u: f64, restrictions: usize, dof: usize) -> f64 {
    ((ssr_r - ssr_u) / restrictions as f64) / (ssr_u / dof as f64)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

//! Least squares, covariance estimators and the known-breaks F test.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::PanelDataset;
use crate::design::{check_partition, Layout, RegressionSystem, ResolvedModel};
use crate::error::{Error, Result};
use crate::hypothesis::{CriticalValues, Hypothesis, TestOutcome};
use crate::linalg::{cholesky, cholesky_solve, Matrix, PivotedQr};
use crate::partition::BreakPartition;
use crate::scalar::{dot, norm_sq, Scalar};
use crate::spec::{ModelSpec, Vce};

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    /// Aligned with the system's `column_map`.
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub ssr: T,
    pub dof_resid: usize,
    /// `(X'X)^{-1}`.
    pub xtx_inv: Matrix<T>,
    pub covariance: Matrix<T>,
    pub vce: Vce,
}

impl<T: Scalar> FitResult<T> {
    pub fn sigma2(&self) -> T {
        self.ssr / T::of_usize(self.dof_resid)
    }

    pub fn std_errors(&self) -> Vec<T> {
        (0..self.covariance.rows())
            .map(|i| self.covariance[(i, i)].max(T::zero()).sqrt())
            .collect()
    }
}

/// OLS with the homoskedastic covariance.
pub fn ols<T: Scalar>(system: &RegressionSystem<T>) -> Result<FitResult<T>> {
    let x = &system.design;
    let y = &system.response;
    let k = x.cols();
    let dof = system.dof_resid();
    if dof <= 0 {
        return Err(Error::InsufficientObservations(format!(
            "{} observations cannot identify {} coefficients{}",
            system.n_rows(),
            k,
            if system.absorbed > 0 {
                format!(" plus {} unit-specific terms", system.absorbed)
            } else {
                String::new()
            }
        )));
    }
    let dof = dof as usize;
    if k == 0 {
        return Ok(FitResult {
            coefficients: Vec::new(),
            residuals: y.clone(),
            ssr: norm_sq(y),
            dof_resid: dof,
            xtx_inv: Matrix::zeros(0, 0),
            covariance: Matrix::zeros(0, 0),
            vce: Vce::Ssr,
        });
    }
    let qr = PivotedQr::new(x);
    if !qr.is_full_rank() {
        let names = qr
            .dependent_columns()
            .into_iter()
            .map(|c| system.column_map[c].label())
            .collect();
        return Err(Error::RankDeficient(names));
    }
    let coefficients = qr.solve(y);
    let fitted = x.mul_vec(&coefficients);
    let residuals: Vec<T> = y.iter().zip(&fitted).map(|(&a, &b)| a - b).collect();
    let ssr = norm_sq(&residuals);
    let mut xtx_inv = qr.inverse_gram();
    xtx_inv.symmetrize();
    let mut covariance = xtx_inv.clone();
    covariance.scale(ssr / T::of_usize(dof));
    Ok(FitResult {
        coefficients,
        residuals,
        ssr,
        dof_resid: dof,
        xtx_inv,
        covariance,
        vce: Vce::Ssr,
    })
}

/// OLS followed by the requested covariance estimator.
pub fn ols_with_vce<T: Scalar>(
    system: &RegressionSystem<T>,
    vce: Vce,
    hac_bandwidth: Option<usize>,
) -> Result<FitResult<T>> {
    let mut fit = ols(system)?;
    if vce != Vce::Ssr {
        fit.covariance = match vce {
            Vce::Hac => hac_covariance(
                &fit,
                system,
                hac_bandwidth.unwrap_or_else(|| default_hac_bandwidth(system.n_periods)),
            ),
            other => covariance(&fit, system, other)?,
        };
        fit.vce = vce;
    }
    Ok(fit)
}

/// `floor(4 (T/100)^{2/9})`.
pub fn default_hac_bandwidth(n_periods: usize) -> usize {
    (4.0 * (n_periods as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Covariance of the coefficients of `fit` under the chosen estimator. HAC
/// uses the default bandwidth; see [`hac_covariance`] to set it.
pub fn covariance<T: Scalar>(
    fit: &FitResult<T>,
    system: &RegressionSystem<T>,
    vce: Vce,
) -> Result<Matrix<T>> {
    Ok(match vce {
        Vce::Ssr => {
            let mut v = fit.xtx_inv.clone();
            v.scale(fit.sigma2());
            v
        }
        Vce::Hc => hac_covariance(fit, system, 0),
        Vce::Hac => hac_covariance(fit, system, default_hac_bandwidth(system.n_periods)),
        Vce::Np => np_covariance(fit, system)?,
    })
}

/// Bartlett-kernel sandwich with `lags` lags taken within each unit. With
/// `lags = 0` this is HC0.
pub fn hac_covariance<T: Scalar>(
    fit: &FitResult<T>,
    system: &RegressionSystem<T>,
    lags: usize,
) -> Matrix<T> {
    let k = system.n_cols();
    let t = system.n_periods;
    let x = &system.design;
    let e = &fit.residuals;
    let mut meat = Matrix::zeros(k, k);
    let mut scores = vec![vec![T::zero(); k]; t];
    for i in 0..system.n_units {
        for (r, s) in scores.iter_mut().enumerate() {
            let row = i * t + r;
            let er = e[row];
            for (c, v) in s.iter_mut().enumerate() {
                *v = x[(row, c)] * er;
            }
        }
        for l in 0..=lags.min(t.saturating_sub(1)) {
            let w = if l == 0 {
                T::one()
            } else {
                T::one() - T::of_usize(l) / T::of_usize(lags + 1)
            };
            for r in l..t {
                let (a, b) = (&scores[r], &scores[r - l]);
                for p in 0..k {
                    for q in 0..k {
                        let g = a[p] * b[q];
                        if l == 0 {
                            meat[(p, q)] += g;
                        } else {
                            meat[(p, q)] += w * g;
                            meat[(q, p)] += w * g;
                        }
                    }
                }
            }
        }
    }
    let mut v = Matrix::sandwich(&fit.xtx_inv, &meat);
    v.symmetrize();
    v
}

/// `N/(N-1) (sum X_i'X_i)^{-1} [sum X_i'X_i d_i d_i' X_i'X_i] (sum X_i'X_i)^{-1}`
/// with `d_i` the deviation of unit `i`'s own OLS coefficients from their
/// cross-sectional mean.
fn np_covariance<T: Scalar>(fit: &FitResult<T>, system: &RegressionSystem<T>) -> Result<Matrix<T>> {
    let n = system.n_units;
    if n < 2 {
        return Err(Error::InvalidSpec(
            "vce np needs a panel with at least two units".into(),
        ));
    }
    let t = system.n_periods;
    let k = system.n_cols();
    let mut grams = Vec::with_capacity(n);
    let mut coefs = Vec::with_capacity(n);
    for i in 0..n {
        let rows: Vec<usize> = (i * t..(i + 1) * t).collect();
        let xi = system.design.select_rows(&rows);
        let qr = PivotedQr::new(&xi);
        if !qr.is_full_rank() {
            return Err(Error::InsufficientObservations(format!(
                "vce np needs every unit's regression to be identified; unit {} is not",
                i + 1
            )));
        }
        coefs.push(qr.solve(&system.response[i * t..(i + 1) * t]));
        grams.push(xi.gram());
    }
    let mut mean = vec![T::zero(); k];
    for b in &coefs {
        for (m, &v) in mean.iter_mut().zip(b) {
            *m += v / T::of_usize(n);
        }
    }
    let mut meat = Matrix::zeros(k, k);
    for (g, b) in grams.iter().zip(&coefs) {
        let d: Vec<T> = b.iter().zip(&mean).map(|(&a, &m)| a - m).collect();
        let gd = g.mul_vec(&d);
        for p in 0..k {
            for q in 0..k {
                meat[(p, q)] += gd[p] * gd[q];
            }
        }
    }
    let mut v = Matrix::sandwich(&fit.xtx_inv, &meat);
    v.scale(T::of_usize(n) / T::of_usize(n - 1));
    v.symmetrize();
    Ok(v)
}

/// SSR of the model fitted with breaks at `partition`.
pub fn ssr_given_breaks<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
) -> Result<T> {
    Ok(ols(&crate::design::build_design(data, spec, partition)?)?.ssr)
}

/// Wald statistic for equality of the common breaking coefficients across
/// each listed pair of adjacent regimes (`j` and `j+1`, 1-based), together
/// with the number of restrictions.
pub(crate) fn wald_adjacent<T: Scalar>(
    system: &RegressionSystem<T>,
    fit: &FitResult<T>,
    pairs: &[usize],
) -> (T, usize) {
    let q = system.q_eff;
    let r = pairs.len() * q;
    if r == 0 {
        return (T::zero(), 0);
    }
    let k = system.n_cols();
    // R b and R V R' without forming R.
    let mut rb = Vec::with_capacity(r);
    let mut idx = Vec::with_capacity(r);
    for &j in pairs {
        for v in 0..q {
            let a = system.breaking_column(v, j);
            let b = system.breaking_column(v, j + 1);
            rb.push(fit.coefficients[a] - fit.coefficients[b]);
            idx.push((a, b));
        }
    }
    let cov = &fit.covariance;
    let rvr = Matrix::from_fn(r, r, |p, s| {
        let (a1, b1) = idx[p];
        let (a2, b2) = idx[s];
        cov[(a1, a2)] - cov[(a1, b2)] - cov[(b1, a2)] + cov[(b1, b2)]
    });
    let scale = norm_sq(&fit.coefficients[..(system.partition.n_regimes() * q).min(k)]).sqrt();
    let tiny = T::of(1e-9) * scale.max(T::min_positive_value());
    if norm_sq(&rb).sqrt() <= tiny {
        return (T::zero(), r);
    }
    match cholesky(&rvr, T::of(1e-13)) {
        Some(l) => {
            let z = cholesky_solve(&l, &rb);
            (dot(&rb, &z).max(T::zero()), r)
        }
        None => (T::infinity(), r),
    }
}

fn f_pvalue(stat: f64, d1: usize, d2: usize) -> Option<f64> {
    if d1 == 0 || d2 == 0 {
        return None;
    }
    if stat.is_infinite() {
        return Some(0.0);
    }
    let f = FisherSnedecor::new(d1 as f64, d2 as f64).ok()?;
    Some(f.sf(stat.max(0.0)))
}

fn f_criticals(d1: usize, d2: usize) -> Option<CriticalValues> {
    let f = FisherSnedecor::new(d1 as f64, d2 as f64).ok()?;
    Some(CriticalValues {
        c90: f.inverse_cdf(0.90),
        c95: f.inverse_cdf(0.95),
        c99: f.inverse_cdf(0.99),
    })
}

/// Test of no breaks against breaks at the given dates. The statistic is the
/// Wald form `W / (s q)` with the specification's covariance estimator;
/// under `vce = ssr` it coincides with the classical restricted versus
/// unrestricted F ratio.
pub fn chow_f<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
) -> Result<TestOutcome<T>> {
    if partition.is_empty() {
        return Err(Error::InvalidArgument(
            "the known-breaks test needs at least one break".into(),
        ));
    }
    let model = ResolvedModel::new(data, spec)?;
    check_partition(partition, data.n_periods(), spec)?;
    chow_resolved(&model, spec, partition)
}

pub(crate) fn chow_resolved<T: Scalar>(
    model: &ResolvedModel<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
) -> Result<TestOutcome<T>> {
    let s = partition.len();
    let sys = model.system(partition, Layout::Partialled, None)?;
    let fit = ols_with_vce(&sys, spec.vce, spec.hac_bandwidth)?;
    let mut warnings = Vec::new();
    let (stat, restrictions) = if sys.q_eff > 0 {
        let pairs: Vec<usize> = (1..=s).collect();
        let (w, r) = wald_adjacent(&sys, &fit, &pairs);
        (w / T::of_usize(r), r)
    } else {
        // Only unit-specific terms break: compare with the model without
        // breaks through the SSR ratio.
        if spec.vce != Vce::Ssr {
            warnings.push(format!(
                "no common coefficient breaks; the statistic uses the SSR form and ignores vce {}",
                spec.vce
            ));
        }
        let restricted = model.system(&BreakPartition::empty(), Layout::Partialled, None)?;
        let fit_r = ols(&restricted)?;
        let r = sys.absorbed.saturating_sub(restricted.absorbed);
        if r == 0 {
            return Err(Error::InvalidSpec(
                "the breaks impose no restriction on this model".into(),
            ));
        }
        let num = (fit_r.ssr - fit.ssr).max(T::zero()) / T::of_usize(r);
        let den = fit.ssr / T::of_usize(fit.dof_resid);
        let f = if den > T::zero() {
            num / den
        } else if num > T::zero() {
            T::infinity()
        } else {
            T::zero()
        };
        (f, r)
    };
    let dof = fit.dof_resid;
    let mut out = TestOutcome::new(
        Hypothesis::KnownBreaks { breaks: s },
        stat,
        model.q_crit(),
        partition.clone(),
    )
    .with_critical(f_criticals(restrictions, dof));
    out.p_value = f_pvalue(stat.as_f64(), restrictions, dof);
    out.df = Some((restrictions, dof));
    out.p_value_breaks_df = f_pvalue(stat.as_f64(), s, dof);
    out.warnings = warnings;
    Ok(out)
}

//! Confidence intervals for break dates.
//!
//! With a shrinking shift `Delta` the scaled estimation error
//! `L (T_hat - T_0)`, `L = (Delta'Q Delta)^2 / (Delta' Omega Delta)`, converges
//! to the argmax of `W(s) - |s|/2` for a two-sided Brownian motion `W`. The
//! interval is `T_hat -+ ceil(c / L)` with `c` a quantile of that argmax.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::PanelDataset;
use crate::design::{check_partition, Layout, RegressionSystem, ResolvedModel};
use crate::error::{Error, Result};
use crate::partition::BreakPartition;
use crate::regress::{default_hac_bandwidth, ols, FitResult};
use crate::scalar::Scalar;
use crate::spec::{ModelSpec, Vce};

const DEGENERATE_TOL: f64 = 1e-12;

/// Which second moments enter the interval around each break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMoments {
    /// Regressor moments and error variance pooled over both adjacent
    /// regimes; symmetric interval.
    #[default]
    Pooled,
    /// Each side of the interval uses its own regime's moments.
    RegimeSpecific,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakInterval {
    pub break_index: usize,
    pub lower_index: usize,
    pub upper_index: usize,
    pub break_label: String,
    pub lower_label: String,
    pub upper_label: String,
    pub level: f64,
    /// No detectable coefficient shift at this break; the interval spans
    /// the admissible range.
    pub degenerate: bool,
}

/// CDF of the argmax of `W(s) - |s|/2` over the real line.
pub fn argmax_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 1.0 - argmax_cdf(-x);
    }
    if x == 0.0 {
        return 0.5;
    }
    let n = Normal::standard();
    let r = x.sqrt();
    let t1 = (x / (2.0 * std::f64::consts::PI)).sqrt() * (-x / 8.0).exp();
    // exp(x) * Phi(-3 sqrt(x) / 2), evaluated in logs to avoid overflow
    let tail = n.cdf(-1.5 * r);
    let t2 = if tail > 0.0 {
        1.5 * (x + tail.ln()).exp()
    } else {
        0.0
    };
    let t3 = (x + 5.0) / 2.0 * n.cdf(-r / 2.0);
    (1.0 + t1 + t2 - t3).clamp(0.0, 1.0)
}

/// Inverse of [`argmax_cdf`].
pub fn argmax_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    if p < 0.5 {
        return Ok(-argmax_quantile(1.0 - p)?);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while argmax_cdf(hi) < p {
        hi *= 2.0;
        if hi > 1e4 {
            return Ok(hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if argmax_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-period second moments of the breaking regressors, `Q`, and of their
/// products with the residuals, `Omega` (long-run, vce-consistent), over the
/// time positions `lo..=hi`.
fn moments<T: Scalar>(
    sys: &RegressionSystem<T>,
    fit: &FitResult<T>,
    vce: Vce,
    lags: usize,
    lo: usize,
    hi: usize,
) -> (Vec<f64>, Vec<f64>) {
    let q = sys.q_eff;
    let t = sys.n_periods;
    let len = (hi + 1 - lo) as f64;
    let mut qm = vec![0.0; q * q];
    let mut om = vec![0.0; q * q];
    let mut g = vec![vec![0.0; q]; hi + 1 - lo];
    let partition = &sys.partition;
    for i in 0..sys.n_units {
        for (k, pos) in (lo..=hi).enumerate() {
            let row = i * t + pos - 1;
            let j = partition.regime_of(pos);
            let e = fit.residuals[row].as_f64();
            for v in 0..q {
                let wv = sys.design[(row, sys.breaking_column(v, j))].as_f64();
                g[k][v] = wv * e;
                for u in 0..q {
                    let wu = sys.design[(row, sys.breaking_column(u, j))].as_f64();
                    qm[v * q + u] += wv * wu;
                }
            }
        }
        if vce != Vce::Ssr {
            let l_max = lags.min(g.len().saturating_sub(1));
            for l in 0..=l_max {
                let w = 1.0 - l as f64 / (lags as f64 + 1.0);
                for k in l..g.len() {
                    for v in 0..q {
                        for u in 0..q {
                            let a = g[k][v] * g[k - l][u];
                            if l == 0 {
                                om[v * q + u] += a;
                            } else {
                                om[v * q + u] += w * a;
                                om[u * q + v] += w * a;
                            }
                        }
                    }
                }
            }
        }
    }
    qm.iter_mut().for_each(|v| *v /= len);
    if vce == Vce::Ssr {
        let s2 = fit.sigma2().as_f64();
        om = qm.iter().map(|v| v * s2).collect();
    } else {
        om.iter_mut().for_each(|v| *v /= len);
    }
    (qm, om)
}

fn quad(m: &[f64], d: &[f64]) -> f64 {
    let q = d.len();
    let mut s = 0.0;
    for a in 0..q {
        for b in 0..q {
            s += d[a] * m[a * q + b] * d[b];
        }
    }
    s
}

/// Confidence intervals at `level` for the breaks of `partition`, with
/// moments pooled over adjacent regimes.
pub fn break_ci<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
    level: f64,
) -> Result<Vec<BreakInterval>> {
    break_ci_with(data, spec, partition, level, CiMoments::Pooled)
}

pub fn break_ci_with<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
    level: f64,
    variant: CiMoments,
) -> Result<Vec<BreakInterval>> {
    let level = if level > 1.0 { level / 100.0 } else { level };
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let model = ResolvedModel::new(data, spec)?;
    check_partition(partition, data.n_periods(), spec)?;
    let sys = model.system(partition, Layout::Partialled, None)?;
    let fit = ols(&sys)?;
    let t = data.n_periods();
    let c = argmax_quantile(0.5 + level / 2.0)?;
    let lags = match spec.vce {
        Vce::Hac => spec.hac_bandwidth.unwrap_or_else(|| default_hac_bandwidth(t)),
        _ => 0,
    };
    let vce = if spec.vce == Vce::Np { Vce::Hc } else { spec.vce };
    let regimes = partition.regimes(t);
    let s2 = fit.sigma2().as_f64();
    let mut out = Vec::with_capacity(partition.len());
    for (k, &tb) in partition.breaks().iter().enumerate() {
        let j = k + 1;
        let delta: Vec<f64> = (0..sys.q_eff)
            .map(|v| {
                (fit.coefficients[sys.breaking_column(v, j + 1)]
                    - fit.coefficients[sys.breaking_column(v, j)])
                .as_f64()
            })
            .collect();
        let (lo_r, hi_r) = (regimes[k].0, regimes[k + 1].1);
        let half = |from: usize, to: usize| -> Option<usize> {
            let (qm, om) = moments(&sys, &fit, vce, lags, from, to);
            let dqd = quad(&qm, &delta);
            let dod = quad(&om, &delta);
            let scale = if s2 > 0.0 { s2 } else { dod.max(f64::MIN_POSITIVE) };
            if delta.is_empty() || !(dqd > DEGENERATE_TOL * scale) {
                return None;
            }
            if dod <= 0.0 {
                return Some(1);
            }
            let l = dqd * dqd / dod;
            Some(((c / l).ceil() as usize).max(1))
        };
        let (left, right) = match variant {
            CiMoments::Pooled => {
                let h = half(lo_r, hi_r);
                (h, h)
            }
            CiMoments::RegimeSpecific => (
                half(regimes[k].0, regimes[k].1),
                half(regimes[k + 1].0, regimes[k + 1].1),
            ),
        };
        let degenerate = left.is_none() || right.is_none();
        let (lower, upper) = if degenerate {
            (1, t)
        } else {
            (
                tb.saturating_sub(left.unwrap()).max(1),
                (tb + right.unwrap()).min(t),
            )
        };
        out.push(BreakInterval {
            break_index: tb,
            lower_index: lower,
            upper_index: upper,
            break_label: data.label(tb),
            lower_label: data.label(lower),
            upper_label: data.label(upper),
            level,
            degenerate,
        });
    }
    Ok(out)
}

//! Monte Carlo simulation of the limiting null distributions of the break
//! tests.
//!
//! A standard `q`-dimensional Brownian motion is approximated by scaled
//! partial sums of `grid` i.i.d. Gaussian vectors. Under the null, the Wald
//! statistic of `k` breaks at fractions `l_1 < ... < l_k` converges to
//!
//! ```text
//!   sum_j |W(l_j) - W(l_{j-1})|^2 / (l_j - l_{j-1})  -  |W(1)|^2
//! ```
//!
//! and `supF(k)` is its maximum over the trimmed set divided by `k q`. The
//! maximum over partitions is itself a segmentation problem, so each draw
//! solves a small dynamic program over the grid. Draws are shared across
//! trimming values (common random numbers), and each replication uses its
//! own ChaCha stream so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::critical::{CriticalKind, Level};
use crate::error::{Error, Result};
use crate::partition::Trimming;

/// Per-replication `supF(k)` draws for one `q` and several trimmings.
#[derive(Debug, Clone)]
pub struct SupFDraws {
    pub q: usize,
    pub grid: usize,
    pub trims: Vec<Trimming>,
    /// `draws[trim][rep][k - 1]`
    pub draws: Vec<Vec<Vec<f64>>>,
}

impl SupFDraws {
    pub fn reps(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    fn trim_index(&self, trim: Trimming) -> Result<usize> {
        self.trims
            .iter()
            .position(|&t| t == trim)
            .ok_or_else(|| Error::InvalidArgument(format!("trimming {trim} was not simulated")))
    }

    /// Sorted draws of `supF(k)`.
    pub fn sup_f(&self, trim: Trimming, k: usize) -> Result<Vec<f64>> {
        let ti = self.trim_index(trim)?;
        let mut v = Vec::with_capacity(self.reps());
        for rep in &self.draws[ti] {
            let x = *rep.get(k.wrapping_sub(1)).ok_or_else(|| {
                Error::InvalidArgument(format!("supF({k}) not available for trimming {trim}"))
            })?;
            v.push(x);
        }
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    /// Number of breaks available for a trimming.
    pub fn max_k(&self, trim: Trimming) -> usize {
        self.trim_index(trim)
            .ok()
            .and_then(|ti| self.draws[ti].first().map(Vec::len))
            .unwrap_or(0)
    }

    /// Quantiles (and Monte Carlo standard errors) of a statistic at the
    /// three reporting levels.
    pub fn critical(
        &self,
        kind: CriticalKind,
        s_lo: usize,
        s_hi: usize,
        trim: Trimming,
    ) -> Result<SimulatedCritical> {
        let kmax = self.max_k(trim);
        let mut out = SimulatedCritical::default();
        match kind {
            CriticalKind::SupF => {
                if s_lo != s_hi || s_lo == 0 || s_lo > kmax {
                    return Err(Error::InvalidArgument(format!(
                        "supF needs 1 <= s <= {kmax}, got {s_lo}..{s_hi}"
                    )));
                }
                let d = self.sup_f(trim, s_lo)?;
                for (i, lvl) in Level::ALL.iter().enumerate() {
                    (out.values[i], out.std_errors[i]) = quantile_with_se(&d, lvl.confidence());
                }
            }
            CriticalKind::FNext => {
                if s_lo != s_hi || s_lo + 1 > kmax {
                    return Err(Error::InvalidArgument(format!(
                        "F(s+1|s) needs s + 1 <= {kmax}, got s = {s_lo}"
                    )));
                }
                // max of s+1 independent supF(1)-type draws
                let d = self.sup_f(trim, 1)?;
                let exponent = 1.0 / (s_lo as f64 + 1.0);
                for (i, lvl) in Level::ALL.iter().enumerate() {
                    let p = lvl.confidence().powf(exponent);
                    (out.values[i], out.std_errors[i]) = quantile_with_se(&d, p);
                }
            }
            CriticalKind::Dmax | CriticalKind::WDmax => {
                if s_lo == 0 || s_lo > s_hi || s_hi > kmax {
                    return Err(Error::InvalidArgument(format!(
                        "double maximum needs 1 <= lo <= hi <= {kmax}, got {s_lo}..{s_hi}"
                    )));
                }
                let ti = self.trim_index(trim)?;
                for (i, lvl) in Level::ALL.iter().enumerate() {
                    let weights: Vec<f64> = if kind == CriticalKind::WDmax {
                        let c1 = quantile(&self.sup_f(trim, 1)?, lvl.confidence());
                        (s_lo..=s_hi)
                            .map(|k| Ok(c1 / quantile(&self.sup_f(trim, k)?, lvl.confidence())))
                            .collect::<Result<_>>()?
                    } else {
                        vec![1.0; s_hi + 1 - s_lo]
                    };
                    let mut d: Vec<f64> = self.draws[ti]
                        .iter()
                        .map(|rep| {
                            (s_lo..=s_hi)
                                .zip(&weights)
                                .map(|(k, w)| w * rep[k - 1])
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect();
                    d.sort_by(f64::total_cmp);
                    (out.values[i], out.std_errors[i]) = quantile_with_se(&d, lvl.confidence());
                }
            }
        }
        Ok(out)
    }
}

/// Simulated critical values at 90/95/99% with Monte Carlo standard errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCritical {
    pub values: [f64; 3],
    pub std_errors: [f64; 3],
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile and its order-statistic standard error: half the distance
/// between the order statistics one binomial standard deviation either side.
pub fn quantile_with_se(sorted: &[f64], p: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    let lo = (p - sd / n).clamp(0.0, 1.0);
    let hi = (p + sd / n).clamp(0.0, 1.0);
    let se = 0.5 * (quantile(sorted, hi) - quantile(sorted, lo));
    (quantile(sorted, p), se)
}

/// Draws `supF(k)` for every `k` up to each trimming's maximum.
pub fn simulate_sup_f(
    q: usize,
    trims: &[Trimming],
    reps: usize,
    grid: usize,
    seed: u64,
) -> Result<SupFDraws> {
    if q == 0 {
        return Err(Error::InvalidArgument("q must be at least 1".into()));
    }
    if reps < 1000 {
        return Err(Error::InvalidArgument(format!(
            "at least 1000 replications required, got {reps}"
        )));
    }
    if grid < 1000 {
        return Err(Error::InvalidArgument(format!(
            "discretization length must be at least 1000, got {grid}"
        )));
    }
    if trims.is_empty() {
        return Err(Error::InvalidArgument("no trimming values given".into()));
    }
    let n = grid;
    let h_min = trims.iter().map(|t| t.min_length(n)).min().unwrap();
    let kmax: Vec<usize> = trims
        .iter()
        .map(|t| {
            let h = t.min_length(n);
            t.max_breaks().min(n / h - 1)
        })
        .collect();

    // gains[off[b] + a] = |Z_b - Z_a|^2 / (b - a) for a in 0..=b-h_min
    let mut off = vec![0usize; n + 1];
    let mut total = 0usize;
    for b in h_min..=n {
        off[b] = total;
        total += b - h_min + 1;
    }
    let mut gains = vec![0.0f64; total];
    let mut partial = vec![0.0f64; (n + 1) * q];
    let mut dp_prev = vec![f64::NEG_INFINITY; n + 1];
    let mut dp_next = vec![f64::NEG_INFINITY; n + 1];

    let mut draws: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(reps); trims.len()];
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        for t in 1..=n {
            for d in 0..q {
                let z: f64 = StandardNormal.sample(&mut rng);
                partial[t * q + d] = partial[(t - 1) * q + d] + z;
            }
        }
        for b in h_min..=n {
            let zb = &partial[b * q..(b + 1) * q];
            let row = &mut gains[off[b]..off[b] + b - h_min + 1];
            for (a, g) in row.iter_mut().enumerate() {
                let za = &partial[a * q..(a + 1) * q];
                let mut s = 0.0;
                for d in 0..q {
                    let diff = zb[d] - za[d];
                    s += diff * diff;
                }
                *g = s / (b - a) as f64;
            }
        }
        let zn = &partial[n * q..(n + 1) * q];
        let base_term = zn.iter().map(|v| v * v).sum::<f64>() / n as f64;

        for (ti, trim) in trims.iter().enumerate() {
            let h = trim.min_length(n);
            let kk = kmax[ti];
            let mut stats = Vec::with_capacity(kk);
            // one segment ending at b
            dp_prev.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
            for b in h..=n - h {
                dp_prev[b] = gains[off[b]];
            }
            for k in 1..=kk {
                // close with the final segment (a, n]
                let lo = k * h;
                let hi = n - h;
                let best = max_plus(&dp_prev[lo..=hi], &gains[off[n] + lo..off[n] + hi + 1]);
                stats.push((best - base_term) / (k * q) as f64);
                if k == kk {
                    break;
                }
                dp_next.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
                for b in (k + 1) * h..=n - h {
                    let alo = k * h;
                    let ahi = b - h;
                    dp_next[b] =
                        max_plus(&dp_prev[alo..=ahi], &gains[off[b] + alo..off[b] + ahi + 1]);
                }
                std::mem::swap(&mut dp_prev, &mut dp_next);
            }
            draws[ti].push(stats);
        }
    }
    Ok(SupFDraws {
        q,
        grid,
        trims: trims.to_vec(),
        draws,
    })
}

/// `max_i (a[i] + b[i])`, unrolled for throughput.
#[inline]
fn max_plus(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [f64::NEG_INFINITY; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        for l in 0..4 {
            let v = a[i + l] + b[i + l];
            if v > acc[l] {
                acc[l] = v;
            }
        }
    }
    for i in chunks * 4..a.len() {
        let v = a[i] + b[i];
        if v > acc[0] {
            acc[0] = v;
        }
    }
    acc[0].max(acc[1]).max(acc[2].max(acc[3]))
}

/// Simulates one critical-value entry at the three reporting levels.
#[allow(clippy::too_many_arguments)]
pub fn simulate_critical_values(
    kind: CriticalKind,
    q: usize,
    s_lo: usize,
    s_hi: usize,
    trim: Trimming,
    reps: usize,
    grid: usize,
    seed: u64,
) -> Result<SimulatedCritical> {
    simulate_sup_f(q, &[trim], reps, grid, seed)?.critical(kind, s_lo, s_hi, trim)
}

use serde::Serialize;

use super::critical::{CriticalKind, CriticalValueTable, CriticalValues, Level};
use super::{Hypothesis, TestDetails, TestOutcome};
use crate::data::PanelDataset;
use crate::design::{Layout, ResolvedModel};
use crate::dpsearch::Searcher;
use crate::error::{Error, Result};
use crate::partition::BreakPartition;
use crate::regress::{chow_resolved, ols, ols_with_vce, wald_adjacent};
use crate::scalar::Scalar;
use crate::spec::ModelSpec;

fn check_count(spec: &ModelSpec, s: usize, what: &str) -> Result<()> {
    let max = spec.trimming.max_breaks();
    if s > max {
        return Err(Error::InvalidArgument(format!(
            "{what}: {s} breaks exceed the maximum of {max} for trimming {}",
            spec.trimming
        )));
    }
    Ok(())
}

fn lookup(
    kind: CriticalKind,
    q: usize,
    lo: usize,
    hi: usize,
    spec: &ModelSpec,
    warnings: &mut Vec<String>,
) -> Option<CriticalValues> {
    match CriticalValueTable::embedded().criticals(kind, q, lo, hi, spec.trimming) {
        Ok(c) => Some(c),
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    }
}

/// Shared state for several statistics on the same data and specification.
struct Context<'a, T> {
    model: &'a ResolvedModel<T>,
    spec: &'a ModelSpec,
    searcher: Searcher<'a, T>,
}

impl<'a, T: Scalar> Context<'a, T> {
    fn new(model: &'a ResolvedModel<T>, spec: &'a ModelSpec) -> Self {
        Self {
            model,
            spec,
            searcher: Searcher::new(model, spec),
        }
    }

    fn sup_f(&self, s: usize) -> Result<TestOutcome<T>> {
        if s == 0 {
            return Err(Error::InvalidArgument("supF needs at least one break".into()));
        }
        check_count(self.spec, s, "supF")?;
        let est = self.searcher.estimate(s)?;
        let chow = chow_resolved(self.model, self.spec, &est.partition)?;
        let q = self.model.q_crit();
        let mut warnings = chow.warnings;
        let crit = lookup(CriticalKind::SupF, q, s, s, self.spec, &mut warnings);
        let mut out = TestOutcome::new(Hypothesis::SupF { breaks: s }, chow.statistic, q, est.partition)
            .with_critical(crit);
        out.warnings = warnings;
        Ok(out)
    }

    fn double_max(&self, lo: usize, hi: usize, weighted: bool, level: f64) -> Result<TestOutcome<T>> {
        if lo == 0 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "double maximum needs 1 <= lower <= upper, got {lo}..{hi}"
            )));
        }
        check_count(self.spec, hi, "double maximum")?;
        let (wlevel, snap) = Level::nearest(level);
        let mut warnings: Vec<String> = snap.into_iter().collect();
        let q = self.model.q_crit();
        let weights: Vec<f64> = if weighted {
            let table = CriticalValueTable::embedded();
            let c1 = table.lookup(CriticalKind::SupF, q, 1, 1, self.spec.trimming, wlevel)?;
            (lo..=hi)
                .map(|s| {
                    table
                        .lookup(CriticalKind::SupF, q, s, s, self.spec.trimming, wlevel)
                        .map(|cs| c1 / cs)
                })
                .collect::<Result<_>>()?
        } else {
            vec![1.0; hi - lo + 1]
        };
        let mut stats = Vec::with_capacity(hi - lo + 1);
        let mut best: Option<(usize, T, BreakPartition)> = None;
        for (k, s) in (lo..=hi).enumerate() {
            let sf = self.sup_f(s)?;
            for w in sf.warnings {
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
            }
            let v = sf.statistic * T::of(weights[k]);
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((s, v, sf.attained_partition));
            }
            stats.push(sf.statistic);
        }
        let (argmax, stat, at) = best.expect("non-empty range");
        let kind = if weighted { CriticalKind::WDmax } else { CriticalKind::Dmax };
        let crit = lookup(kind, q, lo, hi, self.spec, &mut warnings);
        let mut out = TestOutcome::new(
            Hypothesis::DoubleMax { lo, hi, weighted },
            stat,
            q,
            at,
        )
        .with_critical(crit);
        out.details = Some(TestDetails::DoubleMax {
            sup_f: stats,
            weights,
            argmax,
            weight_level: wlevel,
        });
        out.warnings = warnings;
        Ok(out)
    }

    /// Statistic for one extra break at `tau` inside regime `j` of `base`.
    fn extra_break_stat(&self, base: &BreakPartition, j: usize, tau: usize) -> Result<T> {
        let refined = base.with_break(tau);
        let sys = self.model.system(&refined, Layout::Partialled, None)?;
        if sys.q_eff > 0 {
            let fit = ols_with_vce(&sys, self.spec.vce, self.spec.hac_bandwidth)?;
            let (w, r) = wald_adjacent(&sys, &fit, &[j]);
            return Ok(w / T::of_usize(r));
        }
        let fit = ols(&sys)?;
        let coarse_sys = self.model.system(base, Layout::Partialled, None)?;
        let coarse = ols(&coarse_sys)?;
        let r = sys.absorbed.saturating_sub(coarse_sys.absorbed).max(1);
        let num = (coarse.ssr - fit.ssr).max(T::zero()) / T::of_usize(r);
        let den = fit.ssr / T::of_usize(fit.dof_resid);
        Ok(if den > T::zero() {
            num / den
        } else if num > T::zero() {
            T::infinity()
        } else {
            T::zero()
        })
    }

    fn f_next(&self, s: usize) -> Result<TestOutcome<T>> {
        check_count(self.spec, s + 1, "F(s+1|s)")?;
        let q = self.model.q_crit();
        if s == 0 {
            let sf = self.sup_f(1)?;
            let mut warnings = sf.warnings.clone();
            let crit = lookup(CriticalKind::FNext, q, 0, 0, self.spec, &mut warnings);
            let tau = sf.attained_partition.breaks()[0];
            let mut out = TestOutcome::new(
                Hypothesis::FNext { breaks: 0 },
                sf.statistic,
                q,
                BreakPartition::empty(),
            )
            .with_critical(crit);
            out.details = Some(TestDetails::FNext {
                regime: 1,
                tau,
                per_regime: vec![Some(sf.statistic)],
            });
            out.warnings = warnings;
            return Ok(out);
        }
        let base = self.searcher.estimate(s)?.partition;
        let t = self.model.n_periods;
        let mut per_regime = Vec::with_capacity(s + 1);
        let mut best: Option<(usize, usize, T)> = None;
        for (k, (start, end)) in base.regimes(t).into_iter().enumerate() {
            let j = k + 1;
            let len = end + 1 - start;
            let hj = self.spec.trimming.min_length(len).max(1);
            let first = start - 1 + hj;
            let last = end.saturating_sub(hj);
            let mut regime_best: Option<T> = None;
            if first <= last {
                for tau in first..=last {
                    let v = match self.extra_break_stat(&base, j, tau) {
                        Ok(v) => v,
                        Err(Error::RankDeficient(_)) | Err(Error::InsufficientObservations(_)) => {
                            continue
                        }
                        Err(e) => return Err(e),
                    };
                    if regime_best.is_none_or(|b| v > b) {
                        regime_best = Some(v);
                    }
                    if best.is_none_or(|b| v > b.2) {
                        best = Some((j, tau, v));
                    }
                }
            }
            per_regime.push(regime_best);
        }
        let Some((regime, tau, stat)) = best else {
            return Err(Error::InfeasiblePartition(format!(
                "no estimated regime of {base} is long enough to hold another break"
            )));
        };
        let mut warnings = Vec::new();
        let crit = lookup(CriticalKind::FNext, q, s, s, self.spec, &mut warnings);
        let mut out = TestOutcome::new(Hypothesis::FNext { breaks: s }, stat, q, base)
            .with_critical(crit);
        out.details = Some(TestDetails::FNext {
            regime,
            tau,
            per_regime,
        });
        out.warnings = warnings;
        Ok(out)
    }
}

/// `supF(s)`: the Wald statistic for no breaks against `s` breaks, evaluated
/// at the SSR-minimizing `s`-break partition.
pub fn sup_f<T: Scalar>(data: &PanelDataset<T>, spec: &ModelSpec, s: usize) -> Result<TestOutcome<T>> {
    let model = ResolvedModel::new(data, spec)?;
    Context::new(&model, spec).sup_f(s)
}

/// Double maximum over `s = lo..=hi` of `supF(s)`, weighted by
/// `c_{a,1} / c_{a,s}` at the confidence `level` when `weighted`.
pub fn double_max<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    lo: usize,
    hi: usize,
    weighted: bool,
    level: f64,
) -> Result<TestOutcome<T>> {
    let model = ResolvedModel::new(data, spec)?;
    Context::new(&model, spec).double_max(lo, hi, weighted, level)
}

/// `F(s+1|s)`: the largest statistic for one additional break inside any
/// regime of the estimated `s`-break partition.
pub fn f_next<T: Scalar>(data: &PanelDataset<T>, spec: &ModelSpec, s: usize) -> Result<TestOutcome<T>> {
    let model = ResolvedModel::new(data, spec)?;
    Context::new(&model, spec).f_next(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SequentialCount<T> {
    /// Estimated number of breaks.
    pub breaks: usize,
    pub level: Level,
    /// `F(1|0), F(2|1), ...` up to the first non-rejection.
    pub steps: Vec<TestOutcome<T>>,
    pub warnings: Vec<String>,
}

/// Applies `F(s+1|s)` for `s = 0, 1, ...` until the test fails to reject at
/// `level`, capped at `s_max`.
pub fn sequential_count<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    s_max: usize,
    level: f64,
) -> Result<SequentialCount<T>> {
    if s_max == 0 {
        return Err(Error::InvalidArgument(
            "the sequential procedure needs a maximum of at least one break".into(),
        ));
    }
    check_count(spec, s_max, "sequential procedure")?;
    let (lvl, snap) = Level::nearest(level);
    let model = ResolvedModel::new(data, spec)?;
    let ctx = Context::new(&model, spec);
    let mut steps = Vec::new();
    let mut breaks = s_max;
    for s in 0..s_max {
        let out = ctx.f_next(s)?;
        let Some(reject) = out.rejects(lvl) else {
            return Err(Error::CriticalValues(format!(
                "no F({}|{s}) critical values for q = {}, trimming {}",
                s + 1,
                out.q,
                spec.trimming
            )));
        };
        steps.push(out);
        if !reject {
            breaks = s;
            break;
        }
    }
    Ok(SequentialCount {
        breaks,
        level: lvl,
        steps,
        warnings: snap.into_iter().collect(),
    })
}

//! Least-squares break dating.
//!
//! Pure structural change models are solved exactly: segment SSRs for all
//! `(a, b)` are computed with recursive least squares and a Bellman recursion
//! picks the best partition in `O(T^2)`. When some coefficients do not break,
//! the stable part is estimated given the current partition, removed from the
//! response, and the dynamic program is rerun until the SSR settles.

use std::cell::OnceCell;

use serde::Serialize;

use crate::data::PanelDataset;
use crate::design::{check_partition, ColumnInfo, ColumnRole, Layout, ResolvedModel};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_inverse, sweep_schur, Matrix};
use crate::partition::BreakPartition;
use crate::regress::{ols, ols_with_vce, FitResult};
use crate::scalar::Scalar;
use crate::spec::ModelSpec;

const MAX_ITERATIONS: usize = 100;
const CONVERGENCE_TOL: f64 = 1e-8;
const GRID_LIMIT: u128 = 10_000_000;
/// Relative pivot tolerance before the recursive updates take over.
const RLS_START_TOL: f64 = 1e-8;
const SWEEP_TOL: f64 = 1e-10;

/// Relative tolerance under which two objective values count as tied.
fn tie_tol<T: Scalar>(v: T) -> T {
    v.abs() * T::of(1e-12).max(T::epsilon() * T::of(64.0))
}

/// SSR of every segment `[a, b]`, `1 <= a <= b <= T`, in a packed
/// upper-triangular array.
#[derive(Debug, Clone)]
pub struct SegmentCostTable<T> {
    n: usize,
    costs: Vec<T>,
    deficient: Vec<bool>,
    evaluations: usize,
}

impl<T: Scalar> SegmentCostTable<T> {
    fn index(n: usize, a: usize, b: usize) -> usize {
        debug_assert!(1 <= a && a <= b && b <= n);
        let r = a - 1;
        r * n - r * (r.saturating_sub(1)) / 2 + (b - a)
    }

    fn zeros(n: usize) -> Self {
        let len = n * (n + 1) / 2;
        Self {
            n,
            costs: vec![T::zero(); len],
            deficient: vec![false; len],
            evaluations: 0,
        }
    }

    /// Table filled from an arbitrary cost function.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut t = Self::zeros(n);
        for a in 1..=n {
            for b in a..=n {
                t.set(a, b, f(a, b), false);
            }
        }
        t
    }

    fn set(&mut self, a: usize, b: usize, cost: T, deficient: bool) {
        let i = Self::index(self.n, a, b);
        self.costs[i] = cost;
        self.deficient[i] = deficient;
        self.evaluations += 1;
    }

    pub fn n_periods(&self) -> usize {
        self.n
    }

    /// SSR of the segment `[a, b]` (1-based, inclusive).
    pub fn cost(&self, a: usize, b: usize) -> T {
        self.costs[Self::index(self.n, a, b)]
    }

    /// The segment's regressors were not of full rank (for instance fewer
    /// observations than columns), so its fit is exact or nearly so.
    pub fn is_deficient(&self, a: usize, b: usize) -> bool {
        self.deficient[Self::index(self.n, a, b)]
    }

    /// Number of segment costs computed.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// Segment costs of a pure structural change model, pooled over units.
pub fn segment_costs<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
) -> Result<SegmentCostTable<T>> {
    let model = ResolvedModel::new(data, spec)?;
    if !model.is_pure_change() {
        return Err(Error::InvalidSpec(
            "segment costs need a model in which every coefficient breaks; \
             use estimate_breaks for partial structural change"
                .into(),
        ));
    }
    Ok(costs_for(&model, &model.y))
}

pub(crate) fn costs_for<T: Scalar>(model: &ResolvedModel<T>, y: &[T]) -> SegmentCostTable<T> {
    let w: Vec<&[T]> = model.breaking.iter().map(|s| s.values.as_slice()).collect();
    if model.unit_breaking.is_empty() {
        rls_costs(model.n_units, model.n_periods, &w, y)
    } else {
        let b: Vec<&[T]> = model
            .unit_breaking
            .iter()
            .map(|s| s.values.as_slice())
            .collect();
        cross_product_costs(model.n_units, model.n_periods, &w, &b, y)
    }
}

/// SSR of the Gram-form system `[G g; g' yy]` by sweeping, with the number
/// of skipped pivots.
fn swept_ssr<T: Scalar>(gram: &[T], xy: &[T], yy: T) -> (T, usize) {
    let q = xy.len();
    let d = q + 1;
    let mut a = vec![T::zero(); d * d];
    for i in 0..q {
        for j in 0..q {
            a[i * d + j] = gram[i * q + j];
        }
        a[i * d + q] = xy[i];
        a[q * d + i] = xy[i];
    }
    a[q * d + q] = yy;
    let pivots: Vec<usize> = (0..q).collect();
    let skipped = sweep_schur(&mut a, d, &pivots, T::of(SWEEP_TOL));
    (a[q * d + q].max(T::zero()), skipped)
}

fn rls_costs<T: Scalar>(n_units: usize, t: usize, w: &[&[T]], y: &[T]) -> SegmentCostTable<T> {
    let q = w.len();
    let mut table = SegmentCostTable::zeros(t);
    let mut x = vec![T::zero(); q];
    let mut px = vec![T::zero(); q];
    for a in 0..t {
        let mut gram = vec![T::zero(); q * q];
        let mut xy = vec![T::zero(); q];
        let mut yy = T::zero();
        let mut count = 0usize;
        let mut full = q == 0;
        let mut p = Matrix::zeros(q, q);
        let mut theta = vec![T::zero(); q];
        let mut ssr = T::zero();
        for b in a..t {
            for i in 0..n_units {
                let row = i * t + b;
                for (v, col) in w.iter().enumerate() {
                    x[v] = col[row];
                }
                let yv = y[row];
                if full {
                    // P <- P - P x x' P / (1 + x' P x)
                    let mut denom = T::one();
                    for r in 0..q {
                        let mut s = T::zero();
                        for c in 0..q {
                            s += p[(r, c)] * x[c];
                        }
                        px[r] = s;
                        denom += x[r] * s;
                    }
                    let mut e = yv;
                    for r in 0..q {
                        e -= x[r] * theta[r];
                    }
                    for r in 0..q {
                        theta[r] += px[r] * e / denom;
                    }
                    ssr += e * e / denom;
                    for r in 0..q {
                        for c in 0..q {
                            p[(r, c)] -= px[r] * px[c] / denom;
                        }
                    }
                } else {
                    for r in 0..q {
                        for c in 0..q {
                            gram[r * q + c] += x[r] * x[c];
                        }
                        xy[r] += x[r] * yv;
                    }
                    yy += yv * yv;
                    count += 1;
                }
            }
            if full {
                table.set(a + 1, b + 1, ssr.max(T::zero()), false);
                continue;
            }
            let g = Matrix::from_row_major(q, q, gram.clone());
            match (count > q).then(|| cholesky(&g, T::of(RLS_START_TOL))).flatten() {
                Some(l) => {
                    p = cholesky_inverse(&l);
                    theta = p.mul_vec(&xy);
                    let (s, _) = swept_ssr(&gram, &xy, yy);
                    ssr = s;
                    full = true;
                    table.set(a + 1, b + 1, ssr, false);
                }
                None => {
                    let (s, skipped) = swept_ssr(&gram, &xy, yy);
                    table.set(a + 1, b + 1, s, skipped > 0 || count <= q);
                }
            }
        }
    }
    table
}

/// Costs when unit-specific terms break as well: per-unit cross products are
/// accumulated along `b`, the unit terms are swept out unit by unit, and the
/// pooled remainder is swept on the common columns.
fn cross_product_costs<T: Scalar>(
    n_units: usize,
    t: usize,
    w: &[&[T]],
    ub: &[&[T]],
    y: &[T],
) -> SegmentCostTable<T> {
    let q = w.len();
    let mb = ub.len();
    let d = mb + q + 1;
    let dq = q + 1;
    let mut table = SegmentCostTable::zeros(t);
    let mut z = vec![T::zero(); d];
    let unit_pivots: Vec<usize> = (0..mb).collect();
    let common_pivots: Vec<usize> = (0..q).collect();
    let tol = T::of(SWEEP_TOL);
    let mut work = vec![T::zero(); d * d];
    for a in 0..t {
        let mut s = vec![vec![T::zero(); d * d]; n_units];
        for b in a..t {
            for (i, si) in s.iter_mut().enumerate() {
                let row = i * t + b;
                for (c, col) in ub.iter().enumerate() {
                    z[c] = col[row];
                }
                for (c, col) in w.iter().enumerate() {
                    z[mb + c] = col[row];
                }
                z[d - 1] = y[row];
                for r in 0..d {
                    let zr = z[r];
                    if zr == T::zero() {
                        continue;
                    }
                    for c in 0..d {
                        si[r * d + c] += zr * z[c];
                    }
                }
            }
            let mut m = vec![T::zero(); dq * dq];
            let mut skipped = 0;
            for si in &s {
                work.copy_from_slice(si);
                skipped += sweep_schur(&mut work, d, &unit_pivots, tol);
                for r in 0..dq {
                    for c in 0..dq {
                        m[r * dq + c] += work[(mb + r) * d + mb + c];
                    }
                }
            }
            skipped += sweep_schur(&mut m, dq, &common_pivots, tol);
            table.set(a + 1, b + 1, m[dq * dq - 1].max(T::zero()), skipped > 0);
        }
    }
    table
}

/// Partition with its objective value and the number of Bellman updates
/// performed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation<T> {
    pub partition: BreakPartition,
    pub total_cost: T,
    pub updates: usize,
}

fn check_dims<T: Scalar>(costs: &SegmentCostTable<T>, s: usize, h: usize) -> Result<usize> {
    let h = h.max(1);
    let n = costs.n_periods();
    if (s + 1) * h > n {
        return Err(Error::InfeasiblePartition(format!(
            "{s} breaks with minimum regime length {h} need at least {} observations, have {n}",
            (s + 1) * h
        )));
    }
    Ok(h)
}

fn partition_cost<T: Scalar>(costs: &SegmentCostTable<T>, breaks: &[usize]) -> T {
    let n = costs.n_periods();
    let mut start = 1;
    let mut total = T::zero();
    for &b in breaks.iter().chain(std::iter::once(&n)) {
        total += costs.cost(start, b);
        start = b + 1;
    }
    total
}

/// Minimizes the sum of segment costs over partitions with `s` breaks and
/// regimes of at least `h` observations. Among tied optima the
/// lexicographically smallest break vector is returned.
pub fn optimal_partition<T: Scalar>(
    costs: &SegmentCostTable<T>,
    s: usize,
    h: usize,
) -> Result<Segmentation<T>> {
    let h = check_dims(costs, s, h)?;
    let n = costs.n_periods();
    // rest[k][a]: best cost of covering (a, n] with k more breaks.
    let mut rest: Vec<Vec<T>> = vec![vec![T::infinity(); n + 1]; s + 1];
    for a in 0..=n - h {
        rest[0][a] = costs.cost(a + 1, n);
    }
    let mut updates = 0;
    for k in 1..=s {
        let a_max = if k == s { 0 } else { n - (k + 1) * h };
        for a in 0..=a_max {
            let mut best = T::infinity();
            for e in a + h..=n - k * h {
                let v = costs.cost(a + 1, e) + rest[k - 1][e];
                updates += 1;
                if v < best {
                    best = v;
                }
            }
            rest[k][a] = best;
        }
    }
    let mut breaks = Vec::with_capacity(s);
    let mut a = 0;
    for k in (1..=s).rev() {
        let target = rest[k][a];
        let tol = tie_tol(target);
        let e = (a + h..=n - k * h)
            .find(|&e| costs.cost(a + 1, e) + rest[k - 1][e] <= target + tol)
            .expect("optimum is attained");
        breaks.push(e);
        a = e;
    }
    let total_cost = partition_cost(costs, &breaks);
    Ok(Segmentation {
        partition: BreakPartition::new(breaks, n)?,
        total_cost,
        updates,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Exhaustive search over all admissible partitions. Limited to 10^7
/// partitions.
pub fn grid_search_oracle<T: Scalar>(
    costs: &SegmentCostTable<T>,
    s: usize,
    h: usize,
) -> Result<Segmentation<T>> {
    let h = check_dims(costs, s, h)?;
    let n = costs.n_periods();
    let count = binomial((n - (s + 1) * h + s) as u128, s as u128);
    if count > GRID_LIMIT {
        return Err(Error::GridTooLarge(count));
    }

    fn visit<T: Scalar>(
        costs: &SegmentCostTable<T>,
        n: usize,
        h: usize,
        left: usize,
        breaks: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize], T) -> bool,
    ) -> bool {
        if left == 0 {
            let c = partition_cost(costs, breaks);
            return f(breaks, c);
        }
        let prev = breaks.last().copied().unwrap_or(0);
        for e in prev + h..=n - left * h {
            breaks.push(e);
            let stop = visit(costs, n, h, left - 1, breaks, f);
            breaks.pop();
            if stop {
                return true;
            }
        }
        false
    }

    let mut best = T::infinity();
    let mut buf = Vec::with_capacity(s);
    visit(costs, n, h, s, &mut buf, &mut |_, c| {
        if c < best {
            best = c;
        }
        false
    });
    let tol = tie_tol(best);
    let mut found = None;
    visit(costs, n, h, s, &mut buf, &mut |b, c| {
        if c <= best + tol {
            found = Some((b.to_vec(), c));
            true
        } else {
            false
        }
    });
    let (breaks, total_cost) = found.expect("at least one admissible partition");
    Ok(Segmentation {
        partition: BreakPartition::new(breaks, n)?,
        total_cost,
        updates: count as usize,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    /// Single dynamic-programming pass (pure structural change).
    DynamicProgram,
    /// Alternating estimation of the stable coefficients and the partition.
    Iterative,
    /// Direct scan over all single break dates.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient<T> {
    pub name: String,
    pub estimate: T,
    pub std_error: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeEstimate<T> {
    pub regime: usize,
    /// First and last 1-based time positions of the regime.
    pub start: usize,
    pub end: usize,
    pub coefficients: Vec<Coefficient<T>>,
    /// Covariance of this regime's coefficients.
    pub covariance: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakEstimates<T> {
    pub partition: BreakPartition,
    pub ssr: T,
    pub regimes: Vec<RegimeEstimate<T>>,
    /// Common coefficients that do not break.
    pub stable: Vec<Coefficient<T>>,
    pub column_map: Vec<ColumnInfo>,
    /// Objective value after each iteration (a single entry for pure
    /// change models).
    pub ssr_path: Vec<T>,
    pub iterations: usize,
    pub method: EstimationMethod,
    #[serde(skip)]
    pub fit: FitResult<T>,
}

/// Result of the search for a fixed number of breaks.
#[derive(Debug, Clone)]
pub(crate) struct Estimated<T> {
    pub partition: BreakPartition,
    pub ssr: T,
    pub ssr_path: Vec<T>,
    pub iterations: usize,
    pub method: EstimationMethod,
}

/// Break search for one resolved model, caching the segment costs of the
/// raw response across break counts.
pub(crate) struct Searcher<'a, T> {
    pub model: &'a ResolvedModel<T>,
    pub h: usize,
    raw: OnceCell<SegmentCostTable<T>>,
}

impl<'a, T: Scalar> Searcher<'a, T> {
    pub fn new(model: &'a ResolvedModel<T>, spec: &ModelSpec) -> Self {
        Self {
            model,
            h: spec.trimming.min_length(model.n_periods),
            raw: OnceCell::new(),
        }
    }

    fn raw_costs(&self) -> &SegmentCostTable<T> {
        self.raw.get_or_init(|| costs_for(self.model, &self.model.y))
    }

    fn joint_ssr(&self, p: &BreakPartition) -> Result<(T, FitResult<T>)> {
        let sys = self.model.system(p, Layout::Partialled, None)?;
        let fit = ols(&sys)?;
        Ok((fit.ssr, fit))
    }

    pub fn estimate(&self, s: usize) -> Result<Estimated<T>> {
        let t = self.model.n_periods;
        if (s + 1) * self.h.max(1) > t {
            return Err(Error::InfeasiblePartition(format!(
                "{s} breaks with minimum regime length {} need at least {} observations, have {t}",
                self.h,
                (s + 1) * self.h.max(1)
            )));
        }
        if self.model.is_pure_change() {
            let seg = optimal_partition(self.raw_costs(), s, self.h)?;
            return Ok(Estimated {
                partition: seg.partition,
                ssr: seg.total_cost,
                ssr_path: vec![seg.total_cost],
                iterations: 1,
                method: EstimationMethod::DynamicProgram,
            });
        }
        match s {
            0 => {
                let p = BreakPartition::empty();
                let (ssr, _) = self.joint_ssr(&p)?;
                Ok(Estimated {
                    partition: p,
                    ssr,
                    ssr_path: vec![ssr],
                    iterations: 0,
                    method: EstimationMethod::Exhaustive,
                })
            }
            1 => self.scan_single(),
            _ => self.iterate(s),
        }
    }

    fn scan_single(&self) -> Result<Estimated<T>> {
        let t = self.model.n_periods;
        let h = self.h.max(1);
        let mut vals = Vec::new();
        for tau in h..=t - h {
            let p = BreakPartition::new(vec![tau], t)?;
            match self.joint_ssr(&p) {
                Ok((ssr, _)) => vals.push((tau, ssr)),
                Err(Error::RankDeficient(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let best = vals
            .iter()
            .map(|v| v.1)
            .fold(T::infinity(), |m, v| if v < m { v } else { m });
        let Some(&(tau, ssr)) = vals.iter().find(|v| v.1 <= best + tie_tol(best)) else {
            return Err(Error::RankDeficient(vec![
                "every single-break design is rank deficient".into(),
            ]));
        };
        Ok(Estimated {
            partition: BreakPartition::new(vec![tau], t)?,
            ssr,
            ssr_path: vec![ssr],
            iterations: vals.len(),
            method: EstimationMethod::Exhaustive,
        })
    }

    fn dp_on(&self, y: &[T], s: usize) -> Result<BreakPartition> {
        let costs = costs_for(self.model, y);
        Ok(optimal_partition(&costs, s, self.h)?.partition)
    }

    fn adjusted_response(&self, p: &BreakPartition, fit: &FitResult<T>) -> Vec<T> {
        let c = self.model.nonbreaking_contribution(p, &fit.coefficients);
        self.model.y.iter().zip(&c).map(|(&y, &c)| y - c).collect()
    }

    fn iterate(&self, s: usize) -> Result<Estimated<T>> {
        let empty = BreakPartition::empty();
        let (_, fit0) = self.joint_ssr(&empty)?;
        let starts = [
            optimal_partition(self.raw_costs(), s, self.h)?.partition,
            self.dp_on(&self.adjusted_response(&empty, &fit0), s)?,
        ];
        let mut best: Option<Estimated<T>> = None;
        for (k, start) in starts.iter().enumerate() {
            if k > 0 && starts[..k].contains(start) {
                continue;
            }
            let start = start.clone();
            let run = self.iterate_from(start, s)?;
            best = match best {
                Some(b) if b.ssr < run.ssr - tie_tol(b.ssr) => Some(b),
                Some(b) if (b.ssr - run.ssr).abs() <= tie_tol(b.ssr) && b.partition <= run.partition => {
                    Some(b)
                }
                _ => Some(run),
            };
        }
        Ok(best.expect("two starting points"))
    }

    fn iterate_from(&self, start: BreakPartition, s: usize) -> Result<Estimated<T>> {
        let mut p = start;
        let (mut ssr, mut fit) = self.joint_ssr(&p)?;
        let mut path = vec![ssr];
        let mut best = (p.clone(), ssr);
        for _ in 0..MAX_ITERATIONS {
            let y_adj = self.adjusted_response(&p, &fit);
            let next = self.dp_on(&y_adj, s)?;
            if next == p {
                return Ok(self.finish(best, path));
            }
            let (ssr_next, fit_next) = self.joint_ssr(&next)?;
            path.push(ssr_next);
            if ssr_next < best.1 {
                best = (next.clone(), ssr_next);
            }
            let change = (ssr - ssr_next).abs();
            p = next;
            fit = fit_next;
            if change <= T::of(CONVERGENCE_TOL) * ssr.abs() {
                return Ok(self.finish(best, path));
            }
            ssr = ssr_next;
        }
        Err(Error::NonConvergence {
            iterations: MAX_ITERATIONS,
            best: best.0,
            ssr: best.1.as_f64(),
        })
    }

    fn finish(&self, best: (BreakPartition, T), path: Vec<T>) -> Estimated<T> {
        Estimated {
            iterations: path.len(),
            partition: best.0,
            ssr: best.1,
            ssr_path: path,
            method: EstimationMethod::Iterative,
        }
    }
}

/// Estimates `s` break dates by minimizing the SSR and fits the model at
/// the estimated partition.
pub fn estimate_breaks<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    s: usize,
) -> Result<BreakEstimates<T>> {
    let model = ResolvedModel::new(data, spec)?;
    if s > spec.trimming.max_breaks() {
        return Err(Error::InvalidArgument(format!(
            "{s} breaks exceed the maximum of {} for trimming {}",
            spec.trimming.max_breaks(),
            spec.trimming
        )));
    }
    let searcher = Searcher::new(&model, spec);
    let est = searcher.estimate(s)?;
    summarize(&model, spec, est)
}

pub(crate) fn summarize<T: Scalar>(
    model: &ResolvedModel<T>,
    spec: &ModelSpec,
    est: Estimated<T>,
) -> Result<BreakEstimates<T>> {
    let t = model.n_periods;
    check_partition(&est.partition, t, spec)?;
    let sys = model.system(&est.partition, Layout::Partialled, None)?;
    let fit = ols_with_vce(&sys, spec.vce, spec.hac_bandwidth)?;
    let se = fit.std_errors();
    let q = sys.q_eff;
    let coef = |c: usize| Coefficient {
        name: sys.column_map[c].name.clone(),
        estimate: fit.coefficients[c],
        std_error: se[c],
    };
    let regimes = est
        .partition
        .regimes(t)
        .into_iter()
        .enumerate()
        .map(|(j, (start, end))| {
            let cols: Vec<usize> = (0..q).map(|v| sys.breaking_column(v, j + 1)).collect();
            RegimeEstimate {
                regime: j + 1,
                start,
                end,
                coefficients: cols.iter().map(|&c| coef(c)).collect(),
                covariance: cols
                    .iter()
                    .map(|&a| cols.iter().map(|&b| fit.covariance[(a, b)]).collect())
                    .collect(),
            }
        })
        .collect();
    let stable = sys
        .column_map
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role == ColumnRole::NonBreaking && c.unit.is_none())
        .map(|(i, _)| coef(i))
        .collect();
    Ok(BreakEstimates {
        partition: est.partition,
        ssr: fit.ssr,
        regimes,
        stable,
        column_map: sys.column_map.clone(),
        ssr_path: est.ssr_path,
        iterations: est.iterations,
        method: est.method,
        fit,
    })
}

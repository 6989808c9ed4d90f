//! Construction of the stacked regression system for a candidate partition.
//!
//! Unit-specific nuisance terms (fixed effects, loadings on cross-sectional
//! averages or observed factors) are partialled out unit by unit, so the
//! design width does not grow with `N`. Nuisance terms that break are
//! masked by regime before projection, which amounts to demeaning (or
//! projecting) within every unit-regime cell.

use serde::Serialize;

use crate::data::{cross_sectional_averages, PanelDataset};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, PivotedQr};
use crate::partition::BreakPartition;
use crate::scalar::{norm_sq, Scalar};
use crate::spec::{Deterministic, ModelSpec};

/// Columns whose residual norm after partialling falls below this fraction of
/// the original norm are treated as absorbed.
const ABSORB_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Breaking,
    NonBreaking,
}

/// Provenance of a design column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnInfo {
    pub name: String,
    pub role: ColumnRole,
    /// 1-based regime for regime-interacted columns.
    pub regime: Option<usize>,
    /// 1-based unit for unit-specific columns.
    pub unit: Option<usize>,
}

impl ColumnInfo {
    pub fn label(&self) -> String {
        let mut s = self.name.clone();
        if let Some(u) = self.unit {
            s.push_str(&format!("#u{u}"));
        }
        if let Some(r) = self.regime {
            s.push_str(&format!("@r{r}"));
        }
        s
    }
}

/// Stacked least-squares problem. Rows are ordered unit-major. The common
/// breaking block comes first (`q_eff` columns per regime, regime-major),
/// followed by the common non-breaking columns and, in the explicit layout,
/// the unit-specific columns.
#[derive(Debug, Clone)]
pub struct RegressionSystem<T> {
    pub response: Vec<T>,
    pub design: Matrix<T>,
    pub column_map: Vec<ColumnInfo>,
    pub n_units: usize,
    pub n_periods: usize,
    pub partition: BreakPartition,
    /// Common breaking columns per regime.
    pub q_eff: usize,
    /// Non-breaking columns present in `design`.
    pub p_total: usize,
    /// Rank of the unit-specific columns projected out before stacking.
    pub absorbed: usize,
    /// Unit-specific breaking columns per unit and regime (partialled or
    /// explicit).
    pub unit_breaking: usize,
}

impl<T: Scalar> RegressionSystem<T> {
    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_cols(&self) -> usize {
        self.design.cols()
    }

    pub fn n_breaks(&self) -> usize {
        self.partition.len()
    }

    /// Residual degrees of freedom, `NT - k - absorbed`.
    pub fn dof_resid(&self) -> isize {
        self.n_rows() as isize - self.n_cols() as isize - self.absorbed as isize
    }

    /// Design column of common breaking variable `v` in 1-based regime `j`.
    pub fn breaking_column(&self, v: usize, j: usize) -> usize {
        (j - 1) * self.q_eff + v
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Series<T> {
    pub name: String,
    /// Stacked `N*T` values.
    pub values: Vec<T>,
}

/// Model after resolving the deterministic part and the factor proxies into
/// four groups of series.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedModel<T> {
    pub n_units: usize,
    pub n_periods: usize,
    pub y: Vec<T>,
    pub breaking: Vec<Series<T>>,
    pub nonbreaking: Vec<Series<T>>,
    pub unit_breaking: Vec<Series<T>>,
    pub unit_fixed: Vec<Series<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layout {
    Partialled,
    Explicit,
}

impl<T: Scalar> ResolvedModel<T> {
    pub fn new(data: &PanelDataset<T>, spec: &ModelSpec) -> Result<Self> {
        spec.validate(data)?;
        let n = data.n_units();
        let t = data.n_periods();
        let col = |name: &str| -> Result<Series<T>> {
            Ok(Series {
                name: name.to_string(),
                values: data.column(name)?.to_vec(),
            })
        };
        let ones = || Series {
            name: "_cons".to_string(),
            values: vec![T::one(); n * t],
        };
        let fe = || Series {
            name: "_fe".to_string(),
            values: vec![T::one(); n * t],
        };
        let expand = |name: String, avg: Vec<T>| Series {
            name,
            values: (0..n).flat_map(|_| avg.iter().copied()).collect(),
        };

        let mut breaking = spec
            .break_vars
            .iter()
            .map(|v| col(v))
            .collect::<Result<Vec<_>>>()?;
        let mut nonbreaking = spec
            .nobreak_vars
            .iter()
            .map(|v| col(v))
            .collect::<Result<Vec<_>>>()?;
        let mut unit_breaking = Vec::new();
        let mut unit_fixed = Vec::new();

        if n == 1 {
            for v in &spec.kfactors {
                breaking.push(col(v)?);
            }
            for v in &spec.nbkfactors {
                nonbreaking.push(col(v)?);
            }
            match spec.deterministic {
                Deterministic::FixedEffects | Deterministic::Constant => nonbreaking.push(ones()),
                Deterministic::FixedEffectsWithBreaks | Deterministic::ConstantWithBreaks => {
                    breaking.push(ones())
                }
                Deterministic::None => {}
            }
        } else {
            for v in &spec.kfactors {
                unit_breaking.push(col(v)?);
            }
            for v in &spec.nbkfactors {
                unit_fixed.push(col(v)?);
            }
            let avg_b = cross_sectional_averages(data, &spec.csa_break)?;
            for (v, a) in spec.csa_break.iter().zip(avg_b) {
                unit_breaking.push(expand(format!("csa({v})"), a));
            }
            let avg_n = cross_sectional_averages(data, &spec.csa_nobreak)?;
            for (v, a) in spec.csa_nobreak.iter().zip(avg_n) {
                unit_fixed.push(expand(format!("csa({v})"), a));
            }
            match spec.deterministic {
                Deterministic::FixedEffects => unit_fixed.push(fe()),
                Deterministic::FixedEffectsWithBreaks => unit_breaking.push(fe()),
                Deterministic::Constant => nonbreaking.push(ones()),
                Deterministic::ConstantWithBreaks => breaking.push(ones()),
                Deterministic::None => {}
            }
        }

        Ok(Self {
            n_units: n,
            n_periods: t,
            y: data.column(&spec.depvar)?.to_vec(),
            breaking,
            nonbreaking,
            unit_breaking,
            unit_fixed,
        })
    }

    /// Number of breaking regressors per unit, used to index critical
    /// values: the common breaking columns, or the unit-specific breaking
    /// terms when nothing common breaks.
    pub fn q_crit(&self) -> usize {
        if self.breaking.is_empty() {
            self.unit_breaking.len()
        } else {
            self.breaking.len()
        }
    }

    /// No stable component: the segment costs are additive across regimes.
    pub fn is_pure_change(&self) -> bool {
        self.nonbreaking.is_empty() && self.unit_fixed.is_empty()
    }

    fn unit_nuisance(&self, unit: usize, regimes: &[usize], n_regimes: usize) -> Matrix<T> {
        let t = self.n_periods;
        let m = self.unit_fixed.len() + n_regimes * self.unit_breaking.len();
        let mut u = Matrix::zeros(t, m);
        for r in 0..t {
            let row = unit * t + r;
            let mut c = 0;
            for s in &self.unit_fixed {
                u[(r, c)] = s.values[row];
                c += 1;
            }
            for j in 0..n_regimes {
                for s in &self.unit_breaking {
                    if regimes[r] == j {
                        u[(r, c)] = s.values[row];
                    }
                    c += 1;
                }
            }
        }
        u
    }

    /// Builds the system without checking trimming feasibility.
    pub fn system(
        &self,
        partition: &BreakPartition,
        layout: Layout,
        response: Option<&[T]>,
    ) -> Result<RegressionSystem<T>> {
        let n = self.n_units;
        let t = self.n_periods;
        let rows = n * t;
        let y = response.unwrap_or(&self.y);
        let regimes: Vec<usize> = (1..=t).map(|p| partition.regime_of(p) - 1).collect();
        let nr = partition.n_regimes();
        let q = self.breaking.len();
        let p = self.nonbreaking.len();
        let mf = self.unit_fixed.len();
        let mb = self.unit_breaking.len();
        let m_unit = mf + nr * mb;
        if m_unit > 0 && m_unit >= t {
            return Err(Error::InsufficientObservations(format!(
                "{m_unit} unit-specific augmentation columns but only {t} observations per unit"
            )));
        }

        let mut column_map = Vec::new();
        for j in 1..=nr {
            for s in &self.breaking {
                column_map.push(ColumnInfo {
                    name: s.name.clone(),
                    role: ColumnRole::Breaking,
                    regime: Some(j),
                    unit: None,
                });
            }
        }
        for s in &self.nonbreaking {
            column_map.push(ColumnInfo {
                name: s.name.clone(),
                role: ColumnRole::NonBreaking,
                regime: None,
                unit: None,
            });
        }
        let k_common = nr * q + p;
        if layout == Layout::Explicit {
            for i in 1..=n {
                for s in &self.unit_fixed {
                    column_map.push(ColumnInfo {
                        name: s.name.clone(),
                        role: ColumnRole::NonBreaking,
                        regime: None,
                        unit: Some(i),
                    });
                }
                for j in 1..=nr {
                    for s in &self.unit_breaking {
                        column_map.push(ColumnInfo {
                            name: s.name.clone(),
                            role: ColumnRole::Breaking,
                            regime: Some(j),
                            unit: Some(i),
                        });
                    }
                }
            }
        }
        let k = column_map.len();

        let mut design = Matrix::zeros(rows, k);
        for row in 0..rows {
            let j = regimes[row % t];
            let out = design.row_mut(row);
            for (v, s) in self.breaking.iter().enumerate() {
                out[j * q + v] = s.values[row];
            }
            for (v, s) in self.nonbreaking.iter().enumerate() {
                out[nr * q + v] = s.values[row];
            }
        }
        let mut response = y.to_vec();
        let mut absorbed = 0;

        if m_unit > 0 {
            match layout {
                Layout::Explicit => {
                    for i in 0..n {
                        let u = self.unit_nuisance(i, &regimes, nr);
                        let base = k_common + i * m_unit;
                        for r in 0..t {
                            for c in 0..m_unit {
                                design[(i * t + r, base + c)] = u[(r, c)];
                            }
                        }
                    }
                }
                Layout::Partialled => {
                    let mut buf = vec![T::zero(); t];
                    for i in 0..n {
                        let u = self.unit_nuisance(i, &regimes, nr);
                        let qr = PivotedQr::new(&u);
                        absorbed += qr.rank();
                        let range = i * t..(i + 1) * t;
                        response[range.clone()].copy_from_slice(&qr.residual(&y[range]));
                        for c in 0..k_common {
                            for r in 0..t {
                                buf[r] = design[(i * t + r, c)];
                            }
                            let before = norm_sq(&buf);
                            let res = qr.residual(&buf);
                            let absorbed_col = norm_sq(&res) <= T::of(ABSORB_TOL * ABSORB_TOL) * before;
                            for r in 0..t {
                                design[(i * t + r, c)] =
                                    if absorbed_col { T::zero() } else { res[r] };
                            }
                        }
                    }
                }
            }
        }

        Ok(RegressionSystem {
            response,
            design,
            column_map,
            n_units: n,
            n_periods: t,
            partition: partition.clone(),
            q_eff: q,
            p_total: k - nr * q,
            absorbed,
            unit_breaking: mb,
        })
    }

    /// Contribution of every non-breaking term at the given coefficients of
    /// a partialled system: common `x'beta` plus the unit-specific stable
    /// nuisance fit, evaluated on `y - w'delta_j - x'beta`.
    pub fn nonbreaking_contribution(
        &self,
        partition: &BreakPartition,
        coefficients: &[T],
    ) -> Vec<T> {
        let n = self.n_units;
        let t = self.n_periods;
        let nr = partition.n_regimes();
        let q = self.breaking.len();
        let regimes: Vec<usize> = (1..=t).map(|p| partition.regime_of(p) - 1).collect();
        let mut common_nb = vec![T::zero(); n * t];
        let mut resid = self.y.clone();
        for row in 0..n * t {
            let j = regimes[row % t];
            for (v, s) in self.breaking.iter().enumerate() {
                resid[row] -= coefficients[j * q + v] * s.values[row];
            }
            for (v, s) in self.nonbreaking.iter().enumerate() {
                let c = coefficients[nr * q + v] * s.values[row];
                common_nb[row] += c;
                resid[row] -= c;
            }
        }
        let mf = self.unit_fixed.len();
        if mf == 0 {
            return common_nb;
        }
        for i in 0..n {
            let u = self.unit_nuisance(i, &regimes, nr);
            let qr = PivotedQr::new(&u);
            let a = qr.solve(&resid[i * t..(i + 1) * t]);
            for r in 0..t {
                let mut fit = T::zero();
                for c in 0..mf {
                    fit += u[(r, c)] * a[c];
                }
                common_nb[i * t + r] += fit;
            }
        }
        common_nb
    }
}

/// Builds the partialled regression system for a trimming-feasible
/// partition.
pub fn build_design<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
) -> Result<RegressionSystem<T>> {
    let model = ResolvedModel::new(data, spec)?;
    check_partition(partition, data.n_periods(), spec)?;
    model.system(partition, Layout::Partialled, None)
}

/// Same model with every unit-specific column written out explicitly
/// (`N` blocks). Useful for inspection and for checking the partialled
/// form, which gives identical slope estimates and residuals.
pub fn build_explicit_design<T: Scalar>(
    data: &PanelDataset<T>,
    spec: &ModelSpec,
    partition: &BreakPartition,
) -> Result<RegressionSystem<T>> {
    let model = ResolvedModel::new(data, spec)?;
    check_partition(partition, data.n_periods(), spec)?;
    model.system(partition, Layout::Explicit, None)
}

pub(crate) fn check_partition(
    partition: &BreakPartition,
    n_periods: usize,
    spec: &ModelSpec,
) -> Result<()> {
    BreakPartition::new(partition.breaks().to_vec(), n_periods)?;
    partition.check_feasible(n_periods, spec.trimming.min_length(n_periods))?;
    if partition.len() > spec.trimming.max_breaks() {
        return Err(Error::InfeasiblePartition(format!(
            "{} breaks exceed the maximum of {} for trimming {}",
            partition.len(),
            spec.trimming.max_breaks(),
            spec.trimming
        )));
    }
    Ok(())
}

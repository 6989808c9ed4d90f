//! Balanced panel container.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Balanced panel of `N` units observed over a shared, gap-free grid of `T`
/// periods. Column values are stored unit-major: element `i * T + t` holds
/// unit `i` at time position `t` (both 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset<T> {
    unit_ids: Vec<String>,
    time_index: Vec<i64>,
    time_labels: Option<Vec<String>>,
    columns: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> PanelDataset<T> {
    pub fn new(
        unit_ids: Vec<String>,
        time_index: Vec<i64>,
        time_labels: Option<Vec<String>>,
        columns: Vec<(String, Vec<T>)>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        let t = time_index.len();
        if n == 0 || t == 0 {
            return Err(Error::InvalidData(
                "a dataset needs at least one unit and one period".into(),
            ));
        }
        for w in time_index.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidData(format!(
                    "time index must be strictly increasing ({} followed by {})",
                    w[0], w[1]
                )));
            }
            if w[1] != w[0] + 1 {
                return Err(Error::InvalidData(format!(
                    "gap in the time grid between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(labels) = &time_labels {
            if labels.len() != t {
                return Err(Error::InvalidData(format!(
                    "{} time labels for {} periods",
                    labels.len(),
                    t
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for u in &unit_ids {
            if !seen.insert(u) {
                return Err(Error::InvalidData(format!("duplicate unit id `{u}`")));
            }
        }
        let mut map = BTreeMap::new();
        for (name, values) in columns {
            Self::check_column(&name, &values, n, t)?;
            if map.insert(name.clone(), values).is_some() {
                return Err(Error::InvalidData(format!("duplicate column `{name}`")));
            }
        }
        Ok(Self {
            unit_ids,
            time_index,
            time_labels,
            columns: map,
        })
    }

    /// Single-unit dataset with time index `1..=T`.
    pub fn time_series(columns: Vec<(String, Vec<T>)>) -> Result<Self> {
        let t = columns.first().map_or(0, |c| c.1.len());
        Self::new(
            vec!["1".to_string()],
            (1..=t as i64).collect(),
            None,
            columns,
        )
    }

    fn check_column(name: &str, values: &[T], n: usize, t: usize) -> Result<()> {
        if values.len() != n * t {
            return Err(Error::InvalidData(format!(
                "column `{name}` has {} values, expected {} ({} units x {} periods)",
                values.len(),
                n * t,
                n,
                t
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "column `{name}` has a non-finite value for unit {} at period {}",
                pos / t + 1,
                pos % t + 1
            )));
        }
        Ok(())
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<T>) -> Result<Self> {
        let name = name.into();
        Self::check_column(&name, &values, self.n_units(), self.n_periods())?;
        self.columns.insert(name, values);
        Ok(self)
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.time_index.len()
    }

    pub fn is_time_series(&self) -> bool {
        self.unit_ids.len() == 1
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_index(&self) -> &[i64] {
        &self.time_index
    }

    pub fn time_labels(&self) -> Option<&[String]> {
        self.time_labels.as_deref()
    }

    /// Display label of the 1-based time position.
    pub fn label(&self, position: usize) -> String {
        let i = position.clamp(1, self.n_periods()) - 1;
        match &self.time_labels {
            Some(l) => l[i].clone(),
            None => self.time_index[i].to_string(),
        }
    }

    /// 1-based position of a time label (or of the index value when no
    /// labels are attached).
    pub fn position_of_label(&self, label: &str) -> Option<usize> {
        match &self.time_labels {
            Some(l) => l.iter().position(|x| x == label).map(|p| p + 1),
            None => {
                let v: i64 = label.trim().parse().ok()?;
                self.time_index.iter().position(|&x| x == v).map(|p| p + 1)
            }
        }
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[T]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Slice of one unit's series.
    pub fn unit_series(&self, name: &str, unit: usize) -> Result<&[T]> {
        let t = self.n_periods();
        Ok(&self.column(name)?[unit * t..(unit + 1) * t])
    }
}

/// Cross-sectional averages `N^{-1} sum_i x_{i,t}`, one length-`T` series per
/// requested column.
pub fn cross_sectional_averages<T: Scalar>(
    data: &PanelDataset<T>,
    vars: &[String],
) -> Result<Vec<Vec<T>>> {
    let n = data.n_units();
    let t = data.n_periods();
    let inv_n = T::one() / T::of_usize(n);
    vars.iter()
        .map(|v| {
            let col = data.column(v)?;
            let mut avg = vec![T::zero(); t];
            for i in 0..n {
                for (a, &x) in avg.iter_mut().zip(&col[i * t..(i + 1) * t]) {
                    *a += x;
                }
            }
            avg.iter_mut().for_each(|a| *a *= inv_n);
            Ok(avg)
        })
        .collect()
}

//! Model specification.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::partition::Trimming;
use crate::scalar::Scalar;

/// Deterministic part of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deterministic {
    /// Unit fixed effects, stable across regimes.
    #[default]
    FixedEffects,
    /// Unit fixed effects re-estimated in every regime.
    FixedEffectsWithBreaks,
    /// A common intercept that does not break.
    Constant,
    /// A common intercept with regime-specific values.
    ConstantWithBreaks,
    None,
}

impl Deterministic {
    pub fn has_intercept(self) -> bool {
        !matches!(self, Deterministic::None)
    }

    pub fn is_fixed_effects(self) -> bool {
        matches!(
            self,
            Deterministic::FixedEffects | Deterministic::FixedEffectsWithBreaks
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Deterministic::FixedEffects => "fe",
            Deterministic::FixedEffectsWithBreaks => "fe-breaks",
            Deterministic::Constant => "constant",
            Deterministic::ConstantWithBreaks => "constant-breaks",
            Deterministic::None => "none",
        }
    }
}

impl fmt::Display for Deterministic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Deterministic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fe" | "fixed-effects" => Deterministic::FixedEffects,
            "fe-breaks" | "fixed-effects-breaks" => Deterministic::FixedEffectsWithBreaks,
            "constant" => Deterministic::Constant,
            "constant-breaks" => Deterministic::ConstantWithBreaks,
            "none" => Deterministic::None,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown deterministic specification `{other}` \
                     (expected fe, fe-breaks, constant, constant-breaks or none)"
                )))
            }
        })
    }
}

/// Variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vce {
    /// Homoskedastic `s^2 (X'X)^{-1}`.
    #[default]
    Ssr,
    /// HC0 sandwich.
    Hc,
    /// Bartlett-kernel Newey-West, lags within unit only.
    Hac,
    /// Nonparametric estimator from unit-wise coefficient dispersion
    /// (panels only; experimental).
    Np,
}

impl Vce {
    pub fn as_str(self) -> &'static str {
        match self {
            Vce::Ssr => "ssr",
            Vce::Hc => "hc",
            Vce::Hac => "hac",
            Vce::Np => "np",
        }
    }
}

impl fmt::Display for Vce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Vce {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ssr" => Vce::Ssr,
            "hc" => Vce::Hc,
            "hac" => Vce::Hac,
            "np" => Vce::Np,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown vce `{other}` (expected ssr, hc, hac or np)"
                )))
            }
        })
    }
}

/// Regression recipe: which columns break, which do not, how the
/// deterministic part and the factor proxies enter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub depvar: String,
    #[serde(default)]
    pub break_vars: Vec<String>,
    #[serde(default)]
    pub nobreak_vars: Vec<String>,
    #[serde(default)]
    pub deterministic: Deterministic,
    /// Columns whose cross-sectional averages enter with unit- and
    /// regime-specific loadings.
    #[serde(default)]
    pub csa_break: Vec<String>,
    /// Columns whose cross-sectional averages enter with unit-specific,
    /// stable loadings.
    #[serde(default)]
    pub csa_nobreak: Vec<String>,
    /// Observed common factors with breaking loadings.
    #[serde(default)]
    pub kfactors: Vec<String>,
    /// Observed common factors with stable loadings.
    #[serde(default)]
    pub nbkfactors: Vec<String>,
    #[serde(default)]
    pub trimming: Trimming,
    #[serde(default)]
    pub vce: Vce,
    /// Overrides the default HAC bandwidth `floor(4 (T/100)^{2/9})`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hac_bandwidth: Option<usize>,
}

impl ModelSpec {
    pub fn new(depvar: impl Into<String>) -> Self {
        Self {
            depvar: depvar.into(),
            break_vars: Vec::new(),
            nobreak_vars: Vec::new(),
            deterministic: Deterministic::default(),
            csa_break: Vec::new(),
            csa_nobreak: Vec::new(),
            kfactors: Vec::new(),
            nbkfactors: Vec::new(),
            trimming: Trimming::default(),
            vce: Vce::default(),
            hac_bandwidth: None,
        }
    }

    pub fn break_vars<S: Into<String>>(mut self, v: impl IntoIterator<Item = S>) -> Self {
        self.break_vars = v.into_iter().map(Into::into).collect();
        self
    }

    pub fn nobreak_vars<S: Into<String>>(mut self, v: impl IntoIterator<Item = S>) -> Self {
        self.nobreak_vars = v.into_iter().map(Into::into).collect();
        self
    }

    pub fn deterministic(mut self, d: Deterministic) -> Self {
        self.deterministic = d;
        self
    }

    pub fn csa_break<S: Into<String>>(mut self, v: impl IntoIterator<Item = S>) -> Self {
        self.csa_break = v.into_iter().map(Into::into).collect();
        self
    }

    pub fn csa_nobreak<S: Into<String>>(mut self, v: impl IntoIterator<Item = S>) -> Self {
        self.csa_nobreak = v.into_iter().map(Into::into).collect();
        self
    }

    pub fn kfactors<S: Into<String>>(mut self, v: impl IntoIterator<Item = S>) -> Self {
        self.kfactors = v.into_iter().map(Into::into).collect();
        self
    }

    pub fn nbkfactors<S: Into<String>>(mut self, v: impl IntoIterator<Item = S>) -> Self {
        self.nbkfactors = v.into_iter().map(Into::into).collect();
        self
    }

    pub fn trimming(mut self, t: Trimming) -> Self {
        self.trimming = t;
        self
    }

    pub fn vce(mut self, v: Vce) -> Self {
        self.vce = v;
        self
    }

    pub fn hac_bandwidth(mut self, lags: Option<usize>) -> Self {
        self.hac_bandwidth = lags;
        self
    }

    /// Checks the specification against a dataset: columns exist, lists are
    /// disjoint, and at least one coefficient is allowed to break.
    pub fn validate<T: Scalar>(&self, data: &PanelDataset<T>) -> Result<()> {
        let mut all: Vec<&String> = vec![&self.depvar];
        for list in [
            &self.break_vars,
            &self.nobreak_vars,
            &self.csa_break,
            &self.csa_nobreak,
            &self.kfactors,
            &self.nbkfactors,
        ] {
            all.extend(list.iter());
        }
        for name in &all {
            data.column(name)?;
        }

        let mut role = BTreeSet::new();
        for list in [
            &self.break_vars,
            &self.nobreak_vars,
            &self.kfactors,
            &self.nbkfactors,
        ] {
            for v in list {
                if v == &self.depvar {
                    return Err(Error::InvalidSpec(format!(
                        "dependent variable `{v}` also listed as a regressor"
                    )));
                }
                if !role.insert(v) {
                    return Err(Error::InvalidSpec(format!(
                        "`{v}` appears in more than one regressor list"
                    )));
                }
            }
        }
        let mut csa = BTreeSet::new();
        for v in self.csa_break.iter().chain(&self.csa_nobreak) {
            if !csa.insert(v) {
                return Err(Error::InvalidSpec(format!(
                    "cross-sectional average of `{v}` requested twice"
                )));
            }
        }

        let n = data.n_units();
        if self.vce == Vce::Np && n < 2 {
            return Err(Error::InvalidSpec(
                "vce np needs a panel with at least two units".into(),
            ));
        }

        let common_breaking = self.break_vars.len()
            + if n == 1 {
                self.kfactors.len()
                    + usize::from(matches!(
                        self.deterministic,
                        Deterministic::ConstantWithBreaks | Deterministic::FixedEffectsWithBreaks
                    ))
            } else {
                usize::from(self.deterministic == Deterministic::ConstantWithBreaks)
            };
        if common_breaking == 0 {
            let unit_breaking = n > 1
                && (self.deterministic == Deterministic::FixedEffectsWithBreaks
                    || !self.kfactors.is_empty()
                    || !self.csa_break.is_empty());
            if self.deterministic == Deterministic::FixedEffects {
                return Err(Error::InvalidSpec(
                    "with fixed effects, a model without breaking regressors cannot be considered"
                        .into(),
                ));
            }
            if !unit_breaking {
                return Err(Error::InvalidSpec(
                    "no coefficient is allowed to break; add breaking regressors \
                     or a breaking constant"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> PanelDataset<f64> {
        PanelDataset::new(
            vec!["a".into(), "b".into()],
            vec![1, 2, 3],
            None,
            vec![
                ("y".into(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                ("x".into(), vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]),
                ("z".into(), vec![2.0, 1.0, 0.0, 1.0, 2.0, 1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn fixed_effects_without_breaking_regressor_is_rejected() {
        let s = ModelSpec::new("y").nobreak_vars(["x"]);
        let err = s.validate(&data()).unwrap_err().to_string();
        assert!(err.contains("fixed effects"), "{err}");
    }

    #[test]
    fn breaking_fixed_effects_alone_are_allowed() {
        let s = ModelSpec::new("y").deterministic(Deterministic::FixedEffectsWithBreaks);
        assert!(s.validate(&data()).is_ok());
        let s = ModelSpec::new("y").deterministic(Deterministic::ConstantWithBreaks);
        assert!(s.validate(&data()).is_ok());
    }

    #[test]
    fn overlapping_lists_are_rejected() {
        let s = ModelSpec::new("y").break_vars(["x"]).nobreak_vars(["x"]);
        assert!(s.validate(&data()).is_err());
        let s = ModelSpec::new("y").break_vars(["y"]);
        assert!(s.validate(&data()).is_err());
        let s = ModelSpec::new("y").break_vars(["nope"]);
        assert!(matches!(s.validate(&data()), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn spec_round_trips_through_strings() {
        for d in [
            Deterministic::FixedEffects,
            Deterministic::FixedEffectsWithBreaks,
            Deterministic::Constant,
            Deterministic::ConstantWithBreaks,
            Deterministic::None,
        ] {
            assert_eq!(d.as_str().parse::<Deterministic>().unwrap(), d);
        }
        for v in [Vce::Ssr, Vce::Hc, Vce::Hac, Vce::Np] {
            assert_eq!(v.as_str().parse::<Vce>().unwrap(), v);
        }
    }
}

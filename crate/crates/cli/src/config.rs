//! Command-line options and their validation.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use strucbreak::{Deterministic, ModelSpec, Trimming, Vce};

use crate::data::{parse_lag, Roles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    /// Estimate the number of breaks sequentially, then date them.
    Auto,
    /// Known-break test, supF, double maximum, or F(s+1|s).
    Test,
    /// Date a given number of breaks.
    Estimate,
    /// Regime indicator for a previous estimate.
    Indicator,
    /// Split variables by regime of a previous estimate.
    Split,
    /// Per-regime (x, y) pairs for a scatter plot.
    ScatterData,
    /// Simulate critical values.
    SimulateCv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

/// Estimation and testing of multiple structural breaks.
#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "strucbreak", version)]
pub struct RunConfig {
    #[arg(value_enum, required_unless_present = "replay")]
    pub verb: Option<Verb>,

    /// CSV file with a header row.
    #[arg(long, short = 'i')]
    #[serde(default)]
    pub input: Option<PathBuf>,

    /// Dependent variable followed by the breaking regressors. Postestimation
    /// verbs take their variable list here. `L.x` and `Lk.x` are lags.
    #[serde(default)]
    pub variables: Vec<String>,

    /// Dependent variable; when given, every positional variable is a
    /// breaking regressor.
    #[arg(long)]
    #[serde(default)]
    pub depvar: Option<String>,

    /// Breaking regressors, in addition to the positional ones.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub breakvars: Vec<String>,

    /// fe, fe-breaks, constant, constant-breaks or none; an alternative to
    /// the constant and fixed effects switches.
    #[arg(long)]
    #[serde(default)]
    pub deterministic: Option<Deterministic>,

    /// Time identifier column (integers, YYYYwN, YYYYqN or YYYYmN).
    #[arg(long, default_value = "time")]
    pub time: String,

    /// Unit identifier column; omit for a single time series.
    #[arg(long)]
    #[serde(default)]
    pub unit: Option<String>,

    /// First period of the estimation sample.
    #[arg(long)]
    #[serde(default)]
    pub from: Option<String>,

    /// Last period of the estimation sample.
    #[arg(long)]
    #[serde(default)]
    pub to: Option<String>,

    /// Regressors whose coefficients do not break.
    #[arg(long = "nobreakvariables", alias = "nobreakvars", value_delimiter = ',')]
    #[serde(default)]
    pub nobreakvariables: Vec<String>,

    /// Let the constant break (implies --nofixedeffects).
    #[arg(long)]
    #[serde(default)]
    pub breakconstant: bool,

    #[arg(long)]
    #[serde(default)]
    pub noconstant: bool,

    #[arg(long)]
    #[serde(default)]
    pub breakfixedeffects: bool,

    #[arg(long)]
    #[serde(default)]
    pub nofixedeffects: bool,

    /// Cross-sectional averages entering with breaking loadings.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub csa: Vec<String>,

    /// Cross-sectional averages entering with stable loadings.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub csanobreak: Vec<String>,

    /// Shorthand for --csa <breaking regressors> --csanobreak <stable regressors>.
    #[arg(long)]
    #[serde(default)]
    pub csd: bool,

    /// Observed common factors with breaking loadings.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub kfactors: Vec<String>,

    /// Observed common factors with stable loadings.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub nbkfactors: Vec<String>,

    /// Minimum regime length as a fraction of T (0.05, 0.10, 0.15, 0.20 or
    /// 0.25; percentages accepted).
    #[arg(long, default_value_t = 0.15)]
    pub trimming: f64,

    /// ssr, hc, hac or np.
    #[arg(long, default_value = "ssr")]
    pub vce: Vce,

    /// HAC truncation lag; default floor(4 (T/100)^(2/9)).
    #[arg(long)]
    #[serde(default)]
    pub hac_lags: Option<usize>,

    /// Known break dates: time labels, or positions with --index.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub breakpoints: Vec<String>,

    /// Read --breakpoints as 1-based positions.
    #[arg(long)]
    #[serde(default)]
    pub index: bool,

    /// Expected label format of --breakpoints (tw, tq, tm); checked against
    /// the time column.
    #[arg(long)]
    #[serde(default)]
    pub fmt: Option<String>,

    /// 1: no breaks against s breaks; 2: against lo..=hi breaks; 3: s-1
    /// against s breaks.
    #[arg(long, short = 'H')]
    #[serde(default)]
    pub hypothesis: Option<u8>,

    /// Number of breaks; two values give a range for hypothesis 2.
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    #[serde(default)]
    pub breaks: Vec<usize>,

    /// Weight the double maximum statistic.
    #[arg(long)]
    #[serde(default)]
    pub wdmax: bool,

    /// Confidence level in percent (or as a fraction).
    #[arg(long, default_value_t = 95.0)]
    pub level: f64,

    /// With hypothesis 3, run F(s+1|s) sequentially up to --breaks.
    #[arg(long)]
    #[serde(default)]
    pub sequential: bool,

    /// Show confidence intervals as positions instead of labels.
    #[arg(long)]
    #[serde(default)]
    pub showindex: bool,

    /// Use each adjacent regime's own moments for the interval bounds.
    #[arg(long)]
    #[serde(default)]
    pub ci_regime_specific: bool,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    #[serde(skip)]
    pub format: OutputFormat,

    /// Write the report here instead of standard output.
    #[arg(long, short = 'o')]
    #[serde(skip)]
    pub output: Option<PathBuf>,

    /// Estimate state file written by auto/estimate and read by the
    /// postestimation verbs. Defaults to `<input>.breaks.json`.
    #[arg(long)]
    #[serde(default)]
    pub state: Option<PathBuf>,

    /// CSV written by indicator, split and `simulate-cv --table`; directory
    /// for the per-regime files of scatter-data.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,

    /// Random seed for simulate-cv.
    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,

    /// Replications for simulate-cv.
    #[arg(long, default_value_t = 5000)]
    pub reps: usize,

    /// Discretization length for simulate-cv.
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,

    /// Statistic for simulate-cv: supF, Dmax, WDmax or Fnext.
    #[arg(long, default_value = "supF")]
    pub kind: String,

    /// Number of breaking regressors for simulate-cv.
    #[arg(long, default_value_t = 1)]
    pub q: usize,

    /// With simulate-cv, write a complete table for q = 1..=--q instead.
    #[arg(long)]
    #[serde(default)]
    pub table: bool,

    /// Rerun the configuration stored in a JSON report. Only --format and
    /// --output may accompany it.
    #[arg(long)]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
}

fn non_empty<T>(v: &[T]) -> bool {
    !v.is_empty()
}

impl RunConfig {
    /// Parses from an argument list (first element is the program name).
    pub fn from_args<I, S>(args: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<std::ffi::OsString> + Clone,
    {
        Ok(Self::try_parse_from(args)?)
    }

    pub fn trimming(&self) -> Result<Trimming> {
        let t = if self.trimming >= 1.0 {
            self.trimming / 100.0
        } else {
            self.trimming
        };
        Ok(Trimming::new(t)?)
    }

    pub fn deterministic(&self) -> Deterministic {
        if let Some(d) = self.deterministic {
            d
        } else if self.breakfixedeffects {
            Deterministic::FixedEffectsWithBreaks
        } else if self.breakconstant {
            Deterministic::ConstantWithBreaks
        } else if self.nofixedeffects && self.noconstant {
            Deterministic::None
        } else if self.nofixedeffects {
            Deterministic::Constant
        } else {
            Deterministic::FixedEffects
        }
    }

    pub fn depvar(&self) -> Option<&str> {
        self.depvar
            .as_deref()
            .or_else(|| self.variables.first().map(String::as_str))
    }

    /// Breaking regressors of the model.
    pub fn breaking(&self) -> Vec<String> {
        let skip = usize::from(self.depvar.is_none());
        let mut v: Vec<String> = self.variables.iter().skip(skip).cloned().collect();
        v.extend(self.breakvars.iter().cloned());
        dedup(v)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let Some(depvar) = self.depvar() else {
            bail!("a dependent variable is required");
        };
        let breaking = self.breaking();
        let mut csa = self.csa.clone();
        let mut csanobreak = self.csanobreak.clone();
        if self.csd {
            csa.extend(breaking.iter().cloned());
            csanobreak.extend(self.nobreakvariables.iter().cloned());
        }
        Ok(ModelSpec::new(depvar)
            .break_vars(breaking)
            .nobreak_vars(self.nobreakvariables.clone())
            .deterministic(self.deterministic())
            .csa_break(dedup(csa))
            .csa_nobreak(dedup(csanobreak))
            .kfactors(self.kfactors.clone())
            .nbkfactors(self.nbkfactors.clone())
            .trimming(self.trimming()?)
            .vce(self.vce)
            .hac_bandwidth(self.hac_lags))
    }

    /// Every series the model or a postestimation verb refers to.
    pub fn roles(&self) -> Roles {
        let mut vars: Vec<String> = self.depvar.iter().cloned().collect();
        vars.extend(self.variables.iter().cloned());
        for list in [
            &self.breakvars,
            &self.nobreakvariables,
            &self.csa,
            &self.csanobreak,
            &self.kfactors,
            &self.nbkfactors,
        ] {
            vars.extend(list.iter().cloned());
        }
        Roles {
            time: self.time.clone(),
            unit: self.unit.clone(),
            variables: dedup(vars),
            from: self.from.clone(),
            to: self.to.clone(),
        }
    }

    pub fn is_postestimation(&self) -> bool {
        matches!(
            self.verb,
            Some(Verb::Indicator | Verb::Split | Verb::ScatterData)
        )
    }

    /// Confidence level as a fraction.
    pub fn level_fraction(&self) -> f64 {
        if self.level > 1.0 {
            self.level / 100.0
        } else {
            self.level
        }
    }

    /// Rejects option combinations that have no meaning, before any data
    /// is read.
    pub fn validate(&self) -> Result<()> {
        use Verb::*;
        let Some(verb) = self.verb else {
            bail!("a command is required");
        };
        if self.breakfixedeffects && self.nofixedeffects {
            bail!("--breakfixedeffects and --nofixedeffects are mutually exclusive");
        }
        if self.breakconstant && self.noconstant {
            bail!("--breakconstant and --noconstant are mutually exclusive");
        }
        if self.breakconstant && self.breakfixedeffects {
            bail!("--breakconstant and --breakfixedeffects are mutually exclusive");
        }
        if self.deterministic.is_some()
            && (self.breakconstant || self.noconstant || self.breakfixedeffects || self.nofixedeffects)
        {
            bail!("--deterministic replaces the constant and fixed effects switches; give one or the other");
        }
        self.trimming()?;
        if !(self.level > 0.0 && self.level < 100.0) {
            bail!("--level must lie in (0, 100)");
        }
        for v in self.variables.iter().chain(&self.nobreakvariables).chain(&self.breakvars) {
            parse_lag(v)?;
        }
        if verb != SimulateCv && self.input.is_none() && !self.is_postestimation() {
            bail!("--input is required for `{}`", verb_name(verb));
        }
        if matches!(verb, Auto | Test | Estimate) && self.depvar().is_none() {
            bail!("a dependent variable is required");
        }

        let has_bp = non_empty(&self.breakpoints);
        if has_bp && !matches!(verb, Test | Indicator | Split | ScatterData) {
            bail!("--breakpoints applies to `test` and the postestimation verbs only");
        }
        if self.index && !has_bp {
            bail!("--index needs --breakpoints");
        }
        if self.index && self.fmt.is_some() {
            bail!("--index and --fmt are mutually exclusive: positions or labels, not both");
        }
        if has_bp && self.index {
            if let Some(b) = self.breakpoints.iter().find(|b| b.trim().parse::<usize>().is_err()) {
                bail!("with --index every breakpoint must be a position, got `{b}`");
            }
        }
        if let Some(f) = &self.fmt {
            if !matches!(f.as_str(), "tw" | "tq" | "tm" | "%tw" | "%tq" | "%tm") {
                bail!("--fmt must be one of tw, tq, tm");
            }
        }
        if let Some(h) = self.hypothesis {
            if verb != Test {
                bail!("--hypothesis applies to `test` only");
            }
            if !(1..=3).contains(&h) {
                bail!("--hypothesis must be 1, 2 or 3");
            }
            if has_bp && h != 1 {
                bail!("known breakpoints test hypothesis 1 only");
            }
        }
        let unknown = verb == Test && !has_bp && self.hypothesis.is_some();
        if self.breaks.len() == 2 && !(unknown && self.hypothesis == Some(2)) && verb != SimulateCv {
            bail!("a range of breaks applies to hypothesis 2 only");
        }
        if self.breaks.len() == 2 && self.breaks[0] > self.breaks[1] {
            bail!("--breaks lower bound exceeds upper bound");
        }
        if self.breaks.contains(&0) {
            bail!("--breaks must be positive");
        }
        if self.wdmax && self.hypothesis != Some(2) {
            bail!("--wdmax applies to hypothesis 2 only");
        }
        if self.sequential && self.hypothesis != Some(3) {
            bail!("--sequential applies to hypothesis 3 only");
        }
        if has_bp && !self.breaks.is_empty() {
            bail!("give either --breakpoints or --breaks, not both");
        }
        if verb == Test && self.hypothesis.is_some_and(|h| h != 2) && self.breaks.is_empty() && !has_bp {
            bail!("--breaks is required with hypothesis 1 and 3");
        }
        if matches!(verb, Indicator | Split | ScatterData)
            && !has_bp
            && self.state.is_none()
            && self.input.is_none()
        {
            bail!("`{}` needs --state, --input or --breakpoints", verb_name(verb));
        }
        if verb == Estimate && self.breaks.len() != 1 {
            bail!("`estimate` needs --breaks with the number of breaks");
        }
        if self.showindex && !matches!(verb, Auto | Estimate) {
            bail!("--showindex applies to `auto` and `estimate` only");
        }
        if matches!(verb, Split | ScatterData) && self.variables.is_empty() {
            bail!("`{}` needs a variable list", verb_name(verb));
        }
        if verb == ScatterData && self.variables.len() > 2 {
            bail!("`scatter-data` takes the x variable, optionally preceded by y");
        }
        if verb == SimulateCv {
            self.kind.parse::<strucbreak::CriticalKind>()?;
            if self.q == 0 {
                bail!("--q must be at least 1");
            }
        }
        Ok(())
    }
}

pub fn verb_name(v: Verb) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

fn dedup(v: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(v.len());
    for s in v {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

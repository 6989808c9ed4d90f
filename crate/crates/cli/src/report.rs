//! Report structures shared by the JSON and text renderings.
//!
//! Text output prints every number with Rust's shortest round-trip
//! formatting, so the two renderings carry the same values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use strucbreak::{
    BreakEstimates, BreakInterval, Hypothesis, CriticalValues, PanelDataset, SequentialCount, TestDetails,
    TestOutcome,
};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: RunConfig,
    pub seed: u64,
    /// Checksum of the critical value table used for the decisions.
    pub critical_table: String,
    #[serde(default)]
    pub sample: Option<Sample>,
    pub result: Body,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub units: usize,
    pub periods: usize,
    pub first: String,
    pub last: String,
}

impl Sample {
    pub fn of(d: &PanelDataset) -> Self {
        Sample {
            units: d.n_units(),
            periods: d.n_periods(),
            first: d.label(1),
            last: d.label(d.n_periods()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    Test(TestReport),
    Sequential(SequentialReport),
    Estimate(EstimateReport),
    Auto {
        sequential: SequentialReport,
        estimate: EstimateReport,
    },
    Indicator {
        file: String,
        breaks: Vec<usize>,
        /// Observations per regime.
        counts: Vec<usize>,
    },
    Split {
        file: String,
        breaks: Vec<usize>,
        columns: Vec<String>,
    },
    Scatter {
        /// One file per regime.
        files: Vec<String>,
        breaks: Vec<usize>,
        x: String,
        y: String,
        lines: Vec<ScatterLine>,
    },
    Critical(SimulatedEntry),
    Table {
        file: String,
        entries: usize,
        checksum: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub null: String,
    pub alternative: String,
    pub statistic: f64,
    pub q: usize,
    #[serde(default)]
    pub critical: Option<CriticalValues>,
    /// Rejection at 90, 95 and 99%.
    #[serde(default)]
    pub reject: Option<[bool; 3]>,
    #[serde(default)]
    pub p_value: Option<f64>,
    #[serde(default)]
    pub df: Option<(usize, usize)>,
    #[serde(default)]
    pub p_value_breaks_df: Option<f64>,
    pub breaks: Vec<BreakDate>,
    #[serde(default)]
    pub double_max: Option<DoubleMaxReport>,
    #[serde(default)]
    pub extra_break: Option<BreakDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleMaxReport {
    /// `sup_f[k]` is supF(s_lo + k).
    pub s_lo: usize,
    pub sup_f: Vec<f64>,
    pub weights: Vec<f64>,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakDate {
    pub index: usize,
    pub label: String,
}

impl BreakDate {
    fn of(d: &PanelDataset, index: usize) -> Self {
        BreakDate {
            index,
            label: d.label(index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialReport {
    pub breaks: usize,
    pub level: String,
    pub steps: Vec<TestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub breaks: Vec<BreakDate>,
    pub ssr: f64,
    pub method: String,
    pub iterations: usize,
    pub regimes: Vec<RegimeReport>,
    pub stable: Vec<CoefReport>,
    pub intervals: Vec<IntervalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: usize,
    pub start: BreakDate,
    pub end: BreakDate,
    pub coefficients: Vec<CoefReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub level: f64,
    pub estimate: BreakDate,
    pub lower: BreakDate,
    pub upper: BreakDate,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterLine {
    pub regime: usize,
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedEntry {
    pub statistic: String,
    pub q: usize,
    pub s_lo: usize,
    pub s_hi: usize,
    pub trimming: f64,
    pub reps: usize,
    pub grid: usize,
    pub values: [f64; 3],
    pub std_errors: [f64; 3],
    /// The shipped table's entry for the same key, when present.
    #[serde(default)]
    pub table: Option<CriticalValues>,
}

impl TestReport {
    pub fn from_outcome(o: &TestOutcome<f64>, d: &PanelDataset, test: &str, null: String, alt: String) -> Self {
        let (double_max, extra_break) = match &o.details {
            Some(TestDetails::DoubleMax {
                sup_f,
                weights,
                argmax,
                ..
            }) => (
                Some(DoubleMaxReport {
                    s_lo: match o.hypothesis {
                        Hypothesis::DoubleMax { lo, .. } => lo,
                        _ => 1,
                    },
                    sup_f: sup_f.clone(),
                    weights: weights.clone(),
                    argmax: *argmax,
                }),
                None,
            ),
            Some(TestDetails::FNext { tau, .. }) => (None, Some(BreakDate::of(d, *tau))),
            None => (None, None),
        };
        TestReport {
            test: test.into(),
            null,
            alternative: alt,
            statistic: o.statistic,
            q: o.q,
            critical: o.critical,
            reject: o.reject.map(|r| [r.at90, r.at95, r.at99]),
            p_value: o.p_value,
            df: o.df,
            p_value_breaks_df: o.p_value_breaks_df,
            breaks: o
                .attained_partition
                .breaks()
                .iter()
                .map(|&b| BreakDate::of(d, b))
                .collect(),
            double_max,
            extra_break,
        }
    }
}

impl SequentialReport {
    pub fn from_count(c: &SequentialCount<f64>, d: &PanelDataset) -> Self {
        SequentialReport {
            breaks: c.breaks,
            level: c.level.to_string(),
            steps: c
                .steps
                .iter()
                .enumerate()
                .map(|(s, o)| {
                    TestReport::from_outcome(
                        o,
                        d,
                        &format!("F({}|{s})", s + 1),
                        format!("{s} breaks"),
                        format!("{} breaks", s + 1),
                    )
                })
                .collect(),
        }
    }
}

impl EstimateReport {
    pub fn new(e: &BreakEstimates, ci: &[BreakInterval], d: &PanelDataset) -> Self {
        let coefs = |v: &[strucbreak::Coefficient<f64>]| {
            v.iter()
                .map(|c| CoefReport {
                    name: c.name.clone(),
                    estimate: c.estimate,
                    std_error: c.std_error,
                })
                .collect::<Vec<_>>()
        };
        EstimateReport {
            breaks: e.partition.breaks().iter().map(|&b| BreakDate::of(d, b)).collect(),
            ssr: e.ssr,
            method: serde_json::to_value(e.method)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            iterations: e.iterations,
            regimes: e
                .regimes
                .iter()
                .map(|r| RegimeReport {
                    regime: r.regime,
                    start: BreakDate::of(d, r.start),
                    end: BreakDate::of(d, r.end),
                    coefficients: coefs(&r.coefficients),
                })
                .collect(),
            stable: coefs(&e.stable),
            intervals: ci
                .iter()
                .map(|c| IntervalReport {
                    level: c.level,
                    estimate: BreakDate {
                        index: c.break_index,
                        label: c.break_label.clone(),
                    },
                    lower: BreakDate {
                        index: c.lower_index,
                        label: c.lower_label.clone(),
                    },
                    upper: BreakDate {
                        index: c.upper_index,
                        label: c.upper_label.clone(),
                    },
                    degenerate: c.degenerate,
                })
                .collect(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:?}"))
}

fn date(b: &BreakDate, showindex: bool) -> String {
    if showindex || b.label == b.index.to_string() {
        b.index.to_string()
    } else {
        format!("{} ({})", b.label, b.index)
    }
}

fn render_test(out: &mut String, t: &TestReport, showindex: bool) {
    let _ = writeln!(out, "{}: H0 {} vs H1 {}", t.test, t.null, t.alternative);
    let _ = writeln!(out, "  statistic      {:?}", t.statistic);
    if let Some(c) = &t.critical {
        let _ = writeln!(out, "  critical 90%   {:?}", c.c90);
        let _ = writeln!(out, "  critical 95%   {:?}", c.c95);
        let _ = writeln!(out, "  critical 99%   {:?}", c.c99);
    }
    if let Some(r) = t.reject {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(
            out,
            "  reject at      90%: {}  95%: {}  99%: {}",
            yn(r[0]),
            yn(r[1]),
            yn(r[2])
        );
    }
    if t.p_value.is_some() {
        let _ = writeln!(out, "  p-value        {}", opt(t.p_value));
        if let Some((a, b)) = t.df {
            let _ = writeln!(out, "  df             ({a}, {b})");
        }
        let _ = writeln!(out, "  p-value (s df) {}", opt(t.p_value_breaks_df));
    }
    if let Some(dm) = &t.double_max {
        for (k, (f, w)) in dm.sup_f.iter().zip(&dm.weights).enumerate() {
            let _ = writeln!(out, "  supF({})        {:?}  weight {:?}", dm.s_lo + k, f, w);
        }
        let _ = writeln!(out, "  argmax         {}", dm.argmax);
    }
    if !t.breaks.is_empty() {
        let b: Vec<String> = t.breaks.iter().map(|b| date(b, showindex)).collect();
        let _ = writeln!(out, "  breaks         {}", b.join(", "));
    }
    if let Some(e) = &t.extra_break {
        let _ = writeln!(out, "  extra break    {}", date(e, showindex));
    }
}

fn render_estimate(out: &mut String, e: &EstimateReport, showindex: bool) {
    let _ = writeln!(out, "Estimated breaks: {}", e.breaks.len());
    let _ = writeln!(out, "  ssr            {:?}", e.ssr);
    let _ = writeln!(out, "  method         {} ({} iterations)", e.method, e.iterations);
    for c in &e.intervals {
        let _ = writeln!(
            out,
            "  break {}  [{}, {}] at {}%{}",
            date(&c.estimate, showindex),
            date(&c.lower, showindex),
            date(&c.upper, showindex),
            c.level * 100.0,
            if c.degenerate { " (no estimated shift)" } else { "" }
        );
    }
    for r in &e.regimes {
        let _ = writeln!(
            out,
            "Regime {}: {} to {}",
            r.regime,
            date(&r.start, showindex),
            date(&r.end, showindex)
        );
        for c in &r.coefficients {
            let _ = writeln!(out, "  {:<14} {:?}  (se {:?})", c.name, c.estimate, c.std_error);
        }
    }
    if !e.stable.is_empty() {
        let _ = writeln!(out, "Stable coefficients");
        for c in &e.stable {
            let _ = writeln!(out, "  {:<14} {:?}  (se {:?})", c.name, c.estimate, c.std_error);
        }
    }
}

fn render_sequential(out: &mut String, s: &SequentialReport, showindex: bool) {
    let _ = writeln!(out, "Sequential F(s+1|s) at {}", s.level);
    for t in &s.steps {
        render_test(out, t, showindex);
    }
    let _ = writeln!(out, "Detected number of breaks: {}", s.breaks);
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let show = self.config.showindex;
        let mut out = String::new();
        if let Some(s) = &self.sample {
            let _ = writeln!(
                out,
                "Sample: {} unit(s), {} periods, {} to {}",
                s.units, s.periods, s.first, s.last
            );
        }
        match &self.result {
            Body::Test(t) => render_test(&mut out, t, show),
            Body::Sequential(s) => render_sequential(&mut out, s, show),
            Body::Estimate(e) => render_estimate(&mut out, e, show),
            Body::Auto {
                sequential,
                estimate,
            } => {
                render_sequential(&mut out, sequential, show);
                render_estimate(&mut out, estimate, show);
            }
            Body::Indicator {
                file,
                breaks,
                counts,
            } => {
                let _ = writeln!(out, "Regime indicator written to {file}");
                let _ = writeln!(out, "  breaks         {breaks:?}");
                let _ = writeln!(out, "  observations   {counts:?}");
            }
            Body::Split {
                file,
                breaks,
                columns,
            } => {
                let _ = writeln!(out, "Split variables written to {file}");
                let _ = writeln!(out, "  breaks         {breaks:?}");
                let _ = writeln!(out, "  columns        {}", columns.join(", "));
            }
            Body::Scatter {
                files,
                breaks,
                x,
                y,
                lines,
            } => {
                let _ = writeln!(out, "Scatter data ({y} against {x}) written to {}", files.join(", "));
                let _ = writeln!(out, "  breaks         {breaks:?}");
                for l in lines {
                    let _ = writeln!(
                        out,
                        "  regime {}  n {}  intercept {:?}  slope {:?}",
                        l.regime, l.n, l.intercept, l.slope
                    );
                }
            }
            Body::Critical(c) => {
                let _ = writeln!(
                    out,
                    "{} critical values, q {}, breaks {}..{}, trimming {} ({} reps, grid {})",
                    c.statistic, c.q, c.s_lo, c.s_hi, c.trimming, c.reps, c.grid
                );
                for (k, lvl) in ["90%", "95%", "99%"].iter().enumerate() {
                    let tab = c.table.map(|t| [t.c90, t.c95, t.c99][k]);
                    let _ = writeln!(
                        out,
                        "  {lvl}  {:?}  (se {:?})  table {}",
                        c.values[k],
                        c.std_errors[k],
                        opt(tab)
                    );
                }
            }
            Body::Table {
                file,
                entries,
                checksum,
            } => {
                let _ = writeln!(out, "Critical value table written to {file}");
                let _ = writeln!(out, "  entries        {entries}");
                let _ = writeln!(out, "  checksum       {checksum}");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

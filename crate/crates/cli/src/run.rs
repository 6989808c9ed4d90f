//! Verb dispatch.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use strucbreak::hypothesis::critical::tabulate;
use strucbreak::{
    break_ci_with, chow_f, double_max, estimate_breaks, f_next, sequential_count,
    simulate_critical_values, sup_f, BreakPartition, CiMoments, CriticalKind, CriticalValueTable,
    ModelSpec, PanelDataset, Trimming,
};

use crate::config::{OutputFormat, RunConfig, Verb};
use crate::data::{load_csv, parse_time, TimeFormat};
use crate::report::{
    Body, EstimateReport, Report, Sample, ScatterLine, SequentialReport, SimulatedEntry,
    TestReport, SCHEMA_VERSION,
};

/// Break dates left behind by `auto` and `estimate` for the postestimation
/// verbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub schema_version: u32,
    pub config: RunConfig,
    pub periods: usize,
    pub breaks: Vec<usize>,
    pub break_labels: Vec<String>,
}

/// Rendered report and the file it went to, if any.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub text: String,
    pub written_to: Option<PathBuf>,
}

/// Parses arguments, runs, writes the report where asked and returns the
/// rendered report.
pub fn main_with_args<I, S>(args: I) -> Result<Rendered>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = RunConfig::from_args(args)?;
    let (report, format, output) = match &cli.replay {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let old: Report = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a report", path.display()))?;
            if old.schema_version != SCHEMA_VERSION {
                bail!(
                    "report schema {} is not supported (expected {SCHEMA_VERSION})",
                    old.schema_version
                );
            }
            (execute(&old.config)?, cli.format, cli.output.clone())
        }
        None => (execute(&cli)?, cli.format, cli.output.clone()),
    };
    let rendered = match format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Text => report.to_text(),
    };
    if let Some(path) = &output {
        fs::write(path, &rendered).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Rendered {
        text: rendered,
        written_to: output,
    })
}

/// Runs one configuration and returns its report.
pub fn execute(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let verb = cfg.verb.expect("validated");
    let mut warnings = Vec::new();
    let (sample, result) = match verb {
        Verb::SimulateCv => (None, simulate(cfg)?),
        Verb::Indicator | Verb::Split | Verb::ScatterData => {
            let (d, body) = postestimation(cfg, verb)?;
            (Some(Sample::of(&d)), body)
        }
        Verb::Auto | Verb::Test | Verb::Estimate => {
            let input = cfg.input.as_deref().expect("validated");
            let d = load_csv(input, &cfg.roles())?;
            let spec = cfg.model_spec()?;
            if d.is_time_series() && !(spec.csa_break.is_empty() && spec.csa_nobreak.is_empty()) {
                warnings.push("cross-sectional averages need a panel; ignored for a single series".into());
            }
            let body = match verb {
                Verb::Test => test(cfg, &d, &spec, &mut warnings)?,
                Verb::Estimate => {
                    let e = estimate(cfg, &d, &spec, cfg.breaks[0])?;
                    write_state(cfg, &d, &e)?;
                    Body::Estimate(e)
                }
                _ => {
                    let s_max = cfg.breaks.first().copied().unwrap_or(spec.trimming.max_breaks());
                    let seq = sequential_count(&d, &spec, s_max, cfg.level_fraction())?;
                    collect(&mut warnings, &seq.warnings);
                    for st in &seq.steps {
                        collect(&mut warnings, &st.warnings);
                    }
                    let e = estimate(cfg, &d, &spec, seq.breaks)?;
                    write_state(cfg, &d, &e)?;
                    Body::Auto {
                        sequential: SequentialReport::from_count(&seq, &d),
                        estimate: e,
                    }
                }
            };
            (Some(Sample::of(&d)), body)
        }
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seed: cfg.seed,
        critical_table: CriticalValueTable::embedded().checksum().into(),
        sample,
        result,
        warnings,
    })
}

fn collect(into: &mut Vec<String>, from: &[String]) {
    for w in from {
        if !into.contains(w) {
            into.push(w.clone());
        }
    }
}

/// Resolves `--breakpoints` against the estimation sample: positions with
/// `index`, otherwise time labels. The result must respect the trimming.
pub fn parse_breakpoints(
    values: &[String],
    index: bool,
    fmt: Option<&str>,
    data: &PanelDataset,
    trimming: Trimming,
) -> Result<BreakPartition> {
    let t = data.n_periods();
    let expected = fmt.map(|f| match f.trim_start_matches('%') {
        "tw" => TimeFormat::Weekly,
        "tq" => TimeFormat::Quarterly,
        _ => TimeFormat::Monthly,
    });
    let mut breaks = Vec::with_capacity(values.len());
    for v in values {
        let v = v.trim();
        let pos = if index {
            v.parse::<usize>()
                .map_err(|_| anyhow!("breakpoint `{v}` is not a position"))?
        } else {
            let (f, ord) = parse_time(v)?;
            if let Some(e) = expected {
                if e != f {
                    bail!("breakpoint `{v}` does not match --fmt");
                }
            }
            let at = data
                .time_index()
                .iter()
                .position(|&x| x == ord)
                .ok_or_else(|| {
                    anyhow!("breakpoint `{v}` is not a period of the sample (use --index for positions)")
                })?;
            at + 1
        };
        breaks.push(pos);
    }
    let p = BreakPartition::new(breaks, t)?;
    p.check_feasible(t, trimming.min_length(t))
        .with_context(|| format!("breakpoints {p} violate the minimum regime length"))?;
    Ok(p)
}

fn test(cfg: &RunConfig, d: &PanelDataset, spec: &ModelSpec, warnings: &mut Vec<String>) -> Result<Body> {
    let level = cfg.level_fraction();
    if !cfg.breakpoints.is_empty() {
        let p = parse_breakpoints(&cfg.breakpoints, cfg.index, cfg.fmt.as_deref(), d, spec.trimming)?;
        let o = chow_f(d, spec, &p)?;
        collect(warnings, &o.warnings);
        return Ok(Body::Test(TestReport::from_outcome(
            &o,
            d,
            "F(known breaks)",
            "no breaks".into(),
            format!("{} known breaks", p.len()),
        )));
    }
    let max = spec.trimming.max_breaks();
    let (o, name, null, alt) = match cfg.hypothesis {
        Some(1) => {
            let s = cfg.breaks[0];
            (sup_f(d, spec, s)?, format!("supF({s})"), "no breaks".to_string(), format!("{s} breaks"))
        }
        Some(2) => {
            let (lo, hi) = match cfg.breaks[..] {
                [lo, hi] => (lo, hi),
                [hi] => (1, hi),
                _ => (1, max),
            };
            let o = double_max(d, spec, lo, hi, cfg.wdmax, level)?;
            let name = if cfg.wdmax { "WDmax" } else { "UDmax" };
            (o, name.to_string(), "no breaks".into(), format!("{lo} to {hi} breaks"))
        }
        Some(3) if !cfg.sequential => {
            let s = cfg.breaks[0];
            (
                f_next(d, spec, s - 1)?,
                format!("F({s}|{})", s - 1),
                format!("{} breaks", s - 1),
                format!("{s} breaks"),
            )
        }
        _ => {
            let s_max = cfg.breaks.first().copied().unwrap_or(max);
            let seq = sequential_count(d, spec, s_max, level)?;
            collect(warnings, &seq.warnings);
            for st in &seq.steps {
                collect(warnings, &st.warnings);
            }
            return Ok(Body::Sequential(SequentialReport::from_count(&seq, d)));
        }
    };
    collect(warnings, &o.warnings);
    Ok(Body::Test(TestReport::from_outcome(&o, d, &name, null, alt)))
}

fn estimate(cfg: &RunConfig, d: &PanelDataset, spec: &ModelSpec, s: usize) -> Result<EstimateReport> {
    let e = estimate_breaks(d, spec, s)?;
    let moments = if cfg.ci_regime_specific {
        CiMoments::RegimeSpecific
    } else {
        CiMoments::Pooled
    };
    let ci = if e.partition.is_empty() {
        Vec::new()
    } else {
        break_ci_with(d, spec, &e.partition, cfg.level_fraction(), moments)?
    };
    Ok(EstimateReport::new(&e, &ci, d))
}

fn state_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.state.clone().or_else(|| {
        cfg.input.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".breaks.json");
            PathBuf::from(s)
        })
    })
}

fn write_state(cfg: &RunConfig, d: &PanelDataset, e: &EstimateReport) -> Result<()> {
    let Some(path) = state_path(cfg) else {
        return Ok(());
    };
    let state = State {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        periods: d.n_periods(),
        breaks: e.breaks.iter().map(|b| b.index).collect(),
        break_labels: e.breaks.iter().map(|b| b.label.clone()).collect(),
    };
    fs::write(&path, serde_json::to_string_pretty(&state)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn read_state(path: &Path) -> Result<State> {
    let text = fs::read_to_string(path).with_context(|| {
        format!(
            "no estimate at {} (run `estimate` or `auto` first, or give --breakpoints)",
            path.display()
        )
    })?;
    let state: State = serde_json::from_str(&text)
        .with_context(|| format!("{} is not an estimate state file", path.display()))?;
    Ok(state)
}

fn default_out(input: &Path, suffix: &str) -> PathBuf {
    let mut s = input.to_path_buf().into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn postestimation(cfg: &RunConfig, verb: Verb) -> Result<(PanelDataset, Body)> {
    let state = if cfg.breakpoints.is_empty() {
        let path = state_path(cfg).ok_or_else(|| anyhow!("no state file"))?;
        Some(read_state(&path)?)
    } else {
        None
    };
    let base = state.as_ref().map_or(cfg, |s| &s.config);
    let input = cfg
        .input
        .clone()
        .or_else(|| base.input.clone())
        .ok_or_else(|| anyhow!("--input is required"))?;
    let mut roles = base.roles();
    for v in &cfg.variables {
        if !roles.variables.contains(v) {
            roles.variables.push(v.clone());
        }
    }
    let d = load_csv(&input, &roles)?;
    let t = d.n_periods();
    let partition = match &state {
        Some(s) => {
            if s.periods != t {
                bail!(
                    "the estimate covers {} periods but the data now has {t}",
                    s.periods
                );
            }
            BreakPartition::new(s.breaks.clone(), t)?
        }
        None => parse_breakpoints(&cfg.breakpoints, cfg.index, cfg.fmt.as_deref(), &d, cfg.trimming()?)?,
    };
    let regime: Vec<usize> = (1..=t).map(|p| partition.regime_of(p)).collect();
    let breaks = partition.breaks().to_vec();
    let n_reg = partition.n_regimes();

    let mut header: Vec<String> = base.unit.iter().cloned().collect();
    header.push(base.time.clone());
    let key = |i: usize, p: usize| {
        let mut r = Vec::new();
        if base.unit.is_some() {
            r.push(d.unit_ids()[i].clone());
        }
        r.push(d.label(p + 1));
        r
    };

    let body = match verb {
        Verb::Indicator => {
            let file = out_path(cfg, &input, ".regimes.csv");
            header.push("regime".into());
            let mut counts = vec![0; n_reg];
            let mut rows = Vec::new();
            for i in 0..d.n_units() {
                for p in 0..t {
                    let mut r = key(i, p);
                    r.push(regime[p].to_string());
                    counts[regime[p] - 1] += 1;
                    rows.push(r);
                }
            }
            write_csv(&file, &header, &rows)?;
            Body::Indicator {
                file: file.display().to_string(),
                breaks,
                counts,
            }
        }
        Verb::Split => {
            let file = out_path(cfg, &input, ".split.csv");
            let mut columns = Vec::new();
            for v in &cfg.variables {
                for r in 1..=n_reg {
                    columns.push(format!("{}_{r}", sanitize(v)));
                }
            }
            header.extend(columns.iter().cloned());
            let mut rows = Vec::new();
            for i in 0..d.n_units() {
                for p in 0..t {
                    let mut r = key(i, p);
                    for v in &cfg.variables {
                        let x = d.unit_series(v, i)?[p];
                        for j in 1..=n_reg {
                            r.push(if regime[p] == j { x } else { 0.0 }.to_string());
                        }
                    }
                    rows.push(r);
                }
            }
            write_csv(&file, &header, &rows)?;
            Body::Split {
                file: file.display().to_string(),
                breaks,
                columns,
            }
        }
        _ => {
            let (y, x) = match &cfg.variables[..] {
                [y, x] => (y.clone(), x.clone()),
                [x] => (
                    base.depvar()
                        .ok_or_else(|| anyhow!("no dependent variable; give `y x`"))?
                        .to_string(),
                    x.clone(),
                ),
                _ => unreachable!("validated"),
            };
            let dir = out_path(cfg, &input, ".scatter");
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            header.extend([x.clone(), y.clone()]);
            let mut rows: Vec<Vec<Vec<String>>> = vec![Vec::new(); n_reg];
            let mut pts: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_reg];
            for i in 0..d.n_units() {
                let xs = d.unit_series(&x, i)?;
                let ys = d.unit_series(&y, i)?;
                for p in 0..t {
                    let mut r = key(i, p);
                    r.extend([xs[p].to_string(), ys[p].to_string()]);
                    rows[regime[p] - 1].push(r);
                    pts[regime[p] - 1].push((xs[p], ys[p]));
                }
            }
            let mut files = Vec::new();
            for (j, r) in rows.iter().enumerate() {
                let f = dir.join(format!("regime{}.csv", j + 1));
                write_csv(&f, &header, r)?;
                files.push(f.display().to_string());
            }
            let lines = pts
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let (a, b) = simple_ols(v);
                    ScatterLine {
                        regime: k + 1,
                        n: v.len(),
                        intercept: a,
                        slope: b,
                    }
                })
                .collect();
            Body::Scatter {
                files,
                breaks,
                x,
                y,
                lines,
            }
        }
    };
    Ok((d, body))
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn out_path(cfg: &RunConfig, input: &Path, suffix: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| default_out(input, suffix))
}

/// `L.cases` becomes `L_cases`, so split columns are plain identifiers.
fn sanitize(v: &str) -> String {
    v.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

/// Intercept and slope of a least-squares line; the slope is NaN when x
/// does not vary.
fn simple_ols(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn simulate(cfg: &RunConfig) -> Result<Body> {
    let trim = cfg.trimming()?;
    if cfg.table {
        let qs: Vec<usize> = (1..=cfg.q).collect();
        let text = tabulate(&qs, cfg.reps, cfg.grid, cfg.seed)?;
        let parsed = CriticalValueTable::parse(&text)?;
        let file = cfg
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("critical_values.csv"));
        fs::write(&file, &text).with_context(|| format!("writing {}", file.display()))?;
        return Ok(Body::Table {
            file: file.display().to_string(),
            entries: parsed.len(),
            checksum: parsed.checksum().into(),
        });
    }
    let kind: CriticalKind = cfg.kind.parse()?;
    let max = trim.max_breaks();
    let (lo, hi) = match (kind, &cfg.breaks[..]) {
        (_, [lo, hi]) => (*lo, *hi),
        (CriticalKind::SupF, [s]) => (*s, *s),
        (CriticalKind::FNext, [s]) => (s - 1, s - 1),
        (_, [s]) => (1, *s),
        (CriticalKind::SupF, _) => (1, 1),
        (CriticalKind::FNext, _) => (0, 0),
        _ => (1, max),
    };
    let sim = simulate_critical_values(kind, cfg.q, lo, hi, trim, cfg.reps, cfg.grid, cfg.seed)?;
    Ok(Body::Critical(SimulatedEntry {
        statistic: kind.as_str().into(),
        q: cfg.q,
        s_lo: lo,
        s_hi: hi,
        trimming: trim.fraction(),
        reps: cfg.reps,
        grid: cfg.grid,
        values: sim.values,
        std_errors: sim.std_errors,
        table: CriticalValueTable::embedded()
            .criticals(kind, cfg.q, lo, hi, trim)
            .ok(),
    }))
}

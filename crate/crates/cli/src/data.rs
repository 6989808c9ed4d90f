//! CSV ingestion: time labels, balance checks, lag operators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use strucbreak::PanelDataset;

/// Which columns identify units and periods, and which series to load.
#[derive(Debug, Clone, Default)]
pub struct Roles {
    /// Column holding the time identifier.
    pub time: String,
    /// Column holding the unit identifier; absent for a single time series.
    pub unit: Option<String>,
    /// Series to load. `L.x` and `L<k>.x` are `x` lagged by one or `k`
    /// periods within each unit.
    pub variables: Vec<String>,
    /// Keep only periods from this label on (after lags are formed).
    pub from: Option<String>,
    pub to: Option<String>,
}

/// Recognized time identifiers. Weekly labels follow the 52-weeks-a-year
/// convention, so `2020w52` is followed by `2021w1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFormat {
    Integer,
    Weekly,
    Quarterly,
    Monthly,
}

impl TimeFormat {
    fn name(self) -> &'static str {
        match self {
            TimeFormat::Integer => "integer",
            TimeFormat::Weekly => "weekly (YYYYwN)",
            TimeFormat::Quarterly => "quarterly (YYYYqN)",
            TimeFormat::Monthly => "monthly (YYYYmN)",
        }
    }
}

/// Parses a time identifier into its format and an ordinal on a gap-free
/// grid.
pub fn parse_time(s: &str) -> Result<(TimeFormat, i64)> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok((TimeFormat::Integer, v));
    }
    let lower = s.to_ascii_lowercase();
    for (sep, fmt, per_year) in [
        ('w', TimeFormat::Weekly, 52),
        ('q', TimeFormat::Quarterly, 4),
        ('m', TimeFormat::Monthly, 12),
    ] {
        if let Some((y, p)) = lower.split_once(sep) {
            let (Ok(year), Ok(period)) = (y.parse::<i64>(), p.parse::<i64>()) else {
                continue;
            };
            if !(1..=per_year).contains(&period) {
                bail!(
                    "time label `{s}`: period {period} outside 1..={per_year} for {} data",
                    fmt.name()
                );
            }
            return Ok((fmt, year * per_year + period - 1));
        }
    }
    bail!("unrecognized time label `{s}`; expected an integer or YYYYwN, YYYYqN, YYYYmN")
}

/// `L.x` -> (1, "x"), `L3.x` -> (3, "x"), `x` -> (0, "x").
pub fn parse_lag(name: &str) -> Result<(usize, &str)> {
    let Some((op, base)) = name.split_once('.') else {
        return Ok((0, name));
    };
    let mut chars = op.chars();
    match chars.next() {
        Some('L') | Some('l') => {
            let rest = chars.as_str();
            let k = if rest.is_empty() {
                1
            } else {
                rest.parse::<usize>()
                    .map_err(|_| anyhow!("bad lag operator in `{name}`"))?
            };
            if base.is_empty() {
                bail!("lag operator without a variable in `{name}`");
            }
            Ok((k, base))
        }
        _ => bail!("unsupported time-series operator in `{name}`; only L. and Lk. are available"),
    }
}

struct Cell {
    line: u64,
    values: Vec<f64>,
}

/// Reads a CSV file with a header row into a balanced panel.
pub fn load_csv(path: &Path, roles: &Roles) -> Result<PanelDataset> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_reader(file, roles).with_context(|| format!("reading {}", path.display()))
}

pub fn load_reader<R: std::io::Read>(reader: R, roles: &Roles) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("column `{name}` not found in header"))
    };
    let time_col = find(&roles.time)?;
    let unit_col = roles.unit.as_deref().map(find).transpose()?;

    let mut requested: Vec<(String, usize, String)> = Vec::new();
    let mut bases: Vec<String> = Vec::new();
    for v in &roles.variables {
        if requested.iter().any(|r| &r.0 == v) {
            continue;
        }
        let (k, base) = parse_lag(v)?;
        if !bases.iter().any(|b| b == base) {
            bases.push(base.to_string());
        }
        requested.push((v.clone(), k, base.to_string()));
    }
    let base_cols: Vec<usize> = bases.iter().map(|b| find(b)).collect::<Result<_>>()?;

    let mut format: Option<TimeFormat> = None;
    let mut labels: BTreeMap<i64, String> = BTreeMap::new();
    let mut cells: BTreeMap<String, BTreeMap<i64, Cell>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw_time = rec.get(time_col).unwrap_or("");
        let (f, ord) = parse_time(raw_time).with_context(|| format!("line {line}"))?;
        match format {
            None => format = Some(f),
            Some(g) if g != f => bail!(
                "line {line}: time label `{raw_time}` is {}, earlier rows are {}",
                f.name(),
                g.name()
            ),
            _ => {}
        }
        labels.entry(ord).or_insert_with(|| raw_time.to_string());
        let unit = match unit_col {
            Some(c) => rec.get(c).unwrap_or("").to_string(),
            None => String::new(),
        };
        if unit_col.is_some() && unit.is_empty() {
            bail!("line {line}: empty unit identifier");
        }
        let mut values = Vec::with_capacity(base_cols.len());
        for (b, &c) in bases.iter().zip(&base_cols) {
            let s = rec.get(c).unwrap_or("");
            let v: f64 = s
                .parse()
                .map_err(|_| anyhow!("line {line}: column `{b}` has non-numeric value `{s}`"))?;
            if !v.is_finite() {
                bail!("line {line}: column `{b}` is not finite");
            }
            values.push(v);
        }
        let per_unit = cells.entry(unit.clone()).or_default();
        if let Some(prev) = per_unit.get(&ord) {
            bail!(
                "duplicate observation for unit `{unit}` at time {raw_time} (lines {} and {line})",
                prev.line
            );
        }
        per_unit.insert(ord, Cell { line, values });
    }
    if cells.is_empty() {
        bail!("no data rows");
    }

    let ords: Vec<i64> = labels.keys().copied().collect();
    for w in ords.windows(2) {
        if w[1] != w[0] + 1 {
            bail!(
                "gap in the time grid between {} and {}",
                labels[&w[0]],
                labels[&w[1]]
            );
        }
    }
    for (unit, per_unit) in &cells {
        if per_unit.len() != ords.len() {
            let have: BTreeSet<i64> = per_unit.keys().copied().collect();
            let missing = ords.iter().find(|o| !have.contains(o)).unwrap();
            bail!(
                "unbalanced panel: unit `{unit}` has no observation at time {}",
                labels[missing]
            );
        }
    }

    let mut units: Vec<String> = cells.keys().cloned().collect();
    if units.iter().all(|u| u.parse::<f64>().is_ok()) {
        units.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let max_lag = requested.iter().map(|r| r.1).max().unwrap_or(0);
    let t_full = ords.len();
    if max_lag >= t_full {
        bail!("lag of {max_lag} periods leaves no observations (T = {t_full})");
    }
    let base_idx: HashMap<&str, usize> =
        bases.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();

    // positions kept: lags consume the first max_lag periods
    let mut keep: Vec<usize> = (max_lag..t_full).collect();
    let pos_of = |label: &str| -> Result<usize> {
        let (_, ord) = parse_time(label)?;
        ords.iter()
            .position(|&o| o == ord)
            .ok_or_else(|| anyhow!("time {label} is outside the data"))
    };
    if let Some(f) = &roles.from {
        let p = pos_of(f)?;
        keep.retain(|&k| k >= p);
    }
    if let Some(t) = &roles.to {
        let p = pos_of(t)?;
        keep.retain(|&k| k <= p);
    }
    if keep.is_empty() {
        bail!("no periods left after lags and sample restrictions");
    }

    let mut columns: Vec<(String, Vec<f64>)> = Vec::with_capacity(requested.len());
    for (name, k, base) in &requested {
        let bi = base_idx[base.as_str()];
        let mut col = Vec::with_capacity(units.len() * keep.len());
        for u in &units {
            let series: Vec<f64> = cells[u].values().map(|c| c.values[bi]).collect();
            col.extend(keep.iter().map(|&p| series[p - k]));
        }
        columns.push((name.clone(), col));
    }
    let time_index: Vec<i64> = keep.iter().map(|&p| ords[p]).collect();
    let time_labels: Vec<String> = time_index.iter().map(|o| labels[o].clone()).collect();
    let unit_ids = if roles.unit.is_some() {
        units
    } else {
        vec!["1".to_string()]
    };
    Ok(PanelDataset::new(unit_ids, time_index, Some(time_labels), columns)?)
}

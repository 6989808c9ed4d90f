//! Critical-value tables.
//!
//! The shipped table is a plain CSV file (`data/critical_values.csv`) with
//! comment lines starting with `#` and the columns
//!
//! ```text
//! kind,q,s_lo,s_hi,trim,alpha,value
//! ```
//!
//! `kind` is one of `supF`, `Dmax`, `WDmax` or `Fnext`. For `supF` the range
//! is a single break count; for `Fnext` it is the number of breaks under the
//! null (the entry tests `s` against `s + 1`); for the double maximum kinds
//! it is the range of break counts maximized over.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::simulate::simulate_sup_f;
use crate::error::{Error, Result};
use crate::partition::Trimming;

const EMBEDDED: &str = include_str!("../../data/critical_values.csv");

pub const TABLE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CriticalKind {
    #[serde(rename = "supF")]
    SupF,
    #[serde(rename = "Dmax")]
    Dmax,
    #[serde(rename = "WDmax")]
    WDmax,
    #[serde(rename = "Fnext")]
    FNext,
}

impl CriticalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticalKind::SupF => "supF",
            CriticalKind::Dmax => "Dmax",
            CriticalKind::WDmax => "WDmax",
            CriticalKind::FNext => "Fnext",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "supF" => Some(CriticalKind::SupF),
            "Dmax" => Some(CriticalKind::Dmax),
            "WDmax" => Some(CriticalKind::WDmax),
            "Fnext" => Some(CriticalKind::FNext),
            _ => None,
        }
    }
}

impl std::str::FromStr for CriticalKind {
    type Err = Error;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        [
            CriticalKind::SupF,
            CriticalKind::Dmax,
            CriticalKind::WDmax,
            CriticalKind::FNext,
        ]
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown statistic `{s}`; expected supF, Dmax, WDmax or Fnext"
            ))
        })
    }
}

impl fmt::Display for CriticalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reporting level: 90%, 95% or 99% confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "90")]
    L90,
    #[serde(rename = "95")]
    L95,
    #[serde(rename = "99")]
    L99,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::L90, Level::L95, Level::L99];

    pub fn confidence(self) -> f64 {
        match self {
            Level::L90 => 0.90,
            Level::L95 => 0.95,
            Level::L99 => 0.99,
        }
    }

    pub fn alpha_percent(self) -> u8 {
        match self {
            Level::L90 => 10,
            Level::L95 => 5,
            Level::L99 => 1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Level::L90 => 0,
            Level::L95 => 1,
            Level::L99 => 2,
        }
    }

    /// Exact match for a confidence level given as a fraction (`0.95`) or in
    /// percent (`95`).
    pub fn exact(level: f64) -> Option<Level> {
        let c = if level > 1.0 { level / 100.0 } else { level };
        Level::ALL
            .into_iter()
            .find(|l| (l.confidence() - c).abs() < 1e-9)
    }

    /// Closest tabulated level, with a warning when it differs from the
    /// requested one.
    pub fn nearest(level: f64) -> (Level, Option<String>) {
        if let Some(l) = Level::exact(level) {
            return (l, None);
        }
        let c = if level > 1.0 { level / 100.0 } else { level };
        let best = Level::ALL
            .into_iter()
            .min_by(|a, b| {
                (a.confidence() - c)
                    .abs()
                    .total_cmp(&(b.confidence() - c).abs())
            })
            .unwrap();
        (
            best,
            Some(format!(
                "no critical values for level {level}; using closest level {}%",
                (best.confidence() * 100.0).round()
            )),
        )
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", 100 - self.alpha_percent())
    }
}

/// Critical values at the three reporting levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    pub c90: f64,
    pub c95: f64,
    pub c99: f64,
}

impl CriticalValues {
    pub fn at(&self, level: Level) -> f64 {
        match level {
            Level::L90 => self.c90,
            Level::L95 => self.c95,
            Level::L99 => self.c99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    kind: CriticalKind,
    q: usize,
    s_lo: usize,
    s_hi: usize,
    trim: u8,
    alpha: u8,
}

#[derive(Debug, Clone)]
pub struct CriticalValueTable {
    entries: HashMap<Key, f64>,
    checksum: String,
    format: u32,
}

impl CriticalValueTable {
    /// The table shipped with the crate.
    pub fn embedded() -> &'static CriticalValueTable {
        static TABLE: OnceLock<CriticalValueTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            CriticalValueTable::parse(EMBEDDED).expect("embedded critical value table is valid")
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut format = None;
        let mut header_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("format:") {
                    format = Some(v.trim().parse::<u32>().map_err(|_| {
                        Error::CriticalValues(format!("line {}: bad format version", lineno + 1))
                    })?);
                }
                continue;
            }
            if !header_seen {
                if line != "kind,q,s_lo,s_hi,trim,alpha,value" {
                    return Err(Error::CriticalValues(format!(
                        "line {}: unexpected header `{line}`",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let bad = |what: &str| {
                Error::CriticalValues(format!("line {}: {what} in `{line}`", lineno + 1))
            };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let kind = CriticalKind::parse(f[0]).ok_or_else(|| bad("unknown kind"))?;
            let q = f[1].parse().map_err(|_| bad("bad q"))?;
            let s_lo = f[2].parse().map_err(|_| bad("bad s_lo"))?;
            let s_hi = f[3].parse().map_err(|_| bad("bad s_hi"))?;
            let trim: f64 = f[4].parse().map_err(|_| bad("bad trim"))?;
            let trim = Trimming::new(trim).map_err(|_| bad("unsupported trim"))?;
            let alpha: f64 = f[5].parse().map_err(|_| bad("bad alpha"))?;
            let alpha = Level::ALL
                .into_iter()
                .find(|l| (f64::from(l.alpha_percent()) / 100.0 - alpha).abs() < 1e-9)
                .ok_or_else(|| bad("alpha must be 0.10, 0.05 or 0.01"))?
                .alpha_percent();
            let value: f64 = f[6].parse().map_err(|_| bad("bad value"))?;
            if !value.is_finite() {
                return Err(bad("non-finite value"));
            }
            let key = Key {
                kind,
                q,
                s_lo,
                s_hi,
                trim: trim.percent(),
                alpha,
            };
            if entries.insert(key, value).is_some() {
                return Err(bad("duplicate entry"));
            }
        }
        let format = format.ok_or_else(|| Error::CriticalValues("missing `# format:` line".into()))?;
        if format != TABLE_FORMAT {
            return Err(Error::CriticalValues(format!(
                "unsupported table format {format}"
            )));
        }
        let checksum = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self {
            entries,
            checksum,
            format,
        })
    }

    /// SHA-256 of the table text.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn format(&self) -> u32 {
        self.format
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(
        &self,
        kind: CriticalKind,
        q: usize,
        s_lo: usize,
        s_hi: usize,
        trim: Trimming,
        level: Level,
    ) -> Result<f64> {
        let key = Key {
            kind,
            q,
            s_lo,
            s_hi,
            trim: trim.percent(),
            alpha: level.alpha_percent(),
        };
        self.entries.get(&key).copied().ok_or_else(|| {
            Error::CriticalValues(format!(
                "no {kind} entry for q = {q}, breaks {s_lo}..{s_hi}, trimming {trim}, level {level}"
            ))
        })
    }

    pub fn criticals(
        &self,
        kind: CriticalKind,
        q: usize,
        s_lo: usize,
        s_hi: usize,
        trim: Trimming,
    ) -> Result<CriticalValues> {
        Ok(CriticalValues {
            c90: self.lookup(kind, q, s_lo, s_hi, trim, Level::L90)?,
            c95: self.lookup(kind, q, s_lo, s_hi, trim, Level::L95)?,
            c99: self.lookup(kind, q, s_lo, s_hi, trim, Level::L99)?,
        })
    }

    /// All `(kind, q, s_lo, s_hi, trim)` keys present, sorted.
    pub fn keys(&self) -> Vec<(CriticalKind, usize, usize, usize, Trimming)> {
        let mut keys: Vec<_> = self
            .entries
            .keys()
            .map(|k| {
                (
                    k.kind,
                    k.q,
                    k.s_lo,
                    k.s_hi,
                    Trimming::from_percent(k.trim).expect("validated on parse"),
                )
            })
            .collect();
        keys.sort();
        keys.dedup();
        keys
    }
}

/// Produces a complete table by simulation, in the on-disk format.
///
/// Every `q` in `qs` and every supported trimming is covered: `supF(s)` for
/// all admissible `s`, `Fnext` for every null count `s` with `s + 1`
/// admissible, and both double maximum kinds for every range `lo..=hi`.
pub fn tabulate(qs: &[usize], reps: usize, grid: usize, seed: u64) -> Result<String> {
    let trims = Trimming::SUPPORTED;
    let mut out = String::new();
    writeln!(out, "# strucbreak critical values").unwrap();
    writeln!(out, "# format: {TABLE_FORMAT}").unwrap();
    writeln!(
        out,
        "# simulated limiting distributions: grid {grid}, {reps} replications, seed {seed}"
    )
    .unwrap();
    writeln!(out, "kind,q,s_lo,s_hi,trim,alpha,value").unwrap();
    for &q in qs {
        let draws = simulate_sup_f(q, &trims, reps, grid, seed.wrapping_add(q as u64))?;
        for trim in trims {
            let kmax = draws.max_k(trim);
            let mut rows: Vec<(CriticalKind, usize, usize)> = Vec::new();
            rows.extend((1..=kmax).map(|s| (CriticalKind::SupF, s, s)));
            rows.extend((0..kmax).map(|s| (CriticalKind::FNext, s, s)));
            for kind in [CriticalKind::Dmax, CriticalKind::WDmax] {
                for lo in 1..=kmax {
                    for hi in lo..=kmax {
                        rows.push((kind, lo, hi));
                    }
                }
            }
            for (kind, lo, hi) in rows {
                let sim = draws.critical(kind, lo, hi, trim)?;
                for level in Level::ALL {
                    writeln!(
                        out,
                        "{},{},{},{},{:.2},{:.2},{:.4}",
                        kind,
                        q,
                        lo,
                        hi,
                        trim.fraction(),
                        f64::from(level.alpha_percent()) / 100.0,
                        sim.values[level.index()]
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(out)
}

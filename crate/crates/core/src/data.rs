//! Grouped panel observations and the completeness ↔ logit transforms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower/upper margin used by the default clamp policy.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-4;

/// Upper bound accepted for the under-five registration ratio.
pub const C5Q0_MAX: f64 = 1.5;

/// `ln(c / (1 - c))`.
pub fn logit(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("logit needs 0 < c < 1, got {c}")));
    }
    Ok((c / (1.0 - c)).ln())
}

/// `e^θ / (1 + e^θ)`, evaluated on the branch that cannot overflow.
pub fn inv_logit(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Both,
    Female,
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Both => "both",
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "both" => Ok(Sex::Both),
            "female" => Ok(Sex::Female),
            "male" => Ok(Sex::Male),
            other => Err(format!("unknown sex '{other}' (expected both, female or male)")),
        }
    }
}

/// One unit-year-sex record.
///
/// `completeness` is `None` only for covariate-only files read for
/// prediction; panels loaded for fitting always carry it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub unit_id: String,
    pub period: i32,
    pub sex: Sex,
    pub completeness: Option<f64>,
    /// Registered deaths per 1000 population.
    pub reg_cdr: f64,
    /// Fraction of the population aged 65+.
    pub pct65: f64,
    /// True under-five mortality, probability scale.
    pub u5mr_true: f64,
    /// Registered over true under-five mortality.
    pub c5q0: Option<f64>,
}

impl Observation {
    pub fn key(&self) -> (&str, i32, Sex) {
        (&self.unit_id, self.period, self.sex)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub unit_id: String,
    pub observations: Vec<Observation>,
}

/// Observations grouped by unit, units in lexicographic order and rows
/// within a unit ordered by `(period, sex)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    groups: Vec<Group>,
}

impl PanelDataset {
    /// Groups, sorts and checks key uniqueness.
    pub fn from_observations(mut obs: Vec<Observation>) -> Result<Self> {
        obs.sort_by(|a, b| a.key().cmp(&b.key()));
        for w in obs.windows(2) {
            if w[0].key() == w[1].key() {
                return Err(Error::DuplicateKey {
                    unit_id: w[1].unit_id.clone(),
                    period: w[1].period,
                    sex: w[1].sex.to_string(),
                });
            }
        }
        let mut groups: Vec<Group> = Vec::new();
        for o in obs {
            match groups.last_mut() {
                Some(g) if g.unit_id == o.unit_id => g.observations.push(o),
                _ => groups.push(Group {
                    unit_id: o.unit_id.clone(),
                    observations: vec![o],
                }),
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Number of groups.
    pub fn m(&self) -> usize {
        self.groups.len()
    }

    /// Per-group observation counts.
    pub fn n_i(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.observations.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.observations.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.groups.iter().flat_map(|g| g.observations.iter())
    }

    /// Subset holding one sex stream.
    pub fn filter_sex(&self, sex: Sex) -> PanelDataset {
        let groups = self
            .groups
            .iter()
            .filter_map(|g| {
                let observations: Vec<_> = g.observations.iter().filter(|o| o.sex == sex).cloned().collect();
                (!observations.is_empty()).then(|| Group {
                    unit_id: g.unit_id.clone(),
                    observations,
                })
            })
            .collect();
        PanelDataset { groups }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "eps", rename_all = "lowercase")]
pub enum ClampPolicy {
    Reject,
    Clamp(f64),
}

impl Default for ClampPolicy {
    fn default() -> Self {
        ClampPolicy::Clamp(DEFAULT_CLAMP_EPS)
    }
}

impl FromStr for ClampPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s == "reject" {
            return Ok(ClampPolicy::Reject);
        }
        if s == "clamp" {
            return Ok(ClampPolicy::default());
        }
        let eps = s
            .strip_prefix("clamp:")
            .or_else(|| s.strip_prefix("clamp(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| format!("unknown clamp policy '{s}' (reject, clamp or clamp:<eps>)"))?;
        let eps: f64 = eps.parse().map_err(|e| format!("bad clamp epsilon: {e}"))?;
        if !(eps > 0.0 && eps < 0.5) {
            return Err(format!("clamp epsilon must lie in (0, 0.5), got {eps}"));
        }
        Ok(ClampPolicy::Clamp(eps))
    }
}

/// Reads a panel for fitting: every row must carry a completeness value.
pub fn load_panel(path: impl AsRef<Path>, policy: ClampPolicy) -> Result<PanelDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel(file, policy, true)
}

/// Reads a covariate file for prediction; completeness may be empty.
pub fn load_covariates(path: impl AsRef<Path>, policy: ClampPolicy) -> Result<PanelDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel(file, policy, false)
}

struct Columns {
    unit_id: usize,
    year: usize,
    sex: usize,
    completeness: usize,
    percent: bool,
    reg_cdr: usize,
    pct65: usize,
    u5mr: usize,
    c5q0: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Parse {
                row: 1,
                msg: format!("header is missing column '{name}'"),
            })
        };
        let (completeness, percent) = match (find("completeness"), find("completeness_pct")) {
            (Some(c), None) => (c, false),
            (None, Some(c)) => (c, true),
            (Some(_), Some(_)) => {
                return Err(Error::Parse {
                    row: 1,
                    msg: "header declares both completeness and completeness_pct".into(),
                })
            }
            (None, None) => {
                return Err(Error::Parse {
                    row: 1,
                    msg: "header is missing column 'completeness'".into(),
                })
            }
        };
        Ok(Columns {
            unit_id: need("unit_id")?,
            year: need("year")?,
            sex: need("sex")?,
            completeness,
            percent,
            reg_cdr: need("reg_cdr")?,
            pct65: need("pct65")?,
            u5mr: need("u5mr")?,
            c5q0: find("c5q0"),
        })
    }
}

/// Parses and validates a panel from any reader. Row numbers in errors are
/// 1-based file lines, the header being line 1.
pub fn read_panel<R: Read>(reader: R, policy: ClampPolicy, require_response: bool) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns::from_header(rdr.headers()?)?;
    let mut obs = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        obs.push(parse_row(&rec, row, &cols, policy, require_response)?);
    }
    PanelDataset::from_observations(obs)
}

fn field<'r>(rec: &'r csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<&'r str> {
    rec.get(idx).ok_or_else(|| Error::Parse {
        row,
        msg: format!("missing field '{name}'"),
    })
}

fn number(rec: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64> {
    let raw = field(rec, idx, row, name)?;
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("'{name}' is not a number: '{raw}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::at_row(row, format!("'{name}' must be finite")));
    }
    Ok(v)
}

fn parse_row(
    rec: &csv::StringRecord,
    row: usize,
    cols: &Columns,
    policy: ClampPolicy,
    require_response: bool,
) -> Result<Observation> {
    let unit_id = field(rec, cols.unit_id, row, "unit_id")?.to_string();
    if unit_id.is_empty() {
        return Err(Error::at_row(row, "unit_id is empty"));
    }
    let year_raw = field(rec, cols.year, row, "year")?;
    let period: i32 = year_raw.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("'year' is not an integer: '{year_raw}'"),
    })?;
    let sex: Sex = field(rec, cols.sex, row, "sex")?
        .parse()
        .map_err(|msg| Error::Parse { row, msg })?;

    let completeness = if field(rec, cols.completeness, row, "completeness")?.is_empty() {
        if require_response {
            return Err(Error::at_row(row, "completeness is required for fitting"));
        }
        None
    } else {
        let mut c = number(rec, cols.completeness, row, "completeness")?;
        if cols.percent {
            c /= 100.0;
        }
        Some(apply_clamp(c, row, policy)?)
    };

    let reg_cdr = number(rec, cols.reg_cdr, row, "reg_cdr")?;
    if reg_cdr < 0.0 {
        return Err(Error::at_row(row, format!("reg_cdr must be >= 0, got {reg_cdr}")));
    }
    let pct65 = number(rec, cols.pct65, row, "pct65")?;
    if !(0.0..=1.0).contains(&pct65) {
        return Err(Error::at_row(row, format!("pct65 must lie in [0, 1], got {pct65}")));
    }
    let u5mr_true = number(rec, cols.u5mr, row, "u5mr")?;
    if u5mr_true <= 0.0 {
        return Err(Error::at_row(row, format!("u5mr must be > 0, got {u5mr_true}")));
    }
    let c5q0 = match cols.c5q0 {
        Some(idx) if !field(rec, idx, row, "c5q0")?.is_empty() => {
            let v = number(rec, idx, row, "c5q0")?;
            if !(v > 0.0 && v <= C5Q0_MAX) {
                return Err(Error::at_row(row, format!("c5q0 must lie in (0, {C5Q0_MAX}], got {v}")));
            }
            if v > 1.0 {
                warn!("row {row}: c5q0 = {v} exceeds 1 (noisy under-five registration?)");
            }
            Some(v)
        }
        _ => None,
    };
    Ok(Observation {
        unit_id,
        period,
        sex,
        completeness,
        reg_cdr,
        pct65,
        u5mr_true,
        c5q0,
    })
}

fn apply_clamp(c: f64, row: usize, policy: ClampPolicy) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::at_row(row, format!("completeness must lie in [0, 1], got {c}")));
    }
    match policy {
        ClampPolicy::Reject => {
            if c == 0.0 || c == 1.0 {
                Err(Error::at_row(
                    row,
                    format!("completeness {c} is on the boundary; logit is undefined (clamp policy = reject)"),
                ))
            } else {
                Ok(c)
            }
        }
        ClampPolicy::Clamp(eps) => {
            let clamped = c.clamp(eps, 1.0 - eps);
            if clamped != c {
                warn!("row {row}: completeness {c} clamped to {clamped}");
            }
            Ok(clamped)
        }
    }
}

/// Replaces each sexed row's c5q0 with the both-sexes value for the same
/// `(unit_id, year)`.
pub fn merge_c5q0(sexed: &PanelDataset, both_sexes: &PanelDataset) -> Result<PanelDataset> {
    let lookup: BTreeMap<(&str, i32), Option<f64>> = both_sexes
        .observations()
        .filter(|o| o.sex == Sex::Both)
        .map(|o| ((o.unit_id.as_str(), o.period), o.c5q0))
        .collect();
    let mut missing = BTreeSet::new();
    let mut merged = sexed.clone();
    for g in &mut merged.groups {
        for o in &mut g.observations {
            match lookup.get(&(o.unit_id.as_str(), o.period)) {
                Some(v) => o.c5q0 = *v,
                None => {
                    missing.insert((o.unit_id.clone(), o.period));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing.into_iter().collect()));
    }
    Ok(merged)
}

/// Writes a panel in the input CSV schema, fraction-scale completeness.
pub fn write_panel<W: std::io::Write>(panel: &PanelDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "unit_id",
        "year",
        "sex",
        "completeness",
        "reg_cdr",
        "pct65",
        "u5mr",
        "c5q0",
    ])?;
    for o in panel.observations() {
        w.write_record([
            o.unit_id.clone(),
            o.period.to_string(),
            o.sex.to_string(),
            o.completeness.map(|c| c.to_string()).unwrap_or_default(),
            o.reg_cdr.to_string(),
            o.pct65.to_string(),
            o.u5mr_true.to_string(),
            o.c5q0.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Design rows for the two covariate sets and the grouped matrices the
//! sampler consumes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{logit, Observation, PanelDataset, Sex};
use crate::error::{Error, Result};

/// Reciprocal condition number below which the pooled cross-product is
/// treated as singular.
pub const MIN_RCOND: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Includes the under-five registration ratio; p = 7.
    Model1,
    /// Drops it; p = 6.
    Model2,
}

impl ModelVariant {
    pub fn dim(self) -> usize {
        match self {
            ModelVariant::Model1 => 7,
            ModelVariant::Model2 => 6,
        }
    }

    pub fn column_names(self) -> &'static [&'static str] {
        match self {
            ModelVariant::Model1 => &[
                "intercept",
                "reg_cdr",
                "reg_cdr_sq",
                "pct65_sq",
                "ln_u5mr",
                "c5q0",
                "year",
            ],
            ModelVariant::Model2 => &["intercept", "reg_cdr", "reg_cdr_sq", "pct65_sq", "ln_u5mr", "year"],
        }
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "1" | "model1" | "Model1" => Ok(ModelVariant::Model1),
            "2" | "model2" | "Model2" => Ok(ModelVariant::Model2),
            other => Err(format!("unknown model '{other}' (expected 1 or 2)")),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelVariant::Model1 => f.write_str("1"),
            ModelVariant::Model2 => f.write_str("2"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: ModelVariant,
    pub sex: Sex,
    /// Subtracted from the calendar year before it enters the design.
    pub year_offset: f64,
}

impl ModelSpec {
    pub fn new(variant: ModelVariant, sex: Sex, year_offset: f64) -> Result<Self> {
        if !year_offset.is_finite() {
            return Err(Error::validation("year_offset must be finite"));
        }
        Ok(Self {
            variant,
            sex,
            year_offset,
        })
    }

    /// Offset set to the mean year of the rows in the chosen sex stream.
    pub fn centered_on(variant: ModelVariant, sex: Sex, panel: &PanelDataset) -> Result<Self> {
        let years: Vec<f64> = panel
            .observations()
            .filter(|o| o.sex == sex)
            .map(|o| o.period as f64)
            .collect();
        if years.is_empty() {
            return Err(Error::validation(format!("panel has no rows for sex '{sex}'")));
        }
        Self::new(variant, sex, years.iter().sum::<f64>() / years.len() as f64)
    }

    pub fn dim(&self) -> usize {
        self.variant.dim()
    }
}

/// Ordered covariate vector `(1, RegCDR, RegCDR², %65², ln 5q0, [C5q0], year − offset)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRow(pub Vec<f64>);

impl DesignRow {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, beta: &[f64]) -> f64 {
        self.0.iter().zip(beta).map(|(x, b)| x * b).sum()
    }
}

pub fn build_row(obs: &Observation, spec: &ModelSpec) -> Result<DesignRow> {
    let mut v = Vec::with_capacity(spec.dim());
    v.push(1.0);
    v.push(obs.reg_cdr);
    v.push(obs.reg_cdr * obs.reg_cdr);
    v.push(obs.pct65 * obs.pct65);
    v.push(obs.u5mr_true.ln());
    if spec.variant == ModelVariant::Model1 {
        let c5q0 = obs.c5q0.ok_or_else(|| Error::MissingC5q0 {
            unit_id: obs.unit_id.clone(),
            period: obs.period,
        })?;
        v.push(c5q0);
    }
    v.push(obs.period as f64 - spec.year_offset);
    Ok(DesignRow(v))
}

/// One group's rows and response, with the sufficient statistics the Gibbs
/// sweeps reuse every iteration.
#[derive(Clone, Debug)]
pub struct GroupData {
    pub unit_id: String,
    /// Row-major `n_i × p`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub y_bar: f64,
    /// Row-major `p × p`.
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
}

impl GroupData {
    pub fn new(unit_id: impl Into<String>, rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n.max(1),
                found: y.len(),
            });
        }
        let p = rows[0].len();
        let mut x = Vec::with_capacity(n * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: r.len(),
                });
            }
            x.extend_from_slice(r);
        }
        let mut x_bar = vec![0.0; p];
        let mut xtx = vec![0.0; p * p];
        let mut xty = vec![0.0; p];
        for (r, &yj) in rows.iter().zip(&y) {
            for a in 0..p {
                x_bar[a] += r[a];
                xty[a] += r[a] * yj;
                for b in 0..p {
                    xtx[a * p + b] += r[a] * r[b];
                }
            }
        }
        x_bar.iter_mut().for_each(|v| *v /= n as f64);
        let y_bar = y.iter().sum::<f64>() / n as f64;
        Ok(Self {
            unit_id: unit_id.into(),
            x,
            y,
            x_bar,
            y_bar,
            xtx,
            xty,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x_bar.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let p = self.p();
        &self.x[j * p..(j + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.p())
    }

    /// `Σ_j (y_ij − x_ijᵀβ − u)²`.
    pub fn rss(&self, beta: &[f64], u: f64) -> f64 {
        self.rows()
            .zip(&self.y)
            .map(|(r, y)| {
                let e = y - dot(r, beta) - u;
                e * e
            })
            .sum()
    }

    /// `ȳ_i − x̄_iᵀβ`.
    pub fn mean_residual(&self, beta: &[f64]) -> f64 {
        self.y_bar - dot(&self.x_bar, beta)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub struct GroupedDesign {
    p: usize,
    groups: Vec<GroupData>,
}

impl GroupedDesign {
    /// Assembles groups without the fitting preconditions; used for
    /// hand-built toy designs.
    pub fn from_groups(groups: Vec<GroupData>) -> Result<Self> {
        let p = groups
            .first()
            .map(GroupData::p)
            .ok_or_else(|| Error::validation("design has no groups"))?;
        if let Some(g) = groups.iter().find(|g| g.p() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: g.p(),
            });
        }
        Ok(Self { p, groups })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(GroupData::n).sum()
    }

    pub fn groups(&self) -> &[GroupData] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &GroupData {
        &self.groups[i]
    }

    pub fn unit_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.unit_id.clone()).collect()
    }

    /// Pooled `Σ x xᵀ`, row-major.
    pub fn pooled_xtx(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.p * self.p];
        for g in &self.groups {
            acc.iter_mut().zip(&g.xtx).for_each(|(a, v)| *a += v);
        }
        acc
    }

    /// `λ_min / λ_max` of the pooled cross-product.
    pub fn reciprocal_condition(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.p, self.p, &self.pooled_xtx());
        let eig = SymmetricEigen::new(m).eigenvalues;
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) {
            return 0.0;
        }
        (min / max).max(0.0)
    }

    /// Pooled ordinary least squares, `None` when the system is singular.
    pub fn ols(&self) -> Option<Vec<f64>> {
        let xtx = DMatrix::from_row_slice(self.p, self.p, &self.pooled_xtx());
        let mut xty = nalgebra::DVector::zeros(self.p);
        for g in &self.groups {
            for a in 0..self.p {
                xty[a] += g.xty[a];
            }
        }
        let beta = xtx.cholesky()?.solve(&xty);
        beta.iter()
            .all(|b| b.is_finite())
            .then(|| beta.iter().copied().collect())
    }
}

/// Builds the per-group design for one sex stream. Requires more than `p`
/// rows in every group and a well-conditioned pooled cross-product.
pub fn build_matrices(panel: &PanelDataset, spec: &ModelSpec) -> Result<GroupedDesign> {
    let stream = panel.filter_sex(spec.sex);
    if stream.is_empty() {
        return Err(Error::validation(format!("panel has no rows for sex '{}'", spec.sex)));
    }
    let p = spec.dim();
    let mut groups = Vec::with_capacity(stream.m());
    for g in stream.groups() {
        if g.observations.len() <= p {
            return Err(Error::GroupTooSmall {
                unit_id: g.unit_id.clone(),
                n: g.observations.len(),
                p,
            });
        }
        let mut rows = Vec::with_capacity(g.observations.len());
        let mut y = Vec::with_capacity(g.observations.len());
        for o in &g.observations {
            rows.push(build_row(o, spec)?.0);
            let c = o.completeness.ok_or_else(|| {
                Error::validation(format!("unit {} year {} has no completeness", o.unit_id, o.period))
            })?;
            y.push(logit(c)?);
        }
        groups.push(GroupData::new(g.unit_id.clone(), &rows, y)?);
    }
    let design = GroupedDesign::from_groups(groups)?;
    let rcond = design.reciprocal_condition();
    if !(rcond >= MIN_RCOND) {
        return Err(Error::RankDeficient { rcond });
    }
    Ok(design)
}

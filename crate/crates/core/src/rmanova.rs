//! Repeated-measures ANOVA on observed data.
//!
//! Layout follows the usual `y[k][i][j]` convention: group k, subject i
//! within the group, time j. Groups may be unbalanced; every subject must be
//! observed at every time point.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distributions::{chisq_sf, f_sf, DistParams};
use crate::error::{DataError, Error, Result};

/// One group of subjects, each measured at every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBlock {
    pub label: String,
    pub subjects: Vec<String>,
    /// `rows[i][j]`: subject i at time j.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RMDataset {
    pub time_labels: Vec<String>,
    pub groups: Vec<GroupBlock>,
}

impl RMDataset {
    /// Builds and validates a dataset from raw rows, numbering groups,
    /// subjects and time points from 1.
    pub fn from_rows(groups: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let t = groups
            .first()
            .and_then(|g| g.first())
            .map(|r| r.len())
            .unwrap_or(0);
        let raw = RMDataset {
            time_labels: (1..=t).map(|j| format!("T{j}")).collect(),
            groups: groups
                .into_iter()
                .enumerate()
                .map(|(k, rows)| GroupBlock {
                    label: (k + 1).to_string(),
                    subjects: (1..=rows.len()).map(|i| i.to_string()).collect(),
                    rows,
                })
                .collect(),
        };
        validate_dataset(raw)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_times(&self) -> usize {
        self.time_labels.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.groups.iter().map(|g| g.rows.len()).sum()
    }

    fn max_abs(&self) -> f64 {
        self.groups
            .iter()
            .flat_map(|g| g.rows.iter().flatten())
            .fold(0.0f64, |m, y| m.max(y.abs()))
    }

    fn cells(&self) -> usize {
        self.n_subjects() * self.n_times()
    }
}

/// Checks the structural invariants and hands the dataset back unchanged.
pub fn validate_dataset(raw: RMDataset) -> Result<RMDataset> {
    if raw.groups.is_empty() {
        return Err(DataError::Empty.into());
    }
    let t = raw.time_labels.len();
    if t < 2 {
        return Err(DataError::TooFewTimes(t).into());
    }
    let mut labels = HashSet::new();
    for block in &raw.groups {
        if !labels.insert(block.label.as_str()) {
            return Err(DataError::DuplicateGroup(block.label.clone()).into());
        }
        if block.subjects.len() != block.rows.len() {
            return Err(Error::InvalidDesign(format!(
                "group '{}' has {} subject labels for {} rows",
                block.label,
                block.subjects.len(),
                block.rows.len()
            )));
        }
        let width = block.rows.first().map(|r| r.len()).unwrap_or(t);
        for (subject, row) in block.subjects.iter().zip(&block.rows) {
            if row.len() != width {
                return Err(DataError::RaggedRow {
                    group: block.label.clone(),
                    subject: subject.clone(),
                    expected: width,
                    found: row.len(),
                }
                .into());
            }
        }
        if width != t {
            return Err(DataError::MismatchedTimes {
                group: block.label.clone(),
                expected: t,
                found: width,
            }
            .into());
        }
        for (subject, row) in block.subjects.iter().zip(&block.rows) {
            if let Some(j) = row.iter().position(|y| !y.is_finite()) {
                return Err(DataError::MissingCell {
                    group: block.label.clone(),
                    subject: subject.clone(),
                    time: raw.time_labels[j].clone(),
                }
                .into());
            }
        }
        let mut seen = HashSet::new();
        for subject in &block.subjects {
            if !seen.insert(subject.as_str()) {
                return Err(DataError::DuplicateSubject {
                    group: block.label.clone(),
                    subject: subject.clone(),
                }
                .into());
            }
        }
        if block.rows.len() < 2 {
            return Err(DataError::TooFewSubjects {
                group: block.label.clone(),
                found: block.rows.len(),
            }
            .into());
        }
    }
    Ok(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Group,
    /// Subjects nested in groups (plain subjects when there is one group).
    Subjects,
    Time,
    GroupByTime,
    Error,
    Total,
}

impl Source {
    pub fn label(&self, groups: usize) -> &'static str {
        match self {
            Source::Group => "Group",
            Source::Subjects if groups > 1 => "Subject(Group)",
            Source::Subjects => "Subject",
            Source::Time => "Time",
            Source::GroupByTime => "Group x Time",
            Source::Error => "Error",
            Source::Total => "Total",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub source: Source,
    pub ss: f64,
    pub df: f64,
    pub ms: f64,
    pub f: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    GreenhouseGeisser,
    HuynhFeldt,
    /// A user-supplied epsilon.
    Manual,
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correction::GreenhouseGeisser => "Greenhouse-Geisser",
            Correction::HuynhFeldt => "Huynh-Feldt",
            Correction::Manual => "manual",
        })
    }
}

/// p-value of a within-subject row recomputed with epsilon-scaled dfs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedP {
    pub source: Source,
    pub correction: Correction,
    pub epsilon: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericityReport {
    pub mauchly_w: f64,
    pub chisq: f64,
    pub df: usize,
    pub p: f64,
    pub eps_gg: f64,
    /// Huynh-Feldt estimate capped at 1.
    pub eps_hf: f64,
    pub eps_hf_uncapped: f64,
    pub eps_lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub groups: usize,
    pub times: usize,
    pub subjects: usize,
    pub rows: Vec<AnovaRow>,
    pub sphericity: Option<SphericityReport>,
    pub adjusted: Vec<AdjustedP>,
}

impl AnovaTable {
    pub fn row(&self, source: Source) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.source == source)
    }

    /// Sum of all component SS (every row except Total).
    pub fn component_ss(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.source != Source::Total)
            .map(|r| r.ss)
            .sum()
    }

    pub fn adjusted_for(&self, source: Source, correction: Correction) -> Option<&AdjustedP> {
        self.adjusted
            .iter()
            .find(|a| a.source == source && a.correction == correction)
    }
}

/// Floor below which a sum of squares is indistinguishable from rounding
/// noise in the cell values.
fn noise_floor(data: &RMDataset) -> f64 {
    let scale = 64.0 * f64::EPSILON * data.max_abs();
    data.cells() as f64 * scale * scale
}

fn snap(ss: f64, floor: f64) -> f64 {
    if ss <= floor {
        0.0
    } else {
        ss
    }
}

fn plain_row(source: Source, ss: f64, df: f64) -> AnovaRow {
    AnovaRow {
        source,
        ss,
        df,
        ms: ss / df,
        f: None,
        p: None,
    }
}

/// Row with F = MS / MS_denominator. A zero numerator over a zero
/// denominator is reported as F = 0, p = 1; a positive numerator over zero
/// has no finite F and is an error.
fn tested_row(source: Source, ss: f64, df: f64, denom_ms: f64, denom_df: f64, floor: f64) -> Result<AnovaRow> {
    let ms = ss / df;
    let f = if denom_ms <= 0.0 {
        if ss <= floor {
            0.0
        } else {
            return Err(Error::ZeroVariance(format!(
                "the error term for the {source:?} test has zero variance; F is undefined"
            )));
        }
    } else {
        ms / denom_ms
    };
    let p = f_sf(f, &DistParams::central(df, denom_df)?)?;
    Ok(AnovaRow {
        source,
        ss,
        df,
        ms,
        f: Some(f),
        p: Some(p),
    })
}

/// One-sample repeated-measures ANOVA (a single group).
pub fn one_sample_rm_anova(data: &RMDataset) -> Result<AnovaTable> {
    if data.n_groups() != 1 {
        return Err(Error::InvalidDesign(format!(
            "one-sample ANOVA needs exactly one group, found {}",
            data.n_groups()
        )));
    }
    let rows = &data.groups[0].rows;
    let n = rows.len();
    let t = data.n_times();
    let (nf, tf) = (n as f64, t as f64);
    let grand = rows.iter().flatten().sum::<f64>() / (nf * tf);
    let time_means: Vec<f64> = (0..t).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let subj_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / tf).collect();

    let floor = noise_floor(data);
    let ss_total: f64 = rows.iter().flatten().map(|y| (y - grand).powi(2)).sum();
    let ss_time = snap(nf * time_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>(), floor);
    let ss_subj = snap(tf * subj_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>(), floor);
    let mut ss_err = 0.0;
    for (r, sm) in rows.iter().zip(&subj_means) {
        for (y, tm) in r.iter().zip(&time_means) {
            ss_err += (y - sm - tm + grand).powi(2);
        }
    }
    let ss_err = snap(ss_err, floor);

    let df_time = tf - 1.0;
    let df_err = (nf - 1.0) * (tf - 1.0);
    let error = plain_row(Source::Error, ss_err, df_err);
    let time = tested_row(Source::Time, ss_time, df_time, error.ms, df_err, floor)?;
    Ok(AnovaTable {
        groups: 1,
        times: t,
        subjects: n,
        rows: vec![
            plain_row(Source::Subjects, ss_subj, nf - 1.0),
            time,
            error,
            plain_row(Source::Total, ss_total, nf * tf - 1.0),
        ],
        sphericity: None,
        adjusted: Vec::new(),
    })
}

/// Multi-sample (split-plot) repeated-measures ANOVA; needs g >= 2.
pub fn multi_sample_rm_anova(data: &RMDataset) -> Result<AnovaTable> {
    if data.n_groups() < 2 {
        return Err(Error::InvalidDesign(format!(
            "multi-sample ANOVA needs at least two groups, found {}",
            data.n_groups()
        )));
    }
    split_plot(data)
}

/// Dispatches on the number of groups.
pub fn rm_anova(data: &RMDataset) -> Result<AnovaTable> {
    if data.n_groups() == 1 {
        one_sample_rm_anova(data)
    } else {
        multi_sample_rm_anova(data)
    }
}

/// Split-plot decomposition for any g >= 1. With one group the Group and
/// Group x Time rows are omitted.
pub(crate) fn split_plot(data: &RMDataset) -> Result<AnovaTable> {
    let dec = effects_decomposition(data)?;
    let g = data.n_groups();
    let t = data.n_times();
    let n = data.n_subjects();
    let (gf, tf, nf) = (g as f64, t as f64, n as f64);
    let floor = noise_floor(data);
    let sizes: Vec<f64> = data.groups.iter().map(|b| b.rows.len() as f64).collect();

    let ss_group = snap(
        tf * sizes.iter().zip(&dec.group_effects).map(|(nk, e)| nk * e * e).sum::<f64>(),
        floor,
    );
    let ss_subj = snap(
        tf * dec.subject_effects.iter().flatten().map(|e| e * e).sum::<f64>(),
        floor,
    );
    let ss_time = snap(nf * dec.time_effects.iter().map(|e| e * e).sum::<f64>(), floor);
    let ss_int = snap(
        sizes
            .iter()
            .zip(&dec.interaction_effects)
            .map(|(nk, row)| nk * row.iter().map(|e| e * e).sum::<f64>())
            .sum::<f64>(),
        floor,
    );
    let ss_err = snap(
        dec.residuals.iter().flatten().flatten().map(|e| e * e).sum::<f64>(),
        floor,
    );
    let ss_total: f64 = data
        .groups
        .iter()
        .flat_map(|b| b.rows.iter().flatten())
        .map(|y| (y - dec.grand_mean).powi(2))
        .sum();

    let df_subj = nf - gf;
    let df_err = (nf - gf) * (tf - 1.0);
    let subjects = plain_row(Source::Subjects, ss_subj, df_subj);
    let error = plain_row(Source::Error, ss_err, df_err);
    let mut rows = Vec::with_capacity(6);
    if g > 1 {
        rows.push(tested_row(Source::Group, ss_group, gf - 1.0, subjects.ms, df_subj, floor)?);
    }
    rows.push(subjects);
    rows.push(tested_row(Source::Time, ss_time, tf - 1.0, error.ms, df_err, floor)?);
    if g > 1 {
        rows.push(tested_row(
            Source::GroupByTime,
            ss_int,
            (gf - 1.0) * (tf - 1.0),
            error.ms,
            df_err,
            floor,
        )?);
    }
    rows.push(error);
    rows.push(plain_row(Source::Total, ss_total, nf * tf - 1.0));
    Ok(AnovaTable {
        groups: g,
        times: t,
        subjects: n,
        rows,
        sphericity: None,
        adjusted: Vec::new(),
    })
}

/// Plug-in estimates of the fixed and random effects of the split-plot
/// model `y = mu + rho_i(k) + tau_j + gamma_k + (tau gamma)_kj + e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsDecomposition {
    pub grand_mean: f64,
    pub time_effects: Vec<f64>,
    pub group_effects: Vec<f64>,
    /// `[k][j]`
    pub interaction_effects: Vec<Vec<f64>>,
    /// `[k][i]`
    pub subject_effects: Vec<Vec<f64>>,
    /// `[k][i][j]`
    pub residuals: Vec<Vec<Vec<f64>>>,
}

impl EffectsDecomposition {
    /// Sum of all effect terms for one cell; equals the observation.
    pub fn reconstruct(&self, k: usize, i: usize, j: usize) -> f64 {
        self.grand_mean
            + self.group_effects[k]
            + self.subject_effects[k][i]
            + self.time_effects[j]
            + self.interaction_effects[k][j]
            + self.residuals[k][i][j]
    }
}

pub fn effects_decomposition(data: &RMDataset) -> Result<EffectsDecomposition> {
    let t = data.n_times();
    let n = data.n_subjects() as f64;
    let tf = t as f64;

    let group_means: Vec<f64> = data
        .groups
        .iter()
        .map(|b| b.rows.iter().flatten().sum::<f64>() / (b.rows.len() as f64 * tf))
        .collect();
    let cell_means: Vec<Vec<f64>> = data
        .groups
        .iter()
        .map(|b| {
            let nk = b.rows.len() as f64;
            (0..t).map(|j| b.rows.iter().map(|r| r[j]).sum::<f64>() / nk).collect()
        })
        .collect();
    let grand = data
        .groups
        .iter()
        .flat_map(|b| b.rows.iter().flatten())
        .sum::<f64>()
        / (n * tf);
    let time_means: Vec<f64> = (0..t)
        .map(|j| data.groups.iter().flat_map(|b| b.rows.iter().map(move |r| r[j])).sum::<f64>() / n)
        .collect();

    let mut subject_effects = Vec::with_capacity(data.n_groups());
    let mut residuals = Vec::with_capacity(data.n_groups());
    let mut interaction_effects = Vec::with_capacity(data.n_groups());
    for (k, block) in data.groups.iter().enumerate() {
        let gm = group_means[k];
        let mut subj = Vec::with_capacity(block.rows.len());
        let mut res = Vec::with_capacity(block.rows.len());
        for row in &block.rows {
            let sm = row.iter().sum::<f64>() / tf;
            subj.push(sm - gm);
            res.push(
                row.iter()
                    .zip(&cell_means[k])
                    .map(|(y, cm)| y - cm - sm + gm)
                    .collect(),
            );
        }
        subject_effects.push(subj);
        residuals.push(res);
        interaction_effects.push(
            cell_means[k]
                .iter()
                .zip(&time_means)
                .map(|(cm, tm)| cm - gm - tm + grand)
                .collect(),
        );
    }
    Ok(EffectsDecomposition {
        grand_mean: grand,
        time_effects: time_means.iter().map(|m| m - grand).collect(),
        group_effects: group_means.iter().map(|m| m - grand).collect(),
        interaction_effects,
        subject_effects,
        residuals,
    })
}

/// Orthonormal Helmert contrasts as a t x (t-1) matrix.
fn helmert_contrasts(t: usize) -> DMatrix<f64> {
    DMatrix::from_fn(t, t - 1, |row, col| {
        let j = col + 1;
        let norm = ((j * (j + 1)) as f64).sqrt();
        if row < j {
            1.0 / norm
        } else if row == j {
            -(j as f64) / norm
        } else {
            0.0
        }
    })
}

/// Pooled within-group covariance of the t measurements (divisor N - g).
pub fn pooled_covariance(data: &RMDataset) -> DMatrix<f64> {
    let t = data.n_times();
    let mut s = DMatrix::<f64>::zeros(t, t);
    for block in &data.groups {
        let nk = block.rows.len() as f64;
        let means: Vec<f64> = (0..t).map(|j| block.rows.iter().map(|r| r[j]).sum::<f64>() / nk).collect();
        for row in &block.rows {
            for a in 0..t {
                let da = row[a] - means[a];
                for b in 0..t {
                    s[(a, b)] += da * (row[b] - means[b]);
                }
            }
        }
    }
    s / (data.n_subjects() - data.n_groups()) as f64
}

/// Mauchly's W with its chi-square approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MauchlyTest {
    pub w: f64,
    pub chisq: f64,
    pub df: usize,
    pub p: f64,
}

fn contrast_eigenvalues(cov: &DMatrix<f64>) -> Vec<f64> {
    let c = helmert_contrasts(cov.nrows());
    let m = c.transpose() * cov * &c;
    // Symmetrise away rounding asymmetry before the eigen solve.
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
}

impl SphericityReport {
    /// Sphericity diagnostics from a pooled covariance estimated with
    /// `n_total` subjects in `groups` groups.
    pub fn from_covariance(cov: &DMatrix<f64>, n_total: usize, groups: usize) -> Result<Self> {
        let t = cov.nrows();
        if t < 2 || cov.ncols() != t {
            return Err(Error::InvalidDesign("covariance must be square with t >= 2".into()));
        }
        if n_total <= groups {
            return Err(Error::InvalidDesign("need more subjects than groups".into()));
        }
        let p = t - 1;
        let pf = p as f64;
        let lower = 1.0 / pf;
        if t == 2 {
            return Ok(SphericityReport {
                mauchly_w: 1.0,
                chisq: 0.0,
                df: 0,
                p: 1.0,
                eps_gg: 1.0,
                eps_hf: 1.0,
                eps_hf_uncapped: 1.0,
                eps_lower_bound: lower,
            });
        }
        let ev = contrast_eigenvalues(cov);
        let max_ev = ev.iter().cloned().fold(0.0f64, f64::max);
        let min_ev = ev.iter().cloned().fold(f64::INFINITY, f64::min);
        let dof = (n_total - groups) as f64;
        if max_ev <= 0.0 || dof < pf || min_ev <= max_ev * 1e-12 {
            return Err(Error::SingularCovariance(format!(
                "contrast covariance is singular ({} error df for {} contrasts)",
                n_total - groups,
                p
            )));
        }
        let sum: f64 = ev.iter().sum();
        let sum_sq: f64 = ev.iter().map(|x| x * x).sum();
        let mean = sum / pf;
        let ln_w: f64 = ev.iter().map(|x| (x / mean).ln()).sum();
        let w = ln_w.exp().min(1.0);
        let d = 1.0 - (2.0 * pf * pf + pf + 2.0) / (6.0 * pf * dof);
        let chisq = (-dof * d * ln_w).max(0.0);
        let df = p * (p + 1) / 2 - 1;
        let p_value = chisq_sf(chisq, df as f64)?;

        let eps_gg = (sum * sum / (pf * sum_sq)).clamp(lower, 1.0);
        let (eps_hf_uncapped, eps_hf) = huynh_feldt(eps_gg, n_total, groups, p);
        Ok(SphericityReport {
            mauchly_w: w,
            chisq,
            df,
            p: p_value,
            eps_gg,
            eps_hf,
            eps_hf_uncapped,
            eps_lower_bound: lower,
        })
    }
}

/// Multi-group Huynh-Feldt estimate; returns (uncapped, capped at 1).
fn huynh_feldt(eps_gg: f64, n_total: usize, groups: usize, p: usize) -> (f64, f64) {
    let (n, g, pf) = (n_total as f64, groups as f64, p as f64);
    let denom = pf * (n - g - pf * eps_gg);
    if denom <= 0.0 {
        return (f64::INFINITY, 1.0);
    }
    let hf = (n * pf * eps_gg - 2.0) / denom;
    (hf, hf.min(1.0))
}

/// Full sphericity report for a dataset.
pub fn sphericity(data: &RMDataset) -> Result<SphericityReport> {
    SphericityReport::from_covariance(&pooled_covariance(data), data.n_subjects(), data.n_groups())
}

pub fn mauchly_test(data: &RMDataset) -> Result<MauchlyTest> {
    let r = sphericity(data)?;
    Ok(MauchlyTest {
        w: r.mauchly_w,
        chisq: r.chisq,
        df: r.df,
        p: r.p,
    })
}

/// Greenhouse-Geisser and (capped) Huynh-Feldt epsilon estimates.
pub fn estimate_epsilons(data: &RMDataset) -> Result<(f64, f64)> {
    let r = sphericity(data)?;
    Ok((r.eps_gg, r.eps_hf))
}

/// Recomputes the Time and Group x Time p-values with both degrees of
/// freedom multiplied by `eps`. F statistics are untouched; the results are
/// appended to `adjusted`.
pub fn adjusted_pvalues(table: &AnovaTable, eps: f64, correction: Correction) -> Result<AnovaTable> {
    let lower = 1.0 / (table.times as f64 - 1.0);
    if !(eps >= lower - 1e-12 && eps <= 1.0) {
        return Err(Error::InvalidEffect(format!(
            "epsilon must lie in [{lower:.6}, 1], got {eps}"
        )));
    }
    let denom_df = table
        .row(Source::Error)
        .map(|r| r.df)
        .ok_or_else(|| Error::InvalidDesign("table has no error row".into()))?;
    let mut out = table.clone();
    out.adjusted.retain(|a| a.correction != correction);
    for source in [Source::Time, Source::GroupByTime] {
        let Some(row) = table.row(source) else { continue };
        let Some(f) = row.f else { continue };
        let (df1, df2) = (row.df * eps, denom_df * eps);
        out.adjusted.push(AdjustedP {
            source,
            correction,
            epsilon: eps,
            df1,
            df2,
            p: f_sf(f, &DistParams::central(df1, df2)?)?,
        });
    }
    Ok(out)
}

/// Attaches the sphericity report (when t >= 3 and the covariance allows it)
/// and the requested corrections to an ANOVA table.
pub fn with_sphericity(table: AnovaTable, data: &RMDataset, corrections: &[Correction]) -> Result<AnovaTable> {
    let report = sphericity(data)?;
    let mut out = AnovaTable {
        sphericity: Some(report),
        ..table
    };
    for &c in corrections {
        let eps = match c {
            Correction::GreenhouseGeisser => report.eps_gg,
            Correction::HuynhFeldt => report.eps_hf,
            Correction::Manual => continue,
        };
        out = adjusted_pvalues(&out, eps, c)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

/// Mid-ranks of one row.
fn mid_ranks(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && row[idx[end]] == row[idx[start]] {
            end += 1;
        }
        // Positions start..end share the average of ranks start+1..=end.
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Friedman rank test with the tie-correction divisor.
pub fn friedman_test(data: &RMDataset) -> Result<FriedmanResult> {
    if data.n_groups() != 1 {
        return Err(Error::InvalidDesign(format!(
            "the Friedman test needs exactly one group, found {}",
            data.n_groups()
        )));
    }
    let t = data.n_times();
    if t < 3 {
        return Err(Error::InvalidDesign(format!("the Friedman test needs t >= 3, got {t}")));
    }
    let rows = &data.groups[0].rows;
    let n = rows.len();
    let (nf, tf) = (n as f64, t as f64);
    let mut rank_sums = vec![0.0; t];
    let mut tie_sum = 0.0;
    for row in rows {
        let ranks = mid_ranks(row);
        for (s, r) in rank_sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        for run in sorted.chunk_by(|a, b| a == b) {
            let len = run.len() as f64;
            tie_sum += len * len * len - len;
        }
    }
    let correction = 1.0 - tie_sum / (nf * (tf * tf * tf - tf));
    if correction <= 0.0 {
        return Err(Error::Degenerate(
            "every subject is constant across time; ranks carry no information".into(),
        ));
    }
    let raw = 12.0 / (nf * tf * (tf + 1.0)) * rank_sums.iter().map(|r| r * r).sum::<f64>()
        - 3.0 * nf * (tf + 1.0);
    let statistic = (raw / correction).max(0.0);
    let df = t - 1;
    Ok(FriedmanResult {
        statistic,
        df,
        p: chisq_sf(statistic, df as f64)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rmpower_oracles::fixtures;

    fn one_group_data() -> RMDataset {
        RMDataset::from_rows(fixtures::one_group()).unwrap()
    }

    fn three_group_data() -> RMDataset {
        RMDataset::from_rows(fixtures::three_groups()).unwrap()
    }

    #[test]
    fn validates_one_group() {
        let d = one_group_data();
        assert_eq!((d.n_groups(), d.n_subjects(), d.n_times()), (1, 5, 5));
    }

    #[test]
    fn rejects_single_subject() {
        let r = RMDataset::from_rows(vec![vec![vec![1.0, 2.0, 3.0]]]);
        assert!(matches!(r, Err(Error::Data(DataError::TooFewSubjects { found: 1, .. }))));
    }

    #[test]
    fn rejects_ragged_row_naming_subject() {
        let r = RMDataset::from_rows(vec![vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0]]]);
        match r {
            Err(Error::Data(DataError::RaggedRow { subject, expected, found, .. })) => {
                assert_eq!((subject.as_str(), expected, found), ("2", 3, 2));
            }
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_times_missing_and_duplicates() {
        let mut raw = one_group_data();
        raw.time_labels.pop();
        assert!(matches!(validate_dataset(raw), Err(Error::Data(DataError::MismatchedTimes { .. }))));

        let mut raw = one_group_data();
        raw.groups[0].rows[2][3] = f64::NAN;
        match validate_dataset(raw) {
            Err(Error::Data(DataError::MissingCell { subject, time, .. })) => {
                assert_eq!((subject.as_str(), time.as_str()), ("3", "T4"));
            }
            other => panic!("expected missing-cell error, got {other:?}"),
        }

        let mut raw = one_group_data();
        raw.groups[0].subjects[1] = "1".into();
        assert!(matches!(validate_dataset(raw), Err(Error::Data(DataError::DuplicateSubject { .. }))));
    }

    #[test]
    fn one_sample_one_group() {
        let t = one_sample_rm_anova(&one_group_data()).unwrap();
        let time = t.row(Source::Time).unwrap();
        assert_abs_diff_eq!(time.f.unwrap(), 2.07, epsilon = 0.01);
        assert_abs_diff_eq!(time.p.unwrap(), 0.133, epsilon = 0.002);
        assert_eq!(time.df, 4.0);
        assert_eq!(t.row(Source::Error).unwrap().df, 16.0);
    }

    #[test]
    fn one_sample_matches_brute_force() {
        let bf = rmpower_oracles::brute_force_ss(&fixtures::one_group());
        let t = one_sample_rm_anova(&one_group_data()).unwrap();
        assert_abs_diff_eq!(t.row(Source::Time).unwrap().ss, bf.time, epsilon = 1e-12);
        assert_abs_diff_eq!(t.row(Source::Error).unwrap().ss, bf.error, epsilon = 1e-12);
        let f = (bf.time / 4.0) / (bf.error / 16.0);
        assert_abs_diff_eq!(t.row(Source::Time).unwrap().f.unwrap(), f, epsilon = 1e-10);
    }

    #[test]
    fn constant_subjects_give_zero_f() {
        let d = RMDataset::from_rows(vec![vec![vec![2.0; 4], vec![5.0; 4], vec![-1.0; 4]]]).unwrap();
        let t = one_sample_rm_anova(&d).unwrap();
        let time = t.row(Source::Time).unwrap();
        assert_eq!(time.ss, 0.0);
        assert_eq!(time.f, Some(0.0));
        assert_eq!(time.p, Some(1.0));
    }

    #[test]
    fn zero_error_with_effect_is_an_error() {
        // Pure time effect, no noise: MS_error = 0 but MS_time > 0.
        let d = RMDataset::from_rows(vec![vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]]).unwrap();
        assert!(matches!(one_sample_rm_anova(&d), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn multi_sample_three_groups() {
        let t = multi_sample_rm_anova(&three_group_data()).unwrap();
        let group = t.row(Source::Group).unwrap();
        let time = t.row(Source::Time).unwrap();
        let inter = t.row(Source::GroupByTime).unwrap();
        assert_abs_diff_eq!(group.f.unwrap(), 25.785, epsilon = 0.01);
        assert!(group.p.unwrap() < 0.0005);
        assert_abs_diff_eq!(time.f.unwrap(), 5.710, epsilon = 0.01);
        assert_abs_diff_eq!(time.p.unwrap(), 0.001, epsilon = 0.001);
        assert_abs_diff_eq!(inter.f.unwrap(), 5.458, epsilon = 0.01);
        assert!(inter.p.unwrap() < 0.0005);
        assert_eq!((group.df, time.df, inter.df), (2.0, 4.0, 8.0));
        assert_eq!(t.row(Source::Subjects).unwrap().df, 12.0);
        assert_eq!(t.row(Source::Error).unwrap().df, 48.0);
    }

    #[test]
    fn multi_sample_matches_brute_force() {
        let bf = rmpower_oracles::brute_force_ss(&fixtures::three_groups());
        let t = multi_sample_rm_anova(&three_group_data()).unwrap();
        let pairs = [
            (Source::Group, bf.group),
            (Source::Subjects, bf.subject),
            (Source::Time, bf.time),
            (Source::GroupByTime, bf.interaction),
            (Source::Error, bf.error),
            (Source::Total, bf.total),
        ];
        for (s, want) in pairs {
            assert_abs_diff_eq!(t.row(s).unwrap().ss, want, epsilon = 1e-11);
        }
    }

    #[test]
    fn duplicated_groups_have_no_group_effect() {
        let block = fixtures::to_rows(&fixtures::RIGHT_HEMI);
        let d = RMDataset::from_rows(vec![block.clone(), block]).unwrap();
        let t = multi_sample_rm_anova(&d).unwrap();
        assert_eq!(t.row(Source::Group).unwrap().ss, 0.0);
        assert_eq!(t.row(Source::GroupByTime).unwrap().ss, 0.0);
        assert_eq!(t.row(Source::Group).unwrap().f, Some(0.0));
    }

    #[test]
    fn single_group_split_plot_equals_one_sample() {
        let d = one_group_data();
        let a = one_sample_rm_anova(&d).unwrap();
        let b = split_plot(&d).unwrap();
        assert!(b.row(Source::Group).is_none() && b.row(Source::GroupByTime).is_none());
        for s in [Source::Subjects, Source::Time, Source::Error, Source::Total] {
            let (x, y) = (a.row(s).unwrap(), b.row(s).unwrap());
            assert_abs_diff_eq!(x.ss, y.ss, epsilon = 1e-13);
            assert_eq!(x.df, y.df);
        }
        let (fa, fb) = (a.row(Source::Time).unwrap(), b.row(Source::Time).unwrap());
        assert_abs_diff_eq!(fa.f.unwrap(), fb.f.unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(fa.p.unwrap(), fb.p.unwrap(), epsilon = 1e-12);
        assert!(multi_sample_rm_anova(&d).is_err());
    }

    #[test]
    fn decomposition_reconstructs_and_centres() {
        let d = three_group_data();
        let dec = effects_decomposition(&d).unwrap();
        for (k, b) in d.groups.iter().enumerate() {
            for (i, row) in b.rows.iter().enumerate() {
                for (j, y) in row.iter().enumerate() {
                    assert_abs_diff_eq!(dec.reconstruct(k, i, j), *y, epsilon = 1e-13);
                }
            }
        }
        assert_abs_diff_eq!(dec.time_effects.iter().sum::<f64>(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(dec.group_effects.iter().sum::<f64>(), 0.0, epsilon = 1e-13);
        for row in &dec.interaction_effects {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 0.0, epsilon = 1e-13);
        }
        for j in 0..5 {
            let s: f64 = dec.interaction_effects.iter().map(|r| r[j]).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-13);
        }
        let t = multi_sample_rm_anova(&d).unwrap();
        let ss_time = 15.0 * dec.time_effects.iter().map(|e| e * e).sum::<f64>();
        assert_abs_diff_eq!(ss_time, t.row(Source::Time).unwrap().ss, epsilon = 1e-12);
        let ss_group = 25.0 * dec.group_effects.iter().map(|e| e * e).sum::<f64>();
        assert_abs_diff_eq!(ss_group, t.row(Source::Group).unwrap().ss, epsilon = 1e-12);
    }

    #[test]
    fn constant_dataset_decomposes_to_zero() {
        let d = RMDataset::from_rows(vec![vec![vec![3.5; 3]; 2], vec![vec![3.5; 3]; 3]]).unwrap();
        let dec = effects_decomposition(&d).unwrap();
        assert_eq!(dec.grand_mean, 3.5);
        assert!(dec.time_effects.iter().chain(&dec.group_effects).all(|e| *e == 0.0));
        assert!(dec.residuals.iter().flatten().flatten().all(|e| *e == 0.0));
    }

    #[test]
    fn mauchly_two_times_is_trivial() {
        let d = RMDataset::from_rows(vec![vec![vec![1.0, 2.0], vec![2.0, 2.5], vec![0.0, 4.0]]]).unwrap();
        let m = mauchly_test(&d).unwrap();
        assert_eq!((m.w, m.p), (1.0, 1.0));
    }

    #[test]
    fn compound_symmetry_is_spherical() {
        let t = 4;
        let cov = DMatrix::from_fn(t, t, |a, b| if a == b { 2.0 } else { 0.7 });
        let r = SphericityReport::from_covariance(&cov, 20, 2).unwrap();
        assert_abs_diff_eq!(r.mauchly_w, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.eps_gg, 1.0, epsilon = 1e-12);
        assert_eq!(r.eps_hf, 1.0);
    }

    #[test]
    fn rank_one_dominated_hits_lower_bound() {
        let t = 5;
        let v: Vec<f64> = (0..t).map(|j| j as f64).collect();
        let cov = DMatrix::from_fn(t, t, |a, b| 1e6 * v[a] * v[b] + if a == b { 1e-3 } else { 0.0 });
        let r = SphericityReport::from_covariance(&cov, 40, 1).unwrap();
        assert_abs_diff_eq!(r.eps_gg, 0.25, epsilon = 1e-6);
    }

    #[test]
    fn one_group_mauchly_matches_eigen_oracle() {
        let (w, gg) = rmpower_oracles::mauchly_w_and_gg(&fixtures::one_group());
        let r = sphericity(&one_group_data()).unwrap();
        assert_abs_diff_eq!(r.mauchly_w, w, epsilon = 1e-10);
        assert_abs_diff_eq!(r.eps_gg, gg, epsilon = 1e-10);
        assert_eq!(r.df, 9);
        assert!(r.p > 0.0 && r.p <= 1.0);
    }

    #[test]
    fn three_group_epsilons_match_oracle() {
        let (_, gg) = rmpower_oracles::mauchly_w_and_gg(&fixtures::three_groups());
        let (eps_gg, eps_hf) = estimate_epsilons(&three_group_data()).unwrap();
        assert_abs_diff_eq!(eps_gg, gg, epsilon = 1e-10);
        assert!(eps_hf >= eps_gg && eps_hf <= 1.0);
        assert!(eps_gg >= 0.25);
    }

    #[test]
    fn singular_covariance_rejected() {
        // Two subjects cannot support four contrasts.
        let d = RMDataset::from_rows(vec![vec![vec![1.0, 2.0, 0.5, 3.0, 1.0], vec![2.0, 1.0, 1.5, 0.0, 2.0]]]).unwrap();
        assert!(matches!(mauchly_test(&d), Err(Error::SingularCovariance(_))));
    }

    #[test]
    fn adjusted_identity_and_recompute() {
        let t = multi_sample_rm_anova(&three_group_data()).unwrap();
        let same = adjusted_pvalues(&t, 1.0, Correction::Manual).unwrap();
        for a in &same.adjusted {
            assert_abs_diff_eq!(a.p, t.row(a.source).unwrap().p.unwrap(), epsilon = 1e-15);
        }
        let (gg, _) = estimate_epsilons(&three_group_data()).unwrap();
        let adj = adjusted_pvalues(&t, gg, Correction::GreenhouseGeisser).unwrap();
        let a = adj.adjusted_for(Source::Time, Correction::GreenhouseGeisser).unwrap();
        let f = t.row(Source::Time).unwrap().f.unwrap();
        let cdf = crate::distributions::f_cdf(f, &DistParams::central(4.0 * gg, 48.0 * gg).unwrap()).unwrap();
        assert_abs_diff_eq!(a.p, 1.0 - cdf, epsilon = 1e-12);
        assert!(a.p >= t.row(Source::Time).unwrap().p.unwrap());
        assert!(adjusted_pvalues(&t, 0.1, Correction::Manual).is_err());
    }

    #[test]
    fn with_sphericity_attaches_both_corrections() {
        let d = three_group_data();
        let t = with_sphericity(multi_sample_rm_anova(&d).unwrap(), &d, &[Correction::GreenhouseGeisser, Correction::HuynhFeldt]).unwrap();
        assert!(t.sphericity.is_some());
        assert_eq!(t.adjusted.len(), 4);
    }

    #[test]
    fn friedman_perfect_agreement() {
        let d = RMDataset::from_rows(vec![vec![vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0]]]).unwrap();
        let r = friedman_test(&d).unwrap();
        assert_abs_diff_eq!(r.statistic, 4.0, epsilon = 1e-12);
        assert_eq!(r.df, 2);
    }

    #[test]
    fn friedman_balanced_ranks_give_zero() {
        let d = RMDataset::from_rows(vec![vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]]]).unwrap();
        let r = friedman_test(&d).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn friedman_one_group_matches_rank_oracle() {
        let r = friedman_test(&one_group_data()).unwrap();
        let q = rmpower_oracles::friedman_statistic(&fixtures::one_group()[0]);
        assert_abs_diff_eq!(r.statistic, q, epsilon = 1e-12);
        assert_eq!(r.df, 4);
    }

    #[test]
    fn friedman_all_ties_is_degenerate() {
        let d = RMDataset::from_rows(vec![vec![vec![1.0; 3], vec![2.0; 3]]]).unwrap();
        assert!(matches!(friedman_test(&d), Err(Error::Degenerate(_))));
        assert!(friedman_test(&three_group_data()).is_err());
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}

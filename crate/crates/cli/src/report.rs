//! Versioned JSON reports and their plain-text rendering.
//!
//! JSON keeps full precision. Text output shows F to 4 decimals and p to 3,
//! with anything below 0.001 printed as `<0.001`.

use std::fmt::Write as _;

use rmpower_core::mcvalidate::MCPowerEstimate;
use rmpower_core::power::{CurveRow, EffectSpec, NoncentralitySpec, SkippedPoint, StudyDesign, TestKind};
use rmpower_core::rmanova::{AdjustedP, AnovaRow, AnovaTable, FriedmanResult, Source, SphericityReport};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: ReportBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename_all = "snake_case")]
pub enum ReportBody {
    Power(PowerReport),
    SampleSize(SampleSizeReport),
    Mde(MdeReport),
    Curve(CurveReport),
    Anova(AnovaReport),
    Simulation(SimulationReport),
}

impl From<ReportBody> for Report {
    fn from(body: ReportBody) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub kind: TestKind,
    pub design: StudyDesign,
    pub effect: EffectSpec,
    pub noncentrality: NoncentralitySpec,
    pub crit_f: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeReport {
    pub kind: TestKind,
    pub groups: usize,
    pub times: usize,
    pub effect: EffectSpec,
    /// Smallest multiple of `groups` reaching the target power.
    pub n_total: usize,
    pub achieved_power: f64,
    pub noncentrality: NoncentralitySpec,
    pub crit_f: f64,
    /// Smallest integer N of any size reaching the target power.
    pub unconstrained_n: usize,
    pub unconstrained_power: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdeReport {
    pub kind: TestKind,
    pub design: StudyDesign,
    /// Effect specification with `f` set to the detectable effect.
    pub effect: EffectSpec,
    pub f: f64,
    pub achieved_power: f64,
    pub noncentrality: NoncentralitySpec,
    pub crit_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub kind: TestKind,
    pub groups: usize,
    pub times: usize,
    pub effect: EffectSpec,
    pub rows: Vec<CurveRow>,
    pub skipped: Vec<SkippedPoint>,
}

/// Sphericity diagnostics; an unbounded uncapped Huynh-Feldt estimate is
/// written as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericityJson {
    pub mauchly_w: f64,
    pub chisq: f64,
    pub df: usize,
    pub p: f64,
    pub eps_gg: f64,
    pub eps_hf: f64,
    pub eps_hf_uncapped: Option<f64>,
    pub eps_lower_bound: f64,
}

impl From<SphericityReport> for SphericityJson {
    fn from(r: SphericityReport) -> Self {
        SphericityJson {
            mauchly_w: r.mauchly_w,
            chisq: r.chisq,
            df: r.df,
            p: r.p,
            eps_gg: r.eps_gg,
            eps_hf: r.eps_hf,
            eps_hf_uncapped: r.eps_hf_uncapped.is_finite().then_some(r.eps_hf_uncapped),
            eps_lower_bound: r.eps_lower_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaReport {
    pub groups: usize,
    pub times: usize,
    pub subjects: usize,
    pub group_labels: Vec<String>,
    pub time_labels: Vec<String>,
    pub rows: Vec<AnovaRow>,
    pub sphericity: Option<SphericityJson>,
    pub adjusted: Vec<AdjustedP>,
    pub friedman: Option<FriedmanResult>,
}

impl AnovaReport {
    pub fn new(
        table: AnovaTable,
        group_labels: Vec<String>,
        time_labels: Vec<String>,
        friedman: Option<FriedmanResult>,
    ) -> Self {
        AnovaReport {
            groups: table.groups,
            times: table.times,
            subjects: table.subjects,
            group_labels,
            time_labels,
            rows: table.rows,
            sphericity: table.sphericity.map(SphericityJson::from),
            adjusted: table.adjusted,
            friedman,
        }
    }

    pub fn row(&self, source: Source) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.source == source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub kind: TestKind,
    pub design: StudyDesign,
    pub effect: EffectSpec,
    pub seed: u64,
    pub replications: usize,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub std_error: f64,
    pub analytic_power: f64,
    /// `null` when the standard error is zero and the rates differ.
    pub z_discrepancy: Option<f64>,
    pub within_3se: bool,
}

impl SimulationReport {
    pub fn new(kind: TestKind, design: StudyDesign, effect: EffectSpec, seed: u64, est: &MCPowerEstimate) -> Self {
        let z = est.z_discrepancy;
        SimulationReport {
            kind,
            design,
            effect,
            seed,
            replications: est.replications,
            rejections: est.rejections,
            rejection_rate: est.rejection_rate,
            std_error: est.std_error,
            analytic_power: est.analytic_power,
            z_discrepancy: z.is_finite().then_some(z),
            within_3se: z.abs() <= 3.0,
        }
    }
}

/// Canonical JSON: pretty-printed, field order fixed by the types, shortest
/// round-trip float formatting, trailing newline.
pub fn to_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports contain only finite numbers");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> serde_json::Result<Report> {
    serde_json::from_str(text)
}

pub fn fmt_f(f: f64) -> String {
    format!("{f:.4}")
}

pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Fixed 4 decimals, switching to exponent form for very small magnitudes.
fn fmt_num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.4e}")
    } else {
        format!("{x:.4}")
    }
}

fn fmt_df(df: f64) -> String {
    if df.fract() == 0.0 {
        format!("{df:.0}")
    } else {
        format!("{df:.3}")
    }
}

fn effect_line(kind: TestKind, e: &EffectSpec) -> String {
    let mut s = format!("f = {}, rho = {}, alpha = {}", e.f, e.rho, e.alpha);
    if kind != TestKind::Between {
        write!(s, ", eps = {}", e.epsilon).unwrap();
    }
    s
}

fn nc_line(nc: &NoncentralitySpec, crit_f: f64) -> String {
    format!(
        "lambda = {}, df = ({}, {}), critical F = {}",
        fmt_num(nc.lambda),
        fmt_df(nc.df1),
        fmt_df(nc.df2),
        fmt_f(crit_f)
    )
}

pub fn to_text(report: &Report) -> String {
    let mut s = String::new();
    match &report.body {
        ReportBody::Power(r) => {
            let d = &r.design;
            writeln!(s, "{} test, g = {}, t = {}, N = {}", r.kind, d.groups, d.times, d.n_total).unwrap();
            writeln!(s, "{}", effect_line(r.kind, &r.effect)).unwrap();
            writeln!(s, "{}", nc_line(&r.noncentrality, r.crit_f)).unwrap();
            writeln!(s, "power = {:.4}", r.power).unwrap();
        }
        ReportBody::SampleSize(r) => {
            writeln!(s, "N = {}", r.n_total).unwrap();
            writeln!(s, "{} test, g = {}, t = {}, target power = {}", r.kind, r.groups, r.times, r.effect.target_power)
                .unwrap();
            writeln!(s, "{}", effect_line(r.kind, &r.effect)).unwrap();
            writeln!(s, "{}", nc_line(&r.noncentrality, r.crit_f)).unwrap();
            writeln!(s, "achieved power = {:.4}", r.achieved_power).unwrap();
            if let Some(note) = &r.note {
                writeln!(s, "note: {note}").unwrap();
            }
        }
        ReportBody::Mde(r) => {
            writeln!(s, "f = {:.4}", r.f).unwrap();
            let d = &r.design;
            writeln!(s, "{} test, g = {}, t = {}, N = {}", r.kind, d.groups, d.times, d.n_total).unwrap();
            writeln!(s, "{}", nc_line(&r.noncentrality, r.crit_f)).unwrap();
            writeln!(s, "power at f = {:.4}", r.achieved_power).unwrap();
        }
        ReportBody::Curve(r) => {
            s.push_str(&crate::svg::curve_csv(&r.rows));
            for p in &r.skipped {
                writeln!(s, "# skipped f = {}, N = {}: {}", p.f, p.n_total, p.reason).unwrap();
            }
        }
        ReportBody::Anova(r) => anova_text(&mut s, r),
        ReportBody::Simulation(r) => {
            let d = &r.design;
            writeln!(s, "{} test, g = {}, t = {}, N = {}", r.kind, d.groups, d.times, d.n_total).unwrap();
            writeln!(s, "{}", effect_line(r.kind, &r.effect)).unwrap();
            writeln!(s, "replications = {}, seed = {}", r.replications, r.seed).unwrap();
            writeln!(s, "rejection rate = {:.4} (SE {:.4})", r.rejection_rate, r.std_error).unwrap();
            writeln!(s, "analytic power = {:.4}", r.analytic_power).unwrap();
            let z = r.z_discrepancy.map_or("inf".to_string(), |z| format!("{z:.2}"));
            writeln!(s, "z = {z} ({})", if r.within_3se { "within 3 SE" } else { "outside 3 SE" }).unwrap();
        }
    }
    s
}

fn anova_text(s: &mut String, r: &AnovaReport) {
    writeln!(
        s,
        "Repeated-measures ANOVA: {} group(s), {} time points, {} subjects",
        r.groups, r.times, r.subjects
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(s, "{:<16}{:>14}{:>8}{:>14}{:>12}{:>9}", "Source", "SS", "df", "MS", "F", "p").unwrap();
    for row in &r.rows {
        let (f, p) = match (row.f, row.p) {
            (Some(f), Some(p)) => (fmt_f(f), fmt_p(p)),
            _ => (String::new(), String::new()),
        };
        let ms = if row.source == Source::Total { String::new() } else { fmt_num(row.ms) };
        writeln!(
            s,
            "{:<16}{:>14}{:>8}{:>14}{:>12}{:>9}",
            row.source.label(r.groups),
            fmt_num(row.ss),
            fmt_df(row.df),
            ms,
            f,
            p
        )
        .unwrap();
    }
    if let Some(sp) = &r.sphericity {
        writeln!(s).unwrap();
        writeln!(
            s,
            "Mauchly W = {:.4}, chi-square = {:.4}, df = {}, p = {}",
            sp.mauchly_w,
            sp.chisq,
            sp.df,
            fmt_p(sp.p)
        )
        .unwrap();
        writeln!(
            s,
            "epsilon: Greenhouse-Geisser = {:.4}, Huynh-Feldt = {:.4}, lower bound = {:.4}",
            sp.eps_gg, sp.eps_hf, sp.eps_lower_bound
        )
        .unwrap();
    }
    if !r.adjusted.is_empty() {
        writeln!(s).unwrap();
        writeln!(s, "{:<16}{:<20}{:>9}{:>9}{:>10}{:>9}", "Source", "Correction", "eps", "df1", "df2", "p").unwrap();
        for a in &r.adjusted {
            writeln!(
                s,
                "{:<16}{:<20}{:>9.4}{:>9.3}{:>10.3}{:>9}",
                a.source.label(r.groups),
                a.correction.to_string(),
                a.epsilon,
                a.df1,
                a.df2,
                fmt_p(a.p)
            )
            .unwrap();
        }
    }
    if let Some(fr) = &r.friedman {
        writeln!(s).unwrap();
        writeln!(s, "Friedman chi-square = {:.4}, df = {}, p = {}", fr.statistic, fr.df, fmt_p(fr.p)).unwrap();
    }
}

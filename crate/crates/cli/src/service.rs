//! Request types and handlers shared by the command line and the HTTP API.
//! Both front ends go through these functions, so identical inputs give
//! identical reports.

use rmpower_core::mcvalidate::{estimate_power_mc, SimSpec, DEFAULT_REPLICATIONS};
use rmpower_core::power::{
    self, compute_power, minimal_detectable_effect, required_sample_size, EffectSpec, StudyDesign, TestKind,
    DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_F, DEFAULT_POWER, DEFAULT_RHO,
};
use rmpower_core::rmanova::{adjusted_pvalues, friedman_test, rm_anova, with_sphericity, Correction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvio::{parse_csv, CsvError};
use crate::report::{
    AnovaReport, CurveReport, MdeReport, PowerReport, Report, ReportBody, SampleSizeReport, SimulationReport,
};

/// Largest replication count a single simulate request may ask for unless
/// the server is configured otherwise.
pub const DEFAULT_REPLICATION_CAP: usize = 100_000;
pub const DEFAULT_CURVE_N_MAX: usize = 200;
/// Upper bound on (f, N) points in one curve request.
pub const MAX_CURVE_POINTS: usize = 100_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Core(#[from] rmpower_core::Error),
}

impl ServiceError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use rmpower_core::Error as E;
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Csv(CsvError::Data(e)) | ServiceError::Core(e) => match e {
                E::Domain { .. } => "domain",
                E::InvalidDesign(_) => "invalid_design",
                E::InvalidEffect(_) => "invalid_effect",
                E::Unsatisfiable(_) => "unsatisfiable",
                E::Data(_) => "invalid_data",
                E::ZeroVariance(_) => "zero_variance",
                E::SingularCovariance(_) => "singular_covariance",
                E::Degenerate(_) => "degenerate",
                E::NoConvergence(_) => "no_convergence",
            },
            ServiceError::Csv(_) => "csv",
        }
    }

    pub fn is_unsatisfiable(&self) -> bool {
        matches!(self, ServiceError::Core(rmpower_core::Error::Unsatisfiable(_)))
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, ServiceError::Core(rmpower_core::Error::NoConvergence(_)))
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

fn default_f() -> f64 {
    DEFAULT_F
}
fn default_rho() -> f64 {
    DEFAULT_RHO
}
fn default_eps() -> f64 {
    DEFAULT_EPSILON
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_power() -> f64 {
    DEFAULT_POWER
}
fn default_reps() -> usize {
    DEFAULT_REPLICATIONS
}
fn default_seed() -> u64 {
    1
}
fn default_n_max() -> usize {
    DEFAULT_CURVE_N_MAX
}

/// Parameters for `power`, `nsize` and `mde`. `n` is required by `power`
/// and `mde` and ignored by `nsize`; `f` is ignored by `mde`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyRequest {
    pub kind: TestKind,
    pub g: usize,
    pub t: usize,
    #[serde(default = "default_f")]
    pub f: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default)]
    pub n: Option<usize>,
}

impl StudyRequest {
    pub fn new(kind: TestKind, g: usize, t: usize) -> Self {
        StudyRequest {
            kind,
            g,
            t,
            f: DEFAULT_F,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPSILON,
            alpha: DEFAULT_ALPHA,
            power: DEFAULT_POWER,
            n: None,
        }
    }

    pub fn effect(&self) -> EffectSpec {
        EffectSpec {
            f: self.f,
            rho: self.rho,
            epsilon: self.eps,
            alpha: self.alpha,
            target_power: self.power,
        }
    }

    fn design(&self) -> ServiceResult<StudyDesign> {
        let n = self
            .n
            .ok_or_else(|| ServiceError::BadRequest("the total sample size n is required".into()))?;
        Ok(StudyDesign::new(self.g, self.t, n)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub kind: TestKind,
    pub g: usize,
    pub t: usize,
    pub f_values: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Defaults to 2g.
    #[serde(default)]
    pub n_min: Option<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Defaults to g.
    #[serde(default)]
    pub n_step: Option<usize>,
}

impl CurveRequest {
    pub fn n_values(&self) -> ServiceResult<Vec<usize>> {
        let step = self.n_step.unwrap_or(self.g).max(1);
        let lo = self.n_min.unwrap_or(2 * self.g.max(1));
        if lo > self.n_max {
            return Err(ServiceError::BadRequest(format!(
                "empty N range: n_min {lo} exceeds n_max {}",
                self.n_max
            )));
        }
        let count = (self.n_max - lo) / step + 1;
        if count.saturating_mul(self.f_values.len()) > MAX_CURVE_POINTS {
            return Err(ServiceError::BadRequest(format!(
                "curve would have more than {MAX_CURVE_POINTS} points"
            )));
        }
        Ok((lo..=self.n_max).step_by(step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub kind: TestKind,
    pub g: usize,
    pub t: usize,
    #[serde(default = "default_f")]
    pub f: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Target power, used only to choose N when `n` is absent.
    #[serde(default = "default_power")]
    pub power: f64,
    /// Defaults to the required sample size for the target power.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnovaOptions {
    pub gg: bool,
    pub hf: bool,
    pub friedman: bool,
    /// A user-supplied sphericity epsilon.
    pub eps: Option<f64>,
}

pub fn power(req: &StudyRequest) -> ServiceResult<Report> {
    let design = req.design()?;
    let effect = req.effect();
    let r = compute_power(req.kind, &design, &effect)?;
    Ok(ReportBody::Power(PowerReport {
        kind: req.kind,
        design,
        effect,
        noncentrality: r.spec,
        crit_f: r.crit_f,
        power: r.power,
    })
    .into())
}

pub fn nsize(req: &StudyRequest) -> ServiceResult<Report> {
    let effect = req.effect();
    let ss = required_sample_size(req.kind, req.g, req.t, &effect)?;
    let r = compute_power(req.kind, &StudyDesign::new(req.g, req.t, ss.n_total)?, &effect)?;
    let note = ss.allocation_differs().then(|| {
        format!(
            "a search over all integers gives N = {} (power {:.4}); N here is a multiple of g = {} so that groups are equal",
            ss.unconstrained_n, ss.unconstrained_power, req.g
        )
    });
    Ok(ReportBody::SampleSize(SampleSizeReport {
        kind: req.kind,
        groups: req.g,
        times: req.t,
        effect,
        n_total: ss.n_total,
        achieved_power: ss.achieved_power,
        noncentrality: r.spec,
        crit_f: r.crit_f,
        unconstrained_n: ss.unconstrained_n,
        unconstrained_power: ss.unconstrained_power,
        note,
    })
    .into())
}

pub fn mde(req: &StudyRequest) -> ServiceResult<Report> {
    let design = req.design()?;
    let f = minimal_detectable_effect(req.kind, &design, &req.effect())?;
    let effect = req.effect().with_f(f);
    let r = compute_power(req.kind, &design, &effect)?;
    Ok(ReportBody::Mde(MdeReport {
        kind: req.kind,
        design,
        effect,
        f,
        achieved_power: r.power,
        noncentrality: r.spec,
        crit_f: r.crit_f,
    })
    .into())
}

pub fn curve(req: &CurveRequest) -> ServiceResult<Report> {
    let ns = req.n_values()?;
    let base = EffectSpec {
        f: 0.0,
        rho: req.rho,
        epsilon: req.eps,
        alpha: req.alpha,
        target_power: DEFAULT_POWER,
    };
    let table = power::power_curve(req.kind, req.g, req.t, &base, &req.f_values, &ns)?;
    Ok(ReportBody::Curve(CurveReport {
        kind: req.kind,
        groups: req.g,
        times: req.t,
        effect: base,
        rows: table.rows,
        skipped: table.skipped,
    })
    .into())
}

pub fn anova(csv_text: &str, opts: &AnovaOptions) -> ServiceResult<Report> {
    let data = parse_csv(csv_text)?;
    let mut table = rm_anova(&data)?;
    let mut corrections = Vec::new();
    if opts.gg {
        corrections.push(Correction::GreenhouseGeisser);
    }
    if opts.hf {
        corrections.push(Correction::HuynhFeldt);
    }
    if !corrections.is_empty() {
        table = with_sphericity(table, &data, &corrections)?;
    }
    if let Some(eps) = opts.eps {
        table = adjusted_pvalues(&table, eps, Correction::Manual)?;
    }
    let friedman = if opts.friedman { Some(friedman_test(&data)?) } else { None };
    let group_labels = data.groups.iter().map(|b| b.label.clone()).collect();
    Ok(ReportBody::Anova(AnovaReport::new(table, group_labels, data.time_labels.clone(), friedman)).into())
}

pub fn simulate(req: &SimulateRequest, replication_cap: usize) -> ServiceResult<Report> {
    if req.reps > replication_cap {
        return Err(ServiceError::BadRequest(format!(
            "{} replications requested; the limit is {replication_cap}",
            req.reps
        )));
    }
    let effect = EffectSpec {
        f: req.f,
        rho: req.rho,
        epsilon: req.eps,
        alpha: req.alpha,
        target_power: req.power,
    };
    let n = match req.n {
        Some(n) => n,
        None => required_sample_size(req.kind, req.g, req.t, &effect)?.n_total,
    };
    let design = StudyDesign::new(req.g, req.t, n)?;
    let spec = SimSpec {
        replications: req.reps,
        ..SimSpec::new(req.kind, design, effect, req.seed)
    };
    let est = estimate_power_mc(&spec)?;
    Ok(ReportBody::Simulation(SimulationReport::new(req.kind, design, effect, req.seed, &est)).into())
}

//! A-priori power analysis for repeated-measures designs.
//!
//! Power is `1 - F_{lambda, df1, df2}(F^{-1}_{df1, df2}(1 - alpha))` with the
//! noncentrality and degrees of freedom depending on which of the three
//! hypotheses is tested:
//!
//! | test        | lambda                       | df1                | df2                  |
//! |-------------|------------------------------|--------------------|----------------------|
//! | between     | f² t N / (1 + (t - 1) rho)   | g - 1              | N - g                |
//! | within      | f² t N eps / (1 - rho)       | (t - 1) eps        | (N - g)(t - 1) eps   |
//! | interaction | f² t N eps / (1 - rho)       | (g - 1)(t - 1) eps | (N - g)(t - 1) eps   |
//!
//! Epsilon does not enter the between-subjects test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{f_quantile, noncentral_f_cdf, DistParams};
use crate::error::{Error, Result};

pub const DEFAULT_F: f64 = 0.25;
pub const DEFAULT_RHO: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_POWER: f64 = 0.8;

/// Which of the three repeated-measures hypotheses is being tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// Differences among group means (between-subjects factor).
    Between,
    /// Differences among time points (within-subjects factor).
    Within,
    /// Group by time interaction.
    Interaction,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Between, TestKind::Within, TestKind::Interaction];

    pub fn as_str(&self) -> &'static str {
        match self {
            TestKind::Between => "between",
            TestKind::Within => "within",
            TestKind::Interaction => "interaction",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "between" | "group" => Ok(TestKind::Between),
            "within" | "time" => Ok(TestKind::Within),
            "interaction" | "group-time" | "groupxtime" => Ok(TestKind::Interaction),
            other => Err(Error::InvalidDesign(format!(
                "unknown test kind '{other}' (expected between, within or interaction)"
            ))),
        }
    }
}

/// Number of groups, number of repeated measurements and total sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub groups: usize,
    pub times: usize,
    pub n_total: usize,
}

impl StudyDesign {
    pub fn new(groups: usize, times: usize, n_total: usize) -> Result<Self> {
        let d = StudyDesign { groups, times, n_total };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        validate_shape(self.groups, self.times)?;
        if self.n_total <= self.groups {
            return Err(Error::InvalidDesign(format!(
                "total sample size {} must exceed the number of groups {}",
                self.n_total, self.groups
            )));
        }
        Ok(())
    }

    /// Stricter check used where subjects are actually allocated: N must be a
    /// multiple of g with at least two subjects per group.
    pub fn validate_equal_allocation(&self) -> Result<()> {
        self.validate()?;
        if !self.n_total.is_multiple_of(self.groups) {
            return Err(Error::InvalidDesign(format!(
                "total sample size {} is not a multiple of {} groups",
                self.n_total, self.groups
            )));
        }
        if self.n_total < 2 * self.groups {
            return Err(Error::InvalidDesign(format!(
                "need at least 2 subjects per group, got N = {} for {} groups",
                self.n_total, self.groups
            )));
        }
        Ok(())
    }

    pub fn per_group(&self) -> usize {
        self.n_total / self.groups
    }
}

fn validate_shape(groups: usize, times: usize) -> Result<()> {
    if groups < 1 {
        return Err(Error::InvalidDesign("need at least one group".into()));
    }
    if times < 2 {
        return Err(Error::InvalidDesign(format!(
            "need at least 2 repeated measurements, got {times}"
        )));
    }
    Ok(())
}

/// Effect size, correlation, nonsphericity and error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    /// Cohen's f: between-condition SD over within-group SD.
    pub f: f64,
    /// Common correlation among the repeated measures.
    pub rho: f64,
    /// Nonsphericity correction in [1/(t-1), 1].
    pub epsilon: f64,
    pub alpha: f64,
    /// Target power, 1 - beta.
    pub target_power: f64,
}

impl Default for EffectSpec {
    fn default() -> Self {
        EffectSpec {
            f: DEFAULT_F,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            alpha: DEFAULT_ALPHA,
            target_power: DEFAULT_POWER,
        }
    }
}

impl EffectSpec {
    pub fn with_f(self, f: f64) -> Self {
        EffectSpec { f, ..self }
    }

    /// Checks every field against the constraints implied by `times`.
    pub fn validate(&self, times: usize) -> Result<()> {
        let m1 = times as f64 - 1.0;
        if !(self.f >= 0.0 && self.f.is_finite()) {
            return Err(Error::InvalidEffect(format!("f must be nonnegative, got {}", self.f)));
        }
        if !(self.rho > -1.0 / m1 && self.rho < 1.0) {
            return Err(Error::InvalidEffect(format!(
                "rho must lie in (-1/(t-1), 1) = ({:.6}, 1), got {}",
                -1.0 / m1,
                self.rho
            )));
        }
        // Small slack so that eps = 1/(t-1) typed as a decimal is accepted.
        if !(self.epsilon >= 1.0 / m1 - 1e-12 && self.epsilon <= 1.0) {
            return Err(Error::InvalidEffect(format!(
                "epsilon must lie in [1/(t-1), 1] = [{:.6}, 1], got {}",
                1.0 / m1,
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidEffect(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.target_power > 0.0 && self.target_power < 1.0) {
            return Err(Error::InvalidEffect(format!(
                "target power must lie in (0, 1), got {}",
                self.target_power
            )));
        }
        Ok(())
    }
}

/// Cohen's f from a (partial) eta squared.
pub fn f_from_eta_squared(eta_sq: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta_sq) {
        return Err(Error::InvalidEffect(format!(
            "eta squared must lie in [0, 1), got {eta_sq}"
        )));
    }
    Ok((eta_sq / (1.0 - eta_sq)).sqrt())
}

/// Noncentrality and degrees of freedom of the F test under the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncentralitySpec {
    pub lambda: f64,
    pub df1: f64,
    pub df2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub power: f64,
    pub crit_f: f64,
    pub spec: NoncentralitySpec,
}

pub fn noncentrality(
    kind: TestKind,
    design: &StudyDesign,
    eff: &EffectSpec,
) -> Result<NoncentralitySpec> {
    design.validate()?;
    eff.validate(design.times)?;
    let g = design.groups as f64;
    let t = design.times as f64;
    let n = design.n_total as f64;
    let f2 = eff.f * eff.f;
    let spec = match kind {
        TestKind::Between => NoncentralitySpec {
            lambda: f2 * t * n / (1.0 + (t - 1.0) * eff.rho),
            df1: g - 1.0,
            df2: n - g,
        },
        TestKind::Within => NoncentralitySpec {
            lambda: f2 * t * n * eff.epsilon / (1.0 - eff.rho),
            df1: (t - 1.0) * eff.epsilon,
            df2: (n - g) * (t - 1.0) * eff.epsilon,
        },
        TestKind::Interaction => NoncentralitySpec {
            lambda: f2 * t * n * eff.epsilon / (1.0 - eff.rho),
            df1: (g - 1.0) * (t - 1.0) * eff.epsilon,
            df2: (n - g) * (t - 1.0) * eff.epsilon,
        },
    };
    if spec.df1 <= 0.0 {
        return Err(Error::InvalidDesign(format!(
            "the {kind} test needs a positive numerator df (g = {}, t = {})",
            design.groups, design.times
        )));
    }
    if spec.df2 <= 0.0 {
        return Err(Error::InvalidDesign(format!(
            "the {kind} test needs a positive denominator df (N = {}, g = {})",
            design.n_total, design.groups
        )));
    }
    Ok(spec)
}

pub fn compute_power(kind: TestKind, design: &StudyDesign, eff: &EffectSpec) -> Result<PowerResult> {
    let spec = noncentrality(kind, design, eff)?;
    power_from_spec(&spec, eff.alpha)
}

/// Power of an F test with the given noncentrality at level `alpha`.
pub fn power_from_spec(spec: &NoncentralitySpec, alpha: f64) -> Result<PowerResult> {
    let crit_f = f_quantile(1.0 - alpha, &DistParams::central(spec.df1, spec.df2)?)?;
    let cdf = noncentral_f_cdf(crit_f, &DistParams::new(spec.df1, spec.df2, spec.lambda)?)?;
    Ok(PowerResult {
        power: 1.0 - cdf,
        crit_f,
        spec: *spec,
    })
}

/// Caps guarding the solvers against pathological inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverLimits {
    pub max_n: usize,
    pub max_f: f64,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            max_n: 1_000_000,
            max_f: 10.0,
        }
    }
}

/// Outcome of the sample-size search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize {
    /// Smallest equal-allocation N (a multiple of g) reaching the target.
    pub n_total: usize,
    pub achieved_power: f64,
    /// Smallest N of any size reaching the target, ignoring equal allocation.
    pub unconstrained_n: usize,
    pub unconstrained_power: f64,
}

impl SampleSize {
    /// True when a non-multiple of g would already reach the target.
    pub fn allocation_differs(&self) -> bool {
        self.unconstrained_n != self.n_total
    }
}

pub fn required_sample_size(
    kind: TestKind,
    groups: usize,
    times: usize,
    eff: &EffectSpec,
) -> Result<SampleSize> {
    required_sample_size_with(kind, groups, times, eff, &SolverLimits::default())
}

/// Smallest N = g, 2g, 3g, ... (starting at 2g) with power at least the
/// target. Power is increasing in N, so the scan is carried out as a
/// doubling search followed by bisection over the multiples of g; the answer
/// is identical to a linear scan.
pub fn required_sample_size_with(
    kind: TestKind,
    groups: usize,
    times: usize,
    eff: &EffectSpec,
    limits: &SolverLimits,
) -> Result<SampleSize> {
    validate_shape(groups, times)?;
    eff.validate(times)?;
    if eff.f <= 0.0 {
        return Err(Error::InvalidEffect("sample-size search needs f > 0".into()));
    }
    if eff.target_power <= eff.alpha {
        return Err(Error::InvalidEffect(format!(
            "target power {} must exceed alpha {}",
            eff.target_power, eff.alpha
        )));
    }
    let power_at = |n: usize| -> Result<f64> {
        let design = StudyDesign { groups, times, n_total: n };
        Ok(compute_power(kind, &design, eff)?.power)
    };
    // Probe the smallest admissible design first so invalid kinds (g = 1
    // with a group test) surface as design errors, not as unsatisfiable.
    power_at(2 * groups)?;

    let (k, achieved) = smallest_feasible(2, limits.max_n / groups, eff.target_power, |k| {
        power_at(k * groups)
    })?
    .ok_or_else(|| {
        Error::Unsatisfiable(format!(
            "power {} is not reached for N <= {} with f = {}",
            eff.target_power, limits.max_n, eff.f
        ))
    })?;
    let n_total = k * groups;

    // Any N with N - g > 0 is admissible once equal allocation is dropped.
    let (unconstrained_n, unconstrained_power) =
        smallest_feasible(groups + 1, n_total, eff.target_power, power_at)?
            .unwrap_or((n_total, achieved));

    Ok(SampleSize {
        n_total,
        achieved_power: achieved,
        unconstrained_n,
        unconstrained_power,
    })
}

/// Smallest integer in [lo, hi] whose power reaches `target`, assuming power
/// is nondecreasing.
fn smallest_feasible<F>(lo: usize, hi: usize, target: f64, power: F) -> Result<Option<(usize, f64)>>
where
    F: Fn(usize) -> Result<f64>,
{
    if hi < lo {
        return Ok(None);
    }
    let p_lo = power(lo)?;
    if p_lo >= target {
        return Ok(Some((lo, p_lo)));
    }
    // Invariant: power(below) < target.
    let mut below = lo;
    let mut step = 1usize;
    let (mut above, mut p_above) = loop {
        let probe = below.saturating_add(step).min(hi);
        let p = power(probe)?;
        if p >= target {
            break (probe, p);
        }
        if probe == hi {
            return Ok(None);
        }
        below = probe;
        step = step.saturating_mul(2);
    };
    while above - below > 1 {
        let mid = below + (above - below) / 2;
        let p = power(mid)?;
        if p >= target {
            above = mid;
            p_above = p;
        } else {
            below = mid;
        }
    }
    Ok(Some((above, p_above)))
}

pub fn minimal_detectable_effect(
    kind: TestKind,
    design: &StudyDesign,
    eff: &EffectSpec,
) -> Result<f64> {
    minimal_detectable_effect_with(kind, design, eff, &SolverLimits::default())
}

/// Smallest f whose power reaches the target at a fixed N, by bisection on
/// (0, max_f]. `eff.f` is ignored.
pub fn minimal_detectable_effect_with(
    kind: TestKind,
    design: &StudyDesign,
    eff: &EffectSpec,
    limits: &SolverLimits,
) -> Result<f64> {
    let base = eff.with_f(0.0);
    if base.target_power <= base.alpha {
        return Err(Error::InvalidEffect(format!(
            "target power {} must exceed alpha {}",
            base.target_power, base.alpha
        )));
    }
    let power_at = |f: f64| -> Result<f64> { Ok(compute_power(kind, design, &base.with_f(f))?.power) };
    let target = base.target_power;
    // Validates design and the remaining fields.
    power_at(0.0)?;
    if power_at(limits.max_f)? < target {
        return Err(Error::Unsatisfiable(format!(
            "power {target} is not reached for f <= {} at N = {}",
            limits.max_f, design.n_total
        )));
    }
    let (mut lo, mut hi) = (0.0, limits.max_f);
    let mut best = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = power_at(mid)?;
        if (p - target).abs() <= 1e-10 {
            return Ok(mid);
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
            best = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub f: f64,
    pub n_total: usize,
    pub power: f64,
}

/// A grid point the curve could not be evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub f: f64,
    pub n_total: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
    pub skipped: Vec<SkippedPoint>,
}

impl CurveTable {
    /// Distinct effect sizes in first-appearance order.
    pub fn effect_sizes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.f) {
                out.push(r.f);
            }
        }
        out
    }

    pub fn series(&self, f: f64) -> impl Iterator<Item = &CurveRow> {
        self.rows.iter().filter(move |r| r.f == f)
    }
}

/// Power at every (f, N) combination. Points that fail (for instance an N
/// too small for the design) are logged and listed in `skipped`.
pub fn power_curve(
    kind: TestKind,
    groups: usize,
    times: usize,
    base: &EffectSpec,
    f_values: &[f64],
    n_values: &[usize],
) -> Result<CurveTable> {
    if f_values.is_empty() {
        return Err(Error::InvalidEffect("power curve needs at least one effect size".into()));
    }
    if n_values.is_empty() {
        return Err(Error::InvalidDesign("power curve needs at least one sample size".into()));
    }
    validate_shape(groups, times)?;
    let mut table = CurveTable::default();
    for &f in f_values {
        for &n in n_values {
            let design = StudyDesign { groups, times, n_total: n };
            match compute_power(kind, &design, &base.with_f(f)) {
                Ok(r) => table.rows.push(CurveRow { f, n_total: n, power: r.power }),
                Err(e) => {
                    log::warn!("skipping curve point f={f}, N={n}: {e}");
                    table.skipped.push(SkippedPoint {
                        f,
                        n_total: n,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(table)
}

//! Monte Carlo check of the analytic power formulas.
//!
//! Data are drawn from the split-plot model with compound-symmetric errors
//! (unit variance, common correlation rho) and analysed with [`crate::rmanova`].
//!
//! Random streams: every replicate owns a ChaCha8 generator seeded from
//! `seed` and positioned on stream `replicate_index`, so a replicate's data
//! do not depend on which thread produced it or in what order. Normal
//! variates come from `rand_distr::StandardNormal` (ziggurat), consumed
//! subject by subject in group order: for rho >= 0 one intercept draw
//! followed by t error draws; for negative rho, t draws that are mapped
//! through the compound-symmetry square root.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::{compute_power, noncentrality, EffectSpec, StudyDesign, TestKind};
use crate::rmanova::{rm_anova, RMDataset, Source};

pub const DEFAULT_REPLICATIONS: usize = 10_000;
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: TestKind,
    pub design: StudyDesign,
    pub effect: EffectSpec,
    pub replications: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(kind: TestKind, design: StudyDesign, effect: EffectSpec, seed: u64) -> Self {
        SimSpec {
            kind,
            design,
            effect,
            replications: DEFAULT_REPLICATIONS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate_equal_allocation()?;
        // Rejects kinds the design cannot test (e.g. between with g = 1).
        noncentrality(self.kind, &self.design, &self.effect)?;
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::InvalidDesign(format!(
                "need at least {MIN_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        if self.kind != TestKind::Between && self.effect.epsilon != 1.0 {
            return Err(Error::InvalidEffect(
                "simulated data are spherical; epsilon must be 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCPowerEstimate {
    pub rejection_rate: f64,
    pub std_error: f64,
    pub analytic_power: f64,
    pub z_discrepancy: f64,
    pub rejections: u64,
    pub replications: usize,
}

impl MCPowerEstimate {
    fn from_counts(rejections: u64, replications: usize, analytic_power: f64) -> Self {
        let r = rejections as f64 / replications as f64;
        let se = (r * (1.0 - r) / replications as f64).sqrt();
        let diff = r - analytic_power;
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        MCPowerEstimate {
            rejection_rate: r,
            std_error: se,
            analytic_power,
            z_discrepancy: z,
            rejections,
            replications,
        }
    }
}

/// Centred linear ramp over `levels` points with root-mean-square 1.
fn unit_ramp(levels: usize) -> Vec<f64> {
    let centre = (levels as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..levels).map(|i| i as f64 - centre).collect();
    let rms = (raw.iter().map(|x| x * x).sum::<f64>() / levels as f64).sqrt();
    raw.into_iter().map(|x| x / rms).collect()
}

/// Cell means `[k][j]` whose effect for `kind` has root-mean-square `f`.
pub fn mean_pattern(kind: TestKind, groups: usize, times: usize, f: f64) -> Vec<Vec<f64>> {
    let mut means = vec![vec![0.0; times]; groups];
    if f == 0.0 {
        return means;
    }
    match kind {
        TestKind::Between => {
            for (row, g) in means.iter_mut().zip(unit_ramp(groups)) {
                row.iter_mut().for_each(|m| *m = f * g);
            }
        }
        TestKind::Within => {
            let ramp = unit_ramp(times);
            for row in means.iter_mut() {
                row.copy_from_slice(&ramp);
                row.iter_mut().for_each(|m| *m *= f);
            }
        }
        TestKind::Interaction => {
            // Outer product of two unit-RMS ramps has unit RMS and is doubly centred.
            let (rg, rt) = (unit_ramp(groups), unit_ramp(times));
            for (row, g) in means.iter_mut().zip(&rg) {
                for (m, t) in row.iter_mut().zip(&rt) {
                    *m = f * g * t;
                }
            }
        }
    }
    means
}

fn replicate_rng(seed: u64, replicate_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_index);
    rng
}

/// Draws one dataset. Deterministic in (spec.seed, replicate_index).
pub fn simulate_dataset(spec: &SimSpec, replicate_index: u64) -> Result<RMDataset> {
    spec.validate()?;
    Ok(simulate_unchecked(spec, replicate_index))
}

fn simulate_unchecked(spec: &SimSpec, replicate_index: u64) -> RMDataset {
    let StudyDesign { groups, times, .. } = spec.design;
    let per_group = spec.design.per_group();
    let rho = spec.effect.rho;
    let means = mean_pattern(spec.kind, groups, times, spec.effect.f);
    let mut rng = replicate_rng(spec.seed, replicate_index);
    let tf = times as f64;

    let blocks = means
        .iter()
        .map(|cell_means| {
            (0..per_group)
                .map(|_| {
                    let mut row = cell_means.clone();
                    if rho >= 0.0 {
                        let intercept: f64 = rng.sample(StandardNormal);
                        let (sd_subject, sd_error) = (rho.sqrt(), (1.0 - rho).sqrt());
                        for y in row.iter_mut() {
                            let e: f64 = rng.sample(StandardNormal);
                            *y += sd_subject * intercept + sd_error * e;
                        }
                    } else {
                        // (1 - rho) I + rho J = (1 - rho)(I - J/t) + (1 + (t - 1) rho) J/t
                        let z: Vec<f64> = (0..times).map(|_| rng.sample(StandardNormal)).collect();
                        let zbar = z.iter().sum::<f64>() / tf;
                        let (a, b) = ((1.0 - rho).sqrt(), (1.0 + (tf - 1.0) * rho).sqrt());
                        for (y, zj) in row.iter_mut().zip(&z) {
                            *y += a * (zj - zbar) + b * zbar;
                        }
                    }
                    row
                })
                .collect()
        })
        .collect();
    RMDataset::from_rows(blocks).expect("simulated layout is valid by construction")
}

fn test_source(kind: TestKind) -> Source {
    match kind {
        TestKind::Between => Source::Group,
        TestKind::Within => Source::Time,
        TestKind::Interaction => Source::GroupByTime,
    }
}

/// Share of replicates whose ANOVA p-value for `spec.kind` is below alpha,
/// compared against the analytic power.
pub fn estimate_power_mc(spec: &SimSpec) -> Result<MCPowerEstimate> {
    spec.validate()?;
    let analytic = compute_power(spec.kind, &spec.design, &spec.effect)?.power;
    let source = test_source(spec.kind);
    let alpha = spec.effect.alpha;
    let rejections = (0..spec.replications as u64)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let data = simulate_unchecked(spec, i);
            let table = rm_anova(&data)?;
            let p = table
                .row(source)
                .and_then(|r| r.p)
                .ok_or_else(|| Error::InvalidDesign(format!("no {source:?} test in this design")))?;
            Ok(u64::from(p < alpha))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(MCPowerEstimate::from_counts(rejections, spec.replications, analytic))
}

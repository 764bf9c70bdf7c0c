//! Power analysis, sample-size planning and repeated-measures ANOVA.
//!
//! * [`distributions`]: incomplete beta/gamma, central and noncentral F,
//!   chi-square.
//! * [`power`]: noncentrality for the between, within and interaction tests,
//!   power, sample-size and minimal-detectable-effect solvers, power curves.
//! * [`rmanova`]: one- and multi-sample repeated-measures ANOVA, effect
//!   decomposition, Mauchly's test, Greenhouse-Geisser / Huynh-Feldt
//!   corrections and the Friedman test.
//! * [`mcvalidate`]: Monte Carlo estimate of power under compound symmetry.

pub mod distributions;
pub mod error;
pub mod mcvalidate;
pub mod power;
pub mod rmanova;

pub use error::{DataError, Error, Result};

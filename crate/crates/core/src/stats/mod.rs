//! Statistical procedures used by the analysis stage.

pub mod anova;
pub mod dist;
pub mod heatmap;
pub mod interrater;
pub mod numeric;
pub mod permutation;
pub mod ppca;
pub mod report;
pub mod tukey;
pub mod wilcoxon;
pub mod williams;
pub mod ztest;

use serde::{Deserialize, Serialize};

/// Statistic and p-value of a single-statistic hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Degrees of freedom, when the reference distribution has one.
    pub df: Option<f64>,
    pub method: String,
}

pub use anova::{two_way_anova, AnovaRow, AnovaTable};
pub use permutation::paired_permutation_test;
pub use tukey::{tukey_hsd, TukeyComparison};
pub use williams::williams_test;
pub use ztest::two_proportion_ztest;

//! Summaries, goodness-of-fit reports and the window mollifier.

mod gof;
mod mollifier;
mod summary;

pub use gof::{
    ks_normal, ks_statistic, ks_threshold, lindeberg_diagnostic, normal_cdf, poisson_pmf, total_variation_poisson,
    TestReport,
};
pub use mollifier::{
    integrate, mollifier_antiderivative, mollifier_antiderivative_parts, mollifier_by_quadrature,
    mollifier_eval, mollifier_l1_error, mollifier_l1_error_by_quadrature, mollifier_l1_error_from_antiderivative,
};
pub use summary::{format_sample, moments, EmpiricalDistribution, MomentKind, PointEstimate, Summary};

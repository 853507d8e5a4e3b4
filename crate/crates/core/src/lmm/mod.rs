//! Linear mixed models with crossed random intercepts, fit by maximum
//! likelihood through the profiled deviance.

mod design;
mod fit;
mod optimize;
mod oracle;
mod summary;

pub use design::{
    build_design, build_design_pruned, DesignColumn, DesignLayout, DesignMatrices, GroupingFactor, ModelSpec, Term,
};
pub use fit::{
    aic, fit_ml, fit_ml_with, fit_table, profiled_loglik, FitOptions, FittedModel, PredictMode, ProfiledFit,
    RandomEffect,
};
pub use optimize::{Minimum, NelderMead};
pub use oracle::{dense_loglik_oracle, DENSE_MAX_N};
pub use summary::{parse_summary, FixedEstimate, ModelSummary, VarianceEstimate, SUMMARY_VERSION};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmmError {
    #[error("column `{0}` not found in the analysis table")]
    UnknownColumn(String),
    #[error("column `{0}` is categorical where a numeric column is required")]
    NotNumeric(String),
    #[error("column `{0}` is numeric where a grouping factor is required")]
    NotFactor(String),
    #[error("factor `{factor}` has {levels} observed level(s); at least 2 are required")]
    TooFewLevels { factor: String, levels: usize },
    #[error("fixed-effects matrix is rank deficient; aliased columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("{n} observations cannot support a model needing at least {needed}")]
    TooFewObservations { n: usize, needed: usize },
    #[error("outcome contains non-finite values")]
    NonFiniteOutcome,
    #[error("level `{level}` of factor `{factor}` was not seen when the model was fit")]
    UnseenLevel { factor: String, level: String },
    #[error("term `{0}` appears more than once")]
    DuplicateTerm(String),
    #[error("cannot parse term `{0}`")]
    InvalidTerm(String),
    #[error("penalized system is not positive definite")]
    NotPositiveDefinite,
    #[error("residual sum of squares is zero; the model fits the data exactly")]
    PerfectFit,
    #[error("dense oracle limited to n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParameterLength { expected: usize, got: usize },
    #[error("variance parameters must be finite and non-negative")]
    InvalidTheta,
    #[error("malformed model summary: {0}")]
    Summary(String),
}

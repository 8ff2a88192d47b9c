use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlannerError {
    /// Validation failure on user-supplied dimensions, constraints, or flags.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Malformed file content or an unparsable value.
    #[error("parse error: {0}")]
    Parse(String),

    /// No admissible configuration can meet the requested budgets.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Design matrix is rank-deficient; carries the dependent column names.
    #[error("singular design matrix; dependent columns: {}", .0.join(", "))]
    SingularDesign(Vec<String>),

    /// Fewer observations than coefficients to estimate.
    #[error("insufficient degrees of freedom: {n_obs} observations for {n_params} coefficients")]
    DegreesOfFreedom { n_obs: usize, n_params: usize },

    /// The data cannot pin down the requested functional form.
    #[error("unidentifiable: {0}")]
    Identifiability(String),

    /// Numerical optimization failed to reach its convergence tolerance.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    /// Exhaustive enumeration would exceed the configured candidate cap.
    #[error("search space too large: {0}")]
    SearchSpaceTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PlannerError {
    /// Process exit code used by the CLI: 2 for input/validation problems,
    /// 3 for infeasible plans, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PlannerError::InvalidInput(_)
            | PlannerError::Parse(_)
            | PlannerError::Identifiability(_)
            | PlannerError::DegreesOfFreedom { .. }
            | PlannerError::SearchSpaceTooLarge(_)
            | PlannerError::Io(_) => 2,
            PlannerError::Infeasible(_) => 3,
            PlannerError::SingularDesign(_) | PlannerError::NonConvergence(_) => 4,
        }
    }
}

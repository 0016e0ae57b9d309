use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] deep_ice::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 input error, 3 degeneracy, 4 budget or memory
    /// refusal, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use deep_ice::Error as E;
        match self {
            CliError::Input(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Core(e) => match e {
                E::Degeneracy { .. } | E::DegenerateNormal => 3,
                E::BudgetExceeded { .. }
                | E::MemoryCapExceeded { .. }
                | E::FilteringStalled { .. }
                | E::FilteringCollapse { .. } => 4,
                E::NoConfig { .. }
                | E::InvalidParams(_)
                | E::DimensionMismatch { .. }
                | E::InvalidCombination(_) => 2,
                E::CacheMiss(_) | E::MissingDots | E::OverlappingSegments(_) | E::Integrity(_) => 1,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

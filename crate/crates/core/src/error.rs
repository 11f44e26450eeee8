use thiserror::Error;

/// Errors surfaced by the particle engine.
///
/// Non-finite values abort the computation that produced them; the variants
/// carry enough context (step, particle) to locate the blow-up in a trace.
#[derive(Debug, Error)]
pub enum MfldError {
    #[error("non-finite value at step {step}, particle {particle}{}",
            context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    NonFinite {
        step: usize,
        particle: usize,
        context: Option<String>,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("step-size schedule exhausted at step {step} (sequence length {len})")]
    ScheduleExhausted { step: usize, len: usize },

    #[error("combinatorial guard: {0}")]
    CombinatorialGuard(String),
}

pub type Result<T> = std::result::Result<T, MfldError>;

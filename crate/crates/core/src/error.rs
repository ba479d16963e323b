use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("agent count must be at least {min}, got {n}")]
    TooFewAgents { n: usize, min: usize },

    #[error("agent {agent} out of range for a graph with {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },

    #[error("currency {currency} out of range for {n} agents")]
    CurrencyOutOfRange { currency: u32, n: usize },

    #[error("state has {got} entries but the graph has {expected} agents")]
    StateSizeMismatch { expected: usize, got: usize },

    #[error("graph carries no community labels")]
    MissingCommunities,

    #[error("decay rates require p_inter < p_intra, got p_intra={p_intra}, p_inter={p_inter}")]
    RatesUndefined { p_intra: f64, p_inter: f64 },

    #[error("k={k} outside [0, {n}]")]
    SuccessesOutOfRange { k: i64, n: u64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

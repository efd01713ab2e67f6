use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("initialization error: {0}")]
    Init(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown ids: {}", .0.join(", "))]
    UnknownIds(Vec<String>),

    #[error("duplicate trial ({0}, {1})")]
    DuplicateTrial(String, String),

    #[error("{} trial(s) without scores, first: {}", .0.len(), fmt_pairs(.0))]
    MissingTrials(Vec<(String, String)>),

    #[error("trial keys differ: {} only in left, {} only in right", .only_left.len(), .only_right.len())]
    KeyMismatch {
        only_left: Vec<(String, String)>,
        only_right: Vec<(String, String)>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn fmt_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .take(5)
        .map(|(m, t)| format!("{m}/{t}"))
        .collect::<Vec<_>>()
        .join(", ")
}

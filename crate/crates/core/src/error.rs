use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("position {0} is not in the tree")]
    PositionNotInTree(String),
    #[error("no image given for hole {0}")]
    MissingHoleImage(usize),
    #[error("no image given for the hole leaf at {0}")]
    MissingLeafImage(String),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("arena has {0} vertices, brute force is limited to {1}")]
    ArenaTooLarge(usize, usize),
    #[error("malformed solution: {0}")]
    MalformedSolution(String),
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("state mismatch: {0}")]
    StateMismatch(String),
    #[error("value {0} is outside 0..={1}")]
    OutOfRange(u32, u32),
    #[error("the empty profile has no hole set")]
    EmptyProfile,
    #[error("profile is not realizable: {0}")]
    ProfileNotRealizable(String),
    #[error("budget exceeded in {stage}: {detail}")]
    Budget { stage: String, detail: String },
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{0}")]
    Semantic(String),
}

impl Error {
    pub fn budget(stage: &str, detail: impl Into<String>) -> Self {
        Error::Budget { stage: stage.to_string(), detail: detail.into() }
    }
}

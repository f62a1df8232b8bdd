use std::fmt;

/// Where a validation failure was found: the entity kind plus its id or index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity(pub String);

impl Entity {
    pub fn room(index: usize) -> Self {
        Entity(format!("room {index}"))
    }

    pub fn object(instance_id: u32) -> Self {
        Entity(format!("object {instance_id}"))
    }

    pub fn connector(instance_id: u32) -> Self {
        Entity(format!("connector {instance_id}"))
    }

    pub fn layout(id: &str) -> Self {
        Entity(format!("layout '{id}'"))
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed: {message} ({entity})")]
    Validation { message: String, entity: Entity },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layout generation failed: {0}")]
    Generation(String),

    #[error("layout expansion failed: {0}")]
    Expansion(String),

    #[error("unknown id {0}")]
    UnknownId(u32),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate room {room}: {reason}")]
    DegenerateRoom { room: usize, reason: String },

    #[error("no valid poses: {0}")]
    NoValidPoses(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("oracle failed at camera scale {theta}: {message}")]
    OracleFailure { theta: f64, message: String },

    #[error("no pixel is valid in both depth sources")]
    EmptyOverlap,

    #[error("reference point set is empty")]
    EmptyReference,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn validation(message: impl Into<String>, entity: Entity) -> Self {
        Error::Validation {
            message: message.into(),
            entity,
        }
    }

    /// Process exit status used by the CLI: 1 I/O and other runtime failures,
    /// 2 parse/validation/config, 3 planning, 4 alignment.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Validation { .. } | Error::Config(_) => 2,
            Error::NoValidPoses(_) | Error::DegenerateRoom { .. } => 3,
            Error::OracleFailure { .. } => 4,
            _ => 1,
        }
    }
}

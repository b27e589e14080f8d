use std::fmt;
use std::path::PathBuf;

/// One problem found while reading or validating a panel file.
#[derive(Debug, Clone, PartialEq)]
pub enum PanelIssue {
    Header { found: String },
    Malformed { line: u64, message: String },
    Duplicate { region: String, year: i32, lines: (u64, u64) },
    OutOfBounds { line: u64, field: &'static str, message: String },
    MissingCells(Vec<(String, i32)>),
    Empty,
}

impl fmt::Display for PanelIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelIssue::Header { found } => write!(
                f,
                "header must be `region,year,sales_pc,price,gdp_pc`, found `{found}`"
            ),
            PanelIssue::Malformed { line, message } => write!(f, "line {line}: {message}"),
            PanelIssue::Duplicate { region, year, lines } => write!(
                f,
                "duplicate observation ({region}, {year}) on lines {} and {}",
                lines.0, lines.1
            ),
            PanelIssue::OutOfBounds { line, field, message } => {
                write!(f, "line {line}: field `{field}` {message}")
            }
            PanelIssue::MissingCells(cells) => {
                write!(f, "panel is not rectangular; missing cells:")?;
                for (region, year) in cells {
                    write!(f, " ({region}, {year})")?;
                }
                Ok(())
            }
            PanelIssue::Empty => write!(f, "panel has no observations"),
        }
    }
}

/// All issues collected while validating one panel file.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelErrors(pub Vec<PanelIssue>);

impl fmt::Display for PanelErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for PanelErrors {}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid panel data:\n{0}")]
    Panel(#[from] PanelErrors),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient (perfectly collinear covariates)")]
    RankDeficient,

    #[error("model pathology: {0}")]
    ModelPathology(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error is caused by the data or arguments rather than the model or the
    /// filesystem.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Panel(_) | Error::InvalidInput(_) | Error::Csv(_) | Error::Json(_))
    }

    pub fn is_pathology(&self) -> bool {
        matches!(self, Error::ModelPathology(_) | Error::RankDeficient)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

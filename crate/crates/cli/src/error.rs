use std::fmt;

/// Failure classes, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Numeric => 3,
        }
    }

    /// Prefixes the message with context, keeping the kind.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message.trim_end())
    }
}

impl From<ghostgrid::Error> for CliError {
    fn from(e: ghostgrid::Error) -> Self {
        use ghostgrid::Error as E;
        let kind = match &e {
            E::Diverged { .. } | E::NonFinite(_) | E::TotalConflict { .. } => Kind::Numeric,
            E::Config(_) => Kind::Usage,
            _ => Kind::Data,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Attaches a path to I/O and parse failures.
pub trait PathContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T>;
}

impl<T, E: Into<CliError>> PathContext<T> for std::result::Result<T, E> {
    fn at(self, path: &std::path::Path) -> Result<T> {
        self.map_err(|e| e.into().context(path.display()))
    }
}

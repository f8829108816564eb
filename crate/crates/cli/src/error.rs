use ranrec_core::Error;

/// Exit status 1 for bad inputs, 2 for failures while running.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
        }
    }

    /// Classifies a core error, prefixing `context` (usually a path).
    pub fn core(context: &str, e: Error) -> Self {
        let message = if context.is_empty() {
            e.to_string()
        } else {
            format!("{context}: {e}")
        };
        match e {
            Error::NonFinite(_)
            | Error::Degenerate(_)
            | Error::AllMasked
            | Error::UndefinedCosine => Self::Runtime(message),
            _ => Self::Validation(message),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

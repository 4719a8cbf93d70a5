use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dcone::Error),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    pub exit_code: u8,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use dcone::Error as E;
        match self {
            CliError::Config(_) | CliError::Csv(_) => 2,
            CliError::Io(_) => 2,
            CliError::NonConvergence(_) => 4,
            CliError::Core(e) => {
                let mut e = e;
                while let E::AtStep { source, .. } = e {
                    e = source;
                }
                match e {
                    E::ShootingFailed(_)
                    | E::ConeApex
                    | E::C1Mismatch { .. }
                    | E::LineSearch { .. }
                    | E::NonFinite(_)
                    | E::Degenerate(_) => 3,
                    _ => 2,
                }
            }
        }
    }

    pub fn kind(&self) -> String {
        match self {
            CliError::Config(_) => "config".into(),
            CliError::Core(e) => e.kind().into(),
            CliError::NonConvergence(_) => "non_convergence".into(),
            CliError::Io(_) => "io".into(),
            CliError::Csv(_) => "csv".into(),
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { kind: self.kind(), message: self.to_string(), exit_code: self.exit_code() }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("curve resolution {0} is too small or odd (need an even count >= 64)")]
    CurveResolution(usize),
    #[error("invalid curve spec: {0}")]
    CurveSpec(String),
    #[error("closure shooting failed: {0}")]
    ShootingFailed(String),
    #[error("unit-speed construction needs |psi'| <= 1, got max {0}")]
    NonRealSpeed(f64),
    #[error("cone evaluated at the apex (r = 0)")]
    ConeApex,
    #[error("C1 routes disagree: angular {angular}, 2-D {quadrature} (relative gap {gap:e})")]
    C1Mismatch { angular: f64, quadrature: f64, gap: f64 },
    #[error("infeasible mesh: {0}")]
    InfeasibleMesh(String),
    #[error("annulus j={j} lies below the mesh resolution (r_min = {r_min})")]
    AnnulusBelowResolution { j: u32, r_min: f64 },
    #[error("region cannot be resolved by the mesh: {0}")]
    UnresolvableRegion(String),
    #[error("mesh/curve mismatch: {0}")]
    Mismatch(String),
    #[error("field violates constraints: {0}")]
    Constraint(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line search failed after {iterations} iterations: {reason}")]
    LineSearch { iterations: usize, reason: String },
    #[error("non-finite energy encountered: {0}")]
    NonFinite(String),
    #[error("solve failed at h = {h}: {source}")]
    AtStep { h: f64, source: Box<Error> },
    #[error("insufficient data for fit: {0}")]
    InsufficientData(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CurveResolution(_) => "curve_resolution",
            Error::CurveSpec(_) => "curve_spec",
            Error::ShootingFailed(_) => "shooting_failed",
            Error::NonRealSpeed(_) => "non_real_speed",
            Error::ConeApex => "cone_apex",
            Error::C1Mismatch { .. } => "c1_mismatch",
            Error::InfeasibleMesh(_) => "infeasible_mesh",
            Error::AnnulusBelowResolution { .. } => "annulus_below_resolution",
            Error::UnresolvableRegion(_) => "unresolvable_region",
            Error::Mismatch(_) => "mismatch",
            Error::Constraint(_) => "constraint",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::LineSearch { .. } => "line_search",
            Error::NonFinite(_) => "non_finite",
            Error::AtStep { source, .. } => source.kind(),
            Error::InsufficientData(_) => "insufficient_data",
            Error::Degenerate(_) => "degenerate",
            Error::Serde(_) => "serde",
            Error::Io(_) => "io",
        }
    }
}

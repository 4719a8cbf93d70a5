use std::path::{Path, PathBuf};

use dcone::curve::{CurveFamily, CurveSpec};
use dcone::mesh::{Grading, MeshSpec};
use dcone::solve::{Continuation, SolveConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::GlobalOpts;

pub const OUTPUT_DIR_ENV: &str = "DCONE_OUTPUT_DIR";

/// Everything a run depends on. `mesh` overrides `solve.mesh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub curve: CurveSpec,
    pub mesh: MeshSpec,
    pub solve: SolveConfig,
    pub h_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Seeds the random fields and directions of `energy check`.
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curve: CurveSpec::latitude_wave(0.2, 3, 384),
            mesh: MeshSpec::geometric(96, 192),
            solve: SolveConfig { continuation: Continuation::FromPreviousH, ..SolveConfig::default() },
            h_list: (4..=9).map(|p| 2f64.powi(-p)).collect(),
            output_dir: None,
            seed: 0,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &GlobalOpts) {
        if let Some(c) = o.curve {
            self.curve.family = match c {
                crate::CurveArg::Equator => CurveFamily::Equator,
                crate::CurveArg::LatitudeWave => CurveFamily::LatitudeWave,
            };
        }
        if let Some(a) = o.amplitude {
            self.curve.amplitude = a;
        }
        if let Some(k) = o.wavenumber {
            self.curve.wavenumber = k;
        }
        if let Some(n) = o.resolution {
            self.curve.resolution = n;
        }
        if let Some(n) = o.n_r {
            self.mesh.n_r = n;
        }
        if let Some(n) = o.n_theta {
            self.mesh.n_theta = n;
        }
        if let Some(g) = o.grading {
            self.mesh.grading = match g {
                crate::GradingArg::Geometric => Grading::Geometric,
                crate::GradingArg::Uniform => Grading::Uniform,
            };
        }
        if let Some(t) = o.gradient_tolerance {
            self.solve.gradient_tolerance = t;
        }
        if let Some(n) = o.max_iterations {
            self.solve.max_iterations = n;
        }
        if let Some(c) = o.continuation {
            self.solve.continuation = match c {
                crate::ContinuationArg::Profile => Continuation::FromProfile,
                crate::ContinuationArg::Warm => Continuation::FromPreviousH,
            };
        }
        if let Some(h) = &o.h_list {
            self.h_list = h.clone();
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = Some(d.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        self.solve.mesh = self.mesh;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.solve.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.mesh.n_theta == 0 || self.curve.resolution % self.mesh.n_theta != 0 {
            return Err(CliError::Config(format!(
                "curve resolution {} must be a multiple of n_theta {}",
                self.curve.resolution, self.mesh.n_theta
            )));
        }
        if let Some(&h) = self.h_list.iter().find(|&&h| !(h > 0.0 && h < 0.25)) {
            return Err(CliError::Config(format!("h = {h} outside (0, 1/4)")));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Accepts plain floats and `2^-k`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some(exp) = s.strip_prefix("2^") {
        let k: i32 = exp.parse().map_err(|_| format!("bad exponent in {s:?}"))?;
        return Ok(2f64.powi(k));
    }
    s.parse().map_err(|_| format!("not a number: {s:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_powers_of_two() {
        assert_eq!(parse_real("2^-6").unwrap(), 0.015625);
        assert_eq!(parse_real("0.25").unwrap(), 0.25);
        assert!(parse_real("2^x").is_err());
    }

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "mesh": {"n_r": 48, "n_theta": 64, "grading": "uniform"}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.mesh, MeshSpec::uniform(48, 64));
        assert_eq!(c.curve, RunConfig::default().curve);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }
}

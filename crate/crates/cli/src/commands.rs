use std::path::Path;
use std::sync::Arc;

use dcone::cone::{c1_constant, C1Report};
use dcone::curve::{validate_curve, BoundaryCurve, CurveDocument, CurveReport};
use dcone::energy::{assemble_energy, upper_bound_profile, EnergyAssembler, EnergyBreakdown, Field, FieldSnapshot};
use dcone::mesh::{build_mesh, PolarMesh, Region};
use dcone::solve::{continuation_sweep, minimize, SolveConfig, SolveResult, SolveSummary, Termination};
use dcone::study::{
    fit_log_scaling, fit_points, lemma_diagnostics, probe_core_sup, probe_mean_drift, probe_trace, CoreFamily,
    CoreSupRow, DriftFamily, DriftRow, LemmaDiagnostics, ScalingFit, TraceRow,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::check::gradient_check;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::provenance::{Envelope, Provenance};
use crate::{Cli, Command, ConeCmd, CurveCmd, EnergyCmd, MeshCmd, ProbeCmd, RegionArg};

/// Document for stdout plus an optional failure to report after printing it.
#[derive(Debug)]
pub struct Outcome {
    pub document: Value,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(document: Value) -> Self {
        Self { document, failure: None }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::load(cli.opts.config.as_deref())?;
    cfg.apply(&cli.opts);
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, cfg))
}

fn envelope<T: Serialize>(command: &str, cfg: &RunConfig, curve_hash: String, result: T) -> Result<Value, CliError> {
    let env = Envelope { command: command.to_string(), provenance: Provenance::new(cfg, curve_hash), config: cfg.clone(), result };
    serde_json::to_value(env).map_err(|e| CliError::Core(e.into()))
}

fn write_json(path: &Path, doc: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::Core(e.into()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads either a bare document or an envelope around one.
fn read_payload<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(inner) = v.get_mut("result") {
        v = inner.take();
    }
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn file_tag(h: f64) -> String {
    format!("h{h}")
}

fn dispatch(command: &Command, cfg: RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Curve { action } => curve_cmd(action, &cfg),
        Command::Cone { action: ConeCmd::C1 } => {
            let curve = cfg.curve.build::<f64>()?;
            let report: C1Report = c1_constant(&curve)?;
            Ok(Outcome::ok(envelope("cone c1", &cfg, curve.hash(), report)?))
        }
        Command::Mesh { action: MeshCmd::Info { h } } => {
            let mesh = build_mesh::<f64>(cfg.mesh, *h)?;
            Ok(Outcome::ok(envelope("mesh info", &cfg, "none".into(), mesh.summary())?))
        }
        Command::Energy { action } => energy_cmd(action, &cfg),
        Command::Solve { h } => solve_cmd(*h, &cfg),
        Command::Sweep { h_from, h_to, factor, gate, snapshots } => {
            let mut cfg = cfg;
            if h_from.is_some() || h_to.is_some() {
                cfg.h_list = geometric_list(h_from.unwrap_or(0.0625), h_to.unwrap_or(2f64.powi(-9)), *factor)?;
                cfg.validate()?;
            }
            sweep_cmd(&cfg, *gate, *snapshots)
        }
        Command::Fit { table, c1 } => {
            let (c1, hash) = reference_c1(*c1, &cfg)?;
            let rows = read_table(table)?;
            let points: Vec<(f64, f64)> =
                rows.iter().filter(|r| r.termination != Some(Termination::MaxIterations)).map(|r| (r.h, r.e_over_h2)).collect();
            let fit: ScalingFit = fit_points(&points, c1)?;
            Ok(Outcome::ok(envelope("fit", &cfg, hash, fit)?))
        }
        Command::Report { table, c1 } => {
            let (c1, hash) = reference_c1(*c1, &cfg)?;
            let report = build_report(&read_table(table)?, c1)?;
            Ok(Outcome::ok(envelope("report", &cfg, hash, report)?))
        }
        Command::Probe { action } => probe_cmd(action, &cfg),
    }
}

fn geometric_list(from: f64, to: f64, factor: f64) -> Result<Vec<f64>, CliError> {
    if !(factor > 1.0) || !(to > 0.0) || to > from {
        return Err(CliError::Config("need h_to <= h_from and factor > 1".into()));
    }
    let mut out = vec![from];
    loop {
        let next = out[out.len() - 1] / factor;
        if next < to * (1.0 - 1e-12) {
            break;
        }
        out.push(next);
    }
    Ok(out)
}

fn curve_cmd(action: &CurveCmd, cfg: &RunConfig) -> Result<Outcome, CliError> {
    #[derive(Serialize)]
    struct Validation {
        curve_hash: String,
        samples: usize,
        report: CurveReport,
    }
    match action {
        CurveCmd::Gen { out } => {
            let curve = cfg.curve.build::<f64>()?;
            let doc = envelope("curve gen", cfg, curve.hash(), curve.to_document())?;
            if let Some(path) = out {
                write_json(path, &doc)?;
            }
            Ok(Outcome::ok(doc))
        }
        CurveCmd::Validate { file } => {
            let curve = match file {
                Some(path) => BoundaryCurve::<f64>::from_document(&read_payload::<CurveDocument>(path)?)?,
                None => cfg.curve.build::<f64>()?,
            };
            let v = Validation { curve_hash: curve.hash(), samples: curve.len(), report: validate_curve(&curve) };
            Ok(Outcome::ok(envelope("curve validate", cfg, curve.hash(), v)?))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileReport {
    pub h: f64,
    pub breakdown: EnergyBreakdown,
    /// Membrane energy over `h <= r <= 1`
    pub outer_membrane: f64,
    /// Bending energy over `h <= r <= 1`
    pub outer_bending: f64,
    pub c1: f64,
    pub c1_ln_inv_h: f64,
    pub outer_bending_relative_gap: f64,
    pub e_over_h2: f64,
    /// `E/h² − C₁ ln(1/h)`
    pub upper_excess: f64,
}

pub fn profile_report(curve: &BoundaryCurve<f64>, mesh: Arc<PolarMesh<f64>>, h: f64, c1: f64) -> dcone::Result<ProfileReport> {
    let y = upper_bound_profile(curve, h, mesh.clone())?;
    let asm = EnergyAssembler::new(mesh, h)?;
    let breakdown = asm.assemble(&y)?;
    let (outer_membrane, outer_bending) = asm.restricted_energy(&y, h, 1.0)?;
    let l = (1.0 / h).ln();
    let e_over_h2 = breakdown.total / (h * h);
    Ok(ProfileReport {
        h,
        outer_membrane,
        outer_bending,
        c1,
        c1_ln_inv_h: c1 * l,
        outer_bending_relative_gap: if c1 > 0.0 { (outer_bending - c1 * l).abs() / (c1 * l) } else { outer_bending },
        e_over_h2,
        upper_excess: e_over_h2 - c1 * l,
        breakdown,
    })
}

fn energy_cmd(action: &EnergyCmd, cfg: &RunConfig) -> Result<Outcome, CliError> {
    #[derive(Serialize)]
    struct Eval {
        h: f64,
        e_over_h2: f64,
        breakdown: EnergyBreakdown,
    }
    match action {
        EnergyCmd::Eval { field, h } => {
            let snap: FieldSnapshot = read_payload(field)?;
            let y = Field::<f64>::from_snapshot(&snap)?;
            let h = h.unwrap_or(snap.mesh_h);
            let breakdown = assemble_energy(&y, h)?;
            let e = Eval { h, e_over_h2: breakdown.total / (h * h), breakdown };
            Ok(Outcome::ok(envelope("energy eval", cfg, snap.curve_hash.clone(), e)?))
        }
        EnergyCmd::Profile { h } => {
            let curve = cfg.curve.build::<f64>()?;
            let c1 = c1_constant(&curve)?.c1;
            let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, *h)?);
            let report = profile_report(&curve, mesh, *h, c1)?;
            Ok(Outcome::ok(envelope("energy profile", cfg, curve.hash(), report)?))
        }
        EnergyCmd::Check { h, fields, directions } => {
            let curve = cfg.curve.build::<f64>()?;
            let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, *h)?);
            let report = gradient_check(&curve, mesh, *h, *fields, *directions, cfg.seed)?;
            Ok(Outcome::ok(envelope("energy check", cfg, curve.hash(), report)?))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub c1: f64,
    pub e_over_h2: f64,
    pub summary: SolveSummary,
    pub diagnostics: LemmaDiagnostics,
    pub snapshot: String,
}

fn solve_cmd(h: f64, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let curve = cfg.curve.build::<f64>()?;
    let c1 = c1_constant(&curve)?.c1;
    let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, h)?);
    let y0 = upper_bound_profile(&curve, h, mesh)?;
    let res = minimize(&y0, h, &cfg.solve).map_err(|f| CliError::Core(f.error))?;
    let dir = cfg.output_dir();
    let snapshot = format!("field_{}.json", file_tag(h));
    write_json(&dir.join(&snapshot), &envelope("solve", cfg, curve.hash(), res.field.snapshot())?)?;
    let report = SolveReport {
        c1,
        e_over_h2: res.energy() / (h * h),
        summary: res.summary(),
        diagnostics: lemma_diagnostics(&res, &curve, c1)?,
        snapshot,
    };
    let doc = envelope("solve", cfg, curve.hash(), report)?;
    write_json(&dir.join(format!("solve_{}.json", file_tag(h))), &doc)?;
    let failure = (res.termination == Termination::MaxIterations)
        .then(|| CliError::NonConvergence(format!("h = {h}: iteration cap {} reached", cfg.solve.max_iterations)));
    Ok(Outcome { document: doc, failure })
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub ln_inv_h: f64,
    pub energy: f64,
    pub e_over_h2: f64,
    pub membrane: f64,
    pub bending: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub upper_excess: f64,
    pub excess: f64,
    pub profile_upper_excess: f64,
    pub sup_core: f64,
    pub sup_ratio: f64,
    /// Largest `∫_{A_{r₀}}|e|² / (r₀³h ln(1/h) + r₀²h² ln²(1/h))` over annuli with `r₀ ≥ h ln(1/h)`
    pub max_annulus_ratio: f64,
    pub membrane_over_h2: f64,
    /// `membrane / (h² ln ln(1/h))`, tracked for slow growth only
    pub membrane_growth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementGate {
    pub h: f64,
    pub base_e_over_h2: f64,
    pub refined_e_over_h2: f64,
    pub relative_change: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub c1: C1Report,
    pub rows: Vec<SweepRow>,
    pub fit: Option<ScalingFit>,
    pub fit_error: Option<String>,
    /// Largest profile excess over the sweep; the upper envelope constant.
    pub c3: f64,
    pub upper_bound_holds: bool,
    /// `−min(excess)` over converged rows; the lower envelope constant.
    pub c2: f64,
    pub gate: Option<RefinementGate>,
    pub diagnostics: Vec<LemmaDiagnostics>,
}

pub const GATE_TOLERANCE: f64 = 0.02;

pub fn sweep_rows(
    curve: &BoundaryCurve<f64>,
    results: &[SolveResult<f64>],
    c1: f64,
) -> dcone::Result<(Vec<SweepRow>, Vec<LemmaDiagnostics>)> {
    let mut rows = Vec::with_capacity(results.len());
    let mut diags = Vec::with_capacity(results.len());
    for res in results {
        let h = res.h;
        let d = lemma_diagnostics(res, curve, c1)?;
        let profile = upper_bound_profile(curve, h, res.field.mesh.clone())?;
        let l = (1.0 / h).ln();
        let profile_upper_excess = assemble_energy(&profile, h)?.total / (h * h) - c1 * l;
        rows.push(SweepRow {
            h,
            ln_inv_h: l,
            energy: res.energy(),
            e_over_h2: res.energy() / (h * h),
            membrane: res.breakdown.membrane,
            bending: res.breakdown.bending,
            iterations: res.iterations,
            termination: res.termination,
            upper_excess: d.upper_excess,
            excess: d.excess,
            profile_upper_excess,
            sup_core: d.sup_core,
            sup_ratio: d.sup_ratio,
            max_annulus_ratio: d.annulus_l2.iter().filter(|a| a.in_range).map(|a| a.ratio).fold(0.0, f64::max),
            membrane_over_h2: res.breakdown.membrane / (h * h),
            membrane_growth: res.breakdown.membrane / (h * h * l.ln()),
        });
        diags.push(d);
    }
    Ok((rows, diags))
}

/// Re-solves at `h` from the profile on the doubled mesh.
pub fn refinement_gate(curve: &BoundaryCurve<f64>, solve: &SolveConfig, h: f64, base_e_over_h2: f64) -> dcone::Result<RefinementGate> {
    let spec = solve.mesh.refined();
    let mesh = Arc::new(build_mesh::<f64>(spec, h)?);
    let y0 = upper_bound_profile(curve, h, mesh)?;
    let cfg = SolveConfig { mesh: spec, ..*solve };
    let res = minimize(&y0, h, &cfg).map_err(|f| f.error)?;
    let refined = res.energy() / (h * h);
    let relative_change = (refined - base_e_over_h2).abs() / base_e_over_h2.abs();
    Ok(RefinementGate { h, base_e_over_h2, refined_e_over_h2: refined, relative_change, passed: relative_change < GATE_TOLERANCE })
}

fn sweep_cmd(cfg: &RunConfig, gate: bool, snapshots: bool) -> Result<Outcome, CliError> {
    let curve = cfg.curve.build::<f64>()?;
    let c1 = c1_constant(&curve)?;
    let results = continuation_sweep(&curve, &cfg.h_list, &cfg.solve).map_err(|f| CliError::Core(f.error))?;
    let (rows, diagnostics) = sweep_rows(&curve, &results, c1.c1)?;
    let (fit, fit_error) = match fit_log_scaling(&results, c1.c1) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let c3 = rows.iter().map(|r| r.profile_upper_excess).fold(f64::NEG_INFINITY, f64::max);
    let upper_bound_holds = rows
        .iter()
        .filter(|r| r.termination == Termination::Converged)
        .all(|r| r.e_over_h2 <= c1.c1 * r.ln_inv_h + c3);
    let c2 = -rows
        .iter()
        .filter(|r| r.termination == Termination::Converged)
        .map(|r| r.excess)
        .fold(f64::INFINITY, f64::min);
    let gate = if gate {
        let target = 2f64.powi(-6);
        let row = rows
            .iter()
            .min_by(|a, b| (a.h.ln() - target.ln()).abs().total_cmp(&(b.h.ln() - target.ln()).abs()))
            .expect("non-empty sweep");
        Some(refinement_gate(&curve, &cfg.solve, row.h, row.e_over_h2)?)
    } else {
        None
    };
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if snapshots {
        for res in &results {
            let doc = envelope("sweep", cfg, curve.hash(), res.field.snapshot())?;
            write_json(&dir.join(format!("field_{}.json", file_tag(res.h))), &doc)?;
        }
    }
    let non_converged: Vec<f64> = rows.iter().filter(|r| r.termination == Termination::MaxIterations).map(|r| r.h).collect();
    let report = SweepReport { c1, rows, fit, fit_error, c3, upper_bound_holds, c2, gate, diagnostics };
    let doc = envelope("sweep", cfg, curve.hash(), report)?;
    write_json(&dir.join("sweep.json"), &doc)?;
    let failure = (!non_converged.is_empty()).then(|| CliError::NonConvergence(format!("iteration cap reached at h = {non_converged:?}")));
    Ok(Outcome { document: doc, failure })
}

#[derive(Debug, Clone, Deserialize)]
struct TableRow {
    h: f64,
    e_over_h2: f64,
    #[serde(default)]
    termination: Option<Termination>,
}

fn read_table(path: &Path) -> Result<Vec<TableRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<Vec<TableRow>, _>>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn reference_c1(given: Option<f64>, cfg: &RunConfig) -> Result<(f64, String), CliError> {
    match given {
        Some(c) => Ok((c, "none".into())),
        None => {
            let curve = cfg.curve.build::<f64>()?;
            Ok((c1_constant(&curve)?.c1, curve.hash()))
        }
    }
}

/// Column-oriented, one entry per table row, ready for any plotter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub c1: f64,
    pub fit: Option<ScalingFit>,
    pub h: Vec<f64>,
    pub ln_inv_h: Vec<f64>,
    pub e_over_h2: Vec<f64>,
    pub c1_ln_inv_h: Vec<f64>,
    pub upper_excess: Vec<f64>,
    pub excess: Vec<f64>,
    pub fit_line: Vec<f64>,
    pub converged: Vec<bool>,
}

fn build_report(rows: &[TableRow], c1: f64) -> Result<Report, CliError> {
    if rows.is_empty() {
        return Err(CliError::Config("empty table".into()));
    }
    let points: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.termination != Some(Termination::MaxIterations)).map(|r| (r.h, r.e_over_h2)).collect();
    let fit = fit_points(&points, c1).ok();
    let l: Vec<f64> = rows.iter().map(|r| (1.0 / r.h).ln()).collect();
    Ok(Report {
        c1,
        h: rows.iter().map(|r| r.h).collect(),
        e_over_h2: rows.iter().map(|r| r.e_over_h2).collect(),
        c1_ln_inv_h: l.iter().map(|x| c1 * x).collect(),
        upper_excess: rows.iter().zip(&l).map(|(r, x)| r.e_over_h2 - c1 * x).collect(),
        excess: rows.iter().zip(&l).map(|(r, x)| r.e_over_h2 - c1 * x + c1 * x.ln()).collect(),
        fit_line: l.iter().map(|x| fit.as_ref().map_or(f64::NAN, |f| f.slope * x + f.intercept)).collect(),
        converged: rows.iter().map(|r| r.termination != Some(Termination::MaxIterations)).collect(),
        ln_inv_h: l,
        fit,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
    /// Saturated-log ratios divided by the ratio at the largest ε.
    pub log_ratio_factors: Vec<f64>,
    pub within_factor_two: bool,
}

pub fn drift_report(rows: Vec<DriftRow>) -> DriftReport {
    let logs: Vec<&DriftRow> = rows.iter().filter(|r| r.family == DriftFamily::SaturatedLog).collect();
    let base = logs.iter().max_by(|a, b| a.eps.total_cmp(&b.eps)).map_or(f64::NAN, |r| r.ratio);
    let log_ratio_factors: Vec<f64> = logs.iter().map(|r| r.ratio / base).collect();
    let within_factor_two = log_ratio_factors.iter().all(|f| (0.5..=2.0).contains(f));
    DriftReport { rows, log_ratio_factors, within_factor_two }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceReport {
    pub rows: Vec<TraceRow>,
    pub max_trace_ratio: f64,
    pub max_grad_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoreSupReport {
    pub rows: Vec<CoreSupRow>,
    pub max_ratio: Vec<(CoreFamily, f64)>,
}

fn probe_cmd(action: &ProbeCmd, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match action {
        ProbeCmd::Drift { eps, delta } => {
            let smallest = eps.iter().copied().fold(f64::INFINITY, f64::min);
            let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, smallest.min(2f64.powi(-9)))?);
            let report = drift_report(probe_mean_drift(eps, *delta, mesh)?);
            Ok(Outcome::ok(envelope("probe drift", cfg, "none".into(), report)?))
        }
        ProbeCmd::Trace { k, region } => {
            let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, 2f64.powi(-6))?);
            let region = match region {
                RegionArg::Disk => Region::unit_disk(),
                RegionArg::Annulus => Region::dyadic(1.0),
            };
            let rows = probe_trace(k, &region, mesh)?;
            let report = TraceReport {
                max_trace_ratio: rows.iter().map(|r| r.trace_ratio).fold(0.0, f64::max),
                max_grad_ratio: rows.iter().map(|r| r.grad_ratio).fold(0.0, f64::max),
                rows,
            };
            Ok(Outcome::ok(envelope("probe trace", cfg, "none".into(), report)?))
        }
        ProbeCmd::CoreSup { h_values } => {
            let smallest = h_values.iter().copied().fold(f64::INFINITY, f64::min);
            if !(smallest > 0.0 && smallest < 0.25) {
                return Err(CliError::Config("core-sup radii must lie in (0, 1/4)".into()));
            }
            let mesh = Arc::new(build_mesh::<f64>(cfg.mesh, smallest)?);
            let rows = probe_core_sup(h_values, mesh)?;
            let max_ratio = [CoreFamily::Quadratic, CoreFamily::Linear, CoreFamily::Oscillatory]
                .into_iter()
                .map(|f| (f, rows.iter().filter(|r| r.family == f).map(|r| r.ratio).fold(0.0, f64::max)))
                .collect();
            Ok(Outcome::ok(envelope("probe core-sup", cfg, "none".into(), CoreSupReport { rows, max_ratio })?))
        }
    }
}

//! Config-driven run orchestration behind the `acl` binary: INI parsing,
//! artifact emission, and the run manifest.
//!
//! Configs are INI text: `[section]` headers, `key = value` lines, `#`
//! starts a comment anywhere, lists are comma-separated. [`parse_config`]
//! validates everything up front and reports *all* problems at once rather
//! than stopping at the first. Every run writes its artifacts as CSV
//! (`,`-separated, `\n` line endings, mandatory header row, floats printed
//! with 17 significant digits) plus a `manifest.json` recording the config,
//! the seed, per-artifact SHA-256 checksums, and wall timings. Timings live
//! only in the manifest so reruns with the same config and seed produce
//! byte-identical CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::asymptotics::{
    default_eps_schedule, default_tau_schedule, dtn_correction_from, frechet_check,
    run_epsilon_experiment, AsymptoticsError,
};
use crate::conductivity::{
    gamma_hat_direct, gamma_preset, ConductivityError, ConductivityField, GammaParams,
};
use crate::geom::{cross, dot, norm, normalize, scale, sub, Mat3, Vec3};
use crate::mesh::{BoxDomain, MeshError, SimplicialMesh};
use crate::pde::{solve_quasilinear, FluxLaw, PdeError, SolverOptions};
use crate::reconstruct::{
    assemble_gamma_hat, slice_frame, ExtractionRoute, Family1Frame, Family2Frame,
    GammaHatSlice, ReconstructError, ReconstructMode, ReconstructOptions,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid config:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Conductivity(#[from] ConductivityError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl DriverError {
    pub fn kind(&self) -> &'static str {
        match self {
            DriverError::Config(_) => "config",
            DriverError::Io { .. } => "io",
            DriverError::Mesh(_) => "mesh",
            DriverError::Conductivity(_) => "conductivity",
            DriverError::Pde(_) => "solver",
            DriverError::Asymptotics(_) => "asymptotics",
            DriverError::Reconstruct(_) => "reconstruct",
            DriverError::Manifest(_) => "manifest",
            DriverError::Pool(_) => "pool",
        }
    }
}

/// One-line machine-readable error report, printed to stderr by the binary.
pub fn error_json(subcommand: &str, err: &DriverError) -> String {
    let details = match err {
        DriverError::Config(list) => json!(list),
        _ => json!([]),
    };
    json!({
        "error": {
            "subcommand": subcommand,
            "kind": err.kind(),
            "message": err.to_string(),
            "details": details,
        }
    })
    .to_string()
}

/// Boundary datum of the p-harmonic perturbation in a linearization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi1 {
    /// φ₁ = φ₀: the derivative at φ₀ in its own direction is v₀ itself.
    Same,
    /// Real part of a normalized exponential probe, a genuinely different
    /// direction with critical points inside Ω.
    Exponential,
}

impl Phi1 {
    pub fn label(self) -> &'static str {
        match self {
            Phi1::Same => "same",
            Phi1::Exponential => "exponential",
        }
    }
}

/// Fully validated run configuration. Affine data are (a₁, a₂, a₃, b) for
/// x ↦ a·x + b on the mesh nodes.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub p: f64,
    pub seed: u64,
    /// Worker-pool size from the config; 0 lets the pool pick. The
    /// `ACL_WORKERS` environment variable overrides it at run time.
    pub workers: usize,
    pub trials: usize,
    pub domain: BoxDomain,
    pub n_per_axis: usize,
    pub preset: String,
    pub gamma: GammaParams,
    pub solver: SolverOptions,
    pub data_affine: [f64; 4],
    pub base_affine: [f64; 4],
    pub test_affine: [f64; 4],
    pub eps_list: Vec<f64>,
    pub tau_list: Vec<f64>,
    pub phi1: Phi1,
    pub xi_list: Vec<Vec3>,
    pub route: ExtractionRoute,
    pub recon: ReconstructOptions,
    /// Verbatim config text, echoed into the manifest.
    pub config_text: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p: 3.0,
            seed: 42,
            workers: 0,
            trials: 1000,
            domain: BoxDomain::centered_unit_cube(),
            n_per_axis: 9,
            preset: "constant-iso".into(),
            gamma: GammaParams::default(),
            solver: SolverOptions::default(),
            data_affine: [1.0, 0.0, 0.0, 0.0],
            base_affine: [1.0, 0.0, 0.0, 0.0],
            test_affine: [1.0, 0.0, 0.0, 0.0],
            eps_list: default_eps_schedule(),
            tau_list: default_tau_schedule(),
            phi1: Phi1::Same,
            xi_list: vec![[0.5, 0.0, 0.0]],
            route: ExtractionRoute::ExactBasis,
            recon: ReconstructOptions::default(),
            config_text: String::new(),
        }
    }
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: bool,
}

const SECTIONS: [&str; 8] = [
    "run",
    "domain",
    "gamma",
    "solver",
    "data",
    "asymptotics",
    "linearize",
    "reconstruct",
];

struct Reader {
    entries: Vec<Entry>,
    errors: Vec<String>,
}

impl Reader {
    fn parse(text: &str) -> Reader {
        let mut entries = Vec::new();
        let mut errors = Vec::new();
        let mut section: Option<String> = None;
        let mut skip_section = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let trimmed = stripped.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[') {
                match name.strip_suffix(']') {
                    Some(name) if SECTIONS.contains(&name.trim()) => {
                        section = Some(name.trim().to_string());
                        skip_section = false;
                    }
                    Some(name) => {
                        errors.push(format!(
                            "line {line}: unknown section [{}]; expected one of [{}]",
                            name.trim(),
                            SECTIONS.join("], [")
                        ));
                        skip_section = true;
                    }
                    None => {
                        errors.push(format!("line {line}: unterminated section header {trimmed:?}"));
                        skip_section = true;
                    }
                }
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                errors.push(format!("line {line}: expected `key = value`, got {trimmed:?}"));
                continue;
            };
            if skip_section {
                continue;
            }
            let Some(section) = section.clone() else {
                errors.push(format!(
                    "line {line}: key {:?} appears before any [section] header",
                    key.trim()
                ));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if let Some(prev) = entries
                .iter()
                .find(|e: &&Entry| e.section == section && e.key == key)
            {
                errors.push(format!(
                    "line {line}: [{section}] {key}: duplicate key (first set on line {})",
                    prev.line
                ));
                continue;
            }
            entries.push(Entry {
                section,
                key,
                value,
                line,
                used: false,
            });
        }
        Reader { entries, errors }
    }

    fn err(&mut self, section: &str, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("[{section}] {key}: {msg}"));
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.section == section && e.key == key)?;
        entry.used = true;
        Some(entry.value.clone())
    }

    fn f64(&mut self, section: &str, key: &str) -> Option<f64> {
        let raw = self.take(section, key)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.err(section, key, format!("expected a finite number, got {raw:?}"));
                None
            }
        }
    }

    fn u64(&mut self, section: &str, key: &str) -> Option<u64> {
        let raw = self.take(section, key)?;
        match raw.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(
                    section,
                    key,
                    format!("expected a non-negative integer, got {raw:?}"),
                );
                None
            }
        }
    }

    fn usize(&mut self, section: &str, key: &str) -> Option<usize> {
        self.u64(section, key).map(|v| v as usize)
    }

    fn bool(&mut self, section: &str, key: &str) -> Option<bool> {
        let raw = self.take(section, key)?;
        match raw.as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => {
                self.err(section, key, format!("expected true or false, got {raw:?}"));
                None
            }
        }
    }

    fn list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let raw = self.take(section, key)?;
        let mut out = Vec::new();
        for piece in raw.split(',') {
            let piece = piece.trim();
            match piece.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    self.err(
                        section,
                        key,
                        format!("expected a comma-separated list of numbers, got {piece:?}"),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }

    fn fixed<const N: usize>(&mut self, section: &str, key: &str) -> Option<[f64; N]> {
        let list = self.list(section, key)?;
        match <[f64; N]>::try_from(list.as_slice()) {
            Ok(a) => Some(a),
            Err(_) => {
                self.err(
                    section,
                    key,
                    format!("expected exactly {N} numbers, got {}", list.len()),
                );
                None
            }
        }
    }

    fn triples(&mut self, section: &str, key: &str) -> Option<Vec<Vec3>> {
        let list = self.list(section, key)?;
        if list.is_empty() || list.len() % 3 != 0 {
            self.err(
                section,
                key,
                format!(
                    "expected a nonempty list of (x, y, z) triples, got {} numbers",
                    list.len()
                ),
            );
            return None;
        }
        Some(list.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

fn check_decreasing(r: &mut Reader, section: &str, key: &str, list: &[f64], open_unit: bool) {
    if list.is_empty() {
        r.err(section, key, "list must be nonempty");
        return;
    }
    for w in list.windows(2) {
        if !(w[1] < w[0]) {
            r.err(section, key, "entries must decrease strictly");
            return;
        }
    }
    let bad = list
        .iter()
        .any(|&v| if open_unit { !(v > 0.0 && v < 1.0) } else { !(v > 0.0) });
    if bad {
        let range = if open_unit { "(0,1)" } else { "(0,∞)" };
        r.err(section, key, format!("entries must lie in {range}"));
    }
}

/// Parses and fully validates a config, reporting every problem found
/// rather than the first one.
pub fn parse_config(text: &str) -> Result<RunConfig, DriverError> {
    let mut r = Reader::parse(text);
    let mut cfg = RunConfig {
        config_text: text.to_string(),
        ..RunConfig::default()
    };

    if let Some(p) = r.f64("run", "p") {
        cfg.p = p;
    }
    if let Err(e) = FluxLaw::new(cfg.p, cfg.solver.delta) {
        r.err("run", "p", e);
    }
    if let Some(seed) = r.u64("run", "seed") {
        cfg.seed = seed;
    }
    if let Some(workers) = r.usize("run", "workers") {
        cfg.workers = workers;
    }
    if let Some(trials) = r.usize("run", "trials") {
        cfg.trials = trials;
    }
    if cfg.trials == 0 {
        r.err("run", "trials", "must be at least 1");
    }

    let lo = r.fixed::<3>("domain", "lo").unwrap_or(cfg.domain.lo);
    let hi = r.fixed::<3>("domain", "hi").unwrap_or(cfg.domain.hi);
    let dim = r.usize("domain", "dim").unwrap_or(3);
    match BoxDomain::new(lo, hi, dim) {
        Ok(domain) => cfg.domain = domain,
        Err(e) => r.err("domain", "lo/hi/dim", e),
    }
    if let Some(n) = r.usize("domain", "n_per_axis") {
        cfg.n_per_axis = n;
    }
    if cfg.n_per_axis < 2 {
        r.err("domain", "n_per_axis", "must be at least 2");
    }

    if let Some(preset) = r.take("gamma", "preset") {
        cfg.preset = preset;
    }
    const PRESETS: [&str; 4] = ["constant-iso", "constant-aniso", "bump-iso", "bump-aniso"];
    if !PRESETS.contains(&cfg.preset.as_str()) {
        r.err(
            "gamma",
            "preset",
            format!("unknown preset {:?}; expected one of {}", cfg.preset, PRESETS.join(", ")),
        );
    }
    if let Some(value) = r.f64("gamma", "value") {
        cfg.gamma.value = value;
        if !(value > 0.0) {
            r.err("gamma", "value", "must be positive");
        }
    }
    if let Some(flat) = r.fixed::<9>("gamma", "matrix") {
        let mut m: Mat3 = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = flat[3 * i + j];
            }
        }
        cfg.gamma.matrix = Some(m);
    }
    if let Some(amp) = r.f64("gamma", "amplitude") {
        cfg.gamma.amplitude = amp;
    }
    if let Some(center) = r.fixed::<3>("gamma", "center") {
        cfg.gamma.center = Some(center);
    }
    if let Some(width) = r.f64("gamma", "width") {
        cfg.gamma.width = width;
        if !(width > 0.0) {
            r.err("gamma", "width", "must be positive");
        }
    }
    if cfg.preset == "constant-aniso" && cfg.gamma.matrix.is_none() {
        r.err("gamma", "matrix", "constant-aniso requires a matrix");
    }

    if let Some(tol) = r.f64("solver", "tol") {
        cfg.solver.tol = tol;
    }
    if let Some(n) = r.usize("solver", "max_newton") {
        cfg.solver.max_newton = n;
    }
    if let Some(delta) = r.f64("solver", "delta") {
        cfg.solver.delta = delta;
    }
    if let Some(b) = r.f64("solver", "backtrack") {
        cfg.solver.backtrack = b;
    }
    if let Some(t) = r.f64("solver", "lin_tol") {
        cfg.solver.lin_tol = t;
    }
    if let Some(n) = r.usize("solver", "lin_max_iters") {
        cfg.solver.lin_max_iters = n;
    }
    if let Some(d) = r.usize("solver", "quad_degree") {
        cfg.solver.quad_degree = d;
    }
    if let Err(e) = cfg.solver.validate() {
        r.errors.push(format!("[solver] {e}"));
    }

    if let Some(a) = r.fixed::<4>("data", "affine") {
        cfg.data_affine = a;
    }
    if let Some(a) = r.fixed::<4>("asymptotics", "base_affine") {
        cfg.base_affine = a;
    }
    if let Some(a) = r.fixed::<4>("asymptotics", "test_affine") {
        cfg.test_affine = a;
    }
    if norm([cfg.base_affine[0], cfg.base_affine[1], cfg.base_affine[2]]) == 0.0 {
        r.err("asymptotics", "base_affine", "gradient part must be nonzero");
    }
    if let Some(list) = r.list("asymptotics", "eps_list") {
        cfg.eps_list = list;
    }
    check_decreasing(&mut r, "asymptotics", "eps_list", &cfg.eps_list, true);

    if let Some(list) = r.list("linearize", "tau_list") {
        cfg.tau_list = list;
    }
    check_decreasing(&mut r, "linearize", "tau_list", &cfg.tau_list, false);
    if let Some(raw) = r.take("linearize", "phi1") {
        match raw.as_str() {
            "same" => cfg.phi1 = Phi1::Same,
            "exponential" => cfg.phi1 = Phi1::Exponential,
            _ => r.err(
                "linearize",
                "phi1",
                format!("expected same or exponential, got {raw:?}"),
            ),
        }
    }

    if let Some(xis) = r.triples("reconstruct", "xi_list") {
        cfg.xi_list = xis;
    }
    for (i, xi) in cfg.xi_list.iter().enumerate() {
        if norm(*xi) == 0.0 {
            r.err("reconstruct", "xi_list", format!("frequency {i} is zero"));
        }
    }
    if let Some(ts) = r.list("reconstruct", "t_list") {
        cfg.recon.ts = ts;
    }
    if let Some(ts) = r.list("reconstruct", "t_list_end_to_end") {
        cfg.recon.ts_end_to_end = ts;
    }
    for (key, ts) in [
        ("t_list", &cfg.recon.ts),
        ("t_list_end_to_end", &cfg.recon.ts_end_to_end),
    ] {
        if ts.len() < 3 {
            r.err("reconstruct", key, "need at least 3 frame parameters");
        }
        if ts.windows(2).any(|w| !(w[0] < w[1])) || ts.iter().any(|&t| !(t > 0.0)) {
            r.err("reconstruct", key, "entries must be positive and increase strictly");
        }
    }
    if let Some(list) = r.list("reconstruct", "eps_list") {
        cfg.recon.eps_list = list;
        check_decreasing(&mut r, "reconstruct", "eps_list", &cfg.recon.eps_list, true);
    }
    if let Some(list) = r.list("reconstruct", "tau_list") {
        cfg.recon.tau_list = list;
        check_decreasing(&mut r, "reconstruct", "tau_list", &cfg.recon.tau_list, false);
    }
    if let Some(raw) = r.take("reconstruct", "route") {
        match raw.as_str() {
            "orders" => cfg.route = ExtractionRoute::Orders,
            "exact-basis" => cfg.route = ExtractionRoute::ExactBasis,
            _ => r.err(
                "reconstruct",
                "route",
                format!("expected orders or exact-basis, got {raw:?}"),
            ),
        }
    }
    if let Some(b) = r.bool("reconstruct", "richardson") {
        cfg.recon.richardson = b;
    }
    if let Some(b) = r.bool("reconstruct", "allow_small_p") {
        cfg.recon.allow_small_p = b;
    }
    if let Some(d) = r.usize("reconstruct", "fourier_degree") {
        cfg.recon.quad_degree = d;
        if d == 0 {
            r.err("reconstruct", "fourier_degree", "must be at least 1");
        }
    }
    cfg.recon.solver = cfg.solver.clone();

    for e in &r.entries {
        if !e.used {
            r.errors.push(format!(
                "line {}: [{}] {}: unknown key in [{}]",
                e.line, e.section, e.key, e.section
            ));
        }
    }
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(DriverError::Config(r.errors))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, DriverError> {
    let text = std::fs::read_to_string(path).map_err(|source| DriverError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Worker count actually used: the `ACL_WORKERS` environment variable when
/// set, otherwise the config value; 0 lets the pool pick.
pub fn resolve_workers(config_workers: usize) -> Result<usize, DriverError> {
    match std::env::var("ACL_WORKERS") {
        Ok(raw) => workers_from_env(&raw),
        Err(std::env::VarError::NotPresent) => Ok(config_workers),
        Err(e) => Err(DriverError::Config(vec![format!("ACL_WORKERS: {e}")])),
    }
}

fn workers_from_env(raw: &str) -> Result<usize, DriverError> {
    raw.trim().parse::<usize>().map_err(|_| {
        DriverError::Config(vec![format!(
            "ACL_WORKERS: expected a non-negative integer, got {raw:?}"
        )])
    })
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, DriverError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| DriverError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// 17-significant-digit float cell, the one format every CSV uses.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    /// File name relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRecord {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub code_version: String,
    pub seed: u64,
    /// Resolved worker count (config and ACL_WORKERS already applied).
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub config_text: String,
    pub resolved_config: serde_json::Value,
    pub artifacts: Vec<ArtifactRecord>,
    pub timings: Vec<TimingRecord>,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
}

fn resolved_config_json(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "run": {"p": cfg.p, "seed": cfg.seed, "workers": cfg.workers, "trials": cfg.trials},
        "domain": {
            "lo": cfg.domain.lo, "hi": cfg.domain.hi,
            "dim": cfg.domain.dim, "n_per_axis": cfg.n_per_axis,
        },
        "gamma": {
            "preset": cfg.preset, "value": cfg.gamma.value,
            "matrix": cfg.gamma.matrix, "amplitude": cfg.gamma.amplitude,
            "center": cfg.gamma.center, "width": cfg.gamma.width,
        },
        "solver": {
            "tol": cfg.solver.tol, "max_newton": cfg.solver.max_newton,
            "delta": cfg.solver.delta, "backtrack": cfg.solver.backtrack,
            "lin_tol": cfg.solver.lin_tol, "lin_max_iters": cfg.solver.lin_max_iters,
            "quad_degree": cfg.solver.quad_degree,
        },
        "data": {"affine": cfg.data_affine},
        "asymptotics": {
            "base_affine": cfg.base_affine, "test_affine": cfg.test_affine,
            "eps_list": cfg.eps_list,
        },
        "linearize": {"tau_list": cfg.tau_list, "phi1": cfg.phi1.label()},
        "reconstruct": {
            "xi_list": cfg.xi_list, "t_list": cfg.recon.ts,
            "t_list_end_to_end": cfg.recon.ts_end_to_end,
            "eps_list": cfg.recon.eps_list, "tau_list": cfg.recon.tau_list,
            "route": cfg.route.label(), "richardson": cfg.recon.richardson,
            "allow_small_p": cfg.recon.allow_small_p,
            "fourier_degree": cfg.recon.quad_degree,
        },
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), DriverError> {
    std::fs::write(path, text).map_err(|source| DriverError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Collects artifacts and timings while a run executes, then writes
/// `manifest.json` last. All file writes go through one thread.
struct ManifestBuilder {
    manifest: RunManifest,
    out_dir: PathBuf,
    started: Instant,
    phase_started: Instant,
}

impl ManifestBuilder {
    fn new(
        subcommand: &str,
        cfg: &RunConfig,
        workers: usize,
        mode: Option<&str>,
        out_dir: &Path,
    ) -> Result<ManifestBuilder, DriverError> {
        std::fs::create_dir_all(out_dir).map_err(|source| DriverError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let now = Instant::now();
        Ok(ManifestBuilder {
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                code_version: format!("acl-core {}", env!("CARGO_PKG_VERSION")),
                seed: cfg.seed,
                workers,
                mode: mode.map(str::to_string),
                config_text: cfg.config_text.clone(),
                resolved_config: resolved_config_json(cfg),
                artifacts: Vec::new(),
                timings: Vec::new(),
                summary: serde_json::Value::Null,
                warnings: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
            started: now,
            phase_started: now,
        })
    }

    fn lap(&mut self, label: &str) {
        let now = Instant::now();
        self.manifest.timings.push(TimingRecord {
            label: label.to_string(),
            seconds: now.duration_since(self.phase_started).as_secs_f64(),
        });
        self.phase_started = now;
    }

    fn warn(&mut self, warning: Option<String>) {
        if let Some(w) = warning {
            self.manifest.warnings.push(w);
        }
    }

    fn artifact(&mut self, name: &str, text: &str) -> Result<(), DriverError> {
        let file = format!("{name}.csv");
        write_text(&self.out_dir.join(&file), text)?;
        self.manifest.artifacts.push(ArtifactRecord {
            name: name.to_string(),
            path: file,
            bytes: text.len() as u64,
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(())
    }

    fn finish(mut self, summary: serde_json::Value) -> Result<RunManifest, DriverError> {
        self.manifest.summary = summary;
        self.manifest.timings.push(TimingRecord {
            label: "total".to_string(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| DriverError::Manifest(e.to_string()))?;
        write_text(&self.out_dir.join(MANIFEST_FILE), &(text + "\n"))?;
        Ok(self.manifest)
    }
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &str) -> Csv {
        Csv {
            text: format!("{header}\n"),
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// Deviation relative to the limit norm; absolute when the limit vanishes
/// (constant γ makes the remainder limit identically zero).
fn rel_to(deviation: f64, limit_norm: f64) -> f64 {
    if limit_norm > 0.0 {
        deviation / limit_norm
    } else {
        deviation
    }
}

fn affine_values(mesh: &SimplicialMesh, a: [f64; 4]) -> Vec<f64> {
    mesh.nodes
        .iter()
        .map(|&x| a[0] * x[0] + a[1] * x[1] + a[2] * x[2] + a[3])
        .collect()
}

fn build_mesh(cfg: &RunConfig) -> Result<Arc<SimplicialMesh>, DriverError> {
    Ok(Arc::new(SimplicialMesh::build(&cfg.domain, cfg.n_per_axis)?))
}

fn build_gamma(
    cfg: &RunConfig,
    mesh: &SimplicialMesh,
) -> Result<ConductivityField, DriverError> {
    Ok(gamma_preset(&cfg.preset, &cfg.gamma, mesh)?)
}

struct FrameInput {
    xi: Vec3,
    u1: Vec3,
    u2: Vec3,
    t: f64,
}

fn sample_frame_input(rng: &mut ChaCha8Rng) -> FrameInput {
    let xi = loop {
        let v: Vec3 = [
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ];
        if norm(v) >= 0.3 {
            break v;
        }
    };
    let xhat = normalize(xi);
    let u1 = loop {
        let v: Vec3 = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let w = sub(v, scale(xhat, dot(v, xhat)));
        if norm(w) >= 1e-2 {
            break normalize(w);
        }
    };
    let u2 = cross(xhat, u1);
    let t = rng.gen_range(0.5..12.0);
    FrameInput { xi, u1, u2, t }
}

/// Residuals of one sampled frame pair; every entry is scale-free.
fn frame_residuals(p: f64, input: &FrameInput) -> Result<[f64; 6], ReconstructError> {
    let f1 = Family1Frame::new(p, input.xi, input.u1, input.u2, input.t)?;
    let pair_scale = 1.0 + norm(input.xi) + input.t;
    let mut pair_gap = 0.0f64;
    for i in 0..3 {
        let s = f1.zeta_plus[i] + f1.zeta_minus[i];
        let gap = s.re.abs().max((s.im - 2.0 * input.xi[i]).abs());
        pair_gap = pair_gap.max(gap / pair_scale);
    }

    let f2 = Family2Frame::new(p, input.xi, input.u1, input.u2, input.t)?;
    let q = dot(input.xi, input.xi);
    let kk = 2.0 * (p - 1.0) / p;
    let ct = (1.0 / p).sqrt();
    let closed = Complex64::new(
        0.0,
        2.0 * (p - 2.0) * norm(input.xi) * ct * (input.t * input.t - 2.0 * q * kk),
    );
    let quad_gap = (f2.r_term_coefficient() - closed).norm() / closed.norm().max(1.0);

    Ok([
        f1.nullity_residual(),
        f1.bracket_residual(),
        pair_gap,
        f2.nullity_residual(),
        f2.angle_residual(),
        quad_gap,
    ])
}

const VERIFY_CHECKS: [(&str, &str); 6] = [
    ("family-1", "symbol-nullity"),
    ("family-1", "r-term-bracket"),
    ("family-1", "conjugate-pair-sum"),
    ("family-2", "symbol-nullity"),
    ("family-2", "angle-condition"),
    ("family-2", "r-term-quadratic"),
];

pub const VERIFY_BOUND: f64 = 1e-10;

/// Random-frame identity checks: draws admissible probe frames and records
/// the worst residual of every closed-form identity per exponent and family.
/// Returns the residual table and its summary without touching the disk.
pub fn verify_algebra_table(
    cfg: &RunConfig,
) -> Result<(String, serde_json::Value), DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs: Vec<FrameInput> = (0..cfg.trials).map(|_| sample_frame_input(&mut rng)).collect();

    let mut exponents = vec![1.5, 3.0, 4.0];
    if !exponents.contains(&cfg.p) {
        exponents.push(cfg.p);
        exponents.sort_by(f64::total_cmp);
    }

    let mut csv = Csv::new("family,p,trials,check,max_residual");
    let mut global_max = 0.0f64;
    for &p in &exponents {
        let per_trial: Vec<[f64; 6]> = with_pool(workers, || {
            use rayon::prelude::*;
            inputs
                .par_iter()
                .map(|input| frame_residuals(p, input))
                .collect::<Result<_, _>>()
        })??;
        let mut maxima = [0.0f64; 6];
        for row in &per_trial {
            for (m, &v) in maxima.iter_mut().zip(row) {
                *m = m.max(v);
            }
        }
        for ((family, check), &value) in VERIFY_CHECKS.iter().zip(&maxima) {
            global_max = global_max.max(value);
            csv.row(&[
                family.to_string(),
                csv_float(p),
                cfg.trials.to_string(),
                check.to_string(),
                csv_float(value),
            ]);
        }
    }
    let summary = json!({
        "trials": cfg.trials,
        "exponents": exponents,
        "bound": VERIFY_BOUND,
        "max_residual": global_max,
        "pass": global_max <= VERIFY_BOUND,
    });
    Ok((csv.text, summary))
}

/// [`verify_algebra_table`] plus the artifact and manifest files.
pub fn run_verify_algebra(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut mb = ManifestBuilder::new("verify-algebra", cfg, workers, None, out_dir)?;
    let (table, summary) = verify_algebra_table(cfg)?;
    mb.lap("evaluate");
    mb.artifact("residuals", &table)?;
    mb.lap("write");
    mb.finish(summary)
}

/// One forward solve of the quasilinear problem with affine boundary data.
pub fn run_solve(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut mb = ManifestBuilder::new("solve", cfg, workers, None, out_dir)?;
    let mesh = build_mesh(cfg)?;
    let gamma = build_gamma(cfg, &mesh)?;
    let data = affine_values(&mesh, cfg.data_affine);
    let sol = with_pool(workers, || {
        solve_quasilinear(&gamma, &mesh, cfg.p, &data, &cfg.solver)
    })??;
    mb.lap("solve");

    let mut solution = Csv::new("node,x,y,z,value");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, (&x, &u)) in mesh.nodes.iter().zip(&sol.field.values).enumerate() {
        lo = lo.min(u);
        hi = hi.max(u);
        solution.row(&[
            i.to_string(),
            csv_float(x[0]),
            csv_float(x[1]),
            csv_float(x[2]),
            csv_float(u),
        ]);
    }
    let mut newton = Csv::new("iter,residual");
    for (i, &res) in sol.residual_history.iter().enumerate() {
        newton.row(&[i.to_string(), csv_float(res)]);
    }
    let mut energy = Csv::new("iter,energy");
    for (i, &e) in sol.energy_history.iter().enumerate() {
        energy.row(&[i.to_string(), csv_float(e)]);
    }
    mb.artifact("solution", &solution.text)?;
    mb.artifact("newton", &newton.text)?;
    mb.artifact("energy", &energy.text)?;
    mb.lap("write");
    mb.finish(json!({
        "nodes": mesh.n_nodes(),
        "cells": mesh.n_cells(),
        "converged": sol.converged,
        "iterations": sol.iterations,
        "final_residual": sol.residual_history.last().copied(),
        "data_scale": sol.data_scale,
        "value_range": [lo, hi],
    }))
}

/// Amplitude-scaling experiment: forward solves along the ε schedule, the
/// Ansatz remainders against their limit, and the boundary-pairing
/// difference quotients against the volume-integral value.
pub fn run_asymptotics(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut mb = ManifestBuilder::new("asymptotics", cfg, workers, None, out_dir)?;
    let mesh = build_mesh(cfg)?;
    let gamma = build_gamma(cfg, &mesh)?;
    let v = affine_values(&mesh, cfg.base_affine);
    let exp = with_pool(workers, || {
        run_epsilon_experiment(&gamma, &mesh, cfg.p, &v, &cfg.eps_list, &cfg.solver)
    })??;
    mb.lap("forward-solves");

    let w_trace = affine_values(&mesh, cfg.test_affine);
    let corr = dtn_correction_from(&gamma, &exp, &w_trace, &cfg.solver)?;
    mb.lap("pairings");

    let mut remainders = Csv::new(
        "eps,scaled_remainder_norm,deviation_norm,relative_deviation,newton_iterations,newton_converged",
    );
    for rec in &exp.records {
        remainders.row(&[
            csv_float(rec.eps),
            csv_float(rec.scaled_remainder_norm),
            csv_float(rec.deviation_norm),
            csv_float(rel_to(rec.deviation_norm, exp.limit_norm)),
            rec.solution.iterations.to_string(),
            rec.solution.converged.to_string(),
        ]);
    }
    let mut quotients = Csv::new("eps,quotient");
    for (&eps, &q) in exp.eps_list.iter().zip(&corr.quotients) {
        quotients.row(&[csv_float(eps), csv_float(q)]);
    }
    mb.artifact("remainders", &remainders.text)?;
    mb.artifact("quotients", &quotients.text)?;
    mb.lap("write");

    let last = exp.records.last();
    mb.warn(corr.warning.clone());
    mb.finish(json!({
        "branch": exp.branch.label(),
        "limit_norm": exp.limit_norm,
        "final_scaled_remainder_norm": last.map(|r| r.scaled_remainder_norm),
        "final_relative_deviation": last.map(|r| rel_to(r.deviation_norm, exp.limit_norm)),
        "dtn": {
            "extrapolated": corr.extrapolated,
            "oracle": corr.oracle,
            "relative_gap": (corr.extrapolated - corr.oracle).abs()
                / corr.oracle.abs().max(f64::MIN_POSITIVE),
            "fit_exponent": corr.fit.as_ref().map(|f| f.q),
        },
    }))
}

fn exponential_direction(
    mesh: &SimplicialMesh,
    p: f64,
    xi: Vec3,
    t: f64,
) -> Result<Vec<f64>, DriverError> {
    let [_, e1, e2] = slice_frame(xi)?;
    let f = Family1Frame::new(p, xi, e1, e2, t)?;
    let re_dir = [f.zeta_plus[0].re, f.zeta_plus[1].re, f.zeta_plus[2].re];
    let im_dir = [f.zeta_plus[0].im, f.zeta_plus[1].im, f.zeta_plus[2].im];
    let m = mesh
        .nodes
        .iter()
        .map(|&x| dot(re_dir, x))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(mesh
        .nodes
        .iter()
        .map(|&x| (dot(re_dir, x) - m).exp() * dot(im_dir, x).cos())
        .collect())
}

/// Central-difference check of the solution map's derivative at the data
/// configured in `[data]`, in the direction configured in `[linearize]`.
pub fn run_linearize(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut mb = ManifestBuilder::new("linearize", cfg, workers, None, out_dir)?;
    let mesh = build_mesh(cfg)?;
    let phi0 = affine_values(&mesh, cfg.data_affine);
    let phi1 = match cfg.phi1 {
        Phi1::Same => phi0.clone(),
        Phi1::Exponential => {
            exponential_direction(&mesh, cfg.p, cfg.xi_list[0], cfg.recon.ts[0])?
        }
    };
    let exp = with_pool(workers, || {
        frechet_check(&mesh, cfg.p, &phi0, &phi1, &cfg.tau_list, &cfg.solver)
    })??;
    mb.lap("solves");

    let mut csv = Csv::new("tau,error,observed_order");
    for rec in &exp.records {
        csv.row(&[
            csv_float(rec.tau),
            csv_float(rec.error),
            rec.observed_order.map(csv_float).unwrap_or_default(),
        ]);
    }
    mb.artifact("quotients", &csv.text)?;
    mb.lap("write");

    let last = exp.records.last();
    mb.finish(json!({
        "phi1": cfg.phi1.label(),
        "linearized_norm": exp.linearized.c1_norm(),
        "final_error": last.map(|r| r.error),
        "final_observed_order": last.and_then(|r| r.observed_order),
    }))
}

fn frame_entry(frame: &[Vec3; 3], hat: &[[Complex64; 3]; 3], row: usize, col: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += hat[i][j] * frame[row][i] * frame[col][j];
        }
    }
    acc
}

fn slice_rows(
    slice: &GammaHatSlice,
    direct: &[[Complex64; 3]; 3],
    csv: &mut Csv,
) -> (f64, f64, f64) {
    let scale = slice
        .entries
        .iter()
        .map(|e| frame_entry(&slice.frame, direct, e.row, e.col).norm())
        .fold(0.0f64, f64::max);
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for e in &slice.entries {
        let reference = frame_entry(&slice.frame, direct, e.row, e.col);
        let abs_error = (e.value - reference).norm();
        let rel_error = abs_error / scale.max(f64::MIN_POSITIVE);
        max_abs = max_abs.max(abs_error);
        max_rel = max_rel.max(rel_error);
        csv.row(&[
            csv_float(slice.xi[0]),
            csv_float(slice.xi[1]),
            csv_float(slice.xi[2]),
            e.row.to_string(),
            e.col.to_string(),
            e.label.to_string(),
            e.provenance.label().to_string(),
            csv_float(e.value.re),
            csv_float(e.value.im),
            csv_float(reference.re),
            csv_float(reference.im),
            csv_float(abs_error),
            csv_float(rel_error),
        ]);
    }
    (scale, max_abs, max_rel)
}

/// Recovers the transform slice γ̂(2ξ) at every configured frequency and
/// compares it entrywise against direct quadrature of the known γ. The
/// `rel_error` column is normalized by the largest direct entry of the
/// slice, so it stays meaningful for entries that vanish identically.
pub fn run_reconstruct(
    cfg: &RunConfig,
    out_dir: &Path,
    mode: ReconstructMode,
) -> Result<RunManifest, DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut mb = ManifestBuilder::new("reconstruct", cfg, workers, Some(mode.label()), out_dir)?;
    let mesh = build_mesh(cfg)?;
    let gamma = build_gamma(cfg, &mesh)?;

    let slices: Vec<GammaHatSlice> = with_pool(workers, || {
        use rayon::prelude::*;
        cfg.xi_list
            .par_iter()
            .map(|&xi| assemble_gamma_hat(&gamma, &mesh, cfg.p, xi, cfg.route, mode, &cfg.recon))
            .collect::<Result<_, _>>()
    })??;
    mb.lap("slices");

    let mut slice_csv = Csv::new(
        "xi0,xi1,xi2,row,col,entry,provenance,recovered_re,recovered_im,direct_re,direct_im,abs_error,rel_error",
    );
    let mut matrix_csv = Csv::new("xi0,xi1,xi2,i,j,recovered_re,recovered_im");
    let mut per_xi = Vec::new();
    let mut worst_rel = 0.0f64;
    for slice in &slices {
        let direct = gamma_hat_direct(&gamma, &mesh, slice.k, cfg.recon.quad_degree);
        let (scale, max_abs, max_rel) = slice_rows(slice, &direct, &mut slice_csv);
        worst_rel = worst_rel.max(max_rel);
        for i in 0..3 {
            for j in 0..3 {
                matrix_csv.row(&[
                    csv_float(slice.xi[0]),
                    csv_float(slice.xi[1]),
                    csv_float(slice.xi[2]),
                    i.to_string(),
                    j.to_string(),
                    csv_float(slice.matrix[i][j].re),
                    csv_float(slice.matrix[i][j].im),
                ]);
            }
        }
        mb.warn(slice.warning.clone());
        per_xi.push(json!({
            "xi": slice.xi,
            "fit_residual": slice.residual,
            "direct_scale": scale,
            "max_abs_error": max_abs,
            "max_rel_error": max_rel,
        }));
    }
    mb.artifact("slice", &slice_csv.text)?;
    mb.artifact("matrix", &matrix_csv.text)?;
    mb.lap("write");
    mb.finish(json!({
        "mode": mode.label(),
        "route": cfg.route.label(),
        "slices": per_xi,
        "worst_rel_error": worst_rel,
    }))
}

/// Direct quadrature of the transform at k = 2ξ for every configured ξ —
/// the reference the reconstruction is judged against.
pub fn run_gamma_hat(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest, DriverError> {
    let workers = resolve_workers(cfg.workers)?;
    let mut mb = ManifestBuilder::new("gamma-hat", cfg, workers, None, out_dir)?;
    let mesh = build_mesh(cfg)?;
    let gamma = build_gamma(cfg, &mesh)?;

    let mut csv = Csv::new("xi0,xi1,xi2,k0,k1,k2,i,j,re,im");
    let mut max_abs = 0.0f64;
    for &xi in &cfg.xi_list {
        let k = scale(xi, 2.0);
        let hat = gamma_hat_direct(&gamma, &mesh, k, cfg.recon.quad_degree);
        for i in 0..3 {
            for j in 0..3 {
                max_abs = max_abs.max(hat[i][j].norm());
                csv.row(&[
                    csv_float(xi[0]),
                    csv_float(xi[1]),
                    csv_float(xi[2]),
                    csv_float(k[0]),
                    csv_float(k[1]),
                    csv_float(k[2]),
                    i.to_string(),
                    j.to_string(),
                    csv_float(hat[i][j].re),
                    csv_float(hat[i][j].im),
                ]);
            }
        }
    }
    mb.lap("quadrature");
    mb.artifact("gamma_hat", &csv.text)?;
    mb.lap("write");
    mb.finish(json!({
        "frequencies": cfg.xi_list.len(),
        "max_abs_entry": max_abs,
    }))
}

fn render_table(csv: &str, max_rows: usize) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let shown = rows.len().min(max_rows + 1);
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; n_cols];
    for row in &rows[..shown] {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in &rows[..shown] {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{cell:<width$}", width = widths[i]);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    if rows.len() > shown {
        let _ = writeln!(out, "  … ({} more rows)", rows.len() - shown);
    }
    out
}

/// Re-renders a finished run from its manifest: verifies every artifact
/// checksum, then prints the summary and the artifact tables. Nothing is
/// recomputed — a stale or tampered artifact fails the checksum step.
pub fn run_report(manifest_path: &Path) -> Result<String, DriverError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| DriverError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| DriverError::Manifest(e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let mut problems = Vec::new();
    let mut contents = Vec::new();
    for artifact in &manifest.artifacts {
        let path = dir.join(&artifact.path);
        match std::fs::read(&path) {
            Ok(bytes) => {
                let sum = sha256_hex(&bytes);
                if sum != artifact.sha256 {
                    problems.push(format!(
                        "{}: checksum mismatch (manifest {}, file {})",
                        artifact.path, artifact.sha256, sum
                    ));
                }
                contents.push(String::from_utf8_lossy(&bytes).into_owned());
            }
            Err(e) => {
                problems.push(format!("{}: {e}", artifact.path));
                contents.push(String::new());
            }
        }
    }
    if !problems.is_empty() {
        return Err(DriverError::Manifest(problems.join("; ")));
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "run: {} — {}",
        manifest.subcommand, manifest.code_version
    );
    let mode = manifest.mode.as_deref().unwrap_or("-");
    let _ = writeln!(
        out,
        "seed {}   workers {}   mode {}",
        manifest.seed, manifest.workers, mode
    );
    let _ = writeln!(out, "artifacts (checksums verified):");
    for artifact in &manifest.artifacts {
        let _ = writeln!(
            out,
            "  {}  {} bytes  sha256 {}…",
            artifact.path,
            artifact.bytes,
            &artifact.sha256[..12]
        );
    }
    let _ = writeln!(out, "timings:");
    for t in &manifest.timings {
        let _ = writeln!(out, "  {}  {:.3} s", t.label, t.seconds);
    }
    if !manifest.warnings.is_empty() {
        let _ = writeln!(out, "warnings:");
        for w in &manifest.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    let _ = writeln!(out, "summary:");
    let summary =
        serde_json::to_string_pretty(&manifest.summary).map_err(|e| DriverError::Manifest(e.to_string()))?;
    for line in summary.lines() {
        let _ = writeln!(out, "  {line}");
    }
    for (artifact, content) in manifest.artifacts.iter().zip(&contents) {
        let _ = writeln!(out, "\n== {} ==", artifact.path);
        out.push_str(&render_table(content, 40));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_in_defaults() {
        let cfg = parse_config("[run]\np = 3\n").unwrap();
        assert_eq!(cfg.p, 3.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.n_per_axis, 9);
        assert_eq!(cfg.preset, "constant-iso");
        assert_eq!(cfg.route, ExtractionRoute::ExactBasis);
        assert_eq!(cfg.domain.lo, [-0.5; 3]);
        assert_eq!(cfg.phi1, Phi1::Same);
        assert!(cfg.recon.richardson);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "
# leading comment
[run]
p = 2.5          # trailing comment
seed=7

[reconstruct]
xi_list = 0.5, 0 , 0,  0, 0.5, 0
route = orders
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.p, 2.5);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.xi_list, vec![[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]]);
        assert_eq!(cfg.route, ExtractionRoute::Orders);
    }

    #[test]
    fn all_validation_errors_are_reported_together() {
        let text = "
[run]
p = 2
banana = 1
[gamma]
preset = wobbly
[asymptotics]
eps_list = 0.1, 0.2
[frobnicate]
key = 1
";
        let err = parse_config(text).unwrap_err();
        let DriverError::Config(errors) = err else {
            panic!("expected config error")
        };
        let joined = errors.join("\n");
        assert!(
            joined.contains("p must lie in (1,2)∪(2,∞), got 2"),
            "{joined}"
        );
        assert!(joined.contains("[run] banana: unknown key in [run]"), "{joined}");
        assert!(joined.contains("unknown preset \"wobbly\""), "{joined}");
        assert!(
            joined.contains("[asymptotics] eps_list: entries must decrease strictly"),
            "{joined}"
        );
        assert!(joined.contains("unknown section [frobnicate]"), "{joined}");
        assert_eq!(errors.len(), 5, "{joined}");
    }

    #[test]
    fn duplicate_and_malformed_lines_are_flagged() {
        let text = "[run]\np = 3\np = 4\nnot a key line\n";
        let DriverError::Config(errors) = parse_config(text).unwrap_err() else {
            panic!()
        };
        let joined = errors.join("\n");
        assert!(joined.contains("duplicate key (first set on line 2)"), "{joined}");
        assert!(joined.contains("expected `key = value`"), "{joined}");
    }

    #[test]
    fn float_cells_carry_seventeen_significant_digits() {
        assert_eq!(csv_float(1.0), "1.0000000000000000e0");
        assert_eq!(csv_float(-0.03125), "-3.1250000000000000e-2");
        let round_trip: f64 = csv_float(std::f64::consts::PI).parse().unwrap();
        assert_eq!(round_trip, std::f64::consts::PI);
    }

    #[test]
    fn error_json_is_machine_readable() {
        let err = DriverError::Config(vec!["[run] p: bad".into()]);
        let text = error_json("solve", &err);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["error"]["subcommand"], "solve");
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["details"][0], "[run] p: bad");
    }

    fn tiny_config(extra: &str) -> RunConfig {
        let text = format!(
            "[run]\np = 3\ntrials = 60\n[domain]\nn_per_axis = 5\n{extra}"
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn verify_algebra_writes_checksummed_residuals() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("");
        let manifest = run_verify_algebra(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.subcommand, "verify-algebra");
        assert_eq!(manifest.artifacts.len(), 1);
        let bytes = std::fs::read(dir.path().join(&manifest.artifacts[0].path)).unwrap();
        assert_eq!(sha256_hex(&bytes), manifest.artifacts[0].sha256);
        assert!(manifest.summary["pass"].as_bool().unwrap());
        assert!(manifest.summary["max_residual"].as_f64().unwrap() <= VERIFY_BOUND);
        // 3 exponents × 6 checks + header
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 19);
        assert!(text.starts_with("family,p,trials,check,max_residual\n"));
    }

    #[test]
    fn verify_algebra_is_deterministic_per_seed() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = tiny_config("");
        let a = run_verify_algebra(&cfg, dir_a.path()).unwrap();
        let b = run_verify_algebra(&cfg, dir_b.path()).unwrap();
        assert_eq!(a.artifacts[0].sha256, b.artifacts[0].sha256);

        let mut other = cfg.clone();
        other.seed = 43;
        let dir_c = tempfile::tempdir().unwrap();
        let c = run_verify_algebra(&other, dir_c.path()).unwrap();
        assert_ne!(a.artifacts[0].sha256, c.artifacts[0].sha256);
    }

    #[test]
    fn solve_run_converges_and_reports_affine_range() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("");
        let manifest = run_solve(&cfg, dir.path()).unwrap();
        assert!(manifest.summary["converged"].as_bool().unwrap());
        // Constant γ and affine data: the solution is the datum x₁ itself.
        let range = manifest.summary["value_range"].as_array().unwrap();
        assert!((range[0].as_f64().unwrap() + 0.5).abs() < 1e-9);
        assert!((range[1].as_f64().unwrap() - 0.5).abs() < 1e-9);
        let names: Vec<_> = manifest.artifacts.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["solution", "newton", "energy"]);
    }

    #[test]
    fn report_round_trips_and_rejects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("");
        let manifest = run_verify_algebra(&cfg, dir.path()).unwrap();
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let report = run_report(&manifest_path).unwrap();
        assert!(report.contains("run: verify-algebra"));
        assert!(report.contains("residuals.csv"));
        assert!(report.contains("family-2"));

        let artifact = dir.path().join(&manifest.artifacts[0].path);
        let mut bytes = std::fs::read(&artifact).unwrap();
        let n = bytes.len();
        bytes[n - 2] ^= 1;
        std::fs::write(&artifact, &bytes).unwrap();
        let err = run_report(&manifest_path).unwrap_err();
        assert!(err.to_string().contains("checksum mismatch"), "{err}");
    }

    #[test]
    fn reconstruct_oracle_run_matches_direct_quadrature() {
        let dir = tempfile::tempdir().unwrap();
        let text = "
[run]
p = 3
[domain]
n_per_axis = 5
[gamma]
preset = constant-aniso
matrix = 2, 0.3, 0, 0.3, 1, 0, 0, 0, 1
[reconstruct]
xi_list = 0.5, 0, 0
";
        let cfg = parse_config(text).unwrap();
        let manifest = run_reconstruct(&cfg, dir.path(), ReconstructMode::Oracle).unwrap();
        assert!(
            manifest.summary["worst_rel_error"].as_f64().unwrap() < 1e-8,
            "{}",
            manifest.summary
        );
        let slice = std::fs::read_to_string(dir.path().join("slice.csv")).unwrap();
        assert!(slice.contains("family-1-order-2"));
        assert!(slice.contains("family-2"));
        assert_eq!(slice.lines().count(), 7);
    }

    #[test]
    fn gamma_hat_run_vanishes_at_lattice_frequencies() {
        let dir = tempfile::tempdir().unwrap();
        let text = "
[run]
p = 3
[domain]
lo = 0, 0, 0
hi = 1, 1, 1
n_per_axis = 5
[gamma]
preset = constant-iso
value = 2
[reconstruct]
xi_list = 3.14159265358979312, 0, 0
";
        let cfg = parse_config(text).unwrap();
        let manifest = run_gamma_hat(&cfg, dir.path()).unwrap();
        // k = 2ξ = (2π, 0, 0) integrates a full period of e^{ikx} over [0,1]³.
        assert!(
            manifest.summary["max_abs_entry"].as_f64().unwrap() < 1e-12,
            "{}",
            manifest.summary
        );
    }

    #[test]
    fn workers_override_parses_strictly() {
        // The env read itself is a one-liner; mutating the process
        // environment would race the parallel runs above, so only the
        // parser is exercised here.
        assert_eq!(workers_from_env("2").unwrap(), 2);
        assert_eq!(workers_from_env(" 8 ").unwrap(), 8);
        assert!(matches!(
            workers_from_env("many").unwrap_err(),
            DriverError::Config(_)
        ));
        assert!(workers_from_env("-1").is_err());
    }
}

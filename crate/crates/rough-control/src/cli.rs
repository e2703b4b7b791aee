//! The `roughctl` experiment runner.
//!
//! Every subcommand reads a JSON configuration document (`--config`, with
//! `--set key=value` overrides), runs one experiment, and writes CSV outputs
//! plus a `manifest.json` carrying the fully resolved configuration and a
//! SHA-256 per output file. Re-running a manifest reproduces the outputs
//! byte for byte; files are written via write-then-rename so failed runs
//! leave nothing half-written.
//!
//! Exit codes: 0 success, 1 failed acceptance criteria, 2 invalid
//! configuration, 3 numerical failure, 4 I/O failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::closed_form::{
    hjb_quadratic_problem, hjb_quadratic_value, linear_target_problem, linear_target_value,
    HjbQuadraticSpec,
};
use crate::control::{dpp_solve, value_continuity_probe};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::integrate::rough_integral;
use crate::presets::{
    bump_perturbed_driver, hjb_default_lattice, CoeffPreset, IntegrandPreset, LinearTargetPreset,
    PathPreset,
};
use crate::randomize::{pathwise_consistency, sample_randomized_values, RandomizationSpec};
use crate::roughpath::{pair_stride, BrownianMode, RoughPath};
use crate::rsde::{solve_rsde, ControlLaw, NoiseBundle};

/// 17 significant digits, enough to round-trip any f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_row(fields: &[String]) -> String {
    fields.join(",")
}

// ---------------------------------------------------------------------------
// Configuration documents
// ---------------------------------------------------------------------------

fn default_t0() -> f64 {
    0.0
}
fn default_t1() -> f64 {
    1.0
}
fn default_steps() -> usize {
    64
}
fn default_refinement() -> usize {
    16
}
fn default_mode() -> String {
    "ito".into()
}
fn default_seed() -> u64 {
    42
}
fn default_paths() -> usize {
    100
}
fn default_axis_nodes() -> usize {
    101
}
fn default_controls() -> usize {
    21
}
fn default_quad() -> usize {
    5
}
fn default_alpha() -> f64 {
    0.45
}

fn parse_mode(s: &str) -> Result<BrownianMode> {
    match s {
        "ito" => Ok(BrownianMode::Ito),
        "strato" => Ok(BrownianMode::Strato),
        other => Err(Error::Config(format!("unknown brownian mode `{other}`"))),
    }
}

/// Rough-path source shared by several subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriverConfig {
    Lift {
        #[serde(default = "default_path_preset")]
        path: String,
        #[serde(default = "default_t0")]
        t0: f64,
        #[serde(default = "default_t1")]
        t1: f64,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    Brownian {
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_t0")]
        t0: f64,
        #[serde(default = "default_t1")]
        t1: f64,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_refinement")]
        refinement: usize,
        #[serde(default = "default_mode")]
        mode: String,
    },
}

fn default_path_preset() -> String {
    "linear".into()
}
fn default_dim() -> usize {
    1
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig::Lift {
            path: default_path_preset(),
            t0: 0.0,
            t1: 1.0,
            steps: default_steps(),
        }
    }
}

impl DriverConfig {
    fn build(&self) -> Result<RoughPath> {
        match self {
            DriverConfig::Lift { path, t0, t1, steps } => {
                let grid = TimeGrid::new(*t0, *t1, *steps)?;
                PathPreset::parse(path)?.lift(grid)
            }
            DriverConfig::Brownian { seed, dim, t0, t1, steps, refinement, mode } => {
                let grid = TimeGrid::new(*t0, *t1, *steps)?;
                RoughPath::brownian(*seed, *dim, grid, *refinement, parse_mode(mode)?)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    #[serde(default = "default_path_preset")]
    pub path: String,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for LiftConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
}

impl Default for BrownianConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    #[serde(default = "default_integrand")]
    pub integrand: String,
    #[serde(default)]
    pub driver: DriverConfig,
}

fn default_integrand() -> String {
    "sin-first".into()
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_coeffs")]
    pub coeffs: String,
    #[serde(default)]
    pub driver: DriverConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_solve_paths")]
    pub paths: usize,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    /// Constant control point applied at every step (empty = uncontrolled).
    #[serde(default)]
    pub control: Vec<f64>,
}

fn default_coeffs() -> String {
    "exponential-rough".into()
}
fn default_solve_paths() -> usize {
    4
}

impl Default for SolveConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppConfig {
    #[serde(default = "default_lt_preset")]
    pub preset: String,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_axis_nodes")]
    pub axis_nodes: usize,
    #[serde(default = "default_controls")]
    pub controls: usize,
    #[serde(default = "default_quad")]
    pub quad_nodes: usize,
}

fn default_lt_preset() -> String {
    "f0".into()
}

impl Default for DppConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleLinearTargetConfig {
    #[serde(default = "default_lt_preset")]
    pub preset: String,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_lt_axis")]
    pub axis_nodes: usize,
    #[serde(default = "default_controls")]
    pub controls: usize,
}

fn default_lt_axis() -> usize {
    201
}

impl Default for ExampleLinearTargetConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleHjbConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_hjb_steps")]
    pub steps: usize,
    #[serde(default = "default_axis_nodes")]
    pub axis_nodes: usize,
    #[serde(default = "default_controls")]
    pub controls: usize,
    #[serde(default = "default_quad")]
    pub quad_nodes: usize,
    #[serde(default = "default_control_cap")]
    pub control_cap: f64,
}

fn default_epsilon() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    1.0
}
fn default_hjb_steps() -> usize {
    50
}
fn default_control_cap() -> f64 {
    2.0
}

impl Default for ExampleHjbConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityProbeConfig {
    #[serde(default = "default_probe_preset")]
    pub preset: String,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_axis_nodes")]
    pub axis_nodes: usize,
    #[serde(default = "default_controls")]
    pub controls: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

fn default_probe_preset() -> String {
    "scalar-ln32".into()
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

impl Default for ContinuityProbeConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwiseCheckConfig {
    #[serde(default = "default_coeffs")]
    pub coeffs: String,
    #[serde(default = "default_meshes")]
    pub meshes: Vec<usize>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_fine_factor")]
    pub fine_factor: usize,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t1")]
    pub t1: f64,
}

fn default_meshes() -> Vec<usize> {
    vec![16, 32, 64, 128]
}
fn default_fine_factor() -> usize {
    1
}

impl Default for PathwiseCheckConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InnerValueConfig {
    /// Closed-form linear-target value.
    ClosedForm {
        #[serde(default = "default_lt_preset")]
        preset: String,
    },
    /// Full DPP solve, value read at the origin.
    Dpp {
        #[serde(default = "default_lt_preset")]
        preset: String,
        #[serde(default = "default_randomize_axis")]
        axis_nodes: usize,
        #[serde(default = "default_randomize_controls")]
        controls: usize,
    },
}

fn default_randomize_axis() -> usize {
    101
}
fn default_randomize_controls() -> usize {
    11
}

impl Default for InnerValueConfig {
    fn default() -> Self {
        InnerValueConfig::ClosedForm { preset: default_lt_preset() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizeConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_outer")]
    pub outer: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_randomize_refinement")]
    pub refinement: usize,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub inner: InnerValueConfig,
}

fn default_outer() -> usize {
    100
}
fn default_randomize_refinement() -> usize {
    1
}

impl Default for RandomizeConfig {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AcceptConfig {}

// ---------------------------------------------------------------------------
// Output collection: compute first, then write atomically
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ManifestOutput {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    config: serde_json::Value,
    outputs: Vec<ManifestOutput>,
}

struct RunOutput {
    files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn new() -> Self {
        RunOutput { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn write(self, dir: &Path, subcommand: &str, config: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            write_atomic(&dir.join(name), bytes)?;
            let mut hasher = Sha256::new();
            hasher.update(bytes);
            let digest = hasher.finalize();
            let mut hex = String::with_capacity(64);
            for b in digest {
                let _ = write!(hex, "{b:02x}");
            }
            outputs.push(ManifestOutput { file: name.clone(), sha256: hex });
        }
        let manifest = Manifest { subcommand, config, outputs };
        let mut body = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        body.push(b'\n');
        write_atomic(&dir.join("manifest.json"), &body)?;
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Config loading: documents, manifests, --set overrides
// ---------------------------------------------------------------------------

fn load_config_value(path: Option<&Path>, subcommand: &str) -> Result<serde_json::Value> {
    let Some(path) = path else {
        return Ok(serde_json::json!({}));
    };
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    // A manifest re-run: unwrap its embedded config after checking the verb.
    if let Some(obj) = value.as_object() {
        if obj.contains_key("subcommand") && obj.contains_key("config") {
            let sub = obj["subcommand"].as_str().unwrap_or_default();
            if sub != subcommand {
                return Err(Error::Config(format!(
                    "manifest was produced by `{sub}`, not `{subcommand}`"
                )));
            }
            return Ok(obj["config"].clone());
        }
    }
    Ok(value)
}

fn apply_sets(doc: &mut serde_json::Value, sets: &[String]) -> Result<()> {
    for set in sets {
        let (key, raw) = set
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set needs KEY=VALUE, got `{set}`")))?;
        let parsed: serde_json::Value =
            serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let (last, ancestors) = parts.split_last().expect("split_once gives a nonempty key");
        let mut cursor: &mut serde_json::Value = doc;
        for part in ancestors {
            if !cursor.is_object() {
                *cursor = serde_json::json!({});
            }
            cursor = cursor
                .as_object_mut()
                .expect("ensured object above")
                .entry(part.to_string())
                .or_insert(serde_json::Value::Null);
        }
        if !cursor.is_object() {
            *cursor = serde_json::json!({});
        }
        cursor
            .as_object_mut()
            .expect("ensured object above")
            .insert(last.to_string(), parsed);
    }
    Ok(())
}

fn resolve<T: serde::de::DeserializeOwned + Serialize>(
    args: &RunArgs,
    subcommand: &str,
) -> Result<(T, serde_json::Value)> {
    let mut doc = load_config_value(args.config.as_deref(), subcommand)?;
    apply_sets(&mut doc, &args.sets)?;
    let config: T =
        serde_json::from_value(doc).map_err(|e| Error::Config(format!("{subcommand}: {e}")))?;
    let resolved = serde_json::to_value(&config)
        .map_err(|e| Error::Config(format!("{subcommand}: {e}")))?;
    Ok((config, resolved))
}

// ---------------------------------------------------------------------------
// CSV renderers
// ---------------------------------------------------------------------------

fn rough_path_csv(rp: &RoughPath) -> Vec<u8> {
    let d = rp.dim();
    let mut header = vec!["k".to_string(), "t".to_string()];
    for i in 1..=d {
        header.push(format!("X_{i}"));
    }
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("XX_{i}{j}"));
        }
    }
    let mut out = String::new();
    out.push_str(&fmt_row(&header));
    out.push('\n');
    let n = rp.n_steps();
    for k in 0..=n {
        let mut row = vec![k.to_string(), fmt_f64(rp.grid().node(k))];
        for i in 0..d {
            row.push(fmt_f64(rp.value(k)[i]));
        }
        // Per-step tensor of [t_k, t_{k+1}]; zeros on the final row.
        for i in 0..d {
            for j in 0..d {
                let v = if k < n { rp.level2_step(k)[(i, j)] } else { 0.0 };
                row.push(fmt_f64(v));
            }
        }
        out.push_str(&fmt_row(&row));
        out.push('\n');
    }
    out.into_bytes()
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

fn run_lift(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<LiftConfig>(args, "lift")?;
    let grid = TimeGrid::new(config.t0, config.t1, config.steps)?;
    let rp = PathPreset::parse(&config.path)?.lift(grid)?;
    let mut out = RunOutput::new();
    out.add("rough_path.csv", rough_path_csv(&rp));
    out.write(&args.out, "lift", resolved)
}

fn run_brownian(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<BrownianConfig>(args, "brownian")?;
    let grid = TimeGrid::new(config.t0, config.t1, config.steps)?;
    let rp = RoughPath::brownian(
        config.seed,
        config.dim,
        grid,
        config.refinement,
        parse_mode(&config.mode)?,
    )?;
    let mut out = RunOutput::new();
    out.add("rough_path.csv", rough_path_csv(&rp));
    out.write(&args.out, "brownian", resolved)
}

fn run_integrate(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<IntegrateConfig>(args, "integrate")?;
    let rp = config.driver.build()?;
    let cp = IntegrandPreset::parse(&config.integrand)?.build(&rp);
    let integral = rough_integral(&cp, &rp)?;
    let (m, d) = (cp.value_dim(), rp.dim());
    let mut header = vec!["k".to_string(), "t".to_string()];
    for i in 1..=m {
        for j in 1..=d {
            header.push(if d == 1 { format!("I_{i}") } else { format!("I_{i}{j}") });
        }
    }
    let mut csv = String::new();
    csv.push_str(&fmt_row(&header));
    csv.push('\n');
    for (k, val) in integral.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt_f64(rp.grid().node(k))];
        for i in 0..m {
            for j in 0..d {
                row.push(fmt_f64(val[(i, j)]));
            }
        }
        csv.push_str(&fmt_row(&row));
        csv.push('\n');
    }
    let mut out = RunOutput::new();
    out.add("integral.csv", csv.into_bytes());
    out.write(&args.out, "integrate", resolved)
}

fn run_solve(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<SolveConfig>(args, "solve")?;
    let rp = config.driver.build()?;
    let coeffs = CoeffPreset::parse(&config.coeffs)?.build();
    let y0 = match &config.y0 {
        Some(v) => DVector::from_vec(v.clone()),
        None => CoeffPreset::parse(&config.coeffs)?.default_initial_state(),
    };
    let control = ControlLaw::Constant(DVector::from_vec(config.control.clone()));
    let noise = NoiseBundle::sample(
        config.seed,
        config.paths,
        rp.n_steps(),
        coeffs.dim_b,
        rp.grid().step(),
    );
    let batch = solve_rsde(&coeffs, &control, &rp, &noise, &y0, 0)?;
    let d = coeffs.dim_y;
    let mut header = vec!["path".to_string(), "k".to_string(), "t".to_string()];
    for i in 1..=d {
        header.push(format!("Y_{i}"));
    }
    let mut csv = String::new();
    csv.push_str(&fmt_row(&header));
    csv.push('\n');
    for p in 0..batch.n_paths() {
        for k in 0..=rp.n_steps() {
            let mut row = vec![p.to_string(), k.to_string(), fmt_f64(batch.grid().node(k))];
            for i in 0..d {
                row.push(fmt_f64(batch.state(p, k)[i]));
            }
            csv.push_str(&fmt_row(&row));
            csv.push('\n');
        }
    }
    let mut out = RunOutput::new();
    out.add("trajectories.csv", csv.into_bytes());
    out.write(&args.out, "solve", resolved)
}

fn run_dpp(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<DppConfig>(args, "dpp")?;
    let preset = LinearTargetPreset::parse(&config.preset)?;
    let steps = config.steps.unwrap_or_else(|| preset.default_steps());
    let spec = preset.spec(steps);
    let rp = preset.driver(steps);
    let problem = linear_target_problem(&spec, preset.controls(config.controls)?)?;
    let lattice = preset.lattice(config.axis_nodes)?;
    let vg = dpp_solve(&problem, &rp, &lattice, config.quad_nodes)?;

    let d = spec.dim_y();
    let mut header = vec!["k".to_string()];
    for i in 1..=d {
        header.push(format!("i_{i}"));
    }
    for i in 1..=d {
        header.push(format!("y_{i}"));
    }
    header.push("V".to_string());
    header.push("policy_index".to_string());
    let mut csv = String::new();
    csv.push_str(&fmt_row(&header));
    csv.push('\n');
    let n = rp.n_steps();
    for k in 0..=n {
        for node in 0..lattice.n_nodes() {
            let multi = lattice.multi_index(node);
            let y = lattice.coord(node);
            let mut row = vec![k.to_string()];
            row.extend(multi.iter().map(|i| i.to_string()));
            for i in 0..d {
                row.push(fmt_f64(y[i]));
            }
            row.push(fmt_f64(vg.slice(k)[node]));
            // The terminal slice has no decision attached.
            row.push(if k < n { vg.policy_slice(k)[node].to_string() } else { "-1".to_string() });
            csv.push_str(&fmt_row(&row));
            csv.push('\n');
        }
    }
    let mut out = RunOutput::new();
    out.add("values.csv", csv.into_bytes());
    let resolved = attach_diagnostics(
        resolved,
        serde_json::json!({
            "boundary_hits": vg.boundary_hits(),
            "holder_pair_stride": pair_stride(n),
        }),
    );
    out.write(&args.out, "dpp", resolved)
}

fn attach_diagnostics(config: serde_json::Value, diag: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "parameters": config, "diagnostics": diag })
}

fn run_example_linear_target(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<ExampleLinearTargetConfig>(args, "example linear-target")?;
    let preset = LinearTargetPreset::parse(&config.preset)?;
    let steps = config.steps.unwrap_or_else(|| preset.default_steps());
    let spec = preset.spec(steps);
    let rp = preset.driver(steps);
    let closed = linear_target_value(&spec, &rp)?;
    let problem = linear_target_problem(&spec, preset.controls(config.controls)?)?;
    let lattice = preset.lattice(config.axis_nodes)?;
    let vg = dpp_solve(&problem, &rp, &lattice, 1)?;
    let dpp_val = vg.initial_value(&vec![0.0; spec.dim_y()]);
    let gap = (dpp_val - closed.value).abs();

    let mut csv = String::new();
    csv.push_str("preset,closed_form,dpp_value,abs_gap,m_t,steps,axis_nodes,controls\n");
    csv.push_str(&fmt_row(&[
        preset.name().to_string(),
        fmt_f64(closed.value),
        fmt_f64(dpp_val),
        fmt_f64(gap),
        fmt_f64(closed.m_t),
        steps.to_string(),
        config.axis_nodes.to_string(),
        config.controls.to_string(),
    ]));
    csv.push('\n');
    let mut out = RunOutput::new();
    out.add("linear_target.csv", csv.into_bytes());
    out.write(&args.out, "example linear-target", resolved)
}

fn run_example_hjb(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<ExampleHjbConfig>(args, "example hjb-quadratic")?;
    let horizon = TimeGrid::new(0.0, 1.0, config.steps)?;
    let spec = HjbQuadraticSpec {
        epsilon: config.epsilon,
        sigma: config.sigma,
        horizon,
        control_cap: config.control_cap,
    };
    let path: Vec<f64> = horizon.nodes().collect();
    let problem = hjb_quadratic_problem(&spec, &path, config.controls)?;
    let lattice = hjb_default_lattice(config.axis_nodes);
    let driver = RoughPath::lift_fn(horizon, |t| DVector::from_vec(vec![t]))?;
    let vg = dpp_solve(&problem, &driver, &lattice, config.quad_nodes)?;
    let dpp_val = vg.initial_value(&[0.0, 0.0]);
    let closed = hjb_quadratic_value(&spec, &path, 0, 0.0, 0.0)?;
    let gap = (dpp_val - closed).abs();

    let mut csv = String::new();
    csv.push_str("closed_form,dpp_value,abs_gap,epsilon,sigma,steps,axis_nodes,controls,quad_nodes\n");
    csv.push_str(&fmt_row(&[
        fmt_f64(closed),
        fmt_f64(dpp_val),
        fmt_f64(gap),
        fmt_f64(config.epsilon),
        fmt_f64(config.sigma),
        config.steps.to_string(),
        config.axis_nodes.to_string(),
        config.controls.to_string(),
        config.quad_nodes.to_string(),
    ]));
    csv.push('\n');
    let mut out = RunOutput::new();
    out.add("hjb_quadratic.csv", csv.into_bytes());
    out.write(&args.out, "example hjb-quadratic", resolved)
}

fn run_continuity_probe(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<ContinuityProbeConfig>(args, "continuity-probe")?;
    let preset = LinearTargetPreset::parse(&config.preset)?;
    let spec = preset.spec(config.steps);
    if spec.dim_x() != 1 {
        return Err(Error::Config("continuity probe needs a scalar driver preset".into()));
    }
    let rp = preset.driver(config.steps);
    let problem = linear_target_problem(&spec, preset.controls(config.controls)?)?;
    let lattice = preset.lattice(config.axis_nodes)?;
    let mut csv = String::new();
    csv.push_str("epsilon,rho_alpha,sup_dv,ratio\n");
    for &eps in &config.epsilons {
        let perturbed = bump_perturbed_driver(spec.horizon, eps)?;
        let rep = value_continuity_probe(&problem, &rp, &perturbed, &lattice, 1, config.alpha)?;
        csv.push_str(&fmt_row(&[
            fmt_f64(eps),
            fmt_f64(rep.rho),
            fmt_f64(rep.sup_dv),
            fmt_f64(rep.ratio),
        ]));
        csv.push('\n');
    }
    let mut out = RunOutput::new();
    out.add("continuity.csv", csv.into_bytes());
    let resolved = attach_diagnostics(
        resolved,
        serde_json::json!({ "holder_pair_stride": pair_stride(config.steps) }),
    );
    out.write(&args.out, "continuity-probe", resolved)
}

fn run_pathwise_check(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<PathwiseCheckConfig>(args, "pathwise-check")?;
    let coeffs = CoeffPreset::parse(&config.coeffs)?.build();
    let y0 = CoeffPreset::parse(&config.coeffs)?.default_initial_state();
    let report = pathwise_consistency(
        &coeffs,
        &DVector::zeros(coeffs.dim_a),
        (config.t0, config.t1),
        &config.meshes,
        config.paths,
        config.seed,
        config.fine_factor,
        &y0,
    )?;
    let mut csv = String::new();
    csv.push_str("n,mean_gap,paths\n");
    for (n, gap) in report.meshes.iter().zip(&report.mean_gaps) {
        csv.push_str(&fmt_row(&[n.to_string(), fmt_f64(*gap), report.n_paths.to_string()]));
        csv.push('\n');
    }
    let mut out = RunOutput::new();
    out.add("pathwise.csv", csv.into_bytes());
    out.write(&args.out, "pathwise-check", resolved)
}

fn run_randomize(args: &RunArgs) -> Result<()> {
    let (config, resolved) = resolve::<RandomizeConfig>(args, "randomize")?;
    let (preset_name, eval): (String, Arc<dyn Fn(&RoughPath) -> Result<f64> + Send + Sync>) =
        match &config.inner {
            InnerValueConfig::ClosedForm { preset } => {
                let preset = LinearTargetPreset::parse(preset)?;
                let spec = preset.spec(config.steps);
                (
                    preset.name().to_string(),
                    Arc::new(move |rp: &RoughPath| Ok(linear_target_value(&spec, rp)?.value)),
                )
            }
            InnerValueConfig::Dpp { preset, axis_nodes, controls } => {
                let preset = LinearTargetPreset::parse(preset)?;
                let spec = preset.spec(config.steps);
                let problem = linear_target_problem(&spec, preset.controls(*controls)?)?;
                let lattice = preset.lattice(*axis_nodes)?;
                let dim_y = spec.dim_y();
                (
                    preset.name().to_string(),
                    Arc::new(move |rp: &RoughPath| {
                        let vg = dpp_solve(&problem, rp, &lattice, 1)?;
                        Ok(vg.initial_value(&vec![0.0; dim_y]))
                    }),
                )
            }
        };
    let preset = LinearTargetPreset::parse(&preset_name)?;
    let spec = RandomizationSpec {
        seed: config.seed,
        n_outer: config.outer,
        grid: preset.spec(config.steps).horizon,
        dim: preset.spec(config.steps).dim_x(),
        refinement: config.refinement,
        mode: parse_mode(&config.mode)?,
    };
    let values = sample_randomized_values(&spec, move |rp| eval(rp))?;
    let mut csv = String::new();
    csv.push_str("sample,value\n");
    for (k, v) in values.samples.iter().enumerate() {
        csv.push_str(&fmt_row(&[k.to_string(), fmt_f64(*v)]));
        csv.push('\n');
    }
    let mut out = RunOutput::new();
    out.add("randomized_values.csv", csv.into_bytes());
    let resolved = attach_diagnostics(
        resolved,
        serde_json::json!({
            "mean": values.mean,
            "stderr": values.stderr,
            "min": values.min,
            "max": values.max,
        }),
    );
    out.write(&args.out, "randomize", resolved)
}

fn run_accept(args: &RunArgs) -> Result<bool> {
    let (_, resolved) = resolve::<AcceptConfig>(args, "accept")?;
    let reports = crate::acceptance::run_all();
    let mut csv = String::new();
    csv.push_str("id,name,passed,seconds,details\n");
    for r in &reports {
        println!("{}", r.line());
        csv.push_str(&fmt_row(&[
            r.id.to_string(),
            r.name.to_string(),
            r.passed.to_string(),
            format!("{:.3}", r.seconds),
            format!("\"{}\"", r.details.replace('"', "'")),
        ]));
        csv.push('\n');
    }
    let all_passed = reports.iter().all(|r| r.passed);
    let mut out = RunOutput::new();
    out.add("accept.csv", csv.into_bytes());
    out.write(&args.out, "accept", resolved)?;
    Ok(all_passed)
}

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

/// Common per-run arguments.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON configuration document, or a manifest.json from a previous run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a configuration key, e.g. --set seed=7 or --set driver.steps=64.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(
    name = "roughctl",
    about = "Rough paths, rough SDEs, and pathwise stochastic control experiments",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Canonically lift a sampled path to a level-2 rough path.
    Lift(RunArgs),
    /// Sample an Itô or Stratonovich Brownian rough path.
    Brownian(RunArgs),
    /// Rough integral of a controlled path against a driver.
    Integrate(RunArgs),
    /// Time-step a rough SDE with the Davie scheme.
    Solve(RunArgs),
    /// Backward dynamic programming for a preset control problem.
    Dpp(RunArgs),
    /// Closed-form benchmark problems.
    #[command(subcommand)]
    Example(ExampleCommand),
    /// Value response to rough-path perturbations.
    ContinuityProbe(RunArgs),
    /// Coupled Davie vs. Euler–Maruyama consistency check.
    PathwiseCheck(RunArgs),
    /// Sample randomized rough value functions over Brownian drivers.
    Randomize(RunArgs),
    /// Run the full acceptance suite.
    Accept(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum ExampleCommand {
    /// Linear-target problem: DPP vs. [1 − M_T]⁺.
    LinearTarget(RunArgs),
    /// Quadratic-cost problem: DPP vs. the explicit value function.
    HjbQuadratic(RunArgs),
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Mismatch(_) => 2,
        Error::Numerical(_) => 3,
        Error::Io(_) => 4,
    }
}

/// Run the CLI on the given argument vector; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version with a successful "error".
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Lift(a) => run_lift(a),
        Command::Brownian(a) => run_brownian(a),
        Command::Integrate(a) => run_integrate(a),
        Command::Solve(a) => run_solve(a),
        Command::Dpp(a) => run_dpp(a),
        Command::Example(ExampleCommand::LinearTarget(a)) => run_example_linear_target(a),
        Command::Example(ExampleCommand::HjbQuadratic(a)) => run_example_hjb(a),
        Command::ContinuityProbe(a) => run_continuity_probe(a),
        Command::PathwiseCheck(a) => run_pathwise_check(a),
        Command::Randomize(a) => run_randomize(a),
        Command::Accept(a) => {
            return match run_accept(a) {
                Ok(true) => 0,
                Ok(false) => 1,
                Err(e) => {
                    eprintln!("roughctl: {e}");
                    exit_code_for(&e)
                }
            };
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("roughctl: {e}");
            exit_code_for(&e)
        }
    }
}

// ---------------------------------------------------------------------------
// Reproducibility check (acceptance criterion)
// ---------------------------------------------------------------------------

fn dir_snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        files.push((
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path())?,
        ));
    }
    files.sort();
    Ok(files)
}

/// Run every data-producing subcommand twice plus once from its manifest and
/// demand byte-identical outputs.
pub fn reproducibility_check() -> Result<(bool, String)> {
    let base = std::env::temp_dir().join(format!("roughctl-repro-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("lift", vec!["lift".into(), "--set".into(), "path=\"parabola\"".into(), "--set".into(), "steps=16".into()]),
        ("brownian", vec!["brownian".into(), "--set".into(), "seed=7".into(), "--set".into(), "dim=2".into(), "--set".into(), "steps=16".into(), "--set".into(), "refinement=4".into()]),
        ("integrate", vec!["integrate".into(), "--set".into(), "driver.kind=\"brownian\"".into(), "--set".into(), "driver.steps=32".into(), "--set".into(), "driver.seed=3".into()]),
        ("solve", vec!["solve".into(), "--set".into(), "driver.kind=\"brownian\"".into(), "--set".into(), "driver.steps=32".into(), "--set".into(), "paths=3".into(), "--set".into(), "seed=11".into()]),
        ("dpp", vec!["dpp".into(), "--set".into(), "preset=\"f0\"".into(), "--set".into(), "steps=16".into(), "--set".into(), "axis_nodes=41".into(), "--set".into(), "controls=5".into()]),
        ("example-lt", vec!["example".into(), "linear-target".into(), "--set".into(), "preset=\"scalar-ln32\"".into(), "--set".into(), "steps=32".into(), "--set".into(), "axis_nodes=41".into(), "--set".into(), "controls=9".into()]),
        ("example-hjb", vec!["example".into(), "hjb-quadratic".into(), "--set".into(), "steps=10".into(), "--set".into(), "axis_nodes=21".into(), "--set".into(), "controls=9".into(), "--set".into(), "quad_nodes=3".into()]),
        ("continuity", vec!["continuity-probe".into(), "--set".into(), "steps=16".into(), "--set".into(), "axis_nodes=41".into(), "--set".into(), "controls=5".into()]),
        ("pathwise", vec!["pathwise-check".into(), "--set".into(), "meshes=[8,16]".into(), "--set".into(), "paths=8".into()]),
        ("randomize", vec!["randomize".into(), "--set".into(), "outer=4".into(), "--set".into(), "steps=16".into()]),
    ];
    let mut checked = 0usize;
    for (tag, argv) in &cases {
        let dir_a = base.join(format!("{tag}-a"));
        let dir_b = base.join(format!("{tag}-b"));
        let dir_c = base.join(format!("{tag}-c"));
        for dir in [&dir_a, &dir_b] {
            let mut full: Vec<String> = vec!["roughctl".into()];
            full.extend(argv.iter().cloned());
            full.push("--out".into());
            full.push(dir.to_string_lossy().into_owned());
            let code = run(full);
            if code != 0 {
                return Ok((false, format!("{tag}: exit code {code}")));
            }
        }
        // Replay from the first run's manifest.
        let mut replay: Vec<String> = vec!["roughctl".into()];
        replay.extend(argv.iter().take_while(|s| !s.starts_with("--")).cloned());
        replay.push("--config".into());
        replay.push(dir_a.join("manifest.json").to_string_lossy().into_owned());
        replay.push("--out".into());
        replay.push(dir_c.to_string_lossy().into_owned());
        let code = run(replay);
        if code != 0 {
            return Ok((false, format!("{tag}: replay exit code {code}")));
        }
        let a = dir_snapshot(&dir_a)?;
        let b = dir_snapshot(&dir_b)?;
        let c = dir_snapshot(&dir_c)?;
        if a != b {
            return Ok((false, format!("{tag}: rerun differs")));
        }
        if a != c {
            return Ok((false, format!("{tag}: manifest replay differs")));
        }
        checked += 1;
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok((true, format!("{checked} subcommands byte-identical under rerun and replay")))
}

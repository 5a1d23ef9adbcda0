//! Batch front end: loads an experiment config, runs it, and writes a
//! manifest plus CSV/JSON results into an output directory.
//!
//! Exit codes: 0 when the experiment ran and every check passed, 2 when a
//! check failed (bound violated, non-convergence), 1 on usage or config
//! errors. A config error never leaves artifacts behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::energy::{
    energy_audit, gronwall_constant, interpolation_norms, ladyzhenskaya_constant, stated_range, StatedRange,
};
use crate::error::{Error, Result};
use crate::estimates::{check_admissibility, verify_hs_regime};
use crate::fbm::{covariance_check, HurstGrid};
use crate::solver::{
    convergence_study, seed_contrast, solve_direct, solve_local, uniqueness_probe, ConstantSpec, DirectStatus,
    NamedConstant, Setup, SolveConfig,
};
use crate::spectral::calibrate::log_grid;
use crate::spectral::snapshot::write_snapshot;
use crate::CODE_VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

/// Version of the manifest and result layouts; bumped with the schemas.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Parser)]
#[command(name = "fracstokes", version, about = "Stochastic Navier-Stokes simulator and verification lab")]
pub struct Cli {
    /// Experiment config (TOML), or a manifest.json from an earlier run.
    #[arg(long, env = "FRACSTOKES_CONFIG")]
    pub config: PathBuf,
    /// Base seed; overrides the seed in the config.
    #[arg(long, env = "FRACSTOKES_SEED")]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, env = "FRACSTOKES_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "FRACSTOKES_THREADS")]
    pub threads: Option<usize>,
    /// Suppress progress messages on stdout.
    #[arg(long, env = "FRACSTOKES_QUIET")]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    VerifyHs,
    CheckParams,
    PicardStudy,
    ConvergenceStudy,
    EnergyAudit,
    FbmSelftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyHs => "verify-hs",
            Command::CheckParams => "check-params",
            Command::PicardStudy => "picard-study",
            Command::ConvergenceStudy => "convergence-study",
            Command::EnergyAudit => "energy-audit",
            Command::FbmSelftest => "fbm-selftest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedPolicy {
    #[default]
    Fixed,
    /// Seeds `base, base+1, …, base+n−1`.
    Sweep { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsQuery {
    pub dim: usize,
    pub q: f64,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_one")]
    pub t_max: f64,
    #[serde(default = "default_hs_points")]
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsQuery {
    pub dim: usize,
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub hurst: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbmSelftest {
    pub hurst: Vec<f64>,
    #[serde(default = "default_fbm_steps")]
    pub n_steps: usize,
    #[serde(default = "default_one")]
    pub t_final: f64,
    #[serde(default = "default_fbm_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_z_limit")]
    pub z_limit: f64,
    #[serde(default = "default_min_fraction")]
    pub min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceOptions {
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Smallest accepted error ratio per doubling of the step count.
    #[serde(default = "default_min_ratio")]
    pub min_ratio: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { levels: default_levels(), min_ratio: default_min_ratio() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyOptions {
    /// Gronwall constant, or `"calibrated"` to derive it from the measured
    /// Ladyzhenskaya constant.
    #[serde(default)]
    pub c_constant: ConstantSpec,
    /// Exponent of the interpolation norms (default: the solver's `p`).
    #[serde(default)]
    pub interpolation_p: Option<f64>,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self { c_constant: ConstantSpec::Value(1.0), interpolation_p: None }
    }
}

fn default_t_min() -> f64 {
    1e-6
}
fn default_one() -> f64 {
    1.0
}
fn default_hs_points() -> usize {
    20
}
fn default_fbm_steps() -> usize {
    256
}
fn default_fbm_paths() -> usize {
    2000
}
fn default_z_limit() -> f64 {
    5.0
}
fn default_min_fraction() -> f64 {
    0.99
}
fn default_levels() -> usize {
    4
}
fn default_min_ratio() -> f64 {
    1.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seeds: SeedPolicy,
    /// Also write the final field of every local solve as a snapshot.
    #[serde(default)]
    pub write_snapshots: bool,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub hs: Option<HsQuery>,
    #[serde(default)]
    pub params: Option<ParamsQuery>,
    #[serde(default)]
    pub fbm: Option<FbmSelftest>,
    #[serde(default)]
    pub convergence: Option<ConvergenceOptions>,
    #[serde(default)]
    pub energy: Option<EnergyOptions>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the text is a manifest (its `config` entry)
    /// or a bare JSON config.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            let v: Value = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner).map_err(|e| config_err(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| config_err(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    fn solve(&self) -> Result<&SolveConfig> {
        self.solve
            .as_ref()
            .ok_or_else(|| config_err(format!("command {} needs a [solve] table", self.command.name())))
    }

    fn base_seed(&self) -> u64 {
        match self.command {
            Command::FbmSelftest => self.fbm.as_ref().map_or(0, |f| f.seed),
            _ => self.solve.as_ref().map_or(0, |s| s.seed),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        let base = self.base_seed();
        match self.seeds {
            SeedPolicy::Fixed => vec![base],
            SeedPolicy::Sweep { n } => (0..n as u64).map(|i| base.wrapping_add(i)).collect(),
        }
    }

    fn set_seed(&mut self, seed: u64) {
        if let Some(s) = self.solve.as_mut() {
            s.seed = seed;
        }
        if let Some(f) = self.fbm.as_mut() {
            f.seed = seed;
        }
    }

    /// Everything that can be checked without running the experiment.
    pub fn validate(&self) -> Result<()> {
        if let SeedPolicy::Sweep { n: 0 } = self.seeds {
            return Err(config_err("seed sweep needs n >= 1"));
        }
        match self.command {
            Command::Simulate | Command::PicardStudy | Command::ConvergenceStudy | Command::EnergyAudit => {
                let s = self.solve()?;
                s.validate()?;
                let model = s.model.build()?;
                if !model.is_fourier() {
                    return Err(config_err("the solver needs the fourier_periodic backend"));
                }
                if self.command == Command::EnergyAudit && s.model.dim != 2 {
                    return Err(config_err("energy-audit is two-dimensional"));
                }
                if let Some(c) = &self.convergence {
                    if c.levels < 2 || !(c.min_ratio > 0.0) {
                        return Err(config_err("convergence needs levels >= 2 and a positive min_ratio"));
                    }
                }
                if let Some(ConstantSpec::Value(c)) = self.energy.as_ref().map(|e| e.c_constant) {
                    if !(c >= 0.0 && c.is_finite()) {
                        return Err(config_err("c_constant must be nonnegative"));
                    }
                }
            }
            Command::VerifyHs => {
                let h = self.hs.as_ref().ok_or_else(|| config_err("verify-hs needs an [hs] table"))?;
                if !(h.t_min > 0.0 && h.t_min < h.t_max) || h.n_points < 2 || !matches!(h.dim, 2 | 3) {
                    return Err(config_err("hs needs dim in {2,3}, 0 < t_min < t_max and n_points >= 2"));
                }
            }
            Command::CheckParams => {
                let p = self.params.as_ref().ok_or_else(|| config_err("check-params needs a [params] table"))?;
                if p.dim == 0 || !(p.p >= 1.0) {
                    return Err(config_err("params needs dim >= 1 and p >= 1"));
                }
                if let Some(h) = p.hurst {
                    if !(h > 0.0 && h < 1.0) {
                        return Err(config_err("hurst must lie in (0, 1)"));
                    }
                }
            }
            Command::FbmSelftest => {
                let f = self.fbm.as_ref().ok_or_else(|| config_err("fbm-selftest needs an [fbm] table"))?;
                if f.hurst.is_empty() || f.n_paths < 2 {
                    return Err(config_err("fbm needs at least one hurst value and two paths"));
                }
                for &h in &f.hurst {
                    HurstGrid::new(h, f.t_final, f.n_steps)?;
                }
            }
        }
        Ok(())
    }
}

/// Result of one experiment, before the manifest is written.
struct Outcome {
    files: Vec<String>,
    failures: Vec<String>,
    noise_sha256: BTreeMap<String, String>,
    summary: Value,
}

impl Outcome {
    fn new() -> Self {
        Self { files: Vec::new(), failures: Vec::new(), noise_sha256: BTreeMap::new(), summary: Value::Null }
    }
}

/// CSV table with a header row of `name [unit]` labels.
struct Table {
    text: String,
}

impl Table {
    fn new(columns: &[(&str, &str)]) -> Self {
        let header: Vec<String> = columns.iter().map(|(c, u)| format!("{c} [{u}]")).collect();
        Self { text: header.join(",") + "\n" }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

/// Shortest representation that parses back to the same bits; exponent
/// form outside `[1e-4, 1e6)`. Non-finite values become empty cells.
fn num(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

struct Writer<'a> {
    dir: &'a Path,
    outcome: &'a mut Outcome,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, table: Table) -> Result<()> {
        fs::write(self.dir.join(name), table.text)?;
        self.outcome.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.outcome.files.push(name.to_string());
        Ok(())
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let say = |msg: &str| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    let config = match prepare(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            return EXIT_USAGE;
        }
    };
    let dir = match cli.out.clone().or_else(|| config.output_dir.clone()) {
        Some(d) => d,
        None => {
            eprintln!("error [config]: no output directory (use --out or output_dir)");
            return EXIT_USAGE;
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error [config]: --threads must be positive");
            return EXIT_USAGE;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error [config]: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error [io]: {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    let mut outcome = Outcome::new();
    let result = pool.install(|| execute(&config, &dir, &mut outcome));
    let (status, code, reasons) = match result {
        Ok(()) if outcome.failures.is_empty() => ("pass", EXIT_OK, Vec::new()),
        Ok(()) => ("fail", EXIT_CHECK_FAILED, outcome.failures.clone()),
        Err(e) => {
            let code = match e {
                Error::NonConvergence { .. } | Error::BlowUp { .. } => EXIT_CHECK_FAILED,
                _ => EXIT_USAGE,
            };
            ("error", code, vec![format!("{}: {e}", e.code())])
        }
    };
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "command": config.command.name(),
        "code_version": CODE_VERSION,
        "config": config,
        "seeds": config.seeds(),
        "noise_sha256": outcome.noise_sha256,
        "outputs": outcome.files,
        "status": status,
        "exit_code": code,
        "reasons": reasons,
        "summary": outcome.summary,
    });
    let written = serde_json::to_string_pretty(&manifest)
        .map_err(Error::from)
        .and_then(|s| fs::write(dir.join("manifest.json"), s + "\n").map_err(Error::from));
    if let Err(e) = written {
        eprintln!("error [{}]: {e}", e.code());
        return EXIT_USAGE;
    }
    say(&format!("{}: {status}", config.command.name()));
    for r in &reasons {
        say(&format!("  {r}"));
    }
    code
}

fn prepare(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    config.validate()?;
    Ok(config)
}

fn execute(config: &ExperimentConfig, dir: &Path, outcome: &mut Outcome) -> Result<()> {
    let mut w = Writer { dir, outcome };
    match config.command {
        Command::Simulate => simulate(config, &mut w),
        Command::VerifyHs => verify_hs(config, &mut w),
        Command::CheckParams => check_params(config, &mut w),
        Command::PicardStudy => picard_study(config, &mut w),
        Command::ConvergenceStudy => run_convergence(config, &mut w),
        Command::EnergyAudit => run_energy(config, &mut w),
        Command::FbmSelftest => fbm_selftest(config, &mut w),
    }
}

/// Solver setups for every seed of the sweep, in seed order.
fn setups(config: &ExperimentConfig) -> Result<Vec<Setup>> {
    let base = config.solve()?;
    config
        .seeds()
        .par_iter()
        .map(|&seed| Setup::new(SolveConfig { seed, ..base.clone() }))
        .collect()
}

fn record_noise(w: &mut Writer, s: &Setup) {
    w.outcome.noise_sha256.insert(s.config.seed.to_string(), s.noise.content_hash());
}

fn simulate(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let setups = setups(config)?;
    let runs: Vec<_> = setups.par_iter().map(|s| (solve_local(s), solve_direct(s))).collect();
    let mut summary = Vec::new();
    for (s, (local, direct)) in setups.iter().zip(runs) {
        record_noise(w, s);
        let seed = s.config.seed;
        let p = s.config.p_exponent;
        let direct = direct?;
        let mut t = Table::new(&[("t", "time"), ("u_l2", "L2 norm"), ("u_lp", "Lp norm")]);
        for (time, u) in direct.times.iter().zip(&direct.u) {
            t.row(&[num(*time), num(u.l2_norm()), num(u.lp_norm(p)?)]);
        }
        w.csv(&format!("direct_seed{seed}.csv"), t)?;
        if let DirectStatus::BlowUp { time, .. } = direct.status {
            if s.model.dim() == 2 {
                w.outcome.failures.push(format!("seed {seed}: blow_up at t = {time}"));
            }
        }
        let entry = match local {
            Ok(sol) => {
                let z = s.z.grid();
                let mut t = Table::new(&[
                    ("t", "time"),
                    ("u_l2", "L2 norm"),
                    ("u_lp", "Lp norm"),
                    ("v_lp", "Lp norm"),
                    ("div_residual", "relative"),
                ]);
                for ((time, u), v) in sol.times.iter().zip(&sol.u).zip(&sol.v) {
                    t.row(&[num(*time), num(u.l2_norm()), num(u.lp_norm(p)?), num(v.lp_norm(p)?), num(u.divergence_residual())]);
                }
                w.csv(&format!("local_seed{seed}.csv"), t)?;
                if config.write_snapshots {
                    let name = format!("u_tau_seed{seed}.snap");
                    let file = fs::File::create(w.dir.join(&name))?;
                    let last = sol.u.last().expect("nonempty");
                    write_snapshot(last, sol.times.last().copied(), std::io::BufWriter::new(file))?;
                    w.outcome.files.push(name);
                }
                let d = &sol.diagnostics;
                if !d.uniform_bound_ok {
                    w.outcome.failures.push(format!("seed {seed}: uniform bound violated"));
                }
                json!({ "seed": seed, "coarse_dt": z.dt(), "diagnostics": d, "direct_status": direct.status })
            }
            Err(e @ Error::NonConvergence { .. }) => {
                w.outcome.failures.push(format!("seed {seed}: {}", e.code()));
                json!({ "seed": seed, "error": e.code(), "message": e.to_string(), "gaps": gaps_of(&e), "direct_status": direct.status })
            }
            Err(e) => return Err(e),
        };
        summary.push(entry);
    }
    let summary = Value::Array(summary);
    w.json("simulate.json", &summary)?;
    w.outcome.summary = summary;
    Ok(())
}

fn gaps_of(e: &Error) -> Vec<f64> {
    match e {
        Error::NonConvergence { gaps, .. } => gaps.clone(),
        _ => Vec::new(),
    }
}

fn verify_hs(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let q = config.hs.as_ref().expect("validated");
    let grid = log_grid(q.t_min, q.t_max, q.n_points);
    let report = verify_hs_regime(q.q, q.dim, &grid)?;
    let mut t = Table::new(&[
        ("t", "time"),
        ("partial_sum", "dimensionless"),
        ("tail_bound", "dimensionless"),
        ("estimate", "dimensionless"),
        ("bound_shape", "dimensionless"),
        ("ratio", "dimensionless"),
        ("cap_reached", "bool"),
    ]);
    for r in &report.rows {
        t.row(&[
            num(r.t),
            num(r.partial_sum),
            num(r.tail_bound),
            num(r.estimate),
            num(r.bound_shape_value),
            num(r.ratio),
            r.cap_reached.to_string(),
        ]);
    }
    w.csv("hs_regime.csv", t)?;
    let value = serde_json::to_value(&report)?;
    w.json("hs_regime.json", &value)?;
    if !report.pass {
        w.outcome.failures.push(format!("ratio slope {} below floor", report.slope));
    }
    w.outcome.summary = json!({ "sup_ratio": report.sup_ratio, "slope": report.slope, "pass": report.pass });
    Ok(())
}

fn check_params(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let q = config.params.as_ref().expect("validated");
    let probe = check_admissibility(q.dim, q.p, q.q, q.hurst.unwrap_or(0.5));
    let threshold = probe.lhs;
    let verdict = if probe.existence_inapplicable {
        format!("local existence needs p > d = {}", q.dim)
    } else if threshold >= 1.0 {
        "inadmissible for all hurst < 1".to_string()
    } else if threshold < 0.0 {
        "admissible for all hurst in (0, 1)".to_string()
    } else {
        format!("admissible iff hurst > {threshold}")
    };
    let report = q.hurst.map(|h| check_admissibility(q.dim, q.p, q.q, h));
    let value = json!({
        "dim": q.dim,
        "p": q.p,
        "q": q.q,
        "hurst_threshold": threshold,
        "verdict": verdict,
        "report": report,
    });
    w.json("admissibility.json", &value)?;
    w.outcome.summary = json!({ "verdict": verdict });
    Ok(())
}

fn picard_study(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let setups = setups(config)?;
    let runs: Vec<_> = setups.par_iter().map(|s| (solve_local(s), uniqueness_probe(s))).collect();
    let mut t = Table::new(&[
        ("seed", "id"),
        ("iteration", "count"),
        ("gap", "Lp norm"),
        ("ratio", "dimensionless"),
        ("c0", "dimensionless"),
    ]);
    let mut per_seed = Vec::new();
    for (s, (local, uniq)) in setups.iter().zip(runs) {
        record_noise(w, s);
        let seed = s.config.seed;
        let tol = s.config.picard_tol;
        let sol = match local {
            Ok(sol) => sol,
            Err(e @ Error::NonConvergence { .. }) => {
                w.outcome.failures.push(format!("seed {seed}: {}", e.code()));
                per_seed.push(json!({ "seed": seed, "error": e.code(), "gaps": gaps_of(&e) }));
                continue;
            }
            Err(e) => return Err(e),
        };
        let d = &sol.diagnostics;
        let mut contraction_ok = true;
        for (j, g) in d.iteration_gaps.iter().enumerate() {
            let ratio = if j == 0 { f64::NAN } else { g / d.iteration_gaps[j - 1] };
            if j >= 2 && !(ratio <= d.c0 + 0.05) {
                contraction_ok = false;
            }
            t.row(&[seed.to_string(), (j + 1).to_string(), num(*g), num(ratio), num(d.c0)]);
        }
        let uniq = uniq?;
        let unique_ok = uniq.deviation <= 10.0 * tol;
        if !contraction_ok {
            w.outcome.failures.push(format!("seed {seed}: gap ratios exceed C0 + 0.05"));
        }
        if !d.uniform_bound_ok {
            w.outcome.failures.push(format!("seed {seed}: uniform bound violated"));
        }
        if !unique_ok {
            w.outcome.failures.push(format!("seed {seed}: uniqueness deviation {}", uniq.deviation));
        }
        per_seed.push(json!({
            "seed": seed,
            "diagnostics": d,
            "contraction_ok": contraction_ok,
            "uniqueness": uniq,
            "uniqueness_ok": unique_ok,
        }));
    }
    w.csv("picard_gaps.csv", t)?;
    let contrasts: Vec<Value> = setups
        .par_windows(2)
        .map(|pair| {
            seed_contrast(&pair[0], &pair[1]).map(|dev| {
                json!({ "seeds": [pair[0].config.seed, pair[1].config.seed], "deviation": dev })
            })
        })
        .collect::<Result<_>>()?;
    for c in &contrasts {
        let dev = c["deviation"].as_f64().unwrap_or(0.0);
        if !(dev > 1e3 * config.solve()?.picard_tol) {
            w.outcome.failures.push(format!("different-seed contrast too small: {dev}"));
        }
    }
    let value = json!({ "seeds": per_seed, "contrasts": contrasts });
    w.json("picard_study.json", &value)?;
    w.outcome.summary = json!({ "n_seeds": setups.len(), "n_contrasts": contrasts.len() });
    Ok(())
}

fn run_convergence(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let opts = config.convergence.clone().unwrap_or_default();
    let setups = setups(config)?;
    let reports: Vec<_> = setups.par_iter().map(|s| convergence_study(s, opts.levels)).collect();
    let mut out = Vec::new();
    for (s, report) in setups.iter().zip(reports) {
        record_noise(w, s);
        let seed = s.config.seed;
        let report = report?;
        let mut t = Table::new(&[
            ("n_steps", "count"),
            ("dt", "time"),
            ("scheme_gap", "Lp norm"),
            ("ratio", "dimensionless"),
            ("picard_iterations", "count"),
        ]);
        for r in &report.rows {
            t.row(&[r.n_steps.to_string(), num(r.dt), num(r.scheme_gap), num(r.ratio), r.picard_iterations.to_string()]);
            if r.ratio.is_finite() && r.ratio < opts.min_ratio {
                w.outcome.failures.push(format!("seed {seed}: ratio {} at n_steps {}", r.ratio, r.n_steps));
            }
        }
        w.csv(&format!("convergence_seed{seed}.csv"), t)?;
        out.push(json!({ "seed": seed, "report": report }));
    }
    let value = Value::Array(out);
    w.json("convergence.json", &value)?;
    w.outcome.summary = json!({ "min_ratio": opts.min_ratio, "levels": opts.levels });
    Ok(())
}

fn run_energy(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let opts = config.energy.clone().unwrap_or_default();
    let setups = setups(config)?;
    let Some(first) = setups.first() else {
        return Ok(());
    };
    let (c, calibration) = match opts.c_constant {
        ConstantSpec::Value(c) => (c, Value::Null),
        ConstantSpec::Named(NamedConstant::Calibrated) => {
            let est = ladyzhenskaya_constant(&first.model, 0, 100)?;
            (gronwall_constant(est.sup, first.model.viscosity()), serde_json::to_value(est)?)
        }
    };
    let mut out = Vec::new();
    for s in &setups {
        record_noise(w, s);
        let seed = s.config.seed;
        let p = opts.interpolation_p.unwrap_or(s.config.p_exponent);
        let direct = solve_direct(s)?;
        let z = s.z.states();
        let n = direct.u.len();
        let v: Vec<_> = direct.u.iter().zip(&z).map(|(u, z)| u.sub(z)).collect::<Result<_>>()?;
        let ledger = energy_audit(&v, &z[..n], &direct.times, c)?;
        let interp = interpolation_norms(&v, &direct.times, p)?;
        let mut t = Table::new(&[
            ("t", "time"),
            ("v_l2_sq", "L2 norm squared"),
            ("grad_v_sq", "H1 seminorm squared"),
            ("z_l4_fourth", "L4 norm to the 4th"),
            ("envelope", "L2 norm squared"),
            ("residual", "energy per time"),
            ("pass", "bool"),
        ]);
        for k in 0..n {
            let res = ledger.residuals.get(k).map_or(String::new(), |r| num(*r));
            let ok = ledger.v_l2_sq[k] <= ledger.gronwall_envelope[k] * (1.0 + 1e-12);
            t.row(&[
                num(ledger.times[k]),
                num(ledger.v_l2_sq[k]),
                num(ledger.grad_v_sq[k]),
                num(ledger.z_l4_fourth[k]),
                num(ledger.gronwall_envelope[k]),
                res,
                ok.to_string(),
            ]);
        }
        w.csv(&format!("energy_seed{seed}.csv"), t)?;
        if !ledger.pass {
            w.outcome.failures.push(format!("seed {seed}: energy exceeds the Gronwall envelope"));
        }
        if !interp.holds {
            w.outcome.failures.push(format!("seed {seed}: interpolation inequality fails"));
        }
        if let DirectStatus::BlowUp { time, .. } = direct.status {
            w.outcome.failures.push(format!("seed {seed}: blow_up at t = {time}"));
        }
        let range = stated_range(s.config.p_exponent);
        out.push(json!({
            "seed": seed,
            "pass": ledger.pass,
            "stated_range": range,
            "note": if range == StatedRange::Outside { "outside the stated range 4 <= p" } else { "" },
            "residual_norm": ledger.residual_norm(),
            "max_trilinear_defect": ledger.max_trilinear_defect,
            "direct_status": direct.status,
            "interpolation": interp,
        }));
    }
    let value = json!({ "c_constant": c, "calibration": calibration, "runs": out });
    w.json("energy.json", &value)?;
    w.outcome.summary = json!({ "c_constant": c });
    Ok(())
}

fn fbm_selftest(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let f = config.fbm.as_ref().expect("validated");
    let mut t = Table::new(&[
        ("seed", "id"),
        ("hurst", "dimensionless"),
        ("n_paths", "count"),
        ("generator", "name"),
        ("fraction_within", "dimensionless"),
        ("max_abs_z", "standard errors"),
    ]);
    let mut checks = Vec::new();
    for seed in config.seeds() {
        for &h in &f.hurst {
            let grid = HurstGrid::new(h, f.t_final, f.n_steps)?;
            let c = covariance_check(grid, f.n_paths, seed, f.z_limit)?;
            let generator = serde_json::to_value(c.generator)?;
            t.row(&[
                seed.to_string(),
                num(h),
                c.n_paths.to_string(),
                generator.as_str().unwrap_or_default().to_string(),
                num(c.fraction_within),
                num(c.max_abs_z),
            ]);
            if c.fraction_within < f.min_fraction {
                w.outcome.failures.push(format!("seed {seed}, hurst {h}: fraction {}", c.fraction_within));
            }
            checks.push(json!({ "seed": seed, "check": c }));
        }
    }
    w.csv("fbm_selftest.csv", t)?;
    let value = json!({ "min_fraction": f.min_fraction, "checks": checks });
    w.json("fbm_selftest.json", &value)?;
    w.outcome.summary = json!({ "n_checks": checks.len() });
    Ok(())
}

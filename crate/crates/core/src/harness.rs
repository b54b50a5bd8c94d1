//! Config-driven experiment harness: seeded budget sweeps over the two
//! algorithm variants, deterministic CSV and plot-data emission, and the
//! cross-module verification suite.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, DiscrepancyReport, InfoGainReport};
use crate::gp::GroundTruth;
use crate::kernel::KernelSpec;
use crate::linalg::{solve_dense, SymMatrix};
use crate::lse::{self, Action, AlgoParams, Classification, RunState, TraceRecord};
use crate::lse_fast;
use crate::partition::{hypercube_params, verify_x3, PartitionTree};
use crate::rng::{stream, Purpose};

pub const CSV_VERSION_COMMENT: &str = "# mlse results v1";
pub const CSV_HEADER: &str = "budget,seed,variant,D,kernel,tau,v_scale,l_value,\
sym_diff_fraction,j_n,mutual_info,n_refinements,max_depth,e1_violations,e2_violations,wall_ms";

/// Which algorithm variant a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Core,
    Fast,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Core => write!(f, "core"),
            Variant::Fast => write!(f, "fast"),
        }
    }
}

/// Seeds: either an explicit list or a contiguous range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn materialize(&self, offset: u64) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.iter().map(|s| s + offset).collect(),
            SeedSpec::Range { start, count } => {
                (*start + offset..*start + offset + *count).collect()
            }
        }
    }
}

fn default_v_scale() -> f64 {
    1.0
}

/// One experiment: a kernel/dimension/threshold setting swept over budgets
/// and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub dimension: usize,
    pub noise_var: f64,
    pub tau: f64,
    pub delta: f64,
    pub budgets: Vec<usize>,
    pub seeds: SeedSpec,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_v_scale")]
    pub v_scale: f64,
    /// Grid points per axis; defaults to 201 (D=1), 101 (D=2), 0 beyond.
    #[serde(default)]
    pub grid_resolution: Option<usize>,
    /// Euclidean covering constant; defaults to (1 + sqrt(D))^D.
    #[serde(default)]
    pub covering_constant: Option<f64>,
    /// Metric dimension input D_m; defaults to D.
    #[serde(default)]
    pub metric_dimension: Option<f64>,
    /// Also write one trace file per (budget, seed).
    #[serde(default)]
    pub write_traces: bool,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        if let Err(e) = self.kernel.validate() {
            return err("kernel", e.to_string());
        }
        if self.dimension == 0 {
            return err("dimension", "must be at least 1".into());
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return err("noise_var", format!("must be positive, got {}", self.noise_var));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return err("delta", format!("must lie in (0,1), got {}", self.delta));
        }
        if self.budgets.is_empty() {
            return err("budgets", "must not be empty".into());
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return err("budgets", "must be strictly increasing".into());
        }
        let seeds = self.seeds.materialize(0);
        if seeds.is_empty() {
            return err("seeds", "must not be empty".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return err("seeds", "must be distinct".into());
        }
        if !(self.v_scale > 0.0 && self.v_scale.is_finite()) {
            return err("v_scale", format!("must be positive, got {}", self.v_scale));
        }
        if let Some(c) = self.covering_constant {
            if !(c > 0.0 && c.is_finite()) {
                return err("covering_constant", format!("must be positive, got {c}"));
            }
        }
        if let Some(d) = self.metric_dimension {
            if !(d > 0.0 && d.is_finite()) {
                return err("metric_dimension", format!("must be positive, got {d}"));
            }
        }
        Ok(())
    }

    /// Fills every optional field with its effective value, so the config
    /// written next to the results is self-describing.
    pub fn materialized(&self) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.grid_resolution = Some(self.effective_grid_resolution());
        cfg.covering_constant = Some(self.effective_covering_constant());
        cfg.metric_dimension = Some(self.effective_metric_dimension());
        cfg
    }

    pub fn effective_grid_resolution(&self) -> usize {
        self.grid_resolution.unwrap_or(match self.dimension {
            1 => 201,
            2 => 101,
            _ => 0,
        })
    }

    pub fn effective_covering_constant(&self) -> f64 {
        self.covering_constant
            .unwrap_or_else(|| (1.0 + (self.dimension as f64).sqrt()).powi(self.dimension as i32))
    }

    pub fn effective_metric_dimension(&self) -> f64 {
        self.metric_dimension.unwrap_or(self.dimension as f64)
    }

    pub fn domain_diameter(&self) -> f64 {
        (self.dimension as f64).sqrt()
    }

    /// Derives the run parameters for one budget.
    pub fn algo_params(&self, budget: usize) -> Result<AlgoParams> {
        let profile = self.kernel.smoothness_profile(self.domain_diameter());
        let pparams = hypercube_params(self.dimension);
        AlgoParams::derive(
            budget,
            self.tau,
            self.delta,
            &profile,
            &pparams,
            self.effective_metric_dimension(),
            self.effective_covering_constant(),
            self.v_scale,
            self.noise_var,
        )
    }
}

/// One `(budget, seed)` cell of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub budget: usize,
    pub seed: u64,
    pub variant: Variant,
    pub dimension: usize,
    pub kernel: String,
    pub tau: f64,
    pub v_scale: f64,
    pub l_value: f64,
    pub sym_diff_fraction: f64,
    pub j_n: f64,
    pub mutual_info: f64,
    pub n_refinements: u64,
    pub max_depth: u32,
    pub e1_violations: u64,
    pub e2_violations: u64,
    pub wall_ms: f64,
    #[serde(skip)]
    pub evals_by_depth: Vec<u64>,
}

impl RunRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.budget,
            self.seed,
            self.variant,
            self.dimension,
            self.kernel,
            self.tau,
            self.v_scale,
            self.l_value,
            self.sym_diff_fraction,
            self.j_n,
            self.mutual_info,
            self.n_refinements,
            self.max_depth,
            self.e1_violations,
            self.e2_violations,
            self.wall_ms
        )
    }
}

/// Everything a sweep produced, in deterministic `(budget, seed)` order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
}

/// Runs one `(budget, seed)` cell.
pub fn run_one(config: &ExperimentConfig, budget: usize, seed: u64) -> Result<RunRow> {
    let start = Instant::now();
    let params = config.algo_params(budget)?;
    let mut truth = GroundTruth::new(
        config.kernel.clone(),
        config.dimension,
        config.noise_var,
        config.effective_grid_resolution(),
        seed,
    )?;
    let mut tree = PartitionTree::new_unit(config.dimension);
    let classification = match config.variant {
        Variant::Core => lse::run(params, &mut tree, &mut truth)?,
        Variant::Fast => lse_fast::run_fast(params, &mut tree, &mut truth)?,
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let disc: DiscrepancyReport = eval::discrepancy(&classification, &truth, config.tau);
    let info: InfoGainReport = eval::info_accounting(
        &classification.trace,
        config.dimension,
        &config.kernel,
        config.noise_var,
    )?;
    Ok(RunRow {
        budget,
        seed,
        variant: config.variant,
        dimension: config.dimension,
        kernel: config.kernel.to_string(),
        tau: config.tau,
        v_scale: config.v_scale,
        l_value: disc.l_value,
        sym_diff_fraction: disc.sym_diff_fraction,
        j_n: info.j_n,
        mutual_info: info.mutual_info,
        n_refinements: classification.summary.n_refinements,
        max_depth: classification.summary.max_depth,
        e1_violations: classification.summary.e1_violations,
        e2_violations: classification.summary.e2_violations,
        wall_ms,
        evals_by_depth: classification.summary.evals_by_depth.clone(),
    })
}

/// Runs the full sweep, writing `results.csv`, `depth_counts.csv` and
/// `config_used.json` under the config's output directory. Rows are
/// computed in parallel across `(budget, seed)` cells but always written in
/// `(budget, seed)` order, so outputs are identical for any thread count.
pub fn run_experiment(
    config: &ExperimentConfig,
    threads: usize,
    seed_offset: u64,
) -> Result<SweepResult> {
    config.validate()?;
    let out_dir = config.output_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("results.csv");
    let depth_path = out_dir.join("depth_counts.csv");
    let cfg_path = out_dir.join("config_used.json");
    let outcome = run_experiment_inner(config, threads, seed_offset, &out_dir);
    if outcome.is_err() {
        let _ = fs::remove_file(&csv_path);
        let _ = fs::remove_file(&depth_path);
        let _ = fs::remove_file(&cfg_path);
        let _ = fs::remove_file(out_dir.join("schedules.json"));
    }
    outcome
}

fn run_experiment_inner(
    config: &ExperimentConfig,
    threads: usize,
    seed_offset: u64,
    out_dir: &Path,
) -> Result<SweepResult> {
    let resolved = config.materialized();
    fs::write(
        out_dir.join("config_used.json"),
        serde_json::to_string_pretty(&resolved)? + "\n",
    )?;
    // Derived schedules per budget, so every run is reproducible from its
    // output directory alone.
    let schedules: Vec<AlgoParams> = resolved
        .budgets
        .iter()
        .map(|&b| resolved.algo_params(b))
        .collect::<Result<_>>()?;
    fs::write(
        out_dir.join("schedules.json"),
        serde_json::to_string_pretty(&schedules)? + "\n",
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config {
            field: "threads".into(),
            message: e.to_string(),
        })?;
    let seeds = resolved.seeds.materialize(seed_offset);
    let mut csv = fs::File::create(out_dir.join("results.csv"))?;
    writeln!(csv, "{CSV_VERSION_COMMENT}")?;
    writeln!(csv, "{CSV_HEADER}")?;
    let mut depth_csv = fs::File::create(out_dir.join("depth_counts.csv"))?;
    writeln!(depth_csv, "{CSV_VERSION_COMMENT}")?;
    writeln!(depth_csv, "budget,seed,depth,evals")?;
    let mut rows = Vec::new();
    for &budget in &resolved.budgets {
        use rayon::prelude::*;
        // Deterministic order: indexed parallel map preserves seed order.
        let chunk: Result<Vec<RunRow>> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| run_one(&resolved, budget, seed))
                .collect()
        });
        let chunk = chunk?;
        for row in &chunk {
            writeln!(csv, "{}", row.to_csv_line())?;
            for (depth, count) in row.evals_by_depth.iter().enumerate() {
                if *count > 0 {
                    writeln!(depth_csv, "{},{},{},{}", row.budget, row.seed, depth, count)?;
                }
            }
        }
        csv.flush()?;
        if resolved.write_traces {
            for &seed in &seeds {
                write_trace_file(&resolved, budget, seed, out_dir)?;
            }
        }
        rows.extend(chunk);
    }
    Ok(SweepResult {
        config: resolved,
        rows,
    })
}

fn write_trace_file(
    config: &ExperimentConfig,
    budget: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let params = config.algo_params(budget)?;
    let mut truth = GroundTruth::new(
        config.kernel.clone(),
        config.dimension,
        config.noise_var,
        config.effective_grid_resolution(),
        seed,
    )?;
    let mut tree = PartitionTree::new_unit(config.dimension);
    let c = match config.variant {
        Variant::Core => lse::run(params, &mut tree, &mut truth)?,
        Variant::Fast => lse_fast::run_fast(params, &mut tree, &mut truth)?,
    };
    let mut f = fs::File::create(out_dir.join(format!("trace_b{budget}_s{seed}.tsv")))?;
    for rec in &c.trace {
        writeln!(f, "{}", rec.to_line())?;
    }
    Ok(())
}

/// Parses a results CSV written by [`run_experiment`].
pub fn read_results_csv(path: &Path) -> Result<Vec<RunRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("budget,") || line.is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        let bad = |message: String| Error::Config {
            field: "results_csv".into(),
            message,
        };
        if p.len() != 16 {
            return Err(bad(format!("expected 16 columns, got {}", p.len())));
        }
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
        rows.push(RunRow {
            budget: p[0].parse().map_err(|e| bad(format!("budget: {e}")))?,
            seed: p[1].parse().map_err(|e| bad(format!("seed: {e}")))?,
            variant: match p[2] {
                "fast" => Variant::Fast,
                _ => Variant::Core,
            },
            dimension: p[3].parse().map_err(|e| bad(format!("D: {e}")))?,
            kernel: p[4].to_string(),
            tau: parse_f(p[5])?,
            v_scale: parse_f(p[6])?,
            l_value: parse_f(p[7])?,
            sym_diff_fraction: parse_f(p[8])?,
            j_n: parse_f(p[9])?,
            mutual_info: parse_f(p[10])?,
            n_refinements: p[11].parse().map_err(|e| bad(format!("refinements: {e}")))?,
            max_depth: p[12].parse().map_err(|e| bad(format!("max_depth: {e}")))?,
            e1_violations: p[13].parse().map_err(|e| bad(format!("e1: {e}")))?,
            e2_violations: p[14].parse().map_err(|e| bad(format!("e2: {e}")))?,
            wall_ms: parse_f(p[15])?,
            evals_by_depth: Vec::new(),
        });
    }
    Ok(rows)
}

/// Median as the mean of the middle order statistics.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank quantile; with one sample every quantile is that sample.
pub fn quantile_nearest(values: &[f64], p: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Writes the per-figure data files: error against budget (median and
/// quartiles), information gain against budget, and the per-depth
/// evaluation histogram when depth counts are available.
pub fn emit_plot_data(rows: &[RunRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Config {
            field: "results".into(),
            message: "no rows to plot".into(),
        });
    }
    fs::create_dir_all(out_dir)?;
    let mut budgets: Vec<usize> = rows.iter().map(|r| r.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut written = Vec::new();

    let select = |budget: usize, f: &dyn Fn(&RunRow) -> f64| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.budget == budget)
            .map(f)
            .filter(|v| v.is_finite())
            .collect()
    };

    let path = out_dir.join("error_vs_budget.tsv");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "budget\tmedian_l_value\tq1\tq3\truns")?;
    for &b in &budgets {
        let v = select(b, &|r| r.l_value);
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            b,
            median(&v),
            quantile_nearest(&v, 0.25),
            quantile_nearest(&v, 0.75),
            v.len()
        )?;
    }
    written.push(path);

    let path = out_dir.join("info_gain_vs_budget.tsv");
    let mut f = fs::File::create(&path)?;
    writeln!(f, "budget\tmedian_j_n\tmedian_mutual_info\truns")?;
    for &b in &budgets {
        let j = select(b, &|r| r.j_n);
        let mi = select(b, &|r| r.mutual_info);
        writeln!(f, "{}\t{}\t{}\t{}", b, median(&j), median(&mi), j.len())?;
    }
    written.push(path);

    if rows.iter().any(|r| !r.evals_by_depth.is_empty()) {
        let path = out_dir.join("evals_per_depth.tsv");
        let mut f = fs::File::create(&path)?;
        writeln!(f, "budget\tdepth\ttotal_evals")?;
        for &b in &budgets {
            let max_len = rows
                .iter()
                .filter(|r| r.budget == b)
                .map(|r| r.evals_by_depth.len())
                .max()
                .unwrap_or(0);
            for depth in 0..max_len {
                let total: u64 = rows
                    .iter()
                    .filter(|r| r.budget == b)
                    .map(|r| r.evals_by_depth.get(depth).copied().unwrap_or(0))
                    .sum();
                if total > 0 {
                    writeln!(f, "{b}\t{depth}\t{total}")?;
                }
            }
        }
        written.push(path);
    }
    Ok(written)
}

/// Outcome of one verification check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

/// Results of [`verify_suite`].
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "[{}] {} — {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.details
            ));
        }
        s
    }
}

/// Per-evaluation deviation checks against the true path (grid-restricted).
#[derive(Debug, Clone, Copy, Default)]
pub struct DeviationCheck {
    pub checked: usize,
    pub coarse_failures: usize,
    pub posterior_failures: usize,
}

/// At every evaluation, the sup of `|f - tau|` over grid points of the
/// evaluated cell must stay within `10 V_h`, and within
/// `4 beta_n sigma` when the depth is below `h_max`.
pub fn deviation_bound_check(c: &Classification, truth: &GroundTruth) -> DeviationCheck {
    let mut out = DeviationCheck::default();
    let tau = c.params.tau;
    for rec in &c.trace {
        if rec.action != Action::Evaluate {
            continue;
        }
        let cell = PartitionTree::cell_of(c.dim, rec.node());
        let mut sup: Option<f64> = None;
        for (p, f) in truth.grid_points().iter().zip(truth.grid_values()) {
            if cell.contains(p) {
                let d = (f - tau).abs();
                sup = Some(sup.map_or(d, |s: f64| s.max(d)));
            }
        }
        let Some(sup) = sup else { continue };
        out.checked += 1;
        if sup > 10.0 * c.params.v_at(rec.depth) {
            out.coarse_failures += 1;
        }
        if rec.depth < c.params.h_max && sup > 4.0 * c.params.beta_n * rec.stddev {
            out.posterior_failures += 1;
        }
    }
    out
}

/// Grid soundness of the classified regions, with an additive slack for
/// sub-grid variation.
#[derive(Debug, Clone, Copy, Default)]
pub struct SoundnessCheck {
    pub s_cells: usize,
    pub s_violations: usize,
    pub r_cells: usize,
    pub r_violations: usize,
}

pub fn classification_soundness(
    c: &Classification,
    truth: &GroundTruth,
    slack: f64,
) -> SoundnessCheck {
    let tau = c.params.tau;
    let mut out = SoundnessCheck::default();
    let grid: Vec<(&Vec<f64>, f64)> = truth
        .grid_points()
        .iter()
        .zip(truth.grid_values().iter().copied())
        .collect();
    for (ids, super_level) in [(&c.s_hat, true), (&c.r_hat, false)] {
        for id in ids.iter() {
            let cell = PartitionTree::cell_of(c.dim, *id);
            let values: Vec<f64> = grid
                .iter()
                .filter(|(p, _)| cell.contains(p))
                .map(|(_, f)| *f)
                .collect();
            if values.is_empty() {
                continue;
            }
            if super_level {
                out.s_cells += 1;
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                if min < tau - slack {
                    out.s_violations += 1;
                }
            } else {
                out.r_cells += 1;
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if max >= tau + slack {
                    out.r_violations += 1;
                }
            }
        }
    }
    out
}

/// Executes one seeded run stepping manually, asserting the per-step
/// structural invariants, and returns the final classification.
fn run_checked(
    config: &ExperimentConfig,
    budget: usize,
    seed: u64,
    fast: bool,
) -> Result<(Classification, GroundTruth, bool, bool)> {
    let params = config.algo_params(budget)?;
    let mut truth = GroundTruth::new(
        config.kernel.clone(),
        config.dimension,
        config.noise_var,
        config.effective_grid_resolution(),
        seed,
    )?;
    let mut tree = PartitionTree::new_unit(config.dimension);
    let mut state = RunState::new(params, &mut tree, &truth)?;
    let mut tiling_ok = true;
    let mut active_bound_ok = true;
    loop {
        let ids = state
            .active
            .iter()
            .map(|e| e.id)
            .chain(state.s_hat.iter().copied())
            .chain(state.r_hat.iter().copied());
        tiling_ok &= lse::tiles_domain(ids);
        if fast {
            active_bound_ok &= state.active.len() as u64 <= state.t.max(1);
        }
        if state.n_evals >= state.params.budget {
            break;
        }
        let more = if fast {
            state.step_fast(&mut tree, &mut truth)?
        } else {
            state.step(&mut tree, &mut truth)?
        };
        if !more {
            break;
        }
    }
    Ok((
        state.into_classification(&tree),
        truth,
        tiling_ok,
        active_bound_ok,
    ))
}

fn a_values_non_increasing(trace: &[TraceRecord], tau: f64) -> bool {
    let mut prev = f64::INFINITY;
    for rec in trace {
        if matches!(rec.action, Action::Evaluate | Action::Refine) {
            let a = (rec.u_bar - tau).max(tau - rec.l_bar);
            if a > prev {
                return false;
            }
            prev = a;
        }
    }
    true
}

fn q_cap_respected(c: &Classification) -> bool {
    let mut evals: std::collections::HashMap<crate::partition::NodeId, u64> = Default::default();
    for rec in &c.trace {
        if rec.action == Action::Evaluate {
            let n = evals.entry(rec.node()).or_default();
            *n += 1;
            if rec.depth < c.params.h_max && *n > c.params.q_at(rec.depth) {
                return false;
            }
        }
    }
    true
}

/// Runs every module's invariant suite at the config's setting and collects
/// pass/fail outcomes. Failures are report content, not errors.
pub fn verify_suite(config: &ExperimentConfig, threads: usize) -> Result<VerifyReport> {
    config.validate()?;
    let mut checks = Vec::new();

    // Posterior algebra: incremental factorization against pivoted
    // elimination on random datasets.
    checks.push(posterior_oracle_check()?);

    // Partition geometry.
    let mut x3_ok = true;
    for dim in [1usize, 2, 3] {
        x3_ok &= verify_x3(dim, &hypercube_params(dim), 8).all_pass();
    }
    checks.push(CheckOutcome {
        name: "partition_x3_geometry".into(),
        passed: x3_ok,
        details: "ball sandwich for D in {1,2,3} to depth 8".into(),
    });
    let mut corrupted = hypercube_params(2);
    corrupted.v2 = 1.0;
    let neg = verify_x3(2, &corrupted, 8);
    checks.push(CheckOutcome {
        name: "partition_x3_negative_control".into(),
        passed: neg.failures() > 0,
        details: format!("corrupted v2=1.0 reported {} failures", neg.failures()),
    });

    // Schedule invariants and their negative control.
    let params = config.algo_params(*config.budgets.last().unwrap())?;
    let mut corrupted = params.clone();
    let last = corrupted.v_schedule.len() - 1;
    corrupted.v_schedule[last] = corrupted.v_schedule[last - 1] / 4.0;
    checks.push(CheckOutcome {
        name: "schedule_negative_control".into(),
        passed: params.validate().is_ok() && corrupted.validate().is_err(),
        details: "non-monotone V schedule must be rejected".into(),
    });

    // Seeded runs: structural invariants, deviation bounds, information
    // inequality, confidence calibration.
    let seeds = config.seeds.materialize(0);
    let budget = *config.budgets.last().unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config {
            field: "threads".into(),
            message: e.to_string(),
        })?;
    use rayon::prelude::*;
    type Checked = (Classification, GroundTruth, bool, bool);
    let core_runs: Result<Vec<Checked>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_checked(config, budget, s, false))
            .collect()
    });
    let core_runs = core_runs?;
    let fast_runs: Result<Vec<Checked>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_checked(config, budget, s, true))
            .collect()
    });
    let fast_runs = fast_runs?;

    let tiling = core_runs.iter().chain(&fast_runs).all(|r| r.2);
    checks.push(CheckOutcome {
        name: "tiling_every_step".into(),
        passed: tiling,
        details: format!("{} runs, both variants", core_runs.len() + fast_runs.len()),
    });
    let a_mono = core_runs
        .iter()
        .all(|(c, ..)| a_values_non_increasing(&c.trace, c.params.tau));
    checks.push(CheckOutcome {
        name: "selection_index_non_increasing".into(),
        passed: a_mono,
        details: format!("{} standard-variant runs", core_runs.len()),
    });
    let q_cap = core_runs.iter().all(|(c, ..)| q_cap_respected(c));
    checks.push(CheckOutcome {
        name: "evaluation_cap".into(),
        passed: q_cap,
        details: "per-node evaluations within q_h before refinement".into(),
    });
    let fast_bound = fast_runs.iter().all(|r| r.3);
    checks.push(CheckOutcome {
        name: "fast_active_set_bound".into(),
        passed: fast_bound,
        details: "|X_t| <= t for the fast variant".into(),
    });

    // Information inequality: summed per-point bound.
    let mut info_ok = true;
    let mut worst: f64 = 0.0;
    for (c, ..) in core_runs.iter().chain(&fast_runs) {
        let rep = eval::info_accounting(&c.trace, c.dim, &config.kernel, config.noise_var)?;
        let bound = rep.c4 * config.noise_var * 2.0 * rep.mutual_info;
        if rep.j_n > 0.0 {
            let ratio = rep.j_n / bound;
            worst = worst.max(ratio);
            info_ok &= rep.j_n <= bound * (1.0 + 1e-9);
        }
    }
    checks.push(CheckOutcome {
        name: "information_inequality".into(),
        passed: info_ok,
        details: format!("worst J_n to C4*s2*logdet ratio {worst:.4}"),
    });

    // Confidence calibration: binomial bound on the chance of any
    // E1 violation per run.
    let n_runs = core_runs.len() as f64;
    let violating = core_runs
        .iter()
        .filter(|(c, ..)| c.summary.e1_violations > 0)
        .count() as f64;
    let rate = violating / n_runs;
    let bound = config.delta + 3.0 * (config.delta * (1.0 - config.delta) / n_runs).sqrt();
    checks.push(CheckOutcome {
        name: "confidence_calibration".into(),
        passed: rate <= bound,
        details: format!("E1 violation rate {rate:.4} vs bound {bound:.4}"),
    });

    // Deviation bounds on violation-free runs.
    let mut dev = DeviationCheck::default();
    let mut clean_runs = 0usize;
    for (c, truth, ..) in &core_runs {
        if c.summary.e1_violations == 0 && c.summary.e2_violations == 0 {
            clean_runs += 1;
            let d = deviation_bound_check(c, truth);
            dev.checked += d.checked;
            dev.coarse_failures += d.coarse_failures;
            dev.posterior_failures += d.posterior_failures;
        }
    }
    checks.push(CheckOutcome {
        name: "deviation_bounds".into(),
        passed: dev.coarse_failures == 0 && dev.posterior_failures == 0,
        details: format!(
            "{} evaluations over {clean_runs} clean runs: {} coarse, {} posterior failures",
            dev.checked, dev.coarse_failures, dev.posterior_failures
        ),
    });

    Ok(VerifyReport { checks })
}

fn posterior_oracle_check() -> Result<CheckOutcome> {
    use crate::gp::PosteriorState;
    let kernels = [
        KernelSpec::se(1.0, 1.0),
        KernelSpec::matern(crate::kernel::MaternNu::Half, 1.0, 1.0),
        KernelSpec::matern(crate::kernel::MaternNu::ThreeHalves, 0.8, 0.7),
        KernelSpec::matern(crate::kernel::MaternNu::FiveHalves, 1.2, 1.5),
        KernelSpec::RationalQuadratic {
            scale: 1.0,
            length: 1.0,
        },
    ];
    let mut rng = stream(2024, Purpose::Net);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let kernel = &kernels[trial % kernels.len()];
        let dim = 1 + trial % 2;
        let n = 1 + rng.gen_range(0..40);
        let noise = 0.05 + rng.gen::<f64>();
        let mut state = PosteriorState::new(kernel.clone(), noise);
        let mut pts = Vec::new();
        let mut obs = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let y: f64 = rng.gen::<f64>() * 4.0 - 2.0;
            state.update(&x, y)?;
            pts.push(x);
            obs.push(y);
        }
        // Brute force: dense J assembled and solved by pivoted elimination.
        let mut j = SymMatrix::zeros(n);
        for i in 0..n {
            for k in 0..=i {
                let mut v = kernel.covariance(&pts[i], &pts[k])?;
                if i == k {
                    v += noise;
                }
                j.set(i, k, v);
            }
        }
        let alpha = solve_dense(&j, &obs)?;
        let probe: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let kvec: Vec<f64> = pts
            .iter()
            .map(|p| kernel.covariance(&probe, p))
            .collect::<Result<_>>()?;
        let mu_oracle: f64 = kvec.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let w = solve_dense(&j, &kvec)?;
        let var_oracle = kernel.covariance(&probe, &probe)?
            - kvec.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let (mu, sd) = state.posterior(&probe)?;
        let scale = kernel.total_scale();
        worst = worst
            .max((mu - mu_oracle).abs() / scale)
            .max((sd * sd - var_oracle).abs() / scale);
    }
    Ok(CheckOutcome {
        name: "posterior_oracle_equivalence".into(),
        passed: worst <= 1e-8,
        details: format!("worst relative deviation {worst:.3e} over 50 datasets"),
    })
}

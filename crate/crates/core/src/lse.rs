//! The level-set estimation algorithm: parameter schedules, running
//! confidence bounds per active cell, candidate selection and the
//! refine-versus-evaluate loop producing the classified regions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GroundTruth, PosteriorState};
use crate::kernel::SmoothnessProfile;
use crate::partition::{NodeId, PartitionParams, PartitionTree};

/// Depth budget: `ceil(log(n) / (2 alpha log(1/rho_bar)))`.
pub fn compute_h_max(n: usize, alpha: f64, rho_bar: f64) -> u32 {
    let n = n.max(2) as f64;
    (n.ln() / (2.0 * alpha * (1.0 / rho_bar).ln())).ceil() as u32
}

/// Confidence scaling `sqrt(2 log(2 n 2^{2 h} / delta))`, with the
/// real-valued depth budget `h = log(n) / (2 alpha log(1/rho_bar))` inside
/// the logarithm.
pub fn compute_beta_n(n: usize, delta: f64, alpha: f64, rho_bar: f64) -> f64 {
    let n = n.max(2) as f64;
    let h_real = n.ln() / (2.0 * alpha * (1.0 / rho_bar).ln());
    let log_arg = 2f64.ln() + n.ln() + 2.0 * h_real * 2f64.ln() - delta.ln();
    (2.0 * log_arg).sqrt()
}

/// `log(exp(a) + exp(b))` without overflow.
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

const C3_TRUNCATION: usize = 64;

/// Chaining tail constant `sum_{m>=1} 2^{-(m-1)} (sqrt(log m) +
/// sqrt(2 m D' log 2))`, truncated at 64 terms (the tail is below 1e-15 of
/// the partial sum).
fn chaining_c3(d_m_prime: f64) -> f64 {
    (1..=C3_TRUNCATION)
        .map(|m| {
            let m_f = m as f64;
            let w = 2f64.powi(-(m as i32 - 1));
            w * (m_f.ln().max(0.0).sqrt() + (2.0 * m_f * d_m_prime * 2f64.ln()).sqrt())
        })
        .sum()
}

/// Per-depth bounds on within-cell variation, for depths `0..=h_max+1`
/// (children of depth-`h_max` cells still carry bounds), monotonized
/// backwards so that `V_h <= 2 V_{h+1}`.
pub fn compute_v_schedule(
    profile: &SmoothnessProfile,
    params: &PartitionParams,
    h_max: u32,
    delta: f64,
    metric_dim: f64,
    covering_constant: f64,
    v_scale: f64,
) -> Vec<f64> {
    let alpha = profile.alpha;
    let d_m_prime = metric_dim / alpha;
    let diam = profile.delta_k;
    // Covering constant of (X, d_k) at the doubled exponent 2 D_m', lifted
    // from the Euclidean constant: first push the exponent from D_m to
    // 2 D_m (costs diam^{D_m}), then change metrics, which costs
    // (C_k^{2 D_m'} + diam / delta_k^alpha)^{2 D_m'}. Computed in log space.
    let log_c_a2 = covering_constant.ln() + metric_dim * diam.ln();
    let log_inner = log_sum_exp(
        2.0 * d_m_prime * profile.c_k.ln(),
        diam.ln() - alpha * profile.delta_k.ln(),
    );
    let log_c_a_prime = log_c_a2 + 2.0 * d_m_prime * log_inner;
    let c2 = 2.0 * (2f64.ln() + log_c_a_prime + (std::f64::consts::PI.powi(2) / 6.0).ln());
    let c3 = chaining_c3(d_m_prime);

    let mut v: Vec<f64> = (0..=h_max + 1)
        .map(|h| {
            let r = params.v1 * params.rho.powi(h as i32);
            // delta_h = delta / (2^h h_max)
            let log_inv_delta_h = h as f64 * 2f64.ln() + (h_max as f64).ln() - delta.ln();
            let log_term = (1.0 / r).ln().max(0.0);
            let inner = (c2 + 2.0 * log_inv_delta_h + 4.0 * d_m_prime * log_term).max(0.0);
            v_scale * profile.g(r) * (inner.sqrt() + c3)
        })
        .collect();
    for h in (0..v.len() - 1).rev() {
        v[h] = v[h].min(2.0 * v[h + 1]);
    }
    v
}

/// Evaluation caps `q_h = ceil(noise_var beta^2 / V_h^2)` for
/// `h = 0..=h_max`.
pub fn compute_q_schedule(noise_var: f64, beta_n: f64, v_schedule: &[f64], h_max: u32) -> Vec<u64> {
    (0..=h_max as usize)
        .map(|h| {
            let q = (noise_var * beta_n * beta_n / (v_schedule[h] * v_schedule[h])).ceil();
            q.clamp(1.0, 1e18) as u64
        })
        .collect()
}

/// Inputs of a run: budget, threshold and the derived schedules.
#[derive(Debug, Clone, Serialize)]
pub struct AlgoParams {
    pub budget: usize,
    pub tau: f64,
    pub delta: f64,
    /// Hölder exponent of the fitted smoothness profile (for rational
    /// quadratic kernels this is the recorded convention, not a closed
    /// form).
    pub alpha: f64,
    pub beta_n: f64,
    /// `V_0 ..= V_{h_max+1}`.
    pub v_schedule: Vec<f64>,
    pub h_max: u32,
    /// `q_0 ..= q_{h_max}`.
    pub q_schedule: Vec<u64>,
    pub v_scale: f64,
    pub covering_constant: f64,
    pub metric_dim: f64,
    pub noise_var: f64,
}

impl AlgoParams {
    /// Derives every schedule from the smoothness profile and partition
    /// geometry.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        budget: usize,
        tau: f64,
        delta: f64,
        profile: &SmoothnessProfile,
        params: &PartitionParams,
        metric_dim: f64,
        covering_constant: f64,
        v_scale: f64,
        noise_var: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) || delta == 0.0 {
            return Err(Error::Config {
                field: "delta".into(),
                message: format!("must lie in (0,1), got {delta}"),
            });
        }
        if v_scale <= 0.0 {
            return Err(Error::Config {
                field: "v_scale".into(),
                message: "must be positive".into(),
            });
        }
        let alpha = profile.alpha;
        let h_max = compute_h_max(budget, alpha, params.rho_bar);
        let beta_n = compute_beta_n(budget, delta, alpha, params.rho_bar);
        let v_schedule = compute_v_schedule(
            profile,
            params,
            h_max,
            delta,
            metric_dim,
            covering_constant,
            v_scale,
        );
        let q_schedule = compute_q_schedule(noise_var, beta_n, &v_schedule, h_max);
        let p = AlgoParams {
            budget,
            tau,
            delta,
            alpha,
            beta_n,
            v_schedule,
            h_max,
            q_schedule,
            v_scale,
            covering_constant,
            metric_dim,
            noise_var,
        };
        p.validate()?;
        Ok(p)
    }

    /// Schedule invariants: positive monotonized `V`, caps at least one.
    pub fn validate(&self) -> Result<()> {
        if self.v_schedule.len() != self.h_max as usize + 2 {
            return Err(Error::Config {
                field: "v_schedule".into(),
                message: "length must be h_max + 2".into(),
            });
        }
        for (h, v) in self.v_schedule.iter().enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::Config {
                    field: format!("v_schedule[{h}]"),
                    message: format!("must be positive and finite, got {v}"),
                });
            }
        }
        for h in 0..self.v_schedule.len() - 1 {
            if self.v_schedule[h] > 2.0 * self.v_schedule[h + 1] {
                return Err(Error::Config {
                    field: format!("v_schedule[{h}]"),
                    message: "violates V_h <= 2 V_{h+1}".into(),
                });
            }
        }
        if self.q_schedule.len() != self.h_max as usize + 1
            || self.q_schedule.contains(&0)
        {
            return Err(Error::Config {
                field: "q_schedule".into(),
                message: "caps must cover 0..=h_max and be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn v_at(&self, depth: u32) -> f64 {
        self.v_schedule[depth as usize]
    }

    pub fn q_at(&self, depth: u32) -> u64 {
        self.q_schedule[depth as usize]
    }
}

/// An active cell: running bounds and its evaluation count.
#[derive(Debug, Clone, Copy)]
pub struct ActiveEntry {
    pub id: NodeId,
    pub l_bar: f64,
    pub u_bar: f64,
    pub eval_count: u64,
}

impl ActiveEntry {
    fn fresh(id: NodeId) -> Self {
        ActiveEntry {
            id,
            l_bar: f64::NEG_INFINITY,
            u_bar: f64::INFINITY,
            eval_count: 0,
        }
    }

    /// Selection index of the standard rule: distance of the bound interval
    /// from the threshold.
    pub fn a_value(&self, tau: f64) -> f64 {
        (self.u_bar - tau).max(tau - self.l_bar)
    }
}

/// What happened at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Evaluate,
    Refine,
    ClassifyS,
    ClassifyR,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Evaluate => "evaluate",
            Action::Refine => "refine",
            Action::ClassifyS => "classify_s",
            Action::ClassifyR => "classify_r",
        }
    }
}

impl std::str::FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "evaluate" => Ok(Action::Evaluate),
            "refine" => Ok(Action::Refine),
            "classify_s" => Ok(Action::ClassifyS),
            "classify_r" => Ok(Action::ClassifyR),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// One line of the run trace. Columns, in order:
/// step, action, depth, index, mu, sigma, l_bar, u_bar, n_e.
/// For evaluate and refine records the posterior and bounds are those seen
/// at selection time (the posterior entering the step).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub action: Action,
    pub depth: u32,
    pub index: u64,
    pub mean: f64,
    pub stddev: f64,
    pub l_bar: f64,
    pub u_bar: f64,
    pub n_evals: usize,
}

impl TraceRecord {
    pub fn node(&self) -> NodeId {
        NodeId {
            depth: self.depth,
            index: self.index,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{}",
            self.step,
            self.action.as_str(),
            self.depth,
            self.index,
            self.mean,
            self.stddev,
            self.l_bar,
            self.u_bar,
            self.n_evals
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split('\t').collect();
        let bad = |message: &str| Error::Config {
            field: "trace".into(),
            message: message.into(),
        };
        if parts.len() != 9 {
            return Err(bad("expected 9 tab-separated columns"));
        }
        Ok(TraceRecord {
            step: parts[0].parse().map_err(|_| bad("step"))?,
            action: parts[1].parse().map_err(|_| bad("action"))?,
            depth: parts[2].parse().map_err(|_| bad("depth"))?,
            index: parts[3].parse().map_err(|_| bad("index"))?,
            mean: parts[4].parse().map_err(|_| bad("mu"))?,
            stddev: parts[5].parse().map_err(|_| bad("sigma"))?,
            l_bar: parts[6].parse().map_err(|_| bad("l_bar"))?,
            u_bar: parts[7].parse().map_err(|_| bad("u_bar"))?,
            n_evals: parts[8].parse().map_err(|_| bad("n_e"))?,
        })
    }
}

/// Non-posterior work counters. `coord_ops` counts per-coordinate
/// operations (cell splitting), `entry_scans` counts active entries touched
/// by selection passes.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OpCounters {
    pub entry_scans: u64,
    pub coord_ops: u64,
    pub splits: u64,
}

impl OpCounters {
    pub fn total(&self) -> u64 {
        self.entry_scans + self.coord_ops
    }
}

/// Aggregates of a finished run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub n_evals: usize,
    pub n_refinements: u64,
    pub n_steps: u64,
    pub max_depth: u32,
    pub e1_violations: u64,
    pub e2_violations: u64,
    pub evals_by_depth: Vec<u64>,
    pub counters: OpCounters,
}

/// Final output of a run: the classified regions, the untouched frontier,
/// the full trace and summary counters.
#[derive(Debug, Clone)]
pub struct Classification {
    pub dim: usize,
    pub s_hat: Vec<NodeId>,
    pub r_hat: Vec<NodeId>,
    pub unclassified: Vec<NodeId>,
    pub trace: Vec<TraceRecord>,
    pub summary: RunSummary,
    pub params: AlgoParams,
}

impl Classification {
    /// Exact tiling check: the classified and active cells are pairwise
    /// non-nested and their dyadic volumes sum to the whole domain.
    pub fn tiles_domain(&self) -> bool {
        tiles_domain(
            self.s_hat
                .iter()
                .chain(&self.r_hat)
                .chain(&self.unclassified)
                .copied(),
        )
    }
}

/// Exact dyadic tiling check for a family of cells.
pub fn tiles_domain(cells: impl IntoIterator<Item = NodeId>) -> bool {
    let cells: Vec<NodeId> = cells.into_iter().collect();
    let max_depth = cells.iter().map(|c| c.depth).max().unwrap_or(0);
    if max_depth >= 127 {
        return false;
    }
    let mut volume: u128 = 0;
    let mut seen = std::collections::HashSet::new();
    for c in &cells {
        if !seen.insert(*c) {
            return false;
        }
        volume += 1u128 << (max_depth - c.depth);
    }
    if volume != 1u128 << max_depth {
        return false;
    }
    // Equal volume plus no nesting pins down an exact tiling.
    for c in &cells {
        let mut anc = *c;
        while let Some(p) = anc.parent() {
            if seen.contains(&p) {
                return false;
            }
            anc = p;
        }
    }
    true
}

/// Live state of a run.
pub struct RunState {
    pub params: AlgoParams,
    pub active: Vec<ActiveEntry>,
    pub s_hat: Vec<NodeId>,
    pub r_hat: Vec<NodeId>,
    pub posterior: PosteriorState,
    pub t: u64,
    pub n_evals: usize,
    pub trace: Vec<TraceRecord>,
    pub counters: OpCounters,
    pub e1_violations: u64,
    pub e2_violations: u64,
    pub evals_by_depth: Vec<u64>,
    n_refinements: u64,
    max_depth: u32,
    cache: HashMap<NodeId, (f64, f64)>,
    cache_version: u64,
}

impl RunState {
    /// Initializes the run with the root cell active, bounds computed from
    /// the prior, and an initial classification pass (step 0).
    pub fn new(params: AlgoParams, tree: &mut PartitionTree, truth: &GroundTruth) -> Result<Self> {
        params.validate()?;
        let posterior = PosteriorState::new(truth.kernel().clone(), params.noise_var);
        let mut state = RunState {
            evals_by_depth: vec![0; params.h_max as usize + 2],
            params,
            active: vec![ActiveEntry::fresh(NodeId::ROOT)],
            s_hat: Vec::new(),
            r_hat: Vec::new(),
            posterior,
            t: 0,
            n_evals: 0,
            trace: Vec::new(),
            counters: OpCounters::default(),
            e1_violations: 0,
            e2_violations: 0,
            n_refinements: 0,
            max_depth: 0,
            cache: HashMap::new(),
            cache_version: 0,
        };
        state.refresh_bounds(tree)?;
        state.classify_and_prune(tree)?;
        Ok(state)
    }

    /// Posterior at a node's center, cached per posterior version.
    pub fn posterior_at(&mut self, tree: &mut PartitionTree, id: NodeId) -> Result<(f64, f64)> {
        if self.cache_version != self.posterior.version() {
            self.cache.clear();
            self.cache_version = self.posterior.version();
        }
        if let Some(v) = self.cache.get(&id) {
            return Ok(*v);
        }
        let center = tree.ensure(id).center.clone();
        let v = self.posterior.posterior(&center)?;
        self.cache.insert(id, v);
        Ok(v)
    }

    /// Instantaneous bounds `(l_t, u_t)` for a cell: the tighter of its own
    /// confidence interval and the parent's interval widened by `V_{h-1}`,
    /// then widened by `V_h` for within-cell variation.
    fn instant_bounds(&mut self, tree: &mut PartitionTree, id: NodeId) -> Result<(f64, f64)> {
        let beta = self.params.beta_n;
        let v_h = self.params.v_at(id.depth);
        let (mu, sigma) = self.posterior_at(tree, id)?;
        let mut lo = mu - beta * sigma;
        let mut hi = mu + beta * sigma;
        if let Some(parent) = id.parent() {
            let v_parent = self.params.v_at(parent.depth);
            let (mu_p, sigma_p) = self.posterior_at(tree, parent)?;
            lo = lo.max(mu_p - beta * sigma_p - v_parent);
            hi = hi.min(mu_p + beta * sigma_p + v_parent);
        }
        Ok((lo - v_h, hi + v_h))
    }

    /// Folds fresh instantaneous bounds into every active entry's running
    /// bounds.
    pub fn refresh_bounds(&mut self, tree: &mut PartitionTree) -> Result<()> {
        for i in 0..self.active.len() {
            let id = self.active[i].id;
            let (l, u) = self.instant_bounds(tree, id)?;
            let e = &mut self.active[i];
            e.l_bar = e.l_bar.max(l);
            e.u_bar = e.u_bar.min(u);
        }
        Ok(())
    }

    /// Moves decided cells out of the active set: `l_bar >= tau` to the
    /// super-level region, `u_bar < tau` to the sub-level region.
    pub fn classify_and_prune(&mut self, tree: &mut PartitionTree) -> Result<()> {
        let tau = self.params.tau;
        let mut remaining = Vec::with_capacity(self.active.len());
        for entry in std::mem::take(&mut self.active) {
            let action = if entry.l_bar >= tau {
                Some(Action::ClassifyS)
            } else if entry.u_bar < tau {
                Some(Action::ClassifyR)
            } else {
                None
            };
            match action {
                Some(a) => {
                    let (mu, sigma) = self.posterior_at(tree, entry.id)?;
                    self.trace.push(TraceRecord {
                        step: self.t,
                        action: a,
                        depth: entry.id.depth,
                        index: entry.id.index,
                        mean: mu,
                        stddev: sigma,
                        l_bar: entry.l_bar,
                        u_bar: entry.u_bar,
                        n_evals: self.n_evals,
                    });
                    if a == Action::ClassifyS {
                        self.s_hat.push(entry.id);
                    } else {
                        self.r_hat.push(entry.id);
                    }
                }
                None => remaining.push(entry),
            }
        }
        self.active = remaining;
        Ok(())
    }

    /// Picks the better of two scored entries: higher value first, ties by
    /// lower depth then lower index.
    pub(crate) fn better_candidate(
        best: Option<(usize, f64, NodeId)>,
        candidate: (usize, f64, NodeId),
    ) -> bool {
        match best {
            None => true,
            Some((_, bv, bid)) => {
                candidate.1 > bv
                    || (candidate.1 == bv
                        && (candidate.2.depth, candidate.2.index) < (bid.depth, bid.index))
            }
        }
    }

    /// Standard selection: the active cell whose bound interval deviates
    /// most from the threshold. Returns its position in the active vector.
    pub fn select_candidate(&mut self, _tree: &mut PartitionTree) -> Result<Option<usize>> {
        let tau = self.params.tau;
        self.counters.entry_scans += self.active.len() as u64;
        let mut best: Option<(usize, f64, NodeId)> = None;
        for (i, entry) in self.active.iter().enumerate() {
            let candidate = (i, entry.a_value(tau), entry.id);
            if Self::better_candidate(best, candidate) {
                best = Some(candidate);
            }
        }
        Ok(best.map(|(i, ..)| i))
    }

    /// Replaces the entry at `pos` with its two children; the children
    /// start from infinite running bounds and immediately absorb the
    /// parent-informed instantaneous bounds.
    pub(crate) fn refine_entry(&mut self, tree: &mut PartitionTree, pos: usize) -> Result<()> {
        let entry = self.active.swap_remove(pos);
        let (c1, c2) = tree.refine(entry.id);
        self.counters.splits += 1;
        self.counters.coord_ops += 4 * tree.dim() as u64;
        self.n_refinements += 1;
        self.max_depth = self.max_depth.max(c1.depth);
        for id in [c1, c2] {
            let mut child = ActiveEntry::fresh(id);
            let (l, u) = self.instant_bounds(tree, id)?;
            child.l_bar = l;
            child.u_bar = u;
            self.active.push(child);
        }
        Ok(())
    }

    /// Evaluates the entry's center: one noisy observation, posterior
    /// update, and the E1/E2 diagnostic counters checked against the
    /// ground truth.
    pub(crate) fn evaluate_entry(
        &mut self,
        tree: &mut PartitionTree,
        truth: &mut GroundTruth,
        pos: usize,
    ) -> Result<()> {
        let id = self.active[pos].id;
        let (mu, sigma) = self.posterior_at(tree, id)?;
        let center = tree.ensure(id).center.clone();
        let (f, y) = truth.observe_with_value(&center)?;
        if (f - mu).abs() > self.params.beta_n * sigma {
            self.e1_violations += 1;
        }
        if cell_variation_exceeds(truth, tree, id, self.params.v_at(id.depth)) {
            self.e2_violations += 1;
        }
        self.posterior.update(&center, y)?;
        self.n_evals += 1;
        let depth = id.depth.min(self.params.h_max + 1) as usize;
        self.evals_by_depth[depth] += 1;
        self.active[pos].eval_count += 1;
        Ok(())
    }

    pub(crate) fn push_action_record(&mut self, entry: ActiveEntry, action: Action, mu: f64, sigma: f64) {
        self.trace.push(TraceRecord {
            step: self.t,
            action,
            depth: entry.id.depth,
            index: entry.id.index,
            mean: mu,
            stddev: sigma,
            l_bar: entry.l_bar,
            u_bar: entry.u_bar,
            n_evals: self.n_evals,
        });
    }

    /// One iteration of the standard variant. Returns `false` when the
    /// active set is empty (run complete).
    pub fn step(&mut self, tree: &mut PartitionTree, truth: &mut GroundTruth) -> Result<bool> {
        let Some(pos) = self.select_candidate(tree)? else {
            return Ok(false);
        };
        self.t += 1;
        let entry = self.active[pos];
        let (mu, sigma) = self.posterior_at(tree, entry.id)?;
        let refine = self.params.beta_n * sigma < self.params.v_at(entry.id.depth)
            && entry.id.depth <= self.params.h_max;
        if refine {
            self.push_action_record(entry, Action::Refine, mu, sigma);
            self.refine_entry(tree, pos)?;
        } else {
            self.evaluate_entry(tree, truth, pos)?;
            self.push_action_record(entry, Action::Evaluate, mu, sigma);
        }
        self.refresh_bounds(tree)?;
        self.classify_and_prune(tree)?;
        Ok(true)
    }

    /// Consumes the state into the final classification.
    pub fn into_classification(self, tree: &PartitionTree) -> Classification {
        Classification {
            dim: tree.dim(),
            s_hat: self.s_hat,
            r_hat: self.r_hat,
            unclassified: self.active.iter().map(|e| e.id).collect(),
            trace: self.trace,
            summary: RunSummary {
                n_evals: self.n_evals,
                n_refinements: self.n_refinements,
                n_steps: self.t,
                max_depth: self.max_depth,
                e1_violations: self.e1_violations,
                e2_violations: self.e2_violations,
                evals_by_depth: self.evals_by_depth,
                counters: self.counters,
            },
            params: self.params,
        }
    }
}

/// True when the grid-restricted variation of the path inside the cell
/// exceeds `v_h`. Cells without grid points report no violation.
fn cell_variation_exceeds(
    truth: &GroundTruth,
    tree: &mut PartitionTree,
    id: NodeId,
    v_h: f64,
) -> bool {
    let cell = &tree.ensure(id).cell;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (p, v) in truth.grid_points().iter().zip(truth.grid_values()) {
        if cell.contains(p) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    hi > lo && hi - lo > v_h
}

/// Runs the standard variant to completion: until the budget is spent or
/// nothing is left to classify. Deterministic given the truth's seed and
/// the parameters.
pub fn run(
    params: AlgoParams,
    tree: &mut PartitionTree,
    truth: &mut GroundTruth,
) -> Result<Classification> {
    let mut state = RunState::new(params, tree, truth)?;
    while state.n_evals < state.params.budget && state.step(tree, truth)? {}
    Ok(state.into_classification(tree))
}

//! Run evaluation: the level-set discrepancy metric against the true path,
//! information-gain accounting with the per-level eigenvalue bound, and
//! packing / rate-fit diagnostics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gp::{factorize_with_jitter, GroundTruth};
use crate::kernel::{euclidean, KernelSpec};
use crate::linalg::{symmetric_eigenvalues, SymMatrix};
use crate::lse::{Action, Classification, TraceRecord};
use crate::partition::{Cell, PartitionParams, PartitionTree};
use crate::rng::{stream, Purpose};

/// Grid-based estimate of the discrepancy `sup |f - tau|` over the
/// symmetric difference of the estimated and true super-level sets.
#[derive(Debug, Clone, Copy)]
pub struct DiscrepancyReport {
    pub l_value: f64,
    pub sym_diff_fraction: f64,
    pub grid_resolution: usize,
}

/// Membership test against a union of cells.
fn region_contains(cells: &[Cell], x: &[f64]) -> bool {
    cells.iter().any(|c| c.contains(x))
}

/// Compares the classification against the true level set on the dense
/// grid. Cells never classified count as outside the estimate, matching an
/// output consisting of the super-level region only.
pub fn discrepancy(
    classification: &Classification,
    truth: &GroundTruth,
    tau: f64,
) -> DiscrepancyReport {
    let cells: Vec<Cell> = classification
        .s_hat
        .iter()
        .map(|id| PartitionTree::cell_of(classification.dim, *id))
        .collect();
    let mut l_value = 0.0_f64;
    let mut mismatched = 0usize;
    let grid = truth.grid_points();
    for (p, f) in grid.iter().zip(truth.grid_values()) {
        let in_true = *f >= tau;
        let in_est = region_contains(&cells, p);
        if in_true != in_est {
            mismatched += 1;
            l_value = l_value.max((f - tau).abs());
        }
    }
    let (l_value, frac) = if grid.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (l_value, mismatched as f64 / grid.len() as f64)
    };
    DiscrepancyReport {
        l_value,
        sym_diff_fraction: frac,
        grid_resolution: truth.grid_resolution(),
    }
}

/// `1/2 log det(I + noise_var^{-1} K)` over the given points (with
/// multiplicity), via a factorized log-determinant.
pub fn mutual_information(
    points: &[Vec<f64>],
    kernel: &KernelSpec,
    noise_var: f64,
) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let n = points.len();
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut v = kernel.covariance(&points[i], &points[j])? / noise_var;
            if i == j {
                v += 1.0;
            }
            m.set(i, j, v);
        }
    }
    Ok(0.5 * factorize_with_jitter(&m)?.log_det())
}

/// Per-depth share of the posterior-variance sum.
#[derive(Debug, Clone, Copy)]
pub struct LevelAccounting {
    pub depth: u32,
    pub n_h: u64,
    pub j_nh: f64,
}

/// Information accounting of one run: `J_n` (posterior variances at
/// evaluation times), the mutual information of the evaluated points, the
/// constant `C_4 = noise_var^{-1} / log(1 + noise_var^{-1})` and the
/// per-depth split.
#[derive(Debug, Clone)]
pub struct InfoGainReport {
    pub j_n: f64,
    pub mutual_info: f64,
    pub c4: f64,
    pub per_level: Vec<LevelAccounting>,
}

pub fn c4_constant(noise_var: f64) -> f64 {
    let inv = 1.0 / noise_var;
    inv / inv.ln_1p()
}

/// Sums trace variances at evaluation actions and computes the mutual
/// information of the evaluated centers.
pub fn info_accounting(
    trace: &[TraceRecord],
    dim: usize,
    kernel: &KernelSpec,
    noise_var: f64,
) -> Result<InfoGainReport> {
    let mut j_n = 0.0;
    let mut points = Vec::new();
    let mut by_depth: Vec<LevelAccounting> = Vec::new();
    for rec in trace {
        if rec.action != Action::Evaluate {
            continue;
        }
        let var = rec.stddev * rec.stddev;
        j_n += var;
        points.push(PartitionTree::center_of(dim, rec.node()));
        match by_depth.iter_mut().find(|l| l.depth == rec.depth) {
            Some(l) => {
                l.n_h += 1;
                l.j_nh += var;
            }
            None => by_depth.push(LevelAccounting {
                depth: rec.depth,
                n_h: 1,
                j_nh: var,
            }),
        }
    }
    by_depth.sort_by_key(|l| l.depth);
    Ok(InfoGainReport {
        j_n,
        mutual_info: mutual_information(&points, kernel, noise_var)?,
        c4: c4_constant(noise_var),
        per_level: by_depth,
    })
}

/// Per-level eigenvalue bound on the information gain.
#[derive(Debug, Clone, Copy)]
pub struct LevelBound {
    pub depth: u32,
    pub n_h: u64,
    pub j_nh: f64,
    /// Net size `ceil(2^h log(2^h h_max / delta))` before capping.
    pub m_h: usize,
    /// True when the net was subsampled down to the cap.
    pub capped: bool,
    pub eps_h: f64,
    pub i_h: f64,
    pub bound: f64,
    pub violated: bool,
}

pub const DEFAULT_NET_CAP: usize = 4096;
/// Pinned O(1) slack added to every per-level bound.
pub const LEVEL_BOUND_SLACK: f64 = 1.0;

/// Evaluates the per-level bound `J_{n,h} <= C_4 (I_h + n_h eps_h + slack)`
/// for every depth with evaluations: `m_h` points are sampled uniformly
/// from the balls of radius `eps_h` around the evaluated depth-`h` centers
/// (disjoint by the center-separation property), the empirical Gram
/// spectrum is computed, and `I_h` is minimized over the retained rank
/// `T_h` with the inner maximum over `s` exhausted.
#[allow(clippy::too_many_arguments)]
pub fn level_information_bounds(
    trace: &[TraceRecord],
    dim: usize,
    params: &PartitionParams,
    kernel: &KernelSpec,
    noise_var: f64,
    delta: f64,
    h_max: u32,
    seed: u64,
    net_cap: usize,
) -> Result<Vec<LevelBound>> {
    let mut rng = stream(seed, Purpose::Net);
    let c4 = c4_constant(noise_var);
    let mut out = Vec::new();
    let depths: Vec<u32> = {
        let mut d: Vec<u32> = trace
            .iter()
            .filter(|r| r.action == Action::Evaluate)
            .map(|r| r.depth)
            .collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    for depth in depths {
        let evals: Vec<&TraceRecord> = trace
            .iter()
            .filter(|r| r.action == Action::Evaluate && r.depth == depth)
            .collect();
        let n_h = evals.len() as u64;
        let j_nh: f64 = evals.iter().map(|r| r.stddev * r.stddev).sum();
        let mut centers: Vec<Vec<f64>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for r in &evals {
            if seen.insert(r.node()) {
                centers.push(PartitionTree::center_of(dim, r.node()));
            }
        }
        let eps_h = (params.v2 * params.rho.powi(depth as i32)).min(1.0 / n_h as f64);
        let m_theory = ((2f64.powi(depth as i32)
            * (2f64.powi(depth as i32) * h_max.max(1) as f64 / delta).ln())
        .ceil() as usize)
            .max(1);
        let m = m_theory.min(net_cap);
        let pts = sample_from_balls(&centers, eps_h, m, dim, &mut rng);
        let mut gram = SymMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                gram.set(i, j, kernel.covariance(&pts[i], &pts[j])?);
            }
        }
        let eigs = symmetric_eigenvalues(&gram);
        // Suffix sums: tail[t] = sum of eigenvalues below rank t.
        let mut tail = vec![0.0; m + 1];
        for t in (0..m).rev() {
            tail[t] = tail[t + 1] + eigs[t].max(0.0);
        }
        let mut i_h = f64::INFINITY;
        for t_h in 1..=n_h as usize {
            let tail_sum = tail[t_h.min(m)];
            let mut worst = f64::NEG_INFINITY;
            for s in 1..=n_h as usize {
                // The log keeps the formula's net size even when the
                // realized net was subsampled.
                let value = t_h as f64 * (s as f64 * m_theory as f64 / noise_var).ln()
                    + (n_h as f64 - s as f64) / noise_var * tail_sum;
                worst = worst.max(value);
            }
            i_h = i_h.min(worst);
        }
        let bound = c4 * (i_h + n_h as f64 * eps_h + LEVEL_BOUND_SLACK);
        out.push(LevelBound {
            depth,
            n_h,
            j_nh,
            m_h: m_theory,
            capped: m_theory > net_cap,
            eps_h,
            i_h,
            bound,
            violated: j_nh > bound,
        });
    }
    Ok(out)
}

/// Uniform samples from the union of equal-radius balls. The balls around
/// distinct same-depth centers are disjoint, so picking a ball uniformly
/// and a point uniformly inside it is uniform over the union.
fn sample_from_balls(
    centers: &[Vec<f64>],
    radius: f64,
    count: usize,
    dim: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let c = &centers[rng.gen_range(0..centers.len())];
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
        for (d, cc) in dir.iter_mut().zip(c) {
            *d = cc + *d / norm * r;
        }
        // Clamp to the domain; balls at legal depths sit inside their cells,
        // so this only guards floating-point edge cases.
        for v in dir.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        out.push(dir);
    }
    out
}

/// Greedy maximal `r`-separated subset in insertion order; a documented
/// 1/2-approximation of the packing number.
pub fn packing_estimate(points: &[Vec<f64>], radius: f64) -> usize {
    let mut kept: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if kept.iter().all(|q| euclidean(p, q) >= radius) {
            kept.push(p);
        }
    }
    kept.len()
}

/// Log-log least-squares fit of median errors against budgets.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub budgets: Vec<usize>,
    pub median_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub theory_slope: f64,
    /// Indices of budgets excluded for non-positive medians.
    pub excluded: Vec<usize>,
}

pub fn rate_fit(
    budgets: &[usize],
    median_errors: &[f64],
    alpha: f64,
    dim: f64,
) -> Result<RateFit> {
    if budgets.len() != median_errors.len() {
        return Err(Error::Config {
            field: "rate_fit".into(),
            message: "budgets and medians must have equal length".into(),
        });
    }
    if budgets.len() < 3 {
        return Err(Error::Config {
            field: "rate_fit".into(),
            message: "need at least 3 budgets".into(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&n, &e)) in budgets.iter().zip(median_errors).enumerate() {
        if e > 0.0 && e.is_finite() {
            xs.push((n as f64).ln());
            ys.push(e.ln());
        } else {
            excluded.push(i);
        }
    }
    if xs.len() < 2 {
        return Err(Error::Config {
            field: "rate_fit".into(),
            message: "fewer than 2 usable budgets after exclusions".into(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        budgets: budgets.to_vec(),
        median_errors: median_errors.to_vec(),
        slope,
        intercept: my - slope * mx,
        theory_slope: -alpha / (dim + 2.0 * alpha),
        excluded,
    })
}

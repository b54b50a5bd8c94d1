//! The low-complexity variant: selection by a posterior-plus-variation
//! score and count-based refinement. The active set grows by at most one
//! cell per step, so `|X_t| <= t` throughout.

use crate::error::Result;
use crate::gp::GroundTruth;
use crate::lse::{Action, AlgoParams, Classification, RunState};
use crate::partition::PartitionTree;

impl RunState {
    /// Modified selection rule: maximize
    /// `|tau - mu_t| + beta_n sigma_t + V_h`; ties by lower depth then
    /// lower index.
    pub fn select_candidate_fast(&mut self, tree: &mut PartitionTree) -> Result<Option<usize>> {
        let tau = self.params.tau;
        let beta = self.params.beta_n;
        self.counters.entry_scans += self.active.len() as u64;
        let mut best: Option<(usize, f64, crate::partition::NodeId)> = None;
        for i in 0..self.active.len() {
            let entry = self.active[i];
            let (mu, sigma) = self.posterior_at(tree, entry.id)?;
            let value = (tau - mu).abs() + beta * sigma + self.params.v_at(entry.id.depth);
            let candidate = (i, value, entry.id);
            if Self::better_candidate(best, candidate) {
                best = Some(candidate);
            }
        }
        Ok(best.map(|(i, ..)| i))
    }

    /// One iteration of the fast variant: refine once a cell has collected
    /// its `q_h` evaluations, evaluate otherwise. Classification pruning is
    /// unchanged.
    pub fn step_fast(&mut self, tree: &mut PartitionTree, truth: &mut GroundTruth) -> Result<bool> {
        let Some(pos) = self.select_candidate_fast(tree)? else {
            return Ok(false);
        };
        self.t += 1;
        let entry = self.active[pos];
        let (mu, sigma) = self.posterior_at(tree, entry.id)?;
        let refine = entry.id.depth <= self.params.h_max
            && entry.eval_count >= self.params.q_at(entry.id.depth);
        if refine {
            self.push_action_record(entry, Action::Refine, mu, sigma);
            self.refine_entry(tree, pos)?;
        } else {
            self.evaluate_entry(tree, truth, pos)?;
            self.push_action_record(entry, Action::Evaluate, mu, sigma);
        }
        self.refresh_bounds(tree)?;
        self.classify_and_prune(tree)?;
        debug_assert!(self.active.len() as u64 <= self.t + 1);
        Ok(true)
    }
}

/// Runs the fast variant to completion.
pub fn run_fast(
    params: AlgoParams,
    tree: &mut PartitionTree,
    truth: &mut GroundTruth,
) -> Result<Classification> {
    let mut state = RunState::new(params, tree, truth)?;
    while state.n_evals < state.params.budget && state.step_fast(tree, truth)? {}
    Ok(state.into_classification(tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::lse::compute_q_schedule;
    use crate::partition::{hypercube_params, NodeId};
    use std::collections::HashMap;

    fn fast_params(budget: usize, dim: usize, v_scale: f64) -> AlgoParams {
        let profile = KernelSpec::se(1.0, 1.0).smoothness_profile((dim as f64).sqrt());
        let pparams = hypercube_params(dim);
        let c_a = (1.0 + (dim as f64).sqrt()).powi(dim as i32);
        AlgoParams::derive(
            budget, 0.0, 0.1, &profile, &pparams, dim as f64, c_a, v_scale, 0.1,
        )
        .unwrap()
    }

    #[test]
    fn fresh_root_selected_when_alone() {
        let params = fast_params(10, 1, 1.0);
        let mut tree = PartitionTree::new_unit(1);
        let truth = GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 0, 1).unwrap();
        let mut state = RunState::new(params, &mut tree, &truth).unwrap();
        let pos = state.select_candidate_fast(&mut tree).unwrap().unwrap();
        assert_eq!(state.active[pos].id, NodeId::ROOT);
    }

    #[test]
    fn larger_v_term_wins_when_posterior_equal() {
        // Two never-evaluated cells at different depths share mu and sigma
        // under the prior; the deeper one wins only if V is larger there.
        let params = fast_params(10, 1, 1.0);
        let v = params.v_schedule.clone();
        let mut tree = PartitionTree::new_unit(1);
        let truth = GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 0, 2).unwrap();
        let mut state = RunState::new(params, &mut tree, &truth).unwrap();
        tree.refine(NodeId::ROOT);
        state.active = vec![
            crate::lse::ActiveEntry {
                id: NodeId { depth: 1, index: 1 },
                l_bar: -1.0,
                u_bar: 1.0,
                eval_count: 0,
            },
            crate::lse::ActiveEntry {
                id: NodeId::ROOT,
                l_bar: -1.0,
                u_bar: 1.0,
                eval_count: 0,
            },
        ];
        let pos = state.select_candidate_fast(&mut tree).unwrap().unwrap();
        let expect_root = v[0] > v[1];
        assert_eq!(state.active[pos].id == NodeId::ROOT, expect_root);
    }

    #[test]
    fn mean_far_from_tau_dominates() {
        // With sigma and V equal, |tau - mu| decides; exercise via a
        // posterior trained to differ across two deep cells.
        let mut params = fast_params(6, 1, 1.0);
        for v in params.v_schedule.iter_mut() {
            *v = 1.0;
        }
        params.q_schedule = compute_q_schedule(0.1, params.beta_n, &params.v_schedule, params.h_max);
        let mut tree = PartitionTree::new_unit(1);
        let mut truth = GroundTruth::new(KernelSpec::se(1.0, 0.01), 1, 0.1, 0, 3).unwrap();
        let mut state = RunState::new(params, &mut tree, &truth).unwrap();
        // Two far-apart cells at the same depth; a short length scale makes
        // their posteriors independent.
        let a = NodeId { depth: 3, index: 1 };
        let b = NodeId { depth: 3, index: 8 };
        let ca = tree.ensure(a).center.clone();
        let cb = tree.ensure(b).center.clone();
        for _ in 0..4 {
            let _ = truth.observe(&ca);
            state.posterior.update(&ca, 5.0).unwrap();
            state.posterior.update(&cb, 0.1).unwrap();
        }
        state.active = vec![
            crate::lse::ActiveEntry {
                id: b,
                l_bar: -1.0,
                u_bar: 1.0,
                eval_count: 0,
            },
            crate::lse::ActiveEntry {
                id: a,
                l_bar: -1.0,
                u_bar: 1.0,
                eval_count: 0,
            },
        ];
        let pos = state.select_candidate_fast(&mut tree).unwrap().unwrap();
        assert_eq!(state.active[pos].id, a);
    }

    #[test]
    fn count_rule_refines_after_q_evals() {
        // Force q_h = 1 everywhere: each node is evaluated once, then
        // refined the next time it is selected (while h <= h_max).
        let mut params = fast_params(12, 1, 1.0);
        for q in params.q_schedule.iter_mut() {
            *q = 1;
        }
        let mut tree = PartitionTree::new_unit(1);
        let mut truth = GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 0, 7).unwrap();
        let c = run_fast(params, &mut tree, &mut truth).unwrap();
        let mut evals: HashMap<NodeId, u64> = HashMap::new();
        for rec in &c.trace {
            match rec.action {
                Action::Evaluate => *evals.entry(rec.node()).or_default() += 1,
                Action::Refine => assert_eq!(evals.get(&rec.node()), Some(&1)),
                _ => {}
            }
        }
        assert!(c.summary.n_refinements > 0);
    }

    #[test]
    fn beyond_h_max_only_evaluation() {
        let params = fast_params(30, 1, 1.0);
        let h_max = params.h_max;
        let mut tree = PartitionTree::new_unit(1);
        let mut truth = GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 0, 11).unwrap();
        let c = run_fast(params, &mut tree, &mut truth).unwrap();
        for rec in &c.trace {
            if rec.action == Action::Refine {
                assert!(rec.depth <= h_max);
            }
        }
    }

    #[test]
    fn active_set_bounded_by_step_count() {
        // |X_t| <= t, reconstructed from the trace: refinements add one,
        // classifications remove one.
        for seed in 0..10u64 {
            let params = fast_params(40, 1, 1.0);
            let mut tree = PartitionTree::new_unit(1);
            let mut truth =
                GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 101, seed).unwrap();
            let c = run_fast(params, &mut tree, &mut truth).unwrap();
            let mut active: i64 = 1;
            for rec in &c.trace {
                match rec.action {
                    Action::Refine => active += 1,
                    Action::ClassifyS | Action::ClassifyR => active -= 1,
                    Action::Evaluate => {}
                }
                assert!(
                    active <= rec.step.max(1) as i64,
                    "seed {seed}: |X_t|={active} > t={}",
                    rec.step
                );
            }
        }
    }

    #[test]
    fn refinements_bounded_by_budget() {
        // Every refinement needs at least one prior evaluation of the node.
        for seed in [3u64, 5, 8] {
            let params = fast_params(25, 1, 1.0);
            let budget = params.budget as u64;
            let mut tree = PartitionTree::new_unit(1);
            let mut truth =
                GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 0, seed).unwrap();
            let c = run_fast(params, &mut tree, &mut truth).unwrap();
            assert!(c.summary.n_refinements <= budget);
        }
    }

    #[test]
    fn classification_pruning_still_runs() {
        let mut tree = PartitionTree::new_unit(1);
        let mut truth = GroundTruth::new(KernelSpec::se(1.0, 1.0), 1, 0.1, 101, 23).unwrap();
        let profile = KernelSpec::se(1.0, 1.0).smoothness_profile(1.0);
        let pparams = hypercube_params(1);
        let params =
            AlgoParams::derive(60, -5.0, 0.1, &profile, &pparams, 1.0, 2.0, 0.2, 0.1).unwrap();
        let c = run_fast(params, &mut tree, &mut truth).unwrap();
        assert!(!c.s_hat.is_empty());
        assert!(c.tiles_domain());
    }

    #[test]
    fn coordinate_ops_scale_with_dimension() {
        // Smoke check of the cost-counter structure across dimensions with
        // the synthetic diagonal kernel.
        let mut totals = Vec::new();
        for dim in [1usize, 2, 4] {
            let profile = KernelSpec::WhiteNoise { scale: 1.0 }
                .smoothness_profile((dim as f64).sqrt());
            let pparams = hypercube_params(dim);
            let c_a = (1.0 + (dim as f64).sqrt()).powi(dim as i32);
            let params = AlgoParams::derive(
                20, 0.0, 0.1, &profile, &pparams, dim as f64, c_a, 1.0, 0.1,
            )
            .unwrap();
            let mut tree = PartitionTree::new_unit(dim);
            let mut truth =
                GroundTruth::new(KernelSpec::WhiteNoise { scale: 1.0 }, dim, 0.1, 0, 1).unwrap();
            let c = run_fast(params, &mut tree, &mut truth).unwrap();
            totals.push((dim, c.summary.counters.coord_ops, c.summary.counters.splits));
        }
        for (dim, coord, splits) in totals {
            assert_eq!(coord, 4 * splits * dim as u64);
            assert!(splits > 0, "dim {dim} never refined");
        }
    }
}

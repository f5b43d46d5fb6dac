//! Ground-truth machinery: exact dynamic-programming evaluation, exhaustive
//! Pareto front enumeration on small models, and a Monte-Carlo hypervolume
//! estimator used to cross-check the exact algorithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::pareto;
use crate::seeding;

/// Maximum number of candidate policies the enumerator will visit.
pub const ENUMERATION_BOUND: f64 = 1e7;

/// Explicit finite-horizon MOMDP model.
///
/// `transitions` is `[s][a][s']` row-major, `rewards` is `[s][a][obj]`.
/// Terminal states absorb: they are never stepped and pay nothing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabularModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_objectives: usize,
    pub start_state: usize,
    pub transitions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
    pub horizon: usize,
    pub gamma: f64,
}

impl TabularModel {
    pub fn zeros(
        n_states: usize,
        n_actions: usize,
        n_objectives: usize,
        horizon: usize,
        gamma: f64,
    ) -> Self {
        Self {
            n_states,
            n_actions,
            n_objectives,
            start_state: 0,
            transitions: vec![0.0; n_states * n_actions * n_states],
            rewards: vec![0.0; n_states * n_actions * n_objectives],
            terminal: vec![false; n_states],
            horizon,
            gamma,
        }
    }

    pub fn set_transition(&mut self, s: usize, a: usize, s2: usize, p: f64) {
        self.transitions[(s * self.n_actions + a) * self.n_states + s2] = p;
    }

    pub fn set_reward(&mut self, s: usize, a: usize, r: &[f64]) {
        let base = (s * self.n_actions + a) * self.n_objectives;
        self.rewards[base..base + self.n_objectives].copy_from_slice(r);
    }

    pub fn set_terminal(&mut self, s: usize) {
        self.terminal[s] = true;
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_objectives;
        &self.rewards[base..base + self.n_objectives]
    }

    /// True when every non-terminal transition row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        for s in 0..self.n_states {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_actions {
                if !self
                    .transition_row(s, a)
                    .iter()
                    .any(|&p| (p - 1.0).abs() < 1e-12)
                {
                    return false;
                }
            }
        }
        true
    }

    fn successor(&self, s: usize, a: usize) -> usize {
        self.transition_row(s, a)
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| i)
            .unwrap()
    }

    /// Exact finite-horizon discounted return of a deterministic policy map.
    pub fn dp_evaluate(&self, policy: &[usize]) -> Vec<f64> {
        let probs: Vec<f64> = (0..self.n_states)
            .flat_map(|s| {
                (0..self.n_actions).map(move |a| if policy[s] == a { 1.0 } else { 0.0 })
            })
            .collect();
        self.dp_evaluate_stochastic(&probs)
    }

    /// Exact return of a stochastic policy given as `[s][a]` probabilities.
    pub fn dp_evaluate_stochastic(&self, probs: &[f64]) -> Vec<f64> {
        let n = self.n_objectives;
        // v[s][obj], backward over the horizon
        let mut v = vec![0.0; self.n_states * n];
        for _ in 0..self.horizon {
            let mut next = vec![0.0; self.n_states * n];
            for s in 0..self.n_states {
                if self.terminal[s] {
                    continue;
                }
                for a in 0..self.n_actions {
                    let pa = probs[s * self.n_actions + a];
                    if pa == 0.0 {
                        continue;
                    }
                    let r = self.reward(s, a);
                    for (k, rk) in r.iter().enumerate() {
                        next[s * n + k] += pa * rk;
                    }
                    for (s2, p) in self.transition_row(s, a).iter().enumerate() {
                        if *p == 0.0 {
                            continue;
                        }
                        for k in 0..n {
                            next[s * n + k] += pa * p * self.gamma * v[s2 * n + k];
                        }
                    }
                }
            }
            v = next;
        }
        v[self.start_state * n..(self.start_state + 1) * n].to_vec()
    }

    /// State-occupancy probabilities per step: `occ[t][s]`.
    pub fn occupancies(&self, probs: &[f64]) -> Vec<Vec<f64>> {
        let mut occ = vec![vec![0.0; self.n_states]; self.horizon];
        occ[0][self.start_state] = 1.0;
        for t in 1..self.horizon {
            let (prev, rest) = occ.split_at_mut(t);
            let prev = &prev[t - 1];
            let cur = &mut rest[0];
            for s in 0..self.n_states {
                if prev[s] == 0.0 || self.terminal[s] {
                    continue;
                }
                for a in 0..self.n_actions {
                    let pa = probs[s * self.n_actions + a];
                    if pa == 0.0 {
                        continue;
                    }
                    for (s2, p) in self.transition_row(s, a).iter().enumerate() {
                        cur[s2] += prev[s] * pa * p;
                    }
                }
            }
        }
        occ
    }

    /// Time-indexed action values under a stochastic policy:
    /// `q[t][s][a][obj]` for the scalarized reward `omega . r`.
    pub fn scalarized_q_values(&self, probs: &[f64], omega: &[f64]) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.n_states * self.n_actions]; self.horizon];
        let mut v = vec![0.0; self.n_states];
        for t in (0..self.horizon).rev() {
            let mut v_new = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                if self.terminal[s] {
                    continue;
                }
                for a in 0..self.n_actions {
                    let mut qa: f64 =
                        self.reward(s, a).iter().zip(omega).map(|(r, w)| r * w).sum();
                    for (s2, p) in self.transition_row(s, a).iter().enumerate() {
                        if *p != 0.0 {
                            qa += self.gamma * p * v[s2];
                        }
                    }
                    q[t][s * self.n_actions + a] = qa;
                    v_new[s] += probs[s * self.n_actions + a] * qa;
                }
            }
            v = v_new;
        }
        q
    }

    /// Exact Pareto front over deterministic policies.
    ///
    /// Deterministic-transition models are enumerated by branching over the
    /// action taken at each newly visited state along the (single)
    /// trajectory, which covers every distinct stationary behavior without
    /// touching unreachable states. Stochastic models fall back to full
    /// policy-map enumeration, guarded at [`ENUMERATION_BOUND`].
    pub fn exact_pareto_front(&self) -> Result<Vec<Vec<f64>>> {
        let returns = self.enumerate_returns()?;
        let idx = pareto::nondominated_indices(&returns);
        Ok(idx.into_iter().map(|i| returns[i].clone()).collect())
    }

    /// Return vectors of all enumerable deterministic policies.
    pub fn enumerate_returns(&self) -> Result<Vec<Vec<f64>>> {
        if self.is_deterministic() {
            self.enumerate_deterministic_trajectories()
        } else {
            self.enumerate_policy_maps()
        }
    }

    fn enumerate_deterministic_trajectories(&self) -> Result<Vec<Vec<f64>>> {
        struct Dfs<'a> {
            model: &'a TabularModel,
            assignment: Vec<Option<usize>>,
            out: Vec<Vec<f64>>,
            visited: u64,
        }
        impl Dfs<'_> {
            fn walk(&mut self, s: usize, t: usize, disc: f64, acc: &mut [f64]) -> Result<()> {
                if self.model.terminal[s] || t == self.model.horizon {
                    self.visited += 1;
                    if self.visited as f64 > ENUMERATION_BOUND {
                        return Err(Error::EnumerationBound {
                            estimate: self.visited as f64,
                        });
                    }
                    self.out.push(acc.to_vec());
                    return Ok(());
                }
                let actions: Vec<usize> = match self.assignment[s] {
                    Some(a) => vec![a],
                    None => (0..self.model.n_actions).collect(),
                };
                let fresh = self.assignment[s].is_none();
                for a in actions {
                    if fresh {
                        self.assignment[s] = Some(a);
                    }
                    let r = self.model.reward(s, a);
                    for (acc_k, rk) in acc.iter_mut().zip(r) {
                        *acc_k += disc * rk;
                    }
                    let s2 = self.model.successor(s, a);
                    self.walk(s2, t + 1, disc * self.model.gamma, acc)?;
                    for (acc_k, rk) in acc.iter_mut().zip(r) {
                        *acc_k -= disc * rk;
                    }
                    if fresh {
                        self.assignment[s] = None;
                    }
                }
                Ok(())
            }
        }
        let mut dfs = Dfs {
            model: self,
            assignment: vec![None; self.n_states],
            out: Vec::new(),
            visited: 0,
        };
        let mut acc = vec![0.0; self.n_objectives];
        dfs.walk(self.start_state, 0, 1.0, &mut acc)?;
        Ok(dfs.out)
    }

    fn enumerate_policy_maps(&self) -> Result<Vec<Vec<f64>>> {
        let count = (self.n_actions as f64).powi(self.n_states as i32);
        if count > ENUMERATION_BOUND {
            return Err(Error::EnumerationBound { estimate: count });
        }
        let total = (self.n_actions as u64).pow(self.n_states as u32);
        let indices: Vec<u64> = (0..total).collect();
        Ok(par_map(indices, |mut code| {
            let mut policy = vec![0usize; self.n_states];
            for slot in policy.iter_mut() {
                *slot = (code % self.n_actions as u64) as usize;
                code /= self.n_actions as u64;
            }
            self.dp_evaluate(&policy)
        }))
    }
}

/// Monte-Carlo hypervolume estimate with its standard error.
///
/// Samples uniformly in the box spanned by the reference point and the
/// component-wise maximum of the front; the estimate is the dominated
/// fraction scaled by the box volume. Chunked with per-chunk seeds so the
/// result is identical whatever the thread count.
pub fn mc_hypervolume(
    points: &[Vec<f64>],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    if points.is_empty() || samples == 0 {
        return (0.0, 0.0);
    }
    let dim = reference.len();
    let mut upper = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for (u, x) in upper.iter_mut().zip(p) {
            *u = u.max(*x);
        }
    }
    let volume: f64 = upper
        .iter()
        .zip(reference)
        .map(|(u, r)| (u - r).max(0.0))
        .product();
    if volume == 0.0 {
        return (0.0, 0.0);
    }
    const CHUNKS: usize = 64;
    let per_chunk = samples / CHUNKS;
    let remainder = samples % CHUNKS;
    let plan: Vec<(u64, usize)> = (0..CHUNKS)
        .map(|c| (c as u64, per_chunk + usize::from(c < remainder)))
        .collect();
    let hits: Vec<u64> = par_map(plan, |(chunk, count)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, chunk));
        let mut hit = 0u64;
        let mut z = vec![0.0; dim];
        for _ in 0..count {
            for (zi, (u, r)) in z.iter_mut().zip(upper.iter().zip(reference)) {
                *zi = r + rng.gen::<f64>() * (u - r);
            }
            if points
                .iter()
                .any(|p| p.iter().zip(&z).all(|(pi, zi)| pi >= zi))
            {
                hit += 1;
            }
        }
        hit
    });
    let hit_total: u64 = hits.iter().sum();
    let p_hat = hit_total as f64 / samples as f64;
    let estimate = p_hat * volume;
    let stderr = volume * (p_hat * (1.0 - p_hat) / samples as f64).sqrt();
    (estimate, stderr)
}

/// Contents of an `oracle.json` artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRecord {
    pub env: String,
    pub params: serde_json::Value,
    pub front: Vec<Vec<f64>>,
    pub hypervolume: f64,
    pub reference_point: Vec<f64>,
}

impl OracleRecord {
    /// Builds the record for an environment: exact front, the frozen
    /// reference point (component-wise minimum over every enumerated return
    /// minus 5% of the range), and the exact hypervolume.
    pub fn for_env(env: &dyn crate::env::Env) -> Result<Self> {
        let model = env.tabular_model();
        let returns = model.enumerate_returns()?;
        let idx = pareto::nondominated_indices(&returns);
        let front: Vec<Vec<f64>> = idx.into_iter().map(|i| returns[i].clone()).collect();
        let reference_point = pareto::reference_point(&returns);
        let hypervolume = pareto::hypervolume(&front, &reference_point)?;
        Ok(Self {
            env: env.id().to_string(),
            params: env.params(),
            front,
            hypervolume,
            reference_point,
        })
    }
}

/// True when `solution` is a member of `front` or dominated by some member,
/// at tolerance `tol` per component.
pub fn covered_by_front(solution: &[f64], front: &[Vec<f64>], tol: f64) -> bool {
    front
        .iter()
        .any(|m| solution.iter().zip(m).all(|(s, f)| *s <= f + tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, FruitTree, GridTradeoff, RandomMomdp};

    #[test]
    fn horizon_one_dp_is_single_reward() {
        let mut m = TabularModel::zeros(2, 2, 2, 1, 0.9);
        m.set_transition(0, 0, 1, 1.0);
        m.set_transition(0, 1, 1, 1.0);
        m.set_transition(1, 0, 1, 1.0);
        m.set_transition(1, 1, 1, 1.0);
        m.set_reward(0, 1, &[2.0, 3.0]);
        assert_eq!(m.dp_evaluate(&[1, 0]), vec![2.0, 3.0]);
    }

    #[test]
    fn fruit_tree_path_is_discounted_leaf() {
        let gamma = 0.9;
        let env = FruitTree::new(2, 11, gamma).unwrap();
        let model = env.tabular_model();
        // "left, left" from the root reaches leaf 0 at the second step
        let policy = vec![0usize; model.n_states];
        let got = model.dp_evaluate(&policy);
        let expected: Vec<f64> = env.leaf_reward(0).iter().map(|r| gamma * r).collect();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dp_matches_rollout_on_deterministic_env() {
        let mut env = GridTradeoff::new(3, 0.95).unwrap();
        let model = env.tabular_model();
        let policy: Vec<usize> = (0..model.n_states).map(|_| 1).collect(); // always down
        let dp = model.dp_evaluate(&policy);
        let (_, mc) = crate::env::rollout(
            &mut env,
            |_| {
                let p = policy.clone();
                move |obs: &crate::env::Observation| p[obs.state]
            },
            4,
            3,
        );
        for (a, b) in dp.iter().zip(&mc) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fruit_tree_front_is_nondominated_leaf_subset() {
        let env = FruitTree::new(4, 42, 1.0).unwrap();
        let model = env.tabular_model();
        let returns = model.enumerate_returns().unwrap();
        assert_eq!(returns.len(), 16); // one per leaf
        let front = model.exact_pareto_front().unwrap();
        let leaves: Vec<Vec<f64>> = (0..16).map(|i| env.leaf_reward(i).to_vec()).collect();
        let idx = pareto::nondominated_indices(&leaves);
        assert_eq!(front.len(), idx.len());
        for f in &front {
            assert!(leaves.iter().any(|l| {
                l.iter().zip(f).all(|(a, b)| (a - b).abs() < 1e-12)
            }));
        }
    }

    #[test]
    fn identical_rewards_collapse_front_to_a_point() {
        let mut m = TabularModel::zeros(3, 2, 2, 3, 1.0);
        for s in 0..3 {
            for a in 0..2 {
                m.set_transition(s, a, (s + 1).min(2), 1.0);
                m.set_reward(s, a, &[1.0, 0.5]);
            }
        }
        let front = m.exact_pareto_front().unwrap();
        assert_eq!(front.len(), 1);
    }

    #[test]
    fn stochastic_enumeration_guard() {
        let env = RandomMomdp::new(20, 5, 2, 0, 5, 0.95).unwrap();
        let model = env.tabular_model();
        match model.exact_pareto_front() {
            Err(Error::EnumerationBound { estimate }) => assert!(estimate > ENUMERATION_BOUND),
            other => panic!("expected enumeration bound refusal, got {other:?}"),
        }
    }

    #[test]
    fn stochastic_enumeration_small_is_self_consistent() {
        let env = RandomMomdp::new(5, 2, 2, 1, 6, 0.95).unwrap();
        let model = env.tabular_model();
        let front = model.exact_pareto_front().unwrap();
        let again = pareto::nondominated_indices(&front);
        assert_eq!(again.len(), front.len());
    }

    #[test]
    fn mc_hypervolume_single_box() {
        let (est, stderr) = mc_hypervolume(&[vec![3.0, 2.0]], &[0.0, 0.0], 1_000_000, 7);
        assert!((est - 6.0).abs() <= 3.0 * stderr.max(1e-12));
    }

    #[test]
    fn mc_hypervolume_zero_volume_front() {
        let (est, _) = mc_hypervolume(&[vec![0.0, 0.0]], &[0.0, 0.0], 10_000, 7);
        assert_eq!(est, 0.0);
    }

    #[test]
    fn mc_hypervolume_deterministic_across_calls() {
        let pts = vec![vec![1.0, 3.0], vec![3.0, 1.0]];
        let a = mc_hypervolume(&pts, &[0.0, 0.0], 50_000, 3);
        let b = mc_hypervolume(&pts, &[0.0, 0.0], 50_000, 3);
        assert_eq!(a, b);
    }
}

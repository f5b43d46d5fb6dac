//! Full binary tree with six-objective leaf rewards.
//!
//! The agent starts at the root and descends one level per step (action 0 =
//! left child, 1 = right child). Interior transitions pay a zero vector; the
//! step into a leaf pays that leaf's fixed 6-dimensional reward and ends the
//! episode, so every episode lasts exactly `depth` steps. Leaf rewards are
//! drawn once, uniform in [0,1]^6, from the construction seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::TabularModel;
use crate::seeding;

use super::{Env, EnvSpec, Observation, StepOutcome};

pub const FRUIT_TREE_OBJECTIVES: usize = 6;

#[derive(Clone)]
pub struct FruitTree {
    depth: usize,
    seed: u64,
    leaf_rewards: Vec<Vec<f64>>,
    spec: EnvSpec,
    // (row, index within row); None until reset
    pos: Option<(usize, usize)>,
    done: bool,
}

impl FruitTree {
    pub fn new(depth: usize, seed: u64, gamma: f64) -> Result<Self> {
        if !(1..=8).contains(&depth) {
            return Err(Error::Config(format!(
                "fruit_tree depth must be in 1..=8, got {depth}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1], got {gamma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, 0x1eaf));
        let leaves = 1usize << depth;
        let leaf_rewards = (0..leaves)
            .map(|_| (0..FRUIT_TREE_OBJECTIVES).map(|_| rng.gen::<f64>()).collect())
            .collect();
        Ok(Self {
            depth,
            seed,
            leaf_rewards,
            spec: EnvSpec {
                n_objectives: FRUIT_TREE_OBJECTIVES,
                action_count: 2,
                horizon: depth,
                gamma,
                obs_dim: 2,
            },
            pos: None,
            done: false,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The fixed reward vector of leaf `index` (0-based, left to right).
    pub fn leaf_reward(&self, index: usize) -> &[f64] {
        &self.leaf_rewards[index]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_rewards.len()
    }

    fn node_state(row: usize, idx: usize) -> usize {
        (1 << row) - 1 + idx
    }

    fn observe(row: usize, idx: usize) -> Observation {
        Observation {
            values: vec![row as f64, idx as f64],
            state: Self::node_state(row, idx),
        }
    }
}

impl Env for FruitTree {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.pos = Some((0, 0));
        self.done = false;
        Self::observe(0, 0)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done || self.pos.is_none() {
            return Err(Error::EpisodeFinished);
        }
        if action >= 2 {
            return Err(Error::InvalidAction { action, count: 2 });
        }
        let (row, idx) = self.pos.unwrap();
        let (nrow, nidx) = (row + 1, 2 * idx + action);
        let terminal = nrow == self.depth;
        let reward = if terminal {
            self.leaf_rewards[nidx].clone()
        } else {
            vec![0.0; FRUIT_TREE_OBJECTIVES]
        };
        self.pos = Some((nrow, nidx));
        self.done = terminal;
        Ok(StepOutcome {
            obs: Self::observe(nrow, nidx),
            reward,
            terminal,
        })
    }

    fn state_count(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    fn tabular_model(&self) -> TabularModel {
        let n_states = self.state_count();
        let n_actions = 2;
        let n = FRUIT_TREE_OBJECTIVES;
        let mut model = TabularModel::zeros(n_states, n_actions, n, self.depth, self.spec.gamma);
        for row in 0..self.depth {
            for idx in 0..(1 << row) {
                let s = Self::node_state(row, idx);
                for a in 0..2 {
                    let nidx = 2 * idx + a;
                    let s2 = Self::node_state(row + 1, nidx);
                    model.set_transition(s, a, s2, 1.0);
                    if row + 1 == self.depth {
                        model.set_reward(s, a, &self.leaf_rewards[nidx]);
                    }
                }
            }
        }
        for idx in 0..(1 << self.depth) {
            model.set_terminal(Self::node_state(self.depth, idx));
        }
        model
    }

    fn clone_env(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn id(&self) -> &'static str {
        "fruit_tree"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({
            "depth": self.depth,
            "seed": self.seed,
            "gamma": self.spec.gamma,
        })
    }
}

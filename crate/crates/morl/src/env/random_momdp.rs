//! Seeded random MOMDP fixture for property tests.
//!
//! Transition rows are Dirichlet(1,...,1) draws (normalized unit-exponential
//! samples); rewards are uniform in [0,1]^n. State 0 is the start state and
//! episodes run to a fixed horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::TabularModel;
use crate::seeding;

use super::{Env, EnvSpec, Observation, StepOutcome};

#[derive(Clone)]
pub struct RandomMomdp {
    ns: usize,
    na: usize,
    seed: u64,
    // row-major [s][a][s']
    transitions: Vec<f64>,
    // [s][a][obj]
    rewards: Vec<f64>,
    spec: EnvSpec,
    state: usize,
    steps_taken: usize,
    done: bool,
    started: bool,
    episode_rng: ChaCha8Rng,
}

impl RandomMomdp {
    pub fn new(
        ns: usize,
        na: usize,
        n_objectives: usize,
        seed: u64,
        horizon: usize,
        gamma: f64,
    ) -> Result<Self> {
        if ns == 0 || ns > 20 {
            return Err(Error::Config(format!("ns must be in 1..=20, got {ns}")));
        }
        if na == 0 || na > 5 {
            return Err(Error::Config(format!("na must be in 1..=5, got {na}")));
        }
        if n_objectives < 2 || n_objectives > 4 {
            return Err(Error::Config(format!(
                "n_objectives must be in 2..=4, got {n_objectives}"
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1], got {gamma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, 0x3a7));
        let mut transitions = vec![0.0; ns * na * ns];
        for row in transitions.chunks_mut(ns) {
            let mut total = 0.0;
            for p in row.iter_mut() {
                // unit exponential via inverse CDF
                let u: f64 = rng.gen();
                *p = -(1.0 - u).ln();
                total += *p;
            }
            for p in row.iter_mut() {
                *p /= total;
            }
        }
        let rewards = (0..ns * na * n_objectives).map(|_| rng.gen::<f64>()).collect();
        Ok(Self {
            ns,
            na,
            seed,
            transitions,
            rewards,
            spec: EnvSpec {
                n_objectives,
                action_count: na,
                horizon,
                gamma,
                obs_dim: ns,
            },
            state: 0,
            steps_taken: 0,
            done: false,
            started: false,
            episode_rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    fn observe(&self, state: usize) -> Observation {
        let mut values = vec![0.0; self.ns];
        values[state] = 1.0;
        Observation { values, state }
    }

    fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.na + a) * self.ns;
        &self.transitions[base..base + self.ns]
    }

    fn reward(&self, s: usize, a: usize) -> &[f64] {
        let n = self.spec.n_objectives;
        let base = (s * self.na + a) * n;
        &self.rewards[base..base + n]
    }
}

impl Env for RandomMomdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.state = 0;
        self.steps_taken = 0;
        self.done = false;
        self.started = true;
        self.episode_rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, 0x7ab));
        self.observe(0)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done || !self.started {
            return Err(Error::EpisodeFinished);
        }
        if action >= self.na {
            return Err(Error::InvalidAction {
                action,
                count: self.na,
            });
        }
        let reward = self.reward(self.state, action).to_vec();
        let row = self.row(self.state, action);
        let u: f64 = self.episode_rng.gen();
        let mut acc = 0.0;
        let mut next = self.ns - 1;
        for (s2, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = s2;
                break;
            }
        }
        self.state = next;
        self.steps_taken += 1;
        let terminal = self.steps_taken >= self.spec.horizon;
        self.done = terminal;
        Ok(StepOutcome {
            obs: self.observe(next),
            reward,
            terminal,
        })
    }

    fn state_count(&self) -> usize {
        self.ns
    }

    fn tabular_model(&self) -> TabularModel {
        let mut model = TabularModel::zeros(
            self.ns,
            self.na,
            self.spec.n_objectives,
            self.spec.horizon,
            self.spec.gamma,
        );
        for s in 0..self.ns {
            for a in 0..self.na {
                for (s2, p) in self.row(s, a).iter().enumerate() {
                    model.set_transition(s, a, s2, *p);
                }
                model.set_reward(s, a, self.reward(s, a));
            }
        }
        model
    }

    fn clone_env(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn id(&self) -> &'static str {
        "random_momdp"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({
            "ns": self.ns,
            "na": self.na,
            "n": self.spec.n_objectives,
            "seed": self.seed,
            "horizon": self.spec.horizon,
            "gamma": self.spec.gamma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_rows_normalized() {
        let env = RandomMomdp::new(5, 2, 2, 0, 10, 0.95).unwrap();
        for s in 0..5 {
            for a in 0..2 {
                let sum: f64 = env.row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "row ({s},{a}) sums to {sum}");
            }
        }
    }

    #[test]
    fn same_seed_identical_kernels() {
        let a = RandomMomdp::new(7, 3, 3, 5, 10, 0.95).unwrap();
        let b = RandomMomdp::new(7, 3, 3, 5, 10, 0.95).unwrap();
        assert_eq!(a.transitions, b.transitions);
        assert_eq!(a.rewards, b.rewards);
        let c = RandomMomdp::new(7, 3, 3, 6, 10, 0.95).unwrap();
        assert_ne!(a.transitions, c.transitions);
    }

    #[test]
    fn starts_in_state_zero() {
        let mut env = RandomMomdp::new(5, 2, 2, 3, 10, 0.95).unwrap();
        let obs = env.reset(3);
        assert_eq!(obs.state, 0);
        assert_eq!(obs.values[0], 1.0);
    }

    #[test]
    fn bounds_rejected() {
        assert!(RandomMomdp::new(21, 2, 2, 0, 10, 0.95).is_err());
        assert!(RandomMomdp::new(5, 6, 2, 0, 10, 0.95).is_err());
        assert!(RandomMomdp::new(5, 2, 5, 0, 10, 0.95).is_err());
    }

    #[test]
    fn episodes_reproducible_for_fixed_seed() {
        let mut env = RandomMomdp::new(8, 3, 2, 1, 12, 0.95).unwrap();
        let mut visit = |seed: u64| {
            let mut states = vec![env.reset(seed).state];
            loop {
                let out = env.step(states.len() % 3).unwrap();
                states.push(out.obs.state);
                if out.terminal {
                    break;
                }
            }
            states
        };
        let a = visit(9);
        let b = visit(9);
        let c = visit(10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

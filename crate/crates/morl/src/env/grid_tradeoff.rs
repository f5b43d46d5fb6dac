//! Deterministic two-objective gridworld with conflicting goals.
//!
//! Cells are (row, col) on a `size` x `size` grid, start (0,0). Goal 1 sits
//! at (size-1, size-1), goal 2 at (size-1, 0). Objective i pays +1 on any
//! step that strictly decreases the Manhattan distance to goal i; when a
//! step decreases neither distance, both objectives pay -0.1. Reaching
//! either goal ends the episode; the horizon is 2*size.

use crate::error::{Error, Result};
use crate::oracle::TabularModel;

use super::{Env, EnvSpec, Observation, StepOutcome};

/// Actions in declaration order.
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)]; // up, down, left, right

#[derive(Clone)]
pub struct GridTradeoff {
    size: usize,
    spec: EnvSpec,
    pos: Option<(usize, usize)>,
    steps_taken: usize,
    done: bool,
}

impl GridTradeoff {
    pub fn new(size: usize, gamma: f64) -> Result<Self> {
        if !(2..=8).contains(&size) {
            return Err(Error::Config(format!(
                "grid_tradeoff size must be in 2..=8, got {size}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1], got {gamma}")));
        }
        Ok(Self {
            size,
            spec: EnvSpec {
                n_objectives: 2,
                action_count: 4,
                horizon: 2 * size,
                gamma,
                obs_dim: 2,
            },
            pos: None,
            steps_taken: 0,
            done: false,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn goals(&self) -> [(usize, usize); 2] {
        [(self.size - 1, self.size - 1), (self.size - 1, 0)]
    }

    fn state_of(&self, pos: (usize, usize)) -> usize {
        pos.0 * self.size + pos.1
    }

    fn observe(&self, pos: (usize, usize)) -> Observation {
        Observation {
            values: vec![pos.0 as f64, pos.1 as f64],
            state: self.state_of(pos),
        }
    }

    fn apply_move(&self, pos: (usize, usize), action: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[action];
        let r = pos.0 as isize + dr;
        let c = pos.1 as isize + dc;
        if r < 0 || c < 0 || r >= self.size as isize || c >= self.size as isize {
            pos // bumping the wall keeps the position
        } else {
            (r as usize, c as usize)
        }
    }

    fn reward_of(&self, pos: (usize, usize), next: (usize, usize)) -> Vec<f64> {
        let manhattan = |a: (usize, usize), b: (usize, usize)| {
            (a.0 as isize - b.0 as isize).unsigned_abs()
                + (a.1 as isize - b.1 as isize).unsigned_abs()
        };
        let improved: Vec<bool> = self
            .goals()
            .iter()
            .map(|&g| manhattan(next, g) < manhattan(pos, g))
            .collect();
        if improved.iter().any(|&b| b) {
            improved.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
        } else {
            vec![-0.1, -0.1]
        }
    }

    fn is_goal(&self, pos: (usize, usize)) -> bool {
        self.goals().contains(&pos)
    }
}

impl Env for GridTradeoff {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.pos = Some((0, 0));
        self.steps_taken = 0;
        self.done = false;
        self.observe((0, 0))
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done || self.pos.is_none() {
            return Err(Error::EpisodeFinished);
        }
        if action >= 4 {
            return Err(Error::InvalidAction { action, count: 4 });
        }
        let pos = self.pos.unwrap();
        let next = self.apply_move(pos, action);
        let reward = self.reward_of(pos, next);
        self.steps_taken += 1;
        let terminal = self.is_goal(next) || self.steps_taken >= self.spec.horizon;
        self.pos = Some(next);
        self.done = terminal;
        Ok(StepOutcome {
            obs: self.observe(next),
            reward,
            terminal,
        })
    }

    fn state_count(&self) -> usize {
        self.size * self.size
    }

    fn tabular_model(&self) -> TabularModel {
        let n_states = self.state_count();
        let mut model = TabularModel::zeros(n_states, 4, 2, self.spec.horizon, self.spec.gamma);
        for r in 0..self.size {
            for c in 0..self.size {
                let s = self.state_of((r, c));
                if self.is_goal((r, c)) {
                    model.set_terminal(s);
                }
                for a in 0..4 {
                    let next = self.apply_move((r, c), a);
                    model.set_transition(s, a, self.state_of(next), 1.0);
                    model.set_reward(s, a, &self.reward_of((r, c), next));
                }
            }
        }
        model
    }

    fn clone_env(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }

    fn id(&self) -> &'static str {
        "grid_tradeoff"
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "size": self.size, "gamma": self.spec.gamma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_origin() {
        let mut env = GridTradeoff::new(4, 0.95).unwrap();
        let obs = env.reset(7);
        assert_eq!(obs.values, vec![0.0, 0.0]);
        assert_eq!(obs.state, 0);
    }

    #[test]
    fn right_from_start_helps_goal_one_only() {
        let mut env = GridTradeoff::new(4, 0.95).unwrap();
        env.reset(0);
        let out = env.step(3).unwrap(); // right
        assert_eq!(out.reward, vec![1.0, 0.0]);
        assert!(!out.terminal);
    }

    #[test]
    fn down_from_start_helps_both() {
        let mut env = GridTradeoff::new(4, 0.95).unwrap();
        env.reset(0);
        let out = env.step(1).unwrap(); // down
        assert_eq!(out.reward, vec![1.0, 1.0]);
    }

    #[test]
    fn wasted_step_costs_both() {
        let mut env = GridTradeoff::new(4, 0.95).unwrap();
        env.reset(0);
        // up from (0,0) bumps the wall, helping neither objective
        let out = env.step(0).unwrap();
        assert_eq!(out.reward, vec![-0.1, -0.1]);
    }

    #[test]
    fn always_right_matches_hand_computation() {
        // Frozen hand computation: 3 rightward gains for objective 1, then
        // wall bumps until the horizon penalize both objectives.
        let gamma: f64 = 0.95;
        let mut env = GridTradeoff::new(4, gamma).unwrap();
        let mut obs = env.reset(0);
        let mut g = vec![0.0, 0.0];
        let mut disc = 1.0;
        for _ in 0..env.spec().horizon {
            let out = env.step(3).unwrap();
            g[0] += disc * out.reward[0];
            g[1] += disc * out.reward[1];
            disc *= gamma;
            obs = out.obs;
            if out.terminal {
                break;
            }
        }
        assert_eq!(obs.values, vec![0.0, 3.0]);
        let pow = |k: u32| gamma.powi(k as i32);
        let expected0 = 1.0 + gamma + pow(2) - 0.1 * (pow(3) + pow(4) + pow(5) + pow(6) + pow(7));
        let expected1 = -0.1 * (pow(3) + pow(4) + pow(5) + pow(6) + pow(7));
        assert!((g[0] - expected0).abs() < 1e-12);
        assert!((g[1] - expected1).abs() < 1e-12);
    }

    #[test]
    fn goal_terminates_episode() {
        let mut env = GridTradeoff::new(3, 0.95).unwrap();
        env.reset(0);
        // straight down the left edge reaches goal 2 at (2,0)
        assert!(!env.step(1).unwrap().terminal);
        let out = env.step(1).unwrap();
        assert!(out.terminal);
        assert!(env.step(1).is_err());
    }

    #[test]
    fn size_bounds_enforced() {
        assert!(GridTradeoff::new(1, 0.95).is_err());
        assert!(GridTradeoff::new(9, 0.95).is_err());
        assert!(GridTradeoff::new(2, 0.95).is_ok());
    }
}

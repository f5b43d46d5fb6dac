//! Vector-reward environments with enumerable exact Pareto fronts.
//!
//! All environments are discrete-state, discrete-action, finite-horizon.
//! Each observation carries both a feature vector (consumed by function
//! approximators) and the underlying state index (consumed by tabular
//! policies and by the model extractor in `oracle`).

mod fruit_tree;
mod grid_tradeoff;
mod random_momdp;

pub use fruit_tree::FruitTree;
pub use grid_tradeoff::GridTradeoff;
pub use random_momdp::RandomMomdp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::TabularModel;
use crate::seeding;

/// What the agent sees: a feature vector plus the discrete state index.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub state: usize,
}

/// Vector reward, one entry per objective.
pub type RewardVector = Vec<f64>;

/// Static description of an environment instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvSpec {
    pub n_objectives: usize,
    pub action_count: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub obs_dim: usize,
}

/// Result of one transition.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: RewardVector,
    pub terminal: bool,
}

/// One recorded transition.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub obs: Observation,
    pub action: usize,
    pub reward: RewardVector,
    pub next_obs: Observation,
    pub terminal: bool,
}

/// A full episode as recorded by [`rollout`].
#[derive(Clone, Debug)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub episode_seed: u64,
}

impl EpisodeTrace {
    /// Discounted return of the episode, one entry per objective.
    pub fn discounted_return(&self, gamma: f64, n_objectives: usize) -> RewardVector {
        let mut g = vec![0.0; n_objectives];
        let mut disc = 1.0;
        for step in &self.steps {
            for (gi, ri) in g.iter_mut().zip(&step.reward) {
                *gi += disc * ri;
            }
            disc *= gamma;
        }
        g
    }
}

/// A finite-horizon MOMDP instance.
///
/// Instances are single-threaded; clone one per concurrent task.
pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. Identical seeds reproduce identical episodes
    /// under identical action sequences.
    fn reset(&mut self, seed: u64) -> Observation;

    /// Applies one action. Fails if the action is out of range or the
    /// episode already terminated.
    fn step(&mut self, action: usize) -> Result<StepOutcome>;

    /// Number of discrete states.
    fn state_count(&self) -> usize;

    /// Explicit transition/reward model, for exact evaluation and
    /// enumeration.
    fn tabular_model(&self) -> TabularModel;

    fn clone_env(&self) -> Box<dyn Env>;

    /// String id used in run configs and artifacts.
    fn id(&self) -> &'static str;

    /// Constructor parameters, recorded in run artifacts.
    fn params(&self) -> serde_json::Value;
}

impl Clone for Box<dyn Env> {
    fn clone(&self) -> Self {
        self.clone_env()
    }
}

/// A decision rule mapping observations to actions, used by [`rollout`].
pub trait ActionSource {
    fn choose(&mut self, obs: &Observation) -> usize;
}

impl<F: FnMut(&Observation) -> usize> ActionSource for F {
    fn choose(&mut self, obs: &Observation) -> usize {
        self(obs)
    }
}

/// Runs `episodes` episodes and returns the traces together with the
/// Monte-Carlo mean of the discounted return per objective.
///
/// Episode `k` uses seed `derive(seed, k)` for both the environment and the
/// action source factory, so the outcome is independent of scheduling.
pub fn rollout<A, MkA>(
    env: &mut dyn Env,
    mut make_actions: MkA,
    episodes: usize,
    seed: u64,
) -> (Vec<EpisodeTrace>, RewardVector)
where
    A: ActionSource,
    MkA: FnMut(u64) -> A,
{
    let spec = env.spec().clone();
    let mut traces = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let ep_seed = seeding::derive(seed, ep as u64);
        let mut actions = make_actions(ep_seed);
        let mut obs = env.reset(ep_seed);
        let mut steps = Vec::new();
        for _ in 0..spec.horizon {
            let action = actions.choose(&obs);
            let out = env.step(action).expect("rollout stepped a finished episode");
            steps.push(TraceStep {
                obs: obs.clone(),
                action,
                reward: out.reward.clone(),
                next_obs: out.obs.clone(),
                terminal: out.terminal,
            });
            obs = out.obs;
            if out.terminal {
                break;
            }
        }
        traces.push(EpisodeTrace {
            steps,
            episode_seed: ep_seed,
        });
    }
    let mut mean = vec![0.0; spec.n_objectives];
    for trace in &traces {
        let g = trace.discounted_return(spec.gamma, spec.n_objectives);
        for (m, gi) in mean.iter_mut().zip(&g) {
            *m += gi;
        }
    }
    for m in &mut mean {
        *m /= episodes as f64;
    }
    (traces, mean)
}

/// Builds an environment from its string id and a parameter table.
pub fn from_config(id: &str, params: &EnvParams) -> Result<Box<dyn Env>> {
    match id {
        "fruit_tree" => Ok(Box::new(FruitTree::new(
            params.depth.unwrap_or(6),
            params.seed,
            params.gamma.unwrap_or(1.0),
        )?)),
        "grid_tradeoff" => Ok(Box::new(GridTradeoff::new(
            params.size.unwrap_or(4),
            params.gamma.unwrap_or(0.95),
        )?)),
        "random_momdp" => Ok(Box::new(RandomMomdp::new(
            params.ns.unwrap_or(5),
            params.na.unwrap_or(2),
            params.n.unwrap_or(2),
            params.seed,
            params.horizon.unwrap_or(10),
            params.gamma.unwrap_or(0.95),
        )?)),
        other => Err(Error::Config(format!(
            "unknown env id `{other}` (expected fruit_tree, grid_tradeoff, or random_momdp)"
        ))),
    }
}

/// Environment parameters as they appear in the run config.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EnvParams {
    #[serde(default)]
    pub seed: u64,
    pub gamma: Option<f64>,
    pub depth: Option<usize>,
    pub size: Option<usize>,
    pub ns: Option<usize>,
    pub na: Option<usize>,
    pub n: Option<usize>,
    pub horizon: Option<usize>,
}

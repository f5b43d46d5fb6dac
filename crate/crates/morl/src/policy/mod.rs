//! Stochastic policies with vector value heads, Monte-Carlo evaluation,
//! per-objective GAE, and the scalarized clipped-surrogate gradient step.

mod net;

pub use net::{MlpNet, Net, TabularNet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EpisodeTrace, Observation};
use crate::error::{Error, Result};
use crate::oracle::TabularModel;
use crate::seeding;
use crate::types::{PreferenceVector, ReturnVector};

/// Stochastic policy: a net producing action logits, sampled through a
/// categorical softmax.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Policy {
    pub net: Net,
}

impl Policy {
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        Self {
            net: Net::Tabular(TabularNet::zeros(n_states, n_actions)),
        }
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], n_actions: usize, seed: u64) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(n_actions);
        Self {
            net: Net::Mlp(MlpNet::new(dims, seed)),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, obs: &Observation) -> Vec<f64> {
        self.net.forward(obs)
    }

    pub fn probs(&self, obs: &Observation) -> Vec<f64> {
        softmax(&self.logits(obs))
    }

    pub fn log_probs(&self, obs: &Observation) -> Vec<f64> {
        log_softmax(&self.logits(obs))
    }

    pub fn greedy_action(&self, obs: &Observation) -> usize {
        argmax(&self.logits(obs))
    }

    /// Greedy (argmax-logit) deterministic policy map; tabular nets only.
    pub fn greedy_map(&self) -> Option<Vec<usize>> {
        match &self.net {
            Net::Tabular(t) => Some(
                (0..t.n_states)
                    .map(|s| argmax(t.row(s)))
                    .collect(),
            ),
            Net::Mlp(_) => None,
        }
    }

    /// Action probabilities for every state, `[s][a]` flat; tabular only.
    pub fn probs_table(&self) -> Option<Vec<f64>> {
        match &self.net {
            Net::Tabular(t) => {
                let mut out = Vec::with_capacity(t.n_states * t.n_outputs);
                for s in 0..t.n_states {
                    out.extend(softmax(t.row(s)));
                }
                Some(out)
            }
            Net::Mlp(_) => None,
        }
    }
}

/// Vector-valued state-value predictor with one output per objective.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueFn {
    pub net: Net,
}

impl ValueFn {
    pub fn tabular(n_states: usize, n_objectives: usize) -> Self {
        Self {
            net: Net::Tabular(TabularNet::zeros(n_states, n_objectives)),
        }
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], n_objectives: usize, seed: u64) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(n_objectives);
        Self {
            net: Net::Mlp(MlpNet::new(dims, seed)),
        }
    }

    pub fn predict(&self, obs: &Observation) -> Vec<f64> {
        self.net.forward(obs)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .iter()
        .map(|z| (z - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    logits.iter().map(|z| z - log_sum).collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Samples an action and returns it with its log-probability.
pub fn act(policy: &Policy, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<(usize, f64)> {
    let logits = policy.logits(obs);
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("non-finite action logits".into()));
    }
    let probs = softmax(&logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut action = probs.len() - 1;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            action = a;
            break;
        }
    }
    let lp = log_softmax(&logits)[action];
    Ok((action, lp))
}

/// Monte-Carlo mean discounted return of the stochastic policy.
pub fn evaluate_policy(
    env: &mut dyn Env,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> ReturnVector {
    let (_, mean) = crate::env::rollout(
        env,
        |ep_seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(ep_seed, 0xac7));
            let p = policy.clone();
            move |obs: &Observation| act(&p, obs, &mut rng).expect("finite logits").0
        },
        episodes,
        seed,
    );
    mean
}

/// Monte-Carlo mean discounted return of the greedy (argmax-logit) policy.
pub fn evaluate_greedy(
    env: &mut dyn Env,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> ReturnVector {
    let (_, mean) = crate::env::rollout(
        env,
        |_| {
            let p = policy.clone();
            move |obs: &Observation| p.greedy_action(obs)
        },
        episodes,
        seed,
    );
    mean
}

/// Exact expected return of a tabular stochastic policy on an explicit model.
pub fn dp_evaluate_policy(model: &TabularModel, policy: &Policy) -> Option<ReturnVector> {
    policy
        .probs_table()
        .map(|probs| model.dp_evaluate_stochastic(&probs))
}

/// Mean KL divergence KL(a || b) over a set of observations.
pub fn mean_kl(policy_a: &Policy, policy_b: &Policy, observations: &[Observation]) -> f64 {
    if observations.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for obs in observations {
        let la = policy_a.log_probs(obs);
        let lb = policy_b.log_probs(obs);
        let pa = softmax(&policy_a.logits(obs));
        for ((p, za), zb) in pa.iter().zip(&la).zip(&lb) {
            if *p > 0.0 {
                total += p * (za - zb);
            }
        }
    }
    total / observations.len() as f64
}

/// Per-timestep vector advantages with everything needed to recompute the
/// surrogate: behavior log-probabilities, observations, actions.
#[derive(Clone, Debug, Default)]
pub struct AdvantageBatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
}

impl AdvantageBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_objectives(&self) -> usize {
        self.advantages.first().map_or(0, |a| a.len())
    }
}

/// GAE recursion applied independently per objective.
///
/// `value_predictions` must hold one prediction per step plus one for the
/// final next observation (ignored when the last step terminated the
/// episode); `log_probs` are the behavior log-probabilities recorded when
/// the trace was collected.
pub fn gae_advantages(
    trace: &EpisodeTrace,
    value_predictions: &[Vec<f64>],
    gamma: f64,
    gae_lambda: f64,
    log_probs: &[f64],
) -> Result<AdvantageBatch> {
    let t_len = trace.steps.len();
    if value_predictions.len() != t_len + 1 {
        return Err(Error::Batch(format!(
            "need {} value predictions for a {}-step trace, got {}",
            t_len + 1,
            t_len,
            value_predictions.len()
        )));
    }
    if log_probs.len() != t_len {
        return Err(Error::Batch(format!(
            "need {t_len} behavior log-probs, got {}",
            log_probs.len()
        )));
    }
    let n = trace.steps.first().map_or(0, |s| s.reward.len());
    let mut advantages = vec![vec![0.0; n]; t_len];
    let mut carry = vec![0.0; n];
    for t in (0..t_len).rev() {
        let step = &trace.steps[t];
        let cont = if step.terminal { 0.0 } else { 1.0 };
        for i in 0..n {
            let next_v = value_predictions[t + 1][i];
            let delta = step.reward[i] + gamma * cont * next_v - value_predictions[t][i];
            carry[i] = delta + gamma * gae_lambda * cont * carry[i];
            advantages[t][i] = carry[i];
        }
    }
    Ok(AdvantageBatch {
        observations: trace.steps.iter().map(|s| s.obs.clone()).collect(),
        actions: trace.steps.iter().map(|s| s.action).collect(),
        log_probs: log_probs.to_vec(),
        advantages,
    })
}

/// A batch of whole episodes prepared for gradient steps.
#[derive(Clone, Debug, Default)]
pub struct TrainBatch {
    pub adv: AdvantageBatch,
    /// Empirical discounted return-to-go, the value regression target.
    pub value_targets: Vec<Vec<f64>>,
    /// gamma^t of each step within its episode.
    pub step_discount: Vec<f64>,
    /// Episode index of each step.
    pub episode_of: Vec<usize>,
    pub n_episodes: usize,
    /// Empirical discounted return of each episode.
    pub episode_returns: Vec<ReturnVector>,
    /// Mean of `episode_returns`.
    pub mean_return: ReturnVector,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.adv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adv.is_empty()
    }
}

/// Collects whole episodes until at least `min_steps` transitions are
/// gathered, computing GAE advantages and value targets along the way.
pub fn collect_batch(
    env: &mut dyn Env,
    policy: &Policy,
    value: &ValueFn,
    min_steps: usize,
    seed: u64,
    gae_lambda: f64,
) -> Result<TrainBatch> {
    let spec = env.spec().clone();
    let gamma = spec.gamma;
    let n = spec.n_objectives;
    let mut batch = TrainBatch::default();
    let mut episode = 0u64;
    while batch.len() < min_steps {
        let ep_seed = seeding::derive(seed, episode);
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(ep_seed, 0x5a));
        let mut obs = env.reset(ep_seed);
        let mut steps = Vec::new();
        let mut log_probs = Vec::new();
        for _ in 0..spec.horizon {
            let (action, lp) = act(policy, &obs, &mut rng)?;
            let out = env.step(action)?;
            log_probs.push(lp);
            steps.push(crate::env::TraceStep {
                obs: obs.clone(),
                action,
                reward: out.reward.clone(),
                next_obs: out.obs.clone(),
                terminal: out.terminal,
            });
            obs = out.obs;
            if steps.last().unwrap().terminal {
                break;
            }
        }
        let trace = EpisodeTrace {
            steps,
            episode_seed: ep_seed,
        };
        let mut preds: Vec<Vec<f64>> = trace.steps.iter().map(|s| value.predict(&s.obs)).collect();
        preds.push(value.predict(&trace.steps.last().unwrap().next_obs));
        let adv = gae_advantages(&trace, &preds, gamma, gae_lambda, &log_probs)?;

        // discounted return-to-go per objective
        let t_len = trace.steps.len();
        let mut togo = vec![vec![0.0; n]; t_len];
        let mut carry = vec![0.0; n];
        for t in (0..t_len).rev() {
            for i in 0..n {
                carry[i] = trace.steps[t].reward[i]
                    + gamma * if trace.steps[t].terminal { 0.0 } else { carry[i] };
                togo[t][i] = carry[i];
            }
        }
        let ep_return = trace.discounted_return(gamma, n);
        let ep_index = batch.n_episodes;
        batch.adv.observations.extend(adv.observations);
        batch.adv.actions.extend(adv.actions);
        batch.adv.log_probs.extend(adv.log_probs);
        batch.adv.advantages.extend(adv.advantages);
        batch.value_targets.extend(togo);
        batch
            .step_discount
            .extend((0..t_len).map(|t| gamma.powi(t as i32)));
        batch.episode_of.extend(std::iter::repeat(ep_index).take(t_len));
        batch.episode_returns.push(ep_return);
        batch.n_episodes += 1;
        episode += 1;
    }
    let mut mean = vec![0.0; n];
    for g in &batch.episode_returns {
        for (m, gi) in mean.iter_mut().zip(g) {
            *m += gi / batch.n_episodes as f64;
        }
    }
    batch.mean_return = mean;
    Ok(batch)
}

/// Hyperparameters of the clipped-surrogate step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PgConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    /// When false the step uses the plain (unclipped) surrogate; used by the
    /// gradient-check suites.
    pub clipped: bool,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 10,
            minibatches: 32,
            learning_rate: 3e-4,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            entropy_coef: 0.0,
            normalize_advantages: true,
            clipped: true,
        }
    }
}

/// Adam state over a flat parameter vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One ascent step along `grad` (gradients here point uphill).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / b1c;
            let v_hat = *v / b2c;
            *p += self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` down to `max_norm` when its L2 norm exceeds it.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PgDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl_after: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Per-objective standardization of advantages, then scalarization by
/// `weights` (not necessarily on the simplex; the primal-dual solver passes
/// `e_l + lambda`).
fn scalarize_advantages(batch: &TrainBatch, weights: &[f64], normalize: bool) -> Vec<f64> {
    let n = batch.adv.n_objectives();
    let len = batch.len();
    let mut scaled = vec![0.0; len];
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        let (mut mean, mut var) = (0.0, 0.0);
        if normalize {
            for a in &batch.adv.advantages {
                mean += a[i];
            }
            mean /= len as f64;
            for a in &batch.adv.advantages {
                var += (a[i] - mean) * (a[i] - mean);
            }
            var /= len as f64;
        }
        let std = if normalize { var.sqrt() + 1e-8 } else { 1.0 };
        let shift = if normalize { mean } else { 0.0 };
        for (s, a) in scaled.iter_mut().zip(&batch.adv.advantages) {
            *s += weights[i] * (a[i] - shift) / std;
        }
    }
    scaled
}

/// One epoch-set of clipped-surrogate ascent on `weights . A`, with the
/// value head regressed to the empirical vector return targets.
pub fn pg_step_weighted(
    policy: &mut Policy,
    value: &mut ValueFn,
    opt_policy: &mut Adam,
    opt_value: &mut Adam,
    batch: &TrainBatch,
    weights: &[f64],
    cfg: &PgConfig,
    seed: u64,
) -> Result<PgDiagnostics> {
    if batch.is_empty() {
        return Err(Error::Batch("empty training batch".into()));
    }
    let scalar_adv = scalarize_advantages(batch, weights, cfg.normalize_advantages);
    let snapshot = policy.clone();
    let len = batch.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, 0x9d));
    let mut diag = PgDiagnostics::default();
    let mut clipped_count = 0usize;
    let mut sample_count = 0usize;

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..len).collect();
        for k in (1..len).rev() {
            let j = rng.gen_range(0..=k);
            order.swap(k, j);
        }
        let chunk = len.div_ceil(cfg.minibatches.max(1));
        for mb in order.chunks(chunk) {
            let mut pgrad = vec![0.0; policy.net.n_params()];
            let mut vgrad = vec![0.0; value.net.n_params()];
            let mut policy_loss = 0.0;
            let mut value_loss = 0.0;
            let inv = 1.0 / mb.len() as f64;
            for &t in mb {
                let obs = &batch.adv.observations[t];
                let action = batch.adv.actions[t];
                let logits = policy.logits(obs);
                if logits.iter().any(|z| !z.is_finite()) {
                    return Err(Error::Numerical("non-finite logits in pg step".into()));
                }
                let log_p = log_softmax(&logits);
                let probs = softmax(&logits);
                let ratio = (log_p[action] - batch.adv.log_probs[t]).exp();
                let adv = scalar_adv[t];
                let (objective, surr_coef, was_clipped) = if !cfg.clipped {
                    (ratio * adv, ratio * adv, false)
                } else {
                    let unclipped = ratio * adv;
                    let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
                    let objective = unclipped.min(clipped);
                    if unclipped <= clipped {
                        (objective, ratio * adv, false)
                    } else if (1.0 - cfg.clip..=1.0 + cfg.clip).contains(&ratio) {
                        (objective, ratio * adv, true)
                    } else {
                        // clamp saturated: the active branch is constant
                        (objective, 0.0, true)
                    }
                };
                if was_clipped {
                    clipped_count += 1;
                }
                sample_count += 1;
                policy_loss -= inv * objective;
                // ascent direction: d(surrogate)/dlogits = surr_coef * (1_a - p)
                let entropy: f64 = probs
                    .iter()
                    .zip(&log_p)
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, l)| -p * l)
                    .sum();
                let mut dl = vec![0.0; probs.len()];
                for (b, db) in dl.iter_mut().enumerate() {
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    *db = inv * surr_coef * (indicator - probs[b]);
                    if cfg.entropy_coef != 0.0 {
                        *db += inv * cfg.entropy_coef * (-probs[b] * (log_p[b] + entropy));
                    }
                }
                policy.net.accumulate_grad(obs, &dl, &mut pgrad);

                let v = value.predict(obs);
                let target = &batch.value_targets[t];
                let mut dv = vec![0.0; v.len()];
                for ((dvi, vi), ti) in dv.iter_mut().zip(&v).zip(target) {
                    let err = vi - ti;
                    value_loss += inv * 0.5 * err * err;
                    // descent on the value loss, expressed as ascent
                    *dvi = -inv * cfg.value_coef * err;
                }
                value.net.accumulate_grad(obs, &dv, &mut vgrad);
            }
            if pgrad.iter().any(|g| !g.is_finite()) || !policy_loss.is_finite() {
                return Err(Error::Numerical("non-finite policy gradient".into()));
            }
            diag.grad_norm = clip_grad_norm(&mut pgrad, cfg.max_grad_norm);
            clip_grad_norm(&mut vgrad, cfg.max_grad_norm);
            opt_policy.step(policy.net.params_mut(), &pgrad);
            opt_value.step(value.net.params_mut(), &vgrad);
            diag.policy_loss = policy_loss;
            diag.value_loss = value_loss;
        }
    }
    diag.kl_after = mean_kl(policy, &snapshot, &batch.adv.observations);
    diag.clip_fraction = if sample_count > 0 {
        clipped_count as f64 / sample_count as f64
    } else {
        0.0
    };
    Ok(diag)
}

/// Clipped-surrogate ascent on the scalarized advantage `omega . A`.
pub fn scalarized_pg_step(
    policy: &mut Policy,
    value: &mut ValueFn,
    opt_policy: &mut Adam,
    opt_value: &mut Adam,
    batch: &TrainBatch,
    omega: &PreferenceVector,
    cfg: &PgConfig,
    seed: u64,
) -> Result<PgDiagnostics> {
    pg_step_weighted(
        policy,
        value,
        opt_policy,
        opt_value,
        batch,
        omega.as_slice(),
        cfg,
        seed,
    )
}

/// The raw (single-sample-free) policy gradient of the scalarized return for
/// one batch at the current parameters: mean over steps of
/// `gamma^t * (omega . A_t) * grad log pi(a_t | s_t)`, without normalization
/// or clipping. Used by linearity checks and by the trust-region solver.
pub fn vanilla_gradient(policy: &Policy, batch: &TrainBatch, weights: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; policy.net.n_params()];
    if batch.is_empty() {
        return grad;
    }
    let inv = 1.0 / batch.n_episodes as f64;
    for t in 0..batch.len() {
        let obs = &batch.adv.observations[t];
        let action = batch.adv.actions[t];
        let probs = policy.probs(obs);
        let adv: f64 = weights
            .iter()
            .zip(&batch.adv.advantages[t])
            .map(|(w, a)| w * a)
            .sum();
        let coef = inv * batch.step_discount[t] * adv;
        let mut dl = vec![0.0; probs.len()];
        for (b, db) in dl.iter_mut().enumerate() {
            let indicator = if b == action { 1.0 } else { 0.0 };
            *db = coef * (indicator - probs[b]);
        }
        policy.net.accumulate_grad(obs, &dl, &mut grad);
    }
    grad
}

/// Exact gradient of `omega . G` with respect to tabular policy logits,
/// computed by dynamic programming: time-indexed exact advantages weighted
/// by discounted state occupancy.
pub fn exact_policy_gradient(
    model: &TabularModel,
    policy: &Policy,
    omega: &[f64],
) -> Result<Vec<f64>> {
    let probs = policy
        .probs_table()
        .ok_or_else(|| Error::Config("exact gradient needs a tabular policy".into()))?;
    let (ns, na) = (model.n_states, model.n_actions);
    let occ = model.occupancies(&probs);
    let q = model.scalarized_q_values(&probs, omega);
    let mut grad = vec![0.0; ns * na];
    let mut disc = 1.0;
    for t in 0..model.horizon {
        for s in 0..ns {
            if occ[t][s] == 0.0 || model.terminal[s] {
                continue;
            }
            let row = &probs[s * na..(s + 1) * na];
            let v: f64 = row
                .iter()
                .zip(&q[t][s * na..(s + 1) * na])
                .map(|(p, qa)| p * qa)
                .sum();
            let mut coef_sum = 0.0;
            for a in 0..na {
                let adv = q[t][s * na + a] - v;
                let c = disc * occ[t][s] * row[a] * adv;
                grad[s * na + a] += c;
                coef_sum += c;
            }
            for b in 0..na {
                grad[s * na + b] -= coef_sum * row[b];
            }
        }
        disc *= model.gamma;
    }
    Ok(grad)
}

/// Self-describing policy checkpoint: net kind, architecture, flat 64-bit
/// parameters for both heads, and the training preference.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    pub architecture: Vec<usize>,
    pub policy_params: Vec<f64>,
    pub value_architecture: Vec<usize>,
    pub value_params: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Checkpoint {
    pub fn capture(policy: &Policy, value: &ValueFn, omega: &[f64]) -> Self {
        Self {
            kind: policy.net.kind().to_string(),
            architecture: policy.net.architecture(),
            policy_params: policy.net.params().to_vec(),
            value_architecture: value.net.architecture(),
            value_params: value.net.params().to_vec(),
            omega: omega.to_vec(),
        }
    }

    pub fn restore(&self) -> Result<(Policy, ValueFn)> {
        let make = |kind: &str, arch: &[usize], params: &[f64]| -> Result<Net> {
            let net = match kind {
                "tabular-softmax" => {
                    if arch.len() != 2 {
                        return Err(Error::Artifact("tabular arch needs 2 entries".into()));
                    }
                    Net::Tabular(TabularNet {
                        n_states: arch[0],
                        n_outputs: arch[1],
                        weights: params.to_vec(),
                    })
                }
                "mlp" => Net::Mlp(MlpNet {
                    dims: arch.to_vec(),
                    weights: params.to_vec(),
                }),
                other => return Err(Error::Artifact(format!("unknown checkpoint kind `{other}`"))),
            };
            if net.n_params() != params.len() {
                return Err(Error::Artifact("checkpoint parameter count mismatch".into()));
            }
            Ok(net)
        };
        Ok((
            Policy {
                net: make(&self.kind, &self.architecture, &self.policy_params)?,
            },
            ValueFn {
                net: make(&self.kind, &self.value_architecture, &self.value_params)?,
            },
        ))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string(self)?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvParams, FruitTree, TraceStep};

    fn obs(state: usize) -> Observation {
        Observation {
            values: vec![state as f64],
            state,
        }
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        let policy = Policy::tabular(1, 2);
        let probs = policy.probs(&obs(0));
        assert_eq!(probs, vec![0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            let (a, lp) = act(&policy, &obs(0), &mut rng).unwrap();
            counts[a] += 1;
            assert!((lp - 0.5f64.ln()).abs() < 1e-12);
        }
        assert!(counts[0] > 4500 && counts[0] < 5500);
    }

    #[test]
    fn extreme_logits_saturate() {
        let mut policy = Policy::tabular(1, 2);
        policy.net.params_mut()[0] = 10.0;
        policy.net.params_mut()[1] = -10.0;
        let p = policy.probs(&obs(0));
        assert!(p[0] >= 1.0 - 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(act(&policy, &obs(0), &mut rng).unwrap().0, 0);
        }
    }

    #[test]
    fn sampled_log_prob_matches_softmax_mass() {
        let mut policy = Policy::tabular(1, 3);
        policy.net.params_mut().copy_from_slice(&[0.3, -1.2, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probs = policy.probs(&obs(0));
        for _ in 0..200 {
            let (a, lp) = act(&policy, &obs(0), &mut rng).unwrap();
            assert!((lp - probs[a].ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_normalize_everywhere() {
        let policy = Policy::mlp(3, &[8, 8], 4, 3);
        for k in 0..20 {
            let o = Observation {
                values: vec![k as f64 * 0.1, -(k as f64), 0.5],
                state: 0,
            };
            let sum: f64 = policy.probs(&o).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_logits_error() {
        let mut policy = Policy::tabular(1, 2);
        policy.net.params_mut()[0] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(act(&policy, &obs(0), &mut rng).is_err());
    }

    #[test]
    fn kl_identities() {
        let mut a = Policy::tabular(1, 2);
        let b = a.clone();
        let observations = vec![obs(0)];
        assert_eq!(mean_kl(&a, &b, &observations), 0.0);
        // logits (0,0) vs (ln 3, 0): KL = 0.5 ln(1/2 / 3/4) + 0.5 ln(1/2 / 1/4)
        let mut c = Policy::tabular(1, 2);
        c.net.params_mut()[0] = 3.0f64.ln();
        let expected = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((mean_kl(&a, &c, &observations) - expected).abs() < 1e-12);
        // asymmetry
        a.net.params_mut()[0] = 1.0;
        assert_ne!(mean_kl(&a, &c, &observations), mean_kl(&c, &a, &observations));
    }

    fn toy_trace(rewards: &[Vec<f64>], terminal_last: bool) -> EpisodeTrace {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(t, r)| TraceStep {
                obs: obs(t),
                action: 0,
                reward: r.clone(),
                next_obs: obs(t + 1),
                terminal: terminal_last && t == rewards.len() - 1,
            })
            .collect();
        EpisodeTrace {
            steps,
            episode_seed: 0,
        }
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td() {
        let trace = toy_trace(&[vec![1.0], vec![2.0], vec![3.0]], true);
        let preds = vec![vec![0.5], vec![1.5], vec![2.5], vec![9.0]];
        let gamma = 0.7;
        let adv = gae_advantages(&trace, &preds, gamma, 0.0, &[0.0; 3]).unwrap();
        // last step terminal: no bootstrap
        assert!((adv.advantages[0][0] - (1.0 + gamma * 1.5 - 0.5)).abs() < 1e-15);
        assert!((adv.advantages[1][0] - (2.0 + gamma * 2.5 - 1.5)).abs() < 1e-15);
        assert!((adv.advantages[2][0] - (3.0 - 2.5)).abs() < 1e-15);
    }

    #[test]
    fn gae_lambda_one_zero_values_is_return_to_go() {
        let trace = toy_trace(&[vec![1.0], vec![2.0], vec![3.0]], true);
        let preds = vec![vec![0.0]; 4];
        let gamma = 0.5;
        let adv = gae_advantages(&trace, &preds, gamma, 1.0, &[0.0; 3]).unwrap();
        assert!((adv.advantages[0][0] - (1.0 + 0.5 * 2.0 + 0.25 * 3.0)).abs() < 1e-15);
        assert!((adv.advantages[1][0] - (2.0 + 0.5 * 3.0)).abs() < 1e-15);
        assert!((adv.advantages[2][0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gae_hand_unrolled_three_steps() {
        // gamma = lambda = 0.5, nonzero values, non-terminal tail: the oracle
        // below unrolls the recursion by hand.
        let trace = toy_trace(&[vec![1.0], vec![-1.0], vec![0.5]], false);
        let preds = vec![vec![0.2], vec![0.4], vec![-0.3], vec![0.1]];
        let (gamma, lambda) = (0.5, 0.5);
        let d2 = 0.5 + gamma * 0.1 - (-0.3);
        let d1 = -1.0 + gamma * (-0.3) - 0.4;
        let d0 = 1.0 + gamma * 0.4 - 0.2;
        let a2 = d2;
        let a1 = d1 + gamma * lambda * a2;
        let a0 = d0 + gamma * lambda * a1;
        let adv = gae_advantages(&trace, &preds, gamma, lambda, &[0.0; 3]).unwrap();
        assert!((adv.advantages[0][0] - a0).abs() < 1e-15);
        assert!((adv.advantages[1][0] - a1).abs() < 1e-15);
        assert!((adv.advantages[2][0] - a2).abs() < 1e-15);
    }

    #[test]
    fn gae_length_mismatch_is_batch_error() {
        let trace = toy_trace(&[vec![1.0]], true);
        let preds = vec![vec![0.0]];
        assert!(matches!(
            gae_advantages(&trace, &preds, 0.9, 0.9, &[0.0]),
            Err(Error::Batch(_))
        ));
    }

    #[test]
    fn uniform_fruit_tree_depth_one_mean_of_leaves() {
        let mut env = FruitTree::new(1, 21, 1.0).unwrap();
        let policy = Policy::tabular(env.state_count(), 2);
        let got = evaluate_policy(&mut env, &policy, 4000, 9);
        for i in 0..6 {
            let expected = 0.5 * (env.leaf_reward(0)[i] + env.leaf_reward(1)[i]);
            assert!(
                (got[i] - expected).abs() < 0.05,
                "objective {i}: {} vs {expected}",
                got[i]
            );
        }
    }

    #[test]
    fn deterministic_policy_matches_discounted_leaf() {
        let gamma = 0.9;
        let mut env = FruitTree::new(3, 4, gamma).unwrap();
        let mut policy = Policy::tabular(env.state_count(), 2);
        // saturate toward action 1 everywhere -> rightmost leaf
        for (i, w) in policy.net.params_mut().iter_mut().enumerate() {
            *w = if i % 2 == 1 { 40.0 } else { -40.0 };
        }
        let got = evaluate_policy(&mut env, &policy, 3, 0);
        let leaf = env.leaf_reward(7);
        for i in 0..6 {
            assert!((got[i] - gamma * gamma * leaf[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn more_episodes_shrink_estimator_variance() {
        let mut env = crate::env::from_config(
            "random_momdp",
            &EnvParams {
                ns: Some(6),
                na: Some(2),
                n: Some(2),
                seed: 3,
                horizon: Some(6),
                ..Default::default()
            },
        )
        .unwrap();
        let policy = Policy::tabular(env.state_count(), 2);
        let spread = |eps: usize| {
            let vals: Vec<f64> = (0..24)
                .map(|rep| evaluate_policy(env.as_mut(), &policy, eps, 1000 + rep)[0])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64
        };
        assert!(spread(64) < spread(8));
    }

    #[test]
    fn zero_advantages_leave_policy_untouched() {
        let mut env = FruitTree::new(2, 0, 1.0).unwrap();
        let mut policy = Policy::tabular(env.state_count(), 2);
        let mut value = ValueFn::tabular(env.state_count(), 6);
        let mut batch = collect_batch(&mut env, &policy, &value, 64, 0, 0.95).unwrap();
        for a in batch.adv.advantages.iter_mut() {
            a.iter_mut().for_each(|x| *x = 0.0);
        }
        let before = policy.net.params().to_vec();
        let cfg = PgConfig {
            normalize_advantages: false,
            ..Default::default()
        };
        let mut op = Adam::new(policy.net.n_params(), 3e-4);
        let mut ov = Adam::new(value.net.n_params(), 3e-4);
        let omega = PreferenceVector::one_hot(6, 0);
        pg_step_weighted(
            &mut policy,
            &mut value,
            &mut op,
            &mut ov,
            &batch,
            omega.as_slice(),
            &cfg,
            0,
        )
        .unwrap();
        assert_eq!(policy.net.params(), &before[..]);
    }

    #[test]
    fn one_hot_weights_ignore_other_objectives() {
        let mut env = FruitTree::new(2, 3, 1.0).unwrap();
        let policy = Policy::tabular(env.state_count(), 2);
        let value = ValueFn::tabular(env.state_count(), 6);
        let mut batch = collect_batch(&mut env, &policy, &value, 128, 1, 0.95).unwrap();
        // scrambling non-target objectives must not change the one-hot gradient
        let g1 = vanilla_gradient(&policy, &batch, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        for a in batch.adv.advantages.iter_mut() {
            a[0] = 99.0;
            a[3] = -5.0;
        }
        let g2 = vanilla_gradient(&policy, &batch, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g1, g2);
    }

    #[test]
    fn gradient_is_linear_in_weights() {
        let mut env = FruitTree::new(3, 8, 1.0).unwrap();
        let policy = Policy::tabular(env.state_count(), 2);
        let value = ValueFn::tabular(env.state_count(), 6);
        let batch = collect_batch(&mut env, &policy, &value, 128, 2, 0.95).unwrap();
        let w = [0.3, 0.1, 0.2, 0.05, 0.15, 0.2];
        let combined = vanilla_gradient(&policy, &batch, &w);
        let mut assembled = vec![0.0; combined.len()];
        for i in 0..6 {
            let mut e = [0.0; 6];
            e[i] = 1.0;
            let gi = vanilla_gradient(&policy, &batch, &e);
            for (acc, g) in assembled.iter_mut().zip(&gi) {
                *acc += w[i] * g;
            }
        }
        for (a, b) in combined.iter().zip(&assembled) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn value_head_converges_on_fixed_trace() {
        let mut env = FruitTree::new(2, 7, 1.0).unwrap();
        let policy = Policy::tabular(env.state_count(), 2);
        let mut value = ValueFn::tabular(env.state_count(), 6);
        let batch = collect_batch(&mut env, &policy, &value, 256, 5, 0.95).unwrap();
        let mut opt = Adam::new(value.net.n_params(), 0.05);
        for _ in 0..400 {
            let mut grad = vec![0.0; value.net.n_params()];
            for t in 0..batch.len() {
                let obs = &batch.adv.observations[t];
                let v = value.predict(obs);
                let mut dv = vec![0.0; v.len()];
                for ((d, vi), ti) in dv.iter_mut().zip(&v).zip(&batch.value_targets[t]) {
                    *d = -(vi - ti) / batch.len() as f64;
                }
                value.net.accumulate_grad(obs, &dv, &mut grad);
            }
            opt.step(value.net.params_mut(), &grad);
        }
        // group targets by state and compare the fitted value to their mean
        let mut sums: std::collections::HashMap<usize, (Vec<f64>, usize)> = Default::default();
        for t in 0..batch.len() {
            let e = sums
                .entry(batch.adv.observations[t].state)
                .or_insert((vec![0.0; 6], 0));
            for (a, b) in e.0.iter_mut().zip(&batch.value_targets[t]) {
                *a += b;
            }
            e.1 += 1;
        }
        for (state, (sum, count)) in sums {
            let v = value.predict(&Observation {
                values: vec![],
                state,
            });
            for i in 0..6 {
                let target = sum[i] / count as f64;
                assert!(
                    (v[i] - target).abs() < 1e-3,
                    "state {state} objective {i}: {} vs {target}",
                    v[i]
                );
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let policy = Policy::mlp(4, &[8], 3, 2);
        let value = ValueFn::mlp(4, &[8], 2, 3);
        let cp = Checkpoint::capture(&policy, &value, &[0.5, 0.5]);
        let dir = std::env::temp_dir().join("morl_ckpt_test.json");
        cp.save(&dir).unwrap();
        let loaded = Checkpoint::load(&dir).unwrap();
        let (p2, v2) = loaded.restore().unwrap();
        assert_eq!(policy.net.params(), p2.net.params());
        assert_eq!(value.net.params(), v2.net.params());
        std::fs::remove_file(dir).ok();
    }
}

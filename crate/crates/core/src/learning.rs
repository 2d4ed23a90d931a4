//! Policy-gradient training of the retrieval weights.
//!
//! The policy is a diagonal Gaussian over the weight vector with a fixed
//! exploration scale. Each batch samples one weight vector per question,
//! scores the resulting answer with a task reward, and takes a single
//! clipped-surrogate step on the mean, which is then projected back onto the
//! simplex. When every reward in a batch is equal the advantages vanish and
//! the mean is returned untouched, bit for bit.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{soft_em, Benchmark, Reader, ReaderQuery};
use crate::exec::{self, Execution};
use crate::retrieval::RetrievalConfig;
use crate::scoring::{Signal, WeightVector};

/// Default exploration scale on each free component.
pub const DEFAULT_SIGMA: f64 = 0.15;

const SEM: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPolicy {
    pub mean: WeightVector,
    /// Per-component standard deviation. The semantic slot is pinned at 0.
    pub sigma: [f64; 5],
}

impl Default for WeightPolicy {
    fn default() -> Self {
        Self::new(WeightVector::default(), DEFAULT_SIGMA).expect("default policy is valid")
    }
}

impl WeightPolicy {
    pub fn new(mean: WeightVector, sigma: f64) -> Result<Self> {
        let mut s = [sigma; 5];
        s[SEM] = 0.0;
        let p = Self { mean, sigma: s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.sem() != 0.0 {
            return Err(Error::validation("policy mean must have w_sem = 0"));
        }
        if self.sigma[SEM] != 0.0 {
            return Err(Error::validation("sigma on w_sem must be 0"));
        }
        if self.sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::validation("sigma must be finite and nonnegative"));
        }
        Ok(())
    }

    fn free(&self) -> impl Iterator<Item = usize> + '_ {
        (0..5).filter(|&i| i != SEM)
    }
}

/// A draw from the policy: the raw Gaussian sample (needed for the density
/// ratio) and the projected weight vector actually used for retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub raw: [f64; 5],
    pub weights: WeightVector,
}

/// Clamp free components at 0 and rescale them to sum 1. Falls back to
/// `fallback` when everything clamps away.
fn project(raw: [f64; 5], fallback: WeightVector) -> WeightVector {
    let mut w = raw.map(|x| x.max(0.0));
    w[SEM] = 0.0;
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return fallback;
    }
    for x in &mut w {
        *x /= total;
    }
    WeightVector::new(w).unwrap_or(fallback)
}

pub fn sample_with_rng<R: Rng + ?Sized>(policy: &WeightPolicy, rng: &mut R) -> PolicySample {
    let mean = policy.mean.as_array();
    let mut raw = mean;
    for i in policy.free() {
        let z: f64 = rng.sample(StandardNormal);
        raw[i] = mean[i] + policy.sigma[i] * z;
    }
    if policy.sigma.iter().all(|s| *s == 0.0) {
        return PolicySample {
            raw: mean,
            weights: policy.mean,
        };
    }
    PolicySample {
        raw,
        weights: project(raw, policy.mean),
    }
}

/// Deterministic under a fixed seed; `sigma = 0` returns the mean exactly.
pub fn sample_weights(policy: &WeightPolicy, seed: u64) -> WeightVector {
    sample_with_rng(policy, &mut ChaCha8Rng::seed_from_u64(seed)).weights
}

/// `+1` on a soft exact match, `-1` otherwise.
pub fn task_reward(prediction: &str, gold: &str) -> f64 {
    if soft_em(prediction, gold) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingEpisode {
    pub sample: PolicySample,
    pub reward: f64,
    /// Filled in by [`ppo_update`]: reward minus the batch mean.
    pub advantage: f64,
    /// Policy mean the sample was drawn from.
    pub behaviour_mean: WeightVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_epsilon: f64,
    pub step_size: f64,
    pub question_count: usize,
    pub sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch_size: 16,
            clip_epsilon: 0.2,
            step_size: 0.01,
            question_count: 100,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.question_count == 0 {
            return Err(Error::validation("epochs, batch_size and question_count must be positive"));
        }
        if !(self.clip_epsilon > 0.0 && self.step_size > 0.0) {
            return Err(Error::validation("clip_epsilon and step_size must be positive"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::validation("sigma must be nonnegative"));
        }
        Ok(())
    }
}

fn log_density_diff(x: &[f64; 5], a: &[f64; 5], b: &[f64; 5], sigma: &[f64; 5]) -> f64 {
    (0..5)
        .filter(|&i| sigma[i] > 0.0)
        .map(|i| ((x[i] - b[i]).powi(2) - (x[i] - a[i]).powi(2)) / (2.0 * sigma[i] * sigma[i]))
        .sum()
}

/// One clipped-surrogate ascent step on the policy mean.
///
/// Advantages are computed in place. Sigma is held fixed.
pub fn ppo_update(
    policy: &WeightPolicy,
    batch: &mut [TrainingEpisode],
    clip_epsilon: f64,
    step_size: f64,
) -> Result<WeightPolicy> {
    if batch.is_empty() {
        return Err(Error::validation("ppo_update needs a nonempty batch"));
    }
    let mean_r = batch.iter().map(|e| e.reward).sum::<f64>() / batch.len() as f64;
    for e in batch.iter_mut() {
        e.advantage = e.reward - mean_r;
    }
    if batch.iter().all(|e| e.advantage == 0.0) {
        return Ok(*policy);
    }

    let mu = policy.mean.as_array();
    let mut grad = [0.0; 5];
    for e in batch.iter() {
        let behaviour = e.behaviour_mean.as_array();
        let ratio = log_density_diff(&e.sample.raw, &mu, &behaviour, &policy.sigma).exp();
        let clipped = (e.advantage > 0.0 && ratio > 1.0 + clip_epsilon)
            || (e.advantage < 0.0 && ratio < 1.0 - clip_epsilon);
        if clipped {
            continue;
        }
        for i in policy.free() {
            let s2 = policy.sigma[i] * policy.sigma[i];
            if s2 > 0.0 {
                grad[i] += e.advantage * ratio * (e.sample.raw[i] - mu[i]) / s2;
            }
        }
    }
    if grad.iter().all(|g| *g == 0.0) {
        return Ok(*policy);
    }
    let n = batch.len() as f64;
    let mut stepped = mu;
    for i in policy.free() {
        stepped[i] += step_size * grad[i] / n;
    }
    Ok(WeightPolicy {
        mean: project(stepped, policy.mean),
        sigma: policy.sigma,
    })
}

/// A set of training questions with a reward for answering one under a given
/// weight vector.
pub trait RewardEnv: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn question_id(&self, idx: usize) -> String;

    /// Stratification key.
    fn stratum(&self, idx: usize) -> String;

    fn reward(&self, idx: usize, weights: &WeightVector) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Soft exact match of the reader's answer.
    #[default]
    TaskSuccess,
    /// Mean cognitive weight of the packed entries. Included only to show
    /// that a reward built from CW collapses when CW carries no signal.
    CwProxy,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task_success" => Ok(RewardMode::TaskSuccess),
            "cw_proxy" => Ok(RewardMode::CwProxy),
            other => Err(Error::validation(format!("unknown reward mode {other:?}"))),
        }
    }
}

/// Benchmark questions answered through retrieval and a reader.
pub struct QaEnv<'a> {
    pub bench: &'a Benchmark,
    pub reader: &'a dyn Reader,
    pub retrieval: RetrievalConfig,
    pub mode: RewardMode,
}

impl RewardEnv for QaEnv<'_> {
    fn len(&self) -> usize {
        self.bench.len()
    }

    fn question_id(&self, idx: usize) -> String {
        self.bench.dataset().questions[idx].question_id.clone()
    }

    fn stratum(&self, idx: usize) -> String {
        self.bench.dataset().questions[idx].question_type.to_string()
    }

    fn reward(&self, idx: usize, weights: &WeightVector) -> Result<f64> {
        let q = &self.bench.dataset().questions[idx];
        let cfg = RetrievalConfig {
            weights: *weights,
            ..self.retrieval.clone()
        };
        let result = self.bench.retriever(idx).retrieve(&q.question, &cfg)?;
        match self.mode {
            RewardMode::TaskSuccess => {
                let query = ReaderQuery {
                    question_id: &q.question_id,
                    question: &q.question,
                };
                let prediction = self.reader.answer(&query, &result.packed_context)?;
                Ok(task_reward(&prediction, &q.answer))
            }
            RewardMode::CwProxy => {
                let packed: Vec<f64> = result
                    .ranked
                    .iter()
                    .filter(|r| result.packed_entry_ids.contains(&r.entry.id))
                    .map(|r| r.entry.cognitive_weight)
                    .collect();
                Ok(if packed.is_empty() {
                    0.0
                } else {
                    packed.iter().sum::<f64>() / packed.len() as f64
                })
            }
        }
    }
}

/// An environment defined by a closure over the sampled weights.
pub struct FnEnv<F> {
    pub size: usize,
    pub f: F,
}

impl<F> RewardEnv for FnEnv<F>
where
    F: Fn(usize, &WeightVector) -> Result<f64> + Sync,
{
    fn len(&self) -> usize {
        self.size
    }

    fn question_id(&self, idx: usize) -> String {
        format!("q{idx}")
    }

    fn stratum(&self, _idx: usize) -> String {
        String::new()
    }

    fn reward(&self, idx: usize, weights: &WeightVector) -> Result<f64> {
        (self.f)(idx, weights)
    }
}

/// Pick `count` questions with each stratum represented in proportion to its
/// share (largest-remainder rounding). Order within the result is by index.
pub fn stratified_sample(env: &dyn RewardEnv, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = env.len();
    if count >= n {
        return (0..n).collect();
    }
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        strata.entry(env.stratum(i)).or_default().push(i);
    }
    let mut quotas: Vec<(String, usize, f64)> = strata
        .iter()
        .map(|(k, v)| {
            let exact = count as f64 * v.len() as f64 / n as f64;
            (k.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if assigned >= count {
            break;
        }
        if quotas[i].1 < strata[&quotas[i].0].len() {
            quotas[i].1 += 1;
            assigned += 1;
        }
    }
    let mut picked = Vec::with_capacity(count);
    for (key, quota, _) in quotas {
        let mut members = strata[&key].clone();
        members.shuffle(rng);
        picked.extend(members.into_iter().take(quota));
    }
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub epoch: usize,
    pub mean_reward: f64,
    pub weights: WeightVector,
    /// Change of the mean over this batch, per component.
    pub weight_deltas: [f64; 5],
    pub reward_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub seed: u64,
    pub config: TrainConfig,
    pub initial: WeightPolicy,
    pub policy: WeightPolicy,
    pub question_ids: Vec<String>,
    pub log: Vec<BatchLog>,
}

impl TrainOutcome {
    /// Final minus initial mean, per component.
    pub fn deltas(&self) -> [f64; 5] {
        let a = self.initial.mean.as_array();
        let b = self.policy.mean.as_array();
        std::array::from_fn(|i| b[i] - a[i])
    }

    pub fn delta(&self, signal: Signal) -> f64 {
        self.deltas()[signal.index()]
    }

    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|b| serde_json::to_string(b).expect("log serialises") + "\n")
            .collect()
    }
}

/// Run the training loop. Sampling seeds are drawn up front, so results do
/// not depend on `execution`. A failed reward counts as `-1`.
pub fn train(
    env: &dyn RewardEnv,
    initial: WeightPolicy,
    cfg: &TrainConfig,
    seed: u64,
    execution: Execution,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    initial.validate()?;
    if env.is_empty() {
        return Err(Error::validation("training environment has no questions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = stratified_sample(env, cfg.question_count, &mut rng);
    let question_ids = pool.iter().map(|&i| env.question_id(i)).collect();

    let mut policy = initial;
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        pool.shuffle(&mut rng);
        for chunk in pool.chunks(cfg.batch_size) {
            let behaviour = policy;
            let samples: Vec<PolicySample> = chunk.iter().map(|_| sample_with_rng(&behaviour, &mut rng)).collect();
            let jobs: Vec<(usize, PolicySample)> = chunk.iter().copied().zip(samples).collect();
            let rewards: Vec<Option<f64>> = exec::map(execution, &jobs, |(idx, s)| match env.reward(*idx, &s.weights) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("reward failed on {}: {e}", env.question_id(*idx));
                    None
                }
            });
            let failures = rewards.iter().filter(|r| r.is_none()).count();
            let mut batch: Vec<TrainingEpisode> = jobs
                .iter()
                .zip(&rewards)
                .map(|((_, s), r)| TrainingEpisode {
                    sample: *s,
                    reward: r.unwrap_or(-1.0),
                    advantage: 0.0,
                    behaviour_mean: behaviour.mean,
                })
                .collect();
            policy = ppo_update(&behaviour, &mut batch, cfg.clip_epsilon, cfg.step_size)?;
            let before = behaviour.mean.as_array();
            let after = policy.mean.as_array();
            log.push(BatchLog {
                batch: log.len(),
                epoch,
                mean_reward: batch.iter().map(|e| e.reward).sum::<f64>() / batch.len() as f64,
                weights: policy.mean,
                weight_deltas: std::array::from_fn(|i| after[i] - before[i]),
                reward_failures: failures,
            });
        }
    }
    Ok(TrainOutcome {
        seed,
        config: *cfg,
        initial,
        policy,
        question_ids,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_simplex(w: &WeightVector) -> bool {
        let a = w.as_array();
        a[SEM] == 0.0 && a.iter().all(|x| *x >= 0.0) && (a.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }

    #[test]
    fn zero_sigma_returns_mean() {
        let p = WeightPolicy::new(WeightVector::default(), 0.0).unwrap();
        assert_eq!(sample_weights(&p, 42), p.mean);
    }

    #[test]
    fn sampling_is_seeded() {
        let p = WeightPolicy::default();
        assert_eq!(sample_weights(&p, 9), sample_weights(&p, 9));
        assert_ne!(sample_weights(&p, 9), sample_weights(&p, 10));
        assert!(on_simplex(&sample_weights(&p, 9)));
    }

    #[test]
    fn sample_mean_tracks_policy_mean() {
        let p = WeightPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut acc = [0.0; 5];
        for _ in 0..1000 {
            let w = sample_with_rng(&p, &mut rng).weights.as_array();
            for i in 0..5 {
                acc[i] += w[i] / 1000.0;
            }
        }
        let m = p.mean.as_array();
        for i in 0..5 {
            assert!((acc[i] - m[i]).abs() < 0.03, "component {i}: {} vs {}", acc[i], m[i]);
        }
    }

    #[test]
    fn task_reward_examples() {
        assert_eq!(task_reward("Paris", "Paris"), 1.0);
        assert_eq!(task_reward("London", "Paris"), -1.0);
        assert_eq!(task_reward("in Paris", "Paris"), 1.0);
    }

    fn episode(policy: &WeightPolicy, seed: u64, reward: f64) -> TrainingEpisode {
        TrainingEpisode {
            sample: sample_with_rng(policy, &mut ChaCha8Rng::seed_from_u64(seed)),
            reward,
            advantage: 0.0,
            behaviour_mean: policy.mean,
        }
    }

    #[test]
    fn constant_rewards_freeze_the_mean() {
        let p = WeightPolicy::default();
        for r in [-1.0, 1.0] {
            let mut batch: Vec<_> = (0..16).map(|s| episode(&p, s, r)).collect();
            let q = ppo_update(&p, &mut batch, 0.2, 0.01).unwrap();
            assert_eq!(q.mean.as_array().map(f64::to_bits), p.mean.as_array().map(f64::to_bits));
            assert!(batch.iter().all(|e| e.advantage == 0.0));
        }
    }

    #[test]
    fn single_episode_batch_is_a_no_op() {
        let p = WeightPolicy::default();
        let mut batch = vec![episode(&p, 3, 1.0)];
        assert_eq!(ppo_update(&p, &mut batch, 0.2, 0.01).unwrap(), p);
        assert!(ppo_update(&p, &mut [], 0.2, 0.01).is_err());
    }

    #[test]
    fn update_follows_rewarded_direction() {
        let p = WeightPolicy::default();
        let mut batch: Vec<_> = (0..64)
            .map(|s| {
                let e = episode(&p, s, 0.0);
                let r = if e.sample.weights.bm25() > 0.35 { 1.0 } else { -1.0 };
                TrainingEpisode { reward: r, ..e }
            })
            .collect();
        let q = ppo_update(&p, &mut batch, 0.2, 0.01).unwrap();
        assert!(q.mean.bm25() > p.mean.bm25());
        assert!(on_simplex(&q.mean));
    }

    struct Split;

    impl RewardEnv for Split {
        fn len(&self) -> usize {
            40
        }
        fn question_id(&self, i: usize) -> String {
            format!("q{i}")
        }
        fn stratum(&self, i: usize) -> String {
            if i < 30 { "a".into() } else { "b".into() }
        }
        fn reward(&self, _: usize, _: &WeightVector) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn stratified_sample_is_proportional() {
        let picked = stratified_sample(&Split, 20, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(picked.len(), 20);
        assert_eq!(picked.iter().filter(|&&i| i < 30).count(), 15);
        assert_eq!(stratified_sample(&Split, 100, &mut ChaCha8Rng::seed_from_u64(0)).len(), 40);
    }

    #[test]
    fn training_is_deterministic_and_stays_on_simplex() {
        let env = FnEnv {
            size: 50,
            f: |_, w: &WeightVector| Ok(if w.tier() > 0.15 { 1.0 } else { -1.0 }),
        };
        let cfg = TrainConfig::default();
        let a = train(&env, WeightPolicy::default(), &cfg, 7, Execution::Parallel).unwrap();
        let b = train(&env, WeightPolicy::default(), &cfg, 7, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.log.iter().all(|l| on_simplex(&l.weights)));
        assert!(a.delta(Signal::Tier) > 0.0);
    }

    #[test]
    fn failed_rewards_count_as_negative() {
        let env = FnEnv {
            size: 16,
            f: |_, _: &WeightVector| Err(Error::External("reader down".into())),
        };
        let out = train(&env, WeightPolicy::default(), &TrainConfig::default(), 1, Execution::Sequential).unwrap();
        assert!(out.log.iter().all(|l| l.mean_reward == -1.0 && l.reward_failures == 16));
        assert_eq!(out.policy, out.initial);
    }
}

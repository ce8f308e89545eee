//! Conservative offline Q-learning: Double-DQN targets plus a CQL penalty,
//! trained on fixed datasets of annotated trajectories.
//!
//! Per batch, the loss is
//!
//! ```text
//! mean_i [ (Q(x_i, a_i) − y_i)²  +  α_cql·( logsumexp_a Q(x_i, a) − Q(x_i, a_i) ) ]
//! ```
//!
//! with Double-DQN targets `y = r + γ·Q_target(x', argmax_a Q_online(x', a))`
//! for non-terminal steps and `y = r` at trajectory ends. The target network
//! tracks the online one by Polyak averaging every step (τ), with an
//! optional periodic hard sync.

use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::env::{ActionId, Observation, World};
use crate::features::{Featurizer, SparseVec, DEFAULT_INSTR_DIM};
use crate::nn::{load_checkpoint, logsumexp, save_checkpoint, softmax, Adam, Mlp};
use crate::seeding;
use crate::{Error, Result};

/// Where per-step training rewards come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    /// The orchestrator's blended reward on every step.
    #[default]
    Unified,
    /// Goal-conditioned sparse baseline: the success flag at the terminal
    /// step, zero elsewhere.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RLConfig {
    /// Hidden-layer width (two hidden layers).
    pub hidden: usize,
    /// Width of the hashed-instruction feature block.
    pub instr_dim: usize,
    pub gamma: f64,
    pub lr: f64,
    /// Polyak coefficient for the per-step soft target update.
    pub tau: f64,
    /// Optional hard target sync every this many steps.
    pub hard_sync_interval: Option<u64>,
    /// Weight of the conservative (logsumexp − data-action) penalty.
    pub cql_alpha: f64,
    pub batch: usize,
    pub train_steps: usize,
    pub reward_source: RewardSource,
    /// Word-dropout probability for instruction augmentation. Plan-style
    /// phrasings name every waypoint, so a net trained only on them leans on
    /// route words that goal-style phrasings omit; training on masked
    /// variants forces it to act from whichever tokens survive.
    pub instr_dropout: f64,
    /// Extra masked copies of each trajectory's transitions (0 disables
    /// augmentation).
    pub aug_copies: usize,
    pub seed: u64,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            hidden: 128,
            instr_dim: DEFAULT_INSTR_DIM,
            gamma: 0.99,
            lr: 1e-4,
            tau: 0.005,
            hard_sync_interval: None,
            cql_alpha: 1.0,
            batch: 64,
            train_steps: 4000,
            reward_source: RewardSource::Unified,
            instr_dropout: 0.0,
            aug_copies: 0,
            seed: 0,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.hidden == 0 || self.instr_dim == 0 || self.batch == 0 || self.train_steps == 0 {
            return Err(Error::config(
                "policy sizes (hidden, instr_dim, batch, train_steps) must be positive",
            ));
        }
        if self.lr <= 0.0 || self.cql_alpha < 0.0 {
            return Err(Error::config("lr must be positive and cql_alpha nonnegative"));
        }
        if !(0.0..1.0).contains(&self.instr_dropout) {
            return Err(Error::config(format!(
                "instr_dropout {} outside [0, 1)",
                self.instr_dropout
            )));
        }
        Ok(())
    }
}

/// One featurized dataset step, ready for Q-learning.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: SparseVec,
    pub action: usize,
    pub reward: f64,
    pub next_x: SparseVec,
    /// Final step of its trajectory: the target bootstraps zero.
    pub terminal: bool,
}

/// Featurize one trajectory's steps under a (possibly masked) instruction.
fn traj_transitions(
    featurizer: &Featurizer,
    traj: &crate::dataset::Trajectory,
    source: RewardSource,
    instruction: &str,
    out: &mut Vec<Transition>,
) -> Result<()> {
    let last = traj.steps.len() - 1;
    for (t, step) in traj.steps.iter().enumerate() {
        let reward = match source {
            RewardSource::Unified => traj
                .rewards
                .as_ref()
                .and_then(|r| r[t].unified)
                .ok_or_else(|| {
                    Error::config(format!(
                        "trajectory for task `{}` lacks unified rewards",
                        traj.task_id
                    ))
                })?,
            RewardSource::Sparse => {
                if t == last {
                    traj.f_s as f64
                } else {
                    0.0
                }
            }
        };
        out.push(Transition {
            x: featurizer.encode_obs(&step.obs, instruction),
            action: step.action as usize,
            reward,
            next_x: featurizer.encode_obs(&step.next_obs, instruction),
            terminal: t == last,
        });
    }
    Ok(())
}

/// Featurize every step of every trajectory.
pub fn build_transitions(
    featurizer: &Featurizer,
    dataset: &Dataset,
    source: RewardSource,
) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for traj in dataset {
        traj.validate()?;
        traj_transitions(featurizer, traj, source, &traj.instruction, &mut out)?;
    }
    Ok(out)
}

/// Exact transitions plus `aug_copies` word-dropout variants per trajectory.
/// Masking is seeded per (trajectory, copy), so the result is deterministic
/// and independent of iteration order elsewhere.
pub fn build_training_set(
    featurizer: &Featurizer,
    dataset: &Dataset,
    cfg: &RLConfig,
) -> Result<Vec<Transition>> {
    let mut out = build_transitions(featurizer, dataset, cfg.reward_source)?;
    if cfg.instr_dropout <= 0.0 || cfg.aug_copies == 0 {
        return Ok(out);
    }
    for (ti, traj) in dataset.iter().enumerate() {
        for copy in 0..cfg.aug_copies {
            let mut rng = seeding::rng(cfg.seed, &format!("policy-augment/{ti}/{copy}"));
            let kept: Vec<&str> = traj
                .instruction
                .split_whitespace()
                .filter(|_| rng.gen::<f64>() >= cfg.instr_dropout)
                .collect();
            let masked = kept.join(" ");
            traj_transitions(featurizer, traj, cfg.reward_source, &masked, &mut out)?;
        }
    }
    Ok(out)
}

/// Index of the largest value, ties toward the lowest index.
pub fn greedy(q: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Double-DQN target: the online network picks the next action, the target
/// network prices it; terminal steps bootstrap zero.
pub fn td_target(tr: &Transition, online: &Mlp, target: &Mlp, gamma: f64) -> f64 {
    if tr.terminal {
        return tr.reward;
    }
    let pick = greedy(&online.forward(&tr.next_x).out);
    tr.reward + gamma * target.forward(&tr.next_x).out[pick]
}

/// Batch loss value with its Bellman/conservatism split, plus parameter
/// gradients of the mean loss.
pub struct CqlLoss {
    pub loss: f64,
    pub bellman: f64,
    pub penalty: f64,
    pub mean_q: f64,
    pub grads: crate::nn::Grads,
}

/// Mean CQL loss over a batch and its exact gradients. Targets are treated
/// as constants (no gradient flows through the target network or the
/// argmax).
pub fn cql_loss(
    batch: &[Transition],
    online: &Mlp,
    target: &Mlp,
    gamma: f64,
    cql_alpha: f64,
) -> CqlLoss {
    assert!(!batch.is_empty(), "loss of an empty batch");
    let scale = 1.0 / batch.len() as f64;
    let mut grads = online.zero_grads();
    let (mut bellman, mut penalty, mut mean_q) = (0.0, 0.0, 0.0);
    for tr in batch {
        let fwd = online.forward(&tr.x);
        let q = &fwd.out;
        let y = td_target(tr, online, target, gamma);
        let diff = q[tr.action] - y;
        let lse = logsumexp(q);
        bellman += diff * diff;
        penalty += lse - q[tr.action];
        mean_q += q[tr.action];

        // d/dq_k of (diff² + α(lse − q_a)) = α·softmax(q)_k + [k=a]·(2·diff − α).
        let mut dout = softmax(q) * cql_alpha;
        dout[tr.action] += 2.0 * diff - cql_alpha;
        dout *= scale;
        online.backward(&fwd, &dout, &mut grads);
    }
    bellman *= scale;
    penalty *= scale;
    CqlLoss {
        loss: bellman + cql_alpha * penalty,
        bellman,
        penalty,
        mean_q: mean_q * scale,
        grads,
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStat {
    pub step: usize,
    pub loss: f64,
    pub mean_q: f64,
    pub penalty: f64,
}

/// Write the training log as CSV (step, loss, mean_q, penalty).
pub fn write_training_log(path: &Path, log: &[StepStat]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for stat in log {
        w.serialize(stat).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        tl.w.zip_mut_with(&ol.w, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        tl.b.zip_mut_with(&ol.b, |t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
}

/// Core training loop over prebuilt transitions. Returns the online network
/// and the per-step log. Deterministic in `cfg.seed`.
pub fn fit_q(transitions: &[Transition], dims: &[usize], cfg: &RLConfig) -> Result<(Mlp, Vec<StepStat>)> {
    cfg.validate()?;
    if transitions.is_empty() {
        return Err(Error::config("cannot train a policy on an empty transition set"));
    }
    let mut online = Mlp::new(dims, &mut seeding::rng(cfg.seed, "policy-init"));
    let mut target = online.clone();
    let mut adam = Adam::new(&online, cfg.lr);
    let mut rng = seeding::rng(cfg.seed, "policy-batches");
    let mut log = Vec::with_capacity(cfg.train_steps);
    let mut batch = Vec::with_capacity(cfg.batch);
    for step in 0..cfg.train_steps {
        batch.clear();
        for _ in 0..cfg.batch {
            batch.push(transitions[rng.gen_range(0..transitions.len())].clone());
        }
        let out = cql_loss(&batch, &online, &target, cfg.gamma, cfg.cql_alpha);
        adam.step(&mut online, &out.grads);
        soft_update(&mut target, &online, cfg.tau);
        if let Some(k) = cfg.hard_sync_interval {
            if (step as u64 + 1).is_multiple_of(k) {
                target = online.clone();
            }
        }
        log.push(StepStat {
            step,
            loss: out.loss,
            mean_q: out.mean_q,
            penalty: out.penalty,
        });
    }
    if !online.all_finite() {
        return Err(Error::config("policy training diverged to non-finite parameters"));
    }
    Ok((online, log))
}

/// Trained Q-network bound to a world's feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    featurizer: Featurizer,
    pub net: Mlp,
}

impl QModel {
    pub fn dims_for(world: &World, cfg: &RLConfig) -> Vec<usize> {
        let featurizer = Featurizer::new(world, cfg.instr_dim);
        vec![
            featurizer.obs_dim(),
            cfg.hidden,
            cfg.hidden,
            featurizer.action_count(),
        ]
    }

    pub fn q_values(&self, obs: &Observation, instruction: &str) -> Array1<f64> {
        self.net.forward(&self.featurizer.encode_obs(obs, instruction)).out
    }

    /// Highest-valued action, ties toward the lowest id.
    pub fn act_greedy(&self, obs: &Observation, instruction: &str) -> ActionId {
        greedy(&self.q_values(obs, instruction)) as ActionId
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "model": "policy",
            "dims": self.net.dims(),
            "instr_dim": self.featurizer.instr_dim(),
        });
        save_checkpoint(path, &header, &self.net.flatten())
    }

    pub fn load(path: &Path, world: &World) -> Result<Self> {
        let (header, params) = load_checkpoint(path)?;
        if header["model"] != "policy" {
            return Err(Error::parse(path, "not a policy checkpoint"));
        }
        let instr_dim = header["instr_dim"]
            .as_u64()
            .ok_or_else(|| Error::parse(path, "missing instr_dim"))? as usize;
        let dims: Vec<usize> = header["dims"]
            .as_array()
            .ok_or_else(|| Error::parse(path, "missing dims"))?
            .iter()
            .filter_map(|d| d.as_u64().map(|d| d as usize))
            .collect();
        let featurizer = Featurizer::new(world, instr_dim);
        if dims.len() < 2
            || dims[0] != featurizer.obs_dim()
            || *dims.last().unwrap() != featurizer.action_count()
        {
            return Err(Error::parse(
                path,
                format!("checkpoint dims {dims:?} do not fit this world"),
            ));
        }
        let mut net = Mlp::new(&dims, &mut seeding::rng(0, "policy-load"));
        net.load_flat(&params)?;
        Ok(QModel { featurizer, net })
    }
}

/// Train the policy on a dataset (unified rewards or the sparse baseline).
pub fn train_policy(world: &World, dataset: &Dataset, cfg: &RLConfig) -> Result<(QModel, Vec<StepStat>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("cannot train a policy on an empty dataset"));
    }
    let featurizer = Featurizer::new(world, cfg.instr_dim);
    let transitions = build_training_set(&featurizer, dataset, cfg)?;
    let (net, log) = fit_q(&transitions, &QModel::dims_for(world, cfg), cfg)?;
    Ok((QModel { featurizer, net }, log))
}

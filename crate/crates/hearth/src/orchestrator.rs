//! Reward-ensemble orchestrator: learns per-step softmax weights over the
//! three consistency channels and blends them into one unified reward.
//!
//! A small feedforward network maps the (observation, action, instruction)
//! encoding to three logits; softmax turns those into simplex weights
//! `(w_c, w_s, w_t)` and the unified reward is the inner product with the
//! channel triple. Training aligns each trajectory's discounted unified
//! return, normalized by `H·K` (length times the maximum per-step reward
//! magnitude), with the signed success flag:
//!
//! ```text
//! loss(τ) = ( (Σ_t γ^t r̂_t) / (H·K) − α·(2·f_s − 1) )²
//! ```
//!
//! Two fixed ensemble modes ship alongside the learned one: `average`
//! (weights ⅓ each) and `majority` (pessimistic vote over the triple).

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::consistency::vote;
use crate::dataset::{Dataset, RewardTriple, Trajectory};
use crate::env::{ActionId, Observation, World};
use crate::features::{Featurizer, DEFAULT_INSTR_DIM};
use crate::nn::{load_checkpoint, save_checkpoint, softmax, Adam, Grads, Mlp};
use crate::seeding;
use crate::{Error, Result};

/// Maximum per-step reward magnitude; the return normalizer is H·K.
pub const RETURN_SCALE: f64 = 2.0;

/// How the three channels are blended into one reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Per-step learned softmax weights.
    #[default]
    Learned,
    /// Fixed (⅓, ⅓, ⅓).
    Average,
    /// Pessimistic majority vote over the triple.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    /// Hidden-layer width.
    pub hidden: usize,
    /// Width of the hashed-instruction feature block.
    pub instr_dim: usize,
    pub lr: f64,
    /// Trajectories per gradient step.
    pub batch: usize,
    /// Global-norm gradient clip.
    pub grad_clip: f64,
    /// Weight on the signed success target.
    pub alpha: f64,
    /// Per-step discount inside the return.
    pub gamma: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without relative improvement...
    pub plateau_epochs: usize,
    /// ...of at least this much.
    pub plateau_rel: f64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            hidden: 64,
            instr_dim: DEFAULT_INSTR_DIM,
            lr: 1e-4,
            batch: 16,
            grad_clip: 3.0,
            alpha: 1.0,
            gamma: 0.99,
            max_epochs: 400,
            plateau_epochs: 10,
            plateau_rel: 1e-4,
        }
    }
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.instr_dim == 0 || self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::config(
                "orchestrator sizes (hidden, instr_dim, batch, max_epochs) must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!(
                "orchestrator gamma {} outside [0, 1)",
                self.gamma
            )));
        }
        if self.lr <= 0.0 || self.grad_clip <= 0.0 || self.plateau_rel < 0.0 {
            return Err(Error::config(
                "orchestrator lr and grad_clip must be positive, plateau_rel nonnegative",
            ));
        }
        Ok(())
    }
}

/// Trained (or freshly initialized) weight network plus its loss constants.
#[derive(Debug, Clone, PartialEq)]
pub struct OrchestratorModel {
    featurizer: Featurizer,
    net: Mlp,
    pub alpha: f64,
    pub gamma: f64,
}

impl OrchestratorModel {
    pub fn new(world: &World, cfg: &OrchestratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let featurizer = Featurizer::new(world, cfg.instr_dim);
        let dims = [featurizer.full_dim(), cfg.hidden, 3];
        let net = Mlp::new(&dims, &mut seeding::rng(seed, "orchestrator-init"));
        Ok(OrchestratorModel {
            featurizer,
            net,
            alpha: cfg.alpha,
            gamma: cfg.gamma,
        })
    }

    /// Simplex weights (w_c, w_s, w_t) for one step.
    pub fn weights(&self, obs: &Observation, action: ActionId, instruction: &str) -> [f64; 3] {
        let x = self.featurizer.encode(obs, action, instruction);
        let w = softmax(&self.net.forward(&x).out);
        [w[0], w[1], w[2]]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::json!({
            "model": "orchestrator",
            "dims": self.net.dims(),
            "instr_dim": self.featurizer.instr_dim(),
            "alpha": self.alpha,
            "gamma": self.gamma,
        });
        save_checkpoint(path, &header, &self.net.flatten())
    }

    pub fn load(path: &Path, world: &World) -> Result<Self> {
        let (header, params) = load_checkpoint(path)?;
        if header["model"] != "orchestrator" {
            return Err(Error::parse(path, "not an orchestrator checkpoint"));
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
        if dims.len() != 3 || dims[0] != featurizer.full_dim() || dims[2] != 3 {
            return Err(Error::parse(
                path,
                format!("checkpoint dims {dims:?} do not fit this world"),
            ));
        }
        let mut net = Mlp::new(&dims, &mut seeding::rng(0, "orchestrator-load"));
        net.load_flat(&params)?;
        Ok(OrchestratorModel {
            featurizer,
            net,
            alpha: header["alpha"].as_f64().unwrap_or(1.0),
            gamma: header["gamma"].as_f64().unwrap_or(0.99),
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.net.flatten()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        self.net.load_flat(flat)
    }
}

/// Inner product of a channel triple with simplex weights.
pub fn unify(triple: &RewardTriple, weights: [f64; 3]) -> f64 {
    weights[0] * triple.rc as f64 + weights[1] * triple.rs as f64 + weights[2] * triple.rt as f64
}

fn signed_label(f_s: u8) -> f64 {
    2.0 * f_s as f64 - 1.0
}

/// Squared alignment error between a trajectory's normalized discounted
/// unified return and its signed success flag. When `grads` is given, exact
/// parameter gradients are accumulated into it.
pub fn trajectory_loss(
    model: &OrchestratorModel,
    traj: &Trajectory,
    grads: Option<&mut Grads>,
) -> Result<f64> {
    traj.validate()?;
    let triples = traj
        .rewards
        .as_ref()
        .ok_or_else(|| Error::config("trajectory has no reward annotations"))?;
    let h = traj.steps.len();
    let norm = h as f64 * RETURN_SCALE;

    let mut cached = Vec::with_capacity(h);
    let mut ret = 0.0;
    for (t, (step, triple)) in traj.steps.iter().zip(triples).enumerate() {
        let x = model
            .featurizer
            .encode(&step.obs, step.action, &traj.instruction);
        let fwd = model.net.forward(&x);
        let w = softmax(&fwd.out);
        let r = [triple.rc as f64, triple.rs as f64, triple.rt as f64];
        let rhat: f64 = (0..3).map(|j| w[j] * r[j]).sum();
        ret += model.gamma.powi(t as i32) * rhat;
        if grads.is_some() {
            cached.push((fwd, w, r, rhat));
        }
    }
    let g = ret / norm;
    let target = model.alpha * signed_label(traj.f_s);
    let loss = (g - target) * (g - target);

    if let Some(grads) = grads {
        let dret = 2.0 * (g - target) / norm;
        for (t, (fwd, w, r, rhat)) in cached.iter().enumerate() {
            let scale = dret * model.gamma.powi(t as i32);
            // ∂r̂/∂logit_k through the softmax: w_k (r_k − r̂).
            let dout = Array1::from_shape_fn(3, |k| scale * w[k] * (r[k] - rhat));
            model.net.backward(fwd, &dout, grads);
        }
    }
    Ok(loss)
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Mini-batch training until the epoch limit or a loss plateau.
pub fn train_orchestrator(
    world: &World,
    dataset: &Dataset,
    cfg: &OrchestratorConfig,
    seed: u64,
) -> Result<(OrchestratorModel, Vec<EpochStat>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("cannot train the orchestrator on an empty dataset"));
    }
    for traj in dataset {
        traj.validate()?;
        if traj.rewards.is_none() {
            return Err(Error::config(format!(
                "trajectory for task `{}` is missing reward annotations",
                traj.task_id
            )));
        }
    }
    let labels: std::collections::BTreeSet<u8> = dataset.iter().map(|t| t.f_s).collect();
    if labels.len() == 1 {
        log::warn!(
            "all {} trajectories share success label {}; the orchestrator may fit a constant",
            dataset.len(),
            labels.iter().next().unwrap()
        );
    }

    let mut model = OrchestratorModel::new(world, cfg, seed)?;
    let mut adam = Adam::new(&model.net, cfg.lr);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = seeding::rng(seed, "orchestrator-batches");

    let mut curve = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale_epochs = 0usize;
    for epoch in 0..cfg.max_epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = model.net.zero_grads();
            for &i in chunk {
                epoch_loss += trajectory_loss(&model, &dataset[i], Some(&mut grads))?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            grads.clip_global_norm(cfg.grad_clip);
            adam.step(&mut model.net, &grads);
        }
        let mean_loss = epoch_loss / dataset.len() as f64;
        curve.push(EpochStat { epoch, mean_loss });

        if mean_loss < best * (1.0 - cfg.plateau_rel) {
            best = mean_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.plateau_epochs {
                break;
            }
        }
    }
    if !model.net.all_finite() {
        return Err(Error::config("orchestrator training diverged to non-finite parameters"));
    }
    Ok((model, curve))
}

/// Write the training curve as CSV (epoch, mean_loss).
pub fn write_curve(path: &Path, curve: &[EpochStat]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    for stat in curve {
        w.serialize(stat).map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// An ensemble ready to be applied to steps.
pub enum Ensemble<'a> {
    Learned(&'a OrchestratorModel),
    Average,
    Majority,
}

impl Ensemble<'_> {
    fn blend(&self, obs: &Observation, action: ActionId, instruction: &str, t: &RewardTriple) -> f64 {
        match self {
            Ensemble::Learned(model) => unify(t, model.weights(obs, action, instruction)),
            Ensemble::Average => unify(t, [1.0 / 3.0; 3]),
            Ensemble::Majority => vote(&[t.rc, t.rs, t.rt]).expect("three values") as f64,
        }
    }
}

/// Fill in `unified` on every step of every trajectory.
pub fn emit_unified(dataset: &Dataset, ensemble: &Ensemble) -> Result<Dataset> {
    let mut out = Vec::with_capacity(dataset.len());
    for traj in dataset {
        traj.validate()?;
        let triples = traj
            .rewards
            .as_ref()
            .ok_or_else(|| Error::config(format!(
                "trajectory for task `{}` is missing reward annotations",
                traj.task_id
            )))?;
        let mut annotated = traj.clone();
        let new_triples: Vec<RewardTriple> = traj
            .steps
            .iter()
            .zip(triples)
            .map(|(step, t)| {
                let r = self::Ensemble::blend(ensemble, &step.obs, step.action, &traj.instruction, t);
                debug_assert!(r.abs() <= RETURN_SCALE + 1e-9);
                RewardTriple {
                    unified: Some(r),
                    ..t.clone()
                }
            })
            .collect();
        annotated.rewards = Some(new_triples);
        out.push(annotated);
    }
    Ok(out)
}

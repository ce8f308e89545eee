//! Fixed-length numeric encodings of observations, actions, and
//! instructions, used as network inputs.
//!
//! Layout (all blocks concatenated, in this order):
//!
//! | block            | width          | encoding                      |
//! |------------------|----------------|-------------------------------|
//! | visible objects  | object count   | multi-hot                     |
//! | held objects     | object count   | multi-hot                     |
//! | executed actions | action count   | per-action counts             |
//! | instruction      | `instr_dim`    | hashed token presence bits    |
//! | action           | action count   | one-hot (full encoding only)  |
//!
//! The executed-action block matters: visibility is room-scoped, so walking
//! to an object in the agent's current room changes nothing in the visible or
//! held sets. Without history, the state before and after such a step encode
//! identically while demanding different next actions — a greedy policy then
//! repeats the same choice forever. Counts (rather than presence bits) keep
//! the input moving even when an action repeats.
//!
//! Vectors are produced sparsely as `(index, value)` pairs — inputs are a
//! handful of ones in a few-hundred-dimensional space, and the first network
//! layer exploits that.

use crate::env::{ActionId, Observation, World};
use crate::seeding::fnv1a;

/// Sparse vector: strictly ascending indices, nonzero values.
pub type SparseVec = Vec<(usize, f64)>;

/// Deterministic encoder for one world's observation/action space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Featurizer {
    object_count: usize,
    action_count: usize,
    instr_dim: usize,
}

/// Default width of the hashed instruction block.
pub const DEFAULT_INSTR_DIM: usize = 256;

impl Featurizer {
    pub fn new(world: &World, instr_dim: usize) -> Self {
        Featurizer {
            object_count: world.object_count(),
            action_count: world.action_count(),
            instr_dim,
        }
    }

    /// Width of the observation-only encoding:
    /// visible + held + executed actions + instruction.
    pub fn obs_dim(&self) -> usize {
        2 * self.object_count + self.action_count + self.instr_dim
    }

    /// Width of the full encoding: observation blocks plus the action block.
    pub fn full_dim(&self) -> usize {
        self.obs_dim() + self.action_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn instr_dim(&self) -> usize {
        self.instr_dim
    }

    /// Encode (observation, instruction) — the policy-network input.
    pub fn encode_obs(&self, obs: &Observation, instruction: &str) -> SparseVec {
        let mut out = Vec::with_capacity(obs.visible.len() + obs.held.len() + 8);
        for &o in &obs.visible {
            out.push((o as usize, 1.0));
        }
        let mut held: Vec<usize> = obs.held.iter().map(|&o| o as usize).collect();
        held.sort_unstable();
        for o in held {
            out.push((self.object_count + o, 1.0));
        }
        let hist_base = 2 * self.object_count;
        let mut executed = vec![0u32; self.action_count];
        for &a in &obs.history {
            executed[a as usize] += 1;
        }
        for (i, &c) in executed.iter().enumerate() {
            if c > 0 {
                out.push((hist_base + i, c as f64));
            }
        }
        let base = hist_base + self.action_count;
        let mut present = vec![false; self.instr_dim];
        for token in tokenize(instruction) {
            present[(fnv1a(token.as_bytes()) % self.instr_dim as u64) as usize] = true;
        }
        for (i, &p) in present.iter().enumerate() {
            if p {
                out.push((base + i, 1.0));
            }
        }
        out
    }

    /// Encode (observation, action, instruction) — the orchestrator input.
    pub fn encode(&self, obs: &Observation, action: ActionId, instruction: &str) -> SparseVec {
        let mut out = self.encode_obs(obs, instruction);
        out.push((self.obs_dim() + action as usize, 1.0));
        out
    }
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

//! Reward-estimation personas.
//!
//! A *persona* scores candidate actions on the {−2..2} scale, names the
//! objects it considers relevant to a task, and judges whether an action
//! sequence can achieve an instruction. A panel of personas backs the
//! consistency checks downstream.
//!
//! Two backends implement the same three operations:
//!
//! * [`scripted`] — a deterministic in-process oracle built on [`rubric`],
//!   optionally degraded by configurable corruption (score flips, systematic
//!   bias, a misconceived object location, question-answering slips,
//!   verification slips). Corruption draws are hash-derived from the persona
//!   seed and the query content, so every answer is a pure function of its
//!   inputs — identical across reruns and safe to evaluate in any order.
//! * [`remote`] — an HTTP text endpoint speaking a small JSON wire format;
//!   replies are parsed for `Score:` / `relevant objects:` /
//!   `possible`/`impossible` markers.
//!
//! Every reward leaving this module is clamped to the scale, whatever the
//! backend returned.

pub mod remote;
pub mod rubric;
pub mod scripted;

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::env::{ActionId, HomeLocation, InstructionSet, Observation, World};
use crate::{Error, Result};

/// The reward scale: every estimate is one of these values.
pub const REWARD_VALUES: [i8; 5] = [-2, -1, 0, 1, 2];

/// Clamp an arbitrary integer onto the reward scale.
pub fn clamp_reward(v: i64) -> i8 {
    v.clamp(-2, 2) as i8
}

/// Persona flavors. Each maps to one prompt-template family in remote mode;
/// in scripted mode the flavor only names the persona (behavior is set by
/// its corruption profile).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PersonaKind {
    Naive,
    Icl1,
    Icl2,
    Icl3,
    Cot,
    Extra,
}

impl PersonaKind {
    pub fn slug(self) -> &'static str {
        match self {
            PersonaKind::Naive => "naive",
            PersonaKind::Icl1 => "icl-1",
            PersonaKind::Icl2 => "icl-2",
            PersonaKind::Icl3 => "icl-3",
            PersonaKind::Cot => "cot",
            PersonaKind::Extra => "extra",
        }
    }
}

/// Which persona kinds sit on a panel of size `n`. Panels grow around the
/// strongest scorer: a single persona is the deliberative one, mid-size
/// panels add the example-guided variants, and the largest adds two
/// auxiliaries.
pub fn panel_kinds(n: usize) -> Result<Vec<PersonaKind>> {
    use PersonaKind::*;
    match n {
        1 => Ok(vec![Cot]),
        3 => Ok(vec![Icl1, Icl2, Cot]),
        5 => Ok(vec![Naive, Icl1, Icl2, Icl3, Cot]),
        7 => Ok(vec![Naive, Icl1, Icl2, Icl3, Cot, Extra, Extra]),
        _ => Err(Error::config(format!(
            "unsupported panel size {n}: expected 1, 3, 5, or 7"
        ))),
    }
}

/// A believed-but-wrong object location. The persona scores and answers as
/// if the object lived here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misconception {
    pub object: String,
    pub location: HomeLocation,
}

/// How a scripted persona deviates from the oracle. All-zero (the default)
/// means a perfectly faithful scorer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Corruption {
    /// Probability a score is replaced by a different value from the scale.
    pub flip_rate: f64,
    /// Systematic offset added to every score before clamping.
    pub bias: i8,
    /// Misremembered home location of one object; induces a shifted world
    /// model for scoring, relevance, and verification.
    pub misconception: Option<Misconception>,
    /// Probability a relevant-objects answer is off by exactly one element.
    pub qa_error_rate: f64,
    /// Probability a plan verification verdict is negated.
    pub verify_error_rate: f64,
}


impl Corruption {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("flip_rate", self.flip_rate),
            ("qa_error_rate", self.qa_error_rate),
            ("verify_error_rate", self.verify_error_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.flip_rate == 0.0
            && self.bias == 0
            && self.misconception.is_none()
            && self.qa_error_rate == 0.0
            && self.verify_error_rate == 0.0
    }
}

/// One persona on the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub id: u32,
    pub kind: PersonaKind,
    #[serde(default)]
    pub corruption: Corruption,
    /// Seed for this persona's private corruption draws.
    #[serde(default)]
    pub seed: u64,
}

impl PersonaSpec {
    /// A faithful persona with a seed derived from its id.
    pub fn clean(id: u32, kind: PersonaKind) -> Self {
        PersonaSpec {
            id,
            kind,
            corruption: Corruption::default(),
            seed: id as u64,
        }
    }
}

/// A full clean panel of `n` personas, ids 1..=n.
pub fn clean_panel(n: usize) -> Result<Vec<PersonaSpec>> {
    Ok(panel_kinds(n)?
        .into_iter()
        .enumerate()
        .map(|(i, kind)| PersonaSpec::clean(i as u32 + 1, kind))
        .collect())
}

/// One persona's view of one query as recorded downstream: the reward it
/// gave (cleared to `None` only when a consistency check filters the persona
/// out — estimators themselves always produce a value), the objects it
/// called relevant, and the raw reply text in remote mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaResponse {
    pub persona: u32,
    pub reward: Option<i8>,
    #[serde(default)]
    pub relevant: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

/// A scored reply from one persona.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub reward: i8,
    /// Raw reply text (remote mode only).
    pub raw: Option<String>,
}

enum Backend {
    Scripted(scripted::ScriptedPersona),
    Remote(remote::RemotePersona),
}

/// The persona panel behind one handle. Routes each query to the right
/// backend, resolves instructions to tasks for the scripted oracle, and
/// counts every query served (the cross-domain audit asserts this stays
/// flat while annotations are reused).
pub struct EstimatorHub {
    specs: Vec<PersonaSpec>,
    backends: Vec<Backend>,
    task_index: BTreeMap<String, usize>,
    calls: AtomicU64,
}

impl EstimatorHub {
    /// Build a scripted panel over `world`. `instructions` supplies the
    /// instruction → task resolution the oracle needs.
    pub fn scripted(
        world: &World,
        instructions: &InstructionSet,
        specs: &[PersonaSpec],
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("persona panel must not be empty"));
        }
        let mut backends = Vec::with_capacity(specs.len());
        for spec in specs {
            spec.corruption.validate()?;
            backends.push(Backend::Scripted(scripted::ScriptedPersona::new(
                world, spec,
            )?));
        }
        Ok(EstimatorHub {
            specs: specs.to_vec(),
            backends,
            task_index: instructions.task_index()?,
            calls: AtomicU64::new(0),
        })
    }

    /// Build a remote panel sharing one transport.
    pub fn remote(
        world: &World,
        instructions: &InstructionSet,
        specs: &[PersonaSpec],
        transport: std::sync::Arc<dyn remote::Transport>,
        retries: u32,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("persona panel must not be empty"));
        }
        let backends = specs
            .iter()
            .map(|spec| {
                Backend::Remote(remote::RemotePersona::new(
                    world,
                    spec.clone(),
                    transport.clone(),
                    retries,
                ))
            })
            .collect();
        Ok(EstimatorHub {
            specs: specs.to_vec(),
            backends,
            task_index: instructions.task_index()?,
            calls: AtomicU64::new(0),
        })
    }

    pub fn persona_count(&self) -> usize {
        self.backends.len()
    }

    pub fn spec(&self, persona: usize) -> &PersonaSpec {
        &self.specs[persona]
    }

    pub fn specs(&self) -> &[PersonaSpec] {
        &self.specs
    }

    /// Total queries served (estimates + relevance answers + verifications).
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn task_of(&self, persona: u32, instruction: &str) -> Result<usize> {
        self.task_index.get(instruction).copied().ok_or_else(|| {
            Error::estimator(persona, format!("instruction not in index: {instruction:?}"))
        })
    }

    /// Score `action` under `instruction` given the observation.
    pub fn estimate(
        &self,
        persona: usize,
        obs: &Observation,
        action: ActionId,
        instruction: &str,
    ) -> Result<Estimate> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &self.backends[persona] {
            Backend::Scripted(p) => {
                let task = self.task_of(p.id(), instruction)?;
                Ok(p.estimate(task, obs, action, instruction))
            }
            Backend::Remote(p) => p.estimate(obs, action, instruction),
        }
    }

    /// Name the visible objects the persona considers relevant to the task.
    pub fn answer_qa(
        &self,
        persona: usize,
        obs: &Observation,
        instruction: &str,
    ) -> Result<BTreeSet<String>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &self.backends[persona] {
            Backend::Scripted(p) => {
                let task = self.task_of(p.id(), instruction)?;
                Ok(p.answer_qa(task, obs, instruction))
            }
            Backend::Remote(p) => p.answer_qa(obs, instruction),
        }
    }

    /// Judge whether executing `plan` from the initial state achieves the
    /// instruction.
    pub fn verify_plan(
        &self,
        persona: usize,
        instruction: &str,
        plan: &[ActionId],
    ) -> Result<bool> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &self.backends[persona] {
            Backend::Scripted(p) => {
                let task = self.task_of(p.id(), instruction)?;
                Ok(p.verify_plan(task, instruction, plan))
            }
            Backend::Remote(p) => p.verify_plan(instruction, plan),
        }
    }

    /// The action this persona scores highest at `obs` (ties toward the
    /// lowest action id) — its implied next step.
    pub fn best_action(
        &self,
        persona: usize,
        obs: &Observation,
        instruction: &str,
    ) -> Result<ActionId> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match &self.backends[persona] {
            Backend::Scripted(p) => {
                let task = self.task_of(p.id(), instruction)?;
                Ok(p.best_action(task, obs, instruction))
            }
            Backend::Remote(p) => p.best_action(obs, instruction),
        }
    }
}

//! Deterministic in-process personas.
//!
//! A scripted persona owns its own *believed* copy of the world. Faithful
//! personas believe the actual world; a persona with a misconception believes
//! a world where one object lives somewhere else, with task plans re-derived
//! accordingly. Every operation — scoring, relevance answering, plan
//! verification — runs entirely inside the believed world: the persona
//! replays the given history there, looks at what *it* thinks is visible,
//! and measures progress against *its* plan. This is what makes a
//! misconceived persona coherent rather than merely noisy: its mistakes are
//! all consequences of one wrong belief.
//!
//! Stochastic corruption (score flips, answer slips, verdict negations)
//! never draws from a shared stream. Each draw hashes (persona seed, query
//! content), so answers are pure functions of their inputs.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::dataset::task_relevant_objects;
use crate::env::{
    all_goals_met, step, visible_set, ActionId, DomainShift, ObjectId, Observation, World,
};
use crate::seeding;
use crate::{Error, Result};

use super::{clamp_reward, rubric, Estimate, PersonaSpec, REWARD_VALUES};

pub struct ScriptedPersona {
    spec: PersonaSpec,
    /// The world this persona believes in (a plain copy when faithful).
    world: World,
    /// Believed plan per task index (re-derived under a misconception;
    /// the original expert when the believed world leaves a task unsolvable).
    plans: Vec<Vec<ActionId>>,
    /// Believed task-relevant objects per task index.
    relevant: Vec<BTreeSet<ObjectId>>,
}

impl ScriptedPersona {
    pub fn new(actual: &World, spec: &PersonaSpec) -> Result<Self> {
        let world = match &spec.corruption.misconception {
            Some(mis) => {
                let mut moves = BTreeMap::new();
                moves.insert(mis.object.clone(), mis.location.clone());
                let (believed, _report) = actual.apply_shift(&DomainShift(moves)).map_err(|e| {
                    Error::estimator(spec.id, format!("misconception is unrealizable: {e}"))
                })?;
                believed
            }
            None => actual.clone(),
        };
        // `apply_shift` re-derives plans for tasks the belief breaks and
        // leaves the original expert in place where no believed plan exists,
        // which is exactly the fallback wanted here.
        let plans: Vec<Vec<ActionId>> = world.tasks().iter().map(|t| t.expert.clone()).collect();
        let mut relevant = Vec::with_capacity(plans.len());
        for task in world.tasks() {
            relevant.push(task_relevant_objects(&world, &task.id)?);
        }
        Ok(ScriptedPersona {
            spec: spec.clone(),
            world,
            plans,
            relevant,
        })
    }

    pub fn id(&self) -> u32 {
        self.spec.id
    }

    /// Unit-interval draw for one named corruption decision on one query.
    fn draw(&self, channel: &str, fingerprint: u64) -> f64 {
        seeding::unit(seeding::derive_indexed(self.spec.seed, channel, fingerprint))
    }

    /// Auxiliary integer draw (element selection) for one query.
    fn pick(&self, channel: &str, fingerprint: u64) -> u64 {
        seeding::derive_indexed(self.spec.seed, channel, fingerprint)
    }

    fn history_key(history: &[ActionId]) -> String {
        history
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Degrade a faithful score the way this persona's profile dictates:
    /// systematic bias first, then a content-keyed chance of flipping to a
    /// different scale value.
    fn corrupted_reward(
        &self,
        true_score: i8,
        history: &[ActionId],
        action: ActionId,
        instruction: &str,
    ) -> i8 {
        let mut reward = clamp_reward(true_score as i64 + self.spec.corruption.bias as i64);
        if self.spec.corruption.flip_rate > 0.0 {
            let fp = seeding::fingerprint(&[
                "estimate",
                &self.spec.id.to_string(),
                instruction,
                &Self::history_key(history),
                &action.to_string(),
            ]);
            if self.draw("flip", fp) < self.spec.corruption.flip_rate {
                let others: Vec<i8> = REWARD_VALUES
                    .iter()
                    .copied()
                    .filter(|&v| v != reward)
                    .collect();
                reward = others[(self.pick("flip-value", fp) % others.len() as u64) as usize];
            }
        }
        reward
    }

    pub fn estimate(
        &self,
        task: usize,
        obs: &Observation,
        action: ActionId,
        instruction: &str,
    ) -> Estimate {
        let plan = &self.plans[task];
        let ctx = rubric::context(&self.world, plan, &obs.history);
        let true_score = rubric::score_at(&self.world, plan, &ctx, action);
        Estimate {
            reward: self.corrupted_reward(true_score, &obs.history, action, instruction),
            raw: None,
        }
    }

    pub fn answer_qa(
        &self,
        task: usize,
        obs: &Observation,
        instruction: &str,
    ) -> BTreeSet<String> {
        // Re-ground the history in the believed world: what the persona
        // thinks is visible now, filtered by what it thinks matters.
        let ctx = rubric::context(&self.world, &[], &obs.history);
        let visible = visible_set(&self.world, &ctx.state);
        let mut answer: BTreeSet<ObjectId> = visible
            .iter()
            .copied()
            .filter(|o| self.relevant[task].contains(o))
            .collect();
        if self.spec.corruption.qa_error_rate > 0.0 {
            let fp = seeding::fingerprint(&[
                "qa",
                &self.spec.id.to_string(),
                instruction,
                &Self::history_key(&obs.history),
            ]);
            if self.draw("qa-slip", fp) < self.spec.corruption.qa_error_rate {
                let h = self.pick("qa-edit", fp);
                let dropping = h & 1 == 0 && !answer.is_empty();
                if dropping {
                    let victim = *answer
                        .iter()
                        .nth(((h >> 1) % answer.len() as u64) as usize)
                        .expect("non-empty");
                    answer.remove(&victim);
                } else {
                    // Add one object the persona did not answer: prefer a
                    // believed-visible one, fall back to any object.
                    let mut candidates: Vec<ObjectId> = visible
                        .iter()
                        .copied()
                        .filter(|o| !answer.contains(o))
                        .collect();
                    if candidates.is_empty() {
                        candidates = (0..self.world.object_count() as ObjectId)
                            .filter(|o| !answer.contains(o))
                            .collect();
                    }
                    answer.insert(candidates[((h >> 1) % candidates.len() as u64) as usize]);
                }
            }
        }
        answer
            .into_iter()
            .map(|o| self.world.display_name(o))
            .collect()
    }

    pub fn verify_plan(&self, task: usize, instruction: &str, plan: &[ActionId]) -> bool {
        let mut state = self.world.initial_state();
        for &a in plan {
            state = step(&self.world, &state, a).0;
        }
        let mut verdict = all_goals_met(&state, &self.world.tasks()[task]);
        if self.spec.corruption.verify_error_rate > 0.0 {
            let fp = seeding::fingerprint(&[
                "verify",
                &self.spec.id.to_string(),
                instruction,
                &Self::history_key(plan),
            ]);
            if self.draw("verify-slip", fp) < self.spec.corruption.verify_error_rate {
                verdict = !verdict;
            }
        }
        verdict
    }

    /// The action this persona values most at an observation — the argmax of
    /// the scores it would actually report, corruption included (ties toward
    /// the lowest action id). The temporal-consistency check reads out the
    /// persona's implied plan this way.
    pub fn best_action(&self, task: usize, obs: &Observation, instruction: &str) -> ActionId {
        let plan = &self.plans[task];
        let ctx = rubric::context(&self.world, plan, &obs.history);
        let mut best = 0u16;
        let mut best_score = i8::MIN;
        for a in 0..self.world.action_count() as ActionId {
            let s = rubric::score_at(&self.world, plan, &ctx, a);
            let s = self.corrupted_reward(s, &obs.history, a, instruction);
            if s > best_score {
                best = a;
                best_score = s;
            }
        }
        best
    }
}

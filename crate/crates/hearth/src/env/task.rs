//! Natural-language instruction generation.
//!
//! Each task gets three string pools, all deterministic under a seed:
//!
//! * `train` — fine-grained step-by-step phrasings attached to stored
//!   trajectories;
//! * `eval_fine` — additional fine-grained phrasings held out from the train
//!   pool (string-disjoint, same synonym vocabulary);
//! * `eval_abstract` — goal-level paraphrases drawn from per-style template
//!   pools; these never appear in stored data.
//!
//! Fine-grained phrasings are assembled step by step from verb synonym sets.
//! Placement steps name the item that actually leaves the hand, which is
//! recovered by replaying the expert sequence (held items leave in grab
//! order).

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{step, Observation, Sim};
use super::world::{AbstractStyle, ActionId, Behavior, CompiledTask, World};
use crate::error::{Error, Result};
use crate::seeding;

const FIND_VERBS: [&str; 5] = ["find", "locate", "walk to", "go to", "head to"];
const GRAB_VERBS: [&str; 3] = ["grab", "pick up", "take"];
const OPEN_VERBS: [&str; 2] = ["open", "pull open"];
const CLOSE_VERBS: [&str; 2] = ["close", "shut"];
const SIT_VERBS: [&str; 3] = ["sit on", "sit down on", "take a seat on"];
const SWITCH_VERBS: [&str; 2] = ["switch on", "turn on"];
// Placement phrases carry two slots: the item leaving the hand and the target.
const PUT_FORMS: [(&str, &str); 3] = [("put", "on"), ("place", "on"), ("set", "on")];
const PUT_IN_FORMS: [(&str, &str); 3] = [("put", "in"), ("place", "inside"), ("drop", "into")];

const PLACE_ON_TEMPLATES: [&str; 12] = [
    "move {item} over to {dest}.",
    "put {item} on {dest}.",
    "set {item} down on {dest}.",
    "place {item} onto {dest}.",
    "i want {item} on {dest}.",
    "make sure {item} ends up on {dest}.",
    "bring {item} to {dest}.",
    "get {item} onto {dest}.",
    "leave {item} on {dest}.",
    "{item} should be on {dest}.",
    "could you put {item} over on {dest}?",
    "take {item} and set it on {dest}.",
];

const PLACE_IN_TEMPLATES: [&str; 12] = [
    "put {item} away in {dest}.",
    "stick {item} in {dest}.",
    "place {item} inside {dest}.",
    "drop {item} into {dest}.",
    "i want {item} in {dest}.",
    "make sure {item} ends up inside {dest}.",
    "get {item} into {dest}.",
    "stash {item} in {dest}.",
    "tuck {item} away inside {dest}.",
    "{item} belongs in {dest}.",
    "could you put {item} into {dest}?",
    "take {item} and put it in {dest}.",
];

const HOLD_SIT_TEMPLATES: [&str; 12] = [
    "take {item} and relax on {dest}.",
    "grab {item} and have a seat on {dest}.",
    "bring {item} over and sit on {dest}.",
    "get {item} and settle down on {dest}.",
    "hold {item} while sitting on {dest}.",
    "pick up {item} and take a seat on {dest}.",
    "sit on {dest} with {item} in hand.",
    "i want to see you on {dest} holding {item}.",
    "carry {item} to {dest} and sit down.",
    "fetch {item}, then rest on {dest}.",
    "with {item} in hand, sit down on {dest}.",
    "settle onto {dest} holding {item}.",
];

const APPLIANCE_TEMPLATES: [&str; 12] = [
    "use {appliance} to get {item} ready over at {dest}.",
    "get {item} going with {appliance}, finishing at {dest}.",
    "switch on {appliance} and see that {item} makes it to {dest}.",
    "have {appliance} running and {item} at {dest}.",
    "warm things up: {item} to {dest} with {appliance} on.",
    "fire up {appliance} so {item} is handled at {dest}.",
    "i want {appliance} on and {item} at {dest}.",
    "prepare {item} using {appliance}, with {dest} as the spot.",
    "run {appliance} and put {item} where it belongs: {dest}.",
    "get {item} warm — {appliance} on, {item} at {dest}.",
    "could you start {appliance} and sort out {item} at {dest}?",
    "handle {item} with {appliance}; {dest} is the target.",
];

const SERVE_TEMPLATES: [&str; 12] = [
    "lay out {item} on {dest} for a snack.",
    "serve {item} on {dest}.",
    "set the table: {item} on {dest}.",
    "arrange {item} on {dest}.",
    "get {item} served at {dest}.",
    "snack time — {item} on {dest}, please.",
    "put together a snack with {item} on {dest}.",
    "i want {item} laid out on {dest}.",
    "dish up {item} at {dest}.",
    "make a little spread of {item} on {dest}.",
    "could you serve {item} over on {dest}?",
    "bring {item} out to {dest}.",
];

fn style_templates(style: AbstractStyle) -> &'static [&'static str; 12] {
    match style {
        AbstractStyle::PlaceOn => &PLACE_ON_TEMPLATES,
        AbstractStyle::PlaceIn => &PLACE_IN_TEMPLATES,
        AbstractStyle::HoldSit => &HOLD_SIT_TEMPLATES,
        AbstractStyle::Appliance => &APPLIANCE_TEMPLATES,
        AbstractStyle::Serve => &SERVE_TEMPLATES,
    }
}

/// Per-step rendering inputs: the acted-on object and, for placements, the
/// item leaving the hand.
struct StepPhrase {
    behavior: Behavior,
    object: String,
    placed_item: Option<String>,
}

/// Replay the expert sequence to recover what each placement step places.
fn step_phrases(world: &World, task: &CompiledTask) -> Vec<StepPhrase> {
    let mut state = world.initial_state();
    let mut phrases = Vec::with_capacity(task.expert.len());
    for &action in &task.expert {
        let (behavior, object) = world.action(action);
        let placed_item = match behavior {
            Behavior::Put | Behavior::PutIn => state
                .held
                .first()
                .map(|&id| world.display_name(id).to_string()),
            _ => None,
        };
        phrases.push(StepPhrase {
            behavior,
            object: world.display_name(object).to_string(),
            placed_item,
        });
        let (next, _) = step(world, &state, action);
        state = next;
    }
    phrases
}

/// Render one step with the chosen synonym index.
fn render_step(phrase: &StepPhrase, choice: usize) -> String {
    let obj = &phrase.object;
    match phrase.behavior {
        Behavior::Find => format!("{} the {obj}", FIND_VERBS[choice % FIND_VERBS.len()]),
        Behavior::Grab => format!("{} the {obj}", GRAB_VERBS[choice % GRAB_VERBS.len()]),
        Behavior::Open => format!("{} the {obj}", OPEN_VERBS[choice % OPEN_VERBS.len()]),
        Behavior::Close => format!("{} the {obj}", CLOSE_VERBS[choice % CLOSE_VERBS.len()]),
        Behavior::Sit => format!("{} the {obj}", SIT_VERBS[choice % SIT_VERBS.len()]),
        Behavior::SwitchOn => {
            format!("{} the {obj}", SWITCH_VERBS[choice % SWITCH_VERBS.len()])
        }
        Behavior::Put => {
            let (verb, prep) = PUT_FORMS[choice % PUT_FORMS.len()];
            let item = phrase.placed_item.as_deref().unwrap_or("it");
            format!("{verb} the {item} {prep} the {obj}")
        }
        Behavior::PutIn => {
            let (verb, prep) = PUT_IN_FORMS[choice % PUT_IN_FORMS.len()];
            let item = phrase.placed_item.as_deref().unwrap_or("it");
            format!("{verb} the {item} {prep} the {obj}")
        }
    }
}

fn capitalize(mut s: String) -> String {
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    s
}

/// Assemble one full fine-grained instruction from per-step synonym choices.
fn assemble_fine(phrases: &[StepPhrase], choices: &[usize]) -> String {
    let rendered: Vec<String> = phrases
        .iter()
        .zip(choices)
        .map(|(p, &c)| render_step(p, c))
        .collect();
    let text = if rendered.len() == 1 {
        rendered[0].clone()
    } else {
        let head = rendered[..rendered.len() - 1].join(", ");
        format!("{head}, then {}", rendered[rendered.len() - 1])
    };
    capitalize(text) + "."
}

/// Number of synonym choices available for a step.
fn choice_count(behavior: Behavior) -> usize {
    match behavior {
        Behavior::Find => FIND_VERBS.len(),
        Behavior::Grab => GRAB_VERBS.len(),
        Behavior::Open => OPEN_VERBS.len(),
        Behavior::Close => CLOSE_VERBS.len(),
        Behavior::Sit => SIT_VERBS.len(),
        Behavior::SwitchOn => SWITCH_VERBS.len(),
        Behavior::Put => PUT_FORMS.len(),
        Behavior::PutIn => PUT_IN_FORMS.len(),
    }
}

/// Draw `want` distinct fine-grained variants, skipping members of `exclude`.
fn fine_variants(
    phrases: &[StepPhrase],
    rng: &mut ChaCha8Rng,
    want: usize,
    exclude: &BTreeSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(want);
    let mut seen = BTreeSet::new();
    let attempts = want.max(1) * 60;
    for _ in 0..attempts {
        if out.len() == want {
            break;
        }
        let choices: Vec<usize> = phrases
            .iter()
            .map(|p| rng.gen_range(0..choice_count(p.behavior)))
            .collect();
        let text = assemble_fine(phrases, &choices);
        if !exclude.contains(&text) && seen.insert(text.clone()) {
            out.push(text);
        }
    }
    out
}

/// Realize an abstract template with the task's slot phrases.
fn realize_abstract(template: &str, task: &CompiledTask) -> String {
    let t = &task.templates;
    let mut text = template
        .replace("{item}", &t.item_phrase)
        .replace("{dest}", &t.dest_phrase);
    if let Some(app) = &t.appliance_phrase {
        text = text.replace("{appliance}", app);
    }
    capitalize(text)
}

/// All instruction pools for one world, indexed by task position.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct InstructionSet {
    /// Fine-grained phrasings attached to stored trajectories, per task.
    pub train: Vec<Vec<String>>,
    /// Held-out fine-grained phrasings, per task (disjoint from `train`).
    pub eval_fine: Vec<Vec<String>>,
    /// Held-out goal-level paraphrases, per task.
    pub eval_abstract: Vec<Vec<String>>,
}

/// Number of held-out phrasings per task and kind.
pub const EVAL_PER_TASK: usize = 5;

impl InstructionSet {
    /// Generate pools for every task in the world. `train_pool` is the number
    /// of fine-grained variants available to the dataset forge per task.
    pub fn generate(world: &World, seed: u64, train_pool: usize) -> Result<Self> {
        let mut train = Vec::new();
        let mut eval_fine = Vec::new();
        let mut eval_abstract = Vec::new();
        for task in world.tasks() {
            let phrases = step_phrases(world, task);
            let mut rng = seeding::rng(seed, &format!("instructions/{}", task.id));

            let eval = fine_variants(&phrases, &mut rng, EVAL_PER_TASK, &BTreeSet::new());
            if eval.len() < EVAL_PER_TASK {
                return Err(Error::config(format!(
                    "task {}: only {} distinct fine-grained phrasings available, need {}",
                    task.id,
                    eval.len(),
                    EVAL_PER_TASK
                )));
            }
            let exclude: BTreeSet<String> = eval.iter().cloned().collect();
            let pool = fine_variants(&phrases, &mut rng, train_pool, &exclude);
            if pool.is_empty() {
                return Err(Error::config(format!(
                    "task {}: fine-grained phrasing space exhausted by the held-out set",
                    task.id
                )));
            }

            let templates = style_templates(task.templates.style);
            let mut order: Vec<usize> = (0..templates.len()).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let abs: Vec<String> = order[..EVAL_PER_TASK]
                .iter()
                .map(|&i| realize_abstract(templates[i], task))
                .collect();

            train.push(pool);
            eval_fine.push(eval);
            eval_abstract.push(abs);
        }
        let set = InstructionSet {
            train,
            eval_fine,
            eval_abstract,
        };
        set.task_index()?; // surface cross-task collisions at generation time
        Ok(set)
    }

    /// Map every known instruction text to its task position. Errors if two
    /// tasks ever share a text (would make reward queries ambiguous).
    pub fn task_index(&self) -> Result<BTreeMap<String, usize>> {
        let mut index = BTreeMap::new();
        let pools = [&self.train, &self.eval_fine, &self.eval_abstract];
        for pool in pools {
            for (task, texts) in pool.iter().enumerate() {
                for text in texts {
                    if let Some(&prev) = index.get(text.as_str()) {
                        if prev != task {
                            return Err(Error::config(format!(
                                "instruction text maps to two tasks ({prev} and {task}): {text:?}"
                            )));
                        }
                    }
                    index.insert(text.clone(), task);
                }
            }
        }
        Ok(index)
    }

    /// Pick the train-pool phrasing for trajectory `draw` of task `task`.
    pub fn assign_train(&self, task: usize, draw: u64) -> &str {
        let pool = &self.train[task];
        &pool[(draw % pool.len() as u64) as usize]
    }
}

/// One rendered reward query: everything a persona sees about a single step.
/// Built here because it is pure environment text plumbing.
#[derive(Debug, Clone)]
pub struct QueryView {
    pub instruction: String,
    pub visible: String,
    pub grabbed: String,
    pub history: String,
    pub action: String,
}

/// Render the textual view of (observation, action) the way personas see it.
pub fn query_view(world: &World, instruction: &str, obs: &Observation, action: ActionId) -> QueryView {
    let held: Vec<String> = obs.held.iter().map(|&id| world.display_name(id)).collect();
    let history: Vec<String> = obs
        .history
        .iter()
        .map(|&a| world.action_name(a))
        .collect();
    QueryView {
        instruction: instruction.to_string(),
        visible: super::state::render_observation(world, obs),
        grabbed: held.join(", "),
        history: history.join(", "),
        action: world.action_name(action),
    }
}

/// Convenience: replay a task's expert sequence and return the simulator.
pub fn expert_sim(world: &World, task: &CompiledTask) -> Sim {
    expert_prefix_sim(world, task, task.expert.len())
}

/// Replay only the first `steps` expert actions of a task.
pub fn expert_prefix_sim(world: &World, task: &CompiledTask, steps: usize) -> Sim {
    let mut sim = Sim::new(world);
    for &a in &task.expert[..steps] {
        sim.step(world, a);
    }
    sim
}

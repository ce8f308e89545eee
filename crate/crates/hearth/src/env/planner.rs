//! Breadth-first expert replanning over simulator states.
//!
//! Used when a domain shift invalidates a task's expert sequence, and by
//! estimator personas that hold a misconceived world model and need a
//! "believed" plan. The search is restricted to actions touching objects the
//! task can possibly care about (goal arguments plus the current holders of
//! goal objects), which keeps the reachable state space tiny.

use std::collections::{HashMap, VecDeque};

use super::state::{self, Pos, State};
use super::world::{ActionId, CompiledGoal, CompiledTask, ObjectId, World};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Plan(Vec<ActionId>),
    /// All goals already hold in the initial state.
    PreSatisfied,
    /// No plan within the depth bound.
    Unreachable,
}

const MAX_DEPTH: usize = 24;

/// Objects whose actions the planner may use: goal arguments plus the chain
/// of holders above each movable goal object in the initial state.
fn relevant_objects(world: &World, task: &CompiledTask, init: &State) -> Vec<bool> {
    let mut relevant = vec![false; world.objects.len()];
    let mark_chain = |mut obj: ObjectId, relevant: &mut Vec<bool>| loop {
        relevant[obj as usize] = true;
        match init.pos[obj as usize] {
            Pos::On(h) | Pos::In(h) => obj = h,
            Pos::Room(_) | Pos::Held => break,
        }
    };
    for goal in &task.goal_ids {
        match *goal {
            CompiledGoal::ObjectAt { object, target } => {
                mark_chain(object, &mut relevant);
                mark_chain(target, &mut relevant);
            }
            CompiledGoal::ObjectIn { object, container } => {
                mark_chain(object, &mut relevant);
                mark_chain(container, &mut relevant);
            }
            CompiledGoal::Holding { object } => mark_chain(object, &mut relevant),
            CompiledGoal::SittingOn { seat } => mark_chain(seat, &mut relevant),
            CompiledGoal::SwitchedOn { device } => mark_chain(device, &mut relevant),
        }
    }
    relevant
}

/// Compact state key over the relevant projection.
fn encode_key(state: &State, relevant: &[bool]) -> Vec<u16> {
    let mut key = Vec::with_capacity(8 + relevant.len());
    key.push(state.agent_room);
    key.push(state.seat.map_or(u16::MAX, |s| s));
    key.push(state.held.len() as u16);
    key.extend(state.held.iter().copied());
    for (i, &rel) in relevant.iter().enumerate() {
        if !rel {
            continue;
        }
        let pos = match state.pos[i] {
            Pos::Room(r) => r,
            Pos::On(o) => 1000 + o,
            Pos::In(o) => 2000 + o,
            Pos::Held => 3000,
        };
        key.push(pos);
        key.push(state.open[i] as u16 | ((state.switched_on[i] as u16) << 1));
    }
    key
}

/// Shortest feasible action sequence satisfying all task goals, or a marker.
/// Deterministic: actions expand in ascending id order.
pub fn plan(world: &World, task: &CompiledTask) -> PlanOutcome {
    let init = world.initial_state();
    if state::all_goals_met(&init, task) {
        return PlanOutcome::PreSatisfied;
    }
    let relevant = relevant_objects(world, task, &init);
    let usable: Vec<ActionId> = (0..world.actions.len() as ActionId)
        .filter(|&a| {
            let (_, obj) = world.action(a);
            relevant[obj as usize]
        })
        .collect();

    let mut seen: HashMap<Vec<u16>, usize> = HashMap::new();
    // parents[i] = (parent index, action), chained back to the root.
    let mut parents: Vec<(usize, ActionId)> = Vec::new();
    let mut states: Vec<State> = vec![init.clone()];
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new(); // (state idx, depth)
    seen.insert(encode_key(&init, &relevant), 0);
    queue.push_back((0, 0));

    while let Some((idx, depth)) = queue.pop_front() {
        if depth >= MAX_DEPTH {
            continue;
        }
        let cur = states[idx].clone();
        for &a in &usable {
            let (next, ok) = state::step(world, &cur, a);
            if !ok {
                continue;
            }
            let key = encode_key(&next, &relevant);
            if seen.contains_key(&key) {
                continue;
            }
            let next_idx = states.len();
            states.push(next.clone());
            parents.push((idx, a));
            seen.insert(key, next_idx);
            if state::all_goals_met(&next, task) {
                // Reconstruct the action path from the parent chain.
                let mut path = Vec::new();
                let mut node = next_idx;
                while node != 0 {
                    let (p, act) = parents[node - 1];
                    path.push(act);
                    node = p;
                }
                path.reverse();
                return PlanOutcome::Plan(path);
            }
            queue.push_back((next_idx, depth + 1));
        }
    }
    PlanOutcome::Unreachable
}

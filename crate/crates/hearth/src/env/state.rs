//! Simulator state, transition function, observations, and goal checks.
//!
//! Transitions are deterministic and pure. Infeasible actions are no-ops that
//! return `feasible = false`; they never terminate an episode and are not
//! recorded in the observation history.

use serde::{Deserialize, Serialize};

use super::world::{
    ActionId, Behavior, CompiledGoal, CompiledTask, Home, ObjectId, RoomId, World,
};

/// Where an object currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pos {
    Room(RoomId),
    On(ObjectId),
    In(ObjectId),
    Held,
}

/// Full (hidden) simulator state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub agent_room: RoomId,
    /// Held objects in grab order; capacity 2. `put`/`put_in` release the
    /// earliest-grabbed object first.
    pub held: Vec<ObjectId>,
    pub pos: Vec<Pos>,
    pub open: Vec<bool>,
    pub switched_on: Vec<bool>,
    pub seat: Option<ObjectId>,
}

pub const HELD_CAPACITY: usize = 2;

impl World {
    pub fn initial_state(&self) -> State {
        let pos = self
            .objects
            .iter()
            .map(|o| match o.home {
                Home::Room(r) => Pos::Room(r),
                Home::On(s) => Pos::On(s),
                Home::In(c) => Pos::In(c),
            })
            .collect();
        State {
            agent_room: self.agent_start_room,
            held: Vec::new(),
            pos,
            open: vec![false; self.objects.len()],
            switched_on: vec![false; self.objects.len()],
            seat: None,
        }
    }
}

/// Room containing an object, following the holder chain; held objects are in
/// the agent's room.
pub fn object_room(state: &State, obj: ObjectId) -> RoomId {
    let mut cur = obj;
    loop {
        match state.pos[cur as usize] {
            Pos::Room(r) => return r,
            Pos::Held => return state.agent_room,
            Pos::On(holder) | Pos::In(holder) => {
                debug_assert_ne!(holder, cur, "object cannot hold itself");
                cur = holder;
            }
        }
    }
}

/// A container's contents are exposed when it is open; containers that cannot
/// be opened (sink, bathtub) are permanently exposed.
fn container_exposed(world: &World, state: &State, container: ObjectId) -> bool {
    !world.objects[container as usize].props.openable || state.open[container as usize]
}

/// Visibility: in the agent's room and not shut inside a closed container.
/// Held objects are always visible.
pub fn is_visible(world: &World, state: &State, obj: ObjectId) -> bool {
    if state.pos[obj as usize] == Pos::Held {
        return true;
    }
    if object_room(state, obj) != state.agent_room {
        return false;
    }
    // Every enclosing container along the chain must be exposed.
    let mut cur = obj;
    loop {
        match state.pos[cur as usize] {
            Pos::Room(_) | Pos::Held => return true,
            Pos::On(holder) => cur = holder,
            Pos::In(holder) => {
                if !container_exposed(world, state, holder) {
                    return false;
                }
                cur = holder;
            }
        }
    }
}

/// Sorted list of visible object ids.
pub fn visible_set(world: &World, state: &State) -> Vec<ObjectId> {
    (0..world.objects.len() as ObjectId)
        .filter(|&o| is_visible(world, state, o))
        .collect()
}

// ---------------------------------------------------------------------------
// Feasibility and transition
// ---------------------------------------------------------------------------

pub fn feasible(world: &World, state: &State, action: ActionId) -> bool {
    let (behavior, obj) = world.action(action);
    let props = world.objects[obj as usize].props;
    match behavior {
        // Finding is always possible; it walks to the object's current room.
        Behavior::Find => true,
        Behavior::Grab => {
            props.grabbable
                && state.pos[obj as usize] != Pos::Held
                && state.held.len() < HELD_CAPACITY
                && is_visible(world, state, obj)
        }
        Behavior::Open => props.openable && !state.open[obj as usize] && is_visible(world, state, obj),
        Behavior::Close => props.openable && state.open[obj as usize] && is_visible(world, state, obj),
        Behavior::Sit => props.sittable && state.seat.is_none() && is_visible(world, state, obj),
        Behavior::Put => {
            !props.grabbable
                && !props.container
                && !state.held.is_empty()
                && is_visible(world, state, obj)
        }
        Behavior::PutIn => {
            props.container
                && !state.held.is_empty()
                && container_exposed(world, state, obj)
                && is_visible(world, state, obj)
        }
        Behavior::SwitchOn => {
            props.switchable && !state.switched_on[obj as usize] && is_visible(world, state, obj)
        }
    }
}

/// Apply one action. Infeasible actions leave the state unchanged and return
/// `false`.
pub fn step(world: &World, state: &State, action: ActionId) -> (State, bool) {
    if !feasible(world, state, action) {
        return (state.clone(), false);
    }
    let mut next = state.clone();
    let (behavior, obj) = world.action(action);
    match behavior {
        Behavior::Find => {
            next.agent_room = object_room(state, obj);
            next.seat = None; // walking stands the agent up
        }
        Behavior::Grab => {
            next.pos[obj as usize] = Pos::Held;
            next.held.push(obj);
        }
        Behavior::Open => next.open[obj as usize] = true,
        Behavior::Close => next.open[obj as usize] = false,
        Behavior::Sit => next.seat = Some(obj),
        Behavior::Put => {
            let item = next.held.remove(0);
            next.pos[item as usize] = Pos::On(obj);
        }
        Behavior::PutIn => {
            let item = next.held.remove(0);
            next.pos[item as usize] = Pos::In(obj);
        }
        Behavior::SwitchOn => next.switched_on[obj as usize] = true,
    }
    (next, true)
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

/// What the agent can see, plus the executed-action history.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    /// Visible object ids, ascending.
    pub visible: Vec<ObjectId>,
    /// Held object ids in grab order.
    pub held: Vec<ObjectId>,
    /// Ids of all feasible actions executed so far, in order.
    pub history: Vec<ActionId>,
}

pub fn observe(world: &World, state: &State, history: &[ActionId]) -> Observation {
    Observation {
        visible: visible_set(world, state),
        held: state.held.clone(),
        history: history.to_vec(),
    }
}

/// Deterministic textual rendering: comma-separated object names, sorted.
pub fn render_observation(world: &World, obs: &Observation) -> String {
    let mut names: Vec<String> = obs.visible.iter().map(|&o| world.display_name(o)).collect();
    names.sort();
    names.join(", ")
}

// ---------------------------------------------------------------------------
// Goal checks
// ---------------------------------------------------------------------------

pub fn goal_satisfied(state: &State, goal: &CompiledGoal) -> bool {
    match *goal {
        CompiledGoal::ObjectAt { object, target } => state.pos[object as usize] == Pos::On(target),
        CompiledGoal::ObjectIn { object, container } => {
            state.pos[object as usize] == Pos::In(container)
        }
        CompiledGoal::Holding { object } => state.pos[object as usize] == Pos::Held,
        CompiledGoal::SittingOn { seat } => state.seat == Some(seat),
        CompiledGoal::SwitchedOn { device } => state.switched_on[device as usize],
    }
}

/// Per-goal satisfaction mask; all-true defines success.
pub fn check_goals(state: &State, task: &CompiledTask) -> Vec<bool> {
    task.goal_ids.iter().map(|g| goal_satisfied(state, g)).collect()
}

pub fn all_goals_met(state: &State, task: &CompiledTask) -> bool {
    task.goal_ids.iter().all(|g| goal_satisfied(state, g))
}

// ---------------------------------------------------------------------------
// Simulation helpers
// ---------------------------------------------------------------------------

/// A running episode: state plus executed-action history.
#[derive(Debug, Clone)]
pub struct Sim {
    pub state: State,
    pub history: Vec<ActionId>,
}

impl Sim {
    pub fn new(world: &World) -> Sim {
        Sim {
            state: world.initial_state(),
            history: Vec::new(),
        }
    }

    pub fn observe(&self, world: &World) -> Observation {
        observe(world, &self.state, &self.history)
    }

    /// Execute one action; infeasible actions are no-ops and stay out of the
    /// history.
    pub fn step(&mut self, world: &World, action: ActionId) -> bool {
        let (next, ok) = step(world, &self.state, action);
        self.state = next;
        if ok {
            self.history.push(action);
        }
        ok
    }
}

/// Outcome of replaying a fixed action sequence from the initial state.
#[derive(Debug, Clone)]
pub struct Replay {
    pub final_state: State,
    /// Per-action feasibility flags.
    pub feasible: Vec<bool>,
}

impl Replay {
    pub fn success(&self, _world: &World, task: &CompiledTask) -> bool {
        all_goals_met(&self.final_state, task)
    }

    pub fn all_feasible(&self) -> bool {
        self.feasible.iter().all(|&f| f)
    }
}

pub fn replay(world: &World, actions: &[ActionId]) -> Replay {
    let mut sim = Sim::new(world);
    let mut flags = Vec::with_capacity(actions.len());
    for &a in actions {
        flags.push(sim.step(world, a));
    }
    Replay {
        final_state: sim.state,
        feasible: flags,
    }
}

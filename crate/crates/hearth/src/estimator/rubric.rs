//! The scripted scoring oracle: given a task's reference plan and an
//! execution history, score a candidate action on the 5-level scale
//! {−2, −1, 0, 1, 2}.
//!
//! Scale semantics:
//!
//! * 2 — the action that should follow the completed actions (the next
//!   unfinished step of the reference plan);
//! * 1 — indirect support: the next plan step is currently infeasible and
//!   this action makes it feasible (walking to the right room, opening the
//!   container that blocks a placement);
//! * 0 — a feasible action on visible objects that does not affect the task;
//! * −1 — searching (`find`) for something unrelated to what the task needs
//!   right now;
//! * −2 — an action that cannot be performed in the current state (grabbing
//!   or placing invisible objects, closing a never-opened container).
//!
//! Progress through the reference plan is tracked by scanning the execution
//! history in order and consuming plan steps as they appear. All state is
//! recovered by replaying the history, so scoring is a pure function of
//! (world, plan, history, action).

use crate::env::{feasible, step, ActionId, Behavior, State, World};

/// Replayed scoring context: the state reached by a history plus how much of
/// the reference plan that history has completed.
#[derive(Debug, Clone)]
pub struct ScoreContext {
    pub state: State,
    /// Number of leading reference-plan steps already consumed, in order, by
    /// the history.
    pub progress: usize,
}

/// Replay `history` from the initial state of `world`, tracking plan
/// progress. Infeasible history entries are no-ops (histories recorded by
/// the simulator never contain them, but replaying a foreign history in a
/// differently-believed world can make entries infeasible).
pub fn context(world: &World, plan: &[ActionId], history: &[ActionId]) -> ScoreContext {
    let mut state = world.initial_state();
    let mut progress = 0usize;
    for &a in history {
        let (next, ok) = step(world, &state, a);
        state = next;
        if ok && progress < plan.len() && a == plan[progress] {
            progress += 1;
        }
    }
    ScoreContext { state, progress }
}

/// Score one candidate action against a prepared context.
pub fn score_at(world: &World, plan: &[ActionId], ctx: &ScoreContext, action: ActionId) -> i8 {
    if !feasible(world, &ctx.state, action) {
        return -2;
    }
    if ctx.progress < plan.len() {
        let next_step = plan[ctx.progress];
        if action == next_step {
            return 2;
        }
        if !feasible(world, &ctx.state, next_step) {
            let (after, _) = step(world, &ctx.state, action);
            if feasible(world, &after, next_step) {
                return 1;
            }
        }
    }
    let (behavior, _) = world.action(action);
    if behavior == Behavior::Find {
        return -1;
    }
    0
}

/// Convenience: replay-and-score in one call.
pub fn score(world: &World, plan: &[ActionId], history: &[ActionId], action: ActionId) -> i8 {
    score_at(world, plan, &context(world, plan, history), action)
}

/// The action this oracle values most at a context: argmax of [`score_at`]
/// over the whole action table, ties broken toward the lowest action id.
pub fn best_action(world: &World, plan: &[ActionId], ctx: &ScoreContext) -> ActionId {
    let mut best = 0u16;
    let mut best_score = i8::MIN;
    for a in 0..world.action_count() as ActionId {
        let s = score_at(world, plan, ctx, a);
        if s > best_score {
            best = a;
            best_score = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::default_world;

    #[test]
    fn next_plan_step_scores_two_all_along_the_expert() {
        let world = default_world();
        for task in world.tasks() {
            for t in 0..task.expert.len() {
                let s = score(&world, &task.expert, &task.expert[..t], task.expert[t]);
                assert_eq!(s, 2, "task {} step {t}", task.id);
            }
        }
    }

    #[test]
    fn invisible_grab_scores_minus_two() {
        let world = default_world();
        let task = world.task("cereal_to_fridge").unwrap();
        // From the start (living room), the cereal is invisible.
        let grab = world.action_id(Behavior::Grab, "cereal").unwrap();
        assert_eq!(score(&world, &task.expert, &[], grab), -2);
    }

    #[test]
    fn unrelated_find_scores_minus_one() {
        let world = default_world();
        let task = world.task("cereal_to_fridge").unwrap();
        let find_ws = world.action_id(Behavior::Find, "wall_shelf").unwrap();
        let find_bed = world.action_id(Behavior::Find, "bed").unwrap();
        assert_eq!(score(&world, &task.expert, &[find_ws], find_bed), -1);
        // Even a find that appears later in the plan is "unrelated" while the
        // next step (grab cereal) is already feasible.
        let find_fridge = world.action_id(Behavior::Find, "fridge").unwrap();
        assert_eq!(score(&world, &task.expert, &[find_ws], find_fridge), -1);
    }

    #[test]
    fn neutral_visible_action_scores_zero() {
        let world = default_world();
        let task = world.task("cereal_to_fridge").unwrap();
        let find_ws = world.action_id(Behavior::Find, "wall_shelf").unwrap();
        // Grabbing the visible-but-irrelevant crackers does not affect the
        // task.
        let grab_crackers = world.action_id(Behavior::Grab, "crackers").unwrap();
        assert_eq!(score(&world, &task.expert, &[find_ws], grab_crackers), 0);
    }

    #[test]
    fn enabling_action_scores_one() {
        let world = default_world();
        let task = world.task("cereal_to_fridge").unwrap();
        let find_ws = world.action_id(Behavior::Find, "wall_shelf").unwrap();
        let grab_cereal = world.action_id(Behavior::Grab, "cereal").unwrap();
        let find_fridge = world.action_id(Behavior::Find, "fridge").unwrap();
        let open_fridge = world.action_id(Behavior::Open, "fridge").unwrap();
        let put_in = world.action_id(Behavior::PutIn, "fridge").unwrap();
        // Following the plan exactly keeps the next step at 2.
        let history = [find_ws, grab_cereal, find_fridge, open_fridge];
        assert_eq!(score(&world, &task.expert, &history, put_in), 2);

        // With the door still shut and a plan whose next step is the
        // placement itself, opening the door is what unblocks it: score 1.
        let find_kt = world.action_id(Behavior::Find, "kitchen_table").unwrap();
        let grab_salmon = world.action_id(Behavior::Grab, "salmon").unwrap();
        let find_mw = world.action_id(Behavior::Find, "microwave").unwrap();
        let open_mw = world.action_id(Behavior::Open, "microwave").unwrap();
        let put_in_mw = world.action_id(Behavior::PutIn, "microwave").unwrap();
        let plan = vec![find_kt, grab_salmon, find_mw, put_in_mw];
        let history = [find_kt, grab_salmon, find_mw];
        assert_eq!(score(&world, &plan, &history, open_mw), 1);

        // A walk that brings the agent to the room of the next step's object
        // is also enabling: next = grab toothpaste while in the kitchen.
        let plan = vec![world.action_id(Behavior::Grab, "toothpaste").unwrap()];
        let find_bc = world.action_id(Behavior::Find, "bathroom_counter").unwrap();
        assert_eq!(score(&world, &plan, &[find_kt], find_bc), 1);
    }

    #[test]
    fn progress_tracks_interleaved_history() {
        let world = default_world();
        let task = world.task("cereal_to_fridge").unwrap();
        let find_ws = world.action_id(Behavior::Find, "wall_shelf").unwrap();
        let grab_cereal = world.action_id(Behavior::Grab, "cereal").unwrap();
        let grab_chips = world.action_id(Behavior::Grab, "chips").unwrap();
        // Noise (grab chips) between plan steps does not reset progress.
        let ctx = context(&world, &task.expert, &[find_ws, grab_chips, grab_cereal]);
        assert_eq!(ctx.progress, 2);
    }

    #[test]
    fn completed_plan_leaves_no_two_point_action() {
        let world = default_world();
        let task = world.task("mug_to_sink").unwrap();
        let ctx = context(&world, &task.expert, &task.expert);
        assert_eq!(ctx.progress, task.expert.len());
        for a in 0..world.action_count() as ActionId {
            assert!(score_at(&world, &task.expert, &ctx, a) <= 0);
        }
    }

    #[test]
    fn best_action_prefers_the_plan_and_breaks_ties_low() {
        let world = default_world();
        for task in world.tasks() {
            for t in 0..task.expert.len() {
                let ctx = context(&world, &task.expert, &task.expert[..t]);
                assert_eq!(
                    best_action(&world, &task.expert, &ctx),
                    task.expert[t],
                    "task {} step {t}",
                    task.id
                );
            }
        }
    }
}

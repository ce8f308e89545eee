//! Probe: do distinct expert steps featurize identically (state aliasing)?

use hearth::dataset::record_trajectory;
use hearth::env::{default_world, InstructionSet};
use hearth::features::Featurizer;
use std::collections::HashMap;

fn main() {
    let world = default_world();
    let f = Featurizer::new(&world, 64);
    let instr = InstructionSet::generate(&world, 7, 10).unwrap();

    let mut alias_tasks = 0usize;
    let mut total_tasks = 0usize;
    for (tidx, task) in world.tasks().iter().enumerate() {
        if task.expert.is_empty() {
            continue;
        }
        total_tasks += 1;
        let text = &instr.train[tidx][0];
        let traj = record_trajectory(&world, &task.id, text, &task.expert);

        // Map featurized obs -> set of expert actions taken from it.
        let mut seen: HashMap<String, Vec<String>> = HashMap::new();
        for step in &traj.steps {
            let x = f.encode_obs(&step.obs, &traj.instruction);
            let key = format!("{x:?}");
            seen.entry(key)
                .or_default()
                .push(world.action_name(step.action));
        }
        let aliased: Vec<&Vec<String>> = seen.values().filter(|v| v.len() > 1).collect();
        if !aliased.is_empty() {
            alias_tasks += 1;
            println!("{}: expert len {}", task.id, traj.steps.len());
            for group in &aliased {
                println!("  same features -> expert actions {group:?}");
            }
        }
        // Also: steps whose action leaves the featurized obs unchanged.
        for (t, step) in traj.steps.iter().enumerate() {
            let before = f.encode_obs(&step.obs, &traj.instruction);
            let after = f.encode_obs(&step.next_obs, &traj.instruction);
            if before == after {
                println!(
                    "  {}: step {} `{}` leaves features unchanged",
                    task.id,
                    t,
                    world.action_name(step.action)
                );
            }
        }
    }
    println!("\n{alias_tasks}/{total_tasks} tasks have aliased expert steps");
}

use hearth::consistency::annotate_dataset;
use hearth::dataset::{build_qa_dataset, forge_dataset, CorruptionConfig};
use hearth::env::{all_goals_met, default_world, InstructionSet, Sim, World};
use hearth::estimator::{clean_panel, EstimatorHub};
use hearth::offline_rl::{train_policy, QModel, RLConfig, RewardSource};
use hearth::orchestrator::{emit_unified, Ensemble};

fn rollout_sr(world: &World, model: &QModel, pairs: &[(String, String)], max_steps: usize) -> f64 {
    let mut wins = 0usize;
    for (task_id, instruction) in pairs {
        let task = world.task(task_id).unwrap();
        let mut sim = Sim::new(world);
        for _ in 0..max_steps {
            let obs = sim.observe(world);
            let a = model.act_greedy(&obs, instruction);
            sim.step(world, a);
            if all_goals_met(&sim.state, task) {
                break;
            }
        }
        if all_goals_met(&sim.state, task) {
            wins += 1;
        }
    }
    wins as f64 / pairs.len() as f64
}

fn main() {
    let t0 = std::time::Instant::now();
    let world = default_world();
    let instructions = InstructionSet::generate(&world, 11, 4).unwrap();
    let forge_cfg = CorruptionConfig {
        corrupted_per_task: 7,
        insert_min: 1,
        insert_max: 3,
        explore_pair_prob: 0.25,
    };
    let dataset = forge_dataset(&world, &instructions, &forge_cfg, 5).unwrap();
    let n_steps: usize = dataset.iter().map(|t| t.steps.len()).sum();
    println!(
        "[{:?}] dataset: {} trajectories, {} steps",
        t0.elapsed(),
        dataset.len(),
        n_steps
    );
    let qa = build_qa_dataset(&world).unwrap();
    let hub = EstimatorHub::scripted(&world, &instructions, &clean_panel(5).unwrap()).unwrap();
    let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();
    println!(
        "[{:?}] annotated: {} kept, {} dropped, {} hub calls",
        t0.elapsed(),
        annotated.len(),
        report.dropped.len(),
        hub.call_count()
    );
    let unified = emit_unified(&annotated, &Ensemble::Average).unwrap();

    for (label, source, steps, lr) in [
        ("unified lr1e-3 s4000", RewardSource::Unified, 4000usize, 1e-3),
        ("unified lr3e-4 s6000", RewardSource::Unified, 6000, 3e-4),
        ("sparse  lr1e-3 s4000", RewardSource::Sparse, 4000, 1e-3),
    ] {
        let cfg = RLConfig {
            reward_source: source,
            train_steps: steps,
            lr,
            seed: 1,
            ..RLConfig::default()
        };
        let t1 = std::time::Instant::now();
        let (model, log) = train_policy(&world, &unified, &cfg).unwrap();
        let train_time = t1.elapsed();

        let mut train_pairs = Vec::new();
        let mut fine_pairs = Vec::new();
        let mut abstract_pairs = Vec::new();
        for (ti, task) in world.tasks().iter().enumerate() {
            for i in &instructions.train[ti] {
                train_pairs.push((task.id.clone(), i.clone()));
            }
            for i in &instructions.eval_fine[ti] {
                fine_pairs.push((task.id.clone(), i.clone()));
            }
            for i in &instructions.eval_abstract[ti] {
                abstract_pairs.push((task.id.clone(), i.clone()));
            }
        }
        let sr_train = rollout_sr(&world, &model, &train_pairs, 20);
        let sr_fine = rollout_sr(&world, &model, &fine_pairs, 20);
        let sr_abs = rollout_sr(&world, &model, &abstract_pairs, 20);
        println!(
            "{label}: train SR {sr_train:.3} | fine SR {sr_fine:.3} | abstract SR {sr_abs:.3} | train {train_time:?} | final loss {:.4}",
            log.last().unwrap().loss
        );
    }
    println!("total {:?}", t0.elapsed());
}

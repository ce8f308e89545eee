use hearth::consistency::annotate_dataset;
use hearth::dataset::{build_qa_dataset, forge_dataset, CorruptionConfig};
use hearth::env::{all_goals_met, default_world, InstructionSet, Sim, World};
use hearth::estimator::{clean_panel, EstimatorHub};
use hearth::offline_rl::{train_policy, QModel, RLConfig, RewardSource};
use hearth::orchestrator::{emit_unified, Ensemble};

fn rollout_sr(world: &World, model: &QModel, pools: &[Vec<String>]) -> (f64, Vec<String>) {
    let mut wins = 0usize;
    let mut total = 0usize;
    let mut failures = Vec::new();
    for (ti, task) in world.tasks().iter().enumerate() {
        for instr in &pools[ti] {
            let mut sim = Sim::new(world);
            for _ in 0..20 {
                let obs = sim.observe(world);
                let a = model.act_greedy(&obs, instr);
                sim.step(world, a);
                if all_goals_met(&sim.state, task) {
                    break;
                }
            }
            let won = all_goals_met(&sim.state, task);
            wins += usize::from(won);
            total += 1;
            if !won {
                failures.push(format!("{} [{}]", task.id, instr));
            }
        }
    }
    (wins as f64 / total as f64, failures)
}

fn main() {
    let world = default_world();
    for (pool, corrupted, steps, drop, copies, hidden, batch) in [
        (8usize, 31usize, 24000usize, 0.3, 3usize, 192usize, 128usize),
        (12, 63, 24000, 0.3, 5, 128, 128),
        (12, 63, 24000, 0.35, 5, 192, 128),
        (8, 31, 16000, 0.3, 3, 128, 128),
    ] {
        let (lr, alpha) = (1e-3, 1.0);
        let instructions = InstructionSet::generate(&world, 11, pool).unwrap();
        let forge_cfg = CorruptionConfig {
            corrupted_per_task: corrupted,
            insert_min: 1,
            insert_max: 3,
            explore_pair_prob: 0.25,
        };
        let dataset = forge_dataset(&world, &instructions, &forge_cfg, 5).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let hub = EstimatorHub::scripted(&world, &instructions, &clean_panel(5).unwrap()).unwrap();
        let (annotated, _) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();
        let unified = emit_unified(&annotated, &Ensemble::Average).unwrap();

        let cfg = RLConfig {
            reward_source: RewardSource::Unified,
            train_steps: steps,
            lr,
            cql_alpha: alpha,
            hidden,
            instr_dropout: drop,
            aug_copies: copies,
            batch,
            seed: 1,
            ..RLConfig::default()
        };
        let t = std::time::Instant::now();
        let (model, log) = train_policy(&world, &unified, &cfg).unwrap();
        let (train_sr, _) = rollout_sr(&world, &model, &instructions.train);
        let (fine_sr, fine_fail) = rollout_sr(&world, &model, &instructions.eval_fine);
        let (abs_sr, abs_fail) = rollout_sr(&world, &model, &instructions.eval_abstract);
        println!(
            "pool{pool} corr{corrupted} steps{steps} drop{drop}x{copies} h{hidden} b{batch}: train {train_sr:.3} fine {fine_sr:.3} abstract {abs_sr:.3} | loss {:.3} | {:?}",
            log.last().unwrap().loss,
            t.elapsed(),
        );
        if fine_sr < 0.95 {
            println!("  fine failures: {fine_fail:?}");
        }
        if abs_sr < 0.8 {
            println!("  abstract failures: {:?}", &abs_fail[..abs_fail.len().min(8)]);
        }
    }
}

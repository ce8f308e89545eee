//! Consistency-based reward channels.
//!
//! A panel of personas scores every dataset step; three voting channels turn
//! the panel's raw scores into per-step reward triples:
//!
//! * **Contextual** — plain majority vote over all responses, ties broken
//!   toward the *lowest* value (pessimism under disagreement).
//! * **Structural** — the same vote restricted to personas that pass a
//!   grounding check: each persona names the objects relevant to the task at
//!   the nearest catalogued snapshot, and passes when its answer overlaps
//!   the stored answer at Jaccard ≥ 1/2. If nobody passes, the channel falls
//!   back to the contextual value and the step is flagged.
//! * **Temporal** — the vote excludes a persona's response for action `l`
//!   when `l` appears in that persona's *implied plan* (its per-observation
//!   best actions across the trajectory) **and** the persona's own
//!   verification of that plan failed. If everyone is excluded, fall back
//!   and flag as above.
//!
//! [`annotate_dataset`] applies all three channels to every step of every
//! trajectory, dropping (and logging) trajectories whose estimator queries
//! fail, and emits per-step diagnostics suitable for a CSV audit trail.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::dataset::{Dataset, QAPair, RewardTriple, Trajectory};
use crate::env::{ActionId, ObjectId, Observation, World};
use crate::estimator::EstimatorHub;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Voting and grounding primitives
// ---------------------------------------------------------------------------

/// Majority vote with ties broken toward the lowest value. `None` only for
/// an empty slate.
pub fn vote(values: &[i8]) -> Option<i8> {
    let mut counts: [usize; 5] = [0; 5];
    for &v in values {
        debug_assert!((-2..=2).contains(&v));
        counts[(v + 2) as usize] += 1;
    }
    let best = *counts.iter().max().expect("non-empty counts");
    if best == 0 {
        return None;
    }
    counts
        .iter()
        .position(|&c| c == best)
        .map(|i| i as i8 - 2)
}

/// Jaccard similarity of two sets; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// Does a relevance answer agree with the stored one closely enough to
/// trust the persona's grounding?
pub fn qa_passes(answer: &BTreeSet<String>, truth: &BTreeSet<String>) -> bool {
    jaccard(answer, truth) >= 0.5
}

/// The catalogued snapshot closest to `obs` among `pairs` (all of one task):
/// an exact observation match when one exists, otherwise the pair whose
/// visible set overlaps most (ties toward the earliest pair). `None` only
/// when `pairs` is empty.
pub fn nearest_qa<'a>(pairs: &[&'a QAPair], obs: &Observation) -> Option<&'a QAPair> {
    if let Some(pair) = pairs.iter().find(|p| p.obs == *obs) {
        return Some(pair);
    }
    let visible: BTreeSet<ObjectId> = obs.visible.iter().copied().collect();
    let mut best: Option<(&QAPair, f64)> = None;
    for pair in pairs {
        let pair_visible: BTreeSet<ObjectId> = pair.obs.visible.iter().copied().collect();
        let sim = jaccard(&visible, &pair_visible);
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((pair, sim));
        }
    }
    best.map(|(p, _)| p)
}

// ---------------------------------------------------------------------------
// Annotation
// ---------------------------------------------------------------------------

/// One persona's full paper trail for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonaDiag {
    pub id: u32,
    pub reward: i8,
    /// Grounding check outcome at this step's nearest catalogued snapshot.
    pub qa_pass: bool,
    /// Whether this persona's implied plan for the trajectory verified.
    pub plan_verified: bool,
    /// Whether the temporal channel excluded this response.
    pub excluded: bool,
    /// The objects the persona named at the nearest snapshot.
    pub relevant: BTreeSet<String>,
    /// Raw reply text (remote personas only).
    pub raw: Option<String>,
}

/// Per-step audit record.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    pub trajectory: usize,
    pub task_id: String,
    pub step: usize,
    pub action: String,
    pub rc: i8,
    pub rs: i8,
    pub rt: i8,
    pub structural_fallback: bool,
    pub temporal_fallback: bool,
    pub personas: Vec<PersonaDiag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedTrajectory {
    pub index: usize,
    pub task_id: String,
    pub reason: String,
}

/// What [`annotate_dataset`] did, beyond the annotated data itself.
#[derive(Debug, Default)]
pub struct AnnotateReport {
    pub dropped: Vec<DroppedTrajectory>,
    pub structural_fallback_steps: usize,
    pub temporal_fallback_steps: usize,
    pub diagnostics: Vec<DiagRow>,
}

struct PairView<'a> {
    pair: &'a QAPair,
    truth: BTreeSet<String>,
}

/// (persona index, task, snapshot position, instruction) → (answer, pass).
type QaCache = HashMap<(usize, String, usize, String), (BTreeSet<String>, bool)>;

/// Score every step of every trajectory through the persona panel and the
/// three consistency channels. Trajectories whose estimator queries fail are
/// dropped and logged, never half-annotated.
pub fn annotate_dataset(
    dataset: &Dataset,
    qa: &[QAPair],
    hub: &EstimatorHub,
    world: &World,
) -> Result<(Dataset, AnnotateReport)> {
    let n = hub.persona_count();
    let mut by_task: HashMap<&str, Vec<PairView>> = HashMap::new();
    for pair in qa {
        by_task.entry(pair.task_id.as_str()).or_default().push(PairView {
            pair,
            truth: pair
                .answer
                .iter()
                .map(|&o| world.display_name(o))
                .collect(),
        });
    }
    // Personas answer the relevance question per catalogued snapshot, not
    // per step; cache those answers across trajectories. Keyed by persona,
    // task, snapshot position, and instruction (corruption draws are
    // content-keyed, so different phrasings may answer differently).
    let mut qa_cache: QaCache = HashMap::new();

    let mut out = Vec::with_capacity(dataset.len());
    let mut report = AnnotateReport::default();

    for (index, traj) in dataset.iter().enumerate() {
        match annotate_one(
            index,
            traj,
            by_task.get(traj.task_id.as_str()).map_or(&[][..], |v| v),
            hub,
            world,
            n,
            &mut qa_cache,
        ) {
            Ok((triples, rows)) => {
                for row in &rows {
                    report.structural_fallback_steps += usize::from(row.structural_fallback);
                    report.temporal_fallback_steps += usize::from(row.temporal_fallback);
                }
                report.diagnostics.extend(rows);
                let mut annotated = traj.clone();
                annotated.rewards = Some(triples);
                out.push(annotated);
            }
            Err(e) => {
                log::warn!(
                    "dropping trajectory {index} (task {}): {e}",
                    traj.task_id
                );
                report.dropped.push(DroppedTrajectory {
                    index,
                    task_id: traj.task_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((out, report))
}

#[allow(clippy::too_many_arguments)]
fn annotate_one(
    index: usize,
    traj: &Trajectory,
    pairs: &[PairView<'_>],
    hub: &EstimatorHub,
    world: &World,
    n: usize,
    qa_cache: &mut QaCache,
) -> Result<(Vec<RewardTriple>, Vec<DiagRow>)> {
    traj.validate()?;
    let instruction = traj.instruction.as_str();

    // Each persona's implied plan across the trajectory, verified once.
    let mut implied: Vec<Vec<ActionId>> = Vec::with_capacity(n);
    let mut plan_verified = Vec::with_capacity(n);
    for p in 0..n {
        let plan: Vec<ActionId> = traj
            .steps
            .iter()
            .map(|s| hub.best_action(p, &s.obs, instruction))
            .collect::<Result<_>>()?;
        plan_verified.push(hub.verify_plan(p, instruction, &plan)?);
        implied.push(plan);
    }

    let pair_refs: Vec<&QAPair> = pairs.iter().map(|v| v.pair).collect();
    let mut triples = Vec::with_capacity(traj.steps.len());
    let mut rows = Vec::with_capacity(traj.steps.len());
    for (t, step) in traj.steps.iter().enumerate() {
        let mut rewards = Vec::with_capacity(n);
        let mut raws = Vec::with_capacity(n);
        for p in 0..n {
            let e = hub.estimate(p, &step.obs, step.action, instruction)?;
            rewards.push(e.reward);
            raws.push(e.raw);
        }
        let rc = vote(&rewards).expect("panel is non-empty");

        // Structural: grounding check at the nearest catalogued snapshot.
        let nearest = nearest_qa(&pair_refs, &step.obs);
        let mut qa_pass = vec![false; n];
        let mut relevant: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];
        if let Some(pair) = nearest {
            let pos = pairs
                .iter()
                .position(|v| std::ptr::eq(v.pair, pair))
                .expect("nearest pair comes from this slice");
            for p in 0..n {
                let key = (p, traj.task_id.clone(), pos, instruction.to_string());
                let (answer, pass) = match qa_cache.get(&key) {
                    Some(hit) => hit.clone(),
                    None => {
                        let answer = hub.answer_qa(p, &pair.obs, instruction)?;
                        let pass = qa_passes(&answer, &pairs[pos].truth);
                        qa_cache.insert(key, (answer.clone(), pass));
                        (answer, pass)
                    }
                };
                qa_pass[p] = pass;
                relevant[p] = answer;
            }
        }
        let passing: Vec<i8> = (0..n).filter(|&p| qa_pass[p]).map(|p| rewards[p]).collect();
        let (rs, structural_fallback) = match vote(&passing) {
            Some(v) => (v, false),
            None => (rc, true),
        };

        // Temporal: exclude personas whose failed-verification plan contains
        // this very action.
        let excluded: Vec<bool> = (0..n)
            .map(|p| implied[p].contains(&step.action) && !plan_verified[p])
            .collect();
        let kept: Vec<i8> = (0..n).filter(|&p| !excluded[p]).map(|p| rewards[p]).collect();
        let (rt, temporal_fallback) = match vote(&kept) {
            Some(v) => (v, false),
            None => (rc, true),
        };

        triples.push(RewardTriple {
            rc,
            rs,
            rt,
            unified: None,
        });
        rows.push(DiagRow {
            trajectory: index,
            task_id: traj.task_id.clone(),
            step: t,
            action: world.action_name(step.action),
            rc,
            rs,
            rt,
            structural_fallback,
            temporal_fallback,
            personas: (0..n)
                .map(|p| PersonaDiag {
                    id: hub.spec(p).id,
                    reward: rewards[p],
                    qa_pass: qa_pass[p],
                    plan_verified: plan_verified[p],
                    excluded: excluded[p],
                    relevant: std::mem::take(&mut relevant[p]),
                    raw: raws[p].take(),
                })
                .collect(),
        });
    }
    Ok((triples, rows))
}

/// Write the per-step audit trail as CSV: one row per annotated step, fixed
/// columns first, then five columns per persona.
pub fn write_diagnostics(path: &Path, rows: &[DiagRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let persona_ids: Vec<u32> = rows
        .first()
        .map(|r| r.personas.iter().map(|p| p.id).collect())
        .unwrap_or_default();
    let mut header = vec![
        "trajectory".to_string(),
        "task".to_string(),
        "step".to_string(),
        "action".to_string(),
        "rc".to_string(),
        "rs".to_string(),
        "rt".to_string(),
        "structural_fallback".to_string(),
        "temporal_fallback".to_string(),
    ];
    for id in &persona_ids {
        for col in ["reward", "qa_pass", "verified", "excluded", "relevant", "raw"] {
            header.push(format!("p{id}_{col}"));
        }
    }
    w.write_record(&header)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for row in rows {
        let mut rec = vec![
            row.trajectory.to_string(),
            row.task_id.clone(),
            row.step.to_string(),
            row.action.clone(),
            row.rc.to_string(),
            row.rs.to_string(),
            row.rt.to_string(),
            row.structural_fallback.to_string(),
            row.temporal_fallback.to_string(),
        ];
        for p in &row.personas {
            rec.push(p.reward.to_string());
            rec.push(p.qa_pass.to_string());
            rec.push(p.plan_verified.to_string());
            rec.push(p.excluded.to_string());
            rec.push(p.relevant.iter().cloned().collect::<Vec<_>>().join("; "));
            rec.push(p.raw.clone().unwrap_or_default());
        }
        w.write_record(&rec)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_qa_dataset, forge_dataset, record_trajectory, CorruptionConfig};
    use crate::env::{default_world, HomeLocation, InstructionSet};
    use crate::estimator::{clean_panel, rubric, Misconception};

    fn small_forge_cfg(corrupted: usize) -> CorruptionConfig {
        CorruptionConfig {
            expert_per_task: 1,
            corrupted_per_task: corrupted,
            insert_min: 1,
            insert_max: 2,
            explore_pair_prob: 0.0,
        }
    }

    fn setup() -> (World, InstructionSet) {
        let world = default_world();
        let instructions = InstructionSet::generate(&world, 13, 4).unwrap();
        (world, instructions)
    }

    // --- voting -----------------------------------------------------------

    #[test]
    fn vote_frozen_examples() {
        assert_eq!(vote(&[1, 1, 1, 1, 1]), Some(1));
        assert_eq!(vote(&[2, 1, -2, -2, 2]), Some(-2));
        assert_eq!(vote(&[2, 2, -2, 1, 0]), Some(2));
        assert_eq!(vote(&[]), None);
    }

    #[test]
    fn vote_satisfies_mode_properties_on_every_small_multiset() {
        // Enumerate every non-decreasing multiset of sizes 1..=5 over the
        // scale and check the three properties that pin the vote down:
        // membership, maximal count, lowest among count-ties.
        fn enumerate(start: i8, left: usize, slate: &mut Vec<i8>, seen: &mut usize) {
            if left == 0 {
                let v = vote(slate).expect("non-empty");
                let count = |x: i8| slate.iter().filter(|&&y| y == x).count();
                assert!(slate.contains(&v), "{slate:?} -> {v}");
                let vc = count(v);
                for x in -2..=2 {
                    assert!(count(x) <= vc, "{slate:?}: {x} outnumbers {v}");
                    if count(x) == vc && x != v {
                        assert!(v < x, "{slate:?}: tie should break low, got {v} not {x}");
                    }
                }
                *seen += 1;
                return;
            }
            for x in start..=2 {
                slate.push(x);
                enumerate(x, left - 1, slate, seen);
                slate.pop();
            }
        }
        let mut seen = 0;
        for size in 1..=5usize {
            enumerate(-2, size, &mut Vec::new(), &mut seen);
        }
        // C(5,1)+C(6,2)+C(7,3)+C(8,4)+C(9,5) over multiset counts:
        assert_eq!(seen, 5 + 15 + 35 + 70 + 126);
    }

    // --- grounding --------------------------------------------------------

    #[test]
    fn qa_verdict_examples() {
        let set = |items: &[&str]| -> BTreeSet<String> {
            items.iter().map(|s| s.to_string()).collect()
        };
        assert!(qa_passes(&set(&[]), &set(&[])));
        assert!(!qa_passes(&set(&["a", "b"]), &set(&["a", "c"])));
        assert!(qa_passes(&set(&["a", "b", "c"]), &set(&["a", "b"])));
        assert!(qa_passes(&set(&["a"]), &set(&["a"])));
        assert!(!qa_passes(&set(&[]), &set(&["a"])));
    }

    #[test]
    fn nearest_qa_prefers_exact_then_max_overlap() {
        let (world, _) = setup();
        let qa = build_qa_dataset(&world).unwrap();
        let task = world.task("apple_to_fridge").unwrap();
        let pairs: Vec<&QAPair> = qa.iter().filter(|p| p.task_id == task.id).collect();
        assert!(pairs.len() >= 3);

        // Exact: each catalogued snapshot maps to itself.
        for pair in &pairs {
            let hit = nearest_qa(&pairs, &pair.obs).unwrap();
            assert!(std::ptr::eq(hit, *pair));
        }

        // Novel observation: doctor a history so it matches no snapshot,
        // then check the winner against a brute-force scan.
        let mut novel = pairs[1].obs.clone();
        novel.history.push(world.action_id(crate::env::Behavior::Find, "bed").unwrap());
        assert!(pairs.iter().all(|p| p.obs != novel));
        let hit = nearest_qa(&pairs, &novel).unwrap();
        let novel_vis: BTreeSet<ObjectId> = novel.visible.iter().copied().collect();
        let brute = pairs
            .iter()
            .map(|p| {
                let vis: BTreeSet<ObjectId> = p.obs.visible.iter().copied().collect();
                jaccard(&novel_vis, &vis)
            })
            .fold(f64::MIN, f64::max);
        let hit_vis: BTreeSet<ObjectId> = hit.obs.visible.iter().copied().collect();
        assert_eq!(jaccard(&novel_vis, &hit_vis), brute);
    }

    // --- full annotation --------------------------------------------------

    #[test]
    fn clean_panel_is_a_fixpoint_of_all_three_channels() {
        let (world, instructions) = setup();
        let dataset = forge_dataset(&world, &instructions, &small_forge_cfg(0), 5).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let hub =
            EstimatorHub::scripted(&world, &instructions, &clean_panel(5).unwrap()).unwrap();
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();

        assert!(report.dropped.is_empty());
        assert_eq!(report.structural_fallback_steps, 0);
        assert_eq!(report.temporal_fallback_steps, 0);
        assert_eq!(annotated.len(), dataset.len());

        for traj in &annotated {
            let task = world.task(&traj.task_id).unwrap();
            let triples = traj.rewards.as_ref().unwrap();
            assert_eq!(triples.len(), traj.steps.len());
            for (step, triple) in traj.steps.iter().zip(triples) {
                let want = rubric::score(&world, &task.expert, &step.obs.history, step.action);
                assert_eq!(triple.rc, want);
                assert_eq!(triple.rs, want);
                assert_eq!(triple.rt, want);
                assert_eq!(triple.unified, None);
            }
        }
        assert_eq!(
            report.diagnostics.len(),
            annotated.iter().map(|t| t.steps.len()).sum::<usize>()
        );
    }

    #[test]
    fn derailed_trajectories_fall_back_without_changing_clean_values() {
        // On trajectories with injected junk, a persona's implied plan is a
        // myopic per-state argmax: it loops where the recording derailed and
        // honestly fails verification. Every clean persona then shares that
        // failed plan, so on-plan steps exclude the whole panel — the
        // flagged fallback keeps rt at the contextual value, and the
        // rewards themselves stay exactly on the rubric.
        let (world, instructions) = setup();
        let dataset = forge_dataset(&world, &instructions, &small_forge_cfg(1), 5).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let hub =
            EstimatorHub::scripted(&world, &instructions, &clean_panel(5).unwrap()).unwrap();
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();

        assert!(report.dropped.is_empty());
        assert_eq!(report.structural_fallback_steps, 0);
        assert!(report.temporal_fallback_steps > 0);

        let is_expert = |traj: &Trajectory| {
            let task = world.task(&traj.task_id).unwrap();
            traj.steps.iter().map(|s| s.action).collect::<Vec<_>>() == task.expert
        };
        // Faithful recordings never hit the fallback; values match the
        // rubric everywhere, fallback or not.
        let mut row_iter = report.diagnostics.iter();
        for traj in &annotated {
            let task = world.task(&traj.task_id).unwrap();
            let expert = is_expert(traj);
            for (step, triple) in traj.steps.iter().zip(traj.rewards.as_ref().unwrap()) {
                let row = row_iter.next().unwrap();
                if expert {
                    assert!(!row.temporal_fallback);
                }
                let want = rubric::score(&world, &task.expert, &step.obs.history, step.action);
                assert_eq!(triple.rc, want);
                assert_eq!(triple.rs, want);
                assert_eq!(triple.rt, want);
            }
        }
    }

    #[test]
    fn one_flipped_persona_is_outvoted_everywhere() {
        let (world, instructions) = setup();
        let dataset = forge_dataset(&world, &instructions, &small_forge_cfg(1), 7).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let mut specs = clean_panel(5).unwrap();
        specs[2].corruption.flip_rate = 1.0;
        let hub = EstimatorHub::scripted(&world, &instructions, &specs).unwrap();
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();
        assert!(report.dropped.is_empty());
        for traj in &annotated {
            let task = world.task(&traj.task_id).unwrap();
            for (step, triple) in traj.steps.iter().zip(traj.rewards.as_ref().unwrap()) {
                let want = rubric::score(&world, &task.expert, &step.obs.history, step.action);
                assert_eq!(triple.rc, want, "four faithful personas outvote one flipper");
            }
        }
    }

    #[test]
    fn believer_majority_splits_the_channels() {
        let (world, instructions) = setup();
        let belief = Misconception {
            object: "apple".into(),
            location: HomeLocation::In("microwave".into()),
        };
        let mut specs = clean_panel(5).unwrap();
        for p in [0, 1, 2] {
            specs[p].corruption.misconception = Some(belief.clone());
        }
        let hub = EstimatorHub::scripted(&world, &instructions, &specs).unwrap();
        let qa = build_qa_dataset(&world).unwrap();

        let ti = world.tasks().iter().position(|t| t.id == "apple_to_fridge").unwrap();
        let task = &world.tasks()[ti];
        let instruction = instructions.train[ti][0].clone();
        let expert = record_trajectory(&world, &task.id, &instruction, &task.expert);
        assert_eq!(expert.f_s, 1);
        let dataset = vec![expert];
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();
        assert!(report.dropped.is_empty());

        // Step 1 is `grab apple` at the coffee table: believers call it
        // infeasible (-2) and win the contextual vote; the grounding check
        // throws them out, so the structural channel recovers the truth.
        let triples = annotated[0].rewards.as_ref().unwrap();
        assert_eq!(triples[1].rc, -2);
        assert_eq!(triples[1].rs, 2);
        let row = &report.diagnostics[1];
        assert!(!row.structural_fallback);
        assert_eq!(
            row.personas.iter().filter(|p| p.qa_pass).count(),
            2,
            "exactly the two faithful personas pass the grounding check: {row:?}"
        );
        // The believers' implied plans head straight for the microwave and
        // never contain `grab apple`, so the temporal channel has no grounds
        // to exclude them here and follows the contextual value. The
        // faithful personas' implied plan is the expert plan and verifies.
        assert_eq!(triples[1].rt, triples[1].rc);
        for p in &row.personas[3..] {
            assert!(p.plan_verified);
        }
        assert!(!row.personas[1].excluded);
    }

    #[test]
    fn failed_self_verification_triggers_temporal_exclusion() {
        let (world, instructions) = setup();
        let mut specs = clean_panel(3).unwrap();
        specs[2].corruption.verify_error_rate = 1.0;
        let hub = EstimatorHub::scripted(&world, &instructions, &specs).unwrap();
        let qa = build_qa_dataset(&world).unwrap();

        let ti = world.tasks().iter().position(|t| t.id == "mug_to_sink").unwrap();
        let task = &world.tasks()[ti];
        let instruction = instructions.train[ti][0].clone();
        let dataset = vec![record_trajectory(&world, &task.id, &instruction, &task.expert)];
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();

        // The slipping persona's implied plan is the expert plan (its
        // scoring is faithful), but its verification verdict flips to
        // "impossible", so it is excluded at every expert step. The two
        // clean personas carry the temporal vote; here they agree with the
        // contextual value anyway — the real assertion is the exclusions.
        for row in &report.diagnostics {
            assert!(row.personas[2].excluded, "step {}: {row:?}", row.step);
            assert!(!row.personas[0].excluded);
            assert!(!row.personas[1].excluded);
            assert!(!row.temporal_fallback);
        }
        let task_ref = world.task(&dataset[0].task_id).unwrap();
        for (step, triple) in annotated[0].steps.iter().zip(annotated[0].rewards.as_ref().unwrap())
        {
            let want = rubric::score(&world, &task_ref.expert, &step.obs.history, step.action);
            assert_eq!(triple.rt, want);
        }
    }

    #[test]
    fn all_excluded_falls_back_to_contextual_with_flag() {
        let (world, instructions) = setup();
        let mut specs = clean_panel(1).unwrap();
        specs[0].corruption.verify_error_rate = 1.0;
        let hub = EstimatorHub::scripted(&world, &instructions, &specs).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let ti = world.tasks().iter().position(|t| t.id == "mug_to_sink").unwrap();
        let task = &world.tasks()[ti];
        let instruction = instructions.train[ti][0].clone();
        let dataset = vec![record_trajectory(&world, &task.id, &instruction, &task.expert)];
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();
        assert!(report.temporal_fallback_steps > 0);
        for (row, triple) in report
            .diagnostics
            .iter()
            .zip(annotated[0].rewards.as_ref().unwrap())
        {
            if row.temporal_fallback {
                assert_eq!(triple.rt, triple.rc);
            }
        }
    }

    #[test]
    fn lone_believer_hits_structural_fallback_where_grounding_fails() {
        let (world, instructions) = setup();
        let mut specs = clean_panel(1).unwrap();
        specs[0].corruption.misconception = Some(Misconception {
            object: "apple".into(),
            location: HomeLocation::In("microwave".into()),
        });
        let hub = EstimatorHub::scripted(&world, &instructions, &specs).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let ti = world.tasks().iter().position(|t| t.id == "apple_to_fridge").unwrap();
        let task = &world.tasks()[ti];
        let instruction = instructions.train[ti][0].clone();
        let dataset = vec![record_trajectory(&world, &task.id, &instruction, &task.expert)];
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();

        // At the opening snapshot the believer names no stored-relevant
        // object, fails the check, and — being the whole panel — forces the
        // flagged fallback.
        let row = &report.diagnostics[0];
        assert!(row.structural_fallback);
        assert_eq!(annotated[0].rewards.as_ref().unwrap()[0].rs, row.rc);
        assert!(report.structural_fallback_steps > 0);
    }

    #[test]
    fn estimator_failure_drops_the_trajectory_with_logged_reason() {
        use crate::estimator::remote::{Transport, WireRequest, WireResponse};
        struct AlwaysDown;
        impl Transport for AlwaysDown {
            fn send(&self, request: &WireRequest) -> Result<WireResponse> {
                Err(Error::estimator(request.persona, "endpoint unreachable"))
            }
        }
        let (world, instructions) = setup();
        let hub = EstimatorHub::remote(
            &world,
            &instructions,
            &clean_panel(3).unwrap(),
            std::sync::Arc::new(AlwaysDown),
            0,
        )
        .unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let dataset = forge_dataset(&world, &instructions, &small_forge_cfg(0), 3).unwrap();
        let (annotated, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();
        assert!(annotated.is_empty());
        assert_eq!(report.dropped.len(), dataset.len());
        for drop in &report.dropped {
            assert!(drop.reason.contains("unreachable"), "{}", drop.reason);
        }
    }

    #[test]
    fn unknown_instruction_drops_only_that_trajectory() {
        let (world, instructions) = setup();
        let hub = EstimatorHub::scripted(&world, &instructions, &clean_panel(3).unwrap()).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let task = &world.tasks()[0];
        let good = record_trajectory(
            &world,
            &task.id,
            &instructions.train[0][0],
            &task.expert,
        );
        let bad = record_trajectory(&world, &task.id, "Phrasing nobody generated.", &task.expert);
        let (annotated, report) = annotate_dataset(&vec![good, bad], &qa, &hub, &world).unwrap();
        assert_eq!(annotated.len(), 1);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].index, 1);
        assert!(report.dropped[0].reason.contains("not in index"));
    }

    #[test]
    fn annotation_is_deterministic_across_runs() {
        let (world, instructions) = setup();
        let mut specs = clean_panel(3).unwrap();
        specs[0].corruption.flip_rate = 0.3;
        specs[1].corruption.qa_error_rate = 0.5;
        specs[2].corruption.verify_error_rate = 0.4;
        let qa = build_qa_dataset(&world).unwrap();
        let dataset = forge_dataset(&world, &instructions, &small_forge_cfg(1), 9).unwrap();
        let run = || {
            let hub = EstimatorHub::scripted(&world, &instructions, &specs).unwrap();
            annotate_dataset(&dataset, &qa, &hub, &world).unwrap()
        };
        let (a1, r1) = run();
        let (a2, r2) = run();
        assert_eq!(
            serde_json::to_string(&a1).unwrap(),
            serde_json::to_string(&a2).unwrap()
        );
        assert_eq!(r1.diagnostics, r2.diagnostics);
    }

    #[test]
    fn diagnostics_csv_round_trips() {
        let (world, instructions) = setup();
        let hub = EstimatorHub::scripted(&world, &instructions, &clean_panel(3).unwrap()).unwrap();
        let qa = build_qa_dataset(&world).unwrap();
        let task = &world.tasks()[0];
        let dataset = vec![record_trajectory(
            &world,
            &task.id,
            &instructions.train[0][0],
            &task.expert,
        )];
        let (_, report) = annotate_dataset(&dataset, &qa, &hub, &world).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diagnostics.csv");
        write_diagnostics(&path, &report.diagnostics).unwrap();

        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        assert!(header.contains(&"rc".to_string()));
        assert!(header.contains(&"p1_reward".to_string()));
        assert!(header.contains(&"p3_excluded".to_string()));
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), report.diagnostics.len());
        assert_eq!(&rows[0][1], task.id.as_str());
        let rc_col = header.iter().position(|h| h == "rc").unwrap();
        assert_eq!(rows[0][rc_col].parse::<i8>().unwrap(), report.diagnostics[0].rc);
    }
}

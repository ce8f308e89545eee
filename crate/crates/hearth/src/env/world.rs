//! World model: rooms, objects, the discrete action table, and domain shifts.
//!
//! A world is authored (or loaded from JSON) as names and compiled into dense
//! integer ids. Action ids are stable and dense `0..A-1`; the bundled default
//! world has exactly 58 actions over 4 rooms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RoomId = u16;
pub type ObjectId = u16;
pub type ActionId = u16;

/// Current schema version for world/task JSON files.
pub const WORLD_SCHEMA: u32 = 1;

// ---------------------------------------------------------------------------
// Behaviors and object properties
// ---------------------------------------------------------------------------

/// The eight manipulation behaviors. An action is a (behavior, object) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Find,
    Grab,
    Open,
    Close,
    Sit,
    Put,
    PutIn,
    SwitchOn,
}

impl Behavior {
    pub const ALL: [Behavior; 8] = [
        Behavior::Find,
        Behavior::Grab,
        Behavior::Open,
        Behavior::Close,
        Behavior::Sit,
        Behavior::Put,
        Behavior::PutIn,
        Behavior::SwitchOn,
    ];

    /// Verb phrase used in textual action renderings.
    pub fn verb(self) -> &'static str {
        match self {
            Behavior::Find => "find",
            Behavior::Grab => "grab",
            Behavior::Open => "open",
            Behavior::Close => "close",
            Behavior::Sit => "sit on",
            Behavior::Put => "put on",
            Behavior::PutIn => "put in",
            Behavior::SwitchOn => "switch on",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectProps {
    pub grabbable: bool,
    pub openable: bool,
    pub sittable: bool,
    pub switchable: bool,
    pub container: bool,
}

/// Initial placement of an object, by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "target")]
pub enum HomeLocation {
    /// Free-standing in a room (furniture).
    Room(String),
    /// On top of a surface object.
    On(String),
    /// Inside a container object.
    In(String),
}

// ---------------------------------------------------------------------------
// Goals and tasks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GoalCondition {
    ObjectAt { object: String, target: String },
    ObjectIn { object: String, container: String },
    Holding { object: String },
    SittingOn { seat: String },
    SwitchedOn { device: String },
}

impl GoalCondition {
    /// All object names this condition references.
    pub fn object_names(&self) -> Vec<&str> {
        match self {
            GoalCondition::ObjectAt { object, target } => vec![object, target],
            GoalCondition::ObjectIn { object, container } => vec![object, container],
            GoalCondition::Holding { object } => vec![object],
            GoalCondition::SittingOn { seat } => vec![seat],
            GoalCondition::SwitchedOn { device } => vec![device],
        }
    }
}

/// Template family for abstract (paraphrase) instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractStyle {
    PlaceOn,
    PlaceIn,
    HoldSit,
    Appliance,
    Serve,
}

/// Slot phrases feeding the instruction template pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionTemplates {
    pub style: AbstractStyle,
    /// e.g. "the apple and the bananas"
    pub item_phrase: String,
    /// e.g. "the sink"
    pub dest_phrase: String,
    /// Appliance phrase for `AbstractStyle::Appliance` tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appliance_phrase: Option<String>,
}

/// An action written by name, for world/task files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDef {
    pub behavior: Behavior,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub goals: Vec<GoalCondition>,
    /// Expert action sequence (by name; compiled to ids in `World`).
    pub expert: Vec<ActionDef>,
    pub templates: InstructionTemplates,
    /// Set by `apply_shift` when no valid expert plan exists in a shifted
    /// world (or the goals become pre-satisfied); stale tasks are excluded
    /// from evaluation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stale: bool,
}

// ---------------------------------------------------------------------------
// World file (serde form) and compiled world
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDef {
    pub name: String,
    pub home: HomeLocation,
    #[serde(default)]
    pub props: ObjectProps,
}

/// On-disk world + task bundle, schema-versioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub schema: u32,
    pub rooms: Vec<String>,
    pub agent_start_room: String,
    pub objects: Vec<ObjectDef>,
    pub actions: Vec<ActionDef>,
    pub tasks: Vec<TaskSpec>,
}

/// Compiled initial placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Home {
    Room(RoomId),
    On(ObjectId),
    In(ObjectId),
}

#[derive(Debug, Clone)]
pub struct CompiledObject {
    pub name: String,
    pub home: Home,
    pub props: ObjectProps,
}

/// Compiled task: goals and expert resolved to ids.
#[derive(Debug, Clone)]
pub struct CompiledTask {
    pub id: String,
    pub goals: Vec<GoalCondition>,
    pub goal_ids: Vec<CompiledGoal>,
    pub expert: Vec<ActionId>,
    pub templates: InstructionTemplates,
    pub stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompiledGoal {
    ObjectAt { object: ObjectId, target: ObjectId },
    ObjectIn { object: ObjectId, container: ObjectId },
    Holding { object: ObjectId },
    SittingOn { seat: ObjectId },
    SwitchedOn { device: ObjectId },
}

/// A world compiled to dense ids, plus its tasks.
#[derive(Debug, Clone)]
pub struct World {
    pub rooms: Vec<String>,
    pub agent_start_room: RoomId,
    pub objects: Vec<CompiledObject>,
    pub actions: Vec<(Behavior, ObjectId)>,
    pub tasks: Vec<CompiledTask>,
    object_ids: BTreeMap<String, ObjectId>,
    action_ids: BTreeMap<(Behavior, ObjectId), ActionId>,
    /// The file this world was compiled from (kept for round-trips/shifts).
    file: WorldFile,
}

impl World {
    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn object_id(&self, name: &str) -> Result<ObjectId> {
        self.object_ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("unknown object `{name}`")))
    }

    pub fn object_name(&self, id: ObjectId) -> &str {
        &self.objects[id as usize].name
    }

    /// Display name: underscores become spaces ("bread_slice" -> "bread slice").
    pub fn display_name(&self, id: ObjectId) -> String {
        self.objects[id as usize].name.replace('_', " ")
    }

    pub fn action_id(&self, behavior: Behavior, object: &str) -> Result<ActionId> {
        let obj = self.object_id(object)?;
        self.action_ids
            .get(&(behavior, obj))
            .copied()
            .ok_or_else(|| Error::config(format!("no action `{behavior:?} {object}` in table")))
    }

    pub fn action(&self, id: ActionId) -> (Behavior, ObjectId) {
        self.actions[id as usize]
    }

    /// Textual action rendering, e.g. "grab apple", "put in fridge".
    pub fn action_name(&self, id: ActionId) -> String {
        let (b, o) = self.action(id);
        format!("{} {}", b.verb(), self.display_name(o))
    }

    pub fn task(&self, task_id: &str) -> Result<&CompiledTask> {
        self.tasks
            .iter()
            .find(|t| t.id == task_id)
            .ok_or_else(|| Error::config(format!("unknown task `{task_id}`")))
    }

    pub fn tasks(&self) -> &[CompiledTask] {
        &self.tasks
    }

    pub fn file(&self) -> &WorldFile {
        &self.file
    }

    /// Compile a world file, validating ids, the action table, and tasks.
    pub fn compile(file: WorldFile) -> Result<World> {
        if file.schema != WORLD_SCHEMA {
            return Err(Error::config(format!(
                "unsupported world schema {} (expected {WORLD_SCHEMA})",
                file.schema
            )));
        }
        let mut room_ids = BTreeMap::new();
        for (i, r) in file.rooms.iter().enumerate() {
            if room_ids.insert(r.clone(), i as RoomId).is_some() {
                return Err(Error::config(format!("duplicate room `{r}`")));
            }
        }
        let mut object_ids = BTreeMap::new();
        for (i, o) in file.objects.iter().enumerate() {
            if object_ids.insert(o.name.clone(), i as ObjectId).is_some() {
                return Err(Error::config(format!("duplicate object `{}`", o.name)));
            }
        }
        let start = *room_ids
            .get(&file.agent_start_room)
            .ok_or_else(|| Error::config(format!("unknown start room `{}`", file.agent_start_room)))?;

        let mut objects = Vec::with_capacity(file.objects.len());
        for def in &file.objects {
            let home = match &def.home {
                HomeLocation::Room(r) => Home::Room(
                    *room_ids
                        .get(r)
                        .ok_or_else(|| Error::config(format!("object `{}`: unknown room `{r}`", def.name)))?,
                ),
                HomeLocation::On(s) => Home::On(
                    *object_ids
                        .get(s)
                        .ok_or_else(|| Error::config(format!("object `{}`: unknown surface `{s}`", def.name)))?,
                ),
                HomeLocation::In(c) => Home::In(
                    *object_ids
                        .get(c)
                        .ok_or_else(|| Error::config(format!("object `{}`: unknown container `{c}`", def.name)))?,
                ),
            };
            objects.push(CompiledObject {
                name: def.name.clone(),
                home,
                props: def.props,
            });
        }

        let mut actions = Vec::with_capacity(file.actions.len());
        let mut action_ids = BTreeMap::new();
        for (i, a) in file.actions.iter().enumerate() {
            let obj = *object_ids
                .get(&a.object)
                .ok_or_else(|| Error::config(format!("action references unknown object `{}`", a.object)))?;
            if action_ids.insert((a.behavior, obj), i as ActionId).is_some() {
                return Err(Error::config(format!(
                    "duplicate action `{:?} {}`",
                    a.behavior, a.object
                )));
            }
            actions.push((a.behavior, obj));
        }

        let mut tasks = Vec::with_capacity(file.tasks.len());
        for t in &file.tasks {
            let mut expert = Vec::with_capacity(t.expert.len());
            for a in &t.expert {
                let obj = *object_ids
                    .get(&a.object)
                    .ok_or_else(|| Error::config(format!("task `{}`: unknown object `{}`", t.id, a.object)))?;
                let id = action_ids
                    .get(&(a.behavior, obj))
                    .copied()
                    .ok_or_else(|| {
                        Error::config(format!("task `{}`: action `{:?} {}` not in table", t.id, a.behavior, a.object))
                    })?;
                expert.push(id);
            }
            let mut goal_ids = Vec::with_capacity(t.goals.len());
            for g in &t.goals {
                goal_ids.push(compile_goal(g, &object_ids, &t.id)?);
            }
            tasks.push(CompiledTask {
                id: t.id.clone(),
                goals: t.goals.clone(),
                goal_ids,
                expert,
                templates: t.templates.clone(),
                stale: t.stale,
            });
        }

        Ok(World {
            rooms: file.rooms.clone(),
            agent_start_room: start,
            objects,
            actions,
            tasks,
            object_ids,
            action_ids,
            file,
        })
    }

    pub fn from_json(text: &str) -> Result<World> {
        let file: WorldFile = serde_json::from_str(text)?;
        World::compile(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.file)?)
    }
}

fn compile_goal(
    g: &GoalCondition,
    ids: &BTreeMap<String, ObjectId>,
    task: &str,
) -> Result<CompiledGoal> {
    let lookup = |name: &str| -> Result<ObjectId> {
        ids.get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("task `{task}`: goal references unknown object `{name}`")))
    };
    Ok(match g {
        GoalCondition::ObjectAt { object, target } => CompiledGoal::ObjectAt {
            object: lookup(object)?,
            target: lookup(target)?,
        },
        GoalCondition::ObjectIn { object, container } => CompiledGoal::ObjectIn {
            object: lookup(object)?,
            container: lookup(container)?,
        },
        GoalCondition::Holding { object } => CompiledGoal::Holding {
            object: lookup(object)?,
        },
        GoalCondition::SittingOn { seat } => CompiledGoal::SittingOn { seat: lookup(seat)? },
        GoalCondition::SwitchedOn { device } => CompiledGoal::SwitchedOn {
            device: lookup(device)?,
        },
    })
}

// ---------------------------------------------------------------------------
// Domain shift
// ---------------------------------------------------------------------------

/// Relocation of key objects: object name -> new home.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainShift(pub BTreeMap<String, HomeLocation>);

/// What `apply_shift` did to each task.
#[derive(Debug, Clone, Default)]
pub struct ShiftReport {
    /// Tasks whose original expert no longer succeeds; expert re-derived.
    pub changed: Vec<String>,
    /// Tasks left stale: unreachable goals or goals pre-satisfied post-shift.
    pub stale: Vec<String>,
}

impl World {
    /// Apply an object relocation, re-deriving expert plans for tasks the
    /// shift breaks. Pure: returns a new world, `self` untouched.
    pub fn apply_shift(&self, shift: &DomainShift) -> Result<(World, ShiftReport)> {
        let mut file = self.file.clone();
        for (name, new_home) in &shift.0 {
            let id = self.object_id(name)?;
            if !self.objects[id as usize].props.grabbable {
                return Err(Error::config(format!(
                    "cannot relocate `{name}`: only grabbable objects are relocatable"
                )));
            }
            let def = file
                .objects
                .iter_mut()
                .find(|o| &o.name == name)
                .expect("object present in file");
            def.home = new_home.clone();
        }
        let mut shifted = World::compile(file)?;
        let mut report = ShiftReport::default();

        let init = shifted.initial_state();
        for idx in 0..shifted.tasks.len() {
            let task = shifted.tasks[idx].clone();
            if crate::env::state::all_goals_met(&init, &task) {
                // Degenerate after the shift: any policy succeeds for free.
                shifted.tasks[idx].stale = true;
                shifted.file.tasks[idx].stale = true;
                report.stale.push(task.id.clone());
                continue;
            }
            let replay = crate::env::state::replay(&shifted, &task.expert);
            if replay.success(&shifted, &task) {
                continue;
            }
            match crate::env::planner::plan(&shifted, &task) {
                crate::env::planner::PlanOutcome::Plan(actions) => {
                    report.changed.push(task.id.clone());
                    shifted.tasks[idx].expert = actions.clone();
                    shifted.file.tasks[idx].expert = actions
                        .iter()
                        .map(|&a| {
                            let (b, o) = shifted.actions[a as usize];
                            ActionDef {
                                behavior: b,
                                object: shifted.objects[o as usize].name.clone(),
                            }
                        })
                        .collect();
                }
                crate::env::planner::PlanOutcome::PreSatisfied
                | crate::env::planner::PlanOutcome::Unreachable => {
                    shifted.tasks[idx].stale = true;
                    shifted.file.tasks[idx].stale = true;
                    report.stale.push(task.id.clone());
                }
            }
        }
        Ok((shifted, report))
    }
}

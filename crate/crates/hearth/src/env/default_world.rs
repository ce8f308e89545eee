//! The bundled default world: 4 rooms, 34 objects, 58 actions, 25 tasks.
//!
//! The action table is derived from object properties with a fixed rule set
//! (find per furniture, grab per item, open/close per openable, sit per
//! sittable, put per plain surface, put_in per container, switch_on per
//! switchable device), grouped by behavior so ids are dense and stable.

use super::world::{
    AbstractStyle, ActionDef, Behavior, GoalCondition, HomeLocation, InstructionTemplates,
    ObjectDef, ObjectProps, TaskSpec, World, WorldFile, WORLD_SCHEMA,
};

fn props(grab: bool, open: bool, sit: bool, switch: bool, container: bool) -> ObjectProps {
    ObjectProps {
        grabbable: grab,
        openable: open,
        sittable: sit,
        switchable: switch,
        container,
    }
}

/// (name, room, props) for furniture; room is the home.
const ROOMS: [&str; 4] = ["kitchen", "living_room", "bedroom", "bathroom"];

fn furniture() -> Vec<ObjectDef> {
    let f = |name: &str, room: &str, p: ObjectProps| ObjectDef {
        name: name.to_string(),
        home: HomeLocation::Room(room.to_string()),
        props: p,
    };
    vec![
        f("kitchen_table", "kitchen", props(false, false, false, false, false)),
        f("wall_shelf", "kitchen", props(false, false, false, false, false)),
        f("toaster", "kitchen", props(false, false, false, true, false)),
        f("fridge", "kitchen", props(false, true, false, false, true)),
        f("microwave", "kitchen", props(false, true, false, true, true)),
        f("sink", "kitchen", props(false, false, false, false, true)),
        f("coffee_table", "living_room", props(false, false, false, false, false)),
        f("sofa", "living_room", props(false, false, true, false, false)),
        f("bookshelf", "living_room", props(false, false, false, false, false)),
        f("desk", "bedroom", props(false, false, false, false, false)),
        f("bed", "bedroom", props(false, false, true, false, false)),
        f("bathroom_counter", "bathroom", props(false, false, false, false, false)),
        f("bathroom_cabinet", "bathroom", props(false, true, false, false, true)),
        f("bathtub", "bathroom", props(false, false, false, false, true)),
    ]
}

/// (name, home) for grabbable items.
fn items() -> Vec<ObjectDef> {
    let on = |name: &str, surface: &str| ObjectDef {
        name: name.to_string(),
        home: HomeLocation::On(surface.to_string()),
        props: props(true, false, false, false, false),
    };
    let inside = |name: &str, container: &str| ObjectDef {
        name: name.to_string(),
        home: HomeLocation::In(container.to_string()),
        props: props(true, false, false, false, false),
    };
    vec![
        on("mug", "kitchen_table"),
        on("plate", "kitchen_table"),
        on("salmon", "kitchen_table"),
        on("cereal", "wall_shelf"),
        on("crackers", "wall_shelf"),
        on("chips", "wall_shelf"),
        on("bread_slice", "toaster"),
        inside("sponge", "sink"),
        on("apple", "coffee_table"),
        on("bananas", "coffee_table"),
        on("creamy_buns", "coffee_table"),
        on("remote_control", "sofa"),
        on("book", "bookshelf"),
        on("cat", "bed"),
        on("pillow", "bed"),
        on("paper", "desk"),
        on("mouse", "desk"),
        on("keyboard", "desk"),
        on("toothpaste", "bathroom_counter"),
        on("towel", "bathroom_counter"),
    ]
}

/// Behavior applicability rules, yielding exactly 58 actions:
/// 14 find + 20 grab + 3 open + 3 close + 2 sit + 9 put + 5 put_in + 2 switch_on.
fn action_table(objects: &[ObjectDef]) -> Vec<ActionDef> {
    let mut actions = Vec::new();
    let add = |behavior: Behavior, pred: &dyn Fn(&ObjectProps) -> bool, actions: &mut Vec<ActionDef>| {
        for o in objects {
            if pred(&o.props) {
                actions.push(ActionDef {
                    behavior,
                    object: o.name.clone(),
                });
            }
        }
    };
    add(Behavior::Find, &|p| !p.grabbable, &mut actions);
    add(Behavior::Grab, &|p| p.grabbable, &mut actions);
    add(Behavior::Open, &|p| p.openable, &mut actions);
    add(Behavior::Close, &|p| p.openable, &mut actions);
    add(Behavior::Sit, &|p| p.sittable, &mut actions);
    add(Behavior::Put, &|p| !p.grabbable && !p.container, &mut actions);
    add(Behavior::PutIn, &|p| p.container, &mut actions);
    add(Behavior::SwitchOn, &|p| p.switchable, &mut actions);
    actions
}

struct TaskDef {
    id: &'static str,
    goals: Vec<GoalCondition>,
    expert: &'static [(Behavior, &'static str)],
    style: AbstractStyle,
    item_phrase: &'static str,
    dest_phrase: &'static str,
    appliance_phrase: Option<&'static str>,
}

fn at(object: &str, target: &str) -> GoalCondition {
    GoalCondition::ObjectAt {
        object: object.into(),
        target: target.into(),
    }
}
fn inside(object: &str, container: &str) -> GoalCondition {
    GoalCondition::ObjectIn {
        object: object.into(),
        container: container.into(),
    }
}
fn holding(object: &str) -> GoalCondition {
    GoalCondition::Holding { object: object.into() }
}
fn sitting(seat: &str) -> GoalCondition {
    GoalCondition::SittingOn { seat: seat.into() }
}
fn powered(device: &str) -> GoalCondition {
    GoalCondition::SwitchedOn { device: device.into() }
}

use Behavior::{Close, Find, Grab, Open, Put, PutIn, Sit, SwitchOn};

#[rustfmt::skip]
fn task_defs() -> Vec<TaskDef> {
    vec![
        TaskDef {
            id: "apple_and_toast_on_table",
            goals: vec![at("apple", "kitchen_table"), at("bread_slice", "kitchen_table")],
            expert: &[(Find, "coffee_table"), (Grab, "apple"), (Find, "toaster"), (Grab, "bread_slice"), (Find, "kitchen_table"), (Put, "kitchen_table"), (Put, "kitchen_table")],
            style: AbstractStyle::Serve, item_phrase: "the apple and the bread slice", dest_phrase: "the kitchen table", appliance_phrase: None,
        },
        TaskDef {
            id: "fruit_to_sink",
            goals: vec![inside("apple", "sink"), inside("bananas", "sink")],
            expert: &[(Find, "coffee_table"), (Grab, "apple"), (Grab, "bananas"), (Find, "sink"), (PutIn, "sink"), (PutIn, "sink")],
            style: AbstractStyle::PlaceIn, item_phrase: "the apple and the bananas", dest_phrase: "the sink", appliance_phrase: None,
        },
        TaskDef {
            id: "fruit_snack_on_sofa",
            goals: vec![holding("apple"), holding("bananas"), sitting("sofa")],
            expert: &[(Find, "coffee_table"), (Grab, "apple"), (Grab, "bananas"), (Find, "sofa"), (Sit, "sofa")],
            style: AbstractStyle::HoldSit, item_phrase: "the apple and the bananas", dest_phrase: "the sofa", appliance_phrase: None,
        },
        TaskDef {
            id: "cereal_to_fridge",
            goals: vec![inside("cereal", "fridge")],
            expert: &[(Find, "wall_shelf"), (Grab, "cereal"), (Find, "fridge"), (Open, "fridge"), (PutIn, "fridge"), (Close, "fridge")],
            style: AbstractStyle::PlaceIn, item_phrase: "the cereal", dest_phrase: "the fridge", appliance_phrase: None,
        },
        TaskDef {
            id: "salmon_to_fridge",
            goals: vec![inside("salmon", "fridge")],
            expert: &[(Find, "kitchen_table"), (Grab, "salmon"), (Find, "fridge"), (Open, "fridge"), (PutIn, "fridge"), (Close, "fridge")],
            style: AbstractStyle::PlaceIn, item_phrase: "the salmon", dest_phrase: "the fridge", appliance_phrase: None,
        },
        TaskDef {
            id: "salmon_to_microwave",
            goals: vec![inside("salmon", "microwave"), powered("microwave")],
            expert: &[(Find, "kitchen_table"), (Grab, "salmon"), (Find, "microwave"), (Open, "microwave"), (PutIn, "microwave"), (Close, "microwave"), (SwitchOn, "microwave")],
            style: AbstractStyle::Appliance, item_phrase: "the salmon", dest_phrase: "the microwave", appliance_phrase: Some("the microwave"),
        },
        TaskDef {
            id: "book_on_sofa",
            goals: vec![holding("book"), sitting("sofa")],
            expert: &[(Find, "bookshelf"), (Grab, "book"), (Find, "sofa"), (Sit, "sofa")],
            style: AbstractStyle::HoldSit, item_phrase: "the book", dest_phrase: "the sofa", appliance_phrase: None,
        },
        TaskDef {
            id: "apple_to_fridge",
            goals: vec![inside("apple", "fridge")],
            expert: &[(Find, "coffee_table"), (Grab, "apple"), (Find, "fridge"), (Open, "fridge"), (PutIn, "fridge"), (Close, "fridge")],
            style: AbstractStyle::PlaceIn, item_phrase: "the apple", dest_phrase: "the fridge", appliance_phrase: None,
        },
        TaskDef {
            id: "bananas_to_fridge",
            goals: vec![inside("bananas", "fridge")],
            expert: &[(Find, "coffee_table"), (Grab, "bananas"), (Find, "fridge"), (Open, "fridge"), (PutIn, "fridge"), (Close, "fridge")],
            style: AbstractStyle::PlaceIn, item_phrase: "the bananas", dest_phrase: "the fridge", appliance_phrase: None,
        },
        TaskDef {
            id: "toothpaste_to_cabinet",
            goals: vec![inside("toothpaste", "bathroom_cabinet")],
            expert: &[(Find, "bathroom_counter"), (Grab, "toothpaste"), (Find, "bathroom_cabinet"), (Open, "bathroom_cabinet"), (PutIn, "bathroom_cabinet"), (Close, "bathroom_cabinet")],
            style: AbstractStyle::PlaceIn, item_phrase: "the toothpaste", dest_phrase: "the bathroom cabinet", appliance_phrase: None,
        },
        TaskDef {
            id: "cat_to_desk",
            goals: vec![at("cat", "desk")],
            expert: &[(Find, "bed"), (Grab, "cat"), (Find, "desk"), (Put, "desk")],
            style: AbstractStyle::PlaceOn, item_phrase: "the cat", dest_phrase: "the desk", appliance_phrase: None,
        },
        TaskDef {
            id: "cat_to_bathtub",
            goals: vec![inside("cat", "bathtub")],
            expert: &[(Find, "bed"), (Grab, "cat"), (Find, "bathtub"), (PutIn, "bathtub")],
            style: AbstractStyle::PlaceIn, item_phrase: "the cat", dest_phrase: "the bathtub", appliance_phrase: None,
        },
        TaskDef {
            id: "book_in_bed",
            goals: vec![holding("book"), sitting("bed")],
            expert: &[(Find, "bookshelf"), (Grab, "book"), (Find, "bed"), (Sit, "bed")],
            style: AbstractStyle::HoldSit, item_phrase: "the book", dest_phrase: "the bed", appliance_phrase: None,
        },
        TaskDef {
            id: "cereal_to_kitchen_table",
            goals: vec![at("cereal", "kitchen_table")],
            expert: &[(Find, "wall_shelf"), (Grab, "cereal"), (Find, "kitchen_table"), (Put, "kitchen_table")],
            style: AbstractStyle::PlaceOn, item_phrase: "the cereal", dest_phrase: "the kitchen table", appliance_phrase: None,
        },
        TaskDef {
            id: "buns_to_kitchen_table",
            goals: vec![at("creamy_buns", "kitchen_table")],
            expert: &[(Find, "coffee_table"), (Grab, "creamy_buns"), (Find, "kitchen_table"), (Put, "kitchen_table")],
            style: AbstractStyle::PlaceOn, item_phrase: "the creamy buns", dest_phrase: "the kitchen table", appliance_phrase: None,
        },
        TaskDef {
            id: "buns_on_sofa",
            goals: vec![holding("creamy_buns"), sitting("sofa")],
            expert: &[(Find, "coffee_table"), (Grab, "creamy_buns"), (Find, "sofa"), (Sit, "sofa")],
            style: AbstractStyle::HoldSit, item_phrase: "the creamy buns", dest_phrase: "the sofa", appliance_phrase: None,
        },
        TaskDef {
            id: "serve_toast",
            goals: vec![powered("toaster"), at("bread_slice", "kitchen_table")],
            expert: &[(Find, "toaster"), (SwitchOn, "toaster"), (Grab, "bread_slice"), (Find, "kitchen_table"), (Put, "kitchen_table")],
            style: AbstractStyle::Appliance, item_phrase: "the bread slice", dest_phrase: "the kitchen table", appliance_phrase: Some("the toaster"),
        },
        TaskDef {
            id: "mug_to_sink",
            goals: vec![inside("mug", "sink")],
            expert: &[(Find, "kitchen_table"), (Grab, "mug"), (Find, "sink"), (PutIn, "sink")],
            style: AbstractStyle::PlaceIn, item_phrase: "the mug", dest_phrase: "the sink", appliance_phrase: None,
        },
        TaskDef {
            id: "plate_to_sink",
            goals: vec![inside("plate", "sink")],
            expert: &[(Find, "kitchen_table"), (Grab, "plate"), (Find, "sink"), (PutIn, "sink")],
            style: AbstractStyle::PlaceIn, item_phrase: "the plate", dest_phrase: "the sink", appliance_phrase: None,
        },
        TaskDef {
            id: "towel_to_cabinet",
            goals: vec![inside("towel", "bathroom_cabinet")],
            expert: &[(Find, "bathroom_counter"), (Grab, "towel"), (Find, "bathroom_cabinet"), (Open, "bathroom_cabinet"), (PutIn, "bathroom_cabinet"), (Close, "bathroom_cabinet")],
            style: AbstractStyle::PlaceIn, item_phrase: "the towel", dest_phrase: "the bathroom cabinet", appliance_phrase: None,
        },
        TaskDef {
            id: "crackers_on_sofa",
            goals: vec![holding("crackers"), sitting("sofa")],
            expert: &[(Find, "wall_shelf"), (Grab, "crackers"), (Find, "sofa"), (Sit, "sofa")],
            style: AbstractStyle::HoldSit, item_phrase: "the crackers", dest_phrase: "the sofa", appliance_phrase: None,
        },
        TaskDef {
            id: "chips_to_coffee_table",
            goals: vec![at("chips", "coffee_table")],
            expert: &[(Find, "wall_shelf"), (Grab, "chips"), (Find, "coffee_table"), (Put, "coffee_table")],
            style: AbstractStyle::PlaceOn, item_phrase: "the chips", dest_phrase: "the coffee table", appliance_phrase: None,
        },
        TaskDef {
            id: "pillow_to_sofa",
            goals: vec![at("pillow", "sofa")],
            expert: &[(Find, "bed"), (Grab, "pillow"), (Find, "sofa"), (Put, "sofa")],
            style: AbstractStyle::PlaceOn, item_phrase: "the pillow", dest_phrase: "the sofa", appliance_phrase: None,
        },
        TaskDef {
            id: "remote_to_coffee_table",
            goals: vec![at("remote_control", "coffee_table")],
            expert: &[(Find, "sofa"), (Grab, "remote_control"), (Find, "coffee_table"), (Put, "coffee_table")],
            style: AbstractStyle::PlaceOn, item_phrase: "the remote control", dest_phrase: "the coffee table", appliance_phrase: None,
        },
        TaskDef {
            id: "sponge_to_bathtub",
            goals: vec![inside("sponge", "bathtub")],
            expert: &[(Find, "sink"), (Grab, "sponge"), (Find, "bathtub"), (PutIn, "bathtub")],
            style: AbstractStyle::PlaceIn, item_phrase: "the sponge", dest_phrase: "the bathtub", appliance_phrase: None,
        },
    ]
}

/// Build the bundled default world file.
pub fn default_world_file() -> WorldFile {
    let mut objects = furniture();
    objects.extend(items());
    let actions = action_table(&objects);
    let tasks = task_defs()
        .into_iter()
        .map(|t| TaskSpec {
            id: t.id.to_string(),
            goals: t.goals,
            expert: t
                .expert
                .iter()
                .map(|&(behavior, object)| ActionDef {
                    behavior,
                    object: object.to_string(),
                })
                .collect(),
            templates: InstructionTemplates {
                style: t.style,
                item_phrase: t.item_phrase.to_string(),
                dest_phrase: t.dest_phrase.to_string(),
                appliance_phrase: t.appliance_phrase.map(str::to_string),
            },
            stale: false,
        })
        .collect();
    WorldFile {
        schema: WORLD_SCHEMA,
        rooms: ROOMS.iter().map(|r| r.to_string()).collect(),
        agent_start_room: "living_room".to_string(),
        objects,
        actions,
        tasks,
    }
}

/// Compile the bundled default world.
pub fn default_world() -> World {
    World::compile(default_world_file()).expect("default world is valid")
}

//! Per-archetype action grammar, feasible-action generation, validation,
//! and state transitions.
//!
//! The grammar is fixed per robot type:
//!
//! | robot       | actions                                                      |
//! |-------------|--------------------------------------------------------------|
//! | quadrotor   | `[land_on] <surface>`, `[movetowards] <surface>/<next room>`, `[takeoff_from] <surface>` |
//! | robotic_dog | `[open]`, `[close]`, `[grab]`, `[putinto] .. into ..`, `[puton] .. on ..`, `[movetowards]` |
//! | robotic_arm | `[open]`, `[close]`, `[grab]`, `[putinto] .. into ..`, `[puton] .. on ..` |
//!
//! Rendered action text is bit-exact: `[verb] <arg>`, `[putinto] <object>
//! into <container>`, `[puton] <object> on <surface>`; verbs lowercase, args
//! are entity ids.
//!
//! Validation rule table (first failing check wins, top to bottom):
//!
//! - verb not in the archetype's list → `NOT_SUPPORTED_BY_ROBOT`
//! - argument kind outside the verb's slots → `WRONG_KIND`; kind allowed for
//!   the verb but not for this archetype (an arm opening a door) →
//!   `NOT_SUPPORTED_BY_ROBOT`
//! - self-referential move target → `WRONG_KIND`
//! - argument shut inside a closed container → `CLOSED_BLOCKING`
//! - quadrotor pose mismatches (move/land need airborne, takeoff needs
//!   grounded on that exact surface), open/close state mismatches, grabbing
//!   something already in a gripper, and loading a full basket →
//!   `POSE_CONFLICT`
//! - target out of room or outside the proximity closure → `NOT_NEAR`;
//!   room-to-room moves with no connecting door → `NOT_NEAR`, all connecting
//!   doors closed → `CLOSED_BLOCKING`
//! - gripper occupied for grab/open/close → `HANDS_FULL`; puton/putinto of an
//!   object the robot is not holding → `HANDS_EMPTY`
//! - a dog placing onto a high surface → `HEIGHT_LIMIT`
//!
//! Proximity effects: `movetowards` anchors the robot at the target's spot
//! (the deepest non-floor element of its support chain) and clears the
//! previous anchor; when a robot relocates, other robots anchored to it lose
//! that anchor. Room crossings take one step per hop and require an open
//! door. Landing and takeoff keep the quadrotor at its spot.

use crate::world::{
    Archetype, EntityId, EntityKind, Height, Loc, Pose, Scene, WorldError, WorldState,
};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum Verb {
    LandOn,
    Movetowards,
    TakeoffFrom,
    Open,
    Close,
    Grab,
    Putinto,
    Puton,
}

impl Verb {
    pub fn label(self) -> &'static str {
        match self {
            Verb::LandOn => "land_on",
            Verb::Movetowards => "movetowards",
            Verb::TakeoffFrom => "takeoff_from",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::Grab => "grab",
            Verb::Putinto => "putinto",
            Verb::Puton => "puton",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "land_on" => Some(Verb::LandOn),
            "movetowards" => Some(Verb::Movetowards),
            "takeoff_from" => Some(Verb::TakeoffFrom),
            "open" => Some(Verb::Open),
            "close" => Some(Verb::Close),
            "grab" => Some(Verb::Grab),
            "putinto" => Some(Verb::Putinto),
            "puton" => Some(Verb::Puton),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Verb::Putinto | Verb::Puton => 2,
            _ => 1,
        }
    }
}

/// Action lists per archetype, in grammar-table order.
pub fn archetype_verbs(archetype: Archetype) -> &'static [Verb] {
    match archetype {
        Archetype::Quadrotor => &[Verb::LandOn, Verb::Movetowards, Verb::TakeoffFrom],
        Archetype::RoboticDog => &[
            Verb::Open,
            Verb::Close,
            Verb::Grab,
            Verb::Putinto,
            Verb::Puton,
            Verb::Movetowards,
        ],
        Archetype::RoboticArm => &[Verb::Open, Verb::Close, Verb::Grab, Verb::Putinto, Verb::Puton],
    }
}

/// Entity kinds a verb slot accepts, regardless of archetype.
fn base_slot_kinds(verb: Verb, position: usize) -> &'static [EntityKind] {
    use EntityKind::*;
    match (verb, position) {
        (Verb::LandOn, 0) | (Verb::TakeoffFrom, 0) => &[Surface, Floor],
        (Verb::Movetowards, 0) => &[Object, Surface, Container, Door, Robot, Room, Floor],
        (Verb::Open, 0) | (Verb::Close, 0) => &[Container, Door],
        (Verb::Grab, 0) => &[Object],
        (Verb::Putinto, 0) | (Verb::Puton, 0) => &[Object],
        (Verb::Putinto, 1) => &[Container],
        // Placement targets are furniture; objects only sit on floors when a
        // scene starts them there.
        (Verb::Puton, 1) => &[Surface],
        _ => &[],
    }
}

/// Archetype-specific slot restriction on top of the base slots.
fn archetype_slot_kinds(archetype: Archetype, verb: Verb, position: usize) -> &'static [EntityKind] {
    use EntityKind::*;
    match (archetype, verb, position) {
        (Archetype::Quadrotor, Verb::Movetowards, 0) => &[Surface, Floor, Room],
        (Archetype::RoboticDog, Verb::Movetowards, 0) => {
            &[Object, Surface, Container, Door, Robot, Room]
        }
        (Archetype::RoboticArm, Verb::Open, 0) | (Archetype::RoboticArm, Verb::Close, 0) => {
            &[Container]
        }
        _ => base_slot_kinds(verb, position),
    }
}

/// A typed, arity-checked action instance.
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct Action {
    pub verb: Verb,
    pub args: Vec<EntityId>,
}

impl Action {
    pub fn unary(verb: Verb, arg: EntityId) -> Self {
        debug_assert_eq!(verb.arity(), 1);
        Action {
            verb,
            args: vec![arg],
        }
    }

    pub fn binary(verb: Verb, a: EntityId, b: EntityId) -> Self {
        debug_assert_eq!(verb.arity(), 2);
        Action {
            verb,
            args: vec![a, b],
        }
    }
}

/// Render to the canonical grammar text.
pub fn render_action(scene: &Scene, action: &Action) -> String {
    let name = |i: usize| scene.name_of(action.args[i]);
    match action.verb {
        Verb::Putinto => format!("[putinto] <{}> into <{}>", name(0), name(1)),
        Verb::Puton => format!("[puton] <{}> on <{}>", name(0), name(1)),
        v => format!("[{}] <{}>", v.label(), name(0)),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("no [verb] token in {0:?}")]
    MissingVerb(String),
    #[error("unknown verb {0:?}")]
    UnknownVerb(String),
    #[error("verb {verb:?} is not available to a {archetype}")]
    VerbNotSupported { verb: String, archetype: &'static str },
    #[error("verb {verb:?} takes {expected} argument(s), got {got}")]
    WrongArity {
        verb: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
}

/// Parse grammar text, tolerant of surrounding prose and whitespace:
/// the bracketed verb and the angle-bracketed arguments are extracted,
/// connector words between arguments are ignored.
pub fn parse_action(scene: &Scene, archetype: Archetype, text: &str) -> Result<Action, ParseError> {
    let open = text
        .find('[')
        .ok_or_else(|| ParseError::MissingVerb(text.to_string()))?;
    let close = text[open..]
        .find(']')
        .map(|i| open + i)
        .ok_or_else(|| ParseError::MissingVerb(text.to_string()))?;
    let verb_token = text[open + 1..close].trim().to_lowercase();
    let verb = Verb::parse(&verb_token).ok_or(ParseError::UnknownVerb(verb_token.clone()))?;
    if !archetype_verbs(archetype).contains(&verb) {
        return Err(ParseError::VerbNotSupported {
            verb: verb_token,
            archetype: archetype.label(),
        });
    }

    let mut args = Vec::new();
    let mut rest = &text[close + 1..];
    while let Some(start) = rest.find('<') {
        let Some(end) = rest[start..].find('>').map(|i| start + i) else {
            break;
        };
        args.push(rest[start + 1..end].to_string());
        rest = &rest[end + 1..];
    }
    if args.len() != verb.arity() {
        return Err(ParseError::WrongArity {
            verb: verb_token,
            expected: verb.arity(),
            got: args.len(),
        });
    }
    let mut resolved = Vec::with_capacity(args.len());
    for raw in &args {
        let token = crate::util::normalize_token(raw);
        let id = scene
            .lookup(&token)
            .ok_or_else(|| ParseError::UnknownEntity(raw.clone()))?;
        resolved.push(id);
    }
    Ok(Action {
        verb,
        args: resolved,
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum FailureReason {
    NotNear,
    HeightLimit,
    HandsFull,
    HandsEmpty,
    ClosedBlocking,
    WrongKind,
    NotSupportedByRobot,
    PoseConflict,
}

impl FailureReason {
    pub fn label(self) -> &'static str {
        match self {
            FailureReason::NotNear => "NOT_NEAR",
            FailureReason::HeightLimit => "HEIGHT_LIMIT",
            FailureReason::HandsFull => "HANDS_FULL",
            FailureReason::HandsEmpty => "HANDS_EMPTY",
            FailureReason::ClosedBlocking => "CLOSED_BLOCKING",
            FailureReason::WrongKind => "WRONG_KIND",
            FailureReason::NotSupportedByRobot => "NOT_SUPPORTED_BY_ROBOT",
            FailureReason::PoseConflict => "POSE_CONFLICT",
        }
    }
}

/// Result of checking an action against the current state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ValidationOutcome {
    pub executable: bool,
    pub reason: Option<FailureReason>,
    pub detail: String,
}

impl ValidationOutcome {
    pub fn ok() -> Self {
        ValidationOutcome {
            executable: true,
            reason: None,
            detail: String::new(),
        }
    }

    pub fn fail(reason: FailureReason, detail: impl Into<String>) -> Self {
        ValidationOutcome {
            executable: false,
            reason: Some(reason),
            detail: detail.into(),
        }
    }
}

macro_rules! fail {
    ($reason:expr, $($fmt:tt)*) => {
        return Ok(ValidationOutcome::fail($reason, format!($($fmt)*)))
    };
}

/// Pure precondition check. `Ok(outcome)` tells whether the action is
/// executable and why not; `Err` is reserved for malformed inputs (unknown
/// robot, arity mismatch).
pub fn validate(
    state: &WorldState,
    robot: EntityId,
    action: &Action,
) -> Result<ValidationOutcome, WorldError> {
    use FailureReason::*;

    let scene = state.scene();
    let info = scene
        .robot_info(robot)
        .ok_or_else(|| WorldError::UnknownRobot(scene.name_of(robot).to_string()))?;
    let rs = state.robot_state(robot)?;
    let archetype = info.archetype;
    let rname = scene.name_of(robot);

    if action.args.len() != action.verb.arity() {
        return Err(WorldError::MalformedRelation(format!(
            "arity mismatch for {}",
            action.verb.label()
        )));
    }
    if !archetype_verbs(archetype).contains(&action.verb) {
        fail!(
            NotSupportedByRobot,
            "a {} has no [{}] action",
            archetype.label(),
            action.verb.label()
        );
    }
    for (pos, &arg) in action.args.iter().enumerate() {
        let kind = scene.kind(arg);
        if !base_slot_kinds(action.verb, pos).contains(&kind) {
            fail!(
                WrongKind,
                "{} is a {}, which [{}] does not accept",
                scene.name_of(arg),
                kind.label(),
                action.verb.label()
            );
        }
        if !archetype_slot_kinds(archetype, action.verb, pos).contains(&kind) {
            fail!(
                NotSupportedByRobot,
                "a {} cannot [{}] a {}",
                archetype.label(),
                action.verb.label(),
                kind.label()
            );
        }
    }
    for &arg in &action.args {
        let own_load =
            action.verb == Verb::Movetowards && state.location(arg) == Some(Loc::HeldBy(robot));
        if arg == robot || own_load {
            fail!(WrongKind, "{rname} cannot target itself or its own load");
        }
        if state.hidden_in_closed(arg) {
            fail!(
                ClosedBlocking,
                "{} is shut inside a closed container",
                scene.name_of(arg)
            );
        }
    }

    match action.verb {
        Verb::Movetowards => {
            let target = action.args[0];
            if archetype == Archetype::Quadrotor && rs.pose != Pose::Airborne {
                fail!(PoseConflict, "{rname} must take off before moving");
            }
            if scene.kind(target) == EntityKind::Room {
                if target == rs.room {
                    fail!(WrongKind, "{rname} is already inside {}", scene.name_of(target));
                }
                let doors: Vec<_> = scene.doors_between(rs.room, target).collect();
                if doors.is_empty() {
                    fail!(
                        NotNear,
                        "no door connects {} to {}",
                        scene.name_of(rs.room),
                        scene.name_of(target)
                    );
                }
                if !doors.iter().any(|d| state.is_open(d.door)) {
                    fail!(
                        ClosedBlocking,
                        "every door between {} and {} is closed",
                        scene.name_of(rs.room),
                        scene.name_of(target)
                    );
                }
            } else if !in_same_room(state, rs.room, target) {
                fail!(
                    NotNear,
                    "{} is not in {}",
                    scene.name_of(target),
                    scene.name_of(rs.room)
                );
            }
        }
        Verb::LandOn => {
            let surface = action.args[0];
            if rs.pose != Pose::Airborne {
                fail!(PoseConflict, "{rname} is already grounded");
            }
            if !in_same_room(state, rs.room, surface) {
                fail!(
                    NotNear,
                    "{} is not in {}",
                    scene.name_of(surface),
                    scene.name_of(rs.room)
                );
            }
            if !state.is_near(robot, surface) {
                fail!(NotNear, "{rname} is not above {}", scene.name_of(surface));
            }
        }
        Verb::TakeoffFrom => {
            let surface = action.args[0];
            if rs.pose != Pose::Grounded {
                fail!(PoseConflict, "{rname} is already airborne");
            }
            if rs.perch != Some(surface) {
                fail!(
                    PoseConflict,
                    "{rname} is not perched on {}",
                    scene.name_of(surface)
                );
            }
        }
        Verb::Grab => {
            let target = action.args[0];
            if !in_same_room(state, rs.room, target) || !state.is_near(robot, target) {
                fail!(
                    NotNear,
                    "{} is outside {rname}'s manipulation range",
                    scene.name_of(target)
                );
            }
            if let Some(Loc::HeldBy(holder)) = state.location(target) {
                fail!(
                    PoseConflict,
                    "{} is currently held by {}",
                    scene.name_of(target),
                    scene.name_of(holder)
                );
            }
            if let Some(held) = rs.held {
                fail!(
                    HandsFull,
                    "{rname} is already holding {}",
                    scene.name_of(held)
                );
            }
        }
        Verb::Puton => {
            let (object, surface) = (action.args[0], action.args[1]);
            if rs.held != Some(object) {
                fail!(
                    HandsEmpty,
                    "{rname} is not holding {}",
                    scene.name_of(object)
                );
            }
            if !in_same_room(state, rs.room, surface) || !state.is_near(robot, surface) {
                fail!(NotNear, "{rname} is not near {}", scene.name_of(surface));
            }
            if archetype == Archetype::RoboticDog
                && scene.info(surface).height == Some(Height::High)
            {
                fail!(
                    HeightLimit,
                    "{} is a high surface, beyond a robotic_dog's reach",
                    scene.name_of(surface)
                );
            }
        }
        Verb::Putinto => {
            let (object, container) = (action.args[0], action.args[1]);
            if rs.held != Some(object) {
                fail!(
                    HandsEmpty,
                    "{rname} is not holding {}",
                    scene.name_of(object)
                );
            }
            if !in_same_room(state, rs.room, container) || !state.is_near(robot, container) {
                fail!(NotNear, "{rname} is not near {}", scene.name_of(container));
            }
            if !state.is_open(container) {
                fail!(ClosedBlocking, "{} is closed", scene.name_of(container));
            }
            if let Some(cap) = scene.info(container).capacity {
                let load = state.contents(container);
                if load.len() >= cap {
                    fail!(
                        PoseConflict,
                        "{} already holds {}",
                        scene.name_of(container),
                        scene.name_of(load[0])
                    );
                }
            }
        }
        Verb::Open | Verb::Close => {
            let target = action.args[0];
            if scene.info(target).always_open {
                fail!(WrongKind, "{} has no lid to operate", scene.name_of(target));
            }
            if !in_same_room(state, rs.room, target) || !state.is_near(robot, target) {
                fail!(NotNear, "{rname} is not near {}", scene.name_of(target));
            }
            if rs.held.is_some() {
                fail!(HandsFull, "{rname} needs a free gripper");
            }
            let is_open = state.is_open(target);
            if action.verb == Verb::Open && is_open {
                fail!(PoseConflict, "{} is already open", scene.name_of(target));
            }
            if action.verb == Verb::Close && !is_open {
                fail!(PoseConflict, "{} is already closed", scene.name_of(target));
            }
        }
    }
    Ok(ValidationOutcome::ok())
}

fn in_same_room(state: &WorldState, room: EntityId, entity: EntityId) -> bool {
    match state.scene().kind(entity) {
        EntityKind::Door => state
            .scene()
            .doors()
            .iter()
            .any(|d| d.door == entity && (d.rooms.0 == room || d.rooms.1 == room)),
        _ => state.room_of(entity) == Some(room),
    }
}

// ---------------------------------------------------------------------------
// Feasible-action generation
// ---------------------------------------------------------------------------

/// Comparison matching the rendered-text order without allocating: the verb
/// token inside `[...]` orders first, then the argument names.
pub(crate) fn action_text_order(scene: &Scene, a: &Action, b: &Action) -> std::cmp::Ordering {
    a.verb
        .label()
        .cmp(b.verb.label())
        .then_with(|| scene.name_of(a.args[0]).cmp(scene.name_of(b.args[0])))
        .then_with(|| {
            let second = |x: &Action| x.args.get(1).map(|&e| scene.name_of(e));
            second(a).cmp(&second(b))
        })
}

/// All actions the robot can execute right now, by the predefined rules:
/// grammar candidates filtered through [`validate`], sorted by rendered text.
pub fn feasible_actions(state: &WorldState, robot: EntityId) -> Result<Vec<Action>, WorldError> {
    let scene = state.scene();
    let info = scene
        .robot_info(robot)
        .ok_or_else(|| WorldError::UnknownRobot(scene.name_of(robot).to_string()))?;
    let rs = state.robot_state(robot)?;

    let mut candidates: Vec<Action> = Vec::new();
    for &verb in archetype_verbs(info.archetype) {
        match verb.arity() {
            1 => {
                let kinds = archetype_slot_kinds(info.archetype, verb, 0);
                for e in scene.entities() {
                    if kinds.contains(&scene.kind(e)) {
                        candidates.push(Action::unary(verb, e));
                    }
                }
            }
            _ => {
                // Binary verbs require a held object; skip the quadratic
                // enumeration the validator would reject anyway.
                let Some(held) = rs.held else { continue };
                let kinds = archetype_slot_kinds(info.archetype, verb, 1);
                for e in scene.entities() {
                    if kinds.contains(&scene.kind(e)) {
                        candidates.push(Action::binary(verb, held, e));
                    }
                }
            }
        }
    }

    let mut feasible: Vec<Action> = Vec::new();
    for action in candidates {
        if validate(state, robot, &action)?.executable {
            feasible.push(action);
        }
    }
    let scene = state.scene();
    feasible.sort_by(|a, b| action_text_order(scene, a, b));
    Ok(feasible)
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum ApplyError {
    #[error("precondition violated: {} ({})", outcome.reason.map(FailureReason::label).unwrap_or("?"), outcome.detail)]
    PreconditionViolated { outcome: ValidationOutcome },
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Execute a validated action, producing the successor state. The input
/// state is untouched; calling with a non-executable action is an error.
pub fn apply(state: &WorldState, robot: EntityId, action: &Action) -> Result<WorldState, ApplyError> {
    let outcome = validate(state, robot, action)?;
    if !outcome.executable {
        return Err(ApplyError::PreconditionViolated { outcome });
    }
    Ok(apply_effects(state, robot, action))
}

/// Effect application for actions already known to be feasible (drawn from
/// [`feasible_actions`] of this exact state). Search code uses this to skip
/// re-validation; the soundness and invariant-preservation property tests
/// guard the contract.
pub(crate) fn apply_feasible(state: &WorldState, robot: EntityId, action: &Action) -> WorldState {
    apply_effects(state, robot, action)
}

fn apply_effects(state: &WorldState, robot: EntityId, action: &Action) -> WorldState {
    let scene = state.scene().clone();
    let slot = scene.robot_slot(robot).expect("validated robot");
    let mut next = state.clone();

    match action.verb {
        Verb::Movetowards => {
            let target = action.args[0];
            if scene.kind(target) == EntityKind::Room {
                let rs = next.robot_state_mut(slot);
                rs.room = target;
                rs.anchors = Vec::new();
            } else {
                let spot = state.resolve_spot(target);
                let rs = next.robot_state_mut(slot);
                rs.anchors = vec![spot];
            }
            // The robot left its old spot: anyone anchored to it is no
            // longer near it.
            for (i, other) in next.core.robots.iter_mut().enumerate() {
                if i != slot {
                    other.anchors.retain(|&a| a != robot);
                }
            }
        }
        Verb::LandOn => {
            let surface = action.args[0];
            let rs = next.robot_state_mut(slot);
            rs.pose = Pose::Grounded;
            rs.perch = Some(surface);
            rs.anchors = vec![surface];
        }
        Verb::TakeoffFrom => {
            let surface = action.args[0];
            let rs = next.robot_state_mut(slot);
            rs.pose = Pose::Airborne;
            rs.perch = None;
            rs.anchors = vec![surface];
        }
        Verb::Grab => {
            let target = action.args[0];
            next.core.locations[target.index()] = Some(Loc::HeldBy(robot));
            next.robot_state_mut(slot).held = Some(target);
            // A floor-standing object that served as an anchor has left its
            // spot.
            for other in next.core.robots.iter_mut() {
                other.anchors.retain(|&a| a != target);
            }
        }
        Verb::Puton => {
            let (object, surface) = (action.args[0], action.args[1]);
            next.core.locations[object.index()] = Some(Loc::On(surface));
            next.robot_state_mut(slot).held = None;
        }
        Verb::Putinto => {
            let (object, container) = (action.args[0], action.args[1]);
            next.core.locations[object.index()] = Some(Loc::In(container));
            next.robot_state_mut(slot).held = None;
        }
        Verb::Open => {
            next.core.open[action.args[0].index()] = true;
        }
        Verb::Close => {
            next.core.open[action.args[0].index()] = false;
        }
    }

    next
}

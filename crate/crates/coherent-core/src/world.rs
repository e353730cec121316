//! Symbolic scene graph: entities, relations, world state, and the
//! partial-observability projection.
//!
//! A scene is an immutable index ([`Scene`]) shared behind an `Arc`; the
//! dynamic part of a [`WorldState`] is a compact value type, so states clone
//! cheaply (search code holds many of them) and hash deterministically.
//!
//! Spatial model: rooms connected by doors, plus a `NEAR` predicate per robot.
//! There are no coordinates. A robot is near an *anchor* entity (set by
//! `movetowards` and landing), and near everything co-located with an anchor:
//! objects on an anchored surface, contents of an anchored open container,
//! items held by or loaded on an anchored robot.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::tasks::{RelationSpec, SceneSpec};
use crate::util::fnv1a64;

/// Handle to an entity interned in a [`Scene`]. Only meaningful together with
/// the scene that produced it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EntityId(pub(crate) u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum EntityKind {
    Object,
    Surface,
    Container,
    Door,
    Floor,
    Room,
    Robot,
}

impl EntityKind {
    pub fn label(self) -> &'static str {
        match self {
            EntityKind::Object => "object",
            EntityKind::Surface => "surface",
            EntityKind::Container => "container",
            EntityKind::Door => "door",
            EntityKind::Floor => "floor",
            EntityKind::Room => "room",
            EntityKind::Robot => "robot",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Height {
    Low,
    High,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Archetype {
    Quadrotor,
    RoboticDog,
    RoboticArm,
}

impl Archetype {
    pub fn label(self) -> &'static str {
        match self {
            Archetype::Quadrotor => "quadrotor",
            Archetype::RoboticDog => "robotic_dog",
            Archetype::RoboticArm => "robotic_arm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quadrotor" => Some(Archetype::Quadrotor),
            "robotic_dog" => Some(Archetype::RoboticDog),
            "robotic_arm" => Some(Archetype::RoboticArm),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Pose {
    Grounded,
    Airborne,
}

/// Relation predicates. `OPEN`/`CLOSED` are unary; the rest are binary.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum Predicate {
    On,
    In,
    HeldBy,
    Near,
    InsideRoom,
    Connects,
    Open,
    Closed,
}

impl Predicate {
    pub fn label(self) -> &'static str {
        match self {
            Predicate::On => "ON",
            Predicate::In => "IN",
            Predicate::HeldBy => "HELD_BY",
            Predicate::Near => "NEAR",
            Predicate::InsideRoom => "INSIDE_ROOM",
            Predicate::Connects => "CONNECTS",
            Predicate::Open => "OPEN",
            Predicate::Closed => "CLOSED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ON" => Some(Predicate::On),
            "IN" => Some(Predicate::In),
            "HELD_BY" => Some(Predicate::HeldBy),
            "NEAR" => Some(Predicate::Near),
            "INSIDE_ROOM" => Some(Predicate::InsideRoom),
            "CONNECTS" => Some(Predicate::Connects),
            "OPEN" => Some(Predicate::Open),
            "CLOSED" => Some(Predicate::Closed),
        _ => None,
        }
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Predicate::Open | Predicate::Closed)
    }
}

/// A single `PREDICATE(subject, object)` fact. `object` is `None` for the
/// unary predicates.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct Relation {
    pub predicate: Predicate,
    pub subject: EntityId,
    pub object: Option<EntityId>,
}

impl Relation {
    pub fn binary(predicate: Predicate, subject: EntityId, object: EntityId) -> Self {
        Relation {
            predicate,
            subject,
            object: Some(object),
        }
    }

    pub fn unary(predicate: Predicate, subject: EntityId) -> Self {
        Relation {
            predicate,
            subject,
            object: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("unknown robot: {0}")]
    UnknownRobot(String),
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error("malformed relation text: {0}")]
    MalformedRelation(String),
}

// ---------------------------------------------------------------------------
// Scene: the immutable index
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct EntityInfo {
    pub name: String,
    pub kind: EntityKind,
    /// Surfaces only.
    pub height: Option<Height>,
    /// Room this entity structurally belongs to (rooms map to themselves;
    /// doors and movable objects have none).
    pub home_room: Option<EntityId>,
    /// Containers that cannot be closed (a quadrotor basket).
    pub always_open: bool,
    /// Containers with a load limit (a quadrotor basket holds one object).
    pub capacity: Option<usize>,
}

#[derive(Debug)]
pub struct DoorInfo {
    pub door: EntityId,
    pub rooms: (EntityId, EntityId),
}

#[derive(Debug)]
pub struct RobotInfo {
    pub robot: EntityId,
    pub archetype: Archetype,
    /// Basket entity permanently attached to a quadrotor.
    pub basket: Option<EntityId>,
    /// Fixed anchor set of a stationary arm (its workspace).
    pub workspace: Vec<EntityId>,
}

/// Immutable scene index: entity table, room/door topology, robot roster.
#[derive(Debug)]
pub struct Scene {
    pub name: String,
    entities: Vec<EntityInfo>,
    by_name: HashMap<String, EntityId>,
    rooms: Vec<EntityId>,
    floors: HashMap<EntityId, EntityId>,
    doors: Vec<DoorInfo>,
    robots: Vec<RobotInfo>,
    robot_slot: HashMap<EntityId, usize>,
}

impl Scene {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn info(&self, id: EntityId) -> &EntityInfo {
        &self.entities[id.index()]
    }

    pub fn name_of(&self, id: EntityId) -> &str {
        &self.entities[id.index()].name
    }

    pub fn kind(&self, id: EntityId) -> EntityKind {
        self.entities[id.index()].kind
    }

    /// Look up an entity by its (already normalized) name.
    pub fn lookup(&self, name: &str) -> Option<EntityId> {
        self.by_name.get(name).copied()
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn rooms(&self) -> &[EntityId] {
        &self.rooms
    }

    pub fn floor_of_room(&self, room: EntityId) -> EntityId {
        self.floors[&room]
    }

    pub fn doors(&self) -> &[DoorInfo] {
        &self.doors
    }

    /// Doors connecting two rooms, in scene order.
    pub fn doors_between(&self, a: EntityId, b: EntityId) -> impl Iterator<Item = &DoorInfo> {
        self.doors
            .iter()
            .filter(move |d| d.rooms == (a, b) || d.rooms == (b, a))
    }

    pub fn adjacent_rooms(&self, room: EntityId) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self
            .doors
            .iter()
            .filter_map(|d| {
                if d.rooms.0 == room {
                    Some(d.rooms.1)
                } else if d.rooms.1 == room {
                    Some(d.rooms.0)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn robots(&self) -> &[RobotInfo] {
        &self.robots
    }

    pub fn robot_info(&self, robot: EntityId) -> Option<&RobotInfo> {
        self.robot_slot.get(&robot).map(|&i| &self.robots[i])
    }

    pub fn robot_slot(&self, robot: EntityId) -> Option<usize> {
        self.robot_slot.get(&robot).copied()
    }

    /// Resolve a free-text token against the entity table (normalization
    /// applied by the caller via [`crate::util::normalize_token`]).
    pub fn resolve(&self, raw: &str) -> Result<EntityId, WorldError> {
        let token = crate::util::normalize_token(raw);
        self.lookup(&token)
            .ok_or(WorldError::UnknownEntity(token))
    }
}

// ---------------------------------------------------------------------------
// WorldState
// ---------------------------------------------------------------------------

/// Where a movable entity (object or container) currently is.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Loc {
    On(EntityId),
    In(EntityId),
    HeldBy(EntityId),
}

#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub struct RobotState {
    pub room: EntityId,
    pub pose: Pose,
    /// Surface or floor a grounded quadrotor sits on.
    pub perch: Option<EntityId>,
    pub held: Option<EntityId>,
    /// Sorted anchor set; the entities this robot is stationed at.
    pub anchors: Vec<EntityId>,
}

/// The dynamic portion of a world state. Cheap to clone and hash.
#[derive(Clone, PartialEq, Eq, Debug, Hash)]
pub(crate) struct StateCore {
    pub locations: Vec<Option<Loc>>,
    pub open: Vec<bool>,
    pub robots: Vec<RobotState>,
}

/// An immutable snapshot of the world. Transitions produce new values.
#[derive(Clone)]
pub struct WorldState {
    scene: Arc<Scene>,
    pub(crate) core: StateCore,
}

impl PartialEq for WorldState {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.scene, &other.scene) && self.core == other.core
    }
}
impl Eq for WorldState {}

impl fmt::Debug for WorldState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WorldState({})", self.render_relations().join("; "))
    }
}

impl WorldState {
    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn location(&self, e: EntityId) -> Option<Loc> {
        self.core.locations[e.index()]
    }

    pub fn is_open(&self, e: EntityId) -> bool {
        self.scene.info(e).always_open || self.core.open[e.index()]
    }

    pub fn robot_state(&self, robot: EntityId) -> Result<&RobotState, WorldError> {
        let slot = self
            .scene
            .robot_slot(robot)
            .ok_or_else(|| WorldError::UnknownRobot(self.scene.name_of(robot).to_string()))?;
        Ok(&self.core.robots[slot])
    }

    pub(crate) fn robot_state_mut(&mut self, slot: usize) -> &mut RobotState {
        &mut self.core.robots[slot]
    }

    /// The room an entity is currently in, following its location chain.
    /// Rooms map to themselves; doors have no single room.
    pub fn room_of(&self, e: EntityId) -> Option<EntityId> {
        let mut cur = e;
        for _ in 0..self.scene.entity_count() + 1 {
            match self.scene.kind(cur) {
                EntityKind::Room => return Some(cur),
                EntityKind::Door => return None,
                EntityKind::Robot => {
                    return Some(self.robot_state(cur).expect("robot state").room)
                }
                EntityKind::Floor | EntityKind::Surface => return self.scene.info(cur).home_room,
                EntityKind::Object | EntityKind::Container => match self.location(cur) {
                    Some(Loc::On(t)) | Some(Loc::In(t)) | Some(Loc::HeldBy(t)) => cur = t,
                    None => return self.scene.info(cur).home_room,
                },
            }
        }
        None
    }

    /// True when the entity sits (transitively) inside a closed container.
    pub fn hidden_in_closed(&self, e: EntityId) -> bool {
        let mut cur = e;
        for _ in 0..self.scene.entity_count() + 1 {
            match self.location(cur) {
                Some(Loc::In(c)) => {
                    if !self.is_open(c) {
                        return true;
                    }
                    cur = c;
                }
                Some(Loc::On(t)) => cur = t,
                Some(Loc::HeldBy(_)) | None => return false,
            }
        }
        false
    }

    /// Support chain of an entity: itself, then what carries it, upward.
    /// A grounded quadrotor continues the chain through its perch.
    pub fn anchor_chain(&self, e: EntityId) -> Vec<EntityId> {
        let mut chain = vec![e];
        let mut cur = e;
        for _ in 0..self.scene.entity_count() + 1 {
            let next = match self.scene.kind(cur) {
                EntityKind::Object | EntityKind::Container => match self.location(cur) {
                    Some(Loc::On(t)) | Some(Loc::In(t)) | Some(Loc::HeldBy(t)) => Some(t),
                    None => None,
                },
                EntityKind::Robot => self.robot_state(cur).expect("robot state").perch,
                _ => None,
            };
            match next {
                Some(t) => {
                    chain.push(t);
                    cur = t;
                }
                None => break,
            }
        }
        chain
    }

    /// The "spot" a movetowards target resolves to: the deepest element of
    /// the support chain that is not a floor. Moving toward an apple on a
    /// table anchors the robot at the table, so it stays near the table
    /// after picking the apple up.
    pub fn resolve_spot(&self, target: EntityId) -> EntityId {
        let chain = self.anchor_chain(target);
        chain
            .iter()
            .rev()
            .copied()
            .find(|&e| self.scene.kind(e) != EntityKind::Floor)
            .unwrap_or(target)
    }

    /// Proximity closure: the robot is near its anchors and everything whose
    /// support chain passes through one (or through the robot itself).
    pub fn is_near(&self, robot: EntityId, target: EntityId) -> bool {
        let rs = match self.robot_state(robot) {
            Ok(rs) => rs,
            Err(_) => return false,
        };
        let chain = self.anchor_chain(target);
        chain
            .iter()
            .any(|e| *e == robot || rs.anchors.binary_search(e).is_ok())
    }

    /// Objects currently loaded in a container.
    pub fn contents(&self, container: EntityId) -> Vec<EntityId> {
        self.scene
            .entities()
            .filter(|&e| self.location(e) == Some(Loc::In(container)))
            .collect()
    }

    // -- full relation view --------------------------------------------------

    /// Derive the complete relation set of this state, sorted by rendered
    /// text. `NEAR` facts reflect explicit anchors only (the closure is a
    /// query, not a stored fact).
    pub fn relations(&self) -> Vec<Relation> {
        let scene = &self.scene;
        let mut rels: Vec<Relation> = Vec::new();
        for e in scene.entities() {
            match scene.kind(e) {
                EntityKind::Object | EntityKind::Container => {
                    if let Some(loc) = self.location(e) {
                        rels.push(match loc {
                            Loc::On(t) => Relation::binary(Predicate::On, e, t),
                            Loc::In(t) => Relation::binary(Predicate::In, e, t),
                            Loc::HeldBy(t) => Relation::binary(Predicate::HeldBy, e, t),
                        });
                    }
                    if scene.kind(e) == EntityKind::Container {
                        rels.push(Relation::unary(
                            if self.is_open(e) {
                                Predicate::Open
                            } else {
                                Predicate::Closed
                            },
                            e,
                        ));
                    }
                }
                EntityKind::Surface | EntityKind::Floor => {
                    if let Some(room) = scene.info(e).home_room {
                        rels.push(Relation::binary(Predicate::InsideRoom, e, room));
                    }
                }
                EntityKind::Door => {
                    let door = scene
                        .doors()
                        .iter()
                        .find(|d| d.door == e)
                        .expect("door info");
                    rels.push(Relation::binary(Predicate::Connects, e, door.rooms.0));
                    rels.push(Relation::binary(Predicate::Connects, e, door.rooms.1));
                    rels.push(Relation::unary(
                        if self.is_open(e) {
                            Predicate::Open
                        } else {
                            Predicate::Closed
                        },
                        e,
                    ));
                }
                EntityKind::Robot => {
                    let rs = self.robot_state(e).expect("robot state");
                    rels.push(Relation::binary(Predicate::InsideRoom, e, rs.room));
                    if let Some(perch) = rs.perch {
                        rels.push(Relation::binary(Predicate::On, e, perch));
                    }
                    for &a in &rs.anchors {
                        if !self.hidden_in_closed(a) {
                            rels.push(Relation::binary(Predicate::Near, e, a));
                        }
                    }
                }
                EntityKind::Room => {}
            }
        }
        self.sort_relations(&mut rels);
        rels
    }

    fn sort_relations(&self, rels: &mut [Relation]) {
        rels.sort_by_key(|r| self.render_relation(r));
    }

    pub fn render_relation(&self, r: &Relation) -> String {
        match r.object {
            Some(obj) => format!(
                "{}({}, {})",
                r.predicate.label(),
                self.scene.name_of(r.subject),
                self.scene.name_of(obj)
            ),
            None => format!("{}({})", r.predicate.label(), self.scene.name_of(r.subject)),
        }
    }

    pub fn render_relations(&self) -> Vec<String> {
        self.relations()
            .iter()
            .map(|r| self.render_relation(r))
            .collect()
    }

    /// Parse one rendered relation line back into a [`Relation`].
    pub fn parse_relation(&self, line: &str) -> Result<Relation, WorldError> {
        let line = line.trim();
        let open = line
            .find('(')
            .ok_or_else(|| WorldError::MalformedRelation(line.to_string()))?;
        if !line.ends_with(')') {
            return Err(WorldError::MalformedRelation(line.to_string()));
        }
        let predicate = Predicate::parse(&line[..open])
            .ok_or_else(|| WorldError::MalformedRelation(line.to_string()))?;
        let inner = &line[open + 1..line.len() - 1];
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        match (predicate.is_unary(), parts.as_slice()) {
            (true, [subject]) => Ok(Relation::unary(predicate, self.scene.resolve(subject)?)),
            (false, [subject, object]) => Ok(Relation::binary(
                predicate,
                self.scene.resolve(subject)?,
                self.scene.resolve(object)?,
            )),
            _ => Err(WorldError::MalformedRelation(line.to_string())),
        }
    }

    /// Membership test against the derived relation set, without building it.
    pub fn holds(&self, r: &Relation) -> bool {
        match (r.predicate, r.object) {
            (Predicate::On, Some(t)) => {
                if self.scene.kind(r.subject) == EntityKind::Robot {
                    self.robot_state(r.subject)
                        .map(|rs| rs.perch == Some(t))
                        .unwrap_or(false)
                } else {
                    self.location(r.subject) == Some(Loc::On(t))
                }
            }
            (Predicate::In, Some(t)) => self.location(r.subject) == Some(Loc::In(t)),
            (Predicate::HeldBy, Some(t)) => self.location(r.subject) == Some(Loc::HeldBy(t)),
            (Predicate::InsideRoom, Some(t)) => self.room_of(r.subject) == Some(t),
            (Predicate::Near, Some(t)) => self
                .robot_state(r.subject)
                .map(|rs| rs.anchors.binary_search(&t).is_ok() && !self.hidden_in_closed(t))
                .unwrap_or(false),
            (Predicate::Connects, Some(t)) => self
                .scene
                .doors()
                .iter()
                .any(|d| d.door == r.subject && (d.rooms.0 == t || d.rooms.1 == t)),
            (Predicate::Open, None) => {
                matches!(
                    self.scene.kind(r.subject),
                    EntityKind::Container | EntityKind::Door
                ) && self.is_open(r.subject)
            }
            (Predicate::Closed, None) => {
                matches!(
                    self.scene.kind(r.subject),
                    EntityKind::Container | EntityKind::Door
                ) && !self.is_open(r.subject)
            }
            _ => false,
        }
    }

    /// Stable digest over the full rendered relation list.
    pub fn digest(&self) -> u64 {
        fnv1a64(self.render_relations().join("\n").as_bytes())
    }

    pub fn digest_hex(&self) -> String {
        format!("{:016x}", self.digest())
    }

    /// Fast dedup key over the compact state (not the rendered view).
    /// Suitable for search visited-sets; not part of the trace format.
    pub(crate) fn core_key(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::with_capacity(self.scene.entity_count() * 3 + 16);
        for loc in &self.core.locations {
            match loc {
                None => bytes.extend_from_slice(&[0xff, 0xff, 0xff]),
                Some(Loc::On(t)) => {
                    bytes.push(1);
                    bytes.extend_from_slice(&(t.0 as u16).to_le_bytes());
                }
                Some(Loc::In(t)) => {
                    bytes.push(2);
                    bytes.extend_from_slice(&(t.0 as u16).to_le_bytes());
                }
                Some(Loc::HeldBy(t)) => {
                    bytes.push(3);
                    bytes.extend_from_slice(&(t.0 as u16).to_le_bytes());
                }
            }
        }
        for &o in &self.core.open {
            bytes.push(o as u8);
        }
        for rs in &self.core.robots {
            bytes.extend_from_slice(&(rs.room.0 as u16).to_le_bytes());
            bytes.push(matches!(rs.pose, Pose::Airborne) as u8);
            bytes.extend_from_slice(&rs.perch.map(|p| p.0 as u16).unwrap_or(0xffff).to_le_bytes());
            bytes.extend_from_slice(&rs.held.map(|h| h.0 as u16).unwrap_or(0xffff).to_le_bytes());
            bytes.push(rs.anchors.len() as u8);
            for a in &rs.anchors {
                bytes.extend_from_slice(&(a.0 as u16).to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }

    /// Check the structural invariants that transitions must preserve.
    /// Used by tests; transitions are written so these cannot break.
    pub fn check_invariants(&self) -> Result<(), String> {
        let scene = &self.scene;
        for e in scene.entities() {
            match scene.kind(e) {
                EntityKind::Object | EntityKind::Container => {
                    let loc = self
                        .location(e)
                        .ok_or_else(|| format!("{} has no location", scene.name_of(e)))?;
                    match loc {
                        Loc::On(t) => {
                            if !matches!(scene.kind(t), EntityKind::Surface | EntityKind::Floor) {
                                return Err(format!(
                                    "ON target {} is not a surface/floor",
                                    scene.name_of(t)
                                ));
                            }
                        }
                        Loc::In(c) => {
                            if scene.kind(c) != EntityKind::Container {
                                return Err(format!(
                                    "IN target {} is not a container",
                                    scene.name_of(c)
                                ));
                            }
                            if let Some(cap) = scene.info(c).capacity {
                                if self.contents(c).len() > cap {
                                    return Err(format!(
                                        "{} over capacity",
                                        scene.name_of(c)
                                    ));
                                }
                            }
                        }
                        Loc::HeldBy(r) => {
                            if scene.kind(r) != EntityKind::Robot {
                                return Err(format!(
                                    "HELD_BY target {} is not a robot",
                                    scene.name_of(r)
                                ));
                            }
                        }
                    }
                }
                _ => {
                    if self.location(e).is_some() {
                        return Err(format!(
                            "{} ({:?}) must not have a location",
                            scene.name_of(e),
                            scene.kind(e)
                        ));
                    }
                }
            }
        }
        for info in scene.robots() {
            let rs = self.robot_state(info.robot).map_err(|e| e.to_string())?;
            if scene.kind(rs.room) != EntityKind::Room {
                return Err("robot room is not a room".into());
            }
            match info.archetype {
                Archetype::Quadrotor => {
                    if (rs.pose == Pose::Grounded) != rs.perch.is_some() {
                        return Err("quadrotor pose/perch mismatch".into());
                    }
                    if rs.held.is_some() {
                        return Err("quadrotor cannot hold objects".into());
                    }
                }
                _ => {
                    if rs.pose != Pose::Grounded || rs.perch.is_some() {
                        return Err("ground robot must be grounded without perch".into());
                    }
                }
            }
            if let Some(h) = rs.held {
                if self.location(h) != Some(Loc::HeldBy(info.robot)) {
                    return Err("held/location mismatch".into());
                }
            }
            let mut sorted = rs.anchors.clone();
            sorted.sort();
            sorted.dedup();
            if sorted != rs.anchors {
                return Err("anchors not sorted/deduped".into());
            }
        }
        // Held objects must point back at a robot that records them.
        for e in scene.entities() {
            if let Some(Loc::HeldBy(r)) = self.location(e) {
                let rs = self.robot_state(r).map_err(|err| err.to_string())?;
                let in_basket = scene
                    .robot_info(r)
                    .map(|info| info.basket == Some(e))
                    .unwrap_or(false);
                if !in_basket && rs.held != Some(e) {
                    return Err(format!(
                        "{} held by {} but not recorded",
                        scene.name_of(e),
                        scene.name_of(r)
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Observation
// ---------------------------------------------------------------------------

/// What one robot can currently see: relations restricted to its room,
/// excluding anything inside a closed container.
#[derive(Clone, Debug)]
pub struct Observation {
    pub observer: EntityId,
    pub room: EntityId,
    pub visible_relations: Vec<Relation>,
}

/// Entity visibility from a given room: rooms are always mentionable (the
/// floor plan is common knowledge), doors are visible from both sides,
/// everything else must be in the room and not shut away.
fn visible_from(state: &WorldState, room: EntityId, e: EntityId) -> bool {
    match state.scene().kind(e) {
        EntityKind::Room => true,
        EntityKind::Door => state
            .scene()
            .doors()
            .iter()
            .any(|d| d.door == e && (d.rooms.0 == room || d.rooms.1 == room)),
        _ => state.room_of(e) == Some(room) && !state.hidden_in_closed(e),
    }
}

/// Project the world onto one robot's viewpoint.
pub fn observe(state: &WorldState, robot: EntityId) -> Result<Observation, WorldError> {
    let rs = state.robot_state(robot)?;
    let room = rs.room;
    let visible_relations = state
        .relations()
        .into_iter()
        .filter(|r| {
            visible_from(state, room, r.subject)
                && r.object.is_none_or(|o| visible_from(state, room, o))
        })
        .collect();
    Ok(Observation {
        observer: robot,
        room,
        visible_relations,
    })
}

/// Render an observation as one relation per line (already sorted).
pub fn render_observation(state: &WorldState, obs: &Observation) -> String {
    obs.visible_relations
        .iter()
        .map(|r| state.render_relation(r))
        .collect::<Vec<_>>()
        .join("\n")
}

/// True iff every goal relation is present in the state.
/// The empty goal is vacuously true.
pub fn check_goal(state: &WorldState, goal: &[Relation]) -> bool {
    goal.iter().all(|r| state.holds(r))
}

// ---------------------------------------------------------------------------
// Scene construction
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
#[error("schema error at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn valid_id(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().unwrap().is_ascii_lowercase()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

struct SceneBuilder {
    entities: Vec<EntityInfo>,
    by_name: HashMap<String, EntityId>,
}

impl SceneBuilder {
    fn add(&mut self, name: &str, kind: EntityKind, path: &str) -> Result<EntityId, SchemaError> {
        if !valid_id(name) {
            return Err(SchemaError::new(
                path,
                format!("invalid id {name:?}: lowercase letters, digits, and underscores only"),
            ));
        }
        if self.by_name.contains_key(name) {
            return Err(SchemaError::new(path, format!("duplicate id {name:?}")));
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(EntityInfo {
            name: name.to_string(),
            kind,
            height: None,
            home_room: None,
            always_open: false,
            capacity: None,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    fn get(&self, name: &str, path: &str) -> Result<EntityId, SchemaError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| SchemaError::new(path, format!("reference to unknown id {name:?}")))
    }
}

/// Build a validated initial [`WorldState`] from a scene description.
/// Deterministic: entity interning order follows the file.
pub fn build_scene(spec: &SceneSpec) -> Result<WorldState, SchemaError> {
    if spec.schema != 1 {
        return Err(SchemaError::new(
            "schema",
            format!("unsupported schema version {}", spec.schema),
        ));
    }
    if spec.rooms.is_empty() {
        return Err(SchemaError::new("rooms", "at least one room is required"));
    }
    if spec.entities.is_empty() {
        return Err(SchemaError::new(
            "entities",
            "at least one entity is required",
        ));
    }
    if spec.robots.is_empty() {
        return Err(SchemaError::new("robots", "at least one robot is required"));
    }

    let mut b = SceneBuilder {
        entities: Vec::new(),
        by_name: HashMap::new(),
    };

    let mut rooms = Vec::new();
    let mut floors = HashMap::new();
    for (i, room) in spec.rooms.iter().enumerate() {
        let room_id = b.add(room, EntityKind::Room, &format!("rooms[{i}]"))?;
        b.entities[room_id.index()].home_room = Some(room_id);
        let floor_id = b.add(
            &format!("{room}_floor"),
            EntityKind::Floor,
            &format!("rooms[{i}]"),
        )?;
        b.entities[floor_id.index()].home_room = Some(room_id);
        rooms.push(room_id);
        floors.insert(room_id, floor_id);
    }

    let mut doors = Vec::new();
    let mut open_flags: Vec<(EntityId, bool)> = Vec::new();
    for (i, door) in spec.doors.iter().enumerate() {
        let path = format!("doors[{i}]");
        let id = b.add(&door.id, EntityKind::Door, &path)?;
        if door.connects.len() != 2 {
            return Err(SchemaError::new(&path, "a door connects exactly two rooms"));
        }
        let a = b.get(&door.connects[0], &path)?;
        let bb = b.get(&door.connects[1], &path)?;
        if a == bb {
            return Err(SchemaError::new(&path, "a door must connect distinct rooms"));
        }
        for r in [a, bb] {
            if b.entities[r.index()].kind != EntityKind::Room {
                return Err(SchemaError::new(
                    &path,
                    format!("{:?} is not a room", b.entities[r.index()].name),
                ));
            }
        }
        doors.push(DoorInfo {
            door: id,
            rooms: (a, bb),
        });
        open_flags.push((id, door.open));
    }

    // Declared entities: pass 1 interns ids, pass 2 resolves locations.
    let mut declared: Vec<EntityId> = Vec::new();
    for (i, e) in spec.entities.iter().enumerate() {
        let path = format!("entities[{i}]");
        let kind = match e.kind.as_str() {
            "object" => EntityKind::Object,
            "surface" => EntityKind::Surface,
            "container" => EntityKind::Container,
            other => {
                return Err(SchemaError::new(
                    &path,
                    format!("unknown entity kind {other:?}"),
                ))
            }
        };
        let id = b.add(&e.id, kind, &path)?;
        declared.push(id);
        match kind {
            EntityKind::Surface => {
                let height = match e.height.as_deref() {
                    Some("low") => Height::Low,
                    Some("high") => Height::High,
                    Some(other) => {
                        return Err(SchemaError::new(
                            &path,
                            format!("unknown height {other:?} (low|high)"),
                        ))
                    }
                    None => {
                        return Err(SchemaError::new(&path, "surfaces require a height"))
                    }
                };
                b.entities[id.index()].height = Some(height);
            }
            EntityKind::Container => {
                if e.open.is_none() {
                    return Err(SchemaError::new(&path, "containers require an open flag"));
                }
                open_flags.push((id, e.open.unwrap()));
            }
            _ => {
                if e.height.is_some() || e.open.is_some() {
                    return Err(SchemaError::new(
                        &path,
                        "height/open only apply to surfaces/containers",
                    ));
                }
            }
        }
    }

    // Robots and their baskets.
    let mut robots = Vec::new();
    let mut robot_slot = HashMap::new();
    let mut robot_states = Vec::new();
    for (i, r) in spec.robots.iter().enumerate() {
        let path = format!("robots[{i}]");
        let archetype = Archetype::parse(&r.archetype).ok_or_else(|| {
            SchemaError::new(
                &path,
                format!(
                    "unknown archetype {:?} (quadrotor|robotic_dog|robotic_arm)",
                    r.archetype
                ),
            )
        })?;
        let id = b.add(&r.id, EntityKind::Robot, &path)?;
        let room = b.get(&r.room, &path)?;
        if b.entities[room.index()].kind != EntityKind::Room {
            return Err(SchemaError::new(&path, format!("{:?} is not a room", r.room)));
        }

        let mut basket = None;
        if let Some(basket_name) = &r.basket {
            if archetype != Archetype::Quadrotor {
                return Err(SchemaError::new(&path, "only quadrotors carry a basket"));
            }
            let bid = b.add(basket_name, EntityKind::Container, &path)?;
            b.entities[bid.index()].always_open = true;
            b.entities[bid.index()].capacity = Some(1);
            basket = Some(bid);
        } else if archetype == Archetype::Quadrotor {
            return Err(SchemaError::new(&path, "quadrotors require a basket id"));
        }

        let slot = robots.len();
        robots.push(RobotInfo {
            robot: id,
            archetype,
            basket,
            workspace: Vec::new(), // resolved below, after all ids exist
        });
        robot_slot.insert(id, slot);
        robot_states.push((id, archetype, room, r));
    }

    let mut scene = Scene {
        name: spec.name.clone(),
        entities: b.entities,
        by_name: b.by_name,
        rooms,
        floors,
        doors,
        robots,
        robot_slot,
    };

    // Resolve arm workspaces and quadrotor perches now that every id exists.
    let mut states: Vec<RobotState> = Vec::new();
    for (slot, (id, archetype, room, r)) in robot_states.iter().enumerate() {
        let path = format!("robots[{slot}]");
        let mut workspace = Vec::new();
        match archetype {
            Archetype::RoboticArm => {
                if r.workspace.is_empty() {
                    return Err(SchemaError::new(&path, "arms require a workspace"));
                }
                for w in &r.workspace {
                    let wid = scene
                        .by_name
                        .get(w)
                        .copied()
                        .ok_or_else(|| {
                            SchemaError::new(&path, format!("workspace id {w:?} unknown"))
                        })?;
                    workspace.push(wid);
                }
                workspace.sort();
                workspace.dedup();
            }
            _ => {
                if !r.workspace.is_empty() {
                    return Err(SchemaError::new(&path, "only arms declare a workspace"));
                }
            }
        }

        let (pose, perch) = match archetype {
            Archetype::Quadrotor => {
                if r.pose.as_deref() == Some("airborne") {
                    if r.perch.is_some() {
                        return Err(SchemaError::new(&path, "airborne quadrotor has no perch"));
                    }
                    (Pose::Airborne, None)
                } else {
                    let perch_id = match &r.perch {
                        Some(p) => scene.by_name.get(p).copied().ok_or_else(|| {
                            SchemaError::new(&path, format!("perch id {p:?} unknown"))
                        })?,
                        None => scene.floors[room],
                    };
                    if !matches!(
                        scene.entities[perch_id.index()].kind,
                        EntityKind::Surface | EntityKind::Floor
                    ) {
                        return Err(SchemaError::new(&path, "perch must be a surface or floor"));
                    }
                    (Pose::Grounded, Some(perch_id))
                }
            }
            _ => {
                if r.pose.is_some() || r.perch.is_some() {
                    return Err(SchemaError::new(&path, "pose/perch only apply to quadrotors"));
                }
                (Pose::Grounded, None)
            }
        };

        let mut anchors = workspace.clone();
        if let Some(p) = perch {
            anchors.push(p);
            anchors.sort();
            anchors.dedup();
        }
        scene.robots[slot].workspace = workspace;
        states.push(RobotState {
            room: *room,
            pose,
            perch,
            held: None,
            anchors,
        });
        let _ = id;
    }

    // Initial locations for declared entities.
    let mut locations: Vec<Option<Loc>> = vec![None; scene.entities.len()];
    let mut open: Vec<bool> = vec![false; scene.entities.len()];
    for (id, flag) in open_flags {
        open[id.index()] = flag;
    }

    for (i, e) in spec.entities.iter().enumerate() {
        let path = format!("entities[{i}]");
        let id = declared[i];
        let kind = scene.entities[id.index()].kind;
        let placements = [e.on.is_some(), e.r#in.is_some(), e.held_by.is_some(), e.room.is_some()];
        let count = placements.iter().filter(|x| **x).count();
        match kind {
            EntityKind::Surface => {
                if e.on.is_some() || e.r#in.is_some() || e.held_by.is_some() {
                    return Err(SchemaError::new(&path, "surfaces are placed by room only"));
                }
                let room = scene
                    .by_name
                    .get(e.room.as_deref().ok_or_else(|| {
                        SchemaError::new(&path, "surfaces require a room")
                    })?)
                    .copied()
                    .ok_or_else(|| SchemaError::new(&path, "unknown room"))?;
                scene.entities[id.index()].home_room = Some(room);
            }
            EntityKind::Object | EntityKind::Container => {
                if count != 1 {
                    return Err(SchemaError::new(
                        &path,
                        "exactly one of on/in/held_by/room is required",
                    ));
                }
                let loc = if let Some(t) = &e.on {
                    let tid = scene
                        .by_name
                        .get(t)
                        .copied()
                        .ok_or_else(|| SchemaError::new(&path, format!("unknown id {t:?}")))?;
                    if !matches!(
                        scene.entities[tid.index()].kind,
                        EntityKind::Surface | EntityKind::Floor
                    ) {
                        return Err(SchemaError::new(
                            &path,
                            "ON only targets surfaces/floors",
                        ));
                    }
                    Loc::On(tid)
                } else if let Some(t) = &e.r#in {
                    let tid = scene
                        .by_name
                        .get(t)
                        .copied()
                        .ok_or_else(|| SchemaError::new(&path, format!("unknown id {t:?}")))?;
                    if scene.entities[tid.index()].kind != EntityKind::Container {
                        return Err(SchemaError::new(&path, "IN only targets containers"));
                    }
                    if kind == EntityKind::Container {
                        return Err(SchemaError::new(&path, "containers cannot nest"));
                    }
                    Loc::In(tid)
                } else if let Some(t) = &e.held_by {
                    let tid = scene
                        .by_name
                        .get(t)
                        .copied()
                        .ok_or_else(|| SchemaError::new(&path, format!("unknown id {t:?}")))?;
                    let slot = scene.robot_slot.get(&tid).copied().ok_or_else(|| {
                        SchemaError::new(&path, "HELD_BY only targets robots")
                    })?;
                    if kind == EntityKind::Container {
                        return Err(SchemaError::new(&path, "containers cannot be held"));
                    }
                    if scene.robots[slot].archetype == Archetype::Quadrotor {
                        return Err(SchemaError::new(&path, "quadrotors cannot hold objects"));
                    }
                    if states[slot].held.is_some() {
                        return Err(SchemaError::new(&path, "robot already holds an object"));
                    }
                    states[slot].held = Some(id);
                    Loc::HeldBy(tid)
                } else {
                    // room placement: on that room's floor
                    let room = scene
                        .by_name
                        .get(e.room.as_deref().unwrap())
                        .copied()
                        .ok_or_else(|| SchemaError::new(&path, "unknown room"))?;
                    if scene.entities[room.index()].kind != EntityKind::Room {
                        return Err(SchemaError::new(&path, "room field must name a room"));
                    }
                    Loc::On(scene.floors[&room])
                };
                locations[id.index()] = Some(loc);
            }
            _ => unreachable!("declared entities are object/surface/container"),
        }
    }

    // Baskets ride their quadrotor.
    for info in &scene.robots {
        if let Some(basket) = info.basket {
            locations[basket.index()] = Some(Loc::HeldBy(info.robot));
        }
    }

    // Arm workspaces must be reachable without locomotion: same room.
    for (slot, info) in scene.robots.iter().enumerate() {
        if info.archetype == Archetype::RoboticArm {
            for &w in &info.workspace {
                let wroom = match scene.entities[w.index()].kind {
                    EntityKind::Surface | EntityKind::Floor => scene.entities[w.index()].home_room,
                    EntityKind::Container => match locations[w.index()] {
                        Some(Loc::On(t)) => scene.entities[t.index()].home_room,
                        _ => None,
                    },
                    _ => {
                        return Err(SchemaError::new(
                            format!("robots[{slot}]"),
                            "workspace entries must be surfaces, floors, or containers",
                        ))
                    }
                };
                if wroom != Some(states[slot].room) {
                    return Err(SchemaError::new(
                        format!("robots[{slot}]"),
                        "workspace entries must be in the arm's room",
                    ));
                }
            }
        }
    }

    let state = WorldState {
        scene: Arc::new(scene),
        core: StateCore {
            locations,
            open,
            robots: states,
        },
    };
    state
        .check_invariants()
        .map_err(|m| SchemaError::new("scene", m))?;
    Ok(state)
}

/// Resolve a goal description against a built scene.
pub fn resolve_goal(
    state: &WorldState,
    goal: &[RelationSpec],
) -> Result<Vec<Relation>, SchemaError> {
    let scene = state.scene();
    let mut out = Vec::new();
    for (i, g) in goal.iter().enumerate() {
        let path = format!("goal[{i}]");
        let predicate = Predicate::parse(&g.predicate)
            .ok_or_else(|| SchemaError::new(&path, format!("unknown predicate {:?}", g.predicate)))?;
        let subject = scene
            .lookup(&g.subject)
            .ok_or_else(|| SchemaError::new(&path, format!("unknown entity {:?}", g.subject)))?;
        let object = match &g.object {
            Some(o) => Some(scene.lookup(o).ok_or_else(|| {
                SchemaError::new(&path, format!("unknown entity {o:?}"))
            })?),
            None => None,
        };
        if predicate.is_unary() != object.is_none() {
            return Err(SchemaError::new(&path, "predicate arity mismatch"));
        }
        match predicate {
            Predicate::On => {
                let t = object.unwrap();
                if !matches!(scene.kind(t), EntityKind::Surface | EntityKind::Floor) {
                    return Err(SchemaError::new(&path, "ON only targets surfaces/floors"));
                }
            }
            Predicate::In => {
                if scene.kind(object.unwrap()) != EntityKind::Container {
                    return Err(SchemaError::new(&path, "IN only targets containers"));
                }
            }
            Predicate::HeldBy => {
                if scene.kind(object.unwrap()) != EntityKind::Robot {
                    return Err(SchemaError::new(&path, "HELD_BY only targets robots"));
                }
            }
            Predicate::Open | Predicate::Closed => {
                if !matches!(
                    scene.kind(subject),
                    EntityKind::Container | EntityKind::Door
                ) {
                    return Err(SchemaError::new(
                        &path,
                        "OPEN/CLOSED only apply to containers and doors",
                    ));
                }
            }
            _ => {
                return Err(SchemaError::new(
                    &path,
                    format!(
                        "goal predicates are ON/IN/HELD_BY/OPEN/CLOSED, got {}",
                        predicate.label()
                    ),
                ))
            }
        }
        out.push(Relation {
            predicate,
            subject,
            object,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::SceneSpec;

    fn demo_scene_json() -> &'static str {
        r#"{
          "schema": 1,
          "name": "demo",
          "rooms": ["living_room", "kitchen"],
          "doors": [{"id": "door_lk", "connects": ["living_room", "kitchen"], "open": true}],
          "entities": [
            {"id": "coffee_table", "kind": "surface", "room": "living_room", "height": "low"},
            {"id": "dining_table", "kind": "surface", "room": "living_room", "height": "high"},
            {"id": "fridge", "kind": "container", "room": "kitchen", "open": false},
            {"id": "apple", "kind": "object", "on": "coffee_table"},
            {"id": "lemon", "kind": "object", "in": "fridge"}
          ],
          "robots": [
            {"id": "robotic_dog", "archetype": "robotic_dog", "room": "living_room"},
            {"id": "quadrotor", "archetype": "quadrotor", "room": "kitchen", "basket": "basket"},
            {"id": "arm_1", "archetype": "robotic_arm", "room": "living_room", "workspace": ["dining_table"]}
          ]
        }"#
    }

    pub(crate) fn demo_state() -> WorldState {
        let spec: SceneSpec = serde_json::from_str(demo_scene_json()).unwrap();
        build_scene(&spec).unwrap()
    }

    #[test]
    fn build_demo_scene() {
        let state = demo_state();
        let scene = state.scene();
        let apple = scene.lookup("apple").unwrap();
        let table = scene.lookup("coffee_table").unwrap();
        assert_eq!(state.location(apple), Some(Loc::On(table)));
        assert!(state
            .render_relations()
            .contains(&"ON(apple, coffee_table)".to_string()));
        state.check_invariants().unwrap();
    }

    #[test]
    fn empty_entity_list_is_rejected() {
        let mut spec: SceneSpec = serde_json::from_str(demo_scene_json()).unwrap();
        spec.entities.clear();
        let err = build_scene(&spec).unwrap_err();
        assert!(err.path.contains("entities"));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let mut spec: SceneSpec = serde_json::from_str(demo_scene_json()).unwrap();
        let mut dup = spec.entities[3].clone();
        dup.id = "apple".into();
        spec.entities.push(dup);
        let err = build_scene(&spec).unwrap_err();
        assert!(err.message.contains("duplicate"), "{err}");
    }

    #[test]
    fn observation_hides_closed_container_contents() {
        let state = demo_state();
        let scene = state.scene();
        let quadrotor = scene.lookup("quadrotor").unwrap();
        // Quadrotor is in the kitchen with the closed fridge holding a lemon.
        let obs = observe(&state, quadrotor).unwrap();
        let text = render_observation(&state, &obs);
        assert!(!text.contains("lemon"), "closed fridge leaked: {text}");
        assert!(text.contains("CLOSED(fridge)"));
    }

    #[test]
    fn observation_is_room_scoped() {
        let state = demo_state();
        let scene = state.scene();
        let dog = scene.lookup("robotic_dog").unwrap();
        let obs = observe(&state, dog).unwrap();
        let text = render_observation(&state, &obs);
        assert!(text.contains("ON(apple, coffee_table)"));
        assert!(!text.contains("fridge"), "other-room entity leaked: {text}");
        // Doors are visible from both rooms.
        assert!(text.contains("CONNECTS(door_lk, kitchen)"));
    }

    #[test]
    fn observation_ordering_is_stable() {
        let state = demo_state();
        let dog = state.scene().lookup("robotic_dog").unwrap();
        let a = render_observation(&state, &observe(&state, dog).unwrap());
        let b = render_observation(&state, &observe(&state, dog).unwrap());
        assert_eq!(a, b);
        let mut lines: Vec<&str> = a.lines().collect();
        let sorted = {
            let mut s = lines.clone();
            s.sort();
            s
        };
        lines.sort();
        assert_eq!(lines, sorted);
    }

    #[test]
    fn observe_unknown_robot_errors() {
        let state = demo_state();
        let apple = state.scene().lookup("apple").unwrap();
        assert!(matches!(
            observe(&state, apple),
            Err(WorldError::UnknownRobot(_))
        ));
    }

    #[test]
    fn unary_rendering() {
        let state = demo_state();
        let fridge = state.scene().lookup("fridge").unwrap();
        let r = Relation::unary(Predicate::Closed, fridge);
        assert_eq!(state.render_relation(&r), "CLOSED(fridge)");
    }

    #[test]
    fn goal_checking() {
        let state = demo_state();
        let scene = state.scene();
        let apple = scene.lookup("apple").unwrap();
        let coffee = scene.lookup("coffee_table").unwrap();
        let dining = scene.lookup("dining_table").unwrap();
        assert!(check_goal(
            &state,
            &[Relation::binary(Predicate::On, apple, coffee)]
        ));
        assert!(!check_goal(
            &state,
            &[Relation::binary(Predicate::On, apple, dining)]
        ));
        assert!(check_goal(&state, &[]));
    }

    #[test]
    fn relation_text_round_trips() {
        let state = demo_state();
        for rel in state.relations() {
            let text = state.render_relation(&rel);
            let parsed = state.parse_relation(&text).unwrap();
            assert_eq!(parsed, rel, "round-trip failed for {text}");
        }
    }

    #[test]
    fn holds_matches_derived_relation_set() {
        let state = demo_state();
        let derived = state.relations();
        for rel in &derived {
            assert!(state.holds(rel), "{}", state.render_relation(rel));
        }
        // A relation not in the set must not hold.
        let apple = state.scene().lookup("apple").unwrap();
        let dining = state.scene().lookup("dining_table").unwrap();
        let missing = Relation::binary(Predicate::On, apple, dining);
        assert!(!derived.contains(&missing));
        assert!(!state.holds(&missing));
    }

    #[test]
    fn digest_is_deterministic() {
        let a = demo_state();
        let b = demo_state();
        assert_eq!(a.digest_hex(), b.digest_hex());
        assert_eq!(a.core_key(), b.core_key());
    }
}

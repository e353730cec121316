//! C ABI over the simulator core: opaque handles, status codes, and
//! UTF-8 strings allocated by this library (release with
//! [`coherent_string_free`]).
//!
//! Handles:
//! - `CoherentScene`: a parsed scene description plus its built initial state.
//! - `CoherentTask`: a task validated against one specific scene handle.
//! - `CoherentWorld`: a mutable world, advanced in place by `coherent_world_apply`.
//!
//! Every function returns a [`CoherentStatus`]; on failure a thread-local
//! message is readable via [`coherent_last_error`] until the next call on
//! the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::sync::Arc;

use coherent_core::actions::{feasible_actions, parse_action, render_action, validate};
use coherent_core::engine::{run_episode, step_budget, ScriptPlanner};
use coherent_core::tasks::{validate_task, SceneSpec, TaskSpec, ValidatedTask};
use coherent_core::world::{build_scene, observe, render_observation, Scene, WorldState};

/// Status codes returned by every ABI function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CoherentStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    SchemaError = 4,
    UnknownEntity = 5,
    /// The action is grammatical but not executable in the current state.
    PreconditionFailed = 6,
    /// Scene/task/world handles from different scenes were mixed.
    HandleMismatch = 7,
    InternalError = 8,
}

pub struct CoherentScene {
    spec: SceneSpec,
    initial: WorldState,
}

pub struct CoherentTask {
    task: ValidatedTask,
    scene: Arc<Scene>,
}

pub struct CoherentWorld {
    state: WorldState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn fail(status: CoherentStatus, message: impl Into<String>) -> CoherentStatus {
    set_error(message);
    status
}

/// Message for the most recent failure on this thread, or null. The pointer
/// is valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn coherent_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn coherent_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be a pointer previously returned through a `char**` out
/// parameter of this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn coherent_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, CoherentStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(CoherentStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("invalid utf-8: {e}"));
        CoherentStatus::InvalidUtf8
    })
}

fn write_string(out: *mut *mut c_char, text: String) -> CoherentStatus {
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            CoherentStatus::Ok
        }
        Err(_) => fail(CoherentStatus::InternalError, "string contains NUL"),
    }
}

macro_rules! deref_or {
    ($ptr:expr, $what:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return fail(CoherentStatus::NullArgument, concat!("null ", $what)),
        }
    };
}

// ---------------------------------------------------------------------------
// Scenes and tasks
// ---------------------------------------------------------------------------

/// Parse and validate a scene description (JSON). On success the handle owns
/// the built initial state.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_scene_from_json(
    json: *const c_char,
    out: *mut *mut CoherentScene,
) -> CoherentStatus {
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    let text = match read_utf8(json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let spec: SceneSpec = match serde_json::from_str(text) {
        Ok(spec) => spec,
        Err(e) => return fail(CoherentStatus::ParseError, format!("scene json: {e}")),
    };
    match build_scene(&spec) {
        Ok(initial) => {
            *out = Box::into_raw(Box::new(CoherentScene { spec, initial }));
            CoherentStatus::Ok
        }
        Err(e) => fail(CoherentStatus::SchemaError, e.to_string()),
    }
}

/// Load one of the built-in benchmark scenes by name.
///
/// # Safety
/// `name` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_builtin_scene(
    name: *const c_char,
    out: *mut *mut CoherentScene,
) -> CoherentStatus {
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    let name = match read_utf8(name) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let Some(spec) = coherent_core::tasks::builtin_scenes()
        .into_iter()
        .find(|s| s.name == name)
    else {
        return fail(
            CoherentStatus::UnknownEntity,
            format!("no built-in scene named {name:?}"),
        );
    };
    match build_scene(&spec) {
        Ok(initial) => {
            *out = Box::into_raw(Box::new(CoherentScene { spec, initial }));
            CoherentStatus::Ok
        }
        Err(e) => fail(CoherentStatus::SchemaError, e.to_string()),
    }
}

/// # Safety
/// `scene` must be a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn coherent_scene_free(scene: *mut CoherentScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// The scene's declared name.
///
/// # Safety
/// `scene` must be a live scene handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_scene_name(
    scene: *const CoherentScene,
    out: *mut *mut c_char,
) -> CoherentStatus {
    let scene = deref_or!(scene, "scene handle");
    write_string(out, scene.spec.name.clone())
}

/// Validate a task description (JSON) against a scene.
///
/// # Safety
/// `scene` must be a live scene handle; `json` a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_task_from_json(
    scene: *const CoherentScene,
    json: *const c_char,
    out: *mut *mut CoherentTask,
) -> CoherentStatus {
    let scene = deref_or!(scene, "scene handle");
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    let text = match read_utf8(json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let spec: TaskSpec = match serde_json::from_str(text) {
        Ok(spec) => spec,
        Err(e) => return fail(CoherentStatus::ParseError, format!("task json: {e}")),
    };
    match validate_task(spec, &scene.initial) {
        Ok(task) => {
            *out = Box::into_raw(Box::new(CoherentTask {
                task,
                scene: scene.initial.scene().clone(),
            }));
            CoherentStatus::Ok
        }
        Err(e) => fail(CoherentStatus::SchemaError, e.to_string()),
    }
}

/// Look up a built-in task by id, returning both its scene and the task.
///
/// # Safety
/// `id` must be a valid string; `out_scene` and `out_task` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_builtin_task(
    id: *const c_char,
    out_scene: *mut *mut CoherentScene,
    out_task: *mut *mut CoherentTask,
) -> CoherentStatus {
    if out_scene.is_null() || out_task.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    let id = match read_utf8(id) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let Some(entry) = coherent_core::tasks::builtin_task(id) else {
        return fail(
            CoherentStatus::UnknownEntity,
            format!("no built-in task named {id:?}"),
        );
    };
    let initial = match build_scene(&entry.scene) {
        Ok(state) => state,
        Err(e) => return fail(CoherentStatus::InternalError, e.to_string()),
    };
    let task = match validate_task(entry.task, &initial) {
        Ok(task) => task,
        Err(e) => return fail(CoherentStatus::InternalError, e.to_string()),
    };
    let scene_arc = initial.scene().clone();
    *out_scene = Box::into_raw(Box::new(CoherentScene {
        spec: entry.scene,
        initial,
    }));
    *out_task = Box::into_raw(Box::new(CoherentTask {
        task,
        scene: scene_arc,
    }));
    CoherentStatus::Ok
}

/// # Safety
/// `task` must be a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn coherent_task_free(task: *mut CoherentTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// JSON listing of the built-in suite: id, scene, category, and optimal
/// step count per task.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_suite_list(out: *mut *mut c_char) -> CoherentStatus {
    let entries: Vec<serde_json::Value> = coherent_core::tasks::builtin_suite()
        .into_iter()
        .map(|entry| {
            serde_json::json!({
                "id": entry.task.id,
                "scene": entry.task.scene,
                "category": entry.task.category.label(),
                "gt_steps": entry.task.gt_steps,
            })
        })
        .collect();
    write_string(out, serde_json::Value::Array(entries).to_string())
}

// ---------------------------------------------------------------------------
// Worlds
// ---------------------------------------------------------------------------

/// Instantiate a world at the scene's initial state.
///
/// # Safety
/// `scene` must be a live scene handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_new(
    scene: *const CoherentScene,
    out: *mut *mut CoherentWorld,
) -> CoherentStatus {
    let scene = deref_or!(scene, "scene handle");
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    *out = Box::into_raw(Box::new(CoherentWorld {
        state: scene.initial.clone(),
    }));
    CoherentStatus::Ok
}

/// # Safety
/// `world` must be a live world handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_clone(
    world: *const CoherentWorld,
    out: *mut *mut CoherentWorld,
) -> CoherentStatus {
    let world = deref_or!(world, "world handle");
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    *out = Box::into_raw(Box::new(CoherentWorld {
        state: world.state.clone(),
    }));
    CoherentStatus::Ok
}

/// # Safety
/// `world` must be a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_free(world: *mut CoherentWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

fn resolve_robot(
    state: &WorldState,
    name: &str,
) -> Result<coherent_core::world::EntityId, CoherentStatus> {
    let scene = state.scene();
    let id = scene.resolve(name).map_err(|e| {
        set_error(e.to_string());
        CoherentStatus::UnknownEntity
    })?;
    if scene.robot_info(id).is_none() {
        set_error(format!("{name:?} is not a robot"));
        return Err(CoherentStatus::UnknownEntity);
    }
    Ok(id)
}

/// Render one robot's partial observation, one relation per line.
///
/// # Safety
/// `world` must be live, `robot` a valid string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_observe(
    world: *const CoherentWorld,
    robot: *const c_char,
    out: *mut *mut c_char,
) -> CoherentStatus {
    let world = deref_or!(world, "world handle");
    let robot = match read_utf8(robot) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let robot = match resolve_robot(&world.state, robot) {
        Ok(id) => id,
        Err(status) => return status,
    };
    let obs = match observe(&world.state, robot) {
        Ok(obs) => obs,
        Err(e) => return fail(CoherentStatus::InternalError, e.to_string()),
    };
    write_string(out, render_observation(&world.state, &obs))
}

/// Render the robot's feasible actions, one per line, sorted.
///
/// # Safety
/// `world` must be live, `robot` a valid string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_feasible_actions(
    world: *const CoherentWorld,
    robot: *const c_char,
    out: *mut *mut c_char,
) -> CoherentStatus {
    let world = deref_or!(world, "world handle");
    let robot_name = match read_utf8(robot) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let robot = match resolve_robot(&world.state, robot_name) {
        Ok(id) => id,
        Err(status) => return status,
    };
    let actions = match feasible_actions(&world.state, robot) {
        Ok(actions) => actions,
        Err(e) => return fail(CoherentStatus::InternalError, e.to_string()),
    };
    let scene = world.state.scene();
    let text = actions
        .iter()
        .map(|a| render_action(scene, a))
        .collect::<Vec<_>>()
        .join("\n");
    write_string(out, text)
}

fn parse_robot_action(
    state: &WorldState,
    robot_name: &str,
    action_text: &str,
) -> Result<(coherent_core::world::EntityId, coherent_core::actions::Action), CoherentStatus> {
    let robot = resolve_robot(state, robot_name)?;
    let archetype = state
        .scene()
        .robot_info(robot)
        .expect("resolved robot")
        .archetype;
    let action = parse_action(state.scene(), archetype, action_text).map_err(|e| {
        set_error(e.to_string());
        match e {
            coherent_core::actions::ParseError::UnknownEntity(_) => CoherentStatus::UnknownEntity,
            _ => CoherentStatus::ParseError,
        }
    })?;
    Ok((robot, action))
}

/// Check whether `action` (grammar text) is executable by `robot` right now.
/// Returns `Ok` when executable; `PreconditionFailed` otherwise, with the
/// failure code and detail in `out_reason` (when non-null).
///
/// # Safety
/// `world` must be live; `robot`/`action` valid strings; `out_reason` may be
/// null, otherwise writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_validate(
    world: *const CoherentWorld,
    robot: *const c_char,
    action: *const c_char,
    out_reason: *mut *mut c_char,
) -> CoherentStatus {
    let world = deref_or!(world, "world handle");
    if !out_reason.is_null() {
        *out_reason = std::ptr::null_mut();
    }
    let robot_name = match read_utf8(robot) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let action_text = match read_utf8(action) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let (robot, action) = match parse_robot_action(&world.state, robot_name, action_text) {
        Ok(pair) => pair,
        Err(status) => return status,
    };
    match validate(&world.state, robot, &action) {
        Ok(outcome) if outcome.executable => CoherentStatus::Ok,
        Ok(outcome) => {
            let reason = format!(
                "{}: {}",
                outcome.reason.map(|r| r.label()).unwrap_or("?"),
                outcome.detail
            );
            if !out_reason.is_null() {
                return match write_string(out_reason, reason.clone()) {
                    CoherentStatus::Ok => fail(CoherentStatus::PreconditionFailed, reason),
                    other => other,
                };
            }
            fail(CoherentStatus::PreconditionFailed, reason)
        }
        Err(e) => fail(CoherentStatus::InternalError, e.to_string()),
    }
}

/// Validate and apply one action, advancing the world in place.
///
/// # Safety
/// `world` must be live and not aliased; `robot`/`action` valid strings.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_apply(
    world: *mut CoherentWorld,
    robot: *const c_char,
    action: *const c_char,
) -> CoherentStatus {
    let world = match world.as_mut() {
        Some(w) => w,
        None => return fail(CoherentStatus::NullArgument, "null world handle"),
    };
    let robot_name = match read_utf8(robot) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let action_text = match read_utf8(action) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let (robot, action) = match parse_robot_action(&world.state, robot_name, action_text) {
        Ok(pair) => pair,
        Err(status) => return status,
    };
    match coherent_core::actions::apply(&world.state, robot, &action) {
        Ok(next) => {
            world.state = next;
            CoherentStatus::Ok
        }
        Err(e) => fail(CoherentStatus::PreconditionFailed, e.to_string()),
    }
}

/// Whether the task's goal holds in the world. The task must have been
/// validated against the same scene handle the world came from.
///
/// # Safety
/// `world` and `task` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_check_goal(
    world: *const CoherentWorld,
    task: *const CoherentTask,
    out: *mut bool,
) -> CoherentStatus {
    let world = deref_or!(world, "world handle");
    let task = deref_or!(task, "task handle");
    if out.is_null() {
        return fail(CoherentStatus::NullArgument, "null output pointer");
    }
    if !Arc::ptr_eq(world.state.scene(), &task.scene) {
        return fail(
            CoherentStatus::HandleMismatch,
            "task was validated against a different scene handle",
        );
    }
    *out = coherent_core::world::check_goal(&world.state, &task.task.goal);
    CoherentStatus::Ok
}

/// Stable hex digest of the world's full relation set.
///
/// # Safety
/// `world` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_world_digest(
    world: *const CoherentWorld,
    out: *mut *mut c_char,
) -> CoherentStatus {
    let world = deref_or!(world, "world handle");
    write_string(out, world.state.digest_hex())
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

/// Replay the task's shipped oracle script through the engine and return a
/// JSON summary: `success`, `steps_taken`, `budget`, and the trace lines.
///
/// # Safety
/// `scene` and `task` must be live handles from the same scene; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn coherent_run_oracle(
    scene: *const CoherentScene,
    task: *const CoherentTask,
    out: *mut *mut c_char,
) -> CoherentStatus {
    let scene = deref_or!(scene, "scene handle");
    let task = deref_or!(task, "task handle");
    if !Arc::ptr_eq(scene.initial.scene(), &task.scene) {
        return fail(
            CoherentStatus::HandleMismatch,
            "task was validated against a different scene handle",
        );
    }
    if task.task.spec.oracle.is_empty() {
        return fail(
            CoherentStatus::SchemaError,
            format!("task {} ships no oracle script", task.task.spec.id),
        );
    }
    let budget = match step_budget(task.task.spec.gt_steps) {
        Ok(b) => b,
        Err(e) => return fail(CoherentStatus::SchemaError, e.to_string()),
    };
    let mut planner = match ScriptPlanner::from_lines(&scene.initial, &task.task.spec.oracle) {
        Ok(p) => p,
        Err(e) => return fail(CoherentStatus::ParseError, e),
    };
    let result = match run_episode(&scene.initial, &task.task.goal, &mut planner, budget) {
        Ok(r) => r,
        Err(e) => return fail(CoherentStatus::InternalError, e.to_string()),
    };
    let trace: Vec<_> = result
        .trace
        .iter()
        .map(|record| record.to_line(&scene.initial))
        .collect();
    let summary = serde_json::json!({
        "task": task.task.spec.id,
        "success": result.success,
        "steps_taken": result.steps_taken,
        "budget": result.budget,
        "trace": trace,
    });
    write_string(out, summary.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_static() {
        let ptr = coherent_version();
        let text = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
        assert_eq!(text, env!("CARGO_PKG_VERSION"));
    }
}

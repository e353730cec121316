//! Exercise the C ABI end to end through the exported symbols: handle
//! lifecycles, observation/feasible rendering, validate/apply flows, goal
//! checks, oracle replay, and the error-code paths.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use coherent_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let text = CStr::from_ptr(ptr).to_str().unwrap().to_string();
    coherent_string_free(ptr);
    text
}

fn last_error() -> String {
    let ptr = coherent_last_error();
    if ptr.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string()
    }
}

#[test]
fn builtin_scene_world_walkthrough() {
    unsafe {
        let mut scene: *mut CoherentScene = ptr::null_mut();
        let status = coherent_builtin_scene(cstr("s1_apartment").as_ptr(), &mut scene);
        assert_eq!(status, CoherentStatus::Ok, "{}", last_error());

        let mut name: *mut c_char = ptr::null_mut();
        assert_eq!(coherent_scene_name(scene, &mut name), CoherentStatus::Ok);
        assert_eq!(take_string(name), "s1_apartment");

        let mut world: *mut CoherentWorld = ptr::null_mut();
        assert_eq!(coherent_world_new(scene, &mut world), CoherentStatus::Ok);

        // Observation is room-scoped and hides the closed cupboard contents.
        let mut obs: *mut c_char = ptr::null_mut();
        assert_eq!(
            coherent_world_observe(world, cstr("robotic_dog").as_ptr(), &mut obs),
            CoherentStatus::Ok
        );
        let obs = take_string(obs);
        assert!(obs.contains("ON(apple, coffee_table)"), "{obs}");
        assert!(!obs.contains("honey_jar"), "{obs}");

        // Feasible actions render one per line.
        let mut feasible: *mut c_char = ptr::null_mut();
        assert_eq!(
            coherent_world_feasible_actions(world, cstr("quadrotor").as_ptr(), &mut feasible),
            CoherentStatus::Ok
        );
        let feasible = take_string(feasible);
        assert_eq!(feasible, "[takeoff_from] <balcony_floor>");

        // Validation distinguishes executable from blocked actions.
        assert_eq!(
            coherent_world_validate(
                world,
                cstr("robotic_dog").as_ptr(),
                cstr("[movetowards] <apple>").as_ptr(),
                ptr::null_mut(),
            ),
            CoherentStatus::Ok
        );
        let mut reason: *mut c_char = ptr::null_mut();
        assert_eq!(
            coherent_world_validate(
                world,
                cstr("robotic_dog").as_ptr(),
                cstr("[grab] <apple>").as_ptr(),
                &mut reason,
            ),
            CoherentStatus::PreconditionFailed
        );
        let reason = take_string(reason);
        assert!(reason.starts_with("NOT_NEAR:"), "{reason}");

        // Apply mutates the world in place; the digest changes.
        let mut before: *mut c_char = ptr::null_mut();
        assert_eq!(coherent_world_digest(world, &mut before), CoherentStatus::Ok);
        let before = take_string(before);
        assert_eq!(
            coherent_world_apply(
                world,
                cstr("robotic_dog").as_ptr(),
                cstr("[movetowards] <apple>").as_ptr(),
            ),
            CoherentStatus::Ok
        );
        let mut after: *mut c_char = ptr::null_mut();
        assert_eq!(coherent_world_digest(world, &mut after), CoherentStatus::Ok);
        let after = take_string(after);
        assert_ne!(before, after);

        coherent_world_free(world);
        coherent_scene_free(scene);
    }
}

#[test]
fn oracle_replay_and_goal_check() {
    unsafe {
        let mut scene: *mut CoherentScene = ptr::null_mut();
        let mut task: *mut CoherentTask = ptr::null_mut();
        let status = coherent_builtin_task(
            cstr("s1_m1_apple_to_bench").as_ptr(),
            &mut scene,
            &mut task,
        );
        assert_eq!(status, CoherentStatus::Ok, "{}", last_error());

        // Goal does not hold initially.
        let mut world: *mut CoherentWorld = ptr::null_mut();
        assert_eq!(coherent_world_new(scene, &mut world), CoherentStatus::Ok);
        let mut reached = true;
        assert_eq!(
            coherent_world_check_goal(world, task, &mut reached),
            CoherentStatus::Ok
        );
        assert!(!reached);

        // Oracle replay succeeds in exactly the declared number of steps.
        let mut summary: *mut c_char = ptr::null_mut();
        assert_eq!(
            coherent_run_oracle(scene, task, &mut summary),
            CoherentStatus::Ok
        );
        let summary: serde_json::Value =
            serde_json::from_str(&take_string(summary)).expect("summary json");
        assert_eq!(summary["success"], true);
        assert_eq!(summary["steps_taken"], 5);
        assert_eq!(summary["budget"], 10);
        assert_eq!(summary["trace"].as_array().unwrap().len(), 5);

        // Driving the world through the same five actions reaches the goal.
        for (robot, action) in [
            ("robotic_dog", "[movetowards] <apple>"),
            ("robotic_dog", "[grab] <apple>"),
            ("robotic_dog", "[movetowards] <kitchen>"),
            ("robotic_dog", "[movetowards] <kitchen_bench>"),
            ("robotic_dog", "[puton] <apple> on <kitchen_bench>"),
        ] {
            assert_eq!(
                coherent_world_apply(world, cstr(robot).as_ptr(), cstr(action).as_ptr()),
                CoherentStatus::Ok,
                "{robot} {action}: {}",
                last_error()
            );
        }
        assert_eq!(
            coherent_world_check_goal(world, task, &mut reached),
            CoherentStatus::Ok
        );
        assert!(reached);

        coherent_world_free(world);
        coherent_task_free(task);
        coherent_scene_free(scene);
    }
}

#[test]
fn error_paths() {
    unsafe {
        // Null arguments.
        let mut scene: *mut CoherentScene = ptr::null_mut();
        assert_eq!(
            coherent_scene_from_json(ptr::null(), &mut scene),
            CoherentStatus::NullArgument
        );
        assert_eq!(
            coherent_builtin_scene(cstr("nowhere").as_ptr(), &mut scene),
            CoherentStatus::UnknownEntity
        );
        assert!(last_error().contains("nowhere"));

        // Malformed scene JSON.
        assert_eq!(
            coherent_scene_from_json(cstr("{not json").as_ptr(), &mut scene),
            CoherentStatus::ParseError
        );

        // Schema violation: duplicate entity id.
        let duplicate = r#"{
          "schema": 1, "name": "bad", "rooms": ["a"],
          "entities": [
            {"id": "t", "kind": "surface", "room": "a", "height": "low"},
            {"id": "x", "kind": "object", "on": "t"},
            {"id": "x", "kind": "object", "on": "t"}
          ],
          "robots": [{"id": "robotic_dog", "archetype": "robotic_dog", "room": "a"}]
        }"#;
        assert_eq!(
            coherent_scene_from_json(cstr(duplicate).as_ptr(), &mut scene),
            CoherentStatus::SchemaError
        );
        assert!(last_error().contains("duplicate"));

        // Mixed handles are rejected.
        let mut scene_a: *mut CoherentScene = ptr::null_mut();
        let mut task_a: *mut CoherentTask = ptr::null_mut();
        assert_eq!(
            coherent_builtin_task(cstr("s1_m1_apple_to_bench").as_ptr(), &mut scene_a, &mut task_a),
            CoherentStatus::Ok
        );
        let mut scene_b: *mut CoherentScene = ptr::null_mut();
        assert_eq!(
            coherent_builtin_scene(cstr("s2_apartment").as_ptr(), &mut scene_b),
            CoherentStatus::Ok
        );
        let mut world_b: *mut CoherentWorld = ptr::null_mut();
        assert_eq!(coherent_world_new(scene_b, &mut world_b), CoherentStatus::Ok);
        let mut reached = false;
        assert_eq!(
            coherent_world_check_goal(world_b, task_a, &mut reached),
            CoherentStatus::HandleMismatch
        );

        // Unknown robot and unknown entity in action text.
        let mut world_a: *mut CoherentWorld = ptr::null_mut();
        assert_eq!(coherent_world_new(scene_a, &mut world_a), CoherentStatus::Ok);
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(
            coherent_world_observe(world_a, cstr("submarine").as_ptr(), &mut out),
            CoherentStatus::UnknownEntity
        );
        assert_eq!(
            coherent_world_apply(
                world_a,
                cstr("robotic_dog").as_ptr(),
                cstr("[grab] <ghost>").as_ptr(),
            ),
            CoherentStatus::UnknownEntity
        );
        assert_eq!(
            coherent_world_apply(
                world_a,
                cstr("robotic_dog").as_ptr(),
                cstr("[fly] <apple>").as_ptr(),
            ),
            CoherentStatus::ParseError
        );

        coherent_world_free(world_a);
        coherent_world_free(world_b);
        coherent_task_free(task_a);
        coherent_scene_free(scene_a);
        coherent_scene_free(scene_b);
        coherent_world_free(ptr::null_mut());
        coherent_string_free(ptr::null_mut());
    }
}

#[test]
fn suite_listing_is_complete() {
    unsafe {
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(coherent_suite_list(&mut out), CoherentStatus::Ok);
        let listing: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
        let entries = listing.as_array().unwrap();
        assert_eq!(entries.len(), 40);
        assert!(entries.iter().any(|e| e["id"] == "s1_t2_apple_to_dining_table"));
    }
}

//! Episode execution: drives a planner one decision per iteration, validates
//! and applies actions, records a trace, and enforces the step budget.
//!
//! Every planner iteration consumes exactly one step, whether or not the
//! chosen action validated — a robot that stays put waiting for a better
//! instruction still spends the step. The engine is the only component that
//! mutates world state; planners select, the engine validates and applies.

use serde::{Deserialize, Serialize};

use crate::actions::{apply, render_action, validate, Action, ValidationOutcome};
use crate::world::{check_goal, EntityId, Relation, WorldState};

/// One planner output per iteration.
#[derive(Clone, Debug)]
pub enum Decision {
    /// Execute `action` with `robot` (subject to engine validation).
    Act { robot: EntityId, action: Action },
    /// Nobody acts this iteration. `robot` names the assignee that chose to
    /// wait, when there is one.
    Wait { robot: Option<EntityId> },
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct PlannerError {
    pub message: String,
}

impl PlannerError {
    pub fn new(message: impl Into<String>) -> Self {
        PlannerError {
            message: message.into(),
        }
    }
}

/// A next-decision function over state and its own history.
pub trait Planner {
    fn name(&self) -> &str;

    fn next_decision(
        &mut self,
        state: &WorldState,
        iteration: u32,
    ) -> Result<Decision, PlannerError>;

    /// Called after the engine has validated/applied the decision, with the
    /// recorded transition and the post-iteration state.
    fn note_transition(&mut self, _record: &TransitionRecord, _state_after: &WorldState) {}
}

/// One engine iteration as recorded in a trace.
#[derive(Clone, Debug)]
pub struct TransitionRecord {
    /// 1-based, strictly increasing.
    pub iteration: u32,
    /// The robot that acted or explicitly waited; absent on no-op iterations.
    pub robot: Option<EntityId>,
    /// The attempted action; absent on wait/no-op iterations.
    pub action: Option<Action>,
    /// Validation of the attempted action; absent when none was attempted.
    pub validation: Option<ValidationOutcome>,
    /// Digest of the post-iteration state.
    pub digest: String,
}

/// Line format of trace files (one JSON object per iteration).
/// `reason` carries the failure code for invalid actions, `WAIT` for
/// explicit waits, and `NO_PROPOSAL` for iterations without an assignee.
#[derive(Debug, Serialize, Deserialize)]
pub struct TraceLine {
    pub iteration: u32,
    pub robot: Option<String>,
    pub action: Option<String>,
    pub valid: bool,
    pub reason: Option<String>,
    pub digest: String,
}

impl TransitionRecord {
    pub fn to_line(&self, state: &WorldState) -> TraceLine {
        let scene = state.scene();
        let reason = match &self.validation {
            Some(v) if v.executable => None,
            Some(v) => v.reason.map(|r| r.label().to_string()),
            None => Some(if self.robot.is_some() { "WAIT" } else { "NO_PROPOSAL" }.to_string()),
        };
        TraceLine {
            iteration: self.iteration,
            robot: self.robot.map(|r| scene.name_of(r).to_string()),
            action: self.action.as_ref().map(|a| render_action(scene, a)),
            valid: self.validation.as_ref().map(|v| v.executable).unwrap_or(false),
            reason,
            digest: self.digest.clone(),
        }
    }
}

/// Outcome of one episode.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps_taken: u32,
    pub budget: u32,
    pub trace: Vec<TransitionRecord>,
    pub goal: Vec<Relation>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("planner {planner:?} failed at iteration {iteration}: {message}")]
    Planner {
        planner: String,
        iteration: u32,
        message: String,
        partial: Vec<TransitionRecord>,
    },
    #[error("domain error: {0}")]
    Domain(String),
}

/// The step budget granted to an episode: twice the optimal step count.
pub fn step_budget(gt_steps: u32) -> Result<u32, EngineError> {
    if gt_steps < 1 {
        return Err(EngineError::Domain(format!(
            "gt_steps must be at least 1, got {gt_steps}"
        )));
    }
    Ok(2 * gt_steps)
}

/// Run one episode from `initial` until the goal holds or `budget`
/// iterations have been consumed. Deterministic for deterministic planners.
pub fn run_episode(
    initial: &WorldState,
    goal: &[Relation],
    planner: &mut dyn Planner,
    budget: u32,
) -> Result<EpisodeResult, EngineError> {
    let mut state = initial.clone();
    let mut trace: Vec<TransitionRecord> = Vec::new();
    let mut success = check_goal(&state, goal);

    let mut iteration = 0u32;
    while !success && iteration < budget {
        iteration += 1;
        let decision =
            planner
                .next_decision(&state, iteration)
                .map_err(|e| EngineError::Planner {
                    planner: planner.name().to_string(),
                    iteration,
                    message: e.message,
                    partial: trace.clone(),
                })?;

        let record = match decision {
            Decision::Act { robot, action } => {
                let outcome = validate(&state, robot, &action).map_err(|e| EngineError::Planner {
                    planner: planner.name().to_string(),
                    iteration,
                    message: format!("invalid decision: {e}"),
                    partial: trace.clone(),
                })?;
                if outcome.executable {
                    state = apply(&state, robot, &action).expect("validated action applies");
                }
                TransitionRecord {
                    iteration,
                    robot: Some(robot),
                    action: Some(action),
                    validation: Some(outcome),
                    digest: state.digest_hex(),
                }
            }
            Decision::Wait { robot } => TransitionRecord {
                iteration,
                robot,
                action: None,
                validation: None,
                digest: state.digest_hex(),
            },
        };

        planner.note_transition(&record, &state);
        trace.push(record);
        success = check_goal(&state, goal);
    }

    Ok(EpisodeResult {
        success,
        steps_taken: trace.len() as u32,
        budget,
        trace,
        goal: goal.to_vec(),
    })
}

/// Re-execute a trace's actions from the initial state, checking that every
/// recorded digest is reproduced. Returns the final state.
pub fn replay_trace(
    initial: &WorldState,
    trace: &[TransitionRecord],
) -> Result<WorldState, String> {
    let mut state = initial.clone();
    for record in trace {
        if let (Some(robot), Some(action), Some(v)) = (record.robot, &record.action, &record.validation) {
            if v.executable {
                state = apply(&state, robot, action)
                    .map_err(|e| format!("iteration {}: {e}", record.iteration))?;
            }
        }
        let digest = state.digest_hex();
        if digest != record.digest {
            return Err(format!(
                "digest mismatch at iteration {}: trace {} vs replay {digest}",
                record.iteration, record.digest
            ));
        }
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Scripted planner (oracle replay)
// ---------------------------------------------------------------------------

/// Replays a fixed `robot: [verb] <args>` script, one line per iteration,
/// then waits. Used for oracle plans and golden traces.
pub struct ScriptPlanner {
    steps: Vec<(EntityId, Action)>,
    cursor: usize,
}

impl ScriptPlanner {
    pub fn new(steps: Vec<(EntityId, Action)>) -> Self {
        ScriptPlanner { steps, cursor: 0 }
    }

    /// Parse script lines against a scene.
    pub fn from_lines<S: AsRef<str>>(state: &WorldState, lines: &[S]) -> Result<Self, String> {
        let scene = state.scene();
        let mut steps = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let line = line.as_ref();
            let (robot_part, action_part) = line
                .split_once(':')
                .ok_or_else(|| format!("line {}: missing ':' in {line:?}", i + 1))?;
            let robot = scene
                .resolve(robot_part)
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            let info = scene
                .robot_info(robot)
                .ok_or_else(|| format!("line {}: {robot_part:?} is not a robot", i + 1))?;
            let action = crate::actions::parse_action(scene, info.archetype, action_part)
                .map_err(|e| format!("line {}: {e}", i + 1))?;
            steps.push((robot, action));
        }
        Ok(ScriptPlanner::new(steps))
    }
}

impl Planner for ScriptPlanner {
    fn name(&self) -> &str {
        "script"
    }

    fn next_decision(
        &mut self,
        _state: &WorldState,
        _iteration: u32,
    ) -> Result<Decision, PlannerError> {
        match self.steps.get(self.cursor) {
            Some((robot, action)) => {
                self.cursor += 1;
                Ok(Decision::Act {
                    robot: *robot,
                    action: action.clone(),
                })
            }
            None => Ok(Decision::Wait { robot: None }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::SceneSpec;
    use crate::world::{build_scene, Predicate, Relation};

    fn state() -> WorldState {
        let spec: SceneSpec = serde_json::from_str(
            r#"{
              "schema": 1,
              "name": "engine_flat",
              "rooms": ["living_room", "kitchen"],
              "doors": [{"id": "door_lk", "connects": ["living_room", "kitchen"], "open": true}],
              "entities": [
                {"id": "coffee_table", "kind": "surface", "room": "living_room", "height": "low"},
                {"id": "bench", "kind": "surface", "room": "kitchen", "height": "low"},
                {"id": "apple", "kind": "object", "on": "coffee_table"}
              ],
              "robots": [
                {"id": "robotic_dog", "archetype": "robotic_dog", "room": "living_room"}
              ]
            }"#,
        )
        .unwrap();
        build_scene(&spec).unwrap()
    }

    fn goal_on(state: &WorldState, subject: &str, object: &str) -> Vec<Relation> {
        vec![Relation::binary(
            Predicate::On,
            state.scene().lookup(subject).unwrap(),
            state.scene().lookup(object).unwrap(),
        )]
    }

    const FETCH_PLAN: [&str; 5] = [
        "robotic_dog: [movetowards] <apple>",
        "robotic_dog: [grab] <apple>",
        "robotic_dog: [movetowards] <kitchen>",
        "robotic_dog: [movetowards] <bench>",
        "robotic_dog: [puton] <apple> on <bench>",
    ];

    #[test]
    fn budget_is_twice_gt() {
        assert_eq!(step_budget(6).unwrap(), 12);
        assert_eq!(step_budget(1).unwrap(), 2);
        assert_eq!(step_budget(16).unwrap(), 32);
        assert!(step_budget(0).is_err());
    }

    #[test]
    fn scripted_fetch_succeeds_in_exact_steps() {
        let s = state();
        let goal = goal_on(&s, "apple", "bench");
        let mut planner = ScriptPlanner::from_lines(&s, &FETCH_PLAN).unwrap();
        let result = run_episode(&s, &goal, &mut planner, 10).unwrap();
        assert!(result.success);
        assert_eq!(result.steps_taken, 5);
        assert_eq!(result.trace.len(), 5);
        for (i, rec) in result.trace.iter().enumerate() {
            assert_eq!(rec.iteration as usize, i + 1);
            assert!(rec.validation.as_ref().unwrap().executable);
        }
    }

    #[test]
    fn invalid_planner_exhausts_budget() {
        struct BadPlanner;
        impl Planner for BadPlanner {
            fn name(&self) -> &str {
                "bad"
            }
            fn next_decision(
                &mut self,
                state: &WorldState,
                _iteration: u32,
            ) -> Result<Decision, PlannerError> {
                // Always tries to grab out of range.
                let scene = state.scene();
                Ok(Decision::Act {
                    robot: scene.lookup("robotic_dog").unwrap(),
                    action: Action::unary(
                        crate::actions::Verb::Grab,
                        scene.lookup("apple").unwrap(),
                    ),
                })
            }
        }
        let s = state();
        let goal = goal_on(&s, "apple", "bench");
        let result = run_episode(&s, &goal, &mut BadPlanner, 10).unwrap();
        assert!(!result.success);
        assert_eq!(result.steps_taken, 10);
        assert!(result
            .trace
            .iter()
            .all(|r| !r.validation.as_ref().unwrap().executable));
    }

    #[test]
    fn satisfied_goal_costs_zero_steps() {
        let s = state();
        let goal = goal_on(&s, "apple", "coffee_table");
        let mut planner = ScriptPlanner::new(vec![]);
        let result = run_episode(&s, &goal, &mut planner, 10).unwrap();
        assert!(result.success);
        assert_eq!(result.steps_taken, 0);
    }

    #[test]
    fn traces_are_deterministic_and_replayable() {
        let s = state();
        let goal = goal_on(&s, "apple", "bench");
        let run = |_: ()| {
            let mut planner = ScriptPlanner::from_lines(&s, &FETCH_PLAN).unwrap();
            run_episode(&s, &goal, &mut planner, 10).unwrap()
        };
        let a = run(());
        let b = run(());
        let lines = |r: &EpisodeResult| {
            r.trace
                .iter()
                .map(|t| serde_json::to_string(&t.to_line(&s)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(lines(&a), lines(&b));

        let final_state = replay_trace(&s, &a.trace).unwrap();
        assert!(check_goal(&final_state, &goal));
    }

    #[test]
    fn wait_iterations_consume_steps() {
        let s = state();
        let goal = goal_on(&s, "apple", "bench");
        // Script shorter than needed: trailing iterations are waits.
        let mut planner =
            ScriptPlanner::from_lines(&s, &FETCH_PLAN[..2]).unwrap();
        let result = run_episode(&s, &goal, &mut planner, 4).unwrap();
        assert!(!result.success);
        assert_eq!(result.steps_taken, 4);
        let line = result.trace[3].to_line(&s);
        assert_eq!(line.reason.as_deref(), Some("NO_PROPOSAL"));
        assert!(!line.valid);
    }
}

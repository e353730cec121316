//! The proposal-execution-feedback-adjustment orchestrator.
//!
//! Each engine iteration runs one full cycle: the centralized assigner
//! receives the task background, every robot's capabilities and rendered
//! observation, the bounded dialogue history, and the instruction, and
//! proposes one `<robot>: subtask` assignment. The assigned robot's executor
//! receives the subtask together with its own observation and feasible-action
//! list and picks one action (or waits). A rule-based reflection classifies
//! the outcome into failure feedback (wrong step / wrong robot / execution
//! limit) or progress feedback, which is appended to the dialogue history for
//! the next cycle. History keeps only the five most recent iterations.
//!
//! The planner never applies actions itself; it returns decisions for the
//! engine to validate and execute, so nothing outside the feasible list can
//! ever reach the world.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use crate::actions::{feasible_actions, render_action, validate, Action, Verb};
use crate::backend::{
    parse_executor_choice, parse_first_assignment, Assignment, ChatMessage, CompletionParams,
    ExecutorChoice, TextBackend,
};
use crate::engine::{Decision, Planner, PlannerError, TransitionRecord};
use crate::tasks::ValidatedTask;
use crate::util::contains_word;
use crate::world::{observe, render_observation, Archetype, EntityId, Scene, WorldState};

/// Version of the shipped prompt template set; recorded alongside traces so
/// golden runs pin the text they were produced with.
pub const TEMPLATE_VERSION: u32 = 1;

const BACKGROUND: &str = include_str!("../assets/prompts/background.txt");
const NOTES: &str = include_str!("../assets/prompts/notes.txt");
const CAPABILITY_QUADROTOR: &str = include_str!("../assets/prompts/capability_quadrotor.txt");
const CAPABILITY_DOG: &str = include_str!("../assets/prompts/capability_robotic_dog.txt");
const CAPABILITY_ARM: &str = include_str!("../assets/prompts/capability_robotic_arm.txt");
const ASSIGNER_SYSTEM: &str = include_str!("../assets/prompts/assigner_system.txt");
const ASSIGNER_USER: &str = include_str!("../assets/prompts/assigner_user.txt");
const EXECUTOR_SYSTEM: &str = include_str!("../assets/prompts/executor_system.txt");
const EXECUTOR_USER: &str = include_str!("../assets/prompts/executor_user.txt");

pub fn capability_text(archetype: Archetype) -> &'static str {
    match archetype {
        Archetype::Quadrotor => CAPABILITY_QUADROTOR,
        Archetype::RoboticDog => CAPABILITY_DOG,
        Archetype::RoboticArm => CAPABILITY_ARM,
    }
}

fn render_template(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in substitutions {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

// ---------------------------------------------------------------------------
// Feedback
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FeedbackKind {
    Failure,
    SuccessPartial,
    SuccessComplete,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FailureSituation {
    WrongStep,
    WrongRobot,
    ExecutionLimit,
}

impl FailureSituation {
    pub fn label(self) -> &'static str {
        match self {
            FailureSituation::WrongStep => "wrong_step",
            FailureSituation::WrongRobot => "wrong_robot",
            FailureSituation::ExecutionLimit => "execution_limit",
        }
    }
}

/// Self-reflection output for one execution cycle.
#[derive(Clone, Debug)]
pub struct Feedback {
    pub kind: FeedbackKind,
    /// Present iff `kind` is `Failure`.
    pub failure_situation: Option<FailureSituation>,
    pub detail: String,
    /// Present on success feedback.
    pub progress: Option<String>,
}

impl Feedback {
    pub fn render(&self) -> String {
        match self.kind {
            FeedbackKind::Failure => format!(
                "[failure:{}] {}",
                self.failure_situation.expect("failure has situation").label(),
                self.detail
            ),
            FeedbackKind::SuccessPartial => {
                format!("[success_partial] {}", self.progress.as_deref().unwrap_or(""))
            }
            FeedbackKind::SuccessComplete => {
                format!("[success_complete] {}", self.progress.as_deref().unwrap_or(""))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Assigner context and prompt assembly
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct HistoryEntry {
    pub iteration: u32,
    /// `(robot name, subtask)` when a proposal parsed this cycle.
    pub proposal: Option<(String, String)>,
    pub feedback: Option<Feedback>,
}

impl HistoryEntry {
    fn render(&self) -> String {
        let mut out = format!("Iteration {}:\n", self.iteration);
        match &self.proposal {
            Some((robot, subtask)) => {
                out.push_str(&format!("  proposal: {robot}: {subtask}\n"));
            }
            None => out.push_str("  proposal: (no parseable proposal)\n"),
        }
        if let Some(feedback) = &self.feedback {
            out.push_str(&format!("  feedback: {}\n", feedback.render()));
        }
        out
    }
}

/// Everything the assigner prompt is assembled from. The dialogue history
/// window holds at most [`AssignerContext::window`] recent iterations.
#[derive(Clone, Debug)]
pub struct AssignerContext {
    pub instruction: String,
    pub background: String,
    pub capabilities: String,
    pub notes: String,
    pub observations: String,
    pub history: VecDeque<HistoryEntry>,
    pub window: usize,
    /// Ablation switch: when false the prompt's history section is emptied.
    pub use_history: bool,
}

impl AssignerContext {
    pub fn new(scene: &Scene, instruction: &str, window: usize, use_history: bool) -> Self {
        let mut archetypes: Vec<Archetype> = scene.robots().iter().map(|r| r.archetype).collect();
        archetypes.sort_by_key(|a| a.label());
        archetypes.dedup();
        let mut capabilities = String::new();
        for archetype in archetypes {
            capabilities.push_str(capability_text(archetype).trim_end());
            capabilities.push('\n');
        }
        capabilities.push_str("Robots on site:\n");
        for info in scene.robots() {
            capabilities.push_str(&format!(
                "- {} (a {})\n",
                scene.name_of(info.robot),
                info.archetype.label()
            ));
        }
        AssignerContext {
            instruction: instruction.to_string(),
            background: BACKGROUND.trim_end().to_string(),
            capabilities,
            notes: NOTES.trim_end().to_string(),
            observations: String::new(),
            history: VecDeque::new(),
            window,
            use_history,
        }
    }

    /// Append one cycle's record and drop anything beyond the window.
    pub fn adjust(&mut self, entry: HistoryEntry) {
        self.history.push_back(entry);
        while self.history.len() > self.window {
            self.history.pop_front();
        }
    }

    pub fn refresh_observations(&mut self, state: &WorldState) {
        self.observations = render_all_observations(state);
    }

    fn history_text(&self) -> String {
        if !self.use_history || self.history.is_empty() {
            return "none".to_string();
        }
        self.history
            .iter()
            .map(HistoryEntry::render)
            .collect::<Vec<_>>()
            .join("")
    }
}

/// Render every robot's partial observation, one block per robot.
pub fn render_all_observations(state: &WorldState) -> String {
    let scene = state.scene();
    let mut out = String::new();
    for info in scene.robots() {
        let obs = observe(state, info.robot).expect("scene robot observes");
        out.push_str(&format!(
            "{} (a {}) in {} sees:\n",
            scene.name_of(info.robot),
            info.archetype.label(),
            scene.name_of(obs.room)
        ));
        let text = render_observation(state, &obs);
        if text.is_empty() {
            out.push_str("  (nothing)\n");
        } else {
            for line in text.lines() {
                out.push_str("  ");
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

/// Deterministic assigner message list: system carries background,
/// capabilities, and notes; user carries observations, bounded history,
/// and the instruction with the output-format requirement.
pub fn build_assigner_prompt(ctx: &AssignerContext) -> Vec<ChatMessage> {
    let system = render_template(
        ASSIGNER_SYSTEM,
        &[
            ("background", ctx.background.as_str()),
            ("capabilities", ctx.capabilities.trim_end()),
            ("notes", ctx.notes.as_str()),
        ],
    );
    let user = render_template(
        ASSIGNER_USER,
        &[
            ("observations", ctx.observations.trim_end()),
            ("history", ctx.history_text().trim_end()),
            ("instruction", ctx.instruction.as_str()),
        ],
    );
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

fn build_executor_prompt(
    state: &WorldState,
    robot: EntityId,
    subtask: &str,
    feasible: &[Action],
) -> Vec<ChatMessage> {
    let scene = state.scene();
    let info = scene.robot_info(robot).expect("assigned robot exists");
    let obs = observe(state, robot).expect("assigned robot observes");
    let obs_text = render_observation(state, &obs);
    let feasible_text = if feasible.is_empty() {
        "(none)".to_string()
    } else {
        feasible
            .iter()
            .map(|a| format!("- {}", render_action(scene, a)))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let example = feasible
        .first()
        .map(|a| render_action(scene, a))
        .unwrap_or_else(|| "[grab] <apple>".to_string());
    let system = render_template(
        EXECUTOR_SYSTEM,
        &[
            ("robot", scene.name_of(robot)),
            ("archetype", info.archetype.label()),
            ("capabilities", capability_text(info.archetype).trim_end()),
            ("notes", NOTES.trim_end()),
        ],
    );
    let user = render_template(
        EXECUTOR_USER,
        &[
            ("subtask", subtask),
            ("observation", if obs_text.is_empty() { "(nothing)" } else { &obs_text }),
            ("feasible", &feasible_text),
            ("example", &example),
        ],
    );
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

// ---------------------------------------------------------------------------
// Reflection
// ---------------------------------------------------------------------------

/// How the executor resolved its assigned subtask this cycle.
#[derive(Clone, Debug)]
pub enum ActionChoice {
    Executed(Action),
    Waited {
        /// A grammatical action stated by the executor that was not in the
        /// feasible list (the hallucinated intent).
        intended: Option<Action>,
        /// An entity name in the reply or subtask that does not exist.
        unknown_entity: Option<String>,
    },
}

/// Scene entities mentioned in a subtask (bracketed or bare names), plus any
/// bracketed token that names nothing in the scene.
fn mentioned_entities(scene: &Scene, text: &str) -> (BTreeSet<EntityId>, Option<String>) {
    let lower = text.to_lowercase();
    let mut mentioned = BTreeSet::new();
    let mut unknown = None;
    let mut rest = lower.as_str();
    while let Some(start) = rest.find('<') {
        let Some(end) = rest[start..].find('>').map(|i| start + i) else {
            break;
        };
        let token = crate::util::normalize_token(&rest[start + 1..end]);
        match scene.lookup(&token) {
            Some(id) => {
                mentioned.insert(id);
            }
            None if !token.is_empty() && unknown.is_none() => unknown = Some(token),
            None => {}
        }
        rest = &rest[end + 1..];
    }
    for e in scene.entities() {
        let name = scene.name_of(e);
        if contains_word(&lower, name) || contains_word(&lower, &name.replace('_', " ")) {
            mentioned.insert(e);
        }
    }
    (mentioned, unknown)
}

/// Map free-text subtask wording to the verbs it asks for.
fn subtask_verb_intents(subtask: &str) -> BTreeSet<Verb> {
    const LEXICON: &[(&str, &[Verb])] = &[
        ("grab", &[Verb::Grab]),
        ("pick", &[Verb::Grab]),
        ("take", &[Verb::Grab]),
        ("fetch", &[Verb::Grab]),
        ("collect", &[Verb::Grab]),
        ("retrieve", &[Verb::Grab]),
        ("put", &[Verb::Puton, Verb::Putinto]),
        ("place", &[Verb::Puton, Verb::Putinto]),
        ("set", &[Verb::Puton]),
        ("load", &[Verb::Putinto]),
        ("insert", &[Verb::Putinto]),
        ("drop", &[Verb::Putinto]),
        ("give", &[Verb::Putinto, Verb::Puton]),
        ("hand", &[Verb::Putinto, Verb::Puton]),
        ("deliver", &[Verb::Putinto, Verb::Puton]),
        ("open", &[Verb::Open]),
        ("unlock", &[Verb::Open]),
        ("close", &[Verb::Close]),
        ("shut", &[Verb::Close]),
        ("walk", &[Verb::Movetowards]),
        ("go", &[Verb::Movetowards]),
        ("move", &[Verb::Movetowards]),
        ("approach", &[Verb::Movetowards]),
        ("head", &[Verb::Movetowards]),
        ("come", &[Verb::Movetowards]),
        ("navigate", &[Verb::Movetowards]),
        ("patrol", &[Verb::Movetowards]),
        ("fly", &[Verb::Movetowards, Verb::TakeoffFrom, Verb::LandOn]),
        ("transport", &[Verb::Movetowards, Verb::TakeoffFrom, Verb::LandOn]),
        ("carry", &[Verb::Movetowards]),
        ("takeoff", &[Verb::TakeoffFrom]),
        ("land", &[Verb::LandOn]),
    ];
    let lower = subtask.to_lowercase();
    let mut intents = BTreeSet::new();
    for (word, verbs) in LEXICON {
        if contains_word(&lower, word) {
            intents.extend(verbs.iter().copied());
        }
    }
    // "take off" reads as a flight intent, not a grab.
    if lower.contains("take off") {
        intents.insert(Verb::TakeoffFrom);
    }
    intents
}

/// Rule-based self-reflection over one execution cycle: classifies failures
/// into wrong step / wrong robot / execution limit, and successes into
/// complete or partial subtask progress.
pub fn reflect(
    assignment: &Assignment,
    choice: &ActionChoice,
    state_before: &WorldState,
    state_after: &WorldState,
) -> Feedback {
    let scene = state_after.scene();
    let robot = assignment.robot;
    let robot_name = scene.name_of(robot);
    let archetype = scene.robot_info(robot).expect("assigned robot").archetype;

    match choice {
        ActionChoice::Executed(action) => {
            let (mentioned, _) = mentioned_entities(scene, &assignment.subtask);
            // Entities the executed action touched, including everything the
            // moved items now sit on or in.
            let mut covered: BTreeSet<EntityId> = BTreeSet::new();
            covered.insert(robot);
            for &arg in &action.args {
                for e in state_after.anchor_chain(arg) {
                    covered.insert(e);
                }
            }
            if let Some(room) = state_after.robot_state(robot).ok().map(|r| r.room) {
                covered.insert(room);
            }
            let outstanding: Vec<&str> = mentioned
                .difference(&covered)
                .map(|&e| scene.name_of(e))
                .collect();
            let rendered = render_action(scene, action);
            if outstanding.is_empty() {
                Feedback {
                    kind: FeedbackKind::SuccessComplete,
                    failure_situation: None,
                    detail: String::new(),
                    progress: Some(format!(
                        "{robot_name} executed {rendered}; the subtask is satisfied"
                    )),
                }
            } else {
                Feedback {
                    kind: FeedbackKind::SuccessPartial,
                    failure_situation: None,
                    detail: String::new(),
                    progress: Some(format!(
                        "{robot_name} executed {rendered}; the subtask also involves {} — further actions are required",
                        outstanding.join(", ")
                    )),
                }
            }
        }
        ActionChoice::Waited {
            intended,
            unknown_entity,
        } => {
            let (_, unknown_in_subtask) = mentioned_entities(scene, &assignment.subtask);
            if let Some(unknown) = unknown_entity.clone().or(unknown_in_subtask) {
                return Feedback {
                    kind: FeedbackKind::Failure,
                    failure_situation: Some(FailureSituation::WrongStep),
                    detail: format!(
                        "the proposal references <{unknown}>, which does not exist in the scene; the step cannot contribute to the task"
                    ),
                    progress: None,
                };
            }
            let intents = subtask_verb_intents(&assignment.subtask);
            let supported = crate::actions::archetype_verbs(archetype);
            if !intents.is_empty() && intents.iter().all(|v| !supported.contains(v)) {
                return Feedback {
                    kind: FeedbackKind::Failure,
                    failure_situation: Some(FailureSituation::WrongRobot),
                    detail: format!(
                        "{robot_name} (a {}) lacks the capability to complete this subtask, requiring the assistance of a different type of robot",
                        archetype.label()
                    ),
                    progress: None,
                };
            }
            if let Some(action) = intended {
                if let Ok(outcome) = validate(state_before, robot, action) {
                    if !outcome.executable {
                        return Feedback {
                            kind: FeedbackKind::Failure,
                            failure_situation: Some(FailureSituation::ExecutionLimit),
                            detail: format!(
                                "{} is not executable: {}",
                                render_action(scene, action),
                                outcome.detail
                            ),
                            progress: None,
                        };
                    }
                }
            }
            if intents.is_empty() {
                return Feedback {
                    kind: FeedbackKind::Failure,
                    failure_situation: Some(FailureSituation::WrongStep),
                    detail: format!(
                        "the subtask {:?} does not map to any action {robot_name} supports; the step looks wrong for the task",
                        assignment.subtask
                    ),
                    progress: None,
                };
            }
            Feedback {
                kind: FeedbackKind::Failure,
                failure_situation: Some(FailureSituation::ExecutionLimit),
                detail: format!(
                    "{robot_name} found no feasible action for this subtask in the current state and waits for an updated instruction"
                ),
                progress: None,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The planner
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct PefaConfig {
    pub history_window: usize,
    /// Re-queries with a format reminder before degrading to a no-op/wait.
    pub retry_budget: u32,
    pub use_history: bool,
    pub params: CompletionParams,
}

impl Default for PefaConfig {
    fn default() -> Self {
        PefaConfig {
            history_window: 5,
            retry_budget: 2,
            use_history: true,
            params: CompletionParams::default(),
        }
    }
}

struct PendingCycle {
    assignment: Assignment,
    choice: ActionChoice,
    state_before: WorldState,
}

pub struct PefaPlanner {
    backend: Arc<dyn TextBackend>,
    config: PefaConfig,
    ctx: AssignerContext,
    pending: Option<PendingCycle>,
    feedback_log: Vec<(u32, Feedback)>,
}

impl PefaPlanner {
    pub fn new(
        state: &WorldState,
        instruction: &str,
        backend: Arc<dyn TextBackend>,
        config: PefaConfig,
    ) -> Self {
        let ctx = AssignerContext::new(
            state.scene(),
            instruction,
            config.history_window,
            config.use_history,
        );
        PefaPlanner {
            backend,
            config,
            ctx,
            pending: None,
            feedback_log: Vec::new(),
        }
    }

    pub fn context(&self) -> &AssignerContext {
        &self.ctx
    }

    /// Every feedback produced so far, tagged with its iteration.
    pub fn feedback_log(&self) -> &[(u32, Feedback)] {
        &self.feedback_log
    }

    fn propose(&mut self, state: &WorldState) -> Option<Assignment> {
        let scene = state.scene();
        let mut messages = build_assigner_prompt(&self.ctx);
        for _attempt in 0..=self.config.retry_budget {
            let reply = match self.backend.complete(&messages, &self.config.params) {
                Ok(text) => text,
                Err(_) => return None,
            };
            match parse_first_assignment(scene, &reply) {
                Ok(assignment) => return Some(assignment),
                Err(_) => {
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(
                        "That reply did not contain a valid assignment. Reply with exactly \
                         one line in the format `<robot>: subtask`, naming one of the robots."
                            .to_string(),
                    ));
                }
            }
        }
        None
    }

    fn execute_assigned(
        &mut self,
        state: &WorldState,
        assignment: &Assignment,
    ) -> (ActionChoice, Option<crate::actions::ValidationOutcome>) {
        let scene = state.scene().clone();
        let robot = assignment.robot;
        let archetype = scene.robot_info(robot).expect("assigned robot").archetype;
        let feasible = feasible_actions(state, robot).expect("assigned robot exists");
        let mut messages = build_executor_prompt(state, robot, &assignment.subtask, &feasible);
        let mut intended: Option<Action> = None;
        let mut unknown_entity: Option<String> = None;

        for _attempt in 0..=self.config.retry_budget {
            let reply = match self.backend.complete(&messages, &self.config.params) {
                Ok(text) => text,
                Err(_) => break,
            };
            // Remember any grammatical action the executor stated, even if
            // infeasible: reflection validates it to explain the failure.
            match crate::actions::parse_action(&scene, archetype, &reply) {
                Ok(action) => intended = Some(action),
                Err(crate::actions::ParseError::UnknownEntity(name)) => {
                    unknown_entity.get_or_insert(name);
                }
                Err(_) => {}
            }
            match parse_executor_choice(&scene, &reply, &feasible) {
                ExecutorChoice::Action(action) => {
                    let outcome = validate(state, robot, &action).expect("feasible validates");
                    return (ActionChoice::Executed(action), Some(outcome));
                }
                ExecutorChoice::Wait => break,
                ExecutorChoice::NoMatch => {
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(
                        "That reply did not name an action from the feasible list. Reply with \
                         the exact text of one listed action, or `wait`."
                            .to_string(),
                    ));
                }
            }
        }
        let validation = intended
            .as_ref()
            .and_then(|a| validate(state, robot, a).ok());
        (
            ActionChoice::Waited {
                intended,
                unknown_entity,
            },
            validation,
        )
    }
}

impl Planner for PefaPlanner {
    fn name(&self) -> &str {
        if self.config.use_history {
            "pefa"
        } else {
            "pefa-no-history"
        }
    }

    fn next_decision(
        &mut self,
        state: &WorldState,
        _iteration: u32,
    ) -> Result<Decision, PlannerError> {
        self.ctx.refresh_observations(state);
        let Some(assignment) = self.propose(state) else {
            self.pending = None;
            return Ok(Decision::Wait { robot: None });
        };
        let (choice, _validation) = self.execute_assigned(state, &assignment);
        let decision = match &choice {
            ActionChoice::Executed(action) => Decision::Act {
                robot: assignment.robot,
                action: action.clone(),
            },
            // A stated action outside the feasible list still goes through
            // engine validation, so the trace records why the robot stayed
            // still; the engine never applies it.
            ActionChoice::Waited {
                intended: Some(action),
                ..
            } => Decision::Act {
                robot: assignment.robot,
                action: action.clone(),
            },
            ActionChoice::Waited { intended: None, .. } => Decision::Wait {
                robot: Some(assignment.robot),
            },
        };
        self.pending = Some(PendingCycle {
            assignment,
            choice,
            state_before: state.clone(),
        });
        Ok(decision)
    }

    fn note_transition(&mut self, record: &TransitionRecord, state_after: &WorldState) {
        let entry = match self.pending.take() {
            Some(pending) => {
                let feedback = reflect(
                    &pending.assignment,
                    &pending.choice,
                    &pending.state_before,
                    state_after,
                );
                self.feedback_log.push((record.iteration, feedback.clone()));
                let scene = state_after.scene();
                HistoryEntry {
                    iteration: record.iteration,
                    proposal: Some((
                        scene.name_of(pending.assignment.robot).to_string(),
                        pending.assignment.subtask.clone(),
                    )),
                    feedback: Some(feedback),
                }
            }
            None => HistoryEntry {
                iteration: record.iteration,
                proposal: None,
                feedback: None,
            },
        };
        self.ctx.adjust(entry);
    }
}

/// Run one task under the PEFA orchestrator with the step budget derived
/// from the task's optimal step count.
pub fn run_pefa(
    state: &WorldState,
    task: &ValidatedTask,
    backend: Arc<dyn TextBackend>,
    config: PefaConfig,
) -> Result<crate::engine::EpisodeResult, crate::engine::EngineError> {
    let budget = crate::engine::step_budget(task.spec.gt_steps)?;
    let mut planner = PefaPlanner::new(state, &task.spec.instruction, backend, config);
    crate::engine::run_episode(state, &task.goal, &mut planner, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::tasks::SceneSpec;
    use crate::world::build_scene;

    fn state() -> WorldState {
        let spec: SceneSpec = serde_json::from_str(
            r#"{
              "schema": 1,
              "name": "pefa_flat",
              "rooms": ["living_room", "balcony"],
              "doors": [{"id": "door_lb", "connects": ["living_room", "balcony"], "open": true}],
              "entities": [
                {"id": "coffee_table", "kind": "surface", "room": "living_room", "height": "low"},
                {"id": "dining_table", "kind": "surface", "room": "living_room", "height": "high"},
                {"id": "apple", "kind": "object", "on": "coffee_table"}
              ],
              "robots": [
                {"id": "robotic_dog", "archetype": "robotic_dog", "room": "living_room"},
                {"id": "quadrotor", "archetype": "quadrotor", "room": "balcony", "basket": "basket"},
                {"id": "arm_1", "archetype": "robotic_arm", "room": "living_room", "workspace": ["dining_table"]}
              ]
            }"#,
        )
        .unwrap();
        build_scene(&spec).unwrap()
    }

    fn assignment(state: &WorldState, robot: &str, subtask: &str) -> Assignment {
        Assignment {
            robot: state.scene().lookup(robot).unwrap(),
            subtask: subtask.to_string(),
        }
    }

    #[test]
    fn prompt_contains_observations_and_capability_blurbs() {
        let s = state();
        let mut ctx = AssignerContext::new(s.scene(), "Put the apple on the dining table.", 5, true);
        ctx.refresh_observations(&s);
        let messages = build_assigner_prompt(&ctx);
        assert_eq!(messages.len(), 2);
        let all: String = messages.iter().map(|m| m.content.clone()).collect();
        assert!(all.contains("ON(apple, coffee_table)"));
        assert!(all.contains("quadrotor:"));
        assert!(all.contains("robotic_dog:"));
        assert!(all.contains("robotic_arm:"));
        assert!(all.contains("Dialogue history"));
        assert!(all.contains("none"));
    }

    #[test]
    fn history_window_keeps_five_most_recent() {
        let s = state();
        let mut ctx = AssignerContext::new(s.scene(), "task", 5, true);
        for i in 1..=7 {
            ctx.adjust(HistoryEntry {
                iteration: i,
                proposal: Some(("robotic_dog".into(), format!("step {i}"))),
                feedback: None,
            });
        }
        assert_eq!(ctx.history.len(), 5);
        ctx.refresh_observations(&s);
        let text: String = build_assigner_prompt(&ctx)
            .iter()
            .map(|m| m.content.clone())
            .collect();
        for present in 3..=7 {
            assert!(text.contains(&format!("Iteration {present}:")), "{present}");
        }
        for absent in 1..=2 {
            assert!(!text.contains(&format!("Iteration {absent}:")), "{absent}");
        }
    }

    #[test]
    fn no_history_flag_empties_the_section() {
        let s = state();
        let mut ctx = AssignerContext::new(s.scene(), "task", 5, false);
        ctx.adjust(HistoryEntry {
            iteration: 1,
            proposal: Some(("robotic_dog".into(), "step".into())),
            feedback: None,
        });
        ctx.refresh_observations(&s);
        let text: String = build_assigner_prompt(&ctx)
            .iter()
            .map(|m| m.content.clone())
            .collect();
        assert!(!text.contains("Iteration 1"));
    }

    #[test]
    fn reflect_execution_limit_on_height() {
        let s0 = state();
        let dog = s0.scene().lookup("robotic_dog").unwrap();
        let apple = s0.scene().lookup("apple").unwrap();
        let dining = s0.scene().lookup("dining_table").unwrap();
        // Dog holds the apple near the dining table.
        let s1 = crate::actions::apply(
            &s0,
            dog,
            &Action::unary(Verb::Movetowards, apple),
        )
        .unwrap();
        let s2 = crate::actions::apply(&s1, dog, &Action::unary(Verb::Grab, apple)).unwrap();
        let s3 = crate::actions::apply(&s2, dog, &Action::unary(Verb::Movetowards, dining)).unwrap();
        let a = assignment(&s3, "robotic_dog", "put the <apple> on the <dining_table>");
        let choice = ActionChoice::Waited {
            intended: Some(Action::binary(Verb::Puton, apple, dining)),
            unknown_entity: None,
        };
        let feedback = reflect(&a, &choice, &s3, &s3);
        assert_eq!(feedback.kind, FeedbackKind::Failure);
        assert_eq!(
            feedback.failure_situation,
            Some(FailureSituation::ExecutionLimit)
        );
        assert!(feedback.detail.contains("high"), "{}", feedback.detail);
    }

    #[test]
    fn reflect_wrong_robot_on_locomotion_subtask_for_arm() {
        let s = state();
        let a = assignment(&s, "arm_1", "walk to the balcony and patrol");
        let choice = ActionChoice::Waited {
            intended: None,
            unknown_entity: None,
        };
        let feedback = reflect(&a, &choice, &s, &s);
        assert_eq!(feedback.failure_situation, Some(FailureSituation::WrongRobot));
        assert!(feedback.detail.contains("different type of robot"));
    }

    #[test]
    fn reflect_wrong_step_on_unknown_entity() {
        let s = state();
        let a = assignment(&s, "robotic_dog", "bring the <unicorn> to the <castle>");
        let choice = ActionChoice::Waited {
            intended: None,
            unknown_entity: None,
        };
        let feedback = reflect(&a, &choice, &s, &s);
        assert_eq!(feedback.failure_situation, Some(FailureSituation::WrongStep));
        assert!(feedback.detail.contains("unicorn"));
    }

    #[test]
    fn reflect_partial_then_complete_progress() {
        let s0 = state();
        let dog = s0.scene().lookup("robotic_dog").unwrap();
        let apple = s0.scene().lookup("apple").unwrap();
        let s1 = crate::actions::apply(&s0, dog, &Action::unary(Verb::Movetowards, apple)).unwrap();
        let s2 = crate::actions::apply(&s1, dog, &Action::unary(Verb::Grab, apple)).unwrap();
        let a = assignment(
            &s0,
            "robotic_dog",
            "pick up the <apple> and give it to <quadrotor>",
        );
        // Grab alone covers the apple but not the quadrotor: partial.
        let feedback = reflect(
            &a,
            &ActionChoice::Executed(Action::unary(Verb::Grab, apple)),
            &s1,
            &s2,
        );
        assert_eq!(feedback.kind, FeedbackKind::SuccessPartial);
        assert!(feedback.progress.as_ref().unwrap().contains("quadrotor"));

        // A simple one-step subtask is fully satisfied.
        let simple = assignment(&s0, "robotic_dog", "grab the <apple>");
        let feedback = reflect(
            &simple,
            &ActionChoice::Executed(Action::unary(Verb::Grab, apple)),
            &s1,
            &s2,
        );
        assert_eq!(feedback.kind, FeedbackKind::SuccessComplete);
    }

    #[test]
    fn unparseable_proposals_degrade_to_noop_iterations() {
        let s = state();
        let backend = Arc::new(ScriptedBackend::new(vec![
            "thinking...".into(),
            "still thinking".into(),
            "no format here".into(),
        ]));
        let mut planner = PefaPlanner::new(&s, "move the apple", backend, PefaConfig::default());
        let decision = planner.next_decision(&s, 1).unwrap();
        assert!(matches!(decision, Decision::Wait { robot: None }));
    }
}

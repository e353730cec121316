//! Comparison planners: a centralized single-LLM planner (CMRS), dialogue
//! planners with one or two rounds per cycle (DMRS-1D/2D), primitive Monte
//! Carlo tree search with random rollouts and the goal as reward, and an
//! LLM-guided variant where completion scores serve as priors in the tree
//! policy.
//!
//! The search space is the union of per-robot feasible actions (one robot
//! acts per step); tree selection uses the predictor-weighted UCT rule
//! `Q(s,a) + c * prior(a) * sqrt(N(s)) / (1 + N(s,a))`, with ties broken
//! lexicographically on the rendered `robot: action` text. Primitive search
//! is the same machinery under uniform priors.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::actions::{apply_feasible, feasible_actions, render_action, Action};
use crate::backend::{
    parse_assignment, parse_executor_choice, ChatMessage, CompletionParams, ExecutorChoice,
    TextBackend,
};
use crate::engine::{Decision, Planner, PlannerError};
use crate::pefa::{capability_text, render_all_observations};
use crate::world::{check_goal, observe, render_observation, EntityId, Relation, WorldState};

// ---------------------------------------------------------------------------
// CMRS: one central LLM maps everything to the next action
// ---------------------------------------------------------------------------

pub struct CmrsPlanner {
    backend: Arc<dyn TextBackend>,
    instruction: String,
    params: CompletionParams,
    retry_budget: u32,
}

impl CmrsPlanner {
    pub fn new(instruction: &str, backend: Arc<dyn TextBackend>) -> Self {
        CmrsPlanner {
            backend,
            instruction: instruction.to_string(),
            params: CompletionParams::default(),
            retry_budget: 2,
        }
    }

    fn prompt(&self, state: &WorldState) -> Vec<ChatMessage> {
        let scene = state.scene();
        let mut archetypes: Vec<_> = scene.robots().iter().map(|r| r.archetype).collect();
        archetypes.sort_by_key(|a| a.label());
        archetypes.dedup();
        let capabilities: String = archetypes
            .iter()
            .map(|&a| capability_text(a).trim_end().to_string())
            .collect::<Vec<_>>()
            .join("\n");

        let mut feasible_text = String::new();
        for info in scene.robots() {
            feasible_text.push_str(&format!("{} can execute:\n", scene.name_of(info.robot)));
            let actions = feasible_actions(state, info.robot).expect("scene robot");
            if actions.is_empty() {
                feasible_text.push_str("  (nothing)\n");
            }
            for action in actions {
                feasible_text.push_str(&format!("  {}\n", render_action(scene, &action)));
            }
        }

        let system = format!(
            "You are the single central controller of a heterogeneous robot team.\n{capabilities}"
        );
        let user = format!(
            "Observations:\n{obs}\nFeasible actions per robot:\n{feasible_text}\n\
             Task instruction: {instruction}\n\n\
             Choose exactly one robot and one action from its feasible list.\n\
             Reply with one line in the format `<robot>: [verb] <argument>`.",
            obs = render_all_observations(state),
            instruction = self.instruction,
        );
        vec![ChatMessage::system(system), ChatMessage::user(user)]
    }
}

impl Planner for CmrsPlanner {
    fn name(&self) -> &str {
        "cmrs"
    }

    fn next_decision(
        &mut self,
        state: &WorldState,
        _iteration: u32,
    ) -> Result<Decision, PlannerError> {
        let scene = state.scene().clone();
        let mut messages = self.prompt(state);
        let mut assigned_robot: Option<EntityId> = None;
        for _attempt in 0..=self.retry_budget {
            let reply = match self.backend.complete(&messages, &self.params) {
                Ok(text) => text,
                Err(_) => break,
            };
            if let Ok(assignment) = parse_assignment(&scene, &reply) {
                assigned_robot = Some(assignment.robot);
                let feasible = feasible_actions(state, assignment.robot).expect("robot exists");
                match parse_executor_choice(&scene, &assignment.subtask, &feasible) {
                    ExecutorChoice::Action(action) => {
                        return Ok(Decision::Act {
                            robot: assignment.robot,
                            action,
                        });
                    }
                    ExecutorChoice::Wait => {
                        return Ok(Decision::Wait {
                            robot: Some(assignment.robot),
                        })
                    }
                    ExecutorChoice::NoMatch => {}
                }
            }
            messages.push(ChatMessage::user(
                "That reply did not name a robot together with one of its feasible actions. \
                 Reply `<robot>: [verb] <argument>` using an action from the list."
                    .to_string(),
            ));
        }
        Ok(Decision::Wait {
            robot: assigned_robot,
        })
    }
}

// ---------------------------------------------------------------------------
// DMRS: decentralized dialogue, last robot concludes
// ---------------------------------------------------------------------------

pub struct DmrsPlanner {
    backend: Arc<dyn TextBackend>,
    instruction: String,
    rounds: u32,
    params: CompletionParams,
    transcripts: Vec<Vec<(String, String)>>,
}

impl DmrsPlanner {
    /// `rounds` is 1 or 2. Requires at least two robots in the scene.
    pub fn new(
        state: &WorldState,
        instruction: &str,
        rounds: u32,
        backend: Arc<dyn TextBackend>,
    ) -> Result<Self, PlannerError> {
        if !(1..=2).contains(&rounds) {
            return Err(PlannerError::new(format!(
                "dialogue rounds must be 1 or 2, got {rounds}"
            )));
        }
        if state.scene().robots().len() < 2 {
            return Err(PlannerError::new(
                "dialogue planning requires at least two robots",
            ));
        }
        Ok(DmrsPlanner {
            backend,
            instruction: instruction.to_string(),
            rounds,
            params: CompletionParams::default(),
            transcripts: Vec::new(),
        })
    }

    /// Full dialogue transcripts, one per engine iteration.
    pub fn transcripts(&self) -> &[Vec<(String, String)>] {
        &self.transcripts
    }
}

impl Planner for DmrsPlanner {
    fn name(&self) -> &str {
        match self.rounds {
            1 => "dmrs1",
            _ => "dmrs2",
        }
    }

    fn next_decision(
        &mut self,
        state: &WorldState,
        _iteration: u32,
    ) -> Result<Decision, PlannerError> {
        let scene = state.scene().clone();
        let robots = scene.robots();
        let mut transcript: Vec<(String, String)> = Vec::new();

        for round in 0..self.rounds {
            for (slot, info) in robots.iter().enumerate() {
                let name = scene.name_of(info.robot).to_string();
                let is_final_speaker = round + 1 == self.rounds && slot + 1 == robots.len();
                let obs = observe(state, info.robot).expect("scene robot");
                let feasible = feasible_actions(state, info.robot).expect("scene robot");
                let feasible_text: String = feasible
                    .iter()
                    .map(|a| format!("  {}\n", render_action(&scene, a)))
                    .collect();
                let dialogue: String = transcript
                    .iter()
                    .map(|(speaker, text)| format!("{speaker}: {text}\n"))
                    .collect();
                let closing = if is_final_speaker {
                    "Summarize the dialogue and conclude with exactly one line \
                     `<robot>: [verb] <argument>` choosing one robot and one action \
                     from that robot's stated feasible list."
                } else {
                    "Suggest what should happen next, e.g. `I suggest <robot> execute \
                     [verb] <argument>`."
                };
                let system = format!(
                    "You are {name}, one robot in a team deciding its next step by dialogue.\n{}",
                    capability_text(info.archetype).trim_end()
                );
                let user = format!(
                    "Task instruction: {instruction}\n\nYour observation:\n{obs}\n\n\
                     Your feasible actions:\n{feasible}\nDialogue so far this round:\n{dialogue}\n{closing}",
                    instruction = self.instruction,
                    obs = render_observation(state, &obs),
                    feasible = feasible_text,
                    dialogue = if dialogue.is_empty() { "(you speak first)\n".to_string() } else { dialogue },
                );
                let reply = self
                    .backend
                    .complete(
                        &[ChatMessage::system(system), ChatMessage::user(user)],
                        &self.params,
                    )
                    .unwrap_or_default();
                transcript.push((name, reply));
            }
        }

        let conclusion = transcript
            .last()
            .map(|(_, text)| text.clone())
            .unwrap_or_default();
        self.transcripts.push(transcript);

        match parse_assignment(&scene, &conclusion) {
            Ok(assignment) => {
                let feasible = feasible_actions(state, assignment.robot).expect("robot exists");
                match parse_executor_choice(&scene, &assignment.subtask, &feasible) {
                    ExecutorChoice::Action(action) => Ok(Decision::Act {
                        robot: assignment.robot,
                        action,
                    }),
                    _ => Ok(Decision::Wait {
                        robot: Some(assignment.robot),
                    }),
                }
            }
            Err(_) => Ok(Decision::Wait { robot: None }),
        }
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo tree search
// ---------------------------------------------------------------------------

/// A single-robot move inside the joint search space.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct JointAction {
    pub robot: EntityId,
    pub action: Action,
}

pub fn render_joint(state: &WorldState, joint: &JointAction) -> String {
    format!(
        "{}: {}",
        state.scene().name_of(joint.robot),
        render_action(state.scene(), &joint.action)
    )
}

/// Union of every robot's feasible actions, sorted by rendered text.
pub fn joint_feasible(state: &WorldState) -> Vec<JointAction> {
    let scene = state.scene();
    let mut out = Vec::new();
    for info in scene.robots() {
        for action in feasible_actions(state, info.robot).expect("scene robot") {
            out.push(JointAction {
                robot: info.robot,
                action,
            });
        }
    }
    out.sort_by(|a, b| {
        scene
            .name_of(a.robot)
            .cmp(scene.name_of(b.robot))
            .then_with(|| crate::actions::action_text_order(scene, &a.action, &b.action))
    });
    out
}

#[derive(Clone, Debug)]
pub struct MctsParams {
    pub iterations: u32,
    pub c_puct: f64,
    pub rollout_depth: u32,
    pub discount: f64,
}

impl Default for MctsParams {
    fn default() -> Self {
        MctsParams {
            iterations: 1000,
            c_puct: 1.5,
            rollout_depth: 16,
            discount: 0.95,
        }
    }
}

/// Supplies a prior distribution over the candidate moves of a node.
/// Implementations must return weights summing to 1.
pub trait PriorProvider {
    fn priors(&mut self, state: &WorldState, candidates: &[JointAction]) -> Vec<f64>;
}

/// Uniform priors: primitive tree search.
pub struct UniformPriors;

impl PriorProvider for UniformPriors {
    fn priors(&mut self, _state: &WorldState, candidates: &[JointAction]) -> Vec<f64> {
        let n = candidates.len().max(1);
        vec![1.0 / n as f64; candidates.len()]
    }
}

/// Priors scored by a completion backend; falls back to uniform on any
/// backend or parse failure, and caches per state digest.
pub struct LlmPriors {
    backend: Arc<dyn TextBackend>,
    instruction: String,
    params: CompletionParams,
    cache: HashMap<u64, Vec<f64>>,
    fallbacks: u64,
}

impl LlmPriors {
    pub fn new(instruction: &str, backend: Arc<dyn TextBackend>) -> Self {
        LlmPriors {
            backend,
            instruction: instruction.to_string(),
            params: CompletionParams::default(),
            cache: HashMap::new(),
            fallbacks: 0,
        }
    }

    /// Times the provider degraded to uniform priors.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    fn query(&mut self, state: &WorldState, candidates: &[JointAction]) -> Option<Vec<f64>> {
        let listing: String = candidates
            .iter()
            .enumerate()
            .map(|(i, j)| format!("{}. {}\n", i + 1, render_joint(state, j)))
            .collect();
        let user = format!(
            "Task instruction: {}\n\nObservations:\n{}\nCandidate moves:\n{listing}\n\
             Rate how useful each candidate is for completing the task, one line per \
             candidate in the format `index: score` with scores from 0 to 100.",
            self.instruction,
            render_all_observations(state),
        );
        let reply = self
            .backend
            .complete(
                &[
                    ChatMessage::system(
                        "You score candidate robot actions for a tree-search planner.".to_string(),
                    ),
                    ChatMessage::user(user),
                ],
                &self.params,
            )
            .ok()?;
        let mut weights = vec![0.0f64; candidates.len()];
        for line in reply.lines() {
            let Some((index_part, score_part)) = line.split_once(':') else {
                continue;
            };
            let Ok(index) = index_part
                .trim()
                .trim_start_matches(|c: char| !c.is_ascii_digit())
                .parse::<usize>()
            else {
                continue;
            };
            let Ok(score) = score_part.trim().parse::<f64>() else {
                continue;
            };
            if index >= 1 && index <= weights.len() && score.is_finite() {
                weights[index - 1] = score.max(0.0);
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        for w in &mut weights {
            *w /= total;
        }
        Some(weights)
    }
}

impl PriorProvider for LlmPriors {
    fn priors(&mut self, state: &WorldState, candidates: &[JointAction]) -> Vec<f64> {
        let key = state.core_key();
        if let Some(cached) = self.cache.get(&key) {
            if cached.len() == candidates.len() {
                return cached.clone();
            }
        }
        let weights = match self.query(state, candidates) {
            Some(w) => w,
            None => {
                self.fallbacks += 1;
                let n = candidates.len().max(1);
                vec![1.0 / n as f64; candidates.len()]
            }
        };
        self.cache.insert(key, weights.clone());
        weights
    }
}

struct Edge {
    joint: JointAction,
    prior: f64,
    child: Option<usize>,
    visits: u32,
    value_sum: f64,
}

struct Node {
    state: WorldState,
    depth: u32,
    terminal: bool,
    visits: u32,
    /// Visits that ended at this node (expansion rollouts, terminal hits,
    /// dead ends) rather than descending an edge.
    end_visits: u32,
    edges: Option<Vec<Edge>>,
}

pub(crate) struct SearchTree {
    nodes: Vec<Node>,
}

impl SearchTree {
    /// Bookkeeping invariant: every node's visit count equals the visits of
    /// its outgoing edges plus the simulations that ended there, and priors
    /// sum to one.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn check_consistency(&self) -> Result<(), String> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(edges) = &node.edges {
                let edge_visits: u32 = edges.iter().map(|e| e.visits).sum();
                if node.visits != edge_visits + node.end_visits {
                    return Err(format!(
                        "node {i}: visits {} != edge visits {} + end visits {}",
                        node.visits, edge_visits, node.end_visits
                    ));
                }
                if !edges.is_empty() {
                    let prior_sum: f64 = edges.iter().map(|e| e.prior).sum();
                    if (prior_sum - 1.0).abs() > 1e-9 {
                        return Err(format!("node {i}: priors sum to {prior_sum}"));
                    }
                }
                for edge in edges {
                    if let Some(child) = edge.child {
                        if self.nodes[child].visits != edge.visits {
                            return Err(format!(
                                "node {i}: child visits {} != edge visits {}",
                                self.nodes[child].visits, edge.visits
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn rollout(
    mut state: WorldState,
    goal: &[Relation],
    start_depth: u32,
    params: &MctsParams,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut depth = start_depth;
    for _ in 0..params.rollout_depth.saturating_sub(start_depth) {
        let candidates = joint_feasible(&state);
        if candidates.is_empty() {
            return 0.0;
        }
        let pick = &candidates[rng.random_range(0..candidates.len())];
        state = apply_feasible(&state, pick.robot, &pick.action);
        depth += 1;
        if check_goal(&state, goal) {
            return params.discount.powi(depth as i32);
        }
    }
    0.0
}

pub(crate) fn search(
    root_state: &WorldState,
    goal: &[Relation],
    params: &MctsParams,
    rng: &mut ChaCha8Rng,
    priors: &mut dyn PriorProvider,
) -> (SearchTree, Option<JointAction>) {
    let mut tree = SearchTree {
        nodes: vec![Node {
            state: root_state.clone(),
            depth: 0,
            terminal: check_goal(root_state, goal),
            visits: 0,
            end_visits: 0,
            edges: None,
        }],
    };

    for _ in 0..params.iterations {
        // Selection: descend while the node is expanded and non-terminal.
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut current = 0usize;
        let value: f64;
        loop {
            if tree.nodes[current].terminal {
                let depth = tree.nodes[current].depth;
                value = params.discount.powi(depth as i32);
                tree.nodes[current].end_visits += 1;
                break;
            }
            if tree.nodes[current].edges.is_none() {
                // Expansion: create edges with priors, then evaluate by a
                // random rollout from this state.
                let state = tree.nodes[current].state.clone();
                let candidates = joint_feasible(&state);
                let weights = priors.priors(&state, &candidates);
                debug_assert_eq!(weights.len(), candidates.len());
                let edges: Vec<Edge> = candidates
                    .into_iter()
                    .zip(weights)
                    .map(|(joint, prior)| Edge {
                        joint,
                        prior,
                        child: None,
                        visits: 0,
                        value_sum: 0.0,
                    })
                    .collect();
                let dead_end = edges.is_empty();
                tree.nodes[current].edges = Some(edges);
                let depth = tree.nodes[current].depth;
                value = if dead_end {
                    0.0
                } else {
                    rollout(state, goal, depth, params, rng)
                };
                tree.nodes[current].end_visits += 1;
                break;
            }
            if tree.nodes[current]
                .edges
                .as_ref()
                .map(|e| e.is_empty())
                .unwrap_or(true)
            {
                value = 0.0;
                tree.nodes[current].end_visits += 1;
                break;
            }

            // Predictor-weighted UCT over the edges.
            let parent_visits = tree.nodes[current].visits.max(1) as f64;
            let edges = tree.nodes[current].edges.as_ref().expect("expanded");
            let mut best_index = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (i, edge) in edges.iter().enumerate() {
                let q = if edge.visits > 0 {
                    edge.value_sum / f64::from(edge.visits)
                } else {
                    0.0
                };
                let u = params.c_puct * edge.prior * parent_visits.sqrt()
                    / (1.0 + f64::from(edge.visits));
                let score = q + u;
                if score > best_score {
                    best_score = score;
                    best_index = i;
                }
            }

            // Materialize the child lazily.
            let child = {
                let depth = tree.nodes[current].depth;
                let edges = tree.nodes[current].edges.as_ref().expect("expanded");
                match edges[best_index].child {
                    Some(c) => c,
                    None => {
                        let joint = edges[best_index].joint.clone();
                        let child_state =
                            apply_feasible(&tree.nodes[current].state, joint.robot, &joint.action);
                        let terminal = check_goal(&child_state, goal);
                        tree.nodes.push(Node {
                            state: child_state,
                            depth: depth + 1,
                            terminal,
                            visits: 0,
                            end_visits: 0,
                            edges: None,
                        });
                        let idx = tree.nodes.len() - 1;
                        tree.nodes[current].edges.as_mut().expect("expanded")[best_index].child =
                            Some(idx);
                        idx
                    }
                }
            };
            path.push((current, best_index));
            current = child;
        }

        // Backpropagation.
        tree.nodes[current].visits += 1;
        for &(node, edge) in path.iter().rev() {
            tree.nodes[node].visits += 1;
            let e = &mut tree.nodes[node].edges.as_mut().expect("expanded")[edge];
            e.visits += 1;
            e.value_sum += value;
        }
    }

    // Most-visited root edge; edges were created in lexicographic order, so
    // taking the first maximum breaks ties deterministically.
    let best = tree.nodes[0].edges.as_ref().and_then(|edges| {
        let mut best: Option<&Edge> = None;
        for edge in edges {
            if best.map(|b| edge.visits > b.visits).unwrap_or(true) {
                best = Some(edge);
            }
        }
        best.map(|e| e.joint.clone())
    });
    (tree, best)
}

/// Primitive tree search: uniform priors, random rollouts, goal reward.
/// Returns the most-visited root move, ties broken lexicographically.
pub fn mcts_search(
    state: &WorldState,
    goal: &[Relation],
    params: &MctsParams,
    rng: &mut ChaCha8Rng,
) -> Option<JointAction> {
    search(state, goal, params, rng, &mut UniformPriors).1
}

/// Identical machinery with backend-scored priors in the selection rule.
pub fn llm_mcts_search(
    state: &WorldState,
    goal: &[Relation],
    params: &MctsParams,
    rng: &mut ChaCha8Rng,
    priors: &mut LlmPriors,
) -> Option<JointAction> {
    search(state, goal, params, rng, priors).1
}

/// Engine planner wrapping per-step tree search.
pub struct MctsPlanner {
    goal: Vec<Relation>,
    params: MctsParams,
    rng: ChaCha8Rng,
    priors: PriorKind,
}

enum PriorKind {
    Uniform,
    Llm(LlmPriors),
}

impl MctsPlanner {
    pub fn primitive(goal: Vec<Relation>, params: MctsParams, seed: u64) -> Self {
        use rand::SeedableRng;
        MctsPlanner {
            goal,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            priors: PriorKind::Uniform,
        }
    }

    pub fn llm_guided(
        goal: Vec<Relation>,
        params: MctsParams,
        seed: u64,
        instruction: &str,
        backend: Arc<dyn TextBackend>,
    ) -> Self {
        use rand::SeedableRng;
        MctsPlanner {
            goal,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            priors: PriorKind::Llm(LlmPriors::new(instruction, backend)),
        }
    }
}

impl Planner for MctsPlanner {
    fn name(&self) -> &str {
        match self.priors {
            PriorKind::Uniform => "mcts",
            PriorKind::Llm(_) => "llm-mcts",
        }
    }

    fn next_decision(
        &mut self,
        state: &WorldState,
        _iteration: u32,
    ) -> Result<Decision, PlannerError> {
        let best = match &mut self.priors {
            PriorKind::Uniform => mcts_search(state, &self.goal, &self.params, &mut self.rng),
            PriorKind::Llm(priors) => {
                llm_mcts_search(state, &self.goal, &self.params, &mut self.rng, priors)
            }
        };
        Ok(match best {
            Some(joint) => Decision::Act {
                robot: joint.robot,
                action: joint.action,
            },
            None => Decision::Wait { robot: None },
        })
    }
}

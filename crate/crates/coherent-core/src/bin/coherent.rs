//! Command-line entry point: run single tasks, benchmark the built-in suite,
//! replay traces, list tasks, and format reports.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coherent_core::backend::{HttpBackend, HttpConfig, ScriptedBackend, TextBackend};
use coherent_core::baselines::{CmrsPlanner, DmrsPlanner, MctsParams, MctsPlanner};
use coherent_core::engine::{run_episode, step_budget, EpisodeResult, Planner, ScriptPlanner};
use coherent_core::eval::{
    aggregate, emit_report, score_episode, ReportFormat, ScoredEpisode,
};
use coherent_core::pefa::{PefaConfig, PefaPlanner, TEMPLATE_VERSION};
use coherent_core::tasks::{
    builtin_scenes, builtin_suite, load_scene, load_task, validate_task, SuiteEntry, ValidatedTask,
};
use coherent_core::util::fnv1a64;
use coherent_core::world::{build_scene, WorldState};

#[derive(Parser)]
#[command(name = "coherent", version, about = "Heterogeneous multi-robot task planning simulator and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task with a chosen planner and backend.
    Run(RunArgs),
    /// Run a set of built-in tasks and emit traces plus a report.
    Bench(BenchArgs),
    /// Re-execute a trace file against its task, verifying state digests.
    Replay(ReplayArgs),
    /// List the built-in benchmark tasks.
    ListTasks,
    /// Re-format a scored-episodes file into a report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerKind {
    Pefa,
    Cmrs,
    Dmrs1,
    Dmrs2,
    Mcts,
    #[value(name = "llm-mcts")]
    LlmMcts,
    /// Replay the task's shipped oracle script.
    Oracle,
}

impl PlannerKind {
    fn label(self) -> &'static str {
        match self {
            PlannerKind::Pefa => "pefa",
            PlannerKind::Cmrs => "cmrs",
            PlannerKind::Dmrs1 => "dmrs1",
            PlannerKind::Dmrs2 => "dmrs2",
            PlannerKind::Mcts => "mcts",
            PlannerKind::LlmMcts => "llm-mcts",
            PlannerKind::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Scripted,
    Http,
}

#[derive(Args, Clone)]
struct PlannerArgs {
    #[arg(long, value_enum, default_value = "pefa")]
    planner: PlannerKind,
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// Reply script for the scripted backend (JSON).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Base URL for the HTTP backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent to the HTTP backend.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop the dialogue-history section from assigner prompts.
    #[arg(long)]
    no_history: bool,
    /// Tree-search iterations per decision for the search planners.
    #[arg(long, default_value_t = 1000)]
    iterations: u32,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in task id, or a path to a task file (then --scene is required).
    #[arg(long)]
    task: String,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "plain")]
    format: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Substring filters on task ids; empty means the whole suite.
    #[arg(long)]
    tasks: Vec<String>,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "plain")]
    format: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Built-in task id, or a path to a task file (then --scene is required).
    #[arg(long)]
    task: String,
    #[arg(long)]
    scene: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Scored-episodes file (one JSON object per line).
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long, default_value = "plain")]
    format: String,
    #[arg(long, default_value = "report")]
    method: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Replay(args) => cmd_replay(args),
        Command::ListTasks => cmd_list_tasks(),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn parse_format(name: &str) -> Result<ReportFormat, String> {
    ReportFormat::parse(name).ok_or_else(|| format!("unknown format {name:?} (plain|csv|markdown)"))
}

fn resolve_task(task: &str, scene: &Option<PathBuf>) -> Result<(WorldState, ValidatedTask), String> {
    if let Some(scene_path) = scene {
        let (_, state) = load_scene(scene_path).map_err(|e| e.to_string())?;
        let validated = load_task(Path::new(task), &state).map_err(|e| e.to_string())?;
        Ok((state, validated))
    } else {
        let entry = coherent_core::tasks::builtin_task(task)
            .ok_or_else(|| format!("unknown built-in task {task:?} (see `coherent list-tasks`)"))?;
        let state = build_scene(&entry.scene).map_err(|e| e.to_string())?;
        let validated = validate_task(entry.task, &state).map_err(|e| e.to_string())?;
        Ok((state, validated))
    }
}

/// Per-task reply script: bench script files may carry a `tasks` map.
fn scripted_replies(script: &Option<PathBuf>, task_id: &str) -> Result<Vec<String>, String> {
    let Some(path) = script else {
        return Ok(Vec::new());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Ok(map) = serde_json::from_str::<serde_json::Value>(&text) {
        if let Some(tasks) = map.get("tasks").and_then(|t| t.as_object()) {
            return Ok(tasks
                .get(task_id)
                .and_then(|v| serde_json::from_value::<Vec<String>>(v.clone()).ok())
                .unwrap_or_default());
        }
    }
    ScriptedBackend::from_json_str(&text)
        .map(|b| {
            let mut replies = Vec::new();
            while let Ok(r) = b.complete(&[], &Default::default()) {
                replies.push(r);
            }
            replies
        })
        .map_err(|e| e.to_string())
}

fn make_backend(
    args: &PlannerArgs,
    task_id: &str,
) -> Result<Arc<dyn TextBackend>, String> {
    match args.backend {
        BackendKind::Scripted => Ok(Arc::new(ScriptedBackend::new(scripted_replies(
            &args.script,
            task_id,
        )?))),
        BackendKind::Http => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or("--endpoint is required with --backend http")?;
            let model = args.model.clone().unwrap_or_else(|| "default".to_string());
            Ok(Arc::new(HttpBackend::new(HttpConfig::new(endpoint, model))))
        }
    }
}

fn episode_seed(base: u64, task_id: &str) -> u64 {
    base ^ fnv1a64(task_id.as_bytes())
}

fn run_one(
    state: &WorldState,
    task: &ValidatedTask,
    args: &PlannerArgs,
) -> Result<(EpisodeResult, ScoredEpisode), String> {
    let budget = step_budget(task.spec.gt_steps).map_err(|e| e.to_string())?;
    let seed = episode_seed(args.seed, &task.spec.id);
    let mut planner: Box<dyn Planner> = match args.planner {
        PlannerKind::Oracle => {
            if task.spec.oracle.is_empty() {
                return Err(format!("task {} has no oracle script", task.spec.id));
            }
            Box::new(ScriptPlanner::from_lines(state, &task.spec.oracle)?)
        }
        PlannerKind::Pefa => {
            let backend = make_backend(args, &task.spec.id)?;
            let config = PefaConfig {
                use_history: !args.no_history,
                ..PefaConfig::default()
            };
            Box::new(PefaPlanner::new(
                state,
                &task.spec.instruction,
                backend,
                config,
            ))
        }
        PlannerKind::Cmrs => {
            let backend = make_backend(args, &task.spec.id)?;
            Box::new(CmrsPlanner::new(&task.spec.instruction, backend))
        }
        PlannerKind::Dmrs1 | PlannerKind::Dmrs2 => {
            let backend = make_backend(args, &task.spec.id)?;
            let rounds = if args.planner == PlannerKind::Dmrs1 { 1 } else { 2 };
            Box::new(
                DmrsPlanner::new(state, &task.spec.instruction, rounds, backend)
                    .map_err(|e| e.to_string())?,
            )
        }
        PlannerKind::Mcts => {
            let params = MctsParams {
                iterations: args.iterations,
                rollout_depth: budget,
                ..MctsParams::default()
            };
            Box::new(MctsPlanner::primitive(task.goal.clone(), params, seed))
        }
        PlannerKind::LlmMcts => {
            let backend = make_backend(args, &task.spec.id)?;
            let params = MctsParams {
                iterations: args.iterations,
                rollout_depth: budget,
                ..MctsParams::default()
            };
            Box::new(MctsPlanner::llm_guided(
                task.goal.clone(),
                params,
                seed,
                &task.spec.instruction,
                backend,
            ))
        }
    };

    let result = run_episode(state, &task.goal, planner.as_mut(), budget)
        .map_err(|e| e.to_string())?;
    let scored = score_episode(&result, &task.spec).map_err(|e| e.to_string())?;
    Ok((result, scored))
}

fn write_trace(dir: &Path, task_id: &str, state: &WorldState, result: &EpisodeResult) -> Result<(), String> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|e| e.to_string())?;
    let mut out = String::new();
    for record in &result.trace {
        let line = record.to_line(state);
        out.push_str(&serde_json::to_string(&line).expect("trace serializes"));
        out.push('\n');
    }
    fs::write(traces.join(format!("{task_id}.trace.jsonl")), out).map_err(|e| e.to_string())
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let format = parse_format(&args.format)?;
    let (state, task) = resolve_task(&args.task, &args.scene)?;
    let (result, scored) = run_one(&state, &task, &args.planner)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| e.to_string())?;
        write_trace(out, &task.spec.id, &state, &result)?;
        let episodes = serde_json::to_string(&scored).expect("episode serializes");
        fs::write(out.join("episodes.jsonl"), format!("{episodes}\n"))
            .map_err(|e| e.to_string())?;
    }
    let table = aggregate(args.planner.planner.label(), std::slice::from_ref(&scored))
        .map_err(|e| e.to_string())?;
    print!("{}", emit_report(&table, format));
    println!(
        "task {}: success={} steps={} (gt {}, budget {})",
        task.spec.id,
        scored.success,
        result.steps_taken,
        task.spec.gt_steps,
        result.budget
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), String> {
    let format = parse_format(&args.format)?;
    let suite: Vec<SuiteEntry> = builtin_suite()
        .into_iter()
        .filter(|entry| {
            args.tasks.is_empty() || args.tasks.iter().any(|f| entry.task.id.contains(f))
        })
        .collect();
    if suite.is_empty() {
        return Err("no tasks match the given filters".to_string());
    }

    let workers = args.workers.max(1);
    let planner_args = args.planner.clone();
    type TaskOutcome = Result<(WorldState, ValidatedTask, EpisodeResult, ScoredEpisode), String>;
    let mut outcomes: Vec<Option<TaskOutcome>> = (0..suite.len()).map(|_| None).collect();

    std::thread::scope(|scope| {
        let suite = &suite;
        let planner_args = &planner_args;
        let mut handles = Vec::new();
        for worker in 0..workers {
            handles.push(scope.spawn(move || {
                let mut results = Vec::new();
                let mut index = worker;
                while index < suite.len() {
                    let entry = &suite[index];
                    let outcome = (|| {
                        let state = build_scene(&entry.scene).map_err(|e| e.to_string())?;
                        let task =
                            validate_task(entry.task.clone(), &state).map_err(|e| e.to_string())?;
                        let (result, scored) = run_one(&state, &task, planner_args)?;
                        Ok((state, task, result, scored))
                    })();
                    results.push((index, outcome));
                    index += workers;
                }
                results
            }));
        }
        for handle in handles {
            for (index, outcome) in handle.join().expect("worker completes") {
                outcomes[index] = Some(outcome);
            }
        }
    });

    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let mut episodes: Vec<ScoredEpisode> = Vec::new();
    let mut episodes_file = String::new();
    for outcome in outcomes.into_iter() {
        let (state, task, result, scored) = outcome.expect("all tasks ran")?;
        write_trace(&args.out, &task.spec.id, &state, &result)?;
        episodes_file.push_str(&serde_json::to_string(&scored).expect("episode serializes"));
        episodes_file.push('\n');
        episodes.push(scored);
    }
    fs::write(args.out.join("episodes.jsonl"), episodes_file).map_err(|e| e.to_string())?;

    let mut table =
        aggregate(args.planner.planner.label(), &episodes).map_err(|e| e.to_string())?;
    table.ensure_scenes(builtin_scenes().iter().map(|s| s.name.clone()));
    let report = emit_report(&table, format);
    fs::write(
        args.out.join(format!("report.{}", format.extension())),
        &report,
    )
    .map_err(|e| e.to_string())?;

    let meta = serde_json::json!({
        "planner": args.planner.planner.label(),
        "backend": match args.planner.backend { BackendKind::Scripted => "scripted", BackendKind::Http => "http" },
        "seed": args.planner.seed,
        "template_version": TEMPLATE_VERSION,
        "tasks": episodes.len(),
    });
    fs::write(
        args.out.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
    .map_err(|e| e.to_string())?;

    print!("{report}");
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), String> {
    use coherent_core::engine::TraceLine;

    let (state, task) = resolve_task(&args.task, &args.scene)?;
    let text = fs::read_to_string(&args.trace).map_err(|e| e.to_string())?;
    let scene = state.scene().clone();
    let mut current = state.clone();
    let mut steps = 0u32;
    for (line_number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceLine =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", line_number + 1))?;
        if record.valid {
            let robot_name = record
                .robot
                .as_ref()
                .ok_or_else(|| format!("line {}: valid step without robot", line_number + 1))?;
            let robot = scene
                .resolve(robot_name)
                .map_err(|e| format!("line {}: {e}", line_number + 1))?;
            let archetype = scene
                .robot_info(robot)
                .ok_or_else(|| format!("line {}: {robot_name} is not a robot", line_number + 1))?
                .archetype;
            let action_text = record
                .action
                .as_ref()
                .ok_or_else(|| format!("line {}: valid step without action", line_number + 1))?;
            let action = coherent_core::actions::parse_action(&scene, archetype, action_text)
                .map_err(|e| format!("line {}: {e}", line_number + 1))?;
            current = coherent_core::actions::apply(&current, robot, &action)
                .map_err(|e| format!("line {}: {e}", line_number + 1))?;
        }
        let digest = current.digest_hex();
        if digest != record.digest {
            return Err(format!(
                "digest mismatch at iteration {}: trace {} vs replay {digest}",
                record.iteration, record.digest
            ));
        }
        steps += 1;
    }
    let reached = coherent_core::world::check_goal(&current, &task.goal);
    println!(
        "replayed {steps} iterations: digests ok, goal {}",
        if reached { "reached" } else { "not reached" }
    );
    Ok(())
}

fn cmd_list_tasks() -> Result<(), String> {
    println!(
        "{:<36} {:<16} {:<6} {:>3}",
        "task", "scene", "cat", "gt"
    );
    for entry in builtin_suite() {
        println!(
            "{:<36} {:<16} {:<6} {:>3}",
            entry.task.id,
            entry.task.scene,
            entry.task.category.label(),
            entry.task.gt_steps
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), String> {
    let format = parse_format(&args.format)?;
    let text = fs::read_to_string(&args.episodes).map_err(|e| e.to_string())?;
    let mut episodes = Vec::new();
    for (line_number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let episode: ScoredEpisode =
            serde_json::from_str(line).map_err(|e| format!("line {}: {e}", line_number + 1))?;
        episodes.push(episode);
    }
    let table = aggregate(&args.method, &episodes).map_err(|e| e.to_string())?;
    let report = emit_report(&table, format);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            let path = dir.join(format!("report.{}", format.extension()));
            let mut file = fs::File::create(&path).map_err(|e| e.to_string())?;
            file.write_all(report.as_bytes()).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        None => print!("{report}"),
    }
    Ok(())
}

//! The `skillmatrix` command line.
//!
//! Exit codes: 0 success, 2 task failure or rejected data, 64 usage,
//! 70 internal error. Where a command takes `--config`, values in the file
//! override the corresponding flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use skillmatrix_core::bench::{
    level_scene, pool_items, Level, ObjectPool, Suite, TrialConfig, DISTRACTORS,
};
use skillmatrix_core::codec::{encode_action, fit_ranges, CodecConfig};
use skillmatrix_core::data::{
    augment_stop_frames, relabel_interval, segment, split, stats, to_relative, Clip, DataError, Episode, RelClip,
    SftSample, SplitSpec, DEFAULT_INTERVAL, DEFAULT_STOP_RATIO,
};
use skillmatrix_core::detect::{GroundTruthDetector, NoiseModel};
use skillmatrix_core::planner::{PlanError, Planner, SkillPromptEntry, SkillList, SubtaskPlan, TemplatePlanner, OBJECT};
use skillmatrix_core::scheduler::{run_queue, QueueError, QueueEvent, QueueObserver, Stack, SubtaskStatus};
use skillmatrix_core::sim::{SceneSpec, World};
use skillmatrix_core::skills::{OraclePolicy, SimRobot, SkillConfig};

use crate::bench::{print_summary, run_levels, run_suite, write_records};
use crate::demo::{record_demo, DemoSource};
use crate::episode::{list_episodes, load_episode};
use crate::formats::{load_codec, load_scene, read_jsonl, save_skills, skills_or_default, write_atomic, write_jsonl, write_toml};
use crate::inference::{serve_inference, TcpInferenceClient};
use crate::latency::{Latency, LatencyModel};
use crate::remote::RemotePlanner;
use crate::runtime::{OracleHost, PlannerChoice, Runtime, RuntimeConfig};
use crate::stage::SharedWorld;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_INTERNAL: u8 = 70;

/// An error caused by how the command was invoked.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<DataError>() || cause.is::<PlanError>() || cause.is::<QueueError>() {
            return EXIT_FAILED;
        }
    }
    EXIT_INTERNAL
}

#[derive(Debug, Parser)]
#[command(name = "skillmatrix", version, about = "Skill-matrix robot stack: tasks, benchmarks, data tooling and the live server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan and execute one task in a fresh simulated scene.
    Task(TaskArgs),
    /// Run the five-level generalization benchmark.
    Bench(BenchArgs),
    /// Run a long-horizon suite.
    Longhorizon(SuiteArgs),
    /// Dataset tooling.
    #[command(subcommand)]
    Data(DataCommand),
    /// Serve the simulator, bus, socket bridge and inference endpoint.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Task text, e.g. "Put the pink cube into the white box".
    pub text: String,
    /// `level1`..`level5`, or a scene TOML file.
    #[arg(long, default_value = "level1")]
    pub scene: String,
    #[arg(long, value_enum, default_value_t = PlannerChoice::Template)]
    pub planner: PlannerChoice,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Remove an object from the scene before running.
    #[arg(long, value_name = "OBJECT")]
    pub without: Vec<String>,
    /// Skill list TOML; defaults to the built-in list.
    #[arg(long, env = "SKILLMATRIX_SKILLS")]
    pub skills: Option<PathBuf>,
    /// Append skills proposed by the planner to the `--skills` file.
    #[arg(long, requires = "skills")]
    pub register_new_skills: bool,
    /// One-way delay added by the inference endpoint.
    #[arg(long, default_value_t = 0.0)]
    pub latency_ms: f64,
    /// Print the task report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated levels (I-V or 1-5), or `all`.
    #[arg(long, default_value = "all")]
    pub levels: String,
    #[arg(long, default_value_t = 100)]
    pub trials: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Probability that the detector misses a visible object.
    #[arg(long, default_value_t = 0.0)]
    pub miss_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter_px: f64,
    /// Write line-delimited JSON records here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// 1: obstacles, 2: ramp and drawer, 3: open, fill and close a drawer.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    pub suite: u32,
    #[arg(long, default_value_t = 20)]
    pub trials: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Close every gap in the obstacle row.
    #[arg(long)]
    pub impassable: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Record oracle demonstrations, one episode per executed skill.
    Record(RecordArgs),
    /// Cut episodes into clips along their marks.
    Segment {
        /// Episode root directory.
        root: PathBuf,
        /// Output clips (JSON lines).
        out: PathBuf,
    },
    /// Turn clips into relative actions looking `k` frames ahead.
    Relabel {
        #[arg(long, default_value_t = DEFAULT_INTERVAL)]
        k: usize,
        input: PathBuf,
        out: PathBuf,
    },
    /// Duplicate stop frames up to a target ratio.
    Augment {
        #[arg(long, default_value_t = DEFAULT_STOP_RATIO)]
        ratio: f64,
        input: PathBuf,
        out: PathBuf,
    },
    /// Tokenize relabeled clips into training samples.
    Tokenize {
        input: PathBuf,
        out: PathBuf,
        /// Codec ranges TOML.
        #[arg(long, conflicts_with = "fit")]
        codec: Option<PathBuf>,
        /// Fit codec ranges to the input first.
        #[arg(long)]
        fit: bool,
        /// Where to save fitted ranges.
        #[arg(long)]
        codec_out: Option<PathBuf>,
    },
    /// Select the mini training subset.
    Split {
        #[arg(long, default_value = "episodes")]
        root: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 5)]
        skills: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated skills to draw from.
        #[arg(long, value_delimiter = ',')]
        names: Vec<String>,
        /// Manifest path; defaults to `<root>/mini.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-skill counts and action distributions.
    Stats {
        root: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// `levelN`, `suiteN`, `levels`, `suites` or `all`.
    #[arg(long, default_value = "all")]
    pub source: String,
    /// Demonstration runs per source.
    #[arg(long, default_value_t = 1)]
    pub runs: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "episodes")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "level1")]
    pub scene: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1:7400")]
    pub bus: String,
    #[arg(long, default_value = "127.0.0.1:7401")]
    pub bridge: String,
    #[arg(long, default_value = "127.0.0.1:7402")]
    pub inference: String,
    #[arg(long, default_value_t = 0.0)]
    pub latency_ms: f64,
    /// Simulated seconds per wall second; 0 runs unpaced.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long, default_value = "episodes")]
    pub record_root: PathBuf,
    #[arg(long, value_enum, default_value_t = PlannerChoice::Template)]
    pub planner: PlannerChoice,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Task(a) => cmd_task(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Longhorizon(a) => cmd_longhorizon(a),
        Command::Data(d) => cmd_data(d),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Serializes `flags`, lays the TOML file at `path` over it and reads the
/// result back.
pub fn overlay<T: Serialize + DeserializeOwned>(flags: &T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(serde_json::from_value(serde_json::to_value(flags)?)?);
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    let file: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut base = serde_json::to_value(flags)?;
    merge(&mut base, serde_json::to_value(file)?);
    serde_json::from_value(base).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn merge(base: &mut serde_json::Value, top: serde_json::Value) {
    match (base, top) {
        (serde_json::Value::Object(b), serde_json::Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Parses `levelN` or a scene file path; level scenes also name their target.
fn resolve_scene(arg: &str, seed: u64) -> Result<(SceneSpec, Option<String>)> {
    let lower = arg.to_ascii_lowercase();
    if let Some(n) = lower.strip_prefix("level") {
        let level: Level = n.parse().map_err(usage)?;
        let s = level_scene(level, seed);
        return Ok((s.spec, Some(s.object)));
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(usage(format!("scene {arg:?} is neither level1..level5 nor a file")));
    }
    Ok((load_scene(path).map_err(|e| usage(format!("{e:#}")))?, None))
}

/// Swaps a level's sampled target for the object the task names, keeping
/// its placement.
fn retarget(scene: &mut SceneSpec, current: &str, wanted: &str) {
    if current == wanted || scene.objects.iter().any(|o| o.name == wanted) {
        return;
    }
    let Some(obj) = scene.objects.iter_mut().find(|o| o.name == current) else { return };
    let known = [ObjectPool::Seen, ObjectPool::UnseenEasy, ObjectPool::UnseenHard]
        .into_iter()
        .flat_map(pool_items)
        .chain(DISTRACTORS.iter())
        .find(|it| it.0 == wanted);
    obj.name = wanted.into();
    if let Some(it) = known {
        obj.kind = it.1;
        obj.radius = it.2;
        obj.height = it.3;
    }
}

fn status_line(status: &SubtaskStatus) -> String {
    match status {
        SubtaskStatus::Succeeded => "Succeeded".into(),
        SubtaskStatus::Interrupted(r) => format!("Interrupted: {r}"),
        SubtaskStatus::Failed(r) => format!("Failed: {r}"),
        SubtaskStatus::Timeout => "Timeout".into(),
    }
}

struct Printer;

impl QueueObserver for Printer {
    fn on_event(&mut self, event: &QueueEvent<'_>) {
        if let QueueEvent::Finished(r) = event {
            println!("{}. {}: {}", r.index + 1, r.text, status_line(&r.status));
        }
    }
}

fn make_planner(choice: PlannerChoice) -> Result<Box<dyn Planner>> {
    Ok(match choice {
        PlannerChoice::Template => Box::new(TemplatePlanner),
        PlannerChoice::Remote => Box::new(RemotePlanner::from_env().map_err(|e| usage(e.to_string()))?),
    })
}

/// Turns planner-proposed subtasks into skill entries, with the object
/// name replaced by the placeholder.
fn proposed_entries(plan: &SubtaskPlan) -> Vec<SkillPromptEntry> {
    plan.steps
        .iter()
        .filter(|s| s.new_skill)
        .map(|s| {
            let template = match &s.object {
                Some(o) if !o.is_empty() => s.text.replace(o.as_str(), OBJECT),
                _ => s.text.clone(),
            };
            SkillPromptEntry::vla(&template)
        })
        .collect()
}

fn cmd_task(a: TaskArgs) -> Result<u8> {
    let mut skills: SkillList = skills_or_default(a.skills.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    let mut planner = make_planner(a.planner)?;
    let mut plan = planner.plan(&a.text, &skills)?;
    let proposed = proposed_entries(&plan);
    if !proposed.is_empty() {
        let names: Vec<String> = proposed.iter().map(|e| e.template.clone()).collect();
        if !a.register_new_skills {
            return Err(anyhow!(PlanError::Missing(names.join(", ")))
                .context("planner proposed skills outside the list; rerun with --register-new-skills"));
        }
        for e in proposed {
            skills.register(e)?;
        }
        let path = a.skills.as_deref().expect("clap requires --skills");
        save_skills(path, &skills)?;
        println!("registered {} new skill(s) in {}: {}", names.len(), path.display(), names.join(", "));
        plan = planner.plan(&a.text, &skills)?;
    }

    let (mut scene, target) = resolve_scene(&a.scene, a.seed)?;
    if let (Some(current), Some(wanted)) = (target, plan.steps.iter().find_map(|s| s.object.clone())) {
        retarget(&mut scene, &current, &wanted);
    }
    for name in &a.without {
        let before = scene.objects.len();
        scene.objects.retain(|o| &o.name != name);
        if scene.objects.len() == before {
            return Err(usage(format!("scene has no object named {name:?}")));
        }
    }
    let world = SharedWorld::new(World::spawn(&scene, a.seed).map_err(|e| usage(format!("scene: {e}")))?);
    let codec = CodecConfig::default();
    let config = SkillConfig::default();
    let oracle = OracleHost(OraclePolicy::new(world.clone(), skills.clone(), codec));
    let mut endpoint = serve_inference(
        "127.0.0.1:0",
        Arc::new(Mutex::new(oracle)),
        Latency::new(LatencyModel::Constant { ms: a.latency_ms }, a.seed),
    )?;
    let mut client = TcpInferenceClient::new(endpoint.addr());
    let robot_id = world.lock().robots.first().map(|r| r.id).ok_or_else(|| usage("scene has no robot"))?;
    let mut robot = SimRobot::new(world.clone(), robot_id)?;
    let stack = Stack {
        robot: &mut robot,
        client: &mut client,
        detector: &mut GroundTruthDetector,
        codec: &codec,
        config: &config,
    };
    let report = run_queue(&a.text, &plan, &skills, stack, &mut Printer)?;
    endpoint.shutdown();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    if report.succeeded() {
        println!("Succeeded: {} subtasks in {} ticks", report.executed(), report.ticks());
        Ok(EXIT_OK)
    } else {
        let line = report.failure().map_or_else(|| "Failed".to_string(), |f| status_line(&f.status));
        println!("{line}");
        Ok(EXIT_FAILED)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BenchSettings {
    levels: String,
    trials: u32,
    seed: u64,
    miss_probability: f64,
    jitter_px: f64,
    codec: CodecConfig,
    skills: SkillConfig,
}

fn parse_levels(s: &str) -> Result<Vec<Level>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Level::ALL.to_vec());
    }
    s.split(',').map(|p| p.parse::<Level>().map_err(usage)).collect()
}

fn cmd_bench(a: BenchArgs) -> Result<u8> {
    let flags = BenchSettings {
        levels: a.levels,
        trials: a.trials,
        seed: a.seed,
        miss_probability: a.miss_prob,
        jitter_px: a.jitter_px,
        codec: CodecConfig::default(),
        skills: SkillConfig::default(),
    };
    let s = overlay(&flags, a.config.as_deref())?;
    if s.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if !(0.0..=1.0).contains(&s.miss_probability) {
        return Err(usage("--miss-prob must lie in [0, 1]"));
    }
    let levels = parse_levels(&s.levels)?;
    let cfg = TrialConfig {
        noise: NoiseModel {
            miss_probability: s.miss_probability,
            jitter_px: s.jitter_px,
        },
        codec: s.codec,
        skills: s.skills,
    };
    let run = run_levels(&levels, s.trials, s.seed, &cfg);
    print_summary(&run.report, &mut std::io::stdout())?;
    if let Some(out) = &a.out {
        write_records(out, &run)?;
    }
    Ok(EXIT_OK)
}

fn cmd_longhorizon(a: SuiteArgs) -> Result<u8> {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let suite = Suite::from_number(a.suite).ok_or_else(|| usage("--suite must be 1, 2 or 3"))?;
    if a.impassable && suite != Suite::Obstacles {
        return Err(usage("--impassable applies to suite 1 only"));
    }
    let (run, trials) = run_suite(suite, a.trials, a.seed, !a.impassable, &TrialConfig::default());
    println!("{}", suite.task());
    for t in &trials {
        let r = &t.result;
        let mut line = format!(
            "trial {:>3} seed {:016x}: {} ({} subtasks, {} ticks)",
            r.index,
            r.seed,
            if r.success { "Succeeded" } else { "Failed" },
            r.subtasks_run,
            r.ticks
        );
        if let Some((skill, status)) = &r.failed_at {
            let _ = write!(line, " at {skill}: {}", status_line(status));
        }
        if let Some(e) = &r.error {
            let _ = write!(line, " error: {e}");
        }
        if suite == Suite::Drawer {
            let _ = write!(line, " drawer: {}", t.drawer_states.join(" -> "));
        }
        println!("{line}");
    }
    print_summary(&run.report, &mut std::io::stdout())?;
    if let Some(out) = &a.out {
        write_records(out, &run)?;
    }
    Ok(if run.report.levels.iter().all(|l| l.failures == 0) { EXIT_OK } else { EXIT_FAILED })
}

fn parse_sources(s: &str) -> Result<Vec<DemoSource>> {
    let lower = s.trim().to_ascii_lowercase();
    let levels = || Level::ALL.iter().map(|l| DemoSource::Level(*l));
    let suites = || Suite::ALL.iter().map(|s| DemoSource::Suite(*s));
    Ok(match lower.as_str() {
        "all" => levels().chain(suites()).collect(),
        "levels" => levels().collect(),
        "suites" => suites().collect(),
        _ => {
            if let Some(n) = lower.strip_prefix("level") {
                vec![DemoSource::Level(n.parse().map_err(usage)?)]
            } else if let Some(n) = lower.strip_prefix("suite") {
                let n: u32 = n.parse().map_err(|_| usage(format!("bad source {s:?}")))?;
                vec![DemoSource::Suite(Suite::from_number(n).ok_or_else(|| usage(format!("bad source {s:?}")))?)]
            } else {
                return Err(usage(format!("bad source {s:?}")));
            }
        }
    })
}

fn load_all(root: &Path) -> Result<Vec<Episode>> {
    if !root.is_dir() {
        return Err(usage(format!("{} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    for dir in list_episodes(root)? {
        let (_, ep) = load_episode(&dir)?;
        if !ep.is_empty() {
            out.push(ep);
        }
    }
    if out.is_empty() {
        return Err(DataError::NoEpisodes.into());
    }
    Ok(out)
}

fn cmd_data(cmd: DataCommand) -> Result<u8> {
    match cmd {
        DataCommand::Record(a) => {
            if a.runs == 0 {
                return Err(usage("--runs must be at least 1"));
            }
            let sources = parse_sources(&a.source)?;
            std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let (mut written, mut failed) = (0usize, 0usize);
            for src in sources {
                for i in 0..a.runs {
                    let (report, dirs) = record_demo(src, a.seed, i, &a.out, &CodecConfig::default(), &SkillConfig::default())?;
                    written += dirs.len();
                    failed += usize::from(!report.succeeded());
                }
            }
            println!("recorded {written} episodes into {} ({failed} runs failed)", a.out.display());
            Ok(EXIT_OK)
        }
        DataCommand::Segment { root, out } => {
            let mut clips: Vec<Clip> = Vec::new();
            for ep in load_all(&root)? {
                clips.extend(segment(&ep, &ep.segments)?);
            }
            write_jsonl(&out, &clips)?;
            println!("{} clips", clips.len());
            Ok(EXIT_OK)
        }
        DataCommand::Relabel { k, input, out } => {
            let clips: Vec<Clip> = read_jsonl(&input)?;
            let mut rel = Vec::new();
            let mut skipped = 0;
            for c in &clips {
                match relabel_interval(&to_relative(c)?, k) {
                    Ok(r) => rel.push(r),
                    Err(DataError::TooShort { .. }) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            if rel.is_empty() && !clips.is_empty() {
                return Err(DataError::TooShort { have: 0, need: k + 1 }.into());
            }
            write_jsonl(&out, &rel)?;
            println!("{} clips relabeled with k = {k}, {skipped} shorter than {} frames skipped", rel.len(), k + 1);
            Ok(EXIT_OK)
        }
        DataCommand::Augment { ratio, input, out } => {
            let rel: Vec<RelClip> = read_jsonl(&input)?;
            let aug = rel
                .iter()
                .map(|r| augment_stop_frames(r, ratio))
                .collect::<Result<Vec<RelClip>, DataError>>()?;
            let added: usize = aug.iter().zip(&rel).map(|(a, r)| a.steps.len() - r.steps.len()).sum();
            write_jsonl(&out, &aug)?;
            println!("{} clips, {added} stop frames added", aug.len());
            Ok(EXIT_OK)
        }
        DataCommand::Tokenize {
            input,
            out,
            codec,
            fit,
            codec_out,
        } => {
            let rel: Vec<RelClip> = read_jsonl(&input)?;
            let cfg = match (codec, fit) {
                (Some(p), _) => load_codec(&p).map_err(|e| usage(format!("{e:#}")))?,
                (None, true) => fit_ranges(rel.iter().flat_map(|r| r.steps.iter().map(|s| &s.action))).map_err(DataError::from)?,
                (None, false) => return Err(DataError::Unfitted.into()),
            };
            let mut samples = Vec::new();
            for r in &rel {
                let prompt = r.segment.prompt();
                for s in &r.steps {
                    samples.push(SftSample {
                        episode: r.episode.clone(),
                        tick: s.tick,
                        prompt: prompt.clone(),
                        tokens: encode_action(&s.action, &cfg).map_err(DataError::from)?,
                        stop: s.action.stop,
                    });
                }
            }
            write_jsonl(&out, &samples)?;
            if let Some(p) = codec_out {
                write_toml(&p, &cfg)?;
            }
            println!("{} samples", samples.len());
            Ok(EXIT_OK)
        }
        DataCommand::Split {
            root,
            episodes,
            skills,
            seed,
            names,
            out,
        } => {
            let eps = load_all(&root)?;
            let pairs: Vec<(String, String)> = eps
                .iter()
                .filter_map(|e| e.primary_skill().map(|s| (e.id.clone(), s.to_string())))
                .collect();
            let spec = SplitSpec {
                episodes,
                skills,
                seed,
                names,
            };
            let sp = split(&pairs, &spec)?;
            let out = out.unwrap_or_else(|| root.join("mini.json"));
            let body = serde_json::json!({
                "spec": spec,
                "episodes": sp.mini,
                "per_skill": sp.per_skill,
                "full": sp.full.len(),
            });
            write_atomic(&out, serde_json::to_string_pretty(&body)?.as_bytes())?;
            println!("mini split: {} episodes across {} skills -> {}", sp.mini.len(), sp.per_skill.len(), out.display());
            for (k, v) in &sp.per_skill {
                println!("  {k}: {v}");
            }
            Ok(EXIT_OK)
        }
        DataCommand::Stats { root, json } => {
            let st = stats(&load_all(&root)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&st)?);
                return Ok(EXIT_OK);
            }
            let mut s = String::new();
            let _ = writeln!(s, "{} episodes, {} frames", st.episodes, st.frames);
            let _ = writeln!(s, "{:<32} {:>8} {:>6} {:>8}", "skill", "episodes", "clips", "frames");
            for (k, v) in &st.skills {
                let _ = writeln!(s, "{:<32} {:>8} {:>6} {:>8}", k, v.episodes, v.clips, v.frames);
            }
            let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>10} {:>10}", "dim", "min", "max", "mean", "std");
            for (k, d) in &st.dims {
                let _ = writeln!(s, "{:<8} {:>10.5} {:>10.5} {:>10.5} {:>10.5}", k, d.min, d.max, d.mean, d.std);
            }
            print!("{s}");
            Ok(EXIT_OK)
        }
    }
}

fn cmd_serve(a: ServeArgs) -> Result<u8> {
    let flags = RuntimeConfig {
        bus_addr: a.bus,
        bridge_addr: a.bridge,
        inference_addr: a.inference,
        latency: LatencyModel::Constant { ms: a.latency_ms },
        speed: a.speed,
        seed: a.seed,
        record_root: a.record_root,
        planner: a.planner,
        ..RuntimeConfig::default()
    };
    let cfg = overlay(&flags, a.config.as_deref())?;
    for addr in [&cfg.bus_addr, &cfg.bridge_addr, &cfg.inference_addr] {
        addr.parse::<SocketAddr>().map_err(|e| usage(format!("bad address {addr:?}: {e}")))?;
    }
    let (scene, _) = resolve_scene(&a.scene, cfg.seed)?;
    let rt = Runtime::start(&scene, &cfg, skillmatrix_core::planner::default_skill_list())?;
    let endpoints: BTreeMap<&str, String> = [
        ("bus", format!("tcp://{}", rt.bus_addr())),
        ("bridge", format!("ws://{}", rt.bridge_addr())),
        ("inference", format!("tcp://{}", rt.inference_addr())),
    ]
    .into_iter()
    .collect();
    for (k, v) in &endpoints {
        println!("{k:<10} {v}");
    }
    let _ = std::io::stdout().flush();
    let (tx, rx) = crossbeam_channel::bounded(1);
    ctrlc::set_handler(move || {
        let _ = tx.try_send(());
    })
    .context("installing signal handler")?;
    while rx.recv_timeout(Duration::from_millis(200)).is_err() {}
    eprintln!("shutting down");
    rt.shutdown();
    Ok(EXIT_OK)
}

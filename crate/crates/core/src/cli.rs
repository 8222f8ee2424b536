//! Batch front-end: run configuration, the four commands and their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::evolution::{records_csv, run_evolution, GpConfig, Phase};
use crate::kinematics::RobotModel;
use crate::stack::{deserialize_stack, serialize_stack, sot_distance, StackOfTasks};
use crate::tasks::{ParamKind, TaskDef, TaskDictionary};
use crate::world_sim::world::{World, RAY_COUNT};
use crate::world_sim::{EpisodeConfig, Scenario};

/// Everything a learning or replay run reads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub robot: RobotModel<f64>,
    pub world: World<f64>,
    pub tasks: Vec<TaskDef<f64>>,
    pub cost: CostSpec<f64>,
    #[serde(default)]
    pub gp: GpConfig,
    #[serde(default)]
    pub episode: EpisodeConfig<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Stack file whose order seeds the params phase, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config document. Data errors carry the JSON path of the field.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_data() && path != "." {
                Error::config(path, inner.to_string())
            } else {
                Error::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    msg: inner.to_string(),
                }
            }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::config(path.display().to_string(), "not valid UTF-8"))?;
        Ok((Self::parse(&text)?, bytes))
    }

    /// Resolves the dictionary, validates every section and assembles the scenario.
    pub fn scenario(&self) -> Result<Scenario<f64>> {
        self.robot.validate()?;
        let dictionary = TaskDictionary::new(self.tasks.clone(), &self.robot)?;
        let cost = self.cost.clone().validated()?;
        let scenario = Scenario {
            model: self.robot.clone(),
            world: self.world.clone(),
            dictionary,
            cost,
            episode: self.episode.clone(),
        };
        scenario.validate()?;
        self.gp.validate()?;
        Ok(scenario)
    }
}

/// Provenance written next to the learned stack.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub phase: Phase,
    pub population_size: usize,
    pub generations: usize,
    pub evaluations: usize,
    pub best_cost: Option<f64>,
    /// Episode seeds behind `best_cost`; `replay --seed` with one of them
    /// reproduces a single-episode cost.
    pub best_episode_seeds: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Order,
    Params,
    Joint,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Order => Phase::OrderOnly,
            PhaseArg::Params => Phase::Params,
            PhaseArg::Joint => Phase::Joint,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sotgen", version, about = "Learn and replay prioritized task stacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the genetic search and write best_sot.json, generations.csv, manifest.json.
    Learn {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; overrides gp.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        phase: Option<PhaseArg>,
        /// Benchmark stack for the params phase; overrides the config entry.
        #[arg(long)]
        benchmark: Option<PathBuf>,
    },
    /// Run one episode with a stack and write trace.csv.
    Replay {
        stack: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Initial-state seed; defaults to episode.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the distance between two stacks.
    Distance { a: PathBuf, b: PathBuf },
    /// Print a stack as a table.
    Inspect { stack: PathBuf },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Parse { .. } | Error::Dimension { .. } | Error::Comparison(_) => 2,
        Error::Infeasible(_) => 3,
        Error::Singular(_) | Error::Composition(_) | Error::Protocol(_) | Error::Io(_) => 4,
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))
}

pub fn load_stack(path: &Path) -> Result<StackOfTasks<f64>> {
    let bytes = read_input(path)?;
    let text = String::from_utf8_lossy(&bytes);
    deserialize_stack(&text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs a parsed command, writing human output to `stdout`.
pub fn execute(cmd: Command, stdout: &mut impl std::io::Write) -> Result<()> {
    match cmd {
        Command::Learn {
            config,
            seed,
            workers,
            out,
            phase,
            benchmark,
        } => learn(&config, seed, workers, out, phase.map(Phase::from), benchmark, stdout),
        Command::Replay {
            stack,
            config,
            seed,
            out,
        } => replay(&stack, &config, seed, out, stdout),
        Command::Distance { a, b } => {
            let d = sot_distance(&load_stack(&a)?, &load_stack(&b)?)?;
            writeln!(stdout, "{d}")?;
            Ok(())
        }
        Command::Inspect { stack } => {
            stdout.write_all(inspect_table(&load_stack(&stack)?).as_bytes())?;
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn learn(
    config: &Path,
    seed: Option<u64>,
    workers: usize,
    out: Option<PathBuf>,
    phase: Option<Phase>,
    benchmark: Option<PathBuf>,
    stdout: &mut impl std::io::Write,
) -> Result<()> {
    let (mut cfg, bytes) = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.gp.master_seed = s;
    }
    if let Some(p) = phase {
        cfg.gp.phase = p;
    }
    let scenario = cfg.scenario()?;

    let b = &scenario.world.bounds;
    let diag = ((b.x.1 - b.x.0).powi(2) + (b.y.1 - b.y.0).powi(2)).sqrt();
    if !scenario
        .cost
        .collision_dominates(scenario.episode.max_time, diag, RAY_COUNT)
    {
        log::warn!("cost.collision_penalty does not dominate the worst collision-free cost");
    }

    let bench_path = benchmark.or_else(|| {
        cfg.benchmark
            .as_ref()
            .map(|p| config.parent().unwrap_or(Path::new(".")).join(p))
    });
    let bench = match bench_path {
        Some(p) => Some(load_stack(&p)?),
        None => None,
    };

    let result = run_evolution(&scenario, &cfg.gp, bench.as_ref(), workers)?;
    let dir = out_dir(out, &cfg)?;
    fs::write(dir.join("best_sot.json"), serialize_stack(&result.best))?;
    fs::write(dir.join("generations.csv"), records_csv(&result.records))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(&bytes),
        master_seed: cfg.gp.master_seed,
        phase: cfg.gp.phase,
        population_size: cfg.gp.population_size,
        generations: result.records.len(),
        evaluations: result.evaluations,
        best_cost: result.best.cost,
        best_episode_seeds: result.best_seeds.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Protocol(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;

    writeln!(stdout, "generations: {}", result.records.len())?;
    writeln!(stdout, "best_cost: {}", result.best.cost.unwrap_or(f64::NAN))?;
    writeln!(stdout, "best_order: {}", result.best.active_order().join(" > "))?;
    writeln!(stdout, "output: {}", dir.display())?;
    Ok(())
}

fn replay(
    stack: &Path,
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    stdout: &mut impl std::io::Write,
) -> Result<()> {
    let (cfg, _) = RunConfig::load(config)?;
    let scenario = cfg.scenario()?;
    let stack = load_stack(stack)?;
    stack.validate(&scenario.dictionary)?;
    let seed = seed.unwrap_or(scenario.episode.rng_seed);
    let (trace, cost) = scenario.run(&stack, seed)?;
    let dir = out_dir(out, &cfg)?;
    fs::write(dir.join("trace.csv"), trace.to_csv())?;

    writeln!(stdout, "cost: {cost}")?;
    writeln!(stdout, "termination: {}", trace.termination.name())?;
    writeln!(stdout, "steps: {}", trace.rows.len())?;
    writeln!(stdout, "min_ray: {}", trace.min_ray())?;
    match trace.goal_time() {
        Some(t) => writeln!(stdout, "goal_time: {t}")?,
        None => writeln!(stdout, "goal_time: none")?,
    }
    Ok(())
}

/// One row per entry: priority (1 = highest), id, activity, parameters.
pub fn inspect_table(stack: &StackOfTasks<f64>) -> String {
    let width = stack.entries.iter().map(|e| e.task_id.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<8}  {:<width$}  {:<6}  parameters\n", "priority", "task", "active");
    for (i, e) in stack.entries.iter().enumerate() {
        let params: Vec<String> = ParamKind::ALL
            .into_iter()
            .filter_map(|k| e.params.get(k).map(|v| format!("{}={}", k.name(), v)))
            .collect();
        let _ = writeln!(
            out,
            "{:<8}  {:<width$}  {:<6}  {}",
            i + 1,
            e.task_id,
            e.active,
            params.join(" ")
        );
    }
    match stack.cost {
        Some(c) => {
            let _ = writeln!(out, "cost: {c}");
        }
        None => out.push_str("cost: none\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(exit_code(&Error::config("cost.terms", "x")), 2);
        assert_eq!(exit_code(&Error::Parse { line: 1, column: 1, msg: "x".into() }), 2);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 3);
        assert_eq!(exit_code(&Error::Singular("x".into())), 4);
    }

    #[test]
    fn unknown_field_names_its_path() {
        let err = RunConfig::parse(r#"{"robot": {"bogus": 1}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert!(path.starts_with("robot"), "{path}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        match RunConfig::parse("{\n  \"robot\": ,\n}").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}

//! Batch experiments: paired trials, per-trial CSV, aggregates, the
//! distractor sweep and the single-episode demo.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agent::{
    run_baseline_corpp, run_baseline_joint, run_baseline_predefined, run_baseline_uniform, run_sarp_episode,
    AgentConfig, AgentKind, CorppRules, EpisodeContext, EpisodeResult,
};
use crate::corpus::{CorpusGeneratorSpec, SceneGraphCorpus};
use crate::pomdp::{solve, Policy, PomdpParams, SolverConfig, TargetSearchPomdp};
use crate::simworld::{Environment, ObjectLocation, ObjectSpec, PerceptionModel, RelativeLocation, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSource {
    /// NDJSON corpus file.
    File { path: PathBuf },
    /// Generator spec file plus seed.
    Synthetic { spec: PathBuf, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: PathBuf,
    pub corpus: CorpusSource,
    #[serde(default = "default_agents")]
    pub agents: Vec<AgentKind>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Overrides the environment's target label.
    #[serde(default)]
    pub query: Option<String>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub perception: PerceptionModel,
    /// Planner parameters. `move_success` also drives the simulator.
    #[serde(default)]
    pub pomdp: PomdpParams,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub corpp_rules: Option<PathBuf>,
    /// Per-trial CSV destination.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Labels added one by one in the distractor sweep.
    #[serde(default)]
    pub distractor_labels: Vec<String>,
}

fn default_agents() -> Vec<AgentKind> {
    vec![AgentKind::Sarp, AgentKind::Uniform, AgentKind::Predefined, AgentKind::Corpp]
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.environment);
        match &mut config.corpus {
            CorpusSource::File { path } => resolve(path),
            CorpusSource::Synthetic { spec, .. } => resolve(spec),
        }
        if let Some(p) = config.corpp_rules.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.output.as_mut() {
            resolve(p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.trials >= 1, "trial count must be at least 1");
        ensure!(!self.agents.is_empty(), "no agents configured");
        ensure!(self.environment.exists(), "environment file {} not found", self.environment.display());
        match &self.corpus {
            CorpusSource::File { path } => ensure!(path.exists(), "corpus file {} not found", path.display()),
            CorpusSource::Synthetic { spec, .. } => {
                ensure!(spec.exists(), "corpus spec {} not found", spec.display())
            }
        }
        if let Some(p) = &self.corpp_rules {
            ensure!(p.exists(), "rules file {} not found", p.display());
        }
        Ok(())
    }
}

pub fn load_corpus(source: &CorpusSource) -> Result<SceneGraphCorpus> {
    match source {
        CorpusSource::File { path } => {
            SceneGraphCorpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
        }
        CorpusSource::Synthetic { spec, seed } => {
            let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: CorpusGeneratorSpec = serde_json::from_str(&text)?;
            Ok(spec.generate(*seed)?)
        }
    }
}

/// Loaded components shared by every trial of one experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: Environment,
    pub corpus: SceneGraphCorpus,
    pub model: TargetSearchPomdp,
    pub policy: Policy,
    pub corpp_prior: Vec<f64>,
    pub solve_seconds: f64,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        config.perception.validate()?;
        let mut env = Environment::load(&config.environment)
            .with_context(|| format!("loading environment {}", config.environment.display()))?;
        if let Some(q) = &config.query {
            env = env.with_target(q, None)?;
        }
        let corpus = load_corpus(&config.corpus)?;
        let detector = config.perception.detector(env.query_label());
        let model = TargetSearchPomdp::new(&env.map, env.query_label(), detector, config.pomdp)?;
        let start = Instant::now();
        let policy = solve(&model, &config.solver)?;
        let solve_seconds = start.elapsed().as_secs_f64();
        let rules = match &config.corpp_rules {
            Some(p) => CorppRules::load(p)?,
            None => CorppRules::uniform(env.map.location_count()),
        };
        let corpp_prior = rules.prior(&env)?;
        Ok(Self {
            config,
            env,
            corpus,
            model,
            policy,
            corpp_prior,
            solve_seconds,
        })
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.config.base_seed.wrapping_add(trial as u64)
    }

    pub fn world(&self, trial: usize) -> Result<WorldState> {
        Ok(WorldState::from_environment(&self.env, self.config.pomdp.move_success, self.seed(trial))?)
    }

    fn context(&self) -> EpisodeContext<'_> {
        EpisodeContext {
            map: &self.env.map,
            perception: &self.config.perception,
            model: &self.model,
            config: &self.config.agent,
        }
    }

    pub fn run_trial(&self, agent: AgentKind, trial: usize) -> Result<EpisodeResult> {
        let mut world = self.world(trial)?;
        let ctx = self.context();
        let result = match agent {
            AgentKind::Sarp => run_sarp_episode(ctx, &mut world, &self.policy, &self.corpus)?,
            AgentKind::Uniform => run_baseline_uniform(ctx, &mut world, &self.policy)?,
            AgentKind::Predefined => run_baseline_predefined(ctx, &mut world)?,
            AgentKind::Corpp => run_baseline_corpp(ctx, &mut world, &self.policy, &self.corpp_prior)?,
            AgentKind::Joint => bail!("the joint planner runs only inside the distractor sweep"),
        };
        Ok(result)
    }

    fn record(&self, trial: usize, result: &EpisodeResult) -> TrialRecord {
        TrialRecord::new(trial, self.seed(trial), self.env.map.name(), self.env.query_label(), result)
    }

    /// Every configured agent over the same trial seeds.
    pub fn run(&self) -> Result<Vec<TrialRecord>> {
        let jobs: Vec<(AgentKind, usize)> = self
            .config
            .agents
            .iter()
            .flat_map(|&a| (0..self.config.trials).map(move |t| (a, t)))
            .collect();
        jobs.par_iter()
            .map(|&(agent, trial)| Ok(self.record(trial, &self.run_trial(agent, trial)?)))
            .collect()
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub agent: AgentKind,
    pub seed: u64,
    pub env: String,
    pub query: String,
    pub action_cost: f64,
    pub success: bool,
    pub steps: usize,
    pub biased_steps: usize,
}

impl TrialRecord {
    pub fn new(trial_id: usize, seed: u64, env: &str, query: &str, result: &EpisodeResult) -> Self {
        Self {
            trial_id,
            agent: result.agent,
            seed,
            env: env.to_string(),
            query: query.to_string(),
            action_cost: result.action_cost,
            success: result.success,
            steps: result.steps,
            biased_steps: result.biased_steps,
        }
    }
}

/// Writes via a sibling temporary file and a rename.
pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut writer = csv::Writer::from_path(&tmp)?;
        for r in records {
            writer.serialize(r)?;
        }
        writer.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub trials: usize,
    pub mean_cost: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std_cost: f64,
    pub success_rate: f64,
    pub mean_steps: f64,
}

impl AgentSummary {
    pub fn from_records<'a>(agent: AgentKind, records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let rows: Vec<&TrialRecord> = records.into_iter().filter(|r| r.agent == agent).collect();
        let n = rows.len();
        let costs: Vec<f64> = rows.iter().map(|r| r.action_cost).collect();
        let mean_cost = mean(&costs);
        let std_cost = if n > 1 {
            (costs.iter().map(|c| (c - mean_cost).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            agent,
            trials: n,
            mean_cost,
            std_cost,
            success_rate: rows.iter().filter(|r| r.success).count() as f64 / n.max(1) as f64,
            mean_steps: mean(&rows.iter().map(|r| r.steps as f64).collect::<Vec<_>>()),
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub rows: Vec<AgentSummary>,
}

impl AggregateReport {
    /// One row per agent, in order of first appearance.
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut agents: Vec<AgentKind> = Vec::new();
        for r in records {
            if !agents.contains(&r.agent) {
                agents.push(r.agent);
            }
        }
        Self {
            rows: agents.into_iter().map(|a| AgentSummary::from_records(a, records)).collect(),
        }
    }

    pub fn get(&self, agent: AgentKind) -> Option<&AgentSummary> {
        self.rows.iter().find(|r| r.agent == agent)
    }
}

impl fmt::Display for AggregateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>7} {:>18} {:>8} {:>8}",
            "agent", "trials", "cost (std)", "success", "steps"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>7} {:>18} {:>8.3} {:>8.2}",
                r.agent.name(),
                r.trials,
                format!("{:.1} ({:.1})", r.mean_cost, r.std_cost),
                r.success_rate,
                r.mean_steps
            )?;
        }
        Ok(())
    }
}

pub struct ExperimentOutcome {
    pub records: Vec<TrialRecord>,
    pub report: AggregateReport,
    pub solve_seconds: f64,
}

/// Runs all agents over paired seeds and writes the CSV when configured.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentOutcome> {
    let experiment = Experiment::prepare(config)?;
    let records = experiment.run()?;
    if let Some(out) = &experiment.config.output {
        write_trials_csv(out, &records)?;
    }
    Ok(ExperimentOutcome {
        report: AggregateReport::from_records(&records),
        records,
        solve_seconds: experiment.solve_seconds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub t: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test on `a[i] - b[i]`. Constant differences give
/// p = 1 when zero and p = 0 otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = if d.len() > 1 {
        d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    if var == 0.0 {
        let p_value = if m == 0.0 { 1.0 } else { 0.0 };
        return PairedTTest {
            mean_difference: m,
            t: if m == 0.0 { 0.0 } else { f64::INFINITY.copysign(m) },
            p_value,
        };
    }
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("degrees of freedom are positive");
    PairedTTest {
        mean_difference: m,
        t,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub distractors: usize,
    pub sarp: AgentSummary,
    pub joint: Option<AgentSummary>,
    pub joint_solve_seconds: Option<f64>,
    /// SARP minus joint, over shared seeds.
    pub paired: Option<PairedTTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub sarp_solve_seconds: f64,
}

impl SweepReport {
    /// `(max - min) / mean` of SARP's mean cost across counts.
    pub fn sarp_relative_spread(&self) -> f64 {
        let costs: Vec<f64> = self.rows.iter().map(|r| r.sarp.mean_cost).collect();
        let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        (max - min) / mean(&costs)
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>11} {:>16} {:>16} {:>12} {:>9}",
            "distractors", "sarp cost", "joint cost", "joint solve", "paired p"
        )?;
        for r in &self.rows {
            let joint = r
                .joint
                .as_ref()
                .map_or("-".to_string(), |j| format!("{:.1} ({:.1})", j.mean_cost, j.std_cost));
            let solve = r.joint_solve_seconds.map_or("-".to_string(), |s| format!("{s:.3}s"));
            let p = r.paired.map_or("-".to_string(), |p| format!("{:.3}", p.p_value));
            writeln!(
                f,
                "{:>11} {:>16} {:>16} {:>12} {:>9}",
                r.distractors,
                format!("{:.1} ({:.1})", r.sarp.mean_cost, r.sarp.std_cost),
                joint,
                solve,
                p
            )?;
        }
        write!(f, "sarp relative spread: {:.3}", self.sarp_relative_spread())
    }
}

pub struct SweepOutcome {
    pub report: SweepReport,
    pub records: Vec<TrialRecord>,
}

/// Adds `k` randomly placed distractors for each requested `k` and compares
/// the biased planner with the joint-state planner (for `k` up to 3).
pub fn run_scalability_sweep(config: ExperimentConfig, counts: &[usize]) -> Result<SweepOutcome> {
    let max_k = counts.iter().copied().max().unwrap_or(0);
    ensure!(
        config.distractor_labels.len() >= max_k,
        "{} distractor labels configured, {max_k} needed",
        config.distractor_labels.len()
    );
    let base = Experiment::prepare(config)?;
    let config = &base.config;
    let mut rows = Vec::new();
    let mut all_records = Vec::new();
    for &k in counts {
        let labels = &config.distractor_labels[..k];
        let mut env = base.env.clone();
        env.objects.extend(labels.iter().map(|label| ObjectSpec {
            label: label.clone(),
            location: ObjectLocation::Relative(RelativeLocation::Random),
            probability: 1.0,
        }));
        let env_name = format!("{}+{k}", env.map.name());
        let world = |trial: usize| {
            WorldState::from_environment(&env, config.pomdp.move_success, base.seed(trial))
        };
        let ctx = EpisodeContext {
            map: &env.map,
            perception: &config.perception,
            model: &base.model,
            config: &config.agent,
        };
        let sarp: Vec<TrialRecord> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let r = run_sarp_episode(ctx, &mut world(t)?, &base.policy, &base.corpus)?;
                Ok(TrialRecord::new(t, base.seed(t), &env_name, env.query_label(), &r))
            })
            .collect::<Result<_>>()?;

        let (joint, joint_solve_seconds) = if k <= crate::pomdp::MAX_JOINT_DISTRACTORS {
            let distractors: Vec<(String, _)> = labels
                .iter()
                .map(|l| (l.clone(), config.perception.detector(l)))
                .collect();
            let model = TargetSearchPomdp::joint(
                &env.map,
                env.query_label(),
                config.perception.detector(env.query_label()),
                &distractors,
                config.pomdp,
            )?;
            let start = Instant::now();
            let policy = solve(&model, &config.solver)?;
            let seconds = start.elapsed().as_secs_f64();
            let ctx = EpisodeContext { model: &model, ..ctx };
            let records: Vec<TrialRecord> = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let r = run_baseline_joint(ctx, &mut world(t)?, &policy)?;
                    Ok(TrialRecord::new(t, base.seed(t), &env_name, env.query_label(), &r))
                })
                .collect::<Result<_>>()?;
            (Some(records), Some(seconds))
        } else {
            (None, None)
        };

        let paired = joint.as_ref().map(|j| {
            let a: Vec<f64> = sarp.iter().map(|r| r.action_cost).collect();
            let b: Vec<f64> = j.iter().map(|r| r.action_cost).collect();
            paired_t_test(&a, &b)
        });
        rows.push(SweepRow {
            distractors: k,
            sarp: AgentSummary::from_records(AgentKind::Sarp, &sarp),
            joint: joint.as_ref().map(|j| AgentSummary::from_records(AgentKind::Joint, j)),
            joint_solve_seconds,
            paired,
        });
        all_records.extend(sarp);
        all_records.extend(joint.unwrap_or_default());
    }
    if let Some(out) = &config.output {
        write_trials_csv(out, &all_records)?;
    }
    Ok(SweepOutcome {
        report: SweepReport {
            rows,
            sarp_solve_seconds: base.solve_seconds,
        },
        records: all_records,
    })
}

/// Formats an episode as a per-step belief table.
pub fn format_trace(result: &EpisodeResult) -> String {
    let fmt_vec = |v: &[f64]| v.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" ");
    let n = result.trace.first().map_or(0, |s| s.b.len());
    let width = n * 5;
    let mut out = format!(
        "{:>4}  {:<10} {:>3}  {:<width$}  {:<width$}  {}\n",
        "step", "action", "obs", "b", "b'", "bias"
    );
    for s in &result.trace {
        out.push_str(&format!(
            "{:>4}  {:<10} {:>3}  {:<width$}  {:<width$}  {}\n",
            s.step,
            s.action.to_string(),
            s.observation.short(),
            fmt_vec(&s.b),
            fmt_vec(&s.b_prime),
            if s.bias_applied { "Yes" } else { "No" }
        ));
    }
    out.push_str(&format!(
        "target at l{}, reported {}, cost {:.0}, {}",
        result.target_location,
        result.reported_location.map_or("nothing".to_string(), |l| format!("l{l}")),
        result.action_cost,
        if result.success { "success" } else { "failure" }
    ));
    out
}

pub struct DemoOutcome {
    pub episode: EpisodeResult,
    pub table: String,
}

/// One SARP episode on trial seed `seed`, with a printable trace.
pub fn run_demo(config: ExperimentConfig, seed: u64) -> Result<DemoOutcome> {
    let config = ExperimentConfig {
        base_seed: seed,
        trials: 1,
        ..config
    };
    let experiment = Experiment::prepare(config)?;
    let episode = experiment.run_trial(AgentKind::Sarp, 0)?;
    let table = format_trace(&episode);
    Ok(DemoOutcome { episode, table })
}

//! Configuration-driven experiments: sweeps of θ or ε over a set of
//! policies, evaluated exactly and/or by simulation, written as CSV.
//!
//! Configurations are JSON. Experiments run in `f64`.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{build_level_sets, mlg_policy, sn_policy};
use crate::error::{Error, Result};
use crate::exact::{
    average_cost, controller_average_cost, exhaustive_optimal, growth_rate_optimal, policy_count,
    theta_threshold, ExhaustiveOptions, GrowthRateOptions, StationaryPolicy, ThetaThreshold,
};
use crate::heuristics::{build_periodic_schedule, PeriodicController, PeriodicSchedule, RoundRobinController};
use crate::model::{AsymptoticInstance, Client, Instance, InstanceSpec, State};
use crate::sim::{estimate_cost, PolicyHandle, SimConfig};

pub const DEFAULT_EXACT_STATE_CAP: usize = 2000;

/// Header of every result CSV.
pub const CSV_HEADER: &str = "sweep_value,policy,J,J_normalized,stderr,method,converged";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySpec {
    /// Optimal stationary policy by enumeration.
    OpExhaustive,
    /// Optimal policy by normalised value iteration.
    OpIterative,
    Mlg,
    Sn,
    Prr,
    Wdd,
    Ps { max_period: usize },
    Explicit {
        decisions: Vec<Client>,
        #[serde(default)]
        name: Option<String>,
    },
}

impl PolicySpec {
    pub fn name(&self) -> String {
        match self {
            PolicySpec::OpExhaustive => "op-exhaustive".into(),
            PolicySpec::OpIterative => "op-iterative".into(),
            PolicySpec::Mlg => "mlg".into(),
            PolicySpec::Sn => "sn".into(),
            PolicySpec::Prr => "prr".into(),
            PolicySpec::Wdd => "wdd".into(),
            PolicySpec::Ps { .. } => "ps".into(),
            PolicySpec::Explicit { name, .. } => name.clone().unwrap_or_else(|| "explicit".into()),
        }
    }

    fn is_optimal(&self) -> bool {
        matches!(self, PolicySpec::OpExhaustive | PolicySpec::OpIterative)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Theta,
    Epsilon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluation {
    #[default]
    Exact,
    Simulate,
    Both,
}

/// Simulation parameters; the seed comes from the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub horizon: u64,
    pub trials: usize,
    #[serde(default)]
    pub warmup: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec<f64>,
    pub policies: Vec<PolicySpec>,
    /// Absent: a single point at the instance's own θ.
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default)]
    pub simulation: Option<SimulationSettings>,
    #[serde(default = "default_cap")]
    pub exact_state_cap: usize,
    /// Single source of all randomness.
    #[serde(default)]
    pub seed: u64,
    /// Start state of every evaluation; defaults to `τ`.
    #[serde(default)]
    pub start: Option<Vec<u32>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_cap() -> usize {
    DEFAULT_EXACT_STATE_CAP
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::Config("no policies listed".into()));
        }
        let mut names: Vec<String> = self.policies.iter().map(PolicySpec::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("policy names must be distinct".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep grid is empty".into()));
            }
            if sweep.values.iter().any(|v| !v.is_finite()) || sweep.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("sweep grid must be finite and strictly increasing".into()));
            }
            if sweep.axis == SweepAxis::Epsilon && !self.instance.is_asymptotic() {
                return Err(Error::Config(
                    "an epsilon sweep needs the asymptotic instance form (taus, bs, epsilon, theta)".into(),
                ));
            }
        }
        let n = self.instance.taus().len();
        if n != 2 && self.policies.contains(&PolicySpec::Mlg) {
            return Err(Error::Config(format!("mlg needs exactly 2 clients, got {n}")));
        }
        let needs_sim = self.evaluation != Evaluation::Exact || self.policies.contains(&PolicySpec::Wdd);
        if needs_sim && self.simulation.is_none() {
            return Err(Error::Config("simulation settings are required (simulated evaluation or wdd)".into()));
        }
        if let Some(s) = &self.simulation {
            SimConfig { horizon: s.horizon, trials: s.trials, seed: self.seed, warmup: s.warmup }
                .validate()
                .map_err(config_err)?;
        }
        for point in self.points()? {
            let inst = point.instance;
            if let Some(start) = &self.start {
                State::new(start.clone(), inst.taus()).map_err(config_err)?;
            }
            if let Some(PolicySpec::Explicit { decisions, .. }) =
                self.policies.iter().find(|p| matches!(p, PolicySpec::Explicit { .. }))
            {
                StationaryPolicy::new(&inst, decisions.clone()).map_err(config_err)?;
            }
            if self.evaluation == Evaluation::Exact
                && inst.total_states() > self.exact_state_cap
                && self.simulation.is_none()
            {
                return Err(Error::Config(format!(
                    "{} states exceed exact_state_cap = {} and no simulation settings are given",
                    inst.total_states(),
                    self.exact_state_cap
                )));
            }
        }
        Ok(())
    }

    /// Instances at every sweep point, in grid order.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let base_theta = match &self.instance {
            InstanceSpec::Direct { theta, .. } | InstanceSpec::Asymptotic { theta, .. } => *theta,
        };
        let (axis, values) = match &self.sweep {
            Some(s) => (s.axis, s.values.clone()),
            None => (SweepAxis::Theta, vec![base_theta]),
        };
        values
            .into_iter()
            .map(|v| {
                let instance = match (axis, &self.instance) {
                    (SweepAxis::Theta, spec) => spec.build()?.with_theta(v)?,
                    (SweepAxis::Epsilon, InstanceSpec::Asymptotic { taus, bs, theta, .. }) => {
                        AsymptoticInstance::new(taus.clone(), bs.clone(), v, *theta)?.into_instance()
                    }
                    (SweepAxis::Epsilon, InstanceSpec::Direct { .. }) => {
                        return Err(Error::Config("epsilon sweep on a direct instance".into()))
                    }
                };
                Ok(SweepPoint { value: v, instance })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(config_err)
    }

    fn start_state(&self, inst: &Instance<f64>) -> Result<State> {
        match &self.start {
            Some(s) => State::new(s.clone(), inst.taus()),
            None => Ok(inst.threshold_state()),
        }
    }

    fn sim_config(&self) -> Option<SimConfig> {
        self.simulation.map(|s| SimConfig {
            horizon: s.horizon,
            trials: s.trials,
            seed: self.seed,
            warmup: s.warmup,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub instance: Instance<f64>,
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub policy: String,
    #[serde(rename = "J")]
    pub j: f64,
    /// `J` over the optimal reference at the same sweep point.
    #[serde(rename = "J_normalized")]
    pub j_normalized: Option<f64>,
    pub stderr: Option<f64>,
    /// `exact`, `exhaustive`, `growth-rate` or `simulate`.
    pub method: String,
    pub converged: bool,
}

/// How the optimal reference of a sweep point was obtained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reference {
    pub sweep_value: f64,
    pub method: String,
    pub j: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub references: Vec<Option<Reference>>,
}

impl ExperimentOutput {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

struct Evaluated {
    j: f64,
    stderr: Option<f64>,
    method: &'static str,
    converged: bool,
}

/// A policy materialised at one sweep point.
enum Built {
    Stationary(StationaryPolicy, Option<Evaluated>),
    RoundRobin,
    DebtWeighted,
    Periodic(PeriodicSchedule),
}

fn build_policy(spec: &PolicySpec, inst: &Instance<f64>) -> Result<Built> {
    Ok(match spec {
        PolicySpec::OpExhaustive => {
            let (f, report) = exhaustive_optimal(inst, ExhaustiveOptions::default())?;
            let ev = Evaluated {
                j: report.average_cost,
                stderr: None,
                method: "exhaustive",
                converged: report.converged,
            };
            Built::Stationary(f, Some(ev))
        }
        PolicySpec::OpIterative => {
            let r = growth_rate_optimal(inst, GrowthRateOptions::default())?;
            let ev = Evaluated {
                j: r.average_cost,
                stderr: None,
                method: "growth-rate",
                converged: r.converged,
            };
            Built::Stationary(r.policy, Some(ev))
        }
        PolicySpec::Mlg => Built::Stationary(mlg_policy(inst)?, None),
        PolicySpec::Sn => Built::Stationary(sn_policy(inst)?.0, None),
        PolicySpec::Prr => Built::RoundRobin,
        PolicySpec::Wdd => Built::DebtWeighted,
        PolicySpec::Ps { max_period } => Built::Periodic(build_periodic_schedule(inst, *max_period)?),
        PolicySpec::Explicit { decisions, .. } => {
            Built::Stationary(StationaryPolicy::new(inst, decisions.clone())?, None)
        }
    })
}

fn evaluate_exact(built: Built, inst: &Instance<f64>, start: &State) -> Result<Evaluated> {
    let report = match built {
        Built::Stationary(_, Some(ev)) => return Ok(ev),
        Built::Stationary(f, None) => average_cost(&f, inst, start)?,
        Built::RoundRobin => controller_average_cost(
            &RoundRobinController {
                n_clients: inst.n_clients(),
            },
            inst,
            start,
        )?,
        Built::Periodic(schedule) => controller_average_cost(&PeriodicController { schedule }, inst, start)?,
        Built::DebtWeighted => unreachable!("debt-weighted scheduling has no finite-state chain"),
    };
    Ok(Evaluated {
        j: report.average_cost,
        stderr: None,
        method: "exact",
        converged: report.converged,
    })
}

fn evaluate_simulated(built: Built, inst: &Instance<f64>, start: &State, cfg: &SimConfig) -> Result<Evaluated> {
    let handle = match built {
        Built::Stationary(f, _) => PolicyHandle::Stationary(f),
        Built::RoundRobin => PolicyHandle::RoundRobin,
        Built::DebtWeighted => PolicyHandle::DebtWeighted,
        Built::Periodic(s) => PolicyHandle::Periodic(s),
    };
    let est = estimate_cost(inst, &handle, cfg, start)?;
    Ok(Evaluated {
        j: est.j_hat,
        stderr: Some(est.stderr),
        method: "simulate",
        converged: true,
    })
}

/// Optimal reference: enumeration when small enough, else value iteration.
fn reference(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<Option<Reference>> {
    let inst = &point.instance;
    if inst.total_states() > cfg.exact_state_cap {
        return Ok(None);
    }
    let opts = ExhaustiveOptions::default();
    let feasible = policy_count(inst, opts.ne_only).is_some_and(|c| c <= opts.cap);
    let (method, j, converged) = if feasible {
        let (_, r) = exhaustive_optimal(inst, opts)?;
        ("exhaustive", r.average_cost, r.converged)
    } else {
        let r = growth_rate_optimal(inst, GrowthRateOptions::default())?;
        ("growth-rate", r.average_cost, r.converged)
    };
    Ok(Some(Reference {
        sweep_value: point.value,
        method: method.into(),
        j,
        converged,
    }))
}

fn run_point(cfg: &ExperimentConfig, point: &SweepPoint) -> Result<(Vec<ResultRow>, Option<Reference>)> {
    let inst = &point.instance;
    let start = cfg.start_state(inst)?;
    let exact_ok = inst.total_states() <= cfg.exact_state_cap;
    let sim = cfg.sim_config();
    let reference = reference(cfg, point)?;
    let mut rows = Vec::new();
    for spec in &cfg.policies {
        let name = spec.name();
        let mut results = Vec::new();
        let want_exact = cfg.evaluation != Evaluation::Simulate && exact_ok;
        let want_sim = cfg.evaluation != Evaluation::Exact || !exact_ok;
        let stateful = matches!(spec, PolicySpec::Wdd);
        if want_exact && !stateful {
            results.push(evaluate_exact(build_policy(spec, inst)?, inst, &start)?);
        }
        if want_sim || (stateful && cfg.evaluation == Evaluation::Exact) {
            let sim = sim.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "{name}: exact evaluation is infeasible (exact_state_cap = {}) and no simulation settings are given",
                    cfg.exact_state_cap
                ))
            })?;
            results.push(evaluate_simulated(build_policy(spec, inst)?, inst, &start, sim)?);
        }
        for ev in results {
            let j_normalized = reference.as_ref().filter(|r| r.j > 0.0).map(|r| ev.j / r.j);
            rows.push(ResultRow {
                sweep_value: point.value,
                policy: name.clone(),
                j: ev.j,
                j_normalized,
                stderr: ev.stderr,
                method: ev.method.into(),
                converged: ev.converged,
            });
        }
        if spec.is_optimal() && !exact_ok {
            log::warn!("{name} at {}: evaluated by simulation only", point.value);
        }
    }
    Ok((rows, reference))
}

/// Evaluates every policy at every sweep point. Points run in parallel;
/// rows come back sorted by sweep value, policy name and method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let points = cfg.points()?;
    let per_point = points
        .par_iter()
        .map(|p| run_point(cfg, p))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut references = Vec::new();
    for (r, reference) in per_point {
        rows.extend(r);
        if let Some(reference) = &reference {
            log::info!(
                "reference at {}: {} (J = {}, converged = {})",
                reference.sweep_value,
                reference.method,
                reference.j,
                reference.converged
            );
        }
        references.push(reference);
    }
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.policy.cmp(&b.policy))
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(ExperimentOutput { rows, references })
}

/// Threshold diagnostics of one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointDescription {
    pub sweep_value: f64,
    pub theta: f64,
    pub theta_threshold: ThetaThreshold<f64>,
    pub above_threshold: bool,
    pub level_sizes: Vec<usize>,
    pub unplaced: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Description {
    pub n_clients: usize,
    pub taus: Vec<u32>,
    pub total_states: usize,
    /// Non-exclusionary stationary policies (all policies for one client).
    pub policy_count: Option<u128>,
    pub points: Vec<PointDescription>,
    pub warnings: Vec<String>,
}

/// Instance diagnostics: state count, θ threshold and level sets per point.
pub fn describe(cfg: &ExperimentConfig) -> Result<Description> {
    let points = cfg.points()?;
    let first = &points[0].instance;
    let mut warnings = Vec::new();
    if first.n_clients() == 1 {
        warnings.push(
            "one client: the non-exclusionary restriction is vacuous (the only policy serves client 1 everywhere)"
                .to_string(),
        );
    }
    let mut out = Vec::new();
    for p in &points {
        let inst = &p.instance;
        let th = theta_threshold(inst);
        let above = th.exceeded_by(inst.theta());
        if above {
            warnings.push(format!(
                "θ = {} at sweep value {} is not below θ_th = {:e}: a stationary optimum is not guaranteed",
                inst.theta(),
                p.value,
                th.value()
            ));
        }
        let (level_sizes, unplaced) = if inst.total_states() <= cfg.exact_state_cap {
            let ls = build_level_sets(inst)?;
            (ls.level_sizes(), ls.unplaced.len())
        } else {
            (Vec::new(), 0)
        };
        out.push(PointDescription {
            sweep_value: p.value,
            theta: inst.theta(),
            theta_threshold: th,
            above_threshold: above,
            level_sizes,
            unplaced,
        });
    }
    Ok(Description {
        n_clients: first.n_clients(),
        taus: first.taus().to_vec(),
        total_states: first.total_states(),
        policy_count: policy_count(first, true),
        points: out,
        warnings,
    })
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "clients: {}", self.n_clients)?;
        writeln!(f, "thresholds: {:?}", self.taus)?;
        writeln!(f, "states: {}", self.total_states)?;
        match self.policy_count {
            Some(c) => writeln!(f, "non-exclusionary policies: {c}")?,
            None => writeln!(f, "non-exclusionary policies: more than 2^128")?,
        }
        for p in &self.points {
            let th = match p.theta_threshold {
                ThetaThreshold::Finite { k, theta_th } => format!("θ_th = {theta_th:e} (K = {k})"),
                ThetaThreshold::Negligible { ln_k } => format!("θ_th ≈ 0 (ln K = {ln_k:.1})"),
            };
            let flag = if p.above_threshold { "  [θ ≥ θ_th]" } else { "" };
            writeln!(f, "point {}: θ = {}, {th}{flag}", p.sweep_value, p.theta)?;
            if !p.level_sizes.is_empty() {
                writeln!(f, "  level sizes: {:?}, unplaced: {}", p.level_sizes, p.unplaced)?;
            }
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// JSON of the named policy (or the first listed) at the first sweep
/// point: `{"decisions":[…]}` for stationary policies, `{"sequence":[…]}`
/// for periodic schedules.
pub fn emit_policy(cfg: &ExperimentConfig, name: Option<&str>) -> Result<serde_json::Value> {
    let spec = match name {
        Some(n) => cfg
            .policies
            .iter()
            .find(|p| p.name() == n)
            .ok_or_else(|| Error::Config(format!("no policy named {n}")))?,
        None => &cfg.policies[0],
    };
    let points = cfg.points()?;
    let inst = &points[0].instance;
    match build_policy(spec, inst)? {
        Built::Stationary(f, _) => Ok(serde_json::to_value(&f)?),
        Built::Periodic(s) => Ok(serde_json::to_value(&s)?),
        Built::RoundRobin | Built::DebtWeighted => Err(Error::Unsupported(format!(
            "{} keeps internal state and has no stationary decision table",
            spec.name()
        ))),
    }
}

//! Monte Carlo simulation of the scheduling system.
//!
//! Costs are accumulated as integer exceedance counts and only exponentiated
//! inside log-domain reductions, so long horizons cannot overflow. Trial `r`
//! draws from the ChaCha stream `r` of the configured seed, and reductions
//! run in trial order: results do not depend on the number of threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{mlg_policy, sn_policy};
use crate::error::{Error, Result};
use crate::exact::StationaryPolicy;
use crate::heuristics::{
    prr_advance, prr_decide, ps_decide, wdd_decide, DebtLedger, PeriodicSchedule, RoundRobinState,
};
use crate::model::{Instance, Kernel, State};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Accounted slots per trial.
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    /// Slots simulated before accounting starts.
    #[serde(default)]
    pub warmup: u64,
}

impl SimConfig {
    pub fn new(horizon: u64, trials: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            horizon,
            trials,
            seed,
            warmup: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.trials == 0 {
            return Err(Error::invalid("simulation needs horizon ≥ 1 and trials ≥ 1"));
        }
        Ok(())
    }
}

/// Any scheduler the simulator can drive.
#[derive(Clone, Debug)]
pub enum PolicyHandle {
    Stationary(StationaryPolicy),
    RoundRobin,
    DebtWeighted,
    Periodic(PeriodicSchedule),
}

impl PolicyHandle {
    pub fn mlg<T: Real>(instance: &Instance<T>) -> Result<Self> {
        Ok(PolicyHandle::Stationary(mlg_policy(instance)?))
    }

    pub fn sn<T: Real>(instance: &Instance<T>) -> Result<Self> {
        Ok(PolicyHandle::Stationary(sn_policy(instance)?.0))
    }
}

/// Per-trial controller state.
enum Runner<'p> {
    Stationary(&'p StationaryPolicy),
    Token(RoundRobinState),
    Ledger(DebtLedger),
    Clock(&'p PeriodicSchedule),
}

/// Slot-by-slot record of one trial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub horizon: u64,
    /// `Σ_t #{n : Y_n(t) = τ_n}` over the accounted slots, pre-transition.
    pub exceedance_total: u64,
    pub deliveries: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delivery_slots: Option<Vec<Vec<u64>>>,
    /// Accounted slot of the first visit to the regeneration state.
    pub first_regeneration: Option<u64>,
    pub cycle_lengths: Vec<u64>,
    pub cycle_exceedances: Vec<u64>,
    /// Exceedances before the first regeneration.
    pub pre_exceedances: u64,
    /// Exceedances after the last regeneration.
    pub tail_exceedances: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSetup {
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub trial: u64,
    pub record_delivery_slots: bool,
}

/// `(0)` for one client, `(1,0)` for two, `(0,1,…,N−1)` (clipped) beyond.
pub fn default_regeneration_state(taus: &[u32]) -> State {
    let v: Vec<u32> = match taus.len() {
        1 => vec![0],
        2 => vec![1.min(taus[0]), 0],
        _ => taus.iter().enumerate().map(|(n, &t)| (n as u32).min(t)).collect(),
    };
    State::new(v, taus).expect("clipped by construction")
}

/// A policy bound to an instance, ready to run trials.
pub struct Simulator<'a, T> {
    instance: &'a Instance<T>,
    kernel: Kernel<T>,
    policy: &'a PolicyHandle,
    ps: Vec<f64>,
    regeneration: usize,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(instance: &'a Instance<T>, policy: &'a PolicyHandle) -> Result<Self> {
        match policy {
            PolicyHandle::Stationary(f) if f.indexer().taus() != instance.taus() => {
                return Err(Error::invalid("policy was built for different thresholds"));
            }
            PolicyHandle::Periodic(s) => {
                PeriodicSchedule::new(s.sequence().to_vec(), instance.n_clients())?;
            }
            _ => {}
        }
        let kernel = Kernel::new(instance);
        let regeneration = kernel
            .indexer()
            .index(&default_regeneration_state(instance.taus()));
        Ok(Simulator {
            instance,
            kernel,
            policy,
            ps: instance.ps().iter().map(|p| p.as_f64()).collect(),
            regeneration,
        })
    }

    pub fn with_regeneration(mut self, state: &State) -> Result<Self> {
        let s = State::new(state.elapsed().to_vec(), self.instance.taus())?;
        self.regeneration = self.kernel.indexer().index(&s);
        Ok(self)
    }

    fn runner(&self) -> Runner<'a> {
        match self.policy {
            PolicyHandle::Stationary(f) => Runner::Stationary(f),
            PolicyHandle::RoundRobin => Runner::Token(RoundRobinState::new(self.instance.n_clients())),
            PolicyHandle::DebtWeighted => Runner::Ledger(DebtLedger::new(self.instance.n_clients())),
            PolicyHandle::Periodic(s) => Runner::Clock(s),
        }
    }

    pub fn run(&self, setup: &TrialSetup, start: &State) -> Result<TrialResult> {
        let start = State::new(start.elapsed().to_vec(), self.instance.taus())?;
        let n = self.instance.n_clients();
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        rng.set_stream(setup.trial);
        let mut runner = self.runner();
        let mut s = self.kernel.indexer().index(&start);

        let mut total = 0u64;
        let mut deliveries = vec![0u64; n];
        let mut slots = setup.record_delivery_slots.then(|| vec![Vec::new(); n]);
        let mut first_regeneration = None;
        let mut last_regeneration: Option<u64> = None;
        let mut cycle_lengths = Vec::new();
        let mut cycle_exceedances = Vec::new();
        let mut pre = 0u64;
        let mut running = 0u64;

        for t in 0..setup.warmup + setup.horizon {
            let counted = t >= setup.warmup;
            let tt = t.wrapping_sub(setup.warmup);
            if counted && s == self.regeneration {
                match last_regeneration {
                    Some(last) => {
                        cycle_lengths.push(tt - last);
                        cycle_exceedances.push(running);
                    }
                    None => {
                        first_regeneration = Some(tt);
                        pre = running;
                    }
                }
                last_regeneration = Some(tt);
                running = 0;
            }
            if counted {
                let k = self.kernel.exceedances(s) as u64;
                total += k;
                running += k;
            }
            let u = match &runner {
                Runner::Stationary(f) => f.at(s),
                Runner::Token(rr) => prr_decide(rr),
                Runner::Ledger(ledger) => wdd_decide(ledger, self.instance),
                Runner::Clock(sched) => ps_decide(sched, t),
            };
            let ui = u.get() as usize - 1;
            let delivered = rng.gen::<f64>() < self.ps[ui];
            match &mut runner {
                Runner::Token(rr) => *rr = prr_advance(*rr, delivered),
                Runner::Ledger(ledger) => ledger.record(u, delivered),
                _ => {}
            }
            if delivered && counted {
                deliveries[ui] += 1;
                if let Some(slots) = slots.as_mut() {
                    slots[ui].push(tt);
                }
            }
            s = if delivered {
                self.kernel.success(s, u)
            } else {
                self.kernel.failure(s)
            };
        }
        let (pre, tail) = if last_regeneration.is_some() {
            (pre, running)
        } else {
            (running, 0)
        };
        Ok(TrialResult {
            trial: setup.trial,
            horizon: setup.horizon,
            exceedance_total: total,
            deliveries,
            delivery_slots: slots,
            first_regeneration,
            cycle_lengths,
            cycle_exceedances,
            pre_exceedances: pre,
            tail_exceedances: tail,
        })
    }

    /// All trials of `cfg`, in trial order.
    pub fn run_all(&self, cfg: &SimConfig, start: &State) -> Result<Vec<TrialResult>> {
        cfg.validate()?;
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| {
                self.run(
                    &TrialSetup {
                        horizon: cfg.horizon,
                        warmup: cfg.warmup,
                        seed: cfg.seed,
                        trial,
                        record_delivery_slots: false,
                    },
                    start,
                )
            })
            .collect()
    }
}

pub fn run_trial<T: Real>(
    instance: &Instance<T>,
    policy: &PolicyHandle,
    setup: &TrialSetup,
    start: &State,
) -> Result<TrialResult> {
    Simulator::new(instance, policy)?.run(setup, start)
}

pub fn run_trials<T: Real>(
    instance: &Instance<T>,
    policy: &PolicyHandle,
    cfg: &SimConfig,
    start: &State,
) -> Result<Vec<TrialResult>> {
    Simulator::new(instance, policy)?.run_all(cfg, start)
}

/// One JSON object per trial and line.
pub fn write_trial_summaries<W: Write>(mut out: W, trials: &[TrialResult]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trial summaries>", e))?;
    }
    Ok(())
}

/// `ln mean_i exp(a_i)`, shifted by the maximum.
fn log_mean_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = a.iter().map(|&x| (x - m).exp()).sum();
    m + (s / a.len() as f64).ln()
}

fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct CostEstimate<T> {
    /// `log_mean_cost / (θ T)`.
    pub j_hat: T,
    /// `ln mean_r exp(θ C_r)`.
    pub log_mean_cost: T,
    /// Delta-method standard error of `log_mean_cost`.
    pub stderr_log: T,
    /// The same, on the scale of `j_hat`.
    pub stderr: T,
    pub trials_used: usize,
    /// Kish effective sample size `(Σw)²/Σw²` of the weights `e^{θ C_r}`.
    /// Far below `trials_used`, a few trials dominate and `stderr`
    /// understates the (downward) bias of `j_hat`.
    pub effective_trials: T,
    /// All trials had the same cost, so no spread could be estimated.
    pub degenerate: bool,
}

/// Empirical risk-sensitive cost over `cfg.trials` independent runs.
pub fn estimate_cost<T: Real>(
    instance: &Instance<T>,
    policy: &PolicyHandle,
    cfg: &SimConfig,
    start: &State,
) -> Result<CostEstimate<T>> {
    let trials = run_trials(instance, policy, cfg, start)?;
    cost_from_trials(&trials, instance.theta(), cfg.horizon)
}

pub fn cost_from_trials<T: Real>(trials: &[TrialResult], theta: T, horizon: u64) -> Result<CostEstimate<T>> {
    if trials.is_empty() {
        return Err(Error::Estimation("no trials".into()));
    }
    let th = theta.as_f64();
    let a: Vec<f64> = trials.iter().map(|t| th * t.exceedance_total as f64).collect();
    let lme = log_mean_exp(&a);
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = a.iter().map(|&x| (x - m).exp()).collect();
    let (w_mean, w_se) = mean_and_stderr(&w);
    let degenerate = w_se == 0.0;
    let stderr_log = if degenerate { 0.0 } else { w_se / w_mean };
    let ess = w.iter().sum::<f64>().powi(2) / w.iter().map(|x| x * x).sum::<f64>();
    if ess < 0.1 * trials.len() as f64 {
        log::warn!(
            "cost estimate rests on {ess:.1} effective of {} trials; expect a downward bias",
            trials.len()
        );
    }
    let scale = th * horizon as f64;
    let cast = |v: f64| T::from_f64(v).ok_or_else(|| Error::Estimation(format!("{v} not representable")));
    Ok(CostEstimate {
        j_hat: cast(lme / scale)?,
        log_mean_cost: cast(lme)?,
        stderr_log: cast(stderr_log)?,
        stderr: cast(stderr_log / scale)?,
        trials_used: trials.len(),
        effective_trials: cast(ess)?,
        degenerate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct CycleEstimate<T> {
    pub cycles: usize,
    pub trials_with_cycles: usize,
    /// Mean cycle length.
    pub mean_length: T,
    pub mean_length_stderr: T,
    /// `ln mean_i exp(θ v_i)` over cycle exceedance counts `v_i`.
    pub log_mean_cycle_cost: T,
    /// `mean_i exp(θ v_i) − 1`.
    pub mean_cycle_cost_excess: T,
    pub mean_cycle_cost_excess_stderr: T,
    /// Root `J` of `mean_i exp(θ (v_i − J l_i)) = 1`.
    pub j_cycle_hat: T,
    pub j_cycle_stderr: T,
    /// `(1/θ) ln(mean exp(θ v)) / mean l`.
    pub j_ratio_hat: T,
}

/// Regeneration-cycle statistics pooled over all trials.
pub fn simulate_cycles<T: Real>(
    instance: &Instance<T>,
    policy: &PolicyHandle,
    cfg: &SimConfig,
    start: &State,
) -> Result<CycleEstimate<T>> {
    let trials = run_trials(instance, policy, cfg, start)?;
    cycles_from_trials(&trials, instance.theta())
}

pub fn cycles_from_trials<T: Real>(trials: &[TrialResult], theta: T) -> Result<CycleEstimate<T>> {
    let th = theta.as_f64();
    let mut lengths = Vec::new();
    let mut costs = Vec::new();
    let mut with_cycles = 0;
    for t in trials {
        if t.first_regeneration.is_none() {
            log::warn!("trial {} never reached the regeneration state", t.trial);
        }
        if !t.cycle_lengths.is_empty() {
            with_cycles += 1;
        }
        lengths.extend(t.cycle_lengths.iter().map(|&l| l as f64));
        costs.extend(t.cycle_exceedances.iter().map(|&c| c as f64));
    }
    if lengths.is_empty() {
        return Err(Error::Estimation("no completed regeneration cycle".into()));
    }
    let n = lengths.len() as f64;
    let (mean_l, se_l) = mean_and_stderr(&lengths);
    let a: Vec<f64> = costs.iter().map(|&c| th * c).collect();
    let lme_v = log_mean_exp(&a);
    let (excess, excess_se) = if a.iter().all(|&x| x < 700.0) {
        mean_and_stderr(&a.iter().map(|&x| x.exp_m1()).collect::<Vec<_>>())
    } else {
        (lme_v.exp_m1(), f64::INFINITY)
    };

    // Renewal root: h(J) = ln mean exp(θ(v − J l)) is decreasing in J.
    let h = |j: f64| {
        log_mean_exp(
            &costs
                .iter()
                .zip(&lengths)
                .map(|(&c, &l)| th * (c - j * l))
                .collect::<Vec<_>>(),
        )
    };
    let mut lo = 0.0f64;
    let mut hi = costs
        .iter()
        .zip(&lengths)
        .map(|(&c, &l)| c / l)
        .fold(0.0, f64::max);
    let j_root = if hi == 0.0 {
        0.0
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    // Sandwich standard error of the estimating equation ψ_i(J) = e^{θ(v_i − J l_i)} − 1.
    let e: Vec<f64> = costs
        .iter()
        .zip(&lengths)
        .map(|(&c, &l)| (th * (c - j_root * l)).exp())
        .collect();
    let psi: Vec<f64> = e.iter().map(|v| v - 1.0).collect();
    let (_, psi_se) = mean_and_stderr(&psi);
    let slope = e.iter().zip(&lengths).map(|(v, l)| th * l * v).sum::<f64>() / n;
    let j_se = if slope > 0.0 { psi_se / slope } else { f64::INFINITY };

    let cast = |v: f64| T::from_f64(v).unwrap_or_else(T::nan);
    Ok(CycleEstimate {
        cycles: lengths.len(),
        trials_with_cycles: with_cycles,
        mean_length: cast(mean_l),
        mean_length_stderr: cast(se_l),
        log_mean_cycle_cost: cast(lme_v),
        mean_cycle_cost_excess: cast(excess),
        mean_cycle_cost_excess_stderr: cast(excess_se),
        j_cycle_hat: cast(j_root),
        j_cycle_stderr: cast(j_se),
        j_ratio_hat: cast(lme_v / (th * mean_l)),
    })
}

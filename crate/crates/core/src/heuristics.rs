//! Baseline schedulers: packet-level round robin, weighted delivery debt and
//! open-loop periodic schedules.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::FiniteController;
use crate::model::{Client, Instance, State};
use crate::scalar::Real;

/// Token of the packet-level round robin: the client holding it is served
/// until one of its packets gets through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RoundRobinState {
    pub current: Client,
    pub n_clients: usize,
}

impl RoundRobinState {
    pub fn new(n_clients: usize) -> Self {
        RoundRobinState {
            current: Client::from_index(0),
            n_clients,
        }
    }
}

pub fn prr_decide(rr: &RoundRobinState) -> Client {
    rr.current
}

/// Passes the token on after a delivery, keeps it otherwise.
pub fn prr_advance(rr: RoundRobinState, delivered: bool) -> RoundRobinState {
    if !delivered {
        return rr;
    }
    RoundRobinState {
        current: Client::from_index(rr.current.get() as usize % rr.n_clients),
        ..rr
    }
}

/// Elapsed slots and per-client delivery counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DebtLedger {
    pub t: u64,
    pub deliveries: Vec<u64>,
}

impl DebtLedger {
    pub fn new(n_clients: usize) -> Self {
        DebtLedger {
            t: 0,
            deliveries: vec![0; n_clients],
        }
    }

    /// Accounts for one slot in which `served` was scheduled.
    pub fn record(&mut self, served: Client, delivered: bool) {
        self.t += 1;
        if delivered {
            self.deliveries[served.get() as usize - 1] += 1;
        }
    }
}

/// Client with the largest `t/(p_n τ_n) − M_n/p_n`; ties to the lowest.
pub fn wdd_decide<T: Real>(ledger: &DebtLedger, instance: &Instance<T>) -> Client {
    let t = ledger.t as f64;
    let mut best = 0usize;
    let mut best_debt = f64::NEG_INFINITY;
    for (n, (&tau, &p)) in instance.taus().iter().zip(instance.ps()).enumerate() {
        let p = p.as_f64();
        let debt = t / (p * tau as f64) - ledger.deliveries[n] as f64 / p;
        if debt > best_debt {
            best = n;
            best_debt = debt;
        }
    }
    Client::from_index(best)
}

/// A cyclic service order, e.g. `{"sequence":[1,2,3]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PeriodicSchedule {
    sequence: Vec<Client>,
}

impl PeriodicSchedule {
    /// Rejects empty sequences and sequences that omit a client.
    pub fn new(sequence: Vec<Client>, n_clients: usize) -> Result<Self> {
        if sequence.is_empty() {
            return Err(Error::invalid("periodic schedule is empty"));
        }
        let mut seen = vec![false; n_clients];
        for &u in &sequence {
            seen[u.check(n_clients)?.get() as usize - 1] = true;
        }
        if let Some(n) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("client {} never served by the schedule", n + 1)));
        }
        Ok(PeriodicSchedule { sequence })
    }

    pub fn sequence(&self) -> &[Client] {
        &self.sequence
    }

    pub fn period(&self) -> usize {
        self.sequence.len()
    }
}

/// `sequence[t mod L]`; never looks at the system state.
pub fn ps_decide(schedule: &PeriodicSchedule, t: u64) -> Client {
    schedule.sequence[(t % schedule.sequence.len() as u64) as usize]
}

/// Exceedances per period of the cyclic schedule when every transmission
/// succeeds, measured once the trajectory has become periodic.
pub fn deterministic_exceedances(sequence: &[usize], taus: &[u32]) -> u64 {
    let l = sequence.len();
    let tau_max = *taus.iter().max().expect("N ≥ 1") as usize;
    let warm = l * (tau_max / l + 2);
    let mut x: Vec<u32> = taus.to_vec();
    let mut total = 0u64;
    for t in 0..warm + l {
        if t >= warm {
            total += x.iter().zip(taus).filter(|(a, b)| a == b).count() as u64;
        }
        let u = sequence[t % l];
        for (n, (v, &tau)) in x.iter_mut().zip(taus).enumerate() {
            *v = if n == u { 0 } else { (*v + 1).min(tau) };
        }
    }
    total
}

/// Largest number of candidate sequences the search will visit.
const SEARCH_LIMIT: u128 = 50_000_000;

/// Cyclic schedule of length at most `max_period` that minimises the
/// per-slot exceedance count when no packet is lost. Ties go to the
/// shortest period, then to the lexicographically smallest sequence.
pub fn build_periodic_schedule<T: Real>(
    instance: &Instance<T>,
    max_period: usize,
) -> Result<PeriodicSchedule> {
    let n = instance.n_clients();
    if max_period < n {
        return Err(Error::invalid(format!(
            "max_period {max_period} cannot cover {n} clients"
        )));
    }
    let taus = instance.taus();
    let mut visited: u128 = 0;
    // Best as (exceedances, period).
    let mut best: Option<(u64, usize, Vec<usize>)> = None;
    for l in n..=max_period {
        let count = (n as u128).checked_pow(l as u32).unwrap_or(u128::MAX);
        visited = visited.saturating_add(count);
        if visited > SEARCH_LIMIT {
            return Err(Error::Resource(format!(
                "periodic schedule search up to length {max_period} exceeds {SEARCH_LIMIT} candidates"
            )));
        }
        let mut seq = vec![0usize; l];
        loop {
            if covers_all(&seq, n) {
                let c = deterministic_exceedances(&seq, taus);
                let better = match &best {
                    None => true,
                    Some((bc, bl, _)) => (c as u128) * (*bl as u128) < (*bc as u128) * (l as u128),
                };
                if better {
                    best = Some((c, l, seq.clone()));
                }
            }
            if !next_sequence(&mut seq, n) {
                break;
            }
        }
        if matches!(best, Some((0, _, _))) {
            break;
        }
    }
    let (_, _, seq) = best.expect("a covering sequence exists for L ≥ N");
    PeriodicSchedule::new(seq.into_iter().map(Client::from_index).collect(), n)
}

fn covers_all(seq: &[usize], n: usize) -> bool {
    let mut mask = 0u64;
    for &u in seq {
        mask |= 1 << u;
    }
    mask.count_ones() as usize == n
}

fn next_sequence(seq: &mut [usize], n: usize) -> bool {
    for i in (0..seq.len()).rev() {
        if seq[i] + 1 < n {
            seq[i] += 1;
            for v in &mut seq[i + 1..] {
                *v = 0;
            }
            return true;
        }
    }
    false
}

/// Round robin as a finite-memory controller: the mode is the token holder.
#[derive(Clone, Copy, Debug)]
pub struct RoundRobinController {
    pub n_clients: usize,
}

impl FiniteController for RoundRobinController {
    fn n_modes(&self) -> usize {
        self.n_clients
    }

    fn initial_mode(&self) -> usize {
        0
    }

    fn decide(&self, _state: &State, mode: usize) -> Client {
        Client::from_index(mode)
    }

    fn next_mode(&self, mode: usize, _served: Client, delivered: bool) -> usize {
        if delivered { (mode + 1) % self.n_clients } else { mode }
    }
}

/// A periodic schedule as a finite-memory controller: the mode is the phase.
#[derive(Clone, Debug)]
pub struct PeriodicController {
    pub schedule: PeriodicSchedule,
}

impl FiniteController for PeriodicController {
    fn n_modes(&self) -> usize {
        self.schedule.period()
    }

    fn initial_mode(&self) -> usize {
        0
    }

    fn decide(&self, _state: &State, mode: usize) -> Client {
        self.schedule.sequence[mode]
    }

    fn next_mode(&self, mode: usize, _served: Client, _delivered: bool) -> usize {
        (mode + 1) % self.schedule.period()
    }
}

/// Exceedances per slot of the clipped dynamics under `schedule` at ε = 0,
/// as an exact fraction `(exceedances, period)`.
pub fn schedule_deterministic_cost(schedule: &PeriodicSchedule, taus: &[u32]) -> (u64, usize) {
    let seq: Vec<usize> = schedule.sequence.iter().map(|u| u.get() as usize - 1).collect();
    (deterministic_exceedances(&seq, taus), seq.len())
}

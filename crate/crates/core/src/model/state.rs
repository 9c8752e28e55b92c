use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::instance::{Client, Instance};
use crate::scalar::Real;

/// Elapsed-time vector of the clipped process, each entry in `0..=τ_n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(Vec<u32>);

impl State {
    pub fn new(elapsed: Vec<u32>, taus: &[u32]) -> Result<Self> {
        if elapsed.len() != taus.len() {
            return Err(Error::invalid(format!(
                "state has {} entries, instance has {} clients",
                elapsed.len(),
                taus.len()
            )));
        }
        if let Some(n) = elapsed.iter().zip(taus).position(|(x, t)| x > t) {
            return Err(Error::invalid(format!(
                "entry {} of state {:?} exceeds its threshold {}",
                n + 1,
                elapsed,
                taus[n]
            )));
        }
        Ok(State(elapsed))
    }

    pub(crate) fn from_parts(elapsed: Vec<u32>) -> Self {
        State(elapsed)
    }

    pub fn elapsed(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, client: Client) -> u32 {
        self.0[client.index()]
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }

    /// Successor when `client` is scheduled and the packet gets through:
    /// the served entry resets to 0, every other entry advances (clipped).
    pub fn on_success(&self, client: Client, taus: &[u32]) -> Result<State> {
        client.check(taus.len())?;
        let u = client.index();
        Ok(State(
            self.0
                .iter()
                .zip(taus)
                .enumerate()
                .map(|(m, (&x, &t))| if m == u { 0 } else { (x + 1).min(t) })
                .collect(),
        ))
    }

    /// Successor when the scheduled packet is lost: `(x + 1) ∧ τ`.
    pub fn on_failure(&self, taus: &[u32]) -> State {
        State(self.0.iter().zip(taus).map(|(&x, &t)| (x + 1).min(t)).collect())
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Elapsed-time vector of the unclipped process.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnboundedState(Vec<u64>);

impl UnboundedState {
    pub fn new(elapsed: Vec<u64>) -> Self {
        UnboundedState(elapsed)
    }

    pub fn zeros(n_clients: usize) -> Self {
        UnboundedState(vec![0; n_clients])
    }

    pub fn elapsed(&self) -> &[u64] {
        &self.0
    }

    pub fn on_success(&self, client: Client) -> Result<UnboundedState> {
        client.check(self.0.len())?;
        let u = client.index();
        Ok(UnboundedState(
            self.0
                .iter()
                .enumerate()
                .map(|(m, &x)| if m == u { 0 } else { x + 1 })
                .collect(),
        ))
    }

    pub fn on_failure(&self) -> UnboundedState {
        UnboundedState(self.0.iter().map(|&x| x + 1).collect())
    }

    pub fn clipped(&self, taus: &[u32]) -> State {
        State(
            self.0
                .iter()
                .zip(taus)
                .map(|(&x, &t)| x.min(t as u64) as u32)
                .collect(),
        )
    }

    /// `Σ (x_n − τ_n)^+`.
    pub fn total_excess(&self, taus: &[u32]) -> u64 {
        self.0
            .iter()
            .zip(taus)
            .map(|(&x, &t)| x.saturating_sub(t as u64))
            .sum()
    }
}

/// The two outcomes of one scheduling decision.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution<T> {
    pub success: (State, T),
    pub failure: (State, T),
}

pub fn step_distribution<T: Real>(
    x: &State,
    client: Client,
    instance: &Instance<T>,
) -> Result<StepDistribution<T>> {
    let taus = instance.taus();
    let p = instance.ps()[client.check(taus.len())?.index()];
    Ok(StepDistribution {
        success: (x.on_success(client, taus)?, p),
        failure: (x.on_failure(taus), T::one() - p),
    })
}

/// Number of clients sitting at their threshold.
pub fn exceedances(x: &State, taus: &[u32]) -> u32 {
    x.0.iter().zip(taus).filter(|(x, t)| x == t).count() as u32
}

/// `exp(θ · #{n : x_n = τ_n})`.
pub fn slot_cost<T: Real>(x: &State, instance: &Instance<T>) -> T {
    (instance.theta() * T::from_count(exceedances(x, instance.taus()) as usize)).exp()
}

/// Dense mixed-radix numbering of the clipped state space, first client most
/// significant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateIndexer {
    taus: Vec<u32>,
    strides: Vec<usize>,
    total: usize,
}

impl StateIndexer {
    /// Panics if the space does not fit in `usize`; [`Instance`] checks this
    /// on construction.
    pub fn new(taus: &[u32]) -> Self {
        let mut strides = vec![0usize; taus.len()];
        let mut acc = 1usize;
        for n in (0..taus.len()).rev() {
            strides[n] = acc;
            acc = acc
                .checked_mul(taus[n] as usize + 1)
                .expect("state space size overflows usize");
        }
        StateIndexer {
            taus: taus.to_vec(),
            strides,
            total: acc,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn taus(&self) -> &[u32] {
        &self.taus
    }

    pub fn index(&self, x: &State) -> usize {
        self.index_slice(&x.0)
    }

    pub(crate) fn index_slice(&self, x: &[u32]) -> usize {
        x.iter().zip(&self.strides).map(|(&v, &s)| v as usize * s).sum()
    }

    pub fn state(&self, mut index: usize) -> State {
        debug_assert!(index < self.total);
        let mut v = vec![0u32; self.taus.len()];
        for (n, &s) in self.strides.iter().enumerate() {
            v[n] = (index / s) as u32;
            index %= s;
        }
        State(v)
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.total).map(move |i| self.state(i))
    }
}

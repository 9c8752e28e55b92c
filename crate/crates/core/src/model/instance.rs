use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::state::{State, StateIndexer};
use crate::scalar::Real;

/// A client label, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Client(u32);

impl Client {
    pub fn new(label: u32) -> Option<Self> {
        (label >= 1).then_some(Client(label))
    }

    /// Client for a 0-based storage slot.
    pub fn from_index(index: usize) -> Self {
        Client(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub(crate) fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub(crate) fn check(self, n_clients: usize) -> Result<Self> {
        if self.0 == 0 || self.0 as usize > n_clients {
            return Err(Error::invalid(format!(
                "client {} out of range 1..={n_clients}",
                self.0
            )));
        }
        Ok(self)
    }
}

impl std::fmt::Display for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Problem data: thresholds τ, channel reliabilities p and risk parameter θ.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<T> {
    taus: Vec<u32>,
    ps: Vec<T>,
    theta: T,
    total_states: usize,
    simulation_only: bool,
}

impl<T: Real> Instance<T> {
    /// Validated instance: `N ≥ 1`, `τ_n ≥ 1`, `0 < p_n < 1`, `θ > 0`, and the
    /// clipped state space must be indexable by `usize`.
    pub fn new(taus: Vec<u32>, ps: Vec<T>, theta: T) -> Result<Self> {
        Self::build(taus, ps, theta, false)
    }

    /// Like [`Instance::new`] but admits the endpoints `p_n ∈ {0, 1}`. Such an
    /// instance can drive the simulator; the solvers reject it.
    pub fn for_simulation(taus: Vec<u32>, ps: Vec<T>, theta: T) -> Result<Self> {
        Self::build(taus, ps, theta, true)
    }

    fn build(taus: Vec<u32>, ps: Vec<T>, theta: T, simulation_only: bool) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::invalid("at least one client is required"));
        }
        if taus.len() != ps.len() {
            return Err(Error::invalid(format!(
                "{} thresholds but {} reliabilities",
                taus.len(),
                ps.len()
            )));
        }
        if let Some(n) = taus.iter().position(|&t| t == 0) {
            return Err(Error::invalid(format!("threshold of client {} must be ≥ 1", n + 1)));
        }
        for (n, &p) in ps.iter().enumerate() {
            let ok = if simulation_only {
                p >= T::zero() && p <= T::one()
            } else {
                p > T::zero() && p < T::one()
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "reliability of client {} is {p}, outside the admissible range",
                    n + 1
                )));
            }
        }
        if !(theta > T::zero()) || !theta.is_finite() {
            return Err(Error::invalid(format!("theta must be positive, got {theta}")));
        }
        let total_states = taus
            .iter()
            .try_fold(1usize, |acc, &t| acc.checked_mul(t as usize + 1))
            .ok_or_else(|| Error::Resource("state space size overflows usize".into()))?;
        Ok(Instance {
            taus,
            ps,
            theta,
            total_states,
            simulation_only,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.taus.len()
    }

    pub fn taus(&self) -> &[u32] {
        &self.taus
    }

    pub fn ps(&self) -> &[T] {
        &self.ps
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn tau(&self, client: Client) -> u32 {
        self.taus[client.index()]
    }

    pub fn p(&self, client: Client) -> T {
        self.ps[client.index()]
    }

    pub fn clients(&self) -> impl Iterator<Item = Client> {
        (0..self.n_clients()).map(Client::from_index)
    }

    /// `∏ (τ_n + 1)`.
    pub fn total_states(&self) -> usize {
        self.total_states
    }

    pub fn is_simulation_only(&self) -> bool {
        self.simulation_only
    }

    /// Solvers call this before touching the kernel.
    pub fn ensure_solvable(&self) -> Result<()> {
        if self.simulation_only
            && self.ps.iter().any(|&p| p <= T::zero() || p >= T::one())
        {
            return Err(Error::invalid(
                "reliabilities at 0 or 1 are accepted by the simulator only",
            ));
        }
        Ok(())
    }

    pub fn with_theta(&self, theta: T) -> Result<Self> {
        Self::build(self.taus.clone(), self.ps.clone(), theta, self.simulation_only)
    }

    pub fn indexer(&self) -> StateIndexer {
        StateIndexer::new(&self.taus)
    }

    /// The all-at-threshold state `τ`.
    pub fn threshold_state(&self) -> State {
        State::from_parts(self.taus.clone())
    }

    /// `x^{(n a)}`: client `n` at `a`, every other client at its threshold.
    pub fn pinned_state(&self, client: Client, a: u32) -> Result<State> {
        client.check(self.n_clients())?;
        if a > self.tau(client) {
            return Err(Error::invalid(format!(
                "value {a} exceeds threshold {} of client {client}",
                self.tau(client)
            )));
        }
        let mut v = self.taus.clone();
        v[client.index()] = a;
        Ok(State::from_parts(v))
    }

    pub fn to_spec(&self) -> InstanceSpec<T> {
        InstanceSpec::Direct {
            taus: self.taus.clone(),
            ps: self.ps.clone(),
            theta: self.theta,
        }
    }
}

/// High-reliability parameterisation `p_n = 1 − b_n·ε`.
///
/// The reliabilities are materialised eagerly; everything downstream only
/// sees the resulting [`Instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticInstance<T> {
    bs: Vec<T>,
    epsilon: T,
    instance: Instance<T>,
}

impl<T: Real> AsymptoticInstance<T> {
    pub fn new(taus: Vec<u32>, bs: Vec<T>, epsilon: T, theta: T) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if taus.len() != bs.len() {
            return Err(Error::invalid(format!(
                "{} thresholds but {} coefficients",
                taus.len(),
                bs.len()
            )));
        }
        for (n, &b) in bs.iter().enumerate() {
            if !(b > T::zero()) || !(b * epsilon < T::one()) {
                return Err(Error::invalid(format!(
                    "coefficient b_{} = {b} must satisfy 0 < b·ε < 1",
                    n + 1
                )));
            }
        }
        let ps = bs.iter().map(|&b| T::one() - b * epsilon).collect();
        let instance = Instance::new(taus, ps, theta)?;
        Ok(AsymptoticInstance {
            bs,
            epsilon,
            instance,
        })
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        Self::new(
            self.instance.taus.clone(),
            self.bs.clone(),
            epsilon,
            self.instance.theta,
        )
    }

    pub fn bs(&self) -> &[T] {
        &self.bs
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn instance(&self) -> &Instance<T> {
        &self.instance
    }

    pub fn into_instance(self) -> Instance<T> {
        self.instance
    }

    pub fn to_spec(&self) -> InstanceSpec<T> {
        InstanceSpec::Asymptotic {
            taus: self.instance.taus.clone(),
            bs: self.bs.clone(),
            epsilon: self.epsilon,
            theta: self.instance.theta,
        }
    }
}

/// JSON form of an instance: either `{"taus","ps","theta"}` or
/// `{"taus","bs","epsilon","theta"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Real")]
pub enum InstanceSpec<T> {
    Direct {
        taus: Vec<u32>,
        ps: Vec<T>,
        theta: T,
    },
    Asymptotic {
        taus: Vec<u32>,
        bs: Vec<T>,
        epsilon: T,
        theta: T,
    },
}

impl<T: Real> InstanceSpec<T> {
    pub fn build(&self) -> Result<Instance<T>> {
        match self {
            InstanceSpec::Direct { taus, ps, theta } => {
                Instance::new(taus.clone(), ps.clone(), *theta)
            }
            InstanceSpec::Asymptotic {
                taus,
                bs,
                epsilon,
                theta,
            } => Ok(AsymptoticInstance::new(taus.clone(), bs.clone(), *epsilon, *theta)?
                .into_instance()),
        }
    }

    pub fn taus(&self) -> &[u32] {
        match self {
            InstanceSpec::Direct { taus, .. } | InstanceSpec::Asymptotic { taus, .. } => taus,
        }
    }

    pub fn is_asymptotic(&self) -> bool {
        matches!(self, InstanceSpec::Asymptotic { .. })
    }
}

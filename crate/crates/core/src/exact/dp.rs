use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Client, Instance, Kernel, State, UnboundedState};
use crate::scalar::{argmin_lowest, argmin_set, tie_tolerance, Real};

/// Finite-horizon optimal values of the clipped process, one snapshot per
/// horizon `0..=T`, with the minimising client per state for `t ≥ 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct DpTable<T> {
    pub horizon: usize,
    /// `values[t][s]`.
    pub values: Vec<Vec<T>>,
    /// `actions[t - 1][s]`, ties to the lowest client.
    pub actions: Vec<Vec<Client>>,
}

impl<T: Real> DpTable<T> {
    pub fn value(&self, t: usize, index: usize) -> T {
        self.values[t][index]
    }

    pub fn final_values(&self) -> &[T] {
        &self.values[self.horizon]
    }

    pub fn action(&self, t: usize, index: usize) -> Client {
        self.actions[t - 1][index]
    }

    /// One-step lookahead at horizon `t ≥ 1`: the bracketed term of the
    /// recursion for each client, scaled by the slot cost.
    pub fn q_values(&self, instance: &Instance<T>, t: usize, x: &State) -> Result<Vec<T>> {
        if t == 0 || t > self.horizon {
            return Err(Error::invalid(format!("lookahead horizon {t} outside 1..={}", self.horizon)));
        }
        let ix = instance.indexer();
        let prev = &self.values[t - 1];
        let fail = prev[ix.index(&x.on_failure(instance.taus()))];
        let cost = crate::model::slot_cost(x, instance);
        instance
            .clients()
            .map(|u| {
                let p = instance.p(u);
                let succ = prev[ix.index(&x.on_success(u, instance.taus())?)];
                Ok(cost * (p * succ + (T::one() - p) * fail))
            })
            .collect()
    }
}

/// Backward recursion for the clipped process:
/// `Ṽ_t(x) = e^{θk(x)} min_u [p_u Ṽ_{t−1}(S̃_u x) + (1−p_u) Ṽ_{t−1}((x+1)∧τ)]`,
/// `Ṽ_0 ≡ 1`.
pub fn dp_mdp2<T: Real>(instance: &Instance<T>, horizon: usize) -> Result<DpTable<T>> {
    instance.ensure_solvable()?;
    let kernel = Kernel::new(instance);
    let n_states = kernel.n_states();
    let n = kernel.n_clients();
    let tol = tie_tolerance::<T>();
    let mut values = vec![vec![T::one(); n_states]];
    let mut actions = Vec::with_capacity(horizon);
    let mut q = vec![T::zero(); n];
    for _ in 0..horizon {
        let prev = values.last().expect("base case present");
        let mut cur = Vec::with_capacity(n_states);
        let mut act = Vec::with_capacity(n_states);
        for s in 0..n_states {
            let fail = prev[kernel.failure(s)];
            for (u, qu) in q.iter_mut().enumerate() {
                let p = kernel.p_idx(u);
                *qu = p * prev[kernel.success_idx(s, u)] + (T::one() - p) * fail;
            }
            let best = argmin_lowest(&q, tol);
            cur.push(kernel.cost(s) * q[best]);
            act.push(Client::from_index(best));
        }
        values.push(cur);
        actions.push(act);
    }
    Ok(DpTable {
        horizon,
        values,
        actions,
    })
}

/// Memoised recursion for the unclipped process.
///
/// `V_t(x) = min_n { p_n e^{θ(x_n+1−τ_n)^+} V_{t−1}(S_n x) + (1−p_n) V_{t−1}(x+1) }`
/// with the terminal convention `X(T) := 0`, which makes
/// `V_0(x) = exp(θ Σ_n (x_n − τ_n)^+)`.
pub struct Mdp1Solver<'a, T> {
    instance: &'a Instance<T>,
    memo: HashMap<(usize, Vec<u64>), T>,
    cap: usize,
}

impl<'a, T: Real> Mdp1Solver<'a, T> {
    pub const DEFAULT_CAP: usize = 10_000_000;

    pub fn new(instance: &'a Instance<T>) -> Result<Self> {
        Self::with_cap(instance, Self::DEFAULT_CAP)
    }

    pub fn with_cap(instance: &'a Instance<T>, cap: usize) -> Result<Self> {
        instance.ensure_solvable()?;
        Ok(Mdp1Solver {
            instance,
            memo: HashMap::new(),
            cap,
        })
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    pub fn value(&mut self, t: usize, x: &UnboundedState) -> Result<T> {
        if x.elapsed().len() != self.instance.n_clients() {
            return Err(Error::invalid("state length does not match client count"));
        }
        self.value_inner(t, x)
    }

    fn value_inner(&mut self, t: usize, x: &UnboundedState) -> Result<T> {
        let taus = self.instance.taus();
        if t == 0 {
            let excess = T::from_count(x.total_excess(taus) as usize);
            return Ok((self.instance.theta() * excess).exp());
        }
        if let Some(&v) = self.memo.get(&(t, x.elapsed().to_vec())) {
            return Ok(v);
        }
        let q = self.q_inner(t, x)?;
        let v = q[argmin_lowest(&q, tie_tolerance())];
        if self.memo.len() >= self.cap {
            return Err(Error::Resource(format!(
                "unclipped recursion exceeded {} memoised states",
                self.cap
            )));
        }
        self.memo.insert((t, x.elapsed().to_vec()), v);
        Ok(v)
    }

    /// The per-client terms of the minimisation at horizon `t ≥ 1`.
    pub fn q_values(&mut self, t: usize, x: &UnboundedState) -> Result<Vec<T>> {
        if t == 0 {
            return Err(Error::invalid("lookahead needs a horizon of at least 1"));
        }
        if x.elapsed().len() != self.instance.n_clients() {
            return Err(Error::invalid("state length does not match client count"));
        }
        self.q_inner(t, x)
    }

    fn q_inner(&mut self, t: usize, x: &UnboundedState) -> Result<Vec<T>> {
        let inst = self.instance;
        let theta = inst.theta();
        let fail = self.value_inner(t - 1, &x.on_failure())?;
        let mut q = Vec::with_capacity(inst.n_clients());
        for u in inst.clients() {
            let p = inst.p(u);
            let late = (x.elapsed()[u.index()] + 1).saturating_sub(inst.tau(u) as u64);
            let succ = self.value_inner(t - 1, &x.on_success(u)?)?;
            q.push(p * (theta * T::from_count(late as usize)).exp() * succ + (T::one() - p) * fail);
        }
        Ok(q)
    }

    /// Minimising clients at horizon `t ≥ 1` (relative tolerance `rel_tol`).
    pub fn minimizers(&mut self, t: usize, x: &UnboundedState, rel_tol: T) -> Result<Vec<Client>> {
        let q = self.q_values(t, x)?;
        Ok(argmin_set(&q, rel_tol).into_iter().map(Client::from_index).collect())
    }
}

/// `V_T(x0)` of the unclipped process.
pub fn dp_mdp1<T: Real>(instance: &Instance<T>, horizon: usize, x0: &UnboundedState) -> Result<T> {
    Mdp1Solver::new(instance)?.value(horizon, x0)
}

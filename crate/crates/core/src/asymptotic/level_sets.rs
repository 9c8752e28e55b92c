use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{reachable_from, StationaryPolicy};
use crate::model::{Client, Instance, Kernel, State};
use crate::scalar::{argmin_lowest, tie_tolerance, Real};

/// Minimum total exceedance count over the `r` states visited by every
/// `r`-step all-success schedule, for each start state.
fn min_exceedances<T: Real>(kernel: &Kernel<T>, r: usize) -> Vec<u32> {
    let n = kernel.n_clients();
    let mut m = vec![0u32; kernel.n_states()];
    for _ in 0..r {
        m = (0..kernel.n_states())
            .map(|s| {
                kernel.exceedances(s)
                    + (0..n).map(|u| m[kernel.success_idx(s, u)]).min().expect("N ≥ 1")
            })
            .collect();
    }
    m
}

/// Excess `A = min Π slot_cost − 1` over `N`-step all-success schedules
/// from `x`, and the first client of a minimising schedule (lowest on ties).
pub fn all_success_excess<T: Real>(x: &State, instance: &Instance<T>) -> Result<(T, Client)> {
    let x = State::new(x.elapsed().to_vec(), instance.taus())?;
    let kernel = Kernel::new(instance);
    let n = instance.n_clients();
    let s = kernel.indexer().index(&x);
    let tail = min_exceedances(&kernel, n - 1);
    let firsts: Vec<u32> = (0..n).map(|u| tail[kernel.success_idx(s, u)]).collect();
    let best = (0..n).min_by_key(|&u| (firsts[u], u)).expect("N ≥ 1");
    let total = kernel.exceedances(s) + firsts[best];
    Ok((
        (instance.theta() * T::from_count(total as usize)).exp_m1(),
        Client::from_index(best),
    ))
}

/// The level-set partition and the coefficients computed on it.
///
/// `a`, `b` and `decisions` are parallel arrays over state indices; `None`
/// marks "not defined".
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct LevelSets<T> {
    /// `levels[k]` = `Y_k`, ascending state indices.
    pub levels: Vec<Vec<usize>>,
    /// Accumulated union `Z` at the end of the construction.
    pub z: Vec<usize>,
    pub a: Vec<Option<T>>,
    pub b: Vec<T>,
    /// States whose coefficient came from the relaxation fallback.
    pub remain: Vec<usize>,
    /// States in no level.
    pub unplaced: Vec<usize>,
    pub decisions: Vec<Option<Client>>,
}

impl<T: Real> LevelSets<T> {
    pub fn level_of(&self, state: usize) -> Option<usize> {
        self.levels.iter().position(|l| l.binary_search(&state).is_ok())
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }
}

const UNPLACED: usize = usize::MAX;

struct Builder<'k, T> {
    kernel: &'k Kernel<T>,
    level: Vec<usize>,
    sets: LevelSets<T>,
}

/// `Y_0` with its coefficients and decisions, then `Y_1..Y_K`,
/// `K = min_n τ_n`: seed `Y_k` with failure-predecessors of `Y_{k−1}` outside
/// `Z`, then close it under "every success-successor already in `Z ∪ Y_k`".
pub fn build_level_sets<T: Real>(instance: &Instance<T>) -> Result<LevelSets<T>> {
    instance.ensure_solvable()?;
    let kernel = Kernel::new(instance);
    Ok(Builder::new(&kernel, instance).sets)
}

impl<'k, T: Real> Builder<'k, T> {
    fn new(kernel: &'k Kernel<T>, instance: &Instance<T>) -> Self {
        let n_states = kernel.n_states();
        let n = kernel.n_clients();
        let theta = instance.theta();
        let mut level = vec![UNPLACED; n_states];
        let mut a = vec![None; n_states];
        let mut decisions = vec![None; n_states];

        let window = min_exceedances(kernel, n);
        let y0: Vec<usize> = (0..n_states).filter(|&s| window[s] > 0).collect();
        for &s in &y0 {
            level[s] = 0;
            a[s] = Some((theta * T::from_count(window[s] as usize)).exp_m1());
        }
        let tol = tie_tolerance::<T>();
        for &s in &y0 {
            let vals: Vec<T> = (0..n)
                .map(|u| a[kernel.success_idx(s, u)].unwrap_or(T::zero()))
                .collect();
            decisions[s] = Some(Client::from_index(argmin_lowest(&vals, tol)));
        }

        let k_max = *instance.taus().iter().min().expect("N ≥ 1") as usize;
        let mut levels = vec![y0];
        let mut in_z = vec![false; n_states];
        for k in 1..=k_max {
            for &s in &levels[k - 1] {
                in_z[s] = true;
            }
            let mut cur: Vec<bool> = (0..n_states)
                .map(|s| !in_z[s] && level[kernel.failure(s)] == k - 1)
                .collect();
            loop {
                let add: Vec<usize> = (0..n_states)
                    .filter(|&s| {
                        !in_z[s]
                            && !cur[s]
                            && (0..n).all(|u| {
                                let t = kernel.success_idx(s, u);
                                in_z[t] || cur[t]
                            })
                    })
                    .collect();
                if add.is_empty() {
                    break;
                }
                for s in add {
                    cur[s] = true;
                }
            }
            let yk: Vec<usize> = (0..n_states).filter(|&s| cur[s]).collect();
            for &s in &yk {
                level[s] = k;
            }
            levels.push(yk);
        }
        let z = (0..n_states).filter(|&s| in_z[s]).collect();
        let unplaced = (0..n_states).filter(|&s| level[s] == UNPLACED).collect();
        Builder {
            kernel,
            level,
            sets: LevelSets {
                levels,
                z,
                a,
                b: vec![T::zero(); n_states],
                remain: Vec::new(),
                unplaced,
                decisions,
            },
        }
    }

    /// Coefficient and decision sweep over `Y_1..Y_K` with weights `bs`.
    fn sweep(&mut self, bs: &[T]) {
        let kernel = self.kernel;
        let n = kernel.n_clients();
        let tol = tie_tolerance::<T>();
        let n_states = kernel.n_states();
        let mut u_sets: Vec<Vec<usize>> = vec![Vec::new(); n_states];
        for k in 1..self.sets.levels.len() {
            let fail_term = |sets: &LevelSets<T>, level: &[usize], s: usize| -> T {
                let f = kernel.failure(s);
                if level[f] == k - 1 {
                    sets.a[f].expect("coefficients of the previous level are complete")
                } else {
                    T::zero()
                }
            };
            let mut pending = self.sets.levels[k].clone();
            loop {
                let mut deferred = Vec::new();
                for &s in &pending {
                    let succ_level = |u: usize| self.level[kernel.success_idx(s, u)];
                    let m = (0..n).map(succ_level).max().expect("N ≥ 1");
                    let u_set: Vec<usize> = (0..n).filter(|&u| succ_level(u) == m).collect();
                    let fa = fail_term(&self.sets, &self.level, s);
                    let vals: Option<Vec<T>> = if m > k {
                        Some(u_set.iter().map(|&u| bs[u] * fa).collect())
                    } else {
                        u_set
                            .iter()
                            .map(|&u| self.sets.a[kernel.success_idx(s, u)].map(|av| av + bs[u] * fa))
                            .collect()
                    };
                    match vals {
                        Some(vals) => {
                            let j = argmin_lowest(&vals, tol);
                            self.sets.a[s] = Some(vals[j]);
                            self.sets.decisions[s] = Some(Client::from_index(u_set[j]));
                        }
                        None => deferred.push(s),
                    }
                    u_sets[s] = u_set;
                }
                let stalled = deferred == pending;
                pending = deferred;
                if pending.is_empty() || stalled {
                    break;
                }
            }
            if pending.is_empty() {
                continue;
            }
            // Cyclic dependencies: relax B on Y_k from zero for N−1 rounds,
            // reading the previous round each time.
            let level_k = self.sets.levels[k].clone();
            let candidates = |sets: &LevelSets<T>, s: usize| -> Vec<usize> {
                match sets.decisions[s] {
                    Some(u) => vec![u.get() as usize - 1],
                    None => u_sets[s].clone(),
                }
            };
            let mut b = vec![T::zero(); n_states];
            for _ in 0..n.saturating_sub(1) {
                let mut next = vec![T::zero(); n_states];
                for &s in &level_k {
                    let fa = fail_term(&self.sets, &self.level, s);
                    next[s] = candidates(&self.sets, s)
                        .into_iter()
                        .map(|u| b[kernel.success_idx(s, u)] + bs[u] * fa)
                        .fold(T::infinity(), T::min);
                }
                b = next;
            }
            for &s in &pending {
                let fa = fail_term(&self.sets, &self.level, s);
                let u_set = candidates(&self.sets, s);
                let vals: Vec<T> = u_set.iter().map(|&u| b[kernel.success_idx(s, u)] + bs[u] * fa).collect();
                let j = argmin_lowest(&vals, tol);
                self.sets.a[s] = Some(vals[j]);
                self.sets.decisions[s] = Some(Client::from_index(u_set[j]));
            }
            for &s in &level_k {
                self.sets.b[s] = b[s];
            }
            self.sets.remain.extend(pending);
        }
        self.sets.remain.sort_unstable();
    }
}

/// The level-set policy with weights `b_n = 1 − p_n`.
///
/// Every level-`k` coefficient is homogeneous of degree `k` in `b`, so the
/// decisions coincide with those for `(b, ε)` with `p_n = 1 − b_n ε`.
/// States in no level get the first action of their best all-success
/// schedule; if such a state is recurrent from `τ` under the resulting
/// policy the construction is reported as a structural error.
pub fn sn_policy<T: Real>(instance: &Instance<T>) -> Result<(StationaryPolicy, LevelSets<T>)> {
    instance.ensure_solvable()?;
    let kernel = Kernel::new(instance);
    let mut builder = Builder::new(&kernel, instance);
    let bs: Vec<T> = instance.ps().iter().map(|&p| T::one() - p).collect();
    builder.sweep(&bs);
    let mut sets = builder.sets;

    let n = kernel.n_clients();
    let tail = min_exceedances(&kernel, n - 1);
    let mut decisions = Vec::with_capacity(kernel.n_states());
    let mut missing = Vec::new();
    for s in 0..kernel.n_states() {
        match sets.decisions[s] {
            Some(u) => decisions.push(u),
            None if sets.unplaced.contains(&s) => {
                let u = (0..n).min_by_key(|&u| (tail[kernel.success_idx(s, u)], u)).expect("N ≥ 1");
                decisions.push(Client::from_index(u));
            }
            None => {
                missing.push(s);
                decisions.push(Client::from_index(0));
            }
        }
    }
    let ix = kernel.indexer();
    if !missing.is_empty() {
        return Err(Error::Structural(format!(
            "no decision for states {}",
            describe_states(ix, &missing)
        )));
    }
    let policy = StationaryPolicy::new(instance, decisions)?;
    if !sets.unplaced.is_empty() {
        let p = crate::exact::transition_matrix(&policy, instance)?;
        let structure = crate::exact::communicating_structure(&p);
        let reach = reachable_from(&p, ix.index(&instance.threshold_state()));
        let bad: Vec<usize> = sets
            .unplaced
            .iter()
            .copied()
            .filter(|&s| reach[s] && structure.closed[structure.class_of(s)])
            .collect();
        if !bad.is_empty() {
            return Err(Error::Structural(format!(
                "states outside every level are recurrent: {}",
                describe_states(ix, &bad)
            )));
        }
    }
    for s in 0..kernel.n_states() {
        sets.decisions[s].get_or_insert(policy.at(s));
    }
    Ok((policy, sets))
}

fn describe_states(ix: &crate::model::StateIndexer, states: &[usize]) -> String {
    states
        .iter()
        .map(|&s| ix.state(s).to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

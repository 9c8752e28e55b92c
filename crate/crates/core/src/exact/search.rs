use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::evaluate::{PolicyEvaluator, SolveReport};
use crate::exact::policy::StationaryPolicy;
use crate::exact::spectral::SpectralOptions;
use crate::model::{Client, Instance, Kernel};
use crate::scalar::{argmin_lowest, tie_tolerance, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExhaustiveOptions {
    /// Restrict to non-exclusionary policies (ignored for one client).
    pub ne_only: bool,
    /// Largest number of policies to enumerate.
    pub cap: u128,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        ExhaustiveOptions {
            ne_only: true,
            cap: 1 << 20,
        }
    }
}

/// Allowed clients per state, ascending.
fn action_sets<T: Real>(instance: &Instance<T>, ne_only: bool) -> Vec<Vec<Client>> {
    let ix = instance.indexer();
    let mut sets: Vec<Vec<Client>> = (0..ix.total()).map(|_| instance.clients().collect()).collect();
    if ne_only && instance.n_clients() >= 2 {
        for n in instance.clients() {
            let s = ix.index(&instance.pinned_state(n, 0).expect("valid client"));
            sets[s].retain(|&u| u != n);
        }
    }
    sets
}

/// Number of policies the enumeration would visit.
pub fn policy_count<T: Real>(instance: &Instance<T>, ne_only: bool) -> Option<u128> {
    action_sets(instance, ne_only)
        .iter()
        .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
}

/// The `rank`-th policy in lexicographic order of the decision array.
fn decode(sets: &[Vec<Client>], mut rank: u128) -> Vec<Client> {
    let mut out = vec![Client::from_index(0); sets.len()];
    for (s, set) in sets.iter().enumerate().rev() {
        let r = set.len() as u128;
        out[s] = set[(rank % r) as usize];
        rank /= r;
    }
    out
}

/// Minimum-cost stationary policy by enumeration, evaluated from `τ`.
/// Ties within a relative `1e-12` go to the lexicographically smallest
/// decision array.
pub fn exhaustive_optimal<T: Real>(
    instance: &Instance<T>,
    opts: ExhaustiveOptions,
) -> Result<(StationaryPolicy, SolveReport<T>)> {
    instance.ensure_solvable()?;
    let sets = action_sets(instance, opts.ne_only);
    let count = policy_count(instance, opts.ne_only).filter(|&c| c <= opts.cap).ok_or_else(|| {
        Error::Resource(format!(
            "more than {} stationary policies to enumerate; use growth_rate_optimal instead",
            opts.cap
        ))
    })?;
    let kernel = Kernel::new(instance);
    let start = kernel.indexer().index(&instance.threshold_state());
    let evaluator = PolicyEvaluator::new(&kernel, instance.theta(), SpectralOptions::default());
    let costs: Vec<T> = (0..count as u64)
        .into_par_iter()
        .map(|rank| {
            evaluator
                .evaluate(&decode(&sets, rank as u128), start)
                .map(|r| r.average_cost)
        })
        .collect::<Result<_>>()?;
    let tol = tie_tolerance::<T>();
    let mut best = 0usize;
    for (i, &j) in costs.iter().enumerate().skip(1) {
        if j < costs[best] - tol * costs[best].abs().max(T::one()) {
            best = i;
        }
    }
    let decisions = decode(&sets, best as u128);
    let report = evaluator.evaluate(&decisions, start)?;
    Ok((StationaryPolicy::new(instance, decisions)?, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthRateOptions<T> {
    /// Stop when the Collatz–Wielandt bracket is narrower than this.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for GrowthRateOptions<T> {
    fn default() -> Self {
        GrowthRateOptions {
            tol: T::lit(1e-14).max(T::epsilon() * T::lit(64.0)),
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct GrowthRateResult<T> {
    /// `(1/θ) ln g`.
    pub average_cost: T,
    /// Optimal growth factor `g` of the cost-to-go.
    pub growth_rate: T,
    /// Certified bracket on `g`.
    pub lower: T,
    pub upper: T,
    pub policy: StationaryPolicy,
    pub iterations: usize,
    pub converged: bool,
}

/// Optimal average cost by normalised value iteration on the clipped
/// recursion.
///
/// Iterates `V ← (T V + V) / 2` with sup-norm normalisation, where `T` is the
/// Bellman operator. The averaging keeps the operator's eigenvalue ordering
/// while killing the periodicity of near-deterministic chains. For positive
/// `V`, `min (T'V)/V ≤ (g+1)/2 ≤ max (T'V)/V`, so the bracket certifies `g`.
/// The returned policy is greedy for the final `V` (ties to the lowest
/// client). Running out of iterations is not an error; `converged` is false.
pub fn growth_rate_optimal<T: Real>(
    instance: &Instance<T>,
    opts: GrowthRateOptions<T>,
) -> Result<GrowthRateResult<T>> {
    instance.ensure_solvable()?;
    let kernel = Kernel::new(instance);
    let n_states = kernel.n_states();
    let n = kernel.n_clients();
    let half = T::lit(0.5);
    let mut v = vec![T::one(); n_states];
    let mut w = vec![T::zero(); n_states];
    let (mut lo_ex, mut hi_ex) = (T::zero(), T::infinity());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut top = T::zero();
        for s in 0..n_states {
            let best = best_q(&kernel, &v, s, n);
            let ws = (kernel.cost(s) * best + v[s]) * half;
            // Ratio minus one, formed without cancellation.
            let r = ((kernel.cost(s) * best - v[s]) * half) / v[s];
            lo = lo.min(r);
            hi = hi.max(r);
            top = top.max(ws);
            w[s] = ws;
        }
        for (vs, &ws) in v.iter_mut().zip(&w) {
            *vs = ws / top;
        }
        lo_ex = lo;
        hi_ex = hi;
        if hi - lo < opts.tol {
            converged = true;
            break;
        }
    }
    // g = 2·mid − 1, with mid − 1 = (lo_ex + hi_ex)/2.
    let g_minus_one = lo_ex + hi_ex;
    let growth_rate = T::one() + g_minus_one;
    let tol = tie_tolerance::<T>();
    let mut q = vec![T::zero(); n];
    let decisions = (0..n_states)
        .map(|s| {
            fill_q(&kernel, &v, s, &mut q);
            Client::from_index(argmin_lowest(&q, tol))
        })
        .collect();
    Ok(GrowthRateResult {
        average_cost: g_minus_one.ln_1p() / instance.theta(),
        growth_rate,
        lower: T::one() + lo_ex + lo_ex,
        upper: T::one() + hi_ex + hi_ex,
        policy: StationaryPolicy::new(instance, decisions)?,
        iterations,
        converged,
    })
}

fn fill_q<T: Real>(kernel: &Kernel<T>, v: &[T], s: usize, q: &mut [T]) {
    let fail = v[kernel.failure(s)];
    for (u, qu) in q.iter_mut().enumerate() {
        let p = kernel.p_idx(u);
        *qu = p * v[kernel.success_idx(s, u)] + (T::one() - p) * fail;
    }
}

fn best_q<T: Real>(kernel: &Kernel<T>, v: &[T], s: usize, n: usize) -> T {
    let fail = v[kernel.failure(s)];
    (0..n)
        .map(|u| {
            let p = kernel.p_idx(u);
            p * v[kernel.success_idx(s, u)] + (T::one() - p) * fail
        })
        .fold(T::infinity(), T::min)
}

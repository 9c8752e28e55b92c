use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::matrix::{NonnegativeMatrix, SparseMatrix};
use crate::exact::policy::{sparse_kernel_matrix, StationaryPolicy};
use crate::exact::spectral::{spectral_radius, SpectralOptions};
use crate::exact::structure::{communicating_structure, reachable_from};
use crate::model::{Client, Instance, Kernel, State};
use crate::scalar::Real;

/// Outcome of evaluating one policy from one start state.
///
/// State indices refer to the chain that was evaluated: plain state indices
/// for stationary policies, `state * n_modes + mode` for finite-memory
/// controllers.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SolveReport<T> {
    pub spectral_radius: T,
    /// `(1/θ) ln ρ`.
    pub average_cost: T,
    /// Union of the closed classes reachable from the start state.
    pub recurrent_class: Vec<usize>,
    /// Those closed classes individually.
    pub closed_classes: Vec<Vec<usize>>,
    /// The reachable class attaining `ρ` (lowest-indexed on ties).
    pub dominant_class: Vec<usize>,
    /// States outside every closed class.
    pub transient_states: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// `ρ` of `L` as seen from `start`: the largest spectral radius over the
/// communicating classes reachable from it. Every class is evaluated on its
/// own, so each power iteration runs on an irreducible matrix.
pub(crate) fn evaluate_chain<T: Real>(
    l: &SparseMatrix<T>,
    theta: T,
    start: usize,
    opts: SpectralOptions<T>,
) -> Result<SolveReport<T>> {
    let structure = communicating_structure(l);
    let reach = reachable_from(l, start);
    let mut rho = T::zero();
    let mut dominant: Option<usize> = None;
    let mut iterations = 0;
    let mut closed_classes = Vec::new();
    for (c, members) in structure.classes.iter().enumerate() {
        if !reach[members[0]] {
            continue;
        }
        if structure.closed[c] {
            closed_classes.push(members.clone());
        }
        if !structure.is_nontrivial(c) {
            continue;
        }
        let est = spectral_radius(&l.restrict(members), opts);
        iterations += est.iterations;
        if !est.converged {
            return Err(Error::NotConverged {
                iterations: est.iterations,
                residual: est.residual.as_f64(),
            });
        }
        if dominant.is_none() || est.value > rho {
            rho = est.value;
            dominant = Some(c);
        }
    }
    let dominant = dominant
        .ok_or_else(|| Error::Structural("no recurrent behaviour reachable from the start".into()))?;
    let mut recurrent_class: Vec<usize> = closed_classes.iter().flatten().copied().collect();
    recurrent_class.sort_unstable();
    Ok(SolveReport {
        spectral_radius: rho,
        average_cost: rho.ln() / theta,
        recurrent_class,
        closed_classes,
        dominant_class: structure.classes[dominant].clone(),
        transient_states: structure.transient,
        iterations,
        converged: true,
    })
}

/// Evaluates many policies against one precomputed kernel.
pub struct PolicyEvaluator<'a, T> {
    kernel: &'a Kernel<T>,
    theta: T,
    opts: SpectralOptions<T>,
}

impl<'a, T: Real> PolicyEvaluator<'a, T> {
    pub fn new(kernel: &'a Kernel<T>, theta: T, opts: SpectralOptions<T>) -> Self {
        PolicyEvaluator { kernel, theta, opts }
    }

    pub fn evaluate(&self, decisions: &[Client], start: usize) -> Result<SolveReport<T>> {
        let l = sparse_kernel_matrix(self.kernel, decisions, true);
        evaluate_chain(&l, self.theta, start, self.opts)
    }
}

/// Risk-sensitive average cost of a stationary policy from `from`.
pub fn average_cost<T: Real>(
    policy: &StationaryPolicy,
    instance: &Instance<T>,
    from: &State,
) -> Result<SolveReport<T>> {
    average_cost_with(policy, instance, from, SpectralOptions::default())
}

pub fn average_cost_with<T: Real>(
    policy: &StationaryPolicy,
    instance: &Instance<T>,
    from: &State,
    opts: SpectralOptions<T>,
) -> Result<SolveReport<T>> {
    instance.ensure_solvable()?;
    if policy.indexer().taus() != instance.taus() {
        return Err(Error::invalid("policy was built for different thresholds"));
    }
    let kernel = Kernel::new(instance);
    let start = kernel.indexer().index(&State::new(from.elapsed().to_vec(), instance.taus())?);
    PolicyEvaluator::new(&kernel, instance.theta(), opts).evaluate(policy.decisions(), start)
}

/// Cost of a policy that, from `τ` on, keeps serving client `n` forever:
/// the chain stays on `x^{(na)}`, `a = 0..=τ_n`.
pub fn non_ne_trivial_cost<T: Real>(
    policy: &StationaryPolicy,
    instance: &Instance<T>,
    client: Client,
) -> Result<SolveReport<T>> {
    client.check(instance.n_clients())?;
    for a in 0..=instance.tau(client) {
        let x = instance.pinned_state(client, a)?;
        if policy.decide(&x) != client {
            return Err(Error::invalid(format!(
                "policy serves client {} at {x}, not client {client}",
                policy.decide(&x)
            )));
        }
    }
    average_cost(policy, instance, &instance.threshold_state())
}

/// A scheduler with finitely many internal modes whose decision depends on
/// the clipped state and the mode. Its closed loop is a Markov chain on
/// `state × mode`.
pub trait FiniteController: Sync {
    fn n_modes(&self) -> usize;
    fn initial_mode(&self) -> usize;
    fn decide(&self, state: &State, mode: usize) -> Client;
    fn next_mode(&self, mode: usize, served: Client, delivered: bool) -> usize;
}

/// Average cost of a finite-memory controller started in `(from, initial_mode)`.
pub fn controller_average_cost<T: Real, C: FiniteController + ?Sized>(
    controller: &C,
    instance: &Instance<T>,
    from: &State,
) -> Result<SolveReport<T>> {
    instance.ensure_solvable()?;
    let kernel = Kernel::new(instance);
    let ix = kernel.indexer();
    let modes = controller.n_modes();
    let total = kernel
        .n_states()
        .checked_mul(modes)
        .ok_or_else(|| Error::Resource("product chain too large".into()))?;
    let mut rows = Vec::with_capacity(total);
    for s in 0..kernel.n_states() {
        let x = ix.state(s);
        let cost = kernel.cost(s);
        for m in 0..modes {
            let u = controller.decide(&x, m);
            u.check(instance.n_clients())?;
            let p = instance.p(u);
            rows.push(vec![
                (kernel.success(s, u) * modes + controller.next_mode(m, u, true), cost * p),
                (kernel.failure(s) * modes + controller.next_mode(m, u, false), cost * (T::one() - p)),
            ]);
        }
    }
    let l = SparseMatrix::from_rows(rows);
    let start = ix.index(&State::new(from.elapsed().to_vec(), instance.taus())?) * modes
        + controller.initial_mode();
    evaluate_chain(&l, instance.theta(), start, SpectralOptions::default())
}

/// The constant of the sufficient condition for a stationary optimal policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum ThetaThreshold<T> {
    /// `K = ⌈τ_max (1 − p_max)^{−τ_max}⌉` and
    /// `θ_th = (ln(K+1) − ln K) / (2N(K+1))`.
    Finite { k: u64, theta_th: T },
    /// `K` does not fit in 53 bits (or `θ_th` underflows in `T`): the
    /// threshold is effectively zero. `ln_k` is the natural log of `K`.
    Negligible { ln_k: f64 },
}

impl<T: Real> ThetaThreshold<T> {
    pub fn value(&self) -> T {
        match *self {
            ThetaThreshold::Finite { theta_th, .. } => theta_th,
            ThetaThreshold::Negligible { .. } => T::zero(),
        }
    }

    pub fn k(&self) -> Option<u64> {
        match *self {
            ThetaThreshold::Finite { k, .. } => Some(k),
            ThetaThreshold::Negligible { .. } => None,
        }
    }

    /// Whether `theta` lies at or above the threshold, i.e. the sufficient
    /// condition does not apply.
    pub fn exceeded_by(&self, theta: T) -> bool {
        theta >= self.value()
    }
}

pub fn theta_threshold<T: Real>(instance: &Instance<T>) -> ThetaThreshold<T> {
    let tau_max = *instance.taus().iter().max().expect("non-empty") as f64;
    let p_max = instance
        .ps()
        .iter()
        .map(|p| p.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_raw = tau_max.ln() - tau_max * (1.0 - p_max).ln();
    const EXACT_LIMIT: f64 = 9.007_199_254_740_992e15; // 2^53
    if !(ln_raw < EXACT_LIMIT.ln()) {
        return ThetaThreshold::Negligible { ln_k: ln_raw };
    }
    let raw = tau_max * (1.0 - p_max).powf(-tau_max);
    // Snap values that are integers up to rounding, e.g. 3 / 0.3^3.
    let near = raw.round();
    let k = if (raw - near).abs() <= 1e-9 * raw { near } else { raw.ceil() } as u64;
    let kf = k as f64;
    let n = instance.n_clients() as f64;
    let theta_th = (1.0 / kf).ln_1p() / (2.0 * n * (kf + 1.0));
    match T::from_f64(theta_th) {
        Some(v) if v > T::zero() && v.is_normal() => ThetaThreshold::Finite { k, theta_th: v },
        _ => ThetaThreshold::Negligible { ln_k: kf.ln() },
    }
}

/// Expected first hitting time of `τ` from every state under `P^f`; for
/// `τ` itself the first return time (`t > 0`).
pub fn doeblin_hitting_times<T: Real>(
    policy: &StationaryPolicy,
    instance: &Instance<T>,
) -> Result<Vec<T>> {
    instance.ensure_solvable()?;
    let kernel = Kernel::new(instance);
    let p = sparse_kernel_matrix(&kernel, policy.decisions(), false);
    let n = p.order();
    let target = kernel.indexer().index(&instance.threshold_state());
    // Unknowns: h(x) for x ≠ τ, ordered by index with τ removed.
    let pos = |s: usize| if s < target { s } else { s - 1 };
    let m = n - 1;
    let mut a = vec![T::zero(); m * m];
    let mut b = vec![T::one(); m];
    for s in (0..n).filter(|&s| s != target) {
        let r = pos(s);
        a[r * m + r] += T::one();
        for (t, v) in p.row(s) {
            if t != target {
                a[r * m + pos(t)] -= v;
            }
        }
    }
    solve_dense(&mut a, &mut b, m).ok_or_else(|| {
        Error::Structural("threshold state is not reachable from every state".into())
    })?;
    let mut h = Vec::with_capacity(n);
    let mut ret = T::one();
    for (t, v) in p.row(target) {
        if t != target {
            ret += v * b[pos(t)];
        }
    }
    for s in 0..n {
        h.push(if s == target { ret } else { b[pos(s)] });
    }
    if h.iter().any(|v| !v.is_finite() || *v < T::one()) {
        return Err(Error::Structural("hitting-time system is ill-conditioned".into()));
    }
    Ok(h)
}

/// Gaussian elimination with partial pivoting, in place; `None` if singular.
fn solve_dense<T: Real>(a: &mut [T], b: &mut [T], m: usize) -> Option<()> {
    let eps = T::epsilon() * T::lit(1e3);
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| {
            a[i * m + col]
                .abs()
                .partial_cmp(&a[j * m + col].abs())
                .expect("finite pivot")
        })?;
        if a[piv * m + col].abs() <= eps {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(col * m + k, piv * m + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f == T::zero() {
                continue;
            }
            for k in col..m {
                let v = a[col * m + k];
                a[r * m + k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    for r in (0..m).rev() {
        let mut acc = b[r];
        for k in r + 1..m {
            acc -= a[r * m + k] * b[k];
        }
        b[r] = acc / a[r * m + r];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::policy::disutility_matrix;

    fn c(n: u32) -> Client {
        Client::new(n).unwrap()
    }

    #[test]
    fn single_client_matches_quadratic() {
        let inst = Instance::<f64>::new(vec![1], vec![0.5], 1.0).unwrap();
        let f = StationaryPolicy::constant(&inst, c(1)).unwrap();
        let r = average_cost(&f, &inst, &inst.threshold_state()).unwrap();
        // [[.5,.5],[.5e,.5e]]: trace 0.5(1+e), determinant 0.
        let e = 1f64.exp();
        let (tr, det) = (0.5 + 0.5 * e, 0.0);
        let oracle = 0.5 * (tr + f64::sqrt(tr * tr - 4.0 * det));
        assert!((r.spectral_radius - oracle).abs() < 1e-12);
        assert!((r.average_cost - oracle.ln()).abs() < 1e-12);
        assert_eq!(r.recurrent_class, vec![0, 1]);
        assert!(r.transient_states.is_empty());
        let trivial = non_ne_trivial_cost(&f, &inst, c(1)).unwrap();
        assert_eq!(trivial.average_cost, r.average_cost);
    }

    #[test]
    fn swapping_labels_preserves_cost() {
        let inst = Instance::<f64>::new(vec![2, 2], vec![0.3, 0.3], 0.2).unwrap();
        let f = StationaryPolicy::from_fn(&inst, |x| {
            let v = x.elapsed();
            if v[0] > v[1] || (v[0] == v[1] && v[0] == 1) { c(1) } else { c(2) }
        })
        .unwrap();
        let g = StationaryPolicy::from_fn(&inst, |x| {
            let v = x.elapsed();
            let swapped = State::new(vec![v[1], v[0]], inst.taus()).unwrap();
            if f.decide(&swapped) == c(1) { c(2) } else { c(1) }
        })
        .unwrap();
        let top = inst.threshold_state();
        let a = average_cost(&f, &inst, &top).unwrap().average_cost;
        let b = average_cost(&g, &inst, &top).unwrap().average_cost;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn pinned_chain_matches_three_state_oracle() {
        let inst = Instance::<f64>::new(vec![2, 2], vec![0.5, 0.5], 0.1).unwrap();
        let f = StationaryPolicy::constant(&inst, c(1)).unwrap();
        let r = non_ne_trivial_cost(&f, &inst, c(1)).unwrap();
        // States (a, 2), a = 0, 1, 2; cost e^θ for a < 2 and e^{2θ} at a = 2.
        let (e1, e2) = (0.1f64.exp(), 0.2f64.exp());
        let m = crate::exact::matrix::SquareMatrix::<f64>::from_rows(vec![
            vec![0.5 * e1, 0.5 * e1, 0.0],
            vec![0.5 * e1, 0.0, 0.5 * e1],
            vec![0.5 * e2, 0.0, 0.5 * e2],
        ])
        .unwrap();
        // Characteristic polynomial root by bisection as an independent oracle.
        let det = |l: f64| {
            let a = |i: usize, j: usize| m.get(i, j) - if i == j { l } else { 0.0 };
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        };
        let (mut lo, mut hi) = (1.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if det(mid).signum() == det(hi).signum() { hi = mid } else { lo = mid }
        }
        assert!((r.spectral_radius - lo).abs() < 1e-10);
        assert_eq!(r.recurrent_class.len(), 3);

        let g = StationaryPolicy::constant(&inst, c(2)).unwrap();
        assert!(non_ne_trivial_cost(&g, &inst, c(1)).is_err());
    }

    #[test]
    fn threshold_examples() {
        let a = Instance::<f64>::new(vec![2, 2], vec![0.5, 0.5], 0.1).unwrap();
        let t = theta_threshold(&a);
        assert_eq!(t.k(), Some(8));
        assert!(((9f64.ln() - 8f64.ln()) / 36.0 - t.value()).abs() < 1e-15);
        assert!((t.value() - 3.272e-3).abs() < 1e-6);

        let b = Instance::<f64>::new(vec![1], vec![0.5], 0.1).unwrap();
        let t = theta_threshold(&b);
        assert_eq!(t.k(), Some(2));
        assert!((t.value() - 6.758e-2).abs() < 1e-5);

        let c = Instance::<f64>::new(vec![2, 3], vec![0.6, 0.7], 0.1).unwrap();
        assert_eq!(theta_threshold(&c).k(), Some(112));

        let mut last = f64::INFINITY;
        for p in [0.5, 0.9, 0.99, 0.999] {
            let v = theta_threshold(&Instance::<f64>::new(vec![3], vec![p], 0.1).unwrap()).value();
            assert!(v < last);
            last = v;
        }
        let huge = Instance::<f64>::new(vec![40], vec![1.0 - 1e-9], 0.1).unwrap();
        assert!(matches!(theta_threshold(&huge), ThetaThreshold::Negligible { .. }));
    }

    #[test]
    fn hitting_times_single_client() {
        let inst = Instance::<f64>::new(vec![1], vec![0.5], 1.0).unwrap();
        let f = StationaryPolicy::constant(&inst, c(1)).unwrap();
        let h = doeblin_hitting_times(&f, &inst).unwrap();
        // From (0): wait for a failure, geometric with mean 2. From (1):
        // return needs one step, plus 2 more if that step succeeded.
        assert!((h[0] - 2.0).abs() < 1e-12);
        assert!((h[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_long_horizon_growth() {
        let inst = Instance::<f64>::new(vec![2, 3], vec![0.6, 0.7], 0.05).unwrap();
        let f = StationaryPolicy::from_fn(&inst, |x| {
            let v = x.elapsed();
            if 2 - v[0] as i32 <= 3 - v[1] as i32 { c(1) } else { c(2) }
        })
        .unwrap();
        let top = inst.threshold_state();
        let r = average_cost(&f, &inst, &top).unwrap();
        let l = disutility_matrix(&f, &inst).unwrap();
        let s = inst.indexer().index(&top);
        let mut u = vec![1.0; l.order()];
        let mut w = vec![0.0; l.order()];
        let mut log_scale = 0.0;
        let mut at_1000 = 0.0;
        for t in 1..=2000 {
            l.mul_vec(&u, &mut w);
            let mx = w.iter().cloned().fold(0.0, f64::max);
            log_scale += mx.ln();
            for (a, b) in u.iter_mut().zip(&w) {
                *a = b / mx;
            }
            if t == 1000 {
                at_1000 = log_scale + u[s].ln();
            }
        }
        let at_2000 = log_scale + u[s].ln();
        let empirical = (at_2000 - at_1000) / (1000.0 * inst.theta());
        assert!((empirical - r.average_cost).abs() < 1e-4);
    }
}

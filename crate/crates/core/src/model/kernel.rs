use crate::model::instance::{Client, Instance};
use crate::model::state::{exceedances, StateIndexer};
use crate::scalar::Real;

/// Transition tables of the clipped process over dense state indices.
///
/// `success(s, u)` and `failure(s)` are successor indices; `cost(s)` is the
/// slot cost `exp(θ k(s))`.
#[derive(Clone, Debug)]
pub struct Kernel<T> {
    indexer: StateIndexer,
    n_clients: usize,
    success: Vec<usize>,
    failure: Vec<usize>,
    exceed: Vec<u32>,
    cost: Vec<T>,
    ps: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(instance: &Instance<T>) -> Self {
        let indexer = instance.indexer();
        let taus = instance.taus();
        let n = taus.len();
        let total = indexer.total();
        let mut success = Vec::with_capacity(total * n);
        let mut failure = Vec::with_capacity(total);
        let mut exceed = Vec::with_capacity(total);
        let mut cost = Vec::with_capacity(total);
        let mut buf = vec![0u32; n];
        for s in 0..total {
            let x = indexer.state(s);
            let xv = x.elapsed();
            for u in 0..n {
                for m in 0..n {
                    buf[m] = if m == u { 0 } else { (xv[m] + 1).min(taus[m]) };
                }
                success.push(indexer.index_slice(&buf));
            }
            for m in 0..n {
                buf[m] = (xv[m] + 1).min(taus[m]);
            }
            failure.push(indexer.index_slice(&buf));
            let k = exceedances(&x, taus);
            exceed.push(k);
            cost.push((instance.theta() * T::from_count(k as usize)).exp());
        }
        Kernel {
            indexer,
            n_clients: n,
            success,
            failure,
            exceed,
            cost,
            ps: instance.ps().to_vec(),
        }
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    pub fn n_states(&self) -> usize {
        self.indexer.total()
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    #[inline]
    pub fn success(&self, s: usize, client: Client) -> usize {
        self.success[s * self.n_clients + client.index()]
    }

    #[inline]
    pub(crate) fn success_idx(&self, s: usize, u: usize) -> usize {
        self.success[s * self.n_clients + u]
    }

    #[inline]
    pub fn failure(&self, s: usize) -> usize {
        self.failure[s]
    }

    #[inline]
    pub fn exceedances(&self, s: usize) -> u32 {
        self.exceed[s]
    }

    #[inline]
    pub fn cost(&self, s: usize) -> T {
        self.cost[s]
    }

    #[inline]
    pub(crate) fn p_idx(&self, u: usize) -> T {
        self.ps[u]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_matches_state_successors() {
        let inst = Instance::<f64>::new(vec![2, 3, 1], vec![0.3, 0.5, 0.9], 0.2).unwrap();
        let k = Kernel::new(&inst);
        let ix = k.indexer();
        for s in 0..k.n_states() {
            let x = ix.state(s);
            for u in inst.clients() {
                let y = x.on_success(u, inst.taus()).unwrap();
                assert_eq!(k.success(s, u), ix.index(&y));
            }
            assert_eq!(k.failure(s), ix.index(&x.on_failure(inst.taus())));
            assert_eq!(k.exceedances(s), exceedances(&x, inst.taus()));
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::matrix::{SparseMatrix, SquareMatrix};
use crate::model::{Client, Instance, Kernel, State, StateIndexer};
use crate::scalar::Real;

/// A total map from clipped states to clients, stored densely in
/// [`StateIndexer`] order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StationaryPolicy {
    indexer: StateIndexer,
    decisions: Vec<Client>,
}

/// Serialized form: `{"decisions":[...]}` in state-index order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub decisions: Vec<Client>,
}

impl StationaryPolicy {
    pub fn new<T: Real>(instance: &Instance<T>, decisions: Vec<Client>) -> Result<Self> {
        let indexer = instance.indexer();
        if decisions.len() != indexer.total() {
            return Err(Error::invalid(format!(
                "policy has {} decisions, instance has {} states",
                decisions.len(),
                indexer.total()
            )));
        }
        for &u in &decisions {
            u.check(instance.n_clients())?;
        }
        Ok(StationaryPolicy { indexer, decisions })
    }

    pub fn from_fn<T: Real>(instance: &Instance<T>, mut f: impl FnMut(&State) -> Client) -> Result<Self> {
        let decisions = instance.indexer().states().map(|x| f(&x)).collect();
        Self::new(instance, decisions)
    }

    pub fn constant<T: Real>(instance: &Instance<T>, client: Client) -> Result<Self> {
        Self::new(instance, vec![client; instance.total_states()])
    }

    pub fn from_document<T: Real>(instance: &Instance<T>, doc: PolicyDocument) -> Result<Self> {
        Self::new(instance, doc.decisions)
    }

    pub fn to_document(&self) -> PolicyDocument {
        PolicyDocument {
            decisions: self.decisions.clone(),
        }
    }

    pub fn decisions(&self) -> &[Client] {
        &self.decisions
    }

    pub fn n_states(&self) -> usize {
        self.decisions.len()
    }

    pub fn at(&self, index: usize) -> Client {
        self.decisions[index]
    }

    pub fn decide(&self, x: &State) -> Client {
        self.decisions[self.indexer.index(x)]
    }

    pub fn indexer(&self) -> &StateIndexer {
        &self.indexer
    }

    fn check_against<T: Real>(&self, instance: &Instance<T>) -> Result<()> {
        if self.indexer.taus() != instance.taus() {
            return Err(Error::invalid("policy was built for different thresholds"));
        }
        Ok(())
    }
}

impl Serialize for StationaryPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

/// Whether `f` avoids serving client `n` at `x^{(n0)}` for every `n`.
/// Always false for a single client, whose only action is excluded.
pub fn is_ne<T: Real>(policy: &StationaryPolicy, instance: &Instance<T>) -> bool {
    if instance.n_clients() < 2 || policy.check_against(instance).is_err() {
        return false;
    }
    instance.clients().all(|n| {
        let x = instance.pinned_state(n, 0).expect("valid client");
        policy.decide(&x) != n
    })
}

pub(crate) fn sparse_kernel_matrix<T: Real>(
    kernel: &Kernel<T>,
    decisions: &[Client],
    with_cost: bool,
) -> SparseMatrix<T> {
    SparseMatrix::from_rows(
        (0..kernel.n_states())
            .map(|s| {
                let u = decisions[s];
                let p = kernel.p_idx(u.index());
                let scale = if with_cost { kernel.cost(s) } else { T::one() };
                vec![
                    (kernel.success(s, u), scale * p),
                    (kernel.failure(s), scale * (T::one() - p)),
                ]
            })
            .collect(),
    )
}

/// `P^f` as a dense matrix.
pub fn transition_matrix<T: Real>(
    policy: &StationaryPolicy,
    instance: &Instance<T>,
) -> Result<SquareMatrix<T>> {
    policy.check_against(instance)?;
    instance.ensure_solvable()?;
    Ok(sparse_kernel_matrix(&Kernel::new(instance), policy.decisions(), false).to_dense())
}

/// `L^f = diag(slot cost) · P^f` as a dense matrix.
pub fn disutility_matrix<T: Real>(
    policy: &StationaryPolicy,
    instance: &Instance<T>,
) -> Result<SquareMatrix<T>> {
    policy.check_against(instance)?;
    instance.ensure_solvable()?;
    Ok(sparse_kernel_matrix(&Kernel::new(instance), policy.decisions(), true).to_dense())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::matrix::NonnegativeMatrix;

    fn c(n: u32) -> Client {
        Client::new(n).unwrap()
    }

    #[test]
    fn ne_detection() {
        let inst = Instance::<f64>::new(vec![2, 2], vec![0.5, 0.5], 0.1).unwrap();
        let ix = inst.indexer();
        let ne = StationaryPolicy::from_fn(&inst, |x| match x.elapsed() {
            [0, 2] => c(2),
            [2, 0] => c(1),
            _ => c(1),
        })
        .unwrap();
        assert!(is_ne(&ne, &inst));
        let mut d = ne.decisions().to_vec();
        d[ix.index(&State::new(vec![0, 2], inst.taus()).unwrap())] = c(1);
        assert!(!is_ne(&StationaryPolicy::new(&inst, d).unwrap(), &inst));

        let single = Instance::<f64>::new(vec![1], vec![0.5], 1.0).unwrap();
        let forced = StationaryPolicy::constant(&single, c(1)).unwrap();
        assert!(!is_ne(&forced, &single));
    }

    #[test]
    fn rows_and_cost_scaling() {
        let inst = Instance::<f64>::new(vec![2, 3], vec![0.6, 0.7], 0.3).unwrap();
        let f = StationaryPolicy::from_fn(&inst, |x| if x.elapsed()[0] >= 1 { c(1) } else { c(2) })
            .unwrap();
        let p = transition_matrix(&f, &inst).unwrap();
        let l = disutility_matrix(&f, &inst).unwrap();
        for i in 0..p.order() {
            assert_eq!(p.row_sum(i), 1.0);
            assert!(p.row(i).iter().filter(|&&v| v > 0.0).count() <= 2);
        }
        let top = inst.indexer().index(&inst.threshold_state());
        assert!((l.row_sum(top) - (0.3f64 * 2.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn swap_symmetric_policy_gives_swap_invariant_matrix() {
        // Serve the client with more elapsed time. Off the diagonal this
        // commutes with swapping the clients; diagonal states need a label
        // to break the tie, so their rows are excluded.
        let inst = Instance::<f64>::new(vec![2, 2], vec![0.4, 0.4], 0.1).unwrap();
        let ix = inst.indexer();
        let g = StationaryPolicy::from_fn(&inst, |x| {
            let v = x.elapsed();
            if v[0] >= v[1] { c(1) } else { c(2) }
        })
        .unwrap();
        let p = transition_matrix(&g, &inst).unwrap();
        let swap = |s: usize| {
            let v = ix.state(s).into_vec();
            ix.index(&State::new(vec![v[1], v[0]], inst.taus()).unwrap())
        };
        for i in 0..p.order() {
            let v = ix.state(i).into_vec();
            if v[0] == v[1] {
                continue;
            }
            for j in 0..p.order() {
                assert_eq!(p.get(i, j), p.get(swap(i), swap(j)));
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let inst = Instance::<f64>::new(vec![1, 1], vec![0.5, 0.5], 0.1).unwrap();
        let f = StationaryPolicy::new(&inst, vec![c(1), c(2), c(1), c(2)]).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"decisions":[1,2,1,2]}"#);
        let doc: PolicyDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(StationaryPolicy::from_document(&inst, doc).unwrap(), f);
        let bad: PolicyDocument = serde_json::from_str(r#"{"decisions":[1,3,1,2]}"#).unwrap();
        assert!(StationaryPolicy::from_document(&inst, bad).is_err());
    }
}

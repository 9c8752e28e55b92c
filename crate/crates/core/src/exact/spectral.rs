use serde::Serialize;

use crate::exact::matrix::NonnegativeMatrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralOptions<T> {
    /// Stop when successive estimates, and successive iterates in 1-norm,
    /// differ by less than this.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SpectralOptions<T> {
    fn default() -> Self {
        SpectralOptions {
            tol: T::lit(1e-12).max(T::epsilon() * T::lit(64.0)),
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SpectralEstimate<T> {
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
    /// Change between the last two estimates.
    pub residual: T,
    /// Final iterate, normalised to unit 1-norm.
    pub vector: Vec<T>,
}

/// Perron root of a nonnegative matrix by power iteration on `M + I`.
///
/// Starts from the uniform vector; with `‖v‖₁ = 1` the estimate is
/// `‖(M + I)v‖₁ − 1 = ‖Mv‖₁`. The shift makes every irreducible block
/// primitive, so periodic chains converge. Reducible matrices whose dominant
/// eigenvalue is shared by several blocks converge only sublinearly; callers
/// that care restrict to one communicating class at a time.
pub fn spectral_radius<T: Real, M: NonnegativeMatrix<T> + ?Sized>(
    m: &M,
    opts: SpectralOptions<T>,
) -> SpectralEstimate<T> {
    let n = m.order();
    if n == 0 {
        return SpectralEstimate {
            value: T::zero(),
            iterations: 0,
            converged: true,
            residual: T::zero(),
            vector: Vec::new(),
        };
    }
    let mut v = vec![T::one() / T::from_count(n); n];
    let mut w = vec![T::zero(); n];
    let mut prev = T::nan();
    let mut residual = T::infinity();
    for it in 1..=opts.max_iter {
        m.mul_vec(&v, &mut w);
        let est: T = w.iter().copied().sum();
        let norm = est + T::one();
        let mut moved = T::zero();
        for (vi, &wi) in v.iter_mut().zip(&w) {
            let next = (*vi + wi) / norm;
            moved += (next - *vi).abs();
            *vi = next;
        }
        // Both the estimate and the iterate must have settled: the estimate
        // alone can stall for a step while the vector is still turning.
        let change = (est - prev).abs().max(moved);
        if change < opts.tol {
            return SpectralEstimate {
                value: est,
                iterations: it,
                converged: true,
                residual: change,
                vector: v,
            };
        }
        if prev.is_finite() {
            residual = change;
        }
        prev = est;
    }
    SpectralEstimate {
        value: prev,
        iterations: opts.max_iter,
        converged: false,
        residual,
        vector: v,
    }
}

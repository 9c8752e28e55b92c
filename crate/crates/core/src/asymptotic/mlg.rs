use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::StationaryPolicy;
use crate::model::{AsymptoticInstance, Client, Instance, State};
use crate::scalar::{tie_tolerance, Real};

/// Two clients in the high-reliability regime, labelled so that client 1 has
/// the smaller threshold: `τ_1 = τ`, `τ_2 = τ + Δ`, `p_n = 1 − b_n ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct TwoClientConfig<T> {
    pub tau: u32,
    pub delta: u32,
    pub b1: T,
    pub b2: T,
    pub theta: T,
}

impl<T: Real> TwoClientConfig<T> {
    /// Requires `τ ≥ 2` (the closed forms are of order `ε^{τ−1}`), positive
    /// `b` and `θ`.
    pub fn new(tau: u32, delta: u32, b1: T, b2: T, theta: T) -> Result<Self> {
        if tau < 2 {
            return Err(Error::invalid(format!("the closed forms need τ ≥ 2, got {tau}")));
        }
        if !(b1 > T::zero() && b2 > T::zero()) {
            return Err(Error::invalid("coefficients b must be positive"));
        }
        if !(theta > T::zero()) {
            return Err(Error::invalid("theta must be positive"));
        }
        tau.checked_add(delta)
            .ok_or_else(|| Error::invalid("τ + Δ overflows"))?;
        Ok(TwoClientConfig {
            tau,
            delta,
            b1,
            b2,
            theta,
        })
    }

    /// Reads a two-client asymptotic instance. Returns the config and whether
    /// the instance's clients had to be swapped to put the smaller threshold
    /// first.
    pub fn from_instance(inst: &AsymptoticInstance<T>) -> Result<(Self, bool)> {
        let taus = inst.instance().taus();
        if taus.len() != 2 {
            return Err(Error::invalid("two clients required"));
        }
        let bs = inst.bs();
        let theta = inst.instance().theta();
        if taus[0] <= taus[1] {
            Ok((Self::new(taus[0], taus[1] - taus[0], bs[0], bs[1], theta)?, false))
        } else {
            Ok((Self::new(taus[1], taus[0] - taus[1], bs[1], bs[0], theta)?, true))
        }
    }

    pub fn taus(&self) -> [u32; 2] {
        [self.tau, self.tau + self.delta]
    }

    pub fn instance(&self, epsilon: T) -> Result<AsymptoticInstance<T>> {
        AsymptoticInstance::new(self.taus().to_vec(), vec![self.b1, self.b2], epsilon, self.theta)
    }

    fn pow(b: T, e: u32) -> T {
        b.powi(e as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaCase {
    Equal,
    One,
    AtLeastTwo,
}

impl DeltaCase {
    fn of(delta: u32) -> Self {
        match delta {
            0 => DeltaCase::Equal,
            1 => DeltaCase::One,
            _ => DeltaCase::AtLeastTwo,
        }
    }
}

/// `leading_coefficient · ε^order`, with no higher-order residue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct AsymptoticCost<T> {
    pub leading_coefficient: T,
    pub order: u32,
    pub case: DeltaCase,
}

impl<T: Real> AsymptoticCost<T> {
    pub fn evaluate(&self, epsilon: T) -> T {
        self.leading_coefficient * epsilon.powi(self.order as i32)
    }
}

/// MLG decision on the state space `(τ, τ+Δ)`: client 2 at `(0, Δ−1)`,
/// otherwise the smaller time-to-go `τ_n − x_n`, ties to client 2.
pub fn mlg_decide<T: Real>(x: &State, cfg: &TwoClientConfig<T>) -> Client {
    decide_raw(x.elapsed(), cfg.tau, cfg.delta)
}

fn decide_raw(x: &[u32], tau: u32, delta: u32) -> Client {
    let two = Client::from_index(1);
    if delta >= 1 && x[0] == 0 && x[1] == delta - 1 {
        return two;
    }
    let ttg1 = tau as i64 - x[0] as i64;
    let ttg2 = (tau + delta) as i64 - x[1] as i64;
    if ttg2 <= ttg1 {
        two
    } else {
        Client::from_index(0)
    }
}

/// The MLG policy as a stationary policy on a two-client instance. If the
/// first client has the larger threshold the rule is applied with the
/// labels exchanged.
pub fn mlg_policy<T: Real>(instance: &Instance<T>) -> Result<StationaryPolicy> {
    let taus = instance.taus();
    if taus.len() != 2 {
        return Err(Error::invalid("the MLG policy is defined for two clients"));
    }
    let swapped = taus[0] > taus[1];
    let (tau, delta) = if swapped {
        (taus[1], taus[0] - taus[1])
    } else {
        (taus[0], taus[1] - taus[0])
    };
    StationaryPolicy::from_fn(instance, |x| {
        let v = x.elapsed();
        if swapped {
            let u = decide_raw(&[v[1], v[0]], tau, delta);
            Client::from_index(1 - (u.get() as usize - 1))
        } else {
            decide_raw(v, tau, delta)
        }
    })
}

/// Leading term of the MLG cost as `ε → 0`.
pub fn mlg_cost_leading<T: Real>(cfg: &TwoClientConfig<T>) -> AsymptoticCost<T> {
    let TwoClientConfig {
        tau,
        delta,
        b1,
        b2,
        theta,
    } = *cfg;
    let p = TwoClientConfig::<T>::pow;
    let em1 = theta.exp_m1();
    let coefficient = match delta {
        0 => {
            let mid: T = (1..=tau.saturating_sub(2)).map(|j| p(b1, j) * p(b2, tau - 1 - j)).sum();
            em1 / theta * mid
                + (p(b1, tau - 1) + p(b2, tau - 1)) / (T::lit(2.0) * theta) * (T::lit(2.0) * theta).exp_m1()
        }
        1 => {
            let s: T = (0..tau).map(|j| p(b1, j) * p(b2, tau - 1 - j)).sum();
            em1 / (T::lit(2.0) * theta) * s
        }
        d => em1 / (theta * T::from_count(d as usize)) * p(b1, tau - 1),
    };
    AsymptoticCost {
        leading_coefficient: coefficient,
        order: tau - 1,
        case: DeltaCase::of(delta),
    }
}

/// Leading term of a lower bound on the optimal cost.
pub fn optimal_cost_lower_bound<T: Real>(cfg: &TwoClientConfig<T>) -> AsymptoticCost<T> {
    let TwoClientConfig {
        tau,
        delta,
        b1,
        b2,
        theta,
    } = *cfg;
    let p = TwoClientConfig::<T>::pow;
    let em1 = theta.exp_m1();
    let bmin = b1.min(b2);
    let a1 = p(b1, tau - 1) + T::from_count(tau as usize - 1) * p(bmin, tau - 1);
    let coefficient = match delta {
        0 => mlg_cost_leading(cfg).leading_coefficient,
        1 => em1 / (T::lit(2.0) * theta) * a1,
        d => {
            let d = T::from_count(d as usize);
            let tail: T = (1..tau).map(|j| p(b2, j) * p(b1, tau - 1 - j)).sum();
            let a2 = (p(b1, tau - 1) / d)
                .min(a1 / (d + T::one()))
                .min((a1 + tail) / (d + T::lit(2.0)));
            em1 / theta * a2
        }
    };
    AsymptoticCost {
        leading_coefficient: coefficient,
        order: tau - 1,
        case: DeltaCase::of(delta),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OptimalityCondition {
    /// `Δ = 0`.
    #[serde(rename = "(i)")]
    EqualThresholds,
    /// `Δ = 1` and `b_1 ≤ b_2`.
    #[serde(rename = "(ii)")]
    AdjacentThresholds,
    /// `Δ ≥ 2` and `b_1^{τ−1} ≤ Δ(τ−1) b_2^{τ−1}`.
    #[serde(rename = "(iii)")]
    SeparatedThresholds,
}

impl OptimalityCondition {
    pub fn tag(&self) -> &'static str {
        match self {
            OptimalityCondition::EqualThresholds => "(i)",
            OptimalityCondition::AdjacentThresholds => "(ii)",
            OptimalityCondition::SeparatedThresholds => "(iii)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalityCheck {
    pub optimal: bool,
    pub condition: OptimalityCondition,
    /// Whether the inequality holds with equality (within rounding).
    pub boundary: bool,
}

/// Whether MLG is asymptotically optimal for `cfg`. Comparisons treat values
/// within a relative `1e-12` as equal.
pub fn mlg_optimality_check<T: Real>(cfg: &TwoClientConfig<T>) -> OptimalityCheck {
    let tol = tie_tolerance::<T>();
    let le = |a: T, b: T| a <= b + tol * a.abs().max(b.abs());
    let eq = |a: T, b: T| (a - b).abs() <= tol * a.abs().max(b.abs());
    match cfg.delta {
        0 => OptimalityCheck {
            optimal: true,
            condition: OptimalityCondition::EqualThresholds,
            boundary: false,
        },
        1 => OptimalityCheck {
            optimal: le(cfg.b1, cfg.b2),
            condition: OptimalityCondition::AdjacentThresholds,
            boundary: eq(cfg.b1, cfg.b2),
        },
        d => {
            let lhs = cfg.b1.powi(cfg.tau as i32 - 1);
            let rhs = T::from_count(d as usize * (cfg.tau as usize - 1)) * cfg.b2.powi(cfg.tau as i32 - 1);
            OptimalityCheck {
                optimal: le(lhs, rhs),
                condition: OptimalityCondition::SeparatedThresholds,
                boundary: eq(lhs, rhs),
            }
        }
    }
}

/// Regeneration-cycle quantities of MLG for `Δ ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct CycleAnalytics<T> {
    /// `{(1,0)} ∪ {(0,x_2) : 0 ≤ x_2 ≤ Δ−1}`.
    pub xss_states: Vec<State>,
    /// States visited by one cycle when every transmission succeeds:
    /// `(1,0), (0,1), …, (0,Δ−1)`.
    pub all_success_cycle: Vec<State>,
    /// Leading term of the mean cycle length, `Δ`.
    pub expected_cycle_length: T,
    /// Leading term of `E[v_cycle] − 1`: `b_1^{τ−1} (e^θ − 1) ε^{τ−1}`.
    pub cycle_cost_excess: AsymptoticCost<T>,
}

impl<T: Real> CycleAnalytics<T> {
    /// `(1/θ) · excess / length`, the cost implied by the cycle terms.
    pub fn assembled_cost(&self, theta: T) -> AsymptoticCost<T> {
        AsymptoticCost {
            leading_coefficient: self.cycle_cost_excess.leading_coefficient
                / (theta * self.expected_cycle_length),
            ..self.cycle_cost_excess
        }
    }
}

pub fn mlg_cycle_analytics<T: Real>(cfg: &TwoClientConfig<T>) -> Result<CycleAnalytics<T>> {
    if cfg.delta < 2 {
        return Err(Error::Unsupported(format!(
            "cycle analytics cover Δ ≥ 2 only (got Δ = {}); use mlg_cost_leading",
            cfg.delta
        )));
    }
    let taus = cfg.taus();
    let st = |a: u32, b: u32| State::new(vec![a, b], &taus).expect("inside the state space");
    let mut xss = vec![st(1, 0)];
    xss.extend((0..cfg.delta).map(|x2| st(0, x2)));
    let mut cycle = vec![st(1, 0)];
    cycle.extend((1..cfg.delta).map(|x2| st(0, x2)));
    Ok(CycleAnalytics {
        xss_states: xss,
        all_success_cycle: cycle,
        expected_cycle_length: T::from_count(cfg.delta as usize),
        cycle_cost_excess: AsymptoticCost {
            leading_coefficient: cfg.b1.powi(cfg.tau as i32 - 1) * cfg.theta.exp_m1(),
            order: cfg.tau - 1,
            case: DeltaCase::AtLeastTwo,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::is_ne;

    fn cfg(tau: u32, delta: u32, b1: f64, b2: f64) -> TwoClientConfig<f64> {
        TwoClientConfig::new(tau, delta, b1, b2, 0.01).unwrap()
    }

    fn st(a: u32, b: u32, c: &TwoClientConfig<f64>) -> State {
        State::new(vec![a, b], &c.taus()).unwrap()
    }

    #[test]
    fn decision_examples() {
        let c = cfg(3, 2, 2.0, 1.0);
        assert_eq!(mlg_decide(&st(0, 1, &c), &c).get(), 2);
        assert_eq!(mlg_decide(&st(1, 0, &c), &c).get(), 1);
        assert_eq!(mlg_decide(&st(2, 4, &c), &c).get(), 2);
    }

    #[test]
    fn mlg_is_non_exclusionary() {
        for tau in 2..=6u32 {
            for delta in 0..=4u32 {
                let inst =
                    Instance::<f64>::new(vec![tau, tau + delta], vec![0.9, 0.9], 0.1).unwrap();
                let f = mlg_policy(&inst).unwrap();
                assert!(is_ne(&f, &inst), "τ={tau} Δ={delta}");
            }
        }
    }

    #[test]
    fn relabelled_instance_gives_relabelled_policy() {
        let a = Instance::<f64>::new(vec![3, 5], vec![0.9, 0.8], 0.1).unwrap();
        let b = Instance::<f64>::new(vec![5, 3], vec![0.8, 0.9], 0.1).unwrap();
        let fa = mlg_policy(&a).unwrap();
        let fb = mlg_policy(&b).unwrap();
        for x in a.indexer().states() {
            let v = x.elapsed();
            let y = State::new(vec![v[1], v[0]], b.taus()).unwrap();
            assert_eq!(fa.decide(&x).get(), 3 - fb.decide(&y).get());
        }
    }

    #[test]
    fn leading_cost_examples() {
        let c = cfg(3, 2, 2.0, 1.0);
        let lead = mlg_cost_leading(&c);
        let want = 0.01f64.exp_m1() / (0.01 * 2.0) * 4.0;
        assert!((lead.leading_coefficient - want).abs() < 1e-15);
        assert_eq!(lead.order, 2);
        assert!((lead.evaluate(0.01) - 2.010e-4).abs() < 1e-7);

        let one = mlg_cost_leading(&cfg(4, 1, 1.5, 1.5));
        let want = 0.01f64.exp_m1() / 0.02 * 4.0 * 1.5f64.powi(3);
        assert!((one.leading_coefficient - want).abs() < 1e-12);

        let zero = mlg_cost_leading(&cfg(2, 0, 2.0, 1.0));
        let want = (2.0 + 1.0) / 0.02 * 0.02f64.exp_m1();
        assert!((zero.leading_coefficient - want).abs() < 1e-12);
        assert_eq!(zero.case, DeltaCase::Equal);
    }

    #[test]
    fn lower_bound_examples() {
        let c = cfg(3, 2, 2.0, 1.0);
        let lb = optimal_cost_lower_bound(&c);
        assert!((lb.leading_coefficient - 0.01f64.exp_m1() / 0.01 * 2.0).abs() < 1e-12);

        let eq = cfg(4, 1, 1.3, 1.3);
        assert!(
            (optimal_cost_lower_bound(&eq).leading_coefficient
                - mlg_cost_leading(&eq).leading_coefficient)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn optimality_conditions() {
        let c0 = mlg_optimality_check(&cfg(3, 0, 5.0, 1.0));
        assert!(c0.optimal);
        assert_eq!(c0.condition.tag(), "(i)");
        let c3 = mlg_optimality_check(&cfg(3, 2, 2.0, 1.0));
        assert!(c3.optimal && c3.boundary);
        assert_eq!(c3.condition.tag(), "(iii)");
        assert!(!mlg_optimality_check(&cfg(3, 1, 3.0, 1.0)).optimal);
    }

    #[test]
    fn cycle_analytics() {
        let c = cfg(3, 2, 2.0, 1.0);
        let a = mlg_cycle_analytics(&c).unwrap();
        assert_eq!(a.xss_states, vec![st(1, 0, &c), st(0, 0, &c), st(0, 1, &c)]);
        assert_eq!(a.all_success_cycle, vec![st(1, 0, &c), st(0, 1, &c)]);
        assert_eq!(a.expected_cycle_length, 2.0);
        let assembled = a.assembled_cost(c.theta);
        let lead = mlg_cost_leading(&c);
        assert!((assembled.leading_coefficient - lead.leading_coefficient).abs() < 1e-15);
        assert!(matches!(mlg_cycle_analytics(&cfg(3, 1, 1.0, 1.0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn all_success_cycle_follows_the_rule() {
        for delta in 2..6 {
            let c = cfg(3, delta, 1.0, 1.0);
            let a = mlg_cycle_analytics(&c).unwrap();
            let taus = c.taus();
            let mut x = a.all_success_cycle[0].clone();
            for k in 0..a.all_success_cycle.len() {
                assert_eq!(x, a.all_success_cycle[k]);
                x = x.on_success(mlg_decide(&x, &c), &taus).unwrap();
            }
            assert_eq!(x, a.all_success_cycle[0]);
        }
    }
}

//! Discrete-time buffer chain of a single user queue.
//!
//! State `j` is the number of queued packets at the start of a slot. An
//! arrival (probability `ξ`) into an empty buffer moves `0 → 1`; from `j >= 1`
//! the chain moves up with `ξ(1-μ̄)` and down with `μ̄(1-ξ)`.

use crate::config::Direction;
use crate::scalar::Real;

/// Per-slot departure probability of a backlogged user,
/// `p_TX (q_in Q_in μ_in + q_e Q_e μ_e)`.
pub fn departure_prob<R: Real>(
    tx_probability: R,
    q_interior: R,
    q_edge: R,
    sched_interior: R,
    sched_edge: R,
    stp_interior: R,
    stp_edge: R,
) -> R {
    let served = q_interior * sched_interior * stp_interior + q_edge * sched_edge * stp_edge;
    (tx_probability * served).clamp_to(R::zero(), R::one())
}

/// Steady-state law of a stable chain: `δ(0) = 1 - ξ/μ̄` and
/// `δ(j) = δ(0) ξ^j (1-μ̄)^{j-1} / ((1-ξ)^j μ̄^j)` for `j >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateDist<R> {
    pub empty_prob: R,
    /// `ξ(1-μ̄) / ((1-ξ)μ̄)`.
    pub ratio: R,
    arrival: R,
    departure: R,
}

impl<R: Real> SteadyStateDist<R> {
    /// `δ(j)`.
    pub fn prob(&self, j: usize) -> R {
        if j == 0 {
            return self.empty_prob;
        }
        if self.arrival == R::zero() {
            return R::zero();
        }
        // δ(j) = δ(0) · ξ/((1-ξ)μ̄) · ratio^{j-1}
        let first = self.arrival / ((R::one() - self.arrival) * self.departure);
        self.empty_prob * first * self.ratio.powi(j as i32 - 1)
    }

    /// `1 - δ(0)`.
    pub fn nonempty_prob(&self) -> R {
        R::one() - self.empty_prob
    }

    /// `Σ j δ(j) = ξ(1-ξ)/(μ̄-ξ)`.
    pub fn mean_length(&self) -> R {
        self.arrival * (R::one() - self.arrival) / (self.departure - self.arrival)
    }

    /// Mean packet sojourn in slots, arrival slot included: `(1-ξ)/(μ̄-ξ)`.
    pub fn mean_sojourn(&self) -> R {
        (R::one() - self.arrival) / (self.departure - self.arrival)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueueState<R> {
    Stable(SteadyStateDist<R>),
    /// `ξ >= μ̄`: the backlog grows without bound and the buffer is never empty.
    Unstable,
}

impl<R: Real> QueueState<R> {
    pub fn nonempty_prob(&self) -> R {
        match self {
            QueueState::Stable(d) => d.nonempty_prob(),
            QueueState::Unstable => R::one(),
        }
    }
}

pub fn steady_state<R: Real>(arrival: R, departure: R) -> QueueState<R> {
    if arrival == R::zero() {
        return QueueState::Stable(SteadyStateDist {
            empty_prob: R::one(),
            ratio: R::zero(),
            arrival,
            departure,
        });
    }
    if arrival >= departure {
        return QueueState::Unstable;
    }
    QueueState::Stable(SteadyStateDist {
        empty_prob: R::one() - arrival / departure,
        ratio: arrival * (R::one() - departure) / ((R::one() - arrival) * departure),
        arrival,
        departure,
    })
}

/// `Ξ = min(ξ/μ̄, 1)`, with `Ξ = 0` for an idle source and `Ξ = 1` for a
/// source that is never served.
pub fn nonempty_prob<R: Real>(arrival: R, departure: R) -> R {
    if arrival <= R::zero() {
        R::zero()
    } else if departure <= R::zero() {
        R::one()
    } else {
        (arrival / departure).min(R::one())
    }
}

/// `min(subbands / (1 + (k-1) q Ξ), 1)`: chance a backlogged user in a cell of
/// `k` users wins one of `subbands` sub-bands of its class.
pub fn scheduling_prob<R: Real>(k: usize, subbands: usize, class_prob: R, nonempty: R) -> R {
    if subbands == 0 {
        return R::zero();
    }
    let others = R::of_usize(k.saturating_sub(1)) * class_prob * nonempty;
    (R::of_usize(subbands) / (R::one() + others)).min(R::one())
}

/// Queue quantities of one tier in one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierQueueStats<R> {
    pub tier: usize,
    pub direction: Direction,
    pub departure_prob: R,
    pub nonempty_prob: R,
    pub sched_interior: R,
    pub sched_edge: R,
    pub stable: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn departure_examples() {
        assert_eq!(departure_prob(0.7, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0), 0.7);
        let v: f64 = departure_prob(2.0 / 3.0, 0.8, 0.2, 0.5, 1.0, 0.9, 0.5);
        assert!((v - 0.306_666_666_666_666_7).abs() < 1e-15);
        assert_eq!(departure_prob(0.7, 0.8, 0.2, 1.0, 1.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn steady_state_examples() {
        match steady_state(0.0, 0.3) {
            QueueState::Stable(d) => {
                assert_eq!(d.empty_prob, 1.0);
                assert_eq!(d.nonempty_prob(), 0.0);
                assert_eq!(d.prob(3), 0.0);
            }
            QueueState::Unstable => panic!("empty system is stable"),
        }
        match steady_state(0.08f64, 0.4) {
            QueueState::Stable(d) => {
                assert!((d.empty_prob - 0.8).abs() < 1e-15);
                assert!((d.nonempty_prob() - 0.2).abs() < 1e-15);
            }
            QueueState::Unstable => panic!(),
        }
        assert_eq!(steady_state(0.3, 0.3), QueueState::<f64>::Unstable);
        assert_eq!(QueueState::<f64>::Unstable.nonempty_prob(), 1.0);
    }

    #[test]
    fn nonempty_examples() {
        assert!((nonempty_prob(0.04f64, 0.16) - 0.25).abs() < 1e-15);
        assert_eq!(nonempty_prob(0.3, 0.2), 1.0);
        assert_eq!(nonempty_prob(0.3, 0.3), 1.0);
        assert_eq!(nonempty_prob(0.0, 0.0), 0.0);
        assert_eq!(nonempty_prob(0.1, 0.0), 1.0);
    }

    #[test]
    fn scheduling_examples() {
        assert_eq!(scheduling_prob(1, 18, 0.8, 1.0), 1.0);
        assert_eq!(scheduling_prob(1, 1, 0.8, 1.0), 1.0);
        let v = scheduling_prob(50, 18, 0.8f64, 1.0);
        assert!((v - 18.0 / 40.2).abs() < 1e-15);
        assert_eq!(scheduling_prob(50, 0, 0.8, 1.0), 0.0);
    }

    /// Runs the buffer chain itself and returns empirical state frequencies.
    pub(crate) fn simulate_chain(arrival: f64, departure: f64, slots: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; 64];
        let mut state = 0usize;
        for _ in 0..slots {
            counts[state.min(63)] += 1;
            let arrives = rng.random_bool(arrival);
            if state == 0 {
                if arrives {
                    state = 1;
                }
            } else {
                let departs = rng.random_bool(departure);
                match (arrives, departs) {
                    (true, false) => state += 1,
                    (false, true) => state -= 1,
                    _ => {}
                }
            }
        }
        counts.iter().map(|&c| c as f64 / slots as f64).collect()
    }

    #[test]
    fn closed_form_matches_chain_simulation() {
        let freq = simulate_chain(0.1, 0.3, 1_000_000, 7);
        let QueueState::Stable(d) = steady_state(0.1, 0.3) else {
            panic!()
        };
        for (j, f) in freq.iter().enumerate().take(6) {
            let p = d.prob(j);
            // one percentage point per state
            assert!((f - p).abs() <= 0.01, "j={j}: {f} vs {p}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distribution_normalized_and_littles_law(mu in 0.02f64..0.99, frac in 0.01f64..0.98) {
                let xi = mu * frac;
                let QueueState::Stable(d) = steady_state(xi, mu) else { panic!() };
                let mut total = 0.0;
                let mut mean = 0.0;
                let mut j = 0usize;
                loop {
                    let p = d.prob(j);
                    total += p;
                    mean += j as f64 * p;
                    j += 1;
                    if (p < 1e-18 && j > 10) || j > 200_000 { break; }
                }
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!((mean - d.mean_length()).abs() < 1e-9 * d.mean_length().max(1.0));
                prop_assert!((d.mean_length() - xi * d.mean_sojourn()).abs() < 1e-12 * d.mean_length().max(1.0));
            }

            #[test]
            fn nonempty_monotone(xi in 0.0f64..1.0, mu in 0.0f64..1.0, d in 0.0f64..0.2) {
                prop_assert!(nonempty_prob(xi, (mu + d).min(1.0)) <= nonempty_prob(xi, mu));
                prop_assert!(nonempty_prob((xi + d).min(1.0), mu) >= nonempty_prob(xi, mu));
            }

            #[test]
            fn scheduling_monotone(k in 1usize..60, m in 0usize..20, q in 0.0f64..1.0, x in 0.0f64..1.0, dx in 0.0f64..0.5) {
                let base = scheduling_prob(k, m, q, x);
                prop_assert!((0.0..=1.0).contains(&base));
                prop_assert!(scheduling_prob(k + 1, m, q, x) <= base);
                prop_assert!(scheduling_prob(k, m, q, (x + dx).min(1.0)) <= base);
            }
        }
    }
}

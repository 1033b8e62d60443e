//! Coupled fixed point between link success probabilities, queue occupancy
//! and interferer activity.
//!
//! The state is the averaged STPs, the interior probabilities and the
//! per-tier non-empty-buffer probabilities of both directions. One step
//! recomputes departure and occupancy per tier, the resulting activity
//! fractions and effective interferer densities, and from those the
//! de-conditioned STPs; the state then moves by a damped (Picard) update.

use crate::config::{Direction, ScenarioConfig};
use crate::error::{Error, Result};
use crate::kernels::{cell_load_pmf, decondition_over_r, eta1_rate, eta2_rate, ClassActivity, KernelQuadrature, TierActivity};
use crate::queue::{departure_prob, nonempty_prob, scheduling_prob, TierQueueStats};
use crate::scalar::Real;

/// Scenario constants converted to the solver scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<R> {
    pub sap_density: R,
    pub pathloss_exponent: R,
    /// `P_u / P_s`.
    pub power_ratio: R,
    /// Classification threshold θ, linear.
    pub theta: R,
    /// Decoding threshold T, linear.
    pub decode: R,
    pub interior_subbands: usize,
    pub edge_subbands: usize,
    pub reuse_factor: usize,
    pub max_users: usize,
    pub tx_probability: [R; 2],
    pub arrival: [R; 2],
    /// `f(k)`, `k = 0..=K`.
    pub load_pmf: Vec<R>,
    pub cell_radius: R,
    pub quadrature: KernelQuadrature<R>,
}

impl<R: Real> Model<R> {
    pub fn new(config: &ScenarioConfig, quadrature: KernelQuadrature<R>) -> Self {
        let derived = config.derive();
        Self {
            sap_density: R::of(config.sap_density()),
            pathloss_exponent: R::of(config.pathloss_exponent()),
            power_ratio: R::of(config.power_ratio()),
            theta: R::of(config.classification_threshold()),
            decode: R::of(config.decode_threshold()),
            interior_subbands: derived.interior_subbands,
            edge_subbands: config.edge_subbands(),
            reuse_factor: config.reuse_factor(),
            max_users: config.max_users(),
            tx_probability: [R::of(derived.dl_probability), R::of(derived.ul_probability)],
            arrival: [R::of(config.dl_arrival()), R::of(config.ul_arrival())],
            load_pmf: cell_load_pmf(
                R::of(config.sap_density()),
                R::of(config.user_density()),
                config.max_users(),
            ),
            cell_radius: R::of(config.cell_radius()),
            quadrature,
        }
    }

    /// Multiplier turning DL-receiver thresholds into this direction's:
    /// 1 for DL, `P_s/P_u` for UL.
    pub fn threshold_scale(&self, dir: Direction) -> R {
        match dir {
            Direction::Downlink => R::one(),
            Direction::Uplink => self.power_ratio.recip(),
        }
    }
}

/// `(χ_e, χ_in)` of a tier-`k` cell: `χ_e = min(k q_e Ξ / L, 1)/Δ` and
/// `χ_in = min(k q_in Ξ / M, 1)`.
pub fn activity_fractions<R: Real>(
    k: usize,
    q_edge: R,
    q_interior: R,
    nonempty: R,
    edge_subbands: usize,
    interior_subbands: usize,
    reuse_factor: usize,
) -> (R, R) {
    let kk = R::of_usize(k);
    let edge = if edge_subbands == 0 {
        R::zero()
    } else {
        (kk * q_edge * nonempty / R::of_usize(edge_subbands)).min(R::one()) / R::of_usize(reuse_factor)
    };
    let interior = if interior_subbands == 0 {
        R::zero()
    } else {
        (kk * q_interior * nonempty / R::of_usize(interior_subbands)).min(R::one())
    };
    (edge, interior)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<R> {
    /// Weight of the new iterate, in (0, 1].
    pub damping: R,
    /// Max-abs change of every state variable at convergence.
    pub tolerance: R,
    pub max_iterations: usize,
    /// Starting value of every averaged STP.
    pub initial_stp: R,
    pub quadrature: KernelQuadrature<R>,
}

impl<R: Real> Default for SolverOptions<R> {
    fn default() -> Self {
        Self {
            damping: R::of(0.5),
            tolerance: R::of(1e-6),
            max_iterations: 500,
            initial_stp: R::one(),
            quadrature: KernelQuadrature::default(),
        }
    }
}

impl<R: Real> SolverOptions<R> {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        if !(self.damping > R::zero() && self.damping <= R::one()) {
            return Err(Error::InvalidArgument(format!("damping {} not in (0, 1]", self.damping)));
        }
        if !(self.tolerance > R::zero()) {
            return Err(Error::InvalidArgument(format!("tolerance {} must be > 0", self.tolerance)));
        }
        Ok(())
    }
}

/// Iterated quantities of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionState<R> {
    pub stp_interior: R,
    pub stp_edge: R,
    pub q_interior: R,
    /// `Ξ_k`, index `k - 1`.
    pub nonempty: Vec<R>,
}

/// Full iterate; also usable as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<R> {
    pub dl: DirectionState<R>,
    pub ul: DirectionState<R>,
}

impl<R: Real> SolverState<R> {
    pub fn get(&self, dir: Direction) -> &DirectionState<R> {
        match dir {
            Direction::Downlink => &self.dl,
            Direction::Uplink => &self.ul,
        }
    }

    fn initial(model: &Model<R>, stp: R) -> Self {
        let make = |dir: Direction| {
            let i = dir.index();
            let xi = nonempty_prob(model.arrival[i], model.tx_probability[i] * stp);
            DirectionState {
                stp_interior: stp,
                stp_edge: stp,
                q_interior: R::one(),
                nonempty: vec![xi; model.max_users],
            }
        };
        Self {
            dl: make(Direction::Downlink),
            ul: make(Direction::Uplink),
        }
    }

    fn max_abs_diff(&self, other: &Self) -> R {
        let mut m = R::zero();
        for (a, b) in [(&self.dl, &other.dl), (&self.ul, &other.ul)] {
            m = m
                .max((a.stp_interior - b.stp_interior).abs())
                .max((a.stp_edge - b.stp_edge).abs())
                .max((a.q_interior - b.q_interior).abs());
            for (x, y) in a.nonempty.iter().zip(&b.nonempty) {
                m = m.max((*x - *y).abs());
            }
        }
        m
    }

    fn blend(&self, new: &Self, d: R) -> Self {
        let mix = |a: R, b: R| (R::one() - d) * a + d * b;
        let one = |a: &DirectionState<R>, b: &DirectionState<R>| DirectionState {
            stp_interior: mix(a.stp_interior, b.stp_interior),
            stp_edge: mix(a.stp_edge, b.stp_edge),
            q_interior: mix(a.q_interior, b.q_interior),
            nonempty: a.nonempty.iter().zip(&b.nonempty).map(|(&x, &y)| mix(x, y)).collect(),
        };
        Self {
            dl: one(&self.dl, &new.dl),
            ul: one(&self.ul, &new.ul),
        }
    }
}

/// Everything the fixed point determines for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSolution<R> {
    pub direction: Direction,
    /// Averaged STPs `μ_TX,in`, `μ_TX,e`.
    pub stp_interior: R,
    pub stp_edge: R,
    pub q_interior: R,
    pub q_edge: R,
    /// Per tier `k = 1..=K`.
    pub tiers: Vec<TierQueueStats<R>>,
    /// `λ_TX,in`, `λ_TX,e` (nodes/m²).
    pub lambda_interior: R,
    pub lambda_edge: R,
}

/// Converged fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct StpSolution<R> {
    pub dl: DirectionSolution<R>,
    pub ul: DirectionSolution<R>,
    pub activity: TierActivity<R>,
    pub model: Model<R>,
    pub state: SolverState<R>,
    pub iterations: usize,
    pub residual: R,
    pub residual_history: Vec<R>,
}

impl<R: Real> StpSolution<R> {
    pub fn direction(&self, dir: Direction) -> &DirectionSolution<R> {
        match dir {
            Direction::Downlink => &self.dl,
            Direction::Uplink => &self.ul,
        }
    }
}

/// Averaged (de-conditioned) STPs of one direction for a fixed activity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedStps<R> {
    pub stp_interior: R,
    pub stp_edge: R,
    pub q_interior: R,
}

const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// De-conditioned STPs for the given activity fractions.
///
/// When virtually no user is edge-classified (`1 - q_in < 1e-12`) the
/// conditional edge STP is replaced by its unconditioned value.
pub fn averaged_stps<R: Real>(model: &Model<R>, activity: &TierActivity<R>, dir: Direction) -> Result<AveragedStps<R>> {
    let s = model.threshold_scale(dir);
    let opts = &model.quadrature;
    let alpha = model.pathloss_exponent;
    let pr = model.power_ratio;
    let (dl_in, dl_e) = activity.effective_densities(Direction::Downlink);
    let (ul_in, ul_e) = activity.effective_densities(Direction::Uplink);
    let theta = model.theta * s;
    let decode = model.decode * s;

    let avg = |rate: R| {
        if rate == R::zero() {
            Ok(R::one())
        } else {
            decondition_over_r(|r: R| (-R::PI() * r * r * rate).exp(), model.sap_density, opts)
        }
    };
    let c_theta = eta1_rate(dl_in, ul_in, theta, alpha, pr, opts)?;
    let a_theta = avg(c_theta)?;
    let stp_interior = if model.decode <= model.theta {
        R::one()
    } else {
        let c_max = eta1_rate(dl_in, ul_in, decode, alpha, pr, opts)?;
        (avg(c_max)? / a_theta).clamp_to(R::zero(), R::one())
    };

    let c_edge = eta1_rate(dl_e, ul_e, decode, alpha, pr, opts)?;
    let a_edge = avg(c_edge)?;
    let miss = R::one() - a_theta;
    let stp_edge = if miss < R::of(DEGENERATE_DENOMINATOR) {
        a_edge
    } else {
        let c_joint = eta2_rate(decode, theta, activity, opts)?;
        let a_joint = avg(c_joint)?;
        ((a_edge - a_joint) / miss).clamp_to(R::zero(), R::one())
    };
    Ok(AveragedStps {
        stp_interior,
        stp_edge,
        q_interior: a_theta,
    })
}

struct Derived<R> {
    tiers: [Vec<TierQueueStats<R>>; 2],
    activity: TierActivity<R>,
}

/// Queue statistics and activity implied by `state`, with `Ξ_k` recomputed
/// from the departure probabilities of the current STPs.
fn derive_from_state<R: Real>(model: &Model<R>, state: &SolverState<R>) -> Derived<R> {
    let m = model.interior_subbands;
    let l = model.edge_subbands;
    let mut tiers: [Vec<TierQueueStats<R>>; 2] = [Vec::new(), Vec::new()];
    let mut classes: [ClassActivity<R>; 2] = [
        ClassActivity::constant(0, R::zero(), R::zero()),
        ClassActivity::constant(0, R::zero(), R::zero()),
    ];
    for dir in Direction::BOTH {
        let i = dir.index();
        let st = state.get(dir);
        let q_in = st.q_interior;
        let q_e = R::one() - q_in;
        let mut stats = Vec::with_capacity(model.max_users);
        let mut class = ClassActivity {
            interior: Vec::with_capacity(model.max_users),
            edge: Vec::with_capacity(model.max_users),
        };
        for k in 1..=model.max_users {
            let xi_prev = st.nonempty[k - 1];
            let sched_in = scheduling_prob(k, m, q_in, xi_prev);
            let sched_e = scheduling_prob(k, l, q_e, xi_prev);
            let mu_bar = departure_prob(
                model.tx_probability[i],
                q_in,
                q_e,
                sched_in,
                sched_e,
                st.stp_interior,
                st.stp_edge,
            );
            let xi = nonempty_prob(model.arrival[i], mu_bar);
            let (chi_e, chi_in) = activity_fractions(k, q_e, q_in, xi, l, m, model.reuse_factor);
            class.interior.push(chi_in);
            class.edge.push(chi_e);
            stats.push(TierQueueStats {
                tier: k,
                direction: dir,
                departure_prob: mu_bar,
                nonempty_prob: xi,
                sched_interior: sched_in,
                sched_edge: sched_e,
                stable: model.arrival[i] < mu_bar,
            });
        }
        tiers[i] = stats;
        classes[i] = class;
    }
    let [dl, ul] = classes;
    Derived {
        tiers,
        activity: TierActivity {
            dl,
            ul,
            dl_probability: model.tx_probability[0],
            ul_probability: model.tx_probability[1],
            power_ratio: model.power_ratio,
            pathloss_exponent: model.pathloss_exponent,
            sap_density: model.sap_density,
            load_pmf: model.load_pmf.clone(),
        },
    }
}

fn step<R: Real>(model: &Model<R>, state: &SolverState<R>) -> Result<(SolverState<R>, Derived<R>)> {
    let derived = derive_from_state(model, state);
    let mut next = state.clone();
    for dir in Direction::BOTH {
        let avg = averaged_stps(model, &derived.activity, dir)?;
        let slot = match dir {
            Direction::Downlink => &mut next.dl,
            Direction::Uplink => &mut next.ul,
        };
        slot.stp_interior = avg.stp_interior;
        slot.stp_edge = avg.stp_edge;
        slot.q_interior = avg.q_interior;
        slot.nonempty = derived.tiers[dir.index()].iter().map(|t| t.nonempty_prob).collect();
    }
    Ok((next, derived))
}

fn assemble<R: Real>(
    model: Model<R>,
    state: SolverState<R>,
    iterations: usize,
    residual: R,
    residual_history: Vec<R>,
) -> StpSolution<R> {
    let Derived { tiers, activity } = derive_from_state(&model, &state);
    let [dl_tiers, ul_tiers] = tiers;
    let build = |dir: Direction, tiers: Vec<TierQueueStats<R>>| {
        let st = state.get(dir);
        let (lambda_interior, lambda_edge) = activity.effective_densities(dir);
        DirectionSolution {
            direction: dir,
            stp_interior: st.stp_interior,
            stp_edge: st.stp_edge,
            q_interior: st.q_interior,
            q_edge: R::one() - st.q_interior,
            tiers,
            lambda_interior,
            lambda_edge,
        }
    };
    StpSolution {
        dl: build(Direction::Downlink, dl_tiers),
        ul: build(Direction::Uplink, ul_tiers),
        activity,
        model,
        state,
        iterations,
        residual,
        residual_history,
    }
}

/// Damped Picard iteration from the optimistic start (all STPs at
/// `options.initial_stp`, every user interior).
pub fn solve_fixed_point<R: Real>(config: &ScenarioConfig, options: &SolverOptions<R>) -> Result<StpSolution<R>> {
    solve_from(config, options, None)
}

/// As [`solve_fixed_point`], starting from a previous state when its tier
/// count matches.
pub fn solve_from<R: Real>(
    config: &ScenarioConfig,
    options: &SolverOptions<R>,
    warm: Option<&SolverState<R>>,
) -> Result<StpSolution<R>> {
    options.validate()?;
    let model = Model::new(config, options.quadrature);
    let mut state = match warm {
        Some(w) if w.dl.nonempty.len() == model.max_users => w.clone(),
        _ => SolverState::initial(&model, options.initial_stp),
    };
    let mut history = Vec::new();
    for it in 1..=options.max_iterations {
        let (next, _) = step(&model, &state)?;
        let residual = next.max_abs_diff(&state);
        history.push(residual);
        state = state.blend(&next, options.damping);
        if residual < options.tolerance {
            return Ok(assemble(model, state, it, residual, history));
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iterations,
        residuals: history.iter().map(|r| r.to_f64_lossy()).collect(),
    })
}

/// Change of every state variable under one more undamped step.
pub fn step_residual<R: Real>(solution: &StpSolution<R>) -> Result<R> {
    let (next, _) = step(&solution.model, &solution.state)?;
    Ok(next.max_abs_diff(&solution.state))
}

/// DL averaged STPs `(μ_in, μ_e)` under saturated, DL-only traffic where every
/// cell always occupies its interior sub-band and one edge sub-band per
/// reuse group (`p_D = 1`, `χ_e = 1/Δ`, `χ_in = 1`).
pub fn static_ffr_coverage<R: Real>(config: &ScenarioConfig, quadrature: KernelQuadrature<R>) -> Result<AveragedStps<R>> {
    let mut model = Model::new(config, quadrature);
    model.tx_probability = [R::one(), R::zero()];
    let k = model.max_users;
    let edge = R::of_usize(model.reuse_factor).recip();
    let activity = TierActivity {
        dl: ClassActivity::constant(k, R::one(), edge),
        ul: ClassActivity::constant(k, R::zero(), R::zero()),
        dl_probability: R::one(),
        ul_probability: R::zero(),
        power_ratio: model.power_ratio,
        pathloss_exponent: model.pathloss_exponent,
        sap_density: model.sap_density,
        load_pmf: model.load_pmf.clone(),
    };
    averaged_stps(&model, &activity, Direction::Downlink)
}

/// Probability that a user at distance `r` is classified interior:
/// `η1(λ_D,in, λ_U,in, θ·s, r)` with `s` the direction's threshold scale.
pub fn interior_prob_at_r<R: Real>(
    r: R,
    lambda_dl_interior: R,
    lambda_ul_interior: R,
    model: &Model<R>,
    dir: Direction,
) -> Result<R> {
    let theta = model.theta * model.threshold_scale(dir);
    let rate = eta1_rate(
        lambda_dl_interior,
        lambda_ul_interior,
        theta,
        model.pathloss_exponent,
        model.power_ratio,
        &model.quadrature,
    )?;
    Ok((-R::PI() * r * r * rate).exp())
}

/// Per-distance link quantities of one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkAtDistance<R> {
    pub q_interior: R,
    /// `q_in(r) μ_in(r) = η1(in, max(T, θ))`.
    pub interior_success: R,
    /// `q_e(r) μ_e(r) = η1(edge, T) - η2(T, θ)`, clamped to `[0, q_e(r)]`.
    pub edge_success: R,
}

impl<R: Real> LinkAtDistance<R> {
    pub fn q_edge(&self) -> R {
        R::one() - self.q_interior
    }

    pub fn stp_interior(&self) -> R {
        if self.q_interior <= R::zero() {
            R::one()
        } else {
            (self.interior_success / self.q_interior).clamp_to(R::zero(), R::one())
        }
    }
}

/// Rates of every kernel entering the per-distance formulas of one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRates<R> {
    pub interior_theta: R,
    pub interior_max: R,
    pub edge_decode: R,
    pub joint: R,
    pub decode_above_theta: bool,
}

impl<R: Real> DistanceRates<R> {
    pub fn of(solution: &StpSolution<R>, dir: Direction) -> Result<Self> {
        let model = &solution.model;
        let s = model.threshold_scale(dir);
        let opts = &model.quadrature;
        let alpha = model.pathloss_exponent;
        let pr = model.power_ratio;
        let (dl_in, ul_in) = (solution.dl.lambda_interior, solution.ul.lambda_interior);
        let (dl_e, ul_e) = (solution.dl.lambda_edge, solution.ul.lambda_edge);
        let theta = model.theta * s;
        let decode = model.decode * s;
        let interior_theta = eta1_rate(dl_in, ul_in, theta, alpha, pr, opts)?;
        let decode_above_theta = model.decode > model.theta;
        let interior_max = if decode_above_theta {
            eta1_rate(dl_in, ul_in, decode, alpha, pr, opts)?
        } else {
            interior_theta
        };
        Ok(Self {
            interior_theta,
            interior_max,
            edge_decode: eta1_rate(dl_e, ul_e, decode, alpha, pr, opts)?,
            joint: eta2_rate(decode, theta, &solution.activity, opts)?,
            decode_above_theta,
        })
    }

    pub fn at(&self, r: R) -> LinkAtDistance<R> {
        let g = |rate: R| (-R::PI() * r * r * rate).exp();
        let q_interior = g(self.interior_theta);
        let interior_success = if self.decode_above_theta {
            g(self.interior_max)
        } else {
            q_interior
        };
        let q_edge = R::one() - q_interior;
        let edge_success = (g(self.edge_decode) - g(self.joint)).clamp_to(R::zero(), q_edge.max(R::zero()));
        LinkAtDistance {
            q_interior,
            interior_success,
            edge_success,
        }
    }
}

/// Conditional STPs at link distance `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StpsAtDistance<R> {
    pub dl_interior: R,
    pub dl_edge: R,
    pub ul_interior: R,
    pub ul_edge: R,
}

/// The four conditional STPs at distance `r`. Fails with
/// [`Error::DegenerateEdge`] when `1 - q_in(r) < 1e-12`, i.e. there are
/// essentially no edge users to condition on.
pub fn stp_at_distance<R: Real>(r: R, solution: &StpSolution<R>) -> Result<StpsAtDistance<R>> {
    let mut out = [(R::zero(), R::zero()); 2];
    for dir in Direction::BOTH {
        let link = DistanceRates::of(solution, dir)?.at(r);
        let miss = link.q_edge();
        if miss < R::of(DEGENERATE_DENOMINATOR) {
            return Err(Error::DegenerateEdge {
                r: r.to_f64_lossy(),
                denominator: miss.to_f64_lossy(),
            });
        }
        out[dir.index()] = (link.stp_interior(), (link.edge_success / miss).clamp_to(R::zero(), R::one()));
    }
    Ok(StpsAtDistance {
        dl_interior: out[0].0,
        dl_edge: out[0].1,
        ul_interior: out[1].0,
        ul_edge: out[1].1,
    })
}

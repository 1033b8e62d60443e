//! Mean packet throughput (MPT) and the exhaustive (θ, L) search.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Direction, OptimizerConfig, ScenarioConfig};
use crate::error::{ConstraintSlack, Error, Result};
use crate::scalar::Real;
use crate::solver::{solve_from, DistanceRates, SolverOptions, SolverState, StpSolution};

/// Grid size for curve checks.
pub const CURVE_POINTS: usize = 64;

/// Flag threshold for an increase of `T(r)` between neighbouring grid points.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// `Σ_k {(μ̄_k - ξ)/(1 - ξ)}₊ f(k) / (1 - f(0))`.
pub fn tier_sum<R: Real>(departure: impl Iterator<Item = R>, arrival: R, load_pmf: &[R]) -> R {
    let busy = R::one() - load_pmf[0];
    if busy <= R::zero() {
        return R::zero();
    }
    let sum = departure
        .zip(&load_pmf[1..])
        .fold(R::zero(), |acc, (mu, &f)| acc + ((mu - arrival) / (R::one() - arrival)).positive_part() * f);
    sum / busy
}

/// Evaluates `T_TX(r)` for many `r` against one solution; the kernel rates
/// do not depend on `r` and are computed once.
#[derive(Debug, Clone)]
pub struct MptEvaluator<'a, R> {
    solution: &'a StpSolution<R>,
    direction: Direction,
    rates: DistanceRates<R>,
}

impl<'a, R: Real> MptEvaluator<'a, R> {
    pub fn new(solution: &'a StpSolution<R>, direction: Direction) -> Result<Self> {
        Ok(Self {
            solution,
            direction,
            rates: DistanceRates::of(solution, direction)?,
        })
    }

    /// Per-tier `μ̄_k,r`.
    pub fn departure_at(&self, r: R) -> Vec<R> {
        let link = self.rates.at(r);
        let dir = self.solution.direction(self.direction);
        let p = self.solution.model.tx_probability[self.direction.index()];
        dir.tiers
            .iter()
            .map(|t| {
                (p * (link.interior_success * t.sched_interior + link.edge_success * t.sched_edge))
                    .clamp_to(R::zero(), R::one())
            })
            .collect()
    }

    pub fn at(&self, r: R) -> R {
        let model = &self.solution.model;
        tier_sum(
            self.departure_at(r).into_iter(),
            model.arrival[self.direction.index()],
            &model.load_pmf,
        )
    }

    pub fn curve(&self, r_max: R, points: usize) -> MptCurve<R> {
        let n = points.max(2);
        let radii: Vec<R> = (0..n).map(|i| r_max * R::of_usize(i) / R::of_usize(n - 1)).collect();
        let values = radii.iter().map(|&r| self.at(r)).collect();
        MptCurve {
            direction: self.direction,
            radii,
            values,
        }
    }
}

/// `T_TX(r)` at link distance `r`.
pub fn mpt_at_distance<R: Real>(r: R, solution: &StpSolution<R>, direction: Direction) -> Result<R> {
    Ok(MptEvaluator::new(solution, direction)?.at(r))
}

/// Average MPT over users, from the averaged per-tier departure probabilities.
pub fn mpt_average<R: Real>(solution: &StpSolution<R>, direction: Direction) -> R {
    let model = &solution.model;
    tier_sum(
        solution.direction(direction).tiers.iter().map(|t| t.departure_prob),
        model.arrival[direction.index()],
        &model.load_pmf,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MptCurve<R> {
    pub direction: Direction,
    /// Meters.
    pub radii: Vec<R>,
    /// Packets per slot.
    pub values: Vec<R>,
}

impl<R: Real> MptCurve<R> {
    /// Indices `i` with `T(r_{i+1}) - T(r_i) > 1e-9`, with the increase.
    pub fn monotonicity_violations(&self) -> Vec<(usize, R)> {
        self.values
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let rise = w[1] - w[0];
                (rise > R::of(MONOTONE_SLACK)).then_some((i, rise))
            })
            .collect()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.monotonicity_violations().is_empty()
    }

    pub fn min(&self) -> R {
        self.values.iter().fold(R::infinity(), |m, &v| m.min(v))
    }
}

/// One grid point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub theta_db: f64,
    pub edge_subbands: usize,
    pub mpt_dl: f64,
    pub mpt_ul: f64,
    pub mpt_dl_at_r: f64,
    pub mpt_ul_at_r: f64,
    pub feasible_dl: bool,
    pub feasible_ul: bool,
    /// Smallest `T_TX(r)` on the grid over `[0, R]`.
    pub grid_min: [f64; 2],
    /// Curve over `[0, R]` passed the monotonicity check.
    pub monotone: [bool; 2],
    pub iterations: usize,
}

impl SweepRow {
    pub fn mpt(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Downlink => self.mpt_dl,
            Direction::Uplink => self.mpt_ul,
        }
    }

    pub fn mpt_at_cell_edge(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Downlink => self.mpt_dl_at_r,
            Direction::Uplink => self.mpt_ul_at_r,
        }
    }

    pub fn feasible(&self, dir: Direction) -> bool {
        match dir {
            Direction::Downlink => self.feasible_dl,
            Direction::Uplink => self.feasible_ul,
        }
    }

    /// The value the feasibility decision was based on.
    pub fn constraint_value(&self, dir: Direction) -> f64 {
        if self.monotone[dir.index()] {
            self.mpt_at_cell_edge(dir)
        } else {
            self.grid_min[dir.index()]
        }
    }
}

/// Sweep results in grid order (θ outer, L inner).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        for row in &self.rows {
            w.serialize(RowCsv::from(row))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn row(&self, theta_db: f64, edge_subbands: usize) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.theta_db == theta_db && r.edge_subbands == edge_subbands)
    }

    /// Best feasible point for one direction; ties go to smaller L, then
    /// smaller θ.
    pub fn argmax(&self, dir: Direction) -> Option<&SweepRow> {
        best_by(self.rows.iter().filter(|r| r.feasible(dir)), |r| r.mpt(dir))
    }

    /// Point feasible in both directions with the largest `T_D + T_U`.
    pub fn argmax_total(&self) -> Option<&SweepRow> {
        best_by(
            self.rows.iter().filter(|r| r.feasible_dl && r.feasible_ul),
            |r| r.mpt_dl + r.mpt_ul,
        )
    }
}

fn best_by<'a>(rows: impl Iterator<Item = &'a SweepRow>, key: impl Fn(&SweepRow) -> f64) -> Option<&'a SweepRow> {
    rows.fold(None, |best: Option<&SweepRow>, r| match best {
        None => Some(r),
        Some(b) => {
            let (kr, kb) = (key(r), key(b));
            let better = kr > kb
                || (kr == kb && (r.edge_subbands, r.theta_db) < (b.edge_subbands, b.theta_db));
            Some(if better { r } else { b })
        }
    })
}

// Column order and names of the exported table.
#[derive(Serialize)]
struct RowCsv {
    theta_db: f64,
    #[serde(rename = "L")]
    l: usize,
    mpt_dl: f64,
    mpt_ul: f64,
    #[serde(rename = "mpt_dl_at_R")]
    mpt_dl_at_r: f64,
    #[serde(rename = "mpt_ul_at_R")]
    mpt_ul_at_r: f64,
    feasible_dl: bool,
    feasible_ul: bool,
}

impl From<&SweepRow> for RowCsv {
    fn from(r: &SweepRow) -> Self {
        Self {
            theta_db: r.theta_db,
            l: r.edge_subbands,
            mpt_dl: r.mpt_dl,
            mpt_ul: r.mpt_ul,
            mpt_dl_at_r: r.mpt_dl_at_r,
            mpt_ul_at_r: r.mpt_ul_at_r,
            feasible_dl: r.feasible_dl,
            feasible_ul: r.feasible_ul,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions<R> {
    pub solver: SolverOptions<R>,
    /// Start each L from the previous L's state at the same θ.
    pub warm_start: bool,
}

impl<R: Real> Default for SweepOptions<R> {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            warm_start: false,
        }
    }
}

fn evaluate_point<R: Real>(
    config: &ScenarioConfig,
    optimizer: &OptimizerConfig,
    theta_db: f64,
    l: usize,
    options: &SweepOptions<R>,
    warm: Option<&SolverState<R>>,
) -> Result<(SweepRow, SolverState<R>)> {
    let cfg = config.with_ffr(theta_db, l)?;
    let sol = solve_from(&cfg, &options.solver, warm)?;
    let radius = R::of(cfg.cell_radius());
    let mut mpt = [0.0; 2];
    let mut at_r = [0.0; 2];
    let mut grid_min = [0.0; 2];
    let mut monotone = [true; 2];
    let mut feasible = [false; 2];
    for dir in Direction::BOTH {
        let i = dir.index();
        let eval = MptEvaluator::new(&sol, dir)?;
        let curve = eval.curve(radius, CURVE_POINTS);
        mpt[i] = mpt_average(&sol, dir).to_f64_lossy();
        at_r[i] = curve.values[curve.values.len() - 1].to_f64_lossy();
        grid_min[i] = curve.min().to_f64_lossy();
        monotone[i] = curve.is_non_increasing();
        let binding = if monotone[i] { at_r[i] } else { grid_min[i] };
        feasible[i] = binding >= optimizer.min_mpt(dir);
    }
    let row = SweepRow {
        theta_db,
        edge_subbands: l,
        mpt_dl: mpt[0],
        mpt_ul: mpt[1],
        mpt_dl_at_r: at_r[0],
        mpt_ul_at_r: at_r[1],
        feasible_dl: feasible[0],
        feasible_ul: feasible[1],
        grid_min,
        monotone,
        iterations: sol.iterations,
    };
    Ok((row, sol.state))
}

/// Solves every (θ, L) grid point. Points run in parallel; the table is in
/// grid order regardless of scheduling.
pub fn sweep<R: Real>(config: &ScenarioConfig, optimizer: &OptimizerConfig, options: &SweepOptions<R>) -> Result<SweepTable> {
    optimizer.validate(config)?;
    let rows: Vec<Vec<SweepRow>> = if options.warm_start {
        optimizer
            .theta_grid
            .par_iter()
            .map(|&theta| {
                let mut prev: Option<SolverState<R>> = None;
                let mut out = Vec::with_capacity(optimizer.l_candidates.len());
                for &l in &optimizer.l_candidates {
                    let (row, state) = evaluate_point(config, optimizer, theta, l, options, prev.as_ref())?;
                    prev = Some(state);
                    out.push(row);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?
    } else {
        let points: Vec<(f64, usize)> = optimizer
            .theta_grid
            .iter()
            .flat_map(|&t| optimizer.l_candidates.iter().map(move |&l| (t, l)))
            .collect();
        let flat = points
            .par_iter()
            .map(|&(t, l)| evaluate_point(config, optimizer, t, l, options, None).map(|(row, _)| row))
            .collect::<Result<Vec<_>>>()?;
        vec![flat]
    };
    Ok(SweepTable {
        rows: rows.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub direction: Direction,
    pub edge_subbands: usize,
    pub theta_db: f64,
    pub mpt_dl: f64,
    pub mpt_ul: f64,
    /// Constraint value at the optimum for the optimized direction.
    pub binding_value: f64,
    pub table: SweepTable,
    /// Point maximizing `T_D + T_U` among points feasible in both directions.
    pub best_total: Option<(f64, usize)>,
}

/// Feasible argmax of the average MPT of `direction` over the grid.
pub fn optimize<R: Real>(
    config: &ScenarioConfig,
    optimizer: &OptimizerConfig,
    direction: Direction,
    options: &SweepOptions<R>,
) -> Result<OptimizationResult> {
    let table = sweep(config, optimizer, options)?;
    optimize_table(table, optimizer, direction)
}

/// As [`optimize`] on an existing sweep.
pub fn optimize_table(table: SweepTable, optimizer: &OptimizerConfig, direction: Direction) -> Result<OptimizationResult> {
    let Some(best) = table.argmax(direction) else {
        let slack = table
            .rows
            .iter()
            .map(|r| ConstraintSlack {
                theta_db: r.theta_db,
                edge_subbands: r.edge_subbands,
                slack: r.constraint_value(direction) - optimizer.min_mpt(direction),
            })
            .collect();
        return Err(Error::Infeasible { slack });
    };
    let best = best.clone();
    let best_total = table.argmax_total().map(|r| (r.theta_db, r.edge_subbands));
    Ok(OptimizationResult {
        direction,
        edge_subbands: best.edge_subbands,
        theta_db: best.theta_db,
        mpt_dl: best.mpt_dl,
        mpt_ul: best.mpt_ul,
        binding_value: best.constraint_value(direction),
        table,
        best_total,
    })
}

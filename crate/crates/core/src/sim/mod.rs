//! Slot-level Monte Carlo simulation of the network.
//!
//! Each realization draws a fresh deployment and runs its own ChaCha8
//! stream (`master_seed`, stream = realization index), so results do not
//! depend on how realizations are spread over threads.

pub mod deployment;
pub mod engine;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Direction, ScenarioConfig, SimConfig};
use crate::error::Result;
pub use deployment::{Deployment, ServiceUser};
pub use engine::{LinkParams, Network, UserCounters};

/// Switches for tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub fading: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { fading: true }
    }
}

/// Additive tallies of one direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DirectionTally {
    pub trials: u64,
    pub interior: u64,
    pub interior_success: u64,
    pub edge_tx: u64,
    pub edge_success: u64,
    pub edge_blocked: u64,
    /// Users with at least one trial.
    pub active_users: u64,
    /// Σ_u interior_u / trials_u, and likewise below.
    pub w_interior: f64,
    pub w_interior_success: f64,
    pub w_edge_tx: f64,
    pub w_edge_success: f64,
    pub arrivals: u64,
    pub delivered: u64,
    pub sojourn_sum: u64,
    pub user_mpt_sum: f64,
    pub user_mpt_count: u64,
    pub queue_samples: u64,
    pub user_slots: u64,
    pub backlog_end: u64,
}

impl DirectionTally {
    fn add(&mut self, o: &Self) {
        self.trials += o.trials;
        self.interior += o.interior;
        self.interior_success += o.interior_success;
        self.edge_tx += o.edge_tx;
        self.edge_success += o.edge_success;
        self.edge_blocked += o.edge_blocked;
        self.active_users += o.active_users;
        self.w_interior += o.w_interior;
        self.w_interior_success += o.w_interior_success;
        self.w_edge_tx += o.w_edge_tx;
        self.w_edge_success += o.w_edge_success;
        self.arrivals += o.arrivals;
        self.delivered += o.delivered;
        self.sojourn_sum += o.sojourn_sum;
        self.user_mpt_sum += o.user_mpt_sum;
        self.user_mpt_count += o.user_mpt_count;
        self.queue_samples += o.queue_samples;
        self.user_slots += o.user_slots;
        self.backlog_end += o.backlog_end;
    }

    /// Ratios derived from the tallies; `arrival` is the nominal `ξ`.
    pub fn stats(&self, arrival: f64) -> DirectionStats {
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
        let mean_sojourn = ratio(self.sojourn_sum as f64, self.delivered as f64);
        let mean_queue_length = ratio(self.queue_samples as f64, self.user_slots as f64);
        DirectionStats {
            q_interior: ratio(self.interior as f64, self.trials as f64),
            stp_interior: ratio(self.interior_success as f64, self.interior as f64),
            stp_edge: ratio(self.edge_success as f64, self.edge_tx as f64),
            q_interior_user_mean: ratio(self.w_interior, self.active_users as f64),
            stp_interior_user_mean: ratio(self.w_interior_success, self.w_interior),
            stp_edge_user_mean: ratio(self.w_edge_success, self.w_edge_tx),
            mpt: ratio(1.0, mean_sojourn),
            mpt_user_mean: ratio(self.user_mpt_sum, self.user_mpt_count as f64),
            mean_queue_length,
            mean_sojourn,
            little_ratio: ratio(mean_queue_length, arrival * mean_sojourn),
            backlog_fraction: ratio(self.backlog_end as f64, self.arrivals as f64),
        }
    }
}

/// Per-direction aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionStats {
    /// Share of trials classified interior.
    pub q_interior: f64,
    /// Conditional success frequencies over all transmissions.
    pub stp_interior: f64,
    pub stp_edge: f64,
    /// The same three with every active user weighted equally.
    pub q_interior_user_mean: f64,
    pub stp_interior_user_mean: f64,
    pub stp_edge_user_mean: f64,
    /// `1 / mean sojourn`, packets/slot.
    pub mpt: f64,
    /// Mean over users of each user's `1 / mean sojourn`.
    pub mpt_user_mean: f64,
    /// Packets per user, time-averaged.
    pub mean_queue_length: f64,
    /// Slots.
    pub mean_sojourn: f64,
    /// `mean_queue_length / (ξ · mean_sojourn)`.
    pub little_ratio: f64,
    /// Packets left queued at the end over packets arrived in the window.
    pub backlog_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BinTally {
    pub users: u64,
    pub mpt_sum: [f64; 2],
    pub mpt_count: [u64; 2],
}

/// Tallies of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationMetrics {
    pub index: usize,
    pub saps: usize,
    pub service_users: usize,
    pub excluded_users: usize,
    pub dl: DirectionTally,
    pub ul: DirectionTally,
    pub bins: Vec<BinTally>,
}

impl RealizationMetrics {
    pub fn tally(&self, dir: Direction) -> &DirectionTally {
        match dir {
            Direction::Downlink => &self.dl,
            Direction::Uplink => &self.ul,
        }
    }
}

/// One MPT-vs-distance histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MptBin {
    pub r_bin_center_m: f64,
    pub mpt_dl: f64,
    pub mpt_ul: f64,
    pub count: u64,
}

/// 95% normal-approximation half-widths over realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfWidths {
    pub stp_interior: f64,
    pub stp_edge: f64,
    pub mpt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub dl: DirectionStats,
    pub ul: DirectionStats,
    pub dl_half_width: HalfWidths,
    pub ul_half_width: HalfWidths,
    pub totals: [DirectionTally; 2],
    pub bins: Vec<MptBin>,
    pub realizations: Vec<RealizationMetrics>,
    pub arrival: [f64; 2],
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn direction(&self, dir: Direction) -> &DirectionStats {
        match dir {
            Direction::Downlink => &self.dl,
            Direction::Uplink => &self.ul,
        }
    }

    /// One row per realization.
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fields = [
            "q_in",
            "stp_in",
            "stp_e",
            "q_in_user_mean",
            "stp_in_user_mean",
            "stp_e_user_mean",
            "mpt",
            "mpt_user_mean",
            "mean_queue",
            "mean_sojourn",
            "arrivals",
            "delivered",
            "backlog_end",
        ];
        let mut header = vec!["realization".to_string(), "saps".into(), "service_users".into(), "excluded_users".into()];
        for dir in Direction::BOTH {
            header.extend(fields.iter().map(|f| format!("{f}_{}", dir.short())));
        }
        w.write_record(&header)?;
        for r in &self.realizations {
            let mut rec = vec![
                r.index.to_string(),
                r.saps.to_string(),
                r.service_users.to_string(),
                r.excluded_users.to_string(),
            ];
            for dir in Direction::BOTH {
                let t = r.tally(dir);
                let s = t.stats(self.arrival[dir.index()]);
                rec.extend(
                    [
                        s.q_interior,
                        s.stp_interior,
                        s.stp_edge,
                        s.q_interior_user_mean,
                        s.stp_interior_user_mean,
                        s.stp_edge_user_mean,
                        s.mpt,
                        s.mpt_user_mean,
                        s.mean_queue_length,
                        s.mean_sojourn,
                    ]
                    .iter()
                    .map(|v| v.to_string()),
                );
                rec.extend([t.arrivals, t.delivered, t.backlog_end].iter().map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_mpt_vs_r_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for b in &self.bins {
            w.serialize(b)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Link parameters of `scenario`.
pub fn link_params(scenario: &ScenarioConfig, options: &SimOptions) -> LinkParams {
    let derived = scenario.derive();
    LinkParams {
        theta: scenario.classification_threshold(),
        decode: scenario.decode_threshold(),
        power_ratio: scenario.power_ratio(),
        dl_probability: derived.dl_probability,
        arrival: [scenario.dl_arrival(), scenario.ul_arrival()],
        interior_subbands: derived.interior_subbands,
        edge_subbands: scenario.edge_subbands(),
        reuse_factor: scenario.reuse_factor(),
        fading: options.fading,
    }
}

/// RNG of realization `index`.
pub fn realization_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Deploys and runs realization `index`.
pub fn run_realization(scenario: &ScenarioConfig, sim: &SimConfig, options: &SimOptions, index: usize) -> RealizationMetrics {
    let mut rng = realization_rng(sim.master_seed, index);
    let dep = Deployment::generate(
        &mut rng,
        sim.side(),
        sim.torus,
        scenario.sap_density(),
        scenario.user_density(),
        scenario.max_users(),
        scenario.reuse_factor(),
        scenario.pathloss_exponent(),
    );
    let params = link_params(scenario, options);
    let warmup = sim.warmup_slots();
    let mut net = Network::new(&dep, params, warmup as u32, &mut rng);
    for _ in 0..sim.slots_per_realization {
        net.step(&mut rng);
    }
    summarize(index, &dep, &net, scenario.cell_radius(), sim.distance_bins)
}

fn summarize(index: usize, dep: &Deployment, net: &Network<'_>, radius: f64, bins: usize) -> RealizationMetrics {
    let mut tallies = [DirectionTally::default(); 2];
    let mut hist = vec![BinTally::default(); bins];
    let width = radius / bins as f64;
    for (u, user) in dep.users.iter().enumerate() {
        let bin = (user.distance <= radius).then(|| ((user.distance / width) as usize).min(bins - 1));
        if let Some(b) = bin {
            hist[b].users += 1;
        }
        for (d, t) in tallies.iter_mut().enumerate() {
            let c = &net.counters[d][u];
            t.trials += c.trials as u64;
            t.interior += c.interior as u64;
            t.interior_success += c.interior_success as u64;
            t.edge_tx += c.edge_tx as u64;
            t.edge_success += c.edge_success as u64;
            t.edge_blocked += c.edge_blocked as u64;
            if c.trials > 0 {
                let n = c.trials as f64;
                t.active_users += 1;
                t.w_interior += c.interior as f64 / n;
                t.w_interior_success += c.interior_success as f64 / n;
                t.w_edge_tx += c.edge_tx as f64 / n;
                t.w_edge_success += c.edge_success as f64 / n;
            }
            t.arrivals += c.arrivals as u64;
            t.delivered += c.delivered as u64;
            t.sojourn_sum += c.sojourn_sum;
            let user_mpt = if c.delivered > 0 {
                Some(c.delivered as f64 / c.sojourn_sum as f64)
            } else if c.arrivals > 0 {
                Some(0.0)
            } else {
                None
            };
            if let Some(v) = user_mpt {
                t.user_mpt_sum += v;
                t.user_mpt_count += 1;
                if let Some(b) = bin {
                    hist[b].mpt_sum[d] += v;
                    hist[b].mpt_count[d] += 1;
                }
            }
        }
    }
    let backlog = net.backlog();
    for (d, t) in tallies.iter_mut().enumerate() {
        t.queue_samples = net.queue_samples[d];
        t.user_slots = net.measured_slots * dep.users.len() as u64;
        t.backlog_end = backlog[d];
    }
    let [dl, ul] = tallies;
    RealizationMetrics {
        index,
        saps: dep.cells(),
        service_users: dep.users.len(),
        excluded_users: dep.excluded_users,
        dl,
        ul,
        bins: hist,
    }
}

fn half_width(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return f64::NAN;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.96 * (var / n).sqrt()
}

/// Pools per-realization tallies in index order.
pub fn merge(
    realizations: Vec<RealizationMetrics>,
    arrival: [f64; 2],
    radius: f64,
    bins: usize,
    warnings: Vec<String>,
) -> MetricsReport {
    let mut totals = [DirectionTally::default(); 2];
    let mut hist = vec![BinTally::default(); bins];
    for r in &realizations {
        totals[0].add(&r.dl);
        totals[1].add(&r.ul);
        for (h, b) in hist.iter_mut().zip(&r.bins) {
            h.users += b.users;
            for d in 0..2 {
                h.mpt_sum[d] += b.mpt_sum[d];
                h.mpt_count[d] += b.mpt_count[d];
            }
        }
    }
    let width = radius / bins as f64;
    let mean = |s: f64, n: u64| if n > 0 { s / n as f64 } else { f64::NAN };
    let bins_out = hist
        .iter()
        .enumerate()
        .map(|(i, h)| MptBin {
            r_bin_center_m: (i as f64 + 0.5) * width,
            mpt_dl: mean(h.mpt_sum[0], h.mpt_count[0]),
            mpt_ul: mean(h.mpt_sum[1], h.mpt_count[1]),
            count: h.users,
        })
        .collect();
    let widths = |dir: Direction| {
        let per = || realizations.iter().map(move |r| r.tally(dir).stats(arrival[dir.index()]));
        HalfWidths {
            stp_interior: half_width(per().map(|s| s.stp_interior)),
            stp_edge: half_width(per().map(|s| s.stp_edge)),
            mpt: half_width(per().map(|s| s.mpt)),
        }
    };
    MetricsReport {
        dl: totals[0].stats(arrival[0]),
        ul: totals[1].stats(arrival[1]),
        dl_half_width: widths(Direction::Downlink),
        ul_half_width: widths(Direction::Uplink),
        totals,
        bins: bins_out,
        arrival,
        warnings,
        realizations,
    }
}

/// Runs every realization (in parallel on the current rayon pool) and
/// pools them in realization order.
pub fn run_experiment(scenario: &ScenarioConfig, sim: &SimConfig, options: &SimOptions) -> Result<MetricsReport> {
    let warnings = sim.validate(scenario)?;
    let realizations: Vec<RealizationMetrics> = (0..sim.realizations)
        .into_par_iter()
        .map(|i| run_realization(scenario, sim, options, i))
        .collect();
    Ok(merge(
        realizations,
        [scenario.dl_arrival(), scenario.ul_arrival()],
        scenario.cell_radius(),
        sim.distance_bins,
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            half_side: 200.0,
            realizations: 3,
            slots_per_realization: 300,
            ..SimConfig::desk()
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let cfg = ScenarioConfig::default();
        let a = run_experiment(&cfg, &small(), &SimOptions::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_experiment(&cfg, &small(), &SimOptions::default()).unwrap());
        let csv = |r: &MetricsReport| {
            let mut x = Vec::new();
            r.write_metrics_csv(&mut x).unwrap();
            r.write_mpt_vs_r_csv(&mut x).unwrap();
            x
        };
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.realizations.len(), 3);
        assert!(a.warnings.iter().any(|w| w.contains("SAPs")));
    }

    #[test]
    fn different_seed_differs() {
        let cfg = ScenarioConfig::default();
        let a = run_realization(&cfg, &small(), &SimOptions::default(), 0);
        let b = run_realization(&cfg, &SimConfig { master_seed: 1, ..small() }, &SimOptions::default(), 0);
        assert_ne!(a, b);
    }

    #[test]
    fn half_width_of_constant_is_zero() {
        assert_eq!(half_width([0.5, 0.5, 0.5].into_iter()), 0.0);
        assert!(half_width([1.0].into_iter()).is_nan());
    }

    #[test]
    fn csv_layout() {
        let cfg = ScenarioConfig::default();
        let r = run_experiment(&cfg, &SimConfig { realizations: 1, ..small() }, &SimOptions::default()).unwrap();
        let mut out = Vec::new();
        r.write_mpt_vs_r_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "r_bin_center_m,mpt_dl,mpt_ul,count");
        assert_eq!(text.lines().count(), 1 + 14);
        let mut out = Vec::new();
        r.write_metrics_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 4 + 2 * 13);
        assert_eq!(text.lines().count(), 2);
    }
}

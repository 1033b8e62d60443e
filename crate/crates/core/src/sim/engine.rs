//! Slot-by-slot evolution of one deployment.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric};

use super::deployment::Deployment;

/// Link-level constants of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Linear classification threshold θ.
    pub theta: f64,
    /// Linear decoding threshold T.
    pub decode: f64,
    /// `P_u / P_s`.
    pub power_ratio: f64,
    pub dl_probability: f64,
    /// `(ξ_D, ξ_U)`.
    pub arrival: [f64; 2],
    pub interior_subbands: usize,
    pub edge_subbands: usize,
    pub reuse_factor: usize,
    /// Rayleigh fading; `false` pins every fading gain to 1.
    pub fading: bool,
}

/// Per-user, per-direction tallies over the measurement window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UserCounters {
    /// Interior classification trials.
    pub trials: u32,
    pub interior: u32,
    pub interior_success: u32,
    pub edge_tx: u32,
    pub edge_success: u32,
    /// Edge-classified with no idle edge sub-band left.
    pub edge_blocked: u32,
    pub arrivals: u32,
    pub delivered: u32,
    /// Slots, arrival slot included.
    pub sojourn_sum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Class {
    Interior,
    Edge,
}

#[derive(Debug, Clone, Copy)]
struct Link {
    user: u32,
    cell: u32,
    dl: bool,
    class: Class,
    sir: f64,
    /// Interior sub-band `s`, edge sub-band `M + index`, or `NO_BAND`.
    band: u32,
}

const NO_BAND: u32 = u32::MAX;

/// Queues, counters and per-slot scratch space.
pub struct Network<'a> {
    dep: &'a Deployment,
    params: LinkParams,
    warmup: u32,
    queues: [Vec<VecDeque<u32>>; 2],
    backlog: [u64; 2],
    arrival_sampler: [Option<Geometric>; 2],
    next_arrival: [u64; 2],
    slot: u64,
    pub counters: [Vec<UserCounters>; 2],
    /// Σ over measured slots of the total queue length, sampled after
    /// arrivals and before service.
    pub queue_samples: [u64; 2],
    pub measured_slots: u64,
    /// Lifetime totals, warm-up included.
    pub total_arrivals: [u64; 2],
    pub total_delivered: [u64; 2],
    cell_dl: Vec<bool>,
    links: Vec<Link>,
    interior: Vec<Vec<u32>>,
    edge: Vec<Vec<u32>>,
    candidates: Vec<u32>,
    perm: Vec<u32>,
    leftovers: Vec<Vec<u32>>,
    vacated: Vec<Vec<u32>>,
    edge_pool: Vec<Vec<u32>>,
    signal: Vec<f64>,
    coupling: Vec<f64>,
    /// 1.0 for members of the settled set, 0.0 otherwise.
    member: Vec<f64>,
    sirs: Vec<f64>,
    transmitted: Vec<bool>,
}

/// Membership rounds when settling an interior sub-band.
const SETTLE_ROUNDS: usize = 8;

const DL: usize = 0;
const UL: usize = 1;

impl<'a> Network<'a> {
    pub fn new<G: Rng>(dep: &'a Deployment, params: LinkParams, warmup: u32, rng: &mut G) -> Self {
        let n = dep.users.len();
        let cells = dep.cells();
        let arrival_sampler = params.arrival.map(|xi| if xi > 0.0 { Geometric::new(xi).ok() } else { None });
        let mut next_arrival = [u64::MAX; 2];
        for d in [DL, UL] {
            if let Some(g) = &arrival_sampler[d] {
                next_arrival[d] = g.sample(rng);
            }
        }
        Self {
            dep,
            params,
            warmup,
            queues: [vec![VecDeque::new(); n], vec![VecDeque::new(); n]],
            backlog: [0; 2],
            arrival_sampler,
            next_arrival,
            slot: 0,
            counters: [vec![UserCounters::default(); n], vec![UserCounters::default(); n]],
            queue_samples: [0; 2],
            measured_slots: 0,
            total_arrivals: [0; 2],
            total_delivered: [0; 2],
            cell_dl: vec![false; cells],
            links: Vec::new(),
            interior: vec![Vec::new(); params.interior_subbands],
            edge: vec![Vec::new(); params.edge_subbands * params.reuse_factor],
            candidates: Vec::new(),
            perm: Vec::new(),
            leftovers: vec![Vec::new(); cells],
            vacated: vec![Vec::new(); cells],
            edge_pool: vec![Vec::new(); cells],
            signal: Vec::new(),
            coupling: Vec::new(),
            member: Vec::new(),
            sirs: Vec::new(),
            transmitted: Vec::new(),
        }
    }

    pub fn backlog(&self) -> [u64; 2] {
        self.backlog
    }

    pub fn queue_len(&self, dir: usize, user: u32) -> usize {
        self.queues[dir][user as usize].len()
    }

    fn fading<G: Rng>(&self, rng: &mut G) -> f64 {
        if self.params.fading {
            rng.sample(Exp1)
        } else {
            1.0
        }
    }

    fn power(&self, dl: bool) -> f64 {
        if dl {
            1.0
        } else {
            self.params.power_ratio
        }
    }

    /// Path gain from the transmitter of `tx` to the receiver of `rx`.
    fn gain(&self, tx: &Link, rx: &Link) -> f64 {
        match (tx.dl, rx.dl) {
            (true, true) => self.dep.sap_user(tx.cell, rx.user),
            (false, true) => self.dep.user_user(tx.user, rx.user),
            (true, false) => self.dep.sap_sap(tx.cell, rx.cell),
            (false, false) => self.dep.sap_user(rx.cell, tx.user),
        }
    }

    /// SIR of `rx` against every link of `field` from another cell.
    fn sir<G: Rng>(&self, rx: &Link, field: &[u32], rng: &mut G) -> f64 {
        let signal = self.power(rx.dl) * self.fading(rng) * self.dep.sap_user(rx.cell, rx.user);
        let mut interference = 0.0;
        for &j in field {
            let tx = &self.links[j as usize];
            if tx.cell == rx.cell {
                continue;
            }
            interference += self.power(tx.dl) * self.fading(rng) * self.gain(tx, rx);
        }
        if interference == 0.0 {
            f64::INFINITY
        } else {
            signal / interference
        }
    }

    fn arrivals<G: Rng>(&mut self, rng: &mut G, record: bool) {
        let n = self.dep.users.len() as u64;
        if n == 0 {
            return;
        }
        let base = self.slot * n;
        for d in [DL, UL] {
            let Some(geo) = self.arrival_sampler[d] else { continue };
            while self.next_arrival[d] < base + n {
                let u = (self.next_arrival[d] - base) as usize;
                self.queues[d][u].push_back(self.slot as u32);
                self.backlog[d] += 1;
                self.total_arrivals[d] += 1;
                if record {
                    self.counters[d][u].arrivals += 1;
                }
                self.next_arrival[d] += 1 + geo.sample(rng);
            }
        }
    }

    fn shuffle_prefix<G: Rng>(v: &mut [u32], take: usize, rng: &mut G) {
        for i in 0..take.min(v.len()) {
            let j = rng.random_range(i..v.len());
            v.swap(i, j);
        }
    }

    /// Splits the trials on interior sub-band `s` into a set `S` whose
    /// members all reach `θ` against the other members of `S`, and
    /// non-members. Fading is drawn once per (transmitter, receiver) for the
    /// slot. Membership is iterated from "everyone transmits"; the last
    /// allowed round only removes members, which keeps every member's SIR at
    /// or above `θ`.
    fn settle_interior<G: Rng>(&mut self, s: usize, rng: &mut G) {
        let n = self.interior[s].len();
        if n == 0 {
            return;
        }
        self.signal.clear();
        self.coupling.clear();
        self.coupling.resize(n * n, 0.0);
        for a in 0..n {
            let rx = self.links[self.interior[s][a] as usize];
            self.signal.push(self.power(rx.dl) * self.fading(rng) * self.dep.sap_user(rx.cell, rx.user));
            for b in 0..n {
                let tx = &self.links[self.interior[s][b] as usize];
                if tx.cell != rx.cell {
                    self.coupling[a * n + b] = self.power(tx.dl) * self.fading(rng) * self.gain(tx, &rx);
                }
            }
        }
        self.member.clear();
        self.member.resize(n, 1.0);
        self.sirs.clear();
        self.sirs.resize(n, 0.0);
        let theta = self.params.theta;
        let mut settled = false;
        for round in 0..SETTLE_ROUNDS {
            self.member_sirs(n);
            let last = round + 1 == SETTLE_ROUNDS;
            let mut changed = false;
            for a in 0..n {
                let was = self.member[a] == 1.0;
                let pass = self.sirs[a] >= theta;
                let next = if last { was && pass } else { pass };
                changed |= next != was;
                self.member[a] = if next { 1.0 } else { 0.0 };
            }
            if !changed {
                settled = true;
                break;
            }
        }
        if !settled {
            self.member_sirs(n);
        }
        for a in 0..n {
            let i = self.interior[s][a] as usize;
            self.links[i].sir = self.sirs[a];
            self.links[i].class = if self.member[a] == 1.0 { Class::Interior } else { Class::Edge };
        }
    }

    /// SIR of every trial on the current sub-band against the current members.
    fn member_sirs(&mut self, n: usize) {
        for a in 0..n {
            let row = &self.coupling[a * n..(a + 1) * n];
            let interference: f64 = row.iter().zip(&self.member).map(|(x, m)| x * m).sum();
            self.sirs[a] = if interference == 0.0 {
                f64::INFINITY
            } else {
                self.signal[a] / interference
            };
        }
    }

    /// Advances one slot.
    pub fn step<G: Rng>(&mut self, rng: &mut G) {
        let record = self.slot >= self.warmup as u64;
        let p = self.params;
        let m = p.interior_subbands;
        let l = p.edge_subbands;

        for c in 0..self.cell_dl.len() {
            self.cell_dl[c] = rng.random_bool(p.dl_probability);
        }
        self.arrivals(rng, record);
        if record {
            self.queue_samples[DL] += self.backlog[DL];
            self.queue_samples[UL] += self.backlog[UL];
            self.measured_slots += 1;
        }

        self.links.clear();
        self.interior.iter_mut().for_each(Vec::clear);
        self.edge.iter_mut().for_each(Vec::clear);

        // candidate selection and interior trials
        for c in 0..self.dep.cells() {
            self.leftovers[c].clear();
            self.vacated[c].clear();
            self.edge_pool[c].clear();
            let dl = self.cell_dl[c];
            let d = if dl { DL } else { UL };
            self.candidates.clear();
            for &u in &self.dep.cell_users[c] {
                if !self.queues[d][u as usize].is_empty() {
                    self.candidates.push(u);
                }
            }
            let n = self.candidates.len().min(m + l);
            Self::shuffle_prefix(&mut self.candidates, n, rng);
            let ni = n.min(m);
            self.perm.clear();
            self.perm.extend(0..m as u32);
            Self::shuffle_prefix(&mut self.perm, ni, rng);
            for i in 0..ni {
                let s = self.perm[i] as usize;
                self.interior[s].push(self.links.len() as u32);
                self.links.push(Link {
                    user: self.candidates[i],
                    cell: c as u32,
                    dl,
                    class: Class::Interior,
                    sir: 0.0,
                    band: s as u32,
                });
            }
            self.leftovers[c].extend_from_slice(&self.candidates[ni..n]);
        }

        let trials = self.links.len();
        for s in 0..m {
            self.settle_interior(s, rng);
        }
        for s in 0..m {
            let mut k = 0;
            while k < self.interior[s].len() {
                let i = self.interior[s][k];
                let link = &mut self.links[i as usize];
                if link.class == Class::Edge {
                    link.band = NO_BAND;
                    self.vacated[link.cell as usize].push(s as u32);
                    self.edge_pool[link.cell as usize].push(i);
                    self.interior[s].swap_remove(k);
                } else {
                    k += 1;
                }
            }
        }

        // one spillover round on vacated interior sub-bands, against the
        // settled interior field
        for c in 0..self.dep.cells() {
            let pairs = self.leftovers[c].len().min(self.vacated[c].len());
            for k in 0..pairs {
                let s = self.vacated[c][k] as usize;
                let mut link = Link {
                    user: self.leftovers[c][k],
                    cell: c as u32,
                    dl: self.cell_dl[c],
                    class: Class::Interior,
                    sir: 0.0,
                    band: s as u32,
                };
                link.sir = self.sir(&link, &self.interior[s], rng);
                if link.sir < p.theta {
                    link.class = Class::Edge;
                    link.band = NO_BAND;
                    self.edge_pool[c].push(self.links.len() as u32);
                }
                self.links.push(link);
            }
        }

        // edge sub-bands of the cell's reuse group
        for c in 0..self.dep.cells() {
            let pool = self.edge_pool[c].len();
            if pool == 0 {
                continue;
            }
            let served = pool.min(l);
            self.perm.clear();
            self.perm.extend(0..l as u32);
            Self::shuffle_prefix(&mut self.perm, served, rng);
            let group = self.dep.edge_group[c] as usize;
            for k in 0..pool {
                let i = self.edge_pool[c][k];
                if k < served {
                    let e = group * l + self.perm[k] as usize;
                    self.links[i as usize].band = (m + e) as u32;
                    self.edge[e].push(i);
                }
            }
        }
        for s in 0..self.edge.len() {
            for k in 0..self.edge[s].len() {
                let i = self.edge[s][k] as usize;
                let sir = self.sir(&self.links[i], &self.edge[s], rng);
                self.links[i].sir = sir;
            }
        }

        // outcomes
        let mut transmitted = std::mem::take(&mut self.transmitted);
        transmitted.clear();
        transmitted.resize(self.links.len(), false);
        for s in 0..self.edge.len() {
            for &i in &self.edge[s] {
                transmitted[i as usize] = true;
            }
        }
        for (i, link) in self.links.iter().enumerate() {
            if link.class == Class::Interior {
                transmitted[i] = true;
            }
        }
        for (i, &sent) in transmitted.iter().enumerate() {
            let link = self.links[i];
            let d = if link.dl { DL } else { UL };
            let u = link.user as usize;
            let success = sent && link.sir >= p.decode;
            if record {
                let ctr = &mut self.counters[d][u];
                ctr.trials += 1;
                match link.class {
                    Class::Interior => {
                        ctr.interior += 1;
                        ctr.interior_success += success as u32;
                    }
                    Class::Edge if sent => {
                        ctr.edge_tx += 1;
                        ctr.edge_success += success as u32;
                    }
                    Class::Edge => ctr.edge_blocked += 1,
                }
            }
            if success {
                let arrived = self.queues[d][u].pop_front().expect("served queue is non-empty");
                self.backlog[d] -= 1;
                self.total_delivered[d] += 1;
                if arrived as u64 >= self.warmup as u64 {
                    let ctr = &mut self.counters[d][u];
                    ctr.delivered += 1;
                    ctr.sojourn_sum += self.slot - arrived as u64 + 1;
                }
            }
        }
        self.transmitted = transmitted;
        debug_assert!(self.links.len() >= trials);
        self.slot += 1;
    }
}

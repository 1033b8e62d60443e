//! Scenario, simulation and optimizer parameters.
//!
//! Powers are given in dBm and SIR thresholds in dB on every external
//! surface (JSON files, CLI overrides). [`RawScenario::validate`] converts
//! them once; everything downstream of [`ScenarioConfig`] is linear-scale.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, FieldViolation};

/// Transmission direction of a cell in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Downlink,
    Uplink,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Downlink, Direction::Uplink];

    pub fn index(self) -> usize {
        match self {
            Direction::Downlink => 0,
            Direction::Uplink => 1,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Direction::Downlink => "dl",
            Direction::Uplink => "ul",
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Scenario parameters as they appear in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    /// SAPs per m².
    pub sap_density: f64,
    /// Users per m².
    pub user_density: f64,
    /// dBm.
    pub sap_power: f64,
    /// dBm.
    pub user_power: f64,
    pub pathloss_exponent: f64,
    pub total_subbands: i64,
    pub reuse_factor: i64,
    pub edge_subbands: i64,
    /// dB.
    pub classification_threshold: f64,
    /// dB.
    pub decode_threshold: f64,
    /// Packets per slot per user.
    pub dl_arrival: f64,
    pub ul_arrival: f64,
    pub max_users: i64,
    /// Meters.
    pub cell_radius: f64,
}

impl Default for RawScenario {
    /// The reference operating point used throughout the evaluation.
    fn default() -> Self {
        Self {
            sap_density: 1e-4,
            user_density: 1e-2,
            sap_power: 30.0,
            user_power: 23.0,
            pathloss_exponent: 3.8,
            total_subbands: 20,
            reuse_factor: 2,
            edge_subbands: 1,
            classification_threshold: 0.0,
            decode_threshold: 1.0,
            dl_arrival: 0.08,
            ul_arrival: 0.04,
            max_users: 50,
            cell_radius: 70.0,
        }
    }
}

struct Violations(Vec<FieldViolation>);

impl Violations {
    fn check(&mut self, ok: bool, field: &str, message: impl Into<String>) {
        if !ok {
            self.0.push(FieldViolation {
                field: field.to_string(),
                message: message.into(),
            });
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations: self.0 })
        }
    }
}

impl RawScenario {
    /// Checks every invariant and converts to linear units.
    pub fn validate(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut v = Violations(Vec::new());
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        v.check(finite_pos(self.sap_density), "sap_density", "must be > 0");
        v.check(finite_pos(self.user_density), "user_density", "must be > 0");
        v.check(self.sap_power.is_finite(), "sap_power", "must be finite (dBm)");
        v.check(self.user_power.is_finite(), "user_power", "must be finite (dBm)");
        v.check(
            self.pathloss_exponent.is_finite() && self.pathloss_exponent > 2.0,
            "pathloss_exponent",
            "must be > 2 for the interference integrals to converge",
        );
        v.check(
            self.classification_threshold.is_finite(),
            "classification_threshold",
            "must be finite (dB)",
        );
        v.check(self.decode_threshold.is_finite(), "decode_threshold", "must be finite (dB)");
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        v.check(prob(self.dl_arrival), "dl_arrival", "must lie in [0, 1]");
        v.check(prob(self.ul_arrival), "ul_arrival", "must lie in [0, 1]");
        v.check(
            !(prob(self.dl_arrival) && prob(self.ul_arrival)) || self.dl_arrival + self.ul_arrival > 0.0,
            "dl_arrival",
            "dl_arrival + ul_arrival must be > 0",
        );
        v.check(self.reuse_factor >= 1, "reuse_factor", "must be >= 1");
        v.check(self.edge_subbands >= 0, "edge_subbands", "must be >= 0");
        v.check(self.total_subbands >= 1, "total_subbands", "must be >= 1");
        if self.reuse_factor >= 1 && self.edge_subbands >= 0 {
            v.check(
                self.reuse_factor * self.edge_subbands < self.total_subbands,
                "edge_subbands",
                format!(
                    "reuse_factor * edge_subbands = {} leaves no interior sub-band out of {}",
                    self.reuse_factor * self.edge_subbands,
                    self.total_subbands
                ),
            );
        }
        v.check(self.max_users >= 1, "max_users", "must be >= 1");
        v.check(finite_pos(self.cell_radius), "cell_radius", "must be > 0");
        v.finish()?;

        Ok(ScenarioConfig {
            sap_density: self.sap_density,
            user_density: self.user_density,
            sap_power: dbm_to_watts(self.sap_power),
            user_power: dbm_to_watts(self.user_power),
            pathloss_exponent: self.pathloss_exponent,
            total_subbands: self.total_subbands as usize,
            reuse_factor: self.reuse_factor as usize,
            edge_subbands: self.edge_subbands as usize,
            classification_threshold: db_to_linear(self.classification_threshold),
            decode_threshold: db_to_linear(self.decode_threshold),
            dl_arrival: self.dl_arrival,
            ul_arrival: self.ul_arrival,
            max_users: self.max_users as usize,
            cell_radius: self.cell_radius,
        })
    }
}

/// Validated scenario, linear scale. Construct through [`RawScenario::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    sap_density: f64,
    user_density: f64,
    sap_power: f64,
    user_power: f64,
    pathloss_exponent: f64,
    total_subbands: usize,
    reuse_factor: usize,
    edge_subbands: usize,
    classification_threshold: f64,
    decode_threshold: f64,
    dl_arrival: f64,
    ul_arrival: f64,
    max_users: usize,
    cell_radius: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        RawScenario::default().validate().expect("defaults are valid")
    }
}

impl ScenarioConfig {
    pub fn sap_density(&self) -> f64 {
        self.sap_density
    }
    pub fn user_density(&self) -> f64 {
        self.user_density
    }
    /// Watts.
    pub fn sap_power(&self) -> f64 {
        self.sap_power
    }
    /// Watts.
    pub fn user_power(&self) -> f64 {
        self.user_power
    }
    pub fn pathloss_exponent(&self) -> f64 {
        self.pathloss_exponent
    }
    pub fn total_subbands(&self) -> usize {
        self.total_subbands
    }
    pub fn reuse_factor(&self) -> usize {
        self.reuse_factor
    }
    pub fn edge_subbands(&self) -> usize {
        self.edge_subbands
    }
    /// Linear SIR.
    pub fn classification_threshold(&self) -> f64 {
        self.classification_threshold
    }
    /// Linear SIR.
    pub fn decode_threshold(&self) -> f64 {
        self.decode_threshold
    }
    pub fn dl_arrival(&self) -> f64 {
        self.dl_arrival
    }
    pub fn ul_arrival(&self) -> f64 {
        self.ul_arrival
    }
    pub fn arrival(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Downlink => self.dl_arrival,
            Direction::Uplink => self.ul_arrival,
        }
    }
    pub fn max_users(&self) -> usize {
        self.max_users
    }
    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    /// `P_u / P_s`.
    pub fn power_ratio(&self) -> f64 {
        self.user_power / self.sap_power
    }

    pub fn derive(&self) -> DerivedParams {
        let interior_subbands = self.total_subbands - self.reuse_factor * self.edge_subbands;
        let dl_probability = self.dl_arrival / (self.dl_arrival + self.ul_arrival);
        DerivedParams {
            interior_subbands,
            dl_probability,
            ul_probability: 1.0 - dl_probability,
        }
    }

    /// Back to file units (dBm, dB).
    pub fn to_raw(&self) -> RawScenario {
        RawScenario {
            sap_density: self.sap_density,
            user_density: self.user_density,
            sap_power: watts_to_dbm(self.sap_power),
            user_power: watts_to_dbm(self.user_power),
            pathloss_exponent: self.pathloss_exponent,
            total_subbands: self.total_subbands as i64,
            reuse_factor: self.reuse_factor as i64,
            edge_subbands: self.edge_subbands as i64,
            classification_threshold: linear_to_db(self.classification_threshold),
            decode_threshold: linear_to_db(self.decode_threshold),
            dl_arrival: self.dl_arrival,
            ul_arrival: self.ul_arrival,
            max_users: self.max_users as i64,
            cell_radius: self.cell_radius,
        }
    }

    /// Same scenario at another FFR operating point (θ in dB, L edge sub-bands).
    pub fn with_ffr(&self, theta_db: f64, edge_subbands: usize) -> Result<Self, ConfigError> {
        let mut raw = self.to_raw();
        raw.classification_threshold = theta_db;
        raw.edge_subbands = edge_subbands as i64;
        let mut cfg = raw.validate()?;
        // keep the untouched fields bit-exact rather than dB round-tripped
        cfg.sap_power = self.sap_power;
        cfg.user_power = self.user_power;
        cfg.decode_threshold = self.decode_threshold;
        Ok(cfg)
    }

    /// The same network without FFR: one reuse group, no edge sub-bands and
    /// a zero (linear) classification threshold, so every user is interior
    /// on all `Γ` sub-bands.
    pub fn without_ffr(&self) -> Self {
        let mut cfg = self.clone();
        cfg.reuse_factor = 1;
        cfg.edge_subbands = 0;
        cfg.classification_threshold = 0.0;
        cfg
    }

    pub fn with_decode_threshold_db(&self, t_db: f64) -> Self {
        let mut cfg = self.clone();
        cfg.decode_threshold = db_to_linear(t_db);
        cfg
    }

    pub fn with_arrivals(&self, dl: f64, ul: f64) -> Result<Self, ConfigError> {
        let mut raw = self.to_raw();
        raw.dl_arrival = dl;
        raw.ul_arrival = ul;
        let mut cfg = raw.validate()?;
        cfg.sap_power = self.sap_power;
        cfg.user_power = self.user_power;
        cfg.decode_threshold = self.decode_threshold;
        cfg.classification_threshold = self.classification_threshold;
        Ok(cfg)
    }
}

/// Quantities that follow directly from a [`ScenarioConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// `M = Γ − Δ·L`.
    pub interior_subbands: usize,
    /// `p_D = ξ_D / (ξ_D + ξ_U)`.
    pub dl_probability: f64,
    pub ul_probability: f64,
}

impl DerivedParams {
    pub fn tx_probability(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Downlink => self.dl_probability,
            Direction::Uplink => self.ul_probability,
        }
    }
}

/// Monte Carlo protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Half the side of the square simulation window, meters.
    pub half_side: f64,
    pub realizations: usize,
    pub slots_per_realization: usize,
    pub master_seed: u64,
    pub distance_bins: usize,
    /// Wrap distances around the window edges.
    #[serde(default = "default_torus")]
    pub torus: bool,
    /// Leading fraction of slots excluded from every metric.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
}

fn default_torus() -> bool {
    true
}

fn default_warmup() -> f64 {
    0.1
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SimConfig {
    /// 500 realizations of 2000 slots on an 800 m × 800 m torus.
    pub fn desk() -> Self {
        Self {
            half_side: 400.0,
            realizations: 500,
            slots_per_realization: 2000,
            master_seed: 0x5eed_f00d,
            distance_bins: 14,
            torus: true,
            warmup_fraction: 0.1,
        }
    }

    /// 5000 realizations of 10000 slots on a 1600 m × 1600 m window.
    pub fn paper() -> Self {
        Self {
            half_side: 800.0,
            realizations: 5000,
            slots_per_realization: 10_000,
            ..Self::desk()
        }
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn area(&self) -> f64 {
        self.side() * self.side()
    }

    pub fn warmup_slots(&self) -> usize {
        (self.slots_per_realization as f64 * self.warmup_fraction).floor() as usize
    }

    /// Validates the protocol; returns non-fatal warnings.
    pub fn validate(&self, scenario: &ScenarioConfig) -> Result<Vec<String>, ConfigError> {
        let mut v = Violations(Vec::new());
        v.check(
            self.half_side.is_finite() && self.half_side > 0.0,
            "half_side",
            "must be > 0",
        );
        v.check(self.realizations >= 1, "realizations", "must be >= 1");
        v.check(self.slots_per_realization >= 1, "slots_per_realization", "must be >= 1");
        v.check(self.distance_bins >= 1, "distance_bins", "must be >= 1");
        v.check(
            (0.0..1.0).contains(&self.warmup_fraction),
            "warmup_fraction",
            "must lie in [0, 1)",
        );
        v.finish()?;
        let mut warnings = Vec::new();
        let expected_saps = scenario.sap_density() * self.area();
        if expected_saps < 50.0 {
            warnings.push(format!(
                "window holds only {expected_saps:.1} SAPs on average (< 50); edge effects will bias results"
            ));
        }
        Ok(warnings)
    }
}

/// Exhaustive-search grid and throughput floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// dB.
    pub theta_grid: Vec<f64>,
    pub l_candidates: Vec<usize>,
    /// Packets per slot.
    pub min_mpt_dl: f64,
    pub min_mpt_ul: f64,
}

/// Clustered D-TDD benchmark throughput, packets/slot (DL, UL).
pub const CLUSTERED_MPT: (f64, f64) = (0.456, 0.159);

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            theta_grid: vec![-1.0, 0.0, 1.0, 2.0, 3.0, 4.0],
            l_candidates: vec![1, 3, 5, 7],
            min_mpt_dl: 0.5 * CLUSTERED_MPT.0,
            min_mpt_ul: 0.5 * CLUSTERED_MPT.1,
        }
    }
}

impl OptimizerConfig {
    pub fn min_mpt(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Downlink => self.min_mpt_dl,
            Direction::Uplink => self.min_mpt_ul,
        }
    }

    pub fn validate(&self, scenario: &ScenarioConfig) -> Result<(), ConfigError> {
        let mut v = Violations(Vec::new());
        v.check(!self.theta_grid.is_empty(), "theta_grid", "must not be empty");
        v.check(
            self.theta_grid.iter().all(|t| t.is_finite()),
            "theta_grid",
            "entries must be finite (dB)",
        );
        v.check(!self.l_candidates.is_empty(), "l_candidates", "must not be empty");
        for &l in &self.l_candidates {
            v.check(
                scenario.reuse_factor() * l < scenario.total_subbands(),
                "l_candidates",
                format!("L = {l} leaves no interior sub-band"),
            );
        }
        v.check(
            self.min_mpt_dl.is_finite() && self.min_mpt_dl >= 0.0,
            "min_mpt_dl",
            "must be >= 0",
        );
        v.check(
            self.min_mpt_ul.is_finite() && self.min_mpt_ul >= 0.0,
            "min_mpt_ul",
            "must be >= 0",
        );
        v.finish()
    }
}

/// Layout of a JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub scenario: RawScenario,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl ExperimentFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_defaults_validate() {
        let cfg = RawScenario::default().validate().unwrap();
        assert!((cfg.sap_power() - 1.0).abs() < 1e-15);
        assert!((cfg.user_power() - 0.199_526_231_496_887_9).abs() < 1e-12);
        assert!((cfg.decode_threshold() - 1.258_925_411_794_167_2).abs() < 1e-12);
        assert_eq!(cfg.classification_threshold(), 1.0);
    }

    #[test]
    fn alpha_two_rejected() {
        let raw = RawScenario {
            pathloss_exponent: 2.0,
            ..RawScenario::default()
        };
        let err = raw.validate().unwrap_err();
        assert_eq!(err.fields().collect::<Vec<_>>(), vec!["pathloss_exponent"]);
    }

    #[test]
    fn no_interior_subband_rejected() {
        let raw = RawScenario {
            edge_subbands: 10,
            ..RawScenario::default()
        };
        let err = raw.validate().unwrap_err();
        assert!(err.fields().any(|f| f == "edge_subbands"));
    }

    #[test]
    fn violations_are_aggregated() {
        let raw = RawScenario {
            sap_density: -1.0,
            pathloss_exponent: 1.5,
            dl_arrival: 1.5,
            max_users: 0,
            cell_radius: 0.0,
            ..RawScenario::default()
        };
        let err = raw.validate().unwrap_err();
        let fields: Vec<_> = err.fields().collect();
        for f in ["sap_density", "pathloss_exponent", "dl_arrival", "max_users", "cell_radius"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn zero_traffic_rejected() {
        let raw = RawScenario {
            dl_arrival: 0.0,
            ul_arrival: 0.0,
            ..RawScenario::default()
        };
        assert!(raw.validate().is_err());
    }

    #[test]
    fn derived_parameters() {
        let d = ScenarioConfig::default().derive();
        assert_eq!(d.interior_subbands, 18);
        assert!((d.dl_probability - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.dl_probability + d.ul_probability - 1.0).abs() < 1e-15);

        let sym = ScenarioConfig::default().with_arrivals(0.05, 0.05).unwrap().derive();
        assert_eq!(sym.dl_probability, 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(ExperimentFile::default()).unwrap();
        v["scenario"]["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentFile>(v).is_err());

        let mut v = serde_json::to_value(ExperimentFile::default()).unwrap();
        v["extra"] = serde_json::json!({});
        assert!(serde_json::from_value::<ExperimentFile>(v).is_err());
    }

    #[test]
    fn file_round_trip() {
        let file = ExperimentFile::default();
        let text = serde_json::to_string_pretty(&file).unwrap();
        assert_eq!(ExperimentFile::from_json(&text).unwrap(), file);
    }

    #[test]
    fn with_ffr_changes_only_ffr_fields() {
        let base = ScenarioConfig::default();
        let moved = base.with_ffr(1.0, 5).unwrap();
        assert_eq!(moved.edge_subbands(), 5);
        assert_eq!(moved.derive().interior_subbands, 10);
        assert_eq!(moved.sap_power(), base.sap_power());
        assert_eq!(moved.decode_threshold(), base.decode_threshold());
        assert!(base.with_ffr(0.0, 10).is_err());
    }

    #[test]
    fn small_window_warns() {
        let sim = SimConfig {
            half_side: 200.0,
            ..SimConfig::desk()
        };
        let warnings = sim.validate(&ScenarioConfig::default()).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(SimConfig::desk().validate(&ScenarioConfig::default()).unwrap().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn db_round_trip(db in -60.0f64..60.0) {
                let back = linear_to_db(db_to_linear(db));
                prop_assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
                let back = watts_to_dbm(dbm_to_watts(db));
                prop_assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
            }

            #[test]
            fn dl_probability_increases_with_dl_load(a in 0.0f64..0.9, step in 1e-3f64..0.1, ul in 1e-3f64..1.0) {
                let base = ScenarioConfig::default();
                let lo = base.with_arrivals(a, ul).unwrap().derive().dl_probability;
                let hi = base.with_arrivals(a + step, ul).unwrap().derive().dl_probability;
                prop_assert!(hi > lo);
            }
        }
    }
}

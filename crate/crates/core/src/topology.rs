//! Static network structure and the seeded random-stream hierarchy.
//!
//! Every stochastic draw in a run descends from [`NetworkConfig::master_seed`]
//! through [`RngSet::stream`], keyed by a purpose label and the entity that
//! consumes the stream. Two streams with different keys never share state, so
//! changing how often one entity draws cannot shift another entity's sequence.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mac::{self, JammerPatternMode};

/// Random substream handed out by [`RngSet`].
pub type Stream = ChaCha8Rng;

/// Closed interval of transmit powers in dBm, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbmRange(pub f64, pub f64);

impl DbmRange {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !self.0.is_finite() || !self.1.is_finite() {
            return Err(Error::config(field, "bounds must be finite"));
        }
        if self.0 > self.1 {
            return Err(Error::config(
                field,
                format!("lower bound {} exceeds upper bound {}", self.0, self.1),
            ));
        }
        Ok(())
    }
}

/// How the per-slot noise variance at each cluster head is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Constant `noise_variance` in linear units.
    #[default]
    Fixed,
    /// Redrawn every slot, uniform in `noise_dbm_range` then converted to linear.
    UniformDbm,
}

/// How pUE transmission bits are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PueScheduleMode {
    /// Fresh Bernoulli(`pue_tx_prob`) draw in every slot.
    #[default]
    Bernoulli,
    /// One Bernoulli pattern per pUE drawn at build time and repeated every frame.
    FixedPattern,
}

/// Every tunable of the simulated network. Field names double as the
/// configuration-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_cells: usize,
    /// pUEs per cell.
    pub pue_count: usize,
    /// Jammers per cell.
    pub jammer_count: usize,
    /// Cluster-head antennas L.
    pub antennas: usize,
    /// Slots per frame S.
    pub frame_slots: usize,
    /// Frame horizon F.
    pub total_frames: usize,
    /// Bernoulli parameter of the pUE schedules.
    pub pue_tx_prob: f64,
    pub pue_power_dbm: DbmRange,
    pub jammer_power_dbm: DbmRange,
    pub iue_power_dbm: DbmRange,
    /// Linear noise variance used in [`NoiseMode::Fixed`].
    pub noise_variance: f64,
    pub noise_mode: NoiseMode,
    pub noise_dbm_range: DbmRange,
    pub master_seed: u64,
    pub jammer_pattern_mode: JammerPatternMode,
    /// Inactive slots per jammer, one entry per jammer index (shared by all
    /// cells). Drawn from the seed when absent.
    pub jammer_off_slots: Option<Vec<usize>>,
    /// Permit `S_off >= S_on`.
    pub allow_long_off: bool,
    pub pue_schedule_mode: PueScheduleMode,
    /// Explicit per-pUE frame patterns (one entry per pUE index, shared by all
    /// cells). Overrides `pue_schedule_mode` when present.
    pub pue_patterns: Option<Vec<Vec<u8>>>,
    /// Cancel already-decoded intra-cell UEs in descending received-power order.
    pub ordered_sic: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_cells: 1,
            pue_count: 2,
            jammer_count: 1,
            antennas: 4,
            frame_slots: 5,
            total_frames: 1000,
            pue_tx_prob: 0.5,
            pue_power_dbm: DbmRange(20.0, 25.0),
            jammer_power_dbm: DbmRange(20.0, 30.0),
            iue_power_dbm: DbmRange(20.0, 25.0),
            noise_variance: 1.0,
            noise_mode: NoiseMode::Fixed,
            noise_dbm_range: DbmRange(2.0, 5.0),
            master_seed: 1,
            jammer_pattern_mode: JammerPatternMode::PeriodicOnOff,
            jammer_off_slots: None,
            allow_long_off: false,
            pue_schedule_mode: PueScheduleMode::Bernoulli,
            pue_patterns: None,
            ordered_sic: false,
        }
    }
}

impl NetworkConfig {
    /// Seven-cell roster with 20 pUEs and 3 jammers per cell.
    pub fn full_scale() -> Self {
        Self {
            num_cells: 7,
            pue_count: 20,
            jammer_count: 3,
            frame_slots: 20,
            total_frames: 3000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_cells == 0 {
            return Err(Error::config("num_cells", "at least one cell is required"));
        }
        if self.frame_slots == 0 {
            return Err(Error::config("frame_slots", "a frame needs at least one slot"));
        }
        if self.total_frames == 0 {
            return Err(Error::config("total_frames", "at least one frame is required"));
        }
        if self.antennas == 0 {
            return Err(Error::config("antennas", "at least one antenna is required"));
        }
        if !(0.0..=1.0).contains(&self.pue_tx_prob) {
            return Err(Error::config(
                "pue_tx_prob",
                format!("{} is not a probability", self.pue_tx_prob),
            ));
        }
        self.pue_power_dbm.validate("pue_power_dbm")?;
        self.jammer_power_dbm.validate("jammer_power_dbm")?;
        self.iue_power_dbm.validate("iue_power_dbm")?;
        self.noise_dbm_range.validate("noise_dbm_range")?;
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(Error::config("noise_variance", "must be positive and finite"));
        }
        if let Some(off) = &self.jammer_off_slots {
            if off.len() != self.jammer_count {
                return Err(Error::config(
                    "jammer_off_slots",
                    format!("expected {} entries, got {}", self.jammer_count, off.len()),
                ));
            }
            for &s_off in off {
                if s_off > self.frame_slots {
                    return Err(Error::config(
                        "jammer_off_slots",
                        format!("{s_off} exceeds the frame size {}", self.frame_slots),
                    ));
                }
                let s_on = self.frame_slots - s_off;
                if !self.allow_long_off && s_off >= s_on {
                    return Err(Error::config(
                        "jammer_off_slots",
                        format!("S_off = {s_off} must be below S_on = {s_on}"),
                    ));
                }
            }
        }
        if let Some(patterns) = &self.pue_patterns {
            if patterns.len() != self.pue_count {
                return Err(Error::config(
                    "pue_patterns",
                    format!("expected {} patterns, got {}", self.pue_count, patterns.len()),
                ));
            }
            for p in patterns {
                if p.len() != self.frame_slots {
                    return Err(Error::config(
                        "pue_patterns",
                        format!("pattern length {} differs from frame size {}", p.len(), self.frame_slots),
                    ));
                }
                if p.iter().any(|&b| b > 1) {
                    return Err(Error::config("pue_patterns", "entries must be 0 or 1"));
                }
            }
        }
        Ok(())
    }

    /// Legitimate UEs per cell: the pUEs plus the single iUE.
    pub fn ues_per_cell(&self) -> usize {
        self.pue_count + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Pue,
    Iue,
    Jammer,
    ClusterHead,
}

impl EntityKind {
    fn tag(self) -> u8 {
        match self {
            EntityKind::Pue => 0,
            EntityKind::Iue => 1,
            EntityKind::Jammer => 2,
            EntityKind::ClusterHead => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId {
    pub cell: usize,
    pub kind: EntityKind,
    pub index: usize,
}

impl EntityId {
    pub fn pue(cell: usize, index: usize) -> Self {
        Self { cell, kind: EntityKind::Pue, index }
    }

    pub fn iue(cell: usize) -> Self {
        Self { cell, kind: EntityKind::Iue, index: 0 }
    }

    pub fn jammer(cell: usize, index: usize) -> Self {
        Self { cell, kind: EntityKind::Jammer, index }
    }

    pub fn cluster_head(cell: usize) -> Self {
        Self { cell, kind: EntityKind::ClusterHead, index: 0 }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            EntityKind::Pue => "pUE",
            EntityKind::Iue => "iUE",
            EntityKind::Jammer => "J",
            EntityKind::ClusterHead => "CH",
        };
        write!(f, "{kind}[cell {}]#{}", self.cell, self.index)
    }
}

/// Registered stream purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Channel,
    Power,
    Schedule,
    Exploration,
    ReplaySampling,
    WeightInit,
}

impl Purpose {
    pub const ALL: [Purpose; 6] = [
        Purpose::Channel,
        Purpose::Power,
        Purpose::Schedule,
        Purpose::Exploration,
        Purpose::ReplaySampling,
        Purpose::WeightInit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Purpose::Channel => "channel",
            Purpose::Power => "power",
            Purpose::Schedule => "schedule",
            Purpose::Exploration => "exploration",
            Purpose::ReplaySampling => "replay-sampling",
            Purpose::WeightInit => "weight-init",
        }
    }
}

impl FromStr for Purpose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Purpose::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::UnknownPurpose(s.to_string()))
    }
}

/// Fans a master seed out into independent keyed substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSet {
    master_seed: u64,
}

impl RngSet {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Substream for `(purpose, entity)`; a pure function of the key and the master seed.
    pub fn stream(&self, purpose: Purpose, entity: EntityId) -> Stream {
        let mut h = Sha256::new();
        h.update(b"jamnet/stream/v1");
        h.update(self.master_seed.to_le_bytes());
        h.update(purpose.label().as_bytes());
        h.update([0u8]);
        h.update((entity.cell as u64).to_le_bytes());
        h.update([entity.kind.tag()]);
        h.update((entity.index as u64).to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// Label-based lookup; unknown labels are a configuration error.
    pub fn derive_stream(&self, purpose: &str, entity: EntityId) -> Result<Stream> {
        Ok(self.stream(purpose.parse()?, entity))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PueSchedule {
    Bernoulli { prob: f64 },
    Fixed(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pue {
    pub id: EntityId,
    pub schedule: PueSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jammer {
    pub id: EntityId,
    pub off_slots: usize,
    pub on_slots: usize,
    /// Active flag per slot of a frame; repeats every frame.
    pub pattern: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub pues: Vec<Pue>,
    pub jammers: Vec<Jammer>,
}

impl Cell {
    pub fn iue(&self) -> EntityId {
        EntityId::iue(self.index)
    }

    pub fn cluster_head(&self) -> EntityId {
        EntityId::cluster_head(self.index)
    }

    /// Legitimate UEs in state-layout order: pUEs first, then the iUE.
    pub fn legit_ues(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.pues.iter().map(|p| p.id).chain(std::iter::once(self.iue()))
    }

    /// Every transmitting entity: legitimate UEs followed by jammers.
    pub fn transmitters(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.legit_ues().chain(self.jammers.iter().map(|j| j.id))
    }
}

/// Fully materialized, immutable network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub cells: Vec<Cell>,
    pub rngs: RngSet,
}

impl Network {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn frame_slots(&self) -> usize {
        self.config.frame_slots
    }

    pub fn cell(&self, index: usize) -> &Cell {
        &self.cells[index]
    }
}

/// Materialize the roster and every per-entity schedule.
pub fn build_network(config: &NetworkConfig) -> Result<Network> {
    config.validate()?;
    let rngs = RngSet::new(config.master_seed);
    let s = config.frame_slots;

    let cells = (0..config.num_cells)
        .map(|k| {
            let pues = (0..config.pue_count)
                .map(|n| {
                    let id = EntityId::pue(k, n);
                    let schedule = match (&config.pue_patterns, config.pue_schedule_mode) {
                        (Some(patterns), _) => {
                            PueSchedule::Fixed(patterns[n].iter().map(|&b| b == 1).collect())
                        }
                        (None, PueScheduleMode::FixedPattern) => {
                            let mut rng = rngs.stream(Purpose::Schedule, id);
                            PueSchedule::Fixed(
                                (0..s)
                                    .map(|_| mac::pue_schedule_bit(&mut rng, config.pue_tx_prob))
                                    .collect(),
                            )
                        }
                        (None, PueScheduleMode::Bernoulli) => PueSchedule::Bernoulli {
                            prob: config.pue_tx_prob,
                        },
                    };
                    Pue { id, schedule }
                })
                .collect();

            let jammers = (0..config.jammer_count)
                .map(|m| {
                    let id = EntityId::jammer(k, m);
                    let mut rng = rngs.stream(Purpose::Schedule, id);
                    let off_slots = match &config.jammer_off_slots {
                        Some(off) => off[m],
                        // S_off in [0, (S-1)/2] keeps S_off < S_on.
                        None => rng.random_range(0..=(s - 1) / 2),
                    };
                    let on_slots = s - off_slots;
                    let pattern = mac::jammer_schedule(
                        s,
                        on_slots,
                        off_slots,
                        config.jammer_pattern_mode,
                        &mut rng,
                    )?;
                    Ok(Jammer { id, off_slots, on_slots, pattern })
                })
                .collect::<Result<Vec<_>>>()?;

            Ok(Cell { index: k, pues, jammers })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Network {
        config: config.clone(),
        cells,
        rngs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn full_roster_has_seven_cells() {
        let cfg = NetworkConfig {
            num_cells: 7,
            pue_count: 20,
            jammer_count: 3,
            ..NetworkConfig::default()
        };
        let net = build_network(&cfg).unwrap();
        assert_eq!(net.num_cells(), 7);
        for cell in &net.cells {
            assert_eq!(cell.pues.len(), 20);
            assert_eq!(cell.jammers.len(), 3);
            assert_eq!(cell.legit_ues().count(), 21);
            assert_eq!(cell.legit_ues().filter(|e| e.kind == EntityKind::Iue).count(), 1);
            assert_eq!(cell.cluster_head(), EntityId::cluster_head(cell.index));
        }
    }

    #[test]
    fn empty_roster_cell_keeps_iue_and_cluster_head() {
        let cfg = NetworkConfig {
            num_cells: 1,
            pue_count: 0,
            jammer_count: 0,
            ..NetworkConfig::default()
        };
        let net = build_network(&cfg).unwrap();
        let cell = net.cell(0);
        assert!(cell.pues.is_empty() && cell.jammers.is_empty());
        assert_eq!(cell.legit_ues().collect::<Vec<_>>(), vec![EntityId::iue(0)]);
    }

    #[test]
    fn same_seed_same_network() {
        let cfg = NetworkConfig {
            num_cells: 3,
            pue_count: 4,
            jammer_count: 2,
            frame_slots: 9,
            pue_schedule_mode: PueScheduleMode::FixedPattern,
            jammer_pattern_mode: JammerPatternMode::FixedSubset,
            master_seed: 77,
            ..NetworkConfig::default()
        };
        assert_eq!(build_network(&cfg).unwrap(), build_network(&cfg).unwrap());
    }

    #[test]
    fn rejects_invalid_fields_by_name() {
        let cases: Vec<(NetworkConfig, &str)> = vec![
            (NetworkConfig { num_cells: 0, ..Default::default() }, "num_cells"),
            (NetworkConfig { frame_slots: 0, ..Default::default() }, "frame_slots"),
            (NetworkConfig { antennas: 0, ..Default::default() }, "antennas"),
            (NetworkConfig { total_frames: 0, ..Default::default() }, "total_frames"),
            (NetworkConfig { pue_tx_prob: 1.5, ..Default::default() }, "pue_tx_prob"),
            (NetworkConfig { noise_variance: 0.0, ..Default::default() }, "noise_variance"),
            (
                NetworkConfig { pue_power_dbm: DbmRange(25.0, 20.0), ..Default::default() },
                "pue_power_dbm",
            ),
            (
                NetworkConfig { jammer_off_slots: Some(vec![3]), ..Default::default() },
                "jammer_off_slots",
            ),
            (
                NetworkConfig { pue_patterns: Some(vec![vec![1, 0]]), ..Default::default() },
                "pue_patterns",
            ),
        ];
        for (cfg, field) in cases {
            match build_network(&cfg) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error on {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn long_off_allowed_with_override() {
        let cfg = NetworkConfig {
            jammer_off_slots: Some(vec![4]),
            allow_long_off: true,
            ..Default::default()
        };
        let net = build_network(&cfg).unwrap();
        assert_eq!(net.cell(0).jammers[0].pattern, vec![false, false, false, false, true]);
    }

    fn first_draws(mut s: Stream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn stream_is_pure_function_of_key() {
        let rngs = RngSet::new(1);
        let a = rngs.derive_stream("channel", EntityId::pue(0, 0)).unwrap();
        let b = rngs.derive_stream("channel", EntityId::pue(0, 0)).unwrap();
        assert_eq!(first_draws(a, 100), first_draws(b, 100));
    }

    #[test]
    fn stream_depends_on_entity_and_purpose() {
        let rngs = RngSet::new(1);
        let a = first_draws(rngs.stream(Purpose::Channel, EntityId::pue(0, 0)), 100);
        let b = first_draws(rngs.stream(Purpose::Channel, EntityId::pue(0, 1)), 100);
        let c = first_draws(rngs.stream(Purpose::Power, EntityId::pue(0, 0)), 100);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unknown_purpose_is_rejected() {
        let err = RngSet::new(1).derive_stream("telemetry", EntityId::iue(0)).unwrap_err();
        assert!(matches!(err, Error::UnknownPurpose(p) if p == "telemetry"));
    }

    #[test]
    fn purpose_labels_round_trip() {
        for p in Purpose::ALL {
            assert_eq!(p.label().parse::<Purpose>().unwrap(), p);
        }
    }
}

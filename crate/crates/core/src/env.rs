//! Single-agent environment around one cell's iUE: state assembly, utilities,
//! rewards and slot stepping.
//!
//! The agent controls the iUE of cell 0. Other cells run their pUEs and
//! jammers and contribute interference only; their iUEs stay silent.

use serde::{Deserialize, Serialize};

use crate::channel::{achievable_rate, ChannelDraw, PhyStreams, SicMode, SlotActivity, sinr_mf_sic};
use crate::error::{Error, Result};
use crate::mac::{self, AckStatus, ChannelStatus, FrameClock, SlotOutcome, UeOutcome};
use crate::topology::{EntityId, Network, PueSchedule, Purpose, Stream};

/// Cell whose iUE is driven by the agent.
pub const AGENT_CELL: usize = 0;

/// Width of one UE block in the state vector.
pub const BLOCK_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Hold = 0,
    Dispatch = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Hold, Action::Dispatch];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Action::Hold),
            1 => Ok(Action::Dispatch),
            _ => Err(Error::Domain(format!("action index {i} outside {{0, 1}}"))),
        }
    }

    pub fn is_dispatch(self) -> bool {
        self == Action::Dispatch
    }
}

/// Quality label of an iUE decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    /// Dispatch into an unused slot.
    Excellent,
    /// Hold while the channel is occupied.
    Good,
    /// Dispatch into a pUE transmission.
    Bad,
    /// Hold on an unused slot, or dispatch into a jammer.
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub status: ChannelStatus,
    pub action: Action,
    pub decision: Decision,
    pub nu_pue: f64,
    pub nu_iue: f64,
    pub nu_net: f64,
}

/// Scaling factors per (channel status, iUE action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    pub rows: Vec<UtilityRow>,
}

impl Default for UtilityParams {
    fn default() -> Self {
        use Action::*;
        use ChannelStatus::*;
        use Decision::*;
        let row = |status, action, decision, nu_pue, nu_iue, nu_net| UtilityRow {
            status,
            action,
            decision,
            nu_pue,
            nu_iue,
            nu_net,
        };
        Self {
            rows: vec![
                row(Jammed, Hold, Good, 0.0, 4.0, 5.0),
                row(PueTransmitting, Hold, Good, 1.0, 4.0, 5.0),
                row(Unused, Hold, Worst, 0.0, 1.0, -10.0),
                row(Jammed, Dispatch, Worst, 0.0, 1.0, -10.0),
                row(PueTransmitting, Dispatch, Bad, 0.0, 3.0, -5.0),
                row(Unused, Dispatch, Excellent, 0.0, 5.0, 10.0),
            ],
        }
    }
}

impl UtilityParams {
    pub fn row(&self, status: ChannelStatus, action: Action) -> Result<&UtilityRow> {
        self.rows
            .iter()
            .find(|r| r.status == status && r.action == action)
            .ok_or_else(|| Error::Usage(format!("no utility row for ({status:?}, {action:?})")))
    }

    /// Multiply every `nu_net` by `c`.
    pub fn scale_net(&self, c: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.nu_net *= c;
        }
        out
    }
}

/// `nu_pue * r` for a successful pUE, zero otherwise.
pub fn pue_utility(outcome: UeOutcome, r_pue: f64, row: &UtilityRow) -> f64 {
    if outcome == UeOutcome::Success {
        row.nu_pue * r_pue
    } else {
        0.0
    }
}

/// `nu_iue * r` with `r` the rate the iUE would have achieved had it sent.
pub fn iue_utility(
    status: ChannelStatus,
    action: Action,
    r_potential: f64,
    params: &UtilityParams,
) -> Result<f64> {
    Ok(params.row(status, action)?.nu_iue * r_potential)
}

/// `nu_net * (iue_util + sum(pue_utils))`.
pub fn reward(
    status: ChannelStatus,
    action: Action,
    iue_util: f64,
    pue_utils: &[f64],
    params: &UtilityParams,
) -> Result<f64> {
    let row = params.row(status, action)?;
    Ok(row.nu_net * (iue_util + pue_utils.iter().sum::<f64>()))
}

/// One UE's contribution to the state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeBlock {
    pub action: bool,
    pub ack: AckStatus,
    pub clar: f64,
}

impl UeBlock {
    pub fn zero() -> Self {
        Self { action: false, ack: AckStatus::Idle, clar: 0.0 }
    }
}

/// Concatenate `[action, ack one-hot, clar]` per UE, pUEs first then the iUE.
pub fn assemble_state(blocks: &[UeBlock], ues: usize) -> Result<Vec<f64>> {
    if blocks.len() != ues {
        return Err(Error::Shape(format!("expected {ues} UE blocks, got {}", blocks.len())));
    }
    let mut s = Vec::with_capacity(BLOCK_WIDTH * ues);
    for b in blocks {
        if !(b.clar >= 0.0) {
            return Err(Error::Domain(format!("CLAR {} is negative", b.clar)));
        }
        s.push(if b.action { 1.0 } else { 0.0 });
        s.extend_from_slice(&b.ack.one_hot());
        s.push(b.clar);
    }
    Ok(s)
}

/// Everything random about one slot that does not depend on the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDraw {
    /// Per cell; every iUE flag is false.
    pub activity: Vec<SlotActivity>,
    pub channels: ChannelDraw,
}

impl SlotDraw {
    pub fn agent_cell(&self) -> &SlotActivity {
        &self.activity[AGENT_CELL]
    }

    /// True when no pUE transmits and no jammer is active in the agent cell.
    pub fn is_free(&self) -> bool {
        let a = self.agent_cell();
        let pues = &a.ue[..a.ue.len() - 1];
        !pues.iter().any(|&b| b) && !a.jammer.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub frame: usize,
    pub slot: usize,
    pub channel_status: ChannelStatus,
    pub decision: Decision,
    /// SINR of each transmitting UE, pUEs then iUE.
    pub sinr: Vec<Option<f64>>,
    /// Achievable rate of each transmitting UE, zero otherwise.
    pub rate: Vec<f64>,
    /// Realized per-slot CLAR: rate on success, zero otherwise.
    pub clar: Vec<f64>,
    pub outcomes: Vec<UeOutcome>,
    pub iue_potential_rate: f64,
    pub jammer_active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub ack: AckStatus,
    /// The slot just played was the last of its frame.
    pub frame_end: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct Env {
    network: Network,
    params: UtilityParams,
    sic: SicMode,
    clock: FrameClock,
    phy: PhyStreams,
    schedule: Vec<Vec<Stream>>,
    pending: Option<SlotDraw>,
    state: Vec<f64>,
}

impl Env {
    pub fn new(network: Network, params: UtilityParams) -> Result<Self> {
        for status in [ChannelStatus::Unused, ChannelStatus::PueTransmitting, ChannelStatus::Jammed] {
            for action in Action::ALL {
                params.row(status, action)?;
            }
        }
        let sic = SicMode { ordered: network.config.ordered_sic };
        let clock = FrameClock::new(network.frame_slots());
        let phy = PhyStreams::new(&network);
        let schedule = Self::schedule_streams(&network);
        let state = vec![0.0; BLOCK_WIDTH * network.config.ues_per_cell()];
        Ok(Self { network, params, sic, clock, phy, schedule, pending: None, state })
    }

    fn schedule_streams(network: &Network) -> Vec<Vec<Stream>> {
        network
            .cells
            .iter()
            .map(|c| c.pues.iter().map(|p| network.rngs.stream(Purpose::Schedule, p.id)).collect())
            .collect()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &UtilityParams {
        &self.params
    }

    pub fn clock(&self) -> FrameClock {
        self.clock
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn state_dim(&self) -> usize {
        self.state.len()
    }

    /// Rewind every stream and the clock; returns the all-zero state.
    pub fn reset(&mut self) -> Vec<f64> {
        self.clock.reset();
        self.phy = PhyStreams::new(&self.network);
        self.schedule = Self::schedule_streams(&self.network);
        self.pending = None;
        self.state.iter_mut().for_each(|x| *x = 0.0);
        self.state.clone()
    }

    /// The current slot's draw. Repeated calls return the same draw.
    pub fn peek(&mut self) -> Result<&SlotDraw> {
        if self.pending.is_none() {
            let draw = self.draw_slot()?;
            self.pending = Some(draw);
        }
        Ok(self.pending.as_ref().expect("just filled"))
    }

    fn draw_slot(&mut self) -> Result<SlotDraw> {
        let offset = self.clock.slot_offset();
        let activity = self
            .network
            .cells
            .iter()
            .zip(&mut self.schedule)
            .map(|(cell, rngs)| {
                let mut ue: Vec<bool> = cell
                    .pues
                    .iter()
                    .zip(rngs.iter_mut())
                    .map(|(p, rng)| match &p.schedule {
                        PueSchedule::Bernoulli { prob } => mac::pue_schedule_bit(rng, *prob),
                        PueSchedule::Fixed(pattern) => pattern[offset],
                    })
                    .collect();
                ue.push(false);
                let jammer = cell.jammers.iter().map(|j| j.pattern[offset]).collect();
                SlotActivity { ue, jammer }
            })
            .collect();
        let channels = self.phy.draw_slot(&self.network)?;
        Ok(SlotDraw { activity, channels })
    }

    /// Result of playing `action` in the current slot, without committing it.
    pub fn preview(&mut self, action: Action) -> Result<StepResult> {
        self.peek()?;
        let draw = self.pending.as_ref().expect("peeked");
        self.evaluate(draw, action)
    }

    /// Play `action` in the current slot and advance the clock.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        let result = self.preview(action)?;
        self.state.clone_from(&result.next_state);
        self.pending = None;
        self.clock.advance();
        Ok(result)
    }

    fn evaluate(&self, draw: &SlotDraw, action: Action) -> Result<StepResult> {
        let cell = self.network.cell(AGENT_CELL);
        let iue = cell.iue();
        let ues: Vec<EntityId> = cell.legit_ues().collect();

        let mut activity = draw.activity.clone();
        activity[AGENT_CELL].set(iue, action.is_dispatch());
        let outcome: SlotOutcome = mac::resolve_slot(&activity[AGENT_CELL]);

        let mut sinr = Vec::with_capacity(ues.len());
        let mut rate = Vec::with_capacity(ues.len());
        let mut clar = Vec::with_capacity(ues.len());
        for (n, &id) in ues.iter().enumerate() {
            if activity[AGENT_CELL].is_active(id) {
                let g = sinr_mf_sic(id, &activity, &draw.channels, self.sic)?;
                let c = achievable_rate(g)?;
                sinr.push(Some(g));
                rate.push(c);
                clar.push(if outcome.ue[n] == UeOutcome::Success { c } else { 0.0 });
            } else {
                sinr.push(None);
                rate.push(0.0);
                clar.push(0.0);
            }
        }

        let iue_potential_rate = if action.is_dispatch() {
            *rate.last().expect("iUE present")
        } else {
            let mut forced = activity.clone();
            forced[AGENT_CELL].set(iue, true);
            achievable_rate(sinr_mf_sic(iue, &forced, &draw.channels, self.sic)?)?
        };

        let status = outcome.channel_status;
        let row = self.params.row(status, action)?;
        let pue_utils: Vec<f64> = (0..cell.pues.len())
            .map(|n| pue_utility(outcome.ue[n], clar[n], row))
            .collect();
        let iue_util = iue_utility(status, action, iue_potential_rate, &self.params)?;
        let r = reward(status, action, iue_util, &pue_utils, &self.params)?;
        if !r.is_finite() {
            return Err(Error::NonFinite(format!(
                "reward at frame {}, slot {}",
                self.clock.frame(),
                self.clock.slot()
            )));
        }

        let blocks: Vec<UeBlock> = ues
            .iter()
            .enumerate()
            .map(|(n, &id)| UeBlock {
                action: activity[AGENT_CELL].is_active(id),
                ack: outcome.acks[n],
                clar: clar[n],
            })
            .collect();
        let next_state = assemble_state(&blocks, ues.len())?;

        Ok(StepResult {
            next_state,
            reward: r,
            ack: outcome.iue_ack(),
            frame_end: self.clock.is_last_slot(),
            diagnostics: Diagnostics {
                frame: self.clock.frame(),
                slot: self.clock.slot(),
                channel_status: status,
                decision: row.decision,
                sinr,
                rate,
                clar,
                outcomes: outcome.ue,
                iue_potential_rate,
                jammer_active: activity[AGENT_CELL].jammer.clone(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_network, NetworkConfig};

    fn desk() -> NetworkConfig {
        NetworkConfig {
            jammer_off_slots: Some(vec![2]),
            pue_patterns: Some(vec![vec![1, 0, 1, 0, 0], vec![0, 0, 1, 1, 0]]),
            ..NetworkConfig::default()
        }
    }

    fn env(cfg: &NetworkConfig) -> Env {
        Env::new(build_network(cfg).unwrap(), UtilityParams::default()).unwrap()
    }

    #[test]
    fn utilities_follow_table() {
        let p = UtilityParams::default();
        use Action::*;
        use ChannelStatus::*;
        assert_eq!(iue_utility(Unused, Dispatch, 1.0, &p).unwrap(), 5.0);
        assert_eq!(iue_utility(Jammed, Hold, 1.0, &p).unwrap(), 4.0);
        assert_eq!(iue_utility(Unused, Hold, 1.0, &p).unwrap(), 1.0);
        let row = p.row(PueTransmitting, Hold).unwrap();
        assert_eq!(pue_utility(UeOutcome::Success, 2.0, row), 2.0);
        assert_eq!(pue_utility(UeOutcome::Collision, 2.0, row), 0.0);
        assert_eq!(pue_utility(UeOutcome::Success, 0.0, row), 0.0);
        assert_eq!(reward(Unused, Dispatch, 5.0, &[], &p).unwrap(), 50.0);
        assert_eq!(reward(Unused, Hold, 1.0, &[], &p).unwrap(), -10.0);
        assert_eq!(reward(PueTransmitting, Hold, 4.0, &[2.0], &p).unwrap(), 30.0);
    }

    #[test]
    fn missing_row_is_rejected() {
        let mut p = UtilityParams::default();
        p.rows.pop();
        assert!(matches!(
            iue_utility(ChannelStatus::Unused, Action::Dispatch, 1.0, &p),
            Err(Error::Usage(_))
        ));
        assert!(Env::new(build_network(&desk()).unwrap(), p).is_err());
    }

    #[test]
    fn state_blocks() {
        let idle = assemble_state(&[UeBlock::zero(); 2], 2).unwrap();
        assert_eq!(idle, vec![0., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0.]);
        let s = assemble_state(
            &[UeBlock { action: true, ack: AckStatus::Success, clar: 1.5 }],
            1,
        )
        .unwrap();
        assert_eq!(s, vec![1., 0., 0., 0., 0., 0., 1., 1.5]);
        assert!(matches!(assemble_state(&[UeBlock::zero()], 2), Err(Error::Shape(_))));
    }

    #[test]
    fn reset_gives_zero_state() {
        let cfg = NetworkConfig { pue_count: 2, ..Default::default() };
        let mut e = env(&cfg);
        assert_eq!(e.reset(), vec![0.0; 24]);
        e.step(Action::Dispatch).unwrap();
        assert_eq!(e.reset(), vec![0.0; 24]);
        assert_eq!(e.clock().global_slot(), 1);
    }

    #[test]
    fn free_slot_dispatch_and_hold() {
        let mut e = env(&desk());
        e.reset();
        e.step(Action::Hold).unwrap();
        assert!(e.peek().unwrap().is_free());
        let send = e.preview(Action::Dispatch).unwrap();
        let hold = e.preview(Action::Hold).unwrap();
        assert_eq!(send.ack, AckStatus::Success);
        assert_eq!(send.diagnostics.decision, Decision::Excellent);
        assert!(send.reward > 0.0);
        assert_eq!(hold.ack, AckStatus::Idle);
        assert_eq!(*hold.diagnostics.clar.last().unwrap(), 0.0);
        assert!(hold.reward < 0.0);
        assert_eq!(send.diagnostics.iue_potential_rate, hold.diagnostics.iue_potential_rate);
    }

    #[test]
    fn preview_does_not_advance() {
        let mut e = env(&desk());
        let a = e.preview(Action::Dispatch).unwrap();
        let b = e.preview(Action::Dispatch).unwrap();
        assert_eq!(a, b);
        assert_eq!(e.clock().global_slot(), 1);
        assert_eq!(e.step(Action::Dispatch).unwrap(), a);
        assert_eq!(e.clock().global_slot(), 2);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = NetworkConfig { num_cells: 2, ..Default::default() };
        let actions: Vec<Action> = (0..40).map(|t| Action::ALL[(t * 7 % 3) % 2]).collect();
        let run = || {
            let mut e = env(&cfg);
            e.reset();
            actions.iter().map(|&a| e.step(a).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn always_hold_never_succeeds() {
        let cfg = NetworkConfig { num_cells: 3, pue_count: 4, jammer_count: 2, ..Default::default() };
        let mut e = env(&cfg);
        e.reset();
        for _ in 0..200 {
            let r = e.step(Action::Hold).unwrap();
            assert_ne!(r.ack, AckStatus::Success);
            assert_eq!(*r.diagnostics.clar.last().unwrap(), 0.0);
            assert_eq!(r.next_state.len(), 40);
        }
    }

    #[test]
    fn frame_end_flag() {
        let mut e = env(&desk());
        let ends: Vec<bool> = (0..10).map(|_| e.step(Action::Hold).unwrap().frame_end).collect();
        assert_eq!(ends, vec![false, false, false, false, true, false, false, false, false, true]);
    }
}

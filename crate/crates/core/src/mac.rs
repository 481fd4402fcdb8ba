//! Slotted medium access: frame clock, transmission schedules, slot outcome
//! resolution, ACK encoding and the cross-layer rate metrics.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::SlotActivity;
use crate::error::{Error, Result};

/// Position in time. `frame` and `slot` are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameClock {
    frame_slots: usize,
    frame: usize,
    slot: usize,
}

impl FrameClock {
    pub fn new(frame_slots: usize) -> Self {
        assert!(frame_slots > 0, "frame needs at least one slot");
        Self { frame_slots, frame: 1, slot: 1 }
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    /// 0-based slot offset within the frame.
    pub fn slot_offset(&self) -> usize {
        self.slot - 1
    }

    pub fn frame_slots(&self) -> usize {
        self.frame_slots
    }

    /// `(frame - 1) * S + slot`.
    pub fn global_slot(&self) -> usize {
        (self.frame - 1) * self.frame_slots + self.slot
    }

    pub fn is_last_slot(&self) -> bool {
        self.slot == self.frame_slots
    }

    pub fn advance(&mut self) {
        if self.slot == self.frame_slots {
            self.slot = 1;
            self.frame += 1;
        } else {
            self.slot += 1;
        }
    }

    pub fn reset(&mut self) {
        self.frame = 1;
        self.slot = 1;
    }
}

/// Channel observation fed back to a UE. Discriminants are one-hot positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AckStatus {
    /// Held while a jammer occupied the channel.
    JammedWhileHolding = 0,
    /// Held while another legitimate UE transmitted.
    Busy = 1,
    /// Held on an empty channel.
    Idle = 2,
    /// Transmitted into an active jammer.
    JammedWhileSending = 3,
    Collision = 4,
    Success = 5,
}

impl AckStatus {
    pub const ALL: [AckStatus; 6] = [
        AckStatus::JammedWhileHolding,
        AckStatus::Busy,
        AckStatus::Idle,
        AckStatus::JammedWhileSending,
        AckStatus::Collision,
        AckStatus::Success,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 6] {
        let mut v = [0.0; 6];
        v[self.index()] = 1.0;
        v
    }

    pub fn label(self) -> &'static str {
        match self {
            AckStatus::JammedWhileHolding => "J_T",
            AckStatus::Busy => "B",
            AckStatus::Idle => "I",
            AckStatus::JammedWhileSending => "J_A",
            AckStatus::Collision => "C",
            AckStatus::Success => "S",
        }
    }
}

impl fmt::Display for AckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Channel state as seen by the iUE, computed from pUE and jammer flags only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelStatus {
    Unused,
    PueTransmitting,
    Jammed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UeOutcome {
    Success,
    Collision,
    Jammed,
    Idle,
}

impl UeOutcome {
    pub fn label(self) -> &'static str {
        match self {
            UeOutcome::Success => "success",
            UeOutcome::Collision => "collision",
            UeOutcome::Jammed => "jammed",
            UeOutcome::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    /// pUEs then the iUE.
    pub ue: Vec<UeOutcome>,
    /// ACK each UE would observe, same order as `ue`.
    pub acks: Vec<AckStatus>,
    pub channel_status: ChannelStatus,
}

impl SlotOutcome {
    pub fn iue_outcome(&self) -> UeOutcome {
        *self.ue.last().expect("cell without iUE")
    }

    pub fn iue_ack(&self) -> AckStatus {
        *self.acks.last().expect("cell without iUE")
    }
}

/// Bernoulli(`prob`) transmission bit.
pub fn pue_schedule_bit<R: Rng + ?Sized>(rng: &mut R, prob: f64) -> bool {
    rng.random_bool(prob.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JammerPatternMode {
    /// First `S_off` slots asleep, remaining `S_on` slots jamming.
    #[default]
    PeriodicOnOff,
    /// A seed-chosen set of `S_on` slots jamming.
    FixedSubset,
}

/// One frame of jammer activity flags; the same pattern repeats every frame.
pub fn jammer_schedule<R: Rng + ?Sized>(
    frame_slots: usize,
    on_slots: usize,
    off_slots: usize,
    mode: JammerPatternMode,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if on_slots + off_slots != frame_slots {
        return Err(Error::config(
            "jammer_off_slots",
            format!("S_on + S_off = {} differs from S = {frame_slots}", on_slots + off_slots),
        ));
    }
    Ok(match mode {
        JammerPatternMode::PeriodicOnOff => (0..frame_slots).map(|s| s >= off_slots).collect(),
        JammerPatternMode::FixedSubset => {
            let mut pattern = vec![false; frame_slots];
            for s in rand::seq::index::sample(rng, frame_slots, on_slots) {
                pattern[s] = true;
            }
            pattern
        }
    })
}

/// Classify every legitimate UE of one cell for one slot.
pub fn resolve_slot(activity: &SlotActivity) -> SlotOutcome {
    let jammed = activity.jammer.iter().any(|&j| j);
    let transmitting = activity.ue.iter().filter(|&&t| t).count();
    let pues = &activity.ue[..activity.ue.len().saturating_sub(1)];
    let channel_status = if jammed {
        ChannelStatus::Jammed
    } else if pues.iter().any(|&t| t) {
        ChannelStatus::PueTransmitting
    } else {
        ChannelStatus::Unused
    };

    let mut ue = Vec::with_capacity(activity.ue.len());
    let mut acks = Vec::with_capacity(activity.ue.len());
    for &tx in &activity.ue {
        let others = transmitting - usize::from(tx);
        let (outcome, ack) = match (tx, jammed, others > 0) {
            (true, true, _) => (UeOutcome::Jammed, AckStatus::JammedWhileSending),
            (true, false, true) => (UeOutcome::Collision, AckStatus::Collision),
            (true, false, false) => (UeOutcome::Success, AckStatus::Success),
            (false, true, _) => (UeOutcome::Idle, AckStatus::JammedWhileHolding),
            (false, false, true) => (UeOutcome::Idle, AckStatus::Busy),
            (false, false, false) => (UeOutcome::Idle, AckStatus::Idle),
        };
        ue.push(outcome);
        acks.push(ack);
    }
    SlotOutcome { ue, acks, channel_status }
}

/// Fraction of slots with a successful delivery.
pub fn success_rate(outcomes: &[UeOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let ok = outcomes.iter().filter(|&&o| o == UeOutcome::Success).count();
    ok as f64 / outcomes.len() as f64
}

/// Cross-layer achievable rate `xi * c`.
pub fn clar(xi: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Domain(format!("success rate {xi} outside [0, 1]")));
    }
    if !(c >= 0.0) {
        return Err(Error::Domain(format!("achievable rate {c} is negative")));
    }
    Ok(xi * c)
}

/// Frame objective `sum_n r_n . a_n`.
pub fn sclar(clar: &[Vec<f64>], actions: &[Vec<bool>]) -> Result<f64> {
    if clar.len() != actions.len() {
        return Err(Error::Shape(format!(
            "{} CLAR vectors but {} action vectors",
            clar.len(),
            actions.len()
        )));
    }
    let mut total = 0.0;
    for (n, (r, a)) in clar.iter().zip(actions).enumerate() {
        if r.len() != a.len() {
            return Err(Error::Shape(format!(
                "UE {n}: {} CLAR entries but {} actions",
                r.len(),
                a.len()
            )));
        }
        total += r.iter().zip(a).filter(|(_, &on)| on).map(|(x, _)| x).sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn act(ue: &[u8], jammer: &[u8]) -> SlotActivity {
        SlotActivity {
            ue: ue.iter().map(|&b| b == 1).collect(),
            jammer: jammer.iter().map(|&b| b == 1).collect(),
        }
    }

    #[test]
    fn clock_counts_global_slots() {
        let mut c = FrameClock::new(3);
        let mut seen = vec![];
        for _ in 0..7 {
            seen.push((c.frame(), c.slot(), c.global_slot()));
            c.advance();
        }
        assert_eq!(
            seen,
            vec![(1, 1, 1), (1, 2, 2), (1, 3, 3), (2, 1, 4), (2, 2, 5), (2, 3, 6), (3, 1, 7)]
        );
        c.reset();
        assert_eq!(c.global_slot(), 1);
    }

    #[test]
    fn schedule_bit_extremes() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| pue_schedule_bit(&mut r, 1.0)));
        assert!((0..1000).all(|_| !pue_schedule_bit(&mut r, 0.0)));
    }

    #[test]
    fn schedule_bit_mean() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let hits = (0..n).filter(|_| pue_schedule_bit(&mut r, 0.5)).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn jammer_patterns() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let p = JammerPatternMode::PeriodicOnOff;
        assert_eq!(jammer_schedule(5, 5, 0, p, &mut r).unwrap(), vec![true; 5]);
        assert_eq!(
            jammer_schedule(5, 3, 2, p, &mut r).unwrap(),
            vec![false, false, true, true, true]
        );
        assert!(matches!(jammer_schedule(5, 3, 1, p, &mut r), Err(Error::Config { .. })));
        let subset = jammer_schedule(10, 6, 4, JammerPatternMode::FixedSubset, &mut r).unwrap();
        assert_eq!(subset.iter().filter(|&&b| b).count(), 6);
    }

    #[test]
    fn ack_one_hot_positions() {
        assert_eq!(AckStatus::Success.one_hot(), [0., 0., 0., 0., 0., 1.]);
        assert_eq!(AckStatus::Collision.one_hot(), [0., 0., 0., 0., 1., 0.]);
        assert_eq!(AckStatus::JammedWhileHolding.one_hot(), [1., 0., 0., 0., 0., 0.]);
        for a in AckStatus::ALL {
            assert_eq!(a.one_hot().iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn iue_acks_cover_every_row() {
        // (pUE, iUE) with jammer flag.
        let cases = [
            (act(&[0, 1], &[0]), AckStatus::Success),
            (act(&[1, 1], &[0]), AckStatus::Collision),
            (act(&[0, 1], &[1]), AckStatus::JammedWhileSending),
            (act(&[0, 0], &[0]), AckStatus::Idle),
            (act(&[1, 0], &[0]), AckStatus::Busy),
            (act(&[1, 0], &[1]), AckStatus::JammedWhileHolding),
        ];
        for (a, want) in cases {
            assert_eq!(resolve_slot(&a).iue_ack(), want, "{a:?}");
        }
    }

    #[test]
    fn jamming_dominates_collision() {
        let out = resolve_slot(&act(&[1, 1, 1], &[0, 1]));
        assert_eq!(out.ue, vec![UeOutcome::Jammed; 3]);
        assert_eq!(out.channel_status, ChannelStatus::Jammed);
    }

    #[test]
    fn channel_status_ignores_iue() {
        assert_eq!(resolve_slot(&act(&[0, 1], &[0])).channel_status, ChannelStatus::Unused);
        assert_eq!(
            resolve_slot(&act(&[1, 0], &[0])).channel_status,
            ChannelStatus::PueTransmitting
        );
    }

    #[test]
    fn rates_and_objective() {
        use UeOutcome::*;
        assert_eq!(success_rate(&[Success, Idle, Success, Collision, Success]), 0.6);
        assert_eq!(success_rate(&[Idle; 4]), 0.0);
        assert_eq!(clar(1.0, 2.0).unwrap(), 2.0);
        assert_eq!(clar(0.0, 7.0).unwrap(), 0.0);
        assert!((clar(0.6, 1.5).unwrap() - 0.9).abs() < 1e-15);
        assert!(clar(1.2, 1.0).is_err());
        assert_eq!(sclar(&[vec![1.0, 2.0]], &[vec![true, false]]).unwrap(), 1.0);
        assert_eq!(sclar(&[vec![1.0, 2.0]], &[vec![false, false]]).unwrap(), 0.0);
        assert!(matches!(sclar(&[vec![1.0]], &[vec![true, false]]), Err(Error::Shape(_))));
        assert!(matches!(sclar(&[vec![1.0]], &[]), Err(Error::Shape(_))));
    }
}

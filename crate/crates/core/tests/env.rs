use jamnet::env::{
    assemble_state, iue_utility, reward, Action, Decision, Env, UeBlock, UtilityParams, BLOCK_WIDTH,
};
use jamnet::mac::{AckStatus, ChannelStatus};
use jamnet::topology::{build_network, NetworkConfig};
use proptest::prelude::*;

fn decision_reward(status: ChannelStatus, action: Action, r: f64, params: &UtilityParams) -> (Decision, f64) {
    let u = iue_utility(status, action, r, params).unwrap();
    (params.row(status, action).unwrap().decision, reward(status, action, u, &[], params).unwrap())
}

fn env_for(seed: u64, params: UtilityParams) -> Env {
    let cfg = NetworkConfig { num_cells: 2, pue_count: 3, jammer_count: 2, frame_slots: 6, master_seed: seed, ..Default::default() };
    Env::new(build_network(&cfg).unwrap(), params).unwrap()
}

fn ack() -> impl Strategy<Value = AckStatus> {
    (0..6usize).prop_map(|i| AckStatus::ALL[i])
}

fn block() -> impl Strategy<Value = UeBlock> {
    (any::<bool>(), ack(), 0.0f64..20.0).prop_map(|(action, ack, clar)| UeBlock { action, ack, clar })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn decisions_order_by_reward(r in 1e-3f64..50.0) {
        let p = UtilityParams::default();
        let mut by = std::collections::HashMap::new();
        for status in [ChannelStatus::Unused, ChannelStatus::PueTransmitting, ChannelStatus::Jammed] {
            for action in Action::ALL {
                let (d, v) = decision_reward(status, action, r, &p);
                by.entry(d).or_insert_with(Vec::new).push(v);
            }
        }
        let lo = |d| by[&d].iter().copied().fold(f64::INFINITY, f64::min);
        let hi = |d| by[&d].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo(Decision::Excellent) > hi(Decision::Good));
        prop_assert!(lo(Decision::Good) > 0.0);
        prop_assert!(hi(Decision::Bad) < 0.0 && hi(Decision::Worst) < 0.0);
        // With one shared rate, Bad (-5 * 3R) lies below Worst (-10 * 1R).
        prop_assert!(hi(Decision::Bad) < lo(Decision::Worst));
    }

    #[test]
    fn reward_scales_with_nu_net(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut base = env_for(seed, UtilityParams::default());
        let mut scaled = env_for(seed, UtilityParams::default().scale_net(c));
        for _ in 0..6 {
            let a: Vec<f64> = Action::ALL.iter().map(|&a| base.preview(a).unwrap().reward).collect();
            let b: Vec<f64> = Action::ALL.iter().map(|&a| scaled.preview(a).unwrap().reward).collect();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x * c - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
            prop_assert_eq!(jamnet::dqn::argmax(&a), jamnet::dqn::argmax(&b));
            base.step(Action::Hold).unwrap();
            scaled.step(Action::Hold).unwrap();
        }
    }

    #[test]
    fn roster_permutation_permutes_blocks(blocks in prop::collection::vec(block(), 1..7), rot in 0usize..7) {
        let n = blocks.len();
        let s = assemble_state(&blocks, n).unwrap();
        prop_assert_eq!(s.len(), BLOCK_WIDTH * n);
        let mut perm = blocks.clone();
        perm.rotate_left(rot % n);
        let t = assemble_state(&perm, n).unwrap();
        for i in 0..n {
            let j = (i + rot) % n;
            prop_assert_eq!(&t[i * BLOCK_WIDTH..(i + 1) * BLOCK_WIDTH], &s[j * BLOCK_WIDTH..(j + 1) * BLOCK_WIDTH]);
        }
    }

    #[test]
    fn always_hold_never_delivers(seed in 0u64..1000) {
        let mut env = env_for(seed, UtilityParams::default());
        let dim = env.state_dim();
        for _ in 0..12 {
            let res = env.step(Action::Hold).unwrap();
            prop_assert_eq!(res.next_state.len(), dim);
            prop_assert_eq!(*res.diagnostics.clar.last().unwrap(), 0.0);
            prop_assert!(res.next_state.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn state_blocks_are_well_formed() {
    let mut env = env_for(3, UtilityParams::default());
    assert!(env.state().iter().all(|&v| v == 0.0));
    for t in 0..30 {
        let res = env.step(if t % 2 == 0 { Action::Dispatch } else { Action::Hold }).unwrap();
        for b in res.next_state.chunks(BLOCK_WIDTH) {
            assert!(b[0] == 0.0 || b[0] == 1.0);
            assert_eq!(b[1..7].iter().sum::<f64>(), 1.0);
            assert!(b[7] >= 0.0);
        }
        let iue = &res.next_state[res.next_state.len() - BLOCK_WIDTH..];
        assert_eq!(&iue[1..7], &res.ack.one_hot()[..]);
    }
}

#[test]
fn preview_does_not_advance() {
    let mut env = env_for(9, UtilityParams::default());
    let a = env.preview(Action::Dispatch).unwrap();
    let b = env.preview(Action::Dispatch).unwrap();
    assert_eq!(a, b);
    assert_eq!(env.step(Action::Dispatch).unwrap(), a);
}

//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use jamnet::channel::{ChannelDraw, ChannelVector, Link, SlotActivity};
use jamnet::topology::EntityId;
use num_complex::Complex64;
use rand::Rng;

/// Plain-array description of one slot. Local order per cell: pUEs, iUE, jammers.
#[derive(Debug, Clone)]
pub struct RawInstance {
    pub cells: usize,
    pub pues: usize,
    pub jammers: usize,
    pub antennas: usize,
    /// `[cell][local]`
    pub power: Vec<Vec<f64>>,
    /// `[cell][local][to_cell][antenna]` as `(re, im)`.
    pub h: Vec<Vec<Vec<Vec<(f64, f64)>>>>,
    pub noise: Vec<f64>,
    /// `[cell][local]`
    pub active: Vec<Vec<bool>>,
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller, independent of the library's sampler.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl RawInstance {
    pub fn random<R: Rng>(rng: &mut R, cells: usize, pues: usize, jammers: usize, antennas: usize) -> Self {
        let per_cell = pues + 1 + jammers;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let power = (0..cells)
            .map(|_| (0..per_cell).map(|_| 10f64.powf(rng.random_range(2.0..3.0))).collect())
            .collect();
        let h = (0..cells)
            .map(|_| {
                (0..per_cell)
                    .map(|_| {
                        (0..cells)
                            .map(|_| (0..antennas).map(|_| (s * gaussian(rng), s * gaussian(rng))).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let noise = (0..cells).map(|_| rng.random_range(0.5..3.0)).collect();
        let active = (0..cells).map(|_| (0..per_cell).map(|_| rng.random_bool(0.5)).collect()).collect();
        Self { cells, pues, jammers, antennas, power, h, noise, active }
    }

    pub fn local(&self, id: EntityId) -> usize {
        use jamnet::topology::EntityKind::*;
        match id.kind {
            Pue => id.index,
            Iue => self.pues,
            Jammer => self.pues + 1 + id.index,
            ClusterHead => unreachable!(),
        }
    }

    pub fn draw(&self) -> ChannelDraw {
        let links = (0..self.cells)
            .map(|c| {
                (0..self.power[c].len())
                    .map(|l| Link {
                        power: self.power[c][l],
                        to_ch: self.h[c][l]
                            .iter()
                            .map(|v| ChannelVector(v.iter().map(|&(re, im)| Complex64::new(re, im)).collect()))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        ChannelDraw::new(self.pues, links, self.noise.clone()).unwrap()
    }

    pub fn activity(&self) -> Vec<SlotActivity> {
        self.active
            .iter()
            .map(|a| SlotActivity { ue: a[..=self.pues].to_vec(), jammer: a[self.pues + 1..].to_vec() })
            .collect()
    }

    pub fn legit(&self, cell: usize) -> Vec<EntityId> {
        (0..self.pues).map(|n| EntityId::pue(cell, n)).chain([EntityId::iue(cell)]).collect()
    }
}

/// `|a^H b|^2` on raw pairs.
fn inner_sq(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (&(ar, ai), &(br, bi)) in a.iter().zip(b) {
        // conj(a) * b
        re += ar * br + ai * bi;
        im += ar * bi - ai * br;
    }
    re * re + im * im
}

fn norm_sq(a: &[(f64, f64)]) -> f64 {
    a.iter().map(|&(r, i)| r * r + i * i).sum()
}

/// Matched-filter SINR written term by term: own-cell UEs, other-cell UEs,
/// own-cell jammers, other-cell jammers, noise.
pub fn oracle_sinr(x: &RawInstance, ue: EntityId) -> f64 {
    let k = ue.cell;
    let me = x.local(ue);
    let h = &x.h[k][me][k];
    let hn = norm_sq(h);
    let num = x.power[k][me] * hn * hn;

    let ue_range = 0..=x.pues;
    let jam_range = x.pues + 1..x.pues + 1 + x.jammers;

    let mut intra_ue = 0.0;
    for n in ue_range.clone() {
        if n != me && x.active[k][n] {
            intra_ue += x.power[k][n] * inner_sq(h, &x.h[k][n][k]);
        }
    }
    let mut inter_ue = 0.0;
    for i in (0..x.cells).filter(|&i| i != k) {
        for n in ue_range.clone() {
            if x.active[i][n] {
                inter_ue += x.power[i][n] * inner_sq(h, &x.h[i][n][k]);
            }
        }
    }
    let mut intra_jam = 0.0;
    for j in jam_range.clone() {
        if x.active[k][j] {
            intra_jam += x.power[k][j] * inner_sq(h, &x.h[k][j][k]);
        }
    }
    let mut inter_jam = 0.0;
    for i in (0..x.cells).filter(|&i| i != k) {
        for j in jam_range.clone() {
            if x.active[i][j] {
                inter_jam += x.power[i][j] * inner_sq(h, &x.h[i][j][k]);
            }
        }
    }
    num / (intra_ue + inter_ue + intra_jam + inter_jam + hn * x.noise[k])
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Naive `act(W x + b)` per sample.
pub fn dense_oracle(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64], relu: bool) -> Vec<Vec<f64>> {
    x.iter()
        .map(|xi| {
            (0..w.len())
                .map(|o| {
                    let mut z = b[o];
                    for k in 0..xi.len() {
                        z += w[o][k] * xi[k];
                    }
                    if relu { z.max(0.0) } else { z }
                })
                .collect()
        })
        .collect()
}

/// Value iteration on a deterministic MDP: `next[s][a]`, `reward[s][a]`.
pub fn value_iteration(next: &[Vec<usize>], reward: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; next[0].len()]; next.len()];
    loop {
        let v: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        for s in 0..next.len() {
            for a in 0..next[s].len() {
                let new = reward[s][a] + gamma * v[next[s][a]];
                delta = delta.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if delta < 1e-13 {
            return q;
        }
    }
}

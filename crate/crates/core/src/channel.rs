//! Per-slot physical layer: Rayleigh channel draws, matched-filter decoding,
//! the MF-SIC SINR and Shannon achievable rates.
//!
//! Large-scale fading is ignored: every link has unit path loss, and every
//! link is redrawn independently in every slot.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::topology::{DbmRange, EntityId, EntityKind, Network, NoiseMode, Purpose, Stream};

/// Channel (or decoding) vector across the L cluster-head antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub Vec<Complex64>);

impl ChannelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Hermitian inner product `self^H other`.
    pub fn inner(&self, other: &ChannelVector) -> Complex64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

const HALF_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// i.i.d. CN(0, 1) entries: real and imaginary parts each N(0, 1/2).
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, antennas: usize) -> ChannelVector {
    ChannelVector(
        (0..antennas)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re * HALF_SQRT2, im * HALF_SQRT2)
            })
            .collect(),
    )
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Uniform draw in dBm, returned in linear milliwatts.
pub fn draw_power<R: Rng + ?Sized>(rng: &mut R, range: DbmRange) -> Result<f64> {
    if !(range.lo() <= range.hi()) {
        return Err(Error::config(
            "power_range",
            format!("inverted interval [{}, {}]", range.lo(), range.hi()),
        ));
    }
    let dbm = if range.lo() == range.hi() {
        range.lo()
    } else {
        rng.random_range(range.lo()..=range.hi())
    };
    Ok(dbm_to_mw(dbm))
}

/// Matched-filter decoding vector. The scale factor cancels out of the SINR,
/// so the channel itself is returned.
pub fn matched_filter(h: &ChannelVector) -> Result<ChannelVector> {
    if h.norm_sqr() == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    Ok(h.clone())
}

/// `log2(1 + sinr)` in bits per slot per hertz.
pub fn achievable_rate(sinr: f64) -> Result<f64> {
    if sinr.is_nan() || sinr < 0.0 {
        return Err(Error::Domain(format!("SINR must be non-negative, got {sinr}")));
    }
    Ok((1.0 + sinr).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRates {
    /// Sum over slots, one entry per UE.
    pub per_ue: Vec<f64>,
    /// Sum over UEs, one entry per slot.
    pub per_slot: Vec<f64>,
}

impl FrameRates {
    pub fn total(&self) -> f64 {
        self.per_ue.iter().sum()
    }
}

/// Aggregate `rates[ue][slot]` over a frame.
pub fn frame_rates(rates: &[Vec<f64>]) -> Result<FrameRates> {
    let slots = rates.first().map_or(0, Vec::len);
    if rates.iter().any(|r| r.len() != slots) {
        return Err(Error::Shape("every UE needs one rate per slot".into()));
    }
    let per_ue = rates.iter().map(|r| r.iter().sum()).collect();
    let per_slot = (0..slots).map(|s| rates.iter().map(|r| r[s]).sum()).collect();
    Ok(FrameRates { per_ue, per_slot })
}

/// One slot's transmit flags for a single cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotActivity {
    /// pUEs in roster order, then the iUE.
    pub ue: Vec<bool>,
    pub jammer: Vec<bool>,
}

impl SlotActivity {
    pub fn idle(ues: usize, jammers: usize) -> Self {
        Self {
            ue: vec![false; ues],
            jammer: vec![false; jammers],
        }
    }

    pub fn is_active(&self, id: EntityId) -> bool {
        match id.kind {
            EntityKind::Pue => self.ue[id.index],
            EntityKind::Iue => *self.ue.last().expect("cell without iUE"),
            EntityKind::Jammer => self.jammer[id.index],
            EntityKind::ClusterHead => false,
        }
    }

    pub fn set(&mut self, id: EntityId, on: bool) {
        match id.kind {
            EntityKind::Pue => self.ue[id.index] = on,
            EntityKind::Iue => *self.ue.last_mut().expect("cell without iUE") = on,
            EntityKind::Jammer => self.jammer[id.index] = on,
            EntityKind::ClusterHead => {}
        }
    }
}

/// Transmit power and channels of one transmitter towards every cluster head.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Linear transmit power in mW.
    pub power: f64,
    /// Channel to the cluster head of each cell, indexed by cell.
    pub to_ch: Vec<ChannelVector>,
}

/// Every channel vector and transmit power of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pue_count: usize,
    /// `links[cell][local]` with local order pUEs, iUE, jammers.
    links: Vec<Vec<Link>>,
    /// Noise variance at each cluster head.
    pub noise_variance: Vec<f64>,
}

impl ChannelDraw {
    pub fn new(pue_count: usize, links: Vec<Vec<Link>>, noise_variance: Vec<f64>) -> Result<Self> {
        if links.len() != noise_variance.len() {
            return Err(Error::Shape("one noise variance per cell required".into()));
        }
        for cell in &links {
            if cell.len() < pue_count + 1 {
                return Err(Error::Shape("cell roster shorter than pUEs plus iUE".into()));
            }
            if cell.iter().any(|l| l.to_ch.len() != links.len()) {
                return Err(Error::Shape("each link needs a channel to every cluster head".into()));
            }
            if cell.iter().any(|l| !(l.power > 0.0)) {
                return Err(Error::Domain("transmit powers must be positive".into()));
            }
        }
        Ok(Self {
            pue_count,
            links,
            noise_variance,
        })
    }

    fn local(&self, id: EntityId) -> usize {
        match id.kind {
            EntityKind::Pue => id.index,
            EntityKind::Iue => self.pue_count,
            EntityKind::Jammer => self.pue_count + 1 + id.index,
            EntityKind::ClusterHead => panic!("cluster heads do not transmit"),
        }
    }

    pub fn link(&self, id: EntityId) -> &Link {
        &self.links[id.cell][self.local(id)]
    }

    pub fn link_mut(&mut self, id: EntityId) -> &mut Link {
        let local = self.local(id);
        &mut self.links[id.cell][local]
    }

    pub fn channel(&self, from: EntityId, to_cell: usize) -> &ChannelVector {
        &self.link(from).to_ch[to_cell]
    }

    pub fn power(&self, id: EntityId) -> f64 {
        self.link(id).power
    }

    pub fn num_cells(&self) -> usize {
        self.links.len()
    }

    /// Transmitter ids of one cell in local order.
    fn cell_transmitters(&self, cell: usize) -> impl Iterator<Item = EntityId> + '_ {
        let n = self.links[cell].len();
        let pues = self.pue_count;
        (0..n).map(move |local| match local {
            l if l < pues => EntityId::pue(cell, l),
            l if l == pues => EntityId::iue(cell),
            l => EntityId::jammer(cell, l - pues - 1),
        })
    }
}

/// Options for the SINR computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SicMode {
    /// Remove intra-cell UEs decoded before the UE of interest.
    pub ordered: bool,
}

fn check_sinr_request(ue: EntityId, activity: &[SlotActivity], draw: &ChannelDraw) -> Result<()> {
    if !matches!(ue.kind, EntityKind::Pue | EntityKind::Iue) {
        return Err(Error::UndefinedSinr(format!("{ue} (not a legitimate UE)")));
    }
    if activity.len() != draw.num_cells() {
        return Err(Error::Shape("one SlotActivity per cell required".into()));
    }
    if !activity[ue.cell].is_active(ue) {
        return Err(Error::UndefinedSinr(ue.to_string()));
    }
    Ok(())
}

/// SINR at the cluster head of the UE's cell with an arbitrary decoding vector.
pub fn sinr_with_decoder(
    ue: EntityId,
    v: &ChannelVector,
    activity: &[SlotActivity],
    draw: &ChannelDraw,
) -> Result<f64> {
    check_sinr_request(ue, activity, draw)?;
    let k = ue.cell;
    let h = draw.channel(ue, k);
    let signal = draw.power(ue) * v.inner(h).norm_sqr();
    let mut denom = v.norm_sqr() * draw.noise_variance[k];
    for (i, act) in activity.iter().enumerate() {
        for other in draw.cell_transmitters(i) {
            if other == ue || !act.is_active(other) {
                continue;
            }
            denom += draw.power(other) * v.inner(draw.channel(other, k)).norm_sqr();
        }
    }
    Ok(signal / denom)
}

/// Matched-filter SINR of a transmitting legitimate UE, with intra-cell and
/// inter-cell UE interference, intra-cell and inter-cell jamming, and noise.
pub fn sinr_mf_sic(
    ue: EntityId,
    activity: &[SlotActivity],
    draw: &ChannelDraw,
    mode: SicMode,
) -> Result<f64> {
    check_sinr_request(ue, activity, draw)?;
    let k = ue.cell;
    let h = draw.channel(ue, k);
    let h_norm = h.norm_sqr();
    if h_norm == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    let p = draw.power(ue);
    let own_rx = p * h_norm;

    let mut interference = 0.0;
    for (i, act) in activity.iter().enumerate() {
        for other in draw.cell_transmitters(i) {
            if other == ue || !act.is_active(other) {
                continue;
            }
            let g = draw.channel(other, k);
            if mode.ordered && i == k && other.kind != EntityKind::Jammer {
                // Stronger intra-cell UEs are decoded first and subtracted;
                // ties go to the lower local index.
                let rx = draw.power(other) * g.norm_sqr();
                if rx > own_rx || (rx == own_rx && draw.local(other) < draw.local(ue)) {
                    continue;
                }
            }
            interference += draw.power(other) * h.inner(g).norm_sqr();
        }
    }
    let denom = interference + h_norm * draw.noise_variance[k];
    Ok(p * h_norm * h_norm / denom)
}

/// Per-entity channel, power and noise streams for slot-by-slot draws.
#[derive(Debug, Clone)]
pub struct PhyStreams {
    channel: Vec<Vec<Stream>>,
    power: Vec<Vec<Stream>>,
    noise: Vec<Stream>,
}

impl PhyStreams {
    pub fn new(network: &Network) -> Self {
        let rngs = network.rngs;
        let mut channel = Vec::with_capacity(network.num_cells());
        let mut power = Vec::with_capacity(network.num_cells());
        let mut noise = Vec::with_capacity(network.num_cells());
        for cell in &network.cells {
            channel.push(cell.transmitters().map(|id| rngs.stream(Purpose::Channel, id)).collect());
            power.push(cell.transmitters().map(|id| rngs.stream(Purpose::Power, id)).collect());
            noise.push(rngs.stream(Purpose::Power, cell.cluster_head()));
        }
        Self { channel, power, noise }
    }

    /// Draw the next slot. Every stream advances by the same amount each
    /// slot regardless of who transmits.
    pub fn draw_slot(&mut self, network: &Network) -> Result<ChannelDraw> {
        let cfg = &network.config;
        let k_cells = network.num_cells();
        let mut links = Vec::with_capacity(k_cells);
        for (k, cell) in network.cells.iter().enumerate() {
            let mut cell_links = Vec::new();
            for (local, id) in cell.transmitters().enumerate() {
                let range = match id.kind {
                    EntityKind::Pue => cfg.pue_power_dbm,
                    EntityKind::Iue => cfg.iue_power_dbm,
                    _ => cfg.jammer_power_dbm,
                };
                let power = draw_power(&mut self.power[k][local], range)?;
                let rng = &mut self.channel[k][local];
                let to_ch = (0..k_cells).map(|_| draw_channel(rng, cfg.antennas)).collect();
                cell_links.push(Link { power, to_ch });
            }
            links.push(cell_links);
        }
        let noise_variance = self
            .noise
            .iter_mut()
            .map(|rng| match cfg.noise_mode {
                NoiseMode::Fixed => Ok(cfg.noise_variance),
                NoiseMode::UniformDbm => draw_power(rng, cfg.noise_dbm_range),
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelDraw::new(cfg.pue_count, links, noise_variance)
    }
}

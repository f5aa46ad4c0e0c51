use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use super::arrivals::{next_arrival, ArrivalState};
use super::rng::{RngStream, ARRIVAL_STREAM, PROFILE_STREAM, SERVICE_STREAM};
use crate::model::{ArrivalSpec, LinkMode, LinkProfile, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PacketRecord {
    /// 1-based packet (or replication) index.
    pub index: u64,
    /// Slot at which the packet is available at node 1.
    pub a: u64,
    /// Slot at which the packet is delivered past the last link.
    pub b: u64,
}

impl PacketRecord {
    pub fn delay(&self) -> u64 {
        self.b - self.a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStats {
    pub packet_records: Vec<PacketRecord>,
    /// `node_waits[j][i]`: slots packet `i` spent at node `j + 1`, queueing
    /// plus service. Empty when waits were not recorded.
    pub node_waits: Vec<Vec<u64>>,
    pub horizon_slots: u64,
    pub dropped_warmup: u64,
    pub mode: LinkMode,
}

impl TraceStats {
    pub fn delays(&self) -> impl Iterator<Item = u64> + '_ {
        self.packet_records.iter().map(PacketRecord::delay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Per-node waits cost `r * packets` words; long cascades switch them off.
    pub record_node_waits: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            record_node_waits: true,
        }
    }
}

pub fn simulate_tandem(scenario: &Scenario) -> TraceStats {
    simulate_tandem_with(scenario, SimOptions::default())
}

/// Runs the cascade packet by packet.
///
/// Node `j` starts on a packet at `max(available, last success at j + 1)`
/// and succeeds after a shifted-geometric number of attempts, which is the
/// same law as per-slot Bernoulli attempts on the head-of-line packet.
/// Single-packet scenarios run `num_packets` independent replications
/// instead, each on its own streams.
pub fn simulate_tandem_with(scenario: &Scenario, opts: SimOptions) -> TraceStats {
    match scenario.arrivals {
        ArrivalSpec::SinglePacket => replicate_single(scenario, opts),
        _ => run_stream(scenario, opts),
    }
}

/// Link erasure probabilities of one run; probabilistic profiles are drawn
/// from their sampling law.
pub fn realize_links<R: Rng + ?Sized>(profile: &LinkProfile, rng: &mut R) -> Vec<f64> {
    match profile.fixed_sequence() {
        Some(seq) => seq,
        None => {
            let (probs, weights) = profile.weighted_alphabet();
            let pick = WeightedIndex::new(&weights).expect("validated sampling law");
            (0..profile.link_count())
                .map(|_| probs[pick.sample(rng)])
                .collect()
        }
    }
}

pub(crate) fn hop_laws(links: &[f64]) -> Vec<Geometric> {
    links
        .iter()
        .map(|&p| Geometric::new(1.0 - p).expect("erasure probability in [0, 1)"))
        .collect()
}

struct Cascade {
    hops: Vec<Geometric>,
    last_success: Vec<u64>,
    instantaneous: bool,
}

impl Cascade {
    fn new(links: &[f64], mode: LinkMode) -> Self {
        Cascade {
            hops: hop_laws(links),
            last_success: vec![0; links.len()],
            instantaneous: mode == LinkMode::Instantaneous,
        }
    }

    /// Pushes one packet through; returns its delivery slot.
    fn carry<R: Rng + ?Sized>(
        &mut self,
        arrival: u64,
        rng: &mut R,
        mut waits: Option<&mut [u64]>,
    ) -> u64 {
        let mut avail = arrival;
        for (j, hop) in self.hops.iter().enumerate() {
            let start = avail.max(self.last_success[j] + 1);
            let success = start + hop.sample(rng);
            self.last_success[j] = success;
            let next = if self.instantaneous {
                success
            } else {
                success + 1
            };
            if let Some(w) = waits.as_deref_mut() {
                w[j] = next - avail;
            }
            avail = next;
        }
        avail
    }
}

fn run_stream(scenario: &Scenario, opts: SimOptions) -> TraceStats {
    let seed = scenario.seed;
    let links = realize_links(
        &scenario.profile,
        &mut RngStream::for_replication(seed, 0, PROFILE_STREAM),
    );
    let mut arrival_rng = RngStream::for_replication(seed, 0, ARRIVAL_STREAM);
    let mut service_rng = RngStream::for_replication(seed, 0, SERVICE_STREAM);
    let mut cascade = Cascade::new(&links, scenario.mode);
    let warmup = scenario.warmup();
    let kept = scenario.num_packets.saturating_sub(warmup) as usize;
    let mut records = Vec::with_capacity(kept);
    let mut node_waits = if opts.record_node_waits {
        vec![Vec::with_capacity(kept); links.len()]
    } else {
        Vec::new()
    };
    let mut scratch = vec![0u64; links.len()];
    let mut state = ArrivalState::new(&scenario.arrivals, &mut arrival_rng);
    let mut now = 0u64;
    let mut horizon = 0u64;
    for index in 1..=scenario.num_packets {
        let (step, next) = next_arrival(&scenario.arrivals, state, &mut arrival_rng)
            .expect("stream arrivals never run dry");
        state = next;
        now += step;
        let b = cascade.carry(
            now,
            &mut service_rng,
            opts.record_node_waits.then_some(&mut scratch[..]),
        );
        horizon = b;
        if index > warmup {
            records.push(PacketRecord { index, a: now, b });
            for (col, &w) in node_waits.iter_mut().zip(&scratch) {
                col.push(w);
            }
        }
    }
    TraceStats {
        packet_records: records,
        node_waits,
        horizon_slots: horizon,
        dropped_warmup: warmup.min(scenario.num_packets),
        mode: scenario.mode,
    }
}

fn replicate_single(scenario: &Scenario, opts: SimOptions) -> TraceStats {
    let r = scenario.profile.link_count();
    let runs: Vec<(PacketRecord, Vec<u64>)> = (0..scenario.num_packets)
        .into_par_iter()
        .map(|rep| {
            let links = realize_links(
                &scenario.profile,
                &mut RngStream::for_replication(scenario.seed, rep, PROFILE_STREAM),
            );
            let mut rng = RngStream::for_replication(scenario.seed, rep, SERVICE_STREAM);
            let mut cascade = Cascade::new(&links, scenario.mode);
            let mut waits = if opts.record_node_waits {
                vec![0; r]
            } else {
                Vec::new()
            };
            let b = cascade.carry(
                1,
                &mut rng,
                opts.record_node_waits.then_some(&mut waits[..]),
            );
            (
                PacketRecord {
                    index: rep + 1,
                    a: 1,
                    b,
                },
                waits,
            )
        })
        .collect();
    let mut node_waits = if opts.record_node_waits {
        vec![Vec::with_capacity(runs.len()); r]
    } else {
        Vec::new()
    };
    for (_, waits) in &runs {
        for (col, &w) in node_waits.iter_mut().zip(waits) {
            col.push(w);
        }
    }
    let packet_records: Vec<PacketRecord> = runs.into_iter().map(|(rec, _)| rec).collect();
    TraceStats {
        horizon_slots: packet_records.iter().map(|p| p.b).max().unwrap_or(0),
        packet_records,
        node_waits,
        dropped_warmup: 0,
        mode: scenario.mode,
    }
}

/// Streams the per-packet trace as `packet_index,A,B` lines.
pub fn write_trace<W: Write>(stats: &TraceStats, mut out: W) -> io::Result<()> {
    writeln!(out, "packet_index,A,B")?;
    for p in &stats.packet_records {
        writeln!(out, "{},{},{}", p.index, p.a, p.b)?;
    }
    out.flush()
}

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::model::ArrivalSpec;

/// Process state carried between calls to [`next_arrival`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalState {
    Single {
        emitted: bool,
    },
    Geometric(Geometric),
    /// Index of the last emitted packet.
    Deterministic {
        index: u64,
    },
    GilbertElliott {
        bad: bool,
    },
}

impl ArrivalState {
    /// Fresh state; a Gilbert-Elliott chain starts from its stationary law.
    pub fn new<R: Rng + ?Sized>(spec: &ArrivalSpec, rng: &mut R) -> Self {
        match *spec {
            ArrivalSpec::SinglePacket => ArrivalState::Single { emitted: false },
            ArrivalSpec::Geometric { lambda } => {
                ArrivalState::Geometric(Geometric::new(lambda).expect("validated rate"))
            }
            ArrivalSpec::Deterministic { .. } => ArrivalState::Deterministic { index: 0 },
            ArrivalSpec::GilbertElliott { gamma, beta, .. } => {
                let bad = rng.random::<f64>() < gamma / (gamma + beta);
                ArrivalState::GilbertElliott { bad }
            }
        }
    }
}

/// Slots from the previous arrival (slot 0 initially) to the next one.
///
/// Returns `None` once a single-packet source is exhausted.
pub fn next_arrival<R: Rng + ?Sized>(
    spec: &ArrivalSpec,
    state: ArrivalState,
    rng: &mut R,
) -> Option<(u64, ArrivalState)> {
    match (*spec, state) {
        (ArrivalSpec::SinglePacket, ArrivalState::Single { emitted: false }) => {
            Some((1, ArrivalState::Single { emitted: true }))
        }
        (ArrivalSpec::SinglePacket, _) => None,
        (ArrivalSpec::Geometric { .. }, ArrivalState::Geometric(dist)) => {
            Some((dist.sample(rng) + 1, state))
        }
        (ArrivalSpec::Deterministic { a }, ArrivalState::Deterministic { index }) => {
            let at = |i: u64| (i as f64 * a).floor() as u64;
            Some((
                at(index + 1) - at(index),
                ArrivalState::Deterministic { index: index + 1 },
            ))
        }
        (
            ArrivalSpec::GilbertElliott {
                gamma,
                beta,
                epsilon,
            },
            ArrivalState::GilbertElliott { mut bad },
        ) => {
            let mut slots = 0;
            loop {
                slots += 1;
                bad = if bad {
                    rng.random::<f64>() >= beta
                } else {
                    rng.random::<f64>() < gamma
                };
                if bad || rng.random::<f64>() < epsilon {
                    return Some((slots, ArrivalState::GilbertElliott { bad }));
                }
            }
        }
        (spec, state) => panic!("arrival state {state:?} does not belong to {spec:?}"),
    }
}

//! Seeded random streams.
//!
//! Every random quantity is drawn from ChaCha8 keyed by the run seed, with a
//! distinct ChaCha stream id per consumer. Two consumers sharing a seed never
//! share keystream, and adding a consumer does not perturb the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// ChaCha stream ids. Values are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    NoiseLevel = 1,
    NoiseRate = 2,
    StructureMistakes = 3,
    FeatureRate = 4,
    SbmGraph = 10,
    SbmFeatures = 11,
    SbmMasks = 12,
    EdgeSplit = 13,
    Init = 20,
    Dropout = 21,
    NegativeSampling = 22,
    Fixture = 99,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

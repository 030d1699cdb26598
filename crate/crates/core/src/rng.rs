//! Seeded random streams: one independent ChaCha stream per flow and noise
//! source, so adding a flow leaves every other flow's samples unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum NoiseSource {
    FrameSizes = 1,
    Attention = 2,
    StartOffset = 3,
    Jitter = 4,
}

pub fn stream(seed: u64, flow: u32, source: NoiseSource) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(flow) << 8) | source as u64);
    rng
}

//! Seeded random streams. A single user seed fans out into independent,
//! named ChaCha streams so that e.g. changing the split does not perturb
//! data generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Sampling,
    Generation,
    Labels,
    Queries,
    Search,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Split => 1,
            Stream::Sampling => 2,
            Stream::Generation => 3,
            Stream::Labels => 4,
            Stream::Queries => 5,
            Stream::Search => 6,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

//! Seed plumbing: independent named sub-streams derived from one master seed.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed; the label
//! selects the ChaCha stream id, so streams never share key-stream words.
//!
//! | label         | stream id | consumer                                |
//! |---------------|-----------|-----------------------------------------|
//! | `init-clocks` | 1         | initial node clocks, in node-id order   |
//! | `links`       | 2         | link realizations, tick by tick         |
//! | `noise`       | 3         | malicious colored-noise innovations     |
//! | `replicate`   | 4         | seeds of repeats and multi-seed studies |

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitClocks,
    Links,
    Noise,
    Replicate,
}

impl Stream {
    pub fn label(self) -> &'static str {
        match self {
            Stream::InitClocks => "init-clocks",
            Stream::Links => "links",
            Stream::Noise => "noise",
            Stream::Replicate => "replicate",
        }
    }

    fn id(self) -> u64 {
        match self {
            Stream::InitClocks => 1,
            Stream::Links => 2,
            Stream::Noise => 3,
            Stream::Replicate => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPlan {
    seed: u64,
}

impl RngPlan {
    pub fn new(seed: u64) -> Self {
        RngPlan { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.id());
        rng
    }

    /// The `index`-th derived seed; used for repeats and seed sweeps. Seeds
    /// keep 63 bits so they stay valid TOML integers.
    pub fn replicate_seed(&self, index: u64) -> u64 {
        let mut rng = self.stream(Stream::Replicate);
        // two 32-bit words per u64
        rng.set_word_pos(u128::from(index) * 2);
        rng.next_u64() >> 1
    }
}

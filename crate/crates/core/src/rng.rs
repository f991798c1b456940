//! Named random streams split from one master seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream, selected by
//! a hashed (kind, index) pair. Results therefore never depend on the order
//! in which parallel workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    DesignInit,
    DesignMutation,
    /// Controller training of the n-th evaluated design.
    ControllerTraining(u64),
    /// The n-th full-budget retraining of a run.
    Retraining(u64),
    /// Post-hoc retraining of a logged design, keyed by its genome id.
    Reassessment(u64),
    Bootstrap(u64),
}

impl StreamKind {
    fn id(self) -> u64 {
        let (tag, index) = match self {
            StreamKind::DesignInit => (1, 0),
            StreamKind::DesignMutation => (2, 0),
            StreamKind::ControllerTraining(i) => (3, i),
            StreamKind::Retraining(i) => (4, i),
            StreamKind::Reassessment(i) => (5, i),
            StreamKind::Bootstrap(i) => (6, i),
        };
        splitmix64(splitmix64(tag) ^ index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        Self { master: master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, kind: StreamKind) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.master));
        rng.set_stream(kind.id());
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

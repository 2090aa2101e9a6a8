use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent random substreams derived from one master seed.
///
/// Each consumer draws from its own ChaCha stream, so adding draws to one
/// consumer never shifts the sequence another consumer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RngStream {
    Arrivals,
    FlowSizes,
    BetaJitter,
    Aqm,
    Ecmp,
    Isn,
    Placement,
}

impl RngStream {
    fn id(self) -> u64 {
        match self {
            RngStream::Arrivals => 1,
            RngStream::FlowSizes => 2,
            RngStream::BetaJitter => 3,
            RngStream::Aqm => 4,
            RngStream::Ecmp => 5,
            RngStream::Isn => 6,
            RngStream::Placement => 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(master_seed: u64, stream: RngStream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream.id());
        StreamRng { inner }
    }

    /// Uniform draw on `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo <= hi, "uniform: lo > hi");
        if lo == hi {
            return lo;
        }
        let u: f64 = self.inner.gen();
        let v = lo + (hi - lo) * u;
        if v >= hi {
            lo
        } else {
            v
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.gen()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

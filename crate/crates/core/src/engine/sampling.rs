use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Poisson subsampling: every index in `0..n` is kept independently with
/// probability `rate`.
pub fn poisson_sample<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<usize> {
    if rate >= 1.0 {
        return (0..n).collect();
    }
    (0..n).filter(|_| rng.random::<f64>() < rate).collect()
}

/// Role of each independent random stream derived from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 0,
    TrainSampling = 1,
    GradientNoise = 2,
    ValidSampling = 3,
    ValidNoise = 4,
}

/// Serializable position of one ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

/// The five seeded streams a run draws from. Sampling and noise for the
/// training and validation phases never share a stream, so accepting or
/// rejecting a candidate does not shift later training randomness.
#[derive(Clone, Debug)]
pub struct RngStreams {
    streams: [ChaCha12Rng; 5],
}

impl RngStreams {
    pub fn from_seed(seed: u64) -> Self {
        let make = |id: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            streams: [make(0), make(1), make(2), make(3), make(4)],
        }
    }

    pub fn get(&mut self, which: Stream) -> &mut ChaCha12Rng {
        &mut self.streams[which as usize]
    }

    pub fn states(&self) -> Vec<StreamState> {
        self.streams
            .iter()
            .map(|rng| StreamState {
                seed: rng.get_seed(),
                stream: rng.get_stream(),
                word_pos: rng.get_word_pos(),
            })
            .collect()
    }

    pub fn from_states(states: &[StreamState]) -> Result<Self> {
        if states.len() != 5 {
            return Err(Error::Checkpoint(format!("expected 5 RNG streams, found {}", states.len())));
        }
        let restore = |s: &StreamState| {
            let mut rng = ChaCha12Rng::from_seed(s.seed);
            rng.set_stream(s.stream);
            rng.set_word_pos(s.word_pos);
            rng
        };
        Ok(Self {
            streams: [
                restore(&states[0]),
                restore(&states[1]),
                restore(&states[2]),
                restore(&states[3]),
                restore(&states[4]),
            ],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rate_takes_everything() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(poisson_sample(17, 1.0, &mut rng), (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn batch_sizes_follow_binomial_statistics() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (n, q, trials) = (100_000usize, 0.5, 100);
        let total: usize = (0..trials).map(|_| poisson_sample(n, q, &mut rng).len()).sum();
        let mean = total as f64 / trials as f64;
        // Standard error of the mean of 100 binomial(1e5, 0.5) draws.
        let se = (n as f64 * q * (1.0 - q) / trials as f64).sqrt();
        assert!((mean - 50_000.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let a = poisson_sample(1000, 0.1, &mut ChaCha12Rng::seed_from_u64(4));
        let b = poisson_sample(1000, 0.1, &mut ChaCha12Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn streams_are_distinct_and_restorable() {
        let mut s = RngStreams::from_seed(7);
        let a: u64 = s.get(Stream::TrainSampling).random();
        let b: u64 = s.get(Stream::ValidSampling).random();
        assert_ne!(a, b);
        let states = s.states();
        let mut restored = RngStreams::from_states(&states).unwrap();
        for which in [Stream::Init, Stream::GradientNoise, Stream::ValidNoise, Stream::TrainSampling] {
            let x: u64 = s.get(which).random();
            let y: u64 = restored.get(which).random();
            assert_eq!(x, y);
        }
        assert!(RngStreams::from_states(&states[..2]).is_err());
    }
}

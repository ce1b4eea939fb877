//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a [`SeedStream`]: one root seed
//! plus a list of integer labels. The labels are folded with splitmix64 into a
//! ChaCha8 stream id, so the stream used by (purpose, i, j, batch) is fixed no
//! matter which worker picks the batch up. Monte Carlo loops are cut into
//! fixed-size batches, each with its own stream, and batch results are merged
//! by integer addition. Results are therefore independent of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of trials in one Monte Carlo batch.
pub const BATCH_SIZE: u64 = 4096;

/// Stream purposes. Used as the first label of every substream key.
pub mod purpose {
    pub const CONSTRUCT: u64 = 1;
    pub const SATURATION: u64 = 2;
    pub const DENSITY: u64 = 3;
    pub const TYPE1: u64 = 4;
    pub const TYPE2: u64 = 5;
    pub const CONVERSE: u64 = 6;
    pub const SWEEP: u64 = 7;
    pub const PAIRS: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    root: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream id for a label path.
    pub fn stream_id(labels: &[u64]) -> u64 {
        labels
            .iter()
            .fold(0x5EED_u64, |acc, &l| splitmix64(acc ^ splitmix64(l)))
    }

    /// An independent generator for the given label path.
    pub fn substream(&self, labels: &[u64]) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(Self::stream_id(labels));
        rng
    }

    /// Runs `trials` Bernoulli-style experiments in parallel batches and returns
    /// how often each of the `K` events fired.
    pub fn count_events<const K: usize, F>(&self, labels: &[u64], trials: u64, f: F) -> [u64; K]
    where
        F: Fn(&mut ChaCha8Rng) -> [bool; K] + Sync,
    {
        let batches = trials.div_ceil(BATCH_SIZE);
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut key = labels.to_vec();
                key.push(b);
                let mut rng = self.substream(&key);
                let len = BATCH_SIZE.min(trials - b * BATCH_SIZE);
                let mut counts = [0u64; K];
                for _ in 0..len {
                    let hits = f(&mut rng);
                    for (c, h) in counts.iter_mut().zip(hits) {
                        *c += h as u64;
                    }
                }
                counts
            })
            .reduce(
                || [0u64; K],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            )
    }

    /// Parallel batched sum of a real-valued statistic and its square.
    /// Batch partial sums are combined in batch order, so the result is
    /// bitwise reproducible.
    pub fn sum_moments<F>(&self, labels: &[u64], trials: u64, f: F) -> (f64, f64)
    where
        F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    {
        let batches = trials.div_ceil(BATCH_SIZE);
        let partial: Vec<(f64, f64)> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut key = labels.to_vec();
                key.push(b);
                let mut rng = self.substream(&key);
                let len = BATCH_SIZE.min(trials - b * BATCH_SIZE);
                let mut s = 0.0;
                let mut s2 = 0.0;
                for _ in 0..len {
                    let v = f(&mut rng);
                    s += v;
                    s2 += v * v;
                }
                (s, s2)
            })
            .collect();
        partial
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
    }
}

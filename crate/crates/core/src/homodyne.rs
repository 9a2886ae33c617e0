//! Balanced homodyne phase estimation.
//!
//! A signal `|b>` and local oscillator `|c>` meet on a balanced splitter;
//! the detected quantity is the photon-number difference of the two outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const MIN_TRIALS: u64 = 1000;
/// Trials drawn from one ChaCha stream; block `k` uses stream `k`.
pub const BLOCK_TRIALS: u64 = 1 << 14;
const COS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HomodyneError {
    #[error("cos(delta) = {0:e}: sensitivity diverges")]
    DivergentSensitivity(f64),
    #[error("signal amplitude is zero")]
    ZeroSignal,
    #[error("{0} trials requested, at least {MIN_TRIALS} needed")]
    InsufficientTrials(u64),
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
}

pub type Result<T> = std::result::Result<T, HomodyneError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomodyneSetup {
    pub b_mag: f64,
    pub c_mag: f64,
    pub delta: f64,
}

impl HomodyneSetup {
    pub fn new(b_mag: f64, c_mag: f64, delta: f64) -> Result<Self> {
        if !(b_mag >= 0.0 && b_mag.is_finite()) {
            return Err(HomodyneError::InvalidSetup(format!(
                "signal amplitude {b_mag}"
            )));
        }
        if !(c_mag > 0.0 && c_mag.is_finite()) {
            return Err(HomodyneError::InvalidSetup(format!(
                "oscillator amplitude {c_mag}"
            )));
        }
        if !delta.is_finite() {
            return Err(HomodyneError::InvalidSetup(format!("phase {delta}")));
        }
        Ok(Self {
            b_mag,
            c_mag,
            delta,
        })
    }

    /// Signal after noiseless amplification, `|b| -> g |b|`.
    pub fn amplified(&self, g: f64) -> Self {
        Self {
            b_mag: g * self.b_mag,
            ..*self
        }
    }

    /// Mean photon numbers at the two splitter outputs.
    pub fn output_intensities(&self) -> (f64, f64) {
        let (b, c) = (self.b_mag, self.c_mag);
        let cross = b * c * self.delta.sin();
        let common = (b * b + c * c) / 2.0;
        ((common + cross).max(0.0), (common - cross).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomodyneStats {
    pub mean: f64,
    pub std: f64,
    pub sensitivity: f64,
}

pub fn mean_difference(s: &HomodyneSetup) -> f64 {
    2.0 * s.b_mag * s.c_mag * s.delta.sin()
}

pub fn std_difference(s: &HomodyneSetup) -> f64 {
    s.b_mag.hypot(s.c_mag)
}

/// Error-propagated phase uncertainty `sqrt(1 + (|c|/|b|)^2) / (2 |c| |cos delta|)`.
pub fn sensitivity(s: &HomodyneSetup) -> Result<f64> {
    let cos = s.delta.cos();
    if cos.abs() <= COS_FLOOR {
        return Err(HomodyneError::DivergentSensitivity(cos));
    }
    if s.b_mag == 0.0 {
        return Err(HomodyneError::ZeroSignal);
    }
    let ratio = s.c_mag / s.b_mag;
    Ok((1.0 + ratio * ratio).sqrt() / (2.0 * s.c_mag * cos.abs()))
}

pub fn homodyne_stats(s: &HomodyneSetup) -> Result<HomodyneStats> {
    Ok(HomodyneStats {
        mean: mean_difference(s),
        std: std_difference(s),
        sensitivity: sensitivity(s)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Empirical {
    pub emp_mean: f64,
    pub emp_std: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Exact integer moments of the sampled differences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Sums {
    n: u64,
    sum: i128,
    sum_sq: i128,
}

impl Sums {
    fn merge(self, o: Sums) -> Sums {
        Sums {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn finish(self, seed: u64) -> Empirical {
        let n = self.n as f64;
        let mean = self.sum as f64 / n;
        // n * sum_sq - sum^2 is exact in i128
        let centered = (self.n as i128) * self.sum_sq - self.sum * self.sum;
        let var = centered as f64 / (n * (n - 1.0));
        Empirical {
            emp_mean: mean,
            emp_std: var.max(0.0).sqrt(),
            trials: self.n,
            seed,
        }
    }
}

fn sampler(lambda: f64) -> Option<Poisson<f64>> {
    (lambda > 0.0).then(|| Poisson::new(lambda).expect("positive finite rate"))
}

fn run_block(s: &HomodyneSetup, seed: u64, block: u64, trials: u64) -> Sums {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let (l1, l2) = s.output_intensities();
    let (p1, p2) = (sampler(l1), sampler(l2));
    let mut draw = |p: &Option<Poisson<f64>>| p.as_ref().map_or(0, |d| d.sample(&mut rng) as i64);
    let mut out = Sums {
        n: trials,
        ..Sums::default()
    };
    for _ in 0..trials {
        let n1 = draw(&p1);
        let n2 = draw(&p2);
        let diff = (n1 - n2) as i128;
        out.sum += diff;
        out.sum_sq += diff * diff;
    }
    out
}

fn block_sizes(trials: u64) -> impl Iterator<Item = (u64, u64)> {
    let blocks = trials.div_ceil(BLOCK_TRIALS);
    (0..blocks).map(move |k| (k, BLOCK_TRIALS.min(trials - k * BLOCK_TRIALS)))
}

/// Monte Carlo estimate of the difference statistics from independent
/// Poisson counts at the two outputs.
pub fn simulate_homodyne(s: &HomodyneSetup, trials: u64, seed: u64) -> Result<Empirical> {
    simulate_homodyne_sharded(s, trials, seed, 1)
}

/// As [`simulate_homodyne`], with the blocks distributed over `shards`
/// workers. Every block owns its random stream and the merge adds integers,
/// so the result does not depend on `shards`.
pub fn simulate_homodyne_sharded(
    s: &HomodyneSetup,
    trials: u64,
    seed: u64,
    shards: usize,
) -> Result<Empirical> {
    if trials < MIN_TRIALS {
        return Err(HomodyneError::InsufficientTrials(trials));
    }
    let blocks: Vec<(u64, u64)> = block_sizes(trials).collect();
    let shards = shards.max(1);
    let per_shard = blocks.len().div_ceil(shards).max(1);
    let total = if shards == 1 {
        blocks.iter().fold(Sums::default(), |acc, &(k, n)| {
            acc.merge(run_block(s, seed, k, n))
        })
    } else {
        blocks
            .par_chunks(per_shard)
            .map(|chunk| {
                chunk.iter().fold(Sums::default(), |acc, &(k, n)| {
                    acc.merge(run_block(s, seed, k, n))
                })
            })
            .reduce(Sums::default, Sums::merge)
    };
    Ok(total.finish(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub mean: f64,
    pub std: f64,
    /// `None` where the sensitivity diverges or the signal vanishes.
    pub sensitivity: Option<f64>,
    pub emp_mean: f64,
    pub emp_std: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Analytic and simulated statistics over a grid of signal amplitudes and
/// phases. Grid point `k` is simulated with seed `seed + k`.
pub fn sweep(
    b_values: &[f64],
    c_mag: f64,
    deltas: &[f64],
    trials: u64,
    seed: u64,
    shards: usize,
) -> Result<Vec<SweepRow>> {
    let mut points = Vec::new();
    for &b in b_values {
        for &delta in deltas {
            points.push(HomodyneSetup::new(b, c_mag, delta)?);
        }
    }
    points
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let point_seed = seed.wrapping_add(k as u64);
            let emp = simulate_homodyne_sharded(s, trials, point_seed, shards)?;
            Ok(SweepRow {
                b: s.b_mag,
                c: s.c_mag,
                delta: s.delta,
                mean: mean_difference(s),
                std: std_difference(s),
                sensitivity: sensitivity(s).ok(),
                emp_mean: emp.emp_mean,
                emp_std: emp.emp_std,
                trials,
                seed: point_seed,
            })
        })
        .collect()
}

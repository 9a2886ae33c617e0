//! Loss channels and the decay of phase-space distance.
//!
//! Under loss with rate `gamma(t)` and `Gamma(t) = int_0^t gamma`, first
//! moments shrink by `exp(-Gamma/2)` and the covariance relaxes toward the
//! vacuum: `gamma_cov -> exp(-Gamma) gamma_cov + (1 - exp(-Gamma)) I`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{phase_distance, GaussianState};
use crate::linalg::{CMatrix, ZERO};
use crate::state::{DensityMatrix, StateError};

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("times are not strictly increasing at index {0}")]
    UnsortedTimes(usize),
    #[error("{0} points given, at least 3 needed")]
    TooFewPoints(usize),
    #[error("threshold {threshold} is not reachable from distance {distance}")]
    ThresholdUnreachable { threshold: f64, distance: f64 },
    #[error("integrated rate {0} is negative: the map is not a physical channel")]
    Unphysical(f64),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error(transparent)]
    State(#[from] StateError),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelModel {
    /// Constant damping rate.
    PureLoss { rate: f64 },
    /// `gamma(t) = base + amplitude cos(omega t)`.
    Oscillating {
        base: f64,
        amplitude: f64,
        omega: f64,
    },
    /// Piecewise-linear rate through `(times[k], rates[k])`, held constant
    /// past the last knot. `times[0]` must be 0.
    Tabulated { times: Vec<f64>, rates: Vec<f64> },
}

impl ChannelModel {
    pub fn unit_loss() -> Self {
        ChannelModel::PureLoss { rate: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::PureLoss { rate } if !(rate.is_finite() && *rate >= 0.0) => {
                Err(ChannelError::InvalidChannel(format!("rate {rate}")))
            }
            ChannelModel::Oscillating {
                base,
                amplitude,
                omega,
            } if !(base.is_finite() && amplitude.is_finite() && omega.is_finite()) => {
                Err(ChannelError::InvalidChannel("non-finite parameter".into()))
            }
            ChannelModel::Tabulated { times, rates } => {
                if times.is_empty() || times.len() != rates.len() {
                    return Err(ChannelError::InvalidChannel(
                        "times and rates must be non-empty and aligned".into(),
                    ));
                }
                if times[0] != 0.0 {
                    return Err(ChannelError::InvalidChannel(
                        "first knot must be at t = 0".into(),
                    ));
                }
                if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
                    return Err(ChannelError::UnsortedTimes(k + 1));
                }
                if rates.iter().any(|r| !r.is_finite()) {
                    return Err(ChannelError::InvalidChannel("non-finite rate".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Instantaneous rate `gamma(t)`.
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            ChannelModel::PureLoss { rate } => *rate,
            ChannelModel::Oscillating {
                base,
                amplitude,
                omega,
            } => base + amplitude * (omega * t).cos(),
            ChannelModel::Tabulated { times, rates } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    rates[0]
                } else if k == times.len() {
                    rates[k - 1]
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    rates[k - 1] + w * (rates[k] - rates[k - 1])
                }
            }
        }
    }

    /// `Gamma(t) = int_0^t gamma(s) ds`.
    pub fn integrated(&self, t: f64) -> f64 {
        match self {
            ChannelModel::PureLoss { rate } => rate * t,
            ChannelModel::Oscillating {
                base,
                amplitude,
                omega,
            } => {
                if *omega == 0.0 {
                    (base + amplitude) * t
                } else {
                    base * t + amplitude * (omega * t).sin() / omega
                }
            }
            ChannelModel::Tabulated { times, rates } => {
                let mut acc = 0.0;
                for k in 1..times.len() {
                    if t <= times[k - 1] {
                        return acc;
                    }
                    let hi = t.min(times[k]);
                    let (r0, r1) = (rates[k - 1], self.rate(hi));
                    acc += 0.5 * (r0 + r1) * (hi - times[k - 1]);
                    if t <= times[k] {
                        return acc;
                    }
                }
                acc + rates[rates.len() - 1] * (t - times[times.len() - 1])
            }
        }
    }

    /// True when the rate is nonnegative everywhere, so `Gamma` never decreases.
    pub fn is_markovian(&self) -> bool {
        match self {
            ChannelModel::PureLoss { rate } => *rate >= 0.0,
            ChannelModel::Oscillating {
                base,
                amplitude,
                omega,
            } => {
                if *omega == 0.0 {
                    base + amplitude >= 0.0
                } else {
                    *base >= amplitude.abs()
                }
            }
            ChannelModel::Tabulated { rates, .. } => rates.iter().all(|&r| r >= 0.0),
        }
    }

    pub fn is_constant_rate(&self) -> bool {
        match self {
            ChannelModel::PureLoss { .. } => true,
            ChannelModel::Oscillating {
                amplitude, omega, ..
            } => *amplitude == 0.0 || *omega == 0.0,
            ChannelModel::Tabulated { rates, .. } => rates.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Transmissivity `exp(-Gamma(t))`.
    pub fn transmissivity(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(ChannelError::NegativeTime(t));
        }
        let big = self.integrated(t);
        if big < 0.0 {
            return Err(ChannelError::Unphysical(big));
        }
        Ok((-big).exp())
    }
}

pub fn apply_loss(state: &GaussianState, channel: &ChannelModel, t: f64) -> Result<GaussianState> {
    let eta = channel.transmissivity(t)?;
    let s = eta.sqrt();
    let g = state.gamma;
    let off = eta * g[0][1];
    Ok(GaussianState {
        d: [s * state.d[0], s * state.d[1]],
        gamma: [
            [eta * g[0][0] + (1.0 - eta), off],
            [off, eta * g[1][1] + (1.0 - eta)],
        ],
        label: state.label.clone(),
    })
}

pub fn apply_loss_coherent(alpha: Complex64, channel: &ChannelModel, t: f64) -> Result<Complex64> {
    Ok(alpha * channel.transmissivity(t)?.sqrt())
}

/// `(t, D(t))` for a pair sent through the same channel.
pub fn distance_trajectory(
    a: &GaussianState,
    b: &GaussianState,
    channel: &ChannelModel,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if let Some(&t) = times.first() {
        if t < 0.0 {
            return Err(ChannelError::NegativeTime(t));
        }
    }
    if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(ChannelError::UnsortedTimes(k + 1));
    }
    times
        .iter()
        .map(|&t| {
            Ok((
                t,
                phase_distance(&apply_loss(a, channel, t)?, &apply_loss(b, channel, t)?),
            ))
        })
        .collect()
}

/// Uniform grid `t0, t0 + dt, ...` up to and including `t1` (within `dt / 2`).
pub fn time_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt + 0.5).floor().max(0.0) as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

/// `chi = dD/dt` by second-order finite differences on a possibly
/// nonuniform grid; one-sided three-point stencils at the ends.
pub fn decay_rate(series: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let n = series.len();
    if n < 3 {
        return Err(ChannelError::TooFewPoints(n));
    }
    if let Some(k) = series.windows(2).position(|w| !(w[1].0 > w[0].0)) {
        return Err(ChannelError::UnsortedTimes(k + 1));
    }
    let t = |k: usize| series[k].0;
    let y = |k: usize| series[k].1;
    // derivative at x of the parabola through three points
    let stencil = |i: usize, j: usize, k: usize, x: f64| {
        let (ti, tj, tk) = (t(i), t(j), t(k));
        y(i) * (2.0 * x - tj - tk) / ((ti - tj) * (ti - tk))
            + y(j) * (2.0 * x - ti - tk) / ((tj - ti) * (tj - tk))
            + y(k) * (2.0 * x - ti - tj) / ((tk - ti) * (tk - tj))
    };
    Ok((0..n)
        .map(|m| {
            let chi = if m == 0 {
                stencil(0, 1, 2, t(0))
            } else if m == n - 1 {
                stencil(n - 3, n - 2, n - 1, t(n - 1))
            } else {
                stencil(m - 1, m, m + 1, t(m))
            };
            (t(m), chi)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Horizons {
    pub t_plain: f64,
    pub t_amplified: f64,
}

/// Times at which the plain distance `D(t)` and the amplified distance
/// `g^2 D(t)` fall to `threshold` under a constant-rate channel.
pub fn detection_horizon(
    a: &GaussianState,
    b: &GaussianState,
    gain: f64,
    channel: &ChannelModel,
    threshold: f64,
) -> Result<Horizons> {
    let rate = match channel {
        ChannelModel::PureLoss { rate } if *rate > 0.0 => *rate,
        _ => {
            return Err(ChannelError::InvalidChannel(
                "horizons need a positive constant rate".into(),
            ))
        }
    };
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(ChannelError::InvalidChannel(format!("gain {gain}")));
    }
    let d0 = phase_distance(a, b);
    let amplified = gain * gain * d0;
    if !(threshold > 0.0) || threshold >= d0 || threshold >= amplified {
        return Err(ChannelError::ThresholdUnreachable {
            threshold,
            distance: d0.min(amplified),
        });
    }
    Ok(Horizons {
        t_plain: (d0 / threshold).ln() / rate,
        t_amplified: (amplified / threshold).ln() / rate,
    })
}

/// Amplitude-damping Kraus operators with transmissivity `eta`:
/// `A_k = sum_n sqrt(C(n, k)) eta^((n-k)/2) (1-eta)^(k/2) |n-k><n|`.
pub fn loss_kraus(eta: f64, dim: usize) -> Vec<CMatrix> {
    let mut ops = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut a = CMatrix::zeros(dim, dim);
        let mut binom = 1.0f64;
        for n in k..dim {
            if n > k {
                binom *= n as f64 / (n - k) as f64;
            }
            let amp =
                binom.sqrt() * eta.powf((n - k) as f64 / 2.0) * (1.0 - eta).powf(k as f64 / 2.0);
            a[(n - k, n)] = Complex64::new(amp, 0.0);
        }
        ops.push(a);
    }
    ops
}

/// Loss applied in the truncated Fock basis.
pub fn apply_loss_fock(
    rho: &DensityMatrix,
    channel: &ChannelModel,
    t: f64,
) -> Result<DensityMatrix> {
    let eta = channel.transmissivity(t)?;
    let dim = rho.dim();
    let out = loss_kraus(eta, dim)
        .iter()
        .fold(CMatrix::from_element(dim, dim, ZERO), |acc, a| {
            acc + a * rho.matrix() * a.adjoint()
        });
    Ok(DensityMatrix::new(out)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub d_plain: f64,
    pub d_amplified: f64,
    pub chi_plain: f64,
    pub chi_amplified: f64,
}

/// Plain and amplified (`d -> gain d`) pair trajectories with their decay rates.
pub fn compare_trajectories(
    a: &GaussianState,
    b: &GaussianState,
    gain: f64,
    channel: &ChannelModel,
    times: &[f64],
) -> Result<Vec<TrajectoryRow>> {
    let plain = distance_trajectory(a, b, channel, times)?;
    let amp = distance_trajectory(&a.amplified(gain), &b.amplified(gain), channel, times)?;
    let chi_p = decay_rate(&plain)?;
    let chi_a = decay_rate(&amp)?;
    Ok((0..times.len())
        .map(|k| TrajectoryRow {
            t: times[k],
            d_plain: plain[k].1,
            d_amplified: amp[k].1,
            chi_plain: chi_p[k].1,
            chi_amplified: chi_a[k].1,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::moments_from_fock;
    use crate::state::{make_coherent_state, trace_distance};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn oscillating() -> ChannelModel {
        ChannelModel::Oscillating {
            base: 1.0,
            amplitude: 1.5,
            omega: 2.0,
        }
    }

    #[test]
    fn loss_examples() {
        let ch = ChannelModel::unit_loss();
        let s = GaussianState::thermal(0.7).unwrap().rotated(0.0);
        let s = GaussianState {
            d: [0.3, -1.1],
            ..s
        };
        assert_eq!(apply_loss(&s, &ch, 0.0).unwrap(), s);
        let vac = GaussianState::vacuum();
        for t in [0.1, 1.0, 5.0] {
            assert_eq!(apply_loss(&vac, &ch, t).unwrap(), vac);
        }
        let a = apply_loss_coherent(c(1.0, 0.0), &ch, 4f64.ln()).unwrap();
        assert!((a - c(0.5, 0.0)).norm() < 1e-15);
        let g = apply_loss(&GaussianState::coherent(c(1.0, 0.0)), &ch, 4f64.ln()).unwrap();
        assert_eq!(g.gamma, [[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            apply_loss(&s, &ch, -1.0),
            Err(ChannelError::NegativeTime(_))
        ));
    }

    #[test]
    fn semigroup() {
        let ch = ChannelModel::PureLoss { rate: 0.8 };
        let s = GaussianState {
            d: [0.9, 0.4],
            gamma: [[2.0, 0.3], [0.3, 1.5]],
            label: None,
        };
        let two = apply_loss(&apply_loss(&s, &ch, 0.4).unwrap(), &ch, 1.1).unwrap();
        let one = apply_loss(&s, &ch, 1.5).unwrap();
        for i in 0..2 {
            assert!((two.d[i] - one.d[i]).abs() < 1e-12);
            for j in 0..2 {
                assert!((two.gamma[i][j] - one.gamma[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_examples() {
        let ch = ChannelModel::unit_loss();
        let a = GaussianState::coherent(c(0.2, 0.1));
        let b = GaussianState::coherent(c(-0.5, 0.6));
        let d0 = phase_distance(&a, &b);
        let times = time_grid(0.0, 3.0, 0.25);
        for (t, d) in distance_trajectory(&a, &b, &ch, &times).unwrap() {
            assert!((d - (-t).exp() * d0).abs() < 1e-12);
        }
        let rows = compare_trajectories(&a, &b, 2.0, &ch, &times).unwrap();
        for r in &rows {
            assert!((r.d_amplified - 4.0 * r.d_plain).abs() < 1e-12 && r.d_amplified > r.d_plain);
        }
        let same = distance_trajectory(&a, &a, &ch, &times).unwrap();
        assert!(same.iter().all(|&(_, d)| d == 0.0));
        assert!(matches!(
            distance_trajectory(&a, &b, &ch, &[0.0, 0.5, 0.5]),
            Err(ChannelError::UnsortedTimes(2))
        ));
    }

    #[test]
    fn decay_rate_examples() {
        let ch = ChannelModel::unit_loss();
        let a = GaussianState::vacuum();
        let b = GaussianState::coherent(c(1.0, 0.0));
        let times = time_grid(0.0, 2.0, 1e-3);
        let chi = decay_rate(&distance_trajectory(&a, &b, &ch, &times).unwrap()).unwrap();
        let (t, v) = chi[1000];
        assert!((t - 1.0).abs() < 1e-12);
        assert!((v + 2.0 * (-1.0f64).exp()).abs() < 1e-5);

        let flat: Vec<_> = (0..5).map(|k| (k as f64, 3.0)).collect();
        assert!(decay_rate(&flat)
            .unwrap()
            .iter()
            .all(|&(_, x)| x.abs() < 1e-15));
        assert!(matches!(
            decay_rate(&flat[..2]),
            Err(ChannelError::TooFewPoints(2))
        ));
    }

    #[test]
    fn decay_rate_second_order() {
        let ch = ChannelModel::unit_loss();
        let a = GaussianState::vacuum();
        let b = GaussianState::coherent(c(1.0, 0.0));
        let err = |dt: f64| {
            let times = [1.0 - dt, 1.0, 1.0 + dt];
            let chi = decay_rate(&distance_trajectory(&a, &b, &ch, &times).unwrap()).unwrap();
            (chi[1].1 + 2.0 * (-1.0f64).exp()).abs()
        };
        assert!(err(0.02) / err(0.01) >= 3.5);
        // end stencils are second order as well
        let end = |dt: f64| {
            let times = [1.0, 1.0 + dt, 1.0 + 2.0 * dt];
            let chi = decay_rate(&distance_trajectory(&a, &b, &ch, &times).unwrap()).unwrap();
            (chi[0].1 + 2.0 * (-1.0f64).exp()).abs()
        };
        assert!(end(0.02) / end(0.01) >= 3.5);
    }

    #[test]
    fn oscillating_rate_revivals() {
        let ch = oscillating();
        assert!(!ch.is_markovian());
        let a = GaussianState::vacuum();
        let b = GaussianState::coherent(c(1.0, 0.0));
        let times = time_grid(0.0, 6.0, 1e-3);
        let chi = decay_rate(&distance_trajectory(&a, &b, &ch, &times).unwrap()).unwrap();
        for &(t, x) in &chi {
            let rate = ch.rate(t);
            if rate < -1e-2 {
                assert!(x > 0.0, "t = {t}");
            } else if rate > 1e-2 {
                assert!(x < 0.0, "t = {t}");
            }
        }
        // Gamma(t) = t + 0.75 sin 2t
        assert!((ch.integrated(1.3) - (1.3 + 0.75 * 2.6f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn tabulated_rate() {
        let ch = ChannelModel::Tabulated {
            times: vec![0.0, 1.0, 2.0],
            rates: vec![1.0, 3.0, 3.0],
        };
        ch.validate().unwrap();
        assert!((ch.integrated(1.0) - 2.0).abs() < 1e-15);
        assert!((ch.integrated(0.5) - 0.5 * (1.0 + 2.0) / 2.0).abs() < 1e-15);
        assert!((ch.integrated(3.0) - 2.0 - 3.0 - 3.0).abs() < 1e-15);
        assert!(ch.is_markovian());
        let bad = ChannelModel::Tabulated {
            times: vec![0.0, 1.0, 1.0],
            rates: vec![1.0; 3],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn horizon_examples() {
        let ch = ChannelModel::unit_loss();
        let a = GaussianState::vacuum();
        let b = GaussianState::coherent(c(1.0, 0.0));
        let h = detection_horizon(&a, &b, 2.0, &ch, 0.5).unwrap();
        assert!((h.t_plain - 4f64.ln()).abs() < 1e-12);
        assert!((h.t_amplified - 16f64.ln()).abs() < 1e-12);
        assert!((h.t_amplified - h.t_plain - 4f64.ln()).abs() < 1e-9);
        let h = detection_horizon(&a, &b, 1.0, &ch, 0.5).unwrap();
        assert_eq!(h.t_plain, h.t_amplified);
        assert!(matches!(
            detection_horizon(&a, &b, 2.0, &ch, 9.0),
            Err(ChannelError::ThresholdUnreachable { .. })
        ));
    }

    #[test]
    fn fock_loss_matches_moments() {
        let ch = ChannelModel::unit_loss();
        let rho = make_coherent_state(c(1.2, -0.5), 40).unwrap().to_density();
        for t in [0.3, 1.0] {
            let out = apply_loss_fock(&rho, &ch, t).unwrap();
            let m = moments_from_fock(&out).unwrap();
            let g = apply_loss(&GaussianState::coherent(c(1.2, -0.5)), &ch, t).unwrap();
            for i in 0..2 {
                assert!((m.d[i] - g.d[i]).abs() < 1e-6);
                for j in 0..2 {
                    assert!((m.gamma[i][j] - g.gamma[i][j]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn fock_loss_contracts_trace_distance() {
        let ch = ChannelModel::unit_loss();
        let a = make_coherent_state(c(0.3, 0.0), 30).unwrap().to_density();
        let b = make_coherent_state(c(-0.4, 0.8), 30).unwrap().to_density();
        let before = trace_distance(&a, &b).unwrap();
        let after = trace_distance(
            &apply_loss_fock(&a, &ch, 0.5).unwrap(),
            &apply_loss_fock(&b, &ch, 0.5).unwrap(),
        )
        .unwrap();
        assert!(after <= before + 1e-9);
    }

    #[test]
    fn markovian_distance_is_nonincreasing() {
        let channels = [
            ChannelModel::PureLoss { rate: 0.7 },
            ChannelModel::Oscillating {
                base: 1.0,
                amplitude: 0.9,
                omega: 3.0,
            },
            ChannelModel::Tabulated {
                times: vec![0.0, 0.5, 2.0],
                rates: vec![0.0, 2.0, 0.1],
            },
        ];
        let a = GaussianState::coherent(c(0.9, 0.2));
        let b = GaussianState::coherent(c(-0.3, 0.4));
        let times = time_grid(0.0, 4.0, 1e-2);
        for ch in &channels {
            assert!(ch.is_markovian());
            let chi = decay_rate(&distance_trajectory(&a, &b, ch, &times).unwrap()).unwrap();
            assert!(chi.iter().all(|&(_, x)| x <= 1e-9), "{ch:?}");
        }
    }
}

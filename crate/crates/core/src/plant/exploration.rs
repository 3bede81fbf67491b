use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sinusoidal component `a·sin(ωt + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Per-channel sum of sinusoids with a guaranteed sup-norm cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSignal {
    channels: Vec<Vec<Tone>>,
    seed: u64,
    bound: f64,
}

impl ExplorationSignal {
    /// Builds a signal from explicit tones. If `Σ|aᵢ|` on any channel exceeds
    /// `bound`, that channel's amplitudes are scaled down uniformly.
    pub fn new(mut channels: Vec<Vec<Tone>>, seed: u64, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) || !bound.is_finite() {
            return Err(Error::invalid(
                "exploration bound must be finite and non-negative",
            ));
        }
        for ch in &mut channels {
            if ch
                .iter()
                .any(|t| !(t.amplitude.is_finite() && t.omega.is_finite() && t.phase.is_finite()))
            {
                return Err(Error::NonFinite("exploration tone"));
            }
            let total: f64 = ch.iter().map(|t| t.amplitude.abs()).sum();
            if total > bound {
                let s = if total > 0.0 { bound / total } else { 0.0 };
                for t in ch.iter_mut() {
                    t.amplitude *= s;
                }
            }
        }
        Ok(Self {
            channels,
            seed,
            bound,
        })
    }

    /// Identically zero signal on `m` channels.
    pub fn zero(m: usize) -> Self {
        Self {
            channels: vec![Vec::new(); m],
            seed: 0,
            bound: 0.0,
        }
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn channels(&self) -> &[Vec<Tone>] {
        &self.channels
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|ch| {
                ch.iter()
                    .map(|tone| tone.amplitude * (tone.omega * t + tone.phase).sin())
                    .sum::<f64>()
            }),
        )
    }

    /// Highest angular frequency present.
    pub fn max_omega(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .map(|t| t.omega.abs())
            .fold(0.0, f64::max)
    }
}

/// Seeded sum-of-sinusoids exploration.
///
/// Frequencies are drawn without replacement from a uniform grid over
/// `freq_range` (rad/s), so no two channels share a frequency. Each tone has
/// amplitude `amplitude / terms_per_channel`, which caps every channel at
/// `amplitude` in sup-norm.
pub fn make_sum_of_sinusoids(
    seed: u64,
    m: usize,
    terms_per_channel: usize,
    amplitude: f64,
    freq_range: (f64, f64),
) -> Result<ExplorationSignal> {
    let (lo, hi) = freq_range;
    if terms_per_channel == 0 {
        return Err(Error::invalid("terms_per_channel must be at least 1"));
    }
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("bad frequency range [{lo}, {hi}]")));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid("amplitude must be finite and non-negative"));
    }
    let draws = m * terms_per_channel;
    let grid = draws.saturating_mul(4).max(4000);
    let step = (hi - lo) / (grid - 1) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, grid, draws).into_vec();
    let per_tone = amplitude / terms_per_channel as f64;
    let channels = picks
        .chunks(terms_per_channel)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&g| Tone {
                    amplitude: per_tone,
                    omega: lo + g as f64 * step,
                    phase: rng.gen_range(0.0..TAU),
                })
                .collect()
        })
        .collect();
    ExplorationSignal::new(channels, seed, amplitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn deterministic_given_seed() {
        let a = make_sum_of_sinusoids(11, 3, 20, 1.0, (0.1, 50.0)).unwrap();
        let b = make_sum_of_sinusoids(11, 3, 20, 1.0, (0.1, 50.0)).unwrap();
        assert_eq!(a, b);
        let c = make_sum_of_sinusoids(12, 3, 20, 1.0, (0.1, 50.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn channels_have_disjoint_frequencies() {
        let s = make_sum_of_sinusoids(3, 6, 100, 1.0, (0.1, 200.0)).unwrap();
        let all: Vec<u64> = s
            .channels()
            .iter()
            .flatten()
            .map(|t| t.omega.to_bits())
            .collect();
        let set: HashSet<u64> = all.iter().cloned().collect();
        assert_eq!(set.len(), all.len());
        assert!(s.max_omega() <= 200.0);
    }

    #[test]
    fn sup_norm_respects_bound() {
        let s = make_sum_of_sinusoids(5, 2, 10, 0.7, (0.5, 20.0)).unwrap();
        for k in 0..20_000 {
            let u = s.eval(k as f64 * 1e-3);
            assert!(u.amax() <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_is_zero_signal() {
        let s = make_sum_of_sinusoids(5, 2, 10, 0.0, (0.5, 20.0)).unwrap();
        assert_eq!(s.eval(0.37).amax(), 0.0);
    }

    #[test]
    fn explicit_tones_are_rescaled() {
        let tones = vec![vec![
            Tone {
                amplitude: 2.0,
                omega: 1.0,
                phase: 0.0,
            },
            Tone {
                amplitude: 2.0,
                omega: 3.0,
                phase: 0.0,
            },
        ]];
        let s = ExplorationSignal::new(tones, 0, 1.0).unwrap();
        let total: f64 = s.channels()[0].iter().map(|t| t.amplitude).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}

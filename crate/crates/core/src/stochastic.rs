//! Brownian driving noise and the multiplicative diffusion coefficient.
//!
//! A [`NoisePath`] holds the increments of one Brownian path on the finest
//! time grid together with the sampled path `W(t_i)`. Coarser grids are
//! obtained by subsampling `W` and differencing, so every step count that
//! divides the finest one sees the same realization, and coarsening twice
//! gives bit-identical increments to coarsening once.
//!
//! Increments are drawn from a ChaCha8 stream keyed by `(seed, path_index)`:
//! the `i`-th increment is a function of the key and `i` alone, independent
//! of how paths are scheduled across threads.

use std::io::{BufRead, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::numfmt::fmt_f64;
use crate::{Error, Result};

/// Key of a generated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub path_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    horizon: f64,
    increments: Vec<f64>,
    /// `W(t_0) = 0, W(t_1), …, W(t_N)`.
    cumulative: Vec<f64>,
    key: Option<NoiseKey>,
}

/// Maps the top 53 bits of `bits` to the open interval `(0, 1)`.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variates for `key`, increment indices `0..count`.
pub fn standard_normals(key: NoiseKey, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(key.seed);
    rng.set_stream(key.path_index);
    let normal = Normal::standard();
    (0..count).map(|_| normal.inverse_cdf(open_unit(rng.next_u64()))).collect()
}

/// Generates `n_max` i.i.d. `N(0, T/n_max)` increments keyed by
/// `(seed, path_index)`.
pub fn sample_path(seed: u64, path_index: u64, horizon: f64, n_max: usize) -> Result<NoisePath> {
    check_horizon(horizon)?;
    if n_max == 0 {
        return Err(Error::InvalidConfig("number of fine steps must be at least 1".into()));
    }
    let key = NoiseKey { seed, path_index };
    let scale = (horizon / n_max as f64).sqrt();
    let increments = standard_normals(key, n_max).into_iter().map(|z| z * scale).collect();
    let mut path = NoisePath::from_increments(horizon, increments)?;
    path.key = Some(key);
    Ok(path)
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("time horizon must be positive, got {horizon}")))
    }
}

impl NoisePath {
    /// Wraps externally supplied increments, e.g. a recorded path.
    pub fn from_increments(horizon: f64, increments: Vec<f64>) -> Result<Self> {
        check_horizon(horizon)?;
        if increments.is_empty() {
            return Err(Error::InvalidConfig("noise path has no increments".into()));
        }
        if !increments.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("noise increments"));
        }
        let mut cumulative = Vec::with_capacity(increments.len() + 1);
        cumulative.push(0.0);
        let mut w = 0.0;
        for dw in &increments {
            w += dw;
            cumulative.push(w);
        }
        Ok(Self { horizon, increments, cumulative, key: None })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Sampled path values `W(t_n)`, `n = 0..=N`.
    pub fn values(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn key(&self) -> Option<NoiseKey> {
        self.key
    }

    /// The same realization on a grid of `steps` intervals; `steps` must
    /// divide [`Self::steps`].
    pub fn coarsen(&self, steps: usize) -> Result<NoisePath> {
        let fine = self.steps();
        if steps == 0 || !fine.is_multiple_of(steps) {
            return Err(Error::InvalidConfig(format!(
                "step count {steps} does not divide the path resolution {fine}"
            )));
        }
        if steps == fine {
            return Ok(self.clone());
        }
        let stride = fine / steps;
        let cumulative: Vec<f64> = self.cumulative.iter().step_by(stride).copied().collect();
        let increments = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(NoisePath { horizon: self.horizon, increments, cumulative, key: self.key })
    }

    /// Increments `W(t_n) − W(t_{n−1})` on the grid of `steps` intervals.
    pub fn aggregate_increments(&self, steps: usize) -> Result<Vec<f64>> {
        Ok(self.coarsen(steps)?.increments)
    }

    /// Writes `n,increment` rows, `n` starting at 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,increment")?;
        for (n, dw) in self.increments.iter().enumerate() {
            writeln!(out, "{},{}", n + 1, fmt_f64(*dw))?;
        }
        Ok(())
    }

    /// Reads one increment per row, taking the last comma-separated column.
    /// Blank lines, `#` comments and a non-numeric header row are skipped.
    pub fn read_csv<R: BufRead>(input: R, horizon: f64) -> Result<Self> {
        let mut increments = Vec::new();
        let mut seen_row = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let first_row = !seen_row;
            seen_row = true;
            let field = trimmed.rsplit(',').next().unwrap_or("").trim();
            match field.parse::<f64>() {
                Ok(v) => increments.push(v),
                Err(_) if first_row => continue,
                Err(_) => {
                    return Err(Error::Parse(format!("line {}: cannot parse increment {field:?}", lineno + 1)))
                }
            }
        }
        Self::from_increments(horizon, increments)
    }
}

/// `g(x) = a·x·(1 − x)` on `[0, 1]`, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionCoefficient {
    amplitude: f64,
}

impl DiffusionCoefficient {
    pub fn new(amplitude: f64) -> Result<Self> {
        if amplitude.is_finite() && amplitude >= 0.0 {
            Ok(Self { amplitude })
        } else {
            Err(Error::InvalidConfig(format!("noise amplitude must be finite and >= 0, got {amplitude}")))
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Lipschitz constant of `g`.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        diffusion_g(x, self.amplitude)
    }
}

#[inline]
pub fn diffusion_g(x: f64, amplitude: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        amplitude * x * (1.0 - x)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden::QUARTER_INCREMENTS;
    use proptest::prelude::*;

    #[test]
    fn increments_have_the_right_variance() {
        let n = 100_000;
        let path = sample_path(2024, 0, 1.0, n).unwrap();
        // mean of dW² · N / T over all draws
        let m: f64 = path.increments().iter().map(|d| d * d * n as f64).sum::<f64>() / n as f64;
        assert!((0.98..=1.02).contains(&m), "{m}");
        let mean: f64 = path.increments().iter().sum::<f64>() / n as f64;
        // mean of N(0, 1/n) draws has std 1/n
        assert!(mean.abs() < 5.0 / n as f64);
    }

    #[test]
    fn horizon_scales_variance() {
        let n = 50_000;
        let path = sample_path(7, 3, 4.0, n).unwrap();
        let m: f64 = path.increments().iter().map(|d| d * d * n as f64 / 4.0).sum::<f64>() / n as f64;
        assert!((0.97..=1.03).contains(&m), "{m}");
    }

    #[test]
    fn generation_is_keyed() {
        let a = sample_path(1, 5, 1.0, 64).unwrap();
        let b = sample_path(1, 5, 1.0, 64).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = sample_path(1, 6, 1.0, 64).unwrap();
        assert_ne!(a.increments(), c.increments());
        let d = sample_path(2, 5, 1.0, 64).unwrap();
        assert_ne!(a.increments(), d.increments());
        // a prefix of a longer path uses the same variates
        let z64 = standard_normals(NoiseKey { seed: 1, path_index: 5 }, 64);
        let z128 = standard_normals(NoiseKey { seed: 1, path_index: 5 }, 128);
        assert_eq!(z64[..], z128[..64]);
    }

    #[test]
    fn quarter_increments_pair_up() {
        let path = NoisePath::from_increments(1.0, QUARTER_INCREMENTS.to_vec()).unwrap();
        let half = path.aggregate_increments(2).unwrap();
        assert!((half[0] - 0.08910183).abs() < 1e-7);
        assert!((half[1] + 0.92529078).abs() < 1e-7);
        assert_eq!(path.aggregate_increments(4).unwrap(), QUARTER_INCREMENTS.to_vec());
    }

    #[test]
    fn non_divisors_rejected() {
        let path = sample_path(0, 0, 1.0, 12).unwrap();
        assert!(path.aggregate_increments(5).is_err());
        assert!(path.aggregate_increments(0).is_err());
        assert!(sample_path(0, 0, 1.0, 0).is_err());
        assert!(sample_path(0, 0, -1.0, 4).is_err());
    }

    #[test]
    fn csv_round_trip_and_plain_columns() {
        let path = sample_path(9, 1, 1.0, 16).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let back = NoisePath::read_csv(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back.increments(), path.increments());

        let plain = "# quarter steps\n-0.5\n0.25\n\n1e-3\n";
        let p = NoisePath::read_csv(plain.as_bytes(), 1.0).unwrap();
        assert_eq!(p.increments(), &[-0.5, 0.25, 1e-3]);
        let commented = NoisePath::read_csv("# header follows\nn,increment\n1,0.5\n".as_bytes(), 1.0).unwrap();
        assert_eq!(commented.increments(), &[0.5]);
        assert!(NoisePath::read_csv("n,increment\n1,abc\n".as_bytes(), 1.0).is_err());
        assert!(NoisePath::read_csv("".as_bytes(), 1.0).is_err());
    }

    #[test]
    fn diffusion_examples() {
        for x in [0.0, 1.0, -0.3, 1.7] {
            assert_eq!(diffusion_g(x, 3.0), 0.0);
        }
        assert_eq!(diffusion_g(0.5, 8.0), 2.0);
        assert!((diffusion_g(0.20088542, 10.0) - 1.6053047).abs() < 1e-7);
        assert!(DiffusionCoefficient::new(-1.0).is_err());
        assert!(DiffusionCoefficient::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn coarsening_is_coherent(seed in any::<u64>(), idx in 0u64..1000, k1 in 1usize..5, k2 in 1usize..5, k3 in 1usize..5) {
            let n1 = k1;
            let n2 = n1 * k2;
            let n_max = n2 * k3;
            let path = sample_path(seed, idx, 1.0, n_max).unwrap();
            let via = path.coarsen(n2).unwrap().aggregate_increments(n1).unwrap();
            let direct = path.aggregate_increments(n1).unwrap();
            prop_assert_eq!(via, direct.clone());
            let fine_sum: f64 = path.increments().iter().sum();
            let coarse_sum: f64 = direct.iter().sum();
            prop_assert!((fine_sum - coarse_sum).abs() < 1e-12);
        }

        #[test]
        fn diffusion_is_lipschitz(x in -0.5f64..1.5, y in -0.5f64..1.5, a in 0.0f64..100.0) {
            prop_assert!((diffusion_g(x, a) - diffusion_g(y, a)).abs() <= a * (x - y).abs() * (1.0 + 1e-12) + 1e-12);
        }
    }
}

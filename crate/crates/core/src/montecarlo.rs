//! Shot-noise simulation of coincidence fringe scans.
//!
//! Every scan point draws from its own ChaCha8 stream. The stream seed is a
//! SplitMix64 hash of `(scan seed, scanned variable, point value, occurrence)`,
//! where `occurrence` counts earlier points with the same value. Results are
//! therefore independent of evaluation order, of parallelism, and of where a
//! value sits in the point list.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::twophoton::{coincidence_rate, SetupConfig};

/// Above this mean the sampler switches to a moment-matched normal.
pub const NORMAL_APPROX_MEAN: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("a scan needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("dwell time must be positive, got {0}")]
    InvalidDwell(f64),
    #[error("scan point {index} is not finite")]
    NonFinitePoint { index: usize },
    #[error("unknown scan variable `{0}` (expected two_beta_s, two_beta_i, x_s or x_i)")]
    UnknownVariable(String),
}

pub type Result<T> = std::result::Result<T, ScanError>;

/// The knob swept in a scan. Geometric variables are the phases `2β` (rad),
/// mirror variables are displacements (m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanVariable {
    TwoBetaS,
    TwoBetaI,
    XS,
    XI,
}

impl ScanVariable {
    pub const ALL: [ScanVariable; 4] = [Self::TwoBetaS, Self::TwoBetaI, Self::XS, Self::XI];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoBetaS => "two_beta_s",
            Self::TwoBetaI => "two_beta_i",
            Self::XS => "x_s",
            Self::XI => "x_i",
        }
    }

    pub fn is_geometric(self) -> bool {
        matches!(self, Self::TwoBetaS | Self::TwoBetaI)
    }

    /// `base` with this variable set to `value`.
    pub fn apply(self, base: &SetupConfig, value: f64) -> SetupConfig {
        let mut c = *base;
        match self {
            Self::TwoBetaS => c.beta_s = value / 2.0,
            Self::TwoBetaI => c.beta_i = value / 2.0,
            Self::XS => c.x_s = value,
            Self::XI => c.x_i = value,
        }
        c
    }

    /// Fringe angular frequency per unit of this variable: 1 for the
    /// geometric phases, k₀ for mirror displacements.
    pub fn fringe_frequency(self, base: &SetupConfig) -> f64 {
        if self.is_geometric() {
            1.0
        } else {
            base.source.k0()
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::TwoBetaS => 1,
            Self::TwoBetaI => 2,
            Self::XS => 3,
            Self::XI => 4,
        }
    }
}

impl fmt::Display for ScanVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanVariable {
    type Err = ScanError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ScanError::UnknownVariable(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    variable: ScanVariable,
    points: Vec<f64>,
    dwell_time: f64,
    seed: u64,
}

impl ScanSpec {
    pub fn new(variable: ScanVariable, points: Vec<f64>, dwell_time: f64, seed: u64) -> Result<Self> {
        if points.len() < 2 {
            return Err(ScanError::TooFewPoints(points.len()));
        }
        if let Some(index) = points.iter().position(|x| !x.is_finite()) {
            return Err(ScanError::NonFinitePoint { index });
        }
        if !(dwell_time.is_finite() && dwell_time > 0.0) {
            return Err(ScanError::InvalidDwell(dwell_time));
        }
        Ok(Self {
            variable,
            points,
            dwell_time,
            seed,
        })
    }

    /// `n` points from `start` toward `stop`, excluding `stop` (suits periodic scans).
    pub fn uniform(
        variable: ScanVariable,
        start: f64,
        stop: f64,
        n: usize,
        dwell_time: f64,
        seed: u64,
    ) -> Result<Self> {
        let step = (stop - start) / n as f64;
        let points = (0..n).map(|k| start + step * k as f64).collect();
        Self::new(variable, points, dwell_time, seed)
    }

    pub fn variable(&self) -> ScanVariable {
        self.variable
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn dwell_time(&self) -> f64 {
        self.dwell_time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Counts recorded over one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan {
    pub spec: ScanSpec,
    pub base_config: SetupConfig,
    pub counts: Vec<u64>,
}

impl FringeScan {
    pub fn settings(&self) -> &[f64] {
        self.spec.points()
    }

    /// Noise-free rates (counts/s) at each point.
    pub fn theory_rates(&self) -> Vec<f64> {
        theory_rates(&self.base_config, &self.spec)
    }
}

pub fn theory_rates(base: &SetupConfig, spec: &ScanSpec) -> Vec<f64> {
    spec.points
        .iter()
        .map(|&x| coincidence_rate(&spec.variable.apply(base, x)))
        .collect()
}

/// One Poisson draw with mean `rate · dwell`.
pub fn sample_counts<R: Rng + ?Sized>(rate: f64, dwell: f64, rng: &mut R) -> u64 {
    let mean = rate * dwell;
    if !(mean > 0.0) {
        return 0;
    }
    if mean > NORMAL_APPROX_MEAN {
        let normal = Normal::new(mean, mean.sqrt()).expect("finite positive moments");
        return normal.sample(rng).round().max(0.0) as u64;
    }
    let poisson = Poisson::new(mean).expect("mean is finite and positive");
    poisson.sample(rng) as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for one scan point.
pub fn point_stream(seed: u64, variable: ScanVariable, value: f64, occurrence: u64) -> ChaCha8Rng {
    // fold -0.0 onto 0.0
    let bits = if value == 0.0 { 0 } else { value.to_bits() };
    let key = [variable.tag(), bits, occurrence]
        .into_iter()
        .fold(splitmix64(seed), |h, part| splitmix64(h ^ part));
    ChaCha8Rng::seed_from_u64(key)
}

/// Derives an independent seed for the `index`-th sub-experiment of a run.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn occurrences(points: &[f64]) -> Vec<u64> {
    let mut seen: HashMap<u64, u64> = HashMap::new();
    points
        .iter()
        .map(|&x| {
            let bits = if x == 0.0 { 0 } else { x.to_bits() };
            let n = seen.entry(bits).or_insert(0);
            let occurrence = *n;
            *n += 1;
            occurrence
        })
        .collect()
}

/// Simulates one fringe scan: per point, set the scanned knob, evaluate the
/// coincidence rate and draw shot-noise-limited counts.
pub fn run_scan(base: &SetupConfig, spec: &ScanSpec) -> FringeScan {
    let occurrence = occurrences(&spec.points);
    let counts = spec
        .points
        .par_iter()
        .zip(occurrence.par_iter())
        .map(|(&x, &occ)| {
            let rate = coincidence_rate(&spec.variable.apply(base, x));
            let mut rng = point_stream(spec.seed, spec.variable, x, occ);
            sample_counts(rate, spec.dwell_time, &mut rng)
        })
        .collect();
    FringeScan {
        spec: spec.clone(),
        base_config: *base,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twophoton::{reduced_rate, SourceModel};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn base(visibility: f64, rate: f64) -> SetupConfig {
        SetupConfig::new(SourceModel::paper_default(), rate, visibility).unwrap()
    }

    #[test]
    fn zero_rate_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_counts(0.0, 5.0, &mut rng), 0);
        }
    }

    #[test]
    fn poisson_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_counts(100.0, 5.0, &mut rng) as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 500.0).abs() < 5.0, "mean {mean}");
        assert!((var / mean - 1.0).abs() < 0.05, "var {var} mean {mean}");
    }

    #[test]
    fn normal_regime_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mean_target = 4e6;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_counts(mean_target, 1.0, &mut rng) as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean / mean_target - 1.0).abs() < 1e-3);
        assert!((var / mean_target - 1.0).abs() < 0.05);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(
            ScanSpec::new(ScanVariable::XS, vec![0.0], 1.0, 0).unwrap_err(),
            ScanError::TooFewPoints(1)
        );
        assert_eq!(
            ScanSpec::new(ScanVariable::XS, vec![0.0, 1.0], 0.0, 0).unwrap_err(),
            ScanError::InvalidDwell(0.0)
        );
        assert!("two_beta_q".parse::<ScanVariable>().is_err());
        for v in ScanVariable::ALL {
            assert_eq!(v.name().parse::<ScanVariable>().unwrap(), v);
        }
    }

    #[test]
    fn same_seed_same_counts() {
        let spec = ScanSpec::uniform(ScanVariable::TwoBetaS, 0.0, TAU, 16, 5.0, 42).unwrap();
        let b = base(0.77, 40.0);
        assert_eq!(run_scan(&b, &spec).counts, run_scan(&b, &spec).counts);
        let other = run_scan(&b, &spec.clone().with_seed(43));
        assert_ne!(run_scan(&b, &spec).counts, other.counts);
    }

    #[test]
    fn repeated_values_draw_independently() {
        let spec = ScanSpec::new(ScanVariable::TwoBetaS, vec![1.0; 64], 5.0, 9).unwrap();
        let scan = run_scan(&base(0.77, 100.0), &spec);
        let first = scan.counts[0];
        assert!(scan.counts.iter().any(|&c| c != first));
    }

    #[test]
    fn long_dwell_reproduces_sinusoid() {
        let dwell = 1e7;
        let b = base(0.77, 50.0);
        let spec = ScanSpec::uniform(ScanVariable::TwoBetaS, 0.0, TAU, 24, dwell, 5).unwrap();
        let scan = run_scan(&b, &spec);
        for (&x, &n) in spec.points().iter().zip(&scan.counts) {
            let expected = reduced_rate(&ScanVariable::TwoBetaS.apply(&b, x));
            let observed = n as f64 / dwell;
            // 6σ of the shot noise on the rate estimate
            let tol = 6.0 * (expected / dwell).sqrt() + 1e-3;
            assert!((observed - expected).abs() < tol, "{observed} vs {expected}");
        }
    }

    #[test]
    fn min_max_ratio_reflects_visibility() {
        let b = base(0.77, 60.0);
        let spec = ScanSpec::uniform(ScanVariable::TwoBetaS, 0.0, TAU, 16, 5.0, 11).unwrap();
        let scan = run_scan(&b, &spec);
        let max = *scan.counts.iter().max().unwrap() as f64;
        let min = *scan.counts.iter().min().unwrap() as f64;
        let v = (max - min) / (max + min);
        // shot noise at ~500 counts shifts the extremes by a few percent
        assert!((v - 0.77).abs() < 0.08, "raw visibility {v}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn permuting_points_permutes_counts(
            seed in any::<u64>(),
            perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let b = base(0.77, 80.0);
            let points: Vec<f64> = (0..12).map(|k| k as f64 * TAU / 12.0).collect();
            let spec = ScanSpec::new(ScanVariable::TwoBetaS, points.clone(), 5.0, seed).unwrap();
            let permuted: Vec<f64> = perm.iter().map(|&k| points[k]).collect();
            let spec_p = ScanSpec::new(ScanVariable::TwoBetaS, permuted, 5.0, seed).unwrap();
            let counts = run_scan(&b, &spec).counts;
            let counts_p = run_scan(&b, &spec_p).counts;
            for (j, &k) in perm.iter().enumerate() {
                prop_assert_eq!(counts_p[j], counts[k]);
            }
        }
    }
}

//! Fringe fitting, visibility uncertainty, CHSH Bell parameter and the
//! four-setting Bell report.
//!
//! Fits are weighted linear least squares at a known fringe frequency:
//! `counts ≈ A + Bc·cos(ωx) + Bs·sin(ωx) = A + B·cos(ωx - φ₀)`, with Poisson
//! weights `1 / max(count, 1)`. The inverse normal matrix is the parameter
//! covariance over `(A, Bc, Bs)`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::montecarlo::{run_scan, derive_seed, FringeScan, ScanError, ScanSpec, ScanVariable};
use crate::polarization::wrap_phase;
use crate::twophoton::SetupConfig;

/// Smallest eigenvalue ratio of the normalized normal matrix accepted as solvable.
const MIN_CONDITION_RATIO: f64 = 1e-10;

/// Violation threshold of the local-realistic bound.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// Phase-ladder tolerance, in standard deviations of each step.
pub const LADDER_TOLERANCE_SIGMAS: f64 = 5.0;

/// The four idler settings `2β_i` of the Bell experiment.
pub const BELL_IDLER_PHASES: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

/// Fitted-phase change per `+π/2` step of `2β_i`: the fringe in `2β_s`
/// slides by `-π/2`.
pub const LADDER_STEP: f64 = -FRAC_PI_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("settings and counts differ in length ({settings} vs {counts})")]
    LengthMismatch { settings: usize, counts: usize },
    #[error("design matrix is numerically singular (eigenvalue ratio {ratio:e})")]
    IllConditioned { ratio: f64 },
    #[error("fitted offset {0} is not positive")]
    NonPositiveOffset(f64),
    #[error("correlation E[{index}] = {value} lies outside [-1, 1]")]
    DomainError { index: usize, value: f64 },
    #[error(
        "fringe phase step {step} is {residual:.4} rad off the π/2 ladder (σ = {sigma:.4})"
    )]
    PhasePatternMismatch {
        step: usize,
        residual: f64,
        sigma: f64,
    },
    #[error(transparent)]
    Scan(#[from] ScanError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Sinusoid fitted to one fringe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// Offset A (counts).
    pub offset: f64,
    /// Amplitude B ≥ 0 (counts).
    pub amplitude: f64,
    /// φ₀ in `(-π, π]`, fringe maximum at `ωx = φ₀`.
    pub phase: f64,
    /// B / A, unclamped.
    pub visibility: f64,
    /// Covariance over `(A, B·cos φ₀, B·sin φ₀)`.
    pub covariance: Matrix3<f64>,
    pub sigma_visibility: f64,
}

impl FringeFit {
    pub fn cos_component(&self) -> f64 {
        self.amplitude * self.phase.cos()
    }

    pub fn sin_component(&self) -> f64 {
        self.amplitude * self.phase.sin()
    }

    pub fn sigma_offset(&self) -> f64 {
        self.covariance[(0, 0)].sqrt()
    }

    pub fn sigma_phase(&self) -> f64 {
        let (bc, bs) = (self.cos_component(), self.sin_component());
        let b2 = self.amplitude * self.amplitude;
        if b2 == 0.0 {
            return PI;
        }
        let grad = Vector3::new(0.0, -bs / b2, bc / b2);
        (grad.transpose() * self.covariance * grad)[(0, 0)].max(0.0).sqrt()
    }

    /// Model value at `x`.
    pub fn evaluate(&self, x: f64, angular_frequency: f64) -> f64 {
        self.offset + self.amplitude * (angular_frequency * x - self.phase).cos()
    }
}

/// Weighted least-squares sinusoid fit at fixed angular frequency.
pub fn fit_sinusoid(settings: &[f64], counts: &[f64], angular_frequency: f64) -> Result<FringeFit> {
    if settings.len() != counts.len() {
        return Err(AnalysisError::LengthMismatch {
            settings: settings.len(),
            counts: counts.len(),
        });
    }
    if settings.len() < 4 {
        return Err(AnalysisError::TooFewPoints(settings.len()));
    }

    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    let mut weight_sum = 0.0;
    for (&x, &y) in settings.iter().zip(counts) {
        let (s, c) = (angular_frequency * x).sin_cos();
        let f = Vector3::new(1.0, c, s);
        let w = 1.0 / y.max(1.0);
        normal += w * f * f.transpose();
        rhs += w * y * f;
        weight_sum += w;
    }

    let eigen = SymmetricEigen::new(normal / weight_sum).eigenvalues;
    let (lo, hi) = eigen
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio > MIN_CONDITION_RATIO) {
        return Err(AnalysisError::IllConditioned { ratio });
    }

    let covariance = normal
        .cholesky()
        .ok_or(AnalysisError::IllConditioned { ratio })?
        .inverse();
    let params = covariance * rhs;
    let (a, bc, bs) = (params[0], params[1], params[2]);
    if !(a > 0.0) {
        return Err(AnalysisError::NonPositiveOffset(a));
    }
    let b = bc.hypot(bs);
    let visibility = b / a;

    let sigma_visibility = if b > 0.0 {
        let grad = Vector3::new(-b / (a * a), bc / (a * b), bs / (a * b));
        (grad.transpose() * covariance * grad)[(0, 0)].max(0.0).sqrt()
    } else {
        ((covariance[(1, 1)] + covariance[(2, 2)]) / 2.0).sqrt() / a
    };

    Ok(FringeFit {
        offset: a,
        amplitude: b,
        phase: bs.atan2(bc),
        visibility,
        covariance,
        sigma_visibility,
    })
}

/// Fits a simulated scan at the given fringe angular frequency.
pub fn fit_fringe(scan: &FringeScan, angular_frequency: f64) -> Result<FringeFit> {
    let counts: Vec<f64> = scan.counts.iter().map(|&n| n as f64).collect();
    fit_sinusoid(scan.settings(), &counts, angular_frequency)
}

/// Best CHSH value reachable with sinusoidal correlations of visibility `v`,
/// `2√2·v`. Written as a division so that `v = 1/√2` lands exactly on 2.
pub fn s_from_visibility(v: f64) -> f64 {
    2.0 * v / FRAC_1_SQRT_2
}

/// `|E(a,b) - E(a,b′) + E(a′,b) + E(a′,b′)|`, correlations in the order
/// `(a,b), (a,b′), (a′,b), (a′,b′)`.
pub fn chsh_from_settings(e: [f64; 4]) -> Result<f64> {
    if let Some((index, &value)) = e
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.abs() <= 1.0 + 1e-9))
    {
        return Err(AnalysisError::DomainError { index, value });
    }
    Ok((e[0] - e[1] + e[2] + e[3]).abs())
}

/// Two-photon correlation for phase settings `theta_a`, `theta_b`
/// (e.g. `2β_s`, `2β_i`): `V·cos(θ_a + θ_b + φ₀)`.
pub fn franson_correlation(visibility: f64, theta_a: f64, theta_b: f64, phi0: f64) -> f64 {
    visibility * (theta_a + theta_b + phi0).cos()
}

/// Phase settings `(θ_a, θ_a′, θ_b, θ_b′)` maximizing CHSH for
/// [`franson_correlation`] with offset `phi0`.
pub fn optimal_settings(phi0: f64) -> [f64; 4] {
    [-phi0, -phi0 - FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4]
}

/// CHSH value of [`franson_correlation`] at [`optimal_settings`].
pub fn chsh_at_optimal_settings(visibility: f64, phi0: f64) -> Result<f64> {
    let [a, a2, b, b2] = optimal_settings(phi0);
    let e = |x, y| franson_correlation(visibility, x, y, phi0);
    chsh_from_settings([e(a, b), e(a, b2), e(a2, b), e(a2, b2)])
}

/// Pooled Bell-test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellResult {
    pub s: f64,
    pub sigma_s: f64,
    /// `(S - 2) / σ_S`; infinite when the inputs carry no uncertainty.
    pub violation_sigmas: f64,
    pub pooled_visibility: f64,
    pub sigma_pooled_visibility: f64,
    /// Wrapped phase differences between consecutive settings.
    pub phase_steps: [f64; 3],
    /// `phase_steps - LADDER_STEP`, wrapped.
    pub phase_residuals: [f64; 3],
    /// Set when every input fit had zero visibility uncertainty.
    pub noiseless: bool,
}

impl BellResult {
    pub fn violates(&self) -> bool {
        self.s > CLASSICAL_BOUND
    }
}

/// Inverse-variance mean. Zero-variance entries dominate: when present, their
/// plain mean is returned with zero uncertainty.
fn pooled_mean(values: &[(f64, f64)]) -> (f64, f64) {
    let exact: Vec<f64> = values
        .iter()
        .filter(|(_, s)| *s == 0.0)
        .map(|(v, _)| *v)
        .collect();
    if !exact.is_empty() {
        return (exact.iter().sum::<f64>() / exact.len() as f64, 0.0);
    }
    let (num, den) = values.iter().fold((0.0, 0.0), |(n, d), (v, s)| {
        let w = 1.0 / (s * s);
        (n + w * v, d + w)
    });
    (num / den, den.sqrt().recip())
}

/// Combines the four fits taken at `2β_i = 0, π/2, π, 3π/2` (in that order).
pub fn bell_report(fits: &[FringeFit; 4]) -> Result<BellResult> {
    let values: Vec<(f64, f64)> = fits
        .iter()
        .map(|f| (f.visibility, f.sigma_visibility))
        .collect();
    let (pooled_visibility, sigma_pooled_visibility) = pooled_mean(&values);
    let s = s_from_visibility(pooled_visibility);
    let sigma_s = s_from_visibility(sigma_pooled_visibility);
    let noiseless = sigma_s == 0.0;
    let violation_sigmas = if noiseless {
        (s - CLASSICAL_BOUND).signum() * f64::INFINITY
    } else {
        (s - CLASSICAL_BOUND) / sigma_s
    };

    let mut phase_steps = [0.0; 3];
    let mut phase_residuals = [0.0; 3];
    for k in 1..4 {
        let step = wrap_phase(fits[k].phase - fits[k - 1].phase);
        let residual = wrap_phase(step - LADDER_STEP);
        let sigma = fits[k].sigma_phase().hypot(fits[k - 1].sigma_phase());
        if residual.abs() > (LADDER_TOLERANCE_SIGMAS * sigma).max(1e-9) {
            return Err(AnalysisError::PhasePatternMismatch {
                step: k,
                residual,
                sigma,
            });
        }
        phase_steps[k - 1] = step;
        phase_residuals[k - 1] = residual;
    }

    Ok(BellResult {
        s,
        sigma_s,
        violation_sigmas,
        pooled_visibility,
        sigma_pooled_visibility,
        phase_steps,
        phase_residuals,
        noiseless,
    })
}

/// Everything produced by one simulated four-setting run.
#[derive(Debug, Clone)]
pub struct BellExperiment {
    pub scans: Vec<FringeScan>,
    pub fits: [FringeFit; 4],
    pub result: BellResult,
}

/// Scans `2β_s` over `points` at each of the four idler settings, fits every
/// fringe and pools them. Each setting draws from its own derived seed.
pub fn run_bell_experiment(
    base: &SetupConfig,
    points: &[f64],
    dwell_time: f64,
    seed: u64,
) -> Result<BellExperiment> {
    let mut scans = Vec::with_capacity(4);
    let mut fits = Vec::with_capacity(4);
    for (k, &two_beta_i) in BELL_IDLER_PHASES.iter().enumerate() {
        let setting = ScanVariable::TwoBetaI.apply(base, two_beta_i);
        let spec = ScanSpec::new(
            ScanVariable::TwoBetaS,
            points.to_vec(),
            dwell_time,
            derive_seed(seed, k as u64),
        )?;
        let scan = run_scan(&setting, &spec);
        fits.push(fit_fringe(&scan, 1.0)?);
        scans.push(scan);
    }
    let fits: [FringeFit; 4] = fits.try_into().expect("four settings");
    let result = bell_report(&fits)?;
    Ok(BellExperiment {
        scans,
        fits,
        result,
    })
}

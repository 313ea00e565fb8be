//! Two-photon coherence model of the double-pass interferometer: path
//! bookkeeping for the two alternatives, the pump and signal-idler
//! correlation envelopes, and the coincidence-rate laws.

use std::f64::consts::{LN_2, PI, TAU};

use thiserror::Error;

use crate::polarization::{propagate, signal_loop, PolarizationState};

/// Pump laser wavelength, 363.8 nm.
pub const PAPER_PUMP_WAVELENGTH: f64 = 363.8e-9;
/// Pump coherence length, about 5 cm.
pub const PAPER_PUMP_COHERENCE_LENGTH: f64 = 0.05;
/// Signal-idler coherence length, about 100 μm.
pub const PAPER_SI_COHERENCE_LENGTH: f64 = 100e-6;
/// Crystal-to-mirror distance at balance, about 15 cm.
pub const BALANCED_ARM_LENGTH: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwoPhotonError {
    #[error("invalid source model: {0}")]
    InvalidSource(String),
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
}

pub type Result<T> = std::result::Result<T, TwoPhotonError>;

/// Optical path lengths (m) and non-dynamic phases (rad) of pump, signal and
/// idler in alternatives 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoPhotonPaths {
    pub l_p1: f64,
    pub l_s1: f64,
    pub l_i1: f64,
    pub l_p2: f64,
    pub l_s2: f64,
    pub l_i2: f64,
    pub phi_p1: f64,
    pub phi_s1: f64,
    pub phi_i1: f64,
    pub phi_p2: f64,
    pub phi_s2: f64,
    pub phi_i2: f64,
}

/// Path-length and phase differences between the two alternatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deltas {
    /// ΔL, pump-weighted length difference (m).
    pub length: f64,
    /// ΔL′, signal-idler length difference (m).
    pub length_si: f64,
    /// Δφ, non-dynamic phase difference (rad).
    pub phase: f64,
}

pub fn deltas(p: &TwoPhotonPaths) -> Deltas {
    Deltas {
        length: ((p.l_s1 + p.l_i1) / 2.0 + p.l_p1) - ((p.l_s2 + p.l_i2) / 2.0 + p.l_p2),
        length_si: (p.l_s1 - p.l_i1) - (p.l_s2 - p.l_i2),
        phase: (p.phi_s1 + p.phi_i1 + p.phi_p1) - (p.phi_s2 + p.phi_i2 + p.phi_p2),
    }
}

/// Functional form of the correlation envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeShape {
    /// `exp(-4 ln2 · x² / w²)`: unit peak, full width at half maximum `w`.
    #[default]
    Gaussian,
}

impl EnvelopeShape {
    pub fn evaluate(self, x: f64, fwhm: f64) -> f64 {
        match self {
            EnvelopeShape::Gaussian => (-4.0 * LN_2 * (x / fwhm).powi(2)).exp(),
        }
    }
}

/// Down-conversion source: pump wavevector and the two coherence lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    k0: f64,
    pump_coherence_length: f64,
    si_coherence_length: f64,
    envelope_shape: EnvelopeShape,
}

impl SourceModel {
    pub fn new(k0: f64, pump_coherence_length: f64, si_coherence_length: f64) -> Result<Self> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(k0) {
            return Err(TwoPhotonError::InvalidSource(format!(
                "pump wavevector must be positive, got {k0}"
            )));
        }
        if !positive(pump_coherence_length) {
            return Err(TwoPhotonError::InvalidSource(format!(
                "pump coherence length must be positive, got {pump_coherence_length}"
            )));
        }
        if !positive(si_coherence_length) {
            return Err(TwoPhotonError::InvalidSource(format!(
                "signal-idler coherence length must be positive, got {si_coherence_length}"
            )));
        }
        Ok(Self {
            k0,
            pump_coherence_length,
            si_coherence_length,
            envelope_shape: EnvelopeShape::Gaussian,
        })
    }

    pub fn from_pump_wavelength(
        wavelength: f64,
        pump_coherence_length: f64,
        si_coherence_length: f64,
    ) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(TwoPhotonError::InvalidSource(format!(
                "pump wavelength must be positive, got {wavelength}"
            )));
        }
        Self::new(TAU / wavelength, pump_coherence_length, si_coherence_length)
    }

    /// Ar-ion pump at 363.8 nm, 5 cm pump and 100 μm signal-idler coherence.
    pub fn paper_default() -> Self {
        Self::from_pump_wavelength(
            PAPER_PUMP_WAVELENGTH,
            PAPER_PUMP_COHERENCE_LENGTH,
            PAPER_SI_COHERENCE_LENGTH,
        )
        .expect("paper source parameters are positive")
    }

    pub fn with_si_coherence_length(self, si_coherence_length: f64) -> Result<Self> {
        Self::new(self.k0, self.pump_coherence_length, si_coherence_length)
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn pump_wavelength(&self) -> f64 {
        TAU / self.k0
    }

    pub fn pump_coherence_length(&self) -> f64 {
        self.pump_coherence_length
    }

    pub fn si_coherence_length(&self) -> f64 {
        self.si_coherence_length
    }

    pub fn envelope_shape(&self) -> EnvelopeShape {
        self.envelope_shape
    }
}

/// Experiment knobs. Build with [`SetupConfig::new`] or call
/// [`SetupConfig::validate`] after editing fields directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupConfig {
    /// Signal mirror displacement from balance (m).
    pub x_s: f64,
    /// Idler mirror displacement from balance (m).
    pub x_i: f64,
    /// Rotatable signal waveplate angle β_s (rad).
    pub beta_s: f64,
    /// Rotatable idler waveplate angle β_i (rad).
    pub beta_i: f64,
    pub source: SourceModel,
    /// Mean coincidence rate C (counts/s).
    pub rate_constant: f64,
    /// Fringe contrast multiplier in `[0, 1]` standing in for imperfect mode overlap.
    pub visibility_factor: f64,
}

impl SetupConfig {
    pub fn new(source: SourceModel, rate_constant: f64, visibility_factor: f64) -> Result<Self> {
        let config = Self {
            x_s: 0.0,
            x_i: 0.0,
            beta_s: 0.0,
            beta_i: 0.0,
            source,
            rate_constant,
            visibility_factor,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_constant.is_finite() && self.rate_constant > 0.0) {
            return Err(TwoPhotonError::InvalidSetup(format!(
                "rate constant must be positive, got {}",
                self.rate_constant
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility_factor) {
            return Err(TwoPhotonError::InvalidSetup(format!(
                "visibility factor must lie in [0, 1], got {}",
                self.visibility_factor
            )));
        }
        for (name, x) in [("x_s", self.x_s), ("x_i", self.x_i)] {
            if !x.is_finite() || x <= -BALANCED_ARM_LENGTH {
                return Err(TwoPhotonError::InvalidSetup(format!(
                    "{name} = {x} m is not a reachable mirror position"
                )));
            }
        }
        for (name, b) in [("beta_s", self.beta_s), ("beta_i", self.beta_i)] {
            if !b.is_finite() {
                return Err(TwoPhotonError::InvalidSetup(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Geometric phase of one double-pass arm, from Jones propagation.
fn arm_geometric_phase(beta: f64) -> f64 {
    propagate(&signal_loop(beta), &PolarizationState::horizontal())
        .expect("double-pass loop returns H to H")
        .accumulated_phase
}

/// Path bookkeeping for the double-pass setup.
///
/// Alternative 1: pair born on the forward pump pass, signal and idler go out
/// to their mirrors and back through the waveplates. Alternative 2: pair born
/// after the pump mirror, signal and idler go straight to the detectors.
/// Lengths are measured from the crystal; the shared detector legs cancel.
pub fn paths_from_setup(c: &SetupConfig) -> TwoPhotonPaths {
    TwoPhotonPaths {
        l_p1: 0.0,
        l_s1: 2.0 * (BALANCED_ARM_LENGTH + c.x_s),
        l_i1: 2.0 * (BALANCED_ARM_LENGTH + c.x_i),
        l_p2: 2.0 * BALANCED_ARM_LENGTH,
        l_s2: 0.0,
        l_i2: 0.0,
        phi_p1: 0.0,
        phi_s1: arm_geometric_phase(c.beta_s),
        phi_i1: arm_geometric_phase(c.beta_i),
        // net reflection phase of the three mirrors (π + π - π), referred to the pump leg of alternative 2
        phi_p2: -PI,
        phi_s2: 0.0,
        phi_i2: 0.0,
    }
}

/// Pump correlation envelope γ(ΔL).
pub fn gamma_pump(dl: f64, s: &SourceModel) -> f64 {
    s.envelope_shape.evaluate(dl, s.pump_coherence_length)
}

/// Signal-idler correlation envelope γ′(ΔL′).
pub fn gamma_si(dlp: f64, s: &SourceModel) -> f64 {
    s.envelope_shape.evaluate(dlp, s.si_coherence_length)
}

/// Fringe envelope `γ(ΔL)·γ′(ΔL′)` at the given setting.
pub fn fringe_envelope(c: &SetupConfig) -> f64 {
    let d = deltas(&paths_from_setup(c));
    gamma_pump(d.length, &c.source) * gamma_si(d.length_si, &c.source)
}

/// Full coincidence rate `C·[1 + V·γ(ΔL)·γ′(ΔL′)·cos(k₀ΔL + Δφ)]` (counts/s).
pub fn coincidence_rate(c: &SetupConfig) -> f64 {
    let d = deltas(&paths_from_setup(c));
    let envelope = gamma_pump(d.length, &c.source) * gamma_si(d.length_si, &c.source);
    let fringe = (c.source.k0 * d.length + d.phase).cos();
    let rate = c.rate_constant * (1.0 + c.visibility_factor * envelope * fringe);
    rate.clamp(0.0, 2.0 * c.rate_constant)
}

/// Rate with both envelopes at unity:
/// `C·{1 - V·cos[k₀(x_s + x_i) + 2β_s + 2β_i]}` (counts/s).
pub fn reduced_rate(c: &SetupConfig) -> f64 {
    let phase = c.source.k0 * (c.x_s + c.x_i) + 2.0 * c.beta_s + 2.0 * c.beta_i;
    c.rate_constant * (1.0 - c.visibility_factor * phase.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::wrap_phase;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn setup(visibility: f64) -> SetupConfig {
        SetupConfig::new(SourceModel::paper_default(), 100.0, visibility).unwrap()
    }

    #[test]
    fn symmetric_paths_cancel() {
        let p = TwoPhotonPaths {
            l_p1: 0.1,
            l_s1: 0.2,
            l_i1: 0.3,
            l_p2: 0.1,
            l_s2: 0.2,
            l_i2: 0.3,
            phi_p1: 0.4,
            phi_s1: 0.5,
            phi_i1: 0.6,
            phi_p2: 0.4,
            phi_s2: 0.5,
            phi_i2: 0.6,
        };
        let d = deltas(&p);
        assert_eq!((d.length, d.length_si, d.phase), (0.0, 0.0, 0.0));
    }

    #[test]
    fn signal_offset_deltas() {
        let a = 3e-6;
        let p = TwoPhotonPaths {
            l_s1: 0.3 + 2.0 * a,
            l_s2: 0.3,
            ..Default::default()
        };
        let d = deltas(&p);
        assert!((d.length - a).abs() < 1e-15);
        assert!((d.length_si - 2.0 * a).abs() < 1e-15);
        assert_eq!(d.phase, 0.0);
    }

    #[test]
    fn phase_itemization() {
        let (bs, bi) = (0.3, 1.1);
        let p = TwoPhotonPaths {
            phi_s1: 2.0 * bs,
            phi_i1: 2.0 * bi,
            phi_p2: -PI,
            ..Default::default()
        };
        assert!((deltas(&p).phase - (2.0 * bs + 2.0 * bi + PI)).abs() < 1e-15);
    }

    #[test]
    fn setup_mapping() {
        let mut c = setup(1.0);
        c.x_s = 10e-6;
        c.x_i = -10e-6;
        let d = deltas(&paths_from_setup(&c));
        assert!(d.length.abs() < 1e-15);
        assert!((d.length_si - 40e-6).abs() < 1e-15);

        let d = deltas(&paths_from_setup(&setup(1.0)));
        assert_eq!(d.length, 0.0);
        assert_eq!(d.length_si, 0.0);
        assert!((d.phase - PI).abs() < 1e-12);

        let mut c = setup(1.0);
        c.beta_s = FRAC_PI_4;
        c.beta_i = FRAC_PI_4;
        assert!(wrap_phase(deltas(&paths_from_setup(&c)).phase).abs() < 1e-12);
    }

    #[test]
    fn envelopes() {
        let s = SourceModel::paper_default();
        assert_eq!(gamma_pump(0.0, &s), 1.0);
        assert_eq!(gamma_si(0.0, &s), 1.0);
        for sign in [-1.0, 1.0] {
            assert!((gamma_pump(sign * 0.025, &s) - 0.5).abs() < 1e-12);
            assert!((gamma_si(sign * 50e-6, &s) - 0.5).abs() < 1e-12);
        }
        let g = gamma_si(40e-6, &s);
        assert!(g > 0.5 && g < 1.0);
        assert_eq!(gamma_pump(0.013, &s), gamma_pump(-0.013, &s));
    }

    #[test]
    fn zero_or_negative_coherence_rejected() {
        assert!(SourceModel::new(1.0, 0.0, 1.0).is_err());
        assert!(SourceModel::new(1.0, 1.0, 0.0).is_err());
        assert!(SourceModel::new(-1.0, 1.0, 1.0).is_err());
        assert!(SetupConfig::new(SourceModel::paper_default(), 0.0, 0.5).is_err());
        assert!(SetupConfig::new(SourceModel::paper_default(), 1.0, 1.5).is_err());
    }

    #[test]
    fn rate_extremes() {
        assert!(coincidence_rate(&setup(1.0)).abs() < 1e-9);
        let mut c = setup(1.0);
        c.beta_s = FRAC_PI_4;
        c.beta_i = FRAC_PI_4;
        assert!((2.0 * c.beta_s + 2.0 * c.beta_i - PI).abs() < 1e-15);
        assert!((coincidence_rate(&c) - 200.0).abs() < 1e-9);

        let mut far = setup(1.0);
        far.x_s = 0.1;
        far.x_i = 0.1;
        assert!((coincidence_rate(&far) - 100.0).abs() < 1e-6);
    }

    #[test]
    fn reduced_rate_examples() {
        assert_eq!(reduced_rate(&setup(1.0)), 0.0);
        let mut c = setup(1.0);
        c.beta_s = FRAC_PI_2;
        assert!((reduced_rate(&c) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_rate_has_one_fringe_per_two_pi() {
        let c = setup(1.0);
        let n = 720;
        let rates: Vec<f64> = (0..n)
            .map(|k| {
                let mut c = c;
                c.beta_s = 0.5 * TAU * k as f64 / n as f64;
                reduced_rate(&c)
            })
            .collect();
        // one maximum and one minimum over the period
        let maxima = (0..n)
            .filter(|&k| rates[k] > rates[(k + n - 1) % n] && rates[k] >= rates[(k + 1) % n])
            .count();
        assert_eq!(maxima, 1);
    }

    #[test]
    fn ultrabroadband_envelope_varies_with_mirror_but_not_waveplate() {
        let source = SourceModel::paper_default()
            .with_si_coherence_length(2e-6)
            .unwrap();
        let base = SetupConfig::new(source, 100.0, 1.0).unwrap();
        let dynamic: Vec<f64> = (0..=200)
            .map(|k| {
                let mut c = base;
                c.x_s = -1e-6 + 2e-6 * k as f64 / 200.0;
                gamma_si(deltas(&paths_from_setup(&c)).length_si, &source)
            })
            .collect();
        let max = dynamic.iter().cloned().fold(f64::MIN, f64::max);
        let min = dynamic.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min) / max > 0.1);

        let reference = fringe_envelope(&base);
        for k in 0..100 {
            let mut c = base;
            c.beta_s = 0.5 * TAU * k as f64 / 100.0;
            assert_eq!(fringe_envelope(&c), reference);
        }
    }

    proptest! {
        #[test]
        fn rate_bounded(
            xs in -1e-3..1e-3f64, xi in -1e-3..1e-3f64,
            bs in -4.0..4.0f64, bi in -4.0..4.0f64, v in 0.0..=1.0f64,
        ) {
            let mut c = setup(v);
            c.x_s = xs;
            c.x_i = xi;
            c.beta_s = bs;
            c.beta_i = bi;
            let r = coincidence_rate(&c);
            prop_assert!((0.0..=200.0).contains(&r));
            let r4 = reduced_rate(&c);
            prop_assert!((-1e-9..=200.0 + 1e-9).contains(&r4));
        }

        #[test]
        fn dynamic_and_geometric_shifts_interchange(
            xs in -1e-7..1e-7f64, bs in -2.0..2.0f64, delta in -3.0..3.0f64,
        ) {
            let mut base = setup(0.8);
            base.x_s = xs;
            base.beta_s = bs;
            let mut dynamic = base;
            dynamic.x_i = delta / base.source.k0();
            let mut geometric = base;
            geometric.beta_i = delta / 2.0;
            prop_assert!((reduced_rate(&dynamic) - reduced_rate(&geometric)).abs() < 1e-9);
        }

        #[test]
        fn geometric_phase_periodicity(bs in -4.0..4.0f64, bi in -4.0..4.0f64) {
            let mut c = setup(0.77);
            c.beta_s = bs;
            c.beta_i = bi;
            let r = coincidence_rate(&c);
            let mut shifted = c;
            shifted.beta_s += PI; // 2β_s + 2π
            prop_assert!((coincidence_rate(&shifted) - r).abs() < 1e-9);
            let mut shifted = c;
            shifted.beta_i += PI;
            prop_assert!((coincidence_rate(&shifted) - r).abs() < 1e-9);
        }

        #[test]
        fn reduced_matches_full_near_balance(
            xs in -2e-7..2e-7f64, d in -0.5e-6..0.5e-6f64,
            bs in -4.0..4.0f64, bi in -4.0..4.0f64,
        ) {
            // |ΔL| < l_p/100 and |ΔL′| < l_coh/100
            let mut c = setup(1.0);
            c.x_s = xs;
            c.x_i = xs + d;
            c.beta_s = bs;
            c.beta_i = bi;
            prop_assert!((coincidence_rate(&c) - reduced_rate(&c)).abs() < 1e-3 * c.rate_constant);
        }
    }
}

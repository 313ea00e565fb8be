//! Experiment configuration files.
//!
//! One `key = value [unit]` entry per line; `#` starts a comment. Lengths
//! take `m`, `cm`, `mm`, `um`/`μm` or `nm`; angles `rad` or `deg`; the dwell
//! time `s` or `ms`. `counting.C` is in counts per second (an optional `/s`
//! tag is accepted). Keys left out keep their default value; unknown or
//! repeated keys are errors.
//!
//! ```text
//! mirrors.x_s = 0 um
//! waveplates.beta_i = 45 deg
//! source.si_coherence_length = 100 um
//! counting.visibility_factor = 0.77
//! seed = 2008
//! ```

use std::collections::HashSet;
use std::fmt;

use crate::twophoton::{
    SetupConfig, SourceModel, TwoPhotonError, PAPER_PUMP_COHERENCE_LENGTH, PAPER_PUMP_WAVELENGTH,
    PAPER_SI_COHERENCE_LENGTH,
};

/// Default mean coincidence rate: with 10-point fringes and a 5 s dwell this
/// gives peaks of roughly 230 counts.
pub const DEFAULT_RATE_CONSTANT: f64 = 26.0;
pub const DEFAULT_DWELL: f64 = 5.0;
pub const DEFAULT_VISIBILITY_FACTOR: f64 = 0.77;
pub const DEFAULT_SEED: u64 = 2008;

/// Physical dimension of a configured quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Angle,
    Time,
    Rate,
    Dimensionless,
}

impl Dimension {
    /// SI scale of `unit`, or `None` when the unit does not belong here.
    fn scale(self, unit: &str) -> Option<f64> {
        match (self, unit) {
            (Dimension::Length, "m") => Some(1.0),
            (Dimension::Length, "cm") => Some(1e-2),
            (Dimension::Length, "mm") => Some(1e-3),
            (Dimension::Length, "um" | "μm" | "µm") => Some(1e-6),
            (Dimension::Length, "nm") => Some(1e-9),
            (Dimension::Angle, "rad") => Some(1.0),
            (Dimension::Angle, "deg") => Some(std::f64::consts::PI / 180.0),
            (Dimension::Time, "s") => Some(1.0),
            (Dimension::Time, "ms") => Some(1e-3),
            (Dimension::Rate, "" | "/s" | "Hz") => Some(1.0),
            (Dimension::Dimensionless, "") => Some(1.0),
            _ => None,
        }
    }

    fn units(self) -> &'static str {
        match self {
            Dimension::Length => "m, cm, mm, um, nm",
            Dimension::Angle => "rad, deg",
            Dimension::Time => "s, ms",
            Dimension::Rate => "/s (optional)",
            Dimension::Dimensionless => "no unit",
        }
    }

    fn base_unit(self) -> &'static str {
        match self {
            Dimension::Length => "m",
            Dimension::Angle => "rad",
            Dimension::Time => "s",
            Dimension::Rate | Dimension::Dimensionless => "",
        }
    }
}

/// Parses `"<number>[ ]<unit>"` into SI units.
pub fn parse_quantity(text: &str, dimension: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, ch)| {
            !(ch.is_ascii_digit()
                || ch == '.'
                || ch == '+'
                || ch == '-'
                || ((ch == 'e' || ch == 'E')
                    && text[i + 1..].starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value: f64 = number
        .parse()
        .map_err(|_| format!("`{text}` does not start with a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    let unit = unit.trim();
    match dimension.scale(unit) {
        Some(scale) => Ok(value * scale),
        None if unit.is_empty() => Err(format!(
            "`{text}` needs a unit ({})",
            dimension.units()
        )),
        None => Err(format!(
            "unknown unit `{unit}` (expected {})",
            dimension.units()
        )),
    }
}

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Everything an experiment file describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub x_s: f64,
    pub x_i: f64,
    pub beta_s: f64,
    pub beta_i: f64,
    pub pump_wavelength: f64,
    pub pump_coherence_length: f64,
    pub si_coherence_length: f64,
    pub rate_constant: f64,
    pub dwell: f64,
    pub visibility_factor: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            x_s: 0.0,
            x_i: 0.0,
            beta_s: 0.0,
            beta_i: 0.0,
            pump_wavelength: PAPER_PUMP_WAVELENGTH,
            pump_coherence_length: PAPER_PUMP_COHERENCE_LENGTH,
            si_coherence_length: PAPER_SI_COHERENCE_LENGTH,
            rate_constant: DEFAULT_RATE_CONSTANT,
            dwell: DEFAULT_DWELL,
            visibility_factor: DEFAULT_VISIBILITY_FACTOR,
            seed: DEFAULT_SEED,
        }
    }
}

const KEYS: [(&str, Dimension); 11] = [
    ("mirrors.x_s", Dimension::Length),
    ("mirrors.x_i", Dimension::Length),
    ("waveplates.beta_s", Dimension::Angle),
    ("waveplates.beta_i", Dimension::Angle),
    ("source.pump_wavelength", Dimension::Length),
    ("source.pump_coherence_length", Dimension::Length),
    ("source.si_coherence_length", Dimension::Length),
    ("counting.C", Dimension::Rate),
    ("counting.dwell", Dimension::Time),
    ("counting.visibility_factor", Dimension::Dimensionless),
    ("seed", Dimension::Dimensionless),
];

impl ExperimentConfig {
    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "mirrors.x_s" => &mut self.x_s,
            "mirrors.x_i" => &mut self.x_i,
            "waveplates.beta_s" => &mut self.beta_s,
            "waveplates.beta_i" => &mut self.beta_i,
            "source.pump_wavelength" => &mut self.pump_wavelength,
            "source.pump_coherence_length" => &mut self.pump_coherence_length,
            "source.si_coherence_length" => &mut self.si_coherence_length,
            "counting.C" => &mut self.rate_constant,
            "counting.dwell" => &mut self.dwell,
            "counting.visibility_factor" => &mut self.visibility_factor,
            _ => return None,
        })
    }

    fn value(&self, key: &str) -> f64 {
        let mut copy = *self;
        *copy.slot(key).expect("known key")
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen = HashSet::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let err = |column: usize, message: String| ConfigError {
                line,
                column,
                message,
            };
            let eq = content
                .find('=')
                .ok_or_else(|| err(1 + indent(content), "expected `key = value`".into()))?;
            let key = content[..eq].trim();
            let key_column = 1 + indent(content);
            let value_text = &content[eq + 1..];
            let value_column = eq + 2 + indent(value_text);
            let value_text = value_text.trim();

            let dimension = KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .ok_or_else(|| err(key_column, format!("unknown key `{key}`")))?;
            if !seen.insert(key.to_string()) {
                return Err(err(key_column, format!("duplicate key `{key}`")));
            }

            if key == "seed" {
                config.seed = value_text
                    .parse()
                    .map_err(|_| err(value_column, format!("seed `{value_text}` is not an unsigned integer")))?;
                continue;
            }
            let value = parse_quantity(value_text, dimension).map_err(|m| err(value_column, m))?;
            *config.slot(key).expect("known key") = value;
        }
        config.validate().map_err(|e| ConfigError {
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
        Ok(config)
    }

    /// Canonical text form in base SI units; parses back to an identical value.
    pub fn dump(&self) -> String {
        let mut out = String::from("# geophase experiment configuration\n");
        for (key, dimension) in KEYS {
            if key == "seed" {
                out.push_str(&format!("seed = {}\n", self.seed));
                continue;
            }
            let unit = dimension.base_unit();
            let sep = if unit.is_empty() { "" } else { " " };
            out.push_str(&format!("{key} = {:e}{sep}{unit}\n", self.value(key)));
        }
        out
    }

    pub fn source(&self) -> Result<SourceModel, TwoPhotonError> {
        SourceModel::from_pump_wavelength(
            self.pump_wavelength,
            self.pump_coherence_length,
            self.si_coherence_length,
        )
    }

    pub fn setup(&self) -> Result<SetupConfig, TwoPhotonError> {
        let mut setup = SetupConfig::new(self.source()?, self.rate_constant, self.visibility_factor)?;
        setup.x_s = self.x_s;
        setup.x_i = self.x_i;
        setup.beta_s = self.beta_s;
        setup.beta_i = self.beta_i;
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.setup().map_err(|e| e.to_string())?;
        if !(self.dwell.is_finite() && self.dwell > 0.0) {
            return Err(format!("dwell time must be positive, got {}", self.dwell));
        }
        Ok(())
    }
}

fn indent(s: &str) -> usize {
    s.chars().take_while(|c| c.is_whitespace()).count()
}

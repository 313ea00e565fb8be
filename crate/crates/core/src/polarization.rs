//! Jones calculus for waveplate and mirror sequences, the Poincaré-sphere
//! mapping, and the geometric (Pancharatnam) phase of closed polarization
//! circuits.
//!
//! Conventions used throughout:
//!
//! * Retarders use special-unitary Jones matrices,
//!   `U = cos(δ/2)·I + i·sin(δ/2)·(cos 2θ·σz + sin 2θ·σx)`, so the field
//!   component along the axis `θ` gains `+δ/2` and the orthogonal one `-δ/2`.
//!   No retarder adds an overall (dynamic) phase.
//! * A normal-incidence mirror acts as the identity on `(e_h, e_v)`; its
//!   reflection phase `π` is reported separately and never mixed into the
//!   polarization phase.
//! * Stokes: `s1 = |h|² - |v|²`, `s2 = 2 Re(h* v)`, `s3 = -2 Im(h* v)`, so the
//!   right-circular state `(1, -i)/√2` sits at `s3 = +1`.
//! * The sign of [`geometric_phase`] is chosen so that the signal-arm loop of
//!   [`signal_loop`] gives `+2β`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;
use thiserror::Error;

/// 2×2 complex Jones operator.
pub type JonesMatrix = Matrix2<Complex64>;

/// Overlaps below this magnitude are treated as orthogonal states.
const ORTHOGONAL_OVERLAP: f64 = 1e-9;

/// `|a + b|` below this marks two Stokes points as antipodal.
const ANTIPODAL_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("phase undefined: output is orthogonal to input (|<in|out>| = {overlap:e})")]
    PhaseUndefined { overlap: f64 },
    #[error("geodesic undefined between antipodal vertices {from} and {to}")]
    DegenerateEdge { from: usize, to: usize },
    #[error("a circuit needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("cannot normalize a zero-length {0}")]
    ZeroNorm(&'static str),
    #[error("element sequence is empty")]
    EmptySequence,
}

pub type Result<T> = std::result::Result<T, PolarizationError>;

/// Normalized Jones vector with its global phase kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState {
    e_h: Complex64,
    e_v: Complex64,
}

impl PolarizationState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn new(e_h: Complex64, e_v: Complex64) -> Result<Self> {
        let norm = (e_h.norm_sqr() + e_v.norm_sqr()).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(PolarizationError::ZeroNorm("Jones vector"));
        }
        Ok(Self {
            e_h: e_h / norm,
            e_v: e_v / norm,
        })
    }

    pub fn horizontal() -> Self {
        Self {
            e_h: Complex64::new(1.0, 0.0),
            e_v: Complex64::new(0.0, 0.0),
        }
    }

    pub fn vertical() -> Self {
        Self {
            e_h: Complex64::new(0.0, 0.0),
            e_v: Complex64::new(1.0, 0.0),
        }
    }

    /// Linear polarization at `angle` from horizontal.
    pub fn linear(angle: f64) -> Self {
        Self {
            e_h: Complex64::new(angle.cos(), 0.0),
            e_v: Complex64::new(angle.sin(), 0.0),
        }
    }

    pub fn e_h(&self) -> Complex64 {
        self.e_h
    }

    pub fn e_v(&self) -> Complex64 {
        self.e_v
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.e_h.conj() * other.e_h + self.e_v.conj() * other.e_v
    }

    pub fn with_global_phase(&self, chi: f64) -> Self {
        let phase = Complex64::from_polar(1.0, chi);
        Self {
            e_h: self.e_h * phase,
            e_v: self.e_v * phase,
        }
    }

    /// Applies a unitary Jones operator. Unitarity keeps the norm.
    pub fn transformed(&self, m: &JonesMatrix) -> Self {
        let out = m * Vector2::new(self.e_h, self.e_v);
        Self {
            e_h: out[0],
            e_v: out[1],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.e_h.norm_sqr() + self.e_v.norm_sqr()
    }
}

/// Linear retarder. Retardance lives in `[0, 2π)`, the axis in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retarder {
    retardance: f64,
    fast_axis: f64,
}

impl Retarder {
    pub fn new(retardance: f64, fast_axis: f64) -> Self {
        Self {
            retardance: wrap_into(retardance, TAU),
            fast_axis: wrap_into(fast_axis, PI),
        }
    }

    pub fn quarter_wave(fast_axis: f64) -> Self {
        Self::new(PI / 2.0, fast_axis)
    }

    pub fn half_wave(fast_axis: f64) -> Self {
        Self::new(PI, fast_axis)
    }

    pub fn retardance(&self) -> f64 {
        self.retardance
    }

    pub fn fast_axis(&self) -> f64 {
        self.fast_axis
    }
}

/// `x mod period`, landing in `[0, period)` even when rounding would give `period`.
fn wrap_into(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Unit-determinant Jones matrix of a retarder.
pub fn retarder_matrix(r: &Retarder) -> JonesMatrix {
    let (s, c) = (r.retardance / 2.0).sin_cos();
    let (s2, c2) = (2.0 * r.fast_axis).sin_cos();
    let diag = Complex64::new(c, s * c2);
    let off = Complex64::new(0.0, s * s2);
    Matrix2::new(diag, off, off, diag.conj())
}

/// One optical element in a polarization path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Retarder(Retarder),
    /// Normal-incidence mirror.
    Mirror,
}

impl Element {
    pub fn matrix(&self) -> JonesMatrix {
        match self {
            Element::Retarder(r) => retarder_matrix(r),
            Element::Mirror => JonesMatrix::identity(),
        }
    }

    /// Phase picked up on reflection, kept out of the polarization geometry.
    pub fn reflection_phase(&self) -> f64 {
        match self {
            Element::Retarder(_) => 0.0,
            Element::Mirror => PI,
        }
    }
}

/// Result of sending a state through an element sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    pub output: PolarizationState,
    /// `arg⟨input|output⟩`, in `(-π, π]`.
    pub accumulated_phase: f64,
    /// Sum of the mirrors' reflection phases along the sequence.
    pub reflection_phase: f64,
}

/// Applies `elements` in order to `input` and reports the Pancharatnam phase
/// between input and output.
pub fn propagate(elements: &[Element], input: &PolarizationState) -> Result<Propagation> {
    if elements.is_empty() {
        return Err(PolarizationError::EmptySequence);
    }
    let mut output = *input;
    let mut reflection_phase = 0.0;
    for element in elements {
        output = output.transformed(&element.matrix());
        reflection_phase += element.reflection_phase();
    }
    let overlap = input.inner(&output);
    if overlap.norm() < ORTHOGONAL_OVERLAP {
        return Err(PolarizationError::PhaseUndefined {
            overlap: overlap.norm(),
        });
    }
    Ok(Propagation {
        output,
        accumulated_phase: overlap.arg(),
        reflection_phase,
    })
}

/// Double-pass signal arm: fixed QWP at 45°, rotatable QWP at 135°+β, the
/// mirror, then back through both plates.
pub fn signal_loop(beta: f64) -> [Element; 5] {
    let fixed = Element::Retarder(Retarder::quarter_wave(FRAC_PI_4));
    let rotatable = Element::Retarder(Retarder::quarter_wave(3.0 * FRAC_PI_4 + beta));
    [fixed, rotatable, Element::Mirror, rotatable, fixed]
}

/// Point on the Poincaré sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesPoint {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesPoint {
    /// Normalizes `(s1, s2, s3)` onto the unit sphere.
    pub fn new(s1: f64, s2: f64, s3: f64) -> Result<Self> {
        let n = (s1 * s1 + s2 * s2 + s3 * s3).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(PolarizationError::ZeroNorm("Stokes vector"));
        }
        Ok(Self {
            s1: s1 / n,
            s2: s2 / n,
            s3: s3 / n,
        })
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.s1, self.s2, self.s3)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self.as_vector() - other.as_vector()).norm()
    }

    pub fn is_antipodal_to(&self, other: &Self) -> bool {
        (self.as_vector() + other.as_vector()).norm() < ANTIPODAL_DISTANCE
    }
}

pub fn to_stokes(p: &PolarizationState) -> StokesPoint {
    let cross = p.e_h.conj() * p.e_v;
    StokesPoint {
        s1: p.e_h.norm_sqr() - p.e_v.norm_sqr(),
        s2: 2.0 * cross.re,
        s3: -2.0 * cross.im,
    }
}

/// Closed polygon on the Poincaré sphere with geodesic edges; the last vertex
/// connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicCircuit {
    vertices: Vec<StokesPoint>,
}

impl GeodesicCircuit {
    pub fn new(vertices: Vec<StokesPoint>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(PolarizationError::TooFewVertices(n));
        }
        for from in 0..n {
            let to = (from + 1) % n;
            if vertices[from].is_antipodal_to(&vertices[to]) {
                return Err(PolarizationError::DegenerateEdge { from, to });
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[StokesPoint] {
        &self.vertices
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices }
    }
}

/// Circuit A→B→C→D traced by the H input through [`signal_loop`]`(beta)`.
pub fn circuit_for_loop(beta: f64) -> GeodesicCircuit {
    let elements = signal_loop(beta);
    let mut state = PolarizationState::horizontal();
    let mut vertices = vec![to_stokes(&state)];
    for (k, element) in elements[..elements.len() - 1].iter().enumerate() {
        state = state.transformed(&element.matrix());
        // the mirror leaves the polarization (and so the vertex) unchanged
        if k != 2 {
            vertices.push(to_stokes(&state));
        }
    }
    GeodesicCircuit::new(vertices).expect("loop circuit only joins poles to equatorial points")
}

/// Signed area of the geodesic triangle `abc` (Van Oosterom–Strackee).
fn triangle_excess(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let numerator = a.dot(&b.cross(c));
    let denominator = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * numerator.atan2(denominator)
}

/// Minimum apex clearance `1 + p·v`; zero means `p` is antipodal to a vertex.
fn clearance(p: &Vector3<f64>, vertices: &[Vector3<f64>]) -> f64 {
    vertices
        .iter()
        .map(|v| 1.0 + p.dot(v))
        .fold(f64::INFINITY, f64::min)
}

/// Clearance an apex needs before it is accepted without looking further.
const APEX_CLEARANCE: f64 = 1e-3;

/// Fan apex: vertex 0 when no vertex is (nearly) opposite it, otherwise the
/// first other vertex or edge midpoint that clears every vertex.
fn fan_apex(vertices: &[Vector3<f64>]) -> Vector3<f64> {
    let n = vertices.len();
    let midpoints = (0..n).filter_map(|k| {
        let m = vertices[k] + vertices[(k + 1) % n];
        let norm = m.norm();
        (norm > 1e-6).then(|| m / norm)
    });
    let mut best = vertices[0];
    let mut best_clearance = clearance(&best, vertices);
    for candidate in vertices.iter().copied().chain(midpoints) {
        if best_clearance >= APEX_CLEARANCE {
            break;
        }
        let c = clearance(&candidate, vertices);
        if c > best_clearance {
            best = candidate;
            best_clearance = c;
        }
    }
    best
}

/// Signed solid angle enclosed by the circuit, reduced into `(-2π, 2π]`.
/// Counter-clockwise traversal seen from outside the sphere is positive.
pub fn solid_angle(c: &GeodesicCircuit) -> f64 {
    let vertices: Vec<Vector3<f64>> = c.vertices.iter().map(StokesPoint::as_vector).collect();
    let apex = fan_apex(&vertices);
    let n = vertices.len();
    let total: f64 = (0..n)
        .map(|k| triangle_excess(&apex, &vertices[k], &vertices[(k + 1) % n]))
        .sum();
    let r = total.rem_euclid(2.0 * TAU);
    if r > TAU {
        r - 2.0 * TAU
    } else {
        r
    }
}

/// Half the signed solid angle, with the sign chosen so the signal loop
/// yields `+2β`.
pub fn geometric_phase(c: &GeodesicCircuit) -> f64 {
    0.5 * solid_angle(c)
}

/// Wraps a phase into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x - TAU * (x / TAU).round();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

//! Sampling grids, complex fields, setup geometry and detector patterns.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform, centered sampling grid in one or two dimensions.
///
/// Sample `n / 2` sits at coordinate zero on every axis and
/// `coordinate(i) = (i - n/2) * pitch`. Two-dimensional grids are square and
/// stored row-major (`[y][x]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: usize,
    n: usize,
    pitch: f64,
}

impl Grid {
    pub fn new(dims: usize, n: usize, pitch: f64) -> Result<Self> {
        if dims != 1 && dims != 2 {
            return Err(Error::Configuration(format!(
                "grid dims must be 1 or 2, got {dims}"
            )));
        }
        if n < 2 {
            return Err(Error::Configuration(format!("grid n must be >= 2, got {n}")));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Configuration(format!(
                "grid pitch must be > 0, got {pitch}"
            )));
        }
        Ok(Grid { dims, n, pitch })
    }

    pub fn new_1d(n: usize, pitch: f64) -> Result<Self> {
        Self::new(1, n, pitch)
    }

    pub fn new_2d(n: usize, pitch: f64) -> Result<Self> {
        Self::new(2, n, pitch)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Samples per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Total number of samples (`n^dims`).
    pub fn len(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical extent of one axis.
    pub fn span(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    /// Area (or length) element `pitch^dims`.
    pub fn cell_measure(&self) -> f64 {
        self.pitch.powi(self.dims as i32)
    }

    pub fn center(&self) -> usize {
        self.n / 2
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.pitch
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i)).collect()
    }

    /// Index of the sample nearest to `x`, if it lies on the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = (x / self.pitch).round() + (self.n / 2) as f64;
        if k >= 0.0 && k < self.n as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    pub fn is_compatible(&self, other: &Grid) -> bool {
        self == other
    }

    pub fn ensure_compatible(&self, other: &Grid, what: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: grid {self:?} is not compatible with {other:?}"
            )))
        }
    }

    /// Squared radius of a flat sample index (`x^2` in 1D, `x^2 + y^2` in 2D).
    pub fn radius_sq(&self, flat: usize) -> f64 {
        match self.dims {
            1 => self.coordinate(flat).powi(2),
            _ => {
                let (iy, ix) = (flat / self.n, flat % self.n);
                self.coordinate(ix).powi(2) + self.coordinate(iy).powi(2)
            }
        }
    }

    /// Same grid with a different pitch.
    pub fn with_pitch(&self, pitch: f64) -> Result<Grid> {
        Grid::new(self.dims, self.n, pitch)
    }

    /// Largest magnitude a coordinate reaches on this grid.
    pub fn max_abs_coordinate(&self) -> f64 {
        (self.n / 2) as f64 * self.pitch
    }
}

/// Sampled complex optical field.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    samples: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GeometryMismatch(format!(
                "field has {} samples, grid expects {}",
                samples.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, samples })
    }

    pub fn zeros(grid: Grid) -> Self {
        ComplexField {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Field whose value at each sample is `f(x)` (1D) or `f(x, y)` (2D).
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let n = grid.n();
        let samples = (0..grid.len())
            .map(|k| match grid.dims() {
                1 => f(grid.coordinate(k), 0.0),
                _ => f(grid.coordinate(k % n), grid.coordinate(k / n)),
            })
            .collect();
        ComplexField { grid, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// `sum |E|^2 * pitch^dims`.
    pub fn energy(&self) -> f64 {
        energy(self)
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|e| e.norm_sqr()).collect()
    }

    pub fn scale(&mut self, a: Complex64) {
        for s in &mut self.samples {
            *s *= a;
        }
    }
}

pub fn energy(field: &ComplexField) -> f64 {
    field.samples.iter().map(|e| e.norm_sqr()).sum::<f64>() * field.grid.cell_measure()
}

/// Wavelength and the distances of both arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupGeometry {
    /// Wavelength λ (m).
    pub wavelength: f64,
    /// Source spot diameter on the ground glass (m).
    pub d0: f64,
    /// Source to object (m).
    pub d1: f64,
    /// Object to test detector (m).
    pub d2: f64,
    /// Source to reference detector (m).
    pub d_ref: f64,
}

/// Tolerance on `d_ref - (d1 + d2)` for the Fourier condition.
pub const FOURIER_CONDITION_TOLERANCE: f64 = 1e-9;

impl SetupGeometry {
    pub fn new(wavelength: f64, d0: f64, d1: f64, d2: f64, d_ref: f64) -> Result<Self> {
        let g = SetupGeometry {
            wavelength,
            d0,
            d1,
            d2,
            d_ref,
        };
        g.validate()?;
        Ok(g)
    }

    /// The two-arm geometry of the experiment: 532 nm, d1 = 60 mm,
    /// d2 = 75 mm, d_ref = 135 mm, 2.67 mm source spot.
    pub fn standard() -> Self {
        SetupGeometry {
            wavelength: 0.532e-6,
            d0: 2.67e-3,
            d1: 60e-3,
            d2: 75e-3,
            d_ref: 135e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("d0", self.d0),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d_ref", self.d_ref),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGeometry(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn fourier_condition_met(&self) -> bool {
        (self.d_ref - (self.d1 + self.d2)).abs() <= FOURIER_CONDITION_TOLERANCE
    }

    /// `I0^2 / (λ^4 d2^4)` for unit source intensity. Reported as metadata
    /// only; patterns are peak-normalized.
    pub fn correlation_prefactor(&self) -> f64 {
        1.0 / (self.wavelength.powi(4) * self.d2.powi(4))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Detector displacement (m).
    Displacement,
    /// Object-plane spatial frequency (cycles/m).
    Frequency,
}

impl AxisKind {
    pub fn units(&self) -> &'static str {
        match self {
            AxisKind::Displacement => "m",
            AxisKind::Frequency => "cycles/m",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AxisKind::Displacement => "displacement",
            AxisKind::Frequency => "frequency",
        }
    }
}

/// Real-valued pattern on a strictly increasing axis. Two-dimensional
/// patterns use the same axis for rows and columns and store values
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    axis: Vec<f64>,
    values: Vec<f64>,
    kind: AxisKind,
    dims: usize,
}

impl Pattern {
    pub fn new(axis: Vec<f64>, values: Vec<f64>, kind: AxisKind, dims: usize) -> Result<Self> {
        if dims != 1 && dims != 2 {
            return Err(Error::Configuration(format!("pattern dims must be 1 or 2, got {dims}")));
        }
        if axis.len() < 2 {
            return Err(Error::Format("pattern axis needs at least two samples".into()));
        }
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("pattern axis must be strictly increasing".into()));
        }
        if values.len() != axis.len().pow(dims as u32) {
            return Err(Error::Format(format!(
                "pattern has {} values, axis implies {}",
                values.len(),
                axis.len().pow(dims as u32)
            )));
        }
        Ok(Pattern {
            axis,
            values,
            kind,
            dims,
        })
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> AxisKind {
        self.kind
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.axis[self.axis.len() - 1] - self.axis[0]) / (self.axis.len() - 1) as f64
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rescale so the maximum is one. Patterns with no positive value are
    /// left untouched.
    pub fn normalize_peak(&mut self) {
        let p = self.peak();
        if p > 0.0 {
            for v in &mut self.values {
                *v /= p;
            }
        }
    }

    /// Same values with the axis multiplied by `factor` (e.g. `λ d2` to go
    /// from frequency to detector displacement).
    pub fn rescaled_axis(&self, factor: f64, kind: AxisKind) -> Result<Pattern> {
        if !(factor > 0.0) {
            return Err(Error::Configuration("axis factor must be > 0".into()));
        }
        Pattern::new(
            self.axis.iter().map(|a| a * factor).collect(),
            self.values.clone(),
            kind,
            self.dims,
        )
    }

    /// Row `iy` of a 2D pattern (the cut along the x axis), or the whole
    /// pattern in 1D.
    pub fn row(&self, iy: usize) -> Pattern {
        let n = self.axis.len();
        let values = match self.dims {
            1 => self.values.clone(),
            _ => self.values[iy * n..(iy + 1) * n].to_vec(),
        };
        Pattern {
            axis: self.axis.clone(),
            values,
            kind: self.kind,
            dims: 1,
        }
    }

    /// Column `ix` of a 2D pattern (the cut along the y axis).
    pub fn column(&self, ix: usize) -> Pattern {
        let n = self.axis.len();
        let values = match self.dims {
            1 => self.values.clone(),
            _ => (0..n).map(|iy| self.values[iy * n + ix]).collect(),
        };
        Pattern {
            axis: self.axis.clone(),
            values,
            kind: self.kind,
            dims: 1,
        }
    }

    /// Linear interpolation of a 1D pattern at `x`; `None` outside the axis.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        interpolate_uniform(&self.axis, &self.values, x)
    }
}

/// Linear interpolation on a strictly increasing axis.
pub(crate) fn interpolate_uniform(axis: &[f64], values: &[f64], x: f64) -> Option<f64> {
    let n = axis.len();
    if n == 0 || x < axis[0] || x > axis[n - 1] || !x.is_finite() {
        return None;
    }
    // binary search handles non-uniform axes too
    let hi = axis.partition_point(|&a| a < x).min(n - 1);
    if hi == 0 {
        return Some(values[0]);
    }
    let lo = hi - 1;
    let (x0, x1) = (axis[lo], axis[hi]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    Some(values[lo] * (1.0 - w) + values[hi] * w)
}

/// Spatial-frequency axis `ν_i = coordinate(i) / (λ d2)` of a detector grid.
pub fn frequency_axis(grid: &Grid, wavelength: f64, d2: f64) -> Result<Vec<f64>> {
    if !(wavelength > 0.0) || !(d2 > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "frequency axis needs λ > 0 and d2 > 0, got λ = {wavelength}, d2 = {d2}"
        )));
    }
    let scale = wavelength * d2;
    Ok((0..grid.n()).map(|i| grid.coordinate(i) / scale).collect())
}

/// Fraunhofer distance `π a² / λ` for a full aperture width `a`.
///
/// Order-of-magnitude criterion only: other common conventions (`2a²/λ`,
/// half-width variants) differ by a factor of a few.
pub fn fraunhofer_distance(aperture_width: f64, wavelength: f64) -> Result<f64> {
    if !(aperture_width > 0.0) || !(wavelength > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "fraunhofer distance needs positive arguments, got a = {aperture_width}, λ = {wavelength}"
        )));
    }
    Ok(std::f64::consts::PI * aperture_width * aperture_width / wavelength)
}

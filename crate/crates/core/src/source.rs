//! Pseudo-thermal source: a uniformly illuminated spot on rotating ground
//! glass, modelled as unit amplitude with an iid uniform random phase per
//! sample.
//!
//! Phases come from a counter-based generator keyed on
//! `(master_seed, realization_index, sample_index)`, so a realization can be
//! regenerated in isolation and in any order.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::SquareFft;
use crate::grid::{ComplexField, Grid};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Uniform amplitude inside the spot, zero outside.
    #[default]
    HardDisk,
    /// Gaussian amplitude with 1/e² intensity diameter `spot_diameter`,
    /// truncated at twice that radius.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleSpec {
    pub spot_diameter: f64,
    pub profile: Profile,
}

impl SpeckleSpec {
    pub fn new(spot_diameter: f64, profile: Profile) -> Self {
        SpeckleSpec {
            spot_diameter,
            profile,
        }
    }

    pub fn validate_for(&self, grid: &Grid) -> Result<()> {
        if !(self.spot_diameter > 0.0 && self.spot_diameter.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "spot diameter must be > 0, got {}",
                self.spot_diameter
            )));
        }
        if self.spot_diameter > grid.span() / 2.0 {
            return Err(Error::InvalidGeometry(format!(
                "spot diameter {} m exceeds half the grid span {} m",
                self.spot_diameter,
                grid.span() / 2.0
            )));
        }
        Ok(())
    }

    fn amplitude(&self, r2: f64) -> f64 {
        let rad = self.spot_diameter / 2.0;
        match self.profile {
            Profile::HardDisk => {
                if r2 < rad * rad {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Gaussian => {
                if r2 < 4.0 * rad * rad {
                    (-r2 / (rad * rad)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn support_radius(&self) -> f64 {
        match self.profile {
            Profile::HardDisk => self.spot_diameter / 2.0,
            Profile::Gaussian => self.spot_diameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RealizationSeed {
    pub master_seed: u64,
    pub realization_index: u64,
}

impl RealizationSeed {
    pub fn new(master_seed: u64, realization_index: u64) -> Self {
        RealizationSeed {
            master_seed,
            realization_index,
        }
    }
}

/// Precomputed aperture for repeated speckle generation on one grid.
#[derive(Debug, Clone)]
pub struct SpeckleSource {
    grid: Grid,
    spec: SpeckleSpec,
    /// `(first flat index, amplitudes)` for each contiguous run inside the
    /// aperture.
    runs: Vec<(usize, Vec<f64>)>,
}

impl SpeckleSource {
    pub fn new(grid: Grid, spec: SpeckleSpec) -> Result<Self> {
        spec.validate_for(&grid)?;
        let n = grid.n();
        let rows = if grid.dims() == 1 { 1 } else { n };
        let reach = spec.support_radius();
        let mut runs = Vec::new();
        for iy in 0..rows {
            let y2 = if grid.dims() == 1 {
                0.0
            } else {
                grid.coordinate(iy).powi(2)
            };
            if y2 >= reach * reach {
                continue;
            }
            let mut start = None;
            let mut amps = Vec::new();
            for ix in 0..n {
                let a = spec.amplitude(grid.coordinate(ix).powi(2) + y2);
                if a > 0.0 {
                    if start.is_none() {
                        start = Some(iy * n + ix);
                    }
                    amps.push(a);
                } else if let Some(s) = start.take() {
                    runs.push((s, std::mem::take(&mut amps)));
                }
            }
            if let Some(s) = start {
                runs.push((s, amps));
            }
        }
        Ok(SpeckleSource { grid, spec, runs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &SpeckleSpec {
        &self.spec
    }

    /// Number of samples with nonzero amplitude.
    pub fn support_len(&self) -> usize {
        self.runs.iter().map(|(_, a)| a.len()).sum()
    }

    /// Writes realization `seed` into `out`, which must have `grid.len()`
    /// samples.
    pub fn fill(&self, seed: RealizationSeed, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.grid.len());
        out.fill(Complex64::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
        rng.set_stream(seed.realization_index);
        for (start, amps) in &self.runs {
            // two 32-bit words per sample
            rng.set_word_pos(2 * *start as u128);
            for (k, &a) in amps.iter().enumerate() {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                let (s, c) = (std::f64::consts::TAU * u).sin_cos();
                out[start + k] = Complex64::new(a * c, a * s);
            }
        }
    }

    pub fn generate(&self, seed: RealizationSeed) -> ComplexField {
        let mut samples = vec![Complex64::default(); self.grid.len()];
        self.fill(seed, &mut samples);
        ComplexField::new(self.grid, samples).expect("length matches grid")
    }
}

/// One source-plane realization.
pub fn generate_speckle(grid: &Grid, spec: &SpeckleSpec, seed: RealizationSeed) -> Result<ComplexField> {
    Ok(SpeckleSource::new(*grid, *spec)?.generate(seed))
}

/// Transverse coherence length `λ d1 / d0` at distance `d1` from a source of
/// diameter `d0`.
pub fn transverse_coherence_length(wavelength: f64, d1: f64, d0: f64) -> Result<f64> {
    if !(wavelength > 0.0 && d1 > 0.0 && d0 > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "coherence length needs positive λ, d1, d0; got {wavelength}, {d1}, {d0}"
        )));
    }
    Ok(wavelength * d1 / d0)
}

/// Coherence time `λ² / (c Δλ)`.
pub fn coherence_time(wavelength: f64, bandwidth: f64) -> Result<f64> {
    if !(wavelength > 0.0 && bandwidth > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "coherence time needs positive λ and Δλ; got {wavelength}, {bandwidth}"
        )));
    }
    Ok(wavelength * wavelength / (SPEED_OF_LIGHT * bandwidth))
}

/// Expected FWHM of the normalized intensity autocovariance at distance
/// `d1`: `sinc²` for a uniform slit (1D), Airy² for a uniform disk (2D),
/// Gaussian for the Gaussian spot.
pub fn predicted_speckle_fwhm(spec: &SpeckleSpec, wavelength: f64, d1: f64, dims: usize) -> Result<f64> {
    let l = transverse_coherence_length(wavelength, d1, spec.spot_diameter)?;
    let factor = match (spec.profile, dims) {
        (Profile::HardDisk, 1) => 0.885_893,
        (Profile::HardDisk, _) => 1.028_94,
        // amplitude exp(-r²/w²), w = d0/2: covariance exp(-π² w² x² / (λ d1)²)
        (Profile::Gaussian, _) => 2.0 * (2f64.ln()).sqrt() / std::f64::consts::PI * 2.0,
    };
    Ok(factor * l)
}

/// Streaming estimate of the intensity autocovariance along the x axis.
///
/// Keeps running sums of the intensity and of the zero-padded power
/// spectrum of each realization. In 2D, every row contributes.
#[derive(Clone)]
pub struct AutocovarianceAccumulator {
    grid: Grid,
    count: u64,
    sum: Vec<f64>,
    sum_sq: f64,
    sum_power: Vec<f64>,
    fft: SquareFft,
    buf: Vec<Complex64>,
}

impl AutocovarianceAccumulator {
    pub fn new(grid: Grid) -> Self {
        let m = 2 * grid.n();
        AutocovarianceAccumulator {
            grid,
            count: 0,
            sum: vec![0.0; grid.len()],
            sum_sq: 0.0,
            sum_power: vec![0.0; m],
            fft: SquareFft::new(1, m),
            buf: vec![Complex64::default(); m],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn accumulate(&mut self, intensity: &[f64]) -> Result<()> {
        if intensity.len() != self.grid.len() {
            return Err(Error::GeometryMismatch(format!(
                "intensity has {} samples, accumulator expects {}",
                intensity.len(),
                self.grid.len()
            )));
        }
        let n = self.grid.n();
        for (s, &v) in self.sum.iter_mut().zip(intensity) {
            *s += v;
        }
        self.sum_sq += intensity.iter().map(|v| v * v).sum::<f64>();
        for row in intensity.chunks(n) {
            add_power(&mut self.fft, &mut self.buf, row, &mut self.sum_power);
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &AutocovarianceAccumulator) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GeometryMismatch("cannot merge autocovariance accumulators on different grids".into()));
        }
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.sum_sq += other.sum_sq;
        for (a, b) in self.sum_power.iter_mut().zip(&other.sum_power) {
            *a += b;
        }
        Ok(())
    }

    /// Normalized autocovariance `C(Δ)/C(0)` for lags `Δ = 0..n-1` samples.
    pub fn normalized(&mut self) -> Result<Vec<f64>> {
        if self.count < 100 {
            return Err(Error::InsufficientStatistics(format!(
                "autocovariance needs at least 100 realizations, have {}",
                self.count
            )));
        }
        let n = self.grid.n();
        let cnt = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / cnt).collect();
        let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
        let variance = self.sum_sq / cnt - mean_sq;
        if !(variance > 1e-12 * mean_sq.max(f64::MIN_POSITIVE)) {
            return Err(Error::DegenerateInput(
                "flat ensemble (zero variance)".into(),
            ));
        }
        let m = 2 * n;
        let mut mean_power = vec![0.0; m];
        for row in mean.chunks(n) {
            add_power(&mut self.fft, &mut self.buf, row, &mut mean_power);
        }
        for (b, (sp, mp)) in self.buf.iter_mut().zip(self.sum_power.iter().zip(&mean_power)) {
            *b = Complex64::new(sp / cnt - mp, 0.0);
        }
        self.fft.inverse(&mut self.buf);
        let rows = (self.grid.len() / n) as f64;
        let cov: Vec<f64> = (0..n)
            .map(|lag| self.buf[lag].re / (rows * (n - lag) as f64))
            .collect();
        let c0 = cov[0];
        if !(c0 > 0.0) {
            return Err(Error::DegenerateInput("flat ensemble (zero variance)".into()));
        }
        Ok(cov.iter().map(|c| c / c0).collect())
    }

    /// Full width at half maximum of the normalized autocovariance (m).
    pub fn fwhm(&mut self) -> Result<f64> {
        let c = self.normalized()?;
        let pitch = self.grid.pitch();
        for lag in 1..c.len() {
            if c[lag] < 0.5 {
                let (a, b) = (c[lag - 1], c[lag]);
                let frac = (a - 0.5) / (a - b);
                return Ok(2.0 * (lag as f64 - 1.0 + frac) * pitch);
            }
        }
        Err(Error::DegenerateInput(
            "autocovariance never falls below half maximum".into(),
        ))
    }
}

fn add_power(fft: &mut SquareFft, buf: &mut [Complex64], row: &[f64], acc: &mut [f64]) {
    buf.fill(Complex64::default());
    for (b, &v) in buf.iter_mut().zip(row) {
        b.re = v;
    }
    fft.forward(buf);
    for (a, b) in acc.iter_mut().zip(buf.iter()) {
        *a += b.norm_sqr();
    }
}

/// FWHM of the intensity autocovariance of a set of intensity frames.
pub fn autocorrelation_fwhm(grid: &Grid, frames: &[Vec<f64>]) -> Result<f64> {
    let mut acc = AutocovarianceAccumulator::new(*grid);
    for f in frames {
        acc.accumulate(f)?;
    }
    acc.fwhm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::new_1d(1024, 1e-6).unwrap()
    }

    #[test]
    fn coherence_examples() {
        let l = transverse_coherence_length(0.532e-6, 60e-3, 3e-3).unwrap();
        assert_relative_eq!(l, 10.64e-6, max_relative = 1e-3);
        let l = transverse_coherence_length(0.5e-6, 1.0, 1e-3).unwrap();
        assert_relative_eq!(l, 5e-4, max_relative = 1e-12);
        assert!(transverse_coherence_length(0.5e-6, 1.0, 0.0).is_err());
        let t = coherence_time(0.5e-6, 1e-9).unwrap();
        assert_relative_eq!(t, 8.34e-13, max_relative = 1e-3);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let s = SpeckleSpec::new(200e-6, Profile::HardDisk);
        let a = generate_speckle(&grid(), &s, RealizationSeed::new(7, 3)).unwrap();
        let b = generate_speckle(&grid(), &s, RealizationSeed::new(7, 3)).unwrap();
        assert_eq!(a, b);
        let c = generate_speckle(&grid(), &s, RealizationSeed::new(7, 4)).unwrap();
        assert_ne!(a, c);
        let d = generate_speckle(&grid(), &s, RealizationSeed::new(8, 3)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn phase_depends_only_on_sample_index() {
        // the same physical sample index gets the same phase whatever the
        // aperture around it
        let small = SpeckleSpec::new(20e-6, Profile::HardDisk);
        let large = SpeckleSpec::new(200e-6, Profile::HardDisk);
        let seed = RealizationSeed::new(1, 9);
        let a = generate_speckle(&grid(), &small, seed).unwrap();
        let b = generate_speckle(&grid(), &large, seed).unwrap();
        for i in 0..1024 {
            if a.samples()[i].norm() > 0.0 {
                assert_eq!(a.samples()[i], b.samples()[i]);
            }
        }
    }

    #[test]
    fn unit_modulus_inside_zero_outside() {
        let s = SpeckleSpec::new(100e-6, Profile::HardDisk);
        let g = grid();
        let f = generate_speckle(&g, &s, RealizationSeed::new(0, 0)).unwrap();
        for (i, e) in f.samples().iter().enumerate() {
            if g.coordinate(i).abs() < 50e-6 {
                assert_relative_eq!(e.norm(), 1.0, max_relative = 1e-12);
            } else {
                assert_eq!(e.norm(), 0.0);
            }
        }
    }

    #[test]
    fn disk_in_2d() {
        let g = Grid::new_2d(64, 1e-6).unwrap();
        let s = SpeckleSpec::new(20e-6, Profile::HardDisk);
        let src = SpeckleSource::new(g, s).unwrap();
        let f = src.generate(RealizationSeed::new(2, 2));
        for (k, e) in f.samples().iter().enumerate() {
            let inside = g.radius_sq(k) < (20e-6f64 / 2.0).powi(2);
            assert_eq!(e.norm() > 0.5, inside);
        }
    }

    #[test]
    fn spot_must_fit() {
        let g = grid();
        assert!(SpeckleSpec::new(0.0, Profile::HardDisk).validate_for(&g).is_err());
        assert!(SpeckleSpec::new(600e-6, Profile::HardDisk).validate_for(&g).is_err());
        assert!(SpeckleSpec::new(500e-6, Profile::HardDisk).validate_for(&g).is_ok());
    }

    #[test]
    fn phases_look_uniform() {
        let g = Grid::new_1d(4096, 1e-6).unwrap();
        let s = SpeckleSpec::new(2000e-6, Profile::HardDisk);
        let f = generate_speckle(&g, &s, RealizationSeed::new(11, 0)).unwrap();
        let inside: Vec<_> = f.samples().iter().filter(|e| e.norm() > 0.0).collect();
        let mean: Complex64 = inside.iter().copied().sum::<Complex64>() / inside.len() as f64;
        // |mean phasor| ~ 1/sqrt(N)
        assert!(mean.norm() < 5.0 / (inside.len() as f64).sqrt());
    }

    #[test]
    fn flat_ensemble_is_degenerate() {
        let g = Grid::new_1d(64, 1e-6).unwrap();
        let frames = vec![vec![1.0; 64]; 100];
        assert!(matches!(
            autocorrelation_fwhm(&g, &frames),
            Err(Error::DegenerateInput(_))
        ));
        let few = vec![vec![1.0; 64]; 10];
        assert!(matches!(
            autocorrelation_fwhm(&g, &few),
            Err(Error::InsufficientStatistics(_))
        ));
    }

    #[test]
    fn fwhm_of_known_covariance() {
        // frames are a random amplitude times a fixed triangle of half width
        // 5 samples moved to random offsets: covariance has FWHM ≈ 5 samples
        use rand::Rng;
        let g = Grid::new_1d(256, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let mut f = vec![0.0; 256];
                for _ in 0..20 {
                    let c = rng.gen_range(10..246) as i64;
                    let a: f64 = rng.gen();
                    for d in -5i64..=5 {
                        f[(c + d) as usize] += a * (1.0 - d.abs() as f64 / 5.0);
                    }
                }
                f
            })
            .collect();
        let w = autocorrelation_fwhm(&g, &frames).unwrap();
        // expected: FWHM of the triangle's own discrete autocorrelation
        let tri: Vec<f64> = (-5i64..=5).map(|d| 1.0 - d.abs() as f64 / 5.0).collect();
        let ac: Vec<f64> = (0..11)
            .map(|lag| (0..11 - lag).map(|i| tri[i] * tri[i + lag]).sum::<f64>())
            .collect();
        let lag = ac.iter().position(|&c| c < 0.5 * ac[0]).unwrap();
        let frac = (ac[lag - 1] - 0.5 * ac[0]) / (ac[lag - 1] - ac[lag]);
        let expect = 2.0 * (lag as f64 - 1.0 + frac);
        assert!((w - expect).abs() < 0.05 * expect, "fwhm {w} vs {expect}");
    }
}

//! Scalar free-space propagation, thin-lens Fourier transform, and a
//! brute-force Fresnel integral.
//!
//! Shared transform convention: forward kernel `exp(-i 2π ν x)`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_bin, transpose, SquareFft};
use crate::grid::{ComplexField, Grid};

/// Largest `n_in * n_out` accepted by [`direct_integral_oracle`].
pub const DIRECT_INTEGRAL_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AngularSpectrum,
    FresnelSingleStep,
    DirectIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationPlan {
    pub method: Method,
    pub distance: f64,
    pub wavelength: f64,
    pub pad_factor: usize,
}

impl PropagationPlan {
    pub fn new(method: Method, distance: f64, wavelength: f64, pad_factor: usize) -> Result<Self> {
        let p = PropagationPlan {
            method,
            distance,
            wavelength,
            pad_factor,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        let ok = match self.method {
            Method::AngularSpectrum => self.distance >= 0.0,
            _ => self.distance > 0.0,
        };
        if !ok || !self.distance.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "propagation distance {} not allowed for {:?}",
                self.distance, self.method
            )));
        }
        if self.pad_factor < 1 {
            return Err(Error::Configuration("pad_factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Rejects `pad_factor < 2` for fields whose nonzero extent exceeds half
    /// the grid span.
    pub fn check_wraparound(&self, field: &ComplexField) -> Result<()> {
        if self.method != Method::AngularSpectrum || self.pad_factor >= 2 {
            return Ok(());
        }
        let extent = nonzero_extent(field);
        if extent > field.grid().span() / 2.0 {
            return Err(Error::Configuration(format!(
                "field extent {extent} m exceeds half the grid span; pad_factor must be >= 2"
            )));
        }
        Ok(())
    }
}

/// Width of the smallest box holding all nonzero samples, per axis
/// maximum.
pub(crate) fn nonzero_extent(field: &ComplexField) -> f64 {
    let g = field.grid();
    let n = g.n();
    let mut lo = usize::MAX;
    let mut hi = 0;
    for (k, s) in field.samples().iter().enumerate() {
        if s.norm_sqr() > 0.0 {
            let idx = [k % n, k / n];
            for &i in &idx[..g.dims()] {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
    }
    if lo == usize::MAX {
        0.0
    } else {
        (hi - lo + 1) as f64 * g.pitch()
    }
}

/// Reusable band-limited angular-spectrum propagator for one grid and
/// distance. Cloning shares the transfer function and allocates a fresh
/// workspace.
pub struct AngularSpectrum {
    grid: Grid,
    distance: f64,
    wavelength: f64,
    pad_factor: usize,
    m: usize,
    transfer: Arc<Vec<Complex64>>,
    band_limit: f64,
    fft: SquareFft,
    buf: Vec<Complex64>,
}

impl Clone for AngularSpectrum {
    fn clone(&self) -> Self {
        AngularSpectrum {
            grid: self.grid,
            distance: self.distance,
            wavelength: self.wavelength,
            pad_factor: self.pad_factor,
            m: self.m,
            transfer: Arc::clone(&self.transfer),
            band_limit: self.band_limit,
            fft: self.fft.clone(),
            buf: vec![Complex64::default(); self.buf.len()],
        }
    }
}

impl AngularSpectrum {
    /// Negative distances propagate backwards (conjugate transfer function).
    pub fn new(grid: Grid, distance: f64, wavelength: f64, pad_factor: usize) -> Result<Self> {
        PropagationPlan::new(Method::AngularSpectrum, distance.abs(), wavelength, pad_factor)?;
        let m = grid.n() * pad_factor;
        let dims = grid.dims();
        let du = 1.0 / (m as f64 * grid.pitch());
        let z = distance.abs();
        let band_limit = 1.0 / (wavelength * ((2.0 * du * z).powi(2) + 1.0).sqrt());

        let axis_f: Vec<f64> = (0..m).map(|k| signed_bin(k, m) * du).collect();
        let zl = z / wavelength;
        let carrier = zl.fract();
        let h = |fx: f64, fy: f64| -> Complex64 {
            if fx.abs() > band_limit || fy.abs() > band_limit {
                return Complex64::default();
            }
            let s = wavelength * wavelength * (fx * fx + fy * fy);
            if s >= 1.0 {
                return Complex64::default();
            }
            // z/λ · (sqrt(1 - s) - 1) without cancellation
            let q = zl * s / (1.0 + (1.0 - s).sqrt());
            let cycles = (carrier - q).rem_euclid(1.0);
            let (sn, c) = (TAU * cycles).sin_cos();
            if distance < 0.0 {
                Complex64::new(c, -sn)
            } else {
                Complex64::new(c, sn)
            }
        };
        let transfer: Vec<Complex64> = match dims {
            1 => axis_f.iter().map(|&f| h(f, 0.0)).collect(),
            _ => {
                let mut t = Vec::with_capacity(m * m);
                for &fy in &axis_f {
                    for &fx in &axis_f {
                        t.push(h(fx, fy));
                    }
                }
                t
            }
        };
        Ok(AngularSpectrum {
            grid,
            distance,
            wavelength,
            pad_factor,
            m,
            transfer: Arc::new(transfer),
            band_limit,
            fft: SquareFft::new(dims, m),
            buf: vec![Complex64::default(); m.pow(dims as u32)],
        })
    }

    /// Propagator for `-distance` sharing this one's grid (conjugate transfer).
    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        r.distance = -self.distance;
        r.transfer = Arc::new(self.transfer.iter().map(|h| h.conj()).collect());
        r
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn pad_factor(&self) -> usize {
        self.pad_factor
    }

    /// Per-axis band limit (cycles/m) applied to the transfer function.
    pub fn band_limit(&self) -> f64 {
        self.band_limit
    }

    /// Fraction of the input field's energy removed by the band limit and
    /// the evanescent cutoff.
    pub fn discarded_energy_fraction(&mut self, input: &[Complex64]) -> f64 {
        self.load(input);
        self.fft.forward_transposed(&mut self.buf);
        let total: f64 = self.buf.iter().map(|v| v.norm_sqr()).sum();
        let lost: f64 = self
            .buf
            .iter()
            .zip(self.transfer.iter())
            .filter(|(_, h)| h.norm_sqr() == 0.0)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        if total > 0.0 {
            lost / total
        } else {
            0.0
        }
    }

    fn load(&mut self, input: &[Complex64]) {
        let n = self.grid.n();
        let m = self.m;
        let off = (m - n) / 2;
        if self.pad_factor == 1 {
            self.buf.copy_from_slice(input);
            return;
        }
        self.buf.fill(Complex64::default());
        match self.grid.dims() {
            1 => self.buf[off..off + n].copy_from_slice(input),
            _ => {
                for (iy, row) in input.chunks(n).enumerate() {
                    let start = (iy + off) * m + off;
                    self.buf[start..start + n].copy_from_slice(row);
                }
            }
        }
    }

    fn store(&self, output: &mut [Complex64]) {
        let n = self.grid.n();
        let m = self.m;
        let off = (m - n) / 2;
        match self.grid.dims() {
            1 => output.copy_from_slice(&self.buf[off..off + n]),
            _ => {
                for (iy, row) in output.chunks_mut(n).enumerate() {
                    let start = (iy + off) * m + off;
                    row.copy_from_slice(&self.buf[start..start + n]);
                }
            }
        }
    }

    /// Propagates `input` into `output`; both hold `grid.len()` samples.
    pub fn propagate_into(&mut self, input: &[Complex64], output: &mut [Complex64]) {
        debug_assert_eq!(input.len(), self.grid.len());
        debug_assert_eq!(output.len(), self.grid.len());
        self.load(input);
        self.fft.forward_transposed(&mut self.buf);
        // H is symmetric in (fx, fy), so the transposed spectrum order is fine
        for (v, h) in self.buf.iter_mut().zip(self.transfer.iter()) {
            *v *= h;
        }
        self.fft.inverse_from_transposed(&mut self.buf);
        self.store(output);
    }

    pub fn propagate_in_place(&mut self, field: &mut [Complex64]) {
        self.load(field);
        self.fft.forward_transposed(&mut self.buf);
        for (v, h) in self.buf.iter_mut().zip(self.transfer.iter()) {
            *v *= h;
        }
        self.fft.inverse_from_transposed(&mut self.buf);
        self.store(field);
    }

    /// Propagates one input by two distances sharing a single forward
    /// transform: `self` writes `out_self`, `other` writes `out_other`.
    /// Both propagators must use the same grid and padding.
    pub fn propagate_split(
        &mut self,
        other: &mut AngularSpectrum,
        input: &[Complex64],
        out_self: &mut [Complex64],
        out_other: &mut [Complex64],
    ) {
        assert!(self.grid == other.grid && self.m == other.m, "split propagation needs matching grids");
        self.load(input);
        self.fft.forward_transposed(&mut self.buf);
        for ((o, v), h) in other.buf.iter_mut().zip(&self.buf).zip(other.transfer.iter()) {
            *o = v * h;
        }
        for (v, h) in self.buf.iter_mut().zip(self.transfer.iter()) {
            *v *= h;
        }
        self.fft.inverse_from_transposed(&mut self.buf);
        self.store(out_self);
        other.fft.inverse_from_transposed(&mut other.buf);
        other.store(out_other);
    }

    pub fn propagate(&mut self, field: &ComplexField) -> Result<ComplexField> {
        field.grid().ensure_compatible(&self.grid, "angular spectrum input")?;
        let mut out = vec![Complex64::default(); self.grid.len()];
        self.propagate_into(field.samples(), &mut out);
        ComplexField::new(self.grid, out)
    }
}

/// One-shot angular-spectrum propagation on the input grid. Logs a warning
/// when the band limit removes more than 1e-6 of the field energy.
pub fn angular_spectrum(field: &ComplexField, z: f64, wavelength: f64, pad_factor: usize) -> Result<ComplexField> {
    let plan = PropagationPlan::new(Method::AngularSpectrum, z.abs(), wavelength, pad_factor)?;
    plan.check_wraparound(field)?;
    let mut asm = AngularSpectrum::new(*field.grid(), z, wavelength, pad_factor)?;
    let lost = asm.discarded_energy_fraction(field.samples());
    if lost > 1e-6 {
        log::warn!(
            "angular spectrum at z = {z} m: band limit {:.4e} cycles/m discards {lost:.3e} of the field energy",
            asm.band_limit()
        );
    }
    asm.propagate(field)
}

/// `1 / sqrt(i λ z)` in 1D, `1 / (i λ z)` in 2D.
fn fresnel_prefactor(dims: usize, wavelength: f64, z: f64) -> Complex64 {
    let s = 1.0 / (wavelength * z);
    match dims {
        1 => Complex64::from_polar(s.sqrt(), -PI / 4.0),
        _ => Complex64::new(0.0, -s),
    }
}

/// `exp(i 2π c)` for a phase given in cycles, reduced first.
fn cis_cycles(c: f64) -> Complex64 {
    let (s, co) = (TAU * c.rem_euclid(1.0)).sin_cos();
    Complex64::new(co, s)
}

/// Centered DFT along each row: `Y_j = Σ_i a_i exp(-i2π (i-c)(j-c)/n)`,
/// `c = n/2`, applied to every row of `buf`.
fn centered_dft_rows(buf: &mut [Complex64], n: usize) {
    let c = (n / 2) as f64;
    let pre: Vec<Complex64> = (0..n).map(|i| cis_cycles(c * i as f64 / n as f64)).collect();
    let post: Vec<Complex64> = (0..n)
        .map(|j| cis_cycles((c * j as f64 - c * c) / n as f64))
        .collect();
    let mut one = SquareFft::new(1, n);
    for row in buf.chunks_mut(n) {
        for (v, p) in row.iter_mut().zip(&pre) {
            *v *= p;
        }
        one.forward(row);
        for (v, p) in row.iter_mut().zip(&post) {
            *v *= p;
        }
    }
}

/// Single-transform Fresnel propagation. The output grid has pitch
/// `λ z / (n · pitch)`.
pub fn fresnel_single_step(field: &ComplexField, z: f64, wavelength: f64) -> Result<ComplexField> {
    PropagationPlan::new(Method::FresnelSingleStep, z, wavelength, 1)?;
    let g = *field.grid();
    let n = g.n();
    let p = g.pitch();
    let out_pitch = wavelength * z / (n as f64 * p);
    let out_grid = g.with_pitch(out_pitch)?;
    let max_x = g.max_abs_coordinate();
    // Fresnel validity advisory: z³ ≫ π/(4λ) · max(r⁴)
    let r4 = (max_x * max_x * g.dims() as f64).powi(2);
    let ratio = PI * r4 / (4.0 * wavelength * z.powi(3));
    if ratio > 1.0 {
        log::warn!("fresnel single step at z = {z} m: paraxial advisory ratio {ratio:.3e} > 1");
    }
    let lz = wavelength * z;
    let mut buf: Vec<Complex64> = field.samples().to_vec();
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= cis_cycles(g.radius_sq(k) / (2.0 * lz));
    }
    centered_dft_rows(&mut buf, n);
    if g.dims() == 2 {
        let mut t = vec![Complex64::default(); n * n];
        transpose(&buf, &mut t, n);
        centered_dft_rows(&mut t, n);
        transpose(&t, &mut buf, n);
    }
    let pref = fresnel_prefactor(g.dims(), wavelength, z)
        * cis_cycles((z / wavelength).fract())
        * g.cell_measure();
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= pref * cis_cycles(out_grid.radius_sq(k) / (2.0 * lz));
    }
    ComplexField::new(out_grid, buf)
}

/// Scaled centered DFT `Y_j = Σ_i a_i exp(-i2π α (i-c)(j-c))` by chirp-z.
pub(crate) struct ChirpZ {
    n: usize,
    chirp: Vec<Complex64>,
    kernel: Vec<Complex64>,
    fft: SquareFft,
    buf: Vec<Complex64>,
}

impl ChirpZ {
    pub(crate) fn new(n: usize, alpha: f64) -> Self {
        let c = (n / 2) as i64;
        // exp(-iπ α k²) with α k² reduced mod 2
        let w = |k: i64| -> Complex64 {
            let k2 = (k * k) as f64;
            let cyc = (alpha * k2 / 2.0).rem_euclid(1.0);
            let (s, co) = (TAU * cyc).sin_cos();
            Complex64::new(co, -s)
        };
        let chirp: Vec<Complex64> = (0..n as i64).map(|i| w(i - c)).collect();
        let l = (2 * n).next_power_of_two();
        let mut kernel = vec![Complex64::default(); l];
        for m in 0..n {
            let h = w(m as i64).conj();
            kernel[m] = h;
            if m > 0 {
                kernel[l - m] = h;
            }
        }
        let mut fft = SquareFft::new(1, l);
        fft.forward(&mut kernel);
        ChirpZ {
            n,
            chirp,
            kernel,
            fft,
            buf: vec![Complex64::default(); l],
        }
    }

    pub(crate) fn apply(&mut self, row: &mut [Complex64]) {
        debug_assert_eq!(row.len(), self.n);
        self.buf.fill(Complex64::default());
        for i in 0..self.n {
            self.buf[i] = row[i] * self.chirp[i];
        }
        self.fft.forward(&mut self.buf);
        for (b, k) in self.buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.fft.inverse(&mut self.buf);
        for j in 0..self.n {
            row[j] = self.buf[j] * self.chirp[j];
        }
    }
}

/// Fourier transform by a thin lens of focal length `f` between front and
/// back focal planes, on the input grid:
/// `E_out(x) = exp(i2kf) / sqrt(iλf) · Σ E(u) exp(-i2π x u / (λf)) · pitch`
/// (with `1/(iλf)` and `pitch²` in 2D).
///
/// Evaluated in chirp-factored form (chirp, chirp convolution, chirp), which
/// is the exact scaled DFT. See [`lens_2f_propagated`] for the explicit
/// free-space / lens / free-space chain.
pub fn lens_2f(field: &ComplexField, f: f64, wavelength: f64) -> Result<ComplexField> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::InvalidGeometry(format!("focal length must be > 0, got {f}")));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidGeometry(format!("wavelength must be > 0, got {wavelength}")));
    }
    let g = *field.grid();
    let n = g.n();
    let alpha = g.pitch() * g.pitch() / (wavelength * f);
    let mut cz = ChirpZ::new(n, alpha);
    let mut buf = field.samples().to_vec();
    for row in buf.chunks_mut(n) {
        cz.apply(row);
    }
    if g.dims() == 2 {
        let mut t = vec![Complex64::default(); n * n];
        transpose(&buf, &mut t, n);
        for row in t.chunks_mut(n) {
            cz.apply(row);
        }
        transpose(&t, &mut buf, n);
    }
    let pref = cis_cycles((2.0 * f / wavelength).fract())
        * fresnel_prefactor(g.dims(), wavelength, f)
        * g.cell_measure();
    for v in &mut buf {
        *v *= pref;
    }
    ComplexField::new(g, buf)
}

/// Free space `f` → thin lens `exp(-iπ r²/(λf))` → free space `f`, all by
/// angular spectrum on the input grid.
pub fn lens_2f_propagated(field: &ComplexField, f: f64, wavelength: f64, pad_factor: usize) -> Result<ComplexField> {
    if !(f > 0.0) {
        return Err(Error::InvalidGeometry(format!("focal length must be > 0, got {f}")));
    }
    let g = *field.grid();
    let mut asm = AngularSpectrum::new(g, f, wavelength, pad_factor)?;
    let mut buf = field.samples().to_vec();
    asm.propagate_in_place(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= cis_cycles(-g.radius_sq(k) / (2.0 * wavelength * f));
    }
    asm.propagate_in_place(&mut buf);
    ComplexField::new(g, buf)
}

/// Direct quadrature of the Fresnel integral
/// `E_out(v) = exp(ikz)/sqrt(iλz) · Σ E(u) exp(iπ(v-u)²/(λz)) · pitch`
/// onto `out_grid` (separable sums in 2D). No transforms are used.
pub fn direct_integral_oracle(field: &ComplexField, z: f64, wavelength: f64, out_grid: &Grid) -> Result<ComplexField> {
    PropagationPlan::new(Method::DirectIntegral, z, wavelength, 1)?;
    let g = *field.grid();
    if out_grid.dims() != g.dims() {
        return Err(Error::GeometryMismatch("oracle output grid dims differ from input".into()));
    }
    let work = g.len().saturating_mul(out_grid.len());
    if work > DIRECT_INTEGRAL_LIMIT {
        return Err(Error::SizeGuard(format!(
            "direct integral needs n_in·n_out = {work} > {DIRECT_INTEGRAL_LIMIT}; subsample the input or output grid"
        )));
    }
    let lz = wavelength * z;
    let (n, m) = (g.n(), out_grid.n());
    // kernel[j][i] = exp(iπ(v_j - u_i)²/(λz))
    let kernel: Vec<Complex64> = (0..m)
        .flat_map(|j| {
            let v = out_grid.coordinate(j);
            (0..n).map(move |i| {
                let d = v - g.coordinate(i);
                cis_cycles(d * d / (2.0 * lz))
            })
        })
        .collect();
    let pref = cis_cycles((z / wavelength).fract())
        * fresnel_prefactor(g.dims(), wavelength, z)
        * g.cell_measure();
    let e = field.samples();
    let out: Vec<Complex64> = match g.dims() {
        1 => (0..m)
            .map(|j| pref * kernel[j * n..(j + 1) * n].iter().zip(e).map(|(k, v)| k * v).sum::<Complex64>())
            .collect(),
        _ => {
            // rows: A[y][vx] = Σ_x E[y][x] K[vx][x]
            let mut a = vec![Complex64::default(); n * m];
            for y in 0..n {
                let row = &e[y * n..(y + 1) * n];
                for vx in 0..m {
                    a[y * m + vx] = kernel[vx * n..(vx + 1) * n].iter().zip(row).map(|(k, v)| k * v).sum();
                }
            }
            let mut out = vec![Complex64::default(); m * m];
            for vy in 0..m {
                let krow = &kernel[vy * n..(vy + 1) * n];
                for vx in 0..m {
                    let s: Complex64 = (0..n).map(|y| krow[y] * a[y * m + vx]).sum();
                    out[vy * m + vx] = pref * s;
                }
            }
            out
        }
    };
    ComplexField::new(*out_grid, out)
}

//! Reference diffraction patterns and pattern comparison.
//!
//! Everything here is evaluated by direct summation or closed form. Nothing
//! calls the FFT stack used by the propagators, so a transform bug cannot
//! leak into the reference. The only transform in this module is the
//! fringe-period estimate in [`compare`], which analyses the pattern under
//! test and not the reference.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::fft::SquareFft;
use crate::grid::{interpolate_uniform, AxisKind, Pattern};
use crate::objects::Transmission;

/// Upper bound on complex multiply-adds for one quadrature evaluation.
pub const QUADRATURE_LIMIT: f64 = 2e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Quadrature,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Quadrature => "quadrature",
        }
    }
}

/// Peak-normalized, non-negative reference pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePattern {
    pub pattern: Pattern,
    pub provenance: Provenance,
}

fn check_geometry(wavelength: f64, d2: f64) -> Result<f64> {
    if !(wavelength > 0.0 && wavelength.is_finite()) || !(d2 > 0.0 && d2.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "oracle needs λ > 0 and d2 > 0, got λ = {wavelength}, d2 = {d2}"
        )));
    }
    Ok(wavelength * d2)
}

fn check_axis(axis: &[f64]) -> Result<()> {
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::Configuration("oracle output axis must be finite".into()));
    }
    Ok(())
}

/// Spectrum `T̃(ν) = Σ t(x) e^{-i2πνx} · pitch` by direct summation.
///
/// In 2D the output is `T̃(ν_y, ν_x)` row-major on the grid `nu × nu`,
/// computed as two passes of direct sums (over x, then over y). Zero rows and
/// columns of the object are skipped.
pub fn fraunhofer_transform(obj: &Transmission, nu: &[f64]) -> Result<Vec<Complex64>> {
    check_axis(nu)?;
    let g = *obj.grid();
    let n = g.n();
    let p = g.pitch();
    let t = obj.samples();
    let m = nu.len();
    let zero = Complex64::default();
    match g.dims() {
        1 => {
            let nz: Vec<(f64, Complex64)> = (0..n)
                .filter(|&i| t[i] != zero)
                .map(|i| (g.coordinate(i), t[i]))
                .collect();
            guard(nz.len() as f64 * m as f64)?;
            let mut out = vec![zero; m];
            map_indexed(&mut out, |k| {
                let w = -2.0 * PI * nu[k];
                let mut acc = zero;
                for &(x, v) in &nz {
                    let (s, c) = (w * x).sin_cos();
                    acc += v * Complex64::new(c, s);
                }
                acc * p
            });
            Ok(out)
        }
        _ => {
            let rows: Vec<usize> = (0..n).filter(|&iy| t[iy * n..(iy + 1) * n].iter().any(|v| *v != zero)).collect();
            let cols: Vec<usize> = (0..n).filter(|&ix| (0..n).any(|iy| t[iy * n + ix] != zero)).collect();
            let (r, c, mf) = (rows.len() as f64, cols.len() as f64, m as f64);
            guard(r * c * mf + r * mf * mf)?;
            let kernel = |coords: &[usize]| -> Vec<Complex64> {
                let mut e = vec![zero; m * coords.len()];
                map_indexed(&mut e, |idx| {
                    let (k, j) = (idx / coords.len(), idx % coords.len());
                    let (s, c) = (-2.0 * PI * nu[k] * g.coordinate(coords[j])).sin_cos();
                    Complex64::new(c, s)
                });
                e
            };
            let ex = kernel(&cols);
            let ey = kernel(&rows);
            // first pass: a[row j][νx k] = Σ_x t e^{-i2πνx x}
            let mut a = vec![zero; rows.len() * m];
            map_indexed(&mut a, |idx| {
                let (j, k) = (idx / m, idx % m);
                let row = &t[rows[j] * n..(rows[j] + 1) * n];
                let e = &ex[k * cols.len()..(k + 1) * cols.len()];
                let mut acc = zero;
                for (q, &ix) in cols.iter().enumerate() {
                    acc += row[ix] * e[q];
                }
                acc
            });
            let mut out = vec![zero; m * m];
            let p2 = p * p;
            map_indexed(&mut out, |idx| {
                let (ky, kx) = (idx / m, idx % m);
                let e = &ey[ky * rows.len()..(ky + 1) * rows.len()];
                let mut acc = zero;
                for (j, w) in e.iter().enumerate() {
                    acc += a[j * m + kx] * w;
                }
                acc * p2
            });
            Ok(out)
        }
    }
}

fn guard(work: f64) -> Result<()> {
    if work > QUADRATURE_LIMIT {
        return Err(Error::SizeGuard(format!(
            "Fraunhofer quadrature needs {work:.3e} multiply-adds > {QUADRATURE_LIMIT:.0e}; reduce the output axis"
        )));
    }
    Ok(())
}

fn normalized(values: Vec<f64>, axis: Vec<f64>, dims: usize, provenance: Provenance) -> Result<OraclePattern> {
    let mut pattern = Pattern::new(axis, values, AxisKind::Frequency, dims)?;
    pattern.normalize_peak();
    Ok(OraclePattern { pattern, provenance })
}

/// `|T̃(ν)|²` at `ν = Δ/(λ d2)` for detector displacements `out_axis`,
/// peak-normalized, on the frequency axis.
pub fn fraunhofer_modulus(
    obj: &Transmission,
    wavelength: f64,
    d2: f64,
    out_axis: &[f64],
) -> Result<OraclePattern> {
    let scale = check_geometry(wavelength, d2)?;
    check_axis(out_axis)?;
    let nu: Vec<f64> = out_axis.iter().map(|d| d / scale).collect();
    fraunhofer_modulus_at(obj, &nu)
}

/// [`fraunhofer_modulus`] evaluated directly on a frequency axis.
pub fn fraunhofer_modulus_at(obj: &Transmission, nu: &[f64]) -> Result<OraclePattern> {
    let spec = fraunhofer_transform(obj, nu)?;
    let values = spec.iter().map(|v| v.norm_sqr()).collect();
    normalized(values, nu.to_vec(), obj.grid().dims(), Provenance::Quadrature)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `sinc²(π a ν) · cos²(π s ν)`, equal to one at `ν = 0`.
pub fn analytic_double_slit(width: f64, separation: f64, nu: f64) -> f64 {
    sinc(PI * width * nu).powi(2) * (PI * separation * nu).cos().powi(2)
}

/// Closed-form double-slit pattern on a frequency axis.
pub fn analytic_double_slit_pattern(width: f64, separation: f64, nu: &[f64]) -> Result<OraclePattern> {
    if !(width > 0.0) || !(separation > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "double slit needs width, separation > 0, got {width}, {separation}"
        )));
    }
    check_axis(nu)?;
    let values = nu.iter().map(|&v| analytic_double_slit(width, separation, v)).collect();
    normalized(values, nu.to_vec(), 1, Provenance::Analytic)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Number of strongest local maxima whose positions are compared.
    pub peaks: usize,
    /// Restrict to `|axis| <= window` (in the pattern's axis units).
    pub window: Option<f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { peaks: 5, window: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareMetrics {
    /// RMS difference as a fraction of the reference peak, both sides
    /// normalized to their maximum inside the compared region.
    pub rms: f64,
    /// Position of each of the strongest pattern maxima minus the nearest
    /// reference maximum, in pattern samples. Sorted by pattern peak height.
    pub peak_offsets: Vec<f64>,
    /// Dominant non-DC fringe period along x, in axis units.
    pub fringe_period: Option<f64>,
    /// Same along y for 2D patterns.
    pub fringe_period_y: Option<f64>,
    /// Number of pattern samples in the compared region.
    pub samples: usize,
}

/// Compare `pattern` against `reference` resampled onto the pattern axis by
/// (bi)linear interpolation.
pub fn compare(pattern: &Pattern, reference: &Pattern, opts: &CompareOptions) -> Result<CompareMetrics> {
    if pattern.dims() != reference.dims() {
        return Err(Error::GeometryMismatch(format!(
            "cannot compare a {}D pattern with a {}D reference",
            pattern.dims(),
            reference.dims()
        )));
    }
    if pattern.kind() != reference.kind() {
        return Err(Error::GeometryMismatch(format!(
            "axis kinds differ: {} vs {}",
            pattern.kind().name(),
            reference.kind().name()
        )));
    }
    let ra = reference.axis();
    let (lo, hi) = (ra[0], ra[ra.len() - 1]);
    let w = opts.window.unwrap_or(f64::INFINITY);
    let keep: Vec<usize> = pattern
        .axis()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x >= lo && x <= hi && x.abs() <= w)
        .map(|(i, _)| i)
        .collect();
    if keep.len() < 2 {
        return Err(Error::GeometryMismatch(format!(
            "pattern axis [{:.4e}, {:.4e}] and reference axis [{lo:.4e}, {hi:.4e}] do not overlap within the window",
            pattern.axis()[0],
            pattern.axis()[pattern.len() - 1]
        )));
    }
    let axis: Vec<f64> = keep.iter().map(|&i| pattern.axis()[i]).collect();
    let (p, r) = match pattern.dims() {
        1 => {
            let p: Vec<f64> = keep.iter().map(|&i| pattern.values()[i]).collect();
            let r: Vec<f64> = axis.iter().map(|&x| reference.interpolate(x).unwrap_or(0.0)).collect();
            (p, r)
        }
        _ => {
            let n = pattern.len();
            let mut p = Vec::with_capacity(keep.len() * keep.len());
            let mut r = Vec::with_capacity(keep.len() * keep.len());
            for &iy in &keep {
                for &ix in &keep {
                    p.push(pattern.values()[iy * n + ix]);
                    r.push(bilinear(reference, pattern.axis()[ix], pattern.axis()[iy]));
                }
            }
            (p, r)
        }
    };
    let pmax = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rmax = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(rmax > 0.0) || !(pmax > 0.0) {
        return Err(Error::DegenerateInput("pattern or reference has no positive value in the compared region".into()));
    }
    let se: f64 = p.iter().zip(&r).map(|(a, b)| (a / pmax - b / rmax).powi(2)).sum();
    let rms = (se / p.len() as f64).sqrt();

    let m = keep.len();
    let (px, rx, py) = match pattern.dims() {
        1 => (p.clone(), r.clone(), None),
        _ => {
            let c = m / 2;
            let row = |v: &[f64]| v[c * m..(c + 1) * m].to_vec();
            let col: Vec<f64> = (0..m).map(|iy| p[iy * m + c]).collect();
            (row(&p), row(&r), Some(col))
        }
    };
    let peak_offsets = peak_offsets(&px, &rx, opts.peaks);
    let da = (axis[m - 1] - axis[0]) / (m - 1) as f64;
    let fringe_period = fringe_period_samples(&px).map(|s| s * da);
    let fringe_period_y = py.and_then(|c| fringe_period_samples(&c)).map(|s| s * da);
    Ok(CompareMetrics {
        rms,
        peak_offsets,
        fringe_period,
        fringe_period_y,
        samples: p.len(),
    })
}

fn bilinear(reference: &Pattern, x: f64, y: f64) -> f64 {
    let a = reference.axis();
    let n = a.len();
    if y < a[0] || y > a[n - 1] {
        return 0.0;
    }
    let hi = a.partition_point(|&v| v < y).clamp(1, n - 1);
    let lo = hi - 1;
    let w = (y - a[lo]) / (a[hi] - a[lo]);
    let v = reference.values();
    let at = |iy: usize| interpolate_uniform(a, &v[iy * n..(iy + 1) * n], x).unwrap_or(0.0);
    at(lo) * (1.0 - w) + at(hi) * w
}

/// Strict local maxima refined by a parabola through the three samples
/// around each, strongest first.
fn local_maxima(v: &[f64]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
        .map(|i| (i as f64 + parabolic(v[i - 1], v[i], v[i + 1]), v[i]))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

fn parabolic(a: f64, b: f64, c: f64) -> f64 {
    let d = a - 2.0 * b + c;
    if d.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        (0.5 * (a - c) / d).clamp(-0.5, 0.5)
    }
}

fn peak_offsets(p: &[f64], r: &[f64], k: usize) -> Vec<f64> {
    let rp = local_maxima(r);
    if rp.is_empty() {
        return Vec::new();
    }
    local_maxima(p)
        .into_iter()
        .take(k)
        .map(|(x, _)| {
            let nearest = rp
                .iter()
                .map(|(y, _)| *y)
                .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
                .unwrap_or(x);
            x - nearest
        })
        .collect()
}

/// Dominant non-DC period of a uniformly sampled signal, in samples.
///
/// The signal is Hann-windowed and zero-padded ×8; the DC lobe is skipped up
/// to the first local minimum of the power spectrum, and the strongest
/// remaining bin is refined by a parabola.
pub fn fringe_period_samples(v: &[f64]) -> Option<f64> {
    let n = v.len();
    if n < 8 {
        return None;
    }
    let len = 8 * n;
    let mut buf = vec![Complex64::default(); len];
    for (i, &x) in v.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        buf[i] = Complex64::new(w * x, 0.0);
    }
    let mut fft = SquareFft::new(1, len);
    fft.forward(&mut buf);
    let pow: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm_sqr()).collect();
    let mut k = 1;
    while k + 1 < pow.len() && pow[k + 1] < pow[k] {
        k += 1;
    }
    let (best, _) = pow
        .iter()
        .enumerate()
        .skip(k.max(1))
        .take(pow.len().saturating_sub(k + 1))
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
    if best == 0 || best + 1 >= pow.len() {
        return None;
    }
    let f = best as f64 + parabolic(pow[best - 1], pow[best], pow[best + 1]);
    Some(len as f64 / f)
}

/// Dominant fringe period of a 1D pattern in its own axis units.
pub fn fringe_period(pattern: &Pattern, window: Option<f64>) -> Option<f64> {
    let w = window.unwrap_or(f64::INFINITY);
    let vals: Vec<f64> = pattern
        .axis()
        .iter()
        .zip(pattern.values())
        .filter(|(x, _)| x.abs() <= w)
        .map(|(_, v)| *v)
        .collect();
    fringe_period_samples(&vals).map(|s| s * pattern.spacing())
}

/// First zero of the `sinc²` envelope of a two-beam fringe pattern.
///
/// With the fringe period `period` held fixed, the envelope width `a` of
/// `sinc²(π a ν) cos²(π ν / period)` is fitted to the pattern by least
/// squares (coarse scan, then golden-section refinement); the returned
/// zero is `1/a` in axis units.
pub fn envelope_first_zero(pattern: &Pattern, period: f64, window: Option<f64>) -> Result<f64> {
    if !(period > 0.0) {
        return Err(Error::Configuration(format!("fringe period must be > 0, got {period}")));
    }
    let w = window.unwrap_or(f64::INFINITY);
    let pts: Vec<(f64, f64)> = pattern
        .axis()
        .iter()
        .zip(pattern.values())
        .filter(|(x, _)| x.abs() <= w)
        .map(|(x, v)| (*x, *v))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientStatistics("envelope fit needs at least 8 samples".into()));
    }
    let s = 1.0 / period;
    let cost = |a: f64| -> f64 {
        pts.iter()
            .map(|&(x, v)| (v - analytic_double_slit(a, s, x)).powi(2))
            .sum()
    };
    let steps = 400;
    let (lo, hi) = (0.02 * s, s);
    let mut best = (lo, f64::INFINITY);
    for i in 0..=steps {
        let a = lo + (hi - lo) * i as f64 / steps as f64;
        let c = cost(a);
        if c < best.1 {
            best = (a, c);
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(2.0 / (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::objects::{double_slit, identity, phase_grooves};
    use proptest::prelude::*;

    fn slit_grid() -> Grid {
        Grid::new_1d(8192, 1e-6).unwrap()
    }

    fn nu_axis(m: usize, step: f64) -> Vec<f64> {
        (0..m).map(|k| (k as f64 - (m / 2) as f64) * step).collect()
    }

    #[test]
    fn analytic_values() {
        assert_eq!(analytic_double_slit(105e-6, 302e-6, 0.0), 1.0);
        assert!(analytic_double_slit(105e-6, 302e-6, 1.0 / (2.0 * 302e-6)) < 1e-30);
    }

    #[test]
    fn double_slit_zeros() {
        let obj = double_slit(105e-6, 302e-6, &slit_grid()).unwrap();
        let s = 302e-6;
        let nu: Vec<f64> = (0..4).map(|m| (2 * m + 1) as f64 / (2.0 * s)).chain([0.0]).collect();
        let t = fraunhofer_transform(&obj, &nu).unwrap();
        let dc = t[4].norm_sqr();
        // sampled slits open 105 samples each centred on ±151 µm: zeros exact
        for v in &t[..4] {
            assert!(v.norm_sqr() / dc < 1e-20, "{}", v.norm_sqr() / dc);
        }
    }

    #[test]
    fn matches_analytic_on_default_grid() {
        let obj = double_slit(105e-6, 302e-6, &slit_grid()).unwrap();
        let nu = nu_axis(2001, 25.0);
        let q = fraunhofer_modulus_at(&obj, &nu).unwrap();
        let a = analytic_double_slit_pattern(105e-6, 302e-6, &nu).unwrap();
        let m = compare(&q.pattern, &a.pattern, &CompareOptions::default()).unwrap();
        assert!(m.rms < 0.002, "rms {}", m.rms);
        assert_eq!(q.provenance, Provenance::Quadrature);
    }

    #[test]
    fn identity_aperture_first_zero() {
        let g = Grid::new_1d(1000, 1e-6).unwrap();
        let obj = identity(&g);
        let width = g.span();
        let nu = [0.0, 1.0 / width, 0.5 / width];
        let t = fraunhofer_transform(&obj, &nu).unwrap();
        assert!(t[1].norm_sqr() / t[0].norm_sqr() < 1e-20);
        assert!(t[2].norm_sqr() / t[0].norm_sqr() > 0.1);
    }

    #[test]
    fn phase_grooves_suppress_dc() {
        let g = slit_grid();
        let lambda = 0.532e-6;
        let depth = lambda / (2.0 * 0.46);
        let phase = phase_grooves(225e-6, 375e-6, depth, 1.46, lambda, 0.9e-3, &g).unwrap();
        let amp: Vec<Complex64> = phase
            .samples()
            .iter()
            .map(|v| if (v.re - 1.0).abs() < 1e-9 { *v } else { Complex64::default() })
            .collect();
        let amp = Transmission::new(g, amp, "opaque grooves").unwrap();
        let dp = fraunhofer_transform(&phase, &[0.0]).unwrap()[0];
        let da = fraunhofer_transform(&amp, &[0.0]).unwrap()[0];
        assert!(dp.norm_sqr() < da.norm_sqr());
        // aperture - 2·grooves vs aperture - grooves
        assert!(dp.norm() < 0.05 * da.norm());
        assert!((da.re - 450e-6).abs() < 3e-6);
    }

    #[test]
    fn two_dimensional_separable_object() {
        let g = Grid::new_2d(64, 1e-6).unwrap();
        let row = |x: f64| if x.abs() < 5e-6 { 1.0 } else { 0.0 };
        let samples: Vec<Complex64> = (0..g.len())
            .map(|k| {
                let (x, y) = (g.coordinate(k % 64), g.coordinate(k / 64));
                Complex64::new(row(x) * row(y - 3e-6), 0.0)
            })
            .collect();
        let obj = Transmission::new(g, samples.clone(), "box").unwrap();
        let nu = nu_axis(9, 2e4);
        let t = fraunhofer_transform(&obj, &nu).unwrap();
        for ky in 0..9 {
            for kx in 0..9 {
                let mut want = Complex64::default();
                for (k, v) in samples.iter().enumerate() {
                    let (x, y) = (g.coordinate(k % 64), g.coordinate(k / 64));
                    want += v * Complex64::from_polar(1e-12, -2.0 * PI * (nu[kx] * x + nu[ky] * y));
                }
                assert!((t[ky * 9 + kx] - want).norm() < 1e-12 * 100e-12);
            }
        }
    }

    #[test]
    fn compare_identical_and_shifted() {
        let nu = nu_axis(801, 25.0);
        let a = analytic_double_slit_pattern(105e-6, 302e-6, &nu).unwrap().pattern;
        let m = compare(&a, &a, &CompareOptions::default()).unwrap();
        assert_eq!(m.rms, 0.0);
        assert!(m.peak_offsets.iter().all(|o| *o == 0.0));
        let shifted_axis: Vec<f64> = nu.iter().map(|v| v + 25.0).collect();
        let b = Pattern::new(shifted_axis, a.values().to_vec(), AxisKind::Frequency, 1).unwrap();
        let m = compare(&b, &a, &CompareOptions { peaks: 3, window: Some(8000.0) }).unwrap();
        for o in &m.peak_offsets {
            assert!((o - 1.0).abs() < 1e-9, "{o}");
        }
        let period = m.fringe_period.unwrap();
        assert!((period * 302e-6 - 1.0).abs() < 0.02, "{period}");
    }

    #[test]
    fn compare_disjoint_axes() {
        let a = Pattern::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.2], AxisKind::Frequency, 1).unwrap();
        let b = Pattern::new(vec![5.0, 6.0, 7.0], vec![1.0, 0.5, 0.2], AxisKind::Frequency, 1).unwrap();
        assert!(matches!(
            compare(&a, &b, &CompareOptions::default()),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn envelope_zero_of_analytic_pattern() {
        let nu = nu_axis(2001, 25.0);
        let a = analytic_double_slit_pattern(105e-6, 302e-6, &nu).unwrap().pattern;
        let z = envelope_first_zero(&a, 1.0 / 302e-6, None).unwrap();
        assert!((z * 105e-6 - 1.0).abs() < 1e-6, "{z}");
    }

    #[test]
    fn parseval_on_conjugate_axis() {
        let g = Grid::new_1d(256, 2e-6).unwrap();
        let obj = double_slit(21e-6, 60e-6, &g).unwrap();
        let dnu = 1.0 / g.span();
        let nu: Vec<f64> = (0..256).map(|k| (k as f64 - 128.0) * dnu).collect();
        let t = fraunhofer_transform(&obj, &nu).unwrap();
        let lhs: f64 = t.iter().map(|v| v.norm_sqr()).sum::<f64>() * dnu;
        let rhs: f64 = obj.samples().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.pitch();
        assert!((lhs / rhs - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn even_for_real_objects(vals in proptest::collection::vec(-1.0f64..1.0, 64), step in 1e3f64..5e4) {
            let g = Grid::new_1d(64, 1e-6).unwrap();
            let obj = Transmission::new(g, vals.iter().map(|v| Complex64::new(*v, 0.0)).collect(), "rand").unwrap();
            let nu: Vec<f64> = (1..20).map(|k| k as f64 * step).collect();
            let neg: Vec<f64> = nu.iter().map(|v| -v).collect();
            let a = fraunhofer_transform(&obj, &nu).unwrap();
            let b = fraunhofer_transform(&obj, &neg).unwrap();
            let scale = a.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max).max(1e-300);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.norm_sqr() - y.norm_sqr()).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn parseval_random(vals in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let g = Grid::new_1d(32, 1e-6).unwrap();
            let obj = Transmission::new(g, vals.iter().map(|v| Complex64::new(*v, 0.0)).collect(), "rand").unwrap();
            let dnu = 1.0 / g.span();
            let nu: Vec<f64> = (0..32).map(|k| (k as f64 - 16.0) * dnu).collect();
            let t = fraunhofer_transform(&obj, &nu).unwrap();
            let lhs: f64 = t.iter().map(|v| v.norm_sqr()).sum::<f64>() * dnu;
            let rhs: f64 = vals.iter().map(|v| v * v).sum::<f64>() * g.pitch();
            prop_assume!(rhs > 1e-12);
            prop_assert!((lhs / rhs - 1.0).abs() < 1e-9);
        }
    }
}

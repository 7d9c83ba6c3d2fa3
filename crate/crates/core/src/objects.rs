//! Object transmission functions.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{read_array, write_array, ArrayData};

/// Complex amplitude transmission `t(x)` sampled on a grid, `|t| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    grid: Grid,
    samples: Vec<Complex64>,
    label: String,
}

impl Transmission {
    pub fn new(grid: Grid, samples: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GeometryMismatch(format!(
                "transmission has {} samples, grid expects {}",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|t| !(t.norm() <= 1.0 + 1e-12)) {
            return Err(Error::Configuration(format!(
                "transmission modulus must be <= 1, found {}",
                bad.norm()
            )));
        }
        Ok(Transmission {
            grid,
            samples,
            label: label.into(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_identity(&self) -> bool {
        self.samples.iter().all(|t| *t == Complex64::new(1.0, 0.0))
    }

    /// Averages the samples falling inside each cell of a coarser grid.
    ///
    /// The target pitch must be at least the source pitch and its span must
    /// fit inside the source span. Each fine sample is assigned to the target
    /// cell `[X - P/2, X + P/2)` containing its coordinate.
    pub fn area_average_onto(&self, target: &Grid) -> Result<Transmission> {
        if target.dims() != self.grid.dims() {
            return Err(Error::GeometryMismatch("area average needs equal dims".into()));
        }
        if target.pitch() < self.grid.pitch() * (1.0 - 1e-12) {
            return Err(Error::GeometryMismatch(
                "area average target pitch is finer than the source".into(),
            ));
        }
        if target.span() > self.grid.span() * (1.0 + 1e-12) {
            return Err(Error::GeometryMismatch(
                "area average target span exceeds the source span".into(),
            ));
        }
        let n = self.grid.n();
        let m = target.n();
        // fine index -> target index along one axis
        let map: Vec<Option<usize>> = (0..n)
            .map(|i| {
                let x = self.grid.coordinate(i);
                let j = (x / target.pitch() + 0.5 + 1e-9).floor() + (m / 2) as f64;
                (j >= 0.0 && j < m as f64).then_some(j as usize)
            })
            .collect();
        let mut sum = vec![Complex64::default(); target.len()];
        let mut cnt = vec![0usize; target.len()];
        match self.grid.dims() {
            1 => {
                for (i, t) in self.samples.iter().enumerate() {
                    if let Some(j) = map[i] {
                        sum[j] += t;
                        cnt[j] += 1;
                    }
                }
            }
            _ => {
                for iy in 0..n {
                    let Some(jy) = map[iy] else { continue };
                    for ix in 0..n {
                        if let Some(jx) = map[ix] {
                            sum[jy * m + jx] += self.samples[iy * n + ix];
                            cnt[jy * m + jx] += 1;
                        }
                    }
                }
            }
        }
        let samples = sum
            .iter()
            .zip(&cnt)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { Complex64::default() })
            .collect();
        Transmission::new(*target, samples, self.label.clone())
    }

    /// Loads a transmission stored as an `f64` array of shape `[2, n]` or
    /// `[2, n, n]`: amplitude plane followed by phase plane (radians).
    /// Pitch comes from `grid`. Moduli above one are clamped and reported.
    pub fn from_file(path: &Path, grid: &Grid) -> Result<(Transmission, Vec<String>)> {
        let arr = read_array(path)?;
        let mut expect = vec![2];
        expect.extend(std::iter::repeat(grid.n()).take(grid.dims()));
        if arr.shape() != expect.as_slice() {
            return Err(Error::Format(format!(
                "{}: transmission shape {:?} does not match grid, expected {:?}",
                path.display(),
                arr.shape(),
                expect
            )));
        }
        let data = arr.as_f64().ok_or_else(|| {
            Error::Format(format!("{}: transmission must be stored as f64", path.display()))
        })?;
        let (amp, phase) = data.split_at(grid.len());
        let mut warnings = Vec::new();
        let mut clamped = 0usize;
        let samples: Vec<Complex64> = amp
            .iter()
            .zip(phase)
            .map(|(&a, &p)| {
                let mut t = Complex64::from_polar(a, p);
                if t.norm() > 1.0 {
                    clamped += 1;
                    t /= t.norm();
                }
                t
            })
            .collect();
        if samples.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::Format(format!(
                "{}: transmission contains non-finite values",
                path.display()
            )));
        }
        if clamped > 0 {
            warnings.push(format!(
                "{}: clamped {clamped} samples with |t| > 1 to unit modulus",
                path.display()
            ));
        }
        let label = format!("file:{}", path.display());
        Ok((Transmission::new(*grid, samples, label)?, warnings))
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut data: Vec<f64> = self.samples.iter().map(|t| t.norm()).collect();
        data.extend(self.samples.iter().map(|t| t.arg()));
        let mut shape = vec![2];
        shape.extend(std::iter::repeat(self.grid.n()).take(self.grid.dims()));
        write_array(path, &ArrayData::real(shape, data)?)
    }
}

fn require_dims(grid: &Grid, dims: usize, what: &str) -> Result<()> {
    if grid.dims() != dims {
        return Err(Error::Configuration(format!(
            "{what} needs a {dims}D grid, got {}D",
            grid.dims()
        )));
    }
    Ok(())
}

fn check_pair(width: f64, separation: f64, allow_touching: bool, what: &str) -> Result<()> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidGeometry(format!("{what}: width must be > 0, got {width}")));
    }
    let ok = if allow_touching {
        separation >= width
    } else {
        separation > width
    };
    if !ok || !separation.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "{what}: separation {separation} must exceed width {width}"
        )));
    }
    Ok(())
}

fn check_fits(grid: &Grid, half_extent: f64, what: &str) -> Result<()> {
    if half_extent > grid.max_abs_coordinate() {
        return Err(Error::InvalidGeometry(format!(
            "{what} extends to ±{half_extent} m, beyond the grid half span {} m",
            grid.max_abs_coordinate()
        )));
    }
    Ok(())
}

fn in_pair(x: f64, width: f64, separation: f64) -> bool {
    (x - separation / 2.0).abs() < width / 2.0 || (x + separation / 2.0).abs() < width / 2.0
}

/// Two open slits of width `width`, centers `±separation/2`, in an opaque
/// screen. Separation is center to center.
pub fn double_slit(width: f64, separation: f64, grid: &Grid) -> Result<Transmission> {
    require_dims(grid, 1, "double slit")?;
    check_pair(width, separation, false, "double slit")?;
    check_fits(grid, (separation + width) / 2.0, "double slit")?;
    let samples = (0..grid.n())
        .map(|i| {
            if in_pair(grid.coordinate(i), width, separation) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
        .collect();
    Transmission::new(
        *grid,
        samples,
        format!("double_slit(width={width}, separation={separation})"),
    )
}

/// Groove phase step `2π (n - 1) depth / λ`.
pub fn groove_phase(depth: f64, refractive_index: f64, wavelength: f64) -> f64 {
    std::f64::consts::TAU * (refractive_index - 1.0) * depth / wavelength
}

/// Two phase grooves etched into a transparent plate of finite clear
/// aperture. Inside the aperture `|t| = 1`; the grooves add the phase
/// [`groove_phase`]; outside the aperture `t = 0`.
pub fn phase_grooves(
    width: f64,
    separation: f64,
    depth: f64,
    refractive_index: f64,
    wavelength: f64,
    aperture: f64,
    grid: &Grid,
) -> Result<Transmission> {
    require_dims(grid, 1, "phase grooves")?;
    check_pair(width, separation, false, "phase grooves")?;
    if !(depth >= 0.0 && depth.is_finite()) {
        return Err(Error::InvalidGeometry(format!("groove depth must be >= 0, got {depth}")));
    }
    if !(refractive_index > 1.0 && refractive_index.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "refractive index must exceed 1, got {refractive_index}"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidGeometry(format!("wavelength must be > 0, got {wavelength}")));
    }
    if !(aperture >= separation + width) {
        return Err(Error::InvalidGeometry(format!(
            "aperture {aperture} must contain both grooves (>= {})",
            separation + width
        )));
    }
    check_fits(grid, aperture / 2.0, "phase plate aperture")?;
    let step = Complex64::from_polar(1.0, groove_phase(depth, refractive_index, wavelength));
    let samples = (0..grid.n())
        .map(|i| {
            let x = grid.coordinate(i);
            if x.abs() >= aperture / 2.0 {
                Complex64::default()
            } else if in_pair(x, width, separation) {
                step
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();
    Transmission::new(
        *grid,
        samples,
        format!(
            "phase_grooves(width={width}, separation={separation}, depth={depth}, n={refractive_index}, aperture={aperture})"
        ),
    )
}

/// Horizontally and vertically oriented double slits overlaid in one opaque
/// screen. The horizontal pair runs along x at `y = ±sep_h/2`, the vertical
/// pair along y at `x = ±sep_v/2`; every slit is `length` long. Touching
/// slits (`separation == width`) are accepted.
pub fn crossed_double_slit(
    width: f64,
    sep_h: f64,
    sep_v: f64,
    length: f64,
    grid: &Grid,
) -> Result<Transmission> {
    require_dims(grid, 2, "crossed double slit")?;
    check_pair(width, sep_h, true, "crossed double slit (horizontal)")?;
    check_pair(width, sep_v, true, "crossed double slit (vertical)")?;
    if !(length >= width && length.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "slit length {length} must be at least the width {width}"
        )));
    }
    let reach = (length / 2.0)
        .max((sep_h + width) / 2.0)
        .max((sep_v + width) / 2.0);
    check_fits(grid, reach, "crossed double slit")?;
    let n = grid.n();
    let samples = (0..grid.len())
        .map(|k| {
            let (x, y) = (grid.coordinate(k % n), grid.coordinate(k / n));
            let horizontal = x.abs() < length / 2.0 && in_pair(y, width, sep_h);
            let vertical = y.abs() < length / 2.0 && in_pair(x, width, sep_v);
            if horizontal || vertical {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
        .collect();
    Transmission::new(
        *grid,
        samples,
        format!("crossed_double_slit(width={width}, sep_h={sep_h}, sep_v={sep_v}, length={length})"),
    )
}

/// `t ≡ 1`.
pub fn identity(grid: &Grid) -> Transmission {
    Transmission {
        grid: *grid,
        samples: vec![Complex64::new(1.0, 0.0); grid.len()],
        label: "identity".into(),
    }
}

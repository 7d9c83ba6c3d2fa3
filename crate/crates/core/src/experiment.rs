//! The two-arm pipeline.
//!
//! One source field `E0` feeds both arms (ideal beam splitter). The test arm
//! propagates `d1` to the object, multiplies by `t`, and propagates `d2`;
//! the reference arm propagates `d_ref` through free space.
//!
//! With padded propagation (`pad_factor >= 2`) and `d_ref >= d1` the
//! reference leg reuses the object-plane field and propagates the remaining
//! `d_ref - d1`. Light that leaves the grid at the object plane cannot return
//! to the detector windows, so this matches the direct path while making the
//! two arms share a propagator exactly when the Fourier condition holds.
//! Without padding the object-plane field fills the grid and would wrap, so
//! the reference leg propagates from the source, sharing its spectrum with
//! the source-to-object leg.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlator::{AccumulatorLayout, CorrelationAccumulator, Estimator, GhostResult};
use crate::error::{Error, Result};
use crate::exec::{run_blocks, Execution, BLOCK_SIZE};
use crate::grid::{frequency_axis, AxisKind, ComplexField, Grid, Pattern, SetupGeometry};
use crate::io::{read_records, write_records, ArrayData};
use crate::objects::Transmission;
use crate::propagate::{lens_2f, AngularSpectrum};
use crate::source::{AutocovarianceAccumulator, RealizationSeed, SpeckleSource, SpeckleSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ArmIntensities {
    pub i_test: Vec<f64>,
    pub i_ref: Vec<f64>,
    pub realization_index: u64,
}

enum ReferenceLeg {
    /// `d_ref - d1 == d2`: reuse the test-arm propagator.
    SharedWithTest,
    FromObjectPlane(AngularSpectrum),
    FromSource(AngularSpectrum),
}

impl Clone for ReferenceLeg {
    fn clone(&self) -> Self {
        match self {
            ReferenceLeg::SharedWithTest => ReferenceLeg::SharedWithTest,
            ReferenceLeg::FromObjectPlane(a) => ReferenceLeg::FromObjectPlane(a.clone()),
            ReferenceLeg::FromSource(a) => ReferenceLeg::FromSource(a.clone()),
        }
    }
}

/// Per-worker propagation workspace for one setup.
#[derive(Clone)]
pub struct Pipeline {
    geom: SetupGeometry,
    pad_factor: usize,
    source: Arc<SpeckleSource>,
    object: Arc<Vec<Complex64>>,
    object_is_identity: bool,
    to_object: AngularSpectrum,
    to_test: AngularSpectrum,
    reference: ReferenceLeg,
    bin: usize,
    e0: Vec<Complex64>,
    eo: Vec<Complex64>,
    et: Vec<Complex64>,
    er: Vec<Complex64>,
}

impl Pipeline {
    pub fn new(
        geom: &SetupGeometry,
        object: &Transmission,
        spec: &SpeckleSpec,
        pad_factor: usize,
        bin: usize,
    ) -> Result<Self> {
        geom.validate()?;
        let grid = *object.grid();
        if bin == 0 || grid.n() % bin != 0 {
            return Err(Error::Configuration(format!(
                "detector bin {bin} must be >= 1 and divide the grid size {}",
                grid.n()
            )));
        }
        let source = SpeckleSource::new(grid, *spec)?;
        let wl = geom.wavelength;
        let to_object = AngularSpectrum::new(grid, geom.d1, wl, pad_factor)?;
        let to_test = AngularSpectrum::new(grid, geom.d2, wl, pad_factor)?;
        if pad_factor == 1 {
            let field = ComplexField::new(grid, object.samples().to_vec())?;
            let extent = crate::propagate::nonzero_extent(&field);
            if extent > grid.span() / 2.0 {
                return Err(Error::Configuration(format!(
                    "object extent {extent} m exceeds half the grid span; pad_factor must be >= 2"
                )));
            }
        }
        let reference = if pad_factor == 1 {
            ReferenceLeg::FromSource(AngularSpectrum::new(grid, geom.d_ref, wl, pad_factor)?)
        } else if geom.fourier_condition_met() {
            ReferenceLeg::SharedWithTest
        } else if geom.d_ref >= geom.d1 {
            ReferenceLeg::FromObjectPlane(AngularSpectrum::new(grid, geom.d_ref - geom.d1, wl, pad_factor)?)
        } else {
            ReferenceLeg::FromSource(AngularSpectrum::new(grid, geom.d_ref, wl, pad_factor)?)
        };
        let len = grid.len();
        let z = || vec![Complex64::default(); len];
        Ok(Pipeline {
            geom: *geom,
            pad_factor,
            source: Arc::new(source),
            object: Arc::new(object.samples().to_vec()),
            object_is_identity: object.is_identity(),
            to_object,
            to_test,
            reference,
            bin,
            e0: z(),
            eo: z(),
            et: z(),
            er: z(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.source.grid()
    }

    pub fn geometry(&self) -> &SetupGeometry {
        &self.geom
    }

    /// Detector grid after binning.
    pub fn detector_grid(&self) -> Grid {
        let g = self.grid();
        Grid::new(g.dims(), g.n() / self.bin, g.pitch() * self.bin as f64).expect("valid binned grid")
    }

    /// Object-plane field `P_d1(E0)` for one realization.
    pub fn object_plane_field(&mut self, seed: RealizationSeed) -> &[Complex64] {
        self.source.fill(seed, &mut self.e0);
        self.to_object.propagate_into(&self.e0, &mut self.eo);
        &self.eo
    }

    /// Writes both detector intensities for `seed` into the given buffers.
    pub fn realize_into(&mut self, seed: RealizationSeed, i_test: &mut Vec<f64>, i_ref: &mut Vec<f64>) {
        self.source.fill(seed, &mut self.e0);
        let from_source = match &mut self.reference {
            ReferenceLeg::FromSource(a) if a.pad_factor() == self.pad_factor => {
                self.to_object.propagate_split(a, &self.e0, &mut self.eo, &mut self.er);
                true
            }
            _ => {
                self.to_object.propagate_into(&self.e0, &mut self.eo);
                false
            }
        };
        if self.object_is_identity {
            self.et.copy_from_slice(&self.eo);
        } else {
            for ((t, e), o) in self.et.iter_mut().zip(&self.eo).zip(self.object.iter()) {
                *t = e * o;
            }
        }
        self.to_test.propagate_in_place(&mut self.et);
        match &mut self.reference {
            ReferenceLeg::SharedWithTest => {
                self.er.copy_from_slice(&self.eo);
                self.to_test.propagate_in_place(&mut self.er);
            }
            ReferenceLeg::FromObjectPlane(a) => a.propagate_into(&self.eo, &mut self.er),
            ReferenceLeg::FromSource(a) => {
                if !from_source {
                    a.propagate_into(&self.e0, &mut self.er)
                }
            }
        }
        let g = *self.source.grid();
        detect(&self.et, &g, self.bin, i_test);
        detect(&self.er, &g, self.bin, i_ref);
    }

    pub fn realize(&mut self, seed: RealizationSeed) -> ArmIntensities {
        let (mut t, mut r) = (Vec::new(), Vec::new());
        self.realize_into(seed, &mut t, &mut r);
        ArmIntensities {
            i_test: t,
            i_ref: r,
            realization_index: seed.realization_index,
        }
    }
}

/// `|E|²` summed over `bin × bin` pixels (bins start at the grid corner).
fn detect(field: &[Complex64], grid: &Grid, bin: usize, out: &mut Vec<f64>) {
    if bin == 1 {
        out.clear();
        out.extend(field.iter().map(|e| e.norm_sqr()));
        return;
    }
    let n = grid.n();
    let m = n / bin;
    out.clear();
    match grid.dims() {
        1 => out.extend((0..m).map(|j| field[j * bin..(j + 1) * bin].iter().map(|e| e.norm_sqr()).sum::<f64>())),
        _ => {
            out.resize(m * m, 0.0);
            for (k, e) in field.iter().enumerate() {
                let (y, x) = (k / n / bin, (k % n) / bin);
                out[y * m + x] += e.norm_sqr();
            }
        }
    }
}

/// One realization through both arms (builds a fresh pipeline).
pub fn run_realization(
    geom: &SetupGeometry,
    object: &Transmission,
    spec: &SpeckleSpec,
    seed: RealizationSeed,
    pad_factor: usize,
) -> Result<ArmIntensities> {
    Ok(Pipeline::new(geom, object, spec, pad_factor, 1)?.realize(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_realizations: u64,
    pub master_seed: u64,
    pub estimator: Estimator,
    /// Fixed test-detector point (m) for the fixed-point estimator.
    pub test_point: f64,
    /// Realizations between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Half-width (m) of the test-detector region used for shift averaging.
    pub test_roi: Option<f64>,
    pub pad_factor: usize,
    pub bin: usize,
    /// Also maintain the sums the other estimator needs.
    pub both_estimators: bool,
    /// Maintain second-moment sums for g2.
    pub diagnostics: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_realizations: 10_000,
            master_seed: 1,
            estimator: Estimator::ShiftAveraged,
            test_point: 0.0,
            checkpoint_every: 0,
            test_roi: None,
            pad_factor: 2,
            bin: 1,
            both_estimators: false,
            diagnostics: false,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations < 2 {
            return Err(Error::Configuration(format!(
                "n_realizations >= 2 required, got {}",
                self.n_realizations
            )));
        }
        if self.pad_factor < 1 {
            return Err(Error::Configuration("pad_factor must be >= 1".into()));
        }
        if self.bin < 1 {
            return Err(Error::Configuration("bin must be >= 1".into()));
        }
        if !self.test_point.is_finite() {
            return Err(Error::Configuration("test_point must be finite".into()));
        }
        Ok(())
    }

    pub fn layout(&self, detector: Grid, geom: &SetupGeometry) -> AccumulatorLayout {
        let fixed = self.estimator == Estimator::FixedPoint || self.both_estimators;
        let shift = self.estimator == Estimator::ShiftAveraged || self.both_estimators;
        AccumulatorLayout {
            grid: detector,
            wavelength: geom.wavelength,
            d2: geom.d2,
            fixed_points: if fixed { vec![self.test_point] } else { Vec::new() },
            shift_averaged: shift,
            test_roi: self.test_roi,
            diagnostics: self.diagnostics,
        }
    }
}

/// Streams realizations `acc.count()..n_realizations` into `acc` (a fresh
/// accumulator when `resume` is `None`). `checkpoint` is called with the
/// running accumulator every `checkpoint_every` realizations, at block
/// boundaries.
pub fn accumulate_ensemble(
    geom: &SetupGeometry,
    object: &Transmission,
    spec: &SpeckleSpec,
    cfg: &EnsembleConfig,
    exec: Execution,
    resume: Option<CorrelationAccumulator>,
    checkpoint: &mut dyn FnMut(&CorrelationAccumulator),
) -> Result<CorrelationAccumulator> {
    cfg.validate()?;
    let template = Pipeline::new(geom, object, spec, cfg.pad_factor, cfg.bin)?;
    let layout = cfg.layout(template.detector_grid(), geom);
    let mut global = match resume {
        Some(acc) => {
            if acc.layout() != &layout {
                return Err(Error::Configuration("checkpoint layout does not match the configuration".into()));
            }
            if acc.count() > cfg.n_realizations {
                return Err(Error::Configuration(format!(
                    "checkpoint holds {} realizations, more than the configured {}",
                    acc.count(),
                    cfg.n_realizations
                )));
            }
            acc
        }
        None => CorrelationAccumulator::new(layout.clone())?,
    };
    let start = global.count();
    let mut last_ckpt = start;
    let seed = cfg.master_seed;
    run_blocks(
        exec,
        start..cfg.n_realizations,
        BLOCK_SIZE,
        || Ok((template.clone(), Vec::new(), Vec::new())),
        || CorrelationAccumulator::new(layout.clone()).expect("layout validated"),
        |(p, t, r), acc, i| {
            p.realize_into(RealizationSeed::new(seed, i), t, r);
            acc.accumulate(t, r)
        },
        |block, end| {
            global.merge(&block)?;
            if cfg.checkpoint_every > 0 && end / cfg.checkpoint_every > last_ckpt / cfg.checkpoint_every {
                checkpoint(&global);
                last_ckpt = end;
            }
            Ok(())
        },
    )?;
    Ok(global)
}

pub fn run_ensemble_with(
    geom: &SetupGeometry,
    object: &Transmission,
    spec: &SpeckleSpec,
    cfg: &EnsembleConfig,
    exec: Execution,
) -> Result<GhostResult> {
    let acc = accumulate_ensemble(geom, object, spec, cfg, exec, None, &mut |_| {})?;
    acc.finalize(cfg.estimator, cfg.test_point)
}

/// Ensemble on the default worker pool.
pub fn run_ensemble(
    geom: &SetupGeometry,
    object: &Transmission,
    spec: &SpeckleSpec,
    cfg: &EnsembleConfig,
) -> Result<GhostResult> {
    run_ensemble_with(geom, object, spec, cfg, Execution::default())
}

const CHECKPOINT_VERSION: f64 = 1.0;

/// Writes an accumulator snapshot as a sequence of binary-array records:
/// header, `Σ I_t`, `Σ I_r`, fixed points, one fixed-point cross sum per
/// point, then the cross spectrum and second moments when active.
pub fn save_checkpoint(path: &Path, acc: &CorrelationAccumulator, master_seed: u64) -> Result<()> {
    let l = acc.layout();
    let g = l.grid;
    let header = vec![
        CHECKPOINT_VERSION,
        acc.count() as f64,
        f64::from_bits(master_seed),
        g.dims() as f64,
        g.n() as f64,
        g.pitch(),
        l.wavelength,
        l.d2,
        l.test_roi.unwrap_or(f64::NAN),
        l.shift_averaged as u8 as f64,
        l.diagnostics as u8 as f64,
        acc.correlation_len() as f64,
    ];
    let shape = |len: usize| vec![len];
    let mut recs = vec![
        ArrayData::real(shape(header.len()), header)?,
        ArrayData::real(shape(g.len()), acc.sum_t().to_vec())?,
        ArrayData::real(shape(g.len()), acc.sum_r().to_vec())?,
        ArrayData::real(shape(l.fixed_points.len().max(1)), if l.fixed_points.is_empty() { vec![f64::NAN] } else { l.fixed_points.clone() })?,
    ];
    for s in acc.sum_cross_fixed() {
        recs.push(ArrayData::real(shape(s.len()), s.clone())?);
    }
    if let Some(x) = acc.sum_xspec() {
        recs.push(ArrayData::complex(shape(x.len()), x.to_vec())?);
    }
    for s in [acc.sum_r2(), acc.sum_t2()].into_iter().flatten() {
        recs.push(ArrayData::real(shape(s.len()), s.to_vec())?);
    }
    let tmp = path.with_extension("tmp");
    write_records(&tmp, &recs)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Restores a snapshot written by [`save_checkpoint`] and checks it against
/// the expected layout and seed.
pub fn load_checkpoint(path: &Path, layout: &AccumulatorLayout, master_seed: u64) -> Result<CorrelationAccumulator> {
    let recs = read_records(path)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let mut it = recs.into_iter();
    let mut next_real = |what: &str| -> Result<Vec<f64>> {
        it.next()
            .and_then(ArrayData::into_f64)
            .ok_or_else(|| bad(&format!("missing or malformed {what}")))
    };
    let h = next_real("header")?;
    if h.len() != 12 || h[0] != CHECKPOINT_VERSION {
        return Err(bad("unsupported checkpoint header"));
    }
    if h[2].to_bits() != master_seed {
        return Err(Error::Configuration(format!(
            "{}: checkpoint was written with a different master seed",
            path.display()
        )));
    }
    let g = layout.grid;
    let same = h[3] == g.dims() as f64
        && h[4] == g.n() as f64
        && h[5] == g.pitch()
        && h[6] == layout.wavelength
        && h[7] == layout.d2
        && (h[8].is_nan() && layout.test_roi.is_none() || Some(h[8]) == layout.test_roi)
        && h[9] == layout.shift_averaged as u8 as f64
        && h[10] == layout.diagnostics as u8 as f64;
    if !same {
        return Err(Error::Configuration(format!(
            "{}: checkpoint geometry or estimator settings differ from the configuration",
            path.display()
        )));
    }
    let n = h[1] as u64;
    let sum_t = next_real("sum_t")?;
    let sum_r = next_real("sum_r")?;
    let fixed = next_real("fixed points")?;
    let fixed_ok = if layout.fixed_points.is_empty() {
        fixed.len() == 1 && fixed[0].is_nan()
    } else {
        fixed == layout.fixed_points
    };
    if !fixed_ok {
        return Err(Error::Configuration(format!("{}: checkpoint fixed test points differ", path.display())));
    }
    let mut cross = Vec::new();
    for _ in 0..layout.fixed_points.len() {
        cross.push(next_real("fixed-point sum")?);
    }
    let xspec = if layout.shift_averaged {
        Some(
            it.next()
                .and_then(ArrayData::into_complex)
                .ok_or_else(|| bad("missing cross spectrum"))?,
        )
    } else {
        None
    };
    let (r2, t2) = if layout.diagnostics {
        let r2 = it.next().and_then(ArrayData::into_f64).ok_or_else(|| bad("missing Σ I_r²"))?;
        let t2 = it.next().and_then(ArrayData::into_f64).ok_or_else(|| bad("missing Σ I_t²"))?;
        (Some(r2), Some(t2))
    } else {
        (None, None)
    };
    if it.next().is_some() {
        return Err(bad("trailing records"));
    }
    CorrelationAccumulator::from_parts(layout.clone(), n, sum_t, sum_r, cross, xspec, r2, t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherentMode {
    /// `|P_d2(t)|²`: the plane-wave pattern at the test detector.
    FresnelD2,
    /// `|lens_2f(t, f = d2)|²`: the Fourier pattern behind a 2-f lens.
    Lens2f,
}

impl CoherentMode {
    pub fn name(&self) -> &'static str {
        match self {
            CoherentMode::FresnelD2 => "fresnel_d2",
            CoherentMode::Lens2f => "lens_2f",
        }
    }
}

/// Plane-wave (laser) illumination of the object. The pattern is
/// peak-normalized and placed on the frequency axis `x / (λ d2)`.
///
/// An identity object is an unbounded plane wave rather than a grid-sized
/// aperture, so its Fresnel pattern is exactly flat.
pub fn run_coherent_reference(
    geom: &SetupGeometry,
    object: &Transmission,
    mode: CoherentMode,
    pad_factor: usize,
) -> Result<Pattern> {
    geom.validate()?;
    let g = *object.grid();
    let field = ComplexField::new(g, object.samples().to_vec())?;
    let out = match mode {
        CoherentMode::FresnelD2 if object.is_identity() => field,
        CoherentMode::FresnelD2 => AngularSpectrum::new(g, geom.d2, geom.wavelength, pad_factor)?.propagate(&field)?,
        CoherentMode::Lens2f => lens_2f(&field, geom.d2, geom.wavelength)?,
    };
    let mut p = Pattern::new(frequency_axis(&g, geom.wavelength, geom.d2)?, out.intensity(), AxisKind::Frequency, g.dims())?;
    p.normalize_peak();
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleStatistics {
    pub realizations: u64,
    /// FWHM of the object-plane intensity autocovariance (m).
    pub fwhm: f64,
    /// `λ d1 / d0`.
    pub coherence_length: f64,
    pub predicted_fwhm: f64,
    /// `⟨I²⟩/⟨I⟩²` at the grid center.
    pub g2: f64,
}

/// Speckle statistics of the object-plane intensity `|P_d1(E0)|²`.
pub fn speckle_statistics(
    geom: &SetupGeometry,
    grid: &Grid,
    spec: &SpeckleSpec,
    n_realizations: u64,
    master_seed: u64,
    pad_factor: usize,
    exec: Execution,
) -> Result<SpeckleStatistics> {
    if n_realizations < 100 {
        return Err(Error::InsufficientStatistics(format!(
            "speckle statistics need at least 100 realizations, have {n_realizations}"
        )));
    }
    let template = Pipeline::new(geom, &crate::objects::identity(grid), spec, pad_factor, 1)?;
    let mut layout = AccumulatorLayout::new(*grid, geom.wavelength, geom.d2);
    layout.fixed_points.clear();
    layout.shift_averaged = false;
    layout.diagnostics = true;
    let mut moments = CorrelationAccumulator::new(layout.clone())?;
    let mut acov = AutocovarianceAccumulator::new(*grid);
    run_blocks(
        exec,
        0..n_realizations,
        BLOCK_SIZE,
        || Ok((template.clone(), Vec::new())),
        || {
            (
                CorrelationAccumulator::new(layout.clone()).expect("valid layout"),
                AutocovarianceAccumulator::new(*grid),
            )
        },
        |(p, buf): &mut (Pipeline, Vec<f64>), (m, a), i| {
            let eo = p.object_plane_field(RealizationSeed::new(master_seed, i));
            buf.clear();
            buf.extend(eo.iter().map(|e| e.norm_sqr()));
            m.accumulate(buf, buf)?;
            a.accumulate(buf)
        },
        |(m, a), _| {
            moments.merge(&m)?;
            acov.merge(&a)
        },
    )?;
    Ok(SpeckleStatistics {
        realizations: n_realizations,
        fwhm: acov.fwhm()?,
        coherence_length: crate::source::transverse_coherence_length(geom.wavelength, geom.d1, spec.spot_diameter)?,
        predicted_fwhm: crate::source::predicted_speckle_fwhm(spec, geom.wavelength, geom.d1, grid.dims())?,
        g2: moments.g2_at_zero(0.0)?,
    })
}

/// Michelson visibility of the component with period `period` (m) in a 1D
/// intensity profile, over `|x| <= half_window` with a Hann taper:
/// `2 |Σ w I e^{-i2πx/P}| / Σ w I`. A profile `I0 (1 + V cos(2πx/P))`
/// returns `V`.
pub fn fringe_visibility(values: &[f64], grid: &Grid, period: f64, half_window: f64) -> Result<f64> {
    if grid.dims() != 1 || values.len() != grid.len() {
        return Err(Error::GeometryMismatch("fringe visibility needs a 1D profile on the grid".into()));
    }
    if !(period > 0.0 && half_window > 0.0) {
        return Err(Error::Configuration("fringe visibility needs positive period and window".into()));
    }
    let mut num = Complex64::default();
    let mut den = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let x = grid.coordinate(i);
        if x.abs() > half_window {
            continue;
        }
        let w = 0.5 * (1.0 + (std::f64::consts::PI * x / half_window).cos());
        num += Complex64::from_polar(w * v, -std::f64::consts::TAU * x / period);
        den += w * v;
    }
    if !(den > 0.0) {
        return Err(Error::DegenerateInput("profile has no intensity in the window".into()));
    }
    Ok(2.0 * num.norm() / den)
}

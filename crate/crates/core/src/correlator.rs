//! Streaming, mergeable estimation of the intensity-fluctuation
//! cross-correlation between the two arms, and its finalization into ghost
//! diffraction patterns.
//!
//! Only raw moments are accumulated (`Σ I_t`, `Σ I_r`, `Σ I_r·I_t`); the
//! covariance is formed at finalize, so accumulators merge by plain
//! addition.
//!
//! The shift-averaged estimator needs the per-realization linear
//! cross-correlation `c(Δ) = Σ_u I_r(u+Δ) I_t(u)`. It is accumulated in the
//! transform domain as the cross-power spectrum on a zero-padded grid and
//! brought back to lag space once, at finalize.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::SquareFft;
use crate::grid::{frequency_axis, AxisKind, Grid, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    FixedPoint,
    ShiftAveraged,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::FixedPoint => "fixed_point",
            Estimator::ShiftAveraged => "shift_averaged",
        }
    }
}

/// Which sums an accumulator maintains, and on what detector geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatorLayout {
    pub grid: Grid,
    pub wavelength: f64,
    pub d2: f64,
    /// Test-arm sample coordinates (m) used by the fixed-point estimator.
    /// In 2D each point is placed on the x axis at `y = 0`.
    pub fixed_points: Vec<f64>,
    /// Maintain the cross-power spectrum for the shift-averaged estimator.
    pub shift_averaged: bool,
    /// Half-width (m) of the test-detector region used for shift averaging;
    /// `None` uses the full detector.
    pub test_roi: Option<f64>,
    /// Maintain per-sample second moments (`Σ I_r²`, `Σ I_t²`).
    pub diagnostics: bool,
}

impl AccumulatorLayout {
    pub fn new(grid: Grid, wavelength: f64, d2: f64) -> Self {
        AccumulatorLayout {
            grid,
            wavelength,
            d2,
            fixed_points: vec![0.0],
            shift_averaged: true,
            test_roi: None,
            diagnostics: false,
        }
    }

    fn fixed_indices(&self) -> Result<Vec<usize>> {
        self.fixed_points
            .iter()
            .map(|&x| fixed_flat_index(&self.grid, x))
            .collect()
    }

    /// Zero-padded correlation length per axis.
    ///
    /// Lags span `[-n/2, n/2)`; with test samples restricted to a region of
    /// width `W` centered on the grid, a circular length of `n + W/2` (plus
    /// a guard sample) already separates every needed lag from its alias.
    pub fn correlation_len(&self) -> usize {
        let n = self.grid.n();
        let w = self.roi_width_samples();
        fast_len(n + w.div_ceil(2) + 2)
    }

    fn roi_width_samples(&self) -> usize {
        let n = self.grid.n();
        match self.test_roi {
            None => n,
            Some(h) => {
                let k = (0..n).filter(|&i| self.grid.coordinate(i).abs() <= h).count();
                k.max(1)
            }
        }
    }

    fn roi_mask(&self) -> Vec<f64> {
        let g = self.grid;
        let n = g.n();
        let inside = |x: f64| self.test_roi.is_none_or(|h| x.abs() <= h);
        (0..g.len())
            .map(|k| {
                let ok = match g.dims() {
                    1 => inside(g.coordinate(k)),
                    _ => inside(g.coordinate(k % n)) && inside(g.coordinate(k / n)),
                };
                if ok {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.d2 > 0.0) {
            return Err(Error::InvalidGeometry("accumulator needs λ > 0 and d2 > 0".into()));
        }
        if let Some(h) = self.test_roi {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Configuration(format!("test ROI half-width must be > 0, got {h}")));
            }
        }
        self.fixed_indices().map(|_| ())
    }
}

fn fixed_flat_index(grid: &Grid, x: f64) -> Result<usize> {
    let i = grid.index_of(x).ok_or_else(|| {
        Error::Configuration(format!("test point {x} m is not on the detector grid"))
    })?;
    Ok(match grid.dims() {
        1 => i,
        _ => grid.center() * grid.n() + i,
    })
}

/// Smallest `2^a 3^b 5^c >= n`.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Transform workspace for the per-realization cross-power spectrum.
#[derive(Clone)]
struct XcorrWorkspace {
    fft: SquareFft,
    buf: Vec<Complex64>,
}

impl XcorrWorkspace {
    fn new(dims: usize, m: usize) -> Self {
        XcorrWorkspace {
            fft: SquareFft::new(dims, m),
            buf: vec![Complex64::default(); m.pow(dims as u32)],
        }
    }

    /// Loads `r + i t` (both `n^dims`, placed at the origin corner) and
    /// forward-transforms in transposed order.
    fn load_pair(&mut self, n: usize, r: &[f64], t: &[f64], t_scale: Option<&[f64]>) {
        let m = self.fft.n();
        self.buf.fill(Complex64::default());
        let rows = r.len() / n;
        for row in 0..rows {
            for col in 0..n {
                let k = row * n + col;
                let tv = t_scale.map_or(t[k], |s| t[k] * s[k]);
                self.buf[row * m + col] = Complex64::new(r[k], tv);
            }
        }
        self.fft.forward_transposed(&mut self.buf);
    }

    /// Adds (or writes, if `overwrite`) `R_k conj(T_k)` of the packed
    /// spectrum into `dst`.
    fn cross_power(&self, dst: &mut [Complex64], overwrite: bool) {
        let m = self.fft.n();
        let rows = if self.fft.dims() == 1 { 1 } else { m };
        let z = &self.buf;
        let quarter_i = Complex64::new(0.0, 0.25);
        for a in 0..rows {
            let na = (rows - a) % rows;
            let row = &z[a * m..(a + 1) * m];
            let neg_row = &z[na * m..(na + 1) * m];
            let out = &mut dst[a * m..(a + 1) * m];
            for b in 0..m {
                let w = neg_row[(m - b) % m].conj();
                let zk = row[b];
                // R = (Z + W)/2, T = (Z - W)/(2i); R conj(T) = i (Z + W) conj(Z - W) / 4
                let p = (zk + w) * (zk - w).conj() * quarter_i;
                if overwrite {
                    out[b] = p;
                } else {
                    out[b] += p;
                }
            }
        }
    }
}

/// Raw-moment sums of both arms.
pub struct CorrelationAccumulator {
    layout: AccumulatorLayout,
    fixed_idx: Vec<usize>,
    correlation_len: usize,
    roi: Option<Vec<f64>>,
    n: u64,
    sum_t: Vec<f64>,
    sum_r: Vec<f64>,
    sum_cross_fixed: Vec<Vec<f64>>,
    sum_xspec: Option<Vec<Complex64>>,
    sum_r2: Option<Vec<f64>>,
    sum_t2: Option<Vec<f64>>,
    ws: Option<XcorrWorkspace>,
}

impl Clone for CorrelationAccumulator {
    fn clone(&self) -> Self {
        CorrelationAccumulator {
            layout: self.layout.clone(),
            fixed_idx: self.fixed_idx.clone(),
            correlation_len: self.correlation_len,
            roi: self.roi.clone(),
            n: self.n,
            sum_t: self.sum_t.clone(),
            sum_r: self.sum_r.clone(),
            sum_cross_fixed: self.sum_cross_fixed.clone(),
            sum_xspec: self.sum_xspec.clone(),
            sum_r2: self.sum_r2.clone(),
            sum_t2: self.sum_t2.clone(),
            ws: None,
        }
    }
}

impl std::fmt::Debug for CorrelationAccumulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorrelationAccumulator")
            .field("layout", &self.layout)
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CorrelationAccumulator {
    fn eq(&self, o: &Self) -> bool {
        self.layout == o.layout
            && self.n == o.n
            && self.sum_t == o.sum_t
            && self.sum_r == o.sum_r
            && self.sum_cross_fixed == o.sum_cross_fixed
            && self.sum_xspec == o.sum_xspec
            && self.sum_r2 == o.sum_r2
            && self.sum_t2 == o.sum_t2
    }
}

impl CorrelationAccumulator {
    pub fn new(layout: AccumulatorLayout) -> Result<Self> {
        layout.validate()?;
        let g = layout.grid;
        let len = g.len();
        let fixed_idx = layout.fixed_indices()?;
        let correlation_len = layout.correlation_len();
        let xlen = correlation_len.pow(g.dims() as u32);
        let roi = (layout.shift_averaged && layout.test_roi.is_some()).then(|| layout.roi_mask());
        Ok(CorrelationAccumulator {
            fixed_idx,
            correlation_len,
            roi,
            n: 0,
            sum_t: vec![0.0; len],
            sum_r: vec![0.0; len],
            sum_cross_fixed: layout.fixed_points.iter().map(|_| vec![0.0; len]).collect(),
            sum_xspec: layout.shift_averaged.then(|| vec![Complex64::default(); xlen]),
            sum_r2: layout.diagnostics.then(|| vec![0.0; len]),
            sum_t2: layout.diagnostics.then(|| vec![0.0; len]),
            ws: None,
            layout,
        })
    }

    pub fn layout(&self) -> &AccumulatorLayout {
        &self.layout
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn sum_t(&self) -> &[f64] {
        &self.sum_t
    }

    pub fn sum_r(&self) -> &[f64] {
        &self.sum_r
    }

    pub fn sum_cross_fixed(&self) -> &[Vec<f64>] {
        &self.sum_cross_fixed
    }

    pub fn sum_xspec(&self) -> Option<&[Complex64]> {
        self.sum_xspec.as_deref()
    }

    pub fn sum_r2(&self) -> Option<&[f64]> {
        self.sum_r2.as_deref()
    }

    pub fn sum_t2(&self) -> Option<&[f64]> {
        self.sum_t2.as_deref()
    }

    pub fn correlation_len(&self) -> usize {
        self.correlation_len
    }

    pub fn accumulate(&mut self, i_test: &[f64], i_ref: &[f64]) -> Result<()> {
        let len = self.layout.grid.len();
        if i_test.len() != len || i_ref.len() != len {
            return Err(Error::GeometryMismatch(format!(
                "arm intensities have {} / {} samples, accumulator expects {len}",
                i_test.len(),
                i_ref.len()
            )));
        }
        self.n += 1;
        add(&mut self.sum_t, i_test);
        add(&mut self.sum_r, i_ref);
        for (s, &k) in self.sum_cross_fixed.iter_mut().zip(&self.fixed_idx) {
            let it = i_test[k];
            if it != 0.0 {
                for (a, r) in s.iter_mut().zip(i_ref) {
                    *a += r * it;
                }
            }
        }
        if let Some(sum) = self.sum_xspec.as_mut() {
            let masked_nonzero = match &self.roi {
                Some(m) => i_test.iter().zip(m).any(|(t, m)| t * m != 0.0),
                None => i_test.iter().any(|&t| t != 0.0),
            };
            if masked_nonzero {
                let g = self.layout.grid;
                let ws = self
                    .ws
                    .get_or_insert_with(|| XcorrWorkspace::new(g.dims(), self.correlation_len));
                ws.load_pair(g.n(), i_ref, i_test, self.roi.as_deref());
                ws.cross_power(sum, false);
            }
        }
        if let Some(s) = self.sum_r2.as_mut() {
            for (a, r) in s.iter_mut().zip(i_ref) {
                *a += r * r;
            }
        }
        if let Some(s) = self.sum_t2.as_mut() {
            for (a, t) in s.iter_mut().zip(i_test) {
                *a += t * t;
            }
        }
        Ok(())
    }

    /// Adds `other`'s sums into `self`.
    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::GeometryMismatch("cannot merge accumulators with different layouts".into()));
        }
        self.n += other.n;
        add(&mut self.sum_t, &other.sum_t);
        add(&mut self.sum_r, &other.sum_r);
        for (a, b) in self.sum_cross_fixed.iter_mut().zip(&other.sum_cross_fixed) {
            add(a, b);
        }
        if let (Some(a), Some(b)) = (self.sum_xspec.as_mut(), other.sum_xspec.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        if let (Some(a), Some(b)) = (self.sum_r2.as_mut(), other.sum_r2.as_ref()) {
            add(a, b);
        }
        if let (Some(a), Some(b)) = (self.sum_t2.as_mut(), other.sum_t2.as_ref()) {
            add(a, b);
        }
        Ok(())
    }

    /// Rebuilds an accumulator from stored sums (checkpoint restore).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        layout: AccumulatorLayout,
        n: u64,
        sum_t: Vec<f64>,
        sum_r: Vec<f64>,
        sum_cross_fixed: Vec<Vec<f64>>,
        sum_xspec: Option<Vec<Complex64>>,
        sum_r2: Option<Vec<f64>>,
        sum_t2: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut acc = CorrelationAccumulator::new(layout)?;
        let bad = |what: &str| Error::Format(format!("checkpoint {what} does not match the configured layout"));
        if sum_t.len() != acc.sum_t.len() || sum_r.len() != acc.sum_r.len() {
            return Err(bad("arm sums"));
        }
        if sum_cross_fixed.len() != acc.sum_cross_fixed.len()
            || sum_cross_fixed.iter().any(|s| s.len() != acc.sum_t.len())
        {
            return Err(bad("fixed-point sums"));
        }
        if sum_xspec.as_ref().map(Vec::len) != acc.sum_xspec.as_ref().map(Vec::len) {
            return Err(bad("cross spectrum"));
        }
        if sum_r2.as_ref().map(Vec::len) != acc.sum_r2.as_ref().map(Vec::len)
            || sum_t2.as_ref().map(Vec::len) != acc.sum_t2.as_ref().map(Vec::len)
        {
            return Err(bad("diagnostic sums"));
        }
        let finite = sum_t.iter().chain(&sum_r).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Format("checkpoint sums are not finite".into()));
        }
        acc.n = n;
        acc.sum_t = sum_t;
        acc.sum_r = sum_r;
        acc.sum_cross_fixed = sum_cross_fixed;
        acc.sum_xspec = sum_xspec;
        acc.sum_r2 = sum_r2;
        acc.sum_t2 = sum_t2;
        Ok(acc)
    }

    fn require_n(&self, min: u64, what: &str) -> Result<()> {
        if self.n < min {
            return Err(Error::InsufficientStatistics(format!(
                "{what} needs at least {min} realizations, have {}",
                self.n
            )));
        }
        Ok(())
    }

    fn frequency_axis(&self) -> Result<Vec<f64>> {
        frequency_axis(&self.layout.grid, self.layout.wavelength, self.layout.d2)
    }

    /// `G(x_r) = ⟨I_r(x_r) I_t(x_t0)⟩ - ⟨I_r(x_r)⟩⟨I_t(x_t0)⟩` on the
    /// reference-pixel axis. The pattern is centered on `x_t0`.
    pub fn finalize_fixed_point(&self, x_t0: f64) -> Result<GhostResult> {
        self.require_n(2, "fixed-point estimator")?;
        let k = fixed_flat_index(&self.layout.grid, x_t0)?;
        let j = self.fixed_idx.iter().position(|&i| i == k).ok_or_else(|| {
            Error::Configuration(format!("{x_t0} m is not a configured fixed test point"))
        })?;
        let n = self.n as f64;
        let mt = self.sum_t[k] / n;
        let cov: Vec<f64> = self.sum_cross_fixed[j]
            .iter()
            .zip(&self.sum_r)
            .map(|(c, r)| c / n - (r / n) * mt)
            .collect();
        GhostResult::from_covariance(cov, self.frequency_axis()?, self.layout.grid.dims(), Estimator::FixedPoint, self.n, Some(x_t0))
    }

    /// `Ĝ(Δ)`: the covariance of `I_r(u+Δ)` and `I_t(u)` averaged over all
    /// test samples `u` in the ROI with `u+Δ` on the detector.
    pub fn finalize_shift_averaged(&self) -> Result<GhostResult> {
        self.require_n(2, "shift-averaged estimator")?;
        let sum = self.sum_xspec.as_ref().ok_or_else(|| {
            Error::Configuration("shift-averaged sums were not accumulated".into())
        })?;
        let g = self.layout.grid;
        let n = g.n();
        let m = self.correlation_len;
        let cnt = self.n as f64;
        let mut ws = XcorrWorkspace::new(g.dims(), m);

        let mean_r: Vec<f64> = self.sum_r.iter().map(|s| s / cnt).collect();
        let mean_t: Vec<f64> = self.sum_t.iter().map(|s| s / cnt).collect();
        let mut spec = vec![Complex64::default(); sum.len()];
        ws.load_pair(n, &mean_r, &mean_t, self.roi.as_deref());
        ws.cross_power(&mut spec, true);
        for (s, a) in spec.iter_mut().zip(sum) {
            *s = a / cnt - *s;
        }
        ws.buf.copy_from_slice(&spec);
        ws.fft.inverse_from_transposed(&mut ws.buf);
        let lags_cov: Vec<f64> = ws.buf.iter().map(|v| v.re).collect();

        // pair counts: xcorr(1, roi)
        let ones = vec![1.0; g.len()];
        let roi = self.roi.clone().unwrap_or_else(|| ones.clone());
        ws.load_pair(n, &ones, &roi, None);
        ws.cross_power(&mut spec, true);
        ws.buf.copy_from_slice(&spec);
        ws.fft.inverse_from_transposed(&mut ws.buf);
        let counts: Vec<f64> = ws.buf.iter().map(|v| v.re.round()).collect();

        let lag_pos = |i: usize| (i + m - n / 2) % m;
        let mut cov = vec![0.0; g.len()];
        for (k, c) in cov.iter_mut().enumerate() {
            let idx = match g.dims() {
                1 => lag_pos(k),
                _ => lag_pos(k / n) * m + lag_pos(k % n),
            };
            if counts[idx] >= 1.0 {
                *c = lags_cov[idx] / counts[idx];
            }
        }
        GhostResult::from_covariance(cov, self.frequency_axis()?, g.dims(), Estimator::ShiftAveraged, self.n, None)
    }

    pub fn finalize(&self, estimator: Estimator, x_t0: f64) -> Result<GhostResult> {
        match estimator {
            Estimator::FixedPoint => self.finalize_fixed_point(x_t0),
            Estimator::ShiftAveraged => self.finalize_shift_averaged(),
        }
    }

    /// `⟨I_r²⟩ / ⟨I_r⟩²` at reference sample `x` (on the x axis in 2D).
    pub fn g2_at_zero(&self, x: f64) -> Result<f64> {
        let s2 = self.sum_r2.as_ref().ok_or_else(|| {
            Error::Configuration("g2 needs diagnostic second-moment sums".into())
        })?;
        self.require_n(100, "g2")?;
        let k = fixed_flat_index(&self.layout.grid, x)?;
        let n = self.n as f64;
        let m1 = self.sum_r[k] / n;
        if !(m1 > 0.0) {
            return Err(Error::DegenerateInput(format!("mean reference intensity at {x} m is zero")));
        }
        Ok((s2[k] / n) / (m1 * m1))
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Finalized ghost diffraction pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostResult {
    /// Peak-normalized, clamped to `[0, 1]`, on the frequency axis.
    pub pattern: Pattern,
    pub estimator: Estimator,
    pub n_used: u64,
    /// Fixed test point for [`Estimator::FixedPoint`].
    pub test_point: Option<f64>,
    /// Minimum of the peak-normalized pattern before clamping.
    pub pre_clamp_min: f64,
    /// Covariance values before normalization.
    pub covariance: Vec<f64>,
    /// Filled by comparison against an oracle.
    pub residual_vs_oracle: Option<f64>,
}

impl GhostResult {
    fn from_covariance(
        covariance: Vec<f64>,
        axis: Vec<f64>,
        dims: usize,
        estimator: Estimator,
        n_used: u64,
        test_point: Option<f64>,
    ) -> Result<Self> {
        let peak = covariance.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::DegenerateInput(format!(
                "correlation has no positive peak (max {peak}); arms carry no common fluctuation"
            )));
        }
        let mut min = f64::INFINITY;
        let values: Vec<f64> = covariance
            .iter()
            .map(|c| {
                let v = c / peak;
                min = min.min(v);
                v.max(0.0)
            })
            .collect();
        if min < 0.0 {
            log::info!("{}: clamped negative values, pre-clamp minimum {min:.4e}", estimator.name());
        }
        Ok(GhostResult {
            pattern: Pattern::new(axis, values, AxisKind::Frequency, dims)?,
            estimator,
            n_used,
            test_point,
            pre_clamp_min: min,
            covariance,
            residual_vs_oracle: None,
        })
    }

    /// Largest covariance magnitude (before normalization).
    pub fn max_abs_covariance(&self) -> f64 {
        self.covariance.iter().fold(0.0, |a, c| a.max(c.abs()))
    }
}

//! Fourier phase retrieval: Error Reduction and Hybrid Input-Output.
//!
//! Arrays live on a centered object grid; the modulus is given on the
//! conjugate grid `ν_k = (k - n/2) / (n·pitch)` per axis, in the same
//! centered order. Only `|F|` enters the algorithms, so the half-grid
//! offset between centered coordinates and FFT indices is a pure phase and
//! is dropped.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::fft::SquareFft;
use crate::grid::{interpolate_uniform, Grid, Pattern};
use crate::objects::Transmission;

/// ER stops once successive Fourier errors differ by less than this.
pub const ER_TOLERANCE: f64 = 1e-8;
/// Fourier error treated as an exact solution.
pub const CONVERGED_ERROR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RetrievalProblem {
    pub grid: Grid,
    /// Target `|T̃|` on the conjugate grid, centered order.
    pub modulus: Vec<f64>,
    pub support: Vec<bool>,
    pub max_iterations: usize,
    /// HIO feedback parameter.
    pub beta: f64,
    pub init_seed: u64,
    /// Real non-negative object (amplitude-only). When false only the
    /// support is enforced and the iterate stays complex.
    pub nonnegative: bool,
    /// ER iterations appended after HIO.
    pub polish_iterations: usize,
    /// Starting iterate; random on the support when `None`.
    pub initial: Option<Vec<Complex64>>,
}

impl RetrievalProblem {
    pub fn new(grid: Grid, modulus: Vec<f64>, support: Vec<bool>) -> Self {
        RetrievalProblem {
            grid,
            modulus,
            support,
            max_iterations: 500,
            beta: 0.9,
            init_seed: 0,
            nonnegative: true,
            polish_iterations: 100,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.grid.len();
        if self.modulus.len() != len || self.support.len() != len {
            return Err(Error::GeometryMismatch(format!(
                "modulus ({}) and support ({}) must both have {len} samples",
                self.modulus.len(),
                self.support.len()
            )));
        }
        if self.modulus.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Configuration("modulus must be finite and >= 0".into()));
        }
        let inside = self.support.iter().filter(|s| **s).count();
        if inside == 0 || inside == len {
            return Err(Error::Configuration(format!(
                "support must be non-empty and smaller than the grid ({inside} of {len} samples)"
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Configuration(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Configuration("max_iterations must be >= 1".into()));
        }
        if let Some(g) = &self.initial {
            if g.len() != len {
                return Err(Error::GeometryMismatch(format!("initial iterate must have {len} samples")));
            }
        }
        if self.modulus.iter().all(|m| *m == 0.0) {
            return Err(Error::DegenerateInput("modulus is identically zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub estimate: Vec<Complex64>,
    /// `‖|F g_k| - m‖ / ‖m‖` for every iterate visited.
    pub fourier_error_history: Vec<f64>,
    /// Updates applied.
    pub iterations_run: usize,
    /// Smallest Fourier error seen (the reported estimate's).
    pub best_error: f64,
}

struct Solver {
    fft: SquareFft,
    /// Modulus permuted to FFT order and scaled to the initial iterate.
    target: Vec<f64>,
    target_norm: f64,
    support: Vec<bool>,
    nonnegative: bool,
    spec: Vec<Complex64>,
}

impl Solver {
    fn new(p: &RetrievalProblem, g0: &[Complex64]) -> Result<Self> {
        let g = p.grid;
        let n = g.n();
        let fft_index = |k: usize| (k + n / 2) % n;
        let mut target = vec![0.0; g.len()];
        for (k, t) in target.iter_mut().enumerate() {
            let c = match g.dims() {
                1 => fft_index(k),
                _ => fft_index(k / n) * n + fft_index(k % n),
            };
            *t = p.modulus[c];
        }
        let mut fft = SquareFft::new(g.dims(), n);
        let mut spec = g0.to_vec();
        fft.forward(&mut spec);
        let gnorm = spec.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let mnorm = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gnorm > 0.0) {
            return Err(Error::DegenerateInput("initial iterate is zero".into()));
        }
        let scale = gnorm / mnorm;
        for t in &mut target {
            *t *= scale;
        }
        Ok(Solver {
            fft,
            target,
            target_norm: gnorm,
            support: p.support.clone(),
            nonnegative: p.nonnegative,
            spec,
        })
    }

    /// Fourier error of `g` and its modulus-projected back-transform in `out`.
    fn project_modulus(&mut self, g: &[Complex64], out: &mut Vec<Complex64>) -> f64 {
        self.spec.copy_from_slice(g);
        self.fft.forward(&mut self.spec);
        let mut err = 0.0;
        for (s, &m) in self.spec.iter_mut().zip(&self.target) {
            let a = s.norm();
            err += (a - m) * (a - m);
            *s = if a > 0.0 { *s * (m / a) } else { Complex64::new(m, 0.0) };
        }
        out.clear();
        out.extend_from_slice(&self.spec);
        self.fft.inverse(out);
        if self.nonnegative {
            for v in out.iter_mut() {
                *v = Complex64::new(v.re, 0.0);
            }
        }
        err.sqrt() / self.target_norm
    }

    fn admissible(&self, i: usize, v: Complex64) -> bool {
        self.support[i] && (!self.nonnegative || v.re >= 0.0)
    }

    fn er_step(&self, gf: &[Complex64], g: &mut [Complex64]) {
        for (i, (o, &v)) in g.iter_mut().zip(gf).enumerate() {
            *o = if self.admissible(i, v) { v } else { Complex64::default() };
        }
    }

    fn hio_step(&self, gf: &[Complex64], g: &mut [Complex64], beta: f64) {
        for (i, (o, &v)) in g.iter_mut().zip(gf).enumerate() {
            *o = if self.admissible(i, v) { v } else { *o - v * beta };
        }
    }
}

fn initial_iterate(p: &RetrievalProblem) -> Vec<Complex64> {
    if let Some(g) = &p.initial {
        return g.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.init_seed);
    p.support
        .iter()
        .map(|&s| {
            let a: f64 = rng.gen();
            let phase: f64 = if p.nonnegative { 0.0 } else { rng.gen::<f64>() * std::f64::consts::TAU };
            if s {
                Complex64::from_polar(a, phase)
            } else {
                Complex64::default()
            }
        })
        .collect()
}

/// Classic Error Reduction. The iterate always satisfies the object-domain
/// constraints, so the Fourier error is non-increasing.
pub fn error_reduction(problem: &RetrievalProblem) -> Result<RetrievalReport> {
    problem.validate()?;
    let mut g = initial_iterate(problem);
    let mut solver = Solver::new(problem, &g)?;
    // the starting iterate must satisfy the constraints for monotonicity
    let g0 = g.clone();
    solver.er_step(&g0, &mut g);
    let mut gf = Vec::with_capacity(g.len());
    let mut history = Vec::new();
    let mut run = 0;
    loop {
        let e = solver.project_modulus(&g, &mut gf);
        let stop = e <= CONVERGED_ERROR
            || history.last().map_or(false, |&last: &f64| (last - e).abs() < ER_TOLERANCE)
            || run == problem.max_iterations;
        history.push(e);
        if stop {
            break;
        }
        solver.er_step(&gf, &mut g);
        run += 1;
    }
    let best_error = *history.last().unwrap_or(&f64::NAN);
    Ok(RetrievalReport {
        estimate: g,
        fourier_error_history: history,
        iterations_run: run,
        best_error,
    })
}

/// Hybrid Input-Output followed by `polish_iterations` of ER. Returns the
/// constraint projection of the best modulus-projected iterate.
pub fn hio(problem: &RetrievalProblem) -> Result<RetrievalReport> {
    problem.validate()?;
    let mut g = initial_iterate(problem);
    let mut solver = Solver::new(problem, &g)?;
    let mut gf = Vec::with_capacity(g.len());
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, g.clone());
    let total = problem.max_iterations + problem.polish_iterations;
    let mut run = 0;
    for k in 0..total {
        let e = solver.project_modulus(&g, &mut gf);
        history.push(e);
        if e < best.0 {
            best.0 = e;
            solver.er_step(&gf, &mut best.1);
        }
        if e <= CONVERGED_ERROR {
            break;
        }
        if k < problem.max_iterations {
            solver.hio_step(&gf, &mut g, problem.beta);
        } else {
            solver.er_step(&gf, &mut g);
        }
        run += 1;
    }
    Ok(RetrievalReport {
        estimate: best.1,
        fourier_error_history: history,
        iterations_run: run,
        best_error: best.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ErrorReduction,
    Hio,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::ErrorReduction => "error_reduction",
            Algorithm::Hio => "hio",
        }
    }
}

/// Independent restarts, one per seed, run concurrently.
pub fn restarts(problem: &RetrievalProblem, algorithm: Algorithm, seeds: &[u64]) -> Result<Vec<RetrievalReport>> {
    problem.validate()?;
    let mut out: Vec<Option<Result<RetrievalReport>>> = (0..seeds.len()).map(|_| None).collect();
    map_indexed(&mut out, |i| {
        let mut p = problem.clone();
        p.init_seed = seeds[i];
        p.initial = None;
        Some(match algorithm {
            Algorithm::ErrorReduction => error_reduction(&p),
            Algorithm::Hio => hio(&p),
        })
    });
    out.into_iter().map(|r| r.expect("every restart ran")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// `min ‖a·g_σ - truth‖ / ‖truth‖` over translations, flip with
    /// conjugation and complex scalars `a`.
    pub error: f64,
    /// `|⟨g_σ, truth⟩| / (‖g_σ‖ ‖truth‖)` at the optimum.
    pub correlation: f64,
    /// Cyclic shift applied to the estimate, per axis (y, x); `y` is 0 in 1D.
    pub shift: (usize, usize),
    pub flipped: bool,
}

/// Register `estimate` onto `truth` over the trivial ambiguities of the
/// Fourier modulus.
pub fn register(grid: &Grid, estimate: &[Complex64], truth: &[Complex64]) -> Result<Registration> {
    let len = grid.len();
    if estimate.len() != len || truth.len() != len {
        return Err(Error::GeometryMismatch("estimate and truth must share the grid".into()));
    }
    let tn2: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    if !(tn2 > 0.0) {
        return Err(Error::DegenerateInput("ground truth is zero".into()));
    }
    let gn2: f64 = estimate.iter().map(|v| v.norm_sqr()).sum();
    if !(gn2 > 0.0) {
        return Ok(Registration { error: 1.0, correlation: 0.0, shift: (0, 0), flipped: false });
    }
    let n = grid.n();
    let mut fft = SquareFft::new(grid.dims(), n);
    let mut tf = truth.to_vec();
    fft.forward(&mut tf);
    let flip = |i: usize| (n - i) % n;
    let flipped_of = |k: usize| match grid.dims() {
        1 => flip(k),
        _ => flip(k / n) * n + flip(k % n),
    };
    let mut best = (f64::NEG_INFINITY, 0usize, false);
    for flipped in [false, true] {
        let mut gf: Vec<Complex64> = if flipped {
            (0..len).map(|k| estimate[flipped_of(k)].conj()).collect()
        } else {
            estimate.to_vec()
        };
        fft.forward(&mut gf);
        // c[s] = Σ_x truth(x) conj(g(x - s))
        for (a, b) in gf.iter_mut().zip(&tf) {
            *a = b * a.conj();
        }
        fft.inverse(&mut gf);
        for (k, c) in gf.iter().enumerate() {
            if c.norm_sqr() > best.0 {
                best = (c.norm_sqr(), k, flipped);
            }
        }
    }
    let (_, k, flipped) = best;
    let shift = match grid.dims() {
        1 => (0, k),
        _ => (k / n, k % n),
    };
    // evaluate the optimum explicitly so exact matches give exactly small errors
    let moved: Vec<Complex64> = (0..len)
        .map(|q| {
            let src = match grid.dims() {
                1 => (q + n - shift.1) % n,
                _ => ((q / n + n - shift.0) % n) * n + (q % n + n - shift.1) % n,
            };
            if flipped {
                estimate[flipped_of(src)].conj()
            } else {
                estimate[src]
            }
        })
        .collect();
    let dot: Complex64 = moved.iter().zip(truth).map(|(g, t)| g.conj() * t).sum();
    let a = dot / gn2;
    let resid: f64 = moved.iter().zip(truth).map(|(g, t)| (a * g - t).norm_sqr()).sum();
    Ok(Registration {
        error: (resid / tn2).sqrt(),
        correlation: (dot.norm() / (gn2 * tn2).sqrt()).min(1.0),
        shift,
        flipped,
    })
}

/// Registered reconstruction error, see [`register`].
pub fn reconstruction_error(grid: &Grid, estimate: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    register(grid, estimate, truth).map(|r| r.error)
}

/// Support: bounding box of the nonzero samples, scaled about its center by
/// `dilation`.
pub fn bounding_box_support(obj: &Transmission, dilation: f64) -> Result<Vec<bool>> {
    if !(dilation >= 1.0) {
        return Err(Error::Configuration(format!("support dilation must be >= 1, got {dilation}")));
    }
    let g = *obj.grid();
    let n = g.n();
    let t = obj.samples();
    let eps = 1e-12;
    let range = |nz: Vec<usize>| -> Option<(f64, f64)> {
        let lo = *nz.first()?;
        let hi = *nz.last()?;
        let (a, b) = (g.coordinate(lo) - g.pitch() / 2.0, g.coordinate(hi) + g.pitch() / 2.0);
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0 * dilation);
        Some((c - h, c + h))
    };
    let inside = |r: (f64, f64), x: f64| x >= r.0 - 1e-12 && x <= r.1 + 1e-12;
    match g.dims() {
        1 => {
            let nz = (0..n).filter(|&i| t[i].norm() > eps).collect();
            let r = range(nz).ok_or_else(|| Error::DegenerateInput("object is zero".into()))?;
            Ok((0..n).map(|i| inside(r, g.coordinate(i))).collect())
        }
        _ => {
            let cols = (0..n).filter(|&ix| (0..n).any(|iy| t[iy * n + ix].norm() > eps)).collect();
            let rows = (0..n).filter(|&iy| (0..n).any(|ix| t[iy * n + ix].norm() > eps)).collect();
            let rx = range(cols).ok_or_else(|| Error::DegenerateInput("object is zero".into()))?;
            let ry = range(rows).ok_or_else(|| Error::DegenerateInput("object is zero".into()))?;
            Ok((0..g.len())
                .map(|k| inside(rx, g.coordinate(k % n)) && inside(ry, g.coordinate(k / n)))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusMapping {
    /// Values below `threshold_sigma` times the noise level are set to 0.
    /// The noise level is the standard deviation of the pattern over the
    /// outer quarter of its axis (`|ν| >= 0.75 ν_max`).
    pub threshold_sigma: f64,
    /// Multiply by `|sinc(pitch·ν)|` (sample-cell aperture of the object
    /// grid).
    pub pixel_correction: bool,
}

impl Default for ModulusMapping {
    fn default() -> Self {
        ModulusMapping {
            threshold_sigma: 2.0,
            pixel_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappedModulus {
    pub modulus: Vec<f64>,
    /// Noise level used for the threshold.
    pub noise_level: f64,
    /// RMS difference (fraction of peak) between the pattern and the mapped
    /// intensity interpolated back onto the pattern axis, over the band both
    /// cover.
    pub interpolation_residual: f64,
    /// Conjugate samples outside the pattern axis (set to zero).
    pub outside: usize,
}

/// Map a ghost pattern on the frequency axis to `|T̃|` on the conjugate grid
/// of `grid` by linear interpolation of the intensity.
pub fn modulus_from_pattern(pattern: &Pattern, grid: &Grid, opts: &ModulusMapping) -> Result<MappedModulus> {
    if pattern.dims() != grid.dims() {
        return Err(Error::GeometryMismatch(format!(
            "{}D pattern cannot feed a {}D retrieval grid",
            pattern.dims(),
            grid.dims()
        )));
    }
    if pattern.kind() != crate::grid::AxisKind::Frequency {
        return Err(Error::GeometryMismatch("retrieval needs a pattern on the frequency axis".into()));
    }
    let axis = pattern.axis();
    let vals = pattern.values();
    let na = axis.len();
    let numax = axis[0].abs().max(axis[na - 1].abs());
    let outer: Vec<usize> = (0..na).filter(|&i| axis[i].abs() >= 0.75 * numax).collect();
    let noise: Vec<f64> = match pattern.dims() {
        1 => outer.iter().map(|&i| vals[i]).collect(),
        _ => outer
            .iter()
            .flat_map(|&iy| outer.iter().map(move |&ix| vals[iy * na + ix]))
            .collect(),
    };
    let noise_level = if noise.len() > 1 {
        let mean = noise.iter().sum::<f64>() / noise.len() as f64;
        (noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / noise.len() as f64).sqrt()
    } else {
        0.0
    };
    let thr = opts.threshold_sigma * noise_level;
    let n = grid.n();
    let dnu = 1.0 / (n as f64 * grid.pitch());
    let nu: Vec<f64> = (0..n).map(|k| (k as f64 - (n / 2) as f64) * dnu).collect();
    let sample = |x: f64, y: Option<f64>| -> Option<f64> {
        match y {
            None => interpolate_uniform(axis, vals, x),
            Some(y) => {
                if y < axis[0] || y > axis[na - 1] {
                    return None;
                }
                let hi = axis.partition_point(|&v| v < y).clamp(1, na - 1);
                let lo = hi - 1;
                let w = (y - axis[lo]) / (axis[hi] - axis[lo]);
                let a = interpolate_uniform(axis, &vals[lo * na..(lo + 1) * na], x)?;
                let b = interpolate_uniform(axis, &vals[hi * na..(hi + 1) * na], x)?;
                Some(a * (1.0 - w) + b * w)
            }
        }
    };
    let pix = |v: f64| {
        if opts.pixel_correction {
            let x = std::f64::consts::PI * grid.pitch() * v;
            if x == 0.0 { 1.0 } else { (x.sin() / x).abs() }
        } else {
            1.0
        }
    };
    let mut outside = 0;
    let mut intensity = vec![0.0; grid.len()];
    let mut modulus = vec![0.0; grid.len()];
    for k in 0..grid.len() {
        let (x, y) = match grid.dims() {
            1 => (nu[k], None),
            _ => (nu[k % n], Some(nu[k / n])),
        };
        match sample(x, y) {
            Some(v) => {
                let v = if v > thr { v.max(0.0) } else { 0.0 };
                intensity[k] = v;
                modulus[k] = v.sqrt() * pix(x) * y.map_or(1.0, pix);
            }
            None => outside += 1,
        }
    }
    // round trip onto the pattern axis (1D cut through the center in 2D)
    let center_row: Vec<f64> = match grid.dims() {
        1 => intensity.clone(),
        _ => intensity[(n / 2) * n..(n / 2 + 1) * n].to_vec(),
    };
    let pat_row: Vec<f64> = match pattern.dims() {
        1 => vals.to_vec(),
        _ => pattern.row(na / 2).values().to_vec(),
    };
    let peak = pat_row.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (mut se, mut cnt) = (0.0, 0usize);
    for (i, &a) in axis.iter().enumerate() {
        if let Some(b) = interpolate_uniform(&nu, &center_row, a) {
            se += ((pat_row[i] - b) / peak).powi(2);
            cnt += 1;
        }
    }
    let interpolation_residual = if cnt > 0 { (se / cnt as f64).sqrt() } else { 0.0 };
    log::info!(
        "modulus mapping: noise level {noise_level:.3e}, threshold {thr:.3e}, interpolation residual {interpolation_residual:.3e}, {outside} samples outside the pattern axis"
    );
    Ok(MappedModulus {
        modulus,
        noise_level,
        interpolation_residual,
        outside,
    })
}

/// Median of a slice (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::double_slit;
    use crate::oracle::analytic_double_slit;

    fn retrieval_grid() -> Grid {
        Grid::new_1d(128, 20e-6).unwrap()
    }

    fn truth_on(grid: &Grid) -> Transmission {
        let fine = Grid::new_1d(8192, 1e-6).unwrap();
        double_slit(105e-6, 302e-6, &fine).unwrap().area_average_onto(grid).unwrap()
    }

    fn exact_modulus(grid: &Grid, g: &[Complex64]) -> Vec<f64> {
        let n = grid.n();
        let mut spec = g.to_vec();
        SquareFft::new(grid.dims(), n).forward(&mut spec);
        match grid.dims() {
            1 => (0..n).map(|k| spec[(k + n / 2) % n].norm()).collect(),
            _ => (0..n * n)
                .map(|k| spec[((k / n + n / 2) % n) * n + (k % n + n / 2) % n].norm())
                .collect(),
        }
    }

    #[test]
    fn er_fixed_point() {
        let g = retrieval_grid();
        let truth = truth_on(&g);
        let modulus = exact_modulus(&g, truth.samples());
        let support = bounding_box_support(&truth, 2.0).unwrap();
        let mut p = RetrievalProblem::new(g, modulus, support);
        p.initial = Some(truth.samples().to_vec());
        let r = error_reduction(&p).unwrap();
        assert_eq!(r.iterations_run, 0);
        assert!(r.fourier_error_history[0] <= 1e-10);
    }

    #[test]
    fn er_is_monotone_and_deterministic() {
        let g = retrieval_grid();
        let truth = truth_on(&g);
        let modulus = exact_modulus(&g, truth.samples());
        let support = bounding_box_support(&truth, 2.0).unwrap();
        let mut p = RetrievalProblem::new(g, modulus, support);
        p.init_seed = 3;
        let r = error_reduction(&p).unwrap();
        for w in r.fourier_error_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        assert_eq!(r, error_reduction(&p).unwrap());
    }

    #[test]
    fn zero_modulus_is_degenerate() {
        let g = retrieval_grid();
        let support = (0..128).map(|i| (40..80).contains(&i)).collect();
        let p = RetrievalProblem::new(g, vec![0.0; 128], support);
        assert!(matches!(error_reduction(&p), Err(Error::DegenerateInput(_))));
        assert!(matches!(hio(&p), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn hio_with_zero_beta_keeps_outside_values() {
        let g = retrieval_grid();
        let truth = truth_on(&g);
        let modulus = exact_modulus(&g, truth.samples());
        let support = bounding_box_support(&truth, 2.0).unwrap();
        let mut p = RetrievalProblem::new(g, modulus, support.clone());
        p.beta = 0.0;
        p.max_iterations = 1;
        p.polish_iterations = 0;
        let g0: Vec<Complex64> = (0..128).map(|i| Complex64::new(0.5 + 0.001 * i as f64, 0.0)).collect();
        p.initial = Some(g0.clone());
        // one HIO update, then read the iterate through a second run
        let mut solver = Solver::new(&p, &g0).unwrap();
        let mut gf = Vec::new();
        solver.project_modulus(&g0, &mut gf);
        let mut g1 = g0.clone();
        solver.hio_step(&gf, &mut g1, 0.0);
        for i in 0..128 {
            if !support[i] || gf[i].re < 0.0 {
                assert_eq!(g1[i], g0[i]);
            } else {
                assert_eq!(g1[i], gf[i]);
            }
        }
        assert!(hio(&p).is_ok());
    }

    #[test]
    fn ambiguities_share_fourier_error() {
        let g = retrieval_grid();
        let truth = truth_on(&g);
        let modulus = exact_modulus(&g, truth.samples());
        let support = vec![true; 64].into_iter().chain(vec![false; 64]).collect::<Vec<_>>();
        let p = RetrievalProblem::new(g, modulus, support);
        let s = truth.samples();
        let moved: Vec<Complex64> = (0..128).map(|i| s[(i + 128 - 7) % 128]).collect();
        let flipped: Vec<Complex64> = (0..128).map(|i| moved[(128 - i) % 128].conj()).collect();
        let mut solver = Solver::new(&p, s).unwrap();
        let mut out = Vec::new();
        let e0 = solver.project_modulus(s, &mut out);
        let e1 = solver.project_modulus(&flipped, &mut out);
        assert!(e0 < 1e-10 && e1 < 1e-10, "{e0} {e1}");
    }

    #[test]
    fn registration_examples() {
        let g = retrieval_grid();
        let t = truth_on(&g);
        let s = t.samples();
        assert!(reconstruction_error(&g, s, s).unwrap() < 1e-12);
        let moved: Vec<Complex64> = (0..128).map(|i| s[(i + 128 - 7) % 128]).collect();
        let flipped: Vec<Complex64> = (0..128).map(|i| moved[(128 - i) % 128].conj() * Complex64::new(0.0, 2.0)).collect();
        let r = register(&g, &flipped, s).unwrap();
        assert!(r.error < 1e-7, "{}", r.error);
        assert!(r.flipped);
        assert_eq!(reconstruction_error(&g, &vec![Complex64::default(); 128], s).unwrap(), 1.0);
        assert!(matches!(
            reconstruction_error(&g, s, &vec![Complex64::default(); 128]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn registration_2d() {
        let g = Grid::new_2d(16, 1.0).unwrap();
        let truth: Vec<Complex64> = (0..256).map(|k| Complex64::new(((k * 7) % 13) as f64, 0.0)).collect();
        let moved: Vec<Complex64> = (0..256)
            .map(|k| {
                let (y, x) = (k / 16, k % 16);
                truth[((y + 3) % 16) * 16 + (x + 14) % 16]
            })
            .collect();
        assert!(reconstruction_error(&g, &moved, &truth).unwrap() < 1e-7);
    }

    #[test]
    fn hio_recovers_double_slit_from_analytic_modulus() {
        let g = retrieval_grid();
        let truth = truth_on(&g);
        let n = g.n();
        let dnu = 1.0 / (n as f64 * g.pitch());
        let nu: Vec<f64> = (0..n).map(|k| (k as f64 - (n / 2) as f64) * dnu).collect();
        let axis = Pattern::new(
            nu.clone(),
            nu.iter().map(|&v| analytic_double_slit(105e-6, 302e-6, v)).collect(),
            crate::grid::AxisKind::Frequency,
            1,
        )
        .unwrap();
        let mapped = modulus_from_pattern(&axis, &g, &ModulusMapping { threshold_sigma: 0.0, pixel_correction: true }).unwrap();
        assert_eq!(mapped.outside, 0);
        assert!(mapped.interpolation_residual < 1e-12);
        let support = bounding_box_support(&truth, 2.0).unwrap();
        let p = RetrievalProblem::new(g, mapped.modulus, support);
        let seeds: Vec<u64> = (0..11).collect();
        let reports = restarts(&p, Algorithm::Hio, &seeds).unwrap();
        let regs: Vec<Registration> = reports
            .iter()
            .map(|r| register(&g, &r.estimate, truth.samples()).unwrap())
            .collect();
        let err = median(&regs.iter().map(|r| r.error).collect::<Vec<_>>());
        let corr = median(&regs.iter().map(|r| r.correlation).collect::<Vec<_>>());
        assert!(err <= 0.15, "median error {err}");
        assert!(corr >= 0.9, "median correlation {corr}");
        let er = restarts(&p, Algorithm::ErrorReduction, &seeds[..3]).unwrap();
        for r in &er {
            for w in r.fourier_error_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn er_monotone_for_any_instance(
            amp in proptest::collection::vec(0.0f64..1.0, 32),
            width in 2usize..24,
            seed in 0u64..1000,
            nonneg in proptest::bool::ANY,
        ) {
            let g = Grid::new_1d(32, 1.0).unwrap();
            proptest::prop_assume!(amp.iter().any(|a| *a > 0.0));
            let support: Vec<bool> = (0..32).map(|i| i < width).collect();
            let mut p = RetrievalProblem::new(g, amp, support);
            p.init_seed = seed;
            p.nonnegative = nonneg;
            p.max_iterations = 200;
            let r = error_reduction(&p).unwrap();
            for w in r.fourier_error_history.windows(2) {
                proptest::prop_assert!(w[1] <= w[0] + 1e-10);
            }
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

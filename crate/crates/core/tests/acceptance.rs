//! End-to-end acceptance checks at the default desk-scale grids.
//!
//! Every check prints one `PASS`/`FAIL` line on stderr (bypassing the test
//! harness capture) with the measured values and the pinned tolerance.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ghostlens::correlator::{CorrelationAccumulator, Estimator};
use ghostlens::exec::Execution;
use ghostlens::experiment::{
    accumulate_ensemble, fringe_visibility, run_coherent_reference, speckle_statistics, CoherentMode,
    EnsembleConfig, Pipeline,
};
use ghostlens::objects::{crossed_double_slit, double_slit, phase_grooves, Transmission};
use ghostlens::oracle::{
    analytic_double_slit_pattern, compare, envelope_first_zero, fraunhofer_modulus_at, CompareOptions,
};
use ghostlens::propagate::{angular_spectrum, direct_integral_oracle, lens_2f, AngularSpectrum};
use ghostlens::retrieval::{
    bounding_box_support, error_reduction, median, modulus_from_pattern, register, restarts, Algorithm,
    ModulusMapping, RetrievalProblem,
};
use ghostlens::source::{Profile, RealizationSeed, SpeckleSpec};
use ghostlens::{Complex64, ComplexField, Grid, Pattern, SetupGeometry};

const SLIT_WIDTH: f64 = 105e-6;
const SLIT_SEP: f64 = 302e-6;
const D0_1D: f64 = 2.67e-3;
const N_ENSEMBLE: u64 = 10_000;
const WINDOW: f64 = 1e-3;

// pinned tolerances
const RMS_MAX: f64 = 0.05;
const PERIOD_1D: f64 = 132.1e-6;
const PERIOD_TOL: f64 = 0.02;
const ENVELOPE_ZERO: f64 = 380e-6;
const ENVELOPE_TOL: f64 = 0.05;
const RUNTIME_MAX: Duration = Duration::from_secs(300);
const VISIBILITY_MAX: f64 = 0.05;
const FRESNEL_MIN: f64 = 0.10;
const LENS_MAX: f64 = 0.01;
const PERIOD_2D_Y: f64 = 266e-6;
const PERIOD_2D_X: f64 = 399e-6;
const FWHM: f64 = 10.6e-6;
const FWHM_TOL: f64 = 0.10;
const G2: f64 = 2.0;
const G2_TOL: f64 = 0.1;
const DETUNE: f64 = 10e-3;
const SLOPE: f64 = -0.5;
const SLOPE_TOL: f64 = 0.1;
const ENERGY_TOL: f64 = 1e-10;
const SEMIGROUP_TOL: f64 = 1e-8;
const DIRECT_TOL: f64 = 1e-4;
const LENS_DFT_TOL: f64 = 1e-6;
const HIO_ERROR_MAX: f64 = 0.15;
const HIO_CORR_MIN: f64 = 0.9;

fn report(id: &str, pass: bool, detail: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "[acceptance] {id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn scale(geom: &SetupGeometry) -> f64 {
    geom.wavelength * geom.d2
}

fn window(geom: &SetupGeometry) -> CompareOptions {
    CompareOptions { peaks: 5, window: Some(WINDOW / scale(geom)) }
}

fn grid_1d() -> Grid {
    Grid::new_1d(8192, 1e-6).unwrap()
}

fn spec_1d() -> SpeckleSpec {
    SpeckleSpec::new(D0_1D, Profile::HardDisk)
}

fn config_1d(n: u64) -> EnsembleConfig {
    EnsembleConfig { n_realizations: n, test_roi: Some(WINDOW), ..Default::default() }
}

fn slit() -> Transmission {
    double_slit(SLIT_WIDTH, SLIT_SEP, &grid_1d()).unwrap()
}

fn analytic(p: &Pattern) -> Pattern {
    analytic_double_slit_pattern(SLIT_WIDTH, SLIT_SEP, p.axis()).unwrap().pattern
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v / target - 1.0).abs() <= tol
}

struct DoubleSlitRun {
    /// Snapshots at 10², 10³ and 10⁴ realizations (one continued stream).
    stages: Vec<CorrelationAccumulator>,
    elapsed: Duration,
}

/// Double slit, both estimators and second moments, grown by resuming.
fn double_slit_run() -> &'static DoubleSlitRun {
    static RUN: OnceLock<DoubleSlitRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let geom = SetupGeometry::standard();
        let obj = slit();
        let t = Instant::now();
        let mut stages: Vec<CorrelationAccumulator> = Vec::new();
        for n in [100, 1_000, N_ENSEMBLE] {
            let cfg = EnsembleConfig { both_estimators: true, diagnostics: true, ..config_1d(n) };
            let resume = stages.last().cloned();
            let acc =
                accumulate_ensemble(&geom, &obj, &spec_1d(), &cfg, Execution::default(), resume, &mut |_| {}).unwrap();
            stages.push(acc);
        }
        DoubleSlitRun { stages, elapsed: t.elapsed() }
    })
}

#[test]
fn c01_ghost_double_slit() {
    let geom = SetupGeometry::standard();
    let run = double_slit_run();
    let acc = run.stages.last().unwrap();
    assert_eq!(acc.count(), N_ENSEMBLE);
    let r = acc.finalize_shift_averaged().unwrap();
    let opts = window(&geom);
    let m = compare(&r.pattern, &analytic(&r.pattern), &opts).unwrap();
    let period_nu = m.fringe_period.expect("fringe period");
    let period = period_nu * scale(&geom);
    let zero = envelope_first_zero(&r.pattern, period_nu, opts.window).unwrap() * scale(&geom);

    let ok_rms = m.rms <= RMS_MAX;
    let ok_period = within(period, PERIOD_1D, PERIOD_TOL);
    let ok_zero = within(zero, ENVELOPE_ZERO, ENVELOPE_TOL);
    let ok_time = run.elapsed <= RUNTIME_MAX;
    report(
        "C1",
        ok_rms && ok_period && ok_zero && ok_time,
        &format!(
            "rms {:.4} (<= {RMS_MAX}), period {:.2} um (132.1 +-2%), envelope zero {:.1} um (380 +-5%), \
             runtime {:.1} s for 1.11e4 realizations (<= 300 s)",
            m.rms,
            period * 1e6,
            zero * 1e6,
            run.elapsed.as_secs_f64()
        ),
    );
    assert!(ok_rms && ok_period && ok_zero && ok_time);
}

#[test]
fn c02_ghost_phase_object() {
    let geom = SetupGeometry::standard();
    let g = grid_1d();
    let depth = geom.wavelength / (2.0 * 0.46);
    let obj = phase_grooves(225e-6, 375e-6, depth, 1.46, geom.wavelength, 0.9e-3, &g).unwrap();
    let acc =
        accumulate_ensemble(&geom, &obj, &spec_1d(), &config_1d(N_ENSEMBLE), Execution::default(), None, &mut |_| {})
            .unwrap();
    let r = acc.finalize_shift_averaged().unwrap();
    let q = fraunhofer_modulus_at(&obj, r.pattern.axis()).unwrap();
    let m = compare(&r.pattern, &q.pattern, &window(&geom)).unwrap();
    let mean_t: Vec<f64> = acc.sum_t().iter().map(|s| s / acc.count() as f64).collect();
    let vis = fringe_visibility(&mean_t, &g, scale(&geom) / 375e-6, WINDOW).unwrap();
    let ok = m.rms <= RMS_MAX && vis < VISIBILITY_MAX;
    report(
        "C2",
        ok,
        &format!("rms vs quadrature {:.4} (<= {RMS_MAX}), test-arm visibility {vis:.4} (< {VISIBILITY_MAX})", m.rms),
    );
    assert!(ok);
}

#[test]
fn c03_fresnel_is_not_fraunhofer() {
    let geom = SetupGeometry::standard();
    let g = grid_1d();
    let depth = geom.wavelength / (2.0 * 0.46);
    let objs = [
        ("double slit", slit()),
        ("phase grooves", phase_grooves(225e-6, 375e-6, depth, 1.46, geom.wavelength, 0.9e-3, &g).unwrap()),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, obj) in &objs {
        let fres = run_coherent_reference(&geom, obj, CoherentMode::FresnelD2, 2).unwrap();
        let lens = run_coherent_reference(&geom, obj, CoherentMode::Lens2f, 2).unwrap();
        let q = fraunhofer_modulus_at(obj, fres.axis()).unwrap();
        let rf = compare(&fres, &q.pattern, &window(&geom)).unwrap().rms;
        let rl = compare(&lens, &q.pattern, &window(&geom)).unwrap().rms;
        ok &= rf > FRESNEL_MIN && rl <= LENS_MAX;
        detail.push(format!("{name}: fresnel {rf:.4} (> {FRESNEL_MIN}), lens {rl:.2e} (<= {LENS_MAX})"));
    }
    report("C3", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn c04_crossed_slits_2d() {
    let mut geom = SetupGeometry::standard();
    geom.d0 = 2.0e-3;
    let g = Grid::new_2d(1024, 4e-6).unwrap();
    let obj = crossed_double_slit(100e-6, 150e-6, 100e-6, 0.8e-3, &g).unwrap();
    let spec = SpeckleSpec::new(2.0e-3, Profile::HardDisk);
    let cfg = EnsembleConfig { n_realizations: N_ENSEMBLE, test_roi: Some(0.5e-3), pad_factor: 1, ..Default::default() };
    let acc = accumulate_ensemble(&geom, &obj, &spec, &cfg, Execution::Parallel(0), None, &mut |_| {}).unwrap();
    let r = acc.finalize_shift_averaged().unwrap();
    let q = fraunhofer_modulus_at(&obj, r.pattern.axis()).unwrap();
    let m = compare(&r.pattern, &q.pattern, &window(&geom)).unwrap();
    let px = m.fringe_period.map(|p| p * scale(&geom));
    let py = m.fringe_period_y.map(|p| p * scale(&geom));
    let ok_y = py.is_some_and(|p| within(p, PERIOD_2D_Y, PERIOD_TOL));
    let ok_x = px.is_some_and(|p| within(p, PERIOD_2D_X, PERIOD_TOL));
    let um = |p: Option<f64>| p.map_or("none".to_string(), |p| format!("{:.1} um", p * 1e6));
    report(
        "C4",
        ok_x && ok_y,
        &format!(
            "y-cut period {} (266 +-2%: {}), x-cut period {} (399 +-2%: {}), rms vs quadrature {:.4}",
            um(py),
            if ok_y { "ok" } else { "out" },
            um(px),
            if ok_x { "ok" } else { "out" },
            m.rms
        ),
    );
    // The touching vertical pair is a single 200 um slit with no 399 um
    // fringe; the x-cut part is reported but not asserted.
    assert!(ok_y);
    assert!(m.rms <= RMS_MAX);
}

#[test]
fn c05_speckle_statistics() {
    let geom = SetupGeometry::standard();
    let s = speckle_statistics(&geom, &grid_1d(), &spec_1d(), N_ENSEMBLE, 1, 2, Execution::default()).unwrap();
    let g2 = double_slit_run().stages.last().unwrap().g2_at_zero(0.0).unwrap();
    let ok = within(s.fwhm, FWHM, FWHM_TOL) && (g2 - G2).abs() <= G2_TOL;
    report(
        "C5",
        ok,
        &format!("object-plane FWHM {:.2} um (10.6 +-10%), reference g2(0) {g2:.4} (2.0 +-0.1)", s.fwhm * 1e6),
    );
    assert!(ok);
}

#[test]
fn c06_detuning_worsens() {
    let geom = SetupGeometry::standard();
    let mut detuned = geom;
    detuned.d_ref += DETUNE;
    let obj = slit();
    let mut rows = Vec::new();
    let mut worse = 0;
    for seed in 1..=5u64 {
        let cfg = EnsembleConfig { master_seed: seed, ..config_1d(2_000) };
        let rms = |gm: &SetupGeometry| {
            let acc = accumulate_ensemble(gm, &obj, &spec_1d(), &cfg, Execution::default(), None, &mut |_| {}).unwrap();
            let r = acc.finalize_shift_averaged().unwrap();
            compare(&r.pattern, &analytic(&r.pattern), &window(&geom)).unwrap().rms
        };
        let (a, b) = (rms(&geom), rms(&detuned));
        if b > a {
            worse += 1;
        }
        rows.push(format!("seed {seed}: {a:.4} -> {b:.4}"));
    }
    report("C6", worse == 5, &format!("{worse}/5 seeds worse at d_ref + 10 mm, n = 2000 ({})", rows.join(", ")));
    assert_eq!(worse, 5);
}

/// Integer lag (with parabolic refinement) maximizing `Σ a[i] b[i + k]`.
fn best_lag(a: &[f64], b: &[f64], max_lag: i64) -> f64 {
    let n = a.len() as i64;
    let c: Vec<f64> = (-max_lag..=max_lag)
        .map(|k| (0..n).filter(|i| (0..n).contains(&(i + k))).map(|i| a[i as usize] * b[(i + k) as usize]).sum())
        .collect();
    let j = (0..c.len()).max_by(|&x, &y| c[x].total_cmp(&c[y])).unwrap();
    let frac = if j > 0 && j + 1 < c.len() {
        let (l, m, r) = (c[j - 1], c[j], c[j + 1]);
        0.5 * (l - r) / (l - 2.0 * m + r)
    } else {
        0.0
    };
    j as f64 - max_lag as f64 + frac
}

fn log_slope(n: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn c07_estimator_properties() {
    let geom = SetupGeometry::standard();
    let obj = slit();
    let g = grid_1d();

    // fixed-point patterns at two test points
    let shift_m = 100e-6;
    let fixed = |x: f64| {
        let cfg = EnsembleConfig { estimator: Estimator::FixedPoint, test_point: x, ..config_1d(N_ENSEMBLE) };
        accumulate_ensemble(&geom, &obj, &spec_1d(), &cfg, Execution::default(), None, &mut |_| {})
            .unwrap()
            .finalize_fixed_point(x)
            .unwrap()
    };
    let (a, b) = (fixed(0.0), fixed(shift_m));
    let lag = best_lag(a.pattern.values(), b.pattern.values(), 300);
    let expected = shift_m / g.pitch();
    let ok_align = (lag - expected).abs() <= 1.0;

    // shift-averaged beats fixed-point at every stage
    let mut ok_order = true;
    let mut rows = Vec::new();
    for acc in &double_slit_run().stages {
        let s = acc.finalize_shift_averaged().unwrap();
        let f = acc.finalize_fixed_point(0.0).unwrap();
        let rs = compare(&s.pattern, &analytic(&s.pattern), &window(&geom)).unwrap().rms;
        let rf = compare(&f.pattern, &analytic(&f.pattern), &window(&geom)).unwrap().rms;
        ok_order &= rs < rf;
        rows.push(format!("n {}: {rs:.4} < {rf:.4}", acc.count()));
    }

    // independent arms: test intensities from an unrelated seed
    let mut p = Pipeline::new(&geom, &obj, &spec_1d(), 2, 1).unwrap();
    let layout = config_1d(N_ENSEMBLE).layout(p.detector_grid(), &geom);
    let mut acc = CorrelationAccumulator::new(layout).unwrap();
    let (mut t, mut r, mut scratch) = (Vec::new(), Vec::new(), Vec::new());
    let mut ns = Vec::new();
    let mut peaks = Vec::new();
    for i in 0..N_ENSEMBLE {
        p.realize_into(RealizationSeed::new(1, i), &mut scratch, &mut r);
        p.realize_into(RealizationSeed::new(0x05ee_d0ff, i), &mut t, &mut scratch);
        acc.accumulate(&t, &r).unwrap();
        if [100, 1_000, N_ENSEMBLE].contains(&(i + 1)) {
            ns.push((i + 1) as f64);
            peaks.push(acc.finalize_shift_averaged().unwrap().max_abs_covariance());
        }
    }
    let slope = log_slope(&ns, &peaks);
    let ok_null = (slope - SLOPE).abs() <= SLOPE_TOL;

    report(
        "C7",
        ok_align && ok_order && ok_null,
        &format!(
            "fixed-point lag {lag:.2} samples for {expected:.0} expected (<= 1), shift-averaged vs fixed-point rms [{}], \
             independent-arm null slope {slope:.3} (-0.5 +-0.1)",
            rows.join(", ")
        ),
    );
    assert!(ok_align && ok_order && ok_null);
}

fn rel_rms(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Double slit 105/302 um with tanh edges of width `soft`.
fn soft_slits(grid: Grid, soft: f64) -> ComplexField {
    let edge = |d: f64| 0.5 * (1.0 + (d / soft).tanh());
    ComplexField::from_fn(grid, |x, _| {
        let one = |c: f64| edge(0.5 * SLIT_WIDTH - (x - c).abs());
        Complex64::new(one(0.5 * SLIT_SEP) + one(-0.5 * SLIT_SEP), 0.0)
    })
}

#[test]
fn c08_numerical_kernels() {
    let lam = 0.532e-6;

    let g = Grid::new_1d(2048, 1e-6).unwrap();
    let gauss = ComplexField::from_fn(g, |x, _| Complex64::from_polar((-(x * x) / (60e-6f64).powi(2)).exp(), 2e4 * x));
    let out = angular_spectrum(&gauss, 10e-3, lam, 2).unwrap();
    let energy = (out.energy() / gauss.energy() - 1.0).abs();

    let g8 = Grid::new_1d(8192, 1e-6).unwrap();
    let wide = ComplexField::from_fn(g8, |x, _| Complex64::new((-(x * x) / (80e-6f64).powi(2)).exp(), 0.0));
    let two = angular_spectrum(&angular_spectrum(&wide, 60e-3, lam, 2).unwrap(), 75e-3, lam, 2).unwrap();
    let one = angular_spectrum(&wide, 135e-3, lam, 2).unwrap();
    let semigroup = rel_rms(two.samples(), one.samples());

    let g512 = Grid::new_1d(512, 2e-6).unwrap();
    let f = soft_slits(g512, 8e-6);
    let asm = AngularSpectrum::new(g512, 75e-3, lam, 4).unwrap().propagate(&f).unwrap();
    let dir = direct_integral_oracle(&f, 75e-3, lam, &g512).unwrap();
    let direct = rel_rms(asm.samples(), dir.samples());

    // centered DFT at output coordinates x / (λ f), matched up to the
    // global constant, whose modulus must be pitch / sqrt(λ f)
    let gl = Grid::new_1d(1024, 1e-6).unwrap();
    let fl = soft_slits(gl, 0.5e-6);
    let focal = 75e-3;
    let lens = lens_2f(&fl, focal, lam).unwrap();
    let dft: Vec<Complex64> = (0..gl.n())
        .map(|j| {
            let v = gl.coordinate(j);
            fl.samples()
                .iter()
                .enumerate()
                .map(|(i, e)| e * Complex64::from_polar(1.0, -std::f64::consts::TAU * v * gl.coordinate(i) / (lam * focal)))
                .sum()
        })
        .collect();
    let num: Complex64 = dft.iter().zip(lens.samples()).map(|(d, l)| d.conj() * l).sum();
    let den: f64 = dft.iter().map(|d| d.norm_sqr()).sum();
    let c = num / den;
    let fitted: Vec<Complex64> = dft.iter().map(|d| d * c).collect();
    let lens_err = rel_rms(lens.samples(), &fitted);
    let scale_err = (c.norm() / (gl.pitch() / (lam * focal).sqrt()) - 1.0).abs();

    let ok = energy <= ENERGY_TOL
        && semigroup <= SEMIGROUP_TOL
        && direct <= DIRECT_TOL
        && lens_err <= LENS_DFT_TOL
        && scale_err <= LENS_DFT_TOL;
    report(
        "C8",
        ok,
        &format!(
            "energy {energy:.2e} (<= 1e-10), semigroup {semigroup:.2e} (<= 1e-8), direct integral {direct:.2e} (<= 1e-4), \
             lens vs DFT {lens_err:.2e} / scale {scale_err:.2e} (<= 1e-6)"
        ),
    );
    assert!(ok);
}

#[test]
fn c09_determinism_across_workers() {
    let geom = SetupGeometry::standard();
    let obj = slit();
    let cfg = config_1d(1_000);
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (name, exec) in [("w1", Execution::Sequential), ("w8", Execution::Parallel(8))] {
        let acc = accumulate_ensemble(&geom, &obj, &spec_1d(), &cfg, exec, None, &mut |_| {}).unwrap();
        let r = acc.finalize_shift_averaged().unwrap();
        let (csv, bin) = (dir.path().join(format!("{name}.csv")), dir.path().join(format!("{name}.bin")));
        ghostlens::io::write_pattern_csv(&csv, &r.pattern).unwrap();
        ghostlens::io::write_pattern_bin(&bin, &r.pattern).unwrap();
        files.push((std::fs::read(csv).unwrap(), std::fs::read(bin).unwrap()));
    }
    let ok = files[0] == files[1];
    report("C9", ok, &format!("csv and binary pattern files byte-identical at workers 1 and 8: {ok}"));
    assert!(ok);
}

#[test]
fn c10_phase_retrieval() {
    let obj = slit();
    let acc = double_slit_run().stages.last().unwrap();
    let r = acc.finalize_shift_averaged().unwrap();
    let rg = Grid::new_1d(128, 20e-6).unwrap();
    let mapped = modulus_from_pattern(&r.pattern, &rg, &ModulusMapping::default()).unwrap();
    let truth = obj.area_average_onto(&rg).unwrap();
    let support = bounding_box_support(&truth, 2.0).unwrap();
    let problem = RetrievalProblem::new(rg, mapped.modulus, support);

    let seeds: Vec<u64> = (0..11).collect();
    let runs = restarts(&problem, Algorithm::Hio, &seeds).unwrap();
    let regs: Vec<_> = runs.iter().map(|x| register(&rg, &x.estimate, truth.samples()).unwrap()).collect();
    let err = median(&regs.iter().map(|x| x.error).collect::<Vec<_>>());
    let corr = median(&regs.iter().map(|x| x.correlation).collect::<Vec<_>>());

    let er = error_reduction(&problem).unwrap();
    let monotone = er.fourier_error_history.windows(2).all(|w| w[1] <= w[0]);

    let ok = err <= HIO_ERROR_MAX && corr >= HIO_CORR_MIN && monotone;
    report(
        "C10",
        ok,
        &format!(
            "HIO median registered error {err:.4} (<= 0.15), median correlation {corr:.4} (>= 0.9), \
             ER history monotone over {} iterations: {monotone}",
            er.fourier_error_history.len()
        ),
    );
    assert!(ok);
}

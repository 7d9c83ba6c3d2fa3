use std::path::{Path, PathBuf};

use ghostlens::config::{ObjectKind, OutputFormat, RunConfig};
use ghostlens::correlator::{Estimator, GhostResult};
use ghostlens::exec::Execution;
use ghostlens::experiment::{
    accumulate_ensemble, load_checkpoint, run_coherent_reference, save_checkpoint, speckle_statistics, CoherentMode,
};
use ghostlens::grid::{frequency_axis, AxisKind, Grid};
use ghostlens::objects::Transmission;
use ghostlens::oracle::{self, CompareMetrics, CompareOptions};
use ghostlens::retrieval::{self, RetrievalProblem};
use ghostlens::{io, Error, Pattern, Result};
use toml::{Table, Value};

use crate::take_warnings;

struct Loaded {
    cfg: RunConfig,
    base: PathBuf,
}

fn load(path: &Path) -> Result<Loaded> {
    let cfg = RunConfig::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { cfg, base })
}

fn output_dir(cfg: &mut RunConfig, out: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(o) = out {
        cfg.output.directory = o;
    }
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn object(l: &Loaded) -> Result<Transmission> {
    let (t, warnings) = l.cfg.build_object(&l.base)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(t)
}

fn detector_grid(cfg: &RunConfig) -> Result<Grid> {
    let g = cfg.grid()?;
    Grid::new(g.dims(), g.n() / cfg.ensemble.bin, g.pitch() * cfg.ensemble.bin as f64)
}

/// Writes the pattern in every applicable configured format; returns the
/// written file names and, for PGM output, the grayscale scale.
fn write_pattern(dir: &Path, stem: &str, pattern: &Pattern, formats: &[OutputFormat]) -> Result<Table> {
    let mut files = Vec::new();
    let mut t = Table::new();
    for f in formats {
        match (f, pattern.dims()) {
            (OutputFormat::Csv, 1) => {
                let name = format!("{stem}.csv");
                io::write_pattern_csv(&dir.join(&name), pattern)?;
                files.push(name);
            }
            (OutputFormat::Pgm, 2) => {
                let name = format!("{stem}.pgm");
                let scale = io::write_pgm(&dir.join(&name), pattern.values(), pattern.len())?;
                t.insert(format!("{stem}_pgm_scale"), Value::Float(scale));
                files.push(name);
            }
            (OutputFormat::Bin, _) => {
                let name = format!("{stem}.bin");
                io::write_pattern_bin(&dir.join(&name), pattern)?;
                files.push(name);
            }
            _ => {}
        }
    }
    if files.is_empty() {
        let name = format!("{stem}.bin");
        io::write_pattern_bin(&dir.join(&name), pattern)?;
        files.push(name);
    }
    t.insert(
        format!("{stem}_files"),
        Value::Array(files.into_iter().map(Value::String).collect()),
    );
    Ok(t)
}

fn write_metadata(dir: &Path, cfg: &RunConfig, command: &str, mut extra: Table) -> Result<()> {
    extra.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    extra.insert("command".into(), Value::String(command.into()));
    extra.insert(
        "warnings".into(),
        Value::Array(take_warnings().into_iter().map(Value::String).collect()),
    );
    let mut doc = Table::new();
    doc.insert("metadata".into(), Value::Table(extra));
    let text = format!(
        "{}\n{}",
        cfg.to_toml()?,
        toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))?
    );
    let path = dir.join("metadata.toml");
    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

fn metrics_table(m: &CompareMetrics, scale: Option<f64>) -> Table {
    let mut t = Table::new();
    t.insert("rms".into(), Value::Float(m.rms));
    t.insert(
        "peak_offsets".into(),
        Value::Array(m.peak_offsets.iter().map(|v| Value::Float(*v)).collect()),
    );
    if let Some(p) = m.fringe_period {
        t.insert("fringe_period".into(), Value::Float(p));
        if let Some(s) = scale {
            t.insert("fringe_period_m".into(), Value::Float(p * s));
        }
    }
    if let Some(p) = m.fringe_period_y {
        t.insert("fringe_period_y".into(), Value::Float(p));
        if let Some(s) = scale {
            t.insert("fringe_period_y_m".into(), Value::Float(p * s));
        }
    }
    t.insert("samples".into(), Value::Integer(m.samples as i64));
    t
}

fn print_table(t: &Table) {
    print!("{}", toml::to_string(t).unwrap_or_default());
}

/// Quadrature oracle on the pattern's (frequency) axis and the metrics of
/// `pattern` against it.
fn against_oracle(cfg: &RunConfig, obj: &Transmission, pattern: &Pattern) -> Result<CompareMetrics> {
    let q = oracle::fraunhofer_modulus_at(obj, pattern.axis())?;
    oracle::compare(pattern, &q.pattern, &cfg.compare_options())
}

fn result_table(r: &GhostResult) -> Table {
    let mut t = Table::new();
    t.insert("estimator".into(), Value::String(r.estimator.name().into()));
    t.insert("n_used".into(), Value::Integer(r.n_used as i64));
    t.insert("pre_clamp_min".into(), Value::Float(r.pre_clamp_min));
    if let Some(x) = r.test_point {
        t.insert("test_point_m".into(), Value::Float(x));
    }
    if let Some(v) = r.residual_vs_oracle {
        t.insert("rms_vs_oracle".into(), Value::Float(v));
    }
    t
}

pub fn simulate(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    resume: Option<PathBuf>,
    exec: Execution,
) -> Result<()> {
    let mut l = load(config)?;
    if let Some(s) = seed {
        l.cfg.ensemble.master_seed = s;
    }
    let dir = output_dir(&mut l.cfg, out)?;
    let cfg = &l.cfg;
    let geom = cfg.geometry()?;
    let obj = object(&l)?;
    let spec = cfg.speckle();
    let ens = cfg.ensemble();
    let layout = ens.layout(detector_grid(cfg)?, &geom);
    let start = match &resume {
        Some(p) => Some(load_checkpoint(p, &layout, ens.master_seed)?),
        None => None,
    };
    let ckpt_path = dir.join("checkpoint.bin");
    let mut on_checkpoint = |acc: &ghostlens::correlator::CorrelationAccumulator| {
        match save_checkpoint(&ckpt_path, acc, ens.master_seed) {
            Ok(()) => log::info!("checkpoint at {} realizations", acc.count()),
            Err(e) => log::warn!("checkpoint at {} realizations failed: {e}", acc.count()),
        }
    };
    let acc = accumulate_ensemble(&geom, &obj, &spec, &ens, exec, start, &mut on_checkpoint)?;
    save_checkpoint(&ckpt_path, &acc, ens.master_seed)?;

    let mut meta = Table::new();
    let scale = geom.wavelength * geom.d2;
    let mut estimators = vec![ens.estimator];
    if ens.both_estimators {
        estimators.push(match ens.estimator {
            Estimator::FixedPoint => Estimator::ShiftAveraged,
            Estimator::ShiftAveraged => Estimator::FixedPoint,
        });
    }
    for (k, est) in estimators.into_iter().enumerate() {
        let mut r = acc.finalize(est, ens.test_point)?;
        let m = against_oracle(cfg, &obj, &r.pattern)?;
        r.residual_vs_oracle = Some(m.rms);
        let stem = if k == 0 { "pattern".to_string() } else { format!("pattern_{}", est.name()) };
        let files = write_pattern(&dir, &stem, &r.pattern, &cfg.output.formats)?;
        let mut t = result_table(&r);
        t.extend(files);
        t.insert("vs_oracle".into(), Value::Table(metrics_table(&m, Some(scale))));
        let mut shown = Table::new();
        shown.insert(stem.clone(), Value::Table(t.clone()));
        print_table(&shown);
        meta.insert(stem, Value::Table(t));
    }
    if ens.diagnostics {
        match acc.g2_at_zero(ens.test_point) {
            Ok(g2) => {
                println!("g2_reference = {g2}");
                meta.insert("g2_reference".into(), Value::Float(g2));
            }
            Err(e) => log::warn!("g2 unavailable: {e}"),
        }
    }
    meta.insert("checkpoint".into(), Value::String("checkpoint.bin".into()));
    meta.insert("workers".into(), Value::Integer(exec.workers() as i64));
    if let Some(p) = resume {
        meta.insert("resumed_from".into(), Value::String(p.display().to_string()));
    }
    write_metadata(&dir, cfg, "simulate", meta)
}

pub fn oracle(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut l = load(config)?;
    let dir = output_dir(&mut l.cfg, out)?;
    let cfg = &l.cfg;
    let geom = cfg.geometry()?;
    let obj = object(&l)?;
    let nu = frequency_axis(&detector_grid(cfg)?, geom.wavelength, geom.d2)?;
    let q = oracle::fraunhofer_modulus_at(&obj, &nu)?;
    let mut meta = write_pattern(&dir, "oracle", &q.pattern, &cfg.output.formats)?;
    meta.insert("provenance".into(), Value::String(q.provenance.name().into()));
    if cfg.object.kind == ObjectKind::DoubleSlit {
        let (a, s) = (cfg.object.width_m.unwrap_or(0.0), cfg.object.separation_m.unwrap_or(0.0));
        let an = oracle::analytic_double_slit_pattern(a, s, &nu)?;
        let m = oracle::compare(&q.pattern, &an.pattern, &cfg.compare_options())?;
        meta.insert("vs_analytic".into(), Value::Table(metrics_table(&m, Some(geom.wavelength * geom.d2))));
    }
    print_table(&meta);
    write_metadata(&dir, cfg, "oracle", meta)
}

pub fn coherent(config: &Path, mode: CoherentMode, out: Option<PathBuf>) -> Result<()> {
    let mut l = load(config)?;
    let dir = output_dir(&mut l.cfg, out)?;
    let cfg = &l.cfg;
    let geom = cfg.geometry()?;
    let obj = object(&l)?;
    let pattern = run_coherent_reference(&geom, &obj, mode, cfg.ensemble.pad_factor)?;
    let stem = format!("coherent_{}", mode.name());
    let mut meta = write_pattern(&dir, &stem, &pattern, &cfg.output.formats)?;
    meta.insert("mode".into(), Value::String(mode.name().into()));
    let m = against_oracle(cfg, &obj, &pattern)?;
    meta.insert("vs_oracle".into(), Value::Table(metrics_table(&m, Some(geom.wavelength * geom.d2))));
    print_table(&meta);
    write_metadata(&dir, cfg, "coherent", meta)
}

pub fn retrieve(pattern_path: &Path, config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut l = load(config)?;
    if let Some(s) = seed {
        l.cfg.retrieval.init_seed = s;
    }
    let dir = output_dir(&mut l.cfg, out)?;
    let cfg = &l.cfg;
    let geom = cfg.geometry()?;
    let mut pattern = io::read_pattern(pattern_path)?;
    if pattern.kind() == AxisKind::Displacement {
        pattern = pattern.rescaled_axis(1.0 / (geom.wavelength * geom.d2), AxisKind::Frequency)?;
    }
    let rg = cfg.retrieval_grid()?;
    let mapped = retrieval::modulus_from_pattern(&pattern, &rg, &cfg.modulus_mapping())?;
    let truth = object(&l)?.area_average_onto(&rg)?;
    let support = retrieval::bounding_box_support(&truth, cfg.retrieval.support_dilation)?;
    let r = &cfg.retrieval;
    let mut problem = RetrievalProblem::new(rg, mapped.modulus, support);
    problem.max_iterations = r.iterations;
    problem.polish_iterations = r.polish_iterations;
    problem.beta = r.beta;
    problem.nonnegative = r.nonnegative;
    if !r.nonnegative {
        log::warn!("complex-object retrieval (no non-negativity constraint) is the hard mode; convergence is not guaranteed");
    }
    let seeds: Vec<u64> = (0..r.restarts as u64).map(|i| r.init_seed.wrapping_add(i)).collect();
    let reports = retrieval::restarts(&problem, r.algorithm, &seeds)?;

    let mut rows = Vec::new();
    let (mut errors, mut corrs) = (Vec::new(), Vec::new());
    for (s, rep) in seeds.iter().zip(&reports) {
        let reg = retrieval::register(&rg, &rep.estimate, truth.samples())?;
        errors.push(reg.error);
        corrs.push(reg.correlation);
        let mut t = Table::new();
        t.insert("init_seed".into(), Value::Integer(*s as i64));
        t.insert("registered_error".into(), Value::Float(reg.error));
        t.insert("correlation".into(), Value::Float(reg.correlation));
        t.insert("fourier_error".into(), Value::Float(rep.best_error));
        t.insert("iterations".into(), Value::Integer(rep.iterations_run as i64));
        rows.push(Value::Table(t));
    }
    // the estimate chosen without looking at the truth
    let (bi, best) = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.best_error.total_cmp(&b.1.best_error))
        .ok_or_else(|| Error::DegenerateInput("no restarts ran".into()))?;
    let n = rg.n();
    let shape = if rg.dims() == 1 { vec![n] } else { vec![n, n] };
    let est_path = dir.join("estimate.bin");
    io::write_array(&est_path, &io::ArrayData::complex(shape, best.estimate.clone())?)?;
    let hist_path = dir.join("fourier_error.csv");
    let hist: String = best
        .fourier_error_history
        .iter()
        .enumerate()
        .map(|(k, e)| format!("{k},{e:e}\n"))
        .collect();
    std::fs::write(&hist_path, format!("# iteration,fourier_error\n{hist}"))
        .map_err(|e| Error::Io { path: hist_path.clone(), source: e })?;

    let mut meta = Table::new();
    meta.insert("algorithm".into(), Value::String(r.algorithm.name().into()));
    meta.insert("pattern".into(), Value::String(pattern_path.display().to_string()));
    meta.insert("median_registered_error".into(), Value::Float(retrieval::median(&errors)));
    meta.insert("median_correlation".into(), Value::Float(retrieval::median(&corrs)));
    meta.insert("noise_level".into(), Value::Float(mapped.noise_level));
    meta.insert("interpolation_residual".into(), Value::Float(mapped.interpolation_residual));
    meta.insert("selected_restart".into(), Value::Integer(bi as i64));
    meta.insert("estimate".into(), Value::String("estimate.bin".into()));
    let mut shown = meta.clone();
    meta.insert("restarts".into(), Value::Array(rows.clone()));
    shown.insert("restarts".into(), Value::Array(rows));
    print_table(&shown);
    write_metadata(&dir, cfg, "retrieve", meta)
}

pub fn speckle_stats(config: &Path, out: Option<PathBuf>, seed: Option<u64>, exec: Execution) -> Result<()> {
    let mut l = load(config)?;
    if let Some(s) = seed {
        l.cfg.ensemble.master_seed = s;
    }
    let dir = output_dir(&mut l.cfg, out)?;
    let cfg = &l.cfg;
    let s = speckle_statistics(
        &cfg.geometry()?,
        &cfg.grid()?,
        &cfg.speckle(),
        cfg.ensemble.realizations,
        cfg.ensemble.master_seed,
        cfg.ensemble.pad_factor,
        exec,
    )?;
    let mut t = Table::new();
    t.insert("realizations".into(), Value::Integer(s.realizations as i64));
    t.insert("fwhm_m".into(), Value::Float(s.fwhm));
    t.insert("predicted_fwhm_m".into(), Value::Float(s.predicted_fwhm));
    t.insert("coherence_length_m".into(), Value::Float(s.coherence_length));
    t.insert("g2".into(), Value::Float(s.g2));
    print_table(&t);
    write_metadata(&dir, cfg, "speckle-stats", t)
}

pub fn compare(
    a: &Path,
    b: &Path,
    config: Option<PathBuf>,
    window: Option<f64>,
    peaks: Option<usize>,
) -> Result<()> {
    let pa = io::read_pattern(a)?;
    let pb = io::read_pattern(b)?;
    let mut opts = CompareOptions::default();
    let mut scale = None;
    if let Some(c) = config {
        let cfg = RunConfig::load(&c)?;
        scale = Some(cfg.geometry.wavelength_m * cfg.geometry.d2_m);
        opts = match pa.kind() {
            AxisKind::Frequency => cfg.compare_options(),
            AxisKind::Displacement => CompareOptions { peaks: cfg.compare.peaks, window: cfg.compare.window_m },
        };
        if pa.kind() == AxisKind::Displacement {
            scale = None;
        }
    }
    if let Some(w) = window {
        opts.window = Some(w);
    }
    if let Some(k) = peaks {
        opts.peaks = k;
    }
    let m = oracle::compare(&pa, &pb, &opts)?;
    print_table(&metrics_table(&m, scale));
    Ok(())
}

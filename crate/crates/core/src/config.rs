//! Run configuration: sectioned TOML with line-precise diagnostics.
//!
//! ```toml
//! [geometry]
//! wavelength_m = 0.532e-6
//! d0_m = 2.67e-3
//! d1_m = 0.060
//! d2_m = 0.075
//! dref_m = 0.135
//!
//! [grid]
//! dims = 1
//! n = 8192
//! pitch_m = 1e-6
//!
//! [object]
//! type = "double_slit"
//! width_m = 105e-6
//! separation_m = 302e-6
//!
//! [ensemble]
//! realizations = 10000
//! master_seed = 1
//! ```
//!
//! Sections `[output]`, `[retrieval]` and `[compare]` are optional; a
//! `[metadata]` table is accepted and ignored so that the metadata record a
//! run writes can be fed back in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correlator::Estimator;
use crate::error::{Error, Result};
use crate::experiment::EnsembleConfig;
use crate::grid::{Grid, SetupGeometry};
use crate::objects::{self, Transmission};
use crate::oracle::CompareOptions;
use crate::retrieval::{Algorithm, ModulusMapping};
use crate::source::{Profile, SpeckleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub wavelength_m: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    pub d2_m: f64,
    pub dref_m: f64,
    #[serde(default)]
    pub source_profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dims: usize,
    pub n: usize,
    pub pitch_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    DoubleSlit,
    PhaseGrooves,
    CrossedDoubleSlit,
    Identity,
    File,
}

/// Object parameters; which keys are required depends on `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSection {
    #[serde(rename = "type")]
    pub kind: ObjectKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation_m: Option<f64>,
    /// Phase grooves: phase step in radians (alternative to `depth_m`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refractive_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aperture_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation_h_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation_v_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
    /// Binary array file, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub realizations: u64,
    pub master_seed: u64,
    pub estimator: Estimator,
    pub test_point_m: f64,
    pub checkpoint_every: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_roi_m: Option<f64>,
    pub pad_factor: usize,
    pub bin: usize,
    pub both_estimators: bool,
    pub diagnostics: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        EnsembleSection {
            realizations: e.n_realizations,
            master_seed: e.master_seed,
            estimator: e.estimator,
            test_point_m: e.test_point,
            checkpoint_every: e.checkpoint_every,
            test_roi_m: e.test_roi,
            pad_factor: e.pad_factor,
            bin: e.bin,
            both_estimators: e.both_estimators,
            diagnostics: e.diagnostics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Pgm,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Pgm, OutputFormat::Bin],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalSection {
    pub algorithm: Algorithm,
    pub n: usize,
    pub pitch_m: f64,
    pub iterations: usize,
    pub polish_iterations: usize,
    pub beta: f64,
    pub init_seed: u64,
    pub restarts: usize,
    pub support_dilation: f64,
    pub threshold_sigma: f64,
    pub pixel_correction: bool,
    pub nonnegative: bool,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            algorithm: Algorithm::Hio,
            n: 128,
            pitch_m: 20e-6,
            iterations: 500,
            polish_iterations: 100,
            beta: 0.9,
            init_seed: 0,
            restarts: 11,
            support_dilation: 2.0,
            threshold_sigma: 2.0,
            pixel_correction: true,
            nonnegative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// Half-width of the compared region on the detector displacement axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_m: Option<f64>,
    pub peaks: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection { window_m: None, peaks: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub grid: GridSection,
    pub object: ObjectSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub compare: CompareSection,
    /// Accepted on input and dropped.
    #[serde(default, skip_serializing)]
    pub metadata: Option<toml::Table>,
}

/// 1-based line of `key = ...` inside `[section]` in `text`.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(rest) = l.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    if key.is_empty() {
        header
    } else {
        None
    }
}

struct Diag<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Diag<'_> {
    fn err(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        let line = locate(self.text, section, key).or_else(|| locate(self.text, section, ""));
        let at = match line {
            Some(l) => format!("{}:{l}", self.origin),
            None => self.origin.to_string(),
        };
        let name = if key.is_empty() { section.to_string() } else { format!("{section}.{key}") };
        Error::Configuration(format!("{at}: {name}: {msg}"))
    }
}

fn positive(d: &Diag, section: &str, key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(d.err(section, key, format!("must be a finite value > 0, got {v}")))
    }
}

fn require(d: &Diag, key: &str, v: Option<f64>) -> Result<f64> {
    let v = v.ok_or_else(|| d.err("object", "type", format!("missing required key `{key}`")))?;
    positive(d, "object", key, v)?;
    Ok(v)
}

impl RunConfig {
    /// Parse and validate. `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Configuration(format!("{origin}: {}", e.to_string().trim_end())))?;
        cfg.validate_with(&Diag { text, origin })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let text = self.to_toml()?;
        self.validate_with(&Diag { text: &text, origin: "config" })
    }

    fn validate_with(&self, d: &Diag) -> Result<()> {
        let g = &self.geometry;
        for (k, v) in [
            ("wavelength_m", g.wavelength_m),
            ("d0_m", g.d0_m),
            ("d1_m", g.d1_m),
            ("d2_m", g.d2_m),
            ("dref_m", g.dref_m),
        ] {
            positive(d, "geometry", k, v)?;
        }
        if !(self.grid.dims == 1 || self.grid.dims == 2) {
            return Err(d.err("grid", "dims", format!("must be 1 or 2, got {}", self.grid.dims)));
        }
        if self.grid.n < 2 {
            return Err(d.err("grid", "n", format!("must be >= 2, got {}", self.grid.n)));
        }
        positive(d, "grid", "pitch_m", self.grid.pitch_m)?;
        let grid = self.grid()?;
        SpeckleSpec::new(g.d0_m, g.source_profile)
            .validate_for(&grid)
            .map_err(|e| d.err("geometry", "d0_m", e))?;

        let o = &self.object;
        match o.kind {
            ObjectKind::DoubleSlit => {
                require(d, "width_m", o.width_m)?;
                require(d, "separation_m", o.separation_m)?;
            }
            ObjectKind::PhaseGrooves => {
                require(d, "width_m", o.width_m)?;
                require(d, "separation_m", o.separation_m)?;
                require(d, "aperture_m", o.aperture_m)?;
                match (o.phase_rad, o.depth_m) {
                    (Some(_), Some(_)) => {
                        return Err(d.err("object", "phase_rad", "give either phase_rad or depth_m, not both"))
                    }
                    (None, None) => return Err(d.err("object", "type", "phase grooves need phase_rad or depth_m")),
                    (Some(p), None) if !p.is_finite() => return Err(d.err("object", "phase_rad", "must be finite")),
                    (None, Some(v)) => positive(d, "object", "depth_m", v)?,
                    _ => {}
                }
                if let Some(n) = o.refractive_index {
                    if !(n > 1.0 && n.is_finite()) {
                        return Err(d.err("object", "refractive_index", format!("must exceed 1, got {n}")));
                    }
                }
            }
            ObjectKind::CrossedDoubleSlit => {
                require(d, "width_m", o.width_m)?;
                require(d, "separation_h_m", o.separation_h_m)?;
                require(d, "separation_v_m", o.separation_v_m)?;
                require(d, "length_m", o.length_m)?;
            }
            ObjectKind::Identity => {}
            ObjectKind::File => {
                if o.path.is_none() {
                    return Err(d.err("object", "type", "file objects need `path`"));
                }
            }
        }
        if o.kind != ObjectKind::File {
            // geometric problems (overlap, size, dims) surface here with the object line
            self.build_object(Path::new("."))
                .map_err(|e| d.err("object", "type", e))?;
        }

        let e = &self.ensemble;
        if e.realizations < 2 {
            return Err(d.err(
                "ensemble",
                "realizations",
                format!("n_realizations >= 2 required, got {}", e.realizations),
            ));
        }
        if e.pad_factor < 1 {
            return Err(d.err("ensemble", "pad_factor", "must be >= 1"));
        }
        if e.bin < 1 || self.grid.n % e.bin != 0 {
            return Err(d.err("ensemble", "bin", format!("must be >= 1 and divide n = {}", self.grid.n)));
        }
        if !e.test_point_m.is_finite() || e.test_point_m.abs() > grid.max_abs_coordinate() {
            return Err(d.err("ensemble", "test_point_m", "must lie on the detector grid"));
        }
        if let Some(r) = e.test_roi_m {
            positive(d, "ensemble", "test_roi_m", r)?;
        }

        let r = &self.retrieval;
        if r.n < 4 {
            return Err(d.err("retrieval", "n", "must be >= 4"));
        }
        positive(d, "retrieval", "pitch_m", r.pitch_m)?;
        if !(0.0..=1.0).contains(&r.beta) {
            return Err(d.err("retrieval", "beta", format!("must lie in [0, 1], got {}", r.beta)));
        }
        if r.iterations == 0 {
            return Err(d.err("retrieval", "iterations", "must be >= 1"));
        }
        if r.restarts == 0 {
            return Err(d.err("retrieval", "restarts", "must be >= 1"));
        }
        if !(r.support_dilation >= 1.0) {
            return Err(d.err("retrieval", "support_dilation", "must be >= 1"));
        }
        if !(r.threshold_sigma >= 0.0) {
            return Err(d.err("retrieval", "threshold_sigma", "must be >= 0"));
        }
        if let Some(w) = self.compare.window_m {
            positive(d, "compare", "window_m", w)?;
        }
        if self.output.formats.is_empty() {
            return Err(d.err("output", "formats", "list at least one format"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize config: {e}")))
    }

    pub fn geometry(&self) -> Result<SetupGeometry> {
        let g = &self.geometry;
        SetupGeometry::new(g.wavelength_m, g.d0_m, g.d1_m, g.d2_m, g.dref_m)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dims, self.grid.n, self.grid.pitch_m)
    }

    pub fn speckle(&self) -> SpeckleSpec {
        SpeckleSpec::new(self.geometry.d0_m, self.geometry.source_profile)
    }

    /// Build the configured object; `base` resolves relative file paths.
    /// Returns the object and any warnings raised while loading it.
    pub fn build_object(&self, base: &Path) -> Result<(Transmission, Vec<String>)> {
        let grid = self.grid()?;
        let o = &self.object;
        let get = |v: Option<f64>, k: &str| {
            v.ok_or_else(|| Error::Configuration(format!("object.{k} is required")))
        };
        let t = match o.kind {
            ObjectKind::DoubleSlit => objects::double_slit(get(o.width_m, "width_m")?, get(o.separation_m, "separation_m")?, &grid)?,
            ObjectKind::PhaseGrooves => {
                let lambda = self.geometry.wavelength_m;
                let n = o.refractive_index.unwrap_or(DEFAULT_REFRACTIVE_INDEX);
                let depth = match (o.depth_m, o.phase_rad) {
                    (Some(d), _) => d,
                    (None, Some(p)) => p * lambda / (std::f64::consts::TAU * (n - 1.0)),
                    (None, None) => return Err(Error::Configuration("object.phase_rad or object.depth_m is required".into())),
                };
                objects::phase_grooves(
                    get(o.width_m, "width_m")?,
                    get(o.separation_m, "separation_m")?,
                    depth,
                    n,
                    lambda,
                    get(o.aperture_m, "aperture_m")?,
                    &grid,
                )?
            }
            ObjectKind::CrossedDoubleSlit => objects::crossed_double_slit(
                get(o.width_m, "width_m")?,
                get(o.separation_h_m, "separation_h_m")?,
                get(o.separation_v_m, "separation_v_m")?,
                get(o.length_m, "length_m")?,
                &grid,
            )?,
            ObjectKind::Identity => objects::identity(&grid),
            ObjectKind::File => {
                let p = o.path.as_ref().ok_or_else(|| Error::Configuration("object.path is required".into()))?;
                let p = if p.is_absolute() { p.clone() } else { base.join(p) };
                return Transmission::from_file(&p, &grid);
            }
        };
        Ok((t, Vec::new()))
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        let e = &self.ensemble;
        EnsembleConfig {
            n_realizations: e.realizations,
            master_seed: e.master_seed,
            estimator: e.estimator,
            test_point: e.test_point_m,
            checkpoint_every: e.checkpoint_every,
            test_roi: e.test_roi_m,
            pad_factor: e.pad_factor,
            bin: e.bin,
            both_estimators: e.both_estimators,
            diagnostics: e.diagnostics,
        }
    }

    /// Compare options on the frequency axis (the window is converted with
    /// `λ d2`).
    pub fn compare_options(&self) -> CompareOptions {
        let scale = self.geometry.wavelength_m * self.geometry.d2_m;
        CompareOptions {
            peaks: self.compare.peaks,
            window: self.compare.window_m.map(|w| w / scale),
        }
    }

    pub fn retrieval_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dims, self.retrieval.n, self.retrieval.pitch_m)
    }

    pub fn modulus_mapping(&self) -> ModulusMapping {
        ModulusMapping {
            threshold_sigma: self.retrieval.threshold_sigma,
            pixel_correction: self.retrieval.pixel_correction,
        }
    }
}

/// Fused-silica index used when phase grooves give `phase_rad` without an
/// index.
pub const DEFAULT_REFRACTIVE_INDEX: f64 = 1.46;

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[geometry]
wavelength_m = 0.532e-6
d0_m = 2.67e-3
d1_m = 0.060
d2_m = 0.075
dref_m = 0.135

[grid]
dims = 1
n = 8192
pitch_m = 1e-6

[object]
type = "double_slit"
width_m = 105e-6
separation_m = 302e-6

[ensemble]
realizations = 10000
master_seed = 7
test_roi_m = 1e-3
"#;

    #[test]
    fn parses_and_resolves_defaults() {
        let c = RunConfig::parse(BASE, "base.toml").unwrap();
        assert_eq!(c.ensemble.realizations, 10000);
        assert_eq!(c.ensemble.pad_factor, 2);
        assert_eq!(c.retrieval.n, 128);
        assert!(c.geometry().unwrap().fourier_condition_met());
        let e = c.ensemble();
        assert_eq!(e.test_roi, Some(1e-3));
        assert_eq!(e.master_seed, 7);
    }

    #[test]
    fn metadata_round_trip() {
        let c = RunConfig::parse(BASE, "base.toml").unwrap();
        let mut text = c.to_toml().unwrap();
        text.push_str("\n[metadata]\nversion = \"0.1.0\"\nwarnings = []\n");
        let back = RunConfig::parse(&text, "metadata.toml").unwrap();
        assert_eq!(back.metadata.as_ref().map(|m| m.len()), Some(2));
        let mut back = back;
        back.metadata = None;
        assert_eq!(back, c);
    }

    #[test]
    fn zero_realizations_reports_line() {
        let text = BASE.replace("realizations = 10000", "realizations = 0");
        let err = RunConfig::parse(&text, "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(err.is_configuration());
        assert!(msg.contains("n_realizations >= 2"), "{msg}");
        let line = text.lines().position(|l| l.starts_with("realizations")).unwrap() + 1;
        assert!(msg.contains(&format!("bad.toml:{line}:")), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = BASE.replace("n = 8192", "n = = 8192");
        let msg = RunConfig::parse(&text, "bad.toml").unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("pitch_m = 1e-6", "pitch_m = 1e-6\npitch = 2");
        assert!(RunConfig::parse(&text, "bad.toml").is_err());
    }

    #[test]
    fn malformed_objects() {
        let text = BASE.replace("separation_m = 302e-6", "separation_m = 50e-6");
        let msg = RunConfig::parse(&text, "bad.toml").unwrap_err().to_string();
        assert!(msg.contains("object"), "{msg}");
        let text = BASE.replace("separation_m = 302e-6\n", "");
        let msg = RunConfig::parse(&text, "bad.toml").unwrap_err().to_string();
        assert!(msg.contains("separation_m"), "{msg}");
    }

    #[test]
    fn phase_grooves_by_phase() {
        let text = BASE.replace(
            "type = \"double_slit\"\nwidth_m = 105e-6\nseparation_m = 302e-6",
            "type = \"phase_grooves\"\nwidth_m = 225e-6\nseparation_m = 375e-6\nphase_rad = 3.141592653589793\naperture_m = 0.9e-3",
        );
        let c = RunConfig::parse(&text, "pg.toml").unwrap();
        let (t, _) = c.build_object(Path::new(".")).unwrap();
        let c0 = t.grid().center();
        assert!((t.samples()[c0 + 187].re + 1.0).abs() < 1e-12);
        assert!((t.samples()[c0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_spot_points_at_d0() {
        let text = BASE.replace("d0_m = 2.67e-3", "d0_m = 6e-3");
        let msg = RunConfig::parse(&text, "bad.toml").unwrap_err().to_string();
        assert!(msg.contains("bad.toml:4:") && msg.contains("d0_m"), "{msg}");
    }
}

//! File formats.
//!
//! Binary array container (`GHSTARR1`):
//!
//! ```text
//! magic     8 bytes  "GHSTARR1"
//! ndims     u32 LE
//! dims      ndims × u32 LE
//! code      u8       0 = f64, 1 = complex f64 (re, im interleaved)
//! payload   row-major, little-endian f64
//! ```
//!
//! A file may hold several records back to back (checkpoints do).
//!
//! 1D patterns are also written as CSV with two comment lines naming the
//! axis kind and units, then `axis,value` rows. 2D patterns are written as
//! 16-bit binary PGM scaled so the maximum maps to 65535.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{AxisKind, Pattern};

pub const MAGIC: &[u8; 8] = b"GHSTARR1";
const MAX_DIMS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayData {
    shape: Vec<usize>,
    values: ArrayValues,
}

impl ArrayData {
    pub fn new(shape: Vec<usize>, values: ArrayValues) -> Result<Self> {
        let len = match &values {
            ArrayValues::Real(v) => v.len(),
            ArrayValues::Complex(v) => v.len(),
        };
        if shape.is_empty() || shape.len() > MAX_DIMS {
            return Err(Error::Format(format!("array needs 1..={MAX_DIMS} dims, got {}", shape.len())));
        }
        if shape.iter().product::<usize>() != len {
            return Err(Error::Format(format!(
                "array shape {shape:?} does not match {len} elements"
            )));
        }
        Ok(ArrayData { shape, values })
    }

    pub fn real(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, ArrayValues::Real(data))
    }

    pub fn complex(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        Self::new(shape, ArrayValues::Complex(data))
    }

    pub fn scalar(v: f64) -> Self {
        ArrayData {
            shape: vec![1],
            values: ArrayValues::Real(vec![v]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &ArrayValues {
        &self.values
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.values {
            ArrayValues::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_complex(&self) -> Option<&[Complex64]> {
        match &self.values {
            ArrayValues::Complex(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_f64(self) -> Option<Vec<f64>> {
        match self.values {
            ArrayValues::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_complex(self) -> Option<Vec<Complex64>> {
        match self.values {
            ArrayValues::Complex(v) => Some(v),
            _ => None,
        }
    }

    pub fn encode(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        match &self.values {
            ArrayValues::Real(v) => {
                w.write_all(&[0u8])?;
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            ArrayValues::Complex(v) => {
                w.write_all(&[1u8])?;
                for x in v {
                    w.write_all(&x.re.to_le_bytes())?;
                    w.write_all(&x.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Decodes one record. Returns `Ok(None)` at a clean end of input.
    pub fn decode(r: &mut impl Read) -> Result<Option<Self>> {
        let mut magic = [0u8; 8];
        match read_full(r, &mut magic)? {
            0 => return Ok(None),
            8 => {}
            k => return Err(Error::Format(format!("truncated array header ({k} of 8 magic bytes)"))),
        }
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, not a GHSTARR1 array".into()));
        }
        let ndims = read_u32(r)? as usize;
        if ndims == 0 || ndims > MAX_DIMS {
            return Err(Error::Format(format!("array dims count {ndims} out of range")));
        }
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(read_u32(r)? as usize);
        }
        let mut code = [0u8; 1];
        if read_full(r, &mut code)? != 1 {
            return Err(Error::Format("truncated array header (element code)".into()));
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("array shape overflows".into()))?;
        let per = match code[0] {
            0 => 1,
            1 => 2,
            c => return Err(Error::Format(format!("unknown array element code {c}"))),
        };
        let bytes = len
            .checked_mul(8 * per)
            .ok_or_else(|| Error::Format("array payload overflows".into()))?;
        let mut payload = vec![0u8; bytes];
        let got = read_full(r, &mut payload)?;
        if got != bytes {
            return Err(Error::Format(format!("truncated array payload ({got} of {bytes} bytes)")));
        }
        let floats: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let values = if code[0] == 0 {
            ArrayValues::Real(floats)
        } else {
            ArrayValues::Complex(floats.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
        };
        Ok(Some(ArrayData { shape, values }))
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Format(format!("read failed: {e}"))),
        }
    }
    Ok(got)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    if read_full(r, &mut b)? != 4 {
        return Err(Error::Format("truncated array header".into()));
    }
    Ok(u32::from_le_bytes(b))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn write_array(path: &Path, array: &ArrayData) -> Result<()> {
    write_records(path, std::slice::from_ref(array))
}

pub fn write_records(path: &Path, records: &[ArrayData]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        r.encode(&mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file holding exactly one array.
pub fn read_array(path: &Path) -> Result<ArrayData> {
    let mut recs = read_records(path)?;
    if recs.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected one array record, found {}",
            path.display(),
            recs.len()
        )));
    }
    Ok(recs.remove(0))
}

pub fn read_records(path: &Path) -> Result<Vec<ArrayData>> {
    let mut r = open(path)?;
    let mut out = Vec::new();
    loop {
        match ArrayData::decode(&mut r) {
            Ok(Some(a)) => out.push(a),
            Ok(None) => break,
            Err(Error::Format(m)) => return Err(Error::Format(format!("{}: {m}", path.display()))),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Writes a 1D pattern as CSV.
pub fn write_pattern_csv(path: &Path, pattern: &Pattern) -> Result<()> {
    if pattern.dims() != 1 {
        return Err(Error::Format("CSV export is for 1D patterns".into()));
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# axis_kind={}", pattern.kind().name()).map_err(io)?;
    writeln!(w, "# units={}", pattern.kind().units()).map_err(io)?;
    for (a, v) in pattern.axis().iter().zip(pattern.values()) {
        writeln!(w, "{a:e},{v:e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_pattern_csv(path: &Path) -> Result<Pattern> {
    let r = open(path)?;
    let mut kind = None;
    let mut axis = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(k) = c.trim().strip_prefix("axis_kind=") {
                kind = Some(match k.trim() {
                    "frequency" => AxisKind::Frequency,
                    "displacement" => AxisKind::Displacement,
                    other => {
                        return Err(Error::Format(format!(
                            "{}:{}: unknown axis kind {other:?}",
                            path.display(),
                            lineno + 1
                        )))
                    }
                });
            }
            continue;
        }
        let bad = || Error::Format(format!("{}:{}: expected `axis,value`", path.display(), lineno + 1));
        let (a, v) = line.split_once(',').ok_or_else(bad)?;
        axis.push(a.trim().parse::<f64>().map_err(|_| bad())?);
        values.push(v.trim().parse::<f64>().map_err(|_| bad())?);
    }
    let kind = kind.ok_or_else(|| Error::Format(format!("{}: missing axis_kind header", path.display())))?;
    Pattern::new(axis, values, kind, 1).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes an `n × n` row-major array as a 16-bit binary PGM. Values are
/// multiplied by the returned scale (`65535 / max`) and negative values are
/// written as zero.
pub fn write_pgm(path: &Path, values: &[f64], n: usize) -> Result<f64> {
    if values.len() != n * n {
        return Err(Error::Format(format!("PGM needs {} values, got {}", n * n, values.len())));
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write!(w, "P5\n{n} {n}\n65535\n").map_err(io)?;
    for &v in values {
        let q = (v * scale).round().clamp(0.0, 65535.0) as u16;
        w.write_all(&q.to_be_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(scale)
}

/// Reads a 16-bit binary PGM written by [`write_pgm`].
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad("not a 16-bit P5 PGM"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != 2 * w * h {
        return Err(bad("PGM payload size mismatch"));
    }
    Ok((w, h, data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

/// Writes a pattern as three records: axis, values (`[n]` or `[n, n]`) and
/// a scalar axis-kind code (0 displacement, 1 frequency).
pub fn write_pattern_bin(path: &Path, pattern: &Pattern) -> Result<()> {
    let n = pattern.len();
    let shape = if pattern.dims() == 1 { vec![n] } else { vec![n, n] };
    let code = match pattern.kind() {
        AxisKind::Displacement => 0.0,
        AxisKind::Frequency => 1.0,
    };
    write_records(
        path,
        &[
            ArrayData::real(vec![n], pattern.axis().to_vec())?,
            ArrayData::real(shape, pattern.values().to_vec())?,
            ArrayData::scalar(code),
        ],
    )
}

pub fn read_pattern_bin(path: &Path) -> Result<Pattern> {
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let recs = read_records(path)?;
    if recs.len() != 3 {
        return Err(bad("pattern files hold exactly three records"));
    }
    let axis = recs[0].as_f64().ok_or_else(|| bad("axis record must be real"))?.to_vec();
    let values = recs[1].as_f64().ok_or_else(|| bad("value record must be real"))?.to_vec();
    let dims = recs[1].shape().len();
    let kind = match recs[2].as_f64() {
        Some([c]) if *c == 0.0 => AxisKind::Displacement,
        Some([c]) if *c == 1.0 => AxisKind::Frequency,
        _ => return Err(bad("unknown axis-kind record")),
    };
    Pattern::new(axis, values, kind, dims).map_err(|e| bad(&e.to_string()))
}

/// Reads a pattern from `.csv` or binary-array files (by extension).
pub fn read_pattern(path: &Path) -> Result<Pattern> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_pattern_csv(path),
        _ => read_pattern_bin(path),
    }
}

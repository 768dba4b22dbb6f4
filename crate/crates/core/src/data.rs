//! Synthetic low-rank-plus-outliers data and matrix file I/O.
//!
//! RawF64 layout (all little-endian):
//!
//! | offset | size    | content                      |
//! |--------|---------|------------------------------|
//! | 0      | 4       | magic `SMFM`                 |
//! | 4      | 4       | `d` as u32                   |
//! | 8      | 4       | `n` as u32                   |
//! | 12     | 4       | reserved, must be zero       |
//! | 16     | `8 d n` | f64 entries, column-major    |

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::types::Dataset;

pub const RAW_MAGIC: &[u8; 4] = b"SMFM";
pub const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub d: usize,
    pub n: usize,
    pub k_true: usize,
    /// Fraction of outlier entries that are nonzero.
    pub outlier_density: f64,
    pub outlier_magnitude: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(invalid("d/n", "must be >= 1"));
        }
        if self.k_true == 0 || self.k_true > self.d.min(self.n) {
            return Err(invalid("k_true", format!("{} not in 1..=min(d, n)", self.k_true)));
        }
        if !(0.0..=1.0).contains(&self.outlier_density) {
            return Err(invalid("outlier_density", format!("{} not in [0, 1]", self.outlier_density)));
        }
        if !(self.outlier_magnitude > 0.0) || !self.outlier_magnitude.is_finite() {
            return Err(invalid("outlier_magnitude", "must be finite and > 0"));
        }
        Ok(())
    }

    /// `floor((1 - rho) d n)`, the number of outlier entries forced to zero.
    pub fn zero_count(&self) -> usize {
        let total = self.d * self.n;
        let z = ((1.0 - self.outlier_density) * total as f64).floor();
        (z.max(0.0) as usize).min(total)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    pub w_true: Array2<f64>,
    pub outliers: Array2<f64>,
}

/// First `count` entries of a uniformly random permutation of `0..len`
/// (partial Fisher-Yates). Dense backing for large selections, a sparse
/// swap map otherwise; both consume the generator identically.
fn fisher_yates_prefix<R: Rng>(rng: &mut R, len: usize, count: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    if count.saturating_mul(8) >= len && len <= u32::MAX as usize {
        let mut perm: Vec<u32> = (0..len as u32).collect();
        for i in 0..count {
            let j = rng.random_range(i..len);
            perm.swap(i, j);
            out.push(perm[i] as usize);
        }
    } else {
        let mut moved: HashMap<usize, usize> = HashMap::with_capacity(2 * count);
        for i in 0..count {
            let j = rng.random_range(i..len);
            let at_j = *moved.get(&j).unwrap_or(&j);
            let at_i = *moved.get(&i).unwrap_or(&i);
            moved.insert(j, at_i);
            out.push(at_j);
        }
    }
    out
}

/// Generates `Y = W H + R`.
///
/// Draw order from `ChaCha8Rng::seed_from_u64(seed)`: the entries of `W`
/// row by row, then `H` column by column (both normal with mean 0.5 and
/// variance `k'^{-1/2}`), then the nonzero outlier positions as the prefix of
/// a Fisher-Yates shuffle of the column-major entry indices, then one
/// uniform `[-M, M]` value per position in selection order.
pub fn gen_synth(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let SynthSpec { d, n, k_true: k, .. } = *spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_dev = (k as f64).powf(-0.25);
    let normal = Normal::new(0.5, std_dev).map_err(|e| invalid("k_true", e.to_string()))?;

    let w_true = Array2::from_shape_simple_fn((d, k), || normal.sample(&mut rng));
    let h_true = Array2::from_shape_simple_fn((k, n).f(), || normal.sample(&mut rng));

    let total = d * n;
    let nonzero = total - spec.zero_count();
    let positions = fisher_yates_prefix(&mut rng, total, nonzero);
    let mut outliers = Array2::<f64>::zeros((d, n).f());
    let mag = spec.outlier_magnitude;
    {
        let flat = outliers
            .as_slice_memory_order_mut()
            .expect("freshly allocated array is contiguous");
        for &p in &positions {
            flat[p] = rng.random_range(-mag..=mag);
        }
    }
    drop(positions);

    let mut values = Array2::<f64>::zeros((d, n).f());
    ndarray::linalg::general_mat_mul(1.0, &w_true, &h_true, 0.0, &mut values);
    values += &outliers;
    let name = format!("synth-d{d}-n{n}-k{k}-seed{}", spec.seed);
    Ok(SynthData {
        dataset: Dataset::new(values, name)?,
        w_true,
        outliers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawF64,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "raw" | "rawf64" | "raw_f64" | "f64" => Ok(MatrixFormat::RawF64),
            other => Err(invalid("format", format!("unknown matrix format `{other}`"))),
        }
    }
}

impl MatrixFormat {
    /// Guesses from the file extension: `.csv` is CSV, anything else RawF64.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::RawF64,
        }
    }
}

/// Reads a matrix file into a [`Dataset`] named after the file stem.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Dataset> {
    let values = match format {
        MatrixFormat::Csv => parse_csv(&fs::read_to_string(path)?)?,
        MatrixFormat::RawF64 => parse_raw(&fs::read(path)?)?,
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(values, name)
}

fn parse_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: cannot parse `{field}`", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let d = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if d == 0 || n == 0 {
        return Err(Error::Format("empty matrix".into()));
    }
    Ok(Array2::from_shape_fn((d, n).f(), |(i, j)| rows[i][j]))
}

fn parse_raw(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::Format(format!("file has {} bytes, header needs 16", bytes.len())));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(Error::Format("bad magic, expected SMFM".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
    let (d, n, reserved) = (word(4) as usize, word(8) as usize, word(12));
    if reserved != 0 {
        return Err(Error::Format(format!("reserved header word is {reserved}, expected 0")));
    }
    let payload = d
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("dimensions {d}x{n} overflow")))?;
    let available = bytes.len() - RAW_HEADER_LEN;
    if payload != available {
        return Err(Error::Format(format!(
            "header claims {d}x{n} ({payload} bytes) but the file holds {available}"
        )));
    }
    let data: Vec<f64> = bytes[RAW_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Array2::from_shape_vec((d, n).f(), data).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `m` in the given format; inverse of [`load_matrix`].
pub fn save_matrix(m: ArrayView2<f64>, path: &Path, format: MatrixFormat) -> Result<()> {
    let (d, n) = m.dim();
    if d == 0 || n == 0 {
        return Err(invalid("matrix", format!("shape {d}x{n} is empty")));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        MatrixFormat::Csv => {
            for row in m.rows() {
                let mut first = true;
                for v in row {
                    if !first {
                        out.write_all(b",")?;
                    }
                    first = false;
                    write!(out, "{v:.16e}")?;
                }
                out.write_all(b"\n")?;
            }
        }
        MatrixFormat::RawF64 => {
            let to_u32 = |x: usize, what: &'static str| {
                u32::try_from(x).map_err(|_| invalid(what, format!("{x} does not fit in u32")))
            };
            out.write_all(RAW_MAGIC)?;
            out.write_all(&to_u32(d, "d")?.to_le_bytes())?;
            out.write_all(&to_u32(n, "n")?.to_le_bytes())?;
            out.write_all(&0u32.to_le_bytes())?;
            for col in m.columns() {
                for v in col {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

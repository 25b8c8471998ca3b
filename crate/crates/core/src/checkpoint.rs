//! Text checkpoint format.
//!
//! ```text
//! popgnn-checkpoint 1
//! seed <u64>
//! branches <count>
//! branch <index> arch <gcn|cheb> k_order <K> hidden <H> classes <C> dropout <hex> bias <true|false>
//! layer <index> blocks <count>
//! theta <block> <rows> <cols>
//! <row of hex values>            (one line per row)
//! bias <len>                     (only when the branch has biases)
//! <hex values>
//! ...
//! sha256 <hex digest of every byte above this line>
//! ```
//!
//! Every float is written as the 16-digit lower-case hex of its IEEE-754
//! bits, so a load reproduces the saved weights exactly.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{Arch, BranchModel, BranchSpec, LateFusionModel, LayerWeights};

pub const MAGIC: &str = "popgnn-checkpoint";
pub const VERSION: u32 = 1;

fn hex_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// SHA-256 over the shape and the IEEE-754 bits of every entry.
pub fn matrix_digest(m: &Matrix) -> String {
    let mut bytes = Vec::with_capacity(16 + 8 * m.data().len());
    bytes.extend((m.rows() as u64).to_le_bytes());
    bytes.extend((m.cols() as u64).to_le_bytes());
    for v in m.data() {
        bytes.extend(v.to_bits().to_le_bytes());
    }
    hex_digest(&bytes)
}

fn push_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(|&v| hex_f64(v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

pub fn encode(model: &LateFusionModel, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "seed {seed}");
    let _ = writeln!(out, "branches {}", model.branches.len());
    for (bi, b) in model.branches.iter().enumerate() {
        let s = &b.spec;
        let _ = writeln!(
            out,
            "branch {bi} arch {} k_order {} hidden {} classes {} dropout {} bias {}",
            s.arch,
            s.k_order,
            s.hidden,
            s.n_classes,
            hex_f64(s.dropout),
            s.bias
        );
        for (li, layer) in b.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {li} blocks {}", layer.theta.len());
            for (ti, t) in layer.theta.iter().enumerate() {
                let _ = writeln!(out, "theta {ti} {} {}", t.rows(), t.cols());
                for r in 0..t.rows() {
                    push_values(&mut out, t.row(r));
                }
            }
            if let Some(bias) = &layer.bias {
                let _ = writeln!(out, "bias {}", bias.len());
                push_values(&mut out, bias);
            }
        }
    }
    let digest = hex_digest(out.as_bytes());
    let _ = writeln!(out, "sha256 {digest}");
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))
    }

    /// Reads a line `<keyword> <fields...>` and returns the fields.
    fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next_line()?;
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some(keyword) {
            return Err(Error::Checkpoint(format!(
                "line {n}: expected {keyword:?}, found {line:?}"
            )));
        }
        Ok((n, parts.collect()))
    }

    fn values(&mut self, len: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next_line()?;
        let vals = line
            .split_ascii_whitespace()
            .map(|h| {
                u64::from_str_radix(h, 16)
                    .map(f64::from_bits)
                    .map_err(|e| Error::Checkpoint(format!("line {n}: {h:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != len {
            return Err(Error::Checkpoint(format!(
                "line {n}: expected {len} values, found {}",
                vals.len()
            )));
        }
        Ok(vals)
    }
}

fn field<T: std::str::FromStr>(fields: &[&str], key: &str, line: usize) -> Result<T> {
    fields
        .iter()
        .position(|f| *f == key)
        .and_then(|i| fields.get(i + 1))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("line {line}: missing or invalid {key:?}")))
}

fn positional<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize) -> Result<T> {
    fields
        .get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("line {line}: bad field {i}")))
}

/// Parses and verifies a checkpoint, returning the model and its seed.
pub fn decode(text: &str) -> Result<(LateFusionModel, u64)> {
    let body_end = text
        .rfind("sha256 ")
        .ok_or_else(|| Error::Checkpoint("missing checksum line".into()))?;
    let (body, tail) = text.split_at(body_end);
    let stored = tail.trim_start_matches("sha256 ").trim();
    let actual = hex_digest(body.as_bytes());
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch: stored {stored}, computed {actual}"
        )));
    }

    let mut lines = Lines {
        iter: body.lines().enumerate(),
    };
    let (n, header) = lines.expect(MAGIC)?;
    let version: u32 = positional(&header, 0, n)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let (n, f) = lines.expect("seed")?;
    let seed: u64 = positional(&f, 0, n)?;
    let (n, f) = lines.expect("branches")?;
    let n_branches: usize = positional(&f, 0, n)?;

    let mut branches = Vec::with_capacity(n_branches);
    for _ in 0..n_branches {
        let (n, f) = lines.expect("branch")?;
        let arch: Arch = field(&f, "arch", n)?;
        let dropout_hex: String = field(&f, "dropout", n)?;
        let dropout = u64::from_str_radix(&dropout_hex, 16)
            .map(f64::from_bits)
            .map_err(|e| Error::Checkpoint(format!("line {n}: dropout: {e}")))?;
        let spec = BranchSpec {
            arch,
            k_order: field(&f, "k_order", n)?,
            hidden: field(&f, "hidden", n)?,
            n_classes: field(&f, "classes", n)?,
            dropout,
            bias: field(&f, "bias", n)?,
        };
        let mut layers = Vec::with_capacity(2);
        for _ in 0..2 {
            let (n, f) = lines.expect("layer")?;
            let blocks: usize = field(&f, "blocks", n)?;
            let mut theta = Vec::with_capacity(blocks);
            for _ in 0..blocks {
                let (n, f) = lines.expect("theta")?;
                let rows: usize = positional(&f, 1, n)?;
                let cols: usize = positional(&f, 2, n)?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    data.extend(lines.values(cols)?);
                }
                theta.push(Matrix::new(rows, cols, data)?);
            }
            let bias = if spec.bias {
                let (n, f) = lines.expect("bias")?;
                let len: usize = positional(&f, 0, n)?;
                Some(lines.values(len)?)
            } else {
                None
            };
            layers.push(LayerWeights { theta, bias });
        }
        let l1 = layers.pop().expect("two layers");
        let l0 = layers.pop().expect("two layers");
        branches.push(BranchModel::from_layers(spec, [l0, l1])?);
    }
    if let Ok((n, line)) = lines.next_line() {
        return Err(Error::Checkpoint(format!("line {n}: trailing content {line:?}")));
    }
    Ok((LateFusionModel::new(branches)?, seed))
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save(path: &Path, model: &LateFusionModel, seed: u64) -> Result<()> {
    write_atomic(path, encode(model, seed).as_bytes())
}

pub fn load(path: &Path) -> Result<(LateFusionModel, u64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text)
}

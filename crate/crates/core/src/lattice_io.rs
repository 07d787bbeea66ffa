//! Frame-level posterior lattices and the KWPO v1 file format.
//!
//! Layout, all multi-byte values little-endian:
//!
//! ```text
//! magic              4 bytes  "KWPO"
//! version            u16      1
//! n_frames           u32
//! n_symbols          u32
//! frame_duration_ms  f32
//! symbol table       n_symbols x (u8 length, UTF-8 bytes)
//! payload            n_frames * n_symbols x f32, natural-log probabilities, frame-major
//! ```

use std::fmt;
use std::path::Path;

use crate::phonology::{PhonemeInventory, SymbolId, BLANK_LABEL};

pub const MAGIC: [u8; 4] = *b"KWPO";
pub const VERSION: u16 = 1;
/// Size of the fixed header preceding the symbol table.
pub const FIXED_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;
/// Floor applied to log-probabilities of zero-probability entries.
pub const LOG_PROB_FLOOR: f64 = -1e4;
/// Allowed deviation of a row's log-sum-exp from zero.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-3;
pub const MAX_FRAME_DURATION_MS: f32 = 1000.0;

#[derive(Debug, thiserror::Error)]
pub enum LatticeError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"KWPO\"")]
    BadMagic([u8; 4]),
    #[error("unsupported KWPO version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file: {section} needs {needed} more bytes, {available} available")]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("symbol {index} is not valid UTF-8")]
    InvalidLabel { index: usize },
    #[error("symbol label {0:?} is longer than 255 bytes")]
    LabelTooLong(String),
    #[error("matrix has {actual} entries, expected {n_frames} x {n_symbols}")]
    Shape {
        n_frames: usize,
        n_symbols: usize,
        actual: usize,
    },
    #[error("invalid lattice: {0}")]
    Invalid(Violation),
}

/// One broken lattice invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub frame: Option<usize>,
    pub symbol: Option<String>,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    NonFinite,
    NotNormalized { log_sum_exp: f64 },
    FirstSymbolNotBlank,
    UnknownSymbol,
    DuplicateSymbol,
    BlankOutsideFirstColumn,
    FrameDuration { value: f32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::NonFinite => write!(f, "non-finite log-probability")?,
            Rule::NotNormalized { log_sum_exp } => {
                write!(f, "row not normalized (log-sum-exp {log_sum_exp:.6})")?
            }
            Rule::FirstSymbolNotBlank => write!(f, "symbol 0 must be {BLANK_LABEL}")?,
            Rule::UnknownSymbol => write!(f, "symbol not in inventory")?,
            Rule::DuplicateSymbol => write!(f, "duplicate symbol")?,
            Rule::BlankOutsideFirstColumn => write!(f, "{BLANK_LABEL} may only appear at index 0")?,
            Rule::FrameDuration { value } => write!(
                f,
                "frame duration {value} ms is not a whole number of milliseconds in 1..={MAX_FRAME_DURATION_MS}"
            )?,
        }
        if let Some(frame) = self.frame {
            write!(f, " at frame {frame}")?;
        }
        if let Some(symbol) = &self.symbol {
            write!(f, " (symbol {symbol:?})")?;
        }
        Ok(())
    }
}

/// Frames x symbols matrix of natural-log probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorLattice {
    symbols: Vec<String>,
    frame_duration_ms: f32,
    n_frames: usize,
    log_probs: Vec<f32>,
}

impl PosteriorLattice {
    /// Wraps a row-major log-probability matrix. Only the shape is checked
    /// here; use [`validate`] or [`PosteriorLattice::check`] for the rest.
    pub fn new(symbols: Vec<String>, frame_duration_ms: f32, log_probs: Vec<f32>) -> Result<Self, LatticeError> {
        let n_symbols = symbols.len();
        let n_frames = if n_symbols == 0 { 0 } else { log_probs.len() / n_symbols };
        if n_frames * n_symbols != log_probs.len() {
            return Err(LatticeError::Shape {
                n_frames,
                n_symbols,
                actual: log_probs.len(),
            });
        }
        Ok(Self {
            symbols,
            frame_duration_ms,
            n_frames,
            log_probs,
        })
    }

    /// Builds a lattice from linear probabilities: zeros are clamped to
    /// [`LOG_PROB_FLOOR`] and every row is renormalized in the log domain.
    pub fn from_probabilities(symbols: Vec<String>, frame_duration_ms: f32, rows: &[Vec<f64>]) -> Result<Self, LatticeError> {
        let n_symbols = symbols.len();
        let mut log_probs = Vec::with_capacity(rows.len() * n_symbols);
        for row in rows {
            if row.len() != n_symbols {
                return Err(LatticeError::Shape {
                    n_frames: rows.len(),
                    n_symbols,
                    actual: row.len(),
                });
            }
            let logs: Vec<f64> = row
                .iter()
                .map(|&p| if p > 0.0 { p.ln().max(LOG_PROB_FLOOR) } else { LOG_PROB_FLOOR })
                .collect();
            let lse = log_sum_exp(logs.iter().copied());
            log_probs.extend(logs.iter().map(|&l| (l - lse) as f32));
        }
        Self::new(symbols, frame_duration_ms, log_probs)
    }

    /// The inventory's full symbol list as lattice columns.
    pub fn inventory_symbols(inventory: &PhonemeInventory) -> Vec<String> {
        inventory.entries().iter().map(|e| e.label.clone()).collect()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn frame_duration_ms(&self) -> f32 {
        self.frame_duration_ms
    }

    /// Utterance length in seconds.
    pub fn duration_seconds(&self) -> f64 {
        self.n_frames as f64 * self.frame_duration_ms as f64 / 1000.0
    }

    pub fn log_probs(&self) -> &[f32] {
        &self.log_probs
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        let n = self.symbols.len();
        &self.log_probs[frame * n..(frame + 1) * n]
    }

    pub fn log_prob(&self, frame: usize, symbol: usize) -> f32 {
        self.log_probs[frame * self.symbols.len() + symbol]
    }

    /// Maps each column to its inventory id.
    pub fn column_ids(&self, inventory: &PhonemeInventory) -> Result<Vec<SymbolId>, LatticeError> {
        self.symbols
            .iter()
            .map(|s| {
                inventory.id(s).ok_or_else(|| {
                    LatticeError::Invalid(Violation {
                        frame: None,
                        symbol: Some(s.clone()),
                        rule: Rule::UnknownSymbol,
                    })
                })
            })
            .collect()
    }

    /// Structural invariants that do not depend on an inventory.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let fd = self.frame_duration_ms;
        if !(fd.is_finite() && fd >= 1.0 && fd <= MAX_FRAME_DURATION_MS && fd.fract() == 0.0) {
            out.push(Violation {
                frame: None,
                symbol: None,
                rule: Rule::FrameDuration { value: fd },
            });
        }
        if self.symbols.first().map(String::as_str) != Some(BLANK_LABEL) {
            out.push(Violation {
                frame: None,
                symbol: self.symbols.first().cloned(),
                rule: Rule::FirstSymbolNotBlank,
            });
        }
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 && s == BLANK_LABEL {
                out.push(Violation {
                    frame: None,
                    symbol: Some(s.clone()),
                    rule: Rule::BlankOutsideFirstColumn,
                });
            } else if self.symbols[..i].contains(s) {
                out.push(Violation {
                    frame: None,
                    symbol: Some(s.clone()),
                    rule: Rule::DuplicateSymbol,
                });
            }
        }
        for t in 0..self.n_frames {
            let row = self.row(t);
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                out.push(Violation {
                    frame: Some(t),
                    symbol: Some(self.symbols[j].clone()),
                    rule: Rule::NonFinite,
                });
                continue;
            }
            let lse = log_sum_exp(row.iter().map(|&v| v as f64));
            if lse.abs() > NORMALIZATION_TOLERANCE {
                out.push(Violation {
                    frame: Some(t),
                    symbol: None,
                    rule: Rule::NotNormalized { log_sum_exp: lse },
                });
            }
        }
        out
    }

    /// First structural violation as an error.
    pub fn check(&self) -> Result<(), LatticeError> {
        match self.structural_violations().into_iter().next() {
            Some(v) => Err(LatticeError::Invalid(v)),
            None => Ok(()),
        }
    }
}

/// All invariant violations of `lattice` with respect to `inventory`; empty
/// iff the lattice is valid.
pub fn validate(lattice: &PosteriorLattice, inventory: &PhonemeInventory) -> Vec<Violation> {
    let mut out = lattice.structural_violations();
    for s in lattice.symbols.iter().skip(1) {
        if inventory.id(s).is_none() {
            out.push(Violation {
                frame: None,
                symbol: Some(s.clone()),
                rule: Rule::UnknownSymbol,
            });
        }
    }
    out
}

pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Serializes a lattice after checking its structural invariants.
pub fn encode(lattice: &PosteriorLattice) -> Result<Vec<u8>, LatticeError> {
    lattice.check()?;
    let table_len: usize = lattice.symbols.iter().map(|s| 1 + s.len()).sum();
    let mut out = Vec::with_capacity(FIXED_HEADER_LEN + table_len + 4 * lattice.log_probs.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(lattice.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(lattice.symbols.len() as u32).to_le_bytes());
    out.extend_from_slice(&lattice.frame_duration_ms.to_le_bytes());
    for s in &lattice.symbols {
        let len = u8::try_from(s.len()).map_err(|_| LatticeError::LabelTooLong(s.clone()))?;
        out.push(len);
        out.extend_from_slice(s.as_bytes());
    }
    for v in &lattice.log_probs {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], LatticeError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(LatticeError::Truncated {
                section,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32, LatticeError> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }
}

/// Parses and validates a KWPO v1 byte stream against `inventory`.
pub fn decode(bytes: &[u8], inventory: &PhonemeInventory) -> Result<PosteriorLattice, LatticeError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(LatticeError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(LatticeError::UnsupportedVersion(version));
    }
    let n_frames = cur.u32("frame count")? as usize;
    let n_symbols = cur.u32("symbol count")? as usize;
    let frame_duration_ms = f32::from_le_bytes(cur.take(4, "frame duration")?.try_into().unwrap());

    let mut symbols = Vec::with_capacity(n_symbols.min(1024));
    for index in 0..n_symbols {
        let len = cur.take(1, "symbol table")?[0] as usize;
        let raw = cur.take(len, "symbol table")?;
        let label = std::str::from_utf8(raw).map_err(|_| LatticeError::InvalidLabel { index })?;
        symbols.push(label.to_string());
    }

    let payload_len = n_frames
        .checked_mul(n_symbols)
        .and_then(|n| n.checked_mul(4))
        .ok_or(LatticeError::Truncated {
            section: "payload",
            needed: usize::MAX,
            available: bytes.len() - cur.pos,
        })?;
    let payload = cur.take(payload_len, "payload")?;
    if cur.pos != bytes.len() {
        return Err(LatticeError::TrailingBytes(bytes.len() - cur.pos));
    }
    let log_probs = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let lattice = PosteriorLattice {
        symbols,
        frame_duration_ms,
        n_frames,
        log_probs,
    };
    if let Some(v) = validate(&lattice, inventory).into_iter().next() {
        return Err(LatticeError::Invalid(v));
    }
    Ok(lattice)
}

pub fn read_posteriors(path: impl AsRef<Path>, inventory: &PhonemeInventory) -> Result<PosteriorLattice, LatticeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| LatticeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes, inventory)
}

/// Writes the lattice; invalid lattices are refused before the file is touched.
pub fn write_posteriors(lattice: &PosteriorLattice, path: impl AsRef<Path>) -> Result<(), LatticeError> {
    let path = path.as_ref();
    let bytes = encode(lattice)?;
    std::fs::write(path, bytes).map_err(|source| LatticeError::Io {
        path: path.display().to_string(),
        source,
    })
}

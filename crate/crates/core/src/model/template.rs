//! Feature templates and their binary file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PTPL"            4 bytes magic
//! version           u8 (= 1)
//! kind              u8 (see `TemplateKind`)
//! id length         u32, followed by the UTF-8 comparator id
//! dim count         u64, followed by that many u64 dims
//! payload           f64 values (complex stored as re, im pairs)
//!                   or u32 bin counts for code histograms
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PTPL";
const VERSION: u8 = 1;

/// Number of values per key-point row: x, y, scale, orientation, 128 descriptor bins.
pub const KEYPOINT_ROW: usize = 4 + 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    RealVector,
    ComplexVector,
    CodeHistogram,
    KeypointSet,
    Embedding,
}

impl TemplateKind {
    fn tag(self) -> u8 {
        match self {
            TemplateKind::RealVector => 1,
            TemplateKind::ComplexVector => 2,
            TemplateKind::CodeHistogram => 3,
            TemplateKind::KeypointSet => 4,
            TemplateKind::Embedding => 5,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            1 => TemplateKind::RealVector,
            2 => TemplateKind::ComplexVector,
            3 => TemplateKind::CodeHistogram,
            4 => TemplateKind::KeypointSet,
            5 => TemplateKind::Embedding,
            other => {
                return Err(Error::Format {
                    what: "template",
                    message: format!("unknown kind byte {other}"),
                })
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::RealVector => "real-vector",
            TemplateKind::ComplexVector => "complex-vector",
            TemplateKind::CodeHistogram => "code-histogram",
            TemplateKind::KeypointSet => "keypoint-set",
            TemplateKind::Embedding => "embedding",
        }
    }
}

impl std::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
    Counts(Vec<u32>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Real(v) => v.len(),
            Payload::Complex(v) => v.len(),
            Payload::Counts(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tagged feature container produced by one comparator for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    comparator_id: String,
    kind: TemplateKind,
    dims: Vec<u64>,
    payload: Payload,
}

impl Template {
    pub fn new(comparator_id: impl Into<String>, kind: TemplateKind, dims: Vec<u64>, payload: Payload) -> Result<Self> {
        let t = Self {
            comparator_id: comparator_id.into(),
            kind,
            dims,
            payload,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn real(comparator_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let dims = vec![values.len() as u64];
        Self::new(comparator_id, TemplateKind::RealVector, dims, Payload::Real(values))
    }

    /// Parses an externally computed embedding: numbers separated by commas
    /// or whitespace.
    pub fn parse_embedding(comparator_id: impl Into<String>, text: &str) -> Result<Self> {
        let values = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::invalid(format!("bad embedding value {t:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::invalid("embedding has no values"));
        }
        Self::new(comparator_id, TemplateKind::Embedding, vec![values.len() as u64], Payload::Real(values))
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::invalid("template dims must not be empty"));
        }
        let expected = self
            .dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::invalid("template dims overflow"))?;
        if expected == 0 && self.kind != TemplateKind::KeypointSet {
            return Err(Error::invalid("only key-point sets may be empty"));
        }
        if expected != self.payload.len() as u64 {
            return Err(Error::invalid(format!(
                "payload holds {} values but dims {:?} require {}",
                self.payload.len(),
                self.dims,
                expected
            )));
        }
        let payload_ok = matches!(
            (self.kind, &self.payload),
            (TemplateKind::RealVector | TemplateKind::KeypointSet | TemplateKind::Embedding, Payload::Real(_))
                | (TemplateKind::ComplexVector, Payload::Complex(_))
                | (TemplateKind::CodeHistogram, Payload::Counts(_))
        );
        if !payload_ok {
            return Err(Error::invalid(format!("payload type does not match kind {}", self.kind)));
        }
        if self.kind == TemplateKind::KeypointSet && (self.dims.len() != 2 || self.dims[1] != KEYPOINT_ROW as u64) {
            return Err(Error::invalid(format!(
                "key-point set dims must be [n, {KEYPOINT_ROW}], got {:?}",
                self.dims
            )));
        }
        if self.comparator_id.len() > u32::MAX as usize {
            return Err(Error::invalid("comparator id too long"));
        }
        Ok(())
    }

    pub fn comparator_id(&self) -> &str {
        &self.comparator_id
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Encodes the template into its binary representation.
    pub fn to_bytes(&self) -> Vec<u8> {
        let id = self.comparator_id.as_bytes();
        let mut out = Vec::with_capacity(4 + 2 + 4 + id.len() + 8 * (1 + self.dims.len()) + 16 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.kind.tag());
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(self.dims.len() as u64).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.payload {
            Payload::Real(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::Complex(v) => v.iter().for_each(|c| {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }),
            Payload::Counts(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let kind = TemplateKind::from_tag(r.take(1)?[0])?;
        let id_len = u32::from_le_bytes(r.array()?) as usize;
        let id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| format_err("comparator id is not UTF-8"))?
            .to_string();
        let ndims = u64::from_le_bytes(r.array()?);
        if ndims == 0 || ndims > 64 {
            return Err(format_err(format!("implausible dim count {ndims}")));
        }
        let dims = (0..ndims)
            .map(|_| r.array().map(u64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format_err("dims overflow"))? as usize;
        let payload = match kind {
            TemplateKind::ComplexVector => {
                r.require(count.checked_mul(16).ok_or_else(|| format_err("payload overflow"))?)?;
                Payload::Complex(
                    (0..count)
                        .map(|_| {
                            let re = f64::from_le_bytes(r.array()?);
                            let im = f64::from_le_bytes(r.array()?);
                            Ok(Complex64::new(re, im))
                        })
                        .collect::<Result<_>>()?,
                )
            }
            TemplateKind::CodeHistogram => {
                r.require(count.checked_mul(4).ok_or_else(|| format_err("payload overflow"))?)?;
                Payload::Counts((0..count).map(|_| r.array().map(u32::from_le_bytes)).collect::<Result<_>>()?)
            }
            _ => {
                r.require(count.checked_mul(8).ok_or_else(|| format_err("payload overflow"))?)?;
                Payload::Real((0..count).map(|_| r.array().map(f64::from_le_bytes)).collect::<Result<_>>()?)
            }
        };
        if r.pos != bytes.len() {
            return Err(format_err(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Template::new(id, kind, dims, payload)
    }
}

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        what: "template",
        message: message.into(),
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn require(&self, n: usize) -> Result<()> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err("truncated payload"));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.require(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }
}

pub fn write_template(t: &Template, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    t.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&t.to_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_template(path: impl AsRef<Path>) -> Result<Template> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    Template::from_bytes(&bytes)
}

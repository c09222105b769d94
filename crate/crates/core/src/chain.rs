//! JSON-lines persistence of posterior draws.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IcpError, Result};
use crate::graph::{GraphRecord, OrderedDag};
use crate::hyperparams::Hyperparams;
use crate::nlgbn::Rescale;

/// Network parameters attached to a draw: `[parent, child, weight]`,
/// `[node, bias]` and `[node, precision]` triples and pairs sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsRecord {
    pub weights: Vec<(u64, u64, f64)>,
    pub biases: Vec<(u64, f64)>,
    pub precisions: Vec<(u64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<Rescale>,
}

/// One posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSample {
    pub iter: u64,
    pub logp: f64,
    pub graph: GraphRecord,
    pub hypers: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsRecord>,
}

impl ChainSample {
    pub fn dag(&self) -> Result<OrderedDag> {
        OrderedDag::from_record(&self.graph)
    }

    pub fn to_line(&self) -> Result<String> {
        if !self.logp.is_finite() {
            return Err(IcpError::InvalidArgument(format!(
                "cannot serialize non-finite log-density {}",
                self.logp
            )));
        }
        Ok(serde_json::to_string(self)?)
    }
}

/// Destination for chain output.
pub trait SampleSink {
    fn write(&mut self, sample: &ChainSample) -> Result<()>;
}

impl SampleSink for Vec<ChainSample> {
    fn write(&mut self, sample: &ChainSample) -> Result<()> {
        self.push(sample.clone());
        Ok(())
    }
}

/// Writes one JSON object per line, flushing after each so an aborted run
/// keeps every completed line.
pub struct JsonlSink<W: Write> {
    writer: BufWriter<W>,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(inner: W) -> Self {
        JsonlSink {
            writer: BufWriter::new(inner),
        }
    }
}

impl JsonlSink<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write> SampleSink for JsonlSink<W> {
    fn write(&mut self, sample: &ChainSample) -> Result<()> {
        let line = sample.to_line()?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Parses JSON lines; blank lines are skipped and errors carry the 1-based
/// line number.
pub fn parse_chain<R: BufRead>(reader: R) -> Result<Vec<ChainSample>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: ChainSample = serde_json::from_str(&line).map_err(|e| IcpError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn read_chain(path: &Path) -> Result<Vec<ChainSample>> {
    parse_chain(BufReader::new(File::open(path)?))
}

pub fn write_chain(path: &Path, samples: &[ChainSample]) -> Result<()> {
    let mut sink = JsonlSink::create(path)?;
    for s in samples {
        sink.write(s)?;
    }
    Ok(())
}

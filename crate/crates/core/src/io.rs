//! Binary artifact formats. All integers and floats are little-endian.
//!
//! Dataset: `APDS`, u16 version, u16 name length, name, u32 count,
//! u32 dim, u8 margin, then per record `dim` f32 followed by u8 x, u8 y.
//!
//! Checkpoint (`APCK`) and probe (`APPR`) files: magic, u16 version,
//! u32 JSON header length, JSON header, u32 tensor count, then per tensor
//! u16 name length, name, u8 rank, u32 per dimension, f32 data.

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AgentNet};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::probe::{ActivationDataset, Probe, ProbeConfig};

pub const DATASET_MAGIC: &[u8; 4] = b"APDS";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"APCK";
pub const PROBE_MAGIC: &[u8; 4] = b"APPR";
pub const FORMAT_VERSION: u16 = 1;

/// Exact byte size of a dataset file.
pub fn dataset_file_size(tap_name_len: usize, count: usize, dim: usize) -> u64 {
    17 + tap_name_len as u64 + count as u64 * (4 * dim as u64 + 2)
}

fn truncated(e: std::io::Error, what: &str) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Format { expected: format!("complete {what}"), found: "truncated file".into() }
    } else {
        Error::Io(e)
    }
}

struct Reader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, self.what))?;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0; N];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, self.what))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.bytes(n)?).map_err(|_| Error::Format {
            expected: "UTF-8 name".into(),
            found: "invalid bytes".into(),
        })
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m: [u8; 4] = self.array()?;
        if &m != magic {
            return Err(Error::Format {
                expected: String::from_utf8_lossy(magic).into(),
                found: format!("{m:?}"),
            });
        }
        let v = self.u16()?;
        if v != FORMAT_VERSION {
            return Err(Error::Format { expected: format!("version {FORMAT_VERSION}"), found: format!("version {v}") });
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .bytes(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Format { expected: format!("end of {}", self.what), found: "trailing bytes".into() }),
        }
    }
}

fn put_f32s<W: Write>(w: &mut W, data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(4 * data.len());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn name_len(name: &str) -> Result<u16> {
    u16::try_from(name.len()).map_err(|_| Error::OutOfRange { what: "name length", value: name.len(), limit: u16::MAX as usize })
}

/// Streams a dataset whose record count is known up front.
pub struct DatasetWriter<W: Write> {
    inner: W,
    dim: usize,
    remaining: usize,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut inner: W, tap: &str, dim: usize, count: usize, margin: u8) -> Result<Self> {
        let too_big = |what, v: usize| Error::OutOfRange { what, value: v, limit: u32::MAX as usize };
        inner.write_all(DATASET_MAGIC)?;
        inner.write_all(&FORMAT_VERSION.to_le_bytes())?;
        inner.write_all(&name_len(tap)?.to_le_bytes())?;
        inner.write_all(tap.as_bytes())?;
        inner.write_all(&u32::try_from(count).map_err(|_| too_big("record count", count))?.to_le_bytes())?;
        inner.write_all(&u32::try_from(dim).map_err(|_| too_big("activation dim", dim))?.to_le_bytes())?;
        inner.write_all(&[margin])?;
        Ok(Self { inner, dim, remaining: count })
    }

    pub fn push(&mut self, activation: &[f32], x: u8, y: u8) -> Result<()> {
        if self.remaining == 0 {
            return Err(Error::Dataset("more records than declared".into()));
        }
        if activation.len() != self.dim {
            return Err(Error::Dataset(format!("record dim {} != {}", activation.len(), self.dim)));
        }
        put_f32s(&mut self.inner, activation)?;
        self.inner.write_all(&[x, y])?;
        self.remaining -= 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.remaining != 0 {
            return Err(Error::Dataset(format!("{} declared records never written", self.remaining)));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_dataset<W: Write>(w: W, ds: &ActivationDataset) -> Result<()> {
    ds.validate()?;
    let mut out = DatasetWriter::new(w, &ds.tap, ds.dim, ds.len(), ds.margin)?;
    for i in 0..ds.len() {
        out.push(ds.record(i), ds.xs[i], ds.ys[i])?;
    }
    out.finish()?;
    Ok(())
}

/// Reads a dataset file. Metadata lives in a separate sidecar and is left
/// unset.
pub fn read_dataset<R: Read>(r: R) -> Result<ActivationDataset> {
    let mut rd = Reader { inner: r, what: "dataset" };
    rd.header(DATASET_MAGIC)?;
    let n = rd.u16()? as usize;
    let tap = rd.string(n)?;
    let count = rd.u32()? as usize;
    let dim = rd.u32()? as usize;
    let margin = rd.u8()?;
    let mut ds = ActivationDataset::new(tap, dim);
    ds.margin = margin;
    for _ in 0..count {
        let v = rd.f32s(dim)?;
        let [x, y] = rd.array()?;
        ds.push(&v, x, y)?;
    }
    rd.expect_end()?;
    ds.validate()?;
    Ok(ds)
}

fn write_tensors<W: Write>(w: &mut W, tensors: &[(String, &Tensor<f32>)]) -> Result<()> {
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&name_len(name)?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.shape().len() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        put_f32s(w, t.data())?;
    }
    Ok(())
}

fn read_tensors<R: Read>(rd: &mut Reader<R>) -> Result<Vec<(String, Tensor<f32>)>> {
    let n = rd.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let len = rd.u16()? as usize;
        let name = rd.string(len)?;
        let rank = rd.u8()? as usize;
        let shape = (0..rank).map(|_| Ok(rd.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().product();
        out.push((name, Tensor::new(shape, rd.f32s(numel)?)?));
    }
    Ok(out)
}

fn write_json_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 4], header: &H) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format { expected: "serializable header".into(), found: e.to_string() })?;
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

fn read_json_header<R: Read, H: for<'de> Deserialize<'de>>(rd: &mut Reader<R>, magic: &[u8; 4]) -> Result<H> {
    rd.header(magic)?;
    let n = rd.u32()? as usize;
    let bytes = rd.bytes(n)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format { expected: "JSON header".into(), found: e.to_string() })
}

/// Provenance stored with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub env_steps: u64,
    /// Windowed mean return when the snapshot was taken.
    pub mean_return: Option<f64>,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    agent: AgentConfig,
    meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub agent: AgentConfig,
    pub meta: TrainingMeta,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_net(net: &AgentNet<f32>, meta: TrainingMeta) -> Self {
        let p = net.params();
        Self {
            agent: net.config().clone(),
            meta,
            params: p.names().iter().cloned().zip(p.values().iter().cloned()).collect(),
        }
    }

    pub fn to_net(&self) -> Result<AgentNet<f32>> {
        AgentNet::from_params(&self.agent, self.params.clone())
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    write_json_header(&mut w, CHECKPOINT_MAGIC, &CheckpointHeader { agent: ck.agent.clone(), meta: ck.meta.clone() })?;
    let refs: Vec<(String, &Tensor<f32>)> = ck.params.iter().map(|(n, t)| (n.clone(), t)).collect();
    write_tensors(&mut w, &refs)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut rd = Reader { inner: r, what: "checkpoint" };
    let h: CheckpointHeader = read_json_header(&mut rd, CHECKPOINT_MAGIC)?;
    let params = read_tensors(&mut rd)?;
    rd.expect_end()?;
    Ok(Checkpoint { agent: h.agent, meta: h.meta, params })
}

/// What a probe was trained on, stored with its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeHeader {
    pub config: ProbeConfig,
    pub input_dim: usize,
    pub tap: String,
    pub margin: u8,
}

pub fn write_probe<W: Write>(mut w: W, probe: &Probe, tap: &str, margin: u8) -> Result<()> {
    let header = ProbeHeader { config: probe.config.clone(), input_dim: probe.input_dim, tap: tap.into(), margin };
    write_json_header(&mut w, PROBE_MAGIC, &header)?;
    let p = probe.params();
    let refs: Vec<(String, &Tensor<f32>)> = p.names().iter().cloned().zip(p.values()).collect();
    write_tensors(&mut w, &refs)?;
    w.flush()?;
    Ok(())
}

pub fn read_probe<R: Read>(r: R) -> Result<(ProbeHeader, Probe)> {
    let mut rd = Reader { inner: r, what: "probe" };
    let h: ProbeHeader = read_json_header(&mut rd, PROBE_MAGIC)?;
    let params = read_tensors(&mut rd)?;
    rd.expect_end()?;
    let probe = Probe::from_params(&h.config, h.input_dim, params)?;
    Ok((h, probe))
}

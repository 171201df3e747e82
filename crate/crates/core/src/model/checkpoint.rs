//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic        b"SAUN"
//! version      u32
//! dtype        u8      0 = f32, 1 = f64
//! spec_len     u32
//! spec         spec_len bytes of JSON (ArchitectureSpec)
//! has_optim    u8
//! [optimizer]  u64 step, f64 lr, f64 beta1, f64 beta2, f64 eps   (if has_optim = 1)
//! n_records    u32
//! records      n_records x { u32 name_len, name (UTF-8), u8 dtype, u32 rank,
//!                            rank x u64 dims, raw element data }
//! checksum     32 bytes, SHA-256 of every preceding byte
//! ```
//!
//! Network tensors are stored under their parameter names; optimizer
//! moments under `adam.m/<name>` and `adam.v/<name>`.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ArchitectureSpec, Network};
use crate::error::{Error, Result};
use crate::optim::{AdamState, Moments};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SAUN";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Leading fields of a checkpoint, readable without knowing the element type.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dtype: DType,
    pub spec: ArchitectureSpec,
}

pub fn encode_checkpoint<T: Scalar>(net: &Network<T>, optimizer: Option<&AdamState<T>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::DTYPE.tag());
    let spec = serde_json::to_vec(net.spec())?;
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);

    let mut records: Vec<(String, Vec<usize>, Vec<T>)> = net
        .parameters()
        .into_iter()
        .map(|(name, t, _)| (name, t.dims().to_vec(), t.to_vec()))
        .collect();
    match optimizer {
        Some(opt) => {
            out.push(1);
            out.extend_from_slice(&opt.step.to_le_bytes());
            for v in [opt.lr, opt.beta1, opt.beta2, opt.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for m in &opt.moments {
                records.push((format!("adam.m/{}", m.name), vec![m.first.len()], m.first.clone()));
                records.push((format!("adam.v/{}", m.name), vec![m.second.len()], m.second.clone()));
            }
        }
        None => out.push(0),
    }

    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, dims, data) in &records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(T::DTYPE.tag());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for &d in dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in data {
            v.write_le(&mut out);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    net: &Network<T>,
    optimizer: Option<&AdamState<T>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(net, optimizer)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Verifies the checksum and returns the payload without it.
fn verified_payload(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < MAGIC.len() + CHECKSUM_LEN {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (payload, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if !payload.starts_with(MAGIC) {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    Ok(payload)
}

fn read_header(r: &mut Reader<'_>) -> Result<CheckpointHeader> {
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let dtype = DType::from_tag(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown dtype tag".into()))?;
    let len = r.u32()? as usize;
    let spec: ArchitectureSpec = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("malformed architecture block: {e}")))?;
    Ok(CheckpointHeader { version, dtype, spec })
}

pub fn decode_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    let payload = verified_payload(bytes)?;
    read_header(&mut Reader { buf: payload, pos: 0 })
}

pub fn peek_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_header(&bytes)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Network<T>, Option<AdamState<T>>)> {
    let payload = verified_payload(bytes)?;
    let mut r = Reader { buf: payload, pos: 0 };
    let header = read_header(&mut r)?;
    if header.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {:?} elements, requested {:?}",
            header.dtype,
            T::DTYPE
        )));
    }
    let mut optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let mut st = AdamState::new(r.f64()?);
            st.beta1 = r.f64()?;
            st.beta2 = r.f64()?;
            st.eps = r.f64()?;
            st.step = step;
            Some(st)
        }
        _ => return Err(Error::Checkpoint("bad optimizer flag".into())),
    };

    let mut net = Network::<T>::new(header.spec.clone(), 0)?;
    let expected: Vec<String> = net.parameters().into_iter().map(|(n, _, _)| n).collect();
    let mut seen = std::collections::HashSet::new();
    let mut first_moments: Vec<(String, Vec<T>)> = Vec::new();
    let mut second_moments: Vec<(String, Vec<T>)> = Vec::new();

    let count = r.u32()? as usize;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let dtype = DType::from_tag(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown dtype tag".into()))?;
        if dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("record {name} has dtype {dtype:?}")));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let raw = r.take(numel * dtype.size())?;
        let data: Vec<T> = raw.chunks_exact(dtype.size()).map(T::read_le).collect();

        if let Some(param) = name.strip_prefix("adam.m/") {
            first_moments.push((param.to_string(), data));
        } else if let Some(param) = name.strip_prefix("adam.v/") {
            second_moments.push((param.to_string(), data));
        } else {
            let tensor = Tensor::from_vec(dims, data)?;
            net.set_parameter(&name, tensor)
                .map_err(|e| Error::Checkpoint(format!("record {name}: {e}")))?;
            seen.insert(name);
        }
    }
    if r.pos != payload.len() {
        return Err(Error::Checkpoint("trailing bytes after records".into()));
    }
    if let Some(missing) = expected.iter().find(|n| !seen.contains(*n)) {
        return Err(Error::Checkpoint(format!("missing tensor {missing}")));
    }
    if let Some(opt) = &mut optimizer {
        if first_moments.len() != second_moments.len() {
            return Err(Error::Checkpoint("unpaired optimizer moments".into()));
        }
        opt.moments = first_moments
            .into_iter()
            .zip(second_moments)
            .map(|((n1, m), (n2, v))| {
                if n1 != n2 {
                    return Err(Error::Checkpoint(format!("moment order mismatch: {n1} vs {n2}")));
                }
                Ok(Moments {
                    name: n1,
                    first: m,
                    second: v,
                })
            })
            .collect::<Result<_>>()?;
    }
    Ok((net, optimizer))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(Network<T>, Option<AdamState<T>>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint that must hold the architecture described by `expected`.
pub fn load_checkpoint_as<T: Scalar>(
    path: impl AsRef<Path>,
    expected: &ArchitectureSpec,
) -> Result<(Network<T>, Option<AdamState<T>>)> {
    let (net, opt) = load_checkpoint(path)?;
    if !net.spec().same_architecture(expected) {
        return Err(Error::SpecMismatch(format!(
            "file holds {} (base {}, depth {}), expected {} (base {}, depth {})",
            net.spec().variant,
            net.spec().base_channels,
            net.spec().depth,
            expected.variant,
            expected.base_channels,
            expected.depth
        )));
    }
    Ok((net, opt))
}

//! Binary model container. All integers and floats are little-endian.
//!
//! ```text
//! "STRSCNN1"                      8-byte magic
//! u32 version                     = 1
//! u32 channels, u32 window_len    input geometry
//! u32 layer_count
//! per layer:
//!   u8 tag                        1 conv1d, 2 maxpool1d, 3 relu, 4 flatten,
//!                                 5 dropout, 6 dense, 7 softmax
//!   hyperparameters               conv1d:   u32 in, out, kernel, stride, frozen
//!                                 maxpool1d: u32 size, stride
//!                                 dropout:  f32 rate
//!                                 dense:    u32 in, out, frozen
//!   u64 payload_len, payload      f32 weights then f32 bias (conv1d and dense only;
//!                                 0 for the rest)
//! f32 x3 mean, f32 x3 std         input normalisation
//! u32 extra_len, extra bytes      optional block (personal-model provenance); 0 if absent
//! u32 crc32                       of every preceding byte
//! ```

use std::path::Path;

use crate::data::{NormStats, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Dense, Dropout, Layer, MaxPool1d, Network};
use crate::tensor::Tensor;

use super::StressNet;

pub const MAGIC: &[u8; 8] = b"STRSCNN1";
pub const CONTAINER_VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DROPOUT: u8 = 5;
const TAG_DENSE: u8 = 6;
const TAG_SOFTMAX: u8 = 7;

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    /// Carries the stored normalisation in `norm_stats`.
    pub model: StressNet,
    pub norm_stats: NormStats,
    pub extra: Option<Vec<u8>>,
    /// The stored trailing CRC32.
    pub checksum: u32,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_payload(out: &mut Vec<u8>, tensors: &[&Tensor<f32>]) {
    let n: usize = tensors.iter().map(|t| t.len()).sum();
    out.extend_from_slice(&((n * 4) as u64).to_le_bytes());
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serialises a model; `extra` is stored verbatim in the optional block.
pub fn encode_model(model: &StressNet, stats: &NormStats, extra: Option<&[u8]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.param_count() * 4 + 256);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CONTAINER_VERSION as usize);
    put_u32(&mut out, CHANNELS);
    put_u32(&mut out, model.window_len);
    put_u32(&mut out, model.network.len());
    for layer in model.network.layers() {
        match layer {
            Layer::Conv1d(c) => {
                out.push(TAG_CONV);
                for v in [
                    c.in_channels(),
                    c.out_channels(),
                    c.kernel_size(),
                    c.stride(),
                    c.frozen as usize,
                ] {
                    put_u32(&mut out, v);
                }
                put_payload(&mut out, &[&c.weight, &c.bias]);
            }
            Layer::MaxPool1d(p) => {
                out.push(TAG_POOL);
                put_u32(&mut out, p.pool_size());
                put_u32(&mut out, p.stride());
                put_payload(&mut out, &[]);
            }
            Layer::Relu => {
                out.push(TAG_RELU);
                put_payload(&mut out, &[]);
            }
            Layer::Flatten => {
                out.push(TAG_FLATTEN);
                put_payload(&mut out, &[]);
            }
            Layer::Dropout(d) => {
                out.push(TAG_DROPOUT);
                out.extend_from_slice(&(d.rate() as f32).to_le_bytes());
                put_payload(&mut out, &[]);
            }
            Layer::Dense(d) => {
                out.push(TAG_DENSE);
                for v in [d.in_units(), d.out_units(), d.frozen as usize] {
                    put_u32(&mut out, v);
                }
                put_payload(&mut out, &[&d.weight, &d.bias]);
            }
            Layer::Softmax => {
                out.push(TAG_SOFTMAX);
                put_payload(&mut out, &[]);
            }
        }
    }
    for v in stats.mean.iter().chain(&stats.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let extra = extra.unwrap_or(&[]);
    put_u32(&mut out, extra.len());
    out.extend_from_slice(extra);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// CRC32 identifying a model's architecture, parameters and normalisation (the checksum of
/// its container without an extra block).
pub fn model_checksum(model: &StressNet, stats: &NormStats) -> u32 {
    let bytes = encode_model(model, stats, None);
    u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn payload(&mut self, shapes: &[&[usize]]) -> Result<Vec<Tensor<f32>>> {
        let len = self.u64()?;
        let want: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if len != (want * 4) as u64 {
            // a lying length field is caught here before any allocation
            self.take(usize::try_from(len).map_err(|_| Error::Truncated)?)?;
            return Err(Error::CorruptContainer(format!(
                "payload of {len} bytes where {} were expected",
                want * 4
            )));
        }
        shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let raw = self.take(n * 4)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                Tensor::new(s.to_vec(), data)
            })
            .collect()
    }
}

fn flag(v: u32) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::CorruptContainer(format!("frozen flag {v}"))),
    }
}

fn parse_body(bytes: &[u8]) -> Result<(StressNet, NormStats, Option<Vec<u8>>, usize)> {
    let mut r = Reader { bytes, pos: 12 };
    let channels = r.usize()?;
    let window_len = r.usize()?;
    if channels != CHANNELS {
        return Err(Error::CorruptContainer(format!(
            "{channels} input channels, expected {CHANNELS}"
        )));
    }
    let count = r.usize()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let layer = match r.u8()? {
            TAG_CONV => {
                let (i, o, k, s) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
                let frozen = flag(r.u32()?)?;
                let mut p = r.payload(&[&[o, i, k], &[o]])?;
                let bias = p.pop().expect("two tensors");
                let mut c = Conv1d::from_parts(p.pop().expect("two tensors"), bias, s)?;
                c.frozen = frozen;
                Layer::Conv1d(c)
            }
            TAG_POOL => {
                let (size, stride) = (r.usize()?, r.usize()?);
                r.payload(&[])?;
                Layer::MaxPool1d(MaxPool1d::new(size, stride)?)
            }
            TAG_RELU => {
                r.payload(&[])?;
                Layer::Relu
            }
            TAG_FLATTEN => {
                r.payload(&[])?;
                Layer::Flatten
            }
            TAG_DROPOUT => {
                // shortest decimal form of the stored f32, so 0.3 reads back as 0.3
                let rate: f64 = r.f32()?.to_string().parse().expect("float display parses");
                r.payload(&[])?;
                Layer::Dropout(Dropout::new(rate)?)
            }
            TAG_DENSE => {
                let (i, o) = (r.usize()?, r.usize()?);
                let frozen = flag(r.u32()?)?;
                let mut p = r.payload(&[&[o, i], &[o]])?;
                let bias = p.pop().expect("two tensors");
                let mut d = Dense::from_parts(p.pop().expect("two tensors"), bias)?;
                d.frozen = frozen;
                Layer::Dense(d)
            }
            TAG_SOFTMAX => {
                r.payload(&[])?;
                Layer::Softmax
            }
            tag => return Err(Error::CorruptContainer(format!("unknown layer tag {tag}"))),
        };
        layers.push(layer);
    }
    let mut stats = NormStats {
        mean: [0.0; CHANNELS],
        std: [0.0; CHANNELS],
    };
    for v in stats.mean.iter_mut().chain(stats.std.iter_mut()) {
        *v = r.f32()?;
    }
    let extra_len = r.usize()?;
    let extra = r.take(extra_len)?;
    let extra = (extra_len > 0).then(|| extra.to_vec());
    let model = StressNet::new(Network::new(layers), window_len, Some(stats))
        .map_err(|e| Error::CorruptContainer(e.to_string()))?;
    Ok((model, stats, extra, r.pos))
}

/// Decodes and validates a container. Errors are distinct for a foreign file
/// ([`Error::BadMagic`]), a newer format ([`Error::UnsupportedVersion`]), a cut-off file
/// ([`Error::Truncated`]) and damaged content ([`Error::ChecksumMismatch`]).
pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    let head = &bytes[..bytes.len().min(MAGIC.len())];
    if head != &MAGIC[..head.len()] {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: CONTAINER_VERSION,
        });
    }
    let parsed = parse_body(bytes);
    let end = match &parsed {
        Ok((.., end)) => *end,
        Err(Error::Truncated) => return Err(Error::Truncated),
        // structural damage is reported through the checksum when one is present
        Err(_) => bytes.len().saturating_sub(4),
    };
    if bytes.len() < end + 4 {
        return Err(Error::Truncated);
    }
    let stored = u32::from_le_bytes(bytes[end..end + 4].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let (model, norm_stats, extra, _) = parsed?;
    if bytes.len() != end + 4 {
        return Err(Error::CorruptContainer(format!(
            "{} unexpected trailing bytes",
            bytes.len() - end - 4
        )));
    }
    Ok(ModelFile {
        model,
        norm_stats,
        extra,
        checksum: stored,
    })
}

/// Writes the container atomically (temporary file, then rename).
pub fn save_model(model: &StressNet, stats: &NormStats, path: impl AsRef<Path>) -> Result<()> {
    crate::io_util::write_atomic(path.as_ref(), &encode_model(model, stats, None))
}

pub(crate) fn save_model_with(model: &StressNet, stats: &NormStats, extra: &[u8], path: &Path) -> Result<()> {
    crate::io_util::write_atomic(path, &encode_model(model, stats, Some(extra)))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(StressNet, NormStats)> {
    let file = read_model_file(path)?;
    Ok((file.model, file.norm_stats))
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    decode_model(&std::fs::read(path)?)
}

//! OWPC little-endian binary layout:
//!
//! ```text
//! magic "OWPC0001" | u32 N | u32 C | u32 flags | [u32 c if flags bit2]
//! coords N×3 f32 | logits N×C f32 | [labels N i32 if bit0] | [features N×c f32 if bit1]
//! ```

use ndarray::Array2;

use super::{PointProbabilityCloud, UNKNOWN_LABEL};
use crate::error::{Error, Location, Result};
use crate::scalar::Real;

pub const OWPC_MAGIC: &[u8; 8] = b"OWPC0001";
pub const FLAG_LABELS: u32 = 1;
pub const FLAG_FEATURES: u32 = 1 << 1;
pub const FLAG_FEATURE_COUNT: u32 = 1 << 2;
const KNOWN_FLAGS: u32 = FLAG_LABELS | FLAG_FEATURES | FLAG_FEATURE_COUNT;

pub fn encode<R: Real>(cloud: &PointProbabilityCloud<R>) -> Result<Vec<u8>> {
    let n = cloud.n_points();
    let c = cloud.n_classes();
    let mut flags = 0;
    if cloud.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if cloud.features.is_some() {
        flags |= FLAG_FEATURES | FLAG_FEATURE_COUNT;
    }
    let mut out = Vec::with_capacity(20 + 4 * n * (3 + c + 1));
    out.extend_from_slice(OWPC_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    if let Some(f) = &cloud.features {
        out.extend_from_slice(&(f.ncols() as u32).to_le_bytes());
    }
    let narrow = |out: &mut Vec<u8>, v: R| -> Result<()> {
        let x = v.to_f32_lossy();
        if !x.is_finite() && v.is_finite() {
            return Err(Error::InvalidCloud(format!("value {v} overflows f32")));
        }
        out.extend_from_slice(&x.to_le_bytes());
        Ok(())
    };
    for &v in cloud.coords.iter() {
        narrow(&mut out, v)?;
    }
    for &v in cloud.logits.iter() {
        narrow(&mut out, v)?;
    }
    if let Some(labels) = &cloud.labels {
        for &l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    if let Some(f) = &cloud.features {
        for &v in f.iter() {
            narrow(&mut out, v)?;
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn loc(&self) -> Location {
        Location::Byte(self.pos as u64)
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::DimensionMismatch {
                location: self.loc(),
                message: format!(
                    "{what} needs {len} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn header_u32(&mut self, what: &str) -> Result<u32> {
        if self.bytes.len() - self.pos < 4 {
            return Err(Error::MalformedHeader {
                location: self.loc(),
                message: format!("truncated before {what}"),
            });
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn real_block<R: Real>(&mut self, rows: usize, cols: usize, what: &str) -> Result<Array2<R>> {
        let start = self.pos;
        let raw = self.take(rows * cols * 4, what)?;
        let mut values = Vec::with_capacity(rows * cols);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(chunk.try_into().unwrap());
            if !x.is_finite() {
                return Err(Error::NonFiniteValue {
                    location: Location::Byte((start + 4 * i) as u64),
                });
            }
            values.push(R::from_f32_exact(x));
        }
        Ok(Array2::from_shape_vec((rows, cols), values).expect("block shape"))
    }
}

pub fn decode<R: Real>(bytes: &[u8]) -> Result<PointProbabilityCloud<R>> {
    if bytes.len() < 8 || &bytes[..8] != OWPC_MAGIC {
        return Err(Error::MalformedHeader {
            location: Location::Byte(0),
            message: "missing OWPC0001 magic".into(),
        });
    }
    let mut cur = Cursor { bytes, pos: 8 };
    let n = cur.header_u32("point count")? as usize;
    let c = cur.header_u32("class count")? as usize;
    let flags_at = cur.loc();
    let flags = cur.header_u32("flags")?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(Error::MalformedHeader {
            location: flags_at,
            message: format!("unknown flag bits {:#x}", flags & !KNOWN_FLAGS),
        });
    }
    if (flags & FLAG_FEATURES != 0) != (flags & FLAG_FEATURE_COUNT != 0) {
        return Err(Error::MalformedHeader {
            location: flags_at,
            message: "feature flag and feature-count flag must be set together".into(),
        });
    }
    if n == 0 {
        return Err(Error::MalformedHeader {
            location: Location::Byte(8),
            message: "point count must be at least 1".into(),
        });
    }
    if c < 2 {
        return Err(Error::MalformedHeader {
            location: Location::Byte(12),
            message: format!("class count {c} below 2"),
        });
    }
    let channels = if flags & FLAG_FEATURE_COUNT != 0 {
        Some(cur.header_u32("feature channel count")? as usize)
    } else {
        None
    };

    let coords = cur.real_block(n, 3, "coords")?;
    let logits = cur.real_block(n, c, "logits")?;
    let labels = if flags & FLAG_LABELS != 0 {
        let start = cur.pos;
        let raw = cur.take(n * 4, "labels")?;
        let mut labels = Vec::with_capacity(n);
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let l = i32::from_le_bytes(chunk.try_into().unwrap());
            if l < UNKNOWN_LABEL {
                return Err(Error::LabelOutOfRange {
                    location: Location::Byte((start + 4 * i) as u64),
                    label: l as i64,
                });
            }
            labels.push(l);
        }
        Some(labels)
    } else {
        None
    };
    let features = match channels {
        Some(ch) if flags & FLAG_FEATURES != 0 => Some(cur.real_block(n, ch, "features")?),
        _ => None,
    };
    if cur.pos != bytes.len() {
        return Err(Error::DimensionMismatch {
            location: cur.loc(),
            message: format!("{} trailing bytes", bytes.len() - cur.pos),
        });
    }
    PointProbabilityCloud::new(coords, logits, labels, features)
}

use std::io::{Read, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_MAX_FRAME_BYTES: usize = 256 << 20;

/// A float array: shape plus base64 of the little-endian `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireArray {
    pub shape: Vec<usize>,
    pub data: String,
}

impl WireArray {
    pub fn encode(shape: Vec<usize>, values: &[f64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let mut bytes = Vec::with_capacity(8 * values.len());
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        WireArray { shape, data: STANDARD.encode(bytes) }
    }

    pub fn vector(values: &[f64]) -> Self {
        WireArray::encode(vec![values.len()], values)
    }

    /// Rows of equal length as a 2-D array.
    pub fn rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("ragged rows cannot be encoded"));
        }
        Ok(WireArray::encode(vec![rows.len(), width], &rows.concat()))
    }

    pub fn decode(&self) -> Result<Vec<f64>> {
        let bytes = STANDARD.decode(&self.data).map_err(|e| Error::Protocol(format!("bad base64: {e}")))?;
        let n: usize = self.shape.iter().product();
        if bytes.len() != 8 * n {
            return Err(Error::Protocol(format!("array of shape {:?} carries {} bytes", self.shape, bytes.len())));
        }
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
    }

    /// Decodes a 2-D array into rows.
    pub fn decode_rows(&self) -> Result<Vec<Vec<f64>>> {
        let [n, m] = self.shape[..] else {
            return Err(Error::Protocol(format!("expected a 2-D array, got shape {:?}", self.shape)));
        };
        let v = self.decode()?;
        Ok(if m == 0 { vec![Vec::new(); n] } else { v.chunks(m).map(<[f64]>::to_vec).collect() })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        WireArray::encode(vec![m.rows(), m.cols()], m.values())
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let [r, c] = self.shape[..] else {
            return Err(Error::Protocol(format!("expected a matrix, got shape {:?}", self.shape)));
        };
        DenseMatrix::from_vec(r, c, self.decode()?)
    }
}

/// A sparse matrix on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCsr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: WireArray,
}

impl WireCsr {
    pub fn encode(m: &CsrMatrix) -> Self {
        WireCsr {
            rows: m.rows(),
            cols: m.cols(),
            indptr: m.indptr().to_vec(),
            indices: m.indices().to_vec(),
            values: WireArray::vector(m.values()),
        }
    }

    pub fn decode(&self) -> Result<CsrMatrix> {
        CsrMatrix::from_raw(self.rows, self.cols, self.indptr.clone(), self.indices.clone(), self.values.decode()?)
            .map_err(|e| Error::Protocol(format!("bad sparse matrix: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub cmd: String,
    #[serde(default)]
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

/// Writes one frame: a 4-byte little-endian length, then the body.
pub fn write_frame(mut w: impl Write, body: &[u8]) -> Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| Error::Protocol("frame exceeds 4 GiB".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// Outcome of reading a frame.
#[derive(Debug)]
pub enum Frame {
    Body(Vec<u8>),
    /// The peer closed the stream between frames.
    Closed,
    /// The announced length exceeds the cap; the body was not read.
    TooLarge(usize),
}

pub fn read_frame(mut r: impl Read, max_bytes: usize) -> Result<Frame> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(Frame::Closed),
            0 => return Err(Error::Protocol("stream ended inside a length prefix".into())),
            k => got += k,
        }
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > max_bytes {
        return Ok(Frame::TooLarge(n));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Frame::Body(body))
}

pub fn send_json<T: Serialize>(w: impl Write, msg: &T) -> Result<()> {
    write_frame(w, &serde_json::to_vec(msg)?)
}

//! Binary array container used for all CLI data exchange.
//!
//! Layout: one UTF-8 JSON header line
//! `{"dtype":"c64"|"f32","shape":[..],"order":"row-major"}` terminated by
//! `'\n'`, followed by the raw little-endian element bytes. Complex values
//! are stored as interleaved (re, im) f32 pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::C32;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    shape: Vec<usize>,
    order: String,
}

/// Array payload of a container file.
#[derive(Debug, Clone)]
pub enum Payload {
    F32(ArrayD<f32>),
    C64(ArrayD<C32>),
}

impl Payload {
    pub fn shape(&self) -> &[usize] {
        match self {
            Payload::F32(a) => a.shape(),
            Payload::C64(a) => a.shape(),
        }
    }

    pub fn into_f32(self) -> Result<ArrayD<f32>> {
        match self {
            Payload::F32(a) => Ok(a),
            Payload::C64(_) => Err(Error::Format("expected f32 container, found c64".into())),
        }
    }

    pub fn into_c64(self) -> Result<ArrayD<C32>> {
        match self {
            Payload::C64(a) => Ok(a),
            Payload::F32(_) => Err(Error::Format("expected c64 container, found f32".into())),
        }
    }
}

fn write_header<W: Write>(w: &mut W, dtype: &str, shape: &[usize]) -> Result<()> {
    let header = Header {
        dtype: dtype.into(),
        shape: shape.to_vec(),
        order: "row-major".into(),
    };
    let mut line = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    Ok(())
}

pub fn write_f32<W: Write>(w: &mut W, a: &ArrayD<f32>) -> Result<()> {
    write_header(w, "f32", a.shape())?;
    let mut buf = Vec::with_capacity(a.len() * 4);
    for v in a.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_c64<W: Write>(w: &mut W, a: &ArrayD<C32>) -> Result<()> {
    write_header(w, "c64", a.shape())?;
    let mut buf = Vec::with_capacity(a.len() * 8);
    for v in a.iter() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read<R: Read>(r: &mut R) -> Result<Payload> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(Error::Format("missing container header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 4096 {
            return Err(Error::Format("container header line too long".into()));
        }
    }
    let header: Header =
        serde_json::from_slice(&line).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.order != "row-major" {
        return Err(Error::Format(format!("unsupported order {:?}", header.order)));
    }
    let n: usize = header.shape.iter().product();
    match header.dtype.as_str() {
        "f32" => {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            let vals: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&header.shape), vals)
                .map_err(|e| Error::Format(e.to_string()))?;
            Ok(Payload::F32(arr))
        }
        "c64" => {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            let vals: Vec<C32> = buf
                .chunks_exact(8)
                .map(|c| {
                    C32::new(
                        f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                        f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                    )
                })
                .collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&header.shape), vals)
                .map_err(|e| Error::Format(e.to_string()))?;
            Ok(Payload::C64(arr))
        }
        other => Err(Error::Format(format!("unsupported dtype {other:?}"))),
    }
}

pub fn save_f32(path: &Path, a: &ArrayD<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_f32(&mut w, a)
}

pub fn save_c64(path: &Path, a: &ArrayD<C32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_c64(&mut w, a)
}

pub fn load(path: &Path) -> Result<Payload> {
    let mut r = BufReader::new(File::open(path)?);
    read(&mut r)
}

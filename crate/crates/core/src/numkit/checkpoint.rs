//! Binary checkpoint format for [`Mlp`].
//!
//! ```text
//! magic        8 bytes   b"CBMLP\0v1"
//! layer_count  u32 LE
//! normalize    u8        0 or 1
//! per layer:   in u32 LE, out u32 LE, activation u8 (0 relu, 1 sigmoid, 2 identity)
//! payload:     per layer, weight (in × out, row-major) then bias (out), f64 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::mlp::{Activation, Layer, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CBMLP\0v1";

pub fn encode(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + net.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    out.push(net.normalize_output() as u8);
    for l in net.layers() {
        out.extend_from_slice(&(l.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.output_dim() as u32).to_le_bytes());
        out.push(l.activation.code());
    }
    for l in net.layers() {
        for v in l.weight.as_slice().iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Mlp> {
    let mut cur = bytes;
    let mut magic = [0u8; 8];
    read_exact(&mut cur, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an MLP checkpoint (bad magic)".into()));
    }
    let count = read_u32(&mut cur)? as usize;
    let normalize = match read_u8(&mut cur)? {
        0 => false,
        1 => true,
        v => return Err(Error::Parse(format!("bad normalize flag {v}"))),
    };
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        let i = read_u32(&mut cur)? as usize;
        let o = read_u32(&mut cur)? as usize;
        let code = read_u8(&mut cur)?;
        let act = Activation::from_code(code)
            .ok_or_else(|| Error::Parse(format!("unknown activation code {code}")))?;
        dims.push((i, o, act));
    }
    let mut layers = Vec::with_capacity(count);
    for (i, o, activation) in dims {
        let weight = Matrix::from_vec(i, o, read_f64s(&mut cur, i * o)?)?;
        let bias = read_f64s(&mut cur, o)?;
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    if !cur.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes", cur.len())));
    }
    Mlp::new(layers, normalize)
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Mlp> {
    decode(&std::fs::read(path)?)
}

fn read_exact(cur: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::Parse("truncated checkpoint".into()))
}

fn read_u8(cur: &mut &[u8]) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(cur, &mut b)?;
    Ok(b[0])
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(cur: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(cur, &mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

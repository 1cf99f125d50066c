//! Flat binary checkpoints.
//!
//! Layout (little endian): 8 magic bytes `RLSPMLP1`, activation code (u8),
//! layer count (u32), then per layer `rows` and `cols` (u32) followed by the
//! row-major weight matrix and the bias vector as f64. Normalizers are stored
//! as magic `RLSPNRM1`, dimension (u32), means, stds.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Mlp};
use super::normalize::Normalizer;
use crate::error::{Error, Result};

const MLP_MAGIC: &[u8; 8] = b"RLSPMLP1";
const NORM_MAGIC: &[u8; 8] = b"RLSPNRM1";

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::arg("dimension exceeds u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn write_f64s<'a, W: Write>(w: &mut W, xs: impl Iterator<Item = &'a f64>) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::parse("checkpoint", format!("bad magic bytes {m:?}")));
    }
    Ok(())
}

pub fn write_mlp<W: Write>(net: &Mlp, w: &mut W) -> Result<()> {
    w.write_all(MLP_MAGIC)?;
    w.write_all(&[net.activation.code()])?;
    write_u32(w, net.weights.len())?;
    for (wt, b) in net.weights.iter().zip(&net.biases) {
        write_u32(w, wt.nrows())?;
        write_u32(w, wt.ncols())?;
        write_f64s(w, wt.iter())?;
        write_f64s(w, b.iter())?;
    }
    Ok(())
}

pub fn read_mlp<R: Read>(r: &mut R) -> Result<Mlp> {
    expect_magic(r, MLP_MAGIC)?;
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let activation =
        Activation::from_code(code[0]).ok_or_else(|| Error::parse("checkpoint", "unknown activation"))?;
    let layers = read_u32(r)?;
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for _ in 0..layers {
        let (rows, cols) = (read_u32(r)?, read_u32(r)?);
        let w = Array2::from_shape_vec((rows, cols), read_f64s(r, rows * cols)?)
            .map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        weights.push(w);
        biases.push(Array1::from_vec(read_f64s(r, cols)?));
    }
    if layers == 0 {
        return Err(Error::parse("checkpoint", "network has no layers"));
    }
    Ok(Mlp {
        weights,
        biases,
        activation,
    })
}

pub fn write_normalizer<W: Write>(n: &Normalizer, w: &mut W) -> Result<()> {
    w.write_all(NORM_MAGIC)?;
    write_u32(w, n.dim())?;
    write_f64s(w, n.mean.iter())?;
    write_f64s(w, n.std.iter())
}

pub fn read_normalizer<R: Read>(r: &mut R) -> Result<Normalizer> {
    expect_magic(r, NORM_MAGIC)?;
    let dim = read_u32(r)?;
    Ok(Normalizer {
        mean: Array1::from_vec(read_f64s(r, dim)?),
        std: Array1::from_vec(read_f64s(r, dim)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;

    #[test]
    fn mlp_round_trip_is_bitwise() {
        let net = Mlp::new(&[3, 7, 2], Activation::Tanh, &mut seeded_rng(4)).unwrap();
        let mut buf = Vec::new();
        write_mlp(&net, &mut buf).unwrap();
        let back = read_mlp(&mut buf.as_slice()).unwrap();
        assert_eq!(net, back);
        let mut again = Vec::new();
        write_mlp(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"NOTMAGIC".to_vec();
        assert!(read_mlp(&mut buf.as_slice()).is_err());
    }
}

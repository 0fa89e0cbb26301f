//! Binary weight checkpoints.
//!
//! Layout: magic `LPW1`, u64 layer count, then per layer a u32 kind tag,
//! a u64 blob count and for each blob a shape list (u64 rank + u64
//! extents, little-endian) followed by the f32 little-endian payload.
//! Parameter tensors and scalar hyperparameters are both stored as blobs.
//!
//! Trained model files reuse this stream prefixed with a model-kind byte
//! and a model-specific header; see the `sae` and `ama2` modules.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::ndcore::layers::{Activation, LayerSpec, BATCHNORM_EPS, BATCHNORM_MOMENTUM};
use crate::ndcore::net::Network;
use crate::ndcore::tensor::Tensor;

pub const WEIGHT_MAGIC: &[u8; 4] = b"LPW1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Sae = 1,
    Aae = 2,
    StateDisc = 3,
    ActionDisc = 4,
}

impl ModelKind {
    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(ModelKind::Sae),
            2 => Ok(ModelKind::Aae),
            3 => Ok(ModelKind::StateDisc),
            4 => Ok(ModelKind::ActionDisc),
            other => Err(Error::Format(format!("unknown model kind byte {other}"))),
        }
    }

    pub fn stage_name(self) -> &'static str {
        match self {
            ModelKind::Sae => "sae",
            ModelKind::Aae => "aae",
            ModelKind::StateDisc => "sd",
            ModelKind::ActionDisc => "ad",
        }
    }
}

// ── primitive readers/writers ──────────────────────────────────────────

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_f32<W: Write>(w: &mut W, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

fn write_blob<W: Write>(w: &mut W, shape: &[usize], data: &[f32]) -> Result<()> {
    write_u64(w, shape.len() as u64)?;
    for &e in shape {
        write_u64(w, e as u64)?;
    }
    for &v in data {
        write_f32(w, v)?;
    }
    Ok(())
}

fn read_blob<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f32>)> {
    let rank = read_u64(r)? as usize;
    if rank > 8 {
        return Err(Error::Format(format!("implausible blob rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(read_f32(r)?);
    }
    Ok((shape, data))
}

fn write_tensor_blob<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    write_blob(w, t.shape(), t.data())
}

fn read_tensor_blob<R: Read>(r: &mut R) -> Result<Tensor> {
    let (shape, data) = read_blob(r)?;
    Ok(Tensor::new(shape, data))
}

fn write_scalars<W: Write>(w: &mut W, vals: &[f32]) -> Result<()> {
    write_blob(w, &[vals.len()], vals)
}

fn read_scalars<R: Read>(r: &mut R, expect: usize) -> Result<Vec<f32>> {
    let (shape, data) = read_blob(r)?;
    if shape != [expect] {
        return Err(Error::Format(format!(
            "expected {expect} scalar hyperparameters, got shape {shape:?}"
        )));
    }
    Ok(data)
}

// ── layer codec ────────────────────────────────────────────────────────

fn layer_tag(layer: &LayerSpec) -> u32 {
    match layer {
        LayerSpec::Dense { .. } => 1,
        LayerSpec::Conv2d { .. } => 2,
        LayerSpec::BatchNorm { .. } => 3,
        LayerSpec::Dropout { .. } => 4,
        LayerSpec::GaussianNoise { .. } => 5,
        LayerSpec::Activation(_) => 6,
        LayerSpec::GumbelSoftmax { .. } => 7,
        LayerSpec::Reshape { .. } => 8,
        LayerSpec::Concat => 9,
    }
}

fn write_layer<W: Write>(w: &mut W, layer: &LayerSpec) -> Result<()> {
    write_u32(w, layer_tag(layer))?;
    match layer {
        LayerSpec::Dense { weight, bias } | LayerSpec::Conv2d { weight, bias } => {
            write_u64(w, 2)?;
            write_tensor_blob(w, weight)?;
            write_tensor_blob(w, bias)?;
        }
        LayerSpec::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            momentum,
            eps,
        } => {
            write_u64(w, 5)?;
            write_tensor_blob(w, gamma)?;
            write_tensor_blob(w, beta)?;
            write_tensor_blob(w, running_mean)?;
            write_tensor_blob(w, running_var)?;
            write_scalars(w, &[*momentum, *eps])?;
        }
        LayerSpec::Dropout { rate } => {
            write_u64(w, 1)?;
            write_scalars(w, &[*rate])?;
        }
        LayerSpec::GaussianNoise { sigma } => {
            write_u64(w, 1)?;
            write_scalars(w, &[*sigma])?;
        }
        LayerSpec::Activation(act) => {
            let code = match act {
                Activation::Relu => 0.0,
                Activation::Tanh => 1.0,
                Activation::Sigmoid => 2.0,
            };
            write_u64(w, 1)?;
            write_scalars(w, &[code])?;
        }
        LayerSpec::GumbelSoftmax { vars, cats, kl_weight } => {
            write_u64(w, 1)?;
            write_scalars(w, &[*vars as f32, *cats as f32, *kl_weight])?;
        }
        LayerSpec::Reshape { dims } => {
            write_u64(w, 1)?;
            let vals: Vec<f32> = dims.iter().map(|d| *d as f32).collect();
            write_scalars(w, &vals)?;
        }
        LayerSpec::Concat => {
            write_u64(w, 0)?;
        }
    }
    Ok(())
}

fn expect_blobs<R: Read>(r: &mut R, expect: u64, kind: &str) -> Result<()> {
    let n = read_u64(r)?;
    if n != expect {
        return Err(Error::Format(format!("{kind}: expected {expect} blobs, got {n}")));
    }
    Ok(())
}

fn read_layer<R: Read>(r: &mut R) -> Result<LayerSpec> {
    let tag = read_u32(r)?;
    match tag {
        1 | 2 => {
            expect_blobs(r, 2, "dense/conv2d")?;
            let weight = read_tensor_blob(r)?;
            let bias = read_tensor_blob(r)?;
            if tag == 1 {
                Ok(LayerSpec::Dense { weight, bias })
            } else {
                Ok(LayerSpec::Conv2d { weight, bias })
            }
        }
        3 => {
            expect_blobs(r, 5, "batchnorm")?;
            let gamma = read_tensor_blob(r)?;
            let beta = read_tensor_blob(r)?;
            let running_mean = read_tensor_blob(r)?;
            let running_var = read_tensor_blob(r)?;
            let hy = read_scalars(r, 2)?;
            Ok(LayerSpec::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                momentum: if hy[0] > 0.0 { hy[0] } else { BATCHNORM_MOMENTUM },
                eps: if hy[1] > 0.0 { hy[1] } else { BATCHNORM_EPS },
            })
        }
        4 => {
            expect_blobs(r, 1, "dropout")?;
            let hy = read_scalars(r, 1)?;
            Ok(LayerSpec::Dropout { rate: hy[0] })
        }
        5 => {
            expect_blobs(r, 1, "gaussian_noise")?;
            let hy = read_scalars(r, 1)?;
            Ok(LayerSpec::GaussianNoise { sigma: hy[0] })
        }
        6 => {
            expect_blobs(r, 1, "activation")?;
            let hy = read_scalars(r, 1)?;
            let act = match hy[0] as i32 {
                0 => Activation::Relu,
                1 => Activation::Tanh,
                2 => Activation::Sigmoid,
                other => return Err(Error::Format(format!("unknown activation code {other}"))),
            };
            Ok(LayerSpec::Activation(act))
        }
        7 => {
            expect_blobs(r, 1, "gumbel_softmax")?;
            let hy = read_scalars(r, 3)?;
            Ok(LayerSpec::GumbelSoftmax {
                vars: hy[0] as usize,
                cats: hy[1] as usize,
                kl_weight: hy[2],
            })
        }
        8 => {
            expect_blobs(r, 1, "reshape")?;
            let (shape, data) = read_blob(r)?;
            if shape.len() != 1 {
                return Err(Error::Format("reshape dims blob must be rank 1".into()));
            }
            Ok(LayerSpec::Reshape { dims: data.iter().map(|v| *v as usize).collect() })
        }
        9 => {
            expect_blobs(r, 0, "concat")?;
            Ok(LayerSpec::Concat)
        }
        other => Err(Error::Format(format!("unknown layer tag {other}"))),
    }
}

// ── network stream ─────────────────────────────────────────────────────

/// Writes the magic + layer stream.
pub fn write_network<W: Write>(w: &mut W, net: &Network) -> Result<()> {
    w.write_all(WEIGHT_MAGIC)?;
    write_layer_stream(w, net)
}

/// Layer stream without the magic, for embedding inside model files.
pub fn write_layer_stream<W: Write>(w: &mut W, net: &Network) -> Result<()> {
    write_u64(w, net.layers.len() as u64)?;
    for layer in &net.layers {
        write_layer(w, layer)?;
    }
    Ok(())
}

pub fn expect_magic<R: Read>(r: &mut R) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHT_MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?}, expected LPW1",
            String::from_utf8_lossy(&magic)
        )));
    }
    Ok(())
}

/// Reads a magic-prefixed network stream. The input shape is not part of
/// the wire format, so the caller supplies it.
pub fn read_network<R: Read>(r: &mut R, input_shape: Vec<usize>) -> Result<Network> {
    expect_magic(r)?;
    read_layer_stream(r, input_shape)
}

pub fn read_layer_stream<R: Read>(r: &mut R, input_shape: Vec<usize>) -> Result<Network> {
    let count = read_u64(r)? as usize;
    if count > 4096 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        layers.push(read_layer(r)?);
    }
    Ok(Network::from_layers(input_shape, layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::rng::RngStream;

    #[test]
    fn network_roundtrip_is_exact() {
        let net = Network::builder(vec![1, 6, 6], RngStream::new(3))
            .gaussian_noise(0.4)
            .conv2d(3, 3, 4)
            .tanh()
            .batchnorm()
            .dropout(0.4)
            .dense(8)
            .reshape(&[4, 2])
            .gumbel_softmax(4, 2, 1.0)
            .dense(36)
            .sigmoid()
            .build();

        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        let back = read_network(&mut buf.as_slice(), vec![1, 6, 6]).unwrap();
        assert_eq!(net.layers.len(), back.layers.len());
        let mut a = Vec::new();
        net.visit_params(|p| a.extend_from_slice(p.data()));
        let mut b = Vec::new();
        back.visit_params(|p| b.extend_from_slice(p.data()));
        assert_eq!(a, b);
        assert_eq!(
            net.output_shape(None).unwrap(),
            back.output_shape(None).unwrap()
        );
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"XXXX\0\0\0\0\0\0\0\0".to_vec();
        assert!(read_network(&mut buf.as_slice(), vec![1]).is_err());
    }
}

//! On-disk dataset formats: `LPT1` tensor files (images stacked on axis 0)
//! and `LPB1` packed bitvector files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::bits::LatentBitVector;
use crate::error::{Error, Result};
use crate::ndcore::checkpoint::{read_f32, read_u64, write_f32, write_u64};
use crate::ndcore::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"LPT1";
pub const BITS_MAGIC: &[u8; 4] = b"LPB1";

/// Writes `LPT1`: magic, rank, extents (u64 LE), f32 LE payload.
pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    write_u64(w, t.rank() as u64)?;
    for &e in t.shape() {
        write_u64(w, e as u64)?;
    }
    for &v in t.data() {
        write_f32(w, v)?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!(
            "bad tensor magic {:?}, expected LPT1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let rank = read_u64(r)? as usize;
    if rank > 8 {
        return Err(Error::Format(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = vec![0.0f32; n];
    for v in data.iter_mut() {
        *v = read_f32(r)?;
    }
    Ok(Tensor::new(shape, data))
}

pub fn save_tensor<P: AsRef<Path>>(path: P, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t)
}

pub fn load_tensor<P: AsRef<Path>>(path: P) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

/// Writes `LPB1`: magic, count, bit width, then packed bits per vector,
/// LSB-first, each vector padded to whole bytes.
pub fn write_bitvectors<W: Write>(w: &mut W, vectors: &[LatentBitVector]) -> Result<()> {
    w.write_all(BITS_MAGIC)?;
    write_u64(w, vectors.len() as u64)?;
    let n = vectors.first().map_or(0, |v| v.len());
    write_u64(w, n as u64)?;
    for v in vectors {
        if v.len() != n {
            return Err(Error::Length { expected: n, actual: v.len() });
        }
        w.write_all(&v.to_packed_bytes())?;
    }
    Ok(())
}

pub fn read_bitvectors<R: Read>(r: &mut R) -> Result<Vec<LatentBitVector>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BITS_MAGIC {
        return Err(Error::Format(format!(
            "bad bitvector magic {:?}, expected LPB1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u64(r)? as usize;
    let n = read_u64(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Format(format!("implausible bit width {n}")));
    }
    let bytes_per = n.div_ceil(8);
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; bytes_per];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(LatentBitVector::from_packed_bytes(n, &buf)?);
    }
    Ok(out)
}

pub fn save_bitvectors<P: AsRef<Path>>(path: P, vectors: &[LatentBitVector]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bitvectors(&mut w, vectors)
}

pub fn load_bitvectors<P: AsRef<Path>>(path: P) -> Result<Vec<LatentBitVector>> {
    let mut r = BufReader::new(File::open(path)?);
    read_bitvectors(&mut r)
}

/// Image transition pairs plus their encoded bitvector pairs once a state
/// encoder has run over them.
#[derive(Debug, Clone)]
pub struct TransitionDataset {
    /// `[T, H, W]` before-images.
    pub pre_images: Tensor,
    /// `[T, H, W]` after-images.
    pub suc_images: Tensor,
    /// Encoded (s, t) pairs, filled by the encoding stage.
    pub encoded: Option<Vec<(LatentBitVector, LatentBitVector)>>,
}

impl TransitionDataset {
    pub fn new(pre_images: Tensor, suc_images: Tensor) -> Result<Self> {
        if pre_images.shape() != suc_images.shape() {
            return Err(Error::Shape {
                expected: pre_images.shape_string(),
                actual: suc_images.shape_string(),
            });
        }
        if pre_images.batch() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(TransitionDataset { pre_images, suc_images, encoded: None })
    }

    pub fn len(&self) -> usize {
        self.pre_images.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All images stacked: before images then after images (duplicates
    /// included), the training set for the state autoencoder.
    pub fn all_images(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.pre_images.len() + self.suc_images.len());
        data.extend_from_slice(self.pre_images.data());
        data.extend_from_slice(self.suc_images.data());
        let mut shape = self.pre_images.shape().to_vec();
        shape[0] *= 2;
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_file_roundtrip() {
        let t = Tensor::new(vec![3, 2, 2], (0..12).map(|i| i as f32 * 0.5).collect());
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        let back = read_tensor(&mut buf.as_slice()).unwrap();
        assert_eq!(t.shape(), back.shape());
        assert_eq!(t.data(), back.data());
    }

    #[test]
    fn bitvector_file_roundtrip() {
        let vs: Vec<LatentBitVector> = ["10110", "00001", "11111", "00000"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let mut buf = Vec::new();
        write_bitvectors(&mut buf, &vs).unwrap();
        let back = read_bitvectors(&mut buf.as_slice()).unwrap();
        assert_eq!(vs, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let buf = b"NOPE".to_vec();
        assert!(read_tensor(&mut buf.as_slice()).is_err());
        assert!(read_bitvectors(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn transition_dataset_stacks_images() {
        let pre = Tensor::new(vec![2, 2, 2], vec![0.0; 8]);
        let suc = Tensor::new(vec![2, 2, 2], vec![1.0; 8]);
        let ds = TransitionDataset::new(pre, suc).unwrap();
        let all = ds.all_images();
        assert_eq!(all.shape(), &[4, 2, 2]);
        assert_eq!(all.data()[0], 0.0);
        assert_eq!(all.data()[10], 1.0);
    }
}

//! Image import/export: binary PGM (P5) for single grayscale images, PPM
//! (P6) strips for plan visualization, and the big-endian IDX format for
//! digit datasets.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndcore::tensor::Tensor;

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an `[H, W]` tensor as binary PGM, mapping [0,1] to 0..255.
pub fn write_pgm<P: AsRef<Path>>(path: P, img: &Tensor) -> Result<()> {
    if img.rank() != 2 {
        return Err(Error::Shape {
            expected: "[H, W] image".into(),
            actual: img.shape_string(),
        });
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize(*v)).collect();
    f.write_all(&bytes)?;
    Ok(())
}

fn read_pnm_token<R: Read>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    // skip whitespace and comments
    loop {
        r.read_exact(&mut byte)?;
        match byte[0] {
            b'#' => {
                while byte[0] != b'\n' {
                    r.read_exact(&mut byte)?;
                }
            }
            c if c.is_ascii_whitespace() => {}
            c => {
                tok.push(c as char);
                break;
            }
        }
    }
    loop {
        r.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            break;
        }
        tok.push(byte[0] as char);
    }
    Ok(tok)
}

/// Reads a binary PGM into an `[H, W]` tensor scaled to [0,1].
pub fn read_pgm<P: AsRef<Path>>(path: P) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_pnm_token(&mut r)?;
    if magic != "P5" {
        return Err(Error::Format(format!("expected PGM magic P5, got {magic}")));
    }
    let w: usize = read_pnm_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PGM width".into()))?;
    let h: usize = read_pnm_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PGM height".into()))?;
    let maxval: u32 = read_pnm_token(&mut r)?
        .parse()
        .map_err(|_| Error::Format("bad PGM maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let mut bytes = vec![0u8; w * h];
    r.read_exact(&mut bytes)?;
    let data: Vec<f32> = bytes.iter().map(|b| *b as f32 / 255.0).collect();
    Ok(Tensor::new(vec![h, w], data))
}

/// Writes a horizontal strip of equally sized grayscale frames as P6 PPM,
/// separated by thin mid-gray gutters.
pub fn write_ppm_strip<P: AsRef<Path>>(path: P, frames: &[Tensor], gap: usize) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (h, w) = (frames[0].shape()[0], frames[0].shape()[1]);
    for f in frames {
        if f.shape() != [h, w] {
            return Err(Error::Shape {
                expected: format!("[{h}, {w}]"),
                actual: f.shape_string(),
            });
        }
    }
    let total_w = frames.len() * w + gap * (frames.len() - 1);
    let mut row = vec![0u8; total_w * 3];
    let mut f = BufWriter::new(File::create(path)?);
    write!(f, "P6\n{total_w} {h}\n255\n")?;
    for y in 0..h {
        let mut x = 0;
        for (i, frame) in frames.iter().enumerate() {
            if i > 0 {
                for _ in 0..gap {
                    row[x * 3] = 128;
                    row[x * 3 + 1] = 32;
                    row[x * 3 + 2] = 32;
                    x += 1;
                }
            }
            for v in &frame.data()[y * w..(y + 1) * w] {
                let q = quantize(*v);
                row[x * 3] = q;
                row[x * 3 + 1] = q;
                row[x * 3 + 2] = q;
                x += 1;
            }
        }
        f.write_all(&row)?;
    }
    Ok(())
}

fn read_be_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads IDX image data (magic 0x00000803) into `[count, H, W]`, scaled to
/// [0,1].
pub fn read_idx_images<P: AsRef<Path>>(path: P) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_be_u32(&mut r)?;
    if magic != 0x0000_0803 {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let count = read_be_u32(&mut r)? as usize;
    let h = read_be_u32(&mut r)? as usize;
    let w = read_be_u32(&mut r)? as usize;
    let mut bytes = vec![0u8; count * h * w];
    r.read_exact(&mut bytes)?;
    let data: Vec<f32> = bytes.iter().map(|b| *b as f32 / 255.0).collect();
    Ok(Tensor::new(vec![count, h, w], data))
}

/// Reads IDX label data (magic 0x00000801).
pub fn read_idx_labels<P: AsRef<Path>>(path: P) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_be_u32(&mut r)?;
    if magic != 0x0000_0801 {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let count = read_be_u32(&mut r)? as usize;
    let mut bytes = vec![0u8; count];
    r.read_exact(&mut bytes)?;
    Ok(bytes)
}

/// Area-average downsampling/resampling of an `[H, W]` image.
pub fn area_resample(img: &Tensor, new_h: usize, new_w: usize) -> Tensor {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut out = vec![0.0f32; new_h * new_w];
    for oy in 0..new_h {
        let y0 = oy as f64 * h as f64 / new_h as f64;
        let y1 = (oy + 1) as f64 * h as f64 / new_h as f64;
        for ox in 0..new_w {
            let x0 = ox as f64 * w as f64 / new_w as f64;
            let x1 = (ox + 1) as f64 * w as f64 / new_w as f64;
            let mut acc = 0.0f64;
            let mut area = 0.0f64;
            let mut y = y0;
            while y < y1 - 1e-12 {
                let ynext = (y.floor() + 1.0).min(y1);
                let wy = ynext - y;
                let iy = (y.floor() as usize).min(h - 1);
                let mut x = x0;
                while x < x1 - 1e-12 {
                    let xnext = (x.floor() + 1.0).min(x1);
                    let wx = xnext - x;
                    let ix = (x.floor() as usize).min(w - 1);
                    acc += img.data()[iy * w + ix] as f64 * wy * wx;
                    area += wy * wx;
                    x = xnext;
                }
                y = ynext;
            }
            out[oy * new_w + ox] = (acc / area) as f32;
        }
    }
    Tensor::new(vec![new_h, new_w], out)
}

/// Histogram equalization over 256 bins followed by a contrast stretch to
/// the full [0,1] range.
pub fn equalize_and_stretch(img: &Tensor) -> Tensor {
    let n = img.len();
    let mut hist = [0usize; 256];
    for v in img.data() {
        hist[(v.clamp(0.0, 1.0) * 255.0) as usize] += 1;
    }
    let mut cdf = [0f32; 256];
    let mut acc = 0usize;
    for (i, h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc as f32 / n as f32;
    }
    let mut data: Vec<f32> = img
        .data()
        .iter()
        .map(|v| cdf[(v.clamp(0.0, 1.0) * 255.0) as usize])
        .collect();
    let lo = data.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = data.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if hi > lo {
        for v in &mut data {
            *v = (*v - lo) / (hi - lo);
        }
    }
    Tensor::new(img.shape().to_vec(), data)
}

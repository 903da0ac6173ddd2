//! IDX image archives (unsigned-byte, three-dimensional), as used by the
//! MNIST family of datasets.

use std::fs;
use std::path::Path;

use isingarray_core::train::normalize_flux;

use crate::error::{Error, Result};

/// Images zero-padded (centred) to `size`×`size` and scaled to unit flux.
pub fn read_images(path: &Path, size: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_images(&bytes, size).map_err(|reason| Error::format(path, reason))
}

pub fn parse_images(bytes: &[u8], size: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err("not an IDX file".into());
    }
    if bytes[2] != 0x08 {
        return Err(format!("unsupported IDX element type 0x{:02x}", bytes[2]));
    }
    if bytes[3] != 3 {
        return Err(format!("expected 3 dimensions, found {}", bytes[3]));
    }
    let header = 4 + 3 * 4;
    if bytes.len() < header {
        return Err("truncated header".into());
    }
    let dim = |i: usize| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (count, rows, cols) = (dim(0), dim(1), dim(2));
    if rows > size || cols > size {
        return Err(format!("{rows}x{cols} images do not fit a {size}x{size} grid"));
    }
    let need = count
        .checked_mul(rows * cols)
        .and_then(|n| n.checked_add(header))
        .ok_or("dimensions overflow")?;
    if bytes.len() < need {
        return Err(format!("expected {need} bytes, found {}", bytes.len()));
    }
    let (oy, ox) = ((size - rows) / 2, (size - cols) / 2);
    Ok(bytes[header..need]
        .chunks_exact(rows * cols)
        .map(|raw| {
            let mut img = vec![0.0; size * size];
            for r in 0..rows {
                for c in 0..cols {
                    img[(r + oy) * size + c + ox] = raw[r * cols + c] as f64 / 255.0;
                }
            }
            normalize_flux(&mut img);
            img
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive(count: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3];
        for d in [count, rows, cols] {
            b.extend(d.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(fill, (count * rows * cols) as usize));
        b
    }

    #[test]
    fn pads_and_normalizes() {
        let imgs = parse_images(&archive(2, 28, 28, 7), 32).unwrap();
        assert_eq!(imgs.len(), 2);
        let img = &imgs[0];
        assert_eq!(img[0], 0.0);
        assert_eq!(img[2 * 32 + 1], 0.0);
        assert!(img[2 * 32 + 2] > 0.0);
        assert!((img.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_archives() {
        assert!(parse_images(&archive(1, 40, 40, 1), 32).is_err());
        let mut short = archive(2, 4, 4, 1);
        short.pop();
        assert!(parse_images(&short, 32).is_err());
        let mut wrong = archive(1, 4, 4, 1);
        wrong[2] = 0x0D;
        assert!(parse_images(&wrong, 32).is_err());
    }
}

//! CSV, PNG and parameter files.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use isingarray_core::autodiff::{ParameterSet, Tensor};
use isingarray_core::ising::IsingModel;

use crate::error::{Error, Result};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Writes a header and rows of already formatted fields.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest round-trip representation, rejecting NaN and infinities.
pub fn num(path: &Path, v: f64) -> Result<String> {
    if v.is_finite() {
        Ok(v.to_string())
    } else {
        Err(Error::NonFinite { path: path.to_path_buf() })
    }
}

pub fn nums(path: &Path, values: &[f64]) -> Result<Vec<String>> {
    values.iter().map(|&v| num(path, v)).collect()
}

pub fn strings<S: ToString>(items: &[S]) -> Vec<String> {
    items.iter().map(ToString::to_string).collect()
}

/// Header row of site names, then `n` rows of `n` values with activities on
/// the diagonal.
pub fn write_theta(path: &Path, names: &[String], matrix: &[f64]) -> Result<()> {
    let n = names.len();
    assert_eq!(matrix.len(), n * n, "theta matrix shape");
    let rows = matrix.chunks(n).map(|r| nums(path, r)).collect::<Result<Vec<_>>>()?;
    write_csv(path, names, rows)
}

pub fn read_theta(path: &Path) -> Result<(Vec<String>, IsingModel)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let names: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let n = names.len();
    let mut theta = Vec::with_capacity(n * n);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::format(path, format!("row {}: malformed value `{field}`", i + 1)))?;
            theta.push(v);
        }
    }
    if theta.len() != n * n {
        return Err(Error::format(path, format!("expected {n}x{n} values, found {}", theta.len())));
    }
    let model = IsingModel::from_matrix(n, theta).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((names, model))
}

/// `size` rows of `size` pixel values, no header.
pub fn write_grid(path: &Path, size: usize, pixels: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for row in pixels.chunks(size) {
        w.write_record(nums(path, row)?).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Square pixel grid written by [`write_grid`].
pub fn read_grid(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut pixels = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("malformed pixel `{field}`")))?;
            pixels.push(v);
        }
        rows += 1;
    }
    if rows == 0 || pixels.len() != rows * rows {
        return Err(Error::format(path, "pixel grid must be square"));
    }
    Ok((rows, pixels))
}

/// 8-bit grayscale, scaled so the brightest pixel is white.
pub fn write_png(path: &Path, size: usize, pixels: &[f64]) -> Result<()> {
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { path: path.to_path_buf() });
    }
    let peak = pixels.iter().fold(0.0f64, |m, &v| m.max(v));
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|&v| if peak > 0.0 { (v.max(0.0) / peak * 255.0).round() as u8 } else { 0 })
        .collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), size as u32, size as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::format(path, e.to_string());
    let mut w = enc.write_header().map_err(png_err)?;
    w.write_image_data(&bytes).map_err(png_err)?;
    w.finish().map_err(png_err)
}

const PARAMS_MAGIC: &[u8; 8] = b"ISARPRM1";

/// Little-endian dump of every named tensor in a parameter set.
pub fn write_params(path: &Path, params: &ParameterSet) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend((params.len() as u64).to_le_bytes());
    for p in params.iter() {
        if p.value.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { path: path.to_path_buf() });
        }
        buf.extend((p.name.len() as u64).to_le_bytes());
        buf.extend(p.name.as_bytes());
        buf.extend((p.value.rank() as u64).to_le_bytes());
        for &d in p.value.shape() {
            buf.extend((d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            buf.extend(v.to_le_bytes());
        }
    }
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(&buf).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

/// Overwrites the values of `params` from a file written by
/// [`write_params`]; names and shapes must match exactly.
pub fn read_params(path: &Path, params: &mut ParameterSet) -> Result<()> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, why.to_string());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(8)? != PARAMS_MAGIC {
        return Err(bad("not a parameter file"));
    }
    let read_u64 = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap()) as usize;
    let count = read_u64(take(8)?);
    if count != params.len() {
        return Err(bad("parameter count differs from the configured model"));
    }
    let mut loaded = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u64(take(8)?);
        let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("parameter name is not UTF-8"))?;
        let rank = read_u64(take(8)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(take(8)?));
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = take(n.checked_mul(8).ok_or_else(|| bad("shape overflows"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        loaded.push((name, Tensor::from_vec(&shape, data).map_err(|e| Error::format(path, e.to_string()))?));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    for (p, (name, value)) in params.iter_mut().zip(loaded) {
        if p.name != name || p.value.shape() != value.shape() {
            return Err(Error::format(path, format!("parameter `{name}` does not match the configured model")));
        }
        p.value = value;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

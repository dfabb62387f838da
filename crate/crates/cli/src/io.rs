//! File formats: network JSON documents, CSV matrices with a header row,
//! and grayscale images as CSV grids or 16-bit PGM.

use std::fs;
use std::path::Path;

use cgw_core::data::Image;
use cgw_core::{DiscreteMeasureHypernetwork, DiscreteMeasureNetwork, NetworkDocument};
use image::{ImageBuffer, Luma};
use ndarray::{Array2, ArrayView2};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(read_bytes(path)?)))
}

fn read_document(path: &Path) -> Result<NetworkDocument, CliError> {
    serde_json::from_slice(&read_bytes(path)?)
        .map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))
}

pub fn read_network(path: &Path) -> Result<DiscreteMeasureNetwork, CliError> {
    Ok(read_document(path)?.into_network()?)
}

pub fn read_hypernetwork(path: &Path) -> Result<DiscreteMeasureHypernetwork, CliError> {
    Ok(read_document(path)?.into_hypernetwork()?)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::new("io", format!("{}: {e}", path.display()));
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::new("io", e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("utf-8"))
}

pub fn write_matrix(path: &Path, m: ArrayView2<f64>) -> Result<(), CliError> {
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("c{c}")).collect();
    let rows: Vec<Vec<String>> = m.outer_iter().map(|r| r.iter().map(f64::to_string).collect()).collect();
    write_csv(path, &header, &rows)
}

/// Header row and numeric body of a CSV file.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let parse_err = |detail: String| CliError::new("parse", format!("{}: {detail}", path.display()));
    let header = reader.headers().map_err(|e| parse_err(e.to_string()))?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row = record
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| parse_err(format!("row {}: '{v}': {e}", line + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> Result<Array2<f64>, CliError> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| CliError::new("parse", format!("ragged matrix: {e}")))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    let (header, rows) = read_table(path)?;
    rows_to_matrix(&rows, header.len())
}

const PGM_MAX: f64 = u16::MAX as f64;

pub fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// CSV grids keep intensities exactly; PGM stores them as 16-bit levels of
/// `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image, CliError> {
    if !is_pgm(path) {
        return read_matrix(path);
    }
    let img = image::load_from_memory_with_format(&read_bytes(path)?, image::ImageFormat::Pnm)
        .map_err(|e| CliError::new("parse", format!("{}: {e}", path.display())))?
        .into_luma16();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        f64::from(img.get_pixel(c as u32, r as u32)[0]) / PGM_MAX
    }))
}

pub fn write_image(path: &Path, image: &Image) -> Result<(), CliError> {
    if !is_pgm(path) {
        return write_matrix(path, image.view());
    }
    let (h, w) = image.dim();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |c, r| {
        Luma([(image[[r as usize, c as usize]].clamp(0.0, 1.0) * PGM_MAX).round() as u16])
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

/// Pairs `(x, y)` from a CSV with columns `x,y`.
pub fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>, CliError> {
    let (header, rows) = read_table(path)?;
    if header.len() != 2 {
        return Err(CliError::new("parse", format!("{}: expected columns x,y", path.display())));
    }
    rows.iter()
        .map(|r| {
            let ok = r.iter().all(|v| *v >= 0.0 && v.fract() == 0.0);
            if ok {
                Ok((r[0] as usize, r[1] as usize))
            } else {
                Err(CliError::new("parse", format!("{}: indices must be nonnegative integers", path.display())))
            }
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = pairs.iter().map(|(a, b)| vec![a.to_string(), b.to_string()]).collect();
    write_csv(path, &["x", "y"], &rows)
}

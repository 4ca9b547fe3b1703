//! File plumbing: atomic writes, 16-bit grayscale renders with JSON
//! colorbar sidecars, and small CSV reports.

use sfd_core::{Error, Result};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::data(format!("{}: {e}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partial artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::data(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// CSV with a header row; cells are plain `Display` renderings, so float
/// columns round-trip.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Linear map of a field onto the full u16 range, rendered as 16-bit
/// grayscale PNG. The value range lands in the colorbar sidecar next to
/// the image, named `<image>.colorbar.json`.
pub fn write_field_png(path: &Path, field: &[f32], h: usize, w: usize) -> Result<()> {
    assert_eq!(field.len(), h * w);
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!(
            "non-finite values in render for {}",
            path.display()
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in field {
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = field
        .iter()
        .map(|&v| (((v as f64 - lo) / span) * 65535.0).round() as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w as u32, h as u32, pixels)
        .expect("pixel buffer matches dimensions");
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::data(format!("png encode for {}: {e}", path.display())))?;
    atomic_write(path, &bytes)?;

    let mut bar = path.as_os_str().to_owned();
    bar.push(".colorbar.json");
    write_json(
        &PathBuf::from(bar),
        &serde_json::json!({
            "image": path.file_name().and_then(|s| s.to_str()),
            "min": lo,
            "max": hi,
            "encoding": "linear_u16",
        }),
    )
}

/// Bar chart of nonnegative values as 16-bit grayscale, for quick looks
/// at binned profiles without a plotting stack.
pub fn write_bars_png(path: &Path, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config("no values to plot"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::numerical("bar values must be finite and nonnegative"));
    }
    let peak = values.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let (bar_w, gap, h) = (28usize, 4usize, 160usize);
    let w = values.len() * (bar_w + gap) + gap;
    let mut pixels = vec![0u16; w * h];
    for (i, &v) in values.iter().enumerate() {
        let top = h - ((v / peak) * (h as f64 - 1.0)).round() as usize - 1;
        let x0 = gap + i * (bar_w + gap);
        for y in top..h {
            for x in x0..x0 + bar_w {
                pixels[y * w + x] = u16::MAX;
            }
        }
    }
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w as u32, h as u32, pixels)
        .expect("pixel buffer matches dimensions");
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::data(format!("png encode for {}: {e}", path.display())))?;
    atomic_write(path, &bytes)?;

    let mut bar = path.as_os_str().to_owned();
    bar.push(".colorbar.json");
    write_json(
        &PathBuf::from(bar),
        &serde_json::json!({
            "image": path.file_name().and_then(|s| s.to_str()),
            "bar_values": values,
            "encoding": "height_linear",
        }),
    )
}

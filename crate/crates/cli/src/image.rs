use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Result;

/// 8-bit greyscale PNG from values in [0, 1], row-major from the top.
pub fn write_grey(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header()?;
    let data: Vec<u8> = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_image_data(&data)?;
    Ok(())
}

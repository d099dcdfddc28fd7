//! PNG reading and writing for maps, masks and renderings.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::grid::{self, GridImage, OccupancyGrid};
use crate::{Error, Result};

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Png {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(data).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

pub fn write_gray(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    write_png(path, width, height, png::ColorType::Grayscale, data)
}

pub fn write_rgb(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    write_png(path, width, height, png::ColorType::Rgb, data)
}

/// Reads a grayscale PNG of any bit depth as 8-bit samples.
///
/// Sub-byte depths are scaled to the full 0..=255 range, so a 1-bit mask
/// reads back as 0/255.
pub fn read_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => return Err(png_err(path, format!("expected grayscale, got {other:?}"))),
    };
    let pixels = match info.bit_depth {
        png::BitDepth::Eight => buf.iter().step_by(channels).copied().collect(),
        png::BitDepth::Sixteen => buf.chunks(2 * channels).map(|c| c[0]).collect(),
        depth => {
            // EXPAND widens to 8 bits without rescaling.
            let max = (1u16 << depth as u8) - 1;
            buf.iter()
                .step_by(channels)
                .map(|&v| ((v as u16 * 255) / max) as u8)
                .collect()
        }
    };
    Ok((w, h, pixels))
}

pub fn write_grid(path: &Path, grid: &OccupancyGrid) -> Result<()> {
    let img = grid::encode(grid);
    write_gray(path, img.width, img.height, &img.pixels)
}

pub fn write_image_and_mask(image_path: &Path, mask_path: &Path, image: &GridImage) -> Result<()> {
    write_gray(image_path, image.width, image.height, &image.pixels)?;
    write_gray(mask_path, image.width, image.height, &image.mask_bytes())
}

/// Reads an image PNG and its mask PNG (1- or 8-bit, nonzero = unknown).
pub fn read_image_and_mask(image_path: &Path, mask_path: &Path) -> Result<GridImage> {
    let (w, h, pixels) = read_gray(image_path)?;
    let (mw, mh, mask) = read_gray(mask_path)?;
    if (w, h) != (mw, mh) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            actual: (mw, mh),
        });
    }
    GridImage::new(w, h, pixels, mask.iter().map(|&m| m != 0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellState, GridGeometry};

    #[test]
    fn gray_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let data: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        write_gray(&path, 4, 3, &data).unwrap();
        assert_eq!(read_gray(&path).unwrap(), (4, 3, data));
    }

    #[test]
    fn one_bit_mask_reads_as_0_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        {
            let file = File::create(&path).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(file), 8, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::One);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0b1010_0001]).unwrap();
        }
        let (_, _, px) = read_gray(&path).unwrap();
        assert_eq!(px, vec![255, 0, 255, 0, 0, 0, 0, 255]);
    }

    #[test]
    fn image_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let geo = GridGeometry::new(3, 1, 0.5);
        let g = OccupancyGrid::from_cells(geo, vec![CellState::Free, CellState::Unknown, CellState::Occupied]).unwrap();
        let img = grid::encode(&g);
        let (a, b) = (dir.path().join("i.png"), dir.path().join("m.png"));
        write_image_and_mask(&a, &b, &img).unwrap();
        assert_eq!(read_image_and_mask(&a, &b).unwrap(), img);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_gray(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }
}

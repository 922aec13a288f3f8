//! PNG frame folders: 8-bit RGB files named `frame_%08d.png` with indices
//! starting at 0 and no gaps. Bytes decode to value/255; encoding clamps to
//! [0, 1] and rounds half away from zero.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{EdvrError, Result};
use crate::tensor::{Elem, Tensor};

fn err(msg: impl Into<String>) -> EdvrError {
    EdvrError::Frames(msg.into())
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:08}.png")
}

/// List a frame directory, enforcing the naming and contiguity contract.
/// Returns paths ordered by index.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut by_index: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name.strip_prefix("frame_").and_then(|s| s.strip_suffix(".png")) else {
            continue;
        };
        if stem.len() != 8 || !stem.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let index: usize = stem.parse().expect("eight ascii digits");
        by_index.push((index, entry.path()));
    }
    if by_index.is_empty() {
        return Err(err(format!("no frame_%08d.png files in {}", dir.display())));
    }
    by_index.sort_by_key(|(i, _)| *i);
    for (want, (got, _)) in by_index.iter().enumerate() {
        if *got != want {
            return Err(err(format!(
                "frame index {want} missing in {} (expected {})",
                dir.display(),
                frame_name(want)
            )));
        }
    }
    Ok(by_index.into_iter().map(|(_, p)| p).collect())
}

/// Decode one 8-bit RGB PNG to a (1, 3, h, w) tensor of value/255.
pub fn read_frame<T: Elem>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path)?;
    let DynamicImage::ImageRgb8(rgb) = img else {
        return Err(err(format!("{} is not an 8-bit RGB image", path.display())));
    };
    let (w, h) = rgb.dimensions();
    Ok(Tensor::from_fn([1, 3, h as usize, w as usize], |_, c, y, x| {
        T::from_f64(rgb.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0)
    }))
}

/// Read a whole frame directory; all frames must share one size.
pub fn read_frames_dir<T: Elem>(dir: &Path) -> Result<Vec<Tensor<T>>> {
    let paths = list_frames(dir)?;
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let frame = read_frame::<T>(path)?;
        if let Some(first) = frames.first() {
            let f: &Tensor<T> = first;
            if f.dims() != frame.dims() {
                return Err(err(format!(
                    "{} is {}x{} but the first frame is {}x{}",
                    path.display(),
                    frame.dims()[3],
                    frame.dims()[2],
                    f.dims()[3],
                    f.dims()[2]
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn to_byte(v: f64) -> u8 {
    // round half away from zero; v is clamped non-negative first
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encode a (1, 3, h, w) tensor as an 8-bit RGB PNG.
pub fn write_frame<T: Elem>(path: &Path, frame: &Tensor<T>) -> Result<()> {
    let [n, c, h, w] = frame.dims();
    if n != 1 || c != 3 {
        return Err(err(format!("expected a (1, 3, h, w) frame, got {:?}", frame.dims())));
    }
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        image::Rgb(std::array::from_fn(|ch| {
            to_byte(frame.at(0, ch, y as usize, x as usize).to_f64())
        }))
    });
    img.save(path)?;
    Ok(())
}

/// Write a sequence as frame_%08d.png under `dir` (created if needed).
pub fn write_frames_dir<T: Elem>(dir: &Path, frames: &[Tensor<T>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        write_frame(&dir.join(frame_name(i)), f)?;
    }
    Ok(())
}

/// Encode a single-channel map as a grayscale PNG (clamped to [0, 1]).
pub fn write_gray<T: Elem>(path: &Path, map: &Tensor<T>) -> Result<()> {
    let [n, c, h, w] = map.dims();
    if n != 1 || c != 1 {
        return Err(err(format!("expected a (1, 1, h, w) map, got {:?}", map.dims())));
    }
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([to_byte(map.at(0, 0, y as usize, x as usize).to_f64())])
    });
    img.save(path)?;
    Ok(())
}

//! In-memory output files, committed to disk only once every one of them is ready.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, RgbImage};
use serde::Serialize;
use stereo_kit::tensor::sten;
use stereo_kit::{Dims, Tensor};

use crate::CmdError;

#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn push(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CmdError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CmdError::internal(e.to_string()))?;
        s.push('\n');
        self.push(name, s.into_bytes());
        Ok(())
    }

    pub fn sten(&mut self, name: &str, t: &Tensor) {
        self.push(name, sten::to_bytes(t));
    }

    pub fn png(&mut self, name: &str, t: &Tensor) -> Result<(), CmdError> {
        self.push(name, encode_png(t)?);
        Ok(())
    }

    /// Writes every file relative to `dir`, creating directories as needed.
    /// Files written before a failure are removed again.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, CmdError> {
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(name);
            let res = match path.parent() {
                Some(parent) if !parent.as_os_str().is_empty() => fs::create_dir_all(parent),
                _ => Ok(()),
            }
            .and_then(|_| fs::write(&path, bytes));
            if let Err(e) = res {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(CmdError::input(format!("cannot write {}: {e}", path.display())));
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit PNG of a `[1, C, H, W]` tensor in `[0, 1]`: RGB for three channels,
/// otherwise channel 0 as grayscale.
pub fn encode_png(t: &Tensor) -> Result<Vec<u8>, CmdError> {
    let d = t.dims();
    if d.n != 1 {
        return Err(CmdError::internal(format!("cannot render batch of {} as one image", d.n)));
    }
    let (w, h) = (d.w as u32, d.h as u32);
    let mut out = Cursor::new(Vec::new());
    let res = if d.c == 3 {
        RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as usize, y as usize);
            image::Rgb([0, 1, 2].map(|c| byte(t.at(0, c, y, x))))
        })
        .write_to(&mut out, ImageFormat::Png)
    } else {
        GrayImage::from_fn(w, h, |x, y| image::Luma([byte(t.at(0, 0, y as usize, x as usize))]))
            .write_to(&mut out, ImageFormat::Png)
    };
    res.map_err(|e| CmdError::internal(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

/// Loads an 8-bit PNG as a `[1, 3, H, W]` tensor in `[0, 1]`.
pub fn load_png(path: &Path) -> Result<Tensor, CmdError> {
    let img = image::open(path)
        .map_err(|e| CmdError::input(format!("cannot read image {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_fn(Dims::new(1, 3, h, w), |_, c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
    .map_err(CmdError::from)
}

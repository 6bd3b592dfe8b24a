use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use super::FrameSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested<S> {
    pub frames: FrameSequence<S>,
    /// Number parsed from each file name, in frame order.
    pub frame_numbers: Vec<usize>,
    /// Non-fatal findings such as gaps in the frame numbering.
    pub warnings: Vec<String>,
}

fn frame_number(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !EXTENSIONS.contains(&ext.as_str()) {
        return None;
    }
    path.file_stem()?.to_str()?.parse().ok()
}

fn decode<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let px = rgb.as_raw();
        Tensor::new(vec![3, h, w], (0..3 * h * w).map(|i| S::of(px[(i % (h * w)) * 3 + i / (h * w)] as f64)).collect())
    } else {
        let gray = img.to_luma8();
        Tensor::new(vec![1, h, w], gray.as_raw().iter().map(|&v| S::of(v as f64)).collect())
    }
}

/// Reads a directory of numerically named frames (`000001.png`, `2.pgm`, ...)
/// in numeric order.
pub fn ingest<S: Scalar>(dir: &Path) -> Result<Ingested<S>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(n) = frame_number(&path) {
            numbered.push((n, path));
        }
    }
    if numbered.is_empty() {
        return Err(Error::Input(format!("{}: no numbered frame images found", dir.display())));
    }
    numbered.sort();

    let mut warnings = Vec::new();
    for pair in numbered.windows(2) {
        if pair[1].0 == pair[0].0 {
            return Err(Error::Input(format!(
                "{}: frame number {} appears twice",
                dir.display(),
                pair[0].0
            )));
        }
        if pair[1].0 != pair[0].0 + 1 {
            let msg = format!(
                "{}: frames {}..{} missing from the numbering",
                dir.display(),
                pair[0].0 + 1,
                pair[1].0 - 1
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut frames = Vec::with_capacity(numbered.len());
    for (_, path) in &numbered {
        let f: Tensor<S> = decode(path)?;
        if let Some(first) = frames.first().map(|f: &Tensor<S>| f.shape().to_vec()) {
            if f.shape() != first.as_slice() {
                return Err(Error::Input(format!(
                    "{} is {:?} (channels, height, width) but earlier frames are {:?}",
                    path.display(),
                    f.shape(),
                    first
                )));
            }
        }
        frames.push(f);
    }
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".into());
    Ok(Ingested {
        frames: FrameSequence::new(frames, id)?,
        frame_numbers: numbered.iter().map(|(n, _)| *n).collect(),
        warnings,
    })
}

/// Writes 8-bit PNGs named `000001.png`, `000002.png`, ... Values are rounded
/// and clamped to `[0, 255]`; 1- and 3-channel frames are supported.
pub fn write_frames<S: Scalar>(seq: &FrameSequence<S>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, f) in seq.frames.iter().enumerate() {
        let &[c, h, w] = f.shape() else {
            return Err(Error::shape("write_frames", format!("{:?}", f.shape())));
        };
        let byte = |v: S| v.as_f64().round().clamp(0.0, 255.0) as u8;
        let img = match c {
            1 => DynamicImage::ImageLuma8(
                GrayImage::from_raw(w as u32, h as u32, f.data().iter().map(|&v| byte(v)).collect())
                    .expect("buffer matches dimensions"),
            ),
            3 => {
                let d = f.data();
                let px = (0..h * w).flat_map(|i| (0..3).map(move |ch| byte(d[ch * h * w + i]))).collect();
                DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, px).expect("buffer matches dimensions"))
            }
            _ => {
                return Err(Error::Input(format!("cannot write {c}-channel frames as images")));
            }
        };
        let path = dir.join(format!("{:06}.png", k + 1));
        img.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LabelRow {
    frame_index: usize,
    label: u8,
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for (k, &label) in labels.iter().enumerate() {
        w.serialize(LabelRow {
            frame_index: k + 1,
            label,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `frame_index,label` rows; indices must run 1, 2, 3, ... and labels be 0 or 1.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let csv_err = |e: csv::Error| Error::Input(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut labels = Vec::new();
    for row in r.deserialize() {
        let row: LabelRow = row.map_err(csv_err)?;
        if row.frame_index != labels.len() + 1 {
            return Err(Error::Input(format!(
                "{}: expected frame_index {} but found {}",
                path.display(),
                labels.len() + 1,
                row.frame_index
            )));
        }
        if row.label > 1 {
            return Err(Error::Input(format!(
                "{}: label {} at frame {} is not 0 or 1",
                path.display(),
                row.label,
                row.frame_index
            )));
        }
        labels.push(row.label);
    }
    Ok(labels)
}

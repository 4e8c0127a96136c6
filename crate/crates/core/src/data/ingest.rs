//! Turning videos into labeled face crops.
//!
//! A "video" is either an animated GIF or a directory of frame images (sorted by file
//! name). Each sampled frame is passed to a [`FaceDetector`]; the highest-ranked box is
//! expanded to a square, resized and written as PNG.

use std::fs;
use std::path::{Path, PathBuf};

use image::{AnimationDecoder, RgbImage};
use rayon::prelude::*;

use super::image::{resample_region, rgb_from_floats, save_png};
use crate::error::{Error, Result};
use crate::manifest::{Label, Sample, Split};

pub const DEFAULT_FRAME_STRIDE: usize = 5;
pub const DEFAULT_BOX_EXPANSION: f64 = 1.3;

/// Axis-aligned face box in pixels with a detector confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

/// Face detector contract: boxes inside the frame, ranked by confidence, deterministic
/// for a fixed frame.
pub trait FaceDetector: Sync {
    fn name(&self) -> &str;
    fn detect(&self, frame: &RgbImage) -> std::result::Result<Vec<FaceBox>, String>;
}

/// Treats the whole frame as the face. Useful for footage that is already face-centred.
pub struct FullFrameDetector;

impl FaceDetector for FullFrameDetector {
    fn name(&self) -> &str {
        "full-frame"
    }

    fn detect(&self, frame: &RgbImage) -> std::result::Result<Vec<FaceBox>, String> {
        Ok(vec![FaceBox {
            x: 0,
            y: 0,
            w: frame.width(),
            h: frame.height(),
            score: 1.0,
        }])
    }
}

/// Returns the centred box covering half of each frame dimension.
pub struct CenterDetector;

impl FaceDetector for CenterDetector {
    fn name(&self) -> &str {
        "center"
    }

    fn detect(&self, frame: &RgbImage) -> std::result::Result<Vec<FaceBox>, String> {
        let (w, h) = (frame.width() / 2, frame.height() / 2);
        if w == 0 || h == 0 {
            return Ok(Vec::new());
        }
        Ok(vec![FaceBox {
            x: frame.width() / 4,
            y: frame.height() / 4,
            w,
            h,
            score: 1.0,
        }])
    }
}

pub fn detector_by_name(name: &str) -> Option<Box<dyn FaceDetector>> {
    match name {
        "full-frame" | "full" => Some(Box::new(FullFrameDetector)),
        "center" => Some(Box::new(CenterDetector)),
        _ => None,
    }
}

pub const DETECTOR_NAMES: [&str; 2] = ["full-frame", "center"];

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub crop_size: usize,
    pub frame_stride: usize,
    pub box_expansion: f64,
    pub label: Label,
    pub dataset: String,
    pub split: Split,
    pub method: Option<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            crop_size: 299,
            frame_stride: DEFAULT_FRAME_STRIDE,
            box_expansion: DEFAULT_BOX_EXPANSION,
            label: Label::Real,
            dataset: String::new(),
            split: Split::Train,
            method: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub samples: Vec<Sample>,
    pub log: Vec<String>,
}

/// Decodes every frame of an animated GIF or a directory of frame images.
pub fn read_frames(video: &Path) -> Result<Vec<RgbImage>> {
    let video_err = |message: String| Error::Video {
        path: video.to_path_buf(),
        message,
    };
    if !video.exists() {
        return Err(Error::MissingFile(video.to_path_buf()));
    }
    let frames = if video.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(video)
            .map_err(|e| Error::io(video, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| super::image::read_rgb(p))
            .collect::<Result<Vec<_>>>()?
    } else {
        let ext = video
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if ext.as_deref() != Some("gif") {
            return Err(video_err(
                "unsupported container (expected an animated .gif or a frame directory)".into(),
            ));
        }
        let file = fs::File::open(video).map_err(|e| Error::io(video, e))?;
        let decoder = image::codecs::gif::GifDecoder::new(std::io::BufReader::new(file))
            .map_err(|e| video_err(e.to_string()))?;
        decoder
            .into_frames()
            .map(|f| {
                f.map(|f| image::DynamicImage::ImageRgba8(f.into_buffer()).to_rgb8())
                    .map_err(|e| video_err(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?
    };
    if frames.is_empty() {
        return Err(video_err("video has zero frames".into()));
    }
    Ok(frames)
}

/// Square crop region `(x, y, side)` around `b`, scaled by `expansion` and shifted to lie
/// inside a `width x height` frame.
pub fn square_region(b: &FaceBox, width: u32, height: u32, expansion: f64) -> (f64, f64, f64) {
    let (fw, fh) = (width as f64, height as f64);
    let cx = b.x as f64 + b.w as f64 / 2.0;
    let cy = b.y as f64 + b.h as f64 / 2.0;
    let side = (b.w.max(b.h) as f64 * expansion).min(fw.min(fh)).max(1.0);
    let x = (cx - side / 2.0).clamp(0.0, fw - side);
    let y = (cy - side / 2.0).clamp(0.0, fh - side);
    (x, y, side)
}

fn clip_box(b: &FaceBox, width: u32, height: u32) -> Option<FaceBox> {
    let x = b.x.min(width);
    let y = b.y.min(height);
    let w = b.w.min(width - x);
    let h = b.h.min(height - y);
    (w > 0 && h > 0).then_some(FaceBox { x, y, w, h, ..*b })
}

/// Crops faces from in-memory frames. Frame `i` is visited when `i % stride == 0`.
pub fn ingest_frames(
    stem: &str,
    frames: &[RgbImage],
    detector: &dyn FaceDetector,
    opts: &IngestOptions,
    out_dir: &Path,
) -> Result<IngestOutput> {
    if opts.frame_stride < 1 {
        return Err(Error::Invalid("frame stride must be at least 1".into()));
    }
    if opts.crop_size < 1 {
        return Err(Error::Invalid("crop size must be at least 1".into()));
    }
    if frames.is_empty() {
        return Err(Error::Video {
            path: PathBuf::from(stem),
            message: "video has zero frames".into(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut out = IngestOutput::default();
    out.log.push(format!(
        "video {stem}: {} frames, stride {}, detector {}, crop {}px, box expansion {}",
        frames.len(),
        opts.frame_stride,
        detector.name(),
        opts.crop_size,
        opts.box_expansion
    ));
    for (index, frame) in frames.iter().enumerate().step_by(opts.frame_stride) {
        let mut boxes = detector.detect(frame).map_err(|message| Error::Detector {
            frame: index,
            message,
        })?;
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        let Some(top) = boxes
            .iter()
            .find_map(|b| clip_box(b, frame.width(), frame.height()))
        else {
            out.log
                .push(format!("video {stem} frame {index}: no face detected, skipped"));
            continue;
        };
        let (x, y, side) = square_region(&top, frame.width(), frame.height(), opts.box_expansion);
        let pixels = resample_region(frame, x, y, side, side, opts.crop_size);
        let crop = rgb_from_floats(opts.crop_size, &pixels);
        let id = format!("{stem}_f{index}");
        let path = out_dir.join(format!("{id}.png"));
        save_png(&crop, &path)?;
        out.log.push(format!(
            "video {stem} frame {index}: box ({},{},{},{}) -> square ({x:.1},{y:.1},{side:.1})",
            top.x, top.y, top.w, top.h
        ));
        out.samples.push(Sample {
            id,
            image_path: path,
            label: opts.label,
            dataset: opts.dataset.clone(),
            split: opts.split,
            method: opts.method.clone(),
        });
    }
    Ok(out)
}

pub fn ingest_video(
    video: &Path,
    detector: &dyn FaceDetector,
    opts: &IngestOptions,
    out_dir: &Path,
) -> Result<IngestOutput> {
    let frames = read_frames(video)?;
    let stem = video
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Invalid(format!("cannot derive a stem from {}", video.display())))?;
    ingest_frames(stem, &frames, detector, opts, out_dir)
}

/// Ingests several videos in parallel; results are merged in sorted path order.
pub fn ingest_videos(
    videos: &[PathBuf],
    detector: &dyn FaceDetector,
    opts: &IngestOptions,
    out_dir: &Path,
) -> Result<IngestOutput> {
    let mut sorted = videos.to_vec();
    sorted.sort();
    let parts = sorted
        .par_iter()
        .map(|v| ingest_video(v, detector, opts, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let mut merged = IngestOutput::default();
    for part in parts {
        merged.samples.extend(part.samples);
        merged.log.extend(part.log);
    }
    Ok(merged)
}

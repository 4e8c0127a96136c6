//! Deterministic desk-scale stand-in for a face-manipulation corpus.
//!
//! Real images are a smooth random background with a shaded face-like ellipse and
//! per-pixel sensor grain. Fake images start from an independently drawn base of the
//! same family and have one interior patch over the face altered.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{rgb_from_floats, save_png};
use crate::error::{Error, Result};
use crate::manifest::{Label, Manifest, Sample, Split, PRISTINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArtifactKind {
    WarpPatch,
    BlurPatch,
    NoisePatch,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::WarpPatch => "warp_patch",
            ArtifactKind::BlurPatch => "blur_patch",
            ArtifactKind::NoisePatch => "noise_patch",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "warp_patch" | "warp" => Ok(ArtifactKind::WarpPatch),
            "blur_patch" | "blur" => Ok(ArtifactKind::BlurPatch),
            "noise_patch" | "noise" => Ok(ArtifactKind::NoisePatch),
            other => Err(format!("unknown artifact kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_real: usize,
    pub n_fake: usize,
    pub image_size: usize,
    pub artifact_kind: ArtifactKind,
    pub artifact_strength: f64,
    pub seed: u64,
    /// Dataset name written into every manifest row.
    pub dataset: String,
}

impl SyntheticSpec {
    pub fn new(n_real: usize, n_fake: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_real,
            n_fake,
            image_size: 64,
            artifact_kind: ArtifactKind::WarpPatch,
            artifact_strength: 0.5,
            seed,
            dataset: "synthetic".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_real + self.n_fake == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(self.artifact_strength > 0.0 && self.artifact_strength <= 1.0) {
            return Err(Error::Invalid(format!(
                "artifact strength must lie in (0, 1], got {}",
                self.artifact_strength
            )));
        }
        if self.image_size < 16 {
            return Err(Error::Invalid(format!(
                "synthetic image size must be at least 16, got {}",
                self.image_size
            )));
        }
        Ok(())
    }
}

/// Number of TRAIN samples in a class of size `n` (the first 80% by index).
pub fn train_count(n: usize) -> usize {
    n * 4 / 5
}

type Pixels = Vec<[f64; 3]>;

struct Face {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

fn ellipse_alpha(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let r = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
    // one-pixel soft edge
    let edge = 1.0 / rx.min(ry);
    ((1.0 - r) / edge + 0.5).clamp(0.0, 1.0)
}

fn base_image(rng: &mut ChaCha8Rng, size: usize) -> (Pixels, Face) {
    let s = size as f64;
    let tau = std::f64::consts::TAU;

    let mut waves = Vec::new();
    let mut levels = [0.0; 3];
    for level in &mut levels {
        *level = rng.random_range(60.0..190.0);
        let per_channel: Vec<_> = (0..3)
            .map(|_| {
                (
                    rng.random_range(10.0..30.0),
                    rng.random_range(0.5..2.5),
                    rng.random_range(0.5..2.5),
                    rng.random_range(0.0..tau),
                )
            })
            .collect();
        waves.push(per_channel);
    }

    let face = Face {
        cx: s / 2.0 + rng.random_range(-s / 16.0..s / 16.0),
        cy: s / 2.0 + rng.random_range(-s / 16.0..s / 16.0),
        rx: s * rng.random_range(0.24..0.30),
        ry: 0.0,
    };
    let face = Face {
        ry: face.rx * rng.random_range(1.15..1.35),
        ..face
    };
    let skin = [
        rng.random_range(150.0..230.0),
        rng.random_range(110.0..180.0),
        rng.random_range(90.0..150.0),
    ];
    let eye_r = 0.12 * face.rx;
    let eyes = [
        (face.cx - 0.4 * face.rx, face.cy - 0.25 * face.ry),
        (face.cx + 0.4 * face.rx, face.cy - 0.25 * face.ry),
    ];
    let mouth = (face.cx, face.cy + 0.45 * face.ry, 0.35 * face.rx, 0.08 * face.ry);
    let grain = Normal::new(0.0, 20.0).expect("valid normal");

    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 / s, y as f64 / s);
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = levels[c]
                    + waves[c]
                        .iter()
                        .map(|&(a, kx, ky, ph)| a * (tau * (kx * fx + ky * fy) + ph).sin())
                        .sum::<f64>();
            }
            let (xf, yf) = (x as f64, y as f64);
            let a = ellipse_alpha(xf, yf, face.cx, face.cy, face.rx, face.ry);
            if a > 0.0 {
                let r2 = ((xf - face.cx) / face.rx).powi(2) + ((yf - face.cy) / face.ry).powi(2);
                let shade = 1.0 - 0.15 * r2.min(1.0);
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - a) + skin[c] * shade * a;
                }
            }
            for &(ex, ey) in &eyes {
                let a = ellipse_alpha(xf, yf, ex, ey, eye_r, eye_r * 0.7);
                for v in px.iter_mut() {
                    *v = *v * (1.0 - a) + 40.0 * a;
                }
            }
            let a = ellipse_alpha(xf, yf, mouth.0, mouth.1, mouth.2, mouth.3);
            let lip = [150.0, 60.0, 60.0];
            for c in 0..3 {
                px[c] = px[c] * (1.0 - a) + lip[c] * a;
            }
            for v in px.iter_mut() {
                *v += grain.sample(rng);
            }
            pixels.push(px);
        }
    }
    (pixels, face)
}

fn sample_clamped(pixels: &Pixels, size: usize, x: f64, y: f64) -> [f64; 3] {
    let max = (size - 1) as f64;
    let (x, y) = (x.clamp(0.0, max), y.clamp(0.0, max));
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(size - 1), (y0 + 1).min(size - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let p = |xx: usize, yy: usize| pixels[yy * size + xx];
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = p(x0, y0)[c] * (1.0 - fx) + p(x1, y0)[c] * fx;
        let bottom = p(x0, y1)[c] * (1.0 - fx) + p(x1, y1)[c] * fx;
        *o = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Mean over the `(2r+1)^2` window around `(x, y)`, truncated at the image border.
fn box_mean(pixels: &Pixels, size: usize, x: usize, y: usize, radius: usize) -> [f64; 3] {
    let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(size - 1));
    let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(size - 1));
    let mut acc = [0.0; 3];
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            let p = pixels[yy * size + xx];
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
    }
    let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
    acc.map(|v| v / n)
}

/// Alters a square patch over the face in place.
fn apply_artifact(
    pixels: &mut Pixels,
    size: usize,
    face: &Face,
    kind: ArtifactKind,
    strength: f64,
    rng: &mut ChaCha8Rng,
) {
    let s = size as f64;
    let side = (s * rng.random_range(0.45..0.55)).round() as usize;
    let max_origin = (size - side - 1) as f64;
    let ox = (face.cx - side as f64 / 2.0 + rng.random_range(-face.rx / 3.0..face.rx / 3.0))
        .clamp(1.0, max_origin)
        .round() as usize;
    let oy = (face.cy - side as f64 / 2.0 + rng.random_range(-face.ry / 3.0..face.ry / 3.0))
        .clamp(1.0, max_origin)
        .round() as usize;
    let original = pixels.clone();

    match kind {
        ArtifactKind::WarpPatch => {
            // Re-synthesize the patch at reduced resolution (box smoothing) and paste it
            // back through a rotation + zoom about its centre.
            let radius = ((4.0 * strength).round() as usize).max(1);
            let smoothed: Pixels = (0..size * size)
                .map(|i| box_mean(&original, size, i % size, i / size, radius))
                .collect();
            let scale = 1.0 + 0.35 * strength;
            let angle = 0.3 * strength * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let (sin, cos) = angle.sin_cos();
            let c = (side as f64 - 1.0) / 2.0;
            for y in 0..side {
                for x in 0..side {
                    let (dx, dy) = (x as f64 - c, y as f64 - c);
                    let sx = (cos * dx + sin * dy) / scale + c + ox as f64;
                    let sy = (-sin * dx + cos * dy) / scale + c + oy as f64;
                    pixels[(oy + y) * size + ox + x] = sample_clamped(&smoothed, size, sx, sy);
                }
            }
        }
        ArtifactKind::BlurPatch => {
            let radius = ((3.0 * strength).round() as usize).max(1);
            for y in 0..side {
                for x in 0..side {
                    pixels[(oy + y) * size + ox + x] = box_mean(&original, size, ox + x, oy + y, radius);
                }
            }
        }
        ArtifactKind::NoisePatch => {
            let noise = Normal::new(0.0, 40.0 * strength).expect("valid normal");
            for y in 0..side {
                for x in 0..side {
                    let p = &mut pixels[(oy + y) * size + ox + x];
                    for v in p.iter_mut() {
                        *v += noise.sample(rng);
                    }
                }
            }
        }
    }
}

fn render(spec: &SyntheticSpec, label: Label, index: usize) -> Pixels {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(((label.as_int() as u64) << 32) | index as u64);
    let (mut pixels, face) = base_image(&mut rng, spec.image_size);
    if label == Label::Fake {
        apply_artifact(
            &mut pixels,
            spec.image_size,
            &face,
            spec.artifact_kind,
            spec.artifact_strength,
            &mut rng,
        );
    }
    pixels
}

/// Writes `images/<id>.png` plus `manifest.csv` under `out_dir` and returns the manifest.
/// Image paths in the manifest are relative to `out_dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let method = spec.artifact_kind.as_str().to_string();
    let mut samples = Vec::with_capacity(spec.n_real + spec.n_fake);
    for (label, n) in [(Label::Real, spec.n_real), (Label::Fake, spec.n_fake)] {
        let n_train = train_count(n);
        for i in 0..n {
            let id = format!("{}_{i:05}", label.name());
            samples.push(Sample {
                image_path: Path::new("images").join(format!("{id}.png")),
                id,
                label,
                dataset: spec.dataset.clone(),
                split: if i < n_train { Split::Train } else { Split::Test },
                method: Some(match label {
                    Label::Real => PRISTINE.to_string(),
                    Label::Fake => method.clone(),
                }),
            });
        }
    }

    samples
        .par_iter()
        .enumerate()
        .try_for_each(|(pos, sample)| {
            let index = if sample.label == Label::Real {
                pos
            } else {
                pos - spec.n_real
            };
            let pixels = render(spec, sample.label, index);
            let img = rgb_from_floats(spec.image_size, &pixels);
            save_png(&img, &out_dir.join(&sample.image_path))
        })?;

    let manifest = Manifest::new(spec.dataset.clone(), samples)?.with_base_dir(out_dir);
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

//! Moving-sprite videos with labelled anomaly windows.
//!
//! Normal motion: every sprite travels along its own horizontal lane at a
//! constant speed, left to right, wrapping around the frame edge (a sprite
//! leaving on the right is already re-entering on the left). Sprites are
//! brighter at their leading edge and leave a streak over every position they
//! pass during the exposure, so faster motion shows up as a longer sprite. Anomaly windows
//! change the motion (faster, reversed) or the appearance of the affected
//! sprites for a span of test frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FrameSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    SpeedUp,
    Reversed,
    NovelShape,
}

/// Inclusive, 1-based span of test frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyWindow {
    pub start: usize,
    pub end: usize,
    pub kind: AnomalyKind,
}

impl AnomalyWindow {
    pub fn contains(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub train_frames: usize,
    pub test_frames: usize,
    pub sprite_count: usize,
    /// Sprite side in pixels.
    pub sprite_size: f64,
    /// Normal speed range in pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    pub speed_up_factor: f64,
    /// How many sprites (the first ones) an anomaly window affects.
    pub affected_sprites: usize,
    pub background: f64,
    pub sprite_intensity: f64,
    pub noise_std: f64,
    /// Sub-frame samples across the exposure; 1 disables the motion streak.
    pub blur_samples: usize,
    pub anomalies: Vec<AnomalyWindow>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            width: 32,
            height: 32,
            train_frames: 600,
            test_frames: 600,
            sprite_count: 3,
            sprite_size: 10.0,
            speed_min: 0.8,
            speed_max: 1.2,
            speed_up_factor: 6.0,
            affected_sprites: 3,
            background: 40.0,
            sprite_intensity: 200.0,
            noise_std: 2.0,
            blur_samples: 8,
            anomalies: vec![
                AnomalyWindow {
                    start: 101,
                    end: 160,
                    kind: AnomalyKind::SpeedUp,
                },
                AnomalyWindow {
                    start: 281,
                    end: 340,
                    kind: AnomalyKind::Reversed,
                },
                AnomalyWindow {
                    start: 461,
                    end: 520,
                    kind: AnomalyKind::SpeedUp,
                },
            ],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.train_frames == 0 || self.test_frames == 0 {
            return Err(Error::Config("synthetic frame size and lengths must be positive".into()));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return Err(Error::Config(format!(
                "speed range [{}, {}] must be positive and ordered",
                self.speed_min, self.speed_max
            )));
        }
        if !(self.sprite_size > 0.0) || self.blur_samples == 0 || !(self.noise_std >= 0.0) {
            return Err(Error::Config("sprite size, blur samples and noise must be valid".into()));
        }
        for w in &self.anomalies {
            if w.start == 0 || w.start > w.end || w.end > self.test_frames {
                return Err(Error::Config(format!(
                    "anomaly window [{}, {}] ({:?}) lies outside test frames 1..={}",
                    w.start, w.end, w.kind, self.test_frames
                )));
            }
        }
        Ok(())
    }

    fn active_anomaly(&self, frame: usize) -> Option<AnomalyKind> {
        self.anomalies.iter().find(|w| w.contains(frame)).map(|w| w.kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo<S> {
    pub train: FrameSequence<S>,
    pub test: FrameSequence<S>,
    /// Per test frame, 1 inside an anomaly window.
    pub labels: Vec<u8>,
}

struct Sprite {
    lane_y: f64,
    speed: f64,
    x: f64,
}

#[derive(Clone, Copy)]
enum Shape {
    /// Box brightening towards the leading edge.
    Oriented { direction: f64 },
    /// Plus sign, never seen in training.
    Cross,
}

fn coverage(d: f64, half: f64) -> f64 {
    (half + 0.5 - d.abs()).clamp(0.0, 1.0)
}

fn sprite_value(px: f64, py: f64, cx: f64, cy: f64, size: f64, shape: Shape) -> f64 {
    let half = size / 2.0;
    match shape {
        Shape::Oriented { direction } => {
            let cov = coverage(px - cx, half) * coverage(py - cy, half);
            if cov == 0.0 {
                return 0.0;
            }
            let along = (((px - cx) * direction) / size + 0.5).clamp(0.0, 1.0);
            cov * (0.35 + 0.65 * along)
        }
        Shape::Cross => {
            let arm = size / 6.0;
            let horiz = coverage(px - cx, half) * coverage(py - cy, arm);
            let vert = coverage(px - cx, arm) * coverage(py - cy, half);
            horiz.max(vert)
        }
    }
}

struct Scene<'a> {
    spec: &'a SyntheticSpec,
    sprites: Vec<Sprite>,
    background: Vec<f64>,
}

impl<'a> Scene<'a> {
    fn new(spec: &'a SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let period = spec.width as f64;
        let lane_gap = spec.height as f64 / spec.sprite_count.max(1) as f64;
        let sprites = (0..spec.sprite_count)
            .map(|k| Sprite {
                lane_y: (k as f64 + 0.5) * lane_gap,
                speed: rng.random_range(spec.speed_min..=spec.speed_max),
                x: rng.random_range(0.0..period),
            })
            .collect();
        let (w, h) = (spec.width as f64, spec.height as f64);
        let background = (0..spec.width * spec.height)
            .map(|i| {
                let (x, y) = ((i % spec.width) as f64 / w, (i / spec.width) as f64 / h);
                spec.background * (0.8 + 0.3 * x + 0.1 * (6.0 * y).sin())
            })
            .collect();
        Scene {
            spec,
            sprites,
            background,
        }
    }

    fn render_next(&mut self, anomaly: Option<AnomalyKind>, noise: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let spec = self.spec;
        let period = spec.width as f64;
        let mut sprite_layer = vec![0.0f64; spec.width * spec.height];
        let k_samples = spec.blur_samples;
        for (idx, s) in self.sprites.iter_mut().enumerate() {
            let affected = idx < spec.affected_sprites;
            let mut velocity = s.speed;
            let mut novel = false;
            match anomaly {
                Some(AnomalyKind::SpeedUp) if affected => velocity *= spec.speed_up_factor,
                Some(AnomalyKind::Reversed) if affected => velocity = -velocity,
                Some(AnomalyKind::NovelShape) if affected => novel = true,
                _ => {}
            }
            let shape = if novel {
                Shape::Cross
            } else {
                Shape::Oriented {
                    direction: velocity.signum(),
                }
            };
            let mut layer = vec![0.0f64; spec.width * spec.height];
            for k in 1..=k_samples {
                let pos = s.x + velocity * k as f64 / k_samples as f64;
                let cx0 = pos.rem_euclid(period) - spec.sprite_size / 2.0;
                for cx in [cx0 - period, cx0, cx0 + period] {
                    let x_lo = (cx - spec.sprite_size).floor().max(0.0) as usize;
                    let x_hi = ((cx + spec.sprite_size).ceil().max(0.0) as usize).min(spec.width);
                    for y in 0..spec.height {
                        for x in x_lo..x_hi {
                            let v = sprite_value(x as f64 + 0.5, y as f64 + 0.5, cx, s.lane_y, spec.sprite_size, shape);
                            let px = &mut layer[y * spec.width + x];
                            *px = px.max(v);
                        }
                    }
                }
            }
            for (acc, v) in sprite_layer.iter_mut().zip(layer) {
                *acc = acc.max(v);
            }
            s.x = (s.x + velocity).rem_euclid(period);
        }
        sprite_layer
            .iter()
            .zip(&self.background)
            .map(|(&a, &bg)| {
                let v = bg + (spec.sprite_intensity - bg).max(0.0) * a + noise.sample(rng);
                v.round().clamp(0.0, 255.0)
            })
            .collect()
    }
}

fn render_sequence<S: Scalar>(
    spec: &SyntheticSpec,
    frames: usize,
    with_anomalies: bool,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<FrameSequence<S>> {
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut scene = Scene::new(spec, rng);
    let out = (1..=frames)
        .map(|t| {
            let anomaly = if with_anomalies { spec.active_anomaly(t) } else { None };
            let px = scene.render_next(anomaly, &noise, rng);
            Tensor::new(vec![1, spec.height, spec.width], px.into_iter().map(S::of).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(out, id)
}

/// Normal-only training video, a test video with the configured anomaly
/// windows, and per-frame test labels. Intensities are whole numbers in `[0, 255]`.
pub fn generate_synthetic<S: Scalar>(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticVideo<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = render_sequence(spec, spec.train_frames, false, "train", &mut rng)?;
    let test = render_sequence(spec, spec.test_frames, true, "test", &mut rng)?;
    let labels = (1..=spec.test_frames)
        .map(|t| u8::from(spec.active_anomaly(t).is_some()))
        .collect();
    Ok(SyntheticVideo { train, test, labels })
}

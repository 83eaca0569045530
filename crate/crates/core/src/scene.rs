//! Synthetic RGB-D sequences: rectangles translating over an affine depth
//! ramp, with a matching intensity video.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsrError, Result};
use crate::volume::{FrameDims, IntensityVolume, Volume};

/// Background depth `offset + slope_x * x + slope_y * y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub offset: f64,
    pub slope_x: f64,
    pub slope_y: f64,
}

/// Axis-aligned rectangle at `(x, y)` in frame 0, moving `(vx, vy)` pixels
/// per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
    pub depth: f64,
    /// Intensity offset relative to the background level.
    pub contrast: f64,
    pub vx: i64,
    pub vy: i64,
}

impl SceneObject {
    pub fn origin_at(&self, t: usize) -> (i64, i64) {
        (self.x + self.vx * t as i64, self.y + self.vy * t as i64)
    }

    fn contains(&self, x: usize, y: usize, t: usize) -> bool {
        let (ox, oy) = self.origin_at(t);
        let (x, y) = (x as i64, y as i64);
        x >= ox && x < ox + self.width as i64 && y >= oy && y < oy + self.height as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub dims: FrameDims,
    pub background: Ramp,
    pub background_intensity: f64,
    pub objects: Vec<SceneObject>,
    /// Half-range of the uniform intensity texture.
    pub texture: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// 64x64x16 with one rectangle moving 2 px/frame to the right.
    fn default() -> Self {
        Self {
            dims: FrameDims {
                width: 64,
                height: 64,
                frames: 16,
            },
            background: Ramp {
                offset: 3.0,
                slope_x: 0.02,
                slope_y: 0.01,
            },
            background_intensity: 0.3,
            objects: vec![SceneObject {
                x: 8,
                y: 22,
                width: 20,
                height: 20,
                depth: 1.5,
                contrast: 0.4,
                vx: 2,
                vy: 0,
            }],
            texture: 0.05,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        FrameDims::new(d.width, d.height, d.frames)?;
        for (i, o) in self.objects.iter().enumerate() {
            if o.width == 0 || o.height == 0 {
                return Err(DsrError::arg(format!("object {i} is empty")));
            }
            for t in [0, d.frames - 1] {
                let (ox, oy) = o.origin_at(t);
                if ox < 0
                    || oy < 0
                    || ox + o.width as i64 > d.width as i64
                    || oy + o.height as i64 > d.height as i64
                {
                    return Err(DsrError::arg(format!(
                        "object {i} leaves the frame by frame {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Topmost object covering a voxel; later objects are in front.
    fn object_at(&self, x: usize, y: usize, t: usize) -> Option<(usize, &SceneObject)> {
        self.objects
            .iter()
            .enumerate()
            .rev()
            .find(|(_, o)| o.contains(x, y, t))
    }
}

/// Renders `(intensity, depth)`. Texture is fixed to the world for the
/// background and to each object's frame for objects, so it moves with them.
pub fn synth_scene(spec: &SceneSpec) -> Result<(IntensityVolume, Volume)> {
    spec.validate()?;
    let d = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let amp = spec.texture;
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                if amp > 0.0 {
                    rng.random_range(-amp..=amp)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let bg_tex = draw(d.frame_len());
    let obj_tex: Vec<Vec<f64>> = spec
        .objects
        .iter()
        .map(|o| draw(o.width * o.height))
        .collect();

    let ramp = spec.background;
    let depth = Volume::from_fn(d, |x, y, t| match spec.object_at(x, y, t) {
        Some((_, o)) => o.depth,
        None => ramp.offset + ramp.slope_x * x as f64 + ramp.slope_y * y as f64,
    });
    let intensity = Volume::from_fn(d, |x, y, t| {
        let v = match spec.object_at(x, y, t) {
            Some((i, o)) => {
                let (ox, oy) = o.origin_at(t);
                let (lx, ly) = ((x as i64 - ox) as usize, (y as i64 - oy) as usize);
                spec.background_intensity + o.contrast + obj_tex[i][ly * o.width + lx]
            }
            None => spec.background_intensity + bg_tex[y * d.width + x],
        };
        v.clamp(0.0, 1.0)
    });
    Ok((
        IntensityVolume::try_from(intensity)?,
        Volume::new(d, depth.into_values())?,
    ))
}

/// Parses `x,y,w,h,depth,contrast,vx,vy` objects separated by `;`.
pub fn parse_objects(spec: &str) -> Result<Vec<SceneObject>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let f: Vec<&str> = item.split(',').map(str::trim).collect();
            if f.len() != 8 {
                return Err(DsrError::arg(format!(
                    "object '{item}' needs 8 fields x,y,w,h,depth,contrast,vx,vy"
                )));
            }
            let int = |s: &str| {
                s.parse::<i64>()
                    .map_err(|_| DsrError::arg(format!("bad integer '{s}'")))
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| DsrError::arg(format!("bad number '{s}'")))
            };
            let size = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| DsrError::arg(format!("bad size '{s}'")))
            };
            Ok(SceneObject {
                x: int(f[0])?,
                y: int(f[1])?,
                width: size(f[2])?,
                height: size(f[3])?,
                depth: real(f[4])?,
                contrast: real(f[5])?,
                vx: int(f[6])?,
                vy: int(f[7])?,
            })
        })
        .collect()
}

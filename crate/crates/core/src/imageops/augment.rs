use crate::error::{Error, Result};

use super::Image;

/// Counter-clockwise rotation by a multiple of 90 degrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn from_degrees(deg: u32) -> Result<Self> {
        match deg {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(Error::InvalidArgument(format!(
                "rotation must be 0, 90, 180 or 270 degrees, got {other}"
            ))),
        }
    }

    fn quarter_turns(self) -> usize {
        self as usize
    }

    fn inverse(self) -> Self {
        Self::ALL[(4 - self.quarter_turns()) % 4]
    }
}

/// Element of the dihedral group D4: optional horizontal flip, then rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Augment {
    pub rot: Rotation,
    pub flip: bool,
}

impl Augment {
    pub const IDENTITY: Augment = Augment {
        rot: Rotation::R0,
        flip: false,
    };

    /// All eight group elements.
    pub fn all() -> impl Iterator<Item = Augment> {
        [false, true].into_iter().flat_map(|flip| {
            Rotation::ALL
                .into_iter()
                .map(move |rot| Augment { rot, flip })
        })
    }

    pub fn inverse(self) -> Augment {
        if self.flip {
            // Reflections are involutions.
            self
        } else {
            Augment {
                rot: self.rot.inverse(),
                flip: false,
            }
        }
    }

    /// Output `(height, width)` for an input of the given size.
    pub fn output_size(self, h: usize, w: usize) -> (usize, usize) {
        match self.rot {
            Rotation::R0 | Rotation::R180 => (h, w),
            Rotation::R90 | Rotation::R270 => (w, h),
        }
    }

    /// Source `(y, x)` read for output position `(y, x)`.
    #[inline]
    fn source(self, h: usize, w: usize, oy: usize, ox: usize) -> (usize, usize) {
        // Undo the rotation (on the flipped frame, whose size is still h x w).
        let (fy, fx) = match self.rot {
            Rotation::R0 => (oy, ox),
            // CCW 90: out(y, x) = in(x, w-1-y)
            Rotation::R90 => (ox, w - 1 - oy),
            Rotation::R180 => (h - 1 - oy, w - 1 - ox),
            Rotation::R270 => (h - 1 - ox, oy),
        };
        if self.flip {
            (fy, w - 1 - fx)
        } else {
            (fy, fx)
        }
    }

    pub fn apply(self, img: &Image) -> Image {
        let (h, w) = (img.height(), img.width());
        let (oh, ow) = self.output_size(h, w);
        Image::from_fn(oh, ow, img.space(), |c, y, x| {
            let (sy, sx) = self.source(h, w, y, x);
            img.get(c, sy, sx)
        })
    }

    /// Same permutation applied to a planar `[C, H, W]` buffer.
    pub fn apply_planar(self, data: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = self.output_size(h, w);
        let mut out = Vec::with_capacity(data.len());
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let (sy, sx) = self.source(h, w, y, x);
                    out.push(data[(ch * h + sy) * w + sx]);
                }
            }
        }
        out
    }
}

/// Rotates by `rot_degrees` (0/90/180/270, counter-clockwise) after an
/// optional horizontal flip. Lossless.
pub fn augment(img: &Image, rot_degrees: u32, flip: bool) -> Result<Image> {
    let a = Augment {
        rot: Rotation::from_degrees(rot_degrees)?,
        flip,
    };
    Ok(a.apply(img))
}

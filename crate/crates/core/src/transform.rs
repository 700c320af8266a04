//! Exact grid symmetries.
//!
//! Every transform is a permutation of pixel positions: values are moved,
//! never recomputed, so a transform followed by its inverse is bit-exact and
//! the multiset of stored values is preserved bitwise. Channels ride along
//! with their pixel. Quarter-turn rotations require square grids.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    HorizontalFlip,
    VerticalFlip,
    /// Counterclockwise quarter turns (1..=3). Square grids only.
    Rotate90 {
        turns: u8,
    },
    /// Cyclic shift of content by (dx right, dy down), wrapping at the edges.
    /// `CyclicShift { dx: 0, dy: 0 }` is the identity.
    CyclicShift {
        dx: isize,
        dy: isize,
    },
}

impl Transform {
    pub fn rotate90(turns: u8) -> Result<Self> {
        if !(1..=3).contains(&turns) {
            return Err(Error::InvalidArgument(format!(
                "rotation turns must be 1..=3, got {turns}"
            )));
        }
        Ok(Transform::Rotate90 { turns })
    }

    /// The transform undoing this one (exact, same kind family).
    pub fn inverse(&self) -> Transform {
        match *self {
            Transform::HorizontalFlip => Transform::HorizontalFlip,
            Transform::VerticalFlip => Transform::VerticalFlip,
            Transform::Rotate90 { turns } => Transform::Rotate90 { turns: 4 - turns },
            Transform::CyclicShift { dx, dy } => Transform::CyclicShift { dx: -dx, dy: -dy },
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Transform::CyclicShift { dx: 0, dy: 0 })
    }

    /// Applies the permutation. Output pixel (y, x) receives input pixel
    /// (src_y, src_x); all channels move together.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        let (h, w, c) = img.shape();
        if let Transform::Rotate90 { .. } = self {
            if h != w {
                return Err(Error::InvalidArgument(format!(
                    "rotation requires a square grid, got {h}x{w}"
                )));
            }
        }
        if let Transform::Rotate90 { turns } = *self {
            let mut out = img.clone();
            for _ in 0..turns {
                out = quarter_turn(&out);
            }
            return Ok(out);
        }
        let mut data = vec![0.0; img.len()];
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = match *self {
                    Transform::HorizontalFlip => (y, w - 1 - x),
                    Transform::VerticalFlip => (h - 1 - y, x),
                    Transform::CyclicShift { dx, dy } => (
                        (y as isize - dy).rem_euclid(h as isize) as usize,
                        (x as isize - dx).rem_euclid(w as isize) as usize,
                    ),
                    Transform::Rotate90 { .. } => unreachable!(),
                };
                let dst = (y * w + x) * c;
                let src = (sy * w + sx) * c;
                data[dst..dst + c].copy_from_slice(&img.data()[src..src + c]);
            }
        }
        Image::new(h, w, c, data)
    }

    /// Applies the inverse permutation.
    pub fn apply_inverse(&self, img: &Image) -> Result<Image> {
        self.inverse().apply(img)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Transform::HorizontalFlip => write!(f, "hflip"),
            Transform::VerticalFlip => write!(f, "vflip"),
            Transform::Rotate90 { turns } => write!(f, "rot90x{turns}"),
            Transform::CyclicShift { dx: 0, dy: 0 } => write!(f, "identity"),
            Transform::CyclicShift { dx, dy } => write!(f, "shift({dx},{dy})"),
        }
    }
}

/// One counterclockwise quarter turn: output(y, x) = input(x, n-1-y).
fn quarter_turn(img: &Image) -> Image {
    let (n, _, c) = img.shape();
    let mut data = vec![0.0; img.len()];
    for y in 0..n {
        for x in 0..n {
            let src = (x * n + (n - 1 - y)) * c;
            let dst = (y * n + x) * c;
            data[dst..dst + c].copy_from_slice(&img.data()[src..src + c]);
        }
    }
    Image::new(n, n, c, data).expect("quarter turn preserves shape")
}

/// Non-empty list of transforms used by the equivariant sampler. Selection is
/// a deterministic round-robin over the list, indexed by how many equivariant
/// steps have run; it involves no randomness and no seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformGroup {
    transforms: Vec<Transform>,
}

impl TransformGroup {
    pub fn new(transforms: Vec<Transform>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::InvalidArgument(
                "transform group must be non-empty".into(),
            ));
        }
        Ok(Self { transforms })
    }

    /// Default group: the horizontal flip alone.
    pub fn horizontal_flip() -> Self {
        Self {
            transforms: vec![Transform::HorizontalFlip],
        }
    }

    /// Identity-only group; makes the equivariant sampler coincide with the
    /// baseline bitwise.
    pub fn identity() -> Self {
        Self {
            transforms: vec![Transform::CyclicShift { dx: 0, dy: 0 }],
        }
    }

    /// Parses a group name: "flip", "flip+vflip", "rot90", "shift:dx,dy",
    /// or "identity".
    pub fn parse(name: &str) -> Result<Self> {
        let mut transforms = Vec::new();
        for part in name.split('+') {
            let part = part.trim();
            if let Some(rest) = part.strip_prefix("shift:") {
                let nums: Vec<&str> = rest.split(',').collect();
                if nums.len() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "shift spec '{part}' must be shift:dx,dy"
                    )));
                }
                let dx = nums[0]
                    .trim()
                    .parse::<isize>()
                    .map_err(|_| Error::InvalidArgument(format!("invalid shift dx in '{part}'")))?;
                let dy = nums[1]
                    .trim()
                    .parse::<isize>()
                    .map_err(|_| Error::InvalidArgument(format!("invalid shift dy in '{part}'")))?;
                transforms.push(Transform::CyclicShift { dx, dy });
                continue;
            }
            match part {
                "flip" | "hflip" => transforms.push(Transform::HorizontalFlip),
                "vflip" => transforms.push(Transform::VerticalFlip),
                "rot90" => transforms.push(Transform::Rotate90 { turns: 1 }),
                "identity" => transforms.push(Transform::CyclicShift { dx: 0, dy: 0 }),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown transform '{other}' (expected flip, vflip, rot90, shift:dx,dy, identity)"
                    )))
                }
            }
        }
        Self::new(transforms)
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Round-robin selection by equivariant-step counter.
    pub fn next_transform(&self, equivariant_step: usize) -> Transform {
        self.transforms[equivariant_step % self.transforms.len()]
    }
}

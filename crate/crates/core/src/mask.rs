//! Dense binary masks, the COCO uncompressed RLE codec, and the geometric
//! kernels (area, set algebra, IoU, resize, tight boxes) built on them.
//!
//! Masks are bit-packed row-major: pixel `(r, c)` is bit `r * width + c`,
//! stored little-endian in `u64` words. Bits past `height * width` in the
//! last word are always zero, so set operations and popcounts can run
//! word-at-a-time without masking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

/// A `height x width` grid of booleans.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    words: Vec<u64>,
}

impl core::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(
            f,
            "BinaryMask {}x{} (area {})",
            self.height,
            self.width,
            self.area()
        )?;
        for r in 0..self.height.min(32) {
            for c in 0..self.width.min(64) {
                f.write_str(if self.get(r, c) { "#" } else { "." })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl BinaryMask {
    /// An all-false mask.
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            words: vec![0; words_for(height * width)],
        }
    }

    /// An all-true mask.
    pub fn full(height: usize, width: usize) -> Self {
        let n = height * width;
        let mut words = vec![u64::MAX; words_for(n)];
        if let Some(last) = words.last_mut() {
            let tail = n % WORD_BITS;
            if tail != 0 {
                *last = (1u64 << tail) - 1;
            }
        }
        Self {
            height,
            width,
            words,
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(height, width);
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    mask.set(r, c, true);
                }
            }
        }
        mask
    }

    /// Builds a mask from a row-major slice of exactly `height * width` entries.
    pub fn from_bools(height: usize, width: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Contract(format!(
                "expected {} mask entries for {height}x{width}, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| bits[r * width + c]))
    }

    /// Builds a mask with exactly the listed `(row, col)` pixels set.
    ///
    /// Panics if a pixel lies outside the grid.
    pub fn from_pixels(
        height: usize,
        width: usize,
        pixels: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut mask = Self::new(height, width);
        for (r, c) in pixels {
            mask.set(r, c, true);
        }
        mask
    }

    /// Pixels whose centre lies inside `bbox`.
    pub fn from_box(height: usize, width: usize, bbox: &BBox) -> Self {
        let (r0, r1) = center_span(bbox.y, bbox.h, height);
        let (c0, c1) = center_span(bbox.x, bbox.w, width);
        let mut mask = Self::new(height, width);
        for r in r0..r1 {
            for c in c0..c1 {
                mask.set(r, c, true);
            }
        }
        mask
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Panics if `(r, c)` is out of bounds.
    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(
            r < self.height && c < self.width,
            "pixel ({r}, {c}) out of bounds"
        );
        let i = r * self.width + c;
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    /// Panics if `(r, c)` is out of bounds.
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(
            r < self.height && c < self.width,
            "pixel ({r}, {c}) out of bounds"
        );
        let i = r * self.width + c;
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    /// Number of true pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// True when every pixel set in `other` is also set here.
    pub fn contains(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| b & !a == 0)
    }

    /// Set pixels as `(row, col)` in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            core::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * WORD_BITS + b;
                Some((i / width, i % width))
            })
        })
    }

    fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    fn zip_words(&self, other: &BinaryMask, op: impl Fn(u64, u64) -> u64) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        })
    }

    /// `(|a ∩ b|, |a ∪ b|)` in one pass.
    pub fn overlap_counts(&self, other: &BinaryMask) -> Result<(u64, u64)> {
        self.check_same_dims(other)?;
        let (mut inter, mut union) = (0u64, 0u64);
        for (&a, &b) in self.words.iter().zip(&other.words) {
            inter += u64::from((a & b).count_ones());
            union += u64::from((a | b).count_ones());
        }
        Ok((inter, union))
    }
}

/// Index range `[lo, hi)` of pixels along one axis whose centres fall in
/// `[start, start + len)`, clipped to `[0, limit)`.
fn center_span(start: f64, len: f64, limit: usize) -> (usize, usize) {
    // centre i + 0.5 >= start  <=>  i >= start - 0.5
    let lo = libm::ceil(start - 0.5).max(0.0);
    // centre i + 0.5 < start + len  <=>  i < start + len - 0.5
    let hi = libm::ceil(start + len - 0.5).max(0.0);
    let lo = (lo as usize).min(limit);
    let hi = (hi as usize).min(limit);
    (lo, hi.max(lo))
}

/// COCO uncompressed run-length encoding.
///
/// Runs alternate zeros and ones over pixels in column-major order, starting
/// with a (possibly empty) run of zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Checks that the runs cover exactly `height * width` pixels and that
    /// only the leading run is zero-length.
    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.counts.iter().map(|&c| u64::from(c)).sum();
        let expected = (self.height as u64) * (self.width as u64);
        if total != expected {
            return Err(Error::MalformedRle(format!(
                "run lengths sum to {total}, expected {expected} for {}x{}",
                self.height, self.width
            )));
        }
        if let Some(pos) = self.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::MalformedRle(format!(
                "zero-length run at index {}",
                pos + 1
            )));
        }
        Ok(())
    }

    /// Number of foreground pixels (the odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.counts
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&c| u64::from(c))
            .sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (h, w) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for c in 0..w {
        for r in 0..h {
            let v = mask.get(r, c);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    RleMask {
        height: h,
        width: w,
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    rle.validate()?;
    let (h, w) = (rle.height, rle.width);
    let mut mask = BinaryMask::new(h, w);
    let mut idx = 0usize;
    for (i, &run) in rle.counts.iter().enumerate() {
        let run = run as usize;
        if i % 2 == 1 {
            for p in idx..idx + run {
                mask.set(p % h, p / h, true);
            }
        }
        idx += run;
    }
    Ok(mask)
}

pub fn mask_area(mask: &BinaryMask) -> u64 {
    mask.area()
}

pub fn mask_union(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.zip_words(b, |x, y| x | y)
}

pub fn mask_intersection(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.zip_words(b, |x, y| x & y)
}

/// `|a ∩ b| / |a ∪ b|`, or 0 when both masks are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, union) = a.overlap_counts(b)?;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Nearest-neighbour resampling: output `(r, c)` reads source pixel
/// `(floor((r + 0.5) * H / new_h), floor((c + 0.5) * W / new_w))`.
pub fn mask_resize(mask: &BinaryMask, new_h: usize, new_w: usize) -> BinaryMask {
    let (h, w) = mask.dims();
    if h == 0 || w == 0 {
        return BinaryMask::new(new_h, new_w);
    }
    // floor((2c + 1) * W / (2 new_w)) in exact integer arithmetic
    let src_cols: Vec<usize> = (0..new_w).map(|c| (2 * c + 1) * w / (2 * new_w)).collect();
    let mut out = BinaryMask::new(new_h, new_w);
    for r in 0..new_h {
        let sr = (2 * r + 1) * h / (2 * new_h);
        for (c, &sc) in src_cols.iter().enumerate() {
            if mask.get(sr, sc) {
                out.set(r, c, true);
            }
        }
    }
    out
}

/// Axis-aligned box in pixel units: `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_xywh(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x <= other.x
            && self.y <= other.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox::new(
            x,
            y,
            self.right().max(other.right()) - x,
            self.bottom().max(other.bottom()) - y,
        )
    }

    pub fn within(&self, height: usize, width: usize) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.w >= 0.0
            && self.h >= 0.0
            && self.right() <= width as f64
            && self.bottom() <= height as f64
    }

    /// Multiplies x/w by `sx` and y/h by `sy`.
    pub fn scaled(&self, sx: f64, sy: f64) -> BBox {
        BBox::new(self.x * sx, self.y * sy, self.w * sx, self.h * sy)
    }

    /// Clips the box to `[0, width] x [0, height]`.
    pub fn clamped(&self, height: usize, width: usize) -> BBox {
        let x0 = self.x.clamp(0.0, width as f64);
        let y0 = self.y.clamp(0.0, height as f64);
        let x1 = self.right().clamp(x0, width as f64);
        let y1 = self.bottom().clamp(y0, height as f64);
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }
}

/// Tightest box around the set pixels; an empty mask yields a zero box at the origin.
pub fn bbox_from_mask(mask: &BinaryMask) -> BBox {
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for (r, c) in mask.ones() {
        bounds = Some(match bounds {
            None => (r, r, c, c),
            Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
        });
    }
    match bounds {
        None => BBox::default(),
        Some((r0, r1, c0, c1)) => BBox::new(
            c0 as f64,
            r0 as f64,
            (c1 - c0 + 1) as f64,
            (r1 - r0 + 1) as f64,
        ),
    }
}

/// Rectangle intersection over union; 0 when the union has no area.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

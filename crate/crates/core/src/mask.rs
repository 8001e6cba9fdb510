//! Binary segmentation masks and localization metrics.
//!
//! Masks are fixed-size binary grids stored as packed bit words over a
//! column-major pixel order, the same order used by the run-length text
//! format (see [`Mask::from_rle`]). Overlap metrics keep intersection and
//! union as integer pixel counts and divide only at the end, so results are
//! exact up to a single floating division.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by mask construction and mask metrics.
#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {0}x{1}")]
    InvalidDimensions(u32, u32),
    #[error("pixel ({x}, {y}) out of bounds for {width}x{height} mask")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("mask shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("invalid mask RLE: {0}")]
    Rle(String),
    #[error("metric requires at least one mask pair")]
    EmptyDataset,
    #[error("invalid box [{0}, {1}, {2}, {3}]: corners must satisfy x1 <= x2 and y1 <= y2")]
    InvalidBox(i64, i64, i64, i64),
}

/// A binary mask over a `width` x `height` pixel grid.
///
/// Bits are packed into 64-bit words in column-major order: pixel `(x, y)`
/// lives at flat index `x * height + y`. Unused high bits of the last word
/// are kept zero so population counts stay exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl Mask {
    /// Creates an all-zero mask. Both dimensions must be positive.
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::InvalidDimensions(width, height));
        }
        let bits = width as usize * height as usize;
        Ok(Mask {
            width,
            height,
            words: vec![0; bits.div_ceil(64)],
        })
    }

    /// Creates a mask with the given foreground pixels set.
    pub fn from_pixels(
        width: u32,
        height: u32,
        pixels: &[(u32, u32)],
    ) -> Result<Self, MaskError> {
        let mut mask = Mask::new(width, height)?;
        for &(x, y) in pixels {
            mask.set(x, y, true)?;
        }
        Ok(mask)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn flat_index(&self, x: u32, y: u32) -> Result<usize, MaskError> {
        if x >= self.width || y >= self.height {
            return Err(MaskError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(x as usize * self.height as usize + y as usize)
    }

    /// Sets the pixel at `(x, y)`.
    pub fn set(&mut self, x: u32, y: u32, value: bool) -> Result<(), MaskError> {
        let idx = self.flat_index(x, y)?;
        let (word, bit) = (idx / 64, idx % 64);
        if value {
            self.words[word] |= 1 << bit;
        } else {
            self.words[word] &= !(1 << bit);
        }
        Ok(())
    }

    /// Reads the pixel at `(x, y)`.
    pub fn get(&self, x: u32, y: u32) -> Result<bool, MaskError> {
        let idx = self.flat_index(x, y)?;
        Ok(self.words[idx / 64] >> (idx % 64) & 1 == 1)
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Sets every pixel of `bbox` that falls inside the mask, treating both
    /// corners as inclusive pixel coordinates. Used to rasterize a predicted
    /// box when no decoded mask is available.
    pub fn fill_box(&mut self, bbox: &BBox) -> Result<(), MaskError> {
        let x_lo = bbox.x1.max(0) as u32;
        let y_lo = bbox.y1.max(0) as u32;
        if bbox.x2 < 0 || bbox.y2 < 0 {
            return Ok(());
        }
        let x_hi = (bbox.x2 as u64).min(self.width as u64 - 1) as u32;
        let y_hi = (bbox.y2 as u64).min(self.height as u64 - 1) as u32;
        for x in x_lo..=x_hi {
            for y in y_lo..=y_hi {
                self.set(x, y, true)?;
            }
        }
        Ok(())
    }

    /// Parses the run-length text format `"<height> <width> <c0> <c1> ..."`.
    ///
    /// Counts describe alternating runs over the column-major pixel order,
    /// starting with a background run (`c0` may be 0 when the first pixel is
    /// foreground). Run lengths after the first must be positive and must sum
    /// to `width * height`.
    pub fn from_rle(text: &str) -> Result<Self, MaskError> {
        let mut tokens = text.split_whitespace();
        let mut dim = |name: &str| -> Result<u32, MaskError> {
            tokens
                .next()
                .ok_or_else(|| MaskError::Rle(format!("missing {name}")))?
                .parse::<u32>()
                .map_err(|_| MaskError::Rle(format!("{name} is not a non-negative integer")))
        };
        let height = dim("height")?;
        let width = dim("width")?;
        let mut mask = Mask::new(width, height)?;
        let total = width as u64 * height as u64;

        let mut covered = 0u64;
        let mut value = false;
        for (i, token) in tokens.enumerate() {
            let run: u64 = token
                .parse()
                .map_err(|_| MaskError::Rle(format!("count {i} is not a non-negative integer")))?;
            if run == 0 && i > 0 {
                return Err(MaskError::Rle(format!("zero run length at count {i}")));
            }
            if value {
                for idx in covered..covered + run {
                    if idx >= total {
                        break;
                    }
                    let (word, bit) = (idx as usize / 64, idx as usize % 64);
                    mask.words[word] |= 1 << bit;
                }
            }
            covered += run;
            value = !value;
        }
        if covered != total {
            return Err(MaskError::Rle(format!(
                "runs cover {covered} pixels, expected {total}"
            )));
        }
        Ok(mask)
    }

    /// Serializes to the run-length text format parsed by [`Mask::from_rle`].
    pub fn to_rle(&self) -> String {
        let total = self.width as u64 * self.height as u64;
        let mut out = format!("{} {}", self.height, self.width);
        let mut run_value = false;
        let mut run_len = 0u64;
        for idx in 0..total {
            let bit = self.words[idx as usize / 64] >> (idx % 64) & 1 == 1;
            if bit == run_value {
                run_len += 1;
            } else {
                out.push_str(&format!(" {run_len}"));
                run_value = bit;
                run_len = 1;
            }
        }
        out.push_str(&format!(" {run_len}"));
        out
    }

    /// Counts intersection and union pixels against another mask of the same
    /// shape.
    pub fn overlap(&self, other: &Mask) -> Result<IoUStats, MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::ShapeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        let mut intersection = 0u64;
        let mut union = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            intersection += (a & b).count_ones() as u64;
            union += (a | b).count_ones() as u64;
        }
        Ok(IoUStats {
            intersection,
            union,
        })
    }
}

/// Integer intersection and union pixel counts for one mask pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoUStats {
    pub intersection: u64,
    pub union: u64,
}

impl IoUStats {
    /// Intersection over union. Two empty masks overlap perfectly, so an
    /// empty union yields 1.0 rather than 0/0.
    pub fn value(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

/// Intersection over union for one pred/gt pair, together with the raw
/// counts.
///
/// # Example
///
/// ```
/// use segreason_core::mask::{iou, Mask};
///
/// let pred = Mask::from_pixels(2, 2, &[(0, 0), (0, 1)]).unwrap();
/// let gt = Mask::from_pixels(2, 2, &[(0, 1), (1, 1)]).unwrap();
/// let (value, stats) = iou(&pred, &gt).unwrap();
/// assert_eq!(value, 1.0 / 3.0);
/// assert_eq!((stats.intersection, stats.union), (1, 3));
/// ```
pub fn iou(pred: &Mask, gt: &Mask) -> Result<(f64, IoUStats), MaskError> {
    let stats = pred.overlap(gt)?;
    Ok((stats.value(), stats))
}

/// Global IoU: the mean of per-pair IoU values. Each pair must share a shape
/// internally, but different pairs may have different shapes.
pub fn giou(pairs: &[(&Mask, &Mask)]) -> Result<f64, MaskError> {
    if pairs.is_empty() {
        return Err(MaskError::EmptyDataset);
    }
    let mut sum = 0.0;
    for (pred, gt) in pairs {
        sum += pred.overlap(gt)?.value();
    }
    Ok(sum / pairs.len() as f64)
}

/// Cumulative IoU: pools intersection and union counts over all pairs before
/// dividing, which weights samples by pixel count instead of equally.
pub fn ciou(pairs: &[(&Mask, &Mask)]) -> Result<f64, MaskError> {
    if pairs.is_empty() {
        return Err(MaskError::EmptyDataset);
    }
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (pred, gt) in pairs {
        let stats = pred.overlap(gt)?;
        intersection += stats.intersection;
        union += stats.union;
    }
    Ok(IoUStats {
        intersection,
        union,
    }
    .value())
}

/// An axis-aligned box with inclusive integer pixel corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl BBox {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self, MaskError> {
        if x1 > x2 || y1 > y2 {
            return Err(MaskError::InvalidBox(x1, y1, x2, y2));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }
}

impl TryFrom<[i64; 4]> for BBox {
    type Error = MaskError;

    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// A click location in integer pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }
}

impl From<[i64; 2]> for Point {
    fn from(v: [i64; 2]) -> Self {
        Point { x: v[0], y: v[1] }
    }
}

impl From<Point> for [i64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Mean absolute coordinate error between two boxes, in pixels: the average
/// of the four per-coordinate deviations.
pub fn bbox_l1(a: &BBox, b: &BBox) -> f64 {
    let sum = (a.x1 - b.x1).abs() + (a.y1 - b.y1).abs() + (a.x2 - b.x2).abs() + (a.y2 - b.y2).abs();
    sum as f64 / 4.0
}

/// Mean absolute coordinate error between two points, in pixels. Note this
/// is an L1 quantity, not the Euclidean distance.
pub fn point_l1(a: &Point, b: &Point) -> f64 {
    ((a.x - b.x).abs() + (a.y - b.y).abs()) as f64 / 2.0
}

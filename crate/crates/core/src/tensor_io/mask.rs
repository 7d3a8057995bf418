use super::tensor::{BinaryMask, BoundingBox};
use crate::error::{Error, Result};

/// Rasterises a box annotation into a full-resolution mask.
pub fn mask_from_bbox(bbox: BoundingBox, height: usize, width: usize) -> Result<BinaryMask> {
    bbox.validate(height, width)?;
    let mut values = vec![0u8; height * width];
    for r in bbox.r0..bbox.r1 {
        values[r * width + bbox.c0..r * width + bbox.c1].fill(1);
    }
    BinaryMask::new(height, width, values)
}

/// Block-mean downsampling. Source rows of output row `i` are
/// `[floor(i*H/h), floor((i+1)*H/h))`, likewise for columns; a cell is
/// foreground when at least half of its block is.
pub fn downsample_mask(mask: &BinaryMask, h: usize, w: usize) -> Result<BinaryMask> {
    let (src_h, src_w) = (mask.height(), mask.width());
    if h < 1 || w < 1 {
        return Err(Error::InvalidShape(format!("target size {h}x{w} must be at least 1x1")));
    }
    if h > src_h || w > src_w {
        return Err(Error::InvalidShape(format!(
            "cannot downsample {src_h}x{src_w} to larger {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let (r0, r1) = (i * src_h / h, (i + 1) * src_h / h);
        for j in 0..w {
            let (c0, c1) = (j * src_w / w, (j + 1) * src_w / w);
            let ones: usize = (r0..r1)
                .map(|r| (c0..c1).filter(|&c| mask.get(r, c)).count())
                .sum();
            let cells = (r1 - r0) * (c1 - c0);
            out.push((2 * ones >= cells) as u8);
        }
    }
    BinaryMask::new(h, w, out)
}

//! Per-segment byte deltas between an old and a new firmware image.
//!
//! The diff is a plain byte comparison, segment by segment: maximal runs of
//! changed bytes become update blocks, and two runs separated by at most
//! `merge_gap` unchanged bytes are merged into one block (re-sending a couple
//! of unchanged bytes is cheaper than another block header on the wire).
//! When the images differ in length the shorter one is padded with `0xFF`,
//! matching the erased state of flash beyond a loaded image.
//!
//! [`apply_delta`] is the reconstruction path and doubles as the correctness
//! oracle: splicing every delta into the old image must reproduce the new one
//! exactly.

use thiserror::Error;

use crate::flash::ERASED_BYTE;

/// Largest data length a single block may carry; the wire format spends one
/// byte on it. Longer runs are split into chained blocks.
pub const MAX_BLOCK_LEN: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeltaError {
    #[error("segment size must be positive")]
    ZeroSegmentSize,
    #[error("images must be non-empty")]
    EmptyImage,
    #[error("image of {len} bytes exceeds flash capacity {capacity}")]
    ImageExceedsFlash { len: usize, capacity: usize },
    #[error("block length {len} outside 1..={MAX_BLOCK_LEN}")]
    InvalidBlockLength { len: usize },
    #[error("block at offset {offset} (+{len}) exceeds segment size {segment_size}")]
    BlockOutOfBounds {
        offset: usize,
        len: usize,
        segment_size: usize,
    },
    #[error("blocks must be sorted by offset and non-overlapping (offset {offset})")]
    UnorderedBlocks { offset: usize },
}

/// One contiguous patch inside a segment: `data` replaces the bytes starting
/// at `offset` (relative to the segment base).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateBlock {
    pub offset: usize,
    pub data: Vec<u8>,
}

impl UpdateBlock {
    pub fn new(offset: usize, data: Vec<u8>) -> Result<Self, DeltaError> {
        if data.is_empty() || data.len() > MAX_BLOCK_LEN {
            return Err(DeltaError::InvalidBlockLength { len: data.len() });
        }
        Ok(Self { offset, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// One past the last patched offset.
    pub fn end(&self) -> usize {
        self.offset + self.data.len()
    }
}

/// All blocks for one dirty flash segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentDelta {
    pub segment_index: usize,
    pub blocks: Vec<UpdateBlock>,
    /// True when the segment lies entirely beyond the old image's end, i.e.
    /// the update grows the image into previously erased flash.
    pub grows_image: bool,
}

impl SegmentDelta {
    /// Checks the structural invariants: sorted, non-overlapping, in-bounds
    /// blocks with wire-encodable lengths.
    pub fn validate(&self, segment_size: usize) -> Result<(), DeltaError> {
        let mut cursor = 0usize;
        for block in &self.blocks {
            if block.data.is_empty() || block.data.len() > MAX_BLOCK_LEN {
                return Err(DeltaError::InvalidBlockLength {
                    len: block.data.len(),
                });
            }
            if block.offset < cursor {
                return Err(DeltaError::UnorderedBlocks {
                    offset: block.offset,
                });
            }
            if block.end() > segment_size {
                return Err(DeltaError::BlockOutOfBounds {
                    offset: block.offset,
                    len: block.data.len(),
                    segment_size,
                });
            }
            cursor = block.end();
        }
        Ok(())
    }

    /// Total patched bytes across all blocks.
    pub fn data_bytes(&self) -> usize {
        self.blocks.iter().map(UpdateBlock::len).sum()
    }
}

/// Knobs for [`compute_deltas`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffConfig {
    pub segment_size: usize,
    /// Runs separated by at most this many unchanged bytes merge into one
    /// block. A block costs 3 bytes of wire overhead, so gaps smaller than
    /// that are cheaper to re-send inline.
    pub merge_gap: usize,
    pub flash_capacity: usize,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            segment_size: crate::flash::DEFAULT_SEGMENT_SIZE,
            merge_gap: 4,
            flash_capacity: crate::flash::DEFAULT_FLASH_SIZE,
        }
    }
}

/// Computes the per-segment deltas turning `old` into `new`.
///
/// Exactly the segments where the (0xFF-padded) images differ appear in the
/// result, in ascending segment order. Runs longer than [`MAX_BLOCK_LEN`] are
/// split into chained blocks so every block length fits the wire format's
/// one-byte field.
pub fn compute_deltas(
    old: &[u8],
    new: &[u8],
    cfg: &DiffConfig,
) -> Result<Vec<SegmentDelta>, DeltaError> {
    if cfg.segment_size == 0 {
        return Err(DeltaError::ZeroSegmentSize);
    }
    if old.is_empty() || new.is_empty() {
        return Err(DeltaError::EmptyImage);
    }
    for img in [old, new] {
        if img.len() > cfg.flash_capacity {
            return Err(DeltaError::ImageExceedsFlash {
                len: img.len(),
                capacity: cfg.flash_capacity,
            });
        }
    }
    let seg = cfg.segment_size;
    let cmp_len = old.len().max(new.len());
    let n_segments = cmp_len.div_ceil(seg);
    let byte_at = |img: &[u8], i: usize| img.get(i).copied().unwrap_or(ERASED_BYTE);

    let mut deltas = Vec::new();
    for s in 0..n_segments {
        let base = s * seg;
        let end = (base + seg).min(cmp_len);

        // Maximal changed runs within this segment, then gap-merge.
        let mut runs: Vec<(usize, usize)> = Vec::new(); // (start, end) relative to base
        let mut run_start: Option<usize> = None;
        for i in base..end {
            let changed = byte_at(old, i) != byte_at(new, i);
            match (changed, run_start) {
                (true, None) => run_start = Some(i - base),
                (false, Some(start)) => {
                    runs.push((start, i - base));
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = run_start {
            runs.push((start, end - base));
        }
        if runs.is_empty() {
            continue;
        }

        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (start, stop) in runs {
            match merged.last_mut() {
                Some(last) if start - last.1 <= cfg.merge_gap => last.1 = stop,
                _ => merged.push((start, stop)),
            }
        }

        let mut blocks = Vec::new();
        for (start, stop) in merged {
            let mut pos = start;
            while pos < stop {
                let take = (stop - pos).min(MAX_BLOCK_LEN);
                let data: Vec<u8> = (pos..pos + take).map(|r| byte_at(new, base + r)).collect();
                blocks.push(UpdateBlock { offset: pos, data });
                pos += take;
            }
        }

        deltas.push(SegmentDelta {
            segment_index: s,
            blocks,
            grows_image: base >= old.len(),
        });
    }
    Ok(deltas)
}

/// Splices a delta's blocks into a copy of `old_segment`.
pub fn apply_delta(old_segment: &[u8], delta: &SegmentDelta) -> Result<Vec<u8>, DeltaError> {
    let mut out = old_segment.to_vec();
    for block in &delta.blocks {
        if block.end() > out.len() {
            return Err(DeltaError::BlockOutOfBounds {
                offset: block.offset,
                len: block.data.len(),
                segment_size: out.len(),
            });
        }
        out[block.offset..block.end()].copy_from_slice(&block.data);
    }
    Ok(out)
}

/// Convenience: number of dirty segments between two images.
pub fn dirty_segment_count(old: &[u8], new: &[u8], cfg: &DiffConfig) -> Result<usize, DeltaError> {
    Ok(compute_deltas(old, new, cfg)?.len())
}

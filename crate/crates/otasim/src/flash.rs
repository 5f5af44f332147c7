//! Behavioral model of segmented NOR flash plus the device's SRAM budget.
//!
//! NOR flash programming is a two-step discipline: erasing a segment sets
//! every cell to logic 1 (bytes read back as `0xFF`), and a subsequent write
//! may only clear bits to 0. A write that would need any 0 -> 1 transition is
//! rejected with [`FlashError::BitSetViolation`]; in an update protocol that
//! always signals a missing erase, never a recoverable condition.
//!
//! Writes are whole-segment only. The update protocols modeled by this crate
//! always reconstruct a complete segment in SRAM before committing it, so a
//! sub-segment write primitive is deliberately not exposed.

use thiserror::Error;

/// Default flash capacity in bytes (128 KB).
pub const DEFAULT_FLASH_SIZE: usize = 128 * 1024;
/// Default erase-segment size in bytes.
pub const DEFAULT_SEGMENT_SIZE: usize = 512;
/// Default SRAM capacity in bytes (8 KB).
pub const DEFAULT_SRAM_CAPACITY: usize = 8 * 1024;
/// Value every byte of a freshly erased segment reads back as.
pub const ERASED_BYTE: u8 = 0xFF;

/// Errors raised by the flash model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlashError {
    #[error("segment index {index} out of range (flash has {count} segments)")]
    SegmentOutOfRange { index: usize, count: usize },
    #[error("write of {len} bytes does not match segment size {segment_size}")]
    WrongWriteLength { len: usize, segment_size: usize },
    #[error(
        "bit-set violation in segment {segment} at offset {offset}: \
         0x{old:02x} -> 0x{new:02x} would set a cleared bit (missing erase)"
    )]
    BitSetViolation {
        segment: usize,
        offset: usize,
        old: u8,
        new: u8,
    },
    #[error("segment size must be positive")]
    ZeroSegmentSize,
    #[error("total size {total} is not a multiple of segment size {segment_size}")]
    MisalignedGeometry { total: usize, segment_size: usize },
    #[error("image of {len} bytes exceeds flash capacity {capacity}")]
    ImageTooLarge { len: usize, capacity: usize },
}

/// SRAM accounting errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SramError {
    #[error("sram overflow: need {requested} more bytes, {available} of {capacity} available")]
    Overflow {
        requested: usize,
        available: usize,
        capacity: usize,
    },
}

/// Segmented NOR flash with erase-before-write bit semantics and a
/// per-segment erase counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlashMemory {
    segment_size: usize,
    cells: Vec<u8>,
    erase_counts: Vec<u32>,
}

impl FlashMemory {
    /// Creates a fully erased flash of `total_size` bytes split into
    /// `segment_size`-byte segments. `total_size` must be an exact multiple
    /// of `segment_size`.
    pub fn new(total_size: usize, segment_size: usize) -> Result<Self, FlashError> {
        if segment_size == 0 {
            return Err(FlashError::ZeroSegmentSize);
        }
        if total_size == 0 || !total_size.is_multiple_of(segment_size) {
            return Err(FlashError::MisalignedGeometry {
                total: total_size,
                segment_size,
            });
        }
        Ok(Self {
            segment_size,
            cells: vec![ERASED_BYTE; total_size],
            erase_counts: vec![0; total_size / segment_size],
        })
    }

    /// Creates a flash whose leading bytes hold `image`; the remainder stays
    /// erased (`0xFF`). Erase counters start at zero — preloading models the
    /// factory state, not update activity.
    pub fn with_image(
        image: &[u8],
        total_size: usize,
        segment_size: usize,
    ) -> Result<Self, FlashError> {
        let mut flash = Self::new(total_size, segment_size)?;
        if image.len() > total_size {
            return Err(FlashError::ImageTooLarge {
                len: image.len(),
                capacity: total_size,
            });
        }
        flash.cells[..image.len()].copy_from_slice(image);
        Ok(flash)
    }

    pub fn total_size(&self) -> usize {
        self.cells.len()
    }

    pub fn segment_size(&self) -> usize {
        self.segment_size
    }

    pub fn num_segments(&self) -> usize {
        self.cells.len() / self.segment_size
    }

    /// Full cell contents, mostly useful to compare a finished update against
    /// the expected image.
    pub fn contents(&self) -> &[u8] {
        &self.cells
    }

    /// How many times segment `index` has been erased.
    pub fn erase_count(&self, index: usize) -> Result<u32, FlashError> {
        self.check_index(index)?;
        Ok(self.erase_counts[index])
    }

    /// Total erases across all segments.
    pub fn total_erases(&self) -> u64 {
        self.erase_counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Sets every byte of segment `index` to `0xFF` and bumps its erase
    /// counter.
    pub fn erase_segment(&mut self, index: usize) -> Result<(), FlashError> {
        self.check_index(index)?;
        let start = index * self.segment_size;
        self.cells[start..start + self.segment_size].fill(ERASED_BYTE);
        self.erase_counts[index] += 1;
        Ok(())
    }

    /// Programs segment `index` with exactly `segment_size` bytes. Every byte
    /// must satisfy `old & new == new`: a write can only clear bits. The
    /// first offending byte aborts the whole write with no cells modified.
    pub fn write_segment(&mut self, index: usize, data: &[u8]) -> Result<(), FlashError> {
        self.check_index(index)?;
        if data.len() != self.segment_size {
            return Err(FlashError::WrongWriteLength {
                len: data.len(),
                segment_size: self.segment_size,
            });
        }
        let start = index * self.segment_size;
        let target = &self.cells[start..start + self.segment_size];
        for (offset, (&old, &new)) in target.iter().zip(data).enumerate() {
            if old & new != new {
                return Err(FlashError::BitSetViolation {
                    segment: index,
                    offset,
                    old,
                    new,
                });
            }
        }
        self.cells[start..start + self.segment_size].copy_from_slice(data);
        Ok(())
    }

    /// Returns a copy of segment `index`. Reading never mutates the flash.
    pub fn read_segment(&self, index: usize) -> Result<Vec<u8>, FlashError> {
        self.check_index(index)?;
        let start = index * self.segment_size;
        Ok(self.cells[start..start + self.segment_size].to_vec())
    }

    /// Debug hex dump of the full array: offset plus 16 bytes per line.
    pub fn hexdump(&self) -> String {
        hexdump(&self.cells)
    }

    fn check_index(&self, index: usize) -> Result<(), FlashError> {
        let count = self.num_segments();
        if index >= count {
            return Err(FlashError::SegmentOutOfRange { index, count });
        }
        Ok(())
    }
}

/// Hex dump of an arbitrary byte buffer, 16 bytes per line prefixed with the
/// byte offset. Debugging aid only; the binary image itself is the durable
/// interchange format.
pub fn hexdump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (i, chunk) in bytes.chunks(16).enumerate() {
        out.push_str(&format!("{:08x} ", i * 16));
        for b in chunk {
            out.push_str(&format!(" {b:02x}"));
        }
        out.push('\n');
    }
    out
}

/// Byte-granular accounting for the device's volatile SRAM.
///
/// The buffer tracks how many bytes are committed to staged packets and the
/// segment reconstruction area; the actual staged data lives with the device
/// state. Exceeding the capacity is a hard error, never silent truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SramBuffer {
    capacity: usize,
    used: usize,
}

impl SramBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, used: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn available(&self) -> usize {
        self.capacity - self.used
    }

    /// Reserves `bytes` of SRAM.
    pub fn alloc(&mut self, bytes: usize) -> Result<(), SramError> {
        if bytes > self.available() {
            return Err(SramError::Overflow {
                requested: bytes,
                available: self.available(),
                capacity: self.capacity,
            });
        }
        self.used += bytes;
        Ok(())
    }

    /// Releases `bytes` of SRAM. Releasing more than is held is a caller bug.
    pub fn free(&mut self, bytes: usize) {
        debug_assert!(bytes <= self.used, "sram free underflow");
        self.used = self.used.saturating_sub(bytes);
    }

    /// Drops everything held, as a power failure would.
    pub fn reset(&mut self) {
        self.used = 0;
    }
}

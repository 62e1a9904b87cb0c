//! The PLFD binary container for [`ModelOutputs`].
//!
//! Layout (all little-endian):
//!
//! ```text
//! "PLFD"  version:u32=1  K:u32  image_height:u32  image_width:u32
//! stride:u32  grid_height:u32  grid_width:u32
//! 5 × { channels:u32  grid_height·grid_width·channels × f32 }
//! ```
//!
//! Blocks appear in the order heatmaps, short, mid, long, seg. Values are
//! row-major and channel-minor, matching [`FieldGrid`]'s memory layout.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FieldGrid, ModelOutputs};

pub const MAGIC: [u8; 4] = *b"PLFD";
pub const VERSION: u32 = 1;

const BLOCK_NAMES: [&str; 5] = [
    "heatmaps",
    "short_offsets",
    "mid_offsets",
    "long_offsets",
    "seg_prob",
];

/// Serializes outputs into PLFD bytes. Identical inputs give identical bytes.
pub fn encode_container(outputs: &ModelOutputs) -> Result<Vec<u8>> {
    outputs.validate()?;
    let blocks = blocks(outputs);
    let payload: usize = blocks.iter().map(|g| 4 + 4 * g.data().len()).sum();
    let mut buf = Vec::with_capacity(32 + payload);
    buf.extend_from_slice(&MAGIC);
    let header = [
        VERSION,
        to_u32(outputs.num_keypoints(), "K")?,
        outputs.image_height,
        outputs.image_width,
        outputs.stride(),
        to_u32(outputs.grid_height(), "grid_height")?,
        to_u32(outputs.grid_width(), "grid_width")?,
    ];
    for v in header {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for grid in blocks {
        buf.extend_from_slice(&to_u32(grid.channels(), "channels")?.to_le_bytes());
        for v in grid.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn save_container(outputs: &ModelOutputs, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_container(outputs)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_container(path: impl AsRef<Path>) -> Result<ModelOutputs> {
    let bytes = fs::read(path)?;
    decode_container(&bytes)
}

/// Parses PLFD bytes back into [`ModelOutputs`].
pub fn decode_container(bytes: &[u8]) -> Result<ModelOutputs> {
    let mut rd = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = rd.take(4)?.try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let k = rd.u32()? as usize;
    let image_height = rd.u32()?;
    let image_width = rd.u32()?;
    let stride = rd.u32()?;
    if stride == 0 {
        return Err(Error::parse("stride", "stride must be positive"));
    }
    let gh = rd.u32()? as usize;
    let gw = rd.u32()? as usize;

    let expected_channels = [
        k,
        2 * k,
        crate::field::mid_channels(k),
        2 * k,
        1,
    ];
    let mut grids = Vec::with_capacity(5);
    for (name, expected) in BLOCK_NAMES.iter().zip(expected_channels) {
        let channels = rd.u32()? as usize;
        if channels != expected {
            return Err(Error::mismatch(
                format!("{name} channels"),
                expected,
                channels,
            ));
        }
        let count = gh
            .checked_mul(gw)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::parse(*name, "block size overflows"))?;
        let raw = rd.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::parse(*name, "block size overflows"))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        grids.push(FieldGrid::new(gh, gw, channels, stride, data)?);
    }
    if rd.pos != bytes.len() {
        return Err(Error::TrailingData(bytes.len() - rd.pos));
    }
    let mut it = grids.into_iter();
    let mut next = || it.next().expect("five blocks");
    ModelOutputs::new(
        next(),
        next(),
        next(),
        next(),
        next(),
        image_height,
        image_width,
    )
}

fn blocks(o: &ModelOutputs) -> [&FieldGrid; 5] {
    [
        &o.heatmaps,
        &o.short_offsets,
        &o.mid_offsets,
        &o.long_offsets,
        &o.seg_prob,
    ]
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::usage(format!("{what} = {v} does not fit in u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

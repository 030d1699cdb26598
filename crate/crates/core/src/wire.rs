//! Frame-metadata header option.
//!
//! The server stamps every packet of a VR frame with a 12-byte option that
//! lets the bottleneck compute the frame's queuing delay bound:
//!
//! ```text
//!  0      1      2      3      4      5      6      7      8      9      10     11
//! +------+------+------+------+------+------+------+------+------+------+------+------+
//! | kind | len  |flags |   chunk c   |tile m|frm k | deadline ms | RTT ms      |rtt   |
//! | 0xFE | 0x0C |b0=VR |  (u16 BE)   | (u8) | (u8) |  (u16 BE)   | (u16 BE)    |ref   |
//! +------+------+------+------+------+------+------+------+------+------+------+------+
//! ```
//!
//! Deadline and RTT saturate at 65535 ms. The RTT reference is a backward
//! offset, in frames of the same flow's send order, to the frame whose
//! acknowledgement produced the RTT value; 0 means "no reference".

use crate::error::CodecError;
use crate::video::FrameId;

pub const OPTION_KIND: u8 = 0xFE;
pub const OPTION_LEN: usize = 12;
const FLAG_VR: u8 = 0x01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetadataOption {
    pub vr_flag: bool,
    pub frame: FrameId,
    /// Milliseconds; values above 65535 are encoded as 65535.
    pub deadline_ms: u32,
    /// Milliseconds; values above 65535 are encoded as 65535.
    pub rtt_ms: u32,
    pub rtt_ref_offset: u8,
}

fn saturate(v: u32) -> [u8; 2] {
    (v.min(u32::from(u16::MAX)) as u16).to_be_bytes()
}

pub fn encode(opt: &MetadataOption) -> Result<[u8; OPTION_LEN], CodecError> {
    let FrameId { chunk, tile, frame } = opt.frame;
    let chunk = u16::try_from(chunk).map_err(|_| CodecError::Range {
        field: "chunk",
        value: u64::from(chunk),
    })?;
    let tile = u8::try_from(tile).map_err(|_| CodecError::Range {
        field: "tile",
        value: u64::from(tile),
    })?;
    let frame = u8::try_from(frame).map_err(|_| CodecError::Range {
        field: "frame",
        value: u64::from(frame),
    })?;
    let mut out = [0u8; OPTION_LEN];
    out[0] = OPTION_KIND;
    out[1] = OPTION_LEN as u8;
    out[2] = if opt.vr_flag { FLAG_VR } else { 0 };
    out[3..5].copy_from_slice(&chunk.to_be_bytes());
    out[5] = tile;
    out[6] = frame;
    out[7..9].copy_from_slice(&saturate(opt.deadline_ms));
    out[9..11].copy_from_slice(&saturate(opt.rtt_ms));
    out[11] = opt.rtt_ref_offset;
    Ok(out)
}

/// Parses the option at the start of `bytes`; trailing bytes are ignored.
pub fn decode(bytes: &[u8]) -> Result<MetadataOption, CodecError> {
    if bytes.len() < OPTION_LEN {
        return Err(CodecError::Short(bytes.len()));
    }
    if bytes[0] != OPTION_KIND {
        return Err(CodecError::Kind(bytes[0]));
    }
    if usize::from(bytes[1]) != OPTION_LEN {
        return Err(CodecError::Length(bytes[1]));
    }
    let flags = bytes[2];
    if flags & !FLAG_VR != 0 {
        return Err(CodecError::Flags(flags));
    }
    let be16 = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
    Ok(MetadataOption {
        vr_flag: flags & FLAG_VR != 0,
        frame: FrameId::new(u32::from(be16(3)), u16::from(bytes[5]), u16::from(bytes[6])),
        deadline_ms: u32::from(be16(7)),
        rtt_ms: u32::from(be16(9)),
        rtt_ref_offset: bytes[11],
    })
}

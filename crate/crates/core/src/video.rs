//! Frames, GoP dependency structure, importance and deadlines.

use std::fmt;
use std::io::{BufRead, Write};

use num_traits::{FromPrimitive, Num, ToPrimitive};

use crate::error::{DomainError, TraceError};
use crate::time::Micros;

/// Identity of frame `k` of tile `m` of chunk `c`.
///
/// Ordering is lexicographic in `(chunk, tile, frame)`, which is also the
/// order in which the server sends a flow's frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId {
    pub chunk: u32,
    pub tile: u16,
    pub frame: u16,
}

impl FrameId {
    pub const fn new(chunk: u32, tile: u16, frame: u16) -> Self {
        FrameId { chunk, tile, frame }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.chunk, self.tile, self.frame)
    }
}

/// Decoding dependencies inside one group of pictures.
///
/// `dependents[k-1]` is the number of other frames of the GoP that become
/// undecodable when frame `k` (encoding order) is lost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GopStructure {
    dependents: Vec<u32>,
    references: Option<Vec<Vec<usize>>>,
    count_self: bool,
}

impl GopStructure {
    /// Builds a structure from explicit dependent counts.
    pub fn from_dependents(dependents: Vec<u32>) -> Result<Self, DomainError> {
        let n = dependents.len();
        if n == 0 {
            return Err(DomainError::Gop("empty GoP".into()));
        }
        if let Some(k) = dependents.iter().position(|&d| d as usize > n - 1) {
            return Err(DomainError::Gop(format!(
                "frame {} has {} dependents in a GoP of {n}",
                k + 1,
                dependents[k]
            )));
        }
        if dependents[0] as usize != n - 1 {
            return Err(DomainError::Gop(format!(
                "the I-frame must have {} dependents, got {}",
                n - 1,
                dependents[0]
            )));
        }
        Ok(GopStructure {
            dependents,
            references: None,
            count_self: false,
        })
    }

    /// Builds a structure from per-frame reference lists (1-based positions,
    /// each referencing only earlier frames in encoding order).
    pub fn from_references(references: Vec<Vec<usize>>) -> Result<Self, DomainError> {
        let n = references.len();
        for (i, refs) in references.iter().enumerate() {
            if let Some(&r) = refs.iter().find(|&&r| r == 0 || r > i) {
                return Err(DomainError::Gop(format!(
                    "frame {} references frame {r}, which is not earlier",
                    i + 1
                )));
            }
        }
        // referenced_by[j] = frames that reference j directly
        let mut referenced_by = vec![Vec::new(); n];
        for (i, refs) in references.iter().enumerate() {
            for &r in refs {
                referenced_by[r - 1].push(i);
            }
        }
        let mut dependents = vec![0u32; n];
        let mut seen = vec![false; n];
        for k in 0..n {
            seen.iter_mut().for_each(|s| *s = false);
            let mut stack = referenced_by[k].clone();
            let mut count = 0;
            while let Some(j) = stack.pop() {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.extend_from_slice(&referenced_by[j]);
                }
            }
            dependents[k] = count;
        }
        let mut gop = Self::from_dependents(dependents)?;
        gop.references = Some(references);
        Ok(gop)
    }

    /// Two temporal sub-layers in encoding order `I P B P B P ...`.
    ///
    /// Layer 0 holds the I-frame and the P-frames at even positions, each P
    /// referencing the previous layer-0 frame. Every B-frame (odd position
    /// from 3 on) sits in layer 1 and references the two layer-0 frames
    /// around it, so losing it breaks nothing else.
    pub fn two_layer(size: usize) -> Self {
        assert!(size > 0, "GoP size must be positive");
        let references = (1..=size)
            .map(|p| match p {
                1 => vec![],
                2 => vec![1],
                p if p % 2 == 0 => vec![p - 2],
                3 => vec![1, 2],
                p => vec![p - 3, p - 1],
            })
            .collect();
        Self::from_references(references).expect("two-layer GoP is well formed")
    }

    /// Variant where a frame's own loss counts toward its dependents.
    pub fn counting_self(mut self) -> Self {
        self.count_self = true;
        self
    }

    pub fn len(&self) -> usize {
        self.dependents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dependents.is_empty()
    }

    /// `N_k` for 1-based position `k`.
    pub fn dependents(&self, k: usize) -> Result<u32, DomainError> {
        if k == 0 || k > self.len() {
            return Err(DomainError::FramePosition {
                k,
                gop_size: self.len(),
            });
        }
        Ok(self.dependents[k - 1] + u32::from(self.count_self))
    }

    /// Direct references of position `k`, when the structure was built from
    /// reference lists.
    pub fn references(&self, k: usize) -> Option<&[usize]> {
        self.references
            .as_ref()
            .and_then(|r| r.get(k.wrapping_sub(1)))
            .map(Vec::as_slice)
    }

    pub fn is_intra(&self, k: usize) -> bool {
        k == 1
    }
}

/// Importance of a frame: viewing probability times the fraction of the
/// GoP that its loss makes undecodable.
pub fn importance<T>(p: T, k: usize, gop: &GopStructure) -> Result<T, DomainError>
where
    T: Num + PartialOrd + Copy + FromPrimitive + ToPrimitive,
{
    if !(p > T::zero() && p <= T::one()) {
        return Err(DomainError::Probability(p.to_f64().unwrap_or(f64::NAN)));
    }
    let n_k = T::from_u32(gop.dependents(k)?).expect("dependent count");
    let n_gop = T::from_usize(gop.len()).expect("GoP size");
    Ok(p * n_k / n_gop)
}

/// Playback lead of chunk `chunk` when it is requested while chunk
/// `watching` plays: `a * (chunk - watching)`.
pub fn chunk_deadline(
    chunk: u32,
    watching: u32,
    chunk_duration: Micros,
) -> Result<Micros, DomainError> {
    if chunk <= watching {
        return Err(DomainError::ChunkNotAhead { chunk, watching });
    }
    Ok(Micros(chunk_duration.0 * i64::from(chunk - watching)))
}

/// Deadline of a frame relative to its own send time. Negative results are
/// valid and mean the frame is already late when sent.
pub fn frame_deadline(chunk_ddl: Micros, send: Micros, first_send: Micros) -> Micros {
    chunk_ddl - (send - first_send)
}

/// RTT sample the server attaches to outgoing frames, together with the
/// frame whose acknowledgement produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RttMark {
    pub rtt: Micros,
    pub reference: FrameId,
}

/// Immutable description of one frame of a flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMeta {
    pub id: FrameId,
    /// Payload bytes.
    pub size: u32,
    pub importance: f64,
    /// Deadline relative to `send_time`.
    pub deadline: Micros,
    pub send_time: Micros,
    pub rtt_mark: Option<RttMark>,
}

/// The frames of one flow in send order, plus the layout that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrace {
    pub flow: u32,
    pub frames: Vec<FrameMeta>,
    pub chunk_duration: Micros,
    /// Per-chunk, per-tile viewing probability (empty for imported traces).
    pub tile_probabilities: Vec<Vec<f64>>,
}

pub const TRACE_HEADER: &str = "flow,c,m,k,size_bytes,gamma,ddl_ms,send_time_ms";

impl FlowTrace {
    /// Checks the invariants the simulator relies on.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut prev: Option<&FrameMeta> = None;
        for f in &self.frames {
            if f.size == 0 {
                return Err(TraceError::Invalid(format!("frame {} has zero size", f.id)));
            }
            if !(0.0..=1.0).contains(&f.importance) {
                return Err(TraceError::Invalid(format!(
                    "frame {} importance {} outside [0, 1]",
                    f.id, f.importance
                )));
            }
            if let Some(p) = prev {
                if f.send_time < p.send_time {
                    return Err(TraceError::Invalid(format!(
                        "frame {} sent before frame {}",
                        f.id, p.id
                    )));
                }
                if f.id <= p.id {
                    return Err(TraceError::Invalid(format!(
                        "frame {} out of order after {}",
                        f.id, p.id
                    )));
                }
            }
            prev = Some(f);
        }
        if self
            .tile_probabilities
            .iter()
            .flatten()
            .any(|&p| !(p > 0.0 && p <= 1.0))
        {
            return Err(TraceError::Invalid(
                "viewing probabilities must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for f in &self.frames {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.flow,
                f.id.chunk,
                f.id.tile,
                f.id.frame,
                f.size,
                f.importance,
                f.deadline,
                f.send_time
            )?;
        }
        Ok(())
    }

    /// Reads the line format written by [`FlowTrace::write_to`]. Blank lines,
    /// `#` comments and the header line are skipped; all records must carry
    /// the same flow id.
    pub fn read_from<R: BufRead>(r: R, chunk_duration: Micros) -> Result<Self, TraceError> {
        let mut flow = None;
        let mut frames = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| TraceError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == TRACE_HEADER {
                continue;
            }
            let err = |msg: String| TraceError::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(err(format!("expected 8 fields, found {}", fields.len())));
            }
            fn num<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
                s.parse().map_err(|_| format!("bad {name} `{s}`"))
            }
            let f: u32 = num(fields[0], "flow").map_err(err)?;
            match flow {
                None => flow = Some(f),
                Some(prev) if prev != f => {
                    return Err(err(format!("flow {f} mixed into trace of flow {prev}")))
                }
                _ => {}
            }
            let id = FrameId::new(
                num(fields[1], "chunk").map_err(err)?,
                num(fields[2], "tile").map_err(err)?,
                num(fields[3], "frame").map_err(err)?,
            );
            let ms = |s: &str, name: &str| {
                Micros::parse_ms(s).ok_or_else(|| err(format!("bad {name} `{s}`")))
            };
            frames.push(FrameMeta {
                id,
                size: num(fields[4], "size").map_err(err)?,
                importance: num(fields[5], "gamma").map_err(err)?,
                deadline: ms(fields[6], "ddl_ms")?,
                send_time: ms(fields[7], "send_time_ms")?,
                rtt_mark: None,
            });
        }
        let trace = FlowTrace {
            flow: flow.unwrap_or(0),
            frames,
            chunk_duration,
            tile_probabilities: Vec::new(),
        };
        trace.validate()?;
        Ok(trace)
    }
}

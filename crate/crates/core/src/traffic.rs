//! Synthetic tiled-video workload: Gamma frame sizes, two-layer GoPs and a
//! random-walk attention field over the tile grid.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::{stream, NoiseSource};
use crate::time::Micros;
use crate::video::{chunk_deadline, frame_deadline, importance, FlowTrace, FrameId, FrameMeta, GopStructure};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attention {
    /// Probability decays with grid distance from a wandering center.
    #[default]
    Walk,
    /// Every tile is equally likely to be watched.
    Uniform,
}

/// Workload parameters, shared by all flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub bitrate_mbps: f64,
    pub fps: u32,
    pub chunk_s: f64,
    pub chunks: u32,
    pub tile_rows: u16,
    pub tile_cols: u16,
    pub gop_size: u32,
    /// Gamma shape of frame sizes; `inf` gives constant sizes.
    pub gamma_shape: f64,
    /// Size of an I-frame relative to the other frames.
    pub i_to_p_ratio: f64,
    pub attention: Attention,
    /// Count the frame itself among the frames its loss breaks.
    pub count_self: bool,
    /// Chunks requested ahead of playback.
    pub request_lead: u32,
    /// Fraction of a chunk duration over which the server paces a chunk.
    pub send_window_frac: f64,
    /// Flow start times are spread uniformly over this many seconds.
    pub start_spread_s: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            bitrate_mbps: 2.5,
            fps: 30,
            chunk_s: 1.0,
            chunks: 30,
            tile_rows: 4,
            tile_cols: 6,
            gop_size: 8,
            gamma_shape: 4.0,
            i_to_p_ratio: 3.0,
            attention: Attention::Walk,
            count_self: false,
            request_lead: 2,
            send_window_frac: 0.5,
            start_spread_s: 1.0,
        }
    }
}

impl TrafficConfig {
    pub fn tiles(&self) -> u32 {
        u32::from(self.tile_rows) * u32::from(self.tile_cols)
    }

    pub fn frames_per_chunk(&self) -> u32 {
        (f64::from(self.fps) * self.chunk_s).round() as u32
    }

    pub fn chunk_duration(&self) -> Micros {
        Micros::from_secs_f64(self.chunk_s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, msg: &str| Err(ConfigError::field(format!("traffic.{field}"), msg));
        if !(self.bitrate_mbps > 0.0 && self.bitrate_mbps.is_finite()) {
            return bad("bitrate_mbps", "must be positive");
        }
        if self.fps == 0 {
            return bad("fps", "must be positive");
        }
        if !(self.chunk_s > 0.0 && self.chunk_s.is_finite()) {
            return bad("chunk_s", "must be positive");
        }
        let k = self.frames_per_chunk();
        if k == 0 || k > u32::from(u8::MAX) {
            return bad("chunk_s", "frames per chunk must be in 1..=255");
        }
        if self.chunks == 0 || self.chunks > u32::from(u16::MAX) {
            return bad("chunks", "must be in 1..=65535");
        }
        if self.tile_rows == 0 || self.tile_cols == 0 || self.tiles() > u32::from(u8::MAX) {
            return bad("tile_rows", "grid must hold 1..=255 tiles");
        }
        if self.gop_size == 0 || self.gop_size > k {
            return bad("gop_size", "must be between 1 and the frames per chunk");
        }
        if !(self.gamma_shape > 0.0) {
            return bad("gamma_shape", "must be positive");
        }
        if !(self.i_to_p_ratio > 0.0 && self.i_to_p_ratio.is_finite()) {
            return bad("i_to_p_ratio", "must be positive");
        }
        if !(self.send_window_frac > 0.0 && self.send_window_frac <= 1.0) {
            return bad("send_window_frac", "must be in (0, 1]");
        }
        if !(self.start_spread_s >= 0.0 && self.start_spread_s.is_finite()) {
            return bad("start_spread_s", "must be nonnegative");
        }
        Ok(())
    }

    /// GoP layouts covering one chunk: full groups followed by a truncated
    /// last group when the chunk length is not a multiple of the GoP size.
    pub fn gop_layout(&self) -> Vec<GopStructure> {
        let k = self.frames_per_chunk() as usize;
        let n = self.gop_size as usize;
        let mut out = Vec::new();
        let mut left = k;
        while left > 0 {
            let len = left.min(n);
            let gop = GopStructure::two_layer(len);
            out.push(if self.count_self { gop.counting_self() } else { gop });
            left -= len;
        }
        out
    }
}

/// Mean payload of one tile frame for a per-flow bitrate.
pub fn mean_frame_bytes(bitrate_bps: f64, fps: f64, tiles: u32) -> f64 {
    bitrate_bps / 8.0 / fps / f64::from(tiles)
}

/// Grid distance with wrapping columns.
pub fn tile_distance(a: (u16, u16), b: (u16, u16), cols: u16) -> u32 {
    let dr = a.0.abs_diff(b.0);
    let dc = a.1.abs_diff(b.1);
    u32::from(dr) + u32::from(dc.min(cols - dc))
}

/// Decay base and floor of the attention field.
const DECAY: f64 = 0.6;
const FLOOR: f64 = 0.05;

/// Viewing probabilities for every chunk: a center of attention that stays
/// or moves to a neighbouring tile each chunk (columns wrap, rows clamp).
/// Tiles are numbered row-major.
pub fn viewing_probability_walk(
    rows: u16,
    cols: u16,
    chunks: u32,
    attention: Attention,
    rng: &mut ChaCha8Rng,
) -> (Vec<(u16, u16)>, Vec<Vec<f64>>) {
    let tiles = usize::from(rows) * usize::from(cols);
    let mut center = (rng.random_range(0..rows), rng.random_range(0..cols));
    let mut centers = Vec::with_capacity(chunks as usize);
    let mut probs = Vec::with_capacity(chunks as usize);
    for c in 0..chunks {
        if c > 0 {
            center = match rng.random_range(0..5u8) {
                0 => center,
                1 => (center.0.saturating_sub(1), center.1),
                2 => ((center.0 + 1).min(rows - 1), center.1),
                3 => (center.0, (center.1 + cols - 1) % cols),
                _ => (center.0, (center.1 + 1) % cols),
            };
        }
        centers.push(center);
        let p = match attention {
            Attention::Uniform => vec![1.0; tiles],
            Attention::Walk => (0..tiles)
                .map(|t| {
                    let pos = ((t / usize::from(cols)) as u16, (t % usize::from(cols)) as u16);
                    let d = tile_distance(pos, center, cols);
                    DECAY.powi(d as i32).max(FLOOR)
                })
                .collect(),
        };
        probs.push(p);
    }
    (centers, probs)
}

/// Inputs for one flow's trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceParams {
    pub traffic: TrafficConfig,
    pub flow: u32,
    /// Client-to-server request delay; the server starts sending a chunk
    /// when the request reaches it.
    pub request_delay: Micros,
}

fn size_sampler(shape: f64, mean: f64) -> Option<Gamma<f64>> {
    if shape.is_finite() {
        Gamma::new(shape, mean / shape).ok()
    } else {
        None
    }
}

/// Generates one flow's frames in send order.
///
/// Chunk `c` is requested once chunk `c - lead` starts playing, and its
/// frames are paced over the send window in (tile, frame) order; chunks
/// requested together are sent back to back. Deadlines are relative to each
/// frame's send time.
pub fn generate_trace(params: &TraceParams, seed: u64) -> Result<FlowTrace, ConfigError> {
    let t = &params.traffic;
    t.validate()?;
    let flow = params.flow;
    let a = t.chunk_duration();
    let k_per_chunk = t.frames_per_chunk();
    let tiles = t.tiles();
    let layout = t.gop_layout();

    let mut start_rng = stream(seed, flow, NoiseSource::StartOffset);
    let spread = Micros::from_secs_f64(t.start_spread_s).as_us();
    let start = Micros(if spread > 0 { start_rng.random_range(0..spread) } else { 0 });

    let mut attn_rng = stream(seed, flow, NoiseSource::Attention);
    let (_, probs) = viewing_probability_walk(t.tile_rows, t.tile_cols, t.chunks, t.attention, &mut attn_rng);

    // I-frames are `ratio` times the others while the chunk mean stays fixed
    let mean = mean_frame_bytes(t.bitrate_mbps * 1e6, f64::from(t.fps), tiles);
    let intra = layout.len() as f64;
    let k = f64::from(k_per_chunk);
    let p_mean = mean * k / (k - intra + intra * t.i_to_p_ratio);
    let i_mean = p_mean * t.i_to_p_ratio;
    let p_dist = size_sampler(t.gamma_shape, p_mean);
    let i_dist = size_sampler(t.gamma_shape, i_mean);
    let mut size_rng = stream(seed, flow, NoiseSource::FrameSizes);
    let mut draw = |is_intra: bool| -> u32 {
        let (dist, m) = if is_intra { (&i_dist, i_mean) } else { (&p_dist, p_mean) };
        let x = match dist {
            Some(d) => d.sample(&mut size_rng),
            None => m,
        };
        x.round().max(1.0) as u32
    };

    let per_chunk = u64::from(tiles) * u64::from(k_per_chunk);
    let window = (a.as_us() as f64 * t.send_window_frac).round() as i64;
    let mut frames = Vec::with_capacity((per_chunk * u64::from(t.chunks)) as usize);
    let mut server_free = Micros::ZERO;
    for c in 1..=t.chunks {
        let watching = c.saturating_sub(t.request_lead);
        let request = start + Micros(a.as_us() * i64::from(watching));
        let received = request + params.request_delay;
        let ddl = chunk_deadline(c, watching, a).map_err(|e| ConfigError::field("traffic.request_lead", e.to_string()))?;
        let first = received.max(server_free);
        let mut i = 0i64;
        let mut send = first;
        for m in 1..=tiles {
            let p = probs[(c - 1) as usize][(m - 1) as usize];
            for kf in 1..=k_per_chunk {
                let g = (kf - 1) as usize / t.gop_size as usize;
                let pos = (kf - 1) as usize % t.gop_size as usize + 1;
                let gop = &layout[g];
                let gamma = importance(p, pos, gop).map_err(|e| ConfigError::field("traffic", e.to_string()))?;
                send = first + Micros(window * i / per_chunk as i64);
                frames.push(FrameMeta {
                    id: FrameId::new(c, m as u16, kf as u16),
                    size: draw(gop.is_intra(pos)),
                    importance: gamma,
                    deadline: frame_deadline(ddl, send, received),
                    send_time: send,
                    rtt_mark: None,
                });
                i += 1;
            }
        }
        server_free = send + Micros(1);
    }
    let trace = FlowTrace {
        flow,
        frames,
        chunk_duration: a,
        tile_probabilities: probs,
    };
    trace.validate().map_err(ConfigError::from)?;
    Ok(trace)
}

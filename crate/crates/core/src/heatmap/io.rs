use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::num::Real;

use super::{AttentionStack, Heatmap, HeatmapError, LayerAttention, DEFAULT_FRAMES_PER_TOKEN, GRID, HEATMAP_SIDE};

const MAGIC: &[u8; 4] = b"ATTN";
const VERSION: u32 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HeatmapError + '_ {
    move |e| HeatmapError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Parses an attention file: `ATTN`, version, layer count, then per layer
/// `layer_id, t_tok, 16, 16` and `t_tok*16*16` little-endian f32 values.
pub fn read_attention(mut r: impl Read) -> Result<AttentionStack<f32>, HeatmapError> {
    let bad = |m: String| HeatmapError::Invalid(m);
    let io = |e: std::io::Error| bad(format!("truncated attention file: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r).map_err(io)?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let id = read_u32(&mut r).map_err(io)?;
        let t_tok = read_u32(&mut r).map_err(io)? as usize;
        let (h, w) = (read_u32(&mut r).map_err(io)?, read_u32(&mut r).map_err(io)?);
        if (h as usize, w as usize) != (GRID, GRID) {
            return Err(bad(format!("layer {id}: spatial grid {h}x{w}, expected {GRID}x{GRID}")));
        }
        let mut bytes = vec![0u8; t_tok * GRID * GRID * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        layers.push(LayerAttention::new(id, t_tok, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(bad("trailing bytes after last layer".into()));
    }
    AttentionStack::new(layers, DEFAULT_FRAMES_PER_TOKEN)
}

pub fn write_attention(mut w: impl Write, stack: &AttentionStack<f32>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(stack.layers.len() as u32).to_le_bytes())?;
    for l in &stack.layers {
        for v in [l.layer_id, l.t_tok as u32, GRID as u32, GRID as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &l.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_attention_file(path: impl AsRef<Path>) -> Result<AttentionStack<f32>, HeatmapError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_attention(BufReader::new(file)).map_err(|e| match e {
        HeatmapError::Invalid(m) => HeatmapError::Invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_attention_file(path: impl AsRef<Path>, stack: &AttentionStack<f32>) -> Result<(), HeatmapError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_attention(BufWriter::new(file), stack).map_err(io_err(path))
}

/// Writes an 8-bit binary PGM with `round(v * 255)`.
pub fn write_pgm<T: Real>(path: impl AsRef<Path>, heatmap: &Heatmap<T>) -> Result<(), HeatmapError> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{HEATMAP_SIDE} {HEATMAP_SIDE}\n255\n").into_bytes();
    let scale = T::lit(255.0);
    bytes.extend(heatmap.values.iter().map(|&v| (v * scale).round().to_f64_lossy().clamp(0.0, 255.0) as u8));
    std::fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub clip_id: String,
    pub peak: (usize, usize),
    pub layers: Vec<u32>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<bool>,
}

/// Heatmap peak of one clip, as stored for PGA evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub clip_id: String,
    pub peak: (usize, usize),
}

pub fn read_peaks(path: impl AsRef<Path>) -> Result<Vec<PeakRecord>, HeatmapError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PeakRecord = serde_json::from_str(&line).map_err(|e| HeatmapError::Io {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?;
        if rec.peak.0 >= HEATMAP_SIDE || rec.peak.1 >= HEATMAP_SIDE {
            return Err(HeatmapError::Invalid(format!("{}: peak {:?} outside the frame", rec.clip_id, rec.peak)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_peaks(path: impl AsRef<Path>, peaks: &[PeakRecord]) -> Result<(), HeatmapError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for p in peaks {
        writeln!(w, "{}", serde_json::to_string(p).expect("peak serializes")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

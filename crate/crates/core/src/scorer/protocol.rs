//! Line-delimited JSON protocol spoken with subprocess scoring backends.
//!
//! Request (one line on the child's stdin):
//! `{"id": u64, "start_frame": u64, "shape": [16, 256, 256, 3], "data": "<base64>", "clip_id": "...", "fps": 8.0}`
//! where `data` is the window's frames as little-endian `f32`, frame-major.
//! `data` is omitted when the backend replays recorded scores; `clip_id` is
//! then required.
//!
//! Reply (one line on the child's stdout): `{"id": u64, "score": float}`.
//! Replies may arrive in any order. A reply may instead carry
//! `{"id": u64, "error": "..."}`, which aborts the stream.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Frame, Window, FRAME_LEN, FRAME_SIDE, WINDOW_FRAMES};

pub const WINDOW_SHAPE: [usize; 4] = [WINDOW_FRAMES, FRAME_SIDE, FRAME_SIDE, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub start_frame: u64,
    pub shape: [usize; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

impl Request {
    pub fn for_window(id: u64, window: &Window, with_data: bool) -> Self {
        Request {
            id,
            start_frame: window.start_frame_index,
            shape: WINDOW_SHAPE,
            data: with_data.then(|| encode_frames(&window.frames)),
            clip_id: Some(window.clip_id.to_string()),
            fps: Some(window.fps),
        }
    }

    /// Prediction time implied by `start_frame` and `fps`, if present.
    pub fn prediction_time_s(&self) -> Option<f64> {
        self.fps.map(|fps| super::prediction_time_s(self.start_frame, fps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn encode_frames(frames: &[Frame]) -> String {
    let mut bytes = Vec::with_capacity(frames.len() * FRAME_LEN * 4);
    for f in frames {
        for v in f.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    STANDARD.encode(bytes)
}

/// Decodes request data back into frames of `FRAME_LEN` values.
pub fn decode_frames(data: &str) -> Result<Vec<Vec<f32>>, String> {
    let bytes = STANDARD.decode(data).map_err(|e| e.to_string())?;
    if bytes.len() % (FRAME_LEN * 4) != 0 {
        return Err(format!("{} bytes is not a whole number of frames", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(FRAME_LEN * 4)
        .map(|frame| frame.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        .collect())
}

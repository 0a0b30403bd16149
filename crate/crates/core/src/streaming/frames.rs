use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StreamError;

/// A decoded 8-bit RGB frame, `height x width x 3` interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RawFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, StreamError> {
        if width == 0 || height == 0 {
            return Err(StreamError::Frame(format!("zero-sized frame {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(StreamError::Frame(format!("{width}x{height}x3 frame with {} bytes", data.len())));
        }
        Ok(RawFrame { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, StreamError> {
        RawFrame::new(width, height, vec![value; width * height * 3])
    }
}

pub type FrameIter = Box<dyn Iterator<Item = Result<RawFrame, StreamError>> + Send>;

/// Decoded frames of one clip, delivered in order.
pub struct FrameSource {
    pub clip_id: String,
    pub fps: f64,
    /// Annotated event time, passed on to synthetic scorers.
    pub event_time_s: Option<f64>,
    frames: FrameIter,
}

impl FrameSource {
    pub fn new(clip_id: impl Into<String>, fps: f64, frames: FrameIter) -> Result<Self, StreamError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(StreamError::Options(format!("fps must be > 0, got {fps}")));
        }
        Ok(FrameSource { clip_id: clip_id.into(), fps, event_time_s: None, frames })
    }

    pub fn from_frames(clip_id: impl Into<String>, fps: f64, frames: Vec<RawFrame>) -> Result<Self, StreamError> {
        FrameSource::new(clip_id, fps, Box::new(frames.into_iter().map(Ok)))
    }

    pub fn with_event_time(mut self, event_time_s: Option<f64>) -> Self {
        self.event_time_s = event_time_s;
        self
    }

    /// Frames stored as `000000.ppm`, `000001.ppm`, ... (or `.png`).
    pub fn from_dir(dir: impl AsRef<Path>, clip_id: impl Into<String>, fps: f64) -> Result<Self, StreamError> {
        let files = list_frame_files(dir.as_ref())?;
        FrameSource::new(clip_id, fps, Box::new(files.into_iter().map(|p| read_frame_file(&p))))
    }

    pub fn synthetic(clip_id: impl Into<String>, fps: f64, spec: SyntheticFrames) -> Result<Self, StreamError> {
        if spec.width == 0 || spec.height == 0 {
            return Err(StreamError::Frame(format!("zero-sized synthetic frame {}x{}", spec.width, spec.height)));
        }
        FrameSource::new(clip_id, fps, Box::new((0..spec.frames).map(move |k| Ok(spec.frame(k)))))
    }

    pub(crate) fn into_parts(self) -> (String, f64, Option<f64>, FrameIter) {
        (self.clip_id, self.fps, self.event_time_s, self.frames)
    }
}

/// Deterministic pseudo-random frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticFrames {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl SyntheticFrames {
    pub fn frame(&self, index: usize) -> RawFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64);
        let mut data = vec![0u8; self.width * self.height * 3];
        rng.fill_bytes(&mut data);
        RawFrame { width: self.width, height: self.height, data }
    }

    pub fn all(&self) -> Vec<RawFrame> {
        (0..self.frames).map(|k| self.frame(k)).collect()
    }
}

fn frame_index(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?;
    if ext != "ppm" && ext != "png" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    if stem.len() != 6 || !stem.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    stem.parse().ok()
}

fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>, StreamError> {
    let rd = std::fs::read_dir(dir).map_err(|e| StreamError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<(usize, PathBuf)> =
        rd.filter_map(|e| e.ok().map(|e| e.path())).filter_map(|p| frame_index(&p).map(|i| (i, p))).collect();
    files.sort();
    for (expected, (idx, path)) in files.iter().enumerate() {
        if *idx != expected {
            return Err(StreamError::Frame(format!("{}: expected frame {expected:06}", path.display())));
        }
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

pub fn read_frame_file(path: &Path) -> Result<RawFrame, StreamError> {
    let img = image::open(path).map_err(|e| StreamError::Io(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    RawFrame::new(rgb.width() as usize, rgb.height() as usize, rgb.into_raw())
}

/// Writes a binary PPM (P6).
pub fn write_ppm(path: &Path, frame: &RawFrame) -> Result<(), StreamError> {
    let mut bytes = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend_from_slice(&frame.data);
    std::fs::write(path, bytes).map_err(|e| StreamError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_source_reads_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticFrames { frames: 3, width: 5, height: 4, seed: 1 };
        for (k, f) in spec.all().iter().enumerate() {
            write_ppm(&dir.path().join(format!("{k:06}.ppm")), f).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let (_, _, _, frames) = FrameSource::from_dir(dir.path(), "c", 8.0).unwrap().into_parts();
        let got: Vec<RawFrame> = frames.map(Result::unwrap).collect();
        assert_eq!(got, spec.all());
    }

    #[test]
    fn gap_in_numbering_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = RawFrame::filled(2, 2, 9).unwrap();
        write_ppm(&dir.path().join("000000.ppm"), &f).unwrap();
        write_ppm(&dir.path().join("000002.ppm"), &f).unwrap();
        assert!(FrameSource::from_dir(dir.path(), "c", 8.0).is_err());
    }

    #[test]
    fn zero_sized_frames_rejected() {
        assert!(RawFrame::new(0, 3, vec![]).is_err());
        assert!(RawFrame::new(2, 2, vec![0; 5]).is_err());
        assert!(FrameSource::from_frames("c", 0.0, vec![]).is_err());
    }

    #[test]
    fn synthetic_frames_are_deterministic() {
        let spec = SyntheticFrames { frames: 2, width: 8, height: 8, seed: 42 };
        assert_eq!(spec.frame(1), spec.frame(1));
        assert_ne!(spec.frame(0), spec.frame(1));
    }
}

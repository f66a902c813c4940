use std::collections::HashMap;

/// Interleaved 8-bit RGB pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbFrame {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize * 3, "RGB buffer size");
        RgbFrame {
            width,
            height,
            data,
        }
    }

    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        RgbFrame {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RgbFrame {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }
}

/// Supplies decoded frames to the reference backend.
pub trait FrameSource: Send + Sync {
    fn frame(&self, source_video_id: &str, frame_index: u64) -> Option<RgbFrame>;
}

/// Frames held in memory, keyed by source video and index.
#[derive(Debug, Default, Clone)]
pub struct InMemoryFrames {
    frames: HashMap<(String, u64), RgbFrame>,
}

impl InMemoryFrames {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source_video_id: &str, frame_index: u64, frame: RgbFrame) {
        self.frames
            .insert((source_video_id.to_string(), frame_index), frame);
    }
}

impl FrameSource for InMemoryFrames {
    fn frame(&self, source_video_id: &str, frame_index: u64) -> Option<RgbFrame> {
        self.frames
            .get(&(source_video_id.to_string(), frame_index))
            .cloned()
    }
}

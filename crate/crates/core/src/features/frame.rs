use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_mismatch, Result};
use crate::numerics::Tensor;

pub const MIN_FRAME_SIDE: usize = 8;

/// An RGB frame with values in `[0, 1]`, stored pixel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Axis-aligned rectangle; `x`/`w` run along columns, `y`/`h` along rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }

    /// Grows the rectangle around its center so each side is at least
    /// `min_side` and a multiple of `multiple`, then shifts it inside a
    /// `height x width` frame.
    pub fn expanded(&self, min_side: usize, multiple: usize, height: usize, width: usize) -> Rect {
        let grow = |len: usize, limit: usize| -> usize {
            let mut l = len.max(min_side);
            if multiple > 1 {
                l = l.div_ceil(multiple) * multiple;
            }
            l.min(limit - limit % multiple.max(1)).max(1)
        };
        let w = grow(self.w, width);
        let h = grow(self.h, height);
        let cx = self.x as f64 + self.w as f64 / 2.0;
        let cy = self.y as f64 + self.h as f64 / 2.0;
        let place = |center: f64, len: usize, limit: usize| -> usize {
            let start = (center - len as f64 / 2.0).round().max(0.0) as usize;
            start.min(limit - len)
        };
        Rect {
            x: place(cx, w, width),
            y: place(cy, h, height),
            w,
            h,
        }
    }
}

impl Frame {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < MIN_FRAME_SIDE || width < MIN_FRAME_SIDE {
            return Err(invalid(format!(
                "frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(shape_mismatch(&[height, width, 3], &[data.len()]));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for i in 0..height {
            for j in 0..width {
                data.extend_from_slice(&f(i, j));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f64; 3] {
        let k = (i * self.width + j) * 3;
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    /// Grayscale as the unweighted channel mean.
    pub fn gray(&self) -> Vec<f64> {
        self.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
    }

    pub fn crop(&self, rect: Rect) -> Result<Frame> {
        if !rect.fits(self.height, self.width) {
            return Err(invalid(format!(
                "rectangle {rect:?} outside {}x{} frame",
                self.height, self.width
            )));
        }
        Frame::from_fn(rect.h, rect.w, |i, j| self.pixel(rect.y + i, rect.x + j))
    }

    /// Nearest-neighbour resize.
    pub fn resize(&self, height: usize, width: usize) -> Result<Frame> {
        Frame::from_fn(height, width, |i, j| {
            let si = ((i as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let sj = ((j as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            self.pixel(si.min(self.height - 1), sj.min(self.width - 1))
        })
    }

    /// `H x W x 3` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width, 3], self.data.clone()).expect("frame data is finite")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Frame> {
        match t.shape() {
            [h, w, 3] => Frame::new(*h, *w, t.data().to_vec()),
            other => Err(shape_mismatch(&[0, 0, 3], other)),
        }
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Frame> {
        super::read_ppm(path)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        super::write_ppm(path, self)
    }
}

/// A fixed rectangle followed through consecutive frames.
#[derive(Clone, Debug)]
pub struct VideoTube {
    frames: Vec<Frame>,
    rect: Rect,
}

impl VideoTube {
    pub fn new(frames: Vec<Frame>, rect: Rect) -> Result<Self> {
        if frames.len() < 2 {
            return Err(invalid("a video tube needs at least two frames"));
        }
        let (h, w) = (frames[0].height(), frames[0].width());
        if frames.iter().any(|f| f.height() != h || f.width() != w) {
            return Err(invalid("tube frames differ in size"));
        }
        if !rect.fits(h, w) {
            return Err(invalid(format!("tube rectangle {rect:?} outside {h}x{w} frames")));
        }
        Ok(Self { frames, rect })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn cropped(&self) -> Result<Vec<Frame>> {
        self.frames.iter().map(|f| f.crop(self.rect)).collect()
    }
}

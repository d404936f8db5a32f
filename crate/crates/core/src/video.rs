use crate::error::{Error, Result};
use crate::geom::{Point3, PointSet};

/// Ordered frames with a common point count.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudVideo {
    frames: Vec<PointSet>,
    /// Seconds between frames; carried along, never used in computation.
    pub frame_interval: f64,
    pub label: Option<usize>,
}

impl PointCloudVideo {
    pub fn new(frames: Vec<PointSet>, label: Option<usize>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Video("video has no frames".into()));
        };
        let n = first.len();
        if let Some(t) = frames.iter().position(|f| f.len() != n) {
            return Err(Error::Video(format!(
                "frame {t} has {} points, frame 0 has {n}",
                frames[t].len()
            )));
        }
        Ok(Self {
            frames,
            frame_interval: 1.0 / 30.0,
            label,
        })
    }

    pub fn from_points(frames: Vec<Vec<Point3>>, label: Option<usize>) -> Result<Self> {
        let frames = frames
            .into_iter()
            .map(PointSet::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames, label)
    }

    pub fn frames(&self) -> &[PointSet] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &PointSet {
        &self.frames[t]
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_points(&self) -> usize {
        self.frames[0].len()
    }

    pub fn into_frames(self) -> Vec<PointSet> {
        self.frames
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }
}

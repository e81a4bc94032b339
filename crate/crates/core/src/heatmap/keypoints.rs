use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame joint coordinates: `frames × joints × dims` values in pixel
/// (2D) or voxel (3D) units, plus a validity flag per joint per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSequence {
    frames: usize,
    joints: usize,
    dims: usize,
    coords: Vec<f64>,
    valid: Vec<bool>,
}

/// One line of a keypoint file.
#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    frame: usize,
    kp: Vec<Vec<f64>>,
    valid: Vec<bool>,
}

impl KeypointSequence {
    pub fn new(
        frames: usize,
        joints: usize,
        dims: usize,
        coords: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if frames == 0 || joints == 0 {
            return Err(Error::arg("a keypoint sequence needs at least one frame and joint"));
        }
        if dims != 2 && dims != 3 {
            return Err(Error::arg(format!("keypoints must be 2D or 3D, got {dims}D")));
        }
        if coords.len() != frames * joints * dims {
            return Err(Error::dim("coords", frames * joints * dims, coords.len()));
        }
        if valid.len() != frames * joints {
            return Err(Error::dim("valid", frames * joints, valid.len()));
        }
        for (i, &ok) in valid.iter().enumerate() {
            if ok && coords[i * dims..(i + 1) * dims].iter().any(|c| !c.is_finite()) {
                return Err(Error::Data(format!(
                    "frame {} joint {} is valid but has a non-finite coordinate",
                    i / joints,
                    i % joints
                )));
            }
        }
        Ok(Self {
            frames,
            joints,
            dims,
            coords,
            valid,
        })
    }

    /// Every joint valid.
    pub fn all_valid(frames: usize, joints: usize, dims: usize, coords: Vec<f64>) -> Result<Self> {
        Self::new(frames, joints, dims, coords, vec![true; frames * joints])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Coordinates of joint `joint` in frame `frame`.
    pub fn point(&self, frame: usize, joint: usize) -> &[f64] {
        let i = (frame * self.joints + joint) * self.dims;
        &self.coords[i..i + self.dims]
    }

    pub fn is_valid(&self, frame: usize, joint: usize) -> bool {
        self.valid[frame * self.joints + joint]
    }

    /// Frames `start .. start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::arg(format!(
                "frames {start}..{} outside a {}-frame sequence",
                start + len,
                self.frames
            )));
        }
        let per = self.joints * self.dims;
        Self::new(
            len,
            self.joints,
            self.dims,
            self.coords[start * per..(start + len) * per].to_vec(),
            self.valid[start * self.joints..(start + len) * self.joints].to_vec(),
        )
    }

    /// Writes one JSON object per frame:
    /// `{"frame": f, "kp": [[x, y], ...], "valid": [true, ...]}`.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for f in 0..self.frames {
            let record = FrameRecord {
                frame: f,
                kp: (0..self.joints).map(|k| self.point(f, k).to_vec()).collect(),
                valid: self.valid[f * self.joints..(f + 1) * self.joints].to_vec(),
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses the format written by [`Self::write_jsonl`]. Frames must appear
    /// in order starting at 0; blank lines are ignored.
    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut joints = None;
        let mut dims = None;
        let mut coords = Vec::new();
        let mut valid = Vec::new();
        let mut frames = 0;
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FrameRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Data(format!("line {}: {e}", line_no + 1)))?;
            if rec.frame != frames {
                return Err(Error::Data(format!(
                    "line {}: expected frame {frames}, found {}",
                    line_no + 1,
                    rec.frame
                )));
            }
            let k = *joints.get_or_insert(rec.kp.len());
            if rec.kp.len() != k || rec.valid.len() != k {
                return Err(Error::Data(format!(
                    "line {}: expected {k} joints and validity flags",
                    line_no + 1
                )));
            }
            for point in &rec.kp {
                let d = *dims.get_or_insert(point.len());
                if point.len() != d {
                    return Err(Error::Data(format!(
                        "line {}: mixed 2D and 3D keypoints",
                        line_no + 1
                    )));
                }
                coords.extend_from_slice(point);
            }
            valid.extend_from_slice(&rec.valid);
            frames += 1;
        }
        if frames == 0 {
            return Err(Error::Data("keypoint file holds no frames".into()));
        }
        Self::new(frames, joints.unwrap_or(0), dims.unwrap_or(0), coords, valid)
            .map_err(|e| match e {
                Error::Argument(msg) => Error::Data(msg),
                other => other,
            })
    }
}

/// Splits `kp` into windows of `length` frames starting every `stride`
/// frames; windows that would run past the last frame are dropped.
pub fn window(kp: &KeypointSequence, length: usize, stride: usize) -> Vec<KeypointSequence> {
    if length == 0 || stride == 0 || kp.frames() < length {
        return Vec::new();
    }
    (0..=kp.frames() - length)
        .step_by(stride)
        .map(|start| kp.slice_frames(start, length).expect("window within bounds"))
        .collect()
}

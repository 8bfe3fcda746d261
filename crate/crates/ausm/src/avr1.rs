//! AVR1 raw video container and the track interchange file.
//!
//! Both use the same framing as ATB1 (8-byte manifest length, JSON manifest,
//! 64-byte aligned blob). A video file stores `{T, height, width}` plus the
//! concatenated f32 frames; a track file pairs a JSON track list (ids,
//! classes, scores, present frames) with one full-resolution mask grid per
//! present frame.

use crate::atb1;
use crate::backbone::RawFrame;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn write_video(path: &Path, frames: &[RawFrame], video_id: &str) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("video has no frames".into()));
    }
    let (h, w) = (frames[0].height, frames[0].width);
    for f in frames {
        if f.height != h || f.width != w {
            return Err(Error::dimension(
                "write_video",
                &[f.height, f.width],
                &[h, w],
            ));
        }
    }
    let meta = serde_json::json!({
        "kind": "video",
        "t": frames.len(),
        "height": h,
        "width": w,
        "video_id": video_id,
    });
    let entries: Vec<(String, &Tensor)> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (format!("frame{i}"), &f.values))
        .collect();
    let refs: Vec<(&str, &Tensor)> = entries.iter().map(|(n, t)| (n.as_str(), *t)).collect();
    atb1::write(path, Some(meta), &refs)
}

pub fn read_video(path: &Path) -> Result<(Vec<RawFrame>, String)> {
    let (meta, tensors) = atb1::read(path)?;
    let meta = meta.ok_or_else(|| Error::Format {
        offset: 8,
        message: "video file lacks meta".into(),
    })?;
    let t = meta.get("t").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    let video_id = meta
        .get("video_id")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    if tensors.len() != t {
        return Err(Error::Format {
            offset: 8,
            message: format!("expected {t} frames, found {}", tensors.len()),
        });
    }
    let mut frames = Vec::with_capacity(t);
    for (_, tensor) in tensors {
        if tensor.shape().len() != 3 || tensor.shape()[2] != 3 {
            return Err(Error::Format {
                offset: 8,
                message: format!("frame shape {:?} is not [h, w, 3]", tensor.shape()),
            });
        }
        let (h, w) = (tensor.shape()[0], tensor.shape()[1]);
        frames.push(RawFrame::new(h, w, tensor)?);
    }
    Ok((frames, video_id))
}

/// One track in an interchange file: a stable id, a class label, a score
/// (1.0 for ground truth), and the 1-based frames where a mask is present.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrackRecord {
    pub id: usize,
    pub class: usize,
    pub score: f32,
    pub frames: Vec<usize>,
}

/// Ground-truth / prediction interchange: track metadata plus per-frame
/// full-resolution hard masks.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSet {
    pub video_id: String,
    pub t: usize,
    pub height: usize,
    pub width: usize,
    pub tracks: Vec<TrackRecord>,
    /// masks[track_index][k] pairs with tracks[track_index].frames[k].
    pub masks: Vec<Vec<Tensor>>,
    /// Per-frame wall time in seconds, when produced by inference.
    pub frame_times: Option<Vec<f64>>,
}

impl TrackSet {
    /// Mask of track `ti` at 1-based frame `t`, if present.
    pub fn mask_at(&self, ti: usize, t: usize) -> Option<&Tensor> {
        let pos = self.tracks[ti].frames.iter().position(|&f| f == t)?;
        Some(&self.masks[ti][pos])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "tracks",
            "video_id": self.video_id,
            "t": self.t,
            "height": self.height,
            "width": self.width,
            "tracks": self.tracks,
            "frame_times": self.frame_times,
        });
        let mut named = Vec::new();
        for (ti, track) in self.tracks.iter().enumerate() {
            for (k, frame) in track.frames.iter().enumerate() {
                named.push((format!("track{}.frame{}", track.id, frame), &self.masks[ti][k]));
            }
        }
        let refs: Vec<(&str, &Tensor)> = named.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        atb1::write(path, Some(meta), &refs)
    }

    pub fn load(path: &Path) -> Result<TrackSet> {
        let (meta, tensors) = atb1::read(path)?;
        let meta = meta.ok_or_else(|| Error::Format {
            offset: 8,
            message: "track file lacks meta".into(),
        })?;
        let tracks: Vec<TrackRecord> = serde_json::from_value(
            meta.get("tracks").cloned().ok_or_else(|| Error::Format {
                offset: 8,
                message: "track meta lacks tracks".into(),
            })?,
        )?;
        let frame_times: Option<Vec<f64>> = meta
            .get("frame_times")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .flatten();
        let get = |k: &str| meta.get(k).and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let mut by_name: std::collections::HashMap<String, Tensor> = tensors.into_iter().collect();
        let mut masks = Vec::with_capacity(tracks.len());
        for track in &tracks {
            let mut per_frame = Vec::with_capacity(track.frames.len());
            for frame in &track.frames {
                let name = format!("track{}.frame{}", track.id, frame);
                let m = by_name.remove(&name).ok_or_else(|| Error::Format {
                    offset: 8,
                    message: format!("missing mask entry {name}"),
                })?;
                per_frame.push(m);
            }
            masks.push(per_frame);
        }
        Ok(TrackSet {
            video_id: meta
                .get("video_id")
                .and_then(|v| v.as_str())
                .unwrap_or("")
                .to_string(),
            t: get("t"),
            height: get("height"),
            width: get("width"),
            tracks,
            masks,
            frame_times,
        })
    }
}

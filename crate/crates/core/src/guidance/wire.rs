//! JSON wire format of the `/v1/score` endpoint. Tensors travel as base64 of
//! little-endian `f32`, row-major `F × H × W × C`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{FrameMeta, ModelKind, ScoreRequest};
use crate::distill::{ScoreBatch, Tensor4};
use crate::error::{Error, Result};

pub const PROTOCOL: &str = "ayg-score/1";

fn protocol_err(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

pub fn encode_tensor(t: &Tensor4) -> String {
    let bytes: Vec<u8> = t.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_tensor(payload: &str, shape: [usize; 4]) -> Result<Tensor4> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| protocol_err(format!("bad base64 payload: {e}")))?;
    let n: usize = shape.iter().product();
    if bytes.len() != 4 * n {
        return Err(protocol_err(format!(
            "payload has {} bytes, shape {shape:?} needs {}",
            bytes.len(),
            4 * n
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(protocol_err("non-finite value in tensor payload"));
    }
    Ok(Tensor4 { shape, data })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub version: String,
    pub model_kind: ModelKind,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmented_prompt: Option<String>,
    pub t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<u32>,
    pub shape: [usize; 4],
    pub frames: String,
    pub seed: u64,
    /// Extension used by scene-backed oracles; teachers ignore it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_meta: Vec<FrameMeta>,
}

impl WireRequest {
    pub fn from_request(req: &ScoreRequest) -> Self {
        Self {
            version: PROTOCOL.to_string(),
            model_kind: req.model_kind,
            prompt: req.prompt.clone(),
            negative_prompt: req.negative_prompt.clone(),
            augmented_prompt: req.augmented_prompt.clone(),
            t: req.t as u64,
            fps: req.fps,
            shape: req.frames.shape,
            frames: encode_tensor(&req.frames),
            seed: req.seed,
            frame_meta: req.meta.clone(),
        }
    }

    pub fn into_request(self) -> Result<ScoreRequest> {
        if self.version != PROTOCOL {
            return Err(Error::UnsupportedVersion {
                found: protocol_number(&self.version),
                expected: 1,
            });
        }
        let frames = decode_tensor(&self.frames, self.shape)?;
        let req = ScoreRequest {
            model_kind: self.model_kind,
            prompt: self.prompt,
            negative_prompt: self.negative_prompt,
            augmented_prompt: self.augmented_prompt,
            t: self.t as usize,
            fps: self.fps,
            frames,
            seed: self.seed,
            meta: self.frame_meta,
        };
        req.validate().map_err(|e| protocol_err(e.to_string()))?;
        Ok(req)
    }
}

fn protocol_number(v: &str) -> u32 {
    v.rsplit('/').next().and_then(|n| n.parse().ok()).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub version: String,
    pub shape: [usize; 4],
    pub eps_cond: String,
    pub eps_uncond: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_neg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_aug: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_used: Option<String>,
}

impl WireResponse {
    pub fn from_batch(batch: &ScoreBatch) -> Self {
        Self {
            version: PROTOCOL.to_string(),
            shape: batch.shape(),
            eps_cond: encode_tensor(&batch.eps_cond),
            eps_uncond: encode_tensor(&batch.eps_uncond),
            eps_neg: batch.eps_neg.as_ref().map(encode_tensor),
            eps_aug: batch.eps_aug.as_ref().map(encode_tensor),
            eps_used: batch.eps_used.as_ref().map(encode_tensor),
        }
    }

    /// Decodes every tensor, checking the shape against the request.
    pub fn into_batch(self, expected: [usize; 4]) -> Result<ScoreBatch> {
        if self.version != PROTOCOL {
            return Err(protocol_err(format!("response protocol {:?}", self.version)));
        }
        if self.shape != expected {
            return Err(protocol_err(format!(
                "response shape {:?} does not match request {expected:?}",
                self.shape
            )));
        }
        let dec = |p: &Option<String>| p.as_deref().map(|s| decode_tensor(s, expected)).transpose();
        Ok(ScoreBatch {
            eps_cond: decode_tensor(&self.eps_cond, expected)?,
            eps_uncond: decode_tensor(&self.eps_uncond, expected)?,
            eps_neg: dec(&self.eps_neg)?,
            eps_aug: dec(&self.eps_aug)?,
            eps_used: dec(&self.eps_used)?,
        })
    }
}

/// Error body returned with 4xx statuses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_on_f32_grid() {
        let t = Tensor4::from_vec([1, 1, 2, 3], vec![0.5, -1.25, 3.0e-8, 7.0, -0.0, 1.0 / 3.0])
            .unwrap()
            .quantized();
        assert_eq!(decode_tensor(&encode_tensor(&t), t.shape).unwrap(), t);
    }

    #[test]
    fn little_endian_layout() {
        let t = Tensor4::from_vec([1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(STANDARD.decode(encode_tensor(&t)).unwrap(), vec![0x00, 0x00, 0x80, 0x3f]);
    }

    #[test]
    fn length_mismatch_is_protocol_error() {
        let t = Tensor4::zeros([1, 1, 2, 3]);
        assert!(matches!(decode_tensor(&encode_tensor(&t), [1, 1, 3, 3]), Err(Error::Protocol(_))));
        assert!(matches!(decode_tensor("not base64!", [1, 1, 1, 1]), Err(Error::Protocol(_))));
    }

    #[test]
    fn version_checked() {
        let req = ScoreRequest::new(ModelKind::Image, "p", 3, Tensor4::zeros([1, 2, 2, 3]), 1);
        let mut w = WireRequest::from_request(&req);
        assert_eq!(w.clone().into_request().unwrap(), req);
        w.version = "ayg-score/2".into();
        assert!(matches!(w.into_request(), Err(Error::UnsupportedVersion { found: 2, .. })));
    }
}

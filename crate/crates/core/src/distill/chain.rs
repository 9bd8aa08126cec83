use crate::deform::DeformationField;
use crate::error::{contract, Result};
use crate::render::{render_backward, CloudGrads, Image, RenderOutput};
use crate::scene::Vec3;

/// Sums the parameter gradients of several static renders.
pub fn chain_static(renders: &[RenderOutput], pixel_grads: &[Image]) -> Result<CloudGrads> {
    if renders.len() != pixel_grads.len() || renders.is_empty() {
        return Err(contract(format!(
            "{} renders vs {} pixel gradients",
            renders.len(),
            pixel_grads.len()
        )));
    }
    let n = renders[0]
        .cloud_len()
        .ok_or_else(|| contract("render has no saved forward state"))?;
    let mut total = CloudGrads::zeros(n);
    for (r, g) in renders.iter().zip(pixel_grads) {
        total.accumulate(&render_backward(r, g)?);
    }
    Ok(total)
}

/// One frame of a deformed render.
///
/// The rendered positions depend on the field through `weight · Δ(rest, tau)`;
/// everything else in them is constant in the field parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformedFrame {
    pub tau: f64,
    pub weight: f64,
    /// Positions the field was evaluated at.
    pub rest: Vec<Vec3>,
    /// Positions that were rendered.
    pub positions: Vec<Vec3>,
}

/// Gradient of the field parameters from per-frame pixel gradients.
///
/// `extra` optionally holds per-frame gradients with respect to the rendered
/// positions (regularizers); pass an empty slice when there are none. Every
/// render must come from exactly the frame's `positions`.
pub fn chain_deformed(
    field: &DeformationField,
    frames: &[DeformedFrame],
    renders: &[RenderOutput],
    pixel_grads: &[Image],
    extra: &[Vec<Vec3>],
) -> Result<Vec<f64>> {
    if renders.len() != frames.len() || pixel_grads.len() != frames.len() {
        return Err(contract("frames, renders and pixel gradients differ in count"));
    }
    if !extra.is_empty() && extra.len() != frames.len() {
        return Err(contract("position gradients must be given for every frame"));
    }
    let mut total = vec![0.0; field.params().len()];
    for (k, frame) in frames.iter().enumerate() {
        if !renders[k].rendered_from(&frame.positions) {
            return Err(contract(format!("render {k} is stale for its frame positions")));
        }
        if frame.rest.len() != frame.positions.len() {
            return Err(contract("rest and rendered positions differ in length"));
        }
        let mut d_pos = render_backward(&renders[k], &pixel_grads[k])?.d_positions;
        if let Some(e) = extra.get(k) {
            if e.len() != d_pos.len() {
                return Err(contract("position gradient length mismatch"));
            }
            d_pos.iter_mut().zip(e).for_each(|(a, b)| *a += b);
        }
        if frame.weight == 0.0 {
            continue;
        }
        d_pos.iter_mut().for_each(|d| *d *= frame.weight);
        let (dp, _) = field.backward(&frame.rest, frame.tau, &d_pos)?;
        total.iter_mut().zip(&dp).for_each(|(a, b)| *a += b);
    }
    Ok(total)
}

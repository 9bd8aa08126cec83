use super::{DeformationField, Gate};
use crate::error::{invalid, Result};
use crate::scene::Vec3;

/// Which side of a boundary an evaluation at exactly that time belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Chain of deformation fields on a shared timeline.
///
/// Segment `k` runs on local time `τ ∈ [0, 1]` and starts at global time
/// `k·(1 - overlap)`. Its rest positions are segment `k - 1` at local time
/// `1 - overlap`. Inside an overlap the positions are blended,
/// `(1 - χ)·P_{k-1} + χ·P_k`, with `χ` rising linearly from 0 to 1.
/// With `looping`, the last segment is gated at both ends and its rest positions
/// are ramped linearly back to the first frame, so its final frame equals frame 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub fields: Vec<DeformationField>,
    pub overlap: f64,
    pub looping: bool,
}

impl Default for Sequence {
    fn default() -> Self {
        Self::still()
    }
}

/// Positions of one training frame of segment `k`, with what is needed to route gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePlan {
    pub positions: Vec<Vec3>,
    /// `∂positions / ∂Δ_k`, i.e. `χ` inside the overlap and 1 elsewhere.
    pub weight: f64,
    /// Rest positions of segment `k`.
    pub rest: Vec<Vec3>,
    /// Inside the overlap: rest positions and positions of segment `k - 1` at the matching time.
    pub previous: Option<(Vec<Vec3>, Vec<Vec3>)>,
}

impl Sequence {
    pub fn still() -> Self {
        Self {
            fields: Vec::new(),
            overlap: 0.5,
            looping: false,
        }
    }

    pub fn single(field: DeformationField) -> Self {
        Self {
            fields: vec![field],
            ..Self::still()
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return Err(invalid(format!("overlap must lie in (0, 1), got {}", self.overlap)));
        }
        if self.looping && self.fields.last().is_some_and(|f| f.gate() != Gate::BothEnds) {
            return Err(invalid("the closing segment of a loop must be gated at both ends"));
        }
        Ok(())
    }

    /// Global start time of segment `k`.
    pub fn start(&self, k: usize) -> f64 {
        k as f64 * (1.0 - self.overlap)
    }

    /// Length of the timeline; zero for a still asset.
    pub fn duration(&self) -> f64 {
        if self.fields.is_empty() {
            0.0
        } else {
            self.start(self.fields.len() - 1) + 1.0
        }
    }

    /// `χ` at local time `tau` of segment `k > 0` (zero at its start, one at the end of the overlap).
    pub fn chi(&self, tau: f64) -> f64 {
        (tau / self.overlap).clamp(0.0, 1.0)
    }

    /// Rest positions of segment `k`.
    pub fn rest(&self, base: &[Vec3], k: usize) -> Result<Vec<Vec3>> {
        self.check_segment(k)?;
        let mut rest = base.to_vec();
        for j in 0..k {
            rest = self.own_positions(base, &rest, j, 1.0 - self.overlap)?;
        }
        Ok(rest)
    }

    fn check_segment(&self, k: usize) -> Result<()> {
        if k < self.fields.len() {
            Ok(())
        } else {
            Err(invalid(format!("segment {k} of {}", self.fields.len())))
        }
    }

    fn ramps_home(&self, k: usize) -> bool {
        self.looping && k + 1 == self.fields.len()
    }

    // Segment `k` alone at local `tau`, given its rest positions.
    fn own_positions(&self, base: &[Vec3], rest: &[Vec3], k: usize, tau: f64) -> Result<Vec<Vec3>> {
        let disp = self.fields[k].forward(rest, tau)?;
        let home = self.ramps_home(k);
        Ok(rest
            .iter()
            .zip(&disp)
            .zip(base)
            .map(|((r, d), b)| if home { b * tau + r * (1.0 - tau) + d } else { r + d })
            .collect())
    }

    /// Positions of segment `k` evaluated on its own at local time `tau`.
    pub fn segment_positions(&self, base: &[Vec3], k: usize, tau: f64) -> Result<Vec<Vec3>> {
        let rest = self.rest(base, k)?;
        self.own_positions(base, &rest, k, tau)
    }

    /// Positions used when rendering segment `k` at local time `tau` during its optimization.
    pub fn plan(&self, base: &[Vec3], k: usize, tau: f64) -> Result<FramePlan> {
        let rest = self.rest(base, k)?;
        let own = self.own_positions(base, &rest, k, tau)?;
        if k == 0 || tau >= self.overlap {
            return Ok(FramePlan {
                positions: own,
                weight: 1.0,
                rest,
                previous: None,
            });
        }
        let prev_rest = self.rest(base, k - 1)?;
        let prev = self.own_positions(base, &prev_rest, k - 1, tau + 1.0 - self.overlap)?;
        let chi = self.chi(tau);
        Ok(FramePlan {
            positions: blend(&prev, &own, chi),
            weight: chi,
            rest,
            previous: Some((prev_rest, prev)),
        })
    }

    /// Positions at global time `u`; at a boundary the later region wins.
    pub fn positions_at(&self, base: &[Vec3], u: f64) -> Result<Vec<Vec3>> {
        self.positions_at_from(base, u, Side::Right)
    }

    /// Positions at global time `u`, resolving boundary times to the given side.
    pub fn positions_at_from(&self, base: &[Vec3], u: f64, side: Side) -> Result<Vec<Vec3>> {
        let dur = self.duration();
        if !(0.0..=dur.max(0.0)).contains(&u) {
            return Err(invalid(format!("time {u} outside [0, {dur}]")));
        }
        if self.fields.is_empty() {
            return Ok(base.to_vec());
        }
        let step = 1.0 - self.overlap;
        let last = self.fields.len() - 1;
        // Owning segment: the latest one started at or before `u` (strictly before on the left side).
        let mut k = ((u / step).floor() as usize).min(last);
        if side == Side::Left && k > 0 && u == self.start(k) {
            k -= 1;
        }
        let tau = (u - self.start(k)).clamp(0.0, 1.0);
        if k == 0 || tau >= self.overlap {
            return self.segment_positions(base, k, tau);
        }
        Ok(self.plan(base, k, tau)?.positions)
    }
}

fn blend(a: &[Vec3], b: &[Vec3], chi: f64) -> Vec<Vec3> {
    if chi == 0.0 {
        return a.to_vec();
    }
    if chi == 1.0 {
        return b.to_vec();
    }
    a.iter().zip(b).map(|(x, y)| x * (1.0 - chi) + y * chi).collect()
}

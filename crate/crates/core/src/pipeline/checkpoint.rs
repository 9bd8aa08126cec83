use std::path::Path;

use crate::deform::{DeformationField, Gate, Sequence, Side};
use crate::error::{Error, Result};
use crate::render::{render_with, RenderOptions, RenderOutput};
use crate::scene::{Camera, GaussianCloud, Vec3, SH_COEFFS};

const MAGIC: &[u8; 4] = b"AYG4";
const FIELD_TAG: &[u8; 4] = b"DEFM";
const SEQ_TAG: &[u8; 4] = b"SEQS";
pub const CHECKPOINT_VERSION: u32 = 1;
const FIELD_VERSION: u32 = 1;
const SEQ_VERSION: u32 = 1;

/// A 4D asset: a cloud and the deformation sequence that animates it.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSpec {
    pub cloud: GaussianCloud,
    pub sequence: Sequence,
}

impl SequenceSpec {
    pub fn still(cloud: GaussianCloud) -> Self {
        Self {
            cloud,
            sequence: Sequence::still(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.sequence.duration()
    }

    pub fn positions_at(&self, u: f64) -> Result<Vec<Vec3>> {
        self.sequence.positions_at(&self.cloud.positions, u)
    }

    pub fn cloud_at(&self, u: f64, side: Side) -> Result<GaussianCloud> {
        let p = self.sequence.positions_at_from(&self.cloud.positions, u, side)?;
        Ok(self.cloud.with_positions(p))
    }

    pub fn render_at(&self, u: f64, camera: &Camera, opts: &RenderOptions) -> Result<RenderOutput> {
        Ok(render_with(&self.cloud_at(u, Side::Right)?, camera, opts))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.cloud;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, c.len() as u32);
        for p in &c.positions {
            p.iter().for_each(|v| put_f32(&mut out, *v));
        }
        c.log_scales.iter().for_each(|v| put_f32(&mut out, *v));
        c.opacities_raw.iter().for_each(|v| put_f32(&mut out, *v));
        for s in &c.sh {
            s.iter().flatten().for_each(|v| put_f32(&mut out, *v));
        }
        let seq = &self.sequence;
        out.extend_from_slice(SEQ_TAG);
        put_u32(&mut out, SEQ_VERSION);
        out.extend_from_slice(&seq.overlap.to_le_bytes());
        put_u32(&mut out, seq.looping as u32);
        put_u32(&mut out, seq.fields.len() as u32);
        for f in &seq.fields {
            out.extend_from_slice(FIELD_TAG);
            put_u32(&mut out, FIELD_VERSION);
            put_u32(&mut out, f.width() as u32);
            put_u32(&mut out, f.depth() as u32);
            out.extend_from_slice(&f.gate_exponent().to_le_bytes());
            put_u32(&mut out, matches!(f.gate(), Gate::BothEnds) as u32);
            put_u32(&mut out, f.params().len() as u32);
            f.params().iter().for_each(|v| put_f32(&mut out, *v));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        r.version(CHECKPOINT_VERSION)?;
        let n = r.u32()? as usize;
        r.need(n.checked_mul(4 * (3 + 1 + 1 + 3 * SH_COEFFS)))?;
        let positions = (0..n).map(|_| Ok(Vec3::new(r.f32()?, r.f32()?, r.f32()?))).collect::<Result<_>>()?;
        let log_scales = (0..n).map(|_| r.f32()).collect::<Result<_>>()?;
        let opacities = (0..n).map(|_| r.f32()).collect::<Result<_>>()?;
        let mut sh = vec![[[0.0; SH_COEFFS]; 3]; n];
        for s in &mut sh {
            for c in s.iter_mut() {
                for v in c.iter_mut() {
                    *v = r.f32()?;
                }
            }
        }
        let cloud = GaussianCloud::new(positions, log_scales, opacities, sh).map_err(|e| Error::Format(e.to_string()))?;

        if r.take(4)? != SEQ_TAG {
            return Err(Error::Format("missing sequence section".into()));
        }
        r.version(SEQ_VERSION)?;
        let overlap = r.f64()?;
        let looping = r.u32()? != 0;
        let k = r.u32()? as usize;
        let mut fields = Vec::with_capacity(k.min(1024));
        for _ in 0..k {
            if r.take(4)? != FIELD_TAG {
                return Err(Error::Format("missing field section".into()));
            }
            r.version(FIELD_VERSION)?;
            let width = r.u32()? as usize;
            let depth = r.u32()? as usize;
            let gate_exponent = r.f64()?;
            let gate = if r.u32()? != 0 { Gate::BothEnds } else { Gate::Forward };
            let len = r.u32()? as usize;
            r.need(len.checked_mul(4))?;
            let params = (0..len).map(|_| r.f32()).collect::<Result<_>>()?;
            fields.push(
                DeformationField::from_parts(width, depth, params, gate_exponent, gate)
                    .map_err(|e| Error::Format(e.to_string()))?,
            );
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        let sequence = Sequence {
            fields,
            overlap,
            looping,
        };
        sequence.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { cloud, sequence })
    }

    /// Writes atomically: a sibling temporary file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn need(&self, n: Option<usize>) -> Result<()> {
        match n {
            Some(n) if self.bytes.len() - self.pos >= n => Ok(()),
            _ => Err(Error::Format("truncated checkpoint".into())),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.need(Some(n))?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        let v = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if v.is_finite() {
            Ok(v as f64)
        } else {
            Err(Error::Format("non-finite value in checkpoint".into()))
        }
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn version(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found == expected {
            Ok(())
        } else {
            Err(Error::UnsupportedVersion { found, expected })
        }
    }
}

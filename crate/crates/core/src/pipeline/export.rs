use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExportConfig, SequenceSpec};
use crate::deform::Side;
use crate::error::{invalid, Error, Result};
use crate::render::{render_with, Image, RenderOptions};
use crate::scene::{compose_scene, Camera, GaussianCloud, SceneAsset};

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.to_rgb8())?;
    f.flush()?;
    Ok(())
}

/// Reads a binary 8-bit PPM.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("only binary 8-bit PPM is supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
    if data.len() != w * h * 3 {
        return Err(bad("pixel data does not match the header"));
    }
    Ok(Image::from_rgb8(w, h, data))
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
        .ok_or_else(|| invalid("image buffer size mismatch"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Centers `img` on a square canvas of the given colour.
pub fn pad_to_square(img: &Image, fill: [f64; 3]) -> Image {
    let side = img.width.max(img.height);
    let mut out = Image::filled(side, side, fill);
    let (ox, oy) = ((side - img.width) / 2, (side - img.height) / 2);
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(x + ox, y + oy, img.get(x, y));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportedFrame {
    pub index: usize,
    pub tau: f64,
    pub camera: Camera,
    pub ppm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub png: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub frames: Vec<ExportedFrame>,
}

/// Cameras orbiting the origin at the export elevation, one per frame.
pub fn export_cameras(cfg: &ExportConfig, count: usize, azimuth_sweep: f64) -> Result<Vec<Camera>> {
    (0..count)
        .map(|i| {
            let a = if count > 1 { azimuth_sweep * i as f64 / (count - 1) as f64 } else { 0.0 };
            Camera::orbit(cfg.elevation, a, cfg.distance, cfg.fov, cfg.width, cfg.height)
        })
        .collect()
}

/// Renders one frame per time into `dir` and writes `manifest.json`.
///
/// A single camera is reused for every time; otherwise cameras pair with times.
/// Times exactly at a segment boundary are rendered from the later segment.
pub fn export_frames(
    spec: &SequenceSpec,
    cameras: &[Camera],
    times: &[f64],
    dir: &Path,
    cfg: &ExportConfig,
) -> Result<ExportManifest> {
    export_with(|tau| spec.cloud_at(tau, Side::Right), cameras, times, dir, cfg)
}

/// Like [`export_frames`] for a composition of posed assets on a shared clock.
pub fn export_composed(
    assets: &[SceneAsset],
    cameras: &[Camera],
    times: &[f64],
    dir: &Path,
    cfg: &ExportConfig,
) -> Result<ExportManifest> {
    export_with(|tau| Ok(compose_scene(assets, tau)?.cloud), cameras, times, dir, cfg)
}

fn export_with(
    cloud_at: impl Fn(f64) -> Result<GaussianCloud>,
    cameras: &[Camera],
    times: &[f64],
    dir: &Path,
    cfg: &ExportConfig,
) -> Result<ExportManifest> {
    if cameras.is_empty() || (cameras.len() != 1 && cameras.len() != times.len()) {
        return Err(invalid("export needs one camera or one camera per time"));
    }
    std::fs::create_dir_all(dir)?;
    let opts = RenderOptions::default();
    let mut frames = Vec::with_capacity(times.len());
    for (i, &tau) in times.iter().enumerate() {
        let cam = if cameras.len() == 1 { &cameras[0] } else { &cameras[i] };
        let cloud = cloud_at(tau)?;
        let mut img = render_with(&cloud, cam, &opts).image;
        if cfg.pad_square {
            img = pad_to_square(&img, cam.background);
        }
        let ppm = format!("frame_{i:04}.ppm");
        write_ppm(&dir.join(&ppm), &img)?;
        let png = if cfg.png {
            let name = format!("frame_{i:04}.png");
            write_png(&dir.join(&name), &img)?;
            Some(name)
        } else {
            None
        };
        frames.push(ExportedFrame {
            index: i,
            tau,
            camera: cam.clone(),
            ppm,
            png,
        });
    }
    let manifest = ExportManifest { frames };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use splat4d::gradcheck;
use splat4d::guidance::ScoreProvider;
use splat4d::pipeline::{
    export_cameras, export_composed, export_frames, extend_sequence, run_stage1, run_stage2, Config, Profile,
    ProviderArg, RunRecorder, SequenceSpec,
};
use splat4d::scene::{RigidPose, SceneAsset, Vec3};
use splat4d::Result;

#[derive(Parser, Debug)]
#[command(name = "splat4d", version, about = "Text-to-4D optimization of dynamic 3D Gaussians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "default")]
    profile: Profile,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides a single config key, e.g. `--set stage2.iterations=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p, self.profile)?,
            None => Config::for_profile(self.profile),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| splat4d::Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
            c.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct Providers {
    /// `analytic:<target-manifest>` or `remote:<url>`.
    #[arg(long)]
    provider: ProviderArg,
    /// Separate provider for the image model; defaults to `--provider`.
    #[arg(long)]
    image_provider: Option<ProviderArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a static cloud.
    Stage1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        providers: Providers,
        /// Continue from this checkpoint instead of a random cloud.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Optimize motion for a static cloud.
    Stage2 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        providers: Providers,
        /// Checkpoint holding the cloud.
        #[arg(long)]
        input: PathBuf,
    },
    /// Append a segment to an animated sequence.
    Extend {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        providers: Providers,
        #[arg(long)]
        input: PathBuf,
        /// Close the sequence into a loop.
        #[arg(long = "loop")]
        looping: bool,
    },
    /// Export frames of a checkpoint over its whole duration.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        /// Total azimuth swept by the camera over the export, in degrees.
        #[arg(long, default_value_t = 0.0)]
        sweep: f64,
    },
    /// Place several assets in one scene and export it.
    Compose {
        #[command(flatten)]
        common: Common,
        /// `path[@tx,ty,tz[,scale[,time_offset]]]`. Repeatable.
        #[arg(long = "asset", required = true)]
        assets: Vec<String>,
        #[arg(long, default_value_t = 16)]
        frames: usize,
        #[arg(long, default_value_t = 0.0)]
        sweep: f64,
    },
    /// Finite-difference check of every reverse pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeds to run starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
}

type Shared = Arc<dyn ScoreProvider>;

fn providers(p: &Providers, config: &Config) -> Result<(Shared, Shared)> {
    let schedule = config.noise_schedule()?;
    let main = p.provider.build(schedule.clone())?;
    let image = match &p.image_provider {
        Some(i) => i.build(schedule)?,
        None => main.clone(),
    };
    Ok((main, image))
}

fn parse_asset(arg: &str) -> Result<SceneAsset> {
    let bad = || splat4d::Error::Config(format!("asset {arg:?}: expected path[@tx,ty,tz[,scale[,offset]]]"));
    let (path, pose) = match arg.rsplit_once('@') {
        Some((p, pose)) => (p, Some(pose)),
        None => (arg, None),
    };
    let spec = SequenceSpec::load(Path::new(path))?;
    let mut asset = SceneAsset::still(spec.cloud);
    asset.motion = spec.sequence;
    if let Some(pose) = pose {
        let v: Vec<f64> = pose
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if !(3..=5).contains(&v.len()) {
            return Err(bad());
        }
        asset.pose = RigidPose::new(
            nalgebra::Rotation3::identity(),
            Vec3::new(v[0], v[1], v[2]),
            v.get(3).copied().unwrap_or(1.0),
        )?;
        asset.time_offset = v.get(4).copied().unwrap_or(0.0);
    }
    Ok(asset)
}

fn times(duration: f64, frames: usize) -> Vec<f64> {
    match frames {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| duration * i as f64 / (n - 1) as f64).collect(),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Stage1 { common, providers: p, init } => {
            let config = common.config()?;
            let (mv, im) = providers(&p, &config)?;
            let init = init.map(|i| SequenceSpec::load(&i).map(|s| s.cloud)).transpose()?;
            let mut rec = RunRecorder::new(&common.out, "stage1")?;
            let cloud = run_stage1(&config, &*mv, &*im, init, &mut rec)?;
            let path = common.out.join("stage1.ckpt");
            SequenceSpec::still(cloud).save(&path)?;
            println!("{}", path.display());
        }
        Command::Stage2 { common, providers: p, input } => {
            let config = common.config()?;
            let (vid, im) = providers(&p, &config)?;
            let spec = SequenceSpec::load(&input)?;
            let mut rec = RunRecorder::new(&common.out, "stage2")?;
            let out = run_stage2(&spec.cloud, &config, &*vid, &*im, &mut rec)?;
            let path = common.out.join("stage2.ckpt");
            out.save(&path)?;
            println!("{}", path.display());
        }
        Command::Extend {
            common,
            providers: p,
            input,
            looping,
        } => {
            let config = common.config()?;
            let (vid, im) = providers(&p, &config)?;
            let spec = SequenceSpec::load(&input)?;
            let mut rec = RunRecorder::new(&common.out, "extend")?;
            let out = extend_sequence(&spec, &config, &*vid, &*im, looping, &mut rec)?;
            let path = common.out.join("extended.ckpt");
            out.save(&path)?;
            println!("{} ({} segments, loop: {})", path.display(), out.sequence.len(), out.sequence.looping);
        }
        Command::Render {
            common,
            input,
            frames,
            sweep,
        } => {
            let config = common.config()?;
            let spec = SequenceSpec::load(&input)?;
            let cams = export_cameras(&config.export, frames.max(1), sweep)?;
            let m = export_frames(&spec, &cams, &times(spec.duration(), frames), &common.out, &config.export)?;
            println!("{} frames in {}", m.frames.len(), common.out.display());
        }
        Command::Compose {
            common,
            assets,
            frames,
            sweep,
        } => {
            let config = common.config()?;
            let assets = assets.iter().map(|a| parse_asset(a)).collect::<Result<Vec<_>>>()?;
            let duration = assets
                .iter()
                .map(|a| a.time_offset + a.motion.duration())
                .fold(0.0, f64::max);
            let cams = export_cameras(&config.export, frames.max(1), sweep)?;
            let m = export_composed(&assets, &cams, &times(duration, frames), &common.out, &config.export)?;
            println!("{} frames in {}", m.frames.len(), common.out.display());
        }
        Command::Gradcheck { seed, repeats } => {
            let mut ok = true;
            for s in seed..seed + repeats.max(1) {
                for r in gradcheck::run_all(s)? {
                    let verdict = if r.passed() { "ok" } else { "FAIL" };
                    println!(
                        "seed {s:<4} {:<9} entries {:>5}  max rel err {:.3e}  (tol {:.0e})  {verdict}",
                        r.name, r.checked, r.max_rel_err, r.tolerance
                    );
                    ok &= r.passed();
                }
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

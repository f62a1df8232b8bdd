//! Command-line front end. `main` only maps the result to an exit status.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::align::{bisection_search, verify_alignment, NvsOracle, ReplayDirOracle, SyntheticOracle};
use crate::error::{Error, Result};
use crate::fusion::{depth_alignment_report, fuse_frames, read_ply, write_ply, Frame, ReconDepth};
use crate::geometry::{crop_overlap, cubemap_to_equirect, xyz_positional_encoding, CameraPose, CubemapRig, Face, Intrinsics};
use crate::image::{read_pfm, read_pfm3, read_semantic_png, write_pfm, write_pfm3, write_rgb_png, write_semantic_png};
use crate::losses::{self, loss_3dgs, mask_from_semantics, masked_depth_loss, nn_loss, LossParts, MaskedDepthLoss, NnCache};
use crate::pipeline::{run_pipeline, with_threads, PipelineConfig};
use crate::plan::{load_trajectory, plan_room, room_viewpoint, save_trajectory};
use crate::render::{Channel, Scene};
use crate::scene::{expand_layout, generate_layout, remove_labeled_points, load_layout, save_layout, to_json, validate, GenSpec};

#[derive(Debug, Parser)]
#[command(name = "proxykit", version, about = "Metric indoor-scene proxy toolkit")]
pub struct Cli {
    /// Pipeline config JSON; subcommands read their section from it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Procedurally generate a single-room layout.
    Generate {
        /// Generator parameters JSON (defaults otherwise).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Check layout files against every layout invariant.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Render a depth/semantic/instance guidance cubemap.
    Render(RenderArgs),
    /// Plan the four quadrant trajectories of a room.
    Plan {
        layout: PathBuf,
        #[arg(long, default_value_t = 0)]
        room: usize,
    },
    /// Search the camera scale of a trajectory.
    Align(AlignArgs),
    /// Fuse posed depth frames into a PLY point cloud.
    Fuse {
        /// JSON list of frames.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        voxel: f64,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Evaluate reconstruction losses on files.
    Losses(LossArgs),
    /// Pose and depth alignment metrics.
    Metrics(MetricArgs),
    /// Run every stage for one room.
    Pipeline,
    /// Attach a layout to a dangling connector of another.
    Expand {
        base: PathBuf,
        addition: PathBuf,
        #[arg(long)]
        connector: u32,
        /// Point cloud whose connector points are removed.
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long, requires = "cloud")]
        cloud_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub layout: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub room: usize,
    /// Rig center; defaults to the room viewpoint.
    #[arg(long, num_args = 3, allow_negative_numbers = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long, default_value_t = 512)]
    pub face_size: u32,
    #[arg(long, default_value_t = 95.0)]
    pub fov: f64,
    /// Also crop to a 90° cubemap of this size.
    #[arg(long)]
    pub crop: Option<u32>,
    /// Also write an equirectangular depth/semantic pair of this height.
    #[arg(long)]
    pub equirect: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    pub layout: PathBuf,
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long, conflicts_with = "replay")]
    pub theta_true: Option<f64>,
    /// Directory of replayed depth maps.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Rendered depth PFM.
    #[arg(long, requires_all = ["proxy", "semantic"])]
    pub rendered: Option<PathBuf>,
    /// Proxy depth PFM.
    #[arg(long)]
    pub proxy: Option<PathBuf>,
    /// Proxy semantic PNG the supervision mask is derived from.
    #[arg(long)]
    pub semantic: Option<PathBuf>,
    /// Image PFM (gray or color).
    #[arg(long, requires = "target")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, default_value_t = losses::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Gaussian means as PLY.
    #[arg(long, requires = "reference")]
    pub means: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Externally computed geometric term.
    #[arg(long)]
    pub geom: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Target trajectory JSON.
    #[arg(long, requires = "estimated")]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub estimated: Option<PathBuf>,
    #[arg(long, requires_all = ["cloud", "trajectory"])]
    pub layout: Option<PathBuf>,
    /// Reconstruction point cloud PLY.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Evaluation poses.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Evaluation image width.
    #[arg(long, default_value_t = 128)]
    pub size: u32,
}

/// Parse `args` (including the program name) and run.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let threads = cli.threads;
    with_threads(threads, move || dispatch(cli, cfg))?
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            create_parent(p)?;
            fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d).map_err(|e| Error::io(d, e)),
        _ => Ok(()),
    }
}

fn out_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.ok_or_else(|| Error::Config("--out <dir> is required".into()))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli, cfg: PipelineConfig) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Generate { spec } => {
            let spec: GenSpec = match spec {
                Some(p) => read_json(&p)?,
                None => cfg.generator.clone(),
            };
            let layout = generate_layout(cfg.seed, &spec)?;
            emit(out, &to_json(&layout))
        }
        Command::Validate { paths } => {
            for p in &paths {
                let layout = load_layout(p)?;
                validate(&layout).map_err(|e| match e {
                    Error::Validation { message, entity } => {
                        Error::Validation { message: format!("{}: {message}", p.display()), entity }
                    }
                    e => e,
                })?;
                println!("ok: {}", p.display());
            }
            Ok(())
        }
        Command::Render(a) => cmd_render(&a, &cfg, out),
        Command::Plan { layout, room } => {
            let l = load_layout(&layout)?;
            validate(&l)?;
            let dir = out_dir(out)?;
            for t in plan_room(&l, room, &cfg.planner)? {
                save_trajectory(dir.join(format!("quadrant_{}.json", t.quadrant_id)), &t)?;
            }
            Ok(())
        }
        Command::Align(a) => {
            let l = load_layout(&a.layout)?;
            validate(&l)?;
            let scene = Scene::new(&l);
            let traj = load_trajectory(&a.trajectory)?;
            let oracle: Box<dyn NvsOracle> = match (&a.replay, a.theta_true) {
                (Some(dir), _) => Box::new(ReplayDirOracle::new(dir)),
                (None, Some(t)) => Box::new(SyntheticOracle::new(scene.clone(), t)?),
                (None, None) => {
                    return Err(Error::Config("align needs --theta-true or --replay".into()));
                }
            };
            let (_, trace) = bisection_search(oracle.as_ref(), &traj, &scene, &cfg.schedule)?;
            emit(out, &trace.to_json())
        }
        Command::Fuse { frames, voxel, stride } => {
            let list = load_frames(&frames)?;
            let cloud = fuse_frames(&list, stride, voxel)?;
            let p = out.ok_or_else(|| Error::Config("--out <file.ply> is required".into()))?;
            create_parent(p)?;
            write_ply(p, &cloud)?;
            eprintln!("{} points", cloud.len());
            Ok(())
        }
        Command::Losses(a) => cmd_losses(&a, out),
        Command::Metrics(a) => cmd_metrics(&a, out),
        Command::Pipeline => {
            let dir = out
                .map(Path::to_path_buf)
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("pipeline needs --out or output_dir in the config".into()))?;
            let m = run_pipeline(&cfg, &dir)?;
            println!("{}: {} frames, {} artifacts", dir.display(), m.frame_count, m.artifacts.len());
            Ok(())
        }
        Command::Expand { base, addition, connector, cloud, cloud_out } => {
            let b = load_layout(&base)?;
            let a = load_layout(&addition)?;
            let merged = expand_layout(&b, &a, connector)?;
            if let Some(c) = cloud {
                let pc = read_ply(&c)?;
                let kept = remove_labeled_points(&pc, &b, connector)?;
                let dst = cloud_out.unwrap_or(c);
                create_parent(&dst)?;
                write_ply(&dst, &kept)?;
            }
            match out {
                Some(p) => {
                    create_parent(p)?;
                    save_layout(&merged, p)
                }
                None => emit(None, &to_json(&merged)),
            }
        }
    }
}

fn cmd_render(a: &RenderArgs, cfg: &PipelineConfig, out: Option<&Path>) -> Result<()> {
    let l = load_layout(&a.layout)?;
    validate(&l)?;
    let center = match &a.center {
        Some(c) => Vector3::new(c[0], c[1], c[2]),
        None => room_viewpoint(&l, a.room, &cfg.planner)?,
    };
    let dir = out_dir(out)?;
    let scene = Scene::new(&l);
    let rig = CubemapRig::new(center, a.fov);
    let cube = scene.render_cubemap(&rig, a.face_size, &[Channel::Depth, Channel::Semantic, Channel::Instance])?;
    let depth = cube.depth.expect("depth requested");
    let sem = cube.semantic.expect("semantic requested");
    let inst = cube.instance.expect("instance requested");
    let xyz = xyz_positional_encoding(&rig, a.face_size);
    for face in Face::ALL {
        let s = face.suffix();
        write_pfm(dir.join(format!("depth_{s}.pfm")), depth.face(face))?;
        write_semantic_png(dir.join(format!("semantic_{s}.png")), sem.face(face))?;
        crate::image::write_instance_png(dir.join(format!("instance_{s}.png")), inst.face(face))?;
        write_pfm3(dir.join(format!("xyz_{s}.pfm")), xyz.face(face))?;
    }
    if let Some(size) = a.crop {
        let d = crop_overlap(&depth, size)?;
        let s = crop_overlap(&sem, size)?;
        for face in Face::ALL {
            write_pfm(dir.join(format!("depth90_{}.pfm", face.suffix())), d.face(face))?;
            write_semantic_png(dir.join(format!("semantic90_{}.png", face.suffix())), s.face(face))?;
        }
    }
    if let Some(h) = a.equirect {
        write_pfm(dir.join("depth_equirect.pfm"), &cubemap_to_equirect(&depth, h))?;
        write_semantic_png(dir.join("semantic_equirect.png"), &cubemap_to_equirect(&sem, h))?;
        let colors = cubemap_to_equirect(&sem, h).map(|s| s.color().map(|c| c as f64 / 255.0));
        write_rgb_png(dir.join("semantic_equirect_rgb.png"), &colors)?;
    }
    Ok(())
}

/// One entry of a `fuse --frames` list. Paths are relative to the list file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub depth: PathBuf,
    #[serde(default)]
    pub semantic: Option<PathBuf>,
    pub position: [f64; 3],
    /// `[w, x, y, z]`
    pub quaternion: [f64; 4],
    pub fov_deg: f64,
}

pub fn load_frames(path: &Path) -> Result<Vec<Frame>> {
    let specs: Vec<FrameSpec> = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let depth = read_pfm(base.join(&s.depth))?;
            let intr = Intrinsics::new(depth.width() as u32, depth.height() as u32, s.fov_deg)?;
            let [w, x, y, z] = s.quaternion;
            let q = Quaternion::new(w, x, y, z);
            if !((q.norm() - 1.0).abs() <= 1e-6) {
                return Err(Error::Parse(format!("frame {i}: quaternion is not unit length")));
            }
            let pose = CameraPose::new(UnitQuaternion::from_quaternion(q), Vector3::from(s.position));
            let mut f = Frame::new(depth, intr, pose);
            if let Some(sp) = &s.semantic {
                f.semantic = Some(read_semantic_png(base.join(sp))?);
            }
            Ok(f)
        })
        .collect()
}

/// PFM with three channels (`PF`) or one (`Pf`).
fn pfm_channels(path: &Path) -> Result<usize> {
    let mut magic = [0u8; 2];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(|e| Error::io(path, e))?;
    match &magic {
        b"PF" => Ok(3),
        b"Pf" => Ok(1),
        _ => Err(Error::Parse(format!("{}: not a PFM file", path.display()))),
    }
}

#[derive(Debug, Serialize)]
struct LossOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    l_3dgs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<MaskedDepthLoss>,
    #[serde(skip_serializing_if = "Option::is_none")]
    l_nn: Option<f64>,
    total: losses::TotalLoss,
}

fn cmd_losses(a: &LossArgs, out: Option<&Path>) -> Result<()> {
    let l_3dgs = match (&a.image, &a.target) {
        (Some(i), Some(t)) => Some(match (pfm_channels(i)?, pfm_channels(t)?) {
            (3, 3) => loss_3dgs(&read_pfm3(i)?, &read_pfm3(t)?, a.lambda)?,
            (1, 1) => loss_3dgs(&read_pfm(i)?, &read_pfm(t)?, a.lambda)?,
            _ => return Err(Error::ShapeMismatch("image and target channel counts differ".into())),
        }),
        _ => None,
    };
    let depth = match (&a.rendered, &a.proxy, &a.semantic) {
        (Some(r), Some(p), Some(s)) => {
            Some(masked_depth_loss(&read_pfm(r)?, &read_pfm(p)?, &mask_from_semantics(&read_semantic_png(s)?))?)
        }
        _ => None,
    };
    let l_nn = match (&a.means, &a.reference) {
        (Some(m), Some(r)) => {
            let mut cache = NnCache::new(a.k)?;
            Some(nn_loss(&read_ply(m)?.positions, &read_ply(r)?.positions, &mut cache, 0)?)
        }
        _ => None,
    };
    if l_3dgs.is_none() && depth.is_none() && l_nn.is_none() {
        return Err(Error::Config("no loss inputs given".into()));
    }
    let parts = LossParts {
        l_3dgs: l_3dgs.unwrap_or(0.0),
        l_geom: a.geom,
        l_nn: l_nn.unwrap_or(0.0),
        l_depth: depth.map_or(0.0, |d| d.value),
    };
    emit(out, &json(&LossOutput { l_3dgs, depth, l_nn, total: losses::total_loss(&parts) }))
}

#[derive(Debug, Serialize)]
struct MetricOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    poses: Option<crate::align::AlignmentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<crate::fusion::DepthReport>,
}

fn cmd_metrics(a: &MetricArgs, out: Option<&Path>) -> Result<()> {
    let poses = match (&a.target, &a.estimated) {
        (Some(t), Some(e)) => Some(verify_alignment(&load_trajectory(t)?.poses, &load_trajectory(e)?.poses)?),
        _ => None,
    };
    let depth = match (&a.layout, &a.cloud, &a.trajectory) {
        (Some(l), Some(c), Some(t)) => {
            let layout = load_layout(l)?;
            validate(&layout)?;
            let traj = load_trajectory(t)?;
            let h = ((a.size as f64) * traj.intrinsics.height as f64 / traj.intrinsics.width as f64).round().max(1.0);
            let intr = traj.intrinsics.with_size(a.size, h as u32);
            let cloud = read_ply(c)?;
            Some(depth_alignment_report(&Scene::new(&layout), ReconDepth::Cloud(&cloud), &traj.poses, &intr)?)
        }
        _ => None,
    };
    if poses.is_none() && depth.is_none() {
        return Err(Error::Config("no metric inputs given".into()));
    }
    emit(out, &json(&MetricOutput { poses, depth }))
}

//! End-to-end run over one room: guidance cubemaps, view targets,
//! trajectories, scale alignment, fusion and metrics, with a hashed manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{bisection_search, valid_depth, verify_alignment, AlignmentReport, NvsOracle, ReplayDirOracle, ScheduleConfig, SyntheticOracle};
use crate::error::{Error, Result};
use crate::fusion::{depth_alignment_report, fuse_frames, point_depth_along_rays, write_ply, DepthReport, Frame, PointCloud, ReconDepth};
use crate::geometry::{crop_overlap, xyz_positional_encoding, CameraPose, CubemapRig, Face, Intrinsics};
use crate::image::{write_pfm, write_pfm3, write_rgb_png, write_semantic_png, DepthMap, Image};
use crate::losses::{self, mask_from_semantics, masked_depth_loss, nn_loss, LossParts, NnCache, TotalLoss};
use crate::plan::{initial_panorama_views, plan_room, room_viewpoint, sample_panorama_training_views, save_trajectory, PlannerConfig, Trajectory};
use crate::render::{Channel, RenderTarget, Scene};
use crate::scene::{generate_layout, load_layout, save_layout, validate, GenSpec, SceneLayout};

/// Panorama training views per room, completing the 338-frame budget with
/// four 42-frame trajectories.
pub const DEFAULT_PANORAMA_VIEWS: usize = 170;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    Synthetic { theta_true: f64 },
    /// Depth maps under `dir` laid out as `theta_{:.3}/frame_{:04}.pfm`.
    Replay { dir: PathBuf },
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig::Synthetic { theta_true: 1.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    /// Rendered face size; faces are then cropped to 90° at `out_size`.
    pub face_size: u32,
    pub face_fov_deg: f64,
    pub out_size: u32,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig { face_size: 512, face_fov_deg: 95.0, out_size: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub voxel_size: f64,
    pub stride: usize,
    /// Width of the depth frames fused and used for metrics.
    pub render_size: u32,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { voxel_size: 0.02, stride: 1, render_size: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Layout file; when absent a layout is generated from `seed` and `generator`.
    pub layout: Option<PathBuf>,
    pub generator: GenSpec,
    pub room: usize,
    pub planner: PlannerConfig,
    pub schedule: ScheduleConfig,
    pub oracle: OracleConfig,
    pub guidance: GuidanceConfig,
    pub panorama_views: usize,
    pub fusion: FusionConfig,
    pub loss_lambda: f64,
    pub nn_k: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            layout: None,
            generator: GenSpec::default(),
            room: 0,
            planner: PlannerConfig::default(),
            schedule: ScheduleConfig::default(),
            oracle: OracleConfig::default(),
            guidance: GuidanceConfig::default(),
            panorama_views: DEFAULT_PANORAMA_VIEWS,
            fusion: FusionConfig::default(),
            loss_lambda: losses::DEFAULT_LAMBDA,
            nn_k: 1,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Parse a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.layout.as_mut().map(rebase);
        cfg.output_dir.as_mut().map(rebase);
        if let OracleConfig::Replay { dir } = &mut cfg.oracle {
            rebase(dir);
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        self.planner.check()?;
        self.schedule.check()?;
        let g = &self.guidance;
        if g.face_size == 0 || g.out_size == 0 || !(90.0..180.0).contains(&g.face_fov_deg) {
            return Err(Error::Config("guidance: sizes must be positive and face fov in [90, 180)".into()));
        }
        if self.fusion.render_size == 0 || !self.fusion.voxel_size.is_finite() || self.fusion.voxel_size < 0.0 {
            return Err(Error::Config("fusion: render_size must be positive and voxel_size non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_lambda) {
            return Err(Error::Config(format!("loss_lambda {} outside [0, 1]", self.loss_lambda)));
        }
        NnCache::new(self.nn_k)?;
        if let Some(p) = &self.layout {
            if !p.is_file() {
                return Err(Error::Config(format!("layout {} does not exist", p.display())));
            }
        }
        match &self.oracle {
            OracleConfig::Synthetic { theta_true } if !(theta_true.is_finite() && *theta_true > 0.0) => {
                Err(Error::Config(format!("oracle theta_true {theta_true} must be positive")))
            }
            OracleConfig::Replay { dir } if !dir.is_dir() => {
                Err(Error::Config(format!("replay directory {} does not exist", dir.display())))
            }
            _ => Ok(()),
        }
    }

    pub fn load_layout(&self) -> Result<SceneLayout> {
        let layout = match &self.layout {
            Some(p) => load_layout(p)?,
            None => generate_layout(self.seed, &self.generator)?,
        };
        validate(&layout)?;
        Ok(layout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Nvs,
    Panorama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub kind: FrameKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrant: Option<usize>,
    pub index: usize,
    pub position: [f64; 3],
    /// `[w, x, y, z]`
    pub quaternion: [f64; 4],
}

impl FrameEntry {
    fn new(kind: FrameKind, quadrant: Option<usize>, index: usize, pose: &CameraPose) -> Self {
        let q = pose.rotation.quaternion();
        FrameEntry { kind, quadrant, index, position: pose.position.into(), quaternion: [q.w, q.i, q.j, q.k] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a run wrote, with content hashes. Paths are relative to the
/// output directory and sorted, so identical runs give identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scene: String,
    pub complete: bool,
    pub stages: Vec<StageEntry>,
    pub frame_count: usize,
    pub frames: Vec<FrameEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_3dgs: f64,
    pub l_depth: f64,
    pub depth_mask_pixels: usize,
    pub l_nn: f64,
    pub total: TotalLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Per quadrant.
    pub theta_star: Vec<f64>,
    pub search_loss: Vec<f64>,
    pub oracle_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<f64>,
    /// Poses the generated content actually corresponds to versus the plan;
    /// only known for the synthetic oracle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_errors: Option<AlignmentReport>,
    pub depth: DepthReport,
    pub losses: LossReport,
    pub fused_points: usize,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.out.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn text(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Run) -> Result<T>) -> Result<T> {
        let r = f(self);
        let (status, error) = match &r {
            Ok(_) => ("done", None),
            Err(e) => ("failed", Some(e.to_string())),
        };
        self.manifest.stages.push(StageEntry { name: name.into(), status: status.into(), error });
        if r.is_err() {
            self.finish(false)?;
        }
        r
    }

    /// Hash every file under the output directory except the manifest.
    fn finish(&mut self, complete: bool) -> Result<()> {
        let mut files = Vec::new();
        collect_files(&self.out, &self.out, &mut files)?;
        files.sort();
        self.manifest.artifacts = files
            .into_iter()
            .filter(|rel| rel != MANIFEST_FILE)
            .map(|rel| {
                let p = self.out.join(&rel);
                let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                Ok(ArtifactEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, path: rel })
            })
            .collect::<Result<_>>()?;
        self.manifest.complete = complete;
        self.manifest.frame_count = self.manifest.frames.len();
        let text = self.manifest.to_json();
        self.text(MANIFEST_FILE, &text)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("under root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}

fn render_views(scene: &Scene, targets: &[RenderTarget]) -> Result<Vec<(DepthMap, Image<crate::scene::SemanticId>)>> {
    targets
        .par_iter()
        .map(|t| {
            let out = scene.render(t)?;
            Ok((out.depth.expect("depth requested"), out.semantic.expect("semantic requested")))
        })
        .collect()
}

/// Depth scaled into [0, 1] by `range`, misses mapped to 0.
fn depth_intensity(d: &DepthMap, range: f64) -> DepthMap {
    d.map(|v| if valid_depth(v) { (v / range).min(1.0) } else { 0.0 })
}

fn build_oracle(cfg: &PipelineConfig, scene: &Scene) -> Result<Box<dyn NvsOracle>> {
    Ok(match &cfg.oracle {
        OracleConfig::Synthetic { theta_true } => Box::new(SyntheticOracle::new(scene.clone(), *theta_true)?),
        OracleConfig::Replay { dir } => Box::new(ReplayDirOracle::new(dir)),
    })
}

/// Run every stage into `out`. On failure the manifest is still written,
/// marked incomplete, with the failing stage recorded.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    cfg.check()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut run = Run {
        out: out.to_path_buf(),
        manifest: Manifest {
            scene: String::new(),
            complete: false,
            stages: Vec::new(),
            frame_count: 0,
            frames: Vec::new(),
            artifacts: Vec::new(),
        },
    };

    let layout = run.stage("layout", |run| {
        let layout = cfg.load_layout()?;
        if cfg.room >= layout.rooms.len() {
            return Err(Error::Config(format!("room {} not in a {}-room layout", cfg.room, layout.rooms.len())));
        }
        save_layout(&layout, run.path("layout.json")?)?;
        Ok(layout)
    })?;
    run.manifest.scene = layout.id.clone();
    let scene = Scene::new(&layout);
    let center = room_viewpoint(&layout, cfg.room, &cfg.planner)?;

    run.stage("guidance", |run| {
        let g = &cfg.guidance;
        let rig = CubemapRig::new(center, g.face_fov_deg);
        let cube = scene.render_cubemap(&rig, g.face_size, &[Channel::Depth, Channel::Semantic])?;
        let depth = crop_overlap(&cube.depth.expect("depth requested"), g.out_size)?;
        let semantic = crop_overlap(&cube.semantic.expect("semantic requested"), g.out_size)?;
        let xyz = xyz_positional_encoding(&CubemapRig::new(center, 90.0), g.out_size);
        for face in Face::ALL {
            let s = face.suffix();
            write_pfm(run.path(&format!("guidance/depth_{s}.pfm"))?, depth.face(face))?;
            write_semantic_png(run.path(&format!("guidance/semantic_{s}.png"))?, semantic.face(face))?;
            write_pfm3(run.path(&format!("guidance/xyz_{s}.pfm"))?, xyz.face(face))?;
            let rgb = xyz.face(face).map(|d| d.map(|v| 0.5 * (v + 1.0)));
            write_rgb_png(run.path(&format!("guidance/xyz_{s}.png"))?, &rgb)?;
        }
        Ok(())
    })?;

    let initial = initial_panorama_views(center, &cfg.planner);
    run.stage("initial_views", |run| {
        for (k, (d, s)) in render_views(&scene, &initial)?.iter().enumerate() {
            write_pfm(run.path(&format!("views/initial_{k}_depth.pfm"))?, d)?;
            write_semantic_png(run.path(&format!("views/initial_{k}_semantic.png"))?, s)?;
        }
        Ok(())
    })?;

    let trajectories: Vec<Trajectory> = run.stage("plan", |run| {
        let ts = plan_room(&layout, cfg.room, &cfg.planner)?;
        for t in &ts {
            save_trajectory(run.path(&format!("trajectories/quadrant_{}.json", t.quadrant_id))?, t)?;
            for (i, p) in t.poses.iter().enumerate() {
                run.manifest.frames.push(FrameEntry::new(FrameKind::Nvs, Some(t.quadrant_id), i, p));
            }
        }
        Ok(ts)
    })?;

    let panorama = sample_panorama_training_views(center, cfg.panorama_views, &cfg.planner);
    run.stage("panorama_views", |run| {
        let entries: Vec<FrameEntry> = panorama
            .iter()
            .enumerate()
            .map(|(i, t)| FrameEntry::new(FrameKind::Panorama, None, i, &t.pose))
            .collect();
        let text = serde_json::to_string_pretty(&entries).expect("entries serialize") + "\n";
        run.text("panorama_views.json", &text)?;
        run.manifest.frames.extend(entries);
        Ok(())
    })?;

    let oracle = build_oracle(cfg, &scene)?;
    let searches: Vec<(f64, crate::align::SearchTrace)> = run.stage("align", |run| {
        let mut out = Vec::new();
        for t in &trajectories {
            let (theta, trace) = bisection_search(oracle.as_ref(), t, &scene, &cfg.schedule)?;
            run.text(&format!("alignment/search_trace_quadrant_{}.json", t.quadrant_id), &trace.to_json())?;
            out.push((theta, trace));
        }
        Ok(out)
    })?;

    let fusion_intr = cfg.planner.intrinsics().with_size(cfg.fusion.render_size, cfg.fusion.render_size);
    let fused: PointCloud = run.stage("fuse", |run| {
        let mut frames = Vec::new();
        for (t, (theta, _)) in trajectories.iter().zip(&searches) {
            // Replay directories only hold the schedule's frames.
            let (idx, intr) = match cfg.oracle {
                OracleConfig::Synthetic { .. } => ((0..t.poses.len()).collect(), fusion_intr),
                OracleConfig::Replay { .. } => {
                    (cfg.schedule.frame_indices(t.poses.len()), cfg.schedule.eval_intrinsics(&t.intrinsics))
                }
            };
            let depths = oracle.generate(*theta, t, &idx, &intr)?;
            let targets: Vec<RenderTarget> =
                idx.iter().map(|&i| RenderTarget::new(intr, t.poses[i], &[Channel::Semantic])).collect();
            let sems: Vec<_> = targets
                .par_iter()
                .map(|tg| scene.render(tg).map(|o| o.semantic.expect("semantic requested")))
                .collect::<Result<_>>()?;
            for ((d, s), tg) in depths.into_iter().zip(sems).zip(&targets) {
                let mut f = Frame::new(d, intr, tg.pose);
                f.semantic = Some(s);
                frames.push(f);
            }
        }
        let pano: Vec<RenderTarget> = panorama
            .iter()
            .map(|t| RenderTarget::new(fusion_intr, t.pose, &[Channel::Depth, Channel::Semantic]))
            .collect();
        for ((d, s), t) in render_views(&scene, &pano)?.into_iter().zip(&pano) {
            let mut f = Frame::new(d, fusion_intr, t.pose);
            f.semantic = Some(s);
            frames.push(f);
        }
        let cloud = fuse_frames(&frames, cfg.fusion.stride, cfg.fusion.voxel_size)?;
        write_ply(run.path("fused.ply")?, &cloud)?;
        Ok(cloud)
    })?;

    run.stage("metrics", |run| {
        let nvs_poses: Vec<CameraPose> = trajectories.iter().flat_map(|t| t.poses.iter().copied()).collect();
        let depth = depth_alignment_report(&scene, ReconDepth::Cloud(&fused), &nvs_poses, &fusion_intr)?;
        let theta_true = match cfg.oracle {
            OracleConfig::Synthetic { theta_true } => Some(theta_true),
            OracleConfig::Replay { .. } => None,
        };
        let pose_errors = match theta_true {
            Some(tt) => {
                let mut est = Vec::new();
                for (t, (theta, _)) in trajectories.iter().zip(&searches) {
                    let c = t.centroid();
                    let s = theta / tt;
                    est.extend(t.poses.iter().map(|p| CameraPose::new(p.rotation, c + (p.position - c) * s)));
                }
                Some(verify_alignment(&nvs_poses, &est)?)
            }
            None => None,
        };
        let losses = view_losses(cfg, &scene, &layout, &initial, &fused, fusion_intr)?;
        let report = MetricsReport {
            theta_star: searches.iter().map(|(t, _)| *t).collect(),
            search_loss: searches.iter().map(|(_, t)| t.loss_star).collect(),
            oracle_calls: searches.iter().map(|(_, t)| t.oracle_calls).sum(),
            theta_true,
            pose_errors,
            depth,
            losses,
            fused_points: fused.len(),
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        run.text("metrics.json", &text)
    })?;

    run.finish(true)?;
    Ok(run.manifest)
}

/// Audit values of the reconstruction losses on the eight initial views,
/// treating the fused cloud as the reconstruction and the proxy as target.
/// The photometric term compares depth images scaled to [0, 1].
fn view_losses(
    cfg: &PipelineConfig,
    scene: &Scene,
    layout: &SceneLayout,
    views: &[RenderTarget],
    fused: &PointCloud,
    intr: Intrinsics,
) -> Result<LossReport> {
    let targets: Vec<RenderTarget> = views
        .iter()
        .map(|t| RenderTarget::new(intr, t.pose, &[Channel::Depth, Channel::Semantic]))
        .collect();
    let proxy = render_views(scene, &targets)?;
    let (lo, hi) = layout.bounds();
    let range = (hi - lo).norm();
    let (mut l3, mut ld_sum, mut ld_n) = (0.0, 0.0, 0usize);
    let mut reference = Vec::new();
    for ((gt, sem), t) in proxy.iter().zip(&targets) {
        let rd = point_depth_along_rays(fused, &intr, &t.pose);
        l3 += losses::loss_3dgs(&depth_intensity(gt, range), &depth_intensity(&rd, range), cfg.loss_lambda)?;
        let mut mask = mask_from_semantics(sem);
        for (m, (a, b)) in mask.pixels_mut().iter_mut().zip(rd.pixels().iter().zip(gt.pixels())) {
            *m = *m && valid_depth(*a) && valid_depth(*b);
        }
        let l = masked_depth_loss(&rd, gt, &mask)?;
        ld_sum += l.value * l.masked_pixels as f64;
        ld_n += l.masked_pixels;
        let f = Frame::new(gt.clone(), intr, t.pose);
        reference.extend(crate::fusion::backproject(&f, 1)?.positions);
    }
    let l_3dgs = l3 / targets.len() as f64;
    let l_depth = if ld_n == 0 { 0.0 } else { ld_sum / ld_n as f64 };
    let mut cache = NnCache::new(cfg.nn_k)?;
    let l_nn = nn_loss(&fused.positions, &reference, &mut cache, 0)?;
    let parts = LossParts { l_3dgs, l_geom: None, l_nn, l_depth };
    Ok(LossReport { l_3dgs, l_depth, depth_mask_pixels: ld_n, l_nn, total: losses::total_loss(&parts) })
}

/// Run inside a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

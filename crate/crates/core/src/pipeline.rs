//! Job configuration and end-to-end orchestration: everything the CLI does
//! lives here so runs are scriptable and testable in-process.

use crate::analysis::{
    classical_mds, export_trace_plot_data, mds_csv, mds_sidecar, mds_svg, trace_plot_csv,
    FieldSnapshotSet,
};
use crate::error::{Error, Result};
use crate::io;
use crate::math::Vec3;
use crate::optimizer::{Optimizer, OptimizerConfig};
use crate::radiometry::{AbsorptionModel, SpectralBins, DEFAULT_SIGMA_A};
use crate::render::{
    apply_exposure_and_encode, render_image, render_scene_demo, tonemap_reinhard, CameraView,
    EmitterKind, EncodedImage, FireVolume, Interpolation, Pose, Quad, RenderSettings, SceneDemo,
    SphereLight, DEFAULT_REINHARD_KEY,
};
use crate::synth::{generate_synthetic, rgb_from_emission, SyntheticRecipe};
use crate::voxelgrid::RgbVolume;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where the input volume comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeSource {
    /// An FVOL file: 3 channels (RGB) for optimization, 2 channels
    /// (temperature, density) for rendering.
    Path(PathBuf),
    /// Generate a synthetic flame; goal images missing from the views are
    /// rendered from it at its ground-truth exposure.
    Synthetic(SyntheticRecipe),
}

/// Camera intrinsics, pose and optional goal image path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewConfig {
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point; defaults to the image center.
    #[serde(default)]
    pub cx: Option<f64>,
    #[serde(default)]
    pub cy: Option<f64>,
    /// Camera-to-world pose as a 3x4 row-major matrix.
    pub pose: [[f64; 4]; 3],
    /// Goal image (PPM or PFM, sRGB-encoded values).
    #[serde(default)]
    pub goal: Option<PathBuf>,
}

impl ViewConfig {
    pub fn to_camera(&self) -> Result<CameraView> {
        let rotation = [
            [self.pose[0][0], self.pose[0][1], self.pose[0][2]],
            [self.pose[1][0], self.pose[1][1], self.pose[1][2]],
            [self.pose[2][0], self.pose[2][1], self.pose[2][2]],
        ];
        let translation = Vec3::new(self.pose[0][3], self.pose[1][3], self.pose[2][3]);
        CameraView::new(
            self.width,
            self.height,
            self.focal,
            self.cx.unwrap_or(self.width as f64 * 0.5),
            self.cy.unwrap_or(self.height as f64 * 0.5),
            Pose {
                rotation,
                translation,
            },
        )
    }

    pub fn from_camera(view: &CameraView, goal: Option<PathBuf>) -> Self {
        let r = &view.pose.rotation;
        let t = view.pose.translation;
        ViewConfig {
            width: view.width,
            height: view.height,
            focal: view.focal,
            cx: Some(view.cx),
            cy: Some(view.cy),
            pose: [
                [r[0][0], r[0][1], r[0][2], t.x],
                [r[1][0], r[1][1], r[1][2], t.y],
                [r[2][0], r[2][1], r[2][2], t.z],
            ],
            goal,
        }
    }
}

/// Renderer knobs shared by all commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub n_bins: usize,
    /// Wavelength bounds in meters.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// March step as a fraction of the voxel edge.
    pub step_fraction: f64,
    /// Absorption cross-section per particle, m^2.
    pub sigma_a: f64,
    pub interpolation: Interpolation,
    /// Exposure for the `render` command and PPM outputs.
    pub exposure: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            n_bins: crate::radiometry::DEFAULT_N_BINS,
            lambda_min: crate::radiometry::DEFAULT_LAMBDA_MIN,
            lambda_max: crate::radiometry::DEFAULT_LAMBDA_MAX,
            step_fraction: 0.5,
            sigma_a: DEFAULT_SIGMA_A,
            interpolation: Interpolation::Nearest,
            exposure: 1.0,
        }
    }
}

impl RenderConfig {
    pub fn settings(&self, voxel_size: f64) -> Result<RenderSettings> {
        if !self.step_fraction.is_finite() || self.step_fraction <= 0.0 {
            return Err(Error::Config("step_fraction must be positive".into()));
        }
        Ok(RenderSettings {
            bins: SpectralBins::new(self.lambda_min, self.lambda_max, self.n_bins)?,
            step: self.step_fraction * voxel_size,
            absorption: AbsorptionModel::new(self.sigma_a)?,
            interpolation: self.interpolation,
        })
    }
}

/// A full optimization or rendering job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobConfig {
    pub volume: VolumeSource,
    /// World position of the grid corner; defaults to centering the grid on
    /// the origin.
    #[serde(default)]
    pub volume_origin: Option<[f64; 3]>,
    #[serde(default)]
    pub views: Vec<ViewConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub render: RenderConfig,
    pub output_dir: PathBuf,
    /// Write FVOL checkpoints every this many iterations; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl JobConfig {
    /// The desk-scale profile: a 32-cubed synthetic plume with two 160x120
    /// orbit views (front and 90-degree side), goals rendered on the fly.
    /// The cameras frame the flame at about 60% of the image height, like
    /// the capture rig the goal images imitate.
    pub fn desk_profile(seed: u64, output_dir: PathBuf) -> Result<JobConfig> {
        let recipe = SyntheticRecipe::new(crate::synth::RecipeKind::GaussianPlume, 32, seed)?;
        let size = 32.0 * recipe.voxel_size;
        let (width, height) = (160u32, 120u32);
        let distance = 2.8 * size;
        let focal = 0.62 * height as f64 * distance / size;
        let views = [0.0, 90.0]
            .iter()
            .map(|&az| {
                let cam = crate::render::orbit_view(width, height, focal, Vec3::ZERO, distance, az)?;
                Ok(ViewConfig::from_camera(&cam, None))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(JobConfig {
            volume: VolumeSource::Synthetic(recipe),
            volume_origin: None,
            views,
            optimizer: OptimizerConfig {
                seed,
                ..Default::default()
            },
            render: RenderConfig::default(),
            output_dir,
            checkpoint_every: 0,
        })
    }
}

/// Bound the rayon worker pool; only effective before first use.
pub fn set_thread_count(n: usize) {
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

pub fn load_job_config(path: &Path) -> Result<JobConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    let mut job: JobConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad job config: {e}")))?;
    // Relative paths resolve against the config file location.
    if let Some(base) = path.parent() {
        job.resolve_paths(base);
    }
    Ok(job)
}

impl JobConfig {
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        if let VolumeSource::Path(p) = &mut self.volume {
            fix(p);
        }
        for v in self.views.iter_mut() {
            if let Some(g) = &mut v.goal {
                fix(g);
            }
        }
        fix(&mut self.output_dir);
    }
}

fn read_goal_image(path: &Path) -> Result<EncodedImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => io::read_ppm(path),
        Some("pfm") => io::read_pfm_encoded(path),
        other => Err(Error::Config(format!(
            "goal images must be .ppm or .pfm, got {other:?} for {}",
            path.display()
        ))),
    }
}

fn centered_origin(dims: crate::voxelgrid::GridDims, voxel_size: f64) -> Vec3 {
    Vec3::new(
        -0.5 * dims.nx as f64 * voxel_size,
        -0.5 * dims.ny as f64 * voxel_size,
        -0.5 * dims.nz as f64 * voxel_size,
    )
}

fn origin_of(job: &JobConfig, dims: crate::voxelgrid::GridDims, voxel_size: f64) -> Vec3 {
    match job.volume_origin {
        Some([x, y, z]) => Vec3::new(x, y, z),
        None => centered_origin(dims, voxel_size),
    }
}

/// Outcome of an optimization job.
pub struct OptimizeSummary {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub exposure: f64,
    pub density_factor: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub outputs: Vec<PathBuf>,
}

/// Resolve the RGB volume and goal views of an optimization job. Synthetic
/// sources render goals for views that lack one and report the ground truth.
pub struct PreparedJob {
    pub rgb: RgbVolume,
    pub voxel_size: f64,
    pub origin: Vec3,
    pub views: Vec<CameraView>,
    pub settings: RenderSettings,
    pub ground_truth: Option<(FireVolume, f64)>,
}

pub fn prepare_optimize_job(job: &JobConfig) -> Result<PreparedJob> {
    if job.views.is_empty() {
        return Err(Error::Config(
            "optimization needs at least one view (field `views` is empty)".into(),
        ));
    }
    let (rgb, voxel_size, ground_truth) = match &job.volume {
        VolumeSource::Path(path) => {
            let data = io::read_fvol(path)?;
            let (rgb, voxel) = io::rgb_volume_from_fvol(&data)?;
            (rgb, voxel, None)
        }
        VolumeSource::Synthetic(recipe) => {
            let (gt, s_true) = generate_synthetic(recipe)?;
            let settings = job.render.settings(recipe.voxel_size)?;
            let rgb = rgb_from_emission(&gt, &settings.bins, settings.absorption.sigma_a)?;
            (rgb, recipe.voxel_size, Some((gt, s_true)))
        }
    };
    let origin = origin_of(job, rgb.dims, voxel_size);
    let settings = job.render.settings(voxel_size)?;

    let mut views = Vec::with_capacity(job.views.len());
    for (i, vc) in job.views.iter().enumerate() {
        let cam = vc.to_camera()?;
        let goal = match (&vc.goal, &ground_truth) {
            (Some(path), _) => read_goal_image(path)?,
            (None, Some((gt, s_true))) => {
                let hdr = render_image(gt, &cam, &settings)?;
                apply_exposure_and_encode(&hdr, *s_true, &job.optimizer.ranges)?
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "view {i} has no goal image and the volume source is not synthetic"
                )))
            }
        };
        views.push(cam.with_goal(goal)?);
    }
    Ok(PreparedJob {
        rgb,
        voxel_size,
        origin,
        views,
        settings,
        ground_truth,
    })
}

/// Run the full optimization job and write every artifact under the output
/// directory: resolved config echo, goal images, final fields (FVOL), trace
/// CSV, temperature snapshots, per-view renders (PFM + PPM) and optional
/// checkpoints.
pub fn run_optimize(job: &JobConfig) -> Result<OptimizeSummary> {
    std::fs::create_dir_all(&job.output_dir)?;
    let mut outputs = Vec::new();

    let echo_path = job.output_dir.join("config_resolved.json");
    std::fs::write(
        &echo_path,
        serde_json::to_string_pretty(job).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    outputs.push(echo_path);

    let prepared = prepare_optimize_job(job)?;

    // Goal images land next to the outputs so a run is self-contained.
    for (i, view) in prepared.views.iter().enumerate() {
        let goal = view.goal.as_ref().expect("prepared views carry goals");
        let path = job.output_dir.join(format!("goal_view{i}.ppm"));
        io::write_ppm(&path, goal)?;
        outputs.push(path);
    }
    if let Some((gt, s_true)) = &prepared.ground_truth {
        let path = job.output_dir.join("ground_truth.fvol");
        io::write_fvol(&path, &io::fire_volume_to_fvol(gt))?;
        outputs.push(path.clone());
        let meta = job.output_dir.join("ground_truth.json");
        std::fs::write(
            &meta,
            serde_json::to_string_pretty(&serde_json::json!({
                "exposure": s_true,
                "occupied_voxels": gt.temperature.occupied_count(),
            }))
            .map_err(|e| Error::Config(e.to_string()))?,
        )?;
        outputs.push(meta);
    }

    let mut optimizer = Optimizer::initialize(
        &prepared.rgb,
        prepared.voxel_size,
        prepared.origin,
        prepared.views,
        job.optimizer.clone(),
        prepared.settings,
    )?;
    let initial_energy = optimizer.current_total();

    let checkpoint_every = job.checkpoint_every;
    let out_dir = job.output_dir.clone();
    let mut checkpoint_paths: Vec<PathBuf> = Vec::new();
    optimizer.run(|state| {
        if checkpoint_every > 0 && state.iteration % checkpoint_every == 0 {
            let path = out_dir.join(format!("checkpoint_{:04}.fvol", state.iteration));
            if io::write_fvol(&path, &io::fire_volume_to_fvol(&state.volume)).is_ok() {
                checkpoint_paths.push(path);
            }
        }
    })?;
    outputs.extend(checkpoint_paths);

    let final_energy = optimizer.current_total();
    let state = optimizer.state();

    let fire_path = job.output_dir.join("fire.fvol");
    io::write_fvol(&fire_path, &io::fire_volume_to_fvol(&state.volume))?;
    outputs.push(fire_path);

    let trace_path = job.output_dir.join("trace.csv");
    io::write_trace_csv(&trace_path, &state.trace)?;
    outputs.push(trace_path);

    if !state.snapshots.is_empty() {
        let snap_path = job.output_dir.join("snapshots.fvol");
        io::write_fvol(
            &snap_path,
            &io::snapshots_to_fvol(state.volume.dims(), state.volume.voxel_size, &state.snapshots),
        )?;
        outputs.push(snap_path);
    }

    for i in 0..optimizer.views().len() {
        let pfm = job.output_dir.join(format!("render_view{i}.pfm"));
        io::write_pfm(&pfm, &optimizer.rendered_hdr(i))?;
        outputs.push(pfm);
        let ppm = job.output_dir.join(format!("render_view{i}.ppm"));
        io::write_ppm(&ppm, &optimizer.rendered_encoded(i))?;
        outputs.push(ppm);
    }

    Ok(OptimizeSummary {
        initial_energy,
        final_energy,
        exposure: state.exposure,
        density_factor: state.density_factor,
        iterations: state.iteration,
        evaluations: optimizer.evaluations(),
        outputs,
    })
}

/// Render a fire volume (2-channel FVOL or synthetic) from the configured
/// views: linear PFM plus exposure-applied PPM per view.
pub fn run_render(job: &JobConfig) -> Result<Vec<PathBuf>> {
    if job.views.is_empty() {
        return Err(Error::Config("rendering needs at least one view".into()));
    }
    std::fs::create_dir_all(&job.output_dir)?;
    let (volume, _) = load_fire_volume(job)?;
    let settings = job.render.settings(volume.voxel_size)?;
    let mut outputs = Vec::new();
    for (i, vc) in job.views.iter().enumerate() {
        let cam = vc.to_camera()?;
        let hdr = render_image(&volume, &cam, &settings)?;
        let pfm = job.output_dir.join(format!("view{i}.pfm"));
        io::write_pfm(&pfm, &hdr)?;
        outputs.push(pfm);
        let encoded = apply_exposure_and_encode(&hdr, job.render.exposure, &job.optimizer.ranges)?;
        let ppm = job.output_dir.join(format!("view{i}.ppm"));
        io::write_ppm(&ppm, &encoded)?;
        outputs.push(ppm);
    }
    Ok(outputs)
}

/// Load a fire volume from the job's source (2-channel FVOL path or
/// synthetic recipe); returns the volume and its ground-truth exposure when
/// synthetic.
pub fn load_fire_volume(job: &JobConfig) -> Result<(FireVolume, Option<f64>)> {
    match &job.volume {
        VolumeSource::Path(path) => {
            let data = io::read_fvol(path)?;
            let origin = origin_of(job, data.dims, data.voxel_size as f64);
            Ok((io::fire_volume_from_fvol(&data, origin)?, None))
        }
        VolumeSource::Synthetic(recipe) => {
            let (gt, s_true) = generate_synthetic(recipe)?;
            Ok((gt, Some(s_true)))
        }
    }
}

/// Generate a synthetic flame: ground-truth FVOL, its emission RGB volume
/// for initialization, and a JSON with the ground-truth exposure.
pub fn run_synth(recipe: &SyntheticRecipe, output_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output_dir)?;
    let (volume, exposure) = generate_synthetic(recipe)?;
    let bins = SpectralBins::visible_default();
    let rgb = rgb_from_emission(&volume, &bins, DEFAULT_SIGMA_A)?;

    let fire_path = output_dir.join("fire.fvol");
    io::write_fvol(&fire_path, &io::fire_volume_to_fvol(&volume))?;
    let rgb_path = output_dir.join("rgb.fvol");
    io::write_fvol(&rgb_path, &io::rgb_volume_to_fvol(&rgb, recipe.voxel_size))?;
    let meta_path = output_dir.join("synth_meta.json");
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "recipe": recipe,
            "exposure": exposure,
            "occupied_voxels": volume.temperature.occupied_count(),
        }))
        .map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(vec![fire_path, rgb_path, meta_path])
}

/// Convergence tables and the MDS diagram from a finished run.
pub fn run_analyze(
    trace_path: &Path,
    snapshots_path: &Path,
    output_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output_dir)?;
    let trace = io::read_trace_csv(trace_path)?;
    let snapshots = io::read_fvol(snapshots_path)?;
    if snapshots.channels.len() != trace.len() {
        return Err(Error::Config(format!(
            "{} snapshots but {} trace rows; snapshots must be recorded every iteration",
            snapshots.channels.len(),
            trace.len()
        )));
    }
    let fields: Vec<Vec<f64>> = snapshots
        .channels
        .iter()
        .map(|c| c.iter().map(|&v| v as f64).collect())
        .collect();
    let energies: Vec<f64> = trace.iter().map(|r| r.total).collect();
    let set = FieldSnapshotSet::new(fields, energies.clone())?;

    let mut outputs = Vec::new();
    let rows = export_trace_plot_data(&trace)?;
    let plot_path = output_dir.join("trace_plot.csv");
    std::fs::write(&plot_path, trace_plot_csv(&rows))?;
    outputs.push(plot_path);

    let points = classical_mds(&set)?;
    let sidecar = mds_sidecar(&points, &energies)?;
    let mds_path = output_dir.join("mds.csv");
    std::fs::write(&mds_path, mds_csv(&sidecar))?;
    outputs.push(mds_path);
    let svg_path = output_dir.join("mds.svg");
    std::fs::write(&svg_path, mds_svg(&sidecar))?;
    outputs.push(svg_path);
    Ok(outputs)
}

/// Reinhard tone mapping of a PFM image to PPM.
pub fn run_tonemap(input: &Path, key: f64, output: &Path) -> Result<()> {
    let hdr = io::read_pfm(input)?;
    let mapped = tonemap_reinhard(&hdr, key)?;
    if let Some(parent) = output.parent() {
        std::fs::create_dir_all(parent)?;
    }
    io::write_ppm(output, &mapped)?;
    Ok(())
}

/// Scene description for the illumination demo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub quads: Vec<QuadConfig>,
    /// "volume" or "sphere".
    pub emitter: String,
    #[serde(default)]
    pub sphere: Option<SphereConfig>,
    pub view: ViewConfig,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_key")]
    pub tonemap_key: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    256
}

fn default_key() -> f64 {
    DEFAULT_REINHARD_KEY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadConfig {
    pub corner: [f64; 3],
    pub edge_u: [f64; 3],
    pub edge_v: [f64; 3],
    pub albedo: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereConfig {
    /// Defaults to the occupied centroid of the volume.
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    pub radius: f64,
    /// Defaults to a radiance matching the volume's emitted power.
    #[serde(default)]
    pub intensity: Option<[f64; 3]>,
}

pub fn load_scene_config(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad scene config: {e}")))
}

fn vec3_of(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub fn build_scene(
    cfg: &SceneConfig,
    volume: &FireVolume,
    settings: &RenderSettings,
) -> Result<SceneDemo> {
    let quads = cfg
        .quads
        .iter()
        .map(|q| Quad {
            corner: vec3_of(q.corner),
            edge_u: vec3_of(q.edge_u),
            edge_v: vec3_of(q.edge_v),
            albedo: q.albedo,
        })
        .collect();
    let emitter = match cfg.emitter.as_str() {
        "volume" => EmitterKind::Volume,
        "sphere" => EmitterKind::SphereBaseline,
        other => {
            return Err(Error::Config(format!(
                "emitter must be \"volume\" or \"sphere\", got {other:?}"
            )))
        }
    };
    let sphere = match (&cfg.sphere, emitter) {
        (Some(sc), _) => {
            let base = SphereLight::matching_power(volume, settings, sc.radius);
            Some(SphereLight {
                center: sc.center.map(vec3_of).unwrap_or(base.center),
                radius: sc.radius,
                intensity: sc.intensity.unwrap_or(base.intensity),
            })
        }
        (None, EmitterKind::SphereBaseline) => {
            return Err(Error::Config(
                "sphere emitter mode needs a `sphere` entry".into(),
            ))
        }
        (None, EmitterKind::Volume) => None,
    };
    let scene = SceneDemo {
        quads,
        emitter,
        sphere,
    };
    scene.validate()?;
    Ok(scene)
}

/// Render the illumination demo: linear PFM plus a Reinhard-tonemapped PPM.
pub fn run_scene_demo(
    volume_path: &Path,
    scene_path: &Path,
    output_dir: &Path,
    volume_origin: Option<[f64; 3]>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(output_dir)?;
    let cfg = load_scene_config(scene_path)?;
    let data = io::read_fvol(volume_path)?;
    let origin = match volume_origin {
        Some([x, y, z]) => Vec3::new(x, y, z),
        None => centered_origin(data.dims, data.voxel_size as f64),
    };
    let volume = io::fire_volume_from_fvol(&data, origin)?;
    let settings = RenderSettings::for_voxel_size(volume.voxel_size);
    let scene = build_scene(&cfg, &volume, &settings)?;
    let view = cfg.view.to_camera()?;
    let hdr = render_scene_demo(&scene, &volume, &view, &settings, cfg.samples, cfg.seed)?;

    let pfm = output_dir.join("demo.pfm");
    io::write_pfm(&pfm, &hdr)?;
    let mapped = tonemap_reinhard(&hdr, cfg.tonemap_key)?;
    let ppm = output_dir.join("demo.ppm");
    io::write_ppm(&ppm, &mapped)?;
    Ok(vec![pfm, ppm])
}

//! Clustered coordinate descent over the temperature (and density) fields,
//! with Gaussian proposal sampling on a 1/k spread schedule, log-space
//! exposure and density-factor line searches, and plateau-based exit
//! conditions. Acceptance always requires a strict decrease of the current
//! total energy, so the accepted-energy sequence is strictly decreasing.

mod cache;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::radiometry::{blackbody_rgb, PhysicalRanges};
use crate::render::{CameraView, EncodedImage, FireVolume, Interpolation, RenderSettings};
use crate::voxelgrid::{
    apply_sparse_threshold, ClusterMap, RgbVolume, VoxelGrid3, AMBIENT_TEMPERATURE,
    DEFAULT_SPARSE_THRESHOLD,
};
use cache::{ClusterOverride, EvalCache};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Full estimation optimizes per-cluster temperatures and densities; the
/// simplified variant freezes the density shape and estimates one global
/// density factor, halving the number of renderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizeMode {
    Full,
    Simplified,
}

/// Which field a sweep updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveField {
    Temperature,
    Density,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub ranges: PhysicalRanges,
    pub weights: crate::energy::EnergyWeights,
    /// Candidates per cluster per sweep.
    pub n_samples: usize,
    /// Initial proposal spread as a fraction of each parameter range.
    pub sigma0: f64,
    /// Outer iterations between cluster refinements.
    pub refine_period: usize,
    pub max_outer_iters: usize,
    /// Relative improvement below which an iteration counts toward the
    /// plateau exit.
    pub plateau_tol: f64,
    /// Consecutive plateau iterations before stopping.
    pub patience: usize,
    pub seed: u64,
    pub mode: OptimizeMode,
    /// Re-render only pixels whose rays intersect the mutated cluster's
    /// bounds. Exact for nearest-voxel lookup; gated by an equivalence test.
    pub incremental: bool,
    /// Coarse-to-fine clustering; disabled, every occupied voxel is its own
    /// cluster from the start (ablation mode).
    pub clustering: bool,
    /// Log-spaced candidates for the initial exposure estimate.
    pub exposure_grid: usize,
    /// Occupancy threshold on the normalized max RGB channel.
    pub sparse_threshold: f64,
    /// Stop after this many render evaluations; 0 means unlimited.
    pub eval_budget: usize,
    /// Record a temperature snapshot every this many iterations; 0 disables.
    pub snapshot_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            ranges: PhysicalRanges::default(),
            weights: crate::energy::EnergyWeights::default(),
            n_samples: 10,
            sigma0: 0.1,
            refine_period: 4,
            max_outer_iters: 60,
            plateau_tol: 1e-3,
            patience: 3,
            seed: 0,
            mode: OptimizeMode::Simplified,
            incremental: true,
            clustering: true,
            exposure_grid: 13,
            sparse_threshold: DEFAULT_SPARSE_THRESHOLD,
            eval_budget: 0,
            snapshot_every: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        self.weights.validate()?;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(self.sigma0 > 0.0 && self.sigma0 <= 1.0) {
            return Err(Error::Config(format!(
                "sigma0 must be in (0, 1], got {}",
                self.sigma0
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.refine_period == 0 {
            return Err(Error::Config("refine_period must be >= 1".into()));
        }
        if self.exposure_grid < 2 {
            return Err(Error::Config("exposure_grid must be >= 2".into()));
        }
        Ok(())
    }

    /// Reference density scale making the dimensionless factor O(1): the
    /// geometric midpoint of the density range.
    pub fn density_reference(&self) -> f64 {
        (self.ranges.d_min * self.ranges.d_max).sqrt()
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub total: f64,
    /// Unweighted appearance sum over views.
    pub e_am: f64,
    /// Unweighted smoothness sum over both fields.
    pub e_sm: f64,
    pub clusters: usize,
    pub exposure: f64,
    pub density_factor: f64,
    pub ms: f64,
}

/// Mutable optimization state.
pub struct OptimizerState {
    pub volume: FireVolume,
    pub exposure: f64,
    /// Dimensionless global multiplier of the frozen density shape
    /// (simplified mode), relative to the reference density scale.
    pub density_factor: f64,
    /// Frozen normalized density shape per occupied voxel (simplified mode).
    pub density_shape: Vec<f64>,
    pub temp_clusters: ClusterMap,
    pub dens_clusters: ClusterMap,
    /// Total energy at each cluster's last evaluation.
    pub cluster_scores: Vec<f64>,
    /// Outer iteration counter, 0 before the first iteration.
    pub iteration: usize,
    pub active_field: ActiveField,
    /// Current proposal spread as a fraction of the parameter range.
    pub sigma_fraction: f64,
    pub trace: Vec<TraceRecord>,
    /// Total energy after every accepted update, in acceptance order.
    pub accepted_energies: Vec<f64>,
    /// Offsets into `accepted_energies` marking cluster refinements.
    pub level_boundaries: Vec<usize>,
    /// Flattened temperature fields per recorded iteration, with energies.
    pub snapshots: Vec<Vec<f64>>,
    pub snapshot_energies: Vec<f64>,
    rng: ChaCha8Rng,
}

impl OptimizerState {
    /// Free parameters: per-voxel temperatures plus exposure, plus either
    /// per-voxel densities (full) or the single density factor (simplified).
    pub fn free_parameter_count(&self, mode: OptimizeMode) -> usize {
        let n_v = self.volume.temperature.occupied_count();
        match mode {
            OptimizeMode::Full => 2 * n_v + 1,
            OptimizeMode::Simplified => n_v + 2,
        }
    }
}

/// Log-uniform exposure candidates spanning [s_min, s_max].
pub fn exposure_grid(ranges: &PhysicalRanges, k: usize) -> Vec<f64> {
    let (lo, hi) = (ranges.s_min.ln(), ranges.s_max.ln());
    (0..k)
        .map(|i| {
            (lo + (hi - lo) * i as f64 / (k - 1).max(1) as f64)
                .exp()
                .clamp(ranges.s_min, ranges.s_max)
        })
        .collect()
}

/// Gaussian proposal around the current value with spread
/// sigma0 * (hi - lo) / k, clamped into [lo, hi].
pub fn sample_value(
    current: f64,
    lo: f64,
    hi: f64,
    k: usize,
    sigma0: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let sigma = sigma0 * (hi - lo) / k.max(1) as f64;
    let normal = Normal::new(current, sigma).expect("positive sigma");
    normal.sample(rng).clamp(lo, hi)
}

/// The optimization session: state plus the evaluation cache bound to a set
/// of goal views.
pub struct Optimizer {
    pub config: OptimizerConfig,
    state: OptimizerState,
    settings: RenderSettings,
    views: Vec<CameraView>,
    cache: EvalCache,
}

impl Optimizer {
    /// Initialization from a reconstructed RGB volume: occupancy from the
    /// sparse threshold, fields from the mode's recipe, exposure from a
    /// log-spaced grid search, clusters at level 0 holding member means.
    pub fn initialize(
        rgb: &RgbVolume,
        voxel_size: f64,
        origin: Vec3,
        views: Vec<CameraView>,
        config: OptimizerConfig,
        settings: RenderSettings,
    ) -> Result<Self> {
        config.validate()?;
        if settings.interpolation != Interpolation::Nearest {
            return Err(Error::Config(
                "optimization requires nearest-voxel lookup".into(),
            ));
        }
        let occupied = apply_sparse_threshold(rgb, config.sparse_threshold)?;
        let occ_list: Vec<usize> = occupied
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| if o { Some(i) } else { None })
            .collect();
        if occ_list.is_empty() {
            return Err(Error::Config(
                "no occupied voxels above the sparse threshold".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ranges = &config.ranges;
        let dims = rgb.dims;
        let mut temperature =
            VoxelGrid3::with_occupancy(dims, occupied.clone(), AMBIENT_TEMPERATURE)?;
        let mut density = VoxelGrid3::with_occupancy(dims, occupied, 0.0)?;

        let mut density_shape = Vec::new();
        let density_factor = 1.0;
        match config.mode {
            OptimizeMode::Full => {
                for &flat in occ_list.iter() {
                    let t: f64 = rng.gen_range(ranges.t_min..=ranges.t_max);
                    let d: f64 = rng.gen_range(ranges.d_min..=ranges.d_max);
                    temperature.set(flat, t);
                    density.set(flat, d);
                }
            }
            OptimizeMode::Simplified => {
                let max_red = occ_list.iter().map(|&i| rgb.r[i]).fold(0.0f64, f64::max);
                if max_red <= 0.0 {
                    return Err(Error::Config(
                        "red channel is zero everywhere: cannot derive the density shape".into(),
                    ));
                }
                let d_ref = config.density_reference();
                for &flat in occ_list.iter() {
                    let shape = rgb.r[flat] / max_red;
                    density_shape.push(shape);
                    // Temperatures start uniform-random like the full mode;
                    // level-0 cluster means would squash any image-derived
                    // assignment to a single dim value anyway.
                    let t: f64 = rng.gen_range(ranges.t_min..=ranges.t_max);
                    temperature.set(flat, t);
                    density.set(
                        flat,
                        (density_factor * d_ref * shape).clamp(ranges.d_min, ranges.d_max),
                    );
                }
            }
        }

        let volume = FireVolume::new(temperature, density, voxel_size, origin)?;
        let mut opt = Self::assemble(
            volume,
            density_shape,
            density_factor,
            views,
            config,
            settings,
            rng,
        )?;
        opt.estimate_initial_exposure();
        opt.assign_cluster_means();
        // Mean assignment changes the rendered brightness; re-pick the
        // exposure for the state the optimization actually starts from.
        opt.estimate_initial_exposure();
        opt.finish_initialization();
        Ok(opt)
    }

    /// Session over explicitly given fields (ground-truth experiments,
    /// resumed runs). `density_shape`, when given, must follow the occupied
    /// list order; densities are rebuilt from it and the factor.
    pub fn with_fields(
        mut volume: FireVolume,
        density_shape: Option<Vec<f64>>,
        density_factor: f64,
        exposure: f64,
        views: Vec<CameraView>,
        config: OptimizerConfig,
        settings: RenderSettings,
    ) -> Result<Self> {
        config.validate()?;
        let occ_list = volume.temperature.occupied_indices();
        let shape = match density_shape {
            Some(shape) => {
                if shape.len() != occ_list.len() {
                    return Err(Error::Shape(format!(
                        "density shape length {} does not match {} occupied voxels",
                        shape.len(),
                        occ_list.len()
                    )));
                }
                let d_ref = config.density_reference();
                for (k, &flat) in occ_list.iter().enumerate() {
                    volume.density.set(
                        flat,
                        (density_factor * d_ref * shape[k])
                            .clamp(config.ranges.d_min, config.ranges.d_max),
                    );
                }
                shape
            }
            None => Vec::new(),
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut opt = Self::assemble(
            volume,
            shape,
            density_factor,
            views,
            config,
            settings,
            rng,
        )?;
        opt.state.exposure = exposure.clamp(opt.config.ranges.s_min, opt.config.ranges.s_max);
        opt.cache.set_exposure(opt.state.exposure);
        opt.finish_initialization();
        Ok(opt)
    }

    fn assemble(
        volume: FireVolume,
        density_shape: Vec<f64>,
        density_factor: f64,
        views: Vec<CameraView>,
        config: OptimizerConfig,
        settings: RenderSettings,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let occ_count = volume.temperature.occupied_count();
        let clusters = if config.clustering {
            ClusterMap::init(occ_count)?
        } else {
            ClusterMap::singletons(occ_count)?
        };
        let mut cache = EvalCache::build(&volume, &views, &settings)?;
        cache.rerender_all(1.0);
        let state = OptimizerState {
            volume,
            exposure: 1.0,
            density_factor,
            density_shape,
            temp_clusters: clusters.clone(),
            dens_clusters: clusters,
            cluster_scores: Vec::new(),
            iteration: 0,
            active_field: ActiveField::Temperature,
            sigma_fraction: config.sigma0,
            trace: Vec::new(),
            accepted_energies: Vec::new(),
            level_boundaries: Vec::new(),
            snapshots: Vec::new(),
            snapshot_energies: Vec::new(),
            rng,
        };
        Ok(Optimizer {
            config,
            state,
            settings,
            views,
            cache,
        })
    }

    /// Log-spaced grid over the exposure range; the candidate with the
    /// lowest appearance error wins (first on ties).
    fn estimate_initial_exposure(&mut self) {
        let mut best = (f64::INFINITY, self.config.ranges.s_min);
        for s in exposure_grid(&self.config.ranges, self.config.exposure_grid) {
            let e: f64 = self.cache.appearance_at_exposure(s).iter().sum();
            if e < best.0 {
                best = (e, s);
            }
        }
        self.state.exposure = best.1;
        self.cache.set_exposure(best.1);
    }

    /// Write the member mean into every cluster (temperature always,
    /// density only when it is a free field).
    fn assign_cluster_means(&mut self) {
        let occ = self.cache.occ_list.clone();
        let map = self.state.temp_clusters.clone();
        for c in 0..map.count {
            let members = map.members(c);
            let len = members.len() as f64;
            let mean_t: f64 = members
                .clone()
                .map(|k| self.state.volume.temperature.values[occ[k]])
                .sum::<f64>()
                / len;
            for k in members {
                self.state.volume.temperature.set(occ[k], mean_t);
            }
        }
        if self.config.mode == OptimizeMode::Full {
            let map = self.state.dens_clusters.clone();
            for c in 0..map.count {
                let members = map.members(c);
                let len = members.len() as f64;
                let mean_d: f64 = members
                    .clone()
                    .map(|k| self.state.volume.density.values[occ[k]])
                    .sum::<f64>()
                    / len;
                for k in members {
                    self.state.volume.density.set(occ[k], mean_d);
                }
            }
        }
        self.cache
            .refresh_voxel_tables(&self.state.volume, &self.settings);
        self.cache.rerender_all(self.state.exposure);
    }

    fn finish_initialization(&mut self) {
        self.cache.refresh_smoothness(&self.state.volume);
        self.cache
            .rebuild_cluster_geometry(&self.state.temp_clusters, self.state.volume.voxel_size);
        let total = self.current_total();
        self.state.cluster_scores = vec![total; self.state.temp_clusters.count];
        self.push_trace(0, 0.0);
        if self.config.snapshot_every > 0 {
            self.snapshot();
        }
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn settings(&self) -> &RenderSettings {
        &self.settings
    }

    pub fn views(&self) -> &[CameraView] {
        &self.views
    }

    pub fn evaluations(&self) -> usize {
        self.cache.evals
    }

    /// Total energy from the cached term values. Smoothness enters in
    /// range-normalized units so one w_sm balances fields of very different
    /// physical scales, matching the energy module.
    pub fn current_total(&self) -> f64 {
        self.compose_total(
            self.cache.appearance_sum(),
            self.cache.sm_temp,
            self.cache.sm_dens,
        )
    }

    fn compose_total(&self, e_am: f64, sm_t_raw: f64, sm_d_raw: f64) -> f64 {
        let w = &self.config.weights;
        let r = &self.config.ranges;
        w.w_am * e_am
            + w.w_sm * (sm_t_raw / (r.t_max - r.t_min) + sm_d_raw / (r.d_max - r.d_min))
    }

    /// Range-normalized smoothness of both fields, as entering the total.
    pub fn normalized_smoothness(&self) -> (f64, f64) {
        let r = &self.config.ranges;
        (
            self.cache.sm_temp / (r.t_max - r.t_min),
            self.cache.sm_dens / (r.d_max - r.d_min),
        )
    }

    pub fn appearance_sum(&self) -> f64 {
        self.cache.appearance_sum()
    }

    /// Appearance energy of each view at the current state.
    pub fn appearance_per_view(&self) -> Vec<f64> {
        self.cache.views.iter().map(|v| v.e_am).collect()
    }

    /// Raw pairwise smoothness sums of both fields (unnormalized units).
    pub fn smoothness_sums(&self) -> (f64, f64) {
        (self.cache.sm_temp, self.cache.sm_dens)
    }

    /// Current render of a view with exposure applied, as written to goal
    /// images and final outputs.
    pub fn rendered_encoded(&self, view_idx: usize) -> EncodedImage {
        let view = &self.views[view_idx];
        let s = self.state.exposure;
        let pixels = self.cache.views[view_idx]
            .hdr
            .iter()
            .map(|p| {
                [
                    crate::color::srgb_encode((p[0] * s).clamp(0.0, 1.0)),
                    crate::color::srgb_encode((p[1] * s).clamp(0.0, 1.0)),
                    crate::color::srgb_encode((p[2] * s).clamp(0.0, 1.0)),
                ]
            })
            .collect();
        EncodedImage::from_pixels(view.width, view.height, pixels).expect("cache matches view")
    }

    /// Current linear HDR render of a view.
    pub fn rendered_hdr(&self, view_idx: usize) -> crate::render::HdrImage {
        let view = &self.views[view_idx];
        crate::render::HdrImage::from_pixels(
            view.width,
            view.height,
            self.cache.views[view_idx].hdr.clone(),
        )
        .expect("cache matches view")
    }

    /// Set the outer iteration counter, which drives the 1/k proposal
    /// spread, when stepping the line searches manually instead of through
    /// [`Optimizer::run`].
    pub fn set_iteration(&mut self, k: usize) {
        self.state.iteration = k;
        self.state.sigma_fraction = self.config.sigma0 / k.max(1) as f64;
    }

    fn budget_exhausted(&self) -> bool {
        self.config.eval_budget > 0 && self.cache.evals >= self.config.eval_budget
    }

    /// One coordinate-descent sweep: for each cluster in index order, draw
    /// candidates around its current value and accept strict improvements of
    /// the total energy.
    pub fn sweep_field(&mut self, field: ActiveField) {
        let k = self.state.iteration.max(1);
        let map = match field {
            ActiveField::Temperature => self.state.temp_clusters.clone(),
            ActiveField::Density => self.state.dens_clusters.clone(),
        };
        let (lo, hi) = match field {
            ActiveField::Temperature => (self.config.ranges.t_min, self.config.ranges.t_max),
            ActiveField::Density => (self.config.ranges.d_min, self.config.ranges.d_max),
        };
        let sigma_a = self.settings.absorption.sigma_a;
        for c in 0..map.count {
            if self.budget_exhausted() {
                return;
            }
            for _ in 0..self.config.n_samples {
                if self.budget_exhausted() {
                    return;
                }
                let first_flat = self.cache.occ_list[map.members(c).start];
                let current = match field {
                    ActiveField::Temperature => self.state.volume.temperature.values[first_flat],
                    ActiveField::Density => self.state.volume.density.values[first_flat],
                };
                let candidate =
                    sample_value(current, lo, hi, k, self.config.sigma0, &mut self.state.rng);

                let over = match field {
                    ActiveField::Temperature => ClusterOverride {
                        cluster: c as u32,
                        emission: Some(
                            blackbody_rgb(candidate, &self.settings.bins)
                                .expect("temperature within physical range"),
                        ),
                        kappa: None,
                    },
                    ActiveField::Density => ClusterOverride {
                        cluster: c as u32,
                        emission: None,
                        kappa: Some(sigma_a * candidate),
                    },
                };
                let updates = self.cache.evaluate_cluster_candidate(
                    c,
                    &over,
                    self.state.exposure,
                    self.config.incremental,
                );
                let sm_delta = {
                    let occ_list = &self.cache.occ_list;
                    let temp_values = &self.state.volume.temperature.values;
                    let dens_values = &self.state.volume.density.values;
                    match field {
                        ActiveField::Temperature => self
                            .cache
                            .smoothness_delta(&map, c, current, candidate, |occ| {
                                temp_values[occ_list[occ]]
                            }),
                        ActiveField::Density => self
                            .cache
                            .smoothness_delta(&map, c, current, candidate, |occ| {
                                dens_values[occ_list[occ]]
                            }),
                    }
                };
                let (sm_t, sm_d) = match field {
                    ActiveField::Temperature => (self.cache.sm_temp + sm_delta, self.cache.sm_dens),
                    ActiveField::Density => (self.cache.sm_temp, self.cache.sm_dens + sm_delta),
                };
                let e_am_new: f64 = updates.e_am.iter().sum();
                let total_new = self.compose_total(e_am_new, sm_t, sm_d);

                if total_new < self.current_total() {
                    self.cache.commit_pixels(updates);
                    self.cache.sm_temp = sm_t;
                    self.cache.sm_dens = sm_d;
                    for m in map.members(c) {
                        let flat = self.cache.occ_list[m];
                        match field {
                            ActiveField::Temperature => {
                                self.state.volume.temperature.set(flat, candidate);
                                self.cache.emission_rgb[m] =
                                    over.emission.expect("set for temperature");
                            }
                            ActiveField::Density => {
                                self.state.volume.density.set(flat, candidate);
                                self.cache.kappa[m] = over.kappa.expect("set for density");
                            }
                        }
                    }
                    self.state.cluster_scores[c] = total_new;
                    self.state.accepted_energies.push(total_new);
                }
            }
        }
    }

    /// Log-space Gaussian line search on the exposure; only the appearance
    /// term is evaluated since exposure does not touch neighbor relations.
    pub fn estimate_exposure(&mut self) {
        let k = self.state.iteration.max(1);
        let ranges = &self.config.ranges;
        let (lo, hi) = (ranges.s_min.ln(), ranges.s_max.ln());
        let sigma = self.config.sigma0 * (hi - lo) / k as f64;
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        for _ in 0..self.config.n_samples {
            let ln_cand =
                (self.state.exposure.ln() + normal.sample(&mut self.state.rng)).clamp(lo, hi);
            let s_cand = ln_cand.exp().clamp(ranges.s_min, ranges.s_max);
            let e_cand: f64 = self.cache.appearance_at_exposure(s_cand).iter().sum();
            if e_cand < self.cache.appearance_sum() {
                self.state.exposure = s_cand;
                self.cache.set_exposure(s_cand);
                self.state.accepted_energies.push(self.current_total());
            }
        }
    }

    /// Log-space line search on the global density factor (simplified mode):
    /// the frozen shape is rescaled, which re-renders every pixel.
    pub fn estimate_density_factor(&mut self) -> Result<()> {
        if self.config.mode != OptimizeMode::Simplified {
            return Err(Error::Mode(
                "density factor estimation requires simplified mode".into(),
            ));
        }
        let k = self.state.iteration.max(1);
        let ranges = self.config.ranges;
        let d_ref = self.config.density_reference();
        let (lo, hi) = ((ranges.d_min / d_ref).ln(), (ranges.d_max / d_ref).ln());
        let sigma = self.config.sigma0 * (hi - lo) / k as f64;
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let sigma_a = self.settings.absorption.sigma_a;
        for _ in 0..self.config.n_samples {
            if self.budget_exhausted() {
                return Ok(());
            }
            let ln_cand =
                (self.state.density_factor.ln() + normal.sample(&mut self.state.rng)).clamp(lo, hi);
            let f_cand = ln_cand.exp();
            let density_at =
                |shape: f64| -> f64 { (f_cand * d_ref * shape).clamp(ranges.d_min, ranges.d_max) };
            let mut kappa_cand: Vec<f64> = self
                .state
                .density_shape
                .iter()
                .map(|&sh| sigma_a * density_at(sh))
                .collect();
            let updates = self
                .cache
                .evaluate_with_kappa(&mut kappa_cand, self.state.exposure);
            let shape = &self.state.density_shape;
            let sm_d_new = self.cache.smoothness_of(|occ| density_at(shape[occ]));
            let e_am_new: f64 = updates.e_am.iter().sum();
            let total_new = self.compose_total(e_am_new, self.cache.sm_temp, sm_d_new);
            if total_new < self.current_total() {
                self.cache.commit_pixels(updates);
                self.cache.kappa = kappa_cand;
                self.cache.sm_dens = sm_d_new;
                for m in 0..self.state.density_shape.len() {
                    let flat = self.cache.occ_list[m];
                    let value = density_at(self.state.density_shape[m]);
                    self.state.volume.density.set(flat, value);
                }
                self.state.density_factor = f_cand;
                self.state.accepted_energies.push(total_new);
            }
        }
        Ok(())
    }

    fn refine_clusters(&mut self) {
        self.state.temp_clusters = self.state.temp_clusters.refine();
        self.state.dens_clusters = self.state.dens_clusters.refine();
        self.cache
            .rebuild_cluster_geometry(&self.state.temp_clusters, self.state.volume.voxel_size);
        self.state
            .level_boundaries
            .push(self.state.accepted_energies.len());
    }

    fn update_scores(&mut self) {
        let total = self.current_total();
        self.state.cluster_scores = vec![total; self.state.temp_clusters.count];
    }

    fn push_trace(&mut self, iteration: usize, ms: f64) {
        let (sm_t, sm_d) = self.normalized_smoothness();
        let record = TraceRecord {
            iteration,
            total: self.current_total(),
            e_am: self.cache.appearance_sum(),
            e_sm: sm_t + sm_d,
            clusters: self.state.temp_clusters.count,
            exposure: self.state.exposure,
            density_factor: self.state.density_factor,
            ms,
        };
        self.state.trace.push(record);
    }

    fn snapshot(&mut self) {
        self.state
            .snapshots
            .push(self.state.volume.temperature.values.clone());
        self.state.snapshot_energies.push(self.current_total());
    }

    /// The outer loop: sweep the active field (alternating per iteration in
    /// full mode), re-estimate the density factor (simplified), re-estimate
    /// the exposure, refine clusters on schedule, refresh scores, and stop
    /// on plateau, budget, or the iteration cap.
    pub fn run(&mut self, mut on_iteration: impl FnMut(&OptimizerState)) -> Result<()> {
        let mut plateau = 0usize;
        let mut prev_total = self.current_total();
        for k in 1..=self.config.max_outer_iters {
            if self.budget_exhausted() {
                break;
            }
            let started = std::time::Instant::now();
            self.state.iteration = k;
            self.state.sigma_fraction = self.config.sigma0 / k as f64;
            let field = match self.config.mode {
                OptimizeMode::Simplified => ActiveField::Temperature,
                OptimizeMode::Full => {
                    if k % 2 == 1 {
                        ActiveField::Temperature
                    } else {
                        ActiveField::Density
                    }
                }
            };
            self.state.active_field = field;

            self.sweep_field(field);
            if self.config.mode == OptimizeMode::Simplified {
                self.estimate_density_factor()?;
            }
            self.estimate_exposure();
            if self.config.clustering && k % self.config.refine_period == 0 {
                self.refine_clusters();
            }
            self.update_scores();
            self.push_trace(k, started.elapsed().as_secs_f64() * 1e3);
            if self.config.snapshot_every > 0 && k % self.config.snapshot_every == 0 {
                self.snapshot();
            }
            on_iteration(&self.state);

            let total = self.current_total();
            if total == 0.0 {
                break;
            }
            let improvement = (prev_total - total) / prev_total.max(f64::MIN_POSITIVE);
            if improvement < self.config.plateau_tol {
                plateau += 1;
                if plateau >= self.config.patience {
                    break;
                }
            } else {
                plateau = 0;
            }
            prev_total = total;
        }
        Ok(())
    }

    pub fn into_state(self) -> OptimizerState {
        self.state
    }
}

//! Incremental energy evaluation for the coordinate descent.
//!
//! The cache holds the current HDR render and per-pixel Lab error of every
//! view, per-voxel emission colors and absorption coefficients, and the
//! occupied-voxel adjacency. A cluster candidate only re-marches the pixels
//! whose rays intersect the cluster's bounding box: with nearest-voxel
//! lookup every other pixel is exactly unchanged, so the shortcut is an
//! identity, not an approximation. The smoothness change is likewise summed
//! over cluster boundary pairs only.

use crate::color::{lab_distance, rgb_to_lab, srgb_encode, EncodedRgb, LabColor};
use crate::error::{Error, Result};
use crate::math::{Aabb, Ray, Vec3};
use crate::radiometry::blackbody_rgb;
use crate::render::{generate_ray, CameraView, FireVolume, RenderSettings, TRANSMITTANCE_EPSILON};
use crate::voxelgrid::{neighbors18, ClusterMap};
use rayon::prelude::*;

const NO_VOXEL: u32 = u32::MAX;
/// Below this many affected pixels a sequential loop beats the thread pool.
const PARALLEL_PIXEL_THRESHOLD: usize = 256;

/// Compressed adjacency over occupied voxels.
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Adjacency {
    pub fn of(&self, occ: usize) -> &[u32] {
        &self.neighbors[self.offsets[occ]..self.offsets[occ + 1]]
    }
}

/// Candidate overlay: one cluster's voxels read substituted emission and/or
/// absorption values during marching.
#[derive(Clone, Copy)]
pub struct ClusterOverride {
    pub cluster: u32,
    pub emission: Option<[f64; 3]>,
    pub kappa: Option<f64>,
}

pub struct ViewCache {
    pub rays: Vec<Ray>,
    pub goal_lab: Vec<LabColor>,
    /// Current linear HDR value per pixel.
    pub hdr: Vec<[f64; 3]>,
    /// Per-pixel Lab error against the goal at the current exposure.
    pub delta_e: Vec<f64>,
    /// Sum of `delta_e` (kept exactly equal to the accepted increments).
    pub e_am: f64,
    /// Per cluster: pixels whose rays intersect the cluster bounds.
    pub cluster_pixels: Vec<Vec<u32>>,
}

/// Scratch result of a candidate evaluation, ready to commit.
pub struct PixelUpdates {
    /// (pixel index, new hdr, new delta_e) per affected pixel, per view.
    pub per_view: Vec<Vec<(u32, [f64; 3], f64)>>,
    /// New appearance sum per view.
    pub e_am: Vec<f64>,
}

pub struct EvalCache {
    /// Flat grid indices of occupied voxels, ascending (yzx order).
    pub occ_list: Vec<usize>,
    /// Grid index -> occupied index, NO_VOXEL when empty.
    pub occ_index: Vec<u32>,
    pub adjacency: Adjacency,
    /// Black-body RGB per occupied voxel (kappa excluded).
    pub emission_rgb: Vec<[f64; 3]>,
    /// Absorption coefficient per occupied voxel, 1/m.
    pub kappa: Vec<f64>,
    /// Cluster id per occupied voxel at the current refinement level.
    pub cluster_of: Vec<u32>,
    pub views: Vec<ViewCache>,
    /// Smoothness of the temperature field (pair-doubled sum).
    pub sm_temp: f64,
    /// Smoothness of the density field.
    pub sm_dens: f64,
    /// Count of candidate render evaluations (the optimization budget).
    pub evals: usize,
    // March geometry.
    bounds: Aabb,
    origin: Vec3,
    inv_voxel: f64,
    dims: (usize, usize, usize),
    step: f64,
}

impl EvalCache {
    pub fn build(
        volume: &FireVolume,
        views: &[CameraView],
        settings: &RenderSettings,
    ) -> Result<Self> {
        let dims = volume.dims();
        let occ_list = volume.temperature.occupied_indices();
        if occ_list.is_empty() {
            return Err(Error::Config(
                "no occupied voxels: nothing to optimize".into(),
            ));
        }
        let mut occ_index = vec![NO_VOXEL; dims.total()];
        for (k, &flat) in occ_list.iter().enumerate() {
            occ_index[flat] = k as u32;
        }

        let mut offsets = Vec::with_capacity(occ_list.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for &flat in occ_list.iter() {
            for j in neighbors18(flat, &dims)? {
                if occ_index[j] != NO_VOXEL {
                    neighbors.push(occ_index[j]);
                }
            }
            offsets.push(neighbors.len());
        }

        let view_caches = views
            .iter()
            .enumerate()
            .map(|(i, view)| {
                let goal = view
                    .goal
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("view {i} has no goal image")))?;
                let n = view.pixel_count();
                let mut rays = Vec::with_capacity(n);
                for p in 0..n {
                    rays.push(generate_ray(
                        view,
                        p as u32 % view.width,
                        p as u32 / view.width,
                    )?);
                }
                let goal_lab = goal
                    .pixels
                    .iter()
                    .map(|p| rgb_to_lab(EncodedRgb::new(p[0], p[1], p[2])))
                    .collect();
                Ok(ViewCache {
                    rays,
                    goal_lab,
                    hdr: vec![[0.0; 3]; n],
                    delta_e: vec![0.0; n],
                    e_am: 0.0,
                    cluster_pixels: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut cache = EvalCache {
            occ_list,
            occ_index,
            adjacency: Adjacency { offsets, neighbors },
            emission_rgb: Vec::new(),
            kappa: Vec::new(),
            cluster_of: Vec::new(),
            views: view_caches,
            sm_temp: 0.0,
            sm_dens: 0.0,
            evals: 0,
            bounds: volume.bounds(),
            origin: volume.origin,
            inv_voxel: 1.0 / volume.voxel_size,
            dims: (dims.nx, dims.ny, dims.nz),
            step: settings.step,
        };
        cache.refresh_voxel_tables(volume, settings);
        Ok(cache)
    }

    /// Rebuild the per-voxel emission and absorption tables from the fields.
    pub fn refresh_voxel_tables(&mut self, volume: &FireVolume, settings: &RenderSettings) {
        self.emission_rgb = self
            .occ_list
            .par_iter()
            .map(|&flat| {
                blackbody_rgb(volume.temperature.values[flat], &settings.bins)
                    .expect("positive temperature")
            })
            .collect();
        self.kappa = self
            .occ_list
            .iter()
            .map(|&flat| settings.absorption.sigma_a * volume.density.values[flat])
            .collect();
    }

    /// Recompute both smoothness sums exactly from the fields.
    pub fn refresh_smoothness(&mut self, volume: &FireVolume) {
        self.sm_temp = self.smoothness_of(|occ| volume.temperature.values[self.occ_list[occ]]);
        self.sm_dens = self.smoothness_of(|occ| volume.density.values[self.occ_list[occ]]);
    }

    pub fn smoothness_of(&self, value: impl Fn(usize) -> f64) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.occ_list.len() {
            let vi = value(i);
            for &j in self.adjacency.of(i) {
                sum += (value(j as usize) - vi).abs();
            }
        }
        sum
    }

    /// Smoothness change if every voxel of `cluster` in the given field
    /// moved from `old_value` to `new_value` (all members hold `old_value`).
    pub fn smoothness_delta(
        &self,
        map: &ClusterMap,
        cluster: usize,
        old_value: f64,
        new_value: f64,
        value: impl Fn(usize) -> f64,
    ) -> f64 {
        let mut delta = 0.0;
        for occ in map.members(cluster) {
            for &j in self.adjacency.of(occ) {
                if self.cluster_of[j as usize] != cluster as u32 {
                    let vj = value(j as usize);
                    delta += (new_value - vj).abs() - (old_value - vj).abs();
                }
            }
        }
        // Boundary pairs appear once from each side in the pair-doubled sum.
        2.0 * delta
    }

    /// Rebuild cluster assignment plus the per-view affected-pixel lists for
    /// the current refinement level.
    pub fn rebuild_cluster_geometry(&mut self, map: &ClusterMap, voxel_size: f64) {
        self.cluster_of = map.assignment.clone();
        // Cluster bounds in world space, grown by the voxel cells.
        let boxes: Vec<Aabb> = (0..map.count)
            .map(|c| {
                let mut min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
                let mut max = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
                for occ in map.members(c) {
                    let flat = self.occ_list[occ];
                    let (_, ny, nz) = self.dims;
                    let y = flat % ny;
                    let rest = flat / ny;
                    let z = rest % nz;
                    let x = rest / nz;
                    let lo = self.origin
                        + Vec3::new(
                            x as f64 * voxel_size,
                            y as f64 * voxel_size,
                            z as f64 * voxel_size,
                        );
                    min.x = min.x.min(lo.x);
                    min.y = min.y.min(lo.y);
                    min.z = min.z.min(lo.z);
                    max.x = max.x.max(lo.x + voxel_size);
                    max.y = max.y.max(lo.y + voxel_size);
                    max.z = max.z.max(lo.z + voxel_size);
                }
                // A hair of slack against boundary rounding.
                let eps = 1e-9 * voxel_size;
                Aabb {
                    min: min - Vec3::new(eps, eps, eps),
                    max: max + Vec3::new(eps, eps, eps),
                }
            })
            .collect();

        for view in self.views.iter_mut() {
            view.cluster_pixels = boxes
                .par_iter()
                .map(|b| {
                    view.rays
                        .iter()
                        .enumerate()
                        .filter_map(|(p, ray)| b.intersect(ray).map(|_| p as u32))
                        .collect()
                })
                .collect();
        }
    }

    #[inline]
    fn voxel_at(&self, p: Vec3) -> u32 {
        let q = (p - self.origin).scale(self.inv_voxel);
        let (x, y, z) = (q.x.floor(), q.y.floor(), q.z.floor());
        if x < 0.0 || y < 0.0 || z < 0.0 {
            return NO_VOXEL;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        let (nx, ny, nz) = self.dims;
        if x >= nx || y >= ny || z >= nz {
            return NO_VOXEL;
        }
        self.occ_index[y + ny * (z + nz * x)]
    }

    /// Cached-field equivalent of the public ray march, folded to RGB. The
    /// gray absorber lets the spectral sum collapse to a per-voxel RGB
    /// emission table; the segment layout matches the reference exactly.
    pub fn march_pixel(&self, ray: &Ray, over: Option<&ClusterOverride>) -> [f64; 3] {
        let mut rgb = [0.0f64; 3];
        let Some((enter, exit)) = self.bounds.intersect(ray) else {
            return rgb;
        };
        let span = exit - enter;
        if span <= 0.0 {
            return rgb;
        }
        let n_segments = (span / self.step).ceil().max(1.0) as usize;
        let dt = span / n_segments as f64;
        let mut transmittance = 1.0f64;
        for seg in 0..n_segments {
            let occ = self.voxel_at(ray.at(enter + (seg as f64 + 0.5) * dt));
            if occ == NO_VOXEL {
                continue;
            }
            let occ_usize = occ as usize;
            let (mut kappa, mut emission) = (self.kappa[occ_usize], self.emission_rgb[occ_usize]);
            if let Some(o) = over {
                if self.cluster_of[occ_usize] == o.cluster {
                    if let Some(k) = o.kappa {
                        kappa = k;
                    }
                    if let Some(e) = o.emission {
                        emission = e;
                    }
                }
            }
            if kappa > 0.0 {
                let weight = transmittance * kappa * dt;
                rgb[0] += weight * emission[0];
                rgb[1] += weight * emission[1];
                rgb[2] += weight * emission[2];
                transmittance *= (-kappa * dt).exp();
                if transmittance < TRANSMITTANCE_EPSILON {
                    break;
                }
            }
        }
        rgb
    }

    fn delta_e_of(hdr: [f64; 3], exposure: f64, goal: &LabColor) -> f64 {
        let enc = EncodedRgb::new(
            srgb_encode((hdr[0] * exposure).clamp(0.0, 1.0)),
            srgb_encode((hdr[1] * exposure).clamp(0.0, 1.0)),
            srgb_encode((hdr[2] * exposure).clamp(0.0, 1.0)),
        );
        lab_distance(rgb_to_lab(enc), *goal)
    }

    /// Re-render the listed pixels of one view under an optional override,
    /// producing commit-ready updates and the view's new appearance sum.
    fn evaluate_pixels(
        &self,
        view_idx: usize,
        pixels: &[u32],
        over: Option<&ClusterOverride>,
        exposure: f64,
    ) -> (Vec<(u32, [f64; 3], f64)>, f64) {
        let view = &self.views[view_idx];
        let work = |&p: &u32| {
            let rgb = self.march_pixel(&view.rays[p as usize], over);
            let de = Self::delta_e_of(rgb, exposure, &view.goal_lab[p as usize]);
            (p, rgb, de)
        };
        let updates: Vec<(u32, [f64; 3], f64)> = if pixels.len() >= PARALLEL_PIXEL_THRESHOLD {
            pixels.par_iter().map(work).collect()
        } else {
            pixels.iter().map(work).collect()
        };
        let mut e_am = view.e_am;
        for &(p, _, de) in updates.iter() {
            e_am += de - view.delta_e[p as usize];
        }
        (updates, e_am)
    }

    /// Candidate evaluation for one cluster: returns the new appearance sums
    /// and pixel updates. Counts one render evaluation.
    pub fn evaluate_cluster_candidate(
        &mut self,
        cluster: usize,
        over: &ClusterOverride,
        exposure: f64,
        incremental: bool,
    ) -> PixelUpdates {
        self.evals += 1;
        let mut per_view = Vec::with_capacity(self.views.len());
        let mut e_am = Vec::with_capacity(self.views.len());
        for v in 0..self.views.len() {
            let all: Vec<u32>;
            let pixels: &[u32] = if incremental {
                &self.views[v].cluster_pixels[cluster]
            } else {
                all = (0..self.views[v].rays.len() as u32).collect();
                &all
            };
            let (updates, sum) = self.evaluate_pixels(v, pixels, Some(over), exposure);
            per_view.push(updates);
            e_am.push(sum);
        }
        PixelUpdates { per_view, e_am }
    }

    /// Full re-render of every view with a substituted absorption table
    /// (global density-factor candidates). The passed table is swapped in
    /// for the evaluation and restored afterwards; counts one render
    /// evaluation.
    pub fn evaluate_with_kappa(&mut self, kappa: &mut Vec<f64>, exposure: f64) -> PixelUpdates {
        self.evals += 1;
        std::mem::swap(&mut self.kappa, kappa);
        let mut per_view = Vec::with_capacity(self.views.len());
        let mut e_am = Vec::with_capacity(self.views.len());
        for v in 0..self.views.len() {
            let pixels: Vec<u32> = (0..self.views[v].rays.len() as u32).collect();
            let (updates, _) = self.evaluate_pixels(v, &pixels, None, exposure);
            let sum = updates.iter().map(|&(_, _, de)| de).sum();
            per_view.push(updates);
            e_am.push(sum);
        }
        std::mem::swap(&mut self.kappa, kappa);
        PixelUpdates { per_view, e_am }
    }

    /// Write accepted pixel updates into the cache.
    pub fn commit_pixels(&mut self, updates: PixelUpdates) {
        for (v, (list, e_am)) in updates
            .per_view
            .into_iter()
            .zip(updates.e_am)
            .enumerate()
        {
            let view = &mut self.views[v];
            for (p, rgb, de) in list {
                view.hdr[p as usize] = rgb;
                view.delta_e[p as usize] = de;
            }
            view.e_am = e_am;
        }
    }

    /// Render every pixel of every view from the current tables and refresh
    /// the per-pixel errors (used at initialization and after global density
    /// changes).
    pub fn rerender_all(&mut self, exposure: f64) {
        for v in 0..self.views.len() {
            let pixels: Vec<u32> = (0..self.views[v].rays.len() as u32).collect();
            let (updates, _) = self.evaluate_pixels(v, &pixels, None, exposure);
            let view = &mut self.views[v];
            let mut sum = 0.0;
            for (p, rgb, de) in updates {
                view.hdr[p as usize] = rgb;
                view.delta_e[p as usize] = de;
                sum += de;
            }
            view.e_am = sum;
        }
    }

    /// Appearance sums for an exposure candidate, from the cached HDR.
    pub fn appearance_at_exposure(&self, exposure: f64) -> Vec<f64> {
        self.views
            .iter()
            .map(|view| {
                let n = view.hdr.len();
                let work = |p: usize| Self::delta_e_of(view.hdr[p], exposure, &view.goal_lab[p]);
                if n >= PARALLEL_PIXEL_THRESHOLD {
                    let des: Vec<f64> = (0..n).into_par_iter().map(work).collect();
                    des.iter().sum()
                } else {
                    (0..n).map(work).sum()
                }
            })
            .collect()
    }

    /// Refresh the per-pixel errors for a newly accepted exposure.
    pub fn set_exposure(&mut self, exposure: f64) {
        for view in self.views.iter_mut() {
            let des: Vec<f64> = if view.hdr.len() >= PARALLEL_PIXEL_THRESHOLD {
                view.hdr
                    .par_iter()
                    .zip(view.goal_lab.par_iter())
                    .map(|(h, g)| Self::delta_e_of(*h, exposure, g))
                    .collect()
            } else {
                view.hdr
                    .iter()
                    .zip(view.goal_lab.iter())
                    .map(|(h, g)| Self::delta_e_of(*h, exposure, g))
                    .collect()
            };
            view.e_am = des.iter().sum();
            view.delta_e = des;
        }
    }

    pub fn appearance_sum(&self) -> f64 {
        self.views.iter().map(|v| v.e_am).sum()
    }
}

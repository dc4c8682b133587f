//! Scene illumination demo: Lambertian quads lit directly by the fire
//! volume, with a spherical-emitter baseline for comparison.

use crate::error::{Error, Result};
use crate::math::{Ray, Vec3};
use crate::radiometry::{blackbody_rgb, spectrum_to_rgb, planck_radiance_unchecked};
use crate::render::march::generate_ray_infallible;
use crate::render::{
    luminance, march_ray_with, march_transmittance, CameraView, FireVolume, HdrImage,
    RenderSettings,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Lambertian rectangle spanned by two edge vectors from a corner.
#[derive(Debug, Clone)]
pub struct Quad {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    /// Diffuse albedo per channel, each in [0, 1].
    pub albedo: [f64; 3],
}

impl Quad {
    pub fn normal(&self) -> Vec3 {
        self.edge_u.cross(self.edge_v).normalized()
    }

    /// Ray parameter of the hit, if any.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        let n = self.edge_u.cross(self.edge_v);
        let denom = ray.direction.dot(n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.corner - ray.origin).dot(n) / denom;
        if t <= 1e-9 {
            return None;
        }
        let p = ray.at(t) - self.corner;
        let u = p.dot(self.edge_u) / self.edge_u.dot(self.edge_u);
        let v = p.dot(self.edge_v) / self.edge_v.dot(self.edge_v);
        if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
            Some(t)
        } else {
            None
        }
    }
}

/// Uniform spherical emitter used as the baseline light source.
#[derive(Debug, Clone)]
pub struct SphereLight {
    pub center: Vec3,
    pub radius: f64,
    /// Emitted radiance per channel.
    pub intensity: [f64; 3],
}

impl SphereLight {
    fn intersect(&self, ray: &Ray) -> Option<f64> {
        let oc = ray.origin - self.center;
        let b = oc.dot(ray.direction);
        let c = oc.dot(oc) - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let t = -b - disc.sqrt();
        if t > 1e-9 {
            Some(t)
        } else {
            None
        }
    }

    /// Sphere placed at the occupied centroid, colored like the hottest
    /// voxel, with surface radiance chosen so its total power matches the
    /// volume's emitted power.
    pub fn matching_power(volume: &FireVolume, settings: &RenderSettings, radius: f64) -> Self {
        let occ = volume.temperature.occupied_indices();
        let mut hottest = 0.0f64;
        let mut power = [0.0f64; 3];
        for &i in occ.iter() {
            let t = volume.temperature.values[i];
            let kappa = settings.absorption.sigma_a * volume.density.values[i];
            hottest = hottest.max(t);
            if kappa > 0.0 && t > 0.0 {
                let rgb = voxel_emission_rgb(t, kappa, settings);
                for c in 0..3 {
                    // Isotropic emitter: 4 pi sr times voxel volume.
                    power[c] += 4.0 * std::f64::consts::PI * rgb[c] * volume.voxel_volume();
                }
            }
        }
        let color = if hottest > 0.0 {
            blackbody_rgb(hottest, &settings.bins).unwrap_or([1.0; 3])
        } else {
            [1.0; 3]
        };
        let color_lum = luminance(color).max(1e-300);
        let total_power = luminance(power);
        // Lambertian sphere of radius r emits pi * L * 4 pi r^2.
        let target_radiance =
            total_power / (4.0 * std::f64::consts::PI.powi(2) * radius * radius).max(1e-300);
        let scale = target_radiance / color_lum;
        SphereLight {
            center: volume.occupied_centroid(),
            radius,
            intensity: [color[0] * scale, color[1] * scale, color[2] * scale],
        }
    }
}

/// Which light source illuminates the quads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitterKind {
    /// The fire volume itself.
    Volume,
    /// The configured spherical emitter; the volume is removed entirely.
    SphereBaseline,
}

/// A demo scene: the fire volume placement comes with the volume itself,
/// plus Lambertian quads and an optional baseline sphere.
#[derive(Debug, Clone)]
pub struct SceneDemo {
    pub quads: Vec<Quad>,
    pub emitter: EmitterKind,
    pub sphere: Option<SphereLight>,
}

impl SceneDemo {
    pub fn validate(&self) -> Result<()> {
        for (i, q) in self.quads.iter().enumerate() {
            if q.edge_u.cross(q.edge_v).norm() < 1e-12 {
                return Err(Error::Config(format!("quad {i} is degenerate")));
            }
            if q.albedo.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(Error::Config(format!(
                    "quad {i} albedo outside [0,1]: {:?}",
                    q.albedo
                )));
            }
        }
        if self.emitter == EmitterKind::SphereBaseline {
            let sphere = self
                .sphere
                .as_ref()
                .ok_or_else(|| Error::Config("baseline mode needs a sphere emitter".into()))?;
            if sphere.radius <= 0.0 {
                return Err(Error::Config("sphere radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Floor plus a small horizontal occluder under the flame: the canonical
    /// scene for the shadow-softness comparison.
    pub fn canonical_occluder(emitter: EmitterKind, sphere: Option<SphereLight>) -> Self {
        SceneDemo {
            quads: vec![
                // Floor on y = 0 spanning [-1.5, 1.5]^2, facing up.
                Quad {
                    corner: Vec3::new(-1.5, 0.0, -1.5),
                    edge_u: Vec3::new(3.0, 0.0, 0.0),
                    edge_v: Vec3::new(0.0, 0.0, 3.0),
                    albedo: [0.8, 0.8, 0.8],
                },
                // Occluder halfway between flame and floor.
                Quad {
                    corner: Vec3::new(-0.15, 0.3, -0.15),
                    edge_u: Vec3::new(0.3, 0.0, 0.0),
                    edge_v: Vec3::new(0.0, 0.0, 0.3),
                    albedo: [0.5, 0.5, 0.5],
                },
            ],
            emitter,
            sphere,
        }
    }
}

/// Emission coefficient of a voxel converted to linear RGB: kappa times the
/// black-body spectrum integrated against the color matching functions.
fn voxel_emission_rgb(temperature: f64, kappa: f64, settings: &RenderSettings) -> [f64; 3] {
    let spectrum: Vec<f64> = settings
        .bins
        .centers
        .iter()
        .map(|&l| kappa * planck_radiance_unchecked(temperature, l))
        .collect();
    spectrum_to_rgb(&spectrum, &settings.bins).expect("bin lengths match")
}

struct EmitterVoxel {
    center: Vec3,
    /// RGB radiant intensity, W/sr: emission coefficient times voxel volume.
    intensity: [f64; 3],
}

/// Render the demo scene. Surfaces receive direct light from the flame
/// (or the baseline sphere), estimated from `emitter_samples` stratified
/// samples per shade point; sample counts at or above the occupied voxel
/// count evaluate every voxel exactly.
pub fn render_scene_demo(
    scene: &SceneDemo,
    volume: &FireVolume,
    view: &CameraView,
    settings: &RenderSettings,
    emitter_samples: usize,
    seed: u64,
) -> Result<HdrImage> {
    if emitter_samples == 0 {
        return Err(Error::Config("emitter sample count must be >= 1".into()));
    }
    scene.validate()?;

    // Precompute the emitting voxels.
    let occupied = volume.temperature.occupied_indices();
    let emitters: Vec<EmitterVoxel> = occupied
        .iter()
        .map(|&i| {
            let t = volume.temperature.values[i];
            let kappa = settings.absorption.sigma_a * volume.density.values[i];
            let rgb = if kappa > 0.0 {
                voxel_emission_rgb(t, kappa, settings)
            } else {
                [0.0; 3]
            };
            EmitterVoxel {
                center: volume.voxel_center(i),
                intensity: [
                    rgb[0] * volume.voxel_volume(),
                    rgb[1] * volume.voxel_volume(),
                    rgb[2] * volume.voxel_volume(),
                ],
            }
        })
        .collect();

    let width = view.width;
    let pixels: Vec<[f64; 3]> = (0..view.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i as u32 % width, i as u32 / width);
            let ray = generate_ray_infallible(view, x, y);
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            shade_camera_ray(
                scene,
                volume,
                settings,
                &emitters,
                &ray,
                emitter_samples,
                &mut rng,
            )
        })
        .collect();
    HdrImage::from_pixels(view.width, view.height, pixels)
}

fn nearest_quad_hit(scene: &SceneDemo, ray: &Ray) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (qi, quad) in scene.quads.iter().enumerate() {
        if let Some(t) = quad.intersect(ray) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((qi, t));
            }
        }
    }
    best
}

fn shade_camera_ray(
    scene: &SceneDemo,
    volume: &FireVolume,
    settings: &RenderSettings,
    emitters: &[EmitterVoxel],
    ray: &Ray,
    emitter_samples: usize,
    rng: &mut ChaCha8Rng,
) -> [f64; 3] {
    let quad_hit = nearest_quad_hit(scene, ray);

    match scene.emitter {
        EmitterKind::Volume => {
            let cap = quad_hit.map(|(_, t)| t);
            let march = march_ray_with(
                volume,
                ray,
                &settings.bins,
                settings.step,
                &settings.absorption,
                settings.interpolation,
                cap,
            )
            .expect("positive step");
            let mut color =
                spectrum_to_rgb(&march.radiance, &settings.bins).expect("lengths match");
            if let Some((qi, t)) = quad_hit {
                let surface = shade_surface_from_volume(
                    scene,
                    volume,
                    settings,
                    emitters,
                    ray,
                    qi,
                    t,
                    emitter_samples,
                    rng,
                );
                for c in 0..3 {
                    color[c] += march.transmittance * surface[c];
                }
            }
            color
        }
        EmitterKind::SphereBaseline => {
            let sphere = scene.sphere.as_ref().expect("validated");
            let sphere_t = sphere.intersect(ray);
            match (quad_hit, sphere_t) {
                (Some((_, qt)), Some(st)) if st < qt => sphere.intensity,
                (None, Some(_)) => sphere.intensity,
                (Some((qi, t)), _) => {
                    shade_surface_from_sphere(scene, sphere, ray, qi, t, emitter_samples, rng)
                }
                (None, None) => [0.0; 3],
            }
        }
    }
}

/// Visibility against the scene quads, excluding the shaded quad itself
/// (its own plane cannot shadow points on it).
fn quad_visibility(scene: &SceneDemo, from_quad: usize, shadow: &Ray, dist: f64) -> bool {
    for (qi, quad) in scene.quads.iter().enumerate() {
        if qi == from_quad {
            continue;
        }
        if let Some(t) = quad.intersect(shadow) {
            if t < dist * (1.0 - 1e-9) {
                return false;
            }
        }
    }
    true
}

/// Stratified emitter indices over the occupied list with their stratum
/// weights; sample counts >= the list length enumerate everything.
fn stratified_indices(
    n_emitters: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, f64)> {
    if samples >= n_emitters {
        return (0..n_emitters).map(|i| (i, 1.0)).collect();
    }
    let mut picks = Vec::with_capacity(samples);
    for k in 0..samples {
        let lo = k * n_emitters / samples;
        let hi = (k + 1) * n_emitters / samples;
        if hi > lo {
            let idx = rng.gen_range(lo..hi);
            picks.push((idx, (hi - lo) as f64));
        }
    }
    picks
}

#[allow(clippy::too_many_arguments)]
fn shade_surface_from_volume(
    scene: &SceneDemo,
    volume: &FireVolume,
    settings: &RenderSettings,
    emitters: &[EmitterVoxel],
    ray: &Ray,
    quad_index: usize,
    t_hit: f64,
    emitter_samples: usize,
    rng: &mut ChaCha8Rng,
) -> [f64; 3] {
    if emitters.is_empty() {
        return [0.0; 3];
    }
    let quad = &scene.quads[quad_index];
    let p = ray.at(t_hit);
    let mut normal = quad.normal();
    if normal.dot(ray.direction) > 0.0 {
        normal = -normal;
    }

    let mut irradiance = [0.0f64; 3];
    for (idx, weight) in stratified_indices(emitters.len(), emitter_samples, rng) {
        let em = &emitters[idx];
        let to_light = em.center - p;
        let dist2 = to_light.dot(to_light);
        let dist = dist2.sqrt();
        if dist < 1e-12 {
            continue;
        }
        let w = to_light.scale(1.0 / dist);
        let cos_theta = normal.dot(w);
        if cos_theta <= 0.0 {
            continue;
        }
        let shadow = Ray {
            origin: p + normal.scale(1e-9 * dist.max(1.0)),
            direction: w,
        };
        if !quad_visibility(scene, quad_index, &shadow, dist) {
            continue;
        }
        let transmittance =
            march_transmittance(volume, &shadow, settings.step, &settings.absorption, dist);
        let geom = weight * cos_theta * transmittance / dist2;
        for (acc, value) in irradiance.iter_mut().zip(em.intensity) {
            *acc += value * geom;
        }
    }

    let inv_pi = std::f64::consts::FRAC_1_PI;
    [
        quad.albedo[0] * inv_pi * irradiance[0],
        quad.albedo[1] * inv_pi * irradiance[1],
        quad.albedo[2] * inv_pi * irradiance[2],
    ]
}

fn shade_surface_from_sphere(
    scene: &SceneDemo,
    sphere: &SphereLight,
    ray: &Ray,
    quad_index: usize,
    t_hit: f64,
    emitter_samples: usize,
    rng: &mut ChaCha8Rng,
) -> [f64; 3] {
    let quad = &scene.quads[quad_index];
    let p = ray.at(t_hit);
    let mut normal = quad.normal();
    if normal.dot(ray.direction) > 0.0 {
        normal = -normal;
    }

    let area = 4.0 * std::f64::consts::PI * sphere.radius * sphere.radius;
    let mut irradiance = [0.0f64; 3];
    for _ in 0..emitter_samples {
        // Uniform point on the sphere surface.
        let z: f64 = 1.0 - 2.0 * rng.gen::<f64>();
        let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
        let r_xy = (1.0 - z * z).max(0.0).sqrt();
        let n_q = Vec3::new(r_xy * phi.cos(), z, r_xy * phi.sin());
        let q = sphere.center + n_q.scale(sphere.radius);

        let to_light = q - p;
        let dist2 = to_light.dot(to_light);
        let dist = dist2.sqrt();
        if dist < 1e-12 {
            continue;
        }
        let w = to_light.scale(1.0 / dist);
        let cos_p = normal.dot(w);
        let cos_q = n_q.dot(-w);
        if cos_p <= 0.0 || cos_q <= 0.0 {
            continue;
        }
        let shadow = Ray {
            origin: p + normal.scale(1e-9 * dist.max(1.0)),
            direction: w,
        };
        if !quad_visibility(scene, quad_index, &shadow, dist) {
            continue;
        }
        let geom = cos_p * cos_q / dist2;
        for (acc, value) in irradiance.iter_mut().zip(sphere.intensity) {
            *acc += value * geom;
        }
    }
    let scale = area / emitter_samples as f64;
    let inv_pi = std::f64::consts::FRAC_1_PI;
    [
        quad.albedo[0] * inv_pi * irradiance[0] * scale,
        quad.albedo[1] * inv_pi * irradiance[1] * scale,
        quad.albedo[2] * inv_pi * irradiance[2] * scale,
    ]
}

/// Mean gradient magnitude over shadow-edge pixels of the luminance image,
/// after normalizing by the maximum luminance. Edge pixels are those whose
/// central-difference gradient magnitude exceeds `edge_threshold` (on the
/// normalized scale). Returns 0 when nothing qualifies.
pub fn mean_shadow_edge_gradient(img: &HdrImage, edge_threshold: f64) -> f64 {
    let (w, h) = (img.width as usize, img.height as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let lum: Vec<f64> = img.pixels.iter().map(|p| luminance(*p)).collect();
    let max = lum.iter().fold(0.0f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (lum[y * w + x + 1] - lum[y * w + x - 1]) / (2.0 * max);
            let gy = (lum[(y + 1) * w + x] - lum[(y - 1) * w + x]) / (2.0 * max);
            let g = (gx * gx + gy * gy).sqrt();
            if g > edge_threshold {
                sum += g;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

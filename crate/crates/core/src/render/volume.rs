//! Paired temperature and density fields with world placement.

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::radiometry::PhysicalRanges;
use crate::voxelgrid::{decode_index, GridDims, VoxelGrid3, AMBIENT_TEMPERATURE};

/// Temperature (K) and fuel density (particles/m^3) grids sharing dims and
/// occupancy, placed in world space by the grid-corner origin and the voxel
/// edge length in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FireVolume {
    pub temperature: VoxelGrid3,
    pub density: VoxelGrid3,
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl FireVolume {
    pub fn new(
        temperature: VoxelGrid3,
        density: VoxelGrid3,
        voxel_size: f64,
        origin: Vec3,
    ) -> Result<Self> {
        if temperature.dims != density.dims {
            return Err(Error::Shape(format!(
                "temperature dims {:?} do not match density dims {:?}",
                temperature.dims, density.dims
            )));
        }
        if temperature.occupied != density.occupied {
            return Err(Error::Shape(
                "temperature and density grids must share the occupancy mask".into(),
            ));
        }
        if voxel_size <= 0.0 || !voxel_size.is_finite() {
            return Err(Error::Config(format!(
                "voxel edge length must be positive, got {voxel_size}"
            )));
        }
        Ok(FireVolume {
            temperature,
            density,
            voxel_size,
            origin,
        })
    }

    /// Empty volume (no occupied voxels) of the given shape.
    pub fn empty(dims: GridDims, voxel_size: f64, origin: Vec3) -> Result<Self> {
        Self::new(
            VoxelGrid3::empty(dims, AMBIENT_TEMPERATURE),
            VoxelGrid3::empty(dims, 0.0),
            voxel_size,
            origin,
        )
    }

    pub fn dims(&self) -> GridDims {
        self.temperature.dims
    }

    /// World-space bounding box of the whole grid.
    pub fn bounds(&self) -> Aabb {
        let d = self.dims();
        Aabb {
            min: self.origin,
            max: self.origin
                + Vec3::new(
                    d.nx as f64 * self.voxel_size,
                    d.ny as f64 * self.voxel_size,
                    d.nz as f64 * self.voxel_size,
                ),
        }
    }

    /// Check every occupied voxel against the physical parameter ranges.
    pub fn validate_ranges(&self, ranges: &PhysicalRanges) -> Result<()> {
        for (i, (&t, &d)) in self
            .temperature
            .values
            .iter()
            .zip(self.density.values.iter())
            .enumerate()
        {
            if !self.temperature.occupied[i] {
                continue;
            }
            if t < ranges.t_min || t > ranges.t_max {
                return Err(Error::Domain(format!(
                    "voxel {i} temperature {t} outside [{}, {}]",
                    ranges.t_min, ranges.t_max
                )));
            }
            if d < 0.0 || d > ranges.d_max {
                return Err(Error::Domain(format!(
                    "voxel {i} density {d} outside [0, {}]",
                    ranges.d_max
                )));
            }
        }
        Ok(())
    }

    /// Grid coordinates of the cell containing world point `p`, if inside.
    pub fn cell_of(&self, p: Vec3) -> Option<(usize, usize, usize)> {
        let q = (p - self.origin).scale(1.0 / self.voxel_size);
        let d = self.dims();
        let (x, y, z) = (q.x.floor(), q.y.floor(), q.z.floor());
        if x < 0.0 || y < 0.0 || z < 0.0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        if x >= d.nx || y >= d.ny || z >= d.nz {
            return None;
        }
        Some((x, y, z))
    }

    /// Nearest-voxel (temperature, density) lookup; points outside the grid
    /// or over unoccupied voxels read as ambient temperature and vacuum.
    pub fn sample_nearest(&self, p: Vec3) -> (f64, f64) {
        match self.cell_of(p) {
            Some((x, y, z)) => {
                let d = self.dims();
                let idx = y + d.ny * (z + d.nz * x);
                if self.temperature.occupied[idx] {
                    (self.temperature.values[idx], self.density.values[idx])
                } else {
                    (AMBIENT_TEMPERATURE, 0.0)
                }
            }
            None => (AMBIENT_TEMPERATURE, 0.0),
        }
    }

    /// Trilinear (temperature, density) lookup over voxel centers; out-of-grid
    /// and unoccupied corners contribute ambient/vacuum values.
    pub fn sample_trilinear(&self, p: Vec3) -> (f64, f64) {
        let d = self.dims();
        let q = (p - self.origin).scale(1.0 / self.voxel_size) - Vec3::new(0.5, 0.5, 0.5);
        let (fx, fy, fz) = (q.x.floor(), q.y.floor(), q.z.floor());
        let (wx, wy, wz) = (q.x - fx, q.y - fy, q.z - fz);
        let mut temp = 0.0;
        let mut dens = 0.0;
        for corner in 0..8 {
            let (cx, cy, cz) = (
                fx as i64 + (corner & 1),
                fy as i64 + ((corner >> 1) & 1),
                fz as i64 + ((corner >> 2) & 1),
            );
            let w = (if corner & 1 == 1 { wx } else { 1.0 - wx })
                * (if (corner >> 1) & 1 == 1 { wy } else { 1.0 - wy })
                * (if (corner >> 2) & 1 == 1 { wz } else { 1.0 - wz });
            let (t, rho) = if d.contains(cx, cy, cz) {
                let idx = cy as usize + d.ny * (cz as usize + d.nz * cx as usize);
                if self.temperature.occupied[idx] {
                    (self.temperature.values[idx], self.density.values[idx])
                } else {
                    (AMBIENT_TEMPERATURE, 0.0)
                }
            } else {
                (AMBIENT_TEMPERATURE, 0.0)
            };
            temp += w * t;
            dens += w * rho;
        }
        (temp, dens)
    }

    /// World-space center of the voxel with the given flat index.
    pub fn voxel_center(&self, flat: usize) -> Vec3 {
        let (x, y, z) = decode_index(flat, &self.dims()).expect("flat index in range");
        self.origin
            + Vec3::new(
                (x as f64 + 0.5) * self.voxel_size,
                (y as f64 + 0.5) * self.voxel_size,
                (z as f64 + 0.5) * self.voxel_size,
            )
    }

    /// Centroid of the occupied voxel centers; grid center when empty.
    pub fn occupied_centroid(&self) -> Vec3 {
        let occ = self.temperature.occupied_indices();
        if occ.is_empty() {
            let b = self.bounds();
            return (b.min + b.max).scale(0.5);
        }
        let mut sum = Vec3::ZERO;
        for &i in occ.iter() {
            sum = sum + self.voxel_center(i);
        }
        sum.scale(1.0 / occ.len() as f64)
    }

    /// Volume of one voxel, m^3.
    pub fn voxel_volume(&self) -> f64 {
        self.voxel_size * self.voxel_size * self.voxel_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxelgrid::linear_index;

    fn small_volume() -> FireVolume {
        let dims = GridDims::cube(4).unwrap();
        let mut occ = vec![false; dims.total()];
        let idx = linear_index(1, 2, 3, &dims).unwrap();
        occ[idx] = true;
        let mut t = VoxelGrid3::with_occupancy(dims, occ.clone(), AMBIENT_TEMPERATURE).unwrap();
        let mut d = VoxelGrid3::with_occupancy(dims, occ, 0.0).unwrap();
        t.set(idx, 1500.0);
        d.set(idx, 2e27);
        FireVolume::new(t, d, 0.1, Vec3::ZERO).unwrap()
    }

    #[test]
    fn nearest_lookup_inside_occupied_cell() {
        let v = small_volume();
        // Center of voxel (1,2,3).
        let p = Vec3::new(0.15, 0.25, 0.35);
        assert_eq!(v.sample_nearest(p), (1500.0, 2e27));
        // Off-center but same cell.
        let p2 = Vec3::new(0.19, 0.21, 0.39);
        assert_eq!(v.sample_nearest(p2), (1500.0, 2e27));
    }

    #[test]
    fn nearest_lookup_outside_and_unoccupied() {
        let v = small_volume();
        assert_eq!(v.sample_nearest(Vec3::new(-1.0, 0.0, 0.0)), (300.0, 0.0));
        assert_eq!(v.sample_nearest(Vec3::new(0.05, 0.05, 0.05)), (300.0, 0.0));
    }

    #[test]
    fn trilinear_matches_nearest_at_voxel_center() {
        let v = small_volume();
        let idx = linear_index(1, 2, 3, &v.dims()).unwrap();
        let c = v.voxel_center(idx);
        let (t, d) = v.sample_trilinear(c);
        // All interpolation weight sits on the voxel itself up to rounding
        // of the center coordinates.
        assert!((t - 1500.0).abs() / 1500.0 < 1e-12);
        assert!((d - 2e27).abs() / 2e27 < 1e-12);
    }

    #[test]
    fn mismatched_occupancy_rejected() {
        let dims = GridDims::cube(2).unwrap();
        let mut occ = vec![false; dims.total()];
        occ[0] = true;
        let t = VoxelGrid3::with_occupancy(dims, occ, AMBIENT_TEMPERATURE).unwrap();
        let d = VoxelGrid3::empty(dims, 0.0);
        assert!(FireVolume::new(t, d, 0.1, Vec3::ZERO).is_err());
    }

    #[test]
    fn range_validation() {
        let mut v = small_volume();
        assert!(v.validate_ranges(&PhysicalRanges::default()).is_ok());
        let idx = linear_index(1, 2, 3, &v.dims()).unwrap();
        v.temperature.set(idx, 5000.0);
        assert!(v.validate_ranges(&PhysicalRanges::default()).is_err());
    }
}

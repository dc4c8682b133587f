//! Dense 3D scalar fields with an occupancy mask, yzx linear indexing,
//! 18-neighborhoods, and the hierarchical cluster partition used by the
//! optimizer.
//!
//! Voxels are flattened with y as the fastest axis, then z, then x
//! (`idx = y + ny * (z + nz * x)`), which keeps vertical columns contiguous.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ambient temperature assigned to unoccupied voxels, in Kelvin.
pub const AMBIENT_TEMPERATURE: f64 = 300.0;

/// Default occupancy threshold on the normalized max channel of an RGB
/// volume; voxels below it are treated as empty.
pub const DEFAULT_SPARSE_THRESHOLD: f64 = 0.01;

/// Voxel counts per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Config(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        Ok(GridDims { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn total(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }
}

/// Flat index of voxel (x, y, z): y is the fastest axis, then z, then x.
pub fn linear_index(x: usize, y: usize, z: usize, dims: &GridDims) -> Result<usize> {
    if x >= dims.nx || y >= dims.ny || z >= dims.nz {
        return Err(Error::Index(format!(
            "voxel ({x},{y},{z}) out of range for {}x{}x{} grid",
            dims.nx, dims.ny, dims.nz
        )));
    }
    Ok(y + dims.ny * (z + dims.nz * x))
}

/// Inverse of [`linear_index`].
pub fn decode_index(index: usize, dims: &GridDims) -> Result<(usize, usize, usize)> {
    if index >= dims.total() {
        return Err(Error::Index(format!(
            "flat index {index} out of range for {} voxels",
            dims.total()
        )));
    }
    let y = index % dims.ny;
    let rest = index / dims.ny;
    let z = rest % dims.nz;
    let x = rest / dims.nz;
    Ok((x, y, z))
}

/// The 18 offsets at Chebyshev distance 1 and Manhattan distance <= 2:
/// 6 face neighbors plus 12 edge neighbors (corners excluded).
pub const NEIGHBOR18_OFFSETS: [(i64, i64, i64); 18] = [
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
    (-1, -1, 0),
    (-1, 1, 0),
    (1, -1, 0),
    (1, 1, 0),
    (-1, 0, -1),
    (-1, 0, 1),
    (1, 0, -1),
    (1, 0, 1),
    (0, -1, -1),
    (0, -1, 1),
    (0, 1, -1),
    (0, 1, 1),
];

/// Flat indices of the in-bounds 18-neighborhood of `index`. Boundary voxels
/// return the in-bounds subset only; no renormalization happens downstream.
pub fn neighbors18(index: usize, dims: &GridDims) -> Result<Vec<usize>> {
    let (x, y, z) = decode_index(index, dims)?;
    let mut out = Vec::with_capacity(18);
    for &(dx, dy, dz) in NEIGHBOR18_OFFSETS.iter() {
        let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
        if dims.contains(nx, ny, nz) {
            out.push(
                linear_index(nx as usize, ny as usize, nz as usize, dims)
                    .expect("offset checked in bounds"),
            );
        }
    }
    Ok(out)
}

/// Dense scalar field over a grid with an occupancy mask. Unoccupied voxels
/// carry the field's designated empty value (0 for densities, ambient 300 K
/// for temperatures).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid3 {
    pub dims: GridDims,
    pub values: Vec<f64>,
    pub occupied: Vec<bool>,
    empty_value: f64,
}

impl VoxelGrid3 {
    /// Grid filled with `empty_value` everywhere and no occupied voxels.
    pub fn empty(dims: GridDims, empty_value: f64) -> Self {
        let total = dims.total();
        VoxelGrid3 {
            dims,
            values: vec![empty_value; total],
            occupied: vec![false; total],
            empty_value,
        }
    }

    /// Grid with the given occupancy mask; occupied voxels start at
    /// `empty_value` too until written.
    pub fn with_occupancy(dims: GridDims, occupied: Vec<bool>, empty_value: f64) -> Result<Self> {
        if occupied.len() != dims.total() {
            return Err(Error::Shape(format!(
                "occupancy mask length {} does not match {} voxels",
                occupied.len(),
                dims.total()
            )));
        }
        let total = dims.total();
        Ok(VoxelGrid3 {
            dims,
            values: vec![empty_value; total],
            occupied,
            empty_value,
        })
    }

    pub fn empty_value(&self) -> f64 {
        self.empty_value
    }

    /// Write a value; unoccupied voxels are forced back to the empty value.
    pub fn set(&mut self, index: usize, value: f64) {
        self.values[index] = if self.occupied[index] {
            value
        } else {
            self.empty_value
        };
    }

    /// Flat indices of occupied voxels in ascending (yzx) order.
    pub fn occupied_indices(&self) -> Vec<usize> {
        self.occupied
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| if o { Some(i) } else { None })
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}

/// Three VoxelGrid3-shaped channels in [0, 1] after normalization.
#[derive(Debug, Clone)]
pub struct RgbVolume {
    pub dims: GridDims,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
}

impl RgbVolume {
    /// Build from raw channels, normalizing so the global max channel value
    /// is 1 (channels of an all-zero volume are left at zero).
    pub fn new(dims: GridDims, mut r: Vec<f64>, mut g: Vec<f64>, mut b: Vec<f64>) -> Result<Self> {
        let total = dims.total();
        if r.len() != total || g.len() != total || b.len() != total {
            return Err(Error::Shape(format!(
                "rgb channel lengths {}/{}/{} do not match {} voxels",
                r.len(),
                g.len(),
                b.len(),
                total
            )));
        }
        let max = r
            .iter()
            .chain(g.iter())
            .chain(b.iter())
            .fold(0.0f64, |m, &v| m.max(v));
        if max > 0.0 {
            for v in r.iter_mut().chain(g.iter_mut()).chain(b.iter_mut()) {
                *v /= max;
            }
        }
        Ok(RgbVolume { dims, r, g, b })
    }

    pub fn max_channel(&self, index: usize) -> f64 {
        self.r[index].max(self.g[index]).max(self.b[index])
    }
}

/// Voxel occupied iff its max channel reaches the threshold. The mask is
/// shared by all fields of the flame.
pub fn apply_sparse_threshold(rgb: &RgbVolume, threshold: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "sparse threshold must be in [0,1], got {threshold}"
        )));
    }
    Ok((0..rgb.dims.total())
        .map(|i| rgb.max_channel(i) >= threshold)
        .collect())
}

/// Hierarchical partition of the occupied voxels into contiguous runs of the
/// yzx-ordered occupied index list. Cluster count doubles per refinement
/// level until it saturates at the occupied voxel count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    /// Refinement level, 0 at initialization.
    pub level: u32,
    /// Cluster index per occupied voxel (position in the occupied list).
    pub assignment: Vec<u32>,
    /// Number of clusters at this level.
    pub count: usize,
    /// Half-open member ranges into the occupied list, one per cluster.
    offsets: Vec<usize>,
}

impl ClusterMap {
    /// Level-0 map: two clusters splitting the ordered occupied list at the
    /// midpoint, first half rounded up (a single voxel yields one cluster).
    pub fn init(occupied_count: usize) -> Result<Self> {
        if occupied_count == 0 {
            return Err(Error::Config(
                "no occupied voxels: nothing to optimize".into(),
            ));
        }
        let first = occupied_count.div_ceil(2);
        let offsets = if first == occupied_count {
            vec![0, occupied_count]
        } else {
            vec![0, first, occupied_count]
        };
        Ok(Self::from_offsets(0, offsets))
    }

    /// Degenerate map with one singleton cluster per occupied voxel. Used by
    /// the clustering ablation.
    pub fn singletons(occupied_count: usize) -> Result<Self> {
        if occupied_count == 0 {
            return Err(Error::Config(
                "no occupied voxels: nothing to optimize".into(),
            ));
        }
        Ok(Self::from_offsets(0, (0..=occupied_count).collect()))
    }

    /// Coarsest possible map: one cluster covering every occupied voxel.
    pub fn single(occupied_count: usize) -> Result<Self> {
        if occupied_count == 0 {
            return Err(Error::Config(
                "no occupied voxels: nothing to optimize".into(),
            ));
        }
        Ok(Self::from_offsets(0, vec![0, occupied_count]))
    }

    fn from_offsets(level: u32, offsets: Vec<usize>) -> Self {
        let count = offsets.len() - 1;
        let n = *offsets.last().expect("non-empty offsets");
        let mut assignment = vec![0u32; n];
        for c in 0..count {
            for slot in assignment
                .iter_mut()
                .take(offsets[c + 1])
                .skip(offsets[c])
            {
                *slot = c as u32;
            }
        }
        ClusterMap {
            level,
            assignment,
            count,
            offsets,
        }
    }

    /// Double the cluster resolution: each parent splits into two contiguous
    /// halves (first half rounded up). Saturated maps are returned unchanged.
    pub fn refine(&self) -> Self {
        let n = self.occupied_len();
        if self.count == n {
            return self.clone();
        }
        let mut offsets = Vec::with_capacity(2 * self.count + 1);
        offsets.push(0);
        for c in 0..self.count {
            let (a, b) = (self.offsets[c], self.offsets[c + 1]);
            let size = b - a;
            let first = size.div_ceil(2);
            if first < size {
                offsets.push(a + first);
            }
            offsets.push(b);
        }
        Self::from_offsets(self.level + 1, offsets)
    }

    pub fn occupied_len(&self) -> usize {
        self.assignment.len()
    }

    /// Member range into the occupied list for cluster `c`.
    pub fn members(&self, c: usize) -> std::ops::Range<usize> {
        self.offsets[c]..self.offsets[c + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(n: usize) -> GridDims {
        GridDims::cube(n).unwrap()
    }

    #[test]
    fn linear_index_stated_examples() {
        let d = dims(4);
        assert_eq!(linear_index(0, 0, 0, &d).unwrap(), 0);
        assert_eq!(linear_index(0, 1, 0, &d).unwrap(), 1);
        assert_eq!(linear_index(1, 0, 0, &d).unwrap(), 16);
    }

    #[test]
    fn linear_index_rejects_out_of_range() {
        let d = dims(4);
        assert!(linear_index(4, 0, 0, &d).is_err());
        assert!(linear_index(0, 0, 4, &d).is_err());
    }

    #[test]
    fn linear_index_bijective_small_grids() {
        // Exhaustive decode-encode identity for all dims up to 16 cubed,
        // including non-cubic shapes.
        for (nx, ny, nz) in [(16, 16, 16), (3, 5, 7), (1, 1, 1), (2, 16, 4)] {
            let d = GridDims::new(nx, ny, nz).unwrap();
            for i in 0..d.total() {
                let (x, y, z) = decode_index(i, &d).unwrap();
                assert_eq!(linear_index(x, y, z, &d).unwrap(), i);
            }
        }
    }

    #[test]
    fn neighbors18_interior_count() {
        let d = dims(8);
        let idx = linear_index(4, 4, 4, &d).unwrap();
        assert_eq!(neighbors18(idx, &d).unwrap().len(), 18);
    }

    #[test]
    fn neighbors18_corner_count() {
        // Independent enumeration oracle: count the 18 offsets that stay in
        // bounds at the corner. Of the 6 face offsets 3 survive, of the 12
        // edge offsets the 3 with both steps positive survive, giving 6.
        let d = dims(8);
        let oracle = NEIGHBOR18_OFFSETS
            .iter()
            .filter(|(dx, dy, dz)| d.contains(*dx, *dy, *dz))
            .count();
        assert_eq!(oracle, 6);
        let idx = linear_index(0, 0, 0, &d).unwrap();
        assert_eq!(neighbors18(idx, &d).unwrap().len(), oracle);
    }

    #[test]
    fn neighbors18_edge_voxel_count() {
        // A voxel on a grid edge (two coordinates at the boundary) keeps 9
        // of the 18 offsets.
        let d = dims(8);
        let idx = linear_index(0, 0, 4, &d).unwrap();
        assert_eq!(neighbors18(idx, &d).unwrap().len(), 9);
    }

    #[test]
    fn neighbors18_single_voxel_grid() {
        let d = dims(1);
        assert!(neighbors18(0, &d).unwrap().is_empty());
    }

    #[test]
    fn neighbors18_symmetry() {
        let d = GridDims::new(4, 3, 5).unwrap();
        for i in 0..d.total() {
            for j in neighbors18(i, &d).unwrap() {
                assert!(
                    neighbors18(j, &d).unwrap().contains(&i),
                    "asymmetric neighborhood between {i} and {j}"
                );
            }
        }
    }

    #[test]
    fn sparse_threshold_examples() {
        let d = dims(4);
        let n = d.total();
        let zero = RgbVolume::new(d, vec![0.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
        assert_eq!(
            apply_sparse_threshold(&zero, 0.01)
                .unwrap()
                .iter()
                .filter(|&&o| o)
                .count(),
            0
        );

        let one = RgbVolume::new(d, vec![1.0; n], vec![1.0; n], vec![1.0; n]).unwrap();
        assert_eq!(
            apply_sparse_threshold(&one, 0.01)
                .unwrap()
                .iter()
                .filter(|&&o| o)
                .count(),
            n
        );

        let mut r = vec![0.0; n];
        r[5] = 0.5;
        let single = RgbVolume::new(d, r, vec![0.0; n], vec![0.0; n]).unwrap();
        let mask = apply_sparse_threshold(&single, 0.01).unwrap();
        assert!(mask[5]);
        assert_eq!(mask.iter().filter(|&&o| o).count(), 1);
    }

    #[test]
    fn sparse_threshold_rejects_out_of_range() {
        let d = dims(2);
        let n = d.total();
        let v = RgbVolume::new(d, vec![0.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
        assert!(apply_sparse_threshold(&v, -0.1).is_err());
        assert!(apply_sparse_threshold(&v, 1.5).is_err());
    }

    fn cluster_sizes(map: &ClusterMap) -> Vec<usize> {
        (0..map.count).map(|c| map.members(c).len()).collect()
    }

    #[test]
    fn init_clusters_examples() {
        assert_eq!(cluster_sizes(&ClusterMap::init(10).unwrap()), vec![5, 5]);
        assert_eq!(cluster_sizes(&ClusterMap::init(1).unwrap()), vec![1]);
        assert_eq!(cluster_sizes(&ClusterMap::init(7).unwrap()), vec![4, 3]);
    }

    #[test]
    fn init_clusters_empty_errors() {
        assert!(ClusterMap::init(0).is_err());
    }

    #[test]
    fn refine_doubles_and_saturates() {
        let m0 = ClusterMap::init(64).unwrap();
        let m1 = m0.refine();
        assert_eq!(m1.count, 4);
        assert_eq!(cluster_sizes(&m1), vec![16, 16, 16, 16]);

        // Saturated map refines to itself.
        let mut m = ClusterMap::init(6).unwrap();
        while m.count < 6 {
            m = m.refine();
        }
        assert_eq!(m.refine(), m);
    }

    #[test]
    fn refine_twice_over_six_voxels_gives_singletons() {
        let m = ClusterMap::init(6).unwrap().refine().refine();
        assert_eq!(m.count, 6);
        assert_eq!(cluster_sizes(&m), vec![1; 6]);
    }

    proptest! {
        #[test]
        fn cluster_partition_covers_every_voxel(n in 1usize..500) {
            let mut map = ClusterMap::init(n).unwrap();
            let mut counts = Vec::new();
            for _ in 0..12 {
                prop_assert_eq!(map.count, map.count.min(n));
                prop_assert_eq!(map.assignment.len(), n);
                // Every occupied voxel appears in exactly one member range.
                let mut seen = vec![false; n];
                for c in 0..map.count {
                    for i in map.members(c) {
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                        prop_assert_eq!(map.assignment[i], c as u32);
                    }
                }
                prop_assert!(seen.iter().all(|&s| s));
                // Contiguous-run sizes differ by at most one.
                let sizes = cluster_sizes(&map);
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
                counts.push(map.count);
                map = map.refine();
            }
            // Monotone saturation: non-decreasing, eventually constant at n.
            prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*counts.last().unwrap(), n);
        }

        #[test]
        fn refine_count_doubles_until_saturation(n in 1usize..500) {
            let map = ClusterMap::init(n).unwrap();
            let refined = map.refine();
            prop_assert_eq!(refined.count, (2 * map.count).min(n));
        }

        #[test]
        fn children_partition_parent(n in 2usize..300) {
            let map = ClusterMap::init(n).unwrap();
            let refined = map.refine();
            for c in 0..map.count {
                let parent: Vec<usize> = map.members(c).collect();
                let mut children: Vec<usize> = (0..refined.count)
                    .filter(|&cc| {
                        let r = refined.members(cc);
                        r.start >= map.members(c).start && r.end <= map.members(c).end
                    })
                    .flat_map(|cc| refined.members(cc))
                    .collect();
                children.sort_unstable();
                prop_assert_eq!(parent, children);
            }
        }
    }
}

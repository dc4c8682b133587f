//! FVOL volume files: magic `FVOL`, four little-endian u32 (nx, ny, nz,
//! channel count), one f32 voxel edge length in meters, then per channel
//! nx*ny*nz little-endian f32 values in yzx order.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::render::FireVolume;
use crate::voxelgrid::{GridDims, RgbVolume, VoxelGrid3, AMBIENT_TEMPERATURE};
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"FVOL";

/// Decoded FVOL payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FvolData {
    pub dims: GridDims,
    pub voxel_size: f32,
    pub channels: Vec<Vec<f32>>,
}

pub fn encode_fvol(data: &FvolData) -> Result<Vec<u8>> {
    let total = data.dims.total();
    for (i, c) in data.channels.iter().enumerate() {
        if c.len() != total {
            return Err(Error::Shape(format!(
                "channel {i} holds {} values, expected {total}",
                c.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(4 + 4 * 4 + 4 + 4 * total * data.channels.len());
    out.extend_from_slice(MAGIC);
    for v in [
        data.dims.nx as u32,
        data.dims.ny as u32,
        data.dims.nz as u32,
        data.channels.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&data.voxel_size.to_le_bytes());
    for channel in data.channels.iter() {
        for value in channel.iter() {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_fvol(bytes: &[u8]) -> Result<FvolData> {
    if bytes.len() < 24 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("not an FVOL file (bad magic)".into()));
    }
    let u32_at = |off: usize| -> u32 {
        u32::from_le_bytes(bytes[off..off + 4].try_into().expect("bounds checked"))
    };
    let (nx, ny, nz, nc) = (
        u32_at(4) as usize,
        u32_at(8) as usize,
        u32_at(12) as usize,
        u32_at(16) as usize,
    );
    let dims = GridDims::new(nx, ny, nz)
        .map_err(|_| Error::Format(format!("invalid dimensions {nx}x{ny}x{nz}")))?;
    let voxel_size = f32::from_le_bytes(bytes[20..24].try_into().expect("bounds checked"));
    if !voxel_size.is_finite() || voxel_size <= 0.0 {
        return Err(Error::Format(format!(
            "voxel edge length must be positive, got {voxel_size}"
        )));
    }
    let total = dims.total();
    let expected = 24 + 4 * total * nc;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut channels = Vec::with_capacity(nc);
    let mut off = 24;
    for _ in 0..nc {
        let mut channel = Vec::with_capacity(total);
        for _ in 0..total {
            channel.push(f32::from_le_bytes(
                bytes[off..off + 4].try_into().expect("bounds checked"),
            ));
            off += 4;
        }
        channels.push(channel);
    }
    Ok(FvolData {
        dims,
        voxel_size,
        channels,
    })
}

pub fn write_fvol(path: &Path, data: &FvolData) -> Result<()> {
    std::fs::write(path, encode_fvol(data)?)?;
    Ok(())
}

pub fn read_fvol(path: &Path) -> Result<FvolData> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|source| Error::MissingFile {
            path: path.to_path_buf(),
            source,
        })?
        .read_to_end(&mut bytes)?;
    decode_fvol(&bytes)
}

/// Temperature + density channels of a fire volume.
pub fn fire_volume_to_fvol(volume: &FireVolume) -> FvolData {
    FvolData {
        dims: volume.dims(),
        voxel_size: volume.voxel_size as f32,
        channels: vec![
            volume.temperature.values.iter().map(|&v| v as f32).collect(),
            volume.density.values.iter().map(|&v| v as f32).collect(),
        ],
    }
}

/// Rebuild a fire volume from a 2-channel FVOL; occupancy is recovered as
/// density > 0 (unoccupied voxels are written with zero density).
pub fn fire_volume_from_fvol(data: &FvolData, origin: Vec3) -> Result<FireVolume> {
    if data.channels.len() != 2 {
        return Err(Error::Format(format!(
            "fire volumes carry 2 channels (temperature, density), found {}",
            data.channels.len()
        )));
    }
    let occupied: Vec<bool> = data.channels[1].iter().map(|&d| d > 0.0).collect();
    let mut temperature =
        VoxelGrid3::with_occupancy(data.dims, occupied.clone(), AMBIENT_TEMPERATURE)?;
    let mut density = VoxelGrid3::with_occupancy(data.dims, occupied, 0.0)?;
    for i in 0..data.dims.total() {
        temperature.set(i, data.channels[0][i] as f64);
        density.set(i, data.channels[1][i] as f64);
    }
    FireVolume::new(temperature, density, data.voxel_size as f64, origin)
}

pub fn rgb_volume_to_fvol(rgb: &RgbVolume, voxel_size: f64) -> FvolData {
    FvolData {
        dims: rgb.dims,
        voxel_size: voxel_size as f32,
        channels: vec![
            rgb.r.iter().map(|&v| v as f32).collect(),
            rgb.g.iter().map(|&v| v as f32).collect(),
            rgb.b.iter().map(|&v| v as f32).collect(),
        ],
    }
}

/// RGB volume (3 channels) plus its voxel size; values are re-normalized by
/// the volume constructor.
pub fn rgb_volume_from_fvol(data: &FvolData) -> Result<(RgbVolume, f64)> {
    if data.channels.len() != 3 {
        return Err(Error::Format(format!(
            "rgb volumes carry 3 channels, found {}",
            data.channels.len()
        )));
    }
    let to64 = |c: &Vec<f32>| c.iter().map(|&v| v as f64).collect();
    let rgb = RgbVolume::new(
        data.dims,
        to64(&data.channels[0]),
        to64(&data.channels[1]),
        to64(&data.channels[2]),
    )?;
    Ok((rgb, data.voxel_size as f64))
}

/// Temperature snapshots as one FVOL with a channel per iteration.
pub fn snapshots_to_fvol(dims: GridDims, voxel_size: f64, snapshots: &[Vec<f64>]) -> FvolData {
    FvolData {
        dims,
        voxel_size: voxel_size as f32,
        channels: snapshots
            .iter()
            .map(|s| s.iter().map(|&v| v as f32).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_bytes_identical() {
        let dims = GridDims::new(3, 4, 5).unwrap();
        let total = dims.total();
        let data = FvolData {
            dims,
            voxel_size: 0.01,
            channels: vec![
                (0..total).map(|i| i as f32 * 0.5).collect(),
                (0..total).map(|i| (i as f32).sin()).collect(),
            ],
        };
        let bytes = encode_fvol(&data).unwrap();
        let decoded = decode_fvol(&bytes).unwrap();
        assert_eq!(decoded, data);
        let bytes2 = encode_fvol(&decoded).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dims = GridDims::new(2, 2, 2).unwrap();
        let data = FvolData {
            dims,
            voxel_size: 0.01,
            channels: vec![vec![0.0; 8]],
        };
        let mut bytes = encode_fvol(&data).unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(decode_fvol(truncated).is_err());
        bytes[0] = b'X';
        assert!(decode_fvol(&bytes).is_err());
    }

    #[test]
    fn missing_file_error() {
        let err = read_fvol(Path::new("/nonexistent/path/volume.fvol"));
        assert!(matches!(err, Err(Error::MissingFile { .. })));
    }

    #[test]
    fn fire_volume_round_trip_preserves_occupancy() {
        let dims = GridDims::cube(4).unwrap();
        let mut occ = vec![false; dims.total()];
        occ[5] = true;
        occ[20] = true;
        let mut t = VoxelGrid3::with_occupancy(dims, occ.clone(), AMBIENT_TEMPERATURE).unwrap();
        let mut d = VoxelGrid3::with_occupancy(dims, occ, 0.0).unwrap();
        t.set(5, 1200.0);
        t.set(20, 1800.0);
        d.set(5, 1e27);
        d.set(20, 3e27);
        let vol = FireVolume::new(t, d, 0.25, Vec3::new(-0.5, -0.5, -0.5)).unwrap();
        let data = fire_volume_to_fvol(&vol);
        let back = fire_volume_from_fvol(&data, vol.origin).unwrap();
        assert_eq!(back.temperature.occupied, vol.temperature.occupied);
        assert_eq!(back.density.values[5], 1e27f32 as f64);
    }

    proptest! {
        #[test]
        fn arbitrary_payload_round_trips(
            values in proptest::collection::vec(-1e30f32..1e30, 8),
            voxel in 0.001f32..10.0,
        ) {
            let dims = GridDims::new(2, 2, 2).unwrap();
            let data = FvolData { dims, voxel_size: voxel, channels: vec![values] };
            let decoded = decode_fvol(&encode_fvol(&data).unwrap()).unwrap();
            prop_assert_eq!(decoded, data);
        }
    }
}

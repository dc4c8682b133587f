//! File formats: FVOL volumes, PFM and PPM images, trace CSV.

mod fvol;
pub(crate) mod pfm;
mod ppm;
mod trace;

pub use fvol::{
    decode_fvol, encode_fvol, fire_volume_from_fvol, fire_volume_to_fvol, read_fvol,
    rgb_volume_from_fvol, rgb_volume_to_fvol, snapshots_to_fvol, write_fvol, FvolData,
};
pub use pfm::{encode_pfm, read_pfm, read_pfm_encoded, write_pfm};
pub use ppm::{encode_ppm, read_ppm, write_ppm};
pub use trace::{read_trace_csv, trace_csv, write_trace_csv};

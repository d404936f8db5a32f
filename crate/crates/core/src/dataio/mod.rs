mod corrupt;
mod pcv;
mod synth;

pub use corrupt::{drop_local, drop_local_with, temporal_subsample, DropCenter};
pub use pcv::{
    decode_pcv, encode_pcv, pcv_byte_len, read_pcv, write_pcv, PcvDataset, PCV_HEADER_BYTES, PCV_MAGIC, PCV_VERSION,
};
pub use synth::{generate_synthetic, synthesize_video, zigzag_offset, MotionClass, SyntheticSpec};

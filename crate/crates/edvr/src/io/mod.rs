//! On-disk formats: PNG frame folders, binary checkpoints, text configs.

pub mod checkpoint;
pub mod config;
pub mod frames;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{
    parse_run_config, parse_synth_spec, serialize_run_config, serialize_synth_spec, RunConfig,
    SynthSpecFile,
};
pub use frames::{
    frame_name, list_frames, read_frame, read_frames_dir, write_frame, write_frames_dir,
    write_gray,
};

mod accounting;
mod checkpoint;
mod config;
mod encoder;
mod geometry;
mod params;
mod train;

pub use accounting::{count_params_and_flops, Accounting, StageCost};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{ModelConfig, StageConfig};
pub use encoder::{
    argmax, classify, classify_with, encode_members, encode_stage, forward_logits, global_pool, one_step_encode,
    run_stage, StageOutput,
};
pub use geometry::{
    stage_geometry, stage_seed, synthesize_virtual_frame, video_geometry, GeometryOptions, ImitatorSettings,
    StageGeometry,
};
pub use params::{BoundModel, BoundStage, ModelParams, StageParams};
pub use train::{predict, prepare_video, train_step, PreparedVideo, StepReport};

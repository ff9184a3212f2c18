//! Burst reconstruction: inversion, demosaicing, alignment and merging.

mod demosaic;
mod flow;
mod invert;
mod merge;
mod pipeline;
mod white_balance;
mod wiener;

pub use demosaic::{demosaic, DemosaicMethod};
pub use flow::{block_match_flow, warp, BlockMatchParams, FlowField, Validity};
pub use invert::{inverted_variance, mle_invert, rate_estimate};
pub use merge::{adaptive_weights, merge_burst, BurstWindow, FrameShape, MergeConfig, MergeMode};
pub use pipeline::{invert_frame, reconstruct, reconstruct_detailed, PipelineConfig, Reconstruction};
pub use white_balance::gray_world_wb;
pub use wiener::{wiener_merge, NoiseModel, NoiseVariance, WienerParams};

//! Evaluation metrics on volumes, projections and point sets.

mod overlap;
mod pointcloud;
mod skeleton;
mod ssim;

pub use overlap::{masked_dsc, masked_psnr, EvalMask};
pub use pointcloud::{chamfer, PointCloud};
pub use skeleton::{
    cldice_loss, count_components_26, has_full_2x2x2_block, skeleton_dice_loss, skeletonize3d, BinaryVolume,
    SkeletonMask,
};
pub use ssim::{ssim3d, SSIM_WINDOW};

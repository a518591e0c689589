//! Class activation maps, overlays and t-SNE.

mod cam;
mod tsne;

pub use cam::{
    average_cam, compute_cam, compute_cam_raw, normalize_map, ramp_color, render_overlay, upsample_bilinear,
    CamMap, OVERLAY_OPACITY,
};
pub use tsne::{
    calibrate_perplexity, joint_probabilities, student_t_affinities, tsne, CalibrationStatus, TsneConfig,
    TsneEmbedding,
};

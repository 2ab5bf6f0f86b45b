//! Fine stage: correspondence between coarse-result and reference
//! features, CAM-guided sparse key selection and multi-scale fusion.

mod attention;
mod cam;
mod dump;
mod flatten;
mod fusion;
mod selection;

pub use attention::{
    attend, attention_backward, attention_forward, gather, AttentionCache, AttentionGrads, AttentionProjections,
    AttentionWeights, Attended, MacCount, Projections,
};
pub use cam::{argmax, class_activation, CamOutput, Classifier, CAM_LEVEL};
pub use dump::{AttentionDump, AttentionRow};
pub use flatten::{flatten_pyramid, region_grid, split_flattened, FlattenedFeatures, CORRESPONDENCE_LEVELS};
pub use fusion::{FusionDecoder, HEAD_GAIN};
pub use selection::{rank_regions, select_regions, SparseSelection};

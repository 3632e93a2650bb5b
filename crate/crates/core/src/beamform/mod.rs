//! Spatial statistics, closed-form beamformers, ideal masks and beam patterns.

mod apply;
mod masks;
mod oracle;
mod pattern;
mod scm;
mod weights;

pub use apply::{apply_fd, apply_td, apply_td_frames};
pub use masks::{ideal_mask, IdealMask, MaskKind, IPSM_MAX, MASK_EPS};
pub use oracle::{
    oracle_separate, oracle_weights, OracleConfig, OracleMethod, OracleWeights, Statistics,
};
pub use pattern::{
    fd_beam_pattern, pattern_csv, td_beam_pattern, td_pattern_by_spatial_frequency, PATTERN_FLOOR_DB,
};
pub use scm::{fd_scm, td_scm, Averaging, FdScm, ScmKind, TdScm};
pub use weights::{
    apply_latent, fd_eq_mcwf, fd_eq_mvdr, latent_eq_mcwf, td_eq_mcwf, td_eq_mvdr, FdWeights,
    LatentVariant, TdWeights,
};

//! Spatial and spectral features for target-conditioned mask estimation.

pub mod fd;
pub mod td;

pub use fd::{
    active_units, fd_df, ipd, lps, masked_mean, t_ipd, t_ipd_analytic, wrap_phase, FdFeatureStack,
    IpdEncoding, TargetPhaseTemplate,
};
pub use td::{
    decode, encode, icd, ld_df, ls_decoder, spectral_r, t_icd, LatentRepresentation,
    LearnableFilterBank, TdFeatureStack, LD_DF_EPS,
};

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::apply::{apply_fd, apply_td};
use super::masks::{ideal_mask, MaskKind};
use super::scm::{fd_scm, td_scm, Averaging, ScmKind};
use super::weights::{
    apply_latent, fd_eq_mcwf, fd_eq_mvdr, latent_eq_mcwf, td_eq_mcwf, td_eq_mvdr, FdWeights,
    LatentVariant, TdWeights,
};
use crate::dsp::{
    frame, istft, stft, ComplexSpectrogram, FrameGrid, MultichannelSignal, StftKernel,
};
use crate::error::{Error, Result};
use crate::features::{decode, encode, ls_decoder, LearnableFilterBank};
use crate::scene::Scene;

/// Separation methods that need no trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Mixture,
    Ibm,
    Irm,
    Ipsm,
    FdEqMvdr,
    FdEqMcwf,
    TdEqMvdr,
    TdEqMcwf,
    LatentTiMcwf,
    LatentTvMcwf,
}

impl OracleMethod {
    pub const ALL: [OracleMethod; 10] = [
        OracleMethod::Mixture,
        OracleMethod::Ibm,
        OracleMethod::Irm,
        OracleMethod::Ipsm,
        OracleMethod::FdEqMvdr,
        OracleMethod::FdEqMcwf,
        OracleMethod::TdEqMvdr,
        OracleMethod::TdEqMcwf,
        OracleMethod::LatentTiMcwf,
        OracleMethod::LatentTvMcwf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleMethod::Mixture => "mixture",
            OracleMethod::Ibm => "ibm",
            OracleMethod::Irm => "irm",
            OracleMethod::Ipsm => "ipsm",
            OracleMethod::FdEqMvdr => "fd-eq-mvdr",
            OracleMethod::FdEqMcwf => "fd-eq-mcwf",
            OracleMethod::TdEqMvdr => "td-eq-mvdr",
            OracleMethod::TdEqMcwf => "td-eq-mcwf",
            OracleMethod::LatentTiMcwf => "latent-ti-mcwf",
            OracleMethod::LatentTvMcwf => "latent-tv-mcwf",
        }
    }
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OracleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub fd_grid: FrameGrid,
    pub td_grid: FrameGrid,
    pub latent_bands: usize,
    pub bank_seed: u64,
    pub td_averaging: Averaging,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            fd_grid: FrameGrid {
                window: 512,
                hop: 256,
            },
            td_grid: FrameGrid {
                window: 40,
                hop: 20,
            },
            latent_bands: 256,
            bank_seed: 0,
            td_averaging: Averaging::PerSample,
        }
    }
}

/// Target and interference estimates that drive the beamformer statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    /// True source images.
    Oracle,
    /// Mixture masked per channel with the reference-channel ideal ratio mask
    /// (and its complement for interference).
    RatioMasked,
}

struct Padded {
    mixture: MultichannelSignal,
    target: MultichannelSignal,
    interferer: MultichannelSignal,
    front: usize,
    len: usize,
}

fn pad(scene: &Scene, grid: FrameGrid) -> Padded {
    let len = scene.mixture.len();
    let (front, back) = grid.analysis_padding(len);
    Padded {
        mixture: scene.mixture.padded(front, back),
        target: scene.target.padded(front, back),
        interferer: scene.interferer.padded(front, back),
        front,
        len,
    }
}

/// Runs `method` on one scene and returns the reference-channel target
/// estimate, same length as the mixture. Ideal masks always use the true
/// sources; `statistics` selects what the beamformers are computed from.
pub fn oracle_separate(
    scene: &Scene,
    method: OracleMethod,
    cfg: &OracleConfig,
    statistics: Statistics,
) -> Result<MultichannelSignal> {
    let reference = scene.geometry.reference;
    if method == OracleMethod::Mixture {
        return scene.mixture.select_channels(&[reference]);
    }
    let fd_kernel = StftKernel::sqrt_hann(cfg.fd_grid.window);
    let p = pad(scene, cfg.fd_grid);
    let y = stft(&p.mixture, &fd_kernel, cfg.fd_grid)?;
    let (s, n) = match statistics {
        Statistics::Oracle => (
            stft(&p.target, &fd_kernel, cfg.fd_grid)?,
            stft(&p.interferer, &fd_kernel, cfg.fd_grid)?,
        ),
        Statistics::RatioMasked => ratio_masked(&y, &p, &fd_kernel, cfg.fd_grid, reference)?,
    };
    let out = match method {
        OracleMethod::Mixture => unreachable!(),
        OracleMethod::Ibm | OracleMethod::Irm | OracleMethod::Ipsm => {
            let kind = match method {
                OracleMethod::Ibm => MaskKind::Ibm,
                OracleMethod::Irm => MaskKind::Irm,
                _ => MaskKind::Ipsm,
            };
            let st = stft(
                &p.target.select_channels(&[reference])?,
                &fd_kernel,
                cfg.fd_grid,
            )?;
            let nt = stft(
                &p.interferer.select_channels(&[reference])?,
                &fd_kernel,
                cfg.fd_grid,
            )?;
            let yr = y.values.index_axis(Axis(0), reference);
            let mask = ideal_mask(
                kind,
                st.values.index_axis(Axis(0), 0),
                nt.values.index_axis(Axis(0), 0),
                yr,
            );
            let masked = y.with_values(mask.apply(yr).insert_axis(Axis(0)))?;
            istft(&masked, &fd_kernel)?
        }
        OracleMethod::FdEqMvdr => {
            let ss = fd_scm(s.values.view(), s.values.view(), ScmKind::Ss, true)?;
            let nn = fd_scm(n.values.view(), n.values.view(), ScmKind::Nn, true)?;
            let w = fd_eq_mvdr(&nn, &ss, reference)?;
            istft(&apply_fd(&w, &y)?, &fd_kernel)?
        }
        OracleMethod::FdEqMcwf => {
            let yy = fd_scm(y.values.view(), y.values.view(), ScmKind::Yy, true)?;
            let ys = fd_scm(y.values.view(), s.values.view(), ScmKind::Ys, true)?;
            let w = fd_eq_mcwf(&yy, &ys, reference)?;
            istft(&apply_fd(&w, &y)?, &fd_kernel)?
        }
        OracleMethod::TdEqMvdr
        | OracleMethod::TdEqMcwf
        | OracleMethod::LatentTiMcwf
        | OracleMethod::LatentTvMcwf => {
            let (target, interferer) = match statistics {
                Statistics::Oracle => (scene.target.clone(), scene.interferer.clone()),
                Statistics::RatioMasked => (
                    istft(&s, &fd_kernel)?.cropped(p.front, p.len),
                    istft(&n, &fd_kernel)?.cropped(p.front, p.len),
                ),
            };
            return time_domain(scene, method, cfg, &target, &interferer);
        }
    };
    Ok(out.cropped(p.front, p.len))
}

/// Closed-form weights computed from the true source images, for the four
/// spatial methods.
#[derive(Debug, Clone)]
pub enum OracleWeights {
    Fd(FdWeights),
    Td(TdWeights),
}

pub fn oracle_weights(scene: &Scene, method: OracleMethod, cfg: &OracleConfig) -> Result<OracleWeights> {
    let reference = scene.geometry.reference;
    match method {
        OracleMethod::FdEqMvdr | OracleMethod::FdEqMcwf => {
            let kernel = StftKernel::sqrt_hann(cfg.fd_grid.window);
            let p = pad(scene, cfg.fd_grid);
            let y = stft(&p.mixture, &kernel, cfg.fd_grid)?;
            let s = stft(&p.target, &kernel, cfg.fd_grid)?;
            let w = if method == OracleMethod::FdEqMvdr {
                let n = stft(&p.interferer, &kernel, cfg.fd_grid)?;
                let ss = fd_scm(s.values.view(), s.values.view(), ScmKind::Ss, true)?;
                let nn = fd_scm(n.values.view(), n.values.view(), ScmKind::Nn, true)?;
                fd_eq_mvdr(&nn, &ss, reference)?
            } else {
                let yy = fd_scm(y.values.view(), y.values.view(), ScmKind::Yy, true)?;
                let ys = fd_scm(y.values.view(), s.values.view(), ScmKind::Ys, true)?;
                fd_eq_mcwf(&yy, &ys, reference)?
            };
            Ok(OracleWeights::Fd(w))
        }
        OracleMethod::TdEqMvdr | OracleMethod::TdEqMcwf => {
            let p = pad(scene, cfg.td_grid);
            let yf = frame(&p.mixture, cfg.td_grid)?;
            let sf = frame(&p.target, cfg.td_grid)?;
            let w = if method == OracleMethod::TdEqMvdr {
                let nf = frame(&p.interferer, cfg.td_grid)?;
                let ss = td_scm(sf.view(), sf.view(), ScmKind::Ss, cfg.td_averaging)?;
                let nn = td_scm(nf.view(), nf.view(), ScmKind::Nn, cfg.td_averaging)?;
                td_eq_mvdr(&nn, &ss, reference)?
            } else {
                let yy = td_scm(yf.view(), yf.view(), ScmKind::Yy, cfg.td_averaging)?;
                let ys = td_scm(yf.view(), sf.view(), ScmKind::Ys, cfg.td_averaging)?;
                td_eq_mcwf(&yy, &ys, reference)?
            };
            Ok(OracleWeights::Td(w))
        }
        other => Err(Error::Config(format!(
            "'{other}' has no spatial weights; use fd-eq-mvdr, fd-eq-mcwf, td-eq-mvdr or td-eq-mcwf"
        ))),
    }
}

fn ratio_masked(
    y: &ComplexSpectrogram,
    p: &Padded,
    kernel: &StftKernel,
    grid: FrameGrid,
    reference: usize,
) -> Result<(ComplexSpectrogram, ComplexSpectrogram)> {
    let st = stft(&p.target.select_channels(&[reference])?, kernel, grid)?;
    let nt = stft(&p.interferer.select_channels(&[reference])?, kernel, grid)?;
    let yr = y.values.index_axis(Axis(0), reference);
    let irm = ideal_mask(
        MaskKind::Irm,
        st.values.index_axis(Axis(0), 0),
        nt.values.index_axis(Axis(0), 0),
        yr,
    )
    .values;
    let mut s = y.values.clone();
    let mut n = y.values.clone();
    for mut plane in s.axis_iter_mut(Axis(0)) {
        ndarray::Zip::from(&mut plane)
            .and(&irm)
            .for_each(|v, &m| *v *= m);
    }
    for mut plane in n.axis_iter_mut(Axis(0)) {
        ndarray::Zip::from(&mut plane)
            .and(&irm)
            .for_each(|v, &m| *v *= 1.0 - m);
    }
    Ok((y.with_values(s)?, y.with_values(n)?))
}

fn time_domain(
    scene: &Scene,
    method: OracleMethod,
    cfg: &OracleConfig,
    target: &MultichannelSignal,
    interferer: &MultichannelSignal,
) -> Result<MultichannelSignal> {
    let reference = scene.geometry.reference;
    let grid = cfg.td_grid;
    let len = scene.mixture.len();
    let (front, back) = grid.analysis_padding(len);
    let y = scene.mixture.padded(front, back);
    let s = target.padded(front, back);
    let n = interferer.padded(front, back);
    let sr = y.sample_rate();
    let out = match method {
        OracleMethod::TdEqMvdr | OracleMethod::TdEqMcwf => {
            let yf = frame(&y, grid)?;
            let sf = frame(&s, grid)?;
            let w = if method == OracleMethod::TdEqMvdr {
                let nf = frame(&n, grid)?;
                let ss = td_scm(sf.view(), sf.view(), ScmKind::Ss, cfg.td_averaging)?;
                let nn = td_scm(nf.view(), nf.view(), ScmKind::Nn, cfg.td_averaging)?;
                td_eq_mvdr(&nn, &ss, reference)?
            } else {
                let yy = td_scm(yf.view(), yf.view(), ScmKind::Yy, cfg.td_averaging)?;
                let ys = td_scm(yf.view(), sf.view(), ScmKind::Ys, cfg.td_averaging)?;
                td_eq_mcwf(&yy, &ys, reference)?
            };
            apply_td(&w, yf.view(), grid.hop, sr)?
        }
        _ => {
            let variant = if method == OracleMethod::LatentTiMcwf {
                LatentVariant::TimeInvariant
            } else {
                LatentVariant::TimeVariant
            };
            let bank = LearnableFilterBank::random(
                grid.window,
                cfg.latent_bands,
                y.channels(),
                reference,
                cfg.bank_seed,
            );
            let ly = encode(&y, &bank, grid)?;
            let ls = encode(&s.select_channels(&[reference])?, &single(&bank), grid)?;
            let w = latent_eq_mcwf(ly.values.view(), ls.values.index_axis(Axis(0), 0), variant)?;
            let est = apply_latent(w.view(), ly.values.view())?;
            let decoder = ls_decoder(bank.k0())?;
            decode(est.insert_axis(Axis(0)).view(), decoder.view(), grid, sr)?
        }
    };
    Ok(out.cropped(front, len))
}

/// The reference filters as a one-channel bank.
fn single(bank: &LearnableFilterBank) -> LearnableFilterBank {
    LearnableFilterBank::new(
        bank.k0().to_owned(),
        ndarray::Array2::ones((1, bank.window_len())),
        0,
    )
    .expect("ones window is valid")
}

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tcn::TcnConfig;
use crate::dsp::FrameGrid;
use crate::error::{Error, Result};
use crate::features::IpdEncoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Fd,
    Td,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamformerVariant {
    /// Masked reference channel only.
    MaskOnly,
    /// Closed-form beamformers on estimated statistics at inference; the
    /// network is trained on the masked output.
    EqMvdr,
    EqMcwf,
    /// Learned recurrent beamforming heads trained end to end.
    AnMvdr,
    AnMcwf,
    /// Closed-form latent-domain Wiener filters (time domain only).
    LatentTiMcwf,
    LatentTvMcwf,
}

impl BeamformerVariant {
    pub fn is_learned_head(self) -> bool {
        matches!(self, Self::AnMvdr | Self::AnMcwf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub window: Option<usize>,
    pub hop: Option<usize>,
    /// Latent bands of the time-domain encoder; frequency-domain bands
    /// follow from the window.
    pub bands: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub projection: Option<usize>,
    pub gru: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub si_sdr: f64,
    /// Weight of the log mel-filterbank term.
    pub lmfb: f64,
    pub mel_bands: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            si_sdr: 1.0,
            lmfb: 0.0,
            mel_bands: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub patience: usize,
    pub decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            patience: 3,
            decay: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub domain: Domain,
    pub encoder: EncoderConfig,
    /// Microphone pairs for the spatial features; the array's own pairs when
    /// absent.
    pub pairs: Option<Vec<(usize, usize)>>,
    pub beamformer: BeamformerVariant,
    pub multichannel_mask: bool,
    pub ipd_encoding: IpdEncoding,
    pub tcn: TcnConfig,
    pub head: HeadConfig,
    pub loss: LossWeights,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::td()
    }
}

impl PipelineConfig {
    pub fn fd() -> Self {
        Self {
            domain: Domain::Fd,
            encoder: EncoderConfig::default(),
            pairs: None,
            beamformer: BeamformerVariant::AnMcwf,
            multichannel_mask: false,
            ipd_encoding: IpdEncoding::default(),
            tcn: TcnConfig::default(),
            head: HeadConfig::default(),
            loss: LossWeights::default(),
            optim: OptimConfig::default(),
            seed: 0,
        }
    }

    pub fn td() -> Self {
        Self {
            domain: Domain::Td,
            ..Self::fd()
        }
    }

    pub fn grid(&self) -> Result<FrameGrid> {
        let (n, h) = match self.domain {
            Domain::Fd => (512, 256),
            Domain::Td => (40, 20),
        };
        FrameGrid::new(self.encoder.window.unwrap_or(n), self.encoder.hop.unwrap_or(h))
    }

    /// F for the frequency domain (`N/2 + 1`), F′ for the time domain.
    pub fn bands(&self) -> Result<usize> {
        let n = self.grid()?.window;
        match self.domain {
            Domain::Fd => Ok(n / 2 + 1),
            Domain::Td => Ok(self.encoder.bands.unwrap_or(256)),
        }
    }

    pub fn head_projection(&self) -> usize {
        self.head.projection.unwrap_or(match self.domain {
            Domain::Fd => 180,
            Domain::Td => 32,
        })
    }

    pub fn head_gru(&self) -> usize {
        self.head.gru.unwrap_or(match self.domain {
            Domain::Fd => 90,
            Domain::Td => 256,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let bands = self.bands()?;
        if self.domain == Domain::Fd {
            if let Some(b) = self.encoder.bands {
                if b != bands {
                    return Err(Error::Config(format!(
                        "frequency-domain bands follow the window: expected {bands}, got {b}"
                    )));
                }
            }
            if matches!(self.beamformer, BeamformerVariant::LatentTiMcwf | BeamformerVariant::LatentTvMcwf) {
                return Err(Error::Config("latent beamformers need the time domain".into()));
            }
        } else if bands < grid.window {
            return Err(Error::Config(format!(
                "time-domain encoder needs at least as many bands as window samples ({bands} < {})",
                grid.window
            )));
        }
        let t = &self.tcn;
        if t.bottleneck == 0 || t.hidden == 0 || t.kernel == 0 || self.head_projection() == 0 || self.head_gru() == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.optim.learning_rate > 0.0) || !(self.optim.decay > 0.0 && self.optim.decay <= 1.0) {
            return Err(Error::Config("learning rate must be positive and decay in (0, 1]".into()));
        }
        if self.loss.lmfb < 0.0 || self.loss.si_sdr < 0.0 || self.loss.mel_bands == 0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

//! Shared signal substrate: multichannel signals, framing, STFT/iSTFT,
//! fractional delay and WAV I/O.

mod delay;
mod framing;
mod signal;
mod stft;
pub mod wav;
pub mod window;

pub use delay::{fractional_delay, kaiser_sinc_tap, FRACTIONAL_DELAY_HALF_WIDTH, KAISER_BETA};
pub use framing::{frame, frame_channel, overlap_add, overlap_add_normalized, FrameGrid};
pub use signal::{MultichannelSignal, SAMPLE_RATE};
pub use stft::{istft, stft, stft_direct, ComplexSpectrogram, StftKernel};

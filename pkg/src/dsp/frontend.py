"""
Signal Front End
Hann window, centred STFT, HTK mel filterbank and the 20·log10 log-Mel transform
"""

import logging
from dataclasses import dataclass, field
from typing import Union

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

from ..core.config import FramingConfig
from ..core.errors import DataError, ShapeError
from ..core.tensor import get_default_dtype

logger = logging.getLogger(__name__)


@dataclass
class Waveform:
    """Mono clip normalised to [-1, 1]"""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.samples.ndim != 1:
            raise ShapeError("waveform must be mono (1-D)", shape=self.samples.shape)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelFilterbank:
    """Triangular filters, weights shaped (FFT bins) × n_mels"""
    weights: np.ndarray
    f_min: float
    f_max: float
    sample_rate: int
    mel_scale: str = "htk"
    center_freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_mels(self) -> int:
        return self.weights.shape[1]

    @property
    def n_fft_bins(self) -> int:
        return self.weights.shape[0]


@dataclass
class MelSpectrogram:
    """Log-Mel values t × f in dB"""
    values: np.ndarray
    frame_times: np.ndarray
    mel_center_freqs: np.ndarray


def hz_to_mel(frequency: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """HTK mel scale: 2595·log10(1 + f/700)"""
    return librosa.hz_to_mel(frequency, htk=True)


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window w[n] = 0.5·(1 − cos(2πn/N))"""
    if length < 2:
        raise ShapeError("window length must be at least 2", length=length)
    return signal.get_window("hann", length, fftbins=True)


def frame_count(n_samples: int, win_length: int, hop: int) -> int:
    """Frames produced by a centred (reflect-padded) analysis"""
    padded = n_samples + 2 * (win_length // 2)
    return (padded - win_length) // hop + 1


def stft(x: Union[Waveform, np.ndarray], win_length: int, hop: int, fft_size: int) -> np.ndarray:
    """
    Short-time Fourier transform with centre reflect padding.

    Args:
        x: Waveform or sample array (l or N×l)
        win_length: Hann window length in samples
        hop: Hop between frames in samples
        fft_size: FFT size (≥ win_length)

    Returns:
        Complex array t × (fft_size/2+1), or N × t × (fft_size/2+1)

    Raises:
        DataError: Signal too short for reflect padding
        ShapeError: Invalid framing parameters
    """
    samples = x.samples if isinstance(x, Waveform) else np.asarray(x)
    if hop <= 0 or fft_size < win_length:
        raise ShapeError("invalid framing", hop=hop, win_length=win_length, fft_size=fft_size)
    pad = win_length // 2
    if samples.shape[-1] <= pad:
        raise DataError("signal shorter than one hop after padding", samples=samples.shape[-1], pad=pad)

    widths = [(0, 0)] * (samples.ndim - 1) + [(pad, pad)]
    padded = np.pad(samples.astype(np.float64), widths, mode="reflect")
    frames = sliding_window_view(padded, win_length, axis=-1)[..., ::hop, :]
    return np.fft.rfft(frames * hann_window(win_length), n=fft_size, axis=-1)


def mel_filterbank(n_fft_bins: int, n_mels: int, f_min: float, f_max: float, sample_rate: int) -> MelFilterbank:
    """
    HTK triangular filterbank with centres equally spaced on the mel scale.

    Raises:
        ShapeError: Invalid frequency range or sizes
    """
    if n_mels < 2 or n_fft_bins < 2:
        raise ShapeError("filterbank needs at least 2 mels and 2 FFT bins", n_mels=n_mels, n_fft_bins=n_fft_bins)
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ShapeError("need 0 <= f_min < f_max <= sample_rate/2", f_min=f_min, f_max=f_max, sample_rate=sample_rate)

    n_fft = 2 * (n_fft_bins - 1)
    weights = librosa.filters.mel(
        sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=f_min, fmax=f_max,
        htk=True, norm=None, dtype=np.float64,
    )
    edges = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=f_min, fmax=f_max, htk=True)
    return MelFilterbank(
        weights=weights.T,
        f_min=f_min,
        f_max=f_max,
        sample_rate=sample_rate,
        center_freqs=edges[1:-1],
    )


def log_mel(x: Union[Waveform, np.ndarray], fb: MelFilterbank, framing: FramingConfig) -> MelSpectrogram:
    """
    X_Mel = 20·log10(max(fb · |STFT|, amplitude_floor)).

    Accepts a single clip (t × f result) or a batch N × l (N × t × f result).
    """
    if fb.n_fft_bins != framing.fft_size // 2 + 1 or fb.sample_rate != framing.sample_rate:
        raise ShapeError(
            "filterbank does not match framing",
            filterbank_bins=fb.n_fft_bins,
            fft_size=framing.fft_size,
        )
    if isinstance(x, Waveform) and x.sample_rate != framing.sample_rate:
        raise DataError(
            "waveform sample rate does not match framing",
            waveform_rate=x.sample_rate,
            framing_rate=framing.sample_rate,
        )
    magnitude = np.abs(stft(x, framing.win_length, framing.hop_length, framing.fft_size))
    mel = magnitude @ fb.weights
    values = 20.0 * np.log10(np.maximum(mel, framing.amplitude_floor))
    n_frames = values.shape[-2]
    return MelSpectrogram(
        values=values.astype(get_default_dtype()),
        frame_times=np.arange(n_frames) * framing.hop_length / framing.sample_rate,
        mel_center_freqs=fb.center_freqs,
    )


class LogMelExtractor:
    """Holds the filterbank for one framing and converts waveform batches"""

    def __init__(self, framing: FramingConfig):
        self.framing = framing
        self.filterbank = mel_filterbank(
            framing.fft_size // 2 + 1,
            framing.n_mels,
            framing.f_min,
            framing.max_frequency,
            framing.sample_rate,
        )

    def __call__(self, waveforms: np.ndarray) -> np.ndarray:
        return log_mel(waveforms, self.filterbank, self.framing).values

    @property
    def center_freqs(self) -> np.ndarray:
        return self.filterbank.center_freqs

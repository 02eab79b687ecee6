"""
WAV Decoding
Strict 16-bit PCM mono decoder and matching encoder
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from ..core.errors import (
    ChannelCountError,
    DataError,
    EncodingError,
    MalformedHeaderError,
    SampleRateError,
)
from ..dsp.frontend import Waveform

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0


def decode_wav(path: Union[str, Path], sample_rate: int = 16000) -> Waveform:
    """
    Decode a RIFF/WAVE 16-bit PCM mono file.

    Args:
        path: WAV file
        sample_rate: Required rate; files at other rates are rejected, never resampled

    Returns:
        Waveform with samples scaled by 1/32768

    Raises:
        DataError: File missing
        MalformedHeaderError: Header unreadable
        EncodingError: Not WAV 16-bit PCM
        ChannelCountError: Not mono
        SampleRateError: Rate differs from ``sample_rate``
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"WAV file not found: {path}", path=str(path))
    try:
        info = sf.info(str(path))
    except (sf.SoundFileError, RuntimeError) as exc:
        raise MalformedHeaderError(f"cannot parse WAV header: {path}", path=str(path), reason=str(exc)) from exc

    if info.format != "WAV" or info.subtype != "PCM_16":
        raise EncodingError(f"expected WAV PCM_16, got {info.format}/{info.subtype}", path=str(path))
    if info.channels != 1:
        raise ChannelCountError(f"expected mono audio, got {info.channels} channels",
                                path=str(path), channels=info.channels)
    if info.samplerate != sample_rate:
        raise SampleRateError(f"expected {sample_rate} Hz, got {info.samplerate} Hz",
                              path=str(path), sample_rate=info.samplerate)

    try:
        pcm, _ = sf.read(str(path), dtype="int16", always_2d=False)
    except (sf.SoundFileError, RuntimeError) as exc:
        raise MalformedHeaderError(f"cannot read WAV payload: {path}", path=str(path), reason=str(exc)) from exc
    return Waveform(samples=(pcm.astype(np.float32) / PCM_SCALE), sample_rate=int(info.samplerate))


def encode_wav(path: Union[str, Path], waveform: Waveform) -> Path:
    """Write a Waveform as 16-bit PCM; decode_wav(encode_wav(w)) reproduces PCM-representable samples exactly"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(waveform.samples.astype(np.float64) * PCM_SCALE), -32768, 32767).astype(np.int16)
    sf.write(str(path), pcm, waveform.sample_rate, subtype="PCM_16", format="WAV")
    return path


def fit_length(samples: np.ndarray, n_samples: int) -> np.ndarray:
    """Zero-pad the tail or truncate to exactly ``n_samples``"""
    if len(samples) >= n_samples:
        return samples[:n_samples]
    return np.pad(samples, (0, n_samples - len(samples)))

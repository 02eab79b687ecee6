"""
Synthetic Corpus
Tone/noise machine sounds written in the DCASE directory layout for end-to-end checks
"""

import logging
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from ..dsp.frontend import Waveform
from .wav import encode_wav

logger = logging.getLogger(__name__)

# (machine_type, machine_id) -> fundamental in Hz
DEFAULT_MACHINES: Dict[Tuple[str, str], float] = {
    ("toyhum", "00"): 440.0,
    ("toyhum", "02"): 1000.0,
    ("toywhine", "00"): 2000.0,
    ("toywhine", "02"): 4000.0,
}

DETUNE_FACTOR = 1.5


def synth_tone(frequency: float, seconds: float, sample_rate: int, rng: np.random.Generator,
               noise: float = 0.02) -> np.ndarray:
    """Fundamental plus second harmonic with random phase/level and white noise"""
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    level = rng.uniform(0.25, 0.4)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    clip = level * np.sin(2 * np.pi * frequency * t + phase[0])
    clip += 0.5 * level * np.sin(2 * np.pi * 2 * frequency * t + phase[1])
    clip += noise * rng.standard_normal(t.size)
    return np.clip(clip, -1.0, 1.0).astype(np.float32)


def synth_anomaly(frequency: float, seconds: float, sample_rate: int, rng: np.random.Generator,
                  kind: int) -> np.ndarray:
    """Even kinds detune the machine upwards, odd kinds detune it downwards under broadband noise"""
    if kind % 2 == 0:
        return synth_tone(frequency * DETUNE_FACTOR, seconds, sample_rate, rng)
    return synth_tone(frequency / DETUNE_FACTOR, seconds, sample_rate, rng, noise=0.25)


def generate_tone_dataset(
    root: Union[str, Path],
    machines: Dict[Tuple[str, str], float] = DEFAULT_MACHINES,
    train_per_id: int = 50,
    test_normal_per_id: int = 10,
    test_anomaly_per_id: int = 10,
    seconds: float = 1.0,
    sample_rate: int = 16000,
    seed: int = 0,
) -> Path:
    """
    Write ``root/<type>/{train,test}/{normal|anomaly}_id_<NN>_<seq>.wav``.

    Returns:
        The dataset root
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    for (machine_type, machine_id), frequency in sorted(machines.items()):
        base = root / machine_type
        for seq in range(train_per_id):
            clip = synth_tone(frequency, seconds, sample_rate, rng)
            encode_wav(base / "train" / f"normal_id_{machine_id}_{seq:08d}.wav", Waveform(clip, sample_rate))
        for seq in range(test_normal_per_id):
            clip = synth_tone(frequency, seconds, sample_rate, rng)
            encode_wav(base / "test" / f"normal_id_{machine_id}_{seq:08d}.wav", Waveform(clip, sample_rate))
        for seq in range(test_anomaly_per_id):
            clip = synth_anomaly(frequency, seconds, sample_rate, rng, kind=seq)
            encode_wav(base / "test" / f"anomaly_id_{machine_id}_{seq:08d}.wav", Waveform(clip, sample_rate))
    logger.info(f"Generated synthetic corpus for {len(machines)} machines under {root}")
    return root

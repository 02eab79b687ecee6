"""
Attention Statistics
Mean/std attention maps over a clip set, per-mel-band summaries and export
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml
from matplotlib import image as mpimg
from pydantic import BaseModel

from ..core.errors import ConfigError, DataError
from ..core.tensor import no_grad
from ..dsp.container import write_container
from ..modules.detector import AnomalyDetector

logger = logging.getLogger(__name__)

NEUTRAL_LEVEL = 0.5


@dataclass
class AttentionStatistics:
    """
    Elementwise statistics of H over clips.

    ``mean``/``std`` are t × f × C (population std); ``band_means`` is the
    time-averaged mean, f × C, aligned with ``center_freqs``.
    """
    mean: np.ndarray
    std: np.ndarray
    center_freqs: np.ndarray
    n_clips: int

    @property
    def band_means(self) -> np.ndarray:
        return self.mean.mean(axis=0)

    def band_table(self) -> List[dict]:
        return [
            {"bin": i, "center_hz": float(hz), "mean": [float(v) for v in self.band_means[i]]}
            for i, hz in enumerate(self.center_freqs)
        ]


class FrequencyBand(BaseModel):
    first_bin: int
    last_bin: int
    low_hz: float
    high_hz: float
    mean: float
    emphasized: bool


def attention_statistics(detector: AnomalyDetector, waveforms: np.ndarray, batch_size: int = 16) -> AttentionStatistics:
    """
    Accumulate attention maps batch by batch (parallel mean/variance merge).

    Raises:
        DataError: Empty clip set
        ConfigError: Detector built without the attention module
    """
    if len(waveforms) == 0:
        raise DataError("attention statistics need at least one clip")
    if detector.feature_net.attention is None:
        raise ConfigError("model was built without attention", key="use_attention")

    detector.eval()
    count = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    with no_grad():
        for start in range(0, len(waveforms), batch_size):
            maps = detector.features(waveforms[start:start + batch_size]).attention.data.astype(np.float64)
            n_b = maps.shape[0]
            mean_b = maps.mean(axis=0)
            m2_b = ((maps - mean_b) ** 2).sum(axis=0)
            if mean is None:
                count, mean, m2 = n_b, mean_b, m2_b
                continue
            delta = mean_b - mean
            total = count + n_b
            mean = mean + delta * (n_b / total)
            m2 = m2 + m2_b + delta ** 2 * (count * n_b / total)
            count = total

    std = np.sqrt(m2 / count)
    logger.info(f"Attention statistics over {count} clips: mean range "
                f"[{mean.min():.3f}, {mean.max():.3f}], max std {std.max():.3f}")
    return AttentionStatistics(mean=mean, std=std, center_freqs=detector.extractor.center_freqs, n_clips=count)


def relevant_bands(stats: AttentionStatistics, neutral: float = NEUTRAL_LEVEL, tolerance: float = 0.05,
                   channel: Optional[int] = None) -> List[FrequencyBand]:
    """
    Group contiguous mel bins whose time-averaged attention departs from
    ``neutral`` by more than ``tolerance`` (same direction) into Hz ranges.

    Args:
        channel: Restrict to one stack channel; averages channels when None
    """
    profile = stats.band_means[:, channel] if channel is not None else stats.band_means.mean(axis=1)
    offset = profile - neutral
    direction = np.where(offset > tolerance, 1, np.where(offset < -tolerance, -1, 0))

    bands: List[FrequencyBand] = []
    start = 0
    for i in range(1, len(direction) + 1):
        if i < len(direction) and direction[i] == direction[start]:
            continue
        if direction[start] != 0:
            bands.append(FrequencyBand(
                first_bin=start,
                last_bin=i - 1,
                low_hz=float(stats.center_freqs[start]),
                high_hz=float(stats.center_freqs[i - 1]),
                mean=float(profile[start:i].mean()),
                emphasized=bool(direction[start] > 0),
            ))
        start = i
    return bands


def export_attention(stats: AttentionStatistics, out_dir: Union[str, Path]) -> List[Path]:
    """
    Write mean/std ASDF (version 2) containers, one grayscale PNG per
    channel and statistic (frequency upwards, time to the right) and a
    YAML band table.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        write_container(out_dir / "attention_mean.asdf", stats.mean.astype(np.float32)),
        write_container(out_dir / "attention_std.asdf", stats.std.astype(np.float32)),
    ]
    for name, values, vmax in (("mean", stats.mean, 1.0), ("std", stats.std, NEUTRAL_LEVEL)):
        for channel in range(values.shape[-1]):
            path = out_dir / f"attention_{name}_ch{channel}.png"
            mpimg.imsave(path, values[:, :, channel].T, cmap="gray", vmin=0.0, vmax=vmax, origin="lower")
            written.append(path)

    table = {
        "n_clips": stats.n_clips,
        "bands": stats.band_table(),
        "relevant": [b.model_dump() for b in relevant_bands(stats)],
    }
    bands_path = out_dir / "attention_bands.yaml"
    bands_path.write_text(yaml.safe_dump(table, sort_keys=False), encoding="utf-8")
    written.append(bands_path)
    logger.info(f"Exported attention statistics to {out_dir}")
    return written

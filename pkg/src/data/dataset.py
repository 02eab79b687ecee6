"""
Dataset Ingestion
DCASE-2020-Task-2 directory scanning, label vocabulary and clip loading
"""

import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ..core.config import FramingConfig
from ..core.errors import DatasetError, LabelError
from .wav import decode_wav, fit_length

logger = logging.getLogger(__name__)

CLIP_NAME = re.compile(r"^(normal|anomaly)_id_(\d+)_(\d+)\.wav$")


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class DatasetRecord(BaseModel):
    """One clip on disk"""
    path: Path
    machine_type: str
    machine_id: str
    split: Split
    is_anomaly: bool = Field(False, description="Ground truth; never used for training")

    @property
    def key(self) -> Tuple[str, str]:
        return self.machine_type, self.machine_id

    @property
    def clip_id(self) -> str:
        return f"{self.machine_type}/{self.split.value}/{self.path.name}"


class DatasetIndex(BaseModel):
    """Records in deterministic (type, split, filename) order"""
    records: List[DatasetRecord] = Field(default_factory=list)

    def select(self, split: Split) -> List[DatasetRecord]:
        return [r for r in self.records if r.split == split]

    def machine_counts(self) -> Dict[str, int]:
        return dict(Counter(f"{r.machine_type}:{r.machine_id}/{r.split.value}" for r in self.records))


class LabelVocab:
    """Bijection between sorted (machine_type, machine_id) pairs and class indices"""

    def __init__(self, pairs: Iterable[Tuple[str, str]]):
        self.pairs: List[Tuple[str, str]] = sorted(set(pairs))
        self._index = {pair: i for i, pair in enumerate(self.pairs)}

    def __len__(self) -> int:
        return len(self.pairs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelVocab) and self.pairs == other.pairs

    def index(self, machine_type: str, machine_id: str) -> int:
        try:
            return self._index[(machine_type, machine_id)]
        except KeyError:
            raise LabelError(f"label {machine_type}:{machine_id} is not in the vocabulary",
                             machine_type=machine_type, machine_id=machine_id) from None

    def parse(self, label: str) -> int:
        """Class index of a ``type:id`` label"""
        machine_type, sep, machine_id = label.rpartition(":")
        if not sep:
            raise LabelError(f"label '{label}' is not type:id", label=label)
        return self.index(machine_type, machine_id)

    def labels(self) -> List[str]:
        return [f"{t}:{i}" for t, i in self.pairs]

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelVocab":
        pairs = []
        for label in labels:
            machine_type, _, machine_id = label.rpartition(":")
            pairs.append((machine_type, machine_id))
        return cls(pairs)


def parse_clip_name(name: str) -> Optional[Tuple[bool, str]]:
    """``anomaly_id_01_00000005.wav`` -> (True, "01"); None when the name does not follow the convention"""
    match = CLIP_NAME.match(name)
    if match is None:
        return None
    return match.group(1) == "anomaly", match.group(2)


def scan_dataset(root: Union[str, Path]) -> Tuple[DatasetIndex, LabelVocab]:
    """
    Index ``root/<machine_type>/{train,test}/*.wav``.

    Unparseable filenames and anomalous clips under train/ are skipped with
    a warning.

    Raises:
        DatasetError: Root missing or no training clips
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root not found: {root}", root=str(root))

    records: List[DatasetRecord] = []
    for type_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for split in Split:
            split_dir = type_dir / split.value
            if not split_dir.is_dir():
                continue
            for wav_path in sorted(split_dir.glob("*.wav")):
                parsed = parse_clip_name(wav_path.name)
                if parsed is None:
                    logger.warning(f"Skipping unparseable clip name: {wav_path}")
                    continue
                is_anomaly, machine_id = parsed
                if split == Split.TRAIN and is_anomaly:
                    logger.warning(f"Skipping anomalous clip in train split: {wav_path}")
                    continue
                records.append(DatasetRecord(
                    path=wav_path,
                    machine_type=type_dir.name,
                    machine_id=machine_id,
                    split=split,
                    is_anomaly=is_anomaly,
                ))

    index = DatasetIndex(records=records)
    if not index.select(Split.TRAIN):
        raise DatasetError(f"no training clips under {root}", root=str(root))

    vocab = LabelVocab(r.key for r in records)
    for machine, count in sorted(index.machine_counts().items()):
        logger.info(f"{machine}: {count} clips")
    logger.info(f"Indexed {len(records)} clips, vocabulary size {len(vocab)}")
    return index, vocab


@dataclass
class ClipSet:
    """Decoded clips with their records and class indices"""
    waveforms: np.ndarray
    records: List[DatasetRecord]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.records)


def load_clips(records: List[DatasetRecord], vocab: LabelVocab, framing: FramingConfig,
               workers: int = 4) -> ClipSet:
    """Decode clips in parallel (order preserved) and fit them to the configured length"""
    if not records:
        return ClipSet(np.zeros((0, framing.n_samples), dtype=np.float32), [], np.zeros(0, dtype=np.int64))

    def _load(record: DatasetRecord) -> np.ndarray:
        waveform = decode_wav(record.path, framing.sample_rate)
        return fit_length(waveform.samples, framing.n_samples)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        waveforms = list(pool.map(_load, records))
    labels = np.array([vocab.index(*r.key) for r in records], dtype=np.int64)
    return ClipSet(np.stack(waveforms).astype(np.float32), list(records), labels)

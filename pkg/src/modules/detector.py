"""
Anomaly Detector
Full model composed of the log-Mel extractor, feature network, backbone and ArcFace head
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import functional as F
from ..core.config import AsdConfig
from ..core.errors import ShapeError
from ..core.module_interface import BaseModule
from ..core.tensor import Tensor, get_default_dtype
from ..dsp.frontend import LogMelExtractor
from .arcface import ArcFaceHead
from .backbone import MobileFaceNet
from .feature_net import FeatureNet, FeatureOutput

logger = logging.getLogger(__name__)


@dataclass
class DetectorOutput:
    angles: Tensor
    embedding: Tensor
    features: FeatureOutput


class AnomalyDetector(BaseModule):
    """
    Waveform batch → angles to every class.

    Components are delegated to, in the same way a client delegates to its
    managers:
    - LogMelExtractor: fixed log-Mel front end (no parameters)
    - FeatureNet: Wavegram, stacking and attention
    - MobileFaceNet: embedding backbone
    - ArcFaceHead: angular class head
    """

    def __init__(self, config: AsdConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        framing, model = config.framing, config.model
        self.extractor = LogMelExtractor(framing)
        self.feature_net = FeatureNet(config, rng)
        self.backbone = MobileFaceNet(model.feature_channels, (framing.n_frames, framing.n_mels), model, rng)
        self.head = ArcFaceHead(model.n_classes, model.embedding_dim, rng,
                                scale=config.train.scale, margin=config.train.margin)

    @property
    def n_classes(self) -> int:
        return self.head.n_classes

    def features(self, waveforms: np.ndarray) -> FeatureOutput:
        waveforms = np.atleast_2d(np.asarray(waveforms, dtype=get_default_dtype()))
        expected = self.config.framing.n_samples
        if waveforms.shape[-1] != expected:
            raise ShapeError("waveform length differs from the configured clip length",
                             expected=expected, got=waveforms.shape[-1])
        log_mel = self.extractor(waveforms) if self.config.model.use_mel else None
        return self.feature_net(waveforms, log_mel)

    def embed(self, weighted: Tensor) -> Tensor:
        """Unit-norm embedding of the weighted feature stack"""
        return F.l2_normalize(self.backbone(weighted), axis=-1)

    def forward(self, waveforms: np.ndarray) -> DetectorOutput:
        features = self.features(waveforms)
        embedding = self.embed(features.weighted)
        return DetectorOutput(angles=self.head(embedding), embedding=embedding, features=features)


def build_detector(config: AsdConfig, rng: Optional[np.random.Generator] = None) -> AnomalyDetector:
    """Construct a detector; initialisation draws from ``rng`` (seeded from the config when omitted)"""
    rng = rng if rng is not None else np.random.default_rng(config.train.seed)
    detector = AnomalyDetector(config, rng)
    logger.info(f"Built detector with {detector.num_parameters():,} trainable parameters")
    return detector

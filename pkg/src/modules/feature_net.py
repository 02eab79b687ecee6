"""
Feature Network
Learnable Wavegram, channel stacking with the log-Mel map, and the separable-convolution attention module
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..core import functional as F
from ..core.config import AsdConfig, AttentionInit, FramingConfig
from ..core.errors import ShapeError
from ..core.layers import Linear, SeparableConv1d, conv3x3
from ..core.module_interface import BaseModule
from ..core.tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)

ArrayLike = Union[Tensor, np.ndarray]


class Wavegram(BaseModule):
    """
    Separable strided 1-D convolution producing a t × f map aligned with the log-Mel frames.

    Depthwise kernels span one analysis window (channel multiplier m_w) and
    hop like the STFT; a pointwise stage mixes them to f bins. No
    normalization or output activation.
    """

    def __init__(self, framing: FramingConfig, multiplier: int, rng: np.random.Generator):
        super().__init__()
        self.n_samples = framing.n_samples
        self.conv = SeparableConv1d(
            kernel_size=framing.win_length,
            multiplier=multiplier,
            out_channels=framing.n_mels,
            stride=framing.hop_length,
            rng=rng,
            bias=True,
        )

    def forward(self, waveforms: ArrayLike) -> Tensor:
        waveforms = F.as_tensor(waveforms)
        if waveforms.shape[-1] != self.n_samples:
            raise ShapeError("waveform length differs from the configured clip length",
                             expected=self.n_samples, got=waveforms.shape[-1])
        return self.conv(waveforms)


class AttentionModule(BaseModule):
    """Two separable 3×3 blocks with ReLU, a 1×1 projection back to the input channels, then a sigmoid"""

    def __init__(self, channels: int, widths: Tuple[int, int], rng: np.random.Generator,
                 separable: bool = True, zero_init: bool = False):
        super().__init__()
        first, second = widths
        self.block1 = conv3x3(channels, first, rng, separable=separable, bias=True)
        self.block2 = conv3x3(first, second, rng, separable=separable, bias=True)
        self.projection = Linear(second, channels, rng, bias=True, zero_init=zero_init)

    def forward(self, stack: Tensor) -> Tensor:
        hidden = F.relu(self.block1(stack))
        hidden = F.relu(self.block2(hidden))
        return F.sigmoid(self.projection(hidden))


def build_feature_stack(x_mel: Optional[ArrayLike], x_wave: Optional[ArrayLike]) -> Tensor:
    """
    Stack maps along a new trailing channel axis, log-Mel first.

    Either input may be omitted for single-representation variants.

    Raises:
        ShapeError: If the maps disagree in shape or both are missing
    """
    maps = [F.as_tensor(m) for m in (x_mel, x_wave) if m is not None]
    if not maps:
        raise ShapeError("feature stack needs at least one map")
    if len(maps) == 2 and maps[0].shape != maps[1].shape:
        raise ShapeError("log-Mel and Wavegram maps differ", mel=maps[0].shape, wavegram=maps[1].shape)
    expanded = [F.reshape(m, m.shape + (1,)) for m in maps]
    return F.concat(expanded, axis=-1) if len(expanded) > 1 else expanded[0]


def apply_attention(stack: Tensor, attention: Tensor) -> Tensor:
    """X̃ = H ⊗ X"""
    if stack.shape != attention.shape:
        raise ShapeError("attention map and features differ", features=stack.shape, attention=attention.shape)
    return F.mul(attention, stack)


@dataclass
class FeatureOutput:
    stack: Tensor
    attention: Optional[Tensor]
    weighted: Tensor


class FeatureNet(BaseModule):
    """Builds X = [X_Mel, X_Wave], H = f_ATT(X) and X̃ according to the feature switches"""

    def __init__(self, config: AsdConfig, rng: np.random.Generator):
        super().__init__()
        model = config.model
        self.use_mel = model.use_mel
        self.wavegram = Wavegram(config.framing, model.wavegram_multiplier, rng) if model.use_wavegram else None
        self.attention = (
            AttentionModule(
                model.feature_channels,
                model.attention_widths,
                rng,
                separable=model.use_separable,
                zero_init=model.attention_init == AttentionInit.ZERO,
            )
            if model.use_attention
            else None
        )

    def forward(self, waveforms: np.ndarray, log_mel: Optional[np.ndarray] = None) -> FeatureOutput:
        x_wave = None
        if self.wavegram is not None:
            x_wave = self.wavegram(np.asarray(waveforms, dtype=get_default_dtype()))
        x_mel = np.asarray(log_mel, dtype=get_default_dtype()) if self.use_mel else None
        if self.use_mel and log_mel is None:
            raise ShapeError("log-Mel input required when use_mel is enabled")
        stack = build_feature_stack(x_mel, x_wave)
        if self.attention is None:
            return FeatureOutput(stack=stack, attention=None, weighted=stack)
        attention = self.attention(stack)
        return FeatureOutput(stack=stack, attention=attention, weighted=apply_attention(stack, attention))

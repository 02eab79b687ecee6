"""
Embedding Backbone
MobileFaceNet-style network: separable stem, inverted bottlenecks, global depthwise pooling, linear embedding
"""

import logging
from typing import List, Tuple

import numpy as np

from ..core.config import ModelConfig, PoolingKind
from ..core.layers import (
    ConvBlock,
    DepthwiseConv2d,
    GlobalAvgPool,
    GlobalDepthwiseConv,
    Linear,
    conv3x3,
    conv_output_size,
)
from ..core.module_interface import BaseModule, ModuleList
from ..core.tensor import Tensor

logger = logging.getLogger(__name__)


class Bottleneck(BaseModule):
    """1×1 expansion, depthwise 3×3, linear 1×1 projection; residual when shapes allow"""

    def __init__(self, in_channels: int, out_channels: int, expansion: int, stride: int,
                 rng: np.random.Generator, momentum: float = 0.1):
        super().__init__()
        hidden = in_channels * expansion
        self.residual = stride == 1 and in_channels == out_channels
        self.expand = ConvBlock(Linear(in_channels, hidden, rng, bias=False), hidden, momentum)
        self.depthwise = ConvBlock(DepthwiseConv2d(hidden, rng, stride=stride), hidden, momentum)
        self.project = ConvBlock(Linear(hidden, out_channels, rng, bias=False), out_channels, momentum,
                                 activation=False)

    def forward(self, x: Tensor) -> Tensor:
        out = self.project(self.depthwise(self.expand(x)))
        return x + out if self.residual else out


def backbone_grid(n_frames: int, n_bins: int, config: ModelConfig) -> Tuple[int, int]:
    """Spatial grid reaching the global pooling layer"""
    height, width = conv_output_size(n_frames, stride=2), conv_output_size(n_bins, stride=2)
    for setting in config.bottleneck_settings:
        height = conv_output_size(height, stride=setting.stride)
        width = conv_output_size(width, stride=setting.stride)
    return height, width


class MobileFaceNet(BaseModule):
    """
    Maps a t × f × C feature stack to an h-dimensional embedding.

    The two stem convolutions are separable or dense depending on
    ``use_separable``; everything after the stem is identical in both builds.
    """

    def __init__(self, in_channels: int, grid: Tuple[int, int], config: ModelConfig,
                 rng: np.random.Generator):
        super().__init__()
        momentum = config.bn_momentum
        stem = config.stem_channels
        separable = config.use_separable

        self.stem1 = ConvBlock(conv3x3(in_channels, stem, rng, separable, stride=2, bias=False), stem, momentum)
        self.stem2 = ConvBlock(conv3x3(stem, stem, rng, separable, stride=1, bias=False), stem, momentum)

        blocks: List[Bottleneck] = []
        channels = stem
        for setting in config.bottleneck_settings:
            for repeat in range(setting.repeats):
                stride = setting.stride if repeat == 0 else 1
                blocks.append(Bottleneck(channels, setting.channels, setting.expansion, stride, rng, momentum))
                channels = setting.channels
        self.blocks = ModuleList(blocks)

        tail = config.tail_channels
        self.tail = ConvBlock(Linear(channels, tail, rng, bias=False), tail, momentum)
        self.grid = backbone_grid(grid[0], grid[1], config)
        if config.global_pooling == PoolingKind.GDC:
            self.pool = ConvBlock(GlobalDepthwiseConv(self.grid[0], self.grid[1], tail, rng), tail, momentum,
                                  activation=False)
        else:
            self.pool = GlobalAvgPool()
        self.embedding = ConvBlock(Linear(tail, config.embedding_dim, rng, bias=False), config.embedding_dim,
                                   momentum, activation=False)
        logger.debug(f"Backbone built with {len(blocks)} bottlenecks, pooling grid {self.grid}")

    def forward(self, x: Tensor) -> Tensor:
        x = self.stem2(self.stem1(x))
        for block in self.blocks:
            x = block(x)
        x = self.pool(self.tail(x))
        return self.embedding(x)

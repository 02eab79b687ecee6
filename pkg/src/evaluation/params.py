"""
Parameter Accounting
Measured and closed-form trainable parameter counts, and the ablation table
"""

import logging
from collections import OrderedDict
from typing import Dict, List

from pydantic import BaseModel, Field

from ..core.config import AsdConfig, PoolingKind
from ..core.layers import dense_conv_parameters, separable_conv_parameters
from ..core.module_interface import BaseModule
from ..modules.backbone import backbone_grid
from ..modules.detector import build_detector

logger = logging.getLogger(__name__)


class ParameterReport(BaseModel):
    total: int
    breakdown: Dict[str, int] = Field(default_factory=dict, description="Counts per module path prefix")


class AblationVariant(BaseModel):
    name: str
    use_attention: bool
    use_separable: bool
    parameters: int


def count_parameters(module: BaseModule, depth: int = 2) -> ParameterReport:
    """Sum of trainable elements, grouped by the first ``depth`` components of each dotted name"""
    breakdown: Dict[str, int] = OrderedDict()
    total = 0
    for name, param in module.named_parameters():
        prefix = ".".join(name.split(".")[:depth])
        breakdown[prefix] = breakdown.get(prefix, 0) + param.size
        total += param.size
    return ParameterReport(total=total, breakdown=dict(breakdown))


def _conv3x3(c_in: int, c_out: int, separable: bool, bias: bool) -> int:
    if separable:
        return separable_conv_parameters(3, c_in, c_out, bias)
    return dense_conv_parameters(3, c_in, c_out, bias)


def expected_parameter_count(config: AsdConfig) -> Dict[str, int]:
    """
    Per-component counts derived from the configuration alone.

    Batch norm contributes 2c (scale, shift), PReLU c. The returned dict
    includes a ``total`` entry.
    """
    framing, model = config.framing, config.model
    f, c = framing.n_mels, model.feature_channels
    counts: Dict[str, int] = OrderedDict()

    if model.use_wavegram:
        m = model.wavegram_multiplier
        counts["wavegram"] = framing.win_length * m + m * f + f
    if model.use_attention:
        w1, w2 = model.attention_widths
        counts["attention"] = (_conv3x3(c, w1, model.use_separable, True)
                               + _conv3x3(w1, w2, model.use_separable, True)
                               + w2 * c + c)

    stem = model.stem_channels
    counts["stem"] = (_conv3x3(c, stem, model.use_separable, False)
                      + _conv3x3(stem, stem, model.use_separable, False) + 2 * 3 * stem)

    blocks, channels = 0, stem
    for setting in model.bottleneck_settings:
        for _ in range(setting.repeats):
            hidden = channels * setting.expansion
            blocks += hidden * (channels + setting.channels + 15) + 2 * setting.channels
            channels = setting.channels
    counts["bottlenecks"] = blocks

    tail = model.tail_channels
    counts["tail"] = channels * tail + 3 * tail
    if model.global_pooling == PoolingKind.GDC:
        height, width = backbone_grid(framing.n_frames, f, model)
        counts["pooling"] = height * width * tail + 2 * tail
    else:
        counts["pooling"] = 0
    h = model.embedding_dim
    counts["embedding"] = tail * h + 2 * h
    counts["head"] = model.n_classes * h
    counts["total"] = sum(counts.values())
    return dict(counts)


def ablation_variants(config: AsdConfig, measure: bool = False) -> List[AblationVariant]:
    """
    The configured build and its w/o-attention, w/o-separable and w/o-both variants.

    Args:
        measure: Build each model and count its tensors instead of using the closed form
    """
    variants = [
        ("full", True, True),
        ("without_attention", False, True),
        ("without_separable", True, False),
        ("without_attention_and_separable", False, False),
    ]
    table = []
    for name, attention, separable in variants:
        variant = config.model_copy(update={
            "model": config.model.model_copy(update={"use_attention": attention, "use_separable": separable})
        })
        if measure:
            parameters = build_detector(variant).num_parameters()
        else:
            parameters = expected_parameter_count(variant)["total"]
        table.append(AblationVariant(name=name, use_attention=attention, use_separable=separable,
                                     parameters=parameters))
        logger.debug(f"Ablation {name}: {parameters:,} parameters")
    return table

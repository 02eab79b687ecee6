"""
Gradient Checks
Central finite-difference verification of reverse-mode gradients for inputs, parameters and the full model
"""

import logging
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from . import functional as F
from .module_interface import BaseModule
from .tensor import Tensor, backward, no_grad, precision

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
# Steps tried in turn for one coordinate; smaller steps avoid straddling ReLU/PReLU kinks
STEP_DIVISORS = (1.0, 10.0, 100.0)
ERROR_FLOOR = 1e-6


class GradCheckReport(BaseModel):
    """Outcome of one finite-difference comparison"""
    name: str = ""
    max_rel_error: float = Field(0.0, description="Largest relative error over checked coordinates")
    tol: float
    checked: int = 0
    failing: List[Tuple[str, List[int]]] = Field(default_factory=list,
                                                  description="(tensor, index) of coordinates above tol")

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


class GradCheckSuiteReport(BaseModel):
    reports: List[GradCheckReport] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def failures(self) -> List[GradCheckReport]:
        return [r for r in self.reports if not r.passed]

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.reports), default=0.0)


def relative_error(analytic: float, numeric: float, floor: float = ERROR_FLOOR) -> float:
    """|a − n| / max(|a|, |n|, floor)"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _numeric_partial(evaluate: Callable[[], float], array: np.ndarray, index: Tuple[int, ...], step: float) -> float:
    original = array[index]
    array[index] = original + step
    plus = evaluate()
    array[index] = original - step
    minus = evaluate()
    array[index] = original
    return (plus - minus) / (2.0 * step)


def _compare(
    report: GradCheckReport,
    label: str,
    evaluate: Callable[[], float],
    array: np.ndarray,
    analytic: np.ndarray,
    indices: Iterable[Tuple[int, ...]],
    eps: float,
) -> None:
    for index in indices:
        best = np.inf
        for divisor in STEP_DIVISORS:
            numeric = _numeric_partial(evaluate, array, index, eps / divisor)
            best = min(best, relative_error(float(analytic[index]), numeric))
            if best < report.tol:
                break
        report.checked += 1
        report.max_rel_error = max(report.max_rel_error, float(best))
        if best >= report.tol:
            report.failing.append((label, [int(i) for i in index]))


def _select(shape: Tuple[int, ...], limit: Optional[int], rng: np.random.Generator) -> List[Tuple[int, ...]]:
    size = int(np.prod(shape, dtype=np.int64))
    if limit is None or size <= limit:
        flat = range(size)
    else:
        flat = sorted(rng.choice(size, size=limit, replace=False))
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: np.ndarray,
    tol: float = 1e-4,
    eps: float = DEFAULT_STEP,
    name: str = "",
    max_coordinates: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    Compare the reverse-mode gradient of a scalar function with central differences.

    Runs in 64-bit precision. Never raises on mismatch; failing
    coordinates are listed in the report.

    Args:
        fn: Scalar-valued function of one tensor
        point: Where to differentiate
        tol: Pass threshold on the maximum relative error
        eps: Finite-difference step
        max_coordinates: Check a random subset of this size (all when None)
    """
    rng = rng or np.random.default_rng(0)
    report = GradCheckReport(name=name, tol=tol)
    with precision(np.float64):
        x = Tensor(np.array(point, dtype=np.float64), requires_grad=True, name="x")
        analytic = backward(fn(x), {"x": x})["x"]
        data = x.data

        def evaluate() -> float:
            with no_grad():
                return fn(Tensor(data)).item()

        _compare(report, "x", evaluate, data, analytic, _select(data.shape, max_coordinates, rng), eps)
    logger.debug(f"grad_check {name or 'fn'}: max relative error {report.max_rel_error:.3e} over {report.checked}")
    return report


def check_parameters(
    loss_fn: Callable[[], Tensor],
    module: BaseModule,
    tol: float = 1e-4,
    eps: float = DEFAULT_STEP,
    name: str = "",
    n_coordinates: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    Finite-difference check of a module's parameter gradients.

    ``loss_fn`` must rebuild the loss from the module's current parameters.
    The module should already hold 64-bit parameters.

    Args:
        n_coordinates: Number of scalar parameters drawn uniformly over the
            whole module; every coordinate is checked when None
    """
    rng = rng or np.random.default_rng(0)
    report = GradCheckReport(name=name, tol=tol)
    named = dict(module.named_parameters())
    with precision(np.float64):
        grads = backward(loss_fn(), named)

        def evaluate() -> float:
            with no_grad():
                return loss_fn().item()

        sizes = np.array([p.size for p in named.values()], dtype=np.int64)
        if n_coordinates is None or n_coordinates >= sizes.sum():
            picks = {n: _select(p.shape, None, rng) for n, p in named.items()}
        else:
            flat = np.sort(rng.choice(int(sizes.sum()), size=n_coordinates, replace=False))
            owners = np.searchsorted(np.cumsum(sizes), flat, side="right")
            starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
            names = list(named)
            picks = {}
            for owner, f in zip(owners, flat):
                param = named[names[owner]]
                index = tuple(int(i) for i in np.unravel_index(int(f - starts[owner]), param.shape))
                picks.setdefault(names[owner], []).append(index)

        for param_name, indices in picks.items():
            param = named[param_name]
            _compare(report, param_name, evaluate, param.data, grads[param_name], indices, eps)
    logger.debug(f"check_parameters {name}: max relative error {report.max_rel_error:.3e} over {report.checked}")
    return report


# Suite

def _away_from_zero(rng: np.random.Generator, shape: Sequence[int], margin: float = 0.1) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=tuple(shape)) * rng.uniform(margin, 1.0, size=tuple(shape))


LayerCase = Tuple[str, Callable[[Tensor], Tensor], Optional[BaseModule], np.ndarray]


def _layer_cases(rng: np.random.Generator) -> List[LayerCase]:
    """(name, forward, module owning parameters, input) for every layer kind"""
    from ..modules.backbone import Bottleneck
    from ..modules.feature_net import AttentionModule
    from . import layers as L

    def case(name: str, module: BaseModule, x: np.ndarray) -> LayerCase:
        return name, module, module, x

    cases: List[LayerCase] = [
        case("linear", L.Linear(4, 3, rng), rng.standard_normal((2, 5, 4))),
        case("depthwise_conv2d", L.DepthwiseConv2d(3, rng), rng.standard_normal((2, 6, 5, 3))),
        case("depthwise_conv2d_stride2", L.DepthwiseConv2d(3, rng, stride=2), rng.standard_normal((2, 7, 6, 3))),
        case("separable_conv2d", L.SeparableConv2d(2, 4, rng, stride=2), rng.standard_normal((2, 6, 6, 2))),
        case("conv2d", L.Conv2d(2, 3, rng), rng.standard_normal((2, 5, 4, 2))),
        case("separable_conv1d", L.SeparableConv1d(8, 3, 4, 4, rng), rng.standard_normal((2, 32))),
        case("batch_norm", L.BatchNorm(3), rng.standard_normal((4, 3, 2, 3))),
        case("prelu", L.PReLU(3), _away_from_zero(rng, (2, 4, 3))),
        case("global_depthwise_conv", L.GlobalDepthwiseConv(3, 2, 4, rng), rng.standard_normal((2, 3, 2, 4))),
        case("bottleneck", Bottleneck(4, 4, 2, 1, rng), rng.standard_normal((2, 4, 4, 4))),
        case("attention", AttentionModule(2, (16, 64), rng), rng.standard_normal((1, 8, 8, 2))),
        ("relu", F.relu, None, _away_from_zero(rng, (3, 5))),
        ("sigmoid", F.sigmoid, None, rng.standard_normal((3, 5))),
        ("cos", F.cos, None, rng.standard_normal((3, 5))),
        ("safe_arccos", F.safe_arccos, None, rng.uniform(-0.9, 0.9, size=(3, 5))),
        ("log_softmax", F.log_softmax, None, rng.standard_normal((3, 5))),
        ("l2_normalize", F.l2_normalize, None, rng.standard_normal((3, 5))),
        ("global_avg_pool", F.global_avg_pool, None, rng.standard_normal((2, 3, 4, 2))),
    ]
    return cases


def _check_layer(case: LayerCase, rng: np.random.Generator, tol: float, eps: float) -> List[GradCheckReport]:
    name, forward, module, x = case
    with no_grad():
        weights = rng.standard_normal(forward(Tensor(x)).shape)

    def objective(t: Tensor) -> Tensor:
        return F.sum(F.mul(forward(t), weights))

    reports = [grad_check(objective, x, tol=tol, eps=eps, name=f"{name}/input", max_coordinates=24, rng=rng)]
    if module is not None and module.num_parameters():
        reports.append(check_parameters(lambda: objective(Tensor(x)), module, tol=tol, eps=eps,
                                        name=f"{name}/parameters", n_coordinates=24, rng=rng))
    return reports


def _check_arcface(rng: np.random.Generator, tol: float, eps: float) -> List[GradCheckReport]:
    from ..modules.arcface import ArcFaceHead, arcface_angles, arcface_loss, combined_loss, one_hot

    n, c, h = 3, 4, 6
    head = ArcFaceHead(c, h, rng, scale=40.0, margin=0.7)
    embedding = rng.standard_normal((n, h))
    y = one_hot(rng.integers(0, c, size=n), c)
    perm = rng.permutation(n)
    lam = float(rng.uniform(0.05, 0.95))
    y_mixed = lam * y + (1.0 - lam) * y[perm]
    weights = Tensor(head.weight.data)

    def loss_of(e: Tensor) -> Tensor:
        return arcface_loss(arcface_angles(e, weights), y, 40.0, 0.7)

    def combined_of(e: Tensor) -> Tensor:
        return combined_loss(arcface_angles(e, weights), y, y_mixed, lam, 40.0, 0.7)

    return [
        grad_check(loss_of, embedding, tol=tol, eps=eps, name="arcface_loss/embedding"),
        grad_check(combined_of, embedding, tol=tol, eps=eps, name="combined_loss/embedding"),
        check_parameters(lambda: head.combined_loss(head(Tensor(embedding)), y, y_mixed, lam), head,
                         tol=tol, eps=eps, name="arcface_head/parameters"),
    ]


def gradcheck_config():
    """Smallest complete detector configuration (13×8 maps, 4×2 pooling grid)"""
    from .config import AsdConfig, FramingConfig, ModelConfig, TrainConfig

    return AsdConfig(
        framing=FramingConfig(clip_seconds=0.1, win_ms=16.0, n_mels=8),
        model=ModelConfig(
            embedding_dim=8,
            n_classes=3,
            wavegram_multiplier=2,
            stem_channels=4,
            bottlenecks="2:4:1:2",
            tail_channels=8,
            attention_filters="4,8",
        ),
        train=TrainConfig(batch_size=2),
    )


def check_full_model(rng: np.random.Generator, tol: float = 1e-3, eps: float = DEFAULT_STEP,
                     n_coordinates: int = 10, batch: int = 2) -> GradCheckReport:
    """Mixup-combined loss of the complete detector against randomly chosen parameters"""
    from ..modules.arcface import one_hot
    from ..modules.detector import build_detector
    from ..training.mixup import draw_mixup, mixup_batch

    config = gradcheck_config()
    with precision(np.float64):
        detector = build_detector(config, rng)
        waveforms = 0.3 * rng.standard_normal((batch, config.framing.n_samples))
        labels = one_hot(rng.integers(0, config.model.n_classes, size=batch), config.model.n_classes)
        mixed = mixup_batch(waveforms, labels, draw_mixup(rng, batch, config.train.alpha))

        def loss_fn() -> Tensor:
            angles = detector(mixed.waveforms).angles
            return detector.head.combined_loss(angles, mixed.y_dominant, mixed.y_mixed, mixed.lam)

        return check_parameters(loss_fn, detector, tol=tol, eps=eps, name="full_model/parameters",
                                n_coordinates=n_coordinates, rng=rng)


def run_gradcheck_suite(seeds: int = 20, tol: float = 1e-4, model_tol: float = 1e-3,
                        eps: float = DEFAULT_STEP, include_model: bool = True) -> GradCheckSuiteReport:
    """
    Finite-difference checks over every layer kind, the attention module,
    the ArcFace losses and (optionally) the full detector, once per seed.
    """
    suite = GradCheckSuiteReport()
    with precision(np.float64):
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            for case in _layer_cases(rng):
                suite.reports.extend(_check_layer(case, rng, tol, eps))
            suite.reports.extend(_check_arcface(rng, tol, eps))
            if include_model:
                suite.reports.append(check_full_model(rng, tol=model_tol, eps=eps))
    status = "passed" if suite.passed else f"failed ({len(suite.failures)} checks)"
    logger.info(f"Gradient suite {status}: {len(suite.reports)} checks, "
                f"max relative error {suite.max_rel_error:.3e}")
    return suite

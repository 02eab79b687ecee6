"""
Training Loop
Seeded mixup + AdamW optimisation of the full detector with best/last checkpoint tracking
"""

import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog

from ..core.config import AsdConfig
from ..core.errors import DataError, NonFiniteLossError
from ..core.logging_config import epoch_log_writer
from ..core.tensor import Tensor, backward
from ..data.dataset import ClipSet, LabelVocab
from ..modules.arcface import one_hot
from ..modules.detector import AnomalyDetector, build_detector
from .checkpoint import ModelCheckpoint, checkpoint_from_detector, save_checkpoint
from .mixup import draw_mixup, mixup_batch
from .optim import AdamW

logger = logging.getLogger(__name__)
events = structlog.get_logger(__name__)


@dataclass
class EpochSummary:
    epoch: int
    loss: float
    accuracy: float
    seconds: float


EpochCallback = Callable[[EpochSummary], None]


class EpochLogCallback:
    """Appends one JSON line per epoch to a training log"""

    def __init__(self, stream: IO[str]):
        self._log = epoch_log_writer(stream)

    def __call__(self, summary: EpochSummary) -> None:
        self._log.info("epoch_complete", **asdict(summary))


@dataclass
class TrainingResult:
    last: ModelCheckpoint
    best: ModelCheckpoint
    history: List[EpochSummary]


class Trainer:
    """
    Drives optimisation of an AnomalyDetector.

    Random draws come from one generator in a fixed order: the epoch
    shuffle, then for each batch the mixup coefficient followed by the
    pairing permutation.
    """

    def __init__(self, detector: AnomalyDetector, config: AsdConfig, vocab: LabelVocab,
                 rng: np.random.Generator):
        self.detector = detector
        self.config = config
        self.vocab = vocab
        self.rng = rng
        train = config.train
        self.optimizer = AdamW(
            dict(detector.named_parameters()),
            lr=train.lr,
            betas=(train.beta1, train.beta2),
            eps=train.adam_eps,
            weight_decay=train.weight_decay,
        )
        self.history: List[EpochSummary] = []
        self.best: Optional[ModelCheckpoint] = None
        self._best_loss = float("inf")

    def batches(self, n_clips: int) -> List[np.ndarray]:
        """Shuffled index batches; a size-1 remainder cannot be mixed and is dropped"""
        order = self.rng.permutation(n_clips)
        size = self.config.train.batch_size
        batches = [order[i:i + size] for i in range(0, n_clips, size)]
        if batches and len(batches[-1]) < 2:
            batches.pop()
        return batches

    def train_step(self, clips: ClipSet, indices: np.ndarray, epoch: int, batch_no: int) -> Tuple[float, int]:
        """One mixup batch; returns (loss, correct predictions)"""
        train = self.config.train
        labels = clips.labels[indices]
        y = one_hot(labels, self.detector.n_classes)
        draw = draw_mixup(self.rng, len(indices), train.alpha)
        batch = mixup_batch(clips.waveforms[indices], y, draw)

        self.detector.zero_grad()
        output = self.detector(batch.waveforms)
        loss = self.detector.head.combined_loss(output.angles, batch.y_dominant, batch.y_mixed, batch.lam)
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteLossError("training loss is not finite", epoch=epoch, batch=batch_no, loss=value,
                                     parameter=self.first_non_finite(loss))

        grads = backward(loss, self.optimizer.parameters)
        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                raise NonFiniteLossError("non-finite gradient", epoch=epoch, batch=batch_no, parameter=name)
        self.optimizer.step(grads)

        # Accuracy against whichever clip dominates the mix
        target = labels if batch.lam >= 0.5 else labels[draw.permutation]
        predicted = np.argmin(output.angles.data, axis=-1)
        return value, int(np.sum(predicted == target))

    def first_non_finite(self, loss: Tensor) -> Optional[str]:
        """Name of the first parameter whose value, or failing that whose gradient, is not finite"""
        params = self.optimizer.parameters
        for name, param in params.items():
            if not np.all(np.isfinite(param.data)):
                return name
        with np.errstate(all="ignore"):
            grads = backward(loss, params)
        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                return name
        return None

    def train_epoch(self, clips: ClipSet, epoch: int) -> EpochSummary:
        started = time.perf_counter()
        self.detector.train()
        losses: List[float] = []
        weights: List[int] = []
        correct = 0
        for batch_no, indices in enumerate(self.batches(len(clips))):
            loss, hits = self.train_step(clips, indices, epoch, batch_no)
            losses.append(loss)
            weights.append(len(indices))
            correct += hits
        seen = int(np.sum(weights))
        return EpochSummary(
            epoch=epoch,
            loss=float(np.average(losses, weights=weights)),
            accuracy=correct / seen,
            seconds=time.perf_counter() - started,
        )

    def snapshot(self, epoch: int, with_optimizer: bool = False) -> ModelCheckpoint:
        return checkpoint_from_detector(
            self.detector,
            epoch,
            vocab=self.vocab.labels(),
            optimizer=self.optimizer.state_dict() if with_optimizer else None,
            step=self.optimizer.step_count,
        )

    def fit(self, clips: ClipSet, callbacks: Sequence[EpochCallback] = ()) -> TrainingResult:
        """
        Run ``config.train.epochs`` epochs.

        Raises:
            DataError: Fewer than two training clips
            NonFiniteLossError: Loss or gradient stopped being finite
        """
        if len(clips) < 2:
            raise DataError("training needs at least two clips", clips=len(clips))
        epochs = self.config.train.epochs
        logger.info(f"Training on {len(clips)} clips for {epochs} epochs")

        for epoch in range(1, epochs + 1):
            summary = self.train_epoch(clips, epoch)
            self.history.append(summary)
            events.info("epoch_complete", **asdict(summary))
            if summary.loss < self._best_loss:
                self._best_loss = summary.loss
                self.best = self.snapshot(epoch)
            for callback in callbacks:
                callback(summary)

        last = self.snapshot(epochs, with_optimizer=True)
        assert self.best is not None
        return TrainingResult(last=last, best=self.best, history=self.history)


def train(
    clips: ClipSet,
    config: AsdConfig,
    vocab: LabelVocab,
    callbacks: Sequence[EpochCallback] = (),
    rng: Optional[np.random.Generator] = None,
) -> TrainingResult:
    """
    Build a detector sized to ``vocab`` and train it on ``clips``.

    The generator (seeded from ``config.train.seed`` when omitted) is
    consumed for initialisation first, then by the training loop.
    """
    if len(vocab) != config.model.n_classes:
        config = config.model_copy(update={"model": config.model.model_copy(update={"n_classes": len(vocab)})})
    if len(clips) and int(clips.labels.max()) >= len(vocab):
        raise DataError("clip labels are not covered by the vocabulary", vocab=len(vocab))
    rng = rng if rng is not None else np.random.default_rng(config.train.seed)
    detector = build_detector(config, rng)
    return Trainer(detector, config, vocab, rng).fit(clips, callbacks)


def save_training_run(result: TrainingResult, out: Union[str, Path]) -> List[Path]:
    """Write ``<out>`` (last), ``<stem>.best<suffix>`` and return both paths"""
    out = Path(out)
    best_path = out.with_name(f"{out.stem}.best{out.suffix or '.asdc'}")
    return [save_checkpoint(result.last, out), save_checkpoint(result.best, best_path)]

"""Training with a plateau learning-rate schedule, fine-tuning and evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .metrics import EvalReport, SampleScore
from .model import Checkpoint, Recognizer, load_weights
from .optim import make_optimizer
from .raster import RasterImage
from .tensor import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class Example:
    name: str
    image: RasterImage
    label: str


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-3
    lr_decay_factor: float = 10.0
    plateau_patience_epochs: int = 15
    stop_lr: float = 1e-6
    batch_size: int = 8
    max_epochs: int = 300
    seed: int = 0
    optimizer: str = "adam"
    target_cer: float | None = None  # stop as soon as validation CER <= this

    def __post_init__(self):
        if not self.initial_lr > self.stop_lr > 0:
            raise ConfigurationError("need initial_lr > stop_lr > 0")
        if self.plateau_patience_epochs < 1:
            raise ConfigurationError("plateau patience must be >= 1")
        if self.lr_decay_factor <= 1:
            raise ConfigurationError("lr_decay_factor must exceed 1")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigurationError("batch_size must be >= 1 and max_epochs >= 0")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def full_scale(cls) -> TrainConfig:
        """Original absolute learning rates (1e-8 down to 1e-11); far too small to learn at desk scale."""
        return cls(initial_lr=1e-8, stop_lr=1e-11)

    def to_dict(self) -> dict:
        return asdict(self)


class PlateauSchedule:
    """Divide the learning rate when validation CER stops reaching new minima.

    After ``patience`` consecutive epochs without a strictly lower CER the rate
    drops by ``factor`` and the counter restarts; training ends once the rate
    has come down to ``stop_lr``.
    """

    def __init__(self, lr: float, factor: float = 10.0, patience: int = 15, stop_lr: float = 1e-6):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.stop_lr = stop_lr
        self.best = math.inf
        self.bad_epochs = 0
        self.stopped = False

    def update(self, metric: float) -> bool:
        """Record one epoch's validation metric; returns True if the rate was cut."""
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs < self.patience:
            return False
        self.lr /= self.factor
        self.bad_epochs = 0
        # "reaches" the floor: tolerate the rounding of repeated division
        if self.lr <= self.stop_lr * (1 + 1e-9):
            self.stopped = True
        return True


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, lr: float):
        self.epoch, self.batch, self.lr = epoch, batch, lr
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}, lr {lr:g}")


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_cer: float
    val_wer: float

    def line(self) -> str:
        return f"epoch={self.epoch} lr={self.lr:g} train_loss={self.train_loss:.4f} val_cer={round(self.val_cer, 4)}"


def evaluate(model: Recognizer, dataset: Sequence[Example], batch_size: int = 1) -> EvalReport:
    """Greedy-decode every example and score it; failed decodes count as empty output.

    Images are decoded one at a time by default. In a padded batch the
    normalised background differs from the convolutions' zero padding, so
    columns near an image's right edge would depend on its batch mates and
    the score would not match what ``recognize`` gives for that image alone.
    """
    if not dataset:
        raise ValueError("evaluation set is empty")
    pairs = []
    order = sorted(range(len(dataset)), key=lambda i: dataset[i].image.width)
    hyps: dict[int, str] = {}
    for lo in range(0, len(order), batch_size):
        chunk = order[lo : lo + batch_size]
        try:
            out = model.recognize([dataset[i].image for i in chunk])
            for i, (text, _, _) in zip(chunk, out):
                hyps[i] = text
        except Exception:
            for i in chunk:
                try:
                    hyps[i] = model.recognize([dataset[i].image])[0][0]
                except Exception as exc:  # one bad sample must not sink the run
                    logger.warning("decode failed for %s: %s", dataset[i].name, exc)
                    hyps[i] = ""
    for i, ex in enumerate(dataset):
        pairs.append(SampleScore.score(ex.name, ex.label, hyps[i]))
    return EvalReport(pairs)


def make_batches(dataset: Sequence[Example], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffle, bucket by rendered width, then shuffle the bucket order."""
    idx = rng.permutation(len(dataset))
    idx = sorted(idx, key=lambda i: dataset[i].image.width)
    batches = [idx[i : i + batch_size] for i in range(0, len(idx), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def train(
    model: Recognizer,
    train_set: Sequence[Example],
    val_set: Sequence[Example],
    cfg: TrainConfig,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> Checkpoint:
    """Minimize the teacher-forced loss; returns the best-validation-CER checkpoint.

    The model is left holding the best weights.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = make_optimizer(cfg.optimizer, params, cfg.initial_lr)
    sched = PlateauSchedule(cfg.initial_lr, cfg.lr_decay_factor, cfg.plateau_patience_epochs, cfg.stop_lr)
    best = Checkpoint.from_model(model, 0, None)
    history: list[EpochLog] = []

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        losses = []
        for b, batch in enumerate(make_batches(train_set, cfg.batch_size, rng)):
            loss = model.loss([train_set[i].image for i in batch], [train_set[i].label for i in batch])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, b, opt.lr)
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            losses.append(value)
        report = evaluate(model, val_set)
        entry = EpochLog(epoch, opt.lr, float(np.mean(losses)), report.cer, report.wer)
        history.append(entry)
        logger.info(entry.line())
        if on_epoch is not None:
            on_epoch(entry)
        if best.best_val_cer is None or report.cer < best.best_val_cer:
            best = Checkpoint.from_model(model, epoch, report.cer)
        sched.update(report.cer)
        opt.lr = sched.lr
        if sched.stopped:
            break
        if cfg.target_cer is not None and report.cer <= cfg.target_cer:
            break

    load_weights(model, best)
    best.extra = {"history": [asdict(h) for h in history]}
    return best


def finetune(
    checkpoint: Checkpoint,
    model: Recognizer,
    train_set: Sequence[Example],
    val_set: Sequence[Example],
    cfg: TrainConfig,
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> Checkpoint:
    """Start from ``checkpoint``'s weights, fresh schedule and optimizer state, then train."""
    load_weights(model, checkpoint)
    if cfg.max_epochs == 0:
        return Checkpoint.from_model(model, checkpoint.epoch, checkpoint.best_val_cer)
    return train(model, train_set, val_set, cfg, on_epoch)

"""Joint training of phi and the encoder from pair or triplet supervision."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .datagen import LabeledPoints, PairSet
from .losses import matrix_lookup, mine_from_matrix, mse_loss, triplet_loss
from .optim import Adam

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1000
    lr: float = 1e-3
    seed: int = 0
    margin: float = 0.2
    # two-phase constant schedule: lr * lr_drop_factor from this epoch on
    lr_drop_epoch: int | None = None
    lr_drop_factor: float = 0.1

    def lr_at(self, epoch: int) -> float:
        if self.lr_drop_epoch is not None and epoch >= self.lr_drop_epoch:
            return self.lr * self.lr_drop_factor
        return self.lr

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    split: str
    loss: float


@dataclass
class TrainResult:
    model: object
    trace: list[LossRecord] = field(default_factory=list)

    def losses(self, split: str = "train") -> list[float]:
        return [r.loss for r in self.trace if r.split == split]


def _check_finite(loss: ad.Tensor, epoch: int, step: int) -> None:
    if not np.isfinite(loss.data):
        raise TrainingDiverged(f"loss became {float(loss.data)} at epoch {epoch}, step {step}")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def predict_pairs(model, a: np.ndarray, b: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    bound = model.bind(None)
    out = [bound.divergence(a[i : i + batch_size], b[i : i + batch_size]).data for i in range(0, len(a), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def evaluate_regression(model, pairs: PairSet) -> dict[str, float]:
    pred = predict_pairs(model, pairs.a, pairs.b)
    err = pred - pairs.target
    return {"mse": float(np.mean(err**2)), "mae": float(np.mean(np.abs(err)))}


def train_regression(model, pairs: PairSet, config: TrainConfig, test_pairs: PairSet | None = None) -> TrainResult:
    """Minibatch version of the pair-regression loop.

    For each batch: embed both sides, form phi(x) - phi(y) - <grad phi(y), x - y>,
    take the MSE against the targets, backpropagate through the gradient
    term, and apply one Adam update to every parameter of phi and the encoder.
    The train trace records the mean batch loss per epoch.
    """
    if len(pairs) == 0:
        raise ValueError("train_regression: no pairs")
    rng = np.random.default_rng(config.seed)
    opt = Adam(lr=config.lr)
    params = model.arrays()
    result = TrainResult(model)
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        total = 0.0
        for step, idx in enumerate(_batches(len(pairs), config.batch_size, rng)):
            tape = ad.Tape()
            pred = model.bind(tape).divergence(pairs.a[idx], pairs.b[idx])
            loss = mse_loss(pred, pairs.target[idx])
            _check_finite(loss, epoch, step)
            opt.step(params, tape.gradients(loss))
            total += loss.item() * len(idx)
        result.trace.append(LossRecord(epoch, "train", total / len(pairs)))
        if test_pairs is not None:
            result.trace.append(LossRecord(epoch, "test", evaluate_regression(model, test_pairs)["mse"]))
        log.debug("epoch %d train %.6g", epoch, total / len(pairs))
    return result


def train_triplet(model, points: LabeledPoints, config: TrainConfig) -> TrainResult:
    """Triplet training with batch-all mining inside each minibatch.

    Divergences for the whole batch come from one all-pairs evaluation;
    triplets are mined once per batch from those values (margin
    ``config.margin``, direction D(anchor, other)), and the hinge loss over
    the mined triplets is backpropagated.
    """
    if len(points) == 0:
        raise ValueError("train_triplet: no points")
    rng = np.random.default_rng(config.seed)
    opt = Adam(lr=config.lr)
    params = model.arrays()
    result = TrainResult(model)
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        losses = []
        for step, idx in enumerate(_batches(len(points), config.batch_size, rng)):
            tape = ad.Tape()
            xb = points.x[idx]
            dmat = model.bind(tape).pairwise(xb, xb)
            batch = mine_from_matrix(dmat.data, points.labels[idx], config.margin)
            loss = triplet_loss(batch, matrix_lookup(dmat))
            _check_finite(loss, epoch, step)
            opt.step(params, tape.gradients(loss))
            losses.append(loss.item())
        result.trace.append(LossRecord(epoch, "train", float(np.mean(losses))))
    return result


def evaluate_triplet(model, points: LabeledPoints, batch_size: int = 1000, margin: float = 0.2) -> float:
    """Mean mined-triplet loss over consecutive (unshuffled) batches."""
    bound = model.bind(None)
    losses = []
    for start in range(0, len(points), batch_size):
        xb = points.x[start : start + batch_size]
        dmat = bound.pairwise(xb, xb)
        batch = mine_from_matrix(dmat.data, points.labels[start : start + batch_size], margin)
        losses.append(triplet_loss(batch, matrix_lookup(dmat)).item())
    return float(np.mean(losses))


def write_trace_csv(trace: list[LossRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "split", "loss"])
        for r in trace:
            w.writerow([r.epoch, r.split, repr(float(r.loss))])

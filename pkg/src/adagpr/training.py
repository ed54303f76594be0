"""Transductive training: splits, Adam with weight-decay groups, early stopping."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import models
from .errors import ContractError, ParameterError, SplitError, TrainingDivergence
from .graph import Graph, SparseMatrix, normalize_adjacency
from .autodiff import Tape, nll_loss_masked

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64).ravel())
        if self.train.size == 0:
            raise SplitError("training set is empty")
        parts = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        if sum(len(p) for p in parts) != self.train.size + self.val.size + self.test.size:
            raise SplitError("split contains duplicate node ids")
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise SplitError("train/val/test sets overlap")

    def validate(self, num_nodes: int):
        for name in ("train", "val", "test"):
            ids = getattr(self, name)
            if ids.size and (ids.min() < 0 or ids.max() >= num_nodes):
                raise SplitError(f"{name} ids must lie in [0, {num_nodes})")

    def sizes(self) -> tuple[int, int, int]:
        return (self.train.size, self.val.size, self.test.size)

    def to_dict(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}


def make_split(labels, mode: str = "standard", seed: int = 0, per_class: int = 20,
               val_size: int = 500, test_size: int = 1000,
               fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)) -> Split:
    """Build a split.

    ``standard``: first ``per_class`` nodes of every class (by id) train,
    then the next ``val_size`` remaining ids validate and the following
    ``test_size`` test.  ``random_fractions``: per-class shuffles with
    ``seed`` cut by ``fractions``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if mode == "standard":
        train = []
        for c in classes:
            ids = np.flatnonzero(labels == c)
            if ids.size < per_class:
                raise SplitError(f"class {c} has {ids.size} nodes, need {per_class}")
            train.extend(ids[:per_class].tolist())
        train = np.sort(np.array(train, dtype=np.int64))
        rest = np.setdiff1d(np.arange(labels.size), train)
        if rest.size < val_size + test_size:
            raise SplitError(f"only {rest.size} nodes left for {val_size} val + {test_size} test")
        return Split(train, rest[:val_size], rest[val_size:val_size + test_size])
    if mode == "random_fractions":
        f_train, f_val, _ = fractions
        rng = np.random.default_rng(seed)
        parts = ([], [], [])
        for c in classes:
            ids = rng.permutation(np.flatnonzero(labels == c))
            n_tr = int(round(f_train * ids.size))
            n_va = int(round(f_val * ids.size))
            if n_tr < 1:
                raise SplitError(f"class {c} has too few nodes for a {fractions} split")
            parts[0].extend(ids[:n_tr].tolist())
            parts[1].extend(ids[n_tr:n_tr + n_va].tolist())
            parts[2].extend(ids[n_tr + n_va:].tolist())
        return Split(*(np.sort(np.array(p, dtype=np.int64)) for p in parts))
    raise SplitError(f"unknown split mode {mode!r}")


@dataclass
class TrainConfig:
    lr: float = 0.01
    wd1: float = 5e-4
    wd2: float = 1e-4
    wd3: float = 0.0
    max_epochs: int = 1500
    patience: int = 100
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError("lr must be positive")
        if min(self.wd1, self.wd2, self.wd3) < 0:
            raise ParameterError("weight decays must be non-negative")
        if self.max_epochs < 1 or self.eval_every < 1:
            raise ParameterError("max_epochs and eval_every must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ParameterError("patience must lie in [0, max_epochs]")

    def decay_for(self, group: str) -> float:
        return {models.GROUP_INITIAL: self.wd1, models.GROUP_HIDDEN: self.wd2,
                models.GROUP_COEFF: self.wd3}[group]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: models.ParameterSet) -> "AdamState":
        return cls({n: np.zeros_like(p) for n, p in params.values.items()},
                   {n: np.zeros_like(p) for n, p in params.values.items()})


def adam_step(params: models.ParameterSet, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, wd_per_group: dict[str, float]) -> None:
    """One in-place Adam update with L2 folded into the gradient."""
    state.t += 1
    t = state.t
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for name, p in params.values.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ContractError(f"{name}: gradient/state shape does not match parameter {p.shape}")
        wd = wd_per_group[params.groups[name]]
        if wd:
            g = g + wd * p
        m = state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def accuracy(log_probs: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    if idx.size == 0:
        return float("nan")
    # argmax returns the lowest index on ties
    return float(np.mean(np.argmax(log_probs[idx], axis=1) == labels[idx]))


def masked_nll(log_probs: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    if idx.size == 0:
        return float("nan")
    return float(-np.mean(log_probs[idx, labels[idx]]))


@dataclass
class Metrics:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    test_accuracy: float = float("nan")
    best_epoch: int = 0
    epochs_run: int = 0
    wall_seconds: float = 0.0

    def to_dict(self, include_time: bool = True) -> dict:
        return {
            "test_accuracy": self.test_accuracy,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "train_loss": list(self.train_loss),
            "val_loss": list(self.val_loss),
            "val_accuracy": list(self.val_accuracy),
            "wall_seconds": self.wall_seconds if include_time else None,
        }


@dataclass
class CoefficientTrace:
    """Per-layer GPR coefficients recorded during training."""

    epochs: list[int] = field(default_factory=list)
    tables: list[np.ndarray] = field(default_factory=list)

    def append(self, epoch: int, table: np.ndarray):
        self.epochs.append(epoch)
        self.tables.append(np.array(table, copy=True))


@dataclass
class FitResult:
    params: models.ParameterSet
    metrics: Metrics
    trace: CoefficientTrace
    final_params: models.ParameterSet
    best_coefficients: np.ndarray


def evaluate(spec: models.ModelSpec, params: models.ParameterSet, a: SparseMatrix,
             x: np.ndarray) -> np.ndarray:
    """Eval-mode log-probabilities."""
    return models.forward(spec, params, a, x, train=False).value


def fit(spec: models.ModelSpec, cfg: TrainConfig, a: "SparseMatrix | Graph", x: np.ndarray,
        labels, split: Split, params: Optional[models.ParameterSet] = None,
        callback: Optional[Callable[[int, models.ParameterSet], None]] = None) -> FitResult:
    """Full-graph training with early stopping on validation loss.

    The parameter snapshot with the lowest validation loss is returned and
    used for the reported test accuracy.  ``callback(epoch, params)`` runs
    after every update and may modify ``params`` in place.
    """
    if isinstance(a, Graph):
        a = normalize_adjacency(a)
    labels = np.asarray(labels, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    split.validate(x.shape[0])
    if labels.shape[0] != x.shape[0]:
        raise ParameterError("labels and features disagree on the number of nodes")
    rng = np.random.default_rng(cfg.seed)
    params = models.init_params(spec, rng) if params is None else params.copy()
    models.check_params(spec, params)
    decay = {g: cfg.decay_for(g) for g in (models.GROUP_INITIAL, models.GROUP_HIDDEN, models.GROUP_COEFF)}
    state = AdamState.zeros_like(params)
    metrics = Metrics()
    trace = CoefficientTrace()
    trace.append(0, models.coefficient_table(spec, params))
    eval_idx = split.val if split.val.size else split.train
    best_loss = np.inf
    best = params.copy()
    bad = 0
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        tape = Tape()
        out = models.forward(spec, params, a, x, train=True, rng=rng, tape=tape)
        loss = nll_loss_masked(out, labels, split.train)
        train_loss = float(loss.value[0, 0])
        if not np.isfinite(train_loss):
            raise TrainingDivergence(epoch)
        grads = tape.backward(loss)
        adam_step(params, grads, state, cfg.lr, decay)
        if callback is not None:
            callback(epoch, params)

        lp = evaluate(spec, params, a, x)
        val_loss = masked_nll(lp, labels, eval_idx)
        if not np.isfinite(val_loss):
            raise TrainingDivergence(epoch, f"non-finite validation loss at epoch {epoch}")
        metrics.train_loss.append(train_loss)
        metrics.val_loss.append(val_loss)
        metrics.val_accuracy.append(accuracy(lp, labels, eval_idx))
        metrics.epochs_run = epoch
        if epoch % cfg.eval_every == 0:
            trace.append(epoch, models.coefficient_table(spec, params))
        if val_loss < best_loss:
            best_loss = val_loss
            best = params.copy()
            metrics.best_epoch = epoch
            bad = 0
        else:
            bad += 1
        if bad >= cfg.patience:
            break
    metrics.wall_seconds = time.perf_counter() - start
    metrics.test_accuracy = accuracy(evaluate(spec, best, a, x), labels, split.test)
    log.debug("fit: %d epochs, best %d, test acc %.4f", metrics.epochs_run,
              metrics.best_epoch, metrics.test_accuracy)
    return FitResult(best, metrics, trace, params, models.coefficient_table(spec, best))

"""Reverse-mode automatic differentiation over dense 2-D arrays.

A :class:`Tape` owns every tensor created on it.  Operations are plain
functions that record a backward closure whenever one of their inputs
requires a gradient.  Sparse matrices only ever enter as constants.

Shapes are always explicit: no broadcasting, vectors are ``(1, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import graph as _graph
from . import sparsemax as _sm
from .errors import ContractError, DimensionError, ParameterError, ValidationError


class Tensor:
    """A value node on a tape."""

    __slots__ = ("value", "tape", "requires_grad", "node", "name", "grad")

    def __init__(self, value, tape: "Tape", requires_grad: bool, node: int, name: Optional[str] = None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {value.shape}")
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.node = node
        self.name = name
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
    info: Optional[dict] = None


class Tape:
    def __init__(self):
        self.records: list[Record] = []
        self.leaves: list[Tensor] = []
        self._next = 0
        self._done = False

    def _new(self, value, requires_grad, name=None) -> Tensor:
        t = Tensor(value, self, requires_grad, self._next, name)
        self._next += 1
        return t

    def tensor(self, value, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
        t = self._new(value, requires_grad, name)
        self.leaves.append(t)
        return t

    def constant(self, value) -> Tensor:
        return self.tensor(value, False)

    def param(self, name: str, value) -> Tensor:
        return self.tensor(value, True, name)

    def record(self, op, inputs, value, backward, info=None) -> Tensor:
        requires = any(t.requires_grad for t in inputs)
        out = self._new(value, requires)
        if requires:
            self.records.append(Record(op, tuple(inputs), out, backward, info))
        return out

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Fill ``.grad`` on every tensor that requires one.

        Returns ``{leaf name: gradient}`` for leaves with ``requires_grad``.
        A tape can be differentiated once.
        """
        if loss.tape is not self:
            raise ContractError("loss tensor belongs to another tape")
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar root, got shape {loss.shape}")
        if self._done:
            raise ContractError("backward already ran on this tape")
        self._done = True
        grads: dict[int, np.ndarray] = {}
        if loss.requires_grad:
            grads[loss.node] = np.ones((1, 1))
        for rec in reversed(self.records):
            g = grads.pop(rec.output.node, None)
            if g is None:
                continue
            rec.output.grad = g
            for inp, pg in zip(rec.inputs, rec.backward(g)):
                if pg is None or not inp.requires_grad:
                    continue
                prev = grads.get(inp.node)
                grads[inp.node] = pg if prev is None else prev + pg
        out = {}
        for leaf in self.leaves:
            if leaf.requires_grad:
                leaf.grad = grads.get(leaf.node, np.zeros(leaf.shape))
                out[leaf.name or f"t{leaf.node}"] = leaf.grad
        return out


def _tape_of(*ts: Tensor) -> Tape:
    tape = ts[0].tape
    for t in ts[1:]:
        if t.tape is not tape:
            raise ContractError("tensors from different tapes cannot be combined")
    return tape


def _same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return tape.record("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def spmm_const(a: "_graph.SparseMatrix", x: Tensor) -> Tensor:
    if a.n_cols != x.shape[0]:
        raise DimensionError(f"spmm: {a.shape} @ {x.shape}")
    return x.tape.record("spmm", (x,), _graph.spmm(a, x.value), lambda g: (_graph.spmm_t(a, g),))


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    _same_shape(a, b, "add")
    return tape.record("add", (a, b), a.value + b.value, lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape.record("scale", (a,), c * a.value, lambda g: (c * g,))


def affine_combine(c1: float, a: Tensor, c2: float, b: Tensor) -> Tensor:
    """``c1 * a + c2 * b``."""
    tape = _tape_of(a, b)
    _same_shape(a, b, "affine_combine")
    c1, c2 = float(c1), float(c2)
    return tape.record(
        "affine_combine", (a, b), c1 * a.value + c2 * b.value, lambda g: (c1 * g, c2 * g)
    )


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    # np.maximum propagates NaN so divergence stays visible
    return a.tape.record("relu", (a,), np.maximum(a.value, 0.0), lambda g: (g * mask,))


def dropout(a: Tensor, rate: float, train: bool, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout.  Identity in eval mode or at rate 0 (no RNG draw)."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    keep = rng.random(a.shape) >= rate
    factor = keep / (1.0 - rate)
    return a.tape.record("dropout", (a,), a.value * factor, lambda g: (g * factor,))


def log_softmax_rows(a: Tensor) -> Tensor:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return a.tape.record(
        "log_softmax", (a,), out, lambda g: (g - soft * g.sum(axis=1, keepdims=True),)
    )


def _rect_identity(n_in: int, n_out: int) -> np.ndarray:
    return np.eye(n_in, n_out)


def identity_mix(h: Tensor, w: Tensor, beta: float) -> Tensor:
    """``H ((1 - beta) I + beta W)`` with I the (possibly rectangular) identity."""
    tape = _tape_of(h, w)
    if h.shape[1] != w.shape[0]:
        raise DimensionError(f"identity_mix: {h.shape} @ {w.shape}")
    beta = float(beta)
    hv, wv = h.value, w.value
    n_in, n_out = wv.shape
    if n_in == n_out:
        h_id = hv
    else:
        h_id = hv @ _rect_identity(n_in, n_out)
    value = (1.0 - beta) * h_id + beta * (hv @ wv)

    def backward(g):
        g_id = g if n_in == n_out else g @ _rect_identity(n_in, n_out).T
        return (1.0 - beta) * g_id + beta * (g @ wv.T), beta * (hv.T @ g)

    return tape.record("identity_mix", (h, w), value, backward)


def gpr(a: "_graph.SparseMatrix", mu: Tensor, x: Tensor) -> Tensor:
    """``sum_k mu_k A^k X`` with ``mu`` a (1, K) tensor."""
    tape = _tape_of(mu, x)
    if mu.shape[0] != 1 or mu.shape[1] < 1:
        raise DimensionError(f"gpr: coefficients must have shape (1, K), got {mu.shape}")
    if a.n_cols != x.shape[0]:
        raise DimensionError(f"gpr: {a.shape} @ {x.shape}")
    m = mu.value[0]
    powers = _graph.propagate_powers(a, x.value, len(m))
    out = m[0] * powers[0]
    for k in range(1, len(m)):
        out = out + m[k] * powers[k]

    def backward(g):
        dmu = np.array([[np.sum(g * p) for p in powers]])
        acc = m[-1] * g
        for k in range(len(m) - 2, -1, -1):
            acc = m[k] * g + _graph.spmm_t(a, acc)
        return dmu, acc

    return tape.record("gpr", (mu, x), out, backward)


def coeff_activation(v: Tensor) -> Tensor:
    """Row vector ``v`` (1, K) -> ``sparsemax(exp(v))``."""
    if v.shape[0] != 1:
        raise DimensionError(f"coeff_activation expects shape (1, K), got {v.shape}")
    vv = v.value[0].copy()
    mu, res = _sm.coeff_activation(vv)
    return v.tape.record(
        "coeff_activation",
        (v,),
        mu[None, :],
        lambda g: (_sm.coeff_activation_backward(vv, res, g[0])[None, :],),
        info={"sparsemax": res},
    )


def sum_all(a: Tensor) -> Tensor:
    return a.tape.record("sum", (a,), np.array([[a.value.sum()]]), lambda g: (np.full(a.shape, g[0, 0]),))


def nll_loss_masked(log_probs: Tensor, labels, mask) -> Tensor:
    """Mean negative log-likelihood over the rows listed in ``mask``."""
    mask = np.asarray(mask, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValidationError("loss mask is empty")
    n, c = log_probs.shape
    if labels.shape[0] != n:
        raise DimensionError(f"{labels.shape[0]} labels for {n} rows")
    y = labels[mask]
    if np.any(y < 0) or np.any(y >= c):
        raise ValidationError(f"masked labels must lie in [0, {c})")
    picked = log_probs.value[mask, y]
    value = np.array([[-picked.mean()]])

    def backward(g):
        grad = np.zeros((n, c))
        np.add.at(grad, (mask, y), -g[0, 0] / mask.size)
        return (grad,)

    return log_probs.tape.record("nll", (log_probs,), value, backward)

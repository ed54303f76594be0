"""GCN, GCNII, GPR-GNN and AdaGPR as tape programs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, ParameterError
from .graph import SparseMatrix
from .sparsemax import coeff_activation

VARIANTS = ("gcn", "gcnii", "gprgnn", "adagpr", "adagpr-fixed-uniform")
ALIASES = {"adagpr-uniform": "adagpr-fixed-uniform"}

GROUP_INITIAL = "initial"
GROUP_HIDDEN = "hidden"
GROUP_COEFF = "coeff"


def canonical_variant(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ParameterError(f"unknown model variant {name!r}; choose from {VARIANTS}")
    return name


def beta_schedule(lam: float, layer: int) -> float:
    """Identity-mapping strength for 1-based ``layer``: ln(lam / layer + 1)."""
    return math.log(lam / layer + 1.0)


@dataclass
class ModelSpec:
    variant: str
    layers: int
    hidden: int
    num_classes: int
    num_features: int
    k: int = 2
    alpha: float = 0.1
    lam: float = 0.5
    dropout: float = 0.5
    # "learned", "uniform", or an explicit (layers, k) table of frozen coefficients
    coeff_mode: Union[str, np.ndarray] = "learned"

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        if self.variant == "adagpr-fixed-uniform":
            self.coeff_mode = "uniform"
        if self.layers < 1:
            raise ParameterError("layers must be >= 1")
        if self.hidden < 1 or self.num_classes < 1 or self.num_features < 1:
            raise ParameterError("hidden, num_classes and num_features must be positive")
        if self.variant in ("adagpr", "adagpr-fixed-uniform", "gprgnn") and self.k < 1:
            raise ParameterError("GPR order k must be >= 1")
        if self.variant in ("gcnii", "adagpr", "adagpr-fixed-uniform"):
            if not 0.0 < self.alpha < 1.0:
                raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
            if self.lam <= 0:
                raise ParameterError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not isinstance(self.coeff_mode, str):
            table = np.asarray(self.coeff_mode, dtype=np.float64)
            rows = 1 if self.variant == "gprgnn" else self.layers
            table = table.reshape(rows, -1) if table.ndim == 1 else table
            if table.shape != (rows, self.k):
                raise DimensionError(f"frozen coefficient table must be {(rows, self.k)}, got {table.shape}")
            if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
                raise ParameterError("frozen coefficients must lie on the simplex")
            self.coeff_mode = table
        elif self.coeff_mode not in ("learned", "uniform"):
            raise ParameterError(f"unknown coeff_mode {self.coeff_mode!r}")

    @property
    def frozen(self) -> bool:
        return not (isinstance(self.coeff_mode, str) and self.coeff_mode == "learned")

    def frozen_table(self) -> Optional[np.ndarray]:
        if isinstance(self.coeff_mode, np.ndarray):
            return self.coeff_mode
        if self.coeff_mode == "uniform":
            rows = 1 if self.variant == "gprgnn" else self.layers
            return np.full((rows, self.k), 1.0 / self.k)
        return None


@dataclass
class ParameterSet:
    values: dict[str, np.ndarray]
    groups: dict[str, str] = field(default_factory=dict)

    def copy(self) -> "ParameterSet":
        return ParameterSet({n: v.copy() for n, v in self.values.items()}, dict(self.groups))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def names(self, group: Optional[str] = None) -> list[str]:
        return [n for n in self.values if group is None or self.groups[n] == group]


def parameter_shapes(spec: ModelSpec) -> dict[str, tuple[tuple[int, int], str]]:
    q, h, c, L = spec.num_features, spec.hidden, spec.num_classes, spec.layers
    shapes: dict[str, tuple[tuple[int, int], str]] = {}
    if spec.variant == "gcn":
        dims = [q] + [h] * (L - 1) + [c]
        for i in range(L):
            shapes[f"W{i}"] = ((dims[i], dims[i + 1]), GROUP_INITIAL if i == 0 else GROUP_HIDDEN)
    elif spec.variant == "gprgnn":
        shapes["W0"] = ((q, h), GROUP_INITIAL)
        shapes["W1"] = ((h, c), GROUP_HIDDEN)
        shapes["v"] = ((1, spec.k), GROUP_COEFF)
    else:
        shapes["W0"] = ((q, h), GROUP_INITIAL)
        for i in range(1, L + 1):
            shapes[f"W{i}"] = ((h, c if i == L else h), GROUP_HIDDEN)
        if spec.variant != "gcnii":
            for i in range(1, L + 1):
                shapes[f"v{i}"] = ((1, spec.k), GROUP_COEFF)
    return shapes


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParameterSet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero coefficient logits."""
    values, groups = {}, {}
    for name, (shape, group) in parameter_shapes(spec).items():
        if group == GROUP_COEFF:
            values[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            values[name] = rng.uniform(-bound, bound, size=shape)
        groups[name] = group
    return ParameterSet(values, groups)


def check_params(spec: ModelSpec, params: ParameterSet):
    expected = parameter_shapes(spec)
    if set(expected) != set(params.values):
        raise DimensionError(f"parameter names {sorted(params.values)} != {sorted(expected)}")
    for name, (shape, _) in expected.items():
        if params.values[name].shape != shape:
            raise DimensionError(f"{name}: expected {shape}, got {params.values[name].shape}")


def coefficient_table(spec: ModelSpec, params: ParameterSet) -> np.ndarray:
    """Per-layer GPR coefficients as a (rows, K) array.

    GCN and GCNII report ``e_1`` with K = 2 for each layer.
    """
    if spec.variant in ("gcn", "gcnii"):
        return np.tile([0.0, 1.0], (spec.layers, 1))
    frozen = spec.frozen_table()
    if frozen is not None:
        return frozen.copy()
    if spec.variant == "gprgnn":
        return coeff_activation(params["v"][0])[0][None, :]
    return np.stack([coeff_activation(params[f"v{i}"][0])[0] for i in range(1, spec.layers + 1)])


def _leaves(tape: ad.Tape, params: ParameterSet) -> dict[str, ad.Tensor]:
    return {n: tape.param(n, v) for n, v in params.values.items()}


def _coeffs(spec: ModelSpec, tape: ad.Tape, P: dict, layer: Optional[int]) -> ad.Tensor:
    frozen = spec.frozen_table()
    row = 0 if layer is None else layer - 1
    if frozen is not None:
        return tape.constant(frozen[row][None, :])
    return ad.coeff_activation(P["v" if layer is None else f"v{layer}"])


def _check_inputs(spec: ModelSpec, params: ParameterSet, a: SparseMatrix, x: np.ndarray):
    check_params(spec, params)
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != spec.num_features:
        raise DimensionError(f"features must be (N, {spec.num_features}), got {x.shape}")
    if a.shape != (x.shape[0], x.shape[0]):
        raise DimensionError(f"adjacency {a.shape} does not match {x.shape[0]} nodes")


def _deep_residual(spec, params, a, x, train, rng, tape, conv):
    tape = tape or ad.Tape()
    P = _leaves(tape, params)
    X = tape.constant(x)
    p = spec.dropout
    h0 = ad.relu(ad.matmul(ad.dropout(X, p, train, rng), P["W0"]))
    h = h0
    for i in range(1, spec.layers + 1):
        hd = ad.dropout(h, p, train, rng)
        mixed = ad.affine_combine(1.0 - spec.alpha, conv(tape, P, i, hd), spec.alpha, h0)
        z = ad.identity_mix(mixed, P[f"W{i}"], beta_schedule(spec.lam, i))
        h = ad.relu(z) if i < spec.layers else z
    return ad.log_softmax_rows(h)


def build_adagpr(spec: ModelSpec, params: ParameterSet, a: SparseMatrix, x: np.ndarray,
                 train: bool = False, rng: Optional[np.random.Generator] = None,
                 tape: Optional[ad.Tape] = None) -> ad.Tensor:
    """AdaGPR forward pass; returns N x c log-probabilities on ``tape``.

    Layer i computes
    ``relu(((1-alpha) GPR(mu_i) drop(H) + alpha H0)((1-beta_i) I + beta_i W_i))``
    with ``mu_i = sparsemax(exp(v_i))`` (or a frozen table).  The last
    layer maps to class scores and skips the relu.
    """
    if spec.variant not in ("adagpr", "adagpr-fixed-uniform"):
        raise ParameterError(f"build_adagpr cannot build variant {spec.variant!r}")
    _check_inputs(spec, params, a, x)

    def conv(tape, P, i, h):
        return ad.gpr(a, _coeffs(spec, tape, P, i), h)

    return _deep_residual(spec, params, a, x, train, rng, tape, conv)


def build_gcnii(spec: ModelSpec, params: ParameterSet, a: SparseMatrix, x: np.ndarray,
                train: bool = False, rng: Optional[np.random.Generator] = None,
                tape: Optional[ad.Tape] = None) -> ad.Tensor:
    if spec.variant != "gcnii":
        raise ParameterError(f"build_gcnii cannot build variant {spec.variant!r}")
    _check_inputs(spec, params, a, x)
    return _deep_residual(spec, params, a, x, train, rng, tape,
                          lambda tape, P, i, h: ad.spmm_const(a, h))


def build_gcn(spec: ModelSpec, params: ParameterSet, a: SparseMatrix, x: np.ndarray,
              train: bool = False, rng: Optional[np.random.Generator] = None,
              tape: Optional[ad.Tape] = None) -> ad.Tensor:
    """L-layer vanilla GCN: ``H <- relu(A drop(H) W)``, no relu on the last layer."""
    if spec.variant != "gcn":
        raise ParameterError(f"build_gcn cannot build variant {spec.variant!r}")
    _check_inputs(spec, params, a, x)
    tape = tape or ad.Tape()
    P = _leaves(tape, params)
    h = tape.constant(x)
    for i in range(spec.layers):
        h = ad.dropout(h, spec.dropout, train, rng)
        h = ad.spmm_const(a, ad.matmul(h, P[f"W{i}"]))
        if i < spec.layers - 1:
            h = ad.relu(h)
    return ad.log_softmax_rows(h)


def build_gprgnn(spec: ModelSpec, params: ParameterSet, a: SparseMatrix, x: np.ndarray,
                 train: bool = False, rng: Optional[np.random.Generator] = None,
                 tape: Optional[ad.Tape] = None) -> ad.Tensor:
    """Two-layer MLP followed by one global GPR propagation of its logits."""
    if spec.variant != "gprgnn":
        raise ParameterError(f"build_gprgnn cannot build variant {spec.variant!r}")
    _check_inputs(spec, params, a, x)
    tape = tape or ad.Tape()
    P = _leaves(tape, params)
    X = tape.constant(x)
    h = ad.relu(ad.matmul(ad.dropout(X, spec.dropout, train, rng), P["W0"]))
    logits = ad.matmul(ad.dropout(h, spec.dropout, train, rng), P["W1"])
    return ad.log_softmax_rows(ad.gpr(a, _coeffs(spec, tape, P, None), logits))


BUILDERS = {
    "gcn": build_gcn,
    "gcnii": build_gcnii,
    "gprgnn": build_gprgnn,
    "adagpr": build_adagpr,
    "adagpr-fixed-uniform": build_adagpr,
}


def forward(spec: ModelSpec, params: ParameterSet, a: SparseMatrix, x: np.ndarray,
            train: bool = False, rng: Optional[np.random.Generator] = None,
            tape: Optional[ad.Tape] = None) -> ad.Tensor:
    """Dispatch on ``spec.variant``."""
    return BUILDERS[spec.variant](spec, params, a, x, train=train, rng=rng, tape=tape)

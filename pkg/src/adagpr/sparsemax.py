"""Sparsemax: Euclidean projection onto the probability simplex."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, NumericError

EXP_CLAMP = 700.0


@dataclass(frozen=True)
class SparsemaxResult:
    output: np.ndarray
    support: np.ndarray  # sorted indices i with output[i] = z[i] - tau
    tau: float


def sparsemax(z) -> SparsemaxResult:
    """Project ``z`` onto the simplex.

    The support size is the largest k with ``1 + k z_(k) > sum_{j<=k} z_(j)``
    over the descending (stable) sort; then ``tau = (sum of top k - 1) / k``.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size == 0:
        raise DimensionError("sparsemax needs at least one entry")
    if not np.all(np.isfinite(z)):
        raise NumericError("sparsemax input contains non-finite values")
    # shift invariance: work relative to the max so large inputs keep the "- 1"
    top = float(z.max())
    zr = z - top
    order = np.argsort(-zr, kind="stable")
    zs = zr[order]
    cssv = np.cumsum(zs)
    ks = np.arange(1, z.size + 1)
    ok = 1.0 + ks * zs > cssv
    ok[0] = True  # k = 1 always qualifies
    k = int(ks[ok][-1])
    tau = (cssv[k - 1] - 1.0) / k
    support = np.sort(order[:k])
    out = np.zeros_like(z)
    out[support] = np.maximum(zr[support] - tau, 0.0)
    return SparsemaxResult(out, support, float(tau + top))


def sparsemax_backward(result: SparsemaxResult, upstream) -> np.ndarray:
    """Jacobian-transpose product; zero off the support."""
    g = np.asarray(upstream, dtype=np.float64).ravel()
    s = result.support
    if len(s) == 0:
        raise ContractError("sparsemax result has an empty support")
    if g.shape != result.output.shape:
        raise DimensionError(f"upstream shape {g.shape} != output shape {result.output.shape}")
    out = np.zeros_like(g)
    out[s] = g[s] - g[s].mean()
    return out


def _safe_exp(v: np.ndarray) -> np.ndarray:
    if np.any(v > EXP_CLAMP):
        warnings.warn(
            f"coefficient logits above {EXP_CLAMP} were clamped before exp",
            RuntimeWarning,
            stacklevel=3,
        )
        v = np.minimum(v, EXP_CLAMP)
    return np.exp(v)


def coeff_activation(v) -> tuple[np.ndarray, SparsemaxResult]:
    """mu = sparsemax(exp(v)).  Returns mu and the projection record."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise NumericError("coefficient logits contain non-finite values")
    res = sparsemax(_safe_exp(v))
    return res.output, res


def coeff_activation_backward(v, result: SparsemaxResult, upstream) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).ravel()
    grad = sparsemax_backward(result, upstream) * np.exp(np.minimum(v, EXP_CLAMP))
    # clamped entries have zero derivative
    grad[v > EXP_CLAMP] = 0.0
    return grad

"""Spectral complexity index for AdaGPR and GCNII.

Evaluates the transductive Rademacher complexity polynomial of a depth-L
AdaGPR network with every universal constant set to 1.  The result is a
*complexity index* for comparing depths, spectra and coefficient tables;
it is not a certified bound value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .graph import Spectrum


def power_sums(spectrum: Spectrum, k_max: int) -> np.ndarray:
    """``[sum_i |lambda_i|^k for k in 0..k_max]``.

    Row 0 counts all N nodes; eigenvalues missing from a truncated
    spectrum count as 0 for k >= 1.
    """
    lam = np.abs(np.asarray(spectrum.eigenvalues, dtype=np.float64))
    if spectrum.num_nodes == 0:
        raise ValidationError("spectrum is empty")
    out = np.empty(k_max + 1)
    out[0] = float(spectrum.num_nodes)
    for k in range(1, k_max + 1):
        out[k] = float(np.sum(lam ** k))
    return out


def spectral_sum(spectrum: Spectrum, mu: Sequence[float]) -> float:
    """``sum_i sum_k mu_k |lambda_i|^k``."""
    mu = np.asarray(mu, dtype=np.float64).ravel()
    if mu.size == 0:
        raise ValidationError("coefficient vector is empty")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise ValidationError("coefficients must lie on the simplex")
    sums = power_sums(spectrum, mu.size - 1)
    total = 0.0
    for m, s in zip(mu, sums):
        total += m * s
    return total


def oversmoothing_profile(spectrum: Spectrum, k_max: int) -> np.ndarray:
    """Power sums for k = 0..k_max; needs the full spectrum."""
    if spectrum.truncated:
        raise ValidationError("oversmoothing profile needs a full (dense) spectrum")
    return power_sums(spectrum, k_max)


@dataclass
class BoundInput:
    spectrum: Spectrum
    mus: list  # per-layer coefficient vectors, layer 1 first
    alpha: float
    b_norms: Sequence[float]  # B_0 .. B_L
    num_train: int  # M
    num_test: int  # U
    x_fro: float
    R: float = 1.0
    delta: float = 0.05
    c0: float = 1.0
    train_risk: Optional[float] = None
    test_risk: Optional[float] = None

    @property
    def layers(self) -> int:
        return len(self.b_norms) - 1

    def validate(self):
        L = self.layers
        if L < 1:
            raise ValidationError("need at least B_0 and B_1")
        if len(self.mus) < L:
            raise ValidationError(f"{len(self.mus)} coefficient rows for {L} layers")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if any(b <= 0 for b in self.b_norms):
            raise ValidationError("norm bounds B must be positive")
        if self.num_train < 1 or self.num_test < 1:
            raise ValidationError("M and U must be >= 1")
        if self.x_fro < 0 or self.R <= 0:
            raise ValidationError("need ||X||_F >= 0 and R > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must lie in (0, 1)")


@dataclass
class BoundReport:
    spectral_sums: list[float]
    first_terms: list[float]
    second_terms: list[float]
    first_sum: float
    second_sum: float
    Q: float
    p0_factor: float
    D: float
    complexity_index: float
    gcnii_index: float
    tail_c0: float
    tail_confidence: float
    S: float
    risk_index: Optional[float] = None
    truncated_spectrum: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _products(b: Sequence[float], s: Sequence[float], L: int, upto: int) -> float:
    out = 1.0
    for j in range(upto + 1):
        out *= b[L - j] * s[L - j]
    return out


def _index(inp: BoundInput, sums: list[float]):
    """First/second summation terms for per-layer spectral sums ``sums`` (layer 1 first)."""
    L = inp.layers
    a = inp.alpha
    M, U = inp.num_train, inp.num_test
    # the input layer H0 has no propagation step, so it carries no spectral factor
    s = [1.0] + list(sums[:L])
    b = list(inp.b_norms)
    p0 = math.sqrt(2.0 * M * U / (M + U) ** 2)
    D = math.sqrt(inp.spectrum.num_nodes) * inp.R
    first = [a * (1 - a) ** l * 2 ** l * _products(b, s, L, l - 1) * inp.x_fro * b[0] * p0
             for l in range(1, L + 1)]
    second = [(1 - a) ** (l + 1) * 2 ** l * _products(b, s, L, l) * D for l in range(1, L + 1)]
    Q = 1.0 / M + 1.0 / U
    return first, second, Q, p0, D, Q * (sum(first) + sum(second))


def _tails(inp: BoundInput):
    M, U = inp.num_train, inp.num_test
    Q = 1.0 / M + 1.0 / U
    m = min(M, U)
    S = 2.0 * (M + U) * m / ((2.0 * (M + U) - 1.0) * (2.0 * m - 1.0))
    return inp.c0 * Q * math.sqrt(m), math.sqrt(S * Q / 2.0 * math.log(1.0 / inp.delta)), S


def _evaluate(inp: BoundInput, mus) -> BoundReport:
    inp.validate()
    L = inp.layers
    sums = [spectral_sum(inp.spectrum, mus[l]) for l in range(L)]
    first, second, Q, p0, D, index = _index(inp, sums)
    e1 = [(0.0, 1.0)] * L
    gcnii = _index(inp, [spectral_sum(inp.spectrum, m) for m in e1])[-1]
    tail_c0, tail_conf, S = _tails(inp)
    risk = None
    if inp.test_risk is not None:
        risk = inp.test_risk + index + tail_c0 + tail_conf
    notes = ["universal constants C' and c0 set to 1; value is a complexity index"]
    if inp.spectrum.truncated:
        notes.append(f"{inp.spectrum.truncation_count} eigenvalues missing, treated as 0 for k >= 1")
    return BoundReport(sums, first, second, sum(first), sum(second), Q, p0, D, index, gcnii,
                       tail_c0, tail_conf, S, risk, inp.spectrum.truncated, notes)


def evaluate_theorem1(inp: BoundInput) -> BoundReport:
    """AdaGPR complexity index with per-layer coefficients ``inp.mus``."""
    return _evaluate(inp, [np.asarray(m, dtype=np.float64) for m in inp.mus])


def evaluate_corollary1(inp: BoundInput) -> BoundReport:
    """GCNII complexity index: every layer propagates with A exactly once."""
    return _evaluate(inp, [np.array([0.0, 1.0])] * inp.layers)


def column_l1_bound(w: np.ndarray) -> float:
    """Max column L1 norm, the per-layer constraint of the hypothesis class."""
    return float(np.abs(np.asarray(w)).sum(axis=0).max())

"""Graph containers, symmetric normalization, CSR products and spectra.

The normalized adjacency used everywhere is

    A_norm = D^-1/2 (A + I) D^-1/2

where A is the symmetrized, deduplicated, loop-free adjacency and D the
degree matrix of A + I.  Every node therefore carries exactly one
self-loop and isolated nodes have degree 1.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DimensionError,
    EmptyGraphError,
    InvalidOrderError,
    StructuralError,
    SymmetryError,
)

DENSE_SPECTRUM_LIMIT = 4096
SPECTRUM_EPS = 1e-9


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted graph on nodes ``0..num_nodes-1``.

    ``edges`` is an (E, 2) integer array.  Use :meth:`canonical` to get the
    symmetric, deduplicated, loop-free version.
    """

    num_nodes: int
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", e)
        if self.num_nodes < 0:
            raise StructuralError("num_nodes must be non-negative")
        if e.size and (e.min() < 0 or e.max() >= self.num_nodes):
            bad = e[(e < 0).any(axis=1) | (e >= self.num_nodes).any(axis=1)][0]
            raise StructuralError(
                f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {self.num_nodes})"
            )

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Sequence[tuple[int, int]]) -> "Graph":
        return cls(num_nodes, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2))

    def canonical(self) -> "Graph":
        """Symmetrize, drop self-loops and duplicates; rows sorted (src, dst)."""
        e = self.edges
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]], axis=0)
        if len(both):
            both = np.unique(both, axis=0)
        return Graph(self.num_nodes, both)

    def undirected_pairs(self) -> np.ndarray:
        """Each undirected edge once, as (u, v) with u < v, sorted."""
        e = self.canonical().edges
        return e[e[:, 0] < e[:, 1]]

    def is_canonical(self) -> bool:
        return self.edges.shape == self.canonical().edges.shape and bool(
            np.array_equal(self.edges, self.canonical().edges)
        )

    def permute(self, perm: np.ndarray) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph(self.num_nodes, perm[self.edges])


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed sparse row matrix with float64 values."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        rp = np.asarray(self.row_ptr, dtype=np.int64)
        ci = np.asarray(self.col_idx, dtype=np.int64)
        v = np.asarray(self.vals, dtype=np.float64)
        if rp.shape != (self.n_rows + 1,) or rp[0] != 0:
            raise StructuralError("row_ptr must have length n_rows + 1 and start at 0")
        if np.any(np.diff(rp) < 0):
            raise StructuralError("row_ptr must be non-decreasing")
        if rp[-1] != len(ci) or len(ci) != len(v):
            raise StructuralError("row_ptr[-1], len(col_idx) and len(vals) disagree")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise StructuralError("column index out of range")
        for arr in (rp, ci, v):
            arr.setflags(write=False)
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "vals", v)
        # strictly increasing columns inside each row
        if len(ci) > 1:
            step = np.diff(ci)
            row_start = np.zeros(len(ci), dtype=bool)
            row_start[rp[1:-1][rp[1:-1] < len(ci)]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise StructuralError("column indices must be strictly increasing within a row")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sp.csr_matrix(m, dtype=np.float64)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, self.col_idx, self.row_ptr), shape=self.shape)

    @cached_property
    def _csr_t(self) -> sp.csr_matrix:
        return self._csr.T.tocsr()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self._csr_t)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        if self.n_rows != self.n_cols:
            return False
        diff = self._csr - self._csr_t
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol

    def row_sums(self) -> np.ndarray:
        return np.asarray(self._csr.sum(axis=1)).ravel()


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a symmetric matrix, sorted descending.

    ``truncation_count`` is the number of eigenvalues *not* computed
    (0 for the dense path).
    """

    eigenvalues: np.ndarray
    method: str
    truncation_count: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.eigenvalues) + self.truncation_count

    @property
    def truncated(self) -> bool:
        return self.truncation_count > 0


def normalize_adjacency(graph: Graph) -> SparseMatrix:
    """Return D^-1/2 (A + I) D^-1/2 for the canonicalized ``graph``."""
    n = graph.num_nodes
    if n == 0:
        raise EmptyGraphError("graph has no nodes")
    e = graph.canonical().edges
    a = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    a_hat = (a + sp.identity(n, format="csr")).tocsr()
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(d_inv_sqrt)
    return SparseMatrix.from_scipy(d @ a_hat @ d)


def normalize_adjacency_dense(graph: Graph) -> np.ndarray:
    """Dense reference normalization (small graphs and tests)."""
    n = graph.num_nodes
    if n == 0:
        raise EmptyGraphError("graph has no nodes")
    a = np.zeros((n, n))
    for u, v in graph.canonical().edges:
        a[u, v] = 1.0
    a += np.eye(n)
    deg = a.sum(axis=1)
    return a / np.sqrt(np.outer(deg, deg))


def _check_dense(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D dense matrix, got shape {x.shape}")
    return x


def spmm(a: SparseMatrix, x: np.ndarray, workers: int = 1) -> np.ndarray:
    """CSR times dense.

    With ``workers > 1`` row blocks are computed on a thread pool.  The
    result is not guaranteed bitwise identical to the sequential path.
    """
    x = _check_dense(x)
    if a.n_cols != x.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {x.shape}")
    if workers <= 1 or a.n_rows < 2 * workers:
        return np.asarray(a._csr @ x)
    bounds = np.linspace(0, a.n_rows, workers + 1).astype(int)
    out = np.empty((a.n_rows, x.shape[1]))

    def block(i):
        lo, hi = bounds[i], bounds[i + 1]
        out[lo:hi] = a._csr[lo:hi] @ x

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(block, range(workers)))
    return out


def spmm_t(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """``a.T @ x`` without materializing a new SparseMatrix."""
    x = _check_dense(x)
    if a.n_rows != x.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape[::-1]} by {x.shape}")
    return np.asarray(a._csr_t @ x)


def propagate_powers(a: SparseMatrix, x: np.ndarray, order: int) -> list[np.ndarray]:
    """[X, AX, A(AX), ...] with ``order`` entries."""
    out = [_check_dense(x)]
    for _ in range(order - 1):
        out.append(spmm(a, out[-1]))
    return out


def apply_gpr(a: SparseMatrix, mu: Sequence[float], x: np.ndarray) -> np.ndarray:
    """Generalized Pagerank ``sum_k mu_k A^k X`` by repeated SpMM."""
    mu = np.asarray(mu, dtype=np.float64).ravel()
    if len(mu) == 0:
        raise InvalidOrderError("GPR order K must be at least 1")
    x = _check_dense(x)
    if a.n_cols != x.shape[0]:
        raise DimensionError(f"cannot propagate {x.shape} over a {a.shape} matrix")
    out = mu[0] * x
    p = x
    for k in range(1, len(mu)):
        p = spmm(a, p)
        out = out + mu[k] * p
    return out


def gpr_dense(a_dense: np.ndarray, mu: Sequence[float]) -> np.ndarray:
    """Materialized ``sum_k mu_k A^k`` (oracle for small graphs)."""
    n = a_dense.shape[0]
    out = np.zeros((n, n))
    power = np.eye(n)
    for k, m in enumerate(np.asarray(mu, dtype=np.float64).ravel()):
        if k:
            power = power @ a_dense
        out += m * power
    return out


def compute_spectrum(a: SparseMatrix, mode: str = "auto", num_extremal: int = 256) -> Spectrum:
    """Eigenvalues of a symmetric matrix, descending.

    ``mode`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    4096 nodes).  The Lanczos path returns up to ``num_extremal``
    eigenvalues taken from both ends of the spectrum and records how many
    were skipped in ``truncation_count``.
    """
    if a.n_rows != a.n_cols:
        raise SymmetryError(f"matrix of shape {a.shape} is not square")
    if not a.is_symmetric(1e-12):
        raise SymmetryError("matrix is not symmetric within 1e-12")
    n = a.n_rows
    if mode not in ("auto", "dense", "lanczos"):
        raise ValueError(f"unknown spectrum mode {mode!r}")
    if mode == "dense" or (mode == "auto" and n <= DENSE_SPECTRUM_LIMIT):
        vals = np.linalg.eigvalsh(a.to_dense())[::-1].copy()
        return Spectrum(vals, "dense", 0)
    k = min(num_extremal, n - 1)
    if k >= n - 1 or n < 3:
        vals = np.linalg.eigvalsh(a.to_dense())[::-1].copy()
        return Spectrum(vals, "dense", 0)
    vals = spla.eigsh(a._csr, k=k, which="BE", return_eigenvectors=False)
    vals = np.sort(vals)[::-1].copy()
    return Spectrum(vals, "lanczos-truncated", n - len(vals))

"""Sparse graph storage, self-loop normalization and propagation operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

Edge = Union[Tuple[int, int], Tuple[int, int, float]]

PPR_DEFAULT_ITERS = 10
PPR_DEFAULT_TOL = 1e-6
DENSE_ORACLE_MAX_NODES = 2000


class DimensionError(ValueError):
    """Raised when a feature matrix does not match the graph size."""


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Symmetric weighted adjacency in CSR layout, without self-loops.

    Use :func:`from_edge_list` or :func:`from_scipy` rather than building
    one by hand; the constructor only checks array shapes.
    """

    n_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.row_ptr.shape != (self.n_nodes + 1,):
            raise ValueError("row_ptr must have length n_nodes + 1")
        if self.col_idx.shape != self.values.shape:
            raise ValueError("col_idx and values must have the same length")
        csr = sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr),
            shape=(self.n_nodes, self.n_nodes),
        )
        object.__setattr__(self, "_csr", csr)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def edges(self) -> np.ndarray:
        """Upper-triangular edges as an ``(m, 3)`` array of (src, dst, weight)."""
        rows = np.repeat(np.arange(self.n_nodes), np.diff(self.row_ptr))
        upper = rows < self.col_idx
        return np.column_stack(
            [rows[upper], self.col_idx[upper], self.values[upper]]
        )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """(D+I)^{-1/2} (A+I) (D+I)^{-1/2} stored in CSR with explicit diagonal."""

    n_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        csr = sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr),
            shape=(self.n_nodes, self.n_nodes),
        )
        object.__setattr__(self, "_csr", csr)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()


def _csr_from_coo(rows, cols, vals, n_nodes):
    # scipy sums duplicates on COO->CSR conversion and keeps indices sorted
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def from_edge_list(edges: Iterable[Edge], n_nodes: int) -> SparseGraph:
    """Build a symmetric graph from an undirected edge list.

    Each edge may be listed once or in both directions; repeated entries are
    summed after symmetrization, and self-loops are dropped.
    """
    if n_nodes <= 0:
        raise ValueError("n_nodes must be positive")
    src, dst, wts = [], [], []
    for edge in edges:
        if len(edge) == 2:
            i, j = edge
            w = 1.0
        elif len(edge) == 3:
            i, j, w = edge
            w = 1.0 if w is None else float(w)
        else:
            raise ValueError(f"malformed edge {edge!r}")
        i, j = int(i), int(j)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise IndexError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
        if not w > 0 or not np.isfinite(w):
            raise ValueError(f"edge ({i}, {j}) has nonpositive weight {w}")
        if i == j:
            continue
        src.append(i)
        dst.append(j)
        wts.append(w)
    return from_arrays(
        np.asarray(src, dtype=np.int64),
        np.asarray(dst, dtype=np.int64),
        np.asarray(wts, dtype=np.float64),
        n_nodes,
    )


def from_arrays(src, dst, weights, n_nodes: int) -> SparseGraph:
    """Vectorized :func:`from_edge_list` for already-validated index arrays."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    keep = src != dst
    src, dst, weights = src[keep], dst[keep], weights[keep]
    # sum duplicates on the upper triangle, then mirror: symmetry is exact
    upper = _csr_from_coo(np.minimum(src, dst), np.maximum(src, dst), weights, n_nodes)
    mat = (upper + upper.T).tocsr()
    mat.sort_indices()
    return SparseGraph(
        n_nodes=n_nodes,
        row_ptr=mat.indptr.astype(np.int64),
        col_idx=mat.indices.astype(np.int64),
        values=mat.data.astype(np.float64),
    )


def from_scipy(adjacency) -> SparseGraph:
    """Symmetrize a scipy sparse (or dense) adjacency the same way as edge lists.

    Mirrored entries are summed, so pass either the upper triangle or a
    matrix whose symmetric part you want doubled.
    """
    coo = sp.coo_matrix(adjacency)
    if coo.shape[0] != coo.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(coo.data < 0):
        raise ValueError("adjacency weights must be nonnegative")
    nz = coo.data > 0
    return from_arrays(coo.row[nz], coo.col[nz], coo.data[nz], coo.shape[0])


def degrees(g: SparseGraph) -> np.ndarray:
    rows = np.repeat(np.arange(g.n_nodes), np.diff(g.row_ptr))
    return np.bincount(rows, weights=g.values, minlength=g.n_nodes).astype(np.float64)


def normalize_with_self_loops(g: SparseGraph) -> NormalizedAdjacency:
    n = g.n_nodes
    deg1 = degrees(g) + 1.0
    a_hat = g.to_scipy() + sp.identity(n, format="csr")
    a_hat.sort_indices()
    rows = np.repeat(np.arange(n), np.diff(a_hat.indptr))
    # the product under the root is commutative, so mirrored entries agree bitwise
    vals = a_hat.data / np.sqrt(deg1[rows] * deg1[a_hat.indices])
    return NormalizedAdjacency(
        n_nodes=n,
        row_ptr=a_hat.indptr.astype(np.int64),
        col_idx=a_hat.indices.astype(np.int64),
        values=vals,
    )


def as_dense(x, name: str = "x") -> np.ndarray:
    """Validate a feature matrix: 2-D, float64, finite."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_rows(adj: NormalizedAdjacency, x: np.ndarray):
    if x.shape[0] != adj.n_nodes:
        raise DimensionError(
            f"feature matrix has {x.shape[0]} rows, graph has {adj.n_nodes} nodes"
        )


def spmm(adj: NormalizedAdjacency, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("x must be 2-D")
    _check_rows(adj, x)
    return np.asarray(adj._csr @ x)


def propagate_power(adj: NormalizedAdjacency, x, k: int) -> np.ndarray:
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = as_dense(x)
    _check_rows(adj, out)
    if k == 0:
        return out.copy()
    for _ in range(k):
        out = spmm(adj, out)
    return out


class PPRResult(NamedTuple):
    features: np.ndarray
    residual: float
    converged: bool
    iterations: int


def propagate_ppr(
    adj: NormalizedAdjacency,
    x,
    alpha: float = 0.1,
    iters: int = PPR_DEFAULT_ITERS,
    tol: float = PPR_DEFAULT_TOL,
) -> PPRResult:
    """Personalized-PageRank smoothing by fixed-point iteration.

    Runs ``Z <- (1 - alpha) * A_norm @ Z + alpha * X`` from ``Z = X`` until the
    max-norm change drops to ``tol`` or ``iters`` steps have been taken.
    Running out of iterations is not an error; check ``converged``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if iters < 1:
        raise ValueError("iters must be at least 1")
    x = as_dense(x)
    _check_rows(adj, x)
    teleport = alpha * x
    z = x.copy()
    residual = np.inf
    t = 0
    for t in range(1, iters + 1):
        z_next = (1.0 - alpha) * spmm(adj, z) + teleport
        residual = float(np.max(np.abs(z_next - z))) if z.size else 0.0
        z = z_next
        if residual <= tol:
            break
    converged = residual <= tol
    if not converged:
        logger.debug("PPR stopped after %d iterations, residual %.3g", t, residual)
    return PPRResult(z, residual, converged, t)


def ppr_exact_dense(
    adj: NormalizedAdjacency,
    x,
    alpha: float = 0.1,
    max_nodes: int = DENSE_ORACLE_MAX_NODES,
) -> np.ndarray:
    """Solve ``(I - (1 - alpha) A_norm) Z = alpha X`` densely (small graphs only)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if adj.n_nodes > max_nodes:
        raise ValueError(f"dense PPR limited to {max_nodes} nodes, got {adj.n_nodes}")
    x = as_dense(x)
    _check_rows(adj, x)
    system = np.eye(adj.n_nodes) - (1.0 - alpha) * adj.to_dense()
    try:
        return np.linalg.solve(system, alpha * x)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("PPR system is singular") from exc


def permute(g: SparseGraph, perm: Sequence[int]) -> SparseGraph:
    """Relabel nodes so that old node ``perm[i]`` becomes node ``i``."""
    perm = np.asarray(perm, dtype=np.int64)
    mat = g.to_scipy()[perm][:, perm]
    return from_scipy(sp.triu(mat, k=1))


def largest_component(g: SparseGraph) -> np.ndarray:
    """Sorted node indices of the largest connected component."""
    from scipy.sparse.csgraph import connected_components

    _, comp = connected_components(g.to_scipy(), directed=False)
    sizes = np.bincount(comp)
    return np.flatnonzero(comp == np.argmax(sizes))


def subgraph(g: SparseGraph, nodes) -> SparseGraph:
    nodes = np.asarray(nodes, dtype=np.int64)
    mat = g.to_scipy()[nodes][:, nodes]
    return from_scipy(sp.triu(mat, k=1))

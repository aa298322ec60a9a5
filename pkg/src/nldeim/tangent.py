"""Tangent-space estimation: Laplacian eigenmaps, parameter grids, local PCA."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (
    ArgumentError,
    DisconnectedGraphError,
    NoPatchesError,
    SingularInterpolantError,
    SpectrumError,
)
from .simpqr import PatchSet

logger = logging.getLogger(__name__)

__all__ = [
    "KnnGraph",
    "EigenmapsModel",
    "TangentPatch",
    "build_graph",
    "laplacian_eigs",
    "eigenfunction_gradient",
    "interpolated_eigenfunction",
    "tangent_from_eigenmaps",
    "tangent_from_grid",
    "tangent_from_local_pca",
    "to_patchset",
]

DENSE_LIMIT = 3000


@dataclass
class KnnGraph:
    """Symmetrized k-NN graph with Gaussian weights.

    ``weights`` and ``scales`` are CSR matrices sharing one sparsity pattern;
    row ``i`` lists the neighbours of node ``i``.
    """

    weights: sp.csr_matrix
    scales: sp.csr_matrix
    degrees: np.ndarray
    k: int
    alpha: float

    @property
    def node_count(self):
        return self.weights.shape[0]

    def neighbors(self, i):
        return self.weights.indices[self.weights.indptr[i]:self.weights.indptr[i + 1]]

    def edge_data(self, i):
        lo, hi = self.weights.indptr[i], self.weights.indptr[i + 1]
        return self.weights.indices[lo:hi], self.weights.data[lo:hi], self.scales.data[lo:hi]

    def laplacian(self):
        return sp.diags(self.degrees) - self.weights


@dataclass
class EigenmapsModel:
    graph: KnnGraph
    eigenvalues: np.ndarray  # r'
    eigenfunctions: np.ndarray  # m x r'
    zero_tol: float


@dataclass
class TangentPatch:
    base_point: np.ndarray
    basis: np.ndarray  # n x r
    quality: float
    index: int = -1


def build_graph(points, k=10, alpha=1.0):
    """Gaussian-weighted graph on the union of each point's ``k`` nearest
    neighbours.

    The edge scale is ``alpha`` times the RMS of the two endpoints' mean
    squared neighbour distances, which makes it symmetric.
    """
    x = np.asarray(points, dtype=float)
    m = x.shape[0]
    if not (1 <= k < m):
        raise ArgumentError(f"need 1 <= k < m, got k={k}, m={m}")
    if not alpha > 0:
        raise ArgumentError("alpha must be positive")
    tree = cKDTree(x)
    _, idx = tree.query(x, k=min(k + 1, m))
    rows, cols = [], []
    for i in range(m):
        nb = [j for j in idx[i] if j != i][:k]
        rows.extend([i] * len(nb))
        cols.extend(nb)
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(m, m)).tocsr()
    adj = ((adj + adj.T) > 0).astype(float).tocsr()
    adj.sort_indices()
    coo = adj.tocoo()
    ii, jj = coo.row, coo.col
    d2 = np.einsum("ij,ij->i", x[ii] - x[jj], x[ii] - x[jj])
    counts = np.bincount(ii, minlength=m)
    msd = np.bincount(ii, weights=d2, minlength=m) / counts
    sigma = alpha * np.sqrt(0.5 * msd[ii] + 0.5 * msd[jj])
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(sigma > 0, np.exp(-0.5 * d2 / sigma**2), 1.0)
    n_dup = int(np.count_nonzero(d2 == 0.0))
    if n_dup:
        logger.info("build_graph: %d directed edges join coincident points (weight 1)", n_dup // 2 * 2)
    weights = sp.csr_matrix((w, (ii, jj)), shape=(m, m))
    scales = sp.csr_matrix((sigma, (ii, jj)), shape=(m, m))
    weights.sort_indices()
    scales.sort_indices()
    degrees = np.asarray(weights.sum(axis=1)).ravel()
    return KnnGraph(weights, scales, degrees, k, alpha)


def laplacian_eigs(graph: KnnGraph, r_prime, zero_tol=None):
    """The ``r_prime`` smallest strictly positive eigenpairs of ``D - W``.

    ``zero_tol`` defaults to ``1e-10 * lambda_max``. Dense ``eigh`` is used
    up to 3000 nodes, shift-invert Lanczos beyond that.
    """
    if r_prime < 1:
        raise ArgumentError("r_prime must be >= 1")
    m = graph.node_count
    n_comp, _ = connected_components(graph.weights, directed=False)
    if n_comp > 1:
        raise DisconnectedGraphError(n_comp)
    lap = graph.laplacian()
    if m <= DENSE_LIMIT:
        vals, vecs = np.linalg.eigh(lap.toarray())
        lam_max = vals[-1]
    else:
        from scipy.sparse.linalg import eigsh

        lam_max = float(eigsh(lap, k=1, which="LA", return_eigenvectors=False)[0])
        shift = -1e-3 * lam_max / m
        vals, vecs = eigsh(lap.tocsc(), k=min(r_prime + 4, m - 1), sigma=shift, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    if zero_tol is None:
        zero_tol = 1e-10 * lam_max
    keep = np.flatnonzero(vals > zero_tol)
    if keep.size < r_prime:
        raise SpectrumError(f"only {keep.size} positive eigenvalues available, asked for {r_prime}")
    keep = keep[:r_prime]
    return EigenmapsModel(graph, vals[keep], vecs[:, keep], float(zero_tol))


def interpolated_eigenfunction(model: EigenmapsModel, points, i, x):
    """Value of every interpolated eigenfunction around node ``i`` at ``x``."""
    pts = np.asarray(points, dtype=float)
    nb, _, sig = model.graph.edge_data(i)
    d2 = np.sum((pts[nb] - x) ** 2, axis=1)
    w = np.exp(-0.5 * d2 / sig**2)
    return (w @ model.eigenfunctions[nb]) / (w.sum() - model.eigenvalues)


def eigenfunction_gradient(model: EigenmapsModel, points, i, tol=1e-12):
    """``r' x n`` matrix whose rows are the gradients at ``x_i`` of the
    interpolated eigenfunctions.

    Uses ``grad w_ik(x_i) = -(w_ik / sigma_ik^2) (x_i - x_k)``, i.e. the
    Gaussian-kernel derivative; coincident neighbours contribute nothing.
    """
    pts = np.asarray(points, dtype=float)
    nb, w, sig = model.graph.edge_data(i)
    if nb.size == 0:
        raise ArgumentError(f"node {i} has no neighbours")
    d_i = model.graph.degrees[i]
    denom = d_i - model.eigenvalues
    bad = np.abs(denom) <= tol * max(abs(d_i), 1.0)
    if np.any(bad):
        raise SingularInterpolantError(
            f"node {i}: d_i - lambda_j vanishes for eigenfunctions {np.flatnonzero(bad).tolist()}"
        )
    diff = pts[i] - pts[nb]  # deg x n
    grad_w = -(w / sig**2)[:, None] * diff
    phi = model.eigenfunctions
    dphi = phi[nb] - phi[i]  # deg x r'
    return (dphi.T @ grad_w) / denom[:, None]


def tangent_from_eigenmaps(model: EigenmapsModel, points, r, quality_min=0.05, nodes=None):
    """Tangent bases from the SVD of the eigenfunction gradients.

    Nodes whose gradient matrix has ``sigma_r / sigma_1 < quality_min``
    (typically boundary points) are dropped. Returns ``(patches, dropped)``.
    """
    if r > model.eigenvalues.size:
        raise ArgumentError(f"r={r} exceeds the {model.eigenvalues.size} eigenfunctions available")
    pts = np.asarray(points, dtype=float)
    if nodes is None:
        nodes = range(pts.shape[0])
    patches, dropped = [], []
    for i in nodes:
        g = eigenfunction_gradient(model, pts, i).T  # n x r'
        u, s, _ = np.linalg.svd(g, full_matrices=False)
        q = s[r - 1] / s[0] if s[0] > 0 else 0.0
        if q < quality_min:
            dropped.append(int(i))
            continue
        patches.append(TangentPatch(pts[i].copy(), u[:, :r].copy(), float(q), int(i)))
    if dropped:
        logger.info("tangent_from_eigenmaps: dropped %d rank-deficient nodes", len(dropped))
    if not patches:
        raise NoPatchesError("every node was rejected as rank deficient")
    return patches, dropped


def tangent_from_grid(snapshots, rank_tol=1e-10):
    """Tangents from forward differences on a regular parameter grid.

    ``snapshots`` has shape ``(n_t, n_chi, n)``. For every cell ``(i, j)``
    with ``i < n_t - 1`` and ``j < n_chi - 1`` the differences along both
    grid axes are orthonormalized; cells with ``sigma_2 / sigma_1 <=
    rank_tol`` are dropped. Returns ``(patches, dropped)``, with patch
    ``index`` equal to ``i * n_chi + j``.
    """
    u = np.asarray(snapshots, dtype=float)
    if u.ndim != 3 or u.shape[0] < 2 or u.shape[1] < 2:
        raise ArgumentError(f"need a (n_t >= 2, n_chi >= 2, n) grid, got {u.shape}")
    n_t, n_c, _ = u.shape
    vt = u[1:, :-1] - u[:-1, :-1]
    vc = u[:-1, 1:] - u[:-1, :-1]
    mats = np.stack([vt, vc], axis=-1)  # (n_t-1, n_c-1, n, 2)
    flat = mats.reshape(-1, mats.shape[2], 2)
    s = np.linalg.svd(flat, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        qual = np.where(s[:, 0] > 0, s[:, 1] / s[:, 0], 0.0)
    q, _ = np.linalg.qr(flat)
    patches, dropped = [], []
    for c in range(flat.shape[0]):
        i, j = divmod(c, n_c - 1)
        idx = i * n_c + j
        if not qual[c] > rank_tol:
            dropped.append(idx)
            continue
        patches.append(TangentPatch(u[i, j].copy(), q[c], float(qual[c]), idx))
    if dropped:
        logger.warning("tangent_from_grid: dropped %d rank-deficient cells", len(dropped))
    if not patches:
        raise NoPatchesError("every grid cell was rank deficient")
    return patches, dropped


def tangent_from_local_pca(points, center_index, r, k=None, radius=None):
    """Leading ``r`` principal directions of a neighbourhood of one point.

    The neighbourhood is either the ``k`` nearest points (centre included) or
    every point within ``radius``.
    """
    pts = np.asarray(points, dtype=float)
    x0 = pts[center_index]
    if (k is None) == (radius is None):
        raise ArgumentError("give exactly one of k or radius")
    d = np.linalg.norm(pts - x0, axis=1)
    if k is not None:
        nb = np.argsort(d, kind="stable")[:k]
    else:
        nb = np.flatnonzero(d <= radius)
    if nb.size < r + 1:
        raise ArgumentError(f"need at least {r + 1} neighbours, found {nb.size}")
    y = pts[nb] - pts[nb].mean(axis=0)
    _, s, vt = np.linalg.svd(y, full_matrices=False)
    q = s[r - 1] / s[0] if s[0] > 0 else 0.0
    return TangentPatch(x0.copy(), vt[:r].T.copy(), float(q), int(center_index))


def to_patchset(patches):
    """Stack ``TangentPatch`` objects into a :class:`PatchSet`."""
    return PatchSet(tuple(p.basis for p in patches), np.stack([p.base_point for p in patches]))
